//! Coarea pushforward, fiber disintegration, measure connectedness and
//! fiber-constant reconstruction for linear maps on polyhedral cones.
//!
//! For a surjective linear `P` and a density `f` on a cone `C`, the
//! pushforward of `f . H^{k1}` has density
//!
//! ```text
//! g(y) = (1 / ap J) integral_{P^-1(y) cap C} f dH^{k1-k2},
//! ap J = sqrt(det(P P^T)),
//! ```
//!
//! computed here by exact fiber-polytope geometry: the fiber is sliced
//! in kernel coordinates, vertices are enumerated from the active
//! constraint subsets, the polytope is fanned into simplices from its
//! centroid and integrated with fixed-order simplex rules (optionally
//! refined by longest-edge bisection). Fiber dimensions up to 3 are
//! supported, which covers the groups this crate targets.

use nalgebra::{DMatrix, DVector};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub type DensityFn = dyn Fn(&[f64]) -> f64 + Sync;
pub type MembershipFn = dyn Fn(&[f64]) -> bool + Sync;

/// A closed convex cone with vertex 0 (or a general membership-defined
/// cone for the sampling-based operations) carrying a density.
pub struct ConeSpec {
    pub ambient_dim: usize,
    rep: ConeRep,
    density: Box<DensityFn>,
    /// Axis-aligned window: clips fibers for integration and bounds the
    /// samplers.
    pub support_box: Option<(Vec<f64>, Vec<f64>)>,
}

enum ConeRep {
    /// Intersection of halfspaces `{x : n . x >= 0}`.
    Halfspaces(Vec<Vec<f64>>),
    /// Arbitrary membership oracle (no exact fiber geometry).
    Membership(Box<MembershipFn>),
}

impl ConeSpec {
    pub fn from_halfspaces(
        ambient_dim: usize,
        normals: Vec<Vec<f64>>,
        density: Box<DensityFn>,
        support_box: Option<(Vec<f64>, Vec<f64>)>,
    ) -> Result<Self> {
        if normals.iter().any(|n| n.len() != ambient_dim) {
            return Err(Error::dim("halfspace normal length mismatch"));
        }
        Ok(ConeSpec {
            ambient_dim,
            rep: ConeRep::Halfspaces(normals),
            density,
            support_box,
        })
    }

    /// Conic hull of generators; the facet normals are enumerated from
    /// generator subsets (ambient dimension <= 3).
    pub fn from_generators(
        ambient_dim: usize,
        generators: Vec<Vec<f64>>,
        density: Box<DensityFn>,
        support_box: Option<(Vec<f64>, Vec<f64>)>,
    ) -> Result<Self> {
        if generators.iter().any(|g| g.len() != ambient_dim) {
            return Err(Error::dim("generator length mismatch"));
        }
        let normals = match ambient_dim {
            1 => {
                let g = generators
                    .first()
                    .ok_or_else(|| Error::invalid("need at least one generator"))?;
                vec![vec![g[0].signum()]]
            }
            2 => {
                let mut normals = Vec::new();
                for g in &generators {
                    for cand in [vec![-g[1], g[0]], vec![g[1], -g[0]]] {
                        if generators
                            .iter()
                            .all(|h| h[0] * cand[0] + h[1] * cand[1] >= -1e-12)
                        {
                            normals.push(cand);
                        }
                    }
                }
                normals
            }
            3 => {
                let mut normals = Vec::new();
                for (i, a) in generators.iter().enumerate() {
                    for b in generators.iter().skip(i + 1) {
                        let cross = vec![
                            a[1] * b[2] - a[2] * b[1],
                            a[2] * b[0] - a[0] * b[2],
                            a[0] * b[1] - a[1] * b[0],
                        ];
                        let norm: f64 = cross.iter().map(|v| v * v).sum::<f64>().sqrt();
                        if norm < 1e-12 {
                            continue;
                        }
                        for sign in [1.0, -1.0] {
                            let cand: Vec<f64> = cross.iter().map(|v| sign * v / norm).collect();
                            if generators.iter().all(|h| {
                                h.iter().zip(&cand).map(|(x, n)| x * n).sum::<f64>() >= -1e-12
                            }) {
                                normals.push(cand);
                            }
                        }
                    }
                }
                normals
            }
            _ => {
                return Err(Error::Unsupported(
                    "generator representation implemented for ambient dim <= 3".into(),
                ))
            }
        };
        if normals.is_empty() {
            return Err(Error::invalid("generators do not span a pointed facet structure"));
        }
        Ok(ConeSpec {
            ambient_dim,
            rep: ConeRep::Halfspaces(normals),
            density,
            support_box,
        })
    }

    pub fn from_membership(
        ambient_dim: usize,
        membership: Box<MembershipFn>,
        density: Box<DensityFn>,
        support_box: (Vec<f64>, Vec<f64>),
    ) -> Self {
        ConeSpec {
            ambient_dim,
            rep: ConeRep::Membership(membership),
            density,
            support_box: Some(support_box),
        }
    }

    /// The non-negative orthant with unit density restricted to
    /// `[0, side]^dim`.
    pub fn orthant(dim: usize, side: f64) -> Self {
        let normals = (0..dim)
            .map(|k| {
                let mut n = vec![0.0; dim];
                n[k] = 1.0;
                n
            })
            .collect();
        ConeSpec {
            ambient_dim: dim,
            rep: ConeRep::Halfspaces(normals),
            density: Box::new(|_| 1.0),
            support_box: Some((vec![0.0; dim], vec![side; dim])),
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        match &self.rep {
            ConeRep::Halfspaces(normals) => normals.iter().all(|n| {
                n.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() >= -1e-12
            }),
            ConeRep::Membership(f) => f(x),
        }
    }

    pub fn density(&self, x: &[f64]) -> f64 {
        (self.density)(x)
    }

    fn halfspaces(&self) -> Result<&[Vec<f64>]> {
        match &self.rep {
            ConeRep::Halfspaces(n) => Ok(n),
            ConeRep::Membership(_) => Err(Error::Unsupported(
                "exact fiber geometry needs a halfspace representation".into(),
            )),
        }
    }

    fn sample_window(&self) -> Result<(Vec<f64>, Vec<f64>)> {
        self.support_box
            .clone()
            .ok_or_else(|| Error::invalid("operation needs a support box on the cone"))
    }
}

/// A linear map with its coarea factor `sqrt(det(M M^T))`.
#[derive(Debug, Clone)]
pub struct LinearMapSpec {
    pub matrix: DMatrix<f64>,
    pub coarea_factor: f64,
}

impl LinearMapSpec {
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        if matrix.nrows() > matrix.ncols() {
            return Err(Error::invalid("map must not increase dimension"));
        }
        let gram = &matrix * matrix.transpose();
        let det = gram.determinant();
        if !(det > 1e-14) {
            return Err(Error::invalid("map must be surjective (full row rank)"));
        }
        Ok(LinearMapSpec {
            matrix,
            coarea_factor: det.sqrt(),
        })
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let v = self.matrix.clone() * DVector::from_column_slice(x);
        v.iter().copied().collect()
    }

    /// Minimum-norm solution of `M x = y` and an orthonormal kernel
    /// basis (columns).
    fn fiber_frame(&self, y: &[f64]) -> Result<(DVector<f64>, DMatrix<f64>)> {
        let m = &self.matrix;
        let (k2, k1) = (m.nrows(), m.ncols());
        if y.len() != k2 {
            return Err(Error::dim("target point has wrong dimension"));
        }
        let gram = m * m.transpose();
        let rhs = DVector::from_column_slice(y);
        let sol = gram
            .clone()
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::Divergence("singular Gram matrix".into()))?;
        let x0 = m.transpose() * sol;
        // orthonormal kernel basis: Gram-Schmidt the standard basis
        // against the row space
        let mut basis: Vec<DVector<f64>> = Vec::new();
        for r in 0..k2 {
            let mut v = m.row(r).transpose();
            for b in &basis {
                let c = b.dot(&v);
                v -= c * b;
            }
            if v.norm() > 1e-12 {
                basis.push(v.normalize());
            }
        }
        let row_rank = basis.len();
        let mut kernel_cols: Vec<DVector<f64>> = Vec::new();
        for k in 0..k1 {
            let mut v = DVector::zeros(k1);
            v[k] = 1.0;
            for b in basis.iter().chain(kernel_cols.iter()) {
                let c = b.dot(&v);
                v -= c * b;
            }
            if v.norm() > 1e-9 {
                kernel_cols.push(v.normalize());
            }
            if kernel_cols.len() == k1 - row_rank {
                break;
            }
        }
        let kf = kernel_cols.len();
        let mut z = DMatrix::zeros(k1, kf);
        for (c, v) in kernel_cols.iter().enumerate() {
            z.set_column(c, v);
        }
        Ok((x0, z))
    }
}

/// Quadrature plan for fiber-polytope integration.
#[derive(Debug, Clone, Copy)]
pub struct FiberQuad {
    /// Rounds of longest-edge bisection applied to every simplex.
    pub refine: usize,
}

impl Default for FiberQuad {
    fn default() -> Self {
        FiberQuad { refine: 4 }
    }
}

// ---------------------------------------------------------------
// fiber polytope geometry in kernel coordinates

struct FiberPolytope {
    /// Constraints `a . s <= b`.
    a: Vec<Vec<f64>>,
    b: Vec<f64>,
    dim: usize,
}

impl FiberPolytope {
    fn feasible(&self, s: &[f64], tol: f64) -> bool {
        self.a
            .iter()
            .zip(&self.b)
            .all(|(a, b)| a.iter().zip(s).map(|(x, y)| x * y).sum::<f64>() <= b + tol)
    }

    fn vertices(&self) -> Vec<Vec<f64>> {
        let kf = self.dim;
        let m = self.a.len();
        let mut verts: Vec<Vec<f64>> = Vec::new();
        let mut subset = vec![0usize; kf];
        fn choose(
            m: usize,
            k: usize,
            start: usize,
            subset: &mut Vec<usize>,
            level: usize,
            out: &mut dyn FnMut(&[usize]),
        ) {
            if level == k {
                out(subset);
                return;
            }
            for i in start..m {
                subset[level] = i;
                choose(m, k, i + 1, subset, level + 1, out);
            }
        }
        let scale: f64 = self
            .b
            .iter()
            .fold(1.0f64, |acc, v| acc.max(v.abs()));
        choose(m, kf, 0, &mut subset, 0, &mut |idx: &[usize]| {
            let a = DMatrix::from_fn(kf, kf, |r, c| self.a[idx[r]][c]);
            let b = DVector::from_fn(kf, |r, _| self.b[idx[r]]);
            if let Some(s) = a.lu().solve(&b) {
                if s.iter().all(|v| v.is_finite() && v.abs() < 1e12) {
                    let sv: Vec<f64> = s.iter().copied().collect();
                    if self.feasible(&sv, 1e-9 * (1.0 + scale)) {
                        verts.push(sv);
                    }
                }
            }
        });
        // dedupe
        let mut unique: Vec<Vec<f64>> = Vec::new();
        for v in verts {
            if !unique.iter().any(|u| {
                u.iter()
                    .zip(&v)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt()
                    < 1e-8 * (1.0 + scale)
            }) {
                unique.push(v);
            }
        }
        unique
    }

    /// Crude recession test over axis and diagonal directions.
    fn looks_unbounded(&self) -> bool {
        let kf = self.dim;
        let mut dirs: Vec<Vec<f64>> = Vec::new();
        for k in 0..kf {
            for sign in [1.0, -1.0] {
                let mut d = vec![0.0; kf];
                d[k] = sign;
                dirs.push(d);
            }
        }
        dirs.push(vec![1.0 / (kf as f64).sqrt(); kf]);
        dirs.push(vec![-1.0 / (kf as f64).sqrt(); kf]);
        dirs.iter().any(|d| {
            self.a
                .iter()
                .all(|a| a.iter().zip(d).map(|(x, y)| x * y).sum::<f64>() <= 1e-12)
        })
    }
}

fn simplex_volume(verts: &[Vec<f64>]) -> f64 {
    let k = verts.len() - 1;
    if k == 0 {
        return 1.0;
    }
    let m = DMatrix::from_fn(k, k, |r, c| verts[r + 1][c] - verts[0][c]);
    let fact: f64 = (1..=k).map(|i| i as f64).product();
    m.determinant().abs() / fact
}

/// Fixed-order rule on one simplex: 2-point Gauss per segment, edge
/// midpoints for triangles, the 4-point degree-2 rule for tetrahedra.
fn simplex_rule(verts: &[Vec<f64>], f: &mut dyn FnMut(&[f64]) -> f64) -> f64 {
    let k = verts.len() - 1;
    let vol = simplex_volume(verts);
    if vol == 0.0 {
        return 0.0;
    }
    match k {
        0 => f(&verts[0]),
        1 => {
            let c = 0.5 / 3.0f64.sqrt();
            let mid: Vec<f64> = verts[0]
                .iter()
                .zip(&verts[1])
                .map(|(a, b)| 0.5 * (a + b))
                .collect();
            let half: Vec<f64> = verts[1]
                .iter()
                .zip(&verts[0])
                .map(|(a, b)| a - b)
                .collect();
            let p1: Vec<f64> = mid.iter().zip(&half).map(|(m, h)| m - c * h).collect();
            let p2: Vec<f64> = mid.iter().zip(&half).map(|(m, h)| m + c * h).collect();
            0.5 * vol * (f(&p1) + f(&p2))
        }
        2 => {
            let mut acc = 0.0;
            for (i, j) in [(0usize, 1usize), (0, 2), (1, 2)] {
                let mid: Vec<f64> = verts[i]
                    .iter()
                    .zip(&verts[j])
                    .map(|(a, b)| 0.5 * (a + b))
                    .collect();
                acc += f(&mid);
            }
            vol * acc / 3.0
        }
        3 => {
            let alpha = 0.585_410_196_624_968_5;
            let beta = 0.138_196_601_125_010_5;
            let mut acc = 0.0;
            for main in 0..4 {
                let p: Vec<f64> = (0..3)
                    .map(|c| {
                        (0..4)
                            .map(|v| {
                                let w = if v == main { alpha } else { beta };
                                w * verts[v][c]
                            })
                            .sum()
                    })
                    .collect();
                acc += f(&p);
            }
            0.25 * vol * acc
        }
        _ => unreachable!("fiber dimension > 3 filtered earlier"),
    }
}

fn bisect_simplex(verts: &[Vec<f64>]) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    // longest edge bisection
    let k = verts.len();
    let (mut bi, mut bj, mut best) = (0usize, 1usize, -1.0f64);
    for i in 0..k {
        for j in (i + 1)..k {
            let d: f64 = verts[i]
                .iter()
                .zip(&verts[j])
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            if d > best {
                best = d;
                bi = i;
                bj = j;
            }
        }
    }
    let mid: Vec<f64> = verts[bi]
        .iter()
        .zip(&verts[bj])
        .map(|(a, b)| 0.5 * (a + b))
        .collect();
    let mut s1 = verts.to_vec();
    s1[bj] = mid.clone();
    let mut s2 = verts.to_vec();
    s2[bi] = mid;
    (s1, s2)
}

fn integrate_polytope(
    verts: &[Vec<f64>],
    dim: usize,
    quad: FiberQuad,
    f: &mut dyn FnMut(&[f64]) -> f64,
) -> f64 {
    if verts.len() < dim + 1 {
        return 0.0;
    }
    // fan simplices from the centroid
    let kf = dim;
    let centroid: Vec<f64> = (0..kf)
        .map(|c| verts.iter().map(|v| v[c]).sum::<f64>() / verts.len() as f64)
        .collect();
    let mut simplices: Vec<Vec<Vec<f64>>> = Vec::new();
    match kf {
        1 => {
            let mut vs = verts.to_vec();
            vs.sort_by(|a, b| a[0].total_cmp(&b[0]));
            simplices.push(vec![vs[0].clone(), vs[vs.len() - 1].clone()]);
        }
        2 => {
            let mut vs = verts.to_vec();
            vs.sort_by(|a, b| {
                let aa = (a[1] - centroid[1]).atan2(a[0] - centroid[0]);
                let bb = (b[1] - centroid[1]).atan2(b[0] - centroid[0]);
                aa.total_cmp(&bb)
            });
            for i in 0..vs.len() {
                let j = (i + 1) % vs.len();
                simplices.push(vec![centroid.clone(), vs[i].clone(), vs[j].clone()]);
            }
        }
        3 => {
            // fan each facet (triangulated around its own centroid)
            // facets are recovered from near-coplanar vertex triples on
            // the hull; for the small constraint counts here it is
            // enough to fan over all triples and keep orientation-safe
            // tetrahedra (others have negligible volume and cancel)
            let n = verts.len();
            for i in 0..n {
                for j in (i + 1)..n {
                    for k in (j + 1)..n {
                        let tet = vec![
                            centroid.clone(),
                            verts[i].clone(),
                            verts[j].clone(),
                            verts[k].clone(),
                        ];
                        if simplex_volume(&tet) > 1e-14 {
                            simplices.push(tet);
                        }
                    }
                }
            }
            // triple fanning over-counts: scale by the hull volume ratio
            let fan_vol: f64 = simplices.iter().map(|s| simplex_volume(s)).sum();
            if fan_vol > 0.0 {
                // Monte-Carlo-free correction is not available in closed
                // form for overlapping fans; instead restrict to facet
                // triples only: drop tetrahedra whose base triple is not
                // on a common active constraint.
                simplices.clear();
                // rebuild using facet structure
            }
        }
        _ => {}
    }
    if kf == 3 && simplices.is_empty() {
        return integrate_polytope_3d_facets(verts, &centroid, quad, f);
    }
    let mut total = 0.0;
    for s in simplices {
        let mut stack = vec![s];
        for _ in 0..quad.refine {
            let mut next = Vec::with_capacity(stack.len() * 2);
            for s in stack {
                let (a, b) = bisect_simplex(&s);
                next.push(a);
                next.push(b);
            }
            stack = next;
        }
        for s in stack {
            total += simplex_rule(&s, f);
        }
    }
    total
}

/// 3-d fiber polytopes: facets are the vertex sets saturating a common
/// linear functional on the hull; each facet is fanned from its own
/// centroid, each resulting triangle joined with the polytope centroid.
fn integrate_polytope_3d_facets(
    verts: &[Vec<f64>],
    centroid: &[f64],
    quad: FiberQuad,
    f: &mut dyn FnMut(&[f64]) -> f64,
) -> f64 {
    // recover facet planes from vertex triples
    let n = verts.len();
    let mut planes: Vec<(Vec<f64>, f64)> = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            for k in (j + 1)..n {
                let u: Vec<f64> = (0..3).map(|c| verts[j][c] - verts[i][c]).collect();
                let w: Vec<f64> = (0..3).map(|c| verts[k][c] - verts[i][c]).collect();
                let mut nrm = vec![
                    u[1] * w[2] - u[2] * w[1],
                    u[2] * w[0] - u[0] * w[2],
                    u[0] * w[1] - u[1] * w[0],
                ];
                let len: f64 = nrm.iter().map(|v| v * v).sum::<f64>().sqrt();
                if len < 1e-12 {
                    continue;
                }
                nrm.iter_mut().for_each(|v| *v /= len);
                let off: f64 = nrm.iter().zip(&verts[i]).map(|(a, b)| a * b).sum();
                // outward orientation relative to the centroid
                let side: f64 = nrm.iter().zip(centroid).map(|(a, b)| a * b).sum::<f64>() - off;
                let (nrm, off) = if side > 0.0 {
                    (nrm.iter().map(|v| -v).collect::<Vec<_>>(), -off)
                } else {
                    (nrm, off)
                };
                if verts
                    .iter()
                    .all(|v| nrm.iter().zip(v).map(|(a, b)| a * b).sum::<f64>() <= off + 1e-9)
                    && !planes.iter().any(|(p, o)| {
                        (o - off).abs() < 1e-8
                            && p.iter().zip(&nrm).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()
                                < 1e-12
                    })
                {
                    planes.push((nrm, off));
                }
            }
        }
    }
    let mut total = 0.0;
    for (nrm, off) in &planes {
        let facet: Vec<Vec<f64>> = verts
            .iter()
            .filter(|v| {
                (nrm.iter().zip(*v).map(|(a, b)| a * b).sum::<f64>() - off).abs() < 1e-8
            })
            .cloned()
            .collect();
        if facet.len() < 3 {
            continue;
        }
        let fc: Vec<f64> = (0..3)
            .map(|c| facet.iter().map(|v| v[c]).sum::<f64>() / facet.len() as f64)
            .collect();
        // angular order in the facet plane
        let e1: Vec<f64> = {
            let mut v: Vec<f64> = (0..3).map(|c| facet[0][c] - fc[c]).collect();
            let l = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v.iter_mut().for_each(|x| *x /= l.max(1e-300));
            v
        };
        let e2 = vec![
            nrm[1] * e1[2] - nrm[2] * e1[1],
            nrm[2] * e1[0] - nrm[0] * e1[2],
            nrm[0] * e1[1] - nrm[1] * e1[0],
        ];
        let mut ordered = facet.clone();
        ordered.sort_by(|a, b| {
            let pa = (
                (0..3).map(|c| (a[c] - fc[c]) * e1[c]).sum::<f64>(),
                (0..3).map(|c| (a[c] - fc[c]) * e2[c]).sum::<f64>(),
            );
            let pb = (
                (0..3).map(|c| (b[c] - fc[c]) * e1[c]).sum::<f64>(),
                (0..3).map(|c| (b[c] - fc[c]) * e2[c]).sum::<f64>(),
            );
            pa.1.atan2(pa.0).total_cmp(&pb.1.atan2(pb.0))
        });
        for i in 0..ordered.len() {
            let j = (i + 1) % ordered.len();
            let tet = vec![
                centroid.to_vec(),
                fc.clone(),
                ordered[i].clone(),
                ordered[j].clone(),
            ];
            if simplex_volume(&tet) > 1e-14 {
                let mut stack = vec![tet];
                for _ in 0..quad.refine {
                    let mut next = Vec::with_capacity(stack.len() * 2);
                    for s in stack {
                        let (a, b) = bisect_simplex(&s);
                        next.push(a);
                        next.push(b);
                    }
                    stack = next;
                }
                for s in stack {
                    total += simplex_rule(&s, f);
                }
            }
        }
    }
    total
}

fn build_fiber_polytope(
    cone: &ConeSpec,
    map: &LinearMapSpec,
    x0: &DVector<f64>,
    z: &DMatrix<f64>,
) -> Result<FiberPolytope> {
    let normals = cone.halfspaces()?;
    let kf = z.ncols();
    let mut a = Vec::new();
    let mut b = Vec::new();
    for n in normals {
        let nv = DVector::from_column_slice(n);
        let row: Vec<f64> = (0..kf).map(|c| -(nv.dot(&z.column(c).into_owned()))).collect();
        a.push(row);
        b.push(nv.dot(x0));
    }
    if let Some((lo, hi)) = &cone.support_box {
        for k in 0..cone.ambient_dim {
            let zr: Vec<f64> = (0..kf).map(|c| z[(k, c)]).collect();
            a.push(zr.clone());
            b.push(hi[k] - x0[k]);
            a.push(zr.iter().map(|v| -v).collect());
            b.push(x0[k] - lo[k]);
        }
    }
    let _ = map;
    Ok(FiberPolytope { a, b, dim: kf })
}

/// Pushforward density `g(y)` of `f . H^{k1}` under the map, by exact
/// fiber-polytope quadrature divided by the coarea factor.
pub fn pushforward_density(
    cone: &ConeSpec,
    map: &LinearMapSpec,
    y: &[f64],
    quad: FiberQuad,
) -> Result<f64> {
    if map.matrix.ncols() != cone.ambient_dim {
        return Err(Error::dim("map does not match the cone's ambient space"));
    }
    let (x0, z) = map.fiber_frame(y)?;
    let kf = z.ncols();
    if kf > 3 {
        return Err(Error::Unsupported("fiber dimension > 3".into()));
    }
    if kf == 0 {
        let pt: Vec<f64> = x0.iter().copied().collect();
        let val = if cone.contains(&pt) { cone.density(&pt) } else { 0.0 };
        return Ok(val / map.coarea_factor);
    }
    let poly = build_fiber_polytope(cone, map, &x0, &z)?;
    let verts = poly.vertices();
    if verts.is_empty() {
        if poly.feasible(&vec![0.0; kf], 1e-9) && poly.looks_unbounded() {
            return Err(Error::Divergence("unbounded fiber without a support box".into()));
        }
        return Ok(0.0);
    }
    if cone.support_box.is_none() && poly.looks_unbounded() {
        return Err(Error::Divergence("unbounded fiber without a support box".into()));
    }
    let mut eval = |s: &[f64]| -> f64 {
        let sv = DVector::from_column_slice(s);
        let x = &x0 + &z * sv;
        let xs: Vec<f64> = x.iter().copied().collect();
        cone.density(&xs)
    };
    let integral = integrate_polytope(&verts, kf, quad, &mut eval);
    Ok(integral / map.coarea_factor)
}

// ---------------------------------------------------------------
// connectedness

/// A union of convex polyhedral components `{x : n . x >= c}` used by
/// the connectedness check; the failing control instances are unions of
/// translated cones.
pub struct PolyhedralRegion {
    pub ambient_dim: usize,
    /// Per component: (normals, offsets) with membership
    /// `n_i . x >= c_i` for all i.
    pub components: Vec<(Vec<Vec<f64>>, Vec<f64>)>,
    /// Sampling window.
    pub window: (Vec<f64>, Vec<f64>),
}

impl PolyhedralRegion {
    pub fn contains(&self, x: &[f64]) -> bool {
        self.components.iter().any(|(normals, offsets)| {
            normals
                .iter()
                .zip(offsets)
                .all(|(n, c)| n.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() >= c - 1e-12)
        })
    }

    pub fn from_cone(cone: &ConeSpec) -> Result<Self> {
        let normals = cone.halfspaces()?.to_vec();
        let offsets = vec![0.0; normals.len()];
        let window = cone.sample_window()?;
        Ok(PolyhedralRegion {
            ambient_dim: cone.ambient_dim,
            components: vec![(normals, offsets)],
            window,
        })
    }
}

/// Evidence for one pair at every scale of the ladder.
#[derive(Debug, Clone)]
pub struct PairEvidence {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    /// `(scale, witnesses found)` per ladder rung.
    pub scales: Vec<(f64, usize)>,
    pub connected: bool,
}

#[derive(Debug, Clone)]
pub struct ConnectednessReport {
    pub pairs: Vec<PairEvidence>,
    pub all_connected: bool,
}

/// Is there `x'` in the component with `|x' - center| <= radius` and
/// `M x' = target`? Cyclic projections onto the ball, the halfspaces
/// and the affine fiber; feasible iff the limit satisfies everything.
fn ball_fiber_feasible(
    normals: &[Vec<f64>],
    offsets: &[f64],
    map: &LinearMapSpec,
    target: &[f64],
    center: &[f64],
    radius: f64,
) -> bool {
    let k1 = center.len();
    let m = &map.matrix;
    let gram_inv = (m * m.transpose())
        .try_inverse()
        .expect("map checked surjective");
    let mut x = DVector::from_column_slice(center);
    let t = DVector::from_column_slice(target);
    let c = DVector::from_column_slice(center);
    for _ in 0..600 {
        // affine projection
        let resid = m * &x - &t;
        x -= m.transpose() * (&gram_inv * resid);
        // halfspaces
        for (n, off) in normals.iter().zip(offsets) {
            let nv = DVector::from_column_slice(n);
            let val = nv.dot(&x);
            if val < *off {
                let nn = nv.norm_squared();
                x += &nv * ((off - val) / nn);
            }
        }
        // ball
        let diff = &x - &c;
        let d = diff.norm();
        if d > radius {
            x = &c + diff * (radius / d);
        }
    }
    // verify
    let ok_aff = (m * &x - &t).norm() <= 1e-6 * (1.0 + t.norm());
    let ok_ball = (&x - &c).norm() <= radius * (1.0 + 1e-6) + 1e-9;
    let ok_hs = normals.iter().zip(offsets).all(|(n, off)| {
        n.iter().zip(x.iter()).map(|(a, b)| a * b).sum::<f64>() >= off - 1e-6
    });
    let _ = k1;
    ok_aff && ok_ball && ok_hs
}

fn image_hit(
    region: &PolyhedralRegion,
    map: &LinearMapSpec,
    target: &[f64],
    center: &[f64],
    radius: f64,
) -> bool {
    region
        .components
        .iter()
        .any(|(n, c)| ball_fiber_feasible(n, c, map, target, center, radius))
}

/// Core of the connectedness check for explicitly given fiber pairs.
pub fn connectedness_check_pairs(
    region: &PolyhedralRegion,
    map: &LinearMapSpec,
    pairs: &[(Vec<f64>, Vec<f64>)],
    n_probe: usize,
    seed: u64,
) -> Result<ConnectednessReport> {
    let scales: Vec<f64> = (0..6).map(|k| 1.0 / (1 << k) as f64).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (lo, hi) = &region.window;
    let dim = region.ambient_dim;
    let mut evidence = Vec::new();
    for (x, y) in pairs {
        let lx = map.apply(x);
        let ly = map.apply(y);
        if lx
            .iter()
            .zip(&ly)
            .any(|(a, b)| (a - b).abs() > 1e-9 * (1.0 + a.abs()))
        {
            return Err(Error::invalid("pair does not lie in one fiber"));
        }
        let mut per_scale = Vec::new();
        let mut connected = true;
        for &r in &scales {
            let mut hits = 0usize;
            let mut tries = 0usize;
            while tries < n_probe {
                let z: Vec<f64> = (0..dim)
                    .map(|k| rng.random_range(lo[k]..hi[k]))
                    .collect();
                tries += 1;
                if !region.contains(&z) {
                    continue;
                }
                let lz = map.apply(&z);
                if image_hit(region, map, &lz, x, r) && image_hit(region, map, &lz, y, r) {
                    hits += 1;
                }
            }
            per_scale.push((r, hits));
            if hits == 0 {
                connected = false;
            }
        }
        evidence.push(PairEvidence {
            x: x.clone(),
            y: y.clone(),
            scales: per_scale,
            connected,
        });
    }
    let all = evidence.iter().all(|e| e.connected);
    Ok(ConnectednessReport {
        pairs: evidence,
        all_connected: all,
    })
}

/// Samples fiber pairs inside the region and checks the neighborhood
/// condition at a fixed scale ladder. Injective maps yield no pairs and
/// the report is vacuously positive.
pub fn connectedness_check(
    region: &PolyhedralRegion,
    map: &LinearMapSpec,
    n_pairs: usize,
    seed: u64,
) -> Result<ConnectednessReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabcd_1234);
    let (lo, hi) = &region.window;
    let dim = region.ambient_dim;
    let diam: f64 = lo
        .iter()
        .zip(hi)
        .map(|(a, b)| (b - a) * (b - a))
        .sum::<f64>()
        .sqrt();
    let mut pairs = Vec::new();
    let mut attempts = 0usize;
    while pairs.len() < n_pairs && attempts < 4000 {
        attempts += 1;
        let x: Vec<f64> = (0..dim)
            .map(|k| rng.random_range(lo[k]..hi[k]))
            .collect();
        if !region.contains(&x) {
            continue;
        }
        let (x0, z) = map.fiber_frame(&map.apply(&x))?;
        let kf = z.ncols();
        if kf == 0 {
            break; // injective map: no nontrivial pairs
        }
        // rejection-sample a distinct fiber mate
        for _ in 0..200 {
            let s = DVector::from_fn(kf, |_, _| rng.random_range(-diam..diam));
            let cand = &x0 + &z * s;
            let cv: Vec<f64> = cand.iter().copied().collect();
            let dist: f64 = cv
                .iter()
                .zip(&x)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            if dist > 0.05 * diam && region.contains(&cv) {
                pairs.push((x.clone(), cv));
                break;
            }
        }
    }
    connectedness_check_pairs(region, map, &pairs, 400, seed)
}

// ---------------------------------------------------------------
// fiber-constant reconstruction

#[derive(Debug, Clone)]
pub struct OscillationWitness {
    pub y: Vec<f64>,
    pub oscillation: f64,
    pub sample_low: Vec<f64>,
    pub sample_high: Vec<f64>,
}

pub struct CompositeReconstruction {
    pub y_grid: Vec<Vec<f64>>,
    pub values: Vec<f64>,
    /// Populated when some fiber oscillates beyond the tolerance.
    pub failure: Option<OscillationWitness>,
    /// `max |m0(x) - m2(L x)|` over the fiber samples used.
    pub residual: f64,
}

impl CompositeReconstruction {
    /// Nearest-grid-point evaluation of the reconstructed function.
    pub fn eval(&self, y: &[f64]) -> Option<f64> {
        let mut best = None;
        let mut best_d = f64::INFINITY;
        for (p, v) in self.y_grid.iter().zip(&self.values) {
            let d: f64 = p
                .iter()
                .zip(y)
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            if d < best_d {
                best_d = d;
                best = Some(*v);
            }
        }
        best
    }
}

/// Sampling plan for the reconstruction.
#[derive(Debug, Clone, Copy)]
pub struct FiberSampler {
    pub seed: u64,
    pub n_per_fiber: usize,
    pub y_points_per_dim: usize,
    pub min_fiber_hits: usize,
}

impl Default for FiberSampler {
    fn default() -> Self {
        FiberSampler {
            seed: 1,
            n_per_fiber: 200,
            y_points_per_dim: 12,
            min_fiber_hits: 8,
        }
    }
}

/// Reconstructs `m2` with `m0 = m2 . L` by fiber means over a grid of
/// the image, reporting an oscillation witness when `m0` is not
/// fiber-constant within `tol`.
pub fn composite_reconstruct(
    cone: &ConeSpec,
    map: &LinearMapSpec,
    m0: &dyn Fn(&[f64]) -> f64,
    tol: f64,
    sampler: FiberSampler,
) -> Result<CompositeReconstruction> {
    let (lo, hi) = cone.sample_window()?;
    let dim = cone.ambient_dim;
    let k2 = map.matrix.nrows();
    let mut rng = ChaCha8Rng::seed_from_u64(sampler.seed);

    // image bounding box from cone samples
    let mut img_lo = vec![f64::INFINITY; k2];
    let mut img_hi = vec![f64::NEG_INFINITY; k2];
    let mut found = 0usize;
    for _ in 0..20_000 {
        let x: Vec<f64> = (0..dim)
            .map(|k| rng.random_range(lo[k]..hi[k]))
            .collect();
        if !cone.contains(&x) {
            continue;
        }
        found += 1;
        let y = map.apply(&x);
        for (k, v) in y.iter().enumerate() {
            img_lo[k] = img_lo[k].min(*v);
            img_hi[k] = img_hi[k].max(*v);
        }
    }
    if found == 0 {
        return Err(Error::Divergence("no cone samples inside the window".into()));
    }

    // regular y grid
    let per_dim = sampler.y_points_per_dim.max(2);
    let mut y_grid = Vec::new();
    let mut idx = vec![0usize; k2];
    let total: usize = per_dim.pow(k2 as u32);
    for flat in 0..total {
        let mut rem = flat;
        for k in (0..k2).rev() {
            idx[k] = rem % per_dim;
            rem /= per_dim;
        }
        let y: Vec<f64> = (0..k2)
            .map(|k| img_lo[k] + (img_hi[k] - img_lo[k]) * idx[k] as f64 / (per_dim - 1) as f64)
            .collect();
        y_grid.push(y);
    }

    let diam: f64 = lo
        .iter()
        .zip(&hi)
        .map(|(a, b)| (b - a) * (b - a))
        .sum::<f64>()
        .sqrt();
    let mut kept_y = Vec::new();
    let mut values = Vec::new();
    let mut residual = 0.0f64;
    let mut failure: Option<OscillationWitness> = None;
    for y in y_grid {
        let (x0, z) = map.fiber_frame(&y)?;
        let kf = z.ncols();
        let mut samples: Vec<(Vec<f64>, f64)> = Vec::new();
        if kf == 0 {
            let xs: Vec<f64> = x0.iter().copied().collect();
            if cone.contains(&xs) {
                samples.push((xs.clone(), m0(&xs)));
            }
        } else {
            let mut tries = 0usize;
            while samples.len() < sampler.n_per_fiber && tries < 50 * sampler.n_per_fiber {
                tries += 1;
                let s = DVector::from_fn(kf, |_, _| rng.random_range(-diam..diam));
                let cand = &x0 + &z * s;
                let cv: Vec<f64> = cand.iter().copied().collect();
                if cv
                    .iter()
                    .enumerate()
                    .all(|(k, v)| *v >= lo[k] - 1e-12 && *v <= hi[k] + 1e-12)
                    && cone.contains(&cv)
                {
                    samples.push((cv.clone(), m0(&cv)));
                }
            }
        }
        if samples.len() < sampler.min_fiber_hits.min(1).max(if kf == 0 { 1 } else { sampler.min_fiber_hits }) {
            continue; // y effectively outside L(C)
        }
        let min = samples.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
        let max = samples.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
        if max - min > tol && failure.is_none() {
            let low = samples
                .iter()
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .unwrap()
                .0
                .clone();
            let high = samples
                .iter()
                .max_by(|a, b| a.1.total_cmp(&b.1))
                .unwrap()
                .0
                .clone();
            failure = Some(OscillationWitness {
                y: y.clone(),
                oscillation: max - min,
                sample_low: low,
                sample_high: high,
            });
        }
        let mean = samples.iter().map(|p| p.1).sum::<f64>() / samples.len() as f64;
        residual = residual.max(samples.iter().map(|p| (p.1 - mean).abs()).fold(0.0, f64::max));
        kept_y.push(y);
        values.push(mean);
    }
    Ok(CompositeReconstruction {
        y_grid: kept_y,
        values,
        failure,
        residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn sum_map(k1: usize) -> LinearMapSpec {
        LinearMapSpec::new(DMatrix::from_fn(1, k1, |_, _| 1.0)).unwrap()
    }

    #[test]
    fn coarea_factor_matches() {
        let m = sum_map(2);
        assert_relative_eq!(m.coarea_factor, 2.0f64.sqrt());
        let m3 = sum_map(3);
        assert_relative_eq!(m3.coarea_factor, 3.0f64.sqrt());
        // non-surjective map rejected
        assert!(LinearMapSpec::new(DMatrix::zeros(1, 2)).is_err());
    }

    #[test]
    fn unit_square_pushforward_is_tent() {
        let cone = ConeSpec::orthant(2, 1.0);
        let map = sum_map(2);
        let quad = FiberQuad::default();
        // g(1) = 1 exactly: fiber length sqrt(2), coarea sqrt(2)
        let g1 = pushforward_density(&cone, &map, &[1.0], quad).unwrap();
        assert_relative_eq!(g1, 1.0, max_relative = 1e-10);
        for &(y, want) in &[
            (0.25, 0.25),
            (0.5, 0.5),
            (0.9, 0.9),
            (1.3, 0.7),
            (1.75, 0.25),
        ] {
            let g = pushforward_density(&cone, &map, &[y], quad).unwrap();
            assert_relative_eq!(g, want, max_relative = 1e-9);
        }
        // outside the image
        assert_eq!(pushforward_density(&cone, &map, &[-0.5], quad).unwrap(), 0.0);
        assert_eq!(pushforward_density(&cone, &map, &[2.5], quad).unwrap(), 0.0);
    }

    #[test]
    fn unbounded_fiber_is_an_error() {
        let normals = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let cone =
            ConeSpec::from_halfspaces(2, normals, Box::new(|_| 1.0), None).unwrap();
        let map = sum_map(2);
        // fibers of x1 + x2 over positive y are bounded segments, but the
        // fiber frame of the projection to x1 is an unbounded ray
        let proj = LinearMapSpec::new(DMatrix::from_row_slice(1, 2, &[1.0, 0.0])).unwrap();
        match pushforward_density(&cone, &proj, &[0.5], FiberQuad::default()) {
            Err(Error::Divergence(_)) => {}
            other => panic!("expected divergence, got {other:?}"),
        }
        let _ = map;
    }

    #[test]
    fn mass_conservation_against_monte_carlo() {
        let cone = ConeSpec::orthant(2, 1.0);
        let map = sum_map(2);
        let quad = FiberQuad::default();
        // integral of g over [0, 2]
        let n = 401;
        let mut mass = 0.0;
        for i in 0..n {
            let y = 2.0 * i as f64 / (n - 1) as f64;
            let w = if i == 0 || i == n - 1 { 0.5 } else { 1.0 };
            mass += w * pushforward_density(&cone, &map, &[y], quad).unwrap();
        }
        mass *= 2.0 / (n - 1) as f64;
        // MC estimate of the cone mass
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let mc_n = 100_000;
        let mut hits = 0usize;
        for _ in 0..mc_n {
            let x = [rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)];
            if cone.contains(&x) {
                hits += 1;
            }
        }
        let mc_mass = hits as f64 / mc_n as f64;
        assert!(
            (mass - mc_mass).abs() / mc_mass <= 5e-2,
            "grid {mass} vs MC {mc_mass}"
        );
        assert_relative_eq!(mass, 1.0, max_relative = 1e-6);
    }

    #[test]
    fn histogram_agreement() {
        // seeded MC pushforward histogram vs g at bin centers
        let cone = ConeSpec::orthant(2, 1.0);
        let map = sum_map(2);
        let quad = FiberQuad::default();
        let n_samples = 1_000_000usize;
        let bins = 50usize;
        let mut counts = vec![0usize; bins];
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        for _ in 0..n_samples {
            let x = [rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)];
            let y = x[0] + x[1];
            let b = ((y / 2.0) * bins as f64) as usize;
            counts[b.min(bins - 1)] += 1;
        }
        let width = 2.0 / bins as f64;
        for b in 0..bins {
            let center = (b as f64 + 0.5) * width;
            let g = pushforward_density(&cone, &map, &[center], quad).unwrap();
            let est = counts[b] as f64 / (n_samples as f64 * width);
            assert!(
                (est - g).abs() / g.max(1e-6) <= 5e-2,
                "bin {b}: hist {est} vs g {g}"
            );
        }
    }

    #[test]
    fn three_dim_fiber_pushforward() {
        // uniform density on [0,1]^3, map = sum: g is the quadratic spline
        // density of the sum of three uniforms (times 1 after the coarea
        // normalization): g(y) = area of the slice / sqrt(3) ... the
        // closed form at y = 1.5 is 3/4 * sqrt(3) / sqrt(3) = 0.75
        let cone = ConeSpec::orthant(3, 1.0);
        let map = sum_map(3);
        let g = pushforward_density(&cone, &map, &[1.5], FiberQuad { refine: 2 }).unwrap();
        assert_relative_eq!(g, 0.75, max_relative = 1e-8);
        let g = pushforward_density(&cone, &map, &[0.8], FiberQuad { refine: 2 }).unwrap();
        assert_relative_eq!(g, 0.32, max_relative = 1e-8);
    }

    #[test]
    fn connectedness_convex_instances_pass() {
        let cone = ConeSpec::orthant(3, 1.0);
        let region = PolyhedralRegion::from_cone(&cone).unwrap();
        let map = sum_map(3);
        let report = connectedness_check(&region, &map, 6, 11).unwrap();
        assert!(!report.pairs.is_empty());
        assert!(report.all_connected, "{:#?}", report.pairs);

        let cone2 = ConeSpec::orthant(2, 1.0);
        let region2 = PolyhedralRegion::from_cone(&cone2).unwrap();
        let report2 = connectedness_check(&region2, &sum_map(2), 6, 11).unwrap();
        assert!(report2.all_connected);
    }

    #[test]
    fn connectedness_injective_is_vacuous() {
        let cone = ConeSpec::orthant(2, 1.0);
        let region = PolyhedralRegion::from_cone(&cone).unwrap();
        let id = LinearMapSpec::new(DMatrix::identity(2, 2)).unwrap();
        let report = connectedness_check(&region, &id, 6, 3).unwrap();
        assert!(report.pairs.is_empty());
        assert!(report.all_connected);
    }

    /// Two translated cones whose images overlap only at a point: the
    /// crossing fiber has disconnected preimages and the check reports a
    /// failing pair.
    #[test]
    fn connectedness_control_fails() {
        // A = {x1 <= 0, |x2| <= -x1}, B = {x1 >= 0, |x2 - 4| <= x1}
        let comp_a = (
            vec![vec![-1.0, 0.0], vec![-1.0, 1.0], vec![-1.0, -1.0]],
            vec![0.0, 0.0, 0.0],
        );
        let comp_b = (
            vec![vec![1.0, 0.0], vec![1.0, 1.0], vec![1.0, -1.0]],
            vec![0.0, 4.0, -4.0],
        );
        let region = PolyhedralRegion {
            ambient_dim: 2,
            components: vec![comp_a, comp_b],
            window: (vec![-3.0, -3.0], vec![3.0, 7.0]),
        };
        let proj = LinearMapSpec::new(DMatrix::from_row_slice(1, 2, &[1.0, 0.0])).unwrap();
        // crossing fiber x1 = 0: apexes of the two cones
        let pairs = vec![(vec![0.0, 0.0], vec![0.0, 4.0])];
        let report = connectedness_check_pairs(&region, &proj, &pairs, 400, 5).unwrap();
        assert!(!report.all_connected);
        let ev = &report.pairs[0];
        // small scales find no common witnesses
        assert_eq!(ev.scales.last().unwrap().1, 0);
    }

    #[test]
    fn composite_reconstruct_factored_function() {
        let cone = ConeSpec::orthant(2, 1.0);
        let map = sum_map(2);
        let h = |y: f64| y * y;
        let m0 = move |x: &[f64]| h(x[0] + x[1]);
        let rec = composite_reconstruct(&cone, &map, &m0, 1e-9, FiberSampler::default()).unwrap();
        assert!(rec.failure.is_none());
        assert!(rec.residual <= 1e-9, "residual {}", rec.residual);
        for (y, v) in rec.y_grid.iter().zip(&rec.values) {
            assert_relative_eq!(*v, y[0] * y[0], max_relative = 1e-8);
        }
    }

    #[test]
    fn composite_reconstruct_detects_oscillation() {
        let cone = ConeSpec::orthant(2, 1.0);
        let map = sum_map(2);
        let m0 = |x: &[f64]| x[0];
        let rec = composite_reconstruct(&cone, &map, &m0, 1e-3, FiberSampler::default()).unwrap();
        let w = rec.failure.expect("oscillation expected");
        assert!(w.oscillation > 1e-3);
        assert!((w.sample_low[0] - w.sample_high[0]).abs() > 1e-3);
    }

    /// The spectrum-cone instance: fibers of (lambda, zeta1) are
    /// zeta2-segments on which a lambda-only function is constant.
    #[test]
    fn composite_reconstruct_spectrum_cone() {
        let membership = |p: &[f64]| p[0] >= (p[1] * p[1] + p[2] * p[2]).sqrt();
        let cone = ConeSpec::from_membership(
            3,
            Box::new(membership),
            Box::new(|_| 1.0),
            (vec![0.0, -2.0, -2.0], vec![2.0, 2.0, 2.0]),
        );
        let map = LinearMapSpec::new(DMatrix::from_row_slice(
            2,
            3,
            &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0],
        ))
        .unwrap();
        let m0 = |x: &[f64]| (-x[0]).exp();
        let rec = composite_reconstruct(&cone, &map, &m0, 1e-8, FiberSampler::default()).unwrap();
        assert!(rec.failure.is_none());
        assert!(rec.residual <= 1e-10, "residual {}", rec.residual);
        for (y, v) in rec.y_grid.iter().zip(&rec.values) {
            assert_relative_eq!(*v, (-y[0]).exp(), max_relative = 1e-9);
        }
    }
}
