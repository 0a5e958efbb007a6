//! Omega-parametrized spectral data of the sub-Laplacian family.
//!
//! For a positive form `Q` on the first-layer dual and a covector
//! `omega`, the operator `J_{Q,omega} = d_Q . d_{B_omega}` has matrix
//! `q B_omega`. It is skew-adjoint for the scalar product `Q_hat = q^-1`
//! induced on the first layer, so it is conjugate to the skew-symmetric
//! `S = q^(1/2) B_omega q^(1/2)`:
//!
//! ```text
//! J = q^(1/2) S q^(-1/2),      -J^2 = q^(1/2) (-S^2) q^(-1/2).
//! ```
//!
//! All spectral quantities are read off the symmetric positive
//! semidefinite `-S^2` and the eigenprojectors are conjugated back.
//! Nonzero eigenvalues of a skew matrix come in pairs `+-i mu`, so the
//! `mu_h` carry even-dimensional eigenspaces of dimension `2 n_{1,h}`.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::group::StratifiedAlgebra;

/// Default relative tolerance for clustering eigenvalue square roots.
pub const DEFAULT_CLUSTER_TOL: f64 = 1e-8;
/// Kernel cutoff relative to the largest singular value. The singular
/// values are square roots of eigenvalues of -S^2, so eigensolver noise
/// of order eps * |S|^2 surfaces as sqrt(eps) * |S|; the cutoff sits
/// above that floor.
const ZERO_CUTOFF_REL: f64 = 1e-7;

/// A positive non-degenerate symmetric form on the first-layer dual,
/// with the derived objects cached: `q_hat = q^-1` (the induced scalar
/// product on the first layer) and the symmetric square roots.
#[derive(Debug, Clone)]
pub struct MetricForm {
    q: DMatrix<f64>,
    q_hat: DMatrix<f64>,
    q_sqrt: DMatrix<f64>,
    q_inv_sqrt: DMatrix<f64>,
}

impl MetricForm {
    pub fn new(q: DMatrix<f64>) -> Result<Self> {
        if q.nrows() != q.ncols() {
            return Err(Error::dim("metric form must be square"));
        }
        let n = q.nrows();
        let scale = q.norm().max(1.0);
        for i in 0..n {
            for j in 0..n {
                if (q[(i, j)] - q[(j, i)]).abs() > 1e-12 * scale {
                    return Err(Error::invalid("metric form must be symmetric"));
                }
            }
        }
        let sym = 0.5 * (&q + q.transpose());
        let eig = sym.clone().symmetric_eigen();
        let min_eig = eig.eigenvalues.min();
        if min_eig <= 1e-12 * scale {
            return Err(Error::invalid(format!(
                "metric form must be positive definite (min eigenvalue {min_eig:.3e})"
            )));
        }
        let apply = |f: fn(f64) -> f64| -> DMatrix<f64> {
            let d = DMatrix::from_diagonal(&eig.eigenvalues.map(f));
            &eig.eigenvectors * d * eig.eigenvectors.transpose()
        };
        Ok(MetricForm {
            q: sym,
            q_hat: apply(|x| 1.0 / x),
            q_sqrt: apply(|x| x.sqrt()),
            q_inv_sqrt: apply(|x| 1.0 / x.sqrt()),
        })
    }

    pub fn identity(n: usize) -> Self {
        MetricForm::new(DMatrix::identity(n, n)).expect("identity is positive definite")
    }

    pub fn dim(&self) -> usize {
        self.q.nrows()
    }

    pub fn q(&self) -> &DMatrix<f64> {
        &self.q
    }

    pub fn q_hat(&self) -> &DMatrix<f64> {
        &self.q_hat
    }

    pub fn q_sqrt(&self) -> &DMatrix<f64> {
        &self.q_sqrt
    }

    pub fn q_inv_sqrt(&self) -> &DMatrix<f64> {
        &self.q_inv_sqrt
    }

    /// Squared norm of a first-layer vector for the induced product
    /// `Q_hat`.
    pub fn norm_sq(&self, v: &DVector<f64>) -> f64 {
        (v.transpose() * &self.q_hat * v)[(0, 0)]
    }

    /// The `Q_hat` pairing of two first-layer vectors.
    pub fn pair(&self, v: &DVector<f64>, w: &DVector<f64>) -> f64 {
        (v.transpose() * &self.q_hat * w)[(0, 0)]
    }
}

/// `B_omega(X, Y) = <omega, [X, Y]>` as an antisymmetric matrix.
pub fn b_omega(alg: &StratifiedAlgebra, omega: &DVector<f64>) -> Result<DMatrix<f64>> {
    if omega.len() != alg.dim_g2() {
        return Err(Error::dim("omega length must equal dim_g2"));
    }
    let n = alg.dim_g1();
    let mut b = DMatrix::zeros(n, n);
    for (k, c) in alg.structure().iter().enumerate() {
        b += omega[k] * c;
    }
    Ok(b)
}

/// `J_{Q,omega} = q B_omega` in the chosen bases.
pub fn j_matrix(
    alg: &StratifiedAlgebra,
    metric: &MetricForm,
    omega: &DVector<f64>,
) -> Result<DMatrix<f64>> {
    if metric.dim() != alg.dim_g1() {
        return Err(Error::dim("metric dimension must equal dim_g1"));
    }
    Ok(metric.q() * b_omega(alg, omega)?)
}

/// The symmetric conjugate `S = q^(1/2) B_omega q^(1/2)` (skew-symmetric).
fn s_matrix(
    alg: &StratifiedAlgebra,
    metric: &MetricForm,
    omega: &DVector<f64>,
) -> Result<DMatrix<f64>> {
    if metric.dim() != alg.dim_g1() {
        return Err(Error::dim("metric dimension must equal dim_g1"));
    }
    Ok(metric.q_sqrt() * b_omega(alg, omega)? * metric.q_sqrt())
}

/// Sorted-descending square roots of the eigenvalues of `-S^2` together
/// with an orthonormal eigenbasis (columns).
fn singular_data(s: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let m = -(s * s);
    let eig = m.symmetric_eigen();
    let n = s.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let mut svals: Vec<f64> = order
        .iter()
        .map(|&i| eig.eigenvalues[i].max(0.0).sqrt())
        .collect();
    // flush eigensolver noise on the kernel to exact zeros, so nuclear
    // norms, Pfaffians and fractional powers see true kernel directions
    let cutoff = ZERO_CUTOFF_REL * svals.first().copied().unwrap_or(0.0);
    for v in svals.iter_mut() {
        if *v <= cutoff {
            *v = 0.0;
        }
    }
    let mut vecs = DMatrix::zeros(n, n);
    for (col, &i) in order.iter().enumerate() {
        vecs.set_column(col, &eig.eigenvectors.column(i));
    }
    (svals, vecs)
}

/// The per-omega spectral package of Proposition-style mappings: distinct
/// eigenvalue parameters `mu_h` (strictly decreasing), pair multiplicities
/// `n_{1,h}`, the spectral projectors, the kernel projector `P_0`, the
/// Pfaffian and the ground-state norm `N(omega)`.
#[derive(Debug, Clone)]
pub struct OmegaSpectralData {
    pub omega: DVector<f64>,
    pub mu: Vec<f64>,
    pub mult: Vec<usize>,
    pub projectors: Vec<DMatrix<f64>>,
    pub p0: DMatrix<f64>,
    pub kernel_dim: usize,
    pub pfaff: f64,
    pub ground_norm: f64,
}

impl OmegaSpectralData {
    /// Number of distinct nonzero eigenvalue pairs `h(omega)`.
    pub fn h(&self) -> usize {
        self.mu.len()
    }

    /// `mu_omega(v) = sum_h mu_h v_h`.
    pub fn mu_pairing(&self, v: &[f64]) -> f64 {
        self.mu.iter().zip(v).map(|(m, c)| m * c).sum()
    }

    /// The spectral sheet offset `mu_omega(n1 + 2 gamma)`.
    pub fn sheet_offset(&self, gamma: &[usize]) -> f64 {
        self.mu
            .iter()
            .zip(self.mult.iter().zip(gamma))
            .map(|(m, (n, g))| m * (*n as f64 + 2.0 * *g as f64))
            .sum()
    }
}

/// Spectral decomposition of `J_{Q,omega}` with eigenvalue clustering at
/// relative tolerance `cluster_tol`.
pub fn spectral_decompose(
    alg: &StratifiedAlgebra,
    metric: &MetricForm,
    omega: &DVector<f64>,
    cluster_tol: f64,
) -> Result<OmegaSpectralData> {
    if !(cluster_tol > 0.0) {
        return Err(Error::invalid("cluster_tol must be positive"));
    }
    let s = s_matrix(alg, metric, omega)?;
    let (svals, vecs) = singular_data(&s);
    let n = alg.dim_g1();
    let smax = svals.first().copied().unwrap_or(0.0);
    let zero_tol = ZERO_CUTOFF_REL * smax;

    // cluster the nonzero singular values (sorted descending)
    let mut clusters: Vec<(f64, Vec<usize>)> = Vec::new();
    let mut kernel_indices = Vec::new();
    for (i, &sv) in svals.iter().enumerate() {
        if sv <= zero_tol {
            kernel_indices.push(i);
        } else if let Some((anchor, members)) = clusters.last_mut() {
            if (*anchor - sv).abs() <= cluster_tol * *anchor {
                members.push(i);
            } else {
                clusters.push((sv, vec![i]));
            }
        } else {
            clusters.push((sv, vec![i]));
        }
    }

    let mut mu = Vec::with_capacity(clusters.len());
    let mut mult = Vec::with_capacity(clusters.len());
    let mut projectors = Vec::with_capacity(clusters.len());
    for (_, members) in &clusters {
        if members.len() % 2 != 0 {
            return Err(Error::Divergence(format!(
                "eigenvalue cluster of odd size {}; widen cluster_tol",
                members.len()
            )));
        }
        let mean = members.iter().map(|&i| svals[i]).sum::<f64>() / members.len() as f64;
        mu.push(mean);
        mult.push(members.len() / 2);
        let mut pi = DMatrix::zeros(n, n);
        for &i in members {
            let v = vecs.column(i);
            pi += &v * v.transpose();
        }
        projectors.push(metric.q_sqrt() * pi * metric.q_inv_sqrt());
    }
    let mut pi0 = DMatrix::zeros(n, n);
    for &i in &kernel_indices {
        let v = vecs.column(i);
        pi0 += &v * v.transpose();
    }
    let p0 = metric.q_sqrt() * pi0 * metric.q_inv_sqrt();

    let pfaff = mu
        .iter()
        .zip(&mult)
        .map(|(m, &k)| m.powi(k as i32))
        .product();
    let ground_norm = mu.iter().zip(&mult).map(|(m, &k)| m * k as f64).sum();

    Ok(OmegaSpectralData {
        omega: omega.clone(),
        mu,
        mult,
        projectors,
        p0,
        kernel_dim: kernel_indices.len(),
        pfaff,
        ground_norm,
    })
}

/// `N(omega) = mu_omega(n_1) = ||J_{Q,omega}||_1 / 2`, the trace norm
/// taken in the `Q_hat` geometry (equivalently of the symmetric
/// conjugate `S`). Defined and continuous for all omega, 1-homogeneous,
/// and a norm on the second-layer dual.
pub fn ground_norm_extended(
    alg: &StratifiedAlgebra,
    metric: &MetricForm,
    omega: &DVector<f64>,
) -> Result<f64> {
    let s = s_matrix(alg, metric, omega)?;
    let (svals, _) = singular_data(&s);
    Ok(0.5 * svals.iter().sum::<f64>())
}

/// Continuous extension of the Pfaffian weight: the product of the top
/// `n1` singular-value pairs of `S` (geometric mean within each pair).
/// Off the degeneracy variety it equals `prod_h mu_h^{n_{1,h}}`; on it,
/// collapsed pairs drive the product to zero, which is the correct
/// Plancherel density behaviour.
pub fn pfaffian_extended(
    alg: &StratifiedAlgebra,
    metric: &MetricForm,
    omega: &DVector<f64>,
    n1: usize,
) -> Result<f64> {
    let s = s_matrix(alg, metric, omega)?;
    let (svals, _) = singular_data(&s);
    if 2 * n1 > svals.len() {
        return Err(Error::dim("n1 exceeds available eigenvalue pairs"));
    }
    let mut p = 1.0;
    for k in 0..n1 {
        p *= (svals[2 * k] * svals[2 * k + 1]).sqrt();
    }
    Ok(p)
}

/// Generic degeneracy data of the pair (group, metric), sampled over a
/// proper-variety complement: with continuous sampling the generic
/// stratum is hit almost surely.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct GroupClassification {
    /// Generic kernel dimension of `d_{B_omega}`.
    pub d: usize,
    /// Generic count of distinct nonzero eigenvalue pairs.
    pub h_bar: usize,
    /// `(dim_g1 - d) / 2`.
    pub n1: usize,
    /// `B_omega` non-degenerate for some omega.
    pub is_mw_plus: bool,
    pub samples_used: usize,
    pub seed: u64,
}

/// Samples seeded Gaussian covectors and records the minimal kernel
/// dimension and the maximal distinct-eigenvalue count on that stratum.
pub fn classify_group(
    alg: &StratifiedAlgebra,
    metric: &MetricForm,
    n_samples: usize,
    seed: u64,
) -> Result<GroupClassification> {
    if alg.dim_g2() == 0 {
        return Ok(GroupClassification {
            d: alg.dim_g1(),
            h_bar: 0,
            n1: 0,
            is_mw_plus: false,
            samples_used: 0,
            seed,
        });
    }
    if n_samples == 0 {
        return Err(Error::invalid("classification needs n_samples >= 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = StandardNormal;
    let mut d = usize::MAX;
    let mut h_bar = 0usize;
    for _ in 0..n_samples {
        let omega = DVector::from_fn(alg.dim_g2(), |_, _| normal.sample(&mut rng));
        let data = spectral_decompose(alg, metric, &omega, DEFAULT_CLUSTER_TOL)?;
        if data.kernel_dim < d {
            d = data.kernel_dim;
            h_bar = data.h();
        } else if data.kernel_dim == d {
            h_bar = h_bar.max(data.h());
        }
    }
    if (alg.dim_g1() - d) % 2 != 0 {
        return Err(Error::Divergence(
            "generic kernel codimension is odd; rank tolerance misjudged".into(),
        ));
    }
    Ok(GroupClassification {
        d,
        h_bar,
        n1: (alg.dim_g1() - d) / 2,
        is_mw_plus: d == 0,
        samples_used: n_samples,
        seed,
    })
}

/// Membership in the degeneracy variety `W`: kernel dimension above the
/// generic value under rank tolerance `tol` (relative to the largest
/// singular value).
pub fn in_w(
    alg: &StratifiedAlgebra,
    metric: &MetricForm,
    omega: &DVector<f64>,
    class: &GroupClassification,
    tol: f64,
) -> Result<bool> {
    let s = s_matrix(alg, metric, omega)?;
    let (svals, _) = singular_data(&s);
    let smax = svals.first().copied().unwrap_or(0.0);
    let kernel = svals.iter().filter(|&&v| v <= tol * smax.max(1e-300)).count();
    Ok(kernel > class.d)
}

/// Membership in the generic open stratum: off `W` and with the maximal
/// distinct-eigenvalue count.
pub fn in_omega(
    alg: &StratifiedAlgebra,
    metric: &MetricForm,
    omega: &DVector<f64>,
    class: &GroupClassification,
    tol: f64,
) -> Result<bool> {
    if in_w(alg, metric, omega, class, tol)? {
        return Ok(false);
    }
    let data = spectral_decompose(alg, metric, omega, tol)?;
    Ok(data.h() == class.h_bar)
}

/// The component maps `x_{0,omega} = P_0 x` and
/// `x_{h,omega} = sqrt(mu_h) P_h x`, with `|x_omega|` in the `Q_hat`
/// norm.
#[derive(Debug, Clone)]
pub struct ComponentDecomposition {
    pub x0: DVector<f64>,
    pub xh: Vec<DVector<f64>>,
    pub norm_x_omega: f64,
}

pub fn component_map(
    data: &OmegaSpectralData,
    metric: &MetricForm,
    x: &DVector<f64>,
) -> Result<ComponentDecomposition> {
    if x.len() != metric.dim() || x.len() != data.p0.nrows() {
        return Err(Error::dim("vector dimension must equal dim_g1"));
    }
    let x0 = &data.p0 * x;
    let mut xh = Vec::with_capacity(data.h());
    let mut norm_sq = 0.0;
    for (p, &m) in data.projectors.iter().zip(&data.mu) {
        let comp = m.sqrt() * (p * x);
        norm_sq += metric.norm_sq(&comp);
        xh.push(comp);
    }
    Ok(ComponentDecomposition {
        x0,
        xh,
        norm_x_omega: norm_sq.sqrt(),
    })
}

/// `(-J_{Q,omega}^2)^(1/4) x`, the continuous extension of
/// `sum_h x_{h,omega}` across the degeneracy variety.
pub fn fourth_root_map(
    alg: &StratifiedAlgebra,
    metric: &MetricForm,
    omega: &DVector<f64>,
    x: &DVector<f64>,
) -> Result<DVector<f64>> {
    if x.len() != alg.dim_g1() {
        return Err(Error::dim("vector dimension must equal dim_g1"));
    }
    let s = s_matrix(alg, metric, omega)?;
    let (svals, vecs) = singular_data(&s);
    let d = DMatrix::from_diagonal(&DVector::from_iterator(
        svals.len(),
        svals.iter().map(|v| v.sqrt()),
    ));
    let root = metric.q_sqrt() * &vecs * d * vecs.transpose() * metric.q_inv_sqrt();
    Ok(root * x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn random_spd(n: usize, rng: &mut ChaCha8Rng) -> MetricForm {
        let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
        let q = &a * a.transpose() + DMatrix::identity(n, n) * 0.5;
        MetricForm::new(q).unwrap()
    }

    fn random_omega(n: usize, rng: &mut ChaCha8Rng) -> DVector<f64> {
        DVector::from_fn(n, |_, _| rng.random_range(-2.0..2.0))
    }

    #[test]
    fn b_omega_structure_and_linearity() {
        let alg = StratifiedAlgebra::free_2step(3).unwrap();
        let zero = b_omega(&alg, &DVector::zeros(3)).unwrap();
        assert_eq!(zero.norm(), 0.0);
        // lexicographic pair order: e1 <-> (1,2), e2 <-> (1,3), e3 <-> (2,3)
        let b1 = b_omega(&alg, &DVector::from_vec(vec![1.0, 0.0, 0.0])).unwrap();
        assert_eq!(b1[(0, 1)], 1.0);
        assert_eq!(b1[(1, 0)], -1.0);
        assert_eq!(b1.norm(), 2.0f64.sqrt());
        let b3 = b_omega(&alg, &DVector::from_vec(vec![0.0, 0.0, 1.0])).unwrap();
        assert_eq!(b3[(1, 2)], 1.0);

        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (o1, o2) = (random_omega(3, &mut rng), random_omega(3, &mut rng));
        let lhs = b_omega(&alg, &(&o1 + &o2)).unwrap();
        let rhs = b_omega(&alg, &o1).unwrap() + b_omega(&alg, &o2).unwrap();
        assert_eq!((lhs - rhs).norm(), 0.0);
    }

    #[test]
    fn j_matrix_is_q_hat_skew_adjoint() {
        let alg = StratifiedAlgebra::free_2step(3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..20 {
            let metric = random_spd(3, &mut rng);
            let omega = random_omega(3, &mut rng);
            let j = j_matrix(&alg, &metric, &omega).unwrap();
            let resid = metric.q_hat() * &j + j.transpose() * metric.q_hat();
            assert!(resid.norm() < 1e-12 * j.norm().max(1.0));
        }
        let id = MetricForm::identity(3);
        let omega = DVector::from_vec(vec![0.3, -0.4, 0.9]);
        let j = j_matrix(&alg, &id, &omega).unwrap();
        let b = b_omega(&alg, &omega).unwrap();
        assert_eq!((j - b).norm(), 0.0);
        assert_eq!(
            j_matrix(&alg, &id, &DVector::zeros(3)).unwrap().norm(),
            0.0
        );
    }

    #[test]
    fn free3_spectral_closed_form() {
        let alg = StratifiedAlgebra::free_2step(3).unwrap();
        let metric = MetricForm::identity(3);
        for omega_vec in [vec![0.0, 0.0, 1.0], vec![0.0, 0.0, 5.0]] {
            let omega = DVector::from_vec(omega_vec);
            let data = spectral_decompose(&alg, &metric, &omega, 1e-8).unwrap();
            let r = omega.norm();
            assert_eq!(data.mu.len(), 1);
            assert_relative_eq!(data.mu[0], r, max_relative = 1e-12);
            assert_eq!(data.mult, vec![1]);
            assert_eq!(data.kernel_dim, 1);
            assert_relative_eq!(data.pfaff, r, max_relative = 1e-12);
            assert_relative_eq!(data.ground_norm, r, max_relative = 1e-12);
        }
    }

    #[test]
    fn spectral_decompose_at_zero() {
        let alg = StratifiedAlgebra::free_2step(3).unwrap();
        let metric = MetricForm::identity(3);
        let data = spectral_decompose(&alg, &metric, &DVector::zeros(3), 1e-8).unwrap();
        assert_eq!(data.h(), 0);
        assert_eq!(data.kernel_dim, 3);
        assert_eq!(data.pfaff, 1.0);
        assert_eq!(data.ground_norm, 0.0);
        assert!((data.p0 - DMatrix::identity(3, 3)).norm() < 1e-14);
    }

    /// All OmegaSpectralData invariants over seeded random triples.
    #[test]
    fn spectral_invariants_on_random_triples() {
        let groups = [
            StratifiedAlgebra::free_2step(3).unwrap(),
            StratifiedAlgebra::h1xr(),
            StratifiedAlgebra::free_2step(4).unwrap(),
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mut count = 0;
        while count < 100 {
            let alg = &groups[count % groups.len()];
            let n = alg.dim_g1();
            let metric = random_spd(n, &mut rng);
            let omega = random_omega(alg.dim_g2(), &mut rng);
            let data = spectral_decompose(alg, &metric, &omega, 1e-8).unwrap();
            let tol = 1e-9;

            // resolution of the identity
            let mut sum = data.p0.clone();
            for p in &data.projectors {
                sum += p;
            }
            assert!((sum - DMatrix::identity(n, n)).norm() < tol);

            // idempotent, Q_hat-self-adjoint, mutually annihilating
            let mut all: Vec<&DMatrix<f64>> = data.projectors.iter().collect();
            all.push(&data.p0);
            for (a, p) in all.iter().enumerate() {
                assert!((*p * *p - *p).norm() < tol);
                let adj = p.transpose() * metric.q_hat() - metric.q_hat() * *p;
                assert!(adj.norm() < tol * metric.q_hat().norm());
                for (b, q) in all.iter().enumerate() {
                    if a != b {
                        assert!((*p * *q).norm() < tol);
                    }
                }
            }

            // traces count pair multiplicities
            for (p, &m) in data.projectors.iter().zip(&data.mult) {
                assert!((p.trace() - 2.0 * m as f64).abs() < 1e-8);
            }

            // sum_h mu_h P_h = |J| in operator norm
            let j = j_matrix(alg, &metric, &omega).unwrap();
            let s = metric.q_sqrt() * b_omega(alg, &omega).unwrap() * metric.q_sqrt();
            let abs_j = {
                let (svals, vecs) = singular_data(&s);
                let d = DMatrix::from_diagonal(&DVector::from_vec(svals));
                metric.q_sqrt() * &vecs * d * vecs.transpose() * metric.q_inv_sqrt()
            };
            let mut recon = DMatrix::zeros(n, n);
            for (p, &m) in data.projectors.iter().zip(&data.mu) {
                recon += m * p;
            }
            assert!((recon - abs_j).norm() < 1e-8 * (1.0 + j.norm()));

            // pfaffian and ground norm identities
            let pf: f64 = data
                .mu
                .iter()
                .zip(&data.mult)
                .map(|(m, &k)| m.powi(k as i32))
                .product();
            assert_relative_eq!(data.pfaff, pf, max_relative = 1e-12);
            let nuclear = ground_norm_extended(alg, &metric, &omega).unwrap();
            assert_relative_eq!(data.ground_norm, nuclear, epsilon = 1e-9, max_relative = 1e-9);
            count += 1;
        }
    }

    #[test]
    fn homogeneity_in_omega() {
        let alg = StratifiedAlgebra::free_2step(3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let metric = random_spd(3, &mut rng);
        let omega = random_omega(3, &mut rng);
        let base = spectral_decompose(&alg, &metric, &omega, 1e-8).unwrap();
        for &r in &[0.25, 3.0] {
            let scaled = spectral_decompose(&alg, &metric, &(r * &omega), 1e-8).unwrap();
            assert_eq!(scaled.h(), base.h());
            for (a, b) in scaled.mu.iter().zip(&base.mu) {
                assert_relative_eq!(*a, r * b, max_relative = 1e-10);
            }
            for (pa, pb) in scaled.projectors.iter().zip(&base.projectors) {
                assert!((pa - pb).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn cluster_tolerance_stability() {
        let alg = StratifiedAlgebra::free_2step(4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..10 {
            let metric = random_spd(4, &mut rng);
            let omega = random_omega(6, &mut rng);
            let a = spectral_decompose(&alg, &metric, &omega, 1e-8).unwrap();
            let b = spectral_decompose(&alg, &metric, &omega, 1e-9).unwrap();
            assert!((a.pfaff - b.pfaff).abs() <= 1e-8 * (1.0 + a.pfaff));
            assert!((a.ground_norm - b.ground_norm).abs() <= 1e-8 * (1.0 + a.ground_norm));
        }
    }

    #[test]
    fn ground_norm_extended_is_a_norm() {
        let alg = StratifiedAlgebra::free_2step(3).unwrap();
        let metric = MetricForm::identity(3);
        assert_eq!(
            ground_norm_extended(&alg, &metric, &DVector::zeros(3)).unwrap(),
            0.0
        );
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..30 {
            let o1 = random_omega(3, &mut rng);
            let o2 = random_omega(3, &mut rng);
            let n1 = ground_norm_extended(&alg, &metric, &o1).unwrap();
            let n2 = ground_norm_extended(&alg, &metric, &o2).unwrap();
            let ns = ground_norm_extended(&alg, &metric, &(&o1 + &o2)).unwrap();
            assert!(ns <= n1 + n2 + 1e-12);
            assert!(n1 > 0.0);
            // free 2-step on 3 generators: N(omega) = |omega|
            assert_relative_eq!(n1, o1.norm(), max_relative = 1e-10);
        }
    }

    #[test]
    fn classification_of_reference_groups() {
        let metric2 = MetricForm::identity(2);
        let h1 = StratifiedAlgebra::heisenberg();
        let c = classify_group(&h1, &metric2, 32, 7).unwrap();
        assert_eq!(c.d, 0);
        assert!(c.is_mw_plus);

        let f3 = StratifiedAlgebra::free_2step(3).unwrap();
        let c = classify_group(&f3, &MetricForm::identity(3), 32, 7).unwrap();
        assert_eq!((c.d, c.h_bar, c.n1), (1, 1, 1));
        assert!(!c.is_mw_plus);

        let h1xr = StratifiedAlgebra::h1xr();
        let c = classify_group(&h1xr, &MetricForm::identity(3), 32, 7).unwrap();
        assert_eq!(c.d, 1);
        assert!(!c.is_mw_plus);

        let ab = StratifiedAlgebra::abelian(2).unwrap();
        let c = classify_group(&ab, &MetricForm::identity(2), 32, 7).unwrap();
        assert_eq!((c.d, c.h_bar), (2, 0));
        assert!(!c.is_mw_plus);

        let f4 = StratifiedAlgebra::free_2step(4).unwrap();
        let c = classify_group(&f4, &MetricForm::identity(4), 32, 7).unwrap();
        assert_eq!(c.d, 0);
        assert!(c.is_mw_plus);
    }

    #[test]
    fn w_and_omega_membership() {
        let f3 = StratifiedAlgebra::free_2step(3).unwrap();
        let metric = MetricForm::identity(3);
        let class = classify_group(&f3, &metric, 32, 7).unwrap();
        let zero = DVector::zeros(3);
        assert!(in_w(&f3, &metric, &zero, &class, 1e-6).unwrap());
        let omega = DVector::from_vec(vec![0.4, -0.1, 0.8]);
        assert!(!in_w(&f3, &metric, &omega, &class, 1e-6).unwrap());
        assert!(in_omega(&f3, &metric, &omega, &class, 1e-6).unwrap());

        let f4 = StratifiedAlgebra::free_2step(4).unwrap();
        let m4 = MetricForm::identity(4);
        let class4 = classify_group(&f4, &m4, 32, 7).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let omega = random_omega(6, &mut rng);
        assert!(!in_w(&f4, &m4, &omega, &class4, 1e-6).unwrap());
    }

    #[test]
    fn component_map_examples() {
        let alg = StratifiedAlgebra::free_2step(3).unwrap();
        let metric = MetricForm::identity(3);
        let omega = DVector::from_vec(vec![0.0, 0.0, 1.0]);
        let data = spectral_decompose(&alg, &metric, &omega, 1e-8).unwrap();

        let zero = DVector::zeros(3);
        let c = component_map(&data, &metric, &zero).unwrap();
        assert_eq!(c.norm_x_omega, 0.0);
        assert_eq!(c.x0.norm(), 0.0);

        // omega = e3 pairs (2,3): B has kernel e1, so P0 = e1 e1^T and
        // P1 projects onto span(e2, e3).
        let x = DVector::from_vec(vec![0.0, 1.0, 0.0]);
        let c = component_map(&data, &metric, &x).unwrap();
        assert!(c.x0.norm() < 1e-12);
        assert_relative_eq!(c.norm_x_omega, 1.0, max_relative = 1e-12);

        // x in range(P0): x0 = x, no oscillating part
        let x = DVector::from_vec(vec![1.0, 0.0, 0.0]);
        let c = component_map(&data, &metric, &x).unwrap();
        assert!((c.x0.clone() - &x).norm() < 1e-12);
        assert!(c.norm_x_omega < 1e-12);
    }

    #[test]
    fn fourth_root_map_agrees_and_extends() {
        let alg = StratifiedAlgebra::free_2step(3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let metric = random_spd(3, &mut rng);
        assert_eq!(
            fourth_root_map(&alg, &metric, &DVector::zeros(3), &random_omega(3, &mut rng))
                .map(|v| v.norm())
                .unwrap(),
            0.0
        );
        for _ in 0..20 {
            let omega = random_omega(3, &mut rng);
            let x = random_omega(3, &mut rng);
            let data = spectral_decompose(&alg, &metric, &omega, 1e-8).unwrap();
            let comp = component_map(&data, &metric, &x).unwrap();
            let mut sum = DVector::zeros(3);
            for v in &comp.xh {
                sum += v;
            }
            let direct = fourth_root_map(&alg, &metric, &omega, &x).unwrap();
            assert!((direct - sum).norm() < 1e-10);
        }
        // continuity into the variety: along omega(s) = (s, 0, 0) the map
        // vanishes like sqrt(|s|)
        let metric = MetricForm::identity(3);
        let x = DVector::from_vec(vec![1.0, 1.0, 1.0]);
        let mut prev = f64::INFINITY;
        for &s in &[1e-2, 1e-4, 1e-6, 1e-8] {
            let omega = DVector::from_vec(vec![s, 0.0, 0.0]);
            let v = fourth_root_map(&alg, &metric, &omega, &x).unwrap().norm();
            assert!(v < prev);
            prev = v;
        }
        assert!(prev < 1e-3);
    }

    #[test]
    fn metric_form_rejects_bad_input() {
        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, -0.5, 1.0]);
        assert!(MetricForm::new(asym).is_err());
        let indef = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(MetricForm::new(indef).is_err());
    }
}
