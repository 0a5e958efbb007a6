//! 2-step stratified Lie algebras and their groups in exponential
//! coordinates.
//!
//! An algebra is stored through its structure constants `c[k][i][j]`,
//! the k-th second-layer coordinate of `[X_i, X_j]`. For 2-step groups
//! the Baker-Campbell-Hausdorff series terminates at the bracket term,
//! so the group law below is exact:
//!
//! ```text
//! (x1, t1)(x2, t2) = (x1 + x2, t1 + t2 + [x1, x2]/2)
//! ```
//!
//! Dilations act by `r.(x, t) = (r x, r^2 t)` and the homogeneous
//! dimension is `dim g1 + 2 dim g2`.

use nalgebra::{DMatrix, DVector};
use serde::Deserialize;
use std::path::Path;

use crate::error::{Error, Result};
use crate::spectral::MetricForm;

/// A 2-step stratified Lie algebra given by structure constants.
#[derive(Debug, Clone)]
pub struct StratifiedAlgebra {
    name: String,
    dim_g1: usize,
    dim_g2: usize,
    /// One antisymmetric `dim_g1 x dim_g1` matrix per second-layer
    /// coordinate; entry `(i, j)` is `c[k][i][j]`.
    structure: Vec<DMatrix<f64>>,
}

/// A group element `(x, t)` identified with `exp(x + t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupPoint {
    pub x: DVector<f64>,
    pub t: DVector<f64>,
}

/// An element `(x, s)` of the quotient group `G_omega`, `s` the
/// `omega(t)` coordinate.
#[derive(Debug, Clone, PartialEq)]
pub struct QuotientPoint {
    pub x: DVector<f64>,
    pub s: f64,
}

impl GroupPoint {
    pub fn new(x: Vec<f64>, t: Vec<f64>) -> Self {
        GroupPoint {
            x: DVector::from_vec(x),
            t: DVector::from_vec(t),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.x.iter().all(|v| v.is_finite()) && self.t.iter().all(|v| v.is_finite())
    }
}

impl StratifiedAlgebra {
    /// Builds an algebra from sparse structure entries `(k, i, j, value)`
    /// with `i < j` (0-based); the antisymmetric completion is automatic.
    pub fn new(
        name: impl Into<String>,
        dim_g1: usize,
        dim_g2: usize,
        entries: &[(usize, usize, usize, f64)],
    ) -> Result<Self> {
        if dim_g1 == 0 {
            return Err(Error::invalid("dim_g1 must be positive"));
        }
        let mut structure = vec![DMatrix::zeros(dim_g1, dim_g1); dim_g2];
        for &(k, i, j, v) in entries {
            if k >= dim_g2 || i >= dim_g1 || j >= dim_g1 {
                return Err(Error::invalid(format!(
                    "structure entry ({k}, {i}, {j}) out of range"
                )));
            }
            if i >= j {
                return Err(Error::invalid(format!(
                    "structure entries must have i < j, got ({i}, {j})"
                )));
            }
            if structure[k][(i, j)] != 0.0 {
                return Err(Error::invalid(format!(
                    "duplicate structure entry ({k}, {i}, {j})"
                )));
            }
            structure[k][(i, j)] = v;
            structure[k][(j, i)] = -v;
        }
        let alg = StratifiedAlgebra {
            name: name.into(),
            dim_g1,
            dim_g2,
            structure,
        };
        alg.validate()?;
        Ok(alg)
    }

    /// The free 2-step nilpotent algebra on `d_gen` generators; the
    /// second-layer basis is indexed by the pairs `(i, j)`, `i < j`, in
    /// lexicographic order, with `[X_i, X_j] = T_(i,j)`.
    pub fn free_2step(d_gen: usize) -> Result<Self> {
        if d_gen < 2 {
            return Err(Error::invalid("free 2-step algebra needs at least 2 generators"));
        }
        let dim_g2 = d_gen * (d_gen - 1) / 2;
        let mut entries = Vec::with_capacity(dim_g2);
        let mut k = 0;
        for i in 0..d_gen {
            for j in (i + 1)..d_gen {
                entries.push((k, i, j, 1.0));
                k += 1;
            }
        }
        StratifiedAlgebra::new(format!("free2step:{d_gen}"), d_gen, dim_g2, &entries)
    }

    /// The abelian algebra R^n (trivial second layer).
    pub fn abelian(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("abelian algebra needs dim >= 1"));
        }
        StratifiedAlgebra::new(format!("abelian:{n}"), n, 0, &[])
    }

    /// The 3-dimensional Heisenberg algebra.
    pub fn heisenberg() -> Self {
        let mut alg = Self::free_2step(2).expect("free_2step(2) is valid");
        alg.name = "heisenberg".into();
        alg
    }

    /// Heisenberg x R with the Euclidean factor in the first layer.
    pub fn h1xr() -> Self {
        let mut alg = Self::product(&Self::heisenberg(), &Self::abelian(1).unwrap());
        alg.name = "h1xr".into();
        alg
    }

    /// Direct product, block-diagonal structure tensor.
    pub fn product(a: &StratifiedAlgebra, b: &StratifiedAlgebra) -> Self {
        let dim_g1 = a.dim_g1 + b.dim_g1;
        let dim_g2 = a.dim_g2 + b.dim_g2;
        let mut structure = vec![DMatrix::zeros(dim_g1, dim_g1); dim_g2];
        for k in 0..a.dim_g2 {
            for i in 0..a.dim_g1 {
                for j in 0..a.dim_g1 {
                    structure[k][(i, j)] = a.structure[k][(i, j)];
                }
            }
        }
        for k in 0..b.dim_g2 {
            for i in 0..b.dim_g1 {
                for j in 0..b.dim_g1 {
                    structure[a.dim_g2 + k][(a.dim_g1 + i, a.dim_g1 + j)] =
                        b.structure[k][(i, j)];
                }
            }
        }
        StratifiedAlgebra {
            name: format!("product:[{},{}]", a.name, b.name),
            dim_g1,
            dim_g2,
            structure,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim_g1(&self) -> usize {
        self.dim_g1
    }

    pub fn dim_g2(&self) -> usize {
        self.dim_g2
    }

    /// Homogeneous dimension `dim g1 + 2 dim g2`.
    pub fn hom_dim(&self) -> usize {
        self.dim_g1 + 2 * self.dim_g2
    }

    pub fn structure(&self) -> &[DMatrix<f64>] {
        &self.structure
    }

    /// Checks antisymmetry and the stratification condition
    /// `[g1, g1] = g2` (the bracket images span the second layer).
    pub fn validate(&self) -> Result<()> {
        for (k, c) in self.structure.iter().enumerate() {
            for i in 0..self.dim_g1 {
                for j in 0..self.dim_g1 {
                    if (c[(i, j)] + c[(j, i)]).abs() > 0.0 {
                        return Err(Error::invalid(format!(
                            "structure tensor not antisymmetric at (k={k}, i={i}, j={j})"
                        )));
                    }
                }
            }
        }
        if self.stratification_rank() != self.dim_g2 {
            return Err(Error::invalid(
                "stratification fails: bracket images do not span the second layer",
            ));
        }
        Ok(())
    }

    /// Rank of the matrix whose rows are the bracket images
    /// `([X_i, X_j]_k)_k` over the pairs `i < j`.
    pub fn stratification_rank(&self) -> usize {
        if self.dim_g2 == 0 {
            return 0;
        }
        let pairs = self.dim_g1 * (self.dim_g1 - 1) / 2;
        let mut m = DMatrix::zeros(pairs.max(1), self.dim_g2);
        let mut row = 0;
        for i in 0..self.dim_g1 {
            for j in (i + 1)..self.dim_g1 {
                for k in 0..self.dim_g2 {
                    m[(row, k)] = self.structure[k][(i, j)];
                }
                row += 1;
            }
        }
        let svd = m.svd(false, false);
        let tol = 1e-10 * svd.singular_values.max().max(1.0);
        svd.singular_values.iter().filter(|&&s| s > tol).count()
    }

    /// The second-layer valued bracket `[x1, x2]`.
    pub fn bracket(&self, x1: &DVector<f64>, x2: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(self.dim_g2, |k, _| (x1.transpose() * &self.structure[k] * x2)[(0, 0)])
    }

    fn check_point(&self, p: &GroupPoint) -> Result<()> {
        if p.x.len() != self.dim_g1 || p.t.len() != self.dim_g2 {
            return Err(Error::dim(format!(
                "point has layers ({}, {}), group expects ({}, {})",
                p.x.len(),
                p.t.len(),
                self.dim_g1,
                self.dim_g2
            )));
        }
        Ok(())
    }

    pub fn identity(&self) -> GroupPoint {
        GroupPoint {
            x: DVector::zeros(self.dim_g1),
            t: DVector::zeros(self.dim_g2),
        }
    }

    /// The exact BCH product for 2-step groups.
    pub fn multiply(&self, p: &GroupPoint, q: &GroupPoint) -> Result<GroupPoint> {
        self.check_point(p)?;
        self.check_point(q)?;
        let x = &p.x + &q.x;
        let t = &p.t + &q.t + 0.5 * self.bracket(&p.x, &q.x);
        Ok(GroupPoint { x, t })
    }

    pub fn inverse(&self, p: &GroupPoint) -> Result<GroupPoint> {
        self.check_point(p)?;
        Ok(GroupPoint {
            x: -&p.x,
            t: -&p.t,
        })
    }

    /// Parabolic dilation `r.(x, t) = (r x, r^2 t)`, `r > 0`.
    pub fn dilate(&self, r: f64, p: &GroupPoint) -> Result<GroupPoint> {
        if !(r > 0.0) {
            return Err(Error::invalid(format!("dilation factor must be positive, got {r}")));
        }
        self.check_point(p)?;
        Ok(GroupPoint {
            x: r * &p.x,
            t: (r * r) * &p.t,
        })
    }

    /// `|x|_2 + |t|_2^(1/2)`: symmetric, 1-homogeneous under dilations.
    pub fn homogeneous_norm(&self, p: &GroupPoint) -> f64 {
        p.x.norm() + p.t.norm().sqrt()
    }

    /// Projection `pi_omega(x, t) = (x, omega(t))` onto the quotient
    /// `G_omega`.
    pub fn project_quotient(&self, omega: &DVector<f64>, p: &GroupPoint) -> Result<QuotientPoint> {
        self.check_point(p)?;
        if omega.len() != self.dim_g2 {
            return Err(Error::dim("omega length must equal dim_g2"));
        }
        Ok(QuotientPoint {
            x: p.x.clone(),
            s: omega.dot(&p.t),
        })
    }

    /// The product on `G_omega`, using the scalar form
    /// `B_omega(x1, x2) = <omega, [x1, x2]>`.
    pub fn quotient_multiply(
        &self,
        omega: &DVector<f64>,
        a: &QuotientPoint,
        b: &QuotientPoint,
    ) -> Result<QuotientPoint> {
        if omega.len() != self.dim_g2 {
            return Err(Error::dim("omega length must equal dim_g2"));
        }
        if a.x.len() != self.dim_g1 || b.x.len() != self.dim_g1 {
            return Err(Error::dim("quotient point has wrong first-layer dimension"));
        }
        let b_omega = omega.dot(&self.bracket(&a.x, &b.x));
        Ok(QuotientPoint {
            x: &a.x + &b.x,
            s: a.s + b.s + 0.5 * b_omega,
        })
    }

    /// Parses builtin group names: `free2step:N`, `heisenberg`, `h1xr`,
    /// `abelian:N`, `product:[a,b,...]`.
    pub fn parse_builtin(spec: &str) -> Result<StratifiedAlgebra> {
        let spec = spec.trim();
        if let Some(rest) = spec.strip_prefix("free2step:") {
            let d: usize = rest
                .parse()
                .map_err(|_| Error::invalid(format!("bad generator count in {spec:?}")))?;
            return StratifiedAlgebra::free_2step(d);
        }
        if let Some(rest) = spec.strip_prefix("abelian:") {
            let d: usize = rest
                .parse()
                .map_err(|_| Error::invalid(format!("bad dimension in {spec:?}")))?;
            return StratifiedAlgebra::abelian(d);
        }
        if spec == "heisenberg" {
            return Ok(StratifiedAlgebra::heisenberg());
        }
        if spec == "h1xr" {
            return Ok(StratifiedAlgebra::h1xr());
        }
        if let Some(rest) = spec.strip_prefix("product:") {
            let inner = rest
                .strip_prefix('[')
                .and_then(|s| s.strip_suffix(']'))
                .ok_or_else(|| Error::invalid(format!("product spec needs brackets: {spec:?}")))?;
            let parts = split_top_level(inner);
            if parts.len() < 2 {
                return Err(Error::invalid("product needs at least two factors"));
            }
            let mut acc = StratifiedAlgebra::parse_builtin(parts[0])?;
            for part in &parts[1..] {
                acc = StratifiedAlgebra::product(&acc, &StratifiedAlgebra::parse_builtin(part)?);
            }
            return Ok(acc);
        }
        Err(Error::invalid(format!("unknown builtin group {spec:?}")))
    }
}

fn split_top_level(s: &str) -> Vec<&str> {
    let mut parts = Vec::new();
    let mut depth = 0usize;
    let mut start = 0usize;
    for (i, ch) in s.char_indices() {
        match ch {
            '[' => depth += 1,
            ']' => depth = depth.saturating_sub(1),
            ',' if depth == 0 => {
                parts.push(s[start..i].trim());
                start = i + 1;
            }
            _ => {}
        }
    }
    parts.push(s[start..].trim());
    parts
}

// ---------------------------------------------------------------------
// Group definition files

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct GroupFileRaw {
    name: String,
    dim_g1: usize,
    dim_g2: usize,
    structure: Vec<(usize, usize, usize, f64)>,
    #[serde(rename = "Q")]
    q: QFieldRaw,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum QFieldRaw {
    Named(String),
    RowMajor(Vec<f64>),
}

/// Loads a JSON group definition: structure entries are 1-based
/// `[k, i, j, value]` with `i < j`; `"Q"` is `"identity"` or a row-major
/// `dim_g1 x dim_g1` matrix.
pub fn load_definition_str(json: &str) -> Result<(StratifiedAlgebra, MetricForm)> {
    let raw: GroupFileRaw =
        serde_json::from_str(json).map_err(|e| Error::GroupFile(e.to_string()))?;
    let entries: Vec<(usize, usize, usize, f64)> = raw
        .structure
        .iter()
        .map(|&(k, i, j, v)| {
            if k == 0 || i == 0 || j == 0 {
                return Err(Error::GroupFile(
                    "structure indices are 1-based; found a 0".into(),
                ));
            }
            Ok((k - 1, i - 1, j - 1, v))
        })
        .collect::<Result<_>>()?;
    let alg = StratifiedAlgebra::new(raw.name, raw.dim_g1, raw.dim_g2, &entries)
        .map_err(|e| Error::GroupFile(e.to_string()))?;
    let q = match raw.q {
        QFieldRaw::Named(s) if s == "identity" => DMatrix::identity(raw.dim_g1, raw.dim_g1),
        QFieldRaw::Named(s) => {
            return Err(Error::GroupFile(format!("unknown Q spec {s:?}")));
        }
        QFieldRaw::RowMajor(vals) => {
            if vals.len() != raw.dim_g1 * raw.dim_g1 {
                return Err(Error::GroupFile(format!(
                    "Q needs {} entries, got {}",
                    raw.dim_g1 * raw.dim_g1,
                    vals.len()
                )));
            }
            DMatrix::from_row_slice(raw.dim_g1, raw.dim_g1, &vals)
        }
    };
    let metric = MetricForm::new(q).map_err(|e| Error::GroupFile(e.to_string()))?;
    Ok((alg, metric))
}

pub fn load_definition(path: impl AsRef<Path>) -> Result<(StratifiedAlgebra, MetricForm)> {
    let text = std::fs::read_to_string(path)?;
    load_definition_str(&text)
}
