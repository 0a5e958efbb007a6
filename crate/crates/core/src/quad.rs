//! Gaussian quadrature rules (Golub-Welsch) and compensated summation.
//!
//! Two weight families are needed here: Gauss-Legendre for the omega
//! integrals over boxes in the second-layer dual, and Gauss-Jacobi with
//! weight `lambda^(d/2-1)` for the radial lambda integral that the
//! degenerate directions produce. Nodes and weights come from the
//! symmetric tridiagonal Jacobi matrix of the orthogonal-polynomial
//! recurrence; weights are `mu0 * v[0]^2` per eigenpair.

use nalgebra::DMatrix;
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

/// One-dimensional quadrature rule: paired nodes and weights.
#[derive(Debug, Clone)]
pub struct Rule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Rule {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Integrates `f` against the rule with compensated summation.
    pub fn integrate(&self, mut f: impl FnMut(f64) -> f64) -> f64 {
        let mut acc = KahanSum::new();
        for (&x, &w) in self.nodes.iter().zip(&self.weights) {
            acc.add(w * f(x));
        }
        acc.sum()
    }
}

/// Eigen-decomposes a symmetric tridiagonal matrix given by its diagonal
/// and off-diagonal, returning (nodes, first components squared) sorted
/// by node.
fn golub_welsch(diag: &[f64], off: &[f64], mu0: f64) -> Rule {
    let n = diag.len();
    let m = DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            diag[i]
        } else if j + 1 == i || i + 1 == j {
            off[i.min(j)]
        } else {
            0.0
        }
    });
    let eig = m.symmetric_eigen();
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|k| {
            let v0 = eig.eigenvectors[(0, k)];
            (eig.eigenvalues[k], mu0 * v0 * v0)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    Rule {
        nodes: pairs.iter().map(|p| p.0).collect(),
        weights: pairs.iter().map(|p| p.1).collect(),
    }
}

/// Gauss-Legendre rule on [-1, 1].
pub fn gauss_legendre(n: usize) -> Result<Rule> {
    if n == 0 {
        return Err(Error::invalid("quadrature order must be >= 1"));
    }
    let diag = vec![0.0; n];
    let off: Vec<f64> = (1..n)
        .map(|k| {
            let k = k as f64;
            k / ((2.0 * k - 1.0) * (2.0 * k + 1.0)).sqrt()
        })
        .collect();
    Ok(golub_welsch(&diag, &off, 2.0))
}

/// Gauss-Legendre rule mapped to [lo, hi].
pub fn gauss_legendre_on(n: usize, lo: f64, hi: f64) -> Result<Rule> {
    if !(hi > lo) {
        return Err(Error::invalid(format!(
            "degenerate interval [{lo}, {hi}]"
        )));
    }
    let base = gauss_legendre(n)?;
    let half = 0.5 * (hi - lo);
    let mid = 0.5 * (hi + lo);
    Ok(Rule {
        nodes: base.nodes.iter().map(|x| mid + half * x).collect(),
        weights: base.weights.iter().map(|w| w * half).collect(),
    })
}

/// Gauss-Jacobi rule on [-1, 1] for the weight (1-x)^a (1+x)^b, a, b > -1.
pub fn gauss_jacobi(n: usize, a: f64, b: f64) -> Result<Rule> {
    if n == 0 {
        return Err(Error::invalid("quadrature order must be >= 1"));
    }
    if a <= -1.0 || b <= -1.0 {
        return Err(Error::invalid("Jacobi exponents must exceed -1"));
    }
    let mut diag = vec![0.0; n];
    diag[0] = (b - a) / (a + b + 2.0);
    for k in 1..n {
        let k = k as f64;
        diag[k as usize] =
            (b * b - a * a) / ((2.0 * k + a + b) * (2.0 * k + a + b + 2.0));
    }
    let mut off = vec![0.0; n.saturating_sub(1)];
    if n > 1 {
        off[0] = 2.0 / (a + b + 2.0) * ((a + 1.0) * (b + 1.0) / (a + b + 3.0)).sqrt();
        for k in 2..n {
            let kf = k as f64;
            off[k - 1] = 2.0 / (2.0 * kf + a + b)
                * (kf * (kf + a) * (kf + b) * (kf + a + b)
                    / ((2.0 * kf + a + b + 1.0) * (2.0 * kf + a + b - 1.0)))
                    .sqrt();
        }
    }
    // mu0 = 2^(a+b+1) B(a+1, b+1)
    let mu0 = (std::f64::consts::LN_2 * (a + b + 1.0) + ln_gamma(a + 1.0)
        + ln_gamma(b + 1.0)
        - ln_gamma(a + b + 2.0))
        .exp();
    Ok(golub_welsch(&diag, &off, mu0))
}

/// Rule for `integral_0^cut f(lambda) lambda^beta_exp dlambda`, the Jacobi
/// weight absorbed into the weights.
pub fn jacobi_radial(n: usize, beta_exp: f64, cut: f64) -> Result<Rule> {
    if !(cut > 0.0) {
        return Err(Error::invalid("lambda cut must be positive"));
    }
    let base = gauss_jacobi(n, 0.0, beta_exp)?;
    let scale = (0.5 * cut).powf(beta_exp + 1.0);
    Ok(Rule {
        nodes: base.nodes.iter().map(|x| 0.5 * cut * (x + 1.0)).collect(),
        weights: base.weights.iter().map(|w| w * scale).collect(),
    })
}

/// Gauss-Legendre on [lo, hi], split at 0 when the interval straddles it.
///
/// Splitting keeps nodes off the degeneracy variety through the origin and
/// restores spectral convergence for integrands with a conical kink there
/// (|omega|-type factors). `n` is the total node count for the axis.
pub fn split_axis_rule(n: usize, lo: f64, hi: f64) -> Result<Rule> {
    if lo < 0.0 && hi > 0.0 {
        let n_neg = (n / 2).max(1);
        let n_pos = (n - n_neg).max(1);
        let left = gauss_legendre_on(n_neg, lo, 0.0)?;
        let right = gauss_legendre_on(n_pos, 0.0, hi)?;
        let mut nodes = left.nodes;
        nodes.extend(right.nodes);
        let mut weights = left.weights;
        weights.extend(right.weights);
        Ok(Rule { nodes, weights })
    } else {
        gauss_legendre_on(n, lo, hi)
    }
}

/// Kahan-Babuska compensated accumulator; summation order is part of the
/// determinism contract, so every quadrature loop uses a fixed ordering.
#[derive(Debug, Clone, Copy, Default)]
pub struct KahanSum {
    sum: f64,
    comp: f64,
}

impl KahanSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub fn sum(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Iterates the multi-indices of a tensor grid in row-major order.
pub fn for_each_multi_index(dims: &[usize], mut f: impl FnMut(&[usize])) {
    if dims.iter().any(|&d| d == 0) {
        return;
    }
    let mut idx = vec![0usize; dims.len()];
    loop {
        f(&idx);
        // advance row-major: last axis fastest
        let mut axis = dims.len();
        loop {
            if axis == 0 {
                return;
            }
            axis -= 1;
            idx[axis] += 1;
            if idx[axis] < dims[axis] {
                break;
            }
            idx[axis] = 0;
            if axis == 0 {
                return;
            }
        }
    }
}

/// Evenly spaced closed grid with `n >= 2` points on [lo, hi].
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![0.5 * (lo + hi)];
    }
    let h = (hi - lo) / (n - 1) as f64;
    (0..n).map(|i| lo + h * i as f64).collect()
}
