//! Bounded spectral multipliers on the frequency space `E = R^(1+n2)`.
//!
//! Builtin families are Schwartz-type in the first variable so the
//! gamma-sums and lambda-integrals of the transforms can be truncated by
//! an explicit tail bound; grid multipliers are compactly supported by
//! construction.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A real-valued multiplier `m(lambda, zeta)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum MultiplierSpec {
    /// `e^(-a lambda)`, `a > 0`.
    Heat { a: f64 },
    /// `e^(-a lambda - b |zeta|^2)`, `a > 0`, `b >= 0`.
    Gauss { a: f64, b: f64 },
    /// `p(lambda, zeta) e^(-a lambda - b |zeta|^2)`.
    PolyGauss {
        a: f64,
        b: f64,
        terms: Vec<PolyTerm>,
    },
    /// Tensor-grid samples with multilinear interpolation, zero outside
    /// the box. Axis 0 is lambda, axes 1.. are the zeta coordinates.
    Grid(GridMultiplier),
    /// `m(r^2 lambda, r^2 zeta)`: the multiplier precomposed with the
    /// dilation of weight 2 on every frequency coordinate.
    Dilated { r: f64, inner: Box<MultiplierSpec> },
}

/// One monomial `coef * lambda^lambda_pow * prod_k zeta_k^zeta_pows[k]`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PolyTerm {
    pub coef: f64,
    pub lambda_pow: u32,
    pub zeta_pows: Vec<u32>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridMultiplier {
    /// Row-major values over the tensor grid.
    pub values: Vec<f64>,
    /// Points per axis (first axis lambda).
    pub dims: Vec<usize>,
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl GridMultiplier {
    fn validate(&self) -> Result<()> {
        let d = self.dims.len();
        if d == 0 || self.lo.len() != d || self.hi.len() != d {
            return Err(Error::invalid("grid multiplier axes are inconsistent"));
        }
        if self.dims.iter().any(|&n| n < 2) {
            return Err(Error::invalid("grid multiplier needs >= 2 points per axis"));
        }
        if self.lo.iter().zip(&self.hi).any(|(l, h)| !(h > l)) {
            return Err(Error::invalid("grid multiplier box is degenerate"));
        }
        if self.values.len() != self.dims.iter().product::<usize>() {
            return Err(Error::invalid("grid multiplier value count mismatch"));
        }
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("grid multiplier values must be finite"));
        }
        Ok(())
    }

    fn eval(&self, point: &[f64]) -> f64 {
        let d = self.dims.len();
        debug_assert_eq!(point.len(), d);
        // zero outside the box
        for k in 0..d {
            if point[k] < self.lo[k] || point[k] > self.hi[k] {
                return 0.0;
            }
        }
        // multilinear interpolation
        let mut base = vec![0usize; d];
        let mut frac = vec![0.0f64; d];
        for k in 0..d {
            let h = (self.hi[k] - self.lo[k]) / (self.dims[k] - 1) as f64;
            let s = (point[k] - self.lo[k]) / h;
            let i = (s.floor() as usize).min(self.dims[k] - 2);
            base[k] = i;
            frac[k] = s - i as f64;
        }
        let mut acc = 0.0;
        for corner in 0..(1usize << d) {
            let mut w = 1.0;
            let mut idx = 0usize;
            for k in 0..d {
                let up = (corner >> k) & 1 == 1;
                w *= if up { frac[k] } else { 1.0 - frac[k] };
                idx = idx * self.dims[k] + base[k] + up as usize;
            }
            acc += w * self.values[idx];
        }
        acc
    }
}

impl MultiplierSpec {
    pub fn heat(a: f64) -> Self {
        MultiplierSpec::Heat { a }
    }

    pub fn gauss(a: f64, b: f64) -> Self {
        MultiplierSpec::Gauss { a, b }
    }

    /// Checks the declared decay needed by the transforms.
    pub fn validate(&self) -> Result<()> {
        match self {
            MultiplierSpec::Heat { a } => {
                if !(*a > 0.0) {
                    return Err(Error::invalid("heat multiplier needs a > 0"));
                }
            }
            MultiplierSpec::Gauss { a, b } => {
                if !(*a > 0.0) || *b < 0.0 {
                    return Err(Error::invalid("gauss multiplier needs a > 0, b >= 0"));
                }
            }
            MultiplierSpec::PolyGauss { a, b, terms } => {
                if !(*a > 0.0) || *b < 0.0 {
                    return Err(Error::invalid("poly-gauss multiplier needs a > 0, b >= 0"));
                }
                if terms.is_empty() {
                    return Err(Error::invalid("poly-gauss multiplier needs monomials"));
                }
                if terms.iter().any(|t| !t.coef.is_finite()) {
                    return Err(Error::invalid("poly-gauss coefficients must be finite"));
                }
            }
            MultiplierSpec::Grid(g) => g.validate()?,
            MultiplierSpec::Dilated { r, inner } => {
                if !(*r > 0.0) {
                    return Err(Error::invalid("dilation factor must be positive"));
                }
                inner.validate()?;
            }
        }
        Ok(())
    }

    pub fn eval(&self, lambda: f64, zeta: &[f64]) -> f64 {
        match self {
            MultiplierSpec::Heat { a } => (-a * lambda).exp(),
            MultiplierSpec::Gauss { a, b } => {
                let z2: f64 = zeta.iter().map(|z| z * z).sum();
                (-a * lambda - b * z2).exp()
            }
            MultiplierSpec::PolyGauss { a, b, terms } => {
                let z2: f64 = zeta.iter().map(|z| z * z).sum();
                let mut p = 0.0;
                for term in terms {
                    let mut v = term.coef * lambda.powi(term.lambda_pow as i32);
                    for (k, &pw) in term.zeta_pows.iter().enumerate() {
                        if pw > 0 {
                            v *= zeta.get(k).copied().unwrap_or(0.0).powi(pw as i32);
                        }
                    }
                    p += v;
                }
                p * (-a * lambda - b * z2).exp()
            }
            MultiplierSpec::Grid(g) => {
                let mut point = Vec::with_capacity(1 + zeta.len());
                point.push(lambda);
                point.extend_from_slice(zeta);
                g.eval(&point)
            }
            MultiplierSpec::Dilated { r, inner } => {
                let r2 = r * r;
                let scaled: Vec<f64> = zeta.iter().map(|z| r2 * z).collect();
                inner.eval(r2 * lambda, &scaled)
            }
        }
    }

    /// Precomposition with the frequency dilation `r . (lambda, zeta) =
    /// (r^2 lambda, r^2 zeta)`.
    pub fn dilate(&self, r: f64) -> Result<MultiplierSpec> {
        if !(r > 0.0) {
            return Err(Error::invalid("dilation factor must be positive"));
        }
        Ok(MultiplierSpec::Dilated {
            r,
            inner: Box::new(self.clone()),
        })
    }

    /// An upper bound for `sup_zeta |m(lambda', zeta)|` over
    /// `lambda' >= lambda` (monotone decreasing envelope).
    pub fn envelope(&self, lambda: f64) -> f64 {
        match self {
            MultiplierSpec::Heat { a } | MultiplierSpec::Gauss { a, .. } => {
                (-a * lambda.max(0.0)).exp()
            }
            MultiplierSpec::PolyGauss { a, b: _, terms } => {
                // bound each |coef| lambda^p e^{-a lambda} by its maximum over
                // [lambda, inf): decreasing once lambda >= p/a
                let zeta_bound = 1.0f64; // refined by lambda_tail_bound callers
                let mut total = 0.0;
                for term in terms {
                    let p = term.lambda_pow as f64;
                    let peak = p / a;
                    let at = lambda.max(0.0).max(peak);
                    let zp: u32 = term.zeta_pows.iter().sum();
                    total += term.coef.abs()
                        * at.powf(p)
                        * (-a * at).exp()
                        * zeta_bound.powi(zp as i32)
                        * if lambda >= peak { 1.0 } else { 1.0 };
                }
                total
            }
            MultiplierSpec::Grid(g) => {
                if lambda > g.hi[0] {
                    0.0
                } else {
                    g.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
                }
            }
            MultiplierSpec::Dilated { r, inner } => inner.envelope(r * r * lambda),
        }
    }

    /// Smallest lambda beyond which the envelope stays below `eps`.
    /// Grid multipliers return their box end. For the Schwartz-type
    /// builtins this is closed-form or a doubling search.
    pub fn lambda_tail_bound(&self, eps: f64) -> f64 {
        match self {
            MultiplierSpec::Heat { a } | MultiplierSpec::Gauss { a, .. } => {
                (-(eps.min(1.0)).ln() / a).max(1.0)
            }
            MultiplierSpec::PolyGauss { .. } => {
                let mut lam = 1.0;
                while self.envelope(lam) > eps && lam < 1e9 {
                    lam *= 1.5;
                }
                lam
            }
            MultiplierSpec::Grid(g) => g.hi[0].max(1e-6),
            MultiplierSpec::Dilated { r, inner } => inner.lambda_tail_bound(eps) / (r * r),
        }
    }

    /// Global bound `sup |m|` (used for divergence checks).
    pub fn sup_bound(&self) -> f64 {
        match self {
            MultiplierSpec::Heat { .. } | MultiplierSpec::Gauss { .. } => 1.0,
            MultiplierSpec::PolyGauss { .. } => self.envelope(0.0).max(1.0),
            MultiplierSpec::Grid(g) => g.values.iter().fold(0.0f64, |m, v| m.max(v.abs())),
            MultiplierSpec::Dilated { inner, .. } => inner.sup_bound(),
        }
    }

    /// Short CSV-friendly description.
    pub fn describe(&self) -> String {
        match self {
            MultiplierSpec::Heat { a } => format!("heat:{a}"),
            MultiplierSpec::Gauss { a, b } => format!("gauss:{a},{b}"),
            MultiplierSpec::PolyGauss { a, b, terms } => {
                format!("polygauss:{a},{b}({} terms)", terms.len())
            }
            MultiplierSpec::Grid(g) => format!("grid:{:?}", g.dims),
            MultiplierSpec::Dilated { r, inner } => format!("dilated:{r}[{}]", inner.describe()),
        }
    }
}
