//! Laguerre polynomials, the normalized Bessel radial profile, vector
//! binomials and the matrix-coefficient formulas of the inversion and
//! trace identities.
//!
//! The radial profile is
//!
//! ```text
//! Phi_d(x) = Gamma(d/2) J_{d/2-1}(x) / (x/2)^(d/2-1)
//!          = Gamma(d/2) sum_k (-1)^k x^(2k) / (4^k k! Gamma(k + d/2)),
//! ```
//!
//! the spherical average of the characters over the degenerate
//! directions; `Phi_d(0) = 1` and `|Phi_d| <= 1`. The alternating series
//! loses roughly `x/2` digits to cancellation, so past `x = 12` the
//! profile is evaluated through Bessel functions instead: half-integer
//! orders (odd `d`) through spherical Bessel recurrences, integer orders
//! (even `d`) through the classical rational/asymptotic approximations
//! for `J_0`, `J_1` plus upward recurrence, which is stable here because
//! the order stays far below the argument.

use num_complex::Complex64;
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::spectral::{component_map, MetricForm, OmegaSpectralData};

/// Multi-index gamma in N^h for the spectral sheets.
pub type GammaIndex = Vec<usize>;

const PHI_SERIES_SWITCH: f64 = 12.0;
const PHI_SERIES_MAX_TERMS: usize = 40;

/// Generalized Laguerre polynomial `Lambda^m_gamma(x)` by the upward
/// three-term recurrence in the degree (stable for `x >= 0`).
pub fn laguerre(m: usize, gamma: usize, x: f64) -> f64 {
    let m = m as f64;
    if gamma == 0 {
        return 1.0;
    }
    let mut prev = 1.0;
    let mut cur = 1.0 + m - x;
    for k in 1..gamma {
        let kf = k as f64;
        let next = ((2.0 * kf + 1.0 + m - x) * cur - (kf + m) * prev) / (kf + 1.0);
        prev = cur;
        cur = next;
    }
    cur
}

/// All degrees `0..=gamma_max` at once; the kernels consume whole rows.
pub fn laguerre_row(m: usize, gamma_max: usize, x: f64) -> Vec<f64> {
    let mut row = Vec::with_capacity(gamma_max + 1);
    row.push(1.0);
    if gamma_max == 0 {
        return row;
    }
    let m = m as f64;
    row.push(1.0 + m - x);
    for k in 1..gamma_max {
        let kf = k as f64;
        let next = ((2.0 * kf + 1.0 + m - x) * row[k] - (kf + m) * row[k - 1]) / (kf + 1.0);
        row.push(next);
    }
    row
}

/// Reference evaluation by the defining sum
/// `sum_j binom(gamma+m, gamma-j) (-x)^j / j!`. Returns the value and
/// the sum of term magnitudes, which bounds the attainable absolute
/// accuracy of *any* double-precision evaluation of the alternating sum.
pub fn laguerre_explicit_sum(m: usize, gamma: usize, x: f64) -> (f64, f64) {
    let mut value = 0.0;
    let mut scale = 0.0;
    for j in 0..=gamma {
        let ln_binom = ln_gamma((gamma + m + 1) as f64)
            - ln_gamma((gamma - j + 1) as f64)
            - ln_gamma((m + j + 1) as f64);
        let ln_fact = ln_gamma((j + 1) as f64);
        let mag = (ln_binom - ln_fact + (j as f64) * x.max(1e-300).ln()).exp();
        let term = if x == 0.0 && j > 0 { 0.0 } else { mag };
        let signed = if j % 2 == 0 { term } else { -term };
        value += signed;
        scale += term;
    }
    (value, scale)
}

fn gamma_fn(x: f64) -> f64 {
    statrs::function::gamma::gamma(x)
}

/// `J_0(x)` for `x >= 12` (classical rational/asymptotic approximation).
fn bessel_j0_large(x: f64) -> f64 {
    let z = 8.0 / x;
    let y = z * z;
    let p = 1.0
        + y * (-0.1098628627e-2
            + y * (0.2734510407e-4 + y * (-0.2073370639e-5 + y * 0.2093887211e-6)));
    let q = -0.1562499995e-1
        + y * (0.1430488765e-3
            + y * (-0.6911147651e-5 + y * (0.7621095161e-6 + y * -0.934935152e-7)));
    let xx = x - 0.785398164;
    (0.636619772 / x).sqrt() * (xx.cos() * p - z * xx.sin() * q)
}

/// `J_1(x)` for `x >= 12`.
fn bessel_j1_large(x: f64) -> f64 {
    let z = 8.0 / x;
    let y = z * z;
    let p = 1.0
        + y * (0.183105e-2
            + y * (-0.3516396496e-4 + y * (0.2457520174e-5 + y * -0.240337019e-6)));
    let q = 0.04687499995
        + y * (-0.2002690873e-3
            + y * (0.8449199096e-5 + y * (-0.88228987e-6 + y * 0.105787412e-6)));
    let xx = x - 2.356194491;
    (0.636619772 / x).sqrt() * (xx.cos() * p - z * xx.sin() * q)
}

/// Normalized Bessel radial profile `Phi_d`. Requires `d >= 1`,
/// `x >= 0`.
pub fn phi_d(d: usize, x: f64) -> f64 {
    assert!(d >= 1, "phi_d requires d >= 1");
    assert!(x >= 0.0, "phi_d requires x >= 0");
    if x <= PHI_SERIES_SWITCH {
        // normalized series: t_0 = 1, t_{k+1} = t_k * (-x^2/4) / ((k+1)(k + d/2))
        let x2_4 = 0.25 * x * x;
        let half_d = 0.5 * d as f64;
        let mut term = 1.0;
        let mut sum = 1.0;
        for k in 0..PHI_SERIES_MAX_TERMS {
            let kf = k as f64;
            term *= -x2_4 / ((kf + 1.0) * (kf + half_d));
            sum += term;
            if term.abs() < 1e-18 * sum.abs().max(1.0) {
                break;
            }
        }
        return sum;
    }
    if d % 2 == 1 {
        // odd d = 2l + 1: Phi_d(x) = (2l-1)!! x^(1-l) j_{l-1}(x)
        let l = (d - 1) / 2;
        let (sin_x, cos_x) = x.sin_cos();
        let mut j_prev = cos_x / x; // j_{-1}
        let mut j_cur = sin_x / x; // j_0
        if l == 0 {
            return x * j_prev; // cos x
        }
        for k in 0..(l - 1) {
            let next = (2.0 * k as f64 + 1.0) / x * j_cur - j_prev;
            j_prev = j_cur;
            j_cur = next;
        }
        let double_fact: f64 = (1..=l).map(|k| (2 * k - 1) as f64).product();
        double_fact * x.powi(1 - l as i32) * j_cur
    } else {
        // even d: integer order n = d/2 - 1, upward recurrence from J0, J1
        let n = d / 2 - 1;
        let j = match n {
            0 => bessel_j0_large(x),
            1 => bessel_j1_large(x),
            _ => {
                let mut jm = bessel_j0_large(x);
                let mut jc = bessel_j1_large(x);
                for k in 1..n {
                    let next = 2.0 * k as f64 / x * jc - jm;
                    jm = jc;
                    jc = next;
                }
                jc
            }
        };
        gamma_fn(0.5 * d as f64) * (2.0 / x).powi(n as i32) * j
    }
}

/// `prod_h binom(n1[h] + gamma[h] - 1, gamma[h])`, computed in log space.
pub fn vector_binomial(n1: &[usize], gamma: &[usize]) -> Result<f64> {
    if n1.len() != gamma.len() {
        return Err(Error::dim("multiplicity and gamma index lengths differ"));
    }
    if n1.iter().any(|&n| n == 0) {
        return Err(Error::invalid("multiplicities must be positive"));
    }
    let mut ln = 0.0;
    for (&n, &g) in n1.iter().zip(gamma) {
        if n == 1 || g == 0 {
            continue; // binom(g, g) = binom(n-1, 0) = 1
        }
        ln += ln_gamma((n + g) as f64) - ln_gamma((g + 1) as f64) - ln_gamma(n as f64);
    }
    let v = ln.exp();
    // binomials are integers; snap when representable exactly
    if v < 9.0e15 {
        let r = v.round();
        if (v - r).abs() < 1e-6 * r.max(1.0) {
            return Ok(r);
        }
    }
    Ok(v)
}

/// Normalized matrix coefficient
/// `tr(pi_{omega,tau}(x,t)^* P_gamma) / tr(P_gamma)`:
///
/// ```text
/// e^(-|x_omega|^2/4 + i tau(x_0) + i omega(t))
///     prod_h Lambda^{n_h - 1}_{gamma_h}(|x_h|^2 / 2) / binom(n_h + gamma_h - 1, gamma_h)
/// ```
///
/// The normalization makes the value at the identity exactly 1 for
/// every sheet. `tau` is projected onto the range of `P_0` if it is
/// not already there.
pub fn trace_coefficient(
    data: &OmegaSpectralData,
    metric: &MetricForm,
    gamma: &[usize],
    x: &nalgebra::DVector<f64>,
    t: &nalgebra::DVector<f64>,
    tau: &nalgebra::DVector<f64>,
) -> Result<Complex64> {
    if gamma.len() != data.h() {
        return Err(Error::dim("gamma index length must equal h(omega)"));
    }
    if t.len() != data.omega.len() {
        return Err(Error::dim("t length must equal dim_g2"));
    }
    if tau.len() != x.len() {
        return Err(Error::dim("tau and x must share the first-layer dimension"));
    }
    let comp = component_map(data, metric, x)?;
    let tau_proj = &data.p0 * tau;
    let phase = metric.pair(&tau_proj, &comp.x0) + data.omega.dot(t);
    let mut magnitude = (-0.25 * comp.norm_x_omega * comp.norm_x_omega).exp();
    for (h, (&g, xh)) in gamma.iter().zip(&comp.xh).enumerate() {
        let arg = 0.5 * metric.norm_sq(xh);
        let norm = vector_binomial(&[data.mult[h]], &[g])?;
        magnitude *= laguerre(data.mult[h] - 1, g, arg) / norm;
    }
    Ok(Complex64::from_polar(1.0, phase) * magnitude)
}

/// The sphere average of [`trace_coefficient`] over `tau` on the radius
/// `s` sphere in the range of `P_0`: the oscillating factor
/// `e^(i tau(x_0))` collapses to `Phi_d(s |x_0|)`.
pub fn sphere_averaged_coefficient(
    data: &OmegaSpectralData,
    metric: &MetricForm,
    gamma: &[usize],
    x: &nalgebra::DVector<f64>,
    t: &nalgebra::DVector<f64>,
    s: f64,
    d: usize,
) -> Result<Complex64> {
    if gamma.len() != data.h() {
        return Err(Error::dim("gamma index length must equal h(omega)"));
    }
    if s < 0.0 {
        return Err(Error::invalid("sphere radius must be non-negative"));
    }
    let comp = component_map(data, metric, x)?;
    let x0_norm = metric.norm_sq(&comp.x0).sqrt();
    let mut magnitude =
        (-0.25 * comp.norm_x_omega * comp.norm_x_omega).exp() * phi_d(d, s * x0_norm);
    for (h, (&g, xh)) in gamma.iter().zip(&comp.xh).enumerate() {
        let arg = 0.5 * metric.norm_sq(xh);
        let norm = vector_binomial(&[data.mult[h]], &[g])?;
        magnitude *= laguerre(data.mult[h] - 1, g, arg) / norm;
    }
    Ok(Complex64::from_polar(1.0, data.omega.dot(t)) * magnitude)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::group::StratifiedAlgebra;
    use crate::spectral::spectral_decompose;
    use approx::assert_relative_eq;
    use nalgebra::DVector;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn laguerre_low_degrees() {
        for &(m, x) in &[(0usize, 0.3), (2, 1.7), (5, 10.0)] {
            assert_eq!(laguerre(m, 0, x), 1.0);
        }
        assert_relative_eq!(laguerre(0, 1, 0.4), 1.0 - 0.4);
        assert_relative_eq!(laguerre(1, 1, 0.4), 2.0 - 0.4);
    }

    #[test]
    fn laguerre_recurrence_matches_explicit_sum() {
        let xs: Vec<f64> = (0..=50).map(|i| i as f64 * 2.0).collect();
        for m in 0..=10 {
            for gamma in 0..=20 {
                for &x in &xs {
                    let rec = laguerre(m, gamma, x);
                    let (sum, scale) = laguerre_explicit_sum(m, gamma, x);
                    assert!(
                        (rec - sum).abs() <= 1e-10 * scale.max(1.0),
                        "m={m} gamma={gamma} x={x}: {rec} vs {sum} (scale {scale})"
                    );
                }
            }
        }
    }

    #[test]
    fn laguerre_row_consistent() {
        let row = laguerre_row(3, 15, 7.5);
        for (g, &v) in row.iter().enumerate() {
            assert_relative_eq!(v, laguerre(3, g, 7.5), max_relative = 1e-12);
        }
    }

    /// `|e^{-x/2} Lambda^m_gamma(x)| <= binom(gamma+m, gamma)`, the bound
    /// that makes the kernel gamma-sums convergent.
    #[test]
    fn laguerre_weighted_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        for _ in 0..500 {
            let m = rng.random_range(0..6usize);
            let gamma = rng.random_range(0..25usize);
            let x: f64 = rng.random_range(0.0..200.0);
            let bound = vector_binomial(&[m + 1], &[gamma]).unwrap();
            let v = ((-0.5 * x).exp() * laguerre(m, gamma, x)).abs();
            assert!(v <= bound * (1.0 + 1e-9), "m={m} g={gamma} x={x}: {v} > {bound}");
        }
    }

    #[test]
    fn phi_matches_trig_closed_forms() {
        let mut x = 0.0;
        while x <= 50.0 {
            let c = phi_d(1, x);
            assert!((c - x.cos()).abs() <= 1e-10, "phi_1({x}) = {c}");
            let s = phi_d(3, x);
            let sinc = if x == 0.0 { 1.0 } else { x.sin() / x };
            assert!((s - sinc).abs() <= 1e-10, "phi_3({x}) = {s}");
            x += 0.0917;
        }
    }

    #[test]
    fn phi_at_zero_and_bounded() {
        for d in 1..=6 {
            assert_eq!(phi_d(d, 0.0), 1.0);
            let mut x = 0.0;
            while x <= 1000.0 {
                let v = phi_d(d, x);
                assert!(v.abs() <= 1.0 + 1e-12, "phi_{d}({x}) = {v}");
                x += 0.37;
            }
        }
    }

    #[test]
    fn phi_series_asymptotic_seam() {
        // the two evaluation routes must agree where they meet
        for d in 1..=6 {
            for &x in &[11.9, 12.0, 12.1] {
                let series = {
                    let x2_4 = 0.25 * x * x;
                    let half_d = 0.5 * d as f64;
                    let mut term = 1.0f64;
                    let mut sum = 1.0;
                    for k in 0..60 {
                        let kf = k as f64;
                        term *= -x2_4 / ((kf + 1.0) * (kf + half_d));
                        sum += term;
                    }
                    sum
                };
                assert!(
                    (phi_d(d, x) - series).abs() < 2e-7,
                    "seam mismatch d={d} x={x}: {} vs {series}",
                    phi_d(d, x)
                );
            }
        }
    }

    #[test]
    fn vector_binomial_examples() {
        assert_eq!(vector_binomial(&[3, 2], &[0, 0]).unwrap(), 1.0);
        for k in 0..10 {
            assert_relative_eq!(vector_binomial(&[1], &[k]).unwrap(), 1.0, max_relative = 1e-12);
        }
        assert_relative_eq!(vector_binomial(&[2], &[3]).unwrap(), 4.0, max_relative = 1e-12);
        assert!(vector_binomial(&[1, 2], &[0]).is_err());
        assert!(vector_binomial(&[0], &[1]).is_err());
    }

    fn free3_data() -> (StratifiedAlgebra, MetricForm, OmegaSpectralData) {
        let alg = StratifiedAlgebra::free_2step(3).unwrap();
        let metric = MetricForm::identity(3);
        let omega = DVector::from_vec(vec![0.3, -0.9, 0.5]);
        let data = spectral_decompose(&alg, &metric, &omega, 1e-8).unwrap();
        (alg, metric, data)
    }

    #[test]
    fn trace_coefficient_normalization() {
        let (_, metric, data) = free3_data();
        let zero3 = DVector::zeros(3);
        for g in 0..6 {
            let v = trace_coefficient(&data, &metric, &[g], &zero3, &zero3, &zero3).unwrap();
            assert!((v - Complex64::new(1.0, 0.0)).norm() < 1e-13);
        }
    }

    #[test]
    fn trace_coefficient_gamma_zero_is_gaussian_phase() {
        let (_, metric, data) = free3_data();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..20 {
            let x = DVector::from_fn(3, |_, _| rng.random_range(-2.0..2.0));
            let t = DVector::from_fn(3, |_, _| rng.random_range(-2.0..2.0));
            let tau_raw = DVector::from_fn(3, |_, _| rng.random_range(-2.0..2.0));
            let v = trace_coefficient(&data, &metric, &[0], &x, &t, &tau_raw).unwrap();
            let comp = component_map(&data, &metric, &x).unwrap();
            let tau = &data.p0 * &tau_raw;
            let expected = Complex64::from_polar(
                (-0.25 * comp.norm_x_omega.powi(2)).exp(),
                metric.pair(&tau, &comp.x0) + data.omega.dot(&t),
            );
            assert!((v - expected).norm() < 1e-12);
            // at t = 0, tau = 0 the value is the plain Gaussian
            let v0 = trace_coefficient(&data, &metric, &[0], &x, &DVector::zeros(3), &DVector::zeros(3))
                .unwrap();
            assert!(v0.im.abs() < 1e-15);
            assert_relative_eq!(
                v0.re,
                (-0.25 * comp.norm_x_omega.powi(2)).exp(),
                max_relative = 1e-12
            );
        }
    }

    #[test]
    fn sphere_average_reduces_to_trace_at_s_zero() {
        let (_, metric, data) = free3_data();
        let x = DVector::from_vec(vec![0.7, -0.4, 1.1]);
        let t = DVector::from_vec(vec![0.2, 0.0, -0.5]);
        let a = sphere_averaged_coefficient(&data, &metric, &[2], &x, &t, 0.0, 1).unwrap();
        let b = trace_coefficient(&data, &metric, &[2], &x, &t, &DVector::zeros(3)).unwrap();
        assert!((a - b).norm() < 1e-13);
        let identity =
            sphere_averaged_coefficient(&data, &metric, &[3], &DVector::zeros(3), &DVector::zeros(3), 1.7, 1)
                .unwrap();
        assert!((identity - Complex64::new(1.0, 0.0)).norm() < 1e-13);
    }

    /// Monte Carlo oracle: the sphere average over explicitly sampled
    /// tau equals the Phi_d reduction. On a group with d = 1 the sphere
    /// is the two-point set {+-s e}, so the oracle is exact.
    #[test]
    fn sphere_average_against_monte_carlo() {
        let (_, metric, data) = free3_data();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let x = DVector::from_vec(vec![1.2, -0.3, 0.8]);
        let t = DVector::from_vec(vec![0.1, 0.4, -0.2]);
        let s = 1.3;
        // unit vector spanning range(P0), Q_hat-normalized
        let seed_vec = DVector::from_vec(vec![1.0, 1.0, 1.0]);
        let dir = {
            let v = &data.p0 * seed_vec;
            let n = metric.norm_sq(&v).sqrt();
            v / n
        };
        let mut acc = Complex64::new(0.0, 0.0);
        let n_samples = 10_000;
        for _ in 0..n_samples {
            let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            let tau = (sign * s) * &dir;
            acc += trace_coefficient(&data, &metric, &[1], &x, &t, &tau).unwrap();
        }
        let mc = acc / n_samples as f64;
        let formula = sphere_averaged_coefficient(&data, &metric, &[1], &x, &t, s, 1).unwrap();
        assert!(
            (mc - formula).norm() <= 1e-3 * formula.norm().max(1e-3),
            "MC {mc} vs formula {formula}"
        );
    }
}
