//! The Plancherel integral, the kernel transform and the ground-state
//! multiplier transform.
//!
//! With `d` the generic kernel dimension, `n1 = (dim g1 - d)/2` and
//! `prefactor = pi^(d/2) / ((2 pi)^(n1+n2+d) Gamma(d/2))`, the measure
//! integral is
//!
//! ```text
//! int m dbeta = prefactor sum_gamma binom(n1+gamma-1, gamma)
//!     int_(R+ x g2*) m(mu_omega(n1+2gamma) + lambda, omega(T))
//!         lambda^(d/2-1) |Pfaff(omega)| d(lambda, omega),
//! ```
//!
//! and the kernel of `m(L_A)` is the same integral with the integrand
//! carrying the sphere-averaged matrix coefficient
//!
//! ```text
//! e^(-|x_omega|^2/4 + i omega(t))
//!     prod_h Lambda^{n_h-1}_{gamma_h}(|x_h|^2/2) Phi_d(sqrt(lambda) |x_0|),
//! ```
//!
//! whose value at gamma = 0, x = 0 reproduces the binomial weight, so
//! the two integrals share one quadrature engine: tensor Gauss-Legendre
//! in omega with every axis split at the origin (restoring spectral
//! accuracy against the conical kink of the eigenvalue branches), a
//! Gauss-Jacobi rule with weight `lambda^(d/2-1)` for the radial
//! integral, and a gamma-sum truncated where the multiplier envelope
//! falls below `gamma_epsilon`. The adjoint (multiplier) transform
//! pairs a kernel against the conjugate coefficient, so its central
//! phase is `e^(-i omega(t))`.
//!
//! Summation order is fixed (omega nodes row-major, gamma lexicographic,
//! compensated accumulation), which makes results independent of the
//! worker count.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::group::StratifiedAlgebra;
use crate::multiplier::MultiplierSpec;
use crate::quad::{jacobi_radial, linspace, split_axis_rule, KahanSum, Rule};
use crate::special::{laguerre_row, phi_d, vector_binomial};
use crate::spectral::{
    ground_norm_extended, pfaffian_extended, spectral_decompose, GroupClassification, MetricForm,
    DEFAULT_CLUSTER_TOL,
};

/// Memory budget for kernel grids.
const GRID_BUDGET_BYTES: usize = 1 << 30;

/// A point of the frequency space `E = R^(1+n2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralPoint {
    pub lambda: f64,
    pub zeta: Vec<f64>,
}

/// Deterministic integration plan for the transforms.
#[derive(Debug, Clone)]
pub struct QuadratureScheme {
    /// Bounds per second-layer dual coordinate.
    pub omega_box: Vec<(f64, f64)>,
    /// Gauss-Legendre points per omega coordinate (split at 0).
    pub omega_points: Vec<usize>,
    /// Gauss-Jacobi order for the radial lambda integral.
    pub lambda_order: usize,
    /// Truncation of the lambda integral.
    pub lambda_cut: f64,
    /// Gamma sheets are dropped once the multiplier envelope beyond
    /// their offset falls below this threshold.
    pub gamma_epsilon: f64,
    /// Box for kernel grids: `dim_g1 + dim_g2` coordinate ranges.
    pub group_box: Vec<(f64, f64)>,
    /// Grid points per group coordinate.
    pub group_points: Vec<usize>,
    /// Seed for Monte Carlo cross-checks that accompany the plan.
    pub mc_seed: u64,
}

impl QuadratureScheme {
    /// Plan for measure integrals at near machine accuracy. The tail
    /// thresholds are far below the target accuracy because the dropped
    /// mass carries the polynomial Pfaffian weight, which costs several
    /// digits relative to the bare exponential bound.
    pub fn beta_default(
        alg: &StratifiedAlgebra,
        metric: &MetricForm,
        class: &GroupClassification,
        m: &MultiplierSpec,
    ) -> Result<Self> {
        Self::with_resolution(alg, metric, class, m, 1e-12, 1e-12, 48, 28, &[], &[])
    }

    /// Plan for kernel grids: omega resolution follows the group box so
    /// the central phases stay resolved across the whole `t`-range.
    pub fn kernel_default(
        alg: &StratifiedAlgebra,
        metric: &MetricForm,
        class: &GroupClassification,
        m: &MultiplierSpec,
    ) -> Result<Self> {
        let n1 = alg.dim_g1();
        let n2 = alg.dim_g2();
        // t spacing must resolve the kernel's central-phase content
        // (~0.45 for unit heat rates); the omega count then follows the
        // t range through the Nyquist rule below.
        let (x_half, x_pts, t_half, t_pts) = if n2 >= 2 {
            (5.2, 13, 5.4, 25)
        } else {
            (6.0, 17, 8.0, 37)
        };
        let mut group_box = vec![(-x_half, x_half); n1];
        group_box.extend(vec![(-t_half, t_half); n2]);
        let mut group_points = vec![x_pts; n1];
        group_points.extend(vec![t_pts; n2]);
        let mut scheme = Self::with_resolution(
            alg,
            metric,
            class,
            m,
            1e-5,
            1e-7,
            16,
            24,
            &group_box,
            &group_points,
        )?;
        // Nyquist-style omega count: Gauss-Legendre on [-R, R] resolves
        // e^(i omega t) up to |t| ~ pi n / (2 R); add margin.
        for k in 0..n2 {
            let r = scheme.omega_box[k].1;
            let t_max = scheme.group_box[n1 + k].1;
            let need = (2.0 * r * t_max / std::f64::consts::PI * 1.32).ceil() as usize;
            scheme.omega_points[k] = (need.max(24) + need % 2).min(120);
        }
        Ok(scheme)
    }

    #[allow(clippy::too_many_arguments)]
    fn with_resolution(
        alg: &StratifiedAlgebra,
        metric: &MetricForm,
        _class: &GroupClassification,
        m: &MultiplierSpec,
        eps_box: f64,
        eps_tail: f64,
        omega_pts: usize,
        lambda_order: usize,
        group_box: &[(f64, f64)],
        group_points: &[usize],
    ) -> Result<Self> {
        m.validate()?;
        let lambda_cut = m.lambda_tail_bound(eps_tail);
        let n2 = alg.dim_g2();
        let mut omega_box = Vec::with_capacity(n2);
        if n2 > 0 {
            // smallest ground-state norm over directions bounds how far out
            // the multiplier decay reaches in omega
            let mut c_min = f64::INFINITY;
            let mut rng = ChaCha8Rng::seed_from_u64(0x9e3779b9);
            let normal = StandardNormal;
            let mut dirs: Vec<DVector<f64>> = (0..n2)
                .map(|k| {
                    let mut v = DVector::zeros(n2);
                    v[k] = 1.0;
                    v
                })
                .collect();
            for _ in 0..128 {
                let v = DVector::from_fn(n2, |_, _| normal.sample(&mut rng));
                if v.norm() > 1e-9 {
                    dirs.push(v.normalize());
                }
            }
            for u in &dirs {
                c_min = c_min.min(ground_norm_extended(alg, metric, u)?);
            }
            if !(c_min > 0.0) {
                return Err(Error::Divergence(
                    "ground-state norm vanishes on a direction; omega box unbounded".into(),
                ));
            }
            let r = 1.1 * m.lambda_tail_bound(eps_box) / c_min;
            omega_box = vec![(-r, r); n2];
        }
        Ok(QuadratureScheme {
            omega_box,
            omega_points: vec![omega_pts; n2],
            lambda_order,
            lambda_cut,
            gamma_epsilon: eps_tail,
            group_box: group_box.to_vec(),
            group_points: group_points.to_vec(),
            mc_seed: 0,
        })
    }

    fn validate_for(&self, alg: &StratifiedAlgebra, class: &GroupClassification) -> Result<()> {
        let n2 = alg.dim_g2();
        if self.omega_box.len() != n2 || self.omega_points.len() != n2 {
            return Err(Error::dim("omega plan does not match dim_g2"));
        }
        if self.omega_box.iter().any(|(l, h)| !(h > l)) {
            return Err(Error::invalid("omega box is degenerate"));
        }
        if self.omega_points.iter().any(|&n| n == 0) || self.lambda_order == 0 {
            return Err(Error::invalid("quadrature orders must be >= 1"));
        }
        if !(self.lambda_cut > 0.0) || !(self.gamma_epsilon > 0.0) {
            return Err(Error::invalid("lambda_cut and gamma_epsilon must be positive"));
        }
        if class.is_mw_plus {
            return Err(Error::MwPlusGroup(alg.name().to_string()));
        }
        Ok(())
    }

    fn validate_grid(&self, alg: &StratifiedAlgebra) -> Result<()> {
        let dim = alg.dim_g1() + alg.dim_g2();
        if self.group_box.len() != dim || self.group_points.len() != dim {
            return Err(Error::dim("group box does not match the group dimension"));
        }
        if self.group_box.iter().any(|(l, h)| !(h > l)) {
            return Err(Error::invalid("group box is degenerate"));
        }
        if self.group_points.iter().any(|&n| n < 2) {
            return Err(Error::invalid("group grid needs >= 2 points per axis"));
        }
        let cells: usize = self.group_points.iter().product();
        if cells.saturating_mul(16) > GRID_BUDGET_BYTES {
            return Err(Error::ResourceLimit(format!(
                "kernel grid of {cells} points exceeds the memory budget"
            )));
        }
        Ok(())
    }
}

// -------------------------------------------------------------------
// Shared omega-node machinery

struct OmegaNode {
    /// Indices into the (padded) per-axis rules.
    axis_idx: [usize; 3],
    /// Product Gauss-Legendre weight.
    weight: f64,
    zeta: Vec<f64>,
    /// Continuous Pfaffian weight.
    pf: f64,
    mu: Vec<f64>,
    mult: Vec<usize>,
    /// Quadratic forms giving `|x_h|^2 = x^T M_h x` and `|x_0|^2 = x^T M_0 x`.
    m_h: Vec<DMatrix<f64>>,
    m_0: DMatrix<f64>,
    /// Admissible gamma multi-indices (lexicographic) and their sheet
    /// offsets `mu_omega(n1 + 2 gamma)`.
    gammas: Vec<Vec<usize>>,
    offsets: Vec<f64>,
    /// Per-cluster maximum gamma entry, for Laguerre row lengths.
    gamma_caps: Vec<usize>,
}

fn enumerate_gammas(mu: &[f64], mult: &[usize], lam_max: f64) -> (Vec<Vec<usize>>, Vec<f64>) {
    let h = mu.len();
    let base: f64 = mu.iter().zip(mult).map(|(m, &n)| m * n as f64).sum();
    let mut gammas = Vec::new();
    let mut offsets = Vec::new();
    if base > lam_max {
        return (gammas, offsets);
    }
    let mut current = vec![0usize; h];
    fn rec(
        mu: &[f64],
        level: usize,
        used: f64,
        lam_max: f64,
        current: &mut Vec<usize>,
        gammas: &mut Vec<Vec<usize>>,
        offsets: &mut Vec<f64>,
    ) {
        if level == mu.len() {
            gammas.push(current.clone());
            offsets.push(used);
            return;
        }
        let mut g = 0usize;
        loop {
            let extra = 2.0 * mu[level] * g as f64;
            if used + extra > lam_max {
                break;
            }
            current[level] = g;
            rec(mu, level + 1, used + extra, lam_max, current, gammas, offsets);
            g += 1;
            if g > 100_000 {
                break;
            }
        }
        current[level] = 0;
    }
    rec(mu, 0, base, lam_max, &mut current, &mut gammas, &mut offsets);
    (gammas, offsets)
}

/// Axis rules padded to exactly three axes; trailing axes are trivial.
fn omega_axes(scheme: &QuadratureScheme, n2: usize) -> Result<Vec<Rule>> {
    if n2 > 3 {
        return Err(Error::Unsupported(
            "transform quadrature supports dim_g2 <= 3".into(),
        ));
    }
    let mut axes = Vec::with_capacity(3);
    for k in 0..n2 {
        axes.push(split_axis_rule(
            scheme.omega_points[k],
            scheme.omega_box[k].0,
            scheme.omega_box[k].1,
        )?);
    }
    while axes.len() < 3 {
        axes.push(Rule {
            nodes: vec![0.0],
            weights: vec![1.0],
        });
    }
    Ok(axes)
}

fn build_nodes(
    alg: &StratifiedAlgebra,
    metric: &MetricForm,
    class: &GroupClassification,
    m: &MultiplierSpec,
    scheme: &QuadratureScheme,
    axes: &[Rule],
) -> Result<Vec<OmegaNode>> {
    let n2 = alg.dim_g2();
    let lam_gamma_max = m.lambda_tail_bound(scheme.gamma_epsilon);
    let dims = [axes[0].len(), axes[1].len(), axes[2].len()];
    let total = dims[0] * dims[1] * dims[2];
    let nodes: Vec<Result<Option<OmegaNode>>> = (0..total)
        .into_par_iter()
        .map(|flat| {
            let i1 = flat / (dims[1] * dims[2]);
            let i2 = (flat / dims[2]) % dims[1];
            let i3 = flat % dims[2];
            let idx = [i1, i2, i3];
            let mut zeta = Vec::with_capacity(n2);
            let mut weight = 1.0;
            for k in 0..3 {
                weight *= axes[k].weights[idx[k]];
                if k < n2 {
                    zeta.push(axes[k].nodes[idx[k]]);
                }
            }
            let omega = DVector::from_column_slice(&zeta);
            let pf = pfaffian_extended(alg, metric, &omega, class.n1)?;
            if pf.abs() < 1e-280 && n2 > 0 {
                return Ok(None); // node sits on the degeneracy variety
            }
            let data = spectral_decompose(alg, metric, &omega, DEFAULT_CLUSTER_TOL)?;
            let (gammas, offsets) = enumerate_gammas(&data.mu, &data.mult, lam_gamma_max);
            if gammas.is_empty() {
                return Ok(None);
            }
            let mut gamma_caps = vec![0usize; data.h()];
            for g in &gammas {
                for (h, &v) in g.iter().enumerate() {
                    gamma_caps[h] = gamma_caps[h].max(v);
                }
            }
            let m_h: Vec<DMatrix<f64>> = data
                .projectors
                .iter()
                .zip(&data.mu)
                .map(|(p, &mu)| mu * p.transpose() * metric.q_hat() * p)
                .collect();
            let m_0 = data.p0.transpose() * metric.q_hat() * &data.p0;
            Ok(Some(OmegaNode {
                axis_idx: idx,
                weight,
                zeta,
                pf,
                mu: data.mu,
                mult: data.mult,
                m_h,
                m_0,
                gammas,
                offsets,
                gamma_caps,
            }))
        })
        .collect();
    let mut out = Vec::new();
    for n in nodes {
        if let Some(node) = n? {
            out.push(node);
        }
    }
    Ok(out)
}

fn beta_prefactor(class: &GroupClassification, n2: usize) -> f64 {
    let d = class.d as f64;
    let two_pi = 2.0 * std::f64::consts::PI;
    std::f64::consts::PI.powf(0.5 * d)
        / (two_pi.powi((class.n1 + n2 + class.d) as i32)
            * statrs::function::gamma::gamma(0.5 * d))
}

// -------------------------------------------------------------------
// Measure integral

/// Truncated quadrature value of `int m dbeta`.
pub fn integrate_beta(
    alg: &StratifiedAlgebra,
    metric: &MetricForm,
    class: &GroupClassification,
    m: &MultiplierSpec,
    scheme: &QuadratureScheme,
) -> Result<f64> {
    m.validate()?;
    scheme.validate_for(alg, class)?;
    let n2 = alg.dim_g2();
    let axes = omega_axes(scheme, n2)?;
    let nodes = build_nodes(alg, metric, class, m, scheme, &axes)?;
    let lam_rule = jacobi_radial(scheme.lambda_order, 0.5 * class.d as f64 - 1.0, scheme.lambda_cut)?;

    let mut total = KahanSum::new();
    for node in &nodes {
        let mut node_sum = KahanSum::new();
        for (gamma, &offset) in node.gammas.iter().zip(&node.offsets) {
            let vb = vector_binomial(&node.mult, gamma)?;
            let mut inner = 0.0;
            for (&lam, &w) in lam_rule.nodes.iter().zip(&lam_rule.weights) {
                inner += w * m.eval(offset + lam, &node.zeta);
            }
            node_sum.add(vb * inner);
        }
        total.add(node.weight * node.pf * node_sum.sum());
    }
    let value = beta_prefactor(class, n2) * total.sum();
    if !value.is_finite() {
        return Err(Error::Divergence("beta integral is not finite".into()));
    }
    Ok(value)
}

/// Spectrum membership: the joint spectrum is the cone
/// `{(lambda, zeta) : lambda >= N(zeta)}`.
pub fn spectrum_contains(
    alg: &StratifiedAlgebra,
    metric: &MetricForm,
    point: &SpectralPoint,
    tol: f64,
) -> Result<bool> {
    if point.zeta.len() != alg.dim_g2() {
        return Err(Error::dim("zeta length must equal dim_g2"));
    }
    let omega = DVector::from_column_slice(&point.zeta);
    let n = ground_norm_extended(alg, metric, &omega)?;
    Ok(point.lambda >= n - tol)
}

// -------------------------------------------------------------------
// Kernel transform

/// Tensor-grid samples of a convolution kernel on a truncated box.
#[derive(Debug, Clone)]
pub struct KernelGrid {
    pub values: Vec<Complex64>,
    /// Points per axis, first `dim_g1` axes then `dim_g2`.
    pub dims: Vec<usize>,
    pub box_bounds: Vec<(f64, f64)>,
    pub axes: Vec<Vec<f64>>,
    pub spacings: Vec<f64>,
    pub dim_g1: usize,
    /// Multiplier provenance.
    pub multiplier: String,
}

impl KernelGrid {
    pub fn cell_volume(&self) -> f64 {
        self.spacings.iter().product()
    }

    fn flat_index(&self, idx: &[usize]) -> usize {
        let mut flat = 0usize;
        for (k, &i) in idx.iter().enumerate() {
            flat = flat * self.dims[k] + i;
        }
        flat
    }

    pub fn value_at(&self, idx: &[usize]) -> Complex64 {
        self.values[self.flat_index(idx)]
    }

    pub fn point_at(&self, idx: &[usize]) -> Vec<f64> {
        idx.iter()
            .enumerate()
            .map(|(k, &i)| self.axes[k][i])
            .collect()
    }

    /// Trapezoid integral of the kernel over the box.
    pub fn integral(&self) -> Complex64 {
        let mut acc_re = KahanSum::new();
        let mut acc_im = KahanSum::new();
        let dims = self.dims.clone();
        let mut idx = vec![0usize; dims.len()];
        let total: usize = dims.iter().product();
        for flat in 0..total {
            let mut rem = flat;
            for k in (0..dims.len()).rev() {
                idx[k] = rem % dims[k];
                rem /= dims[k];
            }
            let mut w = 1.0;
            for (k, &i) in idx.iter().enumerate() {
                if i == 0 || i + 1 == dims[k] {
                    w *= 0.5;
                }
            }
            let v = self.values[flat];
            acc_re.add(w * v.re);
            acc_im.add(w * v.im);
        }
        Complex64::new(acc_re.sum(), acc_im.sum()) * self.cell_volume()
    }

    /// Largest violation of `conj(K(g^-1)) = K(g)` over the grid,
    /// relative to the largest kernel value. Requires a symmetric box
    /// (then `g -> g^-1` maps grid points to grid points).
    pub fn adjoint_residual(&self) -> Result<f64> {
        for (k, &(lo, hi)) in self.box_bounds.iter().enumerate() {
            if (lo + hi).abs() > 1e-12 * (hi - lo) {
                return Err(Error::invalid(format!(
                    "axis {k} box is not symmetric; inversion does not map the grid to itself"
                )));
            }
        }
        let total: usize = self.dims.iter().product();
        let peak = self
            .values
            .iter()
            .fold(0.0f64, |m, v| m.max(v.norm()))
            .max(1e-300);
        let mut worst = 0.0f64;
        let mut idx = vec![0usize; self.dims.len()];
        for flat in 0..total {
            let mut rem = flat;
            for k in (0..self.dims.len()).rev() {
                idx[k] = rem % self.dims[k];
                rem /= self.dims[k];
            }
            let inv: Vec<usize> = idx
                .iter()
                .enumerate()
                .map(|(k, &i)| self.dims[k] - 1 - i)
                .collect();
            let diff = (self.values[self.flat_index(&inv)].conj() - self.values[flat]).norm();
            worst = worst.max(diff / peak);
        }
        Ok(worst)
    }
}

/// Shared state for pointwise and batched kernel evaluation.
struct KernelEngine {
    nodes: Vec<OmegaNode>,
    lam_rule: Rule,
    lam_sqrt: Vec<f64>,
    pref: f64,
    d: usize,
    /// `m(offset + lambda, zeta) = zeta_factor * e^(-a lambda) e^(-a offset)`
    /// when the multiplier separates; `None` forces pointwise evaluation.
    exp_rate: Option<f64>,
}

impl KernelEngine {
    fn build(
        alg: &StratifiedAlgebra,
        metric: &MetricForm,
        class: &GroupClassification,
        m: &MultiplierSpec,
        scheme: &QuadratureScheme,
    ) -> Result<(Self, Vec<Rule>)> {
        m.validate()?;
        scheme.validate_for(alg, class)?;
        if class.d == 0 {
            return Err(Error::MwPlusGroup(alg.name().to_string()));
        }
        let n2 = alg.dim_g2();
        let axes = omega_axes(scheme, n2)?;
        let nodes = build_nodes(alg, metric, class, m, scheme, &axes)?;
        let lam_rule =
            jacobi_radial(scheme.lambda_order, 0.5 * class.d as f64 - 1.0, scheme.lambda_cut)?;
        let lam_sqrt = lam_rule.nodes.iter().map(|l| l.sqrt()).collect();
        Ok((
            KernelEngine {
                nodes,
                lam_rule,
                lam_sqrt,
                pref: beta_prefactor(class, n2),
                d: class.d,
                exp_rate: exp_separation(m),
            },
            axes,
        ))
    }

    /// The omega-node coefficient `c(omega, x)`: everything in the kernel
    /// integrand except the central phase and the prefactor.
    fn coefficient(&self, node: &OmegaNode, m: &MultiplierSpec, x: &DVector<f64>) -> f64 {
        let h = node.mu.len();
        let mut u_sum = 0.0;
        let mut rows: Vec<Vec<f64>> = Vec::with_capacity(h);
        for hh in 0..h {
            let u = 0.5 * (x.transpose() * &node.m_h[hh] * x)[(0, 0)].max(0.0);
            u_sum += u;
            rows.push(laguerre_row(node.mult[hh] - 1, node.gamma_caps[hh], u));
        }
        let gauss = (-0.5 * u_sum).exp();
        let v = (x.transpose() * &node.m_0 * x)[(0, 0)].max(0.0).sqrt();

        // radial factor per lambda node
        let nl = self.lam_rule.len();
        let mut bessel = Vec::with_capacity(nl);
        for j in 0..nl {
            bessel.push(phi_d(self.d, self.lam_sqrt[j] * v));
        }

        let mut acc = 0.0;
        if let Some(rate) = self.exp_rate {
            // separable multiplier: the lambda integral factors out
            let zeta_factor = m.eval(0.0, &node.zeta);
            let mut radial = 0.0;
            for j in 0..nl {
                radial +=
                    self.lam_rule.weights[j] * (-rate * self.lam_rule.nodes[j]).exp() * bessel[j];
            }
            for (gamma, &offset) in node.gammas.iter().zip(&node.offsets) {
                let mut lag = 1.0;
                for (hh, &g) in gamma.iter().enumerate() {
                    lag *= rows[hh][g];
                }
                acc += lag * (-rate * offset).exp();
            }
            acc *= zeta_factor * radial;
        } else {
            for (gamma, &offset) in node.gammas.iter().zip(&node.offsets) {
                let mut lag = 1.0;
                for (hh, &g) in gamma.iter().enumerate() {
                    lag *= rows[hh][g];
                }
                let mut inner = 0.0;
                for j in 0..nl {
                    inner += self.lam_rule.weights[j]
                        * m.eval(offset + self.lam_rule.nodes[j], &node.zeta)
                        * bessel[j];
                }
                acc += lag * inner;
            }
        }
        gauss * acc
    }
}

/// Multiplier separation `m(lambda, zeta) = m(0, zeta) e^(-a lambda)`.
fn exp_separation(m: &MultiplierSpec) -> Option<f64> {
    match m {
        MultiplierSpec::Heat { a } => Some(*a),
        MultiplierSpec::Gauss { a, .. } => Some(*a),
        MultiplierSpec::Dilated { r, inner } => exp_separation(inner).map(|a| a * r * r),
        _ => None,
    }
}

/// Pointwise kernel value `K(m)(x, t)`.
pub fn kernel_eval(
    alg: &StratifiedAlgebra,
    metric: &MetricForm,
    class: &GroupClassification,
    m: &MultiplierSpec,
    x: &DVector<f64>,
    t: &DVector<f64>,
    scheme: &QuadratureScheme,
) -> Result<Complex64> {
    if x.len() != alg.dim_g1() || t.len() != alg.dim_g2() {
        return Err(Error::dim("point layers do not match the group"));
    }
    let (engine, _) = KernelEngine::build(alg, metric, class, m, scheme)?;
    let mut acc_re = KahanSum::new();
    let mut acc_im = KahanSum::new();
    for node in &engine.nodes {
        let c = engine.coefficient(node, m, x) * node.weight * node.pf;
        let phase: f64 = node.zeta.iter().zip(t.iter()).map(|(z, tv)| z * tv).sum();
        acc_re.add(c * phase.cos());
        acc_im.add(c * phase.sin());
    }
    let val = Complex64::new(acc_re.sum(), acc_im.sum()) * engine.pref;
    if !val.re.is_finite() || !val.im.is_finite() {
        return Err(Error::Divergence("kernel value is not finite".into()));
    }
    Ok(val)
}

/// Batched kernel over the scheme's group box: one shared
/// omega/lambda/gamma pass, then separable contraction of the central
/// phases axis by axis.
pub fn kernel_grid(
    alg: &StratifiedAlgebra,
    metric: &MetricForm,
    class: &GroupClassification,
    m: &MultiplierSpec,
    scheme: &QuadratureScheme,
) -> Result<KernelGrid> {
    scheme.validate_grid(alg)?;
    let (engine, axes) = KernelEngine::build(alg, metric, class, m, scheme)?;
    let n1 = alg.dim_g1();
    let n2 = alg.dim_g2();

    let grid_axes: Vec<Vec<f64>> = scheme
        .group_box
        .iter()
        .zip(&scheme.group_points)
        .map(|(&(lo, hi), &n)| linspace(lo, hi, n))
        .collect();

    // flattened first-layer points
    let x_dims: Vec<usize> = scheme.group_points[..n1].to_vec();
    let n_x: usize = x_dims.iter().product();
    let mut x_points = Vec::with_capacity(n_x);
    {
        let mut idx = vec![0usize; n1];
        for flat in 0..n_x {
            let mut rem = flat;
            for k in (0..n1).rev() {
                idx[k] = rem % x_dims[k];
                rem /= x_dims[k];
            }
            x_points.push(DVector::from_fn(n1, |k, _| grid_axes[k][idx[k]]));
        }
    }

    // t axes padded to three (trivial size-1 axes carry no phase)
    let t_sizes: Vec<usize> = (0..3)
        .map(|k| {
            if k < n2 {
                scheme.group_points[n1 + k]
            } else {
                1
            }
        })
        .collect();
    let phase_tables: Vec<Vec<Complex64>> = (0..3)
        .map(|k| {
            let omega_nodes = &axes[k].nodes;
            let ts: Vec<f64> = if k < n2 {
                grid_axes[n1 + k].clone()
            } else {
                vec![0.0]
            };
            let mut table = Vec::with_capacity(omega_nodes.len() * ts.len());
            for &o in omega_nodes {
                for &tv in &ts {
                    table.push(Complex64::from_polar(1.0, o * tv));
                }
            }
            table
        })
        .collect();
    let (nt1, nt2, nt3) = (t_sizes[0], t_sizes[1], t_sizes[2]);
    let n_t = nt1 * nt2 * nt3;

    // group nodes by (i1, i2) blocks so the m-tables are built once per
    // omega node while memory stays at one x-by-t3 slab
    let mut blocks: std::collections::BTreeMap<(usize, usize), Vec<usize>> =
        std::collections::BTreeMap::new();
    for (pos, node) in engine.nodes.iter().enumerate() {
        blocks
            .entry((node.axis_idx[0], node.axis_idx[1]))
            .or_default()
            .push(pos);
    }

    let mut k_values = vec![Complex64::new(0.0, 0.0); n_x * n_t];
    let mut e_slab = vec![Complex64::new(0.0, 0.0); n_x * nt2 * nt3];
    let mut d_slab = vec![Complex64::new(0.0, 0.0); n_x * nt3];
    let mut col = vec![0.0f64; n_x];
    let mut current_i1 = usize::MAX;

    let flush_e = |k_values: &mut Vec<Complex64>, e_slab: &mut Vec<Complex64>, i1: usize| {
        if i1 == usize::MAX {
            return;
        }
        k_values
            .par_chunks_mut(n_t)
            .zip(e_slab.par_chunks(nt2 * nt3))
            .for_each(|(krow, erow)| {
                for t1 in 0..nt1 {
                    let ph = phase_tables[0][i1 * nt1 + t1];
                    for rest in 0..nt2 * nt3 {
                        krow[t1 * nt2 * nt3 + rest] += erow[rest] * ph;
                    }
                }
            });
        e_slab.iter_mut().for_each(|v| *v = Complex64::new(0.0, 0.0));
    };

    for (&(i1, i2), members) in &blocks {
        if i1 != current_i1 {
            flush_e(&mut k_values, &mut e_slab, current_i1);
            current_i1 = i1;
        }
        d_slab
            .iter_mut()
            .for_each(|v| *v = Complex64::new(0.0, 0.0));
        for &pos in members {
            let node = &engine.nodes[pos];
            let i3 = node.axis_idx[2];
            let scale = node.weight * node.pf;
            col.par_chunks_mut(512)
                .zip(x_points.par_chunks(512))
                .for_each(|(cout, xs)| {
                    for (c, x) in cout.iter_mut().zip(xs) {
                        *c = engine.coefficient(node, m, x) * scale;
                    }
                });
            d_slab
                .par_chunks_mut(nt3)
                .zip(col.par_iter())
                .for_each(|(drow, &c)| {
                    if c != 0.0 {
                        for t3 in 0..nt3 {
                            drow[t3] += phase_tables[2][i3 * nt3 + t3] * c;
                        }
                    }
                });
        }
        e_slab
            .par_chunks_mut(nt2 * nt3)
            .zip(d_slab.par_chunks(nt3))
            .for_each(|(erow, drow)| {
                for t2 in 0..nt2 {
                    let ph = phase_tables[1][i2 * nt2 + t2];
                    for t3 in 0..nt3 {
                        erow[t2 * nt3 + t3] += drow[t3] * ph;
                    }
                }
            });
    }
    flush_e(&mut k_values, &mut e_slab, current_i1);

    let pref = engine.pref;
    k_values.par_iter_mut().for_each(|v| *v *= pref);

    let spacings: Vec<f64> = scheme
        .group_box
        .iter()
        .zip(&scheme.group_points)
        .map(|(&(lo, hi), &n)| (hi - lo) / (n - 1) as f64)
        .collect();
    Ok(KernelGrid {
        values: k_values,
        dims: scheme.group_points.clone(),
        box_bounds: scheme.group_box.clone(),
        axes: grid_axes,
        spacings,
        dim_g1: n1,
        multiplier: m.describe(),
    })
}

// -------------------------------------------------------------------
// Ground-state multiplier transform

/// Recovers the multiplier at the ground-state spectral point
/// `(N(omega) + lambda_excess, omega(T))` from a kernel grid:
///
/// ```text
/// m = int_G K(x,t) e^(-|x_omega|^2/4 - i omega(t))
///         Phi_d(sqrt(lambda_excess) |x_0,omega|) d(x,t)
/// ```
///
/// (trapezoid over the grid box; the phase is conjugate to the kernel's,
/// as the transform is the adjoint pairing).
pub fn multiplier_ground(
    alg: &StratifiedAlgebra,
    metric: &MetricForm,
    class: &GroupClassification,
    grid: &KernelGrid,
    lambda_excess: f64,
    omega: &DVector<f64>,
) -> Result<Complex64> {
    if class.d == 0 {
        return Err(Error::MwPlusGroup(alg.name().to_string()));
    }
    if lambda_excess < 0.0 {
        return Err(Error::invalid("lambda_excess must be non-negative"));
    }
    if omega.len() != alg.dim_g2() || grid.dim_g1 != alg.dim_g1() {
        return Err(Error::dim("omega or grid does not match the group"));
    }
    let data = spectral_decompose(alg, metric, omega, DEFAULT_CLUSTER_TOL)?;
    let m_h: Vec<DMatrix<f64>> = data
        .projectors
        .iter()
        .zip(&data.mu)
        .map(|(p, &mu)| mu * p.transpose() * metric.q_hat() * p)
        .collect();
    let m_0 = data.p0.transpose() * metric.q_hat() * &data.p0;
    let sqrt_lam = lambda_excess.sqrt();
    let d = class.d;

    let n1 = alg.dim_g1();
    let n2 = alg.dim_g2();
    let dims = &grid.dims;
    let x_dims = &dims[..n1];
    let n_x: usize = x_dims.iter().product();
    let t_dims = &dims[n1..];
    let n_t: usize = t_dims.iter().product();

    let partials: Vec<(f64, f64)> = (0..n_x)
        .into_par_iter()
        .map(|x_flat| {
            let mut rem = x_flat;
            let mut xi = vec![0usize; n1];
            for k in (0..n1).rev() {
                xi[k] = rem % x_dims[k];
                rem /= x_dims[k];
            }
            let mut wx = 1.0;
            for (k, &i) in xi.iter().enumerate() {
                if i == 0 || i + 1 == x_dims[k] {
                    wx *= 0.5;
                }
            }
            let x = DVector::from_fn(n1, |k, _| grid.axes[k][xi[k]]);
            let mut x_omega_sq = 0.0;
            for mh in &m_h {
                x_omega_sq += (x.transpose() * mh * &x)[(0, 0)].max(0.0);
            }
            let v = (x.transpose() * &m_0 * &x)[(0, 0)].max(0.0).sqrt();
            let coeff = wx * (-0.25 * x_omega_sq).exp() * phi_d(d, sqrt_lam * v);

            let mut acc_re = KahanSum::new();
            let mut acc_im = KahanSum::new();
            let mut ti = vec![0usize; n2];
            for t_flat in 0..n_t {
                let mut rem = t_flat;
                for k in (0..n2).rev() {
                    ti[k] = rem % t_dims[k];
                    rem /= t_dims[k];
                }
                let mut wt = 1.0;
                let mut phase = 0.0;
                for (k, &i) in ti.iter().enumerate() {
                    if i == 0 || i + 1 == t_dims[k] {
                        wt *= 0.5;
                    }
                    phase += omega[k] * grid.axes[n1 + k][i];
                }
                let ph = Complex64::from_polar(1.0, -phase);
                let val = grid.values[x_flat * n_t + t_flat] * ph * wt;
                acc_re.add(val.re);
                acc_im.add(val.im);
            }
            (coeff * acc_re.sum(), coeff * acc_im.sum())
        })
        .collect();

    let mut total_re = KahanSum::new();
    let mut total_im = KahanSum::new();
    for (re, im) in partials {
        total_re.add(re);
        total_im.add(im);
    }
    Ok(Complex64::new(total_re.sum(), total_im.sum()) * grid.cell_volume())
}

/// `L^2` norm of a kernel grid: `(sum |K|^2 cell_volume)^(1/2)`.
pub fn l2_norm_group(grid: &KernelGrid) -> f64 {
    let mut acc = KahanSum::new();
    for v in &grid.values {
        acc.add(v.norm_sqr());
    }
    (acc.sum() * grid.cell_volume()).sqrt()
}

// -------------------------------------------------------------------
// Image-family spectrum check

/// Report of the properness/image sampling for a linear map on the
/// frequency space.
#[derive(Debug, Clone)]
pub struct ImageSpectrumReport {
    /// No unit-sphere point of the spectrum cone maps to zero.
    pub proper: bool,
    pub min_unit_image_norm: f64,
    /// A unit-sphere cone point with vanishing image, when not proper.
    pub witness: Option<Vec<f64>>,
    /// Images of the sampled cone points.
    pub image_points: Vec<Vec<f64>>,
    pub samples_used: usize,
}

/// Samples the spectrum cone `{lambda >= N(zeta)}` and reports whether
/// the restriction of the linear map is proper, together with the
/// sampled image. Boundary rays along the coordinate axes and the
/// lambda axis are always included.
pub fn image_spectrum_check(
    alg: &StratifiedAlgebra,
    metric: &MetricForm,
    map: &DMatrix<f64>,
    n_samples: usize,
    seed: u64,
) -> Result<ImageSpectrumReport> {
    let n2 = alg.dim_g2();
    let e_dim = 1 + n2;
    if map.ncols() != e_dim {
        return Err(Error::dim(format!(
            "map must have {e_dim} columns for this group"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = StandardNormal;
    let mut cone_points: Vec<Vec<f64>> = Vec::new();
    // canonical rays: the lambda axis, and the boundary rays over the axes
    let push_point = |lambda: f64, zeta: &[f64], out: &mut Vec<Vec<f64>>| {
        let mut p = Vec::with_capacity(e_dim);
        p.push(lambda);
        p.extend_from_slice(zeta);
        out.push(p);
    };
    push_point(1.0, &vec![0.0; n2], &mut cone_points);
    for k in 0..n2 {
        for sign in [-1.0, 1.0] {
            let mut zeta = vec![0.0; n2];
            zeta[k] = sign;
            let omega = DVector::from_column_slice(&zeta);
            let n = ground_norm_extended(alg, metric, &omega)?;
            push_point(n, &zeta, &mut cone_points);
        }
    }
    for _ in 0..n_samples {
        let zeta: Vec<f64> = (0..n2).map(|_| normal.sample(&mut rng)).collect();
        let omega = DVector::from_column_slice(&zeta);
        let n = ground_norm_extended(alg, metric, &omega)?;
        let excess: f64 = rng.random_range(0.0..2.0);
        push_point(n + excess, &zeta, &mut cone_points);
    }

    let mut min_norm = f64::INFINITY;
    let mut witness = None;
    let mut image_points = Vec::with_capacity(cone_points.len());
    for p in &cone_points {
        let v = DVector::from_column_slice(p);
        let img = map * &v;
        image_points.push(img.iter().copied().collect());
        let unit = &v / v.norm();
        let unit_img_norm = (map * unit).norm();
        if unit_img_norm < min_norm {
            min_norm = unit_img_norm;
            if unit_img_norm <= 1e-9 {
                witness = Some(p.clone());
            }
        }
    }
    Ok(ImageSpectrumReport {
        proper: min_norm > 1e-9,
        min_unit_image_norm: min_norm,
        witness,
        image_points,
        samples_used: cone_points.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::classify_group;
    use approx::assert_relative_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn setup(
        name: &str,
    ) -> (
        StratifiedAlgebra,
        MetricForm,
        GroupClassification,
    ) {
        let alg = StratifiedAlgebra::parse_builtin(name).unwrap();
        let metric = MetricForm::identity(alg.dim_g1());
        let class = classify_group(&alg, &metric, 32, 7).unwrap();
        (alg, metric, class)
    }

    #[test]
    fn gamma_enumeration_is_lexicographic_and_bounded() {
        let (gammas, offsets) = enumerate_gammas(&[1.0, 0.5], &[1, 1], 4.0);
        // base offset = 1.5; entries with 2*g1 + g2 <= 2.5
        assert!(gammas.contains(&vec![0, 0]));
        assert!(gammas.contains(&vec![0, 2]));
        assert!(gammas.contains(&vec![1, 0]));
        assert!(!gammas.contains(&vec![2, 0]));
        for (g, o) in gammas.iter().zip(&offsets) {
            assert_relative_eq!(
                *o,
                1.5 + 2.0 * g[0] as f64 + 1.0 * g[1] as f64,
                max_relative = 1e-12
            );
            assert!(*o <= 4.0);
        }
        // lexicographic order
        let mut sorted = gammas.clone();
        sorted.sort();
        assert_eq!(gammas, sorted);
    }

    #[test]
    fn abelian_heat_closed_form() {
        for d in 1..=3usize {
            let (alg, metric, class) = setup(&format!("abelian:{d}"));
            let m = MultiplierSpec::heat(1.0);
            let scheme = QuadratureScheme::beta_default(&alg, &metric, &class, &m).unwrap();
            let v = integrate_beta(&alg, &metric, &class, &m, &scheme).unwrap();
            let truth = (4.0 * PI).powf(-0.5 * d as f64);
            assert_relative_eq!(v, truth, max_relative = 1e-9);
        }
    }

    #[test]
    fn zero_multiplier_integrates_to_zero() {
        let (alg, metric, class) = setup("h1xr");
        let m = MultiplierSpec::PolyGauss {
            a: 1.0,
            b: 0.0,
            terms: vec![crate::multiplier::PolyTerm {
                coef: 0.0,
                lambda_pow: 0,
                zeta_pows: vec![0],
            }],
        };
        let scheme = QuadratureScheme::beta_default(&alg, &metric, &class, &m).unwrap();
        assert_eq!(integrate_beta(&alg, &metric, &class, &m, &scheme).unwrap(), 0.0);
    }

    /// Independent oracle: on the free 2-step group on 3 generators with
    /// Q = I the measure integral of e^(-a lambda) has the closed form
    /// sqrt(pi)/128 a^(-9/2), obtained by radial integration of the
    /// series over sheets (the partial zeta sum converges like G^-3).
    fn free3_heat_closed_form(a: f64) -> f64 {
        let mut sheet_sum = 0.0;
        for g in 0..4000u64 {
            sheet_sum += 1.0 / ((2 * g + 1) as f64).powi(4);
        }
        // pref (2pi)^-5 * Gamma(1/2) a^-1/2 * 4 pi * 3! a^-4 * sheet_sum
        (2.0 * PI).powi(-5) * PI.sqrt() * 24.0 * PI * sheet_sum * a.powf(-4.5)
    }

    #[test]
    fn free3_heat_matches_closed_form() {
        let (alg, metric, class) = setup("free2step:3");
        let m = MultiplierSpec::heat(1.0);
        let scheme = QuadratureScheme::beta_default(&alg, &metric, &class, &m).unwrap();
        let v = integrate_beta(&alg, &metric, &class, &m, &scheme).unwrap();
        let truth = free3_heat_closed_form(1.0);
        assert_relative_eq!(truth, PI.sqrt() / 128.0, max_relative = 1e-9);
        assert_relative_eq!(v, truth, max_relative = 1e-7);
    }

    /// Same style of oracle on Heisenberg x R: 1/(32 sqrt(pi)) a^(-5/2).
    #[test]
    fn h1xr_heat_matches_closed_form() {
        let (alg, metric, class) = setup("h1xr");
        let m = MultiplierSpec::heat(1.0);
        let scheme = QuadratureScheme::beta_default(&alg, &metric, &class, &m).unwrap();
        let v = integrate_beta(&alg, &metric, &class, &m, &scheme).unwrap();
        let mut sheet_sum = 0.0;
        for g in 0..200_000u64 {
            sheet_sum += 1.0 / ((2 * g + 1) as f64).powi(2);
        }
        let truth = (2.0 * PI).powi(-3) * PI.sqrt() * 2.0 * sheet_sum;
        assert_relative_eq!(truth, 1.0 / (32.0 * PI.sqrt()), max_relative = 1e-5);
        assert_relative_eq!(v, 1.0 / (32.0 * PI.sqrt()), max_relative = 1e-8);
    }

    #[test]
    fn beta_positive_for_nonnegative_multiplier() {
        let (alg, metric, class) = setup("free2step:3");
        let m = MultiplierSpec::gauss(0.7, 0.3);
        let scheme = QuadratureScheme::beta_default(&alg, &metric, &class, &m).unwrap();
        assert!(integrate_beta(&alg, &metric, &class, &m, &scheme).unwrap() > 0.0);
    }

    #[test]
    fn dilation_covariance_of_beta() {
        let (alg, metric, class) = setup("free2step:3");
        let m = MultiplierSpec::heat(1.0);
        let scheme = QuadratureScheme::beta_default(&alg, &metric, &class, &m).unwrap();
        let base = integrate_beta(&alg, &metric, &class, &m, &scheme).unwrap();
        let q = alg.hom_dim() as f64;
        for &r in &[0.5, 2.0] {
            let md = m.dilate(r).unwrap();
            let scheme_r = QuadratureScheme::beta_default(&alg, &metric, &class, &md).unwrap();
            let v = integrate_beta(&alg, &metric, &class, &md, &scheme_r).unwrap();
            assert!(
                (v - r.powf(-q) * base).abs() / base <= 1e-6,
                "r = {r}: {v} vs {}",
                r.powf(-q) * base
            );
        }
    }

    #[test]
    fn beta_quadrature_doubling_invariance() {
        for name in ["h1xr", "free2step:3"] {
            let (alg, metric, class) = setup(name);
            let m = MultiplierSpec::heat(1.0);
            let scheme = QuadratureScheme::beta_default(&alg, &metric, &class, &m).unwrap();
            let v1 = integrate_beta(&alg, &metric, &class, &m, &scheme).unwrap();
            let mut doubled = scheme.clone();
            doubled.omega_points.iter_mut().for_each(|n| *n *= 2);
            doubled.lambda_order *= 2;
            let v2 = integrate_beta(&alg, &metric, &class, &m, &doubled).unwrap();
            assert!(
                ((v1 - v2) / v2).abs() <= 1e-6,
                "{name}: {v1} vs doubled {v2}"
            );
        }
    }

    #[test]
    fn mw_plus_groups_are_refused() {
        let (alg, metric, class) = setup("heisenberg");
        let m = MultiplierSpec::heat(1.0);
        let scheme = QuadratureScheme {
            omega_box: vec![(-20.0, 20.0)],
            omega_points: vec![16],
            lambda_order: 16,
            lambda_cut: 20.0,
            gamma_epsilon: 1e-8,
            group_box: vec![],
            group_points: vec![],
            mc_seed: 0,
        };
        match integrate_beta(&alg, &metric, &class, &m, &scheme) {
            Err(Error::MwPlusGroup(_)) => {}
            other => panic!("expected MW+ refusal, got {other:?}"),
        }
    }

    #[test]
    fn spectrum_cone_membership() {
        let (alg, metric, _) = setup("free2step:3");
        let inside = SpectralPoint {
            lambda: 3.0,
            zeta: vec![0.0, 0.0, 2.0],
        };
        let outside = SpectralPoint {
            lambda: 1.0,
            zeta: vec![0.0, 0.0, 2.0],
        };
        assert!(spectrum_contains(&alg, &metric, &inside, 1e-9).unwrap());
        assert!(!spectrum_contains(&alg, &metric, &outside, 1e-9).unwrap());
        let apex = SpectralPoint {
            lambda: 0.0,
            zeta: vec![0.0; 3],
        };
        assert!(spectrum_contains(&alg, &metric, &apex, 1e-9).unwrap());

        let (ab, m_ab, _) = setup("abelian:2");
        assert!(spectrum_contains(&ab, &m_ab, &SpectralPoint { lambda: 0.5, zeta: vec![] }, 0.0)
            .unwrap());
        assert!(!spectrum_contains(&ab, &m_ab, &SpectralPoint { lambda: -0.5, zeta: vec![] }, 1e-9)
            .unwrap());
    }

    #[test]
    fn abelian_kernel_matches_heat_kernel() {
        // K(heat(1))(x) = (4 pi)^(-d/2) e^(-|x|^2/4) on R^d
        for d in 1..=2usize {
            let (alg, metric, class) = setup(&format!("abelian:{d}"));
            let m = MultiplierSpec::heat(1.0);
            let mut scheme = QuadratureScheme::beta_default(&alg, &metric, &class, &m).unwrap();
            scheme.group_box = vec![(-6.0, 6.0); d];
            scheme.group_points = vec![9; d];
            let x = DVector::from_fn(d, |k, _| 0.4 * (k as f64 + 1.0));
            let t = DVector::zeros(0);
            let v = kernel_eval(&alg, &metric, &class, &m, &x, &t, &scheme).unwrap();
            let truth = (4.0 * PI).powf(-0.5 * d as f64) * (-x.norm_squared() / 4.0).exp();
            assert_relative_eq!(v.re, truth, max_relative = 1e-8);
            assert!(v.im.abs() < 1e-14);
        }
    }

    fn small_h1xr_scheme(
        alg: &StratifiedAlgebra,
        metric: &MetricForm,
        class: &GroupClassification,
        m: &MultiplierSpec,
    ) -> QuadratureScheme {
        let mut scheme = QuadratureScheme::kernel_default(alg, metric, class, m).unwrap();
        scheme.group_box = vec![(-5.5, 5.5), (-5.5, 5.5), (-5.5, 5.5), (-7.0, 7.0)];
        scheme.group_points = vec![13, 13, 13, 29];
        scheme
    }

    #[test]
    fn kernel_grid_agrees_with_pointwise_eval() {
        let (alg, metric, class) = setup("h1xr");
        let m = MultiplierSpec::heat(1.0);
        let scheme = small_h1xr_scheme(&alg, &metric, &class, &m);
        let grid = kernel_grid(&alg, &metric, &class, &m, &scheme).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..10 {
            let idx: Vec<usize> = grid
                .dims
                .iter()
                .map(|&n| rng.random_range(0..n))
                .collect();
            let p = grid.point_at(&idx);
            let x = DVector::from_column_slice(&p[..3]);
            let t = DVector::from_column_slice(&p[3..]);
            let direct = kernel_eval(&alg, &metric, &class, &m, &x, &t, &scheme).unwrap();
            let batched = grid.value_at(&idx);
            assert!(
                (direct - batched).norm() <= 1e-8 * direct.norm().max(1e-12),
                "idx {idx:?}: {direct} vs {batched}"
            );
        }
    }

    #[test]
    fn kernel_adjoint_symmetry() {
        let (alg, metric, class) = setup("h1xr");
        let m = MultiplierSpec::heat(1.0);
        let scheme = small_h1xr_scheme(&alg, &metric, &class, &m);
        // pointwise check
        let x = DVector::from_vec(vec![0.8, -0.5, 1.2]);
        let t = DVector::from_vec(vec![0.9]);
        let at = kernel_eval(&alg, &metric, &class, &m, &x, &t, &scheme).unwrap();
        let at_inv = kernel_eval(&alg, &metric, &class, &m, &(-&x), &(-&t), &scheme).unwrap();
        assert!((at_inv.conj() - at).norm() <= 1e-8 * at.norm());
        // grid invariant
        let grid = kernel_grid(&alg, &metric, &class, &m, &scheme).unwrap();
        assert!(grid.adjoint_residual().unwrap() < 1e-10);
    }

    #[test]
    fn kernel_homogeneity_under_dilated_multiplier() {
        // K(m(r.))(g) = r^-Q K(m)(r^-1 . g)
        let (alg, metric, class) = setup("h1xr");
        let m = MultiplierSpec::heat(1.0);
        let scheme = small_h1xr_scheme(&alg, &metric, &class, &m);
        let r = 1.3;
        let md = m.dilate(r).unwrap();
        let scheme_d = {
            let mut s = scheme.clone();
            let r2 = r * r;
            s.lambda_cut *= 1.0 / (r2 / 1.0).min(1.0); // keep cut covering the tail
            s.lambda_cut = md.lambda_tail_bound(1e-6);
            for b in s.omega_box.iter_mut() {
                *b = (b.0 / r2, b.1 / r2);
            }
            s
        };
        let q = alg.hom_dim() as f64;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..4 {
            let x = DVector::from_fn(3, |_, _| rng.random_range(-1.0..1.0));
            let t = DVector::from_fn(1, |_, _| rng.random_range(-1.0..1.0));
            let lhs = kernel_eval(&alg, &metric, &class, &md, &x, &t, &scheme_d).unwrap();
            let xs = &x / r;
            let ts = &t / (r * r);
            let rhs = kernel_eval(&alg, &metric, &class, &m, &xs, &ts, &scheme).unwrap()
                * r.powf(-q);
            assert!(
                (lhs - rhs).norm() <= 1e-3 * rhs.norm().max(1e-8),
                "{lhs} vs {rhs}"
            );
        }
    }

    #[test]
    fn kernel_value_at_identity_equals_beta_integral() {
        let (alg, metric, class) = setup("h1xr");
        let m = MultiplierSpec::heat(1.0);
        let scheme = small_h1xr_scheme(&alg, &metric, &class, &m);
        let k0 = kernel_eval(
            &alg,
            &metric,
            &class,
            &m,
            &DVector::zeros(3),
            &DVector::zeros(1),
            &scheme,
        )
        .unwrap();
        let beta_scheme = QuadratureScheme::beta_default(&alg, &metric, &class, &m).unwrap();
        let beta = integrate_beta(&alg, &metric, &class, &m, &beta_scheme).unwrap();
        assert_relative_eq!(k0.re, beta, max_relative = 5e-5);
    }

    #[test]
    fn ground_multiplier_round_trip_h1xr() {
        let (alg, metric, class) = setup("h1xr");
        let m = MultiplierSpec::heat(1.0);
        let scheme = small_h1xr_scheme(&alg, &metric, &class, &m);
        let grid = kernel_grid(&alg, &metric, &class, &m, &scheme).unwrap();
        // m(0) = integral of the kernel
        let total = grid.integral();
        assert!((total.re - 1.0).abs() <= 6e-2, "integral {total}");
        for &(oz, lam) in &[(0.5, 0.3), (1.0, 0.5), (-0.8, 1.2), (1.5, 0.1)] {
            let omega = DVector::from_vec(vec![oz]);
            let rec = multiplier_ground(&alg, &metric, &class, &grid, lam, &omega).unwrap();
            let truth = (-(oz as f64).abs() - lam).exp();
            assert!(
                (rec.re - truth).abs() / truth <= 5e-2,
                "omega {oz} lam {lam}: {rec} vs {truth}"
            );
            assert!(rec.im.abs() < 1e-3);
        }
        // zero kernel recovers zero
        let mut zero = grid.clone();
        zero.values.iter_mut().for_each(|v| *v = Complex64::new(0.0, 0.0));
        let rec = multiplier_ground(&alg, &metric, &class, &zero, 0.4, &DVector::from_vec(vec![0.7]))
            .unwrap();
        assert_eq!(rec, Complex64::new(0.0, 0.0));
    }

    #[test]
    fn l2_norm_examples() {
        let (alg, metric, class) = setup("abelian:1");
        // heat(1/2) kernel on R: (2 pi)^(-1/2) e^(-x^2/2), L2 norm (2 sqrt(pi))^(-1/2)
        let m = MultiplierSpec::heat(0.5);
        let mut scheme = QuadratureScheme::beta_default(&alg, &metric, &class, &m).unwrap();
        scheme.group_box = vec![(-8.0, 8.0)];
        scheme.group_points = vec![81];
        let grid = kernel_grid(&alg, &metric, &class, &m, &scheme).unwrap();
        let truth = (2.0 * PI.sqrt()).powf(-0.5);
        assert_relative_eq!(l2_norm_group(&grid), truth, max_relative = 1e-4);
        let mut zero = grid.clone();
        zero.values.iter_mut().for_each(|v| *v = Complex64::new(0.0, 0.0));
        assert_eq!(l2_norm_group(&zero), 0.0);
    }

    #[test]
    fn plancherel_isometry_h1xr_small() {
        let (alg, metric, class) = setup("h1xr");
        let m = MultiplierSpec::heat(1.0);
        let scheme = small_h1xr_scheme(&alg, &metric, &class, &m);
        let grid = kernel_grid(&alg, &metric, &class, &m, &scheme).unwrap();
        let l2sq = l2_norm_group(&grid).powi(2);
        let m2 = MultiplierSpec::heat(2.0);
        let beta_scheme = QuadratureScheme::beta_default(&alg, &metric, &class, &m2).unwrap();
        let rhs = integrate_beta(&alg, &metric, &class, &m2, &beta_scheme).unwrap();
        assert!(
            (l2sq - rhs).abs() / rhs <= 5e-2,
            "l2^2 {l2sq} vs beta(|m|^2) {rhs}"
        );
    }

    #[test]
    fn image_spectrum_examples() {
        let (alg, metric, _) = setup("free2step:3");
        // identity: proper
        let id = DMatrix::identity(4, 4);
        let rep = image_spectrum_check(&alg, &metric, &id, 64, 5).unwrap();
        assert!(rep.proper);
        // projection to lambda: proper, image in R+
        let mut proj_l = DMatrix::zeros(1, 4);
        proj_l[(0, 0)] = 1.0;
        let rep = image_spectrum_check(&alg, &metric, &proj_l, 64, 5).unwrap();
        assert!(rep.proper);
        assert!(rep.image_points.iter().all(|p| p[0] >= -1e-12));
        // projection to zeta: NOT proper, witness on the lambda axis
        let mut proj_z = DMatrix::zeros(3, 4);
        for k in 0..3 {
            proj_z[(k, k + 1)] = 1.0;
        }
        let rep = image_spectrum_check(&alg, &metric, &proj_z, 64, 5).unwrap();
        assert!(!rep.proper);
        let w = rep.witness.expect("witness expected");
        assert!(w[0] > 0.0 && w[1..].iter().all(|&z| z.abs() < 1e-12));
    }

}
