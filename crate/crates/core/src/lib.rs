//! Spectral-multiplier machinery for sub-Laplacians on 2-step stratified
//! groups: omega-parametrized spectral data, the explicit Plancherel
//! measure, kernel and multiplier transforms built from Laguerre and
//! Bessel expansions, and coarea disintegration utilities for linear
//! maps on polyhedral cones.

pub mod disintegration;
pub mod error;
pub mod group;
pub mod multiplier;
pub mod plancherel;
pub mod quad;
pub mod special;
pub mod spectral;
pub mod verify;
pub mod williamson;

pub use error::{Error, Result};
pub use group::{GroupPoint, QuotientPoint, StratifiedAlgebra};
pub use multiplier::MultiplierSpec;
pub use plancherel::{
    integrate_beta, kernel_eval, kernel_grid, l2_norm_group, multiplier_ground, KernelGrid,
    QuadratureScheme, SpectralPoint,
};
pub use spectral::{
    classify_group, spectral_decompose, GroupClassification, MetricForm, OmegaSpectralData,
};

/// Caps the rayon worker count from `NILSPECTRAL_THREADS` when set.
/// Results do not depend on the worker count (reductions run in fixed
/// order); the variable only limits parallelism.
pub fn init_thread_pool_from_env() {
    if let Ok(v) = std::env::var("NILSPECTRAL_THREADS") {
        if let Ok(n) = v.trim().parse::<usize>() {
            if n >= 1 {
                let _ = rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build_global();
            }
        }
    }
}
