//! Simulation and certification toolkit for McKean–Vlasov (distribution
//! dependent) stochastic differential equations
//!
//! ```text
//! dX_t = b(X_t, L(X_t)) dt + σ(X_t, L(X_t)) dB_t
//! ```
//!
//! * [`models`]: drift/diffusion pairs with declared dissipativity constants
//!   and an empirical falsifier for them.
//! * [`measures`]: point clouds, Gaussian laws and Wasserstein distances.
//! * [`simulate`]: Euler–Maruyama for the particle system, the frozen-measure
//!   (decoupled) equation, and synchronously coupled pairs.
//! * [`fixedpoint`]: the map μ ↦ invariant law of the frozen equation, its
//!   Picard iteration, and empirical contraction/ergodicity/phase estimates.
//! * [`rates`]: interaction-strength thresholds and convergence rates.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod fixedpoint;
pub mod measures;
pub mod models;
pub mod numerics;
pub mod rates;
pub mod rng;
pub mod simulate;

pub use error::{Error, Result};
pub use fixedpoint::{
    apply_t, estimate_contraction, estimate_ergodicity, fit_exponential_rate, measure_convergence, phase_scan,
    picard_solve, stationary_density_1d, ApplyTOptions, ContractionEstimate, ErgodicityEstimate, ExponentialFit,
    PhaseScanOptions, PhaseScanReport, PicardOptions, StationaryDensity, StationaryResult, StopReason,
};
pub use measures::{
    gaussian_kl, gaussian_w2, pth_moment, wasserstein, wasserstein_1d, wasserstein_assignment, wasserstein_sinkhorn,
    Distance, EmpiricalMeasure, Estimator, GaussianMeasure,
};
pub use models::{
    builtin_model, check_dissipativity, eval_diffusion, eval_drift, AssumptionConstants, MeasureFeatures,
    MeasureSummary, ModelSpec, ViolationReport,
};
pub use rates::{KappaT, RateCertificate, RateInputs, SearchBox, ThresholdName, Verdict};
pub use simulate::{
    simulate_decoupled, simulate_mv, simulate_synchronous_pair, CoupledPath, Pairing, SimConfig, Trajectory,
};
