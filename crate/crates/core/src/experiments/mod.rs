//! Degradations, metrics, phantoms, parameter sweeps, baselines and the
//! statistical validation harness.

pub mod baselines;
pub mod degrade;
pub mod estimators;
pub mod metrics;
pub mod montecarlo;
pub mod noise;
pub mod phantoms;
pub mod sweep;
pub mod validation;

pub use degrade::{degrade, DegradationKind, DegradationSpec};
pub use estimators::{EstimatorId, EstimatorSettings, JvpChoice, RefitRun};
pub use metrics::{mse, psnr, ssim};
pub use phantoms::{phantom, PhantomId};
pub use sweep::{sweep, SweepRecord};
