//! Learning preferences from bundled consumption.
//!
//! A consumer with linear utility `u = alpha + x'beta + noise` only observes
//! the total utility of each bundle `x` it consumes and updates its estimate
//! of `beta` by recursive least squares. This crate provides the estimator,
//! spectral diagnostics of the accumulated information matrix, bundle design
//! rules (no-learning bundles, joint-increase regions, interaction models),
//! a deterministic simulator, a two-period monopolist planner and a corpus
//! replay pipeline.
//!
//! Everything numeric is generic over [`Scalar`] (implemented for `f32` and
//! `f64`); the `*64` aliases below fix the scalar to `f64`.

pub mod corpus;
pub mod design;
pub mod error;
pub mod estimator;
pub mod interactions;
pub mod linalg;
pub mod market;
pub mod scalar;
pub mod simulator;
pub mod spectral;

pub use design::Norm;
pub use error::{LearnError, Result};
pub use estimator::{History, NoiseModel, PrecisionState, UpdateResult};
pub use linalg::Matrix;
pub use scalar::Scalar;
pub use simulator::{Init, Scenario, Strategy, StrategyKind, Trajectory};
pub use spectral::SpectralSummary;

pub type Matrix64 = Matrix<f64>;
pub type History64 = History<f64>;
pub type PrecisionState64 = PrecisionState<f64>;
pub type SpectralSummary64 = SpectralSummary<f64>;
pub type Scenario64 = Scenario<f64>;
pub type Strategy64 = Strategy<f64>;
pub type Trajectory64 = Trajectory<f64>;
pub type PricingPlan64 = market::PricingPlan<f64>;
pub type ReplayReport64 = corpus::ReplayReport<f64>;

pub type Matrix32 = Matrix<f32>;
pub type PrecisionState32 = PrecisionState<f32>;
