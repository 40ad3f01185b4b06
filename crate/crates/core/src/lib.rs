//! Online active learning for linear regression on contaminated data streams.
//!
//! A stream of unlabeled points is screened one point at a time. Each point is whitened
//! with a covariance estimated on an unlabeled calibration set, scored by a query
//! strategy, and its label is bought only if the score falls inside KDE-calibrated
//! thresholds. Bounded conditional D-optimality rejects points of extreme prediction
//! variance, which protects the design against outliers, and robust M-estimators
//! (Huber, Tukey) limit the damage of outliers that still get through.
//!
//! All numerics are generic over [`Scalar`] (`f32` or `f64`); the `*64` / `*32`
//! aliases below fix the precision.

pub mod error;
pub mod estimators;
pub mod harness;
pub mod linalg;
pub mod numstats;
pub mod scalar;
pub mod strategies;
pub mod stream;
pub mod whitening;

pub use error::{Error, Result};
pub use estimators::{DesignState, Expansion, FittedModel, LossKind};
pub use harness::{
    aggregate, run_replicas, run_replicated, run_single, AggregateResult, Replica, RunOptions,
    RunResult, StrategySpec, TraceRecord,
};
pub use linalg::Matrix;
pub use numstats::KernelDensity;
pub use scalar::Scalar;
pub use strategies::{Decision, StrategyKind, StrategyState, Thresholds};
pub use stream::{Observation, ScenarioConfig, StreamState};
pub use whitening::Whitener;

pub type Matrix64 = Matrix<f64>;
pub type Matrix32 = Matrix<f32>;
pub type KernelDensity64 = KernelDensity<f64>;
pub type KernelDensity32 = KernelDensity<f32>;
pub type Whitener64 = Whitener<f64>;
pub type Whitener32 = Whitener<f32>;
pub type DesignState64 = DesignState<f64>;
pub type DesignState32 = DesignState<f32>;
pub type FittedModel64 = FittedModel<f64>;
pub type FittedModel32 = FittedModel<f32>;
pub type StrategyState64 = StrategyState<f64>;
pub type StrategyState32 = StrategyState<f32>;
pub type RunResult64 = RunResult<f64>;
pub type RunResult32 = RunResult<f32>;
pub type AggregateResult64 = AggregateResult<f64>;
pub type AggregateResult32 = AggregateResult<f32>;
