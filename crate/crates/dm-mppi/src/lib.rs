//! Sampling-based model-predictive control on a kinematic bicycle, with a
//! learned per-rollout influence model that prunes the MPPI update and
//! adapts the obstacle penalty online.
//!
//! The pipeline has two halves. Offline, [`offline::run_offline`] samples
//! control instances, fits per-rollout influence coefficients from random
//! subset evaluations, trains a small MLP to predict those coefficients
//! from cheap cost features, and calibrates a pruning threshold. Online,
//! [`controller::run_episode`] runs the receding-horizon loop in one of
//! three modes: plain MPPI, influence-pruned MPPI with a fixed rollout
//! budget, or pruned MPPI with the obstacle penalty adapted from the
//! violator influence ratio.
//!
//! Everything is generic over the scalar type ([`scalar::Scalar`], `f32` or
//! `f64`); the aliases at the crate root fix `f64` for everyday use. All
//! randomness flows through explicitly seeded ChaCha streams, so every
//! artifact is reproducible from its seed.

pub mod controller;
pub mod datamodel;
pub mod diagnostics;
pub mod env;
pub mod error;
pub mod mppi;
pub mod offline;
pub mod predictor;
pub mod rng;
pub mod scalar;

pub use controller::Mode;
pub use error::{Error, Result};
pub use offline::CollectionMode;
pub use scalar::Scalar;

pub type VehicleState = env::VehicleState<f64>;
pub type ControlInput = env::ControlInput<f64>;
pub type Obstacle = env::Obstacle<f64>;
pub type CostBreakdown = env::CostBreakdown<f64>;
pub type EnvConfig = env::EnvConfig<f64>;
pub type MppiConfig = mppi::MppiConfig<f64>;
pub type MppiInstance = mppi::MppiInstance<f64>;
pub type RolloutRecord = mppi::RolloutRecord<f64>;
pub type FitConfig = datamodel::FitConfig<f64>;
pub type InfluenceCoefficients = datamodel::InfluenceCoefficients<f64>;
pub type FeatureRow = predictor::FeatureRow<f64>;
pub type PredictorModel = predictor::PredictorModel<f64>;
pub type TrainConfig = predictor::TrainConfig<f64>;
pub type TrainLogRow = predictor::TrainLogRow<f64>;
pub type OnlineConfig = controller::OnlineConfig<f64>;
pub type EpisodeResult = controller::EpisodeResult<f64>;
pub type EpisodeMetrics = controller::EpisodeMetrics<f64>;
pub type IterationDiagnostics = controller::IterationDiagnostics<f64>;
pub type OfflineConfig = offline::OfflineConfig<f64>;
pub type OfflineArtifacts = offline::OfflineArtifacts<f64>;
pub type DatasetRow = offline::DatasetRow<f64>;
