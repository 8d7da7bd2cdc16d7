//! Equilibrium arrival timing in a ?/M/1 queue with waiting and tardiness
//! costs, and estimation of the cost ratio θ = β/(α+β) from queue lengths
//! sampled at fixed instants over many days.
//!
//! The pipeline is:
//!
//! 1. [`equilibrium::solve`] computes the symmetric Nash arrival distribution
//!    on a discrete grid.
//! 2. [`dynamics`] propagates the queue-length distribution under it and
//!    supplies means, variances and cross-time covariances.
//! 3. [`simulator::simulate`] draws independent days and records the queue
//!    length at a sampling schedule.
//! 4. [`estimator`] turns the observations into θ̂ and its asymptotic variance.
//! 5. [`experiments`] replicates the whole thing and summarizes AE/STD/MSE.

pub mod dynamics;
pub mod equilibrium;
pub mod error;
pub mod estimator;
pub mod experiments;
pub mod model;
pub mod simulator;

pub use dynamics::{MomentSummary, QueueSeries, QueueState};
pub use equilibrium::EquilibriumDistribution;
pub use error::{Error, Result};
pub use estimator::{EstimationResult, SupportEstimate};
pub use model::{ModelConfig, ModelParams, Variant};
pub use simulator::{ObservationSet, SamplingSchedule};
