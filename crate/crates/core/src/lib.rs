//! Gossip learning over fully distributed data.
//!
//! Every peer of a simulated network holds exactly one labeled example. Linear
//! models take random walks over the peers, get updated with each visited
//! example (Pegasos or Adaline) and are combined by averaging on arrival. The
//! crate contains the learners, a deterministic discrete-event simulator with
//! message drop, delay and churn, the non-gossip baselines, the evaluation
//! metrics and a runtime check of the averaged-regret bound for the
//! merge-then-update variant.
//!
//! All numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! at the crate root fix the scalar type for the common case.

pub mod baselines;
pub mod config;
pub mod data;
pub mod linear_models;
pub mod metrics;
pub mod peer_sampling;
pub mod protocol;
pub mod rng;
pub mod runner;
pub mod scalar;
pub mod sim;
pub mod theory;

pub use config::{ConfigError, ExperimentConfig};
pub use data::{DataError, Dataset, Label, LabeledExample, SparseVector, SplitSpec};
pub use linear_models::{HyperParams, LinearModel, ModelError};
pub use protocol::{Learner, NodeState, ProtocolVariant, Variant};
pub use runner::{run_experiment, run_sweep, RunError, RunOutput};
pub use scalar::Scalar;
pub use sim::{SimError, Simulation};
pub use theory::{RegretProbe, TheoryContext};

/// Identifier of a peer; peers are numbered `0..n_nodes`.
pub type NodeId = usize;

pub type LinearModelF64 = LinearModel<f64>;
pub type LinearModelF32 = LinearModel<f32>;
pub type DatasetF64 = Dataset<f64>;
pub type DatasetF32 = Dataset<f32>;
pub type LabeledExampleF64 = LabeledExample<f64>;
pub type LabeledExampleF32 = LabeledExample<f32>;
pub type HyperParamsF64 = HyperParams<f64>;
pub type SimulationF64 = Simulation<f64>;
pub type SimulationF32 = Simulation<f32>;
