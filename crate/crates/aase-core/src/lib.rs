//! State estimation for a shared discrete signal that is observed both
//! directly and through the behavior of agents reacting to it.
//!
//! The model is a discrete-time chain over a global state (say, a traffic
//! light) plus any number of agents. Each agent picks an action from a
//! policy that reads the global state and its own local state, the action
//! drives its local transition, and both the global state and every local
//! state emit noisy, sometimes missing, observations. Smoothing recovers
//! the per-step posterior over the global state from whatever observations
//! survived, so an occluded signal can still be read off the agents that
//! saw it.
//!
//! [`inference::smooth`] is the main entry point. Models are built from
//! [`model::AaseModel`] and queried with an [`trace::ObservationTrace`].
//! All numeric tables are generic over the scalar (`f64` by default, `f32`
//! via the `*32` aliases at the crate root).

pub mod dist;
pub mod experiment;
pub mod graph;
pub mod inference;
pub mod model;
pub mod num;
pub mod rng;
pub mod schema;
pub mod sim;
pub mod space;
pub mod trace;
pub mod traffic;

pub use experiment::{
    accuracy_plot_svg, bench_to_csv, report_to_csv, run_bench, run_table, BenchConfig,
    BenchReport, ExperimentReport, HarnessError, Method, ReportRow, RunConfig,
};
pub use schema::SchemaError;
pub use inference::{
    brute_force_posterior, hmm_smooth, map_sequence, smooth, smooth_with, EngineChoice,
    EngineUsed, InferenceError, InferenceOptions, InferenceStats, PosteriorSequence, Sweep,
    BRUTE_FORCE_DEFAULT_CAP, DEFAULT_EXACT_STATE_BUDGET,
};
pub use model::{
    prune_agents, validate_model, AaseModel, AgentChain, AgentId, GlobalChain, ValidationReport,
};
pub use num::Real;
pub use sim::{
    accuracy, apply_occlusion, apply_occlusion_channels, majority_baseline, simulate,
    OcclusionKind, OcclusionPattern,
};
pub use space::StateSpace;
pub use trace::{AgentChannel, GroundTruth, ObservationTrace, TraceError};
pub use traffic::{build_traffic_model, legal_cycle_default, Color, TrafficConfig, TrafficError};

/// Single-precision variants of the core model and inference types.
pub type Pmf32 = dist::Pmf<f32>;
pub type CondTable32 = dist::CondTable<f32>;
pub type GlobalChain32 = model::GlobalChain<f32>;
pub type AgentChain32 = model::AgentChain<f32>;
pub type AaseModel32 = model::AaseModel<f32>;
pub type FactorGraph32 = graph::FactorGraph<f32>;
pub type PosteriorSequence32 = inference::PosteriorSequence<f32>;
