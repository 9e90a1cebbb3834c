//! Multi-user mobile edge computing offloading: system model, channel and
//! latency/energy evaluation, per-slot solvers, a retrieval-augmented
//! decision pipeline and an experiment harness.

// `!(x > 0.0)` is used on purpose so NaN fails positivity checks.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel;
pub mod error;
pub mod harness;
mod http;
pub mod llm;
pub mod performance;
pub mod retrieval;
pub mod solvers;
pub mod system;

pub use error::{BackendError, Error, Result};
pub use harness::{run_experiment, ExperimentPlan, ResultsTable};
pub use llm::{rag_solve, Backend, BackendConfig, BackendKind, RagConfig};
pub use performance::{Decision, SlotEvaluation, SlotState, UserEvaluation, UNSERVED};
pub use retrieval::{CapabilityRecord, EmbeddingVector, Encoder, HashEncoder, VectorStore};
pub use solvers::{solve_scenario, solve_slot, ScenarioSolution, SolverKind, SolverSpec};
pub use system::{
    generate_dataset, generate_scenario, Dataset, DatasetKind, MobileUser, Scenario, ScenarioOptions,
    SystemConfig,
};
