//! Discrete-TTI simulator of joint radio and computation resource
//! allocation for a sliced radio access network.
//!
//! Each cell serves an eMBB and a URLLC slice. Every TTI an agent splits
//! the cell's RBGs and its edge server's capacity between the slices;
//! proportional fairness then assigns RBGs to users inside each slice.
//! Delivered packets become computation tasks that run on the edge server
//! or, once they have waited too long, are offloaded over the backhaul to
//! a central cloud. Three allocators are provided: a radio-only expert, a
//! joint tabular Q-learner, and a joint learner that transfers the
//! expert's Q-values through state/action map functions.
//!
//! Runs are deterministic: all randomness derives from one master seed
//! through per-subsystem streams, so metric streams are a pure function of
//! (scenario, case, seed, expert table).

pub mod agents;
pub mod channel;
pub mod compute;
pub mod engine;
pub mod rng;
pub mod scenario;
pub mod slicing;
pub mod traffic;

pub use agents::{AgentConfig, AgentKind, QTable, QTableError, SliceState, TransferMode};
pub use engine::{run_case, run_case_traced, Case, CompletedPacket, EngineError, RunArtifacts, SimRun};
pub use scenario::{parse_scenario, render_scenario, Scenario, ScenarioError};
pub use slicing::{AllocationAction, TtiReport};
pub use traffic::Slice;
