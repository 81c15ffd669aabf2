//! Distributed nonlinear model predictive control with a parallelizable
//! agent hierarchy.
//!
//! Each agent owns an independent discrete-time system and objective; the
//! systems are coupled only through joint state and transition constraints.
//! Agents exchange predicted trajectories, a covering scheduler sorts them
//! into priority levels that can solve in parallel, and a stability lab
//! certifies relaxed-Lyapunov suboptimality degrees and feasibility on the
//! resulting closed-loop traces.
//!
//! Start with [`bridge::build_scenario`] and [`harness::run_closed_loop`],
//! or see the `examples/` directory for one runnable example per capability.

pub mod bridge;
pub mod cli;
pub mod config;
pub mod harness;
pub mod model;
pub mod numeric;
pub mod scheduler;
pub mod solver;
pub mod stability;
pub mod trace_io;

pub use bridge::{GridControl, GridState};
pub use harness::{InfoStore, NetworkModel, RunTrace, TraceStep};
pub use model::{AgentId, AgentModel, InfoSet, JointConstraint, NeighborRecord, Scenario};
pub use numeric::{CostValue, Rat};
pub use scheduler::{Coordinator, Demotion, Hierarchy, StepOutcome};
pub use solver::Plan;
