//! Scheduling of scientific workflows onto mixed pools of reliable (on-demand)
//! and unreliable (revocable) virtual machines.
//!
//! The crate contains the workflow model and DAX reader, the VM catalog and
//! interruption model, static HEFT / GreedyCost baselines, a Mamdani fuzzy
//! controller that picks the pricing class of every ready task, the
//! uncertainty-driven dispatch policy built on top of it, a slotted
//! discrete-event simulator and the evaluation metrics.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod error;
pub mod flc;
pub mod metrics;
pub mod resources;
pub mod rng;
pub mod schedcore;
pub mod simulator;
pub mod uds;
pub mod workflow;

pub use baselines::{Bounds, Planner, ReferenceAssignments};
pub use error::{Error, Result};
pub use flc::{Flc, PmiDecision};
pub use metrics::MetricsReport;
pub use resources::{PoolVm, Pricing, VmCatalog, VmId, VmType};
pub use schedcore::{Placement, SchedulePlan, Timing};
pub use simulator::{SimConfig, SimResult};
pub use uds::{DispatchDecision, UdsConfig};
pub use workflow::{Pattern, TaskId, WorkflowGraph};
