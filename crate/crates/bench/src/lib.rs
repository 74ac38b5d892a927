//! Workloads shared by the criterion benches in `benches/`.

use uds_core::workflow::{generate_synthetic, SyntheticConfig};
use uds_core::{Pattern, WorkflowGraph};

/// A normalized synthetic workflow.
pub fn workload(pattern: Pattern, tasks: usize) -> WorkflowGraph {
    generate_synthetic(pattern, tasks, 7, &SyntheticConfig::default())
        .and_then(WorkflowGraph::normalize)
        .expect("synthetic workloads are valid")
}
