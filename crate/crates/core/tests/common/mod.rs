#![allow(dead_code)]

use proptest::prelude::*;
use uds_core::workflow::WorkflowGraph;

/// Random DAG: edges only go from lower to higher insertion index.
pub fn dag(max_tasks: usize, max_demand: f64, max_data: f64) -> impl Strategy<Value = WorkflowGraph> {
    (1..=max_tasks)
        .prop_flat_map(move |n| {
            (
                prop::collection::vec(0.0..=max_demand, n),
                prop::collection::vec(prop::option::weighted(0.4, 0.0..=max_data), n * (n - 1) / 2),
            )
        })
        .prop_map(|(demands, edges)| {
            let mut g = WorkflowGraph::new();
            let ids: Vec<_> = demands
                .iter()
                .enumerate()
                .map(|(i, &d)| g.add_task(format!("t{i}"), d.round()).unwrap())
                .collect();
            let mut k = 0;
            for j in 0..ids.len() {
                for i in 0..j {
                    if let Some(data) = edges[k] {
                        g.add_edge(ids[i], ids[j], data.round()).unwrap();
                    }
                    k += 1;
                }
            }
            g
        })
}
