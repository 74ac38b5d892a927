mod common;

use proptest::prelude::*;
use uds_core::workflow::{generate_synthetic, parse_dax, to_dax, Pattern, SyntheticConfig};

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0)
}

fn pattern() -> impl Strategy<Value = Pattern> {
    prop::sample::select(Pattern::ALL.to_vec())
}

proptest! {
    #[test]
    fn dax_round_trip(g in common::dag(8, 1e6, 800.0), speed in 500.0..4000.0f64) {
        let back = parse_dax(&to_dax(&g, speed), speed).unwrap();
        prop_assert_eq!(back.len(), g.len());
        for (a, b) in g.tasks().iter().zip(back.tasks()) {
            prop_assert_eq!(&a.name, &b.name);
            prop_assert!(close(a.demand_mi, b.demand_mi), "{} vs {}", a.demand_mi, b.demand_mi);
        }
        prop_assert_eq!(back.edges().len(), g.edges().len());
        for e in g.edges() {
            let f = back.edge_between(e.src, e.dst).expect("edge survives");
            prop_assert!(close(e.data_mbit, f.data_mbit));
        }
    }

    #[test]
    fn normalize_gives_single_ends_and_is_idempotent(g in common::dag(10, 1e5, 100.0)) {
        let once = g.clone().normalize().unwrap();
        prop_assert_eq!(once.entries().len(), 1);
        prop_assert_eq!(once.exits().len(), 1);
        prop_assert_eq!(once.real_task_count(), g.len());
        let twice = once.clone().normalize().unwrap();
        prop_assert_eq!(twice, once);
    }

    #[test]
    fn topological_order_respects_every_edge(g in common::dag(12, 1e5, 100.0)) {
        let order = g.topological_order().unwrap();
        prop_assert_eq!(order.len(), g.len());
        let mut pos = vec![usize::MAX; g.len()];
        for (i, t) in order.iter().enumerate() {
            prop_assert_eq!(pos[t.index()], usize::MAX);
            pos[t.index()] = i;
        }
        for e in g.edges() {
            prop_assert!(pos[e.src.index()] < pos[e.dst.index()]);
        }
    }

    #[test]
    fn synthetic_workflows_are_acyclic_and_reproducible(
        p in pattern(),
        n in 1usize..60,
        seed in any::<u64>(),
    ) {
        let cfg = SyntheticConfig::default();
        let g = generate_synthetic(p, n, seed, &cfg).unwrap();
        prop_assert_eq!(g.len(), n);
        prop_assert!(g.topological_order().is_ok());
        prop_assert_eq!(&g, &generate_synthetic(p, n, seed, &cfg).unwrap());
        for t in g.tasks() {
            prop_assert!((cfg.demand_mi.0..=cfg.demand_mi.1).contains(&t.demand_mi));
        }
        for e in g.edges() {
            prop_assert!((cfg.data_mbit.0..=cfg.data_mbit.1).contains(&e.data_mbit));
        }
        let norm = g.normalize().unwrap();
        prop_assert_eq!((norm.entries().len(), norm.exits().len()), (1, 1));
    }
}
