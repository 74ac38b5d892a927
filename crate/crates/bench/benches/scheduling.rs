use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use uds_bench::workload;
use uds_core::simulator::run_with_planner;
use uds_core::uds::UdsPolicy;
use uds_core::{Flc, Pattern, Planner, SimConfig, UdsConfig, VmCatalog};

fn flc(c: &mut Criterion) {
    let flc = Flc::default();
    c.bench_function("flc/pmi", |b| b.iter(|| flc.pmi(black_box(0.37), black_box(0.62)).unwrap()));
}

fn baselines(c: &mut Criterion) {
    let catalog = VmCatalog::default_catalog();
    let mut group = c.benchmark_group("baselines");
    for tasks in [100, 1000] {
        let g = workload(Pattern::FanoutFanin, tasks);
        let planner = Planner::new(&g, catalog.pool(), Default::default()).unwrap();
        group.bench_with_input(BenchmarkId::new("heft_static", tasks), &planner, |b, p| {
            b.iter(|| p.heft_static().unwrap())
        });
        group.bench_with_input(BenchmarkId::new("gc_static", tasks), &planner, |b, p| {
            b.iter(|| p.gc_static().unwrap())
        });
    }
    group.finish();
}

fn simulation(c: &mut Criterion) {
    let catalog = VmCatalog::default_catalog();
    let mut group = c.benchmark_group("uds_run");
    group.sample_size(20);
    for pattern in [Pattern::Pipeline, Pattern::FanoutFanin] {
        let g = workload(pattern, 100);
        let config = SimConfig::default();
        let planner = Planner::new(&g, catalog.pool(), config.timing).unwrap();
        let bounds = planner.bounds(2.0, 2.0).unwrap();
        group.bench_function(BenchmarkId::new(pattern.name(), 100), |b| {
            let mut seed = 0;
            b.iter(|| {
                seed += 1;
                let mut policy = UdsPolicy::new(bounds, &UdsConfig::default(), Flc::default()).unwrap();
                run_with_planner(&planner, &mut policy, &SimConfig { seed, ..config }).unwrap()
            })
        });
    }
    group.finish();
}

criterion_group!(benches, flc, baselines, simulation);
criterion_main!(benches);
