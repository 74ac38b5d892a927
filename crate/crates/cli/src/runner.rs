//! Sweep execution and CSV output.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::Context;
use rayon::prelude::*;
use uds_core::baselines::reference_assignments;
use uds_core::metrics::evaluate;
use uds_core::rng::stable_hash;
use uds_core::schedcore::{fmt_sig, plan_cost, plan_makespan, write_plan_csv};
use uds_core::simulator::run_with_planner;
use uds_core::uds::UdsPolicy;
use uds_core::workflow::{generate_synthetic, parse_dax};
use uds_core::{
    Bounds, MetricsReport, Planner, ReferenceAssignments, SchedulePlan, SimResult, UdsConfig, WorkflowGraph,
};

use crate::config::{ExperimentSpec, WorkflowSource};

pub const SUMMARY_HEADER: [&str; 11] =
    ["workflow", "theta", "a", "b", "seed", "m_final", "c_final", "norm_m", "norm_c", "acc", "succ_r"];

pub const FAILURE_HEADER: [&str; 7] = ["workflow", "theta", "a", "b", "rep", "seed", "error"];

pub const DECISION_HEADER: [&str; 10] =
    ["time", "task", "attempt", "m_curr", "c_curr", "norm_m", "norm_c", "pmi", "pricing", "vm"];

/// Reads or generates a workflow and adds pseudo entry/exit tasks if needed.
pub fn load_workflow(source: &WorkflowSource, spec: &ExperimentSpec) -> anyhow::Result<WorkflowGraph> {
    let graph = match source {
        WorkflowSource::Dax(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            parse_dax(&text, spec.catalog.slowest_speed())
                .with_context(|| format!("parsing {}", path.display()))?
        }
        WorkflowSource::Synthetic { pattern, tasks } => {
            generate_synthetic(*pattern, *tasks, spec.workflow_seed, &spec.synthetic)?
        }
    };
    Ok(graph.normalize()?)
}

/// Position of a run in the sweep cross-product.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RunKey {
    pub workflow: usize,
    pub theta: usize,
    pub a: usize,
    pub b: usize,
    pub rep: u32,
}

impl RunKey {
    pub fn id(&self) -> String {
        format!("w{}-t{}-a{}-b{}-r{}", self.workflow, self.theta, self.a, self.b, self.rep)
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub result: SimResult,
    pub report: MetricsReport,
}

#[derive(Debug)]
pub struct RunRecord {
    pub key: RunKey,
    pub workflow: String,
    pub theta: f64,
    pub a: f64,
    pub b: f64,
    pub seed: u64,
    pub outcome: Result<RunOutcome, String>,
}

/// Seed of one replication; depends only on the sweep point and the
/// replication index, so sweep points can be added or reordered freely.
pub fn run_seed(master: u64, workflow: &str, theta: f64, a: f64, b: f64, rep: u32) -> u64 {
    let label = format!("{workflow}|theta={}|a={}|b={}|rep={rep}", fmt_sig(theta), fmt_sig(a), fmt_sig(b));
    master.wrapping_add(stable_hash(label.as_bytes()))
}

/// Everything a run needs about its workflow.
pub struct Prepared<'a> {
    pub planner: Planner<'a>,
    pub heft: SchedulePlan,
    pub gc: SchedulePlan,
    pub m_lower: f64,
    pub c_lower: f64,
    pub refs: ReferenceAssignments,
}

pub fn prepare<'a>(graph: &'a WorkflowGraph, spec: &'a ExperimentSpec) -> anyhow::Result<Prepared<'a>> {
    let pool = spec.catalog.pool();
    let planner = Planner::new(graph, pool, spec.sim.timing)?;
    let heft = planner.heft_static()?;
    let gc = planner.gc_static()?;
    let m_lower = plan_makespan(&heft)?;
    let c_lower = plan_cost(&gc, pool)?;
    let refs = reference_assignments(graph, pool, &heft, &gc)?;
    Ok(Prepared { planner, heft, gc, m_lower, c_lower, refs })
}

fn run_one(
    prep: &Prepared<'_>,
    spec: &ExperimentSpec,
    uds: UdsConfig,
    seed: u64,
) -> anyhow::Result<RunOutcome> {
    let bounds = Bounds::new(prep.m_lower, prep.c_lower, uds.a, uds.b)?;
    let mut policy = UdsPolicy::new(bounds, &uds, spec.flc.clone())?;
    let config = uds_core::SimConfig { seed, ..spec.sim };
    let result = run_with_planner(&prep.planner, &mut policy, &config)?;
    let report = evaluate(prep.planner.graph(), &result, &bounds, &prep.refs, spec.scoring)?;
    Ok(RunOutcome { result, report })
}

/// Runs the full cross-product. Records come back in sweep order whatever
/// the completion order of the workers.
pub fn run_sweep(spec: &ExperimentSpec) -> Vec<RunRecord> {
    let labels: Vec<String> = spec.workflows.iter().map(WorkflowSource::label).collect();
    let graphs: Vec<Result<WorkflowGraph, String>> =
        spec.workflows.iter().map(|w| load_workflow(w, spec).map_err(|e| format!("{e:#}"))).collect();
    let prepared: Vec<Result<Prepared<'_>, String>> = graphs
        .iter()
        .map(|g| match g {
            Ok(g) => prepare(g, spec).map_err(|e| format!("{e:#}")),
            Err(e) => Err(e.clone()),
        })
        .collect();

    let mut keys = Vec::with_capacity(spec.run_count());
    for workflow in 0..spec.workflows.len() {
        for theta in 0..spec.thetas.len() {
            for a in 0..spec.a_values.len() {
                for b in 0..spec.b_values.len() {
                    for rep in 0..spec.reps {
                        keys.push(RunKey { workflow, theta, a, b, rep });
                    }
                }
            }
        }
    }

    let work = |key: &RunKey| {
        let uds =
            UdsConfig { theta: spec.thetas[key.theta], a: spec.a_values[key.a], b: spec.b_values[key.b] };
        let label = &labels[key.workflow];
        let seed = run_seed(spec.master_seed, label, uds.theta, uds.a, uds.b, key.rep);
        let outcome = match &prepared[key.workflow] {
            Ok(prep) => run_one(prep, spec, uds, seed).map_err(|e| format!("{e:#}")),
            Err(e) => Err(e.clone()),
        };
        RunRecord { key: *key, workflow: label.clone(), theta: uds.theta, a: uds.a, b: uds.b, seed, outcome }
    };

    let mut records: Vec<RunRecord> = match spec.jobs {
        Some(1) => keys.iter().map(work).collect(),
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| keys.par_iter().map(work).collect()),
            Err(_) => keys.par_iter().map(work).collect(),
        },
        None => keys.par_iter().map(work).collect(),
    };
    records.sort_by_key(|r| r.key);
    records
}

fn csv_err(e: csv::Error) -> anyhow::Error {
    anyhow::anyhow!("writing CSV: {e}")
}

pub fn write_summary<W: Write>(records: &[RunRecord], out: W) -> anyhow::Result<usize> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SUMMARY_HEADER).map_err(csv_err)?;
    let mut rows = 0;
    for r in records {
        let Ok(o) = &r.outcome else { continue };
        w.write_record([
            r.workflow.clone(),
            fmt_sig(r.theta),
            fmt_sig(r.a),
            fmt_sig(r.b),
            r.seed.to_string(),
            fmt_sig(o.result.m_final),
            fmt_sig(o.result.c_final),
            fmt_sig(o.report.norm_m_final),
            fmt_sig(o.report.norm_c_final),
            fmt_sig(o.report.acc),
            fmt_sig(o.report.succ_r),
        ])
        .map_err(csv_err)?;
        rows += 1;
    }
    w.flush()?;
    Ok(rows)
}

pub fn write_failures<W: Write>(records: &[RunRecord], out: W) -> anyhow::Result<usize> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(FAILURE_HEADER).map_err(csv_err)?;
    let mut rows = 0;
    for r in records {
        let Err(e) = &r.outcome else { continue };
        w.write_record([
            r.workflow.clone(),
            fmt_sig(r.theta),
            fmt_sig(r.a),
            fmt_sig(r.b),
            r.key.rep.to_string(),
            r.seed.to_string(),
            e.clone(),
        ])
        .map_err(csv_err)?;
        rows += 1;
    }
    w.flush()?;
    Ok(rows)
}

pub fn write_decisions<W: Write>(
    result: &SimResult,
    graph: &WorkflowGraph,
    pool: &[uds_core::PoolVm],
    out: W,
) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(DECISION_HEADER).map_err(csv_err)?;
    for d in &result.decisions {
        w.write_record([
            fmt_sig(d.time),
            graph.task(d.task).name.clone(),
            d.attempt.to_string(),
            fmt_sig(d.m_curr),
            fmt_sig(d.c_curr),
            fmt_sig(d.norm_m),
            fmt_sig(d.norm_c),
            fmt_sig(d.pmi),
            d.pricing.to_string(),
            pool[d.vm.index()].label.clone(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// What [`write_outputs`] produced.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OutputSummary {
    pub summary: PathBuf,
    pub rows: usize,
    pub failures: usize,
}

/// Writes `summary.csv`, `failures.csv` when some runs failed, and the
/// per-run traces when requested.
pub fn write_outputs(spec: &ExperimentSpec, records: &[RunRecord]) -> anyhow::Result<OutputSummary> {
    let dir = &spec.out;
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let summary = dir.join("summary.csv");
    let rows = write_summary(records, create(&summary)?)?;

    let failures_path = dir.join("failures.csv");
    let failures = records.iter().filter(|r| r.outcome.is_err()).count();
    if failures > 0 {
        write_failures(records, create(&failures_path)?)?;
    } else if failures_path.exists() {
        fs::remove_file(&failures_path)
            .with_context(|| format!("removing stale {}", failures_path.display()))?;
    }

    if spec.trace {
        // graphs are cheap to rebuild and keep the records free of borrows
        let mut graphs: Vec<Option<WorkflowGraph>> = vec![None; spec.workflows.len()];
        for r in records {
            let Ok(o) = &r.outcome else { continue };
            let graph = match &mut graphs[r.key.workflow] {
                Some(g) => g,
                slot => slot.insert(load_workflow(&spec.workflows[r.key.workflow], spec)?),
            };
            let pool = spec.catalog.pool();
            let id = r.key.id();
            write_plan_csv(&o.result.plan, graph, pool, create(&dir.join(format!("trace-{id}.csv")))?)?;
            write_decisions(&o.result, graph, pool, create(&dir.join(format!("decisions-{id}.csv")))?)?;
        }
    }
    Ok(OutputSummary { summary, rows, failures })
}

fn create(path: &Path) -> anyhow::Result<std::io::BufWriter<fs::File>> {
    let f = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(std::io::BufWriter::new(f))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ConfigFile;

    fn spec(workflows: &[&str], thetas: &[f64], reps: u32) -> ExperimentSpec {
        let mut cfg = ConfigFile::default();
        cfg.workflow.workflow = Some(workflows.iter().map(|s| s.to_string()).collect());
        cfg.uds.theta = Some(thetas.to_vec());
        cfg.sweep.reps = Some(reps);
        cfg.sweep.seed = Some(5);
        ExperimentSpec::from_config(cfg).unwrap()
    }

    #[test]
    fn seeds_depend_on_point_and_rep() {
        let s = run_seed(0, "pipeline:20", 0.5, 2.0, 2.0, 0);
        assert_eq!(s, run_seed(0, "pipeline:20", 0.5, 2.0, 2.0, 0));
        assert_ne!(s, run_seed(0, "pipeline:20", 0.5, 2.0, 2.0, 1));
        assert_ne!(s, run_seed(0, "pipeline:20", 0.6, 2.0, 2.0, 0));
        assert_eq!(run_seed(3, "x", 0.5, 2.0, 2.0, 0), run_seed(0, "x", 0.5, 2.0, 2.0, 0).wrapping_add(3));
    }

    #[test]
    fn sweep_rows_and_order() {
        let spec = spec(&["pipeline:12", "fanout:12"], &[0.2, 0.8], 2);
        let records = run_sweep(&spec);
        assert_eq!(records.len(), 8);
        assert!(records.windows(2).all(|w| w[0].key < w[1].key));
        assert!(records.iter().all(|r| r.outcome.is_ok()));
        let mut buf = Vec::new();
        assert_eq!(write_summary(&records, &mut buf).unwrap(), 8);
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("workflow,theta,a,b,seed,m_final,c_final,norm_m,norm_c,acc,succ_r\n"));
    }

    #[test]
    fn failed_workflow_only_loses_its_rows() {
        let spec = spec(&["pipeline:6", "/nonexistent/x.dax"], &[0.5], 3);
        let records = run_sweep(&spec);
        let failed = records.iter().filter(|r| r.outcome.is_err()).count();
        assert_eq!(failed, 3);
        assert!(records.iter().filter(|r| r.outcome.is_err()).all(|r| r.key.workflow == 1));
        let mut buf = Vec::new();
        assert_eq!(write_summary(&records, &mut buf).unwrap(), 3);
    }

    #[test]
    fn single_worker_matches_pool() {
        let mut one = spec(&["aggregation:10"], &[0.3, 0.6], 2);
        let many = one.clone();
        one.jobs = Some(1);
        let (mut x, mut y) = (Vec::new(), Vec::new());
        write_summary(&run_sweep(&one), &mut x).unwrap();
        write_summary(&run_sweep(&many), &mut y).unwrap();
        assert_eq!(x, y);
    }
}
