//! The `bounds`, `validate` and `generate` subcommands. Each writes its
//! report to `out` and leaves process exit codes to the caller.

use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use anyhow::{bail, Context};
use uds_core::schedcore::{billing_records, fmt_sig};
use uds_core::workflow::{generate_synthetic, parse_dax, to_dax};
use uds_core::{Bounds, PoolVm, Pricing, SchedulePlan, VmCatalog, WorkflowGraph};

use crate::config::{ExperimentSpec, WorkflowSource};
use crate::runner::{load_workflow, prepare};

fn plan_line(
    name: &str,
    plan: &SchedulePlan,
    pool: &[PoolVm],
    makespan: f64,
    cost: f64,
) -> anyhow::Result<String> {
    let (mut reliable, mut unreliable) = (0, 0);
    for p in &plan.placements {
        match p.pricing {
            Pricing::Reliable => reliable += 1,
            Pricing::Unreliable => unreliable += 1,
        }
    }
    let records = billing_records(plan, pool)?;
    let vms: Vec<&str> = records.iter().map(|r| pool[r.vm.index()].label.as_str()).collect();
    Ok(format!(
        "  {name:<4} makespan {} s, cost ${}, {reliable} reliable / {unreliable} unreliable tasks, VMs: {}",
        fmt_sig(makespan),
        fmt_sig(cost),
        vms.join(" ")
    ))
}

/// Prints the ideal bounds of every workflow in `spec`, and the upper bounds
/// for each `(a, b)` pair.
pub fn cmd_bounds(spec: &ExperimentSpec, out: &mut dyn Write) -> anyhow::Result<()> {
    let pool = spec.catalog.pool();
    for source in &spec.workflows {
        let graph = load_workflow(source, spec)?;
        let prep = prepare(&graph, spec)?;
        let mut s = String::new();
        writeln!(
            s,
            "{}: {} tasks ({} real), {} edges",
            source.label(),
            graph.len(),
            graph.real_task_count(),
            graph.edges().len()
        )?;
        writeln!(s, "  m_lower = {} s", fmt_sig(prep.m_lower))?;
        writeln!(s, "  c_lower = ${}", fmt_sig(prep.c_lower))?;
        let heft_cost = uds_core::schedcore::plan_cost(&prep.heft, pool)?;
        let gc_makespan = uds_core::schedcore::plan_makespan(&prep.gc)?;
        writeln!(s, "{}", plan_line("HEFT", &prep.heft, pool, prep.m_lower, heft_cost)?)?;
        writeln!(s, "{}", plan_line("GC", &prep.gc, pool, gc_makespan, prep.c_lower)?)?;
        for &a in &spec.a_values {
            for &b in &spec.b_values {
                let bounds = Bounds::new(prep.m_lower, prep.c_lower, a, b)?;
                writeln!(
                    s,
                    "  a = {}, b = {}: m_upper = {} s, c_upper = ${}",
                    fmt_sig(a),
                    fmt_sig(b),
                    fmt_sig(bounds.m_upper),
                    fmt_sig(bounds.c_upper)
                )?;
            }
        }
        out.write_all(s.as_bytes())?;
    }
    Ok(())
}

/// Structural findings on one DAX file.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Validation {
    pub tasks: usize,
    pub edges: usize,
    pub warnings: Vec<String>,
}

pub fn validate_dax(path: &Path, catalog: &VmCatalog) -> anyhow::Result<(Validation, WorkflowGraph)> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let graph =
        parse_dax(&text, catalog.slowest_speed()).with_context(|| format!("parsing {}", path.display()))?;
    let mut v = Validation { tasks: graph.len(), edges: graph.edges().len(), warnings: Vec::new() };
    let isolated: Vec<&str> = graph
        .tasks()
        .iter()
        .filter(|t| graph.predecessors(t.id).next().is_none() && graph.successors(t.id).next().is_none())
        .map(|t| t.name.as_str())
        .collect();
    if !isolated.is_empty() && graph.len() > 1 {
        v.warnings.push(format!("isolated tasks: {}", isolated.join(", ")));
    }
    let (entries, exits) = (graph.entries().len(), graph.exits().len());
    if entries > 1 {
        v.warnings.push(format!("{entries} entry tasks, adding a pseudo entry"));
    }
    if exits > 1 {
        v.warnings.push(format!("{exits} exit tasks, adding a pseudo exit"));
    }
    let zero: usize = graph.tasks().iter().filter(|t| t.demand_mi == 0.0).count();
    if zero > 0 {
        v.warnings.push(format!("{zero} tasks with zero runtime"));
    }
    let graph = graph.normalize()?;
    Ok((v, graph))
}

/// Validates each file; returns whether all of them were valid.
pub fn cmd_validate(
    paths: &[impl AsRef<Path>],
    catalog: &VmCatalog,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> anyhow::Result<bool> {
    let mut ok = true;
    for path in paths {
        let path = path.as_ref();
        match validate_dax(path, catalog) {
            Ok((v, graph)) => {
                writeln!(out, "{}: {} tasks, {} edges", path.display(), v.tasks, v.edges)?;
                for w in &v.warnings {
                    writeln!(err, "warning: {}: {w}", path.display())?;
                }
                if graph.len() != v.tasks {
                    writeln!(out, "  normalized: {} tasks, {} edges", graph.len(), graph.edges().len())?;
                }
            }
            Err(e) => {
                ok = false;
                writeln!(err, "error: {e:#}")?;
            }
        }
    }
    Ok(ok)
}

/// Writes each synthetic workflow of `spec` as DAX. With a single workflow
/// `target` is the file name; otherwise it is a directory.
pub fn cmd_generate(spec: &ExperimentSpec, target: Option<&Path>, out: &mut dyn Write) -> anyhow::Result<()> {
    let speed = spec.catalog.slowest_speed();
    let mut docs = Vec::new();
    for source in &spec.workflows {
        let WorkflowSource::Synthetic { pattern, tasks } = source else {
            bail!("`{}` is not a synthetic workflow", source.label());
        };
        // pseudo tasks are left out; readers add their own
        let graph = generate_synthetic(*pattern, *tasks, spec.workflow_seed, &spec.synthetic)?;
        docs.push((format!("{pattern}-{tasks}.dax"), to_dax(&graph, speed)));
    }
    match (target, docs.len()) {
        (None, _) => {
            for (_, doc) in &docs {
                out.write_all(doc.as_bytes())?;
            }
        }
        (Some(path), 1) => {
            std::fs::write(path, &docs[0].1).with_context(|| format!("writing {}", path.display()))?;
        }
        (Some(dir), _) => {
            std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            for (name, doc) in &docs {
                let path = dir.join(name);
                std::fs::write(&path, doc).with_context(|| format!("writing {}", path.display()))?;
            }
        }
    }
    Ok(())
}
