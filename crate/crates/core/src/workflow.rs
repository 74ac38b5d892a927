//! Workflow DAGs: construction, the DAX reader/writer, entry/exit
//! normalization with pseudo tasks, and synthetic workload generation.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::error::{invalid, Error, Result};
use crate::rng::seeded;

/// Index of a task inside its [`WorkflowGraph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TaskId(pub u32);

impl TaskId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for TaskId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Task {
    pub id: TaskId,
    pub name: String,
    /// Processing demand in million instructions.
    pub demand_mi: f64,
    /// Inserted by [`WorkflowGraph::normalize`]; carries no work.
    pub pseudo: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub src: TaskId,
    pub dst: TaskId,
    /// Transfer volume in megabits.
    pub data_mbit: f64,
}

/// A directed acyclic graph of tasks with data-dependency edges.
///
/// Task ids are dense indices assigned in insertion order; ties in every
/// ordering produced by this crate are broken by ascending id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct WorkflowGraph {
    tasks: Vec<Task>,
    edges: Vec<Edge>,
    preds: Vec<Vec<usize>>,
    succs: Vec<Vec<usize>>,
}

impl WorkflowGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_task(&mut self, name: impl Into<String>, demand_mi: f64) -> Result<TaskId> {
        self.push_task(name.into(), demand_mi, false)
    }

    fn push_task(&mut self, name: String, demand_mi: f64, pseudo: bool) -> Result<TaskId> {
        if !(demand_mi.is_finite() && demand_mi >= 0.0) {
            return Err(invalid(format!("task `{name}` has demand {demand_mi}")));
        }
        let id = TaskId(self.tasks.len() as u32);
        self.tasks.push(Task { id, name, demand_mi, pseudo });
        self.preds.push(Vec::new());
        self.succs.push(Vec::new());
        Ok(id)
    }

    /// Adds a dependency edge. Self loops are reported as cycles; acyclicity
    /// of longer paths is checked by [`WorkflowGraph::topological_order`].
    pub fn add_edge(&mut self, src: TaskId, dst: TaskId, data_mbit: f64) -> Result<()> {
        let n = self.tasks.len();
        for t in [src, dst] {
            if t.index() >= n {
                return Err(Error::UnknownReference(t.to_string()));
            }
        }
        if src == dst {
            return Err(Error::Cycle(self.tasks[src.index()].name.clone()));
        }
        if !(data_mbit.is_finite() && data_mbit >= 0.0) {
            return Err(invalid(format!("edge data volume {data_mbit}")));
        }
        if self.edge_between(src, dst).is_some() {
            return Err(Error::DuplicateEdge(
                self.tasks[src.index()].name.clone(),
                self.tasks[dst.index()].name.clone(),
            ));
        }
        let idx = self.edges.len();
        self.edges.push(Edge { src, dst, data_mbit });
        self.succs[src.index()].push(idx);
        self.preds[dst.index()].push(idx);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }

    pub fn tasks(&self) -> &[Task] {
        &self.tasks
    }

    pub fn task(&self, id: TaskId) -> &Task {
        &self.tasks[id.index()]
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge_between(&self, src: TaskId, dst: TaskId) -> Option<&Edge> {
        self.succs.get(src.index())?.iter().map(|&e| &self.edges[e]).find(|e| e.dst == dst)
    }

    /// Incoming edges of `id`.
    pub fn in_edges(&self, id: TaskId) -> impl Iterator<Item = &Edge> + '_ {
        self.preds[id.index()].iter().map(move |&e| &self.edges[e])
    }

    /// Outgoing edges of `id`.
    pub fn out_edges(&self, id: TaskId) -> impl Iterator<Item = &Edge> + '_ {
        self.succs[id.index()].iter().map(move |&e| &self.edges[e])
    }

    pub fn predecessors(&self, id: TaskId) -> impl Iterator<Item = TaskId> + '_ {
        self.in_edges(id).map(|e| e.src)
    }

    pub fn successors(&self, id: TaskId) -> impl Iterator<Item = TaskId> + '_ {
        self.out_edges(id).map(|e| e.dst)
    }

    pub fn entries(&self) -> Vec<TaskId> {
        self.ids().filter(|t| self.preds[t.index()].is_empty()).collect()
    }

    pub fn exits(&self) -> Vec<TaskId> {
        self.ids().filter(|t| self.succs[t.index()].is_empty()).collect()
    }

    /// The unique entry task, if there is exactly one.
    pub fn entry(&self) -> Option<TaskId> {
        match self.entries().as_slice() {
            [one] => Some(*one),
            _ => None,
        }
    }

    /// The unique exit task, if there is exactly one.
    pub fn exit(&self) -> Option<TaskId> {
        match self.exits().as_slice() {
            [one] => Some(*one),
            _ => None,
        }
    }

    pub fn ids(&self) -> impl Iterator<Item = TaskId> {
        (0..self.tasks.len() as u32).map(TaskId)
    }

    /// Tasks that carry real work (everything except pseudo tasks).
    pub fn real_tasks(&self) -> impl Iterator<Item = &Task> + '_ {
        self.tasks.iter().filter(|t| !t.pseudo)
    }

    pub fn real_task_count(&self) -> usize {
        self.real_tasks().count()
    }

    pub fn find(&self, name: &str) -> Option<TaskId> {
        self.tasks.iter().find(|t| t.name == name).map(|t| t.id)
    }

    /// Kahn's algorithm with ascending-id tie breaking.
    pub fn topological_order(&self) -> Result<Vec<TaskId>> {
        let n = self.tasks.len();
        let mut indegree: Vec<usize> = self.preds.iter().map(Vec::len).collect();
        let mut heap: BinaryHeap<Reverse<TaskId>> =
            self.ids().filter(|t| indegree[t.index()] == 0).map(Reverse).collect();
        let mut order = Vec::with_capacity(n);
        while let Some(Reverse(t)) = heap.pop() {
            order.push(t);
            for s in self.successors(t) {
                indegree[s.index()] -= 1;
                if indegree[s.index()] == 0 {
                    heap.push(Reverse(s));
                }
            }
        }
        if order.len() == n {
            return Ok(order);
        }
        // Every remaining task has a remaining predecessor, so walking
        // predecessors must revisit a task; that task lies on a cycle.
        let mut seen = HashSet::new();
        let mut cur = self.ids().find(|t| indegree[t.index()] > 0).expect("unordered task exists");
        while seen.insert(cur) {
            cur = self
                .predecessors(cur)
                .find(|p| indegree[p.index()] > 0)
                .expect("remaining task has a remaining predecessor");
        }
        Err(Error::Cycle(self.tasks[cur.index()].name.clone()))
    }

    /// Adds zero-demand pseudo tasks so the graph has exactly one entry and
    /// one exit. Pseudo edges carry no data. A graph that already has a
    /// single entry and exit is returned unchanged.
    pub fn normalize(mut self) -> Result<Self> {
        if self.is_empty() {
            return Err(Error::EmptyGraph);
        }
        self.topological_order()?;
        let entries = self.entries();
        if entries.len() > 1 {
            let p = self.push_task(self.fresh_name("pseudo_entry"), 0.0, true)?;
            for e in entries {
                self.add_edge(p, e, 0.0)?;
            }
        }
        let exits = self.exits();
        if exits.len() > 1 {
            let p = self.push_task(self.fresh_name("pseudo_exit"), 0.0, true)?;
            for e in exits {
                self.add_edge(e, p, 0.0)?;
            }
        }
        Ok(self)
    }

    fn fresh_name(&self, base: &str) -> String {
        let mut name = base.to_string();
        let mut k = 1;
        while self.find(&name).is_some() {
            name = format!("{base}_{k}");
            k += 1;
        }
        name
    }

    /// Sum of all task demands in MI.
    pub fn total_demand(&self) -> f64 {
        self.tasks.iter().map(|t| t.demand_mi).sum()
    }
}

pub fn normalize_entries_exits(graph: WorkflowGraph) -> Result<WorkflowGraph> {
    graph.normalize()
}

pub fn topological_order(graph: &WorkflowGraph) -> Result<Vec<TaskId>> {
    graph.topological_order()
}

// ---------------------------------------------------------------------------
// DAX

const BYTES_TO_MBIT: f64 = 8.0 / 1.0e6;

#[derive(Default)]
struct DaxJob {
    inputs: HashMap<String, f64>,
    outputs: HashMap<String, f64>,
}

/// Reads the DAX subset consumed by the model: `job@id`, `job@runtime`,
/// `uses@file/@link/@size` and `child`/`parent` references.
///
/// Runtimes are seconds on a VM of `runtime_speed_mips`, so the demand of a
/// job is `runtime * runtime_speed_mips`. File sizes are bytes; an edge
/// carries the total size of files the parent writes and the child reads.
pub fn parse_dax(document: &str, runtime_speed_mips: f64) -> Result<WorkflowGraph> {
    if !(runtime_speed_mips > 0.0) {
        return Err(invalid("runtime reference speed must be positive"));
    }
    let doc = roxmltree::Document::parse(document).map_err(|e| {
        let pos = e.pos();
        Error::Xml { line: pos.row, column: pos.col, message: e.to_string() }
    })?;
    let line_of = |node: roxmltree::Node| doc.text_pos_at(node.range().start).row;
    let doc_err = |node: roxmltree::Node, message: String| Error::Document { line: line_of(node), message };

    let mut graph = WorkflowGraph::new();
    let mut jobs: Vec<DaxJob> = Vec::new();
    let mut by_name: HashMap<String, TaskId> = HashMap::new();

    for node in doc.descendants().filter(|n| n.has_tag_name("job")) {
        let id = node.attribute("id").ok_or_else(|| doc_err(node, "job without id".into()))?;
        let runtime: f64 = node
            .attribute("runtime")
            .ok_or_else(|| doc_err(node, format!("job `{id}` has no runtime")))?
            .trim()
            .parse()
            .map_err(|_| doc_err(node, format!("job `{id}` has a non-numeric runtime")))?;
        if !(runtime.is_finite() && runtime >= 0.0) {
            return Err(doc_err(node, format!("job `{id}` has runtime {runtime}")));
        }
        if by_name.contains_key(id) {
            return Err(doc_err(node, format!("duplicate job id `{id}`")));
        }
        let mut job = DaxJob::default();
        for uses in node.children().filter(|n| n.has_tag_name("uses")) {
            let Some(file) = uses.attribute("file").or_else(|| uses.attribute("name")) else {
                continue;
            };
            let size = match uses.attribute("size") {
                Some(s) => s
                    .trim()
                    .parse::<f64>()
                    .map_err(|_| doc_err(uses, format!("file `{file}` has a non-numeric size")))?,
                None => 0.0,
            };
            match uses.attribute("link") {
                Some("input") => {
                    job.inputs.insert(file.to_string(), size);
                }
                Some("output") => {
                    job.outputs.insert(file.to_string(), size);
                }
                _ => {}
            }
        }
        let tid =
            graph.add_task(id, runtime * runtime_speed_mips).map_err(|e| doc_err(node, e.to_string()))?;
        by_name.insert(id.to_string(), tid);
        jobs.push(job);
    }

    for child in doc.descendants().filter(|n| n.has_tag_name("child")) {
        let cref = child.attribute("ref").ok_or_else(|| doc_err(child, "child without ref".into()))?;
        let &c = by_name.get(cref).ok_or_else(|| Error::UnknownReference(cref.to_string()))?;
        for parent in child.children().filter(|n| n.has_tag_name("parent")) {
            let pref = parent.attribute("ref").ok_or_else(|| doc_err(parent, "parent without ref".into()))?;
            let &p = by_name.get(pref).ok_or_else(|| Error::UnknownReference(pref.to_string()))?;
            if p == c {
                return Err(Error::Cycle(cref.to_string()));
            }
            if graph.edge_between(p, c).is_some() {
                continue;
            }
            let (pj, cj) = (&jobs[p.index()], &jobs[c.index()]);
            let bytes: f64 = pj
                .outputs
                .iter()
                .filter_map(|(f, &out_size)| {
                    cj.inputs.get(f).map(|&in_size| if out_size > 0.0 { out_size } else { in_size })
                })
                .sum();
            graph.add_edge(p, c, bytes * BYTES_TO_MBIT)?;
        }
    }

    graph.topological_order()?;
    Ok(graph)
}

fn escape_attr(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for ch in s.chars() {
        match ch {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}

/// Writes `graph` in the DAX subset read by [`parse_dax`]. Every edge is
/// represented by one file produced by its source and consumed by its
/// destination.
pub fn to_dax(graph: &WorkflowGraph, runtime_speed_mips: f64) -> String {
    use std::fmt::Write;

    let file_name = |e: &Edge| format!("f_{}_{}", e.src.0, e.dst.0);
    let mut out = String::new();
    out.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    out.push_str("<adag version=\"2.1\">\n");
    for task in graph.tasks() {
        let runtime = task.demand_mi / runtime_speed_mips;
        let _ = writeln!(out, "  <job id=\"{}\" runtime=\"{}\">", escape_attr(&task.name), runtime);
        for e in graph.in_edges(task.id) {
            let _ = writeln!(
                out,
                "    <uses file=\"{}\" link=\"input\" size=\"{}\"/>",
                file_name(e),
                e.data_mbit / BYTES_TO_MBIT
            );
        }
        for e in graph.out_edges(task.id) {
            let _ = writeln!(
                out,
                "    <uses file=\"{}\" link=\"output\" size=\"{}\"/>",
                file_name(e),
                e.data_mbit / BYTES_TO_MBIT
            );
        }
        out.push_str("  </job>\n");
    }
    for task in graph.tasks() {
        let mut parents = graph.predecessors(task.id).peekable();
        if parents.peek().is_none() {
            continue;
        }
        let _ = writeln!(out, "  <child ref=\"{}\">", escape_attr(&task.name));
        for p in parents {
            let _ = writeln!(out, "    <parent ref=\"{}\"/>", escape_attr(&graph.task(p).name));
        }
        out.push_str("  </child>\n");
    }
    out.push_str("</adag>\n");
    out
}

// ---------------------------------------------------------------------------
// Synthetic workloads

/// Basic structures found in scientific workflows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Pattern {
    /// A chain of tasks.
    Pipeline,
    /// One source, `n - 2` parallel tasks, one sink.
    FanoutFanin,
    /// `n - 1` independent producers feeding one sink.
    Aggregation,
    /// One source feeding `n - 1` independent consumers.
    Distribution,
    /// Two layers with all-to-all dependencies between them.
    Redistribution,
}

impl Pattern {
    pub const ALL: [Pattern; 5] = [
        Pattern::Pipeline,
        Pattern::FanoutFanin,
        Pattern::Aggregation,
        Pattern::Distribution,
        Pattern::Redistribution,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Pattern::Pipeline => "pipeline",
            Pattern::FanoutFanin => "fanout_fanin",
            Pattern::Aggregation => "aggregation",
            Pattern::Distribution => "distribution",
            Pattern::Redistribution => "redistribution",
        }
    }
}

impl fmt::Display for Pattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Pattern {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace('-', "_");
        match key.as_str() {
            "pipeline" | "pipelining" => Ok(Pattern::Pipeline),
            "fanout_fanin" | "fanout" | "process" => Ok(Pattern::FanoutFanin),
            "aggregation" => Ok(Pattern::Aggregation),
            "distribution" => Ok(Pattern::Distribution),
            "redistribution" => Ok(Pattern::Redistribution),
            _ => Err(invalid(format!("unknown workflow pattern `{s}`"))),
        }
    }
}

/// Uniform ranges for synthetic task demands and edge volumes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticConfig {
    pub demand_mi: (f64, f64),
    pub data_mbit: (f64, f64),
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self { demand_mi: (1_000.0, 100_000.0), data_mbit: (8.0, 800.0) }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        for (what, (lo, hi)) in [("demand", self.demand_mi), ("data", self.data_mbit)] {
            if !(lo.is_finite() && hi.is_finite() && 0.0 <= lo && lo <= hi) {
                return Err(invalid(format!("synthetic {what} range [{lo}, {hi}]")));
            }
        }
        Ok(())
    }
}

/// Generates a workflow of `n_tasks` tasks with the given structure.
/// Deterministic for a fixed `(pattern, n_tasks, seed, config)`.
pub fn generate_synthetic(
    pattern: Pattern,
    n_tasks: usize,
    seed: u64,
    config: &SyntheticConfig,
) -> Result<WorkflowGraph> {
    if n_tasks == 0 {
        return Err(invalid("a synthetic workflow needs at least one task"));
    }
    config.validate()?;
    let mut rng = seeded(seed);
    let mut uniform = |(lo, hi): (f64, f64)| if lo == hi { lo } else { rng.gen_range(lo..=hi) };

    let mut g = WorkflowGraph::new();
    let ids: Vec<TaskId> = (0..n_tasks)
        .map(|i| g.add_task(format!("t{i:04}"), uniform(config.demand_mi)))
        .collect::<Result<_>>()?;

    let mut pairs: Vec<(usize, usize)> = Vec::new();
    let n = n_tasks;
    match pattern {
        Pattern::Pipeline => pairs.extend((1..n).map(|i| (i - 1, i))),
        Pattern::FanoutFanin => match n {
            1 => {}
            2 => pairs.push((0, 1)),
            _ => {
                for m in 1..n - 1 {
                    pairs.push((0, m));
                    pairs.push((m, n - 1));
                }
            }
        },
        Pattern::Aggregation => pairs.extend((0..n.saturating_sub(1)).map(|i| (i, n - 1))),
        Pattern::Distribution => pairs.extend((1..n).map(|i| (0, i))),
        Pattern::Redistribution => {
            let first = n.div_ceil(2);
            for a in 0..first {
                for b in first..n {
                    pairs.push((a, b));
                }
            }
        }
    }
    for (a, b) in pairs {
        g.add_edge(ids[a], ids[b], uniform(config.data_mbit))?;
    }
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain(names: &[&str]) -> WorkflowGraph {
        let mut g = WorkflowGraph::new();
        let ids: Vec<_> = names.iter().map(|n| g.add_task(*n, 1.0).unwrap()).collect();
        for w in ids.windows(2) {
            g.add_edge(w[0], w[1], 0.0).unwrap();
        }
        g
    }

    #[test]
    fn dax_two_jobs_one_edge() {
        let doc = r#"<adag>
  <job id="a" runtime="10"><uses file="x" link="output" size="1000000"/></job>
  <job id="b" runtime="20"><uses file="x" link="input" size="1000000"/></job>
  <child ref="b"><parent ref="a"/></child>
</adag>"#;
        let g = parse_dax(doc, 1000.0).unwrap();
        assert_eq!(g.len(), 2);
        assert_eq!(g.task(TaskId(0)).demand_mi, 10_000.0);
        assert_eq!(g.task(TaskId(1)).demand_mi, 20_000.0);
        assert_eq!(g.edges().len(), 1);
        assert_eq!(g.edges()[0].data_mbit, 8.0);
    }

    #[test]
    fn dax_without_dependencies() {
        let doc = r#"<adag><job id="a" runtime="1"/><job id="b" runtime="2"/></adag>"#;
        let g = parse_dax(doc, 1000.0).unwrap();
        assert_eq!(g.edges().len(), 0);
        let g = g.normalize().unwrap();
        assert_eq!(g.len(), 4);
        assert!(g.entry().is_some() && g.exit().is_some());
    }

    #[test]
    fn dax_edge_without_sizes_has_no_data() {
        let doc = r#"<adag><job id="a" runtime="1"/><job id="b" runtime="2"/>
<child ref="b"><parent ref="a"/></child></adag>"#;
        let g = parse_dax(doc, 1000.0).unwrap();
        assert_eq!(g.edges()[0].data_mbit, 0.0);
    }

    #[test]
    fn dax_self_loop_is_a_cycle() {
        let doc = r#"<adag><job id="a" runtime="1"/><child ref="a"><parent ref="a"/></child></adag>"#;
        assert_eq!(parse_dax(doc, 1000.0), Err(Error::Cycle("a".into())));
    }

    #[test]
    fn dax_longer_cycle_names_a_member() {
        let doc = r#"<adag><job id="a" runtime="1"/><job id="b" runtime="1"/><job id="c" runtime="1"/>
<child ref="b"><parent ref="a"/><parent ref="c"/></child>
<child ref="c"><parent ref="b"/></child></adag>"#;
        match parse_dax(doc, 1000.0) {
            Err(Error::Cycle(name)) => assert!(name == "b" || name == "c", "{name}"),
            other => panic!("expected cycle, got {other:?}"),
        }
    }

    #[test]
    fn dax_unknown_reference() {
        let doc = r#"<adag><job id="a" runtime="1"/><child ref="a"><parent ref="zz"/></child></adag>"#;
        assert_eq!(parse_dax(doc, 1000.0), Err(Error::UnknownReference("zz".into())));
    }

    #[test]
    fn dax_malformed_reports_line() {
        let doc = "<adag>\n<job id=\"a\" runtime=\"1\">\n</adag>";
        match parse_dax(doc, 1000.0) {
            Err(Error::Xml { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected xml error, got {other:?}"),
        }
    }

    #[test]
    fn dax_missing_runtime() {
        let doc = "<adag>\n<job id=\"a\"/></adag>";
        assert!(matches!(parse_dax(doc, 1000.0), Err(Error::Document { line: 2, .. })));
    }

    #[test]
    fn normalize_multiple_entries() {
        let mut g = WorkflowGraph::new();
        let a = g.add_task("a", 1.0).unwrap();
        let b = g.add_task("b", 1.0).unwrap();
        let c = g.add_task("c", 1.0).unwrap();
        g.add_edge(a, c, 5.0).unwrap();
        g.add_edge(b, c, 5.0).unwrap();
        let g = g.normalize().unwrap();
        assert_eq!(g.len(), 4);
        let p = g.entry().unwrap();
        let pt = g.task(p);
        assert!(pt.pseudo);
        assert_eq!(pt.demand_mi, 0.0);
        let mut succ: Vec<_> = g.successors(p).collect();
        succ.sort();
        assert_eq!(succ, vec![a, b]);
        assert!(g.out_edges(p).all(|e| e.data_mbit == 0.0));
        assert_eq!(g.exit(), Some(c));
    }

    #[test]
    fn normalize_three_exits() {
        let mut g = WorkflowGraph::new();
        let a = g.add_task("a", 1.0).unwrap();
        for n in ["x", "y", "z"] {
            let t = g.add_task(n, 1.0).unwrap();
            g.add_edge(a, t, 1.0).unwrap();
        }
        let g = g.normalize().unwrap();
        let exit = g.exit().unwrap();
        assert!(g.task(exit).pseudo);
        assert_eq!(g.in_edges(exit).count(), 3);
        assert!(g.in_edges(exit).all(|e| e.data_mbit == 0.0));
    }

    #[test]
    fn normalize_chain_is_identity() {
        let g = chain(&["a", "b", "c"]);
        assert_eq!(g.clone().normalize().unwrap(), g);
    }

    #[test]
    fn normalize_empty_fails() {
        assert_eq!(WorkflowGraph::new().normalize(), Err(Error::EmptyGraph));
    }

    #[test]
    fn topo_chain_and_single() {
        let g = chain(&["a", "b", "c"]);
        assert_eq!(g.topological_order().unwrap(), vec![TaskId(0), TaskId(1), TaskId(2)]);
        let g = chain(&["a"]);
        assert_eq!(g.topological_order().unwrap(), vec![TaskId(0)]);
    }

    #[test]
    fn topo_diamond_tie_break() {
        let mut g = WorkflowGraph::new();
        let a = g.add_task("a", 1.0).unwrap();
        let b = g.add_task("b", 1.0).unwrap();
        let c = g.add_task("c", 1.0).unwrap();
        let d = g.add_task("d", 1.0).unwrap();
        g.add_edge(a, c, 0.0).unwrap();
        g.add_edge(a, b, 0.0).unwrap();
        g.add_edge(c, d, 0.0).unwrap();
        g.add_edge(b, d, 0.0).unwrap();
        assert_eq!(g.topological_order().unwrap(), vec![a, b, c, d]);
    }

    #[test]
    fn duplicate_edges_rejected() {
        let mut g = chain(&["a", "b"]);
        assert!(matches!(g.add_edge(TaskId(0), TaskId(1), 1.0), Err(Error::DuplicateEdge(..))));
    }

    #[test]
    fn synthetic_shapes() {
        let cfg = SyntheticConfig::default();
        let g = generate_synthetic(Pattern::Pipeline, 4, 7, &cfg).unwrap();
        assert_eq!((g.len(), g.edges().len()), (4, 3));

        let g = generate_synthetic(Pattern::FanoutFanin, 6, 7, &cfg).unwrap();
        assert_eq!(g.entries().len(), 1);
        assert_eq!(g.exits().len(), 1);
        let src = g.entry().unwrap();
        assert_eq!(g.successors(src).count(), 4);
        assert_eq!(g.in_edges(g.exit().unwrap()).count(), 4);

        let g = generate_synthetic(Pattern::Aggregation, 5, 1, &cfg).unwrap();
        assert_eq!((g.entries().len(), g.exits().len()), (4, 1));
        let g = generate_synthetic(Pattern::Distribution, 5, 1, &cfg).unwrap();
        assert_eq!((g.entries().len(), g.exits().len()), (1, 4));
        let g = generate_synthetic(Pattern::Redistribution, 6, 1, &cfg).unwrap();
        assert_eq!(g.edges().len(), 9);

        for t in g.tasks() {
            assert!((1_000.0..=100_000.0).contains(&t.demand_mi));
        }
        for e in g.edges() {
            assert!((8.0..=800.0).contains(&e.data_mbit));
        }
    }

    #[test]
    fn synthetic_is_deterministic() {
        let cfg = SyntheticConfig::default();
        for p in Pattern::ALL {
            let a = generate_synthetic(p, 12, 99, &cfg).unwrap();
            let b = generate_synthetic(p, 12, 99, &cfg).unwrap();
            assert_eq!(a, b);
        }
        let a = generate_synthetic(Pattern::Pipeline, 12, 1, &cfg).unwrap();
        let b = generate_synthetic(Pattern::Pipeline, 12, 2, &cfg).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn synthetic_zero_tasks() {
        assert!(generate_synthetic(Pattern::Pipeline, 0, 1, &SyntheticConfig::default()).is_err());
    }

    #[test]
    fn pattern_names_round_trip() {
        for p in Pattern::ALL {
            assert_eq!(p.name().parse::<Pattern>().unwrap(), p);
        }
        assert!("mesh".parse::<Pattern>().is_err());
    }
}
