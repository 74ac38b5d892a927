//! The uncertainty-driven dispatch policy: estimate where the schedule is
//! heading, let the fuzzy controller pick a pricing class, then place the task
//! on the earliest-finishing VM of that class.

use std::collections::BTreeSet;

use crate::baselines::{Bounds, Planner, TieBreak};
use crate::error::{invalid, Result};
use crate::flc::Flc;
use crate::resources::{PoolVm, Pricing, VmId};
use crate::schedcore::{Finish, Timing};
use crate::simulator::{Dispatch, DispatchView, Policy};
use crate::workflow::{TaskId, WorkflowGraph};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UdsConfig {
    pub theta: f64,
    pub a: f64,
    pub b: f64,
}

impl Default for UdsConfig {
    fn default() -> Self {
        Self { theta: 0.5, a: 2.0, b: 2.0 }
    }
}

impl UdsConfig {
    /// `theta` may sit on either end of `[0, 1]`: zero forces every task onto
    /// reliable VMs, which is useful as a degenerate reference.
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.theta) {
            return Err(invalid(format!("theta {} outside [0, 1]", self.theta)));
        }
        for (name, v) in [("a", self.a), ("b", self.b)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

/// One dispatch of one task attempt.
#[derive(Debug, Clone, PartialEq)]
pub struct DispatchDecision {
    pub task: TaskId,
    pub attempt: u32,
    pub time: f64,
    pub m_curr: f64,
    pub c_curr: f64,
    pub norm_m: f64,
    pub norm_c: f64,
    pub pmi: f64,
    pub pricing: Pricing,
    pub vm: VmId,
}

pub fn compute_bounds(
    graph: &WorkflowGraph,
    pool: &[PoolVm],
    timing: &Timing,
    a: f64,
    b: f64,
) -> Result<Bounds> {
    Planner::new(graph, pool, *timing)?.bounds(a, b)
}

/// Linear map of `[lower, upper]` onto `[0, 1]`, clamped.
pub fn normalize_metric(value: f64, lower: f64, upper: f64) -> Result<f64> {
    if !(upper > lower) {
        return Err(invalid(format!("upper bound {upper} not above lower bound {lower}")));
    }
    Ok(((value - lower) / (upper - lower)).clamp(0.0, 1.0))
}

/// Maps the normalized estimates of one task to a PMI and a pricing class.
pub trait PricingRule {
    fn choose(&self, task: TaskId, norm_m: f64, norm_c: f64) -> Result<(f64, Pricing)>;
}

/// The fuzzy controller with a threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct FlcRule {
    pub flc: Flc,
    pub theta: f64,
}

impl PricingRule for FlcRule {
    fn choose(&self, _task: TaskId, norm_m: f64, norm_c: f64) -> Result<(f64, Pricing)> {
        let d = self.flc.decide(norm_m, norm_c, self.theta)?;
        Ok((d.pmi, d.pricing))
    }
}

/// Decides one ready task against `view`.
pub fn dispatch_ready_task<R: PricingRule + ?Sized>(
    view: &DispatchView<'_, '_>,
    task: TaskId,
    attempt: u32,
    bounds: &Bounds,
    rule: &R,
) -> Result<DispatchDecision> {
    let planner = view.planner;
    let m_curr = planner.heft_estimate(view.state)?;
    let c_curr = planner.gc_estimate(view.state)?;
    let norm_m = normalize_metric(m_curr, bounds.m_lower, bounds.m_upper)?;
    let norm_c = normalize_metric(c_curr, bounds.c_lower, bounds.c_upper)?;
    let (pmi, pricing) = rule.choose(task, norm_m, norm_c)?;
    let choice = planner.best_eft(view.state, task, |vm| vm.pricing == pricing, TieBreak::CheaperFirst)?;
    Ok(DispatchDecision {
        task,
        attempt,
        time: view.time,
        m_curr,
        c_curr,
        norm_m,
        norm_c,
        pmi,
        pricing,
        vm: choice.vm,
    })
}

/// UDS as a simulator policy.
#[derive(Debug, Clone)]
pub struct UdsPolicy<R = FlcRule> {
    pub bounds: Bounds,
    pub rule: R,
}

impl UdsPolicy<FlcRule> {
    pub fn new(bounds: Bounds, config: &UdsConfig, flc: Flc) -> Result<Self> {
        config.validate()?;
        Ok(Self { bounds, rule: FlcRule { flc, theta: config.theta } })
    }
}

impl<R: PricingRule> Policy for UdsPolicy<R> {
    fn dispatch(&mut self, view: &DispatchView<'_, '_>, task: TaskId, attempt: u32) -> Result<Dispatch> {
        let d = dispatch_ready_task(view, task, attempt, &self.bounds, &self.rule)?;
        Ok(Dispatch { vm: d.vm, decision: Some(d) })
    }
}

/// Time at which every input of `task` is available on at least one VM.
///
/// `current` tells whether a (VM, lease) pair still holds its local outputs.
/// Returns `None` while a predecessor is unfinished.
pub fn readiness_time(
    graph: &WorkflowGraph,
    timing: &Timing,
    finish: &[Option<Finish>],
    task: TaskId,
    current: impl Fn((VmId, u32)) -> bool,
) -> Option<f64> {
    let mut hosts: Vec<(VmId, u32)> = Vec::new();
    for e in graph.in_edges(task) {
        let f = finish[e.src.index()]?;
        if let Some(h) = f.host.filter(|&h| current(h)) {
            if !hosts.contains(&h) {
                hosts.push(h);
            }
        }
    }
    let at = |host: Option<(VmId, u32)>| {
        graph.in_edges(task).fold(0.0f64, |acc, e| {
            let f = finish[e.src.index()].expect("checked above");
            let same = host.is_some() && f.host == host;
            acc.max(f.time + timing.transfer(e.data_mbit, same))
        })
    };
    Some(hosts.into_iter().map(|h| at(Some(h))).fold(at(None), f64::min))
}

/// Successors of `task` whose predecessors have all finished, with the time
/// they become ready.
pub fn on_task_completion(
    graph: &WorkflowGraph,
    timing: &Timing,
    finish: &[Option<Finish>],
    task: TaskId,
    current: impl Fn((VmId, u32)) -> bool,
) -> Vec<(TaskId, f64)> {
    graph
        .successors(task)
        .filter_map(|s| readiness_time(graph, timing, finish, s, &current).map(|t| (s, t)))
        .collect()
}

/// Ready tasks ordered by readiness time, then id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReadyQueue {
    items: BTreeSet<(ReadyAt, TaskId)>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct ReadyAt(f64);

impl Eq for ReadyAt {}

impl PartialOrd for ReadyAt {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for ReadyAt {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0)
    }
}

impl ReadyQueue {
    /// Adds `task` unless it is already queued.
    pub fn push(&mut self, task: TaskId, ready_at: f64) -> bool {
        if self.contains(task) {
            return false;
        }
        self.items.insert((ReadyAt(ready_at), task))
    }

    pub fn contains(&self, task: TaskId) -> bool {
        self.items.iter().any(|&(_, t)| t == task)
    }

    pub fn remove(&mut self, task: TaskId) -> bool {
        let before = self.items.len();
        self.items.retain(|&(_, t)| t != task);
        self.items.len() != before
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Snapshot in dispatch order.
    pub fn ordered(&self) -> Vec<(TaskId, f64)> {
        self.items.iter().map(|&(r, t)| (t, r.0)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::resources::VmCatalog;
    use crate::schedcore::PartialSchedule;

    #[test]
    fn normalize_examples() {
        assert_eq!(normalize_metric(100.0, 100.0, 200.0).unwrap(), 0.0);
        assert_eq!(normalize_metric(200.0, 100.0, 200.0).unwrap(), 1.0);
        assert_eq!(normalize_metric(125.0, 100.0, 200.0).unwrap(), 0.25);
        assert_eq!(normalize_metric(500.0, 100.0, 200.0).unwrap(), 1.0);
        assert_eq!(normalize_metric(50.0, 100.0, 200.0).unwrap(), 0.0);
        assert!(normalize_metric(1.0, 2.0, 2.0).is_err());
    }

    #[test]
    fn config_guards() {
        assert!(UdsConfig::default().validate().is_ok());
        assert!(UdsConfig { a: 0.0, ..Default::default() }.validate().is_err());
        assert!(UdsConfig { b: 0.0, ..Default::default() }.validate().is_err());
        assert!(UdsConfig { theta: 1.5, ..Default::default() }.validate().is_err());
        assert!(UdsConfig { theta: 0.0, ..Default::default() }.validate().is_ok());
    }

    #[test]
    fn bounds_from_ideal_plans() {
        let mut g = WorkflowGraph::new();
        g.add_task("t", 10_000.0).unwrap();
        let cat = VmCatalog::default_catalog();
        let b = compute_bounds(&g, cat.pool(), &Timing::default(), 0.5, 3.0).unwrap();
        // 10k MI on 32k MIPS rounds to one slot after the 97 s boot
        assert_eq!(b.m_lower, 98.0);
        assert_eq!(b.m_upper, 147.0);
        assert_eq!(b.c_lower, 0.005);
        assert!((b.c_upper - 0.02).abs() < 1e-15);
    }

    struct Fixed(f64, Pricing);

    impl PricingRule for Fixed {
        fn choose(&self, _: TaskId, _: f64, _: f64) -> Result<(f64, Pricing)> {
            Ok((self.0, self.1))
        }
    }

    fn view_fixture() -> (WorkflowGraph, Vec<PoolVm>) {
        let mut g = WorkflowGraph::new();
        g.add_task("t", 8000.0).unwrap();
        let pool = vec![
            PoolVm::new(0, "slow-od", 2000.0, 0.02, Pricing::Reliable, 0.0),
            PoolVm::new(1, "fast-od", 4000.0, 0.04, Pricing::Reliable, 0.0),
            PoolVm::new(2, "slow-spot", 2000.0, 0.004, Pricing::Unreliable, 0.3),
            PoolVm::new(3, "fast-spot", 4000.0, 0.008, Pricing::Unreliable, 0.3),
        ];
        (g, pool)
    }

    #[test]
    fn class_then_earliest_finish() {
        let (g, pool) = view_fixture();
        let timing = Timing::default();
        let planner = Planner::new(&g, &pool, timing).unwrap();
        let state = PartialSchedule::fresh(1, pool.len(), &timing);
        let view = DispatchView { planner: &planner, state: &state, time: 0.0 };
        let bounds = planner.bounds(1.0, 1.0).unwrap();
        let d = dispatch_ready_task(&view, TaskId(0), 1, &bounds, &Fixed(0.9, Pricing::Reliable)).unwrap();
        assert_eq!(d.vm, VmId(1));
        let d = dispatch_ready_task(&view, TaskId(0), 1, &bounds, &Fixed(0.1, Pricing::Unreliable)).unwrap();
        assert_eq!(d.vm, VmId(3));
        // fresh state: estimates sit on the lower bounds
        assert_eq!((d.norm_m, d.norm_c), (0.0, 0.0));
    }

    #[test]
    fn flc_rule_examples() {
        let rule = FlcRule { flc: Flc::default(), theta: 0.5 };
        let (pmi, p) = rule.choose(TaskId(0), 1.0, 0.3).unwrap();
        assert!((pmi - 0.8333).abs() < 1e-3);
        assert_eq!(p, Pricing::Reliable);
        let (pmi, p) = rule.choose(TaskId(0), 0.0, 0.0).unwrap();
        assert!((pmi - 0.1667).abs() < 1e-3);
        assert_eq!(p, Pricing::Unreliable);
    }

    fn join_graph() -> WorkflowGraph {
        let mut g = WorkflowGraph::new();
        let a = g.add_task("a", 1.0).unwrap();
        let b = g.add_task("b", 1.0).unwrap();
        let s = g.add_task("s", 1.0).unwrap();
        g.add_edge(a, s, 40.0).unwrap();
        g.add_edge(b, s, 20.0).unwrap();
        g
    }

    #[test]
    fn readiness_needs_every_predecessor() {
        let g = join_graph();
        let timing = Timing::default();
        let mut finish = vec![None; 3];
        finish[0] = Some(Finish { time: 10.0, host: Some((VmId(0), 0)) });
        assert!(on_task_completion(&g, &timing, &finish, TaskId(0), |_| true).is_empty());
        finish[1] = Some(Finish { time: 12.0, host: Some((VmId(1), 0)) });
        // remote: max(10 + 2, 12 + 1) = 13; on vm0: max(10, 13) = 13; on vm1: max(12, 12) = 12
        assert_eq!(on_task_completion(&g, &timing, &finish, TaskId(1), |_| true), vec![(TaskId(2), 12.0)]);
        // a replaced lease loses its local copy
        assert_eq!(readiness_time(&g, &timing, &finish, TaskId(2), |h| h.0 != VmId(1)), Some(13.0));
    }

    #[test]
    fn exit_completion_readies_nothing() {
        let g = join_graph();
        let finish = vec![Some(Finish { time: 1.0, host: None }); 3];
        assert!(on_task_completion(&g, &Timing::default(), &finish, TaskId(2), |_| true).is_empty());
    }

    #[test]
    fn ready_queue_order_and_uniqueness() {
        let mut q = ReadyQueue::default();
        assert!(q.push(TaskId(3), 5.0));
        assert!(q.push(TaskId(1), 7.0));
        assert!(q.push(TaskId(2), 5.0));
        assert!(!q.push(TaskId(3), 1.0));
        assert_eq!(q.ordered(), vec![(TaskId(2), 5.0), (TaskId(3), 5.0), (TaskId(1), 7.0)]);
        assert!(q.remove(TaskId(3)));
        assert_eq!(q.len(), 2);
    }
}
