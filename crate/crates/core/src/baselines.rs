//! HEFT and GreedyCost planners.
//!
//! Both run in a static mode (the ideal plans behind the lower bounds and the
//! reference assignments) and in an estimate mode that completes a partial
//! schedule from the simulator's current state.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{invalid, Error, Result};
use crate::resources::{PoolVm, Pricing, VmId};
use crate::schedcore::{billing_cycles, PartialSchedule, Placement, SchedulePlan, Timing};
use crate::workflow::{TaskId, WorkflowGraph};

/// Lower bounds from the ideal plans and the upper bounds derived from them.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bounds {
    pub m_lower: f64,
    pub c_lower: f64,
    pub m_upper: f64,
    pub c_upper: f64,
    pub a: f64,
    pub b: f64,
}

impl Bounds {
    pub fn new(m_lower: f64, c_lower: f64, a: f64, b: f64) -> Result<Self> {
        for (name, v) in [("a", a), ("b", b)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(format!("{name} must be positive, got {v}")));
            }
        }
        if !(m_lower >= 0.0 && m_lower.is_finite() && c_lower >= 0.0 && c_lower.is_finite()) {
            return Err(invalid("lower bounds must be finite and non-negative"));
        }
        Ok(Self { m_lower, c_lower, m_upper: m_lower + a * m_lower, c_upper: c_lower + b * c_lower, a, b })
    }
}

/// Per-task pricing classes chosen by the ideal plans. `None` for pseudo tasks.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceAssignments {
    /// HEFT placed the task on a reliable VM.
    pub lambda1: Vec<Option<bool>>,
    /// GreedyCost placed the task on an unreliable VM.
    pub lambda2: Vec<Option<bool>>,
}

impl ReferenceAssignments {
    pub fn get(&self, task: TaskId) -> Option<(bool, bool)> {
        let i = task.index();
        Some((self.lambda1.get(i).copied().flatten()?, self.lambda2.get(i).copied().flatten()?))
    }
}

/// Derives the reference classes of every real task from the two ideal plans.
pub fn reference_assignments(
    graph: &WorkflowGraph,
    pool: &[PoolVm],
    heft_plan: &SchedulePlan,
    gc_plan: &SchedulePlan,
) -> Result<ReferenceAssignments> {
    let class_of = |plan: &SchedulePlan, which: &str, task: TaskId| -> Result<Pricing> {
        let p = plan.completed_placement(task).ok_or_else(|| {
            Error::IncompletePlan(format!("{which} plan has no placement for {}", graph.task(task).name))
        })?;
        pool.get(p.vm.index())
            .map(|vm| vm.pricing)
            .ok_or_else(|| invalid(format!("{} is not in the pool", p.vm)))
    };
    let mut refs =
        ReferenceAssignments { lambda1: vec![None; graph.len()], lambda2: vec![None; graph.len()] };
    for t in graph.real_tasks() {
        refs.lambda1[t.id.index()] = Some(class_of(heft_plan, "HEFT", t.id)? == Pricing::Reliable);
        refs.lambda2[t.id.index()] = Some(class_of(gc_plan, "GreedyCost", t.id)? == Pricing::Unreliable);
    }
    Ok(refs)
}

/// How equal-EFT candidates are ordered.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TieBreak {
    /// Reliable before unreliable, then lower id.
    PreferReliable,
    /// Lower hourly price, then lower id.
    CheaperFirst,
}

/// A VM choice for one task.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Choice {
    pub vm: VmId,
    pub est: f64,
    pub eft: f64,
}

#[derive(PartialEq)]
struct Ranked {
    rank: f64,
    pos: usize,
    task: TaskId,
}

impl Eq for Ranked {}

impl Ord for Ranked {
    fn cmp(&self, other: &Self) -> Ordering {
        self.rank.total_cmp(&other.rank).then_with(|| other.pos.cmp(&self.pos))
    }
}

impl PartialOrd for Ranked {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Precomputed orders for one (graph, pool, timing) triple.
#[derive(Debug, Clone)]
pub struct Planner<'a> {
    graph: &'a WorkflowGraph,
    pool: &'a [PoolVm],
    timing: Timing,
    ranks: Vec<f64>,
    topo: Vec<TaskId>,
    heft_order: Vec<TaskId>,
}

impl<'a> Planner<'a> {
    pub fn new(graph: &'a WorkflowGraph, pool: &'a [PoolVm], timing: Timing) -> Result<Self> {
        if pool.is_empty() {
            return Err(Error::EmptyPool);
        }
        if graph.is_empty() {
            return Err(Error::EmptyGraph);
        }
        timing.validate()?;
        let topo = graph.topological_order()?;
        let ranks = upward_ranks(graph, pool, &timing, &topo);
        let heft_order = rank_order(graph, &ranks, &topo);
        Ok(Self { graph, pool, timing, ranks, topo, heft_order })
    }

    pub fn graph(&self) -> &'a WorkflowGraph {
        self.graph
    }

    pub fn pool(&self) -> &'a [PoolVm] {
        self.pool
    }

    pub fn timing(&self) -> &Timing {
        &self.timing
    }

    pub fn upward_ranks(&self) -> &[f64] {
        &self.ranks
    }

    /// Tasks by descending upward rank; always a topological order.
    pub fn heft_order(&self) -> &[TaskId] {
        &self.heft_order
    }

    pub fn topological_order(&self) -> &[TaskId] {
        &self.topo
    }

    /// The VM with the earliest finish among those accepted by `filter`.
    pub fn best_eft(
        &self,
        state: &PartialSchedule,
        task: TaskId,
        filter: impl Fn(&PoolVm) -> bool,
        tie: TieBreak,
    ) -> Result<Choice> {
        let mut best: Option<(Choice, &PoolVm)> = None;
        for vm in self.pool.iter().filter(|vm| filter(vm)) {
            let (est, eft) = state.est_eft(self.graph, self.pool, task, vm.id, &self.timing)?;
            let cand = Choice { vm: vm.id, est, eft };
            let better = match best {
                None => true,
                Some((b, bvm)) => {
                    let by_tie = match tie {
                        TieBreak::PreferReliable => {
                            let rank = |p: Pricing| (p != Pricing::Reliable) as u8;
                            rank(vm.pricing).cmp(&rank(bvm.pricing))
                        }
                        TieBreak::CheaperFirst => vm.price_hourly.total_cmp(&bvm.price_hourly),
                    };
                    eft.total_cmp(&b.eft).then(by_tie).then(vm.id.cmp(&bvm.id)).is_lt()
                }
            };
            if better {
                best = Some((cand, vm));
            }
        }
        best.map(|(c, _)| c).ok_or_else(|| Error::NoCandidates(self.graph.task(task).name.clone()))
    }

    /// The VM with the lowest marginal billing cost.
    pub fn cheapest(&self, state: &PartialSchedule, task: TaskId) -> Result<Choice> {
        let cycle = self.timing.billing_cycle;
        let mut best: Option<(f64, Choice, &PoolVm)> = None;
        for vm in self.pool {
            let (est, eft) = state.est_eft(self.graph, self.pool, task, vm.id, &self.timing)?;
            let (before, after) = match state.vms[vm.id.index()].window {
                None => (0, billing_cycles(est, eft, cycle)?),
                Some((s, e)) => {
                    (billing_cycles(s, e, cycle)?, billing_cycles(s.min(est), e.max(eft), cycle)?)
                }
            };
            let marginal = vm.price_hourly * (after - before) as f64;
            let better = match best {
                None => true,
                Some((bm, b, bvm)) => marginal
                    .total_cmp(&bm)
                    .then(eft.total_cmp(&b.eft))
                    .then(vm.price_hourly.total_cmp(&bvm.price_hourly))
                    .then(vm.id.cmp(&bvm.id))
                    .is_lt(),
            };
            if better {
                best = Some((marginal, Choice { vm: vm.id, est, eft }, vm));
            }
        }
        Ok(best.expect("pool is not empty").1)
    }

    fn heft_choice(&self, state: &PartialSchedule, task: TaskId) -> Result<Choice> {
        self.best_eft(state, task, |_| true, TieBreak::PreferReliable)
    }

    /// Plans every task of `order` that has no finish yet.
    fn complete(
        &self,
        state: &mut PartialSchedule,
        order: &[TaskId],
        pick: impl Fn(&PartialSchedule, TaskId) -> Result<Choice>,
        mut plan: Option<&mut SchedulePlan>,
    ) -> Result<()> {
        for &task in order {
            if state.is_finished(task) {
                continue;
            }
            if self.graph.task(task).pseudo {
                state.complete_pseudo(self.graph, task)?;
                continue;
            }
            let c = pick(state, task)?;
            state.assign(task, c.vm, c.est, c.eft);
            if let Some(plan) = plan.as_deref_mut() {
                plan.placements.push(Placement {
                    task,
                    vm: c.vm,
                    lease: state.vms[c.vm.index()].lease,
                    pricing: self.pool[c.vm.index()].pricing,
                    est: c.est,
                    eft: c.eft,
                    ast: Some(c.est),
                    aft: Some(c.eft),
                    aborted_at: None,
                    attempt: 1,
                });
            }
        }
        Ok(())
    }

    fn fresh(&self) -> PartialSchedule {
        PartialSchedule::fresh(self.graph.len(), self.pool.len(), &self.timing)
    }

    /// Ideal HEFT plan: no interruptions, no variation, append-only queues.
    pub fn heft_static(&self) -> Result<SchedulePlan> {
        let mut plan = SchedulePlan::new(&self.timing);
        let mut state = self.fresh();
        self.complete(&mut state, &self.heft_order, |s, t| self.heft_choice(s, t), Some(&mut plan))?;
        Ok(plan)
    }

    /// Ideal GreedyCost plan over the topological order.
    pub fn gc_static(&self) -> Result<SchedulePlan> {
        let mut plan = SchedulePlan::new(&self.timing);
        let mut state = self.fresh();
        self.complete(&mut state, &self.topo, |s, t| self.cheapest(s, t), Some(&mut plan))?;
        Ok(plan)
    }

    /// Makespan HEFT would reach if it planned every unfinished task of
    /// `state`.
    pub fn heft_estimate(&self, state: &PartialSchedule) -> Result<f64> {
        let mut s = state.clone();
        self.complete(&mut s, &self.heft_order, |s, t| self.heft_choice(s, t), None)?;
        Ok(s.makespan().expect("every task planned"))
    }

    /// Total cost GreedyCost would reach if it planned every unfinished task
    /// of `state`, including cost already incurred.
    pub fn gc_estimate(&self, state: &PartialSchedule) -> Result<f64> {
        let mut s = state.clone();
        self.complete(&mut s, &self.topo, |s, t| self.cheapest(s, t), None)?;
        Ok(s.total_cost(self.pool, self.timing.billing_cycle))
    }

    /// Lower bounds from the ideal plans and uppers scaled by `a` and `b`.
    pub fn bounds(&self, a: f64, b: f64) -> Result<Bounds> {
        let m = crate::schedcore::plan_makespan(&self.heft_static()?)?;
        let c = crate::schedcore::plan_cost(&self.gc_static()?, self.pool)?;
        Bounds::new(m, c, a, b)
    }
}

fn upward_ranks(graph: &WorkflowGraph, pool: &[PoolVm], timing: &Timing, topo: &[TaskId]) -> Vec<f64> {
    let n = pool.len() as f64;
    let mut ranks = vec![0.0; graph.len()];
    for &t in topo.iter().rev() {
        let demand = graph.task(t).demand_mi;
        let w = pool.iter().map(|vm| demand / vm.speed_mips).sum::<f64>() / n;
        let tail = graph
            .out_edges(t)
            .map(|e| e.data_mbit / timing.bandwidth_mbps + ranks[e.dst.index()])
            .fold(0.0, f64::max);
        ranks[t.index()] = w + tail;
    }
    ranks
}

/// Highest rank first among tasks whose predecessors are already listed, so
/// rounding in the ranks can never break precedence.
fn rank_order(graph: &WorkflowGraph, ranks: &[f64], topo: &[TaskId]) -> Vec<TaskId> {
    let mut pos = vec![0; graph.len()];
    for (i, t) in topo.iter().enumerate() {
        pos[t.index()] = i;
    }
    let mut missing: Vec<usize> = graph.ids().map(|t| graph.predecessors(t).count()).collect();
    let mut heap: BinaryHeap<Ranked> = graph
        .ids()
        .filter(|t| missing[t.index()] == 0)
        .map(|task| Ranked { rank: ranks[task.index()], pos: pos[task.index()], task })
        .collect();
    let mut order = Vec::with_capacity(graph.len());
    while let Some(Ranked { task, .. }) = heap.pop() {
        order.push(task);
        for s in graph.successors(task) {
            missing[s.index()] -= 1;
            if missing[s.index()] == 0 {
                heap.push(Ranked { rank: ranks[s.index()], pos: pos[s.index()], task: s });
            }
        }
    }
    order
}

pub fn heft_static(graph: &WorkflowGraph, pool: &[PoolVm], timing: &Timing) -> Result<SchedulePlan> {
    Planner::new(graph, pool, *timing)?.heft_static()
}

pub fn gc_static(graph: &WorkflowGraph, pool: &[PoolVm], timing: &Timing) -> Result<SchedulePlan> {
    Planner::new(graph, pool, *timing)?.gc_static()
}

/// Predicted final makespan from `state` under the HEFT policy.
pub fn heft_dynamic_estimate(
    graph: &WorkflowGraph,
    pool: &[PoolVm],
    timing: &Timing,
    state: &PartialSchedule,
) -> Result<f64> {
    Planner::new(graph, pool, *timing)?.heft_estimate(state)
}

/// Incurred plus predicted remaining cost from `state` under GreedyCost.
pub fn gc_dynamic_estimate(
    graph: &WorkflowGraph,
    pool: &[PoolVm],
    timing: &Timing,
    state: &PartialSchedule,
) -> Result<f64> {
    Planner::new(graph, pool, *timing)?.gc_estimate(state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::resources::VmCatalog;
    use crate::schedcore::{plan_cost, plan_makespan, validate_plan, Finish};

    fn instant() -> Timing {
        Timing { provisioning_seconds: 0.0, ..Timing::default() }
    }

    fn slow_fast() -> Vec<PoolVm> {
        vec![
            PoolVm::new(0, "slow", 1.0, 1.0, Pricing::Reliable, 0.0),
            PoolVm::new(1, "fast", 2.0, 2.0, Pricing::Reliable, 0.0),
        ]
    }

    #[test]
    fn chain_goes_to_the_fast_vm() {
        let mut g = WorkflowGraph::new();
        let a = g.add_task("t1", 100.0).unwrap();
        let b = g.add_task("t2", 100.0).unwrap();
        g.add_edge(a, b, 0.0).unwrap();
        let pool = slow_fast();
        let plan = heft_static(&g, &pool, &instant()).unwrap();
        assert!(plan.placements.iter().all(|p| p.vm == VmId(1)));
        assert_eq!(plan_makespan(&plan).unwrap(), 100.0);
    }

    #[test]
    fn single_task_takes_the_fastest_vm() {
        let mut g = WorkflowGraph::new();
        g.add_task("t", 64_000.0).unwrap();
        let cat = VmCatalog::default_catalog();
        let plan = heft_static(&g, cat.pool(), &Timing::default()).unwrap();
        let p = &plan.placements[0];
        assert_eq!(cat.pool()[p.vm.index()].speed_mips, 32_000.0);
        // reliable twin wins the tie
        assert_eq!(p.pricing, Pricing::Reliable);
        assert_eq!(plan_makespan(&plan).unwrap(), 97.0 + 2.0);
    }

    #[test]
    fn independent_tasks_spread_over_equal_vms() {
        let mut g = WorkflowGraph::new();
        g.add_task("t1", 50.0).unwrap();
        g.add_task("t2", 50.0).unwrap();
        let pool = vec![
            PoolVm::new(0, "x", 1.0, 1.0, Pricing::Reliable, 0.0),
            PoolVm::new(1, "y", 1.0, 1.0, Pricing::Reliable, 0.0),
        ];
        let plan = heft_static(&g, &pool, &instant()).unwrap();
        assert_ne!(plan.placements[0].vm, plan.placements[1].vm);
        assert_eq!(plan_makespan(&plan).unwrap(), 50.0);
    }

    #[test]
    fn gc_examples() {
        let cat = VmCatalog::default_catalog();
        let mut g = WorkflowGraph::new();
        let a = g.add_task("a", 10_000.0).unwrap();
        let plan = gc_static(&g, cat.pool(), &Timing::default()).unwrap();
        assert_eq!(cat.pool()[plan.placements[0].vm.index()].label, "a1.medium-spot");
        assert_eq!(plan_cost(&plan, cat.pool()).unwrap(), 0.005);

        let b = g.add_task("b", 10_000.0).unwrap();
        g.add_edge(a, b, 8.0).unwrap();
        let plan = gc_static(&g, cat.pool(), &Timing::default()).unwrap();
        assert_eq!(plan.placements[0].vm, plan.placements[1].vm);
        assert_eq!(plan_cost(&plan, cat.pool()).unwrap(), 0.005);

        // pseudo entry and exit add nothing
        let mut g = WorkflowGraph::new();
        g.add_task("x", 1000.0).unwrap();
        g.add_task("y", 1000.0).unwrap();
        let g = g.normalize().unwrap();
        let plan = gc_static(&g, cat.pool(), &Timing::default()).unwrap();
        assert_eq!(plan_cost(&plan, cat.pool()).unwrap(), 0.005);
    }

    #[test]
    fn pseudo_tasks_get_no_placement() {
        let mut g = WorkflowGraph::new();
        g.add_task("x", 1000.0).unwrap();
        g.add_task("y", 1000.0).unwrap();
        let g = g.normalize().unwrap();
        assert_eq!(g.len(), 4);
        let cat = VmCatalog::default_catalog();
        let heft = heft_static(&g, cat.pool(), &Timing::default()).unwrap();
        let gc = gc_static(&g, cat.pool(), &Timing::default()).unwrap();
        assert_eq!(heft.placements.len(), 2);
        assert_eq!(gc.placements.len(), 2);
        let refs = reference_assignments(&g, cat.pool(), &heft, &gc).unwrap();
        assert_eq!(refs.get(g.entry().unwrap()), None);
        for t in g.real_tasks() {
            assert_eq!(refs.get(t.id), Some((true, true)));
        }
    }

    #[test]
    fn reference_lambdas_follow_pricing() {
        let mut g = WorkflowGraph::new();
        let t = g.add_task("t", 1000.0).unwrap();
        let pool = vec![
            PoolVm::new(0, "od", 1000.0, 0.02, Pricing::Reliable, 0.0),
            PoolVm::new(1, "spot", 1000.0, 0.005, Pricing::Unreliable, 0.3),
        ];
        let mk = |vm: u32| SchedulePlan {
            placements: vec![Placement {
                task: t,
                vm: VmId(vm),
                lease: 0,
                pricing: pool[vm as usize].pricing,
                est: 0.0,
                eft: 1.0,
                ast: Some(0.0),
                aft: Some(1.0),
                aborted_at: None,
                attempt: 1,
            }],
            ..SchedulePlan::new(&Timing::default())
        };
        let refs = reference_assignments(&g, &pool, &mk(0), &mk(0)).unwrap();
        assert_eq!(refs.get(t), Some((true, false)));
        let refs = reference_assignments(&g, &pool, &mk(1), &mk(1)).unwrap();
        assert_eq!(refs.get(t), Some((false, true)));
        let empty = SchedulePlan::new(&Timing::default());
        assert!(reference_assignments(&g, &pool, &empty, &mk(0)).is_err());
    }

    #[test]
    fn bounds_arithmetic() {
        let b = Bounds::new(100.0, 0.02, 0.5, 3.0).unwrap();
        assert_eq!(b.m_upper, 150.0);
        assert!((b.c_upper - 0.08).abs() < 1e-15);
        assert!(Bounds::new(100.0, 0.02, 0.0, 1.0).is_err());
        assert!(Bounds::new(100.0, 0.02, 1.0, -1.0).is_err());
    }

    #[test]
    fn empty_pool_is_rejected() {
        let mut g = WorkflowGraph::new();
        g.add_task("t", 1.0).unwrap();
        assert_eq!(heft_static(&g, &[], &Timing::default()), Err(Error::EmptyPool));
        assert_eq!(gc_static(&g, &[], &Timing::default()), Err(Error::EmptyPool));
    }

    fn sample_graph() -> WorkflowGraph {
        crate::workflow::generate_synthetic(crate::workflow::Pattern::FanoutFanin, 12, 3, &Default::default())
            .unwrap()
    }

    #[test]
    fn estimates_on_fresh_state_match_static_plans() {
        let g = sample_graph();
        let cat = VmCatalog::default_catalog();
        let planner = Planner::new(&g, cat.pool(), Timing::default()).unwrap();
        let fresh = PartialSchedule::fresh(g.len(), cat.pool().len(), &Timing::default());
        let heft = planner.heft_static().unwrap();
        let gc = planner.gc_static().unwrap();
        assert!(validate_plan(&heft).is_ok());
        assert!(validate_plan(&gc).is_ok());
        assert_eq!(planner.heft_estimate(&fresh).unwrap(), plan_makespan(&heft).unwrap());
        assert_eq!(planner.gc_estimate(&fresh).unwrap(), plan_cost(&gc, cat.pool()).unwrap());
    }

    #[test]
    fn estimates_on_finished_state_report_realized_values() {
        let g = sample_graph();
        let cat = VmCatalog::default_catalog();
        let planner = Planner::new(&g, cat.pool(), Timing::default()).unwrap();
        let mut s = PartialSchedule::fresh(g.len(), cat.pool().len(), &Timing::default());
        for (i, t) in g.ids().enumerate() {
            s.finish[t.index()] = Some(Finish { time: 200.0 + i as f64, host: None });
        }
        s.now = 500.0;
        s.closed_cost = 0.25;
        assert_eq!(planner.heft_estimate(&s).unwrap(), 200.0 + (g.len() - 1) as f64);
        assert_eq!(planner.gc_estimate(&s).unwrap(), 0.25);
    }

    #[test]
    fn mid_run_estimates_respect_time_and_spend() {
        let g = sample_graph();
        let cat = VmCatalog::default_catalog();
        let timing = Timing::default();
        let planner = Planner::new(&g, cat.pool(), timing).unwrap();
        let mut s = PartialSchedule::fresh(g.len(), cat.pool().len(), &timing);
        let entry = planner.heft_order()[0];
        let c = planner.heft_choice(&s, entry).unwrap();
        s.assign(entry, c.vm, c.est, c.eft);
        s.now = 5000.0;
        s.closed_cost = 0.1;
        assert!(planner.heft_estimate(&s).unwrap() >= 5000.0);
        assert!(planner.gc_estimate(&s).unwrap() >= 0.1 + s.open_cost(cat.pool(), 3600.0));
        // read-only
        let copy = s.clone();
        planner.heft_estimate(&s).unwrap();
        assert_eq!(copy, s);
    }

    #[test]
    fn rank_order_is_topological() {
        for pattern in crate::workflow::Pattern::ALL {
            let g = crate::workflow::generate_synthetic(pattern, 30, 11, &Default::default())
                .unwrap()
                .normalize()
                .unwrap();
            let cat = VmCatalog::default_catalog();
            let planner = Planner::new(&g, cat.pool(), Timing::default()).unwrap();
            let mut pos = vec![0; g.len()];
            for (i, t) in planner.heft_order().iter().enumerate() {
                pos[t.index()] = i;
            }
            assert_eq!(planner.heft_order().len(), g.len());
            for e in g.edges() {
                assert!(pos[e.src.index()] < pos[e.dst.index()]);
            }
        }
    }
}
