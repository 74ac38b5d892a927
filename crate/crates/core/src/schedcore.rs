//! Schedules: placements, EST/EFT over partial schedules, billing, makespan
//! and validation of the one-task-per-VM and one-VM-per-task constraints.

use std::collections::BTreeMap;
use std::io::Write;

use crate::error::{invalid, Error, Result};
use crate::resources::{exec_time, transfer_time, PoolVm, Pricing, VmId};
use crate::workflow::{TaskId, WorkflowGraph};

const GRID_EPS: f64 = 1e-9;

/// Time model shared by the static planners and the simulator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Timing {
    /// Length of a time slot; every start and finish lies on this grid.
    pub slot_seconds: f64,
    pub bandwidth_mbps: f64,
    /// Boot time of a freshly requested VM.
    pub provisioning_seconds: f64,
    /// Billing cycle length (gamma).
    pub billing_cycle: f64,
}

impl Default for Timing {
    fn default() -> Self {
        Self { slot_seconds: 1.0, bandwidth_mbps: 20.0, provisioning_seconds: 96.9, billing_cycle: 3600.0 }
    }
}

impl Timing {
    pub fn validate(&self) -> Result<()> {
        if !(self.slot_seconds > 0.0 && self.slot_seconds.is_finite()) {
            return Err(invalid("slot length must be positive"));
        }
        if !(self.bandwidth_mbps > 0.0) {
            return Err(invalid("bandwidth must be positive"));
        }
        if !(self.provisioning_seconds >= 0.0 && self.provisioning_seconds.is_finite()) {
            return Err(invalid("provisioning delay must be non-negative"));
        }
        if !(self.billing_cycle > 0.0 && self.billing_cycle.is_finite()) {
            return Err(invalid("billing cycle must be positive"));
        }
        Ok(())
    }

    /// Rounds `t` up to the next slot boundary.
    pub fn to_grid(&self, t: f64) -> f64 {
        let slots = (t / self.slot_seconds - GRID_EPS).ceil().max(0.0);
        slots * self.slot_seconds
    }

    /// Execution time on the slot grid.
    pub fn exec_duration(&self, demand_mi: f64, speed_mips: f64) -> f64 {
        self.to_grid(exec_time(demand_mi, speed_mips).expect("pool speeds are positive"))
    }

    pub fn transfer(&self, data_mbit: f64, same_vm: bool) -> f64 {
        transfer_time(data_mbit, same_vm, self.bandwidth_mbps).expect("validated bandwidth")
    }

    /// Provisioning delay on the slot grid.
    pub fn provisioning_delay(&self) -> f64 {
        self.to_grid(self.provisioning_seconds)
    }
}

/// One execution attempt of a task on a VM lease.
#[derive(Debug, Clone, PartialEq)]
pub struct Placement {
    pub task: TaskId,
    pub vm: VmId,
    /// Lease number of the VM; a revoked VM is re-provisioned under a new lease.
    pub lease: u32,
    pub pricing: Pricing,
    pub est: f64,
    pub eft: f64,
    pub ast: Option<f64>,
    pub aft: Option<f64>,
    /// Set when the lease was revoked before this attempt finished.
    pub aborted_at: Option<f64>,
    pub attempt: u32,
}

impl Placement {
    /// Interval during which the attempt occupied its VM, if it started.
    pub fn busy_interval(&self) -> Option<(f64, f64)> {
        let start = self.ast?;
        let end = self.aft.or(self.aborted_at).unwrap_or(self.eft);
        Some((start, end.max(start)))
    }

    pub fn completed(&self) -> bool {
        self.aft.is_some()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SchedulePlan {
    pub placements: Vec<Placement>,
    pub slot_seconds: f64,
    pub billing_cycle: f64,
}

impl SchedulePlan {
    pub fn new(timing: &Timing) -> Self {
        Self {
            placements: Vec::new(),
            slot_seconds: timing.slot_seconds,
            billing_cycle: timing.billing_cycle,
        }
    }

    /// The completed placement of `task`, if any.
    pub fn completed_placement(&self, task: TaskId) -> Option<&Placement> {
        self.placements.iter().find(|p| p.task == task && p.completed())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BillingRecord {
    pub vm: VmId,
    pub lease: u32,
    pub first_start: f64,
    pub last_finish: f64,
    pub cycles: u64,
    pub cost: f64,
}

/// Number of billing cycles charged for usage between `first_start` and
/// `last_finish`; zero-length usage still pays one cycle.
pub fn billing_cycles(first_start: f64, last_finish: f64, cycle: f64) -> Result<u64> {
    let duration = last_finish - first_start;
    if duration < 0.0 {
        return Err(invalid(format!("usage ends ({last_finish}) before it starts ({first_start})")));
    }
    if !(cycle > 0.0) {
        return Err(invalid("billing cycle must be positive"));
    }
    Ok(((duration / cycle - GRID_EPS).ceil() as u64).max(1))
}

pub fn vm_cost(first_start: f64, last_finish: f64, hourly_price: f64, cycle: f64) -> Result<f64> {
    Ok(hourly_price * billing_cycles(first_start, last_finish, cycle)? as f64)
}

/// One record per VM lease that started at least one attempt.
pub fn billing_records(plan: &SchedulePlan, pool: &[PoolVm]) -> Result<Vec<BillingRecord>> {
    let mut windows: BTreeMap<(VmId, u32), (f64, f64)> = BTreeMap::new();
    for p in &plan.placements {
        let Some((start, end)) = p.busy_interval() else {
            continue;
        };
        windows
            .entry((p.vm, p.lease))
            .and_modify(|w| {
                w.0 = w.0.min(start);
                w.1 = w.1.max(end);
            })
            .or_insert((start, end));
    }
    windows
        .into_iter()
        .map(|((vm, lease), (first_start, last_finish))| {
            let price =
                pool.get(vm.index()).ok_or_else(|| invalid(format!("{vm} is not in the pool")))?.price_hourly;
            let cycles = billing_cycles(first_start, last_finish, plan.billing_cycle)?;
            Ok(BillingRecord { vm, lease, first_start, last_finish, cycles, cost: price * cycles as f64 })
        })
        .collect()
}

/// Total monetary cost of a plan.
pub fn plan_cost(plan: &SchedulePlan, pool: &[PoolVm]) -> Result<f64> {
    Ok(billing_records(plan, pool)?.iter().map(|r| r.cost).sum())
}

/// Finish time of the last completed attempt.
pub fn plan_makespan(plan: &SchedulePlan) -> Result<f64> {
    plan.placements
        .iter()
        .filter_map(|p| p.aft)
        .fold(None, |acc: Option<f64>, t| Some(acc.map_or(t, |a| a.max(t))))
        .ok_or_else(|| Error::IncompletePlan("no task has finished".into()))
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    /// Two attempts overlap on one VM.
    VmOverlap { vm: VmId, first: TaskId, second: TaskId },
    /// One task runs on two VMs at once.
    TaskOverlap { task: TaskId, first: VmId, second: VmId },
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

fn overlapping_pairs<K: Copy>(mut items: Vec<(f64, f64, K)>) -> Vec<(K, K)> {
    items.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let mut out = Vec::new();
    for i in 0..items.len() {
        let (s_i, e_i, k_i) = items[i];
        for &(s_j, e_j, k_j) in &items[i + 1..] {
            if s_j >= e_i {
                break;
            }
            if s_i < e_j && s_j < e_i {
                out.push((k_i, k_j));
            }
        }
    }
    out
}

/// Reports every pair of overlapping attempts on one VM and every task that
/// occupies two VMs at the same time. Touching intervals do not overlap.
pub fn validate_plan(plan: &SchedulePlan) -> ValidationReport {
    let mut by_vm: BTreeMap<VmId, Vec<(f64, f64, TaskId)>> = BTreeMap::new();
    let mut by_task: BTreeMap<TaskId, Vec<(f64, f64, VmId)>> = BTreeMap::new();
    for p in &plan.placements {
        if let Some((s, e)) = p.busy_interval() {
            by_vm.entry(p.vm).or_default().push((s, e, p.task));
            by_task.entry(p.task).or_default().push((s, e, p.vm));
        }
    }
    let mut report = ValidationReport::default();
    for (vm, items) in by_vm {
        for (first, second) in overlapping_pairs(items) {
            report.violations.push(Violation::VmOverlap { vm, first, second });
        }
    }
    for (task, items) in by_task {
        for (first, second) in overlapping_pairs(items) {
            report.violations.push(Violation::TaskOverlap { task, first, second });
        }
    }
    report
}

// ---------------------------------------------------------------------------
// Partial schedules

/// Where and when a task finished (or is planned to finish).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Finish {
    pub time: f64,
    /// VM and lease that hold the task's output locally; `None` for pseudo
    /// tasks.
    pub host: Option<(VmId, u32)>,
}

/// Planner view of one VM.
#[derive(Debug, Clone, PartialEq)]
pub struct VmTimeline {
    /// Earliest time a newly appended task may start.
    pub ready_at: f64,
    /// Lease that newly appended tasks would run under.
    pub lease: u32,
    /// Billing window (first start, last finish) of that lease so far.
    pub window: Option<(f64, f64)>,
}

/// A schedule under construction: known or planned finish times and the
/// append-only queue end of every VM.
#[derive(Debug, Clone, PartialEq)]
pub struct PartialSchedule {
    pub now: f64,
    pub vms: Vec<VmTimeline>,
    pub finish: Vec<Option<Finish>>,
    /// Cost of leases that are already closed (revoked).
    pub closed_cost: f64,
}

impl PartialSchedule {
    /// Nothing scheduled yet; every VM is requested at time zero.
    pub fn fresh(n_tasks: usize, pool_len: usize, timing: &Timing) -> Self {
        Self {
            now: 0.0,
            vms: vec![VmTimeline { ready_at: timing.provisioning_delay(), lease: 0, window: None }; pool_len],
            finish: vec![None; n_tasks],
            closed_cost: 0.0,
        }
    }

    pub fn is_finished(&self, task: TaskId) -> bool {
        self.finish[task.index()].is_some()
    }

    /// Time at which all inputs of `task` are available on `vm`.
    pub fn data_ready(&self, graph: &WorkflowGraph, task: TaskId, vm: VmId, timing: &Timing) -> Result<f64> {
        let lease = self.vms[vm.index()].lease;
        let mut ready: f64 = 0.0;
        for e in graph.in_edges(task) {
            let f = self.finish[e.src.index()]
                .ok_or_else(|| Error::UnknownFinish(graph.task(e.src).name.clone()))?;
            let same = f.host == Some((vm, lease));
            ready = ready.max(f.time + timing.transfer(e.data_mbit, same));
        }
        Ok(ready)
    }

    pub fn est(&self, graph: &WorkflowGraph, task: TaskId, vm: VmId, timing: &Timing) -> Result<f64> {
        let data = self.data_ready(graph, task, vm, timing)?;
        let vm_ready = self.vms[vm.index()].ready_at;
        Ok(timing.to_grid(self.now.max(vm_ready).max(data)))
    }

    /// `(est, eft)` of `task` appended to `vm`.
    pub fn est_eft(
        &self,
        graph: &WorkflowGraph,
        pool: &[PoolVm],
        task: TaskId,
        vm: VmId,
        timing: &Timing,
    ) -> Result<(f64, f64)> {
        let est = self.est(graph, task, vm, timing)?;
        let speed = pool[vm.index()].speed_mips;
        Ok((est, est + timing.exec_duration(graph.task(task).demand_mi, speed)))
    }

    pub fn assign(&mut self, task: TaskId, vm: VmId, est: f64, eft: f64) {
        let slot = &mut self.vms[vm.index()];
        slot.ready_at = eft;
        slot.window = Some(match slot.window {
            Some((s, e)) => (s.min(est), e.max(eft)),
            None => (est, eft),
        });
        self.finish[task.index()] = Some(Finish { time: eft, host: Some((vm, slot.lease)) });
    }

    /// Completes a zero-work pseudo task once its predecessors are known.
    pub fn complete_pseudo(&mut self, graph: &WorkflowGraph, task: TaskId) -> Result<f64> {
        let mut t: f64 = 0.0;
        for p in graph.predecessors(task) {
            let f = self.finish[p.index()].ok_or_else(|| Error::UnknownFinish(graph.task(p).name.clone()))?;
            t = t.max(f.time);
        }
        self.finish[task.index()] = Some(Finish { time: t, host: None });
        Ok(t)
    }

    /// Cost of the open lease windows.
    pub fn open_cost(&self, pool: &[PoolVm], cycle: f64) -> f64 {
        self.vms
            .iter()
            .zip(pool)
            .filter_map(|(slot, vm)| {
                let (s, e) = slot.window?;
                Some(vm_cost(s, e, vm.price_hourly, cycle).expect("window is ordered"))
            })
            .sum()
    }

    pub fn total_cost(&self, pool: &[PoolVm], cycle: f64) -> f64 {
        self.closed_cost + self.open_cost(pool, cycle)
    }

    /// Latest finish time, if every task has one.
    pub fn makespan(&self) -> Option<f64> {
        self.finish.iter().try_fold(0.0f64, |acc, f| f.map(|f| acc.max(f.time)))
    }
}

/// Earliest start of `task` on `vm` given the partial schedule.
pub fn est(
    graph: &WorkflowGraph,
    task: TaskId,
    vm: VmId,
    state: &PartialSchedule,
    timing: &Timing,
) -> Result<f64> {
    state.est(graph, task, vm, timing)
}

/// Earliest finish of `task` on `vm`: EST plus the execution time.
pub fn eft(
    graph: &WorkflowGraph,
    pool: &[PoolVm],
    task: TaskId,
    vm: VmId,
    state: &PartialSchedule,
    timing: &Timing,
) -> Result<f64> {
    Ok(state.est_eft(graph, pool, task, vm, timing)?.1)
}

// ---------------------------------------------------------------------------
// CSV

/// Formats `x` with six significant digits, dropping trailing zeros.
pub fn fmt_sig(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let exp = x.abs().log10().floor() as i32;
    let trim = |s: String| -> String {
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        }
    };
    if (-5..6).contains(&exp) {
        let decimals = (5 - exp).max(0) as usize;
        trim(format!("{x:.decimals$}"))
    } else {
        let s = format!("{x:.5e}");
        let (mantissa, e) = s.split_once('e').expect("scientific format");
        format!("{}e{e}", trim(mantissa.to_string()))
    }
}

fn opt(x: Option<f64>) -> String {
    x.map(fmt_sig).unwrap_or_default()
}

pub const PLAN_CSV_HEADER: [&str; 8] = ["task", "vm", "pricing", "est", "eft", "ast", "aft", "attempt"];

/// Writes one row per attempt, in plan order.
pub fn write_plan_csv<W: Write>(
    plan: &SchedulePlan,
    graph: &WorkflowGraph,
    pool: &[PoolVm],
    out: W,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| Error::InvalidArgument(format!("writing plan: {e}"));
    w.write_record(PLAN_CSV_HEADER).map_err(io)?;
    for p in &plan.placements {
        w.write_record([
            graph.task(p.task).name.clone(),
            pool[p.vm.index()].label.clone(),
            p.pricing.to_string(),
            fmt_sig(p.est),
            fmt_sig(p.eft),
            opt(p.ast),
            opt(p.aft),
            p.attempt.to_string(),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| Error::InvalidArgument(format!("writing plan: {e}")))?;
    Ok(())
}
