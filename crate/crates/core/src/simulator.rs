//! Slotted discrete-event execution of a workflow under a dispatch policy.
//!
//! Every VM of the pool is requested at time zero. Unreliable leases are
//! revoked either by a per-slot interruption draw or when they have been
//! active for the lease limit; the running attempt and everything queued on
//! the lease go back to the ready queue with a higher attempt number.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, VecDeque};

use crate::baselines::Planner;
use crate::error::{invalid, Error, Result};
use crate::resources::{per_slot_hazard, slots_until_interruption, PoolVm, Pricing, Variation, VmId, HOUR};
use crate::rng::{stable_hash, substream, SimRng};
use crate::schedcore::{
    billing_records, plan_cost, plan_makespan, BillingRecord, Finish, PartialSchedule, Placement,
    SchedulePlan, Timing, VmTimeline,
};
use crate::uds::{readiness_time, DispatchDecision, ReadyQueue};
use crate::workflow::{TaskId, WorkflowGraph};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    pub timing: Timing,
    pub variation: Variation,
    pub seed: u64,
    /// Watchdog on simulated time.
    pub max_sim_seconds: f64,
    /// Active time after which an unreliable lease is revoked.
    pub max_lease_seconds: f64,
    /// Per-slot interruption draws; the lease limit applies either way.
    pub interruptions: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            timing: Timing::default(),
            variation: Variation::default(),
            seed: 0,
            max_sim_seconds: 30.0 * 24.0 * HOUR,
            max_lease_seconds: HOUR,
            interruptions: true,
        }
    }
}

impl SimConfig {
    /// No interruption draws and no performance variation.
    pub fn deterministic() -> Self {
        Self { variation: Variation::disabled(), interruptions: false, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        self.timing.validate()?;
        self.variation.validate()?;
        if !(self.max_sim_seconds > 0.0) {
            return Err(invalid("max_sim_seconds must be positive"));
        }
        if !(self.max_lease_seconds > 0.0 && self.max_lease_seconds.is_finite()) {
            return Err(invalid("max_lease_seconds must be positive"));
        }
        Ok(())
    }
}

/// What a policy sees when it dispatches: the planner and a planned view of
/// the run in which every dispatched task has a (possibly predicted) finish.
pub struct DispatchView<'p, 'a> {
    pub planner: &'p Planner<'a>,
    pub state: &'p PartialSchedule,
    pub time: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dispatch {
    pub vm: VmId,
    pub decision: Option<DispatchDecision>,
}

/// Chooses a VM for every ready task.
pub trait Policy {
    /// Lets a policy hold back a ready task until later in the run.
    fn can_dispatch(&self, _task: TaskId) -> bool {
        true
    }

    fn dispatch(&mut self, view: &DispatchView<'_, '_>, task: TaskId, attempt: u32) -> Result<Dispatch>;
}

/// Replays a static plan: each task goes to its planned VM, in the planned
/// per-VM order. Retries go back to the same VM.
#[derive(Debug, Clone)]
pub struct ReplayPolicy {
    vm_of: Vec<Option<VmId>>,
    sequence: Vec<Vec<TaskId>>,
    next: Vec<usize>,
    seen: Vec<bool>,
}

impl ReplayPolicy {
    pub fn new(plan: &SchedulePlan, n_tasks: usize, pool_len: usize) -> Result<Self> {
        let mut vm_of = vec![None; n_tasks];
        let mut sequence = vec![Vec::new(); pool_len];
        for p in &plan.placements {
            let (Some(slot), Some(seq)) = (vm_of.get_mut(p.task.index()), sequence.get_mut(p.vm.index()))
            else {
                return Err(invalid(format!("placement of {} on {} is out of range", p.task, p.vm)));
            };
            if slot.is_some() {
                return Err(invalid(format!("{} is placed twice", p.task)));
            }
            *slot = Some(p.vm);
            seq.push(p.task);
        }
        Ok(Self { vm_of, sequence, next: vec![0; pool_len], seen: vec![false; n_tasks] })
    }
}

impl Policy for ReplayPolicy {
    fn can_dispatch(&self, task: TaskId) -> bool {
        match self.vm_of[task.index()] {
            Some(_) if self.seen[task.index()] => true,
            Some(vm) => self.sequence[vm.index()].get(self.next[vm.index()]) == Some(&task),
            None => false,
        }
    }

    fn dispatch(&mut self, _view: &DispatchView<'_, '_>, task: TaskId, _attempt: u32) -> Result<Dispatch> {
        let vm = self.vm_of[task.index()]
            .ok_or_else(|| Error::Constraint(format!("{task} is not in the replayed plan")))?;
        if !self.seen[task.index()] {
            self.seen[task.index()] = true;
            self.next[vm.index()] += 1;
        }
        Ok(Dispatch { vm, decision: None })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RevocationRecord {
    pub vm: VmId,
    pub lease: u32,
    pub time: f64,
    /// Revoked by the lease limit rather than an interruption draw.
    pub forced: bool,
    pub aborted: Option<TaskId>,
    pub requeued: Vec<TaskId>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimResult {
    /// Every attempt, in dispatch order.
    pub plan: SchedulePlan,
    pub m_final: f64,
    pub c_final: f64,
    pub decisions: Vec<DispatchDecision>,
    /// Attempt number of the completing attempt; 0 for pseudo tasks.
    pub attempts: Vec<u32>,
    pub revocations: Vec<RevocationRecord>,
    pub billing: Vec<BillingRecord>,
}

/// Offset after activation at which a lease is revoked, and whether the
/// lease limit (rather than an interruption) caused it.
pub fn draw_revocation(hazard: f64, slot: f64, max_lease: f64, rng: &mut SimRng) -> (f64, bool) {
    match slots_until_interruption(hazard, rng) {
        Some(k) if k as f64 * slot <= max_lease => (k as f64 * slot, false),
        _ => (max_lease, true),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Kind {
    Revocation,
    TaskFinish,
    ProvisionComplete,
    DataReady,
}

#[derive(Debug, Clone, Copy)]
enum Payload {
    Revocation { lease: u32, forced: bool },
    TaskFinish { placement: usize },
    ProvisionComplete { lease: u32 },
    DataReady,
}

#[derive(Debug, Clone, Copy)]
struct Event {
    time: f64,
    kind: Kind,
    id: u32,
    seq: u64,
    payload: Payload,
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Event {}

impl Ord for Event {
    // reversed: BinaryHeap pops the earliest event
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .time
            .total_cmp(&self.time)
            .then(other.kind.cmp(&self.kind))
            .then(other.id.cmp(&self.id))
            .then(other.seq.cmp(&self.seq))
    }
}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Status {
    Provisioning { ready_at: f64 },
    Active,
    Revoked,
}

struct Vm {
    status: Status,
    lease: u32,
    running: Option<usize>,
    queue: VecDeque<usize>,
    /// First start and last finish of completed work on the current lease.
    window: Option<(f64, f64)>,
    hazard: f64,
    rng: SimRng,
}

struct Engine<'p, 'a> {
    planner: &'p Planner<'a>,
    graph: &'a WorkflowGraph,
    pool: &'a [PoolVm],
    config: SimConfig,
    now: f64,
    seq: u64,
    events: BinaryHeap<Event>,
    vms: Vec<Vm>,
    finish: Vec<Option<Finish>>,
    attempts: Vec<u32>,
    /// Task is queued or running on some VM.
    placed: Vec<bool>,
    ready: ReadyQueue,
    plan: SchedulePlan,
    decisions: Vec<DispatchDecision>,
    revocations: Vec<RevocationRecord>,
    closed_cost: f64,
}

impl<'p, 'a> Engine<'p, 'a> {
    fn new(planner: &'p Planner<'a>, config: SimConfig) -> Result<Self> {
        let graph = planner.graph();
        let pool = planner.pool();
        let timing = config.timing;
        let mut vms = Vec::with_capacity(pool.len());
        for vm in pool {
            let hazard = if config.interruptions && vm.pricing == Pricing::Unreliable {
                per_slot_hazard(vm.p_hourly, timing.slot_seconds)?
            } else {
                0.0
            };
            vms.push(Vm {
                status: Status::Provisioning { ready_at: timing.provisioning_delay() },
                lease: 0,
                running: None,
                queue: VecDeque::new(),
                window: None,
                hazard,
                rng: substream(config.seed, stable_hash(format!("hazard/{}", vm.id.0).as_bytes())),
            });
        }
        let mut engine = Self {
            planner,
            graph,
            pool,
            config,
            now: 0.0,
            seq: 0,
            events: BinaryHeap::new(),
            vms,
            finish: vec![None; graph.len()],
            attempts: graph.tasks().iter().map(|t| u32::from(!t.pseudo)).collect(),
            placed: vec![false; graph.len()],
            ready: ReadyQueue::default(),
            plan: SchedulePlan::new(&timing),
            decisions: Vec::new(),
            revocations: Vec::new(),
            closed_cost: 0.0,
        };
        for vm in pool {
            engine.push(
                timing.provisioning_delay(),
                Kind::ProvisionComplete,
                vm.id.0,
                Payload::ProvisionComplete { lease: 0 },
            );
        }
        for t in graph.entries() {
            engine.push(0.0, Kind::DataReady, t.0, Payload::DataReady);
        }
        Ok(engine)
    }

    fn push(&mut self, time: f64, kind: Kind, id: u32, payload: Payload) {
        self.seq += 1;
        self.events.push(Event { time, kind, id, seq: self.seq, payload });
    }

    fn is_current(&self, host: (VmId, u32)) -> bool {
        let vm = &self.vms[host.0.index()];
        vm.lease == host.1 && vm.status != Status::Revoked
    }

    fn exit_done(&self) -> bool {
        self.graph.exits().iter().all(|t| self.finish[t.index()].is_some())
    }

    fn run(mut self, policy: &mut dyn Policy) -> Result<SimResult> {
        loop {
            let Some(next) = self.events.peek().copied() else {
                return Err(Error::Stalled(self.now));
            };
            if next.time > self.config.max_sim_seconds {
                return Err(Error::Watchdog { limit: self.config.max_sim_seconds, at: next.time });
            }
            self.now = next.time;
            while self.events.peek().is_some_and(|e| e.time == self.now) {
                let e = self.events.pop().expect("peeked");
                self.handle(e)?;
            }
            if self.exit_done() {
                break;
            }
            self.dispatch_ready(policy)?;
        }
        self.finish_result()
    }

    fn handle(&mut self, e: Event) -> Result<()> {
        match e.payload {
            Payload::Revocation { lease, forced } => {
                if self.vms[e.id as usize].lease == lease && self.vms[e.id as usize].status == Status::Active
                {
                    self.revoke(VmId(e.id), forced)?;
                }
            }
            Payload::TaskFinish { placement } => self.on_finish(placement),
            Payload::ProvisionComplete { lease } => {
                if self.vms[e.id as usize].lease == lease {
                    self.activate(VmId(e.id));
                }
            }
            Payload::DataReady => self.on_data_ready(TaskId(e.id))?,
        }
        Ok(())
    }

    fn activate(&mut self, id: VmId) {
        let (slot, max_lease) = (self.config.timing.slot_seconds, self.config.max_lease_seconds);
        let vm = &mut self.vms[id.index()];
        vm.status = Status::Active;
        if self.pool[id.index()].pricing == Pricing::Unreliable {
            let (offset, forced) = draw_revocation(vm.hazard, slot, max_lease, &mut vm.rng);
            let lease = vm.lease;
            self.push(self.now + offset, Kind::Revocation, id.0, Payload::Revocation { lease, forced });
        }
        self.start_next(id);
    }

    /// Aborts the running attempt and requeues everything on the lease.
    fn revoke(&mut self, id: VmId, forced: bool) -> Result<()> {
        if self.pool[id.index()].pricing == Pricing::Reliable {
            return Err(Error::Constraint(format!("{id} is reliable and cannot be revoked")));
        }
        let now = self.now;
        let vm = &mut self.vms[id.index()];
        if vm.status != Status::Active {
            return Err(Error::Constraint(format!("{id} is not active")));
        }
        let lease = vm.lease;
        let running = vm.running.take();
        let queued: Vec<usize> = vm.queue.drain(..).collect();
        vm.status = Status::Revoked;
        vm.window = None;

        let mut aborted = None;
        let mut requeued = Vec::new();
        for idx in running.into_iter().chain(queued) {
            let p = &mut self.plan.placements[idx];
            if p.ast.is_some_and(|s| s >= now) {
                // waiting for input data; never occupied the VM
                p.ast = None;
            }
            p.aborted_at = Some(now);
            if p.ast.is_some() {
                aborted = Some(p.task);
            } else {
                requeued.push(p.task);
            }
            let task = p.task;
            self.placed[task.index()] = false;
            self.attempts[task.index()] += 1;
            self.ready.push(task, now);
        }
        self.closed_cost += self
            .plan
            .placements
            .iter()
            .filter(|p| p.vm == id && p.lease == lease)
            .filter_map(|p| p.busy_interval())
            .fold(None, |w: Option<(f64, f64)>, (s, e)| Some(w.map_or((s, e), |(a, b)| (a.min(s), b.max(e)))))
            .map_or(0.0, |(s, e)| {
                crate::schedcore::vm_cost(
                    s,
                    e,
                    self.pool[id.index()].price_hourly,
                    self.config.timing.billing_cycle,
                )
                .expect("ordered window")
            });
        self.revocations.push(RevocationRecord { vm: id, lease, time: now, forced, aborted, requeued });
        Ok(())
    }

    fn on_finish(&mut self, idx: usize) {
        let p = &mut self.plan.placements[idx];
        if p.aborted_at.is_some() {
            return;
        }
        p.aft = Some(self.now);
        let (task, vm_id, lease, ast) = (p.task, p.vm, p.lease, p.ast.expect("started"));
        let vm = &mut self.vms[vm_id.index()];
        vm.running = None;
        vm.window = Some(vm.window.map_or((ast, self.now), |(s, e)| (s.min(ast), e.max(self.now))));
        self.placed[task.index()] = false;
        self.finish[task.index()] = Some(Finish { time: self.now, host: Some((vm_id, lease)) });
        self.start_next(vm_id);
        self.release_successors(task);
    }

    fn release_successors(&mut self, task: TaskId) {
        let succs: Vec<TaskId> = self.graph.successors(task).collect();
        for s in succs {
            if let Some(t) =
                readiness_time(self.graph, &self.config.timing, &self.finish, s, |h| self.is_current(h))
            {
                self.push(t.max(self.now), Kind::DataReady, s.0, Payload::DataReady);
            }
        }
    }

    fn on_data_ready(&mut self, task: TaskId) -> Result<()> {
        if self.finish[task.index()].is_some() || self.placed[task.index()] || self.ready.contains(task) {
            return Ok(());
        }
        let Some(t) =
            readiness_time(self.graph, &self.config.timing, &self.finish, task, |h| self.is_current(h))
        else {
            return Ok(());
        };
        if t > self.now {
            // a local copy went away with its lease
            self.push(t, Kind::DataReady, task.0, Payload::DataReady);
            return Ok(());
        }
        if self.graph.task(task).pseudo {
            let time = self
                .graph
                .predecessors(task)
                .map(|p| self.finish[p.index()].expect("ready").time)
                .fold(0.0, f64::max);
            self.finish[task.index()] = Some(Finish { time, host: None });
            self.release_successors(task);
        } else {
            self.ready.push(task, t);
        }
        Ok(())
    }

    /// Starts the head of the VM's queue if the VM is active and idle.
    fn start_next(&mut self, id: VmId) {
        let vm = &self.vms[id.index()];
        if vm.status != Status::Active || vm.running.is_some() {
            return;
        }
        let Some(&idx) = vm.queue.front() else {
            return;
        };
        let timing = self.config.timing;
        let task = self.plan.placements[idx].task;
        let lease = vm.lease;
        let data = self
            .graph
            .in_edges(task)
            .map(|e| {
                let f = self.finish[e.src.index()].expect("dispatched tasks have their inputs");
                f.time + timing.transfer(e.data_mbit, f.host == Some((id, lease)))
            })
            .fold(0.0, f64::max);
        let ast = timing.to_grid(self.now.max(data));
        let attempt = self.plan.placements[idx].attempt;
        let mut rng =
            substream(self.config.seed, stable_hash(format!("variation/{}/{attempt}", task.0).as_bytes()));
        let nominal = self.graph.task(task).demand_mi / self.pool[id.index()].speed_mips;
        let duration = timing.to_grid(nominal * self.config.variation.sample(&mut rng));

        let vm = &mut self.vms[id.index()];
        vm.queue.pop_front();
        vm.running = Some(idx);
        self.plan.placements[idx].ast = Some(ast);
        self.push(ast + duration, Kind::TaskFinish, id.0, Payload::TaskFinish { placement: idx });
    }

    /// Planned view of the run at the current time, as seen by the planners:
    /// running attempts end after their nominal duration and queued ones
    /// follow back to back.
    fn view(&self) -> Result<PartialSchedule> {
        let timing = &self.config.timing;
        let mut state = PartialSchedule {
            now: self.now,
            vms: Vec::with_capacity(self.vms.len()),
            finish: self.finish.clone(),
            closed_cost: self.closed_cost,
        };
        for vm in &self.vms {
            let (ready_at, lease) = match vm.status {
                Status::Provisioning { ready_at } => (ready_at, vm.lease),
                Status::Active => (self.now, vm.lease),
                Status::Revoked => (timing.to_grid(self.now) + timing.provisioning_delay(), vm.lease + 1),
            };
            state.vms.push(VmTimeline { ready_at, lease, window: vm.window });
        }
        for (i, vm) in self.vms.iter().enumerate() {
            let id = VmId(i as u32);
            if let Some(idx) = vm.running {
                let p = &self.plan.placements[idx];
                let ast = p.ast.expect("running attempts have a start");
                let nominal =
                    timing.exec_duration(self.graph.task(p.task).demand_mi, self.pool[i].speed_mips);
                let end = (ast + nominal).max(self.now);
                let slot = &mut state.vms[i];
                slot.ready_at = slot.ready_at.max(end);
                slot.window = Some(slot.window.map_or((ast, end), |(s, e)| (s.min(ast), e.max(end))));
                state.finish[p.task.index()] = Some(Finish { time: end, host: Some((id, vm.lease)) });
            }
            for &idx in &vm.queue {
                let task = self.plan.placements[idx].task;
                let (est, eft) = state.est_eft(self.graph, self.pool, task, id, timing)?;
                state.assign(task, id, est, eft);
            }
        }
        Ok(state)
    }

    fn dispatch_ready(&mut self, policy: &mut dyn Policy) -> Result<()> {
        loop {
            let Some((task, _)) = self.ready.ordered().into_iter().find(|&(t, _)| policy.can_dispatch(t))
            else {
                return Ok(());
            };
            let state = self.view()?;
            let view = DispatchView { planner: self.planner, state: &state, time: self.now };
            let attempt = self.attempts[task.index()];
            let d = policy.dispatch(&view, task, attempt)?;
            if d.vm.index() >= self.pool.len() {
                return Err(Error::Constraint(format!("policy chose unknown {}", d.vm)));
            }
            if let Some(dec) = &d.decision {
                if dec.task != task || dec.vm != d.vm {
                    return Err(Error::Constraint(format!(
                        "decision for {task} does not match its dispatch"
                    )));
                }
            }
            let (est, eft) = state.est_eft(self.graph, self.pool, task, d.vm, &self.config.timing)?;
            self.ready.remove(task);
            self.placed[task.index()] = true;

            let now = self.now;
            let provisioning = self.config.timing.provisioning_delay();
            let vm = &mut self.vms[d.vm.index()];
            if vm.status == Status::Revoked {
                vm.lease += 1;
                let ready_at = self.config.timing.to_grid(now) + provisioning;
                vm.status = Status::Provisioning { ready_at };
                let lease = vm.lease;
                self.push(ready_at, Kind::ProvisionComplete, d.vm.0, Payload::ProvisionComplete { lease });
            }
            let vm = &mut self.vms[d.vm.index()];
            self.plan.placements.push(Placement {
                task,
                vm: d.vm,
                lease: vm.lease,
                pricing: self.pool[d.vm.index()].pricing,
                est,
                eft,
                ast: None,
                aft: None,
                aborted_at: None,
                attempt,
            });
            vm.queue.push_back(self.plan.placements.len() - 1);
            self.start_next(d.vm);
            if let Some(dec) = d.decision {
                self.decisions.push(dec);
            }
        }
    }

    fn finish_result(self) -> Result<SimResult> {
        let m_final = plan_makespan(&self.plan).or_else(|_| {
            // only pseudo tasks
            self.finish
                .iter()
                .map(|f| f.map(|f| f.time))
                .try_fold(0.0f64, |a, t| t.map(|t| a.max(t)))
                .ok_or(Error::IncompletePlan("unfinished tasks".into()))
        })?;
        let c_final = plan_cost(&self.plan, self.pool)?;
        let billing = billing_records(&self.plan, self.pool)?;
        let attempts = self
            .graph
            .tasks()
            .iter()
            .map(|t| if t.pseudo { 0 } else { self.attempts[t.id.index()] })
            .collect();
        Ok(SimResult {
            plan: self.plan,
            m_final,
            c_final,
            decisions: self.decisions,
            attempts,
            revocations: self.revocations,
            billing,
        })
    }
}

/// Runs `graph` on `pool` under `policy` until every exit task has finished.
pub fn run_simulation(
    graph: &WorkflowGraph,
    pool: &[PoolVm],
    policy: &mut dyn Policy,
    config: &SimConfig,
) -> Result<SimResult> {
    config.validate()?;
    let planner = Planner::new(graph, pool, config.timing)?;
    run_with_planner(&planner, policy, config)
}

/// As [`run_simulation`], reusing precomputed planner orders.
pub fn run_with_planner(
    planner: &Planner<'_>,
    policy: &mut dyn Policy,
    config: &SimConfig,
) -> Result<SimResult> {
    config.validate()?;
    if planner.timing() != &config.timing {
        return Err(invalid("planner and simulation use different timing"));
    }
    Engine::new(planner, *config)?.run(policy)
}
