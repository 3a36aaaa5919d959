//! Pluggable scheduling policies.
//!
//! A policy sees the batch queue and a virtual copy of every machine through a
//! [`Planner`]. It maps or cancels tasks one at a time; the planner keeps the
//! virtual machine state current so later choices in the same invocation see
//! the effect of earlier ones, and it rejects decisions that would overflow a
//! local queue. The engine applies the returned decisions in order.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::model::{EetMatrix, MachineIdx, MachineState, QueueSize, SimTime, Task, TaskIdx};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SchedulerError {
    #[error("unknown scheduling policy `{0}`")]
    UnknownPolicy(String),
    #[error("policy `{0}` is a batch policy and requires a bounded machine queue size (MissingQueueSize)")]
    MissingQueueSize(String),
    #[error("a policy named `{0}` is already registered")]
    DuplicatePolicyName(String),
    #[error("invalid scheduling decision: {0}")]
    InvalidDecision(String),
    #[error("unknown task type `{0}`")]
    UnknownTaskType(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SchedulingMode {
    Immediate,
    Batch,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PolicyDescriptor {
    pub name: String,
    pub mode: SchedulingMode,
    pub requires_queue_size: bool,
}

impl PolicyDescriptor {
    pub fn immediate(name: &str) -> Self {
        PolicyDescriptor {
            name: name.to_string(),
            mode: SchedulingMode::Immediate,
            requires_queue_size: false,
        }
    }

    pub fn batch(name: &str) -> Self {
        PolicyDescriptor {
            name: name.to_string(),
            mode: SchedulingMode::Batch,
            requires_queue_size: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SchedulingDecision {
    Map { task: TaskIdx, machine: MachineIdx },
    Cancel { task: TaskIdx },
    Defer,
}

/// A batch-queue entry as seen by a policy.
#[derive(Debug, Clone, Copy)]
pub struct PendingTask<'a> {
    pub idx: TaskIdx,
    pub id: &'a str,
    pub eet_row: usize,
    pub arrival: SimTime,
    pub deadline: SimTime,
}

/// A machine as seen by a policy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MachineView {
    pub eet_col: usize,
    /// When the machine can start something new, ignoring its local queue.
    pub release: SimTime,
    pub idle: bool,
    pub queue_len: usize,
    /// Sum of EET of the tasks waiting in the local queue.
    pub queued_eet: f64,
}

/// Consistent snapshot handed to a policy at one invocation.
pub struct SchedulerInput<'a> {
    pub now: SimTime,
    pub batch: Vec<PendingTask<'a>>,
    pub machines: Vec<MachineView>,
    pub eet: &'a EetMatrix,
    pub queue_size: QueueSize,
    pub cancellation_enabled: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Placement {
    Mapped,
    /// Cancelled instead of mapped because no machine could meet the deadline.
    Cancelled,
}

pub struct Planner<'a, 'b> {
    input: &'b SchedulerInput<'a>,
    machines: Vec<MachineView>,
    decided: Vec<bool>,
    remaining: usize,
    decisions: Vec<SchedulingDecision>,
}

impl<'a, 'b> Planner<'a, 'b> {
    pub fn new(input: &'b SchedulerInput<'a>) -> Self {
        Planner {
            input,
            machines: input.machines.clone(),
            decided: vec![false; input.batch.len()],
            remaining: input.batch.len(),
            decisions: Vec::new(),
        }
    }

    pub fn now(&self) -> SimTime {
        self.input.now
    }

    /// Batch queue in FIFO order. Positions into this slice identify tasks in
    /// every other planner method.
    pub fn tasks(&self) -> &[PendingTask<'a>] {
        &self.input.batch
    }

    pub fn is_pending(&self, task: usize) -> bool {
        !self.decided[task]
    }

    pub fn pending(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.decided.len()).filter(|&i| !self.decided[i])
    }

    pub fn remaining(&self) -> usize {
        self.remaining
    }

    pub fn machines(&self) -> &[MachineView] {
        &self.machines
    }

    pub fn eet(&self, task: usize, machine: usize) -> f64 {
        self.input
            .eet
            .at(self.input.batch[task].eet_row, self.machines[machine].eet_col)
    }

    /// Estimated completion time of `task` if appended to `machine` now.
    pub fn ect(&self, task: usize, machine: usize) -> SimTime {
        let m = &self.machines[machine];
        m.release + m.queued_eet + self.eet(task, machine)
    }

    pub fn has_capacity(&self, machine: usize) -> bool {
        let m = &self.machines[machine];
        m.idle || m.queue_len < self.input.queue_size.capacity()
    }

    pub fn any_capacity(&self) -> bool {
        (0..self.machines.len()).any(|m| self.has_capacity(m))
    }

    /// Machine with capacity minimizing `key`, lowest index on ties.
    pub fn argmin_machine(&self, mut key: impl FnMut(usize) -> f64) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64)> = None;
        for m in 0..self.machines.len() {
            if !self.has_capacity(m) {
                continue;
            }
            let v = key(m);
            if best.is_none_or(|(_, b)| v < b) {
                best = Some((m, v));
            }
        }
        best
    }

    /// Lowest ECT over all machines, capacity ignored.
    pub fn min_ect(&self, task: usize) -> SimTime {
        (0..self.machines.len())
            .map(|m| self.ect(task, m))
            .fold(f64::INFINITY, f64::min)
    }

    /// Whether the deadline is unattainable on every machine.
    pub fn is_hopeless(&self, task: usize) -> bool {
        self.min_ect(task) > self.input.batch[task].deadline
    }

    /// Maps a pending task, or cancels it when cancellation is enabled and no
    /// machine can finish it by its deadline.
    pub fn map(&mut self, task: usize, machine: usize) -> Result<Placement, SchedulerError> {
        self.check_pending(task)?;
        if machine >= self.machines.len() {
            return Err(SchedulerError::InvalidDecision(format!("no machine at index {machine}")));
        }
        if self.input.cancellation_enabled && self.is_hopeless(task) {
            self.cancel(task)?;
            return Ok(Placement::Cancelled);
        }
        if !self.has_capacity(machine) {
            return Err(SchedulerError::InvalidDecision(format!(
                "machine {machine} has no free local queue slot"
            )));
        }
        let eet = self.eet(task, machine);
        let deadline = self.input.batch[task].deadline;
        let now = self.input.now;
        let m = &mut self.machines[machine];
        if m.idle {
            m.idle = false;
            m.release = scheduled_finish(now, eet, deadline);
        } else {
            m.queue_len += 1;
            m.queued_eet += eet;
        }
        self.mark(task);
        self.decisions.push(SchedulingDecision::Map {
            task: self.input.batch[task].idx,
            machine: MachineIdx(machine),
        });
        Ok(Placement::Mapped)
    }

    pub fn cancel(&mut self, task: usize) -> Result<(), SchedulerError> {
        self.check_pending(task)?;
        self.mark(task);
        self.decisions.push(SchedulingDecision::Cancel {
            task: self.input.batch[task].idx,
        });
        Ok(())
    }

    pub fn defer(&mut self) {
        self.decisions.push(SchedulingDecision::Defer);
    }

    /// Tie-break key among tasks: arrival, then id.
    pub fn task_order(&self, a: usize, b: usize) -> std::cmp::Ordering {
        let (x, y) = (&self.input.batch[a], &self.input.batch[b]);
        x.arrival.total_cmp(&y.arrival).then_with(|| x.id.cmp(y.id))
    }

    fn check_pending(&self, task: usize) -> Result<(), SchedulerError> {
        match self.decided.get(task) {
            None => Err(SchedulerError::InvalidDecision(format!("no batch task at position {task}"))),
            Some(true) => Err(SchedulerError::InvalidDecision(format!(
                "task `{}` already decided in this invocation",
                self.input.batch[task].id
            ))),
            Some(false) => Ok(()),
        }
    }

    fn mark(&mut self, task: usize) {
        self.decided[task] = true;
        self.remaining -= 1;
    }

    pub fn into_decisions(self) -> Vec<SchedulingDecision> {
        self.decisions
    }
}

/// End or drop time of a task started at `start`.
pub fn scheduled_finish(start: SimTime, eet: f64, deadline: SimTime) -> SimTime {
    let end = start + eet;
    if end <= deadline {
        end
    } else {
        deadline.max(start)
    }
}

pub trait Policy: Send {
    fn schedule(&mut self, planner: &mut Planner<'_, '_>) -> Result<(), SchedulerError>;
}

impl<F> Policy for F
where
    F: FnMut(&mut Planner<'_, '_>) -> Result<(), SchedulerError> + Send,
{
    fn schedule(&mut self, planner: &mut Planner<'_, '_>) -> Result<(), SchedulerError> {
        self(planner)
    }
}

pub type PolicyFactory = Arc<dyn Fn() -> Box<dyn Policy> + Send + Sync>;

#[derive(Clone)]
struct Entry {
    descriptor: PolicyDescriptor,
    factory: PolicyFactory,
}

/// Name to policy lookup. Names are case-insensitive.
#[derive(Clone)]
pub struct PolicyRegistry {
    entries: BTreeMap<String, Entry>,
}

impl fmt::Debug for PolicyRegistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.entries.keys()).finish()
    }
}

pub const BUILTIN_POLICIES: [&str; 6] = ["fcfs_rr", "met", "mct", "edf", "min_min", "max_min"];

impl PolicyRegistry {
    pub fn empty() -> Self {
        PolicyRegistry {
            entries: BTreeMap::new(),
        }
    }

    pub fn with_builtins() -> Self {
        let mut r = Self::empty();
        let builtins: [(PolicyDescriptor, PolicyFactory); 6] = [
            (
                PolicyDescriptor::immediate("fcfs_rr"),
                Arc::new(|| Box::new(FcfsRoundRobin::default()) as Box<dyn Policy>),
            ),
            (PolicyDescriptor::immediate("met"), Arc::new(|| Box::new(Met) as Box<dyn Policy>)),
            (PolicyDescriptor::immediate("mct"), Arc::new(|| Box::new(Mct) as Box<dyn Policy>)),
            (PolicyDescriptor::immediate("edf"), Arc::new(|| Box::new(Edf) as Box<dyn Policy>)),
            (PolicyDescriptor::batch("min_min"), Arc::new(|| Box::new(MinMin) as Box<dyn Policy>)),
            (PolicyDescriptor::batch("max_min"), Arc::new(|| Box::new(MaxMin) as Box<dyn Policy>)),
        ];
        for (d, f) in builtins {
            r.register(d, f).expect("builtin names are distinct");
        }
        r
    }

    pub fn register(&mut self, descriptor: PolicyDescriptor, factory: PolicyFactory) -> Result<(), SchedulerError> {
        let key = descriptor.name.to_ascii_lowercase();
        if self.entries.contains_key(&key) {
            return Err(SchedulerError::DuplicatePolicyName(descriptor.name));
        }
        let mut descriptor = descriptor;
        if descriptor.mode == SchedulingMode::Batch {
            descriptor.requires_queue_size = true;
        }
        self.entries.insert(key, Entry { descriptor, factory });
        Ok(())
    }

    pub fn descriptor(&self, name: &str) -> Result<&PolicyDescriptor, SchedulerError> {
        self.entries
            .get(&name.to_ascii_lowercase())
            .map(|e| &e.descriptor)
            .ok_or_else(|| SchedulerError::UnknownPolicy(name.to_string()))
    }

    /// Fresh policy instance for one run.
    pub fn instantiate(&self, name: &str) -> Result<(PolicyDescriptor, Box<dyn Policy>), SchedulerError> {
        let e = self
            .entries
            .get(&name.to_ascii_lowercase())
            .ok_or_else(|| SchedulerError::UnknownPolicy(name.to_string()))?;
        Ok((e.descriptor.clone(), (e.factory)()))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }
}

impl Default for PolicyRegistry {
    fn default() -> Self {
        Self::with_builtins()
    }
}

/// Checks a policy against the configured queue size.
pub fn check_queue_requirement(descriptor: &PolicyDescriptor, queue_size: QueueSize) -> Result<(), SchedulerError> {
    if descriptor.requires_queue_size && !queue_size.is_bounded() {
        return Err(SchedulerError::MissingQueueSize(descriptor.name.clone()));
    }
    Ok(())
}

/// Runs one scheduler invocation and returns its decisions in application
/// order. With cancellation enabled, hopeless tasks are cancelled up front.
pub fn invoke(
    descriptor: &PolicyDescriptor,
    policy: &mut dyn Policy,
    input: &SchedulerInput<'_>,
) -> Result<Vec<SchedulingDecision>, SchedulerError> {
    check_queue_requirement(descriptor, input.queue_size)?;
    let mut planner = Planner::new(input);
    if input.cancellation_enabled {
        for i in 0..input.batch.len() {
            if planner.is_hopeless(i) {
                planner.cancel(i)?;
            }
        }
    }
    if planner.remaining() > 0 {
        policy.schedule(&mut planner)?;
    }
    Ok(planner.into_decisions())
}

/// Release time plus queued work plus the task's own EET on this machine.
pub fn estimated_completion_time(
    machine: &MachineState,
    tasks: &[Task],
    eet: &EetMatrix,
    task_type: &str,
    now: SimTime,
) -> Result<SimTime, SchedulerError> {
    let own = eet
        .lookup(task_type, &machine.machine_type)
        .map_err(|_| SchedulerError::UnknownTaskType(task_type.to_string()))?;
    let release = machine.running.map_or(now, |r| r.until);
    let mut queued = 0.0;
    for t in &machine.local_queue {
        let ty = &tasks[t.0].task_type;
        queued += eet
            .lookup(ty, &machine.machine_type)
            .map_err(|_| SchedulerError::UnknownTaskType(ty.clone()))?;
    }
    Ok(release + queued + own)
}

fn fifo_immediate(
    planner: &mut Planner<'_, '_>,
    order: &[usize],
    choose: impl Fn(&Planner<'_, '_>, usize) -> Option<usize>,
) -> Result<(), SchedulerError> {
    for &t in order {
        if !planner.is_pending(t) {
            continue;
        }
        let Some(m) = choose(planner, t) else { break };
        planner.map(t, m)?;
    }
    Ok(())
}

/// First come first served, machines taken in a fixed rotation.
#[derive(Debug, Default)]
pub struct FcfsRoundRobin {
    next: usize,
}

impl Policy for FcfsRoundRobin {
    fn schedule(&mut self, planner: &mut Planner<'_, '_>) -> Result<(), SchedulerError> {
        let n = planner.machines().len();
        let order: Vec<usize> = planner.pending().collect();
        for t in order {
            let Some(m) = (0..n).map(|k| (self.next + k) % n).find(|&m| planner.has_capacity(m)) else {
                break;
            };
            if planner.map(t, m)? == Placement::Mapped {
                self.next = (m + 1) % n;
            }
        }
        Ok(())
    }
}

/// Minimum execution time: each task to the machine type it runs fastest on.
#[derive(Debug, Default)]
pub struct Met;

impl Policy for Met {
    fn schedule(&mut self, planner: &mut Planner<'_, '_>) -> Result<(), SchedulerError> {
        let order: Vec<usize> = planner.pending().collect();
        fifo_immediate(planner, &order, |p, t| p.argmin_machine(|m| p.eet(t, m)).map(|(m, _)| m))
    }
}

/// Minimum completion time.
#[derive(Debug, Default)]
pub struct Mct;

impl Policy for Mct {
    fn schedule(&mut self, planner: &mut Planner<'_, '_>) -> Result<(), SchedulerError> {
        let order: Vec<usize> = planner.pending().collect();
        fifo_immediate(planner, &order, |p, t| p.argmin_machine(|m| p.ect(t, m)).map(|(m, _)| m))
    }
}

/// Earliest deadline first, each task to its minimum completion time machine.
#[derive(Debug, Default)]
pub struct Edf;

impl Policy for Edf {
    fn schedule(&mut self, planner: &mut Planner<'_, '_>) -> Result<(), SchedulerError> {
        let mut order: Vec<usize> = planner.pending().collect();
        order.sort_by(|&a, &b| {
            planner.tasks()[a]
                .deadline
                .total_cmp(&planner.tasks()[b].deadline)
                .then_with(|| planner.task_order(a, b))
        });
        fifo_immediate(planner, &order, |p, t| p.argmin_machine(|m| p.ect(t, m)).map(|(m, _)| m))
    }
}

/// Best (ECT, machine) per pending task; `None` once no machine has room.
fn best_pairs(planner: &Planner<'_, '_>) -> Vec<(usize, usize, f64)> {
    planner
        .pending()
        .filter_map(|t| planner.argmin_machine(|m| planner.ect(t, m)).map(|(m, e)| (t, m, e)))
        .collect()
}

/// Repeatedly maps the (task, machine) pair with the globally smallest ECT.
#[derive(Debug, Default)]
pub struct MinMin;

impl Policy for MinMin {
    fn schedule(&mut self, planner: &mut Planner<'_, '_>) -> Result<(), SchedulerError> {
        while planner.remaining() > 0 && planner.any_capacity() {
            let pick = best_pairs(planner).into_iter().min_by(|a, b| {
                a.2.total_cmp(&b.2)
                    .then(a.1.cmp(&b.1))
                    .then_with(|| planner.task_order(a.0, b.0))
            });
            let Some((t, m, _)) = pick else { break };
            planner.map(t, m)?;
        }
        Ok(())
    }
}

/// Repeatedly maps the task whose best ECT is largest to that best machine.
#[derive(Debug, Default)]
pub struct MaxMin;

impl Policy for MaxMin {
    fn schedule(&mut self, planner: &mut Planner<'_, '_>) -> Result<(), SchedulerError> {
        while planner.remaining() > 0 && planner.any_capacity() {
            let pick = best_pairs(planner).into_iter().min_by(|a, b| {
                b.2.total_cmp(&a.2)
                    .then(a.1.cmp(&b.1))
                    .then_with(|| planner.task_order(a.0, b.0))
            });
            let Some((t, m, _)) = pick else { break };
            planner.map(t, m)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{MachineState, RunningTask};

    fn s1_eet() -> EetMatrix {
        EetMatrix::new(
            vec!["A".into(), "B".into()],
            vec!["fast".into(), "slow".into()],
            vec![vec![2.0, 4.0], vec![4.0, 10.0]],
        )
        .unwrap()
    }

    fn idle(col: usize, now: f64) -> MachineView {
        MachineView {
            eet_col: col,
            release: now,
            idle: true,
            queue_len: 0,
            queued_eet: 0.0,
        }
    }

    fn task<'a>(i: usize, id: &'a str, row: usize, arrival: f64, deadline: f64) -> PendingTask<'a> {
        PendingTask {
            idx: TaskIdx(i),
            id,
            eet_row: row,
            arrival,
            deadline,
        }
    }

    fn run(name: &str, input: &SchedulerInput<'_>) -> Result<Vec<SchedulingDecision>, SchedulerError> {
        let reg = PolicyRegistry::with_builtins();
        let (d, mut p) = reg.instantiate(name)?;
        invoke(&d, p.as_mut(), input)
    }

    fn map(t: usize, m: usize) -> SchedulingDecision {
        SchedulingDecision::Map {
            task: TaskIdx(t),
            machine: MachineIdx(m),
        }
    }

    fn s1_at_zero(eet: &EetMatrix) -> SchedulerInput<'_> {
        SchedulerInput {
            now: 0.0,
            batch: vec![task(0, "t1", 0, 0.0, 10.0), task(1, "t2", 1, 0.0, 12.0)],
            machines: vec![idle(0, 0.0), idle(1, 0.0)],
            eet,
            queue_size: QueueSize::Bounded(2),
            cancellation_enabled: false,
        }
    }

    #[test]
    fn min_min_on_s1_snapshot() {
        let eet = s1_eet();
        assert_eq!(run("min_min", &s1_at_zero(&eet)).unwrap(), vec![map(0, 0), map(1, 0)]);
    }

    #[test]
    fn max_min_on_s1_snapshot() {
        let eet = s1_eet();
        assert_eq!(run("max_min", &s1_at_zero(&eet)).unwrap(), vec![map(1, 0), map(0, 1)]);
    }

    #[test]
    fn immediate_policies_on_s1_snapshot() {
        let eet = s1_eet();
        let input = s1_at_zero(&eet);
        assert_eq!(run("mct", &input).unwrap(), vec![map(0, 0), map(1, 0)]);
        assert_eq!(run("MET", &input).unwrap(), vec![map(0, 0), map(1, 0)]);
        assert_eq!(run("edf", &input).unwrap(), vec![map(0, 0), map(1, 0)]);
        assert_eq!(run("fcfs_rr", &input).unwrap(), vec![map(0, 0), map(1, 1)]);
    }

    #[test]
    fn mct_cancels_hopeless_task() {
        let eet = EetMatrix::new(vec!["A".into()], vec!["m1".into(), "m2".into()], vec![vec![5.0, 6.0]]).unwrap();
        let input = SchedulerInput {
            now: 0.0,
            batch: vec![task(0, "t", 0, 0.0, 3.0)],
            machines: vec![idle(0, 0.0), idle(1, 0.0)],
            eet: &eet,
            queue_size: QueueSize::Unbounded,
            cancellation_enabled: true,
        };
        assert_eq!(run("mct", &input).unwrap(), vec![SchedulingDecision::Cancel { task: TaskIdx(0) }]);
        let no_cancel = SchedulerInput {
            cancellation_enabled: false,
            ..input
        };
        assert_eq!(run("mct", &no_cancel).unwrap(), vec![map(0, 0)]);
    }

    #[test]
    fn edf_orders_by_deadline() {
        let eet = s1_eet();
        let input = SchedulerInput {
            now: 0.0,
            batch: vec![task(0, "t1", 0, 0.0, 10.0), task(1, "t2", 0, 0.0, 5.0)],
            machines: vec![idle(0, 0.0), idle(1, 0.0)],
            eet: &eet,
            queue_size: QueueSize::Unbounded,
            cancellation_enabled: false,
        };
        // t2 (deadline 5) first; t1 then ties at ECT 4 on both machines
        assert_eq!(run("edf", &input).unwrap(), vec![map(1, 0), map(0, 0)]);
    }

    #[test]
    fn batch_policy_needs_queue_size() {
        let eet = s1_eet();
        let mut input = s1_at_zero(&eet);
        input.queue_size = QueueSize::Unbounded;
        assert_eq!(
            run("min_min", &input),
            Err(SchedulerError::MissingQueueSize("min_min".into()))
        );
        assert!(run("mct", &input).is_ok());
    }

    #[test]
    fn batch_policies_fill_to_capacity_then_stop() {
        let eet = s1_eet();
        let batch: Vec<_> = (0..6).map(|i| task(i, ["a", "b", "c", "d", "e", "f"][i], 0, 0.0, 100.0)).collect();
        let input = SchedulerInput {
            now: 0.0,
            batch,
            machines: vec![idle(0, 0.0), idle(1, 0.0)],
            eet: &eet,
            queue_size: QueueSize::Bounded(1),
            cancellation_enabled: false,
        };
        // one running slot plus one queue slot per machine
        for name in ["min_min", "max_min", "mct", "met", "edf", "fcfs_rr"] {
            let d = run(name, &input).unwrap();
            let mut per_machine = [0usize; 2];
            for dec in &d {
                if let SchedulingDecision::Map { machine, .. } = dec {
                    per_machine[machine.0] += 1;
                }
            }
            assert!(per_machine.iter().all(|&n| n <= 2), "{name}: {per_machine:?}");
            if name != "met" {
                assert_eq!(d.len(), 4, "{name}");
            }
        }
    }

    #[test]
    fn registry_contract() {
        let mut reg = PolicyRegistry::with_builtins();
        assert_eq!(reg.names().collect::<Vec<_>>().len(), 6);
        let custom: PolicyFactory = Arc::new(|| {
            Box::new(|p: &mut Planner<'_, '_>| {
                let first = p.pending().next();
                if let Some(t) = first {
                    p.map(t, 0)?;
                }
                Ok(())
            }) as Box<dyn Policy>
        });
        reg.register(PolicyDescriptor::immediate("my-policy"), custom.clone()).unwrap();
        assert!(reg.descriptor("My-Policy").is_ok());
        assert_eq!(
            reg.register(PolicyDescriptor::immediate("MCT"), custom),
            Err(SchedulerError::DuplicatePolicyName("MCT".into()))
        );
        assert!(matches!(reg.descriptor("nope"), Err(SchedulerError::UnknownPolicy(_))));
    }

    #[test]
    fn planner_rejects_invalid_decisions() {
        let eet = s1_eet();
        let mut input = s1_at_zero(&eet);
        input.queue_size = QueueSize::Bounded(1);
        let mut p = Planner::new(&input);
        p.map(0, 0).unwrap();
        assert!(matches!(p.map(0, 1), Err(SchedulerError::InvalidDecision(_))));
        assert!(matches!(p.cancel(0), Err(SchedulerError::InvalidDecision(_))));
        p.map(1, 0).unwrap();
        let mut extra = s1_at_zero(&eet);
        extra.queue_size = QueueSize::Bounded(1);
        extra.batch.push(task(2, "t3", 0, 1.0, 6.0));
        let mut p = Planner::new(&extra);
        p.map(0, 0).unwrap();
        p.map(1, 0).unwrap();
        assert!(matches!(p.map(2, 0), Err(SchedulerError::InvalidDecision(_))));
    }

    #[test]
    fn ect_examples() {
        let eet = s1_eet();
        let mut fast = MachineState::new("fast", "fast", 0);
        let tasks = vec![Task::new("t1", "A", 0.0, 10.0)];
        assert_eq!(estimated_completion_time(&fast, &tasks, &eet, "B", 0.0).unwrap(), 4.0);
        assert_eq!(estimated_completion_time(&fast, &tasks, &eet, "A", 10.0).unwrap(), 12.0);
        fast.running = Some(RunningTask {
            task: TaskIdx(0),
            started: 0.0,
            until: 2.0,
        });
        assert_eq!(estimated_completion_time(&fast, &tasks, &eet, "A", 0.0).unwrap(), 4.0);
        fast.local_queue.push_back(TaskIdx(0));
        assert_eq!(estimated_completion_time(&fast, &tasks, &eet, "A", 0.0).unwrap(), 6.0);
        assert_eq!(
            estimated_completion_time(&fast, &tasks, &eet, "C", 0.0),
            Err(SchedulerError::UnknownTaskType("C".into()))
        );
    }

    #[test]
    fn scheduled_finish_clips_at_deadline() {
        assert_eq!(scheduled_finish(0.0, 2.0, 10.0), 2.0);
        assert_eq!(scheduled_finish(0.0, 5.0, 3.0), 3.0);
        assert_eq!(scheduled_finish(4.0, 2.0, 6.0), 6.0);
        assert_eq!(scheduled_finish(7.0, 2.0, 6.0), 7.0);
    }
}
