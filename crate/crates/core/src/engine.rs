//! Discrete-event kernel.
//!
//! Events are totally ordered by `(time, class, seq)`. At equal times
//! completions run before drops, drops before arrivals, and the scheduler is
//! invoked last, so freed capacity is visible to it. At most one scheduler
//! invocation is pending per timestamp.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;
use std::sync::Arc;

use thiserror::Error;

use crate::metrics::{self, Ledger, MetricsError, Record, SimulationReport};
use crate::model::{
    EetMatrix, MachineIdx, MachineState, ModelError, RunningTask, SimTime, SimulationConfig, StopCondition,
    Task, TaskIdx, TaskStatus,
};
use crate::scheduler::{
    self, MachineView, PendingTask, Policy, PolicyDescriptor, PolicyRegistry, SchedulerError, SchedulerInput,
    SchedulingDecision,
};
use crate::workload::{self, TraceRow, ValidationIssue};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("validation failed: {}", format_issues(.0))]
    ValidationFailed(Vec<ValidationIssue>),
    #[error(transparent)]
    Scheduler(#[from] SchedulerError),
    #[error("event queue is empty")]
    EmptyEventQueue,
    #[error(transparent)]
    Lifecycle(#[from] ModelError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("engine invariant violated: {0}")]
    Invariant(String),
}

fn format_issues(issues: &[ValidationIssue]) -> String {
    issues.iter().map(|i| i.to_string()).collect::<Vec<_>>().join("; ")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[repr(u8)]
pub enum EventClass {
    Completion = 0,
    DeadlineDrop = 1,
    Arrival = 2,
    SchedulerInvoke = 3,
}

impl EventClass {
    pub fn as_str(self) -> &'static str {
        match self {
            EventClass::Completion => "completion",
            EventClass::DeadlineDrop => "deadline_drop",
            EventClass::Arrival => "arrival",
            EventClass::SchedulerInvoke => "scheduler_invoke",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Event {
    pub time: SimTime,
    pub class: EventClass,
    pub seq: u64,
    pub task: Option<TaskIdx>,
    pub machine: Option<MachineIdx>,
}

impl Eq for Event {}

impl Ord for Event {
    fn cmp(&self, other: &Self) -> Ordering {
        self.time
            .total_cmp(&other.time)
            .then(self.class.cmp(&other.class))
            .then(self.seq.cmp(&other.seq))
    }
}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Counters {
    pub arrived: usize,
    pub completed: usize,
    pub missed: usize,
    pub cancelled: usize,
}

/// What one `step` did.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    /// 1-based index of the processed event within the run.
    pub event_no: u64,
    pub time: SimTime,
    pub class: EventClass,
    pub task: Option<TaskIdx>,
    pub machine: Option<MachineIdx>,
    pub decisions: Vec<SchedulingDecision>,
    /// Every lifecycle transition applied, in order.
    pub transitions: Vec<(TaskIdx, TaskStatus)>,
    pub counters: Counters,
}

/// Complete engine state for one run.
pub struct Simulation {
    config: SimulationConfig,
    eet: Arc<EetMatrix>,
    trace: Arc<Vec<TraceRow>>,
    registry: PolicyRegistry,
    descriptor: PolicyDescriptor,
    policy: Option<Box<dyn Policy>>,

    now: SimTime,
    events: BinaryHeap<Reverse<Event>>,
    seq: u64,
    event_no: u64,
    invoke_pending_at: Option<SimTime>,
    batch_queue: Vec<TaskIdx>,
    machines: Vec<MachineState>,
    queued_eet: Vec<f64>,
    tasks: Vec<Task>,
    task_rows: Vec<usize>,
    counters: Counters,
    ledger: Ledger,
}

impl std::fmt::Debug for Simulation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Simulation")
            .field("policy", &self.descriptor.name)
            .field("now", &self.now)
            .field("pending_events", &self.events.len())
            .field("counters", &self.counters)
            .finish_non_exhaustive()
    }
}

/// Compares engine state; the policy instance itself is not compared.
impl PartialEq for Simulation {
    fn eq(&self, other: &Self) -> bool {
        let events = |s: &Simulation| {
            let mut v: Vec<Event> = s.events.iter().map(|r| r.0).collect();
            v.sort();
            v
        };
        self.config == other.config
            && self.eet == other.eet
            && self.trace == other.trace
            && self.descriptor == other.descriptor
            && self.now == other.now
            && self.seq == other.seq
            && self.event_no == other.event_no
            && self.invoke_pending_at == other.invoke_pending_at
            && self.batch_queue == other.batch_queue
            && self.machines == other.machines
            && self.queued_eet == other.queued_eet
            && self.tasks == other.tasks
            && self.counters == other.counters
            && self.ledger == other.ledger
            && events(self) == events(other)
    }
}

impl Simulation {
    /// Validates the inputs and builds a state at time 0 with one arrival
    /// event per trace row. Rows are processed in `(arrival, task_id)` order.
    pub fn new(
        config: SimulationConfig,
        eet: EetMatrix,
        trace: Vec<TraceRow>,
        registry: &PolicyRegistry,
    ) -> Result<Self, EngineError> {
        Self::from_shared(config, Arc::new(eet), Arc::new(trace), registry)
    }

    pub fn from_shared(
        config: SimulationConfig,
        eet: Arc<EetMatrix>,
        trace: Arc<Vec<TraceRow>>,
        registry: &PolicyRegistry,
    ) -> Result<Self, EngineError> {
        let issues = workload::validate(&trace, &eet, &config);
        if !issues.is_empty() {
            return Err(EngineError::ValidationFailed(issues));
        }
        let (descriptor, policy) = registry.instantiate(&config.scheduler_policy)?;
        scheduler::check_queue_requirement(&descriptor, config.machine_queue_size)?;

        let mut sorted;
        let rows: &[TraceRow] = if trace.windows(2).all(|w| {
            w[0].arrival
                .total_cmp(&w[1].arrival)
                .then_with(|| w[0].task_id.cmp(&w[1].task_id))
                .is_le()
        }) {
            &trace
        } else {
            sorted = trace.as_ref().clone();
            workload::sort_trace(&mut sorted);
            &sorted
        };

        let machines: Vec<MachineState> = config
            .machines
            .iter()
            .map(|m| {
                let col = eet.col_of(&m.machine_type).expect("validated");
                MachineState::new(m.id.clone(), m.machine_type.clone(), col)
            })
            .collect();
        let mut tasks = Vec::with_capacity(rows.len());
        let mut task_rows = Vec::with_capacity(rows.len());
        let mut events = BinaryHeap::with_capacity(rows.len() + machines.len() + 1);
        for (i, r) in rows.iter().enumerate() {
            let mut t = Task::new(r.task_id.clone(), r.task_type.clone(), r.arrival, r.deadline);
            t.last_transition = r.arrival;
            tasks.push(t);
            task_rows.push(eet.row_of(&r.task_type).expect("validated"));
            events.push(Reverse(Event {
                time: r.arrival,
                class: EventClass::Arrival,
                seq: i as u64,
                task: Some(TaskIdx(i)),
                machine: None,
            }));
        }
        let n_machines = machines.len();
        Ok(Simulation {
            registry: registry.clone(),
            descriptor,
            policy: Some(policy),
            now: 0.0,
            seq: rows.len() as u64,
            events,
            event_no: 0,
            invoke_pending_at: None,
            batch_queue: Vec::new(),
            queued_eet: vec![0.0; n_machines],
            machines,
            tasks,
            task_rows,
            counters: Counters::default(),
            ledger: Ledger::new(n_machines),
            config,
            eet,
            trace,
        })
    }

    /// Back to the freshly initialized state for the same inputs.
    pub fn reset(&mut self) -> Result<(), EngineError> {
        let fresh = Self::from_shared(self.config.clone(), self.eet.clone(), self.trace.clone(), &self.registry)?;
        *self = fresh;
        Ok(())
    }

    /// Rebuilds with a different EET matrix, keeping config and trace.
    pub fn with_eet(&self, eet: EetMatrix) -> Result<Self, EngineError> {
        Self::from_shared(self.config.clone(), Arc::new(eet), self.trace.clone(), &self.registry)
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    pub fn config(&self) -> &SimulationConfig {
        &self.config
    }

    pub fn eet(&self) -> &EetMatrix {
        &self.eet
    }

    pub fn trace(&self) -> &[TraceRow] {
        &self.trace
    }

    pub fn descriptor(&self) -> &PolicyDescriptor {
        &self.descriptor
    }

    pub fn tasks(&self) -> &[Task] {
        &self.tasks
    }

    pub fn task(&self, idx: TaskIdx) -> &Task {
        &self.tasks[idx.0]
    }

    pub fn task_by_id(&self, id: &str) -> Option<&Task> {
        self.tasks.iter().find(|t| t.id == id)
    }

    pub fn machines(&self) -> &[MachineState] {
        &self.machines
    }

    pub fn batch_queue(&self) -> &[TaskIdx] {
        &self.batch_queue
    }

    pub fn counters(&self) -> Counters {
        self.counters
    }

    pub fn ledger(&self) -> &Ledger {
        &self.ledger
    }

    pub fn events_processed(&self) -> u64 {
        self.event_no
    }

    pub fn pending_events(&self) -> usize {
        self.events.len()
    }

    pub fn peek_event(&self) -> Option<&Event> {
        self.events.peek().map(|r| &r.0)
    }

    pub fn is_finished(&self) -> bool {
        self.events.is_empty()
    }

    /// Pending events in processing order.
    pub fn pending_event_list(&self) -> Vec<Event> {
        let mut v: Vec<Event> = self.events.iter().map(|r| r.0).collect();
        v.sort();
        v
    }

    fn push_event(&mut self, time: SimTime, class: EventClass, task: Option<TaskIdx>, machine: Option<MachineIdx>) {
        let seq = self.seq;
        self.seq += 1;
        self.events.push(Reverse(Event {
            time,
            class,
            seq,
            task,
            machine,
        }));
    }

    fn request_invoke(&mut self) {
        if self.invoke_pending_at != Some(self.now) {
            self.invoke_pending_at = Some(self.now);
            self.push_event(self.now, EventClass::SchedulerInvoke, None, None);
        }
    }

    fn transition(
        &mut self,
        t: TaskIdx,
        to: TaskStatus,
        log: &mut Vec<(TaskIdx, TaskStatus)>,
    ) -> Result<(), EngineError> {
        self.tasks[t.0].apply_transition(to, self.now)?;
        log.push((t, to));
        Ok(())
    }

    /// Begins executing `t` on machine `m` at the current time.
    fn start(&mut self, m: usize, t: TaskIdx, log: &mut Vec<(TaskIdx, TaskStatus)>) -> Result<(), EngineError> {
        let now = self.now;
        self.transition(t, TaskStatus::Executing, log)?;
        let eet = self.eet.at(self.task_rows[t.0], self.machines[m].eet_col);
        let deadline = self.tasks[t.0].deadline;
        let until = scheduler::scheduled_finish(now, eet, deadline);
        let class = if now + eet <= deadline {
            EventClass::Completion
        } else {
            EventClass::DeadlineDrop
        };
        self.machines[m].running = Some(RunningTask {
            task: t,
            started: now,
            until,
        });
        self.ledger.record(now, Record::Start { machine: m })?;
        self.push_event(until, class, Some(t), Some(MachineIdx(m)));
        Ok(())
    }

    fn start_next(&mut self, m: usize, log: &mut Vec<(TaskIdx, TaskStatus)>) -> Result<(), EngineError> {
        if let Some(next) = self.machines[m].local_queue.pop_front() {
            if self.machines[m].local_queue.is_empty() {
                self.queued_eet[m] = 0.0;
            } else {
                self.queued_eet[m] -= self.eet.at(self.task_rows[next.0], self.machines[m].eet_col);
            }
            self.start(m, next, log)?;
        }
        Ok(())
    }

    fn finish(
        &mut self,
        m: usize,
        t: TaskIdx,
        missed: bool,
        log: &mut Vec<(TaskIdx, TaskStatus)>,
    ) -> Result<(), EngineError> {
        let running = self.machines[m]
            .running
            .take()
            .filter(|r| r.task == t)
            .ok_or_else(|| EngineError::Invariant(format!("machine {m} is not running task {}", t.0)))?;
        let status = if missed { TaskStatus::Missed } else { TaskStatus::Completed };
        self.transition(t, status, log)?;
        if self.now > running.started {
            self.machines[m].busy_intervals.push((running.started, self.now));
        }
        self.ledger.record(
            self.now,
            Record::Finish {
                machine: m,
                started: running.started,
                missed,
            },
        )?;
        if missed {
            self.counters.missed += 1;
        } else {
            self.counters.completed += 1;
        }
        self.start_next(m, log)?;
        self.request_invoke();
        Ok(())
    }

    fn scheduler_input(&self) -> SchedulerInput<'_> {
        let batch = self
            .batch_queue
            .iter()
            .map(|&t| {
                let task = &self.tasks[t.0];
                PendingTask {
                    idx: t,
                    id: &task.id,
                    eet_row: self.task_rows[t.0],
                    arrival: task.arrival,
                    deadline: task.deadline,
                }
            })
            .collect();
        let machines = self
            .machines
            .iter()
            .zip(&self.queued_eet)
            .map(|(m, &q)| MachineView {
                eet_col: m.eet_col,
                release: m.running.map_or(self.now, |r| r.until),
                idle: m.running.is_none(),
                queue_len: m.local_queue.len(),
                queued_eet: q,
            })
            .collect();
        SchedulerInput {
            now: self.now,
            batch,
            machines,
            eet: &self.eet,
            queue_size: self.config.machine_queue_size,
            cancellation_enabled: self.config.cancellation_enabled,
        }
    }

    fn run_scheduler(&mut self, log: &mut Vec<(TaskIdx, TaskStatus)>) -> Result<Vec<SchedulingDecision>, EngineError> {
        if self.batch_queue.is_empty() {
            return Ok(Vec::new());
        }
        let mut policy = self.policy.take().expect("policy present outside invocation");
        let result = {
            let input = self.scheduler_input();
            scheduler::invoke(&self.descriptor, policy.as_mut(), &input)
        };
        self.policy = Some(policy);
        let decisions = result?;
        let cap = self.config.machine_queue_size.capacity();
        for d in &decisions {
            match *d {
                SchedulingDecision::Map { task, machine } => {
                    let m = machine.0;
                    if m >= self.machines.len() {
                        return Err(EngineError::Invariant(format!("decision targets unknown machine {m}")));
                    }
                    self.transition(task, TaskStatus::MachineQueued, log)?;
                    self.tasks[task.0].assigned_machine = Some(self.machines[m].id.clone());
                    if self.machines[m].is_idle() {
                        self.start(m, task, log)?;
                    } else {
                        if self.machines[m].local_queue.len() >= cap {
                            return Err(EngineError::Invariant(format!(
                                "local queue of `{}` would exceed {cap}",
                                self.machines[m].id
                            )));
                        }
                        self.queued_eet[m] += self.eet.at(self.task_rows[task.0], self.machines[m].eet_col);
                        self.machines[m].local_queue.push_back(task);
                    }
                }
                SchedulingDecision::Cancel { task } => {
                    self.transition(task, TaskStatus::Cancelled, log)?;
                    self.ledger.record(self.now, Record::Cancel)?;
                    self.counters.cancelled += 1;
                }
                SchedulingDecision::Defer => {}
            }
        }
        let tasks = &self.tasks;
        self.batch_queue
            .retain(|t| tasks[t.0].status == TaskStatus::BatchQueued);
        Ok(decisions)
    }

    /// Processes the next event in canonical order.
    pub fn step(&mut self) -> Result<StepOutcome, EngineError> {
        let Reverse(ev) = self.events.pop().ok_or(EngineError::EmptyEventQueue)?;
        if ev.time < self.now {
            return Err(EngineError::Invariant(format!(
                "event at {} precedes clock {}",
                ev.time, self.now
            )));
        }
        self.now = ev.time;
        self.event_no += 1;
        let mut log = Vec::new();
        let mut decisions = Vec::new();
        match ev.class {
            EventClass::Arrival => {
                let t = ev.task.expect("arrival carries a task");
                self.transition(t, TaskStatus::BatchQueued, &mut log)?;
                self.batch_queue.push(t);
                self.counters.arrived += 1;
                self.ledger.record(self.now, Record::Arrival)?;
                self.request_invoke();
            }
            EventClass::Completion | EventClass::DeadlineDrop => {
                let t = ev.task.expect("execution event carries a task");
                let m = ev.machine.expect("execution event carries a machine");
                self.finish(m.0, t, ev.class == EventClass::DeadlineDrop, &mut log)?;
            }
            EventClass::SchedulerInvoke => {
                if self.invoke_pending_at == Some(self.now) {
                    self.invoke_pending_at = None;
                }
                decisions = self.run_scheduler(&mut log)?;
            }
        }
        Ok(StepOutcome {
            event_no: self.event_no,
            time: self.now,
            class: ev.class,
            task: ev.task,
            machine: ev.machine,
            decisions,
            transitions: log,
            counters: self.counters,
        })
    }

    /// Steps until the event queue drains or the next event lies beyond the
    /// horizon, then summarizes.
    pub fn run(&mut self, stop: StopCondition) -> Result<SimulationReport, EngineError> {
        self.run_with(stop, |_, _| Ok(()))
    }

    /// Like [`run`](Self::run), calling `observe` after every step.
    pub fn run_with<F>(&mut self, stop: StopCondition, mut observe: F) -> Result<SimulationReport, EngineError>
    where
        F: FnMut(&Simulation, &StepOutcome) -> Result<(), EngineError>,
    {
        while let Some(next) = self.peek_event() {
            if let StopCondition::Horizon(h) = stop {
                if next.time > h {
                    break;
                }
            }
            let out = self.step()?;
            observe(self, &out)?;
        }
        Ok(self.report())
    }

    /// Runs with the stop condition from the configuration.
    pub fn run_configured(&mut self) -> Result<SimulationReport, EngineError> {
        let stop = self.config.stop;
        self.run(stop)
    }

    /// Report for the state reached so far.
    pub fn report(&self) -> SimulationReport {
        metrics::summary(&self.ledger, &self.tasks, &self.machines, &self.config)
    }

    /// Tasks waiting in a batch or local queue or currently executing.
    pub fn in_system(&self) -> usize {
        self.batch_queue.len()
            + self.machines.iter().map(|m| m.local_queue.len()).sum::<usize>()
            + self.machines.iter().filter(|m| m.running.is_some()).count()
    }

    /// Checks conservation, queue membership and capacity.
    pub fn check_invariants(&self) -> Result<(), String> {
        let c = self.counters;
        let live = self.in_system();
        if c.arrived != c.completed + c.missed + c.cancelled + live {
            return Err(format!(
                "conservation: arrived {} != completed {} + missed {} + cancelled {} + in-system {live}",
                c.arrived, c.completed, c.missed, c.cancelled
            ));
        }
        let cap = self.config.machine_queue_size.capacity();
        for m in &self.machines {
            if m.local_queue.len() > cap {
                return Err(format!("machine `{}` holds {} > {cap} queued tasks", m.id, m.local_queue.len()));
            }
            if let Some(r) = m.running {
                if m.local_queue.contains(&r.task) {
                    return Err(format!("running task of `{}` is also queued", m.id));
                }
            }
            for w in m.busy_intervals.windows(2) {
                if w[1].0 < w[0].1 {
                    return Err(format!("overlapping busy intervals on `{}`", m.id));
                }
            }
            for t in &m.local_queue {
                if self.tasks[t.0].status != TaskStatus::MachineQueued {
                    return Err(format!("task `{}` in local queue is {}", self.tasks[t.0].id, self.tasks[t.0].status));
                }
            }
        }
        let batched = self
            .tasks
            .iter()
            .filter(|t| t.status == TaskStatus::BatchQueued)
            .count();
        if batched != self.batch_queue.len() {
            return Err(format!(
                "batch queue holds {} ids but {batched} tasks are batch-queued",
                self.batch_queue.len()
            ));
        }
        Ok(())
    }
}

/// Validates, builds and runs to the configured stop condition.
pub fn simulate(
    config: SimulationConfig,
    eet: EetMatrix,
    trace: Vec<TraceRow>,
    registry: &PolicyRegistry,
) -> Result<SimulationReport, EngineError> {
    let mut sim = Simulation::new(config, eet, trace, registry)?;
    sim.run_configured()
}
