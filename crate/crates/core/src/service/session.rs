use std::collections::HashMap;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;
use tokio::sync::mpsc;

use crate::engine::{EngineError, Simulation, StepOutcome};
use crate::metrics::SimulationReport;
use crate::model::{ModelError, QueueSize, SimTime, SimulationConfig, TaskStatus};
use crate::scheduler::{self, PolicyRegistry};
use crate::workload;

pub const DEFAULT_IDLE_EXPIRY: Duration = Duration::from_secs(30 * 60);

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("unknown session `{0}`")]
    UnknownSession(String),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("workload validation failed")]
    ValidationFailed(Vec<String>),
    #[error("action `{action}` not allowed while session is {status}")]
    WrongSessionState { action: String, status: String },
    #[error("unknown action `{0}`")]
    UnknownAction(String),
    #[error("EET cell must be > 0, got {0}")]
    NonPositiveCell(f64),
    #[error("unknown task type `{0}`")]
    UnknownTaskType(String),
    #[error("unknown machine type `{0}`")]
    UnknownMachineType(String),
    #[error("engine error: {0}")]
    Engine(#[from] EngineError),
}

impl ServiceError {
    pub fn code(&self) -> &'static str {
        match self {
            ServiceError::UnknownSession(_) => "UnknownSession",
            ServiceError::InvalidConfig(_) => "InvalidConfig",
            ServiceError::ValidationFailed(_) => "ValidationFailed",
            ServiceError::WrongSessionState { .. } => "WrongSessionState",
            ServiceError::UnknownAction(_) => "UnknownAction",
            ServiceError::NonPositiveCell(_) => "NonPositiveCell",
            ServiceError::UnknownTaskType(_) => "UnknownTaskType",
            ServiceError::UnknownMachineType(_) => "UnknownMachineType",
            ServiceError::Engine(_) => "EngineError",
        }
    }
}

/// Pacing for `run`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Speed {
    Max,
    EventsPerSecond(f64),
}

impl Serialize for Speed {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Speed::Max => s.serialize_str("max"),
            Speed::EventsPerSecond(r) => s.serialize_f64(*r),
        }
    }
}

impl<'de> Deserialize<'de> for Speed {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Rate(f64),
            Word(String),
        }
        match Raw::deserialize(d)? {
            Raw::Rate(r) if r.is_finite() && r > 0.0 => Ok(Speed::EventsPerSecond(r)),
            Raw::Rate(r) => Err(serde::de::Error::custom(format!("speed must be > 0, got {r}"))),
            Raw::Word(w) if w.eq_ignore_ascii_case("max") => Ok(Speed::Max),
            Raw::Word(w) => Err(serde::de::Error::custom(format!("unknown speed `{w}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum SessionStatus {
    Configuring,
    Ready,
    Running { speed: Speed },
    Paused,
    Finished,
}

impl SessionStatus {
    pub fn name(&self) -> &'static str {
        match self {
            SessionStatus::Configuring => "configuring",
            SessionStatus::Ready => "ready",
            SessionStatus::Running { .. } => "running",
            SessionStatus::Paused => "paused",
            SessionStatus::Finished => "finished",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Action {
    Step,
    Run(Speed),
    Pause,
    Reset,
}

/// Wire form of a control request: `{"action": "run", "speed": 50}`.
#[derive(Debug, Clone, Deserialize)]
pub struct ControlRequest {
    pub action: String,
    #[serde(default)]
    pub speed: Option<Speed>,
}

impl ControlRequest {
    pub fn parse(&self) -> Result<Action, ServiceError> {
        match self.action.to_ascii_lowercase().as_str() {
            "step" => Ok(Action::Step),
            "run" => Ok(Action::Run(self.speed.unwrap_or(Speed::Max))),
            "pause" => Ok(Action::Pause),
            "reset" => Ok(Action::Reset),
            other => Err(ServiceError::UnknownAction(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct CounterSnapshot {
    pub arrived: usize,
    pub completed: usize,
    pub missed: usize,
    pub cancelled: usize,
    pub in_system: usize,
}

/// Streamed once per processed event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Delta {
    pub event_no: u64,
    pub time: SimTime,
    pub kind: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub task: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub machine: Option<String>,
    pub counters: CounterSnapshot,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunningSnapshot {
    pub task: String,
    pub remaining: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MachineSnapshot {
    pub id: String,
    pub machine_type: String,
    pub running: Option<RunningSnapshot>,
    pub queue: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinEntry {
    pub id: String,
    pub time: SimTime,
}

/// Immutable view of a session at one event boundary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub session: String,
    pub status: String,
    pub now: SimTime,
    pub events_processed: u64,
    pub batch_queue: Vec<String>,
    pub machines: Vec<MachineSnapshot>,
    pub completed: Vec<BinEntry>,
    pub missed: Vec<BinEntry>,
    pub cancelled: Vec<BinEntry>,
    pub counters: CounterSnapshot,
    pub report: Option<SimulationReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Ack {
    pub status: SessionStatus,
    pub now: SimTime,
    pub events_processed: u64,
}

/// Checks what can be checked before a workload is loaded.
pub fn check_config(config: &SimulationConfig, registry: &PolicyRegistry) -> Result<(), ServiceError> {
    let descriptor = registry
        .descriptor(&config.scheduler_policy)
        .map_err(|e| ServiceError::InvalidConfig(e.to_string()))?;
    scheduler::check_queue_requirement(descriptor, config.machine_queue_size)
        .map_err(|e| ServiceError::InvalidConfig(e.to_string()))?;
    if config.machines.is_empty() {
        return Err(ServiceError::InvalidConfig("configuration has no machines".into()));
    }
    if config.machine_queue_size == QueueSize::Bounded(0) {
        return Err(ServiceError::InvalidConfig("machine_queue_size must be at least 1".into()));
    }
    if let Some((ty, _)) = config.power_profiles.iter().find(|(_, p)| !p.is_valid()) {
        return Err(ServiceError::InvalidConfig(format!("invalid power profile for `{ty}`")));
    }
    Ok(())
}

pub struct Session {
    id: String,
    config: SimulationConfig,
    registry: PolicyRegistry,
    sim: Option<Simulation>,
    status: SessionStatus,
    /// Bumped whenever a paced run must stop.
    generation: u64,
    subscribers: Vec<mpsc::UnboundedSender<Delta>>,
    last_touched: Instant,
}

impl Session {
    pub fn new(id: String, config: SimulationConfig, registry: PolicyRegistry) -> Result<Self, ServiceError> {
        check_config(&config, &registry)?;
        Ok(Session {
            id,
            config,
            registry,
            sim: None,
            status: SessionStatus::Configuring,
            generation: 0,
            subscribers: Vec::new(),
            last_touched: Instant::now(),
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn status(&self) -> SessionStatus {
        self.status
    }

    pub fn generation(&self) -> u64 {
        self.generation
    }

    pub fn simulation(&self) -> Option<&Simulation> {
        self.sim.as_ref()
    }

    pub fn touch(&mut self) {
        self.last_touched = Instant::now();
    }

    pub fn idle_for(&self) -> Duration {
        self.last_touched.elapsed()
    }

    fn wrong(&self, action: &str) -> ServiceError {
        ServiceError::WrongSessionState {
            action: action.to_string(),
            status: self.status.name().to_string(),
        }
    }

    fn at_time_zero(&self) -> bool {
        self.sim.as_ref().is_none_or(|s| s.events_processed() == 0)
    }

    fn ack(&self) -> Ack {
        Ack {
            status: self.status,
            now: self.sim.as_ref().map_or(0.0, |s| s.now()),
            events_processed: self.sim.as_ref().map_or(0, |s| s.events_processed()),
        }
    }

    /// Parses and validates both CSVs; on success the engine is initialized
    /// and the session becomes Ready. On failure nothing changes.
    pub fn load_workload(&mut self, eet_csv: &[u8], trace_csv: &[u8]) -> Result<Ack, ServiceError> {
        let allowed = match self.status {
            SessionStatus::Configuring | SessionStatus::Ready => true,
            SessionStatus::Paused => self.at_time_zero(),
            _ => false,
        };
        if !allowed {
            return Err(self.wrong("load_workload"));
        }
        let mut problems = Vec::new();
        let eet = workload::parse_eet_csv(eet_csv).map_err(|e| problems.push(format!("eet: {e}")));
        let trace = workload::parse_trace_csv(trace_csv).map_err(|e| problems.push(format!("trace: {e}")));
        let (Ok(eet), Ok(trace)) = (eet, trace) else {
            return Err(ServiceError::ValidationFailed(problems));
        };
        let sim = match Simulation::new(self.config.clone(), eet, trace, &self.registry) {
            Ok(sim) => sim,
            Err(EngineError::ValidationFailed(issues)) => {
                return Err(ServiceError::ValidationFailed(issues.iter().map(|i| i.to_string()).collect()))
            }
            Err(e) => return Err(e.into()),
        };
        self.sim = Some(sim);
        self.status = SessionStatus::Ready;
        self.generation += 1;
        Ok(self.ack())
    }

    /// Replaces one EET cell and re-initializes the engine. Only allowed
    /// before the first event has been processed.
    pub fn update_eet_cell(&mut self, task_type: &str, machine_type: &str, value: f64) -> Result<Ack, ServiceError> {
        let Some(sim) = self.sim.as_ref() else {
            return Err(self.wrong("update_eet"));
        };
        if !matches!(self.status, SessionStatus::Ready | SessionStatus::Paused) || !self.at_time_zero() {
            return Err(self.wrong("update_eet"));
        }
        let mut eet = sim.eet().clone();
        eet.set(task_type, machine_type, value).map_err(|e| match e {
            ModelError::NonPositiveCell { value, .. } => ServiceError::NonPositiveCell(value),
            ModelError::UnknownTaskType(t) => ServiceError::UnknownTaskType(t),
            ModelError::UnknownMachineType(m) => ServiceError::UnknownMachineType(m),
            other => ServiceError::InvalidConfig(other.to_string()),
        })?;
        self.sim = Some(sim.with_eet(eet)?);
        self.status = SessionStatus::Ready;
        Ok(self.ack())
    }

    /// Applies a control action. `Run` at a finite speed only flips the
    /// status; the caller drives it with [`Session::advance`].
    pub fn control(&mut self, action: Action) -> Result<Ack, ServiceError> {
        match action {
            Action::Step => {
                if !matches!(self.status, SessionStatus::Ready | SessionStatus::Paused) {
                    return Err(self.wrong("step"));
                }
                self.status = SessionStatus::Paused;
                self.step_once()?;
            }
            Action::Run(speed) => {
                if !matches!(self.status, SessionStatus::Ready | SessionStatus::Paused) {
                    return Err(self.wrong("run"));
                }
                self.status = SessionStatus::Running { speed };
                self.generation += 1;
                if speed == Speed::Max {
                    while self.status != SessionStatus::Finished {
                        self.step_once()?;
                    }
                }
            }
            Action::Pause => {
                if !matches!(self.status, SessionStatus::Running { .. }) {
                    return Err(self.wrong("pause"));
                }
                self.status = SessionStatus::Paused;
                self.generation += 1;
            }
            Action::Reset => {
                self.generation += 1;
                if let Some(sim) = self.sim.as_mut() {
                    sim.reset()?;
                    self.status = SessionStatus::Ready;
                }
            }
        }
        Ok(self.ack())
    }

    /// One paced-run tick. Returns false once the run should stop.
    pub fn advance(&mut self, generation: u64) -> Result<bool, ServiceError> {
        if generation != self.generation || !matches!(self.status, SessionStatus::Running { .. }) {
            return Ok(false);
        }
        self.step_once()?;
        Ok(self.status != SessionStatus::Finished)
    }

    fn step_once(&mut self) -> Result<(), ServiceError> {
        let sim = self.sim.as_mut().expect("ready session has an engine");
        if !sim.is_finished() {
            let out = sim.step()?;
            let delta = delta_for(sim, &out);
            self.subscribers.retain(|tx| tx.send(delta.clone()).is_ok());
        }
        if sim.is_finished() {
            self.status = SessionStatus::Finished;
        }
        Ok(())
    }

    pub fn subscribe(&mut self) -> mpsc::UnboundedReceiver<Delta> {
        let (tx, rx) = mpsc::unbounded_channel();
        self.subscribers.push(tx);
        rx
    }

    pub fn report(&self) -> Result<SimulationReport, ServiceError> {
        self.sim
            .as_ref()
            .map(|s| s.report())
            .ok_or_else(|| self.wrong("report"))
    }

    pub fn snapshot(&self) -> Snapshot {
        let Some(sim) = self.sim.as_ref() else {
            return Snapshot {
                session: self.id.clone(),
                status: self.status.name().to_string(),
                now: 0.0,
                events_processed: 0,
                batch_queue: Vec::new(),
                machines: self
                    .config
                    .machines
                    .iter()
                    .map(|m| MachineSnapshot {
                        id: m.id.clone(),
                        machine_type: m.machine_type.clone(),
                        running: None,
                        queue: Vec::new(),
                    })
                    .collect(),
                completed: Vec::new(),
                missed: Vec::new(),
                cancelled: Vec::new(),
                counters: CounterSnapshot::default(),
                report: None,
            };
        };
        let name = |t: &crate::model::TaskIdx| sim.task(*t).id.clone();
        let bin = |status: TaskStatus| {
            let mut v: Vec<BinEntry> = sim
                .tasks()
                .iter()
                .filter(|t| t.status == status)
                .map(|t| BinEntry {
                    id: t.id.clone(),
                    time: t.end.unwrap_or(sim.now()),
                })
                .collect();
            v.sort_by(|a, b| a.time.total_cmp(&b.time));
            v
        };
        Snapshot {
            session: self.id.clone(),
            status: self.status.name().to_string(),
            now: sim.now(),
            events_processed: sim.events_processed(),
            batch_queue: sim.batch_queue().iter().map(name).collect(),
            machines: sim
                .machines()
                .iter()
                .map(|m| MachineSnapshot {
                    id: m.id.clone(),
                    machine_type: m.machine_type.clone(),
                    running: m.running.map(|r| RunningSnapshot {
                        task: sim.task(r.task).id.clone(),
                        remaining: r.until - sim.now(),
                    }),
                    queue: m.local_queue.iter().map(name).collect(),
                })
                .collect(),
            completed: bin(TaskStatus::Completed),
            missed: bin(TaskStatus::Missed),
            cancelled: bin(TaskStatus::Cancelled),
            counters: counters_of(sim),
            report: Some(sim.report()),
        }
    }
}

fn counters_of(sim: &Simulation) -> CounterSnapshot {
    let c = sim.counters();
    CounterSnapshot {
        arrived: c.arrived,
        completed: c.completed,
        missed: c.missed,
        cancelled: c.cancelled,
        in_system: sim.in_system(),
    }
}

fn delta_for(sim: &Simulation, out: &StepOutcome) -> Delta {
    Delta {
        event_no: out.event_no,
        time: out.time,
        kind: out.class.as_str().to_string(),
        task: out.task.map(|t| sim.task(t).id.clone()),
        machine: out.machine.map(|m| sim.machines()[m.0].id.clone()),
        counters: counters_of(sim),
    }
}

pub type SessionHandle = Arc<Mutex<Session>>;

/// All live sessions.
pub struct SessionManager {
    sessions: Mutex<HashMap<String, SessionHandle>>,
    registry: PolicyRegistry,
    idle_expiry: Duration,
}

impl SessionManager {
    pub fn new(registry: PolicyRegistry) -> Self {
        SessionManager {
            sessions: Mutex::new(HashMap::new()),
            registry,
            idle_expiry: DEFAULT_IDLE_EXPIRY,
        }
    }

    pub fn with_idle_expiry(mut self, expiry: Duration) -> Self {
        self.idle_expiry = expiry;
        self
    }

    pub fn registry(&self) -> &PolicyRegistry {
        &self.registry
    }

    pub fn create(&self, config: SimulationConfig) -> Result<String, ServiceError> {
        let id = uuid::Uuid::new_v4().simple().to_string();
        let session = Session::new(id.clone(), config, self.registry.clone())?;
        self.sessions
            .lock()
            .expect("session map poisoned")
            .insert(id.clone(), Arc::new(Mutex::new(session)));
        Ok(id)
    }

    pub fn get(&self, id: &str) -> Result<SessionHandle, ServiceError> {
        let handle = self
            .sessions
            .lock()
            .expect("session map poisoned")
            .get(id)
            .cloned()
            .ok_or_else(|| ServiceError::UnknownSession(id.to_string()))?;
        handle.lock().expect("session poisoned").touch();
        Ok(handle)
    }

    /// Runs `f` with exclusive access to one session.
    pub fn with<T>(&self, id: &str, f: impl FnOnce(&mut Session) -> Result<T, ServiceError>) -> Result<T, ServiceError> {
        let handle = self.get(id)?;
        let mut guard = handle.lock().expect("session poisoned");
        f(&mut guard)
    }

    pub fn len(&self) -> usize {
        self.sessions.lock().expect("session map poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Drops sessions untouched for longer than the idle expiry. Returns how
    /// many were removed.
    pub fn expire_idle(&self) -> usize {
        let mut map = self.sessions.lock().expect("session map poisoned");
        let before = map.len();
        let expiry = self.idle_expiry;
        map.retain(|_, s| s.lock().map(|s| s.idle_for() <= expiry).unwrap_or(false));
        before - map.len()
    }
}
