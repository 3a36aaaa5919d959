//! Shared value types: task types, machine types, the EET matrix, tasks and
//! their lifecycle, machine state and the simulation configuration.

use std::collections::{HashMap, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Simulated time in seconds.
pub type SimTime = f64;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("unknown task type `{0}`")]
    UnknownTaskType(String),
    #[error("unknown machine type `{0}`")]
    UnknownMachineType(String),
    #[error("illegal transition for task `{task}`: {from} -> {to}")]
    IllegalTransition {
        task: String,
        from: TaskStatus,
        to: TaskStatus,
    },
    #[error("transition for task `{task}` at {at} precedes its last transition at {last}")]
    TimeReversal { task: String, at: SimTime, last: SimTime },
    #[error("non-positive EET cell ({task_type}, {machine_type}) = {value}")]
    NonPositiveCell {
        task_type: String,
        machine_type: String,
        value: f64,
    },
    #[error("duplicate {kind} `{id}`")]
    Duplicate { kind: &'static str, id: String },
    #[error("EET matrix row `{row}` has {got} cells, expected {expected}")]
    Ragged { row: String, got: usize, expected: usize },
    #[error("invalid power profile for `{0}`: require busy_watts >= idle_watts >= 0")]
    InvalidPowerProfile(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskType {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerProfile {
    pub idle_watts: f64,
    pub busy_watts: f64,
}

impl PowerProfile {
    pub const ZERO: PowerProfile = PowerProfile {
        idle_watts: 0.0,
        busy_watts: 0.0,
    };

    pub fn is_valid(&self) -> bool {
        self.idle_watts.is_finite()
            && self.busy_watts.is_finite()
            && self.idle_watts >= 0.0
            && self.busy_watts >= self.idle_watts
    }
}

impl Default for PowerProfile {
    fn default() -> Self {
        PowerProfile::ZERO
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MachineType {
    pub id: String,
    pub power_profile: PowerProfile,
}

/// Task-type by machine-type table of execution durations.
///
/// Cells are stored row-major. The matrix is complete and every cell is finite
/// and strictly positive; the constructor refuses anything else.
#[derive(Debug, Clone, PartialEq)]
pub struct EetMatrix {
    task_types: Vec<String>,
    machine_types: Vec<String>,
    cells: Vec<f64>,
    row_index: HashMap<String, usize>,
    col_index: HashMap<String, usize>,
}

impl EetMatrix {
    pub fn new(
        task_types: Vec<String>,
        machine_types: Vec<String>,
        rows: Vec<Vec<f64>>,
    ) -> Result<Self, ModelError> {
        let row_index = index_unique(&task_types, "task type")?;
        let col_index = index_unique(&machine_types, "machine type")?;
        let width = machine_types.len();
        let mut cells = Vec::with_capacity(task_types.len() * width);
        for (name, row) in task_types.iter().zip(rows.iter()) {
            if row.len() != width {
                return Err(ModelError::Ragged {
                    row: name.clone(),
                    got: row.len(),
                    expected: width,
                });
            }
            for (col, &value) in row.iter().enumerate() {
                if !(value.is_finite() && value > 0.0) {
                    return Err(ModelError::NonPositiveCell {
                        task_type: name.clone(),
                        machine_type: machine_types[col].clone(),
                        value,
                    });
                }
                cells.push(value);
            }
        }
        if rows.len() != task_types.len() {
            return Err(ModelError::Ragged {
                row: format!("<{} rows>", rows.len()),
                got: rows.len(),
                expected: task_types.len(),
            });
        }
        Ok(EetMatrix {
            task_types,
            machine_types,
            cells,
            row_index,
            col_index,
        })
    }

    pub fn task_types(&self) -> &[String] {
        &self.task_types
    }

    pub fn machine_types(&self) -> &[String] {
        &self.machine_types
    }

    pub fn row_of(&self, task_type: &str) -> Option<usize> {
        self.row_index.get(task_type).copied()
    }

    pub fn col_of(&self, machine_type: &str) -> Option<usize> {
        self.col_index.get(machine_type).copied()
    }

    /// Exact cell value for a task type on a machine type.
    pub fn lookup(&self, task_type: &str, machine_type: &str) -> Result<f64, ModelError> {
        let row = self
            .row_of(task_type)
            .ok_or_else(|| ModelError::UnknownTaskType(task_type.to_string()))?;
        let col = self
            .col_of(machine_type)
            .ok_or_else(|| ModelError::UnknownMachineType(machine_type.to_string()))?;
        Ok(self.at(row, col))
    }

    /// Cell by resolved indices. Panics on out-of-range indices.
    #[inline]
    pub fn at(&self, row: usize, col: usize) -> f64 {
        self.cells[row * self.machine_types.len() + col]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        let w = self.machine_types.len();
        &self.cells[row * w..(row + 1) * w]
    }

    /// Mean of a task type's durations across all machine types.
    pub fn row_mean(&self, row: usize) -> f64 {
        let r = self.row(row);
        r.iter().sum::<f64>() / r.len() as f64
    }

    pub fn set(&mut self, task_type: &str, machine_type: &str, value: f64) -> Result<(), ModelError> {
        let row = self
            .row_of(task_type)
            .ok_or_else(|| ModelError::UnknownTaskType(task_type.to_string()))?;
        let col = self
            .col_of(machine_type)
            .ok_or_else(|| ModelError::UnknownMachineType(machine_type.to_string()))?;
        if !(value.is_finite() && value > 0.0) {
            return Err(ModelError::NonPositiveCell {
                task_type: task_type.to_string(),
                machine_type: machine_type.to_string(),
                value,
            });
        }
        let w = self.machine_types.len();
        self.cells[row * w + col] = value;
        Ok(())
    }

    /// Every cell multiplied by `factor` (> 0).
    pub fn scaled(&self, factor: f64) -> EetMatrix {
        let mut out = self.clone();
        for c in &mut out.cells {
            *c *= factor;
        }
        out
    }
}

fn index_unique(ids: &[String], kind: &'static str) -> Result<HashMap<String, usize>, ModelError> {
    let mut map = HashMap::with_capacity(ids.len());
    for (i, id) in ids.iter().enumerate() {
        if map.insert(id.clone(), i).is_some() {
            return Err(ModelError::Duplicate { kind, id: id.clone() });
        }
    }
    Ok(map)
}

/// Exact EET lookup by ids.
pub fn eet_lookup(matrix: &EetMatrix, task_type: &str, machine_type: &str) -> Result<f64, ModelError> {
    matrix.lookup(task_type, machine_type)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskStatus {
    Created,
    BatchQueued,
    MachineQueued,
    Executing,
    Completed,
    Missed,
    Cancelled,
}

impl TaskStatus {
    pub fn is_terminal(self) -> bool {
        matches!(self, TaskStatus::Completed | TaskStatus::Missed | TaskStatus::Cancelled)
    }

    /// Edges of the lifecycle graph.
    pub fn can_transition_to(self, to: TaskStatus) -> bool {
        use TaskStatus::*;
        matches!(
            (self, to),
            (Created, BatchQueued)
                | (BatchQueued, MachineQueued)
                | (BatchQueued, Cancelled)
                | (MachineQueued, Executing)
                | (Executing, Completed)
                | (Executing, Missed)
        )
    }

    pub fn as_str(self) -> &'static str {
        match self {
            TaskStatus::Created => "created",
            TaskStatus::BatchQueued => "batch_queued",
            TaskStatus::MachineQueued => "machine_queued",
            TaskStatus::Executing => "executing",
            TaskStatus::Completed => "completed",
            TaskStatus::Missed => "missed",
            TaskStatus::Cancelled => "cancelled",
        }
    }
}

impl fmt::Display for TaskStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Task {
    pub id: String,
    pub task_type: String,
    pub arrival: SimTime,
    pub deadline: SimTime,
    pub status: TaskStatus,
    pub assigned_machine: Option<String>,
    pub start: Option<SimTime>,
    pub end: Option<SimTime>,
    /// Time of the most recent transition (arrival time while Created).
    pub last_transition: SimTime,
}

impl Task {
    pub fn new(id: impl Into<String>, task_type: impl Into<String>, arrival: SimTime, deadline: SimTime) -> Self {
        Task {
            id: id.into(),
            task_type: task_type.into(),
            arrival,
            deadline,
            status: TaskStatus::Created,
            assigned_machine: None,
            start: None,
            end: None,
            last_transition: 0.0,
        }
    }

    /// Moves the task along one lifecycle edge at time `at`.
    ///
    /// Sets `start` on entering Executing and `end` on entering a terminal state.
    pub fn transition(mut self, to: TaskStatus, at: SimTime) -> Result<Task, ModelError> {
        self.apply_transition(to, at)?;
        Ok(self)
    }

    pub(crate) fn apply_transition(&mut self, to: TaskStatus, at: SimTime) -> Result<(), ModelError> {
        if !self.status.can_transition_to(to) {
            return Err(ModelError::IllegalTransition {
                task: self.id.clone(),
                from: self.status,
                to,
            });
        }
        if at < self.last_transition {
            return Err(ModelError::TimeReversal {
                task: self.id.clone(),
                at,
                last: self.last_transition,
            });
        }
        match to {
            TaskStatus::Executing => self.start = Some(at),
            s if s.is_terminal() => self.end = Some(at),
            _ => {}
        }
        self.status = to;
        self.last_transition = at;
        Ok(())
    }
}

/// Free function form of [`Task::transition`].
pub fn transition(task: Task, to: TaskStatus, at: SimTime) -> Result<Task, ModelError> {
    task.transition(to, at)
}

/// Capacity of each machine's local queue.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QueueSize {
    Bounded(usize),
    Unbounded,
}

impl QueueSize {
    pub fn capacity(self) -> usize {
        match self {
            QueueSize::Bounded(n) => n,
            QueueSize::Unbounded => usize::MAX,
        }
    }

    pub fn is_bounded(self) -> bool {
        matches!(self, QueueSize::Bounded(_))
    }
}

impl Serialize for QueueSize {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            QueueSize::Bounded(n) => s.serialize_u64(*n as u64),
            QueueSize::Unbounded => s.serialize_str("unbounded"),
        }
    }
}

impl<'de> Deserialize<'de> for QueueSize {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            N(u64),
            S(String),
        }
        match Option::<Raw>::deserialize(d)? {
            None => Ok(QueueSize::Unbounded),
            Some(Raw::N(n)) => Ok(QueueSize::Bounded(n as usize)),
            Some(Raw::S(s)) if s.eq_ignore_ascii_case("unbounded") => Ok(QueueSize::Unbounded),
            Some(Raw::S(s)) => Err(serde::de::Error::custom(format!(
                "machine_queue_size must be a positive integer or \"unbounded\", got `{s}`"
            ))),
        }
    }
}

impl Default for QueueSize {
    fn default() -> Self {
        QueueSize::Unbounded
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum StopCondition {
    #[default]
    EndOfWorkload,
    Horizon(SimTime),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MachineSpec {
    pub id: String,
    pub machine_type: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub machines: Vec<MachineSpec>,
    /// Power draw per machine type id; types without an entry draw 0 W.
    #[serde(default)]
    pub power_profiles: std::collections::BTreeMap<String, PowerProfile>,
    pub scheduler_policy: String,
    #[serde(default)]
    pub machine_queue_size: QueueSize,
    #[serde(default)]
    pub cancellation_enabled: bool,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub stop: StopCondition,
}

impl SimulationConfig {
    pub fn power_of(&self, machine_type: &str) -> PowerProfile {
        self.power_profiles.get(machine_type).copied().unwrap_or_default()
    }

    pub fn machine_types(&self) -> Vec<MachineType> {
        let mut seen = std::collections::BTreeSet::new();
        self.machines
            .iter()
            .filter(|m| seen.insert(m.machine_type.clone()))
            .map(|m| MachineType {
                id: m.machine_type.clone(),
                power_profile: self.power_of(&m.machine_type),
            })
            .collect()
    }
}

/// Index of a task inside a simulation's task table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TaskIdx(pub usize);

/// Index of a machine inside a simulation's machine list.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MachineIdx(pub usize);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunningTask {
    pub task: TaskIdx,
    pub started: SimTime,
    /// Scheduled completion or drop time.
    pub until: SimTime,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MachineState {
    pub id: String,
    pub machine_type: String,
    /// Column of `machine_type` in the EET matrix.
    pub eet_col: usize,
    pub running: Option<RunningTask>,
    pub local_queue: VecDeque<TaskIdx>,
    pub busy_intervals: Vec<(SimTime, SimTime)>,
}

impl MachineState {
    pub fn new(id: impl Into<String>, machine_type: impl Into<String>, eet_col: usize) -> Self {
        MachineState {
            id: id.into(),
            machine_type: machine_type.into(),
            eet_col,
            running: None,
            local_queue: VecDeque::new(),
            busy_intervals: Vec::new(),
        }
    }

    pub fn is_idle(&self) -> bool {
        self.running.is_none()
    }

    pub fn busy_time(&self) -> f64 {
        self.busy_intervals.iter().map(|(s, e)| e - s).sum()
    }
}
