//! Run accounting: the append-only ledger fed by the engine, the two-level
//! power model, and the end-of-run report with its JSON and CSV exports.

use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize, Serializer};
use thiserror::Error;

use crate::model::{MachineState, PowerProfile, SimTime, SimulationConfig, Task, TaskStatus};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("event at {at} recorded after an event at {last}")]
    OutOfOrderEvent { at: SimTime, last: SimTime },
    #[error("unsupported export format `{0}` (expected json or csv)")]
    UnsupportedFormat(String),
    #[error("no machine at index {0}")]
    UnknownMachine(usize),
    #[error("report could not be decoded: {0}")]
    Decode(String),
}

/// One accounting fact, in processing order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Record {
    Arrival,
    Cancel,
    Start { machine: usize },
    /// Execution ended on `machine`, either by completion or by a drop.
    Finish { machine: usize, started: SimTime, missed: bool },
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MachineLedger {
    pub busy_intervals: Vec<(SimTime, SimTime)>,
    pub tasks_executed: usize,
}

impl MachineLedger {
    pub fn busy_time(&self) -> f64 {
        self.busy_intervals.iter().map(|(s, e)| e - s).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Ledger {
    last: SimTime,
    last_terminal: SimTime,
    pub arrived: usize,
    pub completed: usize,
    pub missed: usize,
    pub cancelled: usize,
    pub machines: Vec<MachineLedger>,
}

impl Ledger {
    pub fn new(machine_count: usize) -> Self {
        Ledger {
            machines: vec![MachineLedger::default(); machine_count],
            ..Default::default()
        }
    }

    pub fn record(&mut self, at: SimTime, rec: Record) -> Result<(), MetricsError> {
        if at < self.last {
            return Err(MetricsError::OutOfOrderEvent { at, last: self.last });
        }
        let machine_count = self.machines.len();
        match rec {
            Record::Arrival => self.arrived += 1,
            Record::Start { machine: m } => {
                self.machines
                    .get_mut(m)
                    .ok_or(MetricsError::UnknownMachine(m))?
                    .tasks_executed += 1
            }
            Record::Cancel => {
                self.cancelled += 1;
                self.last_terminal = at;
            }
            Record::Finish { machine: m, started, missed } => {
                if m >= machine_count {
                    return Err(MetricsError::UnknownMachine(m));
                }
                if at > started {
                    self.machines[m].busy_intervals.push((started, at));
                }
                if missed {
                    self.missed += 1;
                } else {
                    self.completed += 1;
                }
                self.last_terminal = at;
            }
        }
        self.last = at;
        Ok(())
    }

    /// Time of the last terminal event so far.
    pub fn makespan(&self) -> SimTime {
        self.last_terminal
    }

    pub fn busy_time(&self, machine: usize) -> f64 {
        self.machines[machine].busy_time()
    }
}

/// Joules per machine under the two-level power model.
pub fn energy(ledger: &Ledger, profiles: &[PowerProfile], makespan: SimTime) -> Vec<f64> {
    ledger
        .machines
        .iter()
        .zip(profiles)
        .map(|(m, p)| machine_energy(m.busy_time(), *p, makespan))
        .collect()
}

fn machine_energy(busy: f64, p: PowerProfile, makespan: SimTime) -> f64 {
    if makespan <= 0.0 {
        return 0.0;
    }
    let busy = busy.clamp(0.0, makespan);
    p.busy_watts * busy + p.idle_watts * (makespan - busy)
}

pub(crate) fn round9(x: f64) -> f64 {
    let r = (x * 1e9).round() / 1e9;
    if r.is_finite() {
        r
    } else {
        x
    }
}

fn ser_f64<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_f64(round9(*x))
}

fn ser_opt_f64<S: Serializer>(x: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
    match x {
        Some(v) => s.serialize_some(&round9(*v)),
        None => s.serialize_none(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Totals {
    pub arrived: usize,
    pub completed: usize,
    pub missed: usize,
    pub cancelled: usize,
    pub in_system: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MachineReport {
    pub id: String,
    pub machine_type: String,
    #[serde(serialize_with = "ser_f64")]
    pub busy_time: f64,
    #[serde(serialize_with = "ser_f64")]
    pub utilization: f64,
    #[serde(serialize_with = "ser_f64")]
    pub energy_joules: f64,
    pub tasks_executed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskRecord {
    pub id: String,
    #[serde(rename = "type")]
    pub task_type: String,
    #[serde(serialize_with = "ser_f64")]
    pub arrival: f64,
    #[serde(serialize_with = "ser_opt_f64")]
    pub start: Option<f64>,
    #[serde(serialize_with = "ser_opt_f64")]
    pub end: Option<f64>,
    pub machine: Option<String>,
    pub status: TaskStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub config: SimulationConfig,
    pub totals: Totals,
    #[serde(serialize_with = "ser_f64")]
    pub miss_rate: f64,
    #[serde(serialize_with = "ser_f64")]
    pub cancel_rate: f64,
    #[serde(serialize_with = "ser_f64")]
    pub makespan: f64,
    pub per_machine: Vec<MachineReport>,
    pub per_task: Vec<TaskRecord>,
}

impl SimulationReport {
    pub fn total_energy(&self) -> f64 {
        self.per_machine.iter().map(|m| m.energy_joules).sum()
    }

    pub fn task(&self, id: &str) -> Option<&TaskRecord> {
        self.per_task.iter().find(|t| t.id == id)
    }

    pub fn machine(&self, id: &str) -> Option<&MachineReport> {
        self.per_machine.iter().find(|m| m.id == id)
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self, MetricsError> {
        serde_json::from_slice(bytes).map_err(|e| MetricsError::Decode(e.to_string()))
    }
}

fn ratio(n: usize, d: usize) -> f64 {
    if d == 0 {
        0.0
    } else {
        n as f64 / d as f64
    }
}

/// Builds the report from the ledger, the task table and machine list. All
/// real-valued fields are quantized to 9 fractional digits, the precision of
/// the exported formats.
pub fn summary(
    ledger: &Ledger,
    tasks: &[Task],
    machines: &[MachineState],
    config: &SimulationConfig,
) -> SimulationReport {
    let makespan = ledger.makespan();
    let terminal = ledger.completed + ledger.missed + ledger.cancelled;
    let per_machine = machines
        .iter()
        .zip(&ledger.machines)
        .map(|(m, l)| {
            let busy = l.busy_time();
            MachineReport {
                id: m.id.clone(),
                machine_type: m.machine_type.clone(),
                busy_time: round9(busy),
                utilization: round9(if makespan > 0.0 { (busy / makespan).min(1.0) } else { 0.0 }),
                energy_joules: round9(machine_energy(busy, config.power_of(&m.machine_type), makespan)),
                tasks_executed: l.tasks_executed,
            }
        })
        .collect();
    let per_task = tasks
        .iter()
        .map(|t| TaskRecord {
            id: t.id.clone(),
            task_type: t.task_type.clone(),
            arrival: round9(t.arrival),
            start: t.start.map(round9),
            end: t.end.map(round9),
            machine: t.assigned_machine.clone(),
            status: t.status,
        })
        .collect();
    SimulationReport {
        config: config.clone(),
        totals: Totals {
            arrived: ledger.arrived,
            completed: ledger.completed,
            missed: ledger.missed,
            cancelled: ledger.cancelled,
            in_system: ledger.arrived - terminal,
        },
        miss_rate: round9(ratio(ledger.missed, ledger.arrived)),
        cancel_rate: round9(ratio(ledger.cancelled, ledger.arrived)),
        makespan: round9(makespan),
        per_machine,
        per_task,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportFormat {
    Json,
    Csv,
}

impl FromStr for ExportFormat {
    type Err = MetricsError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "json" => Ok(ExportFormat::Json),
            "csv" => Ok(ExportFormat::Csv),
            _ => Err(MetricsError::UnsupportedFormat(s.to_string())),
        }
    }
}

pub const TASK_CSV_HEADER: &str = "id,type,arrival,start,end,machine,status";

fn fmt_num(x: f64) -> String {
    format!("{}", round9(x))
}

pub fn export(report: &SimulationReport, format: ExportFormat) -> Vec<u8> {
    match format {
        ExportFormat::Json => {
            let mut out = serde_json::to_vec_pretty(report).expect("report serializes");
            out.push(b'\n');
            out
        }
        ExportFormat::Csv => {
            let mut out = String::from(TASK_CSV_HEADER);
            out.push('\n');
            for t in &report.per_task {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{},{}",
                    t.id,
                    t.task_type,
                    fmt_num(t.arrival),
                    t.start.map(fmt_num).unwrap_or_default(),
                    t.end.map(fmt_num).unwrap_or_default(),
                    t.machine.as_deref().unwrap_or(""),
                    t.status
                );
            }
            out.into_bytes()
        }
    }
}

/// Format by name; anything other than `json` or `csv` is rejected.
pub fn export_as(report: &SimulationReport, format: &str) -> Result<Vec<u8>, MetricsError> {
    Ok(export(report, format.parse()?))
}
