//! EET matrix and arrival-trace ingestion, validation against a
//! configuration, and seeded synthetic workload generation.
//!
//! CSV dialect: comma separated, header on the first line, no quoting, LF or
//! CRLF line endings. Identifiers are restricted to `[A-Za-z0-9_-]`.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_xoshiro::SplitMix64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{EetMatrix, ModelError, QueueSize, SimTime, SimulationConfig};

pub const TRACE_HEADER: [&str; 4] = ["task_id", "task_type", "arrival", "deadline"];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum WorkloadError {
    #[error("malformed CSV at line {line}: {reason}")]
    MalformedCsv { line: usize, reason: String },
    #[error("non-positive EET cell at line {line}, column `{column}`")]
    NonPositiveCell { line: usize, column: String },
    #[error("duplicate {kind} `{id}`")]
    DuplicateRowOrColumn { kind: &'static str, id: String },
    #[error("ragged row at line {line}: {got} cells, expected {expected}")]
    RaggedRow { line: usize, got: usize, expected: usize },
    #[error("duplicate task id `{0}`")]
    DuplicateTaskId(String),
    #[error("task `{task_id}` has deadline {deadline} not after arrival {arrival}")]
    DeadlineNotAfterArrival {
        task_id: String,
        arrival: SimTime,
        deadline: SimTime,
    },
    #[error("task `{task_id}` has negative arrival {arrival}")]
    NegativeArrival { task_id: String, arrival: SimTime },
    #[error("invalid workload spec: {0}")]
    InvalidSpec(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub task_id: String,
    pub task_type: String,
    pub arrival: SimTime,
    pub deadline: SimTime,
}

impl TraceRow {
    pub fn new(task_id: &str, task_type: &str, arrival: SimTime, deadline: SimTime) -> Self {
        TraceRow {
            task_id: task_id.to_string(),
            task_type: task_type.to_string(),
            arrival,
            deadline,
        }
    }
}

fn is_valid_id(s: &str) -> bool {
    !s.is_empty()
        && s
            .bytes()
            .all(|b| b.is_ascii_alphanumeric() || b == b'_' || b == b'-')
}

fn read_records(bytes: &[u8]) -> Result<Vec<(usize, Vec<String>)>, WorkloadError> {
    let text = std::str::from_utf8(bytes).map_err(|e| WorkloadError::MalformedCsv {
        line: 0,
        reason: format!("not UTF-8: {e}"),
    })?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .quoting(false)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut out = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| WorkloadError::MalformedCsv {
            line: e.position().map(|p| p.line() as usize).unwrap_or(0),
            reason: e.to_string(),
        })?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        if rec.len() == 1 && rec[0].is_empty() {
            continue;
        }
        out.push((line, rec.iter().map(str::to_string).collect()));
    }
    Ok(out)
}

fn parse_number(field: &str, line: usize, what: &str) -> Result<f64, WorkloadError> {
    field
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| WorkloadError::MalformedCsv {
            line,
            reason: format!("{what} `{field}` is not a decimal number"),
        })
}

fn check_id(id: &str, line: usize) -> Result<(), WorkloadError> {
    if is_valid_id(id) {
        Ok(())
    } else {
        Err(WorkloadError::MalformedCsv {
            line,
            reason: format!("identifier `{id}` must match [A-Za-z0-9_-]+"),
        })
    }
}

/// Parses an EET matrix: header `task_type,<machine_type>...`, then one row per
/// task type.
pub fn parse_eet_csv(bytes: &[u8]) -> Result<EetMatrix, WorkloadError> {
    let records = read_records(bytes)?;
    let mut iter = records.into_iter();
    let (hline, header) = iter.next().ok_or(WorkloadError::MalformedCsv {
        line: 1,
        reason: "missing header".into(),
    })?;
    if header.len() < 2 {
        return Err(WorkloadError::MalformedCsv {
            line: hline,
            reason: "header needs at least one machine type column".into(),
        });
    }
    let machine_types: Vec<String> = header[1..].to_vec();
    let mut seen = HashSet::new();
    for m in &machine_types {
        check_id(m, hline)?;
        if !seen.insert(m.as_str()) {
            return Err(WorkloadError::DuplicateRowOrColumn {
                kind: "machine type column",
                id: m.clone(),
            });
        }
    }

    let mut task_types = Vec::new();
    let mut rows = Vec::new();
    let mut seen_rows = HashSet::new();
    for (line, rec) in iter {
        if rec.len() != header.len() {
            return Err(WorkloadError::RaggedRow {
                line,
                got: rec.len(),
                expected: header.len(),
            });
        }
        let name = rec[0].clone();
        check_id(&name, line)?;
        if !seen_rows.insert(name.clone()) {
            return Err(WorkloadError::DuplicateRowOrColumn {
                kind: "task type row",
                id: name,
            });
        }
        let mut row = Vec::with_capacity(machine_types.len());
        for (col, field) in rec[1..].iter().enumerate() {
            let v = parse_number(field, line, "EET cell")?;
            if v <= 0.0 {
                return Err(WorkloadError::NonPositiveCell {
                    line,
                    column: machine_types[col].clone(),
                });
            }
            row.push(v);
        }
        task_types.push(name);
        rows.push(row);
    }
    EetMatrix::new(task_types, machine_types, rows).map_err(|e| match e {
        ModelError::Duplicate { kind, id } => WorkloadError::DuplicateRowOrColumn { kind, id },
        other => WorkloadError::MalformedCsv {
            line: 0,
            reason: other.to_string(),
        },
    })
}

/// Parses an arrival trace with header `task_id,task_type,arrival,deadline`.
/// Rows come back sorted by `(arrival, task_id)`.
pub fn parse_trace_csv(bytes: &[u8]) -> Result<Vec<TraceRow>, WorkloadError> {
    let records = read_records(bytes)?;
    let mut iter = records.into_iter();
    let (hline, header) = iter.next().ok_or(WorkloadError::MalformedCsv {
        line: 1,
        reason: "missing header".into(),
    })?;
    if header != TRACE_HEADER {
        return Err(WorkloadError::MalformedCsv {
            line: hline,
            reason: format!("expected header `{}`", TRACE_HEADER.join(",")),
        });
    }
    let mut ids = HashSet::new();
    let mut rows = Vec::new();
    for (line, rec) in iter {
        if rec.len() != TRACE_HEADER.len() {
            return Err(WorkloadError::MalformedCsv {
                line,
                reason: format!("expected {} fields, got {}", TRACE_HEADER.len(), rec.len()),
            });
        }
        check_id(&rec[0], line)?;
        check_id(&rec[1], line)?;
        let arrival = parse_number(&rec[2], line, "arrival")?;
        let deadline = parse_number(&rec[3], line, "deadline")?;
        let row = TraceRow::new(&rec[0], &rec[1], arrival, deadline);
        if arrival < 0.0 {
            return Err(WorkloadError::NegativeArrival {
                task_id: row.task_id,
                arrival,
            });
        }
        if deadline <= arrival {
            return Err(WorkloadError::DeadlineNotAfterArrival {
                task_id: row.task_id,
                arrival,
                deadline,
            });
        }
        if !ids.insert(row.task_id.clone()) {
            return Err(WorkloadError::DuplicateTaskId(row.task_id));
        }
        rows.push(row);
    }
    sort_trace(&mut rows);
    Ok(rows)
}

pub fn sort_trace(rows: &mut [TraceRow]) {
    rows.sort_by(|a, b| {
        a.arrival
            .total_cmp(&b.arrival)
            .then_with(|| a.task_id.cmp(&b.task_id))
    });
}

pub fn eet_to_csv(matrix: &EetMatrix) -> String {
    let mut out = String::from("task_type");
    for m in matrix.machine_types() {
        out.push(',');
        out.push_str(m);
    }
    out.push('\n');
    for (r, t) in matrix.task_types().iter().enumerate() {
        out.push_str(t);
        for v in matrix.row(r) {
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    }
    out
}

pub fn trace_to_csv(rows: &[TraceRow]) -> String {
    let mut out = TRACE_HEADER.join(",");
    out.push('\n');
    for r in rows {
        let _ = writeln!(out, "{},{},{},{}", r.task_id, r.task_type, r.arrival, r.deadline);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ValidationIssue {
    UnknownTaskType { task_type: String, row: usize },
    UnknownMachineType { machine_type: String, machine: String },
    NoMachines,
    DuplicateMachineId { machine: String },
    ZeroQueueSize,
    InvalidPowerProfile { machine_type: String },
    DuplicateTaskId { task_id: String },
    DeadlineNotAfterArrival { task_id: String },
}

impl std::fmt::Display for ValidationIssue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ValidationIssue::UnknownTaskType { task_type, row } => {
                write!(f, "unknown task type `{task_type}` in trace row {row}")
            }
            ValidationIssue::UnknownMachineType { machine_type, machine } => {
                write!(f, "machine `{machine}` references unknown machine type `{machine_type}`")
            }
            ValidationIssue::NoMachines => f.write_str("configuration has no machines"),
            ValidationIssue::DuplicateMachineId { machine } => write!(f, "duplicate machine id `{machine}`"),
            ValidationIssue::ZeroQueueSize => f.write_str("machine_queue_size must be at least 1"),
            ValidationIssue::InvalidPowerProfile { machine_type } => write!(
                f,
                "power profile of `{machine_type}` must satisfy busy_watts >= idle_watts >= 0"
            ),
            ValidationIssue::DuplicateTaskId { task_id } => write!(f, "duplicate task id `{task_id}`"),
            ValidationIssue::DeadlineNotAfterArrival { task_id } => {
                write!(f, "task `{task_id}` has deadline not after arrival")
            }
        }
    }
}

/// Checks a trace and configuration against an EET matrix. An empty list
/// means valid. Rows are numbered from 1 in trace order.
pub fn validate(trace: &[TraceRow], eet: &EetMatrix, config: &SimulationConfig) -> Vec<ValidationIssue> {
    let mut issues = Vec::new();
    if config.machines.is_empty() {
        issues.push(ValidationIssue::NoMachines);
    }
    if config.machine_queue_size == QueueSize::Bounded(0) {
        issues.push(ValidationIssue::ZeroQueueSize);
    }
    let mut machine_ids = HashSet::new();
    for m in &config.machines {
        if !machine_ids.insert(m.id.as_str()) {
            issues.push(ValidationIssue::DuplicateMachineId { machine: m.id.clone() });
        }
        if eet.col_of(&m.machine_type).is_none() {
            issues.push(ValidationIssue::UnknownMachineType {
                machine_type: m.machine_type.clone(),
                machine: m.id.clone(),
            });
        }
    }
    for (ty, p) in &config.power_profiles {
        if !p.is_valid() {
            issues.push(ValidationIssue::InvalidPowerProfile { machine_type: ty.clone() });
        }
    }
    let mut task_ids = HashSet::new();
    for (i, row) in trace.iter().enumerate() {
        if eet.row_of(&row.task_type).is_none() {
            issues.push(ValidationIssue::UnknownTaskType {
                task_type: row.task_type.clone(),
                row: i + 1,
            });
        }
        if !task_ids.insert(row.task_id.as_str()) {
            issues.push(ValidationIssue::DuplicateTaskId { task_id: row.task_id.clone() });
        }
        if !(row.deadline > row.arrival) {
            issues.push(ValidationIssue::DeadlineNotAfterArrival { task_id: row.task_id.clone() });
        }
    }
    issues
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArrivalProcess {
    /// Exponential inter-arrival times with `rate` tasks per second.
    Poisson { rate: f64 },
    /// Inter-arrival times uniform on `[0, 2 * interval)`, mean `interval`.
    Uniform { interval: f64 },
}

impl ArrivalProcess {
    /// Same process family re-targeted to `rate` tasks per second.
    pub fn with_rate(self, rate: f64) -> ArrivalProcess {
        match self {
            ArrivalProcess::Poisson { .. } => ArrivalProcess::Poisson { rate },
            ArrivalProcess::Uniform { .. } => ArrivalProcess::Uniform { interval: 1.0 / rate },
        }
    }

    /// Inter-arrival time by inversion of a uniform draw `u` in `[0, 1)`.
    fn inter_arrival(self, u: f64) -> f64 {
        match self {
            ArrivalProcess::Poisson { rate } => -(1.0 - u).ln() / rate,
            ArrivalProcess::Uniform { interval } => u * 2.0 * interval,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkloadSpec {
    pub count: usize,
    pub arrival_process: ArrivalProcess,
    pub type_mix: BTreeMap<String, f64>,
    pub deadline_factor: f64,
}

impl WorkloadSpec {
    fn check(&self, eet: &EetMatrix) -> Result<(), WorkloadError> {
        let bad = |m: String| Err(WorkloadError::InvalidSpec(m));
        match self.arrival_process {
            ArrivalProcess::Poisson { rate } if !(rate.is_finite() && rate > 0.0) => {
                return bad(format!("poisson rate must be > 0, got {rate}"))
            }
            ArrivalProcess::Uniform { interval } if !(interval.is_finite() && interval > 0.0) => {
                return bad(format!("uniform interval must be > 0, got {interval}"))
            }
            _ => {}
        }
        if !(self.deadline_factor.is_finite() && self.deadline_factor > 0.0) {
            return bad(format!("deadline_factor must be > 0, got {}", self.deadline_factor));
        }
        let mut sum = 0.0;
        for (ty, &p) in &self.type_mix {
            if eet.row_of(ty).is_none() {
                return bad(format!("type_mix names unknown task type `{ty}`"));
            }
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("probability for `{ty}` outside [0, 1]: {p}"));
            }
            sum += p;
        }
        if (sum - 1.0).abs() > 1e-9 {
            return bad(format!("type_mix probabilities sum to {sum}, expected 1"));
        }
        Ok(())
    }
}

/// Draws a trace of exactly `spec.count` tasks. Identical `(spec, eet, seed)`
/// always give identical traces.
///
/// Each task consumes two uniforms from one SplitMix64 stream: the first is
/// inverted into an inter-arrival time, the second picks the task type. The
/// type draws therefore never depend on the arrival rate, and a higher rate
/// yields pointwise earlier arrivals.
pub fn generate_workload(spec: &WorkloadSpec, eet: &EetMatrix, seed: u64) -> Result<Vec<TraceRow>, WorkloadError> {
    spec.check(eet)?;
    if spec.count == 0 {
        return Ok(Vec::new());
    }
    // Cumulative distribution over EET rows in matrix order.
    let mut cdf: Vec<(usize, f64)> = Vec::new();
    let mut acc = 0.0;
    for (row, ty) in eet.task_types().iter().enumerate() {
        if let Some(&p) = spec.type_mix.get(ty) {
            if p > 0.0 {
                acc += p;
                cdf.push((row, acc));
            }
        }
    }
    let width = spec.count.to_string().len();
    let mut rng = SplitMix64::seed_from_u64(seed);
    let mut now = 0.0;
    let mut rows = Vec::with_capacity(spec.count);
    for i in 0..spec.count {
        let u_arrival: f64 = rng.random();
        let u_type: f64 = rng.random::<f64>() * acc;
        now += spec.arrival_process.inter_arrival(u_arrival);
        let row = cdf
            .iter()
            .find(|(_, c)| u_type < *c)
            .or(cdf.last())
            .map(|(r, _)| *r)
            .expect("type_mix has positive mass");
        let deadline = now + spec.deadline_factor * eet.row_mean(row);
        rows.push(TraceRow {
            task_id: format!("t{:0width$}", i + 1, width = width),
            task_type: eet.task_types()[row].clone(),
            arrival: now,
            deadline,
        });
    }
    sort_trace(&mut rows);
    Ok(rows)
}
