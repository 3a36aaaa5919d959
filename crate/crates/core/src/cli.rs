//! Command-line front end. The `hetsim` binary is a thin wrapper over [`main`].

use std::fmt::Write as _;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use crate::engine::{EngineError, Simulation};
use crate::metrics::{export, ExportFormat, SimulationReport};
use crate::model::{EetMatrix, MachineSpec, PowerProfile, QueueSize, SimulationConfig, StopCondition};
use crate::scheduler::{PolicyRegistry, SchedulerError};
use crate::service::SessionManager;
use crate::workload::{self, TraceRow, WorkloadSpec};

#[derive(Debug, Parser)]
#[command(name = "hetsim", version, about = "Discrete-event simulator for heterogeneous computing systems")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one simulation and export the report.
    Run(RunArgs),
    /// Run a grid of schedulers x arrival rates on generated workloads.
    Sweep(SweepArgs),
    /// Start the HTTP/WebSocket session service.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct SystemArgs {
    /// Machines as `TYPE[*COUNT][@IDLE_W:BUSY_W]`, comma separated.
    #[arg(long, conflicts_with = "config")]
    pub machines: Option<String>,
    #[arg(long, default_value = "mct", conflicts_with = "config")]
    pub scheduler: String,
    /// Local queue capacity per machine; unbounded when omitted.
    #[arg(long, conflicts_with = "config")]
    pub queue_size: Option<usize>,
    #[arg(long, conflicts_with = "config")]
    pub cancel: bool,
    #[arg(long, default_value_t = 0, conflicts_with = "config")]
    pub seed: u64,
    /// Stop at this simulated time instead of draining the workload.
    #[arg(long, conflicts_with = "config")]
    pub until: Option<f64>,
    /// Full configuration as a JSON file.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub eet: PathBuf,
    #[arg(long, conflicts_with = "generate", required_unless_present = "generate")]
    pub trace: Option<PathBuf>,
    /// Workload spec JSON to generate the trace from.
    #[arg(long)]
    pub generate: Option<PathBuf>,
    #[command(flatten)]
    pub system: SystemArgs,
    /// Output directory for report.json / tasks.csv.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value = "json", value_parser = ["json", "csv", "both"])]
    pub format: String,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub eet: PathBuf,
    #[arg(long)]
    pub generate: PathBuf,
    #[command(flatten)]
    pub system: SystemArgs,
    #[arg(long, value_delimiter = ',', required = true)]
    pub sweep_schedulers: Vec<String>,
    #[arg(long, value_delimiter = ',', required = true)]
    pub sweep_rates: Vec<f64>,
    /// Combined CSV destination; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub addr: SocketAddr,
}

#[derive(Debug)]
pub enum CliError {
    /// Bad flags or configuration. Exit code 2.
    Usage(String),
    /// Inputs parsed but failed validation. Exit code 3.
    Validation(String),
    /// Anything else. Exit code 1.
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Validation(_) => 3,
            CliError::Internal(_) => 1,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Validation(m) | CliError::Internal(m) => m,
        }
    }
}

impl From<EngineError> for CliError {
    fn from(e: EngineError) -> Self {
        match e {
            EngineError::ValidationFailed(issues) => {
                let list: Vec<String> = issues.iter().map(|i| i.to_string()).collect();
                CliError::Validation(format!("validation failed: {}", list.join("; ")))
            }
            EngineError::Scheduler(s @ (SchedulerError::UnknownPolicy(_) | SchedulerError::MissingQueueSize(_))) => {
                CliError::Usage(s.to_string())
            }
            other => CliError::Internal(other.to_string()),
        }
    }
}

fn read(path: &Path) -> Result<Vec<u8>, CliError> {
    std::fs::read(path).map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    std::fs::write(path, bytes).map_err(|e| CliError::Internal(format!("cannot write {}: {e}", path.display())))
}

/// Machines plus per-type power profiles. A single machine of a type is
/// named after the type; several are named `TYPE-0`, `TYPE-1`, ...
pub type MachineList = (Vec<MachineSpec>, Vec<(String, PowerProfile)>);

/// Parses `TYPE[*COUNT][@IDLE:BUSY]` entries.
pub fn parse_machines(spec: &str) -> Result<MachineList, String> {
    let mut machines = Vec::new();
    let mut profiles = Vec::new();
    for entry in spec.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let (head, power) = match entry.split_once('@') {
            Some((h, p)) => (h, Some(p)),
            None => (entry, None),
        };
        let (ty, count) = match head.split_once('*') {
            Some((t, c)) => (t, c.parse::<usize>().map_err(|_| format!("bad machine count in `{entry}`"))?),
            None => (head, 1),
        };
        if ty.is_empty() || count == 0 {
            return Err(format!("bad machine entry `{entry}`"));
        }
        if let Some(p) = power {
            let (idle, busy) = p.split_once(':').ok_or_else(|| format!("power must be IDLE:BUSY in `{entry}`"))?;
            let num = |s: &str| s.parse::<f64>().map_err(|_| format!("bad wattage in `{entry}`"));
            profiles.push((ty.to_string(), PowerProfile { idle_watts: num(idle)?, busy_watts: num(busy)? }));
        }
        for i in 0..count {
            let id = if count == 1 { ty.to_string() } else { format!("{ty}-{i}") };
            machines.push(MachineSpec { id, machine_type: ty.to_string() });
        }
    }
    if machines.is_empty() {
        return Err("no machines given".into());
    }
    Ok((machines, profiles))
}

/// Builds the configuration from either `--config` or the individual flags.
/// Without `--machines`, one machine per EET column is assumed.
pub fn build_config(args: &SystemArgs, eet: &EetMatrix) -> Result<SimulationConfig, CliError> {
    if let Some(path) = &args.config {
        return serde_json::from_slice(&read(path)?)
            .map_err(|e| CliError::Usage(format!("bad config {}: {e}", path.display())));
    }
    let (machines, profiles) = match &args.machines {
        Some(m) => parse_machines(m).map_err(CliError::Usage)?,
        None => (
            eet.machine_types()
                .iter()
                .map(|t| MachineSpec { id: t.clone(), machine_type: t.clone() })
                .collect(),
            Vec::new(),
        ),
    };
    let stop = match args.until {
        Some(h) if h.is_finite() && h >= 0.0 => StopCondition::Horizon(h),
        Some(h) => return Err(CliError::Usage(format!("--until must be >= 0, got {h}"))),
        None => StopCondition::EndOfWorkload,
    };
    Ok(SimulationConfig {
        machines,
        power_profiles: profiles.into_iter().collect(),
        scheduler_policy: args.scheduler.clone(),
        machine_queue_size: args.queue_size.map_or(QueueSize::Unbounded, QueueSize::Bounded),
        cancellation_enabled: args.cancel,
        seed: args.seed,
        stop,
    })
}

fn load_eet(path: &Path) -> Result<EetMatrix, CliError> {
    workload::parse_eet_csv(&read(path)?).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
}

fn load_spec(path: &Path) -> Result<WorkloadSpec, CliError> {
    serde_json::from_slice(&read(path)?).map_err(|e| CliError::Usage(format!("bad workload spec {}: {e}", path.display())))
}

fn generate(spec: &WorkloadSpec, eet: &EetMatrix, seed: u64) -> Result<Vec<TraceRow>, CliError> {
    workload::generate_workload(spec, eet, seed).map_err(|e| CliError::Usage(e.to_string()))
}

fn summary_line(r: &SimulationReport) -> String {
    format!(
        "arrived={} completed={} missed={} cancelled={} miss_rate={} makespan={} energy_j={}",
        r.totals.arrived,
        r.totals.completed,
        r.totals.missed,
        r.totals.cancelled,
        r.miss_rate,
        r.makespan,
        r.total_energy()
    )
}

pub fn run(args: &RunArgs) -> Result<String, CliError> {
    let eet = load_eet(&args.eet)?;
    let config = build_config(&args.system, &eet)?;
    let trace = match (&args.trace, &args.generate) {
        (Some(path), _) => {
            workload::parse_trace_csv(&read(path)?).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?
        }
        (None, Some(spec)) => generate(&load_spec(spec)?, &eet, config.seed)?,
        (None, None) => return Err(CliError::Usage("one of --trace or --generate is required".into())),
    };
    let mut sim = Simulation::new(config, eet, trace, &PolicyRegistry::default())?;
    let report = sim.run_configured()?;
    if let Some(dir) = &args.out {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Internal(format!("cannot create {}: {e}", dir.display())))?;
        if matches!(args.format.as_str(), "json" | "both") {
            write(&dir.join("report.json"), &export(&report, ExportFormat::Json))?;
        }
        if matches!(args.format.as_str(), "csv" | "both") {
            write(&dir.join("tasks.csv"), &export(&report, ExportFormat::Csv))?;
        }
    }
    Ok(summary_line(&report))
}

pub const SWEEP_HEADER: &str = "scheduler,rate,arrived,completed,missed,cancelled,miss_rate,makespan,total_energy_j";

/// Every (scheduler, rate) cell uses the same seed, so cells differ only in
/// the policy and in the arrival rate. Rows come out in grid order regardless
/// of how the cells were scheduled across threads.
pub fn sweep(args: &SweepArgs) -> Result<String, CliError> {
    let eet = Arc::new(load_eet(&args.eet)?);
    let base = build_config(&args.system, &eet)?;
    let spec = load_spec(&args.generate)?;
    let registry = PolicyRegistry::default();
    for &rate in &args.sweep_rates {
        if !(rate.is_finite() && rate > 0.0) {
            return Err(CliError::Usage(format!("sweep rate must be > 0, got {rate}")));
        }
    }
    let cells: Vec<(String, f64)> = args
        .sweep_schedulers
        .iter()
        .flat_map(|s| args.sweep_rates.iter().map(move |&r| (s.clone(), r)))
        .collect();
    let rows = cells
        .par_iter()
        .map(|(scheduler, rate)| {
            let mut spec = spec.clone();
            spec.arrival_process = spec.arrival_process.with_rate(*rate);
            let trace = Arc::new(generate(&spec, &eet, base.seed)?);
            let config = SimulationConfig { scheduler_policy: scheduler.clone(), ..base.clone() };
            let mut sim = Simulation::from_shared(config, eet.clone(), trace, &registry)?;
            let r = sim.run_configured()?;
            Ok(format!(
                "{},{},{},{},{},{},{},{},{}",
                scheduler,
                rate,
                r.totals.arrived,
                r.totals.completed,
                r.totals.missed,
                r.totals.cancelled,
                r.miss_rate,
                r.makespan,
                r.total_energy()
            ))
        })
        .collect::<Result<Vec<String>, CliError>>()?;
    let mut csv = String::from(SWEEP_HEADER);
    csv.push('\n');
    for row in &rows {
        let _ = writeln!(csv, "{row}");
    }
    match &args.out {
        Some(path) => {
            write(path, csv.as_bytes())?;
            Ok(format!("cells={} written={}", rows.len(), path.display()))
        }
        None => Ok(csv.trim_end().to_string()),
    }
}

pub fn serve(args: &ServeArgs) -> Result<String, CliError> {
    let rt = tokio::runtime::Runtime::new().map_err(|e| CliError::Internal(e.to_string()))?;
    rt.block_on(async {
        let listener = tokio::net::TcpListener::bind(args.addr)
            .await
            .map_err(|e| CliError::Internal(format!("cannot bind {}: {e}", args.addr)))?;
        let local = listener.local_addr().map_err(|e| CliError::Internal(e.to_string()))?;
        println!("listening on http://{local}");
        let state = Arc::new(SessionManager::new(PolicyRegistry::default()));
        crate::service::http::serve(listener, state)
            .await
            .map_err(|e| CliError::Internal(e.to_string()))?;
        Ok(String::new())
    })
}

/// Entry point used by the binary. Returns the process exit code.
pub fn main() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let result = match &cli.command {
        Command::Run(a) => run(a),
        Command::Sweep(a) => sweep(a),
        Command::Serve(a) => serve(a),
    };
    match result {
        Ok(line) => {
            if !line.is_empty() {
                println!("{line}");
            }
            0
        }
        Err(e) => {
            eprintln!("error: {}", e.message());
            e.exit_code()
        }
    }
}
