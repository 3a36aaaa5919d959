//! Acceptance checks. Runs without the libtest harness and prints one
//! `PASS`/`FAIL` line per criterion; exits non-zero if any fails.

mod common;

use std::process::Command;
use std::sync::Arc;
use std::time::{Duration, Instant};

use common::*;
use hetsim::metrics::{self, export};
use hetsim::model::{EetMatrix, MachineSpec, QueueSize, SimulationConfig, TaskIdx, TaskStatus};
use hetsim::scheduler::{self, MachineView, PendingTask, SchedulerInput};
use hetsim::service::{http, SessionManager};
use hetsim::workload::{self, ArrivalProcess, TraceRow, WorkloadSpec};
use hetsim::{ExportFormat, PolicyRegistry, SchedulingDecision, Simulation, SimulationReport};
use rand::{Rng, SeedableRng};
use rand_xoshiro::SplitMix64;
use rayon::prelude::*;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

const SEEDS: std::ops::Range<u64> = 0..20;
const SUITE_TASKS: usize = 1000;

fn suite_cells() -> Vec<(u64, &'static str)> {
    SEEDS.flat_map(|s| POLICIES.iter().map(move |p| (s, *p))).collect()
}

fn suite_sim(seed: u64, policy: &str, queue: Option<QueueSize>) -> Simulation {
    let (eet, mut config) = random_system(seed);
    config.scheduler_policy = policy.to_string();
    if let Some(q) = queue {
        config.machine_queue_size = q;
    }
    let trace = random_trace(&eet, seed, SUITE_TASKS);
    Simulation::new(config, eet, trace, &PolicyRegistry::default()).unwrap()
}

fn s1_golden_traces() -> Outcome {
    let t0 = Instant::now();
    for policy in POLICIES {
        let report = hetsim::simulate(s1_config(policy), s1_eet(), s1_trace(), &PolicyRegistry::default())
            .map_err(|e| format!("{policy}: {e}"))?;
        let (golden, makespan) = s1_golden(policy);
        for (id, start, end, machine, status) in golden {
            let t = report.task(id).ok_or(format!("{policy}: {id} missing"))?;
            let got = (t.start, t.end, t.machine.as_deref(), t.status.as_str());
            if got != (Some(start), Some(end), Some(machine), status) {
                return Err(format!("{policy}/{id}: got {got:?}"));
            }
        }
        if report.makespan != makespan {
            return Err(format!("{policy}: makespan {} != {makespan}", report.makespan));
        }
    }
    let elapsed = t0.elapsed();
    if elapsed >= Duration::from_secs(1) {
        return Err(format!("took {elapsed:?}"));
    }
    Ok(format!("6 policies exact, {elapsed:?}"))
}

fn conservation() -> Outcome {
    let steps: usize = suite_cells()
        .par_iter()
        .map(|&(seed, policy)| {
            let mut sim = suite_sim(seed, policy, None);
            let mut steps = 0;
            sim.run_with(sim.config().stop, |s, out| {
                steps += 1;
                let c = out.counters;
                if c.arrived != c.completed + c.missed + c.cancelled + s.in_system() {
                    return Err(hetsim::EngineError::Invariant(format!("step {}: {c:?}", out.event_no)));
                }
                Ok(())
            })
            .map_err(|e| format!("seed {seed} {policy}: {e}"))?;
            let c = sim.counters();
            if c.arrived != SUITE_TASKS || c.arrived != c.completed + c.missed + c.cancelled {
                return Err(format!("seed {seed} {policy}: final {c:?}"));
            }
            Ok(steps)
        })
        .collect::<Result<Vec<_>, String>>()?
        .into_iter()
        .sum();
    Ok(format!("120 runs, {steps} steps checked"))
}

/// The drop rule has two cases. A task dropped while executing ends exactly
/// at its deadline. A task that reaches the head of its local queue after its
/// deadline has passed executes for zero time and ends at that dequeue time,
/// which is later than the deadline; for those the check is end == start.
fn deadline_soundness() -> Outcome {
    let counts = suite_cells()
        .par_iter()
        .map(|&(seed, policy)| {
            let mut sim = suite_sim(seed, policy, None);
            sim.run_configured().map_err(|e| e.to_string())?;
            let (mut completed, mut in_exec, mut late) = (0usize, 0usize, 0usize);
            for t in sim.tasks() {
                let ctx = || format!("seed {seed} {policy} {}", t.id);
                match t.status {
                    TaskStatus::Completed => {
                        if t.end.unwrap() > t.deadline {
                            return Err(format!("{}: completed at {:?} after {}", ctx(), t.end, t.deadline));
                        }
                        completed += 1;
                    }
                    TaskStatus::Missed => {
                        let machine = sim.machines().iter().find(|m| Some(&m.id) == t.assigned_machine.as_ref()).unwrap();
                        let eet = sim.eet().lookup(&t.task_type, &machine.machine_type).unwrap();
                        let (start, end) = (t.start.unwrap(), t.end.unwrap());
                        if start + eet <= t.deadline {
                            return Err(format!("{}: missed but start+eet {} <= {}", ctx(), start + eet, t.deadline));
                        }
                        if start <= t.deadline {
                            if end != t.deadline {
                                return Err(format!("{}: dropped at {end}, deadline {}", ctx(), t.deadline));
                            }
                            in_exec += 1;
                        } else {
                            if end != start {
                                return Err(format!("{}: late dequeue ran {start}..{end}", ctx()));
                            }
                            late += 1;
                        }
                    }
                    _ => {}
                }
            }
            Ok((completed, in_exec, late))
        })
        .collect::<Result<Vec<_>, String>>()?;
    let (c, d, l) = counts.iter().fold((0, 0, 0), |a, b| (a.0 + b.0, a.1 + b.1, a.2 + b.2));
    Ok(format!("{c} completed, {d} dropped at deadline, {l} dequeued after deadline (end = dequeue time)"))
}

fn energy() -> Outcome {
    let report = hetsim::simulate(s1_config("mct"), s1_eet(), s1_trace(), &PolicyRegistry::default()).unwrap();
    let fast = report.machine("fast").unwrap().energy_joules;
    let slow = report.machine("slow").unwrap().energy_joules;
    if (fast - 120.0).abs() > 1e-9 || (slow - 44.0).abs() > 1e-9 {
        return Err(format!("S1/mct fast {fast} slow {slow}"));
    }
    let checked: usize = suite_cells()
        .par_iter()
        .map(|&(seed, policy)| {
            let mut sim = suite_sim(seed, policy, None);
            sim.run_configured().map_err(|e| e.to_string())?;
            let profiles: Vec<_> = sim.machines().iter().map(|m| sim.config().power_of(&m.machine_type)).collect();
            let makespan = sim.ledger().makespan();
            let joules = metrics::energy(sim.ledger(), &profiles, makespan);
            for (i, (e, p)) in joules.iter().zip(&profiles).enumerate() {
                let (lo, hi) = (p.idle_watts * makespan, p.busy_watts * makespan);
                let slack = 1e-9 * hi.max(1.0);
                if *e < lo - slack || *e > hi + slack {
                    return Err(format!("seed {seed} {policy} machine {i}: {e} outside [{lo}, {hi}]"));
                }
            }
            Ok(joules.len())
        })
        .collect::<Result<Vec<_>, String>>()?
        .into_iter()
        .sum();
    Ok(format!("S1 fast=120 slow=44; {checked} machine bounds hold"))
}

fn determinism() -> Outcome {
    let cells = suite_cells();
    cells.par_iter().try_for_each(|&(seed, policy)| {
        let a = export(&suite_sim(seed, policy, None).run_configured().unwrap(), ExportFormat::Json);
        let b = export(&suite_sim(seed, policy, None).run_configured().unwrap(), ExportFormat::Json);
        if a != b {
            return Err(format!("seed {seed} {policy}: reports differ"));
        }
        Ok(())
    })?;
    Ok(format!("{} run pairs byte-identical", cells.len()))
}

struct RandomSnapshot {
    eet: EetMatrix,
    now: f64,
    ids: Vec<String>,
    rows: Vec<usize>,
    arrivals: Vec<f64>,
    deadlines: Vec<f64>,
    machines: Vec<MachineView>,
    queue: QueueSize,
}

fn random_snapshot(seed: u64) -> RandomSnapshot {
    let mut rng = SplitMix64::seed_from_u64(seed);
    let (types, cols) = (rng.random_range(1..=4usize), rng.random_range(2..=5usize));
    let rows = (0..types).map(|_| (0..cols).map(|_| rng.random_range(1..=15) as f64).collect()).collect();
    let eet = EetMatrix::new(
        (0..types).map(|i| format!("T{i}")).collect(),
        (0..cols).map(|i| format!("M{i}")).collect(),
        rows,
    )
    .unwrap();
    let now = rng.random_range(0..50) as f64;
    let n = rng.random_range(1..=12usize);
    let arrivals: Vec<f64> = (0..n).map(|_| rng.random_range(0..=now as i64) as f64).collect();
    let deadlines = arrivals.iter().map(|a| a + rng.random_range(1..60) as f64).collect();
    let queue = QueueSize::Bounded(rng.random_range(1..=3));
    let machines = (0..cols)
        .map(|c| {
            let queue_len = rng.random_range(0..=2usize);
            let idle = queue_len == 0 && rng.random_bool(0.5);
            MachineView {
                eet_col: c,
                release: if idle { now } else { now + rng.random_range(1..20) as f64 },
                idle,
                queue_len,
                queued_eet: (0..queue_len).map(|_| rng.random_range(1..=15) as f64).sum(),
            }
        })
        .collect();
    RandomSnapshot {
        eet,
        now,
        ids: (0..n).map(|i| format!("t{i}")).collect(),
        rows: (0..n).map(|_| rng.random_range(0..types)).collect(),
        arrivals,
        deadlines,
        machines,
        queue,
    }
}

fn decide(s: &RandomSnapshot, policy: &str, k: f64) -> Vec<SchedulingDecision> {
    let eet = s.eet.scaled(k);
    let batch = (0..s.ids.len())
        .map(|i| PendingTask {
            idx: TaskIdx(i),
            id: &s.ids[i],
            eet_row: s.rows[i],
            arrival: s.arrivals[i] * k,
            deadline: s.deadlines[i] * k,
        })
        .collect();
    let machines = s
        .machines
        .iter()
        .map(|m| MachineView { release: m.release * k, queued_eet: m.queued_eet * k, ..*m })
        .collect();
    let input = SchedulerInput {
        now: s.now * k,
        batch,
        machines,
        eet: &eet,
        queue_size: s.queue,
        cancellation_enabled: false,
    };
    let registry = PolicyRegistry::default();
    let (descriptor, mut p) = registry.instantiate(policy).unwrap();
    scheduler::invoke(&descriptor, p.as_mut(), &input).unwrap()
}

fn scale_invariance() -> Outcome {
    let mut maps = 0;
    for seed in 0..100 {
        let snap = random_snapshot(seed);
        for policy in ["met", "mct", "min_min", "max_min"] {
            let base = decide(&snap, policy, 1.0);
            let scaled = decide(&snap, policy, 7.0);
            let pick = |d: &[SchedulingDecision]| {
                d.iter().filter(|d| matches!(d, SchedulingDecision::Map { .. })).copied().collect::<Vec<_>>()
            };
            if pick(&base) != pick(&scaled) {
                return Err(format!("snapshot {seed} {policy}: {base:?} vs {scaled:?}"));
            }
            maps += pick(&base).len();
        }
    }
    Ok(format!("100 snapshots x 4 policies, {maps} map decisions unchanged"))
}

fn capacity() -> Outcome {
    let cells: Vec<_> = SEEDS.flat_map(|s| ["min_min", "max_min"].map(move |p| (s, p))).collect();
    let steps: usize = cells
        .par_iter()
        .map(|&(seed, policy)| {
            let mut sim = suite_sim(seed, policy, Some(QueueSize::Bounded(1)));
            let mut steps = 0;
            sim.run_with(sim.config().stop, |s, out| {
                steps += 1;
                match s.machines().iter().find(|m| m.local_queue.len() > 1) {
                    Some(m) => Err(hetsim::EngineError::Invariant(format!(
                        "step {}: `{}` holds {}",
                        out.event_no,
                        m.id,
                        m.local_queue.len()
                    ))),
                    None => Ok(()),
                }
            })
            .map_err(|e| format!("seed {seed} {policy}: {e}"))?;
            Ok(steps)
        })
        .collect::<Result<Vec<usize>, String>>()?
        .into_iter()
        .sum();
    Ok(format!("{} runs, {steps} steps, max local queue 1", cells.len()))
}

fn throughput() -> Outcome {
    let (eet, mut config) = random_system(7);
    config.machines = (0..8)
        .map(|i| MachineSpec { id: format!("m{i}"), machine_type: format!("M{}", i % 4) })
        .collect();
    config.scheduler_policy = "mct".into();
    config.machine_queue_size = QueueSize::Unbounded;
    let spec = WorkloadSpec {
        count: 100_000,
        arrival_process: ArrivalProcess::Poisson { rate: 1.0 },
        type_mix: [("T0", 0.4), ("T1", 0.3), ("T2", 0.3)].into_iter().map(|(k, v)| (k.to_string(), v)).collect(),
        deadline_factor: 4.0,
    };
    let trace = workload::generate_workload(&spec, &eet, 7).unwrap();
    let t0 = Instant::now();
    let mut sim = Simulation::new(config, eet, trace, &PolicyRegistry::default()).unwrap();
    let report = sim.run_configured().map_err(|e| e.to_string())?;
    let elapsed = t0.elapsed();
    let t = &report.totals;
    if t.completed + t.missed + t.cancelled != 100_000 {
        return Err(format!("unfinished tasks: {t:?}"));
    }
    if elapsed >= Duration::from_secs(10) {
        return Err(format!("took {elapsed:?}"));
    }
    Ok(format!("100000 tasks, {} events in {elapsed:?}", sim.events_processed()))
}

fn write_inputs(dir: &std::path::Path, config: &SimulationConfig, eet: &EetMatrix, trace: &[TraceRow]) {
    std::fs::write(dir.join("config.json"), serde_json::to_vec_pretty(config).unwrap()).unwrap();
    std::fs::write(dir.join("eet.csv"), workload::eet_to_csv(eet)).unwrap();
    std::fs::write(dir.join("trace.csv"), workload::trace_to_csv(trace)).unwrap();
}

fn cli_report(dir: &std::path::Path) -> Result<Vec<u8>, String> {
    let out = dir.join("out");
    let o = Command::new(env!("CARGO_BIN_EXE_hetsim"))
        .arg("run")
        .arg("--eet")
        .arg(dir.join("eet.csv"))
        .arg("--trace")
        .arg(dir.join("trace.csv"))
        .arg("--config")
        .arg(dir.join("config.json"))
        .arg("--out")
        .arg(&out)
        .output()
        .map_err(|e| e.to_string())?;
    if !o.status.success() {
        return Err(String::from_utf8_lossy(&o.stderr).into_owned());
    }
    std::fs::read(out.join("report.json")).map_err(|e| e.to_string())
}

async fn service_report(base: &str, dir: &std::path::Path) -> Result<Vec<u8>, String> {
    use reqwest::multipart::{Form, Part};
    let c = reqwest::Client::new();
    let err = |e: reqwest::Error| e.to_string();
    let config = std::fs::read(dir.join("config.json")).unwrap();
    let r = c.post(format!("{base}/sessions")).body(config).send().await.map_err(err)?;
    let id = r.json::<serde_json::Value>().await.map_err(err)?["id"].as_str().ok_or("no id")?.to_string();
    let form = Form::new()
        .part("eet", Part::bytes(std::fs::read(dir.join("eet.csv")).unwrap()).file_name("eet.csv"))
        .part("trace", Part::bytes(std::fs::read(dir.join("trace.csv")).unwrap()).file_name("trace.csv"));
    let r = c.put(format!("{base}/sessions/{id}/workload")).multipart(form).send().await.map_err(err)?;
    if !r.status().is_success() {
        return Err(r.text().await.unwrap_or_default());
    }
    let r = c
        .post(format!("{base}/sessions/{id}/control"))
        .json(&serde_json::json!({"action": "run", "speed": "max"}))
        .send()
        .await
        .map_err(err)?;
    if !r.status().is_success() {
        return Err(r.text().await.unwrap_or_default());
    }
    let r = c.get(format!("{base}/sessions/{id}/report")).send().await.map_err(err)?;
    Ok(r.bytes().await.map_err(err)?.to_vec())
}

fn cli_service_equivalence() -> Outcome {
    let mut cases = vec![("S1/mct".to_string(), s1_config("mct"), s1_eet(), s1_trace())];
    for (seed, policy) in [(3, "edf"), (4, "min_min"), (5, "fcfs_rr")] {
        let (eet, mut config) = random_system(seed);
        config.scheduler_policy = policy.into();
        let trace = random_trace(&eet, seed, 300);
        cases.push((format!("seed {seed}/{policy}"), config, eet, trace));
    }
    let rt = tokio::runtime::Runtime::new().unwrap();
    let base = rt.block_on(async {
        let state = Arc::new(SessionManager::new(PolicyRegistry::default()));
        let addr = http::spawn("127.0.0.1:0".parse().unwrap(), state).await.unwrap();
        format!("http://{addr}")
    });
    for (name, config, eet, trace) in &cases {
        let dir = tempfile::tempdir().unwrap();
        write_inputs(dir.path(), config, eet, trace);
        let cli = cli_report(dir.path()).map_err(|e| format!("{name} cli: {e}"))?;
        let svc = rt.block_on(service_report(&base, dir.path())).map_err(|e| format!("{name} service: {e}"))?;
        if cli != svc {
            return Err(format!("{name}: reports differ ({} vs {} bytes)", cli.len(), svc.len()));
        }
        SimulationReport::from_json(&cli).map_err(|e| format!("{name}: {e}"))?;
    }
    Ok(format!("{} workloads byte-identical", cases.len()))
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("S1 golden traces", s1_golden_traces),
        ("conservation", conservation),
        ("deadline soundness", deadline_soundness),
        ("energy closed form", energy),
        ("determinism", determinism),
        ("argmin scale-invariance", scale_invariance),
        ("capacity", capacity),
        ("throughput", throughput),
        ("CLI/service equivalence", cli_service_equivalence),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let result = std::panic::catch_unwind(check).unwrap_or_else(|_| Err("panicked".into()));
        match result {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name}: {detail}");
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
