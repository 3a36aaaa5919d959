#![allow(dead_code)]

use std::collections::BTreeMap;

use hetsim::model::{MachineSpec, PowerProfile, QueueSize, SimulationConfig, StopCondition};
use hetsim::workload::{self, ArrivalProcess, TraceRow, WorkloadSpec};
use hetsim::EetMatrix;
use rand::{Rng, SeedableRng};
use rand_xoshiro::SplitMix64;

pub const S1_EET: &str = "task_type,fast,slow\nA,2,4\nB,4,10\n";
pub const S1_TRACE: &str = "task_id,task_type,arrival,deadline\nt1,A,0,10\nt2,B,0,12\nt3,A,1,6\n";

pub const POLICIES: [&str; 6] = ["fcfs_rr", "met", "mct", "edf", "min_min", "max_min"];

pub fn s1_eet() -> EetMatrix {
    workload::parse_eet_csv(S1_EET.as_bytes()).unwrap()
}

pub fn s1_trace() -> Vec<TraceRow> {
    workload::parse_trace_csv(S1_TRACE.as_bytes()).unwrap()
}

pub fn s1_config(policy: &str) -> SimulationConfig {
    let mut power = BTreeMap::new();
    power.insert("fast".to_string(), PowerProfile { idle_watts: 5.0, busy_watts: 20.0 });
    power.insert("slow".to_string(), PowerProfile { idle_watts: 2.0, busy_watts: 10.0 });
    SimulationConfig {
        machines: vec![
            MachineSpec { id: "fast".into(), machine_type: "fast".into() },
            MachineSpec { id: "slow".into(), machine_type: "slow".into() },
        ],
        power_profiles: power,
        scheduler_policy: policy.to_string(),
        machine_queue_size: QueueSize::Bounded(2),
        cancellation_enabled: false,
        seed: 0,
        stop: StopCondition::EndOfWorkload,
    }
}

/// Per-task golden row: (id, start, end, machine, status).
pub type Golden = [(&'static str, f64, f64, &'static str, &'static str); 3];

/// Hand-traced S1 outcomes, one table per built-in policy, plus makespan.
pub fn s1_golden(policy: &str) -> (Golden, f64) {
    match policy {
        "mct" | "edf" | "min_min" => (
            [
                ("t1", 0.0, 2.0, "fast", "completed"),
                ("t2", 2.0, 6.0, "fast", "completed"),
                ("t3", 1.0, 5.0, "slow", "completed"),
            ],
            6.0,
        ),
        "fcfs_rr" => (
            [
                ("t1", 0.0, 2.0, "fast", "completed"),
                ("t2", 0.0, 10.0, "slow", "completed"),
                ("t3", 2.0, 4.0, "fast", "completed"),
            ],
            10.0,
        ),
        "met" => (
            [
                ("t1", 0.0, 2.0, "fast", "completed"),
                ("t2", 2.0, 6.0, "fast", "completed"),
                ("t3", 6.0, 6.0, "fast", "missed"),
            ],
            6.0,
        ),
        "max_min" => (
            [
                ("t1", 0.0, 4.0, "slow", "completed"),
                ("t2", 0.0, 4.0, "fast", "completed"),
                ("t3", 4.0, 6.0, "fast", "completed"),
            ],
            6.0,
        ),
        other => panic!("no golden table for {other}"),
    }
}

/// Random heterogeneous system: 3 task types, 4 machine types with one
/// machine each, integer-valued EET cells in [1, 12].
pub fn random_system(seed: u64) -> (EetMatrix, SimulationConfig) {
    let mut rng = SplitMix64::seed_from_u64(seed ^ 0x5eed_0000_0000);
    let task_types: Vec<String> = (0..3).map(|i| format!("T{i}")).collect();
    let machine_types: Vec<String> = (0..4).map(|i| format!("M{i}")).collect();
    let rows = (0..3)
        .map(|_| (0..4).map(|_| rng.random_range(1..=12) as f64).collect())
        .collect();
    let eet = EetMatrix::new(task_types, machine_types.clone(), rows).unwrap();
    let mut power = BTreeMap::new();
    for (i, m) in machine_types.iter().enumerate() {
        power.insert(
            m.clone(),
            PowerProfile { idle_watts: 1.0 + i as f64, busy_watts: 10.0 + 5.0 * i as f64 },
        );
    }
    let config = SimulationConfig {
        machines: machine_types
            .iter()
            .map(|m| MachineSpec { id: format!("{m}-0"), machine_type: m.clone() })
            .collect(),
        power_profiles: power,
        scheduler_policy: "mct".into(),
        machine_queue_size: QueueSize::Bounded(2),
        cancellation_enabled: seed % 2 == 1,
        seed,
        stop: StopCondition::EndOfWorkload,
    };
    (eet, config)
}

/// 1,000-task Poisson trace at a rate that oversubscribes the random system.
pub fn random_trace(eet: &EetMatrix, seed: u64, count: usize) -> Vec<TraceRow> {
    let spec = WorkloadSpec {
        count,
        arrival_process: ArrivalProcess::Poisson { rate: 0.9 },
        type_mix: eet
            .task_types()
            .iter()
            .map(|t| (t.clone(), 1.0 / eet.task_types().len() as f64))
            .collect(),
        deadline_factor: 3.0,
    };
    let mut spec = spec;
    // keep the sum exact
    let last = eet.task_types().last().unwrap().clone();
    let others: f64 = spec.type_mix.iter().filter(|(k, _)| **k != last).map(|(_, v)| v).sum();
    spec.type_mix.insert(last, 1.0 - others);
    workload::generate_workload(&spec, eet, seed).unwrap()
}
