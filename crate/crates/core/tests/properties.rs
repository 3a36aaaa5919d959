mod common;

use std::collections::HashMap;

use common::*;
use hetsim::model::TaskStatus;
use hetsim::workload::TraceRow;
use hetsim::{PolicyRegistry, Simulation};
use proptest::prelude::*;

fn sim(seed: u64, policy: &str, count: usize) -> Simulation {
    let (eet, mut config) = random_system(seed);
    config.scheduler_policy = policy.into();
    let trace = random_trace(&eet, seed, count);
    Simulation::new(config, eet, trace, &PolicyRegistry::default()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    /// Every status change reported by `step` is an edge of the lifecycle
    /// graph, and every task ends in a terminal state.
    #[test]
    fn lifecycle_paths_are_legal(seed in 0u64..1000, p in 0usize..6) {
        let mut s = sim(seed, POLICIES[p], 150);
        let mut status: HashMap<usize, TaskStatus> = HashMap::new();
        let mut bad = None;
        s.run_with(s.config().stop, |_, out| {
            for (t, to) in &out.transitions {
                let from = status.get(&t.0).copied().unwrap_or(TaskStatus::Created);
                if !from.can_transition_to(*to) && bad.is_none() {
                    bad = Some((t.0, from, *to));
                }
                status.insert(t.0, *to);
            }
            Ok(())
        }).unwrap();
        prop_assert_eq!(bad, None);
        prop_assert_eq!(status.len(), 150);
        prop_assert!(s.tasks().iter().all(|t| t.status.is_terminal()));
        for (i, t) in s.tasks().iter().enumerate() {
            prop_assert_eq!(status[&i], t.status);
        }
    }

    /// Machine busy time equals the summed execution spans of the tasks it ran.
    #[test]
    fn busy_time_matches_task_spans(seed in 0u64..1000, p in 0usize..6) {
        let mut s = sim(seed, POLICIES[p], 150);
        let report = s.run_configured().unwrap();
        for m in s.machines() {
            let spans: f64 = s
                .tasks()
                .iter()
                .filter(|t| t.assigned_machine.as_deref() == Some(m.id.as_str()) && t.start.is_some())
                .map(|t| t.end.unwrap() - t.start.unwrap())
                .sum();
            prop_assert!((m.busy_time() - spans).abs() < 1e-9, "{}: {} vs {}", m.id, m.busy_time(), spans);
            let reported = report.machine(&m.id).unwrap().busy_time;
            prop_assert!((reported - spans).abs() < 1e-6);
        }
    }

    /// Scaling every duration and timestamp by 7 scales the schedule and
    /// leaves every assignment and outcome unchanged.
    #[test]
    fn whole_run_scales_with_time_unit(seed in 0u64..1000, p in 0usize..6) {
        let (eet, mut config) = random_system(seed);
        config.scheduler_policy = POLICIES[p].into();
        // integer timestamps keep scaling exact
        let trace: Vec<TraceRow> = random_trace(&eet, seed, 120)
            .into_iter()
            .map(|r| TraceRow { arrival: r.arrival.round(), deadline: r.arrival.round() + (r.deadline - r.arrival).ceil(), ..r })
            .collect();
        let scaled: Vec<TraceRow> = trace
            .iter()
            .map(|r| TraceRow { arrival: r.arrival * 7.0, deadline: r.deadline * 7.0, ..r.clone() })
            .collect();
        let reg = PolicyRegistry::default();
        let a = hetsim::simulate(config.clone(), eet.clone(), trace, &reg).unwrap();
        let b = hetsim::simulate(config, eet.scaled(7.0), scaled, &reg).unwrap();
        prop_assert_eq!(a.totals, b.totals);
        prop_assert_eq!(b.makespan, a.makespan * 7.0);
        for (x, y) in a.per_task.iter().zip(&b.per_task) {
            prop_assert_eq!(&x.id, &y.id);
            prop_assert_eq!(&x.machine, &y.machine);
            prop_assert_eq!(x.status, y.status);
            prop_assert_eq!(x.start.map(|v| v * 7.0), y.start);
            prop_assert_eq!(x.end.map(|v| v * 7.0), y.end);
        }
    }
}
