//! Deterministic discrete-event simulator for heterogeneous computing
//! systems.
//!
//! Tasks arrive over time into a batch queue, a pluggable scheduling policy
//! maps them onto machines whose speeds come from an Expected Execution Time
//! (EET) matrix, and every task ends completed, missed or cancelled. Runs
//! produce deadline, utilization and energy metrics.

pub mod cli;
pub mod engine;
pub mod metrics;
pub mod model;
pub mod scheduler;
pub mod service;
pub mod workload;

pub use engine::{simulate, EngineError, EventClass, Simulation, StepOutcome};
pub use metrics::{ExportFormat, SimulationReport};
pub use model::{EetMatrix, MachineSpec, PowerProfile, QueueSize, SimulationConfig, StopCondition, TaskStatus};
pub use scheduler::{PolicyDescriptor, PolicyRegistry, SchedulingDecision};
pub use workload::{TraceRow, WorkloadSpec};
