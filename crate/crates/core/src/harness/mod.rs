//! Closed-loop simulation, latency benchmarking and trace output.

pub mod bench;
pub mod sim;
pub mod trace;

pub use bench::{bench, bench_scenario, nearest_rank, BenchReport, Percentiles, ScenarioBench, CYCLE_P99_BUDGET, QP_P99_BUDGET};
pub use sim::{simulate, CycleRecord, Event, Outcome, SimOptions, SimTrace};
pub use trace::{emit_trace, guardian_supremacy, summary, trace_csv, EmitOptions, TraceFormat, CSV_HEADER};
