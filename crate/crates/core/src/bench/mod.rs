//! Measurement harness: flop counting, calibrated timing, and the benchmark
//! runner behind the CLI.

pub mod counting;
pub mod report;
pub mod runner;
pub mod timer;
pub mod verify;

pub use counting::{
    read_flop_counts, reset_flop_counts, take_flop_counts, CountingScalar, FlopCounts,
};
pub use report::{
    merge_flop_report, BenchReport, Granularity, MeasurementConfig, Metrics, Mode, PerCell,
    PerStage, StageMetric, StrategyDump, WallTimeNs,
};
pub use runner::{
    build_plan, cells_for_min_bytes, explain_plan, parse_plan_choice, run_benchmark,
};
pub use timer::{calibrate_timer, median_u64, CalibratedTimer};
pub use verify::{run_verification, VerifyCheck};
