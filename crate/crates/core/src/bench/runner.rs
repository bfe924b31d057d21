//! Benchmark execution: builds the operator plan a configuration asks
//! for, drives repeated applications over a seeded random input, and
//! assembles the report.
//!
//! Flop counting and timing never share a run. Counting swaps in the
//! instrumented scalar type, whose bookkeeping would poison any timing;
//! timing runs plain `f64` with the counters untouched. A rate (`gflops`)
//! therefore only exists after pairing two runs of the identical
//! configuration, one per mode — see
//! [`merge_flop_report`](super::report::merge_flop_report).
//!
//! Similarly, `stage` and `cell` granularity wrap every pipeline phase in
//! timer probes. That overhead inflates the end-to-end total, so those
//! reports carry only the breakdown and never claim an operator-level
//! wall time. All measurements are single-threaded.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::counting::{reset_flop_counts, take_flop_counts, CountingScalar};
use super::report::{
    BenchReport, Granularity, MeasurementConfig, Metrics, Mode, PerCell, PerStage, StrategyDump,
    WallTimeNs,
};
use super::timer::{calibrate_timer, median_u64};
use crate::dg::assemble::{
    apply_operator, plan_operator, OperatorPlan, PlanChoice, StageTallies,
};
use crate::dg::problem::ProblemData;
use crate::dg::GridConfig;
use crate::error::{Error, Result};
use crate::strategy::{CostModel, ForcedStrategy};

/// Parse a strategy selector together with its cost model into the plan
/// choice the planner understands.
///
/// Accepted selectors: `auto`, `scalar`, `fuse`, `split:S`, `hybrid:F,S`.
/// The cost model (`heuristic` or `autotune`) only matters for `auto`;
/// autotuned planning reuses the benchmark seed and repeat count for its
/// own micro-measurements.
pub fn parse_plan_choice(
    strategy: &str,
    cost_model: &str,
    repeats: usize,
    seed: u64,
) -> Result<PlanChoice> {
    match strategy {
        "auto" => {
            let model = match cost_model {
                "heuristic" => CostModel::heuristic_default(),
                "autotune" => CostModel::Autotune {
                    repeats: repeats.max(3),
                    seed,
                },
                other => {
                    return Err(Error::InvalidArgument(format!(
                        "unknown cost model `{other}` (expected `heuristic` or `autotune`)"
                    )))
                }
            };
            Ok(PlanChoice::Auto(model))
        }
        "scalar" => Ok(PlanChoice::Forced(ForcedStrategy::Scalar)),
        "fuse" => Ok(PlanChoice::Forced(ForcedStrategy::Fuse)),
        _ => {
            if let Some(rest) = strategy.strip_prefix("split:") {
                let s: usize = rest.parse().map_err(|_| {
                    Error::InvalidArgument(format!(
                        "bad slice count in `{strategy}` (expected `split:S` with integer S)"
                    ))
                })?;
                return Ok(PlanChoice::Forced(ForcedStrategy::Split(s)));
            }
            if let Some(rest) = strategy.strip_prefix("hybrid:") {
                let mut parts = rest.splitn(2, ',');
                let f = parts.next().and_then(|p| p.parse::<usize>().ok());
                let s = parts.next().and_then(|p| p.parse::<usize>().ok());
                if let (Some(f), Some(s)) = (f, s) {
                    return Ok(PlanChoice::Forced(ForcedStrategy::Hybrid { f, s }));
                }
                return Err(Error::InvalidArgument(format!(
                    "bad hybrid shape in `{strategy}` (expected `hybrid:F,S` with integers)"
                )));
            }
            Err(Error::InvalidArgument(format!(
                "unknown strategy `{strategy}` (expected auto, scalar, fuse, split:S, or hybrid:F,S)"
            )))
        }
    }
}

/// Grow the cell count per direction (by doubling) until the degree-of-
/// freedom vector occupies at least `min_bytes` bytes. A zero threshold
/// keeps the requested count.
pub fn cells_for_min_bytes(dim: usize, degree: usize, cells: usize, min_bytes: u64) -> usize {
    let mut n = cells.max(1);
    let bytes = |n: usize| {
        (n as u64).pow(dim as u32) * ((degree + 1) as u64).pow(dim as u32)
            * std::mem::size_of::<f64>() as u64
    };
    while bytes(n) < min_bytes {
        n *= 2;
    }
    n
}

/// Build the operator plan a configuration describes.
pub fn build_plan(config: &MeasurementConfig) -> Result<OperatorPlan> {
    let grid = GridConfig::new(config.dim, config.cells, config.degree)?
        .with_quad_points(config.quad_points)?;
    let choice = parse_plan_choice(
        &config.strategy,
        &config.cost_model,
        config.repeats,
        config.seed,
    )?;
    plan_operator(&grid, config.width, &choice)
}

/// Pretty JSON dump of the strategies a configuration would execute,
/// without running anything.
pub fn explain_plan(config: &MeasurementConfig) -> Result<String> {
    let plan = build_plan(config)?;
    serde_json::to_string_pretty(&StrategyDump::from_plan(&plan))
        .map_err(|e| Error::InvalidArgument(format!("strategy serialization failed: {e}")))
}

fn random_input(dofs: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..dofs).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

/// Execute the run a configuration describes and assemble its report.
///
/// The operator is applied to a seeded random vector `repeats` times. In
/// time mode the wall-clock statistics are taken across the repeats after
/// one untimed warm-up application, and `dofs_per_second` spreads the
/// degree-of-freedom count of all repeats over their summed time. In
/// flops mode one application is counted exactly; the count is
/// deterministic, so repetition adds nothing.
pub fn run_benchmark(config: &MeasurementConfig) -> Result<BenchReport> {
    if config.repeats == 0 {
        return Err(Error::TooFewRepeats(config.repeats));
    }
    let plan = build_plan(config)?;
    let strategy = StrategyDump::from_plan(&plan);
    let problem = ProblemData::manufactured(config.dim);
    let dofs = plan.grid.total_dofs();
    let num_cells = plan.grid.num_cells() as u64;
    let z = random_input(dofs, config.seed);

    let metrics = match config.mode {
        Mode::Flops => {
            let zc: Vec<CountingScalar> = z.iter().map(|&v| CountingScalar(v)).collect();
            let mut out = vec![CountingScalar(0.0); dofs];
            let mut tally = StageTallies::default();
            reset_flop_counts();
            apply_operator(&plan, &problem, &zc, &mut out, Some(&mut tally))?;
            let flop_count = take_flop_counts().total_flops();
            let mut metrics = Metrics {
                flop_count: Some(flop_count),
                ..Metrics::default()
            };
            match config.granularity {
                Granularity::Operator => {}
                Granularity::Stage => {
                    metrics.per_stage = Some(PerStage::from_tally_flops(&tally));
                }
                Granularity::Cell => {
                    let cell_flops =
                        tally.eval_flops + tally.quadloop_flops + tally.testmult_flops;
                    metrics.per_cell = Some(PerCell {
                        num_cells,
                        flops: Some(cell_flops),
                        flops_per_cell: Some(cell_flops as f64 / num_cells as f64),
                        ns: None,
                        ns_per_cell: None,
                    });
                }
            }
            metrics
        }
        Mode::Time => {
            let mut out = vec![0.0f64; dofs];
            // Warm-up: fault in buffers and tables before anything counts.
            apply_operator(&plan, &problem, &z, &mut out, None)?;
            match config.granularity {
                Granularity::Operator => {
                    let timer = calibrate_timer();
                    let mut samples = Vec::with_capacity(config.repeats);
                    for _ in 0..config.repeats {
                        let (ns, result) =
                            timer.time_ns(|| apply_operator(&plan, &problem, &z, &mut out, None));
                        result?;
                        samples.push(ns);
                    }
                    let min = *samples.iter().min().expect("at least one repeat");
                    let max = *samples.iter().max().expect("at least one repeat");
                    let median = median_u64(&mut samples);
                    let total_ns: u64 = samples.iter().sum();
                    let dofs_per_second =
                        (dofs as f64 * config.repeats as f64) / (total_ns.max(1) as f64 * 1e-9);
                    Metrics {
                        wall_time_ns: Some(WallTimeNs { median, min, max }),
                        dofs_per_second: Some(dofs_per_second),
                        ..Metrics::default()
                    }
                }
                Granularity::Stage => {
                    let mut tally = StageTallies::default();
                    for _ in 0..config.repeats {
                        apply_operator(&plan, &problem, &z, &mut out, Some(&mut tally))?;
                    }
                    Metrics {
                        per_stage: Some(PerStage::from_tally_times(
                            &tally,
                            config.repeats as u64,
                        )),
                        ..Metrics::default()
                    }
                }
                Granularity::Cell => {
                    let mut tally = StageTallies::default();
                    for _ in 0..config.repeats {
                        apply_operator(&plan, &problem, &z, &mut out, Some(&mut tally))?;
                    }
                    let total = tally.eval_ns + tally.quadloop_ns + tally.testmult_ns;
                    let ns = total / config.repeats as u64;
                    Metrics {
                        per_cell: Some(PerCell {
                            num_cells,
                            flops: None,
                            flops_per_cell: None,
                            ns: Some(ns),
                            ns_per_cell: Some(ns as f64 / num_cells as f64),
                        }),
                        ..Metrics::default()
                    }
                }
            }
        }
    };

    Ok(BenchReport {
        config: config.clone(),
        metrics,
        strategy,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config(mode: Mode, granularity: Granularity) -> MeasurementConfig {
        MeasurementConfig {
            dim: 2,
            degree: 2,
            cells: 2,
            width: 4,
            strategy: "fuse".into(),
            cost_model: "heuristic".into(),
            quad_points: 3,
            mode,
            granularity,
            repeats: 3,
            seed: 17,
        }
    }

    #[test]
    fn strategy_selectors_parse_to_plan_choices() {
        assert!(matches!(
            parse_plan_choice("auto", "heuristic", 3, 1).unwrap(),
            PlanChoice::Auto(CostModel::Heuristic { .. })
        ));
        assert!(matches!(
            parse_plan_choice("auto", "autotune", 5, 1).unwrap(),
            PlanChoice::Auto(CostModel::Autotune { repeats: 5, seed: 1 })
        ));
        assert!(matches!(
            parse_plan_choice("scalar", "heuristic", 3, 1).unwrap(),
            PlanChoice::Forced(ForcedStrategy::Scalar)
        ));
        assert!(matches!(
            parse_plan_choice("split:4", "heuristic", 3, 1).unwrap(),
            PlanChoice::Forced(ForcedStrategy::Split(4))
        ));
        assert!(matches!(
            parse_plan_choice("hybrid:2,4", "heuristic", 3, 1).unwrap(),
            PlanChoice::Forced(ForcedStrategy::Hybrid { f: 2, s: 4 })
        ));
        assert!(parse_plan_choice("split:x", "heuristic", 3, 1).is_err());
        assert!(parse_plan_choice("hybrid:2", "heuristic", 3, 1).is_err());
        assert!(parse_plan_choice("wide", "heuristic", 3, 1).is_err());
        assert!(parse_plan_choice("auto", "oracle", 3, 1).is_err());
    }

    #[test]
    fn min_bytes_doubles_the_cell_count_until_the_vector_is_big_enough() {
        // 3D, degree 1: n^3 * 8 dofs * 8 bytes. n = 16 is the first power
        // of two past 100 kB.
        assert_eq!(cells_for_min_bytes(3, 1, 2, 100_000), 16);
        assert_eq!(cells_for_min_bytes(3, 1, 2, 0), 2);
        assert_eq!(cells_for_min_bytes(2, 3, 4, 1), 4);
    }

    #[test]
    fn flop_mode_reports_are_deterministic_and_time_free() {
        let config = small_config(Mode::Flops, Granularity::Operator);
        let first = run_benchmark(&config).unwrap();
        let second = run_benchmark(&config).unwrap();
        let flops = first.metrics.flop_count.unwrap();
        assert!(flops > 0);
        assert_eq!(second.metrics.flop_count.unwrap(), flops);
        assert!(first.metrics.wall_time_ns.is_none());
        assert!(first.metrics.gflops.is_none());
        assert!(first.metrics.dofs_per_second.is_none());
    }

    #[test]
    fn stage_granularity_flop_breakdown_sums_to_the_total() {
        let config = small_config(Mode::Flops, Granularity::Stage);
        let report = run_benchmark(&config).unwrap();
        let total = report.metrics.flop_count.unwrap();
        let stage = report.metrics.per_stage.unwrap();
        let sum = stage.eval.flops.unwrap()
            + stage.quadloop.flops.unwrap()
            + stage.testmult.flops.unwrap()
            + stage.facet.flops.unwrap();
        assert_eq!(sum, total);
        assert!(stage.facet.flops.unwrap() > 0);
    }

    #[test]
    fn cell_granularity_reports_volume_work_per_cell() {
        let config = small_config(Mode::Flops, Granularity::Cell);
        let report = run_benchmark(&config).unwrap();
        let cell = report.metrics.per_cell.unwrap();
        assert_eq!(cell.num_cells, 4);
        let flops = cell.flops.unwrap();
        assert!(flops > 0);
        assert!(flops < report.metrics.flop_count.unwrap());
        assert!((cell.flops_per_cell.unwrap() - flops as f64 / 4.0).abs() < 1e-9);
    }

    #[test]
    fn time_mode_reports_wall_statistics_and_throughput() {
        let config = small_config(Mode::Time, Granularity::Operator);
        let report = run_benchmark(&config).unwrap();
        let wall = report.metrics.wall_time_ns.unwrap();
        assert!(wall.min <= wall.median && wall.median <= wall.max);
        assert!(report.metrics.dofs_per_second.unwrap() > 0.0);
        assert!(report.metrics.flop_count.is_none());
        assert!(report.metrics.gflops.is_none());
    }

    #[test]
    fn instrumented_time_granularities_omit_end_to_end_totals() {
        let stage = run_benchmark(&small_config(Mode::Time, Granularity::Stage)).unwrap();
        assert!(stage.metrics.wall_time_ns.is_none());
        assert!(stage.metrics.dofs_per_second.is_none());
        assert!(stage.metrics.per_stage.is_some());

        let cell = run_benchmark(&small_config(Mode::Time, Granularity::Cell)).unwrap();
        assert!(cell.metrics.wall_time_ns.is_none());
        let per_cell = cell.metrics.per_cell.unwrap();
        assert!(per_cell.ns.is_some());
        assert!(per_cell.ns_per_cell.is_some());
    }

    #[test]
    fn zero_repeats_is_rejected() {
        let mut config = small_config(Mode::Time, Granularity::Operator);
        config.repeats = 0;
        assert!(matches!(
            run_benchmark(&config),
            Err(Error::TooFewRepeats(0))
        ));
    }

    #[test]
    fn explain_dumps_the_plan_without_running() {
        let config = small_config(Mode::Time, Granularity::Operator);
        let dump = explain_plan(&config).unwrap();
        let value: serde_json::Value = serde_json::from_str(&dump).unwrap();
        assert!(value["volume"]["groups"].as_array().unwrap().len() > 0);
        assert_eq!(value["interior"].as_array().unwrap().len(), 2);
        assert_eq!(value["boundary"].as_array().unwrap().len(), 4);
    }
}
