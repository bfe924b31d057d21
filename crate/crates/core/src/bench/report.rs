//! Measurement configuration and report types, with JSON and CSV emission.
//!
//! A report always carries three parts: the echoed configuration, the
//! metrics block, and a dump of the strategy the run executed. Which
//! metric fields are present depends on the measurement mode and
//! granularity:
//!
//! * `flops` mode fills `flop_count` (and per-stage / per-cell flops at
//!   finer granularity) and never reports times or `gflops`.
//! * `time` mode at `operator` granularity fills `wall_time_ns` and
//!   `dofs_per_second`; at `stage` or `cell` granularity it reports only
//!   the instrumented breakdown, because the instrumentation itself
//!   perturbs end-to-end totals.
//! * `gflops` is only ever filled by [`merge_flop_report`], which combines
//!   a time-mode report with the flop count from a separate flops-mode run
//!   of the identical configuration and seed.

use serde::{Deserialize, Serialize};

use crate::dg::assemble::{OperatorPlan, StageTallies};
use crate::error::{Error, Result};
use crate::strategy::PlanSummary;

/// What a benchmark run measures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Count floating-point operations with the instrumented scalar type.
    Flops,
    /// Measure wall-clock time with plain `f64` arithmetic.
    Time,
}

/// How fine-grained the reported measurement is.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Granularity {
    /// One number for the whole operator application.
    Operator,
    /// The cell-local (volume) integrals only, with per-cell averages.
    Cell,
    /// A breakdown over the pipeline phases.
    Stage,
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "flops" => Ok(Mode::Flops),
            "time" => Ok(Mode::Time),
            other => Err(Error::InvalidArgument(format!(
                "unknown mode `{other}` (expected `flops` or `time`)"
            ))),
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::Flops => "flops",
            Mode::Time => "time",
        })
    }
}

impl std::str::FromStr for Granularity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "operator" => Ok(Granularity::Operator),
            "cell" => Ok(Granularity::Cell),
            "stage" => Ok(Granularity::Stage),
            other => Err(Error::InvalidArgument(format!(
                "unknown granularity `{other}` (expected `operator`, `cell`, or `stage`)"
            ))),
        }
    }
}

impl std::fmt::Display for Granularity {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Granularity::Operator => "operator",
            Granularity::Cell => "cell",
            Granularity::Stage => "stage",
        })
    }
}

/// Full description of one benchmark run. Serialized verbatim into the
/// report so results stay self-describing.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MeasurementConfig {
    pub dim: usize,
    pub degree: usize,
    /// Cells per direction (after any `--min-bytes` growth).
    pub cells: usize,
    pub width: usize,
    /// Strategy selector as given on the command line, e.g. `auto`,
    /// `scalar`, `fuse`, `split:4`, `hybrid:2,2`.
    pub strategy: String,
    /// `heuristic` or `autotune`; only consulted when `strategy` is `auto`.
    pub cost_model: String,
    /// Quadrature points per direction before any planner adjustment.
    pub quad_points: usize,
    pub mode: Mode,
    pub granularity: Granularity,
    pub repeats: usize,
    pub seed: u64,
}

impl MeasurementConfig {
    /// True when `other` describes the same run apart from the mode, which
    /// is the requirement for pairing a time measurement with a flop count.
    pub fn matches_ignoring_mode(&self, other: &MeasurementConfig) -> bool {
        let mut a = self.clone();
        let mut b = other.clone();
        a.mode = Mode::Time;
        b.mode = Mode::Time;
        a == b
    }
}

/// Wall-clock statistics over the repeated applications, in nanoseconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WallTimeNs {
    pub median: u64,
    pub min: u64,
    pub max: u64,
}

/// Flops and/or time attributed to one pipeline phase. Times are averages
/// per application (total across repeats divided by the repeat count).
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StageMetric {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flops: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ns: Option<u64>,
}

/// Breakdown over the four pipeline phases: basis evaluation contractions,
/// the quadrature point loop, test-function multiplication contractions,
/// and all facet (interior + boundary) work.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PerStage {
    pub eval: StageMetric,
    pub quadloop: StageMetric,
    pub testmult: StageMetric,
    pub facet: StageMetric,
}

impl PerStage {
    /// Build a flops-only breakdown from accumulated tallies.
    pub fn from_tally_flops(t: &StageTallies) -> Self {
        PerStage {
            eval: StageMetric {
                flops: Some(t.eval_flops),
                ns: None,
            },
            quadloop: StageMetric {
                flops: Some(t.quadloop_flops),
                ns: None,
            },
            testmult: StageMetric {
                flops: Some(t.testmult_flops),
                ns: None,
            },
            facet: StageMetric {
                flops: Some(t.facet_flops),
                ns: None,
            },
        }
    }

    /// Build a time-only breakdown from tallies accumulated over `repeats`
    /// applications, averaging down to one application.
    pub fn from_tally_times(t: &StageTallies, repeats: u64) -> Self {
        let per = |total: u64| Some(total / repeats.max(1));
        PerStage {
            eval: StageMetric {
                flops: None,
                ns: per(t.eval_ns),
            },
            quadloop: StageMetric {
                flops: None,
                ns: per(t.quadloop_ns),
            },
            testmult: StageMetric {
                flops: None,
                ns: per(t.testmult_ns),
            },
            facet: StageMetric {
                flops: None,
                ns: per(t.facet_ns),
            },
        }
    }
}

/// Cell-local integration metrics: the volume-integral phases only, with
/// averages over the number of cells.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PerCell {
    pub num_cells: u64,
    /// Volume-integral flops for one application.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flops: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flops_per_cell: Option<f64>,
    /// Volume-integral time for one application, nanoseconds.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ns: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ns_per_cell: Option<f64>,
}

/// The measured quantities of one run. Fields are omitted from JSON when
/// the mode/granularity combination does not produce them.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flop_count: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_time_ns: Option<WallTimeNs>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gflops: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dofs_per_second: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_stage: Option<PerStage>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_cell: Option<PerCell>,
}

/// The vectorization strategies the run executed, one plan per integral.
#[derive(Debug, Clone, Serialize)]
pub struct StrategyDump {
    pub total_cost: f64,
    pub volume: PlanSummary,
    /// Indexed by facet normal direction.
    pub interior: Vec<PlanSummary>,
    /// Indexed by `2 * normal + side` with side 0 = lower, 1 = upper.
    pub boundary: Vec<PlanSummary>,
}

impl StrategyDump {
    pub fn from_plan(plan: &OperatorPlan) -> Self {
        StrategyDump {
            total_cost: plan.total_cost(),
            volume: plan.volume.summary(),
            interior: plan.interior.iter().map(|p| p.summary()).collect(),
            boundary: plan.boundary.iter().map(|p| p.summary()).collect(),
        }
    }
}

/// One benchmark result: `{"config": ..., "metrics": ..., "strategy": ...}`.
#[derive(Debug, Clone, Serialize)]
pub struct BenchReport {
    pub config: MeasurementConfig,
    pub metrics: Metrics,
    pub strategy: StrategyDump,
}

impl BenchReport {
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self)
            .map_err(|e| Error::InvalidArgument(format!("report serialization failed: {e}")))
    }

    /// Flatten the report to a two-line CSV (header plus one data row).
    /// Absent metrics become empty fields, so rows from different modes
    /// share one schema and can be concatenated for plotting.
    pub fn to_csv(&self) -> String {
        let c = &self.config;
        let m = &self.metrics;
        let os = |v: Option<String>| v.unwrap_or_default();
        let stage = m.per_stage.unwrap_or_default();
        let cell = m.per_cell.unwrap_or_default();
        let columns: Vec<(&str, String)> = vec![
            ("dim", c.dim.to_string()),
            ("degree", c.degree.to_string()),
            ("cells", c.cells.to_string()),
            ("width", c.width.to_string()),
            ("strategy", csv_field(&c.strategy)),
            ("cost_model", csv_field(&c.cost_model)),
            ("quad_points", c.quad_points.to_string()),
            ("mode", c.mode.to_string()),
            ("granularity", c.granularity.to_string()),
            ("repeats", c.repeats.to_string()),
            ("seed", c.seed.to_string()),
            ("flop_count", os(m.flop_count.map(|v| v.to_string()))),
            (
                "wall_median_ns",
                os(m.wall_time_ns.map(|w| w.median.to_string())),
            ),
            ("wall_min_ns", os(m.wall_time_ns.map(|w| w.min.to_string()))),
            ("wall_max_ns", os(m.wall_time_ns.map(|w| w.max.to_string()))),
            (
                "dofs_per_second",
                os(m.dofs_per_second.map(|v| format!("{v:.3}"))),
            ),
            ("gflops", os(m.gflops.map(|v| format!("{v:.6}")))),
            (
                "eval_flops",
                os(m.per_stage.and_then(|_| stage.eval.flops).map(u64str)),
            ),
            (
                "eval_ns",
                os(m.per_stage.and_then(|_| stage.eval.ns).map(u64str)),
            ),
            (
                "quadloop_flops",
                os(m.per_stage.and_then(|_| stage.quadloop.flops).map(u64str)),
            ),
            (
                "quadloop_ns",
                os(m.per_stage.and_then(|_| stage.quadloop.ns).map(u64str)),
            ),
            (
                "testmult_flops",
                os(m.per_stage.and_then(|_| stage.testmult.flops).map(u64str)),
            ),
            (
                "testmult_ns",
                os(m.per_stage.and_then(|_| stage.testmult.ns).map(u64str)),
            ),
            (
                "facet_flops",
                os(m.per_stage.and_then(|_| stage.facet.flops).map(u64str)),
            ),
            (
                "facet_ns",
                os(m.per_stage.and_then(|_| stage.facet.ns).map(u64str)),
            ),
            (
                "cell_count",
                os(m.per_cell.map(|_| cell.num_cells.to_string())),
            ),
            (
                "cell_flops",
                os(m.per_cell.and_then(|_| cell.flops).map(u64str)),
            ),
            ("cell_ns", os(m.per_cell.and_then(|_| cell.ns).map(u64str))),
            ("plan_cost", format!("{:.3}", self.strategy.total_cost)),
        ];
        let header: Vec<&str> = columns.iter().map(|(name, _)| *name).collect();
        let row: Vec<&str> = columns.iter().map(|(_, v)| v.as_str()).collect();
        format!("{}\n{}\n", header.join(","), row.join(","))
    }
}

fn u64str(v: u64) -> String {
    v.to_string()
}

/// Quote a CSV field if it contains a comma or a quote.
fn csv_field(s: &str) -> String {
    if s.contains(',') || s.contains('"') {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// The subset of a serialized report needed to pair a flop count with a
/// time measurement.
#[derive(Debug, Deserialize)]
struct PartialReport {
    config: MeasurementConfig,
    metrics: Metrics,
}

/// Fill `gflops` on a time-mode report from the JSON of a flops-mode run.
///
/// The two runs must describe the identical configuration (including the
/// seed) apart from the mode; anything else is rejected, because dividing
/// a flop count by the wall time of a different workload would fabricate a
/// rate nobody measured. With both in nanoseconds and plain flops, the
/// quotient `flop_count / median_ns` is already GFLOP/s.
pub fn merge_flop_report(report: &mut BenchReport, flops_json: &str) -> Result<()> {
    if report.config.mode != Mode::Time {
        return Err(Error::InvalidArgument(
            "gflops merging requires a time-mode report".into(),
        ));
    }
    let partial: PartialReport = serde_json::from_str(flops_json)
        .map_err(|e| Error::InvalidArgument(format!("unreadable flops report: {e}")))?;
    if partial.config.mode != Mode::Flops {
        return Err(Error::InvalidArgument(
            "the merged report must come from a flops-mode run".into(),
        ));
    }
    if !report.config.matches_ignoring_mode(&partial.config) {
        return Err(Error::InvalidArgument(
            "flops report configuration does not match this run (everything \
             including the seed must be identical apart from the mode)"
                .into(),
        ));
    }
    let flops = partial.metrics.flop_count.ok_or_else(|| {
        Error::InvalidArgument("flops report carries no flop_count".into())
    })?;
    let wall = report.metrics.wall_time_ns.ok_or_else(|| {
        Error::InvalidArgument(
            "time report carries no wall_time_ns (stage/cell granularity \
             runs do not report end-to-end totals)"
                .into(),
        )
    })?;
    if wall.median == 0 {
        return Err(Error::InvalidArgument(
            "median wall time is zero; cannot form a rate".into(),
        ));
    }
    report.metrics.flop_count = Some(flops);
    report.metrics.gflops = Some(flops as f64 / wall.median as f64);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dg::assemble::{plan_operator, PlanChoice};
    use crate::dg::GridConfig;
    use crate::strategy::ForcedStrategy;

    fn test_config(mode: Mode) -> MeasurementConfig {
        MeasurementConfig {
            dim: 2,
            degree: 2,
            cells: 2,
            width: 4,
            strategy: "fuse".into(),
            cost_model: "heuristic".into(),
            quad_points: 3,
            mode,
            granularity: Granularity::Operator,
            repeats: 3,
            seed: 11,
        }
    }

    fn test_report(mode: Mode) -> BenchReport {
        let grid = GridConfig::new(2, 2, 2).unwrap();
        let plan = plan_operator(&grid, 4, &PlanChoice::Forced(ForcedStrategy::Fuse)).unwrap();
        BenchReport {
            config: test_config(mode),
            metrics: Metrics::default(),
            strategy: StrategyDump::from_plan(&plan),
        }
    }

    #[test]
    fn json_report_has_exactly_the_three_top_level_sections() {
        let report = test_report(Mode::Time);
        let value: serde_json::Value = serde_json::from_str(&report.to_json().unwrap()).unwrap();
        let obj = value.as_object().unwrap();
        let keys: Vec<&str> = obj.keys().map(|k| k.as_str()).collect();
        assert_eq!(keys, ["config", "metrics", "strategy"]);
        assert_eq!(obj["config"]["mode"], "time");
        assert_eq!(obj["config"]["granularity"], "operator");
        assert!(obj["strategy"]["volume"]["groups"].is_array());
    }

    #[test]
    fn absent_metrics_are_omitted_from_json() {
        let mut report = test_report(Mode::Flops);
        report.metrics.flop_count = Some(1234);
        let value: serde_json::Value = serde_json::from_str(&report.to_json().unwrap()).unwrap();
        let metrics = value["metrics"].as_object().unwrap();
        assert_eq!(metrics["flop_count"], 1234);
        assert!(!metrics.contains_key("wall_time_ns"));
        assert!(!metrics.contains_key("gflops"));
        assert!(!metrics.contains_key("dofs_per_second"));
    }

    #[test]
    fn csv_header_and_row_have_matching_field_counts() {
        let mut report = test_report(Mode::Time);
        report.config.strategy = "hybrid:2,2".into();
        report.metrics.wall_time_ns = Some(WallTimeNs {
            median: 10,
            min: 9,
            max: 12,
        });
        report.metrics.dofs_per_second = Some(1.5e9);
        let csv = report.to_csv();
        let mut lines = csv.lines();
        let header = lines.next().unwrap();
        let row = lines.next().unwrap();
        assert_eq!(
            header.split(',').count(),
            // The quoted strategy field holds the only comma in the row.
            row.split(',').count() - 1
        );
        assert!(row.contains("\"hybrid:2,2\""));
        assert!(header.starts_with("dim,degree,cells,width,strategy"));
    }

    #[test]
    fn merging_a_matching_flops_run_yields_the_rate() {
        let mut time_report = test_report(Mode::Time);
        time_report.metrics.wall_time_ns = Some(WallTimeNs {
            median: 2_000,
            min: 1_900,
            max: 2_200,
        });
        let mut flops_report = test_report(Mode::Flops);
        flops_report.metrics.flop_count = Some(6_000);
        let json = flops_report.to_json().unwrap();
        merge_flop_report(&mut time_report, &json).unwrap();
        assert_eq!(time_report.metrics.flop_count, Some(6_000));
        let gflops = time_report.metrics.gflops.unwrap();
        assert!((gflops - 3.0).abs() < 1e-12, "6000 flops / 2000 ns = 3 GFLOP/s");
    }

    #[test]
    fn merging_rejects_a_mismatched_seed() {
        let mut time_report = test_report(Mode::Time);
        time_report.metrics.wall_time_ns = Some(WallTimeNs {
            median: 2_000,
            min: 1_900,
            max: 2_200,
        });
        let mut flops_report = test_report(Mode::Flops);
        flops_report.config.seed = 99;
        flops_report.metrics.flop_count = Some(6_000);
        let json = flops_report.to_json().unwrap();
        let err = merge_flop_report(&mut time_report, &json).unwrap_err();
        assert!(matches!(err, Error::InvalidArgument(_)));
    }

    #[test]
    fn merging_rejects_two_time_runs() {
        let mut time_report = test_report(Mode::Time);
        time_report.metrics.wall_time_ns = Some(WallTimeNs {
            median: 2_000,
            min: 1_900,
            max: 2_200,
        });
        let other = test_report(Mode::Time).to_json().unwrap();
        assert!(merge_flop_report(&mut time_report, &other).is_err());
    }

    #[test]
    fn mode_and_granularity_parse_and_display_round_trip() {
        for text in ["flops", "time"] {
            let mode: Mode = text.parse().unwrap();
            assert_eq!(mode.to_string(), text);
        }
        for text in ["operator", "cell", "stage"] {
            let g: Granularity = text.parse().unwrap();
            assert_eq!(g.to_string(), text);
        }
        assert!("hyperfine".parse::<Mode>().is_err());
        assert!("element".parse::<Granularity>().is_err());
    }

    #[test]
    fn config_match_ignores_only_the_mode() {
        let a = test_config(Mode::Time);
        let mut b = test_config(Mode::Flops);
        assert!(a.matches_ignoring_mode(&b));
        b.repeats += 1;
        assert!(!a.matches_ignoring_mode(&b));
    }
}
