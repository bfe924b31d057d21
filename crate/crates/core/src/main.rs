//! Command-line front end: benchmark runs, strategy dumps, and the
//! self-verification suite.
//!
//! Exit codes: 0 on success, 2 for configuration errors (including
//! violated divisibility constraints, reported with the offending
//! numbers), 3 when verification fails.

use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use sumfact_dg::bench::{
    cells_for_min_bytes, explain_plan, merge_flop_report, run_benchmark, run_verification,
    Granularity, MeasurementConfig, Mode,
};
use sumfact_dg::Error;

#[derive(Parser)]
#[command(
    name = "sumfact-dg",
    version,
    about = "Sum-factorized discontinuous Galerkin operator benchmarks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Measure one operator configuration and print or write the report.
    Bench(BenchArgs),
    /// Print the vectorization strategy a configuration would execute.
    Explain(PlanArgs),
    /// Run the built-in correctness suite against independent references.
    Verify {
        /// Seed for the randomized checks.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Args)]
struct PlanArgs {
    /// Spatial dimension of the grid (2 or 3).
    #[arg(long, default_value_t = 3)]
    dim: usize,
    /// Polynomial degree per direction.
    #[arg(long)]
    degree: usize,
    /// Cells per direction of the structured grid.
    #[arg(long)]
    cells: usize,
    /// SIMD lane width the plan targets (1, 2, 4, or 8).
    #[arg(long, default_value_t = 4)]
    width: usize,
    /// auto, scalar, fuse, split:S, or hybrid:F,S.
    #[arg(long, default_value = "auto")]
    strategy: String,
    /// heuristic or autotune (only consulted by --strategy auto).
    #[arg(long, default_value = "heuristic")]
    cost_model: String,
    /// Quadrature points per direction; defaults to degree + 1.
    #[arg(long)]
    quad_points: Option<usize>,
    /// Applications per measurement (also the autotuner's sample count).
    #[arg(long, default_value_t = 5)]
    repeats: usize,
    /// Seed for input data and the autotuner.
    #[arg(long, default_value_t = 42)]
    seed: u64,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    plan: PlanArgs,
    /// flops (exact operation counts) or time (wall-clock statistics).
    #[arg(long, default_value = "time")]
    mode: String,
    /// operator, cell, or stage.
    #[arg(long, default_value = "operator")]
    granularity: String,
    /// Grow --cells by doubling until the coefficient vector occupies at
    /// least this many bytes.
    #[arg(long, default_value_t = 0)]
    min_bytes: u64,
    /// Report from a flops-mode run of the identical configuration; its
    /// count is merged in to compute gflops.
    #[arg(long)]
    flops_json: Option<std::path::PathBuf>,
    /// Write the report here instead of stdout.
    #[arg(long)]
    output: Option<std::path::PathBuf>,
    /// json or csv.
    #[arg(long, default_value = "json")]
    format: String,
}

fn measurement_config(args: &BenchArgs) -> Result<MeasurementConfig, Error> {
    let mode: Mode = args.mode.parse()?;
    let granularity: Granularity = args.granularity.parse()?;
    let cells = cells_for_min_bytes(
        args.plan.dim,
        args.plan.degree,
        args.plan.cells,
        args.min_bytes,
    );
    Ok(MeasurementConfig {
        dim: args.plan.dim,
        degree: args.plan.degree,
        cells,
        width: args.plan.width,
        strategy: args.plan.strategy.clone(),
        cost_model: args.plan.cost_model.clone(),
        quad_points: args.plan.quad_points.unwrap_or(args.plan.degree + 1),
        mode,
        granularity,
        repeats: args.plan.repeats,
        seed: args.plan.seed,
    })
}

fn emit(text: &str, output: Option<&std::path::Path>) -> std::io::Result<()> {
    let text = text.trim_end_matches('\n');
    match output {
        Some(path) => std::fs::write(path, format!("{text}\n")),
        None => {
            use std::io::Write;
            let mut stdout = std::io::stdout().lock();
            let result = writeln!(stdout, "{text}").and_then(|_| stdout.flush());
            match result {
                // A closed pipe (e.g. piping into `head`) is not a failure
                // of the run itself.
                Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
                other => other,
            }
        }
    }
}

fn run_bench(args: &BenchArgs) -> Result<String, Error> {
    let config = measurement_config(args)?;
    let mut report = run_benchmark(&config)?;
    if let Some(path) = &args.flops_json {
        let json = std::fs::read_to_string(path).map_err(|e| {
            Error::InvalidArgument(format!("cannot read {}: {e}", path.display()))
        })?;
        merge_flop_report(&mut report, &json)?;
    }
    match args.format.as_str() {
        "json" => report.to_json(),
        "csv" => Ok(report.to_csv()),
        other => Err(Error::InvalidArgument(format!(
            "unknown format `{other}` (expected `json` or `csv`)"
        ))),
    }
}

fn run_explain(args: &PlanArgs) -> Result<String, Error> {
    let config = MeasurementConfig {
        dim: args.dim,
        degree: args.degree,
        cells: args.cells,
        width: args.width,
        strategy: args.strategy.clone(),
        cost_model: args.cost_model.clone(),
        quad_points: args.quad_points.unwrap_or(args.degree + 1),
        mode: Mode::Time,
        granularity: Granularity::Operator,
        repeats: args.repeats,
        seed: args.seed,
    };
    explain_plan(&config)
}

fn run_verify(seed: u64) -> Result<String, Error> {
    let checks = run_verification(seed)?;
    let mut lines = Vec::with_capacity(checks.len());
    let mut failed = Vec::new();
    for check in &checks {
        let status = if check.passed { "ok" } else { "FAILED" };
        lines.push(format!("{:<26} {status}  ({})", check.name, check.detail));
        if !check.passed {
            failed.push(check.name);
        }
    }
    if failed.is_empty() {
        Ok(lines.join("\n"))
    } else {
        // Print the per-check lines before reporting the failure so the
        // diagnostics are visible even on the error path.
        for line in &lines {
            println!("{line}");
        }
        Err(Error::VerificationFailed(format!(
            "checks failed: {}",
            failed.join(", ")
        )))
    }
}

/// Configuration problems exit with 2, failed verification with 3.
fn exit_code_for(error: &Error) -> ExitCode {
    match error {
        Error::VerificationFailed(_) => ExitCode::from(3),
        _ => ExitCode::from(2),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Bench(args) => run_bench(args).map(|text| (text, args.output.clone())),
        Command::Explain(args) => run_explain(args).map(|text| (text, None)),
        Command::Verify { seed } => run_verify(*seed).map(|text| (text, None)),
    };
    match result {
        Ok((text, output)) => {
            if let Err(e) = emit(&text, output.as_deref()) {
                eprintln!("error: cannot write report: {e}");
                return ExitCode::FAILURE;
            }
            ExitCode::SUCCESS
        }
        Err(error) => {
            eprintln!("error: {error}");
            exit_code_for(&error)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_errors_and_verification_failures_use_distinct_exit_codes() {
        let config_err = Error::NotDivisible {
            what: "quadrature points",
            value: 5,
            divisor: 4,
        };
        assert_eq!(exit_code_for(&config_err), ExitCode::from(2));
        let verify_err = Error::VerificationFailed("x".into());
        assert_eq!(exit_code_for(&verify_err), ExitCode::from(3));
        assert_eq!(
            exit_code_for(&Error::InvalidArgument("width".into())),
            ExitCode::from(2)
        );
    }

    #[test]
    fn bench_args_resolve_quadrature_and_min_bytes() {
        let cli = Cli::parse_from([
            "sumfact-dg",
            "bench",
            "--degree",
            "3",
            "--cells",
            "2",
            "--dim",
            "3",
            "--min-bytes",
            "100000",
            "--mode",
            "flops",
        ]);
        let Command::Bench(args) = &cli.command else {
            panic!("expected bench subcommand");
        };
        let config = measurement_config(args).unwrap();
        assert_eq!(config.quad_points, 4);
        assert_eq!(config.mode, Mode::Flops);
        // 100 kB of degree-3 coefficients needs at least 8^3 cells.
        assert_eq!(config.cells, 8);
    }

    #[test]
    fn unknown_mode_is_a_configuration_error() {
        let cli = Cli::parse_from([
            "sumfact-dg",
            "bench",
            "--degree",
            "1",
            "--cells",
            "2",
            "--mode",
            "cycles",
        ]);
        let Command::Bench(args) = &cli.command else {
            panic!("expected bench subcommand");
        };
        assert!(matches!(
            measurement_config(args),
            Err(Error::InvalidArgument(_))
        ));
    }
}
