//! `tirs`: command-line front end for the solver library.
//!
//! Subcommands: `validate`, `solve`, `verify`, `sweep`, `precommit`, and
//! `example`. Models are referenced by file path or by built-in name
//! (`example1`, `example2`). Every command writes its reports into
//! `--output-dir` atomically (temp file + rename), with canonical JSON:
//! fixed key order and 17-significant-digit floats, so repeated runs are
//! byte-identical. Wall-clock timings and thread counts are volatile, so
//! they go to a separate `diagnostics.json` instead of the main artifacts.
//!
//! Exit codes, designed so CI can gate on them separately:
//!
//! ```text
//! 0  success; any emitted report contains only passing checks
//! 1  input error (unreadable file, schema violation, unknown example,
//!    bad flags); a single `ERROR: ...` line goes to stderr
//! 2  a mathematical check failed (validation failure, step-optimality
//!    violation, non-converged sweep); reports are still written
//! ```
//!
//! The environment variable `TIRS_THREADS` caps internal parallelism
//! (0 or unset = automatic).

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use tirs_core::convergence::{geometric_grid, sweep};
use tirs_core::equilibrium::{
    precommitment_gap, solve, verify_step_optimality, EquilibriumSolution, SolveOptions,
};
use tirs_core::examples::builtin;
use tirs_core::model::{validate_assumptions, CheckStatus, ModelSpec};
use tirs_core::operators::EvalMode;

#[derive(Parser)]
#[command(
    name = "tirs",
    version,
    about = "Finite-horizon risk-sensitive equilibria and their small-noise limits"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct GridArgs {
    /// Comma-separated eps values, strictly decreasing (e.g. 0.64,0.32,0.16).
    #[arg(long, value_delimiter = ',', conflicts_with = "grid_geometric")]
    grid: Option<Vec<f64>>,
    /// Halving grid: largest eps and point count (e.g. --grid-geometric 0.64 12).
    #[arg(long, num_args = 2, value_names = ["EPS_MAX", "POINTS"])]
    grid_geometric: Option<Vec<f64>>,
}

#[derive(Subcommand)]
enum Command {
    /// Check the standing model assumptions over an eps grid.
    Validate {
        /// Model file path or built-in name (example1, example2).
        #[arg(long)]
        model: String,
        #[command(flatten)]
        grid: GridArgs,
        #[arg(long, default_value = ".")]
        output_dir: PathBuf,
    },
    /// Solve for the step-optimal policy and its value rectangle.
    Solve {
        #[arg(long)]
        model: String,
        /// Risk parameter: a positive real, or "limit" for the max-plus limit.
        #[arg(long, default_value = "limit")]
        eps: String,
        /// Margin within which actions count as tied.
        #[arg(long, default_value_t = 1e-9)]
        tie_tol: f64,
        /// Also write one JSON line per operator application to trace.jsonl.
        #[arg(long)]
        trace_ops: bool,
        #[arg(long, default_value = ".")]
        output_dir: PathBuf,
    },
    /// Re-derive a solution file's tables and hunt for profitable deviations.
    Verify {
        #[arg(long)]
        model: String,
        /// A solution.json produced by `solve`.
        #[arg(long)]
        solution: PathBuf,
        /// Deviations smaller than this margin count as ties, not violations.
        #[arg(long, default_value_t = 1e-9)]
        tie_tol: f64,
        #[arg(long, default_value = ".")]
        output_dir: PathBuf,
    },
    /// Solve along an eps grid and report convergence to the limit.
    Sweep {
        #[arg(long)]
        model: String,
        #[command(flatten)]
        grid: GridArgs,
        #[arg(long, default_value_t = 1e-9)]
        tie_tol: f64,
        #[arg(long, default_value = ".")]
        output_dir: PathBuf,
    },
    /// Compare the equilibrium against the enumerated precommitted optimum.
    Precommit {
        #[arg(long)]
        model: String,
        /// Risk parameter: a positive real, or "limit".
        #[arg(long, default_value = "limit")]
        eps: String,
        /// Refuse instances with more deterministic policies than this.
        #[arg(long, default_value_t = 1_000_000)]
        enumeration_cap: u64,
        /// Report a single initial state (by label) on stdout.
        #[arg(long)]
        initial_state: Option<i64>,
        #[arg(long, default_value_t = 1e-9)]
        tie_tol: f64,
        #[arg(long, default_value = ".")]
        output_dir: PathBuf,
    },
    /// Write a built-in example model as JSON.
    Example {
        /// Built-in name: example1 or example2.
        name: String,
        #[arg(long, default_value = ".")]
        output_dir: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            if matches!(
                e.kind(),
                ErrorKind::DisplayHelp
                    | ErrorKind::DisplayVersion
                    | ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand
            ) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            let text = e.to_string();
            let first = text
                .lines()
                .find(|l| !l.trim().is_empty())
                .unwrap_or("bad arguments");
            eprintln!("ERROR: {}", first.trim_start_matches("error: "));
            return ExitCode::from(1);
        }
    };
    let code = match configure_threads().and_then(|()| run(cli.command)) {
        Ok(code) => code,
        Err(msg) => {
            eprintln!("ERROR: {msg}");
            1
        }
    };
    ExitCode::from(code)
}

fn configure_threads() -> Result<(), String> {
    let Ok(raw) = std::env::var("TIRS_THREADS") else {
        return Ok(());
    };
    let threads: usize = raw
        .trim()
        .parse()
        .map_err(|_| format!("TIRS_THREADS must be a nonnegative integer, got '{raw}'"))?;
    if threads == 0 {
        return Ok(());
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| format!("thread pool: {e}"))
}

fn run(command: Command) -> Result<u8, String> {
    let started = Instant::now();
    match command {
        Command::Validate {
            model,
            grid,
            output_dir,
        } => {
            let model = load_model(&model)?;
            let grid = resolve_grid(&model, &grid)?;
            let report = validate_assumptions(&model, &grid);
            for check in &report.checks {
                let word = match check.status {
                    CheckStatus::Pass => "pass",
                    CheckStatus::Fail => "FAIL",
                    CheckStatus::NotApplicable => "n/a ",
                };
                println!("{word}  {}", check.name);
            }
            let path = write_atomic(&output_dir, "validation.json", report.to_json_string())?;
            println!("wrote {}", path.display());
            write_diagnostics(&output_dir, "validate", started)?;
            Ok(if report.passed { 0 } else { 2 })
        }
        Command::Solve {
            model,
            eps,
            tie_tol,
            trace_ops,
            output_dir,
        } => {
            let model = load_model(&model)?;
            let mode = parse_mode(&eps)?;
            let opts = SolveOptions {
                tie_tol,
                trace: trace_ops,
            };
            let sol = solve(&model, mode, opts).map_err(|e| e.to_string())?;
            let path = write_atomic(&output_dir, "solution.json", sol.to_json_string(&model))?;
            write_atomic(&output_dir, "theta.csv", sol.theta_csv(&model))?;
            write_atomic(&output_dir, "policy.csv", sol.policy_csv(&model))?;
            if let Some(trace) = &sol.trace {
                let mut lines = String::new();
                for event in trace {
                    lines.push_str(&event.to_json_line());
                    lines.push('\n');
                }
                write_atomic(&output_dir, "trace.jsonl", lines)?;
            }
            println!(
                "solved {} steps x {} states ({})",
                model.horizon(),
                model.n_states(),
                describe_mode(mode)
            );
            println!("wrote {}", path.display());
            write_diagnostics(&output_dir, "solve", started)?;
            Ok(0)
        }
        Command::Verify {
            model,
            solution,
            tie_tol,
            output_dir,
        } => {
            let model = load_model(&model)?;
            let text = fs::read_to_string(&solution)
                .map_err(|e| format!("cannot read {}: {e}", solution.display()))?;
            let sol = EquilibriumSolution::from_json_str(&model, &text)
                .map_err(|e| format!("{}: {e}", solution.display()))?;
            let report =
                verify_step_optimality(&model, sol.mode, &sol.policy, Some(&sol.theta), tie_tol)
                    .map_err(|e| e.to_string())?;
            for v in &report.violations {
                println!(
                    "violation at t {}, x {}: {} improves on {} by {:.3e}",
                    v.t, v.x, v.better, v.held, v.amount
                );
            }
            println!(
                "{}: worst deviation {:.3e}, table drift {:.3e}",
                if report.passed { "pass" } else { "FAIL" },
                report.worst_violation,
                report.theta_max_abs_diff.unwrap_or(0.0)
            );
            let path = write_atomic(&output_dir, "verification.json", report.to_json_string())?;
            println!("wrote {}", path.display());
            write_diagnostics(&output_dir, "verify", started)?;
            Ok(if report.passed { 0 } else { 2 })
        }
        Command::Sweep {
            model,
            grid,
            tie_tol,
            output_dir,
        } => {
            let model = load_model(&model)?;
            let grid = resolve_grid(&model, &grid)?;
            let opts = SolveOptions {
                tie_tol,
                trace: false,
            };
            let res = sweep(&model, &grid, opts).map_err(|e| e.to_string())?;
            println!(
                "trend {}  final {}  policy {}  operator {}",
                pass_word(res.trend_ok),
                pass_word(res.final_ok),
                pass_word(res.policy_converged),
                pass_word(res.limit_consistency_ok)
            );
            println!(
                "final distance {:.6e} (tolerance {:.2e})",
                res.final_distance, res.tolerance_sweep_final
            );
            write_atomic(&output_dir, "sweep_long.csv", res.csv_long())?;
            write_atomic(&output_dir, "sweep_wide.csv", res.csv_wide())?;
            let path = write_atomic(&output_dir, "sweep_summary.json", res.summary_json())?;
            println!("wrote {}", path.display());
            write_diagnostics(&output_dir, "sweep", started)?;
            Ok(if res.passed() { 0 } else { 2 })
        }
        Command::Precommit {
            model,
            eps,
            enumeration_cap,
            initial_state,
            tie_tol,
            output_dir,
        } => {
            let model = load_model(&model)?;
            let mode = parse_mode(&eps)?;
            let opts = SolveOptions {
                tie_tol,
                trace: false,
            };
            let report = precommitment_gap(&model, mode, opts, enumeration_cap)
                .map_err(|e| e.to_string())?;
            match initial_state {
                Some(label) => {
                    let xi = model
                        .state_idx(label)
                        .ok_or_else(|| format!("no state labeled {label}"))?;
                    println!(
                        "state {label}: equilibrium {:.6} precommitment {:.6} gap {:.3e}",
                        report.equilibrium[xi], report.precommitment[xi], report.gap[xi]
                    );
                }
                None => {
                    for (xi, label) in model.state_labels().iter().enumerate() {
                        println!(
                            "state {label}: equilibrium {:.6} precommitment {:.6} gap {:.3e}",
                            report.equilibrium[xi], report.precommitment[xi], report.gap[xi]
                        );
                    }
                }
            }
            println!(
                "enumerated {} policies, max gap {:.3e}",
                report.policies_enumerated, report.max_gap
            );
            let path = write_atomic(&output_dir, "precommitment.json", report.to_json_string())?;
            println!("wrote {}", path.display());
            write_diagnostics(&output_dir, "precommit", started)?;
            Ok(0)
        }
        Command::Example { name, output_dir } => {
            let model = builtin(&name)
                .ok_or_else(|| {
                    format!("unknown example '{name}'; available: example1, example2")
                })?
                .map_err(|e| e.to_string())?;
            let path = write_atomic(&output_dir, &format!("{name}.json"), model.to_json_string())?;
            println!("wrote {}", path.display());
            write_diagnostics(&output_dir, "example", started)?;
            Ok(0)
        }
    }
}

fn load_model(reference: &str) -> Result<ModelSpec, String> {
    let path = Path::new(reference);
    if path.is_file() {
        let text = fs::read_to_string(path).map_err(|e| format!("cannot read {reference}: {e}"))?;
        return ModelSpec::from_json_str(&text).map_err(|e| format!("{reference}: {e}"));
    }
    if let Some(built) = builtin(reference) {
        return built.map_err(|e| e.to_string());
    }
    Err(format!(
        "'{reference}' is neither a readable file nor a built-in example name"
    ))
}

fn parse_mode(eps: &str) -> Result<EvalMode, String> {
    if eps.eq_ignore_ascii_case("limit") {
        return Ok(EvalMode::Limit);
    }
    let value: f64 = eps
        .parse()
        .map_err(|_| format!("--eps must be a positive real or 'limit', got '{eps}'"))?;
    if !(value.is_finite() && value > 0.0) {
        return Err(format!("--eps must be positive and finite, got {value}"));
    }
    Ok(EvalMode::Eps(value))
}

fn describe_mode(mode: EvalMode) -> String {
    match mode {
        EvalMode::Eps(e) => format!("eps {e}"),
        EvalMode::Limit => "limit mode".into(),
    }
}

fn pass_word(ok: bool) -> &'static str {
    if ok {
        "pass"
    } else {
        "FAIL"
    }
}

fn resolve_grid(model: &ModelSpec, args: &GridArgs) -> Result<Vec<f64>, String> {
    if let Some(grid) = &args.grid {
        if grid.is_empty() {
            return Err("--grid needs at least one eps value".into());
        }
        return Ok(grid.clone());
    }
    if let Some(pair) = &args.grid_geometric {
        let eps_max = pair[0];
        let points = pair[1];
        if !(eps_max.is_finite() && eps_max > 0.0) {
            return Err(format!("--grid-geometric eps_max must be positive, got {eps_max}"));
        }
        if points.fract() != 0.0 || !(1.0..=10_000.0).contains(&points) {
            return Err(format!(
                "--grid-geometric point count must be an integer in 1..=10000, got {points}"
            ));
        }
        return Ok(geometric_grid(eps_max, points as usize));
    }
    model.default_grid().map_err(|e| e.to_string())
}

fn write_atomic(
    dir: &Path,
    name: &str,
    content: impl AsRef<[u8]>,
) -> Result<PathBuf, String> {
    fs::create_dir_all(dir).map_err(|e| format!("cannot create {}: {e}", dir.display()))?;
    let mut tmp = tempfile::Builder::new()
        .prefix(".tirs-")
        .tempfile_in(dir)
        .map_err(|e| format!("cannot create temp file in {}: {e}", dir.display()))?;
    tmp.write_all(content.as_ref())
        .map_err(|e| format!("cannot write {name}: {e}"))?;
    let target = dir.join(name);
    tmp.persist(&target)
        .map_err(|e| format!("cannot persist {name}: {e}"))?;
    Ok(target)
}

/// Volatile run metadata. Kept out of the main artifacts so those stay
/// byte-identical across runs; schema (key order) is still fixed.
fn write_diagnostics(dir: &Path, command: &str, started: Instant) -> Result<(), String> {
    let body = format!(
        "{{\"command\":\"{command}\",\"elapsed_ms\":{},\"threads\":{}}}",
        started.elapsed().as_millis(),
        rayon::current_num_threads()
    );
    write_atomic(dir, "diagnostics.json", body)?;
    Ok(())
}
