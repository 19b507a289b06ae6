//! `aniso` — batch front end for the discrete anisotropic p(k)-Laplacian
//! toolkit.
//!
//! Every subcommand reads a TOML run configuration (except `example`, which
//! is parameterized by flags), executes one pipeline, and emits a
//! schema-versioned JSON document, optionally with a plot-ready CSV table.
//! Report bodies are pure functions of the config and the seed; wall-clock
//! metadata lives in a separate `meta` block, so identical invocations
//! produce byte-identical bodies.
//!
//! Exit codes: 0 on success, 1 on validation or configuration failure,
//! 2 on solver non-convergence.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{bail, Context};
use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use aniso::config::{load_run_config, ConfigError, RunConfig};
use aniso::exec::default_parallel;
use aniso::gallery::{self, factorial, ExampleG, QuotientTables};
use aniso::problem::{validate, ProblemInstance, StateVector};
use aniso::report::{self, Document, InstanceBlock};
use aniso::solver::{
    self, cascade, multistart, newton_solve, sweep, LevelStatus, ProbeCertificate, SolverError,
};
use aniso::theory::{estimate_a0, estimate_b0, interval_main, LimitEstimate, ParameterInterval};
use aniso::WideFloat;

const EXIT_OK: u8 = 0;
const EXIT_INVALID: u8 = 1;
const EXIT_NO_CONVERGENCE: u8 = 2;

#[derive(Parser)]
#[command(
    name = "aniso",
    version,
    about = "Solver and verification toolkit for the discrete anisotropic p(k)-Laplacian Dirichlet problem"
)]
struct Cli {
    /// TOML run configuration (required by every subcommand except
    /// `example`).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Seed for all randomized sampling; reports with the same seed have
    /// byte-identical bodies.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// Write the JSON report here instead of stdout (CSV goes to the same
    /// path with extension `.csv`).
    #[arg(long, global = true, value_name = "PATH")]
    out: Option<PathBuf>,

    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,

    /// Run batch work sequentially even when the parallel feature is
    /// compiled in. Results are identical either way.
    #[arg(long, global = true)]
    sequential: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
    Both,
}

#[derive(Subcommand)]
enum Command {
    /// Check a configured instance against the problem-class assumptions.
    Validate,
    /// Constants, asymptotic estimates, admissible-λ intervals, and
    /// optional sampling checks for the configured instance.
    Theory,
    /// One damped-Newton solve from a given (default zero) start.
    Solve {
        /// Comma-separated interior start values u(1),…,u(T).
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
        start: Option<Vec<f64>>,
    },
    /// Descend the configured sublevel heights, certifying one small
    /// negative-energy solution per level.
    Cascade,
    /// Seeded multistart search with deterministic root merging.
    Multistart,
    /// Verify the oscillating factorial-scale family: quotient tables,
    /// limit estimates, the admissible interval, and negativity probes.
    Example {
        /// Growth exponent γ > 2 of the comparison scales.
        #[arg(long, default_value_t = 3.0)]
        gamma: f64,
        /// Mesh size T of the verification instance.
        #[arg(long, default_value_t = 2)]
        t: usize,
        /// Parameter λ of the verification instance.
        #[arg(long, default_value_t = 1.0)]
        lambda: f64,
        /// First stage index of the quotient window (default: the minimal
        /// admissible stage).
        #[arg(long)]
        m_lo: Option<u32>,
        /// Last stage index of the quotient window (default: m_lo + 3).
        #[arg(long)]
        m_hi: Option<u32>,
    },
    /// Multistart across a λ grid (from config, or inside the estimated
    /// admissible interval).
    Sweep,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_INVALID,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_INVALID)
        }
    }
}

/// Output routing shared by all subcommands.
struct Emitter {
    out: Option<PathBuf>,
    format: Format,
    timestamp: Option<u64>,
}

impl Emitter {
    fn new(cli: &Cli) -> anyhow::Result<Self> {
        if cli.format == Format::Both {
            if let Some(out) = &cli.out {
                if out.extension().is_some_and(|e| e == "csv") {
                    bail!("--format both would overwrite {}: use a .json output path", out.display());
                }
            }
        }
        Ok(Emitter {
            out: cli.out.clone(),
            format: cli.format,
            timestamp: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .ok()
                .map(|d| d.as_secs()),
        })
    }

    /// Emit the document (and its tabular form, when the command has one)
    /// according to `--format` and `--out`.
    fn emit<R: Serialize>(&self, doc: &Document<R>, csv: Option<String>) -> anyhow::Result<()> {
        let json = doc.to_json()?;
        match self.format {
            Format::Json => self.write(&json, self.out.as_ref()),
            Format::Csv => {
                let csv = csv.context("this command has no tabular output")?;
                self.write(&csv, self.out.as_ref())
            }
            Format::Both => {
                self.write(&json, self.out.as_ref())?;
                let Some(csv) = csv else { return Ok(()) };
                match &self.out {
                    Some(path) => self.write(&csv, Some(&path.with_extension("csv"))),
                    None => self.write(&csv, None),
                }
            }
        }
    }

    fn write(&self, text: &str, path: Option<&PathBuf>) -> anyhow::Result<()> {
        match path {
            Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
            None => {
                print!("{text}");
                Ok(())
            }
        }
    }
}

#[derive(Serialize)]
struct ErrorBody {
    error: String,
}

/// Emit a structured error document and return the matching exit code.
fn emit_error(emitter: &Emitter, command: &str, error: String, code: u8) -> anyhow::Result<u8> {
    let doc = Document::new(
        command,
        None,
        None,
        ErrorBody { error },
        emitter.timestamp,
    );
    // Error documents are JSON-only; a CSV table of one error helps nobody.
    let json = doc.to_json()?;
    emitter.write(&json, emitter.out.as_ref())?;
    Ok(code)
}

fn run(cli: Cli) -> anyhow::Result<u8> {
    let emitter = Emitter::new(&cli)?;
    let parallel = !cli.sequential && default_parallel();
    match &cli.command {
        Command::Validate => cmd_validate(&cli, &emitter),
        Command::Theory => cmd_theory(&cli, &emitter, parallel),
        Command::Solve { start } => cmd_solve(&cli, &emitter, start.as_deref()),
        Command::Cascade => cmd_cascade(&cli, &emitter),
        Command::Multistart => cmd_multistart(&cli, &emitter, parallel),
        Command::Example {
            gamma,
            t,
            lambda,
            m_lo,
            m_hi,
        } => cmd_example(&emitter, *gamma, *t, *lambda, *m_lo, *m_hi),
        Command::Sweep => cmd_sweep(&cli, &emitter, parallel),
    }
}

/// Load the config named by `--config`, or fail as a usage error.
fn require_config(cli: &Cli) -> anyhow::Result<Result<RunConfig, ConfigError>> {
    let path = cli
        .config
        .as_ref()
        .context("--config <PATH> is required for this command")?;
    Ok(load_run_config(path))
}

fn cmd_validate(cli: &Cli, emitter: &Emitter) -> anyhow::Result<u8> {
    let config = match require_config(cli)? {
        Ok(c) => c,
        Err(e) => return emit_error(emitter, "validate", e.to_string(), EXIT_INVALID),
    };
    let (report, instance) = match config.build_instance() {
        Ok(instance) => (validate(&instance), Some(instance)),
        // The config parsed but the instance cannot be built; report the
        // construction failure as the single violation.
        Err(e) => return emit_error(emitter, "validate", e.to_string(), EXIT_INVALID),
    };
    let code = if report.valid { EXIT_OK } else { EXIT_INVALID };
    let csv = report::validate_csv(&report);
    let doc = Document::new(
        "validate",
        None,
        instance.as_ref().map(InstanceBlock::from_instance),
        report,
        emitter.timestamp,
    );
    emitter.emit(&doc, Some(csv))?;
    Ok(code)
}

fn cmd_theory(cli: &Cli, emitter: &Emitter, parallel: bool) -> anyhow::Result<u8> {
    let config = match require_config(cli)? {
        Ok(c) => c,
        Err(e) => return emit_error(emitter, "theory", e.to_string(), EXIT_INVALID),
    };
    let instance = match config.build_instance() {
        Ok(i) => i,
        Err(e) => return emit_error(emitter, "theory", e.to_string(), EXIT_INVALID),
    };
    let report = report::theory_report(&instance, &config.theory, cli.seed, parallel)?;
    let csv = report::theory_csv(&report);
    let doc = Document::new(
        "theory",
        Some(cli.seed),
        Some(InstanceBlock::from_instance(&instance)),
        report,
        emitter.timestamp,
    );
    emitter.emit(&doc, Some(csv))?;
    Ok(EXIT_OK)
}

fn cmd_solve(cli: &Cli, emitter: &Emitter, start: Option<&[f64]>) -> anyhow::Result<u8> {
    let config = match require_config(cli)? {
        Ok(c) => c,
        Err(e) => return emit_error(emitter, "solve", e.to_string(), EXIT_INVALID),
    };
    let instance = match config.build_instance() {
        Ok(i) => i,
        Err(e) => return emit_error(emitter, "solve", e.to_string(), EXIT_INVALID),
    };
    let start = match start {
        Some(values) => {
            if values.len() != instance.t {
                return emit_error(
                    emitter,
                    "solve",
                    format!(
                        "--start needs {} interior values, got {}",
                        instance.t,
                        values.len()
                    ),
                    EXIT_INVALID,
                );
            }
            StateVector::from_interior(values)
        }
        None => StateVector::constant(instance.t, 0.0),
    };
    match newton_solve(&instance, &start, &config.solver) {
        Ok(record) => {
            let csv = report::solution_csv(&record);
            let doc = Document::new(
                "solve",
                None,
                Some(InstanceBlock::from_instance(&instance)),
                record,
                emitter.timestamp,
            );
            emitter.emit(&doc, Some(csv))?;
            Ok(EXIT_OK)
        }
        Err(e @ (SolverError::NoConvergence { .. } | SolverError::Stalled(_))) => {
            emit_error(emitter, "solve", e.to_string(), EXIT_NO_CONVERGENCE)
        }
        Err(e) => emit_error(emitter, "solve", e.to_string(), EXIT_INVALID),
    }
}

fn cmd_cascade(cli: &Cli, emitter: &Emitter) -> anyhow::Result<u8> {
    let config = match require_config(cli)? {
        Ok(c) => c,
        Err(e) => return emit_error(emitter, "cascade", e.to_string(), EXIT_INVALID),
    };
    let instance = match config.build_instance() {
        Ok(i) => i,
        Err(e) => return emit_error(emitter, "cascade", e.to_string(), EXIT_INVALID),
    };
    let heights = match config.cascade_heights() {
        Ok(h) => h,
        Err(e) => return emit_error(emitter, "cascade", e.to_string(), EXIT_INVALID),
    };
    let report = match cascade(&instance, &heights, &config.cascade_options()) {
        Ok(r) => r,
        Err(e @ (SolverError::BadSequence { .. } | SolverError::BadOptions(_))) => {
            return emit_error(emitter, "cascade", e.to_string(), EXIT_INVALID)
        }
        Err(e) => return emit_error(emitter, "cascade", e.to_string(), EXIT_NO_CONVERGENCE),
    };
    // A level rejected before solving is a configuration problem; a chain
    // that ran but did not fully converge is a solver failure.
    let any_invalid = report
        .levels
        .iter()
        .any(|l| matches!(l.status, LevelStatus::InvalidC { .. }));
    let code = if report.converged {
        EXIT_OK
    } else if any_invalid {
        EXIT_INVALID
    } else {
        EXIT_NO_CONVERGENCE
    };
    let csv = report::cascade_csv(&report);
    let doc = Document::new(
        "cascade",
        None,
        Some(InstanceBlock::from_instance(&instance)),
        report,
        emitter.timestamp,
    );
    emitter.emit(&doc, Some(csv))?;
    Ok(code)
}

fn cmd_multistart(cli: &Cli, emitter: &Emitter, parallel: bool) -> anyhow::Result<u8> {
    let config = match require_config(cli)? {
        Ok(c) => c,
        Err(e) => return emit_error(emitter, "multistart", e.to_string(), EXIT_INVALID),
    };
    let instance = match config.build_instance() {
        Ok(i) => i,
        Err(e) => return emit_error(emitter, "multistart", e.to_string(), EXIT_INVALID),
    };
    let report = match multistart(&instance, &config.multistart_options(), cli.seed, parallel) {
        Ok(r) => r,
        Err(e) => return emit_error(emitter, "multistart", e.to_string(), EXIT_INVALID),
    };
    let code = if report.converged == 0 {
        EXIT_NO_CONVERGENCE
    } else {
        EXIT_OK
    };
    let csv = report::multistart_csv(&report);
    let doc = Document::new(
        "multistart",
        Some(cli.seed),
        Some(InstanceBlock::from_instance(&instance)),
        report,
        emitter.timestamp,
    );
    emitter.emit(&doc, Some(csv))?;
    Ok(code)
}

fn cmd_sweep(cli: &Cli, emitter: &Emitter, parallel: bool) -> anyhow::Result<u8> {
    let config = match require_config(cli)? {
        Ok(c) => c,
        Err(e) => return emit_error(emitter, "sweep", e.to_string(), EXIT_INVALID),
    };
    let instance = match config.build_instance() {
        Ok(i) => i,
        Err(e) => return emit_error(emitter, "sweep", e.to_string(), EXIT_INVALID),
    };
    // Without an explicit grid, aim inside the estimated admissible
    // interval (when there is one).
    let needs_hint = config.sweep.lambdas.is_none()
        && config.sweep.lo.is_none()
        && config.sweep.hi.is_none();
    let hint = if needs_hint {
        admissible_hint(&instance, &config, cli.seed, parallel)
    } else {
        None
    };
    let lambdas = match config.sweep.resolve_lambdas(hint) {
        Ok(l) => l,
        Err(e) => return emit_error(emitter, "sweep", e.to_string(), EXIT_INVALID),
    };
    let report = match sweep(
        &instance,
        &lambdas,
        &config.multistart_options(),
        cli.seed,
        parallel,
    ) {
        Ok(r) => r,
        Err(e) => return emit_error(emitter, "sweep", e.to_string(), EXIT_INVALID),
    };
    let code = if report.rows.iter().all(|r| r.converged == 0) {
        EXIT_NO_CONVERGENCE
    } else {
        EXIT_OK
    };
    let csv = report::sweep_csv(&report);
    let doc = Document::new(
        "sweep",
        Some(cli.seed),
        Some(InstanceBlock::from_instance(&instance)),
        report,
        emitter.timestamp,
    );
    emitter.emit(&doc, Some(csv))?;
    Ok(code)
}

/// Best-effort admissible interval for the sweep grid; `None` when the
/// estimates fail or the interval is empty.
fn admissible_hint(
    instance: &ProblemInstance,
    config: &RunConfig,
    seed: u64,
    parallel: bool,
) -> Option<(f64, f64)> {
    let report = report::theory_report(instance, &config.theory, seed, parallel).ok()?;
    let interval = report.interval;
    interval.nonempty.then_some((interval.lower, interval.upper))
}

#[derive(Serialize)]
struct ExampleChecks {
    upper_strictly_decreasing: bool,
    lower_strictly_increasing: bool,
    upper_display_bound_ok: bool,
    lower_display_bound_ok: bool,
    all_probes_negative: bool,
    all_probe_bounds_hold: bool,
    hypothesis_holds: bool,
    lambda_admissible: bool,
    all_passed: bool,
}

#[derive(Serialize)]
struct ExampleResults {
    gamma: f64,
    nu: u32,
    m_lo: u32,
    m_hi: u32,
    tables: QuotientTables,
    a0_probes: Vec<f64>,
    b0_probes: Vec<f64>,
    a0: LimitEstimate,
    b0: LimitEstimate,
    interval: ParameterInterval,
    negativity: Vec<ProbeCertificate>,
    checks: ExampleChecks,
}

fn cmd_example(
    emitter: &Emitter,
    gamma: f64,
    t: usize,
    lambda: f64,
    m_lo: Option<u32>,
    m_hi: Option<u32>,
) -> anyhow::Result<u8> {
    match build_example(gamma, t, lambda, m_lo, m_hi) {
        Ok((instance, results)) => {
            let code = if results.checks.all_passed {
                EXIT_OK
            } else {
                EXIT_INVALID
            };
            let csv = report::quotients_csv(&results.tables);
            let doc = Document::new(
                "example",
                None,
                Some(InstanceBlock::from_instance(&instance)),
                results,
                emitter.timestamp,
            );
            emitter.emit(&doc, Some(csv))?;
            Ok(code)
        }
        Err(e) => emit_error(emitter, "example", e.to_string(), EXIT_INVALID),
    }
}

fn build_example(
    gamma: f64,
    t: usize,
    lambda: f64,
    m_lo: Option<u32>,
    m_hi: Option<u32>,
) -> anyhow::Result<(ProblemInstance, ExampleResults)> {
    let g = ExampleG::new(gamma, m_hi.unwrap_or(7).max(7))?;
    let m_lo = m_lo.unwrap_or_else(|| g.nu());
    let m_hi = m_hi.unwrap_or(m_lo + 3);
    let tables = g.quotient_tables(m_lo, m_hi)?;

    let family = gallery::example_family_with_depth(gamma, m_hi.max(7))?;
    let exponents = gallery::alternating_profile(gamma, t)?;
    let instance = ProblemInstance::new(t, lambda, exponents, family)?;

    let a0_probes = g.recommended_a0_probes();
    let b0_probes = g.recommended_b0_probes();
    let a0 = estimate_a0(&instance, &a0_probes)?;
    let b0 = estimate_b0(&instance, &b0_probes)?;
    let interval = interval_main(
        a0.value,
        b0.value,
        instance.p_minus(),
        instance.p_plus(),
        instance.t,
    )?;

    // Negativity certificates at the plateau heights 2^{-m!}, evaluated in
    // exact wide arithmetic (they underflow f64 from m = 5 on).
    let mut negativity = Vec::new();
    for m in m_lo..=m_hi {
        let fm = factorial(m)?;
        let b = WideFloat::pow2(-fm);
        negativity.push(solver::probe_negativity_wide(&instance, &b)?);
    }

    let all_probes_negative = negativity.iter().all(|c| c.negative);
    let all_probe_bounds_hold = negativity.iter().all(|c| c.bound_holds);
    let lambda_admissible = interval.nonempty && interval.lower < lambda && lambda < interval.upper;
    let checks = ExampleChecks {
        upper_strictly_decreasing: tables.upper_strictly_decreasing,
        lower_strictly_increasing: tables.lower_strictly_increasing,
        upper_display_bound_ok: tables.upper_display_bound_ok,
        lower_display_bound_ok: tables.lower_display_bound_ok,
        all_probes_negative,
        all_probe_bounds_hold,
        hypothesis_holds: interval.hypothesis_holds,
        lambda_admissible,
        all_passed: tables.upper_strictly_decreasing
            && tables.lower_strictly_increasing
            && tables.upper_display_bound_ok
            && tables.lower_display_bound_ok
            && all_probes_negative
            && all_probe_bounds_hold
            && interval.hypothesis_holds
            && lambda_admissible,
    };
    let results = ExampleResults {
        gamma,
        nu: g.nu(),
        m_lo,
        m_hi,
        tables,
        a0_probes,
        b0_probes,
        a0,
        b0,
        interval,
        negativity,
        checks,
    };
    Ok((instance, results))
}
