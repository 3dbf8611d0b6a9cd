//! Command-line front end: tableau export, integration runs, convergence
//! studies and energy-drift reports for the built-in problems.
//!
//! Every subcommand takes its settings from flags, from a JSON config file
//! (`--config`), or both, with flags winning.  `--dump-config` prints the
//! fully resolved configuration as JSON and exits, so any run can be
//! reproduced from a file alone.
//!
//! Exit codes: 0 success, 2 usage or configuration error, 3 numerical
//! failure.

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use std::path::PathBuf;
use std::process::ExitCode;

use hbvm::integrator::{
    energy_drift, integrate, order_study, order_study_csv, IntegrationPlan, Trajectory,
};
use hbvm::legendre::build_spectral;
use hbvm::problems::builtin;
use hbvm::quadrature::gauss_rule;
use hbvm::solver::{IterationScheme, SolverConfig};
use hbvm::tableau::{build_operators, rk_tableau, rkn_tableau, TableauExport};
use hbvm::Error;

#[derive(Parser)]
#[command(
    name = "hbvm",
    version,
    about = "HBVM(k, s) integrators for ODE initial-value problems"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Export the HBVM(k, s) tableau in Runge-Kutta or Nystrom form.
    Tableau(TableauArgs),
    /// Integrate a built-in problem and write the trajectory.
    Integrate(IntegrateArgs),
    /// Global-error convergence study under repeated halving of h.
    OrderStudy(OrderStudyArgs),
    /// Energy drift of a Hamiltonian run, optionally against a control k.
    EnergyDrift(EnergyDriftArgs),
}

enum CliError {
    Usage(String),
    Numeric(String),
}

type CliResult = Result<(), CliError>;

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidArgument(_)
            | Error::OutOfDomain { .. }
            | Error::UnknownProblem { .. } => CliError::Usage(e.to_string()),
            other => CliError::Numeric(other.to_string()),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Tableau(args) => run_tableau(args),
        Command::Integrate(args) => run_integrate(args),
        Command::OrderStudy(args) => run_order_study(args),
        Command::EnergyDrift(args) => run_energy_drift(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Numeric(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
    }
}

fn load_config<T: for<'de> Deserialize<'de> + Default>(
    path: &Option<PathBuf>,
) -> Result<T, CliError> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| usage(format!("cannot read config {}: {e}", p.display())))?;
            serde_json::from_str(&text)
                .map_err(|e| usage(format!("invalid config {}: {e}", p.display())))
        }
    }
}

fn dump<T: Serialize>(config: &T) -> CliResult {
    println!(
        "{}",
        serde_json::to_string_pretty(config).expect("config serializes")
    );
    Ok(())
}

fn write_output(out: &Option<String>, content: &str) -> CliResult {
    match out {
        None => {
            print!("{content}");
            Ok(())
        }
        Some(path) => {
            std::fs::write(path, content).map_err(|e| usage(format!("cannot write {path}: {e}")))
        }
    }
}

fn require<T>(value: Option<T>, flag: &str) -> Result<T, CliError> {
    value.ok_or_else(|| usage(format!("{flag} is required (flag or config file)")))
}

// ---------------------------------------------------------------------------
// Shared solver options
// ---------------------------------------------------------------------------

#[derive(Args, Clone)]
struct SolverArgs {
    /// Residual tolerance, relative to |gamma| + 1.
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iters: Option<usize>,
    /// Iteration scheme: fixed-point | simplified-newton.
    #[arg(long)]
    scheme: Option<String>,
    /// Reuse the frozen-Jacobian factorization across steps.
    #[arg(long)]
    jacobian_reuse: Option<bool>,
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
struct SolverSection {
    tol: Option<f64>,
    max_iters: Option<usize>,
    scheme: Option<String>,
    jacobian_reuse: Option<bool>,
}

impl SolverSection {
    fn merged(args: &SolverArgs, file: SolverSection) -> SolverSection {
        SolverSection {
            tol: args.tol.or(file.tol),
            max_iters: args.max_iters.or(file.max_iters),
            scheme: args.scheme.clone().or(file.scheme),
            jacobian_reuse: args.jacobian_reuse.or(file.jacobian_reuse),
        }
    }

    /// Fill defaults in place (so dumped configs are fully explicit) and
    /// build the solver configuration.
    fn resolve(&mut self) -> Result<SolverConfig, CliError> {
        let defaults = SolverConfig::default();
        let tol = *self.tol.get_or_insert(defaults.tol);
        let max_iters = *self.max_iters.get_or_insert(defaults.max_iters);
        let scheme_name = self
            .scheme
            .get_or_insert_with(|| "fixed-point".to_string())
            .clone();
        let scheme = match scheme_name.as_str() {
            "fixed-point" => IterationScheme::FixedPoint,
            "simplified-newton" => IterationScheme::SimplifiedNewton,
            other => {
                return Err(usage(format!(
                    "unknown scheme '{other}' (expected fixed-point or simplified-newton)"
                )))
            }
        };
        let jacobian_reuse = *self.jacobian_reuse.get_or_insert(defaults.jacobian_reuse);
        Ok(SolverConfig {
            tol,
            max_iters,
            scheme,
            jacobian_reuse,
        })
    }
}

fn check_format(format: &str) -> CliResult {
    match format {
        "csv" | "json" => Ok(()),
        other => Err(usage(format!(
            "unknown format '{other}' (expected csv or json)"
        ))),
    }
}

// ---------------------------------------------------------------------------
// tableau
// ---------------------------------------------------------------------------

#[derive(Args)]
struct TableauArgs {
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    s: Option<usize>,
    /// Tableau form: rk | rkn.
    #[arg(long)]
    form: Option<String>,
    /// Output format: csv | json.
    #[arg(long)]
    format: Option<String>,
    /// Output file (stdout when omitted).
    #[arg(long)]
    out: Option<String>,
    /// JSON config file; flags override its entries.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Print the resolved configuration as JSON and exit.
    #[arg(long)]
    dump_config: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
struct TableauConfig {
    k: Option<usize>,
    s: Option<usize>,
    form: Option<String>,
    format: Option<String>,
    out: Option<String>,
}

fn run_tableau(args: TableauArgs) -> CliResult {
    let file: TableauConfig = load_config(&args.config)?;
    let mut config = TableauConfig {
        k: args.k.or(file.k),
        s: args.s.or(file.s),
        form: args.form.or(file.form),
        format: args.format.or(file.format),
        out: args.out.or(file.out),
    };
    let form = config.form.get_or_insert_with(|| "rk".to_string()).clone();
    let format = config
        .format
        .get_or_insert_with(|| "csv".to_string())
        .clone();
    if args.dump_config {
        return dump(&config);
    }
    let k = require(config.k, "--k")?;
    let s = require(config.s, "--s")?;
    check_format(&format)?;
    if form != "rk" && form != "rkn" {
        return Err(usage(format!("unknown form '{form}' (expected rk or rkn)")));
    }

    let rule = gauss_rule(k)?;
    let ops = build_operators(s, &rule)?;
    let spectral = build_spectral(s)?;
    let (ortho, integ) = ops.identity_residuals(&spectral);
    eprintln!(
        "operator identity residuals: |P'WP - I|max = {ortho:.3e}, |P'WI - X|max = {integ:.3e}"
    );

    let content = match (format.as_str(), form.as_str()) {
        ("json", _) => {
            let mut doc = TableauExport::new(&ops, &spectral).to_json();
            doc.push('\n');
            doc
        }
        ("csv", "rk") => rk_tableau(&ops).to_csv(),
        ("csv", "rkn") => rkn_tableau(&ops, &spectral).to_csv(),
        _ => unreachable!(),
    };
    write_output(&config.out, &content)
}

// ---------------------------------------------------------------------------
// integrate
// ---------------------------------------------------------------------------

#[derive(Args)]
struct IntegrateArgs {
    /// Name of a built-in problem.
    #[arg(long)]
    problem: Option<String>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    s: Option<usize>,
    #[arg(long)]
    t0: Option<f64>,
    #[arg(long)]
    tf: Option<f64>,
    #[arg(long)]
    steps: Option<usize>,
    /// Interior dense-output samples per step.
    #[arg(long)]
    dense: Option<usize>,
    /// Seed each step's iteration with the previous gamma.
    #[arg(long)]
    warm_start: Option<bool>,
    #[command(flatten)]
    solver: SolverArgs,
    /// Output format: csv | json.
    #[arg(long)]
    format: Option<String>,
    /// Output file (stdout when omitted; the summary then goes to stderr).
    #[arg(long)]
    out: Option<String>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    dump_config: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
struct IntegrateConfig {
    problem: Option<String>,
    k: Option<usize>,
    s: Option<usize>,
    t0: Option<f64>,
    tf: Option<f64>,
    steps: Option<usize>,
    dense: Option<usize>,
    warm_start: Option<bool>,
    #[serde(default)]
    solver: SolverSection,
    format: Option<String>,
    out: Option<String>,
}

fn trajectory_content(trajectory: &Trajectory, format: &str) -> String {
    match format {
        "json" => {
            let mut doc = trajectory.to_json();
            doc.push('\n');
            doc
        }
        _ => trajectory.to_csv(),
    }
}

fn integrate_summary(trajectory: &Trajectory) -> String {
    let max_iters = trajectory.iterations.iter().copied().max().unwrap_or(0);
    let mut summary = format!(
        "steps={} max_iterations={max_iters}",
        trajectory.len().saturating_sub(1)
    );
    if let Some(drift) = trajectory.max_energy_drift() {
        summary.push_str(&format!(" max_energy_drift={drift:.3e}"));
    }
    summary
}

fn run_integrate(args: IntegrateArgs) -> CliResult {
    let file: IntegrateConfig = load_config(&args.config)?;
    let mut config = IntegrateConfig {
        problem: args.problem.clone().or(file.problem),
        k: args.k.or(file.k),
        s: args.s.or(file.s),
        t0: args.t0.or(file.t0),
        tf: args.tf.or(file.tf),
        steps: args.steps.or(file.steps),
        dense: args.dense.or(file.dense),
        warm_start: args.warm_start.or(file.warm_start),
        solver: SolverSection::merged(&args.solver, file.solver),
        format: args.format.clone().or(file.format),
        out: args.out.clone().or(file.out),
    };
    config.t0.get_or_insert(0.0);
    config.dense.get_or_insert(0);
    config.warm_start.get_or_insert(true);
    let format = config
        .format
        .get_or_insert_with(|| "csv".to_string())
        .clone();
    let solver = config.solver.resolve()?;
    if args.dump_config {
        return dump(&config);
    }
    let name = require(config.problem.clone(), "--problem")?;
    let k = require(config.k, "--k")?;
    let s = require(config.s, "--s")?;
    let tf = require(config.tf, "--tf")?;
    let steps = require(config.steps, "--steps")?;
    check_format(&format)?;

    let entry = builtin(&name)?;
    let mut plan = IntegrationPlan::new(config.t0.unwrap(), tf, steps, k, s);
    plan.solver = solver;
    plan.dense_samples = config.dense.unwrap();
    plan.warm_start = config.warm_start.unwrap();

    match integrate(&entry.problem, &entry.default_init, &plan) {
        Ok(trajectory) => {
            let content = trajectory_content(&trajectory, &format);
            write_output(&config.out, &content)?;
            let summary = integrate_summary(&trajectory);
            if config.out.is_some() {
                println!("{summary}");
            } else {
                eprintln!("{summary}");
            }
            Ok(())
        }
        Err(Error::Aborted {
            step,
            partial,
            source,
        }) => {
            // Flag the partial output, then fail with the numerical error.
            let mut content = trajectory_content(&partial, &format);
            content.push_str(&format!("# aborted at step {step}: {source}\n"));
            write_output(&config.out, &content)?;
            Err(CliError::Numeric(format!(
                "integration aborted at step {step}: {source} (partial output flagged)"
            )))
        }
        Err(other) => Err(other.into()),
    }
}

// ---------------------------------------------------------------------------
// order-study
// ---------------------------------------------------------------------------

#[derive(Args)]
struct OrderStudyArgs {
    #[arg(long)]
    problem: Option<String>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    s: Option<usize>,
    #[arg(long)]
    t0: Option<f64>,
    #[arg(long)]
    tf: Option<f64>,
    /// Steps of the coarsest rung; doubled on every following rung.
    #[arg(long)]
    base_steps: Option<usize>,
    /// Number of rungs in the h-ladder (at least 4).
    #[arg(long)]
    rungs: Option<usize>,
    #[command(flatten)]
    solver: SolverArgs,
    #[arg(long)]
    out: Option<String>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    dump_config: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
struct OrderStudyConfig {
    problem: Option<String>,
    k: Option<usize>,
    s: Option<usize>,
    t0: Option<f64>,
    tf: Option<f64>,
    base_steps: Option<usize>,
    rungs: Option<usize>,
    #[serde(default)]
    solver: SolverSection,
    out: Option<String>,
}

fn run_order_study(args: OrderStudyArgs) -> CliResult {
    let file: OrderStudyConfig = load_config(&args.config)?;
    let mut config = OrderStudyConfig {
        problem: args.problem.clone().or(file.problem),
        k: args.k.or(file.k),
        s: args.s.or(file.s),
        t0: args.t0.or(file.t0),
        tf: args.tf.or(file.tf),
        base_steps: args.base_steps.or(file.base_steps),
        rungs: args.rungs.or(file.rungs),
        solver: SolverSection::merged(&args.solver, file.solver),
        out: args.out.clone().or(file.out),
    };
    config.t0.get_or_insert(0.0);
    let solver = config.solver.resolve()?;
    if args.dump_config {
        return dump(&config);
    }
    let name = require(config.problem.clone(), "--problem")?;
    let k = require(config.k, "--k")?;
    let s = require(config.s, "--s")?;
    let tf = require(config.tf, "--tf")?;
    let base_steps = require(config.base_steps, "--base-steps")?;
    let rungs = require(config.rungs, "--rungs")?;

    let entry = builtin(&name)?;
    let mut plan = IntegrationPlan::new(config.t0.unwrap(), tf, base_steps, k, s);
    plan.solver = solver;
    let rows = order_study(&entry.problem, &entry.default_init, &plan, rungs)?;
    write_output(&config.out, &order_study_csv(&rows))?;
    let final_slope = rows
        .iter()
        .rfind(|r| r.reliable && r.slope.is_some())
        .or_else(|| rows.iter().rfind(|r| r.slope.is_some()));
    match final_slope.and_then(|r| r.slope) {
        Some(slope) => {
            let line = format!("final slope: {slope:.3}");
            if config.out.is_some() {
                println!("{line}");
            } else {
                eprintln!("{line}");
            }
        }
        None => eprintln!("no slope available"),
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// energy-drift
// ---------------------------------------------------------------------------

#[derive(Args)]
struct EnergyDriftArgs {
    #[arg(long)]
    problem: Option<String>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    s: Option<usize>,
    #[arg(long)]
    t0: Option<f64>,
    #[arg(long)]
    tf: Option<f64>,
    #[arg(long)]
    steps: Option<usize>,
    /// Also run a control with this k and print the drift ratio.
    #[arg(long)]
    compare_k: Option<usize>,
    #[command(flatten)]
    solver: SolverArgs,
    #[arg(long)]
    out: Option<String>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    dump_config: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
struct EnergyDriftConfig {
    problem: Option<String>,
    k: Option<usize>,
    s: Option<usize>,
    t0: Option<f64>,
    tf: Option<f64>,
    steps: Option<usize>,
    compare_k: Option<usize>,
    #[serde(default)]
    solver: SolverSection,
    out: Option<String>,
}

fn run_energy_drift(args: EnergyDriftArgs) -> CliResult {
    let file: EnergyDriftConfig = load_config(&args.config)?;
    let mut config = EnergyDriftConfig {
        problem: args.problem.clone().or(file.problem),
        k: args.k.or(file.k),
        s: args.s.or(file.s),
        t0: args.t0.or(file.t0),
        tf: args.tf.or(file.tf),
        steps: args.steps.or(file.steps),
        compare_k: args.compare_k.or(file.compare_k),
        solver: SolverSection::merged(&args.solver, file.solver),
        out: args.out.clone().or(file.out),
    };
    config.t0.get_or_insert(0.0);
    let solver = config.solver.resolve()?;
    if args.dump_config {
        return dump(&config);
    }
    let name = require(config.problem.clone(), "--problem")?;
    let k = require(config.k, "--k")?;
    let s = require(config.s, "--s")?;
    let tf = require(config.tf, "--tf")?;
    let steps = require(config.steps, "--steps")?;

    let entry = builtin(&name)?;
    let mut plan = IntegrationPlan::new(config.t0.unwrap(), tf, steps, k, s);
    plan.solver = solver;
    let drift = energy_drift(&entry.problem, &entry.default_init, &plan)?;
    write_output(&config.out, &drift.to_csv())?;
    let mut lines = format!("max |dH| = {:.3e}", drift.max_abs);
    if let Some(control_k) = config.compare_k {
        let mut control_plan = plan.clone();
        control_plan.k = control_k;
        let control = energy_drift(&entry.problem, &entry.default_init, &control_plan)?;
        let ratio = control.max_abs / drift.max_abs.max(f64::MIN_POSITIVE);
        lines.push_str(&format!(
            "\ncontrol k={control_k}: max |dH| = {:.3e}\ndrift ratio (k={control_k} vs k={k}): {ratio:.3e}",
            control.max_abs
        ));
    }
    if config.out.is_some() {
        println!("{lines}");
    } else {
        eprintln!("{lines}");
    }
    Ok(())
}
