//! Batch front end behind the `teamctl` binary.
//!
//! Every run writes `manifest.json` into `--out`; failures also write
//! `diagnostic.json` there. Nothing is written anywhere else. Outputs carry
//! no timestamps, so identical inputs give identical bytes.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::{ScenarioConfig, ScenarioKind};
use crate::error::Error;
use crate::export;
use crate::filters::FilterBank;
use crate::integrators::{monte_carlo, Simulator, TrajectoryRecorder};
use crate::model::{DecentralizedStrategy, LqTeamSpec, TimeGrid, Trajectory};
use crate::optimality::{
    adjoint_consistency_check, closure_gap_report, standard_battery, verify_person_by_person_with, ClosureGapReport,
    CostEstimate, VerificationReport, BATTERY_VERSION,
};
use crate::oracle::centralized_lqg;
use crate::riccati::{solve_sigma_lyapunov, FixedPointConfig};
use crate::rng::NoiseSource;
use crate::team::{solve_broadcast_team, solve_filtering_team, solve_lq_team, solve_lq_team_n, TeamSolution};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_SOLVER: i32 = 3;
pub const EXIT_VERIFICATION: i32 = 4;

/// Version of the config schema read by [`ScenarioConfig`].
pub const CONFIG_SCHEMA_VERSION: &str = "1";

/// Trajectories recorded by `verify` for the adjoint check.
const ADJOINT_PATHS: u64 = 4;

#[derive(Debug, Parser)]
#[command(name = "teamctl", version, about = "Solve, simulate and verify decentralized LQ team problems")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Static message broadcast to several receivers.
    SolveBroadcast(RunArgs),
    /// Coupled LQ team (any number of decision makers).
    SolveLqTeam(RunArgs),
    /// Distributed filtering team (no control in the dynamics).
    SolveFiltering(RunArgs),
    /// Solve, then simulate closed-loop paths.
    Simulate(RunArgs),
    /// Solve, then run the person-by-person battery and adjoint checks.
    Verify(RunArgs),
    /// Centralized single-DM LQG reference.
    OracleLqg(RunArgs),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    #[default]
    Json,
}

#[derive(Clone, Debug, Args)]
pub struct RunArgs {
    /// Scenario config (JSON).
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory; created if missing.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Monte Carlo paths (default: 10 for simulate, 1000 for verify).
    #[arg(long)]
    pub paths: Option<u64>,
    /// Overrides the config's time step.
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    /// Overrides the fixed-point tolerance.
    #[arg(long)]
    pub tol: Option<f64>,
    /// Worker cap; results do not depend on it.
    #[arg(long)]
    pub threads: Option<usize>,
    /// simulate: one file per path instead of one long table.
    #[arg(long)]
    pub per_path: bool,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Self::SolveBroadcast(_) => "solve-broadcast",
            Self::SolveLqTeam(_) => "solve-lq-team",
            Self::SolveFiltering(_) => "solve-filtering",
            Self::Simulate(_) => "simulate",
            Self::Verify(_) => "verify",
            Self::OracleLqg(_) => "oracle-lqg",
        }
    }

    pub fn args(&self) -> &RunArgs {
        match self {
            Self::SolveBroadcast(a)
            | Self::SolveLqTeam(a)
            | Self::SolveFiltering(a)
            | Self::Simulate(a)
            | Self::Verify(a)
            | Self::OracleLqg(a) => a,
        }
    }
}

#[derive(Serialize)]
struct GridRecord {
    #[serde(rename = "T")]
    horizon: f64,
    dt: f64,
    steps: usize,
}

#[derive(Serialize)]
struct Versions {
    #[serde(rename = "team-lqg")]
    crate_version: &'static str,
    config_schema: &'static str,
    battery: &'static str,
}

#[derive(Serialize)]
struct Manifest {
    subcommand: &'static str,
    config_sha256: String,
    scenario: Option<ScenarioKind>,
    seed: u64,
    paths: Option<u64>,
    grid: Option<GridRecord>,
    format: Format,
    tolerance: Option<f64>,
    versions: Versions,
    exit_code: i32,
    outputs: Vec<String>,
}

#[derive(Serialize)]
struct Diagnostic {
    exit_code: i32,
    kind: &'static str,
    message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    node: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    condition: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    iterations: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    residual: Option<f64>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    failures: Vec<String>,
}

/// A failed run: exit code plus what goes into `diagnostic.json`.
struct Failure {
    code: i32,
    diagnostic: Diagnostic,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let message = e.to_string();
        let (code, kind) = match &e {
            Error::Config(_) | Error::Dimension(_) | Error::InvalidArgument(_) | Error::Inadmissible(_) => {
                (EXIT_CONFIG, "config")
            }
            Error::Io(_) | Error::Json(_) => (EXIT_CONFIG, "io"),
            Error::SingularCoupling { .. } => (EXIT_SOLVER, "singular_coupling"),
            Error::NonConvergence { .. } => (EXIT_SOLVER, "non_convergence"),
            Error::IntegrationBlowup { .. } => (EXIT_SOLVER, "integration_blowup"),
            Error::Degenerate { .. } => (EXIT_SOLVER, "degenerate"),
        };
        let mut d = Diagnostic {
            exit_code: code,
            kind,
            message,
            node: None,
            condition: None,
            iterations: None,
            residual: None,
            failures: Vec::new(),
        };
        match e {
            Error::SingularCoupling { node, condition } => {
                d.node = Some(node);
                d.condition = Some(condition);
            }
            Error::NonConvergence { iterations, residual, .. } => {
                d.iterations = Some(iterations);
                d.residual = Some(residual);
            }
            Error::IntegrationBlowup { node, .. } | Error::Degenerate { node, .. } => d.node = Some(node),
            _ => {}
        }
        Failure { code, diagnostic: d }
    }
}

/// Collects output files under the output directory.
struct Outputs {
    dir: PathBuf,
    written: Vec<String>,
}

impl Outputs {
    fn write(&mut self, name: &str, contents: &str) -> Result<(), Error> {
        debug_assert!(!name.contains('/') && !name.contains(".."));
        std::fs::write(self.dir.join(name), contents)?;
        self.written.push(name.to_string());
        Ok(())
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), Error> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(name, &text)
    }
}

struct Context {
    config: ScenarioConfig,
    grid: TimeGrid,
    args: RunArgs,
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Runs one subcommand and returns the process exit code.
pub fn run(cli: &Cli) -> i32 {
    let command = &cli.command;
    let args = command.args();
    if let Err(e) = std::fs::create_dir_all(&args.out) {
        eprintln!("teamctl: cannot create {}: {e}", args.out.display());
        return EXIT_CONFIG;
    }
    let mut outputs = Outputs {
        dir: args.out.clone(),
        written: Vec::new(),
    };
    let bytes = std::fs::read(&args.config);
    let mut manifest = Manifest {
        subcommand: command.name(),
        config_sha256: bytes.as_ref().map(|b| sha256_hex(b)).unwrap_or_default(),
        scenario: None,
        seed: args.seed,
        paths: None,
        grid: None,
        format: args.format,
        tolerance: args.tol,
        versions: Versions {
            crate_version: env!("CARGO_PKG_VERSION"),
            config_schema: CONFIG_SCHEMA_VERSION,
            battery: BATTERY_VERSION,
        },
        exit_code: EXIT_OK,
        outputs: Vec::new(),
    };

    let result = (|| -> Result<(), Failure> {
        let bytes = bytes.map_err(|e| Error::Config(format!("cannot read {}: {e}", args.config.display())))?;
        let text = String::from_utf8(bytes).map_err(|_| Error::Config("config is not UTF-8".into()))?;
        let config = ScenarioConfig::from_json(&text)?;
        let grid = config.grid(args.dt)?;
        manifest.scenario = Some(config.scenario);
        manifest.grid = Some(GridRecord {
            horizon: grid.horizon(),
            dt: grid.dt(),
            steps: grid.steps(),
        });
        let ctx = Context {
            config,
            grid,
            args: args.clone(),
        };
        match command {
            Command::SolveBroadcast(_) => {
                expect_scenario(&ctx, ScenarioKind::Broadcast)?;
                let sol = solve(&ctx)?;
                write_solution(&ctx, &sol, &mut outputs)?;
            }
            Command::SolveLqTeam(_) => {
                expect_scenario(&ctx, ScenarioKind::LqTeam)?;
                let sol = solve(&ctx)?;
                write_solution(&ctx, &sol, &mut outputs)?;
            }
            Command::SolveFiltering(_) => {
                expect_scenario(&ctx, ScenarioKind::Filtering)?;
                let sol = solve(&ctx)?;
                write_solution(&ctx, &sol, &mut outputs)?;
            }
            Command::Simulate(_) => {
                let paths = args.paths.unwrap_or(10);
                manifest.paths = Some(paths);
                simulate(&ctx, paths, &mut outputs)?;
            }
            Command::Verify(_) => {
                let paths = args.paths.unwrap_or(1000);
                manifest.paths = Some(paths);
                verify(&ctx, paths, &mut outputs)?;
            }
            Command::OracleLqg(_) => {
                expect_scenario(&ctx, ScenarioKind::LqTeam)?;
                oracle(&ctx, &mut outputs)?;
            }
        }
        Ok(())
    })();

    if let Err(f) = result {
        manifest.exit_code = f.code;
        eprintln!("teamctl: {}", f.diagnostic.message);
        if let Err(e) = outputs.json("diagnostic.json", &f.diagnostic) {
            eprintln!("teamctl: cannot write diagnostic: {e}");
        }
    }
    manifest.outputs = outputs.written.clone();
    manifest.outputs.push("manifest.json".into());
    if let Err(e) = outputs.json("manifest.json", &manifest) {
        eprintln!("teamctl: cannot write manifest: {e}");
        if manifest.exit_code == EXIT_OK {
            return EXIT_CONFIG;
        }
    }
    manifest.exit_code
}

fn expect_scenario(ctx: &Context, kind: ScenarioKind) -> Result<(), Error> {
    if ctx.config.scenario != kind {
        return Err(Error::Config(format!(
            "config describes a {} scenario, this subcommand needs {}",
            ctx.config.scenario.name(),
            kind.name()
        )));
    }
    Ok(())
}

fn fixed_point(ctx: &Context) -> FixedPointConfig {
    let mut fp = ctx.config.fixed_point();
    if let Some(t) = ctx.args.tol {
        fp.tol = t;
    }
    fp
}

/// The team spec the scenario runs on (broadcast scenarios are embedded).
fn team_spec(ctx: &Context) -> Result<LqTeamSpec, Error> {
    match ctx.config.scenario {
        ScenarioKind::Broadcast => Ok(ctx.config.broadcast_spec(&ctx.grid)?.to_team_spec()),
        _ => ctx.config.lq_spec(&ctx.grid),
    }
}

fn solve(ctx: &Context) -> Result<TeamSolution, Error> {
    let grid = &ctx.grid;
    match ctx.config.scenario {
        ScenarioKind::Broadcast => solve_broadcast_team(&ctx.config.broadcast_spec(grid)?, grid),
        ScenarioKind::Filtering => solve_filtering_team(&ctx.config.lq_spec(grid)?, grid),
        ScenarioKind::LqTeam => {
            let spec = ctx.config.lq_spec(grid)?;
            if spec.num_agents() <= 2 {
                solve_lq_team(&spec, grid, fixed_point(ctx))
            } else {
                solve_lq_team_n(&spec, grid, fixed_point(ctx))
            }
        }
    }
}

#[derive(Serialize)]
struct SolutionDocument<'a> {
    strategy: &'a DecentralizedStrategy,
    report: &'a crate::model::SolverReport,
}

fn write_solution(ctx: &Context, sol: &TeamSolution, out: &mut Outputs) -> Result<(), Error> {
    let grid = &ctx.grid;
    match ctx.args.format {
        Format::Json => out.json(
            "solution.json",
            &SolutionDocument {
                strategy: &sol.strategy,
                report: &sol.report,
            },
        ),
        Format::Csv => {
            out.json("report.json", &sol.report)?;
            for i in 0..sol.strategy.num_agents() {
                out.write(&format!("strategy_dm{i}.csv"), &export::strategy_csv(&sol.strategy, i, grid))?;
            }
            for (i, p) in sol.report.filter_covariances.iter().enumerate() {
                out.write(&format!("covariance_dm{i}.csv"), &export::matrix_schedule_csv("p", p, grid))?;
            }
            for (i, k) in sol.report.riccati.iter().enumerate() {
                out.write(&format!("riccati_dm{i}.csv"), &export::matrix_schedule_csv("k", k, grid))?;
            }
            for (i, r) in sol.report.offsets.iter().enumerate() {
                out.write(&format!("offsets_dm{i}.csv"), &export::vector_schedule_csv("r", r, grid))?;
            }
            Ok(())
        }
    }
}

fn record_paths(
    spec: &LqTeamSpec,
    strategy: &DecentralizedStrategy,
    bank: &FilterBank,
    grid: &TimeGrid,
    paths: u64,
    seed: u64,
    threads: Option<usize>,
) -> Result<Vec<(Trajectory, f64)>, Error> {
    let sim = Simulator::new(spec, Some(strategy), Some(bank), grid)?;
    let noise = NoiseSource::new(seed);
    monte_carlo(paths, threads, |p| {
        let mut rec = TrajectoryRecorder::default();
        let mut acc = crate::optimality::CostAccumulator::new(spec, grid);
        sim.run_path(&noise, p, &mut |v: &crate::integrators::NodeView<'_>| {
            use crate::integrators::PathObserver;
            rec.observe(v);
            acc.observe(v);
        })?;
        let mut tr = rec.trajectory.expect("grid has nodes");
        tr.seed = seed;
        Ok((tr, acc.total()))
    })
    .into_iter()
    .collect()
}

#[derive(Serialize)]
struct SimulationSummary {
    seed: u64,
    paths: u64,
    cost: CostEstimate,
}

fn simulate(ctx: &Context, paths: u64, out: &mut Outputs) -> Result<(), Error> {
    let sol = solve(ctx)?;
    let spec = team_spec(ctx)?;
    let bank = FilterBank::for_strategy(&spec, &sol.strategy, &ctx.grid)?;
    let recs = record_paths(&spec, &sol.strategy, &bank, &ctx.grid, paths, ctx.args.seed, ctx.args.threads)?;
    let costs: Vec<f64> = recs.iter().map(|(_, c)| *c).collect();
    let trajectories: Vec<Trajectory> = recs.into_iter().map(|(t, _)| t).collect();
    out.json(
        "simulation.json",
        &SimulationSummary {
            seed: ctx.args.seed,
            paths,
            cost: CostEstimate::from_samples(&costs),
        },
    )?;
    match (ctx.args.format, ctx.args.per_path) {
        (Format::Csv, false) => out.write("trajectories.csv", &export::trajectories_csv(&trajectories)),
        (Format::Csv, true) => trajectories.iter().try_for_each(|t| {
            out.write(
                &format!("trajectory_{}.csv", t.path),
                &export::trajectories_csv(std::slice::from_ref(t)),
            )
        }),
        (Format::Json, false) => out.json("trajectories.json", &trajectories),
        (Format::Json, true) => trajectories
            .iter()
            .try_for_each(|t| out.json(&format!("trajectory_{}.json", t.path), t)),
    }
}

#[derive(Serialize)]
struct VerificationDocument<'a> {
    verification: &'a VerificationReport,
    closure: Option<&'a ClosureGapReport>,
}

fn verify(ctx: &Context, paths: u64, out: &mut Outputs) -> Result<(), Failure> {
    let sol = solve(ctx)?;
    let spec = team_spec(ctx)?;
    let grid = &ctx.grid;
    let (seed, threads) = (ctx.args.seed, ctx.args.threads);
    let battery = standard_battery(spec.num_agents());
    let mut report = verify_person_by_person_with(&spec, &sol.strategy, &battery, grid, paths, seed, threads)?;

    // adjoint identities on noise-free state paths
    let mut quiet = spec.clone();
    quiet.g = crate::model::MatrixSchedule::zeros(spec.state_dim(), spec.noise_dim());
    let quiet_bank = FilterBank::for_strategy(&quiet, &sol.strategy, grid)?;
    let recs = record_paths(&quiet, &sol.strategy, &quiet_bank, grid, ADJOINT_PATHS, seed, threads)?;
    let trajectories: Vec<Trajectory> = recs.into_iter().map(|(t, _)| t).collect();
    let sigma = solve_sigma_lyapunov(&spec.a, &spec.h, &spec.terminal, grid)?;
    report.adjoint = Some(adjoint_consistency_check(&spec, &sigma, &trajectories, grid)?);
    report.refresh();

    let closure = if spec.has_feedback_channels() {
        None
    } else {
        Some(closure_gap_report(&spec, &sol.strategy, grid, paths, seed, threads)?)
    };
    out.json(
        "verification.json",
        &VerificationDocument {
            verification: &report,
            closure: closure.as_ref(),
        },
    )?;
    if ctx.args.format == Format::Csv {
        out.write("verification.csv", &report.to_csv())?;
    }
    let closure_ok = closure.as_ref().is_none_or(|c| c.pass);
    if report.pass && closure_ok {
        return Ok(());
    }
    let mut failures: Vec<String> = report
        .entries
        .iter()
        .filter(|e| !e.pass)
        .map(|e| {
            let dm = e.dm.map_or_else(|| "-".to_string(), |d| d.to_string());
            format!("{} (dm {dm}): dJ = {:e}, se = {:e}", e.perturbation, e.delta, e.std_error)
        })
        .collect();
    failures.extend(
        report
            .gradient
            .iter()
            .filter(|g| !g.pass)
            .map(|g| format!("conditional gradient of dm {} is {:e} at node {}", g.dm, g.max_norm, g.worst_node)),
    );
    if let Some(a) = &report.adjoint {
        failures.extend(a.failures.iter().cloned());
    }
    if let Some(c) = &closure {
        failures.extend(
            c.entries
                .iter()
                .filter(|e| c.uncontrolled && !e.within_noise)
                .map(|e| format!("closure gap of dm {} is {:e} (se {:e})", e.dm, e.gap, e.std_error)),
        );
    }
    Err(Failure {
        code: EXIT_VERIFICATION,
        diagnostic: Diagnostic {
            exit_code: EXIT_VERIFICATION,
            kind: "verification_failure",
            message: format!("{} verification check(s) failed", failures.len()),
            node: None,
            condition: None,
            iterations: None,
            residual: None,
            failures,
        },
    })
}

fn oracle(ctx: &Context, out: &mut Outputs) -> Result<(), Error> {
    let spec = ctx.config.lq_spec(&ctx.grid)?;
    if spec.num_agents() != 1 {
        return Err(Error::Config(format!(
            "the centralized reference takes a single decision maker, the config has {}",
            spec.num_agents()
        )));
    }
    let lqg = centralized_lqg(&spec, &ctx.grid)?;
    match ctx.args.format {
        Format::Json => out.json("oracle.json", &lqg),
        Format::Csv => {
            out.write("oracle_gains.csv", &export::matrix_schedule_csv("gain", &lqg.gains, &ctx.grid))?;
            out.write("oracle_offsets.csv", &export::vector_schedule_csv("offset", &lqg.offsets, &ctx.grid))?;
            out.write("oracle_riccati.csv", &export::matrix_schedule_csv("k", &lqg.riccati, &ctx.grid))?;
            out.write(
                "oracle_covariance.csv",
                &export::matrix_schedule_csv("p", &lqg.filter_covariance, &ctx.grid),
            )
        }
    }
}

/// Parses `argv` and runs it.
pub fn main_with_args<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    match Cli::try_parse_from(argv) {
        Ok(cli) => run(&cli),
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            code
        }
    }
}

/// Lists every file under `dir` (relative paths, sorted).
pub fn list_outputs(dir: &Path) -> std::io::Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in std::fs::read_dir(dir)? {
        let p = entry?.path();
        if let Ok(rel) = p.strip_prefix(dir) {
            out.push(rel.to_path_buf());
        }
    }
    out.sort();
    Ok(out)
}
