//! `mgplan`: cluster profiles, plan investments, check plans, simulate
//! frequency responses and export the master problem.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use mgplan_core::io::{self, PlanReport, ReportedPlan};
use mgplan_core::orchestrator::{check_plan, run_three_stage, sensitivity_sweep, RunConfig, RunStatus, SweepAxis};
use mgplan_core::planner::{build_master, Calendar, ExchangeBounds, MasterConfig};
use mgplan_core::scenario::cluster_days;
use mgplan_core::{freq, InstanceError, IoError, PlannerError, PlanningInstance, RepresentativeDay, RunError};
use serde::{Deserialize, Serialize};

const EXIT_VALIDATION: u8 = 2;
const EXIT_INFEASIBLE: u8 = 3;
const EXIT_NOT_CONVERGED: u8 = 4;

#[derive(Parser)]
#[command(name = "mgplan", version, about = "Microgrid investment planning with frequency-secure islanding")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Cluster a year of daily profiles into representative days.
    Cluster(ClusterArgs),
    /// Run the planning loop and write the plan, cost and metric files.
    Plan(PlanArgs),
    /// Re-dispatch a saved plan under the instance's exchange caps and print
    /// its per-block frequency metrics and corrective deviations as CSV.
    Check(CheckArgs),
    /// Simulate the frequency response of a committed fleet to a step.
    Simulate(SimulateArgs),
    /// Write the first master problem as a fixed-format MPS file.
    ExportMps(ExportArgs),
    /// Re-run the plan over representative-day counts or flexibility settings.
    Sweep(SweepArgs),
}

#[derive(Args)]
struct InstanceArg {
    /// Instance TOML file; the bundled 18-node network when omitted.
    #[arg(long)]
    instance: Option<PathBuf>,
    /// TOML file with a `days` array (as written by `cluster`) replacing the
    /// instance's representative days.
    #[arg(long)]
    days: Option<PathBuf>,
}

impl InstanceArg {
    fn load(&self) -> Result<PlanningInstance> {
        let mut inst = match &self.instance {
            Some(p) => io::load_instance(p)?,
            None => io::cigre18(),
        };
        if let Some(p) = &self.days {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            let section: DaysSection = toml::from_str(&text).map_err(|e| IoError::Format(e.to_string()))?;
            inst.days = section.days;
            let report = inst.validate();
            if !report.is_ok() {
                return Err(IoError::Instance(InstanceError::Invalid(report)).into());
            }
        }
        Ok(inst)
    }

    fn label(&self) -> String {
        self.instance
            .as_ref()
            .map_or_else(|| "cigre18 (bundled)".to_string(), |p| p.display().to_string())
    }
}

#[derive(Args)]
struct RunArgs {
    /// 1: no islanding; 2: static islanding; 3: static and transient.
    #[arg(long, default_value_t = 3, value_parser = clap::value_parser!(u8).range(1..=3))]
    case: u8,
    /// Step size of the exchange-bound tightening, in (0, 1].
    #[arg(long, default_value_t = 0.6)]
    alpha: f64,
    /// Convergence tolerance on corrective deviations, kW.
    #[arg(long, default_value_t = 1.0)]
    eps: f64,
    /// Hours per operating block; must divide 24.
    #[arg(long, default_value_t = 1)]
    block_hours: usize,
    #[arg(long, default_value_t = 15)]
    max_iterations: usize,
    /// Relative MILP optimality gap.
    #[arg(long, default_value_t = 1e-6)]
    gap: f64,
    /// Sides of the polygon replacing each line's apparent-power circle.
    #[arg(long, default_value_t = 12)]
    polygon_sides: usize,
    /// Seed for every random choice (clustering restarts).
    #[arg(long, default_value_t = io::CIGRE18_SEED)]
    seed: u64,
}

impl RunArgs {
    fn config(&self) -> RunConfig {
        RunConfig {
            case: self.case,
            alpha: self.alpha,
            eps_kw: self.eps,
            block_hours: self.block_hours,
            max_iterations: self.max_iterations,
            gap_tol: self.gap,
            polygon_sides: self.polygon_sides,
            seed: self.seed,
            ..RunConfig::default()
        }
    }
}

#[derive(Args)]
struct ClusterArgs {
    /// CSV with columns day,hour,<feature>... (one row per day and hour).
    #[arg(long)]
    profiles: PathBuf,
    #[arg(long)]
    k: usize,
    #[arg(long, default_value_t = io::CIGRE18_SEED)]
    seed: u64,
    /// Output TOML holding the `days` array.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PlanArgs {
    #[command(flatten)]
    instance: InstanceArg,
    #[command(flatten)]
    run: RunArgs,
    /// Output directory for plan.toml, costs.csv and metrics.csv.
    #[arg(long)]
    out: PathBuf,
    /// Also write the first master problem to this MPS file.
    #[arg(long)]
    export_mps: Option<PathBuf>,
}

#[derive(Args)]
struct CheckArgs {
    #[command(flatten)]
    instance: InstanceArg,
    /// Plan file written by `plan`; its run settings are reused.
    #[arg(long)]
    plan: PathBuf,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    instance: InstanceArg,
    /// Comma-separated generator ids in service; existing units when omitted.
    #[arg(long, value_delimiter = ',')]
    commit: Option<Vec<String>>,
    /// Step disturbance on the system base, p.u.; positive is a loss of supply.
    #[arg(long)]
    dp: f64,
    /// Integration step, s.
    #[arg(long, default_value_t = 1e-3)]
    dt: f64,
    /// Simulated time, s.
    #[arg(long, default_value_t = 20.0)]
    horizon: f64,
    /// Output CSV with columns t_s,df_hz.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ExportArgs {
    #[command(flatten)]
    instance: InstanceArg,
    #[command(flatten)]
    run: RunArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Axis {
    /// Number of representative days.
    Days,
    /// Flexible loads on and off.
    Flex,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    instance: InstanceArg,
    #[command(flatten)]
    run: RunArgs,
    #[arg(long, value_enum)]
    axis: Axis,
    /// Cluster counts for the days axis.
    #[arg(long, value_delimiter = ',', default_value = "1,2,4,8")]
    ks: Vec<usize>,
    /// Year of profiles for the days axis; a synthetic year when omitted.
    #[arg(long)]
    profiles: Option<PathBuf>,
    /// Output CSV; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Serialize, Deserialize)]
struct DaysSection {
    days: Vec<RepresentativeDay>,
}

fn cluster(a: &ClusterArgs) -> Result<()> {
    let (names, year) = io::read_profiles(&a.profiles)?;
    let c = cluster_days(&year, a.k, a.seed)?;
    info!("{} days into {} clusters, normalized SSE {:.4}", year.len(), a.k, c.normalized_sse);
    let header = format!("# features: {}\n", names.join(", "));
    let body = toml::to_string(&DaysSection { days: c.days }).context("serializing days")?;
    io::write_atomic(&a.out, format!("{header}{body}").as_bytes())?;
    Ok(())
}

fn plan(a: &PlanArgs) -> Result<ExitCode> {
    let inst = a.instance.load()?;
    let config = a.run.config();
    if let Some(path) = &a.export_mps {
        export(&inst, &config, path)?;
    }
    let started = io::unix_now();
    let run = run_three_stage(&inst, &config)?;
    let mut outputs: Vec<String> = io::emit_plot_csv(&run.records, &a.out)?
        .iter()
        .map(|p| p.display().to_string())
        .collect();
    if let Some(p) = &a.export_mps {
        outputs.push(p.display().to_string());
    }
    let report = PlanReport {
        instance: a.instance.label(),
        config,
        started,
        finished: io::unix_now(),
        iterations: run.records.len(),
        converged: run.converged(),
        plan: ReportedPlan::from(&run.solution.plan),
        outputs,
    };
    report.save(a.out.join("plan.toml"))?;
    let plan = &run.solution.plan;
    println!(
        "{:?} after {} iteration(s); built [{}]; total cost {:.2}",
        run.status,
        run.records.len(),
        plan.built_generators.join(", "),
        plan.costs.total
    );
    Ok(match run.status {
        RunStatus::Converged => ExitCode::SUCCESS,
        RunStatus::IterationLimit | RunStatus::Infeasible(_) => ExitCode::from(EXIT_NOT_CONVERGED),
    })
}

fn check(a: &CheckArgs) -> Result<()> {
    let inst = a.instance.load()?;
    let text = std::fs::read_to_string(&a.plan).with_context(|| format!("reading {}", a.plan.display()))?;
    let report = PlanReport::from_toml(&text)?;
    let lines: Vec<(u32, u32)> = report.plan.reinforced_lines.iter().map(|l| (l[0], l[1])).collect();
    let (_, metrics) = check_plan(&inst, &report.config, &report.plan.built_generators, &lines)?;
    let mut w = csv::Writer::from_writer(std::io::stdout().lock());
    w.write_record(["day", "hour", "rocof", "nadir", "ss", "dp_b", "dp_s", "binding"])?;
    for m in &metrics {
        w.write_record([
            m.day.to_string(),
            m.hour.to_string(),
            m.rocof.to_string(),
            m.nadir.to_string(),
            m.ss.to_string(),
            m.dp_b.to_string(),
            m.dp_s.to_string(),
            m.binding.as_str().to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn simulate(a: &SimulateArgs) -> Result<()> {
    let inst = a.instance.load()?.to_per_unit().map_err(PlannerError::from)?;
    let commitment = match &a.commit {
        None => inst.existing_commitment(),
        Some(ids) => {
            for id in ids {
                if !inst.generators.iter().any(|g| &g.id == id) {
                    return Err(RunError::Config(format!("unknown generator {id}")).into());
                }
            }
            inst.generators.iter().map(|g| ids.contains(&g.id)).collect()
        }
    };
    let traj = freq::simulate_step_response(&inst, &commitment, a.dp, a.dt, a.horizon)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["t_s", "df_hz"])?;
    for (i, v) in traj.values.iter().enumerate() {
        w.write_record([traj.time(i).to_string(), (v * inst.grid.f0).to_string()])?;
    }
    io::write_atomic(&a.out, &w.into_inner()?)?;
    Ok(())
}

fn export(inst: &PlanningInstance, config: &RunConfig, path: &Path) -> Result<()> {
    config.validate()?;
    let pu = inst.to_per_unit().map_err(PlannerError::from)?;
    let cal = Calendar::new(pu.days.len(), config.block_hours).map_err(RunError::from)?;
    let cfg = MasterConfig {
        include_island: config.case >= 2,
        polygon_sides: config.polygon_sides,
        block_hours: config.block_hours,
        island_hours: config.island_hours,
    };
    let master = build_master(&pu, &ExchangeBounds::from_instance(&pu, &cal), &cfg).map_err(RunError::from)?;
    mgplan_optim::export_mps(&master.program, path).map_err(PlannerError::from)?;
    let p = &master.program;
    info!("{}: {} columns, {} rows, {} integers", path.display(), p.num_vars(), p.num_rows(), p.num_integers());
    Ok(())
}

fn sweep(a: &SweepArgs) -> Result<()> {
    let inst = a.instance.load()?;
    let config = a.run.config();
    let axis = match a.axis {
        Axis::Flex => SweepAxis::FlexibleLoads(vec![true, false]),
        Axis::Days => {
            let year = match &a.profiles {
                Some(p) => io::read_profiles(p)?.1,
                None => io::synth_profiles(
                    config.seed,
                    io::CIGRE18_YEAR_DAYS,
                    inst.loads.len(),
                    inst.converter_units().len(),
                ),
            };
            SweepAxis::RepresentativeDays { year, ks: a.ks.clone() }
        }
    };
    let rows = sensitivity_sweep(&inst, &config, &axis)?;
    let sink: Box<dyn std::io::Write> = match &a.out {
        Some(p) => Box::new(std::fs::File::create(p).with_context(|| format!("creating {}", p.display()))?),
        None => Box::new(std::io::stdout().lock()),
    };
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(["label", "investment", "operation", "disconnection", "total", "iterations", "converged", "sse", "seconds"])?;
    for r in &rows {
        let c = &r.costs;
        w.write_record([
            r.label.clone(),
            io::format_cents(io::cents(c.investment)),
            io::format_cents(io::cents(c.operation)),
            io::format_cents(io::cents(c.disconnection)),
            io::format_cents(io::cents(c.total)),
            r.iterations.to_string(),
            r.converged.to_string(),
            r.sse.map(|s| s.to_string()).unwrap_or_default(),
            format!("{:.3}", r.seconds),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Exit code for a failed command.
fn exit_code(err: &anyhow::Error) -> u8 {
    let validation = |e: &InstanceError| matches!(e, InstanceError::Parse { .. } | InstanceError::Invalid(_));
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<RunError>() {
            match e {
                RunError::MasterInfeasible(_) => return EXIT_INFEASIBLE,
                RunError::Config(_) | RunError::Scenario(_) => return EXIT_VALIDATION,
                RunError::Planner(PlannerError::Instance(i)) if validation(i) => return EXIT_VALIDATION,
                _ => {}
            }
        }
        if let Some(IoError::Instance(i)) = cause.downcast_ref::<IoError>() {
            if validation(i) {
                return EXIT_VALIDATION;
            }
        }
        if let Some(PlannerError::Instance(i)) = cause.downcast_ref::<PlannerError>() {
            if validation(i) {
                return EXIT_VALIDATION;
            }
        }
        if cause.downcast_ref::<mgplan_core::ScenarioError>().is_some() {
            return EXIT_VALIDATION;
        }
    }
    1
}

fn run(cli: &Cli) -> Result<ExitCode> {
    match &cli.command {
        Command::Cluster(a) => cluster(a)?,
        Command::Plan(a) => return plan(a),
        Command::Check(a) => check(a)?,
        Command::Simulate(a) => simulate(a)?,
        Command::ExportMps(a) => {
            let inst = a.instance.load()?;
            export(&inst, &a.run.config(), &a.out)?;
        }
        Command::Sweep(a) => sweep(a)?,
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
