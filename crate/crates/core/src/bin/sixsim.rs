use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use sixsim::experiment::{self, ExecOptions, ExperimentPlan};
use sixsim::{BudgetRule, Error};

const ENV_PREFIX: &str = "SIXSIM_";

/// Slot-level 6TiSCH simulator.
#[derive(Parser)]
#[command(name = "sixsim", version, about)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Execute a plan and write CSV outputs.
    Run(RunArgs),
    /// Print the benchmark plan (6 arms, 3 periods, 30 seeds) as a plan file.
    #[command(name = "paper-plan", alias = "benchmark-plan")]
    BenchmarkPlan {
        /// Write to this file instead of stdout.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Print the topology of a plan's base configuration as an edge list.
    Topo(PlanArgs),
    /// Check a plan file and report how many runs it expands to.
    Validate(PlanArgs),
}

#[derive(Args)]
struct PlanArgs {
    /// Plan file (TOML). Defaults to the benchmark plan.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Override a base configuration key, e.g. `--set duration_slotframes=500`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
    #[arg(long, value_enum)]
    budget_rule: Option<RuleArg>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    plan: PlanArgs,
    #[arg(short, long, default_value = "out")]
    output_dir: PathBuf,
    /// `a..b` (inclusive) or a comma-separated list.
    #[arg(long)]
    seeds: Option<String>,
    /// Comma-separated arm names.
    #[arg(long, value_delimiter = ',')]
    arms: Vec<String>,
    /// Comma-separated packet periods in seconds.
    #[arg(long)]
    periods: Option<String>,
    /// Worker threads; defaults to every available core.
    #[arg(short, long, default_value_t = 0)]
    jobs: usize,
    /// Also write each run's 6P transaction log.
    #[arg(long)]
    sixp_log: bool,
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum RuleArg {
    Endtoend,
    Proportional,
}

enum Failure {
    Plan(Error),
    Output(Error),
    Sim(Error),
}

impl Failure {
    fn report(self) -> ExitCode {
        let (code, what, e) = match self {
            Failure::Plan(e) => (3, "configuration error", e),
            Failure::Output(e) => (4, "cannot write output", e),
            Failure::Sim(e) => (5, "run failed", e),
        };
        eprintln!("sixsim: {what}: {e}");
        ExitCode::from(code)
    }
}

fn load_plan(args: &PlanArgs) -> Result<ExperimentPlan, Failure> {
    let mut plan = match &args.config {
        Some(p) => ExperimentPlan::load(p).map_err(Failure::Plan)?,
        None => ExperimentPlan::benchmark(),
    };
    plan.base.apply_env(ENV_PREFIX).map_err(Failure::Plan)?;
    for s in &args.sets {
        let (k, v) = s
            .split_once('=')
            .ok_or_else(|| Failure::Plan(Error::Config(format!("`--set {s}` is not KEY=VALUE"))))?;
        plan.base.set(k.trim(), v).map_err(Failure::Plan)?;
    }
    if let Some(r) = args.budget_rule {
        plan.base.budget_rule = match r {
            RuleArg::Endtoend => BudgetRule::EndToEnd,
            RuleArg::Proportional => BudgetRule::Proportional,
        };
    }
    plan.validate().map_err(Failure::Plan)?;
    Ok(plan)
}

fn check_writable(dir: &Path) -> Result<(), Failure> {
    let probe = dir.join(".sixsim-probe");
    fs::create_dir_all(dir)
        .and_then(|_| fs::write(&probe, b""))
        .and_then(|_| fs::remove_file(&probe))
        .map_err(|e| {
            Failure::Output(Error::Io {
                path: dir.display().to_string(),
                msg: e.to_string(),
            })
        })
}

fn run(args: RunArgs) -> Result<(), Failure> {
    let mut plan = load_plan(&args.plan)?;
    if let Some(s) = &args.seeds {
        plan.seeds = experiment::parse_seeds(s).map_err(Failure::Plan)?;
    }
    if let Some(p) = &args.periods {
        plan.periods = experiment::parse_periods(p).map_err(Failure::Plan)?;
    }
    if !args.arms.is_empty() {
        plan.select_arms(&args.arms).map_err(Failure::Plan)?;
    }
    plan.validate().map_err(Failure::Plan)?;
    check_writable(&args.output_dir)?;

    let n = plan.runs().len();
    eprintln!("sixsim: {n} runs");
    let start = Instant::now();
    let opts = ExecOptions {
        jobs: args.jobs,
        keep_sixp_log: args.sixp_log,
    };
    let outcomes = experiment::execute(&plan, opts).map_err(Failure::Sim)?;
    let written =
        experiment::write_outputs(&args.output_dir, &outcomes, plan.target.as_deref()).map_err(Failure::Output)?;

    let fmt = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.4}"));
    println!(
        "{:<16} {:>6} {:>8} {:>8} {:>9}",
        "arm", "period", "pdr", "on_time", "lifetime"
    );
    for s in &written.summary {
        let period = s.pk_period.map_or("all".to_string(), |p| p.to_string());
        println!(
            "{:<16} {:>6} {:>8} {:>8} {:>9}",
            s.arm,
            period,
            fmt(s.pdr_e2e),
            fmt(s.on_time),
            fmt(s.lifetime_years)
        );
    }
    for r in &written.ratios {
        println!(
            "{}: lifetime {} on_time {}",
            r.comparison,
            fmt(r.lifetime),
            fmt(r.on_time)
        );
    }
    eprintln!(
        "sixsim: wrote {} rows to {} in {:.1}s",
        written.runs.len(),
        args.output_dir.display(),
        start.elapsed().as_secs_f64()
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.cmd {
        Cmd::Run(args) => run(args),
        Cmd::BenchmarkPlan { output } => {
            let text = ExperimentPlan::benchmark().to_toml();
            match output {
                Some(p) => fs::write(&p, text).map_err(|e| {
                    Failure::Output(Error::Io {
                        path: p.display().to_string(),
                        msg: e.to_string(),
                    })
                }),
                None => {
                    print!("{text}");
                    Ok(())
                }
            }
        }
        Cmd::Topo(args) => load_plan(&args).and_then(|plan| {
            let topo = plan.base.topology().map_err(Failure::Plan)?;
            println!("# {} nodes, {} links", topo.node_count(), topo.link_count());
            topo.write_edge_list(std::io::stdout().lock()).map_err(|e| {
                Failure::Output(Error::Io {
                    path: "<stdout>".into(),
                    msg: e.to_string(),
                })
            })
        }),
        Cmd::Validate(args) => load_plan(&args).map(|plan| {
            println!(
                "ok: {} arms x {} periods x {} seeds = {} runs",
                plan.arms.len(),
                plan.periods.len(),
                plan.seeds.len(),
                plan.runs().len()
            );
        }),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => f.report(),
    }
}
