use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};

use highway_lab::harness::{
    format_flow_table, format_table, load_network, run_dp_compare, run_eval, run_plot_data, run_traffic_flow,
    run_train, ExperimentConfig,
};
use highway_lab::Error;

#[derive(Parser, Debug)]
#[command(name = "highway-lab", version, about = "Highway driving-policy experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Switch {
    On,
    Off,
}

#[derive(clap::Args, Debug)]
struct Common {
    /// Experiment configuration (TOML); defaults apply to missing keys.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory, created if missing.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Number of evaluation scenarios per setting.
    #[arg(long)]
    scenarios: Option<usize>,
}

#[derive(clap::Args, Debug)]
struct EvalArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long, value_enum)]
    shield: Option<Switch>,
    /// Relative position noise of the sensors, e.g. 0.05.
    #[arg(long)]
    noise: Option<f64>,
    /// Evaluate a single density, given as the entry period in seconds.
    #[arg(long)]
    density: Option<f64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train the agent and write checkpoint.bin and train_log.csv.
    Train {
        #[command(flatten)]
        common: Common,
        /// Step budget; the exploration schedule is compressed to fit.
        #[arg(long)]
        budget: Option<u64>,
    },
    /// Greedy evaluation; writes metrics.csv, table.txt, trajectories.jsonl.
    Eval(EvalArgs),
    /// DP planner versus the RL policy on identical scenarios.
    DpCompare(EvalArgs),
    /// Average network speed versus share of policy-driven vehicles.
    TrafficFlow {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        noise: Option<f64>,
        /// Share of policy-driven vehicles; the 0 baseline always runs.
        #[arg(long)]
        penetration: Option<f64>,
    },
    /// Per-step ego speed mean and standard deviation as CSV.
    PlotData(EvalArgs),
}

fn load_config(common: &Common) -> Result<ExperimentConfig, Error> {
    let mut cfg = match &common.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &common.out {
        cfg.out_dir = out.clone();
    }
    if let Some(n) = common.scenarios {
        cfg.n_scenarios = n;
    }
    Ok(cfg)
}

fn eval_config(args: &EvalArgs) -> Result<ExperimentConfig, Error> {
    let mut cfg = load_config(&args.common)?;
    if let Some(s) = args.shield {
        cfg.shield = matches!(s, Switch::On);
    }
    if let Some(noise) = args.noise {
        cfg.sim.noise_pct = noise;
    }
    if let Some(d) = args.density {
        cfg.densities = vec![d];
    }
    cfg.validate()?;
    Ok(cfg)
}

enum Failure {
    Config(String),
    Runtime(anyhow::Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) => Failure::Config(e.to_string()),
            other => Failure::Runtime(other.into()),
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Train { common, budget } => {
            let mut cfg = load_config(&common)?;
            if budget.is_some() {
                cfg.desk_budget = budget;
            }
            cfg.validate()?;
            let report = run_train(&cfg)?;
            println!("{}", report.summary);
            println!("wrote {}", cfg.out_dir.display());
        }
        Command::Eval(args) => {
            let cfg = eval_config(&args)?;
            let net = load_network(&args.checkpoint)?;
            let metrics = run_eval(&cfg, &net)?;
            print!("{}", format_table("Evaluation", &metrics));
        }
        Command::DpCompare(args) => {
            let cfg = eval_config(&args)?;
            let net = load_network(&args.checkpoint)?;
            let metrics = run_dp_compare(&cfg, &net)?;
            print!("{}", format_table("DP versus RL", &metrics));
        }
        Command::TrafficFlow { common, checkpoint, noise, penetration } => {
            let mut cfg = load_config(&common)?;
            if let Some(noise) = noise {
                cfg.sim.noise_pct = noise;
            }
            if let Some(p) = penetration {
                cfg.flow.penetrations = vec![p];
            }
            cfg.validate()?;
            let net = load_network(&checkpoint)?;
            let results = run_traffic_flow(&cfg, &net)?;
            print!("{}", format_flow_table(&cfg, &results));
        }
        Command::PlotData(args) => {
            let cfg = eval_config(&args)?;
            let net = load_network(&args.checkpoint)?;
            let rows = run_plot_data(&cfg, &net)
                .with_context(|| format!("writing speed profile to {}", cfg.out_dir.display()))
                .map_err(Failure::Runtime)?;
            println!("wrote {} rows to {}", rows.len(), cfg.out_dir.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
