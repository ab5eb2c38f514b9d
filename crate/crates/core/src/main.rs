use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};

use frozenlake_mcts::agents::{Agent, PolicyMctsConfig, QLearnConfig};
use frozenlake_mcts::bench::{self, Algorithm, BenchError, Hyperparameters, RunConfig};
use frozenlake_mcts::env::{EnvConfig, GridMap};
use frozenlake_mcts::oracle;
use frozenlake_mcts::search::SearchConfig;

#[derive(Parser)]
#[command(name = "frozenlake-bench", version, about = "Optimized MCTS vs. Q-Learning vs. rollout MCTS on FrozenLake")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one algorithm and write metrics.csv, summary.txt and summary.csv.
    Run(RunArgs),
    /// Train all three algorithms with the same seed and map.
    Compare(CompareArgs),
    /// Solve the map exactly and print values, the optimal policy and p*.
    Oracle(OracleArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum AlgoArg {
    OptimizedMcts,
    PolicyMcts,
    QLearning,
}

impl From<AlgoArg> for Algorithm {
    fn from(a: AlgoArg) -> Self {
        match a {
            AlgoArg::OptimizedMcts => Algorithm::OptimizedMcts,
            AlgoArg::PolicyMcts => Algorithm::PolicyMcts,
            AlgoArg::QLearning => Algorithm::QLearning,
        }
    }
}

#[derive(Args, Clone)]
struct MapArgs {
    /// Built-in map (4x4, 8x8) or path to a map file.
    #[arg(long, default_value = "4x4")]
    map: String,
    /// Deterministic transitions.
    #[arg(long)]
    no_slippery: bool,
    /// Maximum steps per episode (default: 25 per map row).
    #[arg(long)]
    step_cap: Option<usize>,
}

#[derive(Args, Clone)]
struct TrainArgs {
    #[command(flatten)]
    map: MapArgs,
    #[arg(long, default_value_t = 100_000)]
    episodes: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// UCT exploration weight.
    #[arg(long, default_value_t = 1.4)]
    c: f64,
    #[arg(long, default_value_t = 100)]
    sims_per_move: usize,
    #[arg(long, default_value_t = 0.1)]
    alpha: f64,
    #[arg(long, default_value_t = 0.99)]
    gamma: f64,
    #[arg(long, default_value_t = 1.0)]
    epsilon_start: f64,
    #[arg(long, default_value_t = 0.01)]
    epsilon_end: f64,
    #[arg(long, default_value_t = 50_000)]
    epsilon_decay: u64,
    /// Moving-average window for the smoothed columns.
    #[arg(long, default_value_t = 1_000)]
    window: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, value_enum)]
    algo: AlgoArg,
    #[command(flatten)]
    train: TrainArgs,
    /// Write the final Q/N tables (optimized-mcts only) as CSV.
    #[arg(long)]
    dump_tables: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    #[command(flatten)]
    train: TrainArgs,
}

#[derive(Args)]
struct OracleArgs {
    #[command(flatten)]
    map: MapArgs,
    #[arg(long, default_value_t = 0.99)]
    gamma: f64,
    /// Horizon for the success probability (default: the step cap).
    #[arg(long)]
    horizon: Option<usize>,
    /// Also write state,value,action rows to this CSV file.
    #[arg(long)]
    csv: Option<PathBuf>,
}

fn load_map(name: &str) -> Result<GridMap, BenchError> {
    match GridMap::builtin(name) {
        Some(map) => Ok(map),
        None => GridMap::load(name).map_err(|e| BenchError::Config(format!("map {name:?}: {e}"))),
    }
}

fn env_config(args: &MapArgs) -> Result<EnvConfig, BenchError> {
    let map = load_map(&args.map)?;
    let cap = args.step_cap.unwrap_or_else(|| map.default_step_cap());
    Ok(EnvConfig::new(map, !args.no_slippery, cap)?)
}

fn run_config(args: &TrainArgs, algorithm: Algorithm) -> Result<RunConfig, BenchError> {
    let search = SearchConfig::new(args.c).map_err(|e| BenchError::Config(e.to_string()))?;
    let hyper = Hyperparameters {
        search,
        qlearn: QLearnConfig {
            alpha: args.alpha,
            gamma: args.gamma,
            epsilon_start: args.epsilon_start,
            epsilon_end: args.epsilon_end,
            epsilon_decay_episodes: args.epsilon_decay,
        },
        policy_mcts: PolicyMctsConfig { simulations_per_move: args.sims_per_move, rollout_horizon: None },
    };
    let cfg = RunConfig {
        agent: hyper.agent_config(algorithm),
        episodes: args.episodes,
        env: env_config(&args.map)?,
        map_label: args.map.map.clone(),
        seed: args.seed,
        smoothing_window: args.window,
    };
    cfg.validate()?;
    Ok(cfg)
}

fn print_table(path: &Path) -> anyhow::Result<()> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    print!("{text}");
    Ok(())
}

fn run(args: RunArgs) -> anyhow::Result<()> {
    let cfg = run_config(&args.train, args.algo.into())?;
    if args.dump_tables.is_some() && cfg.algorithm() != Algorithm::OptimizedMcts {
        return Err(BenchError::Config("--dump-tables needs --algo optimized-mcts".into()).into());
    }
    let output = bench::run_benchmark(&cfg)?;
    bench::write_run(&args.train.out, &output)?;
    if let (Some(path), Agent::OptimizedMcts { tables, .. }) = (&args.dump_tables, &output.agent) {
        let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
        tables.write_csv(BufWriter::new(file)).with_context(|| format!("writing {}", path.display()))?;
    }
    print_table(&args.train.out.join("summary.txt"))
}

fn compare(args: CompareArgs) -> anyhow::Result<()> {
    let cfgs = Algorithm::ALL
        .iter()
        .map(|a| run_config(&args.train, *a))
        .collect::<Result<Vec<_>, _>>()?;
    let outputs = bench::compare(&cfgs)?;
    bench::write_comparison(&args.train.out, &outputs)?;
    print_table(&args.train.out.join("summary.txt"))
}

fn run_oracle(args: OracleArgs) -> anyhow::Result<()> {
    let env = env_config(&args.map)?;
    let map = &env.map;
    let horizon = args.horizon.unwrap_or(env.step_cap);
    let report = oracle::solve(map, env.slippery, args.gamma, horizon)
        .map_err(|e| BenchError::Config(e.to_string()))?;

    println!("optimal values (gamma = {}):", args.gamma);
    for row in report.values.values.chunks(map.cols()) {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:.4}")).collect();
        println!("  {}", cells.join(" "));
    }
    println!("optimal policy:");
    for line in report.policy.render(map).lines() {
        println!("  {line}");
    }
    println!("p* (goal within {horizon} steps) = {:.6}", report.optimal_success);

    if let Some(path) = args.csv {
        let mut out = String::from("state,value,action\n");
        for s in map.states() {
            let action = report.policy.get(s).map_or(String::new(), |a| a.index().to_string());
            out.push_str(&format!("{},{:.6},{}\n", s.0, report.values.get(s), action));
        }
        std::fs::write(&path, out).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => run(a),
        Command::Compare(a) => compare(a),
        Command::Oracle(a) => run_oracle(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let config = e.downcast_ref::<BenchError>().is_some_and(BenchError::is_config_error);
            ExitCode::from(if config { 2 } else { 1 })
        }
    }
}
