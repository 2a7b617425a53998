//! Command-line front end: single runs, seed batches with CSV output, exact
//! oracle dumps, standalone stage-game solving, and the parameter bounds
//! report. Configuration comes from an optional flat `key = value` file with
//! command-line flags taking precedence.

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use nashdelay::experiment::{
    run_batch, run_single, runs_csv, runs_csv_row, summary_csv, BatchResult, ExperimentConfig,
    RUNS_CSV_HEADER,
};
use nashdelay::nash_oracle::nash_value_iteration;
use nashdelay::pac_monitor::compute_bounds;
use nashdelay::stage_game::{select_equilibrium, BimatrixGame, MixedStrategy, BR_TOL};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(
    name = "nashdelay",
    version,
    about = "Delayed Nash Q-learning on two-player Markov games"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute one seeded run and print its CSV row plus checkpoint lines
    Run(ConfigArgs),
    /// Execute a seed batch and write runs.csv and summary.csv
    Batch(ConfigArgs),
    /// Solve a game exactly and dump its Q and value tables as CSV
    Oracle(OracleArgs),
    /// Select an equilibrium of a stage game read from a text file
    SolveStage {
        /// Two whitespace-separated payoff matrices preceded by `rows cols`
        file: PathBuf,
    },
    /// Print the theoretical bounds for a parameter set
    Bounds(BoundsArgs),
}

/// Every config key, as an optional override flag.
#[derive(Args)]
struct ConfigArgs {
    /// Flat `key = value` config file; the flags below override its entries
    #[arg(long)]
    config: Option<PathBuf>,
    /// grid1, grid2, or file:<path>
    #[arg(long)]
    game: Option<String>,
    /// delayed_nash_q or nash_q
    #[arg(long)]
    algorithm: Option<String>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    /// Update margin override (defaults to (1 - gamma) * epsilon / 3)
    #[arg(long = "epsilon-1")]
    epsilon_1: Option<f64>,
    #[arg(long)]
    m: Option<u32>,
    #[arg(long)]
    exploration: Option<f64>,
    #[arg(long = "max-steps")]
    max_steps: Option<u64>,
    #[arg(long)]
    runs: Option<u64>,
    /// Base seed; run i uses base_seed + i
    #[arg(long = "seed")]
    base_seed: Option<u64>,
    #[arg(long = "checkpoint-interval")]
    checkpoint_interval: Option<u64>,
    /// Episodes the greedy policy must stay unchanged before certification
    #[arg(long = "window")]
    convergence_window_episodes: Option<u64>,
    #[arg(long = "oracle-tol")]
    oracle_tol: Option<f64>,
    #[arg(long = "out")]
    output_dir: Option<String>,
}

#[derive(Args)]
struct OracleArgs {
    /// grid1, grid2, or file:<path>
    #[arg(long, default_value = "grid1")]
    game: String,
    #[arg(long, default_value_t = 0.8)]
    gamma: f64,
    #[arg(long, default_value_t = 1e-9)]
    tol: f64,
    #[arg(long = "max-sweeps", default_value_t = 500)]
    max_sweeps: usize,
    #[arg(long = "out", default_value = "out")]
    out: String,
}

#[derive(Args)]
struct BoundsArgs {
    /// Game whose dimensions enter the bounds
    #[arg(long, default_value = "grid1")]
    game: String,
    #[arg(long, default_value_t = 0.8)]
    gamma: f64,
    #[arg(long, default_value_t = 0.06)]
    epsilon: f64,
    #[arg(long, default_value_t = 0.1)]
    delta: f64,
    #[arg(long, default_value_t = 50)]
    m: u32,
    #[arg(long = "epsilon-1")]
    epsilon_1: Option<f64>,
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Run(args) => cmd_run(args),
        Command::Batch(args) => cmd_batch(args),
        Command::Oracle(args) => cmd_oracle(args),
        Command::SolveStage { file } => cmd_solve_stage(&file),
        Command::Bounds(args) => cmd_bounds(args),
    }
}

/// Applies one `key = value` config line.
fn apply_key(config: &mut ExperimentConfig, key: &str, value: &str) -> Result<()> {
    match key {
        "game" => config.game = value.parse()?,
        "algorithm" => config.algorithm = value.parse()?,
        "gamma" => config.gamma = value.parse()?,
        "epsilon" => config.epsilon = value.parse()?,
        "delta" => config.delta = value.parse()?,
        "epsilon_1" => config.epsilon_1 = Some(value.parse()?),
        "m" => config.m = value.parse()?,
        "exploration" => config.exploration = value.parse()?,
        "max_steps" => config.max_steps = value.parse()?,
        "runs" => config.runs = value.parse()?,
        "base_seed" => config.base_seed = value.parse()?,
        "checkpoint_interval" => config.checkpoint_interval = value.parse()?,
        "convergence_window_episodes" => config.convergence_window_episodes = value.parse()?,
        "oracle_tol" => config.oracle_tol = value.parse()?,
        "output_dir" => config.output_dir = value.to_string(),
        _ => bail!("unknown config key {key:?}"),
    }
    Ok(())
}

fn load_config_file(path: &Path) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("cannot read config file {}", path.display()))?;
    let mut config = ExperimentConfig::default();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .with_context(|| format!("{}:{}: expected `key = value`", path.display(), i + 1))?;
        apply_key(&mut config, key.trim(), value.trim())
            .with_context(|| format!("{}:{}", path.display(), i + 1))?;
    }
    Ok(config)
}

fn build_config(args: &ConfigArgs) -> Result<ExperimentConfig> {
    let mut config = match &args.config {
        Some(path) => load_config_file(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(game) = &args.game {
        config.game = game.parse()?;
    }
    if let Some(algorithm) = &args.algorithm {
        config.algorithm = algorithm.parse()?;
    }
    if let Some(x) = args.gamma {
        config.gamma = x;
    }
    if let Some(x) = args.epsilon {
        config.epsilon = x;
    }
    if let Some(x) = args.delta {
        config.delta = x;
    }
    if let Some(x) = args.epsilon_1 {
        config.epsilon_1 = Some(x);
    }
    if let Some(x) = args.m {
        config.m = x;
    }
    if let Some(x) = args.exploration {
        config.exploration = x;
    }
    if let Some(x) = args.max_steps {
        config.max_steps = x;
    }
    if let Some(x) = args.runs {
        config.runs = x;
    }
    if let Some(x) = args.base_seed {
        config.base_seed = x;
    }
    if let Some(x) = args.checkpoint_interval {
        config.checkpoint_interval = x;
    }
    if let Some(x) = args.convergence_window_episodes {
        config.convergence_window_episodes = x;
    }
    if let Some(x) = args.oracle_tol {
        config.oracle_tol = x;
    }
    if let Some(x) = &args.output_dir {
        config.output_dir = x.clone();
    }
    config.validate()?;
    Ok(config)
}

fn cmd_run(args: ConfigArgs) -> Result<()> {
    let config = build_config(&args)?;
    let record = run_single(&config, config.base_seed)?;
    println!("{RUNS_CSV_HEADER}");
    println!("{}", runs_csv_row(&config, &record));
    if !record.monitor.checkpoints.is_empty() {
        println!(
            "# checkpoint: t, optimism, accuracy, eps4_ok, |K|, successful, attempted, escapes"
        );
        for checkpoint in &record.monitor.checkpoints {
            println!("# {}", checkpoint.line());
        }
    }
    if let Some(failure) = record.failure {
        bail!("run stopped early: {failure}");
    }
    Ok(())
}

fn cmd_batch(args: ConfigArgs) -> Result<()> {
    let config = build_config(&args)?;
    let BatchResult { records, summary } = run_batch(&config)?;
    let dir = PathBuf::from(&config.output_dir);
    fs::create_dir_all(&dir)
        .with_context(|| format!("cannot create output directory {}", dir.display()))?;
    let runs_path = dir.join("runs.csv");
    let summary_path = dir.join("summary.csv");
    fs::write(&runs_path, runs_csv(&config, &records))?;
    fs::write(&summary_path, summary_csv(&summary))?;
    println!(
        "{} runs, {} converged (rate {})",
        summary.runs, summary.converged_runs, summary.convergence_rate
    );
    if let Some(mean) = summary.mean_convergence_step {
        println!(
            "convergence steps: mean {mean}, median {}, stddev {}",
            summary.median_convergence_step.unwrap_or(f64::NAN),
            summary.stddev_convergence_step.unwrap_or(f64::NAN),
        );
    }
    println!("wrote {}", runs_path.display());
    println!("wrote {}", summary_path.display());
    let failures: Vec<&str> = records
        .iter()
        .filter_map(|r| r.failure.as_deref())
        .collect();
    if !failures.is_empty() {
        bail!(
            "{} run(s) stopped early: {}",
            failures.len(),
            failures.join("; ")
        );
    }
    Ok(())
}

fn cmd_oracle(args: OracleArgs) -> Result<()> {
    let config = ExperimentConfig {
        game: args.game.parse()?,
        gamma: args.gamma,
        oracle_tol: args.tol,
        ..ExperimentConfig::default()
    };
    let model = config.resolve_model()?;
    let result = nash_value_iteration(&model, args.tol, args.max_sweeps);
    println!(
        "converged = {} after {} sweeps (residual {}), equilibrium-kind assumption violated = {}",
        result.converged, result.iterations, result.residual, result.assumption_violated
    );
    if !result.converged {
        println!(
            "warning: values still cycling after {} sweeps; dumping the last sweep",
            args.max_sweeps
        );
    }

    let dir = PathBuf::from(&args.out);
    fs::create_dir_all(&dir)
        .with_context(|| format!("cannot create output directory {}", dir.display()))?;
    let mut q_csv = String::from("state,a1,a2,q1,q2\n");
    for s in 0..model.num_states() {
        for a1 in 0..model.num_actions_1() {
            for a2 in 0..model.num_actions_2() {
                let p = model.profile_index(s, a1, a2);
                writeln!(
                    q_csv,
                    "{s},{a1},{a2},{},{}",
                    result.q.q[0][p], result.q.q[1][p]
                )?;
            }
        }
    }
    let mut v_csv = String::from("state,label,v1,v2\n");
    for s in 0..model.num_states() {
        writeln!(
            v_csv,
            "{s},\"{}\",{},{}",
            model.label(s),
            result.q.v[0][s],
            result.q.v[1][s]
        )?;
    }
    let q_path = dir.join("oracle_q.csv");
    let v_path = dir.join("oracle_v.csv");
    fs::write(&q_path, q_csv)?;
    fs::write(&v_path, v_csv)?;
    println!("wrote {}", q_path.display());
    println!("wrote {}", v_path.display());
    Ok(())
}

/// Reads `rows cols` followed by the two payoff matrices.
fn parse_stage_game(text: &str) -> Result<BimatrixGame> {
    let mut tokens = text
        .lines()
        .flat_map(|l| l.split('#').next().unwrap_or("").split_whitespace())
        .map(str::to_string)
        .collect::<Vec<_>>()
        .into_iter();
    let mut next = |what: &str| {
        tokens
            .next()
            .with_context(|| format!("unexpected end of input, expected {what}"))
    };
    let rows: usize = next("row count")?.parse().context("bad row count")?;
    let cols: usize = next("column count")?.parse().context("bad column count")?;
    let mut read_matrix = |player: &str| -> Result<Vec<f64>> {
        (0..rows * cols)
            .map(|_| {
                next(&format!("a payoff for {player}"))?
                    .parse::<f64>()
                    .with_context(|| format!("bad payoff for {player}"))
            })
            .collect()
    };
    let payoff_1 = read_matrix("player 1")?;
    let payoff_2 = read_matrix("player 2")?;
    if tokens.next().is_some() {
        bail!("trailing tokens after the two {rows}x{cols} matrices");
    }
    Ok(BimatrixGame::from_flat(rows, cols, payoff_1, payoff_2)?)
}

fn fmt_strategy(strategy: &MixedStrategy) -> String {
    match strategy.as_pure() {
        Some(a) => format!("pure action {a}"),
        None => format!("{:?}", strategy.probs()),
    }
}

fn cmd_solve_stage(file: &Path) -> Result<()> {
    let text = fs::read_to_string(file)
        .with_context(|| format!("cannot read stage game {}", file.display()))?;
    let game = parse_stage_game(&text)?;
    let eq = select_equilibrium(&game, BR_TOL)?;
    println!("class    = {:?}", eq.class);
    println!("player 1 = {}", fmt_strategy(&eq.strategy_1));
    println!("player 2 = {}", fmt_strategy(&eq.strategy_2));
    println!("value    = ({}, {})", eq.value_1, eq.value_2);
    Ok(())
}

fn cmd_bounds(args: BoundsArgs) -> Result<()> {
    let config = ExperimentConfig {
        game: args.game.parse()?,
        gamma: args.gamma,
        epsilon: args.epsilon,
        delta: args.delta,
        m: args.m,
        epsilon_1: args.epsilon_1,
        ..ExperimentConfig::default()
    };
    let model = config.resolve_model()?;
    let dims = (
        model.num_states(),
        model.num_actions_1(),
        model.num_actions_2(),
    );
    let report = compute_bounds(&config.params_for(&model), dims);
    println!("game                        = {}", config.game);
    println!(
        "|S|, |A1|, |A2|             = {}, {}, {}",
        dims.0, dims.1, dims.2
    );
    println!("gamma                       = {}", args.gamma);
    println!("epsilon                     = {}", args.epsilon);
    println!("delta                       = {}", args.delta);
    println!("epsilon_1                   = {}", report.epsilon_1);
    println!("v_max                       = {}", report.v_max);
    println!("kappa                       = {}", report.kappa);
    println!("horizon H                   = {}", report.horizon);
    println!("configured m                = {}", args.m);
    println!("theoretical m               = {}", report.theoretical_m);
    println!("zeta (configured m)         = {}", report.zeta_configured_m);
    println!(
        "zeta (theoretical m)        = {}",
        report.zeta_theoretical_m
    );
    println!(
        "sample bound (config m)     = {}",
        report.sample_bound_configured_m
    );
    println!(
        "sample bound (theoretical)  = {}",
        report.sample_bound_theoretical_m
    );
    Ok(())
}
