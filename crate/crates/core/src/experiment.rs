//! The experiment harness: one fully deterministic environment–learner loop
//! per seed, convergence detection over episode-boundary policies, seed
//! batches with summary statistics, and the CSV formats the CLI persists.
//!
//! Reproducibility contract: a run is a pure function of (config, seed). The
//! generator is ChaCha8 seeded directly with the run's seed, and batches hand
//! out seed `base_seed + run index`, so any row of a batch can be regenerated
//! in isolation. Wall-clock columns are the only nondeterministic output.

use crate::grid_worlds::{make_grid_world, GridError, GridSpec};
use crate::learners::{DelayedNashLearner, Learner, NashQLearner};
use crate::markov_game::{parse_game_model, sample_transition, GameModel, JointPolicy, ModelError};
use crate::nash_oracle::{is_nash_profile, nash_value_iteration, OracleResult};
use crate::pac_monitor::{MonitorLog, PacMonitor, PacParams};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

/// Tolerance for certifying a stable greedy policy as an equilibrium.
pub const CONVERGENCE_CERT_TOL: f64 = 1e-6;

/// Sweep cap for the oracle solve a run is audited against.
pub const ORACLE_MAX_SWEEPS: usize = 500;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{field} {message}")]
    InvalidValue {
        field: &'static str,
        message: String,
    },
    #[error("unknown game {0:?} (expected grid1, grid2, or file:<path>)")]
    UnknownGame(String),
    #[error("unknown algorithm {0:?} (expected delayed_nash_q or nash_q)")]
    UnknownAlgorithm(String),
    #[error("cannot read game file {path}: {source}")]
    FileRead {
        path: String,
        source: std::io::Error,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Grid(#[from] GridError),
}

fn invalid(field: &'static str, message: impl Into<String>) -> ConfigError {
    ConfigError::InvalidValue {
        field,
        message: message.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum GameChoice {
    Grid1,
    Grid2,
    File(String),
}

impl FromStr for GameChoice {
    type Err = ConfigError;
    fn from_str(s: &str) -> Result<Self, ConfigError> {
        match s {
            "grid1" => Ok(Self::Grid1),
            "grid2" => Ok(Self::Grid2),
            _ => match s.strip_prefix("file:") {
                Some(path) if !path.is_empty() => Ok(Self::File(path.to_string())),
                _ => Err(ConfigError::UnknownGame(s.to_string())),
            },
        }
    }
}

impl fmt::Display for GameChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Grid1 => write!(f, "grid1"),
            Self::Grid2 => write!(f, "grid2"),
            Self::File(path) => write!(f, "file:{path}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Algorithm {
    DelayedNashQ,
    NashQ,
}

impl FromStr for Algorithm {
    type Err = ConfigError;
    fn from_str(s: &str) -> Result<Self, ConfigError> {
        match s {
            "delayed_nash_q" => Ok(Self::DelayedNashQ),
            "nash_q" => Ok(Self::NashQ),
            _ => Err(ConfigError::UnknownAlgorithm(s.to_string())),
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::DelayedNashQ => write!(f, "delayed_nash_q"),
            Self::NashQ => write!(f, "nash_q"),
        }
    }
}

/// Everything a batch needs. `gamma` applies to the grid presets; a game
/// loaded from a file carries its own discount, which then also drives the
/// monitor parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub game: GameChoice,
    pub algorithm: Algorithm,
    pub gamma: f64,
    pub epsilon: f64,
    pub delta: f64,
    /// Override for the update margin; `None` derives `(1 - gamma) * epsilon / 3`.
    pub epsilon_1: Option<f64>,
    pub m: u32,
    /// Exploration rate of the Nash Q-learning baseline; unused by the
    /// delayed learner, whose equilibrium mixing explores on its own.
    pub exploration: f64,
    pub max_steps: u64,
    pub runs: u64,
    pub base_seed: u64,
    /// Audit cadence in steps; 0 disables checkpoints.
    pub checkpoint_interval: u64,
    pub convergence_window_episodes: u64,
    pub oracle_tol: f64,
    pub output_dir: String,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            game: GameChoice::Grid1,
            algorithm: Algorithm::DelayedNashQ,
            gamma: 0.8,
            epsilon: 0.06,
            delta: 0.1,
            epsilon_1: None,
            m: 50,
            exploration: 0.2,
            max_steps: 2_000_000,
            runs: 50,
            base_seed: 0,
            checkpoint_interval: 10_000,
            convergence_window_episodes: 50,
            oracle_tol: 1e-9,
            output_dir: "out".to_string(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.max_steps == 0 {
            return Err(invalid("max_steps", "must be positive"));
        }
        if self.runs == 0 {
            return Err(invalid("runs", "must be at least 1"));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(invalid(
                "gamma",
                format!("must lie in [0, 1), got {}", self.gamma),
            ));
        }
        if !(self.epsilon > 0.0) {
            return Err(invalid("epsilon", "must be positive"));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(invalid(
                "delta",
                format!("must lie in (0, 1), got {}", self.delta),
            ));
        }
        if let Some(e1) = self.epsilon_1 {
            if !(e1 > 0.0) {
                return Err(invalid("epsilon_1", "must be positive when set"));
            }
        }
        if self.m == 0 {
            return Err(invalid("m", "must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.exploration) {
            return Err(invalid("exploration", "must lie in [0, 1]"));
        }
        if self.convergence_window_episodes == 0 {
            return Err(invalid("convergence_window_episodes", "must be at least 1"));
        }
        if !(self.oracle_tol > 0.0) {
            return Err(invalid("oracle_tol", "must be positive"));
        }
        Ok(())
    }

    pub fn resolve_model(&self) -> Result<GameModel, ConfigError> {
        self.validate()?;
        match &self.game {
            GameChoice::Grid1 => Ok(make_grid_world(&GridSpec::grid1(), self.gamma)?),
            GameChoice::Grid2 => Ok(make_grid_world(&GridSpec::grid2(), self.gamma)?),
            GameChoice::File(path) => {
                let text =
                    std::fs::read_to_string(path).map_err(|source| ConfigError::FileRead {
                        path: path.clone(),
                        source,
                    })?;
                Ok(parse_game_model(&text)?)
            }
        }
    }

    /// Monitor parameters for a resolved model (its discount wins).
    pub fn params_for(&self, model: &GameModel) -> PacParams {
        let params = PacParams::from_epsilon(model.gamma(), self.epsilon, self.delta, self.m);
        match self.epsilon_1 {
            Some(e1) => params.with_epsilon_1(e1),
            None => params,
        }
    }
}

/// Outcome of one seed.
#[derive(Debug, Clone)]
pub struct RunRecord {
    pub run_id: u64,
    pub seed: u64,
    pub epsilon_1: f64,
    pub converged: bool,
    pub convergence_step: Option<u64>,
    pub total_steps: u64,
    pub episodes: u64,
    pub monitor: MonitorLog,
    pub stats: crate::learners::LearnerStats,
    pub v1_init: f64,
    pub v2_init: f64,
    pub wall_ms: u64,
    /// A hard counter bound was exceeded; the run stopped early.
    pub failure: Option<String>,
}

/// Resolves the model, solves the oracle, and executes one seed.
pub fn run_single(config: &ExperimentConfig, seed: u64) -> Result<RunRecord, ConfigError> {
    let model = config.resolve_model()?;
    let oracle = nash_value_iteration(&model, config.oracle_tol, ORACLE_MAX_SWEEPS);
    Ok(run_with(&model, &oracle, config, 0, seed))
}

/// The loop itself, for callers that already hold the shared model and
/// oracle. Episode resets at terminals; at every episode boundary the greedy
/// policy joins the stability streak, and once a streak spans the configured
/// window of episodes the policy is certified as an equilibrium of the true
/// game (once per streak — an unchanged policy cannot certify differently).
/// The run stops at certification, a counter-bound violation, or `max_steps`.
pub fn run_with(
    model: &GameModel,
    oracle: &OracleResult,
    config: &ExperimentConfig,
    run_id: u64,
    seed: u64,
) -> RunRecord {
    let started = Instant::now();
    let params = config.params_for(model);
    let mut learner: Box<dyn Learner> = match config.algorithm {
        Algorithm::DelayedNashQ => Box::new(
            DelayedNashLearner::new(model, config.m, params.epsilon_1)
                .expect("fresh optimistic tables always admit stage equilibria"),
        ),
        Algorithm::NashQ => Box::new(
            NashQLearner::new(model, config.exploration)
                .expect("fresh zero tables always admit stage equilibria"),
        ),
    };
    let mut monitor = PacMonitor::new(model, params, Some(oracle.q.clone()), &*learner);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    struct Streak {
        version: u64,
        len: u64,
        start_step: u64,
        rejected: bool,
    }

    let mut s = model.initial_state();
    let mut episodes = 0u64;
    let mut streak: Option<Streak> = None;
    let mut convergence_step = None;
    let mut failure = None;
    let mut total_steps = 0;

    for t in 1..=config.max_steps {
        total_steps = t;
        let (a1, a2) = learner.choose(s, &mut rng);
        let escaped = monitor.is_escape(s, a1, a2);
        let (s_next, r1, r2) =
            sample_transition(model, s, a1, a2, &mut rng).expect("never acts in a terminal state");
        let events = learner.observe(t, s, a1, a2, r1, r2, s_next);
        if let Err(violation) = monitor.record_step(s, &events, escaped, &*learner) {
            failure = Some(violation.to_string());
            break;
        }

        if model.is_terminal(s_next) {
            episodes += 1;
            let version = learner.policy_version();
            match &mut streak {
                Some(st) if st.version == version => st.len += 1,
                _ => {
                    streak = Some(Streak {
                        version,
                        len: 1,
                        start_step: t,
                        rejected: false,
                    });
                }
            }
            let st = streak.as_mut().expect("streak was just set");
            if !st.rejected && st.len >= config.convergence_window_episodes {
                if is_nash_profile(model, &learner.greedy_policy(), CONVERGENCE_CERT_TOL)
                    .expect("policy evaluation is a discounted contraction")
                {
                    convergence_step = Some(st.start_step);
                } else {
                    st.rejected = true;
                }
            }
            s = model.initial_state();
        } else {
            s = s_next;
        }
        if convergence_step.is_some() {
            break;
        }
        if config.checkpoint_interval > 0 && t % config.checkpoint_interval == 0 {
            monitor.audit_checkpoint(t, s, &*learner);
        }
    }

    let v1_init = learner.state_value(0, model.initial_state());
    let v2_init = learner.state_value(1, model.initial_state());
    RunRecord {
        run_id,
        seed,
        epsilon_1: params.epsilon_1,
        converged: convergence_step.is_some() && failure.is_none(),
        convergence_step,
        total_steps,
        episodes,
        monitor: monitor.into_log(),
        stats: learner.stats().clone(),
        v1_init,
        v2_init,
        wall_ms: started.elapsed().as_millis() as u64,
        failure,
    }
}

/// First step from which the recorded policy stays unchanged for `window`
/// consecutive entries and certifies as an equilibrium; entries are
/// (episode-boundary step, greedy policy at that boundary).
pub fn detect_convergence(
    model: &GameModel,
    history: &[(u64, JointPolicy)],
    window: usize,
    tol: f64,
) -> Option<u64> {
    assert!(window >= 1, "window must be at least 1");
    let mut i = 0;
    while i < history.len() {
        let mut j = i + 1;
        while j < history.len() && history[j].1 == history[i].1 {
            j += 1;
        }
        if j - i >= window
            && is_nash_profile(model, &history[i].1, tol)
                .expect("policy evaluation is a discounted contraction")
        {
            return Some(history[i].0);
        }
        i = j;
    }
    None
}

/// Aggregates of the converged runs in a batch.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchSummary {
    pub runs: u64,
    pub converged_runs: u64,
    pub convergence_rate: f64,
    pub mean_convergence_step: Option<f64>,
    pub median_convergence_step: Option<f64>,
    pub stddev_convergence_step: Option<f64>,
}

pub fn summarize(records: &[RunRecord]) -> BatchSummary {
    let runs = records.len() as u64;
    let mut steps: Vec<f64> = records
        .iter()
        .filter(|r| r.converged)
        .filter_map(|r| r.convergence_step)
        .map(|s| s as f64)
        .collect();
    steps.sort_by(|a, b| a.partial_cmp(b).expect("step counts are finite"));
    let converged_runs = steps.len() as u64;
    let (mean, median, stddev) = if steps.is_empty() {
        (None, None, None)
    } else {
        let n = steps.len();
        let mean = steps.iter().sum::<f64>() / n as f64;
        let median = if n % 2 == 1 {
            steps[n / 2]
        } else {
            (steps[n / 2 - 1] + steps[n / 2]) / 2.0
        };
        let stddev = if n == 1 {
            0.0
        } else {
            (steps.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64).sqrt()
        };
        (Some(mean), Some(median), Some(stddev))
    };
    BatchSummary {
        runs,
        converged_runs,
        convergence_rate: converged_runs as f64 / runs as f64,
        mean_convergence_step: mean,
        median_convergence_step: median,
        stddev_convergence_step: stddev,
    }
}

#[derive(Debug, Clone)]
pub struct BatchResult {
    pub records: Vec<RunRecord>,
    pub summary: BatchSummary,
}

/// Runs `config.runs` seeds (`base_seed + index`) against one shared model
/// and oracle. Runs execute in parallel; the result order is by run id, so
/// the output is identical however they were scheduled. A counter-bound
/// violation marks its own row failed without aborting the batch.
pub fn run_batch(config: &ExperimentConfig) -> Result<BatchResult, ConfigError> {
    let model = config.resolve_model()?;
    let oracle = nash_value_iteration(&model, config.oracle_tol, ORACLE_MAX_SWEEPS);
    let records: Vec<RunRecord> = (0..config.runs)
        .into_par_iter()
        .map(|i| run_with(&model, &oracle, config, i, config.base_seed + i))
        .collect();
    let summary = summarize(&records);
    Ok(BatchResult { records, summary })
}

pub const RUNS_CSV_HEADER: &str = "run_id,seed,game,algorithm,gamma,m,epsilon1,converged,\
convergence_step,total_steps,episodes,successful_updates,attempted_updates,escape_events,\
optimism_violations,accuracy_violations,v1_init,v2_init,wall_ms";

pub const SUMMARY_CSV_HEADER: &str = "runs,converged_runs,convergence_rate,\
mean_convergence_step,median_convergence_step,stddev_convergence_step";

pub fn runs_csv_row(config: &ExperimentConfig, r: &RunRecord) -> String {
    format!(
        "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
        r.run_id,
        r.seed,
        config.game,
        config.algorithm,
        config.gamma,
        config.m,
        r.epsilon_1,
        r.converged,
        r.convergence_step
            .map(|s| s.to_string())
            .unwrap_or_default(),
        r.total_steps,
        r.episodes,
        r.monitor.successful_updates,
        r.monitor.attempted_updates,
        r.monitor.escape_events,
        r.monitor.optimism_violations,
        r.monitor.accuracy_violations,
        r.v1_init,
        r.v2_init,
        r.wall_ms,
    )
}

pub fn runs_csv(config: &ExperimentConfig, records: &[RunRecord]) -> String {
    let mut out = String::from(RUNS_CSV_HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&runs_csv_row(config, r));
        out.push('\n');
    }
    out
}

fn opt_column(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

pub fn summary_csv(summary: &BatchSummary) -> String {
    format!(
        "{}\n{},{},{},{},{},{}\n",
        SUMMARY_CSV_HEADER,
        summary.runs,
        summary.converged_runs,
        summary.convergence_rate,
        opt_column(summary.mean_convergence_step),
        opt_column(summary.median_convergence_step),
        opt_column(summary.stddev_convergence_step),
    )
}
