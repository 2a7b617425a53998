//! The two learning algorithms: delayed Nash Q-learning, which keeps
//! optimistic per-profile tables for both players and only commits an update
//! after averaging `m` fresh targets, and the classic Nash Q-learning baseline
//! with step sizes `1/n` and epsilon-greedy exploration.
//!
//! One learner instance holds both players' tables. Since both players observe
//! the same rewards and share the deterministic equilibrium-selection rule,
//! running two mirrored learners would reproduce the same numbers entry for
//! entry; a single instance enforces that identity by construction.

use crate::markov_game::{GameModel, JointPolicy, QTables};
use crate::stage_game::{
    select_equilibrium, EquilibriumClass, EquilibriumProfile, MixedStrategy, StageGameError, BR_TOL,
};
use rand::{Rng, RngCore};

/// One per-player averaging event: the profile's sample counter reached `m`
/// with its learn flag set, and the candidate average either replaced the
/// table entry (`success`) or left it alone.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AttemptedUpdate {
    pub player: usize,
    pub profile: usize,
    pub success: bool,
}

/// What one call to [`Learner::observe`] did, for the monitor's bookkeeping.
/// `stage_values` are the current state's equilibrium values as of the
/// beginning of the step, before any table change.
#[derive(Debug, Clone, PartialEq)]
pub struct StepEvents {
    pub attempted: Vec<AttemptedUpdate>,
    pub q_changed: bool,
    pub chosen_profile: (usize, usize),
    pub stage_values: (f64, f64),
}

/// Run-long counters a learner maintains about its own behavior. The
/// monotonicity counters exist to catch violations of properties the update
/// rule is supposed to guarantee: `q_increase_events` and the v-counters stay
/// zero unless something is wrong (or, for the values, unless a plain
/// equilibrium was encountered, which voids the guarantee).
#[derive(Debug, Clone)]
pub struct LearnerStats {
    pub successful_updates: u64,
    pub attempted_updates: u64,
    pub q_increase_events: u64,
    /// Smallest decrease among successful updates; `INFINITY` before the first.
    pub min_update_decrease: f64,
    pub v_increase_events: u64,
    pub max_v_increase: f64,
    /// Whether any solved stage game selected a plain equilibrium.
    pub plain_encountered: bool,
}

impl Default for LearnerStats {
    fn default() -> Self {
        Self {
            successful_updates: 0,
            attempted_updates: 0,
            q_increase_events: 0,
            min_update_decrease: f64::INFINITY,
            v_increase_events: 0,
            max_v_increase: 0.0,
            plain_encountered: false,
        }
    }
}

/// The contract the experiment loop drives: pick a joint action, digest the
/// observed transition, and expose the current tables cheaply enough that the
/// monitor can test Bellman residuals every step.
pub trait Learner {
    /// Samples both players' actions from the selected equilibrium of the
    /// current stage game at `s`.
    fn choose(&self, s: usize, rng: &mut dyn RngCore) -> (usize, usize);
    /// Digests one transition; `t` starts at 1 and never resets.
    fn observe(
        &mut self,
        t: u64,
        s: usize,
        a1: usize,
        a2: usize,
        r1: f64,
        r2: f64,
        s_next: usize,
    ) -> StepEvents;
    /// Immutable copy of the tables and their induced state values.
    fn snapshot(&self) -> QTables;
    fn q_entry(&self, player: usize, profile: usize) -> f64;
    /// Current equilibrium value of `s` (zero at terminals).
    fn state_value(&self, player: usize, s: usize) -> f64;
    /// The stationary policy the current tables induce (uniform at terminals).
    fn greedy_policy(&self) -> JointPolicy;
    /// Bumped whenever a table change moved some state's selected strategies;
    /// two equal versions mean the greedy policy is identical.
    fn policy_version(&self) -> u64;
    fn stats(&self) -> &LearnerStats;
}

/// Per-state cache of the selected equilibrium, kept in sync with the tables.
/// Only the state whose row an update touched needs re-solving, which keeps
/// the stage-game solver off the per-step hot path.
struct StageCache {
    eq: Vec<Option<EquilibriumProfile>>,
    v: [Vec<f64>; 2],
    policy_version: u64,
}

impl StageCache {
    fn build(model: &GameModel, q1: &[f64], q2: &[f64]) -> Result<Self, StageGameError> {
        let n = model.num_states();
        let mut eq: Vec<Option<EquilibriumProfile>> = vec![None; n];
        let mut v = [vec![0.0; n], vec![0.0; n]];
        for s in 0..n {
            if model.is_terminal(s) {
                continue;
            }
            let profile = select_equilibrium(&model.stage_at(s, q1, q2), BR_TOL)?;
            v[0][s] = profile.value_1;
            v[1][s] = profile.value_2;
            eq[s] = Some(profile);
        }
        Ok(Self {
            eq,
            v,
            policy_version: 0,
        })
    }

    /// Re-solves state `s` after its Q row changed, recording monotonicity
    /// breaches and strategy changes.
    fn refresh(
        &mut self,
        model: &GameModel,
        s: usize,
        q1: &[f64],
        q2: &[f64],
        stats: &mut LearnerStats,
    ) {
        let profile = select_equilibrium(&model.stage_at(s, q1, q2), BR_TOL)
            .expect("every finite stage game has an equilibrium");
        if profile.class == EquilibriumClass::Plain {
            stats.plain_encountered = true;
        }
        for (player, value) in [(0, profile.value_1), (1, profile.value_2)] {
            let rise = value - self.v[player][s];
            if rise > 0.0 {
                stats.v_increase_events += 1;
                stats.max_v_increase = stats.max_v_increase.max(rise);
            }
            self.v[player][s] = value;
        }
        let old = self.eq[s]
            .as_ref()
            .expect("refresh only touches non-terminal states");
        if old.strategy_1 != profile.strategy_1 || old.strategy_2 != profile.strategy_2 {
            self.policy_version += 1;
        }
        self.eq[s] = Some(profile);
    }

    fn sample(&self, s: usize, rng: &mut dyn RngCore) -> (usize, usize) {
        let eq = self.eq[s].as_ref().expect("cannot act in a terminal state");
        let a1 = eq.strategy_1.sample(rng);
        let a2 = eq.strategy_2.sample(rng);
        (a1, a2)
    }

    fn policy(&self, model: &GameModel) -> JointPolicy {
        let strategies = (0..model.num_states())
            .map(|s| match &self.eq[s] {
                Some(eq) => (eq.strategy_1.clone(), eq.strategy_2.clone()),
                None => (
                    MixedStrategy::uniform(model.num_actions_1()),
                    MixedStrategy::uniform(model.num_actions_2()),
                ),
            })
            .collect();
        JointPolicy { strategies }
    }
}

/// Delayed Nash Q-learning. Tables start at `v_max` and only ever move down:
/// a profile gathers `m` targets `r + gamma * v(s')` (state values read as of
/// each experience), and the average replaces the entry only when it undercuts
/// it by at least `2 * epsilon_1`, landing `epsilon_1` above the average. The
/// learn flag machinery stops a profile from averaging forever once updates
/// stop succeeding, and wakes it up again whenever any entry anywhere moves.
pub struct DelayedNashLearner {
    model: GameModel,
    m: u32,
    epsilon_1: f64,
    q: [Vec<f64>; 2],
    cache: StageCache,
    u: [Vec<f64>; 2],
    l: [Vec<u32>; 2],
    b: [Vec<u64>; 2],
    learn: [Vec<bool>; 2],
    t_star: u64,
    stats: LearnerStats,
}

impl DelayedNashLearner {
    pub fn new(model: &GameModel, m: u32, epsilon_1: f64) -> Result<Self, StageGameError> {
        assert!(m >= 1, "delay parameter m must be at least 1");
        assert!(epsilon_1 > 0.0, "update margin epsilon_1 must be positive");
        let np = model.num_profiles();
        let v_max = model.v_max();
        let q = [vec![v_max; np], vec![v_max; np]];
        let cache = StageCache::build(model, &q[0], &q[1])?;
        Ok(Self {
            model: model.clone(),
            m,
            epsilon_1,
            q,
            cache,
            u: [vec![0.0; np], vec![0.0; np]],
            l: [vec![0; np], vec![0; np]],
            b: [vec![0; np], vec![0; np]],
            learn: [vec![true; np], vec![true; np]],
            t_star: 0,
            stats: LearnerStats::default(),
        })
    }

    pub fn m(&self) -> u32 {
        self.m
    }

    pub fn epsilon_1(&self) -> f64 {
        self.epsilon_1
    }
}

impl Learner for DelayedNashLearner {
    fn choose(&self, s: usize, rng: &mut dyn RngCore) -> (usize, usize) {
        self.cache.sample(s, rng)
    }

    fn observe(
        &mut self,
        t: u64,
        s: usize,
        a1: usize,
        a2: usize,
        r1: f64,
        r2: f64,
        s_next: usize,
    ) -> StepEvents {
        let p = self.model.profile_index(s, a1, a2);
        let stage_values = (self.cache.v[0][s], self.cache.v[1][s]);
        // targets use the state values as of the beginning of this step
        let v_next = [self.cache.v[0][s_next], self.cache.v[1][s_next]];
        let rewards = [r1, r2];
        let mut attempted = Vec::new();
        let mut q_changed = false;

        for i in 0..2 {
            if self.b[i][p] <= self.t_star {
                self.learn[i][p] = true;
            }
            if !self.learn[i][p] {
                continue;
            }
            if self.l[i][p] == 0 {
                self.b[i][p] = t;
            }
            self.l[i][p] += 1;
            self.u[i][p] += rewards[i] + self.model.gamma() * v_next[i];
            if self.l[i][p] < self.m {
                continue;
            }
            let target = self.u[i][p] / f64::from(self.m);
            let success = self.q[i][p] - target >= 2.0 * self.epsilon_1;
            if success {
                let old = self.q[i][p];
                let new = target + self.epsilon_1;
                self.q[i][p] = new;
                self.t_star = t;
                q_changed = true;
                self.stats.successful_updates += 1;
                let decrease = old - new;
                self.stats.min_update_decrease = self.stats.min_update_decrease.min(decrease);
                if decrease < 0.0 {
                    self.stats.q_increase_events += 1;
                }
            } else if self.b[i][p] > self.t_star {
                self.learn[i][p] = false;
            }
            self.u[i][p] = 0.0;
            self.l[i][p] = 0;
            self.stats.attempted_updates += 1;
            attempted.push(AttemptedUpdate {
                player: i,
                profile: p,
                success,
            });
        }

        if q_changed {
            self.cache
                .refresh(&self.model, s, &self.q[0], &self.q[1], &mut self.stats);
        }
        StepEvents {
            attempted,
            q_changed,
            chosen_profile: (a1, a2),
            stage_values,
        }
    }

    fn snapshot(&self) -> QTables {
        QTables {
            q: self.q.clone(),
            v: self.cache.v.clone(),
        }
    }

    fn q_entry(&self, player: usize, profile: usize) -> f64 {
        self.q[player][profile]
    }

    fn state_value(&self, player: usize, s: usize) -> f64 {
        self.cache.v[player][s]
    }

    fn greedy_policy(&self) -> JointPolicy {
        self.cache.policy(&self.model)
    }

    fn policy_version(&self) -> u64 {
        self.cache.policy_version
    }

    fn stats(&self) -> &LearnerStats {
        &self.stats
    }
}

/// Classic Nash Q-learning: tables start at zero, every step rewrites the
/// executed profile's entries with step size `1/n(s,a1,a2)`, and behavior is
/// epsilon-greedy around the selected stage equilibrium.
pub struct NashQLearner {
    model: GameModel,
    exploration_rate: f64,
    q: [Vec<f64>; 2],
    cache: StageCache,
    visits: Vec<u32>,
    stats: LearnerStats,
}

impl NashQLearner {
    pub fn new(model: &GameModel, exploration_rate: f64) -> Result<Self, StageGameError> {
        assert!(
            (0.0..=1.0).contains(&exploration_rate),
            "exploration rate must lie in [0, 1]"
        );
        let np = model.num_profiles();
        let q = [vec![0.0; np], vec![0.0; np]];
        let cache = StageCache::build(model, &q[0], &q[1])?;
        Ok(Self {
            model: model.clone(),
            exploration_rate,
            q,
            cache,
            visits: vec![0; np],
            stats: LearnerStats::default(),
        })
    }
}

impl Learner for NashQLearner {
    fn choose(&self, s: usize, rng: &mut dyn RngCore) -> (usize, usize) {
        // one decision draw plus one draw per action, explore or not
        let explore: f64 = rng.gen();
        if explore < self.exploration_rate {
            let a1 = MixedStrategy::uniform(self.model.num_actions_1()).sample(rng);
            let a2 = MixedStrategy::uniform(self.model.num_actions_2()).sample(rng);
            (a1, a2)
        } else {
            self.cache.sample(s, rng)
        }
    }

    fn observe(
        &mut self,
        _t: u64,
        s: usize,
        a1: usize,
        a2: usize,
        r1: f64,
        r2: f64,
        s_next: usize,
    ) -> StepEvents {
        let p = self.model.profile_index(s, a1, a2);
        let stage_values = (self.cache.v[0][s], self.cache.v[1][s]);
        let v_next = [self.cache.v[0][s_next], self.cache.v[1][s_next]];
        self.visits[p] += 1;
        let alpha = 1.0 / f64::from(self.visits[p]);
        let mut q_changed = false;
        for (i, r) in [r1, r2].into_iter().enumerate() {
            let target = r + self.model.gamma() * v_next[i];
            let new = (1.0 - alpha) * self.q[i][p] + alpha * target;
            if new != self.q[i][p] {
                self.q[i][p] = new;
                q_changed = true;
            }
        }
        if q_changed {
            self.cache
                .refresh(&self.model, s, &self.q[0], &self.q[1], &mut self.stats);
        }
        StepEvents {
            attempted: Vec::new(),
            q_changed,
            chosen_profile: (a1, a2),
            stage_values,
        }
    }

    fn snapshot(&self) -> QTables {
        QTables {
            q: self.q.clone(),
            v: self.cache.v.clone(),
        }
    }

    fn q_entry(&self, player: usize, profile: usize) -> f64 {
        self.q[player][profile]
    }

    fn state_value(&self, player: usize, s: usize) -> f64 {
        self.cache.v[player][s]
    }

    fn greedy_policy(&self) -> JointPolicy {
        self.cache.policy(&self.model)
    }

    fn policy_version(&self) -> u64 {
        self.cache.policy_version
    }

    fn stats(&self) -> &LearnerStats {
        &self.stats
    }
}
