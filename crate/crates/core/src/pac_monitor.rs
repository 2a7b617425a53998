//! Run-time verification of the learner's sample-complexity story: membership
//! of state-action profiles in the known set, event counters checked against
//! their hard bounds, and periodic audits that compare the learner's tables
//! with the exact oracle (optimism), with the induced known-profile game
//! (accuracy), and with the true game (the 4-epsilon condition).
//!
//! The monitor sees the true model; the learner never does. Violations of the
//! probabilistic conditions are logged with their checkpoint, not fatal. The
//! counter bounds, in contrast, hold deterministically for the delayed update
//! rule, so exceeding one is reported as an error.

use crate::learners::{Learner, StepEvents};
use crate::markov_game::{build_known_game, policy_evaluation, GameModel, QTables};
use thiserror::Error;

/// Default audit cadence, in steps.
pub const DEFAULT_CHECKPOINT_INTERVAL: u64 = 10_000;

/// Slack for entrywise optimism comparisons against the oracle.
pub const OPTIMISM_TOL: f64 = 1e-6;

/// A deterministic counter bound was exceeded; this signals a bug in the
/// update bookkeeping, not bad luck.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum BoundViolation {
    #[error("successful updates reached {count}, above the bound 2*kappa = {bound}")]
    SuccessfulUpdates { count: u64, bound: f64 },
    #[error(
        "attempted updates reached {count}, above the bound 2|S||A1||A2|(1+2*kappa) = {bound}"
    )]
    AttemptedUpdates { count: u64, bound: f64 },
    #[error("escape events reached {count}, above the bound 4*m*kappa = {bound}")]
    EscapeEvents { count: u64, bound: f64 },
}

/// The tunable quantities the guarantees are phrased in. `epsilon_1` is the
/// update margin the learner actually uses; [`PacParams::from_epsilon`] derives
/// it as `(1 - gamma) * epsilon / 3`, and [`PacParams::with_epsilon_1`]
/// overrides it for configurations that quote the margin directly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PacParams {
    pub gamma: f64,
    pub epsilon: f64,
    pub delta: f64,
    pub epsilon_1: f64,
    pub m: u32,
}

impl PacParams {
    pub fn from_epsilon(gamma: f64, epsilon: f64, delta: f64, m: u32) -> Self {
        assert!((0.0..1.0).contains(&gamma), "gamma must lie in [0, 1)");
        assert!(epsilon > 0.0, "epsilon must be positive");
        assert!(
            (0.0..1.0).contains(&delta) && delta > 0.0,
            "delta must lie in (0, 1)"
        );
        assert!(m >= 1, "m must be at least 1");
        let epsilon_1 = (1.0 - gamma) * epsilon / 3.0;
        Self {
            gamma,
            epsilon,
            delta,
            epsilon_1,
            m,
        }
    }

    pub fn with_epsilon_1(mut self, epsilon_1: f64) -> Self {
        assert!(epsilon_1 > 0.0, "epsilon_1 must be positive");
        self.epsilon_1 = epsilon_1;
        self
    }

    pub fn v_max(&self) -> f64 {
        1.0 / (1.0 - self.gamma)
    }

    /// `|S||A1||A2| / ((1 - gamma) * epsilon_1)`.
    pub fn kappa(&self, dims: (usize, usize, usize)) -> f64 {
        let profiles = (dims.0 * dims.1 * dims.2) as f64;
        profiles / ((1.0 - self.gamma) * self.epsilon_1)
    }
}

/// Every theoretical quantity of the analysis as plain numbers, for the
/// bounds report and for asserting the counter limits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundsReport {
    pub epsilon_1: f64,
    pub v_max: f64,
    pub kappa: f64,
    /// Horizon after which truncation costs at most `epsilon`.
    pub horizon: u32,
    /// The sample size the proof needs for the failure probability `delta`.
    pub theoretical_m: f64,
    /// Update-plus-escape budget `(2 + 4m) * kappa` at the configured `m`.
    pub zeta_configured_m: f64,
    /// The same budget at the theoretical `m`.
    pub zeta_theoretical_m: f64,
    /// Steps outside the 4-epsilon guarantee, configured `m`.
    pub sample_bound_configured_m: f64,
    /// Steps outside the 4-epsilon guarantee, theoretical `m`.
    pub sample_bound_theoretical_m: f64,
}

/// Pure arithmetic on the parameter formulas; identical inputs give identical
/// outputs bit for bit.
pub fn compute_bounds(params: &PacParams, dims: (usize, usize, usize)) -> BoundsReport {
    let profiles = (dims.0 * dims.1 * dims.2) as f64;
    let one_minus = 1.0 - params.gamma;
    let kappa = params.kappa(dims);
    let theoretical_m = (6.0 * profiles * (1.0 + 2.0 * kappa) / params.delta).ln()
        / (2.0 * params.epsilon_1 * params.epsilon_1 * one_minus * one_minus);
    let zeta = |m: f64| (2.0 + 4.0 * m) * kappa;
    let sample = |zeta: f64| {
        zeta / (params.epsilon * one_minus * one_minus)
            * (1.0 / params.delta).ln()
            * (1.0 / (params.epsilon * one_minus)).ln()
    };
    let zeta_configured_m = zeta(f64::from(params.m));
    let zeta_theoretical_m = zeta(theoretical_m);
    BoundsReport {
        epsilon_1: params.epsilon_1,
        v_max: params.v_max(),
        kappa,
        horizon: crate::markov_game::h_step_horizon(params.gamma, params.epsilon),
        theoretical_m,
        zeta_configured_m,
        zeta_theoretical_m,
        sample_bound_configured_m: sample(zeta_configured_m),
        sample_bound_theoretical_m: sample(zeta_theoretical_m),
    }
}

/// Whether both players' Bellman residuals of `q` against the true model are
/// at most `3 * epsilon_1` at the given profile.
pub fn known_set_membership(
    model: &GameModel,
    q: &QTables,
    profile: usize,
    epsilon_1: f64,
) -> bool {
    for player in 0..2 {
        let mut backup = model.reward(player, profile);
        for &(dest, prob) in model.transition_row(profile) {
            backup += model.gamma() * prob * q.v[player][dest];
        }
        if q.q[player][profile] - backup > 3.0 * epsilon_1 {
            return false;
        }
    }
    true
}

/// One audit's findings plus the counter state at that step.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointRecord {
    pub t: u64,
    /// `(player, profile)` pairs with `Q_t < Q* - OPTIMISM_TOL`.
    pub optimism_violations: u64,
    /// States where `v_t < v* - epsilon` (not part of the serialized line).
    pub value_optimism_violations: u64,
    /// States where `v_t` exceeds the known-game value of the greedy policy
    /// by more than `epsilon`.
    pub accuracy_violations: u64,
    /// Whether the greedy policy's true value at the current state is within
    /// `4 * epsilon` of (or above) the equilibrium value.
    pub eps4_ok: bool,
    pub k_size: usize,
    pub successful: u64,
    pub attempted: u64,
    pub escapes: u64,
}

impl CheckpointRecord {
    /// The line format checkpoint streams use.
    pub fn line(&self) -> String {
        format!(
            "{}, {}, {}, {}, {}, {}, {}, {}",
            self.t,
            self.optimism_violations,
            self.accuracy_violations,
            self.eps4_ok,
            self.k_size,
            self.successful,
            self.attempted,
            self.escapes
        )
    }
}

/// Counters and audit records accumulated over one run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MonitorLog {
    pub successful_updates: u64,
    pub attempted_updates: u64,
    pub escape_events: u64,
    pub optimism_violations: u64,
    pub accuracy_violations: u64,
    pub eps_or_better_violations: u64,
    /// Known-set flips at profiles other than the updated one, caused by a
    /// state value change propagating into predecessors' residuals.
    pub k_value_propagation_changes: u64,
    pub checkpoints: Vec<CheckpointRecord>,
}

/// Tracks the known set incrementally and audits the learner against the
/// oracle. One monitor accompanies one run.
pub struct PacMonitor {
    model: GameModel,
    params: PacParams,
    oracle: Option<QTables>,
    known: Vec<bool>,
    known_count: usize,
    /// For each state, the profiles whose transition rows can reach it.
    predecessors: Vec<Vec<usize>>,
    bound_successful: f64,
    bound_attempted: f64,
    bound_escapes: f64,
    log: MonitorLog,
}

impl PacMonitor {
    pub fn new(
        model: &GameModel,
        params: PacParams,
        oracle: Option<QTables>,
        learner: &dyn Learner,
    ) -> Self {
        let kappa = params.kappa((
            model.num_states(),
            model.num_actions_1(),
            model.num_actions_2(),
        ));
        let profiles = model.num_profiles();
        let mut predecessors: Vec<Vec<usize>> = vec![Vec::new(); model.num_states()];
        for p in 0..profiles {
            for &(dest, _) in model.transition_row(p) {
                if predecessors[dest].last() != Some(&p) {
                    predecessors[dest].push(p);
                }
            }
        }
        let mut monitor = Self {
            model: model.clone(),
            params,
            oracle,
            known: vec![false; profiles],
            known_count: 0,
            predecessors,
            bound_successful: 2.0 * kappa,
            bound_attempted: 2.0 * profiles as f64 * (1.0 + 2.0 * kappa),
            bound_escapes: 4.0 * f64::from(params.m) * kappa,
            log: MonitorLog::default(),
        };
        for p in 0..profiles {
            if monitor.membership(p, learner) {
                monitor.known[p] = true;
                monitor.known_count += 1;
            }
        }
        monitor
    }

    fn membership(&self, profile: usize, learner: &dyn Learner) -> bool {
        for player in 0..2 {
            let mut backup = self.model.reward(player, profile);
            for &(dest, prob) in self.model.transition_row(profile) {
                backup += self.model.gamma() * prob * learner.state_value(player, dest);
            }
            if learner.q_entry(player, profile) - backup > 3.0 * self.params.epsilon_1 {
                return false;
            }
        }
        true
    }

    fn recheck(&mut self, profile: usize, learner: &dyn Learner) -> bool {
        let now = self.membership(profile, learner);
        if now != self.known[profile] {
            self.known[profile] = now;
            if now {
                self.known_count += 1;
            } else {
                self.known_count -= 1;
            }
            return true;
        }
        false
    }

    /// Whether executing `(a1, a2)` at `s` right now is an escape event.
    pub fn is_escape(&self, s: usize, a1: usize, a2: usize) -> bool {
        !self.known[self.model.profile_index(s, a1, a2)]
    }

    pub fn known_count(&self) -> usize {
        self.known_count
    }

    pub fn log(&self) -> &MonitorLog {
        &self.log
    }

    pub fn into_log(self) -> MonitorLog {
        self.log
    }

    /// Ingests one step's events: counts them against the hard bounds and
    /// propagates any table change into the known set. `escaped` must have
    /// been computed with [`PacMonitor::is_escape`] before the learner saw the
    /// transition.
    pub fn record_step(
        &mut self,
        s: usize,
        events: &StepEvents,
        escaped: bool,
        learner: &dyn Learner,
    ) -> Result<(), BoundViolation> {
        if escaped {
            self.log.escape_events += 1;
        }
        for a in &events.attempted {
            self.log.attempted_updates += 1;
            if a.success {
                self.log.successful_updates += 1;
            }
        }

        if events.q_changed {
            let (a1, a2) = events.chosen_profile;
            let p = self.model.profile_index(s, a1, a2);
            self.recheck(p, learner);
            // a value change at s moves the residual of everything that can
            // reach s, even profiles that saw no update of their own
            let v_changed = events.stage_values.0 != learner.state_value(0, s)
                || events.stage_values.1 != learner.state_value(1, s);
            if v_changed {
                for i in 0..self.predecessors[s].len() {
                    let pred = self.predecessors[s][i];
                    if pred != p && self.recheck(pred, learner) {
                        self.log.k_value_propagation_changes += 1;
                    }
                }
            }
        }

        if self.log.successful_updates as f64 > self.bound_successful {
            return Err(BoundViolation::SuccessfulUpdates {
                count: self.log.successful_updates,
                bound: self.bound_successful,
            });
        }
        if self.log.attempted_updates as f64 > self.bound_attempted {
            return Err(BoundViolation::AttemptedUpdates {
                count: self.log.attempted_updates,
                bound: self.bound_attempted,
            });
        }
        if self.log.escape_events as f64 > self.bound_escapes {
            return Err(BoundViolation::EscapeEvents {
                count: self.log.escape_events,
                bound: self.bound_escapes,
            });
        }
        Ok(())
    }

    /// Full audit at step `t` with the game currently at `current_state`:
    /// verifies the incremental known set against a from-scratch scan, then
    /// runs the optimism, accuracy, and 4-epsilon checks. Findings accumulate
    /// in the log; nothing here stops a run.
    pub fn audit_checkpoint(
        &mut self,
        t: u64,
        current_state: usize,
        learner: &dyn Learner,
    ) -> CheckpointRecord {
        // the incremental set must agree with the definition applied afresh
        let mut fresh_count = 0;
        for p in 0..self.model.num_profiles() {
            let fresh = self.membership(p, learner);
            assert_eq!(
                fresh, self.known[p],
                "incrementally tracked known set diverged at profile {p}"
            );
            if fresh {
                fresh_count += 1;
            }
        }
        assert_eq!(fresh_count, self.known_count);

        let eps = self.params.epsilon;
        let mut optimism_violations = 0;
        let mut value_optimism_violations = 0;
        let mut eps4_ok = true;
        if let Some(oracle) = &self.oracle {
            for player in 0..2 {
                for p in 0..self.model.num_profiles() {
                    if learner.q_entry(player, p) < oracle.q[player][p] - OPTIMISM_TOL {
                        optimism_violations += 1;
                    }
                }
                for s in 0..self.model.num_states() {
                    if learner.state_value(player, s) < oracle.v[player][s] - eps {
                        value_optimism_violations += 1;
                    }
                }
            }
        }

        let snapshot = learner.snapshot();
        let policy = learner.greedy_policy();
        let known_game = build_known_game(&self.model, &self.known, &snapshot);
        let extended = policy.extended(
            known_game.num_states(),
            self.model.num_actions_1(),
            self.model.num_actions_2(),
        );
        let v_known = policy_evaluation(&known_game, &extended, 1e-9)
            .expect("known-game policy evaluation is a discounted contraction");
        let mut accuracy_violations = 0;
        for player in 0..2 {
            for s in 0..self.model.num_states() {
                if learner.state_value(player, s) - v_known[player][s] > eps {
                    accuracy_violations += 1;
                }
            }
        }

        if let Some(oracle) = &self.oracle {
            let v_true = policy_evaluation(&self.model, &policy, 1e-9)
                .expect("policy evaluation is a discounted contraction");
            for player in 0..2 {
                if v_true[player][current_state] < oracle.v[player][current_state] - 4.0 * eps {
                    eps4_ok = false;
                }
            }
        }

        let record = CheckpointRecord {
            t,
            optimism_violations,
            value_optimism_violations,
            accuracy_violations,
            eps4_ok,
            k_size: self.known_count,
            successful: self.log.successful_updates,
            attempted: self.log.attempted_updates,
            escapes: self.log.escape_events,
        };
        self.log.optimism_violations += optimism_violations;
        self.log.accuracy_violations += accuracy_violations;
        if !eps4_ok {
            self.log.eps_or_better_violations += 1;
        }
        self.log.checkpoints.push(record.clone());
        record
    }
}
