//! Tabular two-player Markov games: the model type, transition sampling, policy
//! evaluation, truncated-horizon values, and the induced "known game" in which
//! unexplored action profiles are rerouted to absorbing states that pay out the
//! learner's current optimistic estimate.

use crate::stage_game::{select_equilibrium, BimatrixGame, MixedStrategy, StageGameError, BR_TOL};
use rand::{Rng, RngCore};
use thiserror::Error;

/// Transition rows must sum to one within this bound.
pub const ROW_SUM_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("inconsistent table dimensions")]
    BadDims,
    #[error("discount factor must lie in [0, 1), got {0}")]
    BadGamma(f64),
    #[error("initial state {0} out of range")]
    BadInitial(usize),
    #[error("transition row for state {state} profile ({a1}, {a2}) is invalid: {reason}")]
    BadRow {
        state: usize,
        a1: usize,
        a2: usize,
        reason: String,
    },
    #[error("reward outside [0, 1] at state {state} profile ({a1}, {a2})")]
    RewardRange { state: usize, a1: usize, a2: usize },
    #[error("terminal state {0} must self-loop with zero reward under every profile")]
    TerminalRow(usize),
    #[error("state {0} is terminal; episodes must be reset instead of stepped")]
    TerminalState(usize),
    #[error("policy evaluation did not converge: residual {residual} after {iterations} sweeps")]
    NonConvergence { residual: f64, iterations: usize },
    #[error("text format error on line {line}: {msg}")]
    TextFormat { line: usize, msg: String },
    #[error(transparent)]
    Stage(#[from] StageGameError),
}

/// Everything needed to build a [`GameModel`]. Transition rows are sparse lists
/// of `(successor, probability)` indexed by profile; see
/// [`GameModel::profile_index`] for the layout.
#[derive(Debug, Clone)]
pub struct ModelParts {
    pub num_states: usize,
    pub num_actions_1: usize,
    pub num_actions_2: usize,
    pub gamma: f64,
    pub initial: usize,
    pub terminals: Vec<bool>,
    pub transitions: Vec<Vec<(usize, f64)>>,
    pub reward_1: Vec<f64>,
    pub reward_2: Vec<f64>,
    pub labels: Option<Vec<String>>,
}

/// A finite two-player general-sum Markov game. Rewards live on `[0, 1]` and
/// depend on `(s, a1, a2)`; terminal states absorb with zero reward and mark
/// episode boundaries.
#[derive(Debug, Clone, PartialEq)]
pub struct GameModel {
    num_states: usize,
    num_actions_1: usize,
    num_actions_2: usize,
    gamma: f64,
    initial: usize,
    terminals: Vec<bool>,
    transitions: Vec<Vec<(usize, f64)>>,
    reward_1: Vec<f64>,
    reward_2: Vec<f64>,
    labels: Vec<String>,
}

impl GameModel {
    pub fn from_parts(parts: ModelParts) -> Result<Self, ModelError> {
        Self::build(parts, false)
    }

    fn build(parts: ModelParts, allow_synthetic_rewards: bool) -> Result<Self, ModelError> {
        let ModelParts {
            num_states,
            num_actions_1,
            num_actions_2,
            gamma,
            initial,
            terminals,
            transitions,
            reward_1,
            reward_2,
            labels,
        } = parts;
        let profiles = num_states * num_actions_1 * num_actions_2;
        if num_states == 0
            || num_actions_1 == 0
            || num_actions_2 == 0
            || terminals.len() != num_states
            || transitions.len() != profiles
            || reward_1.len() != profiles
            || reward_2.len() != profiles
        {
            return Err(ModelError::BadDims);
        }
        if !(0.0..1.0).contains(&gamma) {
            return Err(ModelError::BadGamma(gamma));
        }
        if initial >= num_states {
            return Err(ModelError::BadInitial(initial));
        }
        let labels = match labels {
            Some(l) if l.len() != num_states => return Err(ModelError::BadDims),
            Some(l) => l,
            None => (0..num_states).map(|s| s.to_string()).collect(),
        };
        let model = Self {
            num_states,
            num_actions_1,
            num_actions_2,
            gamma,
            initial,
            terminals,
            transitions,
            reward_1,
            reward_2,
            labels,
        };
        for s in 0..num_states {
            for a1 in 0..num_actions_1 {
                for a2 in 0..num_actions_2 {
                    let p = model.profile_index(s, a1, a2);
                    let row = &model.transitions[p];
                    let bad = |reason: &str| ModelError::BadRow {
                        state: s,
                        a1,
                        a2,
                        reason: reason.into(),
                    };
                    if row.is_empty() {
                        return Err(bad("empty"));
                    }
                    let mut sum = 0.0;
                    for &(dest, prob) in row {
                        if dest >= num_states {
                            return Err(bad("successor out of range"));
                        }
                        if !(prob > 0.0 && prob <= 1.0) {
                            return Err(bad("probability outside (0, 1]"));
                        }
                        sum += prob;
                    }
                    if (sum - 1.0).abs() > ROW_SUM_TOL {
                        return Err(bad(&format!("probabilities sum to {sum}")));
                    }
                    for (i, &(dest, _)) in row.iter().enumerate() {
                        if row[..i].iter().any(|&(d, _)| d == dest) {
                            return Err(bad("duplicate successor"));
                        }
                    }
                    let (r1, r2) = (model.reward_1[p], model.reward_2[p]);
                    if !r1.is_finite() || !r2.is_finite() {
                        return Err(bad("non-finite reward"));
                    }
                    if !allow_synthetic_rewards
                        && !((0.0..=1.0).contains(&r1) && (0.0..=1.0).contains(&r2))
                    {
                        return Err(ModelError::RewardRange { state: s, a1, a2 });
                    }
                    if model.terminals[s] && (row != &[(s, 1.0)] || r1 != 0.0 || r2 != 0.0) {
                        return Err(ModelError::TerminalRow(s));
                    }
                }
            }
        }
        Ok(model)
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions_1(&self) -> usize {
        self.num_actions_1
    }

    pub fn num_actions_2(&self) -> usize {
        self.num_actions_2
    }

    pub fn num_profiles(&self) -> usize {
        self.num_states * self.num_actions_1 * self.num_actions_2
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// Largest attainable discounted return, `1 / (1 - gamma)`.
    pub fn v_max(&self) -> f64 {
        1.0 / (1.0 - self.gamma)
    }

    pub fn initial_state(&self) -> usize {
        self.initial
    }

    pub fn is_terminal(&self, s: usize) -> bool {
        self.terminals[s]
    }

    pub fn label(&self, s: usize) -> &str {
        &self.labels[s]
    }

    #[inline]
    pub fn profile_index(&self, s: usize, a1: usize, a2: usize) -> usize {
        (s * self.num_actions_1 + a1) * self.num_actions_2 + a2
    }

    pub fn transition_row(&self, profile: usize) -> &[(usize, f64)] {
        &self.transitions[profile]
    }

    #[inline]
    pub fn reward(&self, player: usize, profile: usize) -> f64 {
        if player == 0 {
            self.reward_1[profile]
        } else {
            self.reward_2[profile]
        }
    }

    /// Stage game at `s` induced by per-profile tables `q1`, `q2` (row player 1).
    pub fn stage_at(&self, s: usize, q1: &[f64], q2: &[f64]) -> BimatrixGame {
        let base = self.profile_index(s, 0, 0);
        let len = self.num_actions_1 * self.num_actions_2;
        BimatrixGame::from_flat(
            self.num_actions_1,
            self.num_actions_2,
            q1[base..base + len].to_vec(),
            q2[base..base + len].to_vec(),
        )
        .expect("tables indexed by profile always produce a well-shaped stage game")
    }
}

/// Draws `(s', r1, r2)` for one joint step. Consumes exactly one `f64` from the
/// generator, so a fixed seed replays the same episode.
pub fn sample_transition(
    model: &GameModel,
    s: usize,
    a1: usize,
    a2: usize,
    rng: &mut dyn RngCore,
) -> Result<(usize, f64, f64), ModelError> {
    if model.is_terminal(s) {
        return Err(ModelError::TerminalState(s));
    }
    let p = model.profile_index(s, a1, a2);
    let row = model.transition_row(p);
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut dest = row[row.len() - 1].0;
    for &(d, prob) in row {
        acc += prob;
        if u < acc {
            dest = d;
            break;
        }
    }
    Ok((dest, model.reward(0, p), model.reward(1, p)))
}

/// Per-profile Q tables for both players together with the per-state values the
/// shared equilibrium selection rule induces (zero at terminals).
#[derive(Debug, Clone, PartialEq)]
pub struct QTables {
    pub q: [Vec<f64>; 2],
    pub v: [Vec<f64>; 2],
}

impl QTables {
    /// Derives stage values from raw tables by solving each non-terminal state's
    /// stage game with the deterministic selection rule.
    pub fn derive(model: &GameModel, q1: Vec<f64>, q2: Vec<f64>) -> Result<Self, StageGameError> {
        assert_eq!(q1.len(), model.num_profiles());
        assert_eq!(q2.len(), model.num_profiles());
        let mut v = [vec![0.0; model.num_states()], vec![0.0; model.num_states()]];
        for s in 0..model.num_states() {
            if model.is_terminal(s) {
                continue;
            }
            let eq = select_equilibrium(&model.stage_at(s, &q1, &q2), BR_TOL)?;
            v[0][s] = eq.value_1;
            v[1][s] = eq.value_2;
        }
        Ok(Self { q: [q1, q2], v })
    }
}

/// One mixed strategy per player per state.
#[derive(Debug, Clone, PartialEq)]
pub struct JointPolicy {
    pub strategies: Vec<(MixedStrategy, MixedStrategy)>,
}

impl JointPolicy {
    pub fn num_states(&self) -> usize {
        self.strategies.len()
    }

    /// Pads the policy with uniform strategies up to `num_states` states, for
    /// evaluating it on a model that appended synthetic states.
    pub fn extended(
        &self,
        num_states: usize,
        num_actions_1: usize,
        num_actions_2: usize,
    ) -> JointPolicy {
        let mut strategies = self.strategies.clone();
        while strategies.len() < num_states {
            strategies.push((
                MixedStrategy::uniform(num_actions_1),
                MixedStrategy::uniform(num_actions_2),
            ));
        }
        JointPolicy { strategies }
    }
}

/// Builds the game in which only `known` profiles keep their true dynamics.
///
/// Every unknown non-terminal profile `(s, a1, a2)` is rerouted to a fresh
/// absorbing state paying `(1 - gamma) * q_i(s, a1, a2)` forever, so the value
/// of taking an unknown profile is exactly the table entry. Terminal states
/// keep their absorbing rows: their values are pinned to zero everywhere else
/// in the crate, so rerouting them would only manufacture phantom dynamics.
/// `known` is indexed by profile.
pub fn build_known_game(model: &GameModel, known: &[bool], q: &QTables) -> GameModel {
    assert_eq!(known.len(), model.num_profiles());
    let n = model.num_states();
    let mut num_states = n;
    let mut labels: Vec<String> = (0..n).map(|s| model.label(s).to_string()).collect();
    let mut terminals = model.terminals.clone();
    let mut transitions: Vec<Vec<(usize, f64)>> = Vec::with_capacity(model.num_profiles());
    let mut reward_1 = Vec::with_capacity(model.num_profiles());
    let mut reward_2 = Vec::with_capacity(model.num_profiles());
    let mut z_targets: Vec<(usize, f64, f64)> = Vec::new();

    for s in 0..n {
        for a1 in 0..model.num_actions_1() {
            for a2 in 0..model.num_actions_2() {
                let p = model.profile_index(s, a1, a2);
                if known[p] || model.is_terminal(s) {
                    transitions.push(model.transition_row(p).to_vec());
                    reward_1.push(model.reward(0, p));
                    reward_2.push(model.reward(1, p));
                } else {
                    let r1 = (1.0 - model.gamma()) * q.q[0][p];
                    let r2 = (1.0 - model.gamma()) * q.q[1][p];
                    let z = num_states;
                    num_states += 1;
                    labels.push(format!("z({s},{a1},{a2})"));
                    terminals.push(false);
                    transitions.push(vec![(z, 1.0)]);
                    reward_1.push(r1);
                    reward_2.push(r2);
                    z_targets.push((z, r1, r2));
                }
            }
        }
    }
    for (z, r1, r2) in z_targets {
        for _ in 0..model.num_actions_1() * model.num_actions_2() {
            transitions.push(vec![(z, 1.0)]);
            reward_1.push(r1);
            reward_2.push(r2);
        }
    }

    GameModel::build(
        ModelParts {
            num_states,
            num_actions_1: model.num_actions_1(),
            num_actions_2: model.num_actions_2(),
            gamma: model.gamma(),
            initial: model.initial_state(),
            terminals,
            transitions,
            reward_1,
            reward_2,
            labels: Some(labels),
        },
        true,
    )
    .expect("rerouting known-game rows preserves model validity")
}

/// Sweep cap that already guarantees the tolerance for a gamma-contraction,
/// plus slack.
fn sweep_cap(gamma: f64, tol: f64) -> usize {
    let x = (tol * (1.0 - gamma)).ln() / gamma.ln();
    let base = if x.is_finite() && x > 0.0 {
        x.ceil() as usize
    } else {
        0
    };
    base + 64
}

struct PolicyDynamics {
    reward: [Vec<f64>; 2],
    rows: Vec<Vec<(usize, f64)>>,
}

/// Collapses model and policy into one Markov reward process per player.
fn policy_dynamics(model: &GameModel, policy: &JointPolicy) -> PolicyDynamics {
    let n = model.num_states();
    assert_eq!(policy.num_states(), n, "policy must cover every state");
    let mut reward = [vec![0.0; n], vec![0.0; n]];
    let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    let mut acc = vec![0.0; n];
    for s in 0..n {
        if model.is_terminal(s) {
            continue;
        }
        let (p1, p2) = &policy.strategies[s];
        let mut touched: Vec<usize> = Vec::new();
        for (a1, &w1) in p1.probs().iter().enumerate() {
            if w1 == 0.0 {
                continue;
            }
            for (a2, &w2) in p2.probs().iter().enumerate() {
                if w2 == 0.0 {
                    continue;
                }
                let w = w1 * w2;
                let p = model.profile_index(s, a1, a2);
                reward[0][s] += w * model.reward(0, p);
                reward[1][s] += w * model.reward(1, p);
                for &(dest, prob) in model.transition_row(p) {
                    if acc[dest] == 0.0 {
                        touched.push(dest);
                    }
                    acc[dest] += w * prob;
                }
            }
        }
        touched.sort_unstable();
        rows[s] = touched.iter().map(|&d| (d, acc[d])).collect();
        for &d in &touched {
            acc[d] = 0.0;
        }
    }
    PolicyDynamics { reward, rows }
}

/// Iterative policy evaluation for both players at once. The returned vectors
/// have Bellman residual at most `tol` in every state; terminal states are
/// pinned to zero.
pub fn policy_evaluation(
    model: &GameModel,
    policy: &JointPolicy,
    tol: f64,
) -> Result<[Vec<f64>; 2], ModelError> {
    let dyn_ = policy_dynamics(model, policy);
    let n = model.num_states();
    let gamma = model.gamma();
    let mut v = [vec![0.0; n], vec![0.0; n]];
    let mut next = [vec![0.0; n], vec![0.0; n]];
    let cap = sweep_cap(gamma, tol);
    let mut residual = f64::INFINITY;
    for iter in 0..cap {
        residual = 0.0;
        for s in 0..n {
            if model.is_terminal(s) {
                continue;
            }
            for player in 0..2 {
                let mut x = dyn_.reward[player][s];
                for &(dest, prob) in &dyn_.rows[s] {
                    x += gamma * prob * v[player][dest];
                }
                residual = residual.max((x - v[player][s]).abs());
                next[player][s] = x;
            }
        }
        std::mem::swap(&mut v, &mut next);
        if residual <= tol {
            return Ok(v);
        }
        let _ = iter;
    }
    Err(ModelError::NonConvergence {
        residual,
        iterations: cap,
    })
}

/// Expected discounted return truncated after `h` transitions, i.e. the sum of
/// the first `h + 1` reward terms.
pub fn h_step_values(model: &GameModel, policy: &JointPolicy, h: u32) -> [Vec<f64>; 2] {
    let dyn_ = policy_dynamics(model, policy);
    let n = model.num_states();
    let gamma = model.gamma();
    let mut v = [dyn_.reward[0].clone(), dyn_.reward[1].clone()];
    let mut next = [vec![0.0; n], vec![0.0; n]];
    for _ in 0..h {
        for s in 0..n {
            if model.is_terminal(s) {
                continue;
            }
            for player in 0..2 {
                let mut x = dyn_.reward[player][s];
                for &(dest, prob) in &dyn_.rows[s] {
                    x += gamma * prob * v[player][dest];
                }
                next[player][s] = x;
            }
        }
        std::mem::swap(&mut v, &mut next);
    }
    v
}

/// Truncated value of a single state; see [`h_step_values`].
pub fn h_step_value(model: &GameModel, policy: &JointPolicy, s: usize, h: u32) -> (f64, f64) {
    let v = h_step_values(model, policy, h);
    (v[0][s], v[1][s])
}

/// Horizon after which the discounted tail is negligible at accuracy `epsilon`:
/// `ceil(ln(1 / ((1 - gamma) * epsilon)) / (1 - gamma))`.
pub fn h_step_horizon(gamma: f64, epsilon: f64) -> u32 {
    let x = (1.0 / ((1.0 - gamma) * epsilon)).ln() / (1.0 - gamma);
    if x > 0.0 {
        x.ceil() as u32
    } else {
        0
    }
}

/// Parses the plain-text model format.
///
/// The header line is
/// `states N actions1 K1 actions2 K2 gamma G initial I terminals t1,t2,...`
/// followed by one line per transition: `s a1 a2 s' prob r1 r2`. Blank lines
/// and `#` comments are ignored. Rows for terminal states may be omitted; they
/// default to the mandatory zero-reward self-loop.
pub fn parse_game_model(text: &str) -> Result<GameModel, ModelError> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("").trim()))
        .filter(|(_, l)| !l.is_empty());

    let (header_line, header) = lines.next().ok_or_else(|| ModelError::TextFormat {
        line: 0,
        msg: "empty input".into(),
    })?;
    let tokens: Vec<&str> = header.split_whitespace().collect();
    let fail = |msg: &str| ModelError::TextFormat {
        line: header_line,
        msg: msg.into(),
    };
    if tokens.len() < 10
        || tokens[0] != "states"
        || tokens[2] != "actions1"
        || tokens[4] != "actions2"
        || tokens[6] != "gamma"
        || tokens[8] != "initial"
    {
        return Err(fail(
            "expected `states N actions1 K1 actions2 K2 gamma G initial I terminals ...`",
        ));
    }
    let num_states: usize = tokens[1].parse().map_err(|_| fail("bad state count"))?;
    let num_actions_1: usize = tokens[3].parse().map_err(|_| fail("bad actions1"))?;
    let num_actions_2: usize = tokens[5].parse().map_err(|_| fail("bad actions2"))?;
    let gamma: f64 = tokens[7].parse().map_err(|_| fail("bad gamma"))?;
    let initial: usize = tokens[9].parse().map_err(|_| fail("bad initial state"))?;
    let mut terminals = vec![false; num_states];
    match tokens.get(10) {
        Some(&"terminals") => {
            if let Some(list) = tokens.get(11) {
                for part in list.split(',').filter(|p| !p.is_empty()) {
                    let t: usize = part.parse().map_err(|_| fail("bad terminal id"))?;
                    if t >= num_states {
                        return Err(fail("terminal id out of range"));
                    }
                    terminals[t] = true;
                }
            }
        }
        Some(_) => return Err(fail("expected `terminals`")),
        None => return Err(fail("missing `terminals`")),
    }

    let profiles = num_states * num_actions_1 * num_actions_2;
    let mut transitions: Vec<Vec<(usize, f64)>> = vec![Vec::new(); profiles];
    let mut reward_1 = vec![f64::NAN; profiles];
    let mut reward_2 = vec![f64::NAN; profiles];
    for (line, body) in lines {
        let fail = |msg: &str| ModelError::TextFormat {
            line,
            msg: msg.into(),
        };
        let f: Vec<&str> = body.split_whitespace().collect();
        if f.len() != 7 {
            return Err(fail("expected `s a1 a2 s' prob r1 r2`"));
        }
        let s: usize = f[0].parse().map_err(|_| fail("bad state"))?;
        let a1: usize = f[1].parse().map_err(|_| fail("bad action"))?;
        let a2: usize = f[2].parse().map_err(|_| fail("bad action"))?;
        let dest: usize = f[3].parse().map_err(|_| fail("bad successor"))?;
        let prob: f64 = f[4].parse().map_err(|_| fail("bad probability"))?;
        let r1: f64 = f[5].parse().map_err(|_| fail("bad reward"))?;
        let r2: f64 = f[6].parse().map_err(|_| fail("bad reward"))?;
        if s >= num_states || a1 >= num_actions_1 || a2 >= num_actions_2 {
            return Err(fail("indices out of range"));
        }
        let p = (s * num_actions_1 + a1) * num_actions_2 + a2;
        if reward_1[p].is_nan() {
            reward_1[p] = r1;
            reward_2[p] = r2;
        } else if reward_1[p] != r1 || reward_2[p] != r2 {
            return Err(fail("conflicting rewards for one profile"));
        }
        transitions[p].push((dest, prob));
    }

    for s in 0..num_states {
        for a1 in 0..num_actions_1 {
            for a2 in 0..num_actions_2 {
                let p = (s * num_actions_1 + a1) * num_actions_2 + a2;
                if transitions[p].is_empty() {
                    if terminals[s] {
                        transitions[p].push((s, 1.0));
                        reward_1[p] = 0.0;
                        reward_2[p] = 0.0;
                    } else {
                        return Err(ModelError::TextFormat {
                            line: 0,
                            msg: format!("missing transitions for state {s} profile ({a1}, {a2})"),
                        });
                    }
                }
            }
        }
    }

    GameModel::from_parts(ModelParts {
        num_states,
        num_actions_1,
        num_actions_2,
        gamma,
        initial,
        terminals,
        transitions,
        reward_1,
        reward_2,
        labels: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// start --> goal --> goal --> ... ; the goal profile pays 1 and self-loops.
    fn chain(gamma: f64) -> GameModel {
        GameModel::from_parts(ModelParts {
            num_states: 2,
            num_actions_1: 1,
            num_actions_2: 1,
            gamma,
            initial: 0,
            terminals: vec![false, false],
            transitions: vec![vec![(1, 1.0)], vec![(1, 1.0)]],
            reward_1: vec![0.0, 1.0],
            reward_2: vec![0.0, 1.0],
            labels: None,
        })
        .unwrap()
    }

    fn trivial_policy(model: &GameModel) -> JointPolicy {
        JointPolicy {
            strategies: (0..model.num_states())
                .map(|_| {
                    (
                        MixedStrategy::uniform(model.num_actions_1()),
                        MixedStrategy::uniform(model.num_actions_2()),
                    )
                })
                .collect(),
        }
    }

    #[test]
    fn geometric_series_value() {
        let m = chain(0.9);
        let v = policy_evaluation(&m, &trivial_policy(&m), 1e-12).unwrap();
        // v(goal) = 1 / (1 - gamma), v(start) = gamma * v(goal)
        assert!((v[0][1] - 10.0).abs() < 1e-9);
        assert!((v[0][0] - 9.0).abs() < 1e-9);
    }

    #[test]
    fn truncated_values_by_hand() {
        let m = chain(0.5);
        let pol = trivial_policy(&m);
        // start: r0 = 0, r1 = 0.5, r2 = 0.25
        assert_eq!(h_step_value(&m, &pol, 0, 2), (0.75, 0.75));
        // H = 0 keeps only the immediate reward
        assert_eq!(h_step_value(&m, &pol, 0, 0), (0.0, 0.0));
        assert_eq!(h_step_value(&m, &pol, 1, 0), (1.0, 1.0));
    }

    #[test]
    fn horizon_formula() {
        assert_eq!(h_step_horizon(0.8, 0.06), 23);
        assert_eq!(h_step_horizon(0.5, 1.0), 2);
        assert_eq!(h_step_horizon(0.5, 10.0), 0);
    }

    #[test]
    fn bellman_residual_below_tol_everywhere() {
        // a small noisy model exercises the sweep bound
        let mut transitions = Vec::new();
        let mut rewards = Vec::new();
        for p in 0..5 * 2 * 2 {
            let a = p % 5;
            let b = (p * 7 + 3) % 5;
            if a == b {
                transitions.push(vec![(a, 1.0)]);
            } else {
                transitions.push(vec![(a, 0.25), (b, 0.75)]);
            }
            rewards.push(((p * 13) % 10) as f64 / 10.0);
        }
        let m = GameModel::from_parts(ModelParts {
            num_states: 5,
            num_actions_1: 2,
            num_actions_2: 2,
            gamma: 0.8,
            initial: 0,
            terminals: vec![false; 5],
            transitions,
            reward_1: rewards.clone(),
            reward_2: rewards,
            labels: None,
        })
        .unwrap();
        let pol = trivial_policy(&m);
        let tol = 1e-10;
        let v = policy_evaluation(&m, &pol, tol).unwrap();
        let one_more = {
            let d = super::policy_dynamics(&m, &pol);
            (0..5)
                .map(|s| {
                    let mut x = d.reward[0][s];
                    for &(dest, prob) in &d.rows[s] {
                        x += 0.8 * prob * v[0][dest];
                    }
                    (x - v[0][s]).abs()
                })
                .fold(0.0f64, f64::max)
        };
        assert!(one_more <= tol, "Bellman residual {one_more}");
    }

    #[test]
    fn sampling_respects_probabilities_and_terminals() {
        let m = GameModel::from_parts(ModelParts {
            num_states: 3,
            num_actions_1: 1,
            num_actions_2: 1,
            gamma: 0.5,
            initial: 0,
            terminals: vec![false, false, true],
            transitions: vec![vec![(1, 0.3), (2, 0.7)], vec![(2, 1.0)], vec![(2, 1.0)]],
            reward_1: vec![0.0, 1.0, 0.0],
            reward_2: vec![0.0, 0.0, 0.0],
            labels: None,
        })
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut to_goal = 0;
        for _ in 0..10_000 {
            let (dest, _, _) = sample_transition(&m, 0, 0, 0, &mut rng).unwrap();
            if dest == 2 {
                to_goal += 1;
            }
        }
        let freq = to_goal as f64 / 10_000.0;
        assert!((freq - 0.7).abs() < 0.02, "frequency {freq}");
        assert!(matches!(
            sample_transition(&m, 2, 0, 0, &mut rng),
            Err(ModelError::TerminalState(2))
        ));

        // identical seeds replay identical streams
        let mut a = ChaCha8Rng::seed_from_u64(11);
        let mut b = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let x = sample_transition(&m, 0, 0, 0, &mut a).unwrap();
            let y = sample_transition(&m, 0, 0, 0, &mut b).unwrap();
            assert_eq!(x, y);
        }
    }

    #[test]
    fn known_game_with_everything_known_is_identity() {
        let m = chain(0.8);
        let q = QTables::derive(&m, vec![5.0; 2], vec![5.0; 2]).unwrap();
        let k = build_known_game(&m, &vec![true; m.num_profiles()], &q);
        assert_eq!(k, m);
    }

    #[test]
    fn unknown_profile_value_equals_its_table_entry() {
        let m = chain(0.8);
        let q = QTables::derive(&m, vec![3.25, 1.5], vec![2.0, 0.5]).unwrap();
        let k = build_known_game(&m, &vec![false; m.num_profiles()], &q);
        assert_eq!(k.num_states(), 2 + 2);
        let pol = trivial_policy(&m).extended(k.num_states(), 1, 1);
        let v = policy_evaluation(&k, &pol, 1e-12).unwrap();
        // entering an unknown profile is worth exactly the optimistic entry
        assert!((v[0][0] - 3.25).abs() < 1e-9);
        assert!((v[0][1] - 1.5).abs() < 1e-9);
        assert!((v[1][0] - 2.0).abs() < 1e-9);
    }

    #[test]
    fn text_format_round_trip_fields() {
        let text = "\
# a two-state handoff
states 3 actions1 2 actions2 1 gamma 0.9 initial 1 terminals 2
0 0 0 1 0.5 0.25 0.0
0 0 0 0 0.5 0.25 0.0
0 1 0 2 1 1 1
1 0 0 0 1.0 0 0
1 1 0 2 1.0 0 0.5
";
        let m = parse_game_model(text).unwrap();
        assert_eq!(m.num_states(), 3);
        assert_eq!(m.num_actions_1(), 2);
        assert_eq!(m.num_actions_2(), 1);
        assert_eq!(m.gamma(), 0.9);
        assert_eq!(m.initial_state(), 1);
        assert!(m.is_terminal(2));
        let p = m.profile_index(0, 0, 0);
        assert_eq!(m.transition_row(p), &[(1, 0.5), (0, 0.5)]);
        assert_eq!(m.reward(0, m.profile_index(0, 1, 0)), 1.0);
    }

    #[test]
    fn text_format_errors() {
        assert!(matches!(
            parse_game_model(
                "states 1 actions1 1 actions2 1 gamma 0.5 initial 0 terminals\n0 0 0 0 0.9 0 0"
            ),
            Err(ModelError::TextFormat { .. }) | Err(ModelError::BadRow { .. })
        ));
        let missing =
            "states 2 actions1 1 actions2 1 gamma 0.5 initial 0 terminals\n0 0 0 1 1.0 0 0";
        assert!(parse_game_model(missing).is_err());
    }

    #[test]
    fn model_validation_rejects_bad_inputs() {
        let mut parts = ModelParts {
            num_states: 1,
            num_actions_1: 1,
            num_actions_2: 1,
            gamma: 0.5,
            initial: 0,
            terminals: vec![false],
            transitions: vec![vec![(0, 1.0)]],
            reward_1: vec![0.5],
            reward_2: vec![0.5],
            labels: None,
        };
        assert!(GameModel::from_parts(parts.clone()).is_ok());
        parts.gamma = 1.0;
        assert!(matches!(
            GameModel::from_parts(parts.clone()),
            Err(ModelError::BadGamma(_))
        ));
        parts.gamma = 0.5;
        parts.reward_1 = vec![1.5];
        assert!(matches!(
            GameModel::from_parts(parts.clone()),
            Err(ModelError::RewardRange { .. })
        ));
        parts.reward_1 = vec![0.5];
        parts.terminals = vec![true];
        assert!(matches!(
            GameModel::from_parts(parts),
            Err(ModelError::TerminalRow(0))
        ));
    }
}
