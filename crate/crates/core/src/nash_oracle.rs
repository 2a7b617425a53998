//! Exact equilibrium values for small models: Nash value iteration over stage
//! games, best-response value iteration against a fixed opponent, and the
//! profile certification both are for.

use crate::markov_game::{policy_evaluation, GameModel, JointPolicy, ModelError, QTables};
use crate::stage_game::{select_equilibrium, EquilibriumClass, MixedStrategy, BR_TOL};

/// Output of [`nash_value_iteration`]. A non-converged result is still usable
/// for inspection; `assumption_violated` reports that some stage game along the
/// way offered neither a global-optimal nor a saddle equilibrium, in which case
/// the plain-equilibrium fallback drove the iteration and the fixed point is
/// not guaranteed.
#[derive(Debug, Clone)]
pub struct OracleResult {
    pub q: QTables,
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
    pub assumption_violated: bool,
}

impl OracleResult {
    /// The stage policy the oracle's tables induce (uniform at terminals).
    pub fn policy(&self, model: &GameModel) -> JointPolicy {
        greedy_policy(model, &self.q)
    }
}

/// Recomputes the selected equilibrium strategies of every non-terminal state.
pub fn greedy_policy(model: &GameModel, q: &QTables) -> JointPolicy {
    let strategies = (0..model.num_states())
        .map(|s| {
            if model.is_terminal(s) {
                (
                    MixedStrategy::uniform(model.num_actions_1()),
                    MixedStrategy::uniform(model.num_actions_2()),
                )
            } else {
                let eq = select_equilibrium(&model.stage_at(s, &q.q[0], &q.q[1]), BR_TOL)
                    .expect("every finite stage game has an equilibrium");
                (eq.strategy_1, eq.strategy_2)
            }
        })
        .collect();
    JointPolicy { strategies }
}

/// Jointly iterates both players' Q tables: each sweep solves every state's
/// stage game with the shared selection rule and backs the values up through
/// the true transition model. Converges when consecutive tables differ by at
/// most `tol` everywhere.
pub fn nash_value_iteration(model: &GameModel, tol: f64, max_iter: usize) -> OracleResult {
    let np = model.num_profiles();
    let mut q = [vec![0.0; np], vec![0.0; np]];
    let mut v = [vec![0.0; model.num_states()], vec![0.0; model.num_states()]];
    let mut assumption_violated = false;
    let mut residual = f64::INFINITY;
    let mut iterations = 0;

    for iter in 1..=max_iter {
        iterations = iter;
        for s in 0..model.num_states() {
            if model.is_terminal(s) {
                continue;
            }
            let eq = select_equilibrium(&model.stage_at(s, &q[0], &q[1]), BR_TOL)
                .expect("every finite stage game has an equilibrium");
            if eq.class == EquilibriumClass::Plain {
                assumption_violated = true;
            }
            v[0][s] = eq.value_1;
            v[1][s] = eq.value_2;
        }
        residual = 0.0;
        for s in 0..model.num_states() {
            if model.is_terminal(s) {
                continue;
            }
            for a1 in 0..model.num_actions_1() {
                for a2 in 0..model.num_actions_2() {
                    let p = model.profile_index(s, a1, a2);
                    for player in 0..2 {
                        let mut x = model.reward(player, p);
                        for &(dest, prob) in model.transition_row(p) {
                            x += model.gamma() * prob * v[player][dest];
                        }
                        residual = residual.max((x - q[player][p]).abs());
                        q[player][p] = x;
                    }
                }
            }
        }
        if residual <= tol {
            break;
        }
    }

    let [q1, q2] = q;
    let tables =
        QTables::derive(model, q1, q2).expect("oracle tables always admit stage equilibria");
    OracleResult {
        q: tables,
        residual,
        iterations,
        converged: residual <= tol,
        assumption_violated,
    }
}

/// Optimal values of the one-player MDP a fixed opponent strategy induces.
pub fn best_response_values(
    model: &GameModel,
    player: usize,
    policy: &JointPolicy,
    tol: f64,
) -> Result<Vec<f64>, ModelError> {
    let n = model.num_states();
    let gamma = model.gamma();
    let mut v = vec![0.0; n];
    let mut next = vec![0.0; n];
    let cap = {
        let x = (tol * (1.0 - gamma)).ln() / gamma.ln();
        (if x.is_finite() && x > 0.0 {
            x.ceil() as usize
        } else {
            0
        }) + 64
    };
    let mut residual = f64::INFINITY;
    for _ in 0..cap {
        residual = 0.0;
        for s in 0..n {
            if model.is_terminal(s) {
                continue;
            }
            let opponent = if player == 0 {
                &policy.strategies[s].1
            } else {
                &policy.strategies[s].0
            };
            let own_actions = if player == 0 {
                model.num_actions_1()
            } else {
                model.num_actions_2()
            };
            let mut best = f64::NEG_INFINITY;
            for a in 0..own_actions {
                let mut x = 0.0;
                for (b, &w) in opponent.probs().iter().enumerate() {
                    if w == 0.0 {
                        continue;
                    }
                    let p = if player == 0 {
                        model.profile_index(s, a, b)
                    } else {
                        model.profile_index(s, b, a)
                    };
                    let mut backup = model.reward(player, p);
                    for &(dest, prob) in model.transition_row(p) {
                        backup += gamma * prob * v[dest];
                    }
                    x += w * backup;
                }
                best = best.max(x);
            }
            residual = residual.max((best - v[s]).abs());
            next[s] = best;
        }
        std::mem::swap(&mut v, &mut next);
        if residual <= tol {
            return Ok(v);
        }
    }
    Err(ModelError::NonConvergence {
        residual,
        iterations: cap,
    })
}

/// States reachable from the initial state under the profile's supports.
fn reachable_states(model: &GameModel, policy: &JointPolicy) -> Vec<usize> {
    let mut seen = vec![false; model.num_states()];
    let mut stack = vec![model.initial_state()];
    seen[model.initial_state()] = true;
    let mut out = Vec::new();
    while let Some(s) = stack.pop() {
        out.push(s);
        if model.is_terminal(s) {
            continue;
        }
        let (p1, p2) = &policy.strategies[s];
        for (a1, &w1) in p1.probs().iter().enumerate() {
            if w1 == 0.0 {
                continue;
            }
            for (a2, &w2) in p2.probs().iter().enumerate() {
                if w2 == 0.0 {
                    continue;
                }
                let p = model.profile_index(s, a1, a2);
                for &(dest, _) in model.transition_row(p) {
                    if !seen[dest] {
                        seen[dest] = true;
                        stack.push(dest);
                    }
                }
            }
        }
    }
    out.sort_unstable();
    out
}

/// Certifies that `policy` is a Nash profile of `model`: at every state
/// reachable from the initial state, neither player can improve its value by
/// more than `tol` by best-responding unilaterally.
pub fn is_nash_profile(
    model: &GameModel,
    policy: &JointPolicy,
    tol: f64,
) -> Result<bool, ModelError> {
    let inner = (tol * (1.0 - model.gamma()) * 1e-2).max(1e-13);
    let v_prof = policy_evaluation(model, policy, inner)?;
    let reachable = reachable_states(model, policy);
    for player in 0..2 {
        let v_best = best_response_values(model, player, policy, inner)?;
        for &s in &reachable {
            if v_best[s] - v_prof[player][s] > tol {
                return Ok(false);
            }
        }
    }
    Ok(true)
}
