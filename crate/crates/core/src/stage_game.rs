//! Two-player stage games in strategic form: equilibrium enumeration by support
//! pairs, equilibrium classification, and a deterministic selection rule shared
//! by both players.

use rand::Rng;
use thiserror::Error;

/// Default tolerance for best-response checks.
pub const BR_TOL: f64 = 1e-9;
/// Default tolerance for equilibrium classification.
pub const CLASS_TOL: f64 = 1e-7;
/// Probabilities of a mixed strategy must sum to one within this bound.
pub const PROB_SUM_TOL: f64 = 1e-12;

const SINGULAR_TOL: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum StageGameError {
    #[error("payoff matrices disagree in shape or are empty")]
    BadShape,
    #[error("payoff entry is not finite")]
    NonFinitePayoff,
    #[error("probabilities must be nonnegative and sum to 1 (got sum {sum})")]
    BadDistribution { sum: f64 },
    #[error("no equilibrium found; stage game is degenerate or the solver is broken")]
    NoEquilibriumFound,
}

/// Payoff matrices of a two-player game in strategic form. Player 1 picks a row,
/// player 2 picks a column, and entry `(a, b)` pays `payoff(i, a, b)` to player i.
#[derive(Debug, Clone, PartialEq)]
pub struct BimatrixGame {
    rows: usize,
    cols: usize,
    payoff_1: Vec<f64>,
    payoff_2: Vec<f64>,
}

impl BimatrixGame {
    pub fn new(payoff_1: Vec<Vec<f64>>, payoff_2: Vec<Vec<f64>>) -> Result<Self, StageGameError> {
        let rows = payoff_1.len();
        if rows == 0 || payoff_2.len() != rows {
            return Err(StageGameError::BadShape);
        }
        let cols = payoff_1[0].len();
        if cols == 0 {
            return Err(StageGameError::BadShape);
        }
        let mut flat_1 = Vec::with_capacity(rows * cols);
        let mut flat_2 = Vec::with_capacity(rows * cols);
        for (r1, r2) in payoff_1.iter().zip(payoff_2.iter()) {
            if r1.len() != cols || r2.len() != cols {
                return Err(StageGameError::BadShape);
            }
            flat_1.extend_from_slice(r1);
            flat_2.extend_from_slice(r2);
        }
        Self::from_flat(rows, cols, flat_1, flat_2)
    }

    /// Builds a game from row-major payoff slices.
    pub fn from_flat(
        rows: usize,
        cols: usize,
        payoff_1: Vec<f64>,
        payoff_2: Vec<f64>,
    ) -> Result<Self, StageGameError> {
        if rows == 0 || cols == 0 || payoff_1.len() != rows * cols || payoff_2.len() != rows * cols
        {
            return Err(StageGameError::BadShape);
        }
        if payoff_1
            .iter()
            .chain(payoff_2.iter())
            .any(|x| !x.is_finite())
        {
            return Err(StageGameError::NonFinitePayoff);
        }
        Ok(Self {
            rows,
            cols,
            payoff_1,
            payoff_2,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn payoff(&self, player: usize, a: usize, b: usize) -> f64 {
        let m = if player == 0 {
            &self.payoff_1
        } else {
            &self.payoff_2
        };
        m[a * self.cols + b]
    }

    fn max_payoff(&self, player: usize) -> f64 {
        let m = if player == 0 {
            &self.payoff_1
        } else {
            &self.payoff_2
        };
        m.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Probability distribution over one player's actions.
#[derive(Debug, Clone, PartialEq)]
pub struct MixedStrategy {
    probs: Vec<f64>,
}

impl MixedStrategy {
    pub fn new(probs: Vec<f64>) -> Result<Self, StageGameError> {
        let sum: f64 = probs.iter().sum();
        if probs.is_empty()
            || probs.iter().any(|&p| !p.is_finite() || p < 0.0)
            || (sum - 1.0).abs() > PROB_SUM_TOL
        {
            return Err(StageGameError::BadDistribution { sum });
        }
        Ok(Self { probs })
    }

    /// Point mass on `action` among `n` actions.
    pub fn pure(n: usize, action: usize) -> Self {
        let mut probs = vec![0.0; n];
        probs[action] = 1.0;
        Self { probs }
    }

    pub fn uniform(n: usize) -> Self {
        Self {
            probs: vec![1.0 / n as f64; n],
        }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// The action index if this is a point mass.
    pub fn as_pure(&self) -> Option<usize> {
        self.probs.iter().position(|&p| p == 1.0)
    }

    /// Draws an action; consumes exactly one `f64` from the generator.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        for (i, &p) in self.probs.iter().enumerate() {
            acc += p;
            if u < acc {
                return i;
            }
        }
        self.probs.len() - 1
    }
}

/// How an equilibrium relates to the rest of the payoff matrix: `GlobalOptimal`
/// gives every player the largest payoff present anywhere in their matrix;
/// `Saddle` guarantees that no unilateral *opponent* deviation can lower a
/// player's value; everything else is `Plain`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EquilibriumClass {
    GlobalOptimal,
    Saddle,
    Plain,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EquilibriumProfile {
    pub strategy_1: MixedStrategy,
    pub strategy_2: MixedStrategy,
    pub value_1: f64,
    pub value_2: f64,
    pub class: EquilibriumClass,
}

/// Result of support enumeration. `degenerate` is set when some equal-size
/// support pair produced a singular indifference system; that pair is skipped,
/// so the listing may be incomplete for such games.
#[derive(Debug, Clone, PartialEq)]
pub struct SupportEnumeration {
    pub profiles: Vec<EquilibriumProfile>,
    pub degenerate: bool,
}

fn bilinear(game: &BimatrixGame, player: usize, p: &[f64], q: &[f64]) -> f64 {
    let mut v = 0.0;
    for (a, &pa) in p.iter().enumerate() {
        if pa == 0.0 {
            continue;
        }
        let mut row = 0.0;
        for (b, &qb) in q.iter().enumerate() {
            row += qb * game.payoff(player, a, b);
        }
        v += pa * row;
    }
    v
}

fn classify_parts(
    game: &BimatrixGame,
    p: &[f64],
    q: &[f64],
    v1: f64,
    v2: f64,
    tol: f64,
) -> EquilibriumClass {
    if v1 >= game.max_payoff(0) - tol && v2 >= game.max_payoff(1) - tol {
        return EquilibriumClass::GlobalOptimal;
    }
    // player 1's value under each pure deviation of player 2, and vice versa
    for b in 0..game.cols() {
        let mut val = 0.0;
        for (a, &pa) in p.iter().enumerate() {
            val += pa * game.payoff(0, a, b);
        }
        if val < v1 - tol {
            return EquilibriumClass::Plain;
        }
    }
    for a in 0..game.rows() {
        let mut val = 0.0;
        for (b, &qb) in q.iter().enumerate() {
            val += qb * game.payoff(1, a, b);
        }
        if val < v2 - tol {
            return EquilibriumClass::Plain;
        }
    }
    EquilibriumClass::Saddle
}

/// Recomputes the class of an equilibrium profile against `game`.
pub fn classify_equilibrium(
    game: &BimatrixGame,
    eq: &EquilibriumProfile,
    tol: f64,
) -> EquilibriumClass {
    classify_parts(
        game,
        eq.strategy_1.probs(),
        eq.strategy_2.probs(),
        eq.value_1,
        eq.value_2,
        tol,
    )
}

fn make_profile(
    game: &BimatrixGame,
    strategy_1: MixedStrategy,
    strategy_2: MixedStrategy,
) -> EquilibriumProfile {
    let value_1 = bilinear(game, 0, strategy_1.probs(), strategy_2.probs());
    let value_2 = bilinear(game, 1, strategy_1.probs(), strategy_2.probs());
    let class = classify_parts(
        game,
        strategy_1.probs(),
        strategy_2.probs(),
        value_1,
        value_2,
        CLASS_TOL,
    );
    EquilibriumProfile {
        strategy_1,
        strategy_2,
        value_1,
        value_2,
        class,
    }
}

fn pure_equilibrium_at(
    game: &BimatrixGame,
    a: usize,
    b: usize,
    tol: f64,
) -> Option<EquilibriumProfile> {
    let v1 = game.payoff(0, a, b);
    let v2 = game.payoff(1, a, b);
    for r in 0..game.rows() {
        if game.payoff(0, r, b) > v1 + tol {
            return None;
        }
    }
    for c in 0..game.cols() {
        if game.payoff(1, a, c) > v2 + tol {
            return None;
        }
    }
    Some(make_profile(
        game,
        MixedStrategy::pure(game.rows(), a),
        MixedStrategy::pure(game.cols(), b),
    ))
}

/// All pure-strategy equilibria in lexicographic `(a, b)` order.
pub fn enumerate_pure_equilibria(game: &BimatrixGame, tol: f64) -> Vec<EquilibriumProfile> {
    let mut out = Vec::new();
    for a in 0..game.rows() {
        for b in 0..game.cols() {
            if let Some(eq) = pure_equilibrium_at(game, a, b, tol) {
                out.push(eq);
            }
        }
    }
    out
}

/// Gaussian elimination with partial pivoting on an n x n system stored row-major
/// in `a`. Returns false when a pivot magnitude falls below `SINGULAR_TOL`.
fn solve_linear(a: &mut [f64], b: &mut [f64], n: usize) -> bool {
    for col in 0..n {
        let mut pivot = col;
        for r in col + 1..n {
            if a[r * n + col].abs() > a[pivot * n + col].abs() {
                pivot = r;
            }
        }
        if a[pivot * n + col].abs() < SINGULAR_TOL {
            return false;
        }
        if pivot != col {
            for c in 0..n {
                a.swap(pivot * n + c, col * n + c);
            }
            b.swap(pivot, col);
        }
        let inv = 1.0 / a[col * n + col];
        for r in col + 1..n {
            let f = a[r * n + col] * inv;
            if f == 0.0 {
                continue;
            }
            for c in col..n {
                a[r * n + c] -= f * a[col * n + c];
            }
            b[r] -= f * b[col];
        }
    }
    for col in (0..n).rev() {
        let mut x = b[col];
        for c in col + 1..n {
            x -= a[col * n + c] * b[c];
        }
        b[col] = x / a[col * n + col];
    }
    true
}

enum SupportSolve {
    Found(MixedStrategy, MixedStrategy),
    Singular,
    NoSolution,
}

/// Solves the indifference conditions for the support pair `(sup_r, sup_c)`:
/// player 2 mixes over `sup_c` so that every row in `sup_r` earns the same
/// payoff, and symmetrically for player 1 over `sup_r` against the columns.
fn solve_support_pair(
    game: &BimatrixGame,
    sup_r: &[usize],
    sup_c: &[usize],
    tol: f64,
) -> SupportSolve {
    let k = sup_r.len();
    let n = k + 1;

    // unknowns: q over sup_c plus player 1's indifference value
    let mut a = vec![0.0; n * n];
    let mut rhs = vec![0.0; n];
    for (i, &r) in sup_r.iter().enumerate() {
        for (j, &c) in sup_c.iter().enumerate() {
            a[i * n + j] = game.payoff(0, r, c);
        }
        a[i * n + k] = -1.0;
    }
    for j in 0..k {
        a[k * n + j] = 1.0;
    }
    rhs[k] = 1.0;
    if !solve_linear(&mut a, &mut rhs, n) {
        return SupportSolve::Singular;
    }
    let (q_sup, w1) = (rhs[..k].to_vec(), rhs[k]);

    // unknowns: p over sup_r plus player 2's indifference value
    let mut a = vec![0.0; n * n];
    let mut rhs = vec![0.0; n];
    for (j, &c) in sup_c.iter().enumerate() {
        for (i, &r) in sup_r.iter().enumerate() {
            a[j * n + i] = game.payoff(1, r, c);
        }
        a[j * n + k] = -1.0;
    }
    for i in 0..k {
        a[k * n + i] = 1.0;
    }
    rhs[k] = 1.0;
    if !solve_linear(&mut a, &mut rhs, n) {
        return SupportSolve::Singular;
    }
    let (p_sup, w2) = (rhs[..k].to_vec(), rhs[k]);

    // the solution must put strictly positive mass on every support action
    if q_sup.iter().chain(p_sup.iter()).any(|&x| x <= tol) {
        return SupportSolve::NoSolution;
    }

    let mut p = vec![0.0; game.rows()];
    for (i, &r) in sup_r.iter().enumerate() {
        p[r] = p_sup[i];
    }
    let mut q = vec![0.0; game.cols()];
    for (j, &c) in sup_c.iter().enumerate() {
        q[c] = q_sup[j];
    }
    let ps: f64 = p.iter().sum();
    let qs: f64 = q.iter().sum();
    for x in p.iter_mut() {
        *x /= ps;
    }
    for x in q.iter_mut() {
        *x /= qs;
    }

    // actions outside the supports must not beat the indifference values
    for r in 0..game.rows() {
        if sup_r.contains(&r) {
            continue;
        }
        let mut val = 0.0;
        for &c in sup_c.iter() {
            val += q[c] * game.payoff(0, r, c);
        }
        if val > w1 + tol {
            return SupportSolve::NoSolution;
        }
    }
    for c in 0..game.cols() {
        if sup_c.contains(&c) {
            continue;
        }
        let mut val = 0.0;
        for &r in sup_r.iter() {
            val += p[r] * game.payoff(1, r, c);
        }
        if val > w2 + tol {
            return SupportSolve::NoSolution;
        }
    }

    match (MixedStrategy::new(p), MixedStrategy::new(q)) {
        (Ok(sp), Ok(sq)) => SupportSolve::Found(sp, sq),
        _ => SupportSolve::NoSolution,
    }
}

/// Lexicographic k-subsets of 0..n.
struct Combinations {
    n: usize,
    cur: Vec<usize>,
    started: bool,
}

impl Combinations {
    fn new(n: usize, k: usize) -> Self {
        Self {
            n,
            cur: (0..k).collect(),
            started: false,
        }
    }
}

impl Iterator for Combinations {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        let k = self.cur.len();
        if k > self.n {
            return None;
        }
        if !self.started {
            self.started = true;
            return Some(self.cur.clone());
        }
        let mut i = k;
        loop {
            if i == 0 {
                return None;
            }
            i -= 1;
            if self.cur[i] < self.n - k + i {
                self.cur[i] += 1;
                for j in i + 1..k {
                    self.cur[j] = self.cur[j - 1] + 1;
                }
                return Some(self.cur.clone());
            }
        }
    }
}

/// Enumerates equilibria over equal-size support pairs up to `max_support`,
/// in lexicographic order of (size, row support, column support). With
/// `max_support == 1` this reproduces [`enumerate_pure_equilibria`] exactly.
pub fn support_enumeration_equilibria(
    game: &BimatrixGame,
    max_support: usize,
    tol: f64,
) -> SupportEnumeration {
    let mut result = SupportEnumeration {
        profiles: Vec::new(),
        degenerate: false,
    };
    let cap = max_support.min(game.rows()).min(game.cols());
    for k in 1..=cap {
        if k == 1 {
            result.profiles.extend(enumerate_pure_equilibria(game, tol));
            continue;
        }
        for sup_r in Combinations::new(game.rows(), k) {
            for sup_c in Combinations::new(game.cols(), k) {
                match solve_support_pair(game, &sup_r, &sup_c, tol) {
                    SupportSolve::Found(p, q) => result.profiles.push(make_profile(game, p, q)),
                    SupportSolve::Singular => result.degenerate = true,
                    SupportSolve::NoSolution => {}
                }
            }
        }
    }
    result
}

/// The selection rule both learners share: global-optimal equilibria beat
/// saddles, saddles beat plain ones, and within a class the profile with the
/// highest total value wins, ties going to the first one the enumeration
/// produced. Ordering by total value keeps the rule symmetric between the
/// players and steers coordination toward the jointly best profile; identical
/// matrices yield bitwise identical strategies, which is what keeps two
/// independent selectors aligned.
pub fn select_equilibrium(
    game: &BimatrixGame,
    tol: f64,
) -> Result<EquilibriumProfile, StageGameError> {
    let mut best: Option<EquilibriumProfile> = None;
    let rank = |c: EquilibriumClass| match c {
        EquilibriumClass::GlobalOptimal => 0u8,
        EquilibriumClass::Saddle => 1,
        EquilibriumClass::Plain => 2,
    };
    let cap = game.rows().min(game.cols());
    for k in 1..=cap {
        let found: Vec<EquilibriumProfile> = if k == 1 {
            enumerate_pure_equilibria(game, tol)
        } else {
            let mut out = Vec::new();
            for sup_r in Combinations::new(game.rows(), k) {
                for sup_c in Combinations::new(game.cols(), k) {
                    if let SupportSolve::Found(p, q) = solve_support_pair(game, &sup_r, &sup_c, tol)
                    {
                        out.push(make_profile(game, p, q));
                    }
                }
            }
            out
        };
        for eq in found {
            let better = match &best {
                None => true,
                Some(cur) => {
                    let (rc, re) = (rank(cur.class), rank(eq.class));
                    re < rc || (re == rc && eq.value_1 + eq.value_2 > cur.value_1 + cur.value_2)
                }
            };
            if better {
                best = Some(eq);
            }
        }
    }
    best.ok_or(StageGameError::NoEquilibriumFound)
}
