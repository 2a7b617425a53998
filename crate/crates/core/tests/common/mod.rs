//! Shared helpers for integration tests: brute-force reference oracles that are
//! deliberately independent of the library's solver internals.

#![allow(dead_code)]

use nashdelay::stage_game::BimatrixGame;

/// Maximum gain any pure deviation offers against the profile `(p, q)`.
///
/// Zero (up to tolerance) exactly at Nash equilibria; computed straight from the
/// definition so it shares nothing with the support-enumeration code path.
pub fn deviation_gain(game: &BimatrixGame, p: &[f64], q: &[f64]) -> f64 {
    let (rows, cols) = (game.rows(), game.cols());
    let mut v1 = 0.0;
    let mut v2 = 0.0;
    for a in 0..rows {
        for b in 0..cols {
            v1 += p[a] * q[b] * game.payoff(0, a, b);
            v2 += p[a] * q[b] * game.payoff(1, a, b);
        }
    }
    let mut gain: f64 = 0.0;
    for a in 0..rows {
        let mut row_val = 0.0;
        for b in 0..cols {
            row_val += q[b] * game.payoff(0, a, b);
        }
        gain = gain.max(row_val - v1);
    }
    for b in 0..cols {
        let mut col_val = 0.0;
        for a in 0..rows {
            col_val += p[a] * game.payoff(1, a, b);
        }
        gain = gain.max(col_val - v2);
    }
    gain
}

/// Enumerates every point of the probability simplex over `n` actions whose
/// coordinates are multiples of `1/steps`.
pub fn simplex_grid(n: usize, steps: usize) -> Vec<Vec<f64>> {
    let mut out = Vec::new();
    let mut point = vec![0usize; n];
    fill_simplex(&mut out, &mut point, 0, steps, steps);
    out
}

fn fill_simplex(out: &mut Vec<Vec<f64>>, point: &mut [usize], i: usize, left: usize, steps: usize) {
    if i == point.len() - 1 {
        point[i] = left;
        out.push(point.iter().map(|&k| k as f64 / steps as f64).collect());
        return;
    }
    for k in 0..=left {
        point[i] = k;
        fill_simplex(out, point, i + 1, left - k, steps);
    }
}

/// Grid point of the strategy product space, stored with its deviation gain.
pub struct GridPoint {
    pub p: Vec<f64>,
    pub q: Vec<f64>,
    pub gain: f64,
}

/// Locates every grid profile at resolution `1/fine` whose deviation gain is at
/// most `gain_tol`, via a coarse pass that prunes regions a Lipschitz bound rules
/// out. `coarse` must divide `fine`.
pub fn grid_equilibria(
    game: &BimatrixGame,
    coarse: usize,
    fine: usize,
    gain_tol: f64,
) -> Vec<GridPoint> {
    assert_eq!(fine % coarse, 0);
    let (rows, cols) = (game.rows(), game.cols());
    let mut span: f64 = 0.0;
    for pl in 0..2 {
        for a in 0..rows {
            for b in 0..cols {
                span = span.max(game.payoff(pl, a, b).abs());
            }
        }
    }
    // The gain is 2-Lipschitz in each player's strategy under the L1 norm scaled
    // by the largest payoff magnitude; moving every coordinate by at most h keeps
    // the gain within 2*span*(rows+cols)*h of its value at the coarse corner.
    let h = 1.0 / coarse as f64;
    let margin = 2.0 * span * (rows + cols) as f64 * h;

    let coarse_p = simplex_grid(rows, coarse);
    let coarse_q = simplex_grid(cols, coarse);
    let refine = fine / coarse;
    let mut hits = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for cp in &coarse_p {
        for cq in &coarse_q {
            if deviation_gain(game, cp, cq) > gain_tol + margin {
                continue;
            }
            for fp in refine_cell(cp, coarse, refine, fine) {
                for fq in refine_cell(cq, coarse, refine, fine) {
                    let key: Vec<u64> = fp
                        .iter()
                        .chain(fq.iter())
                        .map(|x| (x * fine as f64).round() as u64)
                        .collect();
                    if !seen.insert(key) {
                        continue;
                    }
                    let gain = deviation_gain(game, &fp, &fq);
                    if gain <= gain_tol {
                        hits.push(GridPoint {
                            p: fp.clone(),
                            q: fq.clone(),
                            gain,
                        });
                    }
                }
            }
        }
    }
    hits
}

/// Fine-grid simplex points lying within the coarse cell anchored at `corner`.
fn refine_cell(corner: &[f64], coarse: usize, refine: usize, fine: usize) -> Vec<Vec<f64>> {
    let n = corner.len();
    let base: Vec<usize> = corner
        .iter()
        .map(|&x| (x * coarse as f64).round() as usize * refine)
        .collect();
    let mut out = Vec::new();
    let mut offsets = vec![0usize; n];
    loop {
        let point: Vec<usize> = base.iter().zip(&offsets).map(|(&b, &o)| b + o).collect();
        let total: usize = point.iter().sum();
        if total == fine {
            out.push(point.iter().map(|&k| k as f64 / fine as f64).collect());
        }
        // odometer over per-coordinate offsets in [0, refine]
        let mut i = 0;
        loop {
            if i == n {
                return out;
            }
            offsets[i] += 1;
            if offsets[i] <= refine {
                break;
            }
            offsets[i] = 0;
            i += 1;
        }
    }
}

/// Definition-based classification of a pure profile that is already known to be
/// an equilibrium: checks the global-optimality and saddle conditions literally.
pub fn brute_classify_pure(game: &BimatrixGame, a: usize, b: usize, tol: f64) -> &'static str {
    let (rows, cols) = (game.rows(), game.cols());
    let v1 = game.payoff(0, a, b);
    let v2 = game.payoff(1, a, b);
    let mut max1 = f64::NEG_INFINITY;
    let mut max2 = f64::NEG_INFINITY;
    for r in 0..rows {
        for c in 0..cols {
            max1 = max1.max(game.payoff(0, r, c));
            max2 = max2.max(game.payoff(1, r, c));
        }
    }
    if v1 >= max1 - tol && v2 >= max2 - tol {
        return "global";
    }
    let mut saddle = true;
    for c in 0..cols {
        if game.payoff(0, a, c) < v1 - tol {
            saddle = false;
        }
    }
    for r in 0..rows {
        if game.payoff(1, r, b) < v2 - tol {
            saddle = false;
        }
    }
    if saddle {
        "saddle"
    } else {
        "plain"
    }
}

/// A pure strategy with two or more tied pure best responses gives the opponent
/// an equilibrium continuum at unequal support sizes, which equal-support
/// enumeration cannot represent; such games are degenerate in the usual sense
/// even when no indifference system is singular.
pub fn has_best_response_tie(g: &BimatrixGame) -> bool {
    for b in 0..g.cols() {
        let best = (0..g.rows())
            .map(|a| g.payoff(0, a, b))
            .fold(f64::NEG_INFINITY, f64::max);
        if (0..g.rows()).filter(|&a| g.payoff(0, a, b) == best).count() > 1 {
            return true;
        }
    }
    for a in 0..g.rows() {
        let best = (0..g.cols())
            .map(|b| g.payoff(1, a, b))
            .fold(f64::NEG_INFINITY, f64::max);
        if (0..g.cols()).filter(|&b| g.payoff(1, a, b) == best).count() > 1 {
            return true;
        }
    }
    false
}

/// When one player has exactly two actions, the opponent's payoffs are lines
/// over that player's mixing probability. Three of those lines meeting in one
/// point lets the opponent mix over three actions there, an equilibrium
/// continuum with unequal support sizes that equal-support enumeration cannot
/// represent. Payoffs are integers, so concurrency is an exact determinant
/// test.
pub fn has_concurrent_triple(g: &BimatrixGame) -> bool {
    // player 2's lines over the probability of player 1's first action
    if g.rows() == 2 {
        let lines: Vec<(f64, f64)> = (0..g.cols())
            .map(|b| (g.payoff(1, 0, b) - g.payoff(1, 1, b), g.payoff(1, 1, b)))
            .collect();
        if any_concurrent_triple(&lines) {
            return true;
        }
    }
    // player 1's lines over the probability of player 2's first action
    if g.cols() == 2 {
        let lines: Vec<(f64, f64)> = (0..g.rows())
            .map(|a| (g.payoff(0, a, 0) - g.payoff(0, a, 1), g.payoff(0, a, 1)))
            .collect();
        if any_concurrent_triple(&lines) {
            return true;
        }
    }
    false
}

/// Whether any three of the integer lines `y = m x + c` share a point with
/// x in [0, 1]. The shared x of lines i and j is (c_j - c_i)/(m_i - m_j), so
/// with integer coefficients both the strip test and the membership of a
/// third line are exact sign and zero tests on small integers.
fn any_concurrent_triple(lines: &[(f64, f64)]) -> bool {
    let n = lines.len();
    for i in 0..n {
        for j in i + 1..n {
            let (mi, ci) = lines[i];
            let (mj, cj) = lines[j];
            let num = cj - ci;
            let den = mi - mj;
            if den == 0.0 {
                if num == 0.0 {
                    // coincident lines tie everywhere
                    return true;
                }
                continue;
            }
            let in_strip = if den > 0.0 {
                num >= 0.0 && num <= den
            } else {
                num <= 0.0 && num >= den
            };
            if !in_strip {
                continue;
            }
            for k in 0..n {
                if k == i || k == j {
                    continue;
                }
                let (mk, ck) = lines[k];
                if (mk - mi) * num + (ck - ci) * den == 0.0 {
                    return true;
                }
            }
        }
    }
    false
}

/// Deterministic integer payoff matrices in [-5, 5], seeded per game index.
pub fn random_int_game(rows: usize, cols: usize, seed: u64) -> BimatrixGame {
    // splitmix64 keeps this generator independent of the library's RNG choices
    let mut state = seed
        .wrapping_mul(0x9e3779b97f4a7c15)
        .wrapping_add(0x2545f4914f6cdd1d);
    let mut next = move || {
        state = state.wrapping_add(0x9e3779b97f4a7c15);
        let mut z = state;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
        z ^ (z >> 31)
    };
    let mut draw = move || (next() % 11) as f64 - 5.0;
    let mut p1 = vec![0.0; rows * cols];
    let mut p2 = vec![0.0; rows * cols];
    for x in p1.iter_mut() {
        *x = draw();
    }
    for x in p2.iter_mut() {
        *x = draw();
    }
    BimatrixGame::from_flat(rows, cols, p1, p2).unwrap()
}
