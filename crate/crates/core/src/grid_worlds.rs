//! Two-robot grid-world benchmarks. Cells are numbered 1..=width*height
//! row-major from the bottom-left corner, so on a 3x3 board `up` adds 3. A
//! state is the ordered pair of occupied cells; each player is rewarded once
//! for stepping onto its own goal, and any state with a player at its goal is
//! terminal.

use crate::markov_game::{GameModel, ModelParts};
use thiserror::Error;

/// Action indices shared by both players: down, left, up, right.
pub const ACTIONS: [&str; 4] = ["down", "left", "up", "right"];

#[derive(Debug, Error)]
pub enum GridError {
    #[error("invalid grid spec: {0}")]
    InvalidSpec(String),
}

/// Geometry and dynamics of a two-robot grid world. Cells are 1-based.
/// `stochastic_up` lists cells where the `up` action only succeeds with the
/// given probability and otherwise leaves the robot in place.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub width: usize,
    pub height: usize,
    pub start_1: usize,
    pub start_2: usize,
    pub goal_1: usize,
    pub goal_2: usize,
    pub stochastic_up: Vec<(usize, f64)>,
    pub shared_goal: bool,
}

impl GridSpec {
    /// 3x3 board, diagonal starts and diagonally opposite goals, deterministic
    /// moves.
    pub fn grid1() -> Self {
        Self {
            width: 3,
            height: 3,
            start_1: 1,
            start_2: 3,
            goal_1: 9,
            goal_2: 7,
            stochastic_up: vec![],
            shared_goal: false,
        }
    }

    /// 3x3 board with one shared goal at the top middle; moving up out of
    /// either bottom corner only succeeds half the time.
    pub fn grid2() -> Self {
        Self {
            width: 3,
            height: 3,
            start_1: 1,
            start_2: 3,
            goal_1: 8,
            goal_2: 8,
            stochastic_up: vec![(1, 0.5), (3, 0.5)],
            shared_goal: true,
        }
    }

    fn cells(&self) -> usize {
        self.width * self.height
    }

    fn validate(&self) -> Result<(), GridError> {
        let bad = |msg: String| Err(GridError::InvalidSpec(msg));
        if self.width < 2 || self.height < 1 {
            return bad(format!("board {}x{} is too small", self.width, self.height));
        }
        for (name, c) in [
            ("start_1", self.start_1),
            ("start_2", self.start_2),
            ("goal_1", self.goal_1),
            ("goal_2", self.goal_2),
        ] {
            if c < 1 || c > self.cells() {
                return bad(format!("{name} cell {c} out of range"));
            }
        }
        if self.start_1 == self.start_2 {
            return bad("players cannot share a start cell".into());
        }
        if self.start_1 == self.goal_1 || self.start_2 == self.goal_2 {
            return bad("a player cannot start on its own goal".into());
        }
        if self.shared_goal && self.goal_1 != self.goal_2 {
            return bad("shared_goal requires identical goal cells".into());
        }
        for &(c, p) in &self.stochastic_up {
            if c < 1 || c > self.cells() {
                return bad(format!("stochastic cell {c} out of range"));
            }
            if !(p > 0.0 && p <= 1.0) {
                return bad(format!("success probability {p} outside (0, 1]"));
            }
            if self.stochastic_up.iter().filter(|&&(d, _)| d == c).count() > 1 {
                return bad(format!("stochastic cell {c} listed twice"));
            }
        }
        Ok(())
    }

    /// Destination of a deterministic move, staying in place at walls.
    fn step(&self, cell: usize, action: usize) -> usize {
        let col = (cell - 1) % self.width;
        let row = (cell - 1) / self.width;
        match action {
            0 if row > 0 => cell - self.width,
            1 if col > 0 => cell - 1,
            2 if row + 1 < self.height => cell + self.width,
            3 if col + 1 < self.width => cell + 1,
            _ => cell,
        }
    }

    /// Chance outcomes of one player's action as `(destination, probability)`.
    fn outcomes(&self, cell: usize, action: usize) -> Vec<(usize, f64)> {
        let dest = self.step(cell, action);
        if action == 2 && dest != cell {
            if let Some(&(_, p)) = self.stochastic_up.iter().find(|&&(c, _)| c == cell) {
                if p < 1.0 {
                    return vec![(dest, p), (cell, 1.0 - p)];
                }
            }
        }
        vec![(dest, 1.0)]
    }

    /// Mirror image of a cell under left-right reflection of the board.
    pub fn mirror_cell(&self, cell: usize) -> usize {
        let col = (cell - 1) % self.width;
        let row = (cell - 1) / self.width;
        row * self.width + (self.width - 1 - col) + 1
    }
}

/// The joint states of a grid world in lexicographic order: ordered pairs of
/// distinct cells, plus the coincidence pair at a shared goal.
pub fn state_pairs(spec: &GridSpec) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for c1 in 1..=spec.cells() {
        for c2 in 1..=spec.cells() {
            if c1 != c2 || (spec.shared_goal && c1 == spec.goal_1) {
                out.push((c1, c2));
            }
        }
    }
    out
}

/// Index of the joint state `(c1, c2)` in the [`state_pairs`] enumeration.
pub fn state_index(spec: &GridSpec, c1: usize, c2: usize) -> Option<usize> {
    state_pairs(spec).iter().position(|&p| p == (c1, c2))
}

/// Resolves simultaneous moves: two robots heading for the same cell bounce
/// back unless that cell is the shared goal; everything else, including
/// swapping places, goes through.
fn resolve(spec: &GridSpec, c1: usize, c2: usize, d1: usize, d2: usize) -> (usize, usize) {
    if d1 == d2 && !(spec.shared_goal && d1 == spec.goal_1) {
        (c1, c2)
    } else {
        (d1, d2)
    }
}

/// Builds the Markov game of a grid world under discount `gamma`.
pub fn make_grid_world(spec: &GridSpec, gamma: f64) -> Result<GameModel, GridError> {
    spec.validate()?;
    let pairs = state_pairs(spec);
    let index_of = {
        let mut map = vec![usize::MAX; (spec.cells() + 1) * (spec.cells() + 1)];
        for (i, &(c1, c2)) in pairs.iter().enumerate() {
            map[c1 * (spec.cells() + 1) + c2] = i;
        }
        move |c1: usize, c2: usize| map[c1 * (spec.cells() + 1) + c2]
    };

    let n = pairs.len();
    let terminals: Vec<bool> = pairs
        .iter()
        .map(|&(c1, c2)| c1 == spec.goal_1 || c2 == spec.goal_2)
        .collect();
    let mut transitions: Vec<Vec<(usize, f64)>> = Vec::with_capacity(n * 16);
    let mut reward_1 = Vec::with_capacity(n * 16);
    let mut reward_2 = Vec::with_capacity(n * 16);

    for (s, &(c1, c2)) in pairs.iter().enumerate() {
        for a1 in 0..4 {
            for a2 in 0..4 {
                if terminals[s] {
                    transitions.push(vec![(s, 1.0)]);
                    reward_1.push(0.0);
                    reward_2.push(0.0);
                    continue;
                }
                let mut row: Vec<(usize, f64)> = Vec::new();
                let mut rewards: Option<(f64, f64)> = None;
                for &(d1, p1) in &spec.outcomes(c1, a1) {
                    for &(d2, p2) in &spec.outcomes(c2, a2) {
                        let (n1, n2) = resolve(spec, c1, c2, d1, d2);
                        let r = (
                            if n1 == spec.goal_1 { 1.0 } else { 0.0 },
                            if n2 == spec.goal_2 { 1.0 } else { 0.0 },
                        );
                        match rewards {
                            None => rewards = Some(r),
                            Some(prev) if prev != r => {
                                return Err(GridError::InvalidSpec(format!(
                                    "reward at ({c1},{c2}) actions ({a1},{a2}) depends on the chance outcome"
                                )))
                            }
                            Some(_) => {}
                        }
                        let dest = index_of(n1, n2);
                        debug_assert_ne!(dest, usize::MAX);
                        match row.iter_mut().find(|(d, _)| *d == dest) {
                            Some((_, p)) => *p += p1 * p2,
                            None => row.push((dest, p1 * p2)),
                        }
                    }
                }
                row.sort_unstable_by_key(|&(d, _)| d);
                let (r1, r2) = rewards.unwrap();
                transitions.push(row);
                reward_1.push(r1);
                reward_2.push(r2);
            }
        }
    }

    let initial = index_of(spec.start_1, spec.start_2);
    let labels: Vec<String> = pairs
        .iter()
        .map(|&(c1, c2)| format!("({c1},{c2})"))
        .collect();
    GameModel::from_parts(ModelParts {
        num_states: n,
        num_actions_1: 4,
        num_actions_2: 4,
        gamma,
        initial,
        terminals,
        transitions,
        reward_1,
        reward_2,
        labels: Some(labels),
    })
    .map_err(|e| GridError::InvalidSpec(format!("constructed model failed validation: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    const DOWN: usize = 0;
    const LEFT: usize = 1;
    const UP: usize = 2;
    const RIGHT: usize = 3;

    fn row_of(
        model: &GameModel,
        spec: &GridSpec,
        c1: usize,
        c2: usize,
        a1: usize,
        a2: usize,
    ) -> Vec<(usize, f64)> {
        let s = state_index(spec, c1, c2).unwrap();
        model
            .transition_row(model.profile_index(s, a1, a2))
            .to_vec()
    }

    #[test]
    fn grid1_shape() {
        let spec = GridSpec::grid1();
        let m = make_grid_world(&spec, 0.8).unwrap();
        assert_eq!(m.num_states(), 72);
        assert_eq!(m.label(m.initial_state()), "(1,3)");
        let terminal_count = (0..72).filter(|&s| m.is_terminal(s)).count();
        assert_eq!(terminal_count, 15); // 8 with c1=9, 8 with c2=7, minus (9,7)
    }

    #[test]
    fn grid2_shape_and_coincidence() {
        let spec = GridSpec::grid2();
        let m = make_grid_world(&spec, 0.8).unwrap();
        assert_eq!(m.num_states(), 73);
        let cc = state_index(&spec, 8, 8).unwrap();
        assert!(m.is_terminal(cc));
        let terminal_count = (0..73).filter(|&s| m.is_terminal(s)).count();
        assert_eq!(terminal_count, 17);
    }

    #[test]
    fn head_on_moves_bounce() {
        let spec = GridSpec::grid1();
        let m = make_grid_world(&spec, 0.8).unwrap();
        // both aim for cell 2
        let s = state_index(&spec, 1, 3).unwrap();
        assert_eq!(row_of(&m, &spec, 1, 3, RIGHT, LEFT), vec![(s, 1.0)]);
        // swapping places is allowed
        let swapped = state_index(&spec, 2, 1).unwrap();
        assert_eq!(row_of(&m, &spec, 1, 2, RIGHT, LEFT), vec![(swapped, 1.0)]);
    }

    #[test]
    fn walls_hold() {
        let spec = GridSpec::grid1();
        let m = make_grid_world(&spec, 0.8).unwrap();
        let s = state_index(&spec, 1, 3).unwrap();
        assert_eq!(row_of(&m, &spec, 1, 3, DOWN, DOWN), vec![(s, 1.0)]);
    }

    #[test]
    fn goal_entry_pays_exactly_once() {
        let spec = GridSpec::grid1();
        let m = make_grid_world(&spec, 0.8).unwrap();
        let s = state_index(&spec, 6, 4).unwrap();
        let p = m.profile_index(s, UP, DOWN);
        // player 1 steps from 6 up onto its goal 9; player 2 drops to 1
        let dest = state_index(&spec, 9, 1).unwrap();
        assert_eq!(m.transition_row(p), &[(dest, 1.0)]);
        assert_eq!(m.reward(0, p), 1.0);
        assert_eq!(m.reward(1, p), 0.0);
        assert!(m.is_terminal(dest));
    }

    #[test]
    fn grid2_stochastic_up_from_the_corners() {
        let spec = GridSpec::grid2();
        let m = make_grid_world(&spec, 0.8).unwrap();
        let mut row = row_of(&m, &spec, 1, 3, UP, UP);
        row.sort_by(|a, b| a.0.cmp(&b.0));
        let want: Vec<(usize, f64)> = [(1, 3), (1, 6), (4, 3), (4, 6)]
            .iter()
            .map(|&(c1, c2)| (state_index(&spec, c1, c2).unwrap(), 0.25))
            .collect();
        let mut want_sorted = want;
        want_sorted.sort_by(|a, b| a.0.cmp(&b.0));
        assert_eq!(row, want_sorted);
    }

    #[test]
    fn grid2_simultaneous_shared_goal_entry_rewards_both() {
        let spec = GridSpec::grid2();
        let m = make_grid_world(&spec, 0.8).unwrap();
        let s = state_index(&spec, 7, 9).unwrap();
        let p = m.profile_index(s, RIGHT, LEFT);
        let cc = state_index(&spec, 8, 8).unwrap();
        assert_eq!(m.transition_row(p), &[(cc, 1.0)]);
        assert_eq!((m.reward(0, p), m.reward(1, p)), (1.0, 1.0));
    }

    #[test]
    fn every_nonterminal_state_reaches_a_terminal() {
        for (spec, n) in [(GridSpec::grid1(), 72), (GridSpec::grid2(), 73)] {
            let m = make_grid_world(&spec, 0.8).unwrap();
            let mut reaches: Vec<bool> = (0..n).map(|s| m.is_terminal(s)).collect();
            loop {
                let mut changed = false;
                for s in 0..n {
                    if reaches[s] {
                        continue;
                    }
                    'prof: for a1 in 0..4 {
                        for a2 in 0..4 {
                            let p = m.profile_index(s, a1, a2);
                            if m.transition_row(p).iter().any(|&(d, _)| reaches[d]) {
                                reaches[s] = true;
                                changed = true;
                                break 'prof;
                            }
                        }
                    }
                }
                if !changed {
                    break;
                }
            }
            assert!(
                reaches.iter().all(|&r| r),
                "unreachable terminal in {spec:?}"
            );
        }
    }

    #[test]
    fn mirror_cells() {
        let spec = GridSpec::grid1();
        assert_eq!(spec.mirror_cell(1), 3);
        assert_eq!(spec.mirror_cell(4), 6);
        assert_eq!(spec.mirror_cell(7), 9);
        assert_eq!(spec.mirror_cell(2), 2);
        assert_eq!(spec.mirror_cell(5), 5);
    }

    #[test]
    fn spec_validation() {
        let mut bad = GridSpec::grid1();
        bad.start_2 = 1;
        assert!(make_grid_world(&bad, 0.8).is_err());
        let mut bad = GridSpec::grid1();
        bad.goal_1 = 10;
        assert!(make_grid_world(&bad, 0.8).is_err());
        let mut bad = GridSpec::grid2();
        bad.stochastic_up = vec![(1, 1.5)];
        assert!(make_grid_world(&bad, 0.8).is_err());
    }
}
