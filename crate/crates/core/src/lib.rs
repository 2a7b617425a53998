//! Two-player general-sum Markov games with named-equilibrium learning.
//!
//! The crate provides the pieces of a model-free multi-agent RL stack:
//! stage-game equilibrium solving ([`stage_game`]), tabular Markov game models
//! and evaluation ([`markov_game`]), the two-robot grid-world benchmarks
//! ([`grid_worlds`]), a delayed Nash Q-learner plus a classic Nash-Q baseline
//! ([`learners`]), an exact equilibrium oracle for certification
//! ([`nash_oracle`]), a PAC monitor that tracks known-set membership and sample
//! bounds during a run ([`pac_monitor`]), and a deterministic experiment runner
//! ([`experiment`]).

pub mod experiment;
pub mod grid_worlds;
pub mod learners;
pub mod markov_game;
pub mod nash_oracle;
pub mod pac_monitor;
pub mod stage_game;
