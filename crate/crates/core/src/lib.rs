//! Parallel optimistic least-squares value iteration for linear MDPs and
//! zero-sum linear Markov games, with exact dynamic-programming oracles and
//! an experiment harness.
//!
//! ```
//! use parlsvi::agents::{rf_explore, rf_plan, AlgoParams, BetaRule};
//! use parlsvi::envs::generate_random_mdp;
//! use parlsvi::oracle::subopt_mdp;
//!
//! let spec = generate_random_mdp(4, 2, 3, 5, 0).unwrap();
//! let params = AlgoParams::new(20, 4, BetaRule::Fixed(0.5), 1);
//! let (data, _log) = rf_explore(&spec, &params).unwrap();
//! let reward = spec.reward_table();
//! let policy = rf_plan(&data, spec.features(), &reward, &data.planning.unwrap()).unwrap();
//! assert!(subopt_mdp(&spec, &policy, &reward).unwrap() >= 0.0);
//! ```

pub mod agents;
pub mod envs;
pub mod error;
pub mod harness;
pub mod matrix_game;
pub mod numerics;
pub mod oracle;
pub mod par;

pub use error::{Error, Result};
