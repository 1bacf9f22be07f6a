//! Model-based reinforcement learning accelerated by implicit imitation.
//!
//! A learner runs prioritized sweeping over Dirichlet-estimated models of its
//! own actions. Alongside, it watches mentors' state transitions (never their
//! actions), estimates each mentor's Markov chain, and folds those chains into
//! confidence-gated augmented Bellman backups. Feasibility testing and k-step
//! repair handle mentors whose behaviour the learner cannot reproduce.

pub mod backup;
pub mod belief;
pub mod error;
pub mod feasibility;
pub mod gridworld;
pub mod harness;
pub mod learner;
pub mod mdp;
pub mod metrics;

pub use error::{Error, Result};
