//! Bandit-supervised training: a time-varying GP-UCB bandit picks which
//! class a stochastic learner trains on at each step, rewards it by the
//! resulting validation-loss gain, and ranks classes by how often they were
//! chosen.

pub mod bandit;
pub mod data;
pub mod error;
pub mod gp;
pub mod harness;
pub mod kernel;
pub mod learner;
pub mod ranking;

pub use error::{Error, Result};
