//! Adaptive dynamics of the alternating iterated Prisoner's Dilemma with
//! memory-`N` strategies.

pub mod chain;
pub mod cli;
pub mod dynamics;
pub mod error;
pub mod export;
pub mod ode;
pub mod oracle;
pub mod payoff;
pub mod strategy;
pub mod symmetry;
pub mod torus;
pub mod verify;

pub use error::{Error, Result};
