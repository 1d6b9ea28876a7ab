//! Optimizers that minimize a target `f` while drawing most gradients from a
//! cheaper auxiliary helper `h`, together with the test problems, theory
//! helpers and experiment harness around them.

pub mod decentralized;
pub mod error;
pub mod harness;
pub mod optimizers;
pub mod oracle;
pub mod problems;
pub mod rng;
pub mod theory;
pub mod trajectory;
pub mod vector;

pub use error::{Error, Result};
pub use oracle::{NoiseSpec, OraclePair, Smooth};
pub use rng::RandomToken;
pub use trajectory::{Row, Trajectory};
pub use vector::Vector;
