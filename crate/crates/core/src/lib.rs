//! Repair of constraint systems over step-function kernels.
//!
//! A kernel `f` on `[0,1)^k` that satisfies a closed constraint system for
//! almost every tuple of points is corrected on a finite point set `A` so
//! that the constraints hold for *every* tuple over `A` (up to a chosen ε),
//! while the corrected values stay ε-close to `f` at density tuples.

pub mod constraint;
pub mod corrector;
pub mod demos;
pub mod density;
pub mod error;
pub mod format;
pub mod kernel;
pub mod ramsey;
pub mod rational;
pub mod value_space;

pub use error::{Error, Result};
pub use rational::Q;
