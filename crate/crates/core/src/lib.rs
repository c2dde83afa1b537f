//! Exact finite-time kernels, Fredholm determinants and Monte Carlo dynamics for
//! Brownian motions with one-sided collisions.

pub mod airy;
pub mod experiments;
pub mod fredholm;
pub mod kernels;
pub mod lambert;
pub mod linalg;
pub mod quad;
pub mod simulate;
