#![no_std]
extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod math;
pub mod matrix;
pub mod rng;
pub mod ukg;

pub use matrix::Matrix;
pub mod interactions;
pub mod model;
pub mod propagation;
pub mod counterfactual;
pub mod eval;
pub mod training;
pub mod gradcheck;
pub mod synthgen;
