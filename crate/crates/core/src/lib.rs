//! Math core for learned iterative sparse recovery with instance-adaptive
//! stopping.
//!
//! The crate is `no_std` (with `alloc`) and contains no IO: matrices, a
//! reverse-mode gradient tape, the unrolled shrinkage network, the stopping
//! policy and its distribution calculus, classical proximal-gradient
//! baselines, synthetic data generation, training loops, and evaluation
//! metrics. File formats, parallel execution, and the command-line front end
//! live in the companion `lstop` crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod classic;
pub mod data;
pub mod fdcheck;
pub mod lista;
pub mod mat;
pub mod math;
pub mod metrics;
pub mod policy;
pub mod rng;
pub mod stopping;
pub mod tape;
pub mod train;
