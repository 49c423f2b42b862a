//! Finite-sample limits of entity resolution by microclustering.
//!
//! This crate is `no_std` (it needs `alloc`) and holds the pure numerical
//! machinery: exact derangement combinatorics for identical-name collisions,
//! maximum-likelihood assignment under known Gaussian mixtures and its
//! success probabilities, the collapsed Gibbs sampler for a mixture with
//! unknown means, and the closed-population estimation pipeline built on top
//! of (possibly poor) entity resolution.
//!
//! File formats, configuration and the command-line driver live in the
//! `microclust` crate.
#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod assignment;
pub mod bayes;
pub mod combinatorics;
pub mod error;
pub mod names;
pub mod popest;
pub mod rng;
pub mod special;

pub use error::{Error, Result};
