//! TasteNet-MNL: a multinomial logit whose taste coefficients are predicted
//! per person by a small feed-forward network, estimated jointly by
//! regularized maximum likelihood.
//!
//! The crate also carries the benchmark estimators (plain MNL and a
//! random-coefficient logit by simulated maximum likelihood), a synthetic
//! data generator with a known nonlinear taste function, and the
//! post-estimation indicators used to compare them.

pub mod choice;
pub mod cli;
pub mod config;
pub mod data;
pub mod draws;
pub mod error;
pub mod estimation;
pub mod indicators;
pub mod model;
pub mod nn;
pub mod ols;
pub mod presets;
pub mod rng;
pub mod synth;

pub use error::{Error, Result};
