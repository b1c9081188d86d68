//! Semi-supervised conditional GAN training at desk scale.
//!
//! A generator, a discriminator and a labeller are trained jointly from a
//! handful of labelled pairs plus a large unlabelled set, on synthetic tasks
//! whose true conditional structure is known so every claim can be scored.

pub mod autodiff;
pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod data;
pub mod error;
pub mod gradcheck;
pub mod inference;
pub mod metrics;
pub mod nets;
pub mod objectives;
pub mod oracle;
pub mod report;
pub mod trainer;

pub use error::{Error, Result};
