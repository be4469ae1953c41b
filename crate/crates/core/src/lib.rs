pub mod agent;
pub mod belief;
pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod diffmath;
pub mod envs;
pub mod error;
pub mod eval;
pub mod finetune;
pub mod pretrain;
pub mod report;
pub mod seed;
pub mod variant;

#[cfg(test)]
mod testutil;

pub use error::{Error, Result};
pub use variant::{BeliefArch, Variant};
