//! Grade-aware brain tumor segmentation experiments at desk scale.
//!
//! The crate covers the whole pipeline: a synthetic two-grade phantom cohort
//! ([`dataset`]), a shallow dense dilated U-Net trained with a soft Dice loss
//! ([`model`]), four training regimes under shared grade-stratified k-fold
//! cross-validation ([`training`]) and the paired comparison of regimes by
//! per-region Dice, better-subject ratio and one-sided Wilcoxon signed-rank
//! test ([`statistics`]). [`cli`] ties them into reproducible runs.

pub mod cli;
pub mod dataset;
pub mod error;
pub mod model;
pub mod seeds;
pub mod statistics;
pub mod training;

pub use error::{Error, Result};
