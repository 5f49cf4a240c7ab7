//! Large-margin perceptrons with a dynamic or fixed margin condition.
//!
//! Training runs on the [`data::WorkingDataset`] built from sparse text
//! data, driven by [`driver`]. The [`oracle`] computes the maximum margin
//! independently for checks.

pub mod bounds;
pub mod cli;
pub mod data;
pub mod driver;
pub mod model;
pub mod oracle;
pub mod report;
pub mod schedule;
pub mod state;
