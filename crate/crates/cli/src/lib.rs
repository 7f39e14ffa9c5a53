//! Experiment runner: configs, parallel replicas, reports.

// `!(x > 0.0)` guards reject NaN along with out-of-range values
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod error;
pub mod lemmas;
pub mod noise_check;
pub mod output;
pub mod simulate;
