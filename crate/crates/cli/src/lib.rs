//! Experiment runner for `heatlab-core`: JSON configs in, `report.json` and
//! CSV curves out.

pub mod catalog;
pub mod config;
pub mod error;
pub mod runner;
pub mod selftest;
