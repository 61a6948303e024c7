//! Bidding strategies for the second-price knapsack problem.
//!
//! The bidder sees each ad's value before bidding but learns its paying price
//! only by winning. This crate provides:
//!
//! - [`knapsack`]: offline fractional and exact solvers with the dual threshold,
//! - [`strategies`]: online bidding policies,
//! - [`simulator`]: second-price auctions and the replay loop,
//! - [`dataio`]: synthetic streams, log ingestion and budgets,
//! - [`experiment`] and [`report`]: the benchmark protocol and its tables.

pub mod dataio;
pub mod experiment;
pub mod knapsack;
pub mod report;
pub mod simulator;
pub mod strategies;

pub use knapsack::{Budget, Impression};
