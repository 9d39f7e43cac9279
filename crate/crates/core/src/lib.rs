//! Deterministic compliance-enforcing ledger engine for tokenized assets.

pub mod audit;
pub mod config;
pub mod conformance;
pub mod enforcement;
pub mod engine;
pub mod error;
pub mod events;
pub mod identity;
pub mod ledger;
pub mod model;
pub mod policy;
pub mod scenario;
pub mod state;

pub use error::{Error, Result};
