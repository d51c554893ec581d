//! Federated training of a convolutional single-LSTM time-series classifier
//! with interchangeable aggregation strategies and a tamper-evident,
//! hash-chained parameter ledger.
//!
//! The library simulates the full loop in process: clients train locally on
//! disjoint shards of windowed multichannel sensor data, a server aggregates
//! their parameters under one of five strategies (FedAvg, FedProx,
//! FedTrimmedAvg, Krum, FedAvgM), and every committed global model is
//! endorsed by two simulated peers and appended to an append-only block
//! chain. Everything is deterministic given the experiment seed; see the
//! `orchestrator` module for the experiment drivers and the `cli` crate for
//! the batch front end.

pub mod aggregation;
pub mod data;
pub mod error;
pub mod exec;
pub mod ledger;
pub mod metrics;
pub mod model;
pub mod orchestrator;
pub mod params;
pub(crate) mod wire;

pub use error::{Error, Result};
pub use params::{Digest, ParamEntry, ParameterSet};
