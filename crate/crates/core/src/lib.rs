//! Resource planning for hierarchical federated learning.
//!
//! Clients are grouped into edge-server coalitions by a coalition formation
//! game that lowers the cross-edge label-distribution divergence ([`game`]).
//! Uplink bandwidth is then split across coalitions by projected gradient
//! descent and each client's transmit power is set to the smallest value that
//! meets the task deadline ([`alloc`]). [`netmodel`] evaluates latency,
//! energy and utility; [`hfl`] runs a small hierarchical FedAvg to measure
//! the accuracy effect of a partition; [`experiment`] and [`report`] wire
//! everything into comparable runs against random baselines.

// `!(x > 0.0)` is used on purpose so NaN inputs are rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod alloc;
pub mod dist;
pub mod error;
pub mod experiment;
pub mod game;
pub mod hfl;
pub mod netmodel;
pub mod par;
pub mod report;
pub mod scenario;

pub use error::{Error, Result};
pub use par::Execution;
