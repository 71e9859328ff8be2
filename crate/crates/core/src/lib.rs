//! Simulation and verification toolkit for the stochastic dyadic MHD shell model.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::too_many_arguments, clippy::needless_range_loop)]

pub mod birth_death;
pub mod commands;
pub mod config;
pub mod deterministic;
pub mod ensemble;
pub mod error;
pub mod forward;
pub mod girsanov;
pub mod output;
pub mod rng;
pub mod sde;
pub mod shell;
pub mod stats;
pub mod verify;

pub use error::{Error, Result};
pub use shell::{Coords, ModelParams, ShellState};
