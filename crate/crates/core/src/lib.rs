//! Reservoir computing with a chain of coupled Duffing oscillators.

pub mod config;
pub mod dynamics;
pub mod error;
pub mod experiments;
pub mod matrix_io;
pub mod network;
pub mod parity;
pub mod pipeline;
pub mod readout;
pub mod rng;
pub mod runner;
pub mod speech;
pub mod stats;

pub use error::{Error, Result};
