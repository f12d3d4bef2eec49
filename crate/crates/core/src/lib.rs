//! Spiking networks built from dual-timescale gated LIF neurons.
//!
//! - [`neuron`]: fast/slow compartments, gate blending, threshold and soft reset
//! - [`network`]: dense and conv layer stacks unrolled over time, spike accounting
//! - [`train`]: surrogate-gradient BPTT, cross-entropy plus firing-rate regularizer, Adam
//! - [`calibration`]: pre-training threshold search
//! - [`data`]: IDX loading, Bernoulli rate encoding, toy data, spike files
//! - [`harness`]: sequential-task experiments, metrics, ablations, gate analysis
//! - [`config`] and [`checkpoint`]: experiment files and saved state

pub mod calibration;
pub mod checkpoint;
pub mod config;
pub mod data;
pub mod error;
pub mod harness;
pub mod network;
pub mod neuron;
pub mod rng;
pub mod train;

pub use error::{Error, Result};
