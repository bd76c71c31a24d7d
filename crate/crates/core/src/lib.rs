//! Link-level simulation of a massive MU-MIMO-OFDM uplink whose base station
//! has a nonlinear LNA, a phase-noisy common LO and finite-resolution ADCs,
//! together with the Bussgang-linearized aggregate model of that chain.
//!
//! The exact nonlinear chain ([`impairments`]) and the linearized model
//! ([`bussgang`]) are compared through PSD and BER experiments in
//! [`analysis`]; [`harness`] wires everything to configuration files and CSV
//! output for the `sim` binary.
// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod bussgang;
pub mod channel;
pub mod error;
pub mod harness;
pub mod impairments;
pub mod numerics;
pub mod waveform;

pub use error::{Error, Result};
