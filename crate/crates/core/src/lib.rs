//! Simulation and analysis of time-bin spin-photon entanglement from a
//! single solid-state emitter with dynamical decoupling.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod config;
pub mod io;
pub mod noise;
pub mod photonics;
pub mod runner;
pub mod sequencer;
pub mod spin_model;
