//! Simulation and analysis toolkit for a 1.25 GHz sine-gated InGaAs/InP
//! single-photon avalanche detector read out through low-pass filters.
//!
//! - [`signal_chain`]: waveform-level front end (gate, feedthrough, avalanche
//!   pulses, filter, spectra, discriminator).
//! - [`detector_model`]: calibrated statistical device model.
//! - [`mc_engine`]: gate-clocked Monte Carlo engine, hold-off, TCSPC and
//!   correlation analysis.
//! - [`qkd_budget`]: COW time-bin link budget (rates, QBER, post-EC rate).
//! - [`config`]: JSON configuration documents with eager validation.

// `!(x > 0.0)` is used on purpose throughout: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod detector_model;
pub mod error;
pub mod mc_engine;
pub mod qkd_budget;
pub mod signal_chain;

pub use detector_model::{
    AfterpulseModel, BiasEfficiencyLaw, DetectorParams, GateConfig, JitterModel, TemperatureDarkLaw,
};
pub use error::{Error, Result};
pub use mc_engine::{
    DetectionRecord, Histogram, HoldoffAnchor, Origin, RunConfig, RunOutput, SourceConfig, SourceKind,
};
pub use qkd_budget::{DeadTimeModel, QkdLinkConfig, QkdReport, SweepAxis};
pub use signal_chain::SampledWaveform;
