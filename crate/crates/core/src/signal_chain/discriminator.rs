use serde::{Deserialize, Serialize};

use super::SampledWaveform;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Polarity {
    NegativeGoing,
    PositiveGoing,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiscriminatorConfig {
    pub threshold: f64,
    pub polarity: Polarity,
    pub refractory_time: f64,
}

impl DiscriminatorConfig {
    /// Checks that the threshold sits on the side of zero the pulses swing to.
    pub fn new(threshold: f64, polarity: Polarity, refractory_time: f64) -> Result<Self> {
        if !(refractory_time >= 0.0) {
            return Err(Error::invalid("refractory_time", "must be non-negative"));
        }
        let consistent = match polarity {
            Polarity::NegativeGoing => threshold < 0.0,
            Polarity::PositiveGoing => threshold > 0.0,
        };
        if !consistent || !threshold.is_finite() {
            return Err(Error::invalid(
                "threshold",
                format!("{threshold} V does not match {polarity:?} polarity"),
            ));
        }
        Ok(Self {
            threshold,
            polarity,
            refractory_time,
        })
    }
}

/// Leading-edge threshold crossings, linearly interpolated between samples.
///
/// A crossing is a transition from the idle side of the threshold to the
/// active side. Crossings closer than `refractory_time` to the last reported
/// crossing are dropped.
pub fn discriminate(w: &SampledWaveform, cfg: &DiscriminatorConfig) -> Vec<f64> {
    // Map both polarities onto a negative-going comparison.
    let sign = match cfg.polarity {
        Polarity::NegativeGoing => 1.0,
        Polarity::PositiveGoing => -1.0,
    };
    let thr = sign * cfg.threshold;
    let s = w.samples();

    let mut out: Vec<f64> = Vec::new();
    for i in 1..s.len() {
        let prev = sign * s[i - 1];
        let cur = sign * s[i];
        if prev > thr && cur <= thr {
            let frac = (prev - thr) / (prev - cur);
            let t = w.t0() + (i as f64 - 1.0 + frac) * w.dt();
            match out.last() {
                Some(&last) if t - last < cfg.refractory_time => {}
                _ => out.push(t),
            }
        }
    }
    out
}
