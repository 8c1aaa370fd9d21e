use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{
    add_white_noise, discriminate, synthesize_feedthrough, synthesize_gate_train,
    AvalanchePulseShape, DiscriminatorConfig, FilterResponseSpec, LowPassFilter, Polarity,
    PulseDraw, SampledWaveform,
};
use crate::error::{Error, Result};

/// Diode coupling that puts the unfiltered feedthrough an order of magnitude
/// above the mean avalanche (0.4 V amplitude for an 8 Vpp gate).
pub const DEFAULT_COUPLING_GAIN: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrontEndConfig {
    pub gate_frequency: f64,
    pub gate_amplitude_pp: f64,
    pub coupling_gain: f64,
    pub dt: f64,
    pub filter: FilterResponseSpec,
    pub filter_stages: usize,
    pub pulse: AvalanchePulseShape,
    pub discriminator: DiscriminatorConfig,
    pub amplifier_noise_rms: f64,
}

impl Default for FrontEndConfig {
    fn default() -> Self {
        let pulse = AvalanchePulseShape::default();
        Self {
            gate_frequency: 1.25e9,
            gate_amplitude_pp: 8.0,
            coupling_gain: DEFAULT_COUPLING_GAIN,
            dt: 25e-12,
            filter: FilterResponseSpec::default(),
            filter_stages: 2,
            pulse,
            discriminator: DiscriminatorConfig {
                threshold: 0.5 * pulse.peak_amplitude,
                polarity: Polarity::NegativeGoing,
                refractory_time: 2e-9,
            },
            amplifier_noise_rms: 0.0,
        }
    }
}

/// Every intermediate trace of one pass through the front end.
#[derive(Debug, Clone)]
pub struct ChainTrace {
    pub gate: SampledWaveform,
    pub feedthrough: SampledWaveform,
    /// Detector output before filtering: feedthrough, avalanches and noise.
    pub raw: SampledWaveform,
    pub filtered: SampledWaveform,
}

/// A front end with its filter designed once for the configured spacing.
#[derive(Debug, Clone)]
pub struct FrontEnd {
    cfg: FrontEndConfig,
    filter: LowPassFilter,
}

impl FrontEnd {
    pub fn new(cfg: FrontEndConfig) -> Result<Self> {
        cfg.pulse.validate()?;
        DiscriminatorConfig::new(
            cfg.discriminator.threshold,
            cfg.discriminator.polarity,
            cfg.discriminator.refractory_time,
        )?;
        if cfg.filter_stages == 0 {
            return Err(Error::invalid("filter_stages", "at least one stage is required"));
        }
        if (cfg.filter.gate_frequency - cfg.gate_frequency).abs() > 1e-6 * cfg.gate_frequency {
            return Err(Error::invalid(
                "filter.gate_frequency",
                "must match the gate frequency of the front end",
            ));
        }
        let filter = LowPassFilter::design(&cfg.filter, cfg.dt)?;
        Ok(Self { cfg, filter })
    }

    pub fn config(&self) -> &FrontEndConfig {
        &self.cfg
    }

    pub fn filter(&self) -> &LowPassFilter {
        &self.filter
    }

    /// Renders `cycles` gate periods with the given pulses (onset time, draw)
    /// superimposed on the feedthrough, then filters.
    pub fn render<R: Rng + ?Sized>(
        &self,
        cycles: usize,
        gate_delay: f64,
        pulses: &[(f64, PulseDraw)],
        rng: &mut R,
    ) -> Result<ChainTrace> {
        let c = &self.cfg;
        let duration = cycles as f64 / c.gate_frequency;
        let gate = synthesize_gate_train(c.gate_frequency, c.gate_amplitude_pp, duration, c.dt, gate_delay)?;
        let feedthrough = synthesize_feedthrough(&gate, c.gate_frequency, c.coupling_gain)?;
        let grid = gate.grid();
        let mut samples = feedthrough.samples().to_vec();
        for (onset, pulse) in pulses {
            if !(*onset >= grid.t0 && *onset <= grid.end()) {
                return Err(Error::OutOfRange {
                    what: "pulse onset",
                    value: *onset,
                    min: grid.t0,
                    max: grid.end(),
                });
            }
            for (i, s) in samples.iter_mut().enumerate() {
                *s += pulse.value_at(grid.time(i) - onset);
            }
        }
        let raw = add_white_noise(&feedthrough.with_samples(samples), c.amplifier_noise_rms, rng)?;
        let filtered = self.filter.apply(&raw, c.filter_stages)?;
        Ok(ChainTrace {
            gate,
            feedthrough,
            raw,
            filtered,
        })
    }

    pub fn discriminate(&self, trace: &ChainTrace) -> Vec<f64> {
        discriminate(&trace.filtered, &self.cfg.discriminator)
    }
}
