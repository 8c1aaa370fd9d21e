//! Analog front end: sine gate, capacitive feedthrough, avalanche pulses,
//! low-pass filtering, spectra and threshold discrimination.

mod chain;
mod discriminator;
mod fft;
mod filter;
mod spectrum;
mod waveform;

use std::f64::consts::{LN_2, PI};

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use chain::{ChainTrace, FrontEnd, FrontEndConfig, DEFAULT_COUPLING_GAIN};
pub use discriminator::{discriminate, DiscriminatorConfig, Polarity};
pub use filter::{apply_filter, self_test, FilterResponseSpec, FilterSelfTest, LowPassFilter, SweepPoint};
pub use spectrum::{band_power, power_spectrum, power_spectrum_linear, to_db, POWER_FLOOR_DB};
pub use waveform::{SampledWaveform, TimeGrid};

/// Sinusoidal gate of peak-to-peak amplitude `amplitude_pp`, delayed by
/// `delay`: `v(t) = amplitude_pp / 2 · sin(2π·freq·(t − delay))`.
pub fn synthesize_gate_train(
    freq: f64,
    amplitude_pp: f64,
    duration: f64,
    dt: f64,
    delay: f64,
) -> Result<SampledWaveform> {
    if !(freq > 0.0 && freq.is_finite()) {
        return Err(Error::invalid("freq", format!("must be positive, got {freq}")));
    }
    if !(amplitude_pp >= 0.0 && amplitude_pp.is_finite()) {
        return Err(Error::invalid(
            "amplitude_pp",
            format!("must be non-negative, got {amplitude_pp}"),
        ));
    }
    if !(duration > 0.0) || duration * freq < 1.0 - 1e-9 {
        return Err(Error::invalid(
            "duration",
            format!("must cover at least one gate period, got {duration}"),
        ));
    }
    if !(dt > 0.0) || dt * freq * 8.0 > 1.0 + 1e-9 {
        return Err(Error::invalid(
            "dt",
            format!("needs at least 8 samples per gate period, got {dt}"),
        ));
    }
    if !delay.is_finite() {
        return Err(Error::invalid("delay", "must be finite"));
    }
    let n = (duration / dt).round() as usize;
    let grid = TimeGrid::new(0.0, dt, n)?;
    let amp = 0.5 * amplitude_pp;
    // Reduce the phase modulo one period so long delays do not lose precision.
    let phase = (freq * delay).rem_euclid(1.0);
    SampledWaveform::from_fn(grid, |t| amp * (2.0 * PI * (freq * t - phase)).sin())
}

/// Capacitive response of the diode to the gate: the time derivative of the
/// gate, scaled to unit gain at `gate_frequency` and then by `coupling_gain`.
///
/// The derivative is taken spectrally, so the input is treated as periodic;
/// feed it an integer number of gate cycles.
pub fn synthesize_feedthrough(
    gate: &SampledWaveform,
    gate_frequency: f64,
    coupling_gain: f64,
) -> Result<SampledWaveform> {
    if !coupling_gain.is_finite() {
        return Err(Error::invalid("coupling_gain", "must be finite"));
    }
    if !(gate_frequency > 0.0) {
        return Err(Error::invalid("gate_frequency", "must be positive"));
    }
    let n = gate.len();
    let mut spec = fft::forward(gate.samples());
    for (k, bin) in spec.iter_mut().enumerate() {
        // The Nyquist bin of an even-length transform has no well-defined sign.
        if n.is_multiple_of(2) && k == n / 2 {
            *bin = rustfft::num_complex::Complex64::new(0.0, 0.0);
            continue;
        }
        let f = fft::bin_frequency(k, n, gate.dt());
        *bin *= rustfft::num_complex::Complex64::new(0.0, coupling_gain * f / gate_frequency);
    }
    Ok(gate.with_samples(fft::inverse_real(spec)))
}

/// Mean shape and fluctuation of the avalanche pulse seen at the
/// discriminator.
///
/// The pulse rises along a half cosine over `rise_time`, reaches
/// `peak_amplitude`, then recovers exponentially with a 90 %→10 % time of
/// `fall_time`. Per-pulse amplitude is a normal draw truncated to stay
/// negative; per-pulse width is scaled by a log-normal factor with median 1.
/// The jitter defaults are not calibrated against measured traces.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AvalanchePulseShape {
    pub peak_amplitude: f64,
    pub fall_time: f64,
    pub rise_time: f64,
    pub amplitude_jitter: f64,
    pub width_jitter: f64,
}

impl Default for AvalanchePulseShape {
    fn default() -> Self {
        Self {
            peak_amplitude: -0.032,
            fall_time: 1.8e-9,
            rise_time: 0.5e-9,
            amplitude_jitter: 0.2,
            width_jitter: 0.15,
        }
    }
}

/// One realized pulse.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PulseDraw {
    pub amplitude: f64,
    pub fall_time: f64,
    pub rise_time: f64,
}

impl PulseDraw {
    /// Voltage `dt_since_onset` after the start of the leading edge.
    pub fn value_at(&self, dt_since_onset: f64) -> f64 {
        if dt_since_onset < 0.0 {
            0.0
        } else if dt_since_onset < self.rise_time {
            self.amplitude * 0.5 * (1.0 - (PI * dt_since_onset / self.rise_time).cos())
        } else {
            let tau = self.fall_time / 9f64.ln();
            self.amplitude * (-(dt_since_onset - self.rise_time) / tau).exp()
        }
    }
}

impl AvalanchePulseShape {
    pub fn validate(&self) -> Result<()> {
        if !(self.peak_amplitude < 0.0) {
            return Err(Error::invalid("peak_amplitude", "must be negative"));
        }
        if !(self.fall_time > 0.0) {
            return Err(Error::invalid("fall_time", "must be positive"));
        }
        if !(self.rise_time > 0.0) {
            return Err(Error::invalid("rise_time", "must be positive"));
        }
        if !(self.amplitude_jitter >= 0.0) || !(self.width_jitter >= 0.0) {
            return Err(Error::invalid("jitter", "standard deviations must be non-negative"));
        }
        Ok(())
    }

    pub fn mean(&self) -> PulseDraw {
        PulseDraw {
            amplitude: self.peak_amplitude,
            fall_time: self.fall_time,
            rise_time: self.rise_time,
        }
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> PulseDraw {
        let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
        let mut rel = 1.0;
        if self.amplitude_jitter > 0.0 {
            loop {
                rel = 1.0 + self.amplitude_jitter * std_normal.sample(rng);
                if rel > 0.0 {
                    break;
                }
            }
        }
        let width = if self.width_jitter > 0.0 {
            (self.width_jitter * std_normal.sample(rng)).exp()
        } else {
            1.0
        };
        PulseDraw {
            amplitude: self.peak_amplitude * rel,
            fall_time: self.fall_time * width,
            rise_time: self.rise_time * width,
        }
    }
}

/// One stochastic avalanche pulse on `grid`, with its leading edge starting at
/// `t_event`. Samples before the onset are zero; the pulse is simply cut off
/// at the end of the grid.
pub fn synthesize_avalanche<R: Rng + ?Sized>(
    shape: &AvalanchePulseShape,
    grid: TimeGrid,
    t_event: f64,
    rng: &mut R,
) -> Result<SampledWaveform> {
    shape.validate()?;
    if !(t_event >= grid.t0 && t_event <= grid.end()) {
        return Err(Error::OutOfRange {
            what: "t_event",
            value: t_event,
            min: grid.t0,
            max: grid.end(),
        });
    }
    let pulse = shape.draw(rng);
    SampledWaveform::from_fn(grid, |t| pulse.value_at(t - t_event))
}

/// Gaussian amplifier noise of standard deviation `rms`, added sample-wise.
pub fn add_white_noise<R: Rng + ?Sized>(
    w: &SampledWaveform,
    rms: f64,
    rng: &mut R,
) -> Result<SampledWaveform> {
    if !(rms >= 0.0) {
        return Err(Error::invalid("rms", "must be non-negative"));
    }
    if rms == 0.0 {
        return Ok(w.clone());
    }
    let normal = Normal::new(0.0, rms).map_err(|e| Error::invalid("rms", e.to_string()))?;
    Ok(w.with_samples(w.samples().iter().map(|v| v + normal.sample(rng)).collect()))
}

/// FWHM of a Gaussian with standard deviation `sigma`.
pub fn gaussian_fwhm(sigma: f64) -> f64 {
    2.0 * (2.0 * LN_2).sqrt() * sigma
}
