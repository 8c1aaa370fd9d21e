//! Low-pass stage that strips the capacitive gate response from the detector
//! output.
//!
//! Each stage is a linear-phase FIR low-pass (Kaiser-windowed sinc) applied
//! with zero group delay. Traces are treated as periodic, so applying a stage
//! is exactly a multiplication of every DFT bin by the real FIR response at
//! that bin's frequency. The design loop lengthens the kernel until a dense
//! evaluation of the response meets every point of the [`FilterResponseSpec`];
//! [`self_test`] then confirms the contract with real swept-sine traces.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::{fft, SampledWaveform, TimeGrid};
use crate::error::{Error, Result};

/// Attenuation contract for one filter stage. Attenuations are positive dB.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterResponseSpec {
    pub gate_frequency: f64,
    pub passband_edge: f64,
    pub passband_ripple_max_db: f64,
    pub rejection_at_gate_db: f64,
    /// Minimum attenuation over `gate_frequency ± rejection_band_halfwidth`.
    pub rejection_band_floor_db: f64,
    pub rejection_band_halfwidth: f64,
    /// Minimum attenuation from the gate frequency up to `upper_frequency`.
    pub rejection_to_upper_db: f64,
    pub upper_frequency: f64,
}

impl Default for FilterResponseSpec {
    fn default() -> Self {
        Self {
            gate_frequency: 1.25e9,
            passband_edge: 600e6,
            passband_ripple_max_db: 1.0,
            rejection_at_gate_db: 54.0,
            rejection_band_floor_db: 50.0,
            rejection_band_halfwidth: 50e6,
            rejection_to_upper_db: 40.0,
            upper_frequency: 4e9,
        }
    }
}

impl FilterResponseSpec {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("gate_frequency", self.gate_frequency),
            ("passband_edge", self.passband_edge),
            ("passband_ripple_max_db", self.passband_ripple_max_db),
            ("rejection_at_gate_db", self.rejection_at_gate_db),
            ("rejection_band_floor_db", self.rejection_band_floor_db),
            ("rejection_band_halfwidth", self.rejection_band_halfwidth),
            ("rejection_to_upper_db", self.rejection_to_upper_db),
            ("upper_frequency", self.upper_frequency),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(name, format!("must be positive, got {v}")));
            }
        }
        if self.passband_edge >= self.stopband_edge() {
            return Err(Error::invalid(
                "passband_edge",
                "must lie below the lower edge of the gate rejection band",
            ));
        }
        if self.upper_frequency < self.gate_frequency {
            return Err(Error::invalid(
                "upper_frequency",
                "must not be below the gate frequency",
            ));
        }
        Ok(())
    }

    /// Lowest frequency that must be rejected.
    pub fn stopband_edge(&self) -> f64 {
        self.gate_frequency - self.rejection_band_halfwidth
    }

    fn design_attenuation_db(&self) -> f64 {
        self.rejection_at_gate_db
            .max(self.rejection_band_floor_db)
            .max(self.rejection_to_upper_db)
    }
}

/// A designed single stage, tied to the sample spacing it was designed for.
#[derive(Debug, Clone)]
pub struct LowPassFilter {
    /// Causal half of the symmetric kernel: `h[0]` is the centre tap.
    half_kernel: Vec<f64>,
    dt: f64,
    spec: FilterResponseSpec,
}

const DESIGN_MARGIN_DB: f64 = 6.0;
const MAX_DESIGN_ITERATIONS: usize = 32;

impl LowPassFilter {
    pub fn design(spec: &FilterResponseSpec, dt: f64) -> Result<Self> {
        spec.validate()?;
        let fs = 1.0 / dt;
        if !(dt > 0.0) || fs <= 2.0 * spec.gate_frequency {
            return Err(Error::invalid(
                "dt",
                format!(
                    "sample rate {:.3e} Hz cannot represent the {:.3e} Hz gate frequency",
                    fs, spec.gate_frequency
                ),
            ));
        }

        let atten = spec.design_attenuation_db() + DESIGN_MARGIN_DB;
        let beta = kaiser_beta(atten);
        let cutoff = 0.5 * (spec.passband_edge + spec.stopband_edge());
        let transition = (spec.stopband_edge() - spec.passband_edge) / fs;
        let order = ((atten - 7.95) / (14.36 * transition)).ceil().max(2.0);
        let mut half_len = (order / 2.0).ceil() as usize;

        for _ in 0..MAX_DESIGN_ITERATIONS {
            let filter = Self {
                half_kernel: windowed_sinc(cutoff / fs, half_len, beta),
                dt,
                spec: *spec,
            };
            if filter.design_check() {
                return Ok(filter);
            }
            half_len = half_len + half_len / 8 + 1;
        }
        Err(Error::invalid(
            "spec",
            "no FIR within the design budget meets the response contract",
        ))
    }

    pub fn spec(&self) -> &FilterResponseSpec {
        &self.spec
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Number of taps of the full symmetric kernel.
    pub fn taps(&self) -> usize {
        2 * self.half_kernel.len() - 1
    }

    /// Real (zero-phase) amplitude response at `freq`.
    pub fn response(&self, freq: f64) -> f64 {
        let w = 2.0 * PI * freq * self.dt;
        let tail: f64 = self
            .half_kernel
            .iter()
            .enumerate()
            .skip(1)
            .map(|(n, h)| h * (w * n as f64).cos())
            .sum();
        self.half_kernel[0] + 2.0 * tail
    }

    /// Attenuation at `freq` as a positive dB figure.
    pub fn attenuation_db(&self, freq: f64) -> f64 {
        -20.0 * self.response(freq).abs().max(1e-300).log10()
    }

    /// Applies `stages` identical stages to a trace sampled at this filter's
    /// spacing.
    pub fn apply(&self, w: &SampledWaveform, stages: usize) -> Result<SampledWaveform> {
        if stages == 0 {
            return Err(Error::invalid("stages", "at least one stage is required"));
        }
        if (w.dt() - self.dt).abs() > 1e-9 * self.dt {
            return Err(Error::invalid(
                "dt",
                "waveform spacing differs from the spacing the filter was designed for",
            ));
        }
        let n = w.len();
        let mut spec = fft::forward(w.samples());
        for (k, bin) in spec.iter_mut().enumerate() {
            let g = self.response(fft::bin_frequency(k, n, self.dt).abs());
            *bin *= g.powi(stages as i32);
        }
        Ok(w.with_samples(fft::inverse_real(spec)))
    }

    fn design_check(&self) -> bool {
        let s = &self.spec;
        let nyquist = 0.5 / self.dt;
        let ripple_ok = frequency_grid(0.0, s.passband_edge, 1e6)
            .all(|f| self.response(f).abs().log10().abs() * 20.0 <= s.passband_ripple_max_db);
        let gate_ok = self.attenuation_db(s.gate_frequency) >= s.rejection_at_gate_db;
        let band_ok = frequency_grid(
            s.gate_frequency - s.rejection_band_halfwidth,
            s.gate_frequency + s.rejection_band_halfwidth,
            1e6,
        )
        .all(|f| self.attenuation_db(f) >= s.rejection_band_floor_db);
        let upper_ok = frequency_grid(s.gate_frequency, s.upper_frequency.min(nyquist), 1e6)
            .all(|f| self.attenuation_db(f) >= s.rejection_to_upper_db);
        ripple_ok && gate_ok && band_ok && upper_ok
    }
}

/// Designs a stage for the waveform's spacing and applies it `stages` times.
pub fn apply_filter(
    w: &SampledWaveform,
    spec: &FilterResponseSpec,
    stages: usize,
) -> Result<SampledWaveform> {
    LowPassFilter::design(spec, w.dt())?.apply(w, stages)
}

fn frequency_grid(lo: f64, hi: f64, step: f64) -> impl Iterator<Item = f64> {
    let n = ((hi - lo) / step).floor().max(0.0) as usize;
    (0..=n).map(move |i| lo + i as f64 * step).chain(std::iter::once(hi))
}

fn kaiser_beta(atten_db: f64) -> f64 {
    if atten_db > 50.0 {
        0.1102 * (atten_db - 8.7)
    } else if atten_db >= 21.0 {
        0.5842 * (atten_db - 21.0).powf(0.4) + 0.07886 * (atten_db - 21.0)
    } else {
        0.0
    }
}

/// Modified Bessel function of the first kind, order zero (power series).
fn bessel_i0(x: f64) -> f64 {
    let q = 0.25 * x * x;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..200 {
        term *= q / (k * k) as f64;
        sum += term;
        if term < 1e-17 * sum {
            break;
        }
    }
    sum
}

/// Half of a symmetric Kaiser-windowed ideal low-pass kernel with normalized
/// cutoff `fc` (cycles per sample), normalized to unit DC gain.
fn windowed_sinc(fc: f64, half_len: usize, beta: f64) -> Vec<f64> {
    let m = half_len as f64;
    let i0_beta = bessel_i0(beta);
    let mut h: Vec<f64> = (0..=half_len)
        .map(|n| {
            let n = n as f64;
            let ideal = if n == 0.0 {
                2.0 * fc
            } else {
                (2.0 * PI * fc * n).sin() / (PI * n)
            };
            let r = n / (m + 1.0);
            ideal * bessel_i0(beta * (1.0 - r * r).max(0.0).sqrt()) / i0_beta
        })
        .collect();
    let dc = h[0] + 2.0 * h[1..].iter().sum::<f64>();
    for v in &mut h {
        *v /= dc;
    }
    h
}

/// Attenuation measured at one swept-sine tone.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepPoint {
    pub frequency: f64,
    pub attenuation_db: f64,
}

/// Outcome of the swept-sine verification of a filter design.
#[derive(Debug, Clone, Serialize)]
pub struct FilterSelfTest {
    pub points: Vec<SweepPoint>,
    pub taps: usize,
    pub gate_attenuation_db: f64,
    pub min_band_attenuation_db: f64,
    pub min_upper_attenuation_db: f64,
    pub passband_max_deviation_db: f64,
    pub dc_deviation_db: f64,
    pub passes: bool,
}

/// Sweeps real sine traces through one stage of the filter and checks every
/// clause of the response contract.
///
/// Tones are placed on a grid of `step` that has an integer number of cycles
/// in the record, so the measured output/input RMS ratio is the exact stage
/// gain at that tone. The gate frequency and the rejection band edges must lie
/// on the grid.
pub fn self_test(
    spec: &FilterResponseSpec,
    dt: f64,
    sweep_start: f64,
    step: f64,
) -> Result<FilterSelfTest> {
    let filter = LowPassFilter::design(spec, dt)?;
    let n = (1.0 / (step * dt)).round() as usize;
    let step = 1.0 / (n as f64 * dt);
    let grid = TimeGrid::new(0.0, dt, n)?;
    let nyquist = 0.5 / dt;
    let upper = spec.upper_frequency.min(nyquist * 0.999);

    let first = (sweep_start / step).ceil() as usize;
    let last = (upper / step).floor() as usize;
    let measure = |f: f64| -> Result<f64> {
        let tone = SampledWaveform::from_fn(grid, |t| (2.0 * PI * f * t).sin())?;
        let out = filter.apply(&tone, 1)?;
        let ratio = (out.mean_square() / tone.mean_square()).sqrt();
        Ok(-20.0 * ratio.max(1e-300).log10())
    };

    let mut points = Vec::with_capacity(last.saturating_sub(first) + 1);
    for k in first..=last {
        let f = k as f64 * step;
        points.push(SweepPoint {
            frequency: f,
            attenuation_db: measure(f)?,
        });
    }

    let near = |a: f64, b: f64| (a - b).abs() < 0.5 * step;
    let in_band = |f: f64| (f - spec.gate_frequency).abs() <= spec.rejection_band_halfwidth + 0.5 * step;

    let gate_attenuation_db = points
        .iter()
        .find(|p| near(p.frequency, spec.gate_frequency))
        .map(|p| p.attenuation_db)
        .ok_or_else(|| Error::invalid("step", "gate frequency is not on the sweep grid"))?;
    let min_of = |pred: &dyn Fn(f64) -> bool| {
        points
            .iter()
            .filter(|p| pred(p.frequency))
            .map(|p| p.attenuation_db)
            .fold(f64::INFINITY, f64::min)
    };
    let min_band_attenuation_db = min_of(&in_band);
    let min_upper_attenuation_db = min_of(&|f| f >= spec.gate_frequency - 0.5 * step);
    let passband_max_deviation_db = points
        .iter()
        .filter(|p| p.frequency <= spec.passband_edge + 0.5 * step)
        .map(|p| p.attenuation_db.abs())
        .fold(0.0, f64::max);

    let dc = SampledWaveform::from_fn(grid, |_| 0.01)?;
    let dc_out = filter.apply(&dc, 1)?;
    let dc_deviation_db = 20.0 * (dc_out.samples()[0] / 0.01).abs().log10();

    let passes = gate_attenuation_db >= spec.rejection_at_gate_db
        && min_band_attenuation_db >= spec.rejection_band_floor_db
        && min_upper_attenuation_db >= spec.rejection_to_upper_db
        && passband_max_deviation_db <= spec.passband_ripple_max_db
        && dc_deviation_db.abs() <= spec.passband_ripple_max_db;

    Ok(FilterSelfTest {
        points,
        taps: filter.taps(),
        gate_attenuation_db,
        min_band_attenuation_db,
        min_upper_attenuation_db,
        passband_max_deviation_db,
        dc_deviation_db,
        passes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const DT: f64 = 25e-12;

    fn tone(f: f64, amp: f64, n: usize) -> SampledWaveform {
        let grid = TimeGrid::new(0.0, DT, n).unwrap();
        SampledWaveform::from_fn(grid, |t| amp * (2.0 * PI * f * t).sin()).unwrap()
    }

    fn rms(w: &SampledWaveform) -> f64 {
        w.mean_square().sqrt()
    }

    #[test]
    fn gate_tone_is_rejected_by_54_db() {
        // 8 ns record: ten gate cycles
        let w = tone(1.25e9, 1.0, 320);
        let out = apply_filter(&w, &FilterResponseSpec::default(), 1).unwrap();
        assert!(20.0 * (rms(&out) / rms(&w)).log10() <= -54.0);
    }

    #[test]
    fn three_ghz_tone_is_rejected_by_40_db() {
        let w = tone(3.0e9, 1.0, 320);
        let out = apply_filter(&w, &FilterResponseSpec::default(), 1).unwrap();
        assert!(20.0 * (rms(&out) / rms(&w)).log10() <= -40.0);
    }

    #[test]
    fn dc_offset_is_preserved() {
        let grid = TimeGrid::new(0.0, DT, 320).unwrap();
        let w = SampledWaveform::from_fn(grid, |_| 0.010).unwrap();
        let out = apply_filter(&w, &FilterResponseSpec::default(), 1).unwrap();
        for v in out.samples() {
            assert!((20.0 * (v / 0.010).log10()).abs() <= 1.0);
        }
    }

    #[test]
    fn rejects_undersampled_trace() {
        let grid = TimeGrid::new(0.0, 500e-12, 64).unwrap();
        let w = SampledWaveform::zeros(grid);
        assert!(apply_filter(&w, &FilterResponseSpec::default(), 1).is_err());
    }

    #[test]
    fn rejects_zero_stages() {
        let w = tone(1e8, 1.0, 400);
        assert!(apply_filter(&w, &FilterResponseSpec::default(), 0).is_err());
    }

    #[test]
    fn cascade_equals_repeated_single_stage() {
        let spec = FilterResponseSpec::default();
        let filter = LowPassFilter::design(&spec, DT).unwrap();
        let w = tone(1.25e9, 1.0, 640).add(&tone(2e8, 0.1, 640)).unwrap();
        let once_twice = filter.apply(&filter.apply(&w, 1).unwrap(), 1).unwrap();
        let two = filter.apply(&w, 2).unwrap();
        for (a, b) in once_twice.samples().iter().zip(two.samples()) {
            assert!((a - b).abs() < 1e-12);
        }
        let g = tone(1.25e9, 1.0, 640);
        let out = filter.apply(&g, 2).unwrap();
        assert!(20.0 * (rms(&out) / rms(&g)).log10() <= -108.0);
    }

    #[test]
    fn self_test_passes_for_default_contract() {
        let report = self_test(&FilterResponseSpec::default(), DT, 0.1e9, 10e6).unwrap();
        assert!(report.passes, "{report:?}");
        assert_eq!(report.points.first().unwrap().frequency, 0.1e9);
    }

    #[test]
    fn bessel_i0_reference_values() {
        // Abramowitz & Stegun table 9.8
        assert!((bessel_i0(0.0) - 1.0).abs() < 1e-15);
        assert!((bessel_i0(1.0) - 1.266_065_877_752_008_4).abs() < 1e-13);
        assert!((bessel_i0(5.0) - 27.239_871_823_604_45).abs() < 1e-10);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn filter_is_linear(xs in prop::collection::vec(-1.0f64..1.0, 200),
                            ys in prop::collection::vec(-1.0f64..1.0, 200),
                            a in -3.0f64..3.0, b in -3.0f64..3.0) {
            let filter = LowPassFilter::design(&FilterResponseSpec::default(), DT).unwrap();
            let w1 = SampledWaveform::new(xs, DT, 0.0).unwrap();
            let w2 = SampledWaveform::new(ys, DT, 0.0).unwrap();
            let combo = w1.scaled(a).add(&w2.scaled(b)).unwrap();
            let lhs = filter.apply(&combo, 1).unwrap();
            let rhs = filter.apply(&w1, 1).unwrap().scaled(a)
                .add(&filter.apply(&w2, 1).unwrap().scaled(b)).unwrap();
            let scale = rhs.samples().iter().map(|v| v.abs()).fold(0.0, f64::max).max(1e-12);
            for (l, r) in lhs.samples().iter().zip(rhs.samples()) {
                prop_assert!((l - r).abs() <= 1e-9 * scale);
            }
        }
    }
}
