//! Statistical device model: gate profile, efficiency versus bias, dark counts
//! versus temperature, timing jitter with a subsequent-gate tail, and
//! afterpulse traps.
//!
//! All model objects are immutable after construction; sampling routines take
//! the random state explicitly.

use std::f64::consts::LN_2;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

const FWHM_PER_SIGMA: f64 = 2.354_820_045_030_949_3; // 2·sqrt(2 ln 2)

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GateConfig {
    pub gate_frequency: f64,
    pub gate_fwhm: f64,
    pub delay_step: f64,
    pub peak_efficiency: f64,
}

impl Default for GateConfig {
    fn default() -> Self {
        Self {
            gate_frequency: 1.25e9,
            gate_fwhm: 130e-12,
            delay_step: 10e-12,
            peak_efficiency: 0.10,
        }
    }
}

impl GateConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gate_frequency > 0.0 && self.gate_frequency.is_finite()) {
            return Err(Error::invalid("gate_frequency", "must be positive"));
        }
        if !(self.gate_fwhm > 0.0 && self.gate_fwhm < self.period()) {
            return Err(Error::invalid(
                "gate_fwhm",
                format!("must lie in (0, {:e}) s", self.period()),
            ));
        }
        if !(self.delay_step > 0.0) {
            return Err(Error::invalid("delay_step", "must be positive"));
        }
        if !(0.0..=1.0).contains(&self.peak_efficiency) {
            return Err(Error::invalid("peak_efficiency", "must lie in [0, 1]"));
        }
        Ok(())
    }

    pub fn period(&self) -> f64 {
        1.0 / self.gate_frequency
    }

    pub fn sigma(&self) -> f64 {
        self.gate_fwhm / FWHM_PER_SIGMA
    }

    /// Unit-peak Gaussian sensitivity, periodic in the gate period.
    pub fn unit_profile(&self, delay: f64) -> f64 {
        let t = self.period();
        let wrapped = delay - t * (delay / t).round();
        let s = self.sigma();
        (-0.5 * (wrapped / s).powi(2)).exp()
    }

    /// Rounds a requested delay to the programmable step.
    pub fn quantize_delay(&self, delay: f64) -> f64 {
        (delay / self.delay_step).round() * self.delay_step
    }
}

/// Detection efficiency at `delay` between optical pulse and gate centre.
pub fn gate_profile(cfg: &GateConfig, delay: f64) -> f64 {
    cfg.peak_efficiency * cfg.unit_profile(delay)
}

/// Linear efficiency law anchored at one calibrated operating point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BiasEfficiencyLaw {
    pub anchor_bias: f64,
    pub anchor_efficiency: f64,
    /// Efficiency gained per volt of bias.
    pub slope: f64,
}

impl Default for BiasEfficiencyLaw {
    fn default() -> Self {
        Self {
            anchor_bias: 53.5,
            anchor_efficiency: 0.10,
            slope: 0.05,
        }
    }
}

impl BiasEfficiencyLaw {
    pub fn validate(&self) -> Result<()> {
        if !(self.slope > 0.0 && self.slope.is_finite()) {
            return Err(Error::invalid("slope", "must be positive"));
        }
        if !(0.0..=1.0).contains(&self.anchor_efficiency) {
            return Err(Error::invalid("anchor_efficiency", "must lie in [0, 1]"));
        }
        if !self.anchor_bias.is_finite() {
            return Err(Error::invalid("anchor_bias", "must be finite"));
        }
        Ok(())
    }

    /// Bias at which the linear law reaches zero efficiency.
    pub fn breakdown_bias(&self) -> f64 {
        self.anchor_bias - self.anchor_efficiency / self.slope
    }
}

pub fn efficiency_at_bias(law: &BiasEfficiencyLaw, bias: f64) -> f64 {
    if bias <= law.breakdown_bias() {
        return 0.0;
    }
    (law.anchor_efficiency + law.slope * (bias - law.anchor_bias)).clamp(0.0, 1.0)
}

/// Dark-count probability per gate versus temperature, interpolated
/// log-linearly between anchor points.
///
/// The default table holds the measured headline points (6·10⁻⁷ at −43 °C,
/// 7·10⁻⁷ at the −35 °C minimum, 1.5·10⁻⁵ at +20 °C). The points between −35
/// and +20 °C are read off the published curve and are not normative. Below
/// −43 °C the curve is held flat.
#[derive(Debug, Clone, PartialEq)]
pub struct TemperatureDarkLaw {
    anchors: Vec<(f64, f64)>,
}

pub const DARK_LAW_MIN_SPAN: (f64, f64) = (-45.0, 20.0);

impl Default for TemperatureDarkLaw {
    fn default() -> Self {
        Self {
            anchors: vec![
                (-45.0, 6.0e-7),
                (-43.0, 6.0e-7),
                (-35.0, 7.0e-7),
                (-25.0, 1.3e-6),
                (-15.0, 2.4e-6),
                (-5.0, 4.3e-6),
                (5.0, 7.5e-6),
                (20.0, 1.5e-5),
            ],
        }
    }
}

impl TemperatureDarkLaw {
    pub fn new(anchors: Vec<(f64, f64)>) -> Result<Self> {
        let law = Self { anchors };
        law.validate()?;
        Ok(law)
    }

    /// Constant probability over the required span; handy for tests.
    pub fn flat(prob: f64) -> Result<Self> {
        Self::new(vec![(DARK_LAW_MIN_SPAN.0, prob), (DARK_LAW_MIN_SPAN.1, prob)])
    }

    pub fn anchors(&self) -> &[(f64, f64)] {
        &self.anchors
    }

    pub fn validate(&self) -> Result<()> {
        if self.anchors.len() < 2 {
            return Err(Error::invalid("dark_table", "needs at least two anchor points"));
        }
        for (t, p) in &self.anchors {
            if !t.is_finite() || !(*p > 0.0 && *p < 1.0) {
                return Err(Error::invalid(
                    "dark_table",
                    format!("entry ({t}, {p}) needs a finite temperature and a probability in (0, 1)"),
                ));
            }
        }
        if self.anchors.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(Error::invalid("dark_table", "temperatures must be strictly increasing"));
        }
        let (lo, hi) = self.span();
        if lo > DARK_LAW_MIN_SPAN.0 || hi < DARK_LAW_MIN_SPAN.1 {
            return Err(Error::invalid(
                "dark_table",
                format!(
                    "must cover [{}, {}] °C, covers [{lo}, {hi}]",
                    DARK_LAW_MIN_SPAN.0, DARK_LAW_MIN_SPAN.1
                ),
            ));
        }
        Ok(())
    }

    pub fn span(&self) -> (f64, f64) {
        (self.anchors[0].0, self.anchors[self.anchors.len() - 1].0)
    }
}

pub fn dark_prob(law: &TemperatureDarkLaw, temperature: f64) -> Result<f64> {
    let (lo, hi) = law.span();
    if !(temperature >= lo && temperature <= hi) {
        return Err(Error::OutOfRange {
            what: "temperature (°C)",
            value: temperature,
            min: lo,
            max: hi,
        });
    }
    let a = law.anchors();
    let i = a.partition_point(|(t, _)| *t <= temperature).clamp(1, a.len() - 1);
    let (t0, p0) = a[i - 1];
    let (t1, p1) = a[i];
    let x = (temperature - t0) / (t1 - t0);
    Ok((p0.ln() + x * (p1.ln() - p0.ln())).exp())
}

/// Gaussian timing core plus a tail of detections displaced into one of the
/// next few gates. The tail gate is chosen uniformly; that choice is not
/// constrained by measurement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JitterModel {
    pub sigma: f64,
    pub tail_fraction: f64,
    pub tail_span_gates: u32,
}

impl Default for JitterModel {
    fn default() -> Self {
        Self {
            sigma: 70e-12 / FWHM_PER_SIGMA,
            tail_fraction: 0.024,
            tail_span_gates: 3,
        }
    }
}

impl JitterModel {
    pub fn from_fwhm(fwhm: f64, tail_fraction: f64, tail_span_gates: u32) -> Self {
        Self {
            sigma: fwhm / FWHM_PER_SIGMA,
            tail_fraction,
            tail_span_gates,
        }
    }

    pub fn fwhm(&self) -> f64 {
        self.sigma * FWHM_PER_SIGMA
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::invalid("jitter sigma", "must be positive"));
        }
        if !(0.0..1.0).contains(&self.tail_fraction) {
            return Err(Error::invalid("tail_fraction", "must lie in [0, 1)"));
        }
        if self.tail_span_gates < 1 {
            return Err(Error::invalid("tail_span_gates", "must be at least 1"));
        }
        Ok(())
    }
}

/// Draws a zero-mean Gaussian offset truncated to `|x| < half_width`.
pub(crate) fn truncated_gaussian<R: Rng + ?Sized>(rng: &mut R, sigma: f64, half_width: f64) -> f64 {
    let normal = Normal::new(0.0, sigma).expect("sigma validated positive");
    loop {
        let x = normal.sample(rng);
        if x.abs() < half_width {
            return x;
        }
    }
}

/// Detection time for an avalanche triggered in `gate_index`.
///
/// Returns the absolute time (gate `g` is centred on `g · gate_period`) and
/// whether the detection was displaced into a subsequent gate.
pub fn sample_detection_time<R: Rng + ?Sized>(
    j: &JitterModel,
    gate_index: u64,
    gate_period: f64,
    rng: &mut R,
) -> (f64, bool) {
    let in_tail = j.tail_fraction > 0.0 && rng.random::<f64>() < j.tail_fraction;
    let landing = if in_tail {
        gate_index + rng.random_range(1..=j.tail_span_gates as u64)
    } else {
        gate_index
    };
    let offset = truncated_gaussian(rng, j.sigma, 0.5 * gate_period);
    (landing as f64 * gate_period + offset, in_tail)
}

/// Expected-value trap model for afterpulsing. The default parameters are
/// illustrative, not fitted to the device.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AfterpulseModel {
    pub enabled: bool,
    pub trap_fill_per_detection: f64,
    pub release_lifetime: f64,
    pub trigger_prob_per_gate: f64,
}

impl Default for AfterpulseModel {
    fn default() -> Self {
        Self {
            enabled: false,
            trap_fill_per_detection: 0.1,
            release_lifetime: 1e-6,
            trigger_prob_per_gate: 1e-3,
        }
    }
}

impl AfterpulseModel {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("trap_fill_per_detection", self.trap_fill_per_detection),
            ("trigger_prob_per_gate", self.trigger_prob_per_gate),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::invalid(name, "must be non-negative"));
            }
        }
        if !(self.release_lifetime > 0.0 && self.release_lifetime.is_finite()) {
            return Err(Error::invalid("release_lifetime", "must be positive"));
        }
        if self.trigger_prob_per_gate > 1.0 {
            return Err(Error::invalid("trigger_prob_per_gate", "must not exceed 1"));
        }
        Ok(())
    }

    /// Mean number of afterpulses one avalanche seeds when the gate period is
    /// `gate_period`. Values at or above 1 make the cascade run away.
    pub fn branching_ratio(&self, gate_period: f64) -> f64 {
        let decay = (-gate_period / self.release_lifetime).exp();
        self.trap_fill_per_detection * self.trigger_prob_per_gate * decay / (1.0 - decay)
    }
}

/// Afterpulse probability per gate, `dt_since_fill` after `trap_population`
/// traps were filled.
pub fn afterpulse_prob(m: &AfterpulseModel, trap_population: f64, dt_since_fill: f64) -> f64 {
    if trap_population <= 0.0 {
        return 0.0;
    }
    (m.trigger_prob_per_gate * trap_population * (-dt_since_fill / m.release_lifetime).exp())
        .clamp(0.0, 1.0)
}

/// Complete device description used by the Monte Carlo engine and the link
/// budget.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectorParams {
    pub gate: GateConfig,
    pub bias_law: BiasEfficiencyLaw,
    /// Operating DC bias in volts.
    pub bias: f64,
    /// Operating temperature in °C.
    pub temperature: f64,
    pub dark_law: TemperatureDarkLaw,
    pub jitter: JitterModel,
    pub afterpulse: AfterpulseModel,
}

impl Default for DetectorParams {
    fn default() -> Self {
        Self {
            gate: GateConfig::default(),
            bias_law: BiasEfficiencyLaw::default(),
            bias: 53.5,
            temperature: -43.0,
            dark_law: TemperatureDarkLaw::default(),
            jitter: JitterModel::default(),
            afterpulse: AfterpulseModel::default(),
        }
    }
}

impl DetectorParams {
    /// Validates every component and collects all failures.
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        let mut push = |prefix: &str, r: Result<()>| {
            if let Err(e) = r {
                errs.push(format!("{prefix}: {e}"));
            }
        };
        push("gate", self.gate.validate());
        push("bias_law", self.bias_law.validate());
        push("dark_law", self.dark_law.validate());
        push("jitter", self.jitter.validate());
        push("afterpulse", self.afterpulse.validate());
        if !self.bias.is_finite() {
            errs.push("bias: must be finite".into());
        }
        if !self.temperature.is_finite() {
            errs.push("temperature: must be finite".into());
        }
        if self.afterpulse.enabled
            && self.afterpulse.validate().is_ok()
            && self.gate.validate().is_ok()
            && self.afterpulse.branching_ratio(self.gate.period()) >= 1.0
        {
            errs.push("afterpulse: trap parameters give a runaway cascade (branching ratio >= 1)".into());
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(errs))
        }
    }

    pub fn gate_period(&self) -> f64 {
        self.gate.period()
    }

    /// Peak efficiency at the operating bias.
    pub fn peak_efficiency(&self) -> f64 {
        efficiency_at_bias(&self.bias_law, self.bias)
    }

    /// Efficiency for light arriving `delay` away from the gate centre.
    pub fn efficiency_at_delay(&self, delay: f64) -> f64 {
        self.peak_efficiency() * self.gate.unit_profile(delay)
    }

    pub fn dark_probability(&self) -> Result<f64> {
        dark_prob(&self.dark_law, self.temperature)
    }
}

/// Jitter standard deviation for a Gaussian of full width `fwhm`.
pub fn sigma_from_fwhm(fwhm: f64) -> f64 {
    fwhm / (2.0 * (2.0 * LN_2).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn efficiency_law_examples() {
        let law = BiasEfficiencyLaw::default();
        assert!((efficiency_at_bias(&law, 53.5) - 0.10).abs() < 1e-12);
        assert_eq!(efficiency_at_bias(&law, law.breakdown_bias()), 0.0);
        assert!((law.breakdown_bias() - 51.5).abs() < 1e-12);
        assert!((efficiency_at_bias(&law, 54.5) - 0.15).abs() < 1e-12);
        assert_eq!(efficiency_at_bias(&law, 10.0), 0.0);
        assert_eq!(efficiency_at_bias(&law, 1000.0), 1.0);
    }

    #[test]
    fn gate_profile_examples() {
        let g = GateConfig::default();
        assert!((gate_profile(&g, 0.0) - 0.10).abs() < 1e-15);
        assert!((gate_profile(&g, 65e-12) / 0.05 - 1.0).abs() < 0.01);
        assert!((gate_profile(&g, -65e-12) / 0.05 - 1.0).abs() < 0.01);
        assert!((gate_profile(&g, g.period()) - 0.10).abs() < 1e-12);
        assert!((g.quantize_delay(123.4e-12) - 120e-12).abs() < 1e-24);
    }

    #[test]
    fn gate_duty_factor_by_quadrature() {
        // composite Simpson over one period, independent of the closed form
        let g = GateConfig {
            peak_efficiency: 1.0,
            ..Default::default()
        };
        let t = g.period();
        let n = 20_000;
        let h = t / n as f64;
        let f = |i: usize| gate_profile(&g, -0.5 * t + i as f64 * h);
        let mut s = f(0) + f(n);
        for i in 1..n {
            s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(i);
        }
        let duty = s * h / 3.0 / t;
        assert!((duty / 0.173 - 1.0).abs() < 0.01, "duty {duty}");
    }

    #[test]
    fn dark_law_headline_points() {
        let law = TemperatureDarkLaw::default();
        assert!((dark_prob(&law, -35.0).unwrap() - 7e-7).abs() < 1e-18);
        assert!((dark_prob(&law, 20.0).unwrap() - 1.5e-5).abs() < 1e-17);
        assert!((dark_prob(&law, -43.0).unwrap() - 6e-7).abs() < 1e-18);
        assert!(dark_prob(&law, 25.0).unwrap_err().is_model_range());
        assert!(dark_prob(&law, -50.0).is_err());
    }

    #[test]
    fn dark_law_interpolates_log_linearly() {
        let law = TemperatureDarkLaw::new(vec![(-45.0, 1e-6), (20.0, 1e-4)]).unwrap();
        let mid = dark_prob(&law, -12.5).unwrap();
        assert!((mid - 1e-5).abs() < 1e-17);
    }

    #[test]
    fn dark_law_rejects_bad_tables() {
        assert!(TemperatureDarkLaw::new(vec![(-45.0, 1e-6)]).is_err());
        assert!(TemperatureDarkLaw::new(vec![(-45.0, 1e-6), (-50.0, 1e-6), (20.0, 1e-5)]).is_err());
        assert!(TemperatureDarkLaw::new(vec![(-45.0, 0.0), (20.0, 1e-5)]).is_err());
        assert!(TemperatureDarkLaw::new(vec![(-40.0, 1e-6), (20.0, 1e-5)]).is_err());
    }

    #[test]
    fn dark_law_monotone_in_thermal_regime() {
        let law = TemperatureDarkLaw::default();
        let mut prev = 0.0;
        for i in 0..=550 {
            let t = -35.0 + 0.1 * i as f64;
            let p = dark_prob(&law, t).unwrap();
            assert!(p >= prev);
            prev = p;
        }
    }

    #[test]
    fn detection_time_without_jitter_or_tail_is_gate_centre() {
        let j = JitterModel {
            sigma: 1e-30,
            tail_fraction: 0.0,
            tail_span_gates: 3,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for g in [0u64, 7, 1_000_000] {
            let (t, tail) = sample_detection_time(&j, g, 800e-12, &mut rng);
            assert!(!tail);
            assert!((t - g as f64 * 800e-12).abs() < 1e-25);
        }
    }

    #[test]
    fn tail_count_matches_binomial() {
        let j = JitterModel::default();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 1_000_000u64;
        let mut tails = 0u64;
        let mut per_gate = [0u64; 4];
        for _ in 0..n {
            let (t, tail) = sample_detection_time(&j, 10, 800e-12, &mut rng);
            if tail {
                tails += 1;
                let k = (t / 800e-12).round() as usize - 10;
                per_gate[k] += 1;
            }
        }
        let sd = (n as f64 * 0.024 * 0.976).sqrt();
        assert!((tails as f64 - 24_000.0).abs() < 3.0 * sd, "{tails}");
        assert_eq!(per_gate[0], 0);
        assert!(per_gate[1..].iter().all(|c| *c > 7_000));
    }

    #[test]
    fn core_jitter_fwhm_is_70_ps() {
        let j = JitterModel {
            tail_fraction: 0.0,
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let mut xs: Vec<f64> = (0..1_000_000)
            .map(|_| sample_detection_time(&j, 0, 800e-12, &mut rng).0)
            .collect();
        xs.sort_by(f64::total_cmp);
        // Gaussian FWHM from the quartile spread: IQR = 1.34898·σ
        let iqr = xs[750_000] - xs[250_000];
        let fwhm = iqr / 1.348_979_500_392_163 * FWHM_PER_SIGMA;
        assert!((fwhm - 70e-12).abs() < 2e-12, "{fwhm}");
    }

    #[test]
    fn detection_time_is_bit_reproducible() {
        let j = JitterModel::default();
        let a: Vec<_> = {
            let mut r = ChaCha8Rng::seed_from_u64(99);
            (0..1000).map(|g| sample_detection_time(&j, g, 800e-12, &mut r)).collect()
        };
        let b: Vec<_> = {
            let mut r = ChaCha8Rng::seed_from_u64(99);
            (0..1000).map(|g| sample_detection_time(&j, g, 800e-12, &mut r)).collect()
        };
        assert_eq!(a, b);
    }

    #[test]
    fn afterpulse_examples() {
        let m = AfterpulseModel {
            enabled: true,
            trap_fill_per_detection: 1.0,
            release_lifetime: 1e-6,
            trigger_prob_per_gate: 1e-3,
        };
        assert_eq!(afterpulse_prob(&m, 0.0, 1e-9), 0.0);
        assert!(afterpulse_prob(&m, 1.0, 1.0) < 1e-300);
        let expect = 1e-3 * (-1.0f64).exp();
        assert!((afterpulse_prob(&m, 1.0, 1e-6) - expect).abs() < 1e-15);
        assert!((afterpulse_prob(&m, 1.0, 1e-6) - 3.68e-4).abs() < 1e-6);
    }

    #[test]
    fn default_afterpulse_cascade_is_subcritical() {
        let m = AfterpulseModel::default();
        let b = m.branching_ratio(800e-12);
        assert!((b - 0.1 * 1e-3 * 1250.0).abs() < 1e-3, "{b}");
        let runaway = AfterpulseModel {
            enabled: true,
            trigger_prob_per_gate: 1e-2,
            ..m
        };
        let params = DetectorParams {
            afterpulse: runaway,
            ..Default::default()
        };
        assert!(params.validate().is_err());
    }

    #[test]
    fn detector_defaults_validate() {
        let d = DetectorParams::default();
        d.validate().unwrap();
        assert!((d.peak_efficiency() - 0.1).abs() < 1e-12);
        assert!((d.dark_probability().unwrap() - 6e-7).abs() < 1e-18);
        assert!((sigma_from_fwhm(70e-12) - d.jitter.sigma).abs() < 1e-20);
    }

    proptest! {
        #[test]
        fn efficiency_monotone_and_clamped(a in 0.0f64..100.0, b in 0.0f64..100.0) {
            let law = BiasEfficiencyLaw::default();
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            let (el, eh) = (efficiency_at_bias(&law, lo), efficiency_at_bias(&law, hi));
            prop_assert!(el <= eh);
            prop_assert!((0.0..=1.0).contains(&el) && (0.0..=1.0).contains(&eh));
        }

        #[test]
        fn afterpulse_decreasing_and_linear(pop in 0.01f64..10.0, t1 in 0.0f64..5e-6, dt in 1e-9f64..5e-6) {
            let m = AfterpulseModel::default();
            let a = afterpulse_prob(&m, pop, t1);
            let b = afterpulse_prob(&m, pop, t1 + dt);
            prop_assert!(b < a);
            let doubled = afterpulse_prob(&m, 2.0 * pop, t1);
            prop_assert!((doubled - 2.0 * a).abs() <= 1e-15 * doubled.max(1e-300));
        }
    }
}
