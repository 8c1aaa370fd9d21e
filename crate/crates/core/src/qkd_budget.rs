//! Link budget for coherent-one-way time-bin QKD: detection rate with dead
//! time, QBER decomposition, rate after error correction, and sweeps.
//!
//! Each bit occupies two consecutive gates (time bins); Alice's pulse sits in
//! the bin named by the bit value and a fraction `ε/(1+ε)` of its light leaks
//! into the other bin through finite modulator extinction. Only detections
//! inside the two bin windows are counted. Decoy sequences and the monitoring
//! line are not modelled.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detector_model::{DetectorParams, JitterModel};
use crate::error::{Error, Result};
use crate::mc_engine::{self, streams, HoldoffAnchor, Origin, RunConfig, SourceConfig, SourceKind};

/// Attenuation of standard telecom fibre at 1550 nm.
pub const FIBER_DB_PER_KM: f64 = 0.2;

pub fn fiber_loss_db(length_km: f64, db_per_km: f64) -> f64 {
    length_km * db_per_km
}

pub fn fiber_length_km(loss_db: f64, db_per_km: f64) -> f64 {
    loss_db / db_per_km
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DeadTimeModel {
    /// `R = R0 / (1 + R0·τ)`: discarded detections do not extend the window.
    #[default]
    NonParalyzable,
    /// `R = R0·exp(−R0·τ)`: every detection restarts the window.
    Paralyzable,
}

impl DeadTimeModel {
    pub fn apply(self, r0: f64, dead_time: f64) -> f64 {
        match self {
            DeadTimeModel::NonParalyzable => r0 / (1.0 + r0 * dead_time),
            DeadTimeModel::Paralyzable => r0 * (-r0 * dead_time).exp(),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            DeadTimeModel::NonParalyzable => "non-paralyzable",
            DeadTimeModel::Paralyzable => "paralyzable",
        }
    }

    /// Hold-off anchoring that realises this model in the Monte Carlo engine.
    pub fn holdoff_anchor(self) -> HoldoffAnchor {
        match self {
            DeadTimeModel::NonParalyzable => HoldoffAnchor::Accepted,
            DeadTimeModel::Paralyzable => HoldoffAnchor::AnyEvent,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QkdLinkConfig {
    pub bit_rate: f64,
    pub timebin_width: f64,
    /// Mean photons per bit leaving the transmitter.
    pub mu_source: f64,
    pub fiber_loss_db: f64,
    pub extinction_db: f64,
    pub detector: DetectorParams,
    pub holdoff_time: f64,
    pub ec_efficiency: f64,
    pub dead_time_model: DeadTimeModel,
    /// Fraction of the raw rate charged for privacy amplification in the
    /// secret-rate estimate.
    pub pa_fraction: f64,
}

impl Default for QkdLinkConfig {
    fn default() -> Self {
        Self {
            bit_rate: 625e6,
            timebin_width: 400e-12,
            mu_source: 0.5,
            fiber_loss_db: 0.0,
            extinction_db: 25.0,
            detector: DetectorParams::default(),
            holdoff_time: 8e-9,
            ec_efficiency: 1.2,
            dead_time_model: DeadTimeModel::NonParalyzable,
            pa_fraction: 0.5,
        }
    }
}

impl QkdLinkConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.bit_rate > 0.0 && self.bit_rate.is_finite()) {
            return Err(Error::invalid("bit_rate", "must be positive"));
        }
        let gate_hz = self.detector.gate.gate_frequency;
        if (gate_hz - 2.0 * self.bit_rate).abs() > 1e-9 * gate_hz {
            return Err(Error::invalid(
                "bit_rate",
                format!("two time bins per bit need a gate frequency of twice the bit rate, got {gate_hz} Hz"),
            ));
        }
        if !(self.timebin_width > 0.0 && self.timebin_width <= 0.5 / self.bit_rate) {
            return Err(Error::invalid("timebin_width", "must lie in (0, half the bit period]"));
        }
        if !(self.mu_source >= 0.0 && self.mu_source.is_finite()) {
            return Err(Error::invalid("mu_source", "must be non-negative"));
        }
        if !(self.fiber_loss_db >= 0.0) {
            return Err(Error::invalid("fiber_loss_db", "must be non-negative"));
        }
        if !(self.extinction_db >= 0.0) {
            return Err(Error::invalid("extinction_db", "must be non-negative"));
        }
        if !(self.holdoff_time >= 0.0 && self.holdoff_time.is_finite()) {
            return Err(Error::invalid("holdoff_time", "must be non-negative"));
        }
        if !(self.ec_efficiency >= 1.0) {
            return Err(Error::invalid("ec_efficiency", "must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.pa_fraction) {
            return Err(Error::invalid("pa_fraction", "must lie in [0, 1]"));
        }
        self.detector.validate()
    }

    /// Modulator leakage into the wrong bin, `ε/(1+ε)`.
    pub fn extinction_fraction(&self) -> f64 {
        let eps = 10f64.powf(-self.extinction_db / 10.0);
        eps / (1.0 + eps)
    }

    pub fn holdoff_gates(&self) -> u64 {
        (self.holdoff_time * self.detector.gate.gate_frequency).round() as u64
    }
}

/// One row of a link budget table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QkdReport {
    pub axis_value: f64,
    pub mu_detector: f64,
    #[serde(rename = "raw_rate_hz")]
    pub raw_rate: f64,
    pub qber: f64,
    pub qber_dark: f64,
    pub qber_ext: f64,
    pub qber_tail: f64,
    #[serde(rename = "rate_after_ec_hz")]
    pub rate_after_ec: f64,
    #[serde(rename = "secret_rate_hz")]
    pub secret_rate: f64,
}

pub const QKD_CSV_HEADER: &str =
    "axis_value,mu_detector,raw_rate_hz,qber,qber_dark,qber_ext,qber_tail,rate_after_ec_hz,secret_rate_hz";

impl QkdReport {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.axis_value,
            self.mu_detector,
            self.raw_rate,
            self.qber,
            self.qber_dark,
            self.qber_ext,
            self.qber_tail,
            self.rate_after_ec,
            self.secret_rate
        )
    }
}

/// QBER split into contributions sharing the accepted-detection denominator;
/// `total` is their sum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QberBreakdown {
    pub total: f64,
    pub dark: f64,
    pub extinction: f64,
    pub tail: f64,
}

pub fn mu_at_detector(cfg: &QkdLinkConfig) -> f64 {
    cfg.mu_source * 10f64.powf(-cfg.fiber_loss_db / 10.0)
}

/// Probability that light from one bit clicks the detector.
fn signal_click_prob(cfg: &QkdLinkConfig) -> f64 {
    -(-cfg.detector.peak_efficiency() * mu_at_detector(cfg)).exp_m1()
}

/// Dark click probability over the two gates of one bit.
fn dark_click_prob(cfg: &QkdLinkConfig) -> Result<f64> {
    let p = cfg.detector.dark_probability()?;
    Ok(1.0 - (1.0 - p) * (1.0 - p))
}

/// Dead-time-corrected detection rate.
pub fn raw_detection_rate(cfg: &QkdLinkConfig) -> Result<f64> {
    let r0 = cfg.bit_rate * (signal_click_prob(cfg) + dark_click_prob(cfg)?);
    Ok(cfg.dead_time_model.apply(r0, cfg.holdoff_time))
}

/// Probability that a tail detection lands in the wrong bin of the bit it
/// falls into, for light originally in the correct bin with probability
/// `1 − leak`.
///
/// A detection displaced by `k` gates stays within its own bit only when it
/// started in bin 0 and `k = 1`; it then lands in bin 1, which is wrong unless
/// the click came from leaked light. Otherwise it lands in an unrelated bit
/// and is wrong half the time.
pub fn tail_error_probability(jitter: &JitterModel, leak: f64) -> f64 {
    let span = jitter.tail_span_gates.max(1);
    let mut total = 0.0;
    for bin in 0..2u32 {
        for k in 1..=span {
            total += if bin == 0 && k == 1 { 1.0 - leak } else { 0.5 };
        }
    }
    total / (2 * span) as f64
}

pub fn qber(cfg: &QkdLinkConfig) -> Result<QberBreakdown> {
    let ps = signal_click_prob(cfg);
    let pd = dark_click_prob(cfg)?;
    let denom = ps + pd;
    if denom <= 0.0 {
        return Ok(QberBreakdown {
            total: 0.0,
            dark: 0.0,
            extinction: 0.0,
            tail: 0.0,
        });
    }
    let leak = cfg.extinction_fraction();
    let t = cfg.detector.jitter.tail_fraction;
    let dark = 0.5 * pd / denom;
    let extinction = ps * (1.0 - t) * leak / denom;
    let tail = ps * t * tail_error_probability(&cfg.detector.jitter, leak) / denom;
    Ok(QberBreakdown {
        total: dark + extinction + tail,
        dark,
        extinction,
        tail,
    })
}

pub fn binary_entropy(q: f64) -> f64 {
    if q <= 0.0 || q >= 1.0 {
        return 0.0;
    }
    -q * q.log2() - (1.0 - q) * (1.0 - q).log2()
}

/// Sifted rate left after error correction leaking `f·h₂(q)` per bit.
pub fn rate_after_ec(raw_rate: f64, qber: f64, f: f64) -> Result<f64> {
    if !(0.0..=0.5).contains(&qber) {
        return Err(Error::invalid("qber", format!("{qber} outside [0, 0.5]")));
    }
    if !(f >= 1.0) {
        return Err(Error::invalid("ec_efficiency", "must be at least 1"));
    }
    Ok((raw_rate * (1.0 - f * binary_entropy(qber))).max(0.0))
}

/// Estimate only: the post-EC rate minus a fixed privacy-amplification charge
/// of `pa_fraction` of the raw rate. No security bound is implied.
pub fn secret_rate_estimate(cfg: &QkdLinkConfig, raw_rate: f64, rate_after_ec: f64) -> f64 {
    (rate_after_ec - cfg.pa_fraction * raw_rate).max(0.0)
}

pub const SECRET_RATE_LABEL: &str =
    "estimate: post-error-correction rate minus a fixed privacy-amplification fraction of the raw rate; not a security bound";

fn finish_report(cfg: &QkdLinkConfig, axis_value: f64, raw_rate: f64, q: QberBreakdown) -> Result<QkdReport> {
    let after_ec = rate_after_ec(raw_rate, q.total.min(0.5), cfg.ec_efficiency)?;
    Ok(QkdReport {
        axis_value,
        mu_detector: mu_at_detector(cfg),
        raw_rate,
        qber: q.total,
        qber_dark: q.dark,
        qber_ext: q.extinction,
        qber_tail: q.tail,
        rate_after_ec: after_ec,
        secret_rate: secret_rate_estimate(cfg, raw_rate, after_ec),
    })
}

/// Analytic report for one operating point.
pub fn evaluate(cfg: &QkdLinkConfig, axis_value: f64) -> Result<QkdReport> {
    cfg.validate()?;
    let raw = raw_detection_rate(cfg)?;
    finish_report(cfg, axis_value, raw, qber(cfg)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    FiberLossDb,
    Temperature,
    MuSource,
    Bias,
}

impl SweepAxis {
    pub fn apply(self, cfg: &QkdLinkConfig, value: f64) -> QkdLinkConfig {
        let mut c = cfg.clone();
        match self {
            SweepAxis::FiberLossDb => c.fiber_loss_db = value,
            SweepAxis::Temperature => c.detector.temperature = value,
            SweepAxis::MuSource => c.mu_source = value,
            SweepAxis::Bias => c.detector.bias = value,
        }
        c
    }
}

/// Analytic report at every grid point.
pub fn sweep(cfg: &QkdLinkConfig, axis: SweepAxis, grid: &[f64]) -> Result<Vec<QkdReport>> {
    if grid.is_empty() {
        return Err(Error::invalid("grid", "sweep grid is empty"));
    }
    grid.par_iter()
        .map(|&v| evaluate(&axis.apply(cfg, v), v))
        .collect()
}

/// Tallies of accepted in-window detections from a time-bin Monte Carlo run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct TimeBinCounts {
    pub n_bits: u64,
    pub accepted_in_window: u64,
    pub accepted_outside_window: u64,
    pub errors_dark: u64,
    pub errors_ext: u64,
    pub errors_tail: u64,
}

impl TimeBinCounts {
    pub fn errors(&self) -> u64 {
        self.errors_dark + self.errors_ext + self.errors_tail
    }

    pub fn qber(&self) -> QberBreakdown {
        let n = self.accepted_in_window.max(1) as f64;
        let dark = self.errors_dark as f64 / n;
        let extinction = self.errors_ext as f64 / n;
        let tail = self.errors_tail as f64 / n;
        QberBreakdown {
            total: dark + extinction + tail,
            dark,
            extinction,
            tail,
        }
    }
}

/// Monte Carlo configuration equivalent to the link at its current settings.
pub fn link_run_config(cfg: &QkdLinkConfig, n_bits: u64, master_seed: u64) -> RunConfig {
    RunConfig {
        n_gates: 2 * n_bits,
        master_seed,
        holdoff_gates: cfg.holdoff_gates(),
        holdoff_anchor: cfg.dead_time_model.holdoff_anchor(),
        detector: cfg.detector.clone(),
        source: SourceConfig {
            kind: SourceKind::CowPpm,
            mean_photons: mu_at_detector(cfg),
            extinction_db: cfg.extinction_db,
            trigger_rate: cfg.bit_rate,
            ..SourceConfig::default()
        },
    }
}

/// Runs the time-bin Monte Carlo and classifies accepted detections. A
/// detection belongs to the gate nearest its time and counts only within
/// `±timebin_width/2` of that gate's centre. Wrong-bin photon detections are
/// extinction errors, tail detections are tail errors, and dark and
/// afterpulse detections are dark errors.
pub fn simulate_timebin(cfg: &QkdLinkConfig, n_bits: u64, master_seed: u64) -> Result<TimeBinCounts> {
    cfg.validate()?;
    let run = link_run_config(cfg, n_bits, master_seed);
    let out = mc_engine::run_simulation(&run)?;
    let period = cfg.detector.gate_period();
    let half_window = 0.5 * cfg.timebin_width;
    let mut counts = TimeBinCounts {
        n_bits,
        ..Default::default()
    };
    for r in out.records.iter().filter(|r| r.accepted) {
        let slot = (r.time / period).round();
        if slot < 0.0 || (r.time - slot * period).abs() > half_window {
            counts.accepted_outside_window += 1;
            continue;
        }
        let gate = slot as u64;
        counts.accepted_in_window += 1;
        let bit = mc_engine::timebin_bit(master_seed, gate / 2) as u64;
        if gate % 2 != bit {
            match r.origin {
                Origin::Photon => counts.errors_ext += 1,
                Origin::Tail => counts.errors_tail += 1,
                Origin::Dark | Origin::Afterpulse => counts.errors_dark += 1,
            }
        }
    }
    Ok(counts)
}

/// Report built from a Monte Carlo run instead of the analytic model.
pub fn evaluate_mc(cfg: &QkdLinkConfig, n_bits: u64, master_seed: u64, axis_value: f64) -> Result<QkdReport> {
    let counts = simulate_timebin(cfg, n_bits, master_seed)?;
    let duration = n_bits as f64 / cfg.bit_rate;
    finish_report(cfg, axis_value, counts.accepted_in_window as f64 / duration, counts.qber())
}

/// Constant-parameter segments with independent sub-seeds, emulating a long
/// stability measurement. `axis_value` is the segment's end time in seconds
/// of simulated link time.
pub fn stability_run(cfg: &QkdLinkConfig, segments: usize, bits_per_segment: u64, master_seed: u64) -> Result<Vec<QkdReport>> {
    if segments == 0 {
        return Err(Error::invalid("segments", "need at least one segment"));
    }
    if bits_per_segment == 0 {
        return Err(Error::invalid("bits_per_segment", "must be at least 1"));
    }
    let seg_time = bits_per_segment as f64 / cfg.bit_rate;
    (0..segments)
        .map(|s| {
            evaluate_mc(
                cfg,
                bits_per_segment,
                streams::derive_seed(master_seed, s as u64),
                (s + 1) as f64 * seg_time,
            )
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detector_model::TemperatureDarkLaw;
    use proptest::prelude::*;

    fn at_mu(mu: f64) -> QkdLinkConfig {
        QkdLinkConfig {
            mu_source: mu,
            ..Default::default()
        }
    }

    fn noiseless(mu: f64) -> QkdLinkConfig {
        let mut c = at_mu(mu);
        c.detector.dark_law = TemperatureDarkLaw::flat(1e-300).unwrap();
        c.detector.jitter.tail_fraction = 0.0;
        c.extinction_db = 400.0;
        c
    }

    #[test]
    fn mu_at_detector_examples() {
        assert_eq!(mu_at_detector(&at_mu(1.0)), 1.0);
        let mut c = at_mu(0.3);
        c.fiber_loss_db = fiber_loss_db(25.0, FIBER_DB_PER_KM);
        assert!((mu_at_detector(&c) - 0.0949).abs() < 1e-4);
        c.mu_source = 0.5;
        c.fiber_loss_db = 4.0;
        assert!((mu_at_detector(&c) - 0.199).abs() < 1e-3);
    }

    #[test]
    fn zero_light_zero_dark_gives_zero_rate() {
        let mut c = noiseless(0.0);
        c.detector.dark_law = TemperatureDarkLaw::flat(f64::MIN_POSITIVE).unwrap();
        assert_eq!(raw_detection_rate(&c).unwrap(), 0.0);
        assert_eq!(qber(&c).unwrap().total, 0.0);
    }

    #[test]
    fn rate_at_one_photon_per_bit() {
        let r = raw_detection_rate(&at_mu(1.0)).unwrap();
        assert!(r > 0.7 * 33e6 && r < 1.4 * 33e6, "{r}");
        // Closed form.
        let ps = 1.0 - (-0.1f64).exp();
        let pd = 1.0 - (1.0 - 6e-7f64).powi(2);
        let r0 = 625e6 * (ps + pd);
        assert!((r - r0 / (1.0 + r0 * 8e-9)).abs() < 1e-6 * r);
    }

    #[test]
    fn small_signal_rate() {
        let r = raw_detection_rate(&noiseless(0.001)).unwrap();
        assert!((r - 62.5e3).abs() < 0.01 * 62.5e3, "{r}");
    }

    #[test]
    fn paralyzable_model_is_lower() {
        let mut c = at_mu(1.0);
        let np = raw_detection_rate(&c).unwrap();
        c.dead_time_model = DeadTimeModel::Paralyzable;
        assert!(raw_detection_rate(&c).unwrap() < np);
    }

    #[test]
    fn qber_examples() {
        assert!(qber(&noiseless(0.5)).unwrap().total < 1e-12);
        let q = qber(&at_mu(0.001)).unwrap();
        assert!((q.total - 0.020).abs() < 0.005, "{q:?}");
        assert!((q.dark - 0.5 * 1.2e-6 / (1e-4 + 1.2e-6)).abs() < 1e-4);
        assert!(q.extinction + q.tail >= 0.014);
        assert!((q.total - (q.dark + q.extinction + q.tail)).abs() < 1e-15);
        let mut ext_only = noiseless(1.0);
        ext_only.extinction_db = 25.0;
        assert!((qber(&ext_only).unwrap().total - 0.00315).abs() < 1e-5);
    }

    #[test]
    fn tail_geometry_by_enumeration() {
        let j = JitterModel::default();
        assert!((tail_error_probability(&j, 0.0) - 7.0 / 12.0).abs() < 1e-15);
        let one = JitterModel { tail_span_gates: 1, ..j };
        assert!((tail_error_probability(&one, 0.0) - 0.75).abs() < 1e-15);
    }

    #[test]
    fn rate_after_ec_examples() {
        assert_eq!(rate_after_ec(33e6, 0.0, 1.2).unwrap(), 33e6);
        assert_eq!(rate_after_ec(33e6, 0.5, 1.0).unwrap(), 0.0);
        // Natural-log form as an independent check.
        let h = |q: f64| -(q * q.ln() + (1.0 - q) * (1.0 - q).ln()) / std::f64::consts::LN_2;
        assert!((binary_entropy(0.016) - h(0.016)).abs() < 1e-14);
        assert!((binary_entropy(0.016) - 0.11835).abs() < 1e-5);
        let r = rate_after_ec(33e6, 0.016, 1.2).unwrap();
        assert!((r - 28.313e6).abs() < 0.01e6, "{r}");
        assert!(rate_after_ec(1.0, 0.6, 1.2).is_err());
        assert!(rate_after_ec(1.0, 0.1, 0.9).is_err());
    }

    #[test]
    fn secret_rate_at_four_db_and_monotone_in_loss() {
        let grid: Vec<f64> = (0..=40).map(|i| i as f64 * 0.5).collect();
        let rows = sweep(&QkdLinkConfig::default(), SweepAxis::FiberLossDb, &grid).unwrap();
        assert!(rows[8].secret_rate > 1e6, "{:?}", rows[8]);
        assert!(rows.windows(2).all(|w| w[1].secret_rate <= w[0].secret_rate));
        assert!(rows[0].secret_rate > rows[8].secret_rate);
        let far = evaluate(
            &SweepAxis::FiberLossDb.apply(&QkdLinkConfig::default(), 200.0),
            200.0,
        )
        .unwrap();
        assert_eq!(far.secret_rate, 0.0);
    }

    #[test]
    fn room_temperature_link() {
        let base = at_mu(0.1);
        let rows = sweep(&base, SweepAxis::Temperature, &[-45.0, -43.0, 20.0]).unwrap();
        assert!(rows[2].qber < 0.03);
        assert!((rows[2].rate_after_ec / rows[1].rate_after_ec - 1.0).abs() < 0.25);
        assert!(rows[2].qber_dark > rows[1].qber_dark);
    }

    #[test]
    fn sweep_errors() {
        assert!(sweep(&QkdLinkConfig::default(), SweepAxis::MuSource, &[]).is_err());
        let e = sweep(&QkdLinkConfig::default(), SweepAxis::Temperature, &[60.0]).unwrap_err();
        assert!(e.is_model_range());
    }

    #[test]
    fn mc_matches_analytic_at_one_photon() {
        let cfg = at_mu(1.0);
        let n_bits = 4_000_000;
        let mc = evaluate_mc(&cfg, n_bits, 21, 0.0).unwrap();
        let an = evaluate(&cfg, 0.0).unwrap();
        assert!((mc.raw_rate / an.raw_rate - 1.0).abs() < 0.02, "{} vs {}", mc.raw_rate, an.raw_rate);
        let n = mc.raw_rate * n_bits as f64 / cfg.bit_rate;
        let sigma = (an.qber * (1.0 - an.qber) / n).sqrt();
        assert!((mc.qber - an.qber).abs() < 4.0 * sigma, "{} vs {}", mc.qber, an.qber);
    }

    #[test]
    fn stability_segments_are_stationary() {
        let rows = stability_run(&at_mu(0.1), 8, 1_000_000, 3).unwrap();
        let mean = rows.iter().map(|r| r.raw_rate).sum::<f64>() / 8.0;
        let counts_per_seg = mean * 1e6 / 625e6;
        for r in &rows {
            let n = r.raw_rate * 1e6 / 625e6;
            assert!((n - counts_per_seg).abs() < 4.0 * counts_per_seg.sqrt());
        }
        assert!(rows.windows(2).all(|w| w[1].axis_value > w[0].axis_value));
        assert_ne!(rows[0].raw_rate, rows[1].raw_rate);
    }

    proptest! {
        #[test]
        fn rate_monotone_in_mu_and_bounded(a in 0.0f64..5.0, b in 0.0f64..5.0) {
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            let rl = raw_detection_rate(&at_mu(lo)).unwrap();
            let rh = raw_detection_rate(&at_mu(hi)).unwrap();
            prop_assert!(rl <= rh);
            prop_assert!(rh <= 1.0 / 8e-9);
            prop_assert!(qber(&at_mu(hi)).unwrap().total <= qber(&at_mu(lo)).unwrap().total + 1e-15);
        }

        #[test]
        fn rate_after_ec_never_exceeds_raw(r in 0.0f64..1e9, q in 0.0f64..=0.5, f in 1.0f64..2.0) {
            let v = rate_after_ec(r, q, f).unwrap();
            prop_assert!(v <= r);
            prop_assert!(v >= 0.0);
            if q > 0.0 && r > 0.0 { prop_assert!(v < r); }
        }

        #[test]
        fn fiber_units_round_trip(km in 0.0f64..500.0) {
            let back = fiber_length_km(fiber_loss_db(km, FIBER_DB_PER_KM), FIBER_DB_PER_KM);
            prop_assert!((back - km).abs() <= 4.0 * f64::EPSILON * km.max(1.0));
        }
    }
}
