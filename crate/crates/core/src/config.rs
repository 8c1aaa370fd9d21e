//! JSON configuration documents.
//!
//! Every field is optional and carries its unit in the name (`_hz`, `_ps`,
//! `_ns`, `_v`, `_c`, `_db`, `_mv`). Missing fields take the defaults below,
//! which describe the headline operating point: 1.25 GHz gating, 130 ps
//! gates, 10 % efficiency at 53.5 V, −43 °C, hold-off of 10 gates. Unknown
//! fields are rejected. After parsing, every field is range-checked and all
//! failures are reported together.
//!
//! The temperature is deliberately not checked against the dark-count table
//! here: a temperature outside the table is a model-range error raised when a
//! simulation asks for the dark rate.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::detector_model::{
    AfterpulseModel, BiasEfficiencyLaw, DetectorParams, GateConfig, JitterModel, TemperatureDarkLaw,
};
use crate::error::{Error, Result};
use crate::mc_engine::{HoldoffAnchor, SourceConfig, SourceKind};
use crate::qkd_budget::{DeadTimeModel, QkdLinkConfig};
use crate::signal_chain::{
    AvalanchePulseShape, DiscriminatorConfig, FilterResponseSpec, FrontEndConfig, Polarity,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConfigDocument {
    pub gate_frequency_hz: f64,
    pub gate_fwhm_ps: f64,
    pub delay_step_ps: f64,
    pub peak_efficiency: f64,
    pub bias_v: f64,
    pub bias_anchor_v: f64,
    pub bias_anchor_efficiency: f64,
    pub bias_slope_per_v: f64,
    pub temperature_c: f64,
    /// `[temperature °C, dark probability per gate]` pairs, increasing in
    /// temperature, interpolated log-linearly.
    pub dark_table_c_prob: Vec<[f64; 2]>,
    pub jitter_fwhm_ps: f64,
    pub tail_fraction: f64,
    pub tail_span_gates: u32,
    pub holdoff_gates: u64,
    pub holdoff_anchor: HoldoffAnchor,
    pub afterpulse: AfterpulseSection,
    pub source: SourceSection,
    pub qkd: QkdSection,
    pub front_end: FrontEndSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AfterpulseSection {
    pub enabled: bool,
    pub trap_fill_per_detection: f64,
    pub release_lifetime_ns: f64,
    pub trigger_prob_per_gate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SourceSection {
    pub trigger_rate_hz: f64,
    /// Mean photons per pulse at the detector.
    pub mean_photons: f64,
    pub laser_fwhm_ps: f64,
    pub alignment_delay_ps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QkdSection {
    pub bit_rate_hz: f64,
    pub timebin_width_ps: f64,
    pub mu_source: f64,
    pub fiber_loss_db: f64,
    /// When set, replaces `fiber_loss_db` by `fiber_length_km · fiber_db_per_km`.
    pub fiber_length_km: Option<f64>,
    pub fiber_db_per_km: f64,
    pub extinction_db: f64,
    pub holdoff_ns: f64,
    pub ec_efficiency: f64,
    pub dead_time_model: DeadTimeModel,
    pub pa_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FrontEndSection {
    pub gate_amplitude_vpp: f64,
    pub coupling_gain: f64,
    pub sample_interval_ps: f64,
    pub filter_stages: usize,
    pub filter_passband_edge_mhz: f64,
    pub filter_passband_ripple_max_db: f64,
    pub filter_rejection_at_gate_db: f64,
    pub filter_rejection_band_floor_db: f64,
    pub filter_rejection_band_halfwidth_mhz: f64,
    pub filter_rejection_to_upper_db: f64,
    pub filter_upper_frequency_mhz: f64,
    pub pulse_peak_mv: f64,
    pub pulse_fall_ns: f64,
    pub pulse_rise_ns: f64,
    pub pulse_amplitude_jitter: f64,
    pub pulse_width_jitter: f64,
    pub threshold_mv: f64,
    pub refractory_ns: f64,
    pub amplifier_noise_mv: f64,
}

impl Default for ConfigDocument {
    fn default() -> Self {
        let gate = GateConfig::default();
        let law = BiasEfficiencyLaw::default();
        let det = DetectorParams::default();
        let jitter = JitterModel::default();
        Self {
            gate_frequency_hz: gate.gate_frequency,
            gate_fwhm_ps: tidy(gate.gate_fwhm * 1e12),
            delay_step_ps: tidy(gate.delay_step * 1e12),
            peak_efficiency: gate.peak_efficiency,
            bias_v: det.bias,
            bias_anchor_v: law.anchor_bias,
            bias_anchor_efficiency: law.anchor_efficiency,
            bias_slope_per_v: law.slope,
            temperature_c: det.temperature,
            dark_table_c_prob: det.dark_law.anchors().iter().map(|&(t, p)| [t, p]).collect(),
            jitter_fwhm_ps: tidy(jitter.fwhm() * 1e12),
            tail_fraction: jitter.tail_fraction,
            tail_span_gates: jitter.tail_span_gates,
            holdoff_gates: 10,
            holdoff_anchor: HoldoffAnchor::Accepted,
            afterpulse: AfterpulseSection::default(),
            source: SourceSection::default(),
            qkd: QkdSection::default(),
            front_end: FrontEndSection::default(),
        }
    }
}

impl Default for AfterpulseSection {
    fn default() -> Self {
        let m = AfterpulseModel::default();
        Self {
            enabled: m.enabled,
            trap_fill_per_detection: m.trap_fill_per_detection,
            release_lifetime_ns: tidy(m.release_lifetime * 1e9),
            trigger_prob_per_gate: m.trigger_prob_per_gate,
        }
    }
}

impl Default for SourceSection {
    fn default() -> Self {
        let s = SourceConfig::default();
        Self {
            trigger_rate_hz: s.trigger_rate,
            mean_photons: s.mean_photons,
            laser_fwhm_ps: tidy(s.laser_fwhm * 1e12),
            alignment_delay_ps: tidy(s.alignment_delay * 1e12),
        }
    }
}

impl Default for QkdSection {
    fn default() -> Self {
        let q = QkdLinkConfig::default();
        Self {
            bit_rate_hz: q.bit_rate,
            timebin_width_ps: tidy(q.timebin_width * 1e12),
            mu_source: q.mu_source,
            fiber_loss_db: q.fiber_loss_db,
            fiber_length_km: None,
            fiber_db_per_km: crate::qkd_budget::FIBER_DB_PER_KM,
            extinction_db: q.extinction_db,
            holdoff_ns: tidy(q.holdoff_time * 1e9),
            ec_efficiency: q.ec_efficiency,
            dead_time_model: q.dead_time_model,
            pa_fraction: q.pa_fraction,
        }
    }
}

impl Default for FrontEndSection {
    fn default() -> Self {
        let f = FrontEndConfig::default();
        Self {
            gate_amplitude_vpp: f.gate_amplitude_pp,
            coupling_gain: f.coupling_gain,
            sample_interval_ps: tidy(f.dt * 1e12),
            filter_stages: f.filter_stages,
            filter_passband_edge_mhz: tidy(f.filter.passband_edge / 1e6),
            filter_passband_ripple_max_db: f.filter.passband_ripple_max_db,
            filter_rejection_at_gate_db: f.filter.rejection_at_gate_db,
            filter_rejection_band_floor_db: f.filter.rejection_band_floor_db,
            filter_rejection_band_halfwidth_mhz: tidy(f.filter.rejection_band_halfwidth / 1e6),
            filter_rejection_to_upper_db: f.filter.rejection_to_upper_db,
            filter_upper_frequency_mhz: tidy(f.filter.upper_frequency / 1e6),
            pulse_peak_mv: tidy(f.pulse.peak_amplitude * 1e3),
            pulse_fall_ns: tidy(f.pulse.fall_time * 1e9),
            pulse_rise_ns: tidy(f.pulse.rise_time * 1e9),
            pulse_amplitude_jitter: f.pulse.amplitude_jitter,
            pulse_width_jitter: f.pulse.width_jitter,
            threshold_mv: tidy(f.discriminator.threshold * 1e3),
            refractory_ns: tidy(f.discriminator.refractory_time * 1e9),
            amplifier_noise_mv: tidy(f.amplifier_noise_rms * 1e3),
        }
    }
}

/// Fully resolved configuration in SI units.
#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub detector: DetectorParams,
    /// Pulsed laser used for the characterisation runs.
    pub source: SourceConfig,
    pub holdoff_gates: u64,
    pub holdoff_anchor: HoldoffAnchor,
    pub qkd: QkdLinkConfig,
    pub front_end: FrontEndConfig,
    /// The document the configuration was resolved from, defaults filled in.
    pub document: ConfigDocument,
}

impl Default for Config {
    fn default() -> Self {
        ConfigDocument::default()
            .resolve()
            .expect("built-in defaults are valid")
    }
}

/// Rounds to 12 significant digits so unit conversions of the defaults print
/// as the decimal values they stand for.
fn tidy(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    let scale = 10f64.powi(11 - x.abs().log10().floor() as i32);
    (x * scale).round() / scale
}

struct Checks(Vec<String>);

impl Checks {
    fn require(&mut self, field: &str, ok: bool, rule: &str) {
        if !ok {
            self.0.push(format!("{field}: {rule}"));
        }
    }

    fn positive(&mut self, field: &str, v: f64) {
        self.require(field, v > 0.0 && v.is_finite(), "must be positive and finite");
    }

    fn non_negative(&mut self, field: &str, v: f64) {
        self.require(field, v >= 0.0 && v.is_finite(), "must be non-negative and finite");
    }

    fn fraction(&mut self, field: &str, v: f64) {
        self.require(field, (0.0..=1.0).contains(&v), "must lie in [0, 1]");
    }

    fn finite(&mut self, field: &str, v: f64) {
        self.require(field, v.is_finite(), "must be finite");
    }

    fn component(&mut self, section: &str, r: Result<()>) {
        match r {
            Ok(()) => {}
            Err(Error::Validation(list)) => {
                self.0.extend(list.into_iter().map(|e| format!("{section}: {e}")))
            }
            Err(e) => self.0.push(format!("{section}: {e}")),
        }
    }
}

impl ConfigDocument {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("document serializes")
    }

    fn field_checks(&self) -> Checks {
        let mut c = Checks(Vec::new());
        c.positive("gate_frequency_hz", self.gate_frequency_hz);
        c.positive("gate_fwhm_ps", self.gate_fwhm_ps);
        c.require(
            "gate_fwhm_ps",
            self.gate_fwhm_ps / 1e12 * self.gate_frequency_hz < 1.0,
            "must be shorter than the gate period",
        );
        c.positive("delay_step_ps", self.delay_step_ps);
        c.fraction("peak_efficiency", self.peak_efficiency);
        c.finite("bias_v", self.bias_v);
        c.finite("bias_anchor_v", self.bias_anchor_v);
        c.fraction("bias_anchor_efficiency", self.bias_anchor_efficiency);
        c.positive("bias_slope_per_v", self.bias_slope_per_v);
        c.finite("temperature_c", self.temperature_c);
        c.require(
            "dark_table_c_prob",
            self.dark_table_c_prob.len() >= 2,
            "needs at least two [temperature, probability] entries",
        );
        c.positive("jitter_fwhm_ps", self.jitter_fwhm_ps);
        c.fraction("tail_fraction", self.tail_fraction);
        c.require("tail_span_gates", self.tail_span_gates >= 1, "must be at least 1");

        let a = &self.afterpulse;
        c.non_negative("afterpulse.trap_fill_per_detection", a.trap_fill_per_detection);
        c.positive("afterpulse.release_lifetime_ns", a.release_lifetime_ns);
        c.fraction("afterpulse.trigger_prob_per_gate", a.trigger_prob_per_gate);

        let s = &self.source;
        c.positive("source.trigger_rate_hz", s.trigger_rate_hz);
        c.non_negative("source.mean_photons", s.mean_photons);
        c.non_negative("source.laser_fwhm_ps", s.laser_fwhm_ps);
        c.finite("source.alignment_delay_ps", s.alignment_delay_ps);

        let q = &self.qkd;
        c.positive("qkd.bit_rate_hz", q.bit_rate_hz);
        c.positive("qkd.timebin_width_ps", q.timebin_width_ps);
        c.non_negative("qkd.mu_source", q.mu_source);
        c.non_negative("qkd.fiber_loss_db", q.fiber_loss_db);
        if let Some(km) = q.fiber_length_km {
            c.non_negative("qkd.fiber_length_km", km);
        }
        c.positive("qkd.fiber_db_per_km", q.fiber_db_per_km);
        c.non_negative("qkd.extinction_db", q.extinction_db);
        c.non_negative("qkd.holdoff_ns", q.holdoff_ns);
        c.require("qkd.ec_efficiency", q.ec_efficiency >= 1.0, "must be at least 1");
        c.fraction("qkd.pa_fraction", q.pa_fraction);

        let f = &self.front_end;
        c.non_negative("front_end.gate_amplitude_vpp", f.gate_amplitude_vpp);
        c.non_negative("front_end.coupling_gain", f.coupling_gain);
        c.positive("front_end.sample_interval_ps", f.sample_interval_ps);
        c.require("front_end.filter_stages", f.filter_stages >= 1, "must be at least 1");
        c.require("front_end.pulse_peak_mv", f.pulse_peak_mv < 0.0, "must be negative");
        c.positive("front_end.pulse_fall_ns", f.pulse_fall_ns);
        c.non_negative("front_end.pulse_rise_ns", f.pulse_rise_ns);
        c.require("front_end.threshold_mv", f.threshold_mv < 0.0, "must be negative");
        c.non_negative("front_end.refractory_ns", f.refractory_ns);
        c.non_negative("front_end.amplifier_noise_mv", f.amplifier_noise_mv);
        c
    }

    /// Converts to SI units and validates everything, reporting every failed
    /// field at once.
    pub fn resolve(&self) -> Result<Config> {
        let mut checks = self.field_checks();

        let gate = GateConfig {
            gate_frequency: self.gate_frequency_hz,
            gate_fwhm: self.gate_fwhm_ps / 1e12,
            delay_step: self.delay_step_ps / 1e12,
            peak_efficiency: self.peak_efficiency,
        };
        let dark_law = match TemperatureDarkLaw::new(self.dark_table_c_prob.iter().map(|&[t, p]| (t, p)).collect()) {
            Ok(l) => l,
            Err(e) => {
                checks.component("dark_table_c_prob", Err(e));
                TemperatureDarkLaw::default()
            }
        };
        let detector = DetectorParams {
            gate,
            bias_law: BiasEfficiencyLaw {
                anchor_bias: self.bias_anchor_v,
                anchor_efficiency: self.bias_anchor_efficiency,
                slope: self.bias_slope_per_v,
            },
            bias: self.bias_v,
            temperature: self.temperature_c,
            dark_law,
            jitter: JitterModel::from_fwhm(self.jitter_fwhm_ps / 1e12, self.tail_fraction, self.tail_span_gates),
            afterpulse: AfterpulseModel {
                enabled: self.afterpulse.enabled,
                trap_fill_per_detection: self.afterpulse.trap_fill_per_detection,
                release_lifetime: self.afterpulse.release_lifetime_ns / 1e9,
                trigger_prob_per_gate: self.afterpulse.trigger_prob_per_gate,
            },
        };
        let source = SourceConfig {
            kind: SourceKind::Pulsed,
            trigger_rate: self.source.trigger_rate_hz,
            mean_photons: self.source.mean_photons,
            laser_fwhm: self.source.laser_fwhm_ps / 1e12,
            alignment_delay: self.source.alignment_delay_ps / 1e12,
            extinction_db: self.qkd.extinction_db,
        };
        let q = &self.qkd;
        let qkd = QkdLinkConfig {
            bit_rate: q.bit_rate_hz,
            timebin_width: q.timebin_width_ps / 1e12,
            mu_source: q.mu_source,
            fiber_loss_db: match q.fiber_length_km {
                Some(km) => crate::qkd_budget::fiber_loss_db(km, q.fiber_db_per_km),
                None => q.fiber_loss_db,
            },
            extinction_db: q.extinction_db,
            detector: detector.clone(),
            holdoff_time: q.holdoff_ns / 1e9,
            ec_efficiency: q.ec_efficiency,
            dead_time_model: q.dead_time_model,
            pa_fraction: q.pa_fraction,
        };
        let f = &self.front_end;
        let front_end = FrontEndConfig {
            gate_frequency: self.gate_frequency_hz,
            gate_amplitude_pp: f.gate_amplitude_vpp,
            coupling_gain: f.coupling_gain,
            dt: f.sample_interval_ps / 1e12,
            filter: FilterResponseSpec {
                gate_frequency: self.gate_frequency_hz,
                passband_edge: f.filter_passband_edge_mhz * 1e6,
                passband_ripple_max_db: f.filter_passband_ripple_max_db,
                rejection_at_gate_db: f.filter_rejection_at_gate_db,
                rejection_band_floor_db: f.filter_rejection_band_floor_db,
                rejection_band_halfwidth: f.filter_rejection_band_halfwidth_mhz * 1e6,
                rejection_to_upper_db: f.filter_rejection_to_upper_db,
                upper_frequency: f.filter_upper_frequency_mhz * 1e6,
            },
            filter_stages: f.filter_stages,
            pulse: AvalanchePulseShape {
                peak_amplitude: f.pulse_peak_mv / 1e3,
                fall_time: f.pulse_fall_ns / 1e9,
                rise_time: f.pulse_rise_ns / 1e9,
                amplitude_jitter: f.pulse_amplitude_jitter,
                width_jitter: f.pulse_width_jitter,
            },
            discriminator: DiscriminatorConfig {
                threshold: f.threshold_mv / 1e3,
                polarity: Polarity::NegativeGoing,
                refractory_time: f.refractory_ns / 1e9,
            },
            amplifier_noise_rms: f.amplifier_noise_mv / 1e3,
        };

        // Cross-field rules owned by the components. Skipped when the field
        // checks already failed, to avoid reporting the same problem twice.
        if checks.0.is_empty() {
            checks.component("detector", detector.validate());
            checks.component("source", source.validate(detector.gate.gate_frequency));
            checks.component("qkd", qkd.validate());
            checks.component("front_end.filter", front_end.filter.validate());
            checks.component("front_end", front_end.pulse.validate());
        }
        if !checks.0.is_empty() {
            return Err(Error::Validation(checks.0));
        }
        Ok(Config {
            detector,
            source,
            holdoff_gates: self.holdoff_gates,
            holdoff_anchor: self.holdoff_anchor,
            qkd,
            front_end,
            document: self.clone(),
        })
    }
}

pub fn parse_config(text: &str) -> Result<Config> {
    ConfigDocument::from_json(text)?.resolve()
}

/// Reads and validates a configuration file.
pub fn load_config(path: &Path) -> Result<Config> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
    })?;
    parse_config(&text).map_err(|e| match e {
        Error::Parse(msg) => Error::Parse(format!("{}: {msg}", path.display())),
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_object_gives_headline_defaults() {
        let cfg = parse_config("{}").unwrap();
        assert_eq!(cfg.detector.gate.gate_frequency, 1.25e9);
        assert!((cfg.detector.gate.gate_fwhm - 130e-12).abs() < 1e-24);
        assert!((cfg.detector.peak_efficiency() - 0.1).abs() < 1e-12);
        assert_eq!(cfg.detector.temperature, -43.0);
        assert_eq!(cfg.holdoff_gates, 10);
        assert_eq!(cfg.detector, DetectorParams::default());
        assert_eq!(cfg.front_end, FrontEndConfig::default());
        assert_eq!(cfg.qkd, QkdLinkConfig::default());
        assert!((cfg.detector.jitter.fwhm() - 70e-12).abs() < 1e-20);
        assert_eq!(cfg.qkd.holdoff_gates(), 10);
        assert_eq!(cfg, Config::default());
    }

    #[test]
    fn negative_gate_width_is_reported() {
        let e = parse_config(r#"{"gate_fwhm_ps": -5}"#).unwrap_err();
        match e {
            Error::Validation(list) => assert!(list.iter().any(|m| m.starts_with("gate_fwhm_ps"))),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn every_failure_is_listed() {
        let e = parse_config(
            r#"{"gate_fwhm_ps": -5, "tail_fraction": 2, "qkd": {"ec_efficiency": 0.5}, "source": {"mean_photons": -1}}"#,
        )
        .unwrap_err();
        let Error::Validation(list) = e else { panic!() };
        for field in ["gate_fwhm_ps", "tail_fraction", "qkd.ec_efficiency", "source.mean_photons"] {
            assert!(list.iter().any(|m| m.starts_with(field)), "{field} missing from {list:?}");
        }
    }

    #[test]
    fn room_temperature_override() {
        let cfg = parse_config(r#"{"temperature_c": 20}"#).unwrap();
        assert!((cfg.detector.dark_probability().unwrap() - 1.5e-5).abs() < 1e-12);
        assert_eq!(cfg.qkd.detector.temperature, 20.0);
    }

    #[test]
    fn out_of_table_temperature_is_a_model_range_error_later() {
        let cfg = parse_config(r#"{"temperature_c": 60}"#).unwrap();
        assert!(cfg.detector.dark_probability().unwrap_err().is_model_range());
    }

    #[test]
    fn unknown_and_mistyped_fields_fail_to_parse() {
        assert!(matches!(parse_config(r#"{"gate_fwhm": 130}"#), Err(Error::Parse(_))));
        assert!(matches!(parse_config(r#"{"gate_fwhm_ps": "wide"}"#), Err(Error::Parse(_))));
    }

    #[test]
    fn fiber_length_sets_loss() {
        let cfg = parse_config(r#"{"qkd": {"fiber_length_km": 25}}"#).unwrap();
        assert!((cfg.qkd.fiber_loss_db - 5.0).abs() < 1e-12);
    }

    #[test]
    fn defaults_round_trip_through_json() {
        let doc = ConfigDocument::default();
        let back = ConfigDocument::from_json(&doc.to_json_pretty()).unwrap();
        assert_eq!(doc, back);
    }

    #[test]
    fn missing_file_names_the_path() {
        let e = load_config(Path::new("/nonexistent/sinegate.json")).unwrap_err();
        assert!(e.to_string().contains("/nonexistent/sinegate.json"));
    }
}
