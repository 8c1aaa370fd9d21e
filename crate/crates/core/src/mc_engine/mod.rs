//! Gate-clocked Monte Carlo engine.
//!
//! A run proceeds in two passes.
//!
//! 1. Gate ranges of [`CHUNK_GATES`] are simulated independently (and in
//!    parallel) for the history-free processes: photon clicks and dark clicks.
//!    Sparse Bernoulli processes are sampled by geometric skipping, so cost
//!    scales with the number of clicks rather than the number of gates.
//! 2. A single sequential pass walks the merged click list, adds afterpulses
//!    from the expected-value trap population (sampled by thinning), and then
//!    applies the hold-off.
//!
//! Afterpulse state is never split at a chunk boundary: the whole history
//! runs through the sequential pass, which costs O(clicks). Random streams
//! are keyed by chunk index (see [`streams`]), so output is identical for any
//! thread count.

mod analysis;
mod histogram;
mod holdoff;
mod io;
pub mod streams;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detector_model::{sample_detection_time, truncated_gaussian, DetectorParams};
use crate::error::{Error, Result};

pub use analysis::{
    deconvolve_jitter, estimate_fwhm, geometric_lag_probabilities, inter_detection_correlation,
    short_lag_test, tcspc_histogram, tcspc_histogram_with_lead, LagTest,
};
pub use histogram::Histogram;
pub use holdoff::{apply_holdoff, apply_holdoff_with, HoldoffAnchor};
pub use io::{read_records_csv, write_records_csv, RECORDS_CSV_HEADER};

/// Gates per independently seeded range.
pub const CHUNK_GATES: u64 = 1 << 22;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SourceKind {
    /// Laser pulses on every `gate_frequency / trigger_rate`-th gate.
    Pulsed,
    /// No light at all.
    CwDarkOnly,
    /// Time-bin (pulse-position) encoding: one bit per two gates, the pulse
    /// in the gate selected by the bit value.
    CowPpm,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SourceConfig {
    pub kind: SourceKind,
    pub trigger_rate: f64,
    /// Mean photons per pulse (pulsed) or per bit (time-bin) at the detector.
    pub mean_photons: f64,
    pub laser_fwhm: f64,
    /// Offset of the optical pulse from the gate centre.
    pub alignment_delay: f64,
    /// Intensity modulator extinction for the time-bin source.
    pub extinction_db: f64,
}

impl Default for SourceConfig {
    fn default() -> Self {
        Self {
            kind: SourceKind::Pulsed,
            trigger_rate: 31.25e6,
            mean_photons: 0.1,
            laser_fwhm: 30e-12,
            alignment_delay: 0.0,
            extinction_db: 25.0,
        }
    }
}

impl SourceConfig {
    pub fn validate(&self, gate_frequency: f64) -> Result<()> {
        if !(self.mean_photons >= 0.0 && self.mean_photons.is_finite()) {
            return Err(Error::invalid("mean_photons", "must be non-negative"));
        }
        if !(self.laser_fwhm >= 0.0) {
            return Err(Error::invalid("laser_fwhm", "must be non-negative"));
        }
        if !self.alignment_delay.is_finite() {
            return Err(Error::invalid("alignment_delay", "must be finite"));
        }
        if !(self.extinction_db >= 0.0) {
            return Err(Error::invalid("extinction_db", "must be non-negative"));
        }
        if self.kind == SourceKind::Pulsed {
            self.gates_per_trigger(gate_frequency)?;
        }
        Ok(())
    }

    /// Gate periods per laser trigger; the trigger rate must divide the gate
    /// frequency.
    pub fn gates_per_trigger(&self, gate_frequency: f64) -> Result<u64> {
        if !(self.trigger_rate > 0.0) {
            return Err(Error::invalid("trigger_rate", "must be positive"));
        }
        let ratio = gate_frequency / self.trigger_rate;
        let n = ratio.round();
        if n < 1.0 || (ratio - n).abs() > 1e-9 * ratio {
            return Err(Error::invalid(
                "trigger_rate",
                format!("{} Hz does not divide the gate frequency {gate_frequency} Hz", self.trigger_rate),
            ));
        }
        Ok(n as u64)
    }

    /// Fraction of a bit's light leaking into the wrong time bin.
    pub fn extinction_fraction(&self) -> f64 {
        let eps = 10f64.powf(-self.extinction_db / 10.0);
        eps / (1.0 + eps)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub n_gates: u64,
    pub master_seed: u64,
    pub holdoff_gates: u64,
    pub holdoff_anchor: HoldoffAnchor,
    pub detector: DetectorParams,
    pub source: SourceConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            n_gates: 40_000_000,
            master_seed: 1,
            holdoff_gates: 10,
            holdoff_anchor: HoldoffAnchor::Accepted,
            detector: DetectorParams::default(),
            source: SourceConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_gates == 0 {
            return Err(Error::invalid("n_gates", "must be at least 1"));
        }
        self.detector.validate()?;
        self.source.validate(self.detector.gate.gate_frequency)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Origin {
    Photon,
    Dark,
    Afterpulse,
    /// Detection displaced into a subsequent gate by the jitter tail.
    Tail,
}

impl Origin {
    pub fn as_str(self) -> &'static str {
        match self {
            Origin::Photon => "photon",
            Origin::Dark => "dark",
            Origin::Afterpulse => "afterpulse",
            Origin::Tail => "tail",
        }
    }
}

impl std::str::FromStr for Origin {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "photon" => Ok(Origin::Photon),
            "dark" => Ok(Origin::Dark),
            "afterpulse" => Ok(Origin::Afterpulse),
            "tail" => Ok(Origin::Tail),
            other => Err(Error::Parse(format!("unknown origin `{other}`"))),
        }
    }
}

/// One discriminated avalanche. `gate_index` is the gate that triggered it;
/// `time` is absolute (gate `g` is centred on `g · gate_period`) and lies in a
/// later gate for tail detections.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectionRecord {
    pub gate_index: u64,
    pub time: f64,
    pub origin: Origin,
    pub accepted: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct RunSummary {
    pub n_gates: u64,
    /// Laser pulses (pulsed source) or bits (time-bin source) emitted.
    pub light_slots: u64,
    pub photon_avalanches: u64,
    pub dark_avalanches: u64,
    pub afterpulse_avalanches: u64,
    pub tail_displaced: u64,
    pub records: u64,
    pub accepted: u64,
    pub accepted_photon: u64,
    pub accepted_dark: u64,
    pub accepted_afterpulse: u64,
    pub accepted_tail: u64,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub records: Vec<DetectionRecord>,
    pub summary: RunSummary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Cause {
    Photon,
    Dark,
}

#[derive(Debug, Clone, Copy)]
struct Click {
    gate: u64,
    cause: Cause,
    time: f64,
    in_tail: bool,
}

#[derive(Debug, Default)]
struct ChunkOutput {
    clicks: Vec<Click>,
    light_slots: u64,
    photon: u64,
    dark: u64,
}

/// Per-gate probabilities shared by every chunk.
struct Rates {
    period: f64,
    dark: f64,
    photon: PhotonRates,
    laser_sigma: f64,
    alignment: f64,
}

enum PhotonRates {
    None,
    Pulsed { every: u64, p: f64 },
    TimeBin { p_on: f64, p_off: f64, seed: u64 },
}

fn click_probability(efficiency: f64, mu: f64) -> f64 {
    -(-efficiency * mu).exp_m1()
}

impl Rates {
    fn new(cfg: &RunConfig) -> Result<Self> {
        let det = &cfg.detector;
        let src = &cfg.source;
        let period = det.gate_period();
        let dark = det.dark_probability()?;
        let eff = det.efficiency_at_delay(src.alignment_delay);
        let photon = match src.kind {
            SourceKind::CwDarkOnly => PhotonRates::None,
            SourceKind::Pulsed => PhotonRates::Pulsed {
                every: src.gates_per_trigger(det.gate.gate_frequency)?,
                p: click_probability(eff, src.mean_photons),
            },
            SourceKind::CowPpm => {
                let leak = src.extinction_fraction();
                PhotonRates::TimeBin {
                    p_on: click_probability(eff, src.mean_photons * (1.0 - leak)),
                    p_off: click_probability(eff, src.mean_photons * leak),
                    seed: cfg.master_seed,
                }
            }
        };
        let laser_sigma = if src.kind == SourceKind::CwDarkOnly {
            0.0
        } else {
            crate::detector_model::sigma_from_fwhm(src.laser_fwhm)
        };
        Ok(Self {
            period,
            dark,
            photon,
            laser_sigma,
            alignment: src.alignment_delay,
        })
    }
}

/// Bit value sent in time-bin slot `bit`: a counter-based hash of the run seed,
/// so analysis code can recover it without storing the sequence.
pub fn timebin_bit(master_seed: u64, bit: u64) -> u8 {
    (streams::derive_seed(master_seed ^ 0x5EED_B175, bit) >> 63) as u8
}

/// Failures before the first success of a Bernoulli(p) sequence, by
/// inversion. Stays O(1) and exact in distribution for vanishing `p`, where
/// the decaying afterpulse hazard lives.
fn geometric_skip(rng: &mut ChaCha8Rng, p: f64) -> u64 {
    if p >= 1.0 {
        return 0;
    }
    let u = 1.0 - rng.random::<f64>(); // (0, 1]
    let k = (u.ln() / (-p).ln_1p()).floor();
    if k >= u64::MAX as f64 {
        u64::MAX
    } else {
        k as u64
    }
}

/// Visits successes of a Bernoulli(p) process over `lo..hi` by geometric
/// skipping.
fn bernoulli_hits(rng: &mut ChaCha8Rng, p: f64, lo: u64, hi: u64, mut hit: impl FnMut(&mut ChaCha8Rng, u64)) {
    if p <= 0.0 || lo >= hi {
        return;
    }
    let mut i = lo.saturating_add(geometric_skip(rng, p));
    while i < hi {
        hit(rng, i);
        i = i.saturating_add(1).saturating_add(geometric_skip(rng, p));
    }
}

fn simulate_chunk(cfg: &RunConfig, rates: &Rates, chunk: u64) -> ChunkOutput {
    let start = chunk * CHUNK_GATES;
    let end = (start + CHUNK_GATES).min(cfg.n_gates);
    let mut rng = streams::stream(cfg.master_seed, chunk);
    let mut out = ChunkOutput::default();

    let mut dark_gates = Vec::new();
    bernoulli_hits(&mut rng, rates.dark, start, end, |_, g| dark_gates.push(g));

    let mut photon_gates = Vec::new();
    match rates.photon {
        PhotonRates::None => {}
        PhotonRates::Pulsed { every, p } => {
            let first = start.div_ceil(every);
            let last = end.div_ceil(every);
            out.light_slots = last - first;
            bernoulli_hits(&mut rng, p, first, last, |_, c| photon_gates.push(c * every));
        }
        PhotonRates::TimeBin { p_on, p_off, seed } => {
            let first = start.div_ceil(2);
            let last = end.div_ceil(2);
            out.light_slots = last - first;
            let p_any = 1.0 - (1.0 - p_on) * (1.0 - p_off);
            let w_on_only = p_on * (1.0 - p_off);
            let w_off_only = p_off * (1.0 - p_on);
            bernoulli_hits(&mut rng, p_any, first, last, |rng, b| {
                let bit = timebin_bit(seed, b) as u64;
                let on = 2 * b + bit;
                let off = 2 * b + 1 - bit;
                let u = rng.random::<f64>() * p_any;
                let (a, c) = if u < w_on_only {
                    (Some(on), None)
                } else if u < w_on_only + w_off_only {
                    (Some(off), None)
                } else {
                    (Some(on), Some(off))
                };
                let mut push = |g: u64| {
                    if g < end {
                        photon_gates.push(g);
                    }
                };
                match (a, c) {
                    (Some(x), Some(y)) => {
                        push(x.min(y));
                        push(x.max(y));
                    }
                    (Some(x), None) => push(x),
                    _ => {}
                }
            });
        }
    }

    // Merge; a gate holds at most one avalanche and light wins the label.
    let (mut i, mut j) = (0, 0);
    let mut merged = Vec::with_capacity(dark_gates.len() + photon_gates.len());
    while i < photon_gates.len() || j < dark_gates.len() {
        let p = photon_gates.get(i).copied().unwrap_or(u64::MAX);
        let d = dark_gates.get(j).copied().unwrap_or(u64::MAX);
        if p <= d {
            merged.push((p, Cause::Photon));
            out.photon += 1;
            i += 1;
            if p == d {
                j += 1;
            }
        } else {
            merged.push((d, Cause::Dark));
            out.dark += 1;
            j += 1;
        }
    }

    let jitter = &cfg.detector.jitter;
    out.clicks = merged
        .into_iter()
        .map(|(gate, cause)| {
            let (mut time, in_tail) = sample_detection_time(jitter, gate, rates.period, &mut rng);
            if cause == Cause::Photon {
                time += rates.alignment;
                if rates.laser_sigma > 0.0 {
                    time += truncated_gaussian(&mut rng, rates.laser_sigma, 0.25 * rates.period);
                }
            }
            Click {
                gate,
                cause,
                time,
                in_tail,
            }
        })
        .collect();
    out
}

/// Expected-value trap population with exponential release.
struct TrapState {
    population: f64,
    since_gate: u64,
}

impl TrapState {
    fn population_at(&self, gate: u64, decay_per_gate: f64) -> f64 {
        self.population * (-((gate - self.since_gate) as f64) * decay_per_gate).exp()
    }

    fn fill(&mut self, gate: u64, decay_per_gate: f64, amount: f64) {
        self.population = self.population_at(gate, decay_per_gate) + amount;
        self.since_gate = gate;
    }
}

fn record_for(gate: u64, time: f64, in_tail: bool, origin: Origin) -> DetectionRecord {
    DetectionRecord {
        gate_index: gate,
        time,
        origin: if in_tail { Origin::Tail } else { origin },
        accepted: false,
    }
}

/// Runs the gate-clocked simulation and flags records with the hold-off.
pub fn run_simulation(cfg: &RunConfig) -> Result<RunOutput> {
    cfg.validate()?;
    let rates = Rates::new(cfg)?;
    let n_chunks = cfg.n_gates.div_ceil(CHUNK_GATES);
    let chunks: Vec<ChunkOutput> = (0..n_chunks)
        .into_par_iter()
        .map(|c| simulate_chunk(cfg, &rates, c))
        .collect();

    let mut summary = RunSummary {
        n_gates: cfg.n_gates,
        ..Default::default()
    };
    for c in &chunks {
        summary.light_slots += c.light_slots;
        summary.photon_avalanches += c.photon;
        summary.dark_avalanches += c.dark;
    }

    let ap = cfg.detector.afterpulse;
    let total_clicks: usize = chunks.iter().map(|c| c.clicks.len()).sum();
    let mut records = Vec::with_capacity(total_clicks);

    if !ap.enabled || ap.trigger_prob_per_gate == 0.0 || ap.trap_fill_per_detection == 0.0 {
        for click in chunks.iter().flat_map(|c| &c.clicks) {
            let origin = match click.cause {
                Cause::Photon => Origin::Photon,
                Cause::Dark => Origin::Dark,
            };
            records.push(record_for(click.gate, click.time, click.in_tail, origin));
        }
    } else {
        afterpulse_pass(cfg, &rates, chunks.iter().flat_map(|c| &c.clicks), &mut records, &mut summary);
    }

    apply_holdoff_with(&mut records, cfg.holdoff_gates, cfg.holdoff_anchor)?;

    summary.records = records.len() as u64;
    for r in &records {
        if r.origin == Origin::Tail {
            summary.tail_displaced += 1;
        }
        if r.accepted {
            summary.accepted += 1;
            match r.origin {
                Origin::Photon => summary.accepted_photon += 1,
                Origin::Dark => summary.accepted_dark += 1,
                Origin::Afterpulse => summary.accepted_afterpulse += 1,
                Origin::Tail => summary.accepted_tail += 1,
            }
        }
    }
    Ok(RunOutput { records, summary })
}

/// Sequential pass adding afterpulses between (and on) primary clicks.
///
/// The afterpulse hazard in gate `g` is
/// `trigger · population · exp(−(g − g_fill)·T/τ)`. Candidate gates are drawn
/// geometrically at the hazard bound of the current gate and accepted with
/// probability hazard/bound (thinning); the bound is refreshed after every
/// candidate. A candidate landing on a primary click's gate promotes a dark
/// click to an afterpulse; light keeps its label.
fn afterpulse_pass<'a>(
    cfg: &RunConfig,
    rates: &Rates,
    clicks: impl Iterator<Item = &'a Click>,
    records: &mut Vec<DetectionRecord>,
    summary: &mut RunSummary,
) {
    let ap = cfg.detector.afterpulse;
    let jitter = &cfg.detector.jitter;
    let decay = rates.period / ap.release_lifetime;
    let hazard = |traps: &TrapState, g: u64| -> f64 {
        (ap.trigger_prob_per_gate * traps.population_at(g, decay)).min(1.0)
    };
    let mut rng = streams::stream(cfg.master_seed, streams::AFTERPULSE_STREAM);
    let mut traps = TrapState {
        population: 0.0,
        since_gate: 0,
    };
    let mut cursor = 0u64;

    let emit_afterpulses_until = |limit: u64,
                                      traps: &mut TrapState,
                                      cursor: &mut u64,
                                      rng: &mut ChaCha8Rng,
                                      records: &mut Vec<DetectionRecord>,
                                      summary: &mut RunSummary|
     -> bool {
        // Returns whether an afterpulse fired exactly at `limit`.
        loop {
            if *cursor > limit {
                return false;
            }
            let bound = hazard(traps, *cursor);
            if bound < 1e-300 {
                return false;
            }
            let cand = cursor.saturating_add(geometric_skip(rng, bound));
            if cand > limit {
                return false;
            }
            let accept = rng.random::<f64>() * bound < hazard(traps, cand);
            if cand == limit {
                return accept;
            }
            if accept {
                let (time, in_tail) = sample_detection_time(jitter, cand, rates.period, rng);
                records.push(record_for(cand, time, in_tail, Origin::Afterpulse));
                summary.afterpulse_avalanches += 1;
                traps.fill(cand, decay, ap.trap_fill_per_detection);
            }
            *cursor = cand + 1;
        }
    };

    for click in clicks {
        let fired = emit_afterpulses_until(
            click.gate,
            &mut traps,
            &mut cursor,
            &mut rng,
            records,
            summary,
        );
        let origin = match (click.cause, fired) {
            (Cause::Photon, _) => Origin::Photon,
            (Cause::Dark, true) => {
                summary.afterpulse_avalanches += 1;
                Origin::Afterpulse
            }
            (Cause::Dark, false) => Origin::Dark,
        };
        records.push(record_for(click.gate, click.time, click.in_tail, origin));
        traps.fill(click.gate, decay, ap.trap_fill_per_detection);
        cursor = click.gate + 1;
    }
    if cfg.n_gates > 0 {
        // Afterpulses after the last primary click, up to the final gate.
        let last = cfg.n_gates - 1;
        if emit_afterpulses_until(last, &mut traps, &mut cursor, &mut rng, records, summary) {
            let (time, in_tail) = sample_detection_time(jitter, last, rates.period, &mut rng);
            records.push(record_for(last, time, in_tail, Origin::Afterpulse));
            summary.afterpulse_avalanches += 1;
        }
    }
}

#[cfg(test)]
mod tests;
