use anyhow::Result;
use clap::Args;
use rand::Rng;
use serde::Serialize;

use sinegate_core::config::Config;
use sinegate_core::mc_engine::{
    self, deconvolve_jitter, estimate_fwhm, inter_detection_correlation, streams, tcspc_histogram,
    write_records_csv, Histogram, RunConfig, SourceKind,
};
use sinegate_core::qkd_budget::{self, QkdLinkConfig, QkdReport, SweepAxis, QKD_CSV_HEADER, SECRET_RATE_LABEL};
use sinegate_core::signal_chain::{self, power_spectrum, FrontEnd};

use crate::report::{Cell, OutputDir, Table};

/// Temperatures for the dark-count and room-temperature sweeps (°C).
pub const TEMPERATURE_GRID: [f64; 15] = [
    -45.0, -43.0, -40.0, -35.0, -30.0, -25.0, -20.0, -15.0, -10.0, -5.0, 0.0, 5.0, 10.0, 15.0, 20.0,
];

/// Photons per bit at the detector for the link-budget sweep.
pub const MU_GRID: [f64; 10] = [0.001, 0.002, 0.005, 0.01, 0.02, 0.05, 0.1, 0.2, 0.5, 1.0];

pub struct Ctx<'a> {
    pub cfg: &'a Config,
    pub seed: u64,
    pub out: &'a mut OutputDir,
    pub notes: Vec<&'static str>,
}

/// Trims representation noise from values meant to sit on a decimal grid.
fn tidy(x: f64) -> f64 {
    let r = (x * 1e6).round() / 1e6;
    if (r - x).abs() <= 1e-9 * x.abs().max(1.0) {
        r
    } else {
        x
    }
}

fn histogram_table(h: &Histogram, x_header: &'static str, scale: f64) -> Table {
    let mut t = Table::new(&[x_header, "count"]);
    for (i, &c) in h.counts().iter().enumerate() {
        t.push(vec![tidy(h.bin_start(i) * scale).into(), c.into()]);
    }
    t
}

fn metrics_table(rows: Vec<(&'static str, Cell)>) -> Table {
    let mut t = Table::new(&["metric", "value"]);
    for (name, value) in rows {
        t.push(vec![name.into(), value]);
    }
    t
}

pub fn qkd_table(reports: &[QkdReport]) -> Table {
    let columns: Vec<&'static str> = QKD_CSV_HEADER.split(',').collect();
    let mut t = Table::new(&columns);
    for r in reports {
        t.push(vec![
            tidy(r.axis_value).into(),
            r.mu_detector.into(),
            r.raw_rate.into(),
            r.qber.into(),
            r.qber_dark.into(),
            r.qber_ext.into(),
            r.qber_tail.into(),
            r.rate_after_ec.into(),
            r.secret_rate.into(),
        ]);
    }
    t
}

fn base_run(cfg: &Config, n_gates: u64, seed: u64) -> RunConfig {
    RunConfig {
        n_gates,
        master_seed: seed,
        holdoff_gates: cfg.holdoff_gates,
        holdoff_anchor: cfg.holdoff_anchor,
        detector: cfg.detector.clone(),
        source: cfg.source,
    }
}

#[derive(Debug, Args, Serialize)]
pub struct ChainDemoArgs {
    /// Gate periods to render.
    #[arg(long, default_value_t = 64)]
    pub cycles: usize,
    /// Gate period whose peak carries the avalanche.
    #[arg(long, default_value_t = 32)]
    pub pulse_cycle: usize,
}

pub fn chain_demo(ctx: &mut Ctx, args: &ChainDemoArgs) -> Result<()> {
    anyhow::ensure!(args.pulse_cycle < args.cycles, "--pulse-cycle must be below --cycles");
    let fe = FrontEnd::new(ctx.cfg.front_end)?;
    let c = fe.config();
    let period = 1.0 / c.gate_frequency;
    let mut rng = streams::stream(ctx.seed, 0);
    let gate_delay = rng.random::<f64>() * period;
    // The gate sine peaks a quarter period after each phase origin.
    let phase0 = (c.gate_frequency * gate_delay).fract();
    let onset = (args.pulse_cycle as f64 + 0.25 + phase0) * period - 0.5 * c.pulse.rise_time;
    let pulse = c.pulse.draw(&mut rng);
    let trace = fe.render(args.cycles, gate_delay, &[(onset, pulse)], &mut rng)?;
    let crossings = fe.discriminate(&trace);

    for (name, w) in [
        ("gate.csv", &trace.gate),
        ("feedthrough.csv", &trace.feedthrough),
        ("raw.csv", &trace.raw),
        ("filtered.csv", &trace.filtered),
    ] {
        let mut buf = Vec::new();
        w.write_csv(&mut buf)?;
        ctx.out.raw(name, &buf)?;
    }

    let raw_spec = power_spectrum(&trace.raw);
    let filt_spec = power_spectrum(&trace.filtered);
    let mut spectra = Table::new(&["frequency_hz", "raw_db", "filtered_db"]);
    for ((f, a), (_, b)) in raw_spec.iter().zip(&filt_spec) {
        spectra.push(vec![tidy(*f).into(), (*a).into(), (*b).into()]);
    }
    ctx.out.table("spectra", &spectra)?;

    let st = signal_chain::self_test(&c.filter, c.dt, 100e6, 10e6)?;
    let mut response = Table::new(&["frequency_hz", "attenuation_db"]);
    for p in &st.points {
        response.push(vec![tidy(p.frequency).into(), p.attenuation_db.into()]);
    }
    ctx.out.table("filter_response", &response)?;

    let mut cross = Table::new(&["crossing_time_s"]);
    for t in &crossings {
        cross.push(vec![(*t).into()]);
    }
    ctx.out.table("crossings", &cross)?;

    ctx.out.table(
        "chain_summary",
        &metrics_table(vec![
            ("gate_delay_s", gate_delay.into()),
            ("pulse_onset_s", onset.into()),
            ("pulse_amplitude_v", pulse.amplitude.into()),
            ("filter_taps", (st.taps as u64).into()),
            ("filter_stages", (c.filter_stages as u64).into()),
            ("gate_attenuation_db", st.gate_attenuation_db.into()),
            ("min_band_attenuation_db", st.min_band_attenuation_db.into()),
            ("min_upper_attenuation_db", st.min_upper_attenuation_db.into()),
            ("passband_max_deviation_db", st.passband_max_deviation_db.into()),
            ("filter_self_test_passes", (st.passes as u64).into()),
            ("raw_peak_to_peak_v", trace.raw.peak_to_peak().into()),
            ("filtered_min_v", trace.filtered.min().into()),
            ("crossings", (crossings.len() as u64).into()),
        ]),
    )?;
    ctx.notes.push("waveform files use the native format: a `# dt=... n=...` comment line, then time_s,volts");
    Ok(())
}

#[derive(Debug, Args, Serialize)]
pub struct SweepBiasArgs {
    #[arg(long, default_value_t = 52.0)]
    pub from_v: f64,
    #[arg(long, default_value_t = 56.0)]
    pub to_v: f64,
    #[arg(long, default_value_t = 0.25)]
    pub step_v: f64,
    /// Simulated gates per bias point (0 skips the Monte Carlo column).
    #[arg(long, default_value_t = 40_000_000)]
    pub gates: u64,
}

fn grid(from: f64, to: f64, step: f64) -> Result<Vec<f64>> {
    anyhow::ensure!(step > 0.0 && to >= from, "grid needs step > 0 and to >= from");
    let n = ((to - from) / step + 1e-9).floor() as usize;
    Ok((0..=n).map(|i| tidy(from + i as f64 * step)).collect())
}

/// Efficiency from pulsed detections: the click probability per pulse
/// inverted through the Poisson law.
fn measured_efficiency(run: &RunConfig) -> Result<(u64, u64, f64)> {
    let out = mc_engine::run_simulation(run)?;
    let every = run.source.gates_per_trigger(run.detector.gate.gate_frequency)?;
    let clicks = out
        .records
        .iter()
        .filter(|r| r.gate_index % every == 0)
        .count() as u64;
    let pulses = out.summary.light_slots;
    let p = clicks as f64 / pulses.max(1) as f64;
    let eta = if run.source.mean_photons > 0.0 {
        -(-p).ln_1p() / run.source.mean_photons
    } else {
        0.0
    };
    Ok((pulses, clicks, eta))
}

pub fn sweep_bias(ctx: &mut Ctx, args: &SweepBiasArgs) -> Result<()> {
    let mut t = Table::new(&["bias_v", "efficiency_model", "pulses", "detections", "efficiency_mc"]);
    for (i, bias) in grid(args.from_v, args.to_v, args.step_v)?.into_iter().enumerate() {
        let mut run = base_run(ctx.cfg, args.gates.max(1), streams::derive_seed(ctx.seed, i as u64));
        run.detector.bias = bias;
        let model = run.detector.peak_efficiency();
        let (pulses, clicks, eta) = if args.gates > 0 {
            measured_efficiency(&run)?
        } else {
            (0, 0, f64::NAN)
        };
        t.push(vec![bias.into(), model.into(), pulses.into(), clicks.into(), eta.into()]);
    }
    ctx.out.table("sweep_bias", &t)?;
    Ok(())
}

#[derive(Debug, Args, Serialize)]
pub struct SweepDelayArgs {
    /// Half-span of the delay scan around the gate centre.
    #[arg(long, default_value_t = 400.0)]
    pub span_ps: f64,
    /// Simulated gates per delay point (0 skips the Monte Carlo column).
    #[arg(long, default_value_t = 4_000_000)]
    pub gates: u64,
}

pub fn sweep_delay(ctx: &mut Ctx, args: &SweepDelayArgs) -> Result<()> {
    let gate = &ctx.cfg.detector.gate;
    let step_ps = gate.delay_step * 1e12;
    let mut t = Table::new(&[
        "delay_ps",
        "gate_profile",
        "efficiency_model",
        "pulses",
        "detections",
        "efficiency_mc",
    ]);
    let n = (args.span_ps / step_ps).floor() as i64;
    for (i, k) in (-n..=n).enumerate() {
        let delay = k as f64 * gate.delay_step;
        let mut run = base_run(ctx.cfg, args.gates.max(1), streams::derive_seed(ctx.seed, i as u64));
        run.source.alignment_delay = delay;
        let model = run.detector.efficiency_at_delay(delay);
        let (pulses, clicks, eta) = if args.gates > 0 {
            measured_efficiency(&run)?
        } else {
            (0, 0, f64::NAN)
        };
        t.push(vec![
            tidy(k as f64 * step_ps).into(),
            sinegate_core::detector_model::gate_profile(gate, delay).into(),
            model.into(),
            pulses.into(),
            clicks.into(),
            eta.into(),
        ]);
    }
    ctx.out.table("sweep_delay", &t)?;
    Ok(())
}

#[derive(Debug, Args, Serialize)]
pub struct SweepTempArgs {
    /// Simulated dark-only gates per temperature (0 skips the Monte Carlo).
    #[arg(long, default_value_t = 1_000_000_000)]
    pub gates: u64,
}

pub fn sweep_temp(ctx: &mut Ctx, args: &SweepTempArgs) -> Result<()> {
    let mut t = Table::new(&["temperature_c", "dark_prob_model", "gates", "dark_counts", "dark_prob_mc"]);
    for (i, &temp) in TEMPERATURE_GRID.iter().enumerate() {
        let mut run = base_run(ctx.cfg, args.gates.max(1), streams::derive_seed(ctx.seed, i as u64));
        run.detector.temperature = temp;
        run.source.kind = SourceKind::CwDarkOnly;
        let model = run.detector.dark_probability()?;
        let (gates, counts) = if args.gates > 0 {
            let out = mc_engine::run_simulation(&run)?;
            (args.gates, out.summary.dark_avalanches)
        } else {
            (0, 0)
        };
        let mc = if gates > 0 { counts as f64 / gates as f64 } else { f64::NAN };
        t.push(vec![temp.into(), Cell::Sci(model), gates.into(), counts.into(), Cell::Sci(mc)]);
    }
    ctx.out.table("sweep_temp", &t)?;
    Ok(())
}

#[derive(Debug, Args, Serialize)]
pub struct TcspcArgs {
    /// Simulated gates (the default yields about 10⁶ detections at 0.1 photons per pulse).
    #[arg(long, default_value_t = 4_020_000_000)]
    pub gates: u64,
    #[arg(long, default_value_t = 4.0)]
    pub bin_ps: f64,
    /// Longest gate lag in the correlation histogram.
    #[arg(long, default_value_t = 200)]
    pub max_lag: usize,
    /// Turn the afterpulse model on regardless of the configuration.
    #[arg(long)]
    pub afterpulse: bool,
    /// Also write every detection record.
    #[arg(long)]
    pub records: bool,
}

pub fn tcspc(ctx: &mut Ctx, args: &TcspcArgs) -> Result<()> {
    let mut run = base_run(ctx.cfg, args.gates, ctx.seed);
    if args.afterpulse {
        run.detector.afterpulse.enabled = true;
    }
    let out = mc_engine::run_simulation(&run)?;
    let hist = tcspc_histogram(&out.records, run.source.trigger_rate, args.bin_ps * 1e-12)?;
    let fwhm = estimate_fwhm(&hist)?;
    let laser = run.source.laser_fwhm;
    let jitter = deconvolve_jitter(fwhm, laser).ok();

    let gate_period = run.detector.gate_period();
    let total = hist.window_sum(-0.5 * gate_period, 3.5 * gate_period);
    let tail = hist.window_sum(0.5 * gate_period, 3.5 * gate_period);
    let lags = inter_detection_correlation(&out.records, args.max_lag)?;

    ctx.out.table("tcspc_histogram", &histogram_table(&hist, "bin_start_ps", 1e12))?;
    let mut lag_table = Table::new(&["lag_gates", "count"]);
    for (i, &c) in lags.counts().iter().enumerate() {
        lag_table.push(vec![(i as u64 + 1).into(), c.into()]);
    }
    ctx.out.table("lag_histogram", &lag_table)?;
    let s = &out.summary;
    ctx.out.table(
        "tcspc_summary",
        &metrics_table(vec![
            ("gates", s.n_gates.into()),
            ("pulses", s.light_slots.into()),
            ("records", s.records.into()),
            ("accepted", s.accepted.into()),
            ("photon_avalanches", s.photon_avalanches.into()),
            ("dark_avalanches", s.dark_avalanches.into()),
            ("afterpulse_avalanches", s.afterpulse_avalanches.into()),
            ("tail_displaced", s.tail_displaced.into()),
            ("histogram_counts", hist.total().into()),
            ("fwhm_ps", (fwhm * 1e12).into()),
            ("laser_fwhm_ps", tidy(laser * 1e12).into()),
            ("detector_jitter_ps", jitter.map_or(f64::NAN, |j| j * 1e12).into()),
            ("subsequent_gate_fraction", (tail as f64 / total.max(1) as f64).into()),
        ]),
    )?;
    if args.records {
        let mut buf = Vec::new();
        write_records_csv(&mut buf, &out.records)?;
        ctx.out.raw("records.csv", &buf)?;
    }
    ctx.notes.push("TCSPC histogram: first detection per trigger cycle, all records (before hold-off)");
    Ok(())
}

fn link_notes(ctx: &mut Ctx, q: &QkdLinkConfig) {
    ctx.notes.push(match q.dead_time_model {
        qkd_budget::DeadTimeModel::NonParalyzable => "dead-time model: non-paralyzable",
        qkd_budget::DeadTimeModel::Paralyzable => "dead-time model: paralyzable",
    });
    ctx.notes.push(SECRET_RATE_LABEL);
    ctx.notes.push("COW decoy sequences and monitoring-line detections are not modelled");
}

#[derive(Debug, Args, Serialize)]
pub struct QkdArgs {
    /// Bits per Monte Carlo cross-check point (0 skips the cross-check).
    #[arg(long, default_value_t = 1_000_000)]
    pub mc_bits: u64,
    /// Largest fiber loss in the loss sweep.
    #[arg(long, default_value_t = 20.0)]
    pub max_loss_db: f64,
}

pub fn qkd(ctx: &mut Ctx, args: &QkdArgs) -> Result<()> {
    let mut at_detector = ctx.cfg.qkd.clone();
    at_detector.fiber_loss_db = 0.0;
    let vs_mu = qkd_budget::sweep(&at_detector, SweepAxis::MuSource, &MU_GRID)?;
    ctx.out.table("qkd_vs_mu", &qkd_table(&vs_mu))?;

    let losses = grid(0.0, args.max_loss_db, 1.0)?;
    let vs_loss = qkd_budget::sweep(&ctx.cfg.qkd, SweepAxis::FiberLossDb, &losses)?;
    ctx.out.table("qkd_vs_loss", &qkd_table(&vs_loss))?;

    if args.mc_bits > 0 {
        let mc = MU_GRID
            .iter()
            .enumerate()
            .map(|(i, &mu)| {
                let c = SweepAxis::MuSource.apply(&at_detector, mu);
                qkd_budget::evaluate_mc(&c, args.mc_bits, streams::derive_seed(ctx.seed, i as u64), mu)
            })
            .collect::<Result<Vec<_>, _>>()?;
        ctx.out.table("qkd_mc_vs_mu", &qkd_table(&mc))?;
    }
    let q = ctx.cfg.qkd.clone();
    link_notes(ctx, &q);
    Ok(())
}

#[derive(Debug, Args, Serialize)]
pub struct QkdTempArgs {
    /// Photons per bit at the detector.
    #[arg(long, default_value_t = 0.1)]
    pub mu_detector: f64,
    /// Bits per Monte Carlo cross-check point (0 skips the cross-check).
    #[arg(long, default_value_t = 1_000_000)]
    pub mc_bits: u64,
}

pub fn qkd_temp(ctx: &mut Ctx, args: &QkdTempArgs) -> Result<()> {
    let mut base = ctx.cfg.qkd.clone();
    base.fiber_loss_db = 0.0;
    base.mu_source = args.mu_detector;
    let rows = qkd_budget::sweep(&base, SweepAxis::Temperature, &TEMPERATURE_GRID)?;
    ctx.out.table("qkd_vs_temperature", &qkd_table(&rows))?;
    if args.mc_bits > 0 {
        let mc = TEMPERATURE_GRID
            .iter()
            .enumerate()
            .map(|(i, &t)| {
                let c = SweepAxis::Temperature.apply(&base, t);
                qkd_budget::evaluate_mc(&c, args.mc_bits, streams::derive_seed(ctx.seed, i as u64), t)
            })
            .collect::<Result<Vec<_>, _>>()?;
        ctx.out.table("qkd_mc_vs_temperature", &qkd_table(&mc))?;
    }
    link_notes(ctx, &base);
    Ok(())
}

#[derive(Debug, Args, Serialize)]
pub struct StabilityArgs {
    #[arg(long, default_value_t = 8)]
    pub segments: usize,
    #[arg(long, default_value_t = 10_000_000)]
    pub bits_per_segment: u64,
    /// Photons per bit at the detector; defaults to the configured link.
    #[arg(long)]
    pub mu_detector: Option<f64>,
}

pub fn stability(ctx: &mut Ctx, args: &StabilityArgs) -> Result<()> {
    let mut link = ctx.cfg.qkd.clone();
    if let Some(mu) = args.mu_detector {
        link.mu_source = mu;
        link.fiber_loss_db = 0.0;
    }
    let rows = qkd_budget::stability_run(&link, args.segments, args.bits_per_segment, ctx.seed)?;
    ctx.out.table("stability", &qkd_table(&rows))?;

    let seg_time = args.bits_per_segment as f64 / link.bit_rate;
    let counts: Vec<f64> = rows.iter().map(|r| r.raw_rate * seg_time).collect();
    let mean = counts.iter().sum::<f64>() / counts.len() as f64;
    let worst = counts
        .iter()
        .map(|c| (c - mean).abs() / mean.sqrt().max(1.0))
        .fold(0.0, f64::max);
    let mean_qber = rows.iter().map(|r| r.qber).sum::<f64>() / rows.len() as f64;
    ctx.out.table(
        "stability_summary",
        &metrics_table(vec![
            ("segments", (rows.len() as u64).into()),
            ("segment_duration_s", seg_time.into()),
            ("mean_counts_per_segment", mean.into()),
            ("max_deviation_sigma", worst.into()),
            ("mean_qber", mean_qber.into()),
        ]),
    )?;
    ctx.notes.push("stability run: constant parameters, independent sub-seed per segment; axis_value is elapsed link time in seconds");
    link_notes(ctx, &link);
    Ok(())
}
