use super::*;
use crate::detector_model::TemperatureDarkLaw;

fn dark_only(p: f64, n_gates: u64, seed: u64) -> RunConfig {
    let mut cfg = RunConfig {
        n_gates,
        master_seed: seed,
        ..Default::default()
    };
    cfg.detector.dark_law = TemperatureDarkLaw::flat(p).unwrap();
    cfg.source.kind = SourceKind::CwDarkOnly;
    cfg
}

fn pulsed(mu: f64, n_gates: u64, seed: u64) -> RunConfig {
    let mut cfg = RunConfig {
        n_gates,
        master_seed: seed,
        ..Default::default()
    };
    cfg.source.mean_photons = mu;
    cfg
}

fn within_sigma(observed: u64, expected: f64, k: f64) -> bool {
    (observed as f64 - expected).abs() <= k * expected.sqrt().max(1.0)
}

#[test]
fn identical_seed_identical_records() {
    let cfg = pulsed(0.5, 3 * CHUNK_GATES + 17, 9);
    let a = run_simulation(&cfg).unwrap();
    let b = run_simulation(&cfg).unwrap();
    assert_eq!(a.records, b.records);
    assert_eq!(a.summary, b.summary);
    let c = run_simulation(&RunConfig { master_seed: 10, ..cfg }).unwrap();
    assert_ne!(a.records, c.records);
}

#[test]
fn thread_count_does_not_change_output() {
    let mut cfg = pulsed(0.5, 6 * CHUNK_GATES, 3);
    cfg.detector.afterpulse.enabled = true;
    let run_with = |threads| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| run_simulation(&cfg).unwrap())
    };
    let one = run_with(1);
    let four = run_with(4);
    assert_eq!(one.records, four.records);
    assert_eq!(one.summary, four.summary);
}

#[test]
fn dark_count_rate_is_binomial() {
    let p = 1e-3;
    let n = 10_000_000;
    let out = run_simulation(&dark_only(p, n, 1)).unwrap();
    assert!(within_sigma(out.summary.dark_avalanches, p * n as f64, 4.0));
    assert_eq!(out.summary.photon_avalanches, 0);
    assert_eq!(out.summary.light_slots, 0);
}

#[test]
fn pulsed_click_probability_follows_poisson_efficiency() {
    let mut cfg = pulsed(0.5, 40_000_000, 2);
    cfg.detector.dark_law = TemperatureDarkLaw::flat(1e-12).unwrap();
    let out = run_simulation(&cfg).unwrap();
    assert_eq!(out.summary.light_slots, 1_000_000);
    let eta = cfg.detector.peak_efficiency();
    let expected = 1e6 * (1.0 - (-eta * 0.5f64).exp());
    assert!(within_sigma(out.summary.photon_avalanches, expected, 4.0));
    // Light only ever lands on trigger gates.
    assert!(out
        .records
        .iter()
        .filter(|r| r.origin == Origin::Photon)
        .all(|r| r.gate_index % 40 == 0));
}

#[test]
fn tail_fraction_matches_jitter_model() {
    let out = run_simulation(&dark_only(1e-2, 20_000_000, 4)).unwrap();
    let n = out.summary.records;
    let expected = 0.024 * n as f64;
    assert!(within_sigma(out.summary.tail_displaced, expected, 4.0));
    for r in out.records.iter().filter(|r| r.origin == Origin::Tail) {
        let landing = (r.time / 800e-12).round() as u64;
        assert!((r.gate_index + 1..=r.gate_index + 3).contains(&landing));
    }
}

#[test]
fn timebin_wrong_bin_fraction_is_extinction() {
    let mut cfg = pulsed(1.0, 20_000_000, 5);
    cfg.source.kind = SourceKind::CowPpm;
    cfg.source.extinction_db = 10.0;
    cfg.detector.dark_law = TemperatureDarkLaw::flat(1e-12).unwrap();
    cfg.detector.jitter.tail_fraction = 0.0;
    let out = run_simulation(&cfg).unwrap();
    assert_eq!(out.summary.light_slots, 10_000_000);
    let (mut right, mut wrong) = (0u64, 0u64);
    for r in &out.records {
        let bit = timebin_bit(cfg.master_seed, r.gate_index / 2) as u64;
        if r.gate_index % 2 == bit {
            right += 1;
        } else {
            wrong += 1;
        }
    }
    let eta = cfg.detector.peak_efficiency();
    let leak = cfg.source.extinction_fraction();
    let p_off = 1.0 - (-eta * leak).exp();
    assert!(within_sigma(wrong, 1e7 * p_off, 4.0), "wrong {wrong} right {right}");
    // Bits are balanced.
    let ones = (0..100_000).filter(|&b| timebin_bit(5, b) == 1).count();
    assert!((ones as i64 - 50_000).abs() < 4 * 158);
}

#[test]
fn afterpulse_yield_matches_branching_ratio() {
    let mut cfg = dark_only(2e-4, 400_000_000, 6);
    cfg.detector.afterpulse.enabled = true;
    let out = run_simulation(&cfg).unwrap();
    let b = cfg.detector.afterpulse.branching_ratio(800e-12);
    let primaries = out.summary.dark_avalanches as f64;
    // Each primary seeds a cascade of mean b / (1 − b); collisions with
    // primaries are rare at this rate.
    let expected = primaries * b / (1.0 - b);
    let got = out.summary.afterpulse_avalanches as f64;
    assert!((got - expected).abs() < 0.05 * expected, "got {got}, expected {expected}");
    // Afterpulses sit within a few lifetimes of a preceding avalanche.
    let mut last = None;
    for r in &out.records {
        if r.origin == Origin::Afterpulse {
            let g: u64 = last.expect("afterpulse before any avalanche");
            assert!(r.gate_index > g && r.gate_index - g < 50_000);
        }
        last = Some(r.gate_index);
    }
}

#[test]
fn afterpulses_off_means_none() {
    let out = run_simulation(&dark_only(1e-3, 5_000_000, 7)).unwrap();
    assert_eq!(out.summary.afterpulse_avalanches, 0);
    assert!(out.records.iter().all(|r| r.origin != Origin::Afterpulse));
}

#[test]
fn summary_partitions_records() {
    let mut cfg = pulsed(0.8, 8_000_000, 8);
    cfg.detector.dark_law = TemperatureDarkLaw::flat(1e-4).unwrap();
    cfg.detector.afterpulse.enabled = true;
    let out = run_simulation(&cfg).unwrap();
    let s = &out.summary;
    assert_eq!(s.records as usize, out.records.len());
    assert_eq!(s.photon_avalanches + s.dark_avalanches + s.afterpulse_avalanches, s.records);
    assert_eq!(
        s.accepted,
        s.accepted_photon + s.accepted_dark + s.accepted_afterpulse + s.accepted_tail
    );
    assert!(out.records.windows(2).all(|w| w[0].gate_index < w[1].gate_index));
}

#[test]
fn accepted_records_respect_holdoff() {
    let out = run_simulation(&dark_only(2e-2, 2_000_000, 11)).unwrap();
    let acc: Vec<u64> = out.records.iter().filter(|r| r.accepted).map(|r| r.gate_index).collect();
    assert!(acc.windows(2).all(|w| w[1] - w[0] > 10));
    assert!(out.summary.accepted < out.summary.records);
}

#[test]
fn accepted_dark_lags_are_geometric() {
    let p = 1e-3;
    let out = run_simulation(&dark_only(p, 200_000_000, 12)).unwrap();
    let t = short_lag_test(&out.records, p, 10, 2000, 10).unwrap();
    assert!(t.pairs > 150_000);
    assert!(t.passes(0.001), "{t:?}");
}

#[test]
fn tcspc_width_reflects_jitter_and_laser() {
    let mut cfg = pulsed(0.5, 400_000_000, 13);
    cfg.detector.dark_law = TemperatureDarkLaw::flat(1e-12).unwrap();
    let out = run_simulation(&cfg).unwrap();
    let h = tcspc_histogram(&out.records, 31.25e6, 4e-12).unwrap();
    let fwhm = estimate_fwhm(&h).unwrap();
    let want = (70e-12f64.powi(2) + 30e-12f64.powi(2)).sqrt();
    assert!((fwhm - want).abs() < 5e-12, "fwhm {fwhm:e}");
    let detector = deconvolve_jitter(fwhm, 30e-12).unwrap();
    assert!((detector - 70e-12).abs() < 5e-12);
}

#[test]
fn rejects_bad_configs() {
    let mut cfg = RunConfig {
        n_gates: 0,
        ..Default::default()
    };
    assert!(run_simulation(&cfg).is_err());
    cfg.n_gates = 10;
    cfg.source.trigger_rate = 30e6;
    assert!(run_simulation(&cfg).is_err());
    cfg.source.trigger_rate = 31.25e6;
    cfg.detector.temperature = 80.0;
    assert!(run_simulation(&cfg).unwrap_err().is_model_range());
}

#[test]
fn geometric_skip_moments() {
    let mut rng = streams::stream(1, 0);
    let p = 0.01;
    let n = 200_000;
    let draws: Vec<u64> = (0..n).map(|_| geometric_skip(&mut rng, p)).collect();
    let mean = draws.iter().sum::<u64>() as f64 / n as f64;
    let want = (1.0 - p) / p;
    let sd = ((1.0 - p) / (p * p)).sqrt() / (n as f64).sqrt();
    assert!((mean - want).abs() < 4.0 * sd, "{mean}");
    let zeros = draws.iter().filter(|&&k| k == 0).count() as f64 / n as f64;
    assert!((zeros - p).abs() < 4.0 * (p * (1.0 - p) / n as f64).sqrt());
    assert_eq!(geometric_skip(&mut rng, 1.0), 0);
    assert!(geometric_skip(&mut rng, 1e-200) > 1u64 << 60);
}

#[test]
fn zero_light_and_dark_gives_no_records() {
    let mut cfg = dark_only(1e-300, 10_000_000, 1);
    cfg.source.kind = SourceKind::Pulsed;
    cfg.source.mean_photons = 0.0;
    assert!(run_simulation(&cfg).unwrap().records.is_empty());
}
