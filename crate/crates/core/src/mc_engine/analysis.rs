//! Post-processing of detection records: TCSPC timing histograms and
//! inter-detection lag statistics.

use statrs::distribution::{ChiSquared, ContinuousCDF};

use super::{DetectionRecord, Histogram};
use crate::error::{Error, Result};

/// Start-stop timing histogram against the laser trigger, with the default
/// lead of one sixteenth of a trigger period before each trigger.
pub fn tcspc_histogram(records: &[DetectionRecord], trigger_rate: f64, bin_width: f64) -> Result<Histogram> {
    if !(trigger_rate > 0.0) {
        return Err(Error::invalid("trigger_rate", "must be positive"));
    }
    tcspc_histogram_with_lead(records, trigger_rate, bin_width, 1.0 / (16.0 * trigger_rate))
}

/// Each trigger cycle spans `[k·T − lead, (k+1)·T − lead)`; only the first
/// detection in a cycle stops the clock. The histogram axis is time after the
/// trigger, starting at `−lead`.
pub fn tcspc_histogram_with_lead(
    records: &[DetectionRecord],
    trigger_rate: f64,
    bin_width: f64,
    lead: f64,
) -> Result<Histogram> {
    if !(trigger_rate > 0.0 && trigger_rate.is_finite()) {
        return Err(Error::invalid("trigger_rate", "must be positive"));
    }
    let period = 1.0 / trigger_rate;
    if !(lead >= 0.0 && lead < period) {
        return Err(Error::invalid("lead", "must lie in [0, trigger period)"));
    }
    if !(bin_width > 0.0 && bin_width < period) {
        return Err(Error::invalid("bin_width", "must be positive and below the trigger period"));
    }
    let bins = (period / bin_width).ceil() as usize;
    let mut hist = Histogram::new(-lead, bin_width, bins)?;

    let mut stops: Vec<(i64, f64)> = records
        .iter()
        .map(|r| {
            let cycle = ((r.time + lead) / period).floor();
            (cycle as i64, r.time - cycle * period)
        })
        .collect();
    stops.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
    stops.dedup_by_key(|s| s.0);
    for (_, dt) in stops {
        hist.add(dt);
    }
    Ok(hist)
}

/// Full width at half maximum of the highest peak, by linear interpolation
/// between bin centres. Bins outside the histogram count as empty, so a lone
/// populated bin yields one bin width.
pub fn estimate_fwhm(hist: &Histogram) -> Result<f64> {
    let counts = hist.counts();
    let (peak, &max) = counts
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0)))
        .ok_or(Error::NoPeak("histogram is empty"))?;
    if max == 0 {
        return Err(Error::NoPeak("histogram has no counts"));
    }
    if counts.iter().all(|&c| c == max) && counts.len() > 1 {
        return Err(Error::NoPeak("histogram is flat"));
    }
    let half = max as f64 / 2.0;
    let at = |i: isize| -> f64 {
        if i < 0 || i as usize >= counts.len() {
            0.0
        } else {
            counts[i as usize] as f64
        }
    };
    let center = |i: isize| hist.origin() + (i as f64 + 0.5) * hist.bin_width();

    let mut l = peak as isize;
    while at(l - 1) >= half {
        l -= 1;
    }
    let (lo, hi) = (at(l - 1), at(l));
    let left = center(l - 1) + (half - lo) / (hi - lo) * hist.bin_width();

    let mut r = peak as isize;
    while at(r + 1) >= half {
        r += 1;
    }
    let (hi, lo) = (at(r), at(r + 1));
    let right = center(r) + (hi - half) / (hi - lo) * hist.bin_width();
    Ok(right - left)
}

/// Removes a Gaussian system contribution from a measured width in
/// quadrature.
pub fn deconvolve_jitter(measured: f64, system: f64) -> Result<f64> {
    if !(measured >= 0.0 && system >= 0.0) {
        return Err(Error::invalid("fwhm", "widths must be non-negative"));
    }
    if measured < system {
        return Err(Error::invalid(
            "system",
            format!("system width {system:e} exceeds measured width {measured:e}"),
        ));
    }
    Ok((measured * measured - system * system).sqrt())
}

fn accepted_lags(records: &[DetectionRecord]) -> impl Iterator<Item = u64> + '_ {
    let mut last = None;
    records.iter().filter(|r| r.accepted).filter_map(move |r| {
        let lag = last.map(|g| r.gate_index - g);
        last = Some(r.gate_index);
        lag
    })
}

/// Histogram of gate lags between consecutive accepted detections; bin
/// `k − 1` holds lag `k`. Lags above `max_lag` are not counted.
pub fn inter_detection_correlation(records: &[DetectionRecord], max_lag: usize) -> Result<Histogram> {
    let mut hist = Histogram::new(0.5, 1.0, max_lag)?;
    for lag in accepted_lags(records) {
        if lag as usize <= max_lag {
            hist.add_to_bin(lag as usize - 1, 1);
        }
    }
    Ok(hist)
}

/// Lag distribution of an accepted Bernoulli(p) stream under an
/// accepted-anchored hold-off of `holdoff` gates: `P(L = holdoff + j) =
/// p (1 − p)^(j − 1)` for `j ≥ 1`. Entry `k − 1` is `P(L = k)`.
pub fn geometric_lag_probabilities(p: f64, holdoff: u64, max_lag: usize) -> Vec<f64> {
    (1..=max_lag as u64)
        .map(|k| {
            if k <= holdoff {
                0.0
            } else {
                p * (1.0 - p).powi((k - holdoff - 1) as i32)
            }
        })
        .collect()
}

/// Pearson goodness-of-fit of the short-lag structure against the renewal
/// baseline.
#[derive(Debug, Clone, PartialEq)]
pub struct LagTest {
    pub pairs: u64,
    /// `bins` equal groups covering lags `holdoff + 1 ..= holdoff + window`,
    /// followed by one overflow cell.
    pub observed: Vec<u64>,
    pub expected: Vec<f64>,
    pub chi2: f64,
    pub dof: usize,
    pub p_value: f64,
}

impl LagTest {
    pub fn passes(&self, alpha: f64) -> bool {
        self.p_value >= alpha
    }
}

/// Compares consecutive accepted lags with the geometric baseline for a
/// known per-gate probability `p`. Because `p` is supplied rather than
/// fitted, the statistic has `bins` degrees of freedom.
pub fn short_lag_test(
    records: &[DetectionRecord],
    p: f64,
    holdoff: u64,
    window: u64,
    bins: usize,
) -> Result<LagTest> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::invalid("p", "must lie in (0, 1)"));
    }
    if bins == 0 || window == 0 || !window.is_multiple_of(bins as u64) {
        return Err(Error::invalid("bins", format!("{bins} groups must evenly divide a window of {window}")));
    }
    let width = window / bins as u64;
    let mut observed = vec![0u64; bins + 1];
    let mut pairs = 0u64;
    for lag in accepted_lags(records) {
        pairs += 1;
        let cell = if lag <= holdoff {
            // Cannot occur under the baseline; lump with the first cell so it
            // is penalised rather than silently dropped.
            0
        } else {
            (((lag - holdoff - 1) / width) as usize).min(bins)
        };
        observed[cell] += 1;
    }
    if pairs == 0 {
        return Err(Error::invalid("records", "no consecutive accepted pairs"));
    }
    let q = 1.0 - p;
    let mut expected: Vec<f64> = (0..bins)
        .map(|b| {
            let j0 = b as f64 * width as f64;
            // P(j0 < J ≤ j0 + width) for J ~ Geom(p) on {1, 2, ...}.
            pairs as f64 * (q.powf(j0) - q.powf(j0 + width as f64))
        })
        .collect();
    expected.push(pairs as f64 * q.powf(window as f64));

    let chi2 = observed
        .iter()
        .zip(&expected)
        .map(|(&o, &e)| (o as f64 - e).powi(2) / e)
        .sum::<f64>();
    let dist = ChiSquared::new(bins as f64).expect("positive dof");
    Ok(LagTest {
        pairs,
        observed,
        expected,
        chi2,
        dof: bins,
        p_value: dist.sf(chi2),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mc_engine::Origin;

    fn rec(gate: u64, time: f64) -> DetectionRecord {
        DetectionRecord {
            gate_index: gate,
            time,
            origin: Origin::Photon,
            accepted: true,
        }
    }

    #[test]
    fn fwhm_of_single_bin_spike_is_bin_width() {
        let h = Histogram::from_counts(0.0, 4e-12, vec![0, 0, 10, 0, 0]).unwrap();
        assert!((estimate_fwhm(&h).unwrap() - 4e-12).abs() < 1e-24);
    }

    #[test]
    fn fwhm_of_triangle() {
        // Triangle of base 8 bins peaking at 4: width at half max is 4 bins.
        let h = Histogram::from_counts(0.0, 1.0, vec![0, 1, 2, 3, 4, 3, 2, 1, 0]).unwrap();
        assert!((estimate_fwhm(&h).unwrap() - 4.0).abs() < 1e-12);
    }

    #[test]
    fn fwhm_of_sampled_gaussian() {
        let sigma = 30.0;
        let counts = (0..400)
            .map(|i| {
                let x = i as f64 + 0.5 - 200.0;
                (1e6 * (-0.5 * (x / sigma).powi(2)).exp()).round() as u64
            })
            .collect();
        let h = Histogram::from_counts(0.0, 1.0, counts).unwrap();
        let want = sigma * (8.0 * 2f64.ln()).sqrt();
        assert!((estimate_fwhm(&h).unwrap() - want).abs() < 0.05);
    }

    #[test]
    fn fwhm_errors() {
        assert!(estimate_fwhm(&Histogram::new(0.0, 1.0, 5).unwrap()).is_err());
        let flat = Histogram::from_counts(0.0, 1.0, vec![3, 3, 3]).unwrap();
        assert!(estimate_fwhm(&flat).is_err());
    }

    #[test]
    fn quadrature_deconvolution() {
        assert!((deconvolve_jitter(76.0, 30.0).unwrap() - (76f64 * 76.0 - 900.0).sqrt()).abs() < 1e-12);
        assert!((deconvolve_jitter(50e-12, 30e-12).unwrap() - 40e-12).abs() < 1e-24);
        assert!(deconvolve_jitter(20.0, 30.0).is_err());
    }

    #[test]
    fn tcspc_uses_first_stop_per_cycle() {
        let period = 32e-9;
        let recs = [rec(0, 10e-12), rec(0, 500e-12), rec(40, period - 22e-12), rec(80, 2.0 * period + 1.002e-9)];
        let h = tcspc_histogram(&recs, 1.0 / period, 4e-12).unwrap();
        assert_eq!(h.total(), 3);
        assert_eq!(h.origin(), -period / 16.0);
        assert_eq!(h.counts()[h.bin_of(10e-12).unwrap()], 1);
        assert_eq!(h.counts()[h.bin_of(-22e-12).unwrap()], 1);
        assert_eq!(h.counts()[h.bin_of(1.002e-9).unwrap()], 1);
    }

    #[test]
    fn lag_histogram_counts_accepted_pairs() {
        let mut recs = vec![rec(0, 0.0), rec(11, 0.0), rec(15, 0.0), rec(30, 0.0)];
        recs[2].accepted = false;
        let h = inter_detection_correlation(&recs, 20).unwrap();
        assert_eq!(h.counts()[10], 1);
        assert_eq!(h.counts()[18], 1);
        assert_eq!(h.total(), 2);
    }

    #[test]
    fn geometric_baseline_sums_to_one() {
        let probs = geometric_lag_probabilities(0.01, 10, 10_000);
        assert_eq!(probs[9], 0.0);
        assert!((probs[10] - 0.01).abs() < 1e-15);
        let s: f64 = probs.iter().sum();
        assert!((s - 1.0).abs() < 1e-12);
    }

    #[test]
    fn lag_test_accepts_exact_expectation_and_rejects_clumping() {
        let p: f64 = 0.05;
        let h = 10;
        // Build a stream whose lags follow the baseline quantiles closely.
        let n = 20_000u64;
        let mut gate = 0;
        let mut recs = vec![rec(0, 0.0)];
        for i in 0..n {
            let u = (i as f64 + 0.5) / n as f64;
            let j = ((1.0 - u).ln() / (1.0 - p).ln()).ceil().max(1.0) as u64;
            gate += h + j;
            recs.push(rec(gate, 0.0));
        }
        let t = short_lag_test(&recs, p, h, 100, 10).unwrap();
        assert_eq!(t.pairs, n);
        assert!(t.passes(0.01), "{t:?}");

        let clumped: Vec<_> = (0..5000u64).map(|i| rec(i * (h + 1), 0.0)).collect();
        assert!(!short_lag_test(&clumped, p, h, 100, 10).unwrap().passes(0.01));
        assert!(short_lag_test(&clumped, p, h, 100, 7).is_err());
    }
}
