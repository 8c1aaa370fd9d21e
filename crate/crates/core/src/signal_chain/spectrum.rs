use super::fft;
use super::SampledWaveform;

/// Power assigned to bins with no energy, in dB.
pub const POWER_FLOOR_DB: f64 = -300.0;

/// One-sided power spectrum in linear units (V²), from DC to Nyquist.
///
/// Normalized so the bins sum to the mean square of the samples: a sinusoid of
/// amplitude `A` centred on a bin reports `A²/2`, a DC level `c` reports `c²`.
pub fn power_spectrum_linear(w: &SampledWaveform) -> Vec<(f64, f64)> {
    let n = w.len();
    let spec = fft::forward(w.samples());
    let n2 = (n * n) as f64;
    (0..=n / 2)
        .map(|k| {
            let p = spec[k].norm_sqr() / n2;
            let mirrored = k != 0 && !(n.is_multiple_of(2) && k == n / 2);
            let f = k as f64 / (n as f64 * w.dt());
            (f, if mirrored { 2.0 * p } else { p })
        })
        .collect()
}

/// [`power_spectrum_linear`] in dB relative to 1 V², floored at
/// [`POWER_FLOOR_DB`].
pub fn power_spectrum(w: &SampledWaveform) -> Vec<(f64, f64)> {
    power_spectrum_linear(w)
        .into_iter()
        .map(|(f, p)| (f, to_db(p)))
        .collect()
}

pub fn to_db(p: f64) -> f64 {
    if p > 0.0 {
        (10.0 * p.log10()).max(POWER_FLOOR_DB)
    } else {
        POWER_FLOOR_DB
    }
}

/// Total linear power in bins with `lo <= f < hi`.
pub fn band_power(spectrum: &[(f64, f64)], lo: f64, hi: f64) -> f64 {
    spectrum
        .iter()
        .filter(|(f, _)| *f >= lo && *f < hi)
        .map(|(_, p)| p)
        .sum()
}
