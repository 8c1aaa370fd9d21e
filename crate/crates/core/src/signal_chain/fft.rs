use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

pub(crate) fn forward(samples: &[f64]) -> Vec<Complex64> {
    let mut buf: Vec<Complex64> = samples.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(buf.len()).process(&mut buf);
    buf
}

/// Inverse transform returning the real part, normalized by 1/N.
pub(crate) fn inverse_real(mut spectrum: Vec<Complex64>) -> Vec<f64> {
    let n = spectrum.len();
    FftPlanner::new().plan_fft_inverse(n).process(&mut spectrum);
    let scale = 1.0 / n as f64;
    spectrum.into_iter().map(|c| c.re * scale).collect()
}

/// Signed frequency of DFT bin `k` for an `n`-point transform at spacing `dt`.
pub(crate) fn bin_frequency(k: usize, n: usize, dt: f64) -> f64 {
    let k = if k <= n / 2 { k as f64 } else { k as f64 - n as f64 };
    k / (n as f64 * dt)
}
