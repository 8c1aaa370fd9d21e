use std::io::Write;

use crate::error::{Error, Result};

/// Uniform-bin counting histogram. Bin `i` covers
/// `[origin + i·bin_width, origin + (i+1)·bin_width)`. Units are up to the
/// caller: seconds for TCSPC, gates for lag histograms.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    bin_width: f64,
    origin: f64,
    counts: Vec<u64>,
}

impl Histogram {
    pub fn new(origin: f64, bin_width: f64, bins: usize) -> Result<Self> {
        if !(bin_width > 0.0 && bin_width.is_finite()) {
            return Err(Error::invalid("bin_width", format!("must be positive, got {bin_width}")));
        }
        if !origin.is_finite() {
            return Err(Error::invalid("origin", "must be finite"));
        }
        if bins == 0 {
            return Err(Error::invalid("bins", "need at least one bin"));
        }
        Ok(Self {
            bin_width,
            origin,
            counts: vec![0; bins],
        })
    }

    pub fn from_counts(origin: f64, bin_width: f64, counts: Vec<u64>) -> Result<Self> {
        let mut h = Self::new(origin, bin_width, counts.len())?;
        h.counts = counts;
        Ok(h)
    }

    pub fn bin_width(&self) -> f64 {
        self.bin_width
    }

    pub fn origin(&self) -> f64 {
        self.origin
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn bin_start(&self, i: usize) -> f64 {
        self.origin + i as f64 * self.bin_width
    }

    pub fn bin_center(&self, i: usize) -> f64 {
        self.origin + (i as f64 + 0.5) * self.bin_width
    }

    pub fn end(&self) -> f64 {
        self.bin_start(self.counts.len())
    }

    pub fn bin_of(&self, x: f64) -> Option<usize> {
        let i = ((x - self.origin) / self.bin_width).floor();
        (i >= 0.0 && (i as usize) < self.counts.len()).then_some(i as usize)
    }

    /// Counts `x`; returns false when it falls outside the histogram.
    pub fn add(&mut self, x: f64) -> bool {
        match self.bin_of(x) {
            Some(i) => {
                self.counts[i] += 1;
                true
            }
            None => false,
        }
    }

    pub fn add_to_bin(&mut self, i: usize, n: u64) {
        self.counts[i] += n;
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Sum of bins whose centres lie in `[lo, hi)`.
    pub fn window_sum(&self, lo: f64, hi: f64) -> u64 {
        (0..self.counts.len())
            .filter(|&i| {
                let c = self.bin_center(i);
                c >= lo && c < hi
            })
            .map(|i| self.counts[i])
            .sum()
    }

    pub fn same_binning(&self, other: &Histogram) -> bool {
        self.counts.len() == other.counts.len()
            && self.bin_width == other.bin_width
            && self.origin == other.origin
    }

    /// Element-wise accumulation of a histogram with identical binning.
    pub fn merge(&mut self, other: &Histogram) -> Result<()> {
        if !self.same_binning(other) {
            return Err(Error::BinningMismatch(format!(
                "({}, {}, {}) vs ({}, {}, {})",
                self.origin,
                self.bin_width,
                self.len(),
                other.origin,
                other.bin_width,
                other.len()
            )));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        Ok(())
    }

    /// CSV with one row per bin. `scale` converts the bin start into the unit
    /// named in `x_header` (e.g. 1e12 for `bin_start_ps`).
    pub fn write_csv<W: Write>(&self, mut out: W, x_header: &str, scale: f64) -> Result<()> {
        writeln!(out, "{x_header},count")?;
        for (i, c) in self.counts.iter().enumerate() {
            writeln!(out, "{},{}", round_for_output(self.bin_start(i) * scale), c)?;
        }
        Ok(())
    }
}

/// Trims representation noise such as `3.9999999999999996` from values that
/// are meant to sit on a decimal grid.
pub(crate) fn round_for_output(x: f64) -> f64 {
    let r = (x * 1e6).round() / 1e6;
    if (r - x).abs() <= 1e-9 * x.abs().max(1.0) {
        r
    } else {
        x
    }
}
