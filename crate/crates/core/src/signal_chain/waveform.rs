use std::io::{BufRead, Write};

use crate::error::{Error, Result};

/// Uniformly sampled voltage trace.
///
/// Stages that work in the frequency domain treat the trace as one period of a
/// periodic signal, so traces meant for filtering should span an integer
/// number of gate cycles.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledWaveform {
    samples: Vec<f64>,
    dt: f64,
    t0: f64,
}

/// Sampling grid without data; used to place synthesized pulses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    pub t0: f64,
    pub dt: f64,
    pub len: usize,
}

impl TimeGrid {
    pub fn new(t0: f64, dt: f64, len: usize) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::invalid("dt", format!("must be positive and finite, got {dt}")));
        }
        if len == 0 {
            return Err(Error::invalid("len", "a waveform needs at least one sample"));
        }
        if !t0.is_finite() {
            return Err(Error::invalid("t0", "must be finite"));
        }
        Ok(Self { t0, dt, len })
    }

    pub fn time(&self, i: usize) -> f64 {
        self.t0 + i as f64 * self.dt
    }

    /// Time of the last sample.
    pub fn end(&self) -> f64 {
        self.time(self.len - 1)
    }
}

impl SampledWaveform {
    pub fn new(samples: Vec<f64>, dt: f64, t0: f64) -> Result<Self> {
        TimeGrid::new(t0, dt, samples.len())?;
        if let Some(i) = samples.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid("samples", format!("sample {i} is not finite")));
        }
        Ok(Self { samples, dt, t0 })
    }

    pub fn zeros(grid: TimeGrid) -> Self {
        Self {
            samples: vec![0.0; grid.len],
            dt: grid.dt,
            t0: grid.t0,
        }
    }

    /// Builds a waveform from a closure evaluated at every sample time.
    pub fn from_fn(grid: TimeGrid, f: impl Fn(f64) -> f64) -> Result<Self> {
        let samples = (0..grid.len).map(|i| f(grid.time(i))).collect();
        Self::new(samples, grid.dt, grid.t0)
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn grid(&self) -> TimeGrid {
        TimeGrid {
            t0: self.t0,
            dt: self.dt,
            len: self.samples.len(),
        }
    }

    pub fn sample_rate(&self) -> f64 {
        1.0 / self.dt
    }

    pub fn duration(&self) -> f64 {
        self.dt * self.samples.len() as f64
    }

    pub fn time(&self, i: usize) -> f64 {
        self.t0 + i as f64 * self.dt
    }

    pub fn shifted(&self, delta_t: f64) -> Self {
        Self {
            samples: self.samples.clone(),
            dt: self.dt,
            t0: self.t0 + delta_t,
        }
    }

    pub fn scaled(&self, gain: f64) -> Self {
        Self {
            samples: self.samples.iter().map(|v| v * gain).collect(),
            dt: self.dt,
            t0: self.t0,
        }
    }

    /// Sample-wise sum. Both traces must share the same grid.
    pub fn add(&self, other: &SampledWaveform) -> Result<Self> {
        self.check_same_grid(other)?;
        let samples = self
            .samples
            .iter()
            .zip(&other.samples)
            .map(|(a, b)| a + b)
            .collect();
        Ok(Self {
            samples,
            dt: self.dt,
            t0: self.t0,
        })
    }

    pub fn check_same_grid(&self, other: &SampledWaveform) -> Result<()> {
        if self.len() != other.len()
            || (self.dt - other.dt).abs() > 1e-12 * self.dt
            || (self.t0 - other.t0).abs() > 1e-6 * self.dt
        {
            return Err(Error::invalid(
                "waveform",
                "traces are sampled on different grids",
            ));
        }
        Ok(())
    }

    pub fn mean_square(&self) -> f64 {
        self.samples.iter().map(|v| v * v).sum::<f64>() / self.len() as f64
    }

    pub fn min(&self) -> f64 {
        self.samples.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.samples.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn peak_to_peak(&self) -> f64 {
        self.max() - self.min()
    }

    pub(crate) fn with_samples(&self, samples: Vec<f64>) -> Self {
        debug_assert_eq!(samples.len(), self.samples.len());
        Self {
            samples,
            dt: self.dt,
            t0: self.t0,
        }
    }

    /// Writes the two-column CSV form:
    ///
    /// ```text
    /// # dt=2.5e-11 n=320
    /// time_s,volts
    /// 0e0,0e0
    /// ```
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "# dt={:e} n={}", self.dt, self.len())?;
        writeln!(out, "time_s,volts")?;
        for (i, v) in self.samples.iter().enumerate() {
            writeln!(out, "{:e},{:e}", self.time(i), v)?;
        }
        Ok(())
    }

    /// Parses the format produced by [`SampledWaveform::write_csv`]. The
    /// column-name line is optional.
    pub fn read_csv<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("empty waveform file".into()))??;
        let (dt, n) = parse_header(&header)?;

        let mut samples = Vec::with_capacity(n);
        let mut t0 = None;
        for (lineno, line) in lines.enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if line.eq_ignore_ascii_case("time_s,volts") {
                continue;
            }
            let (t, v) = line.split_once(',').ok_or_else(|| {
                Error::Parse(format!("line {}: expected `time_s,volts`", lineno + 2))
            })?;
            let t: f64 = parse_num(t, lineno + 2)?;
            let v: f64 = parse_num(v, lineno + 2)?;
            t0.get_or_insert(t);
            samples.push(v);
        }
        if samples.len() != n {
            return Err(Error::Parse(format!(
                "header announces {n} samples but {} were found",
                samples.len()
            )));
        }
        Self::new(samples, dt, t0.unwrap_or(0.0))
    }
}

fn parse_num(s: &str, line: usize) -> Result<f64> {
    s.trim()
        .parse()
        .map_err(|_| Error::Parse(format!("line {line}: `{}` is not a number", s.trim())))
}

fn parse_header(line: &str) -> Result<(f64, usize)> {
    let body = line
        .trim()
        .strip_prefix('#')
        .ok_or_else(|| Error::Parse("missing `# dt=<sec> n=<count>` header".into()))?;
    let mut dt = None;
    let mut n = None;
    for field in body.split_whitespace() {
        if let Some(v) = field.strip_prefix("dt=") {
            dt = Some(v.parse::<f64>().map_err(|_| Error::Parse(format!("bad dt `{v}`")))?);
        } else if let Some(v) = field.strip_prefix("n=") {
            n = Some(v.parse::<usize>().map_err(|_| Error::Parse(format!("bad n `{v}`")))?);
        }
    }
    match (dt, n) {
        (Some(dt), Some(n)) => Ok((dt, n)),
        _ => Err(Error::Parse(format!("incomplete header `{line}`"))),
    }
}
