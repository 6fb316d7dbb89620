//! Sampled scalar time series with linear interpolation.

use super::ModelError;
use std::io::{BufRead, Write};
use std::path::Path;

/// A scalar signal sampled at strictly increasing times. Queries between
/// samples are linearly interpolated; queries outside the support are an
/// error.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    times: Vec<f64>,
    values: Vec<f64>,
}

impl TimeSeries {
    pub fn new(times: Vec<f64>, values: Vec<f64>) -> Result<Self, ModelError> {
        if times.len() != values.len() {
            return Err(ModelError::Dim { expected: times.len(), got: values.len() });
        }
        if times.is_empty() {
            return Err(ModelError::InvalidData("empty time series".into()));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(ModelError::InvalidData(
                "time series times must be strictly increasing".into(),
            ));
        }
        Ok(TimeSeries { times, values })
    }

    /// Uniformly sampled series starting at `t0` with spacing `dt`.
    pub fn uniform(t0: f64, dt: f64, values: Vec<f64>) -> Result<Self, ModelError> {
        let times = (0..values.len()).map(|k| t0 + k as f64 * dt).collect();
        TimeSeries::new(times, values)
    }

    pub fn support(&self) -> (f64, f64) {
        (self.times[0], *self.times.last().unwrap())
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Linear interpolation at `t`.
    pub fn at(&self, t: f64) -> Result<f64, ModelError> {
        let (lo, hi) = self.support();
        if t < lo || t > hi {
            return Err(ModelError::ExcitationOutOfRange { t, lo, hi });
        }
        match self.times.binary_search_by(|probe| probe.total_cmp(&t)) {
            Ok(i) => Ok(self.values[i]),
            Err(i) => {
                // t lies strictly between times[i-1] and times[i]
                let (t0, t1) = (self.times[i - 1], self.times[i]);
                let (v0, v1) = (self.values[i - 1], self.values[i]);
                let frac = (t - t0) / (t1 - t0);
                Ok(v0 + frac * (v1 - v0))
            }
        }
    }

    /// Read a `t,value` CSV with a single header row.
    pub fn read_csv(path: &Path) -> Result<Self, ModelError> {
        let file = std::fs::File::open(path)
            .map_err(|e| ModelError::InvalidData(format!("{}: {e}", path.display())))?;
        let reader = std::io::BufReader::new(file);
        let mut times = Vec::new();
        let mut values = Vec::new();
        for (lineno, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| ModelError::InvalidData(e.to_string()))?;
            if lineno == 0 || line.trim().is_empty() {
                continue;
            }
            let mut parts = line.split(',');
            let t = parts
                .next()
                .and_then(|s| s.trim().parse::<f64>().ok())
                .ok_or_else(|| {
                    ModelError::InvalidData(format!("line {}: bad time field", lineno + 1))
                })?;
            let v = parts
                .next()
                .and_then(|s| s.trim().parse::<f64>().ok())
                .ok_or_else(|| {
                    ModelError::InvalidData(format!("line {}: bad value field", lineno + 1))
                })?;
            times.push(t);
            values.push(v);
        }
        TimeSeries::new(times, values)
    }

    pub fn write_csv(&self, path: &Path) -> std::io::Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(out, "t,value")?;
        for (t, v) in self.times.iter().zip(&self.values) {
            writeln!(out, "{t},{v}")?;
        }
        Ok(())
    }
}
