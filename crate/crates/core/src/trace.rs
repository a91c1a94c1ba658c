//! Uniformly sampled waveforms and their CSV export.

use std::io::Write;
use std::ops::Range;

use crate::error::{Error, Result};

/// A uniformly sampled time series of one quantity.
#[derive(Clone, Debug, PartialEq)]
pub struct Trace {
    pub name: String,
    pub unit: String,
    /// Time of the first sample, second.
    pub t0: f64,
    /// Sample spacing, second.
    pub dt: f64,
    pub samples: Vec<f64>,
}

impl Trace {
    pub fn new(name: &str, unit: &str, t0: f64, dt: f64, samples: Vec<f64>) -> Result<Trace> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::Signal(format!("trace `{name}`: dt must be > 0")));
        }
        if samples.len() < 2 {
            return Err(Error::Signal(format!(
                "trace `{name}`: at least two samples required"
            )));
        }
        Ok(Trace {
            name: name.to_string(),
            unit: unit.to_string(),
            t0,
            dt,
            samples,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn time(&self, index: usize) -> f64 {
        self.t0 + index as f64 * self.dt
    }

    /// First sample index at or after time `t`, clamped to the trace.
    pub fn index_at(&self, t: f64) -> usize {
        let k = ((t - self.t0) / self.dt - 1e-9).ceil();
        (k.max(0.0) as usize).min(self.len())
    }

    /// Same metadata with new samples.
    pub fn with_samples(&self, name: &str, samples: Vec<f64>) -> Trace {
        Trace {
            name: name.to_string(),
            unit: self.unit.clone(),
            t0: self.t0,
            dt: self.dt,
            samples,
        }
    }

    pub fn peak_abs(&self) -> f64 {
        peak_abs(&self.samples)
    }

    /// Signed value of the largest-magnitude sample within `range`.
    pub fn dominant(&self, range: Range<usize>) -> f64 {
        dominant(&self.samples[range])
    }
}

pub fn peak_abs(x: &[f64]) -> f64 {
    x.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

/// Signed extremum of largest magnitude (first one on ties); 0 for empty input.
pub fn dominant(x: &[f64]) -> f64 {
    let mut best = 0.0f64;
    for &v in x {
        if v.abs() > best.abs() {
            best = v;
        }
    }
    best
}

/// Writes traces sharing one time base as CSV: `time_s` followed by one
/// `<name>_<unit>` column per trace.
pub fn write_csv<W: Write>(traces: &[&Trace], out: W) -> Result<()> {
    let first = traces
        .first()
        .ok_or_else(|| Error::Signal("no traces to export".into()))?;
    for t in traces {
        if t.len() != first.len() || t.dt != first.dt || t.t0 != first.t0 {
            return Err(Error::Signal(format!(
                "trace `{}` does not share the time base of `{}`",
                t.name, first.name
            )));
        }
    }
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["time_s".to_string()];
    header.extend(traces.iter().map(|t| format!("{}_{}", t.name, t.unit)));
    w.write_record(&header)?;
    for k in 0..first.len() {
        let mut row = Vec::with_capacity(traces.len() + 1);
        row.push(format!("{:e}", first.time(k)));
        row.extend(traces.iter().map(|t| format!("{:e}", t.samples[k])));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
