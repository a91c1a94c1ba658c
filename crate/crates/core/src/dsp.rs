//! Measurement conditioning: noise injection, causal rolling mean, windowed
//! deltas and decimation. Every filter has a sample-at-a-time form with
//! bounded memory and a batch form built on it.

use std::collections::VecDeque;
use std::ops::Range;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::trace::Trace;

/// Adds zero-mean white Gaussian noise to `trace` so that the mean signal
/// power over `power_window` divided by the noise power equals
/// `10^(snr_db / 10)`. `seed` selects the realization and `stream` the
/// channel, so channels of one realization are independent.
/// `snr_db = +inf` returns the trace unchanged.
pub fn inject_wgn(
    trace: &Trace,
    snr_db: f64,
    seed: u64,
    stream: u64,
    power_window: Range<usize>,
) -> Result<Trace> {
    if trace.is_empty() {
        return Err(Error::Signal("cannot add noise to an empty trace".into()));
    }
    if snr_db == f64::INFINITY {
        return Ok(trace.clone());
    }
    if !snr_db.is_finite() {
        return Err(Error::invalid("snr_db", "must be finite or +inf"));
    }
    let window = power_window.start.min(trace.len())..power_window.end.min(trace.len());
    if window.is_empty() {
        return Err(Error::Signal(format!(
            "trace `{}`: empty signal-power window",
            trace.name
        )));
    }
    let part = &trace.samples[window];
    let power = part.iter().map(|x| x * x).sum::<f64>() / part.len() as f64;
    if !(power > 0.0) {
        return Err(Error::Signal(format!(
            "trace `{}` has zero power; a finite SNR is undefined",
            trace.name
        )));
    }
    let sigma = (power / 10f64.powf(snr_db / 10.0)).sqrt();
    let normal = Normal::new(0.0, sigma).map_err(|e| Error::Signal(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let samples = trace
        .samples
        .iter()
        .map(|x| x + normal.sample(&mut rng))
        .collect();
    Ok(trace.with_samples(&trace.name, samples))
}

/// Causal moving average; the first `window - 1` outputs average the
/// available prefix.
#[derive(Clone, Debug)]
pub struct RollingMean {
    window: usize,
    buffer: VecDeque<f64>,
    sum: f64,
}

impl RollingMean {
    pub fn new(window: usize) -> Result<Self> {
        if window < 1 {
            return Err(Error::invalid("rolling_window", "must be >= 1"));
        }
        Ok(RollingMean {
            window,
            buffer: VecDeque::with_capacity(window),
            sum: 0.0,
        })
    }

    pub fn push(&mut self, x: f64) -> f64 {
        if self.window == 1 {
            return x;
        }
        if self.buffer.len() == self.window {
            if let Some(old) = self.buffer.pop_front() {
                self.sum -= old;
            }
        }
        self.buffer.push_back(x);
        self.sum += x;
        self.sum / self.buffer.len() as f64
    }
}

/// `|x[k] - x[k - lag]|`, with `x[k - lag]` clamped to the first sample.
#[derive(Clone, Debug)]
pub struct WindowedDelta {
    lag: usize,
    buffer: VecDeque<f64>,
}

impl WindowedDelta {
    pub fn new(lag: usize) -> Result<Self> {
        if lag < 1 {
            return Err(Error::invalid("delta_window", "must span at least one sample"));
        }
        Ok(WindowedDelta {
            lag,
            buffer: VecDeque::with_capacity(lag + 1),
        })
    }

    /// Lag in samples for a window of `seconds` at step `dt`.
    pub fn lag_for(seconds: f64, dt: f64) -> Result<usize> {
        if !(seconds.is_finite() && dt > 0.0) || seconds < dt * (1.0 - 1e-9) {
            return Err(Error::invalid("delta_window", "must be at least one sample long"));
        }
        Ok((seconds / dt).round() as usize)
    }

    pub fn push(&mut self, x: f64) -> f64 {
        if self.buffer.len() == self.lag + 1 {
            self.buffer.pop_front();
        }
        self.buffer.push_back(x);
        (x - self.buffer[0]).abs()
    }
}

pub fn rolling_mean(trace: &Trace, window: usize) -> Result<Trace> {
    let mut f = RollingMean::new(window)?;
    let samples = trace.samples.iter().map(|&x| f.push(x)).collect();
    Ok(trace.with_samples(&trace.name, samples))
}

/// Absolute change of `trace` over `delta_window` seconds.
pub fn windowed_delta(trace: &Trace, delta_window: f64) -> Result<Trace> {
    let mut f = WindowedDelta::new(WindowedDelta::lag_for(delta_window, trace.dt)?)?;
    let samples = trace.samples.iter().map(|&x| f.push(x)).collect();
    Ok(trace.with_samples(&format!("delta_{}", trace.name), samples))
}

/// Backward-difference rate of change (unit per second), diagnostics only.
pub fn derivative(trace: &Trace) -> Trace {
    let mut samples = Vec::with_capacity(trace.len());
    samples.push(0.0);
    samples.extend(trace.samples.windows(2).map(|w| (w[1] - w[0]) / trace.dt));
    let mut out = trace.with_samples(&format!("d_{}", trace.name), samples);
    out.unit = format!("{}/s", trace.unit);
    out
}

/// Keeps every `factor`-th sample starting with the first.
pub fn decimate(trace: &Trace, factor: usize) -> Result<Trace> {
    if factor < 1 {
        return Err(Error::invalid("decimation", "must be >= 1"));
    }
    let samples: Vec<f64> = trace.samples.iter().step_by(factor).copied().collect();
    Trace::new(&trace.name, &trace.unit, trace.t0, trace.dt * factor as f64, samples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn tr(samples: Vec<f64>) -> Trace {
        Trace::new("x", "V", 0.0, 1e-6, samples).unwrap()
    }

    #[test]
    fn infinite_snr_is_identity() {
        let t = tr(vec![1.0, -2.0, 3.0]);
        assert_eq!(inject_wgn(&t, f64::INFINITY, 7, 0, 0..3).unwrap(), t);
    }

    #[test]
    fn zero_power_is_an_error() {
        let t = tr(vec![0.0; 10]);
        assert!(inject_wgn(&t, 30.0, 1, 0, 0..10).is_err());
        assert!(inject_wgn(&t, f64::NAN, 1, 0, 0..10).is_err());
    }

    #[test]
    fn noise_statistics() {
        let n = 1_000_000;
        let t = tr(vec![1.0; n]);
        let noisy = inject_wgn(&t, 20.0, 42, 0, 0..n).unwrap();
        let noise: Vec<f64> = noisy.samples.iter().map(|x| x - 1.0).collect();
        let mean = noise.iter().sum::<f64>() / n as f64;
        let var = noise.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
        let sigma = 0.1;
        assert!(mean.abs() < 4.0 * sigma / 1000.0, "{mean}");
        assert_abs_diff_eq!(var.sqrt(), sigma, epsilon = 1e-3);
    }

    #[test]
    fn noise_is_seeded() {
        let t = tr((0..100).map(|k| k as f64).collect());
        let a = inject_wgn(&t, 30.0, 5, 1, 0..100).unwrap();
        assert_eq!(a, inject_wgn(&t, 30.0, 5, 1, 0..100).unwrap());
        assert_ne!(a, inject_wgn(&t, 30.0, 6, 1, 0..100).unwrap());
        assert_ne!(a, inject_wgn(&t, 30.0, 5, 2, 0..100).unwrap());
    }

    #[test]
    fn rolling_mean_of_step() {
        let k = 60;
        let x: Vec<f64> = (0..150).map(|i| if i >= k { 1.0 } else { 0.0 }).collect();
        let y = rolling_mean(&tr(x), 50).unwrap();
        assert_abs_diff_eq!(y.samples[k + 48], 49.0 / 50.0, epsilon = 1e-12);
        assert_abs_diff_eq!(y.samples[k + 49], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(y.samples[k + 24], 25.0 / 50.0, epsilon = 1e-12);
        assert!(RollingMean::new(0).is_err());
    }

    #[test]
    fn rolling_mean_prefix() {
        let y = rolling_mean(&tr(vec![2.0, 4.0, 6.0, 8.0]), 3).unwrap();
        assert_eq!(y.samples, vec![2.0, 3.0, 4.0, 6.0]);
    }

    #[test]
    fn delta_of_ramp_is_constant() {
        let m = 3.0e6;
        let t = tr((0..2000).map(|k| m * k as f64 * 1e-6).collect());
        let d = windowed_delta(&t, 0.5e-3).unwrap();
        for v in &d.samples[500..] {
            assert_abs_diff_eq!(*v, m * 0.5e-3, epsilon = 1e-6);
        }
        assert_abs_diff_eq!(d.samples[100], m * 100e-6, epsilon = 1e-6);
    }

    #[test]
    fn delta_window_must_cover_a_sample() {
        let t = tr(vec![1.0; 10]);
        assert!(windowed_delta(&t, 0.5e-6).is_err());
        assert!(windowed_delta(&t, 1e-6).is_ok());
        assert!(WindowedDelta::new(0).is_err());
    }

    #[test]
    fn decimation_and_derivative() {
        let t = tr((0..10).map(|k| 2.0 * k as f64).collect());
        let d = decimate(&t, 3).unwrap();
        assert_eq!(d.samples, vec![0.0, 6.0, 12.0, 18.0]);
        assert_abs_diff_eq!(d.dt, 3e-6, epsilon = 1e-18);
        let r = derivative(&t);
        assert_abs_diff_eq!(r.samples[5], 2.0e6, epsilon = 1e-6);
        assert_eq!(r.unit, "V/s");
    }

    proptest! {
        #[test]
        fn window_one_is_identity(x in proptest::collection::vec(-1e6f64..1e6, 2..50)) {
            let t = tr(x.clone());
            prop_assert_eq!(rolling_mean(&t, 1).unwrap().samples, x);
        }

        #[test]
        fn constant_trace(c in -1e6f64..1e6, n in 2usize..200, w in 1usize..60) {
            let t = tr(vec![c; n]);
            for v in rolling_mean(&t, w).unwrap().samples {
                prop_assert!((v - c).abs() <= 1e-9 * c.abs().max(1.0));
            }
            for v in windowed_delta(&t, 5e-6).unwrap().samples {
                prop_assert_eq!(v, 0.0);
            }
        }

        #[test]
        fn mean_stays_within_bounds(x in proptest::collection::vec(-1e3f64..1e3, 2..100), w in 1usize..20) {
            let lo = x.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            for v in rolling_mean(&tr(x), w).unwrap().samples {
                prop_assert!(v >= lo - 1e-9 && v <= hi + 1e-9);
            }
        }
    }
}
