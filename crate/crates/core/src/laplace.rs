//! Numerical inverse Laplace transform by two independent methods.
//!
//! * Gaver-Stehfest: weighted sum of real-axis samples of `F`.
//! * Fixed Talbot (Abate-Valko): trapezoidal rule on a deformed Bromwich
//!   contour wrapping the negative real axis.
//!
//! Both are evaluated at every requested time; the relative discrepancy
//! between them is reported and checked against a tolerance.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::trace::Trace;

/// Method parameters and acceptance tolerance.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InversionSettings {
    /// Number of Stehfest terms (even).
    pub stehfest_terms: usize,
    /// Number of Talbot contour nodes.
    pub talbot_nodes: usize,
    /// Maximum discrepancy relative to the waveform peak.
    pub tolerance: f64,
}

impl Default for InversionSettings {
    fn default() -> Self {
        InversionSettings {
            stehfest_terms: 14,
            talbot_nodes: 32,
            tolerance: 5e-3,
        }
    }
}

/// Results of both methods on a time grid.
#[derive(Clone, Debug, PartialEq)]
pub struct InversionReport {
    pub t: Vec<f64>,
    pub stehfest: Vec<f64>,
    pub talbot: Vec<f64>,
    /// max |stehfest - talbot| divided by max |talbot| (0 for an all-zero
    /// waveform).
    pub max_discrepancy: f64,
}

impl InversionReport {
    /// The contour-method waveform as a uniform [`Trace`]; fails when the
    /// grid is not uniformly spaced.
    pub fn to_trace(&self, name: &str, unit: &str) -> Result<Trace> {
        if self.t.len() < 2 {
            return Err(Error::Signal("inverted waveform needs at least two samples".into()));
        }
        let dt = self.t[1] - self.t[0];
        let uniform = self
            .t
            .windows(2)
            .all(|w| ((w[1] - w[0]) - dt).abs() <= 1e-9 * dt);
        if !uniform {
            return Err(Error::Signal("time grid is not uniform".into()));
        }
        Trace::new(name, unit, self.t[0], dt, self.talbot.clone())
    }
}

/// Stehfest weights V_k for `n` terms.
pub fn stehfest_coefficients(n: usize) -> Vec<f64> {
    let half = n / 2;
    let fact = |k: usize| -> f64 { (1..=k).map(|i| i as f64).product() };
    (1..=n)
        .map(|k| {
            let lo = k.div_ceil(2);
            let hi = k.min(half);
            let mut sum = 0.0;
            for j in lo..=hi {
                let jf = j as f64;
                sum += jf.powi(half as i32) * fact(2 * j)
                    / (fact(half - j) * fact(j) * fact(j - 1) * fact(k - j) * fact(2 * j - k));
            }
            if (k + half).is_multiple_of(2) {
                sum
            } else {
                -sum
            }
        })
        .collect()
}

/// Gaver-Stehfest inversion at a single time `t > 0`.
pub fn stehfest<F>(f: &F, t: f64, coefficients: &[f64]) -> f64
where
    F: Fn(Complex64) -> Complex64 + ?Sized,
{
    let a = std::f64::consts::LN_2 / t;
    let sum: f64 = coefficients
        .iter()
        .enumerate()
        .map(|(i, v)| v * f(Complex64::new((i + 1) as f64 * a, 0.0)).re)
        .sum();
    a * sum
}

/// Fixed-Talbot inversion at a single time `t > 0` with `m` nodes.
pub fn talbot<F>(f: &F, t: f64, m: usize) -> f64
where
    F: Fn(Complex64) -> Complex64 + ?Sized,
{
    let mf = m as f64;
    let r = 2.0 * mf / (5.0 * t);
    let mut acc = 0.5 * (Complex64::new(r * t, 0.0).exp() * f(Complex64::new(r, 0.0))).re;
    for k in 1..m {
        let theta = k as f64 * std::f64::consts::PI / mf;
        let cot = 1.0 / theta.tan();
        let s = Complex64::new(r * theta * cot, r * theta);
        let sigma = theta + (theta * cot - 1.0) * cot;
        acc += ((s * t).exp() * f(s) * Complex64::new(1.0, sigma)).re;
    }
    r / mf * acc
}

/// Inverts `f` on `t_grid` by both methods and checks their agreement.
pub fn invert_laplace<F>(
    f: &F,
    t_grid: &[f64],
    settings: &InversionSettings,
    exec: Execution,
) -> Result<InversionReport>
where
    F: Fn(Complex64) -> Complex64 + Sync + ?Sized,
{
    if t_grid.is_empty() {
        return Err(Error::Signal("empty time grid".into()));
    }
    if t_grid[0] <= 0.0 || t_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Signal(
            "time grid must be positive and strictly increasing".into(),
        ));
    }
    if settings.stehfest_terms < 2 || !settings.stehfest_terms.is_multiple_of(2) {
        return Err(Error::invalid("stehfest_terms", "must be even and >= 2"));
    }
    let coefficients = stehfest_coefficients(settings.stehfest_terms);
    let pairs = exec.map(t_grid, |&t| {
        (stehfest(f, t, &coefficients), talbot(f, t, settings.talbot_nodes))
    });
    let (stehfest_v, talbot_v): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
    let peak = talbot_v.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let worst = stehfest_v
        .iter()
        .zip(&talbot_v)
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    let max_discrepancy = if peak > 0.0 {
        worst / peak
    } else if worst == 0.0 {
        0.0
    } else {
        f64::INFINITY
    };
    if !(max_discrepancy <= settings.tolerance) {
        return Err(Error::NumericalInstability {
            max_discrepancy,
            tolerance: settings.tolerance,
            stehfest: stehfest_v,
            talbot: talbot_v,
        });
    }
    Ok(InversionReport {
        t: t_grid.to_vec(),
        stehfest: stehfest_v,
        talbot: talbot_v,
        max_discrepancy,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn both(f: &dyn Fn(Complex64) -> Complex64, t: f64) -> (f64, f64) {
        let c = stehfest_coefficients(14);
        (stehfest(f, t, &c), talbot(f, t, 32))
    }

    #[test]
    fn unit_step() {
        let (a, b) = both(&|s| s.inv(), 0.5);
        assert_abs_diff_eq!(a, 1.0, epsilon = 1e-6);
        assert_abs_diff_eq!(b, 1.0, epsilon = 1e-9);
    }

    #[test]
    fn decaying_exponential() {
        let (a, b) = both(&|s| (s + 1.0).inv(), 1.0);
        let exact = (-1.0f64).exp();
        assert_abs_diff_eq!(b, 0.367879, epsilon = 1e-6);
        assert_abs_diff_eq!(b, exact, epsilon = 1e-9);
        assert_abs_diff_eq!(a, exact, epsilon = 1e-5);
    }

    #[test]
    fn ramp() {
        let (a, b) = both(&|s| (s * s).inv(), 2.0);
        assert_abs_diff_eq!(a, 2.0, epsilon = 1e-5);
        assert_abs_diff_eq!(b, 2.0, epsilon = 1e-8);
    }

    #[test]
    fn stehfest_weights_sum_to_zero() {
        // F(s) = 1/s must reproduce 1, which forces sum V_k / k = 1 and
        // sum V_k = 0.
        let v = stehfest_coefficients(14);
        let s: f64 = v.iter().sum();
        assert!(s.abs() < 1e-6 * v.iter().map(|x| x.abs()).fold(0.0, f64::max));
    }

    #[test]
    fn report_and_trace() {
        let grid: Vec<f64> = (1..=50).map(|k| k as f64 * 0.1).collect();
        let f = |s: Complex64| (s + 2.0).inv();
        let r = invert_laplace(&f, &grid, &InversionSettings::default(), Execution::Sequential).unwrap();
        assert!(r.max_discrepancy < 1e-4);
        let tr = r.to_trace("x", "V").unwrap();
        assert_eq!(tr.len(), 50);
        assert_abs_diff_eq!(tr.samples[9], (-2.0f64).exp(), epsilon = 1e-8);
    }

    #[test]
    fn disagreement_is_an_error() {
        // An oscillation far beyond Stehfest's resolving power.
        let f = |s: Complex64| (s * s + 1e6).inv() * 1e3;
        let grid: Vec<f64> = (1..=20).map(|k| k as f64 * 1e-3).collect();
        let err = invert_laplace(&f, &grid, &InversionSettings::default(), Execution::Sequential)
            .unwrap_err();
        match err {
            Error::NumericalInstability { stehfest, talbot, .. } => {
                assert_eq!(stehfest.len(), 20);
                assert_eq!(talbot.len(), 20);
            }
            other => panic!("unexpected error {other}"),
        }
    }

    #[test]
    fn rejects_bad_grid() {
        let f = |s: Complex64| s.inv();
        let s = InversionSettings::default();
        assert!(invert_laplace(&f, &[0.0, 1.0], &s, Execution::Sequential).is_err());
        assert!(invert_laplace(&f, &[1.0, 1.0], &s, Execution::Sequential).is_err());
    }
}
