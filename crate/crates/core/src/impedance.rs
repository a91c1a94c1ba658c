//! Laplace-domain impedances composed from labelled R and L elements.

use num_complex::Complex64;

/// An impedance `s -> Z(s)` built from resistors, inductors and series /
/// parallel combinators. Element labels make structural comparison under
/// subscript substitution possible.
#[derive(Clone, Debug, PartialEq)]
pub enum SImpedance {
    Resistor { label: String, ohms: f64 },
    Inductor { label: String, henries: f64 },
    Series(Vec<SImpedance>),
    Parallel(Vec<SImpedance>),
}

impl SImpedance {
    pub fn resistor(label: impl Into<String>, ohms: f64) -> Self {
        SImpedance::Resistor {
            label: label.into(),
            ohms,
        }
    }

    pub fn inductor(label: impl Into<String>, henries: f64) -> Self {
        SImpedance::Inductor {
            label: label.into(),
            henries,
        }
    }

    pub fn series(parts: Vec<SImpedance>) -> Self {
        SImpedance::Series(parts)
    }

    pub fn parallel(parts: Vec<SImpedance>) -> Self {
        SImpedance::Parallel(parts)
    }

    pub fn eval(&self, s: Complex64) -> Complex64 {
        match self {
            SImpedance::Resistor { ohms, .. } => Complex64::new(*ohms, 0.0),
            SImpedance::Inductor { henries, .. } => s * *henries,
            SImpedance::Series(parts) => parts.iter().map(|p| p.eval(s)).sum(),
            SImpedance::Parallel(parts) => {
                let zs: Vec<Complex64> = parts.iter().map(|p| p.eval(s)).collect();
                parallel_all(&zs)
            }
        }
    }

    /// Real-valued evaluation, convenient for DC (s = 0) checks.
    pub fn eval_real(&self, s: f64) -> f64 {
        self.eval(Complex64::new(s, 0.0)).re
    }

    /// Total inductance seen at high frequency: lim Z(s)/s as s -> inf.
    pub fn high_frequency_inductance(&self) -> f64 {
        match self {
            SImpedance::Resistor { .. } => 0.0,
            SImpedance::Inductor { henries, .. } => *henries,
            SImpedance::Series(parts) => parts.iter().map(|p| p.high_frequency_inductance()).sum(),
            SImpedance::Parallel(parts) => {
                let ls: Vec<f64> = parts.iter().map(|p| p.high_frequency_inductance()).collect();
                if ls.contains(&0.0) {
                    0.0
                } else {
                    1.0 / ls.iter().map(|l| 1.0 / l).sum::<f64>()
                }
            }
        }
    }

    /// Copy with every element label passed through `f`.
    pub fn relabel(&self, f: &dyn Fn(&str) -> String) -> SImpedance {
        match self {
            SImpedance::Resistor { label, ohms } => SImpedance::Resistor {
                label: f(label),
                ohms: *ohms,
            },
            SImpedance::Inductor { label, henries } => SImpedance::Inductor {
                label: f(label),
                henries: *henries,
            },
            SImpedance::Series(parts) => {
                SImpedance::Series(parts.iter().map(|p| p.relabel(f)).collect())
            }
            SImpedance::Parallel(parts) => {
                SImpedance::Parallel(parts.iter().map(|p| p.relabel(f)).collect())
            }
        }
    }

    /// Labels in depth-first order.
    pub fn labels(&self) -> Vec<String> {
        let mut out = Vec::new();
        self.collect_labels(&mut out);
        out
    }

    fn collect_labels(&self, out: &mut Vec<String>) {
        match self {
            SImpedance::Resistor { label, .. } | SImpedance::Inductor { label, .. } => {
                out.push(label.clone())
            }
            SImpedance::Series(parts) | SImpedance::Parallel(parts) => {
                parts.iter().for_each(|p| p.collect_labels(out))
            }
        }
    }

    /// Structural equality of topology and labels, ignoring element values.
    pub fn same_structure(&self, other: &SImpedance) -> bool {
        match (self, other) {
            (SImpedance::Resistor { label: a, .. }, SImpedance::Resistor { label: b, .. })
            | (SImpedance::Inductor { label: a, .. }, SImpedance::Inductor { label: b, .. }) => {
                a == b
            }
            (SImpedance::Series(a), SImpedance::Series(b))
            | (SImpedance::Parallel(a), SImpedance::Parallel(b)) => {
                a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.same_structure(y))
            }
            _ => false,
        }
    }
}

/// Series connection of two impedance values.
pub fn ser(a: Complex64, b: Complex64) -> Complex64 {
    a + b
}

/// Parallel connection `a || b`; a zero branch short-circuits the pair.
pub fn par(a: Complex64, b: Complex64) -> Complex64 {
    if a == Complex64::new(0.0, 0.0) || b == Complex64::new(0.0, 0.0) {
        return Complex64::new(0.0, 0.0);
    }
    a * b / (a + b)
}

fn parallel_all(zs: &[Complex64]) -> Complex64 {
    if zs.iter().any(|z| *z == Complex64::new(0.0, 0.0)) {
        return Complex64::new(0.0, 0.0);
    }
    let y: Complex64 = zs.iter().map(|z| z.inv()).sum();
    y.inv()
}
