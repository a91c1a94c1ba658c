//! Closed-form Laplace-domain mode voltages across the relay reactor.
//!
//! Impedances Z1..Z10 are pole-pair loop impedances (every series term
//! doubled); the converter Thevenin branch is `2 s L_CLR || (s L_MMC + R_MMC)`.
//! The DC source is a step `V_dc / s`, so each mode voltage is
//! `L_CLR12 V_dc` times a combination of admittances.

use std::f64::consts::SQRT_2;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::impedance::{par, SImpedance};
use crate::laplace::{invert_laplace, InversionReport, InversionSettings};
use crate::params::{FaultKind, Grid};
use crate::trace::dominant;

/// Options of the closed-form model.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AnalyticOptions {
    /// Scale of R_f in the PTP line-mode termination.
    pub ptp_alpha: f64,
    /// Multiple of R_f in the PTG series branch (2 in the printed form).
    pub ptg_fault_factor: f64,
    /// Scale outputs to the orthonormal modal convention (factor sqrt 2).
    pub orthonormal: bool,
}

impl Default for AnalyticOptions {
    fn default() -> Self {
        AnalyticOptions {
            ptp_alpha: 1.0,
            ptg_fault_factor: 2.0,
            orthonormal: true,
        }
    }
}

/// Z1..Z4 of an internal fault at fraction `d`.
#[derive(Clone, Debug, PartialEq)]
pub struct InternalImpedances {
    pub z1: SImpedance,
    pub z2: SImpedance,
    pub z3: SImpedance,
    pub z4: SImpedance,
}

/// Z5..Z7 of a backward external fault.
#[derive(Clone, Debug, PartialEq)]
pub struct BackwardImpedances {
    pub z5: SImpedance,
    pub z6: SImpedance,
    pub z7: SImpedance,
}

/// Z8..Z10 of a forward external fault.
#[derive(Clone, Debug, PartialEq)]
pub struct ForwardImpedances {
    pub z8: SImpedance,
    pub z9: SImpedance,
    pub z10: SImpedance,
}

#[derive(Clone, Copy)]
enum Station {
    One,
    Two,
}

fn thevenin(grid: &Grid, station: Station) -> SImpedance {
    let (clr_label, clr, n) = match station {
        Station::One => ("2L_CLR14", grid.clr.clr14, 1),
        Station::Two => ("2L_CLR23", grid.clr.clr23, 2),
    };
    SImpedance::parallel(vec![
        SImpedance::inductor(clr_label, 2.0 * clr),
        SImpedance::series(vec![
            SImpedance::inductor(format!("L_MMC{n}"), grid.mmc.l_mmc),
            SImpedance::resistor(format!("R_MMC{n}"), grid.mmc.r_mmc),
        ]),
    ])
}

#[derive(Clone, Copy)]
enum Mode {
    Line,
    Zero,
}

fn modal_inductance(grid: &Grid, mode: Mode) -> (f64, &'static str) {
    match mode {
        Mode::Line => (grid.line12.line_mode_inductance(), "l"),
        Mode::Zero => (grid.line12.zero_mode_inductance(), "0"),
    }
}

/// Impedance from a station through a portion of line 12 to an internal
/// fault.
fn internal_branch(grid: &Grid, station: Station, frac: f64, mode: Mode) -> SImpedance {
    let (l_mode, tag) = modal_inductance(grid, mode);
    let (clr_label, clr, frac_label) = match station {
        Station::One => ("2L_CLR12", grid.clr.clr12, "d"),
        Station::Two => ("2L_CLR21", grid.clr.clr21, "(1-d)"),
    };
    SImpedance::series(vec![
        thevenin(grid, station),
        SImpedance::inductor(clr_label, 2.0 * clr),
        SImpedance::inductor(format!("2{frac_label}L_12_{tag}"), 2.0 * frac * l_mode),
        SImpedance::resistor(format!("2{frac_label}R_12"), 2.0 * frac * grid.line12.resistance),
    ])
}

/// Impedance from `station` across the whole of line 12 and both line-12
/// reactors.
fn through_branch(grid: &Grid, station: Station, mode: Mode) -> SImpedance {
    let (l_mode, tag) = modal_inductance(grid, mode);
    SImpedance::series(vec![
        thevenin(grid, station),
        SImpedance::inductor("2L_CLR12", 2.0 * grid.clr.clr12),
        SImpedance::inductor("2L_CLR21", 2.0 * grid.clr.clr21),
        SImpedance::inductor(format!("2L_12_{tag}"), 2.0 * l_mode),
        SImpedance::resistor("2R_12", 2.0 * grid.line12.resistance),
    ])
}

pub fn z_internal(d: f64, grid: &Grid) -> Result<InternalImpedances> {
    if !(0.0..=1.0).contains(&d) {
        return Err(Error::invalid("location_d", format!("{d} is outside [0, 1]")));
    }
    Ok(InternalImpedances {
        z1: internal_branch(grid, Station::One, d, Mode::Line),
        z2: internal_branch(grid, Station::Two, 1.0 - d, Mode::Line),
        z3: internal_branch(grid, Station::One, d, Mode::Zero),
        z4: internal_branch(grid, Station::Two, 1.0 - d, Mode::Zero),
    })
}

pub fn z_backward(grid: &Grid) -> BackwardImpedances {
    BackwardImpedances {
        z5: through_branch(grid, Station::Two, Mode::Line),
        z6: thevenin(grid, Station::One),
        z7: through_branch(grid, Station::Two, Mode::Zero),
    }
}

pub fn z_forward(grid: &Grid) -> ForwardImpedances {
    ForwardImpedances {
        z8: through_branch(grid, Station::One, Mode::Line),
        z9: thevenin(grid, Station::Two),
        z10: through_branch(grid, Station::One, Mode::Zero),
    }
}

/// Swaps station subscripts (14 <-> 23, MMC1 <-> MMC2) in an element label.
pub fn mirror_label(label: &str) -> String {
    label
        .replace("CLR14", "\u{0}A")
        .replace("CLR23", "CLR14")
        .replace("\u{0}A", "CLR23")
        .replace("MMC1", "\u{0}B")
        .replace("MMC2", "MMC1")
        .replace("\u{0}B", "MMC2")
}

#[derive(Clone, Debug, PartialEq)]
enum Shape {
    /// Both mode networks in series through the fault branch.
    Ground {
        a: SImpedance,
        b: SImpedance,
        p: SImpedance,
        q: SImpedance,
        div: SImpedance,
        zero_sign: f64,
        line_sign: f64,
        fault_resistance: f64,
    },
    /// Line-mode network only, terminated by the effective resistance.
    PoleToPole {
        a: SImpedance,
        b: SImpedance,
        line_sign: f64,
        fault_resistance: f64,
    },
}

/// Laplace images of V_L120 (zero mode) and V_L121 (line mode) for one
/// contingency.
#[derive(Clone, Debug, PartialEq)]
pub struct ModeTransfer {
    pub kind: FaultKind,
    /// L_CLR12 V_dc times the modal scale.
    gain: f64,
    shape: Shape,
}

struct Values {
    zero: Complex64,
    line: Complex64,
}

fn ground_values(a: Complex64, b: Complex64, p: Complex64, q: Complex64, div: Complex64, rf: Complex64) -> Values {
    let branch = par(p, q) + rf;
    let b_b = par(b, branch);
    let a_b = par(a, branch);
    let a1 = (a + b_b).inv();
    let a2 = (b + a_b).inv();
    Values {
        zero: a1 * b_b / div + a2 * a_b / div,
        line: a1 - a2 * a_b / a,
    }
}

fn pole_values(a: Complex64, b: Complex64, r: Complex64) -> Values {
    let b_r = par(b, r);
    let a_r = par(a, r);
    Values {
        zero: Complex64::new(0.0, 0.0),
        line: (a + b_r).inv() - (b + a_r).inv() * a_r / a,
    }
}

impl ModeTransfer {
    fn evaluate(&self, s: Complex64) -> Values {
        match &self.shape {
            Shape::Ground {
                a,
                b,
                p,
                q,
                div,
                zero_sign,
                line_sign,
                fault_resistance,
            } => {
                let v = ground_values(
                    a.eval(s),
                    b.eval(s),
                    p.eval(s),
                    q.eval(s),
                    div.eval(s),
                    Complex64::new(*fault_resistance, 0.0),
                );
                Values {
                    zero: v.zero * (*zero_sign * self.gain),
                    line: v.line * (*line_sign * self.gain),
                }
            }
            Shape::PoleToPole {
                a,
                b,
                line_sign,
                fault_resistance,
            } => {
                let v = pole_values(a.eval(s), b.eval(s), Complex64::new(*fault_resistance, 0.0));
                Values {
                    zero: v.zero,
                    line: v.line * (*line_sign * self.gain),
                }
            }
        }
    }

    /// V_L120(s).
    pub fn zero_mode(&self, s: Complex64) -> Complex64 {
        self.evaluate(s).zero
    }

    /// V_L121(s).
    pub fn line_mode(&self, s: Complex64) -> Complex64 {
        self.evaluate(s).line
    }

    /// Initial values `lim s F(s)` of (V_L120, V_L121) for s -> inf, from the
    /// high-frequency inductances of the impedances (resistances drop out).
    pub fn initial_values(&self) -> (f64, f64) {
        let hf = |z: &SImpedance| Complex64::new(z.high_frequency_inductance(), 0.0);
        let zero_r = Complex64::new(0.0, 0.0);
        match &self.shape {
            Shape::Ground {
                a,
                b,
                p,
                q,
                div,
                zero_sign,
                line_sign,
                ..
            } => {
                let v = ground_values(hf(a), hf(b), hf(p), hf(q), hf(div), zero_r);
                (
                    v.zero.re * zero_sign * self.gain,
                    v.line.re * line_sign * self.gain,
                )
            }
            // A finite R_f is negligible against s L and a bolted fault
            // shorts the remote branch, so only Z_a remains.
            Shape::PoleToPole { a, line_sign, .. } => {
                (0.0, hf(a).inv().re * line_sign * self.gain)
            }
        }
    }
}

/// Assembles the mode-voltage transfer functions of `kind`.
pub fn mode_voltage_transfer(
    kind: FaultKind,
    d: Option<f64>,
    r_f: f64,
    grid: &Grid,
    options: &AnalyticOptions,
) -> Result<ModeTransfer> {
    if !r_f.is_finite() || r_f < 0.0 {
        return Err(Error::invalid("r_f", "must be finite and >= 0"));
    }
    let scale = if options.orthonormal { SQRT_2 } else { 1.0 };
    let gain = grid.clr.clr12 * grid.v_dc * scale;
    let ptg_r = options.ptg_fault_factor * r_f;
    let ptp_r = options.ptp_alpha * r_f;
    let internal = |d: Option<f64>| -> Result<InternalImpedances> {
        let d = d.ok_or_else(|| Error::invalid("location_d", "required for internal faults"))?;
        z_internal(d, grid)
    };
    let shape = match kind {
        FaultKind::None => return Err(Error::UnsupportedKind(kind.to_string())),
        FaultKind::InternalPPtg | FaultKind::InternalNPtg => {
            let z = internal(d)?;
            Shape::Ground {
                a: z.z1,
                b: z.z2,
                p: z.z3.clone(),
                q: z.z4,
                div: z.z3,
                zero_sign: if kind == FaultKind::InternalPPtg { 1.0 } else { -1.0 },
                line_sign: 1.0,
                fault_resistance: ptg_r,
            }
        }
        FaultKind::ExternalBackwardPtg => {
            let z = z_backward(grid);
            Shape::Ground {
                a: z.z5,
                b: z.z6.clone(),
                p: z.z6,
                q: z.z7.clone(),
                div: z.z7,
                zero_sign: -1.0,
                line_sign: -1.0,
                fault_resistance: ptg_r,
            }
        }
        FaultKind::ExternalForwardPtg => {
            let z = z_forward(grid);
            Shape::Ground {
                a: z.z8,
                b: z.z9.clone(),
                p: z.z9,
                q: z.z10.clone(),
                div: z.z10,
                zero_sign: 1.0,
                line_sign: 1.0,
                fault_resistance: ptg_r,
            }
        }
        FaultKind::InternalPtp => {
            let z = internal(d)?;
            Shape::PoleToPole {
                a: z.z1,
                b: z.z2,
                line_sign: 1.0,
                fault_resistance: ptp_r,
            }
        }
        FaultKind::ExternalBackwardPtp => {
            let z = z_backward(grid);
            Shape::PoleToPole {
                a: z.z5,
                b: z.z6,
                line_sign: -1.0,
                fault_resistance: ptp_r,
            }
        }
        FaultKind::ExternalForwardPtp => {
            let z = z_forward(grid);
            Shape::PoleToPole {
                a: z.z8,
                b: z.z9,
                line_sign: 1.0,
                fault_resistance: ptp_r,
            }
        }
    };
    Ok(ModeTransfer { kind, gain, shape })
}

/// Polarity of one mode voltage.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Sign {
    Positive,
    Negative,
    Zero,
}

impl Sign {
    pub fn of(v: f64) -> Sign {
        if v > 0.0 {
            Sign::Positive
        } else if v < 0.0 {
            Sign::Negative
        } else {
            Sign::Zero
        }
    }

    /// Zero when `|v| <= dead_band`.
    pub fn with_dead_band(v: f64, dead_band: f64) -> Sign {
        if v.abs() <= dead_band {
            Sign::Zero
        } else {
            Sign::of(v)
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Sign::Positive => "+",
            Sign::Negative => "-",
            Sign::Zero => "0",
        }
    }
}

/// Signs of (V_L120, V_L121).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct PolaritySignature {
    pub zero_mode: Sign,
    pub line_mode: Sign,
}

impl std::fmt::Display for PolaritySignature {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({},{})", self.zero_mode.symbol(), self.line_mode.symbol())
    }
}

/// Reference polarity of each contingency (external PTG rows assume the positive
/// pole).
pub fn expected_signature(kind: FaultKind) -> Option<PolaritySignature> {
    use Sign::*;
    let (zero_mode, line_mode) = match kind {
        FaultKind::None => return None,
        FaultKind::InternalPPtg => (Positive, Positive),
        FaultKind::InternalNPtg => (Negative, Positive),
        FaultKind::ExternalBackwardPtg => (Negative, Negative),
        FaultKind::ExternalForwardPtg => (Positive, Positive),
        FaultKind::InternalPtp | FaultKind::ExternalForwardPtp => (Zero, Positive),
        FaultKind::ExternalBackwardPtp => (Zero, Negative),
    };
    Some(PolaritySignature {
        zero_mode,
        line_mode,
    })
}

/// Time-domain mode voltages of a transfer on `t_grid`.
#[derive(Clone, Debug, PartialEq)]
pub struct ModeWaveforms {
    pub zero: InversionReport,
    pub line: InversionReport,
}

pub fn mode_waveforms(
    transfer: &ModeTransfer,
    t_grid: &[f64],
    settings: &InversionSettings,
    exec: Execution,
) -> Result<ModeWaveforms> {
    let zero = invert_laplace(&|s| transfer.zero_mode(s), t_grid, settings, exec)?;
    let line = invert_laplace(&|s| transfer.line_mode(s), t_grid, settings, exec)?;
    Ok(ModeWaveforms { zero, line })
}

/// Polarity evaluation window after inception, second.
pub const POLARITY_WINDOW: f64 = 2.0e-3;

/// Uniform grid of `n` points on (0, `span`].
pub fn uniform_grid(span: f64, n: usize) -> Vec<f64> {
    (1..=n).map(|k| span * k as f64 / n as f64).collect()
}

/// Dominant-sign signature of the inverted waveforms over the first 2 ms;
/// `|V_L120| <= e_set` maps to [`Sign::Zero`].
pub fn predict_signature(
    kind: FaultKind,
    d: Option<f64>,
    r_f: f64,
    grid: &Grid,
    options: &AnalyticOptions,
    e_set: f64,
) -> Result<PolaritySignature> {
    let transfer = mode_voltage_transfer(kind, d, r_f, grid, options)?;
    let t = uniform_grid(POLARITY_WINDOW, 200);
    let w = mode_waveforms(&transfer, &t, &InversionSettings::default(), Execution::Sequential)?;
    Ok(PolaritySignature {
        zero_mode: Sign::with_dead_band(dominant(&w.zero.talbot), e_set),
        line_mode: Sign::of(dominant(&w.line.talbot)),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::{ClrSet, SystemParams, Topology};
    use approx::assert_relative_eq;

    fn grid_200km() -> Grid {
        let t = Topology {
            length_12: 200e3,
            ..Topology::default()
        };
        Grid::new(&SystemParams::default(), &t).unwrap()
    }

    #[test]
    fn z1_at_dc() {
        let z = z_internal(0.1, &grid_200km()).unwrap();
        assert_relative_eq!(z.z1.eval_real(0.0), 1.6464, max_relative = 1e-12);
        let g = grid_200km();
        for d in [0.1, 0.5, 0.9] {
            let z = z_internal(d, &g).unwrap();
            let sum = z.z1.eval_real(0.0) + z.z2.eval_real(0.0);
            assert_relative_eq!(sum, 2.0 * 8.232, max_relative = 1e-12);
        }
    }

    #[test]
    fn z3_minus_z1_is_coupling() {
        let g = Grid::with_clr(0.13);
        for d in [0.2, 0.7] {
            let z = z_internal(d, &g).unwrap();
            for s in [Complex64::new(10.0, 0.0), Complex64::new(3.0, 400.0)] {
                let diff = z.z3.eval(s) - z.z1.eval(s);
                let expect = s * (4.0 * d * g.line12.mutual);
                assert_relative_eq!(diff.re, expect.re, max_relative = 1e-9, epsilon = 1e-9);
                assert_relative_eq!(diff.im, expect.im, max_relative = 1e-9, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn backward_limits() {
        let g = Grid::with_clr(0.09);
        let z = z_backward(&g);
        assert_eq!(z.z6.eval_real(0.0), 0.0);
        let s = Complex64::new(1e9, 0.0);
        let l_par = 2.0 * 0.09 * g.mmc.l_mmc / (2.0 * 0.09 + g.mmc.l_mmc);
        assert_relative_eq!(z.z6.eval(s).re / 1e9, l_par, max_relative = 1e-6);
        let s = Complex64::new(5.0, 70.0);
        let diff = z.z5.eval(s) - z.z7.eval(s);
        let expect = s * (-4.0 * g.line12.mutual);
        assert_relative_eq!(diff.im, expect.im, max_relative = 1e-9);
    }

    #[test]
    fn forward_limits_and_mirror() {
        let topology = Topology {
            clr: ClrSet {
                clr12: 0.1,
                clr21: 0.12,
                clr14: 0.15,
                clr23: 0.09,
            },
            ..Topology::default()
        };
        let g = Grid::new(&SystemParams::default(), &topology).unwrap();
        let f = z_forward(&g);
        let b = z_backward(&g);
        assert_eq!(f.z9.eval_real(0.0), 0.0);
        assert_relative_eq!(f.z10.eval_real(0.0), 2.0 * g.line12.resistance, max_relative = 1e-12);
        let mirrored = b.z5.relabel(&mirror_label);
        assert!(mirrored.same_structure(&f.z8));
        let mirrored_topology = Topology {
            clr: ClrSet {
                clr14: 0.09,
                clr23: 0.15,
                ..topology.clr
            },
            ..topology
        };
        let gm = Grid::new(&SystemParams::default(), &mirrored_topology).unwrap();
        let s = Complex64::new(40.0, 900.0);
        let lhs = z_backward(&gm).z5.eval(s);
        assert_relative_eq!(lhs.re, f.z8.eval(s).re, max_relative = 1e-12);
        assert_relative_eq!(lhs.im, f.z8.eval(s).im, max_relative = 1e-12);
    }

    #[test]
    fn ptp_zero_mode_identically_zero() {
        let g = Grid::with_clr(0.13);
        for kind in [FaultKind::InternalPtp, FaultKind::ExternalForwardPtp, FaultKind::ExternalBackwardPtp] {
            let t = mode_voltage_transfer(kind, Some(0.3), 50.0, &g, &AnalyticOptions::default()).unwrap();
            for s in [Complex64::new(1.0, 0.0), Complex64::new(100.0, -3e4)] {
                assert_eq!(t.zero_mode(s), Complex64::new(0.0, 0.0));
            }
        }
    }

    #[test]
    fn p_and_n_ptg_mirror() {
        let g = Grid::with_clr(0.09);
        let o = AnalyticOptions::default();
        let p = mode_voltage_transfer(FaultKind::InternalPPtg, Some(0.4), 100.0, &g, &o).unwrap();
        let n = mode_voltage_transfer(FaultKind::InternalNPtg, Some(0.4), 100.0, &g, &o).unwrap();
        for s in [Complex64::new(3.0, 0.0), Complex64::new(50.0, 2e3)] {
            assert_eq!(p.line_mode(s), n.line_mode(s));
            assert_eq!(p.zero_mode(s), -n.zero_mode(s));
        }
    }

    #[test]
    fn backward_ptg_negative_on_real_axis() {
        let g = Grid::with_clr(0.17);
        let t = mode_voltage_transfer(FaultKind::ExternalBackwardPtg, None, 100.0, &g, &AnalyticOptions::default()).unwrap();
        for s in [1.0, 1e2, 1e4, 1e6] {
            let s = Complex64::new(s, 0.0);
            assert!(t.zero_mode(s).re < 0.0);
            assert!(t.line_mode(s).re < 0.0);
        }
    }

    #[test]
    fn internal_requires_location() {
        let g = Grid::with_clr(0.09);
        assert!(mode_voltage_transfer(FaultKind::InternalPtp, None, 0.0, &g, &AnalyticOptions::default()).is_err());
        assert!(mode_voltage_transfer(FaultKind::None, None, 0.0, &g, &AnalyticOptions::default()).is_err());
    }

    #[test]
    fn signatures_of_canonical_contingencies() {
        let g = Grid::with_clr(0.13);
        let o = AnalyticOptions::default();
        for kind in FaultKind::FAULTS {
            let d = kind.is_internal().then_some(0.5);
            let sig = predict_signature(kind, d, 100.0, &g, &o, 10e3).unwrap();
            assert_eq!(Some(sig), expected_signature(kind), "{kind}");
        }
    }

    #[test]
    fn initial_value_theorem() {
        let g = Grid::with_clr(0.09);
        let o = AnalyticOptions::default();
        for kind in [FaultKind::InternalPPtg, FaultKind::InternalPtp, FaultKind::ExternalBackwardPtg] {
            let t = mode_voltage_transfer(kind, Some(0.5), 100.0, &g, &o).unwrap();
            let (_, v0) = t.initial_values();
            let early = invert_laplace(&|s| t.line_mode(s), &[1e-7], &InversionSettings::default(), Execution::Sequential)
                .unwrap()
                .talbot[0];
            assert_relative_eq!(early, v0, max_relative = 1e-2);
        }
    }
}
