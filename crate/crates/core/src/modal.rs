//! Phase-modal transformation between pole quantities and line/zero modes.
//!
//! The orthonormal convention is used for voltages and currents alike:
//! `x_l = (x_p - x_n)/sqrt(2)`, `x_0 = (x_p + x_n)/sqrt(2)`. The matrix is
//! symmetric and orthogonal, hence its own inverse.

use std::f64::consts::FRAC_1_SQRT_2;

use crate::error::{Error, Result};
use crate::params::FaultKind;

/// Positive- and negative-pole values of one quantity.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PoleQuantities {
    pub p: f64,
    pub n: f64,
}

/// Line-mode and zero-mode values of one quantity.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModeQuantities {
    pub line: f64,
    pub zero: f64,
}

pub fn phase_to_modal(q: PoleQuantities) -> ModeQuantities {
    ModeQuantities {
        line: (q.p - q.n) * FRAC_1_SQRT_2,
        zero: (q.p + q.n) * FRAC_1_SQRT_2,
    }
}

pub fn modal_to_phase(m: ModeQuantities) -> PoleQuantities {
    PoleQuantities {
        p: (m.zero + m.line) * FRAC_1_SQRT_2,
        n: (m.zero - m.line) * FRAC_1_SQRT_2,
    }
}

/// Sample-wise transform of two pole traces into (line, zero) sequences.
pub fn modal_series(p: &[f64], n: &[f64]) -> (Vec<f64>, Vec<f64>) {
    p.iter()
        .zip(n)
        .map(|(&p, &n)| {
            let m = phase_to_modal(PoleQuantities { p, n });
            (m.line, m.zero)
        })
        .unzip()
}

/// Line-mode and zero-mode inductances `(L - M, L + M)`.
pub fn modal_line_inductances(l: f64, m: f64) -> Result<(f64, f64)> {
    if !(l.is_finite() && m.is_finite()) || m < 0.0 {
        return Err(Error::invalid(
            "mutual",
            "inductances must be finite and M >= 0",
        ));
    }
    if m >= l {
        return Err(Error::invalid(
            "mutual",
            format!("M = {m} H must be below L = {l} H for a positive line mode"),
        ));
    }
    Ok((l - m, l + m))
}

/// Faulted pole of a ground fault.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Pole {
    Positive,
    Negative,
}

/// How the line-mode and zero-mode networks are stitched at the fault.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ModeBoundaryCondition {
    /// Pole-to-ground fault: both mode networks in series through
    /// `series_resistance = 2 R_f`; the line-mode source polarity follows the
    /// faulted pole.
    GroundFault { pole: Pole, series_resistance: f64 },
    /// Pole-to-pole fault: the line-mode network is terminated by
    /// `line_mode_resistance = alpha R_f` and the zero mode is unexcited
    /// (`I_f_0 = 0`).
    PoleToPole { line_mode_resistance: f64 },
}

impl ModeBoundaryCondition {
    /// Sign applied to the line-mode source relative to a positive-pole fault.
    pub fn line_source_sign(&self) -> f64 {
        match self {
            ModeBoundaryCondition::GroundFault {
                pole: Pole::Negative,
                ..
            } => -1.0,
            _ => 1.0,
        }
    }

    /// Residuals of the two boundary equations for fault-point modal voltages
    /// `v` and fault currents `i`. Both vanish when the constraint holds.
    ///
    /// Ground fault (positive pole): `v_l + v_0 - 2 i_l R_f` and `i_l - i_0`.
    /// Negative pole: `v_0 - v_l - 2 i_0 R_f` and `i_l + i_0`.
    /// Pole to pole: `v_l - i_l R_eff` and `i_0`.
    pub fn residuals(&self, v: ModeQuantities, i: ModeQuantities) -> [f64; 2] {
        match *self {
            ModeBoundaryCondition::GroundFault {
                pole: Pole::Positive,
                series_resistance,
            } => [v.line + v.zero - series_resistance * i.line, i.line - i.zero],
            ModeBoundaryCondition::GroundFault {
                pole: Pole::Negative,
                series_resistance,
            } => [v.zero - v.line - series_resistance * i.zero, i.line + i.zero],
            ModeBoundaryCondition::PoleToPole {
                line_mode_resistance,
            } => [v.line - line_mode_resistance * i.line, i.zero],
        }
    }
}

/// Modal boundary condition of a fault; `alpha` scales R_f in the PTP
/// line-mode termination (0.5 follows the orthonormal transform, 1.0 puts
/// the full R_f in series with the line mode).
pub fn fault_boundary_modal(kind: FaultKind, r_f: f64, alpha: f64) -> Result<ModeBoundaryCondition> {
    if !r_f.is_finite() || r_f < 0.0 {
        return Err(Error::invalid("r_f", "must be finite and >= 0"));
    }
    match kind {
        FaultKind::None => Err(Error::UnsupportedKind(kind.to_string())),
        k if k.is_pole_to_pole() => Ok(ModeBoundaryCondition::PoleToPole {
            line_mode_resistance: alpha * r_f,
        }),
        FaultKind::InternalNPtg => Ok(ModeBoundaryCondition::GroundFault {
            pole: Pole::Negative,
            series_resistance: 2.0 * r_f,
        }),
        _ => Ok(ModeBoundaryCondition::GroundFault {
            pole: Pole::Positive,
            series_resistance: 2.0 * r_f,
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::f64::consts::SQRT_2;

    #[test]
    fn antisymmetric_and_symmetric_inputs() {
        let m = phase_to_modal(PoleQuantities { p: 1.0, n: -1.0 });
        assert_relative_eq!(m.line, SQRT_2, max_relative = 1e-15);
        assert_eq!(m.zero, 0.0);
        let m = phase_to_modal(PoleQuantities { p: 1.0, n: 1.0 });
        assert_eq!(m.line, 0.0);
        assert_relative_eq!(m.zero, SQRT_2, max_relative = 1e-15);
    }

    #[test]
    fn p_ptg_current_boundary() {
        let i = phase_to_modal(PoleQuantities { p: 3.7, n: 0.0 });
        assert_relative_eq!(i.line, i.zero, max_relative = 1e-15);
    }

    #[test]
    fn ptg_boundary_holds_for_physical_fault() {
        // V_p = I_p R_f, I_n = 0 expressed in modes satisfies the series-2R_f form.
        let r_f = 37.0;
        let i_p = 1250.0;
        let v = phase_to_modal(PoleQuantities { p: i_p * r_f, n: -4.2e5 });
        let i = phase_to_modal(PoleQuantities { p: i_p, n: 0.0 });
        let bc = fault_boundary_modal(FaultKind::InternalPPtg, r_f, 1.0).unwrap();
        let r = bc.residuals(v, i);
        assert!(r[0].abs() < 1e-9 * i_p * r_f && r[1].abs() < 1e-12);
    }

    #[test]
    fn n_ptg_boundary_and_source_sign() {
        let r_f = 12.0;
        let i_n = -800.0;
        let v = phase_to_modal(PoleQuantities { p: 3.1e5, n: i_n * r_f });
        let i = phase_to_modal(PoleQuantities { p: 0.0, n: i_n });
        let bc = fault_boundary_modal(FaultKind::InternalNPtg, r_f, 1.0).unwrap();
        let r = bc.residuals(v, i);
        assert!(r[0].abs() < 1e-9 && r[1].abs() < 1e-12);
        assert_eq!(bc.line_source_sign(), -1.0);
        assert_eq!(
            fault_boundary_modal(FaultKind::InternalPPtg, r_f, 1.0)
                .unwrap()
                .line_source_sign(),
            1.0
        );
    }

    #[test]
    fn bolted_ptg_voltage_sum_vanishes() {
        let bc = fault_boundary_modal(FaultKind::InternalPPtg, 0.0, 1.0).unwrap();
        let v = ModeQuantities { line: 2.5e5, zero: -2.5e5 };
        let i = ModeQuantities { line: 10.0, zero: 10.0 };
        assert_eq!(bc.residuals(v, i), [0.0, 0.0]);
    }

    #[test]
    fn ptp_zero_mode_unexcited_and_alpha_half_is_consistent() {
        let r_f = 50.0;
        let bc = fault_boundary_modal(FaultKind::InternalPtp, r_f, 0.5).unwrap();
        // Physical PTP: V_p - V_n = I_p R_f, I_n = -I_p.
        let i_p = 900.0;
        let v = phase_to_modal(PoleQuantities { p: 0.5 * i_p * r_f, n: -0.5 * i_p * r_f });
        let i = phase_to_modal(PoleQuantities { p: i_p, n: -i_p });
        let r = bc.residuals(v, i);
        assert!(r[0].abs() < 1e-9 && r[1].abs() < 1e-12);
        let literal = fault_boundary_modal(FaultKind::ExternalForwardPtp, r_f, 1.0).unwrap();
        assert_eq!(
            literal,
            ModeBoundaryCondition::PoleToPole {
                line_mode_resistance: r_f
            }
        );
    }

    #[test]
    fn none_kind_rejected() {
        assert!(fault_boundary_modal(FaultKind::None, 0.0, 1.0).is_err());
    }

    #[test]
    fn modal_inductances() {
        assert_eq!(modal_line_inductances(2.0, 0.0).unwrap(), (2.0, 2.0));
        let (l, z) = modal_line_inductances(2.512, 1.0048).unwrap();
        assert_relative_eq!(l, 1.5072, max_relative = 1e-12);
        assert_relative_eq!(z, 3.5168, max_relative = 1e-12);
        assert!(modal_line_inductances(1.0, 1.0).is_err());
    }

    proptest! {
        #[test]
        fn involution(p in -1e7f64..1e7, n in -1e7f64..1e7) {
            let back = modal_to_phase(phase_to_modal(PoleQuantities { p, n }));
            let scale = p.abs().max(n.abs()).max(1.0);
            prop_assert!((back.p - p).abs() <= 1e-15 * scale * 4.0);
            prop_assert!((back.n - n).abs() <= 1e-15 * scale * 4.0);
        }

        #[test]
        fn energy_invariance(p in -1e7f64..1e7, n in -1e7f64..1e7) {
            let m = phase_to_modal(PoleQuantities { p, n });
            let lhs = p * p + n * n;
            let rhs = m.line * m.line + m.zero * m.zero;
            prop_assert!((lhs - rhs).abs() <= 1e-14 * lhs.max(1.0));
        }

        #[test]
        fn antisymmetric_excursion_has_no_zero_mode(
            base in -1e6f64..1e6,
            excursion in prop::collection::vec(-1e6f64..1e6, 1..50)
        ) {
            let p: Vec<f64> = excursion.iter().map(|e| base + e).collect();
            let n: Vec<f64> = excursion.iter().map(|e| -base - e).collect();
            let (_, zero) = modal_series(&p, &n);
            prop_assert!(zero.iter().all(|z| *z == 0.0));
        }
    }
}
