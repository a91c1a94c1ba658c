//! Physical parameters, topology and fault scenarios of the four-terminal grid.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Half-bridge MMC data (one converter).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MmcParams {
    /// Arm resistance R, ohm.
    pub arm_resistance: f64,
    /// Arm inductance L, henry.
    pub arm_inductance: f64,
    /// Sub-module capacitance C, farad.
    pub sm_capacitance: f64,
    /// Sub-modules per arm N.
    pub sm_count: u32,
    /// DC-link voltage V_dc, volt, pole to pole.
    pub dc_link_voltage: f64,
}

impl Default for MmcParams {
    /// Default converter: 0.85 ohm, 100 mH, 1.5 mF, 200 SMs, +/-500 kV.
    fn default() -> Self {
        MmcParams {
            arm_resistance: 0.85,
            arm_inductance: 0.1,
            sm_capacitance: 1.5e-3,
            sm_count: 200,
            dc_link_voltage: 1.0e6,
        }
    }
}

impl MmcParams {
    pub fn validate(&self) -> Result<()> {
        finite_at_least("arm_resistance", self.arm_resistance, 0.0)?;
        finite_positive("arm_inductance", self.arm_inductance)?;
        finite_positive("sm_capacitance", self.sm_capacitance)?;
        finite_positive("dc_link_voltage", self.dc_link_voltage)?;
        if self.sm_count < 1 {
            return Err(Error::invalid("sm_count", "must be at least 1"));
        }
        Ok(())
    }
}

/// Series R-L-C equivalent of one MMC seen from its DC terminals.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MmcEquivalent {
    pub r_mmc: f64,
    pub l_mmc: f64,
    pub c_mmc: f64,
}

/// R_MMC = 2R/3, L_MMC = 2L/3, C_MMC = 6C/N.
pub fn mmc_equivalent(p: &MmcParams) -> Result<MmcEquivalent> {
    p.validate()?;
    Ok(MmcEquivalent {
        r_mmc: 2.0 * p.arm_resistance / 3.0,
        l_mmc: 2.0 * p.arm_inductance / 3.0,
        c_mmc: 6.0 * p.sm_capacitance / f64::from(p.sm_count),
    })
}

/// Per-metre overhead-line constants shared by every line of the grid.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Conductor {
    /// Series resistance, ohm/m.
    pub r_per_m: f64,
    /// Self inductance per pole, H/m.
    pub l_per_m: f64,
    /// Pole-to-pole mutual inductance, H/m.
    pub m_per_m: f64,
}

/// Default mutual-to-self inductance ratio of the overhead line.
pub const DEFAULT_COUPLING_RATIO: f64 = 0.4;

impl Default for Conductor {
    fn default() -> Self {
        Conductor::with_coupling_ratio(DEFAULT_COUPLING_RATIO)
    }
}

impl Conductor {
    /// Default line constants with `m_per_m = ratio * l_per_m`.
    pub fn with_coupling_ratio(ratio: f64) -> Self {
        let l_per_m = 1.256e-5;
        Conductor {
            r_per_m: 4.116e-5,
            l_per_m,
            m_per_m: ratio * l_per_m,
        }
    }

    pub fn line(&self, length: f64) -> LineParams {
        LineParams {
            length,
            r_per_m: self.r_per_m,
            l_per_m: self.l_per_m,
            m_per_m: self.m_per_m,
        }
    }
}

/// One two-pole overhead line.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LineParams {
    /// Route length, metre.
    pub length: f64,
    pub r_per_m: f64,
    pub l_per_m: f64,
    pub m_per_m: f64,
}

/// Lumped totals of a line: resistance, self and mutual inductance per pole.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LineTotals {
    pub resistance: f64,
    pub inductance: f64,
    pub mutual: f64,
}

impl LineTotals {
    /// Line-mode inductance L - M.
    pub fn line_mode_inductance(&self) -> f64 {
        self.inductance - self.mutual
    }

    /// Zero-mode inductance L + M.
    pub fn zero_mode_inductance(&self) -> f64 {
        self.inductance + self.mutual
    }

    /// Totals of the fraction `frac` of the line.
    pub fn portion(&self, frac: f64) -> LineTotals {
        LineTotals {
            resistance: self.resistance * frac,
            inductance: self.inductance * frac,
            mutual: self.mutual * frac,
        }
    }
}

/// Multiplies per-metre constants by the line length.
pub fn line_totals(lp: &LineParams) -> Result<LineTotals> {
    finite_positive("length", lp.length)?;
    finite_at_least("r_per_m", lp.r_per_m, 0.0)?;
    finite_positive("l_per_m", lp.l_per_m)?;
    finite_at_least("m_per_m", lp.m_per_m, 0.0)?;
    if lp.m_per_m >= lp.l_per_m {
        return Err(Error::invalid(
            "m_per_m",
            "mutual inductance must be smaller than self inductance",
        ));
    }
    Ok(LineTotals {
        resistance: lp.r_per_m * lp.length,
        inductance: lp.l_per_m * lp.length,
        mutual: lp.m_per_m * lp.length,
    })
}

/// Converter terminals of the four-terminal grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Bus {
    B1,
    B2,
    B3,
    B4,
}

impl Bus {
    pub fn number(self) -> u8 {
        match self {
            Bus::B1 => 1,
            Bus::B2 => 2,
            Bus::B3 => 3,
            Bus::B4 => 4,
        }
    }

    pub fn from_number(n: i64) -> Option<Bus> {
        match n {
            1 => Some(Bus::B1),
            2 => Some(Bus::B2),
            3 => Some(Bus::B3),
            4 => Some(Bus::B4),
            _ => None,
        }
    }
}

/// The three lines of the analysed ring segment.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum LineId {
    L12,
    L14,
    L23,
}

impl LineId {
    pub const ALL: [LineId; 3] = [LineId::L12, LineId::L14, LineId::L23];

    pub fn ends(self) -> (Bus, Bus) {
        match self {
            LineId::L12 => (Bus::B1, Bus::B2),
            LineId::L14 => (Bus::B1, Bus::B4),
            LineId::L23 => (Bus::B2, Bus::B3),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            LineId::L12 => "12",
            LineId::L14 => "14",
            LineId::L23 => "23",
        }
    }

    pub fn from_label(s: &str) -> Option<LineId> {
        match s {
            "12" | "21" => Some(LineId::L12),
            "14" | "41" => Some(LineId::L14),
            "23" | "32" => Some(LineId::L23),
            _ => None,
        }
    }
}

/// Default CLR range in henry; values outside only raise a warning.
pub const CLR_RANGE: (f64, f64) = (0.09, 0.17);

/// Current limiting reactors at the modelled line ends.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClrSet {
    /// Bus 1 end of line 12 (the relay reactor).
    pub clr12: f64,
    /// Bus 2 end of line 12.
    pub clr21: f64,
    /// Bus 1 end of line 14.
    pub clr14: f64,
    /// Bus 2 end of line 23.
    pub clr23: f64,
}

impl ClrSet {
    pub fn uniform(l: f64) -> Self {
        ClrSet {
            clr12: l,
            clr21: l,
            clr14: l,
            clr23: l,
        }
    }

    /// Reactor at the `bus` end of `line`, if that end is modelled.
    pub fn at(&self, bus: Bus, line: LineId) -> Option<f64> {
        match (bus, line) {
            (Bus::B1, LineId::L12) => Some(self.clr12),
            (Bus::B2, LineId::L12) => Some(self.clr21),
            (Bus::B1, LineId::L14) => Some(self.clr14),
            (Bus::B2, LineId::L23) => Some(self.clr23),
            _ => None,
        }
    }

    pub fn entries(&self) -> [(&'static str, f64); 4] {
        [
            ("clr_12", self.clr12),
            ("clr_21", self.clr21),
            ("clr_14", self.clr14),
            ("clr_23", self.clr23),
        ]
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in self.entries() {
            finite_positive(name, v)?;
        }
        Ok(())
    }

    /// Human-readable warnings for reactors outside [`CLR_RANGE`].
    pub fn range_warnings(&self) -> Vec<String> {
        self.entries()
            .iter()
            .filter(|(_, v)| *v < CLR_RANGE.0 || *v > CLR_RANGE.1)
            .map(|(name, v)| {
                format!(
                    "{name} = {v} H lies outside the default range [{}, {}] H",
                    CLR_RANGE.0, CLR_RANGE.1
                )
            })
            .collect()
    }
}

impl Default for ClrSet {
    fn default() -> Self {
        ClrSet::uniform(0.09)
    }
}

/// Default route length of every line, metre.
pub const DEFAULT_LINE_LENGTH: f64 = 20.0e3;

/// Grid topology around the protected line 12.
#[derive(Clone, Debug, PartialEq)]
pub struct Topology {
    pub length_12: f64,
    pub length_14: f64,
    pub length_23: f64,
    pub clr: ClrSet,
    /// Pole-to-pole equivalent DC-link capacitance at bus 4 (remote end of
    /// line 14); `None` uses C_MMC.
    pub c_14: Option<f64>,
    /// Same for bus 3 (remote end of line 23).
    pub c_23: Option<f64>,
    /// Relay location as (bus, line).
    pub relay: (Bus, LineId),
}

impl Default for Topology {
    fn default() -> Self {
        Topology {
            length_12: DEFAULT_LINE_LENGTH,
            length_14: DEFAULT_LINE_LENGTH,
            length_23: DEFAULT_LINE_LENGTH,
            clr: ClrSet::default(),
            c_14: None,
            c_23: None,
            relay: (Bus::B1, LineId::L12),
        }
    }
}

impl Topology {
    pub fn buses(&self) -> [Bus; 4] {
        [Bus::B1, Bus::B2, Bus::B3, Bus::B4]
    }

    pub fn length(&self, line: LineId) -> f64 {
        match line {
            LineId::L12 => self.length_12,
            LineId::L14 => self.length_14,
            LineId::L23 => self.length_23,
        }
    }

    pub fn validate(&self) -> Result<()> {
        finite_positive("length_12", self.length_12)?;
        finite_positive("length_14", self.length_14)?;
        finite_positive("length_23", self.length_23)?;
        self.clr.validate()?;
        if let Some(c) = self.c_14 {
            finite_positive("c_14", c)?;
        }
        if let Some(c) = self.c_23 {
            finite_positive("c_23", c)?;
        }
        let (bus, line) = self.relay;
        if self.clr.at(bus, line).is_none() {
            return Err(Error::invalid(
                "relay",
                format!(
                    "no modelled reactor at bus {} end of line {}",
                    bus.number(),
                    line.label()
                ),
            ));
        }
        Ok(())
    }
}

/// Whole-grid physical constants.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct SystemParams {
    pub mmc: MmcParams,
    pub conductor: Conductor,
}

/// Fault contingencies of the protected segment.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FaultKind {
    None,
    InternalPtp,
    InternalPPtg,
    InternalNPtg,
    ExternalForwardPtg,
    ExternalBackwardPtg,
    ExternalForwardPtp,
    ExternalBackwardPtp,
}

impl FaultKind {
    /// Every contingency with a fault, internal first.
    pub const FAULTS: [FaultKind; 7] = [
        FaultKind::InternalPtp,
        FaultKind::InternalPPtg,
        FaultKind::InternalNPtg,
        FaultKind::ExternalForwardPtg,
        FaultKind::ExternalBackwardPtg,
        FaultKind::ExternalForwardPtp,
        FaultKind::ExternalBackwardPtp,
    ];

    pub fn is_internal(self) -> bool {
        matches!(
            self,
            FaultKind::InternalPtp | FaultKind::InternalPPtg | FaultKind::InternalNPtg
        )
    }

    pub fn is_pole_to_pole(self) -> bool {
        matches!(
            self,
            FaultKind::InternalPtp | FaultKind::ExternalForwardPtp | FaultKind::ExternalBackwardPtp
        )
    }

    pub fn is_ground_fault(self) -> bool {
        self != FaultKind::None && !self.is_pole_to_pole()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            FaultKind::None => "none",
            FaultKind::InternalPtp => "internal_ptp",
            FaultKind::InternalPPtg => "internal_p_ptg",
            FaultKind::InternalNPtg => "internal_n_ptg",
            FaultKind::ExternalForwardPtg => "external_forward_ptg",
            FaultKind::ExternalBackwardPtg => "external_backward_ptg",
            FaultKind::ExternalForwardPtp => "external_forward_ptp",
            FaultKind::ExternalBackwardPtp => "external_backward_ptp",
        }
    }
}

impl fmt::Display for FaultKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FaultKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let all = std::iter::once(FaultKind::None).chain(FaultKind::FAULTS);
        for k in all {
            if k.as_str() == s {
                return Ok(k);
            }
        }
        Err(Error::invalid("kind", format!("unknown fault kind `{s}`")))
    }
}

/// Default fault inception time, second.
pub const DEFAULT_T_FAULT: f64 = 1.0e-3;

/// One fault event.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FaultScenario {
    pub kind: FaultKind,
    /// Fraction of line 12 from bus 1 (internal faults only).
    pub location_d: Option<f64>,
    /// Fault resistance, ohm.
    pub r_f: f64,
    /// Inception time, second.
    pub t_fault: f64,
}

impl Default for FaultScenario {
    fn default() -> Self {
        FaultScenario::none()
    }
}

impl FaultScenario {
    pub fn none() -> Self {
        FaultScenario {
            kind: FaultKind::None,
            location_d: None,
            r_f: 0.0,
            t_fault: DEFAULT_T_FAULT,
        }
    }

    pub fn internal(kind: FaultKind, d: f64, r_f: f64) -> Self {
        FaultScenario {
            kind,
            location_d: Some(d),
            r_f,
            t_fault: DEFAULT_T_FAULT,
        }
    }

    pub fn external(kind: FaultKind, r_f: f64) -> Self {
        FaultScenario {
            kind,
            location_d: None,
            r_f,
            t_fault: DEFAULT_T_FAULT,
        }
    }

    /// Builds an internal or external scenario depending on `kind`.
    pub fn new(kind: FaultKind, d: Option<f64>, r_f: f64) -> Self {
        if kind.is_internal() {
            FaultScenario::internal(kind, d.unwrap_or(0.5), r_f)
        } else if kind == FaultKind::None {
            FaultScenario::none()
        } else {
            FaultScenario::external(kind, r_f)
        }
    }

    pub fn validate(&self) -> Result<()> {
        match (self.kind.is_internal(), self.location_d) {
            (true, None) => {
                return Err(Error::invalid(
                    "location_d",
                    "required for internal faults",
                ))
            }
            (false, Some(_)) => {
                return Err(Error::invalid(
                    "location_d",
                    "only meaningful for internal faults",
                ))
            }
            (true, Some(d)) => {
                if !(0.0..=1.0).contains(&d) {
                    return Err(Error::invalid("location_d", format!("{d} is outside [0, 1]")));
                }
            }
            (false, None) => {}
        }
        finite_at_least("r_f", self.r_f, 0.0)?;
        finite_at_least("t_fault", self.t_fault, 0.0)?;
        Ok(())
    }
}

/// Derived element values consumed by both engines.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Grid {
    pub v_dc: f64,
    pub mmc: MmcEquivalent,
    pub line12: LineTotals,
    pub line14: LineTotals,
    pub line23: LineTotals,
    pub clr: ClrSet,
    /// Pole-to-pole terminal capacitances at buses 4 and 3.
    pub c_14: f64,
    pub c_23: f64,
    pub relay: (Bus, LineId),
}

impl Grid {
    pub fn new(system: &SystemParams, topology: &Topology) -> Result<Grid> {
        topology.validate()?;
        let mmc = mmc_equivalent(&system.mmc)?;
        let c = system.conductor;
        Ok(Grid {
            v_dc: system.mmc.dc_link_voltage,
            mmc,
            line12: line_totals(&c.line(topology.length_12))?,
            line14: line_totals(&c.line(topology.length_14))?,
            line23: line_totals(&c.line(topology.length_23))?,
            clr: topology.clr,
            c_14: topology.c_14.unwrap_or(mmc.c_mmc),
            c_23: topology.c_23.unwrap_or(mmc.c_mmc),
            relay: topology.relay,
        })
    }

    /// Default grid with every CLR set to `clr`.
    pub fn with_clr(clr: f64) -> Grid {
        let topology = Topology {
            clr: ClrSet::uniform(clr),
            ..Topology::default()
        };
        Grid::new(&SystemParams::default(), &topology).expect("default grid is valid")
    }

    pub fn line(&self, id: LineId) -> LineTotals {
        match id {
            LineId::L12 => self.line12,
            LineId::L14 => self.line14,
            LineId::L23 => self.line23,
        }
    }
}

pub(crate) fn finite_positive(field: &str, v: f64) -> Result<()> {
    if !v.is_finite() || v <= 0.0 {
        return Err(Error::invalid(field, format!("{v} must be finite and > 0")));
    }
    Ok(())
}

pub(crate) fn finite_at_least(field: &str, v: f64, min: f64) -> Result<()> {
    if !v.is_finite() || v < min {
        return Err(Error::invalid(field, format!("{v} must be finite and >= {min}")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn table_iv_equivalent() {
        let eq = mmc_equivalent(&MmcParams::default()).unwrap();
        assert_relative_eq!(eq.r_mmc, 0.56667, epsilon = 1e-5);
        assert_relative_eq!(eq.c_mmc, 45e-6, max_relative = 1e-12);
        assert_relative_eq!(eq.l_mmc, 0.1 * 2.0 / 3.0, max_relative = 1e-15);
    }

    #[test]
    fn zero_inductance_rejected() {
        let p = MmcParams {
            arm_inductance: 0.0,
            ..MmcParams::default()
        };
        assert!(matches!(
            mmc_equivalent(&p),
            Err(Error::InvalidParameter { ref field, .. }) if field == "arm_inductance"
        ));
    }

    #[test]
    fn line_totals_200_km() {
        let lp = Conductor::default().line(200e3);
        let t = line_totals(&lp).unwrap();
        assert_relative_eq!(t.resistance, 8.232, max_relative = 1e-12);
        assert_relative_eq!(t.inductance, 2.512, max_relative = 1e-12);
        assert_relative_eq!(t.mutual, 1.0048, max_relative = 1e-12);
    }

    #[test]
    fn negative_per_metre_rejected() {
        let mut lp = Conductor::default().line(1e3);
        lp.r_per_m = -1.0;
        assert!(line_totals(&lp).is_err());
        let mut lp = Conductor::default().line(1e3);
        lp.m_per_m = lp.l_per_m;
        assert!(line_totals(&lp).is_err());
    }

    #[test]
    fn fault_location_rules() {
        assert!(FaultScenario::internal(FaultKind::InternalPtp, 1.5, 0.0)
            .validate()
            .is_err());
        let mut f = FaultScenario::external(FaultKind::ExternalForwardPtg, 0.0);
        assert!(f.validate().is_ok());
        f.location_d = Some(0.5);
        assert!(f.validate().is_err());
        assert!(FaultScenario::internal(FaultKind::InternalNPtg, 0.0, 0.0)
            .validate()
            .is_ok());
    }

    #[test]
    fn kind_names_round_trip() {
        for k in std::iter::once(FaultKind::None).chain(FaultKind::FAULTS) {
            assert_eq!(k.as_str().parse::<FaultKind>().unwrap(), k);
        }
        assert!("ptp".parse::<FaultKind>().is_err());
    }

    #[test]
    fn clr_range_warnings() {
        assert!(ClrSet::uniform(0.13).range_warnings().is_empty());
        let mut c = ClrSet::uniform(0.13);
        c.clr21 = 0.3;
        let w = c.range_warnings();
        assert_eq!(w.len(), 1);
        assert!(w[0].contains("clr_21"));
    }

    #[test]
    fn relay_must_sit_on_a_reactor() {
        let t = Topology {
            relay: (Bus::B3, LineId::L23),
            ..Topology::default()
        };
        assert!(t.validate().is_err());
    }

    proptest! {
        #[test]
        fn equivalent_scales_linearly(k in 0.01f64..100.0) {
            let p = MmcParams::default();
            let base = mmc_equivalent(&p).unwrap();
            let scaled = mmc_equivalent(&MmcParams {
                arm_resistance: p.arm_resistance * k,
                arm_inductance: p.arm_inductance * k,
                sm_capacitance: p.sm_capacitance * k,
                ..p
            }).unwrap();
            prop_assert!((scaled.r_mmc - k * base.r_mmc).abs() <= 1e-12 * scaled.r_mmc);
            prop_assert!((scaled.l_mmc - k * base.l_mmc).abs() <= 1e-12 * scaled.l_mmc);
            prop_assert!((scaled.c_mmc - k * base.c_mmc).abs() <= 1e-12 * scaled.c_mmc);
        }

        #[test]
        fn totals_are_linear_in_length(len in 1.0f64..1e6) {
            let c = Conductor::default();
            let a = line_totals(&c.line(len)).unwrap();
            let b = line_totals(&c.line(2.0 * len)).unwrap();
            prop_assert!((b.resistance - 2.0 * a.resistance).abs() <= 1e-12 * b.resistance);
            prop_assert!((b.inductance - 2.0 * a.inductance).abs() <= 1e-12 * b.inductance);
            prop_assert!((b.mutual - 2.0 * a.mutual).abs() <= 1e-12 * b.mutual);
        }
    }
}
