//! Scenario runs, parameter sweeps and the dual-engine oracle comparison.

use std::cmp::Ordering;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use crate::analytic::{
    expected_signature, mode_voltage_transfer, mode_waveforms, predict_signature, AnalyticOptions,
    PolaritySignature, Sign, POLARITY_WINDOW,
};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::laplace::InversionSettings;
use crate::network::build_network;
use crate::params::{ClrSet, FaultKind, FaultScenario, Grid, SystemParams, Topology};
use crate::relay::{add_measurement_noise, classify, condition, ConditionedSignals, RelayDecision, RelaySettings, Verdict};
use crate::sim::{relay_tap, simulate, MeasurementSet, SimConfig};
use crate::trace::{dominant, Trace};

/// Everything except the fault: grid, relay, integration and closed-form
/// model settings.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct Study {
    pub system: SystemParams,
    pub topology: Topology,
    pub relay: RelaySettings,
    pub sim: SimConfig,
    pub analytic: AnalyticOptions,
}

impl Study {
    /// Grid with every reactor set to `clr` (topology reactors when `None`).
    pub fn grid(&self, clr: Option<f64>) -> Result<Grid> {
        let mut topology = self.topology.clone();
        if let Some(l) = clr {
            topology.clr = ClrSet::uniform(l);
        }
        Grid::new(&self.system, &topology)
    }

    pub fn simulate(&self, fault: &FaultScenario, clr: Option<f64>) -> Result<MeasurementSet> {
        self.sim.validate()?;
        let grid = self.grid(clr)?;
        let model = build_network(&grid, fault, &self.sim.options())?;
        simulate(&model, grid.relay, self.sim.t_end, self.sim.dt)
    }
}

/// Outputs of a single scenario run.
#[derive(Clone, Debug, PartialEq)]
pub struct RunOutput {
    pub measurements: MeasurementSet,
    pub v_l120: Trace,
    pub v_l121: Trace,
    pub conditioned: ConditionedSignals,
    pub decision: RelayDecision,
}

pub fn run_scenario(study: &Study, fault: &FaultScenario) -> Result<RunOutput> {
    let measurements = study.simulate(fault, None)?;
    let (v_l120, v_l121) = relay_tap(&measurements);
    let conditioned = condition(&measurements, &study.relay)?;
    let decision = classify(&measurements, &study.relay)?;
    Ok(RunOutput {
        measurements,
        v_l120,
        v_l121,
        conditioned,
        decision,
    })
}

/// Signs of the dominant relay-point mode voltages over `window` seconds
/// after the fault switch; `|V_L120| <= dead_band` maps to zero.
pub fn observed_signature(ms: &MeasurementSet, dead_band: f64, window: f64) -> PolaritySignature {
    let (zero, line) = relay_tap(ms);
    let start = ms.fault_index.map_or(0, |k| k + 1);
    let n = (window / ms.dt()).round() as usize;
    let range = start.min(ms.len())..(start + n).min(ms.len());
    PolaritySignature {
        zero_mode: Sign::with_dead_band(zero.dominant(range.clone()), dead_band),
        line_mode: Sign::of(line.dominant(range)),
    }
}

/// Which engines a sweep runs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Mode {
    Simulate,
    Analytic,
    Both,
}

impl Mode {
    pub fn simulates(self) -> bool {
        self != Mode::Analytic
    }

    pub fn analyses(self) -> bool {
        self != Mode::Simulate
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Simulate => "simulate",
            Mode::Analytic => "analytic",
            Mode::Both => "both",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "simulate" => Ok(Mode::Simulate),
            "analytic" => Ok(Mode::Analytic),
            "both" => Ok(Mode::Both),
            _ => Err(Error::invalid("mode", format!("`{s}` is not simulate, analytic or both"))),
        }
    }
}

/// Value lists of a sweep. Fault locations apply to internal kinds only, so
/// external kinds contribute one point per remaining combination.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepSpec {
    pub kinds: Vec<FaultKind>,
    pub location_d: Vec<f64>,
    pub r_f: Vec<f64>,
    pub clr: Vec<f64>,
    /// `f64::INFINITY` means no noise.
    pub snr_db: Vec<f64>,
    pub seeds: Vec<u64>,
    pub mode: Mode,
}

impl Default for SweepSpec {
    fn default() -> Self {
        SweepSpec {
            kinds: FaultKind::FAULTS.to_vec(),
            location_d: vec![0.1, 0.5, 0.9],
            r_f: vec![0.0, 100.0, 200.0],
            clr: vec![0.09, 0.13, 0.17],
            snr_db: vec![f64::INFINITY],
            seeds: vec![0],
            mode: Mode::Simulate,
        }
    }
}

/// One grid point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SweepPoint {
    pub kind: FaultKind,
    pub location_d: Option<f64>,
    pub r_f: f64,
    pub clr: f64,
    pub snr_db: f64,
    pub seed: u64,
}

impl SweepPoint {
    pub fn fault(&self) -> FaultScenario {
        FaultScenario::new(self.kind, self.location_d, self.r_f)
    }

    /// Stable identifier, also the sort key order.
    pub fn id(&self) -> String {
        let d = self.location_d.map_or("-".to_string(), |d| format!("{d}"));
        format!(
            "{}/d={}/rf={}/clr={}/snr={}/seed={}",
            self.kind, d, self.r_f, self.clr, self.snr_db, self.seed
        )
    }

    fn same_simulation(&self, other: &SweepPoint) -> bool {
        self.kind == other.kind
            && self.location_d == other.location_d
            && self.r_f == other.r_f
            && self.clr == other.clr
    }

    pub fn cmp_key(&self, other: &SweepPoint) -> Ordering {
        let d = |p: &SweepPoint| p.location_d.unwrap_or(-1.0);
        self.kind
            .cmp(&other.kind)
            .then(d(self).total_cmp(&d(other)))
            .then(self.r_f.total_cmp(&other.r_f))
            .then(self.clr.total_cmp(&other.clr))
            .then(self.snr_db.total_cmp(&other.snr_db))
            .then(self.seed.cmp(&other.seed))
    }
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        let lists = [
            ("kinds", self.kinds.is_empty()),
            ("r_f", self.r_f.is_empty()),
            ("clr", self.clr.is_empty()),
            ("snr_db", self.snr_db.is_empty()),
            ("seeds", self.seeds.is_empty()),
        ];
        for (name, empty) in lists {
            if empty {
                return Err(Error::invalid(name, "value list must not be empty"));
            }
        }
        if self.kinds.iter().any(|k| k.is_internal()) && self.location_d.is_empty() {
            return Err(Error::invalid("location_d", "value list must not be empty for internal kinds"));
        }
        if self.kinds.contains(&FaultKind::None) && self.snr_db.iter().any(|s| s.is_finite()) {
            return Err(Error::invalid("snr_db", "a no-fault record has no signal power for a finite SNR"));
        }
        Ok(())
    }

    /// Cartesian product, sorted by key.
    pub fn points(&self) -> Vec<SweepPoint> {
        let mut out = Vec::new();
        for &kind in &self.kinds {
            let ds: Vec<Option<f64>> = if kind.is_internal() {
                self.location_d.iter().map(|&d| Some(d)).collect()
            } else {
                vec![None]
            };
            for &location_d in &ds {
                for &r_f in &self.r_f {
                    for &clr in &self.clr {
                        for &snr_db in &self.snr_db {
                            for &seed in &self.seeds {
                                out.push(SweepPoint {
                                    kind,
                                    location_d,
                                    r_f,
                                    clr,
                                    snr_db,
                                    seed,
                                });
                            }
                        }
                    }
                }
            }
        }
        out.sort_by(|a, b| a.cmp_key(b));
        out
    }

    pub fn size(&self) -> usize {
        self.points().len()
    }
}

/// Simulation-engine results of one grid point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SimulatedRow {
    pub signature: PolaritySignature,
    pub decision: RelayDecision,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub point: SweepPoint,
    pub expected_verdict: Verdict,
    pub expected_signature: Option<PolaritySignature>,
    pub simulated: Option<SimulatedRow>,
    pub predicted: Option<PolaritySignature>,
    /// Grid-point failure; the rest of the sweep is unaffected.
    pub error: Option<String>,
}

impl SweepRow {
    /// Verdict matches (simulation) and predicted signature matches
    /// (analytic), for whichever engines ran.
    pub fn pass(&self) -> bool {
        if self.error.is_some() {
            return false;
        }
        let sim_ok = self
            .simulated
            .is_none_or(|s| s.decision.verdict == self.expected_verdict);
        let ana_ok = self.predicted.is_none_or(|p| Some(p) == self.expected_signature);
        sim_ok && ana_ok
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepReport {
    pub mode: Mode,
    pub rows: Vec<SweepRow>,
}

impl SweepReport {
    pub fn passed(&self) -> usize {
        self.rows.iter().filter(|r| r.pass()).count()
    }
}

/// Outcome of one grid point; failures are kept as messages.
type PointResult<T> = std::result::Result<T, String>;

/// Runs every grid point. Each distinct fault scenario is simulated once
/// and shared by its noise realizations.
pub fn run_sweep(study: &Study, spec: &SweepSpec, exec: Execution) -> Result<SweepReport> {
    spec.validate()?;
    study.relay.validate()?;
    study.sim.validate()?;
    let points = spec.points();
    let mut scenarios: Vec<SweepPoint> = Vec::new();
    for p in &points {
        if !scenarios.iter().any(|q| q.same_simulation(p)) {
            scenarios.push(*p);
        }
    }
    let sims: Vec<Option<PointResult<MeasurementSet>>> = if spec.mode.simulates() {
        exec.map(&scenarios, |p| Some(study.simulate(&p.fault(), Some(p.clr)).map_err(|e| e.to_string())))
    } else {
        vec![None; scenarios.len()]
    };
    let predictions: Vec<Option<PointResult<PolaritySignature>>> = if spec.mode.analyses() {
        exec.map(&scenarios, |p| {
            Some(predict_point(study, p).map_err(|e| e.to_string()))
        })
    } else {
        vec![None; scenarios.len()]
    };
    let rows = exec.map(&points, |p| {
        let j = scenarios.iter().position(|q| q.same_simulation(p)).unwrap_or(0);
        let mut row = SweepRow {
            point: *p,
            expected_verdict: Verdict::expected(p.kind),
            expected_signature: expected_signature(p.kind),
            simulated: None,
            predicted: None,
            error: None,
        };
        let mut errors = Vec::new();
        match &sims[j] {
            Some(Ok(ms)) => match evaluate_record(study, ms, p) {
                Ok(s) => row.simulated = Some(s),
                Err(e) => errors.push(e.to_string()),
            },
            Some(Err(e)) => errors.push(e.clone()),
            None => {}
        }
        match &predictions[j] {
            Some(Ok(sig)) => row.predicted = Some(*sig),
            Some(Err(e)) => errors.push(e.clone()),
            None => {}
        }
        if !errors.is_empty() {
            row.error = Some(errors.join("; "));
        }
        row
    });
    Ok(SweepReport { mode: spec.mode, rows })
}

fn predict_point(study: &Study, p: &SweepPoint) -> Result<PolaritySignature> {
    if p.kind == FaultKind::None {
        return Ok(PolaritySignature {
            zero_mode: Sign::Zero,
            line_mode: Sign::Zero,
        });
    }
    let grid = study.grid(Some(p.clr))?;
    predict_signature(p.kind, p.location_d, p.r_f, &grid, &study.analytic, study.relay.e_set)
}

fn evaluate_record(study: &Study, ms: &MeasurementSet, p: &SweepPoint) -> Result<SimulatedRow> {
    let noisy;
    let record = if p.snr_db.is_finite() {
        noisy = add_measurement_noise(ms, p.snr_db, p.seed)?;
        &noisy
    } else {
        ms
    };
    Ok(SimulatedRow {
        signature: observed_signature(record, study.relay.e_set, study.relay.polarity_window),
        decision: classify(record, &study.relay)?,
    })
}

pub const SWEEP_HEADER: [&str; 21] = [
    "scenario",
    "kind",
    "location_d",
    "r_f_ohm",
    "clr_H",
    "snr_db",
    "seed",
    "verdict",
    "expected_verdict",
    "max_delta_v_V",
    "v_l120_V",
    "v_l121_V",
    "max_delta_i_p_A",
    "max_delta_i_n_A",
    "direction_delta_i_A",
    "trigger_time_s",
    "latency_ms",
    "simulated_signature",
    "predicted_signature",
    "expected_signature",
    "pass",
];

/// One CSV row per grid point, followed by an `error` column.
pub fn write_sweep_csv<W: Write>(report: &SweepReport, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<&str> = SWEEP_HEADER.to_vec();
    header.push("error");
    w.write_record(&header)?;
    let sig = |s: Option<PolaritySignature>| s.map(|s| s.to_string()).unwrap_or_default();
    let num = |v: Option<f64>| v.map(|x| format!("{x:e}")).unwrap_or_default();
    for r in &report.rows {
        let p = &r.point;
        let d = r.simulated.map(|s| s.decision);
        let e = d.map(|d| d.evidence);
        w.write_record([
            p.id(),
            p.kind.to_string(),
            p.location_d.map(|d| d.to_string()).unwrap_or_default(),
            p.r_f.to_string(),
            p.clr.to_string(),
            p.snr_db.to_string(),
            p.seed.to_string(),
            d.map(|d| d.verdict.to_string()).unwrap_or_default(),
            r.expected_verdict.to_string(),
            num(e.map(|e| e.max_delta_v)),
            num(e.map(|e| e.v_l120)),
            num(e.map(|e| e.v_l121)),
            num(e.map(|e| e.max_delta_i_p)),
            num(e.map(|e| e.max_delta_i_n)),
            num(e.map(|e| e.max_delta_i)),
            num(d.and_then(|d| d.trigger_time)),
            num(d.and_then(|d| d.latency_ms())),
            sig(r.simulated.map(|s| s.signature)),
            sig(r.predicted),
            sig(r.expected_signature),
            r.pass().to_string(),
            r.error.clone().unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Pivot of the peak `|dV_CLR|` (kV) of noiseless internal
/// rows: one line per (kind, R_f, CLR), one column per fault location.
#[derive(Clone, Debug, PartialEq)]
pub struct Pivot {
    pub locations: Vec<f64>,
    pub lines: Vec<PivotLine>,
}

/// (kind, r_f, clr, one value per location; NaN where missing).
pub type PivotLine = (FaultKind, f64, f64, Vec<f64>);

impl Pivot {
    pub fn from_report(report: &SweepReport) -> Pivot {
        let rows: Vec<&SweepRow> = report
            .rows
            .iter()
            .filter(|r| r.point.kind.is_internal() && !r.point.snr_db.is_finite() && r.simulated.is_some())
            .collect();
        let mut locations: Vec<f64> = rows.iter().filter_map(|r| r.point.location_d).collect();
        locations.sort_by(f64::total_cmp);
        locations.dedup();
        let mut lines: Vec<PivotLine> = Vec::new();
        for r in rows {
            let p = r.point;
            let v = r.simulated.map_or(f64::NAN, |s| s.decision.evidence.max_delta_v / 1e3);
            let col = locations.iter().position(|&d| Some(d) == p.location_d).unwrap_or(0);
            match lines.iter_mut().find(|l| l.0 == p.kind && l.1 == p.r_f && l.2 == p.clr) {
                Some(l) => {
                    if l.3[col].is_nan() {
                        l.3[col] = v;
                    }
                }
                None => {
                    let mut vals = vec![f64::NAN; locations.len()];
                    vals[col] = v;
                    lines.push((p.kind, p.r_f, p.clr, vals));
                }
            }
        }
        Pivot { locations, lines }
    }

    pub fn value(&self, kind: FaultKind, r_f: f64, clr: f64, d: f64) -> Option<f64> {
        let col = self.locations.iter().position(|&x| x == d)?;
        self.lines
            .iter()
            .find(|l| l.0 == kind && l.1 == r_f && l.2 == clr)
            .map(|l| l.3[col])
    }

    /// Violations of strict ordering: decreasing in R_f and in d,
    /// increasing in CLR.
    pub fn monotonicity_violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        let mut kinds: Vec<FaultKind> = self.lines.iter().map(|l| l.0).collect();
        kinds.dedup();
        let axis = |pick: fn(&PivotLine) -> f64| {
            let mut v: Vec<f64> = self.lines.iter().map(pick).collect();
            v.sort_by(f64::total_cmp);
            v.dedup();
            v
        };
        let rfs = axis(|l| l.1);
        let clrs = axis(|l| l.2);
        for &kind in &kinds {
            for &clr in &clrs {
                for &d in &self.locations {
                    let vals: Vec<Option<f64>> = rfs.iter().map(|&r| self.value(kind, r, clr, d)).collect();
                    check_strict(&mut out, &vals, false, || format!("{kind} clr={clr} d={d} along r_f"));
                }
            }
            for &r in &rfs {
                for &d in &self.locations {
                    let vals: Vec<Option<f64>> = clrs.iter().map(|&c| self.value(kind, r, c, d)).collect();
                    check_strict(&mut out, &vals, true, || format!("{kind} r_f={r} d={d} along clr"));
                }
                for &clr in &clrs {
                    let vals: Vec<Option<f64>> = self.locations.iter().map(|&d| self.value(kind, r, clr, d)).collect();
                    check_strict(&mut out, &vals, false, || format!("{kind} r_f={r} clr={clr} along d"));
                }
            }
        }
        out
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["kind".to_string(), "r_f_ohm".into(), "clr_H".into()];
        header.extend(self.locations.iter().map(|d| format!("d={d}_kV")));
        w.write_record(&header)?;
        for (kind, r_f, clr, vals) in &self.lines {
            let mut rec = vec![kind.to_string(), r_f.to_string(), clr.to_string()];
            rec.extend(vals.iter().map(|v| format!("{v:.1}")));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn check_strict(out: &mut Vec<String>, vals: &[Option<f64>], increasing: bool, label: impl Fn() -> String) {
    let vals: Vec<f64> = vals.iter().flatten().copied().collect();
    let ok = vals.windows(2).all(|w| if increasing { w[1] > w[0] } else { w[1] < w[0] });
    if !ok {
        out.push(format!("{}: {:?}", label(), vals));
    }
}

/// Dual-engine comparison of one internal scenario in stiff-source mode.
#[derive(Clone, Debug, PartialEq)]
pub struct OracleReport {
    pub kind: FaultKind,
    /// Analytic and simulated V_L121 on t = j dt after inception, j >= 1.
    pub analytic: Vec<f64>,
    pub simulated: Vec<f64>,
    pub analytic_zero_peak: f64,
    pub simulated_zero_peak: f64,
    /// First local extremum of |V_L121| in each engine.
    pub analytic_extremum: f64,
    pub simulated_extremum: f64,
    pub relative_error: f64,
    pub inversion_discrepancy: f64,
}

impl OracleReport {
    pub fn pass(&self, tolerance: f64) -> bool {
        self.relative_error <= tolerance
    }

    /// Zero-mode null relative to the line mode in both engines.
    pub fn zero_mode_ratio(&self) -> (f64, f64) {
        let peak = |x: &[f64]| x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        (
            self.analytic_zero_peak / peak(&self.analytic),
            self.simulated_zero_peak / peak(&self.simulated),
        )
    }
}

/// Value of the first local maximum of `|x|` (signed).
pub fn first_extremum(x: &[f64]) -> f64 {
    for j in 0..x.len() {
        let here = x[j].abs();
        let next_ok = j + 1 >= x.len() || here >= x[j + 1].abs();
        let prev_ok = j == 0 || here >= x[j - 1].abs();
        if prev_ok && next_ok {
            return x[j];
        }
    }
    dominant(x)
}

/// Compares the closed-form and simulated line-mode voltages of `fault` on
/// the grid with all reactors at `clr`, over the polarity window.
pub fn compare_oracle(study: &Study, fault: &FaultScenario, clr: Option<f64>) -> Result<OracleReport> {
    if fault.kind == FaultKind::None {
        return Err(Error::UnsupportedKind("the oracle needs a fault".into()));
    }
    let stiff = Study {
        sim: SimConfig {
            stiff_sources: true,
            ramp: None,
            ..study.sim.clone()
        },
        ..study.clone()
    };
    let grid = stiff.grid(clr)?;
    let ms = stiff.simulate(fault, clr)?;
    let (zero, line) = relay_tap(&ms);
    let start = ms.fault_index.map_or(0, |k| k + 1);
    let dt = ms.dt();
    let n = ((POLARITY_WINDOW / dt).round() as usize).min(ms.len() - start);
    let simulated = line.samples[start..start + n].to_vec();
    let sim_zero = &zero.samples[start..start + n];
    let t: Vec<f64> = (1..=n).map(|j| j as f64 * dt).collect();
    let transfer = mode_voltage_transfer(fault.kind, fault.location_d, fault.r_f, &grid, &study.analytic)?;
    let w = mode_waveforms(&transfer, &t, &InversionSettings::default(), Execution::Sequential)?;
    let peak = |x: &[f64]| x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let analytic_extremum = first_extremum(&w.line.talbot);
    let simulated_extremum = first_extremum(&simulated);
    Ok(OracleReport {
        kind: fault.kind,
        analytic_zero_peak: peak(&w.zero.talbot),
        simulated_zero_peak: peak(sim_zero),
        relative_error: (simulated_extremum - analytic_extremum).abs() / analytic_extremum.abs(),
        analytic_extremum,
        simulated_extremum,
        inversion_discrepancy: w.line.max_discrepancy.max(w.zero.max_discrepancy),
        analytic: w.line.talbot,
        simulated,
    })
}
