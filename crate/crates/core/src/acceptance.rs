//! Acceptance suite: grid-wide checks of the simulator, the closed-form model
//! and the relay, each reported as one PASS/FAIL line with details.
//!
//! Noiseless grid simulations are computed once per [`Acceptance`] and
//! shared by every check that needs them.

use std::fmt;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use crate::analytic::{expected_signature, mode_voltage_transfer, mode_waveforms, POLARITY_WINDOW};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::laplace::InversionSettings;
use crate::network::VoltageRamp;
use crate::params::{Bus, FaultKind, FaultScenario};
use crate::relay::{add_measurement_noise, classify, RelayDecision, RelaySettings, StreamingRelay, Verdict};
use crate::sim::{relay_tap, MeasurementSet, SimConfig};
use crate::sweep::{
    compare_oracle, observed_signature, Mode, Pivot, SimulatedRow, Study, SweepPoint, SweepReport,
    SweepRow, SweepSpec,
};
use crate::trace::peak_abs;

/// Wall-clock budget of the polarity-signature grid.
pub const GRID_RUNTIME_LIMIT: Duration = Duration::from_secs(300);
/// Band around the calibration value of the bolted near-end PTP trigger, volt.
pub const BOLTED_PTP_BAND: (f64, f64) = (350e3, 850e3);
/// Relative first-extremum error allowed between the two engines.
pub const ORACLE_TOLERANCE: f64 = 0.05;
/// Zero-mode null: max |V_L120| over max |V_L121|.
pub const ZERO_MODE_NULL: f64 = 1e-6;
/// Realizations per scenario in the noise check.
pub const NOISE_SEEDS: u64 = 100;
pub const NOISE_SNR_DB: f64 = 30.0;
/// Relative agreement of the two inverse-Laplace methods.
pub const INVERSION_TOLERANCE: f64 = 0.005;
/// Peak change between steps dt and dt/2, relative to the largest peak of
/// the same quantity.
pub const SELF_CONVERGENCE_TOLERANCE: f64 = 0.005;
/// Energy balance drift relative to the stored energy at inception.
pub const ENERGY_TOLERANCE: f64 = 1e-3;
/// Span and size of the operating-point ramp.
pub const RAMP_DURATION: f64 = 0.1;
pub const RAMP_FRACTION: f64 = 0.1;

/// Identifiers of the checks implemented in this module.
pub const CRITERIA: [u8; 7] = [1, 2, 3, 4, 5, 6, 7];

/// Outcome of one acceptance check.
#[derive(Clone, Debug, PartialEq)]
pub struct CriterionResult {
    pub id: String,
    pub name: &'static str,
    pub pass: bool,
    pub summary: String,
    /// One entry per failing item (or notable measurement).
    pub details: Vec<String>,
}

impl fmt::Display for CriterionResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let status = if self.pass { "PASS" } else { "FAIL" };
        write!(f, "{status} [{}] {}: {}", self.id, self.name, self.summary)
    }
}

fn result(id: impl Into<String>, name: &'static str, pass: bool, summary: String, details: Vec<String>) -> CriterionResult {
    CriterionResult {
        id: id.into(),
        name,
        pass,
        summary,
        details,
    }
}

/// One noiseless grid scenario with its measurements and relay outcome.
#[derive(Clone, Debug)]
pub struct GridRun {
    pub point: SweepPoint,
    pub measurements: MeasurementSet,
    pub row: SweepRow,
}

/// A property check: pass flag, summary and failing items.
type PropertyCheck = fn(&Acceptance) -> Result<(bool, String, Vec<String>)>;

/// Shared state of one acceptance session.
pub struct Acceptance {
    pub study: Study,
    pub spec: SweepSpec,
    pub exec: Execution,
    grid: OnceLock<std::result::Result<(Vec<GridRun>, Duration), String>>,
}

impl Acceptance {
    /// Default study and the full contingency grid.
    pub fn new(exec: Execution) -> Self {
        Acceptance::with_study(Study::default(), exec)
    }

    pub fn with_study(study: Study, exec: Execution) -> Self {
        Acceptance {
            study,
            spec: SweepSpec::default(),
            exec,
            grid: OnceLock::new(),
        }
    }

    /// Noiseless simulations of every grid point and the time they took.
    pub fn grid(&self) -> Result<(&[GridRun], Duration)> {
        let cached = self.grid.get_or_init(|| {
            let start = Instant::now();
            let points = self.spec.points();
            let runs = self.exec.map(&points, |p| -> Result<GridRun> {
                let measurements = self.study.simulate(&p.fault(), Some(p.clr))?;
                let decision = classify(&measurements, &self.study.relay)?;
                let signature = observed_signature(&measurements, self.study.relay.e_set, self.study.relay.polarity_window);
                let row = SweepRow {
                    point: *p,
                    expected_verdict: Verdict::expected(p.kind),
                    expected_signature: expected_signature(p.kind),
                    simulated: Some(SimulatedRow { signature, decision }),
                    predicted: None,
                    error: None,
                };
                Ok(GridRun {
                    point: *p,
                    measurements,
                    row,
                })
            });
            let runs: Result<Vec<GridRun>> = runs.into_iter().collect();
            runs.map(|r| (r, start.elapsed())).map_err(|e| e.to_string())
        });
        match cached {
            Ok((runs, elapsed)) => Ok((runs, *elapsed)),
            Err(e) => Err(Error::Signal(format!("grid simulation failed: {e}"))),
        }
    }

    pub fn report(&self) -> Result<SweepReport> {
        let (runs, _) = self.grid()?;
        Ok(SweepReport {
            mode: Mode::Simulate,
            rows: runs.iter().map(|r| r.row.clone()).collect(),
        })
    }

    /// Runs the selected criteria (all when `only` is empty).
    pub fn run(&self, only: &[u8]) -> Vec<CriterionResult> {
        CRITERIA
            .iter()
            .filter(|c| only.is_empty() || only.contains(c))
            .map(|&c| self.criterion(c))
            .collect()
    }

    /// Evaluates one criterion; internal errors turn into a failing result.
    pub fn criterion(&self, id: u8) -> CriterionResult {
        let (name, outcome) = match id {
            1 => ("polarity signatures", self.polarity_signatures()),
            2 => ("classification", self.classification()),
            3 => ("trigger trends", self.trigger_trends()),
            4 => ("dual-engine oracle", self.oracle()),
            5 => ("noise robustness", self.noise_robustness()),
            6 => ("no-fault immunity", self.no_fault_immunity()),
            7 => ("numerical hygiene", self.numerical_hygiene()),
            _ => ("unknown", Err(Error::invalid("criterion", format!("no criterion {id}")))),
        };
        match outcome {
            Ok((pass, summary, details)) => result(id.to_string(), name, pass, summary, details),
            Err(e) => result(id.to_string(), name, false, format!("error: {e}"), vec![]),
        }
    }

    fn polarity_signatures(&self) -> Result<(bool, String, Vec<String>)> {
        let (runs, elapsed) = self.grid()?;
        let mut details = Vec::new();
        let mut matched = 0;
        for r in runs {
            let observed = r.row.simulated.map(|s| s.signature);
            if observed.is_some() && observed == r.row.expected_signature {
                matched += 1;
            } else {
                details.push(format!(
                    "{}: observed {} expected {}",
                    r.point.id(),
                    observed.map_or("-".into(), |s| s.to_string()),
                    r.row.expected_signature.map_or("-".into(), |s| s.to_string())
                ));
            }
        }
        let pass = matched == runs.len() && elapsed <= GRID_RUNTIME_LIMIT;
        let summary = format!(
            "{matched}/{} signatures match, grid simulated in {:.1} s (limit {} s)",
            runs.len(),
            elapsed.as_secs_f64(),
            GRID_RUNTIME_LIMIT.as_secs()
        );
        Ok((pass, summary, details))
    }

    fn classification(&self) -> Result<(bool, String, Vec<String>)> {
        let report = self.report()?;
        let mut details = Vec::new();
        for row in report.rows.iter().filter(|r| !r.pass()) {
            let d = row.simulated.map(|s| s.decision);
            details.push(format!(
                "{}: {} expected {} (|dV| {:.1} kV, direction |di| {:.0} A)",
                row.point.id(),
                d.map_or("-".into(), |d| d.verdict.to_string()),
                row.expected_verdict,
                d.map_or(f64::NAN, |d| d.evidence.max_delta_v / 1e3),
                d.map_or(f64::NAN, |d| d.evidence.max_delta_i),
            ));
        }
        let hif = report.rows.iter().filter(|r| r.point.r_f == 200.0).count();
        let hif_ok = report.rows.iter().filter(|r| r.point.r_f == 200.0 && r.pass()).count();
        let pass = report.passed() == report.rows.len() && hif > 0;
        let summary = format!(
            "{}/{} verdicts correct ({hif_ok}/{hif} at R_f = 200 ohm)",
            report.passed(),
            report.rows.len()
        );
        Ok((pass, summary, details))
    }

    fn trigger_trends(&self) -> Result<(bool, String, Vec<String>)> {
        let pivot = Pivot::from_report(&self.report()?);
        let ordering = pivot.monotonicity_violations();
        let mut details = ordering.clone();
        let bolted = pivot
            .value(FaultKind::InternalPtp, 0.0, 0.09, 0.1)
            .map(|kv| kv * 1e3)
            .unwrap_or(f64::NAN);
        let in_band = (BOLTED_PTP_BAND.0..=BOLTED_PTP_BAND.1).contains(&bolted);
        if !in_band {
            details.push(format!("bolted PTP d=0.1 clr=0.09: {:.1} kV outside band", bolted / 1e3));
        }
        let mut ptp_above = 0;
        let mut pairs = 0;
        for (kind, r_f, clr, vals) in &pivot.lines {
            if *kind != FaultKind::InternalPtp {
                continue;
            }
            for (j, &d) in pivot.locations.iter().enumerate() {
                if let Some(ptg) = pivot.value(FaultKind::InternalPPtg, *r_f, *clr, d) {
                    pairs += 1;
                    if vals[j] > ptg {
                        ptp_above += 1;
                    } else {
                        details.push(format!(
                            "r_f={r_f} clr={clr} d={d}: PTP {:.1} kV <= PTG {ptg:.1} kV",
                            vals[j]
                        ));
                    }
                }
            }
        }
        let pass = ordering.is_empty() && in_band && pairs > 0 && ptp_above == pairs;
        let summary = format!(
            "{} ordering violations, bolted PTP d=0.1/90 mH = {:.1} kV (band {:.0}-{:.0} kV), PTP above PTG at {ptp_above}/{pairs}",
            ordering.len(),
            bolted / 1e3,
            BOLTED_PTP_BAND.0 / 1e3,
            BOLTED_PTP_BAND.1 / 1e3
        );
        Ok((pass, summary, details))
    }

    fn oracle(&self) -> Result<(bool, String, Vec<String>)> {
        let spec = SweepSpec {
            kinds: vec![FaultKind::InternalPtp, FaultKind::InternalPPtg],
            ..self.spec.clone()
        };
        let points = spec.points();
        let reports = self.exec.map(&points, |p| compare_oracle(&self.study, &p.fault(), Some(p.clr)));
        let mut details = Vec::new();
        let mut worst: (f64, String) = (0.0, String::new());
        let mut worst_null: f64 = 0.0;
        let mut ok = 0;
        for (p, r) in points.iter().zip(reports) {
            let r = r?;
            let mut good = r.pass(ORACLE_TOLERANCE);
            if r.relative_error > worst.0 {
                worst = (r.relative_error, p.id());
            }
            if !good {
                details.push(format!(
                    "{}: extremum {:.1} kV analytic vs {:.1} kV simulated ({:.2} %)",
                    p.id(),
                    r.analytic_extremum / 1e3,
                    r.simulated_extremum / 1e3,
                    r.relative_error * 100.0
                ));
            }
            if p.kind == FaultKind::InternalPtp {
                let (a, s) = r.zero_mode_ratio();
                worst_null = worst_null.max(a).max(s);
                if !(a < ZERO_MODE_NULL && s < ZERO_MODE_NULL) {
                    good = false;
                    details.push(format!("{}: zero-mode ratio analytic {a:.2e}, simulated {s:.2e}", p.id()));
                }
            }
            ok += usize::from(good);
        }
        let summary = format!(
            "{ok}/{} scenarios within {:.0} %, worst {:.2} % at {}, PTP zero-mode ratio <= {worst_null:.1e}",
            points.len(),
            ORACLE_TOLERANCE * 100.0,
            worst.0 * 100.0,
            worst.1
        );
        Ok((ok == points.len(), summary, details))
    }

    fn noise_robustness(&self) -> Result<(bool, String, Vec<String>)> {
        let (runs, _) = self.grid()?;
        let relay = self.study.relay;
        let per_scenario = self.exec.map(runs, |r| -> Result<(usize, usize, Vec<String>)> {
            let noiseless = r.row.simulated.map(|s| s.decision.verdict);
            let mut flips = 0;
            let mut weak = 0;
            let mut notes = Vec::new();
            for seed in 1..=NOISE_SEEDS {
                let noisy = add_measurement_noise(&r.measurements, NOISE_SNR_DB, seed)?;
                let d = classify(&noisy, &relay)?;
                if Some(d.verdict) != noiseless {
                    flips += 1;
                }
                if r.point.kind.is_internal() && !violates_thresholds(&d, &relay) {
                    weak += 1;
                }
            }
            if flips > 0 {
                notes.push(format!(
                    "{}: {flips}/{NOISE_SEEDS} realizations differ from noiseless {}",
                    r.point.id(),
                    noiseless.map_or("-".into(), |v| v.to_string())
                ));
            }
            if weak > 0 {
                notes.push(format!(
                    "{}: U_set/I_set not both violated in {weak}/{NOISE_SEEDS} realizations",
                    r.point.id()
                ));
            }
            Ok((flips, weak, notes))
        });
        let mut details = Vec::new();
        let (mut flips, mut flip_scenarios, mut weak, mut weak_scenarios) = (0, 0, 0, 0);
        for s in per_scenario {
            let (f, w, notes) = s?;
            flips += f;
            weak += w;
            flip_scenarios += usize::from(f > 0);
            weak_scenarios += usize::from(w > 0);
            details.extend(notes);
        }
        let total = runs.len() * NOISE_SEEDS as usize;
        let internal = runs.iter().filter(|r| r.point.kind.is_internal()).count();
        let summary = format!(
            "{}/{total} noisy verdicts agree at {NOISE_SNR_DB} dB ({flip_scenarios} scenarios with flips); \
             internal faults violate U_set and I_set in {}/{} realizations ({weak_scenarios} scenarios short)",
            total - flips,
            internal * NOISE_SEEDS as usize - weak,
            internal * NOISE_SEEDS as usize
        );
        Ok((flips == 0 && weak == 0, summary, details))
    }

    fn no_fault_immunity(&self) -> Result<(bool, String, Vec<String>)> {
        let mut cases: Vec<(String, SimConfig)> = vec![(
            "steady state".into(),
            SimConfig {
                t_end: RAMP_DURATION + 0.02,
                ..self.study.sim.clone()
            },
        )];
        for stiff in [false, true] {
            for sign in [1.0, -1.0] {
                cases.push((
                    format!(
                        "{:+.0} % ramp over {:.0} ms, {} converters",
                        sign * RAMP_FRACTION * 100.0,
                        RAMP_DURATION * 1e3,
                        if stiff { "stiff" } else { "capacitor" }
                    ),
                    SimConfig {
                        t_end: RAMP_DURATION + 0.02,
                        stiff_sources: stiff,
                        ramp: Some(VoltageRamp {
                            fraction: sign * RAMP_FRACTION,
                            start: 0.01,
                            duration: RAMP_DURATION,
                            converters: vec![Bus::B1],
                        }),
                        ..self.study.sim.clone()
                    },
                ));
            }
        }
        let outcomes = self.exec.map(&cases, |(_, sim)| -> Result<RelayDecision> {
            let study = Study {
                sim: sim.clone(),
                ..self.study.clone()
            };
            let ms = study.simulate(&FaultScenario::none(), None)?;
            classify(&ms, &study.relay)
        });
        let mut details = Vec::new();
        let mut ok = 0;
        let mut worst: f64 = 0.0;
        for ((label, _), d) in cases.iter().zip(outcomes) {
            let d = d?;
            worst = worst.max(d.evidence.max_delta_v);
            if d.verdict == Verdict::NoFault {
                ok += 1;
            } else {
                details.push(format!("{label}: {}", d.verdict));
            }
            details.push(format!("{label}: max |dV| {:.3} kV", d.evidence.max_delta_v / 1e3));
        }
        let summary = format!(
            "{ok}/{} cases NoFault, largest |dV| {:.3} kV vs U_set {:.0} kV",
            cases.len(),
            worst / 1e3,
            self.study.relay.u_set / 1e3
        );
        Ok((ok == cases.len(), summary, details))
    }

    fn numerical_hygiene(&self) -> Result<(bool, String, Vec<String>)> {
        let (runs, _) = self.grid()?;
        let mut details = Vec::new();

        let dt = self.study.sim.dt;
        let n = (POLARITY_WINDOW / dt).round() as usize;
        let t: Vec<f64> = (1..=n).map(|j| j as f64 * dt).collect();
        let settings = InversionSettings {
            tolerance: f64::INFINITY,
            ..InversionSettings::default()
        };
        let inversions = self.exec.map(runs, |r| -> Result<f64> {
            let p = r.point;
            let grid = self.study.grid(Some(p.clr))?;
            let transfer = mode_voltage_transfer(p.kind, p.location_d, p.r_f, &grid, &self.study.analytic)?;
            let w = mode_waveforms(&transfer, &t, &settings, Execution::Sequential)?;
            Ok(w.zero.max_discrepancy.max(w.line.max_discrepancy))
        });
        let mut worst_inversion: f64 = 0.0;
        let mut inversion_ok = true;
        for (r, disc) in runs.iter().zip(inversions) {
            let disc = disc?;
            worst_inversion = worst_inversion.max(disc);
            if !(disc <= INVERSION_TOLERANCE) {
                inversion_ok = false;
                details.push(format!("{}: inversion discrepancy {:.3} %", r.point.id(), disc * 100.0));
            }
        }

        let half = Study {
            sim: SimConfig {
                dt: dt / 2.0,
                ..self.study.sim.clone()
            },
            ..self.study.clone()
        };
        let convergence = self.exec.map(runs, |r| -> Result<((f64, String), f64)> {
            let fine = half.simulate(&r.point.fault(), Some(r.point.clr))?;
            Ok((self_convergence(&r.measurements, &fine), sampled_peak_change(&r.measurements, &fine).0))
        });
        let mut worst_convergence: (f64, String) = (0.0, String::new());
        let mut worst_sampled: f64 = 0.0;
        let mut convergence_ok = true;
        for (r, c) in runs.iter().zip(convergence) {
            let ((err, quantity), sampled) = c?;
            worst_sampled = worst_sampled.max(sampled);
            if err > worst_convergence.0 {
                worst_convergence = (err, format!("{} {quantity}", r.point.id()));
            }
            if !(err <= SELF_CONVERGENCE_TOLERANCE) {
                convergence_ok = false;
                details.push(format!("{}: {quantity} peak differs by {:.3} %", r.point.id(), err * 100.0));
            }
        }

        let mut worst_energy: f64 = 0.0;
        let mut energy_ok = true;
        for r in runs {
            let from = r.measurements.fault_index.map_or(0, |k| k + 1);
            let drift = r.measurements.energy.relative_drift(from);
            worst_energy = worst_energy.max(drift);
            if !(drift <= ENERGY_TOLERANCE) {
                energy_ok = false;
                details.push(format!("{}: energy drift {:.3e}", r.point.id(), drift));
            }
        }

        let summary = format!(
            "inversion discrepancy <= {:.2e} (limit {:.1} %), self-convergence <= {:.3} % (limit {:.1} %, worst {}; own-sample peaks <= {:.2} %), energy drift <= {:.1e} (limit {:.1} %)",
            worst_inversion,
            INVERSION_TOLERANCE * 100.0,
            worst_convergence.0 * 100.0,
            SELF_CONVERGENCE_TOLERANCE * 100.0,
            worst_convergence.1,
            worst_sampled * 100.0,
            worst_energy,
            ENERGY_TOLERANCE * 100.0
        );
        Ok((inversion_ok && convergence_ok && energy_ok, summary, details))
    }

    /// Relay properties over the noiseless grid, one result each.
    pub fn properties(&self) -> Vec<CriterionResult> {
        let checks: [(&str, &'static str, PropertyCheck); 4] = [
            ("P1", "determinism", Acceptance::determinism),
            ("P2", "monotone trigger", Acceptance::monotone_trigger),
            ("P3", "filter invariance", Acceptance::filter_invariance),
            ("P4", "streaming equals batch", Acceptance::streaming_equals_batch),
        ];
        checks
            .iter()
            .map(|(id, name, f)| match f(self) {
                Ok((pass, summary, details)) => result(*id, name, pass, summary, details),
                Err(e) => result(*id, name, false, format!("error: {e}"), vec![]),
            })
            .collect()
    }

    fn determinism(&self) -> Result<(bool, String, Vec<String>)> {
        let (runs, _) = self.grid()?;
        let mut details = Vec::new();
        for r in runs {
            let again = classify(&r.measurements, &self.study.relay)?;
            if Some(again) != r.row.simulated.map(|s| s.decision) {
                details.push(format!("{}: repeated classification differs", r.point.id()));
            }
            let a = add_measurement_noise(&r.measurements, NOISE_SNR_DB, 7)?;
            let b = add_measurement_noise(&r.measurements, NOISE_SNR_DB, 7)?;
            if classify(&a, &self.study.relay)? != classify(&b, &self.study.relay)? {
                details.push(format!("{}: seeded noise is not reproducible", r.point.id()));
            }
        }
        let summary = format!("{} of {} scenarios reproduce exactly", runs.len() - details.len(), runs.len());
        Ok((details.is_empty(), summary, details))
    }

    fn monotone_trigger(&self) -> Result<(bool, String, Vec<String>)> {
        let (runs, _) = self.grid()?;
        let base = self.study.relay;
        let levels = [1.5, 2.0, 3.0, 5.0, 8.0];
        let mut details = Vec::new();
        let mut checked = 0;
        for r in runs {
            let v0 = r.row.simulated.map(|s| s.decision.verdict);
            for k in levels {
                let relay = RelaySettings {
                    u_set: base.u_set * k,
                    ..base
                };
                let v = classify(&r.measurements, &relay)?.verdict;
                checked += 1;
                if v != Verdict::NoFault && Some(v) != v0 {
                    details.push(format!(
                        "{}: U_set x{k} changes {} to {v}",
                        r.point.id(),
                        v0.map_or("-".into(), |v| v.to_string())
                    ));
                }
            }
        }
        let summary = format!("{} of {checked} raised-threshold verdicts are unchanged or NoFault", checked - details.len());
        Ok((details.is_empty(), summary, details))
    }

    fn filter_invariance(&self) -> Result<(bool, String, Vec<String>)> {
        let (runs, _) = self.grid()?;
        let raw = RelaySettings {
            rolling_window: 1,
            ..self.study.relay
        };
        let mut details = Vec::new();
        for r in runs {
            let filtered = r.row.simulated.map(|s| s.decision);
            let unfiltered = classify(&r.measurements, &raw)?;
            if filtered.map(|d| d.verdict) != Some(unfiltered.verdict) {
                details.push(format!(
                    "{}: filtered {} (|dV| {:.1} kV), unfiltered {} (|dV| {:.1} kV)",
                    r.point.id(),
                    filtered.map_or("-".into(), |d| d.verdict.to_string()),
                    filtered.map_or(f64::NAN, |d| d.evidence.max_delta_v / 1e3),
                    unfiltered.verdict,
                    unfiltered.evidence.max_delta_v / 1e3
                ));
            }
        }
        let summary = format!(
            "{}/{} verdicts identical with and without the {}-sample rolling mean",
            runs.len() - details.len(),
            runs.len(),
            self.study.relay.rolling_window
        );
        Ok((details.is_empty(), summary, details))
    }

    fn streaming_equals_batch(&self) -> Result<(bool, String, Vec<String>)> {
        let (runs, _) = self.grid()?;
        let relay = self.study.relay;
        let mut details = Vec::new();
        for r in runs {
            let ms = &r.measurements;
            let mut s = StreamingRelay::new(relay, ms.v_clr_p.t0, ms.dt())?;
            for k in 0..ms.len() {
                s.push(ms.v_clr_p.samples[k], ms.v_clr_n.samples[k], ms.i_p.samples[k], ms.i_n.samples[k]);
            }
            if Some(s.finish()) != r.row.simulated.map(|x| x.decision) {
                details.push(format!("{}: streaming decision differs", r.point.id()));
            }
        }
        let summary = format!("{} of {} streaming decisions equal the batch ones", runs.len() - details.len(), runs.len());
        Ok((details.is_empty(), summary, details))
    }
}

/// Both the trip and the direction thresholds are reached.
fn violates_thresholds(d: &RelayDecision, relay: &RelaySettings) -> bool {
    d.evidence.max_delta_v >= relay.u_set && d.evidence.max_delta_i >= relay.i_set
}

/// Largest peak change between a run and one at half the step, both read
/// on the coarse run's sample instants. Each peak change is normalised by
/// the largest peak of that quantity type so that channels sitting at a
/// symmetry null do not dominate. Returns (error, quantity).
pub fn self_convergence(coarse: &MeasurementSet, fine: &MeasurementSet) -> (f64, String) {
    peak_change(coarse, fine, true)
}

/// Same as [`self_convergence`] but with each run's peaks taken over all of
/// its own samples, so the result includes the shift of the first sample
/// after the fault jump.
pub fn sampled_peak_change(coarse: &MeasurementSet, fine: &MeasurementSet) -> (f64, String) {
    peak_change(coarse, fine, false)
}

fn peak_change(coarse: &MeasurementSet, fine: &MeasurementSet, common: bool) -> (f64, String) {
    let ratio = ((coarse.dt() / fine.dt()).round() as usize).max(1);
    let step = if common { ratio } else { 1 };
    let peak = |x: &[f64], stride: usize| x.iter().step_by(stride).fold(0.0f64, |m, v| m.max(v.abs()));
    let (c0, c1) = relay_tap(coarse);
    let (f0, f1) = relay_tap(fine);
    let groups = [
        [("v_clr_p", &coarse.v_clr_p, &fine.v_clr_p), ("v_clr_n", &coarse.v_clr_n, &fine.v_clr_n)],
        [("i_p", &coarse.i_p, &fine.i_p), ("i_n", &coarse.i_n, &fine.i_n)],
        [("v_l120", &c0, &f0), ("v_l121", &c1, &f1)],
    ];
    let mut worst = (0.0, String::new());
    for group in groups {
        let scale = group.iter().map(|(_, _, f)| peak_abs(&f.samples)).fold(0.0, f64::max);
        if scale == 0.0 {
            continue;
        }
        for (name, c, f) in group {
            let err = (peak(&c.samples, 1) - peak(&f.samples, step)).abs() / scale;
            if err > worst.0 {
                worst = (err, name.to_string());
            }
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn result_line_format() {
        let r = result("2", "classification", false, "52/117".into(), vec![]);
        assert_eq!(r.to_string(), "FAIL [2] classification: 52/117");
        let r = result("P1", "determinism", true, "ok".into(), vec![]);
        assert_eq!(r.to_string(), "PASS [P1] determinism: ok");
    }

    #[test]
    fn unknown_criterion_fails() {
        let a = Acceptance::new(Execution::Sequential);
        let r = a.criterion(9);
        assert!(!r.pass);
        assert!(r.summary.contains("no criterion 9"));
    }

    #[test]
    fn self_convergence_of_identical_runs_is_zero() {
        let study = Study {
            sim: SimConfig {
                t_end: 2e-3,
                ..SimConfig::default()
            },
            ..Study::default()
        };
        let ms = study
            .simulate(&FaultScenario::internal(FaultKind::InternalNPtg, 0.5, 0.0), None)
            .unwrap();
        assert_eq!(self_convergence(&ms, &ms).0, 0.0);
    }
}
