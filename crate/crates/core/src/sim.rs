//! Fixed-step implicit trapezoidal simulation and relay-point measurements.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::modal::modal_series;
use crate::network::{LinearSystem, SimOptions, StateSpaceModel, VoltageRamp};
use crate::params::finite_positive;
use crate::params::{Bus, FaultKind, LineId};
use crate::trace::Trace;

/// Default simulation step, second.
pub const DEFAULT_DT: f64 = 2.0e-6;
/// Default simulated span, second.
pub const DEFAULT_T_END: f64 = 10.0e-3;

/// Integration settings of one run.
#[derive(Clone, Debug, PartialEq)]
pub struct SimConfig {
    pub dt: f64,
    pub t_end: f64,
    /// Replace converter and terminal capacitors by ideal sources.
    pub stiff_sources: bool,
    pub ramp: Option<VoltageRamp>,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            dt: DEFAULT_DT,
            t_end: DEFAULT_T_END,
            stiff_sources: false,
            ramp: None,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        finite_positive("dt", self.dt)?;
        finite_positive("t_end", self.t_end)?;
        if let Some(r) = &self.ramp {
            if !r.fraction.is_finite() || !r.start.is_finite() || !(r.duration >= 0.0) {
                return Err(Error::invalid("ramp", "fraction, start and duration must be finite, duration >= 0"));
            }
        }
        Ok(())
    }

    pub fn options(&self) -> SimOptions {
        SimOptions {
            stiff_sources: self.stiff_sources,
            ramp: self.ramp.clone(),
        }
    }
}

/// Fault-point pole voltages and fault currents.
#[derive(Clone, Debug, PartialEq)]
pub struct FaultTraces {
    pub v_f_p: Trace,
    pub v_f_n: Trace,
    pub i_f_p: Trace,
    pub i_f_n: Trace,
}

/// Running energy balance: `stored + dissipated - source_work` is constant
/// for an exact integrator.
#[derive(Clone, Debug, PartialEq)]
pub struct EnergyLedger {
    pub stored: Vec<f64>,
    /// Cumulative resistive (including fault resistor) dissipation.
    pub dissipated: Vec<f64>,
    /// Cumulative work done by branch EMFs.
    pub source_work: Vec<f64>,
}

impl EnergyLedger {
    /// Largest deviation of the balance after sample `from`, relative to the
    /// balance at `from`.
    pub fn relative_drift(&self, from: usize) -> f64 {
        let total = |k: usize| self.stored[k] + self.dissipated[k] - self.source_work[k];
        let base = total(from);
        (from..self.stored.len())
            .map(|k| (total(k) - base).abs())
            .fold(0.0, f64::max)
            / base.abs().max(f64::MIN_POSITIVE)
    }
}

/// Relay-point and fault-point traces of one run.
#[derive(Clone, Debug, PartialEq)]
pub struct MeasurementSet {
    /// Voltage across the relay reactor, bus side minus line side.
    pub v_clr_p: Trace,
    pub v_clr_n: Trace,
    /// Relay-point line currents, bus towards line.
    pub i_p: Trace,
    pub i_n: Trace,
    pub fault: Option<FaultTraces>,
    pub energy: EnergyLedger,
    /// Last pre-fault sample; the switch closes right after it.
    pub fault_index: Option<usize>,
}

impl MeasurementSet {
    pub fn dt(&self) -> f64 {
        self.v_clr_p.dt
    }

    pub fn len(&self) -> usize {
        self.v_clr_p.len()
    }

    pub fn is_empty(&self) -> bool {
        self.v_clr_p.is_empty()
    }

    /// All traces in export order.
    pub fn traces(&self) -> Vec<&Trace> {
        let mut v = vec![&self.v_clr_p, &self.v_clr_n, &self.i_p, &self.i_n];
        if let Some(f) = &self.fault {
            v.extend([&f.v_f_p, &f.v_f_n, &f.i_f_p, &f.i_f_n]);
        }
        v
    }
}

/// Affine output `c.x + g.e`.
struct Tap {
    c: DVector<f64>,
    g: DVector<f64>,
}

impl Tap {
    fn eval(&self, x: &DVector<f64>, e: &DVector<f64>) -> f64 {
        self.c.dot(x) + self.g.dot(e)
    }
}

struct Phase<'a> {
    sys: &'a LinearSystem,
    /// Trapezoidal propagator (I - h/2 A)^-1 (I + h/2 A).
    phi: DMatrix<f64>,
    /// (I - h/2 A)^-1.
    p: DMatrix<f64>,
    /// (I - h/2 A)^-1 h/2 B.
    gamma: DMatrix<f64>,
    taps: Vec<Tap>,
}

struct TapPlan {
    relay: [usize; 2],
    fault_nodes: Option<[Option<usize>; 2]>,
    fault_branch: Option<usize>,
    fault_kind: FaultKind,
}

fn phase<'a>(sys: &'a LinearSystem, h: f64, plan: &TapPlan) -> Result<Phase<'a>> {
    let nx = sys.n_states();
    let eye = DMatrix::<f64>::identity(nx, nx);
    let lhs = &eye - &sys.a * (0.5 * h);
    let p = lhs
        .try_inverse()
        .ok_or_else(|| Error::Build("trapezoidal system matrix is singular".into()))?;
    let phi = &p * (&eye + &sys.a * (0.5 * h));
    let gamma = &p * &sys.b * (0.5 * h);
    let mut taps = Vec::new();
    for &j in &plan.relay {
        let (c, g) = sys.reactor_voltage_row(j);
        taps.push(Tap { c, g });
    }
    for &j in &plan.relay {
        taps.push(Tap {
            c: sys.current_row(j),
            g: DVector::zeros(sys.n_branches),
        });
    }
    if let Some(nodes) = plan.fault_nodes {
        for node in nodes {
            let (c, g) = match node {
                Some(k) => sys.node_potential_row(k),
                None => (DVector::zeros(nx), DVector::zeros(sys.n_branches)),
            };
            taps.push(Tap { c, g });
        }
        let fault_current = match plan.fault_branch {
            Some(j) if j < sys.n_branches => sys.current_row(j),
            _ => DVector::zeros(nx),
        };
        taps.push(Tap {
            c: fault_current,
            g: DVector::zeros(sys.n_branches),
        });
    }
    Ok(Phase {
        sys,
        phi,
        p,
        gamma,
        taps,
    })
}

fn relay_reactor(model: &StateSpaceModel, relay: (Bus, LineId)) -> Result<[usize; 2]> {
    let name = match relay {
        (Bus::B1, LineId::L12) => "clr12",
        (Bus::B2, LineId::L12) => "clr21",
        (Bus::B1, LineId::L14) => "clr14",
        (Bus::B2, LineId::L23) => "clr23",
        _ => return Err(Error::Build("relay location has no modelled reactor".into())),
    };
    let find = |pole: &str| {
        model
            .network
            .branch(&format!("{name}_{pole}"))
            .ok_or_else(|| Error::Build(format!("missing reactor branch {name}_{pole}")))
    };
    Ok([find("p")?, find("n")?])
}

/// Runs `model` from 0 to `t_end` with step `dt`. The fault switch closes
/// right after the sample at the first step at or after the inception time,
/// so that sample holds the pre-fault (left-limit) values. The step leaving
/// the switching instant is taken as two backward-Euler half steps to damp
/// the trapezoidal ringing of the discontinuity.
pub fn simulate(model: &StateSpaceModel, relay: (Bus, LineId), t_end: f64, dt: f64) -> Result<MeasurementSet> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::invalid("dt", "must be finite and > 0"));
    }
    let n_steps = (t_end / dt).round() as usize;
    if n_steps < 1 {
        return Err(Error::invalid("t_end", "must span at least one step"));
    }
    let fault_kind = model.fault;
    let fault_index = model
        .post
        .as_ref()
        .map(|_| (model.t_fault / dt - 1e-9).ceil().max(0.0) as usize);
    if let Some(k) = fault_index {
        if k >= n_steps {
            return Err(Error::invalid("t_end", "must exceed the fault inception time"));
        }
    }
    let net = &model.network;
    let fault_nodes = match fault_kind {
        FaultKind::None => None,
        k if k.is_internal() => Some([net.node("Fp"), net.node("Fn")]),
        FaultKind::ExternalForwardPtg | FaultKind::ExternalForwardPtp => {
            Some([net.node("B2p"), net.node("B2n")])
        }
        _ => Some([net.node("B1p"), net.node("B1n")]),
    };
    let plan = TapPlan {
        relay: relay_reactor(model, relay)?,
        fault_nodes,
        fault_branch: net.fault_branch,
        fault_kind,
    };
    let pre = phase(&model.pre, dt, &plan)?;
    let post = match &model.post {
        Some(sys) => Some(phase(sys, dt, &plan)?),
        None => None,
    };

    let n_samples = n_steps + 1;
    let n_taps = pre.taps.len();
    let mut out: Vec<Vec<f64>> = vec![Vec::with_capacity(n_samples); n_taps];
    let mut stored = Vec::with_capacity(n_samples);
    let mut dissipated = Vec::with_capacity(n_samples);
    let mut source_work = Vec::with_capacity(n_samples);
    let (mut diss, mut work) = (0.0, 0.0);

    let mut x = model.initial_state.clone();
    let mut current = &pre;
    let mut damp_next = false;
    for k in 0..n_samples {
        let t = k as f64 * dt;
        {
            let nb = current.sys.n_branches;
            let e = model.emf_at(t, nb);
            for (col, tap) in out.iter_mut().zip(&current.taps) {
                col.push(tap.eval(&x, &e));
            }
            stored.push(current.sys.stored_energy(&x));
            dissipated.push(diss);
            source_work.push(work);
        }
        if k + 1 == n_samples {
            break;
        }
        if Some(k) == fault_index {
            if let Some(ph) = post.as_ref() {
                x = model.map_to_post(&x);
                current = ph;
                damp_next = true;
            }
        }
        let nb = current.sys.n_branches;
        let e = model.emf_at(t, nb);
        let i_now = current.sys.branch_currents(&x);
        let x_next = if damp_next {
            damp_next = false;
            let mut y = x.clone();
            for half in 0..2 {
                let e_mid = model.emf_at(t + (half as f64 + 1.0) * 0.5 * dt, nb);
                y = &current.p * &y + &current.gamma * e_mid;
            }
            y
        } else {
            let e_next = model.emf_at(t + dt, nb);
            &current.phi * &x + &current.gamma * (&e + &e_next)
        };
        if !x_next.iter().all(|v| v.is_finite()) {
            return Err(Error::SolverDivergence { last_valid_time: t });
        }
        let i_next = current.sys.branch_currents(&x_next);
        let i_mid = (&i_now + &i_next) * 0.5;
        let e_mid = (&e + model.emf_at(t + dt, nb)) * 0.5;
        diss += dt * i_mid.component_mul(&current.sys.resistance).dot(&i_mid);
        work += dt * i_mid.dot(&e_mid);
        x = x_next;
    }

    let mk = |name: &str, unit: &str, v: Vec<f64>| Trace::new(name, unit, 0.0, dt, v);
    let mut cols = out.into_iter();
    let mut next = || cols.next().unwrap_or_default();
    let v_clr_p = mk("v_clr_p", "V", next())?;
    let v_clr_n = mk("v_clr_n", "V", next())?;
    let i_p = mk("i_p", "A", next())?;
    let i_n = mk("i_n", "A", next())?;
    let fault = if plan.fault_nodes.is_some() {
        let v_f_p = mk("v_f_p", "V", next())?;
        let v_f_n = mk("v_f_n", "V", next())?;
        let i_f = next();
        let zeros = vec![0.0; i_f.len()];
        let (i_f_p, i_f_n) = match plan.fault_kind {
            FaultKind::InternalNPtg => (zeros, i_f),
            k if k.is_pole_to_pole() => {
                let neg: Vec<f64> = i_f.iter().map(|v| -v).collect();
                (i_f, neg)
            }
            _ => (i_f, zeros),
        };
        Some(FaultTraces {
            v_f_p,
            v_f_n,
            i_f_p: mk("i_f_p", "A", i_f_p)?,
            i_f_n: mk("i_f_n", "A", i_f_n)?,
        })
    } else {
        None
    };
    Ok(MeasurementSet {
        v_clr_p,
        v_clr_n,
        i_p,
        i_n,
        fault,
        energy: EnergyLedger {
            stored,
            dissipated,
            source_work,
        },
        fault_index,
    })
}

/// Zero-mode (V_L120) and line-mode (V_L121) reactor voltages.
pub fn relay_tap(ms: &MeasurementSet) -> (Trace, Trace) {
    let (line, zero) = modal_series(&ms.v_clr_p.samples, &ms.v_clr_n.samples);
    (
        ms.v_clr_p.with_samples("v_l120", zero),
        ms.v_clr_p.with_samples("v_l121", line),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{build_network, SimOptions, VoltageRamp};
    use crate::params::{FaultScenario, Grid};

    const RELAY: (Bus, LineId) = (Bus::B1, LineId::L12);

    fn run(fault: FaultScenario, clr: f64, dt: f64) -> MeasurementSet {
        let g = Grid::with_clr(clr);
        let m = build_network(&g, &fault, &SimOptions::default()).unwrap();
        simulate(&m, RELAY, DEFAULT_T_END, dt).unwrap()
    }

    #[test]
    fn no_fault_holds_steady_state() {
        let g = Grid::with_clr(0.09);
        let m = build_network(&g, &FaultScenario::none(), &SimOptions::default()).unwrap();
        let ms = simulate(&m, RELAY, 0.1, DEFAULT_DT).unwrap();
        assert!(ms.v_clr_p.peak_abs() < 1e3);
        assert!(ms.fault.is_none());
        let (z, l) = relay_tap(&ms);
        assert!(z.peak_abs() < 1.0 && l.peak_abs() < 1.0);
    }

    #[test]
    fn ptp_is_pole_symmetric() {
        let ms = run(FaultScenario::internal(FaultKind::InternalPtp, 0.1, 0.0), 0.09, DEFAULT_DT);
        let (zero, line) = relay_tap(&ms);
        assert!(zero.peak_abs() < 1e-6 * line.peak_abs());
        let k = ms.fault_index.unwrap();
        assert!(line.samples[k].abs() < 1.0);
        assert!(line.samples[k + 1] > 1e5);
    }

    #[test]
    fn p_ptg_zero_mode_positive() {
        let ms = run(FaultScenario::internal(FaultKind::InternalPPtg, 0.5, 100.0), 0.13, DEFAULT_DT);
        let (zero, line) = relay_tap(&ms);
        let k = ms.fault_index.unwrap();
        let w = k..k + 1000;
        assert!(zero.dominant(w.clone()) > 0.0);
        assert!(line.dominant(w) > 0.0);
    }

    #[test]
    fn open_circuit_fault_stays_quiet() {
        let ms = run(FaultScenario::internal(FaultKind::InternalPPtg, 0.5, 1e6), 0.09, DEFAULT_DT);
        let pair: Vec<f64> = ms
            .v_clr_p
            .samples
            .iter()
            .zip(&ms.v_clr_n.samples)
            .map(|(p, n)| p - n)
            .collect();
        let peak = pair.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(peak < 10e3, "{peak}");
    }

    #[test]
    fn energy_balance_after_inception() {
        for kind in [FaultKind::InternalPtp, FaultKind::InternalPPtg] {
            let ms = run(FaultScenario::internal(kind, 0.5, 100.0), 0.09, DEFAULT_DT);
            let k = ms.fault_index.unwrap();
            assert!(ms.energy.relative_drift(k) < 1e-3, "{kind}: {}", ms.energy.relative_drift(k));
        }
    }

    #[test]
    fn halving_dt_keeps_peak() {
        let f = FaultScenario::internal(FaultKind::InternalPtp, 0.5, 0.0);
        let a = run(f, 0.09, DEFAULT_DT).v_clr_p.peak_abs();
        let b = run(f, 0.09, DEFAULT_DT / 2.0).v_clr_p.peak_abs();
        assert!((a - b).abs() / b < 5e-3);
    }

    #[test]
    fn fault_point_boundary_holds() {
        let r_f = 200.0;
        let ms = run(FaultScenario::internal(FaultKind::InternalPPtg, 0.3, r_f), 0.09, DEFAULT_DT);
        let f = ms.fault.as_ref().unwrap();
        let k = ms.fault_index.unwrap() + 100;
        let v = f.v_f_p.samples[k];
        let i = f.i_f_p.samples[k];
        assert!((v - i * r_f).abs() < 1e-6 * v.abs());
        assert_eq!(f.i_f_n.samples[k], 0.0);
    }

    #[test]
    fn ramp_changes_bus_voltage_slowly() {
        let g = Grid::with_clr(0.09);
        let opts = SimOptions {
            stiff_sources: false,
            ramp: Some(VoltageRamp {
                fraction: 0.1,
                start: 0.0,
                duration: 0.1,
                converters: vec![Bus::B1],
            }),
        };
        let m = build_network(&g, &FaultScenario::none(), &opts).unwrap();
        let ms = simulate(&m, RELAY, 0.1, DEFAULT_DT).unwrap();
        assert!(ms.v_clr_p.peak_abs() < 1e3);
        assert!(ms.i_p.peak_abs() > 0.0);
    }

    #[test]
    fn rejects_bad_step() {
        let g = Grid::with_clr(0.09);
        let m = build_network(&g, &FaultScenario::none(), &SimOptions::default()).unwrap();
        assert!(simulate(&m, RELAY, 1e-3, 0.0).is_err());
        let m = build_network(&g, &FaultScenario::internal(FaultKind::InternalPtp, 0.5, 0.0), &SimOptions::default()).unwrap();
        assert!(simulate(&m, RELAY, 0.5e-3, DEFAULT_DT).is_err());
    }
}
