//! Single-ended threshold and polarity relay at the bus-1 end of line 12.
//!
//! Per relay sample the four measured channels are smoothed by a causal
//! rolling mean; the pole-pair CLR voltage change `|dV|` and the per-pole
//! current changes `|di|` are taken over `delta_window`, and the modal
//! voltages come from the smoothed CLR voltages. Once the filters are
//! primed, a pickup (`|dV| >= pickup`) opens an evidence window of
//! `polarity_window`; the relay trips when `|dV| >= U_set` inside that
//! window and classifies at its end:
//!
//! 1. no `|dV| >= U_set` in any window: no fault;
//! 2. `|V_L120| <= e_set`: pole-to-pole family, otherwise pole-to-ground;
//! 3. negative line mode (and, for pole-to-ground, negative zero mode):
//!    backward external;
//! 4. faulted-pole `|di| < I_set`: forward external;
//! 5. internal subtype from the family and the zero-mode sign.
//!
//! Because the window is anchored at the pickup, raising `U_set` never
//! moves it and can only turn a fault verdict into no fault.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use crate::dsp::{decimate, inject_wgn, rolling_mean, windowed_delta, RollingMean, WindowedDelta};
use crate::error::{Error, Result};
use crate::modal::modal_series;
use crate::params::{finite_positive, FaultKind};
use crate::sim::MeasurementSet;
use crate::trace::Trace;

/// Relay thresholds and conditioning.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RelaySettings {
    /// Trip threshold on the pole-pair CLR voltage change, volt.
    pub u_set: f64,
    /// Zero-mode threshold separating the PTP and PTG families, volt.
    pub e_set: f64,
    /// Local current change threshold separating internal from forward
    /// external faults, ampere.
    pub i_set: f64,
    /// Pickup level of `|dV|` that opens the evidence window, volt.
    pub pickup: f64,
    /// Rolling-mean length in relay samples.
    pub rolling_window: usize,
    /// Span of the windowed changes, second.
    pub delta_window: f64,
    /// Span of the evidence window, second.
    pub polarity_window: f64,
    /// Relay sampling as a multiple of the simulation step.
    pub decimation: usize,
}

impl Default for RelaySettings {
    fn default() -> Self {
        RelaySettings {
            u_set: 100e3,
            e_set: 10e3,
            i_set: 2e3,
            pickup: 10e3,
            rolling_window: 50,
            delta_window: 1e-3,
            polarity_window: 2e-3,
            decimation: 1,
        }
    }
}

impl RelaySettings {
    pub fn validate(&self) -> Result<()> {
        finite_positive("u_set", self.u_set)?;
        finite_positive("e_set", self.e_set)?;
        finite_positive("i_set", self.i_set)?;
        finite_positive("pickup", self.pickup)?;
        finite_positive("delta_window", self.delta_window)?;
        finite_positive("polarity_window", self.polarity_window)?;
        if self.pickup > self.u_set {
            return Err(Error::invalid("pickup", "must not exceed u_set"));
        }
        if self.rolling_window < 1 {
            return Err(Error::invalid("rolling_window", "must be >= 1"));
        }
        if self.decimation < 1 {
            return Err(Error::invalid("decimation", "must be >= 1"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Verdict {
    NoFault,
    InternalPtp,
    InternalPPtg,
    InternalNPtg,
    ExternalForward,
    ExternalBackward,
}

impl Verdict {
    /// Ground-truth verdict of a scenario.
    pub fn expected(kind: FaultKind) -> Verdict {
        match kind {
            FaultKind::None => Verdict::NoFault,
            FaultKind::InternalPtp => Verdict::InternalPtp,
            FaultKind::InternalPPtg => Verdict::InternalPPtg,
            FaultKind::InternalNPtg => Verdict::InternalNPtg,
            FaultKind::ExternalForwardPtg | FaultKind::ExternalForwardPtp => Verdict::ExternalForward,
            FaultKind::ExternalBackwardPtg | FaultKind::ExternalBackwardPtp => Verdict::ExternalBackward,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::NoFault => "no_fault",
            Verdict::InternalPtp => "internal_ptp",
            Verdict::InternalPPtg => "internal_p_ptg",
            Verdict::InternalNPtg => "internal_n_ptg",
            Verdict::ExternalForward => "external_forward",
            Verdict::ExternalBackward => "external_backward",
        }
    }

    pub fn is_fault(self) -> bool {
        self != Verdict::NoFault
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Verdict {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        use Verdict::*;
        [NoFault, InternalPtp, InternalPPtg, InternalNPtg, ExternalForward, ExternalBackward]
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| Error::invalid("verdict", format!("unknown verdict `{s}`")))
    }
}

/// Quantities the verdict was based on. Without a trip only `max_delta_v`
/// (over the whole record) is meaningful.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Evidence {
    /// Largest pole-pair `|dV_CLR|`, volt.
    pub max_delta_v: f64,
    /// Signed dominant zero-mode voltage, volt.
    pub v_l120: f64,
    /// Signed dominant line-mode voltage, volt.
    pub v_l121: f64,
    /// Largest `|di_p|`, ampere.
    pub max_delta_i_p: f64,
    /// Largest `|di_n|`, ampere.
    pub max_delta_i_n: f64,
    /// The current change used by the direction test, ampere.
    pub max_delta_i: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RelayDecision {
    pub verdict: Verdict,
    pub evidence: Evidence,
    /// First relay sample with `|dV| >= U_set`, second.
    pub trigger_time: Option<f64>,
    /// End of the evidence window, second.
    pub decision_time: Option<f64>,
    /// Set when the guarded zero-sign case inside the PTG branch was hit.
    pub tie_break: bool,
}

impl RelayDecision {
    /// Trigger-to-verdict time in milliseconds.
    pub fn latency_ms(&self) -> Option<f64> {
        Some((self.decision_time? - self.trigger_time?) * 1e3)
    }
}

/// Conditioned relay-rate signals, for export and inspection.
#[derive(Clone, Debug, PartialEq)]
pub struct ConditionedSignals {
    pub delta_v: Trace,
    pub v_l120: Trace,
    pub v_l121: Trace,
    pub delta_i_p: Trace,
    pub delta_i_n: Trace,
}

impl ConditionedSignals {
    pub fn traces(&self) -> [&Trace; 5] {
        [&self.delta_v, &self.v_l120, &self.v_l121, &self.delta_i_p, &self.delta_i_n]
    }
}

/// Batch conditioning of a measurement set.
pub fn condition(ms: &MeasurementSet, settings: &RelaySettings) -> Result<ConditionedSignals> {
    settings.validate()?;
    let prep = |t: &Trace| -> Result<Trace> {
        rolling_mean(&decimate(t, settings.decimation)?, settings.rolling_window)
    };
    let v_p = prep(&ms.v_clr_p)?;
    let v_n = prep(&ms.v_clr_n)?;
    let i_p = prep(&ms.i_p)?;
    let i_n = prep(&ms.i_n)?;
    let pair: Vec<f64> = v_p.samples.iter().zip(&v_n.samples).map(|(p, n)| p - n).collect();
    let pair = v_p.with_samples("v_clr_pair", pair);
    let (line, zero) = modal_series(&v_p.samples, &v_n.samples);
    Ok(ConditionedSignals {
        delta_v: windowed_delta(&pair, settings.delta_window)?,
        v_l120: v_p.with_samples("v_l120", zero),
        v_l121: v_p.with_samples("v_l121", line),
        delta_i_p: windowed_delta(&i_p, settings.delta_window)?,
        delta_i_n: windowed_delta(&i_n, settings.delta_window)?,
    })
}

/// One relay-rate sample of the conditioned signals.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct RelaySample {
    pub delta_v: f64,
    pub v_l120: f64,
    pub v_l121: f64,
    pub delta_i_p: f64,
    pub delta_i_n: f64,
}

#[derive(Clone, Debug)]
struct OpenWindow {
    remaining: usize,
    trigger: Option<usize>,
    evidence: Evidence,
}

fn keep_dominant(best: &mut f64, v: f64) {
    if v.abs() > best.abs() {
        *best = v;
    }
}

/// Sample-at-a-time relay with bounded memory. Feeding a whole record and
/// calling [`StreamingRelay::finish`] gives the same decision as
/// [`classify`].
#[derive(Clone, Debug)]
pub struct StreamingRelay {
    settings: RelaySettings,
    t0: f64,
    dt: f64,
    window_len: usize,
    /// Relay samples before the filters are primed; no pickup before then.
    warmup: usize,
    raw_count: usize,
    index: usize,
    means: [RollingMean; 4],
    delta_v: WindowedDelta,
    delta_i: [WindowedDelta; 2],
    open: Option<OpenWindow>,
    max_delta_v: f64,
    decision: Option<RelayDecision>,
}

impl StreamingRelay {
    /// `t0`, `dt`: time base of the raw (simulation-rate) input.
    pub fn new(settings: RelaySettings, t0: f64, dt: f64) -> Result<Self> {
        settings.validate()?;
        let dt = dt * settings.decimation as f64;
        let lag = WindowedDelta::lag_for(settings.delta_window, dt)?;
        let window_len = ((settings.polarity_window / dt).round() as usize).max(1);
        let mean = || RollingMean::new(settings.rolling_window);
        Ok(StreamingRelay {
            settings,
            t0,
            dt,
            window_len,
            warmup: settings.rolling_window - 1 + lag,
            raw_count: 0,
            index: 0,
            means: [mean()?, mean()?, mean()?, mean()?],
            delta_v: WindowedDelta::new(lag)?,
            delta_i: [WindowedDelta::new(lag)?, WindowedDelta::new(lag)?],
            open: None,
            max_delta_v: 0.0,
            decision: None,
        })
    }

    pub fn decision(&self) -> Option<&RelayDecision> {
        self.decision.as_ref()
    }

    /// Feeds one raw sample; returns the decision once it is made.
    pub fn push(&mut self, v_clr_p: f64, v_clr_n: f64, i_p: f64, i_n: f64) -> Option<RelayDecision> {
        let raw = self.raw_count;
        self.raw_count += 1;
        if self.decision.is_some() || !raw.is_multiple_of(self.settings.decimation) {
            return self.decision;
        }
        let [mvp, mvn, mip, min] = &mut self.means;
        let (vp, vn) = (mvp.push(v_clr_p), mvn.push(v_clr_n));
        let (ip, i_n_) = (mip.push(i_p), min.push(i_n));
        let [dip, din] = &mut self.delta_i;
        let mode = crate::modal::phase_to_modal(crate::modal::PoleQuantities { p: vp, n: vn });
        let sample = RelaySample {
            delta_v: self.delta_v.push(vp - vn),
            v_l120: mode.zero,
            v_l121: mode.line,
            delta_i_p: dip.push(ip),
            delta_i_n: din.push(i_n_),
        };
        self.step(sample);
        self.decision
    }

    /// Feeds one already-conditioned relay-rate sample.
    fn step(&mut self, s: RelaySample) {
        let k = self.index;
        self.index += 1;
        if k < self.warmup {
            return;
        }
        self.max_delta_v = self.max_delta_v.max(s.delta_v);
        if self.open.is_none() && s.delta_v >= self.settings.pickup {
            self.open = Some(OpenWindow {
                remaining: self.window_len,
                trigger: None,
                evidence: Evidence::default(),
            });
        }
        let Some(w) = self.open.as_mut() else {
            return;
        };
        let ev = &mut w.evidence;
        ev.max_delta_v = ev.max_delta_v.max(s.delta_v);
        keep_dominant(&mut ev.v_l120, s.v_l120);
        keep_dominant(&mut ev.v_l121, s.v_l121);
        ev.max_delta_i_p = ev.max_delta_i_p.max(s.delta_i_p);
        ev.max_delta_i_n = ev.max_delta_i_n.max(s.delta_i_n);
        if w.trigger.is_none() && s.delta_v >= self.settings.u_set {
            w.trigger = Some(k);
        }
        w.remaining -= 1;
        if w.remaining == 0 {
            self.close(k);
        }
    }

    fn close(&mut self, last: usize) {
        let Some(w) = self.open.take() else {
            return;
        };
        if let Some(trigger) = w.trigger {
            let (verdict, max_delta_i, tie_break) = decide(&w.evidence, &self.settings);
            self.decision = Some(RelayDecision {
                verdict,
                evidence: Evidence {
                    max_delta_i,
                    ..w.evidence
                },
                trigger_time: Some(self.t0 + trigger as f64 * self.dt),
                decision_time: Some(self.t0 + last as f64 * self.dt),
                tie_break,
            });
        }
    }

    /// Ends the record: a window still open is evaluated as it stands, and
    /// without a trip the verdict is no fault.
    pub fn finish(mut self) -> RelayDecision {
        if self.decision.is_none() && self.index > 0 {
            self.close(self.index - 1);
        }
        self.decision.unwrap_or(RelayDecision {
            verdict: Verdict::NoFault,
            evidence: Evidence {
                max_delta_v: self.max_delta_v,
                ..Evidence::default()
            },
            trigger_time: None,
            decision_time: None,
            tie_break: false,
        })
    }
}

/// Steps 2 to 5 on tripped evidence: (verdict, direction current, tie-break).
fn decide(ev: &Evidence, s: &RelaySettings) -> (Verdict, f64, bool) {
    let ptp_family = ev.v_l120.abs() <= s.e_set;
    if ptp_family {
        if ev.v_l121 < 0.0 {
            return (Verdict::ExternalBackward, ev.max_delta_i_p, false);
        }
        let di = ev.max_delta_i_p;
        let v = if di < s.i_set {
            Verdict::ExternalForward
        } else {
            Verdict::InternalPtp
        };
        return (v, di, false);
    }
    if ev.v_l120 < 0.0 && ev.v_l121 < 0.0 {
        return (Verdict::ExternalBackward, ev.max_delta_i_p, false);
    }
    let tie_break = ev.v_l120 == 0.0;
    let negative_pole = ev.v_l120 < 0.0;
    let di = if negative_pole {
        ev.max_delta_i_n
    } else {
        ev.max_delta_i_p
    };
    let v = if di < s.i_set {
        Verdict::ExternalForward
    } else if negative_pole {
        Verdict::InternalNPtg
    } else {
        Verdict::InternalPPtg
    };
    (v, di, tie_break)
}

/// Classifies a whole measurement record.
pub fn classify(ms: &MeasurementSet, settings: &RelaySettings) -> Result<RelayDecision> {
    let mut relay = StreamingRelay::new(*settings, ms.v_clr_p.t0, ms.dt())?;
    for k in 0..ms.len() {
        relay.push(
            ms.v_clr_p.samples[k],
            ms.v_clr_n.samples[k],
            ms.i_p.samples[k],
            ms.i_n.samples[k],
        );
    }
    Ok(relay.finish())
}

/// The relay channels with independent white noise at `snr_db`, signal
/// power taken over the post-fault part of the record.
pub fn add_measurement_noise(ms: &MeasurementSet, snr_db: f64, seed: u64) -> Result<MeasurementSet> {
    let from = ms.fault_index.map_or(0, |k| k + 1);
    let window = from..ms.len();
    let mut out = ms.clone();
    out.v_clr_p = inject_wgn(&ms.v_clr_p, snr_db, seed, 0, window.clone())?;
    out.v_clr_n = inject_wgn(&ms.v_clr_n, snr_db, seed, 1, window.clone())?;
    out.i_p = inject_wgn(&ms.i_p, snr_db, seed, 2, window.clone())?;
    out.i_n = inject_wgn(&ms.i_n, snr_db, seed, 3, window)?;
    Ok(out)
}

/// Column names of the decision report.
pub const REPORT_HEADER: [&str; 11] = [
    "scenario",
    "verdict",
    "max_delta_v_V",
    "v_l120_V",
    "v_l121_V",
    "max_delta_i_p_A",
    "max_delta_i_n_A",
    "direction_delta_i_A",
    "trigger_time_s",
    "decision_time_s",
    "latency_ms",
];

/// Report cells of one decision, in [`REPORT_HEADER`] order after the
/// scenario id.
pub fn report_cells(d: &RelayDecision) -> Vec<String> {
    let opt = |v: Option<f64>| v.map(|x| format!("{x:e}")).unwrap_or_default();
    let e = &d.evidence;
    vec![
        d.verdict.to_string(),
        format!("{:e}", e.max_delta_v),
        format!("{:e}", e.v_l120),
        format!("{:e}", e.v_l121),
        format!("{:e}", e.max_delta_i_p),
        format!("{:e}", e.max_delta_i_n),
        format!("{:e}", e.max_delta_i),
        opt(d.trigger_time),
        opt(d.decision_time),
        opt(d.latency_ms()),
    ]
}

/// Writes one CSV row per `(scenario id, decision)`.
pub fn write_decision_report<W: Write>(rows: &[(String, RelayDecision)], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(REPORT_HEADER)?;
    for (id, d) in rows {
        let mut rec = vec![id.clone()];
        rec.extend(report_cells(d));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
