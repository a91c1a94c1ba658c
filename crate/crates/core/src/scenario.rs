//! Scenario files: TOML text with sections `[system]`, `[topology]`,
//! `[fault]`, `[relay]`, `[sim]` and the optional `[analytic]` and `[sweep]`.
//!
//! Physical quantities are bare numbers in the field's SI base unit or
//! strings carrying that base unit, e.g. `clr = "0.13 H"`. Any other unit
//! token (`"130 mH"`) is rejected. Omitted fields take their defaults.

use std::fmt::Write as _;
use std::path::Path;

use toml::{Table, Value};

use crate::analytic::AnalyticOptions;
use crate::error::{Error, Result};
use crate::network::VoltageRamp;
use crate::params::{
    Bus, ClrSet, Conductor, FaultKind, FaultScenario, LineId, MmcParams, SystemParams, Topology,
    DEFAULT_T_FAULT,
};
use crate::relay::RelaySettings;
use crate::sim::SimConfig;
use crate::sweep::{Mode, Study, SweepSpec};

/// Everything a scenario file describes.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct Scenario {
    pub study: Study,
    pub fault: FaultScenario,
    pub sweep: Option<SweepSpec>,
}

const SECTIONS: [&str; 7] = ["system", "topology", "fault", "relay", "sim", "analytic", "sweep"];

pub fn load_scenario(text: &str) -> Result<Scenario> {
    let table: Table = text.parse().map_err(|e: toml::de::Error| Error::Parse {
        line: e.span().map(|s| line_of_offset(text, s.start)),
        field: None,
        message: e.message().trim().to_string(),
    })?;
    let doc = Doc { text };
    for (name, value) in &table {
        if !SECTIONS.contains(&name.as_str()) {
            return Err(doc.error(None, name, "unknown section"));
        }
        if !value.is_table() {
            return Err(doc.error(None, name, "expected a section"));
        }
    }
    let empty = Table::new();
    let section = |name: &'static str| Section {
        doc: &doc,
        name,
        table: table.get(name).and_then(Value::as_table).unwrap_or(&empty),
    };

    let system = read_system(&section("system"))?;
    let topology = read_topology(&section("topology"))?;
    let fault = read_fault(&section("fault"))?;
    let relay = read_relay(&section("relay"))?;
    let sim = read_sim(&section("sim"))?;
    let analytic = read_analytic(&section("analytic"))?;
    let sweep = if table.contains_key("sweep") {
        Some(read_sweep(&section("sweep"))?)
    } else {
        None
    };
    Ok(Scenario {
        study: Study {
            system,
            topology,
            relay,
            sim,
            analytic,
        },
        fault,
        sweep,
    })
}

pub fn load_scenario_file(path: &Path) -> Result<Scenario> {
    let text = std::fs::read_to_string(path)?;
    load_scenario(&text)
}

impl Scenario {
    /// Scenario file text that loads back into an equal value.
    pub fn to_toml(&self) -> String {
        let s = &self.study;
        let mut out = String::new();
        let q = |v: f64, unit: &str| format!("\"{v:?} {unit}\"");

        let m = &s.system.mmc;
        let c = &s.system.conductor;
        out.push_str("[system]\n");
        line(&mut out, "arm_resistance", q(m.arm_resistance, "ohm"));
        line(&mut out, "arm_inductance", q(m.arm_inductance, "H"));
        line(&mut out, "sm_capacitance", q(m.sm_capacitance, "F"));
        line(&mut out, "sm_count", m.sm_count.to_string());
        line(&mut out, "dc_link_voltage", q(m.dc_link_voltage, "V"));
        line(&mut out, "r_per_m", q(c.r_per_m, "ohm/m"));
        line(&mut out, "l_per_m", q(c.l_per_m, "H/m"));
        line(&mut out, "m_per_m", q(c.m_per_m, "H/m"));

        let t = &s.topology;
        out.push_str("\n[topology]\n");
        line(&mut out, "length_12", q(t.length_12, "m"));
        line(&mut out, "length_14", q(t.length_14, "m"));
        line(&mut out, "length_23", q(t.length_23, "m"));
        for (name, v) in t.clr.entries() {
            line(&mut out, &name.replace('_', ""), q(v, "H"));
        }
        if let Some(v) = t.c_14 {
            line(&mut out, "c_14", q(v, "F"));
        }
        if let Some(v) = t.c_23 {
            line(&mut out, "c_23", q(v, "F"));
        }
        line(&mut out, "relay_bus", t.relay.0.number().to_string());
        line(&mut out, "relay_line", format!("\"{}\"", t.relay.1.label()));

        let f = &self.fault;
        out.push_str("\n[fault]\n");
        if f.kind != FaultKind::None {
            line(&mut out, "kind", format!("\"{}\"", f.kind));
            if let Some(d) = f.location_d {
                line(&mut out, "location_d", format!("{d:?}"));
            }
            line(&mut out, "r_f", q(f.r_f, "ohm"));
            line(&mut out, "t_fault", q(f.t_fault, "s"));
        }

        let r = &s.relay;
        out.push_str("\n[relay]\n");
        line(&mut out, "u_set", q(r.u_set, "V"));
        line(&mut out, "e_set", q(r.e_set, "V"));
        line(&mut out, "i_set", q(r.i_set, "A"));
        line(&mut out, "pickup", q(r.pickup, "V"));
        line(&mut out, "rolling_window", r.rolling_window.to_string());
        line(&mut out, "delta_window", q(r.delta_window, "s"));
        line(&mut out, "polarity_window", q(r.polarity_window, "s"));
        line(&mut out, "decimation", r.decimation.to_string());

        let sim = &s.sim;
        out.push_str("\n[sim]\n");
        line(&mut out, "dt", q(sim.dt, "s"));
        line(&mut out, "t_end", q(sim.t_end, "s"));
        line(&mut out, "stiff_sources", sim.stiff_sources.to_string());
        if let Some(ramp) = &sim.ramp {
            line(&mut out, "ramp_fraction", format!("{:?}", ramp.fraction));
            line(&mut out, "ramp_start", q(ramp.start, "s"));
            line(&mut out, "ramp_duration", q(ramp.duration, "s"));
            let buses: Vec<String> = ramp.converters.iter().map(|b| b.number().to_string()).collect();
            line(&mut out, "ramp_converters", format!("[{}]", buses.join(", ")));
        }

        let a = &s.analytic;
        out.push_str("\n[analytic]\n");
        line(&mut out, "ptp_alpha", format!("{:?}", a.ptp_alpha));
        line(&mut out, "ptg_fault_factor", format!("{:?}", a.ptg_fault_factor));
        line(&mut out, "orthonormal", a.orthonormal.to_string());

        if let Some(sw) = &self.sweep {
            let list = |v: &[String]| format!("[{}]", v.join(", "));
            let floats = |v: &[f64]| list(&v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>());
            out.push_str("\n[sweep]\n");
            let kinds: Vec<String> = sw.kinds.iter().map(|k| format!("\"{k}\"")).collect();
            line(&mut out, "kinds", list(&kinds));
            line(&mut out, "location_d", floats(&sw.location_d));
            line(&mut out, "r_f", floats(&sw.r_f));
            line(&mut out, "clr", floats(&sw.clr));
            line(&mut out, "snr_db", floats(&sw.snr_db));
            let seeds: Vec<String> = sw.seeds.iter().map(|x| x.to_string()).collect();
            line(&mut out, "seeds", list(&seeds));
            line(&mut out, "mode", format!("\"{}\"", sw.mode));
        }
        out
    }
}

fn line(out: &mut String, key: &str, value: String) {
    let _ = writeln!(out, "{key} = {value}");
}

fn line_of_offset(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

struct Doc<'a> {
    text: &'a str,
}

impl Doc<'_> {
    /// 1-based line of `key` inside `[section]` (or of the section header
    /// when `section` is `None`).
    fn find(&self, section: Option<&str>, key: &str) -> Option<usize> {
        let mut current: Option<String> = None;
        for (i, raw) in self.text.lines().enumerate() {
            let l = raw.trim();
            if let Some(h) = l.strip_prefix('[') {
                let name = h.trim_end_matches(']').trim().to_string();
                if section.is_none() && name == key {
                    return Some(i + 1);
                }
                current = Some(name);
                continue;
            }
            if section.is_some() && current.as_deref() == section {
                if let Some(rest) = l.strip_prefix(key) {
                    if rest.trim_start().starts_with('=') {
                        return Some(i + 1);
                    }
                }
            }
        }
        None
    }

    fn error(&self, section: Option<&str>, key: &str, message: impl Into<String>) -> Error {
        let field = match section {
            Some(s) => format!("{s}.{key}"),
            None => key.to_string(),
        };
        Error::Parse {
            line: self.find(section, key),
            field: Some(field),
            message: message.into(),
        }
    }
}

struct Section<'a> {
    doc: &'a Doc<'a>,
    name: &'static str,
    table: &'a Table,
}

impl Section<'_> {
    fn error(&self, key: &str, message: impl Into<String>) -> Error {
        self.doc.error(Some(self.name), key, message)
    }

    fn check_keys(&self, allowed: &[&str]) -> Result<()> {
        for key in self.table.keys() {
            if !allowed.contains(&key.as_str()) {
                return Err(self.error(key, "unknown field"));
            }
        }
        Ok(())
    }

    /// Maps a component validation error onto the field that caused it.
    fn wrap(&self, r: Result<()>) -> Result<()> {
        r.map_err(|e| match e {
            Error::InvalidParameter { field, reason } => {
                let key = field.replace("clr_", "clr");
                self.error(&key, reason)
            }
            other => other,
        })
    }

    fn has(&self, key: &str) -> bool {
        self.table.contains_key(key)
    }

    fn quantity(&self, key: &str, unit: &str) -> Result<Option<f64>> {
        self.table
            .get(key)
            .map(|v| parse_quantity(v, unit).map_err(|m| self.error(key, m)))
            .transpose()
    }

    fn quantity_or(&self, key: &str, unit: &str, default: f64) -> Result<f64> {
        Ok(self.quantity(key, unit)?.unwrap_or(default))
    }

    fn count_or(&self, key: &str, default: usize) -> Result<usize> {
        match self.table.get(key) {
            None => Ok(default),
            Some(Value::Integer(n)) if *n >= 0 => Ok(*n as usize),
            Some(_) => Err(self.error(key, "expected a non-negative integer")),
        }
    }

    fn bool_or(&self, key: &str, default: bool) -> Result<bool> {
        match self.table.get(key) {
            None => Ok(default),
            Some(Value::Boolean(b)) => Ok(*b),
            Some(_) => Err(self.error(key, "expected true or false")),
        }
    }

    fn string(&self, key: &str) -> Result<Option<&str>> {
        match self.table.get(key) {
            None => Ok(None),
            Some(Value::String(s)) => Ok(Some(s)),
            Some(_) => Err(self.error(key, "expected a string")),
        }
    }

    fn array(&self, key: &str) -> Result<Option<&Vec<Value>>> {
        match self.table.get(key) {
            None => Ok(None),
            Some(Value::Array(a)) => Ok(Some(a)),
            Some(_) => Err(self.error(key, "expected an array")),
        }
    }

    fn quantities(&self, key: &str, unit: &str) -> Result<Option<Vec<f64>>> {
        self.array(key)?
            .map(|a| {
                a.iter()
                    .map(|v| parse_quantity(v, unit).map_err(|m| self.error(key, m)))
                    .collect()
            })
            .transpose()
    }
}

/// A bare number or `"<number> <unit>"` with exactly the base unit.
fn parse_quantity(v: &Value, unit: &str) -> std::result::Result<f64, String> {
    match v {
        Value::Integer(n) => Ok(*n as f64),
        Value::Float(x) => Ok(*x),
        Value::String(s) => {
            let mut parts = s.split_whitespace();
            let (Some(num), Some(u), None) = (parts.next(), parts.next(), parts.next()) else {
                return Err(format!("expected `<number> {unit}`, got `{s}`"));
            };
            if u != unit {
                return Err(format!("unit `{u}` is not the base unit `{unit}`"));
            }
            num.parse::<f64>()
                .map_err(|_| format!("`{num}` is not a number"))
        }
        _ => Err(format!("expected a number or a `<number> {unit}` string")),
    }
}

fn read_system(s: &Section) -> Result<SystemParams> {
    s.check_keys(&[
        "arm_resistance",
        "arm_inductance",
        "sm_capacitance",
        "sm_count",
        "dc_link_voltage",
        "r_per_m",
        "l_per_m",
        "m_per_m",
        "coupling_ratio",
    ])?;
    let d = MmcParams::default();
    let sm_count = s.count_or("sm_count", d.sm_count as usize)?;
    let mmc = MmcParams {
        arm_resistance: s.quantity_or("arm_resistance", "ohm", d.arm_resistance)?,
        arm_inductance: s.quantity_or("arm_inductance", "H", d.arm_inductance)?,
        sm_capacitance: s.quantity_or("sm_capacitance", "F", d.sm_capacitance)?,
        sm_count: u32::try_from(sm_count).map_err(|_| s.error("sm_count", "out of range"))?,
        dc_link_voltage: s.quantity_or("dc_link_voltage", "V", d.dc_link_voltage)?,
    };
    s.wrap(mmc.validate())?;

    if s.has("m_per_m") && s.has("coupling_ratio") {
        return Err(s.error("coupling_ratio", "give either m_per_m or coupling_ratio, not both"));
    }
    let mut conductor = Conductor::default();
    conductor.r_per_m = s.quantity_or("r_per_m", "ohm/m", conductor.r_per_m)?;
    conductor.l_per_m = s.quantity_or("l_per_m", "H/m", conductor.l_per_m)?;
    conductor.m_per_m = match s.table.get("coupling_ratio") {
        Some(v) => {
            let ratio = parse_quantity(v, "1").map_err(|m| s.error("coupling_ratio", m))?;
            if !(0.0..1.0).contains(&ratio) {
                return Err(s.error("coupling_ratio", "must lie in [0, 1)"));
            }
            ratio * conductor.l_per_m
        }
        None => s.quantity_or("m_per_m", "H/m", conductor.l_per_m * crate::params::DEFAULT_COUPLING_RATIO)?,
    };
    s.wrap(crate::params::line_totals(&conductor.line(1.0)).map(|_| ()))?;
    Ok(SystemParams { mmc, conductor })
}

fn read_topology(s: &Section) -> Result<Topology> {
    s.check_keys(&[
        "length_12",
        "length_14",
        "length_23",
        "clr",
        "clr12",
        "clr21",
        "clr14",
        "clr23",
        "c_14",
        "c_23",
        "relay_bus",
        "relay_line",
    ])?;
    let d = Topology::default();
    let base = match s.quantity("clr", "H")? {
        Some(l) => ClrSet::uniform(l),
        None => d.clr,
    };
    let clr = ClrSet {
        clr12: s.quantity_or("clr12", "H", base.clr12)?,
        clr21: s.quantity_or("clr21", "H", base.clr21)?,
        clr14: s.quantity_or("clr14", "H", base.clr14)?,
        clr23: s.quantity_or("clr23", "H", base.clr23)?,
    };
    let bus = match s.table.get("relay_bus") {
        None => d.relay.0,
        Some(Value::Integer(n)) => {
            Bus::from_number(*n).ok_or_else(|| s.error("relay_bus", format!("no bus {n}")))?
        }
        Some(_) => return Err(s.error("relay_bus", "expected a bus number 1-4")),
    };
    let line = match s.string("relay_line")? {
        None => d.relay.1,
        Some(l) => LineId::from_label(l).ok_or_else(|| s.error("relay_line", format!("no line `{l}`")))?,
    };
    let topology = Topology {
        length_12: s.quantity_or("length_12", "m", d.length_12)?,
        length_14: s.quantity_or("length_14", "m", d.length_14)?,
        length_23: s.quantity_or("length_23", "m", d.length_23)?,
        clr,
        c_14: s.quantity("c_14", "F")?,
        c_23: s.quantity("c_23", "F")?,
        relay: (bus, line),
    };
    s.wrap(topology.validate().map_err(|e| match e {
        Error::InvalidParameter { field, reason } if field == "relay" => Error::InvalidParameter {
            field: "relay_line".into(),
            reason,
        },
        other => other,
    }))?;
    Ok(topology)
}

fn read_fault(s: &Section) -> Result<FaultScenario> {
    s.check_keys(&["kind", "location_d", "r_f", "t_fault"])?;
    let kind = match s.string("kind")? {
        Some(k) => k.parse::<FaultKind>().map_err(|_| s.error("kind", format!("unknown fault kind `{k}`")))?,
        None if s.table.is_empty() => return Ok(FaultScenario::none()),
        None => return Err(s.error("kind", "missing; required when the fault section has fields")),
    };
    let location_d = match s.table.get("location_d") {
        None => None,
        Some(v) => Some(parse_quantity(v, "1").map_err(|m| s.error("location_d", m))?),
    };
    let fault = FaultScenario {
        kind,
        location_d,
        r_f: s.quantity_or("r_f", "ohm", 0.0)?,
        t_fault: s.quantity_or("t_fault", "s", DEFAULT_T_FAULT)?,
    };
    s.wrap(fault.validate())?;
    Ok(fault)
}

fn read_relay(s: &Section) -> Result<RelaySettings> {
    s.check_keys(&[
        "u_set",
        "e_set",
        "i_set",
        "pickup",
        "rolling_window",
        "delta_window",
        "polarity_window",
        "decimation",
    ])?;
    let d = RelaySettings::default();
    let relay = RelaySettings {
        u_set: s.quantity_or("u_set", "V", d.u_set)?,
        e_set: s.quantity_or("e_set", "V", d.e_set)?,
        i_set: s.quantity_or("i_set", "A", d.i_set)?,
        pickup: s.quantity_or("pickup", "V", d.pickup)?,
        rolling_window: s.count_or("rolling_window", d.rolling_window)?,
        delta_window: s.quantity_or("delta_window", "s", d.delta_window)?,
        polarity_window: s.quantity_or("polarity_window", "s", d.polarity_window)?,
        decimation: s.count_or("decimation", d.decimation)?,
    };
    s.wrap(relay.validate())?;
    Ok(relay)
}

fn read_sim(s: &Section) -> Result<SimConfig> {
    s.check_keys(&[
        "dt",
        "t_end",
        "stiff_sources",
        "ramp_fraction",
        "ramp_start",
        "ramp_duration",
        "ramp_converters",
    ])?;
    let d = SimConfig::default();
    let ramp_keys = ["ramp_start", "ramp_duration", "ramp_converters"];
    let ramp = match s.table.get("ramp_fraction") {
        Some(v) => {
            let fraction = parse_quantity(v, "1").map_err(|m| s.error("ramp_fraction", m))?;
            let converters = match s.array("ramp_converters")? {
                None => vec![Bus::B1],
                Some(a) => a
                    .iter()
                    .map(|b| {
                        b.as_integer()
                            .and_then(Bus::from_number)
                            .ok_or_else(|| s.error("ramp_converters", "expected bus numbers 1-4"))
                    })
                    .collect::<Result<Vec<_>>>()?,
            };
            Some(VoltageRamp {
                fraction,
                start: s.quantity_or("ramp_start", "s", 0.0)?,
                duration: s.quantity_or("ramp_duration", "s", 0.1)?,
                converters,
            })
        }
        None => {
            if let Some(k) = ramp_keys.iter().find(|k| s.has(k)) {
                return Err(s.error(k, "needs ramp_fraction"));
            }
            None
        }
    };
    let sim = SimConfig {
        dt: s.quantity_or("dt", "s", d.dt)?,
        t_end: s.quantity_or("t_end", "s", d.t_end)?,
        stiff_sources: s.bool_or("stiff_sources", d.stiff_sources)?,
        ramp,
    };
    s.wrap(sim.validate().map_err(|e| match e {
        Error::InvalidParameter { field, reason } if field == "ramp" => Error::InvalidParameter {
            field: "ramp_fraction".into(),
            reason,
        },
        other => other,
    }))?;
    Ok(sim)
}

fn read_analytic(s: &Section) -> Result<AnalyticOptions> {
    s.check_keys(&["ptp_alpha", "ptg_fault_factor", "orthonormal"])?;
    let d = AnalyticOptions::default();
    let a = AnalyticOptions {
        ptp_alpha: s.quantity_or("ptp_alpha", "1", d.ptp_alpha)?,
        ptg_fault_factor: s.quantity_or("ptg_fault_factor", "1", d.ptg_fault_factor)?,
        orthonormal: s.bool_or("orthonormal", d.orthonormal)?,
    };
    for (key, v) in [("ptp_alpha", a.ptp_alpha), ("ptg_fault_factor", a.ptg_fault_factor)] {
        if !(v.is_finite() && v > 0.0) {
            return Err(s.error(key, "must be finite and positive"));
        }
    }
    Ok(a)
}

fn read_sweep(s: &Section) -> Result<SweepSpec> {
    s.check_keys(&["kinds", "location_d", "r_f", "clr", "snr_db", "seeds", "mode"])?;
    let d = SweepSpec::default();
    let kinds = match s.array("kinds")? {
        None => d.kinds,
        Some(a) => a
            .iter()
            .map(|v| {
                v.as_str()
                    .and_then(|k| k.parse::<FaultKind>().ok())
                    .ok_or_else(|| s.error("kinds", format!("unknown fault kind {v}")))
            })
            .collect::<Result<Vec<_>>>()?,
    };
    let seeds = match s.array("seeds")? {
        None => d.seeds,
        Some(a) => a
            .iter()
            .map(|v| match v {
                Value::Integer(n) if *n >= 0 => Ok(*n as u64),
                _ => Err(s.error("seeds", "expected non-negative integers")),
            })
            .collect::<Result<Vec<_>>>()?,
    };
    let mode = match s.string("mode")? {
        None => d.mode,
        Some(m) => m.parse::<Mode>().map_err(|_| s.error("mode", format!("unknown mode `{m}`")))?,
    };
    let spec = SweepSpec {
        kinds,
        location_d: s.quantities("location_d", "1")?.unwrap_or(d.location_d),
        r_f: s.quantities("r_f", "ohm")?.unwrap_or(d.r_f),
        clr: s.quantities("clr", "H")?.unwrap_or(d.clr),
        snr_db: s.quantities("snr_db", "dB")?.unwrap_or(d.snr_db),
        seeds,
        mode,
    };
    if let Some(x) = spec.location_d.iter().find(|x| !(0.0..=1.0).contains(*x)) {
        return Err(s.error("location_d", format!("{x} is outside [0, 1]")));
    }
    if let Some(x) = spec.r_f.iter().find(|x| !(x.is_finite() && **x >= 0.0)) {
        return Err(s.error("r_f", format!("{x} is not a finite resistance >= 0")));
    }
    if let Some(x) = spec.clr.iter().find(|x| !(x.is_finite() && **x > 0.0)) {
        return Err(s.error("clr", format!("{x} is not a positive inductance")));
    }
    if let Some(x) = spec.snr_db.iter().find(|x| x.is_nan() || **x == f64::NEG_INFINITY) {
        return Err(s.error("snr_db", format!("{x} is not a usable SNR")));
    }
    s.wrap(spec.validate())?;
    Ok(spec)
}
