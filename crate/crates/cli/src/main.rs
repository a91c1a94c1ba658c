//! `hvdc-modal`: single runs, parameter sweeps, engine cross-checks and the
//! acceptance suite of the modal fault-identification model.
//!
//! Exit codes: 0 success, 1 usage or scenario error, 2 solver error,
//! 3 acceptance failure.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use hvdc_modal::acceptance::{Acceptance, CriterionResult, CRITERIA};
use hvdc_modal::analytic::{mode_voltage_transfer, mode_waveforms, uniform_grid};
use hvdc_modal::laplace::InversionSettings;
use hvdc_modal::params::FaultKind;
use hvdc_modal::relay::{add_measurement_noise, classify, condition, write_decision_report};
use hvdc_modal::scenario::{load_scenario_file, Scenario};
use hvdc_modal::sim::relay_tap;
use hvdc_modal::sweep::{compare_oracle, run_sweep, write_sweep_csv, Mode, Pivot};
use hvdc_modal::trace::write_csv;
use hvdc_modal::{Error, Execution};

#[derive(Parser, Debug)]
#[command(name = "hvdc-modal", version, about = "Modal DC fault identification for a four-terminal MMC-HVDC grid")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Scenario file (TOML); defaults apply when omitted.
    #[arg(long, global = true)]
    scenario: Option<PathBuf>,

    /// Output directory for CSV artifacts.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,

    /// Worker threads for grid evaluation (1 runs sequentially).
    #[arg(long, global = true)]
    workers: Option<usize>,

    /// Noise seed (run) or the single seed of a sweep.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Simulation step in seconds, overriding the scenario.
    #[arg(long, global = true)]
    dt: Option<f64>,

    /// Engines to evaluate.
    #[arg(long, global = true, value_parser = parse_mode)]
    mode: Option<Mode>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate one scenario and classify it.
    Run {
        /// Add white Gaussian noise at this SNR (dB) before classification.
        #[arg(long)]
        snr: Option<f64>,
    },
    /// Evaluate a parameter grid and write the report and pivot.
    Sweep,
    /// Compare closed-form and simulated line-mode voltages of the fault.
    Oracle,
    /// Run the acceptance checks; exits 3 when any fails.
    Acceptance {
        /// Comma-separated checks, e.g. `1,4` or `P3`; all when omitted.
        #[arg(long, value_delimiter = ',')]
        only: Vec<String>,
    },
}

fn parse_mode(s: &str) -> std::result::Result<Mode, String> {
    s.parse::<Mode>().map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    ExitCode::from(execute(std::env::args_os()))
}

/// Parses `args` (program name first), runs the verb and returns the exit
/// code.
fn execute<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match dispatch(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            exit_code(&e)
        }
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    match e.chain().find_map(|c| c.downcast_ref::<Error>()) {
        Some(Error::SolverDivergence { .. } | Error::NumericalInstability { .. } | Error::Build(_)) => 2,
        _ => 1,
    }
}

fn dispatch(cli: &Cli) -> Result<u8> {
    let mut scenario = match &cli.scenario {
        Some(path) => load_scenario_file(path).with_context(|| format!("loading {}", path.display()))?,
        None => Scenario::default(),
    };
    if let Some(dt) = cli.dt {
        if !(dt.is_finite() && dt > 0.0) {
            bail!("--dt: {dt} is not a positive step");
        }
        scenario.study.sim.dt = dt;
    }
    let exec = match cli.workers {
        Some(n) => Execution::with_workers(n),
        None => Execution::default(),
    };
    match &cli.command {
        Command::Run { snr } => run(cli, &scenario, *snr),
        Command::Sweep => sweep(cli, &scenario, exec),
        Command::Oracle => oracle(cli, &scenario),
        Command::Acceptance { only } => acceptance(cli, &scenario, exec, only),
    }
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join(name);
    let f = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn run(cli: &Cli, scenario: &Scenario, snr: Option<f64>) -> Result<u8> {
    let study = &scenario.study;
    let fault = &scenario.fault;
    let mode = cli.mode.unwrap_or(Mode::Simulate);
    let id = match fault.location_d {
        Some(d) => format!("{}/d={d}/rf={}", fault.kind, fault.r_f),
        None => format!("{}/rf={}", fault.kind, fault.r_f),
    };
    if mode.simulates() {
        let mut ms = study.simulate(fault, None)?;
        if let Some(snr) = snr {
            ms = add_measurement_noise(&ms, snr, cli.seed.unwrap_or(0))?;
        }
        let (zero, line) = relay_tap(&ms);
        let conditioned = condition(&ms, &study.relay)?;
        let decision = classify(&ms, &study.relay)?;
        write_csv(&ms.traces(), create(&cli.out, "traces.csv")?)?;
        write_csv(&[&zero, &line], create(&cli.out, "modes.csv")?)?;
        write_csv(&conditioned.traces(), create(&cli.out, "conditioned.csv")?)?;
        write_decision_report(&[(id.clone(), decision)], create(&cli.out, "decision.csv")?)?;
        println!("scenario {id}");
        println!("verdict {}", decision.verdict);
        println!("max |dV_CLR| {:.1} kV", decision.evidence.max_delta_v / 1e3);
        match (decision.trigger_time, decision.latency_ms()) {
            (Some(t), Some(latency)) => println!("trigger at {:.4} ms, decision latency {latency:.3} ms", t * 1e3),
            _ => println!("no trigger event"),
        }
    }
    if mode.analyses() && fault.kind != FaultKind::None {
        let grid = study.grid(None)?;
        let transfer = mode_voltage_transfer(fault.kind, fault.location_d, fault.r_f, &grid, &study.analytic)?;
        let t = uniform_grid(study.relay.polarity_window, 1000);
        let w = mode_waveforms(&transfer, &t, &InversionSettings::default(), Execution::default())?;
        let zero = w.zero.to_trace("v_l120_analytic", "V")?;
        let line = w.line.to_trace("v_l121_analytic", "V")?;
        let zero_st = zero.with_samples("v_l120_stehfest", w.zero.stehfest.clone());
        let line_st = line.with_samples("v_l121_stehfest", w.line.stehfest.clone());
        write_csv(&[&zero, &line, &zero_st, &line_st], create(&cli.out, "analytic_modes.csv")?)?;
        println!(
            "analytic inversion discrepancy {:.2e} (zero mode), {:.2e} (line mode)",
            w.zero.max_discrepancy, w.line.max_discrepancy
        );
    }
    Ok(0)
}

fn sweep(cli: &Cli, scenario: &Scenario, exec: Execution) -> Result<u8> {
    let mut spec = scenario.sweep.clone().unwrap_or_default();
    if let Some(mode) = cli.mode {
        spec.mode = mode;
    }
    if let Some(seed) = cli.seed {
        spec.seeds = vec![seed];
    }
    spec.validate()?;
    println!("grid size {} ({} mode)", spec.size(), spec.mode);
    let report = run_sweep(&scenario.study, &spec, exec)?;
    write_sweep_csv(&report, create(&cli.out, "sweep.csv")?)?;
    if spec.mode.simulates() {
        let pivot = Pivot::from_report(&report);
        pivot.write_csv(create(&cli.out, "pivot.csv")?)?;
        for v in pivot.monotonicity_violations() {
            println!("ordering violation: {v}");
        }
    }
    let failed: Vec<_> = report.rows.iter().filter(|r| r.error.is_some()).collect();
    for r in &failed {
        println!("point {} failed: {}", r.point.id(), r.error.as_deref().unwrap_or(""));
    }
    println!("{}/{} rows pass", report.passed(), report.rows.len());
    Ok(0)
}

fn oracle(cli: &Cli, scenario: &Scenario) -> Result<u8> {
    let fault = &scenario.fault;
    if fault.kind == FaultKind::None {
        bail!("oracle: the scenario has no fault");
    }
    let r = compare_oracle(&scenario.study, fault, None)?;
    let dt = scenario.study.sim.dt;
    let mk = |name: &str, v: &[f64]| hvdc_modal::trace::Trace::new(name, "V", dt, dt, v.to_vec());
    let analytic = mk("v_l121_analytic", &r.analytic)?;
    let simulated = mk("v_l121_simulated", &r.simulated)?;
    write_csv(&[&analytic, &simulated], create(&cli.out, "oracle.csv")?)?;
    let (za, zs) = r.zero_mode_ratio();
    println!(
        "first V_L121 extremum: analytic {:.2} kV, simulated {:.2} kV, relative error {:.2} %",
        r.analytic_extremum / 1e3,
        r.simulated_extremum / 1e3,
        r.relative_error * 100.0
    );
    println!("zero-mode ratio: analytic {za:.2e}, simulated {zs:.2e}");
    println!("inverse-Laplace discrepancy {:.2e}", r.inversion_discrepancy);
    println!("{}", if r.pass(0.05) { "PASS within 5 %" } else { "FAIL beyond 5 %" });
    Ok(0)
}

fn acceptance(cli: &Cli, scenario: &Scenario, exec: Execution, only: &[String]) -> Result<u8> {
    let mut criteria = Vec::new();
    let mut properties = Vec::new();
    for item in only {
        let item = item.trim();
        if let Some(p) = item.strip_prefix(['P', 'p']) {
            match p.parse::<u8>() {
                Ok(1..=4) => properties.push(format!("P{p}")),
                _ => bail!("--only: unknown check `{item}`"),
            }
        } else {
            match item.parse::<u8>() {
                Ok(c) if CRITERIA.contains(&c) => criteria.push(c),
                _ => bail!("--only: unknown check `{item}`"),
            }
        }
    }
    let suite = Acceptance::with_study(scenario.study.clone(), exec);
    let mut results: Vec<CriterionResult> = Vec::new();
    if only.is_empty() || !criteria.is_empty() {
        results.extend(suite.run(&criteria));
    }
    if only.is_empty() || !properties.is_empty() {
        results.extend(
            suite
                .properties()
                .into_iter()
                .filter(|r| properties.is_empty() || properties.contains(&r.id)),
        );
    }
    let mut log = String::new();
    for r in &results {
        println!("{r}");
        log.push_str(&format!("{r}\n"));
        for d in &r.details {
            log.push_str(&format!("    {d}\n"));
        }
    }
    fs::create_dir_all(&cli.out)?;
    fs::write(cli.out.join("acceptance.txt"), log)?;
    let failed = results.iter().filter(|r| !r.pass).count();
    println!("{} checks, {failed} failed", results.len());
    Ok(if failed == 0 { 0 } else { 3 })
}

#[cfg(test)]
mod tests;
