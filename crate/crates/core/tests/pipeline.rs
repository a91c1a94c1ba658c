//! Scenario file to verdict, across both engines and both execution modes.

use std::path::{Path, PathBuf};

use approx::assert_relative_eq;

use hvdc_modal::analytic::{expected_signature, predict_signature, Sign};
use hvdc_modal::params::{line_totals, mmc_equivalent, Conductor, FaultKind, FaultScenario, MmcParams};
use hvdc_modal::relay::Verdict;
use hvdc_modal::scenario::load_scenario_file;
use hvdc_modal::sweep::{compare_oracle, observed_signature, run_scenario, run_sweep, Pivot, Study, SweepSpec};
use hvdc_modal::Execution;

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

#[test]
fn converter_and_line_equivalents() {
    let mmc = mmc_equivalent(&MmcParams::default()).unwrap();
    assert_relative_eq!(mmc.r_mmc, 0.85 * 2.0 / 3.0, max_relative = 1e-12);
    assert_relative_eq!(mmc.l_mmc, 0.1 * 2.0 / 3.0, max_relative = 1e-12);
    assert_relative_eq!(mmc.c_mmc, 4.5e-5, max_relative = 1e-12);

    let line = line_totals(&Conductor::default().line(20e3)).unwrap();
    assert_relative_eq!(line.resistance, 0.8232, max_relative = 1e-12);
    assert_relative_eq!(line.inductance, 0.2512, max_relative = 1e-12);
    assert_relative_eq!(line.mutual, 0.10048, max_relative = 1e-12);
    assert_relative_eq!(line.line_mode_inductance(), 0.15072, max_relative = 1e-12);
    assert_relative_eq!(line.zero_mode_inductance(), 0.35168, max_relative = 1e-12);
}

#[test]
fn near_end_pole_to_pole_fault_trips_internal() {
    let sc = load_scenario_file(&scenario("ptp_internal.toml")).unwrap();
    let out = run_scenario(&sc.study, &sc.fault).unwrap();
    let d = out.decision;
    assert_eq!(d.verdict, Verdict::InternalPtp);
    assert!(d.evidence.max_delta_v >= sc.study.relay.u_set);
    assert!(d.evidence.max_delta_i >= sc.study.relay.i_set);
    assert!(d.evidence.v_l120.abs() <= sc.study.relay.e_set);
    assert!(d.evidence.v_l121 > 0.0);
    let latency = d.latency_ms().unwrap();
    assert_relative_eq!(latency, sc.study.relay.polarity_window * 1e3, max_relative = 0.01);

    // A balanced pole-to-pole fault leaves the zero mode at numerical noise.
    let zero = out.v_l120.samples.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let line = out.v_l121.samples.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    assert!(zero / line < 1e-6, "{}", zero / line);
}

#[test]
fn healthy_grid_stays_quiet() {
    let sc = load_scenario_file(&scenario("no_fault.toml")).unwrap();
    let out = run_scenario(&sc.study, &sc.fault).unwrap();
    assert_eq!(out.decision.verdict, Verdict::NoFault);
    assert!(out.decision.trigger_time.is_none());
    assert!(out.decision.evidence.max_delta_v < sc.study.relay.pickup);
}

#[test]
fn high_impedance_ground_fault_oracle_within_five_percent() {
    let sc = load_scenario_file(&scenario("p_ptg_high_impedance.toml")).unwrap();
    let r = compare_oracle(&sc.study, &sc.fault, None).unwrap();
    assert!(r.pass(0.05), "relative error {}", r.relative_error);
    assert!(r.analytic_extremum > 0.0 && r.simulated_extremum > 0.0);
    assert!(r.inversion_discrepancy < 0.005);
}

#[test]
fn pole_to_pole_oracle_has_a_zero_mode_null() {
    let study = Study::default();
    let fault = FaultScenario::internal(FaultKind::InternalPtp, 0.5, 0.0);
    let r = compare_oracle(&study, &fault, Some(0.13)).unwrap();
    let (analytic, simulated) = r.zero_mode_ratio();
    assert!(analytic < 1e-6 && simulated < 1e-6, "{analytic} {simulated}");
    assert!(r.pass(0.05), "relative error {}", r.relative_error);
}

#[test]
fn backward_ground_fault_inverts_the_line_mode_in_both_engines() {
    let study = Study::default();
    let fault = FaultScenario::external(FaultKind::ExternalBackwardPtg, 0.0);
    let grid = study.grid(None).unwrap();
    let predicted = predict_signature(fault.kind, None, 0.0, &grid, &study.analytic, study.relay.e_set).unwrap();
    let ms = study.simulate(&fault, None).unwrap();
    let observed = observed_signature(&ms, study.relay.e_set, study.relay.polarity_window);
    assert_eq!(predicted.line_mode, Sign::Negative);
    assert_eq!(observed, predicted);
    assert_eq!(Some(observed), expected_signature(fault.kind));
}

#[test]
fn trend_grid_orders_peaks() {
    let sc = load_scenario_file(&scenario("trend_sweep.toml")).unwrap();
    let spec = sc.sweep.clone().unwrap();
    let report = run_sweep(&sc.study, &spec, Execution::default()).unwrap();
    assert_eq!(report.rows.len(), 54);
    assert!(report.rows.iter().all(|r| r.error.is_none()));
    let pivot = Pivot::from_report(&report);
    assert!(pivot.monotonicity_violations().is_empty(), "{:?}", pivot.monotonicity_violations());
    for r_f in [0.0, 100.0, 200.0] {
        for clr in [0.09, 0.13, 0.17] {
            for d in [0.1, 0.5, 0.9] {
                let ptp = pivot.value(FaultKind::InternalPtp, r_f, clr, d).unwrap();
                let ptg = pivot.value(FaultKind::InternalPPtg, r_f, clr, d).unwrap();
                assert!(ptp > ptg, "rf={r_f} clr={clr} d={d}: {ptp} <= {ptg}");
            }
        }
    }
}

#[test]
fn noisy_near_end_fault_is_stable_over_seeds() {
    let sc = load_scenario_file(&scenario("noise_sweep.toml")).unwrap();
    let spec = sc.sweep.clone().unwrap();
    let report = run_sweep(&sc.study, &spec, Execution::default()).unwrap();
    assert_eq!(report.rows.len(), 100);
    assert_eq!(report.passed(), 100);
    let triggers: Vec<_> = report
        .rows
        .iter()
        .map(|r| r.simulated.unwrap().decision.trigger_time.unwrap())
        .collect();
    let spread = triggers.iter().fold(0.0f64, |m, t| m.max((t - triggers[0]).abs()));
    assert!(spread <= 2.0 * sc.study.sim.dt, "trigger spread {spread}");
}

#[test]
fn sequential_and_parallel_sweeps_agree() {
    let spec = SweepSpec {
        kinds: vec![FaultKind::InternalNPtg, FaultKind::ExternalForwardPtp],
        location_d: vec![0.1, 0.9],
        r_f: vec![0.0, 200.0],
        clr: vec![0.13],
        snr_db: vec![30.0],
        seeds: vec![3, 4],
        mode: hvdc_modal::sweep::Mode::Both,
    };
    let study = Study::default();
    let seq = run_sweep(&study, &spec, Execution::Sequential).unwrap();
    let par = run_sweep(&study, &spec, Execution::with_workers(4)).unwrap();
    assert_eq!(seq.rows.len(), (2 + 1) * 2 * 2);
    assert_eq!(seq, par);
}
