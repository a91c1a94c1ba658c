//! End-to-end runs of the command line through [`execute`], the same entry
//! point `main` uses.

use std::fs;
use std::path::{Path, PathBuf};

use super::*;

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

fn exec(args: &[&str], out: &Path) -> u8 {
    let mut all = vec!["hvdc-modal".to_string()];
    all.extend(args.iter().map(|s| s.to_string()));
    all.push("--out".into());
    all.push(out.to_string_lossy().into_owned());
    execute(all)
}

fn csv_row(path: &Path, row: usize) -> Vec<String> {
    let text = fs::read_to_string(path).unwrap();
    text.lines().nth(row).unwrap().split(',').map(str::to_string).collect()
}

#[test]
fn exit_codes_by_error_kind() {
    let solver = anyhow::Error::new(Error::SolverDivergence { last_valid_time: 1e-3 }).context("run");
    assert_eq!(exit_code(&solver), 2);
    let instability = anyhow::Error::new(Error::NumericalInstability {
        max_discrepancy: 0.1,
        tolerance: 0.005,
        stehfest: vec![],
        talbot: vec![],
    });
    assert_eq!(exit_code(&instability), 2);
    let parse = anyhow::Error::new(Error::Parse {
        line: Some(2),
        field: Some("fault.kind".into()),
        message: "unknown".into(),
    });
    assert_eq!(exit_code(&parse), 1);
    assert_eq!(exit_code(&anyhow::anyhow!("--only: unknown check")), 1);
}

#[test]
fn cli_definition_is_consistent() {
    use clap::CommandFactory;
    Cli::command().debug_assert();
}

#[test]
fn ptp_run_writes_artifacts_and_trips() {
    let dir = tempfile::tempdir().unwrap();
    let path = scenario("ptp_internal.toml");
    let code = exec(&["run", "--scenario", path.to_str().unwrap(), "--mode", "both"], dir.path());
    assert_eq!(code, 0);
    for f in ["traces.csv", "modes.csv", "conditioned.csv", "decision.csv", "analytic_modes.csv"] {
        assert!(dir.path().join(f).exists(), "{f} missing");
    }
    let header = csv_row(&dir.path().join("decision.csv"), 0);
    assert_eq!(header[8..], ["trigger_time_s", "decision_time_s", "latency_ms"]);
    let row = csv_row(&dir.path().join("decision.csv"), 1);
    assert_eq!(row[1], "internal_ptp");
    let latency: f64 = row[10].parse().unwrap();
    assert!((latency - 2.0).abs() < 0.01, "{latency}");
    let modes = fs::read_to_string(dir.path().join("modes.csv")).unwrap();
    assert_eq!(modes.lines().next(), Some("time_s,v_l120_V,v_l121_V"));
    assert_eq!(modes.lines().count(), 5002);
}

#[test]
fn no_fault_run_has_no_trigger() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(exec(&["run"], dir.path()), 0);
    let row = csv_row(&dir.path().join("decision.csv"), 1);
    assert_eq!(row[1], "no_fault");
    assert!(row[8..].iter().all(String::is_empty), "{row:?}");
}

#[test]
fn noisy_run_is_seeded() {
    let dir = tempfile::tempdir().unwrap();
    let path = scenario("ptp_internal.toml");
    let f = path.to_str().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert_eq!(exec(&["run", "--scenario", f, "--snr", "30", "--seed", "9"], &a), 0);
    assert_eq!(exec(&["run", "--scenario", f, "--snr", "30", "--seed", "9"], &b), 0);
    let ta = fs::read(a.join("traces.csv")).unwrap();
    assert_eq!(ta, fs::read(b.join("traces.csv")).unwrap());
    assert_eq!(csv_row(&a.join("decision.csv"), 1)[1], "internal_ptp");
}

#[test]
fn malformed_scenario_is_a_parse_error() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("bad.toml");
    fs::write(&file, "[topology]\nclr = \"130 mH\"\n").unwrap();
    assert_eq!(exec(&["run", "--scenario", file.to_str().unwrap()], dir.path()), 1);
    let err = load_scenario_file(&file).unwrap_err().to_string();
    assert!(err.contains("topology.clr") && err.contains("line 2"), "{err}");
    assert!(!dir.path().join("decision.csv").exists());
}

#[test]
fn usage_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(exec(&["explode"], dir.path()), 1);
    assert_eq!(exec(&["run", "--dt=-1"], dir.path()), 1);
    assert_eq!(exec(&["sweep", "--mode", "fast"], dir.path()), 1);
    assert_eq!(exec(&["acceptance", "--only", "12"], dir.path()), 1);
    assert_eq!(exec(&["acceptance", "--only", "P9"], dir.path()), 1);
    assert_eq!(exec(&["oracle"], dir.path()), 1);
    assert_eq!(execute(["hvdc-modal", "--help"]), 0);
}

#[test]
fn single_point_sweep_matches_run() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("one.toml");
    fs::write(
        &file,
        "[fault]\nkind = \"internal_p_ptg\"\nlocation_d = 0.5\nr_f = 100\n\n[topology]\nclr = 0.13\n\n\
         [sweep]\nkinds = [\"internal_p_ptg\"]\nlocation_d = [0.5]\nr_f = [100]\nclr = [0.13]\n",
    )
    .unwrap();
    let f = file.to_str().unwrap();
    let run_dir = dir.path().join("run");
    let sweep_dir = dir.path().join("sweep");
    assert_eq!(exec(&["run", "--scenario", f], &run_dir), 0);
    assert_eq!(exec(&["sweep", "--scenario", f], &sweep_dir), 0);
    let sweep = fs::read_to_string(sweep_dir.join("sweep.csv")).unwrap();
    assert_eq!(sweep.lines().count(), 2);
    let d = csv_row(&run_dir.join("decision.csv"), 1);
    let s = csv_row(&sweep_dir.join("sweep.csv"), 1);
    // verdict, then |dV|, V_L120, V_L121, |di_p|, |di_n|, direction |di|, trigger time
    assert_eq!(d[1], s[7]);
    assert_eq!(d[2..9], s[9..16]);
}

#[test]
fn sweep_reports_are_byte_stable() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("noise.toml");
    fs::write(
        &file,
        "[sweep]\nkinds = [\"internal_ptp\", \"external_backward_ptg\"]\nlocation_d = [0.1]\n\
         r_f = [0]\nclr = [0.09]\nsnr_db = [30]\nseeds = [1, 2, 3, 4, 5]\n",
    )
    .unwrap();
    let f = file.to_str().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert_eq!(exec(&["sweep", "--scenario", f, "--workers", "1"], &a), 0);
    assert_eq!(exec(&["sweep", "--scenario", f, "--workers", "4"], &b), 0);
    let ra = fs::read(a.join("sweep.csv")).unwrap();
    assert_eq!(ra, fs::read(b.join("sweep.csv")).unwrap());
    assert_eq!(String::from_utf8(ra).unwrap().lines().count(), 1 + 10);
}

#[test]
fn trend_sweep_writes_pivot() {
    let dir = tempfile::tempdir().unwrap();
    let path = scenario("trend_sweep.toml");
    assert_eq!(exec(&["sweep", "--scenario", path.to_str().unwrap(), "--mode", "simulate"], dir.path()), 0);
    let sweep = fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    assert_eq!(sweep.lines().count(), 1 + 54);
    let pivot = fs::read_to_string(dir.path().join("pivot.csv")).unwrap();
    assert_eq!(pivot.lines().next(), Some("kind,r_f_ohm,clr_H,d=0.1_kV,d=0.5_kV,d=0.9_kV"));
    assert_eq!(pivot.lines().count(), 1 + 18);
}

#[test]
fn oracle_writes_aligned_waveforms() {
    let dir = tempfile::tempdir().unwrap();
    let path = scenario("p_ptg_high_impedance.toml");
    assert_eq!(exec(&["oracle", "--scenario", path.to_str().unwrap()], dir.path()), 0);
    let csv = fs::read_to_string(dir.path().join("oracle.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("time_s,v_l121_analytic_V,v_l121_simulated_V"));
    assert_eq!(csv.lines().count(), 1 + 1000);
}

#[test]
fn acceptance_selection_and_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(exec(&["acceptance", "--only", "6"], dir.path()), 0);
    let log = fs::read_to_string(dir.path().join("acceptance.txt")).unwrap();
    assert!(log.starts_with("PASS [6] no-fault immunity"), "{log}");
    assert_eq!(log.lines().filter(|l| l.starts_with("PASS") || l.starts_with("FAIL")).count(), 1);
}

#[test]
fn bundled_scenarios_load() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios");
    let mut n = 0;
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            load_scenario_file(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            n += 1;
        }
    }
    assert!(n >= 5);
}
