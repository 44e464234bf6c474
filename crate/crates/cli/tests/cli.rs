use std::path::Path;
use std::process::{Command, Output};

use ddiqkd_cli::Config;

fn ddiqkd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ddiqkd")).args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn write_config(dir: &Path, body: &str) -> String {
    let p = dir.join("run.toml");
    std::fs::write(&p, body).unwrap();
    p.to_str().unwrap().to_owned()
}

fn csv_rows(text: &str) -> Vec<Vec<f64>> {
    text.lines()
        .skip(1)
        .map(|l| l.split(',').map(|x| x.parse().unwrap()).collect())
        .collect()
}

#[test]
fn default_curve_reports_both_cutoffs() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("curve.csv");
    let o = ddiqkd(&["keyrate-curve", "--out", csv.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let summary: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let ours = summary["cutoff_proposal_km"].as_f64().unwrap();
    let bb84 = summary["cutoff_bb84_km"].as_f64().unwrap();
    assert!((ours - 150.0).abs() <= 10.0, "{ours}");
    assert!((bb84 - 163.0).abs() <= 10.0, "{bb84}");
    let text = std::fs::read_to_string(csv).unwrap();
    assert!(text.starts_with("length_km,mu_opt,rate_proposal,rate_bb84\n"));
    assert_eq!(csv_rows(&text).len(), 41);
}

#[test]
fn single_distance_curve() {
    let o = ddiqkd(&["keyrate-curve", "--distances", "0"]);
    assert_eq!(code(&o), 0);
    let rows = csv_rows(&String::from_utf8(o.stdout).unwrap());
    assert_eq!(rows.len(), 1);
    let row = &rows[0];
    assert!((0.55..=0.85).contains(&row[1]), "mu_opt {}", row[1]);
    assert!(row[2] > 0.0 && row[3] > 0.0);
}

#[test]
fn floats_have_seventeen_significant_digits() {
    let o = ddiqkd(&["keyrate-curve", "--distances", "0,50"]);
    let text = String::from_utf8(o.stdout).unwrap();
    for field in text.lines().skip(1).flat_map(|l| l.split(',')) {
        let mantissa = field.split('e').next().unwrap().trim_start_matches('-');
        assert_eq!(mantissa.chars().filter(char::is_ascii_digit).count(), 17, "{field}");
    }
}

#[test]
fn blind_detectors_give_zero_rates() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "eta_det = 0.0\ndistances = [0.0, 25.0, 50.0]\n");
    let csv = dir.path().join("c.csv");
    let o = ddiqkd(&["keyrate-curve", "--config", &cfg, "--out", csv.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let summary: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(summary["cutoff_proposal_km"].as_f64(), Some(0.0));
    assert_eq!(summary["cutoff_bb84_km"].as_f64(), Some(0.0));
    for row in csv_rows(&std::fs::read_to_string(csv).unwrap()) {
        assert_eq!((row[2], row[3]), (0.0, 0.0));
    }
}

#[test]
fn session_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    for p in [&a, &b] {
        let o = ddiqkd(&["session", "--seed", "42", "--pulses", "200000", "--distances", "10", "--out", p.to_str().unwrap()]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn session_gains_match_analytic() {
    let o = ddiqkd(&["session", "--seed", "7", "--pulses", "1000000", "--distances", "0", "--mu", "0.7"]);
    assert_eq!(code(&o), 0);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let matched = v["report"]["tally"]["matched_pulses"].as_f64().unwrap();
    for i in 0..4 {
        let mc = v["report"]["detectors"][i]["gain"].as_f64().unwrap();
        let p = v["analytic"]["detectors"][i]["gain"].as_f64().unwrap();
        let se = (p * (1.0 - p) / matched).sqrt();
        assert!((mc - p).abs() <= 3.0 * se, "D{}: {mc} vs {p}", i + 1);
    }
}

#[test]
fn zero_mu_is_a_usage_error() {
    let o = ddiqkd(&["session", "--mu", "0", "--pulses", "10"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("mu"));
}

#[test]
fn bad_inputs_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&ddiqkd(&["no-such-command"])), 2);
    assert_eq!(code(&ddiqkd(&["keyrate-curve", "--distances", "0,x"])), 2);
    assert_eq!(code(&ddiqkd(&["keyrate-curve", "--distances", "50,0"])), 2);
    assert_eq!(code(&ddiqkd(&["theory-table", "--visibility", "1.5"])), 2);
    assert_eq!(code(&ddiqkd(&["session", "--config", "/nonexistent/run.toml"])), 2);
    let cfg = write_config(dir.path(), "unknown_key = 1\n");
    assert_eq!(code(&ddiqkd(&["theory-table", "--config", &cfg])), 2);
    let cfg = write_config(dir.path(), "e_mis = 0.9\n");
    assert_eq!(code(&ddiqkd(&["keyrate-curve", "--config", &cfg])), 2);
}

#[test]
fn verify_appendix_passes_and_catches_a_fault() {
    let o = ddiqkd(&["verify-appendix"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    let text = String::from_utf8(o.stdout).unwrap();
    assert_eq!(text.lines().filter(|l| l.starts_with("PASS ")).count(), 4);

    let o = ddiqkd(&["verify-appendix", "--inject-fault"]);
    assert_eq!(code(&o), 1);
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.contains("FAIL rho_b_equals_rho_a"), "{text}");
}

#[test]
fn theory_table_lists_both_visibilities() {
    let o = ddiqkd(&["theory-table"]);
    assert_eq!(code(&o), 0);
    let text = String::from_utf8(o.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "visibility,state,D1,D2,D3,D4");
    assert_eq!(lines.len(), 17);
    assert!(lines[1].starts_with("8.8400000000000001e-1,\"|H>|c>\","));
    assert!(lines[9].starts_with("1.0000000000000000e0,\"|H>|c>\","));
    for label in ["|H>|c>", "|V>|c>", "|H>|a>", "|V>|a>", "|45>|b,0>", "|-45>|b,pi>", "|45>|b,pi>", "|-45>|b,0>"] {
        assert_eq!(text.matches(&format!("\"{label}\"")).count(), 2, "{label}");
    }
}

#[test]
fn flags_override_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "distances = [0.0, 10.0, 20.0]\nmu = 0.5\n");
    let o = ddiqkd(&["keyrate-curve", "--config", &cfg, "--mu", "0.6"]);
    let rows = csv_rows(&String::from_utf8(o.stdout).unwrap());
    assert_eq!(rows.len(), 3);
    assert!(rows.iter().all(|r| r[1] == 0.6));
}

#[test]
fn config_round_trips() {
    let cfg = Config {
        p_dark: Some(1e-5),
        mu: Some(0.3),
        distances: vec![0.0, 0.1, 1.0 / 3.0],
        ..Config::default()
    };
    for c in [Config::default(), cfg] {
        let text = c.to_toml();
        let back = Config::from_toml(&text).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.to_toml(), text);
    }
}

#[test]
fn empty_config_file_means_defaults() {
    assert_eq!(Config::from_toml("").unwrap(), Config::default());
}
