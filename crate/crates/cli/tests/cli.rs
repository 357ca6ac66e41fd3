use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn scratch(name: &str) -> PathBuf {
    let d = std::env::temp_dir().join(format!("kamreduce-cli-{}-{name}", std::process::id()));
    let _ = std::fs::remove_dir_all(&d);
    std::fs::create_dir_all(&d).unwrap();
    d
}

fn run(dir: &Path, args: &[&str], config: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_kamreduce"));
    cmd.args(args).arg("--out").arg(dir.join("out"));
    if let Some(c) = config {
        let p = dir.join("config.json");
        std::fs::write(&p, c).unwrap();
        cmd.arg("--config").arg(p);
    }
    cmd.output().unwrap()
}

fn read(dir: &Path, name: &str) -> String {
    std::fs::read_to_string(dir.join("out").join(name)).unwrap()
}

#[test]
fn check_frequency_reports_zero_margin_for_rational_omega() {
    let d = scratch("rational");
    let o = run(&d, &["check-frequency"], Some(r#"{"frequency": {"omega_list": [[1.0], [3.883222077450933]]}}"#));
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = read(&d, "frequency.csv");
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 2);
    let margin = |r: &str| r.split(',').nth(1).unwrap().parse::<f64>().unwrap();
    assert_eq!(margin(rows[0]), 0.0);
    assert!(margin(rows[1]) > 0.0);
}

#[test]
fn check_frequency_rejects_an_empty_list() {
    let d = scratch("empty");
    let o = run(&d, &["check-frequency"], Some(r#"{"frequency": {"omega_list": []}}"#));
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn unknown_config_keys_and_bad_flags_are_config_errors() {
    let d = scratch("badkey");
    assert_eq!(run(&d, &["reduce"], Some(r#"{"modle": {}}"#)).status.code(), Some(3));
    assert_eq!(run(&d, &["reduce", "--seed", "x"], None).status.code(), Some(3));
    assert_eq!(run(&d, &["reduce"], Some(r#"{"model": {"epsilon": -1.0}}"#)).status.code(), Some(3));
}

#[test]
fn missing_config_file_is_an_io_error() {
    let d = scratch("missing");
    let o = Command::new(env!("CARGO_BIN_EXE_kamreduce"))
        .args(["reduce", "--config"])
        .arg(d.join("nope.json"))
        .arg("--out")
        .arg(d.join("out"))
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn zero_perturbation_gives_a_one_row_table_and_reruns_from_the_manifest() {
    let d = scratch("zero");
    let o = run(&d, &["reduce"], Some(r#"{"model": {"potential": {"preset": "zero"}}}"#));
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = read(&d, "convergence.csv");
    assert_eq!(csv.lines().count(), 2, "{csv}");
    let manifest = d.join("out").join("manifest.json");
    let again = d.join("again");
    let o = Command::new(env!("CARGO_BIN_EXE_kamreduce"))
        .args(["reduce", "--config"])
        .arg(&manifest)
        .arg("--out")
        .arg(&again)
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(std::fs::read_to_string(again.join("convergence.csv")).unwrap(), csv);
}

#[test]
fn resonant_frequency_exits_with_code_two() {
    let d = scratch("resonant");
    let o = run(&d, &["reduce"], Some(r#"{"model": {"omega": [1.0]}}"#));
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
    let v = read(&d, "violation.csv");
    assert_eq!(v.lines().count(), 2);
}

#[test]
fn measure_single_gamma_has_no_fit() {
    let d = scratch("single");
    let o = run(&d, &["measure"], Some(r#"{"measure": {"gamma_list": [0.01], "grid": 2000, "J": 8}}"#));
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = read(&d, "measure.csv");
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 1);
    assert!(rows[0].ends_with(','), "{}", rows[0]);
}

#[test]
fn measure_sweep_has_a_slope_row() {
    let d = scratch("sweep");
    let o = run(&d, &["measure"], Some(r#"{"measure": {"grid": 2000, "J": 8}}"#));
    assert_eq!(o.status.code(), Some(0));
    let csv = read(&d, "measure.csv");
    let last = csv.lines().last().unwrap();
    assert!(last.split(',').nth(3).unwrap().parse::<f64>().is_ok(), "{last}");
}

#[test]
fn measure_grid_zero_is_a_config_error() {
    let d = scratch("grid0");
    assert_eq!(run(&d, &["measure"], Some(r#"{"measure": {"grid": 0}}"#)).status.code(), Some(3));
}

#[test]
fn verify_with_zero_perturbation_is_exact() {
    let d = scratch("verify0");
    let o = run(&d, &["verify"], Some(r#"{"model": {"potential": {"preset": "zero"}, "J": 8}, "verify": {"t_end": 100.0, "dt_factor": 0.05}}"#));
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = read(&d, "verify.csv");
    let row = csv.lines().nth(1).unwrap();
    let header: Vec<&str> = csv.lines().next().unwrap().split(',').collect();
    let col = header.iter().position(|h| *h == "sup_rel_error").unwrap();
    assert!(row.split(',').nth(col).unwrap().parse::<f64>().unwrap() <= 1e-10);
}

#[test]
fn verify_with_a_bad_chain_file_is_an_io_error() {
    let d = scratch("badchain");
    let chain = d.join("chain.json");
    std::fs::write(&chain, "{not json").unwrap();
    let cfg = format!(r#"{{"verify": {{"chain_file": {:?}}}}}"#, chain.to_str().unwrap());
    assert_eq!(run(&d, &["verify"], Some(&cfg)).status.code(), Some(4));
}

#[test]
fn selftest_listing_and_corrupted_tolerance() {
    let d = scratch("selftest");
    let o = run(&d, &["selftest", "--list"], None);
    assert_eq!(o.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&o.stdout).lines().count() >= 10);
    let cfg = r#"{"selftest": {"instances": 3, "only": ["bracket_antisymmetry"], "tolerances": {"bracket_antisymmetry": 0.0}}}"#;
    assert_eq!(run(&d, &["selftest"], Some(cfg)).status.code(), Some(1));
}

#[test]
fn verify_reads_the_transform_written_by_reduce() {
    let d = scratch("chain");
    let base = r#""model": {"potential": {"preset": "single-mode", "c": 1.0}, "J": 8, "K_cap": 4}"#;
    let o = run(&d, &["reduce"], Some(&format!("{{{base}}}")));
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let chain = d.join("out").join("transform.json");
    let cfg = format!(r#"{{{base}, "verify": {{"t_end": 10.0, "chain_file": {:?}}}}}"#, chain.to_str().unwrap());
    let v = d.join("verify");
    std::fs::create_dir_all(&v).unwrap();
    let o = run(&v, &["verify"], Some(&cfg));
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
}
