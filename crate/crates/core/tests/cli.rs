use std::process::{Command, Output};

fn flexmc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_flexmc")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn csv_has_metadata_header_and_nine_digit_floats() {
    let o = flexmc(&["--preset", "table1", "--reproducible", "snr"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    let lines: Vec<&str> = text.lines().collect();
    let body = lines.iter().position(|l| !l.starts_with('#')).unwrap();
    assert!(body > 0);
    assert!(lines[..body].iter().any(|l| l.starts_with("# preset: table1")));
    assert!(!text.contains("timestamp"));
    assert_eq!(lines[body], "sweep_value,snr1_db,snr2_db,status");
    let fields: Vec<&str> = lines[body + 1].split(',').collect();
    for f in &fields[1..3] {
        let mantissa = f.split('e').next().unwrap().trim_start_matches('-');
        assert_eq!(mantissa.replace('.', "").len(), 9, "{f}");
        f.parse::<f64>().unwrap();
    }
}

#[test]
fn json_output_parses() {
    let o = flexmc(&["--format", "json", "equilibrium"]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!(v.to_string().contains("theta"));
}

#[test]
fn config_errors_exit_2() {
    assert_eq!(flexmc(&["--set", "device.W=-1", "snr"]).status.code(), Some(2));
    assert_eq!(flexmc(&["--set", "device.nope=1", "snr"]).status.code(), Some(2));
    let o = flexmc(&["figure", "fig9"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("fig10c"));
    assert_eq!(flexmc(&["--config", "/nonexistent.toml", "snr"]).status.code(), Some(2));
}

#[test]
fn convergence_failure_exits_3() {
    assert_eq!(flexmc(&["--set", "model.eq_max_iter=1", "snr"]).status.code(), Some(3));
}

#[test]
fn partial_sweep_exits_4_and_keeps_rows() {
    let o = flexmc(&[
        "--preset", "table1", "sweep", "--key", "device.H_nm", "--range", "1:260", "--points", "4", "--outputs", "snr1",
    ]);
    assert_eq!(o.status.code(), Some(4));
    let text = stdout(&o);
    let rows: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).skip(1).collect();
    assert_eq!(rows.len(), 4);
    assert!(rows.iter().any(|r| r.contains("NaN") && r.contains("error")));
    assert!(rows.last().unwrap().ends_with(",ok"));
}

#[test]
fn config_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = flexmc::params::Config::preset(flexmc::params::Preset::Improved);
    let path = dir.path().join("c.toml");
    std::fs::write(&path, cfg.to_toml()).unwrap();
    let a = flexmc(&["--reproducible", "--preset", "improved", "snr"]);
    let b = flexmc(&["--reproducible", "--config", path.to_str().unwrap(), "--preset", "improved", "snr"]);
    let body = |o: &Output| stdout(o).lines().filter(|l| !l.starts_with('#')).collect::<Vec<_>>().join("\n");
    assert_eq!(body(&a), body(&b));
    let sha = |o: &Output| stdout(o).lines().find(|l| l.starts_with("# config_sha256")).map(String::from);
    assert_eq!(sha(&a), sha(&b));
}

#[test]
fn out_directory_receives_file() {
    let dir = tempfile::tempdir().unwrap();
    let o = flexmc(&["--out", dir.path().to_str().unwrap(), "--reproducible", "figure", "fig5"]);
    assert_eq!(o.status.code(), Some(0));
    let files: Vec<_> = std::fs::read_dir(dir.path()).unwrap().collect();
    assert_eq!(files.len(), 1);
}

#[test]
fn set_overrides_change_results() {
    let a = stdout(&flexmc(&["--reproducible", "snr"]));
    let b = stdout(&flexmc(&["--reproducible", "--set", "device.Not=1e29", "snr"]));
    assert_ne!(a.lines().last(), b.lines().last());
    let c = stdout(&flexmc(&["--reproducible", "--set", "ligand[*].k_on=1e-17", "snr"]));
    assert_ne!(a.lines().last(), c.lines().last());
}

#[test]
fn oracle_reports_json() {
    let o = flexmc(&["oracle", "--duration", "20", "--receptors", "200", "--seed", "3"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert!(v.is_object());
}
