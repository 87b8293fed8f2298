use std::process::Command;

fn isac() -> Command {
    Command::new(env!("CARGO_BIN_EXE_isac"))
}

fn config() -> String {
    concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/reference.toml").to_string()
}

fn stdout(cmd: &mut Command) -> (bool, String) {
    let out = cmd.output().unwrap();
    (out.status.success(), String::from_utf8(out.stdout).unwrap())
}

#[test]
fn calibrate_prints_csv() {
    let (ok, text) = stdout(isac().args(["calibrate", "--delta", "0.01", "--shape", "180", "--n", "32"]));
    assert!(ok);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "delta,shape,n,beta,fwer");
    let fields: Vec<f64> = lines[1].split(',').map(|f| f.parse().unwrap()).collect();
    assert!((fields[3] - 1.56059).abs() < 1e-4);
    assert!((fields[4] - 0.01).abs() < 1e-6);
}

#[test]
fn calibrate_mc_check_agrees() {
    let (ok, text) = stdout(isac().args([
        "calibrate", "--delta", "0.1", "--shape", "180", "--n", "32", "--mc-check", "--mc-draws", "20000",
    ]));
    assert!(ok);
    let row: Vec<f64> = text.lines().nth(1).unwrap().split(',').map(|f| f.parse().unwrap()).collect();
    let (fwer, mc, se) = (row[4], row[5], row[6]);
    assert!((mc - fwer).abs() < 4.0 * se, "{mc} vs {fwer}");
}

#[test]
fn calibrate_rejects_bad_delta() {
    let out = isac().args(["calibrate", "--delta", "1.5", "--shape", "180", "--n", "32"]).output().unwrap();
    assert!(!out.status.success());
}

#[test]
fn crlb_rows_per_power_and_target() {
    let (ok, text) = stdout(isac().args([
        "crlb", "--config", &config(), "--overlap", "8", "--e0", "0.05,0.1", "--realizations", "2",
    ]));
    assert!(ok);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "E_0,target,DEB_clean,DEB_all,AEB_clean,AEB_all");
    assert_eq!(lines.len(), 5);
    for line in &lines[1..] {
        let f: Vec<&str> = line.split(',').collect();
        let v: Vec<f64> = f[2..].iter().map(|x| x.parse().unwrap()).collect();
        assert!(v.iter().all(|&x| x > 0.0 && x.is_finite()));
        // More data never loosens the bound.
        assert!(v[1] <= v[0] * (1.0 + 1e-9) && v[3] <= v[2] * (1.0 + 1e-9));
    }
}

#[test]
fn harness_run_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let status = isac()
        .args(["harness", "run", "--experiment", "beta", "--config", &config(), "--out", out, "--trials", "50", "--seed", "4"])
        .output()
        .unwrap();
    let text = String::from_utf8(status.stdout).unwrap();
    assert!(text.contains("assertions"));
    assert!(dir.path().join("fig2_beta.csv").exists());
    let manifest = std::fs::read_to_string(dir.path().join("manifest.json")).unwrap();
    assert!(manifest.contains("\"seed\": 4"));
    let passed = manifest.trim_end().ends_with("\"passed\": true\n}");
    assert_eq!(status.status.success(), passed);
    assert_eq!(passed, !text.contains("FAIL "));
}

#[test]
fn harness_exit_code_reflects_failures() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("strict.toml");
    let base = std::fs::read_to_string(config()).unwrap();
    // An unreachable detection-rate requirement forces a failed assertion.
    std::fs::write(&cfg, base.replace("[harness]", "[harness]\npower_min_rate = 1.5\npower_e1_grid = [0.05]")).unwrap();
    let out = isac()
        .args([
            "harness", "run", "--experiment", "power", "--config", cfg.to_str().unwrap(), "--out",
            dir.path().join("o").to_str().unwrap(), "--trials", "3",
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8(out.stdout).unwrap().contains("FAIL"));
}

#[test]
fn unknown_experiment_is_usage_error() {
    let out = isac()
        .args(["harness", "run", "--experiment", "fig9", "--config", &config(), "--out", "/tmp/x"])
        .output()
        .unwrap();
    assert!(!out.status.success());
}

#[test]
fn simulate_writes_readable_dump() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("y.bin");
    let (ok, _) = stdout(isac().args(["simulate", "--config", &config(), "--out", path.to_str().unwrap(), "--overlap", "4"]));
    assert!(ok);
    let (y, masks) = isac_core::waveform::ReceivedTensor::read_dump(std::fs::File::open(&path).unwrap()).unwrap();
    assert_eq!(y.as_slice().len(), 64 * 30 * 6);
    assert_eq!(masks.len(), 2);
    assert_eq!(masks[0].intersection(&masks[1]).len(), 4 * 30);
}
