use std::path::Path;
use std::process::Command;

fn herald(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_herald")).args(args).output().unwrap()
}

fn first_line(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap().lines().next().unwrap().to_string()
}

#[test]
fn validate_defaults_succeeds() {
    let out = herald(&["validate-config"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("calibrated"));
}

#[test]
fn zero_pulses_exits_with_config_code() {
    let out = herald(&["power-sweep", "--pulses", "0"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("run.pulses"));
}

#[test]
fn malformed_config_exits_with_config_code() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    std::fs::write(&path, "[run]\nseed = \"x\"\n").unwrap();
    let out = herald(&["validate-config", "--config", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unwritable_output_exits_with_runtime_code() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "").unwrap();
    let out = herald(&["oracle-table", "--out", blocker.join("sub").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn outputs_carry_versioned_headers_and_plots() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let out = herald(&["power-sweep", "--pulses", "20000", "--seed", "9", "--out", d, "--plots"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(
        first_line(&dir.path().join("power_sweep.csv")),
        "# herald power-sweep v1 seed=9 pulses=20000 repeats=1"
    );
    let svg = std::fs::read_to_string(dir.path().join("power_sweep_rates.svg")).unwrap();
    assert!(svg.starts_with("<svg"));

    for cmd in ["wdm-sweep", "qpm-curves", "oracle-table"] {
        assert_eq!(herald(&[cmd, "--out", d]).status.code(), Some(0), "{cmd}");
    }
    let header = std::fs::read_to_string(dir.path().join("wdm_sweep.csv")).unwrap();
    assert_eq!(header.lines().nth(1).unwrap(), "L_C_um,S_s_dB,S_i_dB,eta_s,eta_i,eta_product,optimum");
    assert!(first_line(&dir.path().join("oracle_table.csv")).starts_with("# herald oracle-table v1"));
}

#[test]
fn same_seed_gives_identical_bytes() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for (dir, workers) in [(&a, "1"), (&b, "3")] {
        let out = herald(&[
            "power-sweep",
            "--pulses",
            "50000",
            "--repeats",
            "3",
            "--workers",
            workers,
            "--out",
            dir.path().to_str().unwrap(),
        ]);
        assert_eq!(out.status.code(), Some(0));
    }
    let read = |d: &tempfile::TempDir| std::fs::read(d.path().join("power_sweep.csv")).unwrap();
    assert_eq!(read(&a), read(&b));
}
