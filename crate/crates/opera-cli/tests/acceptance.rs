//! CLI-level acceptance: byte-identical reports under a repeated seed, plus
//! the documented exit codes.

use std::process::Command;
use std::time::Instant;

fn opera() -> Command {
    Command::new(env!("CARGO_BIN_EXE_opera"))
}

#[test]
fn criterion_8_deterministic_reports() {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let inst = dir.path().join("inst.json");
    let status = opera()
        .args([
            "generate",
            "--synthetic",
            "--resources",
            "4",
            "--types",
            "3",
            "--rounds",
            "12",
            "--kappa",
            "2",
            "--seed",
            "9",
            "--out",
        ])
        .arg(&inst)
        .status()
        .unwrap();
    assert!(status.success());

    let mut reports = Vec::new();
    for rep in ["a", "b"] {
        let out_dir = dir.path().join(rep);
        let status = opera()
            .args([
                "simulate",
                "--policy",
                "adapshare",
                "--policy",
                "greedy",
                "--gamma",
                "fixed-point",
                "--runs",
                "25",
                "--seed",
                "5",
                "--table-samples",
                "400",
                "--instance",
            ])
            .arg(&inst)
            .arg("--out-dir")
            .arg(&out_dir)
            .status()
            .unwrap();
        assert!(status.success());
        reports.push(std::fs::read(out_dir.join("report.csv")).unwrap());
    }
    let passed = reports[0] == reports[1] && !reports[0].is_empty();
    println!(
        "criterion 8 (byte-identical reports for repeated seed): {} ({:.1?})",
        if passed { "PASS" } else { "FAIL" },
        start.elapsed()
    );
    assert!(passed);
}

#[test]
fn missing_input_exits_2_naming_the_path() {
    let out = opera().args(["solve", "/no/such/file.json"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("/no/such/file.json"), "{stderr}");
}

#[test]
fn corrupted_instance_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(&path, "{ not json").unwrap();
    let out = opera().arg("solve").arg(&path).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn gamma_suite_exits_0_quickly() {
    let start = Instant::now();
    let out = opera().args(["verify", "--suite", "gamma"]).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(start.elapsed().as_secs() < 5);
}

#[test]
fn adaptive_simulation_prints_fixed_point_gamma() {
    let dir = tempfile::tempdir().unwrap();
    let inst = dir.path().join("inst.json");
    assert!(opera()
        .args([
            "generate", "--synthetic", "--resources", "2", "--types", "2", "--rounds", "4",
            "--kappa", "2", "--batch", "3", "--seed", "1", "--out",
        ])
        .arg(&inst)
        .status()
        .unwrap()
        .success());
    let out = opera()
        .args([
            "simulate",
            "--policy",
            "adapshare",
            "--gamma",
            "fixed-point",
            "--runs",
            "5",
            "--seed",
            "2",
            "--table-samples",
            "200",
            "--instance",
        ])
        .arg(&inst)
        .arg("--out-dir")
        .arg(dir.path().join("r"))
        .output()
        .unwrap();
    assert!(out.status.success());
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("0.31767"), "{stdout}");
}

#[test]
fn config_file_drives_simulation_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("exp.toml");
    std::fs::write(
        &config,
        r#"
seed = 3
runs = 50
table_samples = 200

[[policies]]
policy = "greedy"

[[instances]]
kind = "synthetic"
seed = 4

[instances.params]
resources = 2
types = 2
rounds = 4
kappa = 2
batch = 3
"#,
    )
    .unwrap();
    // --runs overrides the config's 50.
    let out = opera()
        .args(["simulate", "--runs", "6", "--config"])
        .arg(&config)
        .arg("--out-dir")
        .arg(dir.path().join("r"))
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("r/report.csv")).unwrap();
    let row = csv.lines().nth(1).unwrap();
    assert!(row.starts_with("synthetic-4,greedy,6,"), "{row}");
}
