//! End-to-end tests of the command-line driver: exit codes, report layout,
//! provenance headers and byte-level determinism.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_magschro"))
}

fn temp_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("magschro-cli-{tag}-{}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("exp.ini");
    fs::write(&path, body).unwrap();
    path
}

const SMALL: &str = "[grid]\nnx = 9\nny = 9\n[time]\nt_final = 0.1\nnt = 4\n\
[carleman]\nsamples = 2\ns_grid = 1, 2\n[sampling]\namplitude = 0.1\n";

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

#[test]
fn malformed_config_exits_2_with_line_number() {
    let dir = temp_dir("badcfg");
    let cfg = write_config(&dir, "[grid]\nnx 9\n");
    let out = run(&["--config", cfg.to_str().unwrap(), "probe-check"]);
    assert_eq!(code(&out), 2);
    let msg = String::from_utf8_lossy(&out.stderr);
    assert!(msg.contains("line 2"), "{msg}");
    let _ = fs::remove_dir_all(&dir);
}

#[test]
fn unknown_key_duplicate_key_and_missing_file_exit_2() {
    let dir = temp_dir("cfg2");
    for body in ["[grid]\nnumber = 9\n", "[grid]\nnx = 9\nnx = 9\n"] {
        let cfg = write_config(&dir, body);
        let out = run(&["--config", cfg.to_str().unwrap(), "probe-check"]);
        assert_eq!(code(&out), 2, "{}", String::from_utf8_lossy(&out.stderr));
    }
    let out = run(&["--config", dir.join("absent.ini").to_str().unwrap(), "probe-check"]);
    assert_eq!(code(&out), 2);
    let _ = fs::remove_dir_all(&dir);
}

#[test]
fn probe_check_reports_the_injectivity_constant() {
    let dir = temp_dir("probes");
    let cfg = write_config(&dir, SMALL);
    let out_dir = dir.join("out");
    let out = run(&[
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
        "probe-check",
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(out_dir.join("probe_check.csv")).unwrap();
    assert!(csv.starts_with("# config-hash: "), "{csv}");
    assert!(csv.contains("# version: "));
    let data = csv.lines().last().unwrap();
    let upsilon: f64 = data.split(',').nth(2).unwrap().parse().unwrap();
    assert!((upsilon - 2f64.sqrt()).abs() < 1e-12);
    assert!(out_dir.join("probes").join("manifest.txt").exists());
    let _ = fs::remove_dir_all(&dir);
}

#[test]
fn simulate_emits_one_csv_per_probe_and_is_byte_deterministic() {
    let dir = temp_dir("sim");
    let cfg = write_config(&dir, SMALL);
    let mut outputs = Vec::new();
    for tag in ["a", "b"] {
        let out_dir = dir.join(tag);
        let out = run(&[
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out_dir.to_str().unwrap(),
            "--threads",
            "1",
            "simulate",
        ]);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
        let mut bytes = Vec::new();
        for k in 0..8 {
            let p = out_dir.join(format!("measurements_probe_{k}.csv"));
            assert!(p.exists(), "missing {}", p.display());
            bytes.push(fs::read(p).unwrap());
        }
        outputs.push(bytes);
    }
    // the header hashes the resolved config, not the output path, so two
    // runs into different directories must agree byte for byte
    assert_eq!(outputs[0], outputs[1]);
    let header = String::from_utf8_lossy(&outputs[0][0]);
    assert!(header.contains("probe,kappa,boundary_node_index,t_index,re,im"));
    let _ = fs::remove_dir_all(&dir);
}

#[test]
fn seed_override_changes_the_measurements() {
    let dir = temp_dir("seed");
    let cfg = write_config(&dir, SMALL);
    let mut contents = Vec::new();
    for seed in ["1", "2"] {
        let out_dir = dir.join(format!("s{seed}"));
        let out = run(&[
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out_dir.to_str().unwrap(),
            "--seed",
            seed,
            "simulate",
        ]);
        assert_eq!(code(&out), 0);
        contents.push(fs::read(out_dir.join("measurements_probe_2.csv")).unwrap());
    }
    assert_ne!(contents[0], contents[1]);
    let _ = fs::remove_dir_all(&dir);
}

#[test]
fn stability_with_identical_endpoints_reports_zero_distance() {
    let dir = temp_dir("stab");
    let body =
        format!("{SMALL}[stability]\npair_count = 1\n[reconstruct]\ntruth_amplitude = 0\n");
    let cfg = write_config(&dir, &body);
    let out_dir = dir.join("out");
    let out = run(&[
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
        "stability",
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(out_dir.join("stability.csv")).unwrap();
    let first = csv
        .lines()
        .find(|l| !l.starts_with('#') && !l.starts_with("pair,"))
        .unwrap();
    let lhs: f64 = first.split(',').nth(2).unwrap().parse().unwrap();
    assert_eq!(lhs, 0.0);
    let _ = fs::remove_dir_all(&dir);
}

#[test]
fn numerical_failure_exits_3_and_removes_partial_outputs() {
    let dir = temp_dir("fail");
    // observation point inside the domain is rejected by the weight builder
    let body = "[grid]\nnx = 9\nny = 9\n[time]\nt_final = 0.1\nnt = 4\n\
[carleman]\nx0_x = 0.5\nx0_y = 0.5\n";
    let cfg = write_config(&dir, body);
    let out_dir = dir.join("out");
    let out = run(&[
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
        "simulate",
    ]);
    assert_eq!(code(&out), 3, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(!out_dir.join("config.txt").exists());
    assert!(!out_dir.join("measurements_probe_0.csv").exists());
    let _ = fs::remove_dir_all(&dir);
}

#[test]
fn selftest_passes_on_a_small_grid() {
    let dir = temp_dir("selftest");
    let cfg = write_config(&dir, "[grid]\nnx = 17\nny = 17\n[time]\nnt = 16\n");
    let out_dir = dir.join("out");
    let out = run(&[
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
        "selftest",
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let log = String::from_utf8_lossy(&out.stdout);
    assert!(log.contains("algebraic round trip ... ok"), "{log}");
    assert!(!log.contains("FAIL"), "{log}");
    let _ = fs::remove_dir_all(&dir);
}
