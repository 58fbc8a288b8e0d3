//! End-to-end checks of the `msseg` binary: exit codes, file formats, and the
//! fit -> features pipeline.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn msseg() -> Command {
    Command::new(env!("CARGO_BIN_EXE_msseg"))
}

fn tempdir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("msseg-cli-{tag}-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn write_series(path: &Path, values: &[f64]) {
    let mut text = String::from("index,value\n");
    for (i, v) in values.iter().enumerate() {
        text.push_str(&format!("{i},{v}\n"));
    }
    std::fs::write(path, text).unwrap();
}

fn assert_success(out: &Output) {
    assert!(
        out.status.success(),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn calibrate_emits_valid_json() {
    let out = msseg()
        .args([
            "calibrate",
            "--n",
            "64",
            "--sigma",
            "1",
            "--beta",
            "0.1",
            "--mc",
            "200",
            "--seed",
            "4",
        ])
        .output()
        .unwrap();
    assert_success(&out);
    let cal: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(cal["eta"].is_number());
    assert_eq!(cal["n_mc"], 200);
    assert!(cal["delta_bound"].as_f64().unwrap() > 0.0);
}

#[test]
fn fit_features_pipeline() {
    let dir = tempdir("pipeline");
    let data = dir.join("data.csv");
    let mut values = vec![0.0; 32];
    values.extend(vec![8.0; 32]);
    write_series(&data, &values);

    let estimate = dir.join("estimate.json");
    let out = msseg()
        .args([
            "fit",
            "--input",
            data.to_str().unwrap(),
            "--sigma",
            "1",
            "--penalty",
            "smuce",
            "--threshold",
            "quantile:beta=0.1,mc=200",
            "--intervals",
            "dyadic-length",
            "--seed",
            "7",
            "--output",
            estimate.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_success(&out);
    let est: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&estimate).unwrap()).unwrap();
    assert_eq!(est["jumps"], 1);
    assert_eq!(est["meta"]["penalty"], "smuce");
    assert!(est["certificate"].as_f64().unwrap() <= est["eta"].as_f64().unwrap() + 1e-9);
    assert_eq!(est["bands"].as_array().unwrap().len(), 2);
    assert_eq!(est["meta"]["threshold"], "quantile:beta=0.1,mc=200");

    let report = dir.join("report.json");
    let table = dir.join("annotations.txt");
    let out = msseg()
        .args([
            "features",
            "--estimate",
            estimate.to_str().unwrap(),
            "--beta",
            "0.1",
            "--m",
            "auto",
            "--output",
            report.to_str().unwrap(),
            "--annotations",
            table.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_success(&out);
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    let jumps = report["jump_assessments"].as_array().unwrap();
    assert_eq!(jumps.len(), 1);
    assert_eq!(jumps[0]["significant"], true);
    let table = std::fs::read_to_string(&table).unwrap();
    assert!(table.starts_with("# location type significant"));
    assert!(table.lines().count() >= 2);
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn invalid_configuration_exits_with_2() {
    let dir = tempdir("badcfg");
    let cfg = dir.join("bad.cfg");
    std::fs::write(&cfg, "experiment = stability\nsignal = blocks\n").unwrap();
    let out = msseg()
        .args(["stability", "--config", cfg.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn infeasible_fit_exits_with_3() {
    let dir = tempdir("infeasible");
    let data = dir.join("data.csv");
    write_series(&data, &[1.0, 2.0, 0.5, 1.5, 0.0, 2.5, 1.0, 0.5]);
    let out = msseg()
        .args([
            "fit",
            "--input",
            data.to_str().unwrap(),
            "--sigma",
            "1",
            "--threshold",
            "value:-10",
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("infeasible"));
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn oracle_curve_emits_csv() {
    let out = msseg()
        .args([
            "oracle",
            "--signal",
            "heavisine",
            "--n",
            "256",
            "--curve",
            "16",
        ])
        .output()
        .unwrap();
    assert_success(&out);
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("k,delta,gamma_hat"));
    assert_eq!(lines.count(), 16);
}

#[test]
fn oracle_risk_reports_decomposition() {
    let out = msseg()
        .args([
            "oracle-risk",
            "--signal",
            "ramp",
            "--partition",
            "equal:m=8",
            "--sigma",
            "1",
            "--n",
            "1024",
        ])
        .output()
        .unwrap();
    assert_success(&out);
    let risk: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let bias = risk["bias_sq"].as_f64().unwrap();
    let total = risk["total"].as_f64().unwrap();
    assert!((bias - 1.0 / (12.0 * 64.0)).abs() < 1e-12);
    assert!((total - bias - 8.0 / 1024.0).abs() < 1e-12);
}

#[test]
fn stability_runs_are_reproducible_files() {
    let dir = tempdir("repro");
    let out_a = dir.join("a.csv");
    let out_b = dir.join("b.csv");
    for path in [&out_a, &out_b] {
        let out = msseg()
            .args([
                "stability",
                "--beta",
                "0.3",
                "--replicates",
                "3",
                "--mc",
                "200",
                "--seed",
                "12",
                "--output",
                path.to_str().unwrap(),
            ])
            .output()
            .unwrap();
        assert_success(&out);
    }
    let a = std::fs::read(&out_a).unwrap();
    let b = std::fs::read(&out_b).unwrap();
    assert_eq!(a, b, "same manifest must give byte-identical CSV");
    let text = String::from_utf8(a).unwrap();
    assert!(text.starts_with("replicate,n,snr,beta,jumps,l2_loss"));
    assert_eq!(text.lines().count(), 1 + 3);
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn convergence_smoke_with_gnuplot_output() {
    let dir = tempdir("conv");
    let path = dir.join("conv.gnuplot");
    let out = msseg()
        .args([
            "convergence",
            "--signal",
            "heavisine",
            "--n",
            "128,256",
            "--snr",
            "2.5",
            "--beta",
            "0.1",
            "--replicates",
            "2",
            "--mc",
            "200",
            "--seed",
            "3",
            "--format",
            "gnuplot",
            "--output",
            path.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_success(&out);
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(text.starts_with("# n snr beta"));
    assert!(text.contains("# slope "));
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn thread_cap_does_not_change_results() {
    let dir = tempdir("threads");
    let serial = dir.join("serial.csv");
    let parallel = dir.join("parallel.csv");
    for (path, threads) in [(&serial, "1"), (&parallel, "4")] {
        let out = msseg()
            .env("MSSEG_THREADS", threads)
            .args([
                "stability",
                "--beta",
                "0.2",
                "--replicates",
                "4",
                "--mc",
                "200",
                "--seed",
                "21",
                "--output",
                path.to_str().unwrap(),
            ])
            .output()
            .unwrap();
        assert_success(&out);
    }
    assert_eq!(
        std::fs::read(&serial).unwrap(),
        std::fs::read(&parallel).unwrap(),
        "results must be independent of the thread count"
    );
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn full_system_guard_rejects_large_grids() {
    let out = msseg()
        .args([
            "noise-sweep",
            "--signal",
            "blocks",
            "--n",
            "4096",
            "--intervals",
            "full",
            "--replicates",
            "1",
            "--mc",
            "200",
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}
