//! End-to-end checks of the `oodd` binary: exit codes, file outputs, the
//! recomputation consistency of summary.csv, cache reuse, and custom
//! geometry via mask files.

use std::path::{Path, PathBuf};
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_oodd"))
}

fn temp_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("oodd_cli_{tag}"));
    std::fs::remove_dir_all(&dir).ok();
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

const TINY: [&str; 12] = [
    "--h", "1/32", "--H", "1/4", "--eps", "1/8", "--samples", "6", "--p", "0.0,0.15", "--beta",
    "100",
];

#[test]
fn no_arguments_prints_usage_and_exits_2() {
    let out = bin().output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("usage: oodd"));
}

#[test]
fn unknown_subcommand_and_flags_exit_2() {
    let out = bin().arg("frobnicate").output().unwrap();
    assert_eq!(out.status.code(), Some(2));

    let out = bin().args(["run", "--bogus", "1"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));

    let out = bin()
        .args(["run", "--h", "1/8", "--H", "1/8", "--eps", "1/8"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2), "mesh constraint violations are config errors");
}

fn read_csv(path: &Path) -> Vec<Vec<String>> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|line| line.split(',').map(|s| s.to_string()).collect())
        .collect()
}

#[test]
fn run_populates_the_output_directory_and_summary_is_recomputable() {
    let dir = temp_dir("run");
    let out = bin()
        .args(["run"])
        .args(TINY)
        .args(["--out", dir.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));

    for name in ["samples.csv", "summary.csv", "rmse.csv", "deviation.csv", "iterations_vs_p.svg"] {
        assert!(dir.join(name).exists(), "{name} missing");
    }

    // Recompute summary.csv from samples.csv.
    let samples = read_csv(&dir.join("samples.csv"));
    let summary = read_csv(&dir.join("summary.csv"));
    assert!(!samples.is_empty() && !summary.is_empty());
    for row in &summary {
        let (variant, p) = (&row[0], &row[1]);
        let iters: Vec<f64> = samples
            .iter()
            .filter(|s| &s[0] == variant && &s[1] == p && s[5] == "true")
            .map(|s| s[4].parse().unwrap())
            .collect();
        let stats = oodd_cli::stats::iteration_stats(&iters).unwrap();
        let mean: f64 = row[2].parse().unwrap();
        let std: f64 = row[3].parse().unwrap();
        let outliers: usize = row[4].parse().unwrap();
        let fraction: f64 = row[5].parse().unwrap();
        assert!((stats.mean - mean).abs() <= 1e-12);
        assert!((stats.std - std).abs() <= 1e-12);
        assert_eq!(stats.n_outliers, outliers);
        let cell = samples
            .iter()
            .filter(|s| &s[0] == variant && &s[1] == p)
            .count();
        assert!((iters.len() as f64 / cell as f64 - fraction).abs() <= 1e-12);
    }
}

#[test]
fn repeated_cli_runs_are_byte_identical() {
    let dir_a = temp_dir("det_a");
    let dir_b = temp_dir("det_b");
    for dir in [&dir_a, &dir_b] {
        let out = bin()
            .args(["run"])
            .args(TINY)
            .args(["--out", dir.to_str().unwrap()])
            .output()
            .unwrap();
        assert_eq!(out.status.code(), Some(0));
    }
    for name in ["samples.csv", "summary.csv", "rmse.csv", "deviation.csv"] {
        let a = std::fs::read(dir_a.join(name)).unwrap();
        let b = std::fs::read(dir_b.join(name)).unwrap();
        assert_eq!(a, b, "{name}");
    }
}

#[test]
fn break_even_prints_both_sample_counts() {
    let dir = temp_dir("cost");
    let cost = dir.join("cost.txt");
    std::fs::write(
        &cost,
        "t_patch=1.0\nt_comb=0.01\nt_pcg=0.1\nn_ref=17\nn_patches=100\nk_direct=20\nk_nd=60\nk_oo=20\n",
    )
    .unwrap();
    let out = bin()
        .args(["break-even", "--cost", cost.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("break-even vs direct: 0.1717"), "{stdout}");
    assert!(stdout.contains("break-even vs nd: 5.333"), "{stdout}");

    // Degenerate denominator prints "never".
    std::fs::write(
        &cost,
        "t_patch=1.0\nt_comb=1.0\nt_pcg=0.1\nn_ref=17\nn_patches=100\nk_direct=20\nk_nd=20\nk_oo=20\n",
    )
    .unwrap();
    let out = bin()
        .args(["break-even", "--cost", cost.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("break-even vs direct: never"), "{stdout}");

    let out = bin().arg("break-even").output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn cache_subcommand_builds_and_reuses_the_dictionary() {
    let dir = temp_dir("cache");
    let cache = dir.join("dict.bin");
    let mesh_flags = ["--h", "1/32", "--H", "1/4", "--eps", "1/8", "--beta", "100"];
    let out = bin()
        .args(["cache"])
        .args(mesh_flags)
        .args(["--cache", cache.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(cache.exists());
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("written"), "{stdout}");

    // Second invocation finds the key up to date.
    let out = bin()
        .args(["cache"])
        .args(mesh_flags)
        .args(["--cache", cache.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("up to date"));

    // A run through the cache gives the same results as without it.
    let dir_cached = temp_dir("cache_run");
    let out = bin()
        .args(["run"])
        .args(TINY)
        .args(["--cache", cache.to_str().unwrap()])
        .args(["--out", dir_cached.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let dir_plain = temp_dir("plain_run");
    let out = bin()
        .args(["run"])
        .args(TINY)
        .args(["--out", dir_plain.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(
        std::fs::read(dir_cached.join("samples.csv")).unwrap(),
        std::fs::read(dir_plain.join("samples.csv")).unwrap()
    );
}

#[test]
fn custom_geometry_runs_from_a_mask_file() {
    let dir = temp_dir("custom");
    let mask = dir.join("mask.txt");
    // Background: centered square; defect: hollow frame.
    std::fs::write(
        &mask,
        "4\n0000\n0110\n0110\n0000\n\n1111\n1001\n1001\n1111\n",
    )
    .unwrap();
    let out = bin()
        .args(["run", "--model", "custom"])
        .args(["--mask-file", mask.to_str().unwrap()])
        .args(TINY)
        .args(["--out", dir.join("results").to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.join("results/samples.csv").exists());

    // Missing mask file is a config error.
    let out = bin()
        .args(["run", "--model", "custom"])
        .args(TINY)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn compare_operators_writes_deviation_rows() {
    let dir = temp_dir("dev");
    let out = bin()
        .args(["compare-operators"])
        .args(TINY)
        .args(["--variants", "nd,oo", "--out", dir.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = read_csv(&dir.join("deviation.csv"));
    assert_eq!(rows.len(), 4); // 2 p-values x {nd, oo}
    // samples.csv exists with headers only.
    let samples = std::fs::read_to_string(dir.join("samples.csv")).unwrap();
    assert_eq!(samples.lines().count(), 1);
    assert!(dir.join("deviation_vs_p.svg").exists());
}

#[test]
fn results_are_independent_of_the_thread_count() {
    let dir_serial = temp_dir("threads_1");
    let dir_parallel = temp_dir("threads_n");
    for (dir, threads) in [(&dir_serial, "1"), (&dir_parallel, "4")] {
        let out = bin()
            .env("RAYON_NUM_THREADS", threads)
            .args(["run"])
            .args(TINY)
            .args(["--out", dir.to_str().unwrap()])
            .output()
            .unwrap();
        assert_eq!(out.status.code(), Some(0));
    }
    for name in ["samples.csv", "summary.csv", "rmse.csv"] {
        let a = std::fs::read(dir_serial.join(name)).unwrap();
        let b = std::fs::read(dir_parallel.join(name)).unwrap();
        assert_eq!(a, b, "{name} depends on the degree of parallelism");
    }
}

#[test]
fn help_lists_the_registered_variants() {
    let out = bin().arg("help").output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let stdout = String::from_utf8_lossy(&out.stdout);
    for name in ["direct", "nd", "oo"] {
        assert!(stdout.contains(name), "variant {name} missing from help");
    }
}

#[test]
fn measured_timing_fills_the_time_columns() {
    let dir = temp_dir("timing");
    let out = bin()
        .args(["run"])
        .args(TINY)
        .args(["--timing", "measured", "--out", dir.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let rows = read_csv(&dir.join("samples.csv"));
    // Solve times are nonzero once measured; the default zeros only appear
    // with timing off.
    assert!(rows.iter().any(|r| r[8] != "0.000000"), "solve_s all zero");
}

#[test]
fn unwritable_output_directory_is_a_runtime_failure() {
    let out = bin()
        .args(["run"])
        .args(TINY)
        .args(["--samples", "1", "--p", "0.0", "--out", "/proc/definitely/not/writable"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn spectrum_subcommand_reports_containment() {
    let dir = temp_dir("spec");
    let out = bin()
        .args(["spectrum", "--h", "1/32", "--H", "1/4", "--eps", "1/8"])
        .args(["--beta", "100", "--p", "0.1", "--out", dir.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("containment=true"), "{stdout}");
    assert!(dir.join("spectrum.csv").exists());
}

#[test]
fn spectrum_beyond_the_dense_guard_still_estimates_eta() {
    let dir = temp_dir("spec_big");
    let out = bin()
        .args(["spectrum", "--h", "1/128", "--H", "1/16", "--eps", "1/32"])
        .args(["--beta", "100", "--p", "0.05", "--out", dir.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("power-iteration eta only"), "{stdout}");
    assert!(stdout.contains("eta="), "{stdout}");
}
