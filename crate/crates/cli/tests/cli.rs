use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn csdecon(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_csdecon"))
        .arg("--out")
        .arg(out)
        .args(args)
        .env_remove("CSDECON_THREADS")
        .output()
        .expect("binary runs")
}

fn ok(out: &Path, args: &[&str]) -> Output {
    let o = csdecon(out, args);
    assert!(o.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&o.stderr));
    o
}

fn path(dir: &TempDir, name: &str) -> String {
    dir.path().join(name).display().to_string()
}

/// Phantom, PSF and measurements at 32x32 in `dir`.
fn prepare(dir: &TempDir, ratio: &str) {
    let out = dir.path();
    ok(out, &["--seed", "5", "phantom", "--kind", "shepp-logan", "--size", "32"]);
    ok(out, &["psf", "--kind", "gaussian", "--size", "7", "--variance", "2"]);
    ok(
        out,
        &[
            "--seed",
            "5",
            "acquire",
            "--trf",
            &path(dir, "phantom.pfm"),
            "--psf",
            &path(dir, "psf.pfm"),
            "--cs-ratio",
            ratio,
            "--snr-db",
            "40",
        ],
    );
}

fn listing(dir: &Path) -> Vec<String> {
    let mut names: Vec<String> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    names
}

#[test]
fn missing_measurements_is_a_validation_error_with_no_outputs() {
    let dir = TempDir::new().unwrap();
    ok(dir.path(), &["psf", "--size", "5"]);
    let before = listing(dir.path());
    let o = csdecon(
        dir.path(),
        &[
            "reconstruct",
            "--measurements",
            &path(&dir, "nope.bin"),
            "--psf",
            &path(&dir, "psf.pfm"),
            "--solver",
            "admm",
            "--p",
            "1",
            "--alpha",
            "0.1",
            "--mu",
            "1e-3",
            "--beta",
            "1",
        ],
    );
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(listing(dir.path()), before);
}

#[test]
fn bad_flags_exit_with_two() {
    let dir = TempDir::new().unwrap();
    assert_eq!(csdecon(dir.path(), &["phantom", "--size", "abc"]).status.code(), Some(2));
    assert_eq!(csdecon(dir.path(), &["phantom", "--kind", "triangle"]).status.code(), Some(2));
    assert!(listing(dir.path()).is_empty());
}

#[test]
fn acquisition_records_measurement_count_and_seeds() {
    let dir = TempDir::new().unwrap();
    let out = dir.path();
    ok(out, &["phantom", "--size", "256"]);
    ok(out, &["psf", "--size", "9"]);
    ok(
        out,
        &[
            "--seed",
            "3",
            "acquire",
            "--trf",
            &path(&dir, "phantom.pfm"),
            "--psf",
            &path(&dir, "psf.pfm"),
            "--cs-ratio",
            "0.2",
            "--snr-db",
            "40",
        ],
    );
    let params = fs::read_to_string(out.join("measurements.params")).unwrap();
    assert!(params.contains("measurements = 13107"), "{params}");
    assert!(params.contains("seed = 3"));
    assert!(params.contains("sensing_seed = "));
    let bytes = fs::read(out.join("measurements.bin")).unwrap();
    let text = String::from_utf8_lossy(&bytes[..200]);
    assert!(text.contains("length = 13107"));
    assert!(text.contains("shape = 256 256"));
}

#[test]
fn reconstruct_accepts_both_flag_sets_and_writes_all_outputs() {
    let dir = TempDir::new().unwrap();
    prepare(&dir, "0.5");
    let m = path(&dir, "measurements.bin");
    let psf = path(&dir, "psf.pfm");
    let common = ["reconstruct", "--measurements", &m, "--psf", &psf, "--max-iter", "30"];
    let lp = [
        "--solver", "admm", "--p", "1", "--alpha", "0.2", "--mu", "1e-5", "--beta", "10", "--gamma", "3e-2", "--name", "l1",
    ];
    let gtv = [
        "--solver", "admm", "--prior", "gtv", "--alpha", "0.1", "--mu", "1e-5", "--beta", "100", "--gtv-epsilon", "1e-4",
        "--cg-max-iter", "1000", "--name", "gtv",
    ];
    let seq = ["--solver", "sequential", "--p", "1", "--alpha", "0.01", "--mu", "1e-3", "--name", "seq"];
    for flags in [&lp[..], &gtv[..], &seq[..]] {
        let args: Vec<&str> = common.iter().chain(flags).copied().collect();
        ok(dir.path(), &args);
    }
    for name in ["l1", "gtv", "seq"] {
        for ext in ["pfm", "pgm", "params"] {
            assert!(dir.path().join(format!("{name}.{ext}")).exists(), "{name}.{ext}");
        }
        assert!(dir.path().join(format!("{name}_convergence.csv")).exists());
    }
    let l1 = fs::read_to_string(dir.path().join("l1.params")).unwrap();
    assert!(l1.contains("method = ADMM_L1"));
    assert!(l1.contains("gamma = 0.03"));
    assert!(fs::read_to_string(dir.path().join("gtv.params")).unwrap().contains("solver = admm_gtv"));
}

#[test]
fn truncated_measurements_are_rejected() {
    let dir = TempDir::new().unwrap();
    prepare(&dir, "0.25");
    let file = dir.path().join("measurements.bin");
    let bytes = fs::read(&file).unwrap();
    fs::write(&file, &bytes[..bytes.len() - 8]).unwrap();
    let o = csdecon(
        dir.path(),
        &[
            "reconstruct",
            "--measurements",
            &path(&dir, "measurements.bin"),
            "--psf",
            &path(&dir, "psf.pfm"),
            "--alpha",
            "0.1",
            "--mu",
            "1e-3",
            "--beta",
            "1",
        ],
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(!dir.path().join("reconstruction.pfm").exists());
}

#[test]
fn metrics_appends_rows() {
    let dir = TempDir::new().unwrap();
    prepare(&dir, "0.5");
    let truth = path(&dir, "phantom.pfm");
    ok(
        dir.path(),
        &["metrics", "--truth", &truth, "--estimate", &truth, "--experiment-id", "same", "--method", "none"],
    );
    ok(dir.path(), &["phantom", "--kind", "round_cyst", "--size", "32", "--name", "cyst"]);
    let cyst = path(&dir, "cyst.pfm");
    ok(
        dir.path(),
        &["metrics", "--truth", &cyst, "--estimate", &cyst, "--region1", "12,12,8,8", "--region2", "0,0,8,8"],
    );
    let csv = fs::read_to_string(dir.path().join("metrics.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "experiment_id,cs_ratio,method,psnr_db,ssim_x100,cnr,iterations,seconds");
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("same,,none,inf,100.00,"));
    let cnr: f64 = lines[2].split(',').nth(5).unwrap().parse().unwrap();
    assert!(cnr > 0.0);
}

#[test]
fn metrics_reject_mismatched_sizes() {
    let dir = TempDir::new().unwrap();
    prepare(&dir, "0.5");
    let o = csdecon(
        dir.path(),
        &["metrics", "--truth", &path(&dir, "phantom.pfm"), "--estimate", &path(&dir, "psf.pfm")],
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(!dir.path().join("metrics.csv").exists());
}

const GRID: &str = "\
name = tiny
phantom = shepp_logan
size = 32
psf = gaussian
psf_size = 5
psf_variance = 1
snr_db = 40
solver = admm_lp
p = 1.5
alpha = 0.01
mu = 1e-3
beta = 1
max_iter = 10
wavelet_levels = 2
";

#[test]
fn experiment_single_cell_and_rerun_from_sidecar() {
    let dir = TempDir::new().unwrap();
    let spec = dir.path().join("grid.params");
    fs::write(&spec, GRID).unwrap();
    let first = dir.path().join("first");
    ok(&first, &["experiment", spec.to_str().unwrap(), "--cs-ratios", "0.5", "--seeds", "4"]);
    let runs = fs::read_to_string(first.join("tiny/runs.csv")).unwrap();
    assert_eq!(runs.lines().count(), 2);
    let run: Vec<&str> = runs.lines().nth(1).unwrap().split(',').collect();
    let agg = fs::read_to_string(first.join("tiny/aggregate.csv")).unwrap();
    assert_eq!(agg.lines().count(), 2);
    let cell: Vec<&str> = agg.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(run[6], "ok");
    assert_eq!(cell[5], run[7], "aggregate psnr equals the single run");
    assert_eq!(cell[6], run[8]);
    assert!(first.join("tiny/table.txt").exists());

    let second = dir.path().join("second");
    ok(&second, &["experiment", first.join("tiny/runs/000.params").to_str().unwrap()]);
    let a = fs::read(first.join("tiny/runs/000.pfm")).unwrap();
    let b = fs::read(second.join("tiny/runs/000.pfm")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn experiment_rejects_empty_seed_list() {
    let dir = TempDir::new().unwrap();
    let spec = dir.path().join("grid.params");
    fs::write(&spec, GRID).unwrap();
    let o = csdecon(dir.path(), &["experiment", spec.to_str().unwrap(), "--cs-ratios", "0.5", "--seeds", ""]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!dir.path().join("tiny").exists());
}

#[test]
fn threads_fall_back_to_environment() {
    let dir = TempDir::new().unwrap();
    let spec = dir.path().join("grid.params");
    fs::write(&spec, GRID).unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_csdecon"))
        .arg("--out")
        .arg(dir.path())
        .args(["experiment", spec.to_str().unwrap(), "--cs-ratios", "0.5,0.75", "--seeds", "1"])
        .env("CSDECON_THREADS", "2")
        .output()
        .unwrap();
    assert!(o.status.success());
    assert_eq!(fs::read_to_string(dir.path().join("tiny/runs.csv")).unwrap().lines().count(), 3);
    let bad = Command::new(env!("CARGO_BIN_EXE_csdecon"))
        .args(["experiment", spec.to_str().unwrap(), "--cs-ratios", "0.5", "--seeds", "1"])
        .env("CSDECON_THREADS", "many")
        .output()
        .unwrap();
    assert_eq!(bad.status.code(), Some(2));
}
