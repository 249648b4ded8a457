//! End-to-end tests of the `fluctuon` binary: config validation messages,
//! run determinism, CSV schemas and the manifest.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_fluctuon")
}

fn tmp_dir(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!(
        "fluctuon-test-{tag}-{}",
        std::process::id()
    ));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path
}

fn run_args(args: &[&str]) -> Output {
    Command::new(bin()).args(args).output().unwrap()
}

fn find_run_dir(base: &Path) -> PathBuf {
    fs::read_dir(base)
        .unwrap()
        .map(|e| e.unwrap().path())
        .find(|p| p.is_dir())
        .unwrap()
}

#[test]
fn validate_rejects_bad_gamma() {
    let dir = tmp_dir("gamma");
    let cfg = write_config(
        &dir,
        "bad.conf",
        "[model]\ngamma = 1.5\n[experiment]\nid = spectral-report\n",
    );
    let out = run_args(&["validate", cfg.to_str().unwrap()]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("gamma must exceed 2"), "{err}");
}

#[test]
fn duplicate_and_unknown_keys() {
    let dir = tmp_dir("dup");
    let cfg = write_config(
        &dir,
        "dup.conf",
        "[model]\nn = 10\nn = 11\nbogus = 3\n[experiment]\nid = spectral-report\n",
    );
    let out = run_args(&["validate", cfg.to_str().unwrap()]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("lines 2 and 3"), "{err}");
    assert!(err.contains("unknown key 'model.bogus'"), "{err}");
}

#[test]
fn spectral_report_with_kappa_zero_matches_laplacian() {
    let dir = tmp_dir("spec0");
    let out_dir = dir.join("runs");
    let cfg = write_config(
        &dir,
        "spec.conf",
        &format!(
            "[model]\nn = 32\ngamma = 3\nkappa = 0\ntheta = -1\n\
             [experiment]\nid = spectral-report\n\
             [numerics]\ngrid_m = 256\nn_max = 8\n\
             [output]\ndir = {}\nseed = 3\n",
            out_dir.display()
        ),
    );
    let out = run_args(&["run", cfg.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let run = find_run_dir(&out_dir);
    let csv = fs::read_to_string(run.join("spectral.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "n,lambda_n,lap_lower_bound,u_n,u_n_lambda_pow,decay_slope"
    );
    // κ = 0 puts λ_n exactly on the discrete Laplacian parabola
    let sh = 15.0 / std::f64::consts::PI.powi(2) / 2.0;
    for (i, line) in lines.enumerate() {
        let lambda: f64 = line.split(',').nth(1).unwrap().parse().unwrap();
        let n = (i + 1) as f64;
        let exact =
            sh * 2.0 * 256.0f64.powi(2) * (1.0 - (std::f64::consts::PI * n / 256.0).cos());
        assert!((lambda - exact).abs() < 1e-7 * exact, "n={n}");
    }
    assert!(run.join("plots/spectrum.svg").exists());
    assert!(run.join("manifest.json").exists());
}

#[test]
fn runs_are_byte_identical_for_the_same_seed() {
    let dir = tmp_dir("det");
    let mk = |tag: &str| {
        let out_dir = dir.join(tag);
        let cfg = write_config(
            &dir,
            &format!("{tag}.conf"),
            &format!(
                "[model]\nn = 32\ngamma = 3\ntheta = 0\nrho = 0.5\nalpha = 0.5\nbeta = 0.5\n\
                 [experiment]\nid = cov-check\nreplicas = 6\nlags = 0, 0.04, 0.08\nhfunc = dir:1\n\
                 [numerics]\ngrid_m = 128\nn_max = 16\n\
                 [output]\ndir = {}\nseed = 11\n",
                out_dir.display()
            ),
        );
        let out = run_args(&["run", cfg.to_str().unwrap()]);
        // statistical pass/fail at R = 6 is irrelevant here; the run must complete
        assert!(
            out.status.code().map(|c| c <= 1).unwrap_or(false),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        );
        fs::read_to_string(find_run_dir(&out_dir).join("estimates.csv")).unwrap()
    };
    let a = mk("a");
    let b = mk("b");
    assert_eq!(a, b);
    assert!(a.starts_with("lag,emp,stderr,theory_paper,theory_normalized,z_score\n"));
}

#[test]
fn hydro_check_artifacts() {
    let dir = tmp_dir("hydro");
    let out_dir = dir.join("runs");
    let cfg = write_config(
        &dir,
        "hydro.conf",
        &format!(
            "[model]\nn = 64\ngamma = 3\ntheta = 0\nalpha = 0.2\nbeta = 0.8\n\
             [experiment]\nid = hydro-check\nreplicas = 20\nt_end = 0.05\nprofile = step:0.2,0.8\n\
             [numerics]\nbins = 16\n\
             [output]\ndir = {}\nseed = 5\n",
            out_dir.display()
        ),
    );
    let out = run_args(&["run", cfg.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let run = find_run_dir(&out_dir);
    let sol = fs::read_to_string(run.join("solution.csv")).unwrap();
    assert!(sol.starts_with("t,u,rho\n"));
    let bins = fs::read_to_string(run.join("bins.csv")).unwrap();
    assert!(bins.starts_with("u,emp,pde\n"));
    let snaps = fs::read_to_string(run.join("snapshots.csv")).unwrap();
    assert!(snaps.starts_with("t,x,eta\n"));
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(run.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["pass"], serde_json::Value::Bool(true));
    assert!(manifest["config_hash"].as_str().unwrap().len() == 16);

    // report subcommand summarizes the run
    let rep = run_args(&["report", run.to_str().unwrap()]);
    assert!(rep.status.success());
    let text = String::from_utf8_lossy(&rep.stdout);
    assert!(text.contains("hydro-check"), "{text}");
}

#[test]
fn boundary_window_and_qv_schemas() {
    let dir = tmp_dir("bw");
    let out_dir = dir.join("runs");
    let cfg = write_config(
        &dir,
        "bw.conf",
        &format!(
            "[model]\nn = 64\ngamma = 3\ntheta = 0\n\
             [experiment]\nid = boundary-window\nreplicas = 8\nt_end = 0.02\nwindows = 0.3, 0.15\n\
             [output]\ndir = {}\nseed = 4\n",
            out_dir.display()
        ),
    );
    let out = run_args(&["run", cfg.to_str().unwrap()]);
    assert!(
        out.status.code().map(|c| c <= 1).unwrap_or(false),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let run = find_run_dir(&out_dir);
    let csv = fs::read_to_string(run.join("windows.csv")).unwrap();
    assert!(csv.starts_with("eps,mean_sq,stderr\n"));

    let out_dir2 = dir.join("runs-qv");
    let cfg2 = write_config(
        &dir,
        "qv.conf",
        &format!(
            "[model]\nn = 32\ngamma = 3\ntheta = 0\n\
             [experiment]\nid = qv-check\nreplicas = 24\nlags = 0, 0.02, 0.04\nhfunc = dir:1\n\
             [output]\ndir = {}\nseed = 6\n",
            out_dir2.display()
        ),
    );
    let out2 = run_args(&["run", cfg2.to_str().unwrap()]);
    assert!(
        out2.status.code().map(|c| c <= 1).unwrap_or(false),
        "{}",
        String::from_utf8_lossy(&out2.stderr)
    );
    let run2 = find_run_dir(&out_dir2);
    let csv2 = fs::read_to_string(run2.join("qv.csv")).unwrap();
    assert!(csv2.starts_with(
        "t,var_mt,var_mt_se,mean_qv_gen,mean_qv_gen_se,mean_qv_paper,t_norm_theta_sq,consistency_z,mean_mt_z,linearity_z\n"
    ));
}
