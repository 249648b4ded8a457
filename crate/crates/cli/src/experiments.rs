//! Experiment registry: deterministic end-to-end runs emitting CSVs, a JSON
//! manifest and SVG plots into a fresh run directory.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde_json::json;

use fluctuon_core::fluct::{self, EnsembleConfig};
use fluctuon_core::hydro;
use fluctuon_core::kernel::JumpKernel;
use fluctuon_core::kmc::{empirical_density, init_product, Kmc};
use fluctuon_core::model::{
    apply_kn, boundary_tables, continuum_profiles, regime_of, tail_convergence_report,
    BoundaryRateTables, RegimeSpec, SemigroupKind,
};
use fluctuon_core::spectral::{self, laplacian_slack, Semigroup};
use fluctuon_core::stats;
use fluctuon_core::testfn::{self, SpaceTag, TestFunction};

use crate::config::{ExperimentConfig, ExperimentId, HFunc};
use crate::svg::{Plot, Series, PALETTE};

/// Acceptance thresholds pinned by the experiments.
const HYDRO_L1_TOL: f64 = 0.05;
const COV_Z_TOL: f64 = 3.0;
const QV_Z_TOL: f64 = 3.0;

pub struct RunOutcome {
    pub dir: PathBuf,
    pub pass: bool,
    pub summary: serde_json::Value,
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunOutcome, String> {
    let start = Instant::now();
    let dir = fresh_run_dir(cfg)?;
    let kernel = JumpKernel::build(cfg.model.gamma, cfg.z_max).map_err(|e| e.to_string())?;
    let tables = boundary_tables(&kernel, cfg.model.n).map_err(|e| e.to_string())?;
    let regime = regime_of(&cfg.model, &kernel);

    let (pass, summary) = match cfg.id {
        ExperimentId::HydroCheck => hydro_check(cfg, &kernel, &tables, &regime, &dir)?,
        ExperimentId::CovCheck => cov_check(cfg, &kernel, &tables, &regime, &dir)?,
        ExperimentId::QvCheck => qv_check(cfg, &kernel, &tables, &dir)?,
        ExperimentId::SpectralReport => spectral_report(cfg, &kernel, &dir)?,
        ExperimentId::OperatorConvergence => operator_convergence(cfg, &kernel, &dir)?,
        ExperimentId::BoundaryWindow => boundary_window(cfg, &kernel, &tables, &dir)?,
    };

    let manifest = json!({
        "experiment": cfg.id.as_str(),
        "config": cfg.canonical(),
        "config_hash": format!("{:016x}", cfg.hash()),
        "seed": cfg.seed,
        "replicas": cfg.replicas,
        "version": env!("CARGO_PKG_VERSION"),
        "wall_clock_secs": start.elapsed().as_secs_f64(),
        "tolerances": {
            "hydro_l1": HYDRO_L1_TOL,
            "cov_z": COV_Z_TOL,
            "qv_z": QV_Z_TOL,
        },
        "pass": pass,
        "summary": summary,
    });
    fs::write(
        dir.join("manifest.json"),
        serde_json::to_string_pretty(&manifest).unwrap(),
    )
    .map_err(|e| e.to_string())?;

    Ok(RunOutcome { dir, pass, summary })
}

fn fresh_run_dir(cfg: &ExperimentConfig) -> Result<PathBuf, String> {
    let stamp = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .unwrap()
        .as_secs();
    let base = Path::new(&cfg.out_dir);
    fs::create_dir_all(base).map_err(|e| format!("cannot create {}: {e}", cfg.out_dir))?;
    let mut suffix = 0u32;
    loop {
        let name = if suffix == 0 {
            format!("{}-{}-{:08x}", cfg.id.as_str(), stamp, cfg.hash() as u32)
        } else {
            format!(
                "{}-{}-{:08x}-{}",
                cfg.id.as_str(),
                stamp,
                cfg.hash() as u32,
                suffix
            )
        };
        let dir = base.join(name);
        // run directories are never reused
        match fs::create_dir(&dir) {
            Ok(()) => {
                fs::create_dir_all(dir.join("plots")).map_err(|e| e.to_string())?;
                return Ok(dir);
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => suffix += 1,
            Err(e) => return Err(format!("cannot create run dir: {e}")),
        }
    }
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<(), String> {
    fs::write(dir.join(name), contents).map_err(|e| format!("writing {name}: {e}"))
}

fn resolve_h(
    cfg: &ExperimentConfig,
    kernel: &JumpKernel,
    regime: &RegimeSpec,
) -> Result<TestFunction, String> {
    let mk = |tag, n| testfn::make_basis(tag, n, &cfg.model, kernel).map_err(|e| e.to_string());
    match &cfg.hfunc {
        HFunc::Auto => match regime.semigroup {
            SemigroupKind::Multiplier => testfn::cutoff_phi(0.25).map_err(|e| e.to_string()),
            SemigroupKind::SpectralReactionDiffusion => mk(SpaceTag::S, 1),
            SemigroupKind::DirichletHeat => mk(SpaceTag::SDir, 1),
            SemigroupKind::RobinHeat => mk(SpaceTag::SRob, 1),
            SemigroupKind::NeumannHeat => mk(SpaceTag::SNeu, 1),
        },
        HFunc::S(n) => mk(SpaceTag::S, *n),
        HFunc::Dir(n) => mk(SpaceTag::SDir, *n),
        HFunc::Neu(n) => mk(SpaceTag::SNeu, *n),
        HFunc::Rob(n) => mk(SpaceTag::SRob, *n),
        HFunc::Phi(eps) => testfn::cutoff_phi(*eps).map_err(|e| e.to_string()),
    }
}

/// `⟨P_t H, H⟩ / ⟨H, H⟩` for the regime's semigroup at each lag.
fn theory_shape(
    cfg: &ExperimentConfig,
    kernel: &JumpKernel,
    regime: &RegimeSpec,
    h: &TestFunction,
    lags: &[f64],
) -> Result<Vec<f64>, String> {
    if regime.semigroup == SemigroupKind::Multiplier {
        let prof = continuum_profiles(kernel, cfg.model.alpha, cfg.model.beta);
        let kappa = cfg.model.kappa;
        let mut h2 = |u: f64| h.eval(u) * h.eval(u);
        let base = fluctuon_core::quad::integrate_graded(&mut h2, 3.0, 256);
        return Ok(lags
            .iter()
            .map(|&t| {
                let mut f = |u: f64| h.eval(u) * h.eval(u) * (-t * kappa * prof.v1(u)).exp();
                fluctuon_core::quad::integrate_graded(&mut f, 3.0, 256) / base
            })
            .collect());
    }
    let sg = Semigroup::from_regime(regime, &cfg.model, kernel, cfg.grid_m, cfg.n_max, None)
        .map_err(|e| e.to_string())?;
    let st0 = sg.expand(h);
    let grid = sg.grid().to_vec();
    let hv: Vec<f64> = grid.iter().map(|&u| h.eval(u)).collect();
    let dot = |vals: &[f64]| -> f64 {
        // trapezoid; interior-only grids get the uniform weight
        let n = vals.len();
        let mut s = 0.0;
        for i in 0..n {
            let w = if (grid[0] == 0.0) && (i == 0 || i == n - 1) {
                0.5
            } else {
                1.0
            };
            s += w * vals[i] * hv[i];
        }
        s
    };
    let base = dot(&sg.values_on_grid(&st0));
    lags.iter()
        .map(|&t| {
            let st = sg.evolve(&st0, t).map_err(|e| e.to_string())?;
            Ok(dot(&sg.values_on_grid(&st)) / base)
        })
        .collect()
}

// ---------------------------------------------------------------------------
// hydro-check
// ---------------------------------------------------------------------------

fn hydro_check(
    cfg: &ExperimentConfig,
    kernel: &JumpKernel,
    tables: &BoundaryRateTables,
    regime: &RegimeSpec,
    dir: &Path,
) -> Result<(bool, serde_json::Value), String> {
    let n = cfg.model.n;
    let g = cfg.profile.eval(cfg.model.rho);
    let t_end = cfg.t_end;
    let bins = cfg.bins;

    let rows: Vec<(Vec<f64>, Option<String>)> = (0..cfg.replicas)
        .into_par_iter()
        .map(|r| {
            let state = init_product(&g, n, cfg.seed + r as u64).unwrap();
            let mut sim = Kmc::new(
                &cfg.model,
                kernel,
                tables,
                state,
                cfg.seed ^ 0xD1B5_4A32_D192_ED03 ^ (r as u64),
            )
            .unwrap();
            let log = sim.run(t_end, &[t_end]).unwrap();
            let (_, binned) = empirical_density(&sim.state, n, bins);
            let snap = if r == 0 {
                Some(log.snapshots_csv())
            } else {
                None
            };
            (binned.means, snap)
        })
        .collect();

    let mut emp = vec![0.0; bins];
    for (row, _) in &rows {
        for (e, v) in emp.iter_mut().zip(row) {
            *e += v / cfg.replicas as f64;
        }
    }
    if let Some(snap) = &rows[0].1 {
        write(dir, "snapshots.csv", snap)?;
    }

    let dt = if cfg.dt > 0.0 { cfg.dt } else { 0.5 / n as f64 };
    let sol = hydro::solve_pde(
        regime,
        &cfg.model,
        kernel,
        &g,
        t_end,
        n,
        dt,
        &[t_end / 2.0, t_end],
    )
    .map_err(|e| e.to_string())?;
    write(dir, "solution.csv", &sol.csv())?;

    let row = sol.at_time(t_end).ok_or("PDE output missing t_end")?;
    let mut pde_bins = vec![0.0; bins];
    let mut counts = vec![0usize; bins];
    let mut centers = vec![0.0; bins];
    for x in 1..n {
        let k = ((x - 1) * bins) / (n - 1);
        pde_bins[k] += row[x];
        centers[k] += x as f64 / n as f64;
        counts[k] += 1;
    }
    for ((v, c), ct) in pde_bins.iter_mut().zip(centers.iter_mut()).zip(&counts) {
        *v /= *ct as f64;
        *c /= *ct as f64;
    }

    let mut bins_csv = String::from("u,emp,pde\n");
    for i in 0..bins {
        bins_csv.push_str(&format!(
            "{:.8e},{:.12e},{:.12e}\n",
            centers[i], emp[i], pde_bins[i]
        ));
    }
    write(dir, "bins.csv", &bins_csv)?;

    let l1: f64 = emp
        .iter()
        .zip(&pde_bins)
        .map(|(a, b)| (a - b).abs())
        .sum::<f64>()
        / bins as f64;
    let pass = l1 < HYDRO_L1_TOL && sol.max_principle_ok;

    let plot = Plot {
        title: format!("empirical density vs PDE at t = {t_end}"),
        x_label: "u".into(),
        y_label: "density".into(),
        series: vec![
            Series {
                label: "simulation".into(),
                x: centers.clone(),
                y: emp.clone(),
                err: vec![],
                color: PALETTE[0],
                points_only: true,
            },
            Series {
                label: "pde".into(),
                x: sol.grid.clone(),
                y: row.to_vec(),
                err: vec![],
                color: PALETTE[1],
                points_only: false,
            },
        ],
    };
    write(dir, "plots/density.svg", &plot.render())?;

    Ok((
        pass,
        json!({"l1_error": l1, "max_principle_ok": sol.max_principle_ok, "tolerance": HYDRO_L1_TOL}),
    ))
}

// ---------------------------------------------------------------------------
// cov-check
// ---------------------------------------------------------------------------

fn cov_check(
    cfg: &ExperimentConfig,
    kernel: &JumpKernel,
    tables: &BoundaryRateTables,
    regime: &RegimeSpec,
    dir: &Path,
) -> Result<(bool, serde_json::Value), String> {
    let h = resolve_h(cfg, kernel, regime)?;
    let ens = EnsembleConfig {
        params: cfg.model.clone(),
        replicas: cfg.replicas,
        base_seed: cfg.seed,
        burn_in: 0.0,
        obs_times: cfg.lags.clone(),
        record_qv: false,
        windows: vec![],
    };
    let samples = fluct::run_ensemble(&ens, kernel, tables, std::slice::from_ref(&h))
        .map_err(|e| e.to_string())?;
    let shape = theory_shape(cfg, kernel, regime, &h, &cfg.lags)?;
    let hg = testfn::inner(&h, &h, testfn::InnerKind::L2, None).map_err(|e| e.to_string())?;
    let est = fluct::estimate_covariance(
        &samples,
        0,
        0,
        &cfg.lags,
        &shape,
        hg,
        cfg.model.chi(),
    )
    .map_err(|e| e.to_string())?;
    write(dir, "estimates.csv", &est.csv())?;

    let pass = est.z_scores.iter().all(|z| z.abs() <= COV_Z_TOL);
    let plot = Plot {
        title: "lag covariance of the fluctuation field".into(),
        x_label: "lag".into(),
        y_label: "covariance".into(),
        series: vec![
            Series {
                label: "empirical".into(),
                x: est.lags.clone(),
                y: est.emp.clone(),
                err: est.stderr.clone(),
                color: PALETTE[0],
                points_only: true,
            },
            Series {
                label: "normalized theory".into(),
                x: est.lags.clone(),
                y: est.theory_normalized.clone(),
                err: vec![],
                color: PALETTE[1],
                points_only: false,
            },
            Series {
                label: "2χ⟨PH,G⟩ literal".into(),
                x: est.lags.clone(),
                y: est.theory_paper.clone(),
                err: vec![],
                color: PALETTE[2],
                points_only: false,
            },
        ],
    };
    write(dir, "plots/covariance.svg", &plot.render())?;

    Ok((
        pass,
        json!({"z_scores": est.z_scores, "emp": est.emp, "theory_normalized": est.theory_normalized}),
    ))
}

// ---------------------------------------------------------------------------
// qv-check
// ---------------------------------------------------------------------------

fn qv_check(
    cfg: &ExperimentConfig,
    kernel: &JumpKernel,
    tables: &BoundaryRateTables,
    dir: &Path,
) -> Result<(bool, serde_json::Value), String> {
    let regime = regime_of(&cfg.model, kernel);
    let h = resolve_h(cfg, kernel, &regime)?;
    let ens = EnsembleConfig {
        params: cfg.model.clone(),
        replicas: cfg.replicas,
        base_seed: cfg.seed,
        burn_in: 0.0,
        obs_times: cfg.lags.clone(),
        record_qv: true,
        windows: vec![],
    };
    let samples = fluct::run_ensemble(&ens, kernel, tables, std::slice::from_ref(&h))
        .map_err(|e| e.to_string())?;

    let norm_sq = testfn::norm_theta_sq(&h, &cfg.model, kernel).unwrap_or(f64::NAN);
    let mut csv = String::from(
        "t,var_mt,var_mt_se,mean_qv_gen,mean_qv_gen_se,mean_qv_paper,t_norm_theta_sq,consistency_z,mean_mt_z,linearity_z\n",
    );
    let mut pass = true;
    let mut rows = Vec::new();
    for &t in cfg.lags.iter().filter(|&&t| t > 0.0) {
        let half = t / 2.0;
        if !cfg.lags.iter().any(|&s| (s - half).abs() < 1e-9) {
            continue;
        }
        let q = fluct::estimate_qv(&samples, 0, t, half).map_err(|e| e.to_string())?;
        pass &= q.consistency_z.abs() <= QV_Z_TOL
            && q.linearity_z.abs() <= QV_Z_TOL
            && q.mean_mt_z.abs() <= QV_Z_TOL;
        csv.push_str(&format!(
            "{:.8e},{:.10e},{:.10e},{:.10e},{:.10e},{:.10e},{:.10e},{:.4},{:.4},{:.4}\n",
            q.t,
            q.var_mt,
            q.var_mt_se,
            q.mean_qv_gen,
            q.mean_qv_gen_se,
            q.mean_qv_paper,
            t * norm_sq,
            q.consistency_z,
            q.mean_mt_z,
            q.linearity_z
        ));
        rows.push(q);
    }
    if rows.is_empty() {
        return Err("lag grid has no (t, t/2) pairs for the quadratic variation".into());
    }
    write(dir, "qv.csv", &csv)?;

    let plot = Plot {
        title: "martingale variance vs integrated carré du champ".into(),
        x_label: "t".into(),
        y_label: "value".into(),
        series: vec![
            Series {
                label: "Var(M_t)".into(),
                x: rows.iter().map(|q| q.t).collect(),
                y: rows.iter().map(|q| q.var_mt).collect(),
                err: rows.iter().map(|q| q.var_mt_se).collect(),
                color: PALETTE[0],
                points_only: true,
            },
            Series {
                label: "E ∫Γ ds".into(),
                x: rows.iter().map(|q| q.t).collect(),
                y: rows.iter().map(|q| q.mean_qv_gen).collect(),
                err: rows.iter().map(|q| q.mean_qv_gen_se).collect(),
                color: PALETTE[1],
                points_only: true,
            },
        ],
    };
    write(dir, "plots/qv.svg", &plot.render())?;

    let zs: Vec<f64> = rows.iter().map(|q| q.consistency_z).collect();
    Ok((pass, json!({"consistency_z": zs})))
}

// ---------------------------------------------------------------------------
// spectral-report
// ---------------------------------------------------------------------------

fn spectral_report(
    cfg: &ExperimentConfig,
    kernel: &JumpKernel,
    dir: &Path,
) -> Result<(bool, serde_json::Value), String> {
    let op = spectral::discretize_a(&cfg.model, kernel, cfg.grid_m).map_err(|e| e.to_string())?;
    let basis = spectral::eigensolve(&op, cfg.n_max).map_err(|e| e.to_string())?;
    write(
        dir,
        "spectral.csv",
        &spectral::spectral_report_csv(&basis, &cfg.model, kernel),
    )?;

    let sh = kernel.sigma2() / 2.0;
    let bounds: Vec<f64> = (1..=cfg.n_max)
        .map(|n| {
            sh * (std::f64::consts::PI * n as f64).powi(2)
                * (1.0 - laplacian_slack(n, cfg.grid_m))
        })
        .collect();
    let mut pass = basis.orthonormality_defect() < 1e-8;
    for (l, b) in basis.eigenvalues.iter().zip(&bounds) {
        pass &= *l >= b - 1e-9 * b;
    }

    let xs: Vec<f64> = (1..=cfg.n_max).map(|n| n as f64).collect();
    let plot = Plot {
        title: "eigenvalues vs Laplacian lower bound".into(),
        x_label: "n".into(),
        y_label: "λ".into(),
        series: vec![
            Series {
                label: "λ_n".into(),
                x: xs.clone(),
                y: basis.eigenvalues.clone(),
                err: vec![],
                color: PALETTE[0],
                points_only: true,
            },
            Series {
                label: "(σ²/2)(πn)²(1-slack)".into(),
                x: xs,
                y: bounds,
                err: vec![],
                color: PALETTE[1],
                points_only: false,
            },
        ],
    };
    write(dir, "plots/spectrum.svg", &plot.render())?;

    Ok((
        pass,
        json!({
            "lambda_1": basis.eigenvalues.first(),
            "orthonormality_defect": basis.orthonormality_defect(),
        }),
    ))
}

// ---------------------------------------------------------------------------
// operator-convergence
// ---------------------------------------------------------------------------

fn operator_convergence(
    cfg: &ExperimentConfig,
    kernel: &JumpKernel,
    dir: &Path,
) -> Result<(bool, serde_json::Value), String> {
    let n_list: Vec<usize> = [cfg.model.n / 4, cfg.model.n / 2, cfg.model.n]
        .into_iter()
        .filter(|&n| n >= 32)
        .collect();
    if n_list.len() < 2 {
        return Err("n too small for a convergence study (need n ≥ 128)".into());
    }
    let h = testfn::sin_sq();
    let sh = kernel.sigma2() / 2.0;
    let mut csv = String::from("n,kn_sup_err,kn_interior_sup_err,tail_sup_minus,tail_sup_plus\n");
    let mut sups = Vec::new();
    let mut interiors = Vec::new();
    let tail_rows =
        tail_convergence_report(kernel, &n_list, 0.2, 0.8).map_err(|e| e.to_string())?;
    for (i, &n) in n_list.iter().enumerate() {
        let vals = apply_kn(kernel, &h, n, 1e-10).map_err(|e| e.to_string())?;
        let mut sup = 0.0f64;
        let mut interior = 0.0f64;
        for (j, v) in vals.iter().enumerate() {
            let x = j + 1;
            let u = x as f64 / n as f64;
            let target =
                sh * 2.0 * std::f64::consts::PI.powi(2) * (2.0 * std::f64::consts::PI * u).cos();
            let e = (v - target).abs();
            sup = sup.max(e);
            if x >= n / 4 && x <= 3 * n / 4 {
                interior = interior.max(e);
            }
        }
        csv.push_str(&format!(
            "{n},{sup:.10e},{interior:.10e},{:.10e},{:.10e}\n",
            tail_rows[i].sup_err_minus, tail_rows[i].sup_err_plus
        ));
        sups.push(sup);
        interiors.push(interior);
    }
    write(dir, "operator.csv", &csv)?;

    let mut pass = true;
    for w in sups.windows(2) {
        pass &= w[1] < w[0];
    }
    for w in tail_rows.windows(2) {
        pass &= w[1].sup_err_minus < w[0].sup_err_minus;
    }

    let xs: Vec<f64> = n_list.iter().map(|&n| n as f64).collect();
    let plot = Plot {
        title: "discrete-operator sup errors".into(),
        x_label: "N".into(),
        y_label: "sup error".into(),
        series: vec![
            Series {
                label: "N²K_N vs (σ²/2)ΔH".into(),
                x: xs.clone(),
                y: sups.clone(),
                err: vec![],
                color: PALETTE[0],
                points_only: false,
            },
            Series {
                label: "interior window".into(),
                x: xs.clone(),
                y: interiors,
                err: vec![],
                color: PALETTE[2],
                points_only: false,
            },
            Series {
                label: "N^γ r_N^- vs r^-".into(),
                x: xs,
                y: tail_rows.iter().map(|r| r.sup_err_minus).collect(),
                err: vec![],
                color: PALETTE[1],
                points_only: false,
            },
        ],
    };
    write(dir, "plots/operator.svg", &plot.render())?;

    Ok((pass, json!({"kn_sup": sups})))
}

// ---------------------------------------------------------------------------
// boundary-window
// ---------------------------------------------------------------------------

fn boundary_window(
    cfg: &ExperimentConfig,
    kernel: &JumpKernel,
    tables: &BoundaryRateTables,
    dir: &Path,
) -> Result<(bool, serde_json::Value), String> {
    let mut eps_sorted = cfg.windows.clone();
    eps_sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let ens = EnsembleConfig {
        params: cfg.model.clone(),
        replicas: cfg.replicas,
        base_seed: cfg.seed,
        burn_in: 0.0,
        obs_times: vec![cfg.t_end],
        record_qv: false,
        windows: eps_sorted.iter().map(|&e| (0u8, e)).collect(),
    };
    let samples = fluct::run_ensemble(&ens, kernel, tables, &[]).map_err(|e| e.to_string())?;
    let mut csv = String::from("eps,mean_sq,stderr\n");
    let mut means = Vec::new();
    let mut ses = Vec::new();
    for (w, &eps) in eps_sorted.iter().enumerate() {
        let sq: Vec<f64> = samples
            .iter()
            .map(|s| s.window_int[w][0] * s.window_int[w][0])
            .collect();
        let m = stats::mean(&sq);
        let se = stats::stderr_mean(&sq);
        csv.push_str(&format!("{eps},{m:.10e},{se:.10e}\n"));
        means.push(m);
        ses.push(se);
    }
    write(dir, "windows.csv", &csv)?;

    let mut pass = true;
    for w in means.windows(2) {
        pass &= w[1] < w[0];
    }

    let plot = Plot {
        title: format!("E[(∫₀^{} Y(ι_ε) ds)²] vs ε", cfg.t_end),
        x_label: "ε".into(),
        y_label: "mean square".into(),
        series: vec![Series {
            label: "estimate".into(),
            x: eps_sorted.clone(),
            y: means.clone(),
            err: ses.clone(),
            color: PALETTE[0],
            points_only: false,
        }],
    };
    write(dir, "plots/windows.svg", &plot.render())?;

    Ok((pass, json!({"eps": eps_sorted, "mean_sq": means})))
}
