//! The Robin boundary coupling carries a sign choice. The covariance of the
//! stationary field evolves exactly by the (N-1)×(N-1) drift matrix
//! `B = Θ(N)[𝓛_N - κN^{-θ}(r_N^- + r_N^+)·diag]`, since the drift is linear
//! in the configuration:
//!     E[Y_t(H) Y_0(H)] = χ(ρ)(N-1)^{-1} ⟨e^{tB}h, h⟩.
//! At θ = 1 this exact decay singles out the convention
//! `H'(0) = +(2mκ/σ²)H(0)`, `H'(1) = -(2mκ/σ²)H(1)` implemented by
//! `robin_root`/`make_basis`: the corresponding mode decays at exactly
//! `σ̂ω₁²`, while the opposite-sign mode family misses by a wide margin.

use fluctuon_core::kernel::JumpKernel;
use fluctuon_core::model::{boundary_tables, ModelParams};
use fluctuon_core::testfn;

fn drift_matrix(params: &ModelParams, kernel: &JumpKernel) -> Vec<Vec<f64>> {
    let n = params.n;
    let tables = boundary_tables(kernel, n).unwrap();
    let theta_n = params.theta_n();
    let resv = params.kappa * (n as f64).powf(-params.theta);
    let sites = n - 1;
    let mut b = vec![vec![0.0; sites]; sites];
    for x in 1..n {
        let mut total = 0.0;
        for y in 1..n {
            if y != x {
                let p = kernel.p(y as i64 - x as i64);
                b[x - 1][y - 1] += theta_n * p;
                total += p;
            }
        }
        b[x - 1][x - 1] -= theta_n * (total + resv * (tables.r_minus(x) + tables.r_plus(x)));
    }
    b
}

/// ⟨e^{tB}h, h⟩ / ⟨h, h⟩ by RK4 on v' = Bv.
fn exact_decay(b: &[Vec<f64>], h: &[f64], t: f64, dt: f64) -> f64 {
    let n = h.len();
    let matvec = |v: &[f64]| -> Vec<f64> {
        (0..n)
            .map(|i| b[i].iter().zip(v).map(|(bij, vj)| bij * vj).sum())
            .collect()
    };
    let mut v = h.to_vec();
    let steps = (t / dt).round() as usize;
    let dt = t / steps as f64;
    for _ in 0..steps {
        let k1 = matvec(&v);
        let v2: Vec<f64> = v.iter().zip(&k1).map(|(a, k)| a + 0.5 * dt * k).collect();
        let k2 = matvec(&v2);
        let v3: Vec<f64> = v.iter().zip(&k2).map(|(a, k)| a + 0.5 * dt * k).collect();
        let k3 = matvec(&v3);
        let v4: Vec<f64> = v.iter().zip(&k3).map(|(a, k)| a + dt * k).collect();
        let k4 = matvec(&v4);
        for i in 0..n {
            v[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
    let num: f64 = v.iter().zip(h).map(|(a, b)| a * b).sum();
    let den: f64 = h.iter().map(|x| x * x).sum();
    num / den
}

#[test]
fn robin_mode_decay_matches_the_exact_finite_n_covariance() {
    let n = 128usize;
    let kernel = JumpKernel::build(3.0, 2000).unwrap();
    let params = ModelParams {
        n,
        gamma: 3.0,
        theta: 1.0,
        kappa: 1.0,
        alpha: 0.5,
        beta: 0.5,
        rho: 0.5,
    };
    let b_mat = drift_matrix(&params, &kernel);
    let coupling = testfn::robin_coupling(&params, &kernel);
    let sigma_hat = kernel.sigma2() / 2.0;

    // implemented convention: ω₁ solves ω - 2·arctan(b/ω) = 0 in (0, π)
    let h_fun = testfn::make_basis(testfn::SpaceTag::SRob, 1, &params, &kernel).unwrap();
    let h: Vec<f64> = (1..n).map(|x| h_fun.eval(x as f64 / n as f64)).collect();
    let omega = testfn::robin_root(coupling, 1).unwrap();
    for t in [0.05, 0.1] {
        let exact = exact_decay(&b_mat, &h, t, 2e-5);
        let predicted = (-sigma_hat * omega * omega * t).exp();
        assert!(
            (exact - predicted).abs() < 2e-3,
            "t={t}: exact {exact} vs mode decay {predicted}"
        );
    }

    // opposite sign (as displayed in some references): ω̃ + 2·arctan(b/ω̃) = π;
    // its mode misses the exact decay by an order of magnitude more
    let f = |w: f64| w + 2.0 * (coupling / w).atan() - std::f64::consts::PI;
    let (mut lo, mut hi) = (0.1, std::f64::consts::PI);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let omega_flipped = 0.5 * (lo + hi);
    let phi_flipped = (coupling / omega_flipped).atan();
    let h_flip: Vec<f64> = (1..n)
        .map(|x| (omega_flipped * x as f64 / n as f64 + phi_flipped).cos())
        .collect();
    let t = 0.1;
    let exact = exact_decay(&b_mat, &h_flip, t, 2e-5);
    let predicted = (-sigma_hat * omega_flipped * omega_flipped * t).exp();
    assert!(
        (exact - predicted).abs() > 0.05,
        "the flipped-sign mode should not match: exact {exact} vs {predicted}"
    );
}
