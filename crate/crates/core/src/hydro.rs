//! Finite-difference solver for the hydrodynamic equation family
//! `∂_t ρ = [σ̂Δ - κ̂V₁]ρ + κ̂V₀` with the regime's boundary closure, plus
//! closed-form stationary profiles.
//!
//! Bulk scheme: Crank-Nicolson with one implicit-Euler startup step to damp
//! the stiff transient of the singular potential near the boundary grid
//! points. The pure-reaction regime (σ̂ = 0) integrates the pointwise linear
//! ODE exactly via the exponential formula instead of stepping.

use crate::error::{Error, Result};
use crate::kernel::JumpKernel;
use crate::model::{continuum_profiles, ModelParams, RegimeId, RegimeSpec};

#[derive(Debug, Clone)]
pub struct PdeSolution {
    /// full grid 0..=M
    pub grid: Vec<f64>,
    pub times: Vec<f64>,
    /// values[k][j] = ρ_{times[k]}(grid[j])
    pub values: Vec<Vec<f64>>,
    pub dt: f64,
    pub m: usize,
    /// maximum-principle audit: min(g,α,β) ≤ ρ ≤ max(g,α,β) at all outputs
    pub max_principle_ok: bool,
}

impl PdeSolution {
    /// CSV `t,u,rho`.
    pub fn csv(&self) -> String {
        let mut s = String::from("t,u,rho\n");
        for (t, row) in self.times.iter().zip(&self.values) {
            for (u, v) in self.grid.iter().zip(row) {
                s.push_str(&format!("{t:.12e},{u:.12e},{v:.17e}\n"));
            }
        }
        s
    }

    pub fn at_time(&self, t: f64) -> Option<&[f64]> {
        self.times
            .iter()
            .position(|&s| (s - t).abs() < 1e-9)
            .map(|i| self.values[i].as_slice())
    }
}

/// Thomas solve for a tridiagonal system with diagonal dominance.
fn thomas(sub: &[f64], diag: &[f64], sup: &[f64], rhs: &[f64]) -> Vec<f64> {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut x = vec![0.0; n];
    c[0] = sup[0] / diag[0];
    x[0] = rhs[0] / diag[0];
    for i in 1..n {
        let m = diag[i] - sub[i - 1] * c[i - 1];
        c[i] = if i < n - 1 { sup[i] / m } else { 0.0 };
        x[i] = (rhs[i] - sub[i - 1] * x[i - 1]) / m;
    }
    for i in (0..n - 1).rev() {
        let xi = x[i] - c[i] * x[i + 1];
        x[i] = xi;
    }
    x
}

struct Discretization {
    /// index of the first unknown in the full grid
    first: usize,
    len: usize,
    sub: Vec<f64>,
    diag: Vec<f64>,
    sup: Vec<f64>,
    /// constant source (reaction source + boundary data contributions)
    source: Vec<f64>,
}

fn build_discretization(
    regime: &RegimeSpec,
    params: &ModelParams,
    kernel: &JumpKernel,
    m: usize,
) -> Discretization {
    let h = 1.0 / m as f64;
    let h2 = h * h;
    let sh = regime.sigma_hat;
    let prof = continuum_profiles(kernel, params.alpha, params.beta);
    if regime.frak_a == 0.0 {
        // Dirichlet rows: unknowns j = 1..M-1, data folded into the source
        let len = m - 1;
        let mut diag = vec![0.0; len];
        let mut source = vec![0.0; len];
        for j in 1..m {
            let u = j as f64 / m as f64;
            diag[j - 1] = -2.0 * sh / h2 - regime.kappa_hat * prof.v1(u);
            source[j - 1] = regime.kappa_hat * prof.v0(u);
        }
        source[0] += sh / h2 * params.alpha;
        source[len - 1] += sh / h2 * params.beta;
        Discretization {
            first: 1,
            len,
            sub: vec![sh / h2; len - 1],
            diag,
            sup: vec![sh / h2; len - 1],
            source,
        }
    } else {
        // ghost-point closure: 𝔞 ∂ρ(0) = 𝔟(ρ(0)-α), 𝔞 ∂ρ(1) = 𝔟(β-ρ(1));
        // κ̂ = 0 in these regimes so V₁ never reaches the endpoints
        let len = m + 1;
        let robin = 2.0 * regime.frak_b / (regime.frak_a * h);
        let mut sub = vec![sh / h2; len - 1];
        let mut sup = vec![sh / h2; len - 1];
        let mut diag = vec![-2.0 * sh / h2; len];
        let mut source = vec![0.0; len];
        for j in 1..m {
            let u = j as f64 / m as f64;
            diag[j] -= regime.kappa_hat * prof.v1(u);
            source[j] = regime.kappa_hat * prof.v0(u);
        }
        sup[0] = 2.0 * sh / h2;
        diag[0] = -2.0 * sh / h2 - sh * robin;
        source[0] = sh * robin * params.alpha;
        sub[len - 2] = 2.0 * sh / h2;
        diag[len - 1] = -2.0 * sh / h2 - sh * robin;
        source[len - 1] = sh * robin * params.beta;
        Discretization {
            first: 0,
            len,
            sub,
            diag,
            sup,
            source,
        }
    }
}

/// Solves the regime's PDE from the initial profile `g` up to `t_end`,
/// recording the solution at `out_times` (snapped to the nearest step).
/// Accuracy requires `dt ≤ 1/M`.
pub fn solve_pde(
    regime: &RegimeSpec,
    params: &ModelParams,
    kernel: &JumpKernel,
    g: &dyn Fn(f64) -> f64,
    t_end: f64,
    m: usize,
    dt: f64,
    out_times: &[f64],
) -> Result<PdeSolution> {
    if m < 16 {
        return Err(Error::Resolution(format!("grid M = {m} too coarse")));
    }
    if t_end < 0.0 {
        return Err(Error::InvalidParams(format!("t_end = {t_end}")));
    }
    let grid: Vec<f64> = (0..=m).map(|j| j as f64 / m as f64).collect();
    for &u in &grid {
        let v = g(u);
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::InvalidParams(format!(
                "initial profile value {v} at u = {u} outside [0,1]"
            )));
        }
    }

    let mut lo_bound = params.alpha.min(params.beta);
    let mut hi_bound = params.alpha.max(params.beta);
    for &u in &grid {
        lo_bound = lo_bound.min(g(u));
        hi_bound = hi_bound.max(g(u));
    }

    // pure reaction: exact pointwise exponential relaxation toward V₀/V₁
    if regime.sigma_hat == 0.0 {
        if regime.kappa_hat == 0.0 {
            return Err(Error::InvalidParams(
                "regime has neither diffusion nor reaction".into(),
            ));
        }
        let prof = continuum_profiles(kernel, params.alpha, params.beta);
        let mut times: Vec<f64> = out_times.to_vec();
        times.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut values = Vec::with_capacity(times.len());
        for &t in &times {
            let mut row = Vec::with_capacity(m + 1);
            for (j, &u) in grid.iter().enumerate() {
                if j == 0 {
                    row.push(params.alpha);
                } else if j == m {
                    row.push(params.beta);
                } else {
                    let stat = prof.v0(u) / prof.v1(u);
                    row.push(stat + (g(u) - stat) * (-t * params.kappa * prof.v1(u)).exp());
                }
            }
            values.push(row);
        }
        let ok = check_max_principle(&values, lo_bound, hi_bound);
        return Ok(PdeSolution {
            grid,
            times,
            values,
            dt: 0.0,
            m,
            max_principle_ok: ok,
        });
    }

    if dt > 1.0 / m as f64 + 1e-12 {
        return Err(Error::InvalidParams(format!(
            "dt = {dt} exceeds the accuracy bound 1/M = {}",
            1.0 / m as f64
        )));
    }
    let n_steps = (t_end / dt).round().max(1.0) as usize;
    let dt = t_end / n_steps as f64;

    let disc = build_discretization(regime, params, kernel, m);
    let dirichlet = regime.frak_a == 0.0;

    let mut rho: Vec<f64> = (0..disc.len).map(|i| g(grid[disc.first + i])).collect();

    let full_row = |rho: &[f64]| -> Vec<f64> {
        if dirichlet {
            let mut row = Vec::with_capacity(m + 1);
            row.push(params.alpha);
            row.extend_from_slice(rho);
            row.push(params.beta);
            row
        } else {
            rho.to_vec()
        }
    };

    let mut times_sorted: Vec<f64> = out_times.to_vec();
    times_sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut times = Vec::new();
    let mut values = Vec::new();
    let mut next_out = 0usize;
    while next_out < times_sorted.len() && times_sorted[next_out] <= 1e-12 {
        times.push(0.0);
        values.push(full_row(&rho));
        next_out += 1;
    }

    let apply_a = |x: &[f64], out: &mut Vec<f64>| {
        out.clear();
        for i in 0..disc.len {
            let mut v = disc.diag[i] * x[i];
            if i > 0 {
                v += disc.sub[i - 1] * x[i - 1];
            }
            if i + 1 < disc.len {
                v += disc.sup[i] * x[i + 1];
            }
            out.push(v);
        }
    };

    let mut ax = Vec::with_capacity(disc.len);
    for step in 0..n_steps {
        let t_next = (step + 1) as f64 * dt;
        // first step implicit Euler, afterwards Crank-Nicolson
        let theta_w = if step == 0 { 1.0 } else { 0.5 };
        apply_a(&rho, &mut ax);
        let rhs: Vec<f64> = (0..disc.len)
            .map(|i| rho[i] + dt * ((1.0 - theta_w) * ax[i] + disc.source[i]))
            .collect();
        let sub: Vec<f64> = disc.sub.iter().map(|v| -dt * theta_w * v).collect();
        let sup: Vec<f64> = disc.sup.iter().map(|v| -dt * theta_w * v).collect();
        let diag: Vec<f64> = disc.diag.iter().map(|v| 1.0 - dt * theta_w * v).collect();
        rho = thomas(&sub, &diag, &sup, &rhs);
        for &v in &rho {
            if !v.is_finite() {
                return Err(Error::NonFinite(t_next));
            }
        }
        while next_out < times_sorted.len() && times_sorted[next_out] <= t_next + dt * 0.5 {
            times.push(t_next);
            values.push(full_row(&rho));
            next_out += 1;
        }
    }

    let ok = check_max_principle(&values, lo_bound, hi_bound);
    Ok(PdeSolution {
        grid,
        times,
        values,
        dt,
        m,
        max_principle_ok: ok,
    })
}

fn check_max_principle(values: &[Vec<f64>], lo: f64, hi: f64) -> bool {
    values
        .iter()
        .flatten()
        .all(|&v| v >= lo - 1e-7 && v <= hi + 1e-7)
}

/// Stationary profile ρ̄ on the grid 0..=M. The Neumann stationary state is
/// the constant carrying the conserved initial mass, supplied through
/// `neumann_mass` (defaults to ρ).
pub fn stationary_profile(
    regime: &RegimeSpec,
    params: &ModelParams,
    kernel: &JumpKernel,
    m: usize,
    neumann_mass: Option<f64>,
) -> Vec<f64> {
    let grid: Vec<f64> = (0..=m).map(|j| j as f64 / m as f64).collect();
    let prof = continuum_profiles(kernel, params.alpha, params.beta);
    match regime.regime {
        RegimeId::ReactionDirichlet => grid
            .iter()
            .enumerate()
            .map(|(j, &u)| {
                if j == 0 {
                    params.alpha
                } else if j == m {
                    params.beta
                } else {
                    prof.v0(u) / prof.v1(u)
                }
            })
            .collect(),
        RegimeId::ReactionDiffusionDirichlet => {
            // two-point boundary value problem (σ̂Δ - κV₁)ρ̄ = -κV₀
            let h2 = (m as f64) * (m as f64);
            let sh = regime.sigma_hat;
            let len = m - 1;
            let sub = vec![sh * h2; len - 1];
            let sup = vec![sh * h2; len - 1];
            let mut diag = vec![0.0; len];
            let mut rhs = vec![0.0; len];
            for j in 1..m {
                let u = j as f64 / m as f64;
                diag[j - 1] = -2.0 * sh * h2 - params.kappa * prof.v1(u);
                rhs[j - 1] = -params.kappa * prof.v0(u);
            }
            rhs[0] -= sh * h2 * params.alpha;
            rhs[len - 1] -= sh * h2 * params.beta;
            let interior = thomas(&sub, &diag, &sup, &rhs);
            let mut out = Vec::with_capacity(m + 1);
            out.push(params.alpha);
            out.extend(interior);
            out.push(params.beta);
            out
        }
        RegimeId::HeatDirichlet => grid
            .iter()
            .map(|&u| params.alpha + (params.beta - params.alpha) * u)
            .collect(),
        RegimeId::HeatRobin => {
            // affine a + bu with 𝔞b = 𝔟(a-α) and 𝔞b = 𝔟(β-a-b):
            // [[-𝔟, 𝔞], [𝔟, 𝔞+𝔟]]·[a, b] = [-𝔟α, 𝔟β]
            let (fa, fb) = (regime.frak_a, regime.frak_b);
            let det = -fb * (fa + fb) - fa * fb;
            let a = (-fb * params.alpha * (fa + fb) - fa * fb * params.beta) / det;
            let b = (-fb * fb * params.beta + fb * fb * params.alpha) / det;
            grid.iter().map(|&u| a + b * u).collect()
        }
        RegimeId::HeatNeumann => {
            let c = neumann_mass.unwrap_or(params.rho);
            vec![c; m + 1]
        }
    }
}
