//! Model parameters, the regime map, discrete boundary-rate tables and the
//! continuum boundary-rate functions.

use crate::error::{Error, Result};
use crate::kernel::JumpKernel;
use crate::testfn::TestFunction;

/// Microscopic model parameters. Sites live on `Λ_N = {1, .., N-1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    /// Lattice size; the bulk has N-1 sites.
    pub n: usize,
    /// Tail exponent of the jump law, γ > 2.
    pub gamma: f64,
    /// Reservoir exponent θ ∈ ℝ; the reservoir intensity is κ/N^θ.
    pub theta: f64,
    /// Reservoir strength κ ≥ 0 (κ = 0 disables the reservoirs; fluctuation
    /// experiments require κ > 0).
    pub kappa: f64,
    /// Left reservoir density.
    pub alpha: f64,
    /// Right reservoir density.
    pub beta: f64,
    /// Equilibrium density, used when α = β = ρ.
    pub rho: f64,
}

impl ModelParams {
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if self.n < 2 {
            errs.push(format!("n must be at least 2, got {}", self.n));
        }
        if !(self.gamma > 2.0) {
            return Err(Error::GammaOutOfRange(self.gamma));
        }
        if !(self.kappa >= 0.0) {
            errs.push(format!("kappa must be nonnegative, got {}", self.kappa));
        }
        for (name, v) in [("alpha", self.alpha), ("beta", self.beta), ("rho", self.rho)] {
            if !(0.0..=1.0).contains(&v) {
                errs.push(format!("{name} must lie in [0,1], got {v}"));
            }
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidParams(errs.join("; ")))
        }
    }

    /// Speed-up factor Θ(N): N² for θ ≥ 2-γ, N^{γ+θ} below.
    pub fn theta_n(&self) -> f64 {
        (self.n as f64).powf(self.theta_scale_exponent())
    }

    pub fn theta_scale_exponent(&self) -> f64 {
        if self.theta >= 2.0 - self.gamma {
            2.0
        } else {
            self.gamma + self.theta
        }
    }

    /// χ(ρ) = ρ(1-ρ).
    pub fn chi(&self) -> f64 {
        self.rho * (1.0 - self.rho)
    }
}

/// The five hydrodynamic/fluctuation regimes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegimeId {
    /// θ < 2-γ: singular reaction equation, Dirichlet data.
    ReactionDirichlet,
    /// θ = 2-γ: singular reaction-diffusion equation, Dirichlet data.
    ReactionDiffusionDirichlet,
    /// 2-γ < θ < 1: heat equation, Dirichlet data.
    HeatDirichlet,
    /// θ = 1: heat equation, Robin boundary.
    HeatRobin,
    /// θ > 1: heat equation, Neumann boundary.
    HeatNeumann,
}

/// Test-function space attached to a regime (S_θ of the martingale problem).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TestSpace {
    S,
    SDir,
    SRob,
    SNeu,
}

/// How P_t is realized for each regime.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SemigroupKind {
    Multiplier,
    SpectralReactionDiffusion,
    DirichletHeat,
    RobinHeat,
    NeumannHeat,
}

/// Macroscopic parameter bundle determined by (γ, θ).
#[derive(Debug, Clone, PartialEq)]
pub struct RegimeSpec {
    pub regime: RegimeId,
    /// Exponent e with Θ(N) = N^e.
    pub theta_scale_exponent: f64,
    pub sigma_hat: f64,
    pub kappa_hat: f64,
    pub frak_a: f64,
    pub frak_b: f64,
    pub test_space: TestSpace,
    pub semigroup: SemigroupKind,
}

/// The bullet map of the hydrodynamic limit theorem.
///
/// In the three Dirichlet regimes the PDE reads ρ(0)=α, ρ(1)=β (𝔞 = 0); the
/// theorem leaves 𝔟 unspecified there and any nonzero value encodes the same
/// boundary condition, so 𝔟 = 1 is stored.
pub fn regime_of(params: &ModelParams, kernel: &JumpKernel) -> RegimeSpec {
    let split = 2.0 - params.gamma;
    let sigma_hat = kernel.sigma2() / 2.0;
    let (regime, s_hat, k_hat, a, b, space, semigroup) = if params.theta < split {
        (
            RegimeId::ReactionDirichlet,
            0.0,
            params.kappa,
            0.0,
            1.0,
            TestSpace::S,
            SemigroupKind::Multiplier,
        )
    } else if params.theta == split {
        (
            RegimeId::ReactionDiffusionDirichlet,
            sigma_hat,
            params.kappa,
            0.0,
            1.0,
            TestSpace::S,
            SemigroupKind::SpectralReactionDiffusion,
        )
    } else if params.theta < 1.0 {
        (
            RegimeId::HeatDirichlet,
            sigma_hat,
            0.0,
            0.0,
            1.0,
            TestSpace::S,
            SemigroupKind::DirichletHeat,
        )
    } else if params.theta == 1.0 {
        (
            RegimeId::HeatRobin,
            sigma_hat,
            0.0,
            sigma_hat,
            kernel.m() * params.kappa,
            TestSpace::SRob,
            SemigroupKind::RobinHeat,
        )
    } else {
        (
            RegimeId::HeatNeumann,
            sigma_hat,
            0.0,
            1.0,
            0.0,
            TestSpace::SNeu,
            SemigroupKind::NeumannHeat,
        )
    };
    RegimeSpec {
        regime,
        theta_scale_exponent: params.theta_scale_exponent(),
        sigma_hat: s_hat,
        kappa_hat: k_hat,
        frak_a: a,
        frak_b: b,
        test_space: space,
        semigroup,
    }
}

/// Discrete reservoir rate tables over `Λ_N`.
///
/// `r_minus[x-1] = r_N^-(x/N) = Σ_{y≥x} p(y)` and mirrored `r_plus`;
/// `theta_minus[x-1] = Θ_x^- = Σ_{y≤0}(y-x)p(y-x) = -Σ_{z≥x} z p(z) < 0`.
#[derive(Debug, Clone)]
pub struct BoundaryRateTables {
    pub n: usize,
    pub r_minus: Vec<f64>,
    pub r_plus: Vec<f64>,
    pub theta_minus: Vec<f64>,
    pub theta_plus: Vec<f64>,
}

pub fn boundary_tables(kernel: &JumpKernel, n: usize) -> Result<BoundaryRateTables> {
    if n < 2 {
        return Err(Error::InvalidParams(format!("n must be >= 2, got {n}")));
    }
    let sites = n - 1;
    let mut r_minus = Vec::with_capacity(sites);
    let mut theta_minus = Vec::with_capacity(sites);
    for x in 1..n {
        r_minus.push(kernel.tail(x as u64));
        theta_minus.push(-kernel.moment_tail(x as u64));
    }
    let r_plus: Vec<f64> = (1..n).map(|x| kernel.tail((n - x) as u64)).collect();
    let theta_plus: Vec<f64> = (1..n).map(|x| kernel.moment_tail((n - x) as u64)).collect();
    Ok(BoundaryRateTables {
        n,
        r_minus,
        r_plus,
        theta_minus,
        theta_plus,
    })
}

impl BoundaryRateTables {
    /// `r_N^-(x/N)` for `x ∈ Λ_N`.
    pub fn r_minus(&self, x: usize) -> f64 {
        self.r_minus[x - 1]
    }

    pub fn r_plus(&self, x: usize) -> f64 {
        self.r_plus[x - 1]
    }
}

/// The continuum boundary-rate functions `r^±` and potentials `V₀, V₁` on (0,1).
#[derive(Debug, Clone)]
pub struct ContinuumProfiles {
    pub gamma: f64,
    pub c_gamma: f64,
    pub alpha: f64,
    pub beta: f64,
}

pub fn continuum_profiles(kernel: &JumpKernel, alpha: f64, beta: f64) -> ContinuumProfiles {
    ContinuumProfiles {
        gamma: kernel.gamma(),
        c_gamma: kernel.c_gamma(),
        alpha,
        beta,
    }
}

impl ContinuumProfiles {
    fn check(&self, u: f64) {
        assert!(
            u > 0.0 && u < 1.0,
            "continuum rates are singular at the boundary: u = {u}"
        );
    }

    /// `r^-(u) = c_γ γ^{-1} u^{-γ}`.
    pub fn r_minus(&self, u: f64) -> f64 {
        self.check(u);
        self.c_gamma / self.gamma * u.powf(-self.gamma)
    }

    /// `r^+(u) = c_γ γ^{-1} (1-u)^{-γ}`.
    pub fn r_plus(&self, u: f64) -> f64 {
        self.check(u);
        self.c_gamma / self.gamma * (1.0 - u).powf(-self.gamma)
    }

    /// `V₁ = r^- + r^+`.
    pub fn v1(&self, u: f64) -> f64 {
        self.r_minus(u) + self.r_plus(u)
    }

    /// `V₀ = α r^- + β r^+`.
    pub fn v0(&self, u: f64) -> f64 {
        self.alpha * self.r_minus(u) + self.beta * self.r_plus(u)
    }
}

/// `N² (K_N Ĥ)(x/N)` for `x ∈ Λ_N`, where `Ĥ` extends `H` to ℝ by the
/// function's declared extension rule.
///
/// With zero extension the lattice sum is finite and exact. With even
/// reflection the sum is truncated once the analytic tail bound guarantees a
/// per-site error below `tol` on the N²-scaled values.
pub fn apply_kn(kernel: &JumpKernel, h: &TestFunction, n: usize, tol: f64) -> Result<Vec<f64>> {
    use crate::testfn::ExtensionRule;
    let rule = h.extension_rule();
    let nn = n as f64;
    let n2 = nn * nn;
    let mut out = Vec::with_capacity(n - 1);
    match rule {
        ExtensionRule::None => Err(Error::MissingExtension),
        ExtensionRule::ZeroOutside => {
            for x in 1..n {
                // Σ_z p(z) Ĥ((x+z)/N) - H(x/N): only 0 ≤ x+z ≤ N contribute
                let mut s = 0.0;
                for y in 0..=n {
                    if y != x {
                        s += kernel.p(y as i64 - x as i64) * h.eval(y as f64 / nn);
                    }
                }
                out.push(n2 * (s - h.eval(x as f64 / nn)));
            }
            Ok(out)
        }
        ExtensionRule::EvenReflection => {
            // |error on N²K_N| ≤ N² · 2‖H‖∞ · 2T(Z+1); H bounded by its sup on [0,1]
            let sup = (0..=200)
                .map(|i| h.eval(i as f64 / 200.0).abs())
                .fold(0.0_f64, f64::max)
                .max(1e-300);
            let mut z_cut = n as u64;
            while n2 * 4.0 * sup * kernel.tail(z_cut + 1) > tol {
                z_cut *= 2;
                if z_cut > 1 << 40 {
                    return Err(Error::Resolution(
                        "tail cutoff for even reflection grew unreasonably".into(),
                    ));
                }
            }
            let reflect = |u: f64| -> f64 {
                // fold into [0,1] by even reflections at both endpoints
                let mut v = u.rem_euclid(2.0);
                if v > 1.0 {
                    v = 2.0 - v;
                }
                h.eval(v)
            };
            for x in 1..n {
                let hx = h.eval(x as f64 / nn);
                let mut s = 0.0;
                for z in 1..=z_cut as i64 {
                    s += kernel.p(z) * (reflect((x as f64 + z as f64) / nn) - hx);
                    s += kernel.p(z) * (reflect((x as f64 - z as f64) / nn) - hx);
                }
                out.push(n2 * s);
            }
            Ok(out)
        }
    }
}

/// One row of the discrete-to-continuum convergence report for `N^γ r_N^±`.
#[derive(Debug, Clone)]
pub struct TailConvergenceRow {
    pub n: usize,
    pub sup_err_minus: f64,
    pub sup_err_plus: f64,
}

/// Sup over `x ∈ [aN, bN]` of `|N^γ r_N^±(x/N) - r^±(x/N)|` for each N.
pub fn tail_convergence_report(
    kernel: &JumpKernel,
    n_list: &[usize],
    a: f64,
    b: f64,
) -> Result<Vec<TailConvergenceRow>> {
    if !(0.0 < a && a < b && b < 1.0) {
        return Err(Error::InvalidParams(format!(
            "window must satisfy 0 < a < b < 1, got a={a}, b={b}"
        )));
    }
    let prof = continuum_profiles(kernel, 0.0, 0.0);
    let mut rows = Vec::new();
    for &n in n_list {
        let tables = boundary_tables(kernel, n)?;
        let ng = (n as f64).powf(kernel.gamma());
        let lo = (a * n as f64).ceil() as usize;
        let hi = (b * n as f64).floor() as usize;
        if lo > hi || lo < 1 || hi >= n {
            return Err(Error::InvalidParams(format!(
                "window [{a},{b}] is empty on the lattice with N={n}"
            )));
        }
        let mut sup_m = 0.0_f64;
        let mut sup_p = 0.0_f64;
        for x in lo..=hi {
            let u = x as f64 / n as f64;
            sup_m = sup_m.max((ng * tables.r_minus(x) - prof.r_minus(u)).abs());
            sup_p = sup_p.max((ng * tables.r_plus(x) - prof.r_plus(u)).abs());
        }
        rows.push(TailConvergenceRow {
            n,
            sup_err_minus: sup_m,
            sup_err_plus: sup_p,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testfn;

    fn kernel3() -> JumpKernel {
        JumpKernel::build(3.0, 2000).unwrap()
    }

    fn params(gamma: f64, theta: f64) -> ModelParams {
        ModelParams {
            n: 64,
            gamma,
            theta,
            kappa: 1.0,
            alpha: 0.5,
            beta: 0.5,
            rho: 0.5,
        }
    }

    #[test]
    fn regime_bullets() {
        let k = kernel3();
        let sh = k.sigma2() / 2.0;

        let r = regime_of(&params(3.0, 0.0), &k);
        assert_eq!(r.regime, RegimeId::HeatDirichlet);
        assert_eq!(r.theta_scale_exponent, 2.0);
        assert_eq!(r.sigma_hat, sh);
        assert_eq!(r.kappa_hat, 0.0);
        assert_eq!(r.test_space, TestSpace::S);

        let r = regime_of(&params(3.0, -1.0), &k);
        assert_eq!(r.regime, RegimeId::ReactionDiffusionDirichlet);
        assert_eq!(r.theta_scale_exponent, 2.0);
        assert_eq!(r.sigma_hat, sh);
        assert_eq!(r.kappa_hat, 1.0);

        let r = regime_of(&params(3.0, -2.0), &k);
        assert_eq!(r.regime, RegimeId::ReactionDirichlet);
        assert_eq!(r.theta_scale_exponent, 1.0); // N^{γ+θ} = N
        assert_eq!(r.sigma_hat, 0.0);
        assert_eq!(r.kappa_hat, 1.0);

        let r = regime_of(&params(3.0, 1.0), &k);
        assert_eq!(r.regime, RegimeId::HeatRobin);
        assert_eq!(r.frak_a, sh);
        assert!((r.frak_b - k.m()).abs() < 1e-15);
        assert_eq!(r.test_space, TestSpace::SRob);

        let r = regime_of(&params(3.0, 2.0), &k);
        assert_eq!(r.regime, RegimeId::HeatNeumann);
        assert_eq!(r.frak_b, 0.0);
        assert_eq!(r.test_space, TestSpace::SNeu);
    }

    #[test]
    fn boundary_table_identities() {
        let k = kernel3();
        let n = 100;
        let t = boundary_tables(&k, n).unwrap();
        assert_eq!(t.r_minus(1), 0.5);
        assert_eq!(t.r_plus(n - 1), 0.5);
        // mirror identity, exact
        for x in 1..n {
            assert_eq!(t.r_plus(x), t.r_minus(n - x));
        }
        // strictly decreasing, negative theta_minus
        for x in 1..n - 1 {
            assert!(t.r_minus(x) > t.r_minus(x + 1));
        }
        for x in 1..n {
            assert!(t.theta_minus[x - 1] < 0.0);
            assert!(t.theta_plus[x - 1] > 0.0);
        }
        // direct-summation oracle at x = 50
        let direct: f64 = (50..5_000_000u64)
            .map(|y| k.c_gamma() * (y as f64).powf(-4.0))
            .sum();
        assert!((t.r_minus(50) - direct).abs() < 1e-12);
    }

    #[test]
    fn continuum_profile_identities() {
        let k = kernel3();
        let p = continuum_profiles(&k, 0.3, 0.3);
        // V₁(1/2) = 16 c₃ / 3
        assert!((p.v1(0.5) - 16.0 * k.c_gamma() / 3.0).abs() < 1e-14);
        // α = β = ρ collapses V₀ to ρ V₁
        for u in [0.1, 0.25, 0.5, 0.9] {
            assert!((p.v0(u) - 0.3 * p.v1(u)).abs() < 1e-14);
        }
        assert_eq!(p.r_minus(0.5), p.r_plus(0.5));
    }

    #[test]
    #[should_panic(expected = "singular")]
    fn profiles_reject_boundary() {
        let k = kernel3();
        continuum_profiles(&k, 0.5, 0.5).v1(0.0);
    }

    #[test]
    fn kn_on_constant_vanishes() {
        let k = kernel3();
        let h = testfn::constant(1.0);
        let out = apply_kn(&k, &h, 64, 1e-10).unwrap();
        for v in out {
            assert!(v.abs() < 1e-9);
        }
    }

    #[test]
    fn kn_on_linear_vanishes_interiorly() {
        let k = kernel3();
        let h = testfn::linear();
        let mut sups = Vec::new();
        for n in [64usize, 128, 256] {
            let out = apply_kn(&k, &h, n, 1e-10).unwrap();
            let sup = out[n / 4..3 * n / 4]
                .iter()
                .fold(0.0_f64, |a, v| a.max(v.abs()));
            sups.push(sup);
        }
        assert!(sups[1] < sups[0]);
        assert!(sups[2] < sups[1]);
    }

    #[test]
    fn kn_missing_extension_rejected() {
        let k = kernel3();
        let h = testfn::iota(0, 0.25).unwrap();
        assert!(matches!(
            apply_kn(&k, &h, 32, 1e-10),
            Err(Error::MissingExtension)
        ));
    }

    #[test]
    fn tail_convergence_window_checks() {
        let k = kernel3();
        assert!(tail_convergence_report(&k, &[100], 0.3, 0.3).is_err());
        let rows = tail_convergence_report(&k, &[100, 200, 400], 0.2, 0.8).unwrap();
        // first-order rate: doubling N roughly halves the sup error
        for w in rows.windows(2) {
            let ratio = w[0].sup_err_minus / w[1].sup_err_minus;
            assert!(ratio > 1.5 && ratio < 2.5, "ratio {ratio}");
        }
        // paper bound |N^γ r_N^- - r^-| ≤ (c_γ/N) (x/N)^{-1-γ} at u = 1/2
        let n = 100usize;
        let t = boundary_tables(&k, n).unwrap();
        let prof = continuum_profiles(&k, 0.0, 0.0);
        let lhs = ((n as f64).powi(3) * t.r_minus(n / 2) - prof.r_minus(0.5)).abs();
        let rhs = k.c_gamma() / n as f64 * 0.5f64.powf(-4.0);
        assert!(lhs <= rhs, "lhs {lhs} rhs {rhs}");
    }

    #[test]
    fn params_validation() {
        let mut p = params(3.0, 0.0);
        assert!(p.validate().is_ok());
        p.alpha = 1.5;
        assert!(p.validate().is_err());
        let mut p = params(3.0, 0.0);
        p.gamma = 1.9;
        assert!(matches!(p.validate(), Err(Error::GammaOutOfRange(_))));
    }
}
