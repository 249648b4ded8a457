//! Test functions on [0,1]: the four boundary spaces, the constructive
//! functions used in the uniqueness analysis (bump, ψ_{α,β}, Tanaka, cutoff,
//! boundary indicators), membership checks and inner products.
//!
//! Derivatives of the closed-form builders are computed with truncated
//! Taylor jets, so boundary residuals in [`space_check`] are exact to
//! rounding rather than finite-difference accuracy.
//!
//! Robin boundary coupling: a function H is in the Robin space when
//! `H'(0) = +(2mκ/σ²) H(0)` and `H'(1) = -(2mκ/σ²) H(1)` (and the analogous
//! identities at every even/odd derivative pair). This is the sign under
//! which the generator is dissipative and the stationary covariance balances
//! the quadratic variation exactly; the eigenmodes below reproduce the exact
//! finite-N covariance decay of the particle system.

use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::kernel::JumpKernel;
use crate::model::{ContinuumProfiles, ModelParams, TestSpace};
use crate::quad;

// ---------------------------------------------------------------------------
// Taylor jets
// ---------------------------------------------------------------------------

/// Truncated Taylor expansion: `c[k] = f^{(k)}(u0) / k!`.
#[derive(Clone, Debug)]
pub(crate) struct Jet {
    c: Vec<f64>,
}

impl Jet {
    fn constant(v: f64, ord: usize) -> Self {
        let mut c = vec![0.0; ord + 1];
        c[0] = v;
        Jet { c }
    }

    fn var(u0: f64, ord: usize) -> Self {
        let mut c = vec![0.0; ord + 1];
        c[0] = u0;
        if ord >= 1 {
            c[1] = 1.0;
        }
        Jet { c }
    }

    fn order(&self) -> usize {
        self.c.len() - 1
    }

    fn add(&self, o: &Jet) -> Jet {
        let c = self.c.iter().zip(&o.c).map(|(a, b)| a + b).collect();
        Jet { c }
    }

    fn sub(&self, o: &Jet) -> Jet {
        let c = self.c.iter().zip(&o.c).map(|(a, b)| a - b).collect();
        Jet { c }
    }

    fn scale(&self, s: f64) -> Jet {
        Jet {
            c: self.c.iter().map(|a| a * s).collect(),
        }
    }

    fn mul(&self, o: &Jet) -> Jet {
        let n = self.order();
        let mut c = vec![0.0; n + 1];
        for k in 0..=n {
            let mut s = 0.0;
            for i in 0..=k {
                s += self.c[i] * o.c[k - i];
            }
            c[k] = s;
        }
        Jet { c }
    }

    fn div(&self, o: &Jet) -> Jet {
        let n = self.order();
        let mut c = vec![0.0; n + 1];
        for k in 0..=n {
            let mut s = self.c[k];
            for i in 0..k {
                s -= c[i] * o.c[k - i];
            }
            c[k] = s / o.c[0];
        }
        Jet { c }
    }

    fn exp(&self) -> Jet {
        let n = self.order();
        let mut c = vec![0.0; n + 1];
        c[0] = self.c[0].exp();
        for k in 1..=n {
            let mut s = 0.0;
            for j in 1..=k {
                s += j as f64 * self.c[j] * c[k - j];
            }
            c[k] = s / k as f64;
        }
        Jet { c }
    }

    fn sin(&self) -> Jet {
        let n = self.order();
        let mut s = vec![0.0; n + 1];
        let mut co = vec![0.0; n + 1];
        s[0] = self.c[0].sin();
        co[0] = self.c[0].cos();
        for k in 1..=n {
            let mut as_ = 0.0;
            let mut ac = 0.0;
            for j in 1..=k {
                as_ += j as f64 * self.c[j] * co[k - j];
                ac += j as f64 * self.c[j] * s[k - j];
            }
            s[k] = as_ / k as f64;
            co[k] = -ac / k as f64;
        }
        Jet { c: s }
    }

    /// `f^{(k)}(u0)`.
    fn deriv(&self, k: usize) -> f64 {
        let mut fact = 1.0;
        for i in 1..=k {
            fact *= i as f64;
        }
        self.c[k] * fact
    }
}

// ---------------------------------------------------------------------------
// The bump function a(u) and its primitive
// ---------------------------------------------------------------------------

fn bump_raw(u: f64) -> f64 {
    if u <= 0.0 || u >= 1.0 {
        0.0
    } else {
        (-1.0 / (u * (1.0 - u))).exp()
    }
}

/// Normalizing constant `c` with `∫_0^1 c·e^{-1/(u(1-u))} du = 1`.
pub fn bump_norm_constant() -> f64 {
    static C: OnceLock<f64> = OnceLock::new();
    *C.get_or_init(|| 1.0 / quad::adaptive_simpson(&bump_raw, 0.0, 1.0, 1e-16))
}

/// `∫_0^u a(t) dt` for the normalized bump; equals 1 for u ≥ 1.
fn bump_primitive(u: f64) -> f64 {
    if u <= 0.0 {
        0.0
    } else if u >= 1.0 {
        1.0
    } else {
        bump_norm_constant() * quad::adaptive_simpson(&bump_raw, 0.0, u, 1e-14)
    }
}

/// Jet of the normalized bump `a` at `u0`. Identically zero outside (0,1).
fn bump_jet(u0: f64, ord: usize) -> Jet {
    if u0 <= 0.0 || u0 >= 1.0 {
        return Jet::constant(0.0, ord);
    }
    let u = Jet::var(u0, ord);
    let one_minus = Jet::constant(1.0, ord).sub(&u);
    let g = Jet::constant(-1.0, ord)
        .div(&u)
        .sub(&Jet::constant(1.0, ord).div(&one_minus));
    g.exp().scale(bump_norm_constant())
}

/// Jet of `φ(v) = 1 - ∫_0^v a`, defined on all of ℝ (1 left of 0, 0 right of 1).
fn phi_jet(v0: f64, ord: usize) -> Jet {
    let mut c = vec![0.0; ord + 1];
    c[0] = 1.0 - bump_primitive(v0);
    if ord >= 1 {
        let a = bump_jet(v0, ord - 1);
        for k in 1..=ord {
            c[k] = -a.c[k - 1] / k as f64;
        }
    }
    Jet { c }
}

// ---------------------------------------------------------------------------
// Test functions
// ---------------------------------------------------------------------------

/// Space claimed by a test function.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpaceTag {
    S,
    SDir,
    SRob,
    SNeu,
    /// Not a member of any smooth space; field evaluation only.
    Plumbing,
}

impl From<TestSpace> for SpaceTag {
    fn from(t: TestSpace) -> Self {
        match t {
            TestSpace::S => SpaceTag::S,
            TestSpace::SDir => SpaceTag::SDir,
            TestSpace::SRob => SpaceTag::SRob,
            TestSpace::SNeu => SpaceTag::SNeu,
        }
    }
}

/// How the function extends beyond [0,1] for lattice convolutions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExtensionRule {
    ZeroOutside,
    EvenReflection,
    None,
}

#[derive(Debug, Clone)]
enum FnKind {
    /// amp·sin(ω u + phase)
    Harmonic { amp: f64, omega: f64, phase: f64 },
    /// polynomial Σ c_i u^i
    Poly(Vec<f64>),
    /// normalized a(u)·sin(nπu)
    WindowedSine { n: usize, norm: f64 },
    /// the normalized bump a(u)
    Bump,
    /// φ(u) = 1 - ∫_0^u a
    PhiFn,
    /// ψ_{α,β}(u) = u φ(α(u-β))
    Psi { alpha: f64, beta: f64 },
    /// ψ̃_{α,β}(u) = ψ_{α,β}(1-u)
    PsiTilde { alpha: f64, beta: f64 },
    /// Tanaka function h_ε
    Tanaka { eps: f64 },
    /// cutoff Φ_ε of the approximation lemma
    CutoffPhi { eps: f64 },
    /// ι_ε at side 0 or 1
    Iota { side: u8, eps: f64 },
    Scaled { inner: Box<TestFunction>, c: f64 },
    Product { a: Box<TestFunction>, b: Box<TestFunction> },
    /// samples on the uniform grid 0..=m with finite-difference derivatives
    Grid { values: Vec<f64> },
}

/// A function on [0,1] with derivatives, tagged by the space it claims.
#[derive(Debug, Clone)]
pub struct TestFunction {
    kind: FnKind,
    space: SpaceTag,
    extension: ExtensionRule,
    max_order: usize,
}

impl TestFunction {
    pub fn space_tag(&self) -> SpaceTag {
        self.space
    }

    pub fn extension_rule(&self) -> ExtensionRule {
        self.extension
    }

    pub fn max_order(&self) -> usize {
        self.max_order
    }

    /// Interior points where the function is only piecewise smooth.
    pub fn breakpoints(&self) -> Vec<f64> {
        match &self.kind {
            FnKind::Tanaka { eps } => vec![*eps],
            FnKind::CutoffPhi { eps } => vec![*eps, 1.0 - eps],
            FnKind::Iota { side, eps } => {
                if *side == 0 {
                    vec![*eps]
                } else {
                    vec![1.0 - eps]
                }
            }
            FnKind::Psi { alpha, beta } => vec![*beta, beta + 1.0 / alpha],
            FnKind::PsiTilde { alpha, beta } => vec![1.0 - beta - 1.0 / alpha, 1.0 - beta],
            FnKind::Scaled { inner, .. } => inner.breakpoints(),
            FnKind::Product { a, b } => {
                let mut v = a.breakpoints();
                v.extend(b.breakpoints());
                v.sort_by(|x, y| x.partial_cmp(y).unwrap());
                v.dedup();
                v
            }
            _ => Vec::new(),
        }
    }

    pub fn eval(&self, u: f64) -> f64 {
        match &self.kind {
            FnKind::Harmonic { amp, omega, phase } => amp * (omega * u + phase).sin(),
            FnKind::Poly(c) => {
                let mut v = 0.0;
                for &ci in c.iter().rev() {
                    v = v * u + ci;
                }
                v
            }
            FnKind::WindowedSine { n, norm } => {
                bump_raw(u) * bump_norm_constant() * (*n as f64 * std::f64::consts::PI * u).sin()
                    / norm
            }
            FnKind::Bump => bump_raw(u) * bump_norm_constant(),
            FnKind::PhiFn => 1.0 - bump_primitive(u),
            FnKind::Psi { alpha, beta } => u * (1.0 - bump_primitive(alpha * (u - beta))),
            FnKind::PsiTilde { alpha, beta } => {
                let v = 1.0 - u;
                v * (1.0 - bump_primitive(alpha * (v - beta)))
            }
            FnKind::Tanaka { eps } => {
                if u < *eps {
                    u * u / (2.0 * eps)
                } else {
                    u - eps / 2.0
                }
            }
            FnKind::CutoffPhi { eps } => {
                if u <= *eps {
                    bump_primitive(u / eps)
                } else if u >= 1.0 - eps {
                    1.0 - bump_primitive((u - (1.0 - eps)) / eps)
                } else {
                    1.0
                }
            }
            FnKind::Iota { side, eps } => {
                let inside = if *side == 0 {
                    u > 0.0 && u <= *eps
                } else {
                    u >= 1.0 - eps && u < 1.0
                };
                if inside {
                    1.0 / eps
                } else {
                    0.0
                }
            }
            FnKind::Scaled { inner, c } => c * inner.eval(u),
            FnKind::Product { a, b } => a.eval(u) * b.eval(u),
            FnKind::Grid { values } => {
                let m = values.len() - 1;
                let x = (u * m as f64).clamp(0.0, m as f64);
                let i = (x.floor() as usize).min(m - 1);
                let t = x - i as f64;
                values[i] * (1.0 - t) + values[i + 1] * t
            }
        }
    }

    fn jet(&self, u: f64, ord: usize) -> Jet {
        match &self.kind {
            FnKind::Harmonic { amp, omega, phase } => {
                let g = Jet::var(u, ord).scale(*omega).add(&Jet::constant(*phase, ord));
                g.sin().scale(*amp)
            }
            FnKind::Poly(c) => {
                let x = Jet::var(u, ord);
                let mut v = Jet::constant(0.0, ord);
                for &ci in c.iter().rev() {
                    v = v.mul(&x).add(&Jet::constant(ci, ord));
                }
                v
            }
            FnKind::WindowedSine { n, norm } => {
                let s = Jet::var(u, ord)
                    .scale(*n as f64 * std::f64::consts::PI)
                    .sin();
                bump_jet(u, ord).mul(&s).scale(1.0 / norm)
            }
            FnKind::Bump => bump_jet(u, ord),
            FnKind::PhiFn => phi_jet(u, ord),
            FnKind::Psi { alpha, beta } => {
                // φ(α(u-β)): jet of φ at the shifted point, coefficients scaled by α^k
                let mut p = phi_jet(alpha * (u - beta), ord);
                let mut pw = 1.0;
                for k in 0..=ord {
                    p.c[k] *= pw;
                    pw *= alpha;
                }
                Jet::var(u, ord).mul(&p)
            }
            FnKind::PsiTilde { alpha, beta } => {
                let v = 1.0 - u;
                let mut p = phi_jet(alpha * (v - beta), ord);
                let mut pw = 1.0;
                for k in 0..=ord {
                    p.c[k] *= pw;
                    pw *= -alpha; // chain rule through u ↦ 1-u
                }
                let vr = Jet::constant(1.0, ord).sub(&Jet::var(u, ord));
                vr.mul(&p)
            }
            FnKind::Tanaka { eps } => {
                if u < *eps {
                    FnKind::poly_jet(&[0.0, 0.0, 1.0 / (2.0 * eps)], u, ord)
                } else {
                    FnKind::poly_jet(&[-eps / 2.0, 1.0], u, ord)
                }
            }
            FnKind::CutoffPhi { eps } => {
                if u <= *eps {
                    let mut p = phi_jet(u / eps, ord);
                    // Φ = 1 - φ(u/ε) on the left ramp
                    let mut pw = 1.0;
                    for k in 0..=ord {
                        p.c[k] *= pw;
                        pw /= eps;
                    }
                    Jet::constant(1.0, ord).sub(&p)
                } else if u >= 1.0 - eps {
                    let mut p = phi_jet((u - (1.0 - eps)) / eps, ord);
                    let mut pw = 1.0;
                    for k in 0..=ord {
                        p.c[k] *= pw;
                        pw /= eps;
                    }
                    p
                } else {
                    Jet::constant(1.0, ord)
                }
            }
            FnKind::Iota { .. } => Jet::constant(self.eval(u), ord),
            FnKind::Scaled { inner, c } => inner.jet(u, ord).scale(*c),
            FnKind::Product { a, b } => a.jet(u, ord).mul(&b.jet(u, ord)),
            FnKind::Grid { values } => {
                let m = values.len() - 1;
                let h = 1.0 / m as f64;
                let i = ((u * m as f64).round() as usize).min(m);
                let mut c = vec![0.0; ord + 1];
                c[0] = self.eval(u);
                if ord >= 1 {
                    c[1] = if i == 0 {
                        (-3.0 * values[0] + 4.0 * values[1] - values[2]) / (2.0 * h)
                    } else if i == m {
                        (3.0 * values[m] - 4.0 * values[m - 1] + values[m - 2]) / (2.0 * h)
                    } else {
                        (values[i + 1] - values[i - 1]) / (2.0 * h)
                    };
                }
                if ord >= 2 {
                    let d2 = if i == 0 {
                        (2.0 * values[0] - 5.0 * values[1] + 4.0 * values[2] - values[3]) / (h * h)
                    } else if i == m {
                        (2.0 * values[m] - 5.0 * values[m - 1] + 4.0 * values[m - 2]
                            - values[m - 3])
                            / (h * h)
                    } else {
                        (values[i + 1] - 2.0 * values[i] + values[i - 1]) / (h * h)
                    };
                    c[2] = d2 / 2.0;
                }
                Jet { c }
            }
        }
    }

    /// k-th derivative at u; `deriv(0)` is `eval`.
    pub fn deriv(&self, k: usize, u: f64) -> Result<f64> {
        if k > self.max_order {
            return Err(Error::DerivOrder {
                requested: k,
                max: self.max_order,
            });
        }
        if k == 0 {
            return Ok(self.eval(u));
        }
        Ok(self.jet(u, k).deriv(k))
    }

    /// λ·H as a new test function (same tags).
    pub fn scaled(&self, c: f64) -> TestFunction {
        TestFunction {
            kind: FnKind::Scaled {
                inner: Box::new(self.clone()),
                c,
            },
            space: self.space,
            extension: self.extension,
            max_order: self.max_order,
        }
    }

    /// Pointwise product H·G, tagged Plumbing unless both factors are smooth.
    pub fn product(&self, other: &TestFunction) -> TestFunction {
        let max_order = self.max_order.min(other.max_order);
        TestFunction {
            kind: FnKind::Product {
                a: Box::new(self.clone()),
                b: Box::new(other.clone()),
            },
            space: SpaceTag::Plumbing,
            extension: ExtensionRule::None,
            max_order,
        }
    }
}

impl FnKind {
    fn poly_jet(c: &[f64], u: f64, ord: usize) -> Jet {
        let x = Jet::var(u, ord);
        let mut v = Jet::constant(0.0, ord);
        for &ci in c.iter().rev() {
            v = v.mul(&x).add(&Jet::constant(ci, ord));
        }
        v
    }
}

// ---------------------------------------------------------------------------
// Constructors
// ---------------------------------------------------------------------------

const SMOOTH_ORDER: usize = 12;

pub fn constant(v: f64) -> TestFunction {
    TestFunction {
        kind: FnKind::Poly(vec![v]),
        space: SpaceTag::Plumbing,
        extension: ExtensionRule::EvenReflection,
        max_order: SMOOTH_ORDER,
    }
}

/// H(u) = u.
pub fn linear() -> TestFunction {
    TestFunction {
        kind: FnKind::Poly(vec![0.0, 1.0]),
        space: SpaceTag::Plumbing,
        extension: ExtensionRule::EvenReflection,
        max_order: SMOOTH_ORDER,
    }
}

/// sin(kπu), untagged plumbing harmonic.
pub fn sine(k: usize) -> TestFunction {
    TestFunction {
        kind: FnKind::Harmonic {
            amp: 1.0,
            omega: k as f64 * std::f64::consts::PI,
            phase: 0.0,
        },
        space: SpaceTag::SDir,
        extension: ExtensionRule::ZeroOutside,
        max_order: SMOOTH_ORDER,
    }
}

/// sin²(πu), zero-extended; the canonical discrete-Laplacian test profile.
pub fn sin_sq() -> TestFunction {
    let s = sine(1);
    TestFunction {
        kind: FnKind::Product {
            a: Box::new(s.clone()),
            b: Box::new(s),
        },
        space: SpaceTag::Plumbing,
        extension: ExtensionRule::ZeroOutside,
        max_order: SMOOTH_ORDER,
    }
}

/// Robin coupling constant `b = 2mκ/σ²`.
pub fn robin_coupling(params: &ModelParams, kernel: &JumpKernel) -> f64 {
    2.0 * kernel.m() * params.kappa / kernel.sigma2()
}

/// The n-th Robin eigenfrequency: the root of `ω - 2·arctan(b/ω) = (n-1)π`
/// in `((n-1)π, nπ)`. Bisection with a secant polish.
pub fn robin_root(b: f64, n: usize) -> Result<f64> {
    let pi = std::f64::consts::PI;
    let target = (n - 1) as f64 * pi;
    let f = |w: f64| w - 2.0 * (b / w).atan() - target;
    let mut lo = target + 1e-12;
    let mut hi = target + pi;
    let (flo, fhi) = (f(lo), f(hi));
    if flo > 0.0 || fhi < 0.0 {
        return Err(Error::RootBracket(format!(
            "robin root {n}: f({lo}) = {flo}, f({hi}) = {fhi}"
        )));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) <= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-15 * hi.max(1.0) {
            break;
        }
    }
    // secant polish
    let mut w = 0.5 * (lo + hi);
    for _ in 0..4 {
        let fw = f(w);
        let dfw = 1.0 + 2.0 * b / (w * w + b * b);
        w -= fw / dfw;
    }
    Ok(w)
}

/// Basis functions for each space: sines (S_Dir), cosines (S_Neu, n = 0 is
/// the constant), Robin modes (S_Rob), and a(u)-windowed sines for S.
pub fn make_basis(
    space: SpaceTag,
    n: usize,
    params: &ModelParams,
    kernel: &JumpKernel,
) -> Result<TestFunction> {
    let pi = std::f64::consts::PI;
    match space {
        SpaceTag::SDir => {
            if n < 1 {
                return Err(Error::InvalidParams("mode index must be >= 1".into()));
            }
            Ok(TestFunction {
                kind: FnKind::Harmonic {
                    amp: std::f64::consts::SQRT_2,
                    omega: n as f64 * pi,
                    phase: 0.0,
                },
                space: SpaceTag::SDir,
                extension: ExtensionRule::ZeroOutside,
                max_order: SMOOTH_ORDER,
            })
        }
        SpaceTag::SNeu => {
            if n == 0 {
                let mut f = constant(1.0);
                f.space = SpaceTag::SNeu;
                return Ok(f);
            }
            Ok(TestFunction {
                kind: FnKind::Harmonic {
                    amp: std::f64::consts::SQRT_2,
                    omega: n as f64 * pi,
                    phase: pi / 2.0, // √2 cos(nπu)
                },
                space: SpaceTag::SNeu,
                extension: ExtensionRule::EvenReflection,
                max_order: SMOOTH_ORDER,
            })
        }
        SpaceTag::SRob => {
            if n < 1 {
                return Err(Error::InvalidParams("mode index must be >= 1".into()));
            }
            let b = robin_coupling(params, kernel);
            let omega = robin_root(b, n)?;
            let phi = -(b / omega).atan();
            // ‖cos(ωu+φ)‖² = 1/2 + [sin(2(ω+φ)) - sin(2φ)]/(4ω)
            let nrm2 = 0.5 + ((2.0 * (omega + phi)).sin() - (2.0 * phi).sin()) / (4.0 * omega);
            Ok(TestFunction {
                kind: FnKind::Harmonic {
                    amp: 1.0 / nrm2.sqrt(),
                    omega,
                    phase: phi + pi / 2.0, // cos(ωu+φ) = sin(ωu+φ+π/2)
                },
                space: SpaceTag::SRob,
                extension: ExtensionRule::EvenReflection,
                max_order: SMOOTH_ORDER,
            })
        }
        SpaceTag::S => {
            if n < 1 {
                return Err(Error::InvalidParams("mode index must be >= 1".into()));
            }
            let mut raw = |u: f64| {
                let a = bump_raw(u) * bump_norm_constant();
                let s = (n as f64 * pi * u).sin();
                a * a * s * s
            };
            let nrm2 = quad::integrate_uniform(&mut raw, 0.0, 1.0, 64);
            Ok(TestFunction {
                kind: FnKind::WindowedSine {
                    n,
                    norm: nrm2.sqrt(),
                },
                space: SpaceTag::S,
                extension: ExtensionRule::ZeroOutside,
                max_order: SMOOTH_ORDER,
            })
        }
        SpaceTag::Plumbing => Err(Error::InvalidParams(
            "no basis attached to the plumbing tag".into(),
        )),
    }
}

/// The normalized bump `a(u) = c·e^{-1/(u(1-u))}` on (0,1); a ∈ S.
pub fn bump_a() -> TestFunction {
    TestFunction {
        kind: FnKind::Bump,
        space: SpaceTag::S,
        extension: ExtensionRule::ZeroOutside,
        max_order: SMOOTH_ORDER,
    }
}

/// φ(u) = 1 - ∫_0^u a(t)dt; decreasing ramp from 1 to 0.
pub fn phi() -> TestFunction {
    TestFunction {
        kind: FnKind::PhiFn,
        space: SpaceTag::Plumbing,
        extension: ExtensionRule::None,
        max_order: SMOOTH_ORDER,
    }
}

/// ψ_{α,β}(u) = u·φ(α(u-β)); equals u on [0,β], vanishes on [β+1/α, 1].
pub fn psi_ab(alpha: f64, beta: f64) -> Result<TestFunction> {
    if !(0.0 < beta && beta < 1.0) || alpha <= 1.0 / (1.0 - beta) {
        return Err(Error::InvalidParams(format!(
            "need β ∈ (0,1) and α > 1/(1-β); got α={alpha}, β={beta}"
        )));
    }
    Ok(TestFunction {
        kind: FnKind::Psi { alpha, beta },
        space: SpaceTag::SDir,
        extension: ExtensionRule::ZeroOutside,
        max_order: SMOOTH_ORDER,
    })
}

/// ψ̃_{α,β} = ψ_{α,β}(1-·), the mirror image at the right boundary.
pub fn psi_tilde(alpha: f64, beta: f64) -> Result<TestFunction> {
    psi_ab(alpha, beta).map(|f| TestFunction {
        kind: match f.kind {
            FnKind::Psi { alpha, beta } => FnKind::PsiTilde { alpha, beta },
            _ => unreachable!(),
        },
        ..f
    })
}

/// The Tanaka function h_ε: quadratic cap u²/(2ε) on [0,ε], then u - ε/2.
/// C¹ but not C²; lives in H².
pub fn tanaka(eps: f64) -> Result<TestFunction> {
    if !(0.0 < eps && eps < 0.5) {
        return Err(Error::InvalidParams(format!("need ε ∈ (0,1/2), got {eps}")));
    }
    Ok(TestFunction {
        kind: FnKind::Tanaka { eps },
        space: SpaceTag::Plumbing,
        extension: ExtensionRule::None,
        max_order: 2,
    })
}

/// The cutoff Φ_ε: smooth ramps of width ε at both ends, 1 in between; Φ_ε ∈ S.
pub fn cutoff_phi(eps: f64) -> Result<TestFunction> {
    if !(0.0 < eps && eps < 0.5) {
        return Err(Error::InvalidParams(format!("need ε ∈ (0,1/2), got {eps}")));
    }
    Ok(TestFunction {
        kind: FnKind::CutoffPhi { eps },
        space: SpaceTag::S,
        extension: ExtensionRule::ZeroOutside,
        max_order: SMOOTH_ORDER,
    })
}

/// Boundary indicator ι_ε at `side` 0 or 1, normalized to unit integral.
pub fn iota(side: u8, eps: f64) -> Result<TestFunction> {
    if !(0.0 < eps && eps <= 1.0) || side > 1 {
        return Err(Error::InvalidParams(format!(
            "need ε ∈ (0,1] and side ∈ {{0,1}}, got ε={eps}, side={side}"
        )));
    }
    Ok(TestFunction {
        kind: FnKind::Iota { side, eps },
        space: SpaceTag::Plumbing,
        extension: ExtensionRule::None,
        max_order: 0,
    })
}

/// Wraps grid samples (uniform on 0..=M) as a plumbing test function with
/// second-order finite-difference derivatives.
pub fn from_grid(values: Vec<f64>) -> Result<TestFunction> {
    if values.len() < 5 {
        return Err(Error::InvalidParams("grid needs at least 5 points".into()));
    }
    Ok(TestFunction {
        kind: FnKind::Grid { values },
        space: SpaceTag::Plumbing,
        extension: ExtensionRule::EvenReflection,
        max_order: 2,
    })
}

// ---------------------------------------------------------------------------
// Space membership
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct ConditionReport {
    pub description: String,
    pub residual: f64,
    pub pass: bool,
}

#[derive(Debug, Clone)]
pub struct SpaceCheckReport {
    pub conditions: Vec<ConditionReport>,
    pub pass: bool,
}

/// Boundary-residual report for membership of `h` in `space` up to
/// derivative order `k`. For the Robin space pass the coupling `b = 2mκ/σ²`.
pub fn space_check(
    h: &TestFunction,
    space: SpaceTag,
    k: usize,
    tol: f64,
    robin_b: Option<f64>,
) -> Result<SpaceCheckReport> {
    if k > h.max_order() {
        return Err(Error::DerivOrder {
            requested: k,
            max: h.max_order(),
        });
    }
    let mut conditions = Vec::new();
    let mut push = |desc: String, residual: f64| {
        conditions.push(ConditionReport {
            description: desc,
            pass: residual.abs() <= tol,
            residual,
        });
    };
    match space {
        SpaceTag::S => {
            for i in 0..=k {
                push(format!("H^({i})(0) = 0"), h.deriv(i, 0.0)?);
                push(format!("H^({i})(1) = 0"), h.deriv(i, 1.0)?);
            }
        }
        SpaceTag::SDir => {
            for i in (0..=k).step_by(2) {
                push(format!("H^({i})(0) = 0"), h.deriv(i, 0.0)?);
                push(format!("H^({i})(1) = 0"), h.deriv(i, 1.0)?);
            }
        }
        SpaceTag::SNeu => {
            let mut i = 1;
            while i <= k {
                push(format!("H^({i})(0) = 0"), h.deriv(i, 0.0)?);
                push(format!("H^({i})(1) = 0"), h.deriv(i, 1.0)?);
                i += 2;
            }
        }
        SpaceTag::SRob => {
            let b = robin_b.ok_or_else(|| {
                Error::InvalidParams("Robin space check needs the coupling b = 2mκ/σ²".into())
            })?;
            let mut i = 1;
            while i <= k {
                let r0 = h.deriv(i, 0.0)? - b * h.deriv(i - 1, 0.0)?;
                let r1 = h.deriv(i, 1.0)? + b * h.deriv(i - 1, 1.0)?;
                push(format!("H^({i})(0) - b·H^({})(0) = 0", i - 1), r0);
                push(format!("H^({i})(1) + b·H^({})(1) = 0", i - 1), r1);
                i += 2;
            }
        }
        SpaceTag::Plumbing => {
            return Err(Error::SpaceMismatch(
                "plumbing functions belong to no smooth space".into(),
            ))
        }
    }
    let pass = conditions.iter().all(|c| c.pass);
    Ok(SpaceCheckReport { conditions, pass })
}

// ---------------------------------------------------------------------------
// Inner products and the θ-norm
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InnerKind {
    L2,
    H1,
    L2V1,
}

/// ⟨H,G⟩ in L², H¹ (derivative inner product) or the V₁-weighted L².
///
/// The V₁-weighted integral uses a graded mesh clustering at both endpoints;
/// non-convergence under refinement is reported as divergence.
pub fn inner(
    h: &TestFunction,
    g: &TestFunction,
    kind: InnerKind,
    profiles: Option<&ContinuumProfiles>,
) -> Result<f64> {
    let mut breaks = h.breakpoints();
    breaks.extend(g.breakpoints());
    breaks.sort_by(|a, b| a.partial_cmp(b).unwrap());
    breaks.dedup();
    match kind {
        InnerKind::L2 => {
            let mut f = |u: f64| h.eval(u) * g.eval(u);
            Ok(quad::integrate_with_breaks(&mut f, 0.0, 1.0, &breaks, 32))
        }
        InnerKind::H1 => {
            let mut f = |u: f64| {
                h.jet(u, 1).deriv(1) * g.jet(u, 1).deriv(1)
            };
            Ok(quad::integrate_with_breaks(&mut f, 0.0, 1.0, &breaks, 32))
        }
        InnerKind::L2V1 => {
            let prof = profiles.ok_or_else(|| {
                Error::InvalidParams("V₁-weighted inner product needs continuum profiles".into())
            })?;
            let q = (prof.gamma / (prof.gamma - 1.0)).max(3.0);
            let mut f = |u: f64| prof.v1(u) * h.eval(u) * g.eval(u);
            let mut prev = f64::NAN;
            let mut growth_streak = 0u32;
            for level in 0..7 {
                let panels = 32usize << level;
                let val = quad::integrate_graded(&mut f, q, panels);
                if prev.is_finite() {
                    let diff = (val - prev).abs();
                    if diff <= 1e-9_f64.max(1e-12 * val.abs()) {
                        return Ok(val);
                    }
                    if val.abs() > prev.abs() * 1.01 {
                        growth_streak += 1;
                        if growth_streak >= 3 {
                            return Err(Error::DivergentIntegral(format!(
                                "V₁-weighted integral grows under refinement ({prev} -> {val}); \
                                 the integrand does not vanish fast enough at the boundary"
                            )));
                        }
                    } else {
                        growth_streak = 0;
                    }
                }
                prev = val;
            }
            Err(Error::Quadrature(format!(
                "V₁-weighted integral did not stabilize: last value {prev}"
            )))
        }
    }
}

/// ‖H‖²_θ = 2χ(ρ)σ²[ 1_{θ≥2-γ}‖∇H‖² + 1_{θ≤2-γ}(κ/σ²)∫V₁H²
///   + 1_{θ=1}(σ²/4κm)((∇H(0))²+(∇H(1))²) ];
/// both volume terms are active at θ = 2-γ.
pub fn norm_theta_sq(
    h: &TestFunction,
    params: &ModelParams,
    kernel: &JumpKernel,
) -> Result<f64> {
    if h.space_tag() == SpaceTag::Plumbing {
        return Err(Error::SpaceMismatch(
            "the θ-norm is defined on the smooth test spaces".into(),
        ));
    }
    let split = 2.0 - params.gamma;
    let s2 = kernel.sigma2();
    let mut bracket = 0.0;
    if params.theta >= split {
        bracket += inner(h, h, InnerKind::H1, None)?;
    }
    if params.theta <= split {
        let prof = crate::model::continuum_profiles(kernel, params.alpha, params.beta);
        bracket += params.kappa / s2 * inner(h, h, InnerKind::L2V1, Some(&prof))?;
    }
    if params.theta == 1.0 {
        let d0 = h.deriv(1, 0.0)?;
        let d1 = h.deriv(1, 1.0)?;
        bracket += s2 / (4.0 * params.kappa * kernel.m()) * (d0 * d0 + d1 * d1);
    }
    Ok(2.0 * params.chi() * s2 * bracket)
}
