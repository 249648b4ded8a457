//! The heavy-tailed jump kernel `p(z) = c_γ |z|^{-(γ+1)}` and its tail tables.
//!
//! All series are evaluated as compensated partial sums up to a cutoff plus a
//! closed-form Euler-Maclaurin tail, so the normalization constant `c_γ`, the
//! variance `σ²` and the first tail moment `m` carry relative errors near
//! machine precision rather than truncation error.

use crate::error::{Error, Result};

/// Compensated (Kahan) sum of `z^{-s}` for `z = 1..=cutoff`.
pub(crate) fn power_partial_sum(s: f64, cutoff: u64) -> f64 {
    let mut sum = 0.0_f64;
    let mut comp = 0.0_f64;
    // ascending order; compensation keeps the small late terms
    for z in 1..=cutoff {
        let term = (z as f64).powf(-s);
        let y = term - comp;
        let t = sum + y;
        comp = (t - sum) - y;
        sum = t;
    }
    sum
}

/// Euler-Maclaurin evaluation of `Σ_{z=from}^∞ z^{-s}`.
///
/// The truncated expansion error is `O(from^{-s-5})`; callers keep
/// `from ≥ 64`, which puts it far below 1e-15 relative for s > 2.
pub(crate) fn power_tail_sum(s: f64, from: u64) -> f64 {
    let a = from as f64;
    debug_assert!(a >= 2.0);
    let int = a.powf(1.0 - s) / (s - 1.0);
    let half = 0.5 * a.powf(-s);
    let d1 = s * a.powf(-s - 1.0) / 12.0;
    let d3 = s * (s + 1.0) * (s + 2.0) * a.powf(-s - 3.0) / 720.0;
    int + half + d1 - d3
}

/// `Σ_{z=1}^∞ z^{-s}` with the cutoff chosen so the switch to the analytic
/// tail happens deep enough for the stated precision.
pub(crate) fn power_series(s: f64, cutoff: u64) -> f64 {
    power_partial_sum(s, cutoff) + power_tail_sum(s, cutoff + 1)
}

const SERIES_CUTOFF: u64 = 200_000;

/// Normalized transition probability of the long-jump walk, with tabulated
/// values up to `z_max` and analytic handling of both tails beyond it.
///
/// Fields follow the model vocabulary: `c_gamma` is the normalizing constant
/// of `p(z) = c_γ |z|^{-(γ+1)}` (z ≠ 0), `sigma2 = Σ z² p(z)` and
/// `m = Σ_{z≥1} z p(z)`.
#[derive(Debug, Clone)]
pub struct JumpKernel {
    gamma: f64,
    c_gamma: f64,
    sigma2: f64,
    m: f64,
    z_max: usize,
    /// `p_table[z-1] = p(z)` for `1 ≤ z ≤ z_max`.
    p_table: Vec<f64>,
    /// `tail_cdf[z-1] = Σ_{y ≥ z} p(y)` for `1 ≤ z ≤ z_max + 1`.
    tail_cdf: Vec<f64>,
    /// `moment_tail[z-1] = Σ_{y ≥ z} y p(y)` for `1 ≤ z ≤ z_max + 1`.
    moment_tail: Vec<f64>,
}

impl JumpKernel {
    /// Builds the kernel for tail exponent `gamma > 2` with tables up to `z_max`.
    pub fn build(gamma: f64, z_max: usize) -> Result<Self> {
        if !(gamma > 2.0) {
            return Err(Error::GammaOutOfRange(gamma));
        }
        if z_max < 1_000 {
            return Err(Error::InvalidParams(format!(
                "z_max must be at least 1000, got {z_max}"
            )));
        }
        let s = gamma + 1.0;
        let cutoff = SERIES_CUTOFF.max(z_max as u64);
        let series_norm = power_series(s, cutoff);
        let c_gamma = 0.5 / series_norm;
        let sigma2 = 2.0 * c_gamma * power_series(gamma - 1.0, cutoff);
        let m = c_gamma * power_series(gamma, cutoff);

        let p_table: Vec<f64> = (1..=z_max)
            .map(|z| c_gamma * (z as f64).powf(-s))
            .collect();

        // Downward accumulation anchored on the analytic tail keeps every
        // entry consistent with the infinite sum.
        let anchor = c_gamma * power_tail_sum(s, z_max as u64 + 1);
        let mut tail_cdf = vec![0.0; z_max + 1];
        tail_cdf[z_max] = anchor;
        let mut acc = anchor;
        let mut comp = 0.0_f64;
        for z in (1..=z_max).rev() {
            let y = p_table[z - 1] - comp;
            let t = acc + y;
            comp = (t - acc) - y;
            acc = t;
            tail_cdf[z - 1] = acc;
        }
        debug_assert!((tail_cdf[0] - 0.5).abs() < 1e-13);
        // symmetry makes Σ_{y≥1} p(y) = 1/2 an identity; pin it
        tail_cdf[0] = 0.5;

        let m_anchor = c_gamma * power_tail_sum(gamma, z_max as u64 + 1);
        let mut moment_tail = vec![0.0; z_max + 1];
        moment_tail[z_max] = m_anchor;
        let mut acc = m_anchor;
        let mut comp = 0.0_f64;
        for z in (1..=z_max).rev() {
            let y = (z as f64) * p_table[z - 1] - comp;
            let t = acc + y;
            comp = (t - acc) - y;
            acc = t;
            moment_tail[z - 1] = acc;
        }

        Ok(Self {
            gamma,
            c_gamma,
            sigma2,
            m,
            z_max,
            p_table,
            tail_cdf,
            moment_tail,
        })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn c_gamma(&self) -> f64 {
        self.c_gamma
    }

    /// Variance `σ² = Σ_{z∈ℤ} z² p(z)`.
    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    /// First tail moment `m = Σ_{z≥1} z p(z)`.
    pub fn m(&self) -> f64 {
        self.m
    }

    pub fn z_max(&self) -> usize {
        self.z_max
    }

    /// `p(z)`; exact power law beyond the table, 0 at z = 0.
    pub fn p(&self, z: i64) -> f64 {
        let a = z.unsigned_abs() as usize;
        if a == 0 {
            0.0
        } else if a <= self.z_max {
            self.p_table[a - 1]
        } else {
            self.c_gamma * (a as f64).powf(-(self.gamma + 1.0))
        }
    }

    /// Tail sum `T(z) = Σ_{y ≥ z} p(y)` for `z ≥ 1`.
    pub fn tail(&self, z: u64) -> f64 {
        debug_assert!(z >= 1);
        if (z as usize) <= self.z_max + 1 {
            self.tail_cdf[z as usize - 1]
        } else {
            self.c_gamma * power_tail_sum(self.gamma + 1.0, z)
        }
    }

    /// First-moment tail `Σ_{y ≥ z} y p(y)` for `z ≥ 1`; equals `m` at z = 1.
    pub fn moment_tail(&self, z: u64) -> f64 {
        debug_assert!(z >= 1);
        if (z as usize) <= self.z_max + 1 {
            self.moment_tail[z as usize - 1]
        } else {
            self.c_gamma * power_tail_sum(self.gamma, z)
        }
    }

    /// Total mass represented by the table, `1 - 2 T(z_max+1)`.
    pub fn table_mass(&self) -> f64 {
        1.0 - 2.0 * self.tail_cdf[self.z_max]
    }

    /// `|Σ_z p(z) - 1|` including the analytic tails; a self-audit.
    pub fn normalization_defect(&self) -> f64 {
        let mut sum = 0.0_f64;
        let mut comp = 0.0_f64;
        for &p in self.p_table.iter().rev() {
            let y = p - comp;
            let t = sum + y;
            comp = (t - sum) - y;
            sum = t;
        }
        let total = 2.0 * (sum + self.tail_cdf[self.z_max]);
        (total - 1.0).abs()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_infinite_variance() {
        assert!(matches!(
            JumpKernel::build(2.0, 2000),
            Err(Error::GammaOutOfRange(_))
        ));
        assert!(JumpKernel::build(1.5, 2000).is_err());
    }

    #[test]
    fn rejects_small_table() {
        assert!(JumpKernel::build(3.0, 100).is_err());
    }

    #[test]
    fn gamma3_closed_forms() {
        // for γ=3 the constants have closed forms: c₃ = 45/π⁴, σ² = 15/π²
        let k = JumpKernel::build(3.0, 2000).unwrap();
        let pi = std::f64::consts::PI;
        assert!((k.c_gamma() - 45.0 / pi.powi(4)).abs() < 1e-13);
        assert!((k.sigma2() - 15.0 / pi.powi(2)).abs() < 1e-12);
        // m = c₃ ζ(3)
        let zeta3 = 1.202_056_903_159_594_2;
        assert!((k.m() - k.c_gamma() * zeta3).abs() < 1e-12);
    }

    #[test]
    fn normalization_and_symmetry() {
        for gamma in [2.5, 3.0, 4.0] {
            let k = JumpKernel::build(gamma, 5000).unwrap();
            assert!(k.normalization_defect() < 1e-12, "gamma={gamma}");
            assert_eq!(k.p(7), k.p(-7));
            assert_eq!(k.p(0), 0.0);
            assert_eq!(k.tail(1), 0.5);
        }
    }

    #[test]
    fn tail_tables_match_analytic_beyond_table() {
        let k = JumpKernel::build(2.7, 1000).unwrap();
        // continuity across the table boundary
        let t_in = k.tail(1001);
        let t_out = k.tail(1002) + k.p(1001);
        assert!((t_in - t_out).abs() < 1e-18);
        // tail_cdf non-increasing
        for z in 1..1000 {
            assert!(k.tail(z) >= k.tail(z + 1));
        }
    }

    #[test]
    fn moment_tail_at_one_is_m() {
        let k = JumpKernel::build(3.5, 1500).unwrap();
        assert!((k.moment_tail(1) - k.m()).abs() < 1e-14);
    }
}
