//! Shared oracles for the acceptance suite.
//!
//! The series oracle is independent of the library's Euler-Maclaurin path:
//! compensated partial sums to 10^6 plus a midpoint-rule integral tail with
//! a rigorous error bound, certifying values to far below 1e-12 relative.

/// `Σ_{z≥1} z^{-s}` with a certified bound on the absolute error.
pub fn series_oracle(s: f64) -> (f64, f64) {
    let cutoff: u64 = 1_000_000;
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for z in 1..=cutoff {
        let term = (z as f64).powf(-s);
        let y = term - comp;
        let t = sum + y;
        comp = (t - sum) - y;
        sum = t;
    }
    // midpoint tail: Σ_{z>Z} z^{-s} = ∫_{Z+1/2}^∞ t^{-s} dt + err, with the
    // per-cell midpoint error ≤ s(s+1)/24·(z-1/2)^{-s-2} summing to
    // |err| ≤ s/24 · Z^{-(s+1)} (doubled for safety)
    let a = cutoff as f64 + 0.5;
    let tail = a.powf(1.0 - s) / (s - 1.0);
    let err = s / 12.0 * (cutoff as f64).powf(-(s + 1.0));
    (sum + tail, err)
}

/// Oracle values of (c_γ, σ², m).
pub fn kernel_constants_oracle(gamma: f64) -> (f64, f64, f64) {
    let (norm, _) = series_oracle(gamma + 1.0);
    let c = 0.5 / norm;
    let (s2_series, _) = series_oracle(gamma - 1.0);
    let (m_series, _) = series_oracle(gamma);
    (c, 2.0 * c * s2_series, c * m_series)
}

/// RMS of a slice.
pub fn rms(xs: &[f64]) -> f64 {
    (xs.iter().map(|x| x * x).sum::<f64>() / xs.len() as f64).sqrt()
}
