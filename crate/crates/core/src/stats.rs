//! Small statistics helpers for replica-level estimates.

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance.
pub fn sample_var(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

/// Standard error of the mean.
pub fn stderr_mean(xs: &[f64]) -> f64 {
    (sample_var(xs) / xs.len() as f64).sqrt()
}

/// Standard error of the sample variance via the fourth central moment
/// (valid without normality assumptions).
pub fn stderr_var(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let m = mean(xs);
    let m2 = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
    let m4 = xs.iter().map(|x| (x - m).powi(4)).sum::<f64>() / n;
    ((m4 - m2 * m2) / n).max(0.0).sqrt()
}

/// z-score of `observed` against `expected` under standard error `se`.
pub fn z_score(observed: f64, expected: f64, se: f64) -> f64 {
    if se == 0.0 {
        if observed == expected {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        (observed - expected) / se
    }
}

/// Least-squares slope of y against x.
pub fn lsq_slope(x: &[f64], y: &[f64]) -> f64 {
    let mx = mean(x);
    let my = mean(y);
    let num: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let den: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    num / den
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn basic_moments() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(mean(&xs), 2.5);
        assert!((sample_var(&xs) - 5.0 / 3.0).abs() < 1e-15);
        assert!((stderr_mean(&xs) - (5.0 / 12.0f64).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn slope_recovers_line() {
        let x = [1.0, 2.0, 3.0, 5.0];
        let y: Vec<f64> = x.iter().map(|v| 2.0 - 3.0 * v).collect();
        assert!((lsq_slope(&x, &y) + 3.0).abs() < 1e-12);
    }
}
