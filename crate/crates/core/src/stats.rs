//! Estimator utilities: running moments, Wilson intervals, Kolmogorov-
//! Smirnov distances, and least-squares slope fits.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::normal_quantile;

/// Plain estimate record shared by every estimator in the crate and by the
/// harness CSV schema: (kind, params, n, reps, estimate, ci_low, ci_high,
/// seed).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateRecord {
    pub kind: String,
    pub params: String,
    pub n: u64,
    pub reps: u64,
    pub estimate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub seed: u64,
}

/// Welford accumulator for mean and standard error.
#[derive(Debug, Clone, Copy, Default)]
pub struct RunningMoments {
    count: u64,
    mean: f64,
    m2: f64,
}

impl RunningMoments {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            self.m2 / (self.count - 1) as f64
        }
    }

    pub fn stderr(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            (self.variance() / self.count as f64).sqrt()
        }
    }

    /// Two-sided normal confidence interval for the mean.
    pub fn ci(&self, confidence: f64) -> Result<(f64, f64)> {
        let z = normal_quantile(0.5 + confidence / 2.0)?;
        Ok((self.mean - z * self.stderr(), self.mean + z * self.stderr()))
    }
}

/// Wilson score interval for a binomial proportion.
pub fn wilson_interval(successes: u64, trials: u64, confidence: f64) -> Result<(f64, f64)> {
    if trials == 0 {
        return Err(Error::Domain("wilson interval needs at least one trial".into()));
    }
    if successes > trials {
        return Err(Error::Domain(format!(
            "successes {successes} exceed trials {trials}"
        )));
    }
    let z = normal_quantile(0.5 + confidence / 2.0)?;
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    // the score equation has an exact root at the boundary when the count
    // is degenerate; avoid returning 1 - epsilon there
    let lo = if successes == 0 { 0.0 } else { (center - half).max(0.0) };
    let hi = if successes == trials { 1.0 } else { (center + half).min(1.0) };
    Ok((lo, hi))
}

/// Do two confidence intervals overlap?
pub fn intervals_overlap(a: (f64, f64), b: (f64, f64)) -> bool {
    a.0 <= b.1 && b.0 <= a.1
}

/// Least-squares line fit with a standard error for the slope.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_stderr: f64,
}

/// Ordinary least squares on the given points. Requires at least three
/// points and a nonzero spread of abscissas.
pub fn fit_line(points: &[(f64, f64)]) -> Result<LineFit> {
    if points.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "line fit needs at least 3 points, got {}",
            points.len()
        )));
    }
    let n = points.len() as f64;
    let mean_x = points.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_y = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mean_x).powi(2)).sum();
    if sxx <= 0.0 {
        return Err(Error::Domain("line fit needs distinct abscissas".into()));
    }
    let sxy: f64 = points
        .iter()
        .map(|p| (p.0 - mean_x) * (p.1 - mean_y))
        .sum();
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;
    let rss: f64 = points
        .iter()
        .map(|p| (p.1 - intercept - slope * p.0).powi(2))
        .sum();
    let dof = (points.len() - 2) as f64;
    let slope_stderr = (rss / dof / sxx).sqrt();
    Ok(LineFit {
        slope,
        intercept,
        slope_stderr,
    })
}

/// Least squares on (log x, log y). Ordinates must be strictly positive.
pub fn fit_loglog_slope(points: &[(f64, f64)]) -> Result<LineFit> {
    for &(x, y) in points {
        if x <= 0.0 {
            return Err(Error::Domain(format!("log-log fit needs positive abscissa, got {x}")));
        }
        if y <= 0.0 {
            return Err(Error::Domain(format!("log-log fit needs positive ordinate, got {y}")));
        }
    }
    let logged: Vec<(f64, f64)> = points.iter().map(|&(x, y)| (x.ln(), y.ln())).collect();
    fit_line(&logged)
}

/// One-sample Kolmogorov-Smirnov distance between `samples` and the CDF
/// `cdf`. Samples need not be sorted.
pub fn ks_distance_to_cdf<F: Fn(f64) -> f64>(samples: &[f64], cdf: F) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::InsufficientData("KS distance of an empty sample".into()));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let n = sorted.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in sorted.iter().enumerate() {
        let f = cdf(x);
        let hi = (i + 1) as f64 / n - f;
        let lo = f - i as f64 / n;
        d = d.max(hi).max(lo);
    }
    Ok(d)
}

/// Two-sample Kolmogorov-Smirnov distance and asymptotic p-value.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<(f64, f64)> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InsufficientData("KS test on an empty sample".into()));
    }
    let mut xs = a.to_vec();
    let mut ys = b.to_vec();
    xs.sort_by(|p, q| p.total_cmp(q));
    ys.sort_by(|p, q| p.total_cmp(q));
    let (n, m) = (xs.len(), ys.len());
    let mut i = 0;
    let mut j = 0;
    let mut d: f64 = 0.0;
    while i < n && j < m {
        let t = xs[i].min(ys[j]);
        while i < n && xs[i] <= t {
            i += 1;
        }
        while j < m && ys[j] <= t {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    let en = ((n * m) as f64 / (n + m) as f64).sqrt();
    let p = ks_survival(en * d);
    Ok((d, p))
}

/// Kolmogorov distribution survival function Q(t) = 2 sum (-1)^{j-1} e^{-2 j^2 t^2}.
fn ks_survival(t: f64) -> f64 {
    if t <= 0.0 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for j in 1..=100 {
        let term = (-2.0 * (j as f64).powi(2) * t * t).exp();
        sum += sign * term;
        sign = -sign;
        if term < 1e-12 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Median of a sample (averaging the middle pair for even lengths).
pub fn median(samples: &[f64]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::InsufficientData("median of an empty sample".into()));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let n = sorted.len();
    Ok(if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn wilson_degenerate_counts() {
        let (lo, _) = wilson_interval(0, 50, 0.95).unwrap();
        assert_eq!(lo, 0.0);
        let (_, hi) = wilson_interval(50, 50, 0.95).unwrap();
        assert_eq!(hi, 1.0);
    }

    #[test]
    fn wilson_matches_closed_form_half() {
        let (lo, hi) = wilson_interval(50, 100, 0.95).unwrap();
        assert!((lo - 0.404).abs() < 5e-4, "lo = {lo}");
        assert!((hi - 0.596).abs() < 5e-4, "hi = {hi}");
    }

    #[test]
    fn wilson_endpoints_solve_the_score_equation() {
        // Independent oracle: the interval endpoints are the roots p of
        // (p_hat - p)^2 = z^2 p (1-p) / n, located by bisection.
        let (successes, trials) = (37u64, 200u64);
        let (lo, hi) = wilson_interval(successes, trials, 0.95).unwrap();
        let z = normal_quantile(0.975).unwrap();
        let p_hat = successes as f64 / trials as f64;
        let n = trials as f64;
        let g = |p: f64| (p_hat - p).powi(2) - z * z * p * (1.0 - p) / n;
        for (a, b, root) in [(0.0, p_hat, lo), (p_hat, 1.0, hi)] {
            let mut a = a;
            let mut b = b;
            for _ in 0..200 {
                let m = 0.5 * (a + b);
                if (g(m) > 0.0) == (g(a) > 0.0) {
                    a = m;
                } else {
                    b = m;
                }
            }
            assert!((0.5 * (a + b) - root).abs() < 1e-9);
        }
    }

    #[test]
    fn wilson_rejects_invalid_counts() {
        assert!(wilson_interval(0, 0, 0.95).is_err());
        assert!(wilson_interval(3, 2, 0.95).is_err());
    }

    #[test]
    fn fit_recovers_exact_power_law() {
        let points: Vec<(f64, f64)> = [4.0, 8.0, 16.0]
            .iter()
            .map(|&x: &f64| (x, x.powf(-2.0 / 3.0)))
            .collect();
        let fit = fit_loglog_slope(&points).unwrap();
        assert!((fit.slope + 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn fit_constant_is_flat() {
        let points = vec![(1.0, 3.5), (2.0, 3.5), (4.0, 3.5), (8.0, 3.5)];
        let fit = fit_loglog_slope(&points).unwrap();
        assert!(fit.slope.abs() < 1e-12);
    }

    #[test]
    fn fit_rejects_nonpositive_ordinates() {
        let points = vec![(1.0, 1.0), (2.0, 0.0), (3.0, 1.0)];
        assert!(fit_loglog_slope(&points).is_err());
    }

    #[test]
    fn fit_tolerates_small_noise() {
        // y = c x^{-1/alpha} (1 + 1% noise), slope within 0.02 of -1/alpha.
        let alpha = 1.5;
        let noise = [0.01, -0.008, 0.006, -0.01, 0.009, 0.002, -0.005];
        let points: Vec<(f64, f64)> = (0..7)
            .map(|i| {
                let x = 2f64.powi(i + 3);
                (x, 2.7 * x.powf(-1.0 / alpha) * (1.0 + noise[i as usize]))
            })
            .collect();
        let fit = fit_loglog_slope(&points).unwrap();
        assert!((fit.slope + 1.0 / alpha).abs() < 0.02, "slope {}", fit.slope);
    }

    #[test]
    fn ks_distance_detects_uniformity() {
        let samples: Vec<f64> = (0..1000).map(|i| (i as f64 + 0.5) / 1000.0).collect();
        let d = ks_distance_to_cdf(&samples, |x| x.clamp(0.0, 1.0)).unwrap();
        assert!(d < 1e-3);
    }

    #[test]
    fn ks_two_sample_separates_shifted_samples() {
        let a: Vec<f64> = (0..2000).map(|i| i as f64 / 2000.0).collect();
        let b: Vec<f64> = (0..2000).map(|i| i as f64 / 2000.0 + 0.2).collect();
        let (d, p) = ks_two_sample(&a, &b).unwrap();
        assert!(d > 0.15);
        assert!(p < 1e-6);
    }

    #[test]
    fn ks_two_sample_accepts_identical_samples() {
        let a: Vec<f64> = (0..500).map(|i| (i as f64).sin()).collect();
        let (d, p) = ks_two_sample(&a, &a).unwrap();
        assert_eq!(d, 0.0);
        assert!(p > 0.999);
    }

    proptest! {
        #[test]
        fn wilson_contains_the_point_estimate(s in 0u64..=400, extra in 1u64..=400) {
            let n = s + extra;
            let (lo, hi) = wilson_interval(s, n, 0.95).unwrap();
            let p = s as f64 / n as f64;
            prop_assert!(lo <= p + 1e-12 && p <= hi + 1e-12);
            prop_assert!(0.0 <= lo && hi <= 1.0 && lo <= hi);
        }

        #[test]
        fn running_moments_match_direct_formulas(xs in prop::collection::vec(-1e3f64..1e3, 2..200)) {
            let mut acc = RunningMoments::default();
            for &x in &xs {
                acc.push(x);
            }
            let n = xs.len() as f64;
            let mean = xs.iter().sum::<f64>() / n;
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
            prop_assert!((acc.mean() - mean).abs() < 1e-6);
            prop_assert!((acc.variance() - var).abs() < 1e-4 * var.max(1.0));
        }
    }
}
