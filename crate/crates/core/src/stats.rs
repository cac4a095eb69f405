//! Sample summaries, bootstrap errors, the Kolmogorov–Smirnov test against a
//! normal law, quantiles and least squares lines.

use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{exp, floor, normal_cdf, sqrt};
use crate::rng::{self, purpose};

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

/// Mean, variance and `lambda * variance` of a replicated statistic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SummaryStats {
    pub mean: f64,
    pub variance: f64,
    pub lambda_var: f64,
    pub stderr_mean: f64,
    /// Bootstrap standard error of `lambda_var`.
    pub stderr_lambda_var: f64,
    pub n: usize,
}

pub const BOOTSTRAP_RESAMPLES: usize = 400;

impl SummaryStats {
    /// Needs at least two values. The bootstrap draws from its own stream of
    /// `seed`.
    pub fn from_sample(xs: &[f64], lambda: f64, seed: u64) -> Result<Self> {
        Self::with_resamples(xs, lambda, BOOTSTRAP_RESAMPLES, seed)
    }

    pub fn with_resamples(xs: &[f64], lambda: f64, resamples: usize, seed: u64) -> Result<Self> {
        let n = xs.len();
        if n < 2 {
            return Err(Error::invalid("at least two values are needed"));
        }
        if xs.iter().any(|x| !x.is_finite()) {
            return Err(Error::DegenerateSample("non-finite value in sample".into()));
        }
        let m = mean(xs);
        let v = variance(xs).max(0.0);
        let mut rng = rng::stream(seed, purpose::BOOTSTRAP, 0);
        let mut boot = Vec::with_capacity(resamples);
        let mut buf = alloc::vec![0.0; n];
        for _ in 0..resamples {
            for b in buf.iter_mut() {
                *b = xs[rng.random_range(0..n)];
            }
            boot.push(lambda * variance(&buf));
        }
        let se_lv = if resamples >= 2 { sqrt(variance(&boot).max(0.0)) } else { 0.0 };
        Ok(SummaryStats {
            mean: m,
            variance: v,
            lambda_var: lambda * v,
            stderr_mean: sqrt(v / n as f64),
            stderr_lambda_var: se_lv,
            n,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KSResult {
    pub statistic: f64,
    pub p_value: f64,
    pub n: usize,
}

/// `P(K > x)` for the Kolmogorov distribution.
pub fn kolmogorov_sf(x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    if x < 1.0 {
        // the alternating series converges slowly here; use the dual form
        let mut s = 0.0;
        for k in 1..=100 {
            let a = (2 * k - 1) as f64;
            let term = exp(-a * a * PI * PI / (8.0 * x * x));
            s += term;
            if term < 1e-12 && k >= 3 {
                break;
            }
        }
        return (1.0 - sqrt(2.0 * PI) / x * s).clamp(0.0, 1.0);
    }
    let mut s = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = exp(-2.0 * kf * kf * x * x);
        s += if k % 2 == 1 { term } else { -term };
        if term < 1e-12 {
            break;
        }
    }
    (2.0 * s).clamp(0.0, 1.0)
}

/// Two-sided Kolmogorov–Smirnov test of `sample` against
/// `Normal(ref_mean, ref_sd^2)` with the asymptotic p-value.
pub fn ks_statistic(sample: &[f64], ref_mean: f64, ref_sd: f64) -> Result<KSResult> {
    if !(ref_sd > 0.0 && ref_sd.is_finite()) {
        return Err(Error::invalid("ref_sd must be positive"));
    }
    let n = sample.len();
    if n < 8 {
        return Err(Error::invalid("at least 8 values are needed"));
    }
    if sample.iter().any(|x| x.is_nan()) {
        return Err(Error::DegenerateSample("NaN in sample".into()));
    }
    let mut xs = sample.to_vec();
    xs.sort_by(f64::total_cmp);
    let nf = n as f64;
    let mut d = 0.0f64;
    for (i, x) in xs.iter().enumerate() {
        let f = normal_cdf((x - ref_mean) / ref_sd);
        d = d.max(f - i as f64 / nf).max((i + 1) as f64 / nf - f);
    }
    Ok(KSResult {
        statistic: d,
        p_value: kolmogorov_sf(sqrt(nf) * d),
        n,
    })
}

/// Empirical quantile with linear interpolation between order statistics
/// of the sorted slice.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = q.clamp(0.0, 1.0) * (n - 1) as f64;
    let k = floor(pos) as usize;
    if k + 1 >= n {
        return sorted[n - 1];
    }
    let f = pos - k as f64;
    sorted[k] + f * (sorted[k + 1] - sorted[k])
}

/// Least squares line `y = slope * x + intercept` with its coefficient of
/// determination.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

pub fn linear_fit(x: &[f64], y: &[f64]) -> Result<LinearFit> {
    if x.len() != y.len() || x.len() < 3 {
        return Err(Error::DegenerateSample("a fit needs at least three points".into()));
    }
    let (mx, my) = (mean(x), mean(y));
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let syy: f64 = y.iter().map(|b| (b - my) * (b - my)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    if sxx <= 0.0 {
        return Err(Error::DegenerateSample("abscissae are constant".into()));
    }
    let slope = sxy / sxx;
    let r_squared = if syy > 0.0 { (sxy * sxy / (sxx * syy)).clamp(0.0, 1.0) } else { 1.0 };
    Ok(LinearFit {
        slope,
        intercept: my - slope * mx,
        r_squared,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::vec::Vec;

    /// Standard normal quantile by bisection on the CDF.
    fn probit(p: f64) -> f64 {
        let (mut lo, mut hi) = (-10.0, 10.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if normal_cdf(mid) < p {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn kolmogorov_reference_values() {
        // classical critical values: P(K > 1.3581) = 0.05, P(K > 1.6276) = 0.01
        assert!((kolmogorov_sf(1.3581) - 0.05).abs() < 1e-4);
        assert!((kolmogorov_sf(1.6276) - 0.01).abs() < 1e-4);
        // both series agree where they meet
        let below = kolmogorov_sf(1.0 - 1e-12);
        let above = kolmogorov_sf(1.0);
        assert!((below - above).abs() < 1e-9);
        assert_eq!(kolmogorov_sf(0.0), 1.0);
    }

    #[test]
    fn quantile_sample_has_tiny_statistic() {
        let n = 1000;
        let xs: Vec<f64> = (1..=n).map(|i| probit((i as f64 - 0.5) / n as f64)).collect();
        let r = ks_statistic(&xs, 0.0, 1.0).unwrap();
        assert!(r.statistic < 0.01);
        assert!(r.p_value > 0.99);
    }

    #[test]
    fn constant_sample_has_large_statistic() {
        let r = ks_statistic(&[0.3; 50], 0.0, 1.0).unwrap();
        assert!(r.statistic >= 0.5);
    }

    #[test]
    fn affine_invariance() {
        let xs: Vec<f64> = (0..40).map(|i| ((i * 37) % 23) as f64 * 0.1 - 1.0).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 * x + 7.0).collect();
        let a = ks_statistic(&xs, 0.1, 0.8).unwrap();
        let b = ks_statistic(&ys, 7.3, 2.4).unwrap();
        assert!((a.statistic - b.statistic).abs() < 1e-12);
        assert!(ks_statistic(&xs, 0.0, 0.0).is_err());
    }

    #[test]
    fn summary_of_known_sample() {
        let s = SummaryStats::from_sample(&[1.0, 2.0, 3.0, 4.0], 10.0, 1).unwrap();
        assert_eq!(s.mean, 2.5);
        assert!((s.variance - 5.0 / 3.0).abs() < 1e-12);
        assert!((s.lambda_var - 50.0 / 3.0).abs() < 1e-12);
        assert!(s.stderr_lambda_var > 0.0);
        assert!(SummaryStats::from_sample(&[1.0], 1.0, 1).is_err());
    }

    #[test]
    fn line_fit_recovers_exact_line() {
        let x = [0.0, 1.0, 2.0, 3.0];
        let y = [1.0, -1.0, -3.0, -5.0];
        let f = linear_fit(&x, &y).unwrap();
        assert!((f.slope + 2.0).abs() < 1e-12 && (f.intercept - 1.0).abs() < 1e-12);
        assert!((f.r_squared - 1.0).abs() < 1e-12);
        assert_eq!(quantile_sorted(&[1.0, 2.0, 3.0], 0.5), 2.0);
        assert_eq!(quantile_sorted(&[1.0, 2.0], 0.25), 1.25);
    }
}
