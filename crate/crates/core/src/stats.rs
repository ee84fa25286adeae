//! Monte Carlo summaries: means with standard errors, variance estimates,
//! a normality test and log-log least squares.

use serde::{Deserialize, Serialize};

/// Parameters attached to an estimate for provenance.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EstimateParams {
    pub n: u32,
    pub m: usize,
    pub rho: f64,
    pub b: f64,
    pub gamma: f64,
    pub ell: Option<usize>,
    pub eps: Option<f64>,
    pub t: f64,
}

/// Point estimate with its standard error from independent samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorReport {
    pub estimate: f64,
    pub std_error: f64,
    pub n_samples: usize,
    pub params: EstimateParams,
}

impl EstimatorReport {
    pub fn from_samples(samples: &[f64], params: EstimateParams) -> Self {
        let (estimate, std_error) = mean_se(samples);
        Self { estimate, std_error, n_samples: samples.len(), params }
    }

    /// `(estimate − exact) / std_error`.
    pub fn z_score(&self, exact: f64) -> f64 {
        z_score(self.estimate, self.std_error, exact)
    }
}

pub fn z_score(estimate: f64, std_error: f64, exact: f64) -> f64 {
    if std_error > 0.0 {
        (estimate - exact) / std_error
    } else if estimate == exact {
        0.0
    } else {
        f64::INFINITY
    }
}

/// Sequential sum in slice order, so results never depend on scheduling.
pub fn ordered_sum(xs: &[f64]) -> f64 {
    xs.iter().fold(0.0, |a, b| a + b)
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    ordered_sum(xs) / xs.len() as f64
}

/// Unbiased sample variance.
pub fn sample_variance(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 2 {
        return f64::NAN;
    }
    let mu = mean(xs);
    xs.iter().map(|x| (x - mu) * (x - mu)).sum::<f64>() / (n - 1) as f64
}

/// Mean and the standard error of the mean.
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n < 2 {
        return (mean(xs), f64::NAN);
    }
    (mean(xs), (sample_variance(xs) / n as f64).sqrt())
}

/// Sample variance and its standard error, using the fourth central moment:
/// `Var(s²) ≈ (μ₄ − σ⁴ (n−3)/(n−1)) / n`.
pub fn variance_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mu = mean(xs);
    let s2 = sample_variance(xs);
    let m4 = xs.iter().map(|x| (x - mu).powi(4)).sum::<f64>() / n;
    let var_s2 = (m4 - s2 * s2 * (n - 3.0) / (n - 1.0)) / n;
    (s2, var_s2.max(0.0).sqrt())
}

/// Jarque-Bera statistic and its asymptotic p-value (χ² with 2 degrees of
/// freedom, whose survival function is `exp(−x/2)`).
pub fn jarque_bera(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mu = mean(xs);
    let m2 = xs.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / n;
    let m3 = xs.iter().map(|x| (x - mu).powi(3)).sum::<f64>() / n;
    let m4 = xs.iter().map(|x| (x - mu).powi(4)).sum::<f64>() / n;
    let skew = m3 / m2.powf(1.5);
    let kurt = m4 / (m2 * m2);
    let jb = n / 6.0 * (skew * skew + (kurt - 3.0).powi(2) / 4.0);
    (jb, (-jb / 2.0).exp())
}

/// Mean and standard error of a correlated series from `batches` contiguous batch means.
pub fn batch_means(series: &[f64], batches: usize) -> (f64, f64) {
    let size = series.len() / batches.max(1);
    if size == 0 {
        return mean_se(series);
    }
    let means: Vec<f64> = series.chunks_exact(size).take(batches).map(mean).collect();
    mean_se(&means)
}

/// Ordinary least squares of `ln y` on `ln x`: `y ≈ prefactor · x^exponent`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingFit {
    pub exponent: f64,
    pub exponent_se: f64,
    pub prefactor: f64,
    pub r_squared: f64,
    pub points: Vec<(f64, f64)>,
}

pub fn fit_power_law(points: &[(f64, f64)]) -> Option<ScalingFit> {
    if points.len() < 2 || points.iter().any(|&(x, y)| x <= 0.0 || y <= 0.0) {
        return None;
    }
    let lx: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ly: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let k = lx.len() as f64;
    let (mx, my) = (mean(&lx), mean(&ly));
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ly.iter().map(|y| (y - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = lx.iter().zip(&ly).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    let r_squared = if syy > 0.0 { 1.0 - ss_res / syy } else { 1.0 };
    let exponent_se = if k > 2.0 { (ss_res / (k - 2.0) / sxx).sqrt() } else { f64::NAN };
    Some(ScalingFit { exponent: slope, exponent_se, prefactor: intercept.exp(), r_squared, points: points.to_vec() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_distr::StandardNormal;

    #[test]
    fn mean_and_se_of_known_data() {
        let (m, se) = mean_se(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((se - (5.0f64 / 3.0 / 4.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn power_law_recovered() {
        let pts: Vec<(f64, f64)> = [32.0, 64.0, 128.0, 256.0].iter().map(|&n: &f64| (n, 3.0 * n.powf(-0.75))).collect();
        let fit = fit_power_law(&pts).unwrap();
        assert!((fit.exponent + 0.75).abs() < 1e-12);
        assert!((fit.prefactor - 3.0).abs() < 1e-10);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);
        assert!(fit_power_law(&[(1.0, -1.0), (2.0, 1.0)]).is_none());
    }

    #[test]
    fn normal_samples_pass_jarque_bera_and_uniform_fails() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let normal: Vec<f64> = (0..5000).map(|_| rng.sample(StandardNormal)).collect();
        assert!(jarque_bera(&normal).1 > 0.01);
        let uniform: Vec<f64> = (0..5000).map(|_| rng.random::<f64>()).collect();
        assert!(jarque_bera(&uniform).1 < 1e-6);
    }

    #[test]
    fn variance_se_matches_gaussian_theory() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let xs: Vec<f64> = (0..20000).map(|_| 2.0 * rng.sample::<f64, _>(StandardNormal)).collect();
        let (v, se) = variance_se(&xs);
        // for a Gaussian, Var(s²) ≈ 2σ⁴/n
        let theory = (2.0 * 16.0 / 20000.0f64).sqrt();
        assert!((se / theory - 1.0).abs() < 0.1);
        assert!((v - 4.0).abs() < 4.0 * se);
    }

    #[test]
    fn batch_means_of_iid_series() {
        let xs: Vec<f64> = (0..1000).map(|i| (i % 2) as f64).collect();
        let (m, _) = batch_means(&xs, 10);
        assert_eq!(m, 0.5);
    }
}
