//! Goodness-of-fit tests and running moments.

use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

/// One-sample Kolmogorov-Smirnov result.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
    pub n: usize,
}

/// Asymptotic Kolmogorov CDF complement: `P(sup > lambda)`.
fn ks_survival(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let term = (-2.0 * (k as f64).powi(2) * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-18 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// One-sample KS test of `samples` against a reference CDF.
pub fn ks_test(samples: &[f64], cdf: impl Fn(f64) -> f64) -> Result<KsResult> {
    let n = samples.len();
    if n < 50 {
        return Err(Error::invalid(format!("ks_test needs n >= 50, got {n}")));
    }
    if samples.iter().any(|x| x.is_nan()) {
        return Err(Error::invalid("ks_test: NaN in samples"));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let nf = n as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in sorted.iter().enumerate() {
        let f = cdf(x);
        if !f.is_finite() {
            return Err(Error::invalid("ks_test: non-finite CDF evaluation"));
        }
        d = d.max((f - i as f64 / nf).abs()).max(((i + 1) as f64 / nf - f).abs());
    }
    Ok(KsResult {
        statistic: d,
        p_value: ks_survival(nf.sqrt() * d),
        n,
    })
}

/// Two-sample KS test (asymptotic p-value on the effective sample size).
pub fn ks_test_two_sample(a: &[f64], b: &[f64]) -> Result<KsResult> {
    if a.len() < 50 || b.len() < 50 {
        return Err(Error::invalid("ks_test_two_sample needs n >= 50 on both sides"));
    }
    if a.iter().chain(b.iter()).any(|x| x.is_nan()) {
        return Err(Error::invalid("ks_test_two_sample: NaN in samples"));
    }
    let mut xs = a.to_vec();
    let mut ys = b.to_vec();
    xs.sort_by(|p, q| p.partial_cmp(q).unwrap());
    ys.sort_by(|p, q| p.partial_cmp(q).unwrap());
    let (n, m) = (xs.len(), ys.len());
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < n && j < m {
        let x = xs[i].min(ys[j]);
        while i < n && xs[i] <= x {
            i += 1;
        }
        while j < m && ys[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    let n_eff = (n as f64 * m as f64) / (n as f64 + m as f64);
    Ok(KsResult {
        statistic: d,
        p_value: ks_survival(n_eff.sqrt() * d),
        n: n.min(m),
    })
}

/// Anderson-Darling normality test with estimated mean and variance.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct AdResult {
    pub statistic: Option<f64>,
    pub p_value: Option<f64>,
    pub degenerate: bool,
    pub n: usize,
}

impl AdResult {
    pub fn rejects_at(&self, alpha: f64) -> bool {
        matches!(self.p_value, Some(p) if p < alpha)
    }
}

/// Case-3 Anderson-Darling (both parameters estimated), with the
/// D'Agostino-Stephens small-sample correction and p-value fit.
pub fn ad_normality(samples: &[f64]) -> Result<AdResult> {
    let n = samples.len();
    if n < 100 {
        return Err(Error::invalid(format!("ad_normality needs n >= 100, got {n}")));
    }
    if samples.iter().any(|x| !x.is_finite()) {
        return Err(Error::invalid("ad_normality: non-finite sample"));
    }
    let nf = n as f64;
    let mean = samples.iter().sum::<f64>() / nf;
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (nf - 1.0);
    if var <= 0.0 || !var.is_finite() {
        return Ok(AdResult {
            statistic: None,
            p_value: None,
            degenerate: true,
            n,
        });
    }
    let sd = var.sqrt();
    let mut z: Vec<f64> = samples.iter().map(|x| (x - mean) / sd).collect();
    z.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut a2 = 0.0;
    for i in 0..n {
        let phi_lo = normal.cdf(z[i]).clamp(1e-300, 1.0 - 1e-16);
        let phi_hi = normal.cdf(z[n - 1 - i]).clamp(1e-300, 1.0 - 1e-16);
        a2 += (2.0 * i as f64 + 1.0) * (phi_lo.ln() + (1.0 - phi_hi).ln());
    }
    let a2 = -nf - a2 / nf;
    let a_star = a2 * (1.0 + 0.75 / nf + 2.25 / (nf * nf));
    let p = if a_star < 0.2 {
        1.0 - (-13.436 + 101.14 * a_star - 223.73 * a_star * a_star).exp()
    } else if a_star < 0.34 {
        1.0 - (-8.318 + 42.796 * a_star - 59.938 * a_star * a_star).exp()
    } else if a_star < 0.6 {
        (0.9177 - 4.279 * a_star - 1.38 * a_star * a_star).exp()
    } else if a_star < 10.0 {
        (1.2937 - 5.709 * a_star + 0.0186 * a_star * a_star).exp()
    } else {
        3.7e-24
    };
    Ok(AdResult {
        statistic: Some(a_star),
        p_value: Some(p.clamp(0.0, 1.0)),
        degenerate: false,
        n,
    })
}

/// Chi-square goodness of fit of observed bin counts against expected counts.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ChiSquareResult {
    pub statistic: f64,
    pub p_value: f64,
    pub dof: usize,
}

pub fn chi_square_gof(observed: &[u64], expected: &[f64]) -> Result<ChiSquareResult> {
    if observed.len() != expected.len() || observed.len() < 2 {
        return Err(Error::invalid("chi_square_gof needs matching bins (>= 2)"));
    }
    if expected.iter().any(|&e| e < 5.0) {
        return Err(Error::invalid("chi_square_gof: expected count below 5 in some bin"));
    }
    let stat: f64 = observed
        .iter()
        .zip(expected)
        .map(|(&o, &e)| (o as f64 - e).powi(2) / e)
        .sum();
    let dof = observed.len() - 1;
    let chi = ChiSquared::new(dof as f64).map_err(|e| Error::Internal(e.to_string()))?;
    Ok(ChiSquareResult {
        statistic: stat,
        p_value: 1.0 - chi.cdf(stat),
        dof,
    })
}

/// Running mean/variance accumulator with compensated sums; merges preserve
/// the fixed chunk order so reductions stay deterministic.
#[derive(Debug, Clone, Copy, Default)]
pub struct Moments {
    n: u64,
    sum: KahanSum,
    sumsq: KahanSum,
    min: f64,
    max: f64,
}

impl Moments {
    pub fn new() -> Self {
        Moments {
            n: 0,
            sum: KahanSum::default(),
            sumsq: KahanSum::default(),
            min: f64::INFINITY,
            max: f64::NEG_INFINITY,
        }
    }

    pub fn push(&mut self, x: f64) {
        self.n += 1;
        self.sum.add(x);
        self.sumsq.add(x * x);
        self.min = self.min.min(x);
        self.max = self.max.max(x);
    }

    pub fn merge(&mut self, other: &Moments) {
        self.n += other.n;
        self.sum.add(other.sum.value());
        self.sumsq.add(other.sumsq.value());
        self.min = self.min.min(other.min);
        self.max = self.max.max(other.max);
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn mean(&self) -> f64 {
        self.sum.value() / self.n as f64
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> f64 {
        let nf = self.n as f64;
        ((self.sumsq.value() - self.sum.value() * self.sum.value() / nf) / (nf - 1.0)).max(0.0)
    }

    pub fn sd(&self) -> f64 {
        self.variance().sqrt()
    }

    /// Standard error of the mean.
    pub fn se(&self) -> f64 {
        (self.variance() / self.n as f64).sqrt()
    }

    pub fn min(&self) -> f64 {
        self.min
    }

    pub fn max(&self) -> f64 {
        self.max
    }
}

/// Neumaier-compensated summation.
#[derive(Debug, Clone, Copy, Default)]
pub struct KahanSum {
    sum: f64,
    comp: f64,
}

impl KahanSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Least-squares slope of `y` against `x`.
pub fn ls_slope(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut num = 0.0;
    let mut den = 0.0;
    for (&xi, &yi) in x.iter().zip(y) {
        num += (xi - mx) * (yi - my);
        den += (xi - mx) * (xi - mx);
    }
    (den > 0.0).then(|| num / den)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Domain};
    use rand::Rng;

    #[test]
    fn ks_detects_shift() {
        let mut rng = stream(9, Domain::Calibration, 0);
        let samples: Vec<f64> = (0..10_000).map(|_| rng.random::<f64>() + 0.2).collect();
        let r = ks_test(&samples, |x| x.clamp(0.0, 1.0)).unwrap();
        assert!(r.p_value < 1e-6);
    }

    #[test]
    fn ks_degenerate_samples() {
        let samples = vec![0.5; 100];
        let r = ks_test(&samples, |x| x.clamp(0.0, 1.0)).unwrap();
        assert!(r.statistic >= 0.5);
    }

    #[test]
    fn ks_rejects_nan_and_small_n() {
        assert!(ks_test(&[0.1; 10], |x| x).is_err());
        let mut v = vec![0.5; 100];
        v[3] = f64::NAN;
        assert!(ks_test(&v, |x| x).is_err());
    }

    #[test]
    fn ad_needs_a_hundred_samples() {
        assert!(ad_normality(&[0.0; 99]).is_err());
    }

    #[test]
    fn ad_flags_degenerate() {
        let r = ad_normality(&vec![1.0; 2000]).unwrap();
        assert!(r.degenerate);
        assert!(r.p_value.is_none());
    }

    #[test]
    fn ad_rejects_exponential() {
        let mut rng = stream(10, Domain::Calibration, 0);
        let samples: Vec<f64> = (0..2000).map(|_| -rng.random::<f64>().ln()).collect();
        let r = ad_normality(&samples).unwrap();
        assert!(r.p_value.unwrap() < 1e-4, "p {:?}", r.p_value);
    }

    #[test]
    fn chi_square_uniform_counts() {
        let observed = [100u64, 98, 102, 100];
        let expected = [100.0, 100.0, 100.0, 100.0];
        let r = chi_square_gof(&observed, &expected).unwrap();
        assert!(r.p_value > 0.9);
        assert_eq!(r.dof, 3);
    }

    #[test]
    fn moments_merge_matches_sequential() {
        let xs: Vec<f64> = (0..1000).map(|i| (i as f64).sin()).collect();
        let mut all = Moments::new();
        for &x in &xs {
            all.push(x);
        }
        let mut left = Moments::new();
        let mut right = Moments::new();
        for &x in &xs[..500] {
            left.push(x);
        }
        for &x in &xs[500..] {
            right.push(x);
        }
        left.merge(&right);
        assert!((all.mean() - left.mean()).abs() < 1e-14);
        assert!((all.variance() - left.variance()).abs() < 1e-13);
    }

    #[test]
    fn slope_of_line() {
        let x = [1.0, 2.0, 3.0];
        let y = [2.0, 0.0, -2.0];
        assert!((ls_slope(&x, &y).unwrap() + 2.0).abs() < 1e-12);
    }
}
