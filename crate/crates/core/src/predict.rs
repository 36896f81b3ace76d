//! Closed-form large-size predictions for the log-likelihood ratio, plus the sample
//! summaries used to compare them with simulations.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Hypothesis;

/// Limiting normal law of `log L` under each hypothesis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LrAsymptotics {
    pub mean_null: f64,
    pub mean_alt: f64,
    pub variance: f64,
    pub valid: bool,
}

impl LrAsymptotics {
    pub fn mean(&self, hypothesis: Hypothesis) -> f64 {
        match hypothesis {
            Hypothesis::Null => self.mean_null,
            Hypothesis::Spiked => self.mean_alt,
        }
    }
}

fn check_region(alpha: f64, beta: f64) -> Result<f64> {
    if !(alpha >= 0.0) || !(beta >= 0.0) {
        return Err(Error::param("alpha", format!("alpha and beta must be nonnegative, got ({alpha}, {beta})")));
    }
    let g = alpha * beta * beta;
    if g >= 1.0 {
        return Err(Error::OutsideValidRegion(g));
    }
    Ok(g)
}

/// Limits of the mean and variance of `log L`. Outside `αβ² < 1` the result is flagged
/// invalid and its numeric fields are NaN.
pub fn lr_asymptotics(alpha: f64, beta: f64) -> LrAsymptotics {
    match check_region(alpha, beta) {
        Ok(g) => {
            let l = (-g).ln_1p();
            LrAsymptotics {
                mean_null: 0.25 * l,
                mean_alt: -0.25 * l,
                variance: -0.5 * l,
                valid: true,
            }
        }
        Err(_) => LrAsymptotics {
            mean_null: f64::NAN,
            mean_alt: f64::NAN,
            variance: f64::NAN,
            valid: false,
        },
    }
}

/// Complementary error function.
pub fn erfc(x: f64) -> f64 {
    libm::erfc(x)
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Limiting sum of type-I and type-II errors of the likelihood-ratio test.
pub fn optimal_error(alpha: f64, beta: f64) -> Result<f64> {
    let g = check_region(alpha, beta)?;
    Ok(erfc(0.25 * (-(-g).ln_1p()).sqrt()))
}

/// Limit of `KL(P_β ‖ P_0)`.
pub fn kl_limit(alpha: f64, beta: f64) -> Result<f64> {
    let g = check_region(alpha, beta)?;
    Ok(-0.25 * (-g).ln_1p())
}

/// Limit of `N·E⟨R^u R^v⟩` under the spiked model.
pub fn theta(alpha: f64, beta: f64) -> Result<f64> {
    let g = check_region(alpha, beta)?;
    Ok(alpha * beta / (1.0 - g))
}

/// Characteristic function of the limiting normal law of `log L`.
pub fn char_fn(s: f64, alpha: f64, beta: f64, hypothesis: Hypothesis) -> Result<Complex64> {
    check_region(alpha, beta)?;
    let a = lr_asymptotics(alpha, beta);
    let mu = a.mean(hypothesis);
    Ok(Complex64::new(-0.5 * a.variance * s * s, s * mu).exp())
}

/// Empirical characteristic function `mean(exp(i s x))`.
pub fn empirical_char_fn(samples: &[f64], s: f64) -> Complex64 {
    let n = samples.len() as f64;
    let sum: Complex64 = samples.iter().map(|x| Complex64::new(0.0, s * x).exp()).sum();
    sum / n
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalRef {
    pub mean: f64,
    pub variance: f64,
}

impl NormalRef {
    pub fn cdf(&self, x: f64) -> f64 {
        if self.variance <= 0.0 {
            return if x >= self.mean { 1.0 } else { 0.0 };
        }
        normal_cdf((x - self.mean) / self.variance.sqrt())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EcdfPoint {
    pub x: f64,
    pub empirical: f64,
    pub reference: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EcdfSummary {
    pub n: usize,
    pub mean: f64,
    pub variance: f64,
    pub se_mean: f64,
    pub se_variance: f64,
    pub reference: NormalRef,
    pub degenerate_reference: bool,
    pub ks: f64,
    pub ecdf: Vec<EcdfPoint>,
}

pub const ECDF_GRID: usize = 101;

/// Moments, ECDF on a grid and one-sample KS distance to `reference`.
pub fn summarize(samples: &[f64], reference: NormalRef) -> Result<EcdfSummary> {
    let n = samples.len();
    if n < 2 {
        return Err(Error::TooFewSamples { needed: 2, got: n });
    }
    let nf = n as f64;
    // Centered on the first sample so constant input gives exactly zero spread.
    let origin = samples[0];
    let shift = samples.iter().map(|x| x - origin).sum::<f64>() / nf;
    let mean = origin + shift;
    let m2 = samples.iter().map(|x| (x - origin - shift).powi(2)).sum::<f64>() / nf;
    let m4 = samples.iter().map(|x| (x - origin - shift).powi(4)).sum::<f64>() / nf;
    let variance = m2 * nf / (nf - 1.0);
    let se_mean = (variance / nf).sqrt();
    let se_variance = ((m4 - variance * variance * (nf - 3.0) / (nf - 1.0)) / nf).max(0.0).sqrt();

    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let ks = if reference.variance <= 0.0 {
        // Step reference: the gap is the mass strictly on either side of its jump.
        let below = sorted.partition_point(|&x| x < reference.mean);
        let above = n - sorted.partition_point(|&x| x <= reference.mean);
        below.max(above) as f64 / nf
    } else {
        let mut ks: f64 = 0.0;
        let mut i = 0;
        while i < n {
            let x = sorted[i];
            let mut j = i;
            while j < n && sorted[j] == x {
                j += 1;
            }
            let f = reference.cdf(x);
            ks = ks.max(j as f64 / nf - f).max(f - i as f64 / nf);
            i = j;
        }
        ks
    };
    let ks = ks.clamp(0.0, 1.0);

    let (lo, hi) = (sorted[0], sorted[n - 1]);
    let ecdf = (0..ECDF_GRID)
        .map(|k| {
            let x = if hi > lo {
                lo + (hi - lo) * k as f64 / (ECDF_GRID - 1) as f64
            } else {
                lo
            };
            EcdfPoint {
                x,
                empirical: sorted.partition_point(|&s| s <= x) as f64 / nf,
                reference: reference.cdf(x),
            }
        })
        .collect();

    Ok(EcdfSummary {
        n,
        mean,
        variance,
        se_mean,
        se_variance,
        reference,
        degenerate_reference: reference.variance <= 0.0,
        ks,
        ecdf,
    })
}
