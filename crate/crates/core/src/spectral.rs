//! Top-eigenvalue detector: compare the largest eigenvalue of `YYᵀ/N` with the
//! Marchenko–Pastur bulk edge `(1 + √α)²`.

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{generate_null, Hypothesis, Instance, Matrix, ModelParams};
use crate::rng::{derive_seed, stream};

pub const POWER_TOL: f64 = 1e-10;
pub const POWER_MAX_ITER: usize = 1_000_000;
const START_SEED: u64 = 0x0005_eed0_f70b;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerTrace {
    pub value: f64,
    pub iterations: usize,
    pub restarts: usize,
    /// Rayleigh quotient after each multiplication.
    pub history: Vec<f64>,
}

/// Gram matrix of the shorter side: `YYᵀ` when `N ≤ M`, else `YᵀY`. Both share the
/// nonzero spectrum.
pub fn small_gram(y: &Matrix) -> DMatrix<f64> {
    let a = DMatrix::from_row_slice(y.rows(), y.cols(), y.as_slice());
    if y.rows() <= y.cols() {
        &a * a.transpose()
    } else {
        a.transpose() * &a
    }
}

/// Power iteration on a symmetric positive semidefinite matrix. Stops once the
/// Rayleigh quotient changes by less than `tol` relative to its value.
pub fn power_iteration(gram: &DMatrix<f64>, tol: f64, max_iter: usize, keep_history: bool) -> PowerTrace {
    let n = gram.nrows();
    let scale = gram.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let mut trace = PowerTrace {
        value: 0.0,
        iterations: 0,
        restarts: 0,
        history: Vec::new(),
    };
    if n == 0 || scale == 0.0 {
        return trace;
    }
    let mut rng = stream(START_SEED);
    let mut x = DVector::<f64>::from_fn(n, |_, _| StandardNormal.sample(&mut rng));
    x.normalize_mut();
    let mut lambda = 0.0;
    let mut gx = gram * &x;
    while trace.iterations < max_iter {
        trace.iterations += 1;
        let next = x.dot(&gx);
        let norm = gx.norm();
        if norm <= 1e-300 || next <= 1e-14 * scale * n as f64 {
            // Start vector (nearly) in the null space: draw a fresh one.
            if trace.restarts >= 10 {
                break;
            }
            trace.restarts += 1;
            x = DVector::from_fn(n, |_, _| StandardNormal.sample(&mut rng));
            x.normalize_mut();
            gx = gram * &x;
            continue;
        }
        if keep_history {
            trace.history.push(next);
        }
        let done = (next - lambda).abs() <= tol * next;
        lambda = next;
        x = gx / norm;
        if done {
            break;
        }
        gx = gram * &x;
    }
    trace.value = lambda;
    trace
}

/// Largest eigenvalue of `YYᵀ`.
pub fn top_singular_value_sq(y: &Matrix) -> f64 {
    power_iteration(&small_gram(y), POWER_TOL, POWER_MAX_ITER, false).value
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralStat {
    pub top_sv_sq_over_n: f64,
    pub bulk_edge: f64,
    pub decision: Hypothesis,
    /// Statistic minus the detection threshold.
    pub margin: f64,
}

pub fn bulk_edge(alpha: f64) -> f64 {
    (1.0 + alpha.sqrt()).powi(2)
}

pub fn spectral_detect(instance: &Instance, alpha: f64, buffer: f64) -> Result<SpectralStat> {
    if !(buffer >= 0.0) {
        return Err(Error::param("spectral.buffer", format!("must be nonnegative, got {buffer}")));
    }
    let stat = top_singular_value_sq(&instance.data) / instance.n_rows() as f64;
    let edge = bulk_edge(alpha);
    let margin = stat - edge - buffer;
    Ok(SpectralStat {
        top_sv_sq_over_n: stat,
        bulk_edge: edge,
        decision: if margin > 0.0 { Hypothesis::Spiked } else { Hypothesis::Null },
        margin,
    })
}

pub const CALIBRATION_SIMS: usize = 1000;
pub const CALIBRATION_QUANTILE: f64 = 0.99;

/// Upper quantile of `λ_max(YYᵀ)/N - (1+√α)²` over null draws, floored at zero.
pub fn calibrate_buffer(n: usize, m: usize, n_sims: usize, quantile: f64, seed: u64) -> Result<f64> {
    if n_sims == 0 {
        return Err(Error::param("spectral.calibration_sims", "need at least one simulation"));
    }
    let params = ModelParams::new(n, m, 0.0)?;
    let edge = bulk_edge(params.alpha());
    let mut offsets: Vec<f64> = (0..n_sims)
        .into_par_iter()
        .map(|k| {
            let inst = generate_null(&params, derive_seed(seed, &[k as u64]));
            top_singular_value_sq(&inst.data) / n as f64 - edge
        })
        .collect();
    offsets.sort_by(|a, b| a.total_cmp(b));
    let idx = ((quantile * n_sims as f64).ceil() as usize).clamp(1, n_sims) - 1;
    Ok(offsets[idx].max(0.0))
}
