//! Replica-symmetric potential `F(q_u, q_v)` and its sup-inf value.
//!
//! `ψ(r) = E log Σ_k w_k exp(√r z a_k + r a_k u* - r a_k²/2)` with `z ~ N(0,1)` and
//! `u*` drawn from the same prior.
//!
//! `F = ψ_u(β q_v) + α ψ_v(β q_u) - β q_u q_v / 2` and `φ = sup_{q_v} inf_{q_u} F`.
//!
//! `F` is convex in `q_u`, so the inner infimum sits where `q_v = 2α ψ_v'(β q_u)`.
//! The outer supremum is therefore a one-dimensional search over `x = β q_u ≥ 0`.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lse::LogSumExp;
use crate::prior::{Family, Prior};
use crate::quadrature::GaussHermite;

/// Expectation of the log-partition function of a scalar Gaussian channel at SNR `r`.
pub fn psi(prior: &Prior, r: f64, quad: &GaussHermite) -> Result<f64> {
    if !(r >= 0.0) {
        return Err(Error::param("r", format!("signal-to-noise ratio must be nonnegative, got {r}")));
    }
    Ok(psi_unchecked(prior, r, quad))
}

fn psi_unchecked(prior: &Prior, r: f64, quad: &GaussHermite) -> f64 {
    if r == 0.0 {
        return 0.0;
    }
    if prior.family() == Family::GaussianRsOnly {
        return 0.5 * (r - r.ln_1p());
    }
    let sr = r.sqrt();
    let atoms = prior.atoms();
    let log_w: Vec<f64> = prior.weights().iter().map(|w| w.ln()).collect();
    let mut total = 0.0;
    for (&star, &w_star) in atoms.iter().zip(prior.weights()) {
        let shift: Vec<f64> = atoms.iter().zip(&log_w).map(|(&a, &lw)| lw + r * a * star - 0.5 * r * a * a).collect();
        let inner = quad.expect(|z| {
            let mut acc = LogSumExp::new();
            for (&a, &s) in atoms.iter().zip(&shift) {
                acc.push(s + sr * z * a);
            }
            acc.value()
        });
        total += w_star * inner;
    }
    total
}

/// Derivative of `ψ` by central differences, second-order one-sided near zero.
pub fn psi_prime(prior: &Prior, r: f64, quad: &GaussHermite) -> Result<f64> {
    if !(r >= 0.0) {
        return Err(Error::param("r", format!("signal-to-noise ratio must be nonnegative, got {r}")));
    }
    Ok(psi_prime_unchecked(prior, r, quad))
}

fn psi_prime_unchecked(prior: &Prior, r: f64, quad: &GaussHermite) -> f64 {
    if prior.family() == Family::GaussianRsOnly {
        return 0.5 * r / (1.0 + r);
    }
    let h = 1e-5f64.max(1e-5 * r);
    if r < h {
        let f0 = psi_unchecked(prior, r, quad);
        let f1 = psi_unchecked(prior, r + h, quad);
        let f2 = psi_unchecked(prior, r + 2.0 * h, quad);
        (-3.0 * f0 + 4.0 * f1 - f2) / (2.0 * h)
    } else {
        (psi_unchecked(prior, r + h, quad) - psi_unchecked(prior, r - h, quad)) / (2.0 * h)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct RsProblem<'a> {
    pub alpha: f64,
    pub beta: f64,
    pub prior_u: &'a Prior,
    pub prior_v: &'a Prior,
    pub quad: &'a GaussHermite,
}

impl RsProblem<'_> {
    pub fn potential(&self, q_u: f64, q_v: f64) -> f64 {
        psi_unchecked(self.prior_u, self.beta * q_v, self.quad)
            + self.alpha * psi_unchecked(self.prior_v, self.beta * q_u, self.quad)
            - 0.5 * self.beta * q_u * q_v
    }

    /// Central-difference gradient `(∂F/∂q_u, ∂F/∂q_v)`.
    pub fn gradient(&self, q_u: f64, q_v: f64) -> (f64, f64) {
        let h = 1e-5;
        let du = if q_u >= h {
            (self.potential(q_u + h, q_v) - self.potential(q_u - h, q_v)) / (2.0 * h)
        } else {
            (-3.0 * self.potential(q_u, q_v) + 4.0 * self.potential(q_u + h, q_v) - self.potential(q_u + 2.0 * h, q_v))
                / (2.0 * h)
        };
        let dv = if q_v >= h {
            (self.potential(q_u, q_v + h) - self.potential(q_u, q_v - h)) / (2.0 * h)
        } else {
            (-3.0 * self.potential(q_u, q_v) + 4.0 * self.potential(q_u, q_v + h) - self.potential(q_u, q_v + 2.0 * h))
                / (2.0 * h)
        };
        (du, dv)
    }

    fn update(&self, q_u: f64, q_v: f64) -> (f64, f64) {
        (
            2.0 * psi_prime_unchecked(self.prior_u, self.beta * q_v, self.quad),
            2.0 * self.alpha * psi_prime_unchecked(self.prior_v, self.beta * q_u, self.quad),
        )
    }

    /// `|q_u - 2ψ_u'(βq_v)| + |q_v - 2αψ_v'(βq_u)|`.
    pub fn residual(&self, q_u: f64, q_v: f64) -> f64 {
        let (nu, nv) = self.update(q_u, q_v);
        (q_u - nu).abs() + (q_v - nv).abs()
    }

    /// Inner infimum evaluated along its optimality curve, parametrized by `x = β q_u`.
    /// Returns `(q_u, q_v, F)`.
    fn along_curve(&self, x: f64) -> (f64, f64, f64) {
        let q_v = 2.0 * self.alpha * psi_prime_unchecked(self.prior_v, x, self.quad);
        let q_u = x / self.beta;
        (q_u, q_v, self.potential(q_u, q_v))
    }

    fn box_upper(&self) -> (f64, f64) {
        let ku = self.prior_u.support_radius();
        let kv = self.prior_v.support_radius();
        let qu = if ku.is_finite() { ku * ku } else { 10.0 * (1.0 + self.alpha) };
        let qv = if kv.is_finite() { self.alpha * kv * kv } else { 10.0 * (1.0 + self.alpha) };
        (qu, qv)
    }
}

pub fn rs_potential(alpha: f64, beta: f64, q_u: f64, q_v: f64, pu: &Prior, pv: &Prior, quad: &GaussHermite) -> Result<f64> {
    if !(q_u >= 0.0 && q_v >= 0.0) {
        return Err(Error::param("q", format!("overlaps must be nonnegative, got ({q_u}, {q_v})")));
    }
    let p = RsProblem { alpha, beta, prior_u: pu, prior_v: pv, quad };
    Ok(p.potential(q_u, q_v))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RsMethod {
    FixedPoint,
    Grid,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixedPoint {
    pub q_u: f64,
    pub q_v: f64,
    pub value: f64,
    pub residual: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RsSolution {
    pub q_u: f64,
    pub q_v: f64,
    pub phi_rs: f64,
    pub method: RsMethod,
    pub iterations: usize,
    pub residual: f64,
    /// Distinct converged fixed points of the stationarity system.
    pub fixed_points: Vec<FixedPoint>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveOptions {
    pub damping: f64,
    pub max_iterations: usize,
    pub fixed_point_tol: f64,
    pub grid_points: usize,
    /// Largest value of the curve parameter `x = β q_u` searched.
    pub x_max: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            damping: 0.5,
            max_iterations: 10_000,
            fixed_point_tol: 1e-10,
            grid_points: 200,
            x_max: 1e3,
        }
    }
}

pub fn solve_rs(alpha: f64, beta: f64, pu: &Prior, pv: &Prior, quad: &GaussHermite) -> Result<RsSolution> {
    solve_rs_with(alpha, beta, pu, pv, quad, &SolveOptions::default())
}

fn golden_max(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> (f64, f64) {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..200 {
        if (b - a).abs() <= 1e-13 * (1.0 + a.abs()) {
            break;
        }
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    if fc >= fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

/// Grid search over the curve parameter with golden-section refinement.
/// Returns `(x, F)` at the best point found.
fn grid_sup(p: &RsProblem, points: usize, x_max: f64) -> (f64, f64) {
    // s ∈ [0, 1) ↦ x = s / (1 - s) spreads points over [0, x_max].
    let s_max = x_max / (1.0 + x_max);
    let xs: Vec<f64> = (0..=points)
        .map(|k| {
            let s = s_max * k as f64 / points as f64;
            s / (1.0 - s)
        })
        .collect();
    let vals: Vec<f64> = xs.iter().map(|&x| p.along_curve(x).2).collect();
    let last = vals.len() - 1;
    let mut best = (0.0, vals[0]);
    for k in 0..=last {
        let left = if k == 0 { f64::NEG_INFINITY } else { vals[k - 1] };
        let right = if k == last { f64::NEG_INFINITY } else { vals[k + 1] };
        if vals[k] < left || vals[k] < right {
            continue;
        }
        // Refine every local maximum; near a first-order jump the global one can flip.
        let lo = xs[k.saturating_sub(1)];
        let hi = xs[(k + 1).min(last)];
        let (x, v) = golden_max(|x| p.along_curve(x).2, lo, hi);
        let (x, v) = if v >= vals[k] { (x, v) } else { (xs[k], vals[k]) };
        if v > best.1 {
            best = (x, v);
        }
    }
    best
}

fn iterate(p: &RsProblem, start: (f64, f64), opts: &SolveOptions) -> Option<FixedPoint> {
    let (mut qu, mut qv) = start;
    for it in 1..=opts.max_iterations {
        let (nu, nv) = p.update(qu, qv);
        let nu = (1.0 - opts.damping) * qu + opts.damping * nu;
        let nv = (1.0 - opts.damping) * qv + opts.damping * nv;
        let step = (nu - qu).abs() + (nv - qv).abs();
        qu = nu;
        qv = nv;
        if !(qu.is_finite() && qv.is_finite()) {
            return None;
        }
        if step < opts.fixed_point_tol {
            let residual = p.residual(qu, qv);
            return (residual < 1e-7).then(|| FixedPoint {
                q_u: qu,
                q_v: qv,
                value: p.potential(qu, qv),
                residual,
                iterations: it,
            });
        }
    }
    None
}

pub fn solve_rs_with(
    alpha: f64,
    beta: f64,
    pu: &Prior,
    pv: &Prior,
    quad: &GaussHermite,
    opts: &SolveOptions,
) -> Result<RsSolution> {
    if !(alpha > 0.0) {
        return Err(Error::param("alpha", format!("must be positive, got {alpha}")));
    }
    if !(beta >= 0.0) {
        return Err(Error::param("beta", format!("must be nonnegative, got {beta}")));
    }
    if beta == 0.0 {
        return Ok(RsSolution {
            q_u: 0.0,
            q_v: 0.0,
            phi_rs: 0.0,
            method: RsMethod::FixedPoint,
            iterations: 0,
            residual: 0.0,
            fixed_points: vec![],
        });
    }
    let p = RsProblem { alpha, beta, prior_u: pu, prior_v: pv, quad };

    // Fixed points from box corners and the origin.
    let (bu, bv) = p.box_upper();
    let mut fixed_points: Vec<FixedPoint> = Vec::new();
    let add_fixed_point = |fp: Option<FixedPoint>, list: &mut Vec<FixedPoint>| {
        if let Some(fp) = fp {
            if !list.iter().any(|f| (f.q_u - fp.q_u).abs() + (f.q_v - fp.q_v).abs() < 1e-6) {
                list.push(fp);
            }
        }
    };
    for s in [(0.0, 0.0), (bu, bv), (bu, 0.0), (0.0, bv), (0.5 * bu, 0.5 * bv)] {
        add_fixed_point(iterate(&p, s, opts), &mut fixed_points);
    }

    // Grid answer at two resolutions, polished by iterating from the grid optimum.
    let (x1, v1) = grid_sup(&p, opts.grid_points, opts.x_max);
    let (x2, v2) = grid_sup(&p, 2 * opts.grid_points + 1, opts.x_max);
    let (x_best, v_best) = if v2 >= v1 { (x2, v2) } else { (x1, v1) };
    let (gqu, gqv, _) = p.along_curve(x_best);
    add_fixed_point(iterate(&p, (gqu, gqv), opts), &mut fixed_points);

    // Every fixed point lies on the inner-optimality curve, so its value bounds φ from below.
    let fp_best = fixed_points.iter().map(|f| f.value).fold(f64::NEG_INFINITY, f64::max);
    if (v1 - v2).abs() > 1e-6 * (1.0 + v2.abs()) && fp_best < v_best - 1e-6 {
        return Err(Error::NonConvergence(format!(
            "grid resolutions disagree at alpha={alpha}, beta={beta}: {v1} vs {v2}"
        )));
    }
    let (gqu, gqv, v_best) = match fixed_points.iter().max_by(|a, b| a.value.total_cmp(&b.value)) {
        Some(f) if f.value > v_best => (f.q_u, f.q_v, f.value),
        _ => (gqu, gqv, v_best),
    };

    // Prefer a fixed point that reproduces the grid sup-inf value.
    let matching = fixed_points
        .iter()
        .filter(|f| (f.value - v_best).abs() < 1e-5 && (f.q_v - gqv).abs() < 1e-3 * (1.0 + gqv))
        .min_by(|a, b| a.residual.total_cmp(&b.residual));
    let sol = match matching {
        Some(fp) => RsSolution {
            q_u: fp.q_u,
            q_v: fp.q_v,
            phi_rs: fp.value,
            method: RsMethod::FixedPoint,
            iterations: fp.iterations,
            residual: fp.residual,
            fixed_points: fixed_points.clone(),
        },
        None => RsSolution {
            q_u: gqu,
            q_v: gqv,
            phi_rs: v_best,
            method: RsMethod::Grid,
            iterations: 0,
            residual: p.residual(gqu, gqv),
            fixed_points,
        },
    };
    debug_assert!(sol.phi_rs >= -1e-9);
    Ok(sol)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryPoint {
    pub alpha: f64,
    /// Smallest `β` with `φ_RS > tol`; the upper bracket when unbounded.
    pub beta_star: f64,
    pub phi_at_bracket: f64,
    pub alpha_beta_star_sq: f64,
    pub unbounded_in_bracket: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseBoundary {
    pub points: Vec<BoundaryPoint>,
    pub tolerance: f64,
}

/// Past a continuous transition `φ_RS` grows like the cube of the distance, so a loose
/// indicator shifts the located boundary noticeably.
pub const PHASE_TOL: f64 = 1e-10;

pub fn phase_boundary(alphas: &[f64], pu: &Prior, pv: &Prior, tol: f64, quad: &GaussHermite) -> Result<PhaseBoundary> {
    if alphas.iter().any(|&a| !(a > 0.0)) {
        return Err(Error::param("alpha", "alpha grid must be positive"));
    }
    let points = alphas
        .par_iter()
        .map(|&alpha| -> Result<BoundaryPoint> {
            let phi = |beta: f64| solve_rs(alpha, beta, pu, pv, quad).map(|s| s.phi_rs);
            let hi0 = 2.0 / alpha.sqrt();
            let phi_hi = phi(hi0)?;
            if phi_hi <= tol {
                return Ok(BoundaryPoint {
                    alpha,
                    beta_star: hi0,
                    phi_at_bracket: phi_hi,
                    alpha_beta_star_sq: alpha * hi0 * hi0,
                    unbounded_in_bracket: true,
                });
            }
            let (mut lo, mut hi) = (0.0, hi0);
            while hi - lo > 1e-6 {
                let mid = 0.5 * (lo + hi);
                if phi(mid)? > tol {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
            Ok(BoundaryPoint {
                alpha,
                beta_star: hi,
                phi_at_bracket: phi_hi,
                alpha_beta_star_sq: alpha * hi * hi,
                unbounded_in_bracket: false,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PhaseBoundary { points, tolerance: tol })
}

impl PhaseBoundary {
    /// CSV with columns `alpha,beta_star,phi_at_bracket,alpha_beta_star_sq`; unbounded
    /// entries leave `beta_star` and `alpha_beta_star_sq` empty.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["alpha", "beta_star", "phi_at_bracket", "alpha_beta_star_sq"])?;
        for p in &self.points {
            let (b, g) = if p.unbounded_in_bracket {
                (String::new(), String::new())
            } else {
                (format!("{:?}", p.beta_star), format!("{:?}", p.alpha_beta_star_sq))
            };
            w.write_record([format!("{:?}", p.alpha), b, format!("{:?}", p.phi_at_bracket), g])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_json(&self, mut out: impl Write) -> Result<()> {
        serde_json::to_writer_pretty(&mut out, self)?;
        Ok(())
    }
}
