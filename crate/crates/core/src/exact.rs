//! Exact likelihood ratio and exact Gibbs averages by enumeration.
//!
//! The likelihood ratio integrates `exp(-H(u, v))` against the product prior. Conditional
//! on `v` the Hamiltonian couples `u` only through `(Yv)_i` and `|v|²`, so the `u`-integral
//! factorizes into one-dimensional sums and only the `v` configurations need enumerating.
//! They are visited in reflected Gray-code order, which turns the update of `Yv` into a
//! single column axpy per step.
//!
//! The `v` enumeration is cut into fixed-size contiguous blocks. Each block rebuilds its
//! incremental state from its first configuration, and block partials are merged in
//! block order, so the result does not depend on how blocks are scheduled.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gray::MixedRadixGray;
use crate::lse::{log_cosh, LogSumExp};
use crate::model::{Instance, Matrix};
use crate::prior::Prior;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Caps {
    /// Maximum number of `v` configurations for the likelihood ratio.
    pub max_v_configs: u64,
    /// Maximum `(k_u^N k_v^M)^n_replicas` for exact Gibbs averages.
    pub max_joint_evaluations: u64,
}

impl Default for Caps {
    fn default() -> Self {
        Caps {
            max_v_configs: 1 << 24,
            max_joint_evaluations: 1 << 30,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExactOptions {
    pub caps: Caps,
    /// Configurations per enumeration block.
    pub block_size: u64,
    /// Use the exponentiated product kernel for Rademacher/Rademacher when it cannot overflow.
    pub fast_path: bool,
}

impl Default for ExactOptions {
    fn default() -> Self {
        ExactOptions {
            caps: Caps::default(),
            block_size: 1 << 12,
            fast_path: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LrMethod {
    ExactEnumeration,
    McEstimate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogLr {
    pub value: f64,
    pub n_v_configs: u64,
    pub method: LrMethod,
}

/// `log Σ_k w_k exp(a x_k - c x_k²)` over the atoms of `prior_u`.
pub fn u_marginal_log(a: f64, c: f64, prior_u: &Prior) -> f64 {
    UMarginal::new(prior_u).eval(a, c)
}

/// Precomputed log-weights for repeated marginal evaluations.
#[derive(Debug, Clone)]
pub(crate) struct UMarginal {
    atoms: Vec<f64>,
    sq: Vec<f64>,
    log_w: Vec<f64>,
    rademacher: bool,
}

impl UMarginal {
    pub(crate) fn new(prior: &Prior) -> Self {
        UMarginal {
            atoms: prior.atoms().to_vec(),
            sq: prior.atoms().iter().map(|a| a * a).collect(),
            log_w: prior.weights().iter().map(|w| w.ln()).collect(),
            rademacher: prior.is_rademacher(),
        }
    }

    #[inline]
    pub(crate) fn eval(&self, a: f64, c: f64) -> f64 {
        if self.rademacher {
            return log_cosh(a) - c;
        }
        let mut max = f64::NEG_INFINITY;
        for k in 0..self.atoms.len() {
            max = max.max(self.log_w[k] + a * self.atoms[k] - c * self.sq[k]);
        }
        let mut sum = 0.0;
        for k in 0..self.atoms.len() {
            sum += (self.log_w[k] + a * self.atoms[k] - c * self.sq[k] - max).exp();
        }
        max + sum.ln()
    }
}

fn check_shapes(y: &Matrix) -> Result<()> {
    if y.rows() == 0 || y.cols() == 0 {
        return Err(Error::DimensionMismatch("empty data matrix".into()));
    }
    Ok(())
}

/// Exact `log L(Y; β)` with default caps and block size.
pub fn exact_log_lr(y: &Matrix, beta: f64, prior_u: &Prior, prior_v: &Prior) -> Result<LogLr> {
    exact_log_lr_with(y, beta, prior_u, prior_v, &ExactOptions::default())
}

pub fn exact_log_lr_with(
    y: &Matrix,
    beta: f64,
    prior_u: &Prior,
    prior_v: &Prior,
    opts: &ExactOptions,
) -> Result<LogLr> {
    check_shapes(y)?;
    prior_u.ensure_bounded()?;
    prior_v.ensure_bounded()?;
    if !(beta >= 0.0 && beta.is_finite()) {
        return Err(Error::param("beta", format!("beta must be finite and >= 0, got {beta}")));
    }
    let m = y.cols();
    let radices = vec![prior_v.n_atoms(); m];
    let total = MixedRadixGray::count(&radices);
    let needed = (prior_v.n_atoms() as f64).powi(m as i32);
    if needed > opts.caps.max_v_configs as f64 {
        return Err(Error::CapExceeded {
            needed,
            cap: opts.caps.max_v_configs,
        });
    }
    let value = if beta == 0.0 {
        // The integrand is identically one.
        0.0
    } else if opts.fast_path && prior_u.is_rademacher() && prior_v.is_rademacher() {
        rademacher_kernel(y, beta, opts.block_size).unwrap_or_else(|| general_kernel(y, beta, prior_u, prior_v, opts.block_size))
    } else {
        general_kernel(y, beta, prior_u, prior_v, opts.block_size)
    };
    Ok(LogLr {
        value,
        n_v_configs: total,
        method: LrMethod::ExactEnumeration,
    })
}

fn block_ranges(total: u64, block: u64) -> Vec<(u64, u64)> {
    let block = block.max(1);
    (0..total.div_ceil(block))
        .map(|b| (b * block, ((b + 1) * block).min(total)))
        .collect()
}

fn merge_blocks(parts: &[LogSumExp]) -> f64 {
    let mut acc = LogSumExp::new();
    for p in parts {
        acc.merge(p);
    }
    acc.value()
}

fn general_kernel(y: &Matrix, beta: f64, prior_u: &Prior, prior_v: &Prior, block: u64) -> f64 {
    let n = y.rows();
    let m = y.cols();
    let scale = (beta / n as f64).sqrt();
    let quad = beta / (2.0 * n as f64);
    let yt = y.transpose();
    let marginal = UMarginal::new(prior_u);
    let atoms = prior_v.atoms();
    let log_w: Vec<f64> = prior_v.weights().iter().map(|w| w.ln()).collect();
    let radices = vec![atoms.len(); m];
    let total = MixedRadixGray::count(&radices);

    let run_block = |&(start, end): &(u64, u64)| -> LogSumExp {
        let mut gray = MixedRadixGray::starting_at(&radices, start);
        let v: Vec<f64> = gray.digits().iter().map(|&d| atoms[d]).collect();
        let mut yv = y.mul_vec(&v);
        let mut vv: f64 = v.iter().map(|x| x * x).sum();
        let mut lw: f64 = gray.digits().iter().map(|&d| log_w[d]).sum();
        let mut acc = LogSumExp::new();
        let mut idx = start;
        loop {
            let c = quad * vv;
            let term = lw + yv.iter().map(|&t| marginal.eval(scale * t, c)).sum::<f64>();
            acc.push(term);
            idx += 1;
            if idx >= end {
                break;
            }
            let step = gray.advance().expect("block ends before the code does");
            let (from, to) = (atoms[step.from], atoms[step.to]);
            let delta = to - from;
            for (t, &yij) in yv.iter_mut().zip(yt.row(step.coord)) {
                *t += delta * yij;
            }
            vv += to * to - from * from;
            lw += log_w[step.to] - log_w[step.from];
        }
        acc
    };

    let ranges = block_ranges(total, block);
    let parts: Vec<LogSumExp> = if ranges.len() > 4 {
        ranges.par_iter().map(run_block).collect()
    } else {
        ranges.iter().map(run_block).collect()
    };
    merge_blocks(&parts)
}

/// `Π_i (ep_i + em_i)` with four independent partial products.
#[inline]
fn cosh_product(ep: &[f64], em: &[f64]) -> f64 {
    let mut acc = [1.0f64; 4];
    let split = ep.len() / 4 * 4;
    for (a, b) in ep[..split].chunks_exact(4).zip(em[..split].chunks_exact(4)) {
        for k in 0..4 {
            acc[k] *= a[k] + b[k];
        }
    }
    let mut prod = (acc[0] * acc[1]) * (acc[2] * acc[3]);
    for (a, b) in ep[split..].iter().zip(&em[split..]) {
        prod *= a + b;
    }
    prod
}

/// Rademacher/Rademacher kernel: `log L = log Σ_v 2^{-M} Π_i cosh(s (Yv)_i) - βM/2`.
///
/// Works in linear space with `e^{±s(Yv)_i}` maintained multiplicatively, and pairs `v`
/// with `-v` so only configurations with `v_M = +1` are visited. Returns `None` when the
/// products could overflow.
fn rademacher_kernel(y: &Matrix, beta: f64, block: u64) -> Option<f64> {
    let n = y.rows();
    let m = y.cols();
    let scale = (beta / n as f64).sqrt();
    let bound = scale * y.as_slice().iter().map(|x| x.abs()).sum::<f64>()
        + n as f64 * std::f64::consts::LN_2
        + (block.max(1) as f64).ln();
    if bound > 700.0 {
        return None;
    }
    let free = m - 1;
    let yt = y.transpose();
    // down[j][i] = e^{-2 s Y_ij}: multiplies e^{a_i} when v_j flips from +1 to -1.
    let down: Vec<Vec<f64>> = (0..free)
        .map(|j| yt.row(j).iter().map(|&t| (-2.0 * scale * t).exp()).collect())
        .collect();
    let up: Vec<Vec<f64>> = down
        .iter()
        .map(|col| col.iter().map(|x| 1.0 / x).collect())
        .collect();
    let radices = vec![2usize; free];
    let total = MixedRadixGray::count(&radices);

    let run_block = |&(start, end): &(u64, u64)| -> LogSumExp {
        let mut gray = MixedRadixGray::starting_at(&radices, start);
        // digit 0 -> +1, digit 1 -> -1; the last coordinate is pinned at +1.
        let mut v: Vec<f64> = gray
            .digits()
            .iter()
            .map(|&d| if d == 0 { 1.0 } else { -1.0 })
            .collect();
        v.push(1.0);
        let a = y.mul_vec(&v);
        let mut ep: Vec<f64> = a.iter().map(|&t| (scale * t).exp()).collect();
        let mut em: Vec<f64> = a.iter().map(|&t| (-scale * t).exp()).collect();
        let mut sum = 0.0;
        let mut idx = start;
        loop {
            sum += cosh_product(&ep, &em);
            idx += 1;
            if idx >= end {
                break;
            }
            let step = gray.advance().expect("block ends before the code does");
            let (fp, fm) = if step.to == 1 {
                (&down[step.coord], &up[step.coord])
            } else {
                (&up[step.coord], &down[step.coord])
            };
            for (e, f) in ep.iter_mut().zip(fp.iter()) {
                *e *= f;
            }
            for (e, f) in em.iter_mut().zip(fm.iter()) {
                *e *= f;
            }
        }
        let mut acc = LogSumExp::new();
        acc.push(sum.ln());
        acc
    };

    let ranges = block_ranges(total, block);
    let parts: Vec<LogSumExp> = if ranges.len() > 4 {
        ranges.par_iter().map(run_block).collect()
    } else {
        ranges.iter().map(run_block).collect()
    };
    let ln2 = std::f64::consts::LN_2;
    Some(merge_blocks(&parts) + ln2 - m as f64 * ln2 - n as f64 * ln2 - beta * m as f64 / 2.0)
}

// ---------------------------------------------------------------------------
// Exact Gibbs averages.

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    U,
    V,
}

/// A replica label: `Index(l)` for the l-th posterior draw (1-based), or the planted spike.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Replica {
    Index(u8),
    Star,
}

/// `R^side_{a,b}`, normalized by N on both sides.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Overlap {
    pub side: Side,
    pub a: Replica,
    pub b: Replica,
}

/// Product of overlap factors; the empty product is the constant 1.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Observable {
    pub factors: Vec<Overlap>,
}

impl Observable {
    pub fn constant() -> Self {
        Observable { factors: Vec::new() }
    }

    pub fn overlap(side: Side, a: Replica, b: Replica) -> Self {
        Observable {
            factors: vec![Overlap { side, a, b }],
        }
    }

    /// `R^side_{1,2}`.
    pub fn replica_pair(side: Side) -> Self {
        Self::overlap(side, Replica::Index(1), Replica::Index(2))
    }

    /// `R^side_{1,*}`.
    pub fn with_spike(side: Side) -> Self {
        Self::overlap(side, Replica::Index(1), Replica::Star)
    }

    pub fn pow(&self, p: usize) -> Self {
        Observable {
            factors: (0..p).flat_map(|_| self.factors.iter().copied()).collect(),
        }
    }

    pub fn times(&self, other: &Observable) -> Self {
        Observable {
            factors: self.factors.iter().chain(&other.factors).copied().collect(),
        }
    }

    pub fn uses_star(&self) -> bool {
        self.factors
            .iter()
            .any(|f| f.a == Replica::Star || f.b == Replica::Star)
    }

    /// Largest replica index referenced (0 if none).
    pub fn max_replica(&self) -> u8 {
        self.factors
            .iter()
            .flat_map(|f| [f.a, f.b])
            .filter_map(|r| match r {
                Replica::Index(l) => Some(l),
                Replica::Star => None,
            })
            .max()
            .unwrap_or(0)
    }

    pub fn label(&self) -> String {
        if self.factors.is_empty() {
            return "1".into();
        }
        let name = |r: Replica| match r {
            Replica::Index(l) => l.to_string(),
            Replica::Star => "*".into(),
        };
        self.factors
            .iter()
            .map(|f| {
                let s = match f.side {
                    Side::U => "u",
                    Side::V => "v",
                };
                format!("R^{s}_{{{},{}}}", name(f.a), name(f.b))
            })
            .collect::<Vec<_>>()
            .join("·")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExactGibbs {
    pub observable: String,
    pub value: f64,
    pub n_replicas: usize,
}

type Coord = (Side, usize);

/// The full posterior of `(u, v)` given `Y`, tabulated over all joint configurations.
#[derive(Debug, Clone)]
pub struct ExactPosterior {
    n: usize,
    u_configs: Vec<Vec<f64>>,
    v_configs: Vec<Vec<f64>>,
    /// probs[cu * n_v + cv]
    probs: Vec<f64>,
    log_normalizer: f64,
    planted: Option<(Vec<f64>, Vec<f64>)>,
}

fn all_configs(prior: &Prior, len: usize) -> Vec<(Vec<f64>, f64)> {
    let atoms = prior.atoms();
    let log_w: Vec<f64> = prior.weights().iter().map(|w| w.ln()).collect();
    let radices = vec![atoms.len(); len];
    let mut gray = MixedRadixGray::new(&radices);
    let mut out = Vec::with_capacity(MixedRadixGray::count(&radices) as usize);
    loop {
        let d = gray.digits();
        out.push((
            d.iter().map(|&k| atoms[k]).collect(),
            d.iter().map(|&k| log_w[k]).sum(),
        ));
        if gray.advance().is_none() {
            break;
        }
    }
    out
}

impl ExactPosterior {
    pub fn new(
        instance: &Instance,
        beta: f64,
        prior_u: &Prior,
        prior_v: &Prior,
        n_replicas: usize,
        caps: &Caps,
    ) -> Result<Self> {
        prior_u.ensure_bounded()?;
        prior_v.ensure_bounded()?;
        let y = &instance.data;
        check_shapes(y)?;
        let (n, m) = (y.rows(), y.cols());
        let joint = (prior_u.n_atoms() as f64).powi(n as i32) * (prior_v.n_atoms() as f64).powi(m as i32);
        let needed = joint.powi(n_replicas.max(1) as i32);
        if needed > caps.max_joint_evaluations as f64 {
            return Err(Error::CapExceeded {
                needed,
                cap: caps.max_joint_evaluations,
            });
        }
        let us = all_configs(prior_u, n);
        let vs = all_configs(prior_v, m);
        let scale = (beta / n as f64).sqrt();
        let quad = beta / (2.0 * n as f64);
        let mut logw = Vec::with_capacity(us.len() * vs.len());
        let yv: Vec<(Vec<f64>, f64)> = vs
            .iter()
            .map(|(v, _)| (y.mul_vec(v), v.iter().map(|x| x * x).sum()))
            .collect();
        for (u, lu) in &us {
            let uu: f64 = u.iter().map(|x| x * x).sum();
            for ((_, lv), (yv, vv)) in vs.iter().zip(&yv) {
                let dot: f64 = u.iter().zip(yv).map(|(a, b)| a * b).sum();
                logw.push(lu + lv + scale * dot - quad * uu * vv);
            }
        }
        let mut acc = LogSumExp::new();
        logw.iter().for_each(|&x| acc.push(x));
        let log_normalizer = acc.value();
        let probs = logw.iter().map(|x| (x - log_normalizer).exp()).collect();
        Ok(ExactPosterior {
            n,
            u_configs: us.into_iter().map(|(u, _)| u).collect(),
            v_configs: vs.into_iter().map(|(v, _)| v).collect(),
            probs,
            log_normalizer,
            planted: instance.planted.as_ref().map(|p| (p.u.clone(), p.v.clone())),
        })
    }

    /// `log L(Y; β)` as a by-product of the joint normalization.
    pub fn log_normalizer(&self) -> f64 {
        self.log_normalizer
    }

    /// One exact posterior draw of `(u, v)`.
    pub fn sample<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> (Vec<f64>, Vec<f64>) {
        let nv = self.v_configs.len();
        let mut t: f64 = rng.random::<f64>() * self.probs.iter().sum::<f64>();
        let mut pick = self.probs.len() - 1;
        for (k, p) in self.probs.iter().enumerate() {
            if t < *p {
                pick = k;
                break;
            }
            t -= p;
        }
        (self.u_configs[pick / nv].clone(), self.v_configs[pick % nv].clone())
    }

    /// Posterior expectation of a product of coordinates of one replica.
    fn monomial(&self, coords: &[Coord]) -> f64 {
        let nv = self.v_configs.len();
        let mv: Vec<f64> = self
            .v_configs
            .iter()
            .map(|v| coords.iter().filter(|c| c.0 == Side::V).map(|c| v[c.1]).product())
            .collect();
        let mut total = 0.0;
        for (cu, u) in self.u_configs.iter().enumerate() {
            let mu: f64 = coords.iter().filter(|c| c.0 == Side::U).map(|c| u[c.1]).product();
            if mu == 0.0 {
                continue;
            }
            let row = &self.probs[cu * nv..(cu + 1) * nv];
            total += mu * row.iter().zip(&mv).map(|(p, x)| p * x).sum::<f64>();
        }
        total
    }

    pub fn expect(&self, observable: &Observable) -> Result<f64> {
        if observable.uses_star() && self.planted.is_none() {
            return Err(Error::StarOnNull);
        }
        if observable.factors.iter().flat_map(|f| [f.a, f.b]).any(|r| r == Replica::Index(0)) {
            return Err(Error::param("observable", "replica indices are 1-based"));
        }
        let f = observable.factors.len();
        if f == 0 {
            return Ok(self.probs.iter().sum());
        }
        let m = self.v_configs.first().map_or(0, Vec::len);
        let ranges: Vec<usize> = observable
            .factors
            .iter()
            .map(|o| match o.side {
                Side::U => self.n,
                Side::V => m,
            })
            .collect();
        let mut memo: HashMap<Vec<Coord>, f64> = HashMap::new();
        let mut idx = vec![0usize; f];
        let mut total = 0.0;
        let mut per_replica: Vec<(Replica, Vec<Coord>)> = Vec::new();
        'outer: loop {
            per_replica.clear();
            for (k, o) in observable.factors.iter().enumerate() {
                for r in [o.a, o.b] {
                    let coord = (o.side, idx[k]);
                    match per_replica.iter_mut().find(|(rr, _)| *rr == r) {
                        Some((_, cs)) => cs.push(coord),
                        None => per_replica.push((r, vec![coord])),
                    }
                }
            }
            let mut term = 1.0;
            for (r, coords) in per_replica.iter_mut() {
                let value = match r {
                    Replica::Star => {
                        let (u, v) = self.planted.as_ref().expect("checked above");
                        coords
                            .iter()
                            .map(|&(s, i)| if s == Side::U { u[i] } else { v[i] })
                            .product()
                    }
                    Replica::Index(_) => {
                        coords.sort();
                        match memo.get(coords.as_slice()) {
                            Some(&x) => x,
                            None => {
                                let x = self.monomial(coords);
                                memo.insert(coords.clone(), x);
                                x
                            }
                        }
                    }
                };
                term *= value;
                if term == 0.0 {
                    break;
                }
            }
            total += term;
            // next index tuple
            for k in 0..f {
                idx[k] += 1;
                if idx[k] < ranges[k] {
                    continue 'outer;
                }
                idx[k] = 0;
            }
            break;
        }
        Ok(total / (self.n as f64).powi(f as i32))
    }
}

/// Exact posterior expectation of an overlap observable over `n_replicas` i.i.d. replicas.
pub fn exact_gibbs(
    instance: &Instance,
    beta: f64,
    prior_u: &Prior,
    prior_v: &Prior,
    observable: &Observable,
    n_replicas: usize,
) -> Result<ExactGibbs> {
    if (observable.max_replica() as usize) > n_replicas {
        return Err(Error::param(
            "n_replicas",
            format!("observable uses replica {} but only {n_replicas} requested", observable.max_replica()),
        ));
    }
    if observable.uses_star() && instance.planted.is_none() {
        return Err(Error::StarOnNull);
    }
    let post = ExactPosterior::new(instance, beta, prior_u, prior_v, n_replicas, &Caps::default())?;
    Ok(ExactGibbs {
        observable: observable.label(),
        value: post.expect(observable)?,
        n_replicas,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{generate_null, generate_spiked, ModelParams};

    /// Brute force over every joint (u, v) configuration, independent of the kernels above.
    fn brute_log_lr(y: &Matrix, beta: f64, pu: &Prior, pv: &Prior) -> f64 {
        let (n, m) = (y.rows(), y.cols());
        let ku = pu.n_atoms();
        let kv = pv.n_atoms();
        let mut terms = Vec::new();
        for cu in 0..ku.pow(n as u32) {
            for cv in 0..kv.pow(m as u32) {
                let mut lw = 0.0;
                let mut u = vec![0.0; n];
                let mut v = vec![0.0; m];
                let mut r = cu;
                for x in u.iter_mut() {
                    *x = pu.atoms()[r % ku];
                    lw += pu.weights()[r % ku].ln();
                    r /= ku;
                }
                let mut r = cv;
                for x in v.iter_mut() {
                    *x = pv.atoms()[r % kv];
                    lw += pv.weights()[r % kv].ln();
                    r /= kv;
                }
                let mut h = 0.0;
                for i in 0..n {
                    for j in 0..m {
                        h += (beta / n as f64).sqrt() * y.get(i, j) * u[i] * v[j]
                            - beta / (2.0 * n as f64) * u[i] * u[i] * v[j] * v[j];
                    }
                }
                terms.push(lw + h);
            }
        }
        let max = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln()
    }

    #[test]
    fn u_marginal_closed_forms() {
        let r = Prior::rademacher();
        for (a, c) in [(0.3, 0.1), (-2.0, 0.5), (7.0, 0.0)] {
            let expect = -c + f64::cosh(a).ln();
            assert!((u_marginal_log(a, c, &r) - expect).abs() < 1e-13);
        }
        let s = Prior::sparse_rademacher(0.04).unwrap();
        for (a, c) in [(0.3f64, 0.01f64), (-0.2, 0.05), (0.0, 0.0)] {
            let expect = (0.96 + 0.04 * (-25.0 * c).exp() * (5.0 * a).cosh()).ln();
            assert!((u_marginal_log(a, c, &s) - expect).abs() < 1e-13);
        }
        let custom = Prior::standardize(&[-2.0, 1.0], &[1.0, 2.0]).unwrap();
        assert!(u_marginal_log(0.0, 0.0, &custom).abs() < 1e-15);
    }

    #[test]
    fn zero_beta_is_exactly_zero() {
        let y = generate_null(&ModelParams::new(3, 4, 0.0).unwrap(), 1).data;
        let r = Prior::rademacher();
        assert_eq!(exact_log_lr(&y, 0.0, &r, &r).unwrap().value, 0.0);
    }

    #[test]
    fn one_by_one_closed_form() {
        let r = Prior::rademacher();
        for (yv, beta) in [(0.7f64, 0.25f64), (-1.3, 1.0), (2.0, 4.0)] {
            let y = Matrix::from_rows(&[vec![yv]]).unwrap();
            let expect = -beta / 2.0 + (beta.sqrt() * yv).cosh().ln();
            let got = exact_log_lr(&y, beta, &r, &r).unwrap();
            assert!((got.value - expect).abs() < 1e-13, "{} vs {expect}", got.value);
            assert_eq!(got.n_v_configs, 2);
        }
    }

    #[test]
    fn matches_brute_force_for_mixed_priors() {
        let priors = [
            Prior::rademacher(),
            Prior::sparse_rademacher(0.3).unwrap(),
            Prior::standardize(&[-2.0, 1.0, 0.5], &[0.2, 0.5, 0.3]).unwrap(),
        ];
        let mut seed = 0;
        for pu in &priors {
            for pv in &priors {
                for (n, m) in [(2, 3), (3, 2), (1, 4)] {
                    seed += 1;
                    let y = generate_null(&ModelParams::new(n, m, 0.0).unwrap(), seed).data;
                    let beta = 0.8;
                    let expect = brute_log_lr(&y, beta, pu, pv);
                    let got = exact_log_lr(&y, beta, pu, pv).unwrap().value;
                    assert!((got - expect).abs() < 1e-10, "{got} vs {expect}");
                }
            }
        }
    }

    #[test]
    fn fast_kernel_agrees_with_general_kernel() {
        let r = Prior::rademacher();
        for seed in 0..10 {
            let inst = generate_spiked(&ModelParams::new(6, 9, 0.9).unwrap(), &r, &r, seed).unwrap();
            let fast = exact_log_lr(&inst.data, 0.9, &r, &r).unwrap().value;
            let opts = ExactOptions {
                fast_path: false,
                ..Default::default()
            };
            let slow = exact_log_lr_with(&inst.data, 0.9, &r, &r, &opts).unwrap().value;
            assert!((fast - slow).abs() < 1e-10, "{fast} vs {slow}");
        }
    }

    #[test]
    fn block_partition_does_not_matter() {
        let r = Prior::rademacher();
        let s = Prior::sparse_rademacher(0.5).unwrap();
        let y = generate_null(&ModelParams::new(5, 12, 0.0).unwrap(), 3).data;
        for (pu, pv) in [(&r, &r), (&s, &r), (&r, &s)] {
            let values: Vec<f64> = [1u64, 7, 64, 4096, 1 << 20]
                .iter()
                .map(|&b| {
                    let opts = ExactOptions {
                        block_size: b,
                        ..Default::default()
                    };
                    exact_log_lr_with(&y, 0.7, pu, pv, &opts).unwrap().value
                })
                .collect();
            for v in &values {
                assert!((v - values[0]).abs() < 1e-12, "{values:?}");
            }
        }
    }

    #[test]
    fn sign_flip_invariance_for_symmetric_priors() {
        let r = Prior::rademacher();
        let s = Prior::sparse_rademacher(0.2).unwrap();
        for seed in 0..5 {
            let y = generate_null(&ModelParams::new(4, 5, 0.0).unwrap(), seed).data;
            for pv in [&r, &s] {
                let a = exact_log_lr(&y, 0.6, &r, pv).unwrap().value;
                let b = exact_log_lr(&y.neg(), 0.6, &r, pv).unwrap().value;
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn cap_exceeded_is_an_error() {
        let y = Matrix::zeros(2, 30);
        let r = Prior::rademacher();
        assert!(matches!(
            exact_log_lr(&y, 1.0, &r, &r),
            Err(Error::CapExceeded { .. })
        ));
        let g = Prior::gaussian_rs_only();
        assert!(matches!(exact_log_lr(&Matrix::zeros(1, 1), 1.0, &g, &r), Err(Error::UnboundedPrior)));
    }

    #[test]
    fn gibbs_constant_is_one_and_normalizer_is_log_lr() {
        let r = Prior::rademacher();
        let s = Prior::sparse_rademacher(0.5).unwrap();
        let inst = generate_spiked(&ModelParams::new(3, 3, 0.7).unwrap(), &s, &r, 4).unwrap();
        let post = ExactPosterior::new(&inst, 0.7, &s, &r, 2, &Caps::default()).unwrap();
        assert!((post.expect(&Observable::constant()).unwrap() - 1.0).abs() < 1e-12);
        let lr = exact_log_lr(&inst.data, 0.7, &s, &r).unwrap().value;
        assert!((post.log_normalizer() - lr).abs() < 1e-10);
    }

    #[test]
    fn gibbs_one_by_one_uv_is_tanh() {
        let r = Prior::rademacher();
        let y = Matrix::from_rows(&[vec![0.8]]).unwrap();
        let inst = Instance::from_matrix(y);
        let beta: f64 = 1.7;
        // <u v> for one replica is R^u_{1,1} R^v_{1,1} only through squares, so use the
        // two-replica identity <R^u_{1,2} R^v_{1,2}> = <uv>^2 at N = M = 1.
        let obs = Observable::replica_pair(Side::U).times(&Observable::replica_pair(Side::V));
        let got = exact_gibbs(&inst, beta, &r, &r, &obs, 2).unwrap().value;
        let t = (beta.sqrt() * 0.8).tanh();
        assert!((got - t * t).abs() < 1e-13);
    }

    #[test]
    fn gibbs_zero_beta_overlap_vanishes() {
        let r = Prior::rademacher();
        let inst = generate_null(&ModelParams::new(3, 2, 0.0).unwrap(), 2);
        let got = exact_gibbs(&inst, 0.0, &r, &r, &Observable::replica_pair(Side::U), 2).unwrap();
        assert!(got.value.abs() < 1e-15);
    }

    #[test]
    fn gibbs_rejects_star_on_null_and_cap() {
        let r = Prior::rademacher();
        let inst = generate_null(&ModelParams::new(2, 2, 0.0).unwrap(), 2);
        assert!(matches!(
            exact_gibbs(&inst, 0.5, &r, &r, &Observable::with_spike(Side::U), 1),
            Err(Error::StarOnNull)
        ));
        let big = generate_null(&ModelParams::new(8, 8, 0.0).unwrap(), 2);
        assert!(matches!(
            exact_gibbs(&big, 0.5, &r, &r, &Observable::replica_pair(Side::U), 2),
            Err(Error::CapExceeded { .. })
        ));
        assert!(exact_gibbs(&inst, 0.5, &r, &r, &Observable::replica_pair(Side::U), 1).is_err());
    }

    #[test]
    fn gibbs_overlap_square_matches_pair_enumeration() {
        // Independent check: enumerate replica pairs directly.
        let r = Prior::rademacher();
        let inst = generate_null(&ModelParams::new(2, 2, 0.0).unwrap(), 6);
        let beta = 1.3;
        let post = ExactPosterior::new(&inst, beta, &r, &r, 2, &Caps::default()).unwrap();
        let obs = Observable::replica_pair(Side::U).pow(2);
        let via_expand = post.expect(&obs).unwrap();

        let mut configs = Vec::new();
        for cu in 0..4 {
            for cv in 0..4 {
                let u = [if cu & 1 == 0 { 1.0 } else { -1.0 }, if cu & 2 == 0 { 1.0 } else { -1.0 }];
                let v = [if cv & 1 == 0 { 1.0 } else { -1.0 }, if cv & 2 == 0 { 1.0 } else { -1.0 }];
                let w = crate::model::neg_hamiltonian(&inst.data, beta, &u, &v).unwrap().exp();
                configs.push((u, w));
            }
        }
        let z: f64 = configs.iter().map(|c| c.1).sum();
        let mut direct = 0.0;
        for (u1, w1) in &configs {
            for (u2, w2) in &configs {
                let r12 = (u1[0] * u2[0] + u1[1] * u2[1]) / 2.0;
                direct += w1 * w2 / (z * z) * r12 * r12;
            }
        }
        assert!((via_expand - direct).abs() < 1e-13);
    }

    #[test]
    fn observable_labels() {
        let o = Observable::replica_pair(Side::U).times(&Observable::with_spike(Side::V));
        assert_eq!(o.label(), "R^u_{1,2}·R^v_{1,*}");
        assert!(o.uses_star());
        assert_eq!(o.max_replica(), 2);
        assert_eq!(Observable::constant().label(), "1");
    }
}
