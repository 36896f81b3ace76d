//! Single-site Gibbs sampling of the posterior of `(u, v)` given `Y`.
//!
//! Each replica is an independent chain on the same data matrix. The sampler caches
//! `Yv` and `Yᵀu` and updates them with one row or column axpy whenever a coordinate
//! changes value.

use std::collections::BTreeMap;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Instance, Matrix};
use crate::prior::Prior;
use crate::rng::{derive_seed, stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ScanOrder {
    #[default]
    Systematic,
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainConfig {
    pub n_replicas: usize,
    pub n_sweeps: usize,
    pub burn_in: usize,
    pub thinning: usize,
    pub seed: u64,
    #[serde(default)]
    pub scan: ScanOrder,
}

impl Default for ChainConfig {
    fn default() -> Self {
        ChainConfig {
            n_replicas: 2,
            n_sweeps: 4000,
            burn_in: 1000,
            thinning: 10,
            seed: 0,
            scan: ScanOrder::Systematic,
        }
    }
}

impl ChainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_replicas < 2 {
            return Err(Error::param("mcmc.replicas", "need at least 2 replicas"));
        }
        if self.burn_in >= self.n_sweeps {
            return Err(Error::param(
                "mcmc.sweeps",
                format!("burn_in ({}) must be below n_sweeps ({})", self.burn_in, self.n_sweeps),
            ));
        }
        if self.thinning == 0 {
            return Err(Error::param("mcmc.thinning", "thinning must be at least 1"));
        }
        Ok(())
    }

    pub fn n_records(&self) -> usize {
        (self.n_sweeps - self.burn_in) / self.thinning
    }
}

/// Normalized single-site conditional `∝ w_k exp(field·x_k - quad·x_k²)`.
pub fn site_conditional(field: f64, quad: f64, prior: &Prior) -> Vec<f64> {
    let mut out = Vec::new();
    SiteTable::new(prior).conditional(field, quad, &mut out);
    out
}

#[derive(Debug, Clone)]
struct SiteTable {
    atoms: Vec<f64>,
    sq: Vec<f64>,
    log_w: Vec<f64>,
}

impl SiteTable {
    fn new(prior: &Prior) -> Self {
        SiteTable {
            atoms: prior.atoms().to_vec(),
            sq: prior.atoms().iter().map(|a| a * a).collect(),
            log_w: prior.weights().iter().map(|w| w.ln()).collect(),
        }
    }

    fn conditional(&self, field: f64, quad: f64, out: &mut Vec<f64>) {
        out.clear();
        out.extend((0..self.atoms.len()).map(|k| self.log_w[k] + field * self.atoms[k] - quad * self.sq[k]));
        let max = out.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for x in out.iter_mut() {
            *x = (*x - max).exp();
            total += *x;
        }
        for x in out.iter_mut() {
            *x /= total;
        }
    }

    fn draw<R: Rng + ?Sized>(&self, field: f64, quad: f64, buf: &mut Vec<f64>, rng: &mut R) -> f64 {
        self.conditional(field, quad, buf);
        let mut u: f64 = rng.random();
        for (k, p) in buf.iter().enumerate() {
            if u < *p {
                return self.atoms[k];
            }
            u -= p;
        }
        *self.atoms.last().expect("nonempty prior")
    }
}

/// One replica's configuration plus the cached fields `Yv`, `Yᵀu` and squared norms.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicaState {
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    yv: Vec<f64>,
    ytu: Vec<f64>,
    uu: f64,
    vv: f64,
}

impl ReplicaState {
    pub fn new(y: &Matrix, u: Vec<f64>, v: Vec<f64>) -> Result<Self> {
        if u.len() != y.rows() || v.len() != y.cols() {
            return Err(Error::DimensionMismatch(format!(
                "state ({}, {}) vs matrix {}x{}",
                u.len(),
                v.len(),
                y.rows(),
                y.cols()
            )));
        }
        Ok(ReplicaState {
            yv: y.mul_vec(&v),
            ytu: y.mul_t_vec(&u),
            uu: u.iter().map(|x| x * x).sum(),
            vv: v.iter().map(|x| x * x).sum(),
            u,
            v,
        })
    }

    pub fn from_prior<R: Rng + ?Sized>(y: &Matrix, pu: &Prior, pv: &Prior, rng: &mut R) -> Result<Self> {
        let u = pu.sample(y.rows(), rng)?;
        let v = pv.sample(y.cols(), rng)?;
        Self::new(y, u, v)
    }
}

/// Reusable sweep machinery for one data matrix.
pub struct Sampler<'a> {
    y: &'a Matrix,
    yt: Matrix,
    scale: f64,
    quad: f64,
    su: SiteTable,
    sv: SiteTable,
    scan: ScanOrder,
}

impl<'a> Sampler<'a> {
    pub fn new(y: &'a Matrix, beta: f64, pu: &Prior, pv: &Prior, scan: ScanOrder) -> Result<Self> {
        pu.ensure_bounded()?;
        pv.ensure_bounded()?;
        let n = y.rows() as f64;
        Ok(Sampler {
            y,
            yt: y.transpose(),
            scale: (beta / n).sqrt(),
            quad: beta / (2.0 * n),
            su: SiteTable::new(pu),
            sv: SiteTable::new(pv),
            scan,
        })
    }

    fn update_u<R: Rng + ?Sized>(&self, s: &mut ReplicaState, i: usize, buf: &mut Vec<f64>, rng: &mut R) {
        let x = self.su.draw(self.scale * s.yv[i], self.quad * s.vv, buf, rng);
        let old = s.u[i];
        if x != old {
            let d = x - old;
            for (t, yij) in s.ytu.iter_mut().zip(self.y.row(i)) {
                *t += d * yij;
            }
            s.uu += x * x - old * old;
            s.u[i] = x;
        }
    }

    fn update_v<R: Rng + ?Sized>(&self, s: &mut ReplicaState, j: usize, buf: &mut Vec<f64>, rng: &mut R) {
        let x = self.sv.draw(self.scale * s.ytu[j], self.quad * s.uu, buf, rng);
        let old = s.v[j];
        if x != old {
            let d = x - old;
            for (t, yij) in s.yv.iter_mut().zip(self.yt.row(j)) {
                *t += d * yij;
            }
            s.vv += x * x - old * old;
            s.v[j] = x;
        }
    }

    /// One sweep: every `u_i` then every `v_j` (systematic), or N + M uniformly chosen sites.
    pub fn sweep<R: Rng + ?Sized>(&self, s: &mut ReplicaState, rng: &mut R) {
        let mut buf = Vec::with_capacity(4);
        let (n, m) = (self.y.rows(), self.y.cols());
        match self.scan {
            ScanOrder::Systematic => {
                for i in 0..n {
                    self.update_u(s, i, &mut buf, rng);
                }
                for j in 0..m {
                    self.update_v(s, j, &mut buf, rng);
                }
            }
            ScanOrder::Random => {
                for _ in 0..n + m {
                    let k = rng.random_range(0..n + m);
                    if k < n {
                        self.update_u(s, k, &mut buf, rng);
                    } else {
                        self.update_v(s, k - n, &mut buf, rng);
                    }
                }
            }
        }
    }
}

/// Applies one sweep to `state` in place.
pub fn gibbs_sweep<R: Rng + ?Sized>(
    state: &mut ReplicaState,
    instance: &Instance,
    beta: f64,
    pu: &Prior,
    pv: &Prior,
    scan: ScanOrder,
    rng: &mut R,
) -> Result<()> {
    if state.u.len() != instance.n_rows() || state.v.len() != instance.n_cols() {
        return Err(Error::DimensionMismatch("state does not match instance".into()));
    }
    Sampler::new(&instance.data, beta, pu, pv, scan)?.sweep(state, rng);
    Ok(())
}

// ---------------------------------------------------------------------------
// Overlap statistics.

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum McObservable {
    #[serde(rename = "R^u_{1,2}")]
    Ru12,
    #[serde(rename = "R^v_{1,2}")]
    Rv12,
    #[serde(rename = "R^u_{1,*}")]
    Ru1Star,
    #[serde(rename = "R^v_{1,*}")]
    Rv1Star,
    #[serde(rename = "(R^u_{1,2})^2")]
    Ru12Sq,
    #[serde(rename = "(R^v_{1,2})^2")]
    Rv12Sq,
    #[serde(rename = "(R^u_{1,2})^4")]
    Ru12Pow4,
    #[serde(rename = "(R^v_{1,2})^4")]
    Rv12Pow4,
    #[serde(rename = "R^u_{1,2}·R^v_{1,2}")]
    Ru12Rv12,
    #[serde(rename = "(R^u_{1,*})^2")]
    Ru1StarSq,
    #[serde(rename = "(R^v_{1,*})^2")]
    Rv1StarSq,
    #[serde(rename = "R^u_{1,*}·R^v_{1,*}")]
    Ru1StarRv1Star,
}

impl McObservable {
    pub const REPLICA: [McObservable; 7] = [
        McObservable::Ru12,
        McObservable::Rv12,
        McObservable::Ru12Sq,
        McObservable::Rv12Sq,
        McObservable::Ru12Pow4,
        McObservable::Rv12Pow4,
        McObservable::Ru12Rv12,
    ];
    pub const STAR: [McObservable; 5] = [
        McObservable::Ru1Star,
        McObservable::Rv1Star,
        McObservable::Ru1StarSq,
        McObservable::Rv1StarSq,
        McObservable::Ru1StarRv1Star,
    ];

    fn of_pair(self, ru: f64, rv: f64) -> f64 {
        match self {
            McObservable::Ru12 | McObservable::Ru1Star => ru,
            McObservable::Rv12 | McObservable::Rv1Star => rv,
            McObservable::Ru12Sq | McObservable::Ru1StarSq => ru * ru,
            McObservable::Rv12Sq | McObservable::Rv1StarSq => rv * rv,
            McObservable::Ru12Pow4 => ru.powi(4),
            McObservable::Rv12Pow4 => rv.powi(4),
            McObservable::Ru12Rv12 | McObservable::Ru1StarRv1Star => ru * rv,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObservableStat {
    pub mean: f64,
    pub variance: f64,
    pub standard_error: f64,
    pub n_effective: f64,
    pub unreliable: bool,
}

pub const N_BATCHES: usize = 30;
pub const MIN_EFFECTIVE: f64 = 50.0;

/// Mean, variance and batch-means standard error of a time series.
pub fn batch_means(series: &[f64]) -> ObservableStat {
    let n = series.len();
    if n == 0 {
        return ObservableStat {
            mean: f64::NAN,
            variance: f64::NAN,
            standard_error: f64::NAN,
            n_effective: 0.0,
            unreliable: true,
        };
    }
    let mean = series.iter().sum::<f64>() / n as f64;
    let variance = if n > 1 {
        series.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64
    } else {
        0.0
    };
    let batches = N_BATCHES.min(n);
    let means: Vec<f64> = (0..batches)
        .map(|b| {
            let lo = b * n / batches;
            let hi = (b + 1) * n / batches;
            series[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
        })
        .collect();
    let standard_error = if batches > 1 {
        let bm = means.iter().sum::<f64>() / batches as f64;
        let bv = means.iter().map(|x| (x - bm).powi(2)).sum::<f64>() / (batches - 1) as f64;
        (bv / batches as f64).sqrt()
    } else {
        f64::INFINITY
    };
    let n_effective = if standard_error > 0.0 {
        (variance / (standard_error * standard_error)).min(n as f64)
    } else {
        n as f64
    };
    ObservableStat {
        mean,
        variance,
        standard_error,
        n_effective,
        unreliable: n_effective < MIN_EFFECTIVE,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlapStats {
    pub config: ChainConfig,
    pub beta: f64,
    pub n: usize,
    pub m: usize,
    pub n_records: usize,
    pub records: BTreeMap<McObservable, ObservableStat>,
    pub reliable: bool,
}

impl OverlapStats {
    pub fn get(&self, obs: McObservable) -> Option<&ObservableStat> {
        self.records.get(&obs)
    }

    pub fn mean(&self, obs: McObservable) -> f64 {
        self.records.get(&obs).map_or(f64::NAN, |s| s.mean)
    }
}

/// Runs `cfg.n_replicas` independent chains on `instance` and summarizes overlap observables.
pub fn estimate_overlaps(
    instance: &Instance,
    beta: f64,
    pu: &Prior,
    pv: &Prior,
    cfg: &ChainConfig,
) -> Result<OverlapStats> {
    cfg.validate()?;
    let y = &instance.data;
    let sampler = Sampler::new(y, beta, pu, pv, cfg.scan)?;
    let (n, m) = (y.rows(), y.cols());

    let snapshots: Vec<Vec<(Vec<f64>, Vec<f64>)>> = (0..cfg.n_replicas)
        .into_par_iter()
        .map(|r| -> Result<Vec<(Vec<f64>, Vec<f64>)>> {
            let mut rng = stream(derive_seed(cfg.seed, &[r as u64]));
            let mut state = ReplicaState::from_prior(y, pu, pv, &mut rng)?;
            let mut out = Vec::with_capacity(cfg.n_records());
            for t in 1..=cfg.n_sweeps {
                sampler.sweep(&mut state, &mut rng);
                if t > cfg.burn_in && (t - cfg.burn_in).is_multiple_of(cfg.thinning) {
                    out.push((state.u.clone(), state.v.clone()));
                }
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;

    let records_len = snapshots[0].len();
    let nf = n as f64;
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / nf;
    let ku2 = pu.support_radius().powi(2);
    let kv2 = pv.support_radius().powi(2) * m as f64 / nf;

    let mut series: BTreeMap<McObservable, Vec<f64>> = BTreeMap::new();
    let n_pairs = (cfg.n_replicas * (cfg.n_replicas - 1) / 2) as f64;
    for t in 0..records_len {
        let mut pair_acc = [0.0; 7];
        for a in 0..cfg.n_replicas {
            for b in a + 1..cfg.n_replicas {
                let ru = dot(&snapshots[a][t].0, &snapshots[b][t].0);
                let rv = dot(&snapshots[a][t].1, &snapshots[b][t].1);
                debug_assert!(ru.abs() <= ku2 + 1e-9 && rv.abs() <= kv2 + 1e-9);
                for (acc, obs) in pair_acc.iter_mut().zip(McObservable::REPLICA) {
                    *acc += obs.of_pair(ru, rv);
                }
            }
        }
        for (acc, obs) in pair_acc.iter().zip(McObservable::REPLICA) {
            series.entry(obs).or_default().push(acc / n_pairs);
        }
        if let Some(p) = &instance.planted {
            let mut star_acc = [0.0; 5];
            for snap in &snapshots {
                let ru = dot(&snap[t].0, &p.u);
                let rv = dot(&snap[t].1, &p.v);
                for (acc, obs) in star_acc.iter_mut().zip(McObservable::STAR) {
                    *acc += obs.of_pair(ru, rv);
                }
            }
            for (acc, obs) in star_acc.iter().zip(McObservable::STAR) {
                series.entry(obs).or_default().push(acc / cfg.n_replicas as f64);
            }
        }
    }
    let records: BTreeMap<McObservable, ObservableStat> =
        series.iter().map(|(k, s)| (*k, batch_means(s))).collect();
    let reliable = records.values().all(|s| !s.unreliable);
    Ok(OverlapStats {
        config: *cfg,
        beta,
        n,
        m,
        n_records: records_len,
        records,
        reliable,
    })
}
