//! End-to-end experiments: sampling, summaries against the predictions, and report files.
//!
//! Every instance seed is derived from the master seed and the instance coordinates, and
//! parallel results are collected in index order, so reports depend only on the config.

use std::path::Path;
use std::time::Instant;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{Engine, ExperimentConfig};
use crate::error::{Error, Result};
use crate::exact::{exact_log_lr, Caps, ExactPosterior, Observable, Side};
use crate::mcmc::{estimate_overlaps, McObservable};
use crate::model::{generate_null, generate_spiked, Hypothesis, ModelParams, SpikeParts};
use crate::predict::{self, EcdfSummary, LrAsymptotics, NormalRef};
use crate::prior::Prior;
use crate::rng::{derive_seed, stream};
use crate::spectral::{bulk_edge, calibrate_buffer, spectral_detect};

pub const SCHEMA_VERSION: u32 = 1;

/// Where a parameter point sits relative to the proven fluctuation region and the
/// spectral threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    Proven,
    BeyondProvenBelowBbp,
    AboveBbp,
}

pub fn regime(alpha: f64, beta: f64, pu: &Prior, pv: &Prior) -> Regime {
    let g = alpha * beta * beta;
    let k = pu.support_radius().powi(4) * pv.support_radius().powi(4);
    if g * k < 1.0 {
        Regime::Proven
    } else if g < 1.0 {
        Regime::BeyondProvenBelowBbp
    } else {
        Regime::AboveBbp
    }
}

/// Runs `f` on a pool with the configured number of workers.
pub fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        None => Ok(f()),
        Some(k) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(k)
                .build()
                .map_err(|e| Error::param("threads", e.to_string()))?;
            Ok(pool.install(f))
        }
    }
}

fn hyp_tag(h: Hypothesis) -> u64 {
    match h {
        Hypothesis::Null => 0,
        Hypothesis::Spiked => 1,
    }
}

/// Seed of instance `index` for the given size and hypothesis.
pub fn instance_seed(master: u64, n: usize, m: usize, h: Hypothesis, index: usize) -> u64 {
    derive_seed(master, &[n as u64, m as u64, hyp_tag(h), index as u64])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub sample_index: usize,
    pub seed: u64,
    pub log_lr: f64,
}

fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Exact `log L` for `count` instances of one hypothesis.
pub fn draw_log_lr_samples(
    cfg: &ExperimentConfig,
    n: usize,
    m: usize,
    hypothesis: Hypothesis,
    count: usize,
) -> Result<Vec<SampleRecord>> {
    if cfg.engine != Engine::Exact {
        return Err(Error::param("engine", "log-likelihood ratios are computed with the exact engine only"));
    }
    let (pu, pv) = cfg.priors()?;
    let params = ModelParams::new(n, m, cfg.beta)?;
    (0..count)
        .into_par_iter()
        .map(|k| {
            let seed = instance_seed(cfg.seed, n, m, hypothesis, k);
            let inst = match hypothesis {
                Hypothesis::Null => generate_null(&params, seed),
                Hypothesis::Spiked => generate_spiked(&params, &pu, &pv, seed)?,
            };
            let lr = exact_log_lr(&inst.data, cfg.beta, &pu, &pv)?;
            Ok(SampleRecord {
                sample_index: k,
                seed,
                log_lr: lr.value,
            })
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Fluctuations, test error and KL.

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisReport {
    pub hypothesis: Hypothesis,
    pub summary: EcdfSummary,
    pub samples: Vec<SampleRecord>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CharFnPoint {
    pub s: f64,
    pub empirical: Complex64,
    pub predicted: Option<Complex64>,
    pub distance: Option<f64>,
    /// Monte Carlo standard error of the empirical value (modulus scale).
    pub standard_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestErrorRecord {
    pub n: usize,
    pub m: usize,
    pub type_i: f64,
    pub type_ii: f64,
    pub se_type_i: f64,
    pub se_type_ii: f64,
    pub empirical_err: f64,
    pub se_err: f64,
    pub predicted_err: Option<f64>,
    pub tie_convention: String,
}

pub const TIE_NOTE: &str = "log L = 0 accepts the null";

/// Type-I: null samples with `log L > 0`. Type-II: spiked samples with `log L ≤ 0`.
pub fn test_error_from_samples(n: usize, m: usize, null: &[f64], alt: &[f64], predicted: Option<f64>) -> TestErrorRecord {
    let rate = |xs: &[f64], f: &dyn Fn(f64) -> bool| {
        let p = xs.iter().filter(|&&x| f(x)).count() as f64 / xs.len() as f64;
        (p, (p * (1.0 - p) / xs.len() as f64).sqrt())
    };
    let (t1, s1) = rate(null, &|x| x > 0.0);
    let (t2, s2) = rate(alt, &|x| x <= 0.0);
    TestErrorRecord {
        n,
        m,
        type_i: t1,
        type_ii: t2,
        se_type_i: s1,
        se_type_ii: s2,
        empirical_err: t1 + t2,
        se_err: (s1 * s1 + s2 * s2).sqrt(),
        predicted_err: predicted,
        tie_convention: TIE_NOTE.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizeFluctuations {
    pub n: usize,
    pub m: usize,
    pub null: HypothesisReport,
    pub alt: HypothesisReport,
    /// Empirical characteristic function of `log L` under the spiked model.
    pub char_fn: Vec<CharFnPoint>,
    pub test_error: TestErrorRecord,
    /// `|mean_null + mean_alt|` and its standard error.
    pub sign_gap: f64,
    pub sign_gap_se: f64,
    /// Loose variance bound `β N α K_u² K_v²` for the null.
    pub poincare_bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FluctuationReport {
    pub schema_version: u32,
    pub config: ExperimentConfig,
    pub regime: Regime,
    pub predicted: LrAsymptotics,
    pub sizes: Vec<SizeFluctuations>,
    pub runtime_seconds: f64,
}

fn reference(pred: &LrAsymptotics, h: Hypothesis, beta: f64) -> NormalRef {
    if beta == 0.0 {
        return NormalRef { mean: 0.0, variance: 0.0 };
    }
    NormalRef {
        mean: pred.mean(h),
        variance: pred.variance,
    }
}

pub fn fluctuation_experiment(cfg: &ExperimentConfig) -> Result<FluctuationReport> {
    cfg.validate()?;
    let start = Instant::now();
    let (pu, pv) = cfg.priors()?;
    let pred = predict::lr_asymptotics(cfg.alpha, cfg.beta);
    let sizes = with_threads(cfg.threads, || -> Result<Vec<SizeFluctuations>> {
        cfg.dims()
            .into_iter()
            .map(|(n, m)| {
                let null = draw_log_lr_samples(cfg, n, m, Hypothesis::Null, cfg.samples)?;
                let alt = draw_log_lr_samples(cfg, n, m, Hypothesis::Spiked, cfg.samples)?;
                let xs0: Vec<f64> = null.iter().map(|s| s.log_lr).collect();
                let xs1: Vec<f64> = alt.iter().map(|s| s.log_lr).collect();
                let s0 = predict::summarize(&xs0, reference(&pred, Hypothesis::Null, cfg.beta))?;
                let s1 = predict::summarize(&xs1, reference(&pred, Hypothesis::Spiked, cfg.beta))?;
                let char_fn = cfg
                    .s_grid
                    .iter()
                    .map(|&s| {
                        let emp = predict::empirical_char_fn(&xs1, s);
                        let pr = predict::char_fn(s, cfg.alpha, cfg.beta, Hypothesis::Spiked).ok();
                        CharFnPoint {
                            s,
                            empirical: emp,
                            predicted: pr,
                            distance: pr.map(|p| (emp - p).norm()),
                            standard_error: ((1.0 - emp.norm_sqr()).max(0.0) / xs1.len() as f64).sqrt(),
                        }
                    })
                    .collect();
                let test_error = test_error_from_samples(n, m, &xs0, &xs1, predict::optimal_error(cfg.alpha, cfg.beta).ok());
                Ok(SizeFluctuations {
                    n,
                    m,
                    sign_gap: (s0.mean + s1.mean).abs(),
                    sign_gap_se: (s0.se_mean.powi(2) + s1.se_mean.powi(2)).sqrt(),
                    poincare_bound: cfg.beta
                        * n as f64
                        * cfg.alpha
                        * pu.support_radius().powi(2)
                        * pv.support_radius().powi(2),
                    null: HypothesisReport {
                        hypothesis: Hypothesis::Null,
                        summary: s0,
                        samples: null,
                    },
                    alt: HypothesisReport {
                        hypothesis: Hypothesis::Spiked,
                        summary: s1,
                        samples: alt,
                    },
                    char_fn,
                    test_error,
                })
            })
            .collect()
    })??;
    Ok(FluctuationReport {
        schema_version: SCHEMA_VERSION,
        config: cfg.clone(),
        regime: regime(cfg.alpha, cfg.beta, &pu, &pv),
        predicted: pred,
        sizes,
        runtime_seconds: start.elapsed().as_secs_f64(),
    })
}

/// Samples CSV: `hypothesis,sample_index,N,M,beta,seed,log_lr`.
pub fn write_samples_csv(report: &FluctuationReport, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["hypothesis", "sample_index", "N", "M", "beta", "seed", "log_lr"])?;
    for size in &report.sizes {
        for h in [&size.null, &size.alt] {
            for s in &h.samples {
                w.write_record([
                    h.hypothesis.as_str().to_string(),
                    s.sample_index.to_string(),
                    size.n.to_string(),
                    size.m.to_string(),
                    format!("{:?}", report.config.beta),
                    s.seed.to_string(),
                    format!("{:?}", s.log_lr),
                ])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path)?;
    serde_json::to_writer_pretty(std::io::BufWriter::new(file), value)?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestErrorReport {
    pub schema_version: u32,
    pub config: ExperimentConfig,
    pub regime: Regime,
    pub records: Vec<TestErrorRecord>,
}

pub fn lr_test_error(cfg: &ExperimentConfig) -> Result<TestErrorReport> {
    cfg.validate()?;
    let (pu, pv) = cfg.priors()?;
    let records = with_threads(cfg.threads, || -> Result<Vec<TestErrorRecord>> {
        cfg.dims()
            .into_iter()
            .map(|(n, m)| {
                let null: Vec<f64> = draw_log_lr_samples(cfg, n, m, Hypothesis::Null, cfg.samples)?.iter().map(|s| s.log_lr).collect();
                let alt: Vec<f64> = draw_log_lr_samples(cfg, n, m, Hypothesis::Spiked, cfg.samples)?.iter().map(|s| s.log_lr).collect();
                Ok(test_error_from_samples(n, m, &null, &alt, predict::optimal_error(cfg.alpha, cfg.beta).ok()))
            })
            .collect()
    })??;
    Ok(TestErrorReport {
        schema_version: SCHEMA_VERSION,
        config: cfg.clone(),
        regime: regime(cfg.alpha, cfg.beta, &pu, &pv),
        records,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KlRecord {
    pub n: usize,
    pub m: usize,
    pub empirical_mean: f64,
    pub standard_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KlReport {
    pub schema_version: u32,
    pub config: ExperimentConfig,
    pub predicted: Option<f64>,
    pub records: Vec<KlRecord>,
}

/// Mean of `log L` under the spiked model, which estimates `KL(P_β ‖ P_0)`.
pub fn kl_experiment(cfg: &ExperimentConfig) -> Result<KlReport> {
    cfg.validate()?;
    let records = with_threads(cfg.threads, || -> Result<Vec<KlRecord>> {
        cfg.dims()
            .into_iter()
            .map(|(n, m)| {
                let alt: Vec<f64> = draw_log_lr_samples(cfg, n, m, Hypothesis::Spiked, cfg.samples)?.iter().map(|s| s.log_lr).collect();
                let (mean, se) = mean_se(&alt);
                Ok(KlRecord { n, m, empirical_mean: mean, standard_error: se })
            })
            .collect()
    })??;
    Ok(KlReport {
        schema_version: SCHEMA_VERSION,
        config: cfg.clone(),
        predicted: predict::kl_limit(cfg.alpha, cfg.beta).ok(),
        records,
    })
}

// ---------------------------------------------------------------------------
// Overlap identities.

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentPair {
    pub replica_label: String,
    pub star_label: String,
    pub replica_mean: f64,
    pub replica_se: f64,
    pub star_mean: f64,
    pub star_se: f64,
    pub difference: f64,
    /// `sqrt(se_replica² + se_star²)`.
    pub combined_se: f64,
    /// Standard error of the per-instance paired difference.
    pub paired_se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NishimoriReport {
    pub schema_version: u32,
    pub config: ExperimentConfig,
    pub n: usize,
    pub m: usize,
    pub instances: usize,
    pub pairs: Vec<MomentPair>,
}

fn nishimori_observables() -> Vec<(Observable, Observable)> {
    let ru = Observable::replica_pair(Side::U);
    let rv = Observable::replica_pair(Side::V);
    let su = Observable::with_spike(Side::U);
    let sv = Observable::with_spike(Side::V);
    vec![(ru.pow(2), su.pow(2)), (rv.pow(2), sv.pow(2)), (ru.times(&rv), su.times(&sv))]
}

fn pair_stats(labels: (String, String), a: &[f64], b: &[f64]) -> MomentPair {
    let (ma, sa) = mean_se(a);
    let (mb, sb) = mean_se(b);
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let (md, sd) = mean_se(&d);
    MomentPair {
        replica_label: labels.0,
        star_label: labels.1,
        replica_mean: ma,
        replica_se: sa,
        star_mean: mb,
        star_se: sb,
        difference: md,
        combined_se: (sa * sa + sb * sb).sqrt(),
        paired_se: sd,
    }
}

/// Replica-replica against replica-spike second moments over spiked instances at the
/// first configured size.
pub fn nishimori_check(cfg: &ExperimentConfig) -> Result<NishimoriReport> {
    cfg.validate()?;
    let (pu, pv) = cfg.priors()?;
    let (n, m) = cfg.dims()[0];
    let params = ModelParams::new(n, m, cfg.beta)?;
    let obs = nishimori_observables();
    let per_instance = with_threads(cfg.threads, || -> Result<Vec<Vec<(f64, f64)>>> {
        (0..cfg.samples)
            .into_par_iter()
            .map(|k| {
                let seed = instance_seed(cfg.seed, n, m, Hypothesis::Spiked, k);
                let inst = generate_spiked(&params, &pu, &pv, seed)?;
                match cfg.engine {
                    Engine::Exact => {
                        let post = ExactPosterior::new(&inst, cfg.beta, &pu, &pv, 2, &Caps::default())?;
                        obs.iter().map(|(a, b)| Ok((post.expect(a)?, post.expect(b)?))).collect()
                    }
                    Engine::Mcmc => {
                        let chain = cfg.mcmc.chain(derive_seed(seed, &[0x6d63]));
                        let st = estimate_overlaps(&inst, cfg.beta, &pu, &pv, &chain)?;
                        Ok(vec![
                            (st.mean(McObservable::Ru12Sq), st.mean(McObservable::Ru1StarSq)),
                            (st.mean(McObservable::Rv12Sq), st.mean(McObservable::Rv1StarSq)),
                            (st.mean(McObservable::Ru12Rv12), st.mean(McObservable::Ru1StarRv1Star)),
                        ])
                    }
                }
            })
            .collect()
    })??;
    let pairs = obs
        .iter()
        .enumerate()
        .map(|(j, (a, b))| {
            let xa: Vec<f64> = per_instance.iter().map(|r| r[j].0).collect();
            let xb: Vec<f64> = per_instance.iter().map(|r| r[j].1).collect();
            pair_stats((a.label(), b.label()), &xa, &xb)
        })
        .collect();
    Ok(NishimoriReport {
        schema_version: SCHEMA_VERSION,
        config: cfg.clone(),
        n,
        m,
        instances: cfg.samples,
        pairs,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivativeReport {
    pub schema_version: u32,
    pub config: ExperimentConfig,
    pub n: usize,
    pub m: usize,
    pub instances: usize,
    pub delta_beta: f64,
    pub fd_derivative: f64,
    pub fd_se: f64,
    pub overlap_rhs: f64,
    pub rhs_se: f64,
    pub gap: f64,
    pub combined_se: f64,
    pub paired_se: f64,
}

/// Finite difference of `E_{P_β} log L` in β against `(N/2) E⟨R^u_{1,2} R^v_{1,2}⟩`.
/// Noise and spike are shared across the shifted β values.
pub fn derivative_identity_check(cfg: &ExperimentConfig) -> Result<DerivativeReport> {
    cfg.validate()?;
    let (pu, pv) = cfg.priors()?;
    let (n, m) = cfg.dims()[0];
    let d = cfg.delta_beta;
    let (lo, hi) = if cfg.beta >= d { (cfg.beta - d, cfg.beta + d) } else { (cfg.beta, cfg.beta + d) };
    let obs = Observable::replica_pair(Side::U).times(&Observable::replica_pair(Side::V));
    let rows = with_threads(cfg.threads, || -> Result<Vec<(f64, f64)>> {
        (0..cfg.samples)
            .into_par_iter()
            .map(|k| {
                let seed = instance_seed(cfg.seed, n, m, Hypothesis::Spiked, k);
                let mut rng = stream(seed);
                let parts = SpikeParts::draw(n, m, &pu, &pv, &mut rng)?;
                let l_hi = exact_log_lr(&parts.assemble(hi, seed).data, hi, &pu, &pv)?.value;
                let l_lo = exact_log_lr(&parts.assemble(lo, seed).data, lo, &pu, &pv)?.value;
                let mid = parts.assemble(cfg.beta, seed);
                let post = ExactPosterior::new(&mid, cfg.beta, &pu, &pv, 2, &Caps::default())?;
                Ok(((l_hi - l_lo) / (hi - lo), 0.5 * n as f64 * post.expect(&obs)?))
            })
            .collect()
    })??;
    let fd: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let rhs: Vec<f64> = rows.iter().map(|r| r.1).collect();
    let p = pair_stats((String::new(), String::new()), &fd, &rhs);
    Ok(DerivativeReport {
        schema_version: SCHEMA_VERSION,
        config: cfg.clone(),
        n,
        m,
        instances: cfg.samples,
        delta_beta: d,
        fd_derivative: p.replica_mean,
        fd_se: p.replica_se,
        overlap_rhs: p.star_mean,
        rhs_se: p.star_se,
        gap: p.difference,
        combined_se: p.combined_se,
        paired_se: p.paired_se,
    })
}

// ---------------------------------------------------------------------------
// Overlap scaling with the sampler.

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub standard_error: f64,
}

impl Estimate {
    fn of(xs: &[f64]) -> Self {
        let (mean, standard_error) = mean_se(xs);
        Estimate { mean, standard_error }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlapSizeRecord {
    pub n: usize,
    pub m: usize,
    pub instances: usize,
    /// `N E⟨R^u_{1,2} R^v_{1,2}⟩`.
    pub n_ru_rv: Estimate,
    /// `N² E⟨(R^u_{1,2})⁴⟩`.
    pub n2_ru4: Estimate,
    /// `N² E⟨(R^v_{1,2})⁴⟩`.
    pub n2_rv4: Estimate,
    /// `E⟨(R^u_{1,2})²⟩`.
    pub ru2: Estimate,
    /// `E⟨(R^u_{1,*})²⟩`.
    pub ru_star2: Estimate,
    pub unreliable_chains: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationRecord {
    pub observable: String,
    pub mcmc_mean: f64,
    pub exact_mean: f64,
    pub standard_error: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlapScalingReport {
    pub schema_version: u32,
    pub config: ExperimentConfig,
    pub regime: Regime,
    pub theta: Option<f64>,
    pub validation: Vec<ValidationRecord>,
    pub validation_passed: bool,
    pub sizes: Vec<OverlapSizeRecord>,
}

pub const VALIDATION_SIZE: usize = 4;
pub const VALIDATION_INSTANCES: usize = 20;

/// Sampler against enumeration at `N = M = 4`, averaged over a few instances.
pub fn validate_sampler(cfg: &ExperimentConfig, pu: &Prior, pv: &Prior) -> Result<Vec<ValidationRecord>> {
    let nv = VALIDATION_SIZE;
    let params = ModelParams::new(nv, nv, cfg.beta)?;
    let checks = [
        (McObservable::Ru12Sq, Observable::replica_pair(Side::U).pow(2)),
        (McObservable::Rv12Sq, Observable::replica_pair(Side::V).pow(2)),
        (McObservable::Ru12Rv12, Observable::replica_pair(Side::U).times(&Observable::replica_pair(Side::V))),
    ];
    let rows = (0..VALIDATION_INSTANCES)
        .into_par_iter()
        .map(|k| -> Result<Vec<(f64, f64, f64)>> {
            let seed = derive_seed(cfg.seed, &[0x7661, k as u64]);
            let inst = generate_spiked(&params, pu, pv, seed)?;
            let post = ExactPosterior::new(&inst, cfg.beta, pu, pv, 2, &Caps::default())?;
            let st = estimate_overlaps(&inst, cfg.beta, pu, pv, &cfg.mcmc.chain(derive_seed(seed, &[1])))?;
            checks
                .iter()
                .map(|(mo, eo)| {
                    let s = st.get(*mo).expect("replica observable recorded");
                    Ok((s.mean, post.expect(eo)?, s.standard_error))
                })
                .collect()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(checks
        .iter()
        .enumerate()
        .map(|(j, (_, eo))| {
            let k = rows.len() as f64;
            let mc = rows.iter().map(|r| r[j].0).sum::<f64>() / k;
            let ex = rows.iter().map(|r| r[j].1).sum::<f64>() / k;
            let se = rows.iter().map(|r| r[j].2.powi(2)).sum::<f64>().sqrt() / k;
            ValidationRecord {
                observable: eo.label(),
                mcmc_mean: mc,
                exact_mean: ex,
                standard_error: se,
                passed: (mc - ex).abs() <= 3.0 * se,
            }
        })
        .collect())
}

pub fn overlap_scaling(cfg: &ExperimentConfig) -> Result<OverlapScalingReport> {
    cfg.validate()?;
    let (pu, pv) = cfg.priors()?;
    let (validation, sizes) = with_threads(cfg.threads, || -> Result<_> {
        let validation = validate_sampler(cfg, &pu, &pv)?;
        let sizes = cfg
            .dims()
            .into_iter()
            .map(|(n, m)| -> Result<OverlapSizeRecord> {
                let params = ModelParams::new(n, m, cfg.beta)?;
                let per = (0..cfg.samples)
                    .into_par_iter()
                    .map(|k| {
                        let seed = instance_seed(cfg.seed, n, m, Hypothesis::Spiked, k);
                        let inst = generate_spiked(&params, &pu, &pv, seed)?;
                        estimate_overlaps(&inst, cfg.beta, &pu, &pv, &cfg.mcmc.chain(derive_seed(seed, &[0x6d63])))
                    })
                    .collect::<Result<Vec<_>>>()?;
                let col = |o: McObservable, scale: f64| -> Vec<f64> { per.iter().map(|s| scale * s.mean(o)).collect() };
                let nf = n as f64;
                Ok(OverlapSizeRecord {
                    n,
                    m,
                    instances: per.len(),
                    n_ru_rv: Estimate::of(&col(McObservable::Ru12Rv12, nf)),
                    n2_ru4: Estimate::of(&col(McObservable::Ru12Pow4, nf * nf)),
                    n2_rv4: Estimate::of(&col(McObservable::Rv12Pow4, nf * nf)),
                    ru2: Estimate::of(&col(McObservable::Ru12Sq, 1.0)),
                    ru_star2: Estimate::of(&col(McObservable::Ru1StarSq, 1.0)),
                    unreliable_chains: per.iter().filter(|s| !s.reliable).count(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok((validation, sizes))
    })??;
    Ok(OverlapScalingReport {
        schema_version: SCHEMA_VERSION,
        config: cfg.clone(),
        regime: regime(cfg.alpha, cfg.beta, &pu, &pv),
        theta: predict::theta(cfg.alpha, cfg.beta).ok(),
        validation_passed: validation.iter().all(|v| v.passed),
        validation,
        sizes,
    })
}

// ---------------------------------------------------------------------------
// Spectral baseline.

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralPowerReport {
    pub schema_version: u32,
    pub config: ExperimentConfig,
    pub n: usize,
    pub m: usize,
    pub bulk_edge: f64,
    pub buffer: f64,
    pub false_alarm: f64,
    /// Fraction of null statistics within `edge_window` of the bulk edge.
    pub null_near_edge: f64,
    pub beta_above: f64,
    pub power_above: f64,
    /// `(1 - false_alarm + power) / 2`.
    pub accuracy_above: f64,
    pub beta_below: f64,
    pub power_below: f64,
    pub accuracy_below: f64,
}

pub fn spectral_power_experiment(cfg: &ExperimentConfig) -> Result<SpectralPowerReport> {
    cfg.validate()?;
    let (pu, pv) = cfg.priors()?;
    let (n, m) = cfg.dims()[0];
    let alpha = m as f64 / n as f64;
    let sp = cfg.spectral;
    with_threads(cfg.threads, || -> Result<SpectralPowerReport> {
        let buffer = match sp.buffer {
            Some(b) => b,
            None => calibrate_buffer(n, m, sp.calibration_sims, sp.quantile, derive_seed(cfg.seed, &[0x63616c]))?,
        };
        let edge = bulk_edge(alpha);
        let null_stats = (0..cfg.samples)
            .into_par_iter()
            .map(|k| {
                let inst = generate_null(&ModelParams::new(n, m, 0.0)?, instance_seed(cfg.seed, n, m, Hypothesis::Null, k));
                spectral_detect(&inst, alpha, buffer)
            })
            .collect::<Result<Vec<_>>>()?;
        let power = |beta: f64| -> Result<f64> {
            let params = ModelParams::new(n, m, beta)?;
            let hits = (0..cfg.samples)
                .into_par_iter()
                .map(|k| {
                    let seed = derive_seed(instance_seed(cfg.seed, n, m, Hypothesis::Spiked, k), &[beta.to_bits()]);
                    let inst = generate_spiked(&params, &pu, &pv, seed)?;
                    Ok(spectral_detect(&inst, alpha, buffer)?.decision == Hypothesis::Spiked)
                })
                .collect::<Result<Vec<bool>>>()?;
            Ok(hits.iter().filter(|&&h| h).count() as f64 / cfg.samples as f64)
        };
        let count = null_stats.len() as f64;
        let false_alarm = null_stats.iter().filter(|s| s.decision == Hypothesis::Spiked).count() as f64 / count;
        let null_near_edge =
            null_stats.iter().filter(|s| (s.top_sv_sq_over_n - edge).abs() <= sp.edge_window).count() as f64 / count;
        let power_above = power(sp.beta_above)?;
        let power_below = power(sp.beta_below)?;
        Ok(SpectralPowerReport {
            schema_version: SCHEMA_VERSION,
            config: cfg.clone(),
            n,
            m,
            bulk_edge: edge,
            buffer,
            false_alarm,
            null_near_edge,
            beta_above: sp.beta_above,
            power_above,
            accuracy_above: 0.5 * (1.0 - false_alarm + power_above),
            beta_below: sp.beta_below,
            power_below,
            accuracy_below: 0.5 * (1.0 - false_alarm + power_below),
        })
    })?
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::SizeSpec;

    fn tiny(beta: f64) -> ExperimentConfig {
        ExperimentConfig {
            beta,
            sizes: vec![SizeSpec::square(3)],
            samples: 40,
            seed: 11,
            ..Default::default()
        }
    }

    #[test]
    fn zero_beta_is_degenerate() {
        let rep = fluctuation_experiment(&tiny(0.0)).unwrap();
        let s = &rep.sizes[0];
        assert!(s.null.samples.iter().chain(&s.alt.samples).all(|r| r.log_lr == 0.0));
        assert!(s.null.summary.degenerate_reference);
        assert_eq!(s.test_error.empirical_err, 1.0);
        assert_eq!(s.test_error.type_ii, 1.0);
    }

    #[test]
    fn regimes() {
        let r = Prior::rademacher();
        let sp = Prior::sparse_rademacher(0.5).unwrap();
        assert_eq!(regime(1.0, 0.6, &r, &r), Regime::Proven);
        assert_eq!(regime(1.0, 0.6, &sp, &r), Regime::BeyondProvenBelowBbp);
        assert_eq!(regime(1.0, 1.2, &r, &r), Regime::AboveBbp);
    }

    #[test]
    fn samples_are_tagged_and_reproducible() {
        let cfg = tiny(0.6);
        let a = fluctuation_experiment(&cfg).unwrap();
        let b = fluctuation_experiment(&ExperimentConfig { threads: Some(1), ..cfg.clone() }).unwrap();
        assert_eq!(a.sizes[0].alt.samples, b.sizes[0].alt.samples);
        assert_eq!(a.sizes[0].null.samples.len(), cfg.samples);
        let seeds: std::collections::HashSet<u64> = a.sizes[0].null.samples.iter().map(|s| s.seed).collect();
        assert_eq!(seeds.len(), cfg.samples);
    }

    #[test]
    fn samples_csv_header() {
        let rep = fluctuation_experiment(&tiny(0.5)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.csv");
        write_samples_csv(&rep, &p).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("hypothesis,sample_index,N,M,beta,seed,log_lr\nnull,0,3,3,0.5,"));
        assert_eq!(text.lines().count(), 1 + 2 * 40);
    }

    #[test]
    fn mcmc_engine_rejected_for_log_lr() {
        let cfg = ExperimentConfig { engine: Engine::Mcmc, ..tiny(0.5) };
        assert!(matches!(fluctuation_experiment(&cfg), Err(Error::InvalidParameter { field: "engine", .. })));
    }

    #[test]
    fn cap_exceeded_is_reported() {
        let cfg = ExperimentConfig { sizes: vec![SizeSpec::square(30)], samples: 2, ..tiny(0.5) };
        assert!(matches!(fluctuation_experiment(&cfg), Err(Error::CapExceeded { .. })));
    }

    #[test]
    fn test_error_convention() {
        let rec = test_error_from_samples(1, 1, &[0.0, 1.0], &[0.0, 2.0], None);
        assert_eq!(rec.type_i, 0.5);
        assert_eq!(rec.type_ii, 0.5);
        assert_eq!(rec.empirical_err, 1.0);
    }
}
