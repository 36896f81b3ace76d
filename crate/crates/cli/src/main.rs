use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use spikelab::config::{Engine, ExperimentConfig, SizeSpec};
use spikelab::exact::exact_log_lr;
use spikelab::harness::{self, with_threads};
use spikelab::mcmc::ScanOrder;
use spikelab::model::{generate_null, generate_spiked, read_instance, write_instance, Hypothesis, MatrixFormat, ModelParams};
use spikelab::predict;
use spikelab::prior::PriorSpec;
use spikelab::quadrature::GaussHermite;
use spikelab::rs::{phase_boundary, solve_rs, PHASE_TOL};
use spikelab::Error;

/// Likelihood-ratio, overlap and replica-symmetric experiments for the spiked rectangular model.
///
/// Settings are resolved as built-in defaults, then `--config`, then flags.
#[derive(Parser, Debug)]
#[command(name = "spikelab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Draw one instance and write it as a JSON header plus matrix file.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// null or spiked
        #[arg(long, default_value = "spiked")]
        hypothesis: String,
        /// csv or f64le
        #[arg(long, default_value = "csv")]
        format: String,
    },
    /// Exact log-likelihood ratio of a stored or freshly drawn instance.
    Loglr {
        #[command(flatten)]
        common: Common,
        /// Instance header written by `simulate`; a fresh instance is drawn when absent.
        #[arg(long)]
        input: Option<PathBuf>,
        /// Hypothesis of the fresh instance: null or spiked
        #[arg(long, default_value = "null")]
        hypothesis: String,
    },
    /// Fluctuations of log L under both hypotheses; writes fluct_report.json and samples.csv.
    Fluctuations {
        #[command(flatten)]
        common: Common,
    },
    /// Error of the likelihood-ratio test against its prediction.
    TestError {
        #[command(flatten)]
        common: Common,
    },
    /// Mean of log L under the spiked model (the KL divergence).
    Kl {
        #[command(flatten)]
        common: Common,
    },
    /// Replica/replica against replica/spike overlap moments.
    Nishimori {
        #[command(flatten)]
        common: Common,
    },
    /// Finite-difference derivative of E log L in beta against the overlap.
    DerivativeCheck {
        #[command(flatten)]
        common: Common,
    },
    /// Gibbs-sampled overlap moments across sizes.
    Overlaps {
        #[command(flatten)]
        common: Common,
    },
    /// Replica-symmetric potential at (alpha, beta).
    RsSolve {
        #[command(flatten)]
        common: Common,
    },
    /// Smallest beta with a positive replica-symmetric potential, per alpha.
    PhaseBoundary {
        #[command(flatten)]
        common: Common,
        /// Comma-separated alpha grid [default: the configured alpha]
        #[arg(long, value_delimiter = ',')]
        alphas: Vec<f64>,
        /// Threshold on the potential that counts as ordered
        #[arg(long, default_value_t = PHASE_TOL)]
        tol: f64,
    },
    /// Top-eigenvalue detector power and accuracy.
    SpectralPower {
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args, Debug, Default)]
struct Common {
    /// JSON config file; every field is optional
    #[arg(long)]
    config: Option<PathBuf>,
    /// Aspect ratio M/N [default: 1]
    #[arg(long)]
    alpha: Option<f64>,
    /// Signal strength [default: 0.6]
    #[arg(long)]
    beta: Option<f64>,
    /// Prior on u: rademacher, sparse_rademacher:<rho>, gaussian_rs_only or a JSON object [default: rademacher]
    #[arg(long)]
    prior_u: Option<String>,
    /// Prior on v, same syntax as --prior-u [default: rademacher]
    #[arg(long)]
    prior_v: Option<String>,
    /// Comma-separated sizes, each `N` or `NxM`; M defaults to round(alpha N) [default: 16]
    #[arg(long, value_delimiter = ',')]
    sizes: Vec<String>,
    /// Single row count; shorthand for --sizes
    #[arg(long)]
    n: Option<usize>,
    /// Column count paired with --n
    #[arg(long)]
    m: Option<usize>,
    /// Instances per hypothesis or per size [default: 2000]
    #[arg(long)]
    samples: Option<usize>,
    /// Master seed [default: 0]
    #[arg(long)]
    seed: Option<u64>,
    /// exact or mcmc [default: exact]
    #[arg(long)]
    engine: Option<String>,
    /// Comma-separated characteristic-function arguments [default: 0.5,1,2]
    #[arg(long, value_delimiter = ',')]
    s_grid: Vec<f64>,
    /// Gibbs replicas per instance [default: 2]
    #[arg(long)]
    replicas: Option<usize>,
    /// Gibbs sweeps per chain [default: 4000]
    #[arg(long)]
    sweeps: Option<usize>,
    /// Discarded leading sweeps [default: 1000]
    #[arg(long)]
    burn_in: Option<usize>,
    /// Sweeps between records [default: 10]
    #[arg(long)]
    thinning: Option<usize>,
    /// systematic or random [default: systematic]
    #[arg(long)]
    scan: Option<String>,
    /// Gauss-Hermite nodes [default: 61]
    #[arg(long)]
    quad_nodes: Option<usize>,
    /// Worker threads [default: all cores]
    #[arg(long)]
    threads: Option<usize>,
    /// Output directory for report files [default: none, or `.` for simulate]
    #[arg(long)]
    out: Option<PathBuf>,
    /// Finite-difference step in beta [default: 0.01]
    #[arg(long)]
    delta_beta: Option<f64>,
    /// Spectral detection slack above the bulk edge [default: calibrated]
    #[arg(long)]
    buffer: Option<f64>,
    /// Null draws for the buffer calibration [default: 1000]
    #[arg(long)]
    calibration_sims: Option<usize>,
    /// Calibration quantile [default: 0.99]
    #[arg(long)]
    quantile: Option<f64>,
    /// Spiked beta above the spectral threshold [default: 1.5]
    #[arg(long)]
    beta_above: Option<f64>,
    /// Spiked beta below the spectral threshold [default: 0.5]
    #[arg(long)]
    beta_below: Option<f64>,
}

fn parse_size(text: &str) -> spikelab::Result<SizeSpec> {
    let bad = || Error::InvalidParameter { field: "sizes", message: format!("expected `N` or `NxM`, got `{text}`") };
    match text.split_once(['x', 'X']) {
        Some((n, m)) => Ok(SizeSpec {
            n: n.trim().parse().map_err(|_| bad())?,
            m: Some(m.trim().parse().map_err(|_| bad())?),
        }),
        None => Ok(SizeSpec { n: text.trim().parse().map_err(|_| bad())?, m: None }),
    }
}

impl Common {
    fn resolve(&self) -> spikelab::Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::from_path(path)?,
            None => ExperimentConfig::default(),
        };
        macro_rules! set {
            ($($flag:ident => $($field:ident).+),* $(,)?) => {
                $(if let Some(v) = self.$flag { cfg.$($field).+ = v; })*
            };
        }
        set!(alpha => alpha, beta => beta, samples => samples, seed => seed, quad_nodes => quad_nodes,
             delta_beta => delta_beta, replicas => mcmc.replicas, sweeps => mcmc.sweeps, burn_in => mcmc.burn_in,
             thinning => mcmc.thinning, calibration_sims => spectral.calibration_sims,
             quantile => spectral.quantile, beta_above => spectral.beta_above, beta_below => spectral.beta_below);
        if let Some(p) = &self.prior_u {
            cfg.prior_u = PriorSpec::parse(p)?;
        }
        if let Some(p) = &self.prior_v {
            cfg.prior_v = PriorSpec::parse(p)?;
        }
        if !self.sizes.is_empty() {
            cfg.sizes = self.sizes.iter().map(|s| parse_size(s)).collect::<spikelab::Result<_>>()?;
        }
        if let Some(n) = self.n {
            cfg.sizes = vec![SizeSpec { n, m: self.m }];
        } else if self.m.is_some() {
            return Err(Error::InvalidParameter { field: "m", message: "--m needs --n".into() });
        }
        if let Some(e) = &self.engine {
            cfg.engine = e.parse::<Engine>()?;
        }
        if let Some(s) = &self.scan {
            cfg.mcmc.scan = match s.as_str() {
                "systematic" => ScanOrder::Systematic,
                "random" => ScanOrder::Random,
                _ => return Err(Error::InvalidParameter { field: "mcmc.scan", message: format!("expected `systematic` or `random`, got `{s}`") }),
            };
        }
        if !self.s_grid.is_empty() {
            cfg.s_grid = self.s_grid.clone();
        }
        if self.threads.is_some() {
            cfg.threads = self.threads;
        }
        if self.out.is_some() {
            cfg.out = self.out.clone();
        }
        if self.buffer.is_some() {
            cfg.spectral.buffer = self.buffer;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn hypothesis(text: &str) -> spikelab::Result<Hypothesis> {
    match text {
        "null" => Ok(Hypothesis::Null),
        "spiked" => Ok(Hypothesis::Spiked),
        _ => Err(Error::InvalidParameter { field: "hypothesis", message: format!("expected `null` or `spiked`, got `{text}`") }),
    }
}

fn out_dir(cfg: &ExperimentConfig) -> spikelab::Result<Option<&Path>> {
    match cfg.out.as_deref() {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            Ok(Some(dir))
        }
        None => Ok(None),
    }
}

fn save<T: serde::Serialize>(cfg: &ExperimentConfig, name: &str, value: &T) -> spikelab::Result<()> {
    if let Some(dir) = out_dir(cfg)? {
        harness::write_json(value, &dir.join(name))?;
    }
    Ok(())
}

fn opt(x: Option<f64>) -> String {
    x.map_or_else(|| "n/a".into(), |v| format!("{:.5}", v + 0.0))
}

fn run(command: Command) -> spikelab::Result<String> {
    match command {
        Command::Simulate { common, hypothesis: h, format } => {
            let cfg = common.resolve()?;
            let h = hypothesis(&h)?;
            let format = match format.as_str() {
                "csv" => MatrixFormat::Csv,
                "f64le" | "bin" => MatrixFormat::F64le,
                _ => return Err(Error::InvalidParameter { field: "format", message: format!("expected `csv` or `f64le`, got `{format}`") }),
            };
            let (pu, pv) = cfg.priors()?;
            let dir = cfg.out.clone().unwrap_or_else(|| PathBuf::from("."));
            std::fs::create_dir_all(&dir)?;
            let mut written = Vec::new();
            for (n, m) in cfg.dims() {
                let params = ModelParams::new(n, m, cfg.beta)?;
                let seed = harness::instance_seed(cfg.seed, n, m, h, 0);
                let inst = match h {
                    Hypothesis::Null => generate_null(&params, seed),
                    Hypothesis::Spiked => generate_spiked(&params, &pu, &pv, seed)?,
                };
                let stem = dir.join(format!("instance_{}_{n}x{m}", h.as_str()));
                written.push(write_instance(&inst, &stem, format)?.display().to_string());
            }
            Ok(format!("wrote {}", written.join(", ")))
        }
        Command::Loglr { common, input, hypothesis: h } => {
            let cfg = common.resolve()?;
            let (pu, pv) = cfg.priors()?;
            let inst = match input {
                Some(path) => read_instance(&path)?,
                None => {
                    let (n, m) = cfg.dims()[0];
                    let h = hypothesis(&h)?;
                    let params = ModelParams::new(n, m, cfg.beta)?;
                    let seed = harness::instance_seed(cfg.seed, n, m, h, 0);
                    match h {
                        Hypothesis::Null => generate_null(&params, seed),
                        Hypothesis::Spiked => generate_spiked(&params, &pu, &pv, seed)?,
                    }
                }
            };
            let lr = with_threads(cfg.threads, || exact_log_lr(&inst.data, cfg.beta, &pu, &pv))??;
            save(
                &cfg,
                "loglr.json",
                &json!({"schema_version": harness::SCHEMA_VERSION, "config": cfg, "n": inst.n_rows(), "m": inst.n_cols(),
                        "hypothesis": inst.hypothesis, "seed": inst.seed, "log_lr": lr}),
            )?;
            let pred = predict::lr_asymptotics(cfg.alpha, cfg.beta);
            Ok(format!(
                "log_lr = {} (N={}, M={}, beta={}; limiting mean under {} {})",
                lr.value,
                inst.n_rows(),
                inst.n_cols(),
                cfg.beta,
                inst.hypothesis.as_str(),
                opt(pred.valid.then(|| pred.mean(inst.hypothesis)))
            ))
        }
        Command::Fluctuations { common } => {
            let cfg = common.resolve()?;
            let rep = harness::fluctuation_experiment(&cfg)?;
            if let Some(dir) = out_dir(&cfg)? {
                harness::write_json(&rep, &dir.join("fluct_report.json"))?;
                harness::write_samples_csv(&rep, &dir.join("samples.csv"))?;
            }
            let p = &rep.predicted;
            let parts: Vec<String> = rep
                .sizes
                .iter()
                .map(|s| {
                    format!(
                        "N={} M={}: null mean {:.4} var {:.4}, spiked mean {:.4} var {:.4}",
                        s.n, s.m, s.null.summary.mean, s.null.summary.variance, s.alt.summary.mean, s.alt.summary.variance
                    )
                })
                .collect();
            Ok(format!(
                "{}; predicted means {}/{} variance {}",
                parts.join("; "),
                opt(p.valid.then_some(p.mean_null)),
                opt(p.valid.then_some(p.mean_alt)),
                opt(p.valid.then_some(p.variance))
            ))
        }
        Command::TestError { common } => {
            let cfg = common.resolve()?;
            let rep = harness::lr_test_error(&cfg)?;
            save(&cfg, "test_error_report.json", &rep)?;
            let parts: Vec<String> = rep
                .records
                .iter()
                .map(|r| format!("N={} M={}: error {:.4} ± {:.4}", r.n, r.m, r.empirical_err, r.se_err))
                .collect();
            Ok(format!("{}; predicted {}", parts.join("; "), opt(rep.records[0].predicted_err)))
        }
        Command::Kl { common } => {
            let cfg = common.resolve()?;
            let rep = harness::kl_experiment(&cfg)?;
            save(&cfg, "kl_report.json", &rep)?;
            let parts: Vec<String> = rep
                .records
                .iter()
                .map(|r| format!("N={} M={}: {:.4} ± {:.4}", r.n, r.m, r.empirical_mean, r.standard_error))
                .collect();
            Ok(format!("E log L under spiked {}; limit {}", parts.join("; "), opt(rep.predicted)))
        }
        Command::Nishimori { common } => {
            let cfg = common.resolve()?;
            let rep = harness::nishimori_check(&cfg)?;
            save(&cfg, "nishimori_report.json", &rep)?;
            let parts: Vec<String> = rep
                .pairs
                .iter()
                .map(|p| format!("{} {:.5} vs {} {:.5} (se {:.5})", p.replica_label, p.replica_mean, p.star_label, p.star_mean, p.combined_se))
                .collect();
            Ok(format!("N={} M={}: {}", rep.n, rep.m, parts.join("; ")))
        }
        Command::DerivativeCheck { common } => {
            let cfg = common.resolve()?;
            let rep = harness::derivative_identity_check(&cfg)?;
            save(&cfg, "derivative_report.json", &rep)?;
            Ok(format!(
                "finite difference {:.5} ± {:.5} vs overlap {:.5} ± {:.5} (gap {:.5})",
                rep.fd_derivative, rep.fd_se, rep.overlap_rhs, rep.rhs_se, rep.gap
            ))
        }
        Command::Overlaps { common } => {
            let cfg = common.resolve()?;
            let rep = harness::overlap_scaling(&cfg)?;
            save(&cfg, "overlap_report.json", &rep)?;
            let parts: Vec<String> = rep
                .sizes
                .iter()
                .map(|s| format!("N={}: {:.4} ± {:.4}", s.n, s.n_ru_rv.mean, s.n_ru_rv.standard_error))
                .collect();
            Ok(format!(
                "N E<R^u R^v> {}; predicted {}; sampler validation {}",
                parts.join("; "),
                opt(rep.theta),
                if rep.validation_passed { "passed" } else { "failed" }
            ))
        }
        Command::RsSolve { common } => {
            let cfg = common.resolve()?;
            let (pu, pv) = cfg.priors()?;
            let quad = GaussHermite::new(cfg.quad_nodes)?;
            let sol = with_threads(cfg.threads, || solve_rs(cfg.alpha, cfg.beta, &pu, &pv, &quad))??;
            save(&cfg, "rs_solution.json", &json!({"schema_version": harness::SCHEMA_VERSION, "config": cfg, "solution": sol}))?;
            Ok(format!(
                "phi_rs = {:.3e} at q_u = {:.6}, q_v = {:.6} (alpha={}, beta={}, alpha beta^2 = {:.4})",
                sol.phi_rs,
                sol.q_u,
                sol.q_v,
                cfg.alpha,
                cfg.beta,
                cfg.alpha * cfg.beta * cfg.beta
            ))
        }
        Command::PhaseBoundary { common, alphas, tol } => {
            let cfg = common.resolve()?;
            let (pu, pv) = cfg.priors()?;
            let quad = GaussHermite::new(cfg.quad_nodes)?;
            let alphas = if alphas.is_empty() { vec![cfg.alpha] } else { alphas };
            let pb = with_threads(cfg.threads, || phase_boundary(&alphas, &pu, &pv, tol, &quad))??;
            if let Some(dir) = out_dir(&cfg)? {
                pb.write_csv(&dir.join("phase_boundary.csv"))?;
                harness::write_json(&pb, &dir.join("phase_boundary.json"))?;
            }
            let parts: Vec<String> = pb
                .points
                .iter()
                .map(|p| {
                    if p.unbounded_in_bracket {
                        format!("alpha={}: no transition below beta={:.4}", p.alpha, p.beta_star)
                    } else {
                        format!("alpha={}: beta*={:.5} (alpha beta*^2 = {:.4})", p.alpha, p.beta_star, p.alpha_beta_star_sq)
                    }
                })
                .collect();
            Ok(parts.join("; "))
        }
        Command::SpectralPower { common } => {
            let cfg = common.resolve()?;
            let rep = harness::spectral_power_experiment(&cfg)?;
            save(&cfg, "spectral_report.json", &rep)?;
            Ok(format!(
                "N={} M={}: power {:.3} at beta={}, {:.3} at beta={}; false alarm {:.3}; null near edge {:.3}",
                rep.n, rep.m, rep.power_above, rep.beta_above, rep.power_below, rep.beta_below, rep.false_alarm, rep.null_near_edge
            ))
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numerical() { 2 } else { 1 })
        }
    }
}
