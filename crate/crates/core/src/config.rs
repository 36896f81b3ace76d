//! Experiment configuration shared by the harness and the command-line front end.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Deserializer, Serialize};

use crate::error::{Error, Result};
use crate::mcmc::{ChainConfig, ScanOrder};
use crate::prior::{Prior, PriorSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Engine {
    #[default]
    Exact,
    Mcmc,
}

impl std::str::FromStr for Engine {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(Engine::Exact),
            "mcmc" => Ok(Engine::Mcmc),
            _ => Err(Error::param("engine", format!("expected `exact` or `mcmc`, got `{s}`"))),
        }
    }
}

/// One problem size. `m` defaults to `round(α n)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SizeSpec {
    pub n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
}

impl SizeSpec {
    pub fn square(n: usize) -> Self {
        SizeSpec { n, m: None }
    }

    pub fn resolve(&self, alpha: f64) -> (usize, usize) {
        (self.n, self.m.unwrap_or_else(|| (alpha * self.n as f64).round() as usize))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McmcSettings {
    pub replicas: usize,
    pub sweeps: usize,
    pub burn_in: usize,
    pub thinning: usize,
    pub scan: ScanOrder,
}

impl Default for McmcSettings {
    fn default() -> Self {
        let c = ChainConfig::default();
        McmcSettings {
            replicas: c.n_replicas,
            sweeps: c.n_sweeps,
            burn_in: c.burn_in,
            thinning: c.thinning,
            scan: c.scan,
        }
    }
}

impl McmcSettings {
    pub fn chain(&self, seed: u64) -> ChainConfig {
        ChainConfig {
            n_replicas: self.replicas,
            n_sweeps: self.sweeps,
            burn_in: self.burn_in,
            thinning: self.thinning,
            seed,
            scan: self.scan,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpectralSettings {
    /// Detection slack above the bulk edge; calibrated from null draws when absent.
    pub buffer: Option<f64>,
    pub calibration_sims: usize,
    pub quantile: f64,
    pub beta_above: f64,
    pub beta_below: f64,
    /// Half-width of the window around the bulk edge used for the null sanity fraction.
    pub edge_window: f64,
}

impl Default for SpectralSettings {
    fn default() -> Self {
        SpectralSettings {
            buffer: None,
            calibration_sims: crate::spectral::CALIBRATION_SIMS,
            quantile: crate::spectral::CALIBRATION_QUANTILE,
            beta_above: 1.5,
            beta_below: 0.5,
            edge_window: 0.25,
        }
    }
}

fn prior_field<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<PriorSpec, D::Error> {
    let v = serde_json::Value::deserialize(d)?;
    match v {
        serde_json::Value::String(s) => PriorSpec::parse(&s).map_err(serde::de::Error::custom),
        other => serde_json::from_value(other).map_err(serde::de::Error::custom),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub alpha: f64,
    pub beta: f64,
    #[serde(deserialize_with = "prior_field")]
    pub prior_u: PriorSpec,
    #[serde(deserialize_with = "prior_field")]
    pub prior_v: PriorSpec,
    pub sizes: Vec<SizeSpec>,
    /// Instances per hypothesis (or per size for overlap and identity checks).
    pub samples: usize,
    pub seed: u64,
    pub engine: Engine,
    pub s_grid: Vec<f64>,
    pub mcmc: McmcSettings,
    pub quad_nodes: usize,
    /// Worker threads; `None` uses every available core.
    pub threads: Option<usize>,
    pub out: Option<PathBuf>,
    /// Step for the finite-difference derivative in β.
    pub delta_beta: f64,
    pub spectral: SpectralSettings,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            alpha: 1.0,
            beta: 0.6,
            prior_u: PriorSpec::Rademacher,
            prior_v: PriorSpec::Rademacher,
            sizes: vec![SizeSpec::square(16)],
            samples: 2000,
            seed: 0,
            engine: Engine::Exact,
            s_grid: vec![0.5, 1.0, 2.0],
            mcmc: McmcSettings::default(),
            quad_nodes: crate::quadrature::DEFAULT_NODES,
            threads: None,
            out: None,
            delta_beta: 0.01,
            spectral: SpectralSettings::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text)?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn priors(&self) -> Result<(Prior, Prior)> {
        Ok((Prior::from_spec(&self.prior_u)?, Prior::from_spec(&self.prior_v)?))
    }

    /// Resolved `(N, M)` pairs.
    pub fn dims(&self) -> Vec<(usize, usize)> {
        self.sizes.iter().map(|s| s.resolve(self.alpha)).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::param("alpha", format!("must be positive, got {}", self.alpha)));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(Error::param("beta", format!("must be nonnegative, got {}", self.beta)));
        }
        if self.sizes.is_empty() {
            return Err(Error::param("sizes", "at least one size is required"));
        }
        for (n, m) in self.dims() {
            if n == 0 || m == 0 {
                return Err(Error::param("sizes", format!("dimensions must be positive, got {n}x{m}")));
            }
        }
        if self.samples == 0 {
            return Err(Error::param("samples", "must be at least 1"));
        }
        if self.quad_nodes == 0 {
            return Err(Error::param("quad_nodes", "must be at least 1"));
        }
        if self.threads == Some(0) {
            return Err(Error::param("threads", "must be at least 1"));
        }
        if !(self.delta_beta > 0.0) {
            return Err(Error::param("delta_beta", "must be positive"));
        }
        self.mcmc.chain(0).validate()?;
        self.priors()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_gives_defaults() {
        assert_eq!(ExperimentConfig::from_json("{}").unwrap(), ExperimentConfig::default());
    }

    #[test]
    fn partial_document_and_prior_shorthand() {
        let cfg = ExperimentConfig::from_json(
            r#"{"alpha": 2, "sizes": [{"n": 4}, {"n": 5, "m": 7}], "prior_u": "sparse_rademacher:0.25",
               "prior_v": {"family": "rademacher"}, "mcmc": {"sweeps": 50, "burn_in": 10}}"#,
        )
        .unwrap();
        assert_eq!(cfg.dims(), vec![(4, 8), (5, 7)]);
        assert_eq!(cfg.prior_u, PriorSpec::SparseRademacher { rho: 0.25 });
        assert_eq!(cfg.mcmc.thinning, 10);
        cfg.validate().unwrap();
    }

    #[test]
    fn unknown_fields_rejected() {
        assert!(ExperimentConfig::from_json(r#"{"alpah": 1}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"mcmc": {"sweep": 1}}"#).is_err());
    }

    #[test]
    fn validation_names_the_field() {
        let cfg = ExperimentConfig { samples: 0, ..Default::default() };
        match cfg.validate() {
            Err(Error::InvalidParameter { field, .. }) => assert_eq!(field, "samples"),
            other => panic!("{other:?}"),
        }
        let cfg = ExperimentConfig {
            mcmc: McmcSettings { burn_in: 5000, ..Default::default() },
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
    }
}
