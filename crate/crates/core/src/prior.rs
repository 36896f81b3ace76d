//! Discrete product priors for the spike factors.
//!
//! Every prior is standardized (zero mean, unit variance). Bounded priors are finite
//! atom/weight lists; the standard Gaussian exists only as an input to the
//! replica-symmetric module and is rejected by every sampling or likelihood path.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const MOMENT_TOL: f64 = 1e-12;

/// Prior description as it appears in config files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum PriorSpec {
    Rademacher,
    SparseRademacher { rho: f64 },
    Custom { atoms: Vec<f64>, weights: Vec<f64> },
    GaussianRsOnly,
}

impl PriorSpec {
    /// Parses either a JSON object or one of the bare names `rademacher`, `gaussian_rs_only`,
    /// `sparse_rademacher:<rho>`.
    pub fn parse(text: &str) -> Result<Self> {
        let t = text.trim();
        if t.starts_with('{') {
            return Ok(serde_json::from_str(t)?);
        }
        match t {
            "rademacher" => Ok(PriorSpec::Rademacher),
            "gaussian_rs_only" | "gaussian" => Ok(PriorSpec::GaussianRsOnly),
            _ => {
                if let Some(rho) = t.strip_prefix("sparse_rademacher:") {
                    let rho = rho
                        .parse::<f64>()
                        .map_err(|e| Error::InvalidPrior(format!("bad rho `{rho}`: {e}")))?;
                    Ok(PriorSpec::SparseRademacher { rho })
                } else {
                    Err(Error::InvalidPrior(format!("unknown prior `{t}`")))
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Family {
    Rademacher,
    SparseRademacher { rho: f64 },
    Custom,
    GaussianRsOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub mean: f64,
    pub variance: f64,
    pub support_radius: f64,
    pub fourth_moment: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prior {
    atoms: Vec<f64>,
    weights: Vec<f64>,
    family: Family,
    support_radius: f64,
}

impl Prior {
    pub fn from_spec(spec: &PriorSpec) -> Result<Self> {
        match spec {
            PriorSpec::Rademacher => Ok(Self::rademacher()),
            PriorSpec::SparseRademacher { rho } => Self::sparse_rademacher(*rho),
            PriorSpec::Custom { atoms, weights } => Self::standardize(atoms, weights),
            PriorSpec::GaussianRsOnly => Ok(Self::gaussian_rs_only()),
        }
    }

    pub fn rademacher() -> Self {
        Prior {
            atoms: vec![-1.0, 1.0],
            weights: vec![0.5, 0.5],
            family: Family::Rademacher,
            support_radius: 1.0,
        }
    }

    /// `rho/2 δ(-1/√rho) + (1-rho) δ(0) + rho/2 δ(1/√rho)`.
    pub fn sparse_rademacher(rho: f64) -> Result<Self> {
        if !(rho > 0.0 && rho <= 1.0) {
            return Err(Error::InvalidPrior(format!(
                "sparse_rademacher requires 0 < rho <= 1, got {rho}"
            )));
        }
        let a = 1.0 / rho.sqrt();
        let (atoms, weights) = if rho == 1.0 {
            (vec![-1.0, 1.0], vec![0.5, 0.5])
        } else {
            (vec![-a, 0.0, a], vec![rho / 2.0, 1.0 - rho, rho / 2.0])
        };
        Ok(Prior {
            atoms,
            weights,
            family: Family::SparseRademacher { rho },
            support_radius: a,
        })
    }

    pub fn gaussian_rs_only() -> Self {
        Prior {
            atoms: Vec::new(),
            weights: Vec::new(),
            family: Family::GaussianRsOnly,
            support_radius: f64::INFINITY,
        }
    }

    /// Affinely maps the atoms so the law has mean 0 and variance 1. Zero-weight atoms are
    /// dropped and the weights renormalized.
    pub fn standardize(atoms: &[f64], weights: &[f64]) -> Result<Self> {
        if atoms.len() != weights.len() {
            return Err(Error::InvalidPrior(format!(
                "{} atoms but {} weights",
                atoms.len(),
                weights.len()
            )));
        }
        if atoms.iter().chain(weights).any(|x| !x.is_finite()) {
            return Err(Error::InvalidPrior("non-finite atom or weight".into()));
        }
        if weights.iter().any(|&w| w < 0.0) {
            return Err(Error::InvalidPrior("negative weight".into()));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::InvalidPrior("weights sum to zero".into()));
        }
        let (atoms, weights): (Vec<f64>, Vec<f64>) = atoms
            .iter()
            .zip(weights)
            .filter(|(_, &w)| w > 0.0)
            .map(|(&a, &w)| (a, w / total))
            .unzip();

        let mut distinct = atoms.clone();
        distinct.sort_by(f64::total_cmp);
        distinct.dedup();
        if distinct.len() < 2 {
            return Err(Error::InvalidPrior(
                "need at least two distinct atoms with positive weight".into(),
            ));
        }

        let mean: f64 = atoms.iter().zip(&weights).map(|(a, w)| a * w).sum();
        let var: f64 = atoms
            .iter()
            .zip(&weights)
            .map(|(a, w)| w * (a - mean).powi(2))
            .sum();
        if var <= 0.0 || !var.is_finite() {
            return Err(Error::InvalidPrior("degenerate law (zero variance)".into()));
        }
        let sd = var.sqrt();
        let atoms: Vec<f64> = atoms.iter().map(|a| (a - mean) / sd).collect();
        let support_radius = atoms.iter().fold(0.0_f64, |m, a| m.max(a.abs()));
        let prior = Prior {
            atoms,
            weights,
            family: Family::Custom,
            support_radius,
        };
        let m = prior.moments();
        debug_assert!(m.mean.abs() < 1e-10 && (m.variance - 1.0).abs() < 1e-10);
        Ok(prior)
    }

    pub fn atoms(&self) -> &[f64] {
        &self.atoms
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn family(&self) -> Family {
        self.family
    }

    /// K, the largest absolute atom (infinite for the Gaussian).
    pub fn support_radius(&self) -> f64 {
        self.support_radius
    }

    pub fn n_atoms(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_bounded(&self) -> bool {
        self.family != Family::GaussianRsOnly
    }

    pub fn ensure_bounded(&self) -> Result<()> {
        if self.is_bounded() {
            Ok(())
        } else {
            Err(Error::UnboundedPrior)
        }
    }

    /// True when the law is invariant under `x -> -x`.
    pub fn is_symmetric(&self) -> bool {
        if !self.is_bounded() {
            return true;
        }
        self.atoms.iter().zip(&self.weights).all(|(&a, &w)| {
            self.atoms
                .iter()
                .zip(&self.weights)
                .any(|(&b, &v)| (a + b).abs() < 1e-12 && (w - v).abs() < 1e-12)
        })
    }

    /// Symmetric two-point law on ±1.
    pub fn is_rademacher(&self) -> bool {
        self.atoms.len() == 2
            && self.is_symmetric()
            && self.atoms.iter().all(|a| (a.abs() - 1.0).abs() < 1e-12)
    }

    pub fn moments(&self) -> Moments {
        if !self.is_bounded() {
            return Moments {
                mean: 0.0,
                variance: 1.0,
                support_radius: f64::INFINITY,
                fourth_moment: 3.0,
            };
        }
        let pairs = || self.atoms.iter().zip(&self.weights);
        Moments {
            mean: pairs().map(|(a, w)| a * w).sum(),
            variance: pairs().map(|(a, w)| a * a * w).sum(),
            support_radius: self.support_radius,
            fourth_moment: pairs().map(|(a, w)| a.powi(4) * w).sum(),
        }
    }

    /// Checks the mean-zero, unit-variance, radius invariants.
    pub fn validate(&self) -> Result<()> {
        if !self.is_bounded() {
            return Ok(());
        }
        let total: f64 = self.weights.iter().sum();
        let m = self.moments();
        if (total - 1.0).abs() > MOMENT_TOL
            || m.mean.abs() > MOMENT_TOL
            || (m.variance - 1.0).abs() > MOMENT_TOL
        {
            return Err(Error::InvalidPrior(format!(
                "not standardized: total {total}, mean {}, variance {}",
                m.mean, m.variance
            )));
        }
        Ok(())
    }

    /// Diagnostic sub-Gaussian scale: max over λ ∈ {0.1, ..., 10} of sqrt(2 log E e^{λu} / λ²).
    pub fn subgaussian_diag(&self) -> Option<f64> {
        if !self.is_bounded() {
            return None;
        }
        (1..=100)
            .map(|k| {
                let lambda = k as f64 / 10.0;
                let mgf: f64 = self
                    .atoms
                    .iter()
                    .zip(&self.weights)
                    .map(|(a, w)| w * (lambda * a).exp())
                    .sum();
                (2.0 * mgf.ln() / (lambda * lambda)).sqrt()
            })
            .reduce(f64::max)
    }

    pub fn sample<R: Rng + ?Sized>(&self, count: usize, rng: &mut R) -> Result<Vec<f64>> {
        self.ensure_bounded()?;
        if count == 0 {
            return Ok(Vec::new());
        }
        let dist = WeightedIndex::new(&self.weights)
            .map_err(|e| Error::InvalidPrior(format!("bad weights: {e}")))?;
        Ok((0..count).map(|_| self.atoms[dist.sample(rng)]).collect())
    }

    /// Index of the atom equal to `x`, if any.
    pub fn atom_index(&self, x: f64) -> Option<usize> {
        self.atoms.iter().position(|&a| (a - x).abs() < 1e-12)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn rademacher_atoms() {
        let p = Prior::from_spec(&PriorSpec::Rademacher).unwrap();
        assert_eq!(p.atoms(), &[-1.0, 1.0]);
        assert_eq!(p.weights(), &[0.5, 0.5]);
        assert_eq!(p.support_radius(), 1.0);
        assert_eq!(
            p.moments(),
            Moments {
                mean: 0.0,
                variance: 1.0,
                support_radius: 1.0,
                fourth_moment: 1.0
            }
        );
        assert!(p.is_rademacher());
    }

    #[test]
    fn sparse_rademacher_atoms_and_moments() {
        let p = Prior::sparse_rademacher(0.04).unwrap();
        assert_eq!(p.atoms().len(), 3);
        assert!((p.atoms()[0] + 5.0).abs() < 1e-12);
        assert_eq!(p.atoms()[1], 0.0);
        assert!((p.atoms()[2] - 5.0).abs() < 1e-12);
        assert!((p.weights()[0] - 0.02).abs() < 1e-15);
        assert!((p.weights()[1] - 0.96).abs() < 1e-15);
        let m = p.moments();
        assert!(m.mean.abs() < 1e-12);
        assert!((m.variance - 1.0).abs() < 1e-12);
        assert!((m.support_radius - 5.0).abs() < 1e-12);
        assert!((m.fourth_moment - 25.0).abs() < 1e-9);
        p.validate().unwrap();
        assert!(p.is_symmetric());
        assert!(!p.is_rademacher());
    }

    #[test]
    fn invalid_rho_rejected() {
        for rho in [0.0, -0.1, 1.5, f64::NAN] {
            assert!(Prior::sparse_rademacher(rho).is_err(), "rho = {rho}");
        }
    }

    #[test]
    fn standardize_two_point() {
        let p = Prior::standardize(&[0.0, 1.0], &[0.5, 0.5]).unwrap();
        assert!((p.atoms()[0] + 1.0).abs() < 1e-15);
        assert!((p.atoms()[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn standardize_is_identity_on_rademacher() {
        let p = Prior::standardize(&[-1.0, 1.0], &[0.5, 0.5]).unwrap();
        assert_eq!(p.atoms(), Prior::rademacher().atoms());
    }

    #[test]
    fn custom_asymmetric_prior() {
        let spec = PriorSpec::Custom {
            atoms: vec![-2.0, 1.0],
            weights: vec![1.0 / 3.0, 2.0 / 3.0],
        };
        let p = Prior::from_spec(&spec).unwrap();
        assert!((p.atoms()[0] + 2f64.sqrt()).abs() < 1e-12);
        assert!((p.atoms()[1] - 1.0 / 2f64.sqrt()).abs() < 1e-12);
        assert!((p.weights()[0] - 1.0 / 3.0).abs() < 1e-15);
        p.validate().unwrap();
        assert!(!p.is_symmetric());
    }

    #[test]
    fn degenerate_custom_rejected() {
        assert!(Prior::standardize(&[1.0, 1.0], &[0.5, 0.5]).is_err());
        assert!(Prior::standardize(&[1.0, 2.0], &[1.0, 0.0]).is_err());
        assert!(Prior::standardize(&[1.0], &[1.0]).is_err());
        assert!(Prior::standardize(&[1.0, 2.0], &[0.5]).is_err());
        assert!(Prior::standardize(&[1.0, 2.0], &[-0.5, 1.5]).is_err());
    }

    #[test]
    fn gaussian_is_rejected_for_sampling() {
        let g = Prior::gaussian_rs_only();
        assert!(matches!(
            g.sample(3, &mut stream(0)),
            Err(Error::UnboundedPrior)
        ));
        assert!(g.subgaussian_diag().is_none());
        assert_eq!(g.moments().fourth_moment, 3.0);
    }

    #[test]
    fn spec_json_roundtrip() {
        let s: PriorSpec = serde_json::from_str(r#"{"family":"sparse_rademacher","rho":0.04}"#).unwrap();
        assert_eq!(s, PriorSpec::SparseRademacher { rho: 0.04 });
        let s: PriorSpec = serde_json::from_str(r#"{"family":"gaussian_rs_only"}"#).unwrap();
        assert_eq!(s, PriorSpec::GaussianRsOnly);
        let s = PriorSpec::parse(r#"{"family":"custom","atoms":[0,1],"weights":[1,1]}"#).unwrap();
        assert!(matches!(s, PriorSpec::Custom { .. }));
        assert_eq!(PriorSpec::parse("rademacher").unwrap(), PriorSpec::Rademacher);
        assert_eq!(
            PriorSpec::parse("sparse_rademacher:0.1").unwrap(),
            PriorSpec::SparseRademacher { rho: 0.1 }
        );
        assert!(PriorSpec::parse("laplace").is_err());
    }

    #[test]
    fn rademacher_sample_mean() {
        let n = 1_000_000;
        let xs = Prior::rademacher().sample(n, &mut stream(11)).unwrap();
        let mean = xs.iter().sum::<f64>() / n as f64;
        assert!(mean.abs() < 4.0 / (n as f64).sqrt());
    }

    #[test]
    fn sparse_sample_zero_fraction() {
        let n = 1_000_000;
        let xs = Prior::sparse_rademacher(0.04)
            .unwrap()
            .sample(n, &mut stream(12))
            .unwrap();
        let zeros = xs.iter().filter(|&&x| x == 0.0).count() as f64 / n as f64;
        let se = (0.96f64 * 0.04 / n as f64).sqrt();
        assert!((zeros - 0.96).abs() < 4.0 * se, "zero fraction {zeros}");
    }

    #[test]
    fn zero_count_sample_is_empty() {
        assert!(Prior::rademacher().sample(0, &mut stream(1)).unwrap().is_empty());
    }

    #[test]
    fn subgaussian_diag_of_rademacher_is_at_most_one() {
        // log cosh(λ) <= λ²/2, so the diagnostic never exceeds 1.
        let s = Prior::rademacher().subgaussian_diag().unwrap();
        assert!(s <= 1.0 + 1e-12 && s > 0.5);
    }
}
