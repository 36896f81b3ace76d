//! Gauss–Hermite rules for expectations over a standard normal variable.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

pub const DEFAULT_NODES: usize = 61;
pub const FINE_NODES: usize = 121;

/// Nodes and weights with `Σ w_k f(z_k) ≈ E f(z)`, `z ~ N(0,1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussHermite {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussHermite {
    /// Golub–Welsch: eigen-decomposition of the Jacobi matrix of the monic
    /// probabilists' Hermite recurrence `He_{k+1} = z He_k - k He_{k-1}`.
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::param("quad_nodes", "need at least one node"));
        }
        let mut jac = DMatrix::<f64>::zeros(n, n);
        for k in 1..n {
            let b = (k as f64).sqrt();
            jac[(k - 1, k)] = b;
            jac[(k, k - 1)] = b;
        }
        let eig = SymmetricEigen::new(jac);
        let mut pairs: Vec<(f64, f64)> = (0..n)
            .map(|k| (eig.eigenvalues[k], eig.eigenvectors[(0, k)].powi(2)))
            .collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        // Symmetrize to remove eigensolver round-off.
        for k in 0..n / 2 {
            let (a, b) = (pairs[k], pairs[n - 1 - k]);
            let z = 0.5 * (b.0 - a.0);
            let w = 0.5 * (a.1 + b.1);
            pairs[k] = (-z, w);
            pairs[n - 1 - k] = (z, w);
        }
        if n % 2 == 1 {
            pairs[n / 2].0 = 0.0;
        }
        let total: f64 = pairs.iter().map(|p| p.1).sum();
        let rule = GaussHermite {
            nodes: pairs.iter().map(|p| p.0).collect(),
            weights: pairs.iter().map(|p| p.1 / total).collect(),
        };
        rule.validate()?;
        Ok(rule)
    }

    fn validate(&self) -> Result<()> {
        let m2 = self.expect(|z| z * z);
        let m4 = self.expect(|z| z.powi(4));
        let need4 = self.len() >= 3;
        if (m2 - 1.0).abs() > 1e-10 && self.len() >= 2 || need4 && (m4 - 3.0).abs() > 1e-9 {
            return Err(Error::NonConvergence(format!(
                "Gauss-Hermite rule with {} nodes fails moment check (E z^2 = {m2}, E z^4 = {m4})",
                self.len()
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn expect(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&z, &w)| w * f(z)).sum()
    }
}
