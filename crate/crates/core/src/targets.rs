//! Closed-form targets for validating samplers.

use crate::error::{invalid, Result};
use crate::posterior::LogDensity;
use crate::prior::PriorSpec;

/// `N(0, std² I)` in `dim` dimensions.
#[derive(Clone, Copy, Debug)]
pub struct IsotropicGaussian {
    pub dim: usize,
    pub std: f64,
}

impl LogDensity for IsotropicGaussian {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value_and_grad(&self, w: &[f64], grad: &mut [f64]) -> Result<f64> {
        let var = self.std * self.std;
        let mut sq = 0.0;
        for (g, &x) in grad.iter_mut().zip(w) {
            *g = -x / var;
            sq += x * x;
        }
        Ok(-0.5 * sq / var)
    }

    fn init_prior(&self) -> Option<PriorSpec> {
        Some(PriorSpec::gaussian(self.std * self.std))
    }
}

/// One-dimensional Gaussian mixture `Σ πₖ N(μₖ, σₖ²)`.
#[derive(Clone, Debug)]
pub struct GaussianMixture1d {
    pub weights: Vec<f64>,
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

impl GaussianMixture1d {
    pub fn new(weights: Vec<f64>, means: Vec<f64>, stds: Vec<f64>) -> Result<Self> {
        if weights.is_empty() || weights.len() != means.len() || weights.len() != stds.len() {
            return invalid("mixture components must have matching, non-empty lengths");
        }
        if weights.iter().chain(&stds).any(|&v| !(v > 0.0)) {
            return invalid("mixture weights and stds must be positive");
        }
        Ok(GaussianMixture1d { weights, means, stds })
    }

    pub fn pdf(&self, x: f64) -> f64 {
        let norm = (2.0 * std::f64::consts::PI).sqrt();
        let total: f64 = self.weights.iter().sum();
        self.components()
            .map(|(p, m, s)| {
                let z = (x - m) / s;
                p / total * (-0.5 * z * z).exp() / (s * norm)
            })
            .sum()
    }

    fn components(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        self.weights
            .iter()
            .zip(&self.means)
            .zip(&self.stds)
            .map(|((&p, &m), &s)| (p, m, s))
    }
}

impl LogDensity for GaussianMixture1d {
    fn dim(&self) -> usize {
        1
    }

    fn value_and_grad(&self, w: &[f64], grad: &mut [f64]) -> Result<f64> {
        let x = w[0];
        let logs: Vec<(f64, f64)> = self
            .components()
            .map(|(p, m, s)| {
                let z = (x - m) / s;
                (p.ln() - s.ln() - 0.5 * z * z, -(x - m) / (s * s))
            })
            .collect();
        let max = logs.iter().fold(f64::NEG_INFINITY, |a, &(l, _)| a.max(l));
        let mut total = 0.0;
        let mut dsum = 0.0;
        for &(l, d) in &logs {
            let r = (l - max).exp();
            total += r;
            dsum += r * d;
        }
        grad[0] = dsum / total;
        Ok(max + total.ln())
    }
}
