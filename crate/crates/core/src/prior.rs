//! Factorized priors over parameter vectors.
//!
//! Every family is i.i.d. across coordinates and symmetric about zero. Log
//! densities include their normalizing constants.

use std::f64::consts::PI;

use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::model::ParameterVector;
use crate::rng::stream_rng;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "family", deny_unknown_fields)]
pub enum PriorSpec {
    Gaussian {
        variance: f64,
    },
    /// Two zero-mean Gaussian components.
    Mog {
        variances: [f64; 2],
        #[serde(default = "equal_weights")]
        weights: [f64; 2],
    },
    /// Logistic with the scale chosen so the marginal variance is `variance`.
    Logistic {
        variance: f64,
    },
}

fn equal_weights() -> [f64; 2] {
    [0.5, 0.5]
}

impl PriorSpec {
    pub fn gaussian(variance: f64) -> Self {
        PriorSpec::Gaussian { variance }
    }

    pub fn mog(variances: [f64; 2]) -> Self {
        PriorSpec::Mog {
            variances,
            weights: equal_weights(),
        }
    }

    pub fn logistic(variance: f64) -> Self {
        PriorSpec::Logistic { variance }
    }

    /// Gaussian prior equivalent to an L2 penalty `wd/2 · ‖w‖²` on a summed loss.
    pub fn from_weight_decay(weight_decay: f64) -> Self {
        PriorSpec::Gaussian {
            variance: 1.0 / weight_decay,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v > 0.0 && v.is_finite();
        match *self {
            PriorSpec::Gaussian { variance } | PriorSpec::Logistic { variance } => {
                if !positive(variance) {
                    return invalid(format!("prior variance must be positive, got {variance}"));
                }
            }
            PriorSpec::Mog { variances, weights } => {
                if !variances.iter().all(|&v| positive(v)) {
                    return invalid("mixture variances must be positive");
                }
                if !weights.iter().all(|&w| positive(w)) || ((weights[0] + weights[1]) - 1.0).abs() > 1e-12 {
                    return invalid("mixture weights must be positive and sum to 1");
                }
            }
        }
        Ok(())
    }

    /// Marginal variance of one coordinate.
    pub fn variance(&self) -> f64 {
        match *self {
            PriorSpec::Gaussian { variance } | PriorSpec::Logistic { variance } => variance,
            PriorSpec::Mog { variances, weights } => weights[0] * variances[0] + weights[1] * variances[1],
        }
    }

    pub fn std(&self) -> f64 {
        self.variance().sqrt()
    }

    /// Log-density of one coordinate.
    pub fn log_density_1d(&self, w: f64) -> f64 {
        match *self {
            PriorSpec::Gaussian { variance } => -0.5 * (LN_2PI + variance.ln()) - 0.5 * w * w / variance,
            PriorSpec::Mog { variances, weights } => {
                let a = weights[0].ln() - 0.5 * (LN_2PI + variances[0].ln()) - 0.5 * w * w / variances[0];
                let b = weights[1].ln() - 0.5 * (LN_2PI + variances[1].ln()) - 0.5 * w * w / variances[1];
                let m = a.max(b);
                m + ((a - m).exp() + (b - m).exp()).ln()
            }
            PriorSpec::Logistic { variance } => {
                let s = logistic_scale(variance);
                let z = w.abs() / s;
                -z - 2.0 * (-z).exp().ln_1p() - s.ln()
            }
        }
    }

    /// Derivative of [`Self::log_density_1d`].
    pub fn grad_1d(&self, w: f64) -> f64 {
        match *self {
            PriorSpec::Gaussian { variance } => -w / variance,
            PriorSpec::Mog { variances, weights } => {
                let a = weights[0].ln() - 0.5 * variances[0].ln() - 0.5 * w * w / variances[0];
                let b = weights[1].ln() - 0.5 * variances[1].ln() - 0.5 * w * w / variances[1];
                let m = a.max(b);
                let (ra, rb) = ((a - m).exp(), (b - m).exp());
                -w * (ra / variances[0] + rb / variances[1]) / (ra + rb)
            }
            PriorSpec::Logistic { variance } => {
                let s = logistic_scale(variance);
                -(w / (2.0 * s)).tanh() / s
            }
        }
    }

    fn sample_1d<R: rand::Rng>(&self, rng: &mut R) -> f64 {
        match *self {
            PriorSpec::Gaussian { variance } => Normal::new(0.0, variance.sqrt()).unwrap().sample(rng),
            PriorSpec::Mog { variances, weights } => {
                let u: f64 = Uniform::new(0.0, 1.0).unwrap().sample(rng);
                let v = if u < weights[0] { variances[0] } else { variances[1] };
                Normal::new(0.0, v.sqrt()).unwrap().sample(rng)
            }
            PriorSpec::Logistic { variance } => {
                let s = logistic_scale(variance);
                let u: f64 = Uniform::new(f64::EPSILON, 1.0).unwrap().sample(rng);
                s * (u / (1.0 - u)).ln()
            }
        }
    }
}

/// Per-coordinate logistic scale `s = √(3v)/π` for marginal variance `v`.
pub fn logistic_scale(variance: f64) -> f64 {
    (3.0 * variance).sqrt() / PI
}

pub fn log_prior(prior: &PriorSpec, w: &[f64]) -> f64 {
    match *prior {
        // closed form avoids one log per coordinate
        PriorSpec::Gaussian { variance } => {
            let sq: f64 = w.iter().map(|v| v * v).sum();
            -0.5 * w.len() as f64 * (LN_2PI + variance.ln()) - 0.5 * sq / variance
        }
        _ => w.iter().map(|&v| prior.log_density_1d(v)).sum(),
    }
}

pub fn grad_log_prior(prior: &PriorSpec, w: &[f64]) -> ParameterVector {
    ParameterVector::from_vec_unchecked(w.iter().map(|&v| prior.grad_1d(v)).collect())
}

/// Adds `∇ log p(w)` into `out`.
pub(crate) fn add_grad_log_prior(prior: &PriorSpec, w: &[f64], out: &mut [f64]) {
    for (o, &v) in out.iter_mut().zip(w) {
        *o += prior.grad_1d(v);
    }
}

/// `dim` i.i.d. draws, deterministic in `seed`.
pub fn sample_prior(prior: &PriorSpec, dim: usize, seed: u64) -> Result<ParameterVector> {
    if dim == 0 {
        return invalid("prior sample dimension must be at least 1");
    }
    prior.validate()?;
    let mut rng = stream_rng(seed, 0);
    Ok(sample_prior_with(prior, dim, &mut rng))
}

pub(crate) fn sample_prior_with<R: rand::Rng>(prior: &PriorSpec, dim: usize, rng: &mut R) -> ParameterVector {
    ParameterVector::from_vec_unchecked((0..dim).map(|_| prior.sample_1d(rng)).collect())
}
