//! Tempered posterior `p_T(w | D) ∝ (p(D | w) p(w))^{1/T}` over network weights.
//!
//! Full-batch evaluation is split into fixed blocks of rows. Each block's
//! partial log-likelihood and gradient is computed independently, possibly on
//! different workers, and the partials are combined with a pairwise tree
//! whose shape depends only on the number of blocks. The result is therefore
//! bitwise identical for every shard count and every thread schedule.

use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::model::{self, Dataset, ModelSpec, ParameterVector};
use crate::prior::{self, PriorSpec};

/// Rows per reduction block unless configured otherwise.
pub const DEFAULT_BLOCK_ROWS: usize = 256;

/// A differentiable unnormalized log-density over a flat parameter vector.
pub trait LogDensity: Sync {
    fn dim(&self) -> usize;

    /// Writes `∇ log p(w)` into `grad` and returns `log p(w)`.
    fn value_and_grad(&self, w: &[f64], grad: &mut [f64]) -> Result<f64>;

    fn value(&self, w: &[f64]) -> Result<f64> {
        let mut g = vec![0.0; self.dim()];
        self.value_and_grad(w, &mut g)
    }

    /// Prior used for chain initialization, if the target has one.
    fn init_prior(&self) -> Option<PriorSpec> {
        None
    }
}

#[derive(Clone, Debug)]
pub struct PosteriorSpec {
    pub model: ModelSpec,
    pub prior: PriorSpec,
    pub data: Arc<Dataset>,
    pub temperature: f64,
    /// Worker shards used by [`LogDensity::value_and_grad`].
    pub num_shards: usize,
    pub block_rows: usize,
}

impl PosteriorSpec {
    pub fn new(model: ModelSpec, prior: PriorSpec, data: impl Into<Arc<Dataset>>, temperature: f64) -> Result<Self> {
        let post = PosteriorSpec {
            model,
            prior,
            data: data.into(),
            temperature,
            num_shards: 1,
            block_rows: DEFAULT_BLOCK_ROWS,
        };
        post.validate()?;
        Ok(post)
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.prior.validate()?;
        self.data.check_compatible(&self.model)?;
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return invalid(format!("temperature must be positive, got {}", self.temperature));
        }
        if self.num_shards == 0 || self.block_rows == 0 {
            return invalid("num_shards and block_rows must be at least 1");
        }
        Ok(())
    }

    pub fn with_temperature(&self, temperature: f64) -> Result<Self> {
        let mut p = self.clone();
        p.temperature = temperature;
        p.validate()?;
        Ok(p)
    }

    pub fn with_shards(mut self, num_shards: usize) -> Self {
        self.num_shards = num_shards.max(1);
        self
    }

    pub fn param_count(&self) -> usize {
        self.model.param_count()
    }

    fn blocks(&self) -> Vec<std::ops::Range<usize>> {
        let n = self.data.len();
        (0..n)
            .step_by(self.block_rows)
            .map(|lo| lo..(lo + self.block_rows).min(n))
            .collect()
    }

    /// Untempered full-data log-likelihood.
    pub fn log_likelihood(&self, w: &[f64]) -> Result<f64> {
        let parts = self
            .blocks()
            .into_iter()
            .map(|rows| model::loglik_value(&self.model, w, &self.data, rows))
            .collect::<Result<Vec<f64>>>()?;
        let ll = tree_sum_scalars(parts);
        if !ll.is_finite() {
            return Err(Error::NonFinite("log-likelihood".into()));
        }
        Ok(ll)
    }

    /// Untempered log-prior.
    pub fn log_prior(&self, w: &[f64]) -> f64 {
        prior::log_prior(&self.prior, w)
    }

    /// `(log p(D|w) + log p(w)) / T`.
    pub fn log_density(&self, w: &[f64]) -> Result<f64> {
        let joint = self.log_likelihood(w)? + self.log_prior(w);
        finite(joint / self.temperature, "log-density")
    }

    pub fn grad_log_density(&self, w: &[f64]) -> Result<ParameterVector> {
        Ok(self.sharded_value_and_grad(w, 1)?.1)
    }

    /// Tempered log-density and gradient with the data split over `num_shards` workers.
    pub fn sharded_value_and_grad(&self, w: &[f64], num_shards: usize) -> Result<(f64, ParameterVector)> {
        let (ll, mut grad) = self.sharded_loglik(w, num_shards)?;
        let joint = ll + self.log_prior(w);
        prior::add_grad_log_prior(&self.prior, w, &mut grad);
        for g in grad.iter_mut() {
            *g /= self.temperature;
        }
        let value = finite(joint / self.temperature, "log-density")?;
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite("log-density gradient".into()));
        }
        Ok((value, ParameterVector::from_vec_unchecked(grad)))
    }

    /// Untempered full-data log-likelihood and gradient.
    ///
    /// Shards own contiguous runs of blocks; when there are fewer blocks than
    /// shards the surplus shards are dropped rather than padded.
    pub fn sharded_loglik(&self, w: &[f64], num_shards: usize) -> Result<(f64, Vec<f64>)> {
        if w.len() != self.param_count() {
            return Err(Error::Shape(format!(
                "parameter vector has length {}, model needs {}",
                w.len(),
                self.param_count()
            )));
        }
        let blocks = self.blocks();
        let per_shard = blocks.len().div_ceil(num_shards.max(1));
        let eval = |chunk: &[std::ops::Range<usize>]| -> Result<Vec<(f64, Vec<f64>)>> {
            chunk
                .iter()
                .map(|rows| model::loglik_value_and_grad(&self.model, w, &self.data, rows.clone()))
                .collect()
        };
        let partials: Vec<(f64, Vec<f64>)> = if num_shards <= 1 {
            eval(&blocks)?
        } else {
            let shard_results: Vec<Result<Vec<_>>> = blocks.par_chunks(per_shard).map(eval).collect();
            let mut all = Vec::with_capacity(blocks.len());
            for r in shard_results {
                all.extend(r?);
            }
            all
        };
        Ok(tree_sum(partials))
    }

    /// Untempered log-likelihood and gradient from the rows in `batch`, rescaled by `n / |batch|`.
    pub fn minibatch_loglik(&self, w: &[f64], batch: &[usize]) -> Result<(f64, Vec<f64>)> {
        if batch.is_empty() {
            return invalid("empty minibatch");
        }
        let sub = self.data.select(batch);
        let (ll, mut grad) = model::loglik_value_and_grad(&self.model, w, &sub, 0..sub.len())?;
        let scale = self.data.len() as f64 / batch.len() as f64;
        for g in grad.iter_mut() {
            *g *= scale;
        }
        Ok((scale * ll, grad))
    }

    /// Stochastic estimate of the untempered `∇ log p(w | D)` from the rows in `batch`.
    ///
    /// The likelihood gradient is rescaled by `n / |batch|`; the returned value is
    /// the matching rescaled log-joint.
    pub fn minibatch_value_and_grad(&self, w: &[f64], batch: &[usize]) -> Result<(f64, Vec<f64>)> {
        let (ll, mut grad) = self.minibatch_loglik(w, batch)?;
        prior::add_grad_log_prior(&self.prior, w, &mut grad);
        let value = ll + self.log_prior(w);
        Ok((finite(value, "minibatch log-density")?, grad))
    }
}

impl LogDensity for PosteriorSpec {
    fn dim(&self) -> usize {
        self.param_count()
    }

    fn value_and_grad(&self, w: &[f64], grad: &mut [f64]) -> Result<f64> {
        let (v, g) = self.sharded_value_and_grad(w, self.num_shards)?;
        grad.copy_from_slice(&g);
        Ok(v)
    }

    fn value(&self, w: &[f64]) -> Result<f64> {
        self.log_density(w)
    }

    fn init_prior(&self) -> Option<PriorSpec> {
        Some(self.prior)
    }
}

fn finite(v: f64, what: &str) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFinite(what.into()))
    }
}

/// Pairwise reduction with a fixed tree shape.
fn tree_sum(mut items: Vec<(f64, Vec<f64>)>) -> (f64, Vec<f64>) {
    while items.len() > 1 {
        let mut next = Vec::with_capacity(items.len().div_ceil(2));
        let mut it = items.into_iter();
        while let Some((va, mut ga)) = it.next() {
            if let Some((vb, gb)) = it.next() {
                for (a, b) in ga.iter_mut().zip(&gb) {
                    *a += b;
                }
                next.push((va + vb, ga));
            } else {
                next.push((va, ga));
            }
        }
        items = next;
    }
    items.pop().expect("at least one block")
}

fn tree_sum_scalars(mut items: Vec<f64>) -> f64 {
    while items.len() > 1 {
        items = items.chunks(2).map(|c| if c.len() == 2 { c[0] + c[1] } else { c[0] }).collect();
    }
    items[0]
}
