//! Optimization and stochastic-gradient baselines: SGD, deep ensembles,
//! SGLD, SGHMC and mean-field variational inference.
//!
//! All routines work on the untempered posterior. Weight decay is expressed
//! through the posterior's prior (`PriorSpec::from_weight_decay`).

use std::f64::consts::PI;

use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::model::{softplus, ModelSpec, ParameterVector};
use crate::posterior::PosteriorSpec;
use crate::prior::PriorSpec;
use crate::rng::{fill_standard_normal, stream_rng, Rng};
use crate::store::{SampleStore, StoreMeta};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Schedule {
    Constant,
    Cosine,
    Cyclical { n_cycles: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Preconditioner {
    None,
    Rms { decay: f64, eps: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub step_size: f64,
    #[serde(default = "default_schedule")]
    pub schedule: Schedule,
    /// Rows per minibatch; `None` uses the full dataset every step.
    #[serde(default)]
    pub batch_size: Option<usize>,
    pub n_epochs: usize,
    #[serde(default)]
    pub momentum: f64,
    #[serde(default = "default_preconditioner")]
    pub preconditioner: Preconditioner,
    /// Epochs before the first sample is kept (samplers only).
    #[serde(default)]
    pub burnin_epochs: usize,
    /// Epochs between kept samples (samplers only).
    #[serde(default = "default_thin")]
    pub thin_epochs: usize,
    /// Initial weight std; `None` uses `√(2/fan_in)` for weights and zero biases.
    #[serde(default)]
    pub init_std: Option<f64>,
    #[serde(default)]
    pub seed: u64,
}

fn default_schedule() -> Schedule {
    Schedule::Constant
}

fn default_preconditioner() -> Preconditioner {
    Preconditioner::None
}

fn default_thin() -> usize {
    10
}

impl TrainConfig {
    pub fn new(step_size: f64, n_epochs: usize) -> Self {
        TrainConfig {
            step_size,
            schedule: Schedule::Constant,
            batch_size: None,
            n_epochs,
            momentum: 0.0,
            preconditioner: Preconditioner::None,
            burnin_epochs: 0,
            thin_epochs: default_thin(),
            init_std: None,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return invalid(format!("step size must be positive, got {}", self.step_size));
        }
        if self.n_epochs == 0 {
            return invalid("n_epochs must be at least 1");
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return invalid(format!("momentum must lie in [0, 1), got {}", self.momentum));
        }
        if self.batch_size == Some(0) {
            return invalid("batch size must be at least 1");
        }
        if self.thin_epochs == 0 {
            return invalid("thin_epochs must be at least 1");
        }
        if let Schedule::Cyclical { n_cycles: 0 } = self.schedule {
            return invalid("cyclical schedule needs at least one cycle");
        }
        if let Preconditioner::Rms { decay, eps } = self.preconditioner {
            if !(0.0..1.0).contains(&decay) || !(eps > 0.0) {
                return invalid("rms preconditioner needs decay in [0, 1) and eps > 0");
            }
        }
        if let Some(s) = self.init_std {
            if !(s > 0.0) {
                return invalid("init_std must be positive");
            }
        }
        Ok(())
    }

    fn lr(&self, t: usize, total: usize) -> f64 {
        match self.schedule {
            Schedule::Constant => self.step_size,
            Schedule::Cosine => cosine_lr(t as f64, total as f64, self.step_size),
            Schedule::Cyclical { n_cycles } => cyclical_lr(t as f64, total as f64, n_cycles, self.step_size),
        }
    }
}

/// `base · ½(1 + cos(π t / total))`.
pub fn cosine_lr(t: f64, total: f64, base: f64) -> f64 {
    base * 0.5 * (1.0 + (PI * (t / total)).cos())
}

/// Cosine schedule restarted at the start of each of `n_cycles` equal cycles.
pub fn cyclical_lr(t: f64, total: f64, n_cycles: usize, base: f64) -> f64 {
    let len = total / n_cycles as f64;
    let frac = (t % len) / len;
    base * 0.5 * (1.0 + (PI * frac).cos())
}

/// Default initialization: `N(0, 2/fan_in)` weights, zero biases.
pub fn he_init(spec: &ModelSpec, rng: &mut Rng) -> ParameterVector {
    let mut out = Vec::with_capacity(spec.param_count());
    for (fan_in, fan_out) in spec.layer_shapes() {
        let mut w = vec![0.0; fan_in * fan_out];
        fill_standard_normal(rng, &mut w);
        let s = (2.0 / fan_in as f64).sqrt();
        out.extend(w.iter().map(|z| z * s));
        out.extend(std::iter::repeat(0.0).take(fan_out));
    }
    ParameterVector::from_vec_unchecked(out)
}

fn initial(config: &TrainConfig, spec: &ModelSpec, rng: &mut Rng) -> ParameterVector {
    match config.init_std {
        None => he_init(spec, rng),
        Some(s) => {
            let mut w = vec![0.0; spec.param_count()];
            fill_standard_normal(rng, &mut w);
            w.iter_mut().for_each(|v| *v *= s);
            ParameterVector::from_vec_unchecked(w)
        }
    }
}

/// Per-epoch minibatch partitions.
struct Batcher {
    n: usize,
    batch: Option<usize>,
}

impl Batcher {
    fn new(config: &TrainConfig, n: usize) -> Result<Self> {
        match config.batch_size {
            Some(b) if b > n => invalid(format!("batch size {b} exceeds {n} training rows")),
            Some(b) if b < n => Ok(Batcher { n, batch: Some(b) }),
            _ => Ok(Batcher { n, batch: None }),
        }
    }

    fn steps_per_epoch(&self) -> usize {
        self.batch.map_or(1, |b| self.n.div_ceil(b))
    }

    /// Shuffled partition of the rows; `None` entries mean "all rows".
    fn epoch(&self, rng: &mut Rng) -> Vec<Option<Vec<usize>>> {
        use rand::seq::SliceRandom;
        match self.batch {
            None => vec![None],
            Some(b) => {
                let mut idx: Vec<usize> = (0..self.n).collect();
                idx.shuffle(rng);
                idx.chunks(b).map(|c| Some(c.to_vec())).collect()
            }
        }
    }
}

/// `(log p(D|w) + log p(w), ∇)` at temperature 1, stochastic when `batch` is given.
fn joint_and_grad(post: &PosteriorSpec, w: &[f64], batch: &Option<Vec<usize>>) -> Result<(f64, Vec<f64>)> {
    match batch {
        Some(b) => post.minibatch_value_and_grad(w, b),
        None => post
            .sharded_value_and_grad(w, post.num_shards)
            .map(|(v, g)| (v, g.into_inner())),
    }
}

fn untempered(post: &PosteriorSpec) -> Result<PosteriorSpec> {
    post.with_temperature(1.0)
}

fn require_unit_temperature(post: &PosteriorSpec) -> Result<()> {
    if post.temperature != 1.0 {
        return invalid("stochastic-gradient samplers only support temperature 1");
    }
    Ok(())
}

fn diverged(epoch: usize, what: &str) -> Error {
    Error::NonFinite(format!("{what} at epoch {epoch}; reduce the step size"))
}

/// Minibatch SGD with heavy-ball momentum on the negative log-joint.
pub fn train_sgd(config: &TrainConfig, post: &PosteriorSpec) -> Result<ParameterVector> {
    train_sgd_member(config, post, 0)
}

/// [`train_sgd`] on random stream `member` of the configured seed.
pub fn train_sgd_member(config: &TrainConfig, post: &PosteriorSpec, member: u64) -> Result<ParameterVector> {
    Ok(sgd_with_history(config, post, member)?.0)
}

/// SGD returning the final weights and the mean training loss of each epoch.
pub fn sgd_with_history(config: &TrainConfig, post: &PosteriorSpec, member: u64) -> Result<(ParameterVector, Vec<f64>)> {
    config.validate()?;
    let post = untempered(post)?;
    let mut rng = stream_rng(config.seed, member);
    let mut w = initial(config, &post.model, &mut rng).into_inner();
    sgd_from(config, &post, &mut w, &mut rng).map(|h| (ParameterVector::from_vec_unchecked(w), h))
}

fn sgd_from(config: &TrainConfig, post: &PosteriorSpec, w: &mut [f64], rng: &mut Rng) -> Result<Vec<f64>> {
    let batcher = Batcher::new(config, post.data.len())?;
    let total = config.n_epochs * batcher.steps_per_epoch();
    let mut vel = vec![0.0; w.len()];
    let mut t = 0;
    let mut history = Vec::with_capacity(config.n_epochs);
    for epoch in 0..config.n_epochs {
        let mut loss = 0.0;
        let batches = batcher.epoch(rng);
        for b in &batches {
            let (joint, g) = joint_and_grad(post, w, b).map_err(|_| diverged(epoch, "SGD loss"))?;
            loss -= joint;
            let lr = config.lr(t, total);
            for ((wi, vi), gi) in w.iter_mut().zip(vel.iter_mut()).zip(&g) {
                *vi = config.momentum * *vi - gi;
                *wi -= lr * *vi;
            }
            t += 1;
        }
        let loss = loss / batches.len() as f64;
        if !loss.is_finite() || w.iter().any(|v| !v.is_finite()) {
            return Err(diverged(epoch, "SGD loss"));
        }
        history.push(loss);
    }
    Ok(history)
}

/// `n_models` independent SGD solutions; member `k` uses stream `k` of the seed.
pub fn deep_ensemble(n_models: usize, config: &TrainConfig, post: &PosteriorSpec) -> Result<Vec<ParameterVector>> {
    if n_models == 0 {
        return invalid("ensemble needs at least one member");
    }
    (0..n_models as u64)
        .into_par_iter()
        .map(|k| train_sgd_member(config, post, k))
        .collect()
}

fn sampler_meta(method: &str, config: &TrainConfig, chain_id: usize, extra: serde_json::Value) -> StoreMeta {
    StoreMeta {
        method: method.into(),
        chain_id,
        seed: config.seed,
        accept_rate: 1.0,
        accept_history: Vec::new(),
        burnin_accept_probs: Vec::new(),
        config: serde_json::json!({ "train": config, "update": extra }),
    }
}

fn keep_sample(config: &TrainConfig, epoch: usize) -> bool {
    epoch >= config.burnin_epochs && (epoch + 1 - config.burnin_epochs) % config.thin_epochs == 0
}

/// Stochastic gradient Langevin dynamics,
/// `w ← w + (ε/2)·∇̂ log p(w|D) + N(0, ε I)`.
pub fn sgld_run(config: &TrainConfig, post: &PosteriorSpec) -> Result<SampleStore> {
    sgld_run_from(config, post, None, 0)
}

pub fn sgld_run_from(config: &TrainConfig, post: &PosteriorSpec, init: Option<&[f64]>, chain_id: usize) -> Result<SampleStore> {
    let mut cfg = config.clone();
    cfg.momentum = 0.0;
    let meta = sampler_meta("sgld", &cfg, chain_id, serde_json::json!("w += (eps/2) g + sqrt(eps) z"));
    sghmc_inner(&cfg, post, init, chain_id, meta)
}

/// Stochastic gradient HMC in velocity form. With `η = ε/2` and `μ` the momentum,
///
/// `v ← μ v + η P ∇̂ log p(w|D) + N(0, 2(1−μ) η P)`, `w ← w + v`,
///
/// where `P` is the elementwise RMS preconditioner (identity when disabled).
/// `μ = 0` gives exactly the SGLD update.
pub fn sghmc_run(config: &TrainConfig, post: &PosteriorSpec) -> Result<SampleStore> {
    sghmc_run_from(config, post, None, 0)
}

pub fn sghmc_run_from(config: &TrainConfig, post: &PosteriorSpec, init: Option<&[f64]>, chain_id: usize) -> Result<SampleStore> {
    let meta = sampler_meta(
        "sghmc",
        config,
        chain_id,
        serde_json::json!("v = mu v + (eps/2) P g + sqrt(2 (1 - mu) (eps/2) P) z; w += v"),
    );
    sghmc_inner(config, post, init, chain_id, meta)
}

fn sghmc_inner(
    config: &TrainConfig,
    post: &PosteriorSpec,
    init: Option<&[f64]>,
    chain_id: usize,
    meta: StoreMeta,
) -> Result<SampleStore> {
    config.validate()?;
    require_unit_temperature(post)?;
    let mut rng = stream_rng(config.seed, chain_id as u64);
    let mut w = match init {
        Some(w0) if w0.len() == post.param_count() => w0.to_vec(),
        Some(w0) => {
            return Err(Error::Shape(format!("init has {} parameters, model needs {}", w0.len(), post.param_count())))
        }
        None => initial(config, &post.model, &mut rng).into_inner(),
    };
    let batcher = Batcher::new(config, post.data.len())?;
    let total = config.n_epochs * batcher.steps_per_epoch();
    let p = w.len();
    let mut vel = vec![0.0; p];
    let mut noise = vec![0.0; p];
    let mut sq_avg = vec![0.0; p];
    let mut precond = vec![1.0; p];
    let mu = config.momentum;
    let mut samples = Vec::new();
    let mut t = 0;
    for epoch in 0..config.n_epochs {
        for b in batcher.epoch(&mut rng) {
            let (_, g) = joint_and_grad(post, &w, &b).map_err(|_| diverged(epoch, "sampler log-density"))?;
            if let Preconditioner::Rms { decay, eps } = config.preconditioner {
                for ((s, pc), gi) in sq_avg.iter_mut().zip(precond.iter_mut()).zip(&g) {
                    *s = decay * *s + (1.0 - decay) * gi * gi;
                    *pc = 1.0 / (s.sqrt() + eps);
                }
            }
            let eta = 0.5 * config.lr(t, total);
            fill_standard_normal(&mut rng, &mut noise);
            for i in 0..p {
                let scale = (2.0 * (1.0 - mu) * eta * precond[i]).sqrt();
                vel[i] = mu * vel[i] + eta * precond[i] * g[i] + scale * noise[i];
                w[i] += vel[i];
            }
            t += 1;
        }
        if w.iter().any(|v| !v.is_finite()) {
            return Err(diverged(epoch, "sampler state"));
        }
        if keep_sample(config, epoch) {
            samples.push(ParameterVector::from_vec_unchecked(w.clone()));
        }
    }
    SampleStore::new(samples, meta)
}

/// Diagonal Gaussian `q(w) = N(mean, softplus(rho)²)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VariationalPosterior {
    pub mean: ParameterVector,
    /// Unconstrained scale parameters.
    pub rho: Vec<f64>,
}

/// Inverse of softplus for positive `y`.
pub fn softplus_inv(y: f64) -> f64 {
    if y > 30.0 {
        y
    } else {
        y.exp_m1().ln()
    }
}

impl VariationalPosterior {
    pub fn new(mean: ParameterVector, variance: f64) -> Result<Self> {
        if !(variance > 0.0) {
            return invalid("variational variance must be positive");
        }
        let rho = vec![softplus_inv(variance.sqrt()); mean.len()];
        Ok(VariationalPosterior { mean, rho })
    }

    pub fn std(&self) -> Vec<f64> {
        self.rho.iter().map(|&r| softplus(r)).collect()
    }

    pub fn variance(&self) -> Vec<f64> {
        self.std().iter().map(|s| s * s).collect()
    }
}

fn gaussian_prior_variance(prior: &PriorSpec) -> Result<f64> {
    match prior {
        PriorSpec::Gaussian { variance } => Ok(*variance),
        _ => invalid("variational inference requires a Gaussian prior"),
    }
}

/// `KL(q ‖ N(0, v I))`.
pub fn kl_to_prior(vp: &VariationalPosterior, prior: &PriorSpec) -> Result<f64> {
    let v = gaussian_prior_variance(prior)?;
    Ok(vp
        .mean
        .iter()
        .zip(vp.std())
        .map(|(m, s)| 0.5 * (v / (s * s)).ln() + (s * s + m * m) / (2.0 * v) - 0.5)
        .sum())
}

/// Gradient of the KL with respect to `(mean, rho)`.
pub fn kl_grad(vp: &VariationalPosterior, prior: &PriorSpec) -> Result<(Vec<f64>, Vec<f64>)> {
    let v = gaussian_prior_variance(prior)?;
    let gm = vp.mean.iter().map(|m| m / v).collect();
    let gr = vp
        .rho
        .iter()
        .map(|&r| {
            let s = softplus(r);
            (-1.0 / s + s / v) * crate::model::sigmoid(r)
        })
        .collect();
    Ok((gm, gr))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MfviConfig {
    pub train: TrainConfig,
    /// Initial per-coordinate variance of `q`.
    #[serde(default = "default_vi_variance")]
    pub init_variance: f64,
    #[serde(default = "default_beta2")]
    pub beta2: f64,
}

fn default_vi_variance() -> f64 {
    1e-2
}

fn default_beta2() -> f64 {
    0.999
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MfviFit {
    pub posterior: VariationalPosterior,
    /// Mean single-sample ELBO estimate per epoch.
    pub elbo_history: Vec<f64>,
}

/// Maximizes the ELBO with Adam, one reparameterized draw per step.
///
/// `train.momentum` is Adam's first-moment decay (0.9 if zero).
pub fn mfvi_fit(config: &MfviConfig, post: &PosteriorSpec, init_mean: &ParameterVector) -> Result<MfviFit> {
    let tc = &config.train;
    tc.validate()?;
    require_unit_temperature(post)?;
    let prior_var = gaussian_prior_variance(&post.prior)?;
    if init_mean.len() != post.param_count() {
        return Err(Error::Shape("init mean does not match the model".into()));
    }
    let mut vp = VariationalPosterior::new(init_mean.clone(), config.init_variance)?;
    let p = vp.mean.len();
    let mut rng = stream_rng(tc.seed, 0);
    let batcher = Batcher::new(tc, post.data.len())?;
    let total = tc.n_epochs * batcher.steps_per_epoch();
    let beta1 = if tc.momentum > 0.0 { tc.momentum } else { 0.9 };
    let beta2 = config.beta2;
    let (mut m1, mut m2) = (vec![0.0; 2 * p], vec![0.0; 2 * p]);
    let mut eps = vec![0.0; p];
    let mut w = vec![0.0; p];
    let mut history = Vec::with_capacity(tc.n_epochs);
    let mut t = 0;
    for epoch in 0..tc.n_epochs {
        let mut acc = 0.0;
        let batches = batcher.epoch(&mut rng);
        for b in &batches {
            fill_standard_normal(&mut rng, &mut eps);
            let std = vp.std();
            for i in 0..p {
                w[i] = vp.mean[i] + std[i] * eps[i];
            }
            let (ll, g) = match b {
                Some(b) => post.minibatch_loglik(&w, b),
                None => post.sharded_loglik(&w, post.num_shards),
            }
            .map_err(|_| diverged(epoch, "ELBO"))?;
            let kl = kl_to_prior(&vp, &PriorSpec::gaussian(prior_var))?;
            let (kgm, kgr) = kl_grad(&vp, &PriorSpec::gaussian(prior_var))?;
            acc += ll - kl;
            let lr = tc.lr(t, total);
            t += 1;
            let (b1t, b2t) = (1.0 - beta1.powi(t as i32), 1.0 - beta2.powi(t as i32));
            for i in 0..2 * p {
                let j = i % p;
                // Ascent direction of the ELBO.
                let grad = if i < p {
                    g[j] - kgm[j]
                } else {
                    g[j] * eps[j] * crate::model::sigmoid(vp.rho[j]) - kgr[j]
                };
                m1[i] = beta1 * m1[i] + (1.0 - beta1) * grad;
                m2[i] = beta2 * m2[i] + (1.0 - beta2) * grad * grad;
                let step = lr * (m1[i] / b1t) / ((m2[i] / b2t).sqrt() + 1e-8);
                if i < p {
                    vp.mean.as_mut_slice()[j] += step;
                } else {
                    vp.rho[j] += step;
                }
            }
        }
        let elbo = acc / batches.len() as f64;
        if !elbo.is_finite() || !vp.mean.is_finite() || vp.rho.iter().any(|r| !r.is_finite()) {
            return Err(diverged(epoch, "ELBO"));
        }
        history.push(elbo);
    }
    Ok(MfviFit {
        posterior: vp,
        elbo_history: history,
    })
}

/// `n` draws from `q`, deterministic in `seed`.
pub fn mfvi_sample(vp: &VariationalPosterior, n: usize, seed: u64) -> Vec<ParameterVector> {
    let mut rng = stream_rng(seed, 0);
    let std = vp.std();
    let normal = Normal::new(0.0, 1.0).unwrap();
    (0..n)
        .map(|_| {
            let w = vp
                .mean
                .iter()
                .zip(&std)
                .map(|(m, s)| m + s * normal.sample(&mut rng))
                .collect();
            ParameterVector::from_vec_unchecked(w)
        })
        .collect()
}

/// Wraps parameter vectors (e.g. ensemble members or VI draws) as a store.
pub fn store_from_members(members: Vec<ParameterVector>, method: &str, seed: u64, config: serde_json::Value) -> Result<SampleStore> {
    SampleStore::new(
        members,
        StoreMeta {
            method: method.into(),
            chain_id: 0,
            seed,
            accept_rate: 1.0,
            accept_history: Vec::new(),
            burnin_accept_probs: Vec::new(),
            config,
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedules() {
        assert_eq!(cosine_lr(0.0, 100.0, 2.0), 2.0);
        assert!(cosine_lr(100.0, 100.0, 2.0).abs() < 1e-15);
        assert!((cosine_lr(50.0, 100.0, 2.0) - 1.0).abs() < 1e-15);
        assert_eq!(cyclical_lr(25.0, 100.0, 4, 2.0), 2.0);
        assert!((cyclical_lr(37.5, 100.0, 4, 2.0) - 1.0).abs() < 1e-15);
        for t in [0.0, 13.0, 71.0] {
            assert_eq!(cyclical_lr(t, 100.0, 1, 3.0), cosine_lr(t, 100.0, 3.0));
        }
    }

    #[test]
    fn softplus_inverse() {
        for y in [1e-3, 0.1, 1.0, 5.0] {
            assert!((softplus(softplus_inv(y)) - y).abs() < 1e-12 * y.max(1.0));
        }
    }

    #[test]
    fn kl_zero_at_prior() {
        let prior = PriorSpec::gaussian(0.25);
        let vp = VariationalPosterior::new(ParameterVector::zeros(5), 0.25).unwrap();
        assert!(kl_to_prior(&vp, &prior).unwrap().abs() < 1e-12);
        let (gm, gr) = kl_grad(&vp, &prior).unwrap();
        assert!(gm.iter().chain(&gr).all(|g| g.abs() < 1e-12));
        assert!(kl_to_prior(&vp, &PriorSpec::logistic(0.25)).is_err());
    }

    #[test]
    fn thinning_count() {
        let mut c = TrainConfig::new(1e-3, 10000);
        c.burnin_epochs = 1000;
        assert_eq!((0..10000).filter(|&e| keep_sample(&c, e)).count(), 900);
    }

    #[test]
    fn bad_configs() {
        let mut c = TrainConfig::new(1e-3, 10);
        c.momentum = 1.0;
        assert!(c.validate().is_err());
        let mut c = TrainConfig::new(1e-3, 10);
        c.batch_size = Some(0);
        assert!(c.validate().is_err());
        assert!(TrainConfig::new(0.0, 10).validate().is_err());
    }
}
