//! Full-batch Hamiltonian Monte Carlo.
//!
//! Each iteration draws a fresh standard-normal momentum, integrates the
//! Hamiltonian dynamics with the leapfrog scheme for `round(τ/Δ)` steps, and
//! (after burn-in) applies a Metropolis–Hastings correction. Burn-in
//! iterations accept every proposal. The current state is stored after every
//! post-burn-in iteration, so a rejection stores a duplicate.

use std::f64::consts::PI;

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::model::ParameterVector;
use crate::posterior::LogDensity;
use crate::prior::sample_prior_with;
use crate::rng::{fill_standard_normal, stream_rng, Rng};
use crate::store::{AcceptRecord, SampleStore, StoreMeta};

/// Trajectory length `π α / 2` for prior standard deviation `α`.
///
/// On `N(0, α² I)` this is a quarter period of every coordinate's harmonic
/// oscillator, which swaps positions and momenta.
pub fn suggest_trajectory_length(prior_std: f64) -> f64 {
    PI * prior_std / 2.0
}

/// `round(τ / Δ)`, at least one.
pub fn n_leapfrog_steps(trajectory_length: f64, step_size: f64) -> usize {
    ((trajectory_length / step_size).round() as usize).max(1)
}

/// How chains pick their starting point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type", deny_unknown_fields)]
pub enum ChainInit {
    /// Draw from the target's prior.
    Prior,
    /// I.i.d. `N(0, scale²)`.
    Gaussian { scale: f64 },
    /// The same supplied vector for every chain.
    Fixed { values: Vec<f64> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HmcConfig {
    pub trajectory_length: f64,
    pub step_size: f64,
    pub n_burnin: usize,
    pub n_samples: usize,
    #[serde(default = "one")]
    pub n_chains: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_init")]
    pub init: ChainInit,
}

fn one() -> usize {
    1
}

fn default_init() -> ChainInit {
    ChainInit::Prior
}

impl HmcConfig {
    pub fn new(trajectory_length: f64, step_size: f64, n_burnin: usize, n_samples: usize) -> Self {
        HmcConfig {
            trajectory_length,
            step_size,
            n_burnin,
            n_samples,
            n_chains: 1,
            seed: 0,
            init: ChainInit::Prior,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.trajectory_length > 0.0 && self.trajectory_length.is_finite()) {
            return invalid(format!("trajectory length must be positive, got {}", self.trajectory_length));
        }
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return invalid(format!("step size must be positive, got {}", self.step_size));
        }
        if self.n_samples == 0 {
            return invalid("n_samples must be at least 1");
        }
        if self.n_chains == 0 {
            return invalid("n_chains must be at least 1");
        }
        if let ChainInit::Gaussian { scale } = self.init {
            if !(scale > 0.0) {
                return invalid("init scale must be positive");
            }
        }
        Ok(())
    }

    pub fn n_leapfrog(&self) -> usize {
        n_leapfrog_steps(self.trajectory_length, self.step_size)
    }
}

/// End point of a leapfrog trajectory with the target evaluated there.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub w: Vec<f64>,
    pub m: Vec<f64>,
    pub log_density: f64,
    pub grad: Vec<f64>,
}

/// Runs `n_steps` leapfrog steps from `(w, m)`.
///
/// Adjacent momentum half-kicks are fused into one full kick.
pub fn leapfrog(w: &[f64], m: &[f64], step_size: f64, n_steps: usize, target: &dyn LogDensity) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut grad = vec![0.0; w.len()];
    target.value_and_grad(w, &mut grad)?;
    let t = leapfrog_from(w, m, &grad, step_size, n_steps, target)?;
    Ok((t.w, t.m))
}

/// [`leapfrog`] starting from a known gradient at `w`.
pub fn leapfrog_from(
    w: &[f64],
    m: &[f64],
    grad: &[f64],
    step_size: f64,
    n_steps: usize,
    target: &dyn LogDensity,
) -> Result<Trajectory> {
    if n_steps == 0 || !(step_size > 0.0) {
        return invalid("leapfrog needs n_steps >= 1 and a positive step size");
    }
    if w.len() != target.dim() || m.len() != w.len() || grad.len() != w.len() {
        return Err(Error::Shape("leapfrog state does not match target dimension".into()));
    }
    let mut w = w.to_vec();
    let mut m = m.to_vec();
    let mut g = grad.to_vec();
    let half = 0.5 * step_size;
    for (mi, gi) in m.iter_mut().zip(&g) {
        *mi += half * gi;
    }
    let mut value = f64::NAN;
    for step in 0..n_steps {
        for (wi, mi) in w.iter_mut().zip(&m) {
            *wi += step_size * mi;
        }
        value = target
            .value_and_grad(&w, &mut g)
            .map_err(|e| Error::NonFinite(format!("leapfrog step {}: {e}", step + 1)))?;
        let kick = if step + 1 == n_steps { half } else { step_size };
        for (mi, gi) in m.iter_mut().zip(&g) {
            *mi += kick * gi;
        }
        if !value.is_finite() || m.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("leapfrog state at step {}", step + 1)));
        }
    }
    Ok(Trajectory {
        w,
        m,
        log_density: value,
        grad: g,
    })
}

/// `min{1, exp(f_new − f_old + ½‖m_old‖² − ½‖m_new‖²)}`.
pub fn accept_probability(f_old: f64, f_new: f64, m_old: &[f64], m_new: &[f64]) -> f64 {
    let ke = |m: &[f64]| 0.5 * m.iter().map(|v| v * v).sum::<f64>();
    let log_ratio = f_new - f_old + ke(m_old) - ke(m_new);
    if log_ratio.is_nan() {
        return 0.0;
    }
    log_ratio.min(0.0).exp()
}

/// Sampler state of one chain.
#[derive(Clone, Debug)]
pub struct ChainState {
    pub w: ParameterVector,
    pub iteration: usize,
    pub accept_history: Vec<AcceptRecord>,
    log_density: f64,
    grad: Vec<f64>,
}

impl ChainState {
    pub fn new(w: ParameterVector, target: &dyn LogDensity) -> Result<Self> {
        if w.len() != target.dim() {
            return Err(Error::Shape(format!(
                "initial state has length {}, target needs {}",
                w.len(),
                target.dim()
            )));
        }
        let mut grad = vec![0.0; w.len()];
        let log_density = target.value_and_grad(&w, &mut grad)?;
        Ok(ChainState {
            w,
            iteration: 0,
            accept_history: Vec::new(),
            log_density,
            grad,
        })
    }

    pub fn log_density(&self) -> f64 {
        self.log_density
    }
}

/// One proposal. With `correct` unset the proposal is always taken (burn-in).
///
/// Returns the accept probability and whether the proposal was taken. A
/// proposal that leaves the finite region is rejected when correcting and is
/// an error otherwise.
fn transition(state: &mut ChainState, config: &HmcConfig, target: &dyn LogDensity, rng: &mut Rng, correct: bool) -> Result<AcceptRecord> {
    let mut m = vec![0.0; state.w.len()];
    fill_standard_normal(rng, &mut m);
    let proposal = leapfrog_from(&state.w, &m, &state.grad, config.step_size, config.n_leapfrog(), target);
    let u: f64 = rng.random();
    state.iteration += 1;
    let t = match proposal {
        Ok(t) => t,
        Err(e) if correct => {
            log::warn!("iteration {}: rejecting non-finite proposal ({e})", state.iteration);
            return Ok(AcceptRecord {
                p_accept: 0.0,
                accepted: false,
            });
        }
        Err(e) => return Err(e),
    };
    let p_accept = accept_probability(state.log_density, t.log_density, &m, &t.m);
    let accepted = !correct || u <= p_accept;
    if accepted {
        state.w = ParameterVector::from_vec_unchecked(t.w);
        state.log_density = t.log_density;
        state.grad = t.grad;
    }
    Ok(AcceptRecord { p_accept, accepted })
}

/// One corrected HMC iteration; returns the stored sample (the current state).
pub fn hmc_step(state: &mut ChainState, config: &HmcConfig, target: &dyn LogDensity, rng: &mut Rng) -> Result<ParameterVector> {
    let rec = transition(state, config, target, rng, true)?;
    state.accept_history.push(rec);
    Ok(state.w.clone())
}

fn initial_state(config: &HmcConfig, target: &dyn LogDensity, rng: &mut Rng) -> Result<ParameterVector> {
    let dim = target.dim();
    match &config.init {
        ChainInit::Prior => {
            let prior = target
                .init_prior()
                .ok_or_else(|| Error::InvalidConfig("target has no prior to initialize from".into()))?;
            Ok(sample_prior_with(&prior, dim, rng))
        }
        ChainInit::Gaussian { scale } => {
            let mut v = vec![0.0; dim];
            fill_standard_normal(rng, &mut v);
            v.iter_mut().for_each(|x| *x *= scale);
            Ok(ParameterVector::from_vec_unchecked(v))
        }
        ChainInit::Fixed { values } => ParameterVector::new(values.clone()),
    }
}

/// Runs chain `chain_id` of `config` against `target`.
///
/// The chain's random stream is `(config.seed, chain_id)`; the initial state
/// is drawn from the same stream before any momentum.
pub fn run_chain(config: &HmcConfig, target: &dyn LogDensity, chain_id: usize) -> Result<SampleStore> {
    config.validate()?;
    let wrap = |e: Error| Error::Chain {
        chain: chain_id,
        source: Box::new(e),
    };
    let mut rng = stream_rng(config.seed, chain_id as u64);
    let init = initial_state(config, target, &mut rng).map_err(wrap)?;
    let mut state = ChainState::new(init, target).map_err(wrap)?;
    let mut burnin_probs = Vec::with_capacity(config.n_burnin);
    for i in 0..config.n_burnin {
        let rec = transition(&mut state, config, target, &mut rng, false)
            .map_err(|e| wrap(Error::NonFinite(format!("burn-in iteration {}: {e}", i + 1))))?;
        burnin_probs.push(rec.p_accept);
        log::debug!("chain {chain_id} burn-in {}/{}: p_accept {:.3}", i + 1, config.n_burnin, rec.p_accept);
    }
    let mut samples = Vec::with_capacity(config.n_samples);
    for i in 0..config.n_samples {
        samples.push(hmc_step(&mut state, config, target, &mut rng).map_err(wrap)?);
        let rec = state.accept_history.last().unwrap();
        log::debug!(
            "chain {chain_id} sample {}/{}: p_accept {:.3} accepted {}",
            i + 1,
            config.n_samples,
            rec.p_accept,
            rec.accepted
        );
    }
    let accepted = state.accept_history.iter().filter(|r| r.accepted).count();
    let meta = StoreMeta {
        method: "hmc".into(),
        chain_id,
        seed: config.seed,
        accept_rate: accepted as f64 / config.n_samples as f64,
        accept_history: state.accept_history,
        burnin_accept_probs: burnin_probs,
        config: serde_json::to_value(config).unwrap_or_default(),
    };
    SampleStore::new(samples, meta).map_err(wrap)
}

/// Runs `config.n_chains` independent chains concurrently.
///
/// Chain `c` uses random stream `(seed, c)`, so results do not depend on the
/// thread count. A failing chain yields an error in its slot only.
pub fn run_chains(config: &HmcConfig, target: &dyn LogDensity) -> Vec<Result<SampleStore>> {
    (0..config.n_chains)
        .into_par_iter()
        .map(|c| run_chain(config, target, c))
        .collect()
}
