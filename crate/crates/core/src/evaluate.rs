//! Bayesian model averaging and predictive metrics.

use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::model::{self, gaussian_log_density, std_from_raw, Head, ModelSpec, ParameterVector};
use crate::store::SampleStore;

/// Per-member Gaussian predictions for a regression ensemble (`members × n`).
#[derive(Clone, Debug, PartialEq)]
pub struct RegressionPredictive {
    pub member_means: Array2<f64>,
    pub member_stds: Array2<f64>,
}

impl RegressionPredictive {
    pub fn len(&self) -> usize {
        self.member_means.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Mixture mean `μ̄ = mean(μᵢ)`.
    pub fn mean(&self) -> Vec<f64> {
        self.member_means.mean_axis(Axis(0)).unwrap().to_vec()
    }

    /// Mixture standard deviation `√(mean(σᵢ² + μᵢ²) − μ̄²)`.
    pub fn std(&self) -> Vec<f64> {
        let mu = self.mean();
        let k = self.member_means.nrows() as f64;
        (0..self.len())
            .map(|j| {
                let second: f64 = self
                    .member_means
                    .column(j)
                    .iter()
                    .zip(self.member_stds.column(j))
                    .map(|(m, s)| s * s + m * m)
                    .sum::<f64>()
                    / k;
                (second - mu[j] * mu[j]).max(0.0).sqrt()
            })
            .collect()
    }
}

/// Predictive distribution over a set of inputs.
#[derive(Clone, Debug, PartialEq)]
pub enum PredictiveDistribution {
    /// `n × C` row-stochastic probabilities.
    Classification(Array2<f64>),
    Regression(RegressionPredictive),
}

impl PredictiveDistribution {
    pub fn probs(&self) -> Result<&Array2<f64>> {
        match self {
            PredictiveDistribution::Classification(p) => Ok(p),
            _ => invalid("expected a classification predictive"),
        }
    }

    pub fn regression(&self) -> Result<&RegressionPredictive> {
        match self {
            PredictiveDistribution::Regression(r) => Ok(r),
            _ => invalid("expected a regression predictive"),
        }
    }
}

/// Predictive of a single parameter setting.
pub fn predict(spec: &ModelSpec, params: &[f64], inputs: ArrayView2<f64>) -> Result<PredictiveDistribution> {
    bma_predict(spec, std::slice::from_ref(&params), inputs)
}

/// Bayesian model average over `samples`.
///
/// Classification averages per-sample softmax rows. Regression keeps every
/// member's Gaussian so the mixture can be evaluated exactly.
pub fn bma_predict<P: AsRef<[f64]> + Sync>(spec: &ModelSpec, samples: &[P], inputs: ArrayView2<f64>) -> Result<PredictiveDistribution> {
    if samples.is_empty() {
        return invalid("model average needs at least one sample");
    }
    let n = inputs.nrows();
    match spec.head {
        Head::Classification { num_classes } => {
            let mut acc = Array2::<f64>::zeros((n, num_classes));
            for w in samples {
                acc += &model::softmax_rows(&model::forward(spec, w.as_ref(), inputs)?);
            }
            acc /= samples.len() as f64;
            Ok(PredictiveDistribution::Classification(acc))
        }
        Head::RegressionMeanStd | Head::RegressionFixedStd { .. } => {
            let mut means = Array2::zeros((samples.len(), n));
            let mut stds = Array2::zeros((samples.len(), n));
            for (k, w) in samples.iter().enumerate() {
                let out = model::forward(spec, w.as_ref(), inputs)?;
                for j in 0..n {
                    means[[k, j]] = out[[j, 0]];
                    stds[[k, j]] = match spec.head {
                        Head::RegressionFixedStd { std } => std,
                        _ => std_from_raw(out[[j, 1]]),
                    };
                }
            }
            Ok(PredictiveDistribution::Regression(RegressionPredictive {
                member_means: means,
                member_stds: stds,
            }))
        }
    }
}

/// Model average over every sample of every store.
pub fn bma_from_stores(spec: &ModelSpec, stores: &[&SampleStore], inputs: ArrayView2<f64>) -> Result<PredictiveDistribution> {
    let all: Vec<&ParameterVector> = stores.iter().flat_map(|s| s.samples.iter()).collect();
    for w in &all {
        if w.len() != spec.param_count() {
            return Err(Error::Shape(format!(
                "stored sample has {} parameters, model needs {}",
                w.len(),
                spec.param_count()
            )));
        }
    }
    let slices: Vec<&[f64]> = all.iter().map(|w| w.as_slice()).collect();
    bma_predict(spec, &slices, inputs)
}

/// Row index of the largest entry, ties to the lowest index.
pub fn argmax(row: ndarray::ArrayView1<f64>) -> usize {
    let mut best = 0;
    for (j, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = j;
        }
    }
    best
}

fn check_labels(probs: &Array2<f64>, labels: &[usize]) -> Result<()> {
    if probs.nrows() != labels.len() {
        return Err(Error::Shape(format!("{} predictions vs {} labels", probs.nrows(), labels.len())));
    }
    if probs.nrows() == 0 {
        return invalid("no predictions");
    }
    Ok(())
}

pub fn accuracy(probs: &Array2<f64>, labels: &[usize]) -> Result<f64> {
    check_labels(probs, labels)?;
    let correct = probs
        .rows()
        .into_iter()
        .zip(labels)
        .filter(|(row, &y)| argmax(row.view()) == y)
        .count();
    Ok(correct as f64 / labels.len() as f64)
}

/// Mean negative log-probability of the true class.
pub fn nll(probs: &Array2<f64>, labels: &[usize]) -> Result<f64> {
    check_labels(probs, labels)?;
    let total: f64 = labels.iter().enumerate().map(|(i, &y)| -probs[[i, y]].ln()).sum();
    Ok(total / labels.len() as f64)
}

/// Root-mean-squared error of the predictive mean, multiplied by `scale`.
pub fn rmse(pred: &RegressionPredictive, targets: &[f64], scale: f64) -> Result<f64> {
    if pred.len() != targets.len() || targets.is_empty() {
        return Err(Error::Shape("prediction/target length mismatch".into()));
    }
    let mu = pred.mean();
    let mse = mu.iter().zip(targets).map(|(m, y)| (m - y).powi(2)).sum::<f64>() / targets.len() as f64;
    Ok(mse.sqrt() * scale)
}

/// Mean per-example log-density of the mixture `(1/K) Σₖ N(y; μₖ, σₖ²)`.
///
/// `scale` is the factor that maps standardized targets back to original
/// units; the log-density is shifted by `−ln scale` accordingly.
pub fn gaussian_test_ll(pred: &RegressionPredictive, targets: &[f64], scale: f64) -> Result<f64> {
    if pred.len() != targets.len() || targets.is_empty() {
        return Err(Error::Shape("prediction/target length mismatch".into()));
    }
    let k = pred.member_means.nrows();
    let mut total = 0.0;
    for (j, &y) in targets.iter().enumerate() {
        let logs: Vec<f64> = (0..k)
            .map(|i| gaussian_log_density(y, pred.member_means[[i, j]], pred.member_stds[[i, j]]))
            .collect();
        let max = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        total += max + (logs.iter().map(|l| (l - max).exp()).sum::<f64>() / k as f64).ln();
    }
    Ok(total / targets.len() as f64 - scale.ln())
}

/// One equal-width confidence bin.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationBin {
    pub lower: f64,
    pub upper: f64,
    pub confidence: f64,
    pub accuracy: f64,
    pub count: usize,
}

pub const DEFAULT_CALIBRATION_BINS: usize = 20;

/// Non-empty bins of max-probability confidence against accuracy.
pub fn calibration_curve(probs: &Array2<f64>, labels: &[usize], n_bins: usize) -> Result<Vec<CalibrationBin>> {
    check_labels(probs, labels)?;
    if n_bins == 0 {
        return invalid("need at least one bin");
    }
    let mut conf = vec![0.0; n_bins];
    let mut hits = vec![0usize; n_bins];
    let mut count = vec![0usize; n_bins];
    for (row, &y) in probs.rows().into_iter().zip(labels) {
        let top = argmax(row.view());
        let c = row[top];
        let b = ((c * n_bins as f64).floor() as usize).min(n_bins - 1);
        conf[b] += c;
        count[b] += 1;
        if top == y {
            hits[b] += 1;
        }
    }
    Ok((0..n_bins)
        .filter(|&b| count[b] > 0)
        .map(|b| CalibrationBin {
            lower: b as f64 / n_bins as f64,
            upper: (b + 1) as f64 / n_bins as f64,
            confidence: conf[b] / count[b] as f64,
            accuracy: hits[b] as f64 / count[b] as f64,
            count: count[b],
        })
        .collect())
}

/// Expected calibration error `Σ (n_k/n)·|acc_k − conf_k|` over non-empty bins.
pub fn ece(probs: &Array2<f64>, labels: &[usize], n_bins: usize) -> Result<f64> {
    let bins = calibration_curve(probs, labels, n_bins)?;
    let n = labels.len() as f64;
    Ok(bins
        .iter()
        .map(|b| b.count as f64 / n * (b.accuracy - b.confidence).abs())
        .sum())
}

fn check_pair(a: &Array2<f64>, b: &Array2<f64>) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::Shape(format!("predictive shapes {:?} vs {:?}", a.dim(), b.dim())));
    }
    if a.nrows() == 0 {
        return invalid("no predictions");
    }
    Ok(())
}

/// Fraction of inputs where the top-1 predictions coincide.
pub fn agreement(p_ref: &Array2<f64>, p: &Array2<f64>) -> Result<f64> {
    check_pair(p_ref, p)?;
    let same = p_ref
        .rows()
        .into_iter()
        .zip(p.rows())
        .filter(|(a, b)| argmax(a.view()) == argmax(b.view()))
        .count();
    Ok(same as f64 / p.nrows() as f64)
}

/// Mean over inputs of `½ Σⱼ |p_ref − p|`.
pub fn total_variation(p_ref: &Array2<f64>, p: &Array2<f64>) -> Result<f64> {
    check_pair(p_ref, p)?;
    let total: f64 = p_ref
        .rows()
        .into_iter()
        .zip(p.rows())
        .map(|(a, b)| 0.5 * a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()).sum::<f64>())
        .sum();
    Ok(total / p.nrows() as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

impl Histogram {
    /// Equal-width bins over `[lo, hi]`; values outside are clamped into the end bins.
    pub fn new(values: &[f64], lo: f64, hi: f64, n_bins: usize) -> Self {
        let n_bins = n_bins.max(1);
        let width = if hi > lo { (hi - lo) / n_bins as f64 } else { 1.0 };
        let edges = (0..=n_bins).map(|i| lo + i as f64 * width).collect();
        let mut counts = vec![0; n_bins];
        for &v in values.iter().filter(|v| v.is_finite()) {
            let b = ((v - lo) / width).floor().clamp(0.0, (n_bins - 1) as f64) as usize;
            counts[b] += 1;
        }
        Histogram { edges, counts }
    }
}

/// Per-input entropies (natural log) and their histogram on `[0, ln C]`.
pub fn predictive_entropy(probs: &Array2<f64>, n_bins: usize) -> (Vec<f64>, Histogram) {
    let h: Vec<f64> = probs
        .rows()
        .into_iter()
        .map(|row| -row.iter().filter(|&&p| p > 0.0).map(|&p| p * p.ln()).sum::<f64>())
        .collect();
    let hist = Histogram::new(&h, 0.0, (probs.ncols() as f64).ln(), n_bins);
    (h, hist)
}

/// Max-class probability per input.
pub fn confidences(probs: &Array2<f64>) -> Vec<f64> {
    probs.rows().into_iter().map(|r| r[argmax(r.view())]).collect()
}

/// Probability that a random in-distribution confidence exceeds a random
/// out-of-distribution one, ties counting one half.
pub fn ood_auc_roc(conf_in: &[f64], conf_out: &[f64]) -> Result<f64> {
    if conf_in.is_empty() || conf_out.is_empty() {
        return invalid("AUC needs both in- and out-of-distribution scores");
    }
    let mut all: Vec<(f64, bool)> = conf_in
        .iter()
        .map(|&c| (c, true))
        .chain(conf_out.iter().map(|&c| (c, false)))
        .collect();
    if all.iter().any(|(c, _)| c.is_nan()) {
        return Err(Error::NonFinite("confidence score".into()));
    }
    all.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    // Mann–Whitney U from midranks.
    let mut rank_sum_in = 0.0;
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        while j < all.len() && all[j].0 == all[i].0 {
            j += 1;
        }
        let midrank = (i + 1 + j) as f64 / 2.0;
        rank_sum_in += midrank * all[i..j].iter().filter(|(_, inside)| *inside).count() as f64;
        i = j;
    }
    let (n_in, n_out) = (conf_in.len() as f64, conf_out.len() as f64);
    Ok((rank_sum_in - n_in * (n_in + 1.0) / 2.0) / (n_in * n_out))
}

/// Probability each stored sample assigns to `label` for one input.
pub fn true_class_trace(store: &SampleStore, spec: &ModelSpec, input: &[f64], label: usize) -> Result<Vec<f64>> {
    let Head::Classification { num_classes } = spec.head else {
        return invalid("true-class traces need a classification model");
    };
    if label >= num_classes {
        return invalid(format!("label {label} out of range"));
    }
    let x = ArrayView2::from_shape((1, input.len()), input).map_err(|e| Error::Shape(e.to_string()))?;
    store
        .samples
        .iter()
        .map(|w| Ok(model::softmax_rows(&model::forward(spec, w, x)?)[[0, label]]))
        .collect()
}
