//! Gelman–Rubin R̂ and related chain diagnostics.

use std::io::Write;
use std::path::Path;

use ndarray::{Array2, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::evaluate::{self, Histogram};
use crate::model::{self, Dataset, Head, ModelSpec};
use crate::store::SampleStore;

/// `M × N` values of one scalar functional: `M` chains, `N` iterations each.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarChains {
    values: Array2<f64>,
}

impl ScalarChains {
    pub fn new(values: Array2<f64>) -> Result<Self> {
        if values.nrows() < 2 || values.ncols() < 2 {
            return invalid(format!(
                "R-hat needs at least 2 chains of 2 iterations, got {}x{}",
                values.nrows(),
                values.ncols()
            ));
        }
        Ok(ScalarChains { values })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::Shape("chains have different lengths".into()));
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        ScalarChains::new(Array2::from_shape_vec((rows.len(), n), flat).map_err(|e| Error::Shape(e.to_string()))?)
    }

    pub fn values(&self) -> ArrayView2<'_, f64> {
        self.values.view()
    }
}

/// Classic Gelman–Rubin statistic. `None` when the within-chain variance is zero.
pub fn rhat(chains: &ScalarChains) -> Option<f64> {
    rhat_view(chains.values.view())
}

fn rhat_view(v: ArrayView2<f64>) -> Option<f64> {
    let (m, n) = (v.nrows() as f64, v.ncols() as f64);
    let means: Vec<f64> = v.rows().into_iter().map(|r| r.sum() / n).collect();
    let grand = means.iter().sum::<f64>() / m;
    let b_over_n = means.iter().map(|x| (x - grand).powi(2)).sum::<f64>() / (m - 1.0);
    let w = v
        .rows()
        .into_iter()
        .zip(&means)
        .map(|(r, mu)| r.iter().map(|x| (x - mu).powi(2)).sum::<f64>())
        .sum::<f64>()
        / (m * (n - 1.0));
    if !(w > 0.0) {
        return None;
    }
    let sigma2 = (n - 1.0) / n * w + b_over_n;
    Some((m + 1.0) / m * (sigma2 / w) - (n - 1.0) / (m * n))
}

/// Report bands, in order.
pub const RHAT_BANDS: [&str; 6] = ["<1.0", "1.0-1.1", "1.1-1.5", "1.5-5", ">5", "undefined"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RhatReport {
    /// Per-quantity values; `None` marks a quantity with zero within-chain variance.
    pub values: Vec<Option<f64>>,
    /// Counts per entry of [`RHAT_BANDS`].
    pub histogram: [usize; 6],
    pub fraction_below_1_1: f64,
    pub fraction_above_1_1: f64,
    pub n_undefined: usize,
    /// Secondary aggregation, e.g. per-input mean over classes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grouped: Option<Vec<Option<f64>>>,
}

fn band(r: Option<f64>) -> usize {
    match r {
        None => 5,
        Some(r) if r < 1.0 => 0,
        Some(r) if r < 1.1 => 1,
        Some(r) if r < 1.5 => 2,
        Some(r) if r <= 5.0 => 3,
        Some(_) => 4,
    }
}

impl RhatReport {
    pub fn from_values(values: Vec<Option<f64>>) -> Self {
        let mut histogram = [0; 6];
        for &r in &values {
            histogram[band(r)] += 1;
        }
        let total = values.len().max(1) as f64;
        let below = values.iter().filter(|r| matches!(r, Some(x) if *x < 1.1)).count();
        let above = values.iter().filter(|r| matches!(r, Some(x) if *x >= 1.1)).count();
        RhatReport {
            n_undefined: histogram[5],
            histogram,
            fraction_below_1_1: below as f64 / total,
            fraction_above_1_1: above as f64 / total,
            values,
            grouped: None,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// One `index,rhat` row per quantity; undefined values are written as `undefined`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(f, "index,rhat")?;
        for (i, r) in self.values.iter().enumerate() {
            match r {
                Some(v) => writeln!(f, "{i},{v}")?,
                None => writeln!(f, "{i},undefined")?,
            }
        }
        f.flush()?;
        Ok(())
    }

    /// Summary without the raw values.
    pub fn summary_json(&self) -> serde_json::Value {
        serde_json::json!({
            "count": self.values.len(),
            "bands": RHAT_BANDS,
            "histogram": self.histogram,
            "histogram_scale": "log",
            "fraction_below_1_1": self.fraction_below_1_1,
            "fraction_above_1_1": self.fraction_above_1_1,
            "n_undefined": self.n_undefined,
        })
    }
}

fn check_stores(stores: &[&SampleStore]) -> Result<(usize, usize)> {
    if stores.len() < 2 {
        return invalid("R-hat needs at least two chains");
    }
    let n = stores[0].len();
    let p = stores[0].param_count();
    for s in stores {
        if s.len() != n || s.param_count() != p {
            return Err(Error::Shape("stores differ in sample or parameter count".into()));
        }
    }
    if n < 2 {
        return invalid("R-hat needs at least two samples per chain");
    }
    Ok((n, p))
}

/// One R̂ per parameter coordinate.
pub fn rhat_weights(stores: &[&SampleStore]) -> Result<RhatReport> {
    let (n, p) = check_stores(stores)?;
    let m = stores.len();
    let values: Vec<Option<f64>> = (0..p)
        .into_par_iter()
        .map(|j| {
            let v = Array2::from_shape_fn((m, n), |(c, i)| stores[c].samples[i][j]);
            rhat_view(v.view())
        })
        .collect();
    Ok(RhatReport::from_values(values))
}

/// One R̂ per `(input, class)` softmax probability, row-major over inputs.
///
/// `grouped` holds the per-input mean over classes of the defined values.
pub fn rhat_functions(stores: &[&SampleStore], spec: &ModelSpec, inputs: ArrayView2<f64>) -> Result<RhatReport> {
    let (n, _) = check_stores(stores)?;
    let Head::Classification { num_classes } = spec.head else {
        return invalid("function-space R-hat needs a classification model");
    };
    let m = stores.len();
    let n_in = inputs.nrows();
    // probs[c][i] is the n_in × C softmax of sample i of chain c.
    let probs: Vec<Vec<Array2<f64>>> = stores
        .iter()
        .map(|s| {
            s.samples
                .par_iter()
                .map(|w| Ok(model::softmax_rows(&model::forward(spec, w, inputs)?)))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let values: Vec<Option<f64>> = (0..n_in * num_classes)
        .into_par_iter()
        .map(|q| {
            let (x, k) = (q / num_classes, q % num_classes);
            let v = Array2::from_shape_fn((m, n), |(c, i)| probs[c][i][[x, k]]);
            rhat_view(v.view())
        })
        .collect();
    let grouped = values
        .chunks(num_classes)
        .map(|row| {
            let defined: Vec<f64> = row.iter().flatten().copied().collect();
            (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64)
        })
        .collect();
    let mut report = RhatReport::from_values(values);
    report.grouped = Some(grouped);
    Ok(report)
}

/// Per-coordinate across-sample standard deviation and a 50-bin histogram of it.
pub fn marginal_std(store: &SampleStore) -> Result<(Vec<f64>, Histogram)> {
    if store.len() < 2 {
        return invalid("marginal std needs at least two samples");
    }
    let k = store.len() as f64;
    let p = store.param_count();
    let mut mean = vec![0.0; p];
    for s in &store.samples {
        for (m, v) in mean.iter_mut().zip(s.iter()) {
            *m += v / k;
        }
    }
    let mut var = vec![0.0; p];
    for s in &store.samples {
        for ((a, v), m) in var.iter_mut().zip(s.iter()).zip(&mean) {
            *a += (v - m).powi(2);
        }
    }
    let stds: Vec<f64> = var.iter().map(|v| (v / (k - 1.0)).sqrt()).collect();
    let hi = stds.iter().cloned().fold(0.0, f64::max);
    let hist = Histogram::new(&stds, 0.0, if hi > 0.0 { hi } else { 1.0 }, 50);
    Ok((stds, hist))
}

/// Metric evaluated by [`burnin_trace`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceMetric {
    Accuracy,
    Nll,
    Rmse,
    TestLl,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BurninPoint {
    pub n_burnin: usize,
    /// Metric of the model average over the next `window` samples.
    pub ensemble: f64,
    /// Metric of the single sample at index `n_burnin`.
    pub single: f64,
}

pub const BURNIN_WINDOW: usize = 100;

fn metric_of(spec: &ModelSpec, samples: &[&[f64]], data: &Dataset, metric: TraceMetric) -> Result<f64> {
    let pred = evaluate::bma_predict(spec, samples, data.inputs.view())?;
    match metric {
        TraceMetric::Accuracy | TraceMetric::Nll => {
            let labels = data
                .targets
                .labels()
                .ok_or_else(|| Error::InvalidConfig("classification metric on regression data".into()))?;
            let p = pred.probs()?;
            if metric == TraceMetric::Accuracy {
                evaluate::accuracy(p, labels)
            } else {
                evaluate::nll(p, labels)
            }
        }
        TraceMetric::Rmse | TraceMetric::TestLl => {
            let y = data
                .targets
                .values()
                .ok_or_else(|| Error::InvalidConfig("regression metric on classification data".into()))?;
            let r = pred.regression()?;
            if metric == TraceMetric::Rmse {
                evaluate::rmse(r, y, 1.0)
            } else {
                evaluate::gaussian_test_ll(r, y, 1.0)
            }
        }
    }
}

/// For each burn-in length, the metric of the first `window` samples kept
/// after discarding `n_burnin`, and of the single sample at `n_burnin`.
pub fn burnin_trace(
    store: &SampleStore,
    spec: &ModelSpec,
    data: &Dataset,
    metric: TraceMetric,
    grid: &[usize],
    window: usize,
) -> Result<Vec<BurninPoint>> {
    if window == 0 {
        return invalid("burn-in window must be positive");
    }
    for &b in grid {
        if b + window > store.len() {
            return invalid(format!(
                "burn-in {b} plus window {window} exceeds the {} stored samples",
                store.len()
            ));
        }
    }
    grid.par_iter()
        .map(|&b| {
            let ens: Vec<&[f64]> = store.samples[b..b + window].iter().map(|w| w.as_slice()).collect();
            Ok(BurninPoint {
                n_burnin: b,
                ensemble: metric_of(spec, &ens, data, metric)?,
                single: metric_of(spec, &[store.samples[b].as_slice()], data, metric)?,
            })
        })
        .collect()
}
