//! Fully-connected networks with analytic reverse-mode gradients.
//!
//! Parameters are packed layer-major into a single flat vector: for each
//! layer, first layer first, the `in × out` weight matrix in row-major order
//! (entry `(i, j)` connects input unit `i` to output unit `j`), followed by the
//! `out` biases. A layer therefore computes `z = a · W + b` on a row-major
//! batch of activations `a`.

use std::ops::{Deref, Range};

use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, ArrayViewMut1, ArrayViewMut2, Axis};
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::rng::stream_rng;

/// Floor added to the softplus-transformed scale output.
pub const STD_FLOOR: f64 = 1e-6;

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Identity,
    Relu,
    /// `x · sigmoid(x)`; smooth everywhere.
    Swish,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            Activation::Relu => x.max(0.0),
            Activation::Swish => x * sigmoid(x),
        }
    }

    #[inline]
    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Swish => {
                let s = sigmoid(x);
                s * (1.0 + x * (1.0 - s))
            }
        }
    }

    /// `(apply(x), derivative(x))` sharing one sigmoid evaluation.
    #[inline]
    pub fn apply_with_derivative(self, x: f64) -> (f64, f64) {
        match self {
            Activation::Swish => {
                let s = sigmoid(x);
                (x * s, s * (1.0 + x * (1.0 - s)))
            }
            _ => (self.apply(x), self.derivative(x)),
        }
    }
}

/// Output head and the likelihood attached to it.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum Head {
    /// Two outputs `(μ, ρ)` with `σ = softplus(ρ) + 1e-6`, Gaussian likelihood.
    RegressionMeanStd,
    /// One output `μ`, Gaussian likelihood with a fixed noise scale.
    RegressionFixedStd { std: f64 },
    /// Logits over `num_classes` classes, categorical likelihood.
    Classification { num_classes: usize },
}

impl Head {
    pub fn output_dim(&self) -> usize {
        match *self {
            Head::RegressionMeanStd => 2,
            Head::RegressionFixedStd { .. } => 1,
            Head::Classification { num_classes } => num_classes,
        }
    }

    pub fn is_classification(&self) -> bool {
        matches!(self, Head::Classification { .. })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub input_dim: usize,
    #[serde(default)]
    pub hidden_widths: Vec<usize>,
    pub activation: Activation,
    pub head: Head,
}

impl ModelSpec {
    pub fn mlp(input_dim: usize, hidden_widths: &[usize], activation: Activation, head: Head) -> Self {
        ModelSpec {
            input_dim,
            hidden_widths: hidden_widths.to_vec(),
            activation,
            head,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 {
            return invalid("model input_dim must be positive");
        }
        if self.hidden_widths.contains(&0) {
            return invalid("hidden widths must be positive");
        }
        match self.head {
            Head::Classification { num_classes } if num_classes < 2 => {
                invalid(format!("classification needs at least 2 classes, got {num_classes}"))
            }
            Head::RegressionFixedStd { std } if !(std > 0.0 && std.is_finite()) => {
                invalid(format!("fixed likelihood std must be positive, got {std}"))
            }
            _ => Ok(()),
        }
    }

    pub fn output_dim(&self) -> usize {
        self.head.output_dim()
    }

    /// `(in, out)` per layer, first layer first.
    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::with_capacity(self.hidden_widths.len() + 2);
        dims.push(self.input_dim);
        dims.extend_from_slice(&self.hidden_widths);
        dims.push(self.output_dim());
        dims.windows(2).map(|w| (w[0], w[1])).collect()
    }

    pub fn param_count(&self) -> usize {
        self.layer_shapes().iter().map(|&(i, o)| i * o + o).sum()
    }

    /// Offsets of (weights, biases) for every layer in the packed vector.
    fn layer_ranges(&self) -> Vec<(usize, usize, Range<usize>, Range<usize>)> {
        let mut off = 0;
        self.layer_shapes()
            .into_iter()
            .map(|(i, o)| {
                let w = off..off + i * o;
                let b = w.end..w.end + o;
                off = b.end;
                (i, o, w, b)
            })
            .collect()
    }
}

pub fn param_count(spec: &ModelSpec) -> usize {
    spec.param_count()
}

/// Flat parameter vector of a network; the sampler's state space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParameterVector(Vec<f64>);

impl ParameterVector {
    /// Wraps `values`, rejecting non-finite entries.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("parameter {i}")));
        }
        Ok(ParameterVector(values))
    }

    pub fn zeros(len: usize) -> Self {
        ParameterVector(vec![0.0; len])
    }

    pub(crate) fn from_vec_unchecked(values: Vec<f64>) -> Self {
        ParameterVector(values)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// Mutable access to the values; the length stays fixed.
    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

impl Deref for ParameterVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// Unpacked weights and biases of one layer.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerParams {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

pub fn unflatten(spec: &ModelSpec, params: &ParameterVector) -> Result<Vec<LayerParams>> {
    check_len(spec, params)?;
    Ok(spec
        .layer_ranges()
        .into_iter()
        .map(|(i, o, w, b)| LayerParams {
            weights: ArrayView2::from_shape((i, o), &params[w]).unwrap().to_owned(),
            bias: ArrayView1::from(&params[b]).to_owned(),
        })
        .collect())
}

pub fn flatten(spec: &ModelSpec, layers: &[LayerParams]) -> Result<ParameterVector> {
    let shapes = spec.layer_shapes();
    if shapes.len() != layers.len() {
        return Err(Error::Shape(format!(
            "expected {} layers, got {}",
            shapes.len(),
            layers.len()
        )));
    }
    let mut out = Vec::with_capacity(spec.param_count());
    for ((i, o), layer) in shapes.into_iter().zip(layers) {
        if layer.weights.dim() != (i, o) || layer.bias.len() != o {
            return Err(Error::Shape(format!("layer shape ({i}, {o}) mismatch")));
        }
        out.extend(layer.weights.iter());
        out.extend(layer.bias.iter());
    }
    ParameterVector::new(out)
}

/// I.i.d. `N(0, scale²)` initialization, deterministic in `seed`.
pub fn init_params(spec: &ModelSpec, scale: f64, seed: u64) -> Result<ParameterVector> {
    if !(scale > 0.0 && scale.is_finite()) {
        return invalid(format!("init scale must be positive, got {scale}"));
    }
    let normal = Normal::new(0.0, scale).unwrap();
    let mut rng = stream_rng(seed, 0);
    let values = (0..spec.param_count()).map(|_| normal.sample(&mut rng)).collect();
    Ok(ParameterVector(values))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Targets {
    Labels(Vec<usize>),
    Values(Vec<f64>),
}

impl Targets {
    pub fn len(&self) -> usize {
        match self {
            Targets::Labels(v) => v.len(),
            Targets::Values(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn labels(&self) -> Option<&[usize]> {
        match self {
            Targets::Labels(v) => Some(v),
            Targets::Values(_) => None,
        }
    }

    pub fn values(&self) -> Option<&[f64]> {
        match self {
            Targets::Values(v) => Some(v),
            Targets::Labels(_) => None,
        }
    }

    fn slice(&self, rows: Range<usize>) -> TargetSlice<'_> {
        match self {
            Targets::Labels(v) => TargetSlice::Labels(&v[rows]),
            Targets::Values(v) => TargetSlice::Values(&v[rows]),
        }
    }

    pub fn select(&self, idx: &[usize]) -> Targets {
        match self {
            Targets::Labels(v) => Targets::Labels(idx.iter().map(|&i| v[i]).collect()),
            Targets::Values(v) => Targets::Values(idx.iter().map(|&i| v[i]).collect()),
        }
    }
}

#[derive(Clone, Copy)]
enum TargetSlice<'a> {
    Labels(&'a [usize]),
    Values(&'a [f64]),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub inputs: Array2<f64>,
    pub targets: Targets,
    pub name: String,
}

impl Dataset {
    pub fn new(inputs: Array2<f64>, targets: Targets, name: impl Into<String>) -> Result<Self> {
        let ds = Dataset {
            inputs,
            targets,
            name: name.into(),
        };
        if ds.inputs.nrows() == 0 {
            return invalid(format!("dataset {} is empty", ds.name));
        }
        if ds.inputs.nrows() != ds.targets.len() {
            return Err(Error::Shape(format!(
                "dataset {}: {} input rows but {} targets",
                ds.name,
                ds.inputs.nrows(),
                ds.targets.len()
            )));
        }
        if ds.inputs.iter().any(|v| v.is_nan()) {
            return invalid(format!("dataset {} has NaN inputs", ds.name));
        }
        if let Targets::Values(v) = &ds.targets {
            if v.iter().any(|v| v.is_nan()) {
                return invalid(format!("dataset {} has NaN targets", ds.name));
            }
        }
        Ok(ds)
    }

    pub fn len(&self) -> usize {
        self.inputs.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn input_dim(&self) -> usize {
        self.inputs.ncols()
    }

    /// Rows `idx`, in that order.
    pub fn select(&self, idx: &[usize]) -> Dataset {
        Dataset {
            inputs: self.inputs.select(Axis(0), idx),
            targets: self.targets.select(idx),
            name: self.name.clone(),
        }
    }

    /// Checks that the dataset fits `spec`: input width and target kind/range.
    pub fn check_compatible(&self, spec: &ModelSpec) -> Result<()> {
        if self.input_dim() != spec.input_dim {
            return Err(Error::Shape(format!(
                "model expects {} inputs, dataset {} has {}",
                spec.input_dim,
                self.name,
                self.input_dim()
            )));
        }
        match (&spec.head, &self.targets) {
            (Head::Classification { num_classes }, Targets::Labels(l)) => {
                if let Some(bad) = l.iter().find(|&&y| y >= *num_classes) {
                    return invalid(format!("label {bad} out of range [0, {num_classes})"));
                }
                Ok(())
            }
            (Head::Classification { .. }, Targets::Values(_)) => {
                invalid("classification model needs integer labels")
            }
            (_, Targets::Labels(_)) => invalid("regression model needs real-valued targets"),
            _ => Ok(()),
        }
    }
}

fn check_len(spec: &ModelSpec, params: &[f64]) -> Result<()> {
    let expected = spec.param_count();
    if params.len() != expected {
        return Err(Error::Shape(format!(
            "parameter vector has length {}, model needs {expected}",
            params.len()
        )));
    }
    Ok(())
}

fn check_inputs(spec: &ModelSpec, inputs: &ArrayView2<f64>) -> Result<()> {
    if inputs.ncols() != spec.input_dim {
        return Err(Error::Shape(format!(
            "model expects {} input columns, got {}",
            spec.input_dim,
            inputs.ncols()
        )));
    }
    Ok(())
}

struct Layer<'a> {
    weights: ArrayView2<'a, f64>,
    bias: ArrayView1<'a, f64>,
}

fn layers<'a>(spec: &ModelSpec, params: &'a [f64]) -> Vec<Layer<'a>> {
    spec.layer_ranges()
        .into_iter()
        .map(|(i, o, w, b)| Layer {
            weights: ArrayView2::from_shape((i, o), &params[w]).unwrap(),
            bias: ArrayView1::from(&params[b]),
        })
        .collect()
}

fn affine(input: &ArrayView2<f64>, layer: &Layer) -> Array2<f64> {
    let mut z = Array2::zeros((input.nrows(), layer.weights.ncols()));
    general_mat_mul(1.0, input, &layer.weights, 0.0, &mut z);
    z += &layer.bias;
    z
}

/// Raw network outputs (`n × output_dim`): logits, `(μ, ρ)` pairs, or `μ`.
pub fn forward(spec: &ModelSpec, params: &[f64], inputs: ArrayView2<f64>) -> Result<Array2<f64>> {
    check_len(spec, params)?;
    check_inputs(spec, &inputs)?;
    let layers = layers(spec, params);
    let (last, hidden) = layers.split_last().unwrap();
    let mut act: Option<Array2<f64>> = None;
    for layer in hidden {
        let mut z = affine(&act.as_ref().map_or(inputs.view(), |a| a.view()), layer);
        z.mapv_inplace(|x| spec.activation.apply(x));
        act = Some(z);
    }
    Ok(affine(&act.as_ref().map_or(inputs.view(), |a| a.view()), last))
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[inline]
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Predictive scale from the raw `ρ` output.
#[inline]
pub fn std_from_raw(rho: f64) -> f64 {
    softplus(rho) + STD_FLOOR
}

pub(crate) fn log_sum_exp(row: ArrayView1<f64>) -> f64 {
    let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    if !max.is_finite() {
        return max;
    }
    max + row.iter().map(|&v| (v - max).exp()).sum::<f64>().ln()
}

/// Softmax of each row of `logits`.
pub fn softmax_rows(logits: &Array2<f64>) -> Array2<f64> {
    let mut out = logits.clone();
    for mut row in out.rows_mut() {
        let lse = log_sum_exp(row.view());
        row.mapv_inplace(|v| (v - lse).exp());
    }
    out
}

#[inline]
pub(crate) fn gaussian_log_density(y: f64, mean: f64, std: f64) -> f64 {
    let r = (y - mean) / std;
    -HALF_LN_2PI - std.ln() - 0.5 * r * r
}

/// Log-likelihood of `outputs` under the head, with `∂ll/∂outputs` written into `delta`.
fn head_loglik(head: &Head, outputs: &Array2<f64>, targets: TargetSlice, mut delta: Option<&mut Array2<f64>>) -> f64 {
    let mut total = 0.0;
    match (head, targets) {
        (Head::Classification { .. }, TargetSlice::Labels(labels)) => {
            for (r, row) in outputs.rows().into_iter().enumerate() {
                let lse = log_sum_exp(row);
                total += row[labels[r]] - lse;
                if let Some(d) = delta.as_deref_mut() {
                    let mut drow = d.row_mut(r);
                    for (dv, &v) in drow.iter_mut().zip(row.iter()) {
                        *dv = -(v - lse).exp();
                    }
                    drow[labels[r]] += 1.0;
                }
            }
        }
        (Head::RegressionMeanStd, TargetSlice::Values(y)) => {
            for (r, row) in outputs.rows().into_iter().enumerate() {
                let (mu, rho) = (row[0], row[1]);
                let sd = std_from_raw(rho);
                total += gaussian_log_density(y[r], mu, sd);
                if let Some(d) = delta.as_deref_mut() {
                    let resid = y[r] - mu;
                    let var = sd * sd;
                    d[[r, 0]] = resid / var;
                    d[[r, 1]] = (resid * resid / (var * sd) - 1.0 / sd) * sigmoid(rho);
                }
            }
        }
        (Head::RegressionFixedStd { std }, TargetSlice::Values(y)) => {
            for (r, row) in outputs.rows().into_iter().enumerate() {
                total += gaussian_log_density(y[r], row[0], *std);
                if let Some(d) = delta.as_deref_mut() {
                    d[[r, 0]] = (y[r] - row[0]) / (std * std);
                }
            }
        }
        _ => unreachable!("target kind checked by caller"),
    }
    total
}

fn check_targets(spec: &ModelSpec, targets: &Targets) -> Result<()> {
    match (&spec.head, targets) {
        (Head::Classification { .. }, Targets::Labels(_)) => Ok(()),
        (Head::Classification { .. }, Targets::Values(_)) => invalid("classification model needs labels"),
        (_, Targets::Values(_)) => Ok(()),
        (_, Targets::Labels(_)) => invalid("regression model needs real-valued targets"),
    }
}

pub fn log_likelihood(spec: &ModelSpec, params: &[f64], data: &Dataset) -> Result<f64> {
    check_targets(spec, &data.targets)?;
    let out = forward(spec, params, data.inputs.view())?;
    let ll = head_loglik(&spec.head, &out, data.targets.slice(0..data.len()), None);
    if !ll.is_finite() {
        return Err(Error::NonFinite("log-likelihood".into()));
    }
    Ok(ll)
}

/// Log-likelihood of rows `rows` of `data` (forward pass only).
pub fn loglik_value(spec: &ModelSpec, params: &[f64], data: &Dataset, rows: Range<usize>) -> Result<f64> {
    check_targets(spec, &data.targets)?;
    let out = forward(spec, params, data.inputs.slice(s![rows.clone(), ..]))?;
    let ll = head_loglik(&spec.head, &out, data.targets.slice(rows), None);
    if !ll.is_finite() {
        return Err(Error::NonFinite("log-likelihood".into()));
    }
    Ok(ll)
}

pub fn grad_log_likelihood(spec: &ModelSpec, params: &[f64], data: &Dataset) -> Result<ParameterVector> {
    let (_, g) = loglik_value_and_grad(spec, params, data, 0..data.len())?;
    Ok(ParameterVector(g))
}

/// Log-likelihood of rows `rows` of `data` and its gradient.
///
/// The gradient is written fresh (not accumulated); callers reduce partial
/// results themselves so the summation order stays under their control.
pub fn loglik_value_and_grad(spec: &ModelSpec, params: &[f64], data: &Dataset, rows: Range<usize>) -> Result<(f64, Vec<f64>)> {
    check_len(spec, params)?;
    check_targets(spec, &data.targets)?;
    let inputs = data.inputs.slice(s![rows.clone(), ..]);
    check_inputs(spec, &inputs)?;
    let targets = data.targets.slice(rows);
    let layers = layers(spec, params);
    let n_layers = layers.len();

    // Forward pass keeping hidden activations. Swish also keeps its derivative;
    // ReLU and identity derivatives are recovered from the activations.
    let act = spec.activation;
    let mut derivs: Vec<Array2<f64>> = Vec::new();
    let mut acts: Vec<Array2<f64>> = Vec::with_capacity(n_layers - 1);
    for layer in &layers[..n_layers - 1] {
        let mut z = affine(&acts.last().map_or(inputs.view(), |a| a.view()), layer);
        if act == Activation::Swish {
            let mut d = Array2::zeros(z.raw_dim());
            ndarray::Zip::from(&mut z).and(&mut d).for_each(|z, d| {
                let (a, da) = act.apply_with_derivative(*z);
                *z = a;
                *d = da;
            });
            derivs.push(d);
        } else {
            z.mapv_inplace(|x| act.apply(x));
        }
        acts.push(z);
    }
    let out = affine(&acts.last().map_or(inputs.view(), |a| a.view()), &layers[n_layers - 1]);
    let mut delta = Array2::zeros(out.raw_dim());
    let ll = head_loglik(&spec.head, &out, targets, Some(&mut delta));
    if !ll.is_finite() {
        return Err(Error::NonFinite("log-likelihood".into()));
    }

    let mut grad = vec![0.0; spec.param_count()];
    let ranges = spec.layer_ranges();
    for l in (0..n_layers).rev() {
        let (i, o, ref wr, ref br) = ranges[l];
        let input = if l == 0 { inputs.view() } else { acts[l - 1].view() };
        {
            let (head, tail) = grad.split_at_mut(br.start);
            let mut gw = ArrayViewMut2::from_shape((i, o), &mut head[wr.clone()]).unwrap();
            general_mat_mul(1.0, &input.t(), &delta, 0.0, &mut gw);
            let mut gb = ArrayViewMut1::from(&mut tail[..o]);
            gb.assign(&delta.sum_axis(Axis(0)));
        }
        if l > 0 {
            let mut prev = Array2::zeros((delta.nrows(), i));
            general_mat_mul(1.0, &delta, &layers[l].weights.t(), 0.0, &mut prev);
            match act {
                Activation::Swish => prev.zip_mut_with(&derivs[l - 1], |d, &da| *d *= da),
                Activation::Relu => prev.zip_mut_with(&acts[l - 1], |d, &a| {
                    if a <= 0.0 {
                        *d = 0.0
                    }
                }),
                Activation::Identity => {}
            }
            delta = prev;
        }
    }
    if grad.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("log-likelihood gradient".into()));
    }
    Ok((ll, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn clf(widths: &[usize], act: Activation) -> ModelSpec {
        ModelSpec::mlp(2, widths, act, Head::Classification { num_classes: 2 })
    }

    #[test]
    fn param_counts() {
        assert_eq!(clf(&[50], Activation::Swish).param_count(), 252);
        let linear = ModelSpec::mlp(1, &[], Activation::Identity, Head::RegressionFixedStd { std: 1.0 });
        assert_eq!(linear.param_count(), 2);
        let teacher = ModelSpec::mlp(2, &[100, 100, 100], Activation::Relu, Head::RegressionFixedStd { std: 0.02 });
        assert_eq!(teacher.param_count(), 20_601);
    }

    #[test]
    fn spec_validation() {
        let bad = ModelSpec::mlp(2, &[3], Activation::Relu, Head::Classification { num_classes: 1 });
        assert!(bad.validate().is_err());
        assert!(ModelSpec::mlp(0, &[], Activation::Relu, Head::RegressionMeanStd).validate().is_err());
        assert!(clf(&[3], Activation::Relu).validate().is_ok());
    }

    #[test]
    fn init_is_deterministic_and_scaled() {
        let spec = ModelSpec::mlp(2, &[100, 100, 100], Activation::Relu, Head::RegressionFixedStd { std: 0.02 });
        let a = init_params(&spec, 0.005, 7).unwrap();
        let b = init_params(&spec, 0.005, 7).unwrap();
        assert_eq!(a, b);
        let n = a.len() as f64;
        let mean = a.iter().sum::<f64>() / n;
        let sd = (a.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        assert!((sd / 0.005 - 1.0).abs() < 0.05, "sd {sd}");
        assert!(init_params(&spec, 0.0, 1).is_err());
        assert!(init_params(&spec, -1.0, 1).is_err());
    }

    #[test]
    fn init_mean_unit_scale() {
        let spec = ModelSpec::mlp(9_999, &[], Activation::Identity, Head::RegressionFixedStd { std: 1.0 });
        let p = init_params(&spec, 1.0, 3).unwrap();
        assert_eq!(p.len(), 10_000);
        let mean = p.iter().sum::<f64>() / p.len() as f64;
        assert!(mean.abs() < 0.05);
    }

    #[test]
    fn zero_network_is_uniform() {
        let spec = ModelSpec::mlp(2, &[4], Activation::Swish, Head::Classification { num_classes: 3 });
        let w = vec![0.0; spec.param_count()];
        let x = array![[1.0, -2.0], [0.5, 3.0]];
        let out = forward(&spec, &w, x.view()).unwrap();
        assert!(out.iter().all(|&v| v == 0.0));
        let p = softmax_rows(&out);
        assert!(p.iter().all(|&v| (v - 1.0 / 3.0).abs() < 1e-15));
        let data = Dataset::new(x, Targets::Labels(vec![0, 2]), "t").unwrap();
        let ll = log_likelihood(&spec, &w, &data).unwrap();
        assert!((ll - 2.0 * (1.0f64 / 3.0).ln()).abs() < 1e-12);
    }

    #[test]
    fn affine_single_layer() {
        let spec = ModelSpec::mlp(1, &[], Activation::Identity, Head::RegressionFixedStd { std: 1.0 });
        let out = forward(&spec, &[2.0, 1.0], array![[3.0]].view()).unwrap();
        assert_eq!(out[[0, 0]], 7.0);
    }

    #[test]
    fn swish_limits() {
        assert_eq!(Activation::Swish.apply(0.0), 0.0);
        assert!((Activation::Swish.apply(40.0) - 40.0).abs() < 1e-12);
        assert!(Activation::Swish.apply(-40.0).abs() < 1e-12);
    }

    #[test]
    fn gaussian_at_mode() {
        // softplus(ρ) + 1e-6 = 1  →  ρ = ln(e^{1-1e-6} - 1)
        let rho = ((1.0 - STD_FLOOR).exp() - 1.0).ln();
        let spec = ModelSpec::mlp(1, &[], Activation::Identity, Head::RegressionMeanStd);
        // weights (1×2) then biases (2): μ = 0·x + 0.3, ρ = 0·x + rho
        let w = [0.0, 0.0, 0.3, rho];
        let data = Dataset::new(array![[1.0], [2.0]], Targets::Values(vec![0.3, 0.3]), "t").unwrap();
        let ll = log_likelihood(&spec, &w, &data).unwrap();
        assert!((ll - 2.0 * (-HALF_LN_2PI)).abs() < 1e-12);
    }

    #[test]
    fn shape_errors() {
        let spec = clf(&[3], Activation::Relu);
        assert!(matches!(
            forward(&spec, &[0.0; 4], array![[1.0, 2.0]].view()),
            Err(Error::Shape(_))
        ));
        let w = vec![0.0; spec.param_count()];
        assert!(matches!(forward(&spec, &w, array![[1.0]].view()), Err(Error::Shape(_))));
    }

    #[test]
    fn large_logits_stay_finite() {
        let spec = ModelSpec::mlp(1, &[], Activation::Identity, Head::Classification { num_classes: 2 });
        // logits = (1000 x, -1000 x)
        let w = [1000.0, -1000.0, 0.0, 0.0];
        let data = Dataset::new(array![[1.0], [-1.0]], Targets::Labels(vec![1, 1]), "t").unwrap();
        let ll = log_likelihood(&spec, &w, &data).unwrap();
        assert!(ll.is_finite());
        assert!((ll + 2000.0).abs() < 1e-9);
    }

    #[test]
    fn bias_gradient_symmetry_at_zero() {
        let spec = ModelSpec::mlp(2, &[4], Activation::Swish, Head::Classification { num_classes: 2 });
        let w = vec![0.0; spec.param_count()];
        let data = Dataset::new(Array2::zeros((3, 2)), Targets::Labels(vec![0, 1, 1]), "t").unwrap();
        let g = grad_log_likelihood(&spec, &w, &data).unwrap();
        // hidden biases follow the 2×4 weight block
        let hb = &g[8..12];
        assert!(hb.iter().all(|&v| v == hb[0]));
    }

    #[test]
    fn gradient_vanishes_at_one_parameter_maximum() {
        // μ = b, fixed std: ll maximal at b = mean(y)
        let spec = ModelSpec::mlp(1, &[], Activation::Identity, Head::RegressionFixedStd { std: 0.5 });
        let y = vec![0.2, -0.4, 1.1];
        let data = Dataset::new(Array2::zeros((3, 1)), Targets::Values(y.clone()), "t").unwrap();
        // locate the maximum by a fine scan, then polish with the scan's parabola
        let ll = |b: f64| log_likelihood(&spec, &[0.0, b], &data).unwrap();
        let (mut best, mut best_v) = (0.0, f64::NEG_INFINITY);
        for k in -2000..=2000 {
            let b = k as f64 * 1e-3;
            if ll(b) > best_v {
                best_v = ll(b);
                best = b;
            }
        }
        let h = 1e-3;
        let (l, c, r) = (ll(best - h), ll(best), ll(best + h));
        let b_star = best + 0.5 * h * (l - r) / (l - 2.0 * c + r);
        let g = grad_log_likelihood(&spec, &[0.0, b_star], &data).unwrap();
        assert!(g[1].abs() < 1e-8, "{}", g[1]);
    }

    #[test]
    fn dataset_validation() {
        assert!(Dataset::new(Array2::zeros((0, 2)), Targets::Labels(vec![]), "e").is_err());
        assert!(Dataset::new(array![[f64::NAN]], Targets::Values(vec![0.0]), "n").is_err());
        let spec = clf(&[2], Activation::Relu);
        let d = Dataset::new(array![[0.0, 0.0]], Targets::Labels(vec![2]), "l").unwrap();
        assert!(d.check_compatible(&spec).is_err());
    }
}
