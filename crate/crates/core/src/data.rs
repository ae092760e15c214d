//! Dataset generation, loading, splitting and corruption.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::model::{self, Activation, Dataset, Head, ModelSpec, ParameterVector, Targets};
use crate::rng::{fill_standard_normal, stream_rng};

/// Synthetic 1-D regression: a random teacher network evaluated on `(x, x²)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticRegressionConfig {
    pub intervals: Vec<(f64, f64)>,
    pub points_per_interval: usize,
    pub teacher_widths: Vec<usize>,
    pub teacher_activation: Activation,
    pub teacher_weight_std: f64,
    pub noise_std: f64,
    pub seed: u64,
}

impl Default for SyntheticRegressionConfig {
    fn default() -> Self {
        SyntheticRegressionConfig {
            intervals: vec![(-10.0, -6.0), (6.0, 10.0), (14.0, 18.0)],
            points_per_interval: 40,
            teacher_widths: vec![100, 100, 100],
            teacher_activation: Activation::Relu,
            teacher_weight_std: 0.1,
            noise_std: 0.02,
            seed: 0,
        }
    }
}

impl SyntheticRegressionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.intervals.is_empty() || self.points_per_interval == 0 {
            return invalid("synthetic data needs at least one interval and one point");
        }
        if self.intervals.iter().any(|(lo, hi)| !(lo <= hi) || !lo.is_finite() || !hi.is_finite()) {
            return invalid("intervals must be finite with lo <= hi");
        }
        if !(self.teacher_weight_std > 0.0) || !(self.noise_std >= 0.0) {
            return invalid("teacher weight std must be positive and noise std non-negative");
        }
        Ok(())
    }
}

/// Ground-truth network of a synthetic task.
#[derive(Clone, Debug, PartialEq)]
pub struct Teacher {
    pub spec: ModelSpec,
    pub params: ParameterVector,
}

impl Teacher {
    /// Noise-free response at scalar inputs `xs`.
    pub fn eval(&self, xs: &[f64]) -> Vec<f64> {
        let out = model::forward(&self.spec, &self.params, features_x_x2(xs).view()).expect("teacher shapes are fixed");
        out.column(0).to_vec()
    }
}

/// Rows `(x, x²)`.
pub fn features_x_x2(xs: &[f64]) -> Array2<f64> {
    Array2::from_shape_fn((xs.len(), 2), |(i, j)| if j == 0 { xs[i] } else { xs[i] * xs[i] })
}

/// Evenly spaced points on `[lo, hi]`, endpoints included.
pub fn uniform_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}

pub fn gen_synthetic_regression(cfg: &SyntheticRegressionConfig) -> Result<(Dataset, Teacher)> {
    cfg.validate()?;
    let spec = ModelSpec::mlp(2, &cfg.teacher_widths, cfg.teacher_activation, Head::RegressionFixedStd { std: 1.0 });
    let params = model::init_params(&spec, cfg.teacher_weight_std, cfg.seed)?;
    let teacher = Teacher { spec, params };
    let xs: Vec<f64> = cfg
        .intervals
        .iter()
        .flat_map(|&(lo, hi)| uniform_grid(lo, hi, cfg.points_per_interval))
        .collect();
    let mut y = teacher.eval(&xs);
    if cfg.noise_std > 0.0 {
        let mut noise = vec![0.0; y.len()];
        fill_standard_normal(&mut stream_rng(cfg.seed, 1), &mut noise);
        for (t, z) in y.iter_mut().zip(noise) {
            *t += cfg.noise_std * z;
        }
    }
    let ds = Dataset::new(features_x_x2(&xs), Targets::Values(y), "synthetic")?;
    Ok((ds, teacher))
}

/// Random train/test partition.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub seed: u64,
    pub index: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            train_fraction: 0.9,
            seed: 0,
            index: 0,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return invalid(format!("train fraction must be in (0, 1), got {}", self.train_fraction));
        }
        Ok(())
    }

    /// Shuffled row indices split into `(train, test)`; the train set has `floor(fraction·n)` rows.
    pub fn indices(&self, n: usize) -> Result<(Vec<usize>, Vec<usize>)> {
        self.validate()?;
        let n_train = (self.train_fraction * n as f64).floor() as usize;
        if n_train == 0 || n_train == n {
            return invalid(format!("split of {n} rows leaves an empty side"));
        }
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut stream_rng(self.seed, self.index));
        let test = idx.split_off(n_train);
        Ok((idx, test))
    }
}

/// Per-column affine standardization `(x − mean) / std`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    /// Fits column means and population standard deviations; constant columns get std 1.
    pub fn fit(x: &Array2<f64>) -> Self {
        let n = x.nrows() as f64;
        let mean = x.mean_axis(Axis(0)).unwrap().to_vec();
        let std = x
            .columns()
            .into_iter()
            .zip(&mean)
            .map(|(c, m)| {
                let s = (c.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n).sqrt();
                if s > 0.0 {
                    s
                } else {
                    1.0
                }
            })
            .collect();
        Standardizer { mean, std }
    }

    pub fn transform(&self, x: &Array2<f64>) -> Array2<f64> {
        let mut out = x.clone();
        for mut row in out.rows_mut() {
            for ((v, m), s) in row.iter_mut().zip(&self.mean).zip(&self.std) {
                *v = (*v - m) / s;
            }
        }
        out
    }

    pub fn inverse(&self, x: &Array2<f64>) -> Array2<f64> {
        let mut out = x.clone();
        for mut row in out.rows_mut() {
            for ((v, m), s) in row.iter_mut().zip(&self.mean).zip(&self.std) {
                *v = *v * s + m;
            }
        }
        out
    }
}

/// Delimited text layout for regression tables.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TableFormat {
    /// Field separator; `None` splits on runs of whitespace.
    pub delimiter: Option<char>,
    pub has_header: bool,
}

/// Parses a numeric table. Blank lines and lines starting with `#` are skipped.
pub fn read_table(path: &Path, format: TableFormat) -> Result<Array2<f64>> {
    let reader = BufReader::new(File::open(path)?);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut header_pending = format.has_header;
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        if header_pending {
            header_pending = false;
            continue;
        }
        let parse_err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message,
        };
        let cells: Vec<&str> = match format.delimiter {
            Some(d) => trimmed.split(d).map(str::trim).collect(),
            None => trimmed.split_whitespace().collect(),
        };
        let row = cells
            .iter()
            .map(|c| {
                let v: f64 = c.parse().map_err(|_| parse_err(format!("non-numeric cell {c:?}")))?;
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(parse_err(format!("non-finite cell {c:?}")))
                }
            })
            .collect::<Result<Vec<f64>>>()?;
        if let Some(first) = rows.first() {
            if row.len() != first.len() {
                return Err(parse_err(format!("expected {} columns, found {}", first.len(), row.len())));
            }
        } else if row.len() < 2 {
            return Err(parse_err("need at least one feature column and a target".into()));
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return invalid(format!("{}: no data rows", path.display()));
    }
    let d = rows[0].len();
    Ok(Array2::from_shape_vec((rows.len(), d), rows.into_iter().flatten().collect()).unwrap())
}

/// One standardized train/test split of a regression table.
#[derive(Clone, Debug, PartialEq)]
pub struct RegressionSplit {
    pub train: Dataset,
    pub test: Dataset,
    pub x_scaler: Standardizer,
    /// Single-column scaler for the target; `std[0]` converts errors back to original units.
    pub y_scaler: Standardizer,
}

impl RegressionSplit {
    pub fn target_scale(&self) -> f64 {
        self.y_scaler.std[0]
    }

    pub fn destandardize_targets(&self, y: &[f64]) -> Vec<f64> {
        y.iter().map(|v| v * self.y_scaler.std[0] + self.y_scaler.mean[0]).collect()
    }
}

/// Splits a table whose last column is the target, standardizing with train statistics.
pub fn split_table(table: &Array2<f64>, split: &SplitSpec, name: &str) -> Result<RegressionSplit> {
    let (train_idx, test_idx) = split.indices(table.nrows())?;
    let d = table.ncols() - 1;
    let x = table.slice(ndarray::s![.., ..d]).to_owned();
    let y = table.slice(ndarray::s![.., d..]).to_owned();
    let (x_tr, x_te) = (x.select(Axis(0), &train_idx), x.select(Axis(0), &test_idx));
    let (y_tr, y_te) = (y.select(Axis(0), &train_idx), y.select(Axis(0), &test_idx));
    let x_scaler = Standardizer::fit(&x_tr);
    let y_scaler = Standardizer::fit(&y_tr);
    let targets = |m: Array2<f64>| Targets::Values(y_scaler.transform(&m).column(0).to_vec());
    Ok(RegressionSplit {
        train: Dataset::new(x_scaler.transform(&x_tr), targets(y_tr), format!("{name}-train"))?,
        test: Dataset::new(x_scaler.transform(&x_te), targets(y_te), format!("{name}-test"))?,
        x_scaler,
        y_scaler,
    })
}

pub fn load_uci(path: &Path, format: TableFormat, split: &SplitSpec) -> Result<RegressionSplit> {
    let table = read_table(path, format)?;
    let name = path.file_stem().map_or("uci".into(), |s| s.to_string_lossy().into_owned());
    split_table(&table, split, &name)
}

/// Adds i.i.d. `N(0, σ²)` noise to every input feature.
pub fn corrupt_gaussian(data: &Dataset, sigma: f64, seed: u64) -> Result<Dataset> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return invalid(format!("noise scale must be non-negative, got {sigma}"));
    }
    let mut out = data.clone();
    if sigma > 0.0 {
        let normal = Normal::new(0.0, sigma).unwrap();
        let mut rng = stream_rng(seed, 0);
        for v in out.inputs.iter_mut() {
            *v += normal.sample(&mut rng);
        }
    }
    Ok(out)
}

/// Writes a classification dataset as `n, d, C` (`u64`), `n·d` `f64` features, `n` `u16` labels.
pub fn write_container(path: &Path, data: &Dataset, num_classes: usize) -> Result<()> {
    let labels = data
        .targets
        .labels()
        .ok_or_else(|| Error::InvalidConfig("container holds classification data only".into()))?;
    if labels.iter().any(|&y| y >= num_classes) || num_classes > u16::MAX as usize + 1 {
        return invalid("label out of range for the container");
    }
    let mut f = BufWriter::new(File::create(path)?);
    for v in [data.len(), data.input_dim(), num_classes] {
        f.write_all(&(v as u64).to_le_bytes())?;
    }
    for v in data.inputs.iter() {
        f.write_all(&v.to_le_bytes())?;
    }
    for &y in labels {
        f.write_all(&(y as u16).to_le_bytes())?;
    }
    f.flush()?;
    Ok(())
}

/// Reads a container written by [`write_container`]; returns the dataset and class count.
pub fn read_container(path: &Path) -> Result<(Dataset, usize)> {
    let mut bytes = Vec::new();
    File::open(path)?.read_to_end(&mut bytes)?;
    let bad = |m: &str| Error::Format(format!("{}: {m}", path.display()));
    if bytes.len() < 24 {
        return Err(bad("truncated header"));
    }
    let word = |i: usize| u64::from_le_bytes(bytes[8 * i..8 * i + 8].try_into().unwrap()) as usize;
    let (n, d, c) = (word(0), word(1), word(2));
    let expected = n
        .checked_mul(d)
        .and_then(|nd| nd.checked_mul(8))
        .and_then(|b| b.checked_add(24 + 2 * n))
        .ok_or_else(|| bad("header sizes overflow"))?;
    if bytes.len() != expected {
        return Err(bad(&format!("expected {expected} bytes, found {}", bytes.len())));
    }
    let feats: Vec<f64> = bytes[24..24 + 8 * n * d]
        .chunks_exact(8)
        .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
        .collect();
    let labels: Vec<usize> = bytes[24 + 8 * n * d..]
        .chunks_exact(2)
        .map(|b| u16::from_le_bytes(b.try_into().unwrap()) as usize)
        .collect();
    if labels.iter().any(|&y| y >= c) {
        return Err(bad("label exceeds class count"));
    }
    let name = path.file_stem().map_or("container".into(), |s| s.to_string_lossy().into_owned());
    let inputs = Array2::from_shape_vec((n, d), feats).map_err(|e| bad(&e.to_string()))?;
    Ok((Dataset::new(inputs, Targets::Labels(labels), name)?, c))
}

/// Classification dataset from a table whose last column holds integer labels.
///
/// Features are multiplied by `feature_scale`. Returns the dataset and the
/// class count `max label + 1`.
pub fn classification_from_table(table: &Array2<f64>, feature_scale: f64, name: &str) -> Result<(Dataset, usize)> {
    let d = table.ncols() - 1;
    let mut labels = Vec::with_capacity(table.nrows());
    for (i, &y) in table.column(d).iter().enumerate() {
        if y < 0.0 || y.fract() != 0.0 || y > u16::MAX as f64 {
            return invalid(format!("row {}: label {y} is not a class index", i + 1));
        }
        labels.push(y as usize);
    }
    let c = labels.iter().max().map_or(0, |m| m + 1);
    let inputs = table.slice(ndarray::s![.., ..d]).mapv(|v| v * feature_scale);
    Ok((Dataset::new(inputs, Targets::Labels(labels), name)?, c))
}

/// Per-feature population standard deviation.
pub fn feature_std(data: &Dataset) -> Vec<f64> {
    let s = Standardizer::fit(&data.inputs);
    s.std
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_synthetic_has_120_points() {
        let (ds, _) = gen_synthetic_regression(&SyntheticRegressionConfig::default()).unwrap();
        assert_eq!(ds.len(), 120);
        assert_eq!(ds.input_dim(), 2);
        assert_eq!(ds.inputs[[0, 0]], -10.0);
        assert_eq!(ds.inputs[[0, 1]], 100.0);
        assert_eq!(ds.inputs[[119, 0]], 18.0);
    }

    #[test]
    fn noiseless_matches_teacher() {
        let cfg = SyntheticRegressionConfig {
            noise_std: 0.0,
            ..Default::default()
        };
        let (ds, teacher) = gen_synthetic_regression(&cfg).unwrap();
        let xs: Vec<f64> = ds.inputs.column(0).to_vec();
        assert_eq!(ds.targets.values().unwrap(), teacher.eval(&xs).as_slice());
    }

    #[test]
    fn split_counts() {
        let (tr, te) = SplitSpec::default().indices(100).unwrap();
        assert_eq!((tr.len(), te.len()), (90, 10));
        let mut all: Vec<usize> = tr.iter().chain(&te).copied().collect();
        all.sort();
        assert_eq!(all, (0..100).collect::<Vec<_>>());
    }

    #[test]
    fn parse_error_has_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.txt");
        std::fs::write(&p, "1 2 3\n\n4 x 6\n").unwrap();
        match read_table(&p, TableFormat::default()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        std::fs::write(&p, "1,2,3\n4,5\n").unwrap();
        let fmt = TableFormat {
            delimiter: Some(','),
            has_header: false,
        };
        assert!(matches!(read_table(&p, fmt), Err(Error::Parse { line: 2, .. })));
    }

    #[test]
    fn labels_from_last_column() {
        let t = Array2::from_shape_vec((3, 3), vec![2.0, 4.0, 1.0, 0.0, 8.0, 0.0, 6.0, 2.0, 2.0]).unwrap();
        let (ds, c) = classification_from_table(&t, 0.5, "t").unwrap();
        assert_eq!(c, 3);
        assert_eq!(ds.targets.labels().unwrap(), &[1, 0, 2]);
        assert_eq!(ds.inputs[[0, 1]], 2.0);
        let bad = Array2::from_shape_vec((1, 2), vec![1.0, 0.5]).unwrap();
        assert!(classification_from_table(&bad, 1.0, "b").is_err());
    }

    #[test]
    fn container_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.bin");
        let ds = Dataset::new(
            Array2::from_shape_vec((2, 3), vec![0.0, 0.5, 1.0, -1.0, 2.0, 3.5]).unwrap(),
            Targets::Labels(vec![1, 0]),
            "c",
        )
        .unwrap();
        write_container(&p, &ds, 2).unwrap();
        assert_eq!(std::fs::metadata(&p).unwrap().len(), 24 + 48 + 4);
        let (back, c) = read_container(&p).unwrap();
        assert_eq!(c, 2);
        assert_eq!(back.inputs, ds.inputs);
        assert_eq!(back.targets, ds.targets);
    }
}
