//! Experiment configuration documents.
//!
//! A config is one JSON object with a `kind` and the sections that kind
//! needs. Parsing is strict: unknown keys, missing sections and sections the
//! kind does not use are all errors, reported with the JSON path.

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use bnn_hmc::approx::TrainConfig;
use bnn_hmc::data::{SplitSpec, SyntheticRegressionConfig, TableFormat};
use bnn_hmc::diagnostics::TraceMetric;
use bnn_hmc::hmc::HmcConfig;
use bnn_hmc::{ModelSpec, PriorSpec};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Kind {
    Hmc,
    Sgld,
    Sghmc,
    Sgd,
    Ensemble,
    Mfvi,
    Rhat,
    Burnin,
    BmaEval,
    Compare,
    SubspaceScan,
    SynthGen,
    TemperatureSweep,
    PriorSweep,
    RobustnessSweep,
}

impl Kind {
    pub fn name(self) -> &'static str {
        match self {
            Kind::Hmc => "hmc",
            Kind::Sgld => "sgld",
            Kind::Sghmc => "sghmc",
            Kind::Sgd => "sgd",
            Kind::Ensemble => "ensemble",
            Kind::Mfvi => "mfvi",
            Kind::Rhat => "rhat",
            Kind::Burnin => "burnin",
            Kind::BmaEval => "bma_eval",
            Kind::Compare => "compare",
            Kind::SubspaceScan => "subspace_scan",
            Kind::SynthGen => "synth_gen",
            Kind::TemperatureSweep => "temperature_sweep",
            Kind::PriorSweep => "prior_sweep",
            Kind::RobustnessSweep => "robustness_sweep",
        }
    }

    pub fn is_sweep(self) -> bool {
        matches!(self, Kind::TemperatureSweep | Kind::PriorSweep | Kind::RobustnessSweep)
    }

    /// Kinds that produce samples or point estimates and can be swept.
    pub fn is_inference(self) -> bool {
        matches!(self, Kind::Hmc | Kind::Sgld | Kind::Sghmc | Kind::Sgd | Kind::Ensemble | Kind::Mfvi)
    }
}

/// Where training (and optionally test) data come from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    /// Generated 1-D regression; no test split.
    Synthetic {
        #[serde(default)]
        config: SyntheticRegressionConfig,
    },
    /// Delimited numeric table, last column the target, split and standardized.
    Table {
        path: PathBuf,
        #[serde(default)]
        format: TableFormat,
        #[serde(default)]
        split: SplitSpec,
    },
    /// Delimited table with integer class labels in the last column, split by `split`.
    LabeledTable {
        path: PathBuf,
        #[serde(default)]
        format: TableFormat,
        /// Multiplies every feature, e.g. 1/16 for 4-bit pixel intensities.
        #[serde(default = "one_f64")]
        feature_scale: f64,
        #[serde(default)]
        split: SplitSpec,
    },
    /// Classification container. Uses `test_path` when given, otherwise splits.
    Container {
        path: PathBuf,
        #[serde(default)]
        test_path: Option<PathBuf>,
        #[serde(default)]
        split: SplitSpec,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleSection {
    pub n_models: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MfviSection {
    /// Adam settings for the ELBO fit; the `train` section drives the SGD initialization.
    pub fit: TrainConfig,
    #[serde(default = "default_vi_variance")]
    pub init_variance: f64,
    #[serde(default = "default_beta2")]
    pub beta2: f64,
    #[serde(default = "default_vi_samples")]
    pub n_samples: usize,
}

fn default_vi_variance() -> f64 {
    1e-2
}

fn default_beta2() -> f64 {
    0.999
}

fn default_vi_samples() -> usize {
    50
}

/// Stored samples to read, as paths to `.bnns` files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StoresSection {
    pub stores: Vec<PathBuf>,
    /// Leading samples of each store to drop.
    #[serde(default)]
    pub skip: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RhatSection {
    pub stores: Vec<PathBuf>,
    /// Also compute softmax-space R-hat on the test inputs (needs model and data).
    #[serde(default)]
    pub function_space: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BurninSection {
    pub store: PathBuf,
    pub grid: Vec<usize>,
    #[serde(default = "default_window")]
    pub window: usize,
    pub metric: TraceMetric,
}

fn default_window() -> usize {
    bnn_hmc::diagnostics::BURNIN_WINDOW
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSection {
    #[serde(default = "default_bins")]
    pub n_bins: usize,
    /// Out-of-distribution container for confidence AUC-ROC.
    #[serde(default)]
    pub ood_path: Option<PathBuf>,
    /// Test inputs whose true-class probability trace is exported.
    #[serde(default)]
    pub trace_inputs: Vec<usize>,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection {
            n_bins: default_bins(),
            ood_path: None,
            trace_inputs: Vec::new(),
        }
    }
}

fn default_bins() -> usize {
    bnn_hmc::evaluate::DEFAULT_CALIBRATION_BINS
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareSection {
    pub reference: Vec<PathBuf>,
    pub candidate: Vec<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Anchor {
    pub store: PathBuf,
    pub index: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanSection {
    pub anchors: [Anchor; 3],
    pub resolution: usize,
    /// Coordinate ranges; default is the anchor bounding box padded by 20%.
    #[serde(default)]
    pub a_range: Option<(f64, f64)>,
    #[serde(default)]
    pub b_range: Option<(f64, f64)>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    TrajectoryLength,
    NChains,
    Temperature,
    PriorVariance,
    NoiseScale,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::TrajectoryLength => "trajectory_length",
            SweepAxis::NChains => "n_chains",
            SweepAxis::Temperature => "temperature",
            SweepAxis::PriorVariance => "prior_variance",
            SweepAxis::NoiseScale => "noise_scale",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
    /// Inference kind run for every (value, seed).
    pub base: Kind,
    /// Seeds per axis value; defaults to the global seed only.
    #[serde(default)]
    pub seeds: Vec<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: Kind,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    #[serde(default)]
    pub model: Option<ModelSpec>,
    #[serde(default)]
    pub prior: Option<PriorSpec>,
    #[serde(default)]
    pub data: Option<DataSource>,
    #[serde(default = "one_f64")]
    pub temperature: f64,
    #[serde(default = "one_usize")]
    pub num_shards: usize,
    /// Absolute std of Gaussian noise added to test inputs before evaluation.
    #[serde(default)]
    pub noise_scale: f64,
    #[serde(default)]
    pub hmc: Option<HmcConfig>,
    #[serde(default)]
    pub train: Option<TrainConfig>,
    #[serde(default)]
    pub ensemble: Option<EnsembleSection>,
    #[serde(default)]
    pub mfvi: Option<MfviSection>,
    #[serde(default)]
    pub eval: Option<EvalSection>,
    #[serde(default)]
    pub samples: Option<StoresSection>,
    #[serde(default)]
    pub rhat: Option<RhatSection>,
    #[serde(default)]
    pub burnin: Option<BurninSection>,
    #[serde(default)]
    pub compare: Option<CompareSection>,
    #[serde(default)]
    pub scan: Option<ScanSection>,
    #[serde(default)]
    pub sweep: Option<SweepSection>,
}

fn one_f64() -> f64 {
    1.0
}

fn one_usize() -> usize {
    1
}

/// Section names a kind requires and may optionally use.
///
/// Analyses over stores read the model recorded in the stores when `model` is absent.
fn sections(kind: Kind) -> (&'static [&'static str], &'static [&'static str]) {
    const POSTERIOR: [&str; 3] = ["model", "prior", "data"];
    match kind {
        Kind::Hmc => (&["model", "prior", "data", "hmc"], &["eval"]),
        Kind::Sgld | Kind::Sghmc | Kind::Sgd => (&["model", "prior", "data", "train"], &["eval"]),
        Kind::Ensemble => (&["model", "prior", "data", "train", "ensemble"], &["eval"]),
        Kind::Mfvi => (&["model", "prior", "data", "train", "mfvi"], &["eval"]),
        Kind::Rhat => (&["rhat"], &["model", "data"]),
        Kind::Burnin => (&["data", "burnin"], &["model", "prior"]),
        Kind::BmaEval => (&["data", "samples"], &["model", "eval", "prior"]),
        Kind::Compare => (&["data", "compare"], &["model", "prior"]),
        Kind::SubspaceScan => (&["model", "prior", "data", "scan"], &[]),
        Kind::SynthGen => (&["data"], &[]),
        Kind::TemperatureSweep | Kind::PriorSweep | Kind::RobustnessSweep => (
            &["sweep"],
            &[POSTERIOR[0], POSTERIOR[1], POSTERIOR[2], "hmc", "train", "ensemble", "mfvi", "eval"],
        ),
    }
}

impl ExperimentConfig {
    /// A config of `kind` with every section absent and defaults elsewhere.
    pub fn new(kind: Kind) -> Self {
        ExperimentConfig {
            kind,
            seed: 0,
            out_dir: None,
            model: None,
            prior: None,
            data: None,
            temperature: 1.0,
            num_shards: 1,
            noise_scale: 0.0,
            hmc: None,
            train: None,
            ensemble: None,
            mfvi: None,
            eval: None,
            samples: None,
            rhat: None,
            burnin: None,
            compare: None,
            scan: None,
            sweep: None,
        }
    }

    fn present(&self) -> Vec<&'static str> {
        let mut v = Vec::new();
        let mut add = |name, on: bool| {
            if on {
                v.push(name)
            }
        };
        add("model", self.model.is_some());
        add("prior", self.prior.is_some());
        add("data", self.data.is_some());
        add("hmc", self.hmc.is_some());
        add("train", self.train.is_some());
        add("ensemble", self.ensemble.is_some());
        add("mfvi", self.mfvi.is_some());
        add("eval", self.eval.is_some());
        add("samples", self.samples.is_some());
        add("rhat", self.rhat.is_some());
        add("burnin", self.burnin.is_some());
        add("compare", self.compare.is_some());
        add("scan", self.scan.is_some());
        add("sweep", self.sweep.is_some());
        v
    }

    /// Structural checks beyond the JSON schema.
    pub fn validate(&self) -> Result<()> {
        let (required, optional) = sections(self.kind);
        let present = self.present();
        for r in required {
            if !present.contains(r) {
                bail!("{}: section `{r}` is required for kind `{}`", r, self.kind.name());
            }
        }
        for p in &present {
            if !required.contains(p) && !optional.contains(p) {
                bail!("{p}: section is not used by kind `{}`", self.kind.name());
            }
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            bail!("temperature: must be positive, got {}", self.temperature);
        }
        if self.num_shards == 0 {
            bail!("num_shards: must be at least 1");
        }
        if !(self.noise_scale >= 0.0 && self.noise_scale.is_finite()) {
            bail!("noise_scale: must be non-negative");
        }
        if let Some(m) = &self.model {
            m.validate().context("model")?;
        }
        if let Some(p) = &self.prior {
            p.validate().context("prior")?;
        }
        if let Some(h) = &self.hmc {
            h.validate().context("hmc")?;
        }
        if let Some(t) = &self.train {
            t.validate().context("train")?;
        }
        if let Some(s) = &self.scan {
            if s.resolution < 2 {
                bail!("scan.resolution: must be at least 2");
            }
        }
        if let Some(s) = &self.sweep {
            if s.values.is_empty() {
                bail!("sweep.values: need at least one value");
            }
            if !s.base.is_inference() {
                bail!("sweep.base: `{}` cannot be swept", s.base.name());
            }
            let expected = match self.kind {
                Kind::TemperatureSweep => Some(SweepAxis::Temperature),
                Kind::PriorSweep => Some(SweepAxis::PriorVariance),
                Kind::RobustnessSweep => Some(SweepAxis::NoiseScale),
                _ => None,
            };
            if let Some(axis) = expected {
                if s.axis != axis {
                    bail!("sweep.axis: kind `{}` sweeps `{}`", self.kind.name(), axis.name());
                }
            }
        }
        Ok(())
    }

    /// Pretty JSON with every default filled in.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes") + "\n"
    }
}

/// Parses and validates a config; errors name the offending JSON path.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let cfg: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        anyhow::anyhow!("{path}: {}", e.into_inner())
    })?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: &std::path::Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_config(&text).with_context(|| format!("in {}", path.display()))
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "kind": "hmc",
        "model": {"input_dim": 2, "hidden_widths": [4], "activation": "relu",
                  "head": {"type": "regression_fixed_std", "std": 0.1}},
        "prior": {"family": "gaussian", "variance": 0.1},
        "data": {"source": "synthetic"},
        "hmc": {"trajectory_length": 0.1, "step_size": 0.01, "n_burnin": 0, "n_samples": 3}
    }"#;

    #[test]
    fn minimal_parses_and_round_trips() {
        let c = parse_config(MINIMAL).unwrap();
        assert_eq!(c.kind, Kind::Hmc);
        assert_eq!(c.temperature, 1.0);
        assert_eq!(parse_config(&c.to_json()).unwrap(), c);
    }

    #[test]
    fn unknown_key_is_named() {
        let text = MINIMAL.replace("\"n_samples\": 3", "\"n_samples\": 3, \"n_smaples\": 4");
        let err = parse_config(&text).unwrap_err().to_string();
        assert!(err.contains("n_smaples"), "{err}");
        assert!(err.starts_with("hmc"), "{err}");
    }

    #[test]
    fn missing_and_extra_sections() {
        let no_hmc = MINIMAL.replace(
            r#""hmc": {"trajectory_length": 0.1, "step_size": 0.01, "n_burnin": 0, "n_samples": 3}"#,
            r#""temperature": 1.0"#,
        );
        assert!(parse_config(&no_hmc).unwrap_err().to_string().contains("`hmc` is required"));
        let extra = MINIMAL.replace("\"kind\": \"hmc\",", "\"kind\": \"hmc\", \"ensemble\": {\"n_models\": 2},");
        assert!(parse_config(&extra).unwrap_err().to_string().contains("not used"));
    }
}
