//! Run directories: metric tables, manifests and artifact bookkeeping.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

/// One tidy row of `metrics.csv`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub method: String,
    pub dataset: String,
    pub seed: u64,
    pub metric: String,
    pub value: f64,
}

pub const METRICS_HEADER: &str = "method,dataset,seed,metric,value";

pub fn metrics_csv(rows: &[MetricRow]) -> String {
    let mut s = String::from(METRICS_HEADER);
    s.push('\n');
    for r in rows {
        writeln!(s, "{},{},{},{},{}", r.method, r.dataset, r.seed, r.metric, r.value).unwrap();
    }
    s
}

pub fn read_metrics_csv(path: &Path) -> Result<Vec<MetricRow>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut lines = text.lines();
    if lines.next() != Some(METRICS_HEADER) {
        anyhow::bail!("{}: unexpected header", path.display());
    }
    lines
        .enumerate()
        .map(|(i, line)| {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 5 {
                anyhow::bail!("{}:{}: expected 5 fields", path.display(), i + 2);
            }
            Ok(MetricRow {
                method: f[0].into(),
                dataset: f[1].into(),
                seed: f[2].parse().with_context(|| format!("{}:{}: seed", path.display(), i + 2))?,
                metric: f[3].into(),
                value: f[4].parse().with_context(|| format!("{}:{}: value", path.display(), i + 2))?,
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub status: String,
    pub kind: String,
    pub seed: u64,
    pub version: String,
    pub wall_clock_seconds: f64,
    #[serde(default)]
    pub failed_stage: Option<String>,
    #[serde(default)]
    pub error: Option<String>,
    /// Paths relative to the run directory.
    pub artifacts: Vec<String>,
}

impl Manifest {
    pub fn read(dir: &Path) -> Result<Manifest> {
        let path = dir.join("manifest.json");
        let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Mutable state of one run: its directory, the current stage and what it wrote.
pub struct RunContext {
    pub dir: PathBuf,
    pub kind: String,
    pub seed: u64,
    pub stage: &'static str,
    pub metrics: Vec<MetricRow>,
    artifacts: Vec<String>,
    started: Instant,
}

impl RunContext {
    pub fn create(dir: &Path, kind: &str, seed: u64) -> Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(RunContext {
            dir: dir.to_path_buf(),
            kind: kind.into(),
            seed,
            stage: "setup",
            metrics: Vec::new(),
            artifacts: Vec::new(),
            started: Instant::now(),
        })
    }

    pub fn stage(&mut self, name: &'static str) {
        log::info!("{}: {name}", self.kind);
        self.stage = name;
    }

    /// Absolute path for a relative artifact, creating parent directories.
    pub fn path(&mut self, rel: &str) -> Result<PathBuf> {
        let p = self.dir.join(rel);
        if let Some(parent) = p.parent() {
            fs::create_dir_all(parent)?;
        }
        if !self.artifacts.iter().any(|a| a == rel) {
            self.artifacts.push(rel.to_string());
        }
        Ok(p)
    }

    pub fn write_text(&mut self, rel: &str, text: &str) -> Result<()> {
        let p = self.path(rel)?;
        fs::write(&p, text).with_context(|| format!("writing {}", p.display()))
    }

    pub fn write_json(&mut self, rel: &str, value: &impl Serialize) -> Result<()> {
        self.write_text(rel, &(serde_json::to_string_pretty(value)? + "\n"))
    }

    /// Records the sidecar written next to a store as well.
    pub fn note_store(&mut self, rel: &str) {
        let side = Path::new(rel).with_extension("json").to_string_lossy().into_owned();
        self.artifacts.push(side);
    }

    pub fn metric(&mut self, method: &str, dataset: &str, metric: &str, value: f64) {
        self.metrics.push(MetricRow {
            method: method.into(),
            dataset: dataset.into(),
            seed: self.seed,
            metric: metric.into(),
            value,
        });
    }

    pub fn finish(mut self, outcome: &Result<()>) -> Result<Manifest> {
        if !self.metrics.is_empty() {
            let csv = metrics_csv(&self.metrics);
            self.write_text("metrics.csv", &csv)?;
        }
        let (status, failed_stage, error) = match outcome {
            Ok(()) => ("ok", None, None),
            Err(e) => ("failed", Some(self.stage.to_string()), Some(format!("{e:#}"))),
        };
        let manifest = Manifest {
            status: status.into(),
            kind: self.kind.clone(),
            seed: self.seed,
            version: env!("CARGO_PKG_VERSION").into(),
            wall_clock_seconds: self.started.elapsed().as_secs_f64(),
            failed_stage,
            error,
            artifacts: self.artifacts.clone(),
        };
        let path = self.dir.join("manifest.json");
        fs::write(&path, serde_json::to_string_pretty(&manifest)? + "\n").with_context(|| format!("writing {}", path.display()))?;
        Ok(manifest)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn metrics_round_trip() {
        let rows = vec![
            MetricRow {
                method: "hmc".into(),
                dataset: "toy".into(),
                seed: 3,
                metric: "accuracy".into(),
                value: 0.1 + 0.2,
            },
            MetricRow {
                method: "sgd".into(),
                dataset: "toy".into(),
                seed: 3,
                metric: "nll".into(),
                value: -1e-300,
            },
        ];
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        fs::write(&p, metrics_csv(&rows)).unwrap();
        assert_eq!(read_metrics_csv(&p).unwrap(), rows);
    }
}
