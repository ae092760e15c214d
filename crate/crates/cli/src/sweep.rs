//! Sweeps: one child run per (axis value, seed), aggregated into one table.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Result};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{ExperimentConfig, SweepAxis};
use crate::output::{read_metrics_csv, Manifest, MetricRow, RunContext};
use crate::runner::{prior_with_variance, run_experiment};

/// Child config for one axis value and seed.
pub fn child_config(cfg: &ExperimentConfig, value: f64, seed: u64) -> Result<ExperimentConfig> {
    let sw = cfg.sweep.as_ref().ok_or_else(|| anyhow!("sweep: section is missing"))?;
    let mut c = cfg.clone();
    c.kind = sw.base;
    c.sweep = None;
    c.out_dir = None;
    c.seed = seed;
    match sw.axis {
        SweepAxis::TrajectoryLength | SweepAxis::NChains => {
            let h = c.hmc.as_mut().ok_or_else(|| anyhow!("sweep.axis: `{}` needs an hmc section", sw.axis.name()))?;
            if sw.axis == SweepAxis::TrajectoryLength {
                h.trajectory_length = value;
            } else {
                if value < 1.0 || value.fract() != 0.0 {
                    bail!("sweep.values: chain count {value} is not a positive integer");
                }
                h.n_chains = value as usize;
            }
        }
        SweepAxis::Temperature => c.temperature = value,
        SweepAxis::PriorVariance => {
            let p = c.prior.as_mut().ok_or_else(|| anyhow!("sweep.axis: prior_variance needs a prior section"))?;
            *p = prior_with_variance(p, value);
        }
        SweepAxis::NoiseScale => c.noise_scale = value,
    }
    c.validate()?;
    Ok(c)
}

pub fn child_dir(root: &Path, axis: SweepAxis, value: f64, seed: u64) -> PathBuf {
    root.join("children").join(format!("{}={value}", axis.name())).join(format!("seed={seed}"))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub value: f64,
    pub method: String,
    pub metric: String,
    pub mean: f64,
    /// Sample standard deviation over seeds; 0 for a single seed.
    pub std: f64,
    pub n: usize,
}

/// Mean and sample std of each (value, method, metric) over the child rows.
pub fn aggregate(children: &[(f64, Vec<MetricRow>)]) -> Vec<SweepRow> {
    let mut keys: Vec<(f64, String, String)> = Vec::new();
    for (v, rows) in children {
        for r in rows {
            let k = (*v, r.method.clone(), r.metric.clone());
            if !keys.contains(&k) {
                keys.push(k);
            }
        }
    }
    keys.into_iter()
        .map(|(value, method, metric)| {
            let xs: Vec<f64> = children
                .iter()
                .filter(|(v, _)| *v == value)
                .flat_map(|(_, rows)| rows.iter().filter(|r| r.method == method && r.metric == metric).map(|r| r.value))
                .collect();
            let n = xs.len();
            let mean = xs.iter().sum::<f64>() / n as f64;
            let std = if n > 1 {
                (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
            } else {
                0.0
            };
            SweepRow {
                value,
                method,
                metric,
                mean,
                std,
                n,
            }
        })
        .collect()
}

pub const SWEEP_HEADER: &str = "axis,value,method,metric,mean,std,n";

pub fn sweep_csv(axis: SweepAxis, rows: &[SweepRow]) -> String {
    let mut s = String::from(SWEEP_HEADER);
    s.push('\n');
    for r in rows {
        writeln!(s, "{},{},{},{},{},{},{}", axis.name(), r.value, r.method, r.metric, r.mean, r.std, r.n).unwrap();
    }
    s
}

/// Runs every child concurrently on the current rayon pool, then aggregates.
///
/// `seeds` overrides the seed list from the config when given.
pub fn run_sweep(cfg: &ExperimentConfig, dir: &Path, seeds: Option<Vec<u64>>) -> Result<Manifest> {
    let sw = cfg.sweep.as_ref().ok_or_else(|| anyhow!("sweep: section is missing"))?;
    let seeds = seeds.unwrap_or_else(|| if sw.seeds.is_empty() { vec![cfg.seed] } else { sw.seeds.clone() });
    let mut ctx = RunContext::create(dir, cfg.kind.name(), cfg.seed)?;
    let outcome = (|| -> Result<()> {
        ctx.write_text("config.json", &cfg.to_json())?;
        ctx.stage("children");
        let jobs: Vec<(f64, u64)> = sw.values.iter().flat_map(|&v| seeds.iter().map(move |&s| (v, s))).collect();
        let configs: Vec<ExperimentConfig> = jobs.iter().map(|&(v, s)| child_config(cfg, v, s)).collect::<Result<_>>()?;
        let results: Vec<Result<Manifest>> = jobs
            .par_iter()
            .zip(configs.par_iter())
            .map(|(&(v, s), c)| run_experiment(c, &child_dir(dir, sw.axis, v, s)))
            .collect();
        let mut failures = Vec::new();
        for (&(v, s), r) in jobs.iter().zip(&results) {
            let rel = child_dir(Path::new(""), sw.axis, v, s).join("manifest.json");
            ctx.path(&rel.to_string_lossy())?;
            if let Err(e) = r {
                failures.push(format!("{}={v} seed={s}: {e:#}", sw.axis.name()));
            }
        }
        if !failures.is_empty() {
            bail!("{} child run(s) failed: {}", failures.len(), failures.join("; "));
        }
        ctx.stage("aggregate");
        let mut children = Vec::with_capacity(jobs.len());
        for &(v, s) in &jobs {
            let p = child_dir(dir, sw.axis, v, s).join("metrics.csv");
            let rows = if p.exists() { read_metrics_csv(&p)? } else { Vec::new() };
            children.push((v, rows));
        }
        let rows = aggregate(&children);
        ctx.write_text("sweep.csv", &sweep_csv(sw.axis, &rows))
    })();
    let manifest = ctx.finish(&outcome)?;
    outcome.map(|_| manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(metric: &str, value: f64) -> MetricRow {
        MetricRow {
            method: "hmc".into(),
            dataset: "d".into(),
            seed: 0,
            metric: metric.into(),
            value,
        }
    }

    #[test]
    fn aggregate_by_hand() {
        let children = vec![
            (0.1, vec![row("acc", 1.0), row("nll", 3.0)]),
            (0.1, vec![row("acc", 3.0), row("nll", 5.0)]),
            (1.0, vec![row("acc", 2.0)]),
        ];
        let rows = aggregate(&children);
        assert_eq!(rows.len(), 3);
        assert_eq!((rows[0].mean, rows[0].std, rows[0].n), (2.0, 2f64.sqrt(), 2));
        assert_eq!(rows[1].metric, "nll");
        assert_eq!((rows[1].mean, rows[1].std), (4.0, 2f64.sqrt()));
        assert_eq!((rows[2].value, rows[2].mean, rows[2].std, rows[2].n), (1.0, 2.0, 0.0, 1));
    }
}
