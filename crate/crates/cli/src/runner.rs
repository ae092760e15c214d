//! Executes one experiment config into a run directory.

use std::fmt::Write as _;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use bnn_hmc::approx::{self, MfviConfig};
use bnn_hmc::data::{self, uniform_grid};
use bnn_hmc::diagnostics;
use bnn_hmc::evaluate::{self, PredictiveDistribution};
use bnn_hmc::hmc;
use bnn_hmc::subspace;
use bnn_hmc::{Dataset, ModelSpec, PosteriorSpec, PriorSpec, SampleStore};
use serde_json::json;

use crate::config::{DataSource, EvalSection, ExperimentConfig, Kind};
use crate::output::{Manifest, RunContext};

/// Training data plus the set predictions are scored on.
pub struct LoadedData {
    pub train: Dataset,
    pub test: Option<Dataset>,
    pub num_classes: Option<usize>,
    /// Target standard deviation used to report regression metrics in original units.
    pub target_scale: f64,
}

pub fn load_data(source: &DataSource) -> Result<LoadedData> {
    match source {
        DataSource::Synthetic { config } => {
            let (train, _) = data::gen_synthetic_regression(config)?;
            Ok(LoadedData {
                train,
                test: None,
                num_classes: None,
                target_scale: 1.0,
            })
        }
        DataSource::Table { path, format, split } => {
            let s = data::load_uci(path, *format, split).with_context(|| format!("loading {}", path.display()))?;
            let target_scale = s.target_scale();
            Ok(LoadedData {
                train: s.train,
                test: Some(s.test),
                num_classes: None,
                target_scale,
            })
        }
        DataSource::LabeledTable {
            path,
            format,
            feature_scale,
            split,
        } => {
            let table = data::read_table(path, *format).with_context(|| format!("loading {}", path.display()))?;
            let name = path.file_stem().map_or("table".into(), |s| s.to_string_lossy().into_owned());
            let (all, c) = data::classification_from_table(&table, *feature_scale, &name)?;
            let (tr, te) = split.indices(all.len())?;
            Ok(LoadedData {
                train: all.select(&tr),
                test: Some(all.select(&te)),
                num_classes: Some(c),
                target_scale: 1.0,
            })
        }
        DataSource::Container { path, test_path, split } => {
            let (all, c) = data::read_container(path).with_context(|| format!("loading {}", path.display()))?;
            let (train, test) = match test_path {
                Some(tp) => {
                    let (test, c2) = data::read_container(tp).with_context(|| format!("loading {}", tp.display()))?;
                    if c2 != c {
                        bail!("{} has {c2} classes but {} has {c}", tp.display(), path.display());
                    }
                    (all, test)
                }
                None => {
                    let (tr, te) = split.indices(all.len())?;
                    (all.select(&tr), all.select(&te))
                }
            };
            Ok(LoadedData {
                train,
                test: Some(test),
                num_classes: Some(c),
                target_scale: 1.0,
            })
        }
    }
}

/// Copies the global seed into every section seed.
pub fn resolve(mut cfg: ExperimentConfig) -> ExperimentConfig {
    let seed = cfg.seed;
    if let Some(h) = cfg.hmc.as_mut() {
        h.seed = seed;
    }
    if let Some(t) = cfg.train.as_mut() {
        t.seed = seed;
    }
    if let Some(m) = cfg.mfvi.as_mut() {
        m.fit.seed = seed;
    }
    cfg
}

/// Default run directory when neither `--out` nor `out_dir` is given.
pub fn default_out_dir(cfg: &ExperimentConfig) -> std::path::PathBuf {
    std::path::PathBuf::from("runs").join(format!("{}-seed{}", cfg.kind.name(), cfg.seed))
}

/// Runs `cfg` into `dir`. The manifest is written whether or not the run succeeds.
pub fn run_experiment(cfg: &ExperimentConfig, dir: &Path) -> Result<Manifest> {
    if cfg.kind.is_sweep() {
        return crate::sweep::run_sweep(cfg, dir, None);
    }
    let cfg = resolve(cfg.clone());
    let mut ctx = RunContext::create(dir, cfg.kind.name(), cfg.seed)?;
    let outcome = ctx.write_text("config.json", &cfg.to_json()).and_then(|_| dispatch(&cfg, &mut ctx));
    let manifest = ctx.finish(&outcome)?;
    outcome.map(|_| manifest)
}

fn dispatch(cfg: &ExperimentConfig, ctx: &mut RunContext) -> Result<()> {
    match cfg.kind {
        Kind::Hmc => run_hmc(cfg, ctx),
        Kind::Sgld | Kind::Sghmc => run_sg_sampler(cfg, ctx),
        Kind::Sgd => run_sgd(cfg, ctx),
        Kind::Ensemble => run_ensemble(cfg, ctx),
        Kind::Mfvi => run_mfvi(cfg, ctx),
        Kind::Rhat => run_rhat(cfg, ctx),
        Kind::Burnin => run_burnin(cfg, ctx),
        Kind::BmaEval => run_bma_eval(cfg, ctx),
        Kind::Compare => run_compare(cfg, ctx),
        Kind::SubspaceScan => run_scan(cfg, ctx),
        Kind::SynthGen => run_synth(cfg, ctx),
        Kind::TemperatureSweep | Kind::PriorSweep | Kind::RobustnessSweep => unreachable!("sweeps are handled before dispatch"),
    }
}

fn section<'a, T>(s: &'a Option<T>, name: &str) -> Result<&'a T> {
    s.as_ref().ok_or_else(|| anyhow!("section `{name}` is missing"))
}

fn posterior(cfg: &ExperimentConfig, loaded: &LoadedData) -> Result<PosteriorSpec> {
    let model = section(&cfg.model, "model")?.clone();
    let prior = *section(&cfg.prior, "prior")?;
    loaded.train.check_compatible(&model)?;
    if let (Some(c), bnn_hmc::Head::Classification { num_classes }) = (loaded.num_classes, &model.head) {
        if c != *num_classes {
            bail!("model.head.num_classes: {num_classes} does not match the {c} classes in the data");
        }
    }
    Ok(PosteriorSpec::new(model, prior, loaded.train.clone(), cfg.temperature)?.with_shards(cfg.num_shards))
}

fn load(cfg: &ExperimentConfig, ctx: &mut RunContext) -> Result<LoadedData> {
    ctx.stage("load_data");
    load_data(section(&cfg.data, "data")?)
}

/// The set predictions are scored on, with input noise applied.
fn eval_set(cfg: &ExperimentConfig, loaded: &LoadedData) -> Result<Dataset> {
    let base = loaded.test.as_ref().unwrap_or(&loaded.train);
    Ok(data::corrupt_gaussian(base, cfg.noise_scale, cfg.seed)?)
}

/// Embeds the resolved experiment in a store so later analyses can find the model.
fn tag_store(store: &mut SampleStore, cfg: &ExperimentConfig) {
    let sampler = std::mem::take(&mut store.meta.config);
    store.meta.config = json!({
        "experiment": serde_json::to_value(cfg).unwrap_or_default(),
        "sampler": sampler,
    });
}

fn save_store(ctx: &mut RunContext, rel: &str, store: &SampleStore) -> Result<()> {
    let p = ctx.path(rel)?;
    store.write(&p).with_context(|| format!("writing {}", p.display()))?;
    ctx.note_store(rel);
    Ok(())
}

/// Model recorded in a store written by a run.
pub fn model_from_store(store: &SampleStore) -> Option<ModelSpec> {
    serde_json::from_value(store.meta.config.get("experiment")?.get("model")?.clone()).ok()
}

fn resolve_model(cfg: &ExperimentConfig, stores: &[SampleStore]) -> Result<ModelSpec> {
    if let Some(m) = &cfg.model {
        return Ok(m.clone());
    }
    stores
        .iter()
        .find_map(model_from_store)
        .ok_or_else(|| anyhow!("model: not given and not recorded in the stores"))
}

pub fn read_store(path: &Path) -> Result<SampleStore> {
    SampleStore::read(path).with_context(|| format!("reading {}", path.display()))
}

/// Scores a model average on `data` and records the standard metrics.
fn score(
    ctx: &mut RunContext,
    method: &str,
    spec: &ModelSpec,
    samples: &[&[f64]],
    data: &Dataset,
    scale: f64,
    eval: Option<&EvalSection>,
) -> Result<PredictiveDistribution> {
    ctx.stage("evaluate");
    let pred = evaluate::bma_predict(spec, samples, data.inputs.view())?;
    let name = data.name.clone();
    match &pred {
        PredictiveDistribution::Classification(p) => {
            let labels = data.targets.labels().ok_or_else(|| anyhow!("classification model on regression data"))?;
            let n_bins = eval.map_or(evaluate::DEFAULT_CALIBRATION_BINS, |e| e.n_bins);
            ctx.metric(method, &name, "accuracy", evaluate::accuracy(p, labels)?);
            ctx.metric(method, &name, "nll", evaluate::nll(p, labels)?);
            ctx.metric(method, &name, "ece", evaluate::ece(p, labels, n_bins)?);
            if eval.is_some() {
                let mut csv = String::from("lower,upper,confidence,accuracy,count\n");
                for b in evaluate::calibration_curve(p, labels, n_bins)? {
                    writeln!(csv, "{},{},{},{},{}", b.lower, b.upper, b.confidence, b.accuracy, b.count)?;
                }
                ctx.write_text("calibration.csv", &csv)?;
                let (_, hist) = evaluate::predictive_entropy(p, 30);
                ctx.write_text("entropy_hist.csv", &histogram_csv(&hist))?;
            }
        }
        PredictiveDistribution::Regression(r) => {
            let y = data.targets.values().ok_or_else(|| anyhow!("regression model on classification data"))?;
            ctx.metric(method, &name, "rmse", evaluate::rmse(r, y, scale)?);
            ctx.metric(method, &name, "test_ll", evaluate::gaussian_test_ll(r, y, scale)?);
        }
    }
    Ok(pred)
}

fn histogram_csv(h: &evaluate::Histogram) -> String {
    let mut csv = String::from("lower,upper,count\n");
    for (i, c) in h.counts.iter().enumerate() {
        writeln!(csv, "{},{},{}", h.edges[i], h.edges[i + 1], c).unwrap();
    }
    csv
}

fn slices(stores: &[SampleStore]) -> Vec<&[f64]> {
    stores.iter().flat_map(|s| s.samples.iter().map(|w| w.as_slice())).collect()
}

/// Mean and population std of the training log-likelihood across samples.
fn loglik_spread(post: &PosteriorSpec, samples: &[&[f64]]) -> Result<(f64, f64)> {
    use rayon::prelude::*;
    let ll: Vec<f64> = samples
        .par_iter()
        .map(|w| post.log_likelihood(w))
        .collect::<bnn_hmc::Result<_>>()?;
    let n = ll.len() as f64;
    let mean = ll.iter().sum::<f64>() / n;
    let var = ll.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    Ok((mean, var.sqrt()))
}

fn run_hmc(cfg: &ExperimentConfig, ctx: &mut RunContext) -> Result<()> {
    let loaded = load(cfg, ctx)?;
    let post = posterior(cfg, &loaded)?;
    let hc = section(&cfg.hmc, "hmc")?;
    ctx.stage("sample");
    let mut stores = Vec::with_capacity(hc.n_chains);
    for (c, r) in hmc::run_chains(hc, &post).into_iter().enumerate() {
        let mut s = r.with_context(|| format!("chain {c}"))?;
        tag_store(&mut s, cfg);
        save_store(ctx, &format!("stores/chain_{c}.bnns"), &s)?;
        stores.push(s);
    }
    let name = loaded.train.name.clone();
    let rate = stores.iter().map(|s| s.accept_rate()).sum::<f64>() / stores.len() as f64;
    ctx.metric("hmc", &name, "accept_rate", rate);
    ctx.metric("hmc", &name, "n_leapfrog", hc.n_leapfrog() as f64);
    let samples = slices(&stores);
    let (mean, std) = loglik_spread(&post, &samples)?;
    ctx.metric("hmc", &name, "train_loglik_mean", mean);
    ctx.metric("hmc", &name, "train_loglik_std", std);
    let eval = eval_set(cfg, &loaded)?;
    score(ctx, "hmc", &post.model, &samples, &eval, loaded.target_scale, cfg.eval.as_ref())?;
    Ok(())
}

fn run_sg_sampler(cfg: &ExperimentConfig, ctx: &mut RunContext) -> Result<()> {
    let loaded = load(cfg, ctx)?;
    let post = posterior(cfg, &loaded)?;
    let tc = section(&cfg.train, "train")?;
    ctx.stage("sample");
    let method = cfg.kind.name();
    let mut store = if cfg.kind == Kind::Sgld {
        approx::sgld_run(tc, &post)?
    } else {
        approx::sghmc_run(tc, &post)?
    };
    tag_store(&mut store, cfg);
    save_store(ctx, "stores/chain_0.bnns", &store)?;
    let samples = slices(std::slice::from_ref(&store));
    let (mean, std) = loglik_spread(&post, &samples)?;
    let name = loaded.train.name.clone();
    ctx.metric(method, &name, "n_samples", store.len() as f64);
    ctx.metric(method, &name, "train_loglik_mean", mean);
    ctx.metric(method, &name, "train_loglik_std", std);
    let eval = eval_set(cfg, &loaded)?;
    score(ctx, method, &post.model, &samples, &eval, loaded.target_scale, cfg.eval.as_ref())?;
    Ok(())
}

fn finish_members(
    cfg: &ExperimentConfig,
    ctx: &mut RunContext,
    loaded: &LoadedData,
    post: &PosteriorSpec,
    method: &str,
    members: Vec<bnn_hmc::ParameterVector>,
) -> Result<()> {
    let mut store = approx::store_from_members(members, method, cfg.seed, serde_json::Value::Null)?;
    tag_store(&mut store, cfg);
    save_store(ctx, &format!("stores/{method}.bnns"), &store)?;
    let eval = eval_set(cfg, loaded)?;
    let samples = slices(std::slice::from_ref(&store));
    score(ctx, method, &post.model, &samples, &eval, loaded.target_scale, cfg.eval.as_ref())?;
    Ok(())
}

fn run_sgd(cfg: &ExperimentConfig, ctx: &mut RunContext) -> Result<()> {
    let loaded = load(cfg, ctx)?;
    let post = posterior(cfg, &loaded)?;
    ctx.stage("train");
    let (w, losses) = approx::sgd_with_history(section(&cfg.train, "train")?, &post, 0)?;
    let mut csv = String::from("epoch,loss\n");
    for (e, l) in losses.iter().enumerate() {
        writeln!(csv, "{},{}", e + 1, l)?;
    }
    ctx.write_text("loss.csv", &csv)?;
    finish_members(cfg, ctx, &loaded, &post, "sgd", vec![w])
}

fn run_ensemble(cfg: &ExperimentConfig, ctx: &mut RunContext) -> Result<()> {
    let loaded = load(cfg, ctx)?;
    let post = posterior(cfg, &loaded)?;
    ctx.stage("train");
    let n = section(&cfg.ensemble, "ensemble")?.n_models;
    let members = approx::deep_ensemble(n, section(&cfg.train, "train")?, &post)?;
    finish_members(cfg, ctx, &loaded, &post, "ensemble", members)
}

fn run_mfvi(cfg: &ExperimentConfig, ctx: &mut RunContext) -> Result<()> {
    let loaded = load(cfg, ctx)?;
    let post = posterior(cfg, &loaded)?;
    let ms = section(&cfg.mfvi, "mfvi")?;
    ctx.stage("train");
    let init = approx::train_sgd(section(&cfg.train, "train")?, &post)?;
    ctx.stage("fit");
    let vc = MfviConfig {
        train: ms.fit.clone(),
        init_variance: ms.init_variance,
        beta2: ms.beta2,
    };
    let fit = approx::mfvi_fit(&vc, &post, &init)?;
    let mut csv = String::from("epoch,elbo\n");
    for (e, v) in fit.elbo_history.iter().enumerate() {
        writeln!(csv, "{},{}", e + 1, v)?;
    }
    ctx.write_text("elbo.csv", &csv)?;
    if let Some(last) = fit.elbo_history.last() {
        ctx.metric("mfvi", &loaded.train.name, "final_elbo", *last);
    }
    let members = approx::mfvi_sample(&fit.posterior, ms.n_samples, cfg.seed);
    finish_members(cfg, ctx, &loaded, &post, "mfvi", members)
}

fn rhat_csv_rows(ctx: &mut RunContext, method: &str, report: &diagnostics::RhatReport) {
    let n = report.len() as f64;
    ctx.metric(method, "-", "n_quantities", n);
    ctx.metric(method, "-", "fraction_below_1_1", report.fraction_below_1_1);
    ctx.metric(method, "-", "fraction_above_1_1", report.fraction_above_1_1);
    ctx.metric(method, "-", "n_undefined", report.n_undefined as f64);
}

fn run_rhat(cfg: &ExperimentConfig, ctx: &mut RunContext) -> Result<()> {
    let rs = section(&cfg.rhat, "rhat")?;
    ctx.stage("load_stores");
    let stores: Vec<SampleStore> = rs.stores.iter().map(|p| read_store(p)).collect::<Result<_>>()?;
    let refs: Vec<&SampleStore> = stores.iter().collect();
    ctx.stage("rhat_weights");
    let report = diagnostics::rhat_weights(&refs)?;
    let p = ctx.path("rhat_weights.csv")?;
    report.write_csv(&p)?;
    rhat_csv_rows(ctx, "rhat_weights", &report);
    let mut summary = json!({ "weights": report.summary_json() });
    if rs.function_space {
        let model = resolve_model(cfg, &stores)?;
        let loaded = load(cfg, ctx)?;
        let eval = eval_set(cfg, &loaded)?;
        ctx.stage("rhat_functions");
        let report = diagnostics::rhat_functions(&refs, &model, eval.inputs.view())?;
        let p = ctx.path("rhat_functions.csv")?;
        report.write_csv(&p)?;
        rhat_csv_rows(ctx, "rhat_functions", &report);
        summary["functions"] = report.summary_json();
    }
    ctx.write_json("summary.json", &summary)
}

fn run_burnin(cfg: &ExperimentConfig, ctx: &mut RunContext) -> Result<()> {
    let bs = section(&cfg.burnin, "burnin")?;
    let store = read_store(&bs.store)?;
    let model = resolve_model(cfg, std::slice::from_ref(&store))?;
    let loaded = load(cfg, ctx)?;
    let eval = eval_set(cfg, &loaded)?;
    ctx.stage("trace");
    let points = diagnostics::burnin_trace(&store, &model, &eval, bs.metric, &bs.grid, bs.window)?;
    let mut csv = String::from("n_burnin,ensemble,single\n");
    for p in &points {
        writeln!(csv, "{},{},{}", p.n_burnin, p.ensemble, p.single)?;
    }
    ctx.write_text("burnin.csv", &csv)
}

fn pooled_stores(paths: &[std::path::PathBuf], skip: usize) -> Result<Vec<SampleStore>> {
    paths
        .iter()
        .map(|p| {
            let s = read_store(p)?;
            if skip >= s.len() {
                bail!("{}: skipping {skip} of {} samples leaves none", p.display(), s.len());
            }
            Ok(s.slice(skip..s.len()))
        })
        .collect()
}

fn run_bma_eval(cfg: &ExperimentConfig, ctx: &mut RunContext) -> Result<()> {
    let ss = section(&cfg.samples, "samples")?;
    ctx.stage("load_stores");
    let stores = pooled_stores(&ss.stores, ss.skip)?;
    let model = resolve_model(cfg, &stores)?;
    let loaded = load(cfg, ctx)?;
    let eval = eval_set(cfg, &loaded)?;
    let samples = slices(&stores);
    let default_eval = EvalSection::default();
    let es = cfg.eval.as_ref().unwrap_or(&default_eval);
    let pred = score(ctx, "bma", &model, &samples, &eval, loaded.target_scale, Some(es))?;
    if let Some(ood) = &es.ood_path {
        ctx.stage("ood");
        let (ood_data, _) = data::read_container(ood).with_context(|| format!("loading {}", ood.display()))?;
        let p_ood = evaluate::bma_predict(&model, &samples, ood_data.inputs.view())?;
        let auc = evaluate::ood_auc_roc(&evaluate::confidences(pred.probs()?), &evaluate::confidences(p_ood.probs()?))?;
        ctx.metric("bma", &eval.name, "ood_auc_roc", auc);
    }
    if !es.trace_inputs.is_empty() {
        ctx.stage("traces");
        let labels = eval.targets.labels().ok_or_else(|| anyhow!("eval.trace_inputs: needs classification data"))?;
        let mut csv = String::from("store,input,sample,prob\n");
        for (si, store) in stores.iter().enumerate() {
            for &i in &es.trace_inputs {
                if i >= eval.len() {
                    bail!("eval.trace_inputs: input {i} out of range for {} rows", eval.len());
                }
                let x = eval.inputs.row(i).to_vec();
                for (k, p) in evaluate::true_class_trace(store, &model, &x, labels[i])?.iter().enumerate() {
                    writeln!(csv, "{si},{i},{k},{p}")?;
                }
            }
        }
        ctx.write_text("traces.csv", &csv)?;
    }
    Ok(())
}

fn run_compare(cfg: &ExperimentConfig, ctx: &mut RunContext) -> Result<()> {
    let cs = section(&cfg.compare, "compare")?;
    ctx.stage("load_stores");
    let reference = pooled_stores(&cs.reference, 0)?;
    let candidate = pooled_stores(&cs.candidate, 0)?;
    let model = resolve_model(cfg, &reference)?;
    let loaded = load(cfg, ctx)?;
    let eval = eval_set(cfg, &loaded)?;
    ctx.stage("compare");
    let p_ref = evaluate::bma_predict(&model, &slices(&reference), eval.inputs.view())?;
    let p_cand = evaluate::bma_predict(&model, &slices(&candidate), eval.inputs.view())?;
    let (a, b) = (p_ref.probs()?, p_cand.probs()?);
    let agreement = evaluate::agreement(a, b)?;
    let tv = evaluate::total_variation(a, b)?;
    ctx.metric("compare", &eval.name, "agreement", agreement);
    ctx.metric("compare", &eval.name, "total_variation", tv);
    ctx.write_text("compare.csv", &format!("metric,value\nagreement,{agreement}\ntotal_variation,{tv}\n"))
}

fn run_scan(cfg: &ExperimentConfig, ctx: &mut RunContext) -> Result<()> {
    let sc = section(&cfg.scan, "scan")?;
    ctx.stage("load_stores");
    let mut anchors = Vec::with_capacity(3);
    for a in &sc.anchors {
        let s = read_store(&a.store)?;
        let w = s
            .samples
            .get(a.index)
            .ok_or_else(|| anyhow!("scan.anchors: {} has no sample {}", a.store.display(), a.index))?;
        anchors.push(w.as_slice().to_vec());
    }
    let loaded = load(cfg, ctx)?;
    let post = posterior(cfg, &loaded)?;
    ctx.stage("scan");
    let basis = subspace::build_subspace(&anchors[0], &anchors[1], &anchors[2])?;
    let (da, db) = basis.default_ranges();
    let grid = subspace::scan_grid(&basis, sc.a_range.unwrap_or(da), sc.b_range.unwrap_or(db), sc.resolution, &post)?;
    let dir = ctx.path("scan")?;
    grid.write(&dir)?;
    for f in ["log_likelihood.csv", "log_prior.csv", "log_posterior.csv", "scan.json"] {
        ctx.path(&format!("scan/{f}"))?;
    }
    let best = grid.log_posterior.iter().cloned().filter(|v| v.is_finite()).fold(f64::NEG_INFINITY, f64::max);
    ctx.metric("scan", &loaded.train.name, "n_nonfinite", grid.n_nonfinite as f64);
    ctx.metric("scan", &loaded.train.name, "max_log_posterior", best);
    Ok(())
}

fn run_synth(cfg: &ExperimentConfig, ctx: &mut RunContext) -> Result<()> {
    let DataSource::Synthetic { config } = section(&cfg.data, "data")? else {
        bail!("data.source: synth_gen needs a synthetic source");
    };
    ctx.stage("generate");
    let (ds, teacher) = data::gen_synthetic_regression(config)?;
    let y = ds.targets.values().expect("regression targets");
    let mut csv = String::from("x,y\n");
    for (i, yi) in y.iter().enumerate() {
        writeln!(csv, "{},{yi}", ds.inputs[[i, 0]])?;
    }
    ctx.write_text("data.csv", &csv)?;
    let lo = config.intervals.iter().map(|r| r.0).fold(f64::INFINITY, f64::min);
    let hi = config.intervals.iter().map(|r| r.1).fold(f64::NEG_INFINITY, f64::max);
    let pad = 0.1 * (hi - lo);
    let xs = uniform_grid(lo - pad, hi + pad, 400);
    let f = teacher.eval(&xs);
    let mut csv = String::from("x,f\n");
    for (x, v) in xs.iter().zip(&f) {
        writeln!(csv, "{x},{v}")?;
    }
    ctx.write_text("truth.csv", &csv)?;
    ctx.metric("synth", &ds.name, "n_points", ds.len() as f64);
    Ok(())
}

/// Rescales a prior to a new marginal variance, keeping its family and shape.
pub fn prior_with_variance(prior: &PriorSpec, variance: f64) -> PriorSpec {
    match *prior {
        PriorSpec::Gaussian { .. } => PriorSpec::gaussian(variance),
        PriorSpec::Logistic { .. } => PriorSpec::logistic(variance),
        PriorSpec::Mog { variances, weights } => {
            let k = variance / prior.variance();
            PriorSpec::Mog {
                variances: [variances[0] * k, variances[1] * k],
                weights,
            }
        }
    }
}
