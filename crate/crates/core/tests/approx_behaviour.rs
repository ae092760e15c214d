use bnn_hmc::approx::{
    deep_ensemble, kl_to_prior, mfvi_fit, mfvi_sample, sghmc_run, sgd_with_history, sgld_run, MfviConfig, Schedule, TrainConfig,
    VariationalPosterior,
};
use bnn_hmc::evaluate::{accuracy, bma_predict};
use bnn_hmc::model::{self, Activation, Dataset, Head, ModelSpec, Targets};
use bnn_hmc::rng::{fill_standard_normal, stream_rng};
use bnn_hmc::{PosteriorSpec, PriorSpec};
use ndarray::Array2;

fn blobs(n: usize) -> Dataset {
    let mut x = vec![0.0; n * 2];
    fill_standard_normal(&mut stream_rng(1, 0), &mut x);
    let centers = [(-2.0, 0.0), (2.0, 0.0), (0.0, 2.5)];
    let labels: Vec<usize> = (0..n).map(|i| i % 3).collect();
    for (i, &l) in labels.iter().enumerate() {
        x[2 * i] = 0.5 * x[2 * i] + centers[l].0;
        x[2 * i + 1] = 0.5 * x[2 * i + 1] + centers[l].1;
    }
    Dataset::new(Array2::from_shape_vec((n, 2), x).unwrap(), Targets::Labels(labels), "blobs").unwrap()
}

fn posterior() -> PosteriorSpec {
    let spec = ModelSpec::mlp(2, &[8], Activation::Swish, Head::Classification { num_classes: 3 });
    PosteriorSpec::new(spec, PriorSpec::gaussian(1.0), blobs(90), 1.0).unwrap()
}

fn train() -> TrainConfig {
    let mut t = TrainConfig::new(2e-3, 200);
    t.momentum = 0.9;
    t.schedule = Schedule::Cosine;
    t.batch_size = Some(30);
    t
}

fn train_accuracy(post: &PosteriorSpec, samples: &[&[f64]]) -> f64 {
    let p = bma_predict(&post.model, samples, post.data.inputs.view()).unwrap();
    accuracy(p.probs().unwrap(), post.data.targets.labels().unwrap()).unwrap()
}

#[test]
fn sgd_fits_separable_blobs() {
    let post = posterior();
    let (w, losses) = sgd_with_history(&train(), &post, 0).unwrap();
    assert_eq!(losses.len(), 200);
    assert!(losses.last().unwrap() < &(0.5 * losses[0]), "{} -> {}", losses[0], losses.last().unwrap());
    assert!(train_accuracy(&post, &[w.as_slice()]) > 0.95);
}

#[test]
fn ensemble_members_are_distinct_and_reproducible() {
    let post = posterior();
    let cfg = TrainConfig { n_epochs: 20, ..train() };
    let a = deep_ensemble(3, &cfg, &post).unwrap();
    let b = deep_ensemble(3, &cfg, &post).unwrap();
    assert_eq!(a, b);
    assert_ne!(a[0], a[1]);
    assert_eq!(a[0], sgd_with_history(&cfg, &post, 0).unwrap().0);
    assert!(deep_ensemble(0, &cfg, &post).is_err());
}

#[test]
fn sampler_sample_counts_and_spread() {
    let post = posterior();
    let mut cfg = TrainConfig::new(1e-3, 100);
    cfg.burnin_epochs = 40;
    cfg.thin_epochs = 6;
    cfg.batch_size = Some(30);
    let sgld = sgld_run(&cfg, &post).unwrap();
    assert_eq!(sgld.len(), 10);
    assert_eq!(sgld.meta.method, "sgld");
    assert_ne!(sgld.samples[0], sgld.samples[9]);
    cfg.momentum = 0.9;
    let sghmc = sghmc_run(&cfg, &post).unwrap();
    assert_eq!(sghmc.len(), 10);
    assert_eq!(sghmc, sghmc_run(&cfg, &post).unwrap());
    let samples: Vec<&[f64]> = sghmc.samples.iter().map(|w| w.as_slice()).collect();
    assert!(train_accuracy(&post, &samples) > 0.9);
}

#[test]
fn samplers_refuse_tempered_posteriors() {
    let post = posterior().with_temperature(0.5).unwrap();
    let mut cfg = TrainConfig::new(1e-3, 10);
    cfg.thin_epochs = 1;
    assert!(sgld_run(&cfg, &post).is_err());
}

#[test]
fn mfvi_elbo_improves_and_draws_are_seeded() {
    let post = posterior();
    let init = sgd_with_history(&TrainConfig { n_epochs: 50, ..train() }, &post, 0).unwrap().0;
    let cfg = MfviConfig {
        train: TrainConfig::new(1e-2, 150),
        init_variance: 1e-2,
        beta2: 0.999,
    };
    let fit = mfvi_fit(&cfg, &post, &init).unwrap();
    let h = &fit.elbo_history;
    let head: f64 = h[..10].iter().sum::<f64>() / 10.0;
    let tail: f64 = h[h.len() - 10..].iter().sum::<f64>() / 10.0;
    assert!(tail > head, "{head} -> {tail}");
    let a = mfvi_sample(&fit.posterior, 5, 3);
    assert_eq!(a, mfvi_sample(&fit.posterior, 5, 3));
    assert_ne!(a, mfvi_sample(&fit.posterior, 5, 4));
    assert_eq!(a[0].len(), post.param_count());
}

#[test]
fn kl_matches_closed_form() {
    let mean = model::ParameterVector::new(vec![0.5, -1.0, 2.0]).unwrap();
    let vp = VariationalPosterior::new(mean, 0.3).unwrap();
    let prior_var = 2.0;
    let want: f64 = [0.5f64, -1.0, 2.0]
        .iter()
        .map(|m| 0.5 * ((0.3 + m * m) / prior_var - 1.0 + (prior_var / 0.3f64).ln()))
        .sum();
    let got = kl_to_prior(&vp, &PriorSpec::gaussian(prior_var)).unwrap();
    assert!((got - want).abs() < 1e-9, "{got} vs {want}");
}
