use bnn_hmc::model::{self, Activation, Dataset, Head, ModelSpec, Targets};
use bnn_hmc::rng::{fill_standard_normal, stream_rng};
use bnn_hmc::{LogDensity, PosteriorSpec, PriorSpec};
use ndarray::{s, Array2};
use proptest::prelude::*;

fn problem(n: usize, seed: u64) -> (PosteriorSpec, Vec<f64>) {
    let spec = ModelSpec::mlp(3, &[4], Activation::Swish, Head::Classification { num_classes: 3 });
    let mut x = vec![0.0; n * 3];
    fill_standard_normal(&mut stream_rng(seed, 0), &mut x);
    let labels = (0..n).map(|i| (i * 5 + seed as usize) % 3).collect();
    let data = Dataset::new(Array2::from_shape_vec((n, 3), x).unwrap(), Targets::Labels(labels), "p").unwrap();
    let w = model::init_params(&spec, 0.5, seed).unwrap().into_inner();
    (PosteriorSpec::new(spec, PriorSpec::gaussian(0.7), data, 1.0).unwrap(), w)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn shard_count_never_changes_bits(n in 1usize..1300, shards in 2usize..9, seed in 0u64..1000) {
        let (post, w) = problem(n, seed);
        let (v1, g1) = post.sharded_value_and_grad(&w, 1).unwrap();
        let (vk, gk) = post.sharded_value_and_grad(&w, shards).unwrap();
        prop_assert_eq!(v1.to_bits(), vk.to_bits());
        prop_assert_eq!(g1.as_slice(), gk.as_slice());
    }

    #[test]
    fn likelihood_is_sum_of_rows(n in 1usize..600, seed in 0u64..1000) {
        let (post, w) = problem(n, seed);
        let per_row: f64 = (0..n)
            .map(|i| {
                let one = Dataset::new(post.data.inputs.slice(s![i..i + 1, ..]).to_owned(), post.data.targets.select(&[i]), "row").unwrap();
                model::log_likelihood(&post.model, &w, &one).unwrap()
            })
            .sum();
        let ll = post.log_likelihood(&w).unwrap();
        prop_assert!((ll - per_row).abs() <= 1e-9 * per_row.abs().max(1.0));
    }

    #[test]
    fn temperature_divides_value_and_gradient(t in 1e-3f64..100.0, seed in 0u64..1000) {
        let (post, w) = problem(50, seed);
        let hot = post.with_temperature(t).unwrap();
        let (v1, g1) = post.sharded_value_and_grad(&w, 1).unwrap();
        let (vt, gt) = hot.sharded_value_and_grad(&w, 1).unwrap();
        prop_assert_eq!(vt, v1 / t);
        for (a, b) in gt.iter().zip(g1.iter()) {
            prop_assert_eq!(*a, *b / t);
        }
        let joint = post.log_likelihood(&w).unwrap() + post.log_prior(&w);
        prop_assert_eq!(hot.log_density(&w).unwrap(), joint / t);
    }
}

#[test]
fn gradient_matches_central_differences() {
    let (post, w) = problem(40, 3);
    let g = post.grad_log_density(&w).unwrap();
    let h = 1e-6;
    for j in 0..w.len() {
        let (mut up, mut down) = (w.clone(), w.clone());
        up[j] += h;
        down[j] -= h;
        let fd = (post.log_density(&up).unwrap() - post.log_density(&down).unwrap()) / (2.0 * h);
        assert!((fd - g[j]).abs() < 1e-5 * fd.abs().max(1.0), "coord {j}: {fd} vs {}", g[j]);
    }
}

#[test]
fn log_density_trait_agrees() {
    let (post, w) = problem(30, 1);
    let mut grad = vec![0.0; w.len()];
    let v = post.value_and_grad(&w, &mut grad).unwrap();
    assert_eq!(v, post.log_density(&w).unwrap());
    assert_eq!(grad, post.grad_log_density(&w).unwrap().into_inner());
}

#[test]
fn wrong_length_rejected() {
    let (post, w) = problem(10, 0);
    assert!(post.log_likelihood(&w[1..]).is_err());
    assert!(post.sharded_value_and_grad(&w[1..], 2).is_err());
}
