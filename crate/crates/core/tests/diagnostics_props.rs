use bnn_hmc::approx::store_from_members;
use bnn_hmc::diagnostics::{rhat, rhat_functions, rhat_weights, ScalarChains};
use bnn_hmc::model::{Activation, Head, ModelSpec, ParameterVector};
use bnn_hmc::rng::{fill_standard_normal, stream_rng};
use bnn_hmc::SampleStore;
use ndarray::Array2;
use proptest::prelude::*;

/// Textbook form: `V̂ = (n−1)/n·W + B/n`, `R̂ = V̂/W·(m+1)/m − (n−1)/(mn)`.
fn rhat_oracle(rows: &[Vec<f64>]) -> f64 {
    let m = rows.len() as f64;
    let n = rows[0].len() as f64;
    let means: Vec<f64> = rows.iter().map(|r| r.iter().sum::<f64>() / n).collect();
    let grand = means.iter().sum::<f64>() / m;
    let b = n / (m - 1.0) * means.iter().map(|x| (x - grand).powi(2)).sum::<f64>();
    let w = rows
        .iter()
        .zip(&means)
        .map(|(r, mu)| r.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / (n - 1.0))
        .sum::<f64>()
        / m;
    let v = (n - 1.0) / n * w + b / n;
    (m + 1.0) / m * v / w - (n - 1.0) / (m * n)
}

fn chains(m: usize, n: usize, seed: u64, offsets: &[f64]) -> Vec<Vec<f64>> {
    (0..m)
        .map(|c| {
            let mut v = vec![0.0; n];
            fill_standard_normal(&mut stream_rng(seed, c as u64), &mut v);
            v.iter().map(|x| x + offsets[c % offsets.len()]).collect()
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn matches_textbook_form(m in 2usize..6, n in 2usize..40, seed in any::<u64>(), shift in -3.0f64..3.0) {
        let rows = chains(m, n, seed, &[0.0, shift]);
        let got = rhat(&ScalarChains::from_rows(&rows).unwrap()).unwrap();
        let want = rhat_oracle(&rows);
        prop_assert!((got - want).abs() <= 1e-9 * want.abs().max(1.0), "{got} vs {want}");
    }

    #[test]
    fn affine_invariant(m in 2usize..5, n in 3usize..30, seed in any::<u64>(), a in 0.1f64..10.0, b in -50.0f64..50.0) {
        let rows = chains(m, n, seed, &[0.0, 1.0]);
        let moved: Vec<Vec<f64>> = rows.iter().map(|r| r.iter().map(|x| a * x + b).collect()).collect();
        let r0 = rhat(&ScalarChains::from_rows(&rows).unwrap()).unwrap();
        let r1 = rhat(&ScalarChains::from_rows(&moved).unwrap()).unwrap();
        prop_assert!((r0 - r1).abs() <= 1e-8 * r0.abs().max(1.0));
    }

    #[test]
    fn chain_order_irrelevant(m in 2usize..6, n in 3usize..30, seed in any::<u64>()) {
        let rows = chains(m, n, seed, &[0.0, 0.5, -0.5]);
        let mut rev = rows.clone();
        rev.reverse();
        let r0 = rhat(&ScalarChains::from_rows(&rows).unwrap()).unwrap();
        let r1 = rhat(&ScalarChains::from_rows(&rev).unwrap()).unwrap();
        prop_assert!((r0 - r1).abs() <= 1e-12 * r0.abs().max(1.0));
    }
}

#[test]
fn separated_chains_flagged() {
    let r = rhat(&ScalarChains::from_rows(&chains(4, 200, 3, &[0.0, 5.0])).unwrap()).unwrap();
    assert!(r > 2.0, "{r}");
}

fn store(rows: Vec<Vec<f64>>, chain: u64) -> SampleStore {
    let members = rows.into_iter().map(|r| ParameterVector::new(r).unwrap()).collect();
    store_from_members(members, "test", chain, serde_json::Value::Null).unwrap()
}

#[test]
fn weight_rhat_per_coordinate() {
    // Coordinate 0 agrees across chains, coordinate 1 is constant, coordinate 2 is shifted.
    let mk = |c: usize| {
        let mut noise = vec![0.0; 50];
        fill_standard_normal(&mut stream_rng(9, c as u64), &mut noise);
        noise.iter().map(|z| vec![*z, 1.0, z + 10.0 * c as f64]).collect::<Vec<_>>()
    };
    let (a, b) = (store(mk(0), 0), store(mk(1), 1));
    let report = rhat_weights(&[&a, &b]).unwrap();
    assert_eq!(report.len(), 3);
    assert!(report.values[0].unwrap() < 1.2);
    assert!(report.values[1].is_none());
    assert!(report.values[2].unwrap() > 10.0);
    assert_eq!(report.n_undefined, 1);
    assert_eq!(report.histogram.iter().sum::<usize>(), 3);
    assert!((report.fraction_below_1_1 + report.fraction_above_1_1 - 2.0 / 3.0).abs() < 1e-12);
}

#[test]
fn weight_rhat_rejects_mismatched_stores() {
    let a = store(vec![vec![0.0, 1.0]; 4], 0);
    let b = store(vec![vec![0.0, 1.0]; 5], 1);
    assert!(rhat_weights(&[&a, &b]).is_err());
    assert!(rhat_weights(&[&a]).is_err());
}

#[test]
fn function_rhat_identical_chains_below_one() {
    let spec = ModelSpec::mlp(2, &[], Activation::Identity, Head::Classification { num_classes: 3 });
    let p = spec.param_count();
    let rows: Vec<Vec<f64>> = (0..20)
        .map(|i| {
            let mut w = vec![0.0; p];
            fill_standard_normal(&mut stream_rng(4, i), &mut w);
            w
        })
        .collect();
    let (a, b) = (store(rows.clone(), 0), store(rows, 1));
    let x = Array2::from_shape_vec((4, 2), vec![0.1, 0.2, -1.0, 0.5, 2.0, 2.0, 0.0, -0.3]).unwrap();
    let report = rhat_functions(&[&a, &b], &spec, x.view()).unwrap();
    assert_eq!(report.len(), 12);
    assert_eq!(report.grouped.as_ref().unwrap().len(), 4);
    // Identical chains have no between-chain variance: R̂ = (n−1)/n.
    for v in &report.values {
        assert!((v.unwrap() - 19.0 / 20.0).abs() < 1e-12);
    }
}
