use bnn_hmc::model::{self, Activation, Dataset, Head, ModelSpec, Targets};
use bnn_hmc::rng::{fill_standard_normal, stream_rng};
use bnn_hmc::subspace::{build_subspace, scan_grid};
use bnn_hmc::{PosteriorSpec, PriorSpec};
use ndarray::Array2;
use proptest::prelude::*;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn draw(p: usize, seed: u64) -> Vec<f64> {
    let mut v = vec![0.0; p];
    fill_standard_normal(&mut stream_rng(seed, 0), &mut v);
    v
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn basis_is_orthonormal_and_spans_anchors(p in 3usize..40, seed in 0u64..10_000) {
        let (w1, w2, w3) = (draw(p, seed), draw(p, seed + 1), draw(p, seed + 2));
        let b = build_subspace(&w1, &w2, &w3).unwrap();
        prop_assert!((dot(&b.u_hat, &b.u_hat) - 1.0).abs() < 1e-12);
        prop_assert!((dot(&b.v_hat, &b.v_hat) - 1.0).abs() < 1e-12);
        prop_assert!(dot(&b.u_hat, &b.v_hat).abs() < 1e-12);
        for (w, c) in [(&w2, b.coords_w2), (&w3, b.coords_w3)] {
            let back = b.point(c.0, c.1);
            for (x, y) in back.iter().zip(w.iter()) {
                prop_assert!((x - y).abs() < 1e-9 * y.abs().max(1.0));
            }
            let proj = b.project(w);
            prop_assert!((proj.0 - c.0).abs() < 1e-9 && (proj.1 - c.1).abs() < 1e-9);
        }
        prop_assert_eq!(b.coords_w2.1, 0.0);
    }
}

#[test]
fn grid_values_match_direct_evaluation() {
    let spec = ModelSpec::mlp(2, &[3], Activation::Swish, Head::Classification { num_classes: 2 });
    let mut x = vec![0.0; 40];
    fill_standard_normal(&mut stream_rng(2, 0), &mut x);
    let data = Dataset::new(Array2::from_shape_vec((20, 2), x).unwrap(), Targets::Labels((0..20).map(|i| i % 2).collect()), "s").unwrap();
    let post = PosteriorSpec::new(spec.clone(), PriorSpec::gaussian(1.0), data, 0.25).unwrap();
    let anchors: Vec<Vec<f64>> = (0..3).map(|s| model::init_params(&spec, 1.0, s).unwrap().into_inner()).collect();
    let basis = build_subspace(&anchors[0], &anchors[1], &anchors[2]).unwrap();
    let grid = scan_grid(&basis, (-1.0, 2.0), (-0.5, 1.5), 5, &post).unwrap();
    assert_eq!(grid.log_posterior.len(), 25);
    assert_eq!(grid.n_nonfinite, 0);
    for q in 0..25 {
        let w = basis.point(grid.a_values[q % 5], grid.b_values[q / 5]);
        assert_eq!(grid.log_posterior[q], post.log_density(&w).unwrap());
        assert_eq!(grid.log_likelihood[q], post.log_likelihood(&w).unwrap() / 0.25);
    }
    assert_eq!(grid.a_values[0], -1.0);
    assert_eq!(grid.b_values[4], 1.5);
    let dir = tempfile::tempdir().unwrap();
    grid.write(dir.path()).unwrap();
    let text = std::fs::read_to_string(dir.path().join("log_posterior.csv")).unwrap();
    assert_eq!(text.lines().count(), 26);
    assert!(scan_grid(&basis, (0.0, 1.0), (0.0, 1.0), 1, &post).is_err());
}
