use std::io::Write;

use bnn_hmc::data::{corrupt_gaussian, read_container, read_table, split_table, write_container, SplitSpec, Standardizer, TableFormat};
use bnn_hmc::model::{Dataset, Targets};
use bnn_hmc::rng::{fill_standard_normal, stream_rng};
use ndarray::Array2;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn splits_partition_rows(n in 2usize..500, frac in 0.05f64..0.95, seed in any::<u64>(), index in 0u64..20) {
        let n_train = (frac * n as f64).floor() as usize;
        prop_assume!(n_train > 0 && n_train < n);
        let (tr, te) = SplitSpec { train_fraction: frac, seed, index }.indices(n).unwrap();
        prop_assert_eq!(tr.len() + te.len(), n);
        prop_assert!(!tr.is_empty() && !te.is_empty());
        let mut all: Vec<usize> = tr.iter().chain(&te).copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
        let again = SplitSpec { train_fraction: frac, seed, index }.indices(n).unwrap();
        prop_assert_eq!((tr, te), again);
    }

    #[test]
    fn standardizer_round_trip(rows in 2usize..40, cols in 1usize..6, seed in any::<u64>(), scale in 0.01f64..100.0) {
        let mut v = vec![0.0; rows * cols];
        fill_standard_normal(&mut stream_rng(seed, 0), &mut v);
        let x = Array2::from_shape_vec((rows, cols), v.iter().map(|z| z * scale + 3.0).collect()).unwrap();
        let st = Standardizer::fit(&x);
        let z = st.transform(&x);
        for c in z.columns() {
            let m = c.sum() / rows as f64;
            let var = c.iter().map(|v| (v - m).powi(2)).sum::<f64>() / rows as f64;
            prop_assert!(m.abs() < 1e-9);
            prop_assert!((var - 1.0).abs() < 1e-9);
        }
        let back = st.inverse(&z);
        for (a, b) in back.iter().zip(x.iter()) {
            prop_assert!((a - b).abs() < 1e-9 * b.abs().max(1.0));
        }
    }
}

#[test]
fn different_split_indices_differ() {
    let a = SplitSpec { train_fraction: 0.9, seed: 0, index: 0 }.indices(100).unwrap();
    let b = SplitSpec { train_fraction: 0.9, seed: 0, index: 1 }.indices(100).unwrap();
    assert_ne!(a, b);
    assert_eq!(a.0.len(), 90);
}

#[test]
fn split_table_uses_train_statistics() {
    let mut t = Array2::zeros((20, 3));
    for i in 0..20 {
        t[[i, 0]] = i as f64;
        t[[i, 1]] = 7.0;
        t[[i, 2]] = 2.0 * i as f64 + 1.0;
    }
    let s = split_table(&t, &SplitSpec { train_fraction: 0.75, seed: 4, index: 0 }, "lin").unwrap();
    assert_eq!((s.train.len(), s.test.len()), (15, 5));
    // The constant column keeps std 1, so it maps to zero.
    assert!(s.train.inputs.column(1).iter().chain(s.test.inputs.column(1)).all(|v| *v == 0.0));
    let y = s.test.targets.values().unwrap();
    let back = s.destandardize_targets(y);
    for (i, v) in back.iter().enumerate() {
        let x = s.x_scaler.inverse(&s.test.inputs.row(i).to_owned().insert_axis(ndarray::Axis(0)))[[0, 0]];
        assert!((v - (2.0 * x + 1.0)).abs() < 1e-9);
    }
}

#[test]
fn whitespace_and_header_tables() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("t.txt");
    let mut f = std::fs::File::create(&p).unwrap();
    writeln!(f, "# comment\na b y\n1 2 3\n\n4  5\t6").unwrap();
    let t = read_table(&p, TableFormat { delimiter: None, has_header: true }).unwrap();
    assert_eq!(t, ndarray::array![[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]]);
    assert!(read_table(&p, TableFormat::default()).is_err());
}

#[test]
fn gaussian_corruption_statistics() {
    let x = Array2::from_elem((4000, 5), 1.5);
    let d = Dataset::new(x, Targets::Labels(vec![0; 4000]), "c").unwrap();
    let noisy = corrupt_gaussian(&d, 0.4, 3).unwrap();
    let e: Vec<f64> = noisy.inputs.iter().map(|v| v - 1.5).collect();
    let m = e.iter().sum::<f64>() / e.len() as f64;
    let s = (e.iter().map(|v| (v - m).powi(2)).sum::<f64>() / e.len() as f64).sqrt();
    assert!(m.abs() < 0.02 && (s - 0.4).abs() < 0.01, "{m} {s}");
    assert_eq!(noisy.targets, d.targets);
    assert_eq!(corrupt_gaussian(&d, 0.0, 3).unwrap(), d);
    assert_eq!(noisy, corrupt_gaussian(&d, 0.4, 3).unwrap());
    assert!(corrupt_gaussian(&d, -1.0, 3).is_err());
}

#[test]
fn container_preserves_values() {
    let dir = tempfile::tempdir().unwrap();
    let x = Array2::from_shape_vec((3, 2), vec![0.1, -2.5, 1e-300, 4.0, 5.5, -0.0]).unwrap();
    let d = Dataset::new(x, Targets::Labels(vec![2, 0, 1]), "c").unwrap();
    let p = dir.path().join("c.bin");
    write_container(&p, &d, 4).unwrap();
    let (back, classes) = read_container(&p).unwrap();
    assert_eq!(classes, 4);
    assert_eq!(back.inputs, d.inputs);
    assert_eq!(back.targets, d.targets);
}
