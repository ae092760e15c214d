use bnn_hmc::prior::{self, PriorSpec};

/// Composite Simpson rule on `[lo, hi]` with `n` (even) intervals.
fn simpson(f: impl Fn(f64) -> f64, lo: f64, hi: f64, n: usize) -> f64 {
    let h = (hi - lo) / n as f64;
    let mut s = f(lo) + f(hi);
    for i in 1..n {
        s += f(lo + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

#[test]
fn logistic_density_matches_quadrature() {
    let v: f64 = 1.0 / 40.0;
    // Unnormalized kernel with the scale chosen so the variance is v.
    let s = (3.0 * v).sqrt() / std::f64::consts::PI;
    let kernel = |w: f64| {
        let e = (-w.abs() / s).exp();
        e / ((1.0 + e) * (1.0 + e))
    };
    let z = simpson(kernel, -60.0 * s, 60.0 * s, 400_000);
    let var = simpson(|w| w * w * kernel(w), -60.0 * s, 60.0 * s, 400_000) / z;
    assert!((var - v).abs() < 1e-9);
    let p = PriorSpec::logistic(v);
    for w in [-0.9, -0.3, -0.01, 0.0, 0.05, 0.2, 0.7] {
        let oracle = (kernel(w) / z).ln();
        assert!((p.log_density_1d(w) - oracle).abs() < 1e-8, "w={w}");
    }
}

#[test]
fn mog_density_matches_direct_sum() {
    let p = PriorSpec::mog([1.0 / 40.0, 1.0 / 160.0]);
    let n = |w: f64, v: f64| (-w * w / (2.0 * v)).exp() / (2.0 * std::f64::consts::PI * v).sqrt();
    for w in [-0.4, 0.0, 0.1, 0.33] {
        let direct = (0.5 * n(w, 1.0 / 40.0) + 0.5 * n(w, 1.0 / 160.0)).ln();
        assert!((p.log_density_1d(w) - direct).abs() < 1e-12);
    }
}

#[test]
fn gradients_match_finite_differences() {
    let w = [-0.7, -0.12, 0.0, 0.03, 0.25, 1.4];
    for p in [
        PriorSpec::gaussian(0.2),
        PriorSpec::mog([1.0 / 40.0, 1.0 / 160.0]),
        PriorSpec::logistic(1.0 / 40.0),
    ] {
        let g = prior::grad_log_prior(&p, &w);
        let h = 1e-6;
        for i in 0..w.len() {
            let mut a = w;
            a[i] += h;
            let mut b = w;
            b[i] -= h;
            let fd = (prior::log_prior(&p, &a) - prior::log_prior(&p, &b)) / (2.0 * h);
            assert!((g[i] - fd).abs() < 1e-6 * g[i].abs().max(1.0), "{p:?} at {}: {} vs {fd}", w[i], g[i]);
        }
    }
}

#[test]
fn gaussian_gradient_by_hand() {
    let g = prior::grad_log_prior(&PriorSpec::gaussian(0.2), &[1.0, 0.0]);
    assert!((g[0] + 5.0).abs() < 1e-12);
    assert_eq!(g[1], 0.0);
}

fn sample_variance(p: &PriorSpec) -> f64 {
    let s = prior::sample_prior(p, 100_000, 5).unwrap();
    s.iter().map(|v| v * v).sum::<f64>() / s.len() as f64
}

#[test]
fn sample_variances() {
    let g = sample_variance(&PriorSpec::gaussian(0.2));
    assert!((g / 0.2 - 1.0).abs() < 0.02, "gaussian {g}");
    let mix = sample_variance(&PriorSpec::mog([1.0 / 40.0, 1.0 / 160.0]));
    let target = 0.5 / 40.0 + 0.5 / 160.0;
    assert!((mix / target - 1.0).abs() < 0.02, "mog {mix}");
    let l = sample_variance(&PriorSpec::logistic(1.0 / 40.0));
    assert!((l / 0.025 - 1.0).abs() < 0.03, "logistic {l}");
}

#[test]
fn gaussian_and_logistic_are_concave() {
    for p in [PriorSpec::gaussian(0.3), PriorSpec::logistic(0.1)] {
        let mut prev = f64::INFINITY;
        for i in -200..=200 {
            let g = p.grad_1d(i as f64 * 0.01);
            assert!(g <= prev + 1e-15);
            prev = g;
        }
    }
}
