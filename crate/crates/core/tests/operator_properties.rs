use entropic_transfer::analysis::{internal_transition_probability, set_flows};
use entropic_transfer::entropic_ot::{plan_density, sinkhorn, SinkhornConfig, TransportSolution};
use entropic_transfer::geometry::{cost_between, Metric, WeightedPointCloud};
use entropic_transfer::spectral::{eigendecompose, residual_norms};
use entropic_transfer::transfer::{build_entropic_transfer, koopman_matrix, TransferMatrix};
use ndarray::{Array1, Array2};
use num_complex::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn instance(seed: u64, n: usize, d: usize) -> (WeightedPointCloud, Array2<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points = Array2::from_shape_simple_fn((n, d), || rng.random::<f64>());
    let raw: Array1<f64> = (0..n).map(|_| rng.random_range(0.1..1.0)).collect();
    let w = &raw / raw.sum();
    let images = points.mapv(|x| 0.9 * x + 0.1 * (7.0 * x).sin());
    (WeightedPointCloud::new(points, w).unwrap(), images)
}

fn transfer(seed: u64, n: usize, d: usize, eps: f64) -> TransferMatrix {
    let (cloud, images) = instance(seed, n, d);
    build_entropic_transfer(
        &cloud,
        images.view(),
        Metric::Euclidean,
        &SinkhornConfig::new(eps),
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn markov_and_invariance(seed in 0u64..1000, n in 2usize..60, d in 1usize..4, log_eps in -2.5f64..1.0) {
        let t = transfer(seed, n, d, 10f64.powf(log_eps));
        prop_assert!(t.gamma().iter().all(|v| *v >= 0.0 && *v <= 1.0 + 1e-8));
        prop_assert!(t.row_sum_defect() <= 1e-8);
        prop_assert!(t.invariance_defect() <= 1e-8);
    }

    #[test]
    fn spectrum_of_markov_matrix(seed in 0u64..1000, n in 2usize..40, log_eps in -2.0f64..0.5) {
        let t = transfer(seed, n, 2, 10f64.powf(log_eps));
        let r = eigendecompose(t.gamma(), n, 1e-8).unwrap();
        prop_assert!(r.moduli().iter().all(|m| *m <= 1.0 + 1e-6));
        // lambda = 1 with the constant vector
        let ones = Array2::from_elem((n, 1), Complex64::new(1.0, 0.0));
        let res = residual_norms(t.gamma(), &[Complex64::new(1.0, 0.0)], &ones)[0];
        prop_assert!(res <= 1e-7 * (n as f64).sqrt());
        prop_assert!((r.eigenvalues[0] - 1.0).norm() < 1e-7);
    }

    #[test]
    fn bistochastic_symmetric_and_gauge_free(seed in 0u64..1000, n in 2usize..80, log_eps in -2.0f64..1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Array2::from_shape_simple_fn((n, 2), || rng.random::<f64>());
        let cost = cost_between(x.view(), x.view(), Metric::Torus).unwrap();
        let raw: Array1<f64> = (0..n).map(|_| rng.random_range(0.1..1.0)).collect();
        let w = &raw / raw.sum();
        let cfg = SinkhornConfig::new(10f64.powf(log_eps));
        let s = sinkhorn(&cost, w.view(), w.view(), &cfg).unwrap();
        prop_assert!(s.converged);
        let g = plan_density(&s, &cost);
        for i in 0..n {
            let row: f64 = (0..n).map(|j| g[[i, j]] * w[j]).sum();
            let col: f64 = (0..n).map(|j| g[[j, i]] * w[j]).sum();
            prop_assert!((row - 1.0).abs() <= cfg.marginal_tolerance);
            prop_assert!((col - 1.0).abs() <= cfg.marginal_tolerance);
        }
        // symmetric problem: alpha and beta agree up to the gauge
        let shift = 0.5 * (s.beta[0] - s.alpha[0]);
        let eps = s.epsilon;
        let gap = (0..n).map(|i| ((s.alpha[i] + shift) - (s.beta[i] - shift)).abs() / eps).fold(0.0, f64::max);
        prop_assert!(gap <= 10.0 * cfg.marginal_tolerance, "gap {gap}");
        prop_assert!((&g - &g.t()).iter().all(|v| v.abs() <= 10.0 * cfg.marginal_tolerance * g[[0, 0]].max(1.0)));

        let shifted = TransportSolution {
            alpha: &s.alpha + 0.37,
            beta: &s.beta - 0.37,
            ..s.clone()
        };
        let g2 = plan_density(&shifted, &cost);
        prop_assert!((&g - &g2).iter().all(|v| v.abs() <= 1e-12 * g.iter().fold(1.0f64, |a, b| a.max(*b))));
    }

    #[test]
    fn set_probabilities(seed in 0u64..1000, n in 4usize..50, mask in proptest::collection::vec(any::<bool>(), 50)) {
        let t = transfer(seed, n, 2, 0.05);
        let all: Vec<usize> = (0..n).collect();
        prop_assert!((internal_transition_probability(&t, &all).unwrap() - 1.0).abs() <= 1e-10);
        let a: Vec<usize> = (0..n).filter(|&i| mask[i]).collect();
        prop_assume!(!a.is_empty() && a.len() < n);
        let (out, inflow) = set_flows(t.gamma(), t.weights(), &a).unwrap();
        prop_assert!((out - inflow).abs() <= 1e-8);
    }
}

#[test]
fn koopman_is_the_weighted_adjoint() {
    let t = transfer(3, 25, 2, 0.1);
    let k = koopman_matrix(&t);
    let w = t.weights();
    // <T f, g>_w = <f, K g>_w
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let f: Array1<f64> = (0..25).map(|_| rng.random::<f64>()).collect();
    let g: Array1<f64> = (0..25).map(|_| rng.random::<f64>()).collect();
    let tf = t.gamma().dot(&f);
    let kg = k.dot(&g);
    let lhs: f64 = (0..25).map(|i| tf[i] * g[i] * w[i]).sum();
    let rhs: f64 = (0..25).map(|i| f[i] * kg[i] * w[i]).sum();
    assert!((lhs - rhs).abs() < 1e-12);
    // constants are fixed by K because w is stationary for T
    assert!(k
        .dot(&Array1::ones(25))
        .iter()
        .all(|v| (v - 1.0).abs() < 1e-8));
}

#[test]
fn huge_epsilon_collapses_to_rank_one() {
    let (cloud, images) = instance(11, 30, 2);
    let max_cost = cost_between(images.view(), cloud.points(), Metric::Euclidean)
        .unwrap()
        .max();
    let t = build_entropic_transfer(
        &cloud,
        images.view(),
        Metric::Euclidean,
        &SinkhornConfig::new(1e6 * max_cost),
    )
    .unwrap();
    let r = eigendecompose(t.gamma(), 2, 1e-8).unwrap();
    assert!((r.eigenvalues[0] - 1.0).norm() < 1e-8);
    assert!(r.moduli()[1] < 1e-4);
    let w = t.weights();
    for ((_, m), v) in t.gamma().indexed_iter() {
        assert!((v - w[m]).abs() < 1e-5 * w[m].max(1e-3));
    }
}
