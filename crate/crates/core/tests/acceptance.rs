//! Acceptance suite. Prints one PASS/FAIL line per criterion.
//!
//! Run with `cargo test -p entropic-transfer --test acceptance`.
//! Criteria listed in `KNOWN_FAILURES` are reported as FAIL but do not fail
//! the run; any other failure does.

use std::f64::consts::PI;
use std::process::ExitCode;
use std::time::Instant;

use entropic_transfer::analysis::{kmeans_restarts, purity, weight_fraction};
use entropic_transfer::baselines::{
    edmd_matrices, normalized_gaussian_transfer, three_state_transfer, ThreeStateModel,
};
use entropic_transfer::entropic_ot::{plan_density, sinkhorn, SinkhornConfig};
use entropic_transfer::geometry::{cost_between, CostMatrix, Metric, WeightedPointCloud};
use entropic_transfer::spectral::{
    dominant_real_eigs, eigendecompose, epsilon_sweep, match_spectra, real_coordinates,
    EigenOptions,
};
use entropic_transfer::systems::{
    delay_map_dataset, lattice_cloud, lorenz_trajectory_cloud, shift_map, LorenzParams,
    TrajectoryDataset,
};
use entropic_transfer::torus_oracle::{
    check_prop52_bound, discrete_spectrum, rational_approximations, regularized_approx_eig,
    visibility_threshold, ShiftMapSpec,
};
use entropic_transfer::transfer::{build_entropic_transfer, invariance_defect, row_sum_defect};
use entropic_transfer::{internal_transition_probability, sign_split};
use ndarray::{array, Array1, Array2};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// Criteria whose failure is reproducible and documented.
const KNOWN_FAILURES: &[usize] = &[7];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn torus_transfer(theta: f64, n: usize, eps: f64) -> entropic_transfer::TransferMatrix {
    let spec = ShiftMapSpec::circle(theta, n).unwrap();
    let cloud = lattice_cloud(&spec).unwrap();
    let img = shift_map(&spec, cloud.points()).unwrap();
    build_entropic_transfer(
        &cloud,
        img.view(),
        Metric::Torus,
        &SinkhornConfig::new(eps).with_tolerance(1e-12),
    )
    .unwrap()
}

fn criterion_1() -> Outcome {
    let n = 64;
    let mut worst: f64 = 0.0;
    for theta in [1.0 / 3.0, 1.0 / PI] {
        let spec = ShiftMapSpec::circle(theta, n).unwrap();
        for eps in [1e-3, 1e-2, 1e-1] {
            let t = torus_transfer(theta, n, eps);
            let found = eigendecompose(t.gamma(), n, 1e-8).unwrap().eigenvalues;
            let reference: Vec<Complex64> = discrete_spectrum(&spec, eps)
                .unwrap()
                .into_iter()
                .map(|(_, l)| l)
                .collect();
            let m = match_spectra(&found, &reference);
            worst = m.iter().fold(worst, |a, (_, d)| a.max(*d));
        }
    }
    outcome(
        worst <= 1e-8,
        format!("max |lambda - oracle| = {worst:.2e} (tol 1e-8)"),
    )
}

fn criterion_2() -> Outcome {
    let spec = ShiftMapSpec::circle(1.0 / PI, 64).unwrap();
    let mut all = true;
    let mut worst_gap = f64::NEG_INFINITY;
    for eps in [1e-3, 1e-2] {
        for k in 0..=5 {
            let b = check_prop52_bound(&spec, k, eps, 512).unwrap();
            all &= b.holds;
            worst_gap = worst_gap.max(b.ln_lhs - b.ln_rhs);
        }
    }
    outcome(
        all,
        format!("max ln(lhs/rhs) = {worst_gap:.3} over k = 0..5, eps in {{1e-3, 1e-2}}"),
    )
}

fn criterion_3() -> Outcome {
    let r = rational_approximations(1.0 / PI, 1000).unwrap();
    let expected = [
        (1, 3, 0.135, 1e-2),
        (7, 22, 0.062, 2e-4),
        (113, 355, 0.003, 8e-7),
    ];
    let mut pass = true;
    let mut parts = Vec::new();
    for (p, q, c3, thr) in expected {
        let Some(a) = r.approximations.iter().find(|a| a.p == p && a.q == q) else {
            pass = false;
            parts.push(format!("({p},{q}) missing"));
            continue;
        };
        let rounded = (a.c * 1000.0).round() / 1000.0;
        let t = visibility_threshold(q).unwrap();
        let one_sig = {
            let e = t.log10().floor();
            (t / 10f64.powf(e)).round() * 10f64.powf(e)
        };
        pass &= (rounded - c3).abs() < 1e-12 && (one_sig - thr).abs() <= 1e-12 * thr.max(1.0);
        parts.push(format!("({p},{q}) c={:.4} eps*={t:.1e}", a.c));
    }
    outcome(pass, parts.join(", "))
}

fn criterion_4() -> Outcome {
    let n = 200;
    let top = |theta: f64, eps: f64, k: usize| {
        eigendecompose(torus_transfer(theta, n, eps).gamma(), k, 1e-8).unwrap()
    };

    let r = top(1.0 / 3.0, 1e-2, 3);
    let targets = [0.0, 2.0 * PI / 3.0, -2.0 * PI / 3.0];
    let phase_err = r
        .eigenvalues
        .iter()
        .map(|z| {
            targets
                .iter()
                .map(|t| (z.arg() - t).abs().min(2.0 * PI - (z.arg() - t).abs()))
                .fold(f64::INFINITY, f64::min)
        })
        .fold(0.0, f64::max);

    let spec = ShiftMapSpec::circle(1.0 / PI, n).unwrap();
    let r = top(1.0 / PI, 1e-2, 3);
    let reference: Vec<Complex64> = [0, 1, -1]
        .iter()
        .map(|&k| regularized_approx_eig(&spec, &[k], 1e-2).unwrap())
        .collect();
    let approx_err = match_spectra(&r.eigenvalues, &reference)
        .iter()
        .fold(0.0f64, |a, (_, d)| a.max(*d));

    let t = torus_transfer(1.0 / PI, n, 1e-4);
    let all = eigendecompose(t.gamma(), n, 1e-8).unwrap();
    let visible = all.moduli().iter().filter(|m| **m > 0.5).count();

    outcome(
        phase_err <= 0.05 && approx_err <= 1e-2 && visible >= 20,
        format!("1/3 phase err {phase_err:.2e}; 1/pi |lambda - Lambda| {approx_err:.2e}; {visible} eigenvalues with modulus > 0.5 at eps 1e-4"),
    )
}

fn smooth_map(points: &Array2<f64>, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let a: f64 = rng.random_range(0.05..0.3);
    let b: f64 = rng.random_range(0.0..2.0 * PI);
    let mut img = points.clone();
    let d = points.ncols();
    for mut row in img.rows_mut() {
        let x = row.to_vec();
        for j in 0..d {
            row[j] = x[j] + a * (2.0 * PI * x[(j + 1) % d] + b).sin();
        }
    }
    img
}

fn lorenz_cloud() -> (WeightedPointCloud, Array2<f64>) {
    lorenz_trajectory_cloud(
        &LorenzParams::default(),
        [1.0, 1.0, 1.0],
        200.0,
        2000.0,
        1000,
    )
    .unwrap()
}

/// Row-sum defect of the normalized-Gaussian baseline on the Lorenz reference
/// instance, frozen from a reference run.
const LORENZ_NG_DEFECT: [(f64, f64); 3] = [(1.0, 4.115822), (3.0, 2.797414), (10.0, 1.229769)];

fn criterion_5(lorenz: &(WeightedPointCloud, Array2<f64>)) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let (mut rows, mut inv) = (0.0f64, 0.0f64);
    for _ in 0..20 {
        let n = rng.random_range(20..120);
        let d = rng.random_range(1..4);
        let points = Array2::from_shape_simple_fn((n, d), || rng.random::<f64>());
        let raw: Array1<f64> = (0..n).map(|_| rng.random_range(0.2..1.0)).collect();
        let w = &raw / raw.sum();
        let cloud = WeightedPointCloud::new(points.clone(), w).unwrap();
        let img = smooth_map(&points, &mut rng);
        let eps = 10f64.powf(rng.random_range(-2.0..0.0));
        let t = build_entropic_transfer(
            &cloud,
            img.view(),
            Metric::Euclidean,
            &SinkhornConfig::new(eps).with_tolerance(1e-11),
        )
        .unwrap();
        rows = rows.max(t.row_sum_defect());
        inv = inv.max(t.invariance_defect());
    }
    let (cloud, img) = lorenz;
    let mut ng_ok = true;
    let mut ng = Vec::new();
    for (eps, frozen) in LORENZ_NG_DEFECT {
        let g = normalized_gaussian_transfer(cloud, img.view(), eps, Metric::Euclidean).unwrap();
        let defect = row_sum_defect(g.view());
        ng_ok &= defect > 1e-4 && (defect - frozen).abs() <= 1e-5 * frozen;
        ng.push(format!("{defect:.4}"));
        // mass is conserved exactly, only the invariant density moves
        ng_ok &= invariance_defect(g.view(), cloud.weights()) < 1e-12;
    }
    outcome(
        rows <= 1e-8 && inv <= 1e-8 && ng_ok,
        format!(
            "entropic: row-sum defect {rows:.1e}, left-fixed defect {inv:.1e}; normalized Gaussian on Lorenz: invariant-density defect {} at eps 1, 3, 10",
            ng.join(", ")
        ),
    )
}

/// First grid value at which `values` drops below `level`.
fn crossing(eps: &[f64], values: &[f64], level: f64) -> Option<f64> {
    eps.iter()
        .zip(values)
        .find(|(_, v)| **v < level)
        .map(|(e, _)| *e)
}

fn criterion_6() -> Outcome {
    let m = ThreeStateModel::default();
    let g = three_state_transfer(&m, 1e-3).unwrap();
    let r = eigendecompose(g.view(), 3, 1e-10).unwrap();
    let err = r
        .eigenvalues
        .iter()
        .zip([1.0, 0.93, 0.85])
        .map(|(z, e)| (*z - e).norm())
        .fold(0.0, f64::max);

    let grid: Vec<f64> = (0..40)
        .map(|i| 10f64.powf(-3.0 + 6.0 * i as f64 / 39.0))
        .collect();
    let rows = epsilon_sweep(
        |e| three_state_transfer(&m, e),
        &grid,
        3,
        &EigenOptions::new(3),
    )
    .unwrap();
    let ok = rows
        .iter()
        .all(|r| r.is_ok() && r.real_eigenvalues.len() == 3);
    let eps: Vec<f64> = rows.iter().map(|r| r.epsilon).collect();
    let second: Vec<f64> = rows
        .iter()
        .map(|r| r.real_eigenvalues.get(1).copied().unwrap_or(0.0))
        .collect();
    let third: Vec<f64> = rows
        .iter()
        .map(|r| r.real_eigenvalues.get(2).copied().unwrap_or(0.0))
        .collect();
    let (d1sq, d2sq) = (m.d1 * m.d1, m.d2 * m.d2);
    let fast = crossing(&eps, &third, 0.5);
    let slow = crossing(&eps, &second, 0.5);
    // the 2-3 mode leaves on the d1^2 scale, the 1-{2,3} mode on the d2^2 scale
    let near =
        |e: Option<f64>, scale: f64| matches!(e, Some(e) if e > 0.1 * scale && e < 10.0 * scale);
    let shape = near(fast, d1sq) && near(slow, d2sq);
    let plateau = eps
        .iter()
        .zip(second.iter().zip(&third))
        .all(|(e, (s, t))| {
            if *e < 0.1 * d1sq {
                (s - 0.93).abs() < 0.01 && (t - 0.85).abs() < 0.01
            } else if *e > 2.0 * d1sq && *e < 0.1 * d2sq {
                (s - 0.85).abs() < 0.01
            } else {
                true
            }
        });
    outcome(
        err <= 0.01 && ok && shape && plateau,
        format!(
            "eps 1e-3 max err {err:.1e}; fast mode below 0.5 from eps {:.3}, slow mode from eps {:.1}",
            fast.unwrap_or(f64::NAN),
            slow.unwrap_or(f64::NAN)
        ),
    )
}

fn criterion_7(lorenz: &(WeightedPointCloud, Array2<f64>)) -> Outcome {
    let (cloud, img) = lorenz;
    let mut enough_reals = true;
    let mut margins_ok = true;
    let mut parts = Vec::new();
    for eps in [1.0, 3.0, 10.0] {
        let t = build_entropic_transfer(
            cloud,
            img.view(),
            Metric::Euclidean,
            &SinkhornConfig::new(eps),
        )
        .unwrap();
        let r = eigendecompose(t.gamma(), 60, 1e-8).unwrap();
        let reals = dominant_real_eigs(&r, 10, 1e-6);
        let slow: Vec<f64> = reals
            .iter()
            .skip(1)
            .map(|x| x.0)
            .filter(|v| *v > 0.8 && *v < 1.0)
            .collect();
        enough_reals &= slow.len() >= 2;
        let (_, lead) = reals[1];
        let split = sign_split(r.real_vector(lead).unwrap().view(), None).unwrap();
        let mut margin = f64::INFINITY;
        for set in 0..2 {
            let members = split.members(set);
            let p = internal_transition_probability(&t, &members).unwrap();
            margin = margin.min(p - weight_fraction(t.weights(), &members));
        }
        margins_ok &= margin >= 0.2;
        parts.push(format!(
            "eps {eps}: real in (0.8,1) {:?}, min margin {margin:.3}",
            slow.iter().map(|v| format!("{v:.4}")).collect::<Vec<_>>()
        ));
    }
    outcome(enough_reals && margins_ok, parts.join("; "))
}

/// Three wells in the plane with reversible jumps between them.
fn three_well_trajectory(frames: usize, seed: u64) -> (TrajectoryDataset, Vec<usize>) {
    let centers = [[0.0, 0.0], [4.0, 0.0], [2.0, 3.5]];
    let rates = [
        [0.0, 0.004, 0.008],
        [0.004, 0.0, 0.016],
        [0.008, 0.016, 0.0],
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 0.35).unwrap();
    let mut data = Array2::zeros((frames, 2));
    let mut labels = Vec::with_capacity(frames);
    let mut s = 0;
    for t in 0..frames {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (j, r) in rates[s].iter().enumerate() {
            acc += r;
            if u < acc {
                s = j;
                break;
            }
        }
        labels.push(s);
        data[[t, 0]] = centers[s][0] + noise.sample(&mut rng);
        data[[t, 1]] = centers[s][1] + noise.sample(&mut rng);
    }
    (TrajectoryDataset::new(data, "three wells").unwrap(), labels)
}

fn criterion_8() -> Outcome {
    let (stride, lag) = (5, 2);
    let (data, labels) = three_well_trajectory(10_000, 7);
    let (cloud, img) = delay_map_dataset(&data, lag, stride).unwrap();
    let truth: Vec<usize> = (0..cloud.len()).map(|i| labels[i * stride]).collect();
    let t = build_entropic_transfer(
        &cloud,
        img.view(),
        Metric::Euclidean,
        &SinkhornConfig::new(3.0),
    )
    .unwrap();
    let r = eigendecompose(t.gamma(), 6, 1e-8).unwrap();
    let reals = dominant_real_eigs(&r, 3, 1e-6);
    let slow: Vec<(f64, usize)> = reals
        .iter()
        .skip(1)
        .copied()
        .filter(|x| x.0 > 0.5)
        .collect();
    if slow.len() < 2 {
        return outcome(false, format!("only {} slow real eigenvalues", slow.len()));
    }
    let coords = real_coordinates(&r, &[slow[0].1, slow[1].1]).unwrap();
    let km = kmeans_restarts(coords.view(), 3, 1, 100, 10).unwrap();
    let p = purity(km.partition.labels(), &truth);
    outcome(
        p >= 0.95,
        format!(
            "N = {}, eigenvalues {:.4}, {:.4}, k-means purity {:.2} %",
            cloud.len(),
            slow[0].0,
            slow[1].0,
            100.0 * p
        ),
    )
}

fn criterion_9() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let points = Array2::from_shape_simple_fn((50, 2), || rng.random::<f64>());
    let cloud = WeightedPointCloud::uniform(points).unwrap();
    let e = edmd_matrices(&cloud, cloud.points(), 1e-3, 0.0, Metric::Euclidean).unwrap();
    let id_err = e
        .koopman
        .indexed_iter()
        .map(|((i, j), v)| (v - if i == j { 1.0 } else { 0.0 }).abs())
        .fold(0.0, f64::max);

    let img = cloud.points().mapv(|x| (1.7 * x).rem_euclid(1.0));
    let max_cost = cost_between(cloud.points(), cloud.points(), Metric::Euclidean)
        .unwrap()
        .max();
    let e = edmd_matrices(&cloud, img.view(), 1e6 * max_cost, 0.1, Metric::Euclidean).unwrap();
    let second = eigendecompose(e.koopman.view(), 2, 1e-8).unwrap().moduli()[1];
    outcome(
        id_err <= 1e-8 && second <= 1e-3,
        format!("identity error {id_err:.1e}; second modulus at eps = 1e6 max cost: {second:.1e}"),
    )
}

fn criterion_10() -> Outcome {
    let mut closed = 0.0f64;
    let half = array![0.5, 0.5];
    for eps in [0.1, 1.0, 10.0] {
        let cost = CostMatrix::from_entries(array![[0.0, 1.0], [1.0, 0.0]]).unwrap();
        let s = sinkhorn(
            &cost,
            half.view(),
            half.view(),
            &SinkhornConfig::new(eps).with_tolerance(1e-15),
        )
        .unwrap();
        let plan = s.plan(&cost, half.view(), half.view());
        let a = 1.0 / (2.0 * (1.0 + (-1.0 / eps).exp()));
        closed = closed
            .max((plan[[0, 0]] - a).abs())
            .max((plan[[1, 1]] - a).abs());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(1010);
    let mut bistoch = 0.0f64;
    for i in 0..50 {
        let n = if i < 5 {
            300
        } else {
            rng.random_range(2..=300)
        };
        let x = Array2::from_shape_simple_fn((n, 2), || rng.random::<f64>());
        let y = Array2::from_shape_simple_fn((n, 2), || rng.random::<f64>());
        let cost = cost_between(x.view(), y.view(), Metric::Euclidean).unwrap();
        let w = Array1::from_elem(n, 1.0 / n as f64);
        let eps = 10f64.powf(rng.random_range(-2.0..0.0));
        let s = sinkhorn(
            &cost,
            w.view(),
            w.view(),
            &SinkhornConfig::new(eps).with_tolerance(1e-11),
        )
        .unwrap();
        let g = plan_density(&s, &cost) / n as f64;
        for v in g
            .sum_axis(ndarray::Axis(0))
            .iter()
            .chain(g.sum_axis(ndarray::Axis(1)).iter())
        {
            bistoch = bistoch.max((v - 1.0).abs());
        }
    }
    outcome(
        closed <= 1e-12 && bistoch <= 1e-9,
        format!(
            "closed form error {closed:.1e}; bistochastic defect {bistoch:.1e} over 50 instances"
        ),
    )
}

fn main() -> ExitCode {
    let lorenz = lorenz_cloud();
    let criteria: Vec<(usize, &str, Box<dyn Fn() -> Outcome + '_>)> = vec![
        (1, "torus oracle equivalence", Box::new(criterion_1)),
        (2, "continuous Gaussian bound", Box::new(criterion_2)),
        (3, "rational cycles of 1/pi", Box::new(criterion_3)),
        (4, "circle-shift spectra, n = 200", Box::new(criterion_4)),
        (
            5,
            "Markov and invariance structure",
            Box::new(|| criterion_5(&lorenz)),
        ),
        (6, "three-state model", Box::new(criterion_6)),
        (7, "Lorenz metastability", Box::new(|| criterion_7(&lorenz))),
        (8, "delay-map pipeline", Box::new(criterion_8)),
        (9, "EDMD sanity", Box::new(criterion_9)),
        (10, "Sinkhorn correctness", Box::new(criterion_10)),
    ];
    let mut unexpected = Vec::new();
    let mut passed = 0;
    for (id, name, run) in &criteria {
        let start = Instant::now();
        let o = run();
        let tag = if o.pass { "PASS" } else { "FAIL" };
        println!(
            "criterion {id:>2} {tag} {name} ({:.1} s): {}",
            start.elapsed().as_secs_f64(),
            o.detail
        );
        if o.pass {
            passed += 1;
        } else if !KNOWN_FAILURES.contains(id) {
            unexpected.push(*id);
        }
    }
    println!("{passed}/{} criteria passed", criteria.len());
    for id in KNOWN_FAILURES {
        println!("criterion {id} is a known failure, see README");
    }
    if unexpected.is_empty() {
        ExitCode::SUCCESS
    } else {
        println!("unexpected failures: {unexpected:?}");
        ExitCode::FAILURE
    }
}
