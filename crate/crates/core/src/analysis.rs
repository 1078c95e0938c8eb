//! Macroscopic structure from eigenvectors: sign splits, metastability of
//! sets, and k-means on eigenvector coordinates.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::transfer::TransferMatrix;

/// Labels in `0..k`, every cluster nonempty.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    labels: Vec<usize>,
    k: usize,
}

impl Partition {
    pub fn new(labels: Vec<usize>, k: usize) -> Result<Self> {
        let mut seen = vec![false; k];
        for &l in &labels {
            if l >= k {
                return Err(Error::InvalidInput(format!("label {l} outside 0..{k}")));
            }
            seen[l] = true;
        }
        if let Some(empty) = seen.iter().position(|s| !s) {
            return Err(Error::InvalidInput(format!("cluster {empty} is empty")));
        }
        Ok(Self { labels, k })
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn members(&self, cluster: usize) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, &l)| l == cluster)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.k];
        for &l in &self.labels {
            s[l] += 1;
        }
        s
    }
}

/// Splits indices by the sign of `v`: label 0 for positive entries, label 1
/// for negative ones. Entries with `|v_i| <= zero_tol` join the cluster
/// whose mean value is nearer. `zero_tol = None` uses `1e-12 max|v|`.
pub fn sign_split(v: ArrayView1<'_, f64>, zero_tol: Option<f64>) -> Result<Partition> {
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidInput(
            "eigenvector has non-finite entries".into(),
        ));
    }
    let scale = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let tol = zero_tol.unwrap_or(1e-12 * scale);
    let pos: Vec<f64> = v.iter().copied().filter(|&x| x > tol).collect();
    let neg: Vec<f64> = v.iter().copied().filter(|&x| x < -tol).collect();
    if pos.is_empty() || neg.is_empty() {
        return Err(Error::InvalidInput(
            "vector does not change sign, so there is no two-set split".into(),
        ));
    }
    let mean_pos = pos.iter().sum::<f64>() / pos.len() as f64;
    let mean_neg = neg.iter().sum::<f64>() / neg.len() as f64;
    let labels = v
        .iter()
        .map(|&x| {
            if x > tol {
                0
            } else if x < -tol || (x - mean_neg).abs() < (x - mean_pos).abs() {
                1
            } else {
                0
            }
        })
        .collect();
    Partition::new(labels, 2)
}

/// Probability that mass started in `subset` (distributed by the weights)
/// is still in `subset` after one step.
pub fn internal_transition_probability(t: &TransferMatrix, subset: &[usize]) -> Result<f64> {
    set_transition_probability(t.gamma(), t.weights(), subset)
}

/// One-step transition probabilities implied by an operator matrix in
/// transfer orientation: `P(m -> l)` is proportional to `gamma[l][m] w_l`,
/// normalized over `l`. For a measure-preserving operator the normalizer is
/// `w_m` exactly.
pub fn transition_kernel(
    gamma: ArrayView2<'_, f64>,
    weights: ArrayView1<'_, f64>,
) -> Result<Array2<f64>> {
    let n = weights.len();
    if gamma.dim() != (n, n) {
        return Err(Error::DimensionMismatch {
            what: "operator side vs weight count",
            expected: n,
            got: gamma.nrows(),
        });
    }
    let mut p = Array2::<f64>::zeros((n, n));
    for m in 0..n {
        let total: f64 = (0..n).map(|l| gamma[[l, m]] * weights[l]).sum();
        if total > 0.0 {
            for l in 0..n {
                p[[m, l]] = gamma[[l, m]] * weights[l] / total;
            }
        }
    }
    Ok(p)
}

/// [`internal_transition_probability`] for a bare operator matrix.
pub fn set_transition_probability(
    gamma: ArrayView2<'_, f64>,
    weights: ArrayView1<'_, f64>,
    subset: &[usize],
) -> Result<f64> {
    let n = weights.len();
    if subset.is_empty() {
        return Err(Error::InvalidInput("subset is empty".into()));
    }
    if let Some(i) = subset.iter().find(|&&i| i >= n) {
        return Err(Error::InvalidInput(format!(
            "index {i} out of range for {n} points"
        )));
    }
    let mut inside = vec![false; n];
    for &i in subset {
        inside[i] = true;
    }
    let mass: f64 = (0..n).filter(|&i| inside[i]).map(|i| weights[i]).sum();
    if mass <= 0.0 {
        return Err(Error::InvalidInput("subset has zero weight".into()));
    }
    let p = transition_kernel(gamma, weights)?;
    let stay: f64 = (0..n)
        .filter(|&m| inside[m])
        .map(|m| {
            weights[m]
                * (0..n)
                    .filter(|&l| inside[l])
                    .map(|l| p[[m, l]])
                    .sum::<f64>()
        })
        .sum();
    Ok((stay / mass).clamp(0.0, 1.0))
}

/// Weighted one-step flow out of and into `subset`.
pub fn set_flows(
    gamma: ArrayView2<'_, f64>,
    weights: ArrayView1<'_, f64>,
    subset: &[usize],
) -> Result<(f64, f64)> {
    let n = weights.len();
    let p = transition_kernel(gamma, weights)?;
    let mut inside = vec![false; n];
    for &i in subset {
        inside[i] = true;
    }
    let mut out = 0.0;
    let mut inflow = 0.0;
    for m in 0..n {
        for l in 0..n {
            if inside[m] && !inside[l] {
                out += weights[m] * p[[m, l]];
            } else if !inside[m] && inside[l] {
                inflow += weights[m] * p[[m, l]];
            }
        }
    }
    Ok((out, inflow))
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    pub partition: Partition,
    pub centroids: Array2<f64>,
    /// Within-cluster sum of squared distances after each Lloyd iteration.
    pub objective_history: Vec<f64>,
}

impl KMeansResult {
    pub fn objective(&self) -> f64 {
        *self.objective_history.last().unwrap_or(&f64::INFINITY)
    }
}

fn sq_dist(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Lloyd's algorithm from a k-means++ start drawn with ChaCha8(`seed`).
pub fn kmeans(
    coordinates: ArrayView2<'_, f64>,
    k: usize,
    seed: u64,
    max_iter: usize,
) -> Result<KMeansResult> {
    let n = coordinates.nrows();
    if k == 0 || k > n {
        return Err(Error::InvalidInput(format!(
            "k must be in 1..={n}, got {k}"
        )));
    }
    if coordinates.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("coordinates must be finite".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = Array2::<f64>::zeros((k, coordinates.ncols()));
    let first = rng.random_range(0..n);
    centroids.row_mut(0).assign(&coordinates.row(first));
    let mut nearest: Vec<f64> = (0..n)
        .map(|i| sq_dist(coordinates.row(i), coordinates.row(first)))
        .collect();
    for c in 1..k {
        let total: f64 = nearest.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, d) in nearest.iter().enumerate() {
                if target < *d {
                    chosen = i;
                    break;
                }
                target -= d;
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        centroids.row_mut(c).assign(&coordinates.row(pick));
        for i in 0..n {
            nearest[i] = nearest[i].min(sq_dist(coordinates.row(i), coordinates.row(pick)));
        }
    }

    let mut labels = vec![usize::MAX; n];
    let mut history = Vec::new();
    for _ in 0..max_iter.max(1) {
        let mut changed = false;
        for i in 0..n {
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for c in 0..k {
                let d = sq_dist(coordinates.row(i), centroids.row(c));
                if d < best_d {
                    best_d = d;
                    best = c;
                }
            }
            if labels[i] != best {
                labels[i] = best;
                changed = true;
            }
        }
        fill_empty_clusters(coordinates, &mut labels, &centroids, k);
        centroids = cluster_means(coordinates, &labels, k);
        history.push(objective(coordinates, &labels, &centroids));
        if !changed {
            break;
        }
    }
    Ok(KMeansResult {
        partition: Partition::new(labels, k)?,
        centroids,
        objective_history: history,
    })
}

/// Best of `restarts` runs (seeds `seed, seed + 1, ...`) by final objective.
pub fn kmeans_restarts(
    coordinates: ArrayView2<'_, f64>,
    k: usize,
    seed: u64,
    max_iter: usize,
    restarts: usize,
) -> Result<KMeansResult> {
    let mut best: Option<KMeansResult> = None;
    for r in 0..restarts.max(1) {
        let run = kmeans(coordinates, k, seed.wrapping_add(r as u64), max_iter)?;
        if best
            .as_ref()
            .is_none_or(|b| run.objective() < b.objective())
        {
            best = Some(run);
        }
    }
    Ok(best.expect("at least one run"))
}

/// Moves the point farthest from its centroid (among clusters with more
/// than one member) into each empty cluster.
fn fill_empty_clusters(
    coordinates: ArrayView2<'_, f64>,
    labels: &mut [usize],
    centroids: &Array2<f64>,
    k: usize,
) {
    loop {
        let mut sizes = vec![0usize; k];
        for &l in labels.iter() {
            sizes[l] += 1;
        }
        let Some(empty) = sizes.iter().position(|&s| s == 0) else {
            return;
        };
        let mut far = None;
        let mut far_d = -1.0;
        for (i, &l) in labels.iter().enumerate() {
            if sizes[l] > 1 {
                let d = sq_dist(coordinates.row(i), centroids.row(l));
                if d > far_d {
                    far_d = d;
                    far = Some(i);
                }
            }
        }
        match far {
            Some(i) => labels[i] = empty,
            None => return,
        }
    }
}

fn cluster_means(coordinates: ArrayView2<'_, f64>, labels: &[usize], k: usize) -> Array2<f64> {
    let mut sums = Array2::<f64>::zeros((k, coordinates.ncols()));
    let mut counts = vec![0usize; k];
    for (i, &l) in labels.iter().enumerate() {
        let mut row = sums.row_mut(l);
        row += &coordinates.row(i);
        counts[l] += 1;
    }
    for (c, &count) in counts.iter().enumerate() {
        if count > 0 {
            sums.row_mut(c).mapv_inplace(|v| v / count as f64);
        }
    }
    sums
}

/// Within-cluster sum of squared distances.
pub fn objective(
    coordinates: ArrayView2<'_, f64>,
    labels: &[usize],
    centroids: &Array2<f64>,
) -> f64 {
    labels
        .iter()
        .enumerate()
        .map(|(i, &l)| sq_dist(coordinates.row(i), centroids.row(l)))
        .sum()
}

/// Fraction of points whose cluster's majority label matches their own.
pub fn purity(labels: &[usize], truth: &[usize]) -> f64 {
    assert_eq!(labels.len(), truth.len());
    if labels.is_empty() {
        return 1.0;
    }
    let k = labels.iter().max().unwrap() + 1;
    let t = truth.iter().max().unwrap() + 1;
    let mut table = vec![vec![0usize; t]; k];
    for (&a, &b) in labels.iter().zip(truth) {
        table[a][b] += 1;
    }
    let hits: usize = table
        .iter()
        .map(|row| row.iter().copied().max().unwrap_or(0))
        .sum();
    hits as f64 / labels.len() as f64
}

/// Weight fraction of a subset.
pub fn weight_fraction(weights: ArrayView1<'_, f64>, subset: &[usize]) -> f64 {
    subset.iter().map(|&i| weights[i]).sum::<f64>() / weights.sum()
}

/// Coordinates of the points in eigenvector space: column `c` holds
/// eigenvector `c`.
pub fn stack_columns(vectors: &[Array1<f64>]) -> Array2<f64> {
    let n = vectors.first().map_or(0, |v| v.len());
    Array2::from_shape_fn((n, vectors.len()), |(i, c)| vectors[c][i])
}
