//! Discrete entropic transfer operators.
//!
//! Orientation: `gamma[l][m] = t(x_m, x_l) * w_m`, rows index target points
//! and columns index source points, so `gamma * h` evaluates the transferred
//! density at every sample point. Here `t(x, y) = g(F(x), y)` is the plan
//! density of the entropic self-coupling of the weights under the cost
//! `c(F(x_j), x_k)`.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::entropic_ot::{plan_density, sinkhorn, SinkhornConfig};
use crate::error::{Error, Result};
use crate::geometry::{cost_between, Metric, WeightedPointCloud};

/// Row-sum and invariance slack accepted by [`TransferMatrix::from_parts`].
pub const MARKOV_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct TransferMatrix {
    gamma: Array2<f64>,
    weights: Array1<f64>,
    epsilon: f64,
    metric: Metric,
    marginal_error: f64,
}

impl TransferMatrix {
    /// Wraps an explicit Markov matrix, checking the row-sum and
    /// weight-invariance properties to [`MARKOV_TOLERANCE`].
    pub fn from_parts(
        gamma: Array2<f64>,
        weights: Array1<f64>,
        epsilon: f64,
        metric: Metric,
    ) -> Result<Self> {
        let n = weights.len();
        if gamma.dim() != (n, n) {
            return Err(Error::DimensionMismatch {
                what: "transfer matrix side vs weight count",
                expected: n,
                got: gamma.nrows(),
            });
        }
        if let Some(v) = gamma.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::InvalidInput(format!(
                "transfer matrix entry {v} is negative or not finite"
            )));
        }
        let t = Self {
            gamma,
            weights,
            epsilon,
            metric,
            marginal_error: 0.0,
        };
        let row = t.row_sum_defect();
        let inv = t.invariance_defect();
        if row > MARKOV_TOLERANCE || inv > MARKOV_TOLERANCE {
            return Err(Error::InvalidInput(format!(
                "not a measure-preserving Markov matrix (row defect {row:.2e}, invariance defect {inv:.2e})"
            )));
        }
        Ok(t)
    }

    pub fn gamma(&self) -> ArrayView2<'_, f64> {
        self.gamma.view()
    }

    pub fn weights(&self) -> ArrayView1<'_, f64> {
        self.weights.view()
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn metric(&self) -> Metric {
        self.metric
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// L1 marginal error reported by the Sinkhorn solve (zero for matrices
    /// supplied through [`TransferMatrix::from_parts`]).
    pub fn marginal_error(&self) -> f64 {
        self.marginal_error
    }

    /// `max_l |sum_m gamma[l][m] - 1|`.
    pub fn row_sum_defect(&self) -> f64 {
        row_sum_defect(self.gamma.view())
    }

    /// `max_m |sum_l w_l gamma[l][m] - w_m|`.
    pub fn invariance_defect(&self) -> f64 {
        invariance_defect(self.gamma.view(), self.weights.view())
    }

    pub fn into_gamma(self) -> Array2<f64> {
        self.gamma
    }
}

/// `max_l |sum_m a[l][m] - 1|`: how far the constant density is from being a
/// fixed point.
pub fn row_sum_defect(a: ArrayView2<'_, f64>) -> f64 {
    a.rows()
        .into_iter()
        .map(|r| (r.sum() - 1.0).abs())
        .fold(0.0, f64::max)
}

/// `max_m |sum_l w_l a[l][m] - w_m|`: how far `w` is from being a left fixed
/// vector of `a`.
pub fn invariance_defect(a: ArrayView2<'_, f64>, weights: ArrayView1<'_, f64>) -> f64 {
    let left = weights.dot(&a);
    left.iter()
        .zip(weights)
        .map(|(l, w)| (l - w).abs())
        .fold(0.0, f64::max)
}

/// Builds the entropic transfer matrix of the map sampled by
/// `images[k] = F(cloud[k])`.
pub fn build_entropic_transfer(
    cloud: &WeightedPointCloud,
    images: ArrayView2<'_, f64>,
    metric: Metric,
    config: &SinkhornConfig,
) -> Result<TransferMatrix> {
    if images.dim() != (cloud.len(), cloud.dim()) {
        return Err(Error::DimensionMismatch {
            what: "image rows/columns vs cloud",
            expected: cloud.len() * cloud.dim(),
            got: images.len(),
        });
    }
    // cost[j][k] = c(F(x_j), x_k)
    let cost = cost_between(images, cloud.points(), metric)?;
    let w = cloud.weights();
    let solution = sinkhorn(&cost, w, w, config)?;
    if !solution.converged {
        return Err(Error::SinkhornNotConverged {
            marginal_error: solution.marginal_error,
            iterations: solution.iterations_used,
        });
    }
    let g = plan_density(&solution, &cost);
    let n = cloud.len();
    let gamma = Array2::from_shape_fn((n, n), |(l, m)| g[[m, l]] * w[m]);
    Ok(TransferMatrix {
        gamma,
        weights: w.to_owned(),
        epsilon: config.epsilon,
        metric,
        marginal_error: solution.marginal_error,
    })
}

/// Matrix of the discrete Koopman operator: `K[k][j] = t(x_k, x_j) * w_j`.
pub fn koopman_matrix(t: &TransferMatrix) -> Array2<f64> {
    let w = &t.weights;
    let n = w.len();
    Array2::from_shape_fn((n, n), |(k, j)| {
        if w[k] > 0.0 {
            t.gamma[[j, k]] * w[j] / w[k]
        } else {
            0.0
        }
    })
}

/// Applies the transfer operator to density values sampled at the points.
pub fn apply(t: &TransferMatrix, density: ArrayView1<'_, f64>) -> Result<Array1<f64>> {
    if density.len() != t.len() {
        return Err(Error::DimensionMismatch {
            what: "density vector length",
            expected: t.len(),
            got: density.len(),
        });
    }
    Ok(t.gamma.dot(&density))
}
