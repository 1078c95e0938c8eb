//! Comparison operators: conditionally normalized Gaussian kernels, EDMD
//! with a radial Gaussian dictionary, diffusion maps, and a three-state
//! Markov chain smoothed by entropic transport.
//!
//! Kernel-based operators are returned in the same orientation as
//! [`crate::transfer::TransferMatrix`]: entry `[l][m]` is `t(x_m, x_l) w_m`.

use faer::linalg::solvers::Solve;
use ndarray::{array, Array2, ArrayView2};

use crate::entropic_ot::{log_sum_exp, plan_density, sinkhorn, SinkhornConfig};
use crate::error::{Error, Result};
use crate::geometry::{cost_between, CostMatrix, Metric, WeightedPointCloud};

/// Gaussian kernel of the image-to-point cost, normalized per source point
/// so that `sum_k t(x_j, x_k) w_k = 1`. Equivalent to stopping Sinkhorn
/// after its first half-iteration.
pub fn normalized_gaussian_transfer(
    cloud: &WeightedPointCloud,
    images: ArrayView2<'_, f64>,
    epsilon: f64,
    metric: Metric,
) -> Result<Array2<f64>> {
    if images.dim() != (cloud.len(), cloud.dim()) {
        return Err(Error::DimensionMismatch {
            what: "image rows/columns vs cloud",
            expected: cloud.len() * cloud.dim(),
            got: images.len(),
        });
    }
    let cost = cost_between(images, cloud.points(), metric)?;
    conditional_gaussian(&cost, cloud, epsilon)
}

/// Diffusion-map Markov operator of the cloud itself; the dynamics enter
/// only through the sampling.
pub fn diffusion_map_operator(
    cloud: &WeightedPointCloud,
    epsilon: f64,
    metric: Metric,
) -> Result<Array2<f64>> {
    let cost = cost_between(cloud.points(), cloud.points(), metric)?;
    conditional_gaussian(&cost, cloud, epsilon)
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if !(epsilon.is_finite() && epsilon > 0.0) {
        return Err(Error::InvalidInput(format!(
            "epsilon must be positive, got {epsilon}"
        )));
    }
    Ok(())
}

fn conditional_gaussian(
    cost: &CostMatrix,
    cloud: &WeightedPointCloud,
    epsilon: f64,
) -> Result<Array2<f64>> {
    check_epsilon(epsilon)?;
    let c = cost.entries();
    let w = cloud.weights();
    let n = cloud.len();
    let log_w: Vec<f64> = w.iter().map(|v| v.ln()).collect();
    let mut log_norm = vec![0.0; n];
    for j in 0..n {
        let lse = log_sum_exp((0..n).map(|k| -c[[j, k]] / epsilon + log_w[k]));
        if !lse.is_finite() {
            return Err(Error::KernelUnderflow { row: j });
        }
        log_norm[j] = lse;
    }
    Ok(Array2::from_shape_fn((n, n), |(l, m)| {
        (-c[[m, l]] / epsilon - log_norm[m]).exp() * w[m]
    }))
}

/// EDMD matrices for the radial Gaussian dictionary `psi_j(x) = exp(-c(x_j, x)/eps)`.
#[derive(Debug, Clone, PartialEq)]
pub struct EdmdMatrices {
    /// Solution of `A K = B`.
    pub koopman: Array2<f64>,
    /// Solution of `A T = B^T`.
    pub transfer: Array2<f64>,
    /// Numerical rank of `A` from the pivoted QR factorization.
    pub rank: usize,
}

/// Relative pivot size below which a column of `A` counts as dependent.
pub const EDMD_RANK_TOL: f64 = 1e-13;

/// `A_ij = exp(-c(x_j, x_i)/eps) + sigma delta_ij`,
/// `B_ij = exp(-c(x_j, F(x_i))/eps)`; both least-squares problems are
/// solved through a column-pivoted QR factorization of `A`.
pub fn edmd_matrices(
    cloud: &WeightedPointCloud,
    images: ArrayView2<'_, f64>,
    epsilon: f64,
    sigma: f64,
    metric: Metric,
) -> Result<EdmdMatrices> {
    check_epsilon(epsilon)?;
    if !(sigma.is_finite() && sigma >= 0.0) {
        return Err(Error::InvalidInput(format!(
            "ridge sigma must be nonnegative, got {sigma}"
        )));
    }
    if images.dim() != (cloud.len(), cloud.dim()) {
        return Err(Error::DimensionMismatch {
            what: "image rows/columns vs cloud",
            expected: cloud.len() * cloud.dim(),
            got: images.len(),
        });
    }
    let n = cloud.len();
    let ca = cost_between(cloud.points(), cloud.points(), metric)?;
    let cb = cost_between(images, cloud.points(), metric)?;
    let a = faer::Mat::from_fn(n, n, |i, j| {
        (-ca.entries()[[j, i]] / epsilon).exp() + if i == j { sigma } else { 0.0 }
    });
    let b = faer::Mat::from_fn(n, n, |i, j| (-cb.entries()[[i, j]] / epsilon).exp());
    let qr = a.col_piv_qr();
    let r = qr.R();
    let pivot0 = r[(0, 0)].abs();
    let rank = (0..n)
        .filter(|&i| r[(i, i)].abs() > EDMD_RANK_TOL * pivot0)
        .count();
    if rank < n {
        return Err(Error::Singular { rank, size: n });
    }
    let k = qr.solve(&b);
    let t = qr.solve(b.transpose());
    let koopman = Array2::from_shape_fn((n, n), |(i, j)| k[(i, j)]);
    let transfer = Array2::from_shape_fn((n, n), |(i, j)| t[(i, j)]);
    Ok(EdmdMatrices {
        koopman,
        transfer,
        rank,
    })
}

/// Symmetric three-state chain with a 1-2/3 cluster structure.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThreeStateModel {
    /// Jump probability between states 2 and 3.
    pub p1: f64,
    /// Jump probability between state 1 and each of 2, 3.
    pub p2: f64,
    /// Distance between states 2 and 3.
    pub d1: f64,
    /// Distance from state 1 to states 2 and 3.
    pub d2: f64,
}

impl Default for ThreeStateModel {
    fn default() -> Self {
        Self {
            p1: 0.01,
            p2: 0.05,
            d1: 1.0,
            d2: 10.0,
        }
    }
}

impl ThreeStateModel {
    pub fn new(p1: f64, p2: f64, d1: f64, d2: f64) -> Result<Self> {
        let m = Self { p1, p2, d1, d2 };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.p1 >= 0.0
            && self.p2 >= 0.0
            && 1.0 - 2.0 * self.p2 >= 0.0
            && 1.0 - self.p1 - self.p2 >= 0.0
            && self.d1 > 0.0
            && self.d2 > 0.0
            && [self.p1, self.p2, self.d1, self.d2]
                .iter()
                .all(|v| v.is_finite());
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!(
                "invalid three-state parameters {self:?}"
            )))
        }
    }

    pub fn transition(&self) -> Array2<f64> {
        let (p1, p2) = (self.p1, self.p2);
        array![
            [1.0 - 2.0 * p2, p2, p2],
            [p2, 1.0 - p1 - p2, p1],
            [p2, p1, 1.0 - p1 - p2]
        ]
    }

    pub fn distances(&self) -> Array2<f64> {
        let (d1, d2) = (self.d1, self.d2);
        array![[0.0, d2, d2], [d2, 0.0, d1], [d2, d1, 0.0]]
    }

    /// Eigenvalues of the transition matrix: `1`, `1 - 2 p1 - p2` (states 2
    /// and 3 against each other) and `1 - 3 p2` (state 1 against the rest).
    pub fn analytic_eigenvalues(&self) -> [f64; 3] {
        [1.0, 1.0 - 2.0 * self.p1 - self.p2, 1.0 - 3.0 * self.p2]
    }
}

/// `G T` where `G` is the Markov matrix of the entropic self-coupling of the
/// uniform measure on the three states under squared distances.
pub fn three_state_transfer(model: &ThreeStateModel, epsilon: f64) -> Result<Array2<f64>> {
    model.validate()?;
    check_epsilon(epsilon)?;
    let cost = CostMatrix::from_entries(model.distances().mapv(|d| d * d))?;
    let w = ndarray::Array1::from_elem(3, 1.0 / 3.0);
    let sol = sinkhorn(&cost, w.view(), w.view(), &SinkhornConfig::new(epsilon))?;
    if !sol.converged {
        return Err(Error::SinkhornNotConverged {
            marginal_error: sol.marginal_error,
            iterations: sol.iterations_used,
        });
    }
    let g = plan_density(&sol, &cost) / 3.0;
    Ok(g.dot(&model.transition()))
}
