//! Point clouds, the two supported metrics and dense squared-distance costs.
//!
//! Torus coordinates use period 1 on every axis. Stored coordinates may be any
//! real representative; wrap-around is handled by the metric.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Tolerance on `|sum(weights) - 1|` accepted by [`WeightedPointCloud::new`].
pub const WEIGHT_SUM_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Metric {
    #[default]
    Euclidean,
    /// Flat torus R^d / Z^d.
    Torus,
}

impl Metric {
    pub fn distance(&self, x: &[f64], y: &[f64]) -> f64 {
        self.squared_distance(x, y).sqrt()
    }

    pub fn squared_distance(&self, x: &[f64], y: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), y.len());
        match self {
            Metric::Euclidean => x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum(),
            Metric::Torus => x
                .iter()
                .zip(y)
                .map(|(a, b)| {
                    let r = wrap_difference(a - b);
                    r * r
                })
                .sum(),
        }
    }
}

/// Reduces a coordinate difference to its representative in `[-1/2, 1/2]`.
#[inline]
pub fn wrap_difference(delta: f64) -> f64 {
    delta - delta.round()
}

/// Geodesic distance on the unit flat torus: the minimum over integer shifts
/// of the Euclidean distance between representatives.
pub fn torus_distance(x: &[f64], y: &[f64]) -> f64 {
    Metric::Torus.distance(x, y)
}

/// A discrete probability measure: `N` points in `R^d` with nonnegative
/// weights summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedPointCloud {
    points: Array2<f64>,
    weights: Array1<f64>,
}

impl WeightedPointCloud {
    pub fn new(points: Array2<f64>, weights: Array1<f64>) -> Result<Self> {
        let (n, d) = points.dim();
        if n == 0 || d == 0 {
            return Err(Error::InvalidInput(format!(
                "point cloud must have at least one point and one dimension, got {n}x{d}"
            )));
        }
        if weights.len() != n {
            return Err(Error::DimensionMismatch {
                what: "weight vector length",
                expected: n,
                got: weights.len(),
            });
        }
        if points.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(
                "point coordinates must be finite".into(),
            ));
        }
        if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w >= 0.0)) {
            return Err(Error::InvalidWeights(format!(
                "weight {w} is negative or not finite"
            )));
        }
        let total: f64 = weights.sum();
        if (total - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
            return Err(Error::InvalidWeights(format!(
                "weights sum to {total}, not 1"
            )));
        }
        Ok(Self { points, weights })
    }

    /// Uniform weights `1/N`.
    pub fn uniform(points: Array2<f64>) -> Result<Self> {
        let n = points.nrows();
        let weights = Array1::from_elem(n, 1.0 / n.max(1) as f64);
        Self::new(points, weights)
    }

    pub fn len(&self) -> usize {
        self.points.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.points.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.points.ncols()
    }

    pub fn points(&self) -> ArrayView2<'_, f64> {
        self.points.view()
    }

    pub fn weights(&self) -> ArrayView1<'_, f64> {
        self.weights.view()
    }

    pub fn point(&self, i: usize) -> ArrayView1<'_, f64> {
        self.points.row(i)
    }

    pub fn into_parts(self) -> (Array2<f64>, Array1<f64>) {
        (self.points, self.weights)
    }
}

/// Dense matrix of squared distances `c(x_i, y_j) = d(x_i, y_j)^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    entries: Array2<f64>,
}

impl CostMatrix {
    /// Wraps an explicit matrix. Entries must be finite and nonnegative.
    pub fn from_entries(entries: Array2<f64>) -> Result<Self> {
        if let Some(v) = entries.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::InvalidInput(format!(
                "cost entries must be finite and nonnegative, found {v}"
            )));
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> ArrayView2<'_, f64> {
        self.entries.view()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.entries.dim()
    }

    pub fn max(&self) -> f64 {
        self.entries.iter().copied().fold(0.0, f64::max)
    }

    pub fn into_inner(self) -> Array2<f64> {
        self.entries
    }
}

/// Squared metric distances between the points of `x` and `y`.
pub fn pairwise_cost(
    x: &WeightedPointCloud,
    y: &WeightedPointCloud,
    metric: Metric,
) -> Result<CostMatrix> {
    cost_between(x.points(), y.points(), metric)
}

/// Squared metric distances between the rows of two coordinate matrices.
///
/// Rows are assembled in parallel; every entry is computed independently, so
/// the result does not depend on the thread count.
pub fn cost_between(
    x: ArrayView2<'_, f64>,
    y: ArrayView2<'_, f64>,
    metric: Metric,
) -> Result<CostMatrix> {
    if x.ncols() != y.ncols() {
        return Err(Error::DimensionMismatch {
            what: "point dimension",
            expected: x.ncols(),
            got: y.ncols(),
        });
    }
    let y_rows: Vec<Vec<f64>> = y.axis_iter(Axis(0)).map(|r| r.to_vec()).collect();
    let mut entries = Array2::<f64>::zeros((x.nrows(), y.nrows()));
    entries
        .axis_iter_mut(Axis(0))
        .into_par_iter()
        .zip(x.axis_iter(Axis(0)).into_par_iter())
        .for_each(|(mut out, xi)| {
            let xi = xi.to_vec();
            for (o, yj) in out.iter_mut().zip(&y_rows) {
                *o = metric.squared_distance(&xi, yj);
            }
        });
    Ok(CostMatrix { entries })
}
