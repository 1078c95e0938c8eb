//! Shared fixtures for the benchmarks.

use entropic_transfer::geometry::cost_between;
use entropic_transfer::systems::{lattice_cloud, lorenz_trajectory_cloud, shift_map};
use entropic_transfer::{CostMatrix, LorenzParams, Metric, ShiftMapSpec, WeightedPointCloud};
use ndarray::Array2;

pub struct Fixture {
    pub cloud: WeightedPointCloud,
    pub images: Array2<f64>,
    pub metric: Metric,
}

impl Fixture {
    pub fn cost(&self) -> CostMatrix {
        cost_between(self.cloud.points(), self.images.view(), self.metric)
            .expect("matching dimensions")
    }
}

/// The golden-mean shift on an `n x n` lattice.
pub fn torus(n: usize) -> Fixture {
    let theta = (5f64.sqrt() - 1.0) / 2.0 - 1.0;
    let spec = ShiftMapSpec::new(vec![theta, 0.0], n).expect("valid spec");
    let cloud = lattice_cloud(&spec).expect("lattice");
    let images = shift_map(&spec, cloud.points()).expect("shift");
    Fixture {
        cloud,
        images,
        metric: Metric::Torus,
    }
}

/// `n` samples of the Lorenz attractor with their one-step images.
pub fn lorenz(n: usize) -> Fixture {
    let (cloud, images) =
        lorenz_trajectory_cloud(&LorenzParams::default(), [1.0, 1.0, 1.0], 200.0, 2000.0, n)
            .expect("integration");
    Fixture {
        cloud,
        images,
        metric: Metric::Euclidean,
    }
}
