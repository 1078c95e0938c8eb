//! Built-in dynamical systems and point-cloud sampling.

pub mod io;

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::WeightedPointCloud;
use crate::torus_oracle::ShiftMapSpec;

pub use io::{load_trajectory, write_trajectory, TrajectoryFormat};

/// Applies `x -> x + theta (mod 1)` to every row, with results in `[0, 1)`.
pub fn shift_map(spec: &ShiftMapSpec, points: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    if points.ncols() != spec.dim() {
        return Err(Error::DimensionMismatch {
            what: "point dimension vs shift vector",
            expected: spec.dim(),
            got: points.ncols(),
        });
    }
    let mut out = points.to_owned();
    for mut row in out.rows_mut() {
        for (x, t) in row.iter_mut().zip(spec.theta()) {
            *x = unit_interval(*x + t);
        }
    }
    Ok(out)
}

fn unit_interval(x: f64) -> f64 {
    let r = x.rem_euclid(1.0);
    // rem_euclid can round up to exactly 1 for tiny negative inputs
    if r >= 1.0 {
        0.0
    } else {
        r
    }
}

/// The lattice `{j/n}^d` with uniform weights, last axis varying fastest.
pub fn lattice_cloud(spec: &ShiftMapSpec) -> Result<WeightedPointCloud> {
    let n = spec.lattice_n();
    let d = spec.dim();
    let total = spec.n_points();
    let points = Array2::from_shape_fn((total, d), |(i, a)| {
        let digit = (i / n.pow((d - 1 - a) as u32)) % n;
        digit as f64 / n as f64
    });
    WeightedPointCloud::uniform(points)
}

/// `n` i.i.d. uniform points in `[0, 1)^d` drawn from ChaCha8 seeded with
/// `seed`, uniform weights.
pub fn uniform_random_cloud(n: usize, d: usize, seed: u64) -> Result<WeightedPointCloud> {
    if n == 0 || d == 0 {
        return Err(Error::InvalidInput(format!(
            "need n >= 1 and d >= 1, got n = {n}, d = {d}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points = Array2::from_shape_simple_fn((n, d), || rng.random::<f64>());
    WeightedPointCloud::uniform(points)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LorenzParams {
    pub sigma: f64,
    pub rho: f64,
    pub beta: f64,
    /// Flow time of the sampled map.
    pub tau: f64,
    pub rk4_step: f64,
}

impl Default for LorenzParams {
    fn default() -> Self {
        Self {
            sigma: 10.0,
            rho: 28.0,
            beta: 8.0 / 3.0,
            tau: 0.1,
            rk4_step: 1e-3,
        }
    }
}

impl LorenzParams {
    pub fn validate(&self) -> Result<()> {
        if [self.sigma, self.rho, self.beta]
            .iter()
            .any(|v| !v.is_finite())
        {
            return Err(Error::InvalidInput(
                "Lorenz parameters must be finite".into(),
            ));
        }
        if !(self.tau.is_finite()
            && self.tau > 0.0
            && self.rk4_step.is_finite()
            && self.rk4_step > 0.0)
        {
            return Err(Error::InvalidInput(
                "tau and rk4_step must be positive".into(),
            ));
        }
        let steps = (self.tau / self.rk4_step).round();
        if steps < 1.0 || (steps * self.rk4_step - self.tau).abs() > 1e-12 * self.tau.max(1.0) {
            return Err(Error::InvalidInput(format!(
                "rk4_step {} does not divide tau {}",
                self.rk4_step, self.tau
            )));
        }
        Ok(())
    }

    /// Number of RK4 substeps per application of the flow map.
    pub fn substeps(&self) -> usize {
        (self.tau / self.rk4_step).round() as usize
    }

    /// Equilibrium `(sqrt(beta (rho - 1)), sqrt(beta (rho - 1)), rho - 1)`.
    pub fn equilibrium_plus(&self) -> [f64; 3] {
        let a = (self.beta * (self.rho - 1.0)).sqrt();
        [a, a, self.rho - 1.0]
    }

    fn rhs(&self, x: [f64; 3]) -> [f64; 3] {
        [
            self.sigma * (x[1] - x[0]),
            x[0] * (self.rho - x[2]) - x[1],
            x[0] * x[1] - self.beta * x[2],
        ]
    }

    fn rk4(&self, x: [f64; 3], h: f64) -> [f64; 3] {
        let add =
            |a: [f64; 3], b: [f64; 3], c: f64| [a[0] + c * b[0], a[1] + c * b[1], a[2] + c * b[2]];
        let k1 = self.rhs(x);
        let k2 = self.rhs(add(x, k1, h / 2.0));
        let k3 = self.rhs(add(x, k2, h / 2.0));
        let k4 = self.rhs(add(x, k3, h));
        let mut out = [0.0; 3];
        for i in 0..3 {
            out[i] = x[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        out
    }

    /// Integrates `steps` RK4 steps of size `h`; `None` on a non-finite state.
    pub fn integrate(&self, mut x: [f64; 3], h: f64, steps: usize) -> Option<[f64; 3]> {
        for _ in 0..steps {
            x = self.rk4(x, h);
            if x.iter().any(|v| !v.is_finite()) {
                return None;
            }
        }
        Some(x)
    }

    /// Integrates over `duration` using `ceil(duration / rk4_step)` equal steps.
    pub fn advance(&self, x: [f64; 3], duration: f64) -> Option<[f64; 3]> {
        if duration <= 0.0 {
            return Some(x);
        }
        let steps = (duration / self.rk4_step - 1e-9).ceil().max(1.0) as usize;
        self.integrate(x, duration / steps as f64, steps)
    }
}

/// Time-`tau` flow map of the Lorenz system applied to every row.
pub fn lorenz_flow_map(params: &LorenzParams, points: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
    params.validate()?;
    if points.ncols() != 3 {
        return Err(Error::DimensionMismatch {
            what: "Lorenz state dimension",
            expected: 3,
            got: points.ncols(),
        });
    }
    let steps = params.substeps();
    let mut out = Array2::<f64>::zeros(points.dim());
    let failures: Vec<usize> = out
        .axis_iter_mut(Axis(0))
        .into_par_iter()
        .zip(points.axis_iter(Axis(0)).into_par_iter())
        .enumerate()
        .filter_map(|(i, (mut dst, src))| {
            let x = [src[0], src[1], src[2]];
            if x.iter().any(|v| !v.is_finite()) {
                return Some(i);
            }
            match params.integrate(x, params.rk4_step, steps) {
                Some(y) => {
                    dst.assign(&Array1::from(y.to_vec()));
                    None
                }
                None => Some(i),
            }
        })
        .collect();
    if let Some(&index) = failures.iter().min() {
        return Err(Error::NonFiniteState { index });
    }
    Ok(out)
}

/// Samples `n_samples` equidistant states of the trajectory started at
/// `initial` on `[t_burn, t_end]`, uniform weights, together with their
/// images under the time-`tau` flow map.
pub fn lorenz_trajectory_cloud(
    params: &LorenzParams,
    initial: [f64; 3],
    t_burn: f64,
    t_end: f64,
    n_samples: usize,
) -> Result<(WeightedPointCloud, Array2<f64>)> {
    params.validate()?;
    if !(t_burn >= 0.0 && t_burn < t_end && t_end.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "need 0 <= t_burn < t_end, got [{t_burn}, {t_end}]"
        )));
    }
    if n_samples < 2 {
        return Err(Error::InvalidInput(format!(
            "need at least 2 samples, got {n_samples}"
        )));
    }
    let mut x = params
        .advance(initial, t_burn)
        .ok_or(Error::NonFiniteState { index: 0 })?;
    let dt = (t_end - t_burn) / (n_samples - 1) as f64;
    let mut points = Array2::<f64>::zeros((n_samples, 3));
    for i in 0..n_samples {
        if i > 0 {
            x = params
                .advance(x, dt)
                .ok_or(Error::NonFiniteState { index: i })?;
        }
        points.row_mut(i).assign(&Array1::from(x.to_vec()));
    }
    let images = lorenz_flow_map(params, points.view())?;
    Ok((WeightedPointCloud::uniform(points)?, images))
}

/// A sampled trajectory: one frame per row.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryDataset {
    frames: Array2<f64>,
    pub dt_label: Option<f64>,
    pub source: String,
}

impl TrajectoryDataset {
    pub fn new(frames: Array2<f64>, source: impl Into<String>) -> Result<Self> {
        if frames.nrows() == 0 || frames.ncols() == 0 {
            return Err(crate::error::LoadError::EmptyDataset.into());
        }
        if frames.nrows() < 2 {
            return Err(crate::error::LoadError::TooFewFrames {
                frames: frames.nrows(),
            }
            .into());
        }
        for ((frame, column), v) in frames.indexed_iter() {
            if !v.is_finite() {
                return Err(crate::error::LoadError::NonFinite { frame, column }.into());
            }
        }
        Ok(Self {
            frames,
            dt_label: None,
            source: source.into(),
        })
    }

    pub fn frames(&self) -> ArrayView2<'_, f64> {
        self.frames.view()
    }

    pub fn len(&self) -> usize {
        self.frames.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.frames.ncols()
    }
}

/// Largest number of delay pairs available for `lag` and `stride`.
pub fn delay_pair_count(frames: usize, lag: usize, stride: usize) -> usize {
    if stride == 0 || lag >= frames {
        0
    } else {
        (frames - 1 - lag) / stride + 1
    }
}

/// Time-delay map on trajectory data: points are every `stride`-th frame and
/// each image is the frame `lag` steps later. Uses as many points as fit.
pub fn delay_map_dataset(
    data: &TrajectoryDataset,
    lag: usize,
    stride: usize,
) -> Result<(WeightedPointCloud, Array2<f64>)> {
    let n = delay_pair_count(data.len(), lag, stride);
    delay_map_points(data, lag, stride, n.max(1))
}

/// As [`delay_map_dataset`] with an explicit point count `n`.
pub fn delay_map_points(
    data: &TrajectoryDataset,
    lag: usize,
    stride: usize,
    n: usize,
) -> Result<(WeightedPointCloud, Array2<f64>)> {
    if lag == 0 || stride == 0 || n == 0 {
        return Err(Error::InvalidInput(format!(
            "lag, stride and point count must be positive (lag {lag}, stride {stride}, n {n})"
        )));
    }
    let required = lag + (n - 1) * stride + 1;
    if required > data.len() {
        return Err(Error::InsufficientFrames {
            required,
            available: data.len(),
        });
    }
    let last = (n - 1) * stride;
    let points = data.frames.slice(s![0..=last;stride, ..]).to_owned();
    let images = data
        .frames
        .slice(s![lag..=last + lag;stride, ..])
        .to_owned();
    Ok((WeightedPointCloud::uniform(points)?, images))
}
