//! Entropic optimal transport between two discrete measures with the product
//! reference measure, solved by log-domain Sinkhorn iterations.
//!
//! The optimal plan has the form
//!
//! ```text
//! gamma_ij = exp((-c_ij + alpha_i + beta_j) / eps) * mu_i * nu_j
//! ```
//!
//! and the solver only ever manipulates the dual potentials `alpha`, `beta`
//! through stabilized log-sum-exp reductions, so arbitrarily small `eps`
//! relative to the cost scale never overflows or underflows.

use faer::linalg::solvers::Solve;
use faer::Mat;
use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::CostMatrix;

/// Geometric epsilon-scaling schedule.
///
/// The solve starts at `start_factor * max(cost)` and multiplies by `decay`
/// until the target is reached. It is only used when the target epsilon is
/// below `activation_ratio * max(cost)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpsilonSchedule {
    pub start_factor: f64,
    pub decay: f64,
    pub activation_ratio: f64,
}

impl Default for EpsilonSchedule {
    fn default() -> Self {
        Self {
            start_factor: 1.0,
            decay: 0.5,
            activation_ratio: 1e-3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SinkhornConfig {
    /// Regularization strength, in units of squared distance.
    pub epsilon: f64,
    /// Iteration cap per epsilon level.
    pub max_iterations: usize,
    /// Stopping threshold on the marginal defect. The solver stops once every
    /// weighted row and column sum of the plan density is within this value of
    /// one, which also bounds the L1 marginal error.
    pub marginal_tolerance: f64,
    pub epsilon_scaling: Option<EpsilonSchedule>,
    /// Over-relax the potential updates once the plain contraction rate is
    /// known. Final convergence is always confirmed by an unrelaxed step.
    pub accelerate: bool,
}

impl SinkhornConfig {
    pub const DEFAULT_TOLERANCE: f64 = 1e-9;
    pub const DEFAULT_MAX_ITERATIONS: usize = 10_000;

    pub fn new(epsilon: f64) -> Self {
        Self {
            epsilon,
            max_iterations: Self::DEFAULT_MAX_ITERATIONS,
            marginal_tolerance: Self::DEFAULT_TOLERANCE,
            epsilon_scaling: Some(EpsilonSchedule::default()),
            accelerate: true,
        }
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = epsilon;
        self
    }

    pub fn with_tolerance(mut self, tolerance: f64) -> Self {
        self.marginal_tolerance = tolerance;
        self
    }

    pub fn with_max_iterations(mut self, max_iterations: usize) -> Self {
        self.max_iterations = max_iterations;
        self
    }

    pub fn without_scaling(mut self) -> Self {
        self.epsilon_scaling = None;
        self
    }

    pub fn without_acceleration(mut self) -> Self {
        self.accelerate = false;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return Err(Error::InvalidInput(format!(
                "epsilon must be positive and finite, got {}",
                self.epsilon
            )));
        }
        if !(self.marginal_tolerance.is_finite() && self.marginal_tolerance > 0.0) {
            return Err(Error::InvalidInput(format!(
                "marginal tolerance must be positive, got {}",
                self.marginal_tolerance
            )));
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidInput(
                "max_iterations must be positive".into(),
            ));
        }
        if let Some(s) = self.epsilon_scaling {
            if !(s.decay > 0.0 && s.decay < 1.0) || !(s.start_factor > 0.0) {
                return Err(Error::InvalidInput(format!(
                    "invalid epsilon schedule {s:?}"
                )));
            }
        }
        Ok(())
    }

    /// The epsilon levels visited for a cost matrix with maximum entry `max_cost`.
    pub fn levels(&self, max_cost: f64) -> Vec<f64> {
        let mut levels = Vec::new();
        if let Some(s) = self.epsilon_scaling {
            if max_cost > 0.0 && self.epsilon < s.activation_ratio * max_cost {
                let mut eps = s.start_factor * max_cost;
                while eps > self.epsilon {
                    levels.push(eps);
                    eps *= s.decay;
                }
            }
        }
        levels.push(self.epsilon);
        levels
    }
}

/// Dual potentials of an entropic transport problem.
///
/// Potentials are gauge-fixed so that `alpha[0] == 0`. Indices with zero mass
/// carry potential zero.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportSolution {
    pub alpha: Array1<f64>,
    pub beta: Array1<f64>,
    pub epsilon: f64,
    pub converged: bool,
    /// Larger of the two L1 marginal deviations of the reconstructed plan.
    pub marginal_error: f64,
    pub iterations_used: usize,
}

impl TransportSolution {
    pub fn density(&self, cost: &CostMatrix) -> Array2<f64> {
        plan_density(self, cost)
    }

    /// Plan masses `g_ij * mu_i * nu_j`.
    pub fn plan(
        &self,
        cost: &CostMatrix,
        mu: ArrayView1<'_, f64>,
        nu: ArrayView1<'_, f64>,
    ) -> Array2<f64> {
        let mut g = plan_density(self, cost);
        for ((i, j), v) in g.indexed_iter_mut() {
            *v *= mu[i] * nu[j];
        }
        g
    }
}

fn check_measure(name: &str, w: ArrayView1<'_, f64>, expected: usize) -> Result<()> {
    if w.len() != expected {
        return Err(Error::DimensionMismatch {
            what: if name == "mu" {
                "source weights vs cost rows"
            } else {
                "target weights vs cost columns"
            },
            expected,
            got: w.len(),
        });
    }
    if let Some(v) = w.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
        return Err(Error::InvalidWeights(format!("{name} has entry {v}")));
    }
    let total = w.sum();
    if (total - 1.0).abs() > 1e-10 {
        return Err(Error::InvalidWeights(format!(
            "{name} sums to {total}, not 1"
        )));
    }
    Ok(())
}

/// Solves the entropic transport problem between `mu` and `nu` for `cost`.
///
/// Non-convergence is not an error: the returned solution carries
/// `converged == false` together with its final marginal error.
pub fn sinkhorn(
    cost: &CostMatrix,
    mu: ArrayView1<'_, f64>,
    nu: ArrayView1<'_, f64>,
    config: &SinkhornConfig,
) -> Result<TransportSolution> {
    config.validate()?;
    let (m, n) = cost.shape();
    check_measure("mu", mu, m)?;
    check_measure("nu", nu, n)?;

    let rows: Vec<usize> = (0..m).filter(|&i| mu[i] > 0.0).collect();
    let cols: Vec<usize> = (0..n).filter(|&j| nu[j] > 0.0).collect();
    let log_mu: Vec<f64> = rows.iter().map(|&i| mu[i].ln()).collect();
    let log_nu: Vec<f64> = cols.iter().map(|&j| nu[j].ln()).collect();

    let full = rows.len() == m && cols.len() == n;
    let reduced;
    let c = if full {
        cost.entries().as_standard_layout().into_owned()
    } else {
        reduced = Array2::from_shape_fn((rows.len(), cols.len()), |(a, b)| {
            cost.entries()[[rows[a], cols[b]]]
        });
        reduced
    };

    let max_cost = c.iter().copied().fold(0.0, f64::max);
    let outcome = solve_active(c.view(), &log_mu, &log_nu, config, max_cost);

    let mut alpha = Array1::zeros(m);
    let mut beta = Array1::zeros(n);
    let shift = outcome.alpha[0];
    for (a, &i) in rows.iter().enumerate() {
        alpha[i] = outcome.alpha[a] - shift;
    }
    for (b, &j) in cols.iter().enumerate() {
        beta[j] = outcome.beta[b] + shift;
    }

    let mut solution = TransportSolution {
        alpha,
        beta,
        epsilon: config.epsilon,
        converged: outcome.converged,
        marginal_error: 0.0,
        iterations_used: outcome.iterations,
    };
    solution.marginal_error = marginal_error(&solution, cost, mu, nu);
    Ok(solution)
}

struct Outcome {
    alpha: Vec<f64>,
    beta: Vec<f64>,
    converged: bool,
    iterations: usize,
}

/// Largest relaxation factor used by the accelerated iteration.
const MAX_RELAXATION: f64 = 1.98;
/// Iterations over which the contraction rate is measured.
const RATE_WINDOW: usize = 10;

/// `max_i |exp((old_i - new_i)/eps) - 1|`: how far the weighted sums of the
/// plan density are from one before the update `old -> new`.
fn defect(old: &[f64], new: &[f64], eps: f64) -> f64 {
    old.iter()
        .zip(new)
        .map(|(a, b)| ((a - b) / eps).exp_m1().abs())
        .fold(0.0, f64::max)
}

fn relax(current: &mut [f64], target: &[f64], omega: f64) {
    for (x, t) in current.iter_mut().zip(target) {
        *x += omega * (t - *x);
    }
}

fn solve_active(
    c: ArrayView2<'_, f64>,
    log_mu: &[f64],
    log_nu: &[f64],
    config: &SinkhornConfig,
    max_cost: f64,
) -> Outcome {
    let (m, n) = c.dim();
    let mut alpha = vec![0.0; m];
    let mut beta = vec![0.0; n];
    let mut iterations = 0;
    let levels = config.levels(max_cost);
    let last = levels.len() - 1;
    let mut converged = false;

    for (level, &eps) in levels.iter().enumerate() {
        let tol = if level == last {
            config.marginal_tolerance
        } else {
            config.marginal_tolerance.max(1e-5)
        };
        converged = false;
        // Over-relaxed Sinkhorn: once the plain contraction rate `kappa` is
        // known, both half-steps are extrapolated by
        // `omega = 2 / (1 + sqrt(1 - kappa))`. Convergence is only ever
        // declared after a plain step, so the stopping test is unchanged.
        let mut omega = 1.0;
        let mut kappa: f64 = 0.0;
        let mut defects: Vec<f64> = Vec::new();
        let mut relax_target = 0.5 * tol;
        let mut best_relaxed = f64::INFINITY;
        let mut allow_relax = config.accelerate;
        let mut newton_tried = m + n > NEWTON_LIMIT;
        alpha = row_update(c, &beta, log_nu, eps, Some(&alpha));
        for step in 0..config.max_iterations {
            if !newton_tried && step == NEWTON_WARMUP {
                newton_tried = true;
                if let Some((a, b)) = newton(c, &alpha, &beta, log_mu, log_nu, eps, tol) {
                    omega = 1.0;
                    allow_relax = false;
                    beta = b;
                    alpha = row_update(c, &beta, log_nu, eps, Some(&a));
                    continue;
                }
            }
            let b_plain = col_update(c, &alpha, log_mu, eps, Some(&beta));
            let col_defect = defect(&beta, &b_plain, eps);
            if omega == 1.0 {
                beta = b_plain;
            } else {
                relax(&mut beta, &b_plain, omega);
            }
            let a_plain = row_update(c, &beta, log_nu, eps, Some(&alpha));
            let row_defect = defect(&alpha, &a_plain, eps);
            iterations += 1;

            if omega == 1.0 {
                // columns are exact, so the row defect is the full defect
                if row_defect <= tol {
                    converged = true;
                    break;
                }
                alpha = a_plain;
            } else {
                relax(&mut alpha, &a_plain, omega);
                let d = row_defect.max(col_defect);
                if !d.is_finite() || d > 1e3 * best_relaxed.max(tol) {
                    // diverging; finish this level with plain iterations
                    omega = 1.0;
                    allow_relax = false;
                    alpha = row_update(c, &beta, log_nu, eps, None);
                    continue;
                }
                best_relaxed = best_relaxed.min(d);
                if d <= relax_target {
                    // confirm with plain steps; a failed check tightens the target
                    omega = 1.0;
                    defects.clear();
                    relax_target *= 0.1;
                    alpha = row_update(c, &beta, log_nu, eps, Some(&alpha));
                    continue;
                }
            }

            if allow_relax {
                defects.push(if omega == 1.0 {
                    row_defect
                } else {
                    row_defect.max(col_defect)
                });
                let k = defects.len();
                if k > RATE_WINDOW {
                    let r = (defects[k - 1] / defects[k - 1 - RATE_WINDOW])
                        .powf(1.0 / RATE_WINDOW as f64);
                    if r.is_finite() && r > 0.0 && r < 1.0 {
                        // observed rate r of the relaxed iteration relates to the
                        // plain rate by (r + omega - 1)^2 = r omega^2 kappa
                        let estimate = (r + omega - 1.0).powi(2) / (r * omega * omega);
                        if estimate > kappa && estimate < 1.0 {
                            kappa = estimate;
                            if kappa > 0.25 {
                                omega = (2.0 / (1.0 + (1.0 - kappa).sqrt())).min(MAX_RELAXATION);
                                best_relaxed = best_relaxed.min(defects[k - 1]);
                                defects.clear();
                            }
                        }
                    }
                }
            }
        }
    }
    Outcome {
        alpha,
        beta,
        converged,
        iterations,
    }
}

/// Largest `m + n` for which the dense Newton solve is attempted.
const NEWTON_LIMIT: usize = 2000;
/// Sinkhorn iterations on a level before switching to Newton.
const NEWTON_WARMUP: usize = 200;
const NEWTON_STEPS: usize = 50;

/// Damped Newton ascent on the dual objective
/// `sum mu_i u_i + sum nu_j v_j - sum mu_i nu_j exp(u_i + v_j - c_ij/eps)`
/// in the scaled potentials `u = alpha/eps`, `v = beta/eps`, with `u_0` held
/// fixed. Sinkhorn contracts slowly when the plan nearly splits into blocks;
/// Newton does not. Returns potentials whose marginals are within `tol / 4`,
/// or `None`.
fn newton(
    c: ArrayView2<'_, f64>,
    alpha: &[f64],
    beta: &[f64],
    log_mu: &[f64],
    log_nu: &[f64],
    eps: f64,
    tol: f64,
) -> Option<(Vec<f64>, Vec<f64>)> {
    let (m, n) = c.dim();
    let inv = 1.0 / eps;
    let mu: Vec<f64> = log_mu.iter().map(|l| l.exp()).collect();
    let nu: Vec<f64> = log_nu.iter().map(|l| l.exp()).collect();
    let mut u: Vec<f64> = alpha.iter().map(|a| a * inv).collect();
    let mut v: Vec<f64> = beta.iter().map(|b| b * inv).collect();

    let plan = |u: &[f64], v: &[f64]| {
        Array2::from_shape_fn((m, n), |(i, j)| {
            (u[i] + v[j] - c[[i, j]] * inv + log_mu[i] + log_nu[j]).exp()
        })
    };
    let objective = |u: &[f64], v: &[f64], p: &Array2<f64>| {
        let lin: f64 = u.iter().zip(&mu).map(|(a, b)| a * b).sum::<f64>()
            + v.iter().zip(&nu).map(|(a, b)| a * b).sum::<f64>();
        lin - p.sum()
    };
    let mut p = plan(&u, &v);
    let mut value = objective(&u, &v, &p);
    for _ in 0..NEWTON_STEPS {
        let rows = p.sum_axis(Axis(1));
        let cols = p.sum_axis(Axis(0));
        // relative defects, matching the Sinkhorn stopping rule
        let worst = rows
            .iter()
            .zip(&mu)
            .chain(cols.iter().zip(&nu))
            .map(|(s, w)| (s / w - 1.0).abs())
            .fold(0.0, f64::max);
        if !worst.is_finite() {
            return None;
        }
        if worst <= 0.25 * tol {
            return Some((
                u.iter().map(|x| x * eps).collect(),
                v.iter().map(|x| x * eps).collect(),
            ));
        }
        // unknowns u_1..u_{m-1}, v_0..v_{n-1}
        let k = m + n - 1;
        let idx_v = |j: usize| m - 1 + j;
        let h = Mat::from_fn(k, k, |a, b| match (a < m - 1, b < m - 1) {
            (true, true) => {
                if a == b {
                    rows[a + 1]
                } else {
                    0.0
                }
            }
            (true, false) => p[[a + 1, b - (m - 1)]],
            (false, true) => p[[b + 1, a - (m - 1)]],
            (false, false) => {
                if a == b {
                    cols[a - (m - 1)]
                } else {
                    0.0
                }
            }
        });
        let g = Mat::from_fn(k, 1, |a, _| {
            if a < m - 1 {
                mu[a + 1] - rows[a + 1]
            } else {
                nu[a - (m - 1)] - cols[a - (m - 1)]
            }
        });
        let d = h.partial_piv_lu().solve(&g);
        if (0..k).any(|a| !d[(a, 0)].is_finite()) {
            return None;
        }
        let slope: f64 = (0..k).map(|a| d[(a, 0)] * g[(a, 0)]).sum();
        let mut t = 1.0;
        loop {
            let mut u2 = u.clone();
            let mut v2 = v.clone();
            for i in 1..m {
                u2[i] += t * d[(i - 1, 0)];
            }
            for j in 0..n {
                v2[j] += t * d[(idx_v(j), 0)];
            }
            let p2 = plan(&u2, &v2);
            let value2 = objective(&u2, &v2, &p2);
            if value2.is_finite() && value2 >= value + 1e-4 * t * slope - 1e-15 * value.abs() {
                u = u2;
                v = v2;
                p = p2;
                value = value2;
                break;
            }
            t *= 0.5;
            if t < 1e-10 {
                return None;
            }
        }
    }
    None
}

/// Log-sum-exp shifted by a guess of its value; falls back to the two-pass
/// form when the guess is missing or too far off.
fn shifted_lse<I>(values: I, guess: Option<f64>) -> f64
where
    I: Iterator<Item = f64> + Clone,
{
    if let Some(g) = guess.filter(|g| g.is_finite()) {
        let s: f64 = values.clone().map(|v| (v - g).exp()).sum();
        if s.is_finite() && s > 1e-200 {
            return g + s.ln();
        }
    }
    log_sum_exp(values)
}

/// `alpha_i = -eps * log sum_j exp((beta_j - c_ij)/eps) nu_j`
fn row_update(
    c: ArrayView2<'_, f64>,
    beta: &[f64],
    log_nu: &[f64],
    eps: f64,
    previous: Option<&[f64]>,
) -> Vec<f64> {
    let inv = 1.0 / eps;
    let offsets: Vec<f64> = beta.iter().zip(log_nu).map(|(b, l)| b * inv + l).collect();
    (0..c.nrows())
        .into_par_iter()
        .map(|i| {
            let row = c.row(i);
            let row = row.as_slice().expect("standard layout");
            let guess = previous.map(|p| -p[i] * inv);
            -eps * shifted_lse(
                row.iter().zip(&offsets).map(|(cij, o)| o - cij * inv),
                guess,
            )
        })
        .collect()
}

const COLUMN_BLOCK: usize = 64;

/// `beta_j = -eps * log sum_i exp((alpha_i - c_ij)/eps) mu_i`, streamed over
/// row-major storage in column blocks.
fn col_update(
    c: ArrayView2<'_, f64>,
    alpha: &[f64],
    log_mu: &[f64],
    eps: f64,
    previous: Option<&[f64]>,
) -> Vec<f64> {
    let inv = 1.0 / eps;
    let offsets: Vec<f64> = alpha.iter().zip(log_mu).map(|(a, l)| a * inv + l).collect();
    let mut beta = vec![0.0; c.ncols()];
    beta.par_chunks_mut(COLUMN_BLOCK)
        .enumerate()
        .for_each(|(block, out)| {
            let j0 = block * COLUMN_BLOCK;
            let w = out.len();
            let row_slice = |i: usize| &c.row(i).to_slice().expect("standard layout")[j0..j0 + w];
            let mut shift: Vec<f64> = match previous {
                Some(p) => p[j0..j0 + w].iter().map(|b| -b * inv).collect(),
                None => vec![f64::NAN; w],
            };
            let mut sum = vec![0.0; w];
            if shift.iter().all(|s| s.is_finite()) {
                for (i, o) in offsets.iter().enumerate() {
                    for ((s, cij), mk) in sum.iter_mut().zip(row_slice(i)).zip(&shift) {
                        *s += (o - cij * inv - mk).exp();
                    }
                }
            }
            let bad: Vec<usize> = (0..w)
                .filter(|&k| !(sum[k].is_finite() && sum[k] > 1e-200))
                .collect();
            if !bad.is_empty() {
                // exact two-pass reduction for the columns whose guess failed
                for &k in &bad {
                    shift[k] = f64::NEG_INFINITY;
                    sum[k] = 0.0;
                }
                for (i, o) in offsets.iter().enumerate() {
                    let row = row_slice(i);
                    for &k in &bad {
                        shift[k] = shift[k].max(o - row[k] * inv);
                    }
                }
                for (i, o) in offsets.iter().enumerate() {
                    let row = row_slice(i);
                    for &k in &bad {
                        sum[k] += (o - row[k] * inv - shift[k]).exp();
                    }
                }
            }
            for ((b, s), mk) in out.iter_mut().zip(&sum).zip(&shift) {
                *b = -eps * (mk + s.ln());
            }
        });
    beta
}

/// Two-pass log-sum-exp. Returns `-inf` for an empty sequence.
pub(crate) fn log_sum_exp<I>(values: I) -> f64
where
    I: Iterator<Item = f64> + Clone,
{
    let mx = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if !mx.is_finite() {
        return mx;
    }
    mx + values.map(|v| (v - mx).exp()).sum::<f64>().ln()
}

/// Plan density `g_ij = exp((-c_ij + alpha_i + beta_j)/eps)` relative to
/// the product of the marginals.
pub fn plan_density(solution: &TransportSolution, cost: &CostMatrix) -> Array2<f64> {
    let inv = 1.0 / solution.epsilon;
    let c = cost.entries();
    Array2::from_shape_fn(c.dim(), |(i, j)| {
        ((solution.alpha[i] + solution.beta[j] - c[[i, j]]) * inv).exp()
    })
}

/// Larger of the two L1 deviations between the marginals of the
/// reconstructed plan and `mu`, `nu`.
pub fn marginal_error(
    solution: &TransportSolution,
    cost: &CostMatrix,
    mu: ArrayView1<'_, f64>,
    nu: ArrayView1<'_, f64>,
) -> f64 {
    let inv = 1.0 / solution.epsilon;
    let c = cost.entries();
    let (m, n) = c.dim();
    let row_err: f64 = (0..m)
        .into_par_iter()
        .filter(|&i| mu[i] > 0.0)
        .map(|i| {
            let lse = log_sum_exp(
                (0..n)
                    .filter(|&j| nu[j] > 0.0)
                    .map(|j| (solution.beta[j] - c[[i, j]]) * inv + nu[j].ln()),
            );
            let s = (solution.alpha[i] * inv + lse).exp();
            mu[i] * (s - 1.0).abs()
        })
        .collect::<Vec<_>>()
        .iter()
        .sum();
    let col_err: f64 = (0..n)
        .into_par_iter()
        .filter(|&j| nu[j] > 0.0)
        .map(|j| {
            let lse = log_sum_exp(
                (0..m)
                    .filter(|&i| mu[i] > 0.0)
                    .map(|i| (solution.alpha[i] - c[[i, j]]) * inv + mu[i].ln()),
            );
            let s = (solution.beta[j] * inv + lse).exp();
            nu[j] * (s - 1.0).abs()
        })
        .collect::<Vec<_>>()
        .iter()
        .sum();
    row_err.max(col_err)
}
