//! Eigendecomposition of (generally non-symmetric) operator matrices and
//! epsilon sweeps over families of operators.
//!
//! Small matrices go through a dense Hessenberg/QR eigensolver. Large ones
//! use a restarted Arnoldi iteration that only resolves the `top_k`
//! eigenvalues of largest modulus.

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Matrices up to this size use the dense solver under [`EigenMethod::Auto`].
pub const DENSE_LIMIT: usize = 2000;

/// Default realness threshold for [`dominant_real_eigs`], relative to `|lambda|`.
pub const DEFAULT_IMAG_TOL: f64 = 1e-6;

/// Eigenvalues whose imaginary part is at most this fraction of their modulus
/// receive real eigenvectors.
const REAL_VECTOR_TOL: f64 = 1e-8;

/// Relative modulus gap below which two eigenvalues count as tied when sorting.
const TIE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EigenMethod {
    #[default]
    Auto,
    Dense,
    Arnoldi,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EigenOptions {
    pub top_k: usize,
    /// Bound on `||A v - lambda v|| / ||v||` for every reported pair.
    pub tolerance: f64,
    pub keep_vectors: bool,
    pub method: EigenMethod,
    /// Arnoldi subspace dimension; `None` picks `max(2 top_k + 20, 40)`.
    pub subspace: Option<usize>,
    pub max_restarts: usize,
}

impl EigenOptions {
    pub fn new(top_k: usize) -> Self {
        Self {
            top_k,
            tolerance: 1e-8,
            keep_vectors: true,
            method: EigenMethod::Auto,
            subspace: None,
            max_restarts: 500,
        }
    }

    pub fn with_tolerance(mut self, tolerance: f64) -> Self {
        self.tolerance = tolerance;
        self
    }

    pub fn with_method(mut self, method: EigenMethod) -> Self {
        self.method = method;
        self
    }

    pub fn without_vectors(mut self) -> Self {
        self.keep_vectors = false;
        self
    }
}

/// Leading part of a spectrum, sorted by descending modulus.
///
/// Ties in modulus are broken by descending real part, then ascending
/// imaginary part. Eigenvectors (columns) are unit-norm and phase-fixed so
/// that their largest-modulus entry is real and positive.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumReport {
    pub eigenvalues: Vec<Complex64>,
    pub eigenvectors: Option<Array2<Complex64>>,
    pub epsilon: Option<f64>,
    pub n_points: usize,
    pub residuals: Vec<f64>,
}

impl SpectrumReport {
    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = Some(epsilon);
        self
    }

    pub fn moduli(&self) -> Vec<f64> {
        self.eigenvalues.iter().map(|z| z.norm()).collect()
    }

    /// Real part of eigenvector `index`.
    pub fn real_vector(&self, index: usize) -> Option<Array1<f64>> {
        self.eigenvectors
            .as_ref()
            .map(|v| v.column(index).mapv(|z| z.re))
    }
}

/// Top `top_k` eigenpairs of `matrix` with residuals at most `tolerance`.
pub fn eigendecompose(
    matrix: ArrayView2<'_, f64>,
    top_k: usize,
    tolerance: f64,
) -> Result<SpectrumReport> {
    eigendecompose_with(matrix, &EigenOptions::new(top_k).with_tolerance(tolerance))
}

pub fn eigendecompose_with(
    matrix: ArrayView2<'_, f64>,
    options: &EigenOptions,
) -> Result<SpectrumReport> {
    let n = matrix.nrows();
    if matrix.ncols() != n {
        return Err(Error::DimensionMismatch {
            what: "matrix must be square",
            expected: n,
            got: matrix.ncols(),
        });
    }
    if options.top_k == 0 || options.top_k > n {
        return Err(Error::InvalidInput(format!(
            "top_k must be in 1..={n}, got {}",
            options.top_k
        )));
    }
    if matrix.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("matrix has non-finite entries".into()));
    }
    let use_dense = match options.method {
        EigenMethod::Dense => true,
        EigenMethod::Arnoldi => false,
        EigenMethod::Auto => n <= DENSE_LIMIT,
    };
    let (values, vectors) = if use_dense || n <= arnoldi_dimension(options, n) + 1 {
        dense_eigenpairs(matrix)?
    } else {
        arnoldi_eigenpairs(matrix, options)?
    };

    let order = spectral_order(&values);
    let k = options.top_k;
    let mut eigenvalues = Vec::with_capacity(k);
    let mut selected = Array2::<Complex64>::zeros((n, k));
    for (slot, &idx) in order.iter().take(k).enumerate() {
        let lambda = values[idx];
        eigenvalues.push(lambda);
        let v = normalize_vector(vectors.column(idx).to_owned(), lambda);
        selected.column_mut(slot).assign(&v);
    }

    let residuals = residual_norms(matrix, &eigenvalues, &selected);
    let converged = residuals
        .iter()
        .filter(|&&r| r <= options.tolerance)
        .count();
    if converged < k {
        return Err(Error::EigenNotConverged {
            converged,
            requested: k,
        });
    }

    Ok(SpectrumReport {
        eigenvalues,
        eigenvectors: options.keep_vectors.then_some(selected),
        epsilon: None,
        n_points: n,
        residuals,
    })
}

fn to_faer(a: ArrayView2<'_, f64>) -> faer::Mat<f64> {
    faer::Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[[i, j]])
}

fn dense_eigenpairs(a: ArrayView2<'_, f64>) -> Result<(Vec<Complex64>, Array2<Complex64>)> {
    let n = a.nrows();
    let evd = to_faer(a).eigen().map_err(|_| Error::EigenNotConverged {
        converged: 0,
        requested: n,
    })?;
    let s = evd.S();
    let u = evd.U();
    let values: Vec<Complex64> = (0..n).map(|i| s[i]).collect();
    let vectors = Array2::from_shape_fn((n, n), |(i, j)| u[(i, j)]);
    Ok((values, vectors))
}

/// Permutation sorting eigenvalues by descending modulus, ties by descending
/// real part and then ascending imaginary part.
pub fn spectral_order(values: &[Complex64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].norm().total_cmp(&values[a].norm()));
    // resolve near-ties run by run so the comparison stays a total order
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() {
            let prev = values[order[end - 1]].norm();
            let cur = values[order[end]].norm();
            if prev - cur > TIE_TOL * prev.max(1.0) {
                break;
            }
            end += 1;
        }
        order[start..end].sort_by(|&a, &b| {
            values[b]
                .re
                .total_cmp(&values[a].re)
                .then(values[a].im.total_cmp(&values[b].im))
        });
        start = end;
    }
    order
}

fn is_real(lambda: Complex64, tol: f64) -> bool {
    lambda.im.abs() <= tol * lambda.norm()
}

/// Unit 2-norm, largest entry real positive; real eigenvalues get a real vector.
fn normalize_vector(mut v: Array1<Complex64>, lambda: Complex64) -> Array1<Complex64> {
    if is_real(lambda, REAL_VECTOR_TOL) {
        let re = v.mapv(|z| z.re);
        let im = v.mapv(|z| z.im);
        let pick = if re.dot(&re) >= im.dot(&im) { re } else { im };
        v = pick.mapv(|x| Complex64::new(x, 0.0));
    }
    let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if norm == 0.0 {
        return v;
    }
    let mut pivot = 0;
    let mut best = -1.0;
    for (i, z) in v.iter().enumerate() {
        let m = z.norm();
        if m > best {
            best = m;
            pivot = i;
        }
    }
    let phase = v[pivot].conj() / (v[pivot].norm() * norm);
    v.mapv_inplace(|z| z * phase);
    v[pivot] = Complex64::new(v[pivot].re, 0.0);
    v
}

/// `||A v_i - lambda_i v_i||_2 / ||v_i||_2` for each column.
pub fn residual_norms(
    a: ArrayView2<'_, f64>,
    values: &[Complex64],
    vectors: &Array2<Complex64>,
) -> Vec<f64> {
    let re = vectors.mapv(|z| z.re);
    let im = vectors.mapv(|z| z.im);
    let are = a.dot(&re);
    let aim = a.dot(&im);
    values
        .iter()
        .enumerate()
        .map(|(c, &lambda)| {
            let mut num = 0.0;
            let mut den = 0.0;
            for i in 0..a.nrows() {
                let v = Complex64::new(re[[i, c]], im[[i, c]]);
                let av = Complex64::new(are[[i, c]], aim[[i, c]]);
                num += (av - lambda * v).norm_sqr();
                den += v.norm_sqr();
            }
            if den == 0.0 {
                f64::INFINITY
            } else {
                (num / den).sqrt()
            }
        })
        .collect()
}

fn arnoldi_dimension(options: &EigenOptions, n: usize) -> usize {
    options
        .subspace
        .unwrap_or((2 * options.top_k + 20).max(40))
        .max(options.top_k + 2)
        .min(n)
}

fn start_vector(n: usize) -> Array1<f64> {
    let v = Array1::from_shape_fn(n, |i| 1.0 + 0.5 * ((i as f64 + 1.0) * 0.7548776662).sin());
    let norm = v.dot(&v).sqrt();
    v / norm
}

/// Orthogonalizes `w` against the first `count` columns of `basis` (two
/// passes of classical Gram-Schmidt) and returns the coefficients.
fn orthogonalize(basis: &Array2<f64>, count: usize, w: &mut Array1<f64>) -> Array1<f64> {
    let q = basis.slice(s![.., ..count]);
    let mut coeffs = Array1::zeros(count);
    for _ in 0..2 {
        let h = q.t().dot(w);
        *w -= &q.dot(&h);
        coeffs += &h;
    }
    coeffs
}

/// Restarted Arnoldi in Krylov-decomposition form.
///
/// Invariant between restarts: `A V[:, ..p] = V[:, ..p] H[..p, ..p] + v_p h^T`
/// with orthonormal `V`. After each expansion to `m` vectors the wanted Ritz
/// vectors are kept (real and imaginary parts for complex pairs) and the
/// decomposition is rotated onto their span.
fn arnoldi_eigenpairs(
    a: ArrayView2<'_, f64>,
    options: &EigenOptions,
) -> Result<(Vec<Complex64>, Array2<Complex64>)> {
    let n = a.nrows();
    let k = options.top_k;
    let m = arnoldi_dimension(options, n);
    let scale = a
        .iter()
        .map(|v| v.abs())
        .fold(0.0, f64::max)
        .max(f64::MIN_POSITIVE);

    let mut basis = Array2::<f64>::zeros((n, m + 1));
    let mut h = Array2::<f64>::zeros((m + 1, m));
    basis.column_mut(0).assign(&start_vector(n));
    let mut locked = 0;
    let mut best_converged = 0;
    let mut refill = 0u64;

    for _ in 0..options.max_restarts {
        for j in locked..m {
            let mut w = a.dot(&basis.column(j));
            let coeffs = orthogonalize(&basis, j + 1, &mut w);
            h.slice_mut(s![..=j, j]).assign(&coeffs);
            let beta = w.dot(&w).sqrt();
            if beta <= 1e-13 * scale {
                // invariant subspace found; continue with a fresh direction
                h[[j + 1, j]] = 0.0;
                let mut fresh = Array1::from_shape_fn(n, |i| {
                    ((i as f64 + 1.0) * (refill as f64 + 2.0) * 0.618_033_988_75).fract() - 0.5
                });
                refill += 1;
                orthogonalize(&basis, j + 1, &mut fresh);
                let norm = fresh.dot(&fresh).sqrt();
                basis.column_mut(j + 1).assign(&(fresh / norm));
            } else {
                h[[j + 1, j]] = beta;
                basis.column_mut(j + 1).assign(&(w / beta));
            }
        }

        let hm = h.slice(s![..m, ..m]);
        let (theta, mut y) = dense_eigenpairs(hm)?;
        for mut col in y.columns_mut() {
            let norm = col.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            col.mapv_inplace(|z| z / norm);
        }
        let order = spectral_order(&theta);
        let last_row = h.row(m);
        let estimate = |idx: usize| -> f64 {
            last_row
                .iter()
                .zip(y.column(idx))
                .map(|(r, z)| z * *r)
                .sum::<Complex64>()
                .norm()
        };
        let converged = order
            .iter()
            .take(k)
            .filter(|&&i| estimate(i) <= 0.1 * options.tolerance)
            .count();
        best_converged = best_converged.max(converged);

        if converged == k {
            let vb = basis.slice(s![.., ..m]);
            let mut vectors = Array2::<Complex64>::zeros((n, k));
            let mut values = Vec::with_capacity(k);
            for (slot, &idx) in order.iter().take(k).enumerate() {
                let yr = y.column(idx).mapv(|z| z.re);
                let yi = y.column(idx).mapv(|z| z.im);
                let xr = vb.dot(&yr);
                let xi = vb.dot(&yi);
                for i in 0..n {
                    vectors[[i, slot]] = Complex64::new(xr[i], xi[i]);
                }
                values.push(theta[idx]);
            }
            return Ok((values, vectors));
        }

        // restart: keep the wanted Ritz space, never splitting a conjugate pair
        let mut keep = (k + (m - k) / 2).min(m - 1).max(k);
        if keep < m && keep > 0 {
            let last = theta[order[keep - 1]];
            let next = theta[order[keep]];
            if last.im != 0.0 && (last.conj() - next).norm() <= 1e-10 * last.norm().max(1e-300) {
                keep = if keep + 1 < m { keep + 1 } else { keep - 1 };
            }
        }
        let mut columns: Vec<Array1<f64>> = Vec::with_capacity(keep + 1);
        for &idx in order.iter().take(keep) {
            let lambda = theta[idx];
            let yr = y.column(idx).mapv(|z| z.re);
            let yi = y.column(idx).mapv(|z| z.im);
            if lambda.im == 0.0 {
                columns.push(if yr.dot(&yr) >= yi.dot(&yi) { yr } else { yi });
            } else if lambda.im > 0.0 {
                columns.push(yr);
                columns.push(yi);
            } else {
                let partner_kept = order.iter().take(keep).any(|&o| {
                    theta[o].im > 0.0 && (theta[o].conj() - lambda).norm() <= 1e-10 * lambda.norm()
                });
                if !partner_kept {
                    columns.push(yr);
                    columns.push(yi);
                }
            }
        }
        let mut w = Array2::<f64>::zeros((m, columns.len().min(m - 1)));
        let mut p = 0;
        for mut c in columns {
            if p == w.ncols() {
                break;
            }
            orthogonalize(&w, p, &mut c);
            let norm = c.dot(&c).sqrt();
            if norm > 1e-10 {
                w.column_mut(p).assign(&(c / norm));
                p += 1;
            }
        }
        let w = w.slice(s![.., ..p]).to_owned();
        let small = w.t().dot(&hm.dot(&w));
        let spike = last_row.dot(&w);
        let new_basis = basis.slice(s![.., ..m]).dot(&w);
        let tail = basis.column(m).to_owned();

        basis.fill(0.0);
        basis.slice_mut(s![.., ..p]).assign(&new_basis);
        basis.column_mut(p).assign(&tail);
        h.fill(0.0);
        h.slice_mut(s![..p, ..p]).assign(&small);
        h.slice_mut(s![p, ..p]).assign(&spike);
        locked = p;
    }
    Err(Error::EigenNotConverged {
        converged: best_converged,
        requested: k,
    })
}

/// Real eigenvalues of `report` (|Im| <= `imag_tol` |lambda|), sorted by
/// descending real part, as `(value, index into report)`.
pub fn dominant_real_eigs(
    report: &SpectrumReport,
    count: usize,
    imag_tol: f64,
) -> Vec<(f64, usize)> {
    let mut reals: Vec<(f64, usize)> = report
        .eigenvalues
        .iter()
        .enumerate()
        .filter(|(_, z)| is_real(**z, imag_tol))
        .map(|(i, z)| (z.re, i))
        .collect();
    reals.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    reals.truncate(count);
    reals
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub epsilon: f64,
    /// Up to `top_k` real eigenvalues, descending.
    pub real_eigenvalues: Vec<f64>,
    /// Moduli of the `top_k` leading eigenvalues.
    pub moduli: Vec<f64>,
    /// `None` on success, otherwise the failure message for this epsilon.
    pub failure: Option<String>,
}

impl SweepRow {
    pub fn is_ok(&self) -> bool {
        self.failure.is_none()
    }
}

/// Builds and decomposes one operator per epsilon.
///
/// Failures are recorded per row and do not abort the sweep. Rows are
/// returned in ascending epsilon order regardless of evaluation order.
pub fn epsilon_sweep<F>(
    builder: F,
    eps_grid: &[f64],
    top_k: usize,
    options: &EigenOptions,
) -> Result<Vec<SweepRow>>
where
    F: Fn(f64) -> Result<Array2<f64>> + Sync,
{
    if eps_grid.is_empty() {
        return Err(Error::InvalidInput("epsilon grid is empty".into()));
    }
    if let Some(e) = eps_grid.iter().find(|e| !(e.is_finite() && **e > 0.0)) {
        return Err(Error::InvalidInput(format!(
            "epsilon values must be positive, got {e}"
        )));
    }
    let mut grid = eps_grid.to_vec();
    grid.sort_by(f64::total_cmp);

    let rows = grid
        .par_iter()
        .map(|&eps| {
            let outcome = builder(eps).and_then(|m| {
                let mut opts = *options;
                opts.top_k = opts.top_k.min(m.nrows()).max(1);
                opts.keep_vectors = false;
                eigendecompose_with(m.view(), &opts)
            });
            match outcome {
                Ok(report) => SweepRow {
                    epsilon: eps,
                    real_eigenvalues: dominant_real_eigs(&report, top_k, DEFAULT_IMAG_TOL)
                        .into_iter()
                        .map(|(v, _)| v)
                        .collect(),
                    moduli: report.moduli().into_iter().take(top_k).collect(),
                    failure: None,
                },
                Err(e) => SweepRow {
                    epsilon: eps,
                    real_eigenvalues: Vec::new(),
                    moduli: Vec::new(),
                    failure: Some(e.to_string()),
                },
            }
        })
        .collect();
    Ok(rows)
}

/// Pairs every eigenvalue in `found` with a distinct value in `reference`,
/// both visited in spectral order, greedily choosing the nearest unused
/// reference value. Returns the matched reference index per `found` entry
/// and the distance.
pub fn match_spectra(found: &[Complex64], reference: &[Complex64]) -> Vec<(usize, f64)> {
    let mut used = vec![false; reference.len()];
    spectral_order(found)
        .into_iter()
        .map(|i| {
            let (best, dist) = reference
                .iter()
                .enumerate()
                .filter(|(j, _)| !used[*j])
                .map(|(j, r)| (j, (found[i] - r).norm()))
                .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
                .unwrap_or((usize::MAX, f64::INFINITY));
            if best != usize::MAX {
                used[best] = true;
            }
            (i, best, dist)
        })
        .collect::<Vec<_>>()
        .into_iter()
        .fold(
            vec![(usize::MAX, f64::INFINITY); found.len()],
            |mut acc, (i, j, d)| {
                acc[i] = (j, d);
                acc
            },
        )
}

/// Stacks the real parts of the selected eigenvectors as columns.
pub fn real_coordinates(report: &SpectrumReport, indices: &[usize]) -> Option<Array2<f64>> {
    let vectors = report.eigenvectors.as_ref()?;
    let cols: Vec<_> = indices
        .iter()
        .map(|&i| vectors.column(i).mapv(|z| z.re))
        .collect();
    let views: Vec<_> = cols.iter().map(|c| c.view().insert_axis(Axis(1))).collect();
    ndarray::concatenate(Axis(1), &views).ok()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use std::f64::consts::PI;

    fn cycle(n: usize) -> Array2<f64> {
        Array2::from_shape_fn((n, n), |(i, j)| if j == (i + 1) % n { 1.0 } else { 0.0 })
    }

    #[test]
    fn identity_spectrum() {
        let eye = Array2::<f64>::eye(5);
        let r = eigendecompose(eye.view(), 5, 1e-12).unwrap();
        assert!(r.eigenvalues.iter().all(|z| (z - 1.0).norm() < 1e-14));
        assert!(r.residuals.iter().all(|&x| x < 1e-14));
        let reals = dominant_real_eigs(&r, 3, 1e-8);
        assert_eq!(reals.len(), 3);
        assert!(reals.iter().all(|(v, _)| (v - 1.0).abs() < 1e-14));
    }

    #[test]
    fn three_cycle_has_cube_roots() {
        let r = eigendecompose(cycle(3).view(), 3, 1e-12).unwrap();
        let expected = [
            Complex64::new(1.0, 0.0),
            Complex64::from_polar(1.0, -2.0 * PI / 3.0),
            Complex64::from_polar(1.0, 2.0 * PI / 3.0),
        ];
        for (z, e) in r.eigenvalues.iter().zip(&expected) {
            assert!((z - e).norm() < 1e-12, "{z} vs {e}");
        }
        let reals = dominant_real_eigs(&r, 3, 1e-8);
        assert_eq!(reals.len(), 1);
        assert!((reals[0].0 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ordering_breaks_ties_by_real_then_imaginary() {
        let v = vec![
            Complex64::new(0.0, 1.0),
            Complex64::new(0.0, -1.0),
            Complex64::new(-1.0, 0.0),
            Complex64::new(1.0, 0.0),
            Complex64::new(0.5, 0.0),
        ];
        let order = spectral_order(&v);
        assert_eq!(order, vec![3, 1, 0, 2, 4]);
    }

    #[test]
    fn real_eigenvectors_are_real_and_phase_fixed() {
        let a = array![[0.9, 0.1, 0.0], [0.05, 0.9, 0.05], [0.0, 0.2, 0.8]];
        let r = eigendecompose(a.view(), 3, 1e-12).unwrap();
        let v = r.eigenvectors.as_ref().unwrap();
        for c in 0..3 {
            let col = v.column(c);
            assert!(col.iter().all(|z| z.im.abs() <= 1e-8));
            let pivot = col
                .iter()
                .max_by(|a, b| a.norm().total_cmp(&b.norm()))
                .unwrap();
            assert!(pivot.re > 0.0);
            let norm: f64 = col.iter().map(|z| z.norm_sqr()).sum();
            assert!((norm - 1.0).abs() < 1e-12);
        }
        // constant vector at lambda = 1
        assert!((r.eigenvalues[0] - 1.0).norm() < 1e-12);
        let c0 = v.column(0);
        assert!(c0.iter().all(|z| (z.re - c0[0].re).abs() < 1e-10));
    }

    #[test]
    fn conjugate_pairs_for_real_input() {
        let a = Array2::from_shape_fn((9, 9), |(i, j)| ((i * 7 + j * 3) % 11) as f64 / 11.0 - 0.4);
        let r = eigendecompose(a.view(), 9, 1e-10).unwrap();
        for z in r.eigenvalues.iter().filter(|z| z.im.abs() > 1e-9) {
            assert!(r.eigenvalues.iter().any(|w| (w - z.conj()).norm() < 1e-10));
        }
    }

    #[test]
    fn invalid_requests() {
        let a = Array2::<f64>::eye(3);
        assert!(eigendecompose(a.view(), 0, 1e-8).is_err());
        assert!(eigendecompose(a.view(), 4, 1e-8).is_err());
        let rect = Array2::<f64>::zeros((2, 3));
        assert!(eigendecompose(rect.view(), 1, 1e-8).is_err());
    }

    fn random_markov(n: usize, seed: u64) -> Array2<f64> {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let centers: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let mut a = Array2::from_shape_fn((n, n), |(i, j)| {
            let d = centers[i] - centers[(j + 1) % n];
            (-d * d / 0.01).exp()
        });
        for mut row in a.rows_mut() {
            let s = row.sum();
            row.mapv_inplace(|v| v / s);
        }
        a
    }

    #[test]
    fn arnoldi_agrees_with_dense() {
        let a = random_markov(300, 11);
        let dense = eigendecompose_with(
            a.view(),
            &EigenOptions::new(8).with_method(EigenMethod::Dense),
        )
        .unwrap();
        let arn = eigendecompose_with(
            a.view(),
            &EigenOptions::new(8).with_method(EigenMethod::Arnoldi),
        )
        .unwrap();
        for (x, y) in dense.eigenvalues.iter().zip(&arn.eigenvalues) {
            assert!((x - y).norm() < 1e-7, "{x} vs {y}");
        }
        assert!(arn.residuals.iter().all(|&r| r <= 1e-8));
    }

    #[test]
    fn sweep_with_constant_builder_gives_identical_rows() {
        let a = array![[0.5, 0.5, 0.0], [0.25, 0.5, 0.25], [0.0, 0.5, 0.5]];
        let rows = epsilon_sweep(
            |_| Ok(a.clone()),
            &[1.0, 0.1, 10.0],
            3,
            &EigenOptions::new(3),
        )
        .unwrap();
        assert_eq!(
            rows.iter().map(|r| r.epsilon).collect::<Vec<_>>(),
            vec![0.1, 1.0, 10.0]
        );
        for r in &rows {
            assert!(r.is_ok());
            assert_eq!(r.real_eigenvalues, rows[0].real_eigenvalues);
            assert_eq!(r.moduli, rows[0].moduli);
        }
        assert!(epsilon_sweep(|_| Ok(a.clone()), &[], 3, &EigenOptions::new(3)).is_err());
        assert!(epsilon_sweep(|_| Ok(a.clone()), &[0.0], 3, &EigenOptions::new(3)).is_err());
    }

    #[test]
    fn sweep_records_failures_and_continues() {
        let a = Array2::<f64>::eye(2);
        let rows = epsilon_sweep(
            |e| {
                if e > 1.0 {
                    Err(Error::InvalidInput("boom".into()))
                } else {
                    Ok(a.clone())
                }
            },
            &[0.5, 2.0],
            2,
            &EigenOptions::new(2),
        )
        .unwrap();
        assert!(rows[0].is_ok());
        assert!(!rows[1].is_ok());
    }

    #[test]
    fn matching_pairs_nearest_values() {
        let found = vec![Complex64::new(1.0, 0.0), Complex64::new(0.5, 0.1)];
        let reference = vec![Complex64::new(0.5, 0.1 + 1e-12), Complex64::new(1.0, 1e-13)];
        let m = match_spectra(&found, &reference);
        assert_eq!(m[0].0, 1);
        assert_eq!(m[1].0, 0);
        assert!(m.iter().all(|(_, d)| *d < 1e-11));
    }
}
