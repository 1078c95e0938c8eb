//! Closed-form reference spectra for the shift map `x -> x + theta` on the
//! flat torus, and rational approximation tools for the shift angle.
//!
//! On the uniform lattice `x_j = j/n` the entropic transfer matrix of a
//! shift is circulant, so its eigenvectors are the lattice Fourier modes and
//! its eigenvalues are finite exponential sums that can be evaluated
//! directly.

use num_complex::Complex64;
use std::f64::consts::PI;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ShiftMapSpec {
    theta: Vec<f64>,
    lattice_n: usize,
}

impl ShiftMapSpec {
    /// `theta` components must lie in `(-1/2, 1/2)`; `lattice_n >= 2`.
    pub fn new(theta: Vec<f64>, lattice_n: usize) -> Result<Self> {
        if theta.is_empty() {
            return Err(Error::InvalidInput(
                "shift vector must have at least one component".into(),
            ));
        }
        if let Some(t) = theta
            .iter()
            .find(|t| !(t.is_finite() && **t > -0.5 && **t < 0.5))
        {
            return Err(Error::InvalidInput(format!(
                "shift component {t} outside (-1/2, 1/2)"
            )));
        }
        if lattice_n < 2 {
            return Err(Error::InvalidInput(format!(
                "lattice needs n >= 2 points per axis, got {lattice_n}"
            )));
        }
        Ok(Self { theta, lattice_n })
    }

    /// One-dimensional convenience constructor. `theta` is reduced into
    /// `[-1/2, 1/2)` first, so `2/3` and `-1/3` describe the same map.
    pub fn circle(theta: f64, lattice_n: usize) -> Result<Self> {
        Self::new(vec![theta - theta.round()], lattice_n)
    }

    pub fn dim(&self) -> usize {
        self.theta.len()
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn lattice_n(&self) -> usize {
        self.lattice_n
    }

    /// `N = n^d`.
    pub fn n_points(&self) -> usize {
        self.lattice_n.pow(self.dim() as u32)
    }

    fn check_k(&self, k: &[i64]) -> Result<()> {
        if k.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                what: "frequency vector length",
                expected: self.dim(),
                got: k.len(),
            });
        }
        Ok(())
    }

    /// All frequencies of the lattice, each component in `(-n/2, n/2]`,
    /// lexicographic with the last axis fastest.
    pub fn frequencies(&self) -> Vec<Vec<i64>> {
        let n = self.lattice_n as i64;
        let lo = -n / 2 + if n % 2 == 0 { 1 } else { 0 };
        let axis: Vec<i64> = (lo..=n / 2).collect();
        let mut out = vec![Vec::new()];
        for _ in 0..self.dim() {
            out = out
                .into_iter()
                .flat_map(|prefix| {
                    axis.iter().map(move |&a| {
                        let mut v = prefix.clone();
                        v.push(a);
                        v
                    })
                })
                .collect();
        }
        out
    }
}

fn dot(k: &[i64], x: &[f64]) -> f64 {
    k.iter().zip(x).map(|(a, b)| *a as f64 * b).sum()
}

fn norm_sq(k: &[i64]) -> f64 {
    k.iter().map(|a| (*a as f64).powi(2)).sum()
}

/// `exp(-2 pi i k.theta)`, the eigenvalue of the unregularized transfer
/// operator on the mode `exp(2 pi i k.x)`.
pub fn exact_unregularized_eig(spec: &ShiftMapSpec, k: &[i64]) -> Result<Complex64> {
    spec.check_k(k)?;
    Ok(Complex64::from_polar(1.0, -2.0 * PI * dot(k, spec.theta())))
}

/// `exp(-pi^2 eps |k|^2) exp(-2 pi i k.theta)`: the unregularized eigenvalue
/// damped by the Fourier transform of the Gaussian blur.
pub fn regularized_approx_eig(spec: &ShiftMapSpec, k: &[i64], epsilon: f64) -> Result<Complex64> {
    check_epsilon(epsilon)?;
    let lambda = exact_unregularized_eig(spec, k)?;
    Ok(lambda * (-PI * PI * epsilon * norm_sq(k)).exp())
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if !(epsilon.is_finite() && epsilon > 0.0) {
        return Err(Error::InvalidInput(format!(
            "epsilon must be positive, got {epsilon}"
        )));
    }
    Ok(())
}

/// Integer offsets `j` with `j/n + theta` in `(-1/2, 1/2]`, for one axis.
fn shifted_offsets(n: usize, theta: f64) -> Vec<i64> {
    let nf = n as f64;
    let lo = (-nf / 2.0 - nf * theta).floor() as i64 + 1;
    let hi = (nf / 2.0 - nf * theta).floor() as i64;
    (lo..=hi).collect()
}

/// Exact eigenvalue of the entropic transfer matrix of the shift on the
/// uniform lattice, for the Fourier mode `k`, by direct summation.
pub fn discrete_exact_eig(spec: &ShiftMapSpec, k: &[i64], epsilon: f64) -> Result<Complex64> {
    spec.check_k(k)?;
    check_epsilon(epsilon)?;
    let n = spec.lattice_n() as i64;
    let half = n as f64 / 2.0;
    if k.iter()
        .any(|&c| !((c as f64) > -half && (c as f64) <= half))
    {
        return Err(Error::Aliasing {
            k: k.to_vec(),
            n: spec.lattice_n(),
        });
    }
    let nf = n as f64;
    let axes: Vec<Vec<i64>> = spec
        .theta()
        .iter()
        .map(|&t| shifted_offsets(spec.lattice_n(), t))
        .collect();
    // shift exponents by their minimum so tiny eps cannot underflow every term
    let min_r2: f64 = axes
        .iter()
        .zip(spec.theta())
        .map(|(js, t)| {
            js.iter()
                .map(|&j| (j as f64 / nf + t).powi(2))
                .fold(f64::INFINITY, f64::min)
        })
        .sum();

    let d = spec.dim();
    let mut idx = vec![0usize; d];
    let mut sum = Complex64::new(0.0, 0.0);
    let mut z = 0.0;
    loop {
        let mut r2 = 0.0;
        let mut phase = 0.0;
        for a in 0..d {
            let j = axes[a][idx[a]];
            r2 += (j as f64 / nf + spec.theta()[a]).powi(2);
            phase += (k[a] * j).rem_euclid(n) as f64 / nf;
        }
        let g = (-(r2 - min_r2) / epsilon).exp();
        z += g;
        sum += Complex64::from_polar(g, 2.0 * PI * phase);
        // odometer over the product of offset ranges
        let mut a = d;
        loop {
            if a == 0 {
                return Ok(sum / z);
            }
            a -= 1;
            idx[a] += 1;
            if idx[a] < axes[a].len() {
                break;
            }
            idx[a] = 0;
        }
    }
}

/// Every lattice mode with its exact discrete eigenvalue.
pub fn discrete_spectrum(spec: &ShiftMapSpec, epsilon: f64) -> Result<Vec<(Vec<i64>, Complex64)>> {
    spec.frequencies()
        .into_iter()
        .map(|k| discrete_exact_eig(spec, &k, epsilon).map(|l| (k, l)))
        .collect()
}

/// Upper end of the epsilon range where the continuous bound is asserted.
pub fn prop_bound_epsilon_limit(d: usize) -> f64 {
    1.0 / (8.0 * (d as f64 + 2.0) * std::f64::consts::LN_2)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
    /// Natural logarithms of both sides; usable when they underflow.
    pub ln_lhs: f64,
    pub ln_rhs: f64,
}

/// Compares the continuous regularized eigenvalue of the circle shift with
/// its Gaussian approximation against the bound `2^(d+1) exp(-1/(8 eps))`
/// for `d = 1`.
///
/// The continuous eigenvalue is `lambda_k * R` with
/// `R = int_{|x|<1/2} e^{-x^2/eps} cos(2 pi k x) / int_{|x|<1/2} e^{-x^2/eps}`.
/// Writing both integrals as the full-line Gaussian value minus the tails
/// beyond `|x| = 1/2` gives the deviation without cancellation:
///
/// `lhs = 2 e^{-L^2} |e^{-tau^2} J(0) - J(tau)| / (sqrt(pi) - 2 e^{-L^2} J(0))`
///
/// where `L = 1/(2 sqrt(eps))`, `tau = pi k sqrt(eps)` and
/// `J(tau) = int_0^inf e^{-2Ls - s^2} cos(2 (L + s) tau) ds`, evaluated by
/// composite Gauss-Legendre quadrature.
pub fn check_prop52_bound(
    spec: &ShiftMapSpec,
    k: i64,
    epsilon: f64,
    quadrature_points: usize,
) -> Result<BoundCheck> {
    if spec.dim() != 1 {
        return Err(Error::InvalidInput(format!(
            "bound check is implemented for d = 1 only, got d = {}",
            spec.dim()
        )));
    }
    check_epsilon(epsilon)?;
    let limit = prop_bound_epsilon_limit(1);
    if epsilon >= limit {
        return Err(Error::EpsilonOutOfRange { epsilon, limit });
    }
    let root = epsilon.sqrt();
    let big_l = 0.5 / root;
    let tau = PI * k as f64 * root;
    let nodes = quadrature_points.max(64 * (1.0 / root).ceil() as usize);
    // e^{-2Ls - s^2} < e^{-60} beyond this
    let s_max = -big_l + (big_l * big_l + 60.0).sqrt();
    let j0 = gauss_legendre_integral(|s| (-2.0 * big_l * s - s * s).exp(), 0.0, s_max, nodes);
    let jt = gauss_legendre_integral(
        |s| (-2.0 * big_l * s - s * s).exp() * (2.0 * (big_l + s) * tau).cos(),
        0.0,
        s_max,
        nodes,
    );
    let gap = ((-tau * tau).exp() * j0 - jt).abs();
    let denom = PI.sqrt() - 2.0 * (-big_l * big_l).exp() * j0;
    let ln_lhs = if gap == 0.0 {
        f64::NEG_INFINITY
    } else {
        2f64.ln() - big_l * big_l + gap.ln() - denom.ln()
    };
    let ln_rhs = 2.0 * 2f64.ln() - 1.0 / (8.0 * epsilon);
    Ok(BoundCheck {
        lhs: ln_lhs.exp(),
        rhs: ln_rhs.exp(),
        holds: ln_lhs <= ln_rhs,
        ln_lhs,
        ln_rhs,
    })
}

const GL_ORDER: usize = 16;

/// Nodes and weights of the `m`-point Gauss-Legendre rule on `[-1, 1]`.
pub fn gauss_legendre_rule(m: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; m];
    let mut weights = vec![0.0; m];
    for i in 0..m.div_ceil(2) {
        let mut x = (PI * (i as f64 + 0.75) / (m as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for j in 2..=m {
                let p2 = ((2 * j - 1) as f64 * x * p1 - (j - 1) as f64 * p0) / j as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = m as f64 * (x * p1 - p0) / (x * x - 1.0);
            let step = p1 / dp;
            x -= step;
            if step.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[m - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[m - 1 - i] = w;
    }
    (nodes, weights)
}

fn gauss_legendre_integral<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, nodes: usize) -> f64 {
    let (x, w) = gauss_legendre_rule(GL_ORDER);
    let panels = nodes.div_ceil(GL_ORDER).max(1);
    let h = (b - a) / panels as f64;
    let mut total = 0.0;
    for p in 0..panels {
        let mid = a + (p as f64 + 0.5) * h;
        let panel: f64 = x
            .iter()
            .zip(&w)
            .map(|(xi, wi)| wi * f(mid + 0.5 * h * xi))
            .sum();
        total += 0.5 * h * panel;
    }
    total
}

/// A continued-fraction convergent `p/q` of a shift angle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RationalApprox {
    pub p: i64,
    pub q: u64,
    /// `theta - p/q`.
    pub delta: f64,
    /// `q^2 |delta|`.
    pub c: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RationalApproximations {
    /// Convergents with `c` in `(0, 1)`, ascending in `c`.
    pub approximations: Vec<RationalApprox>,
    /// Set when a convergent reproduces `theta` to within `1e-15`.
    pub exact: Option<(i64, u64)>,
}

/// Distance below which a convergent is taken to be `theta` itself.
pub const EXACT_RATIONAL_TOL: f64 = 1e-15;

/// Continued-fraction convergents of `theta` with denominator at most `q_max`.
///
/// `theta` is first rounded to a multiple of `2^-60` so the expansion runs
/// in exact integer arithmetic.
pub fn rational_approximations(theta: f64, q_max: u64) -> Result<RationalApproximations> {
    if !theta.is_finite() {
        return Err(Error::InvalidInput(format!(
            "theta must be finite, got {theta}"
        )));
    }
    if q_max < 1 {
        return Err(Error::InvalidInput("q_max must be at least 1".into()));
    }
    if theta.abs() >= 2f64.powi(60) {
        return Err(Error::InvalidInput(format!("theta {theta} too large")));
    }
    let den0: i128 = 1 << 60;
    let scaled = theta * den0 as f64;
    let (mut num, mut den) = if scaled.abs() < 2f64.powi(126) {
        (scaled.round() as i128, den0)
    } else {
        (theta.round() as i128, 1)
    };
    let (mut p_prev, mut p) = (0i128, 1i128);
    let (mut q_prev, mut q) = (1i128, 0i128);
    let mut out = Vec::new();
    let mut exact = None;
    loop {
        let a = num.div_euclid(den);
        let rem = num.rem_euclid(den);
        let (p_next, q_next) = (a * p + p_prev, a * q + q_prev);
        if q_next > q_max as i128 {
            break;
        }
        p_prev = p;
        q_prev = q;
        p = p_next;
        q = q_next;
        let delta = theta - p as f64 / q as f64;
        if delta.abs() < EXACT_RATIONAL_TOL {
            exact = Some((p as i64, q as u64));
            break;
        }
        let c = (q as f64).powi(2) * delta.abs();
        if c > 0.0 && c < 1.0 {
            out.push(RationalApprox {
                p: p as i64,
                q: q as u64,
                delta,
                c,
            });
        }
        if rem == 0 {
            break;
        }
        num = den;
        den = rem;
    }
    out.sort_by(|a, b| a.c.total_cmp(&b.c).then(a.q.cmp(&b.q)));
    Ok(RationalApproximations {
        approximations: out,
        exact,
    })
}

/// `(pi q)^-2`: below this epsilon an approximate `q`-cycle stays resolved.
pub fn visibility_threshold(q: u64) -> Result<f64> {
    if q == 0 {
        return Err(Error::InvalidInput("q must be positive".into()));
    }
    Ok((PI * q as f64).powi(-2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn unregularized_and_approximate_values() {
        let s = ShiftMapSpec::circle(1.0 / 3.0, 8).unwrap();
        assert_eq!(
            exact_unregularized_eig(&s, &[0]).unwrap(),
            Complex64::new(1.0, 0.0)
        );
        let l = exact_unregularized_eig(&s, &[1]).unwrap();
        assert!((l - Complex64::from_polar(1.0, -2.0 * PI / 3.0)).norm() < 1e-15);

        let s = ShiftMapSpec::circle(1.0 / PI, 8).unwrap();
        let l = exact_unregularized_eig(&s, &[1]).unwrap();
        assert!((l.arg() + 2.0).abs() < 1e-14);

        let s = ShiftMapSpec::circle(1.0 / 3.0, 8).unwrap();
        let r = regularized_approx_eig(&s, &[1], 1e-2).unwrap();
        assert!((r.norm() - (-PI * PI / 100.0).exp()).abs() < 1e-15);
        assert!((r.norm() - 0.9060).abs() < 1e-4);
        assert!((r.arg() + 2.0 * PI / 3.0).abs() < 1e-14);
        assert_eq!(
            regularized_approx_eig(&s, &[0], 0.3).unwrap(),
            Complex64::new(1.0, 0.0)
        );
        let other = ShiftMapSpec::circle(0.1, 8).unwrap();
        assert!(
            (regularized_approx_eig(&other, &[2], 0.01).unwrap().norm()
                - regularized_approx_eig(&s, &[2], 0.01).unwrap().norm())
            .abs()
                < 1e-15
        );
    }

    #[test]
    fn discrete_two_point_closed_form() {
        for eps in [0.05, 0.3, 2.0] {
            let s = ShiftMapSpec::new(vec![0.0], 2).unwrap();
            let l = discrete_exact_eig(&s, &[1], eps).unwrap();
            let expected = (1.0 / (8.0 * eps)).tanh();
            assert!((l.re - expected).abs() < 1e-14 && l.im.abs() < 1e-14);
            assert_eq!(
                discrete_exact_eig(&s, &[0], eps).unwrap(),
                Complex64::new(1.0, 0.0)
            );
        }
    }

    #[test]
    fn aliasing_is_rejected() {
        let s = ShiftMapSpec::circle(0.2, 4).unwrap();
        assert!(matches!(
            discrete_exact_eig(&s, &[3], 0.1),
            Err(Error::Aliasing { .. })
        ));
        assert!(matches!(
            discrete_exact_eig(&s, &[-2], 0.1),
            Err(Error::Aliasing { .. })
        ));
        assert!(discrete_exact_eig(&s, &[2], 0.1).is_ok());
        assert_eq!(s.frequencies().len(), 4);
        assert_eq!(
            ShiftMapSpec::new(vec![0.1, 0.2], 3)
                .unwrap()
                .frequencies()
                .len(),
            9
        );
    }

    #[test]
    fn two_dimensional_sum_factorizes() {
        let s2 = ShiftMapSpec::new(vec![0.21, -0.13], 6).unwrap();
        let a = ShiftMapSpec::circle(0.21, 6).unwrap();
        let b = ShiftMapSpec::circle(-0.13, 6).unwrap();
        for k in s2.frequencies() {
            let joint = discrete_exact_eig(&s2, &k, 0.02).unwrap();
            let prod = discrete_exact_eig(&a, &k[..1], 0.02).unwrap()
                * discrete_exact_eig(&b, &k[1..], 0.02).unwrap();
            assert!((joint - prod).norm() < 1e-13);
        }
    }

    #[test]
    fn discrete_approaches_gaussian_approximation() {
        let s = ShiftMapSpec::circle(1.0 / 3.0, 1000).unwrap();
        for k in -3..=3 {
            let d = discrete_exact_eig(&s, &[k], 1e-2).unwrap();
            let a = regularized_approx_eig(&s, &[k], 1e-2).unwrap();
            assert!((d - a).norm() <= 1e-3, "k={k}: {}", (d - a).norm());
        }
        let s = ShiftMapSpec::circle(1.0 / 3.0, 1000).unwrap();
        let near = discrete_exact_eig(&s, &[20], 1e-3).unwrap().norm();
        let far = discrete_exact_eig(&s, &[200], 1e-3).unwrap().norm();
        assert!(far <= 0.1 * near);
    }

    #[test]
    fn bound_examples() {
        let s = ShiftMapSpec::circle(1.0 / 3.0, 2).unwrap();
        let b = check_prop52_bound(&s, 0, 1e-2, 0).unwrap();
        assert!(b.holds);
        assert!((b.rhs - 4.0 * (-12.5f64).exp()).abs() < 1e-18);
        let b = check_prop52_bound(&s, 1, 1e-3, 0).unwrap();
        assert!(b.holds);
        assert!((b.ln_rhs - (4f64.ln() - 125.0)).abs() < 1e-12);
        assert!(matches!(
            check_prop52_bound(&s, 1, 0.1, 0),
            Err(Error::EpsilonOutOfRange { .. })
        ));
    }

    #[test]
    fn bound_matches_direct_quadrature_at_moderate_eps() {
        // at eps = 0.05 the deviation is large enough to evaluate naively
        let eps = 0.05;
        let s = ShiftMapSpec::circle(0.0, 2).unwrap();
        for k in 1..4 {
            let num = gauss_legendre_integral(
                |x| (-x * x / eps).exp() * (2.0 * PI * k as f64 * x).cos(),
                -0.5,
                0.5,
                4096,
            );
            let den = gauss_legendre_integral(|x| (-x * x / eps).exp(), -0.5, 0.5, 4096);
            let direct = (num / den - (-PI * PI * eps * (k * k) as f64).exp()).abs();
            let b = check_prop52_bound(&s, k, eps, 0).unwrap();
            assert!(
                (b.lhs - direct).abs() <= 1e-10 * direct.max(1e-300) + 1e-15,
                "k={k}: {} vs {direct}",
                b.lhs
            );
        }
    }

    #[test]
    fn gauss_legendre_is_exact_for_polynomials() {
        let (x, w) = gauss_legendre_rule(16);
        let s: f64 = w.iter().sum();
        assert!((s - 2.0).abs() < 1e-14);
        let p: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(30)).sum();
        assert!((p - 2.0 / 31.0).abs() < 1e-14);
    }

    #[test]
    fn inverse_pi_convergents() {
        let r = rational_approximations(1.0 / PI, 1000).unwrap();
        let qs: Vec<u64> = r.approximations.iter().map(|a| a.q).collect();
        assert_eq!(qs, vec![355, 22, 3, 1, 333]);
        let find = |p: i64, q: u64| {
            r.approximations
                .iter()
                .find(|a| a.p == p && a.q == q)
                .copied()
                .unwrap()
        };
        assert!((find(1, 3).c - 0.135).abs() < 1e-3);
        assert!((find(7, 22).c - 0.062).abs() < 1e-3);
        assert!((find(113, 355).c - 0.003).abs() < 1e-3);
        assert_eq!(r.approximations[0].q, 355);
        assert!(r.exact.is_none());
        assert!(r.approximations.windows(2).all(|w| w[0].c <= w[1].c));
    }

    #[test]
    fn exact_rational_is_reported() {
        let r = rational_approximations(1.0 / 3.0, 1000).unwrap();
        assert_eq!(r.exact, Some((1, 3)));
        assert!(r.approximations.iter().all(|a| a.q != 3));
    }

    #[test]
    fn thresholds() {
        assert!((visibility_threshold(355).unwrap() - 8e-7).abs() < 0.5e-7);
        assert!((visibility_threshold(22).unwrap() - 2e-4).abs() < 0.5e-4);
        assert!((visibility_threshold(3).unwrap() - 1e-2).abs() < 0.5e-2);
        assert!(visibility_threshold(0).is_err());
    }

    proptest! {
        #[test]
        fn conjugacy_and_modulus(theta in -0.49f64..0.49, n in 2usize..40, eps in 1e-3f64..1.0, kseed in any::<u32>()) {
            let s = ShiftMapSpec::circle(theta, n).unwrap();
            let ks = s.frequencies();
            let k = ks[kseed as usize % ks.len()][0];
            let l = discrete_exact_eig(&s, &[k], eps).unwrap();
            prop_assert!(l.norm() <= 1.0 + 1e-12);
            if (-k) as f64 > -(n as f64) / 2.0 && (-k) as f64 <= n as f64 / 2.0 {
                let m = discrete_exact_eig(&s, &[-k], eps).unwrap();
                prop_assert!((m - l.conj()).norm() < 1e-12);
            }
        }
    }
}
