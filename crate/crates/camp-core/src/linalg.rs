//! Small numeric helpers shared across modules: Gaussian sampling factors,
//! a symmetric 2x2 eigendecomposition, adaptive Simpson quadrature, and a
//! numerically stable normal CDF difference.

use nalgebra::{Matrix2, Matrix3, Matrix6, Vector2, Vector3, Vector6};
use rand::Rng;
use rand_distr::StandardNormal;
use statrs::function::erf::erfc;

/// Square-root factor `L` of a PSD matrix with `L L^T = M`.
///
/// Cholesky when the matrix is positive definite; otherwise an
/// eigendecomposition with negative eigenvalues clamped to zero.
pub fn psd_factor3(m: &Matrix3<f64>) -> Matrix3<f64> {
    if let Some(chol) = nalgebra::Cholesky::new(*m) {
        return chol.l();
    }
    let eig = m.symmetric_eigen();
    let sqrt_vals = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    eig.eigenvectors * Matrix3::from_diagonal(&sqrt_vals)
}

/// 6x6 variant of [`psd_factor3`].
pub fn psd_factor6(m: &Matrix6<f64>) -> Matrix6<f64> {
    if let Some(chol) = nalgebra::Cholesky::new(*m) {
        return chol.l();
    }
    let eig = m.symmetric_eigen();
    let sqrt_vals = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    eig.eigenvectors * Matrix6::from_diagonal(&sqrt_vals)
}

pub fn sample_gaussian3<R: Rng + ?Sized>(
    mean: &Vector3<f64>,
    factor: &Matrix3<f64>,
    rng: &mut R,
) -> Vector3<f64> {
    let z = Vector3::new(
        rng.sample(StandardNormal),
        rng.sample(StandardNormal),
        rng.sample(StandardNormal),
    );
    mean + factor * z
}

pub fn sample_gaussian6<R: Rng + ?Sized>(
    mean: &Vector6<f64>,
    factor: &Matrix6<f64>,
    rng: &mut R,
) -> Vector6<f64> {
    let z = Vector6::from_fn(|_, _| rng.sample(StandardNormal));
    mean + factor * z
}

/// Eigendecomposition of a symmetric 2x2 matrix.
///
/// Returns `(lambda_max, lambda_min, u_max)` where `u_max` is the unit
/// eigenvector of the larger eigenvalue.
pub fn sym_eigen2(m: &Matrix2<f64>) -> (f64, f64, Vector2<f64>) {
    let a = m[(0, 0)];
    let b = 0.5 * (m[(0, 1)] + m[(1, 0)]);
    let c = m[(1, 1)];
    let mean = 0.5 * (a + c);
    let disc = (0.25 * (a - c) * (a - c) + b * b).sqrt();
    let l_max = mean + disc;
    let l_min = mean - disc;
    // Pick whichever eigenvector expression is better conditioned.
    let v1 = Vector2::new(b, l_max - a);
    let v2 = Vector2::new(l_max - c, b);
    let v = if v1.norm() >= v2.norm() { v1 } else { v2 };
    let u = if v.norm() > 0.0 {
        v / v.norm()
    } else {
        Vector2::new(1.0, 0.0)
    };
    (l_max, l_min, u)
}

/// Standard normal CDF difference `Phi(b) - Phi(a)` for `a <= b`, computed
/// without cancellation in the tails.
pub fn normal_cdf_diff(a: f64, b: f64) -> f64 {
    debug_assert!(a <= b);
    let inv_sqrt2 = std::f64::consts::FRAC_1_SQRT_2;
    if a >= 0.0 {
        0.5 * (erfc(a * inv_sqrt2) - erfc(b * inv_sqrt2))
    } else if b <= 0.0 {
        0.5 * (erfc(-b * inv_sqrt2) - erfc(-a * inv_sqrt2))
    } else {
        1.0 - 0.5 * (erfc(b * inv_sqrt2) + erfc(-a * inv_sqrt2))
    }
    .max(0.0)
}

/// Adaptive Simpson integration of `f` over `[a, b]` to absolute tolerance
/// `tol`.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    let m = 0.5 * (a + b);
    let fa = f(a);
    let fm = f(m);
    let fb = f(b);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_step(f, a, b, fa, fm, fb, whole, tol, 60)
}

#[allow(clippy::too_many_arguments)]
fn simpson_step<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        left + right + delta / 15.0
    } else {
        simpson_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
            + simpson_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
    }
}

/// Fixed-order pairwise summation; deterministic regardless of thread count.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    match xs.len() {
        0 => 0.0,
        n if n <= 8 => xs.iter().sum(),
        n => {
            let (lo, hi) = xs.split_at(n / 2);
            pairwise_sum(lo) + pairwise_sum(hi)
        }
    }
}
