//! Small dense helpers shared by the bound computations.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Condition number above which an inverse is refused.
pub const MAX_CONDITION: f64 = 1e12;

/// `sum conj(a) b`.
pub fn inner(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

/// `Re sum conj(a) b`, without forming the imaginary part.
pub fn real_inner(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.re * y.re + x.im * y.im)
        .sum()
}

pub fn norm_sqr(a: &[Complex64]) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum()
}

/// Gram matrix `G_ij = Re <d_i, d_j>`.
pub fn real_gram(d: &[Vec<Complex64>]) -> DMatrix<f64> {
    let n = d.len();
    let mut g = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = real_inner(&d[i], &d[j]);
            g[(i, j)] = v;
            g[(j, i)] = v;
        }
    }
    g
}

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

pub fn is_symmetric(m: &DMatrix<f64>, rel_tol: f64) -> bool {
    let scale = m.amax().max(f64::MIN_POSITIVE);
    m.is_square() && (m - m.transpose()).amax() <= rel_tol * scale
}

/// `max_ij |a_ij - b_ij| / sqrt(|b_ii b_jj|)`: an entrywise relative
/// difference that is insensitive to the units of each parameter.
pub fn scaled_difference(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let n = b.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            let s = (b[(i, i)] * b[(j, j)]).abs().sqrt();
            let d = (a[(i, j)] - b[(i, j)]).abs();
            worst = worst.max(if s > 0.0 { d / s } else { d });
        }
    }
    worst
}

/// Smallest eigenvalue of the symmetric part, relative to the largest
/// magnitude; `>= -tol` means positive semidefinite up to rounding.
pub fn is_psd(m: &DMatrix<f64>, rel_tol: f64) -> bool {
    let eig = SymmetricEigen::new(symmetrize(m));
    let top = eig.eigenvalues.amax();
    eig.eigenvalues.iter().all(|&l| l >= -rel_tol * top)
}

/// Inverse of a symmetric (possibly indefinite) matrix.
///
/// The matrix is first equilibrated by `|diag|^{-1/2}` on both sides, since
/// bound matrices mix parameters whose units differ by many decades. The
/// inverse is refused when the equilibrated condition number exceeds
/// [`MAX_CONDITION`]; the error reports the numerical rank.
pub fn symmetric_inverse(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = m.nrows();
    if !m.is_square() || n == 0 {
        return Err(Error::SingularBound {
            rank: 0,
            dim: n,
            condition: f64::INFINITY,
        });
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("matrix to invert"));
    }
    let d: Vec<f64> = (0..n)
        .map(|i| {
            let a = m[(i, i)].abs();
            if a > 0.0 {
                1.0 / a.sqrt()
            } else {
                1.0
            }
        })
        .collect();
    let s = DMatrix::from_fn(n, n, |i, j| 0.5 * (m[(i, j)] + m[(j, i)]) * d[i] * d[j]);
    let eig = SymmetricEigen::new(s);
    let mags: Vec<f64> = eig.eigenvalues.iter().map(|l| l.abs()).collect();
    let top = mags.iter().cloned().fold(0.0, f64::max);
    let low = mags.iter().cloned().fold(f64::INFINITY, f64::min);
    let condition = if low > 0.0 { top / low } else { f64::INFINITY };
    if !(condition <= MAX_CONDITION) {
        let rank = mags.iter().filter(|&&l| l > top / MAX_CONDITION).count();
        return Err(Error::SingularBound {
            rank,
            dim: n,
            condition,
        });
    }
    let inv_l = eig.eigenvalues.map(|l| 1.0 / l);
    let q = &eig.eigenvectors;
    let s_inv = q * DMatrix::from_diagonal(&inv_l) * q.transpose();
    Ok(DMatrix::from_fn(n, n, |i, j| s_inv[(i, j)] * d[i] * d[j]))
}

/// Inverse of `(2 / sigma2) Re{D^H D}` computed from a QR factorization of
/// the real-stacked, column-equilibrated `D`, which loses half as many digits
/// as inverting the normal matrix. The condition guard applies to the
/// equivalent normal matrix.
pub fn crb_from_derivatives(d: &[Vec<Complex64>], sigma2: f64) -> Result<DMatrix<f64>> {
    let n = d.len();
    let len = d.first().map_or(0, |c| c.len());
    if n == 0 || len == 0 {
        return Err(Error::SingularBound {
            rank: 0,
            dim: n,
            condition: f64::INFINITY,
        });
    }
    let scale: Vec<f64> = d
        .iter()
        .map(|c| {
            let s = norm_sqr(c).sqrt();
            if s > 0.0 {
                s
            } else {
                1.0
            }
        })
        .collect();
    let mut stacked = DMatrix::zeros(2 * len, n);
    for (j, col) in d.iter().enumerate() {
        for (i, v) in col.iter().enumerate() {
            stacked[(2 * i, j)] = v.re / scale[j];
            stacked[(2 * i + 1, j)] = v.im / scale[j];
        }
    }
    if stacked.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("derivatives"));
    }
    let r = stacked.qr().r();
    let sv = r.singular_values();
    let top = sv.max();
    let low = sv.min();
    let condition = if low > 0.0 {
        (top / low).powi(2)
    } else {
        f64::INFINITY
    };
    if !(condition <= MAX_CONDITION) {
        let rank = sv
            .iter()
            .filter(|&&l| l * l > top * top / MAX_CONDITION)
            .count();
        return Err(Error::SingularBound {
            rank,
            dim: n,
            condition,
        });
    }
    let r_inv = r
        .solve_upper_triangular(&DMatrix::identity(n, n))
        .ok_or(Error::SingularBound {
            rank: 0,
            dim: n,
            condition,
        })?;
    let core = &r_inv * r_inv.transpose();
    Ok(DMatrix::from_fn(n, n, |i, j| {
        0.5 * sigma2 * core[(i, j)] / (scale[i] * scale[j])
    }))
}
