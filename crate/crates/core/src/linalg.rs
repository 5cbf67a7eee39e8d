//! Small dense linear-algebra helpers shared across modules.

use nalgebra::{DMatrix, DVector};

/// Induced ∞-norm (maximum absolute row sum).
pub fn inf_norm(m: &DMatrix<f64>) -> f64 {
    (0..m.nrows())
        .map(|i| m.row(i).iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Maximum absolute entry of a vector.
pub fn vec_inf_norm(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0_f64, |a, b| a.max(b.abs()))
}

/// Spectral radius via the complex eigenvalues of a square matrix.
pub fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    m.complex_eigenvalues()
        .iter()
        .map(|c| c.norm())
        .fold(0.0, f64::max)
}

/// Symmetric part `(m + mᵀ)/2`.
pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Extreme eigenvalues `(min, max)` of the symmetric part of `m`.
pub fn sym_eig_range(m: &DMatrix<f64>) -> (f64, f64) {
    let e = symmetrize(m).symmetric_eigenvalues();
    let lo = e.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = e.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    (lo, hi)
}

/// Largest eigenvalue of the symmetric part of `m`.
pub fn max_sym_eig(m: &DMatrix<f64>) -> f64 {
    sym_eig_range(m).1
}

/// Smallest eigenvalue of the symmetric part of `m`.
pub fn min_sym_eig(m: &DMatrix<f64>) -> f64 {
    sym_eig_range(m).0
}

/// Solution of the discrete Lyapunov equation `X = AᵀXA + Q` by squaring.
///
/// Requires `A` Schur stable; returns `None` if the iteration does not settle.
pub fn discrete_lyapunov(a: &DMatrix<f64>, q: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let mut x = q.clone();
    let mut ak = a.clone();
    for _ in 0..64 {
        let inc = ak.transpose() * &x * &ak;
        x += &inc;
        ak = &ak * &ak;
        if !x.iter().all(|v| v.is_finite()) {
            return None;
        }
        if ak.amax() < 1e-20 {
            return Some(symmetrize(&x));
        }
    }
    None
}

/// Stabilizing solution of the discrete algebraic Riccati equation with the
/// associated LQR gain for `u = Kx`.
pub fn dlqr(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
) -> Option<(DMatrix<f64>, DMatrix<f64>)> {
    let mut p = q.clone();
    for _ in 0..100_000 {
        let bt_p = b.transpose() * &p;
        let s = r + &bt_p * b;
        let k = s.clone().cholesky()?.solve(&(&bt_p * a));
        let next = symmetrize(&(q + a.transpose() * &p * a - a.transpose() * p.clone() * b * &k));
        let diff = (&next - &p).amax();
        p = next;
        if diff <= 1e-13 * p.amax().max(1.0) {
            let bt_p = b.transpose() * &p;
            let s = r + &bt_p * b;
            let k = s.cholesky()?.solve(&(&bt_p * a));
            return Some((p, -k));
        }
    }
    None
}

/// Build a `DMatrix` from row slices.
pub fn mat_from_rows(rows: &[Vec<f64>]) -> DMatrix<f64> {
    let nr = rows.len();
    let nc = rows.first().map_or(0, |r| r.len());
    DMatrix::from_fn(nr, nc, |i, j| rows[i][j])
}

/// Rows of a matrix as plain vectors.
pub fn mat_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| m.row(i).iter().cloned().collect())
        .collect()
}

/// Stack matrices vertically; all must share the column count.
pub fn vstack(parts: &[&DMatrix<f64>]) -> DMatrix<f64> {
    let nc = parts.first().map_or(0, |p| p.ncols());
    let nr: usize = parts.iter().map(|p| p.nrows()).sum();
    let mut out = DMatrix::zeros(nr, nc);
    let mut r = 0;
    for p in parts {
        out.view_mut((r, 0), (p.nrows(), nc)).copy_from(*p);
        r += p.nrows();
    }
    out
}

/// Concatenate vectors.
pub fn vcat(parts: &[&DVector<f64>]) -> DVector<f64> {
    let n: usize = parts.iter().map(|p| p.len()).sum();
    let mut out = DVector::zeros(n);
    let mut r = 0;
    for p in parts {
        out.rows_mut(r, p.len()).copy_from(*p);
        r += p.len();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lyapunov_scalar() {
        let a = DMatrix::from_element(1, 1, 0.5);
        let q = DMatrix::from_element(1, 1, 1.0);
        let x = discrete_lyapunov(&a, &q).unwrap();
        assert!((x[(0, 0)] - 4.0 / 3.0).abs() < 1e-14);
    }

    #[test]
    fn lyapunov_residual_2d() {
        let a = mat_from_rows(&[vec![0.42, -0.28], vec![0.02, 0.6]]);
        let q = DMatrix::identity(2, 2);
        let x = discrete_lyapunov(&a, &q).unwrap();
        let res = a.transpose() * &x * &a - &x + q;
        assert!(res.amax() < 1e-12);
    }

    #[test]
    fn dlqr_scalar_matches_closed_form() {
        // x+ = x + u, q = r = 1: p = (1 + sqrt 5)/2, k = -p/(1+p)
        let one = DMatrix::from_element(1, 1, 1.0);
        let (p, k) = dlqr(&one, &one, &one, &one).unwrap();
        let golden = (1.0 + 5f64.sqrt()) / 2.0;
        assert!((p[(0, 0)] - golden).abs() < 1e-10);
        assert!((k[(0, 0)] + golden / (1.0 + golden)).abs() < 1e-10);
    }

    #[test]
    fn norms() {
        let m = mat_from_rows(&[vec![1.0, -2.0], vec![0.5, 0.5]]);
        assert_eq!(inf_norm(&m), 3.0);
        assert!((spectral_radius(&(DMatrix::identity(3, 3) * 0.7)) - 0.7).abs() < 1e-14);
    }
}
