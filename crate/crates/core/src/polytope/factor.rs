use nalgebra::{DMatrix, DVector};

use crate::error::{GeometryError, SolverError};
use crate::solver::solve_standard;

/// Nonnegative `H` with `HV = M`, each row of minimal sum.
///
/// Row `i` solves `min 1ᵀh` s.t. `Vᵀh = mᵢ`, `h ≥ 0`.
pub fn nonneg_factor(v: &DMatrix<f64>, m: &DMatrix<f64>) -> Result<DMatrix<f64>, GeometryError> {
    if v.ncols() != m.ncols() {
        return Err(GeometryError::DimensionMismatch(format!(
            "shape has {} columns, target has {}",
            v.ncols(),
            m.ncols()
        )));
    }
    let nv = v.nrows();
    let vt = v.transpose();
    let ones = DVector::from_element(nv, 1.0);
    let mut h = DMatrix::zeros(m.nrows(), nv);
    for i in 0..m.nrows() {
        let mi = m.row(i).transpose();
        let sol = match solve_standard(&vt, &mi, &ones) {
            Ok(s) => s,
            Err(SolverError::Infeasible) => return Err(GeometryError::ConicInfeasible { row: i }),
            Err(e) => return Err(e.into()),
        };
        let res = (&vt * &sol.y - &mi).amax();
        if res > 1e-8 * (1.0 + mi.amax()) {
            return Err(GeometryError::ConicInfeasible { row: i });
        }
        h.row_mut(i).copy_from(&sol.y.transpose());
    }
    Ok(h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{inf_norm, mat_from_rows};

    #[test]
    fn identity() {
        let h = nonneg_factor(&DMatrix::identity(3, 3), &DMatrix::identity(3, 3)).unwrap();
        assert_eq!(h, DMatrix::identity(3, 3));
    }

    #[test]
    fn one_dimensional_rows() {
        let v = mat_from_rows(&[vec![1.0], vec![-1.0]]);
        let h = nonneg_factor(&v, &mat_from_rows(&[vec![1.0]])).unwrap();
        assert_eq!(h, mat_from_rows(&[vec![1.0, 0.0]]));
        let h = nonneg_factor(&v, &(&v * 0.5)).unwrap();
        assert!((h.clone() - DMatrix::identity(2, 2) * 0.5).amax() < 1e-15);
        assert!((inf_norm(&h) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn conic_infeasible() {
        // Rows of V span only the positive orthant cone in 2D.
        let v = mat_from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]);
        let err =
            nonneg_factor(&v, &mat_from_rows(&[vec![1.0, 1.0], vec![-1.0, 0.0]])).unwrap_err();
        assert_eq!(err, GeometryError::ConicInfeasible { row: 1 });
    }
}
