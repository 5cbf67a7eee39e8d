use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use super::Polytope;
use crate::error::GeometryError;

/// `{x : (x − center)ᵀ·shape·(x − center) ≤ level}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Ellipsoid {
    center: DVector<f64>,
    shape: DMatrix<f64>,
    level: f64,
}

impl Ellipsoid {
    pub fn new(
        center: DVector<f64>,
        shape: DMatrix<f64>,
        level: f64,
    ) -> Result<Self, GeometryError> {
        let n = center.len();
        if shape.shape() != (n, n) {
            return Err(GeometryError::InvalidEllipsoid(format!(
                "shape is {:?} for a center of length {n}",
                shape.shape()
            )));
        }
        if !(level > 0.0 && level.is_finite()) {
            return Err(GeometryError::InvalidEllipsoid(format!(
                "level {level} is not positive"
            )));
        }
        if (&shape - shape.transpose()).amax() > 1e-10 * (1.0 + shape.amax()) {
            return Err(GeometryError::InvalidEllipsoid(
                "shape is not symmetric".into(),
            ));
        }
        let shape = crate::linalg::symmetrize(&shape);
        if shape.clone().cholesky().is_none() {
            return Err(GeometryError::InvalidEllipsoid(
                "shape is not positive definite".into(),
            ));
        }
        Ok(Self {
            center,
            shape,
            level,
        })
    }

    pub fn center(&self) -> &DVector<f64> {
        &self.center
    }

    pub fn shape(&self) -> &DMatrix<f64> {
        &self.shape
    }

    pub fn level(&self) -> f64 {
        self.level
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    /// `(x − c)ᵀ·shape·(x − c)`.
    pub fn quadratic(&self, x: &DVector<f64>) -> f64 {
        let d = x - &self.center;
        d.dot(&(&self.shape * &d))
    }

    pub fn contains(&self, x: &DVector<f64>, rel_tol: f64) -> bool {
        self.quadratic(x) <= self.level * (1.0 + rel_tol)
    }

    /// Boundary point `c + sqrt(level)·L⁻ᵀu` for a unit vector `u`, where `shape = LLᵀ`.
    pub fn boundary_point(&self, u: &DVector<f64>) -> DVector<f64> {
        let chol = self
            .shape
            .clone()
            .cholesky()
            .expect("validated positive definite");
        let un = u / u.norm();
        let y = chol
            .l()
            .transpose()
            .solve_upper_triangular(&un)
            .expect("nonsingular factor");
        &self.center + y * self.level.sqrt()
    }

    /// `max dᵀx` over the ellipsoid.
    pub fn support(&self, d: &DVector<f64>) -> f64 {
        let chol = self
            .shape
            .clone()
            .cholesky()
            .expect("validated positive definite");
        let s = chol.solve(d);
        d.dot(&self.center) + (self.level * d.dot(&s)).max(0.0).sqrt()
    }
}

/// `n` unit directions spread over the sphere in `dim` dimensions.
pub fn unit_directions(dim: usize, n: usize) -> Vec<DVector<f64>> {
    let clean = |mut v: DVector<f64>| {
        for x in v.iter_mut() {
            if x.abs() < 1e-15 {
                *x = 0.0;
            }
        }
        v
    };
    match dim {
        1 => vec![
            DVector::from_element(1, 1.0),
            DVector::from_element(1, -1.0),
        ],
        2 => (0..n)
            .map(|k| {
                let t = 2.0 * PI * k as f64 / n as f64;
                clean(DVector::from_vec(vec![t.cos(), t.sin()]))
            })
            .collect(),
        3 => {
            // Fibonacci lattice on the sphere.
            let golden = PI * (3.0 - 5f64.sqrt());
            (0..n)
                .map(|k| {
                    let z = 1.0 - 2.0 * (k as f64 + 0.5) / n as f64;
                    let r = (1.0 - z * z).sqrt();
                    let t = golden * k as f64;
                    clean(DVector::from_vec(vec![r * t.cos(), r * t.sin(), z]))
                })
                .collect()
        }
        _ => {
            let mut dirs = Vec::new();
            for i in 0..dim {
                for s in [1.0, -1.0] {
                    let mut e = DVector::zeros(dim);
                    e[i] = s;
                    dirs.push(e);
                }
            }
            let mut mask = 0usize;
            while dirs.len() < n && mask < (1usize << dim.min(20)) {
                let d = DVector::from_fn(dim, |i, _| if mask >> i & 1 == 1 { -1.0 } else { 1.0 });
                dirs.push(&d / d.norm());
                mask += 1;
            }
            dirs
        }
    }
}

/// Outer polytope of `E` from tangent halfspaces at `n_dirs` directions.
pub fn ellipsoid_outer_polytope(e: &Ellipsoid, n_dirs: usize) -> Result<Polytope, GeometryError> {
    let n = e.dim();
    if n == 0 {
        return Err(GeometryError::InvalidEllipsoid(
            "zero-dimensional ellipsoid".into(),
        ));
    }
    if n_dirs < n + 1 {
        return Err(GeometryError::InvalidEllipsoid(format!(
            "{n_dirs} directions cannot bound a {n}-dimensional set"
        )));
    }
    let dirs = unit_directions(n, n_dirs);
    let mut a = DMatrix::zeros(dirs.len(), n);
    let mut b = DVector::zeros(dirs.len());
    for (i, d) in dirs.iter().enumerate() {
        a.row_mut(i).copy_from(&d.transpose());
        b[i] = e.support(d);
    }
    Polytope::new(a, b)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_ball() -> Ellipsoid {
        Ellipsoid::new(DVector::zeros(2), DMatrix::identity(2, 2), 1.0).unwrap()
    }

    #[test]
    fn four_directions_give_box() {
        let p = ellipsoid_outer_polytope(&unit_ball(), 4).unwrap();
        let b = Polytope::hypercube(2, 1.0);
        for x in [[1.0, 1.0], [-1.0, 1.0], [1.0, -1.0], [-1.0, -1.0]] {
            let x = DVector::from_row_slice(&x);
            assert!(p.contains(&x, 1e-12));
            assert!(b.contains(&x, 1e-12));
        }
        assert!(!p.contains(&DVector::from_vec(vec![1.01, 0.0]), 0.0));
    }

    #[test]
    fn octagon_vertices_radius() {
        let p = ellipsoid_outer_polytope(&unit_ball(), 8).unwrap();
        let vs = p.vertices().unwrap();
        assert_eq!(vs.points.len(), 8);
        let r = 1.0 / (PI / 8.0).cos();
        for v in &vs.points {
            assert!((v.norm() - r).abs() < 1e-12);
        }
    }

    #[test]
    fn scaled_level_recovers_unit_ball() {
        let e = Ellipsoid::new(DVector::zeros(2), DMatrix::identity(2, 2) * 0.15, 0.15).unwrap();
        let p = ellipsoid_outer_polytope(&e, 8).unwrap();
        let q = ellipsoid_outer_polytope(&unit_ball(), 8).unwrap();
        assert!((p.offsets() - q.offsets()).amax() < 1e-15);
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(Ellipsoid::new(DVector::zeros(2), -DMatrix::identity(2, 2), 1.0).is_err());
        assert!(Ellipsoid::new(DVector::zeros(2), DMatrix::identity(2, 2), 0.0).is_err());
        assert!(ellipsoid_outer_polytope(&unit_ball(), 2).is_err());
    }

    #[test]
    fn boundary_points_are_on_boundary() {
        let e = Ellipsoid::new(
            DVector::from_vec(vec![0.3, -1.0]),
            crate::linalg::mat_from_rows(&[vec![2.0, 0.4], vec![0.4, 0.7]]),
            0.5,
        )
        .unwrap();
        for k in 0..16 {
            let t = k as f64 * 0.4;
            let x = e.boundary_point(&DVector::from_vec(vec![t.cos(), t.sin()]));
            assert!((e.quadratic(&x) - 0.5).abs() < 1e-12);
        }
    }
}
