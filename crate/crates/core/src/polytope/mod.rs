//! H-representation polytopes, ellipsoids and invariant-set synthesis.

mod ellipsoid;
mod factor;
mod invariant;
mod vertices;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{GeometryError, SolverError};
use crate::solver::solve_standard;

pub use ellipsoid::{ellipsoid_outer_polytope, unit_directions, Ellipsoid};
pub use factor::nonneg_factor;
pub use invariant::{
    lambda_contractive_shape, lambda_contractive_shape_with, mrpi_set, mrpi_set_with,
    InvariantSettings, DEFAULT_MAX_ITER,
};
pub use vertices::{vertices, VertexSet};

/// Absolute tolerance of the per-row redundancy test.
pub const REDUNDANCY_TOL: f64 = 1e-8;

/// `{x : normals·x ≤ offsets}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Polytope {
    normals: DMatrix<f64>,
    offsets: DVector<f64>,
}

/// Value and maximizer of a support-function evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct Support {
    pub value: f64,
    pub maximizer: DVector<f64>,
}

impl Polytope {
    pub fn new(normals: DMatrix<f64>, offsets: DVector<f64>) -> Result<Self, GeometryError> {
        if normals.nrows() == 0 {
            return Err(GeometryError::InvalidPolytope("no rows".into()));
        }
        if normals.nrows() != offsets.len() {
            return Err(GeometryError::DimensionMismatch(format!(
                "{} normal rows but {} offsets",
                normals.nrows(),
                offsets.len()
            )));
        }
        if normals.iter().chain(offsets.iter()).any(|v| !v.is_finite()) {
            return Err(GeometryError::InvalidPolytope("non-finite entry".into()));
        }
        if let Some(i) = (0..normals.nrows()).find(|&i| normals.row(i).amax() == 0.0) {
            return Err(GeometryError::InvalidPolytope(format!(
                "row {i} of normals is zero"
            )));
        }
        Ok(Self { normals, offsets })
    }

    /// `{x : |x_i| ≤ r}`.
    pub fn hypercube(dim: usize, r: f64) -> Self {
        let mut a = DMatrix::zeros(2 * dim, dim);
        for i in 0..dim {
            a[(2 * i, i)] = 1.0;
            a[(2 * i + 1, i)] = -1.0;
        }
        Self {
            normals: a,
            offsets: DVector::from_element(2 * dim, r),
        }
    }

    /// Axis-aligned box `lo ≤ x ≤ hi`.
    pub fn from_bounds(lo: &[f64], hi: &[f64]) -> Result<Self, GeometryError> {
        if lo.len() != hi.len() || lo.is_empty() {
            return Err(GeometryError::DimensionMismatch(
                "bound vectors differ in length".into(),
            ));
        }
        let dim = lo.len();
        let mut p = Self::hypercube(dim, 0.0);
        for i in 0..dim {
            p.offsets[2 * i] = hi[i];
            p.offsets[2 * i + 1] = -lo[i];
        }
        Ok(p)
    }

    pub fn normals(&self) -> &DMatrix<f64> {
        &self.normals
    }

    pub fn offsets(&self) -> &DVector<f64> {
        &self.offsets
    }

    pub fn dim(&self) -> usize {
        self.normals.ncols()
    }

    pub fn n_rows(&self) -> usize {
        self.normals.nrows()
    }

    /// Largest constraint violation `max_i (a_iᵀx − b_i)`.
    pub fn violation(&self, x: &DVector<f64>) -> f64 {
        (&self.normals * x - &self.offsets).max()
    }

    pub fn contains(&self, x: &DVector<f64>, tol: f64) -> bool {
        self.violation(x) <= tol
    }

    /// `{x : normals·M·x ≤ offsets}`, the preimage under `x ↦ Mx`.
    pub fn preimage(&self, m: &DMatrix<f64>) -> Result<Self, GeometryError> {
        if m.nrows() != self.dim() {
            return Err(GeometryError::DimensionMismatch(
                "map rows differ from dimension".into(),
            ));
        }
        Self::new(&self.normals * m, self.offsets.clone())
    }

    /// Rescale every row to offset one. Requires the origin in the interior.
    pub fn normalized(&self) -> Result<Self, GeometryError> {
        if self.offsets.iter().any(|b| *b <= 0.0) {
            return Err(GeometryError::InvalidPolytope(
                "origin is not in the interior; rows cannot be normalized".into(),
            ));
        }
        let mut a = self.normals.clone();
        for i in 0..a.nrows() {
            let b = self.offsets[i];
            a.row_mut(i).scale_mut(1.0 / b);
        }
        Ok(Self {
            normals: a,
            offsets: DVector::from_element(self.n_rows(), 1.0),
        })
    }

    pub fn support(&self, c: &DVector<f64>) -> Result<Support, GeometryError> {
        support(self, c)
    }

    pub fn intersect(&self, other: &Polytope) -> Result<Polytope, GeometryError> {
        intersect(self, other)
    }

    pub fn remove_redundancy(&self) -> Result<Polytope, GeometryError> {
        remove_redundancy(self)
    }

    pub fn vertices(&self) -> Result<VertexSet, GeometryError> {
        vertices(self)
    }

    /// Center and radius of the largest inscribed ball; the radius is negative
    /// when the polytope is empty and capped at one.
    pub fn chebyshev(&self) -> Result<(DVector<f64>, f64), GeometryError> {
        let n = self.dim();
        let m = self.n_rows();
        let mut a = DMatrix::zeros(m + 1, n + 1);
        let mut b = DVector::zeros(m + 1);
        for i in 0..m {
            a.view_mut((i, 0), (1, n)).copy_from(&self.normals.row(i));
            a[(i, n)] = self.normals.row(i).norm();
            b[i] = self.offsets[i];
        }
        a[(m, n)] = 1.0;
        b[m] = 1.0;
        let aug = Polytope {
            normals: a,
            offsets: b,
        };
        let mut e = DVector::zeros(n + 1);
        e[n] = 1.0;
        let s = raw_support(&aug, &e)?;
        Ok((s.maximizer.rows(0, n).into_owned(), s.value))
    }

    pub fn is_empty(&self) -> Result<bool, GeometryError> {
        Ok(self.chebyshev()?.1 < -1e-12)
    }

    /// Max over x in the polytope of `‖x‖∞`.
    pub fn inf_radius(&self) -> Result<f64, GeometryError> {
        let mut r: f64 = 0.0;
        for i in 0..self.dim() {
            let mut e = DVector::zeros(self.dim());
            e[i] = 1.0;
            r = r.max(self.support(&e)?.value);
            e[i] = -1.0;
            r = r.max(self.support(&e)?.value);
        }
        Ok(r)
    }
}

fn raw_support(p: &Polytope, c: &DVector<f64>) -> Result<Support, SolverError> {
    // Dual of max cᵀx, Ax ≤ b: min bᵀy, Aᵀy = c, y ≥ 0. Its duals are the maximizer.
    let at = p.normals.transpose();
    let s = solve_standard(&at, c, &p.offsets)?;
    Ok(Support {
        value: s.value,
        maximizer: s.duals,
    })
}

/// `max cᵀx` over `P` with a maximizer.
pub fn support(p: &Polytope, c: &DVector<f64>) -> Result<Support, GeometryError> {
    if c.len() != p.dim() {
        return Err(GeometryError::DimensionMismatch(format!(
            "direction has length {}, polytope dimension is {}",
            c.len(),
            p.dim()
        )));
    }
    match raw_support(p, c) {
        Ok(s) => Ok(s),
        // Dual infeasible: primal unbounded unless the set is empty.
        Err(SolverError::Infeasible) => {
            if p.is_empty()? {
                Err(GeometryError::Infeasible)
            } else {
                Err(GeometryError::Unbounded)
            }
        }
        Err(SolverError::Unbounded) => Err(GeometryError::Infeasible),
        Err(e) => Err(e.into()),
    }
}

/// Row concatenation followed by redundancy removal.
pub fn intersect(p1: &Polytope, p2: &Polytope) -> Result<Polytope, GeometryError> {
    if p1.dim() != p2.dim() {
        return Err(GeometryError::DimensionMismatch(format!(
            "intersecting dimensions {} and {}",
            p1.dim(),
            p2.dim()
        )));
    }
    let cat = Polytope {
        normals: crate::linalg::vstack(&[&p1.normals, &p2.normals]),
        offsets: crate::linalg::vcat(&[&p1.offsets, &p2.offsets]),
    };
    if cat.is_empty()? {
        return Err(GeometryError::EmptyIntersection);
    }
    remove_redundancy(&cat)
}

/// Drop every row implied by the others, scanning rows in order.
pub fn remove_redundancy(p: &Polytope) -> Result<Polytope, GeometryError> {
    if p.is_empty()? {
        return Err(GeometryError::Infeasible);
    }
    let m = p.n_rows();
    let mut keep = vec![true; m];
    for i in 0..m {
        let kept: Vec<usize> = (0..m).filter(|&k| keep[k]).collect();
        if kept.len() == 1 {
            break;
        }
        if is_row_redundant(p, &kept, i)? {
            keep[i] = false;
        }
    }
    let rows: Vec<usize> = (0..m).filter(|&k| keep[k]).collect();
    Ok(p.select_rows(&rows))
}

/// Whether row `i` is implied by the rows in `subset` (which contains `i`).
pub(crate) fn is_row_redundant(
    p: &Polytope,
    subset: &[usize],
    i: usize,
) -> Result<bool, GeometryError> {
    is_row_redundant_tol(p, subset, i, REDUNDANCY_TOL)
}

pub(crate) fn is_row_redundant_tol(
    p: &Polytope,
    subset: &[usize],
    i: usize,
    tol: f64,
) -> Result<bool, GeometryError> {
    let mut q = p.select_rows(subset);
    let pos = subset.iter().position(|&k| k == i).expect("row in subset");
    let b = p.offsets[i];
    let relax = b.abs().max(1.0);
    q.offsets[pos] = b + relax;
    let a = p.normals.row(i).transpose();
    let nrm = a.norm();
    let s = support(&q, &a)?;
    Ok(s.value / nrm <= b / nrm + tol)
}

impl Polytope {
    pub(crate) fn select_rows(&self, rows: &[usize]) -> Polytope {
        let n = self.dim();
        let normals = DMatrix::from_fn(rows.len(), n, |r, j| self.normals[(rows[r], j)]);
        let offsets = DVector::from_fn(rows.len(), |r, _| self.offsets[rows[r]]);
        Polytope { normals, offsets }
    }

    pub(crate) fn push_row(&mut self, a: &DVector<f64>, b: f64) {
        let m = self.n_rows();
        let n = self.dim();
        let mut normals = DMatrix::zeros(m + 1, n);
        normals.view_mut((0, 0), (m, n)).copy_from(&self.normals);
        normals.row_mut(m).copy_from(&a.transpose());
        self.normals = normals;
        self.offsets = self.offsets.clone().push(b);
    }
}

/// Serializable H-representation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolytopeJson {
    pub normals: Vec<Vec<f64>>,
    pub offsets: Vec<f64>,
}

impl From<&Polytope> for PolytopeJson {
    fn from(p: &Polytope) -> Self {
        Self {
            normals: crate::linalg::mat_to_rows(&p.normals),
            offsets: p.offsets.iter().cloned().collect(),
        }
    }
}

impl TryFrom<PolytopeJson> for Polytope {
    type Error = GeometryError;

    fn try_from(j: PolytopeJson) -> Result<Self, Self::Error> {
        let n = j.normals.first().map_or(0, |r| r.len());
        if j.normals.iter().any(|r| r.len() != n) {
            return Err(GeometryError::DimensionMismatch("ragged normals".into()));
        }
        Polytope::new(
            crate::linalg::mat_from_rows(&j.normals),
            DVector::from_vec(j.offsets),
        )
    }
}
