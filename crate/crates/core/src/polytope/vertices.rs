use nalgebra::{DMatrix, DVector, Matrix2, Matrix3, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use super::{remove_redundancy, Polytope};
use crate::error::GeometryError;

/// Extreme points of a bounded polytope.
#[derive(Debug, Clone, PartialEq)]
pub struct VertexSet {
    pub points: Vec<DVector<f64>>,
}

impl VertexSet {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn to_json(&self) -> VertexSetJson {
        VertexSetJson {
            points: self
                .points
                .iter()
                .map(|p| p.iter().cloned().collect())
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VertexSetJson {
    pub points: Vec<Vec<f64>>,
}

fn check_bounded(p: &Polytope) -> Result<(), GeometryError> {
    for i in 0..p.dim() {
        for s in [1.0, -1.0] {
            let mut e = DVector::zeros(p.dim());
            e[i] = s;
            p.support(&e)?;
        }
    }
    Ok(())
}

/// Extreme points of a bounded polytope of dimension one to three.
pub fn vertices(p: &Polytope) -> Result<VertexSet, GeometryError> {
    let dim = p.dim();
    if !(1..=3).contains(&dim) {
        return Err(GeometryError::DimensionUnsupported { dim });
    }
    check_bounded(p)?;
    match dim {
        1 => {
            let hi = p.support(&DVector::from_element(1, 1.0))?.value;
            let lo = -p.support(&DVector::from_element(1, -1.0))?.value;
            let mut points = vec![DVector::from_element(1, lo)];
            if hi - lo > 1e-12 * (1.0 + hi.abs().max(lo.abs())) {
                points.push(DVector::from_element(1, hi));
            }
            Ok(VertexSet { points })
        }
        2 => vertices_2d(p),
        _ => vertices_3d(p),
    }
}

fn dedup(points: &mut Vec<DVector<f64>>, tol: f64) {
    let mut out: Vec<DVector<f64>> = Vec::with_capacity(points.len());
    for q in points.drain(..) {
        if !out.iter().any(|o| (o - &q).amax() <= tol) {
            out.push(q);
        }
    }
    *points = out;
}

fn vertices_2d(p: &Polytope) -> Result<VertexSet, GeometryError> {
    let r = remove_redundancy(p)?;
    let a = r.normals();
    let b = r.offsets();
    let m = r.n_rows();
    // Facets sorted by normal angle; consecutive facets meet at a vertex.
    let mut order: Vec<usize> = (0..m).collect();
    let ang: Vec<f64> = (0..m).map(|i| a[(i, 1)].atan2(a[(i, 0)])).collect();
    order.sort_by(|&i, &j| ang[i].total_cmp(&ang[j]).then(i.cmp(&j)));
    let scale = 1.0 + b.amax();
    let mut points = Vec::with_capacity(m);
    if m == 1 {
        return Err(GeometryError::Unbounded);
    }
    for k in 0..m {
        let i = order[k];
        let j = order[(k + 1) % m];
        let mat = Matrix2::new(a[(i, 0)], a[(i, 1)], a[(j, 0)], a[(j, 1)]);
        let rhs = Vector2::new(b[i], b[j]);
        let Some(x) = mat.lu().solve(&rhs) else {
            continue;
        };
        let x = DVector::from_vec(vec![x[0], x[1]]);
        if r.violation(&x) <= 1e-9 * scale {
            points.push(x);
        }
    }
    dedup(&mut points, 1e-10 * scale);
    Ok(VertexSet { points })
}

fn vertices_3d(p: &Polytope) -> Result<VertexSet, GeometryError> {
    let r = remove_redundancy(p)?;
    let a: &DMatrix<f64> = r.normals();
    let b = r.offsets();
    let m = r.n_rows();
    let scale = 1.0 + b.amax();
    let mut points = Vec::new();
    for i in 0..m {
        for j in i + 1..m {
            for k in j + 1..m {
                let mat = Matrix3::from_fn(|rr, c| a[([i, j, k][rr], c)]);
                if mat.determinant().abs() < 1e-12 {
                    continue;
                }
                let Some(x) = mat.lu().solve(&Vector3::new(b[i], b[j], b[k])) else {
                    continue;
                };
                let x = DVector::from_vec(vec![x[0], x[1], x[2]]);
                if r.violation(&x) <= 1e-9 * scale {
                    points.push(x);
                }
            }
        }
    }
    dedup(&mut points, 1e-10 * scale);
    Ok(VertexSet { points })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::mat_from_rows;

    fn sorted(mut pts: Vec<DVector<f64>>) -> Vec<Vec<f64>> {
        let mut v: Vec<Vec<f64>> = pts
            .drain(..)
            .map(|p| p.iter().map(|x| (x * 1e9).round() / 1e9).collect())
            .collect();
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        v
    }

    #[test]
    fn box_vertices() {
        let vs = Polytope::hypercube(2, 1.0).vertices().unwrap();
        assert_eq!(
            sorted(vs.points),
            vec![
                vec![-1.0, -1.0],
                vec![-1.0, 1.0],
                vec![1.0, -1.0],
                vec![1.0, 1.0]
            ]
        );
    }

    #[test]
    fn triangle_vertices() {
        let t = Polytope::new(
            mat_from_rows(&[vec![-1.0, 0.0], vec![0.0, -1.0], vec![1.0, 1.0]]),
            DVector::from_vec(vec![0.0, 0.0, 1.0]),
        )
        .unwrap();
        assert_eq!(
            sorted(t.vertices().unwrap().points),
            vec![vec![0.0, 0.0], vec![0.0, 1.0], vec![1.0, 0.0]]
        );
    }

    #[test]
    fn cube_and_interval() {
        assert_eq!(Polytope::hypercube(3, 2.0).vertices().unwrap().len(), 8);
        let iv = Polytope::from_bounds(&[-0.5], &[2.0])
            .unwrap()
            .vertices()
            .unwrap();
        assert_eq!(sorted(iv.points), vec![vec![-0.5], vec![2.0]]);
    }

    #[test]
    fn unsupported_and_unbounded() {
        assert_eq!(
            Polytope::hypercube(4, 1.0).vertices(),
            Err(GeometryError::DimensionUnsupported { dim: 4 })
        );
        let half = Polytope::new(
            mat_from_rows(&[vec![1.0, 0.0], vec![-1.0, 0.0]]),
            DVector::from_vec(vec![1.0, 1.0]),
        )
        .unwrap();
        assert_eq!(half.vertices(), Err(GeometryError::Unbounded));
    }
}
