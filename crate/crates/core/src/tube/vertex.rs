use nalgebra::{DMatrix, DVector};

use super::types::{TubeShape, VertexTransitionData};
use crate::error::{ControlError, GeometryError};
use crate::estimator::ParametricModel;
use crate::polytope::{nonneg_factor, Polytope};

/// Vertex maps `φʲ = A(θʲ) + B(θʲ)K`, deviations from the nominal model at
/// `θ̂` and the tube factors `Hʲ` with `HʲV = Vφʲ`.
pub fn build_vertex_data(
    model: &ParametricModel,
    k: &DMatrix<f64>,
    theta_hat: &DVector<f64>,
    vertices: &[DVector<f64>],
    tube: &TubeShape,
) -> Result<VertexTransitionData, ControlError> {
    if vertices.is_empty() {
        return Err(ControlError::Config("parameter set has no vertices".into()));
    }
    let phi_hat = model.closed_loop(theta_hat, k);
    let b_hat = model.b(theta_hat);
    let mut data = VertexTransitionData {
        thetas: vertices.to_vec(),
        phi: Vec::with_capacity(vertices.len()),
        b: Vec::with_capacity(vertices.len()),
        dphi: Vec::with_capacity(vertices.len()),
        db: Vec::with_capacity(vertices.len()),
        h: Vec::with_capacity(vertices.len()),
        theta_hat: theta_hat.clone(),
        phi_hat: phi_hat.clone(),
        b_hat: b_hat.clone(),
    };
    for theta in vertices {
        let phi = model.closed_loop(theta, k);
        let b = model.b(theta);
        let h = nonneg_factor(&tube.v, &(&tube.v * &phi))?;
        data.dphi.push(&phi - &phi_hat);
        data.db.push(&b - &b_hat);
        data.phi.push(phi);
        data.b.push(b);
        data.h.push(h);
    }
    let norm = data.max_h_norm();
    if norm >= 1.0 {
        return Err(GeometryError::NotContractive {
            lambda: norm,
            iterations: 0,
        }
        .into());
    }
    Ok(data)
}

/// `z₊ = φ̂z + B̂v` from `z₀ = x` over `len` steps, with `v = 0` beyond the sequence.
pub fn nominal_rollout(
    phi_hat: &DMatrix<f64>,
    b_hat: &DMatrix<f64>,
    x: &DVector<f64>,
    v_seq: &[DVector<f64>],
    len: usize,
) -> Vec<DVector<f64>> {
    let mut z = Vec::with_capacity(len + 1);
    z.push(x.clone());
    for l in 0..len {
        let mut next = phi_hat * &z[l];
        if let Some(v) = v_seq.get(l) {
            next += b_hat * v;
        }
        z.push(next);
    }
    z
}

/// Row-wise maxima over `(φʲ)ˡ𝒵` used by the tube-bound conditions.
#[derive(Debug, Clone, PartialEq)]
pub struct SupportTriplet {
    /// `max (F + GK)z`.
    pub f: DVector<f64>,
    /// `max V(φʲ − φ̂)z`.
    pub c: DVector<f64>,
    /// `max Vφʲ(z₁ − z₂)`.
    pub g: DVector<f64>,
}

fn row_supports(
    z: &Polytope,
    power: &DMatrix<f64>,
    rows: &DMatrix<f64>,
) -> Result<DVector<f64>, GeometryError> {
    let mut out = DVector::zeros(rows.nrows());
    for i in 0..rows.nrows() {
        let dir = power.transpose() * rows.row(i).transpose();
        out[i] = z.support(&dir)?.value;
    }
    Ok(out)
}

fn row_widths(
    z: &Polytope,
    power: &DMatrix<f64>,
    rows: &DMatrix<f64>,
) -> Result<DVector<f64>, GeometryError> {
    let mut out = DVector::zeros(rows.nrows());
    for i in 0..rows.nrows() {
        let dir = power.transpose() * rows.row(i).transpose();
        out[i] = z.support(&dir)?.value + z.support(&-dir)?.value;
    }
    Ok(out)
}

/// Triplets for each vertex given the precomputed powers `(φʲ)ˡ`.
pub(crate) fn support_triplet_with_powers(
    z: &Polytope,
    data: &VertexTransitionData,
    tube: &TubeShape,
    closed_loop_rows: &DMatrix<f64>,
    powers: &[DMatrix<f64>],
) -> Result<Vec<SupportTriplet>, GeometryError> {
    let mut out = Vec::with_capacity(data.n_c());
    for (j, p) in powers.iter().enumerate() {
        let f = row_supports(z, p, closed_loop_rows)?;
        let c = row_supports(z, p, &(&tube.v * &data.dphi[j]))?;
        let g = row_widths(z, p, &(&tube.v * &data.phi[j]))?;
        out.push(SupportTriplet { f, c, g });
    }
    Ok(out)
}

/// `(f̄ʲ, c̄ʲ, ḡʲ)` over `𝒵ʲ_l = (φʲ)ˡ𝒵` for every vertex `j`.
pub fn support_triplet(
    z: &Polytope,
    data: &VertexTransitionData,
    tube: &TubeShape,
    closed_loop_rows: &DMatrix<f64>,
    l: usize,
) -> Result<Vec<SupportTriplet>, GeometryError> {
    let powers: Vec<DMatrix<f64>> = data.phi.iter().map(|p| p.pow(l as u32)).collect();
    support_triplet_with_powers(z, data, tube, closed_loop_rows, &powers)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::mat_from_rows;
    use crate::tube::types::ConstraintData;

    fn scalar_model(a: f64, da: f64) -> ParametricModel {
        ParametricModel::new(
            DMatrix::from_element(1, 1, a),
            DMatrix::from_element(1, 1, 0.0),
            vec![DMatrix::from_element(1, 1, da)],
            vec![DMatrix::from_element(1, 1, 0.0)],
        )
        .unwrap()
    }

    fn scalar_tube() -> (TubeShape, ConstraintData) {
        let c = ConstraintData::from_boxes(&[1.0], &[1.0], DMatrix::zeros(1, 1)).unwrap();
        let v = mat_from_rows(&[vec![1.0], vec![-1.0]]);
        (TubeShape::from_shape(v, &c).unwrap(), c)
    }

    #[test]
    fn single_vertex_has_no_deviation() {
        let m = scalar_model(0.5, 0.1);
        let (tube, _) = scalar_tube();
        let th = DVector::from_element(1, 0.3);
        let d = build_vertex_data(
            &m,
            &DMatrix::zeros(1, 1),
            &th,
            std::slice::from_ref(&th),
            &tube,
        )
        .unwrap();
        assert_eq!(d.dphi[0], DMatrix::zeros(1, 1));
        assert_eq!(d.db[0], DMatrix::zeros(1, 1));
    }

    #[test]
    fn scalar_factor_half() {
        let m = scalar_model(0.5, 0.0);
        let (tube, _) = scalar_tube();
        let th = DVector::zeros(1);
        let d = build_vertex_data(
            &m,
            &DMatrix::zeros(1, 1),
            &th,
            std::slice::from_ref(&th),
            &tube,
        )
        .unwrap();
        assert!((&d.h[0] - DMatrix::identity(2, 2) * 0.5).amax() < 1e-15);
        assert!((d.max_h_norm() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn rollout_cases() {
        let z = nominal_rollout(
            &DMatrix::identity(2, 2),
            &DMatrix::zeros(2, 1),
            &DVector::zeros(2),
            &[],
            3,
        );
        assert!(z.iter().all(|v| v.amax() == 0.0));
        let x = DVector::from_vec(vec![1.0, -2.0]);
        let z = nominal_rollout(
            &DMatrix::identity(2, 2),
            &DMatrix::zeros(2, 1),
            &x,
            &[DVector::zeros(1)],
            1,
        );
        assert_eq!(z[1], x);
    }

    #[test]
    fn triplet_cases() {
        let m = scalar_model(0.5, 0.0);
        let (tube, c) = scalar_tube();
        let th = DVector::zeros(1);
        let d = build_vertex_data(
            &m,
            &DMatrix::zeros(1, 1),
            &th,
            std::slice::from_ref(&th),
            &tube,
        )
        .unwrap();
        let z = Polytope::hypercube(1, 1.0);
        let t = support_triplet(&z, &d, &tube, &c.closed_loop_rows(), 0).unwrap();
        assert!(t[0].c.amax() == 0.0);
        assert!((&t[0].g - DVector::from_element(2, 1.0)).amax() < 1e-15);
    }
}
