use nalgebra::{DMatrix, DVector};

use crate::error::{ControlError, GeometryError};
use crate::linalg::{inf_norm, symmetrize};
use crate::polytope::{lambda_contractive_shape, nonneg_factor, Polytope};

/// Mixed constraint `Fx + Gu ≤ 1` and the stabilizing gain of `u = Kx + v`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintData {
    pub f: DMatrix<f64>,
    pub g: DMatrix<f64>,
    pub k: DMatrix<f64>,
}

impl ConstraintData {
    pub fn new(f: DMatrix<f64>, g: DMatrix<f64>, k: DMatrix<f64>) -> Result<Self, ControlError> {
        if f.nrows() != g.nrows() || f.nrows() == 0 {
            return Err(ControlError::Config(
                "F and G must have the same nonzero row count".into(),
            ));
        }
        if k.shape() != (g.ncols(), f.ncols()) {
            return Err(ControlError::Config(format!(
                "gain is {:?}, expected {}x{}",
                k.shape(),
                g.ncols(),
                f.ncols()
            )));
        }
        Ok(Self { f, g, k })
    }

    /// Box constraints `|x_i| ≤ x_max`, `|u_i| ≤ u_max` written as `Fx + Gu ≤ 1`.
    pub fn from_boxes(x_max: &[f64], u_max: &[f64], k: DMatrix<f64>) -> Result<Self, ControlError> {
        let nx = x_max.len();
        let nu = u_max.len();
        let rows = 2 * (nx + nu);
        let mut f = DMatrix::zeros(rows, nx);
        let mut g = DMatrix::zeros(rows, nu);
        for (i, b) in x_max.iter().enumerate() {
            f[(2 * i, i)] = 1.0 / b;
            f[(2 * i + 1, i)] = -1.0 / b;
        }
        for (i, b) in u_max.iter().enumerate() {
            g[(2 * nx + 2 * i, i)] = 1.0 / b;
            g[(2 * nx + 2 * i + 1, i)] = -1.0 / b;
        }
        Self::new(f, g, k)
    }

    pub fn n_con(&self) -> usize {
        self.f.nrows()
    }

    /// `F + GK`.
    pub fn closed_loop_rows(&self) -> DMatrix<f64> {
        &self.f + &self.g * &self.k
    }

    /// `{x : (F + GK)x ≤ 1}`.
    pub fn closed_loop_set(&self) -> Result<Polytope, GeometryError> {
        let fk = self.closed_loop_rows();
        Polytope::new(fk.clone(), DVector::from_element(fk.nrows(), 1.0))
    }

    /// Largest component of `Fx + Gu − 1`.
    pub fn violation(&self, x: &DVector<f64>, u: &DVector<f64>) -> f64 {
        (&self.f * x + &self.g * u).add_scalar(-1.0).max()
    }
}

/// Tube shape `V` with `H·V = F + GK`, `H ≥ 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct TubeShape {
    pub v: DMatrix<f64>,
    pub h_static: DMatrix<f64>,
}

impl TubeShape {
    /// λ_c-contractive shape for the given vertex maps inside the closed-loop constraint set.
    pub fn synthesize(
        vertex_maps: &[DMatrix<f64>],
        constraints: &ConstraintData,
        lambda_c: f64,
    ) -> Result<Self, ControlError> {
        let seed = constraints.closed_loop_set()?;
        let v = lambda_contractive_shape(vertex_maps, lambda_c, &seed)?;
        Self::from_shape(v, constraints)
    }

    pub fn from_shape(v: DMatrix<f64>, constraints: &ConstraintData) -> Result<Self, ControlError> {
        let h_static = nonneg_factor(&v, &constraints.closed_loop_rows())?;
        Ok(Self { v, h_static })
    }

    pub fn n_v(&self) -> usize {
        self.v.nrows()
    }

    /// `‖H‖∞`.
    pub fn h_norm(&self) -> f64 {
        inf_norm(&self.h_static)
    }

    pub fn set(&self) -> Result<Polytope, GeometryError> {
        Polytope::new(self.v.clone(), DVector::from_element(self.n_v(), 1.0))
    }
}

/// Vertex maps of the current parameter set and their deviation from the nominal model.
#[derive(Debug, Clone, PartialEq)]
pub struct VertexTransitionData {
    pub thetas: Vec<DVector<f64>>,
    pub phi: Vec<DMatrix<f64>>,
    pub b: Vec<DMatrix<f64>>,
    pub dphi: Vec<DMatrix<f64>>,
    pub db: Vec<DMatrix<f64>>,
    pub h: Vec<DMatrix<f64>>,
    pub theta_hat: DVector<f64>,
    pub phi_hat: DMatrix<f64>,
    pub b_hat: DMatrix<f64>,
}

impl VertexTransitionData {
    pub fn n_c(&self) -> usize {
        self.phi.len()
    }

    /// `maxⱼ ‖Hʲ‖∞`.
    pub fn max_h_norm(&self) -> f64 {
        self.h.iter().map(inf_norm).fold(0.0, f64::max)
    }
}

/// Terminal set, tail horizon, tube bound and cost matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct TerminalIngredients {
    pub terminal_set: Polytope,
    /// `D ≥ 0` with `D·V = V_k` (rows of the terminal set normalized to offset one).
    pub d: DMatrix<f64>,
    pub gamma: f64,
    pub horizon_ext: usize,
    pub cost_w: DMatrix<f64>,
    pub gamma_lower: f64,
    pub gamma_upper: f64,
    /// Largest eigenvalue of `ΨʲᵀWΨʲ − W + Q̄` over the vertices.
    pub cost_residual: f64,
    /// Largest eigenvalue of `W − W_prev`, when a previous matrix existed.
    pub cost_order_gap: Option<f64>,
    pub source: TerminalSource,
}

/// Where the terminal set of an update came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminalSource {
    /// MRPI set of the current vertex maps.
    Fresh,
    /// The previous terminal set, searched again.
    Previous,
    /// No admissible horizon: the previous `(𝒵, M, γ)` were kept unchanged.
    Kept,
}

/// Stacked-input lift `ξ = (x, v₀, …, v_{N−1})`.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionLift {
    pub horizon: usize,
    pub n_x: usize,
    pub n_u: usize,
    pub shift_t: DMatrix<f64>,
    pub selector_e: DMatrix<f64>,
    pub qbar: DMatrix<f64>,
}

impl PredictionLift {
    pub fn new(horizon: usize, q: &DMatrix<f64>, r: &DMatrix<f64>, k: &DMatrix<f64>) -> Self {
        let n_x = q.nrows();
        let n_u = r.nrows();
        let nv = horizon * n_u;
        let mut shift_t = DMatrix::zeros(nv, nv);
        for i in 0..nv.saturating_sub(n_u) {
            shift_t[(i, i + n_u)] = 1.0;
        }
        let mut selector_e = DMatrix::zeros(n_u, nv);
        for i in 0..n_u.min(nv) {
            selector_e[(i, i)] = 1.0;
        }
        let d = n_x + nv;
        let mut qbar = DMatrix::zeros(d, d);
        let kt_r = k.transpose() * r;
        qbar.view_mut((0, 0), (n_x, n_x))
            .copy_from(&(q + &kt_r * k));
        let xr = &kt_r * &selector_e;
        qbar.view_mut((0, n_x), (n_x, nv)).copy_from(&xr);
        qbar.view_mut((n_x, 0), (nv, n_x))
            .copy_from(&xr.transpose());
        qbar.view_mut((n_x, n_x), (nv, nv))
            .copy_from(&(selector_e.transpose() * r * &selector_e));
        Self {
            horizon,
            n_x,
            n_u,
            shift_t,
            selector_e,
            qbar: symmetrize(&qbar),
        }
    }

    pub fn dim(&self) -> usize {
        self.n_x + self.horizon * self.n_u
    }

    /// `Ψ = [[φ, B·E], [0, T]]`.
    pub fn lift(&self, phi: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
        let nv = self.horizon * self.n_u;
        let mut psi = DMatrix::zeros(self.dim(), self.dim());
        psi.view_mut((0, 0), (self.n_x, self.n_x)).copy_from(phi);
        psi.view_mut((0, self.n_x), (self.n_x, nv))
            .copy_from(&(b * &self.selector_e));
        psi.view_mut((self.n_x, self.n_x), (nv, nv))
            .copy_from(&self.shift_t);
        psi
    }

    /// `ξ = (x, v)`.
    pub fn stack(&self, x: &DVector<f64>, v: &[DVector<f64>]) -> DVector<f64> {
        let mut xi = DVector::zeros(self.dim());
        xi.rows_mut(0, self.n_x).copy_from(x);
        for (i, vi) in v.iter().enumerate() {
            xi.rows_mut(self.n_x + i * self.n_u, self.n_u).copy_from(vi);
        }
        xi
    }
}

/// Optimizer of problem P at one time step.
#[derive(Debug, Clone, PartialEq)]
pub struct MpcSolution {
    pub v_seq: Vec<DVector<f64>>,
    /// `α₀ = 0, α₁, …, α_{N+M}`.
    pub alpha_seq: Vec<DVector<f64>>,
    pub z_seq: Vec<DVector<f64>>,
    pub cost: f64,
    pub iterations: usize,
    pub polished: bool,
    /// Largest violation of the assembled inequality rows.
    pub max_violation: f64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::mat_from_rows;

    #[test]
    fn lift_structure() {
        let q = DMatrix::identity(2, 2);
        let r = DMatrix::identity(1, 1);
        let k = mat_from_rows(&[vec![-0.4187, 1.1562]]);
        let lift = PredictionLift::new(3, &q, &r, &k);
        let v = vec![
            DVector::from_element(1, 1.0),
            DVector::from_element(1, 2.0),
            DVector::from_element(1, 3.0),
        ];
        let vv = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        assert_eq!(&lift.selector_e * &vv, DVector::from_element(1, 1.0));
        assert_eq!(&lift.shift_t * &vv, DVector::from_vec(vec![2.0, 3.0, 0.0]));
        // ξᵀQ̄ξ equals the stage cost with u = Kx + v₀.
        let x = DVector::from_vec(vec![0.7, -1.2]);
        let xi = lift.stack(&x, &v);
        let u = &k * &x + &v[0];
        let stage = x.dot(&x) + u.dot(&u);
        assert!((xi.dot(&(&lift.qbar * &xi)) - stage).abs() < 1e-12);
        assert!(crate::linalg::min_sym_eig(&lift.qbar) >= -1e-12);
    }

    #[test]
    fn box_constraints() {
        let k = mat_from_rows(&[vec![-0.4187, 1.1562]]);
        let c = ConstraintData::from_boxes(&[17.0, 17.0], &[4.0], k).unwrap();
        assert_eq!(c.n_con(), 6);
        let x = DVector::from_vec(vec![17.0, 0.0]);
        assert!(c.violation(&x, &DVector::zeros(1)).abs() < 1e-15);
        assert!(c.violation(&DVector::zeros(2), &DVector::from_element(1, -5.0)) > 0.2);
    }
}
