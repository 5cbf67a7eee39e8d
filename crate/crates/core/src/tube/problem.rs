use nalgebra::{DMatrix, DVector};

use super::types::{
    ConstraintData, MpcSolution, TerminalIngredients, TubeShape, VertexTransitionData,
};
use super::vertex::nominal_rollout;
use crate::error::{ControlError, SolverError};
use crate::solver::{solve_qp_with, QpSettings, QuadraticProgram};

/// Problem P at a fixed set of ingredients, affine in the measured state.
///
/// Decision vector `d = (v₀, …, v_{N−1}, α₁, …, α_{N+M})` with `α₀ = 0`; the
/// nominal states are eliminated through `z_l = P_l x + S_l v`. The
/// inequalities read `A·d ≤ b₀ − C·x`, the cost is `½dᵀPd + (Lx)ᵀd + xᵀW_xx x`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemTemplate {
    pub horizon: usize,
    pub horizon_ext: usize,
    pub n_x: usize,
    pub n_u: usize,
    pub n_v: usize,
    pub a: DMatrix<f64>,
    pub b0: DVector<f64>,
    pub cx: DMatrix<f64>,
    pub hessian: DMatrix<f64>,
    pub linear_x: DMatrix<f64>,
    pub w_xx: DMatrix<f64>,
    pub phi_hat: DMatrix<f64>,
    pub b_hat: DMatrix<f64>,
}

struct RowBuilder {
    a: Vec<DVector<f64>>,
    b: Vec<f64>,
    c: Vec<DVector<f64>>,
    n_dec: usize,
    n_x: usize,
}

impl RowBuilder {
    fn block(&mut self, rows: usize) -> (DMatrix<f64>, DMatrix<f64>) {
        (
            DMatrix::zeros(rows, self.n_dec),
            DMatrix::zeros(rows, self.n_x),
        )
    }

    fn push(&mut self, a: DMatrix<f64>, c: DMatrix<f64>, rhs: f64) {
        for i in 0..a.nrows() {
            self.a.push(a.row(i).transpose());
            self.c.push(c.row(i).transpose());
            self.b.push(rhs);
        }
    }
}

impl ProblemTemplate {
    pub fn n_dec(&self) -> usize {
        self.a.ncols()
    }

    pub fn n_rows(&self) -> usize {
        self.a.nrows()
    }

    fn n_inputs(&self) -> usize {
        self.horizon * self.n_u
    }

    /// Assemble the tube, terminal and sign constraints with the cost `ξᵀWξ`.
    pub fn assemble(
        data: &VertexTransitionData,
        tube: &TubeShape,
        constraints: &ConstraintData,
        terminal: &TerminalIngredients,
        horizon: usize,
    ) -> Result<Self, ControlError> {
        if horizon == 0 {
            return Err(ControlError::Config(
                "prediction horizon must be positive".into(),
            ));
        }
        let n_x = data.phi_hat.nrows();
        let n_u = data.b_hat.ncols();
        let n_v = tube.n_v();
        let m = terminal.horizon_ext;
        let len = horizon + m;
        let n_in = horizon * n_u;
        let n_dec = n_in + len * n_v;
        let alpha = |i: usize| n_in + (i - 1) * n_v;
        let input = |l: usize| l * n_u;

        // z_l = P_l x + S_l v.
        let mut p_l = DMatrix::identity(n_x, n_x);
        let mut s_l = DMatrix::zeros(n_x, n_dec);
        let fk = constraints.closed_loop_rows();
        let mut rows = RowBuilder {
            a: Vec::new(),
            b: Vec::new(),
            c: Vec::new(),
            n_dec,
            n_x,
        };
        let vdphi: Vec<DMatrix<f64>> = data.dphi.iter().map(|d| &tube.v * d).collect();
        let vdb: Vec<DMatrix<f64>> = data.db.iter().map(|d| &tube.v * d).collect();

        for l in 0..len {
            // Hα_l + (F+GK)z_l + Gv_l ≤ 1.
            let (mut a, mut c) = rows.block(constraints.n_con());
            a += &fk * &s_l;
            c += &fk * &p_l;
            if l > 0 {
                a.view_mut((0, alpha(l)), (constraints.n_con(), n_v))
                    .copy_from(&tube.h_static);
            }
            if l < horizon {
                let mut blk = a.view_mut((0, input(l)), (constraints.n_con(), n_u));
                blk += &constraints.g;
            }
            rows.push(a, c, 1.0);

            // Hʲα_l + V(Δφʲz_l + ΔBʲv_l) − α_{l+1} ≤ 0.
            for j in 0..data.n_c() {
                let (mut a, mut c) = rows.block(n_v);
                a += &vdphi[j] * &s_l;
                c += &vdphi[j] * &p_l;
                if l > 0 {
                    let mut blk = a.view_mut((0, alpha(l)), (n_v, n_v));
                    blk += &data.h[j];
                }
                if l < horizon {
                    let mut blk = a.view_mut((0, input(l)), (n_v, n_u));
                    blk += &vdb[j];
                }
                let mut blk = a.view_mut((0, alpha(l + 1)), (n_v, n_v));
                blk -= DMatrix::<f64>::identity(n_v, n_v);
                rows.push(a, c, 0.0);
            }

            if l == horizon {
                terminal_rows(&mut rows, terminal, &p_l, &s_l, n_v, alpha(l))?;
            }

            let next_p = &data.phi_hat * &p_l;
            let mut next_s = &data.phi_hat * &s_l;
            if l < horizon {
                let mut blk = next_s.view_mut((0, input(l)), (n_x, n_u));
                blk += &data.b_hat;
            }
            p_l = next_p;
            s_l = next_s;
        }
        if len == horizon {
            terminal_rows(&mut rows, terminal, &p_l, &s_l, n_v, alpha(len))?;
        }

        // α_{N+M} ≤ γ and α ≥ 0.
        let (mut a, c) = rows.block(n_v);
        a.view_mut((0, alpha(len)), (n_v, n_v)).fill_with_identity();
        rows.push(a, c, terminal.gamma);
        for i in 1..=len {
            let (mut a, c) = rows.block(n_v);
            let mut blk = a.view_mut((0, alpha(i)), (n_v, n_v));
            blk -= DMatrix::<f64>::identity(n_v, n_v);
            rows.push(a, c, 0.0);
        }

        let w = &terminal.cost_w;
        if w.shape() != (n_x + n_in, n_x + n_in) {
            return Err(ControlError::Config(
                "cost matrix does not match the horizon".into(),
            ));
        }
        let mut hessian = DMatrix::zeros(n_dec, n_dec);
        hessian
            .view_mut((0, 0), (n_in, n_in))
            .copy_from(&(w.view((n_x, n_x), (n_in, n_in)) * 2.0));
        let hessian = (&hessian + hessian.transpose()) * 0.5;
        let mut linear_x = DMatrix::zeros(n_dec, n_x);
        linear_x
            .view_mut((0, 0), (n_in, n_x))
            .copy_from(&(w.view((n_x, 0), (n_in, n_x)) * 2.0));

        let n_rows = rows.b.len();
        let a = DMatrix::from_fn(n_rows, n_dec, |i, j| rows.a[i][j]);
        let cx = DMatrix::from_fn(n_rows, n_x, |i, j| rows.c[i][j]);
        Ok(Self {
            horizon,
            horizon_ext: m,
            n_x,
            n_u,
            n_v,
            a,
            b0: DVector::from_vec(rows.b),
            cx,
            hessian,
            linear_x,
            w_xx: w.view((0, 0), (n_x, n_x)).into_owned(),
            phi_hat: data.phi_hat.clone(),
            b_hat: data.b_hat.clone(),
        })
    }

    /// QP at the measured state.
    pub fn instantiate(&self, x: &DVector<f64>) -> QuadraticProgram {
        let rhs = &self.b0 - &self.cx * x;
        QuadraticProgram::new(self.hessian.clone(), &self.linear_x * x)
            .with_ineq(self.a.clone(), rhs)
    }

    /// Largest component of `A·d − (b₀ − C·x)`.
    pub fn violation(&self, x: &DVector<f64>, d: &DVector<f64>) -> f64 {
        (&self.a * d - (&self.b0 - &self.cx * x)).max()
    }

    /// Cost `ξᵀWξ` of a decision vector.
    pub fn cost(&self, x: &DVector<f64>, d: &DVector<f64>) -> f64 {
        0.5 * d.dot(&(&self.hessian * d)) + (&self.linear_x * x).dot(d) + x.dot(&(&self.w_xx * x))
    }

    /// Split a decision vector into inputs, tube sizes (with `α₀ = 0`) and nominal states.
    pub fn unpack(
        &self,
        x: &DVector<f64>,
        d: &DVector<f64>,
    ) -> (Vec<DVector<f64>>, Vec<DVector<f64>>, Vec<DVector<f64>>) {
        let n_in = self.n_inputs();
        let len = self.horizon + self.horizon_ext;
        let v: Vec<DVector<f64>> = (0..self.horizon)
            .map(|l| d.rows(l * self.n_u, self.n_u).into_owned())
            .collect();
        let mut alpha = vec![DVector::zeros(self.n_v)];
        alpha.extend((0..len).map(|i| d.rows(n_in + i * self.n_v, self.n_v).into_owned()));
        let z = nominal_rollout(&self.phi_hat, &self.b_hat, x, &v, len);
        (v, alpha, z)
    }

    /// Solve problem P at `x`.
    pub fn solve(
        &self,
        x: &DVector<f64>,
        settings: &QpSettings,
    ) -> Result<MpcSolution, SolverError> {
        let qp = self.instantiate(x);
        let sol = solve_qp_with(&qp, settings)?;
        let (v_seq, alpha_seq, z_seq) = self.unpack(x, &sol.x);
        Ok(MpcSolution {
            v_seq,
            alpha_seq,
            z_seq,
            cost: self.cost(x, &sol.x),
            iterations: sol.iterations,
            polished: sol.polished,
            max_violation: self.violation(x, &sol.x),
        })
    }
}

/// `V_k z_N + D α_N ≤ 1`.
fn terminal_rows(
    rows: &mut RowBuilder,
    terminal: &TerminalIngredients,
    p_n: &DMatrix<f64>,
    s_n: &DMatrix<f64>,
    n_v: usize,
    alpha_col: usize,
) -> Result<(), ControlError> {
    let z = terminal.terminal_set.normalized()?;
    let vk = z.normals();
    let (mut a, mut c) = rows.block(vk.nrows());
    a += vk * s_n;
    c += vk * p_n;
    let mut blk = a.view_mut((0, alpha_col), (vk.nrows(), n_v));
    blk += &terminal.d;
    rows.push(a, c, 1.0);
    Ok(())
}
