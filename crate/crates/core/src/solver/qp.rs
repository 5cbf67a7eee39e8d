//! Dense primal-dual interior-point method (Mehrotra predictor-corrector) for
//! convex quadratic programs, followed by an active-set polish.

use nalgebra::{DMatrix, DVector};

use super::lp::Constraints;
use crate::error::SolverError;

/// `min ½xᵀPx + qᵀx` subject to `Gx ≤ h` and `Ax = b`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticProgram {
    pub hessian: DMatrix<f64>,
    pub linear: DVector<f64>,
    pub ineq_constraints: Constraints,
    pub eq_constraints: Constraints,
}

impl QuadraticProgram {
    pub fn new(hessian: DMatrix<f64>, linear: DVector<f64>) -> Self {
        let n = linear.len();
        Self {
            hessian,
            linear,
            ineq_constraints: Constraints::none(n),
            eq_constraints: Constraints::none(n),
        }
    }

    pub fn with_ineq(mut self, matrix: DMatrix<f64>, rhs: DVector<f64>) -> Self {
        self.ineq_constraints = Constraints::new(matrix, rhs);
        self
    }

    pub fn with_eq(mut self, matrix: DMatrix<f64>, rhs: DVector<f64>) -> Self {
        self.eq_constraints = Constraints::new(matrix, rhs);
        self
    }

    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.hessian * x)) + self.linear.dot(x)
    }

    fn validate(&self) -> Result<(), SolverError> {
        let n = self.linear.len();
        if self.hessian.shape() != (n, n) {
            return Err(SolverError::Malformed(format!(
                "hessian is {:?}, expected {n}x{n}",
                self.hessian.shape()
            )));
        }
        let asym = (&self.hessian - self.hessian.transpose()).amax();
        if asym > 1e-10 * (1.0 + self.hessian.amax()) {
            return Err(SolverError::Malformed(format!(
                "hessian asymmetric by {asym:e}"
            )));
        }
        for (name, c) in [
            ("eq", &self.eq_constraints),
            ("ineq", &self.ineq_constraints),
        ] {
            if c.matrix.ncols() != n || c.matrix.nrows() != c.rhs.len() {
                return Err(SolverError::Malformed(format!(
                    "{name} block has inconsistent dimensions"
                )));
            }
        }
        Ok(())
    }
}

/// Solver parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct QpSettings {
    /// Relative tolerance on residuals and complementarity.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Threshold for primal/dual infeasibility certificates.
    pub certificate_tolerance: f64,
    pub polish: bool,
}

impl Default for QpSettings {
    fn default() -> Self {
        Self {
            tolerance: 1e-10,
            max_iterations: 100,
            certificate_tolerance: 1e-7,
            polish: true,
        }
    }
}

/// Optimal primal-dual pair.
#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub x: DVector<f64>,
    pub value: f64,
    pub ineq_duals: DVector<f64>,
    pub eq_duals: DVector<f64>,
    pub iterations: usize,
    pub polished: bool,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub gap: f64,
}

/// Solve with default settings.
pub fn solve_qp(qp: &QuadraticProgram) -> Result<QpSolution, SolverError> {
    solve_qp_with(qp, &QpSettings::default())
}

struct SparseRows {
    rows: Vec<Vec<(usize, f64)>>,
    n: usize,
}

impl SparseRows {
    fn new(m: &DMatrix<f64>) -> Self {
        let rows = (0..m.nrows())
            .map(|i| {
                (0..m.ncols())
                    .filter_map(|j| {
                        let v = m[(i, j)];
                        (v != 0.0).then_some((j, v))
                    })
                    .collect()
            })
            .collect();
        Self { rows, n: m.ncols() }
    }

    fn mul(&self, x: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(
            self.rows.len(),
            self.rows
                .iter()
                .map(|r| r.iter().map(|&(j, v)| v * x[j]).sum::<f64>()),
        )
    }

    fn tmul(&self, z: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.n);
        for (i, r) in self.rows.iter().enumerate() {
            let zi = z[i];
            if zi != 0.0 {
                for &(j, v) in r {
                    out[j] += v * zi;
                }
            }
        }
        out
    }

    /// Accumulate `Gᵀ diag(d) G` into `k`.
    fn add_gram(&self, d: &DVector<f64>, k: &mut DMatrix<f64>) {
        for (i, r) in self.rows.iter().enumerate() {
            let di = d[i];
            for &(a, va) in r {
                let f = di * va;
                for &(b, vb) in r {
                    k[(a, b)] += f * vb;
                }
            }
        }
    }
}

struct Kkt {
    chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
    /// Cholesky factor of `A K⁻¹ Aᵀ` and `K⁻¹Aᵀ` when equalities are present.
    schur: Option<(nalgebra::Cholesky<f64, nalgebra::Dyn>, DMatrix<f64>)>,
}

impl Kkt {
    fn factor(
        p: &DMatrix<f64>,
        g: &SparseRows,
        d: &DVector<f64>,
        a: &DMatrix<f64>,
    ) -> Result<Self, SolverError> {
        let n = p.nrows();
        let mut k = p.clone();
        g.add_gram(d, &mut k);
        let scale = (0..n).fold(1.0_f64, |acc, i| acc.max(k[(i, i)].abs()));
        let mut reg = 1e-13 * scale;
        let chol = loop {
            let mut kr = k.clone();
            for i in 0..n {
                kr[(i, i)] += reg;
            }
            if let Some(c) = kr.cholesky() {
                break c;
            }
            reg *= 100.0;
            if reg > 1e-2 * scale {
                return Err(SolverError::Malformed(
                    "KKT matrix is not positive definite".into(),
                ));
            }
        };
        let schur = if a.nrows() > 0 {
            let kia = chol.solve(&a.transpose());
            let s = a * &kia;
            let sscale = (0..s.nrows()).fold(1.0_f64, |acc, i| acc.max(s[(i, i)].abs()));
            let mut sreg = 1e-13 * sscale;
            let sc = loop {
                let mut sr = s.clone();
                for i in 0..sr.nrows() {
                    sr[(i, i)] += sreg;
                }
                if let Some(c) = sr.cholesky() {
                    break c;
                }
                sreg *= 100.0;
                if sreg > 1e-2 * sscale {
                    return Err(SolverError::Malformed(
                        "equality constraints are rank deficient".into(),
                    ));
                }
            };
            Some((sc, kia))
        } else {
            None
        };
        Ok(Self { chol, schur })
    }

    /// Solve `[K Aᵀ; A 0][dx; dy] = [r1; r2]`.
    fn solve(
        &self,
        a: &DMatrix<f64>,
        r1: &DVector<f64>,
        r2: &DVector<f64>,
    ) -> (DVector<f64>, DVector<f64>) {
        match &self.schur {
            None => (self.chol.solve(r1), DVector::zeros(0)),
            Some((sc, kia)) => {
                let kr = self.chol.solve(r1);
                let dy = sc.solve(&(a * &kr - r2));
                let dx = kr - kia * &dy;
                (dx, dy)
            }
        }
    }
}

fn max_step(v: &DVector<f64>, dv: &DVector<f64>) -> f64 {
    let mut a = f64::INFINITY;
    for i in 0..v.len() {
        if dv[i] < 0.0 {
            a = a.min(-v[i] / dv[i]);
        }
    }
    a
}

/// Solve with explicit settings.
pub fn solve_qp_with(
    qp: &QuadraticProgram,
    settings: &QpSettings,
) -> Result<QpSolution, SolverError> {
    qp.validate()?;
    let n = qp.linear.len();
    let p = &qp.hessian;
    let q = &qp.linear;
    let gs = SparseRows::new(&qp.ineq_constraints.matrix);
    let h = &qp.ineq_constraints.rhs;
    let a = &qp.eq_constraints.matrix;
    let b = &qp.eq_constraints.rhs;
    let m = h.len();
    let me = b.len();

    let hnorm = h.amax().max(if me > 0 { b.amax() } else { 0.0 });
    let qnorm = if n > 0 { q.amax() } else { 0.0 };

    // Initial point: regularized least-squares fit of the constraints.
    let ones = DVector::from_element(m, 1.0);
    let kkt0 = Kkt::factor(p, &gs, &ones, a)?;
    let (mut x, mut y) = kkt0.solve(a, &(gs.tmul(h) - q), b);
    let mut s = h - gs.mul(&x);
    let mut z = DVector::from_element(m, 1.0);
    if m > 0 {
        let smin = s.min();
        if smin < 1.0 {
            s.add_scalar_mut(1.0 - smin);
        }
        let mu0 = s.dot(&z) / m as f64;
        z *= mu0.max(1.0).sqrt();
    }

    let mut iterations = 0;
    let mut converged = false;
    let mut r_p_norm = f64::INFINITY;
    let mut r_d_norm = f64::INFINITY;
    let mut gap = f64::INFINITY;
    while iterations < settings.max_iterations {
        let gtz = gs.tmul(&z);
        let r_d = p * &x
            + q
            + &gtz
            + if me > 0 {
                a.transpose() * &y
            } else {
                DVector::zeros(n)
            };
        let r_p = gs.mul(&x) + &s - h;
        let r_e = if me > 0 {
            a * &x - b
        } else {
            DVector::zeros(0)
        };
        let obj = qp.objective(&x);
        r_p_norm = r_p.amax().max(if me > 0 { r_e.amax() } else { 0.0 });
        if m == 0 {
            r_p_norm = if me > 0 { r_e.amax() } else { 0.0 };
        }
        r_d_norm = if n > 0 { r_d.amax() } else { 0.0 };
        gap = if m > 0 { s.dot(&z) } else { 0.0 };
        if r_p_norm <= settings.tolerance * (1.0 + hnorm)
            && r_d_norm <= settings.tolerance * (1.0 + qnorm)
            && gap <= settings.tolerance * (1.0 + obj.abs())
        {
            converged = true;
            break;
        }

        // Farkas certificate: z ≥ 0 with Gᵀz + Aᵀy ≈ 0 and hᵀz + bᵀy < 0.
        if m > 0 {
            let sc = z.amax().max(if me > 0 { y.amax() } else { 0.0 });
            if sc > 1e3 {
                let atg = &gtz
                    + if me > 0 {
                        a.transpose() * &y
                    } else {
                        DVector::zeros(n)
                    };
                let lin = h.dot(&z) + if me > 0 { b.dot(&y) } else { 0.0 };
                if lin / sc < -settings.certificate_tolerance
                    && atg.amax() / sc <= settings.certificate_tolerance * (-lin / sc)
                {
                    return Err(SolverError::Infeasible);
                }
            }
        }

        let d = DVector::from_fn(m, |i, _| z[i] / s[i]);
        let kkt = Kkt::factor(p, &gs, &d, a)?;
        let mu = if m > 0 { gap / m as f64 } else { 0.0 };

        // Elimination: Δs = −r_p − GΔx, Δz = D(GΔx + r_p) − r_c/s.
        let solve_dir = |r_c: &DVector<f64>| {
            let w = DVector::from_fn(m, |i, _| (z[i] * r_p[i] - r_c[i]) / s[i]);
            let rhs1 = -&r_d - gs.tmul(&w);
            let rhs2 = -&r_e;
            let (dx, dy) = kkt.solve(a, &rhs1, &rhs2);
            let gdx = gs.mul(&dx);
            let ds = -&r_p - &gdx;
            let dz = DVector::from_fn(m, |i, _| d[i] * (gdx[i] + r_p[i]) - r_c[i] / s[i]);
            (dx, ds, dz, dy)
        };

        let r_c_aff = s.component_mul(&z);
        let (_, ds_a, dz_a, _) = solve_dir(&r_c_aff);
        let alpha_aff = 1.0_f64.min(max_step(&s, &ds_a)).min(max_step(&z, &dz_a));
        let sigma = if m > 0 {
            let mu_aff = (&s + &ds_a * alpha_aff).dot(&(&z + &dz_a * alpha_aff)) / m as f64;
            (mu_aff / mu).clamp(0.0, 1.0).powi(3)
        } else {
            0.0
        };
        let r_c = DVector::from_fn(m, |i, _| s[i] * z[i] + ds_a[i] * dz_a[i] - sigma * mu);
        let (dx, ds, dz, dy) = solve_dir(&r_c);

        // Dual infeasibility: a recession direction of descent.
        if n > 0 && m + me > 0 {
            let dn = dx.amax();
            if dn > 1e6 * (1.0 + x.amax()) {
                let u = &dx / dn;
                let qu = q.dot(&u);
                let pu = (p * &u).amax();
                let gu = gs.mul(&u);
                let au = if me > 0 { (a * &u).amax() } else { 0.0 };
                let tol = settings.certificate_tolerance;
                if qu < -tol && pu <= tol && au <= tol && gu.iter().all(|v| *v <= tol) {
                    return Err(SolverError::Unbounded);
                }
            }
        }
        let alpha = (0.99 * max_step(&s, &ds).min(max_step(&z, &dz))).min(1.0);
        x += &dx * alpha;
        s += &ds * alpha;
        z += &dz * alpha;
        if me > 0 {
            y += &dy * alpha;
        }
        // Guard against collapse of a pair onto zero.
        for i in 0..m {
            s[i] = s[i].max(1e-300);
            z[i] = z[i].max(1e-300);
        }
        iterations += 1;
        if x.iter().any(|v| !v.is_finite()) {
            return Err(SolverError::MaxIterations { iterations });
        }
    }

    if !converged {
        let loose = 1e-6;
        let obj = qp.objective(&x);
        let acceptable = r_p_norm <= loose * (1.0 + hnorm)
            && r_d_norm <= loose * (1.0 + qnorm)
            && gap <= loose * (1.0 + obj.abs());
        if !acceptable {
            return Err(SolverError::MaxIterations { iterations });
        }
        log::debug!("qp stopped at iteration cap with residuals {r_p_norm:e}/{r_d_norm:e}/{gap:e}");
    }

    let mut sol = QpSolution {
        value: qp.objective(&x),
        x,
        ineq_duals: z,
        eq_duals: y,
        iterations,
        polished: false,
        primal_residual: r_p_norm,
        dual_residual: r_d_norm,
        gap,
    };
    if settings.polish {
        polish(qp, &gs, &s, &mut sol);
    }
    Ok(sol)
}

/// Refine the IPM point by solving the equality-constrained problem on the
/// estimated active set with proximal iterations anchored at the IPM solution.
fn polish(qp: &QuadraticProgram, gs: &SparseRows, s: &DVector<f64>, sol: &mut QpSolution) {
    let n = qp.linear.len();
    let h = &qp.ineq_constraints.rhs;
    let a = &qp.eq_constraints.matrix;
    let b = &qp.eq_constraints.rhs;
    let m = h.len();
    let me = b.len();
    let active: Vec<usize> = (0..m).filter(|&i| sol.ineq_duals[i] > s[i]).collect();
    let na = active.len();
    let nc = na + me;
    let dim = n + nc;
    let delta = 1e-9;

    let mut c = DMatrix::zeros(nc, n);
    let mut dvec = DVector::zeros(nc);
    for (r, &i) in active.iter().enumerate() {
        for &(j, v) in &gs.rows[i] {
            c[(r, j)] = v;
        }
        dvec[r] = h[i];
    }
    for r in 0..me {
        c.row_mut(na + r).copy_from(&a.row(r));
        dvec[na + r] = b[r];
    }

    let mut k = DMatrix::zeros(dim, dim);
    k.view_mut((0, 0), (n, n)).copy_from(&qp.hessian);
    for i in 0..n {
        k[(i, i)] += delta;
    }
    k.view_mut((n, 0), (nc, n)).copy_from(&c);
    k.view_mut((0, n), (n, nc)).copy_from(&c.transpose());
    for i in 0..nc {
        k[(n + i, n + i)] = -delta;
    }
    let lu = k.lu();

    let mut x = sol.x.clone();
    let mut lam = DVector::from_fn(nc, |r, _| {
        if r < na {
            sol.ineq_duals[active[r]]
        } else {
            sol.eq_duals[r - na]
        }
    });
    let scale = 1.0 + qp.linear.amax().max(h.amax());
    for _ in 0..50 {
        let mut rhs = DVector::zeros(dim);
        rhs.rows_mut(0, n).copy_from(&(&x * delta - &qp.linear));
        rhs.rows_mut(n, nc).copy_from(&(&dvec - &lam * delta));
        let Some(t) = lu.solve(&rhs) else {
            return;
        };
        let step = (t.rows(0, n) - &x)
            .amax()
            .max((t.rows(n, nc) - &lam).amax());
        x = t.rows(0, n).into_owned();
        lam = t.rows(n, nc).into_owned();
        if step <= 1e-15 * scale {
            break;
        }
    }
    if x.iter().chain(lam.iter()).any(|v| !v.is_finite()) {
        return;
    }

    let tol = 1e-9 * (1.0 + h.amax());
    let slack = h - gs.mul(&x);
    if m > 0 && slack.min() < -tol {
        return;
    }
    if me > 0 && (a * &x - b).amax() > tol {
        return;
    }
    if na > 0 && lam.rows(0, na).min() < -1e-9 * (1.0 + qp.linear.amax()) {
        return;
    }
    let value = qp.objective(&x);
    if value > sol.value + 1e-9 * (1.0 + sol.value.abs()) {
        return;
    }
    let mut z = DVector::zeros(m);
    for (r, &i) in active.iter().enumerate() {
        z[i] = lam[r].max(0.0);
    }
    let y = lam.rows(na, me).into_owned();
    let r_d = &qp.hessian * &x
        + &qp.linear
        + gs.tmul(&z)
        + if me > 0 {
            a.transpose() * &y
        } else {
            DVector::zeros(n)
        };
    sol.x = x;
    sol.value = value;
    sol.ineq_duals = z;
    sol.eq_duals = y;
    sol.polished = true;
    sol.primal_residual = if m > 0 { (-slack.min()).max(0.0) } else { 0.0 };
    sol.dual_residual = if n > 0 { r_d.amax() } else { 0.0 };
    sol.gap = slack.dot(&sol.ineq_duals).abs();
}
