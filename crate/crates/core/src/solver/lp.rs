//! Dense two-phase tableau simplex with Bland's pivoting rule.

use nalgebra::{DMatrix, DVector};

use crate::error::SolverError;

const PIVOT_TOL: f64 = 1e-11;
const COST_TOL: f64 = 1e-11;
const MAX_PIVOTS: usize = 200_000;

/// Optimization direction of a [`LinearProgram`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Minimize,
    Maximize,
}

/// A block of linear constraints `matrix · x (≤ or =) rhs`.
#[derive(Debug, Clone, PartialEq)]
pub struct Constraints {
    pub matrix: DMatrix<f64>,
    pub rhs: DVector<f64>,
}

impl Constraints {
    pub fn new(matrix: DMatrix<f64>, rhs: DVector<f64>) -> Self {
        Self { matrix, rhs }
    }

    pub fn none(n: usize) -> Self {
        Self {
            matrix: DMatrix::zeros(0, n),
            rhs: DVector::zeros(0),
        }
    }

    pub fn len(&self) -> usize {
        self.rhs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rhs.is_empty()
    }
}

/// `optimize objectiveᵀx` subject to equalities, inequalities and optional
/// per-variable bounds. Variables without bounds are free.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearProgram {
    pub sense: Sense,
    pub objective: DVector<f64>,
    pub eq_constraints: Constraints,
    pub ineq_constraints: Constraints,
    pub bounds: Option<Vec<(Option<f64>, Option<f64>)>>,
}

impl LinearProgram {
    pub fn minimize(objective: DVector<f64>) -> Self {
        let n = objective.len();
        Self {
            sense: Sense::Minimize,
            objective,
            eq_constraints: Constraints::none(n),
            ineq_constraints: Constraints::none(n),
            bounds: None,
        }
    }

    pub fn maximize(objective: DVector<f64>) -> Self {
        Self {
            sense: Sense::Maximize,
            ..Self::minimize(objective)
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

    pub fn with_bounds(mut self, bounds: Vec<(Option<f64>, Option<f64>)>) -> Self {
        self.bounds = Some(bounds);
        self
    }

    pub fn nonnegative(self) -> Self {
        let n = self.objective.len();
        self.with_bounds(vec![(Some(0.0), None); n])
    }

    fn validate(&self) -> Result<(), SolverError> {
        let n = self.objective.len();
        for (name, c) in [
            ("eq", &self.eq_constraints),
            ("ineq", &self.ineq_constraints),
        ] {
            if c.matrix.ncols() != n || c.matrix.nrows() != c.rhs.len() {
                return Err(SolverError::Malformed(format!(
                    "{name} block is {}x{} with rhs {}, expected {n} columns",
                    c.matrix.nrows(),
                    c.matrix.ncols(),
                    c.rhs.len()
                )));
            }
        }
        if let Some(b) = &self.bounds {
            if b.len() != n {
                return Err(SolverError::Malformed(format!(
                    "{} bounds for {n} variables",
                    b.len()
                )));
            }
            for (i, (lo, hi)) in b.iter().enumerate() {
                if let (Some(l), Some(h)) = (lo, hi) {
                    if l > h {
                        log::debug!("variable {i} has an empty bound interval");
                        return Err(SolverError::Infeasible);
                    }
                }
            }
        }
        let finite = self.objective.iter().all(|v| v.is_finite())
            && self.eq_constraints.matrix.iter().all(|v| v.is_finite())
            && self.ineq_constraints.matrix.iter().all(|v| v.is_finite())
            && self.eq_constraints.rhs.iter().all(|v| v.is_finite())
            && self.ineq_constraints.rhs.iter().all(|v| v.is_finite());
        if !finite {
            return Err(SolverError::Malformed("non-finite data".into()));
        }
        Ok(())
    }
}

/// Optimum of an LP together with the multipliers of its constraint blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub x: DVector<f64>,
    pub value: f64,
    /// Equality multipliers `y`.
    pub eq_duals: DVector<f64>,
    /// Inequality multipliers `μ ≥ 0`. On free variables stationarity reads
    /// `objective = Aᵀy − Gᵀμ` when minimizing and `objective = Aᵀy + Gᵀμ`
    /// when maximizing.
    pub ineq_duals: DVector<f64>,
}

/// Solution of a standard-form problem `min cᵀy, Ay = b, y ≥ 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct StandardSolution {
    pub y: DVector<f64>,
    pub value: f64,
    /// Dual vector π with `Aᵀπ ≤ c` and `bᵀπ = value`.
    pub duals: DVector<f64>,
}

/// Solve an LP in general form.
pub fn solve_lp(lp: &LinearProgram) -> Result<LpSolution, SolverError> {
    lp.validate()?;
    let n = lp.objective.len();
    let sign = match lp.sense {
        Sense::Minimize => 1.0,
        Sense::Maximize => -1.0,
    };

    // Map each original variable onto nonnegative standard columns:
    // x = offset + scale * y[col] (+ optional negative part).
    enum VarMap {
        Shift { col: usize, offset: f64, scale: f64 },
        Free { pos: usize, neg: usize },
    }
    let mut maps = Vec::with_capacity(n);
    let mut ncols = 0usize;
    let mut upper_rows: Vec<(usize, f64)> = Vec::new();
    for i in 0..n {
        let (lo, hi) = lp.bounds.as_ref().map_or((None, None), |b| b[i]);
        match (lo, hi) {
            (Some(l), Some(h)) => {
                maps.push(VarMap::Shift {
                    col: ncols,
                    offset: l,
                    scale: 1.0,
                });
                upper_rows.push((ncols, h - l));
                ncols += 1;
            }
            (Some(l), None) => {
                maps.push(VarMap::Shift {
                    col: ncols,
                    offset: l,
                    scale: 1.0,
                });
                ncols += 1;
            }
            (None, Some(h)) => {
                maps.push(VarMap::Shift {
                    col: ncols,
                    offset: h,
                    scale: -1.0,
                });
                ncols += 1;
            }
            (None, None) => {
                maps.push(VarMap::Free {
                    pos: ncols,
                    neg: ncols + 1,
                });
                ncols += 2;
            }
        }
    }
    let n_struct = ncols;
    let m_eq = lp.eq_constraints.len();
    let m_in = lp.ineq_constraints.len();
    let m_up = upper_rows.len();
    let n_slack = m_in + m_up;
    let m = m_eq + m_in + m_up;
    let ntot = n_struct + n_slack;

    let mut a = DMatrix::zeros(m, ntot);
    let mut b = DVector::zeros(m);
    let mut c = DVector::zeros(ntot);

    let mut offset_x = DVector::zeros(n);
    for (i, map) in maps.iter().enumerate() {
        match *map {
            VarMap::Shift { col, offset, scale } => {
                c[col] = sign * lp.objective[i] * scale;
                offset_x[i] = offset;
            }
            VarMap::Free { pos, neg } => {
                c[pos] = sign * lp.objective[i];
                c[neg] = -sign * lp.objective[i];
            }
        }
    }
    let fill_row = |row: usize,
                    src: &DMatrix<f64>,
                    r: usize,
                    rhs: f64,
                    a: &mut DMatrix<f64>,
                    b: &mut DVector<f64>| {
        let mut shift = 0.0;
        for (i, map) in maps.iter().enumerate() {
            let v = src[(r, i)];
            if v == 0.0 {
                continue;
            }
            match *map {
                VarMap::Shift { col, offset, scale } => {
                    a[(row, col)] = v * scale;
                    shift += v * offset;
                }
                VarMap::Free { pos, neg } => {
                    a[(row, pos)] = v;
                    a[(row, neg)] = -v;
                }
            }
        }
        b[row] = rhs - shift;
    };
    for r in 0..m_eq {
        fill_row(
            r,
            &lp.eq_constraints.matrix,
            r,
            lp.eq_constraints.rhs[r],
            &mut a,
            &mut b,
        );
    }
    for r in 0..m_in {
        let row = m_eq + r;
        fill_row(
            row,
            &lp.ineq_constraints.matrix,
            r,
            lp.ineq_constraints.rhs[r],
            &mut a,
            &mut b,
        );
        a[(row, n_struct + r)] = 1.0;
    }
    for (k, &(col, width)) in upper_rows.iter().enumerate() {
        let row = m_eq + m_in + k;
        a[(row, col)] = 1.0;
        a[(row, n_struct + m_in + k)] = 1.0;
        b[row] = width;
    }

    let sol = solve_standard(&a, &b, &c)?;

    let mut x = offset_x;
    for (i, map) in maps.iter().enumerate() {
        match *map {
            VarMap::Shift { col, scale, .. } => x[i] += scale * sol.y[col],
            VarMap::Free { pos, neg } => x[i] = sol.y[pos] - sol.y[neg],
        }
    }
    let value = lp.objective.dot(&x);
    let eq_duals = DVector::from_fn(m_eq, |i, _| sign * sol.duals[i]);
    let ineq_duals = DVector::from_fn(m_in, |i, _| -sol.duals[m_eq + i]);
    Ok(LpSolution {
        x,
        value,
        eq_duals,
        ineq_duals,
    })
}

/// Solve `min cᵀy` s.t. `Ay = b`, `y ≥ 0`.
pub fn solve_standard(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    c: &DVector<f64>,
) -> Result<StandardSolution, SolverError> {
    let (m, n) = a.shape();
    if b.len() != m || c.len() != n {
        return Err(SolverError::Malformed(format!(
            "standard form {m}x{n} with b {} and c {}",
            b.len(),
            c.len()
        )));
    }
    let mut t = Tableau::new(a, b);
    t.phase_one()?;
    t.phase_two(c)?;
    Ok(t.extract(a, b, c))
}

struct Tableau {
    m: usize,
    n: usize,
    /// Rows 0..m: constraints. Row m: reduced costs. Last column: rhs.
    t: DMatrix<f64>,
    basis: Vec<usize>,
    flip: Vec<f64>,
}

impl Tableau {
    fn new(a: &DMatrix<f64>, b: &DVector<f64>) -> Self {
        let (m, n) = a.shape();
        let mut t = DMatrix::zeros(m + 1, n + m + 1);
        let mut flip = vec![1.0; m];
        for i in 0..m {
            let s = if b[i] < 0.0 { -1.0 } else { 1.0 };
            flip[i] = s;
            for j in 0..n {
                t[(i, j)] = s * a[(i, j)];
            }
            t[(i, n + i)] = 1.0;
            t[(i, n + m)] = s * b[i];
        }
        Self {
            m,
            n,
            t,
            basis: (n..n + m).collect(),
            flip,
        }
    }

    fn rhs_col(&self) -> usize {
        self.n + self.m
    }

    fn pivot(&mut self, row: usize, col: usize) {
        let w = self.t.ncols();
        let p = self.t[(row, col)];
        for j in 0..w {
            self.t[(row, j)] /= p;
        }
        self.t[(row, col)] = 1.0;
        for i in 0..=self.m {
            if i == row {
                continue;
            }
            let f = self.t[(i, col)];
            if f == 0.0 {
                continue;
            }
            for j in 0..w {
                let v = self.t[(row, j)];
                if v != 0.0 {
                    self.t[(i, j)] -= f * v;
                }
            }
            self.t[(i, col)] = 0.0;
        }
        self.basis[row] = col;
    }

    /// Run Bland-rule pivots over columns `0..allowed` until optimal.
    ///
    /// With `skip_rayless` a column without a pivot row is passed over instead
    /// of reported unbounded; phase one uses it, where such a column can only
    /// come from roundoff.
    fn iterate(&mut self, allowed: usize, skip_rayless: bool) -> Result<(), SolverError> {
        let rhs = self.rhs_col();
        let mut skipped = vec![false; allowed];
        for _ in 0..MAX_PIVOTS {
            let entering = (0..allowed).find(|&j| !skipped[j] && self.t[(self.m, j)] < -COST_TOL);
            let Some(col) = entering else {
                return Ok(());
            };
            let mut best: Option<(usize, f64)> = None;
            for i in 0..self.m {
                let aij = self.t[(i, col)];
                if aij > PIVOT_TOL {
                    let ratio = self.t[(i, rhs)].max(0.0) / aij;
                    best = match best {
                        None => Some((i, ratio)),
                        Some((bi, br)) => {
                            if ratio < br - 1e-14 * br.abs().max(1.0)
                                || (ratio <= br + 1e-14 * br.abs().max(1.0)
                                    && self.basis[i] < self.basis[bi])
                            {
                                Some((i, ratio))
                            } else {
                                Some((bi, br))
                            }
                        }
                    };
                }
            }
            let Some((row, _)) = best else {
                if skip_rayless {
                    skipped[col] = true;
                    continue;
                }
                return Err(SolverError::Unbounded);
            };
            self.pivot(row, col);
            skipped.iter_mut().for_each(|s| *s = false);
        }
        Err(SolverError::MaxIterations {
            iterations: MAX_PIVOTS,
        })
    }

    fn phase_one(&mut self) -> Result<(), SolverError> {
        let (m, n) = (self.m, self.n);
        let rhs = self.rhs_col();
        for j in 0..self.t.ncols() {
            self.t[(m, j)] = 0.0;
        }
        for j in n..n + m {
            self.t[(m, j)] = 1.0;
        }
        for i in 0..m {
            for j in 0..self.t.ncols() {
                let v = self.t[(i, j)];
                self.t[(m, j)] -= v;
            }
        }
        self.iterate(n + m, true)?;
        let bnorm = (0..m).fold(0.0_f64, |a, i| a.max(self.t[(i, rhs)].abs()));
        let infeas = -self.t[(m, rhs)];
        if infeas > 1e-9 * (1.0 + bnorm) {
            return Err(SolverError::Infeasible);
        }
        // Drive remaining artificials out of the basis where possible.
        for i in 0..m {
            if self.basis[i] >= n {
                let mut best: Option<(usize, f64)> = None;
                for j in 0..n {
                    let v = self.t[(i, j)].abs();
                    if v > 1e-9 && best.is_none_or(|(_, bv)| v > bv) {
                        best = Some((j, v));
                    }
                }
                if let Some((j, _)) = best {
                    self.pivot(i, j);
                }
            }
        }
        Ok(())
    }

    fn phase_two(&mut self, c: &DVector<f64>) -> Result<(), SolverError> {
        let (m, n) = (self.m, self.n);
        for j in 0..self.t.ncols() {
            self.t[(m, j)] = if j < n { c[j] } else { 0.0 };
        }
        for i in 0..m {
            let bj = self.basis[i];
            let cb = if bj < n { c[bj] } else { 0.0 };
            if cb != 0.0 {
                for j in 0..self.t.ncols() {
                    let v = self.t[(i, j)];
                    self.t[(m, j)] -= cb * v;
                }
            }
        }
        self.iterate(n, false)
    }

    fn extract(&self, a: &DMatrix<f64>, b: &DVector<f64>, c: &DVector<f64>) -> StandardSolution {
        let (m, n) = (self.m, self.n);
        let rhs = self.rhs_col();
        let mut y = DVector::zeros(n);
        for i in 0..m {
            if self.basis[i] < n {
                y[self.basis[i]] = self.t[(i, rhs)].max(0.0);
            }
        }
        // Duals from the reduced costs of the artificial columns.
        let mut duals = DVector::from_fn(m, |i, _| -self.t[(m, n + i)] * self.flip[i]);

        // Re-solve the basic system from the original data when the basis is
        // made of structural columns only.
        if self.basis.iter().all(|&j| j < n) && m > 0 {
            let ab = DMatrix::from_fn(m, m, |i, k| a[(i, self.basis[k])]);
            if let Some(lu) = Some(ab.clone().lu()).filter(|lu| lu.is_invertible()) {
                if let Some(yb) = lu.solve(b) {
                    if yb.iter().all(|v| *v >= -1e-9) {
                        y.fill(0.0);
                        for k in 0..m {
                            y[self.basis[k]] = yb[k].max(0.0);
                        }
                    }
                }
                let cb = DVector::from_fn(m, |k, _| c[self.basis[k]]);
                if let Some(pi) = ab.transpose().lu().solve(&cb) {
                    duals = pi;
                }
            }
        }
        let value = c.dot(&y);
        StandardSolution { y, value, duals }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::mat_from_rows;

    #[test]
    fn max_x_below_one() {
        let lp = LinearProgram::maximize(DVector::from_element(1, 1.0)).with_ineq(
            DMatrix::from_element(1, 1, 1.0),
            DVector::from_element(1, 1.0),
        );
        let s = solve_lp(&lp).unwrap();
        assert!((s.x[0] - 1.0).abs() < 1e-12);
        assert!((s.value - 1.0).abs() < 1e-12);
        assert!((s.ineq_duals[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn tube_factor_1d() {
        // min h1 + h2 s.t. h1 - h2 = 1, h >= 0 -> (1, 0)
        let lp = LinearProgram::minimize(DVector::from_vec(vec![1.0, 1.0]))
            .with_eq(
                mat_from_rows(&[vec![1.0, -1.0]]),
                DVector::from_element(1, 1.0),
            )
            .nonnegative();
        let s = solve_lp(&lp).unwrap();
        assert!((s.x[0] - 1.0).abs() < 1e-12 && s.x[1].abs() < 1e-12);
    }

    #[test]
    fn duplicated_rows_same_optimum() {
        let g = mat_from_rows(&[vec![1.0, 1.0], vec![1.0, -1.0], vec![-1.0, 0.0]]);
        let h = DVector::from_vec(vec![2.0, 1.0, 0.0]);
        let base = LinearProgram::maximize(DVector::from_vec(vec![1.0, 2.0]))
            .with_ineq(g.clone(), h.clone());
        let g2 = crate::linalg::vstack(&[&g, &g]);
        let h2 = crate::linalg::vcat(&[&h, &h]);
        let dup = LinearProgram::maximize(DVector::from_vec(vec![1.0, 2.0])).with_ineq(g2, h2);
        let a = solve_lp(&base).unwrap();
        let b = solve_lp(&dup).unwrap();
        assert!((a.value - b.value).abs() < 1e-12);
        assert!((a.value - 4.0).abs() < 1e-12);
    }

    #[test]
    fn infeasible_and_unbounded() {
        let lp = LinearProgram::minimize(DVector::from_element(1, 1.0)).with_ineq(
            mat_from_rows(&[vec![1.0], vec![-1.0]]),
            DVector::from_vec(vec![-1.0, -1.0]),
        );
        assert_eq!(solve_lp(&lp), Err(SolverError::Infeasible));
        let lp = LinearProgram::minimize(DVector::from_element(1, 1.0))
            .with_ineq(mat_from_rows(&[vec![1.0]]), DVector::from_element(1, 3.0));
        assert_eq!(solve_lp(&lp), Err(SolverError::Unbounded));
    }

    #[test]
    fn bounds_and_equalities() {
        // min -x - y s.t. x + y = 1.5, 0 <= x <= 1, y <= 0.8 -> value -1.5
        let lp = LinearProgram::minimize(DVector::from_vec(vec![-1.0, -2.0]))
            .with_eq(
                mat_from_rows(&[vec![1.0, 1.0]]),
                DVector::from_element(1, 1.5),
            )
            .with_bounds(vec![(Some(0.0), Some(1.0)), (None, Some(0.8))]);
        let s = solve_lp(&lp).unwrap();
        assert!((s.x[1] - 0.8).abs() < 1e-12 && (s.x[0] - 0.7).abs() < 1e-12);
        assert!((s.value + 2.3).abs() < 1e-12);
    }

    #[test]
    fn kkt_residuals_small() {
        // random-ish well-posed LP: max cᵀx over a box plus cuts
        let g = mat_from_rows(&[
            vec![1.0, 0.0],
            vec![-1.0, 0.0],
            vec![0.0, 1.0],
            vec![0.0, -1.0],
            vec![1.0, 1.0],
            vec![-0.3, 1.0],
        ]);
        let h = DVector::from_vec(vec![1.0, 1.0, 1.0, 1.0, 1.5, 0.9]);
        let c = DVector::from_vec(vec![0.4, 1.0]);
        let s =
            solve_lp(&LinearProgram::maximize(c.clone()).with_ineq(g.clone(), h.clone())).unwrap();
        let slack = &h - &g * &s.x;
        assert!(slack.min() >= -1e-8);
        let stat = g.transpose() * &s.ineq_duals - &c;
        assert!(stat.amax() < 1e-8);
        assert!(s.ineq_duals.min() >= -1e-12);
        assert!(slack.dot(&s.ineq_duals).abs() < 1e-8);
    }
}
