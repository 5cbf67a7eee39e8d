//! Cost-matrix synthesis over a vertex set: minimize `trace W` subject to
//! `W − ΨʲᵀWΨʲ − Q̄ ⪰ 0` for every vertex and optionally `W ⪯ W_prev`.
//!
//! The small SDP is solved with a log-det barrier method in the symmetric
//! basis of `W`, using a phase-I slack to find a strictly feasible start.

use nalgebra::{DMatrix, DVector};

use crate::error::SolverError;
use crate::linalg::{discrete_lyapunov, max_sym_eig, min_sym_eig, symmetrize};

/// Parameters of the barrier method.
#[derive(Debug, Clone, PartialEq)]
pub struct LmiSettings {
    /// Relative duality-gap target of the barrier path.
    pub relative_gap: f64,
    /// Accepted residual eigenvalue of each vertex inequality.
    pub residual_tolerance: f64,
    /// Accepted largest eigenvalue of `W − W_prev`.
    pub order_tolerance: f64,
    pub max_newton: usize,
}

impl Default for LmiSettings {
    fn default() -> Self {
        Self {
            relative_gap: 1e-7,
            residual_tolerance: 1e-7,
            order_tolerance: 1e-9,
            max_newton: 2000,
        }
    }
}

/// Certified cost matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    pub w: DMatrix<f64>,
    /// Largest eigenvalue of `ΨʲᵀWΨʲ − W + Q̄` per vertex (≤ tolerance).
    pub vertex_residuals: Vec<f64>,
    /// Largest eigenvalue of `W − W_prev` when a previous matrix was supplied.
    pub order_gap: Option<f64>,
    /// Smallest eigenvalue of `W`.
    pub min_eigenvalue: f64,
    /// True when no strictly feasible point existed and `W_prev` was kept.
    pub reused_previous: bool,
}

/// Affine matrix function `c0 + U·S(w)·Uᵀ` where `S(w)` collects the signed
/// generator pairs of every active variable.
struct Block {
    c0: DMatrix<f64>,
    u: DMatrix<f64>,
    terms: Vec<Vec<(usize, usize, f64)>>,
}

impl Block {
    fn eval(&self, w: &DVector<f64>, slack: f64) -> DMatrix<f64> {
        let g = self.u.ncols();
        let mut s = DMatrix::zeros(g, g);
        for (a, terms) in self.terms.iter().enumerate() {
            let wa = w[a];
            if wa != 0.0 {
                for &(p, q, sg) in terms {
                    s[(p, q)] += sg * wa;
                }
            }
        }
        let mut f = &self.c0 + &self.u * s * self.u.transpose();
        if slack != 0.0 {
            for i in 0..f.nrows() {
                f[(i, i)] += slack;
            }
        }
        symmetrize(&f)
    }
}

fn sym_index(d: usize) -> Vec<(usize, usize)> {
    let mut idx = Vec::with_capacity(d * (d + 1) / 2);
    for i in 0..d {
        for j in i..d {
            idx.push((i, j));
        }
    }
    idx
}

fn to_vec(w: &DMatrix<f64>, idx: &[(usize, usize)]) -> DVector<f64> {
    DVector::from_iterator(idx.len(), idx.iter().map(|&(i, j)| w[(i, j)]))
}

fn to_mat(w: &DVector<f64>, idx: &[(usize, usize)], d: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(d, d);
    for (a, &(i, j)) in idx.iter().enumerate() {
        m[(i, j)] = w[a];
        m[(j, i)] = w[a];
    }
    m
}

fn vertex_block(psi: &DMatrix<f64>, qbar: &DMatrix<f64>, idx: &[(usize, usize)]) -> Block {
    let d = psi.nrows();
    let mut u = DMatrix::zeros(d, 2 * d);
    u.view_mut((0, 0), (d, d)).fill_with_identity();
    u.view_mut((0, d), (d, d)).copy_from(&psi.transpose());
    let terms = idx
        .iter()
        .map(|&(i, j)| {
            if i == j {
                vec![(i, i, 1.0), (d + i, d + i, -1.0)]
            } else {
                vec![
                    (i, j, 1.0),
                    (j, i, 1.0),
                    (d + i, d + j, -1.0),
                    (d + j, d + i, -1.0),
                ]
            }
        })
        .collect();
    Block {
        c0: -qbar.clone(),
        u,
        terms,
    }
}

fn order_block(w_prev: &DMatrix<f64>, idx: &[(usize, usize)]) -> Block {
    let d = w_prev.nrows();
    let terms = idx
        .iter()
        .map(|&(i, j)| {
            if i == j {
                vec![(i, i, -1.0)]
            } else {
                vec![(i, j, -1.0), (j, i, -1.0)]
            }
        })
        .collect();
    Block {
        c0: w_prev.clone(),
        u: DMatrix::identity(d, d),
        terms,
    }
}

/// Newton steps per centering; late centerings stall on roundoff otherwise.
const MAX_CENTERING_STEPS: usize = 80;

struct Barrier<'a> {
    blocks: &'a [Block],
    cost: DVector<f64>,
    with_slack: bool,
    nvar: usize,
}

impl Barrier<'_> {
    fn split(&self, x: &DVector<f64>) -> (DVector<f64>, f64) {
        if self.with_slack {
            (x.rows(0, self.nvar).into_owned(), x[self.nvar])
        } else {
            (x.clone(), 0.0)
        }
    }

    /// `t·costᵀx − Σ log det F_i`, or `None` outside the domain.
    fn value(&self, x: &DVector<f64>, t: f64) -> Option<f64> {
        let (w, s) = self.split(x);
        let mut v = t * self.cost.dot(x);
        for b in self.blocks {
            let chol = b.eval(&w, s).cholesky()?;
            let l = chol.l_dirty();
            for i in 0..l.nrows() {
                v -= 2.0 * l[(i, i)].ln();
            }
        }
        Some(v)
    }

    fn grad_hess(&self, x: &DVector<f64>, t: f64) -> Option<(DVector<f64>, DMatrix<f64>)> {
        let (w, s) = self.split(x);
        let n = x.len();
        let mut g = &self.cost * t;
        let mut h = DMatrix::zeros(n, n);
        for b in self.blocks {
            let finv = b.eval(&w, s).cholesky()?.inverse();
            let om = b.u.transpose() * &finv * &b.u;
            for (a, ta) in b.terms.iter().enumerate() {
                for &(p, q, sg) in ta {
                    g[a] -= sg * om[(q, p)];
                }
                for (c, tc) in b.terms.iter().enumerate().skip(a) {
                    let mut acc = 0.0;
                    for &(p, q, sg) in ta {
                        for &(p2, q2, sg2) in tc {
                            acc += sg * sg2 * om[(q2, p)] * om[(q, p2)];
                        }
                    }
                    h[(a, c)] += acc;
                }
            }
            if self.with_slack {
                let k = self.nvar;
                let f2 = &finv * &finv;
                let om2 = b.u.transpose() * &f2 * &b.u;
                g[k] -= finv.trace();
                h[(k, k)] += f2.trace();
                for (a, ta) in b.terms.iter().enumerate() {
                    let mut acc = 0.0;
                    for &(p, q, sg) in ta {
                        acc += sg * om2[(q, p)];
                    }
                    h[(a, k)] += acc;
                }
            }
        }
        for a in 0..n {
            for c in 0..a {
                h[(a, c)] = h[(c, a)];
            }
        }
        Some((g, h))
    }

    /// Damped Newton centering. Returns the number of Newton steps taken.
    fn center(
        &self,
        x: &mut DVector<f64>,
        t: f64,
        budget: usize,
        stop: impl Fn(&DVector<f64>) -> bool,
    ) -> Result<usize, SolverError> {
        for it in 0..budget.min(MAX_CENTERING_STEPS) {
            if stop(x) {
                return Ok(it);
            }
            let (g, h) = self
                .grad_hess(x, t)
                .ok_or_else(|| SolverError::Malformed("barrier left its domain".into()))?;
            let scale = (0..h.nrows()).fold(1e-300_f64, |a, i| a.max(h[(i, i)]));
            let mut reg = 0.0;
            let chol = loop {
                let mut hr = h.clone();
                for i in 0..hr.nrows() {
                    hr[(i, i)] += reg;
                }
                if let Some(c) = hr.cholesky() {
                    break c;
                }
                reg = if reg == 0.0 {
                    1e-14 * scale
                } else {
                    reg * 100.0
                };
                if reg > scale {
                    return Err(SolverError::Malformed("singular barrier Hessian".into()));
                }
            };
            let dx = -chol.solve(&g);
            let dec = -g.dot(&dx);
            if dec / 2.0 <= 1e-9 {
                return Ok(it);
            }
            let f0 = self.value(x, t).expect("current point is in the domain");
            let mut tau = 1.0;
            loop {
                let cand = &*x + &dx * tau;
                if let Some(f1) = self.value(&cand, t) {
                    if f1 <= f0 - 0.25 * tau * dec {
                        *x = cand;
                        break;
                    }
                }
                tau *= 0.5;
                if tau < 1e-12 {
                    return Ok(it);
                }
            }
        }
        Ok(budget.min(MAX_CENTERING_STEPS))
    }
}

/// Synthesize the cost matrix for the given vertex lifts.
///
/// `nominal` seeds the barrier method with the Lyapunov solution of one lift;
/// by default the first vertex is used.
pub fn find_cost_matrix(
    vertex_lifts: &[DMatrix<f64>],
    qbar: &DMatrix<f64>,
    w_prev: Option<&DMatrix<f64>>,
    nominal: Option<&DMatrix<f64>>,
    settings: &LmiSettings,
) -> Result<CostMatrix, SolverError> {
    let d = qbar.nrows();
    if vertex_lifts.is_empty() {
        return Err(SolverError::Malformed("no vertex lifts supplied".into()));
    }
    if qbar.ncols() != d
        || vertex_lifts.iter().any(|p| p.shape() != (d, d))
        || w_prev.is_some_and(|w| w.shape() != (d, d))
    {
        return Err(SolverError::Malformed(
            "lift dimensions disagree with Q̄".into(),
        ));
    }
    let idx = sym_index(d);
    let nvar = idx.len();
    let mut blocks: Vec<Block> = vertex_lifts
        .iter()
        .map(|p| vertex_block(p, qbar, &idx))
        .collect();
    if let Some(wp) = w_prev {
        blocks.push(order_block(wp, &idx));
    }
    let total_dim: f64 = blocks.iter().map(|b| b.c0.nrows() as f64).sum();
    let scale = 1.0 + qbar.amax();
    let mut budget = settings.max_newton;

    let seed_lift = nominal.unwrap_or(&vertex_lifts[0]);
    let w0 = discrete_lyapunov(seed_lift, qbar)
        .or_else(|| vertex_lifts.iter().find_map(|p| discrete_lyapunov(p, qbar)))
        .ok_or_else(|| SolverError::InfeasibleLmi {
            reason: "no vertex lift is Schur stable".into(),
        })?;
    let mut w = to_vec(&w0, &idx);

    let margin = |w: &DVector<f64>| {
        blocks
            .iter()
            .map(|b| min_sym_eig(&b.eval(w, 0.0)))
            .fold(f64::INFINITY, f64::min)
    };

    // W_prev − εI is strictly feasible for a small ε whenever W_prev keeps a
    // positive margin on the current vertices.
    if let Some(wp) = w_prev {
        let mut best = margin(&w);
        for e in 1..=10 {
            let eps = scale * 10f64.powi(-e);
            let cand = to_vec(&(wp - DMatrix::identity(d, d) * eps), &idx);
            let m = margin(&cand);
            if m > best {
                best = m;
                w = cand;
            }
        }
    }

    let target_depth = 1e-4 * scale;
    if margin(&w) <= 0.0 {
        // Phase I: minimize the uniform slack s with F_i(w) + sI ≻ 0.
        let s0 = (-margin(&w)).max(0.0) + scale;
        let mut x = DVector::zeros(nvar + 1);
        x.rows_mut(0, nvar).copy_from(&w);
        x[nvar] = s0;
        let mut cost = DVector::zeros(nvar + 1);
        cost[nvar] = 1.0;
        let bar = Barrier {
            blocks: &blocks,
            cost,
            with_slack: true,
            nvar,
        };
        let mut t = 1.0 / scale;
        let deep = |x: &DVector<f64>| x[nvar] <= -target_depth;
        loop {
            let used = bar.center(&mut x, t, budget, deep)?;
            budget = budget.saturating_sub(used.max(1));
            if deep(&x) {
                break;
            }
            if total_dim / t <= 1e-11 * scale || budget == 0 {
                break;
            }
            t *= 10.0;
        }
        let s = x[nvar];
        if s >= -1e-12 * scale {
            return reuse_or_fail(vertex_lifts, qbar, w_prev, settings, s);
        }
        w = x.rows(0, nvar).into_owned();
    }

    // Phase II: barrier path on trace W.
    let cost = DVector::from_iterator(
        nvar,
        idx.iter().map(|&(i, j)| if i == j { 1.0 } else { 0.0 }),
    );
    let bar = Barrier {
        blocks: &blocks,
        cost: cost.clone(),
        with_slack: false,
        nvar,
    };
    let mut t = total_dim / (1.0 + cost.dot(&w).abs());
    loop {
        let used = bar.center(&mut w, t, budget, |_| false)?;
        budget = budget.saturating_sub(used.max(1));
        log::trace!("centering at t = {t:e}: {used} Newton steps");
        let obj = cost.dot(&w);
        if total_dim / t <= settings.relative_gap * (1.0 + obj.abs()) {
            break;
        }
        if budget == 0 {
            log::debug!("cost-matrix barrier stopped on its Newton budget at t = {t:e}");
            break;
        }
        t *= 8.0;
    }
    let wm = to_mat(&w, &idx, d);
    certify(vertex_lifts, qbar, w_prev, settings, wm, false)
}

fn reuse_or_fail(
    vertex_lifts: &[DMatrix<f64>],
    qbar: &DMatrix<f64>,
    w_prev: Option<&DMatrix<f64>>,
    settings: &LmiSettings,
    slack: f64,
) -> Result<CostMatrix, SolverError> {
    match w_prev {
        Some(wp) => {
            log::debug!(
                "no strictly feasible cost matrix (slack {slack:e}); keeping the previous one"
            );
            certify(vertex_lifts, qbar, w_prev, settings, wp.clone(), true)
        }
        None => Err(SolverError::InfeasibleLmi {
            reason: format!("phase I slack stalled at {slack:e}"),
        }),
    }
}

fn certify(
    vertex_lifts: &[DMatrix<f64>],
    qbar: &DMatrix<f64>,
    w_prev: Option<&DMatrix<f64>>,
    settings: &LmiSettings,
    w: DMatrix<f64>,
    reused_previous: bool,
) -> Result<CostMatrix, SolverError> {
    let w = symmetrize(&w);
    let vertex_residuals: Vec<f64> = vertex_lifts
        .iter()
        .map(|p| max_sym_eig(&(p.transpose() * &w * p - &w + qbar)))
        .collect();
    if let Some((j, r)) = vertex_residuals
        .iter()
        .enumerate()
        .find(|(_, r)| **r > settings.residual_tolerance)
    {
        return Err(SolverError::InfeasibleLmi {
            reason: format!("vertex {j} residual eigenvalue {r:e} exceeds tolerance"),
        });
    }
    let order_gap = w_prev.map(|wp| max_sym_eig(&(&w - wp)));
    if let Some(gap) = order_gap {
        if gap > settings.order_tolerance {
            return Err(SolverError::InfeasibleLmi {
                reason: format!("W exceeds the previous cost matrix by {gap:e}"),
            });
        }
    }
    let min_eigenvalue = min_sym_eig(&w);
    if min_eigenvalue <= 0.0 {
        return Err(SolverError::InfeasibleLmi {
            reason: format!("W is not positive definite (min eigenvalue {min_eigenvalue:e})"),
        });
    }
    Ok(CostMatrix {
        w,
        vertex_residuals,
        order_gap,
        min_eigenvalue,
        reused_previous,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::mat_from_rows;

    #[test]
    fn zero_lift_gives_qbar() {
        let q = mat_from_rows(&[vec![2.0, 0.5], vec![0.5, 1.0]]);
        let c = find_cost_matrix(
            &[DMatrix::zeros(2, 2)],
            &q,
            None,
            None,
            &LmiSettings::default(),
        )
        .unwrap();
        assert!((&c.w - &q).amax() < 1e-5);
        assert!(c.vertex_residuals[0] <= 1e-7);
    }

    #[test]
    fn single_vertex_reaches_lyapunov_solution() {
        let psi = mat_from_rows(&[vec![0.5, 0.2], vec![-0.1, 0.3]]);
        let q = DMatrix::identity(2, 2);
        let lyap = discrete_lyapunov(&psi, &q).unwrap();
        let c = find_cost_matrix(&[psi], &q, None, None, &LmiSettings::default()).unwrap();
        // Minimal trace over {W ⪰ ΨᵀWΨ + Q} is the Lyapunov solution.
        assert!((&c.w - &lyap).amax() < 1e-5, "{} vs {}", c.w, lyap);
    }

    #[test]
    fn two_vertices_certified_and_ordered() {
        let p1 = mat_from_rows(&[vec![0.5, 0.3], vec![0.0, 0.4]]);
        let p2 = mat_from_rows(&[vec![0.3, -0.2], vec![0.1, 0.6]]);
        let q = DMatrix::identity(2, 2);
        let s = LmiSettings::default();
        let c = find_cost_matrix(&[p1.clone(), p2.clone()], &q, None, None, &s).unwrap();
        assert!(c.vertex_residuals.iter().all(|r| *r <= 1e-7));
        let c2 = find_cost_matrix(&[p1], &q, Some(&c.w), None, &s).unwrap();
        assert!(c2.order_gap.unwrap() <= 1e-9);
        assert!(c2.w.trace() <= c.w.trace() + 1e-9);
    }

    #[test]
    fn unstable_vertex_is_rejected() {
        let p = DMatrix::identity(2, 2) * 1.1;
        let q = DMatrix::identity(2, 2);
        let err = find_cost_matrix(&[p], &q, None, None, &LmiSettings::default()).unwrap_err();
        assert!(matches!(err, SolverError::InfeasibleLmi { .. }));
    }
}
