use nalgebra::DMatrix;

use super::types::{
    ConstraintData, PredictionLift, TerminalIngredients, TerminalSource, TubeShape,
    VertexTransitionData,
};
use super::vertex::support_triplet_with_powers;
use crate::error::{ControlError, GeometryError};
use crate::linalg::{max_sym_eig, min_sym_eig, vec_inf_norm};
use crate::polytope::{mrpi_set_with, nonneg_factor, InvariantSettings, Polytope};
use crate::solver::{find_cost_matrix, CostMatrix, LmiSettings};

/// Default cap on the tail horizon search.
pub const DEFAULT_HORIZON_CAP: usize = 50;

/// Result of the tail-horizon search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HorizonChoice {
    pub horizon: usize,
    pub gamma: f64,
    pub gamma_lower: f64,
    pub gamma_upper: f64,
}

/// Lower and upper bounds `(γ̲_l, γ̄_l)` on the terminal tube size.
pub fn gamma_bounds(
    z: &Polytope,
    data: &VertexTransitionData,
    tube: &TubeShape,
    constraints: &ConstraintData,
    l: usize,
) -> Result<(f64, f64), ControlError> {
    let powers: Vec<DMatrix<f64>> = data.phi.iter().map(|p| p.pow(l as u32)).collect();
    bounds_with_powers(z, data, tube, &constraints.closed_loop_rows(), &powers)
}

fn bounds_with_powers(
    z: &Polytope,
    data: &VertexTransitionData,
    tube: &TubeShape,
    closed_loop_rows: &DMatrix<f64>,
    powers: &[DMatrix<f64>],
) -> Result<(f64, f64), ControlError> {
    let triplets = support_triplet_with_powers(z, data, tube, closed_loop_rows, powers)?;
    let mut f_max = 0.0f64;
    let mut cg_max = 0.0f64;
    for t in &triplets {
        f_max = f_max.max(vec_inf_norm(&t.f));
        cg_max = cg_max.max(vec_inf_norm(&t.c) + vec_inf_norm(&t.g));
    }
    let lower = cg_max / (1.0 - data.max_h_norm());
    let upper = (1.0 - f_max) / tube.h_norm();
    Ok((lower, upper))
}

fn search(
    z: &Polytope,
    data: &VertexTransitionData,
    tube: &TubeShape,
    constraints: &ConstraintData,
    l_max: usize,
    gamma_floor: f64,
) -> Result<Option<HorizonChoice>, ControlError> {
    let rows = constraints.closed_loop_rows();
    let n = data.phi_hat.nrows();
    let mut powers: Vec<DMatrix<f64>> = vec![DMatrix::identity(n, n); data.n_c()];
    for l in 0..=l_max {
        let (lower, upper) = bounds_with_powers(z, data, tube, &rows, &powers)?;
        if upper >= lower && upper >= gamma_floor {
            return Ok(Some(HorizonChoice {
                horizon: l,
                gamma: upper,
                gamma_lower: lower,
                gamma_upper: upper,
            }));
        }
        for (p, phi) in powers.iter_mut().zip(&data.phi) {
            *p = phi * &*p;
        }
    }
    Ok(None)
}

/// Smallest `l ≤ l_max` with `γ̄_l ≥ γ̲_l`, and `γ = γ̄_l`.
pub fn find_horizon_and_gamma(
    terminal_set: &Polytope,
    data: &VertexTransitionData,
    tube: &TubeShape,
    constraints: &ConstraintData,
    l_max: usize,
) -> Result<HorizonChoice, ControlError> {
    search(
        terminal_set,
        data,
        tube,
        constraints,
        l_max,
        f64::NEG_INFINITY,
    )?
    .ok_or(ControlError::HorizonCap { cap: l_max })
}

/// Terminal set for the current vertex maps.
///
/// The MRPI set of the maps is accepted when it contains every vertex of
/// `φʲ·z_prev`; otherwise `z_prev` itself is returned.
pub fn update_terminal_set(
    data: &VertexTransitionData,
    constraints: &ConstraintData,
    z_prev: Option<&Polytope>,
    settings: &InvariantSettings,
) -> Result<(Polytope, TerminalSource), ControlError> {
    let fresh = constraints
        .closed_loop_set()
        .and_then(|c| mrpi_set_with(&data.phi, &c, settings));
    let Some(prev) = z_prev else {
        return Ok((fresh?, TerminalSource::Fresh));
    };
    let fresh = match fresh {
        Ok(z) => z,
        Err(e) => {
            log::debug!("fresh terminal set failed ({e}); keeping the previous one");
            return Ok((prev.clone(), TerminalSource::Previous));
        }
    };
    let verts = prev.vertices()?;
    let ok = data.phi.iter().all(|phi| {
        verts
            .points
            .iter()
            .all(|p| fresh.contains(&(phi * p), 1e-9))
    });
    if ok {
        Ok((fresh, TerminalSource::Fresh))
    } else {
        log::debug!("fresh terminal set fails the cross-step inclusion; keeping the previous one");
        Ok((prev.clone(), TerminalSource::Previous))
    }
}

/// `D ≥ 0` with `D·V = V_k`, where `V_k` are the terminal normals at offset one.
pub fn terminal_factor(
    tube: &TubeShape,
    terminal_set: &Polytope,
) -> Result<DMatrix<f64>, GeometryError> {
    let z = terminal_set.normalized()?;
    nonneg_factor(&tube.v, z.normals())
}

/// Vertex lifts `Ψʲ` and the nominal lift.
pub fn vertex_lifts(
    data: &VertexTransitionData,
    lift: &PredictionLift,
) -> (Vec<DMatrix<f64>>, DMatrix<f64>) {
    let lifts = data
        .phi
        .iter()
        .zip(&data.b)
        .map(|(p, b)| lift.lift(p, b))
        .collect();
    (lifts, lift.lift(&data.phi_hat, &data.b_hat))
}

/// Settings shared by the terminal synthesis routines.
#[derive(Debug, Clone, PartialEq)]
pub struct TerminalSettings {
    pub horizon_cap: usize,
    pub invariant: InvariantSettings,
    pub lmi: LmiSettings,
}

impl Default for TerminalSettings {
    fn default() -> Self {
        Self {
            horizon_cap: DEFAULT_HORIZON_CAP,
            invariant: InvariantSettings::default(),
            lmi: LmiSettings::default(),
        }
    }
}

fn cost_matrix(
    data: &VertexTransitionData,
    lift: &PredictionLift,
    w_prev: Option<&DMatrix<f64>>,
    settings: &TerminalSettings,
) -> Result<CostMatrix, ControlError> {
    let (lifts, nominal) = vertex_lifts(data, lift);
    Ok(find_cost_matrix(
        &lifts,
        &lift.qbar,
        w_prev,
        Some(&nominal),
        &settings.lmi,
    )?)
}

/// Ingredients at `k = 0`.
pub fn initial_ingredients(
    data: &VertexTransitionData,
    tube: &TubeShape,
    constraints: &ConstraintData,
    lift: &PredictionLift,
    settings: &TerminalSettings,
) -> Result<TerminalIngredients, ControlError> {
    let (z, source) = update_terminal_set(data, constraints, None, &settings.invariant)?;
    let choice = find_horizon_and_gamma(&z, data, tube, constraints, settings.horizon_cap)?;
    let cost = cost_matrix(data, lift, None, settings)?;
    let d = terminal_factor(tube, &z)?;
    Ok(assemble(z, d, choice, &cost, source))
}

fn assemble(
    terminal_set: Polytope,
    d: DMatrix<f64>,
    choice: HorizonChoice,
    cost: &CostMatrix,
    source: TerminalSource,
) -> TerminalIngredients {
    TerminalIngredients {
        terminal_set,
        d,
        gamma: choice.gamma,
        horizon_ext: choice.horizon,
        cost_w: cost.w.clone(),
        gamma_lower: choice.gamma_lower,
        gamma_upper: choice.gamma_upper,
        cost_residual: cost
            .vertex_residuals
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max),
        cost_order_gap: cost.order_gap,
        source,
    }
}

/// Ingredients after a parameter update.
///
/// The horizon search is restricted to `l ≤ M_prev` with `γ ≥ γ_prev`. It runs
/// on the fresh terminal set, then on the previous one; when both fail the
/// previous `(𝒵, M, γ)` are kept. When `vertices_changed` is false the
/// previous terminal set and cost matrix are reused.
pub fn updated_ingredients(
    data: &VertexTransitionData,
    prev: &TerminalIngredients,
    tube: &TubeShape,
    constraints: &ConstraintData,
    lift: &PredictionLift,
    settings: &TerminalSettings,
    vertices_changed: bool,
) -> Result<TerminalIngredients, ControlError> {
    let m_prev = prev.horizon_ext;
    let g_prev = prev.gamma;
    let mut candidates = Vec::with_capacity(2);
    if vertices_changed {
        let (z, source) = update_terminal_set(
            data,
            constraints,
            Some(&prev.terminal_set),
            &settings.invariant,
        )?;
        if source == TerminalSource::Fresh {
            candidates.push((z, TerminalSource::Fresh));
        }
    }
    candidates.push((prev.terminal_set.clone(), TerminalSource::Previous));

    let mut chosen = None;
    for (z, source) in candidates {
        if let Some(choice) = search(&z, data, tube, constraints, m_prev, g_prev)? {
            chosen = Some((z, source, choice));
            break;
        }
    }
    let (z, source, choice) = match chosen {
        Some(c) => c,
        None => {
            log::warn!(
                "no admissible tail horizon after update; keeping M = {m_prev}, γ = {g_prev}"
            );
            let choice = HorizonChoice {
                horizon: m_prev,
                gamma: g_prev,
                gamma_lower: prev.gamma_lower,
                gamma_upper: prev.gamma_upper,
            };
            (prev.terminal_set.clone(), TerminalSource::Kept, choice)
        }
    };
    let cost = if vertices_changed {
        cost_matrix(data, lift, Some(&prev.cost_w), settings)?
    } else {
        let (lifts, _) = vertex_lifts(data, lift);
        reuse_cost(&lifts, lift, prev)
    };
    let d = if source == TerminalSource::Fresh {
        terminal_factor(tube, &z)?
    } else {
        prev.d.clone()
    };
    Ok(assemble(z, d, choice, &cost, source))
}

fn reuse_cost(
    lifts: &[DMatrix<f64>],
    lift: &PredictionLift,
    prev: &TerminalIngredients,
) -> CostMatrix {
    let w = &prev.cost_w;
    let vertex_residuals = lifts
        .iter()
        .map(|p| max_sym_eig(&(p.transpose() * w * p - w + &lift.qbar)))
        .collect();
    CostMatrix {
        w: w.clone(),
        vertex_residuals,
        order_gap: Some(0.0),
        min_eigenvalue: min_sym_eig(w),
        reused_previous: true,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimator::ParametricModel;
    use crate::linalg::mat_from_rows;
    use crate::tube::vertex::build_vertex_data;
    use nalgebra::DVector;

    fn scalar_setup(
        a: f64,
        da: f64,
        thetas: &[f64],
    ) -> (VertexTransitionData, TubeShape, ConstraintData) {
        let model = ParametricModel::new(
            DMatrix::from_element(1, 1, a),
            DMatrix::from_element(1, 1, 1.0),
            vec![DMatrix::from_element(1, 1, da)],
            vec![DMatrix::zeros(1, 1)],
        )
        .unwrap();
        let c = ConstraintData::from_boxes(&[1.0], &[10.0], DMatrix::zeros(1, 1)).unwrap();
        let tube = TubeShape::from_shape(mat_from_rows(&[vec![1.0], vec![-1.0]]), &c).unwrap();
        let verts: Vec<DVector<f64>> = thetas
            .iter()
            .map(|&t| DVector::from_element(1, t))
            .collect();
        let th = DVector::zeros(1);
        let data = build_vertex_data(&model, &DMatrix::zeros(1, 1), &th, &verts, &tube).unwrap();
        (data, tube, c)
    }

    #[test]
    fn zero_uncertainty_gives_zero_horizon() {
        let (data, tube, c) = scalar_setup(0.5, 0.0, &[0.0]);
        let z = Polytope::hypercube(1, 0.2);
        let ch = find_horizon_and_gamma(&z, &data, &tube, &c, 50).unwrap();
        assert_eq!(ch.horizon, 0);
        // γ̲ = ḡ/(1 − 0.5) = 0.5·0.4/0.5, γ̄ = 1 − 0.2.
        assert!((ch.gamma_lower - 0.4).abs() < 1e-12);
        assert!((ch.gamma - 0.8).abs() < 1e-12);
    }

    #[test]
    fn horizon_matches_scan() {
        let (data, tube, c) = scalar_setup(0.5, 0.3, &[-1.0, 1.0]);
        let z = Polytope::hypercube(1, 1.0);
        let ch = find_horizon_and_gamma(&z, &data, &tube, &c, 50).unwrap();
        let first = (0..=50)
            .find(|&l| {
                let (lo, hi) = gamma_bounds(&z, &data, &tube, &c, l).unwrap();
                hi >= lo
            })
            .unwrap();
        assert_eq!(ch.horizon, first);
        assert!(ch.horizon > 0);
    }

    #[test]
    fn cap_is_reported() {
        let (data, tube, c) = scalar_setup(0.5, 0.3, &[-1.0, 1.0]);
        let z = Polytope::hypercube(1, 1.0);
        assert!(matches!(
            find_horizon_and_gamma(&z, &data, &tube, &c, 0),
            Err(ControlError::HorizonCap { cap: 0 })
        ));
    }

    #[test]
    fn factor_reproduces_terminal_rows() {
        let (_, tube, _) = scalar_setup(0.5, 0.0, &[0.0]);
        let z = Polytope::hypercube(1, 0.5);
        let d = terminal_factor(&tube, &z).unwrap();
        let vk = z.normalized().unwrap().normals().clone();
        assert!((&d * &tube.v - vk).amax() < 1e-12);
        assert!(d.min() >= 0.0);
    }
}
