use nalgebra::{DMatrix, DVector};

use super::{factor::nonneg_factor, is_row_redundant_tol, Polytope};
use crate::error::GeometryError;
use crate::linalg::{inf_norm, spectral_radius};

pub const DEFAULT_MAX_ITER: usize = 500;
const ROW_GROWTH_CAP: f64 = 1e4;

/// Parameters of the backward set iterations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InvariantSettings {
    pub max_iter: usize,
    /// A candidate row `r` is dropped when `max rᵀx ≤ 1 + tol` over the current set.
    pub tol: f64,
}

impl Default for InvariantSettings {
    fn default() -> Self {
        Self {
            max_iter: DEFAULT_MAX_ITER,
            tol: 1e-11,
        }
    }
}

/// Breadth-first closure of `seed` under the row maps `r ↦ r·φʲ/scale`.
///
/// Returns the polytope `{x : Rx ≤ 1}` where every row of `R` maps to a
/// row implied by `R`, or `None` when the iteration cap is hit.
fn backward_closure(
    maps: &[DMatrix<f64>],
    scale: f64,
    seed: &Polytope,
    settings: &InvariantSettings,
) -> Result<Option<Polytope>, GeometryError> {
    let mut set = seed.normalized()?.remove_redundancy()?;
    let mut expanded = vec![false; set.n_rows()];
    // Rows this long mean the set has collapsed onto the origin: the joint
    // spectral radius of the maps is not below `scale`.
    let row_cap = ROW_GROWTH_CAP
        * (0..set.n_rows())
            .map(|i| set.normals().row(i).norm())
            .fold(0.0, f64::max);
    for _ in 0..settings.max_iter {
        let todo: Vec<usize> = (0..set.n_rows()).filter(|&i| !expanded[i]).collect();
        if todo.is_empty() {
            return Ok(Some(set));
        }
        for &i in &todo {
            expanded[i] = true;
        }
        let rows: Vec<DVector<f64>> = todo
            .iter()
            .map(|&i| set.normals().row(i).transpose())
            .collect();
        for r in &rows {
            for phi in maps {
                let cand = phi.transpose() * r / scale;
                if cand.amax() < 1e-14 {
                    continue;
                }
                if cand.norm() > row_cap {
                    return Ok(None);
                }
                if set.support(&cand)?.value <= 1.0 + settings.tol {
                    continue;
                }
                set.push_row(&cand, 1.0);
                expanded.push(false);
            }
        }
        // Prune rows implied by the others, keeping the expansion flags aligned.
        let m = set.n_rows();
        let mut keep = vec![true; m];
        for i in 0..m {
            let kept: Vec<usize> = (0..m).filter(|&k| keep[k]).collect();
            if kept.len() > 1 && is_row_redundant_tol(&set, &kept, i, settings.tol)? {
                keep[i] = false;
            }
        }
        let idx: Vec<usize> = (0..m).filter(|&k| keep[k]).collect();
        expanded = idx.iter().map(|&k| expanded[k]).collect();
        set = set.select_rows(&idx);
    }
    Ok(None)
}

fn check_maps(maps: &[DMatrix<f64>], dim: usize) -> Result<(), GeometryError> {
    if maps.is_empty() {
        return Err(GeometryError::DimensionMismatch("no vertex maps".into()));
    }
    if let Some(m) = maps.iter().find(|m| m.shape() != (dim, dim)) {
        return Err(GeometryError::DimensionMismatch(format!(
            "vertex map is {:?}, expected {dim}x{dim}",
            m.shape()
        )));
    }
    Ok(())
}

/// Maximal robustly positively invariant set of `x⁺ = φʲx` inside `constraint`.
pub fn mrpi_set(maps: &[DMatrix<f64>], constraint: &Polytope) -> Result<Polytope, GeometryError> {
    mrpi_set_with(maps, constraint, &InvariantSettings::default())
}

pub fn mrpi_set_with(
    maps: &[DMatrix<f64>],
    constraint: &Polytope,
    settings: &InvariantSettings,
) -> Result<Polytope, GeometryError> {
    check_maps(maps, constraint.dim())?;
    for (index, m) in maps.iter().enumerate() {
        let radius = spectral_radius(m);
        if radius >= 1.0 {
            return Err(GeometryError::Unstable { index, radius });
        }
    }
    let set =
        backward_closure(maps, 1.0, constraint, settings)?.ok_or(GeometryError::IterationCap {
            iterations: settings.max_iter,
        })?;
    // Certificate: every mapped row is implied by the set.
    for i in 0..set.n_rows() {
        let r = set.normals().row(i).transpose();
        for phi in maps {
            let s = set.support(&(phi.transpose() * &r))?.value;
            if s > 1.0 + 1e-9 {
                return Err(GeometryError::IterationCap {
                    iterations: settings.max_iter,
                });
            }
        }
    }
    Ok(set)
}

/// Shape matrix `V` of a `λ_c`-contractive polytope `{x : Vx ≤ 1} ⊆ seed`.
pub fn lambda_contractive_shape(
    maps: &[DMatrix<f64>],
    lambda_c: f64,
    seed: &Polytope,
) -> Result<DMatrix<f64>, GeometryError> {
    lambda_contractive_shape_with(maps, lambda_c, seed, &InvariantSettings::default())
}

pub fn lambda_contractive_shape_with(
    maps: &[DMatrix<f64>],
    lambda_c: f64,
    seed: &Polytope,
    settings: &InvariantSettings,
) -> Result<DMatrix<f64>, GeometryError> {
    check_maps(maps, seed.dim())?;
    let fail = GeometryError::NotContractive {
        lambda: lambda_c,
        iterations: settings.max_iter,
    };
    if !(lambda_c > 0.0 && lambda_c < 1.0) {
        return Err(GeometryError::InvalidPolytope(format!(
            "lambda_c = {lambda_c} is outside (0, 1)"
        )));
    }
    if maps.iter().any(|m| spectral_radius(m) >= lambda_c) {
        return Err(fail);
    }
    let set = backward_closure(maps, lambda_c, seed, settings)?.ok_or(fail.clone())?;
    let v = set.normals().clone();
    for phi in maps {
        let h = nonneg_factor(&v, &(&v * phi))?;
        if inf_norm(&h) > lambda_c + 1e-9 {
            return Err(fail);
        }
    }
    Ok(v)
}
