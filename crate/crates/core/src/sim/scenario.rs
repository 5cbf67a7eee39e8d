use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::SimError;
use crate::estimator::{EstimatorConfig, ParametricModel};
use crate::linalg::{dlqr, mat_from_rows, spectral_radius};
use crate::polytope::InvariantSettings;
use crate::polytope::{ellipsoid_outer_polytope, Ellipsoid};
use crate::solver::{LmiSettings, QpSettings};
use crate::tube::{ConstraintData, ControllerConfig, Mode, TerminalSettings, DEFAULT_HORIZON_CAP};

type Rows = Vec<Vec<f64>>;

/// Scenario file contents. Matrices are written row-major as nested arrays.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub name: String,
    pub model: ModelSection,
    pub uncertainty: UncertaintySection,
    pub constraints: ConstraintSection,
    pub cost: CostSection,
    pub controller: ControllerSection,
    pub estimator: EstimatorSection,
    pub simulation: SimulationSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    /// `A₀, A₁, …, A_p`.
    pub a: Vec<Rows>,
    /// `B₀, B₁, …, B_p`.
    pub b: Vec<Rows>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UncertaintySection {
    /// Radius of the initial parameter ball.
    pub radius: f64,
    /// Parameter of the simulated plant.
    pub theta_true: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstraintSection {
    pub x_max: Option<Vec<f64>>,
    pub u_max: Option<Vec<f64>>,
    /// Raw `F` of `Fx + Gu ≤ 1`, used instead of the boxes when present.
    pub f: Option<Rows>,
    pub g: Option<Rows>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostSection {
    pub q: Rows,
    pub r: Rows,
}

/// Feedback gain given explicitly or the keyword `"synthesize"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GainSpec {
    Matrix(Rows),
    Keyword(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerSection {
    /// Synthesized when absent.
    #[serde(default = "default_gain")]
    pub gain: GainSpec,
    pub horizon: usize,
    #[serde(default = "default_lambda_c")]
    pub lambda_c: f64,
    #[serde(default = "default_horizon_cap")]
    pub horizon_cap: usize,
    /// Tube shape `V`; synthesized when absent.
    pub tube_shape: Option<Rows>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorSection {
    pub forgetting: f64,
    /// `Γ₀ = β·I`.
    pub gamma0_scale: f64,
    pub eps_x: f64,
    pub eps_r: f64,
    /// `K_e = κ·I`.
    #[serde(default = "default_kappa")]
    pub ke_kappa: f64,
    #[serde(default = "default_directions")]
    pub pol_directions: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSection {
    #[serde(default = "default_steps")]
    pub steps: usize,
    pub x0: Vec<f64>,
    #[serde(default = "default_mode")]
    pub mode: Mode,
    #[serde(default)]
    pub seed: u64,
}

fn default_gain() -> GainSpec {
    GainSpec::Keyword("synthesize".into())
}

fn default_lambda_c() -> f64 {
    0.95
}

fn default_horizon_cap() -> usize {
    DEFAULT_HORIZON_CAP
}

fn default_kappa() -> f64 {
    0.5
}

fn default_directions() -> usize {
    8
}

fn default_steps() -> usize {
    20
}

fn default_mode() -> Mode {
    Mode::Adaptive
}

/// Validated scenario with the numerical objects built.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub model: ParametricModel,
    pub constraints: ConstraintData,
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub theta_true: DVector<f64>,
    pub x0: DVector<f64>,
}

impl Scenario {
    pub fn estimator_config(&self) -> EstimatorConfig {
        let e = &self.config.estimator;
        let nt = self.model.n_theta();
        let nx = self.model.n_x();
        EstimatorConfig {
            forgetting: e.forgetting,
            gamma0: DMatrix::identity(nt, nt) * e.gamma0_scale,
            ke: DMatrix::identity(nx, nx) * e.ke_kappa,
            radius: self.config.uncertainty.radius,
            eps_x: e.eps_x,
            eps_r: e.eps_r,
            pol_directions: e.pol_directions,
        }
    }

    pub fn controller_config(&self, mode: Mode) -> ControllerConfig {
        let c = &self.config.controller;
        ControllerConfig {
            horizon: c.horizon,
            q: self.q.clone(),
            r: self.r.clone(),
            lambda_c: c.lambda_c,
            mode,
            terminal: TerminalSettings {
                horizon_cap: c.horizon_cap,
                invariant: InvariantSettings::default(),
                lmi: LmiSettings::default(),
            },
            qp: QpSettings::default(),
            tube_shape: c.tube_shape.as_ref().map(|v| mat_from_rows(v)),
        }
    }

    pub fn steps(&self) -> usize {
        self.config.simulation.steps
    }
}

fn schema(path: &str, message: impl Into<String>) -> SimError {
    SimError::Schema {
        path: path.to_string(),
        message: message.into(),
    }
}

fn matrix(
    path: &str,
    rows: &Rows,
    shape: Option<(usize, usize)>,
) -> Result<DMatrix<f64>, SimError> {
    if rows.is_empty() || rows[0].is_empty() {
        return Err(schema(path, "matrix is empty"));
    }
    if rows.iter().any(|r| r.len() != rows[0].len()) {
        return Err(schema(path, "rows have different lengths"));
    }
    if rows.iter().flatten().any(|v| !v.is_finite()) {
        return Err(schema(path, "entries must be finite"));
    }
    let m = mat_from_rows(rows);
    if let Some(s) = shape {
        if m.shape() != s {
            return Err(schema(
                path,
                format!("expected {}x{}, got {}x{}", s.0, s.1, m.nrows(), m.ncols()),
            ));
        }
    }
    Ok(m)
}

/// Parse and validate a scenario from TOML text.
pub fn parse_scenario(text: &str) -> Result<Scenario, SimError> {
    let de = toml::Deserializer::parse(text).map_err(|e| schema("", e.to_string()))?;
    let config: ScenarioConfig = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        schema(&path, e.into_inner().message().to_string())
    })?;
    build(config)
}

/// Read, parse and validate a scenario file.
pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario, SimError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| SimError::Io {
        context: format!("reading {}", path.display()),
        source,
    })?;
    parse_scenario(&text)
}

/// Validate a parsed configuration and build the numerical objects.
pub fn build(config: ScenarioConfig) -> Result<Scenario, SimError> {
    let m = &config.model;
    if m.a.len() < 2 || m.a.len() != m.b.len() {
        return Err(schema(
            "model",
            "need A₀..A_p and B₀..B_p with p ≥ 1 and equal counts",
        ));
    }
    let a0 = matrix("model.a[0]", &m.a[0], None)?;
    let nx = a0.nrows();
    if a0.ncols() != nx {
        return Err(schema("model.a[0]", "A₀ must be square"));
    }
    let b0 = matrix("model.b[0]", &m.b[0], None)?;
    let nu = b0.ncols();
    if b0.nrows() != nx {
        return Err(schema("model.b[0]", format!("expected {nx} rows")));
    }
    let mut da = Vec::new();
    let mut db = Vec::new();
    for i in 1..m.a.len() {
        da.push(matrix(&format!("model.a[{i}]"), &m.a[i], Some((nx, nx)))?);
        db.push(matrix(&format!("model.b[{i}]"), &m.b[i], Some((nx, nu)))?);
    }
    let model = ParametricModel::new(a0, b0, da, db)?;
    let nt = model.n_theta();

    let u = &config.uncertainty;
    if !(u.radius > 0.0) {
        return Err(schema("uncertainty.radius", "must be positive"));
    }
    if u.theta_true.len() != nt {
        return Err(schema(
            "uncertainty.theta_true",
            format!("expected {nt} entries"),
        ));
    }
    let theta_true = DVector::from_vec(u.theta_true.clone());
    if theta_true.norm() > u.radius {
        return Err(schema(
            "uncertainty.theta_true",
            format!(
                "norm {} lies outside the initial parameter ball of radius {}",
                theta_true.norm(),
                u.radius
            ),
        ));
    }

    let q = matrix("cost.q", &config.cost.q, Some((nx, nx)))?;
    let r = matrix("cost.r", &config.cost.r, Some((nu, nu)))?;

    let e = &config.estimator;
    if !(e.forgetting > 0.0 && e.forgetting <= 1.0) {
        return Err(schema("estimator.forgetting", "must lie in (0, 1]"));
    }
    if !(e.gamma0_scale > 0.0) {
        return Err(schema("estimator.gamma0_scale", "must be positive"));
    }
    if !(e.ke_kappa.abs() < 1.0) {
        return Err(schema(
            "estimator.ke_kappa",
            "K_e = κI must be Schur stable",
        ));
    }
    if e.pol_directions < nt + 1 {
        return Err(schema(
            "estimator.pol_directions",
            format!("need at least {}", nt + 1),
        ));
    }
    if !(e.eps_x >= 0.0 && e.eps_r >= 0.0) {
        return Err(schema("estimator.eps_x", "thresholds must be nonnegative"));
    }

    let c = &config.controller;
    if c.horizon == 0 {
        return Err(schema("controller.horizon", "must be positive"));
    }
    if !(c.lambda_c > 0.0 && c.lambda_c < 1.0) {
        return Err(schema("controller.lambda_c", "must lie in (0, 1)"));
    }
    let k = match &c.gain {
        GainSpec::Matrix(rows) => matrix("controller.gain", rows, Some((nu, nx)))?,
        GainSpec::Keyword(s) if s == "synthesize" => {
            synthesize_gain(&model, &q, &r, u.radius, e.pol_directions)
                .map_err(|msg| schema("controller.gain", msg))?
        }
        GainSpec::Keyword(s) => {
            return Err(schema(
                "controller.gain",
                format!("expected a matrix or \"synthesize\", got \"{s}\""),
            ))
        }
    };
    if let Some(v) = &c.tube_shape {
        matrix("controller.tube_shape", v, None).and_then(|m| {
            if m.ncols() == nx {
                Ok(())
            } else {
                Err(schema(
                    "controller.tube_shape",
                    format!("expected {nx} columns"),
                ))
            }
        })?;
    }

    let cs = &config.constraints;
    let constraints = match (&cs.f, &cs.g, &cs.x_max, &cs.u_max) {
        (Some(f), Some(g), None, None) => {
            let f = matrix("constraints.f", f, None)?;
            let g = matrix("constraints.g", g, None)?;
            if f.ncols() != nx || g.ncols() != nu || f.nrows() != g.nrows() {
                return Err(schema(
                    "constraints.f",
                    "F and G disagree with the model dimensions",
                ));
            }
            ConstraintData::new(f, g, k)?
        }
        (None, None, Some(xm), Some(um)) => {
            if xm.len() != nx || um.len() != nu {
                return Err(schema(
                    "constraints.x_max",
                    "bounds disagree with the model dimensions",
                ));
            }
            if xm.iter().chain(um).any(|b| !(*b > 0.0)) {
                return Err(schema("constraints.x_max", "bounds must be positive"));
            }
            ConstraintData::from_boxes(xm, um, k)?
        }
        _ => {
            return Err(schema(
                "constraints",
                "give either x_max and u_max or f and g",
            ))
        }
    };

    let s = &config.simulation;
    if s.x0.len() != nx {
        return Err(schema("simulation.x0", format!("expected {nx} entries")));
    }
    let x0 = DVector::from_vec(s.x0.clone());
    let state_rows = (0..constraints.n_con()).filter(|&i| constraints.g.row(i).amax() == 0.0);
    for i in state_rows {
        if constraints.f.row(i).dot(&x0.transpose()) >= 1.0 {
            return Err(schema(
                "simulation.x0",
                "initial state is not strictly inside the state constraints",
            ));
        }
    }

    Ok(Scenario {
        config,
        model,
        constraints,
        q,
        r,
        theta_true,
        x0,
    })
}

/// LQ gain of the nominal model, accepted when it stabilizes every vertex of
/// the initial parameter set.
pub fn synthesize_gain(
    model: &ParametricModel,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    radius: f64,
    directions: usize,
) -> Result<DMatrix<f64>, String> {
    let nt = model.n_theta();
    let (_, k) = dlqr(&model.base_a, &model.base_b, q, r)
        .ok_or("nominal LQ problem has no stabilizing solution")?;
    let ball = Ellipsoid::new(
        DVector::zeros(nt),
        DMatrix::identity(nt, nt),
        radius * radius,
    )
    .map_err(|e| e.to_string())?;
    let verts = ellipsoid_outer_polytope(&ball, directions)
        .and_then(|p| p.vertices())
        .map_err(|e| e.to_string())?;
    for t in &verts.points {
        let rho = spectral_radius(&model.closed_loop(t, &k));
        if rho >= 1.0 {
            return Err(format!(
                "synthesized gain leaves vertex {t:?} unstable (radius {rho})"
            ));
        }
    }
    log::info!("synthesized feedback gain {:?}", k.as_slice());
    Ok(k)
}
