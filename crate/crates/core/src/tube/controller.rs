use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::problem::ProblemTemplate;
use super::terminal::{initial_ingredients, updated_ingredients, TerminalSettings};
use super::types::{
    ConstraintData, MpcSolution, PredictionLift, TerminalIngredients, TerminalSource, TubeShape,
    VertexTransitionData,
};
use super::vertex::build_vertex_data;
use crate::error::{ControlError, SolverError};
use crate::estimator::{Estimator, EstimatorConfig, ParametricModel};
use crate::solver::QpSettings;

/// Which ingredients are refreshed after a parameter update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Estimator, vertex data, terminal set, horizon, tube bound and cost matrix.
    Adaptive,
    /// Estimator, vertex data and nominal model; terminal ingredients stay at `k = 0`.
    Simplified,
    /// No estimation: every ingredient stays at `k = 0`.
    Robust,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::Adaptive, Mode::Simplified, Mode::Robust];

    pub fn name(self) -> &'static str {
        match self {
            Mode::Adaptive => "adaptive",
            Mode::Simplified => "simplified",
            Mode::Robust => "robust",
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Mode {
    type Err = ControlError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "adaptive" => Ok(Mode::Adaptive),
            "simplified" => Ok(Mode::Simplified),
            "robust" => Ok(Mode::Robust),
            other => Err(ControlError::Config(format!("unknown mode `{other}`"))),
        }
    }
}

/// Controller parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ControllerConfig {
    pub horizon: usize,
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
    /// Contraction factor of the synthesized tube shape.
    pub lambda_c: f64,
    pub mode: Mode,
    pub terminal: TerminalSettings,
    pub qp: QpSettings,
    /// Tube shape to use instead of synthesizing one.
    pub tube_shape: Option<DMatrix<f64>>,
}

/// What happened during one controller step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepDiagnostics {
    pub step: usize,
    pub x: DVector<f64>,
    pub u: DVector<f64>,
    pub cost: f64,
    pub horizon_ext: usize,
    pub gamma: f64,
    pub n_c: usize,
    pub qp_iterations: usize,
    pub polished: bool,
    pub updated: bool,
    /// True when the problem ingredients were rebuilt this step.
    pub refreshed: bool,
    /// Terminal set origin when the terminal ingredients were recomputed.
    pub terminal_source: Option<TerminalSource>,
    pub cost_residual: f64,
    pub cost_order_gap: Option<f64>,
    pub max_violation: f64,
    pub theta_hat: DVector<f64>,
    pub bound: f64,
    pub solution: MpcSolution,
}

/// Adaptive tube MPC: estimator, tube and terminal ingredients, and problem P.
#[derive(Debug, Clone)]
pub struct TubeMpc {
    constraints: ConstraintData,
    config: ControllerConfig,
    tube: TubeShape,
    lift: PredictionLift,
    estimator: Estimator,
    data: VertexTransitionData,
    terminal: TerminalIngredients,
    initial_terminal: TerminalIngredients,
    template: ProblemTemplate,
    step: usize,
}

impl TubeMpc {
    pub fn new(
        model: ParametricModel,
        constraints: ConstraintData,
        estimator_config: EstimatorConfig,
        config: ControllerConfig,
        x0: &DVector<f64>,
    ) -> Result<Self, ControlError> {
        if constraints.f.ncols() != model.n_x() || constraints.g.ncols() != model.n_u() {
            return Err(ControlError::Config(
                "constraint matrices disagree with the model".into(),
            ));
        }
        if config.q.shape() != (model.n_x(), model.n_x())
            || config.r.shape() != (model.n_u(), model.n_u())
        {
            return Err(ControlError::Config("Q or R has the wrong shape".into()));
        }
        let mut estimator = Estimator::new(model, estimator_config, x0)?;
        if config.mode == Mode::Robust {
            estimator.disable();
        }
        let vertices = estimator.state().fss.vertices()?.points;
        let k = &constraints.k;
        let tube = match &config.tube_shape {
            Some(v) => TubeShape::from_shape(v.clone(), &constraints)?,
            None => {
                let maps: Vec<DMatrix<f64>> = vertices
                    .iter()
                    .map(|t| estimator.model().closed_loop(t, k))
                    .collect();
                TubeShape::synthesize(&maps, &constraints, config.lambda_c)?
            }
        };
        let lift = PredictionLift::new(config.horizon, &config.q, &config.r, k);
        let theta = estimator.state().theta_hat.clone();
        let data = build_vertex_data(estimator.model(), k, &theta, &vertices, &tube)?;
        let terminal = initial_ingredients(&data, &tube, &constraints, &lift, &config.terminal)?;
        let template =
            ProblemTemplate::assemble(&data, &tube, &constraints, &terminal, config.horizon)?;
        log::info!(
            "tube with {} faces, terminal set with {} faces, M = {}, γ = {:.6}",
            tube.n_v(),
            terminal.terminal_set.n_rows(),
            terminal.horizon_ext,
            terminal.gamma
        );
        Ok(Self {
            constraints,
            config,
            tube,
            lift,
            estimator,
            data,
            initial_terminal: terminal.clone(),
            terminal,
            template,
            step: 0,
        })
    }

    pub fn mode(&self) -> Mode {
        self.config.mode
    }

    pub fn estimator(&self) -> &Estimator {
        &self.estimator
    }

    pub fn tube(&self) -> &TubeShape {
        &self.tube
    }

    pub fn constraints(&self) -> &ConstraintData {
        &self.constraints
    }

    pub fn lift(&self) -> &PredictionLift {
        &self.lift
    }

    pub fn vertex_data(&self) -> &VertexTransitionData {
        &self.data
    }

    pub fn terminal(&self) -> &TerminalIngredients {
        &self.terminal
    }

    pub fn template(&self) -> &ProblemTemplate {
        &self.template
    }

    pub fn config(&self) -> &ControllerConfig {
        &self.config
    }

    pub fn step_index(&self) -> usize {
        self.step
    }

    /// Rebuild the ingredients after an estimator update.
    fn refresh(&mut self) -> Result<(bool, Option<TerminalSource>), ControlError> {
        let state = self.estimator.state();
        let vertices = state.fss.vertices()?.points;
        let vertices_changed = vertices != self.data.thetas;
        if !vertices_changed && state.theta_hat == self.data.theta_hat {
            return Ok((false, None));
        }
        let theta = state.theta_hat.clone();
        let data = build_vertex_data(
            self.estimator.model(),
            &self.constraints.k,
            &theta,
            &vertices,
            &self.tube,
        )?;
        let mut source = None;
        match self.config.mode {
            Mode::Adaptive => {
                let next = updated_ingredients(
                    &data,
                    &self.terminal,
                    &self.tube,
                    &self.constraints,
                    &self.lift,
                    &self.config.terminal,
                    vertices_changed,
                )?;
                source = Some(next.source);
                self.terminal = next;
            }
            Mode::Simplified => self.terminal = self.initial_terminal.clone(),
            Mode::Robust => unreachable!("the robust estimator never updates"),
        }
        self.data = data;
        self.template = ProblemTemplate::assemble(
            &self.data,
            &self.tube,
            &self.constraints,
            &self.terminal,
            self.config.horizon,
        )?;
        Ok((true, source))
    }

    /// One pass of the control loop at the measured state `x`; returns `u = Kx + v₀*`.
    pub fn step(
        &mut self,
        x: &DVector<f64>,
    ) -> Result<(DVector<f64>, StepDiagnostics), ControlError> {
        let info = self.estimator.begin_step(x)?;
        let (refreshed, terminal_source) = if info.updated {
            self.refresh()?
        } else {
            (false, None)
        };
        let solution = match self.template.solve(x, &self.config.qp) {
            Ok(s) => s,
            Err(SolverError::Infeasible) => {
                return Err(ControlError::InfeasibleAtStep { step: self.step })
            }
            Err(e) => return Err(e.into()),
        };
        let u = &self.constraints.k * x + &solution.v_seq[0];
        self.estimator.end_step(x, &u);
        let state = self.estimator.state();
        let diag = StepDiagnostics {
            step: self.step,
            x: x.clone(),
            u: u.clone(),
            cost: solution.cost,
            horizon_ext: self.terminal.horizon_ext,
            gamma: self.terminal.gamma,
            n_c: self.data.n_c(),
            qp_iterations: solution.iterations,
            polished: solution.polished,
            updated: info.updated,
            refreshed,
            terminal_source,
            cost_residual: self.terminal.cost_residual,
            cost_order_gap: self.terminal.cost_order_gap,
            max_violation: solution.max_violation,
            theta_hat: state.theta_hat.clone(),
            bound: state.bound,
            solution,
        };
        self.step += 1;
        Ok((u, diag))
    }
}
