//! Set-membership adaptive estimator: filtered regressor, state predictor,
//! recursive least squares with forgetting, error-bound decay and the
//! feasible parameter set.

use nalgebra::{DMatrix, DVector};

use crate::error::{ControlError, GeometryError};
use crate::linalg::{max_sym_eig, spectral_radius};
use crate::polytope::{ellipsoid_outer_polytope, Ellipsoid, Polytope, VertexSet};

/// `x⁺ = A(θ)x + B(θ)u` with `A(θ) = A₀ + Σθᵢ Aᵢ` and `B(θ) = B₀ + Σθᵢ Bᵢ`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParametricModel {
    pub base_a: DMatrix<f64>,
    pub base_b: DMatrix<f64>,
    pub delta_a: Vec<DMatrix<f64>>,
    pub delta_b: Vec<DMatrix<f64>>,
}

impl ParametricModel {
    pub fn new(
        base_a: DMatrix<f64>,
        base_b: DMatrix<f64>,
        delta_a: Vec<DMatrix<f64>>,
        delta_b: Vec<DMatrix<f64>>,
    ) -> Result<Self, ControlError> {
        let nx = base_a.nrows();
        let nu = base_b.ncols();
        if base_a.ncols() != nx || base_b.nrows() != nx {
            return Err(ControlError::Config(
                "A0 must be square and B0 must have n_x rows".into(),
            ));
        }
        if delta_a.len() != delta_b.len() || delta_a.is_empty() {
            return Err(ControlError::Config(format!(
                "{} parameter matrices for A but {} for B",
                delta_a.len(),
                delta_b.len()
            )));
        }
        if delta_a.iter().any(|a| a.shape() != (nx, nx))
            || delta_b.iter().any(|b| b.shape() != (nx, nu))
        {
            return Err(ControlError::Config(
                "parameter matrices disagree with A0/B0 shapes".into(),
            ));
        }
        Ok(Self {
            base_a,
            base_b,
            delta_a,
            delta_b,
        })
    }

    pub fn n_x(&self) -> usize {
        self.base_a.nrows()
    }

    pub fn n_u(&self) -> usize {
        self.base_b.ncols()
    }

    pub fn n_theta(&self) -> usize {
        self.delta_a.len()
    }

    pub fn a(&self, theta: &DVector<f64>) -> DMatrix<f64> {
        let mut a = self.base_a.clone();
        for (t, ai) in theta.iter().zip(&self.delta_a) {
            a += ai * *t;
        }
        a
    }

    pub fn b(&self, theta: &DVector<f64>) -> DMatrix<f64> {
        let mut b = self.base_b.clone();
        for (t, bi) in theta.iter().zip(&self.delta_b) {
            b += bi * *t;
        }
        b
    }

    /// Closed-loop matrix `A(θ) + B(θ)K`.
    pub fn closed_loop(&self, theta: &DVector<f64>, k: &DMatrix<f64>) -> DMatrix<f64> {
        self.a(theta) + self.b(theta) * k
    }

    pub fn step(&self, theta: &DVector<f64>, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        self.a(theta) * x + self.b(theta) * u
    }

    /// `g(x, u)` with columns `Aᵢx + Bᵢu`, so that `g·θ = Σθᵢ(Aᵢx + Bᵢu)`.
    pub fn regressor(&self, x: &DVector<f64>, u: &DVector<f64>) -> DMatrix<f64> {
        regressor(self, x, u)
    }
}

pub fn regressor(model: &ParametricModel, x: &DVector<f64>, u: &DVector<f64>) -> DMatrix<f64> {
    let mut g = DMatrix::zeros(model.n_x(), model.n_theta());
    for i in 0..model.n_theta() {
        g.set_column(i, &(&model.delta_a[i] * x + &model.delta_b[i] * u));
    }
    g
}

/// Estimator parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorConfig {
    /// Forgetting factor λ in (0, 1].
    pub forgetting: f64,
    pub gamma0: DMatrix<f64>,
    /// Predictor gain K_e (Schur stable).
    pub ke: DMatrix<f64>,
    /// Radius r₀ of the initial parameter ball Θ₀ = {‖θ‖ ≤ r₀}.
    pub radius: f64,
    pub eps_x: f64,
    pub eps_r: f64,
    pub pol_directions: usize,
}

/// Recursion state at the start of a step.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorState {
    pub theta_hat: DVector<f64>,
    pub gamma: DMatrix<f64>,
    pub bound: f64,
    pub filter_w: DMatrix<f64>,
    pub x_hat: DVector<f64>,
    pub eta: DVector<f64>,
    pub fss: Polytope,
    pub ellipsoid: Ellipsoid,
    pub updates: usize,
}

/// `w₊ = g(x,u) − K_e w`.
pub fn filter_update(w: &DMatrix<f64>, ke: &DMatrix<f64>, g: &DMatrix<f64>) -> DMatrix<f64> {
    g - ke * w
}

/// `x̂₊ = A₀x + B₀u + g·θ̂₊ + K_e·x̃ + K_e·w·(θ̂ − θ̂₊)`.
#[allow(clippy::too_many_arguments)]
pub fn predict_state(
    model: &ParametricModel,
    ke: &DMatrix<f64>,
    x: &DVector<f64>,
    u: &DVector<f64>,
    w: &DMatrix<f64>,
    x_tilde: &DVector<f64>,
    theta_hat: &DVector<f64>,
    theta_next: &DVector<f64>,
) -> DVector<f64> {
    let g = regressor(model, x, u);
    &model.base_a * x
        + &model.base_b * u
        + g * theta_next
        + ke * x_tilde
        + ke * w * (theta_hat - theta_next)
}

/// RLS step: `Γ₊ = λΓ + wᵀw`, `θ̂₊ = θ̂ + Γ₊⁻¹wᵀ(x̃ − η)`.
pub fn rls_update(
    theta_hat: &DVector<f64>,
    gamma: &DMatrix<f64>,
    w: &DMatrix<f64>,
    x_tilde: &DVector<f64>,
    eta: &DVector<f64>,
    forgetting: f64,
) -> Result<(DVector<f64>, DMatrix<f64>), ControlError> {
    let gamma_next = crate::linalg::symmetrize(&(gamma * forgetting + w.transpose() * w));
    let chol = gamma_next
        .clone()
        .cholesky()
        .ok_or_else(|| ControlError::Config("RLS gain lost positive definiteness".into()))?;
    let theta_next = theta_hat + chol.solve(&(w.transpose() * (x_tilde - eta)));
    Ok((theta_next, gamma_next))
}

/// `η₊ = −K_e·η`.
pub fn eta_update(eta: &DVector<f64>, ke: &DMatrix<f64>) -> DVector<f64> {
    -(ke * eta)
}

/// `𝒱₊ = λ𝒱`.
pub fn bound_update(bound: f64, forgetting: f64) -> f64 {
    forgetting * bound
}

/// `‖x̃‖ ≥ ε_x` or `𝒱 ≥ ε_r`.
pub fn should_update(x_tilde: &DVector<f64>, bound: f64, eps_x: f64, eps_r: f64) -> bool {
    x_tilde.norm() >= eps_x || bound >= eps_r
}

/// Ellipsoid from `(θ̂, Γ, 𝒱)` and the next feasible set `Pol(Θ̂) ∩ Θ̄`.
pub fn fss_update(
    theta_hat: &DVector<f64>,
    gamma: &DMatrix<f64>,
    bound: f64,
    fss: &Polytope,
    pol_directions: usize,
) -> Result<(Ellipsoid, Polytope, VertexSet), GeometryError> {
    let e = Ellipsoid::new(theta_hat.clone(), gamma.clone(), bound)?;
    let outer = ellipsoid_outer_polytope(&e, pol_directions)?;
    let next = outer.intersect(fss)?;
    let vs = next.vertices()?;
    Ok((e, next, vs))
}

/// Result of the update phase of one step.
#[derive(Debug, Clone, PartialEq)]
pub struct UpdateInfo {
    pub x_tilde: DVector<f64>,
    pub updated: bool,
}

/// Owner of the estimator recursion.
#[derive(Debug, Clone)]
pub struct Estimator {
    model: ParametricModel,
    config: EstimatorConfig,
    state: EstimatorState,
    /// θ̂ at the start of the current step, before any update.
    theta_step_start: DVector<f64>,
    x_tilde: DVector<f64>,
    enabled: bool,
}

impl Estimator {
    pub fn new(
        model: ParametricModel,
        config: EstimatorConfig,
        x0: &DVector<f64>,
    ) -> Result<Self, ControlError> {
        let nt = model.n_theta();
        let nx = model.n_x();
        if config.gamma0.shape() != (nt, nt) || config.ke.shape() != (nx, nx) {
            return Err(ControlError::Config("Γ₀ or K_e has the wrong shape".into()));
        }
        if !(config.forgetting > 0.0 && config.forgetting <= 1.0) {
            return Err(ControlError::Config(format!(
                "forgetting factor {} outside (0, 1]",
                config.forgetting
            )));
        }
        if spectral_radius(&config.ke) >= 1.0 {
            return Err(ControlError::Config("K_e is not Schur stable".into()));
        }
        if config.radius <= 0.0 {
            return Err(ControlError::Config(
                "initial parameter ball must have positive radius".into(),
            ));
        }
        if x0.len() != nx {
            return Err(ControlError::Config(
                "initial state has the wrong dimension".into(),
            ));
        }
        let theta0 = DVector::zeros(nt);
        let bound0 = max_sym_eig(&config.gamma0) * config.radius * config.radius;
        let ball = Ellipsoid::new(
            theta0.clone(),
            DMatrix::identity(nt, nt),
            config.radius * config.radius,
        )?;
        let fss = ellipsoid_outer_polytope(&ball, config.pol_directions)?;
        let ellipsoid = Ellipsoid::new(theta0.clone(), config.gamma0.clone(), bound0)?;
        let state = EstimatorState {
            theta_hat: theta0.clone(),
            gamma: config.gamma0.clone(),
            bound: bound0,
            filter_w: DMatrix::zeros(nx, nt),
            x_hat: x0.clone(),
            eta: DVector::zeros(nx),
            fss,
            ellipsoid,
            updates: 0,
        };
        Ok(Self {
            model,
            config,
            state,
            theta_step_start: theta0,
            x_tilde: DVector::zeros(nx),
            enabled: true,
        })
    }

    /// Disable all parameter updates (θ̂ and Θ̄ stay at their initial values).
    pub fn disable(&mut self) {
        self.enabled = false;
    }

    pub fn state(&self) -> &EstimatorState {
        &self.state
    }

    pub fn model(&self) -> &ParametricModel {
        &self.model
    }

    pub fn config(&self) -> &EstimatorConfig {
        &self.config
    }

    /// Measure `x_k`, decide whether to update, and if so refresh θ̂, Γ, 𝒱 and Θ̄.
    pub fn begin_step(&mut self, x: &DVector<f64>) -> Result<UpdateInfo, ControlError> {
        let s = &self.state;
        let x_tilde = x - &s.x_hat;
        self.theta_step_start = s.theta_hat.clone();
        let updated =
            self.enabled && should_update(&x_tilde, s.bound, self.config.eps_x, self.config.eps_r);
        if updated {
            let (theta, gamma) = rls_update(
                &s.theta_hat,
                &s.gamma,
                &s.filter_w,
                &x_tilde,
                &s.eta,
                self.config.forgetting,
            )?;
            let bound = bound_update(s.bound, self.config.forgetting);
            let (ellipsoid, fss, _) =
                fss_update(&theta, &gamma, bound, &s.fss, self.config.pol_directions)?;
            self.state.theta_hat = theta;
            self.state.gamma = gamma;
            self.state.bound = bound;
            self.state.ellipsoid = ellipsoid;
            self.state.fss = fss;
            self.state.updates += 1;
        }
        self.x_tilde = x_tilde.clone();
        Ok(UpdateInfo { x_tilde, updated })
    }

    /// Propagate filter, predictor and auxiliary signal once `u_k` is applied.
    pub fn end_step(&mut self, x: &DVector<f64>, u: &DVector<f64>) {
        let s = &self.state;
        let x_hat = predict_state(
            &self.model,
            &self.config.ke,
            x,
            u,
            &s.filter_w,
            &self.x_tilde,
            &self.theta_step_start,
            &s.theta_hat,
        );
        let g = regressor(&self.model, x, u);
        let w = filter_update(&s.filter_w, &self.config.ke, &g);
        let eta = eta_update(&s.eta, &self.config.ke);
        self.state.x_hat = x_hat;
        self.state.filter_w = w;
        self.state.eta = eta;
    }
}
