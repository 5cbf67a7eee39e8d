use nalgebra::DVector;
use serde::Serialize;

use super::scenario::Scenario;
use crate::error::{ControlError, SimError};
use crate::estimator::EstimatorState;
use crate::polytope::Polytope;
use crate::tube::{Mode, StepDiagnostics, TubeMpc};

/// Tolerance of the Lyapunov-decrease monitor.
pub const LYAPUNOV_TOL: f64 = 1e-5;
/// Tolerance of the closed-loop constraint monitor.
pub const CONSTRAINT_TOL: f64 = 1e-8;
/// Tolerance of the set-membership monitors.
pub const MEMBERSHIP_TOL: f64 = 1e-9;
/// Tolerance of the cost-matrix order monitor.
pub const ORDER_TOL: f64 = 1e-9;
/// Slack allowed in the mode ordering.
pub const ORDERING_TOL: f64 = 1e-9;

/// One closed-loop step.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub k: usize,
    pub x: DVector<f64>,
    pub u: DVector<f64>,
    /// `xᵀQx + uᵀRu`.
    pub stage: f64,
    pub cost: f64,
    pub horizon_ext: usize,
    pub gamma: f64,
    pub n_c: usize,
    pub qp_iterations: usize,
    pub updated: bool,
    /// `J*ₖ − J*ₖ₋₁ + ℓ(xₖ₋₁, uₖ₋₁)`; absent at `k = 0`.
    pub lyapunov_residual: Option<f64>,
    pub theta_hat: DVector<f64>,
    pub bound: f64,
}

/// Parameter set at the start of step `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct SetSnapshot {
    pub k: usize,
    pub set: Polytope,
    pub vertices: Vec<DVector<f64>>,
}

/// Counters of the monitors evaluated during a run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonitorReport {
    /// Steps where the true parameter left the feasible set or the ellipsoid bound.
    pub containment_violations: usize,
    /// Steps where a vertex of Θ̄ₖ₊₁ fell outside Θ̄ₖ.
    pub nesting_violations: usize,
    /// `𝒱ₖ = λ^{updates}𝒱₀` held exactly at every step.
    pub bound_schedule_exact: bool,
    /// Number of estimator updates.
    pub updates: usize,
    pub horizon_increases: usize,
    pub gamma_decreases: usize,
    pub max_cost_order_gap: f64,
    pub max_cost_residual: f64,
    pub max_lyapunov_residual: f64,
    pub lyapunov_violations: usize,
    pub max_problem_violation: f64,
    pub min_alpha: f64,
    /// Updates whose terminal search kept the previous `(𝒵, M, γ)`.
    pub terminal_kept: usize,
}

impl MonitorReport {
    /// All invariant monitors passed.
    pub fn passed(&self) -> bool {
        self.containment_violations == 0
            && self.nesting_violations == 0
            && self.bound_schedule_exact
            && self.horizon_increases == 0
            && self.gamma_decreases == 0
            && self.max_cost_order_gap <= ORDER_TOL
            && self.lyapunov_violations == 0
            && self.max_problem_violation <= 1e-6
            && self.min_alpha >= -1e-9
    }
}

/// Summary of one run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PerformanceReport {
    pub scenario: String,
    pub mode: Mode,
    pub steps: usize,
    /// `Σₖ ℓ(xₖ, uₖ) / T` over `k = 0..=T`.
    pub jp: f64,
    pub feasible: bool,
    pub max_constraint_violation: f64,
    pub final_state_norm: f64,
    pub final_bound: f64,
    pub tube_faces: usize,
    pub initial_horizon_ext: usize,
    pub initial_gamma: f64,
    pub initial_terminal_faces: usize,
    pub monitors: MonitorReport,
}

/// Trace, set snapshots and report of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub trace: Vec<TraceRow>,
    pub snapshots: Vec<SetSnapshot>,
    pub diagnostics: Vec<StepDiagnostics>,
    pub report: PerformanceReport,
}

/// `Σ ℓ / T`, the performance index of a trace.
pub fn performance_index(stages: impl IntoIterator<Item = f64>, steps: usize) -> f64 {
    let total: f64 = stages.into_iter().sum();
    total / steps.max(1) as f64
}

fn contains_truth(state: &EstimatorState, theta: &DVector<f64>) -> bool {
    let e = theta - &state.theta_hat;
    let quad = e.dot(&(&state.gamma * &e));
    state.fss.contains(theta, MEMBERSHIP_TOL) && quad <= state.bound * (1.0 + 1e-12) + 1e-15
}

/// Simulate `x₊ = A(θ*)x + B(θ*)u` for `k = 0..=T` under the given mode.
pub fn run_closed_loop(scenario: &Scenario, mode: Mode) -> Result<RunOutcome, SimError> {
    let mut controller = TubeMpc::new(
        scenario.model.clone(),
        scenario.constraints.clone(),
        scenario.estimator_config(),
        scenario.controller_config(mode),
        &scenario.x0,
    )?;
    let steps = scenario.steps();
    let theta_true = &scenario.theta_true;
    let forgetting = scenario.config.estimator.forgetting;
    let bound0 = controller.estimator().state().bound;
    let initial = controller.terminal().clone();

    let mut monitors = MonitorReport {
        containment_violations: 0,
        nesting_violations: 0,
        bound_schedule_exact: true,
        updates: 0,
        horizon_increases: 0,
        gamma_decreases: 0,
        max_cost_order_gap: f64::NEG_INFINITY,
        max_cost_residual: initial.cost_residual,
        max_lyapunov_residual: f64::NEG_INFINITY,
        lyapunov_violations: 0,
        max_problem_violation: f64::NEG_INFINITY,
        min_alpha: f64::INFINITY,
        terminal_kept: 0,
    };
    let mut trace = Vec::with_capacity(steps + 1);
    let mut snapshots = Vec::with_capacity(steps + 1);
    let mut diagnostics = Vec::with_capacity(steps + 1);
    let mut max_constraint_violation = f64::NEG_INFINITY;
    let mut x = scenario.x0.clone();
    let mut prev: Option<(f64, f64)> = None;
    let mut prev_terminal = (initial.horizon_ext, initial.gamma);

    let check_state = |state: &EstimatorState, monitors: &mut MonitorReport| {
        if !contains_truth(state, theta_true) {
            monitors.containment_violations += 1;
        }
        let expected = (0..state.updates).fold(bound0, |b, _| b * forgetting);
        if state.bound != expected {
            monitors.bound_schedule_exact = false;
        }
    };

    for k in 0..=steps {
        let state = controller.estimator().state().clone();
        check_state(&state, &mut monitors);
        snapshots.push(SetSnapshot {
            k,
            vertices: state.fss.vertices()?.points,
            set: state.fss.clone(),
        });

        let (u, diag) = controller.step(&x).map_err(|source| match source {
            ControlError::InfeasibleAtStep { step } => SimError::Run { step, source },
            other => SimError::Run {
                step: k,
                source: other,
            },
        })?;

        let next_fss = &controller.estimator().state().fss;
        if let Some(last) = snapshots.last() {
            if next_fss != &last.set {
                let inside = next_fss
                    .vertices()?
                    .points
                    .iter()
                    .all(|v| last.set.contains(v, MEMBERSHIP_TOL));
                if !inside {
                    monitors.nesting_violations += 1;
                }
            }
        }
        if diag.updated {
            monitors.updates += 1;
        }
        let (m, g) = (diag.horizon_ext, diag.gamma);
        if m > prev_terminal.0 {
            monitors.horizon_increases += 1;
        }
        if g < prev_terminal.1 {
            monitors.gamma_decreases += 1;
        }
        prev_terminal = (m, g);
        if diag.refreshed {
            if let Some(gap) = diag.cost_order_gap {
                monitors.max_cost_order_gap = monitors.max_cost_order_gap.max(gap);
            }
            monitors.max_cost_residual = monitors.max_cost_residual.max(diag.cost_residual);
            if diag.terminal_source == Some(crate::tube::TerminalSource::Kept) {
                monitors.terminal_kept += 1;
            }
        }
        monitors.max_problem_violation = monitors.max_problem_violation.max(diag.max_violation);
        let min_alpha = diag
            .solution
            .alpha_seq
            .iter()
            .map(|a| a.min())
            .fold(f64::INFINITY, f64::min);
        monitors.min_alpha = monitors.min_alpha.min(min_alpha);

        max_constraint_violation =
            max_constraint_violation.max(scenario.constraints.violation(&x, &u));
        let stage = x.dot(&(&scenario.q * &x)) + u.dot(&(&scenario.r * &u));
        let lyapunov_residual = prev.map(|(j, l)| diag.cost - j + l);
        if let Some(res) = lyapunov_residual {
            monitors.max_lyapunov_residual = monitors.max_lyapunov_residual.max(res);
            if res > LYAPUNOV_TOL {
                monitors.lyapunov_violations += 1;
            }
        }
        prev = Some((diag.cost, stage));
        log::debug!(
            "k = {k}: x = {:?}, u = {:?}, J = {:.6}, M = {m}, γ = {g:.6}, n_c = {}",
            x.as_slice(),
            u.as_slice(),
            diag.cost,
            diag.n_c
        );
        trace.push(TraceRow {
            k,
            x: x.clone(),
            u: u.clone(),
            stage,
            cost: diag.cost,
            horizon_ext: m,
            gamma: g,
            n_c: diag.n_c,
            qp_iterations: diag.qp_iterations,
            updated: diag.updated,
            lyapunov_residual,
            theta_hat: diag.theta_hat.clone(),
            bound: diag.bound,
        });
        diagnostics.push(diag);
        x = scenario.model.step(theta_true, &x, &u);
    }
    check_state(controller.estimator().state(), &mut monitors);
    if monitors.max_cost_order_gap == f64::NEG_INFINITY {
        monitors.max_cost_order_gap = 0.0;
    }
    if monitors.max_lyapunov_residual == f64::NEG_INFINITY {
        monitors.max_lyapunov_residual = 0.0;
    }

    let last_x = trace
        .last()
        .map(|r| r.x.norm())
        .unwrap_or_else(|| scenario.x0.norm());
    let report = PerformanceReport {
        scenario: scenario.config.name.clone(),
        mode,
        steps,
        jp: performance_index(trace.iter().map(|r| r.stage), steps),
        feasible: true,
        max_constraint_violation,
        final_state_norm: last_x,
        final_bound: controller.estimator().state().bound,
        tube_faces: controller.tube().n_v(),
        initial_horizon_ext: initial.horizon_ext,
        initial_gamma: initial.gamma,
        initial_terminal_faces: initial.terminal_set.n_rows(),
        monitors,
    };
    Ok(RunOutcome {
        trace,
        snapshots,
        diagnostics,
        report,
    })
}

/// Runs of every mode on one scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub runs: Vec<RunOutcome>,
}

impl Comparison {
    pub fn run(&self, mode: Mode) -> Option<&RunOutcome> {
        self.runs.iter().find(|r| r.report.mode == mode)
    }

    /// `J̄ₚ(adaptive) ≤ J̄ₚ(simplified) ≤ J̄ₚ(robust)` up to [`ORDERING_TOL`].
    pub fn check_ordering(&self) -> Result<(), SimError> {
        let jp = |m| self.run(m).map(|r| r.report.jp);
        let (Some(a), Some(s), Some(r)) =
            (jp(Mode::Adaptive), jp(Mode::Simplified), jp(Mode::Robust))
        else {
            return Err(SimError::OrderingViolation(
                "a mode is missing from the comparison".into(),
            ));
        };
        if a > s + ORDERING_TOL || s > r + ORDERING_TOL {
            return Err(SimError::OrderingViolation(format!(
                "adaptive {a}, simplified {s}, robust {r}"
            )));
        }
        Ok(())
    }

    /// Table of `J̄ₚ` per mode.
    pub fn summary(&self) -> String {
        let mut out = String::from("mode        J_p                 feasible  M0  gamma0\n");
        for r in &self.runs {
            let p = &r.report;
            out.push_str(&format!(
                "{:<11} {:<19} {:<9} {:<3} {}\n",
                p.mode.name(),
                p.jp,
                p.feasible,
                p.initial_horizon_ext,
                p.initial_gamma
            ));
        }
        out
    }
}

/// Run all three modes, each on its own thread.
pub fn compare_modes(scenario: &Scenario) -> Result<Comparison, SimError> {
    let results: Vec<Result<RunOutcome, SimError>> = std::thread::scope(|s| {
        let handles: Vec<_> = Mode::ALL
            .iter()
            .map(|&mode| s.spawn(move || run_closed_loop(scenario, mode)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("simulation thread panicked"))
            .collect()
    });
    let runs = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    Ok(Comparison { runs })
}
