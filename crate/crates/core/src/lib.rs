//! Adaptive homothetic-tube model predictive control for linear systems with
//! bounded parametric uncertainty.
//!
//! The crate is organized bottom-up: [`polytope`] and [`solver`] provide the
//! geometry and optimization kernels, [`estimator`] shrinks the parameter set
//! online, [`tube`] builds and solves the MPC problem, and [`sim`] runs
//! closed-loop scenarios.

pub mod error;
pub mod estimator;
pub mod linalg;
pub mod polytope;
pub mod sim;
pub mod solver;
pub mod tube;

pub use error::{ControlError, GeometryError, SimError, SolverError};
pub use estimator::{Estimator, EstimatorConfig, EstimatorState, ParametricModel};
pub use polytope::{Ellipsoid, Polytope, VertexSet};
pub use tube::{
    ConstraintData, ControllerConfig, Mode, MpcSolution, StepDiagnostics, TubeMpc, TubeShape,
};
