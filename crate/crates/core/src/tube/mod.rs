//! Homothetic tube MPC with adaptive terminal ingredients.

mod controller;
mod problem;
mod terminal;
mod types;
mod vertex;

pub use controller::{ControllerConfig, Mode, StepDiagnostics, TubeMpc};
pub use problem::ProblemTemplate;
pub use terminal::{
    find_horizon_and_gamma, gamma_bounds, initial_ingredients, terminal_factor,
    update_terminal_set, updated_ingredients, vertex_lifts, HorizonChoice, TerminalSettings,
    DEFAULT_HORIZON_CAP,
};
pub use types::{
    ConstraintData, MpcSolution, PredictionLift, TerminalIngredients, TerminalSource, TubeShape,
    VertexTransitionData,
};
pub use vertex::{build_vertex_data, nominal_rollout, support_triplet, SupportTriplet};
