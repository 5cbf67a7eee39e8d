use thiserror::Error;

/// Failures of the embedded convex solvers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolverError {
    #[error("problem is infeasible")]
    Infeasible,
    #[error("problem is unbounded")]
    Unbounded,
    #[error("no convergence within {iterations} iterations")]
    MaxIterations { iterations: usize },
    #[error("vertex LMI has no feasible cost matrix: {reason}")]
    InfeasibleLmi { reason: String },
    #[error("malformed problem: {0}")]
    Malformed(String),
}

/// Failures of polytope arithmetic and invariant-set synthesis.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("support is unbounded in the requested direction")]
    Unbounded,
    #[error("polytope is empty")]
    Infeasible,
    #[error("intersection is empty")]
    EmptyIntersection,
    #[error("vertex enumeration supports dimensions 1 to 3, got {dim}")]
    DimensionUnsupported { dim: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("row {row} of the target is outside the conic hull of the shape rows")]
    ConicInfeasible { row: usize },
    #[error("invariant set iteration did not converge within {iterations} iterations")]
    IterationCap { iterations: usize },
    #[error("vertex map {index} has spectral radius {radius} >= 1")]
    Unstable { index: usize, radius: f64 },
    #[error("no {lambda}-contractive set found within {iterations} iterations")]
    NotContractive { lambda: f64, iterations: usize },
    #[error("invalid ellipsoid: {0}")]
    InvalidEllipsoid(String),
    #[error("invalid polytope: {0}")]
    InvalidPolytope(String),
    #[error(transparent)]
    Solver(#[from] SolverError),
}

/// Failures raised while synthesizing ingredients or running the controller.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ControlError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error("no horizon extension up to {cap} satisfies the terminal gamma bounds")]
    HorizonCap { cap: usize },
    #[error("problem P infeasible at step {step}")]
    InfeasibleAtStep { step: usize },
    #[error("invalid configuration: {0}")]
    Config(String),
}

/// Failures of scenario loading, closed-loop runs and artifact export.
#[derive(Debug, Error)]
pub enum SimError {
    #[error("scenario field `{path}`: {message}")]
    Schema { path: String, message: String },
    #[error("{context}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
    #[error("run failed at step {step}")]
    Run {
        step: usize,
        #[source]
        source: ControlError,
    },
    #[error(transparent)]
    Control(#[from] ControlError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("mode ordering violated: {0}")]
    OrderingViolation(String),
}
