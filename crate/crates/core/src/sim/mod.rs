//! Scenario files, closed-loop simulation, monitors and artifact export.

mod export;
mod run;
mod scenario;

pub use export::{
    export_comparison, export_run, performance_from_csv, report_json, snapshot_json, trace_header,
    write_trace_csv, DEFAULT_SNAPSHOTS,
};
pub use run::{
    compare_modes, performance_index, run_closed_loop, Comparison, MonitorReport,
    PerformanceReport, RunOutcome, SetSnapshot, TraceRow, CONSTRAINT_TOL, LYAPUNOV_TOL,
    MEMBERSHIP_TOL, ORDERING_TOL, ORDER_TOL,
};
pub use scenario::{
    build, load_scenario, parse_scenario, synthesize_gain, ConstraintSection, ControllerSection,
    CostSection, EstimatorSection, GainSpec, ModelSection, Scenario, ScenarioConfig,
    SimulationSection, UncertaintySection,
};
