//! Fixtures shared by the benchmarks.

use std::path::PathBuf;

use atmpc_core::sim::{load_scenario, Scenario};
use atmpc_core::{Mode, TubeMpc};

/// The bundled two-state scenario.
pub fn bundled_scenario() -> Scenario {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios/paper_sec5.toml");
    load_scenario(path).expect("bundled scenario loads")
}

/// A freshly initialized controller for `mode`.
pub fn controller(s: &Scenario, mode: Mode) -> TubeMpc {
    TubeMpc::new(
        s.model.clone(),
        s.constraints.clone(),
        s.estimator_config(),
        s.controller_config(mode),
        &s.x0,
    )
    .expect("controller builds")
}
