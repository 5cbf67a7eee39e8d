#![allow(dead_code)]

use std::path::PathBuf;

pub use atmpc_core::sim::Scenario;
use atmpc_core::sim::{load_scenario, parse_scenario};
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn bundled_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios/paper_sec5.toml")
}

pub fn bundled() -> Scenario {
    load_scenario(bundled_path()).expect("bundled scenario loads")
}

pub fn bundled_text() -> String {
    std::fs::read_to_string(bundled_path()).unwrap()
}

/// Scalar plant `x₊ = (0.9 + 0.2θ)x + (1 + 0.1θ)u` with `θ ∈ [−1, 1]`.
pub const TOY: &str = r#"
name = "toy"

[model]
a = [[[0.9]], [[0.2]]]
b = [[[1.0]], [[0.1]]]

[uncertainty]
radius = 1.0
theta_true = [0.6]

[constraints]
x_max = [5.0]
u_max = [2.0]

[cost]
q = [[1.0]]
r = [[1.0]]

[controller]
gain = [[-0.6]]
horizon = 3

[estimator]
forgetting = 0.5
gamma0_scale = 0.15
eps_x = 0.001
eps_r = 0.001

[simulation]
steps = 15
x0 = [4.0]
"#;

pub fn toy() -> Scenario {
    parse_scenario(TOY).expect("toy scenario parses")
}

/// Uniform sample from the ball of radius `r` in `n` dimensions.
pub fn sample_ball(rng: &mut impl Rng, n: usize, r: f64) -> DVector<f64> {
    loop {
        let p = DVector::from_fn(n, |_, _| rng.random_range(-r..=r));
        if p.norm() <= r {
            return p;
        }
    }
}

/// Seeded draws of `θ*` in the initial parameter ball of a scenario.
pub fn random_truths(s: &Scenario, count: usize) -> Vec<DVector<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(s.config.simulation.seed);
    let r = s.config.uncertainty.radius;
    (0..count)
        .map(|_| sample_ball(&mut rng, s.model.n_theta(), r))
        .collect()
}

pub fn with_truth(s: &Scenario, theta: &DVector<f64>) -> Scenario {
    let mut s = s.clone();
    s.theta_true = theta.clone();
    s.config.uncertainty.theta_true = theta.iter().copied().collect();
    s
}
