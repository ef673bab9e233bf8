//! Per-vehicle MPC: cost, constrained solve, broadcast packets and the
//! recursive-feasibility check.

mod broadcast;
mod ocp;

use serde::{Deserialize, Serialize};

use crate::dynamics::{SystemMatrices, VehicleParams};
use crate::terminal::TerminalIngredients;

pub use broadcast::{build_broadcast, shift_candidate, BroadcastTrajectory, Candidate};
pub use ocp::{
    constraint_violation, evaluate_cost, rollout, solve_ocp, CostWeights, OcpSolution, OcpSpec, OcpStatus,
    CONSTRAINT_TOL,
};

/// Outcome of the disturbance-versus-margin test for recursive feasibility.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityCheck {
    /// Worst accumulated disturbance over an outage, `|D| w N_b`.
    pub delta_max: f64,
    /// `(gamma - epsilon) / lambda_max(sqrt P)`.
    pub terminal_margin: f64,
    /// `varrho |X| / N`.
    pub tube_margin: f64,
    pub passes: bool,
}

/// Evaluate the sufficient condition from its scalar ingredients.
#[allow(clippy::too_many_arguments)]
pub fn feasibility_condition(
    d_norm: f64,
    w_bound: f64,
    max_outage: usize,
    gamma: f64,
    epsilon: f64,
    lambda_max_sqrt_p: f64,
    varrho: f64,
    state_radius: f64,
    horizon: usize,
) -> FeasibilityCheck {
    let delta_max = d_norm * w_bound * max_outage as f64;
    let terminal_margin = (gamma - epsilon) / lambda_max_sqrt_p;
    let tube_margin = varrho * state_radius / horizon.max(1) as f64;
    FeasibilityCheck {
        delta_max,
        terminal_margin,
        tube_margin,
        passes: delta_max <= terminal_margin.min(tube_margin),
    }
}

pub fn check_feasibility_condition(
    ingredients: &TerminalIngredients,
    params: &VehicleParams,
    m: &SystemMatrices,
    horizon: usize,
    varrho: f64,
    max_outage: usize,
) -> FeasibilityCheck {
    feasibility_condition(
        m.d.norm(),
        params.w_bound,
        max_outage,
        ingredients.gamma,
        ingredients.epsilon,
        ingredients.lambda_max_p().sqrt(),
        varrho,
        params.state_radius(),
        horizon,
    )
}

/// One line of the per-solve log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveRecord {
    pub step: usize,
    pub vehicle: usize,
    #[serde(rename = "N")]
    pub horizon: usize,
    pub status: String,
    pub cost: f64,
    pub iterations: usize,
    pub residual: f64,
    pub wall_time: f64,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn delta_max_example() {
        let c = feasibility_condition(0.05, 0.2, 5, 2.0, 1.0, 2.0, 0.2, 50.0, 30);
        assert!((c.delta_max - 0.05).abs() < 1e-15);
    }

    #[test]
    fn margins_example() {
        let c = feasibility_condition(0.05, 0.2, 5, 2.0, 1.0, 2.0, 0.2, 50.0, 30);
        assert!((c.terminal_margin - 0.5).abs() < 1e-12);
        assert!((c.tube_margin - 1.0 / 3.0).abs() < 1e-12);
        assert!(c.passes);
    }

    #[test]
    fn no_disturbance_always_passes() {
        let c = feasibility_condition(0.05, 0.0, 100, 1.0, 0.99, 50.0, 0.01, 1.0, 1000);
        assert_eq!(c.delta_max, 0.0);
        assert!(c.passes);
    }
}
