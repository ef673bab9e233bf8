//! Adaptive cost weights and the adaptive prediction-horizon update.

use serde::{Deserialize, Serialize};

use crate::controller::{CostWeights, OcpSolution, OcpStatus};
use crate::dynamics::ErrorState;
use crate::error::{Error, Result};
use crate::terminal::TerminalIngredients;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HorizonRule {
    /// Minimum over the candidate terms, as the update formula is written.
    PaperMin,
    /// Terms read as lower bounds: `min(N0, max{...})`.
    ProseMax,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdaptationConfig {
    pub q0: f64,
    pub r0: f64,
    pub q1: f64,
    pub r1: f64,
    pub b: u32,
    pub c: u32,
    /// Allowable deviation, in units of `||.||_P`.
    pub xi: f64,
    /// Lower clamp on `q` and `r`; `None` means `0.1 min(q0, r0)`.
    pub weight_floor: Option<f64>,
    #[serde(rename = "N0")]
    pub n0: usize,
    pub horizon_rule: HorizonRule,
    /// Target level in the convergence term; `None` uses the vehicle's epsilon.
    pub epsilon_target: Option<f64>,
    /// Adapt `(q, r)` at every trigger; otherwise hold `(q0, r0)`.
    pub adaptive_weights: bool,
    /// Adapt `N`; otherwise hold `N0`.
    pub adaptive_horizon: bool,
}

impl Default for AdaptationConfig {
    fn default() -> Self {
        AdaptationConfig {
            q0: 10.0,
            r0: 1.0,
            q1: 20.0,
            r1: 3.5,
            b: 1,
            c: 1,
            xi: 0.5,
            weight_floor: None,
            n0: 30,
            horizon_rule: HorizonRule::PaperMin,
            epsilon_target: None,
            adaptive_weights: true,
            adaptive_horizon: true,
        }
    }
}

impl AdaptationConfig {
    pub fn floor(&self) -> f64 {
        self.weight_floor.unwrap_or(0.1 * self.q0.min(self.r0))
    }

    pub fn baseline(&self) -> CostWeights {
        CostWeights::new(self.q0, self.r0)
    }

    pub fn validate(&self) -> Result<()> {
        let floor = self.floor();
        if !(floor > 0.0 && floor.is_finite()) {
            return Err(Error::param("weight_floor", "must be positive and finite"));
        }
        for (name, v) in [("q0", self.q0), ("r0", self.r0), ("q1", self.q1), ("r1", self.r1)] {
            if !(v > floor && v.is_finite()) {
                return Err(Error::param(name, format!("must exceed the weight floor {floor}")));
            }
        }
        if self.b < 1 {
            return Err(Error::param("b", "must be at least 1"));
        }
        if self.c < 1 {
            return Err(Error::param("c", "must be at least 1"));
        }
        if !(self.xi > 0.0 && self.xi.is_finite()) {
            return Err(Error::param("xi", "must be positive"));
        }
        if self.n0 < 1 {
            return Err(Error::param("N0", "must be at least 1"));
        }
        if let Some(t) = self.epsilon_target {
            if !(t > 0.0 && t.is_finite()) {
                return Err(Error::param("epsilon_target", "must be positive"));
            }
        }
        Ok(())
    }
}

/// `||predicted - measured||_P / xi`.
pub fn deviation_ratio(
    predicted: &ErrorState,
    measured: &ErrorState,
    ingredients: &TerminalIngredients,
    xi: f64,
) -> f64 {
    ingredients.p_norm(&(predicted - measured)) / xi
}

/// Weights for a given deviation ratio. Below one the state weight is
/// reduced; at or above one the input weight is reduced.
pub fn update_weights(ratio: f64, config: &AdaptationConfig) -> CostWeights {
    let floor = config.floor();
    let ratio = ratio.max(0.0);
    let (q, r) = if ratio < 1.0 {
        (config.q0 - f64::from(config.b).exp() * ratio, config.r0)
    } else {
        (config.q1, config.r1 - f64::from(config.c).exp() * ratio)
    };
    CostWeights::new(q.max(floor), r.max(floor))
}

/// First index `i < N` whose optimal predicted state is in the epsilon-set,
/// or `N` when none is.
pub fn optimal_horizon(solution: &OcpSolution, ingredients: &TerminalIngredients) -> Result<usize> {
    if solution.status != OcpStatus::Optimal {
        return Err(Error::Specification("horizon estimate needs an optimal solution".into()));
    }
    let n = solution.inputs.len();
    Ok(solution.states[..n]
        .iter()
        .position(|x| ingredients.in_epsilon_set(x))
        .unwrap_or(n))
}

/// `lambda_min(P)(gamma^2 - eps^2) / (lambda_max(qI + K'rK) target^2) + 1`.
pub fn convergence_term(ingredients: &TerminalIngredients, weights: &CostWeights, target: f64) -> f64 {
    let decrease = nalgebra::Matrix3::identity() * weights.q
        + ingredients.k.transpose() * weights.r * ingredients.k;
    let lambda = nalgebra::SymmetricEigen::new(decrease).eigenvalues.max();
    let g2 = ingredients.gamma.powi(2) - ingredients.epsilon.powi(2);
    ingredients.lambda_min_p() * g2 / (lambda * target * target) + 1.0
}

/// Terms entering the horizon update at trigger `k^{s+1}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HorizonTerms {
    pub hat_n: usize,
    pub prev_n: usize,
    pub prev_trigger: usize,
    pub new_trigger: usize,
    pub convergence: f64,
    pub max_outage: usize,
}

impl HorizonTerms {
    /// `N^s + k^s - k^{s+1} + 1`, which may be negative.
    pub fn shift_term(&self) -> f64 {
        self.prev_n as f64 + self.prev_trigger as f64 - self.new_trigger as f64 + 1.0
    }
}

/// Next horizon under `rule`, rounded up and clamped to `[1, N0]`.
pub fn update_horizon(terms: &HorizonTerms, rule: HorizonRule, n0: usize) -> usize {
    let rest = [terms.shift_term(), terms.convergence, terms.max_outage as f64];
    let value = match rule {
        HorizonRule::PaperMin => rest.iter().fold(terms.hat_n as f64, |m, &t| m.min(t)),
        HorizonRule::ProseMax => rest.iter().fold(terms.hat_n as f64, |m, &t| m.max(t)),
    };
    let n = (value - 1e-9).ceil();
    if n.is_nan() || n < 1.0 {
        1
    } else {
        (n as usize).min(n0)
    }
}

/// Whether the horizon must go back to `N0`: the state, measured against the
/// current reference, has left the epsilon-set.
pub fn needs_reset(x: &ErrorState, ingredients: &TerminalIngredients) -> bool {
    !ingredients.in_epsilon_set(x)
}
