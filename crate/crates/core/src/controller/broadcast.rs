use serde::{Deserialize, Serialize};

use crate::dynamics::{step_nominal, ErrorState, SystemMatrices};
use crate::error::{Error, Result};
use crate::terminal::TerminalIngredients;

use super::ocp::{OcpSolution, OcpStatus};

/// Predicted error trajectory shared with neighbours.
///
/// The first `horizon_used` inputs come from the optimiser; the remaining
/// `full_len - horizon_used` are generated by the terminal feedback `K`, so
/// receivers always get `full_len` steps regardless of the horizon in use.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BroadcastTrajectory {
    pub origin_step: usize,
    pub horizon_used: usize,
    pub full_len: usize,
    /// `full_len + 1` states starting at `origin_step`.
    pub states: Vec<ErrorState>,
    /// `full_len` inputs starting at `origin_step`.
    pub inputs: Vec<f64>,
}

impl BroadcastTrajectory {
    /// A packet generated entirely by the terminal feedback from `x0`.
    pub fn feedback_rollout(
        origin_step: usize,
        x0: ErrorState,
        full_len: usize,
        terminal: &TerminalIngredients,
        m: &SystemMatrices,
    ) -> Self {
        let mut states = Vec::with_capacity(full_len + 1);
        let mut inputs = Vec::with_capacity(full_len);
        states.push(x0);
        for i in 0..full_len {
            let u = terminal.feedback(&states[i]);
            inputs.push(u);
            states.push(step_nominal(&states[i], u, m));
        }
        BroadcastTrajectory {
            origin_step,
            horizon_used: 0,
            full_len,
            states,
            inputs,
        }
    }

    /// Predicted state for absolute step `step`, extended past the end of the
    /// packet by the closed loop `A + BK`.
    pub fn state_at(&self, step: usize, terminal: &TerminalIngredients, m: &SystemMatrices) -> ErrorState {
        let idx = step.saturating_sub(self.origin_step);
        if idx <= self.full_len {
            return self.states[idx];
        }
        let acl = terminal.closed_loop(m);
        let mut x = self.states[self.full_len];
        for _ in self.full_len..idx {
            x = acl * x;
        }
        x
    }

    /// Input for absolute step `step`; past the packet, `K` times the
    /// extended state.
    pub fn input_at(&self, step: usize, terminal: &TerminalIngredients, m: &SystemMatrices) -> f64 {
        let idx = step.saturating_sub(self.origin_step);
        if idx < self.full_len {
            self.inputs[idx]
        } else {
            terminal.feedback(&self.state_at(step, terminal, m))
        }
    }

    /// Predictions for steps `from..=from + len`.
    pub fn window(&self, from: usize, len: usize, terminal: &TerminalIngredients, m: &SystemMatrices) -> Vec<ErrorState> {
        (0..=len).map(|i| self.state_at(from + i, terminal, m)).collect()
    }
}

/// Assemble the packet from an optimal solution: optimal prefix, then the
/// terminal-feedback tail up to `full_len`.
pub fn build_broadcast(
    solution: &OcpSolution,
    terminal: &TerminalIngredients,
    m: &SystemMatrices,
    origin_step: usize,
    full_len: usize,
) -> Result<BroadcastTrajectory> {
    if solution.status != OcpStatus::Optimal {
        return Err(Error::Specification("cannot broadcast an infeasible solution".into()));
    }
    let n = solution.inputs.len();
    if n > full_len {
        return Err(Error::Specification(format!(
            "horizon {n} exceeds packet length {full_len}"
        )));
    }
    let mut states = solution.states.clone();
    let mut inputs = solution.inputs.clone();
    for i in n..full_len {
        let u = terminal.feedback(&states[i]);
        inputs.push(u);
        states.push(step_nominal(&states[i], u, m));
    }
    Ok(BroadcastTrajectory {
        origin_step,
        horizon_used: n,
        full_len,
        states,
        inputs,
    })
}

/// Shifted warm start for the next trigger.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub inputs: Vec<f64>,
    pub states: Vec<ErrorState>,
}

/// Candidate sequence at `new_trigger`: the previous packet's inputs shifted
/// by the elapsed steps, continued by `K x` on the packet's states once the
/// optimised part is used up. States are regenerated from `x0`.
pub fn shift_candidate(
    prev: &BroadcastTrajectory,
    new_trigger: usize,
    horizon: usize,
    x0: ErrorState,
    terminal: &TerminalIngredients,
    m: &SystemMatrices,
) -> Result<Candidate> {
    if new_trigger < prev.origin_step {
        return Err(Error::Specification("candidate requested before packet origin".into()));
    }
    let shift = new_trigger - prev.origin_step;
    if shift > prev.full_len {
        return Err(Error::CandidateUnavailable {
            shift,
            len: prev.full_len,
        });
    }
    let inputs: Vec<f64> = (0..horizon)
        .map(|i| prev.input_at(new_trigger + i, terminal, m))
        .collect();
    let mut states = Vec::with_capacity(horizon + 1);
    states.push(x0);
    for (i, u) in inputs.iter().enumerate() {
        states.push(step_nominal(&states[i], *u, m));
    }
    Ok(Candidate { inputs, states })
}
