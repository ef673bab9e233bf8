use std::time::Instant;

use nalgebra::{DMatrix, DVector, Vector3};
use serde::{Deserialize, Serialize};

use crate::dynamics::{step_nominal, ErrorState, SystemMatrices, VehicleParams};
use crate::error::{Error, Result};
use crate::qcqp::{self, Constraint, IpOptions, Qcqp, QcqpOutcome, Quadratic};
use crate::terminal::TerminalIngredients;

/// Tolerance on hard-constraint satisfaction of a returned optimum.
pub const CONSTRAINT_TOL: f64 = 1e-6;

/// Scalar weights: `Q = q I`, `R = r`, cooperative `Q_coop = q_coop I`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostWeights {
    pub q: f64,
    pub r: f64,
    pub q_coop: f64,
}

impl CostWeights {
    /// Weights with the cooperative weight tied to half the state weight.
    pub fn new(q: f64, r: f64) -> Self {
        CostWeights { q, r, q_coop: 0.5 * q }
    }
}

/// One vehicle's finite-horizon problem at a trigger.
#[derive(Debug, Clone)]
pub struct OcpSpec {
    pub x0: ErrorState,
    pub horizon: usize,
    pub weights: CostWeights,
    pub terminal: TerminalIngredients,
    pub matrices: SystemMatrices,
    pub params: VehicleParams,
    /// Predicted neighbour states for steps `0..=horizon`, one entry per neighbour.
    pub neighbors: Vec<Vec<ErrorState>>,
    /// Input applied at the previous step, anchoring the first increment.
    pub u_prev: f64,
    /// Tube shrink factor in (0, 1).
    pub varrho: f64,
    /// Neighbour-consistency level.
    pub zeta: f64,
}

impl OcpSpec {
    fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::Specification("horizon must be at least 1".into()));
        }
        if let Some(bad) = self.neighbors.iter().find(|nb| nb.len() < self.horizon + 1) {
            return Err(Error::Specification(format!(
                "neighbour prediction covers {} states, need {}",
                bad.len(),
                self.horizon + 1
            )));
        }
        Ok(())
    }

    /// Radius of the shrinking tube at stage `i`.
    pub fn tube_radius(&self, i: usize) -> f64 {
        (1.0 - self.varrho * i as f64 / self.horizon as f64) * self.params.state_radius()
    }

    fn coop_bound(&self) -> f64 {
        self.neighbors.len() as f64 * self.zeta
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OcpStatus {
    Optimal,
    Infeasible,
}

impl OcpStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            OcpStatus::Optimal => "optimal",
            OcpStatus::Infeasible => "infeasible",
        }
    }
}

#[derive(Debug, Clone)]
pub struct OcpSolution {
    pub status: OcpStatus,
    pub inputs: Vec<f64>,
    pub states: Vec<ErrorState>,
    pub cost: f64,
    pub iterations: usize,
    /// Largest constraint value at the returned point (<= 0 when satisfied),
    /// or the phase-1 optimum for an infeasible problem.
    pub violation: f64,
    /// Duality-gap bound at termination.
    pub gap: f64,
    pub wall_time: f64,
}

/// Roll inputs through the nominal model from `x0`.
pub fn rollout(x0: &ErrorState, inputs: &[f64], m: &SystemMatrices) -> Vec<ErrorState> {
    let mut states = Vec::with_capacity(inputs.len() + 1);
    states.push(*x0);
    for (i, u) in inputs.iter().enumerate() {
        states.push(step_nominal(&states[i], *u, m));
    }
    states
}

fn sq_norm_w(x: &Vector3<f64>, w: f64) -> f64 {
    w * x.norm_squared()
}

/// Stage costs plus cooperative costs over `0..N`, plus the terminal cost.
pub fn evaluate_cost(spec: &OcpSpec, inputs: &[f64], states: &[ErrorState]) -> Result<f64> {
    let n = spec.horizon;
    if inputs.len() != n || states.len() != n + 1 {
        return Err(Error::Specification(format!(
            "expected {n} inputs and {} states, got {} and {}",
            n + 1,
            inputs.len(),
            states.len()
        )));
    }
    spec.validate()?;
    let w = &spec.weights;
    let mut cost = 0.0;
    for i in 0..n {
        cost += sq_norm_w(&states[i], w.q) + w.r * inputs[i] * inputs[i];
        for nb in &spec.neighbors {
            cost += sq_norm_w(&(states[i] - nb[i]), w.q_coop);
        }
    }
    let xn = states[n];
    cost += (xn.transpose() * spec.terminal.p * xn)[0];
    Ok(cost)
}

/// Per-constraint values `g(x) <= 0` of a candidate, in a fixed order:
/// tube, cooperation, terminal, input box, increment box.
pub fn constraint_violation(spec: &OcpSpec, inputs: &[f64], states: &[ErrorState]) -> f64 {
    let n = spec.horizon;
    let p = &spec.params;
    let mut worst = f64::NEG_INFINITY;
    for i in 0..n {
        let r = spec.tube_radius(i);
        worst = worst.max(states[i].norm_squared() - r * r);
        if !spec.neighbors.is_empty() {
            let coop: f64 = spec
                .neighbors
                .iter()
                .map(|nb| sq_norm_w(&(states[i] - nb[i]), spec.weights.q_coop))
                .sum();
            worst = worst.max(coop - spec.coop_bound());
        }
    }
    let xn = states[n];
    worst = worst.max((xn.transpose() * spec.terminal.p * xn)[0] - spec.terminal.epsilon.powi(2));
    let mut prev = spec.u_prev;
    for &u in inputs {
        worst = worst.max(u - p.u_max).max(p.u_min - u);
        let du = u - prev;
        worst = worst.max(du - p.du_max).max(p.du_min - du);
        prev = u;
    }
    worst
}

/// Condensed prediction `x_i = free_i + G_i u`.
struct Prediction {
    free: Vec<Vector3<f64>>,
    gains: Vec<DMatrix<f64>>,
}

fn condense(spec: &OcpSpec) -> Prediction {
    let n = spec.horizon;
    let m = &spec.matrices;
    let mut free = Vec::with_capacity(n + 1);
    let mut gains = Vec::with_capacity(n + 1);
    free.push(spec.x0);
    gains.push(DMatrix::zeros(3, n));
    for i in 0..n {
        let next_free = m.a * free[i];
        let mut g = DMatrix::zeros(3, n);
        // G_{i+1} = A G_i + B e_i'
        let a_dyn = DMatrix::from_column_slice(3, 3, m.a.as_slice());
        g.columns_mut(0, i).copy_from(&(&a_dyn * gains[i].columns(0, i)));
        g.set_column(i, &DVector::from_column_slice(m.b.as_slice()));
        free.push(next_free);
        gains.push(g);
    }
    Prediction { free, gains }
}

fn v3(x: &Vector3<f64>) -> DVector<f64> {
    DVector::from_column_slice(x.as_slice())
}

fn weighted_quadratic(gain: &DMatrix<f64>, offset: &Vector3<f64>, weight: &DMatrix<f64>) -> Quadratic {
    // (offset + G u)' W (offset + G u) in 0.5 u'Hu + g'u + c form
    let wg = weight * gain;
    let off = v3(offset);
    Quadratic {
        h: gain.transpose() * &wg * 2.0,
        g: wg.transpose() * &off * 2.0,
        c: off.dot(&(weight * &off)),
    }
}

fn build_qcqp(spec: &OcpSpec, pred: &Prediction) -> Qcqp {
    let n = spec.horizon;
    let w = &spec.weights;
    let eye = DMatrix::<f64>::identity(3, 3);
    let p_dyn = DMatrix::from_column_slice(3, 3, spec.terminal.p.as_slice());

    let mut obj = Quadratic::zeros(n);
    let add = |obj: &mut Quadratic, q: Quadratic| {
        obj.h += q.h;
        obj.g += q.g;
        obj.c += q.c;
    };
    for i in 0..n {
        add(&mut obj, weighted_quadratic(&pred.gains[i], &pred.free[i], &(&eye * w.q)));
        for nb in &spec.neighbors {
            let off = pred.free[i] - nb[i];
            add(&mut obj, weighted_quadratic(&pred.gains[i], &off, &(&eye * w.q_coop)));
        }
        obj.h[(i, i)] += 2.0 * w.r;
    }
    add(&mut obj, weighted_quadratic(&pred.gains[n], &pred.free[n], &p_dyn));

    let mut cons = Vec::with_capacity(6 * n + 1);
    for i in 1..n {
        let mut tube = weighted_quadratic(&pred.gains[i], &pred.free[i], &eye);
        tube.c -= spec.tube_radius(i).powi(2);
        cons.push(Constraint::Quadratic(tube));
        if !spec.neighbors.is_empty() {
            let mut coop = Quadratic::zeros(n);
            for nb in &spec.neighbors {
                let off = pred.free[i] - nb[i];
                let q = weighted_quadratic(&pred.gains[i], &off, &(&eye * w.q_coop));
                coop.h += q.h;
                coop.g += q.g;
                coop.c += q.c;
            }
            coop.c -= spec.coop_bound();
            cons.push(Constraint::Quadratic(coop));
        }
    }
    let mut term = weighted_quadratic(&pred.gains[n], &pred.free[n], &p_dyn);
    term.c -= spec.terminal.epsilon.powi(2);
    cons.push(Constraint::Quadratic(term));

    let p = &spec.params;
    for i in 0..n {
        cons.push(Constraint::Linear { coeffs: vec![(i, 1.0)], b: p.u_max });
        cons.push(Constraint::Linear { coeffs: vec![(i, -1.0)], b: -p.u_min });
        if i == 0 {
            cons.push(Constraint::Linear { coeffs: vec![(0, 1.0)], b: p.du_max + spec.u_prev });
            cons.push(Constraint::Linear { coeffs: vec![(0, -1.0)], b: -(p.du_min + spec.u_prev) });
        } else {
            cons.push(Constraint::Linear { coeffs: vec![(i, 1.0), (i - 1, -1.0)], b: p.du_max });
            cons.push(Constraint::Linear { coeffs: vec![(i, -1.0), (i - 1, 1.0)], b: -p.du_min });
        }
    }
    Qcqp { objective: obj, constraints: cons }
}

fn infeasible(violation: f64, iterations: usize, started: Instant) -> OcpSolution {
    OcpSolution {
        status: OcpStatus::Infeasible,
        inputs: Vec::new(),
        states: Vec::new(),
        cost: f64::INFINITY,
        iterations,
        violation,
        gap: f64::NAN,
        wall_time: started.elapsed().as_secs_f64(),
    }
}

/// Solve the condensed QCQP over the input sequence.
///
/// `warm_start` is an input sequence of length `horizon`; a strictly feasible
/// one skips phase 1. Numerical breakdown of the interior method is returned
/// as `Err(SolverFailure)` with zeroed step/vehicle context.
pub fn solve_ocp(spec: &OcpSpec, warm_start: Option<&[f64]>) -> Result<OcpSolution> {
    let started = Instant::now();
    spec.validate()?;

    // Stage-0 constraints do not depend on the decision variables.
    let r0 = spec.tube_radius(0);
    let tube0 = spec.x0.norm_squared() - r0 * r0;
    if tube0 > CONSTRAINT_TOL {
        return Ok(infeasible(tube0, 0, started));
    }
    if !spec.neighbors.is_empty() {
        let coop0: f64 = spec
            .neighbors
            .iter()
            .map(|nb| sq_norm_w(&(spec.x0 - nb[0]), spec.weights.q_coop))
            .sum::<f64>()
            - spec.coop_bound();
        if coop0 > CONSTRAINT_TOL {
            return Ok(infeasible(coop0, 0, started));
        }
    }

    let pred = condense(spec);
    let problem = build_qcqp(spec, &pred);
    let start = warm_start
        .filter(|w| w.len() == spec.horizon)
        .map(DVector::from_column_slice);
    let opts = IpOptions {
        feas_tol: CONSTRAINT_TOL,
        ..Default::default()
    };
    let outcome = qcqp::solve(&problem, start.as_ref(), &opts).map_err(|reason| Error::SolverFailure {
        step: 0,
        vehicle: 0,
        reason,
    })?;
    match outcome {
        QcqpOutcome::Infeasible {
            min_violation,
            iterations,
        } => Ok(infeasible(min_violation, iterations, started)),
        QcqpOutcome::Optimal {
            x,
            gap,
            iterations,
            ..
        } => {
            let inputs: Vec<f64> = x.iter().copied().collect();
            let states = rollout(&spec.x0, &inputs, &spec.matrices);
            let cost = evaluate_cost(spec, &inputs, &states)?;
            let violation = constraint_violation(spec, &inputs, &states);
            Ok(OcpSolution {
                status: OcpStatus::Optimal,
                inputs,
                states,
                cost,
                iterations,
                violation,
                gap,
                wall_time: started.elapsed().as_secs_f64(),
            })
        }
    }
}
