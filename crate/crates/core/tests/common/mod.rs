//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use nalgebra::{Matrix3, Vector3};
use platoon_core::controller::{CostWeights, OcpSpec};
use platoon_core::dynamics::{build_matrices, VehicleParams};
use platoon_core::terminal::{synthesize, TerminalIngredients};
use rand::Rng;

pub fn default_terminal() -> (platoon_core::dynamics::SystemMatrices, TerminalIngredients) {
    let params = VehicleParams::default();
    let m = build_matrices(&params).unwrap();
    let ing = synthesize(&m, &params, 10.0, 1.0, 0.5).unwrap();
    (m, ing)
}

/// Hand-written model of the prediction, cost and constraints, evaluated
/// from first principles rather than through the library's condensing.
pub struct Oracle<'a> {
    spec: &'a OcpSpec,
    a: Matrix3<f64>,
    b: Vector3<f64>,
}

impl<'a> Oracle<'a> {
    pub fn new(spec: &'a OcpSpec) -> Self {
        let h = spec.params.h;
        let tau = spec.params.tau_motor;
        #[rustfmt::skip]
        let a = Matrix3::new(1.0, h, 0.0, 0.0, 1.0, h, 0.0, 0.0, 1.0 - h / tau);
        Oracle {
            spec,
            a,
            b: Vector3::new(0.0, 0.0, h / tau),
        }
    }

    fn states(&self, u: &[f64]) -> Vec<Vector3<f64>> {
        let mut xs = vec![self.spec.x0];
        for &ui in u {
            let x = *xs.last().unwrap();
            xs.push(self.a * x + self.b * ui);
        }
        xs
    }

    /// `(cost, worst constraint value)`; feasible iff the second entry is <= 0.
    pub fn evaluate(&self, u: &[f64]) -> (f64, f64) {
        let s = self.spec;
        let n = s.horizon;
        let xs = self.states(u);
        let w = &s.weights;
        let p = &s.params;
        let x_norm = Vector3::from(p.state_bound).norm();
        let mut cost = 0.0;
        let mut worst = f64::NEG_INFINITY;
        for i in 0..n {
            let coop: f64 = s
                .neighbors
                .iter()
                .map(|nb| w.q_coop * (xs[i] - nb[i]).norm_squared())
                .sum();
            cost += w.q * xs[i].norm_squared() + w.r * u[i] * u[i] + coop;
            let radius = (1.0 - s.varrho * i as f64 / n as f64) * x_norm;
            worst = worst.max(xs[i].norm_squared() - radius * radius);
            worst = worst.max(coop - s.neighbors.len() as f64 * s.zeta);
            worst = worst.max(u[i] - p.u_max).max(p.u_min - u[i]);
            let prev = if i == 0 { s.u_prev } else { u[i - 1] };
            worst = worst.max(u[i] - prev - p.du_max).max(p.du_min - (u[i] - prev));
        }
        let xn = xs[n];
        let terminal = (xn.transpose() * s.terminal.p * xn)[0];
        cost += terminal;
        worst = worst.max(terminal - s.terminal.epsilon.powi(2));
        (cost, worst)
    }
}

#[derive(Debug, Clone)]
pub struct GridResult {
    /// Best feasible cost and inputs, if any grid point is feasible.
    pub best: Option<(f64, Vec<f64>)>,
    /// Smallest worst-constraint value over the grid.
    pub min_violation: f64,
}

fn range(lo: f64, hi: f64, step: f64) -> impl Iterator<Item = f64> {
    let n = ((hi - lo) / step).floor().max(0.0) as usize;
    (0..=n).map(move |i| lo + i as f64 * step)
}

/// Brute force over inputs on a grid of spacing `step` restricted by the
/// input and increment boxes, followed by a finer local grid around the best
/// feasible point. Supports horizons 1 and 2.
pub fn grid_search(spec: &OcpSpec, step: f64, refine_step: f64, refine_radius: f64) -> GridResult {
    assert!(spec.horizon <= 2, "grid oracle covers N <= 2");
    let oracle = Oracle::new(spec);
    let p = &spec.params;
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut min_violation = f64::INFINITY;
    let consider = |u: Vec<f64>, best: &mut Option<(f64, Vec<f64>)>, min_violation: &mut f64| {
        let (c, v) = oracle.evaluate(&u);
        *min_violation = min_violation.min(v);
        if v <= 0.0 && best.as_ref().is_none_or(|b| c < b.0) {
            *best = Some((c, u));
        }
    };
    let box0 = (p.u_min.max(spec.u_prev + p.du_min), p.u_max.min(spec.u_prev + p.du_max));
    for u0 in range(box0.0, box0.1, step) {
        if spec.horizon == 1 {
            consider(vec![u0], &mut best, &mut min_violation);
        } else {
            let lo = p.u_min.max(u0 + p.du_min);
            let hi = p.u_max.min(u0 + p.du_max);
            for u1 in range(lo, hi, step) {
                consider(vec![u0, u1], &mut best, &mut min_violation);
            }
        }
    }
    if let Some((_, centre)) = best.clone() {
        let clip = |c: f64| (c - refine_radius, c + refine_radius);
        let (a0, b0) = clip(centre[0]);
        for u0 in range(a0.max(box0.0), b0.min(box0.1), refine_step) {
            if spec.horizon == 1 {
                consider(vec![u0], &mut best, &mut min_violation);
            } else {
                let (a1, b1) = clip(centre[1]);
                for u1 in range(a1, b1, refine_step) {
                    consider(vec![u0, u1], &mut best, &mut min_violation);
                }
            }
        }
    }
    GridResult { best, min_violation }
}

/// A random small-horizon instance whose initial state sits near the
/// terminal set so that both feasible and infeasible draws occur.
pub fn random_instance<R: Rng>(rng: &mut R, horizon: usize) -> OcpSpec {
    let (m, ing) = default_terminal();
    let dir = Vector3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
    let level = rng.gen_range(0.3..2.0) * ing.epsilon;
    let x0 = dir * (level / ing.p_norm(&dir));
    let neighbor: Vec<Vector3<f64>> = (0..=horizon)
        .map(|_| x0 + Vector3::new(rng.gen_range(-0.1..0.1), rng.gen_range(-0.1..0.1), rng.gen_range(-0.1..0.1)))
        .collect();
    OcpSpec {
        x0,
        horizon,
        weights: CostWeights::new(rng.gen_range(1.0..20.0), rng.gen_range(0.1..5.0)),
        terminal: ing,
        matrices: m,
        params: VehicleParams::default(),
        neighbors: vec![neighbor],
        u_prev: rng.gen_range(-1.0..1.0),
        varrho: 0.2,
        zeta: rng.gen_range(0.05..1.0),
    }
}
