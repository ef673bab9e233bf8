//! Fast self-checks of the default configuration, run by `platoon check`.

use nalgebra::{DMatrix, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::channel::{outage_bound, sample_delay, truncated_delay_mean, ChannelConfig, ChannelState, Packet, Reception};
use crate::controller::{check_feasibility_condition, evaluate_cost, rollout, solve_ocp, CostWeights, OcpSpec, OcpStatus};
use crate::dynamics::{build_matrices, VehicleParams};
use crate::terminal::{dare_residual, synthesize, verify_invariance};

#[derive(Debug, Clone)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn result(name: &'static str, passed: bool, detail: String) -> CheckResult {
    CheckResult { name, passed, detail }
}

fn dare_check(params: &VehicleParams) -> CheckResult {
    let m = build_matrices(params).expect("default parameters are valid");
    let ing = synthesize(&m, params, 10.0, 1.0, 0.5).expect("default synthesis succeeds");
    let a = DMatrix::from_column_slice(3, 3, m.a.as_slice());
    let b = DMatrix::from_column_slice(3, 1, m.b.as_slice());
    let p = DMatrix::from_column_slice(3, 3, ing.p.as_slice());
    let res = dare_residual(&a, &b, &(DMatrix::identity(3, 3) * 10.0), &DMatrix::from_element(1, 1, 1.0), &p);
    result("riccati residual", res <= 1e-8, format!("{res:.2e}"))
}

fn invariance_check(params: &VehicleParams) -> CheckResult {
    let m = build_matrices(params).expect("default parameters are valid");
    let ing = synthesize(&m, params, 10.0, 1.0, 0.5).expect("default synthesis succeeds");
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let rep = verify_invariance(&ing, &m, params, 10_000, &mut rng);
    result(
        "terminal invariance",
        rep.holds && rep.worst_decrease_margin >= -1e-9,
        format!(
            "gamma {:.4}, worst margin {:.2e}, matrix margin {:.2e}",
            ing.gamma, rep.worst_decrease_margin, rep.matrix_margin
        ),
    )
}

fn feasibility_check(params: &VehicleParams) -> CheckResult {
    let m = build_matrices(params).expect("default parameters are valid");
    let ing = synthesize(&m, params, 10.0, 1.0, 0.5).expect("default synthesis succeeds");
    let nb = outage_bound(&ChannelConfig::default()).expect("default channel is valid");
    let c = check_feasibility_condition(&ing, params, &m, 30, 0.2, nb);
    result(
        "recursive-feasibility condition",
        c.passes,
        format!(
            "delta {:.4} <= min({:.4}, {:.4})",
            c.delta_max, c.terminal_margin, c.tube_margin
        ),
    )
}

/// Single-input problems against a fine 1-D scan of the admissible inputs.
fn solver_check(params: &VehicleParams) -> CheckResult {
    let m = build_matrices(params).expect("default parameters are valid");
    let ing = synthesize(&m, params, 10.0, 1.0, 0.5).expect("default synthesis succeeds");
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst: f64 = 0.0;
    let mut disagreements = 0;
    for _ in 0..30 {
        let x0 = Vector3::new(rng.gen_range(-0.2..0.2), rng.gen_range(-0.2..0.2), rng.gen_range(-0.4..0.4));
        let u_prev = rng.gen_range(-1.0..1.0);
        let spec = OcpSpec {
            x0,
            horizon: 1,
            weights: CostWeights::new(rng.gen_range(1.0..20.0), rng.gen_range(0.1..5.0)),
            terminal: ing.clone(),
            matrices: m,
            params: *params,
            neighbors: vec![vec![Vector3::zeros(); 2]],
            u_prev,
            varrho: 0.2,
            zeta: 50.0,
        };
        let lo = params.u_min.max(u_prev + params.du_min);
        let hi = params.u_max.min(u_prev + params.du_max);
        let mut best: Option<f64> = None;
        let steps = 100_000;
        for i in 0..=steps {
            let u = lo + (hi - lo) * i as f64 / steps as f64;
            let states = rollout(&x0, &[u], &m);
            if ing.p_norm(&states[1]) <= ing.epsilon {
                let c = evaluate_cost(&spec, &[u], &states).expect("lengths match");
                best = Some(best.map_or(c, |b: f64| b.min(c)));
            }
        }
        let sol = solve_ocp(&spec, None);
        match (sol, best) {
            (Ok(s), Some(b)) if s.status == OcpStatus::Optimal => {
                worst = worst.max((s.cost - b).abs() / b.abs().max(1e-3));
            }
            (Ok(s), None) if s.status == OcpStatus::Infeasible => {}
            _ => disagreements += 1,
        }
    }
    result(
        "solver vs scan",
        disagreements == 0 && worst <= 1e-3,
        format!("worst relative gap {worst:.2e}, verdict mismatches {disagreements}"),
    )
}

fn channel_check() -> CheckResult {
    let cfg = ChannelConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let n = 100_000;
    let draws: Vec<f64> = (0..n).map(|_| sample_delay(&cfg, &mut rng)).collect();
    let mean = draws.iter().sum::<f64>() / n as f64;
    let var = draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let se = (var / n as f64).sqrt();
    let expected = truncated_delay_mean(&cfg);
    let delay_ok = (mean - expected).abs() <= 3.0 * se;

    let lossy = ChannelConfig {
        loss_rate: 0.99,
        ..cfg
    };
    let mut ch = ChannelState::<()>::new(lossy, 0.05, &[(0, 1)], false).expect("valid channel");
    let mut run = 0;
    let mut longest = 0;
    for k in 0..20_000 {
        let d = ch.advance(k, vec![Some(Packet { sender: 0, timestamp: k, payload: () })]);
        if d[0].status == Reception::Fresh {
            run = 0;
        } else {
            run += 1;
            longest = longest.max(run);
        }
    }
    let bound = ch.max_outage();
    result(
        "channel statistics",
        delay_ok && longest <= bound,
        format!("delay mean {mean:.5} vs {expected:.5} (3se {:.1e}); longest outage {longest} <= {bound}", 3.0 * se),
    )
}

pub fn run_checks() -> Vec<CheckResult> {
    let params = VehicleParams::default();
    vec![
        dare_check(&params),
        invariance_check(&params),
        feasibility_check(&params),
        solver_check(&params),
        channel_check(),
    ]
}

#[cfg(test)]
mod tests {
    #[test]
    fn default_checks_pass() {
        for r in super::run_checks() {
            assert!(r.passed, "{}: {}", r.name, r.detail);
        }
    }
}
