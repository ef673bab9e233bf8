use std::time::Instant;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::adaptation::{
    convergence_term, deviation_ratio, needs_reset, optimal_horizon, update_horizon, update_weights, HorizonTerms,
};
use crate::channel::{stream_seed, ChannelEvent, ChannelState, Packet, Reception};
use crate::controller::{
    build_broadcast, check_feasibility_condition, constraint_violation, shift_candidate, solve_ocp,
    BroadcastTrajectory, CostWeights, FeasibilityCheck, OcpSolution, OcpSpec, OcpStatus, SolveRecord,
    CONSTRAINT_TOL,
};
use crate::dynamics::{build_matrices, step_true, to_error_state, ErrorState, SystemMatrices, VehicleParams, VehicleState};
use crate::error::{Error, Result};
use crate::terminal::{synthesize, TerminalIngredients};

use super::scenario::Scenario;

/// Stream tag for per-vehicle disturbance draws.
const DISTURBANCE_STREAM: u64 = 0xD157;

/// One vehicle at one step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub step: usize,
    pub time: f64,
    pub vehicle: usize,
    pub p: f64,
    pub v: f64,
    pub a: f64,
    pub u: f64,
    pub ep: f64,
    pub ev: f64,
    pub ea: f64,
    #[serde(rename = "N")]
    pub horizon: usize,
    pub q: f64,
    pub r: f64,
    pub comm: String,
}

/// Sum of the followers' latest optimal costs at a step where someone solved.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LyapunovSample {
    pub step: usize,
    pub value: f64,
    /// Some follower is outside its invariant set `||x||_P <= gamma`.
    pub outside: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunStats {
    pub triggers: usize,
    pub solves: usize,
    /// OCPs still infeasible at the full horizon `N0`.
    pub infeasible: usize,
    /// Re-solves at `N0` after an infeasible shortened horizon.
    pub fallbacks: usize,
    pub resets: usize,
    /// Triggers at which the shifted candidate violated a hard constraint.
    pub candidate_violations: usize,
    /// Applied inputs that had to be projected onto the input/increment boxes.
    pub input_clamps: usize,
    /// Sum of horizon lengths over all solves.
    pub solver_work: usize,
    pub wall_time: f64,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub trace: Vec<TraceRow>,
    pub solves: Vec<SolveRecord>,
    pub events: Vec<ChannelEvent>,
    pub lyapunov: Vec<LyapunovSample>,
    pub stats: RunStats,
    pub terminal: TerminalIngredients,
    pub feasibility: FeasibilityCheck,
    pub max_outage: usize,
}

#[derive(Debug, Clone, Copy)]
struct LastSolve {
    step: usize,
    horizon: usize,
    hat_n: usize,
}

struct Follower {
    index: usize,
    state: VehicleState,
    u_prev: f64,
    weights: CostWeights,
    horizon: usize,
    own: BroadcastTrajectory,
    neighbor: BroadcastTrajectory,
    last_solve: Option<LastSolve>,
    cost: f64,
    rng: ChaCha8Rng,
}

/// Shared, read-only context of one run.
struct Context<'a> {
    scenario: &'a Scenario,
    params: VehicleParams,
    m: SystemMatrices,
    terminal: TerminalIngredients,
    zeta: f64,
    max_outage: usize,
    target: f64,
}

fn project_input(u: f64, u_prev: f64, p: &VehicleParams) -> f64 {
    u.clamp(u_prev + p.du_min, u_prev + p.du_max).clamp(p.u_min, p.u_max)
}

impl Context<'_> {
    fn leader_input(&self, leader: &VehicleState, v_ref: f64, u_prev: f64) -> f64 {
        let r = &self.scenario.reference;
        let raw = r.leader_kv * (v_ref - leader.v) - r.leader_ka * leader.a;
        project_input(raw.clamp(-r.leader_accel, r.leader_accel), u_prev, &self.params)
    }

    fn spec(&self, f: &Follower, x0: ErrorState, horizon: usize, step: usize) -> OcpSpec {
        OcpSpec {
            x0,
            horizon,
            weights: f.weights,
            terminal: self.terminal.clone(),
            matrices: self.m,
            params: self.params,
            neighbors: vec![f.neighbor.window(step, horizon, &self.terminal, &self.m)],
            u_prev: f.u_prev,
            varrho: self.scenario.controller.varrho,
            zeta: self.zeta,
        }
    }

    fn solve(
        &self,
        f: &Follower,
        x0: ErrorState,
        horizon: usize,
        step: usize,
        stats: &mut RunStats,
        log: &mut Vec<SolveRecord>,
    ) -> Result<OcpSolution> {
        let spec = self.spec(f, x0, horizon, step);
        let candidate = shift_candidate(&f.own, step, horizon, x0, &self.terminal, &self.m).ok();
        let solution = solve_ocp(&spec, candidate.as_ref().map(|c| c.inputs.as_slice())).map_err(|e| match e {
            Error::SolverFailure { reason, .. } => Error::SolverFailure {
                step,
                vehicle: f.index,
                reason,
            },
            other => other,
        })?;
        stats.solves += 1;
        stats.solver_work += horizon;
        log.push(SolveRecord {
            step,
            vehicle: f.index,
            horizon,
            status: solution.status.as_str().to_string(),
            cost: solution.cost,
            iterations: solution.iterations,
            residual: solution.violation,
            wall_time: solution.wall_time,
        });
        Ok(solution)
    }

    /// Everything a follower does at a trigger. Returns the input to apply.
    fn trigger(
        &self,
        f: &mut Follower,
        x: ErrorState,
        v_ref: f64,
        step: usize,
        stats: &mut RunStats,
        log: &mut Vec<SolveRecord>,
    ) -> Result<f64> {
        let ad = &self.scenario.adaptation;
        let n0 = ad.n0;
        let prev_horizon = f.horizon;
        stats.triggers += 1;

        if ad.adaptive_weights && f.last_solve.is_some() {
            let predicted = f.own.state_at(step, &self.terminal, &self.m);
            f.weights = update_weights(deviation_ratio(&predicted, &x, &self.terminal, ad.xi), ad);
        }

        if ad.adaptive_horizon {
            if let Some(last) = f.last_solve {
                let terms = HorizonTerms {
                    hat_n: last.hat_n,
                    prev_n: last.horizon,
                    prev_trigger: last.step,
                    new_trigger: step,
                    convergence: convergence_term(&self.terminal, &f.weights, self.target),
                    max_outage: self.max_outage,
                };
                f.horizon = update_horizon(&terms, ad.horizon_rule, n0);
            }
            // Deviation from the commanded reference rather than the leader.
            let x_ref = Vector3::new(x[0], f.state.v - v_ref, f.state.a);
            if needs_reset(&x_ref, &self.terminal) {
                if prev_horizon != n0 {
                    stats.resets += 1;
                }
                f.horizon = n0;
            }
        } else {
            f.horizon = n0;
        }

        if let Ok(c) = shift_candidate(&f.own, step, f.horizon, x, &self.terminal, &self.m) {
            let spec = self.spec(f, x, f.horizon, step);
            if constraint_violation(&spec, &c.inputs, &c.states) > CONSTRAINT_TOL {
                stats.candidate_violations += 1;
            }
        }

        let mut solution = self.solve(f, x, f.horizon, step, stats, log)?;
        if solution.status == OcpStatus::Infeasible && f.horizon < n0 {
            stats.fallbacks += 1;
            f.horizon = n0;
            solution = self.solve(f, x, n0, step, stats, log)?;
        }
        if solution.status == OcpStatus::Infeasible {
            stats.infeasible += 1;
            return Ok(f.own.input_at(step, &self.terminal, &self.m));
        }
        f.own = build_broadcast(&solution, &self.terminal, &self.m, step, n0)?;
        f.last_solve = Some(LastSolve {
            step,
            horizon: f.horizon,
            hat_n: optimal_horizon(&solution, &self.terminal)?,
        });
        f.cost = solution.cost;
        Ok(solution.inputs[0])
    }
}

/// Simulate the scenario with its own seed.
pub fn run_simulation(scenario: &Scenario) -> Result<RunOutput> {
    scenario.validate()?;
    let started = Instant::now();
    let params = scenario.vehicle;
    let m = build_matrices(&params)?;
    let ad = &scenario.adaptation;
    let terminal = synthesize(&m, &params, ad.q0, ad.r0, scenario.controller.epsilon_fraction)?;
    let h = params.h;
    let nf = scenario.platoon.followers;
    let n0 = ad.n0;

    let mut channel_cfg = scenario.channel;
    channel_cfg.seed = scenario.seed;
    let pairs: Vec<(usize, usize)> = (0..nf).map(|j| (j, j + 1)).collect();
    let mut channel = ChannelState::<BroadcastTrajectory>::new(channel_cfg, h, &pairs, true)?;
    let max_outage = channel.max_outage();

    let ctx = Context {
        scenario,
        params,
        m,
        zeta: scenario.controller.zeta_or_default(&params, ad.q0),
        max_outage,
        target: ad.epsilon_target.unwrap_or(terminal.epsilon),
        terminal,
    };
    let feasibility = check_feasibility_condition(
        &ctx.terminal,
        &params,
        &m,
        n0,
        scenario.controller.varrho,
        max_outage,
    );

    let v0 = scenario.platoon.initial_speed;
    let d = scenario.platoon.spacing;
    let mut leader = VehicleState::new(0.0, v0, 0.0);
    let mut leader_u = 0.0;
    let leader_bc = BroadcastTrajectory::feedback_rollout(0, Vector3::zeros(), n0, &ctx.terminal, &m);

    let mut followers: Vec<Follower> = (1..=nf)
        .map(|j| {
            let e = scenario.platoon.initial_errors.get(j - 1).copied().unwrap_or([0.0; 3]);
            let state = VehicleState::new(-(j as f64) * d + e[0], v0 + e[1], e[2]);
            let x = to_error_state(j, &state, &leader, d);
            Follower {
                index: j,
                state,
                u_prev: 0.0,
                weights: ad.baseline(),
                horizon: n0,
                own: BroadcastTrajectory::feedback_rollout(0, x, n0, &ctx.terminal, &m),
                neighbor: leader_bc.clone(),
                last_solve: None,
                cost: 0.0,
                rng: ChaCha8Rng::seed_from_u64(stream_seed(scenario.seed, DISTURBANCE_STREAM, j as u64)),
            }
        })
        .collect();
    // Initial packets are assumed exchanged before the first step.
    for j in 1..nf {
        followers[j].neighbor = followers[j - 1].own.clone();
    }

    let steps = scenario.steps();
    let mut trace = Vec::with_capacity(steps * (nf + 1));
    let mut solves = Vec::new();
    let mut lyapunov = Vec::new();
    let mut stats = RunStats::default();
    let wb = params.w_bound;

    for k in 0..steps {
        let t = k as f64 * h;
        let v_ref = scenario.reference.speed_at(t, v0);

        let sends = (0..nf)
            .map(|j| {
                let payload = if j == 0 { leader_bc.clone() } else { followers[j - 1].own.clone() };
                Some(Packet {
                    sender: j,
                    timestamp: k,
                    payload,
                })
            })
            .collect();
        let deliveries = channel.advance(k, sends);

        let u0 = ctx.leader_input(&leader, v_ref, leader_u);
        trace.push(TraceRow {
            step: k,
            time: t,
            vehicle: 0,
            p: leader.p,
            v: leader.v,
            a: leader.a,
            u: u0,
            ep: 0.0,
            ev: 0.0,
            ea: 0.0,
            horizon: 0,
            q: 0.0,
            r: 0.0,
            comm: "leader".into(),
        });

        let mut inputs = Vec::with_capacity(nf);
        let mut solved_any = false;
        for (f, delivery) in followers.iter_mut().zip(deliveries) {
            if let Some(packet) = delivery.accepted {
                f.neighbor = packet.payload;
            }
            let x = to_error_state(f.index, &f.state, &leader, d);
            let fresh = delivery.status == Reception::Fresh;
            let raw = if k == 0 || fresh {
                solved_any = true;
                ctx.trigger(f, x, v_ref, k, &mut stats, &mut solves)?
            } else {
                f.own.input_at(k, &ctx.terminal, &m)
            };
            let u = project_input(raw, f.u_prev, &params);
            if (u - raw).abs() > 1e-6 {
                stats.input_clamps += 1;
            }
            let comm = if k == 0 { "init" } else { delivery.status.as_str() };
            trace.push(TraceRow {
                step: k,
                time: t,
                vehicle: f.index,
                p: f.state.p,
                v: f.state.v,
                a: f.state.a,
                u,
                ep: x[0],
                ev: x[1],
                ea: x[2],
                horizon: f.horizon,
                q: f.weights.q,
                r: f.weights.r,
                comm: comm.to_string(),
            });
            inputs.push(u);
        }
        if solved_any {
            let outside = followers.iter().any(|f| {
                let x = to_error_state(f.index, &f.state, &leader, d);
                !ctx.terminal.in_gamma_set(&x)
            });
            lyapunov.push(LyapunovSample {
                step: k,
                value: followers.iter().map(|f| f.cost).sum(),
                outside,
            });
        }

        for (f, u) in followers.iter_mut().zip(inputs) {
            let w = if wb > 0.0 { f.rng.gen_range(-wb..=wb) } else { 0.0 };
            f.state = step_true(&f.state, u, &Vector3::new(0.0, 0.0, w), &m);
            f.u_prev = u;
        }
        leader = step_true(&leader, u0, &Vector3::zeros(), &m);
        leader_u = u0;
    }

    stats.wall_time = started.elapsed().as_secs_f64();
    Ok(RunOutput {
        trace,
        solves,
        events: std::mem::take(&mut channel.events),
        lyapunov,
        stats,
        terminal: ctx.terminal,
        feasibility,
        max_outage,
    })
}
