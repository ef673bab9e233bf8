use nalgebra::{Matrix3, RowVector3};
use serde::{Deserialize, Serialize};

use crate::controller::FeasibilityCheck;
use crate::error::{Error, Result};

use super::runner::{RunOutput, RunStats, TraceRow};

/// Terminal ingredients as dumped for audit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TerminalBlock {
    #[serde(rename = "K")]
    pub k: [f64; 3],
    #[serde(rename = "P")]
    pub p: [[f64; 3]; 3],
    pub gamma: f64,
    pub epsilon: f64,
}

impl TerminalBlock {
    fn new(k: &RowVector3<f64>, p: &Matrix3<f64>, gamma: f64, epsilon: f64) -> Self {
        TerminalBlock {
            k: [k[0], k[1], k[2]],
            p: [0, 1, 2].map(|i| [p[(i, 0)], p[(i, 1)], p[(i, 2)]]),
            gamma,
            epsilon,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub seed: u64,
    /// Time-averaged mean absolute spacing error over followers (m).
    pub ale: f64,
    pub max_abs_ep: f64,
    /// `|ep|` of each follower at the last step (m).
    pub final_abs_ep: Vec<f64>,
    /// Sum of horizon lengths over every solve.
    pub solver_work: usize,
    /// Wall-clock time of the run (s).
    pub tet_seconds: f64,
    pub stats: RunStats,
    pub feasibility: FeasibilityCheck,
    pub max_outage: usize,
    pub terminal: TerminalBlock,
}

fn follower_rows(trace: &[TraceRow]) -> impl Iterator<Item = &TraceRow> {
    trace.iter().filter(|r| r.vehicle > 0)
}

/// `(1/T) sum_k (1/M) sum_j |ep_j(k)|` over the follower rows of a trace.
pub fn average_longitudinal_error(trace: &[TraceRow]) -> Result<f64> {
    let mut steps = std::collections::BTreeMap::<usize, (f64, usize)>::new();
    for row in follower_rows(trace) {
        let e = steps.entry(row.step).or_default();
        e.0 += row.ep.abs();
        e.1 += 1;
    }
    if steps.is_empty() {
        return Err(Error::EmptyTrace);
    }
    let total: f64 = steps.values().map(|(sum, n)| sum / *n as f64).sum();
    Ok(total / steps.len() as f64)
}

pub fn compute_metrics(output: &RunOutput, seed: u64) -> Result<MetricsReport> {
    let ale = average_longitudinal_error(&output.trace)?;
    let max_abs_ep = follower_rows(&output.trace).map(|r| r.ep.abs()).fold(0.0, f64::max);
    let last_step = output.trace.last().map(|r| r.step).ok_or(Error::EmptyTrace)?;
    let mut finals: Vec<(usize, f64)> = follower_rows(&output.trace)
        .filter(|r| r.step == last_step)
        .map(|r| (r.vehicle, r.ep.abs()))
        .collect();
    finals.sort_by_key(|&(j, _)| j);
    let t = &output.terminal;
    Ok(MetricsReport {
        seed,
        ale,
        max_abs_ep,
        final_abs_ep: finals.into_iter().map(|(_, e)| e).collect(),
        solver_work: output.stats.solver_work,
        tet_seconds: output.stats.wall_time,
        stats: output.stats.clone(),
        feasibility: output.feasibility,
        max_outage: output.max_outage,
        terminal: TerminalBlock::new(&t.k, &t.p, t.gamma, t.epsilon),
    })
}
