use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;

use super::metrics::compute_metrics;
use super::runner::run_simulation;
use super::scenario::Scenario;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scheme {
    /// Adaptive weights and adaptive horizon.
    Adaptive,
    /// Fixed weights, adaptive horizon.
    FixedWeights,
    /// Fixed weights, fixed horizon `N0`.
    FixedHorizon,
}

impl Scheme {
    pub const ALL: [Scheme; 3] = [Scheme::Adaptive, Scheme::FixedWeights, Scheme::FixedHorizon];

    pub fn label(self) -> &'static str {
        match self {
            Scheme::Adaptive => "a_adaptive",
            Scheme::FixedWeights => "b_fixed_weights",
            Scheme::FixedHorizon => "c_fixed_horizon",
        }
    }

    /// The scenario with this scheme's switches applied.
    pub fn apply(self, scenario: &Scenario) -> Scenario {
        let mut s = scenario.clone();
        s.adaptation.adaptive_weights = self == Scheme::Adaptive;
        s.adaptation.adaptive_horizon = self != Scheme::FixedHorizon;
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub scheme: String,
    pub seed: u64,
    pub ale: f64,
    pub max_abs_ep: f64,
    pub tet_seconds: f64,
    pub solver_work: usize,
    pub solves: usize,
    pub infeasible: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonSummary {
    pub seeds: Vec<u64>,
    pub mean_ale: [f64; 3],
    pub mean_tet_seconds: [f64; 3],
    pub total_solver_work: [usize; 3],
    /// Solver work of scheme (a) relative to scheme (c).
    pub work_ratio_a_over_c: f64,
    /// Seeds on which scheme (a) has ALE no larger than scheme (b).
    pub seeds_a_beats_b: usize,
}

/// Run every scheme on every seed. Seeds and schemes run in parallel; the
/// returned rows are ordered by scheme, then seed.
pub fn compare_schemes(scenario: &Scenario, seeds: &[u64]) -> Result<(Vec<ComparisonRow>, ComparisonSummary)> {
    let jobs: Vec<(Scheme, u64)> = Scheme::ALL
        .iter()
        .flat_map(|&s| seeds.iter().map(move |&seed| (s, seed)))
        .collect();
    let rows = jobs
        .par_iter()
        .map(|&(scheme, seed)| {
            let mut s = scheme.apply(scenario);
            s.seed = seed;
            let out = run_simulation(&s)?;
            let m = compute_metrics(&out, seed)?;
            Ok(ComparisonRow {
                scheme: scheme.label().to_string(),
                seed,
                ale: m.ale,
                max_abs_ep: m.max_abs_ep,
                tet_seconds: m.tet_seconds,
                solver_work: m.solver_work,
                solves: m.stats.solves,
                infeasible: m.stats.infeasible,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let summary = summarize(&rows, seeds);
    Ok((rows, summary))
}

fn summarize(rows: &[ComparisonRow], seeds: &[u64]) -> ComparisonSummary {
    let of = |s: Scheme| rows.iter().filter(move |r| r.scheme == s.label());
    let n = seeds.len().max(1) as f64;
    let mean = |s: Scheme, f: fn(&ComparisonRow) -> f64| of(s).map(f).sum::<f64>() / n;
    let work = |s: Scheme| of(s).map(|r| r.solver_work).sum::<usize>();
    let total_solver_work = Scheme::ALL.map(work);
    let seeds_a_beats_b = seeds
        .iter()
        .filter(|&&seed| {
            let a = of(Scheme::Adaptive).find(|r| r.seed == seed);
            let b = of(Scheme::FixedWeights).find(|r| r.seed == seed);
            matches!((a, b), (Some(a), Some(b)) if a.ale <= b.ale)
        })
        .count();
    ComparisonSummary {
        seeds: seeds.to_vec(),
        mean_ale: Scheme::ALL.map(|s| mean(s, |r| r.ale)),
        mean_tet_seconds: Scheme::ALL.map(|s| mean(s, |r| r.tet_seconds)),
        total_solver_work,
        work_ratio_a_over_c: total_solver_work[0] as f64 / total_solver_work[2].max(1) as f64,
        seeds_a_beats_b,
    }
}
