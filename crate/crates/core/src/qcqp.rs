//! Dense log-barrier interior-point solver for small convex QCQPs.
//!
//! ```text
//! minimize    0.5 x'H0 x + g0'x + c0
//! subject to  0.5 x'Hi x + gi'x + ci <= 0      (Hi positive semidefinite)
//!             a'x <= b
//! ```
//!
//! A phase-1 problem `min s  s.t.  g_i(x) <= s` finds a strictly feasible
//! start or certifies infeasibility by its optimal value. Phase 2 follows the
//! central path with damped Newton steps.

use nalgebra::{Cholesky, DMatrix, DVector};

#[derive(Debug, Clone)]
pub struct Quadratic {
    pub h: DMatrix<f64>,
    pub g: DVector<f64>,
    pub c: f64,
}

impl Quadratic {
    pub fn zeros(n: usize) -> Self {
        Quadratic {
            h: DMatrix::zeros(n, n),
            g: DVector::zeros(n),
            c: 0.0,
        }
    }

    pub fn value(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.h * x)) + self.g.dot(x) + self.c
    }

    fn value_grad(&self, x: &DVector<f64>) -> (f64, DVector<f64>) {
        let hx = &self.h * x;
        let v = 0.5 * x.dot(&hx) + self.g.dot(x) + self.c;
        (v, hx + &self.g)
    }
}

/// A constraint `g(x) <= 0`.
#[derive(Debug, Clone)]
pub enum Constraint {
    /// `sum coeff_j x_j - b <= 0`, stored sparsely.
    Linear { coeffs: Vec<(usize, f64)>, b: f64 },
    Quadratic(Quadratic),
}

impl Constraint {
    pub fn value(&self, x: &DVector<f64>) -> f64 {
        match self {
            Constraint::Linear { coeffs, b } => coeffs.iter().map(|&(j, a)| a * x[j]).sum::<f64>() - b,
            Constraint::Quadratic(q) => q.value(x),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Qcqp {
    pub objective: Quadratic,
    pub constraints: Vec<Constraint>,
}

impl Qcqp {
    pub fn dim(&self) -> usize {
        self.objective.g.len()
    }

    pub fn max_violation(&self, x: &DVector<f64>) -> f64 {
        self.constraints
            .iter()
            .map(|c| c.value(x))
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct IpOptions {
    /// Relative duality-gap target for phase 2.
    pub gap_tol: f64,
    /// Phase-1 value above which the problem is declared infeasible.
    pub feas_tol: f64,
    pub mu: f64,
    pub max_newton: usize,
}

impl Default for IpOptions {
    fn default() -> Self {
        IpOptions {
            gap_tol: 1e-10,
            feas_tol: 1e-6,
            mu: 20.0,
            max_newton: 600,
        }
    }
}

#[derive(Debug, Clone)]
pub enum QcqpOutcome {
    Optimal {
        x: DVector<f64>,
        value: f64,
        /// Duality-gap bound `m / t` at termination.
        gap: f64,
        max_violation: f64,
        iterations: usize,
    },
    Infeasible {
        /// Optimal phase-1 value: the smallest achievable worst violation.
        min_violation: f64,
        iterations: usize,
    },
}

/// Strict-interior margin at which phase 1 stops early.
const INTERIOR_MARGIN: f64 = 1e-4;

pub fn solve(problem: &Qcqp, start: Option<&DVector<f64>>, opts: &IpOptions) -> Result<QcqpOutcome, String> {
    let n = problem.dim();
    let x0 = match start {
        Some(x) if x.len() == n => x.clone(),
        _ => DVector::zeros(n),
    };
    if problem.constraints.is_empty() {
        return barrier(problem, x0, 0.0, opts, 0);
    }

    let worst = problem.max_violation(&x0);
    let mut iterations = 0;
    let (x_feasible, relax) = if worst < -INTERIOR_MARGIN {
        (x0, 0.0)
    } else {
        let (x, s, it) = phase_one(problem, x0, worst, opts)?;
        iterations += it;
        if s > opts.feas_tol {
            return Ok(QcqpOutcome::Infeasible {
                min_violation: s,
                iterations,
            });
        }
        let relax = if s < -1e-9 { 0.0 } else { s.max(0.0) + 1e-8 };
        (x, relax)
    };
    barrier(problem, x_feasible, relax, opts, iterations)
}

/// Phase 1 on `(x, s)`: minimise `s` subject to `g_i(x) <= s`, `s >= -1`.
fn phase_one(problem: &Qcqp, x0: DVector<f64>, worst: f64, opts: &IpOptions) -> Result<(DVector<f64>, f64, usize), String> {
    let n = problem.dim();
    let mut objective = Quadratic::zeros(n + 1);
    objective.g[n] = 1.0;
    let mut constraints: Vec<Constraint> = problem
        .constraints
        .iter()
        .map(|c| match c {
            Constraint::Linear { coeffs, b } => {
                let mut coeffs = coeffs.clone();
                coeffs.push((n, -1.0));
                Constraint::Linear { coeffs, b: *b }
            }
            Constraint::Quadratic(q) => {
                let mut h = DMatrix::zeros(n + 1, n + 1);
                h.view_mut((0, 0), (n, n)).copy_from(&q.h);
                let mut g = DVector::zeros(n + 1);
                g.rows_mut(0, n).copy_from(&q.g);
                g[n] = -1.0;
                Constraint::Quadratic(Quadratic { h, g, c: q.c })
            }
        })
        .collect();
    constraints.push(Constraint::Linear {
        coeffs: vec![(n, -1.0)],
        b: 1.0,
    });
    let aux = Qcqp {
        objective,
        constraints,
    };
    let mut z = DVector::zeros(n + 1);
    z.rows_mut(0, n).copy_from(&x0);
    z[n] = worst + 1.0;

    let m = aux.constraints.len() as f64;
    let mut t = 1.0;
    let mut iterations = 0;
    loop {
        let it = center(&aux, &mut z, t, 0.0, opts, Some(n))?;
        iterations += it;
        let x = z.rows(0, n).into_owned();
        let s = problem.max_violation(&x);
        if s < -INTERIOR_MARGIN {
            return Ok((x, s, iterations));
        }
        if m / t < 1e-9 {
            return Ok((x, s, iterations));
        }
        t *= opts.mu;
    }
}

fn barrier(problem: &Qcqp, mut x: DVector<f64>, relax: f64, opts: &IpOptions, mut iterations: usize) -> Result<QcqpOutcome, String> {
    let m = problem.constraints.len() as f64;
    if m == 0.0 {
        iterations += center(problem, &mut x, 1.0, relax, opts, None)?;
        let value = problem.objective.value(&x);
        return Ok(QcqpOutcome::Optimal {
            x,
            value,
            gap: 0.0,
            max_violation: 0.0,
            iterations,
        });
    }
    let f0 = problem.objective.value(&x).abs();
    let mut t = (m / f0.max(1.0)).max(1e-3);
    loop {
        iterations += center(problem, &mut x, t, relax, opts, None)?;
        let value = problem.objective.value(&x);
        if m / t <= opts.gap_tol * value.abs().max(1.0) {
            let max_violation = problem.max_violation(&x).max(0.0);
            return Ok(QcqpOutcome::Optimal {
                x,
                value,
                gap: m / t,
                max_violation,
                iterations,
            });
        }
        t *= opts.mu;
    }
}

/// Damped Newton centering of `t f(x) - sum log(relax - g_i(x))`.
///
/// With `stop_on_interior = Some(n)`, the run also ends once the auxiliary
/// variable at index `n` drops below the interior margin (phase 1).
fn center(
    problem: &Qcqp,
    x: &mut DVector<f64>,
    t: f64,
    relax: f64,
    opts: &IpOptions,
    stop_on_interior: Option<usize>,
) -> Result<usize, String> {
    let merit = |x: &DVector<f64>| -> Option<f64> {
        let mut acc = t * problem.objective.value(x);
        for c in &problem.constraints {
            let slack = relax - c.value(x);
            if slack <= 0.0 || !slack.is_finite() {
                return None;
            }
            acc -= slack.ln();
        }
        Some(acc)
    };

    for iter in 0..opts.max_newton {
        if let Some(idx) = stop_on_interior {
            if x[idx] < -INTERIOR_MARGIN {
                return Ok(iter);
            }
        }
        let (_, g0) = problem.objective.value_grad(x);
        let mut grad = g0 * t;
        let mut hess = &problem.objective.h * t;
        for c in &problem.constraints {
            match c {
                Constraint::Linear { coeffs, b } => {
                    let v: f64 = coeffs.iter().map(|&(j, a)| a * x[j]).sum::<f64>() - b;
                    let inv = 1.0 / (relax - v);
                    for &(j, a) in coeffs {
                        grad[j] += a * inv;
                    }
                    let inv2 = inv * inv;
                    for &(j, a) in coeffs {
                        for &(l, b2) in coeffs {
                            hess[(j, l)] += a * b2 * inv2;
                        }
                    }
                }
                Constraint::Quadratic(q) => {
                    let (v, gq) = q.value_grad(x);
                    let inv = 1.0 / (relax - v);
                    grad.axpy(inv, &gq, 1.0);
                    hess.ger(inv * inv, &gq, &gq, 1.0);
                    hess += &q.h * inv;
                }
            }
        }
        let step = newton_direction(hess, &grad)?;
        let decrement = -grad.dot(&step);
        if decrement.is_nan() {
            return Err("NaN in Newton decrement".into());
        }
        if decrement * 0.5 <= 1e-10 {
            return Ok(iter);
        }
        let current = merit(x).ok_or("iterate left the barrier domain")?;
        let mut s = 1.0;
        loop {
            let trial = &*x + &step * s;
            if let Some(val) = merit(&trial) {
                if val <= current - 0.01 * s * decrement {
                    let stalled = current - val <= 1e-14 * current.abs().max(1.0);
                    *x = trial;
                    if stalled {
                        return Ok(iter + 1);
                    }
                    break;
                }
            }
            s *= 0.5;
            if s < 1e-14 {
                // no progress possible at this precision; accept the point
                return Ok(iter);
            }
        }
    }
    Err(format!("Newton centering exceeded {} iterations", opts.max_newton))
}

fn newton_direction(hess: DMatrix<f64>, grad: &DVector<f64>) -> Result<DVector<f64>, String> {
    let scale = hess.diagonal().amax().max(1e-300);
    let mut reg = 0.0;
    for _ in 0..8 {
        let mut h = hess.clone();
        if reg > 0.0 {
            for i in 0..h.nrows() {
                h[(i, i)] += reg;
            }
        }
        if let Some(ch) = Cholesky::new(h) {
            return Ok(-ch.solve(grad));
        }
        reg = if reg == 0.0 { scale * 1e-12 } else { reg * 100.0 };
    }
    Err("Newton system is not positive definite".into())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn bound(j: usize, sign: f64, b: f64) -> Constraint {
        Constraint::Linear {
            coeffs: vec![(j, sign)],
            b,
        }
    }

    #[test]
    fn unconstrained_minimum_inside_box() {
        // (x-1)^2 + (y+2)^2 with |x|,|y| <= 5
        let mut obj = Quadratic::zeros(2);
        obj.h = DMatrix::identity(2, 2) * 2.0;
        obj.g = DVector::from_vec(vec![-2.0, 4.0]);
        obj.c = 5.0;
        let p = Qcqp {
            objective: obj,
            constraints: vec![bound(0, 1.0, 5.0), bound(0, -1.0, 5.0), bound(1, 1.0, 5.0), bound(1, -1.0, 5.0)],
        };
        let QcqpOutcome::Optimal { x, value, .. } = solve(&p, None, &IpOptions::default()).unwrap() else {
            panic!("expected optimum");
        };
        assert_abs_diff_eq!(x[0], 1.0, epsilon = 1e-6);
        assert_abs_diff_eq!(x[1], -2.0, epsilon = 1e-6);
        assert_abs_diff_eq!(value, 0.0, epsilon = 1e-8);
    }

    #[test]
    fn ball_constraint_projection() {
        // minimise (x-3)^2 + y^2 subject to x^2 + y^2 <= 1 -> x = 1
        let mut obj = Quadratic::zeros(2);
        obj.h = DMatrix::identity(2, 2) * 2.0;
        obj.g = DVector::from_vec(vec![-6.0, 0.0]);
        obj.c = 9.0;
        let ball = Quadratic {
            h: DMatrix::identity(2, 2) * 2.0,
            g: DVector::zeros(2),
            c: -1.0,
        };
        let p = Qcqp {
            objective: obj,
            constraints: vec![Constraint::Quadratic(ball)],
        };
        let QcqpOutcome::Optimal { x, value, max_violation, .. } =
            solve(&p, Some(&DVector::from_vec(vec![5.0, 5.0])), &IpOptions::default()).unwrap()
        else {
            panic!("expected optimum");
        };
        assert_abs_diff_eq!(x[0], 1.0, epsilon = 1e-6);
        assert_abs_diff_eq!(value, 4.0, epsilon = 1e-6);
        assert!(max_violation <= 1e-6);
    }

    #[test]
    fn disjoint_sets_are_infeasible() {
        // x <= -1 and x >= 1
        let p = Qcqp {
            objective: Quadratic::zeros(1),
            constraints: vec![bound(0, 1.0, -1.0), bound(0, -1.0, -1.0)],
        };
        match solve(&p, None, &IpOptions::default()).unwrap() {
            QcqpOutcome::Infeasible { min_violation, .. } => assert_abs_diff_eq!(min_violation, 1.0, epsilon = 1e-5),
            other => panic!("expected infeasible, got {other:?}"),
        }
    }

    #[test]
    fn touching_sets_solve_with_tiny_violation() {
        // x <= 1 and x >= 1: feasible set is a single point
        let mut obj = Quadratic::zeros(1);
        obj.g[0] = 1.0;
        let p = Qcqp {
            objective: obj,
            constraints: vec![bound(0, 1.0, 1.0), bound(0, -1.0, -1.0)],
        };
        match solve(&p, None, &IpOptions::default()).unwrap() {
            QcqpOutcome::Optimal { x, max_violation, .. } => {
                assert_abs_diff_eq!(x[0], 1.0, epsilon = 1e-5);
                assert!(max_violation <= 1e-6);
            }
            other => panic!("expected optimum, got {other:?}"),
        }
    }
}
