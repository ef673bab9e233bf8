//! Terminal ingredients: LQR gain, Riccati terminal weight, and the
//! invariant ellipsoid `{x : ||x||_P <= gamma}` that fits inside the input
//! and state boxes.

use nalgebra::{DMatrix, Matrix3, RowVector3, SymmetricEigen, Vector3};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::{SystemMatrices, VehicleParams};
use crate::error::{Error, Result};

const DARE_MAX_ITER: usize = 10_000;
const DARE_TOL: f64 = 1e-12;

/// Terminal gain, weight and level sets for one vehicle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TerminalIngredients {
    pub k: RowVector3<f64>,
    pub p: Matrix3<f64>,
    pub gamma: f64,
    pub epsilon: f64,
    /// `Q + K^T R K`, the decrease matrix of the terminal Lyapunov function.
    pub phi: Matrix3<f64>,
}

impl TerminalIngredients {
    pub fn p_norm(&self, x: &Vector3<f64>) -> f64 {
        (x.transpose() * self.p * x)[0].max(0.0).sqrt()
    }

    /// Whether `x` lies in the terminal-constraint set `||x||_P <= epsilon`.
    pub fn in_epsilon_set(&self, x: &Vector3<f64>) -> bool {
        self.p_norm(x) <= self.epsilon
    }

    /// Whether `x` lies in the invariant set `||x||_P <= gamma`.
    pub fn in_gamma_set(&self, x: &Vector3<f64>) -> bool {
        self.p_norm(x) <= self.gamma
    }

    pub fn closed_loop(&self, m: &SystemMatrices) -> Matrix3<f64> {
        m.a + m.b * self.k
    }

    pub fn feedback(&self, x: &Vector3<f64>) -> f64 {
        (self.k * x)[0]
    }

    pub fn lambda_min_p(&self) -> f64 {
        SymmetricEigen::new(self.p).eigenvalues.min()
    }

    pub fn lambda_max_p(&self) -> f64 {
        SymmetricEigen::new(self.p).eigenvalues.max()
    }
}

/// Solve the discrete algebraic Riccati equation by fixed-point iteration of
/// the Riccati difference equation started at `P = Q`.
pub fn solve_dare(a: &DMatrix<f64>, b: &DMatrix<f64>, q: &DMatrix<f64>, r: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    if a.ncols() != n || b.nrows() != n || q.shape() != (n, n) || r.shape() != (b.ncols(), b.ncols()) {
        return Err(Error::Synthesis("inconsistent Riccati dimensions".into()));
    }
    let at = a.transpose();
    let bt = b.transpose();
    let mut p = q.clone();
    for _ in 0..DARE_MAX_ITER {
        let next = riccati_map(&p, a, &at, b, &bt, q, r)?;
        let change = (&next - &p).norm();
        p = next;
        if change <= DARE_TOL * p.norm().max(1.0) {
            // symmetrise away roundoff
            let sym = (&p + p.transpose()) * 0.5;
            return Ok(sym);
        }
    }
    Err(Error::Synthesis(format!(
        "Riccati iteration did not converge in {DARE_MAX_ITER} steps"
    )))
}

fn riccati_map(
    p: &DMatrix<f64>,
    a: &DMatrix<f64>,
    at: &DMatrix<f64>,
    b: &DMatrix<f64>,
    bt: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let pa = p * a;
    let s = r + bt * p * b;
    let s_inv = s
        .try_inverse()
        .ok_or_else(|| Error::Synthesis("R + B'PB is singular".into()))?;
    let pb = p * b;
    Ok(at * &pa - at * &pb * s_inv * bt * &pa + q)
}

/// Frobenius residual of the Riccati equation at `p`.
pub fn dare_residual(a: &DMatrix<f64>, b: &DMatrix<f64>, q: &DMatrix<f64>, r: &DMatrix<f64>, p: &DMatrix<f64>) -> f64 {
    match riccati_map(p, a, &a.transpose(), b, &b.transpose(), q, r) {
        Ok(next) => (p - next).norm(),
        Err(_) => f64::INFINITY,
    }
}

/// `K = -(R + B'PB)^{-1} B'PA`.
pub fn lqr_gain(a: &DMatrix<f64>, b: &DMatrix<f64>, p: &DMatrix<f64>, r: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let bt = b.transpose();
    let s = r + &bt * p * b;
    let s_inv = s
        .try_inverse()
        .ok_or_else(|| Error::Synthesis("R + B'PB is singular".into()))?;
    Ok(-(s_inv * bt * p * a))
}

/// Largest `gamma` such that the whole ellipsoid `||x||_P <= gamma` maps
/// into the input box under `u = Kx` and lies inside the error box.
pub fn terminal_radius(k: &RowVector3<f64>, p: &Matrix3<f64>, params: &VehicleParams) -> Result<f64> {
    let p_inv = p
        .try_inverse()
        .ok_or_else(|| Error::Synthesis("terminal weight is singular".into()))?;
    // sup over the unit P-ball of |c x| is sqrt(c P^{-1} c').
    let gain_spread = (k * p_inv * k.transpose())[0].max(0.0).sqrt();
    let u_bound = params.u_max.min(-params.u_min);
    let mut gamma = if gain_spread > 0.0 {
        u_bound / gain_spread
    } else {
        f64::INFINITY
    };
    for (i, bound) in params.state_bound.iter().enumerate() {
        let spread = p_inv[(i, i)].max(0.0).sqrt();
        if spread > 0.0 {
            gamma = gamma.min(bound / spread);
        }
    }
    if !(gamma.is_finite() && gamma > 0.0) {
        return Err(Error::Synthesis(format!("terminal radius {gamma} is not positive")));
    }
    Ok(gamma)
}

/// Build the terminal ingredients for `Q = q I`, `R = r`, with
/// `epsilon = epsilon_fraction * gamma`.
pub fn synthesize(
    m: &SystemMatrices,
    params: &VehicleParams,
    q: f64,
    r: f64,
    epsilon_fraction: f64,
) -> Result<TerminalIngredients> {
    if !(q > 0.0 && r > 0.0) {
        return Err(Error::Synthesis("weights must be positive definite".into()));
    }
    if !(epsilon_fraction > 0.0 && epsilon_fraction < 1.0) {
        return Err(Error::param("epsilon_fraction", "must lie in (0, 1)"));
    }
    let a = DMatrix::from_column_slice(3, 3, m.a.as_slice());
    let b = DMatrix::from_column_slice(3, 1, m.b.as_slice());
    let qm = DMatrix::identity(3, 3) * q;
    let rm = DMatrix::from_element(1, 1, r);
    let p_dyn = solve_dare(&a, &b, &qm, &rm)?;
    let k_dyn = lqr_gain(&a, &b, &p_dyn, &rm)?;
    let p = Matrix3::from_column_slice(p_dyn.as_slice());
    let k = RowVector3::new(k_dyn[(0, 0)], k_dyn[(0, 1)], k_dyn[(0, 2)]);
    if spectral_radius(&(m.a + m.b * k)) >= 1.0 {
        return Err(Error::Synthesis("LQR closed loop is not Schur stable".into()));
    }
    let gamma = terminal_radius(&k, &p, params)?;
    let phi = Matrix3::identity() * q + k.transpose() * r * k;
    Ok(TerminalIngredients {
        k,
        p,
        gamma,
        epsilon: epsilon_fraction * gamma,
        phi,
    })
}

/// Largest eigenvalue modulus.
pub fn spectral_radius(m: &Matrix3<f64>) -> f64 {
    m.complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

/// `P^{-1/2}` for a symmetric positive definite `P`.
pub fn inverse_sqrt(p: &Matrix3<f64>) -> Matrix3<f64> {
    let eig = SymmetricEigen::new(*p);
    let d = Matrix3::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l.sqrt()));
    eig.eigenvectors * d * eig.eigenvectors.transpose()
}

#[derive(Debug, Clone, PartialEq)]
pub struct InvarianceReport {
    pub holds: bool,
    /// Smallest `-(||A_cl x||_P^2 - ||x||_P^2 + ||x||_phi^2)` over the samples.
    pub worst_decrease_margin: f64,
    /// Minimum eigenvalue of `-(A_cl' P A_cl - P + phi)`.
    pub matrix_margin: f64,
    pub samples: usize,
    pub counterexample: Option<Vector3<f64>>,
}

/// Sample `samples` points on and inside the `gamma` level set and check that
/// the closed loop stays inside the set, keeps the input and state boxes, and
/// decreases `||x||_P^2` by at least `||x||_phi^2`, up to `1e-9` relative
/// to the scale of `P`.
pub fn verify_invariance<R: Rng + ?Sized>(
    ing: &TerminalIngredients,
    m: &SystemMatrices,
    params: &VehicleParams,
    samples: usize,
    rng: &mut R,
) -> InvarianceReport {
    const TOL: f64 = 1e-9;
    let acl = ing.closed_loop(m);
    let lyap = acl.transpose() * ing.p * acl - ing.p + ing.phi;
    let matrix_margin = -SymmetricEigen::new((lyap + lyap.transpose()) * 0.5).eigenvalues.max();

    let shape = inverse_sqrt(&ing.p);
    let mut worst = f64::INFINITY;
    let mut counterexample = None;
    let check = |x: Vector3<f64>, worst: &mut f64| -> bool {
        let next = acl * x;
        let vx = (x.transpose() * ing.p * x)[0];
        let vn = (next.transpose() * ing.p * next)[0];
        let dec = (x.transpose() * ing.phi * x)[0];
        let margin = -(vn - vx + dec);
        *worst = worst.min(margin);
        let u = ing.feedback(&x);
        let scale = vx.max(1.0);
        margin >= -TOL * scale
            && vn <= vx + TOL * scale
            && u >= params.u_min - TOL
            && u <= params.u_max + TOL
            && x.iter().zip(params.state_bound.iter()).all(|(c, b)| c.abs() <= b + TOL)
    };

    let origin_ok = check(Vector3::zeros(), &mut worst);
    let mut holds = origin_ok;
    for i in 0..samples {
        let dir = loop {
            let z = Vector3::new(
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            );
            let n = z.norm();
            if n > 1e-3 && n <= 1.0 {
                break z / n;
            }
        };
        // half the samples on the boundary, the rest strictly inside
        let radius = if i % 2 == 0 { 1.0 } else { rng.gen::<f64>() };
        let x = shape * dir * (ing.gamma * radius);
        if !check(x, &mut worst) && counterexample.is_none() {
            counterexample = Some(x);
            holds = false;
        }
    }
    InvarianceReport {
        holds: holds && matrix_margin >= -TOL * ing.p.norm().max(1.0),
        worst_decrease_margin: worst,
        matrix_margin,
        samples,
        counterexample,
    }
}
