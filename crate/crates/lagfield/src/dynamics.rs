//! From Lagrangians to motions.
//!
//! Continuous side: the acceleration field `g(x, ẋ)` solving the
//! Euler–Lagrange equations for `ẍ`, integrated with a fixed-step classical
//! Runge–Kutta scheme (determinism matters more here than adaptivity).
//! Discrete side: the variational midpoint integrator used to generate
//! reference data, and the general discrete evolution rule that solves
//! `DEL(L_d)(x₀, x₁, x₂) = 0` for `x₂` by Newton iteration.

use nalgebra::{DMatrix, DVector};

use crate::functionals::Lagrangian;
use crate::kernels::{MultiIndex, PhasePoint};
use crate::{Error, Result};

/// Reciprocal-condition-number threshold below which a derivative block is
/// treated as degenerate.
const DEGENERACY_RCOND: f64 = 1e-12;

/// Newton iteration parameters for the discrete solvers.
#[derive(Clone, Copy, Debug)]
pub struct NewtonConfig {
    /// Convergence tolerance on the max-norm residual (relative to the
    /// problem's momentum scale).
    pub tol: f64,
    /// Iteration cap.
    pub max_iter: usize,
    /// Use a finite-difference Jacobian (step `1e-6·scale`) instead of the
    /// source's analytic second partials.
    pub fd_jacobian: bool,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        Self {
            tol: 1e-12,
            max_iter: 50,
            fd_jacobian: false,
        }
    }
}

/// A continuous trajectory: states `(x, ẋ)(t_k)` at uniformly spaced times.
#[derive(Clone, Debug)]
pub struct Trajectory {
    /// Sample times, strictly increasing, uniform step.
    pub times: Vec<f64>,
    /// Phase states at the sample times.
    pub states: Vec<PhasePoint>,
}

/// A discrete trajectory: configuration snapshots `x_k` at step indices.
#[derive(Clone, Debug)]
pub struct DiscreteTrajectory {
    /// Snapshots `x_0, x_1, …`.
    pub steps: Vec<Vec<f64>>,
}

/// Solves a symmetric system through its eigendecomposition, reporting
/// degeneracy via the reciprocal condition number.
fn solve_symmetric(mat: DMatrix<f64>, rhs: DVector<f64>) -> Result<DVector<f64>> {
    let eig = nalgebra::SymmetricEigen::new(mat);
    let max = eig.eigenvalues.iter().fold(0.0f64, |m, &l| m.max(l.abs()));
    let min = eig.eigenvalues.iter().fold(f64::MAX, |m, &l| m.min(l.abs()));
    let rcond = if max > 0.0 { min / max } else { 0.0 };
    if rcond < DEGENERACY_RCOND {
        return Err(Error::Degenerate { rcond });
    }
    let mut coeffs = eig.eigenvectors.transpose() * rhs;
    for (c, &l) in coeffs.iter_mut().zip(eig.eigenvalues.iter()) {
        *c /= l;
    }
    Ok(eig.eigenvectors * coeffs)
}

/// The acceleration field `g(L)(x̄)`: the unique `ẍ` with
/// `EL(L)(x, ẋ, ẍ) = 0`, i.e.
/// `(∂²L/∂ẋ∂ẋ) ẍ = ∂L/∂x − (∂²L/∂ẋ∂x) ẋ`.
///
/// # Errors
/// [`Error::Degenerate`] when the velocity Hessian block has reciprocal
/// condition number below `10⁻¹²`.
pub fn acceleration<L: Lagrangian + ?Sized>(l: &L, point: &PhasePoint) -> Result<Vec<f64>> {
    let dim = point.dim();
    assert_eq!(l.dim(), dim, "field dimension mismatch");
    let d = point.d();

    // One batched sweep: ∂L/∂x (d), ∂²L/∂ẋ∂x (d×d), ∂²L/∂ẋ∂ẋ (d×d).
    let mut indices = Vec::with_capacity(d + 2 * d * d);
    for k in 0..d {
        indices.push(MultiIndex::first(k, dim));
    }
    for k in 0..d {
        for i in 0..d {
            indices.push(MultiIndex::second(d + k, i, dim));
        }
    }
    for k in 0..d {
        for i in 0..d {
            indices.push(MultiIndex::second(d + k, d + i, dim));
        }
    }
    let vals = l.partials(&indices, point.coords());

    let mut rhs = DVector::zeros(d);
    for k in 0..d {
        let mut r = vals[k];
        for i in 0..d {
            r -= vals[d + k * d + i] * point.velocity()[i];
        }
        rhs[k] = r;
    }
    let hess = DMatrix::from_fn(d, d, |k, i| vals[d + d * d + k * d + i]);
    let sol = solve_symmetric(hess, rhs)?;
    Ok(sol.iter().cloned().collect())
}

/// Integrates `(x, ẋ)' = (ẋ, g(x, ẋ))` with classical fixed-step RK4 from
/// `x̄₀` over the given horizon. The number of steps is
/// `round(horizon / dt)`; every intermediate state is recorded.
///
/// # Errors
/// Propagates degeneracy errors from the acceleration field.
///
/// # Panics
/// If `dt` or `horizon` is not positive.
pub fn integrate<L: Lagrangian + ?Sized>(
    l: &L,
    start: &PhasePoint,
    horizon: f64,
    dt: f64,
) -> Result<Trajectory> {
    assert!(dt > 0.0 && horizon > 0.0, "need positive horizon and step");
    let steps = (horizon / dt).round().max(1.0) as usize;
    let d = start.d();
    let deriv = |state: &PhasePoint| -> Result<Vec<f64>> {
        let accel = acceleration(l, state)?;
        let mut f = Vec::with_capacity(2 * d);
        f.extend_from_slice(state.velocity());
        f.extend_from_slice(&accel);
        Ok(f)
    };

    let mut times = Vec::with_capacity(steps + 1);
    let mut states = Vec::with_capacity(steps + 1);
    times.push(0.0);
    states.push(start.clone());
    let mut current = start.clone();
    for step in 1..=steps {
        let y0 = current.coords().to_vec();
        let k1 = deriv(&current)?;
        let k2 = deriv(&shifted(&y0, &k1, 0.5 * dt))?;
        let k3 = deriv(&shifted(&y0, &k2, 0.5 * dt))?;
        let k4 = deriv(&shifted(&y0, &k3, dt))?;
        let next: Vec<f64> = (0..2 * d)
            .map(|i| y0[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
            .collect();
        current = PhasePoint::new(next);
        times.push(step as f64 * dt);
        states.push(current.clone());
    }
    Ok(Trajectory { times, states })
}

fn shifted(y0: &[f64], k: &[f64], h: f64) -> PhasePoint {
    PhasePoint::new(y0.iter().zip(k).map(|(y, ki)| y + h * ki).collect())
}

/// The midpoint discrete Lagrangian
/// `L_d(x₀, x₁) = Δt · L((x₀+x₁)/2, (x₁−x₀)/Δt)` of a continuous Lagrangian,
/// with partial derivatives up to order 2 obtained by the chain rule.
pub struct MidpointLagrangian<'a, L: Lagrangian + ?Sized> {
    inner: &'a L,
    dt: f64,
}

impl<'a, L: Lagrangian + ?Sized> MidpointLagrangian<'a, L> {
    /// Wraps a continuous Lagrangian with time step `Δt`.
    ///
    /// # Panics
    /// If `dt` is not positive.
    pub fn new(inner: &'a L, dt: f64) -> Self {
        assert!(dt > 0.0, "time step must be positive");
        Self { inner, dt }
    }

    /// The time step `Δt`.
    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Maps `(x₀, x₁)` to the midpoint phase coordinates
    /// `((x₀+x₁)/2, (x₁−x₀)/Δt)`.
    fn midpoint_coords(&self, z: &[f64]) -> Vec<f64> {
        let d = self.inner.dim() / 2;
        let mut m = Vec::with_capacity(2 * d);
        for i in 0..d {
            m.push(0.5 * (z[i] + z[d + i]));
        }
        for i in 0..d {
            m.push((z[d + i] - z[i]) / self.dt);
        }
        m
    }

    /// Chain-rule factors of coordinate `a` of `(x₀, x₁)`: the derivative of
    /// the midpoint position (index `a mod d`, factor ½) and of the finite
    /// difference velocity (factor ∓1/Δt).
    fn factors(&self, a: usize) -> (usize, f64, f64) {
        let d = self.inner.dim() / 2;
        if a < d {
            (a, 0.5, -1.0 / self.dt)
        } else {
            (a - d, 0.5, 1.0 / self.dt)
        }
    }
}

impl<L: Lagrangian + ?Sized> Lagrangian for MidpointLagrangian<'_, L> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn partial(&self, index: &MultiIndex, coords: &[f64]) -> f64 {
        let dim = self.inner.dim();
        let d = dim / 2;
        let m = self.midpoint_coords(coords);
        match index.order() {
            0 => self.dt * self.inner.value(&m),
            1 => {
                let a = index.orders().iter().position(|&o| o == 1).unwrap();
                let (i, cm, cv) = self.factors(a);
                self.dt
                    * (cm * self.inner.partial(&MultiIndex::first(i, dim), &m)
                        + cv * self.inner.partial(&MultiIndex::first(d + i, dim), &m))
            }
            2 => {
                let mut active = Vec::new();
                for (a, &o) in index.orders().iter().enumerate() {
                    for _ in 0..o {
                        active.push(a);
                    }
                }
                let (a, b) = (active[0], active[1]);
                let (i, cmi, cvi) = self.factors(a);
                let (j, cmj, cvj) = self.factors(b);
                self.dt
                    * (cmi * cmj * self.inner.partial(&MultiIndex::second(i, j, dim), &m)
                        + cmi * cvj * self.inner.partial(&MultiIndex::second(i, d + j, dim), &m)
                        + cvi * cmj * self.inner.partial(&MultiIndex::second(d + i, j, dim), &m)
                        + cvi * cvj
                            * self.inner.partial(&MultiIndex::second(d + i, d + j, dim), &m))
            }
            o => panic!("midpoint Lagrangian partials available only up to order 2, got {o}"),
        }
    }
}

/// Evaluates the residual `DEL(L_d)(x₀, x₁, x₂)` and optionally its Jacobian
/// with respect to `x₂`.
fn del_residual<Ld: Lagrangian + ?Sized>(
    ld: &Ld,
    grad2_first: &[f64],
    x1: &[f64],
    x2: &[f64],
    with_jacobian: bool,
    fd: bool,
) -> (DVector<f64>, Option<DMatrix<f64>>) {
    let dim = ld.dim();
    let d = dim / 2;
    let mut z = Vec::with_capacity(dim);
    z.extend_from_slice(x1);
    z.extend_from_slice(x2);

    let mut indices: Vec<MultiIndex> = (0..d).map(|k| MultiIndex::first(k, dim)).collect();
    if with_jacobian && !fd {
        for k in 0..d {
            for j in 0..d {
                indices.push(MultiIndex::second(k, d + j, dim));
            }
        }
    }
    let vals = ld.partials(&indices, &z);
    let res = DVector::from_fn(d, |k, _| grad2_first[k] + vals[k]);

    let jac = if with_jacobian {
        if fd {
            // Finite-difference Jacobian column by column.
            let scale = x2.iter().fold(1.0f64, |m, v| m.max(v.abs()));
            let h = 1e-6 * scale;
            let grad_indices: Vec<MultiIndex> = (0..d).map(|k| MultiIndex::first(k, dim)).collect();
            let mut j = DMatrix::zeros(d, d);
            for col in 0..d {
                let mut zp = z.clone();
                let mut zm = z.clone();
                zp[d + col] += h;
                zm[d + col] -= h;
                let gp = ld.partials(&grad_indices, &zp);
                let gm = ld.partials(&grad_indices, &zm);
                for row in 0..d {
                    j[(row, col)] = (gp[row] - gm[row]) / (2.0 * h);
                }
            }
            Some(j)
        } else {
            Some(DMatrix::from_fn(d, d, |k, jx| vals[d + k * d + jx]))
        }
    } else {
        None
    };
    (res, jac)
}

/// Solves the discrete Euler–Lagrange equation
/// `∇₂L_d(x₀, x₁) + ∇₁L_d(x₁, x₂) = 0` for `x₂` by Newton iteration from
/// the initialiser `x₂⁰ = 2x₁ − x₀`.
///
/// # Errors
/// [`Error::Degenerate`] on a singular Jacobian,
/// [`Error::NewtonDidNotConverge`] when the residual does not reach the
/// tolerance within the iteration cap.
pub fn discrete_evolution<Ld: Lagrangian + ?Sized>(
    ld: &Ld,
    x0: &[f64],
    x1: &[f64],
    cfg: &NewtonConfig,
) -> Result<Vec<f64>> {
    let dim = ld.dim();
    let d = dim / 2;
    assert_eq!(x0.len(), d, "x0 dimension mismatch");
    assert_eq!(x1.len(), d, "x1 dimension mismatch");

    // The constant part of the residual: ∇₂L_d(x₀, x₁).
    let mut z01 = Vec::with_capacity(dim);
    z01.extend_from_slice(x0);
    z01.extend_from_slice(x1);
    let grad2_indices: Vec<MultiIndex> = (0..d).map(|k| MultiIndex::first(d + k, dim)).collect();
    let grad2 = ld.partials(&grad2_indices, &z01);
    let scale = grad2.iter().fold(1.0f64, |m, v| m.max(v.abs()));

    let mut x2: Vec<f64> = (0..d).map(|i| 2.0 * x1[i] - x0[i]).collect();
    let mut residual = f64::INFINITY;
    for _ in 0..cfg.max_iter {
        let (res, jac) = del_residual(ld, &grad2, x1, &x2, true, cfg.fd_jacobian);
        residual = res.amax();
        if residual <= cfg.tol * scale {
            return Ok(x2);
        }
        let jac = jac.expect("jacobian requested");
        let lu = jac.lu();
        let step = lu
            .solve(&res)
            .ok_or(Error::Degenerate { rcond: 0.0 })?;
        for i in 0..d {
            x2[i] -= step[i];
        }
    }
    // One final residual check: the last Newton update may have converged.
    let (res, _) = del_residual(ld, &grad2, x1, &x2, false, cfg.fd_jacobian);
    residual = residual.min(res.amax());
    if residual <= cfg.tol * scale {
        return Ok(x2);
    }
    Err(Error::NewtonDidNotConverge {
        residual,
        iterations: cfg.max_iter,
    })
}

/// One step of the variational midpoint integrator for a continuous
/// Lagrangian: solves the discrete Euler–Lagrange equation of
/// `L_d = Δt·L((x₀+x₁)/2, (x₁−x₀)/Δt)` for `x₂`.
///
/// # Errors
/// As [`discrete_evolution`].
pub fn midpoint_step<L: Lagrangian + ?Sized>(
    l: &L,
    x0: &[f64],
    x1: &[f64],
    dt: f64,
    cfg: &NewtonConfig,
) -> Result<Vec<f64>> {
    discrete_evolution(&MidpointLagrangian::new(l, dt), x0, x1, cfg)
}

/// Runs [`discrete_evolution`] repeatedly, collecting `steps + 2` snapshots
/// starting from the seed pair `(x₀, x₁)`.
///
/// # Errors
/// As [`discrete_evolution`].
pub fn discrete_trajectory<Ld: Lagrangian + ?Sized>(
    ld: &Ld,
    x0: &[f64],
    x1: &[f64],
    steps: usize,
    cfg: &NewtonConfig,
) -> Result<DiscreteTrajectory> {
    let mut out = Vec::with_capacity(steps + 2);
    out.push(x0.to_vec());
    out.push(x1.to_vec());
    for n in 2..steps + 2 {
        let next = discrete_evolution(ld, &out[n - 2], &out[n - 1], cfg)?;
        out.push(next);
    }
    Ok(DiscreteTrajectory { steps: out })
}

/// Solves the discrete Legendre condition `Mm⁻(L_d)(x₀, x₁) = p`, i.e.
/// `−∇₁L_d(x₀, x₁) = p`, for `x₁` by Newton iteration from the supplied
/// initial guess. Used to seed discrete integration from `(x, p)` data.
///
/// # Errors
/// As [`discrete_evolution`].
pub fn position_from_momentum<Ld: Lagrangian + ?Sized>(
    ld: &Ld,
    x0: &[f64],
    p: &[f64],
    guess: &[f64],
    cfg: &NewtonConfig,
) -> Result<Vec<f64>> {
    let dim = ld.dim();
    let d = dim / 2;
    assert_eq!(x0.len(), d, "x0 dimension mismatch");
    assert_eq!(p.len(), d, "momentum dimension mismatch");
    let scale = p.iter().fold(1.0f64, |m, v| m.max(v.abs()));

    let mut indices: Vec<MultiIndex> = (0..d).map(|k| MultiIndex::first(k, dim)).collect();
    for k in 0..d {
        for j in 0..d {
            indices.push(MultiIndex::second(k, d + j, dim));
        }
    }

    let mut x1 = guess.to_vec();
    let mut residual = f64::INFINITY;
    for _ in 0..cfg.max_iter {
        let mut z = Vec::with_capacity(dim);
        z.extend_from_slice(x0);
        z.extend_from_slice(&x1);
        let vals = ld.partials(&indices, &z);
        // Residual of −∇₁L_d − p = 0.
        let res = DVector::from_fn(d, |k, _| -vals[k] - p[k]);
        residual = res.amax();
        if residual <= cfg.tol * scale {
            return Ok(x1);
        }
        // Jacobian of the residual w.r.t. x₁: −∂²L_d/∂x₀∂x₁.
        let jac = DMatrix::from_fn(d, d, |k, j| -vals[d + k * d + j]);
        let step = jac
            .lu()
            .solve(&res)
            .ok_or(Error::Degenerate { rcond: 0.0 })?;
        for i in 0..d {
            x1[i] -= step[i];
        }
    }
    Err(Error::NewtonDidNotConverge {
        residual,
        iterations: cfg.max_iter,
    })
}
