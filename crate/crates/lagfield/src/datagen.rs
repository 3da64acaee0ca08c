//! Reference systems, gauge transformations, sampling, and geometry
//! utilities.
//!
//! This module supplies everything the experiments need around the core
//! inference machinery: analytic Lagrangians with closed-form partials (the
//! coupled oscillator and friends), gauge transformations `L̃ = ρL + d_tF + c`
//! with linear `F(x) = aᵀx`, deterministic Halton sampling and uniform
//! meshes over axis-aligned boxes, fill-distance estimation on probe meshes,
//! and observation-set generation for the continuous and discrete training
//! pipelines.

use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::dynamics::{self, MidpointLagrangian, NewtonConfig};
use crate::functionals::{Functional, JetPoint, Lagrangian, MomentumVariant, SnapshotTriple};
use crate::kernels::{MultiIndex, PhasePoint};
use crate::{Error, Result};

/// An axis-aligned box `Ω = Π_i [lo_i, hi_i]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Region {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl Region {
    /// Creates a box from per-coordinate bounds.
    ///
    /// # Panics
    /// If the bound vectors differ in length, are empty, or any `lo ≥ hi`.
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Self {
        assert_eq!(lo.len(), hi.len(), "bound vectors must match");
        assert!(!lo.is_empty(), "region must have at least one dimension");
        for (l, h) in lo.iter().zip(&hi) {
            assert!(l.is_finite() && h.is_finite() && l < h, "need finite lo < hi");
        }
        Self { lo, hi }
    }

    /// The symmetric box `[−r, r]^dim`.
    pub fn symmetric_box(r: f64, dim: usize) -> Self {
        Self::new(vec![-r; dim], vec![r; dim])
    }

    /// The unit cube `[0, 1]^dim`.
    pub fn unit_cube(dim: usize) -> Self {
        Self::new(vec![0.0; dim], vec![1.0; dim])
    }

    /// Lower bounds.
    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    /// Upper bounds.
    pub fn hi(&self) -> &[f64] {
        &self.hi
    }

    /// Number of dimensions.
    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    /// The box centre.
    pub fn centroid(&self) -> Vec<f64> {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(l, h)| 0.5 * (l + h))
            .collect()
    }

    /// Whether a point lies in the closed box (with a small tolerance).
    pub fn contains(&self, p: &[f64]) -> bool {
        p.len() == self.dim()
            && p.iter()
                .zip(self.lo.iter().zip(&self.hi))
                .all(|(x, (l, h))| *x >= l - 1e-12 && *x <= h + 1e-12)
    }

    /// Maps a unit-cube point into the box.
    fn map_from_unit(&self, u: &[f64]) -> Vec<f64> {
        u.iter()
            .zip(self.lo.iter().zip(&self.hi))
            .map(|(t, (l, h))| l + t * (h - l))
            .collect()
    }
}

/// How a [`SampleSet`] was produced.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Generator {
    /// Deterministic Halton sequence (prime bases, index starting at 1).
    Halton,
    /// Tensor-product uniform mesh including the box boundary.
    UniformMesh,
    /// Points supplied by the caller.
    Explicit,
}

/// A finite point set in a box, together with its provenance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleSet {
    points: Vec<Vec<f64>>,
    generator: Generator,
    region: Region,
}

impl SampleSet {
    /// Wraps explicit points.
    ///
    /// # Panics
    /// If any point falls outside the closed box or has the wrong dimension.
    pub fn explicit(points: Vec<Vec<f64>>, region: Region) -> Self {
        for p in &points {
            assert!(region.contains(p), "sample point outside the region");
        }
        Self {
            points,
            generator: Generator::Explicit,
            region,
        }
    }

    /// The sample points.
    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    /// The enclosing box.
    pub fn region(&self) -> &Region {
        &self.region
    }

    /// Provenance of the samples.
    pub fn generator(&self) -> Generator {
        self.generator
    }

    /// The points as phase points (requires even dimension).
    pub fn phase_points(&self) -> Vec<PhasePoint> {
        self.points
            .iter()
            .map(|p| PhasePoint::new(p.clone()))
            .collect()
    }
}

/// First twenty primes, used as Halton bases.
const PRIMES: [u64; 20] = [
    2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71,
];

/// Radical inverse of `i` in the given base (van der Corput digit reversal).
fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let mut inv = 0.0;
    let mut denom = 1.0;
    while i > 0 {
        denom *= base as f64;
        inv += (i % base) as f64 / denom;
        i /= base;
    }
    inv
}

/// The first `n` points of the `dim`-dimensional Halton sequence (bases =
/// first `dim` primes, indices starting at 1), mapped affinely into the box.
/// Fully deterministic: the same arguments always produce identical bits.
///
/// # Panics
/// If `dim` is zero, exceeds the prime table (20), or differs from the
/// region's dimension.
pub fn halton(n: usize, dim: usize, region: &Region) -> SampleSet {
    assert!(dim > 0 && dim <= PRIMES.len(), "dim must be in 1..=20");
    assert_eq!(region.dim(), dim, "region dimension mismatch");
    let points = (1..=n as u64)
        .map(|i| {
            let u: Vec<f64> = (0..dim).map(|j| radical_inverse(i, PRIMES[j])).collect();
            region.map_from_unit(&u)
        })
        .collect();
    SampleSet {
        points,
        generator: Generator::Halton,
        region: region.clone(),
    }
}

/// A tensor-product mesh with `per_dim[i]` points along coordinate `i`,
/// including the box boundary (a single point sits at the centre).
///
/// # Panics
/// If `per_dim` length differs from the region dimension or contains zero.
pub fn uniform_mesh(per_dim: &[usize], region: &Region) -> SampleSet {
    assert_eq!(per_dim.len(), region.dim(), "per_dim dimension mismatch");
    assert!(per_dim.iter().all(|&m| m > 0), "need at least one point per dimension");
    let dim = region.dim();
    let total: usize = per_dim.iter().product();
    let mut points = Vec::with_capacity(total);
    for mut flat in 0..total {
        let mut p = vec![0.0; dim];
        for i in 0..dim {
            let m = per_dim[i];
            let idx = flat % m;
            flat /= m;
            let t = if m == 1 { 0.5 } else { idx as f64 / (m - 1) as f64 };
            p[i] = region.lo[i] + t * (region.hi[i] - region.lo[i]);
        }
        points.push(p);
    }
    SampleSet {
        points,
        generator: Generator::UniformMesh,
        region: region.clone(),
    }
}

/// Approximates the fill distance `h = sup_{x ∈ Ω̄} min_{p ∈ S} ‖x − p‖` by
/// maximising over an explicit probe mesh; the approximation error is at most
/// the probe mesh's own fill distance.
///
/// # Errors
/// [`Error::EmptySampleSet`] if either point set is empty.
pub fn fill_distance(samples: &[Vec<f64>], probe: &[Vec<f64>]) -> Result<f64> {
    if samples.is_empty() || probe.is_empty() {
        return Err(Error::EmptySampleSet);
    }
    let mut h: f64 = 0.0;
    for q in probe {
        let mut best = f64::INFINITY;
        for p in samples {
            let d2: f64 = p.iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum();
            if d2 < best {
                best = d2;
            }
        }
        h = h.max(best.sqrt());
    }
    Ok(h)
}

/// A default probe mesh for [`fill_distance`]: a dense uniform mesh for
/// `dim ≤ 2` (101 points per axis), a coarser mesh augmented with Halton
/// points for higher dimensions.
pub fn probe_mesh(region: &Region) -> Vec<Vec<f64>> {
    let dim = region.dim();
    if dim <= 2 {
        uniform_mesh(&vec![101; dim], region).points.clone()
    } else {
        let mut pts = uniform_mesh(&vec![5; dim], region).points.clone();
        pts.extend(halton(10_000, dim, region).points);
        pts
    }
}

/// Closed-form fill distance of an `M`-point uniform mesh (boundary
/// included) on a `dim'`-dimensional unit-scale box of side `side`:
/// `h = side·√dim' / (2(M^{1/dim'} − 1))`.
///
/// # Panics
/// If `M^{1/dim'}` is not an integer ≥ 2.
pub fn uniform_mesh_fill_distance(m: usize, dim: usize, side: f64) -> f64 {
    let per_axis = (m as f64).powf(1.0 / dim as f64).round() as usize;
    assert!(
        per_axis >= 2 && per_axis.pow(dim as u32) == m,
        "M = {m} is not a mesh count with at least two points per axis in dimension {dim}"
    );
    side * (dim as f64).sqrt() / (2.0 * (per_axis as f64 - 1.0))
}

type ValueFn = dyn Fn(&[f64]) -> f64 + Send + Sync;
type GradientFn = dyn Fn(&[f64]) -> Vec<f64> + Send + Sync;
type HessianFn = dyn Fn(&[f64]) -> DMatrix<f64> + Send + Sync;

/// A Lagrangian (continuous on `(x, ẋ)` or discrete on `(x₀, x₁)`) given by
/// closed-form value, gradient, and Hessian evaluators.
///
/// Cheap to clone: the evaluators are shared.
#[derive(Clone)]
pub struct AnalyticLagrangian {
    name: String,
    dim: usize,
    value: Arc<ValueFn>,
    gradient: Arc<GradientFn>,
    hessian: Arc<HessianFn>,
}

impl std::fmt::Debug for AnalyticLagrangian {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("AnalyticLagrangian")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .finish_non_exhaustive()
    }
}

impl AnalyticLagrangian {
    /// Builds an analytic Lagrangian from its evaluators. `dim` is the full
    /// phase-space dimension `2d`; the gradient must return `dim` entries and
    /// the Hessian a symmetric `dim × dim` matrix.
    pub fn from_parts<V, G, H>(name: &str, dim: usize, value: V, gradient: G, hessian: H) -> Self
    where
        V: Fn(&[f64]) -> f64 + Send + Sync + 'static,
        G: Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
        H: Fn(&[f64]) -> DMatrix<f64> + Send + Sync + 'static,
    {
        assert!(dim > 0 && dim.is_multiple_of(2), "dimension must be even and positive");
        Self {
            name: name.to_string(),
            dim,
            value: Arc::new(value),
            gradient: Arc::new(gradient),
            hessian: Arc::new(hessian),
        }
    }

    /// Human-readable name of the system.
    pub fn name(&self) -> &str {
        &self.name
    }

    /// The linear combination `a·L₁ + b·L₂` (useful for linearity tests).
    ///
    /// # Panics
    /// If the dimensions disagree.
    pub fn linear_combination(a: f64, l1: &Self, b: f64, l2: &Self) -> Self {
        assert_eq!(l1.dim, l2.dim, "dimension mismatch");
        let (v1, g1, h1) = (l1.value.clone(), l1.gradient.clone(), l1.hessian.clone());
        let (v2, g2, h2) = (l2.value.clone(), l2.gradient.clone(), l2.hessian.clone());
        Self::from_parts(
            &format!("{}*{} + {}*{}", a, l1.name, b, l2.name),
            l1.dim,
            move |z| a * v1(z) + b * v2(z),
            move |z| {
                g1(z)
                    .iter()
                    .zip(g2(z))
                    .map(|(p, q)| a * p + b * q)
                    .collect()
            },
            move |z| a * h1(z) + b * h2(z),
        )
    }
}

impl Lagrangian for AnalyticLagrangian {
    fn dim(&self) -> usize {
        self.dim
    }

    fn partial(&self, index: &MultiIndex, coords: &[f64]) -> f64 {
        assert_eq!(coords.len(), self.dim, "coordinate dimension mismatch");
        assert_eq!(index.dim(), self.dim, "index dimension mismatch");
        match index.order() {
            0 => (self.value)(coords),
            1 => {
                let i = index.orders().iter().position(|&o| o == 1).unwrap();
                (self.gradient)(coords)[i]
            }
            2 => {
                let h = (self.hessian)(coords);
                let mut active = index
                    .orders()
                    .iter()
                    .enumerate()
                    .filter(|(_, &o)| o > 0)
                    .map(|(i, &o)| (i, o));
                let (i, oi) = active.next().unwrap();
                if oi == 2 {
                    h[(i, i)]
                } else {
                    let (j, _) = active.next().unwrap();
                    h[(i, j)]
                }
            }
            o => panic!("analytic Lagrangian partials available only up to order 2, got {o}"),
        }
    }
}

/// The coupled harmonic oscillator `L = ½‖ẋ‖² − ½‖x‖² + α x⁰x¹` in `d = 2`.
pub fn coupled_oscillator(alpha: f64) -> AnalyticLagrangian {
    AnalyticLagrangian::from_parts(
        "coupled-oscillator",
        4,
        move |z| {
            0.5 * (z[2] * z[2] + z[3] * z[3]) - 0.5 * (z[0] * z[0] + z[1] * z[1])
                + alpha * z[0] * z[1]
        },
        move |z| vec![-z[0] + alpha * z[1], -z[1] + alpha * z[0], z[2], z[3]],
        move |_| {
            DMatrix::from_row_slice(
                4,
                4,
                &[
                    -1.0, alpha, 0.0, 0.0, //
                    alpha, -1.0, 0.0, 0.0, //
                    0.0, 0.0, 1.0, 0.0, //
                    0.0, 0.0, 0.0, 1.0,
                ],
            )
        },
    )
}

/// The one-dimensional harmonic oscillator `L = ½ẋ² − ½x²`.
pub fn oscillator_1d() -> AnalyticLagrangian {
    AnalyticLagrangian::from_parts(
        "oscillator-1d",
        2,
        |z| 0.5 * z[1] * z[1] - 0.5 * z[0] * z[0],
        |z| vec![-z[0], z[1]],
        |_| DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, 1.0]),
    )
}

/// The free particle `L = ½‖ẋ‖²` in `d` dimensions.
pub fn free_particle(d: usize) -> AnalyticLagrangian {
    let dim = 2 * d;
    AnalyticLagrangian::from_parts(
        "free-particle",
        dim,
        move |z| 0.5 * z[d..].iter().map(|v| v * v).sum::<f64>(),
        move |z| {
            let mut g = vec![0.0; dim];
            g[d..].copy_from_slice(&z[d..]);
            g
        },
        move |_| {
            let mut h = DMatrix::zeros(dim, dim);
            for i in d..dim {
                h[(i, i)] = 1.0;
            }
            h
        },
    )
}

/// A gauge transformation `L̃ = ρL + d_tF + c` with linear `F(x) = aᵀx`.
///
/// For continuous Lagrangians `d_tF(x, ẋ) = ẋᵀa`; for discrete Lagrangians
/// the total derivative becomes the difference `Δ_tF(x₀, x₁) = aᵀ(x₁ − x₀)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaugeTransform {
    /// Scale factor ρ (tests of equivalence require ρ ≠ 0).
    pub rho: f64,
    /// Coefficients of the linear gauge function `F(x) = aᵀx`.
    pub a: Vec<f64>,
    /// Additive constant c.
    pub c: f64,
}

/// Applies a gauge transformation to a continuous Lagrangian:
/// `L̃(x, ẋ) = ρL(x, ẋ) + ẋᵀa + c`.
///
/// # Panics
/// If `a` does not have length `d`.
pub fn gauge_apply(l: &AnalyticLagrangian, g: &GaugeTransform) -> AnalyticLagrangian {
    let dim = l.dim();
    let d = dim / 2;
    assert_eq!(g.a.len(), d, "gauge coefficient length must be d");
    let (rho, a, c) = (g.rho, g.a.clone(), g.c);
    let (v, gr, h) = (l.value.clone(), l.gradient.clone(), l.hessian.clone());
    AnalyticLagrangian::from_parts(
        &format!("gauged({})", l.name),
        dim,
        move |z| rho * v(z) + z[d..].iter().zip(&a).map(|(vi, ai)| vi * ai).sum::<f64>() + c,
        {
            let a = g.a.clone();
            move |z| {
                let mut grad = gr(z);
                for (i, gi) in grad.iter_mut().enumerate() {
                    *gi *= rho;
                    if i >= d {
                        *gi += a[i - d];
                    }
                }
                grad
            }
        },
        move |z| rho * h(z),
    )
}

/// Applies a gauge transformation to a discrete Lagrangian:
/// `L̃_d(x₀, x₁) = ρL_d(x₀, x₁) + aᵀ(x₁ − x₀) + c`.
///
/// # Panics
/// If `a` does not have length `d`.
pub fn gauge_apply_discrete(l: &AnalyticLagrangian, g: &GaugeTransform) -> AnalyticLagrangian {
    let dim = l.dim();
    let d = dim / 2;
    assert_eq!(g.a.len(), d, "gauge coefficient length must be d");
    let (rho, a, c) = (g.rho, g.a.clone(), g.c);
    let (v, gr, h) = (l.value.clone(), l.gradient.clone(), l.hessian.clone());
    AnalyticLagrangian::from_parts(
        &format!("gauged({})", l.name),
        dim,
        move |z| {
            rho * v(z)
                + (0..d).map(|i| a[i] * (z[d + i] - z[i])).sum::<f64>()
                + c
        },
        {
            let a = g.a.clone();
            move |z| {
                let mut grad = gr(z);
                for (i, gi) in grad.iter_mut().enumerate() {
                    *gi *= rho;
                    if i >= d {
                        *gi += a[i - d];
                    } else {
                        *gi -= a[i];
                    }
                }
                grad
            }
        },
        move |z| rho * h(z),
    )
}

/// Produces the gauge-equivalent continuous Lagrangian that satisfies the
/// normalisation conditions `L̃(x̄_b) = c_b`, `∂L̃/∂ẋ(x̄_b) = p_b`, and
/// `EL_k(L̃)(x̂_τ) = c_τ`: with `ρ = c_τ / EL_k(L)(x̂_τ)` the transform uses
/// `a = p_b − ρ ∂L/∂ẋ(x̄_b)` and `c = c_b − ẋ_bᵀa − ρL(x̄_b)`.
///
/// # Errors
/// [`Error::ZeroGaugeComponent`] if `EL_k(L)(x̂_τ)` vanishes.
pub fn normalize_equivalent(
    l: &AnalyticLagrangian,
    xbar_b: &PhasePoint,
    c_b: f64,
    p_b: &[f64],
    c_tau: f64,
    xhat_tau: &JetPoint,
    k: usize,
) -> Result<AnalyticLagrangian> {
    let d = xbar_b.d();
    assert_eq!(p_b.len(), d, "p_b length must be d");
    let el_tau = Functional::el(xhat_tau, k).apply(l);
    if el_tau.abs() < 1e-14 {
        return Err(Error::ZeroGaugeComponent);
    }
    let rho = c_tau / el_tau;
    let grad = (l.gradient)(xbar_b.coords());
    let a: Vec<f64> = (0..d).map(|i| p_b[i] - rho * grad[d + i]).collect();
    let c = c_b
        - xbar_b
            .velocity()
            .iter()
            .zip(&a)
            .map(|(v, ai)| v * ai)
            .sum::<f64>()
        - rho * (l.value)(xbar_b.coords());
    Ok(gauge_apply(l, &GaugeTransform { rho, a, c }))
}

/// Discrete analogue of [`normalize_equivalent`]: finds the gauge-equivalent
/// `L̃_d` with `L̃_d(x̄_b) = c_b`, `Mm⁻(L̃_d)(x̄_b) = p_b`, and
/// `DEL_k(L̃_d)(x̂_τ) = c_τ`, using the difference gauge `Δ_tF = aᵀ(x₁−x₀)`.
///
/// # Errors
/// [`Error::ZeroGaugeComponent`] if `DEL_k(L_d)(x̂_τ)` vanishes.
pub fn normalize_equivalent_discrete(
    l: &AnalyticLagrangian,
    xbar_b: &PhasePoint,
    c_b: f64,
    p_b: &[f64],
    c_tau: f64,
    triple_tau: &SnapshotTriple,
    k: usize,
) -> Result<AnalyticLagrangian> {
    let d = xbar_b.d();
    assert_eq!(p_b.len(), d, "p_b length must be d");
    let del_tau = Functional::del(triple_tau, k).apply(l);
    if del_tau.abs() < 1e-14 {
        return Err(Error::ZeroGaugeComponent);
    }
    let rho = c_tau / del_tau;
    let grad = (l.gradient)(xbar_b.coords());
    // Mm⁻ of the gauge part contributes +a, so a = p_b − ρ·Mm⁻(L_d)(x̄_b)
    // with Mm⁻ = −∇₁L_d.
    let a: Vec<f64> = (0..d).map(|i| p_b[i] + rho * grad[i]).collect();
    let c = c_b
        - (0..d)
            .map(|i| a[i] * (xbar_b.coords()[d + i] - xbar_b.coords()[i]))
            .sum::<f64>()
        - rho * (l.value)(xbar_b.coords());
    Ok(gauge_apply_discrete(l, &GaugeTransform { rho, a, c }))
}

/// Attaches accelerations to phase-space samples by solving the
/// Euler–Lagrange equations of the reference Lagrangian at each point.
///
/// # Errors
/// Propagates [`Error::Degenerate`] when the velocity Hessian block is
/// singular at a sample.
pub fn gen_continuous_observations(
    l: &AnalyticLagrangian,
    samples: &[PhasePoint],
) -> Result<Vec<JetPoint>> {
    samples
        .iter()
        .map(|p| {
            let a = dynamics::acceleration(l, p)?;
            Ok(JetPoint::new(p.clone(), a))
        })
        .collect()
}

/// Generates snapshot triples `(x(0), x(Δt), x(2Δt))` for a mechanical
/// Lagrangian from initial `(x, p)` data, using the variational midpoint
/// integrator with internal step `Δt / substeps`.
///
/// The initial momentum is converted to a starting configuration pair by
/// solving `Mm⁻(L_d)(x₀, x₁) = p` for `x₁` (discrete Legendre transform of
/// the internal-step midpoint Lagrangian); `mass` is the constant mass
/// matrix Λ used only for the Newton initialiser `x₁ ≈ x₀ + Δt_int·Λ⁻¹p`
/// (identity when `None`).
///
/// # Errors
/// Newton failures during initialisation or stepping.
pub fn gen_discrete_observations(
    l: &AnalyticLagrangian,
    initial: &[(Vec<f64>, Vec<f64>)],
    dt: f64,
    substeps: usize,
    mass: Option<&DMatrix<f64>>,
) -> Result<Vec<SnapshotTriple>> {
    assert!(dt > 0.0 && substeps > 0, "need positive step and substeps");
    let d = l.dim() / 2;
    let dt_int = dt / substeps as f64;
    let ld = MidpointLagrangian::new(l, dt_int);
    let cfg = NewtonConfig::default();
    let inv_mass = mass.map(|m| m.clone().try_inverse().expect("mass matrix must be invertible"));
    let mut out = Vec::with_capacity(initial.len());
    for (x, p) in initial {
        assert_eq!(x.len(), d, "initial position dimension mismatch");
        assert_eq!(p.len(), d, "initial momentum dimension mismatch");
        let v: Vec<f64> = match &inv_mass {
            Some(mi) => (mi * DMatrix::from_column_slice(d, 1, p)).iter().cloned().collect(),
            None => p.clone(),
        };
        let guess: Vec<f64> = (0..d).map(|i| x[i] + dt_int * v[i]).collect();
        // pos[n] = x(n·Δt_int); pos[1] comes from the discrete Legendre
        // transform of the initial momentum, the rest from the evolution rule.
        let mut pos = vec![x.clone(), dynamics::position_from_momentum(&ld, x, p, &guess, &cfg)?];
        for n in 2..=2 * substeps {
            let next = dynamics::discrete_evolution(&ld, &pos[n - 2], &pos[n - 1], &cfg)?;
            pos.push(next);
        }
        out.push(SnapshotTriple::new(
            pos[0].clone(),
            pos[substeps].clone(),
            pos[2 * substeps].clone(),
        ));
    }
    Ok(out)
}

/// Verifies the five continuous gauge identities at a point, returning the
/// worst relative error. Used by tests; kept here so the rules live next to
/// the transform they describe.
pub fn continuous_gauge_residual(
    l: &AnalyticLagrangian,
    g: &GaugeTransform,
    jet: &JetPoint,
) -> f64 {
    use crate::observables;
    let lt = gauge_apply(l, g);
    let x = jet.base();
    let d = x.d();
    let mut worst: f64 = 0.0;
    let mut record = |lhs: f64, rhs: f64| {
        let denom = lhs.abs().max(rhs.abs()).max(1.0);
        worst = worst.max((lhs - rhs).abs() / denom);
    };
    // EL(L̃) = ρ·EL(L)
    for k in 0..d {
        let phi = Functional::el(jet, k);
        record(phi.apply(&lt), g.rho * phi.apply(l));
    }
    // Mm(L̃) = ρ·Mm(L) + ∇F = ρ·Mm(L) + a
    for k in 0..d {
        let phi = Functional::momentum(x, k, MomentumVariant::Continuous);
        record(phi.apply(&lt), g.rho * phi.apply(l) + g.a[k]);
    }
    // Ham(L̃) = ρ·Ham(L) − c
    record(
        observables::hamiltonian_value(&lt, x),
        g.rho * observables::hamiltonian_value(l, x) - g.c,
    );
    // Sympl(L̃) = ρ·Sympl(L)
    let s_t = observables::symplectic_form(&lt, x);
    let s = observables::symplectic_form(l, x);
    for (a_e, b_e) in s_t.entries().iter().zip(s.entries().iter()) {
        record(*a_e, g.rho * b_e);
    }
    // Vol(L̃) = ρ^d·Vol(L)
    record(
        observables::volume_density(&lt, x),
        g.rho.powi(d as i32) * observables::volume_density(l, x),
    );
    worst
}

/// Verifies the five discrete gauge identities at a configuration pair and
/// triple, returning the worst relative error.
pub fn discrete_gauge_residual(
    l: &AnalyticLagrangian,
    g: &GaugeTransform,
    triple: &SnapshotTriple,
) -> f64 {
    use crate::observables;
    let lt = gauge_apply_discrete(l, g);
    let pair = triple.leading_pair();
    let d = pair.d();
    let mut worst: f64 = 0.0;
    let mut record = |lhs: f64, rhs: f64| {
        let denom = lhs.abs().max(rhs.abs()).max(1.0);
        worst = worst.max((lhs - rhs).abs() / denom);
    };
    // DEL(L̃_d) = ρ·DEL(L_d)
    for k in 0..d {
        let phi = Functional::del(triple, k);
        record(phi.apply(&lt), g.rho * phi.apply(l));
    }
    // Mm⁻(L̃_d) = ρ·Mm⁻(L_d) + a (gradient of F at x₀)
    for k in 0..d {
        let phi = Functional::momentum(&pair, k, MomentumVariant::DiscreteMinus);
        record(phi.apply(&lt), g.rho * phi.apply(l) + g.a[k]);
    }
    // Mm⁺(L̃_d) = ρ·Mm⁺(L_d) + a (gradient of F at x₁)
    for k in 0..d {
        let phi = Functional::momentum(&pair, k, MomentumVariant::DiscretePlus);
        record(phi.apply(&lt), g.rho * phi.apply(l) + g.a[k]);
    }
    // Sympl⁺(L̃_d) = ρ·Sympl⁺(L_d)
    let s_t = observables::discrete_symplectic_plus(&lt, &pair);
    let s = observables::discrete_symplectic_plus(l, &pair);
    for (a_e, b_e) in s_t.entries().iter().zip(s.entries().iter()) {
        record(*a_e, g.rho * b_e);
    }
    // Vol(L̃_d) = ρ^d·Vol(L_d)
    record(
        observables::discrete_volume_density(&lt, &pair),
        g.rho.powi(d as i32) * observables::discrete_volume_density(l, &pair),
    );
    worst
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn halton_base2_sequence_matches_reference() {
        let region = Region::unit_cube(1);
        let s = halton(3, 1, &region);
        assert_eq!(s.points(), &[vec![0.5], vec![0.25], vec![0.75]]);
    }

    #[test]
    fn halton_base3_sequence_matches_reference() {
        let region = Region::unit_cube(2);
        let s = halton(4, 2, &region);
        let second: Vec<f64> = s.points().iter().map(|p| p[1]).collect();
        let expected = [1.0 / 3.0, 2.0 / 3.0, 1.0 / 9.0, 4.0 / 9.0];
        for (a, b) in second.iter().zip(expected) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn halton_points_stay_inside_region_and_are_deterministic() {
        let region = Region::symmetric_box(1.0, 4);
        let s1 = halton(80, 4, &region);
        let s2 = halton(80, 4, &region);
        assert_eq!(s1, s2);
        assert!(s1.points().iter().all(|p| region.contains(p)));
    }

    #[test]
    fn uniform_mesh_fill_distance_matches_formula_in_1d() {
        let region = Region::unit_cube(1);
        let mesh = uniform_mesh(&[11], &region);
        let probe = uniform_mesh(&[2001], &region);
        let h = fill_distance(mesh.points(), probe.points()).unwrap();
        assert!((h - 0.05).abs() < 1e-3);
        assert!((uniform_mesh_fill_distance(11, 1, 1.0) - 0.05).abs() < 1e-15);
    }

    #[test]
    fn single_centre_point_fill_distance_is_corner_distance() {
        let region = Region::unit_cube(2);
        let samples = vec![vec![0.5, 0.5]];
        let probe = probe_mesh(&region);
        let h = fill_distance(&samples, &probe).unwrap();
        assert!((h - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-6);
    }

    #[test]
    fn fill_distance_monotone_under_sample_growth() {
        let region = Region::unit_cube(2);
        let probe = probe_mesh(&region);
        let all = halton(40, 2, &region);
        let h_small = fill_distance(&all.points()[..10], &probe).unwrap();
        let h_large = fill_distance(all.points(), &probe).unwrap();
        assert!(h_large <= h_small);
    }

    #[test]
    fn fill_distance_rejects_empty_sets() {
        assert!(matches!(
            fill_distance(&[], &[vec![0.0]]),
            Err(Error::EmptySampleSet)
        ));
    }

    #[test]
    fn coupled_oscillator_matches_hand_values() {
        let l = coupled_oscillator(0.1);
        let z = [0.2, 0.1, 0.0, 0.0];
        assert!(((l.value)(&z) + 0.023).abs() < 1e-15);
        // Velocity Hessian block is the identity.
        let h = (l.hessian)(&z);
        for i in 0..2 {
            for j in 0..2 {
                let expected = if i == j { 1.0 } else { 0.0 };
                assert_eq!(h[(2 + i, 2 + j)], expected);
            }
        }
    }

    #[test]
    fn decoupled_oscillator_hamiltonian_splits() {
        let l = coupled_oscillator(0.0);
        let p = PhasePoint::new(vec![0.3, -0.4, 0.5, 0.2]);
        let ham = crate::observables::hamiltonian_value(&l, &p);
        let expected = 0.5 * (0.5f64.powi(2) + 0.2f64.powi(2)) + 0.5 * (0.3f64.powi(2) + 0.4f64.powi(2));
        assert!((ham - expected).abs() < 1e-15);
    }

    #[test]
    fn identity_gauge_transform_is_identity() {
        let l = coupled_oscillator(0.1);
        let g = GaugeTransform {
            rho: 1.0,
            a: vec![0.0, 0.0],
            c: 0.0,
        };
        let lt = gauge_apply(&l, &g);
        let z = [0.3, -0.2, 0.8, 0.1];
        assert_eq!((lt.value)(&z), (l.value)(&z));
        assert_eq!((lt.gradient)(&z), (l.gradient)(&z));
    }

    #[test]
    fn continuous_gauge_rules_hold_at_a_point() {
        let l = coupled_oscillator(0.1);
        let g = GaugeTransform {
            rho: -1.7,
            a: vec![0.4, -0.9],
            c: 2.3,
        };
        let jet = JetPoint::new(PhasePoint::new(vec![0.3, -0.2, 0.8, 0.1]), vec![0.5, -0.6]);
        assert!(continuous_gauge_residual(&l, &g, &jet) < 1e-12);
    }

    #[test]
    fn normalization_satisfies_all_three_conditions() {
        let l = coupled_oscillator(0.1);
        let xbar_b = PhasePoint::new(vec![0.0, 0.0, 0.0, 0.0]);
        let jet_tau = JetPoint::new(PhasePoint::new(vec![0.5, 0.2, 0.1, -0.3]), vec![0.5, -0.6]);
        let (c_b, p_b, c_tau) = (1.0, vec![0.3, -0.2], 1.0);
        let lt = normalize_equivalent(&l, &xbar_b, c_b, &p_b, c_tau, &jet_tau, 0).unwrap();
        assert!(((lt.value)(xbar_b.coords()) - c_b).abs() < 1e-12);
        let grad = (lt.gradient)(xbar_b.coords());
        for i in 0..2 {
            assert!((grad[2 + i] - p_b[i]).abs() < 1e-12);
        }
        let el = Functional::el(&jet_tau, 0).apply(&lt);
        assert!((el - c_tau).abs() < 1e-12);
        // Re-normalising an already-normalised Lagrangian changes nothing.
        let lt2 = normalize_equivalent(&lt, &xbar_b, c_b, &p_b, c_tau, &jet_tau, 0).unwrap();
        let z = [0.4, -0.1, 0.2, 0.7];
        assert!(((lt2.value)(&z) - (lt.value)(&z)).abs() < 1e-12);
    }

    #[test]
    fn free_particle_discrete_observations_are_uniform() {
        let l = free_particle(1);
        let triples =
            gen_discrete_observations(&l, &[(vec![0.0], vec![1.0])], 0.1, 10, None).unwrap();
        let t = &triples[0];
        assert!((t.x0()[0] - 0.0).abs() < 1e-10);
        assert!((t.x1()[0] - 0.1).abs() < 1e-9);
        assert!((t.x2()[0] - 0.2).abs() < 1e-9);
    }
}
