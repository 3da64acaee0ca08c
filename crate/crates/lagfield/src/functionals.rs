//! Bounded linear functionals on the kernel's Hilbert space.
//!
//! Every constraint and every linear observable of the method — an
//! Euler–Lagrange component at an observed jet, a discrete Euler–Lagrange
//! component at a snapshot triple, a conjugate-momentum component, a point
//! evaluation — is a finite weighted sum of partial-derivative evaluations
//! `φ(L) = Σ_t w_t (∂^{α_t} L)(p_t)`. Representing functionals symbolically
//! (rather than as closures) makes the two pairings that drive inference
//! mechanical: `φ¹K(·, y)` and the bilinear form `φ¹ψ²K` both reduce to
//! weighted sums of analytic kernel derivatives.

use crate::kernels::{Kernel, MultiIndex, PhasePoint};

/// A smooth scalar field on `ℝ^{2d}` whose partial derivatives up to order 2
/// are available. Implemented by analytic reference Lagrangians, by learned
/// posterior means, and by wrappers such as the midpoint discrete Lagrangian.
///
/// The coordinates are `(x, ẋ)` for continuous Lagrangians and `(x₀, x₁)`
/// for discrete ones; the trait is agnostic.
pub trait Lagrangian {
    /// The phase-space dimension `2d` the field is defined on.
    fn dim(&self) -> usize;

    /// Evaluates the partial derivative `∂^α L` at the given coordinates.
    ///
    /// # Panics
    /// Implementations may panic if `|α| > 2` or the dimensions disagree.
    fn partial(&self, index: &MultiIndex, coords: &[f64]) -> f64;

    /// Evaluates the field itself.
    fn value(&self, coords: &[f64]) -> f64 {
        self.partial(&MultiIndex::zero(self.dim()), coords)
    }

    /// Evaluates several partial derivatives at one point. Implementations
    /// with shared work per point (e.g. learned models summing over many
    /// kernel terms) override this with a single-sweep version.
    fn partials(&self, indices: &[MultiIndex], coords: &[f64]) -> Vec<f64> {
        indices.iter().map(|idx| self.partial(idx, coords)).collect()
    }
}

impl<T: Lagrangian + ?Sized> Lagrangian for &T {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn partial(&self, index: &MultiIndex, coords: &[f64]) -> f64 {
        (**self).partial(index, coords)
    }
    fn partials(&self, indices: &[MultiIndex], coords: &[f64]) -> Vec<f64> {
        (**self).partials(indices, coords)
    }
}

/// An observed jet `x̂ = (x, ẋ, ẍ)`: a phase point plus the acceleration.
#[derive(Clone, Debug, PartialEq)]
pub struct JetPoint {
    base: PhasePoint,
    accel: Vec<f64>,
}

impl JetPoint {
    /// Creates a jet from a phase point and an acceleration vector.
    ///
    /// # Panics
    /// If the acceleration length differs from `d`.
    pub fn new(base: PhasePoint, accel: Vec<f64>) -> Self {
        assert_eq!(accel.len(), base.d(), "acceleration length must equal d");
        assert!(accel.iter().all(|a| a.is_finite()), "acceleration must be finite");
        Self { base, accel }
    }

    /// The underlying phase point `(x, ẋ)`.
    pub fn base(&self) -> &PhasePoint {
        &self.base
    }

    /// The acceleration `ẍ`.
    pub fn accel(&self) -> &[f64] {
        &self.accel
    }

    /// Configuration-space dimension `d`.
    pub fn d(&self) -> usize {
        self.base.d()
    }
}

/// Three consecutive configuration snapshots `(x₀, x₁, x₂)` of a discrete
/// motion.
#[derive(Clone, Debug, PartialEq)]
pub struct SnapshotTriple {
    x0: Vec<f64>,
    x1: Vec<f64>,
    x2: Vec<f64>,
}

impl SnapshotTriple {
    /// Creates a snapshot triple.
    ///
    /// # Panics
    /// If the three snapshots differ in length.
    pub fn new(x0: Vec<f64>, x1: Vec<f64>, x2: Vec<f64>) -> Self {
        assert!(
            x0.len() == x1.len() && x1.len() == x2.len(),
            "snapshots must share a dimension"
        );
        Self { x0, x1, x2 }
    }

    /// First snapshot.
    pub fn x0(&self) -> &[f64] {
        &self.x0
    }
    /// Middle snapshot.
    pub fn x1(&self) -> &[f64] {
        &self.x1
    }
    /// Last snapshot.
    pub fn x2(&self) -> &[f64] {
        &self.x2
    }
    /// Configuration-space dimension `d`.
    pub fn d(&self) -> usize {
        self.x0.len()
    }

    /// The leading configuration pair `(x₀, x₁)` as a phase point.
    pub fn leading_pair(&self) -> PhasePoint {
        PhasePoint::from_blocks(&self.x0, &self.x1)
    }

    /// The trailing configuration pair `(x₁, x₂)` as a phase point.
    pub fn trailing_pair(&self) -> PhasePoint {
        PhasePoint::from_blocks(&self.x1, &self.x2)
    }
}

/// Which conjugate momentum a momentum functional extracts.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MomentumVariant {
    /// Continuous momentum `Mm(L) = ∂L/∂ẋ`.
    Continuous,
    /// Discrete left momentum `Mm⁻(L_d) = −∇₁L_d`.
    DiscreteMinus,
    /// Discrete right momentum `Mm⁺(L_d) = ∇₂L_d`.
    DiscretePlus,
}

/// One weighted derivative evaluation inside a [`Functional`].
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Term {
    /// Scalar weight of the term.
    pub weight: f64,
    /// Anchor point of the derivative evaluation.
    pub point: PhasePoint,
    /// Derivative multi-index, `|α| ≤ 2`.
    pub index: MultiIndex,
}

/// A bounded linear functional `φ(L) = Σ_t w_t (∂^{α_t} L)(p_t)`.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Functional {
    dim: usize,
    terms: Vec<Term>,
}

impl Functional {
    /// Creates a functional from explicit terms on `ℝ^{dim}`.
    ///
    /// # Panics
    /// If any term's point or index dimension differs from `dim`.
    pub fn from_terms(dim: usize, terms: Vec<Term>) -> Self {
        for t in &terms {
            assert_eq!(t.point.dim(), dim, "term point dimension mismatch");
            assert_eq!(t.index.dim(), dim, "term index dimension mismatch");
        }
        Self { dim, terms }
    }

    /// The phase-space dimension the functional acts on.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// The terms of the functional.
    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    /// The `k`-th component (0-based) of the continuous Euler–Lagrange
    /// operator at an observed jet `x̂ = (x, ẋ, ẍ)`:
    ///
    /// `EL_k(L)(x̂) = Σ_i ẍ^i ∂²L/∂ẋ^k∂ẋ^i + Σ_i ẋ^i ∂²L/∂ẋ^k∂x^i − ∂L/∂x^k`.
    ///
    /// All terms are anchored at the jet's base point.
    ///
    /// # Panics
    /// If `k >= d`.
    pub fn el(jet: &JetPoint, k: usize) -> Self {
        let d = jet.d();
        assert!(k < d, "component {k} out of bounds for d={d}");
        let dim = 2 * d;
        let base = jet.base().clone();
        let mut terms = Vec::with_capacity(2 * d + 1);
        for i in 0..d {
            terms.push(Term {
                weight: jet.accel()[i],
                point: base.clone(),
                index: MultiIndex::second(d + k, d + i, dim),
            });
        }
        for i in 0..d {
            terms.push(Term {
                weight: base.velocity()[i],
                point: base.clone(),
                index: MultiIndex::second(d + k, i, dim),
            });
        }
        terms.push(Term {
            weight: -1.0,
            point: base,
            index: MultiIndex::first(k, dim),
        });
        Self::from_terms(dim, terms)
    }

    /// The `k`-th component (0-based) of the discrete Euler–Lagrange operator
    /// at a snapshot triple:
    ///
    /// `DEL_k(L_d)(x₀,x₁,x₂) = (∇₂L_d(x₀,x₁))_k + (∇₁L_d(x₁,x₂))_k`.
    ///
    /// # Panics
    /// If `k >= d`.
    pub fn del(triple: &SnapshotTriple, k: usize) -> Self {
        let d = triple.d();
        assert!(k < d, "component {k} out of bounds for d={d}");
        let dim = 2 * d;
        let terms = vec![
            Term {
                weight: 1.0,
                point: triple.leading_pair(),
                index: MultiIndex::first(d + k, dim),
            },
            Term {
                weight: 1.0,
                point: triple.trailing_pair(),
                index: MultiIndex::first(k, dim),
            },
        ];
        Self::from_terms(dim, terms)
    }

    /// The `k`-th component (0-based) of a conjugate momentum at a point.
    ///
    /// # Panics
    /// If `k >= d`.
    pub fn momentum(point: &PhasePoint, k: usize, variant: MomentumVariant) -> Self {
        let d = point.d();
        assert!(k < d, "component {k} out of bounds for d={d}");
        let dim = 2 * d;
        let (weight, index) = match variant {
            MomentumVariant::Continuous => (1.0, MultiIndex::first(d + k, dim)),
            MomentumVariant::DiscreteMinus => (-1.0, MultiIndex::first(k, dim)),
            MomentumVariant::DiscretePlus => (1.0, MultiIndex::first(d + k, dim)),
        };
        Self::from_terms(
            dim,
            vec![Term {
                weight,
                point: point.clone(),
                index,
            }],
        )
    }

    /// The evaluation functional `ev_{x̄}(L) = L(x̄)`.
    pub fn eval(point: &PhasePoint) -> Self {
        let dim = point.dim();
        Self::from_terms(
            dim,
            vec![Term {
                weight: 1.0,
                point: point.clone(),
                index: MultiIndex::zero(dim),
            }],
        )
    }

    /// A raw derivative-evaluation functional `L ↦ (∂^α L)(x̄)`.
    pub fn derivative(point: &PhasePoint, index: MultiIndex) -> Self {
        let dim = point.dim();
        Self::from_terms(
            dim,
            vec![Term {
                weight: 1.0,
                point: point.clone(),
                index,
            }],
        )
    }

    /// Applies the functional to a field with analytic (or learned) partial
    /// derivatives.
    ///
    /// # Panics
    /// If the field's dimension differs from the functional's.
    pub fn apply<L: Lagrangian + ?Sized>(&self, l: &L) -> f64 {
        assert_eq!(l.dim(), self.dim, "field dimension mismatch");
        self.terms
            .iter()
            .map(|t| t.weight * l.partial(&t.index, t.point.coords()))
            .sum()
    }

    /// Applies the functional to the kernel section `K(·, y)` in its first
    /// slot: `(φ¹K)(y) = Σ_t w_t (∂^{α_t}_x K)(p_t, y)`.
    ///
    /// # Panics
    /// If dimensions disagree with the kernel.
    pub fn pair_left(&self, kernel: &Kernel, y: &PhasePoint) -> f64 {
        let zero = MultiIndex::zero(self.dim);
        self.terms
            .iter()
            .map(|t| t.weight * kernel.partial(&t.index, &zero, &t.point, y))
            .sum()
    }

    /// The bilinear pairing `φ¹ψ²K = Σ_{s,t} w_s v_t ∂^{α_s}_x ∂^{β_t}_y
    /// K(p_s, q_t)`; symmetric in `(φ, ψ)`.
    ///
    /// # Panics
    /// If dimensions disagree.
    pub fn pair_bilinear(&self, other: &Functional, kernel: &Kernel) -> f64 {
        assert_eq!(self.dim, other.dim, "functional dimension mismatch");
        let mut acc = 0.0;
        for s in &self.terms {
            for t in &other.terms {
                acc += s.weight * t.weight * kernel.partial(&s.index, &t.index, &s.point, &t.point);
            }
        }
        acc
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{coupled_oscillator, AnalyticLagrangian};
    use nalgebra::DMatrix;

    /// 1-d oscillator L = v²/2 − x²/2 on coordinates (x, v).
    fn oscillator_1d() -> AnalyticLagrangian {
        crate::datagen::oscillator_1d()
    }

    /// Free discrete Lagrangian L_d = (x₁−x₀)²/(2Δt) in d=1.
    fn free_discrete(dt: f64) -> AnalyticLagrangian {
        AnalyticLagrangian::from_parts(
            "free-discrete",
            2,
            move |z| (z[1] - z[0]) * (z[1] - z[0]) / (2.0 * dt),
            move |z| vec![-(z[1] - z[0]) / dt, (z[1] - z[0]) / dt],
            move |_| DMatrix::from_row_slice(2, 2, &[1.0 / dt, -1.0 / dt, -1.0 / dt, 1.0 / dt]),
        )
    }

    /// Constant Lagrangian on 2d coordinates.
    fn constant(dim: usize, c: f64) -> AnalyticLagrangian {
        AnalyticLagrangian::from_parts(
            "constant",
            dim,
            move |_| c,
            move |_| vec![0.0; dim],
            move |_| DMatrix::zeros(dim, dim),
        )
    }

    #[test]
    fn el_annihilates_oscillator_motion_jet() {
        // For L = v²/2 − x²/2 the Euler–Lagrange residual is ẍ + x,
        // which vanishes on the jet (x, v, a) = (1, 0, −1).
        let jet = JetPoint::new(PhasePoint::new(vec![1.0, 0.0]), vec![-1.0]);
        let phi = Functional::el(&jet, 0);
        assert!((phi.apply(&oscillator_1d())).abs() < 1e-15);
    }

    #[test]
    fn el_of_coupled_oscillator_matches_equations_of_motion() {
        // For L = ½‖ẋ‖² − ½‖x‖² + αx⁰x¹ the residual is ẍ + x − α(x¹, x⁰).
        let alpha = 0.1;
        let l = coupled_oscillator(alpha);
        let x = [0.3, -0.2];
        let v = [0.5, 0.7];
        let a = [0.4, -0.9];
        let jet = JetPoint::new(PhasePoint::from_blocks(&x, &v), a.to_vec());
        let expected = [
            a[0] + x[0] - alpha * x[1],
            a[1] + x[1] - alpha * x[0],
        ];
        for (k, want) in expected.iter().enumerate() {
            let phi = Functional::el(&jet, k);
            assert!((phi.apply(&l) - want).abs() < 1e-14);
        }
    }

    #[test]
    fn el_annihilates_constants() {
        let jet = JetPoint::new(PhasePoint::new(vec![0.4, -0.3]), vec![0.8]);
        let phi = Functional::el(&jet, 0);
        assert_eq!(phi.apply(&constant(2, 3.7)), 0.0);
    }

    #[test]
    fn del_vanishes_on_uniform_motion() {
        let dt = 0.1;
        let triple = SnapshotTriple::new(vec![0.0], vec![1.0], vec![2.0]);
        let phi = Functional::del(&triple, 0);
        assert!(phi.apply(&free_discrete(dt)).abs() < 1e-12);
    }

    #[test]
    fn del_hand_value_on_nonuniform_triple() {
        let dt = 0.1;
        let triple = SnapshotTriple::new(vec![0.0], vec![1.0], vec![3.0]);
        let phi = Functional::del(&triple, 0);
        // ∇₂L_d(0,1) + ∇₁L_d(1,3) = 1/Δt − 2/Δt = −1/Δt.
        assert!((phi.apply(&free_discrete(dt)) + 1.0 / dt).abs() < 1e-10);
    }

    #[test]
    fn del_annihilates_constants() {
        let triple = SnapshotTriple::new(vec![0.2], vec![0.4], vec![0.9]);
        let phi = Functional::del(&triple, 0);
        assert_eq!(phi.apply(&constant(2, -1.2)), 0.0);
    }

    #[test]
    fn continuous_momentum_of_mechanical_lagrangian_is_mass_times_velocity() {
        let l = coupled_oscillator(0.1); // kinetic part ½‖ẋ‖², so Λ = I
        let p = PhasePoint::new(vec![0.3, -0.4, 0.6, -0.1]);
        for k in 0..2 {
            let phi = Functional::momentum(&p, k, MomentumVariant::Continuous);
            assert!((phi.apply(&l) - p.velocity()[k]).abs() < 1e-15);
        }
    }

    #[test]
    fn discrete_minus_momentum_of_free_discrete_lagrangian() {
        let dt = 0.1;
        let pair = PhasePoint::from_blocks(&[0.2], &[0.5]);
        let phi = Functional::momentum(&pair, 0, MomentumVariant::DiscreteMinus);
        // Mm⁻ = −∇₁L_d = (x₁ − x₀)/Δt.
        assert!((phi.apply(&free_discrete(dt)) - 3.0).abs() < 1e-12);
    }

    #[test]
    fn momentum_of_constant_vanishes() {
        let p = PhasePoint::new(vec![0.1, 0.2]);
        for variant in [
            MomentumVariant::Continuous,
            MomentumVariant::DiscreteMinus,
            MomentumVariant::DiscretePlus,
        ] {
            let phi = Functional::momentum(&p, 0, variant);
            assert_eq!(phi.apply(&constant(2, 5.0)), 0.0);
        }
    }

    #[test]
    fn eval_functional_on_constant_and_oscillator() {
        let p = PhasePoint::new(vec![0.7, -0.3]);
        let phi = Functional::eval(&p);
        assert_eq!(phi.apply(&constant(2, 2.5)), 2.5);

        // Reference oscillator value at (0.2, 0.1, 0, 0) with α = 0.1:
        // 0 − ½(0.04 + 0.01) + 0.1·0.2·0.1 = −0.023.
        let l = coupled_oscillator(0.1);
        let q = PhasePoint::new(vec![0.2, 0.1, 0.0, 0.0]);
        let ev = Functional::eval(&q);
        assert!((ev.apply(&l) + 0.023).abs() < 1e-15);
    }

    #[test]
    fn eval_pair_left_reproduces_kernel_section() {
        let k = Kernel::squared_exponential(1.0, 4);
        let x = PhasePoint::new(vec![0.1, 0.2, -0.3, 0.4]);
        let y = PhasePoint::new(vec![-0.2, 0.5, 0.1, 0.9]);
        let phi = Functional::eval(&x);
        assert_eq!(phi.pair_left(&k, &y), k.eval(&x, &y));
    }

    #[test]
    fn first_derivative_pair_left_vanishes_at_coincidence() {
        let k = Kernel::squared_exponential(1.0, 4);
        let x = PhasePoint::new(vec![0.1, 0.2, -0.3, 0.4]);
        let phi = Functional::derivative(&x, MultiIndex::first(2, 4));
        assert_eq!(phi.pair_left(&k, &x), 0.0);
    }

    #[test]
    fn bilinear_eval_pair_at_same_point_is_one() {
        let k = Kernel::squared_exponential(1.0, 4);
        let x = PhasePoint::new(vec![0.3, -0.1, 0.2, 0.0]);
        let phi = Functional::eval(&x);
        assert_eq!(phi.pair_bilinear(&phi, &k), 1.0);
    }

    #[test]
    fn bilinear_diagonal_is_nonnegative_and_symmetric() {
        let k = Kernel::squared_exponential(1.0, 4);
        let jet = JetPoint::new(PhasePoint::new(vec![0.3, -0.1, 0.2, 0.6]), vec![0.4, -0.5]);
        let triple_point = PhasePoint::new(vec![-0.6, 0.2, 0.1, 0.5]);
        let phi = Functional::el(&jet, 1);
        let psi = Functional::derivative(&triple_point, MultiIndex::second(0, 3, 4));
        assert!(phi.pair_bilinear(&phi, &k) >= 0.0);
        assert!(psi.pair_bilinear(&psi, &k) >= 0.0);
        let ab = phi.pair_bilinear(&psi, &k);
        let ba = psi.pair_bilinear(&phi, &k);
        assert!((ab - ba).abs() <= 1e-14 * ab.abs().max(1.0));
    }

    #[test]
    fn functional_application_is_linear() {
        let l1 = coupled_oscillator(0.1);
        let l2 = coupled_oscillator(0.7);
        let (a, b) = (2.5, -1.25);
        let combo = AnalyticLagrangian::linear_combination(a, &l1, b, &l2);
        let jet = JetPoint::new(PhasePoint::new(vec![0.3, -0.1, 0.2, 0.6]), vec![0.4, -0.5]);
        for k in 0..2 {
            let phi = Functional::el(&jet, k);
            let lhs = phi.apply(&combo);
            let rhs = a * phi.apply(&l1) + b * phi.apply(&l2);
            assert!((lhs - rhs).abs() < 1e-13);
        }
    }
}
