//! Kernels and their analytic mixed partial derivatives.
//!
//! Every bilinear pairing of constraint functionals reduces to evaluations of
//! `∂^α_x ∂^β_y K(x, y)` with `|α|, |β| ≤ 2`, so this module provides those
//! derivatives in closed form. For the squared-exponential kernel
//! `K(x, y) = exp(−‖x−y‖² / (2ℓ²))` the derivatives are polynomials times the
//! Gaussian; they are hand-derived rather than produced by automatic
//! differentiation since only orders up to (2, 2) are ever needed.

use serde::{Deserialize, Serialize};

/// A point of the extended phase space, `(x, ẋ) ∈ ℝ^{2d}` for continuous
/// problems or a configuration pair `(x₀, x₁) ∈ ℝ^{2d}` for discrete ones.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhasePoint {
    coords: Vec<f64>,
}

impl PhasePoint {
    /// Creates a phase point from its coordinate vector.
    ///
    /// # Panics
    /// If the length is zero or odd, or any entry is non-finite.
    pub fn new(coords: Vec<f64>) -> Self {
        assert!(
            !coords.is_empty() && coords.len().is_multiple_of(2),
            "phase point needs a nonempty even-length coordinate vector, got length {}",
            coords.len()
        );
        assert!(
            coords.iter().all(|c| c.is_finite()),
            "phase point coordinates must be finite"
        );
        Self { coords }
    }

    /// Builds a phase point by concatenating a position and a velocity block
    /// (or the two configurations of a discrete pair).
    ///
    /// # Panics
    /// If the blocks differ in length.
    pub fn from_blocks(first: &[f64], second: &[f64]) -> Self {
        assert_eq!(first.len(), second.len(), "phase point blocks must match");
        let mut coords = Vec::with_capacity(first.len() * 2);
        coords.extend_from_slice(first);
        coords.extend_from_slice(second);
        Self::new(coords)
    }

    /// The full coordinate vector of length `2d`.
    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    /// The configuration-space dimension `d`.
    pub fn d(&self) -> usize {
        self.coords.len() / 2
    }

    /// The phase-space dimension `2d`.
    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    /// The first coordinate block (`x`, or `x₀` for discrete pairs).
    pub fn position(&self) -> &[f64] {
        &self.coords[..self.d()]
    }

    /// The second coordinate block (`ẋ`, or `x₁` for discrete pairs).
    pub fn velocity(&self) -> &[f64] {
        &self.coords[self.d()..]
    }
}

/// A multi-index `α` describing a partial derivative `∂^α` on `ℝ^{2d}`.
///
/// Total orders above 2 never occur in the collocation machinery and are
/// rejected at construction.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MultiIndex {
    orders: Vec<u8>,
}

impl MultiIndex {
    /// Maximal total order supported by the functional machinery.
    pub const MAX_ORDER: u32 = 2;

    /// The zero multi-index (plain evaluation).
    pub fn zero(dim: usize) -> Self {
        Self {
            orders: vec![0; dim],
        }
    }

    /// The first-order index `e_i`.
    ///
    /// # Panics
    /// If `i >= dim`.
    pub fn first(i: usize, dim: usize) -> Self {
        assert!(i < dim, "index {i} out of bounds for dimension {dim}");
        let mut orders = vec![0; dim];
        orders[i] = 1;
        Self { orders }
    }

    /// The second-order index `e_i + e_j` (with `i = j` allowed).
    ///
    /// # Panics
    /// If `i >= dim` or `j >= dim`.
    pub fn second(i: usize, j: usize, dim: usize) -> Self {
        assert!(i < dim && j < dim, "indices ({i},{j}) out of bounds for dimension {dim}");
        let mut orders = vec![0; dim];
        orders[i] += 1;
        orders[j] += 1;
        Self { orders }
    }

    /// Creates a multi-index from explicit per-coordinate orders.
    ///
    /// # Panics
    /// If the total order exceeds [`MultiIndex::MAX_ORDER`].
    pub fn from_orders(orders: Vec<u8>) -> Self {
        let total: u32 = orders.iter().map(|&o| o as u32).sum();
        assert!(
            total <= Self::MAX_ORDER,
            "total derivative order {total} exceeds the supported maximum {}",
            Self::MAX_ORDER
        );
        Self { orders }
    }

    /// Per-coordinate derivative orders.
    pub fn orders(&self) -> &[u8] {
        &self.orders
    }

    /// Number of coordinates the index acts on.
    pub fn dim(&self) -> usize {
        self.orders.len()
    }

    /// Total derivative order `|α|`.
    pub fn order(&self) -> u32 {
        self.orders.iter().map(|&o| o as u32).sum()
    }
}

/// Supported kernel families.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum KernelFamily {
    /// `K(x, y) = exp(−‖x−y‖² / (2ℓ²))`.
    SquaredExponential,
}

/// A positive-definite kernel on `ℝ^{dim} × ℝ^{dim}` with analytic mixed
/// partial derivatives up to order (2, 2).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Kernel {
    family: KernelFamily,
    lengthscale: f64,
    dim: usize,
}

impl Kernel {
    /// Creates a squared-exponential kernel with the given lengthscale on
    /// `ℝ^{dim}`. Lengthscale 1 recovers `exp(−‖x−y‖²/2)`.
    ///
    /// # Panics
    /// If the lengthscale is not positive and finite, or `dim` is zero.
    pub fn squared_exponential(lengthscale: f64, dim: usize) -> Self {
        assert!(
            lengthscale.is_finite() && lengthscale > 0.0,
            "lengthscale must be positive and finite"
        );
        assert!(dim > 0, "kernel dimension must be positive");
        Self {
            family: KernelFamily::SquaredExponential,
            lengthscale,
            dim,
        }
    }

    /// The kernel family.
    pub fn family(&self) -> KernelFamily {
        self.family
    }

    /// The lengthscale ℓ.
    pub fn lengthscale(&self) -> f64 {
        self.lengthscale
    }

    /// The ambient dimension (2d for phase-space kernels).
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Evaluates `K(x, y)`.
    ///
    /// # Panics
    /// If either point does not match the kernel dimension.
    pub fn eval(&self, x: &PhasePoint, y: &PhasePoint) -> f64 {
        self.partial(
            &MultiIndex::zero(self.dim),
            &MultiIndex::zero(self.dim),
            x,
            y,
        )
    }

    /// Evaluates the analytic mixed partial `∂^α_x ∂^β_y K(x, y)`.
    ///
    /// For the squared-exponential kernel write `u = x − y` and
    /// `s = 1/ℓ²`; then `K = Π_i g(u_i)` with `g(t) = exp(−s t²/2)` and
    /// `∂^α_x ∂^β_y K = (−1)^{|β|} Π_i g^{(α_i+β_i)}(u_i)`, each factor a
    /// Hermite-type polynomial in `u_i` times the Gaussian.
    ///
    /// # Panics
    /// If `|α| > 2` or `|β| > 2`, or any dimension disagrees with the kernel.
    pub fn partial(&self, alpha: &MultiIndex, beta: &MultiIndex, x: &PhasePoint, y: &PhasePoint) -> f64 {
        assert_eq!(x.dim(), self.dim, "first argument dimension mismatch");
        assert_eq!(y.dim(), self.dim, "second argument dimension mismatch");
        assert_eq!(alpha.dim(), self.dim, "alpha dimension mismatch");
        assert_eq!(beta.dim(), self.dim, "beta dimension mismatch");
        assert!(alpha.order() <= MultiIndex::MAX_ORDER, "alpha order too high");
        assert!(beta.order() <= MultiIndex::MAX_ORDER, "beta order too high");

        match self.family {
            KernelFamily::SquaredExponential => {
                let s = 1.0 / (self.lengthscale * self.lengthscale);
                let mut sq = 0.0;
                for i in 0..self.dim {
                    let u = x.coords()[i] - y.coords()[i];
                    sq += u * u;
                }
                let mut value = (-0.5 * s * sq).exp();
                for i in 0..self.dim {
                    let n = alpha.orders()[i] + beta.orders()[i];
                    if n > 0 {
                        let u = x.coords()[i] - y.coords()[i];
                        value *= gaussian_derivative_factor(n, u, s);
                    }
                }
                if beta.order() % 2 == 1 {
                    value = -value;
                }
                value
            }
        }
    }
}

/// Polynomial factor `p_n(t)` such that `g^{(n)}(t) = p_n(t)·g(t)` for the
/// one-dimensional Gaussian `g(t) = exp(−s t²/2)`.
fn gaussian_derivative_factor(n: u8, t: f64, s: f64) -> f64 {
    match n {
        1 => -s * t,
        2 => s * s * t * t - s,
        3 => 3.0 * s * s * t - s * s * s * t * t * t,
        4 => {
            let t2 = t * t;
            s * s * (s * s * t2 * t2 - 6.0 * s * t2 + 3.0)
        }
        _ => unreachable!("derivative order {n} outside the supported range 1..=4"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn point(coords: &[f64]) -> PhasePoint {
        PhasePoint::new(coords.to_vec())
    }

    #[test]
    fn eval_at_coincidence_is_one() {
        let k = Kernel::squared_exponential(1.0, 4);
        let x = point(&[0.3, -0.7, 1.1, 0.0]);
        assert_eq!(k.eval(&x, &x), 1.0);
    }

    #[test]
    fn eval_matches_unit_distance_closed_form() {
        let k = Kernel::squared_exponential(1.0, 4);
        let x = point(&[0.0, 0.0, 0.0, 0.0]);
        let y = point(&[1.0, 0.0, 0.0, 0.0]);
        let expected = (-0.5f64).exp();
        assert!((k.eval(&x, &y) - expected).abs() < 1e-15);
        assert!((k.eval(&x, &y) - 0.606_530_659_712_633_4).abs() < 1e-15);
    }

    #[test]
    fn eval_is_symmetric() {
        let k = Kernel::squared_exponential(0.8, 4);
        let x = point(&[0.2, -0.3, 0.4, 0.9]);
        let y = point(&[-0.5, 0.1, 0.7, -0.2]);
        assert_eq!(k.eval(&x, &y), k.eval(&y, &x));
    }

    #[test]
    fn first_partial_vanishes_at_coincidence() {
        let k = Kernel::squared_exponential(1.0, 4);
        let x = point(&[0.1, 0.2, 0.3, 0.4]);
        let alpha = MultiIndex::first(0, 4);
        let beta = MultiIndex::zero(4);
        assert_eq!(k.partial(&alpha, &beta, &x, &x), 0.0);
    }

    #[test]
    fn mixed_first_partial_at_coincidence_is_inverse_lengthscale_squared() {
        for ell in [1.0, 0.5, 2.0] {
            let k = Kernel::squared_exponential(ell, 4);
            let x = point(&[0.1, 0.2, 0.3, 0.4]);
            let alpha = MultiIndex::first(0, 4);
            let beta = MultiIndex::first(0, 4);
            let expected = 1.0 / (ell * ell);
            assert!((k.partial(&alpha, &beta, &x, &x) - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn partial_symmetric_under_argument_and_index_swap() {
        let k = Kernel::squared_exponential(0.9, 4);
        let x = point(&[0.2, -0.3, 0.4, 0.9]);
        let y = point(&[-0.5, 0.1, 0.7, -0.2]);
        let indices = [
            MultiIndex::zero(4),
            MultiIndex::first(0, 4),
            MultiIndex::first(3, 4),
            MultiIndex::second(1, 1, 4),
            MultiIndex::second(0, 2, 4),
        ];
        for a in &indices {
            for b in &indices {
                let lhs = k.partial(a, b, &x, &y);
                let rhs = k.partial(b, a, &y, &x);
                assert!(
                    (lhs - rhs).abs() <= 1e-14 * lhs.abs().max(1.0),
                    "swap symmetry violated for {a:?}, {b:?}: {lhs} vs {rhs}"
                );
            }
        }
    }

    #[test]
    fn gram_matrix_on_halton_points_is_positive_semidefinite() {
        use crate::datagen::{halton, Region};
        let region = Region::symmetric_box(1.0, 4);
        let samples = halton(50, 4, &region);
        let k = Kernel::squared_exponential(1.0, 4);
        let pts: Vec<PhasePoint> = samples
            .points()
            .iter()
            .map(|p| PhasePoint::new(p.clone()))
            .collect();
        let n = pts.len();
        let gram = nalgebra::DMatrix::from_fn(n, n, |i, j| k.eval(&pts[i], &pts[j]));
        assert_eq!(gram.clone(), gram.transpose());
        let eig = nalgebra::SymmetricEigen::new(gram);
        let max = eig.eigenvalues.iter().cloned().fold(f64::MIN, f64::max);
        let min = eig.eigenvalues.iter().cloned().fold(f64::MAX, f64::min);
        assert!(min > -1e-8 * max, "min eigenvalue {min} too negative (max {max})");
    }
}
