//! Geometric observables of a Lagrangian and their uncertainties.
//!
//! The Hamiltonian, conjugate momenta, and symplectic-form entries are linear
//! in the Lagrangian, so each is both evaluated on any field implementing
//! [`Lagrangian`] and — when the field is a learned [`PosteriorModel`] —
//! equipped with a closed-form posterior variance through the corresponding
//! [`Functional`]. The volume density is a determinant and therefore
//! nonlinear; it is evaluated on the mean only.

use nalgebra::DMatrix;

use crate::functionals::{Functional, Lagrangian, MomentumVariant, Term};
use crate::inference::{ModelKind, PosteriorModel};
use crate::kernels::{MultiIndex, PhasePoint};
use crate::{Error, Result};

/// The coordinate matrix of a 2-form at a point: `M_{ab} = ω(e_a, e_b)`,
/// antisymmetric, in the frame `(dx, dẋ)` (continuous) or `(dx₀, dx₁)`
/// (discrete).
#[derive(Clone, Debug, PartialEq)]
pub struct SymplecticMatrix {
    entries: DMatrix<f64>,
}

impl SymplecticMatrix {
    fn new(entries: DMatrix<f64>) -> Self {
        Self { entries }
    }

    /// The `2d × 2d` coordinate matrix.
    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    /// Largest absolute violation of antisymmetry (diagnostic).
    pub fn antisymmetry_defect(&self) -> f64 {
        let m = &self.entries;
        let mut worst: f64 = 0.0;
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                worst = worst.max((m[(i, j)] + m[(j, i)]).abs());
            }
        }
        worst
    }
}

/// Value(s) of an observable, optionally with posterior variance(s).
#[derive(Clone, Debug, PartialEq)]
pub struct ObservableReport {
    /// Observable value; scalar observables report one entry.
    pub values: Vec<f64>,
    /// Componentwise posterior variance, present when requested of a
    /// learned model. Clamped to zero when within numerical tolerance below.
    pub variances: Option<Vec<f64>>,
}

/// The Hamiltonian `Ham(L)(x̄) = ẋᵀ ∂L/∂ẋ − L(x̄)` of a continuous
/// Lagrangian at a phase point.
pub fn hamiltonian_value<L: Lagrangian + ?Sized>(l: &L, point: &PhasePoint) -> f64 {
    hamiltonian_functional(point).apply(l)
}

/// The functional `ψ_Ham = Σ_s ẋ^s (∂/∂ẋ^s at x̄) − ev_{x̄}` whose
/// application yields the Hamiltonian.
pub fn hamiltonian_functional(point: &PhasePoint) -> Functional {
    let d = point.d();
    let dim = point.dim();
    let mut terms = Vec::with_capacity(d + 1);
    for s in 0..d {
        terms.push(Term {
            weight: point.velocity()[s],
            point: point.clone(),
            index: MultiIndex::first(d + s, dim),
        });
    }
    terms.push(Term {
        weight: -1.0,
        point: point.clone(),
        index: MultiIndex::zero(dim),
    });
    Functional::from_terms(dim, terms)
}

/// The Hamiltonian of a learned continuous model, with optional posterior
/// variance.
///
/// # Errors
/// [`Error::KindMismatch`] when applied to a discrete model.
pub fn hamiltonian(
    model: &PosteriorModel,
    point: &PhasePoint,
    with_variance: bool,
) -> Result<ObservableReport> {
    if model.kind() != ModelKind::Continuous {
        return Err(Error::KindMismatch {
            context: "Hamiltonian requires a continuous model",
        });
    }
    let psi = hamiltonian_functional(point);
    let value = psi.apply(model);
    let variances = with_variance.then(|| vec![model.posterior_variance(&psi)]);
    Ok(ObservableReport {
        values: vec![value],
        variances,
    })
}

/// Conjugate momenta of any Lagrangian source (continuous `∂L/∂ẋ`, discrete
/// `Mm⁻ = −∇₁L_d` or `Mm⁺ = ∇₂L_d`).
pub fn momenta_value<L: Lagrangian + ?Sized>(
    l: &L,
    point: &PhasePoint,
    variant: MomentumVariant,
) -> Vec<f64> {
    (0..point.d())
        .map(|k| Functional::momentum(point, k, variant).apply(l))
        .collect()
}

/// Conjugate momenta of a learned model, with optional componentwise
/// posterior variance.
///
/// # Errors
/// [`Error::KindMismatch`] when the variant does not match the model kind.
pub fn momenta(
    model: &PosteriorModel,
    point: &PhasePoint,
    variant: MomentumVariant,
    with_variance: bool,
) -> Result<ObservableReport> {
    let ok = match variant {
        MomentumVariant::Continuous => model.kind() == ModelKind::Continuous,
        MomentumVariant::DiscreteMinus | MomentumVariant::DiscretePlus => {
            model.kind() == ModelKind::Discrete
        }
    };
    if !ok {
        return Err(Error::KindMismatch {
            context: "momentum variant does not match the model kind",
        });
    }
    let d = point.d();
    let mut values = Vec::with_capacity(d);
    let mut variances = with_variance.then(|| Vec::with_capacity(d));
    for k in 0..d {
        let phi = Functional::momentum(point, k, variant);
        values.push(phi.apply(model));
        if let Some(v) = variances.as_mut() {
            v.push(model.posterior_variance(&phi));
        }
    }
    Ok(ObservableReport { values, variances })
}

/// The symplectic form of a continuous Lagrangian at a phase point, as the
/// antisymmetric coordinate matrix in the frame `(dx, dẋ)`:
/// with `A_{rs} = ∂²L/∂x^r∂ẋ^s` and `B_{rs} = ∂²L/∂ẋ^r∂ẋ^s`,
///
/// ```text
/// M = [ Aᵀ − A   Bᵀ ]
///     [  −B      0  ]
/// ```
///
/// For mechanical Lagrangians `½ẋᵀΛẋ − V(x)` this is the canonical block
/// form with coupling block Λ.
pub fn symplectic_form<L: Lagrangian + ?Sized>(l: &L, point: &PhasePoint) -> SymplecticMatrix {
    let d = point.d();
    let dim = point.dim();
    let z = point.coords();
    let a = DMatrix::from_fn(d, d, |r, s| l.partial(&MultiIndex::second(r, d + s, dim), z));
    let b = DMatrix::from_fn(d, d, |r, s| {
        l.partial(&MultiIndex::second(d + r, d + s, dim), z)
    });
    let mut m = DMatrix::zeros(dim, dim);
    for r in 0..d {
        for s in 0..d {
            m[(r, s)] = a[(s, r)] - a[(r, s)];
            m[(r, d + s)] = b[(s, r)];
            m[(d + r, s)] = -b[(r, s)];
        }
    }
    SymplecticMatrix::new(m)
}

/// Coordinate matrix of the exterior derivative of a one-form `θ` on the
/// pair space, `M_{ab} = ∂_a θ_b − ∂_b θ_a`, where `θ` is given by its
/// components as derivative indices of `L_d` with signs.
fn d_of_one_form<L: Lagrangian + ?Sized>(
    l: &L,
    z: &[f64],
    // component b of θ as (sign, derivative coordinate) or None when θ_b = 0
    theta: impl Fn(usize) -> Option<(f64, usize)>,
) -> DMatrix<f64> {
    let dim = l.dim();
    let mut m = DMatrix::zeros(dim, dim);
    for a in 0..dim {
        for b in 0..dim {
            let mut v = 0.0;
            if let Some((sign, ib)) = theta(b) {
                v += sign * l.partial(&MultiIndex::second(a, ib, dim), z);
            }
            if let Some((sign, ia)) = theta(a) {
                v -= sign * l.partial(&MultiIndex::second(b, ia, dim), z);
            }
            m[(a, b)] = v;
        }
    }
    m
}

/// The discrete symplectic form obtained from the right one-form
/// `θ⁺ = ∇₂L_d · dx₁`: its exterior derivative in the `(dx₀, dx₁)` frame.
pub fn discrete_symplectic_plus<L: Lagrangian + ?Sized>(
    l: &L,
    pair: &PhasePoint,
) -> SymplecticMatrix {
    let d = pair.d();
    SymplecticMatrix::new(d_of_one_form(l, pair.coords(), |b| {
        (b >= d).then_some((1.0, b))
    }))
}

/// The discrete symplectic form obtained from the left one-form
/// `θ⁻ = −∇₁L_d · dx₀`; equals [`discrete_symplectic_plus`] because the two
/// one-forms differ by the exact form `dL_d`.
pub fn discrete_symplectic_minus<L: Lagrangian + ?Sized>(
    l: &L,
    pair: &PhasePoint,
) -> SymplecticMatrix {
    let d = pair.d();
    SymplecticMatrix::new(d_of_one_form(l, pair.coords(), |b| {
        (b < d).then(|| (-1.0, b))
    }))
}

/// The Liouville volume density `det(∂²L/∂ẋ∂ẋ)` of a continuous Lagrangian
/// (sign preserved). Nonlinear in `L`, hence no posterior variance.
pub fn volume_density<L: Lagrangian + ?Sized>(l: &L, point: &PhasePoint) -> f64 {
    let d = point.d();
    let dim = point.dim();
    let z = point.coords();
    DMatrix::from_fn(d, d, |r, s| {
        l.partial(&MultiIndex::second(d + r, d + s, dim), z)
    })
    .determinant()
}

/// The discrete volume density `det(∂²L_d/∂x₁∂x₀)` at a configuration pair.
pub fn discrete_volume_density<L: Lagrangian + ?Sized>(l: &L, pair: &PhasePoint) -> f64 {
    let d = pair.d();
    let dim = pair.dim();
    let z = pair.coords();
    DMatrix::from_fn(d, d, |r, s| l.partial(&MultiIndex::second(d + r, s, dim), z)).determinant()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{coupled_oscillator, gauge_apply, AnalyticLagrangian, GaugeTransform};
    use crate::dynamics::MidpointLagrangian;

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
    fn oscillator_hamiltonian_is_kinetic_plus_potential() {
        let alpha = 0.1;
        let l = coupled_oscillator(alpha);
        let p = PhasePoint::new(vec![0.3, -0.5, 0.2, 0.8]);
        let expected = 0.5 * (0.2f64.powi(2) + 0.8f64.powi(2))
            + 0.5 * (0.3f64.powi(2) + 0.5f64.powi(2))
            - alpha * 0.3 * (-0.5);
        assert!((hamiltonian_value(&l, &p) - expected).abs() < 1e-14);
    }

    #[test]
    fn constant_lagrangian_hamiltonian_is_minus_constant() {
        let l = constant(4, 2.7);
        let p = PhasePoint::new(vec![0.1, 0.2, 0.3, 0.4]);
        assert_eq!(hamiltonian_value(&l, &p), -2.7);
    }

    #[test]
    fn mechanical_symplectic_form_is_canonical() {
        let l = coupled_oscillator(0.1); // Λ = I, A = 0
        let p = PhasePoint::new(vec![0.3, -0.5, 0.2, 0.8]);
        let m = symplectic_form(&l, &p);
        let e = m.entries();
        for r in 0..2 {
            for s in 0..2 {
                assert_eq!(e[(r, s)], 0.0);
                assert_eq!(e[(2 + r, 2 + s)], 0.0);
                let id = if r == s { 1.0 } else { 0.0 };
                assert_eq!(e[(r, 2 + s)], id);
                assert_eq!(e[(2 + r, s)], -id);
            }
        }
        assert_eq!(m.antisymmetry_defect(), 0.0);
    }

    #[test]
    fn constant_lagrangian_symplectic_form_vanishes() {
        let l = constant(4, 3.0);
        let p = PhasePoint::new(vec![0.0, 0.1, 0.2, 0.3]);
        assert_eq!(symplectic_form(&l, &p).entries().amax(), 0.0);
    }

    #[test]
    fn discrete_symplectic_plus_equals_minus_for_midpoint_oscillator() {
        let l = coupled_oscillator(0.1);
        let ld = MidpointLagrangian::new(&l, 0.1);
        let pair = PhasePoint::new(vec![0.3, -0.2, 0.35, -0.15]);
        let plus = discrete_symplectic_plus(&ld, &pair);
        let minus = discrete_symplectic_minus(&ld, &pair);
        let diff = (plus.entries() - minus.entries()).amax();
        assert!(diff < 1e-10, "Sympl+ vs Sympl- differ by {diff}");
        assert!(plus.antisymmetry_defect() < 1e-12);
    }

    #[test]
    fn volume_density_of_mechanical_lagrangian_is_det_mass() {
        let l = coupled_oscillator(0.1);
        let p = PhasePoint::new(vec![0.3, -0.5, 0.2, 0.8]);
        assert_eq!(volume_density(&l, &p), 1.0);
        let l0 = constant(4, 0.0);
        assert_eq!(volume_density(&l0, &p), 0.0);
    }

    #[test]
    fn volume_density_gauge_rule() {
        let l = coupled_oscillator(0.1);
        let g = GaugeTransform {
            rho: -1.3,
            a: vec![0.2, 0.4],
            c: 0.9,
        };
        let lt = gauge_apply(&l, &g);
        let p = PhasePoint::new(vec![0.3, -0.5, 0.2, 0.8]);
        let lhs = volume_density(&lt, &p);
        let rhs = g.rho.powi(2) * volume_density(&l, &p);
        assert!((lhs - rhs).abs() < 1e-12);
    }
}
