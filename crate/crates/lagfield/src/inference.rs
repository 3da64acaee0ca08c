//! Constraint assembly, the Gram matrix Θ, and the posterior model.
//!
//! Training conditions the canonical Gaussian field on the constraint list
//! `Φ = (EL components at the data, momentum components at x̄_b, evaluation
//! at x̄_b)` with right-hand side `y = (0, …, 0, p_b, c_b)`. With
//! `Θ_{kl} = φ_k¹φ_l²K`, the posterior mean is
//! `L(x̄) = Σ_k z_k φ_k¹K(·, x̄)` for any solution of `Θz = y`, and the
//! posterior covariance of two functionals `ψ, φ` is
//! `ψ¹φ²K − (ψ¹Φ²K)ᵀ Θ† (Φ¹φ²K)`.
//!
//! Θ is positive semi-definite but frequently numerically singular, so the
//! solve uses a symmetric eigendecomposition with a relative spectral cutoff
//! as pseudo-inverse; all solutions of the consistent system give the same
//! posterior, so the cutoff choice only needs to preserve consistency, which
//! is verified after the solve.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::extended;
use crate::functionals::{Functional, JetPoint, Lagrangian, MomentumVariant, SnapshotTriple};
use crate::kernels::{Kernel, MultiIndex, PhasePoint};
use crate::{Error, Result};

/// Relative spectral cutoff of the pseudo-inverse: eigenvalues below
/// `10⁻¹⁵·λ_max` (of the equilibrated matrix) are treated as zero.
const PINV_RELATIVE_CUTOFF: f64 = 1e-15;

/// Relative tolerance for the consistency check `‖Θz − y‖ ≤ tol·max(1,‖y‖)`.
const CONSISTENCY_TOL: f64 = 1e-8;

/// Whether a model learns a continuous Lagrangian `L(x, ẋ)` or a discrete
/// one `L_d(x₀, x₁)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModelKind {
    /// Continuous Lagrangian on `(x, ẋ)`.
    Continuous,
    /// Discrete Lagrangian on `(x₀, x₁)`.
    Discrete,
}

/// The ordered constraint functionals and their right-hand side.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstraintSet {
    functionals: Vec<Functional>,
    rhs: Vec<f64>,
    d: usize,
}

impl ConstraintSet {
    /// The constraint functionals, ordered as built.
    pub fn functionals(&self) -> &[Functional] {
        &self.functionals
    }

    /// The right-hand side `y = (0, …, 0, p_b, c_b)`.
    pub fn rhs(&self) -> &[f64] {
        &self.rhs
    }

    /// Number of constraints `(M+1)d + 1`.
    pub fn len(&self) -> usize {
        self.functionals.len()
    }

    /// Whether the set is empty.
    pub fn is_empty(&self) -> bool {
        self.functionals.is_empty()
    }

    /// Configuration-space dimension `d`.
    pub fn d(&self) -> usize {
        self.d
    }
}

fn warn_on_duplicates(points: &[&PhasePoint]) {
    for (i, a) in points.iter().enumerate() {
        for b in points.iter().skip(i + 1) {
            if a == b {
                eprintln!(
                    "warning: duplicate observation base point {:?}; the Gram matrix will be exactly singular in the constraint block",
                    a.coords()
                );
                return;
            }
        }
    }
}

/// Builds the continuous constraint set: `M·d` Euler–Lagrange components at
/// the observed jets, then `d` momentum components and one evaluation at the
/// normalisation point, with right-hand side `(0, …, 0, p_b, c_b)`.
///
/// Duplicate jet base points are legal but produce an exactly singular Θ
/// block; a warning is emitted.
///
/// # Panics
/// If `p_b` does not have length `d`.
pub fn build_constraints_continuous(
    data: &[JetPoint],
    xbar_b: &PhasePoint,
    p_b: &[f64],
    c_b: f64,
) -> ConstraintSet {
    let d = xbar_b.d();
    assert_eq!(p_b.len(), d, "p_b length must equal d");
    warn_on_duplicates(&data.iter().map(|j| j.base()).collect::<Vec<_>>());
    let mut functionals = Vec::with_capacity(data.len() * d + d + 1);
    let mut rhs = Vec::with_capacity(data.len() * d + d + 1);
    for jet in data {
        assert_eq!(jet.d(), d, "jet dimension mismatch");
        for k in 0..d {
            functionals.push(Functional::el(jet, k));
            rhs.push(0.0);
        }
    }
    for (k, &p) in p_b.iter().enumerate() {
        functionals.push(Functional::momentum(xbar_b, k, MomentumVariant::Continuous));
        rhs.push(p);
    }
    functionals.push(Functional::eval(xbar_b));
    rhs.push(c_b);
    ConstraintSet { functionals, rhs, d }
}

/// Discrete analogue of [`build_constraints_continuous`]: `M·d` discrete
/// Euler–Lagrange components at the snapshot triples, then `d` left discrete
/// momentum (`Mm⁻`) components and one evaluation at the normalisation pair.
///
/// # Panics
/// If `p_b` does not have length `d`.
pub fn build_constraints_discrete(
    data: &[SnapshotTriple],
    xbar_b: &PhasePoint,
    p_b: &[f64],
    c_b: f64,
) -> ConstraintSet {
    let d = xbar_b.d();
    assert_eq!(p_b.len(), d, "p_b length must equal d");
    let mut functionals = Vec::with_capacity(data.len() * d + d + 1);
    let mut rhs = Vec::with_capacity(data.len() * d + d + 1);
    for triple in data {
        assert_eq!(triple.d(), d, "snapshot dimension mismatch");
        for k in 0..d {
            functionals.push(Functional::del(triple, k));
            rhs.push(0.0);
        }
    }
    for (k, &p) in p_b.iter().enumerate() {
        functionals.push(Functional::momentum(
            xbar_b,
            k,
            MomentumVariant::DiscreteMinus,
        ));
        rhs.push(p);
    }
    functionals.push(Functional::eval(xbar_b));
    rhs.push(c_b);
    ConstraintSet { functionals, rhs, d }
}

/// The Gram matrix Θ together with a symmetric eigendecomposition of its
/// diagonally equilibrated form, used as a pseudo-inverse with relative
/// spectral cutoff.
///
/// Constraints of different derivative orders give Θ rows of wildly
/// different magnitude; factorising `S Θ S` with `S = diag(Θ)^{-1/2}`
/// instead of Θ itself keeps the spectral cutoff meaningful and recovers
/// several digits on ill-conditioned collocation systems.
#[derive(Clone, Debug)]
pub struct GramSystem {
    theta: DMatrix<f64>,
    /// Diagonal of the equilibration matrix S.
    scale: DVector<f64>,
    /// Eigendecomposition of `S Θ S`.
    eigenvalues: DVector<f64>,
    eigenvectors: DMatrix<f64>,
    jitter: f64,
}

impl GramSystem {
    /// Assembles `Θ_{kl} = φ_k¹φ_l²K` (upper triangle computed, mirrored),
    /// optionally adds diagonal jitter, equilibrates, and factorises.
    ///
    /// # Errors
    /// [`Error::NonFinite`] if any entry is not finite.
    pub fn assemble(constraints: &ConstraintSet, kernel: &Kernel, jitter: f64) -> Result<Self> {
        let n = constraints.len();
        let phis = constraints.functionals();
        let mut theta = DMatrix::zeros(n, n);
        for k in 0..n {
            for l in k..n {
                let v = phis[k].pair_bilinear(&phis[l], kernel);
                if !v.is_finite() {
                    return Err(Error::NonFinite {
                        context: "Gram matrix assembly",
                    });
                }
                theta[(k, l)] = v;
                theta[(l, k)] = v;
            }
        }
        if jitter > 0.0 {
            for k in 0..n {
                theta[(k, k)] += jitter;
            }
        }
        let scale = DVector::from_fn(n, |k, _| {
            let d: f64 = theta[(k, k)];
            if d > 0.0 {
                1.0 / d.sqrt()
            } else {
                1.0
            }
        });
        // nalgebra's symmetric eigensolver rejects empty matrices; an empty
        // constraint set is legal (pure prior) and factorises trivially.
        let (eigenvalues, eigenvectors) = if n == 0 {
            (DVector::zeros(0), DMatrix::zeros(0, 0))
        } else {
            let scaled =
                DMatrix::from_fn(n, n, |k, l| scale[k] * theta[(k, l)] * scale[l]);
            let eig = nalgebra::SymmetricEigen::new(scaled);
            (eig.eigenvalues, eig.eigenvectors)
        };
        Ok(Self {
            theta,
            scale,
            eigenvalues,
            eigenvectors,
            jitter,
        })
    }

    /// The assembled matrix Θ.
    pub fn theta(&self) -> &DMatrix<f64> {
        &self.theta
    }

    /// Eigenvalues of the equilibrated matrix `S Θ S` (order unspecified).
    pub fn eigenvalues(&self) -> &DVector<f64> {
        &self.eigenvalues
    }

    /// The diagonal jitter that was added before factorisation.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    /// Largest eigenvalue magnitude of the equilibrated matrix.
    pub fn lambda_max(&self) -> f64 {
        self.eigenvalues.iter().fold(0.0f64, |m, &l| m.max(l.abs()))
    }

    fn pinv_apply_once(&self, v: &DVector<f64>) -> DVector<f64> {
        let cutoff = PINV_RELATIVE_CUTOFF * self.lambda_max();
        let scaled = DVector::from_fn(v.len(), |k, _| self.scale[k] * v[k]);
        let mut coeffs = self.eigenvectors.transpose() * scaled;
        for (c, &l) in coeffs.iter_mut().zip(self.eigenvalues.iter()) {
            if l.abs() > cutoff {
                *c /= l;
            } else {
                *c = 0.0;
            }
        }
        let back = &self.eigenvectors * coeffs;
        DVector::from_fn(v.len(), |k, _| self.scale[k] * back[k])
    }

    /// Applies the pseudo-inverse `Θ† ≈ S (S Θ S)† S` with relative spectral
    /// cutoff `10⁻¹²·λ_max` to a vector, followed by iterative refinement.
    ///
    /// Refinement recovers the digits lost to roundoff in the factorisation
    /// on ill-conditioned systems; components in the truncated spectral
    /// directions are left untouched, as the pseudo-inverse prescribes.
    pub fn pinv_apply(&self, v: &DVector<f64>) -> DVector<f64> {
        let mut z = self.pinv_apply_once(v);
        if v.is_empty() {
            return z;
        }
        let mut best = z.clone();
        let mut best_res = (&self.theta * &z - v).norm();
        for _ in 0..3 {
            let r = v - &self.theta * &z;
            z += self.pinv_apply_once(&r);
            let res = (&self.theta * &z - v).norm();
            if res < best_res {
                best_res = res;
                best = z.clone();
            } else {
                break;
            }
        }
        best
    }
}

/// A trained posterior model: the conditional mean of the Gaussian field
/// under the constraints, with access to posterior covariances.
#[derive(Clone, Debug)]
pub struct PosteriorModel {
    kernel: Kernel,
    constraints: ConstraintSet,
    weights: Vec<f64>,
    kind: ModelKind,
    gram: GramSystem,
    /// Mean-evaluation terms flattened to (anchor point, Σ_k z_k·w groups);
    /// consecutive terms of one functional share their anchor, which lets a
    /// single Gaussian evaluation serve several derivative polynomials.
    compiled: Vec<CompiledGroup>,
}

#[derive(Clone, Debug)]
struct CompiledGroup {
    point: PhasePoint,
    terms: Vec<(f64, MultiIndex)>,
}

fn compile_terms(constraints: &ConstraintSet, weights: &[f64]) -> Vec<CompiledGroup> {
    let mut groups: Vec<CompiledGroup> = Vec::new();
    for (phi, &z) in constraints.functionals().iter().zip(weights) {
        if z == 0.0 {
            continue;
        }
        for term in phi.terms() {
            let w = z * term.weight;
            if w == 0.0 {
                continue;
            }
            match groups.last_mut() {
                Some(g) if g.point == term.point => g.terms.push((w, term.index.clone())),
                _ => groups.push(CompiledGroup {
                    point: term.point.clone(),
                    terms: vec![(w, term.index.clone())],
                }),
            }
        }
    }
    groups
}

/// Verifies `‖Θz − y‖ ≤ tol` with the residual accumulated in extended
/// precision, where a plain `f64` evaluation is dominated by rounding noise
/// for large weight vectors.
fn extended_consistency_check(
    kernel: &Kernel,
    constraints: &ConstraintSet,
    weights: &[f64],
    tol: f64,
) -> Result<()> {
    let z: Vec<extended::Dd> = weights.iter().map(|&w| extended::Dd::from(w)).collect();
    let residual = extended::residual_norm(
        kernel.lengthscale(),
        constraints.functionals(),
        constraints.rhs(),
        &z,
    );
    if residual > tol {
        return Err(Error::InconsistentConstraints { residual, tol });
    }
    Ok(())
}

impl PosteriorModel {
    /// Solves `Θz = y` through the pseudo-inverse and wraps the result as
    /// the posterior mean. Consistency (`y` in the numerical range of Θ) is
    /// verified.
    ///
    /// When the spectral solve cannot reach the consistency tolerance —
    /// large dense systems push cond(Θ) beyond what `f64` resolves — the
    /// system is re-solved by the extended-precision factorisation and the
    /// residual re-checked there.
    ///
    /// # Errors
    /// [`Error::InconsistentConstraints`] when the least-squares residual of
    /// the solve exceeds `10⁻⁸·max(1, ‖y‖)` even in extended precision.
    pub fn solve(
        gram: GramSystem,
        constraints: ConstraintSet,
        kernel: Kernel,
        kind: ModelKind,
    ) -> Result<Self> {
        let y = DVector::from_column_slice(constraints.rhs());
        let z = gram.pinv_apply(&y);
        let residual = (&gram.theta * &z - &y).norm();
        let tol = CONSISTENCY_TOL * y.norm().max(1.0);
        let weights: Vec<f64> = if residual <= tol {
            z.iter().cloned().collect()
        } else {
            let zx = extended::solve_constraints(
                kernel.lengthscale(),
                constraints.functionals(),
                constraints.rhs(),
                extended::DROP_TOL,
            );
            let rounded: Vec<f64> = zx.iter().map(|w| w.hi()).collect();
            extended_consistency_check(&kernel, &constraints, &rounded, tol)?;
            rounded
        };
        let compiled = compile_terms(&constraints, &weights);
        Ok(Self {
            kernel,
            constraints,
            weights,
            kind,
            gram,
            compiled,
        })
    }

    /// Rebuilds a model from its serialised parts (weights are trusted but
    /// re-checked for consistency, in extended precision when the `f64`
    /// residual evaluation is above tolerance).
    ///
    /// # Errors
    /// As [`PosteriorModel::solve`], plus assembly errors.
    pub fn from_parts(
        kernel: Kernel,
        constraints: ConstraintSet,
        weights: Vec<f64>,
        kind: ModelKind,
        jitter: f64,
    ) -> Result<Self> {
        let gram = GramSystem::assemble(&constraints, &kernel, jitter)?;
        let y = DVector::from_column_slice(constraints.rhs());
        let z = DVector::from_column_slice(&weights);
        let residual = (&gram.theta * &z - &y).norm();
        let tol = CONSISTENCY_TOL * y.norm().max(1.0);
        if residual > tol {
            extended_consistency_check(&kernel, &constraints, &weights, tol)?;
        }
        let compiled = compile_terms(&constraints, &weights);
        Ok(Self {
            kernel,
            constraints,
            weights,
            kind,
            gram,
            compiled,
        })
    }

    /// The kernel the model was trained with.
    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    /// The training constraints.
    pub fn constraints(&self) -> &ConstraintSet {
        &self.constraints
    }

    /// The solved weight vector `z`.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Continuous or discrete.
    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    /// The factored Gram system.
    pub fn gram(&self) -> &GramSystem {
        &self.gram
    }

    /// Largest residual of the constraints applied to the mean, recomputed
    /// from scratch (each functional applied through the kernel pairings,
    /// not read off `Θz`).
    pub fn max_constraint_residual(&self) -> f64 {
        self.constraints
            .functionals()
            .iter()
            .zip(self.constraints.rhs())
            .map(|(phi, &y)| (phi.apply(self) - y).abs())
            .fold(0.0, f64::max)
    }

    /// The posterior covariance
    /// `cov(ψ, φ) = ψ¹φ²K − (Φ¹ψ²K)ᵀ Θ† (Φ¹φ²K)`.
    pub fn posterior_cov(&self, psi: &Functional, phi: &Functional) -> f64 {
        let prior = psi.pair_bilinear(phi, &self.kernel);
        let v_psi = self.cross_vector(psi);
        let v_phi = if psi == phi {
            v_psi.clone()
        } else {
            self.cross_vector(phi)
        };
        prior - v_psi.dot(&self.gram.pinv_apply(&v_phi))
    }

    /// The posterior variance `cov(ψ, ψ)`, clamped to zero when a tiny
    /// negative value arises from finite arithmetic.
    pub fn posterior_variance(&self, psi: &Functional) -> f64 {
        self.posterior_cov(psi, psi).max(0.0)
    }

    /// The RKHS norm of the mean, `√(zᵀΘz)`.
    pub fn rkhs_norm(&self) -> f64 {
        let z = DVector::from_column_slice(&self.weights);
        (&self.gram.theta * &z).dot(&z).max(0.0).sqrt()
    }

    fn cross_vector(&self, psi: &Functional) -> DVector<f64> {
        DVector::from_iterator(
            self.constraints.len(),
            self.constraints
                .functionals()
                .iter()
                .map(|phi_k| phi_k.pair_bilinear(psi, &self.kernel)),
        )
    }
}

impl Lagrangian for PosteriorModel {
    fn dim(&self) -> usize {
        self.kernel.dim()
    }

    fn partial(&self, index: &MultiIndex, coords: &[f64]) -> f64 {
        self.partials(std::slice::from_ref(index), coords)[0]
    }

    /// Evaluates several partials of the mean in one sweep over the compiled
    /// kernel terms: the Gaussian factor of each anchor point is computed
    /// once and reused for every requested derivative index.
    fn partials(&self, indices: &[MultiIndex], coords: &[f64]) -> Vec<f64> {
        let dim = self.kernel.dim();
        assert_eq!(coords.len(), dim, "coordinate dimension mismatch");
        let query = PhasePoint::new(coords.to_vec());
        let mut out = vec![0.0; indices.len()];
        for group in &self.compiled {
            for (w, alpha) in &group.terms {
                for (o, beta) in out.iter_mut().zip(indices) {
                    *o += w * self.kernel.partial(alpha, beta, &group.point, &query);
                }
            }
        }
        out
    }
}

/// Versioned, self-describing serialisation record of a trained model.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ModelRecord {
    /// Record format version; currently 1.
    pub format_version: u32,
    /// Continuous or discrete.
    pub kind: ModelKind,
    /// Kernel family, lengthscale, and dimension.
    pub kernel: Kernel,
    /// Constraint functionals and right-hand side.
    pub constraints: ConstraintSet,
    /// Diagonal jitter used at training time.
    pub jitter: f64,
    /// Solved weights `z`.
    pub weights: Vec<f64>,
}

impl ModelRecord {
    /// Captures a trained model.
    pub fn from_model(model: &PosteriorModel) -> Self {
        Self {
            format_version: 1,
            kind: model.kind(),
            kernel: model.kernel().clone(),
            constraints: model.constraints().clone(),
            jitter: model.gram().jitter(),
            weights: model.weights().to_vec(),
        }
    }

    /// Reconstructs the model (reassembles and refactorises Θ).
    ///
    /// # Errors
    /// Unsupported format version, assembly failures, or weights that no
    /// longer solve the system.
    pub fn into_model(self) -> Result<PosteriorModel> {
        if self.format_version != 1 {
            return Err(Error::InvalidConfig(format!(
                "unsupported model format version {}",
                self.format_version
            )));
        }
        PosteriorModel::from_parts(
            self.kernel,
            self.constraints,
            self.weights,
            self.kind,
            self.jitter,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{coupled_oscillator, gen_continuous_observations, halton, Region};

    fn oscillator_constraints(m: usize, c_b: f64, p_b: [f64; 2]) -> ConstraintSet {
        let l = coupled_oscillator(0.1);
        let region = Region::symmetric_box(1.0, 4);
        let samples = halton(m, 4, &region).phase_points();
        let jets = gen_continuous_observations(&l, &samples).unwrap();
        let xbar_b = PhasePoint::new(region.centroid());
        build_constraints_continuous(&jets, &xbar_b, &p_b, c_b)
    }

    fn train(constraints: ConstraintSet) -> PosteriorModel {
        let kernel = Kernel::squared_exponential(1.0, 4);
        let gram = GramSystem::assemble(&constraints, &kernel, 0.0).unwrap();
        PosteriorModel::solve(gram, constraints, kernel, ModelKind::Continuous).unwrap()
    }

    #[test]
    fn constraint_counts_match_formula() {
        let c = oscillator_constraints(80, 1.0, [0.0, 0.0]);
        assert_eq!(c.len(), 80 * 2 + 2 + 1);
    }

    #[test]
    fn zero_rhs_gives_zero_model() {
        let c = oscillator_constraints(3, 0.0, [0.0, 0.0]);
        let model = train(c);
        assert!(model.weights().iter().all(|&w| w.abs() < 1e-10));
        let p = [0.3, -0.2, 0.5, 0.1];
        assert!(model.value(&p).abs() < 1e-10);
        assert!(model.rkhs_norm() < 1e-10);
    }

    #[test]
    fn pure_normalisation_model_reproduces_conditions() {
        // M = 0: only the momentum and evaluation constraints; for the
        // squared-exponential kernel the hand solution has z = (0, 0, c_b)
        // and L(x̄) = c_b·K(x̄_b, x̄).
        let xbar_b = PhasePoint::new(vec![0.0; 4]);
        let c = build_constraints_continuous(&[], &xbar_b, &[0.0, 0.0], 1.0);
        let model = train(c);
        assert!((model.value(xbar_b.coords()) - 1.0).abs() < 1e-12);
        for k in 0..2 {
            let dv = model.partial(&MultiIndex::first(2 + k, 4), xbar_b.coords());
            assert!(dv.abs() < 1e-12);
        }
        // Mean is the kernel section scaled by c_b.
        let q = PhasePoint::new(vec![0.3, -0.2, 0.4, 0.6]);
        let expected = model.kernel().eval(&xbar_b, &q);
        assert!((model.value(q.coords()) - expected).abs() < 1e-12);
    }

    #[test]
    fn single_eval_constraint_theta_is_one() {
        let xbar_b = PhasePoint::new(vec![0.0; 4]);
        let c = ConstraintSet {
            functionals: vec![Functional::eval(&xbar_b)],
            rhs: vec![1.0],
            d: 2,
        };
        let kernel = Kernel::squared_exponential(1.0, 4);
        let gram = GramSystem::assemble(&c, &kernel, 0.0).unwrap();
        assert_eq!(gram.theta()[(0, 0)], 1.0);
    }

    #[test]
    fn trained_model_reproduces_constraints() {
        let c = oscillator_constraints(10, 1.0, [0.0, 0.0]);
        let model = train(c);
        assert!(model.max_constraint_residual() < 1e-8);
    }

    #[test]
    fn constrained_directions_have_zero_posterior_variance() {
        let c = oscillator_constraints(5, 1.0, [0.0, 0.0]);
        let model = train(c);
        for phi in model.constraints().functionals().iter().step_by(3) {
            let v = model.posterior_variance(phi);
            assert!(v.abs() < 1e-8, "variance {v} along a constraint");
        }
    }

    #[test]
    fn prior_variance_of_evaluation_is_one_without_constraints() {
        // Empty constraint set: posterior equals prior.
        let c = ConstraintSet {
            functionals: vec![],
            rhs: vec![],
            d: 2,
        };
        let kernel = Kernel::squared_exponential(1.0, 4);
        let gram = GramSystem::assemble(&c, &kernel, 0.0).unwrap();
        let model = PosteriorModel::solve(gram, c, kernel, ModelKind::Continuous).unwrap();
        let x = PhasePoint::new(vec![0.2, 0.1, -0.3, 0.4]);
        let ev = Functional::eval(&x);
        assert!((model.posterior_variance(&ev) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn posterior_variance_never_exceeds_prior() {
        let c = oscillator_constraints(8, 1.0, [0.0, 0.0]);
        let model = train(c);
        let kernel = model.kernel().clone();
        for coords in [
            [0.3, -0.2, 0.5, 0.1],
            [-0.7, 0.6, 0.2, -0.4],
            [0.0, 0.0, 0.0, 0.0],
        ] {
            let x = PhasePoint::new(coords.to_vec());
            let ev = Functional::eval(&x);
            let post = model.posterior_variance(&ev);
            let prior = ev.pair_bilinear(&ev, &kernel);
            assert!(post <= prior + 1e-8);
        }
    }

    #[test]
    fn rhs_scaling_scales_mean_and_weights() {
        let c1 = oscillator_constraints(6, 1.0, [0.2, -0.1]);
        let c2 = oscillator_constraints(6, 3.0, [0.6, -0.3]);
        let m1 = train(c1);
        let m2 = train(c2);
        let q = [0.4, -0.3, 0.2, 0.5];
        assert!((3.0 * m1.value(&q) - m2.value(&q)).abs() < 1e-9);
        for (a, b) in m1.weights().iter().zip(m2.weights()) {
            assert!((3.0 * a - b).abs() < 1e-7);
        }
    }

    #[test]
    fn nullspace_perturbation_leaves_mean_unchanged() {
        let c = oscillator_constraints(12, 1.0, [0.0, 0.0]);
        let kernel = Kernel::squared_exponential(1.0, 4);
        let gram = GramSystem::assemble(&c, &kernel, 0.0).unwrap();
        let cutoff = 1e-12 * gram.lambda_max();
        // Find a numerical-nullspace eigenvector, if the spectrum has one.
        let null_col = gram
            .eigenvalues()
            .iter()
            .position(|&l| l.abs() < cutoff);
        let model =
            PosteriorModel::solve(gram.clone(), c.clone(), kernel.clone(), ModelKind::Continuous)
                .unwrap();
        let Some(col) = null_col else {
            return; // full-rank system; nothing to perturb with
        };
        let mut weights = model.weights().to_vec();
        for (w, v) in weights.iter_mut().zip(gram.eigenvectors.column(col).iter()) {
            *w += v;
        }
        let perturbed =
            PosteriorModel::from_parts(kernel, c, weights, ModelKind::Continuous, 0.0).unwrap();
        for coords in [[0.3, -0.2, 0.5, 0.1], [-0.6, 0.4, 0.0, 0.8]] {
            let a = model.value(&coords);
            let b = perturbed.value(&coords);
            assert!(
                (a - b).abs() <= 1e-6 * a.abs().max(1.0),
                "nullspace perturbation changed the mean: {a} vs {b}"
            );
        }
    }

    #[test]
    fn mean_partial_matches_finite_differences() {
        let c = oscillator_constraints(6, 1.0, [0.0, 0.0]);
        let model = train(c);
        let z = [0.25, -0.15, 0.35, 0.45];
        let h = 1e-5;
        for i in 0..4 {
            let mut zp = z;
            let mut zm = z;
            zp[i] += h;
            zm[i] -= h;
            let fd = (model.value(&zp) - model.value(&zm)) / (2.0 * h);
            let an = model.partial(&MultiIndex::first(i, 4), &z);
            assert!((fd - an).abs() < 1e-8, "partial {i}: {fd} vs {an}");
        }
    }

    #[test]
    fn model_record_round_trips() {
        let c = oscillator_constraints(4, 1.0, [0.1, 0.0]);
        let model = train(c);
        let json = serde_json::to_string(&ModelRecord::from_model(&model)).unwrap();
        let record: ModelRecord = serde_json::from_str(&json).unwrap();
        let restored = record.into_model().unwrap();
        for coords in [[0.3, -0.2, 0.5, 0.1], [-0.6, 0.4, 0.0, 0.8]] {
            let a = model.value(&coords);
            let b = restored.value(&coords);
            assert!((a - b).abs() <= 1e-15 * a.abs().max(1.0));
        }
    }
}
