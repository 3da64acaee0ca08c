//! Double-double arithmetic and an extended-precision collocation solve.
//!
//! Gram matrices built from fourth-order derivatives of the squared
//! exponential kernel become ill-conditioned far beyond what `f64` can
//! resolve: on dense one-dimensional meshes the spectrum spans more than
//! thirty orders of magnitude, so a double-precision factorisation bottoms
//! out around a relative error of 10⁻⁵–10⁻⁶. The convergence study needs to
//! push below that floor, and does so by assembling, factorising, and
//! evaluating in double-double arithmetic (two `f64` words, ≈31 significant
//! digits).
//!
//! Everything here is crate-internal support for
//! [`crate::cli::convergence_rows`]; the ordinary training path stays in
//! `f64` via [`crate::inference`].

use crate::functionals::Functional;

/// Pivot threshold of [`solve_constraints`] used by the inference
/// fallback, relative to the unit equilibrated diagonal.
pub(crate) const DROP_TOL: f64 = 1e-28;

/// A double-double number `hi + lo` with `|lo| ≤ ulp(hi)/2`.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Dd {
    hi: f64,
    lo: f64,
}

impl Dd {
    pub(crate) const ZERO: Dd = Dd { hi: 0.0, lo: 0.0 };
    pub(crate) const ONE: Dd = Dd { hi: 1.0, lo: 0.0 };
    /// ln 2 to double-double accuracy.
    const LN2: Dd = Dd {
        hi: std::f64::consts::LN_2,
        lo: 2.3190468138462996e-17,
    };

    pub(crate) fn from(x: f64) -> Dd {
        Dd { hi: x, lo: 0.0 }
    }

    /// Leading word (the value rounded to nearest `f64`).
    pub(crate) fn hi(self) -> f64 {
        self.hi
    }

    /// Error-free sum of two `f64` (Knuth two-sum).
    fn two_sum(a: f64, b: f64) -> Dd {
        let s = a + b;
        let bb = s - a;
        Dd {
            hi: s,
            lo: (a - (s - bb)) + (b - bb),
        }
    }

    /// Two-sum under the precondition `|a| ≥ |b|` (or either is zero).
    fn quick_two_sum(a: f64, b: f64) -> Dd {
        let s = a + b;
        Dd { hi: s, lo: b - (s - a) }
    }

    /// Error-free product of two `f64` via fused multiply-add.
    fn two_prod(a: f64, b: f64) -> Dd {
        let p = a * b;
        Dd {
            hi: p,
            lo: a.mul_add(b, -p),
        }
    }

    pub(crate) fn add(self, o: Dd) -> Dd {
        let s = Dd::two_sum(self.hi, o.hi);
        Dd::quick_two_sum(s.hi, s.lo + self.lo + o.lo)
    }

    pub(crate) fn neg(self) -> Dd {
        Dd {
            hi: -self.hi,
            lo: -self.lo,
        }
    }

    pub(crate) fn sub(self, o: Dd) -> Dd {
        self.add(o.neg())
    }

    pub(crate) fn mul(self, o: Dd) -> Dd {
        let p = Dd::two_prod(self.hi, o.hi);
        Dd::quick_two_sum(p.hi, p.lo + self.hi * o.lo + self.lo * o.hi)
    }

    pub(crate) fn div(self, o: Dd) -> Dd {
        let q1 = self.hi / o.hi;
        let r1 = self.sub(o.mul(Dd::from(q1)));
        let q2 = r1.hi / o.hi;
        let r2 = r1.sub(o.mul(Dd::from(q2)));
        let q3 = r2.hi / o.hi;
        Dd::quick_two_sum(q1, q2).add(Dd::from(q3))
    }

    /// Square root by one Newton step on the `f64` seed.
    ///
    /// # Panics
    /// Panics when `self` is negative.
    pub(crate) fn sqrt(self) -> Dd {
        assert!(self.hi >= 0.0, "sqrt of a negative double-double");
        if self.hi == 0.0 {
            return Dd::ZERO;
        }
        let seed = Dd::from(self.hi.sqrt());
        let t = self.div(seed).add(seed);
        Dd {
            hi: 0.5 * t.hi,
            lo: 0.5 * t.lo,
        }
    }

    /// Exact scaling by 2^k.
    fn scale2(self, k: i32) -> Dd {
        let f = f64::from(k).exp2();
        Dd {
            hi: self.hi * f,
            lo: self.lo * f,
        }
    }

    /// Exponential via argument reduction `x = k·ln2 + r` and a Taylor
    /// series for `exp(r)`.
    pub(crate) fn exp(self) -> Dd {
        if self.hi < -700.0 {
            return Dd::ZERO;
        }
        let k = (self.hi / std::f64::consts::LN_2).round();
        let r = self.sub(Dd::LN2.mul(Dd::from(k)));
        let mut term = Dd::ONE;
        let mut sum = Dd::ONE;
        for n in 1..40 {
            term = term.mul(r).div(Dd::from(f64::from(n)));
            sum = sum.add(term);
            if term.hi.abs() < 1e-35 {
                break;
            }
        }
        sum.scale2(k as i32)
    }
}

/// Univariate Gaussian derivative factor of order `n` at offset `t` with
/// inverse squared lengthscale `s`, matching the `f64` kernel closed forms.
fn gaussian_factor(n: u8, t: Dd, s: Dd) -> Dd {
    let st = s.mul(t);
    match n {
        0 => Dd::ONE,
        1 => st.neg(),
        2 => st.mul(st).sub(s),
        3 => s.mul(st).mul(Dd::from(3.0)).sub(st.mul(st).mul(st)),
        4 => st
            .mul(st)
            .mul(st)
            .mul(st)
            .sub(s.mul(st).mul(st).mul(Dd::from(6.0)))
            .add(s.mul(s).mul(Dd::from(3.0))),
        _ => unreachable!("derivative order above four"),
    }
}

/// Mixed partial `∂^α_x ∂^β_y K(x, y)` of the squared exponential kernel.
///
/// # Panics
/// Panics when the slice lengths disagree.
fn se_partial(ell: f64, alpha: &[u8], beta: &[u8], x: &[f64], y: &[f64]) -> Dd {
    assert!(alpha.len() == x.len() && beta.len() == x.len() && y.len() == x.len());
    let s = Dd::ONE.div(Dd::from(ell).mul(Dd::from(ell)));
    let mut sq = Dd::ZERO;
    let mut prod = Dd::ONE;
    let mut sign = 1.0f64;
    for b in beta {
        if *b % 2 == 1 {
            sign = -sign;
        }
    }
    for i in 0..x.len() {
        let u = Dd::two_sum(x[i], -y[i]);
        sq = sq.add(u.mul(u));
        prod = prod.mul(gaussian_factor(alpha[i] + beta[i], u, s));
    }
    let value = s.mul(sq).mul(Dd::from(-0.5)).exp().mul(prod);
    if sign < 0.0 {
        value.neg()
    } else {
        value
    }
}

/// Gram entry `[φ ⊗ ψ] K` between two compiled functionals.
fn pair_bilinear(ell: f64, phi: &Functional, psi: &Functional) -> Dd {
    let mut acc = Dd::ZERO;
    for s in phi.terms() {
        for t in psi.terms() {
            let v = se_partial(
                ell,
                s.index.orders(),
                t.index.orders(),
                s.point.coords(),
                t.point.coords(),
            );
            acc = acc.add(v.mul(Dd::two_prod(s.weight, t.weight)));
        }
    }
    acc
}

/// Minimal-norm collocation weights for `Θz = y` in double-double
/// arithmetic.
///
/// The symmetrically equilibrated Gram matrix is factorised by a
/// diagonally pivoted Cholesky decomposition; pivots below `drop_tol`
/// (relative to the unit equilibrated diagonal) terminate the
/// factorisation, and the corresponding directions are dropped from the
/// solution — the double-double analogue of the spectral truncation used
/// by the `f64` path.
///
/// # Panics
/// Panics when the functional list is empty.
#[allow(clippy::needless_range_loop)] // pivoting needs explicit index arithmetic
pub(crate) fn solve_constraints(
    ell: f64,
    functionals: &[Functional],
    rhs: &[f64],
    drop_tol: f64,
) -> Vec<Dd> {
    let n = functionals.len();
    assert!(n > 0, "empty constraint system");
    assert!(rhs.len() == n, "right-hand side length mismatch");
    let mut a = vec![vec![Dd::ZERO; n]; n];
    for i in 0..n {
        for j in i..n {
            let v = pair_bilinear(ell, &functionals[i], &functionals[j]);
            a[i][j] = v;
            a[j][i] = v;
        }
    }
    let scale: Vec<Dd> = (0..n).map(|k| Dd::ONE.div(a[k][k].sqrt())).collect();
    for i in 0..n {
        for j in 0..n {
            a[i][j] = a[i][j].mul(scale[i]).mul(scale[j]);
        }
    }
    let mut perm: Vec<usize> = (0..n).collect();
    let mut rank = n;
    for j in 0..n {
        let (mut pj, mut pv) = (j, a[j][j].hi);
        for k in (j + 1)..n {
            if a[k][k].hi > pv {
                pj = k;
                pv = a[k][k].hi;
            }
        }
        if pv < drop_tol {
            rank = j;
            break;
        }
        if pj != j {
            a.swap(j, pj);
            for row in a.iter_mut() {
                row.swap(j, pj);
            }
            perm.swap(j, pj);
        }
        a[j][j] = a[j][j].sqrt();
        let d = a[j][j];
        for row in a.iter_mut().skip(j + 1) {
            row[j] = row[j].div(d);
        }
        for k in (j + 1)..n {
            let ljk = a[k][j];
            for i in k..n {
                let lij = a[i][j];
                a[i][k] = a[i][k].sub(lij.mul(ljk));
                if i != k {
                    a[k][i] = a[i][k];
                }
            }
        }
    }
    let mut w: Vec<Dd> = (0..rank)
        .map(|i| Dd::from(rhs[perm[i]]).mul(scale[perm[i]]))
        .collect();
    for i in 0..rank {
        for k in 0..i {
            let t = a[i][k].mul(w[k]);
            w[i] = w[i].sub(t);
        }
        w[i] = w[i].div(a[i][i]);
    }
    for i in (0..rank).rev() {
        for k in (i + 1)..rank {
            let t = a[k][i].mul(w[k]);
            w[i] = w[i].sub(t);
        }
        w[i] = w[i].div(a[i][i]);
    }
    let mut z = vec![Dd::ZERO; n];
    for i in 0..rank {
        z[perm[i]] = scale[perm[i]].mul(w[i]);
    }
    z
}

/// Euclidean norm of the constraint residual `Θz − y`, accumulated in
/// double-double arithmetic.
///
/// # Panics
/// Panics when the lengths disagree.
pub(crate) fn residual_norm(
    ell: f64,
    functionals: &[Functional],
    rhs: &[f64],
    weights: &[Dd],
) -> f64 {
    let n = functionals.len();
    assert!(rhs.len() == n && weights.len() == n, "length mismatch");
    let mut sum = Dd::ZERO;
    for i in 0..n {
        let mut r = Dd::from(-rhs[i]);
        for j in 0..n {
            let v = pair_bilinear(ell, &functionals[i], &functionals[j]);
            r = r.add(v.mul(weights[j]));
        }
        sum = sum.add(r.mul(r));
    }
    sum.sqrt().hi()
}

/// Partial derivative `∂^γ` of the posterior mean `Σ_k z_k [φ_k ⊗ ·] K`
/// at `point`, in double-double arithmetic.
pub(crate) fn mean_partial(
    ell: f64,
    functionals: &[Functional],
    weights: &[Dd],
    gamma: &[u8],
    point: &[f64],
) -> Dd {
    assert!(weights.len() == functionals.len());
    let mut acc = Dd::ZERO;
    for (phi, z) in functionals.iter().zip(weights) {
        let mut inner = Dd::ZERO;
        for s in phi.terms() {
            let v = se_partial(ell, s.index.orders(), gamma, s.point.coords(), point);
            inner = inner.add(v.mul(Dd::from(s.weight)));
        }
        acc = acc.add(inner.mul(*z));
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn arithmetic_keeps_low_order_words() {
        let a = Dd::from(1.0).add(Dd::from(1e-20));
        let b = a.sub(Dd::from(1.0));
        assert!((b.hi() - 1e-20).abs() < 1e-33);
    }

    #[test]
    fn exp_matches_f64_at_moderate_arguments() {
        for x in [-30.0f64, -3.5, -0.7, 0.0, 0.3] {
            let e = Dd::from(x).exp();
            assert!((e.hi() - x.exp()).abs() <= 2.0 * f64::EPSILON * x.exp());
        }
    }

    #[test]
    fn sqrt_squares_back() {
        let r = Dd::from(2.0).sqrt();
        let back = r.mul(r).sub(Dd::from(2.0));
        assert!(back.hi().abs() < 1e-30);
    }

    #[test]
    fn se_partial_matches_f64_kernel() {
        use crate::kernels::{Kernel, MultiIndex, PhasePoint};
        let kernel = Kernel::squared_exponential(1.3, 2);
        let x = PhasePoint::new(vec![0.4, -0.2]);
        let y = PhasePoint::new(vec![-0.1, 0.7]);
        let alpha = MultiIndex::from_orders(vec![1, 1]);
        let beta = MultiIndex::from_orders(vec![0, 2]);
        let f64_value = kernel.partial(&alpha, &beta, &x, &y);
        let dd_value = se_partial(1.3, alpha.orders(), beta.orders(), x.coords(), y.coords());
        assert!((dd_value.hi() - f64_value).abs() <= 1e-14 * f64_value.abs().max(1.0));
    }
}
