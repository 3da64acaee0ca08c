//! Randomised property tests of structural invariants: kernel symmetry and
//! bounds, Halton prefix stability and containment, and fill-distance
//! monotonicity.

use proptest::prelude::*;

use lagfield::datagen::{fill_distance, halton, probe_mesh, Region};
use lagfield::kernels::{Kernel, MultiIndex, PhasePoint};

/// All multi-indices on ℝ² with total order at most two.
fn index(choice: usize) -> MultiIndex {
    match choice {
        0 => MultiIndex::zero(2),
        1 => MultiIndex::first(0, 2),
        2 => MultiIndex::first(1, 2),
        3 => MultiIndex::second(0, 0, 2),
        4 => MultiIndex::second(0, 1, 2),
        _ => MultiIndex::second(1, 1, 2),
    }
}

proptest! {
    /// Swapping both the argument pair and the derivative pair leaves the
    /// bilinear kernel derivative unchanged, because K is symmetric.
    #[test]
    fn kernel_partials_swap_symmetrically(
        ai in 0..6usize,
        bi in 0..6usize,
        xs in prop::collection::vec(-2.0f64..2.0, 2),
        ys in prop::collection::vec(-2.0f64..2.0, 2),
    ) {
        let kernel = Kernel::squared_exponential(1.3, 2);
        let (alpha, beta) = (index(ai), index(bi));
        let (x, y) = (PhasePoint::new(xs), PhasePoint::new(ys));
        let lhs = kernel.partial(&alpha, &beta, &x, &y);
        let rhs = kernel.partial(&beta, &alpha, &y, &x);
        prop_assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs().max(1.0));
    }

    /// `0 < K(x, y) ≤ K(x, x) = 1` for the squared exponential.
    #[test]
    fn kernel_values_are_bounded_by_the_diagonal(
        xs in prop::collection::vec(-3.0f64..3.0, 2),
        ys in prop::collection::vec(-3.0f64..3.0, 2),
    ) {
        let kernel = Kernel::squared_exponential(0.8, 2);
        let (x, y) = (PhasePoint::new(xs), PhasePoint::new(ys));
        let v = kernel.eval(&x, &y);
        prop_assert!(v > 0.0 && v <= 1.0);
        prop_assert!((kernel.eval(&x, &x) - 1.0).abs() < 1e-15);
    }

    /// Halton sampling is a prefix-stable sequence: asking for more points
    /// never changes the ones already drawn.
    #[test]
    fn halton_prefixes_are_stable(m in 1..60usize, extra in 0..40usize) {
        let region = Region::symmetric_box(1.0, 2);
        let short = halton(m, 2, &region);
        let long = halton(m + extra, 2, &region);
        prop_assert_eq!(short.points(), &long.points()[..m]);
    }

    /// Every Halton point lies inside the sampling region.
    #[test]
    fn halton_points_stay_inside_the_region(
        m in 1..80usize,
        lo in -2.0f64..0.0,
        width in 0.1f64..2.0,
    ) {
        let region = Region::new(vec![lo; 3], vec![lo + width; 3]);
        for p in halton(m, 3, &region).points() {
            for &c in p {
                prop_assert!(c >= lo && c <= lo + width);
            }
        }
    }

    /// Enlarging a point set can only shrink its fill distance.
    #[test]
    fn fill_distance_never_increases_with_more_points(m in 1..40usize, extra in 1..20usize) {
        let region = Region::symmetric_box(1.0, 2);
        let probe = probe_mesh(&region);
        let h_small = fill_distance(halton(m, 2, &region).points(), &probe).unwrap();
        let h_large = fill_distance(halton(m + extra, 2, &region).points(), &probe).unwrap();
        prop_assert!(h_large <= h_small);
    }
}
