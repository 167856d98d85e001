use std::sync::OnceLock;

use higgs_deform::hodge::{HodgeOptions, HodgeSystem};
use higgs_deform::{random, Dealias, Dgla, Error, GradedElement, HiggsPairConfig, MetricSpec, TorusGeometry, C64};
use nalgebra::DVector;
use proptest::prelude::*;

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// Rank 2, nilpotent Higgs field, one-mode log-diagonal metric.
fn curved() -> &'static HodgeSystem {
    static SYS: OnceLock<HodgeSystem> = OnceLock::new();
    SYS.get_or_init(|| {
        let g = TorusGeometry::new(1, 4, Dealias::PlainTruncation).unwrap();
        let metric = MetricSpec::LogDiagonal(vec![vec![(vec![1, 0], c(0.1, 0.05))], vec![]]);
        let z = c(0.0, 0.0);
        let cfg = HiggsPairConfig::new(&g, 2, metric, &[vec![z, c(1.0, 0.0), z, z]]).unwrap();
        HodgeSystem::assemble(Dgla::resolved(cfg).unwrap(), HodgeOptions::default()).unwrap()
    })
}

fn element(sys: &HodgeSystem, degree: usize, seed: u64) -> GradedElement {
    let mut rng = random::rng(seed);
    random::element(sys.dgla.config.geom(), sys.dgla.config.rank(), degree, 2, &mut rng)
}

fn rel(a: &DVector<C64>, b: &DVector<C64>) -> f64 {
    (a - b).norm() / (a.norm() + b.norm()).max(1e-300)
}

#[test]
fn curved_dimensions_match_the_flat_nilpotent_ones() {
    // A log-diagonal metric does not change the cohomology of the flat case.
    assert_eq!(curved().harmonic_dims(), vec![3, 5, 2, 0]);
}

#[test]
fn spectrum_is_sorted_and_nonnegative() {
    let sys = curved();
    for deg in 0..=3 {
        let s = sys.spectrum(deg);
        assert_eq!(s.len(), sys.dim(deg));
        assert!(s.windows(2).all(|w| w[0] <= w[1]));
        let top = s.last().copied().unwrap_or(0.0);
        assert!(s.iter().all(|&l| l >= -1e-10 * top));
    }
}

#[test]
fn harmonic_basis_is_orthonormal() {
    let sys = curved();
    for deg in 0..=2 {
        let basis: Vec<DVector<C64>> = sys.harmonic_basis(deg).iter().map(|h| sys.flatten(h)).collect();
        for (i, a) in basis.iter().enumerate() {
            for (j, b) in basis.iter().enumerate() {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((sys.inner(deg, a, b) - want).norm() < 1e-10, "degree {deg} ({i},{j})");
            }
        }
    }
}

#[test]
fn harmonic_coordinates_round_trip() {
    let sys = curved();
    let x = element(sys, 1, 3);
    let coords = sys.harmonic_coords(&x).unwrap();
    let h = sys.harmonic_element(1, &coords);
    assert!(rel(&sys.flatten(&h), &sys.flatten(&sys.harmonic_project(&x).unwrap())) < 1e-12);
}

#[test]
fn out_of_range_degree_is_rejected() {
    let sys = curved();
    let x = element(sys, 5, 1);
    assert!(matches!(sys.harmonic_project(&x), Err(Error::Precondition(_))));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn projector_and_green_operator(seed in any::<u64>(), deg in 0usize..=2) {
        let sys = curved();
        let v = sys.flatten(&element(sys, deg, seed));
        let h = sys.harmonic_vec(deg, &v);
        prop_assert!(rel(&sys.harmonic_vec(deg, &h), &h) <= 1e-12);
        prop_assert!(sys.laplacian_vec(deg, &h).norm() <= 1e-9 * v.norm());
        prop_assert!(sys.green_vec(deg, &h).norm() <= 1e-9 * v.norm());
        prop_assert!(sys.harmonic_vec(deg, &sys.green_vec(deg, &v)).norm() <= 1e-9 * v.norm());
        let lg = sys.laplacian_vec(deg, &sys.green_vec(deg, &v));
        prop_assert!(rel(&(&h + &lg), &v) <= 1e-10);
    }

    #[test]
    fn laplacian_is_self_adjoint_and_nonnegative(seed in any::<u64>(), deg in 0usize..=2) {
        let sys = curved();
        let (x, y) = (sys.flatten(&element(sys, deg, seed)), sys.flatten(&element(sys, deg, seed ^ 0x5555)));
        let (lx, ly) = (sys.laplacian_vec(deg, &x), sys.laplacian_vec(deg, &y));
        let lhs = sys.inner(deg, &lx, &y);
        let rhs = sys.inner(deg, &x, &ly);
        prop_assert!((lhs - rhs).norm() <= 1e-10 * (sys.norm(deg, &lx) * sys.norm(deg, &y)).max(1e-300));
        let q = sys.inner(deg, &lx, &x);
        prop_assert!(q.re >= -1e-10 * sys.norm(deg, &lx) * sys.norm(deg, &x));
        prop_assert!(q.im.abs() <= 1e-10 * sys.norm(deg, &lx) * sys.norm(deg, &x));
    }

    #[test]
    fn matrix_d_agrees_with_dgla_d(seed in any::<u64>(), deg in 0usize..=2) {
        let sys = curved();
        let x = element(sys, deg, seed);
        let via_matrix = sys.flatten(&sys.d(&x).unwrap());
        let direct = sys.flatten(&sys.dgla.d(&x));
        prop_assert!(rel(&via_matrix, &direct) <= 1e-12);
    }

    #[test]
    fn exact_and_coexact_parts_are_orthogonal_to_harmonics(seed in any::<u64>(), deg in 0usize..=1) {
        let sys = curved();
        let x = sys.flatten(&element(sys, deg, seed));
        let dx = sys.d_vec(deg, &x);
        let y = sys.flatten(&element(sys, deg + 2, seed ^ 1));
        let dsy = sys.adjoint_vec(deg + 2, &y);
        for b in sys.harmonic_basis(deg + 1) {
            let hb = sys.flatten(&b);
            prop_assert!(sys.inner(deg + 1, &hb, &dx).norm() <= 1e-10 * sys.norm(deg + 1, &dx).max(1.0));
            prop_assert!(sys.inner(deg + 1, &hb, &dsy).norm() <= 1e-10 * sys.norm(deg + 1, &dsy).max(1.0));
        }
    }
}
