use fracpoisson::grid::GridSpec;
use fracpoisson::mollifier::MollifierTable;
use fracpoisson::spectral::{apply_laplacian, LatticeField, SpectralPlan};
use proptest::prelude::*;
use std::f64::consts::PI;

fn field(grid: GridSpec, values: Vec<f64>) -> LatticeField {
    LatticeField::from_values(grid, values).unwrap()
}

fn max_diff(a: &LatticeField, b: &LatticeField) -> f64 {
    a.values.iter().zip(&b.values).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[test]
fn eigenvectors_satisfy_the_stencil() {
    let plan = SpectralPlan::new(GridSpec::new(2, 7).unwrap());
    for beta in [[1, 1], [2, 5], [6, 6], [3, 1]] {
        let u = plan.eigenvector(&beta);
        let au = apply_laplacian(&u);
        let lam = -4.0 * 49.0 * beta.iter().map(|&b| (PI * b as f64 / 14.0).sin().powi(2)).sum::<f64>();
        assert!((plan.eigenvalue(&beta) - lam).abs() < 1e-10 * lam.abs());
        let scaled = LatticeField { grid: u.grid, values: u.values.iter().map(|v| lam * v).collect() };
        assert!(max_diff(&au, &scaled) < 1e-9 * lam.abs());
    }
}

#[test]
fn eigenvectors_are_orthogonal_with_known_norm() {
    // sum_i v_beta(i/n) v_gamma(i/n) = (n/2)^k delta
    let grid = GridSpec::new(2, 6).unwrap();
    let plan = SpectralPlan::new(grid);
    let modes: Vec<Vec<usize>> = (0..grid.num_interior()).map(|f| grid.interior_multi(f)).collect();
    for a in &modes {
        for b in &modes {
            let d = plan.eigenvector(a).dot(&plan.eigenvector(b));
            let want = if a == b { 9.0 } else { 0.0 };
            assert!((d - want).abs() < 1e-12, "{a:?} {b:?}: {d}");
        }
    }
}

#[test]
fn smoothed_inverse_with_unit_table_is_plain_inverse() {
    let grid = GridSpec::new(3, 5).unwrap();
    let plan = SpectralPlan::new(grid);
    let rhs = LatticeField::from_fn(grid, |x| x[0] - x[1] * x[2]);
    let plain = plan.solve_linear(&rhs, None).unwrap();
    let unit = plan.solve_linear(&rhs, Some(&MollifierTable::identity(5))).unwrap();
    assert!(max_diff(&plain, &unit) < 1e-15);
}

#[test]
fn smoothed_solve_damps_high_modes() {
    let grid = GridSpec::new(1, 16).unwrap();
    let plan = SpectralPlan::new(grid);
    let tab = MollifierTable::new(0.3, &grid).unwrap();
    for b in [1usize, 4, 15] {
        let u = plan.eigenvector(&[b]);
        let smoothed = plan.solve_linear(&u, Some(&tab)).unwrap();
        let factor = tab.value_1d(b) / plan.eigenvalue(&[b]);
        let want = LatticeField { grid, values: u.values.iter().map(|v| factor * v).collect() };
        assert!(max_diff(&smoothed, &want) < 1e-14);
    }
}

#[test]
fn plan_rejects_foreign_fields() {
    let plan = SpectralPlan::new(GridSpec::new(2, 4).unwrap());
    let other = LatticeField::zeros(GridSpec::new(2, 8).unwrap());
    assert!(plan.solve_linear(&other, None).is_err());
}

fn lattice(k: usize) -> impl Strategy<Value = (GridSpec, Vec<f64>)> {
    (2usize..9).prop_flat_map(move |n| {
        let grid = GridSpec::new(k, n).unwrap();
        (Just(grid), proptest::collection::vec(-10.0f64..10.0, grid.num_interior()))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn dst_round_trip(k in 1usize..4, seed in any::<u64>()) {
        let n = 2 + (seed % 7) as usize;
        let grid = GridSpec::new(k, n).unwrap();
        let plan = SpectralPlan::new(grid);
        let u = LatticeField::from_fn(grid, |x| x.iter().enumerate().map(|(d, v)| ((d as u64 + seed % 13) as f64 * v).cos()).sum());
        let back = plan.dst_inverse(&plan.dst_forward(&u));
        prop_assert!(max_diff(&u, &back) < 1e-12);
        // orthonormal: Parseval holds
        let c = plan.dst_forward(&u);
        let e1: f64 = c.iter().map(|v| v * v).sum();
        prop_assert!((e1 - u.dot(&u)).abs() < 1e-10 * (1.0 + e1));
    }

    #[test]
    fn solve_inverts_the_stencil_2d((grid, values) in lattice(2)) {
        let plan = SpectralPlan::new(grid);
        let f = field(grid, values);
        let u = plan.solve_linear(&f, None).unwrap();
        prop_assert!(max_diff(&apply_laplacian(&u), &f) < 1e-9);
    }

    #[test]
    fn solve_inverts_the_stencil_3d((grid, values) in lattice(3)) {
        let plan = SpectralPlan::new(grid);
        let f = field(grid, values);
        let u = plan.solve_linear(&f, None).unwrap();
        prop_assert!(max_diff(&plan.apply_laplacian(&u), &f) < 1e-9);
    }

    #[test]
    fn smoothed_operator_round_trip((grid, values) in lattice(2), eps in 0.05f64..0.3) {
        let plan = SpectralPlan::new(grid);
        let tab = MollifierTable::new(eps, &grid).unwrap();
        let f = field(grid, values);
        let u = plan.solve_linear(&f, Some(&tab)).unwrap();
        let back = plan.apply_smoothed_operator(&u, &tab).unwrap();
        prop_assert!(max_diff(&back, &f) < 1e-8);
    }

    #[test]
    fn spectrum_is_negative_and_bounded(k in 1usize..4, n in 2usize..12) {
        let plan = SpectralPlan::new(GridSpec::new(k, n).unwrap());
        let bound = 4.0 * (k * n * n) as f64;
        for &lam in plan.eigenvalues() {
            prop_assert!(lam < 0.0 && lam > -bound);
        }
        let smallest = plan.eigenvalues().iter().map(|l| l.abs()).fold(f64::INFINITY, f64::min);
        prop_assert!((smallest - plan.min_abs_eigenvalue()).abs() < 1e-9 * smallest);
    }
}
