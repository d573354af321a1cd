use fracpoisson::grid::GridSpec;
use fracpoisson::noise::{
    aggregate, aggregation_matrix, axis_covariance, build_axis_cholesky, covariance_form, covariance_r,
    increment_covariance_1d, NoiseSampler,
};
use fracpoisson::rates::HurstVector;
use nalgebra::DMatrix;
use proptest::prelude::*;

fn field_at_node(incr: &[f64], upto: usize) -> f64 {
    incr[..upto].iter().sum()
}

#[test]
fn monte_carlo_matches_field_covariance() {
    // B(1/4) and B(3/4) built from cell increments on the n = 4 grid
    let h = HurstVector::uniform(1, 0.75).unwrap();
    let grid = GridSpec::new(1, 4).unwrap();
    let sampler = NoiseSampler::new(&h, grid).unwrap();
    let reps = 20_000;
    let mut prods = Vec::with_capacity(reps);
    for r in 0..reps as u64 {
        let s = sampler.sample(7, 0, r);
        prods.push(field_at_node(&s.increments, 1) * field_at_node(&s.increments, 3));
    }
    let mean = prods.iter().sum::<f64>() / reps as f64;
    let var = prods.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / (reps - 1) as f64;
    let se = (var / reps as f64).sqrt();
    let exact = covariance_r(&h, &[0.25], &[0.75]);
    assert!((mean - exact).abs() < 4.0 * se, "mc {mean} exact {exact} se {se}");
}

#[test]
fn separated_cells_match_double_integral() {
    // for h > 1/2, E[B(I)B(J)] = h(2h-1) int_I int_J |u-v|^{2h-2} when I, J are apart
    for &h in &[0.6, 0.75, 0.9] {
        let (a, b, c, d) = (0.0, 0.25, 0.5, 0.75);
        let m = 400;
        let du = (b - a) / m as f64;
        let dv = (d - c) / m as f64;
        let mut s = 0.0;
        for i in 0..m {
            let u = a + (i as f64 + 0.5) * du;
            for j in 0..m {
                let v = c + (j as f64 + 0.5) * dv;
                s += (v - u).powf(2.0 * h - 2.0);
            }
        }
        let oracle = h * (2.0 * h - 1.0) * s * du * dv;
        let got = increment_covariance_1d(h, (a, b), (c, d));
        assert!((got - oracle).abs() < 1e-6 * oracle.abs().max(1e-3), "h {h}: {got} vs {oracle}");
    }
}

#[test]
fn standard_brownian_cells_are_independent() {
    let grid = GridSpec::new(1, 8).unwrap();
    let c = axis_covariance(0.5, &grid);
    for i in 0..8 {
        for j in 0..8 {
            let want = if i == j { 1.0 / 8.0 } else { 0.0 };
            assert!((c[i * 8 + j] - want).abs() < 1e-15);
        }
    }
}

#[test]
fn aggregation_preserves_the_law() {
    // M C_fine M^T equals the coarse covariance along every axis
    for &h in &[0.3, 0.5, 0.8] {
        let fine = GridSpec::new(1, 16).unwrap();
        let coarse = GridSpec::new(1, 4).unwrap();
        let cf = DMatrix::from_row_slice(16, 16, &axis_covariance(h, &fine));
        let cc = DMatrix::from_row_slice(4, 4, &axis_covariance(h, &coarse));
        let m = DMatrix::from_row_slice(4, 16, &aggregation_matrix(16, 4));
        let pushed = &m * cf * m.transpose();
        assert!((pushed - cc).amax() < 1e-14, "h {h}");
    }
}

#[test]
fn aggregated_sample_equals_sum_of_fine_cells() {
    let h = HurstVector::new(vec![0.6, 0.5]).unwrap();
    let fine = NoiseSampler::new(&h, GridSpec::new(2, 8).unwrap()).unwrap().sample(3, 0, 0);
    let coarse_grid = GridSpec::new(2, 2).unwrap();
    let coarse = aggregate(&fine, coarse_grid).unwrap();
    let mut want = 0.0;
    for i in 0..4 {
        for j in 4..8 {
            want += fine.get(&[i, j]);
        }
    }
    assert!((coarse.get(&[0, 1]) - want).abs() < 1e-14);
    assert!((coarse.increments.iter().sum::<f64>() - fine.increments.iter().sum::<f64>()).abs() < 1e-12);
}

#[test]
fn sampling_is_deterministic_per_replicate() {
    let h = HurstVector::new(vec![0.7, 0.55]).unwrap();
    let sampler = NoiseSampler::new(&h, GridSpec::new(2, 16).unwrap()).unwrap();
    let a = sampler.sample(11, 0, 5);
    let b = sampler.sample(11, 0, 5);
    assert_eq!(a.increments, b.increments);
    assert_ne!(a.increments, sampler.sample(11, 0, 6).increments);
    assert_ne!(a.increments, sampler.sample(11, 1, 5).increments);
    assert_ne!(a.increments, sampler.sample(12, 0, 5).increments);
}

#[test]
fn csv_round_trip_keeps_every_bit() {
    let h = HurstVector::uniform(2, 0.65).unwrap();
    let s = NoiseSampler::new(&h, GridSpec::new(2, 4).unwrap()).unwrap().sample(1, 2, 3);
    let mut buf = Vec::new();
    s.write_csv(&mut buf).unwrap();
    let back = fracpoisson::noise::NoiseSample::read_csv(buf.as_slice()).unwrap();
    assert_eq!(back, s);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn axis_covariance_is_positive_definite(h in 0.05f64..0.95, n in 2usize..24) {
        let grid = GridSpec::new(1, n).unwrap();
        let c = DMatrix::from_row_slice(n, n, &axis_covariance(h, &grid));
        prop_assert!((&c - c.transpose()).amax() < 1e-15);
        let min = c.symmetric_eigenvalues().min();
        prop_assert!(min > -1e-12, "min eigenvalue {}", min);
    }

    #[test]
    fn cholesky_reproduces_covariance(h1 in 0.5f64..0.95, h2 in 0.5f64..0.95, n in 2usize..16) {
        let h = HurstVector::new(vec![h1, h2]).unwrap();
        let grid = GridSpec::new(2, n).unwrap();
        let factors = build_axis_cholesky(&h, &grid).unwrap();
        for (d, f) in factors.iter().enumerate() {
            let c = axis_covariance(h.as_slice()[d], &grid);
            let err = f.reconstruct().iter().zip(&c).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            prop_assert!(err < 1e-13, "axis {} err {}", d, err);
        }
    }

    #[test]
    fn covariance_form_is_symmetric_and_nonnegative(
        h1 in 0.5f64..0.95,
        h2 in 0.5f64..0.95,
        a in proptest::collection::vec(-1.0f64..1.0, 16),
        b in proptest::collection::vec(-1.0f64..1.0, 16),
    ) {
        let h = HurstVector::new(vec![h1, h2]).unwrap();
        let grid = GridSpec::new(2, 4).unwrap();
        let ab = covariance_form(&h, &grid, &a, &b);
        let ba = covariance_form(&h, &grid, &b, &a);
        prop_assert!((ab - ba).abs() < 1e-13);
        prop_assert!(covariance_form(&h, &grid, &a, &a) >= -1e-14);
        let neg: Vec<f64> = a.iter().map(|v| -v).collect();
        let aa = covariance_form(&h, &grid, &a, &a);
        prop_assert!((covariance_form(&h, &grid, &a, &neg) + aa).abs() < 1e-13);
    }

    #[test]
    fn increment_covariance_is_translation_invariant(
        h in 0.5f64..0.95,
        a in 0.0f64..1.0,
        la in 0.01f64..1.0,
        gap in -1.0f64..1.0,
        lb in 0.01f64..1.0,
        shift in -2.0f64..2.0,
    ) {
        let i = (a, a + la);
        let j = (a + gap, a + gap + lb);
        let base = increment_covariance_1d(h, i, j);
        let moved = increment_covariance_1d(h, (i.0 + shift, i.1 + shift), (j.0 + shift, j.1 + shift));
        prop_assert!((base - moved).abs() < 1e-12);
    }
}
