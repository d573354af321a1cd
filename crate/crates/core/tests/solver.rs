use fracpoisson::grid::GridSpec;
use fracpoisson::kernels::green_discrete;
use fracpoisson::mollifier::MollifierTable;
use fracpoisson::noise::{covariance_form, NoiseSample, NoiseSampler};
use fracpoisson::rates::HurstVector;
use fracpoisson::solver::{
    mild_residual, solve_scheme, solve_system, stochastic_convolution, NonlinearitySpec, Projection, SolveOptions,
    SourceFunction, SourceSpec, F1, F2,
};
use fracpoisson::spectral::{LatticeField, SpectralPlan};
use fracpoisson::Error;
use proptest::prelude::*;

fn hv(v: &[f64]) -> HurstVector {
    HurstVector::new(v.to_vec()).unwrap()
}

fn sin_source() -> SourceSpec {
    SourceSpec::new(SourceFunction::SinProduct, Projection::CellAverage)
}

fn mean_var(xs: &[f64]) -> (f64, f64) {
    let m = xs.iter().sum::<f64>() / xs.len() as f64;
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64;
    (m, v)
}

#[test]
fn linear_damping_reproduces_the_shifted_eigenproblem() {
    // A u = -u + U_1 on n = 2 gives u = U_1 / (lambda_1 + 1) = -U_1 / 7
    let grid = GridSpec::new(1, 2).unwrap();
    let plan = SpectralPlan::new(grid);
    let g = SourceSpec::new(SourceFunction::UserGrid { n: 2, values: vec![0.0, 1.0] }, Projection::CellAverage);
    let noise = NoiseSample::zeros(&hv(&[0.5]), grid);
    let r = solve_scheme(&noise, &g, &NonlinearitySpec::linear(1.0), &plan, None, &SolveOptions::default()).unwrap();
    assert!(r.converged);
    assert!((r.solution.values[0] + 1.0 / 7.0).abs() < 1e-10);
}

#[test]
fn solutions_do_not_depend_on_the_initial_guess() {
    let grid = GridSpec::new(2, 16).unwrap();
    let plan = SpectralPlan::new(grid);
    let noise = NoiseSampler::new(&hv(&[0.7, 0.6]), grid).unwrap().sample(5, 0, 0);
    let f = NonlinearitySpec::tanh(1.0, 1.0);
    let tol = 1e-10;
    let zeros = SolveOptions { tolerance: tol, ..SolveOptions::default() };
    let tens = SolveOptions {
        tolerance: tol,
        initial: Some(LatticeField::from_values(grid, vec![10.0; grid.num_interior()]).unwrap()),
        ..SolveOptions::default()
    };
    let a = solve_scheme(&noise, &sin_source(), &f, &plan, None, &zeros).unwrap();
    let b = solve_scheme(&noise, &sin_source(), &f, &plan, None, &tens).unwrap();
    assert!(a.converged && b.converged);
    let gap = a.solution.values.iter().zip(&b.solution.values).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    assert!(gap <= 10.0 * tol, "gap {gap}");
}

#[test]
fn linear_part_contracts_at_the_predicted_factor() {
    let grid = GridSpec::new(1, 32).unwrap();
    let plan = SpectralPlan::new(grid);
    let noise = NoiseSampler::new(&hv(&[0.75]), grid).unwrap().sample(9, 0, 0);
    let lip = 3.0;
    let r = solve_scheme(&noise, &sin_source(), &NonlinearitySpec::linear(lip), &plan, None, &SolveOptions::default())
        .unwrap();
    assert!(r.converged);
    let hist = &r.update_history;
    let tail: Vec<f64> = hist.windows(2).skip(2).filter(|w| w[1] > 1e-13).map(|w| w[1] / w[0]).collect();
    assert!(!tail.is_empty());
    let bound = lip / 4.0;
    for q in tail {
        assert!(q <= 1.2 * bound, "factor {q} vs {bound}");
    }
}

#[test]
fn admission_rejects_large_lipschitz_constants() {
    let grid = GridSpec::new(1, 8).unwrap();
    let plan = SpectralPlan::new(grid);
    let rhs = LatticeField::zeros(grid);
    let opts = SolveOptions::default();
    assert!(matches!(
        solve_system(&rhs, &NonlinearitySpec::linear(4.0), &plan, None, &opts),
        Err(Error::InvalidParameter(_)) | Err(Error::HypothesisFails(_))
    ));
    // a steep bounded part only warns
    let f = NonlinearitySpec { f1: F1::ScaledTanh { bound: 1.0, slope: 5.0 }, f2: F2::Zero };
    let r = solve_system(&rhs, &f, &plan, None, &opts).unwrap();
    assert!(!r.warnings.is_empty());
}

#[test]
fn converged_solves_satisfy_the_kernel_form() {
    let grid = GridSpec::new(2, 8).unwrap();
    let plan = SpectralPlan::new(grid);
    let tab = MollifierTable::new(0.2, &grid).unwrap();
    let noise = NoiseSampler::new(&hv(&[0.8, 0.55]), grid).unwrap().sample(1, 0, 3);
    let f = NonlinearitySpec {
        f1: F1::ScaledArctan { bound: 2.0, slope: 1.0 },
        f2: F2::Affine { lipschitz: 0.5, offset: 0.3 },
    };
    let opts = SolveOptions::default();
    for moll in [None, Some(&tab)] {
        let r = solve_scheme(&noise, &sin_source(), &f, &plan, moll, &opts).unwrap();
        assert!(r.converged);
        let res = mild_residual(&r.solution, &noise, &sin_source(), &f, &plan, moll).unwrap();
        assert!(res <= 10.0 * opts.tolerance, "residual {res}");

        let mut bad = r.solution.clone();
        bad.values[10] += 1.0;
        assert!(mild_residual(&bad, &noise, &sin_source(), &f, &plan, moll).unwrap() >= 0.5);
    }
}

#[test]
fn zero_data_has_zero_residual() {
    let grid = GridSpec::new(2, 4).unwrap();
    let plan = SpectralPlan::new(grid);
    let noise = NoiseSample::zeros(&hv(&[0.6, 0.6]), grid);
    let u = LatticeField::zeros(grid);
    let r = mild_residual(&u, &noise, &SourceSpec::zero(), &NonlinearitySpec::tanh(1.0, 1.0), &plan, None).unwrap();
    assert_eq!(r, 0.0);
}

#[test]
fn convolution_matches_the_explicit_kernel_sum() {
    for (k, n, h) in [(1usize, 8usize, vec![0.7]), (2, 4, vec![0.6, 0.9]), (2, 8, vec![0.5, 0.75])] {
        let grid = GridSpec::new(k, n).unwrap();
        let plan = SpectralPlan::new(grid);
        let tab = MollifierTable::new(0.25, &grid).unwrap();
        let noise = NoiseSampler::new(&hv(&h), grid).unwrap().sample(2, 0, 0);
        for moll in [None, Some(&tab)] {
            let j = stochastic_convolution(&noise, &plan, moll).unwrap();
            for i in 0..grid.num_interior() {
                let x = grid.node_point(i);
                let direct: f64 = (0..grid.num_cells())
                    .map(|c| {
                        let y: Vec<f64> = grid.cell_multi(c).iter().map(|&jd| jd as f64 / n as f64).collect();
                        green_discrete(&x, &y, &plan, moll) * noise.increments[c]
                    })
                    .sum();
                assert!((direct - j.values[i]).abs() < 1e-8, "k {k} n {n} node {i}");
            }
        }
    }
}

#[test]
fn brownian_convolution_has_the_isometry_variance() {
    // Var J(1/2) = int (x ^ y - x y)^2 dy = 1/48 for standard Brownian noise
    let grid = GridSpec::new(1, 128).unwrap();
    let plan = SpectralPlan::new(grid);
    let sampler = NoiseSampler::new(&hv(&[0.5]), grid).unwrap();
    let mid = grid.interior_flat(&[64]);
    let reps = 20_000;
    let vals: Vec<f64> = (0..reps as u64)
        .map(|r| stochastic_convolution(&sampler.sample(21, 0, r), &plan, None).unwrap().values[mid])
        .collect();
    let sq: Vec<f64> = vals.iter().map(|v| v * v).collect();
    let (m2, v2) = mean_var(&sq);
    let se = (v2 / reps as f64).sqrt();
    assert!((m2 - 1.0 / 48.0).abs() < 4.0 * se, "{m2} vs {} (se {se})", 1.0 / 48.0);
}

#[test]
fn fractional_convolution_has_the_exact_covariance() {
    let n = 32;
    let grid = GridSpec::new(1, n).unwrap();
    let plan = SpectralPlan::new(grid);
    let h = hv(&[0.75]);
    let sampler = NoiseSampler::new(&h, grid).unwrap();
    let (ix, iz) = (grid.interior_flat(&[8]), grid.interior_flat(&[24]));
    let row = |node: usize| -> Vec<f64> {
        let x = [node as f64 / n as f64];
        (0..n).map(|c| green_discrete(&x, &[c as f64 / n as f64], &plan, None)).collect()
    };
    let exact = covariance_form(&h, &grid, &row(8), &row(24));
    let reps = 20_000;
    let prods: Vec<f64> = (0..reps as u64)
        .map(|r| {
            let j = stochastic_convolution(&sampler.sample(22, 0, r), &plan, None).unwrap();
            j.values[ix] * j.values[iz]
        })
        .collect();
    let (m, v) = mean_var(&prods);
    let se = (v / reps as f64).sqrt();
    assert!((m - exact).abs() < 4.0 * se, "{m} vs {exact} (se {se})");
}

#[test]
fn sup_norm_stays_bounded_across_resolutions() {
    let h = hv(&[0.7, 0.7]);
    let f = NonlinearitySpec::tanh(1.0, 1.0);
    let reps = 40;
    let q90: Vec<f64> = [4usize, 8, 16, 32, 64]
        .iter()
        .map(|&n| {
            let grid = GridSpec::new(2, n).unwrap();
            let plan = SpectralPlan::new(grid);
            let sampler = NoiseSampler::new(&h, grid).unwrap();
            let mut sups: Vec<f64> = (0..reps as u64)
                .map(|r| {
                    let s = sampler.sample(30, 0, r);
                    solve_scheme(&s, &sin_source(), &f, &plan, None, &SolveOptions::default())
                        .unwrap()
                        .solution
                        .sup_norm()
                })
                .collect();
            sups.sort_by(f64::total_cmp);
            sups[(0.9 * (reps - 1) as f64).round() as usize]
        })
        .collect();
    let hi = q90.iter().cloned().fold(0.0, f64::max);
    assert!(hi < 2.0 * q90[1], "{q90:?}");
}

#[test]
fn summary_serializes() {
    let grid = GridSpec::new(1, 4).unwrap();
    let plan = SpectralPlan::new(grid);
    let noise = NoiseSample::zeros(&hv(&[0.5]), grid);
    let r =
        solve_scheme(&noise, &sin_source(), &NonlinearitySpec::zero(), &plan, None, &SolveOptions::default()).unwrap();
    let json = serde_json::to_value(r.summary()).unwrap();
    assert_eq!(json["n"], 4);
    assert_eq!(json["converged"], true);
}

fn nonlinearity() -> impl Strategy<Value = NonlinearitySpec> {
    let f1 = prop_oneof![
        Just(F1::Zero),
        (0.1f64..5.0, 0.1f64..5.0).prop_map(|(bound, slope)| F1::ScaledTanh { bound, slope }),
        (0.1f64..5.0, 0.1f64..5.0).prop_map(|(bound, slope)| F1::ScaledArctan { bound, slope }),
    ];
    let f2 = prop_oneof![
        Just(F2::Zero),
        (0.0f64..3.9).prop_map(|lipschitz| F2::Linear { lipschitz }),
        (0.0f64..3.9, -2.0f64..2.0).prop_map(|(lipschitz, offset)| F2::Affine { lipschitz, offset }),
    ];
    (f1, f2).prop_map(|(f1, f2)| NonlinearitySpec { f1, f2 })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn bounded_part_is_monotone_and_bounded(f in nonlinearity()) {
        let m = f.bound();
        let mut prev = f64::NEG_INFINITY;
        for i in -2000..=2000 {
            let u = i as f64 * 0.05;
            let v = f.f1(u);
            prop_assert!(v.abs() <= m + 1e-12);
            prop_assert!(v >= prev);
            prev = v;
        }
    }

    #[test]
    fn monotonicity_inequality_holds(f in nonlinearity(), u in -50.0f64..50.0, v in -50.0f64..50.0) {
        let l = f.lipschitz();
        let lhs = (u - v) * (f.eval(u) - f.eval(v));
        prop_assert!(lhs >= -l * (u - v).powi(2) - 1e-9 * (1.0 + (u - v).powi(2)));
        prop_assert!((f.f2(u) - f.f2(v)).abs() <= l * (u - v).abs() + 1e-12);
    }
}
