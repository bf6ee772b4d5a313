//! Property suites: least-squares orthogonality, IRLS stationarity, AUROC
//! invariances, balancing, seed reproducibility and moment round-trips.
//!
//! Run on their own with `cargo test -p deconfound --test properties`.

use deconfound::adjust::{fit_adjustment, prepare, transform};
use deconfound::harness::run_experiment;
use deconfound::metrics::auroc;
use deconfound::models::{fit_logistic, fit_ols, score};
use deconfound::rng::stream;
use deconfound::scm::{draw_params, sigmoid, simulate_regression, EnvironmentMoments};
use deconfound::selection::{ipw_oversample, match_undersample};
use deconfound::{builtin_config, BuiltinName, Dataset, Task};
use ndarray::{concatenate, Array1, Array2, ArrayView1, Axis};
use proptest::prelude::*;
use rand::Rng;
use rand_distr::StandardNormal;

fn gaussian(rows: usize, cols: usize, seed: u64) -> Array2<f64> {
    let mut rng = stream(seed);
    Array2::from_shape_simple_fn((rows, cols), || rng.sample(StandardNormal))
}

/// Definition of AUROC: fraction of (positive, negative) pairs ordered correctly.
fn auroc_by_pairs(labels: &[f64], scores: &[f64]) -> f64 {
    let (mut wins, mut pairs) = (0.0, 0u64);
    for (i, &li) in labels.iter().enumerate() {
        for (j, &lj) in labels.iter().enumerate() {
            if li == 1.0 && lj == 0.0 {
                pairs += 1;
                wins += match scores[i].partial_cmp(&scores[j]).unwrap() {
                    std::cmp::Ordering::Greater => 1.0,
                    std::cmp::Ordering::Equal => 0.5,
                    std::cmp::Ordering::Less => 0.0,
                };
            }
        }
    }
    wins / pairs as f64
}

fn scored_labels() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (2usize..60).prop_flat_map(|n| {
        (
            proptest::collection::vec(prop_oneof![Just(0.0), Just(1.0)], n),
            proptest::collection::vec(-300i32..300, n),
        )
            .prop_filter("both classes", |(l, _)| l.contains(&0.0) && l.contains(&1.0))
            .prop_map(|(l, s)| (l, s.into_iter().map(f64::from).collect()))
    })
}

/// Binary (C, Y) data with every cell populated.
fn binary_cells() -> impl Strategy<Value = Dataset> {
    (proptest::collection::vec(0u8..4, 4..120), any::<u64>()).prop_map(|(mut cells, seed)| {
        cells.extend([0, 1, 2, 3]);
        let n = cells.len();
        let c = Array2::from_shape_fn((n, 1), |(i, _)| f64::from(cells[i] >> 1));
        let y = Array1::from_shape_fn(n, |i| f64::from(cells[i] & 1));
        Dataset::new(gaussian(n, 3, seed), c, y, Task::Classification).unwrap()
    })
}

fn empirical_cov(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    let (ma, mb) = (a.mean().unwrap(), b.mean().unwrap());
    a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / a.len() as f64
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 96, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn auroc_matches_pair_counting((labels, scores) in scored_labels()) {
        let a = auroc(Array1::from(labels.clone()).view(), Array1::from(scores.clone()).view()).unwrap();
        prop_assert!((a - auroc_by_pairs(&labels, &scores)).abs() < 1e-12);
    }

    #[test]
    fn auroc_is_invariant_to_increasing_transforms((labels, scores) in scored_labels()) {
        let l = Array1::from(labels);
        let s = Array1::from(scores);
        let base = auroc(l.view(), s.view()).unwrap();
        for t in [|v: f64| 3.0 * v + 7.0, |v: f64| v * v * v, |v: f64| (v / 100.0).exp(), sigmoid_scaled] {
            prop_assert_eq!(auroc(l.view(), s.mapv(t).view()).unwrap().to_bits(), base.to_bits());
        }
    }

    #[test]
    fn auroc_of_flipped_labels_is_complement((labels, scores) in scored_labels()) {
        let l = Array1::from(labels);
        let s = Array1::from(scores);
        let flipped = l.mapv(|v| 1.0 - v);
        let a = auroc(l.view(), s.view()).unwrap();
        prop_assert!((auroc(flipped.view(), s.view()).unwrap() - (1.0 - a)).abs() < 1e-12);
    }

    #[test]
    fn matching_balances_cells_exactly(data in binary_cells(), seed in any::<u64>()) {
        let counts = data.cell_counts().unwrap();
        let k = *counts.iter().min().unwrap();
        let out = match_undersample(&data, &mut stream(seed)).unwrap();
        prop_assert_eq!(out.cell_counts().unwrap(), [k; 4]);
        prop_assert_eq!(empirical_cov(out.c.column(0), out.y.view()), 0.0);
        // Rows are a subset: no input row appears more often than once.
        let mut seen: Vec<_> = out.x.rows().into_iter().map(|r| r.to_vec()).collect();
        seen.sort_by(|a, b| a.partial_cmp(b).unwrap());
        seen.dedup();
        prop_assert_eq!(seen.len(), out.n());
    }

    #[test]
    fn ipw_balances_cells_by_copying_rows(data in binary_cells(), seed in any::<u64>()) {
        let k = *data.cell_counts().unwrap().iter().max().unwrap();
        let out = ipw_oversample(&data, &mut stream(seed)).unwrap();
        prop_assert_eq!(out.cell_counts().unwrap(), [k; 4]);
        prop_assert_eq!(empirical_cov(out.c.column(0), out.y.view()), 0.0);
        for (i, row) in out.x.rows().into_iter().enumerate() {
            let source = data.x.rows().into_iter().position(|r| r == row);
            prop_assert!(source.is_some());
            let s = source.unwrap();
            prop_assert_eq!((data.c[[s, 0]], data.y[s]), (out.c[[i, 0]], out.y[i]));
        }
    }

    #[test]
    fn ols_residuals_are_orthogonal_to_the_design(seed in any::<u64>(), n in 8usize..300, p in 1usize..6) {
        prop_assume!(n > p + 1);
        let x = gaussian(n, p, seed);
        let y = gaussian(n, 1, seed ^ 1).column(0).to_owned() + x.sum_axis(Axis(1));
        let w = fit_ols(x.view(), y.view()).unwrap();
        let resid = &y - &x.dot(&w.beta_hat);
        let scale = resid.dot(&resid).sqrt();
        for col in x.columns() {
            prop_assert!(col.dot(&resid).abs() <= 1e-10 * scale * col.dot(&col).sqrt());
        }
    }

    #[test]
    fn adjustment_residuals_are_orthogonal_to_labels_and_confounders(seed in any::<u64>()) {
        let mut rng = stream(seed);
        let env = EnvironmentMoments::regression(1.0, 0.5, 1.0);
        let params = draw_params(Task::Regression, 4, 2, &[env], &mut rng).unwrap();
        let data = simulate_regression(&params, &env, 400, &mut rng).unwrap();
        let model = fit_adjustment(&data).unwrap();
        let adjusted = transform(data.x.view(), data.c.view(), &model).unwrap();
        let design = concatenate(Axis(1), &[data.y.view().insert_axis(Axis(1)), data.c.view()]).unwrap();
        for j in 0..4 {
            let resid = &adjusted.column(j) - &(&data.y * model.b_xy_hat[j]);
            let scale = resid.dot(&resid).sqrt();
            for col in design.columns() {
                prop_assert!(col.dot(&resid).abs() <= 1e-10 * scale * col.dot(&col).sqrt());
            }
        }
    }

    #[test]
    fn irls_reaches_a_stationary_point(seed in any::<u64>(), n in 80usize..400) {
        let x = gaussian(n, 3, seed);
        let mut rng = stream(seed ^ 7);
        let y = Array1::from_shape_fn(n, |i| {
            let eta = 0.2 + 0.8 * x[[i, 0]] - 0.6 * x[[i, 1]];
            if rng.random::<f64>() < sigmoid(eta) { 1.0 } else { 0.0 }
        });
        prop_assume!(y.sum() > 2.0 && y.sum() < n as f64 - 2.0);
        let w = fit_logistic(x.view(), y.view(), 100, 1e-8).unwrap();
        if !w.separated {
            prop_assert!(w.converged);
            let design = concatenate(Axis(1), &[Array2::ones((n, 1)).view(), x.view()]).unwrap();
            let mut coef = vec![w.intercept];
            coef.extend(w.beta_hat.iter());
            let g = score(design.view(), y.view(), Array1::from(coef).view());
            prop_assert!(g.iter().all(|v| v.abs() <= 1e-8), "{g}");
        }
    }

    #[test]
    fn test_labels_never_influence_the_adjusted_features(seed in any::<u64>()) {
        let mut rng = stream(seed);
        let train_env = EnvironmentMoments::regression(1.0, 0.8, 1.0);
        let test_env = EnvironmentMoments::regression(2.0, -0.5, 1.5);
        let params = draw_params(Task::Regression, 3, 1, &[train_env, test_env], &mut rng).unwrap();
        let train = simulate_regression(&params, &train_env, 200, &mut rng).unwrap();
        let test = simulate_regression(&params, &test_env, 50, &mut rng).unwrap();
        let mut scrambled = test.clone();
        scrambled.y.mapv_inplace(|v| -3.0 * v + 11.0);
        let (_, a) = prepare(&train, &[test], deconfound::Strategy::CausalityAware, &mut stream(1)).unwrap();
        let (_, b) = prepare(&train, &[scrambled], deconfound::Strategy::CausalityAware, &mut stream(1)).unwrap();
        prop_assert_eq!(&a[0].x, &b[0].x);
    }
}

fn sigmoid_scaled(v: f64) -> f64 {
    sigmoid(v / 50.0)
}

fn small(name: BuiltinName, reps: usize, seed: u64) -> deconfound::ExperimentConfig {
    let mut c = builtin_config(name);
    c.replications = reps;
    c.master_seed = seed;
    c.n_train = 300;
    c.n_test = 200;
    if c.task == Task::Classification {
        c.n_population = 3000;
    }
    c
}

#[test]
fn experiments_are_bitwise_reproducible_across_thread_counts() {
    for name in BuiltinName::ALL {
        let config = small(name, 6, 99);
        let runs: Vec<_> = [1, 3, 8]
            .iter()
            .map(|&t| {
                let pool = rayon::ThreadPoolBuilder::new().num_threads(t).build().unwrap();
                pool.install(|| run_experiment(&config)).unwrap()
            })
            .collect();
        let bits = |o: &deconfound::harness::ExperimentOutput| -> Vec<(usize, deconfound::Strategy, usize, Option<u64>)> {
            o.rows.iter().map(|r| (r.replication, r.strategy, r.env, r.value.map(f64::to_bits))).collect()
        };
        for r in &runs[1..] {
            assert_eq!(bits(r), bits(&runs[0]), "{name}");
            assert_eq!(r.summary, runs[0].summary);
        }
    }
}

#[test]
fn different_master_seeds_give_different_results() {
    let a = run_experiment(&small(BuiltinName::RegrExp1, 2, 1)).unwrap();
    let b = run_experiment(&small(BuiltinName::RegrExp1, 2, 2)).unwrap();
    assert_ne!(a.rows, b.rows);
}

/// Sample second moments of (C, Y) at n = 200000 sit within three standard
/// errors of their targets.
#[test]
fn simulated_moments_round_trip() {
    let n = 200_000;
    let envs = [
        EnvironmentMoments::regression(1.0, 0.8, 1.0),
        EnvironmentMoments::regression(3.0, -0.8, 1.0),
        EnvironmentMoments::regression(1.0, 0.0, 2.5),
    ];
    let mut rng = stream(4242);
    for draw in 0..3 {
        let params = draw_params(Task::Regression, 5, 1, &envs, &mut rng).unwrap();
        for env in &envs {
            let EnvironmentMoments::Regression { var_c, cov_cy, var_y } = *env else { unreachable!() };
            let data = simulate_regression(&params, env, n, &mut rng).unwrap();
            let c = data.c.column(0);
            let nf = n as f64;
            let checks = [
                ("var_c", empirical_cov(c, c), var_c, (2.0 * var_c * var_c / nf).sqrt()),
                ("var_y", empirical_cov(data.y.view(), data.y.view()), var_y, (2.0 * var_y * var_y / nf).sqrt()),
                ("cov_cy", empirical_cov(c, data.y.view()), cov_cy, ((var_c * var_y + cov_cy * cov_cy) / nf).sqrt()),
            ];
            for (what, got, want, se) in checks {
                assert!((got - want).abs() <= 3.0 * se, "draw {draw} {what}: {got} vs {want} (se {se})");
            }
        }
    }
}

/// With many samples the fitted loadings approach the structural ones, and
/// the adjusted features are tied to C only through Y.
#[test]
fn estimated_adjustment_approaches_the_oracle() {
    let env = EnvironmentMoments::regression(1.5, 0.6, 1.0);
    let mut rng = stream(77);
    let params = draw_params(Task::Regression, 5, 1, &[env], &mut rng).unwrap();
    let data = simulate_regression(&params, &env, 200_000, &mut rng).unwrap();
    let model = fit_adjustment(&data).unwrap();
    for j in 0..5 {
        assert!((model.b_xc_hat[[j, 0]] - params.beta_xc[[j, 0]]).abs() < 0.02);
        assert!((model.b_xy_hat[j] - params.beta_xy[j]).abs() < 0.02);
    }
    let adjusted = transform(data.x.view(), data.c.view(), &model).unwrap();
    let oracle = &data.x - &data.c.dot(&params.beta_xc.t());
    // What is left of C in X* is carried by Y alone: Cov(X*_j, C) = beta_xy_j Cov(Y, C).
    let c = data.c.column(0);
    for j in 0..5 {
        let via_y = params.beta_xy[j] * 0.6;
        assert!((empirical_cov(adjusted.column(j), c) - via_y).abs() < 0.01);
        assert!((empirical_cov(oracle.column(j), c) - via_y).abs() < 0.01);
    }
}
