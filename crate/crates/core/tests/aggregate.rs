use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rankagg::aggregate::{expert_weights, permutation_trace};
use rankagg::baselines::BaselineMethod;
use rankagg::data::{
    augment_with_quality_list, generate_synthetic, SyntheticInstance, SyntheticSpec,
};
use rankagg::metrics::{kendall_tau, spearman_rho};
use rankagg::{
    mr_rank_agg, AggregationConfig, AggregationResult, DivergenceSpec, Ordering, Regularization,
};

fn instance(family: DivergenceSpec, seed: u64) -> SyntheticInstance {
    generate_synthetic(&SyntheticSpec {
        family,
        seed,
        ..SyntheticSpec::default()
    })
    .unwrap()
}

fn config(family: DivergenceSpec) -> AggregationConfig {
    AggregationConfig {
        phi_r: family,
        phi_z: family,
        outer_max_iter: 25,
        ..AggregationConfig::default()
    }
}

fn tau(res: &AggregationResult, truth: &[f64]) -> f64 {
    kendall_tau(&res.consensus_scores(), truth).unwrap()
}

fn assert_coupled_descent(res: &AggregationResult) {
    for w in res.records.windows(2) {
        if w[1].margin_applied() {
            continue;
        }
        assert!(
            w[1].coupled_cost <= w[0].coupled_cost + 1e-9,
            "iteration {}: {} -> {}",
            w[1].iteration,
            w[0].coupled_cost,
            w[1].coupled_cost
        );
    }
}

#[test]
fn consistent_inputs_are_kept() {
    let v: Vec<f64> = (0..12).map(|i| (i as f64).powf(1.3)).collect();
    let r = DMatrix::from_fn(12, 3, |i, _| v[i]);
    let x = DMatrix::from_column_slice(12, 1, &v);
    let res = mr_rank_agg(&r, &x, &AggregationConfig::default()).unwrap();
    assert_eq!(res.consensus_order, Ordering::identity(12));
    assert!(res.coupled_cost_trace.last().unwrap() < &1e-10);
    assert!(permutation_trace(&res).iter().all(|(_, _, t)| *t == 1.0));
}

#[test]
fn gaussian_instance_is_recovered() {
    let inst = instance(DivergenceSpec::squared_euclidean(), 0);
    let res = mr_rank_agg(
        &inst.group.r,
        &inst.group.x,
        &config(DivergenceSpec::squared_euclidean()),
    )
    .unwrap();
    assert!(tau(&res, &inst.true_scores) >= 1.0 - 1e-9);
    assert!(res.iterations <= 25);
    assert_coupled_descent(&res);
    for rec in &res.records {
        let r_scores = rec.r_step.induced_order.to_scores();
        assert!(
            rec.z_step.induced_order.admits(&r_scores),
            "iteration {}",
            rec.iteration
        );
        assert!(rec.coupled_cost.is_finite() && rec.coupled_cost >= 0.0);
    }
}

#[test]
fn poisson_instance_is_recovered() {
    let gi = DivergenceSpec::generalized_i();
    let inst = instance(gi, 0);
    let res = mr_rank_agg(&inst.group.r, &inst.group.x, &config(gi)).unwrap();
    let rho = spearman_rho(&res.consensus_scores(), &inst.true_scores).unwrap();
    assert!(rho >= 1.0 - 1e-9, "rho {rho}");
    assert_coupled_descent(&res);
}

#[test]
fn steps_do_not_depend_on_lambda() {
    let se = DivergenceSpec::squared_euclidean();
    let inst = generate_synthetic(&SyntheticSpec {
        n: 60,
        d: 6,
        seed: 3,
        ..SyntheticSpec::default()
    })
    .unwrap();
    let orders = |lambda: f64| {
        let res = mr_rank_agg(
            &inst.group.r,
            &inst.group.x,
            &AggregationConfig {
                lambda,
                ..config(se)
            },
        )
        .unwrap();
        res.per_step_orders()
            .into_iter()
            .cloned()
            .collect::<Vec<_>>()
    };
    let base = orders(1.0);
    assert_eq!(orders(0.5), base);
    assert_eq!(orders(2.0), base);
}

#[test]
fn borda_and_combmnz_starts_both_recover() {
    let se = DivergenceSpec::squared_euclidean();
    let inst = instance(se, 0);
    for init_method in [BaselineMethod::Borda, BaselineMethod::CombMnz] {
        let res = mr_rank_agg(
            &inst.group.r,
            &inst.group.x,
            &AggregationConfig {
                init_method,
                ..config(se)
            },
        )
        .unwrap();
        assert!(tau(&res, &inst.true_scores) >= 1.0 - 1e-9, "{init_method}");
    }
}

#[test]
fn shuffled_start_moves_between_permutations() {
    let se = DivergenceSpec::squared_euclidean();
    let inst = instance(se, 0);
    let mut perm: Vec<usize> = (0..200).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(99));
    let cfg = AggregationConfig {
        initial_order: Some(Ordering::total(perm).unwrap()),
        ..config(se)
    };
    let res = mr_rank_agg(&inst.group.r, &inst.group.x, &cfg).unwrap();
    assert!(permutation_trace(&res).iter().any(|(_, _, t)| *t < 1.0));

    let once = mr_rank_agg(
        &inst.group.r,
        &inst.group.x,
        &AggregationConfig {
            outer_max_iter: 1,
            ..config(se)
        },
    )
    .unwrap();
    assert_eq!(permutation_trace(&once).len(), 1);
}

#[test]
fn adding_the_true_scores_keeps_exact_recovery() {
    let se = DivergenceSpec::squared_euclidean();
    let inst = instance(se, 0);
    let g = augment_with_quality_list(&inst.group, &inst.true_scores).unwrap();
    let res = mr_rank_agg(&g.r, &g.x, &config(se)).unwrap();
    assert!(tau(&res, &inst.true_scores) >= 1.0 - 1e-9);
}

#[test]
fn single_perfect_list_gets_a_nonzero_weight() {
    let v: Vec<f64> = (0..15).map(|i| ((i * 7) % 15) as f64).collect();
    let r = DMatrix::from_column_slice(15, 1, &v);
    let x = DMatrix::from_fn(15, 1, |i, _| v[i] * 0.5 + 1.0);
    let res = mr_rank_agg(&r, &x, &AggregationConfig::default()).unwrap();
    assert!(expert_weights(&res)[0].abs() > 1e-3, "{:?}", res.beta);
}

#[test]
fn all_zero_lists_are_rejected() {
    let r = DMatrix::zeros(10, 2);
    let x = DMatrix::from_fn(10, 1, |i, _| i as f64);
    assert!(mr_rank_agg(&r, &x, &AggregationConfig::default()).is_err());
}

#[test]
fn lasso_discards_noise_lists() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let n = 80;
    let x = DMatrix::from_fn(n, 4, |_, _| rng.sample::<f64, _>(StandardNormal));
    let truth: Vec<f64> = (0..n)
        .map(|i| x[(i, 0)] - 0.5 * x[(i, 1)] + 0.8 * x[(i, 3)])
        .collect();
    let r = DMatrix::from_fn(n, 10, |i, k| {
        if k < 3 {
            truth[i] + 0.01 * rng.sample::<f64, _>(StandardNormal)
        } else {
            rng.sample(StandardNormal)
        }
    });
    let cfg = AggregationConfig {
        reg_beta: Regularization::Lasso(5.0),
        ..config(DivergenceSpec::squared_euclidean())
    };
    let res = mr_rank_agg(&r, &x, &cfg).unwrap();
    let beta = expert_weights(&res);
    for (k, b) in beta.iter().enumerate().skip(3) {
        assert!(b.abs() < 1e-3, "noise list {k}: {beta:?}");
    }
    assert!(beta[..3].iter().any(|b| b.abs() > 1e-3), "{beta:?}");
}
