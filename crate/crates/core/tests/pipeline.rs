use noisyrow::completion::{
    self, discover, identify_noisy_rows, recovered_rank, theorem_bound, BoundParams,
    CompletionParams, CompletionStatus,
};
use noisyrow::instances::{generate, GeneratorConfig, GroundTruthInstance};
use noisyrow::linalg::{is_invertible, DenseMatrix, RankTolerance};
use noisyrow::report::evaluate;
use noisyrow::verify::{
    ei_in_colspace_by_append, estimate_success_rate, oracle_noisy_rows, oracle_seed_for,
};
use noisyrow::{Execution, QueryOracle};
use proptest::prelude::*;

fn tol() -> RankTolerance {
    RankTolerance::default()
}

#[test]
fn seed7_fixture_discovers_rank_two_and_identifies() {
    let inst = generate(&GeneratorConfig::gaussian(6, 5, 1, 1, 7)).unwrap();
    let params = CompletionParams::default();
    let (mut rank_two, mut exact) = (0, 0);
    for seed in 0..100 {
        let mut o = QueryOracle::for_instance(&inst, seed).unwrap();
        let res = completion::run(&mut o, &params).unwrap();
        rank_two += usize::from(res.rows_r.len() == 2);
        exact += usize::from(res.status == CompletionStatus::Ok && res.noisy_rows_hat == inst.noisy_rows());
    }
    assert!(rank_two >= 90, "rank 2 in {rank_two}/100");
    assert!(exact >= 90, "identified in {exact}/100");
}

#[test]
fn seed7_fixture_recovers_m_on_clean_rows() {
    let inst = generate(&GeneratorConfig::gaussian(6, 5, 1, 1, 7)).unwrap();
    let mut o = QueryOracle::for_instance(&inst, 1).unwrap();
    let res = completion::run(&mut o, &CompletionParams::default()).unwrap();
    assert_eq!(res.noisy_rows_hat, inst.noisy_rows());
    let scale = inst.clean_submatrix().max_abs();
    for i in inst.clean_rows() {
        for j in 0..5 {
            let err = (res.recovered.get(i, j).unwrap() - inst.m().get(i, j)).abs() / scale;
            assert!(err <= 1e-8);
        }
    }
    for &g in inst.noisy_rows() {
        assert_eq!(res.recovered.get(g, 0), None);
    }
}

#[test]
fn clean_gaussian_family_succeeds() {
    let cfg = GeneratorConfig::gaussian(8, 8, 2, 0, 0);
    let stats = estimate_success_rate(&cfg, &CompletionParams::default(), 200, 500, Execution::Parallel).unwrap();
    assert!(stats.success_rate() >= 0.9, "{stats:?}");
    let tight = CompletionParams::new(0.01, tol()).unwrap();
    let stats = estimate_success_rate(&cfg, &tight, 200, 500, Execution::Parallel).unwrap();
    assert!(stats.success_rate() >= 0.95, "{stats:?}");
}

#[test]
fn clean_instance_flags_nothing() {
    for seed in 0..20 {
        let inst = generate(&GeneratorConfig::gaussian(10, 9, 3, 0, seed)).unwrap();
        let ev = evaluate(&inst, &CompletionParams::new(0.01, tol()).unwrap(), seed).unwrap();
        assert!(ev.report.noisy_rows_hat.is_empty());
        assert!(oracle_noisy_rows(inst.observed(), tol()).unwrap().is_empty());
    }
}

#[test]
fn basis_vector_in_clean_span_is_tolerated() {
    // Row 0 of M is the only row touching column 0: e_0 lies in the clean
    // column space, so the row looks exactly like a noisy one.
    let m = DenseMatrix::from_rows(&[
        [5., 0., 0., 0., 0.],
        [0., 1., 2., 3., 1.],
        [0., 2., 4., 6., 2.],
        [0., -1., -2., -3., -1.],
        [0., 3., 6., 9., 3.],
    ])
    .unwrap();
    let inst = GroundTruthInstance::from_parts(m, vec![], DenseMatrix::zeros(5, 5), 0, tol()).unwrap();
    let params = CompletionParams::new(0.01, tol()).unwrap();
    for seed in 0..10 {
        let ev = evaluate(&inst, &params, seed).unwrap();
        let st = ev.report.status;
        let misread = ev.report.noisy_rows_hat != inst.noisy_rows();
        assert!(st == CompletionStatus::PreconditionViolated || misread || ev.result.rows_r.len() < 2);
    }
}

#[test]
fn larger_epsilon_means_fewer_passes() {
    let inst = generate(&GeneratorConfig::gaussian(20, 10, 2, 1, 4)).unwrap();
    let loose = CompletionParams::new(0.5, tol()).unwrap();
    let tight = CompletionParams::new(0.01, tol()).unwrap();
    let mut o = QueryOracle::for_instance(&inst, 3).unwrap();
    let a = discover(&mut o, &loose).unwrap();
    let mut o = QueryOracle::for_instance(&inst, 3).unwrap();
    let b = discover(&mut o, &tight).unwrap();
    assert!(a.eta < b.eta);
    assert!(a.passes <= b.passes);
}

fn pipeline_config() -> impl Strategy<Value = GeneratorConfig> {
    (6usize..=16, 6usize..=16, 1usize..=3, 0usize..=2, any::<u64>())
        .prop_map(|(n1, n2, r, g, seed)| GeneratorConfig::gaussian(n1, n2, r, g, seed))
        .prop_filter("feasible", |c| c.validate().is_ok())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn pipeline_invariants(cfg in pipeline_config(), oracle_seed in any::<u64>()) {
        let inst = generate(&cfg).unwrap();
        let params = CompletionParams::default();
        let mut o = QueryOracle::for_instance(&inst, oracle_seed).unwrap();
        let state = discover(&mut o, &params).unwrap();

        // Soundness of the certificate.
        prop_assert_eq!(state.rows.len(), state.rank_hat);
        prop_assert_eq!(state.cols.len(), state.rank_hat);
        prop_assert!(state.rank_hat <= cfg.n1.min(cfg.n2));
        prop_assert!(state.zeta <= state.eta);
        prop_assert!(is_invertible(&inst.observed().select(&state.rows, &state.cols), tol()).unwrap());

        // Rank-drop identification equals the append-column characterisation.
        let flagged = identify_noisy_rows(&mut o, &state, &params).unwrap();
        let n_c = inst.observed().select_cols(&state.cols);
        let mut by_append: Vec<usize> = state
            .rows
            .iter()
            .copied()
            .filter(|&i| ei_in_colspace_by_append(&n_c, i, tol()).unwrap())
            .collect();
        by_append.sort_unstable();
        prop_assert_eq!(&flagged, &by_append);

        // Full run: accounting and exactness.
        let mut o = QueryOracle::for_instance(&inst, oracle_seed).unwrap();
        let res = completion::run(&mut o, &params).unwrap();
        prop_assert_eq!(res.query_count, o.unique_query_count());
        prop_assert!(res.query_count <= cfg.n1 * cfg.n2);
        if res.status == CompletionStatus::Ok {
            for i in 0..cfg.n1 {
                prop_assert_eq!(res.recovered.get(i, 0).is_none(), res.noisy_rows_hat.contains(&i));
            }
            prop_assert_eq!(
                recovered_rank(&res, tol()).unwrap(),
                res.rows_r.len() - res.noisy_rows_hat.len()
            );
            if res.noisy_rows_hat == inst.noisy_rows() {
                let scale = inst.clean_submatrix().max_abs();
                for i in inst.clean_rows() {
                    for j in 0..cfg.n2 {
                        let err = (res.recovered.get(i, j).unwrap() - inst.m().get(i, j)).abs() / scale;
                        prop_assert!(err <= 1e-8, "error {} at ({}, {})", err, i, j);
                    }
                }
            }
        }
    }

    #[test]
    fn proof_bound_monotone(
        n1 in 4usize..200, n2 in 4usize..200, r in 1usize..4, omega in 0usize..4,
        psi_u in 1usize..40, psi_v in 1usize..40, eps in 0.01..0.9f64,
    ) {
        prop_assume!(omega < n1 && r + omega < n2);
        let p = BoundParams { n1, n2, r, omega, psi_u, psi_v, epsilon: eps };
        let base = theorem_bound(&p).unwrap();
        prop_assert!(base.proof_bound.is_finite() && base.proof_bound > 0.0);
        prop_assert!(base.stated_bound.is_finite() && base.stated_bound > 0.0);
        let proof = |q: BoundParams| theorem_bound(&q).unwrap().proof_bound;
        let wider_psi = proof(BoundParams { psi_u: psi_u + 1, ..p });
        let more_rank = proof(BoundParams { r: r + 1, ..p });
        let more_noise = proof(BoundParams { omega: omega + 1, ..p });
        let tighter = proof(BoundParams { epsilon: eps / 2.0, ..p });
        prop_assert!(wider_psi <= base.proof_bound);
        prop_assert!(more_rank >= base.proof_bound);
        prop_assert!(more_noise >= base.proof_bound);
        prop_assert!(tighter >= base.proof_bound);
    }
}

#[test]
fn stated_bound_first_term_vanishes_without_noise() {
    let p = BoundParams { n1: 50, n2: 40, r: 2, omega: 0, psi_u: 10, psi_v: 8, epsilon: 0.1 };
    let b = theorem_bound(&p).unwrap();
    let l = 10f64.ln();
    let expected = 4.0 * 50.0 / 10.0 * (4.0 + l) * 40.0 / 8.0 + 100.0 * (2.0 + l);
    assert!((b.stated_bound - expected).abs() < 1e-9);
}

#[test]
fn trial_oracle_seeds_are_salted() {
    assert_ne!(oracle_seed_for(1), 1);
    assert_eq!(oracle_seed_for(oracle_seed_for(9)), 9);
}
