use noisyrow::instances::{compute_profile, generate, GeneratorConfig, GroundTruthInstance};
use noisyrow::linalg::{numerical_rank, DenseMatrix, RankTolerance};
use noisyrow::Error;
use rand::SeedableRng;
use rand_distr::{Distribution, StandardNormal};

fn tol() -> RankTolerance {
    RankTolerance::default()
}

#[test]
fn gaussian_ranks_hold_statistically() {
    let mut good = 0;
    let trials = 200;
    for seed in 0..trials {
        let cfg = GeneratorConfig {
            enforce_psi: false,
            ..GeneratorConfig::gaussian(12, 10, 3, 2, seed)
        };
        let inst = generate(&cfg).unwrap();
        let rank_m = numerical_rank(inst.m(), tol()).unwrap();
        let rank_n = numerical_rank(inst.observed(), tol()).unwrap();
        good += usize::from(rank_m == 3 && rank_n == 5);
    }
    assert!(good as f64 / trials as f64 >= 0.99, "{good}/{trials}");
}

#[test]
fn fresh_noise_row_raises_rank() {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
    for seed in 0..100 {
        let inst = generate(&GeneratorConfig::gaussian(9, 8, 1 + (seed as usize % 4), 0, seed)).unwrap();
        let base = inst.m();
        let mut rows = base.to_nested();
        rows.push((0..base.cols()).map(|_| StandardNormal.sample(&mut rng)).collect());
        let grown = DenseMatrix::from_rows(&rows).unwrap();
        assert_eq!(
            numerical_rank(&grown, tol()).unwrap(),
            numerical_rank(base, tol()).unwrap() + 1
        );
    }
}

#[test]
fn sparse_basis_profile_is_exact() {
    for (k, psi) in (2..=5).enumerate() {
        let cfg = GeneratorConfig::sparse_basis(4 * psi + 2, 9, 3, 2, psi, 300 + k as u64);
        let inst = generate(&cfg).unwrap();
        assert_eq!(compute_profile(&inst, tol()).unwrap().psi_col_clean, psi);
    }
}

#[test]
fn save_load_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("inst.json");
    let inst = generate(&GeneratorConfig::gaussian(6, 5, 1, 1, 7)).unwrap();
    inst.save(&path).unwrap();
    let back = GroundTruthInstance::load(&path, tol()).unwrap();
    assert_eq!(back, inst);
}

#[test]
fn file_schema_fields() {
    let inst = generate(&GeneratorConfig::gaussian(6, 5, 1, 1, 7)).unwrap();
    let v: serde_json::Value = serde_json::from_str(&inst.to_json().unwrap()).unwrap();
    for key in ["n1", "n2", "r", "gamma", "seed", "m", "noise"] {
        assert!(v.get(key).is_some(), "missing {key}");
    }
    assert_eq!(v["n1"], 6);
    assert_eq!(v["m"].as_array().unwrap().len(), 6);
    assert_eq!(v["gamma"], serde_json::json!(inst.noisy_rows()));
}

#[test]
fn truncated_file_is_malformed() {
    let inst = generate(&GeneratorConfig::gaussian(6, 5, 1, 1, 7)).unwrap();
    let text = inst.to_json().unwrap();
    let cut = &text[..text.len() / 2];
    assert!(matches!(GroundTruthInstance::from_json(cut, tol()), Err(Error::Malformed(_))));
}

#[test]
fn oversized_gamma_is_rejected() {
    let text = r#"{"n1":2,"n2":2,"r":1,"gamma":[0,1,1],"seed":0,
                   "m":[[1,2],[2,4]],"noise":[[0,0],[0,0]]}"#;
    assert!(matches!(GroundTruthInstance::from_json(text, tol()), Err(Error::Validation(_))));
}

#[test]
fn shape_and_rank_mismatches_are_rejected() {
    let bad_shape = r#"{"n1":2,"n2":2,"r":1,"gamma":[],"seed":0,
                        "m":[[1,2,3],[2,4,6]],"noise":[[0,0],[0,0]]}"#;
    assert!(matches!(GroundTruthInstance::from_json(bad_shape, tol()), Err(Error::Validation(_))));
    let bad_rank = r#"{"n1":2,"n2":2,"r":2,"gamma":[],"seed":0,
                       "m":[[1,2],[2,4]],"noise":[[0,0],[0,0]]}"#;
    assert!(matches!(GroundTruthInstance::from_json(bad_rank, tol()), Err(Error::Validation(_))));
}
