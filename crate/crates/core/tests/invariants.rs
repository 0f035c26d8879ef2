use proptest::prelude::*;

use pbforecast::data::{validate_campaign, ModelId, PredictionRecord, PredictionRun, RunConfig};
use pbforecast::features::{build_features, embed_descriptions, fit_pca, FeatureSchema, HashingEmbedder};
use pbforecast::llm::{build_prompt, parse_prediction, PromptContext, PromptKind, PromptVariant};
use pbforecast::metrics::{evaluate_run, jaccard_of_rankings, kendall_tau_b, EvalOptions};
use pbforecast::models::{fit_pvm, predict_knn, predict_pvm, pvm_probabilities, KnnModel, PvmConfig};
use pbforecast::synthetic::{synthetic_campaign, synthetic_pair, SyntheticSpec};

fn small_spec(projects: usize) -> SyntheticSpec {
    SyntheticSpec { projects, ..SyntheticSpec::default() }
}

fn matrix(rows: std::ops::Range<usize>, cols: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(-5.0f64..5.0, cols), rows)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn validation_is_pure(seed in any::<u64>()) {
        let c = synthetic_campaign(&small_spec(12), seed);
        prop_assert_eq!(validate_campaign(&c), validate_campaign(&c.clone()));
        prop_assert!(validate_campaign(&c).is_clean());
    }

    #[test]
    fn pca_components_orthonormal_and_variance_non_increasing(data in matrix(6..20, 5)) {
        let Ok(pca) = fit_pca(&data, 3.min(data.len() - 1)) else { return Ok(()) };
        for (i, a) in pca.components.iter().enumerate() {
            for (j, b) in pca.components.iter().enumerate() {
                let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
                let expected = if i == j { 1.0 } else { 0.0 };
                prop_assert!((dot - expected).abs() < 1e-8, "<c{i},c{j}> = {dot}");
            }
        }
        for w in pca.explained_variance.windows(2) {
            prop_assert!(w[0] >= w[1]);
        }
        prop_assert!(pca.transform(&pca.mean).iter().all(|z| z.abs() < 1e-9));
    }

    #[test]
    fn features_are_deterministic(seed in any::<u64>()) {
        let c = synthetic_campaign(&small_spec(10), seed);
        let e = embed_descriptions(&c, &HashingEmbedder::new(32), 1).unwrap();
        let schema = FeatureSchema::fit(&c, 32);
        let a = build_features(&c, &schema, &e).unwrap();
        let b = build_features(&c, &schema, &embed_descriptions(&c, &HashingEmbedder::new(32), 3).unwrap()).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn pvm_probabilities_form_a_distribution(w in prop::collection::vec(-50.0f64..50.0, 3), x in matrix(1..15, 3)) {
        let p = pvm_probabilities(&w, &x).unwrap();
        prop_assert!(p.iter().all(|v| v.is_finite() && *v >= 0.0));
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn pvm_fit_never_decreases_likelihood_and_ranking_ignores_t(
        x in matrix(4..12, 2),
        votes in prop::collection::vec(0.0f64..500.0, 12),
        t in 1.0f64..1e6,
    ) {
        let votes = &votes[..x.len()];
        prop_assume!(votes.iter().sum::<f64>() > 0.0);
        let config = PvmConfig { max_iterations: 300, ..PvmConfig::default() };
        let model = fit_pvm(&x, votes, &config).unwrap();
        for w in model.diagnostics.trace.windows(2) {
            prop_assert!(w[1] >= w[0] - 1e-9 * w[0].abs().max(1.0), "{} -> {}", w[0], w[1]);
        }
        let a = predict_pvm(&model, &x, t).unwrap();
        let b = predict_pvm(&model, &x, 1000.0).unwrap();
        let tau = kendall_tau_b(&a, &b);
        if let Ok(tau) = tau {
            prop_assert!((tau - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn knn_stays_within_training_range(train in matrix(2..15, 3), queries in matrix(1..10, 3), k in 1usize..15) {
        let votes: Vec<f64> = (0..train.len()).map(|i| (i * 37 % 11) as f64 * 10.0).collect();
        let k = k.min(train.len());
        let model = KnnModel::new(train, votes.clone(), k).unwrap();
        let (lo, hi) = votes.iter().fold((f64::MAX, f64::MIN), |(l, h), v| (l.min(*v), h.max(*v)));
        for p in predict_knn(&model, &queries) {
            prop_assert!(p >= lo - 1e-9 && p <= hi + 1e-9);
        }
    }

    #[test]
    fn tau_self_and_reverse(mut x in prop::collection::hash_set(-1000i64..1000, 2..60)) {
        let x: Vec<f64> = x.drain().map(|v| v as f64).collect();
        let rev: Vec<f64> = x.iter().map(|v| -v).collect();
        prop_assert_eq!(kendall_tau_b(&x, &x).unwrap(), 1.0);
        prop_assert_eq!(kendall_tau_b(&x, &rev).unwrap(), -1.0);
    }

    #[test]
    fn jaccard_is_symmetric(seed_a in any::<u64>(), seed_b in any::<u64>(), n in 2usize..40, k in 1usize..40) {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let k = k.min(n);
        let mut a: Vec<usize> = (0..n).collect();
        let mut b = a.clone();
        a.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed_a));
        b.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed_b));
        prop_assert_eq!(jaccard_of_rankings(&a, &b, k).unwrap(), jaccard_of_rankings(&b, &a, k).unwrap());
    }

    #[test]
    fn evaluation_is_pure(seed in any::<u64>()) {
        let c = synthetic_campaign(&small_spec(20), seed);
        let records = c.projects.iter().enumerate().map(|(i, p)| PredictionRecord::value(&p.id, (i % 7) as f64)).collect();
        let run = PredictionRun::new(&c, ModelId::Knn, records, RunConfig::default());
        let a = evaluate_run(&run, &c, &EvalOptions::default()).unwrap();
        let b = evaluate_run(&run, &c, &EvalOptions::default()).unwrap();
        prop_assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    }

    #[test]
    fn prompts_are_pure_and_leak_no_votes_without_context(seed in any::<u64>()) {
        let (past, target) = synthetic_pair(&small_spec(8), 9, seed);
        let project = &target.projects[seed as usize % target.len()];
        let ctx = PromptContext { target: &target.meta, target_projects: target.len(), past: Some(&past), similar: None, abstraction: None };
        let nc = PromptVariant::for_campaign(PromptKind::Nc, &target);
        let ic = PromptVariant::for_campaign(PromptKind::Ic, &target);
        let nc_prompt = build_prompt(&nc, project, &ctx).unwrap();
        prop_assert_eq!(&nc_prompt, &build_prompt(&nc, project, &ctx).unwrap());
        prop_assert!(!nc_prompt.contains("| votes: "));
        for p in &past.projects {
            let figure = format!("| votes: {}", p.votes.unwrap());
            prop_assert!(!nc_prompt.contains(&figure));
        }
        let ic_prompt = build_prompt(&ic, project, &ctx).unwrap();
        prop_assert_eq!(ic_prompt.matches("| votes: ").count(), past.len());
    }

    #[test]
    fn parsing_is_pure(n in 0u64..10_000_000, noise in "[a-z ]{0,40}") {
        let text = format!("{noise}\nPREDICTION: {n}");
        prop_assert_eq!(parse_prediction(&text).unwrap(), n);
        prop_assert_eq!(parse_prediction(&text).unwrap(), parse_prediction(&text.clone()).unwrap());
    }
}
