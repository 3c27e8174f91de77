use std::collections::BTreeSet;
use std::sync::Arc;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use slatelab::config::KeyValues;
use slatelab::cvae::{negative_downsample, BetaSchedule, Candidates};
use slatelab::format::{parse_dataset, parse_slates, write_dataset, write_slates};
use slatelab::harness::{evaluate_policy, generalization_filter, parse_report, write_report, EvalRecord, RunId};
use slatelab::ingest::{filter_and_rebalance, IngestConfig, ItemSlate};
use slatelab::oracle::ClickOracle;
use slatelab::rankers::{PointwiseModel, PointwiseVariant, RandomPolicy, RankMode, SequenceConfig, SequenceMode, SequenceModel};
use slatelab::{
    CvaeConfig, CvaeModel, EmbeddingMatrix, FeatureSpace, ResponseConfig, ResponseModel, ResponseVector, SimConfig, SimEnvironment, Slate,
    SlateDataset, SlateRecord,
};
use slatelab_autodiff::{Graph, Tensor};

fn features(n: usize, seed: u64) -> FeatureSpace {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let docs = EmbeddingMatrix::normalized(n, 8, (0..n * 8).map(|_| rng.sample(StandardNormal)).collect()).unwrap();
    FeatureSpace::new(Arc::new(docs), None)
}

fn dataset_strategy() -> impl Strategy<Value = SlateDataset> {
    (1usize..50, 1usize..6, any::<u64>(), any::<bool>()).prop_flat_map(|(n, k, seed, users)| {
        let record = (prop::collection::vec(0..n, k), prop::collection::vec(any::<bool>(), k), 0usize..20).prop_map(move |(docs, r, u)| SlateRecord {
            slate: Slate::from_docs(docs),
            response: ResponseVector::new(r),
            user: users.then_some(u),
        });
        prop::collection::vec(record, 0..20).prop_map(move |records| SlateDataset { n, k, seed, records })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn engagement_probabilities_are_probabilities(
        (n, k) in (1usize..30, 1usize..8),
        seed in any::<u64>(),
        mu in -2.0f64..3.0,
        sigma in 0.0f64..3.0,
        self_interaction in any::<bool>(),
        docs_seed in any::<u64>(),
    ) {
        let mut cfg = SimConfig::new(n, k, seed);
        cfg.mu_w = mu;
        cfg.sigma_w = sigma;
        cfg.self_interaction = self_interaction;
        let env = SimEnvironment::new(cfg).unwrap();
        let slate = env.random_slate(&mut ChaCha8Rng::seed_from_u64(docs_seed));
        let p = env.engagement_probabilities(&slate).unwrap();
        prop_assert_eq!(p.len(), k);
        prop_assert!(p.iter().all(|x| (0.0..=1.0).contains(x)));
        let e = env.expected_clicks(&slate, None).unwrap();
        prop_assert!((0.0..=k as f64).contains(&e));
    }

    #[test]
    fn first_position_ignores_later_documents(seed in any::<u64>(), a in prop::collection::vec(0usize..20, 4), b in prop::collection::vec(0usize..20, 3)) {
        let env = SimEnvironment::new(SimConfig::new(20, 4, seed)).unwrap();
        let original = env.engagement_probabilities(&Slate::from_docs(a.clone())).unwrap();
        let mut changed = vec![a[0]];
        changed.extend(b);
        let perturbed = env.engagement_probabilities(&Slate::from_docs(changed)).unwrap();
        prop_assert_eq!(original[0].to_bits(), perturbed[0].to_bits());
    }

    #[test]
    fn dataset_text_round_trips(ds in dataset_strategy()) {
        let text = write_dataset(&ds);
        let back = parse_dataset(&text).unwrap();
        prop_assert_eq!(write_dataset(&back), text);
        prop_assert_eq!(back, ds);
    }

    #[test]
    fn slate_text_round_trips((n, k) in (1usize..40, 1usize..6), seed in any::<u64>(), count in 0usize..10) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let slates: Vec<Slate> = (0..count).map(|_| Slate::from_docs((0..k).map(|_| rng.random_range(0..n)).collect())).collect();
        let (n2, k2, back) = parse_slates(&write_slates(n, k, &slates)).unwrap();
        prop_assert_eq!((n2, k2), (n, k));
        prop_assert_eq!(back, slates);
    }

    #[test]
    fn config_text_round_trips(entries in prop::collection::btree_map("[A-Za-z0-9_.-]{1,10}", "[!-\"$-~]([ !-\"$-~]{0,10}[!-\"$-~])?", 0..8)) {
        let text: String = entries.iter().map(|(k, v)| format!("{k} = {v}  # note\n")).collect();
        let kv = KeyValues::parse(&text).unwrap();
        prop_assert_eq!(kv.keys().count(), entries.len());
        for (k, v) in &entries {
            prop_assert_eq!(kv.raw(k), Some(v.as_str()));
        }
    }

    #[test]
    fn report_csv_round_trips(rows in prop::collection::vec((0usize..3, prop::option::of(0usize..4), 0usize..5000, -10.0f64..10.0, prop::option::of((-10.0f64..10.0, 0.0f64..3.0)), 0usize..100_000), 0..12)) {
        let records: Vec<EvalRecord> = rows
            .into_iter()
            .map(|(p, run, step, mean, ci, samples)| EvalRecord {
                scenario: "small".into(),
                policy: ["list-cvae", "greedy-mlp", "random"][p].into(),
                run: run.map_or(RunId::All, RunId::Index),
                step,
                mean,
                ci: ci.map(|(lo, w)| (lo, lo + w)),
                samples,
            })
            .collect();
        prop_assert_eq!(parse_report(&write_report(&records)).unwrap(), records);
    }

    #[test]
    fn beta_schedule_never_decreases(steps in 0usize..10_000, a in 0usize..20_000, b in 0usize..20_000) {
        let s = BetaSchedule::for_steps(steps);
        let (lo, hi) = (a.min(b), a.max(b));
        prop_assert!(s.value(lo) <= s.value(hi));
        prop_assert!((0.0..=1.0).contains(&s.value(lo)));
    }

    #[test]
    fn downsampled_candidates_hold_the_positives(n in 1usize..200, budget_extra in 0usize..200, seed in any::<u64>(), raw in prop::collection::vec(any::<usize>(), 1..6)) {
        let positives: Vec<usize> = raw.iter().map(|d| d % n).collect();
        let budget = positives.len() + budget_extra;
        let cands = negative_downsample(&mut ChaCha8Rng::seed_from_u64(seed), n, budget, &positives).unwrap();
        let distinct: BTreeSet<usize> = cands.iter().copied().collect();
        prop_assert_eq!(distinct.len(), cands.len());
        prop_assert_eq!(cands.len(), budget.min(n));
        prop_assert!(positives.iter().all(|p| distinct.contains(p)));
        prop_assert!(cands.iter().all(|&d| d < n));
    }

    #[test]
    fn generalization_filter_respects_threshold(ds in dataset_strategy(), h1 in 0.01f64..=1.0, h2 in 0.01f64..=1.0) {
        let (lo, hi) = (h1.min(h2), h1.max(h2));
        let small = generalization_filter(&ds, lo).unwrap();
        let large = generalization_filter(&ds, hi).unwrap();
        prop_assert!(small.records.iter().all(|r| r.response.clicks() as f64 <= lo * ds.k as f64 + 1e-9));
        prop_assert!(small.len() <= large.len());
        prop_assert_eq!(generalization_filter(&ds, 1.0).unwrap(), ds);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn response_model_outputs_distributions(n in 1usize..20, k in 1usize..5, users in 0usize..3, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cfg = ResponseConfig { hidden: 16, ..ResponseConfig::default() };
        let model = ResponseModel::new(n, k, users, &cfg, &mut rng).unwrap();
        for _ in 0..5 {
            let slate = Slate::from_docs((0..k).map(|_| rng.random_range(0..n)).collect());
            let user = (users > 0).then(|| rng.random_range(0..users));
            let p = model.predict(&slate, user).unwrap();
            prop_assert_eq!(p.len(), 1 << k);
            prop_assert!(p.iter().all(|&x| x >= 0.0));
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-6);
            let e = model.expected_clicks(&slate, user).unwrap();
            prop_assert!((0.0..=k as f64).contains(&e));
        }
    }

    #[test]
    fn cvae_kl_is_non_negative(seed in any::<u64>(), beta in 0.0f64..1.0, latent in 1usize..4, learned in any::<bool>()) {
        let (n, k, b) = (12, 3, 5);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let prior = if learned { slatelab::cvae::PriorMode::Learned } else { slatelab::cvae::PriorMode::Fixed };
        let config = CvaeConfig { latent_dim: latent, hidden: 16, prior, ..CvaeConfig::default() };
        let model = CvaeModel::new(k, features(n, seed).docs.clone(), config, &mut rng).unwrap();
        let slates: Vec<Slate> = (0..b).map(|_| Slate::from_docs((0..k).map(|_| rng.random_range(0..n)).collect())).collect();
        let conds: Vec<Vec<f64>> = (0..b).map(|_| (0..k).map(|_| f64::from(rng.random_range(0..2u8))).collect()).collect();
        let refs: Vec<&Slate> = slates.iter().collect();
        let crefs: Vec<&[f64]> = conds.iter().map(Vec::as_slice).collect();
        let noise = Tensor::new(vec![b, latent], (0..b * latent).map(|_| rng.sample(StandardNormal)).collect()).unwrap();
        let mut g = Graph::new();
        let parts = model.elbo_loss(&mut g, &refs, &crefs, &noise, beta, &Candidates::Full).unwrap();
        prop_assert!(g.value(parts.kl).item() >= 0.0);
        prop_assert!(g.value(parts.reconstruction).item() >= 0.0);
    }

    #[test]
    fn ranker_slates_are_valid(n in 5usize..30, k in 1usize..5, seed in any::<u64>(), variant in 0usize..3) {
        let fs = features(n, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let variant = [PointwiseVariant::Greedy, PointwiseVariant::Pairwise, PointwiseVariant::Position][variant];
        let model = PointwiseModel::new(k, fs.clone(), variant, 16, &mut rng).unwrap();
        for mode in [RankMode::ZeroPosition, RankMode::ArPosition] {
            let slate = model.greedy_slate(mode, None).unwrap();
            let distinct: BTreeSet<usize> = slate.docs().iter().copied().collect();
            prop_assert_eq!(slate.len(), k);
            prop_assert_eq!(distinct.len(), k);
            prop_assert!(slate.docs().iter().all(|&d| d < n));
        }
        let scores = model.scores(None, None).unwrap();
        let top = model.greedy_slate(RankMode::ZeroPosition, None).unwrap();
        prop_assert!(top.docs().windows(2).all(|w| scores[w[0]] >= scores[w[1]]));

        let seq = SequenceModel::new(k, fs, SequenceConfig { input_hidden: 8, lstm_hidden: 8, output_hidden: 8, ..SequenceConfig::default() }, &mut rng).unwrap();
        for mode in [SequenceMode::Greedy, SequenceMode::Autoregressive] {
            let slate = seq.slate(mode, None).unwrap();
            let distinct: BTreeSet<usize> = slate.docs().iter().copied().collect();
            prop_assert_eq!(slate.len(), k);
            prop_assert_eq!(distinct.len(), k);
            prop_assert!(slate.docs().iter().all(|&d| d < n));
        }
    }

    #[test]
    fn evaluation_mean_lies_in_range(n in 2usize..20, k in 1usize..5, seed in any::<u64>(), count in 1usize..20) {
        let env = SimEnvironment::new(SimConfig::new(n, k, seed)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let slates: Vec<Slate> = (0..count).map(|_| env.random_slate(&mut rng)).collect();
        let policy = RandomPolicy::new(n, Arc::new(slates)).unwrap();
        let ev = evaluate_policy(&policy, &env, 50, &mut rng).unwrap();
        prop_assert!((0.0..=k as f64).contains(&ev.mean));
        let (lo, hi) = ev.interval();
        prop_assert!(lo <= ev.mean && ev.mean <= hi);
    }

    #[test]
    fn rebalancing_keeps_positives_and_valid_ids(
        raw in prop::collection::vec((0u64..40, prop::collection::vec(0u64..15, 3), prop::collection::vec(prop::bool::weighted(0.3), 3)), 1..60),
        cap in 1usize..20,
        zero_fraction in 0.0f64..0.95,
        seed in any::<u64>(),
    ) {
        let slates: Vec<ItemSlate> = raw
            .into_iter()
            .map(|(session, items, r)| ItemSlate { session, items, response: ResponseVector::new(r) })
            .collect();
        let cfg = IngestConfig { k: 3, corpus_cap: cap, zero_fraction, seed, ..IngestConfig::default() };
        let Ok(out) = filter_and_rebalance(&slates, &cfg) else { return Ok(()) };
        prop_assert_eq!(out.dataset.n, out.items.len());
        prop_assert!(out.items.windows(2).all(|w| w[0] < w[1]));
        for r in &out.dataset.records {
            prop_assert_eq!(r.response.len(), 3);
            prop_assert!(r.slate.docs().iter().all(|&d| d < out.dataset.n));
        }
        let kept: BTreeSet<u64> = out.items.iter().copied().collect();
        let eligible_positive = slates.iter().filter(|s| s.response.clicks() > 0 && s.items.iter().all(|i| kept.contains(i))).count();
        let got_positive = out.dataset.records.iter().filter(|r| r.response.clicks() > 0).count();
        prop_assert_eq!(got_positive, eligible_positive);
        prop_assert_eq!(filter_and_rebalance(&slates, &cfg).unwrap(), out);
    }
}
