use hintrank::datastore::{group_queries, make_split, QueryEntry, Scenario, ScenarioSpec, Selection};
use hintrank::eval::{evaluate, spectrum_from_embeddings, speedup};
use hintrank::gateway::{measure_repeated, median, RunOutcome};
use hintrank::hint_catalog::{default_catalog, parse_catalog, Catalog, HintFlags};
use hintrank::plan_ir::{encode_plan, fingerprint, fit_scaler, EncodedTree, OperatorKind, PlanNode, PlanTree};
use hintrank::scorer::{
    argmax_by_score, init_params_with, score_batch, select_hint, Architecture, Checkpoint, TrainingMode,
};
use hintrank::synthetic::{synthetic_catalog, SyntheticConfig, SyntheticSource};
use hintrank::tensor::{adam_step, AdamState, DenseMatrix, TreeBatch, TreeConvLayer};
use proptest::prelude::*;
use std::collections::HashSet;
use std::time::Duration;

fn small_arch() -> Architecture {
    Architecture { input_dim: 9, conv_channels: vec![8, 6], mlp_dims: vec![4, 1] }
}

fn node_strategy() -> impl Strategy<Value = PlanNode> {
    let leaf = (0usize..3, 1.0f64..1e5, 1.0f64..1e4, 0usize..4).prop_map(|(k, c, r, rel)| {
        let op = [OperatorKind::SeqScan, OperatorKind::IndexScan, OperatorKind::IndexOnlyScan][k].clone();
        PlanNode::new(op, c, r).with_relation(format!("r{rel}"))
    });
    leaf.prop_recursive(4, 15, 2, |inner| {
        prop_oneof![
            (inner.clone(), 1.0f64..1e6).prop_map(|(c, cost)| {
                PlanNode::new(OperatorKind::Other("Sort".into()), cost, 10.0).with_children(vec![c])
            }),
            (inner.clone(), inner, 0usize..3, 1.0f64..1e6).prop_map(|(l, r, k, cost)| {
                let op = [OperatorKind::HashJoin, OperatorKind::MergeJoin, OperatorKind::NestedLoop][k].clone();
                PlanNode::new(op, cost, 100.0).with_children(vec![l, r])
            }),
        ]
    })
}

fn trees_strategy(max: usize) -> impl Strategy<Value = Vec<PlanTree>> {
    prop::collection::vec(node_strategy().prop_map(|n| PlanTree::new(n).unwrap()), 1..max)
}

fn encode_all(trees: &[PlanTree]) -> Vec<EncodedTree> {
    let scaler = fit_scaler(trees).unwrap();
    trees.iter().map(|t| encode_plan(t, &scaler)).collect()
}

fn workload(templates: usize, per_template: usize, seed: u64) -> (Catalog, Vec<QueryEntry>) {
    let catalog = synthetic_catalog();
    let src =
        SyntheticSource::new(SyntheticConfig { templates, queries_per_template: per_template, seed, noise: 0.03 });
    let entries = group_queries(&src.records(&catalog), &catalog).unwrap();
    (catalog, entries)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn tree_conv_preserves_structure(trees in trees_strategy(5), seed in 0u64..1000) {
        let enc = encode_all(&trees);
        let (topo, x) = TreeBatch::from_encoded(&enc);
        let p = init_params_with(&small_arch(), seed).unwrap();
        let layer: &TreeConvLayer = &p.convs[0];
        let out = layer.forward(&topo, &x).unwrap();
        prop_assert_eq!(out.rows, x.rows);
        prop_assert_eq!(out.cols, layer.d_out());
        prop_assert_eq!(out.rows, trees.iter().map(|t| t.node_count).sum::<usize>());
        prop_assert!(out.is_finite());
    }

    #[test]
    fn adam_is_deterministic_and_keeps_second_moments_nonnegative(
        grads in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 6), 1..8),
        lr in 1e-5f64..0.1,
    ) {
        let run = || {
            let mut params = vec![0.5f64; 6];
            let mut state = AdamState::new(&[6]);
            for (step, g) in grads.iter().enumerate() {
                adam_step(&mut [&mut params[..]], &[&g[..]], &mut state, lr).unwrap();
                assert_eq!(state.t, step as u64 + 1);
                assert!(state.v[0].iter().all(|&v| v >= 0.0));
            }
            (params, state)
        };
        prop_assert_eq!(run(), run());
    }

    #[test]
    fn select_hint_is_brute_force_argmax(trees in trees_strategy(8), seed in 0u64..1000, shift in -50.0f64..50.0) {
        let enc = encode_all(&trees);
        let catalog = default_catalog();
        let mut p = init_params_with(&small_arch(), seed).unwrap();
        let cands: Vec<_> = enc.iter().enumerate().map(|(i, t)| (*catalog.get(i).unwrap(), t.clone())).collect();
        let picked = select_hint(&p, &cands).unwrap();
        let scores: Vec<f64> = enc.iter().map(|t| score_batch(&p, &[t]).unwrap()[0]).collect();
        let mut best = 0;
        for i in 1..scores.len() {
            if scores[i] > scores[best] {
                best = i;
            }
        }
        prop_assert_eq!(picked.id, best);
        let last = p.mlp.len() - 1;
        p.mlp[last].bias[0] += shift;
        prop_assert_eq!(select_hint(&p, &cands).unwrap().id, picked.id);
    }

    #[test]
    fn checkpoint_round_trip_scores_bit_exactly(trees in trees_strategy(6), seed in 0u64..1000) {
        let enc = encode_all(&trees);
        let mut params = init_params_with(&small_arch(), seed).unwrap();
        params.catalog_hash = default_catalog().content_hash();
        let ckpt = Checkpoint { params, mode: TrainingMode::Listwise, config_digest: "d".into(), best_validation: 1.5 };
        let back = Checkpoint::from_bytes(&ckpt.to_bytes()).unwrap();
        let refs: Vec<&EncodedTree> = enc.iter().collect();
        let a: Vec<u64> = score_batch(&ckpt.params, &refs).unwrap().iter().map(|s| s.to_bits()).collect();
        let b: Vec<u64> = score_batch(&back.params, &refs).unwrap().iter().map(|s| s.to_bits()).collect();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn fingerprints_ignore_estimates(tree in node_strategy(), scale in 0.1f64..10.0) {
        fn rescale(n: &PlanNode, s: f64) -> PlanNode {
            let mut m = n.clone();
            m.est_cost *= s;
            m.est_rows *= s;
            m.children = n.children.iter().map(|c| rescale(c, s)).collect();
            m
        }
        let a = PlanTree::new(tree.clone()).unwrap();
        let b = PlanTree::new(rescale(&tree, scale)).unwrap();
        prop_assert_eq!(fingerprint(&a), fingerprint(&b));
    }

    #[test]
    fn catalog_json_round_trip(mask in prop::collection::vec(any::<bool>(), 48)) {
        let full = default_catalog();
        let flags: Vec<HintFlags> = std::iter::once(full.get(0).unwrap().flags)
            .chain(full.entries()[1..].iter().zip(&mask).filter(|(_, &keep)| keep).map(|(h, _)| h.flags))
            .collect();
        let catalog = Catalog::from_flags(flags).unwrap();
        let back = parse_catalog(&catalog.to_json()).unwrap();
        prop_assert_eq!(back.content_hash(), catalog.content_hash());
        prop_assert_eq!(back.entries(), catalog.entries());
    }

    #[test]
    fn median_lies_within_range(xs in prop::collection::vec(0.001f64..1e6, 1..20)) {
        let m = median(&xs).unwrap();
        let lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = xs.iter().copied().fold(0.0, f64::max);
        prop_assert!(lo <= m && m <= hi);
    }

    #[test]
    fn a_timeout_censors_at_the_configured_limit(reps in 1u32..6, fail_at in 0u32..6, timeout in 1u64..100_000) {
        let mut calls = 0;
        let m = measure_repeated(reps, timeout, || {
            calls += 1;
            Ok(if calls > fail_at { RunOutcome::TimedOut } else { RunOutcome::Completed(Duration::from_millis(3)) })
        })
        .unwrap();
        prop_assert_eq!(m.timed_out, fail_at < reps);
        if m.timed_out {
            prop_assert_eq!(m.latency_ms, timeout as f64);
        }
    }

    #[test]
    fn speedup_of_equal_totals_is_one(x in 1e-6f64..1e9) {
        prop_assert_eq!(speedup(x, x).unwrap(), 1.0);
    }

    #[test]
    fn spectrum_is_sorted_and_consistent(rows in 2usize..40, cols in 1usize..12, seed in 0u64..1000) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let z = DenseMatrix::from_fn(rows, cols, |_, _| rng.gen_range(-2.0..2.0));
        let r = spectrum_from_embeddings(&z).unwrap();
        prop_assert!(r.sigma.windows(2).all(|w| w[0] >= w[1]));
        prop_assert_eq!(r.collapse_count, r.sigma.iter().filter(|&&s| s < r.threshold).count());
        prop_assert!((r.sigma.iter().sum::<f64>() - r.trace).abs() <= 1e-9 * r.trace.max(1e-300));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn splits_partition_queries(
        templates in 3usize..7,
        per_template in 2usize..5,
        seed in 0u64..500,
        adhoc in any::<bool>(),
        slow in any::<bool>(),
    ) {
        let (_, entries) = workload(templates, per_template, seed);
        let spec = ScenarioSpec {
            scenario: if adhoc { Scenario::Adhoc } else { Scenario::Repeat },
            selection: if slow { Selection::Slow } else { Selection::Rand },
            holdout: 1,
            seed,
        };
        let split = make_split(&entries, &spec).unwrap();
        let train: HashSet<&String> = split.train.iter().collect();
        let test: HashSet<&String> = split.test.iter().collect();
        prop_assert!(train.is_disjoint(&test));
        let all: HashSet<&String> = entries.iter().map(|e| &e.query_id).collect();
        prop_assert_eq!(train.union(&test).copied().collect::<HashSet<_>>(), all);
        if adhoc {
            let template = |id: &String| entries.iter().find(|e| &e.query_id == id).unwrap().template_id.clone();
            let tt: HashSet<String> = split.train.iter().map(template).collect();
            let st: HashSet<String> = split.test.iter().map(template).collect();
            prop_assert!(tt.is_disjoint(&st));
        }
        prop_assert_eq!(make_split(&entries, &spec).unwrap(), split);
    }

    #[test]
    fn grouping_matches_fingerprint_sets(templates in 1usize..4, per_template in 1usize..4, seed in 0u64..500) {
        let catalog = synthetic_catalog();
        let src = SyntheticSource::new(SyntheticConfig { templates, queries_per_template: per_template, seed, noise: 0.03 });
        let records = src.records(&catalog);
        let entries = group_queries(&records, &catalog).unwrap();
        for e in &entries {
            let distinct: HashSet<String> = records
                .iter()
                .filter(|r| r.query_id == e.query_id)
                .map(|r| fingerprint(&hintrank::plan_ir::parse_explain(&r.plan_json).unwrap()).0)
                .collect();
            prop_assert_eq!(e.candidates.len(), distinct.len());
        }
    }

    #[test]
    fn oracle_dominates_selection(templates in 1usize..4, per_template in 1usize..4, seed in 0u64..500) {
        let (_, entries) = workload(templates, per_template, seed);
        let params = init_params_with(&small_arch(), seed).unwrap();
        let refs: Vec<&QueryEntry> = entries.iter().collect();
        let report = evaluate(&params, &refs, None).unwrap();
        for (row, e) in report.rows.iter().zip(&entries) {
            let worst = e.candidates.iter().map(|c| c.latency).fold(0.0, f64::max);
            prop_assert!(row.oracle_latency <= row.selected_latency && row.selected_latency <= worst);
        }
        let regressions = report.rows.iter().filter(|r| r.selected_latency > r.default_latency).count();
        prop_assert_eq!(report.regressions, regressions);
        prop_assert_eq!(report.speedup, report.total_default / report.total_selected);
    }
}

#[test]
fn argmax_ties_prefer_lowest_id() {
    assert_eq!(argmax_by_score(&[1.0, 2.0, 2.0], &[5, 7, 3]), Some(2));
}
