mod common;

use std::collections::HashMap;

use common::rng;
use infmcs::dataset::{
    ba_graph, generate_ba_ged, generate_ba_mcs, generate_desk_pool, label_pairs, make_pairs, split_dataset,
    trim_graph, DatasetManifest, DeskPoolParams, GedGenParams, LabelCache, McsGenParams, Metric, OracleOptions,
    Pairing, Source, Split, DEFAULT_FRACTIONS,
};
use infmcs::oracle::{ged_astar, mcs_exact, McsOptions};
use infmcs::Graph;
use proptest::prelude::*;

#[test]
fn ba_graphs_grow_hubs() {
    for seed in 0..20 {
        let g = ba_graph(200, 1, None, seed).unwrap();
        assert_eq!(g.node_count(), 200);
        assert_eq!(g.edge_count(), 1 + 198);
        let max_degree = (0..200).map(|v| g.degree(v)).max().unwrap();
        assert!(max_degree >= 10, "seed {seed}: max degree {max_degree}");
    }
    let g = ba_graph(50, 3, None, 4).unwrap();
    assert_eq!(g.edge_count(), 6 + 3 * 46);
}

#[test]
fn ba_keeps_the_core_induced() {
    let core = ba_graph(6, 2, None, 1).unwrap();
    let g = ba_graph(20, 2, Some(&core), 2).unwrap();
    let sub = g.induced_subgraph(&[0, 1, 2, 3, 4, 5]).unwrap();
    assert!(sub.same_structure(&core));
}

#[test]
fn generators_are_reproducible() {
    let params = McsGenParams {
        core_range: (3, 6),
        add_range: (0, 4),
        count: 20,
        attach_m: 1,
        seed: 9,
    };
    let a = generate_ba_mcs(&params).unwrap();
    let b = generate_ba_mcs(&params).unwrap();
    assert_eq!(a.graphs, b.graphs);
    assert_eq!(a.pairs, b.pairs);
    let c = generate_ba_mcs(&McsGenParams { seed: 10, ..params }).unwrap();
    assert_ne!(a.graphs, c.graphs);

    let pool = DeskPoolParams {
        families: 3,
        per_family: 4,
        ..DeskPoolParams::default()
    };
    assert_eq!(generate_desk_pool(&pool).unwrap(), generate_desk_pool(&pool).unwrap());
}

#[test]
fn trimming_reports_its_cost() {
    let mut r = rng(5);
    for steps in 1..=10 {
        let base = ba_graph(10, 1, None, steps as u64).unwrap();
        let (g, edits) = trim_graph(&base, steps, &mut r).unwrap();
        assert_eq!(edits.len(), steps);
        let cost: usize = edits.iter().map(|e| e.cost()).sum();
        let exact = ged_astar(&base, &g, std::time::Duration::from_secs(30)).unwrap().value;
        assert!(exact <= cost, "steps {steps}: exact {exact} above edit cost {cost}");
    }
}

#[test]
fn ged_labels_bound_exact_distance() {
    let ds = generate_ba_ged(&GedGenParams {
        base_nodes: 6,
        count: 10,
        attach_m: 1,
        seed: 2,
        beam_width: 50,
        pairing: Pairing::Sampled { count: 50, seed: 2 },
    })
    .unwrap();
    assert_eq!(ds.pairs.len(), 50);
    for p in &ds.pairs {
        let gi = &ds.graphs[ds.index_of(&p.g1_id).unwrap()];
        let gj = &ds.graphs[ds.index_of(&p.g2_id).unwrap()];
        let exact = ged_astar(gi, gj, std::time::Duration::from_secs(30)).unwrap().value;
        assert!(p.raw.unwrap() >= exact);
        assert!(p.label > 0.0 && p.label <= 1.0);
    }
}

#[test]
fn splits_are_disjoint_and_sized() {
    let ids: Vec<String> = (0..100).map(|i| format!("g{i}")).collect();
    let splits = split_dataset(&ids, DEFAULT_FRACTIONS, 1).unwrap();
    assert_eq!(splits.len(), 100);
    let count = |s| splits.values().filter(|&&x| x == s).count();
    assert_eq!([count(Split::Train), count(Split::Valid), count(Split::Test)], [80, 10, 10]);
    assert_eq!(splits, split_dataset(&ids, DEFAULT_FRACTIONS, 1).unwrap());
    let dup = vec!["a".to_string(), "a".to_string()];
    assert!(split_dataset(&dup, DEFAULT_FRACTIONS, 1).is_err());
}

#[test]
fn sampled_pairs_stay_within_splits_and_labels_are_cached() {
    let graphs = generate_desk_pool(&DeskPoolParams {
        families: 4,
        per_family: 25,
        ..DeskPoolParams::default()
    })
    .unwrap();
    let ids: Vec<String> = graphs.iter().map(|g| g.id().to_string()).collect();
    let manifest = DatasetManifest {
        metric: Metric::Mcs,
        graphs: "graphs.jsonl".into(),
        splits: split_dataset(&ids, DEFAULT_FRACTIONS, 3).unwrap(),
        pairing: Pairing::Sampled { count: 100, seed: 3 },
        label_cache: None,
        source: Source::Synthetic,
    };
    let [train, valid, test] = make_pairs(&manifest).unwrap();
    assert_eq!(train.len() + valid.len() + test.len(), 100);
    for (pairs, split) in [(&train, Split::Train), (&valid, Split::Valid), (&test, Split::Test)] {
        for (a, b) in pairs {
            assert_eq!(manifest.splits[a], split);
            assert_eq!(manifest.splits[b], split);
        }
    }

    let by_id: HashMap<String, Graph> = graphs.into_iter().map(|g| (g.id().to_string(), g)).collect();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cache.jsonl");
    let options = OracleOptions {
        jobs: 2,
        ..OracleOptions::default()
    };
    let mut cache = LabelCache::open(&path).unwrap();
    let labeled = label_pairs(&valid, &by_id, Metric::Mcs, options, &mut cache).unwrap();
    let reopened = LabelCache::open(&path).unwrap();
    assert_eq!(reopened.len(), cache.len());
    for p in &labeled {
        let (g1, g2) = (&by_id[&p.g1_id], &by_id[&p.g2_id]);
        let exact = mcs_exact(g1, g2, McsOptions::default()).unwrap().value;
        assert_eq!(p.raw, Some(exact));
        assert_eq!(reopened.get(&p.g2_id, &p.g1_id, Metric::Mcs).unwrap().0, exact);
    }
    let serial = label_pairs(&valid, &by_id, Metric::Mcs, OracleOptions::default(), &mut LabelCache::in_memory()).unwrap();
    assert_eq!(serial, labeled);
}

#[test]
fn manifest_round_trips_with_relative_paths() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = DatasetManifest {
        metric: Metric::Ged,
        graphs: "graphs.jsonl".into(),
        splits: [("a".to_string(), Split::Train)].into_iter().collect(),
        pairing: Pairing::AllPairs,
        label_cache: Some("cache.jsonl".into()),
        source: Source::Real,
    };
    let path = dir.path().join("manifest.json");
    manifest.save(&path).unwrap();
    let loaded = DatasetManifest::load(&path).unwrap();
    assert_eq!(loaded.graphs, dir.path().join("graphs.jsonl"));
    assert_eq!(loaded.label_cache, Some(dir.path().join("cache.jsonl")));
    assert_eq!(loaded.splits, manifest.splits);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn generator_labels_lower_bound_mcs(seed in 0u64..10_000) {
        let ds = generate_ba_mcs(&McsGenParams {
            core_range: (2, 6),
            add_range: (0, 3),
            count: 3,
            attach_m: 1,
            seed,
        }).unwrap();
        for (i, (s, p)) in ds.samples.iter().zip(&ds.pairs).enumerate() {
            let (g1, g2) = (&ds.graphs[2 * i], &ds.graphs[2 * i + 1]);
            prop_assert_eq!(g1.node_count(), s.core + s.add1);
            prop_assert_eq!(g2.node_count(), s.core + s.add2);
            let exact = mcs_exact(g1, g2, McsOptions::default()).unwrap().value;
            prop_assert!(exact >= s.core);
            prop_assert!(p.label <= infmcs::oracle::nmcs(g1, g2, exact) + 1e-12);
        }
    }
}
