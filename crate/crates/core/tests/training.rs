mod common;

use common::{random_graph, rng};
use infmcs::autodiff::Tensor;
use infmcs::dataset::{generate_ba_mcs, LabeledPair, McsGenParams, Metric};
use infmcs::model::{Model, ModelConfig, Task};
use infmcs::train::{adam_step, evaluate_loss, train, AdamConfig, OptimizerState, TrainConfig, Trainer};
use infmcs::{Error, Graph};
use proptest::prelude::*;
use rand::seq::SliceRandom;

fn tiny_config() -> ModelConfig {
    ModelConfig {
        hidden_dim: 16,
        heads: 4,
        mlp_hidden_dim: 16,
        transformer_layers: 1,
        pe_dict_size: 16,
        label_vocab_size: 3,
        ..ModelConfig::default()
    }
}

fn data() -> (Vec<Graph>, Vec<LabeledPair>) {
    let ds = generate_ba_mcs(&McsGenParams {
        core_range: (3, 6),
        add_range: (0, 3),
        count: 24,
        attach_m: 1,
        seed: 1,
    })
    .unwrap();
    (ds.graphs, ds.pairs)
}

fn same_params(a: &Model, b: &Model) -> bool {
    (0..a.params().len()).all(|i| a.params().get(i) == b.params().get(i))
}

#[test]
fn ten_steps_are_bitwise_deterministic() {
    let (graphs, pairs) = data();
    let run = || {
        let config = TrainConfig {
            batch_size: 4,
            seed: 3,
            ..TrainConfig::synthetic()
        };
        let mut t = Trainer::new(Model::new(tiny_config(), 5).unwrap(), config, graphs.iter()).unwrap();
        let batch: Vec<&LabeledPair> = pairs.iter().take(4).collect();
        let losses: Vec<u64> = (0..10).map(|_| t.step(&batch).unwrap().to_bits()).collect();
        (t.model, losses)
    };
    let (a, la) = run();
    let (b, lb) = run();
    assert_eq!(la, lb);
    assert!(same_params(&a, &b));
}

#[test]
fn training_lowers_the_loss() {
    let (graphs, pairs) = data();
    let model = Model::new(tiny_config(), 2).unwrap();
    let store_before = {
        let t = Trainer::new(model.clone(), TrainConfig::synthetic(), graphs.iter()).unwrap();
        evaluate_loss(&model, t.store(), &pairs, Task::Regression).unwrap()
    };
    let dir = tempfile::tempdir().unwrap();
    let config = TrainConfig {
        epochs: 15,
        batch_size: 8,
        seed: 2,
        checkpoint_dir: Some(dir.path().to_path_buf()),
        ..TrainConfig::synthetic()
    };
    let outcome = train(model, config, graphs.iter(), &pairs, &[]).unwrap();
    assert_eq!(outcome.history.len(), 15);
    let best_loss = outcome.history[outcome.best_epoch - 1].train_loss;
    assert!(best_loss < store_before, "{best_loss} vs {store_before}");
    let saved = Model::load(dir.path().join("best.json")).unwrap();
    assert!(same_params(&saved, &outcome.best));
    assert!(dir.path().join("last.json").exists());
    assert_eq!(
        std::fs::read_to_string(dir.path().join("train_log.csv")).unwrap().lines().count(),
        16
    );
}

#[test]
fn adam_minimizes_a_quadratic() {
    let mut params = Model::new(tiny_config(), 0).unwrap().params().clone();
    let mut state = OptimizerState::new(&params, AdamConfig { lr: 0.05, ..AdamConfig::default() });
    let start: f64 = (0..params.len()).flat_map(|i| params.get(i).data().to_vec()).map(|x| x * x).sum();
    for _ in 0..200 {
        let grads: Vec<Tensor> = (0..params.len())
            .map(|i| {
                let p = params.get(i);
                Tensor::new(p.shape().to_vec(), p.data().iter().map(|x| 2.0 * x).collect()).unwrap()
            })
            .collect();
        adam_step(&mut params, &grads, &mut state).unwrap();
    }
    let end: f64 = (0..params.len()).flat_map(|i| params.get(i).data().to_vec()).map(|x| x * x).sum();
    assert!(end < 0.01 * start, "{end} vs {start}");
    assert_eq!(state.step, 200);
    assert!(matches!(adam_step(&mut params, &[], &mut state), Err(Error::ShapeMismatch { .. } | Error::InvalidArgument(_))));
}

#[test]
fn tasks_must_match_label_metrics() {
    let (graphs, pairs) = data();
    let config = TrainConfig {
        task: Task::Classification,
        ..TrainConfig::synthetic()
    };
    let mut t = Trainer::new(Model::new(tiny_config(), 1).unwrap(), config, graphs.iter()).unwrap();
    assert!(matches!(t.run_epoch(&pairs), Err(Error::InvalidArgument(_))));
    assert!(LabeledPair::new("a", "b", 0.5, Metric::Class, None).is_err());
}

#[test]
fn checkpoints_round_trip_bit_exactly() {
    let model = Model::new(tiny_config(), 8).unwrap();
    let back = Model::from_json(&model.to_json().unwrap()).unwrap();
    assert!(same_params(&model, &back));
    let mut r = rng(8);
    let a = random_graph(&mut r, "a", 7, 0.4, 3);
    let b = random_graph(&mut r, "b", 5, 0.4, 3);
    assert_eq!(model.forward(&a, &b).unwrap().yhat.to_bits(), back.forward(&a, &b).unwrap().yhat.to_bits());
}

#[test]
fn oversized_graphs_are_rejected() {
    let model = Model::new(tiny_config(), 1).unwrap();
    let big = random_graph(&mut rng(1), "big", 20, 0.2, 3);
    let small = random_graph(&mut rng(2), "s", 4, 0.5, 3);
    assert!(matches!(model.forward(&big, &small), Err(Error::PeDictTooSmall { .. })));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn predictions_are_symmetric_and_bounded(seed in 0u64..10_000, n1 in 1usize..12, n2 in 1usize..12) {
        let model = Model::new(tiny_config(), seed % 7).unwrap();
        let mut r = rng(seed);
        let a = random_graph(&mut r, "a", n1, 0.35, 3);
        let b = random_graph(&mut r, "b", n2, 0.35, 3);
        let ab = model.forward(&a, &b).unwrap();
        let ba = model.forward(&b, &a).unwrap();
        prop_assert!((0.0..=1.0).contains(&ab.yhat));
        prop_assert_eq!(ab.yhat.to_bits(), ba.yhat.to_bits());
        prop_assert!(ab.scores.iter().all(|s| (0.0..=1.0).contains(s)));
        for row in 0..ab.attention.rows() {
            let total: f64 = ab.attention.row(row).iter().sum();
            prop_assert!((total - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn relabeling_nodes_keeps_predictions(seed in 0u64..10_000) {
        let model = Model::new(tiny_config(), 3).unwrap();
        let mut r = rng(seed);
        let next = |r: &mut rand_chacha::ChaCha8Rng| loop {
            let g = random_graph(r, "g", 7, 0.4, 3);
            if g.has_distinct_centralities() {
                return g;
            }
        };
        let a = next(&mut r);
        let b = next(&mut r);
        let mut perm: Vec<usize> = (0..7).collect();
        perm.shuffle(&mut r);
        let y = model.forward(&a, &b).unwrap().yhat;
        let z = model.forward(&a.permuted(&perm).unwrap(), &b.permuted(&perm).unwrap()).unwrap().yhat;
        prop_assert!((y - z).abs() < 1e-9);
    }
}
