use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::*;
use crate::dag::{parse_dag, NodeRole};

fn tiny_config() -> TrainConfig {
    TrainConfig {
        conditioner_hidden: vec![8],
        transformer_hidden: vec![8],
        context_width: 3,
        quadrature_nodes: 20,
        learning_rate: 3e-3,
        batch_size: 64,
        max_epochs: 3,
        patience: 2,
        split: [0.8, 0.1, 0.1],
        seed: 1,
        ..TrainConfig::default()
    }
}

fn toy_data(n: usize, seed: u64) -> (CausalDag, Dataset) {
    let dag = parse_dag("C; Y; C->Y").unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = Vec::new();
    for _ in 0..n {
        let s: f64 = StandardNormal.sample(&mut rng);
        let c = if s > 0.0 { 1.0 } else { 0.0 };
        let e: f64 = StandardNormal.sample(&mut rng);
        values.extend([c, 2.0 * c + e]);
    }
    let columns = vec![
        ColumnSpec {
            name: "C".into(),
            kind: ColumnKind::Discrete { cardinality: 2 },
            role: NodeRole::Confounder,
            group_key: true,
        },
        ColumnSpec { name: "Y".into(), kind: ColumnKind::Continuous, role: NodeRole::Outcome, group_key: false },
    ];
    let data = Dataset::new(columns, Tensor::from_vec(&[n, 2], values).unwrap()).unwrap();
    (dag, data)
}

#[test]
fn split_sizes_match_reference_counts() {
    let s = split(1_941_734, [0.99, 0.005, 0.005], 0).unwrap();
    assert_eq!((s.train.len(), s.validation.len(), s.test.len()), (1_922_316, 9_709, 9_709));
    let s = split(10, [0.8, 0.1, 0.1], 3).unwrap();
    assert_eq!((s.train.len(), s.validation.len(), s.test.len()), (8, 1, 1));
    assert_eq!(split(10, [0.8, 0.1, 0.1], 3).unwrap(), s);
    assert_eq!(split(0, [0.8, 0.1, 0.1], 3), Err(TrainError::EmptyDataset));
    assert!(split(10, [0.8, 0.3, 0.1], 3).is_err());
    assert!(split(10, [1.0, 0.0, 0.0], 3).is_err());
}

#[test]
fn split_is_a_disjoint_cover() {
    for n in 1..40 {
        for seed in 0..3 {
            let s = split(n, [0.6, 0.2, 0.2], seed).unwrap();
            let mut all: Vec<usize> = s.train.iter().chain(&s.validation).chain(&s.test).copied().collect();
            all.sort_unstable();
            assert_eq!(all, (0..n).collect::<Vec<_>>());
        }
    }
}

#[test]
fn quantize_recovers_dequantized_integers() {
    let values: Vec<f64> = (0..100_000).map(|k| (k % 8) as f64).collect();
    let noisy = dequantize(&values, 5).unwrap();
    let back = quantize(&noisy, 8).unwrap();
    let hits = back.iter().zip(&values).filter(|(b, v)| **b as f64 == **v).count();
    assert!(hits as f64 / values.len() as f64 >= 0.995, "recovered {hits}");
}

#[test]
fn fixed_batch_loss_decreases() {
    let (dag, data) = toy_data(256, 2);
    let cfg = tiny_config();
    let mut flow = FlowModel::new(dag.clone(), cfg.flow_config(), 4);
    let mut x = data.values().clone();
    dequantize_rows(&mut x, data.columns(), &mut ChaCha8Rng::seed_from_u64(1));
    let s = fit_standardization(&data, &(0..256).collect::<Vec<_>>());
    flow.set_standardization(s.clone());
    let u = standardize(&x, &s);
    let mut opts: Vec<AdamWState> = (0..2).map(|i| AdamWState::new(cfg.optimizer(), flow.node_params(i))).collect();
    let mut losses = Vec::new();
    for _ in 0..10 {
        let mut total = 0.0;
        for i in 0..2 {
            let mut tape = Tape::new();
            let (loss, vars) = flow.node_nll_tape(i, &mut tape, &u).unwrap();
            total += tape.value(loss).unwrap().data()[0];
            let mut g = tape.backward(loss).unwrap();
            let g = vars.collect(&mut g).unwrap();
            opts[i].step(&mut flow.node_params_mut(i), &g).unwrap();
        }
        losses.push(total);
    }
    assert!(losses.windows(2).all(|w| w[1] < w[0]), "{losses:?}");
}

#[test]
fn single_epoch_without_patience_keeps_first_checkpoint() {
    let (dag, data) = toy_data(300, 3);
    let cfg = TrainConfig { max_epochs: 1, patience: 0, ..tiny_config() };
    let model = train(&data, &dag, &cfg).unwrap();
    assert_eq!(model.best_epoch, 1);
    assert_eq!(model.history.len(), 1);
    assert_eq!(model.history[0].validation_nll, model.validation_nll);
}

#[test]
fn training_is_deterministic_and_keeps_best_checkpoint() {
    let (dag, data) = toy_data(400, 4);
    let cfg = TrainConfig { max_epochs: 6, ..tiny_config() };
    let a = train(&data, &dag, &cfg).unwrap();
    let b = train(&data, &dag, &cfg).unwrap();
    assert_eq!(a, b);
    let min = a.history.iter().map(|h| h.validation_nll).fold(f64::INFINITY, f64::min);
    assert_eq!(a.validation_nll, min);
    assert_eq!(a.columns[0].kind, ColumnKind::Discrete { cardinality: 2 });
    assert!(a.test_nll.is_finite());
}

#[test]
fn training_rejects_mismatched_columns() {
    let (_, data) = toy_data(50, 1);
    let other = parse_dag("Y; C; C->Y").unwrap();
    assert!(matches!(train(&data, &other, &tiny_config()), Err(TrainError::ColumnMismatch(_))));
    let bad = TrainConfig { batch_size: 0, ..tiny_config() };
    let (dag, _) = toy_data(1, 1);
    assert!(matches!(train(&data, &dag, &bad), Err(TrainError::InvalidConfig(_))));
}

#[test]
fn diverging_learning_rate_is_reported() {
    let (dag, data) = toy_data(200, 6);
    let cfg = TrainConfig { learning_rate: 1e300, max_epochs: 5, ..tiny_config() };
    match train(&data, &dag, &cfg) {
        Err(TrainError::DivergedLoss { .. }) | Err(TrainError::Numeric(_)) | Err(TrainError::Flow(_)) => {}
        other => panic!("expected divergence, got {:?}", other.map(|m| m.validation_nll)),
    }
}

#[test]
fn model_file_round_trip_is_exact() {
    let (dag, data) = toy_data(200, 7);
    let model = train(&data, &dag, &TrainConfig { max_epochs: 2, ..tiny_config() }).unwrap();
    let mut buf = Vec::new();
    write_model(&model, &mut buf).unwrap();
    let back = read_model(buf.as_slice()).unwrap();
    assert_eq!(back, model);
    let bits = |m: &TrainedModel| m.flow.flat_params().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&back), bits(&model));

    let mut bad = buf.clone();
    bad[0] = b'X';
    assert!(matches!(read_model(bad.as_slice()), Err(TrainError::CorruptFile(_))));
    let mut future = buf.clone();
    future[4..6].copy_from_slice(&(FORMAT_VERSION + 1).to_le_bytes());
    assert_eq!(
        read_model(future.as_slice()).unwrap_err(),
        TrainError::VersionMismatch { found: FORMAT_VERSION + 1, expected: FORMAT_VERSION }
    );
    assert!(matches!(read_model(&buf[..buf.len() - 3]), Err(TrainError::CorruptFile(_))));

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.cgnf");
    save_model(&model, &path).unwrap();
    assert_eq!(load_model(&path).unwrap(), model);
}
