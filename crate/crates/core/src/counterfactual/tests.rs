use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::dag::{parse_dag, CausalDag};
use crate::flow::{FlowConfig, FlowModel};
use crate::trainer::{ColumnKind, TrainConfig};

const GROUPED: &str = "G; C; A; Y; G->A; C->A; A->Y; C->Y; G->Y";

fn small() -> FlowConfig {
    FlowConfig { conditioner_hidden: vec![8, 6], transformer_hidden: vec![6, 4], context_width: 3, ..FlowConfig::default() }
}

fn column(name: &str, kind: ColumnKind, role: NodeRole, group_key: bool) -> ColumnSpec {
    ColumnSpec { name: name.into(), kind, role, group_key }
}

fn grouped_columns() -> Vec<ColumnSpec> {
    vec![
        column("G", ColumnKind::Discrete { cardinality: 3 }, NodeRole::Confounder, true),
        column("C", ColumnKind::Continuous, NodeRole::Confounder, false),
        column("A", ColumnKind::Discrete { cardinality: 2 }, NodeRole::Treatment, false),
        column("Y", ColumnKind::Discrete { cardinality: 8 }, NodeRole::Outcome, false),
    ]
}

fn wrap(flow: FlowModel, columns: Vec<ColumnSpec>) -> TrainedModel {
    TrainedModel {
        flow,
        columns,
        config: TrainConfig::default(),
        train_nll: 0.0,
        validation_nll: 0.0,
        test_nll: 0.0,
        best_epoch: 0,
        history: Vec::new(),
    }
}

fn grouped_model(seed: u64) -> TrainedModel {
    wrap(FlowModel::new(parse_dag(GROUPED).unwrap(), small(), seed), grouped_columns())
}

/// Units whose treatment is constant within each group.
fn grouped_units(n: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let group_treatment = [0.0, 1.0, 1.0];
    let mut v = Vec::with_capacity(n * 4);
    for _ in 0..n {
        let g = rng.random_range(0..3usize);
        v.extend([g as f64, rng.random_range(-2.0..2.0), group_treatment[g], rng.random_range(0..8usize) as f64]);
    }
    Dataset::new(grouped_columns(), Tensor::from_vec(&[n, 4], v).unwrap()).unwrap()
}

fn continuous_model(dag: &str, seed: u64) -> (TrainedModel, CausalDag) {
    let dag = parse_dag(dag).unwrap();
    let columns = dag
        .nodes()
        .iter()
        .map(|n| {
            let role = match n.as_str() {
                "A" => NodeRole::Treatment,
                "Y" => NodeRole::Outcome,
                _ => NodeRole::Plain,
            };
            column(n, ColumnKind::Continuous, role, false)
        })
        .collect();
    (wrap(FlowModel::new(dag.clone(), small(), seed), columns), dag)
}

fn random_units(model: &TrainedModel, n: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = model.columns.len();
    let v = (0..n * d).map(|_| rng.random_range(-2.0..2.0)).collect();
    Dataset::new(model.columns.clone(), Tensor::from_vec(&[n, d], v).unwrap()).unwrap()
}

#[test]
fn identity_model_abducts_to_itself() {
    let dag = parse_dag("O; C; A; Y; C->A; C->Y; A->Y; O->Y").unwrap();
    let (template, _) = continuous_model("O; C; A; Y; C->A; C->Y; A->Y; O->Y", 0);
    let model = wrap(FlowModel::constant_slope(dag, small(), 1.0), template.columns);
    let engine = Engine::new(&model).unwrap();
    let x = Tensor::from_vec(&[2, 4], vec![0.5, -1.0, 2.0, 3.5, 0.0, 1.0, -0.25, 4.0]).unwrap();
    assert!(engine.abduct(&x).unwrap().max_abs_diff(&x) < 1e-12);
}

#[test]
fn abduction_round_trips_and_is_injective() {
    let (model, _) = continuous_model("O; C; A; Y; C->A; C->Y; A->Y; O->Y", 4);
    let engine = Engine::new(&model).unwrap();
    let units = random_units(&model, 100, 5);
    let z = engine.abduct(units.values()).unwrap();
    let back = model.flow.inverse_batch(&z, &[]).unwrap();
    assert!(back.max_abs_diff(units.values()) < 1e-6);
    for r in 0..99 {
        assert_ne!(z.row_slice(r), z.row_slice(r + 1));
    }
}

#[test]
fn observed_treatment_reproduces_observed_outcome() {
    for seed in 0..3 {
        let model = grouped_model(seed);
        let engine = Engine::new(&model).unwrap();
        let units = grouped_units(300, seed + 10);
        let treatments = units.column(2);
        let ys = engine.counterfactual_outcomes(units.values(), &treatments).unwrap();
        assert_eq!(ys, units.column(3));
    }
    let (model, _) = continuous_model("O; C; A; Y; C->A; C->Y; A->Y; O->Y", 8);
    let engine = Engine::new(&model).unwrap();
    let units = random_units(&model, 200, 9);
    let ys = engine.counterfactual_outcomes(units.values(), &units.column(2)).unwrap();
    for (y, obs) in ys.iter().zip(units.column(3)) {
        assert!((y - obs).abs() < 1e-6);
    }
}

#[test]
fn treatment_without_path_to_outcome_has_no_effect() {
    let (model, _) = continuous_model("C; A; Y; C->A; C->Y", 2);
    let engine = Engine::new(&model).unwrap();
    let units = random_units(&model, 50, 3);
    let po = engine.potential_outcomes(&units, 1.0, 0.0).unwrap();
    assert_eq!(po.y1, po.y0);
    let ace = engine.estimate_ace(&units, 1.0, 0.0, AceMode::Abduction).unwrap();
    assert_eq!(ace.estimate, 0.0);
}

#[test]
fn edgeless_identity_model_leaves_outcome_unchanged() {
    let dag = parse_dag("A; Y").unwrap();
    let columns = vec![
        column("A", ColumnKind::Continuous, NodeRole::Treatment, false),
        column("Y", ColumnKind::Continuous, NodeRole::Outcome, false),
    ];
    let model = wrap(FlowModel::constant_slope(dag, small(), 1.0), columns);
    let engine = Engine::new(&model).unwrap();
    for a in [-3.0, 0.0, 1.0, 10.0] {
        assert_eq!(engine.counterfactual_outcome(&[0.3, 1.7], a).unwrap(), 1.7);
    }
}

#[test]
fn non_descendants_are_bit_identical_across_clamps() {
    let (model, dag) = continuous_model("O; C; A; Y; C->A; C->Y; A->Y; O->Y", 6);
    let engine = Engine::new(&model).unwrap();
    let units = random_units(&model, 64, 7);
    let z = engine.abduct(units.values()).unwrap();
    let x0 = engine.predict_under(&z, 0.0).unwrap();
    let x1 = engine.predict_under(&z, 1.0).unwrap();
    for name in ["O", "C"] {
        let j = dag.index_of(name).unwrap();
        for r in 0..64 {
            assert_eq!(x0.get(r, j).to_bits(), x1.get(r, j).to_bits());
        }
    }
    let a = dag.index_of("A").unwrap();
    assert!((0..64).all(|r| x0.get(r, a) == 0.0 && x1.get(r, a) == 1.0));
}

#[test]
fn thresholded_effect_examples() {
    assert_eq!(thresholded(2.0, 7.0, 1.0), 0.0);
    assert_eq!(thresholded(1.0, 2.0, 1.0), -1.0);
    assert_eq!(thresholded(3.0, 3.0, 1.0), 0.0);
    let po = PotentialOutcomes {
        a1: 1.0,
        a0: 0.0,
        y1: vec![2.0, 1.0],
        y0: vec![7.0, 2.0],
        observed_treatment: vec![0.0, 0.0],
        observed_outcome: vec![7.0, 2.0],
        groups: None,
    };
    assert_eq!(po.ice(), vec![-5.0, -1.0]);
    assert_eq!(po.thresholded_ice(1.0), vec![0.0, -1.0]);
}

#[test]
fn equal_treatments_give_zero_effects() {
    let model = grouped_model(1);
    let engine = Engine::new(&model).unwrap();
    let units = grouped_units(40, 2);
    for thr in [None, Some(1.0)] {
        assert_eq!(engine.estimate_ice(units.row(0), 1.0, 1.0, thr).unwrap().estimate, 0.0);
    }
    assert_eq!(engine.estimate_ace(&units, 0.0, 0.0, AceMode::Abduction).unwrap().estimate, 0.0);
    let ivs = engine.estimate_ace(&units, 1.0, 1.0, AceMode::Interventional { draws: 50, seed: 3 }).unwrap();
    assert_eq!(ivs.estimate, 0.0);
}

#[test]
fn ace_is_mean_of_ice_and_cace_partitions_it() {
    let model = grouped_model(3);
    let engine = Engine::new(&model).unwrap();
    let units = grouped_units(120, 4);
    let ace = engine.estimate_ace(&units, 1.0, 0.0, AceMode::Abduction).unwrap();
    let ices: Vec<f64> = (0..units.len()).map(|r| engine.estimate_ice(units.row(r), 1.0, 0.0, None).unwrap().estimate).collect();
    assert_eq!(ace.estimate, ices.iter().sum::<f64>() / ices.len() as f64);
    assert_eq!(ace.n_units, 120);

    let cace = engine.estimate_cace(&units, 1.0, 0.0).unwrap();
    let weighted: f64 = cace.values().map(|e| e.estimate * e.n_units as f64).sum::<f64>() / 120.0;
    assert!((weighted - ace.estimate).abs() < 1e-12);
    assert_eq!(cace.values().map(|e| e.n_units).sum::<usize>(), 120);
}

#[test]
fn cace_edge_cases() {
    let model = grouped_model(5);
    let engine = Engine::new(&model).unwrap();
    let mut units = grouped_units(30, 6);
    // put everyone in group 1 except a single unit in group 2
    let mut values = units.values().clone();
    for r in 0..30 {
        values.set(r, 0, if r == 0 { 2.0 } else { 1.0 });
        values.set(r, 2, 1.0);
    }
    units = Dataset::new(grouped_columns(), values).unwrap();
    let cace = engine.estimate_cace(&units, 1.0, 0.0).unwrap();
    assert_eq!(cace.keys().copied().collect::<Vec<_>>(), vec![1, 2]);
    assert_eq!(cace[&2].std_error, None);
    assert!(cace[&1].std_error.is_some());

    let single = units.select(&(1..30).collect::<Vec<_>>());
    let cace = engine.estimate_cace(&single, 1.0, 0.0).unwrap();
    let ace = engine.estimate_ace(&single, 1.0, 0.0, AceMode::Abduction).unwrap();
    assert_eq!(cace.len(), 1);
    assert_eq!(cace[&1], ace);
}

#[test]
fn missing_roles_and_groups_are_reported() {
    let (model, _) = continuous_model("C; B; C->B", 0);
    assert_eq!(Engine::new(&model).unwrap_err(), CounterfactualError::MissingRole("treatment"));
    let (model, _) = continuous_model("O; C; A; Y; C->A; C->Y; A->Y; O->Y", 0);
    let engine = Engine::new(&model).unwrap();
    let units = random_units(&model, 5, 0);
    assert_eq!(engine.estimate_cace(&units, 1.0, 0.0).unwrap_err(), CounterfactualError::MissingGroupKey);
    assert_eq!(engine.estimate_ace(&units.select(&[]), 1.0, 0.0, AceMode::Abduction).unwrap_err(), CounterfactualError::EmptyUnits);
    assert!(matches!(engine.counterfactual_outcome(units.row(0), f64::NAN), Err(CounterfactualError::InvalidTreatment(_))));
}

fn table(y1: Vec<f64>, y0: Vec<f64>, observed: Vec<f64>, groups: Option<Vec<i64>>) -> PotentialOutcomes {
    let observed_outcome = observed.iter().zip(y1.iter().zip(&y0)).map(|(&t, (&a, &b))| if t == 1.0 { a } else { b }).collect();
    PotentialOutcomes { a1: 1.0, a0: 0.0, y1, y0, observed_treatment: observed, observed_outcome, groups }
}

#[test]
fn zero_effects_are_all_neutral() {
    let po = table(vec![3.0; 4], vec![3.0; 4], vec![0.0, 1.0, 0.0, 1.0], Some(vec![0, 0, 1, 1]));
    for kind in [StrategyKind::TSC, StrategyKind::TSI, StrategyKind::TSIt] {
        let s = assign_strategy(&po, TreatmentStrategy::new(kind)).unwrap();
        assert_eq!(s.advisability.neutral, 100.0);
        let resolved: Vec<f64> = s.assignments.iter().map(|a| a.treatment).collect();
        assert_eq!(resolved, po.observed_treatment);
    }
}

#[test]
fn signs_of_effects_drive_decisions() {
    let po = table(vec![0.0, 9.0], vec![5.0, 4.0], vec![0.0, 0.0], None);
    let s = assign_strategy(&po, TreatmentStrategy::new(StrategyKind::TSI).with_epsilon(0.1)).unwrap();
    assert_eq!(s.assignments[0].decision, Decision::Encourage);
    assert_eq!(s.assignments[1].decision, Decision::Discourage);
    let higher = TreatmentStrategy { lower_is_better: false, ..TreatmentStrategy::new(StrategyKind::TSI) };
    let s = assign_strategy(&po, higher).unwrap();
    assert_eq!(s.assignments[0].decision, Decision::Discourage);
}

#[test]
fn large_improvement_within_poor_band_is_neutral_when_thresholded() {
    let po = table(vec![2.0], vec![7.0], vec![0.0], None);
    let tsi = assign_strategy(&po, TreatmentStrategy::new(StrategyKind::TSI)).unwrap();
    let tsit = assign_strategy(&po, TreatmentStrategy::new(StrategyKind::TSIt)).unwrap();
    assert_eq!(tsi.assignments[0].decision, Decision::Encourage);
    assert_eq!(tsit.assignments[0].decision, Decision::Neutral);
}

#[test]
fn fixed_strategies_and_prerequisites() {
    let po = table(vec![1.0, 2.0, 3.0], vec![0.0, 0.0, 0.0], vec![0.0, 1.0, 1.0], None);
    let ts0 = assign_strategy(&po, TreatmentStrategy::new(StrategyKind::TS0)).unwrap();
    let ts1 = assign_strategy(&po, TreatmentStrategy::new(StrategyKind::TS1)).unwrap();
    assert_eq!(ts0.advisability, Advisability { encouraged: 0.0, discouraged: 100.0, neutral: 0.0 });
    assert_eq!(ts1.advisability, Advisability { encouraged: 100.0, discouraged: 0.0, neutral: 0.0 });
    assert!(ts1.assignments.iter().all(|a| a.treatment == 1.0));
    let ob = assign_strategy(&po, TreatmentStrategy::new(StrategyKind::TSOb)).unwrap();
    assert_eq!(ob.assignments.iter().map(|a| a.treatment).collect::<Vec<_>>(), po.observed_treatment);
    assert_eq!(
        assign_strategy(&po, TreatmentStrategy::new(StrategyKind::TSC)).unwrap_err(),
        CounterfactualError::MissingGroupKey
    );
    let mut odd = po.clone();
    odd.observed_treatment[0] = 0.5;
    assert_eq!(
        assign_strategy(&odd, TreatmentStrategy::new(StrategyKind::TSOb)).unwrap_err(),
        CounterfactualError::MissingObservedTreatment
    );
    let negative = TreatmentStrategy::new(StrategyKind::TSI).with_epsilon(-1.0);
    assert!(matches!(assign_strategy(&po, negative), Err(CounterfactualError::InvalidStrategy(_))));
    assert_eq!("tsit".parse::<StrategyKind>().unwrap(), StrategyKind::TSIt);
}

#[test]
fn observed_strategy_reproduces_observed_histogram() {
    let model = grouped_model(7);
    let engine = Engine::new(&model).unwrap();
    let units = grouped_units(200, 8);
    let po = engine.potential_outcomes(&units, 1.0, 0.0).unwrap();
    let ob = assign_strategy(&po, TreatmentStrategy::new(StrategyKind::TSOb)).unwrap();
    let out = evaluate_strategy(&engine, &units, &po, &ob.assignments).unwrap();
    let mut observed = vec![0; 8];
    for y in units.column(3) {
        observed[y as usize] += 1;
    }
    assert_eq!(out.histogram.unwrap(), observed);
    assert_eq!(out.outcomes, units.column(3));
}

#[test]
fn finer_strategies_dominate_under_the_model() {
    for seed in 0..4 {
        let model = grouped_model(20 + seed);
        let engine = Engine::new(&model).unwrap();
        let units = grouped_units(150, 30 + seed);
        let po = engine.potential_outcomes(&units, 1.0, 0.0).unwrap();
        let eps = 0.05;
        let mean = |kind| {
            let s = assign_strategy(&po, TreatmentStrategy::new(kind).with_epsilon(eps)).unwrap();
            let out = evaluate_strategy(&engine, &units, &po, &s.assignments).unwrap();
            assert_eq!(out.histogram.as_ref().unwrap().iter().sum::<usize>(), 150);
            out.mean
        };
        let (tsi, tsc, ts0, ts1) = (mean(StrategyKind::TSI), mean(StrategyKind::TSC), mean(StrategyKind::TS0), mean(StrategyKind::TS1));
        assert!(tsi <= tsc + eps, "seed {seed}: {tsi} {tsc}");
        assert!(tsc <= ts0.min(ts1) + eps, "seed {seed}: {tsc} {ts0} {ts1}");
    }
}

#[test]
fn non_binary_treatments_are_evaluated_directly() {
    let model = grouped_model(9);
    let engine = Engine::new(&model).unwrap();
    let units = grouped_units(10, 1);
    let po = engine.potential_outcomes(&units, 1.0, 0.0).unwrap();
    let assignments: Vec<Assignment> =
        (0..10).map(|_| Assignment { decision: Decision::Neutral, treatment: 0.5 }).collect();
    let out = evaluate_strategy(&engine, &units, &po, &assignments).unwrap();
    let direct = engine.counterfactual_outcomes(units.values(), &[0.5; 10]).unwrap();
    assert_eq!(out.outcomes, direct);
    assert_eq!(out.group_means.values().count(), units.groups().unwrap().iter().collect::<std::collections::BTreeSet<_>>().len());
}
