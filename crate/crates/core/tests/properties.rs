use std::collections::BTreeSet;

use cgnf::counterfactual::{assign_strategy, PotentialOutcomes, StrategyKind, TreatmentStrategy};
use cgnf::dag::{parse_dag, CausalDag};
use cgnf::flow::{FlowConfig, FlowModel};
use cgnf::numeric::Tensor;
use cgnf::trainer::{quantize_one, split};
use proptest::prelude::*;

/// Random DAG: edges only go from lower to higher positions of a random permutation.
fn arb_dag() -> impl Strategy<Value = CausalDag> {
    (1usize..8)
        .prop_flat_map(|n| {
            let pairs = n * (n - 1) / 2;
            (Just(n), Just((0..n).collect::<Vec<_>>()).prop_shuffle(), prop::collection::vec(any::<bool>(), pairs))
        })
        .prop_map(|(n, perm, bits)| {
            let names: Vec<String> = (0..n).map(|i| format!("V{i}")).collect();
            let mut edges = Vec::new();
            let mut k = 0;
            for a in 0..n {
                for b in a + 1..n {
                    if bits[k] {
                        edges.push((perm[a], perm[b]));
                    }
                    k += 1;
                }
            }
            CausalDag::from_edges(names, &edges).unwrap()
        })
}

fn edge_set(dag: &CausalDag) -> BTreeSet<(String, String)> {
    dag.edges().into_iter().map(|(p, c)| (dag.name(p).to_string(), dag.name(c).to_string())).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn canonical_text_is_a_fixed_point(dag in arb_dag()) {
        let text = dag.to_canonical();
        let back = parse_dag(&text).unwrap();
        prop_assert_eq!(back.to_canonical(), text);
        prop_assert_eq!(edge_set(&back), edge_set(&dag));
    }

    #[test]
    fn topological_order_respects_edges(dag in arb_dag()) {
        let order = dag.topo_order();
        let mut pos = vec![0; dag.len()];
        for (k, &i) in order.iter().enumerate() {
            pos[i] = k;
        }
        prop_assert_eq!(order.iter().collect::<BTreeSet<_>>().len(), dag.len());
        for (p, c) in dag.edges() {
            prop_assert!(pos[p] < pos[c]);
        }
    }

    #[test]
    fn mutilation_removes_exactly_incoming_edges(dag in arb_dag(), pick in any::<prop::sample::Index>()) {
        let target = pick.index(dag.len());
        let cut = dag.mutilate(dag.name(target)).unwrap();
        let expected: BTreeSet<_> = dag.edges().into_iter().filter(|&(_, c)| c != target).collect();
        prop_assert_eq!(cut.edges().into_iter().collect::<BTreeSet<_>>(), expected);
        prop_assert!(cut.parent_indices(target).is_empty());
    }

    #[test]
    fn split_partitions_rows(n in 1usize..2000, val in 0.01f64..0.3, test in 0.01f64..0.3, seed in any::<u64>()) {
        let fractions = [1.0 - val - test, val, test];
        let s = split(n, fractions, seed).unwrap();
        prop_assert_eq!(s.validation.len(), (n as f64 * val).round() as usize);
        prop_assert_eq!(s.test.len(), (n as f64 * test).round() as usize);
        let all: BTreeSet<usize> = s.train.iter().chain(&s.validation).chain(&s.test).copied().collect();
        prop_assert_eq!(all.len(), n);
        prop_assert_eq!(s.train.len() + s.validation.len() + s.test.len(), n);
        prop_assert_eq!(split(n, fractions, seed).unwrap(), s);
    }

    #[test]
    fn quantization_recovers_level(levels in 1usize..50, pick in any::<prop::sample::Index>(), noise in -0.499f64..0.499) {
        let k = pick.index(levels);
        prop_assert_eq!(quantize_one(k as f64 + noise, levels).unwrap(), k);
    }

    #[test]
    fn quantization_stays_in_range(levels in 1usize..50, v in -1e6f64..1e6) {
        prop_assert!(quantize_one(v, levels).unwrap() < levels);
    }

    #[test]
    fn individual_strategy_dominates(
        units in prop::collection::vec((0u8..8, 0u8..8, any::<bool>(), 0i64..4), 1..200),
        eps in 0.0f64..1.0,
    ) {
        let po = PotentialOutcomes {
            a1: 1.0,
            a0: 0.0,
            y1: units.iter().map(|u| u.0 as f64).collect(),
            y0: units.iter().map(|u| u.1 as f64).collect(),
            observed_treatment: units.iter().map(|u| if u.2 { 1.0 } else { 0.0 }).collect(),
            observed_outcome: units.iter().map(|u| if u.2 { u.0 as f64 } else { u.1 as f64 }).collect(),
            groups: Some(units.iter().map(|u| u.3).collect()),
        };
        let mean_of = |kind: StrategyKind| {
            let chosen = assign_strategy(&po, TreatmentStrategy::new(kind).with_epsilon(eps)).unwrap();
            let a = chosen.advisability;
            assert!((a.encouraged + a.discouraged + a.neutral - 100.0).abs() < 1e-9);
            let total: f64 = chosen
                .assignments
                .iter()
                .enumerate()
                .map(|(r, s)| if s.treatment == 1.0 { po.y1[r] } else { po.y0[r] })
                .sum();
            total / po.len() as f64
        };
        let tsi = mean_of(StrategyKind::TSI);
        for other in [StrategyKind::TS0, StrategyKind::TS1, StrategyKind::TSOb, StrategyKind::TSC] {
            prop_assert!(tsi <= mean_of(other) + eps + 1e-12);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn flow_round_trip(seed in 0u64..1000, x in prop::collection::vec(-4.0f64..4.0, 4)) {
        let dag = parse_dag("O; C; A; Y; C->A; C->Y; A->Y; O->Y").unwrap();
        let config = FlowConfig { conditioner_hidden: vec![8], transformer_hidden: vec![8], ..FlowConfig::default() };
        let model = FlowModel::new(dag, config, seed);
        let (z, _) = model.transform_batch(&Tensor::row(x.clone())).unwrap();
        let back = model.inverse_batch(&z, &[]).unwrap();
        for (a, b) in back.data().iter().zip(&x) {
            prop_assert!((a - b).abs() < 1e-6);
        }
    }
}
