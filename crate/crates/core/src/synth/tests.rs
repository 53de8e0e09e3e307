use super::*;

fn col(data: &Dataset, name: &str) -> Vec<f64> {
    data.column(data.column_index(name).unwrap())
}

#[test]
fn fixtures_parse_with_expected_graphs() {
    for name in fixtures::NAMES {
        fixtures::load(name).unwrap_or_else(|e| panic!("{name}: {e}"));
    }
    let scm = fixtures::load("linear_gaussian").unwrap();
    assert_eq!(scm.dag().to_canonical(), parse_dag_text("O; C; A; Y; C->A; A->Y; C->Y; O->Y"));
    let cols = scm.columns();
    assert_eq!(cols[2].role, NodeRole::Treatment);
    assert_eq!(cols[3].role, NodeRole::Outcome);
    assert_eq!(cols[1].role, NodeRole::Confounder);
    let poverty = fixtures::load("poverty").unwrap();
    assert_eq!(poverty.group(), Some(0));
    assert_eq!(poverty.columns()[3].kind, ColumnKind::Discrete { cardinality: 8 });
}

fn parse_dag_text(text: &str) -> String {
    crate::dag::parse_dag(text).unwrap().to_canonical()
}

#[test]
fn display_round_trips() {
    for name in fixtures::NAMES {
        let scm = fixtures::load(name).unwrap();
        assert_eq!(SyntheticScm::parse(&scm.to_string()).unwrap(), scm, "{name}");
    }
}

#[test]
fn parse_errors() {
    let cases = [
        "X [continuous] := X + 1",
        "X [continuous] := Z",
        "X [ordinal] := 1",
        "X [discrete 1] := 0",
        "X [continuous] ~ normal(0, -1) := U",
        "X [continuous] ~ poisson(1) := U",
        "X [continuous] ~ categorical(0.5, 0.6) := U",
        "U [continuous] := 1",
        "X [continuous] := 1\nfrobnicate X",
        "X [continuous] := 1\ngroup X",
        "X [continuous] := 1\ntreatment Q",
        "",
    ];
    for text in cases {
        assert!(SyntheticScm::parse(text).is_err(), "{text}");
    }
    let cyclic = "X [continuous] := Y\nY [continuous] := X";
    assert!(matches!(SyntheticScm::parse(cyclic), Err(SynthError::Dag(DagError::CycleDetected(_)))));
}

#[test]
fn seeded_chain_sample_is_deterministic() {
    let scm = SyntheticScm::parse("C [continuous] ~ normal(0, 1) := U\nA [continuous] ~ normal(0, 1) := C + U\nY [continuous] ~ normal(0, 1) := A + U").unwrap();
    let a = scm.sample_with_noise(3, 42, &[]).unwrap();
    let b = scm.sample_with_noise(3, 42, &[]).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.data.len(), 3);
    for r in 0..3 {
        let (u, x) = (a.noise.row_slice(r), a.data.row(r));
        assert_eq!(x, &[u[0], u[0] + u[1], u[0] + u[1] + u[2]]);
    }
    assert_ne!(scm.sample(3, 43).unwrap(), a.data);
    assert_eq!(scm.sample(0, 1), Err(SynthError::EmptySample));
}

#[test]
fn linear_gaussian_covariance_matches_closed_form() {
    let scm = SyntheticScm::parse(
        "O [continuous] ~ normal(0, 0.6) := U
         C [continuous] ~ normal(0, 0.7) := U
         A [continuous] ~ normal(0, 0.5) := 0.5*C + U
         Y [continuous] ~ normal(0, 0.4) := 0.8*A + 0.5*C - 0.5*O + U",
    )
    .unwrap();
    // hand-derived: O, C independent; A = 0.5C + Ua; Y = 0.8A + 0.5C - 0.5O + Uy
    let (vo, vc, va_u, vy_u) = (0.36, 0.49, 0.25, 0.16);
    let va = 0.25 * vc + va_u;
    let cac = 0.5 * vc;
    let cyo = -0.5 * vo;
    let cyc = 0.8 * cac + 0.5 * vc;
    let cya = 0.8 * va + 0.5 * cac;
    let vy = 0.64 * va + 0.25 * vc + 0.25 * vo + 2.0 * 0.8 * 0.5 * cac + vy_u;
    let expected = [[vo, 0.0, 0.0, cyo], [0.0, vc, cac, cyc], [0.0, cac, va, cya], [cyo, cyc, cya, vy]];
    let analytic = scm.linear_covariance().unwrap();
    for i in 0..4 {
        for j in 0..4 {
            assert!((analytic.get(i, j) - expected[i][j]).abs() < 1e-12);
        }
    }
    let n = 100_000;
    let data = scm.sample(n, 7).unwrap();
    let cols: Vec<Vec<f64>> = (0..4).map(|j| data.column(j)).collect();
    let means: Vec<f64> = cols.iter().map(|c| c.iter().sum::<f64>() / n as f64).collect();
    for i in 0..4 {
        for j in 0..4 {
            let s: f64 = (0..n).map(|r| (cols[i][r] - means[i]) * (cols[j][r] - means[j])).sum::<f64>() / (n - 1) as f64;
            assert!((s - expected[i][j]).abs() < 0.02, "({i}, {j}): {s} vs {}", expected[i][j]);
        }
    }
}

#[test]
fn binary_joint_frequencies_match_enumeration() {
    let scm = fixtures::load("binary").unwrap();
    // hand enumeration: C ~ B(0.4), A = C xor Ua with Ua ~ B(0.3), Y = max(A C, Uy) with Uy ~ B(0.2)
    let mut expected = BTreeMap::new();
    for c in 0..2i64 {
        for ua in 0..2i64 {
            for uy in 0..2i64 {
                let p = [0.6, 0.4][c as usize] * [0.7, 0.3][ua as usize] * [0.8, 0.2][uy as usize];
                let a = (c - ua).abs();
                let y = (a * c).max(uy);
                *expected.entry(vec![c, a, y]).or_insert(0.0) += p;
            }
        }
    }
    let joint = scm.joint_distribution().unwrap();
    assert_eq!(joint.len(), expected.len());
    for (k, p) in &expected {
        assert!((joint[k] - p).abs() < 1e-12);
    }
    let n = 100_000;
    let data = scm.sample(n, 11).unwrap();
    let mut counts: BTreeMap<Vec<i64>, usize> = BTreeMap::new();
    for r in 0..n {
        *counts.entry(data.row(r).iter().map(|&v| v as i64).collect()).or_default() += 1;
    }
    for (k, p) in &expected {
        let f = counts.get(k).copied().unwrap_or(0) as f64 / n as f64;
        assert!((f - p).abs() < 0.01, "{k:?}: {f} vs {p}");
    }
    assert!(fixtures::load("linear_gaussian").unwrap().joint_distribution().is_err());
}

#[test]
fn oracle_reference_values() {
    let lin = oracle_effects(&fixtures::load("linear_gaussian").unwrap(), 1.0, 0.0).unwrap();
    assert_eq!(lin.method, OracleMethod::ClosedForm);
    assert_eq!(lin.ace, 2.0);
    let disc = oracle_effects(&fixtures::load("linear_discrete").unwrap(), 1.0, 0.0).unwrap();
    assert_eq!(disc.ace, 2.0);

    let inter = oracle_effects(&fixtures::load("interaction").unwrap(), 1.0, 0.0).unwrap();
    assert!(matches!(inter.method, OracleMethod::Enumeration { .. }));
    assert!((inter.ace - 0.5).abs() < 1e-12);
    assert_eq!(inter.cace[&0].effect, 0.0);
    assert_eq!(inter.cace[&1].effect, 1.0);

    let none = SyntheticScm::parse("treatment A\noutcome Y\nA [continuous] ~ normal(0, 1) := U\nY [continuous] ~ normal(0, 1) := U*U")
        .unwrap();
    let e = oracle_effects(&none, 1.0, 0.0).unwrap();
    assert_eq!(e.ace, 0.0);
    assert_eq!(none.unit_ice(&[0.3, 1.2], 1.0, 0.0).unwrap(), 0.0);
}

#[test]
fn poverty_fixture_has_large_drops_and_no_neutral_country() {
    let scm = fixtures::load("poverty").unwrap();
    // G = 0, S = 7, Uy = 1: degree 7 without the program, 2 with it
    let noise = [0.0, 7.0, 0.5, 1.0];
    let mut v = [0.0; 4];
    scm.evaluate(&noise, &[(2, 0.0)], &mut v);
    assert_eq!(v[3], 7.0);
    scm.evaluate(&noise, &[(2, 1.0)], &mut v);
    assert_eq!(v[3], 2.0);
    let oracle = oracle_effects(&scm, 1.0, 0.0).unwrap();
    assert!(matches!(oracle.method, OracleMethod::Enumeration { states: 96 }));
    assert_eq!(oracle.cace.len(), 4);
    assert!(oracle.cace.values().all(|g| g.effect.abs() > 0.1));
    assert!(oracle.cace[&2].effect > 0.0 && oracle.cace[&0].effect < 0.0);
}

#[test]
fn oracles_agree_across_methods() {
    for name in fixtures::NAMES {
        let scm = fixtures::load(name).unwrap();
        let mc = oracle_effects_with(&scm, 1.0, 0.0, OracleMethod::MonteCarlo { draws: 1_000_000, seed: 3 }).unwrap();
        let mut exact_found = false;
        for method in [OracleMethod::ClosedForm, OracleMethod::Enumeration { states: 0 }] {
            let Ok(exact) = oracle_effects_with(&scm, 1.0, 0.0, method) else { continue };
            exact_found = true;
            let tol = (3.0 * mc.ace_std_error).max(1e-9);
            assert!((exact.ace - mc.ace).abs() <= tol, "{name} {method:?}: {} vs {} ± {}", exact.ace, mc.ace, mc.ace_std_error);
            for (g, e) in &exact.cace {
                let Some(m) = mc.cace.get(g) else { continue };
                let tol = (3.0 * m.std_error).max(1e-9);
                assert!((e.effect - m.effect).abs() <= tol, "{name} group {g}: {} vs {}", e.effect, m.effect);
            }
        }
        assert!(exact_found, "{name} has no exact oracle");
    }
}

#[test]
fn intervening_equals_sampling_the_mutilated_model() {
    for name in fixtures::NAMES {
        let scm = fixtures::load(name).unwrap();
        let a = scm.treatment().unwrap();
        for value in [0.0, 1.0] {
            let clamped = scm.sample_with_noise(500, 9, &[(a, value)]).unwrap();
            let mutilated = scm.mutilate(a, value).unwrap();
            assert!(mutilated.dag().parent_indices(a).is_empty());
            let direct = mutilated.sample_with_noise(500, 9, &[]).unwrap();
            assert_eq!(clamped, direct, "{name}");
        }
    }
}

#[test]
fn backdoor_matches_oracle_on_discrete_fixture() {
    let scm = fixtures::load("interaction").unwrap();
    let data = scm.sample(100_000, 21).unwrap();
    let est = backdoor_ace(&data, scm.dag(), 1.0, 0.0).unwrap();
    let oracle = oracle_effects(&scm, 1.0, 0.0).unwrap();
    let se = est.std_error.unwrap();
    assert!(se > 0.0 && se < 0.02);
    assert!((est.estimate - oracle.ace).abs() < 2.0 * se, "{} vs {} (se {se})", est.estimate, oracle.ace);

    let lin = fixtures::load("linear_discrete").unwrap();
    let data = lin.sample(100_000, 22).unwrap();
    let est = backdoor_ace(&data, lin.dag(), 1.0, 0.0).unwrap();
    assert!((est.estimate - 2.0).abs() < 3.0 * est.std_error.unwrap());
    assert_eq!(backdoor_ace(&data, lin.dag(), 1.0, 1.0).unwrap().estimate, 0.0);
}

#[test]
fn randomized_treatment_gives_difference_in_means() {
    let scm = SyntheticScm::parse(
        "treatment A\noutcome Y\nA [discrete 2] ~ bernoulli(0.4) := U\nY [continuous] ~ normal(0, 1) := 1.5*A + U",
    )
    .unwrap();
    let data = scm.sample(5_000, 2).unwrap();
    let (a, y) = (col(&data, "A"), col(&data, "Y"));
    let mean_where = |t: f64| {
        let v: Vec<f64> = a.iter().zip(&y).filter(|(x, _)| **x == t).map(|(_, v)| *v).collect();
        v.iter().sum::<f64>() / v.len() as f64
    };
    let est = backdoor_ace(&data, scm.dag(), 1.0, 0.0).unwrap();
    assert!((est.estimate - (mean_where(1.0) - mean_where(0.0))).abs() < 1e-12);
}

#[test]
fn positivity_violation_names_the_stratum() {
    let scm = SyntheticScm::parse(
        "treatment A\noutcome Y\nC [discrete 3] ~ categorical(0.3, 0.3, 0.4) := U\nA [discrete 2] ~ uniform(0, 1) := (C == 2) + (C < 2)*(U < 0.5)\nY [continuous] ~ normal(0, 1) := A + C + U",
    )
    .unwrap();
    let data = scm.sample(2_000, 5).unwrap();
    match backdoor_ace(&data, scm.dag(), 1.0, 0.0) {
        Err(SynthError::PositivityViolation { stratum, treatment }) => {
            assert_eq!(stratum, "C=2");
            assert_eq!(treatment, 0.0);
        }
        other => panic!("expected positivity violation, got {other:?}"),
    }
    let cont = fixtures::load("linear_gaussian").unwrap();
    let data = cont.sample(100, 1).unwrap();
    assert_eq!(backdoor_ace(&data, cont.dag(), 1.0, 0.0), Err(SynthError::NonDiscreteAdjustment("C".into())));
}
