//! Plug-in backdoor adjustment over the parents of the treatment.

use std::collections::BTreeMap;

use super::SynthError;
use crate::counterfactual::EffectEstimate;
use crate::dag::{CausalDag, NodeRole};
use crate::trainer::Dataset;

#[derive(Default)]
struct Cell {
    n: usize,
    sum: f64,
}

impl Cell {
    fn mean(&self) -> f64 {
        self.sum / self.n as f64
    }
}

/// `sum_c P(c) (E[Y | a1, c] - E[Y | a0, c])` with `c` ranging over the
/// joint values of the treatment's parents. The standard error comes from
/// the estimator's influence function.
pub fn backdoor_ace(data: &Dataset, dag: &CausalDag, a1: f64, a0: f64) -> Result<EffectEstimate, SynthError> {
    data.check_against(dag)?;
    let a = data.role_index(NodeRole::Treatment).ok_or(SynthError::MissingRole("treatment"))?;
    let y = data.role_index(NodeRole::Outcome).ok_or(SynthError::MissingRole("outcome"))?;
    let n = data.len();
    if n == 0 {
        return Err(SynthError::EmptySample);
    }
    let adjust = dag.parent_indices(a);
    for &c in &adjust {
        if data.columns()[c].kind.cardinality().is_none() {
            return Err(SynthError::NonDiscreteAdjustment(data.columns()[c].name.clone()));
        }
    }
    if a1 == a0 {
        return Ok(EffectEstimate { estimate: 0.0, std_error: Some(0.0), n_units: n, n_noise_draws: 0, seed: None });
    }
    let stratum_of = |r: usize| adjust.iter().map(|&c| data.row(r)[c] as i64).collect::<Vec<i64>>();
    // per stratum: (count, treated cell, control cell)
    let mut strata: BTreeMap<Vec<i64>, (usize, Cell, Cell)> = BTreeMap::new();
    for r in 0..n {
        let row = data.row(r);
        let entry = strata.entry(stratum_of(r)).or_default();
        entry.0 += 1;
        let cell = if row[a] == a1 {
            Some(&mut entry.1)
        } else if row[a] == a0 {
            Some(&mut entry.2)
        } else {
            None
        };
        if let Some(cell) = cell {
            cell.n += 1;
            cell.sum += row[y];
        }
    }
    let describe = |key: &[i64]| {
        if key.is_empty() {
            "(all units)".to_string()
        } else {
            adjust.iter().zip(key).map(|(&c, v)| format!("{}={v}", dag.name(c))).collect::<Vec<_>>().join(", ")
        }
    };
    let mut effect = BTreeMap::new();
    let mut ace = 0.0;
    for (key, (count, treated, control)) in &strata {
        for (cell, t) in [(treated, a1), (control, a0)] {
            if cell.n == 0 {
                return Err(SynthError::PositivityViolation { stratum: describe(key), treatment: t });
            }
        }
        let tau = treated.mean() - control.mean();
        ace += *count as f64 / n as f64 * tau;
        effect.insert(key.clone(), tau);
    }
    let mut psi_sq = 0.0;
    for r in 0..n {
        let key = stratum_of(r);
        let (count, treated, control) = &strata[&key];
        let row = data.row(r);
        let mut psi = effect[&key] - ace;
        if row[a] == a1 {
            psi += (row[y] - treated.mean()) * *count as f64 / treated.n as f64;
        } else if row[a] == a0 {
            psi -= (row[y] - control.mean()) * *count as f64 / control.n as f64;
        }
        psi_sq += psi * psi;
    }
    Ok(EffectEstimate {
        estimate: ace,
        std_error: Some(psi_sq.sqrt() / n as f64),
        n_units: n,
        n_noise_draws: 0,
        seed: None,
    })
}
