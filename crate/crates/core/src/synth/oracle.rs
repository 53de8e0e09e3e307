//! Ground-truth effects computed by intervening in the true SCM.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{SynthError, SyntheticScm};
use crate::numeric::Tensor;

/// Draws used by the Monte-Carlo oracle when no exact method applies.
pub const MONTE_CARLO_DRAWS: usize = 1_000_000;
pub const MONTE_CARLO_SEED: u64 = 20_240_601;
const MAX_STATES: usize = 1 << 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum OracleMethod {
    ClosedForm,
    Enumeration { states: usize },
    MonteCarlo { draws: usize, seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupEffect {
    pub effect: f64,
    /// Zero for exact methods.
    pub std_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleEffects {
    pub a1: f64,
    pub a0: f64,
    pub ace: f64,
    pub ace_std_error: f64,
    pub cace: BTreeMap<i64, GroupEffect>,
    pub method: OracleMethod,
}

/// Exact effects where possible, otherwise Monte-Carlo.
pub fn oracle_effects(scm: &SyntheticScm, a1: f64, a0: f64) -> Result<OracleEffects, SynthError> {
    closed_form(scm, a1, a0)
        .or_else(|_| enumeration(scm, a1, a0))
        .or_else(|_| monte_carlo(scm, a1, a0, MONTE_CARLO_DRAWS, MONTE_CARLO_SEED))
}

/// Effects from one specific method; exact methods fail with
/// `UnsupportedMechanism` when their assumptions do not hold.
pub fn oracle_effects_with(scm: &SyntheticScm, a1: f64, a0: f64, method: OracleMethod) -> Result<OracleEffects, SynthError> {
    match method {
        OracleMethod::ClosedForm => closed_form(scm, a1, a0),
        OracleMethod::Enumeration { .. } => enumeration(scm, a1, a0),
        OracleMethod::MonteCarlo { draws, seed } => monte_carlo(scm, a1, a0, draws, seed),
    }
}

impl SyntheticScm {
    /// `Y(a1) - Y(a0)` for one unit's noise vector.
    pub fn unit_ice(&self, noise: &[f64], a1: f64, a0: f64) -> Result<f64, SynthError> {
        let (a, y) = (self.treatment()?, self.outcome()?);
        let mut v = vec![0.0; self.len()];
        self.evaluate(noise, &[(a, a1)], &mut v);
        let y1 = v[y];
        self.evaluate(noise, &[(a, a0)], &mut v);
        Ok(y1 - v[y])
    }

    fn ancestors(&self, of: usize, skip: usize) -> Vec<bool> {
        let mut seen = vec![false; self.len()];
        let mut stack = vec![of];
        seen[of] = true;
        while let Some(v) = stack.pop() {
            if v == skip {
                continue;
            }
            for p in self.dag().parent_indices(v) {
                if !seen[p] {
                    seen[p] = true;
                    stack.push(p);
                }
            }
        }
        seen
    }
}

fn closed_form(scm: &SyntheticScm, a1: f64, a0: f64) -> Result<OracleEffects, SynthError> {
    let (a, y) = (scm.treatment()?, scm.outcome()?);
    let down = scm.dag().descendants(a);
    let up = scm.ancestors(y, a);
    // derivative of every node with respect to the treatment along causal paths
    let mut slope = vec![0.0; scm.len()];
    slope[a] = 1.0;
    for &i in scm.dag().topo_order() {
        if i == a || !down[i] || !up[i] {
            continue;
        }
        let m = &scm.mechanisms()[i];
        let name = scm.dag().name(i);
        if m.kind.cardinality().is_some() {
            return Err(SynthError::UnsupportedMechanism(format!("`{name}` is discretized")));
        }
        let aff = m.expr.affine().ok_or_else(|| SynthError::UnsupportedMechanism(format!("`{name}` is not affine")))?;
        slope[i] = scm.dag().parent_indices(i).iter().map(|&p| aff.coef(Some(p)) * slope[p]).sum();
    }
    let effect = if down[y] { (a1 - a0) * slope[y] } else { 0.0 };
    let cace = match scm.group() {
        Some(g) => {
            let levels = scm.mechanisms()[g].kind.cardinality().unwrap_or(0);
            (0..levels as i64).map(|l| (l, GroupEffect { effect, std_error: 0.0 })).collect()
        }
        None => BTreeMap::new(),
    };
    Ok(OracleEffects { a1, a0, ace: effect, ace_std_error: 0.0, cace, method: OracleMethod::ClosedForm })
}

/// Cartesian product of finite supports, skipping zero-probability states.
pub(super) fn product(supports: &[Vec<(f64, f64)>], limit: usize) -> Result<Vec<(Vec<f64>, f64)>, SynthError> {
    let count = supports.iter().try_fold(1usize, |acc, s| acc.checked_mul(s.len()).filter(|&c| c <= limit));
    if count.is_none() {
        return Err(SynthError::UnsupportedMechanism(format!("more than {limit} joint noise states")));
    }
    let mut states = vec![(Vec::with_capacity(supports.len()), 1.0)];
    for support in supports {
        let mut next = Vec::with_capacity(states.len() * support.len());
        for (prefix, p) in &states {
            for &(v, q) in support {
                if q > 0.0 {
                    let mut s = prefix.clone();
                    s.push(v);
                    next.push((s, p * q));
                }
            }
        }
        states = next;
    }
    Ok(states)
}

fn enumeration(scm: &SyntheticScm, a1: f64, a0: f64) -> Result<OracleEffects, SynthError> {
    let (a, y) = (scm.treatment()?, scm.outcome()?);
    let group = scm.group();
    if let Some(g) = group {
        if scm.dag().descendants(a)[g] {
            return Err(SynthError::UnsupportedMechanism("group key depends on the treatment".into()));
        }
    }
    let mut relevant = scm.ancestors(y, a);
    if let Some(g) = group {
        for (r, up) in relevant.iter_mut().zip(scm.ancestors(g, a)) {
            *r |= up;
        }
    }
    relevant[a] = false;
    let mut supports = Vec::with_capacity(scm.len());
    for (i, m) in scm.mechanisms().iter().enumerate() {
        let support = match (relevant[i], m.noise.support()) {
            (false, _) => vec![(m.noise.mean(), 1.0)],
            (true, Some(s)) => s,
            // continuous noise is allowed on the outcome when it is additive
            (true, None) if i == y && m.kind.cardinality().is_none() && m.expr.noise_coefficient().is_some() => {
                vec![(m.noise.mean(), 1.0)]
            }
            (true, None) => {
                return Err(SynthError::UnsupportedMechanism(format!("`{}` has continuous noise", scm.dag().name(i))))
            }
        };
        supports.push(support);
    }
    let states = product(&supports, MAX_STATES)?;
    let mut ace = 0.0;
    let mut by_group: BTreeMap<i64, (f64, f64)> = BTreeMap::new();
    let mut v = vec![0.0; scm.len()];
    for (noise, p) in &states {
        scm.evaluate(noise, &[(a, a1)], &mut v);
        let y1 = v[y];
        scm.evaluate(noise, &[(a, a0)], &mut v);
        let ice = y1 - v[y];
        ace += p * ice;
        if let Some(g) = group {
            let e = by_group.entry(v[g] as i64).or_default();
            e.0 += p * ice;
            e.1 += p;
        }
    }
    let cace = by_group.into_iter().map(|(g, (s, p))| (g, GroupEffect { effect: s / p, std_error: 0.0 })).collect();
    Ok(OracleEffects {
        a1,
        a0,
        ace,
        ace_std_error: 0.0,
        cace,
        method: OracleMethod::Enumeration { states: states.len() },
    })
}

fn monte_carlo(scm: &SyntheticScm, a1: f64, a0: f64, draws: usize, seed: u64) -> Result<OracleEffects, SynthError> {
    let (a, y) = (scm.treatment()?, scm.outcome()?);
    if draws < 2 {
        return Err(SynthError::EmptySample);
    }
    let noise = scm.draw_noise(draws, seed)?;
    let column = |t: &Tensor, j: usize| (0..t.rows()).map(|r| t.get(r, j)).collect::<Vec<f64>>();
    let y1 = column(&scm.evaluate_all(&noise, &[(a, a1)]), y);
    let y0 = column(&scm.evaluate_all(&noise, &[(a, a0)]), y);
    let ice: Vec<f64> = y1.iter().zip(&y0).map(|(p, q)| p - q).collect();
    let (ace, ace_std_error) = mean_se(&ice);
    let mut cace = BTreeMap::new();
    if let Some(g) = scm.group() {
        let factual = column(&scm.evaluate_all(&noise, &[]), g);
        let mut by_group: BTreeMap<i64, Vec<f64>> = BTreeMap::new();
        for (gv, e) in factual.iter().zip(&ice) {
            by_group.entry(*gv as i64).or_default().push(*e);
        }
        for (gv, vals) in by_group {
            let (effect, std_error) = mean_se(&vals);
            cace.insert(gv, GroupEffect { effect, std_error });
        }
    }
    Ok(OracleEffects { a1, a0, ace, ace_std_error, cace, method: OracleMethod::MonteCarlo { draws, seed } })
}

fn mean_se(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}
