//! Counterfactual queries on a trained flow.
//!
//! A unit's noise is recovered by running the flow forward (abduction), the
//! treatment coordinate is clamped (action) and the noise is pushed back
//! through the inverse (prediction). Effects are differences of the
//! resulting potential outcomes.

mod strategy;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dag::NodeRole;
use crate::flow::{standard_normal, ClampValues, FlowError, Intervention};
use crate::numeric::{NumericError, Tensor};
use crate::trainer::{quantize_one, ColumnSpec, Dataset, TrainError, TrainedModel};

pub use strategy::{
    assign_strategy, evaluate_strategy, Advisability, Assignment, Decision, StrategyAssignment, StrategyKind,
    StrategyOutcome, TreatmentStrategy,
};

/// Units per inverse call; bounds the size of the quadrature workspace.
const CHUNK: usize = 4096;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CounterfactualError {
    #[error("no column has the `{0}` role")]
    MissingRole(&'static str),
    #[error("no units to evaluate")]
    EmptyUnits,
    #[error("dataset has no group-key column")]
    MissingGroupKey,
    #[error("strategy needs the observed treatment, which is missing or not binary")]
    MissingObservedTreatment,
    #[error("units do not match the model: {0}")]
    ColumnMismatch(String),
    #[error("row {row} is out of range for {len} units")]
    RowOutOfRange { row: usize, len: usize },
    #[error("treatment value {0} is not finite")]
    InvalidTreatment(f64),
    #[error("invalid strategy: {0}")]
    InvalidStrategy(String),
    #[error("expected {expected} assignments, got {got}")]
    AssignmentCount { expected: usize, got: usize },
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Numeric(#[from] NumericError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectEstimate {
    pub estimate: f64,
    /// `None` when it cannot be estimated (fewer than two units).
    pub std_error: Option<f64>,
    pub n_units: usize,
    pub n_noise_draws: usize,
    pub seed: Option<u64>,
}

impl EffectEstimate {
    /// Mean with standard error `sd / sqrt(n)`.
    pub fn from_values(values: &[f64], n_noise_draws: usize, seed: Option<u64>) -> Self {
        let n = values.len();
        let estimate = values.iter().sum::<f64>() / n as f64;
        let std_error = (n >= 2).then(|| {
            let var = values.iter().map(|v| (v - estimate).powi(2)).sum::<f64>() / (n - 1) as f64;
            (var / n as f64).sqrt()
        });
        Self { estimate, std_error, n_units: n, n_noise_draws, seed }
    }
}

/// How expectations over units are formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum AceMode {
    /// One abducted noise vector per observed unit.
    Abduction,
    /// Fresh base-noise draws pushed through the intervened inverse.
    Interventional { draws: usize, seed: u64 },
}

/// Potential outcomes of every unit under two treatment values.
#[derive(Debug, Clone, PartialEq)]
pub struct PotentialOutcomes {
    pub a1: f64,
    pub a0: f64,
    pub y1: Vec<f64>,
    pub y0: Vec<f64>,
    pub observed_treatment: Vec<f64>,
    pub observed_outcome: Vec<f64>,
    pub groups: Option<Vec<i64>>,
}

impl PotentialOutcomes {
    pub fn len(&self) -> usize {
        self.y1.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y1.is_empty()
    }

    pub fn ice(&self) -> Vec<f64> {
        self.y1.iter().zip(&self.y0).map(|(a, b)| a - b).collect()
    }

    pub fn thresholded_ice(&self, cut: f64) -> Vec<f64> {
        self.y1.iter().zip(&self.y0).map(|(&a, &b)| thresholded(a, b, cut)).collect()
    }
}

fn thresholded(y1: f64, y0: f64, cut: f64) -> f64 {
    let ind = |y: f64| if y > cut { 1.0 } else { 0.0 };
    ind(y1) - ind(y0)
}

/// Counterfactual engine bound to a trained model.
#[derive(Debug, Clone, Copy)]
pub struct Engine<'a> {
    model: &'a TrainedModel,
    treatment: usize,
    outcome: usize,
}

impl<'a> Engine<'a> {
    pub fn new(model: &'a TrainedModel) -> Result<Self, CounterfactualError> {
        let find = |role: NodeRole, label: &'static str| {
            model.columns.iter().position(|c| c.role == role).ok_or(CounterfactualError::MissingRole(label))
        };
        Ok(Self { model, treatment: find(NodeRole::Treatment, "treatment")?, outcome: find(NodeRole::Outcome, "outcome")? })
    }

    pub fn model(&self) -> &TrainedModel {
        self.model
    }

    pub fn treatment(&self) -> usize {
        self.treatment
    }

    pub fn outcome(&self) -> usize {
        self.outcome
    }

    pub fn outcome_column(&self) -> &ColumnSpec {
        &self.model.columns[self.outcome]
    }

    pub fn check_units(&self, units: &Dataset) -> Result<(), CounterfactualError> {
        if units.columns() != self.model.columns.as_slice() {
            let names: Vec<&str> = units.columns().iter().map(|c| c.name.as_str()).collect();
            return Err(CounterfactualError::ColumnMismatch(format!("unit columns {names:?}")));
        }
        if units.is_empty() {
            return Err(CounterfactualError::EmptyUnits);
        }
        Ok(())
    }

    /// Noise vectors `z = T(x)` of a batch of raw units.
    pub fn abduct(&self, x: &Tensor) -> Result<Tensor, CounterfactualError> {
        Ok(self.model.flow.transform_batch(x)?.0)
    }

    /// Full units obtained from noise `z` with the treatment clamped to `a`.
    pub fn predict_under(&self, z: &Tensor, a: f64) -> Result<Tensor, CounterfactualError> {
        check_treatment(a)?;
        Ok(self.model.flow.inverse_batch(z, &[Intervention::constant(self.treatment, a)])?)
    }

    /// Rounds and clamps a discrete outcome; continuous outcomes pass through.
    pub fn quantize_outcome(&self, y: f64) -> Result<f64, CounterfactualError> {
        Ok(match self.outcome_column().kind.cardinality() {
            Some(n) => quantize_one(y, n)? as f64,
            None => y,
        })
    }

    /// Outcome of each unit under treatment `treatments[r]`.
    ///
    /// Non-descendants of the treatment keep their observed values, which is
    /// what the inverse returns for them up to solver tolerance.
    pub fn counterfactual_outcomes(&self, x: &Tensor, treatments: &[f64]) -> Result<Vec<f64>, CounterfactualError> {
        let n = x.rows();
        if treatments.len() != n {
            return Err(CounterfactualError::AssignmentCount { expected: n, got: treatments.len() });
        }
        treatments.iter().try_for_each(|&a| check_treatment(a))?;
        let d = self.model.flow.dim();
        let downstream = self.model.dag().descendants(self.treatment);
        let mut out = Vec::with_capacity(n);
        for start in (0..n).step_by(CHUNK) {
            let end = (start + CHUNK).min(n);
            let rows: Vec<f64> = x.data()[start * d..end * d].to_vec();
            let chunk = Tensor::from_vec(&[end - start, d], rows)?;
            let z = self.abduct(&chunk)?;
            let mut ivs = vec![Intervention {
                node: self.treatment,
                values: ClampValues::PerUnit(treatments[start..end].to_vec()),
            }];
            for (j, &down) in downstream.iter().enumerate() {
                if !down {
                    let observed = (0..end - start).map(|r| chunk.get(r, j)).collect();
                    ivs.push(Intervention { node: j, values: ClampValues::PerUnit(observed) });
                }
            }
            let xs = self.model.flow.inverse_batch(&z, &ivs)?;
            for r in 0..end - start {
                out.push(self.quantize_outcome(xs.get(r, self.outcome))?);
            }
        }
        Ok(out)
    }

    /// Outcome of one unit under treatment `a`.
    pub fn counterfactual_outcome(&self, x: &[f64], a: f64) -> Result<f64, CounterfactualError> {
        Ok(self.counterfactual_outcomes(&Tensor::row(x.to_vec()), &[a])?[0])
    }

    pub fn potential_outcomes(&self, units: &Dataset, a1: f64, a0: f64) -> Result<PotentialOutcomes, CounterfactualError> {
        self.check_units(units)?;
        let n = units.len();
        let y1 = self.counterfactual_outcomes(units.values(), &vec![a1; n])?;
        let y0 = if a1 == a0 { y1.clone() } else { self.counterfactual_outcomes(units.values(), &vec![a0; n])? };
        Ok(PotentialOutcomes {
            a1,
            a0,
            y1,
            y0,
            observed_treatment: units.column(self.treatment),
            observed_outcome: units.column(self.outcome),
            groups: units.groups(),
        })
    }

    /// Plain or thresholded effect of `a1` versus `a0` on one unit.
    pub fn estimate_ice(&self, x: &[f64], a1: f64, a0: f64, thresholded_at: Option<f64>) -> Result<EffectEstimate, CounterfactualError> {
        let y1 = self.counterfactual_outcome(x, a1)?;
        let y0 = if a1 == a0 { y1 } else { self.counterfactual_outcome(x, a0)? };
        let estimate = match thresholded_at {
            Some(cut) => thresholded(y1, y0, cut),
            None => y1 - y0,
        };
        Ok(EffectEstimate { estimate, std_error: Some(0.0), n_units: 1, n_noise_draws: 1, seed: None })
    }

    pub fn estimate_ace(&self, units: &Dataset, a1: f64, a0: f64, mode: AceMode) -> Result<EffectEstimate, CounterfactualError> {
        match mode {
            AceMode::Abduction => {
                let po = self.potential_outcomes(units, a1, a0)?;
                Ok(EffectEstimate::from_values(&po.ice(), po.len(), None))
            }
            AceMode::Interventional { draws, seed } => {
                if draws == 0 {
                    return Err(CounterfactualError::EmptyUnits);
                }
                let z = standard_normal(draws, self.model.flow.dim(), seed);
                let y1 = self.interventional_outcomes(&z, a1)?;
                let y0 = if a1 == a0 { y1.clone() } else { self.interventional_outcomes(&z, a0)? };
                let diff: Vec<f64> = y1.iter().zip(&y0).map(|(a, b)| a - b).collect();
                Ok(EffectEstimate::from_values(&diff, draws, Some(seed)))
            }
        }
    }

    fn interventional_outcomes(&self, z: &Tensor, a: f64) -> Result<Vec<f64>, CounterfactualError> {
        let d = z.cols();
        let mut out = Vec::with_capacity(z.rows());
        for start in (0..z.rows()).step_by(CHUNK) {
            let end = (start + CHUNK).min(z.rows());
            let chunk = Tensor::from_vec(&[end - start, d], z.data()[start * d..end * d].to_vec())?;
            let xs = self.predict_under(&chunk, a)?;
            for r in 0..end - start {
                out.push(self.quantize_outcome(xs.get(r, self.outcome))?);
            }
        }
        Ok(out)
    }

    /// Per-group mean effect; groups with no units are absent.
    pub fn estimate_cace(&self, units: &Dataset, a1: f64, a0: f64) -> Result<BTreeMap<i64, EffectEstimate>, CounterfactualError> {
        if units.group_column().is_none() {
            return Err(CounterfactualError::MissingGroupKey);
        }
        cace(&self.potential_outcomes(units, a1, a0)?)
    }
}

/// Per-group mean of the plain effects in `po`.
pub fn cace(po: &PotentialOutcomes) -> Result<BTreeMap<i64, EffectEstimate>, CounterfactualError> {
    let groups = po.groups.as_ref().ok_or(CounterfactualError::MissingGroupKey)?;
    let mut by_group: BTreeMap<i64, Vec<f64>> = BTreeMap::new();
    for (g, e) in groups.iter().zip(po.ice()) {
        by_group.entry(*g).or_default().push(e);
    }
    Ok(by_group
        .into_iter()
        .map(|(g, v)| {
            let n = v.len();
            (g, EffectEstimate::from_values(&v, n, None))
        })
        .collect())
}

fn check_treatment(a: f64) -> Result<(), CounterfactualError> {
    if a.is_finite() {
        Ok(())
    } else {
        Err(CounterfactualError::InvalidTreatment(a))
    }
}

#[cfg(test)]
mod tests;
