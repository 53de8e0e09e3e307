//! Maximum-likelihood training of a flow with early stopping.

mod data;
mod persist;
mod quantize;

pub use data::{columns_to_file, resolve_columns, ColumnEntry, ColumnKind, ColumnSpec, ColumnSpecFile, Dataset};
pub use persist::{load_model, read_model, save_model, write_model, FORMAT_VERSION, MAGIC};
pub use quantize::{dequantize, dequantize_with, quantize, quantize_one, DEQUANT_STD};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dag::{CausalDag, DagError};
use crate::flow::{FlowConfig, FlowError, FlowModel, Standardization, LOG_2PI};
use crate::numeric::{AdamWConfig, AdamWState, NumericError, Tape, Tensor};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrainError {
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("column mismatch: {0}")]
    ColumnMismatch(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("non-integer value {0} in a discrete column")]
    NonIntegerInput(f64),
    #[error("non-finite input")]
    NonFiniteInput,
    #[error("row {row}: missing value for `{column}`")]
    MissingValue { row: usize, column: String },
    #[error("row {row}: cannot parse `{value}` for `{column}`")]
    InvalidValue { row: usize, column: String, value: String },
    #[error("row {row}: value {value} of `{column}` outside [0, {}]", cardinality - 1)]
    OutOfRange { row: usize, column: String, value: f64, cardinality: usize },
    #[error("loss diverged at epoch {epoch}, step {step}, node `{node}` (value {value})")]
    DivergedLoss { epoch: usize, step: usize, node: String, value: f64 },
    #[error("model file is corrupt: {0}")]
    CorruptFile(String),
    #[error("model file format version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u16, expected: u16 },
    #[error("i/o: {0}")]
    Io(String),
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error(transparent)]
    Dag(#[from] DagError),
    #[error(transparent)]
    Numeric(#[from] NumericError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub conditioner_hidden: Vec<usize>,
    pub transformer_hidden: Vec<usize>,
    pub context_width: usize,
    pub quadrature_nodes: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    /// Train / validation / test fractions.
    pub split: [f64; 3],
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            conditioner_hidden: vec![40, 30, 20],
            transformer_hidden: vec![15, 10, 5],
            context_width: 10,
            quadrature_nodes: 50,
            learning_rate: 3e-4,
            weight_decay: 1e-2,
            batch_size: 1024,
            max_epochs: 100,
            patience: 10,
            split: [0.99, 0.005, 0.005],
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if self.split.iter().any(|f| !(*f > 0.0)) || (self.split.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(TrainError::InvalidConfig(format!("split fractions {:?} must be positive and sum to 1", self.split)));
        }
        if self.batch_size == 0 {
            return Err(TrainError::InvalidConfig("batch size must be at least 1".into()));
        }
        if self.context_width == 0 || self.quadrature_nodes < 2 {
            return Err(TrainError::InvalidConfig("context width >= 1 and quadrature nodes >= 2 required".into()));
        }
        if !(self.learning_rate > 0.0) || self.weight_decay < 0.0 {
            return Err(TrainError::InvalidConfig("learning rate must be positive, weight decay non-negative".into()));
        }
        Ok(())
    }

    pub fn flow_config(&self) -> FlowConfig {
        FlowConfig {
            conditioner_hidden: self.conditioner_hidden.clone(),
            transformer_hidden: self.transformer_hidden.clone(),
            context_width: self.context_width,
            quadrature_nodes: self.quadrature_nodes,
            ..FlowConfig::default()
        }
    }

    pub fn optimizer(&self) -> AdamWConfig {
        AdamWConfig { lr: self.learning_rate, weight_decay: self.weight_decay, ..AdamWConfig::default() }
    }
}

/// Row indices of a three-way split.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
}

/// Seeded shuffle of `0..n`; validation and test get `round(n * fraction)`
/// rows each, training the remainder.
pub fn split(n: usize, fractions: [f64; 3], seed: u64) -> Result<Split, TrainError> {
    if n == 0 {
        return Err(TrainError::EmptyDataset);
    }
    if fractions.iter().any(|f| !(*f > 0.0)) || (fractions.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(TrainError::InvalidConfig(format!("split fractions {fractions:?} must be positive and sum to 1")));
    }
    let n_val = (n as f64 * fractions[1]).round() as usize;
    let n_test = (n as f64 * fractions[2]).round() as usize;
    if n_val + n_test > n {
        return Err(TrainError::InvalidConfig("split leaves no training rows".into()));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let validation = idx[..n_val].to_vec();
    let test = idx[n_val..n_val + n_test].to_vec();
    let train = idx[n_val + n_test..].to_vec();
    Ok(Split { train, validation, test })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_nll: f64,
    pub validation_nll: f64,
}

/// A flow together with everything needed to interpret its columns.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub flow: FlowModel,
    pub columns: Vec<ColumnSpec>,
    pub config: TrainConfig,
    pub train_nll: f64,
    pub validation_nll: f64,
    pub test_nll: f64,
    pub best_epoch: usize,
    pub history: Vec<EpochRecord>,
}

impl TrainedModel {
    pub fn dag(&self) -> &CausalDag {
        self.flow.dag()
    }

    pub fn seed(&self) -> u64 {
        self.config.seed
    }

    /// Mean negative log-likelihood of (already dequantized) rows.
    pub fn mean_nll(&self, x: &Tensor) -> Result<f64, TrainError> {
        mean_nll(&self.flow, x)
    }
}

fn mean_nll(flow: &FlowModel, x: &Tensor) -> Result<f64, TrainError> {
    if x.rows() == 0 {
        return Ok(f64::NAN);
    }
    let ld = flow.log_density_batch(x)?;
    Ok(-ld.iter().sum::<f64>() / ld.len() as f64)
}

/// Draws dequantization noise for every discrete column of `x` in place.
fn dequantize_rows(x: &mut Tensor, columns: &[ColumnSpec], rng: &mut ChaCha8Rng) {
    let noise = Normal::new(0.0, DEQUANT_STD).expect("valid std");
    let d = columns.len();
    for row in x.data_mut().chunks_mut(d) {
        for (v, c) in row.iter_mut().zip(columns) {
            if c.kind.cardinality().is_some() {
                *v += noise.sample(rng);
            }
        }
    }
}

fn fit_standardization(data: &Dataset, rows: &[usize]) -> Standardization {
    let d = data.dim();
    let n = rows.len() as f64;
    let mut shift = vec![0.0; d];
    let mut scale = vec![1.0; d];
    for j in 0..d {
        let mean = rows.iter().map(|&r| data.row(r)[j]).sum::<f64>() / n;
        let var = rows.iter().map(|&r| (data.row(r)[j] - mean).powi(2)).sum::<f64>() / n;
        shift[j] = mean;
        // discrete columns gain the dequantization variance
        let extra = if data.columns()[j].kind.cardinality().is_some() { DEQUANT_STD * DEQUANT_STD } else { 0.0 };
        let sd = (var + extra).sqrt();
        scale[j] = if sd > 1e-9 { sd } else { 1.0 };
    }
    Standardization { shift, scale }
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

const VALIDATION_STREAM: u64 = 1;
const TEST_STREAM: u64 = 2;
const EPOCH_STREAM_BASE: u64 = 1 << 32;

/// Minimizes mean negative log-likelihood with AdamW, keeping the parameters
/// of the epoch with the lowest validation loss.
pub fn train(data: &Dataset, dag: &CausalDag, config: &TrainConfig) -> Result<TrainedModel, TrainError> {
    config.validate()?;
    data.check_against(dag)?;
    let parts = split(data.len(), config.split, config.seed)?;
    if parts.train.is_empty() || parts.validation.is_empty() || parts.test.is_empty() {
        return Err(TrainError::InvalidConfig(format!(
            "split of {} rows leaves an empty partition ({} / {} / {})",
            data.len(),
            parts.train.len(),
            parts.validation.len(),
            parts.test.len()
        )));
    }
    let columns = data.columns().to_vec();
    let d = dag.len();

    let mut flow = FlowModel::new(dag.clone(), config.flow_config(), config.seed);
    let standardization = fit_standardization(data, &parts.train);
    flow.set_standardization(standardization.clone());

    let held_out = |rows: &[usize], stream: u64| {
        let mut x = data.select(rows).values().clone();
        dequantize_rows(&mut x, &columns, &mut stream_rng(config.seed, stream));
        x
    };
    let val_x = held_out(&parts.validation, VALIDATION_STREAM);
    let test_x = held_out(&parts.test, TEST_STREAM);

    let mut optimizers: Vec<AdamWState> =
        (0..d).map(|i| AdamWState::new(config.optimizer(), flow.node_params(i))).collect();
    let mut best: Option<(f64, FlowModel, usize, f64)> = None;
    let mut since_best = 0;
    let mut history = Vec::new();
    let mut step = 0;

    for epoch in 1..=config.max_epochs.max(1) {
        let mut rng = stream_rng(config.seed, EPOCH_STREAM_BASE + epoch as u64);
        let mut order = parts.train.clone();
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(config.batch_size) {
            let mut x = data.select(batch).values().clone();
            dequantize_rows(&mut x, &columns, &mut rng);
            let u = standardize(&x, &standardization);
            let mut batch_loss = 0.0;
            for i in 0..d {
                let mut tape = Tape::new();
                let (loss, vars) = flow.node_nll_tape(i, &mut tape, &u)?;
                let value = tape.value(loss)?.data()[0];
                if !value.is_finite() {
                    return Err(TrainError::DivergedLoss { epoch, step, node: dag.name(i).to_string(), value });
                }
                let mut grads = tape.backward(loss)?;
                let grads = vars.collect(&mut grads)?;
                if grads.iter().any(|g| !g.is_finite()) {
                    return Err(TrainError::DivergedLoss { epoch, step, node: dag.name(i).to_string(), value });
                }
                optimizers[i].step(&mut flow.node_params_mut(i), &grads)?;
                batch_loss += value + 0.5 * LOG_2PI + standardization.scale[i].ln();
            }
            epoch_loss += batch_loss * batch.len() as f64;
            step += 1;
        }
        let train_nll = epoch_loss / parts.train.len() as f64;
        let validation_nll = mean_nll(&flow, &val_x)?;
        if !validation_nll.is_finite() {
            return Err(TrainError::DivergedLoss { epoch, step, node: "validation".into(), value: validation_nll });
        }
        history.push(EpochRecord { epoch, train_nll, validation_nll });
        let improved = best.as_ref().is_none_or(|(b, ..)| validation_nll < *b);
        if improved {
            best = Some((validation_nll, flow.clone(), epoch, train_nll));
            since_best = 0;
        } else {
            since_best += 1;
            if since_best > config.patience {
                break;
            }
        }
    }

    let (validation_nll, flow, best_epoch, train_nll) = best.expect("at least one epoch");
    let test_nll = mean_nll(&flow, &test_x)?;
    Ok(TrainedModel {
        flow,
        columns,
        config: config.clone(),
        train_nll,
        validation_nll,
        test_nll,
        best_epoch,
        history,
    })
}

fn standardize(x: &Tensor, s: &Standardization) -> Tensor {
    let d = s.shift.len();
    let mut u = x.clone();
    for row in u.data_mut().chunks_mut(d) {
        for (j, v) in row.iter_mut().enumerate() {
            *v = (*v - s.shift[j]) / s.scale[j];
        }
    }
    u
}

#[cfg(test)]
mod tests;
