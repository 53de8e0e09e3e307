//! Versioned binary model files.
//!
//! Layout (all integers little-endian):
//!
//! | field            | encoding                                         |
//! |------------------|--------------------------------------------------|
//! | magic            | the 4 bytes `CGNF`                               |
//! | format version   | `u16`                                            |
//! | DAG              | `u32` byte length, canonical `.cdag` text (UTF-8)|
//! | header           | `u32` byte length, JSON (columns, configs, metrics, standardization, tensor shapes) |
//! | parameters       | `u64` count, then that many `f64`                |
//!
//! Parameters are stored node by node in DAG order; within a node the
//! conditioner, integrand and offset networks follow each other, and each
//! network lists `weight [in, out]` then `bias [1, out]` per layer.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ColumnSpec, EpochRecord, TrainConfig, TrainError, TrainedModel};
use crate::dag::parse_dag;
use crate::flow::{FlowConfig, FlowModel, Standardization};

pub const MAGIC: &[u8; 4] = b"CGNF";
pub const FORMAT_VERSION: u16 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    columns: Vec<ColumnSpec>,
    config: TrainConfig,
    flow: FlowConfig,
    standardization: Standardization,
    train_nll: f64,
    validation_nll: f64,
    test_nll: f64,
    best_epoch: usize,
    history: Vec<EpochRecord>,
    shapes: Vec<Vec<usize>>,
}

pub fn write_model<W: Write>(model: &TrainedModel, mut w: W) -> Result<(), TrainError> {
    let header = Header {
        columns: model.columns.clone(),
        config: model.config.clone(),
        flow: model.flow.config().clone(),
        standardization: model.flow.standardization().clone(),
        train_nll: model.train_nll,
        validation_nll: model.validation_nll,
        test_nll: model.test_nll,
        best_epoch: model.best_epoch,
        history: model.history.clone(),
        shapes: model.flow.params().map(|p| p.shape().to_vec()).collect(),
    };
    let dag = model.dag().to_canonical();
    let json = serde_json::to_vec(&header).map_err(|e| TrainError::Io(e.to_string()))?;
    let params = model.flow.flat_params();
    let mut buf = Vec::with_capacity(4 + 2 + 8 + dag.len() + json.len() + 8 + params.len() * 8);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(dag.len() as u32).to_le_bytes());
    buf.extend_from_slice(dag.as_bytes());
    buf.extend_from_slice(&(json.len() as u32).to_le_bytes());
    buf.extend_from_slice(&json);
    buf.extend_from_slice(&(params.len() as u64).to_le_bytes());
    for v in params {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf).map_err(|e| TrainError::Io(e.to_string()))?;
    w.flush().map_err(|e| TrainError::Io(e.to_string()))
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], TrainError> {
        if self.bytes.len() - self.pos < n {
            return Err(TrainError::CorruptFile(format!("truncated while reading {what}")));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u32(&mut self, what: &str) -> Result<u32, TrainError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }
}

pub fn read_model<R: Read>(mut r: R) -> Result<TrainedModel, TrainError> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes).map_err(|e| TrainError::Io(e.to_string()))?;
    let mut c = Cursor { bytes: &bytes, pos: 0 };
    if c.take(4, "magic")? != MAGIC {
        return Err(TrainError::CorruptFile("bad magic bytes".into()));
    }
    let version = u16::from_le_bytes(c.take(2, "version")?.try_into().expect("2 bytes"));
    if version != FORMAT_VERSION {
        return Err(TrainError::VersionMismatch { found: version, expected: FORMAT_VERSION });
    }
    let n = c.u32("DAG length")? as usize;
    let dag_text = std::str::from_utf8(c.take(n, "DAG")?).map_err(|_| TrainError::CorruptFile("DAG is not UTF-8".into()))?;
    let dag = parse_dag(dag_text).map_err(|e| TrainError::CorruptFile(format!("DAG: {e}")))?;
    let n = c.u32("header length")? as usize;
    let header: Header =
        serde_json::from_slice(c.take(n, "header")?).map_err(|e| TrainError::CorruptFile(format!("header: {e}")))?;
    let count = u64::from_le_bytes(c.take(8, "parameter count")?.try_into().expect("8 bytes")) as usize;
    let raw = c.take(count.checked_mul(8).ok_or_else(|| TrainError::CorruptFile("parameter count".into()))?, "parameters")?;
    if c.pos != bytes.len() {
        return Err(TrainError::CorruptFile("trailing bytes".into()));
    }
    let params: Vec<f64> = raw.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes"))).collect();

    if header.standardization.shift.len() != dag.len() || header.columns.len() != dag.len() {
        return Err(TrainError::CorruptFile("header does not match the DAG".into()));
    }
    let mut flow = FlowModel::new(dag, header.flow, 0);
    let shapes: Vec<Vec<usize>> = flow.params().map(|p| p.shape().to_vec()).collect();
    if shapes != header.shapes {
        return Err(TrainError::CorruptFile("parameter shapes do not match the architecture".into()));
    }
    flow.load_flat(&params).map_err(|e| TrainError::CorruptFile(e.to_string()))?;
    flow.set_standardization(header.standardization);
    Ok(TrainedModel {
        flow,
        columns: header.columns,
        config: header.config,
        train_nll: header.train_nll,
        validation_nll: header.validation_nll,
        test_nll: header.test_nll,
        best_epoch: header.best_epoch,
        history: header.history,
    })
}

pub fn save_model(model: &TrainedModel, path: impl AsRef<Path>) -> Result<(), TrainError> {
    let f = File::create(path.as_ref()).map_err(|e| TrainError::Io(format!("{}: {e}", path.as_ref().display())))?;
    write_model(model, BufWriter::new(f))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<TrainedModel, TrainError> {
    let f = File::open(path.as_ref()).map_err(|e| TrainError::Io(format!("{}: {e}", path.as_ref().display())))?;
    read_model(BufReader::new(f))
}
