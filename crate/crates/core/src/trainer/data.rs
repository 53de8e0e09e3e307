//! Tabular datasets aligned to a causal DAG.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::TrainError;
use crate::dag::{CausalDag, NodeRole};
use crate::numeric::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ColumnKind {
    Discrete { cardinality: usize },
    Continuous,
}

impl ColumnKind {
    pub fn cardinality(&self) -> Option<usize> {
        match self {
            ColumnKind::Discrete { cardinality } => Some(*cardinality),
            ColumnKind::Continuous => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub name: String,
    pub kind: ColumnKind,
    pub role: NodeRole,
    pub group_key: bool,
}

/// One entry of the column-spec JSON file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ColumnEntry {
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cardinality: Option<usize>,
    #[serde(default)]
    pub role: NodeRole,
    #[serde(default)]
    pub group_key: bool,
}

/// Column-spec file: `{ "<column>": { "kind": "discrete" | "continuous", ... } }`.
pub type ColumnSpecFile = BTreeMap<String, ColumnEntry>;

/// Resolves the column-spec file against the DAG, in DAG node order.
pub fn resolve_columns(dag: &CausalDag, file: &ColumnSpecFile) -> Result<Vec<ColumnSpec>, TrainError> {
    for name in file.keys() {
        if dag.index_of(name).is_err() {
            return Err(TrainError::ColumnMismatch(format!("column spec names `{name}`, which is not a DAG node")));
        }
    }
    let mut columns = Vec::with_capacity(dag.len());
    for name in dag.nodes() {
        let entry = file
            .get(name)
            .ok_or_else(|| TrainError::ColumnMismatch(format!("column spec is missing node `{name}`")))?;
        let kind = match (entry.kind.as_str(), entry.cardinality) {
            ("discrete", Some(n)) if n >= 1 => ColumnKind::Discrete { cardinality: n },
            ("discrete", _) => {
                return Err(TrainError::InvalidConfig(format!("discrete column `{name}` needs a cardinality >= 1")))
            }
            ("continuous", _) => ColumnKind::Continuous,
            (other, _) => return Err(TrainError::InvalidConfig(format!("column `{name}` has unknown kind `{other}`"))),
        };
        columns.push(ColumnSpec { name: name.clone(), kind, role: entry.role, group_key: entry.group_key });
    }
    validate_columns(&columns)?;
    Ok(columns)
}

pub fn columns_to_file(columns: &[ColumnSpec]) -> ColumnSpecFile {
    columns
        .iter()
        .map(|c| {
            let (kind, cardinality) = match c.kind {
                ColumnKind::Discrete { cardinality } => ("discrete", Some(cardinality)),
                ColumnKind::Continuous => ("continuous", None),
            };
            (c.name.clone(), ColumnEntry { kind: kind.into(), cardinality, role: c.role, group_key: c.group_key })
        })
        .collect()
}

fn validate_columns(columns: &[ColumnSpec]) -> Result<(), TrainError> {
    let keys: Vec<&ColumnSpec> = columns.iter().filter(|c| c.group_key).collect();
    if keys.len() > 1 {
        return Err(TrainError::InvalidConfig("at most one group-key column".into()));
    }
    if let Some(k) = keys.first() {
        if k.kind.cardinality().is_none() {
            return Err(TrainError::InvalidConfig(format!("group-key column `{}` must be discrete", k.name)));
        }
    }
    for role in [NodeRole::Treatment, NodeRole::Outcome] {
        if columns.iter().filter(|c| c.role == role).count() > 1 {
            return Err(TrainError::InvalidConfig(format!("more than one {role:?} column")));
        }
    }
    Ok(())
}

/// Row-major table whose columns follow the DAG node order.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    columns: Vec<ColumnSpec>,
    values: Tensor,
}

impl Dataset {
    /// Validates values against column kinds; discrete entries must be integers in range.
    pub fn new(columns: Vec<ColumnSpec>, values: Tensor) -> Result<Self, TrainError> {
        validate_columns(&columns)?;
        if values.cols() != columns.len() && !values.is_empty() {
            return Err(TrainError::ColumnMismatch(format!(
                "{} columns declared, rows have {}",
                columns.len(),
                values.cols()
            )));
        }
        let d = columns.len();
        for (r, row) in values.data().chunks(d.max(1)).enumerate() {
            for (v, col) in row.iter().zip(&columns) {
                check_value(*v, col, r)?;
            }
        }
        let values = if values.is_empty() { Tensor::zeros(&[0, d]) } else { values };
        Ok(Self { columns, values })
    }

    pub fn columns(&self) -> &[ColumnSpec] {
        &self.columns
    }

    pub fn values(&self) -> &Tensor {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.columns.len()
    }

    pub fn row(&self, r: usize) -> &[f64] {
        self.values.row_slice(r)
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.len()).map(|r| self.values.get(r, j)).collect()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn role_index(&self, role: NodeRole) -> Option<usize> {
        self.columns.iter().position(|c| c.role == role)
    }

    pub fn group_column(&self) -> Option<usize> {
        self.columns.iter().position(|c| c.group_key)
    }

    /// Group label of each row, if a group key is declared.
    pub fn groups(&self) -> Option<Vec<i64>> {
        let g = self.group_column()?;
        Some((0..self.len()).map(|r| self.values.get(r, g) as i64).collect())
    }

    /// Subset of rows in the given order.
    pub fn select(&self, rows: &[usize]) -> Dataset {
        let d = self.dim();
        let mut data = Vec::with_capacity(rows.len() * d);
        for &r in rows {
            data.extend_from_slice(self.row(r));
        }
        Dataset { columns: self.columns.clone(), values: Tensor::from_vec(&[rows.len(), d], data).expect("shape") }
    }

    /// Checks that the columns are exactly the DAG nodes in DAG order.
    pub fn check_against(&self, dag: &CausalDag) -> Result<(), TrainError> {
        let names: Vec<&str> = self.columns.iter().map(|c| c.name.as_str()).collect();
        let nodes: Vec<&str> = dag.nodes().iter().map(String::as_str).collect();
        if names != nodes {
            return Err(TrainError::ColumnMismatch(format!("dataset columns {names:?} differ from DAG nodes {nodes:?}")));
        }
        Ok(())
    }

    /// Reads a CSV whose header holds exactly the DAG node names, in any order.
    pub fn read_csv<R: Read>(reader: R, dag: &CausalDag, columns: Vec<ColumnSpec>) -> Result<Self, TrainError> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let header: Vec<String> = rdr.headers().map_err(csv_err)?.iter().map(str::to_string).collect();
        let mut position = vec![usize::MAX; dag.len()];
        for (k, name) in header.iter().enumerate() {
            let i = dag
                .index_of(name)
                .map_err(|_| TrainError::ColumnMismatch(format!("CSV column `{name}` is not a DAG node")))?;
            if position[i] != usize::MAX {
                return Err(TrainError::ColumnMismatch(format!("CSV column `{name}` repeated")));
            }
            position[i] = k;
        }
        if let Some(i) = position.iter().position(|&p| p == usize::MAX) {
            return Err(TrainError::ColumnMismatch(format!("CSV lacks DAG node `{}`", dag.name(i))));
        }
        let d = dag.len();
        let mut data = Vec::new();
        for (r, record) in rdr.records().enumerate() {
            let record = record.map_err(csv_err)?;
            if record.len() != header.len() {
                return Err(TrainError::MissingValue { row: r, column: String::new() });
            }
            for i in 0..d {
                let raw = &record[position[i]];
                if raw.is_empty() {
                    return Err(TrainError::MissingValue { row: r, column: dag.name(i).to_string() });
                }
                let v: f64 = raw.parse().map_err(|_| TrainError::InvalidValue {
                    row: r,
                    column: dag.name(i).to_string(),
                    value: raw.to_string(),
                })?;
                data.push(v);
            }
        }
        let n = data.len() / d;
        Dataset::new(columns, Tensor::from_vec(&[n, d], data)?)
    }

    /// Writes the header then one row per unit; discrete columns as integers.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), TrainError> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(self.columns.iter().map(|c| c.name.as_str())).map_err(csv_err)?;
        for r in 0..self.len() {
            let row: Vec<String> = self
                .row(r)
                .iter()
                .zip(&self.columns)
                .map(|(v, c)| match c.kind {
                    ColumnKind::Discrete { .. } => format!("{}", *v as i64),
                    ColumnKind::Continuous => format!("{v}"),
                })
                .collect();
            w.write_record(&row).map_err(csv_err)?;
        }
        w.flush().map_err(|e| TrainError::Io(e.to_string()))?;
        Ok(())
    }
}

fn check_value(v: f64, col: &ColumnSpec, row: usize) -> Result<(), TrainError> {
    if !v.is_finite() {
        return Err(TrainError::InvalidValue { row, column: col.name.clone(), value: v.to_string() });
    }
    if let ColumnKind::Discrete { cardinality } = col.kind {
        if v.fract() != 0.0 || v < 0.0 || v > (cardinality - 1) as f64 {
            return Err(TrainError::OutOfRange { row, column: col.name.clone(), value: v, cardinality });
        }
    }
    Ok(())
}

fn csv_err(e: csv::Error) -> TrainError {
    TrainError::Io(e.to_string())
}
