use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use cgnf::counterfactual::{AceMode, StrategyKind};
use cgnf::dag::{parse_dag, CausalDag};
use cgnf::trainer::{resolve_columns, ColumnSpec, ColumnSpecFile, Dataset, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::CliError;

fn default_seeds() -> Vec<u64> {
    vec![1, 2, 3, 4, 5]
}

fn default_strategies() -> Vec<StrategyKind> {
    StrategyKind::ALL.to_vec()
}

fn default_epsilon() -> f64 {
    0.05
}

fn default_true() -> bool {
    true
}

fn default_cut() -> f64 {
    1.0
}

fn default_treatments() -> [f64; 2] {
    [1.0, 0.0]
}

fn default_ace_mode() -> AceMode {
    AceMode::Abduction
}

/// Everything one run needs. Relative paths are resolved against the
/// directory holding the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub dag: PathBuf,
    pub data: PathBuf,
    pub columns: PathBuf,
    pub model_dir: PathBuf,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_strategies")]
    pub strategies: Vec<StrategyKind>,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_true")]
    pub lower_is_better: bool,
    #[serde(default = "default_cut")]
    pub cut: f64,
    /// Encouraged and discouraged treatment values.
    #[serde(default = "default_treatments")]
    pub treatments: [f64; 2],
    #[serde(default = "default_ace_mode")]
    pub ace_mode: AceMode,
    /// Only the first `max_units` rows are queried, when set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_units: Option<usize>,
}

impl RunConfig {
    pub fn new(dag: PathBuf, data: PathBuf, columns: PathBuf, model_dir: PathBuf, output_dir: PathBuf) -> Self {
        Self {
            dag,
            data,
            columns,
            model_dir,
            output_dir,
            train: TrainConfig::default(),
            seeds: default_seeds(),
            strategies: default_strategies(),
            epsilon: default_epsilon(),
            lower_is_better: true,
            cut: default_cut(),
            treatments: default_treatments(),
            ace_mode: default_ace_mode(),
            max_units: None,
        }
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::Validation(format!("cannot read config {}: {e}", path.display())))?;
        let mut config: RunConfig =
            serde_json::from_str(&text).map_err(|e| CliError::Validation(format!("invalid config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut config.dag, &mut config.data, &mut config.columns, &mut config.model_dir, &mut config.output_dir] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(config)
    }

    /// Checks the parts every command relies on.
    pub fn validate(&self) -> Result<(), CliError> {
        for (label, p) in [("DAG", &self.dag), ("dataset", &self.data), ("column spec", &self.columns)] {
            if !p.is_file() {
                return Err(CliError::Validation(format!("{label} file {} does not exist", p.display())));
            }
        }
        if self.seeds.is_empty() {
            return Err(CliError::Validation("at least one seed is required".into()));
        }
        if self.seeds.iter().collect::<BTreeSet<_>>().len() != self.seeds.len() {
            return Err(CliError::Validation("seeds must be distinct".into()));
        }
        if !(self.epsilon >= 0.0) || !self.cut.is_finite() || self.treatments.iter().any(|t| !t.is_finite()) {
            return Err(CliError::Validation("epsilon must be non-negative; cut and treatments finite".into()));
        }
        if self.max_units == Some(0) {
            return Err(CliError::Validation("max_units must be positive".into()));
        }
        self.train.validate().map_err(|e| CliError::Validation(e.to_string()))?;
        Ok(())
    }

    pub fn read_dag(&self) -> Result<CausalDag, CliError> {
        let text = fs::read_to_string(&self.dag).map_err(|e| CliError::Validation(format!("{}: {e}", self.dag.display())))?;
        parse_dag(&text).map_err(|e| CliError::Validation(format!("{}: {e}", self.dag.display())))
    }

    pub fn read_columns(&self, dag: &CausalDag) -> Result<Vec<ColumnSpec>, CliError> {
        let text =
            fs::read_to_string(&self.columns).map_err(|e| CliError::Validation(format!("{}: {e}", self.columns.display())))?;
        let file: ColumnSpecFile =
            serde_json::from_str(&text).map_err(|e| CliError::Validation(format!("{}: {e}", self.columns.display())))?;
        resolve_columns(dag, &file).map_err(|e| CliError::Validation(e.to_string()))
    }

    /// DAG, columns and dataset, all validated.
    pub fn read_inputs(&self) -> Result<(CausalDag, Dataset), CliError> {
        self.validate()?;
        let dag = self.read_dag()?;
        let columns = self.read_columns(&dag)?;
        if self.strategies.contains(&StrategyKind::TSC) && !columns.iter().any(|c| c.group_key) {
            return Err(CliError::Validation("strategy TSC needs a group-key column".into()));
        }
        let file = fs::File::open(&self.data).map_err(|e| CliError::Validation(format!("{}: {e}", self.data.display())))?;
        let data = Dataset::read_csv(file, &dag, columns).map_err(|e| CliError::Validation(format!("{}: {e}", self.data.display())))?;
        Ok((dag, data))
    }

    pub fn model_path(&self, seed: u64) -> PathBuf {
        self.model_dir.join(format!("model_seed{seed}.cgnf"))
    }
}
