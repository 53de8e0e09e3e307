//! Report records and the files they are written to.
//!
//! | file | columns |
//! |------|---------|
//! | `cace.csv` | `group, seed_<s>..., mean, std, crosses_zero` |
//! | `histogram.csv` | `strategy, degree, seed, count` |
//! | `advisability.csv` | `strategy, seed, encouraged, discouraged, neutral` |
//! | `mean_outcome.csv` | `strategy, seed, mean_outcome` |
//! | `worlds.csv` | `group, strategy, seed, mean_outcome` |
//!
//! `metrics.json`, `ace.json` and `summary.json` hold the matching JSON records below.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use cgnf::counterfactual::{Advisability, EffectEstimate};
use cgnf::trainer::EpochRecord;
use serde::{Deserialize, Serialize};

use crate::{runtime, CliError};

/// Mean and sample standard deviation across seeds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub mean: f64,
    pub std: f64,
}

impl Aggregate {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Self { mean, std }
    }

    pub fn crosses_zero(&self) -> bool {
        self.mean - self.std <= 0.0 && 0.0 <= self.mean + self.std
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedMetrics {
    pub seed: u64,
    pub model: String,
    pub train_nll: f64,
    pub validation_nll: f64,
    pub test_nll: f64,
    pub best_epoch: usize,
    pub history: Vec<EpochRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub models: Vec<SeedMetrics>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedEffect {
    pub seed: u64,
    pub estimate: f64,
    pub std_error: Option<f64>,
    pub n_units: usize,
}

impl SeedEffect {
    pub fn new(seed: u64, e: &EffectEstimate) -> Self {
        Self { seed, estimate: e.estimate, std_error: e.std_error, n_units: e.n_units }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AceReport {
    pub a1: f64,
    pub a0: f64,
    pub per_seed: Vec<SeedEffect>,
    pub aggregate: Aggregate,
}

/// One row of `cace.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct CaceRow {
    pub group: String,
    pub per_seed: Vec<f64>,
    pub aggregate: Aggregate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategySummary {
    pub mean_outcome: Aggregate,
    pub encouraged: Aggregate,
    pub discouraged: Aggregate,
    pub neutral: Aggregate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub seeds: Vec<u64>,
    pub n_units: usize,
    pub epsilon: f64,
    pub strategies: BTreeMap<String, StrategySummary>,
}

/// Results of one strategy under one seed.
#[derive(Debug, Clone, PartialEq)]
pub struct StrategyRun {
    pub strategy: String,
    pub seed: u64,
    pub histogram: Option<Vec<usize>>,
    pub advisability: Advisability,
    pub mean_outcome: f64,
    pub group_means: BTreeMap<i64, f64>,
}

/// Shortest text that parses back to the same value.
pub fn num(v: f64) -> String {
    format!("{v}")
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(runtime)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

pub fn write_csv(path: &Path, header: &[String], rows: &[Vec<String>]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
    w.write_record(header).map_err(runtime)?;
    for r in rows {
        w.write_record(r).map_err(runtime)?;
    }
    w.flush().map_err(runtime)
}

pub fn write_cace(path: &Path, seeds: &[u64], rows: &[CaceRow]) -> Result<(), CliError> {
    let mut header = vec!["group".to_string()];
    header.extend(seeds.iter().map(|s| format!("seed_{s}")));
    header.extend(["mean", "std", "crosses_zero"].map(String::from));
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            let mut row = vec![r.group.clone()];
            row.extend(r.per_seed.iter().map(|&v| num(v)));
            row.extend([num(r.aggregate.mean), num(r.aggregate.std), r.aggregate.crosses_zero().to_string()]);
            row
        })
        .collect();
    write_csv(path, &header, &body)
}

fn strings(items: &[&str]) -> Vec<String> {
    items.iter().map(|s| s.to_string()).collect()
}

/// Writes the four strategy tables.
pub fn write_strategy_tables(dir: &Path, runs: &[StrategyRun]) -> Result<(), CliError> {
    let mut hist = Vec::new();
    let mut adv = Vec::new();
    let mut mean = Vec::new();
    let mut worlds = Vec::new();
    for r in runs {
        let seed = r.seed.to_string();
        if let Some(h) = &r.histogram {
            for (degree, count) in h.iter().enumerate() {
                hist.push(vec![r.strategy.clone(), degree.to_string(), seed.clone(), count.to_string()]);
            }
        }
        let a = r.advisability;
        adv.push(vec![r.strategy.clone(), seed.clone(), num(a.encouraged), num(a.discouraged), num(a.neutral)]);
        mean.push(vec![r.strategy.clone(), seed.clone(), num(r.mean_outcome)]);
        for (g, m) in &r.group_means {
            worlds.push(vec![g.to_string(), r.strategy.clone(), seed.clone(), num(*m)]);
        }
    }
    write_csv(&dir.join("histogram.csv"), &strings(&["strategy", "degree", "seed", "count"]), &hist)?;
    write_csv(
        &dir.join("advisability.csv"),
        &strings(&["strategy", "seed", "encouraged", "discouraged", "neutral"]),
        &adv,
    )?;
    write_csv(&dir.join("mean_outcome.csv"), &strings(&["strategy", "seed", "mean_outcome"]), &mean)?;
    write_csv(&dir.join("worlds.csv"), &strings(&["group", "strategy", "seed", "mean_outcome"]), &worlds)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn aggregate_uses_sample_std() {
        let a = Aggregate::of(&[1.0, 3.0]);
        assert_eq!(a.mean, 2.0);
        assert!((a.std - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(Aggregate::of(&[4.0]).std, 0.0);
        assert!(Aggregate { mean: 0.1, std: 0.2 }.crosses_zero());
        assert!(!Aggregate { mean: -0.5, std: 0.2 }.crosses_zero());
    }

    #[test]
    fn numbers_round_trip() {
        for v in [0.1, 1.0 / 3.0, -2.5e-17, 12345.678] {
            assert_eq!(num(v).parse::<f64>().unwrap(), v);
        }
    }
}
