use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use cgnf::counterfactual::{
    assign_strategy, cace, evaluate_strategy, AceMode, CounterfactualError, EffectEstimate, Engine, StrategyKind,
    TreatmentStrategy,
};
use cgnf::synth::{backdoor_ace, fixtures, oracle_effects, OracleEffects, SyntheticScm};
use cgnf::trainer::{columns_to_file, load_model, save_model, train as fit, Dataset, TrainedModel};
use serde::Serialize;

use crate::report::{
    write_cace, write_json, write_strategy_tables, AceReport, Aggregate, CaceRow, Metrics, SeedEffect, SeedMetrics,
    StrategyRun, StrategySummary, Summary,
};
use crate::{runtime, CliError, RunConfig, SynthArgs};

fn create_dir(p: &Path) -> Result<(), CliError> {
    fs::create_dir_all(p).map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", p.display())))
}

fn units(config: &RunConfig, data: &Dataset) -> Dataset {
    match config.max_units {
        Some(m) if m < data.len() => data.select(&(0..m).collect::<Vec<_>>()),
        _ => data.clone(),
    }
}

fn load_models(config: &RunConfig) -> Result<Vec<(u64, TrainedModel)>, CliError> {
    config
        .seeds
        .iter()
        .map(|&seed| {
            let path = config.model_path(seed);
            if !path.is_file() {
                return Err(CliError::Runtime(format!(
                    "model for seed {seed} not found at {}; run `cgnf train` first",
                    path.display()
                )));
            }
            let model = load_model(&path).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
            Ok((seed, model))
        })
        .collect()
}

pub fn train(config: &RunConfig) -> Result<Metrics, CliError> {
    let (dag, data) = config.read_inputs()?;
    create_dir(&config.model_dir)?;
    create_dir(&config.output_dir)?;
    let mut models = Vec::new();
    for &seed in &config.seeds {
        let mut tc = config.train.clone();
        tc.seed = seed;
        let model = fit(&data, &dag, &tc).map_err(runtime)?;
        let path = config.model_path(seed);
        save_model(&model, &path).map_err(runtime)?;
        models.push(SeedMetrics {
            seed,
            model: path.file_name().map(|f| f.to_string_lossy().into_owned()).unwrap_or_default(),
            train_nll: model.train_nll,
            validation_nll: model.validation_nll,
            test_nll: model.test_nll,
            best_epoch: model.best_epoch,
            history: model.history,
        });
    }
    let metrics = Metrics { models };
    write_json(&config.output_dir.join("metrics.json"), &metrics)?;
    Ok(metrics)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EffectsReport {
    pub ace: AceReport,
    pub cace: Vec<CaceRow>,
}

pub fn effects(config: &RunConfig) -> Result<EffectsReport, CliError> {
    let (_, data) = config.read_inputs()?;
    let units = units(config, &data);
    let models = load_models(config)?;
    create_dir(&config.output_dir)?;
    let [a1, a0] = config.treatments;
    let mut per_seed = Vec::new();
    let mut per_group: BTreeMap<i64, Vec<f64>> = BTreeMap::new();
    for (seed, model) in &models {
        let engine = Engine::new(model).map_err(runtime)?;
        let po = engine.potential_outcomes(&units, a1, a0).map_err(runtime)?;
        let effect = match config.ace_mode {
            AceMode::Abduction => EffectEstimate::from_values(&po.ice(), po.len(), None),
            mode => engine.estimate_ace(&units, a1, a0, mode).map_err(runtime)?,
        };
        if po.groups.is_some() {
            for (g, e) in cace(&po).map_err(runtime)? {
                per_group.entry(g).or_default().push(e.estimate);
            }
        }
        per_seed.push(SeedEffect::new(*seed, &effect));
    }
    let estimates: Vec<f64> = per_seed.iter().map(|s| s.estimate).collect();
    let ace = AceReport { a1, a0, aggregate: Aggregate::of(&estimates), per_seed };
    let cace_rows: Vec<CaceRow> = if units.group_column().is_some() {
        per_group
            .into_iter()
            .map(|(g, v)| CaceRow { group: g.to_string(), aggregate: Aggregate::of(&v), per_seed: v })
            .collect()
    } else {
        vec![CaceRow { group: "all".into(), aggregate: ace.aggregate, per_seed: estimates }]
    };
    write_json(&config.output_dir.join("ace.json"), &ace)?;
    write_cace(&config.output_dir.join("cace.csv"), &config.seeds, &cace_rows)?;
    Ok(EffectsReport { ace, cace: cace_rows })
}

pub fn strategies(config: &RunConfig) -> Result<Summary, CliError> {
    let (_, data) = config.read_inputs()?;
    let units = units(config, &data);
    let models = load_models(config)?;
    create_dir(&config.output_dir)?;
    let [a1, a0] = config.treatments;
    let mut runs = Vec::new();
    for (seed, model) in &models {
        let engine = Engine::new(model).map_err(runtime)?;
        let po = engine.potential_outcomes(&units, a1, a0).map_err(runtime)?;
        for &kind in &config.strategies {
            let strategy = TreatmentStrategy {
                kind,
                epsilon: config.epsilon,
                lower_is_better: config.lower_is_better,
                cut: config.cut,
            };
            let chosen = assign_strategy(&po, strategy).map_err(|e| strategy_error(kind, e))?;
            let outcome =
                evaluate_strategy(&engine, &units, &po, &chosen.assignments).map_err(|e| strategy_error(kind, e))?;
            runs.push(StrategyRun {
                strategy: kind.name().to_string(),
                seed: *seed,
                histogram: outcome.histogram,
                advisability: chosen.advisability,
                mean_outcome: outcome.mean,
                group_means: outcome.group_means,
            });
        }
    }
    let order = |name: &str| config.strategies.iter().position(|k| k.name() == name);
    runs.sort_by_key(|r| (order(&r.strategy), config.seeds.iter().position(|&s| s == r.seed)));
    write_strategy_tables(&config.output_dir, &runs)?;

    let mut strategies = BTreeMap::new();
    for kind in &config.strategies {
        let mine: Vec<&StrategyRun> = runs.iter().filter(|r| r.strategy == kind.name()).collect();
        let agg = |f: fn(&StrategyRun) -> f64| Aggregate::of(&mine.iter().map(|r| f(r)).collect::<Vec<_>>());
        strategies.insert(
            kind.name().to_string(),
            StrategySummary {
                mean_outcome: agg(|r| r.mean_outcome),
                encouraged: agg(|r| r.advisability.encouraged),
                discouraged: agg(|r| r.advisability.discouraged),
                neutral: agg(|r| r.advisability.neutral),
            },
        );
    }
    let summary = Summary { seeds: config.seeds.clone(), n_units: units.len(), epsilon: config.epsilon, strategies };
    write_json(&config.output_dir.join("summary.json"), &summary)?;
    Ok(summary)
}

fn strategy_error(kind: StrategyKind, e: CounterfactualError) -> CliError {
    CliError::Runtime(format!("strategy {}: {e}", kind.name()))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NoiseSummary {
    pub values: BTreeMap<String, f64>,
    pub norm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CounterfactualAnswer {
    pub row: usize,
    pub seed: u64,
    pub observed: BTreeMap<String, f64>,
    pub noise: NoiseSummary,
    pub treatment: f64,
    pub potential_outcome: f64,
    pub a1: f64,
    pub a0: f64,
    pub ice: f64,
    pub thresholded_ice: f64,
    pub cut: f64,
}

pub fn counterfactual(config: &RunConfig, row: usize, treatment: f64, seed: Option<u64>) -> Result<CounterfactualAnswer, CliError> {
    let (dag, data) = config.read_inputs()?;
    if !treatment.is_finite() {
        return Err(CliError::Validation(format!("treatment {treatment} is not finite")));
    }
    let seed = seed.unwrap_or(config.seeds[0]);
    if !config.seeds.contains(&seed) {
        return Err(CliError::Validation(format!("seed {seed} is not among the configured seeds")));
    }
    let path = config.model_path(seed);
    if !path.is_file() {
        return Err(CliError::Runtime(format!("model for seed {seed} not found at {}", path.display())));
    }
    let model = load_model(&path).map_err(runtime)?;
    let engine = Engine::new(&model).map_err(runtime)?;
    engine.check_units(&data).map_err(runtime)?;
    if row >= data.len() {
        return Err(runtime(CounterfactualError::RowOutOfRange { row, len: data.len() }));
    }
    let x = data.row(row);
    let z = engine.abduct(&cgnf::numeric::Tensor::row(x.to_vec())).map_err(runtime)?;
    let named = |v: &[f64]| -> BTreeMap<String, f64> { dag.nodes().iter().cloned().zip(v.iter().copied()).collect() };
    let [a1, a0] = config.treatments;
    Ok(CounterfactualAnswer {
        row,
        seed,
        observed: named(x),
        noise: NoiseSummary { values: named(z.data()), norm: z.data().iter().map(|v| v * v).sum::<f64>().sqrt() },
        treatment,
        potential_outcome: engine.counterfactual_outcome(x, treatment).map_err(runtime)?,
        a1,
        a0,
        ice: engine.estimate_ice(x, a1, a0, None).map_err(runtime)?.estimate,
        thresholded_ice: engine.estimate_ice(x, a1, a0, Some(config.cut)).map_err(runtime)?.estimate,
        cut: config.cut,
    })
}

/// Where `synth` put the run config, and the true effects.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthOutput {
    pub config: PathBuf,
    pub oracle: OracleEffects,
}

fn read_scm(path: &Path) -> Result<SyntheticScm, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
    SyntheticScm::parse(&text).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
}

pub fn synth(args: &SynthArgs) -> Result<SynthOutput, CliError> {
    let scm = match (&args.fixture, &args.scm) {
        (Some(name), _) => {
            if fixtures::source(name).is_none() {
                return Err(CliError::Validation(format!(
                    "unknown fixture `{name}`; expected one of {}",
                    fixtures::NAMES.join(", ")
                )));
            }
            fixtures::load(name).map_err(runtime)?
        }
        (None, Some(path)) => read_scm(path)?,
        (None, None) => return Err(CliError::Validation("either --fixture or --scm is required".into())),
    };
    if args.rows == 0 {
        return Err(CliError::Validation("--rows must be positive".into()));
    }
    let out = &args.out;
    create_dir(out)?;
    let data = scm.sample(args.rows, args.seed).map_err(runtime)?;
    let file = fs::File::create(out.join("data.csv")).map_err(runtime)?;
    data.write_csv(std::io::BufWriter::new(file)).map_err(runtime)?;
    write_json(&out.join("columns.json"), &columns_to_file(data.columns()))?;
    fs::write(out.join("dag.cdag"), scm.dag().to_canonical()).map_err(runtime)?;
    fs::write(out.join("scm.txt"), scm.to_string()).map_err(runtime)?;
    let oracle = oracle_effects(&scm, 1.0, 0.0).map_err(runtime)?;
    write_json(&out.join("oracle.json"), &oracle)?;

    let mut config = RunConfig::new(
        "dag.cdag".into(),
        "data.csv".into(),
        "columns.json".into(),
        "models".into(),
        "reports".into(),
    );
    if scm.group().is_none() {
        config.strategies.retain(|k| *k != StrategyKind::TSC);
    }
    let config_path = out.join("run.json");
    write_json(&config_path, &config)?;
    Ok(SynthOutput { config: config_path, oracle })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BackdoorSide {
    pub estimate: f64,
    pub std_error: f64,
}

/// Model, backdoor and true effects side by side.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Triangle {
    pub a1: f64,
    pub a0: f64,
    pub truth: f64,
    pub truth_std_error: f64,
    pub model: f64,
    pub model_std_error: f64,
    pub per_seed: Vec<SeedEffect>,
    /// Absent when the adjustment set is not discrete or positivity fails.
    pub backdoor: Option<BackdoorSide>,
    pub backdoor_note: Option<String>,
    pub tolerance: f64,
    pub model_vs_truth: bool,
    pub model_vs_backdoor: Option<bool>,
    pub passed: bool,
}

pub fn validate(config: &RunConfig, scm_path: &Path, tolerance: f64) -> Result<Triangle, CliError> {
    if !(tolerance > 0.0) {
        return Err(CliError::Validation("tolerance must be positive".into()));
    }
    let scm = read_scm(scm_path)?;
    let (dag, data) = config.read_inputs()?;
    if scm.dag().to_canonical() != dag.to_canonical() {
        return Err(CliError::Validation("SCM graph differs from the configured DAG".into()));
    }
    let units = units(config, &data);
    let models = load_models(config)?;
    create_dir(&config.output_dir)?;
    let [a1, a0] = config.treatments;
    let truth = oracle_effects(&scm, a1, a0).map_err(runtime)?;

    let mut per_seed = Vec::new();
    for (seed, model) in &models {
        let engine = Engine::new(model).map_err(runtime)?;
        let effect = engine.estimate_ace(&units, a1, a0, config.ace_mode).map_err(runtime)?;
        per_seed.push(SeedEffect::new(*seed, &effect));
    }
    let n = per_seed.len() as f64;
    let model = per_seed.iter().map(|s| s.estimate).sum::<f64>() / n;
    let model_se = per_seed.iter().map(|s| s.std_error.unwrap_or(0.0)).sum::<f64>() / n;

    let (backdoor, backdoor_note) = match backdoor_ace(&data, &dag, a1, a0) {
        Ok(e) => (Some(BackdoorSide { estimate: e.estimate, std_error: e.std_error.unwrap_or(0.0) }), None),
        Err(e) => (None, Some(e.to_string())),
    };
    let model_vs_truth = (model - truth.ace).abs() <= tolerance;
    let model_vs_backdoor =
        backdoor.as_ref().map(|b| (model - b.estimate).abs() <= 3.0 * (model_se.powi(2) + b.std_error.powi(2)).sqrt());
    let report = Triangle {
        a1,
        a0,
        truth: truth.ace,
        truth_std_error: truth.ace_std_error,
        model,
        model_std_error: model_se,
        per_seed,
        backdoor,
        backdoor_note,
        tolerance,
        model_vs_truth,
        model_vs_backdoor,
        passed: model_vs_truth && model_vs_backdoor.unwrap_or(true),
    };
    write_json(&config.output_dir.join("triangle.json"), &report)?;
    Ok(report)
}
