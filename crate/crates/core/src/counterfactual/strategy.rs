use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{cace, CounterfactualError, Engine, PotentialOutcomes};
use crate::trainer::Dataset;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum StrategyKind {
    /// Discourage everyone.
    TS0,
    /// Encourage everyone.
    TS1,
    /// Keep the observed treatment.
    TSOb,
    /// Decide per group from the conditional average effect.
    TSC,
    /// Decide per unit from the individual effect.
    TSI,
    /// Decide per unit from the thresholded individual effect.
    TSIt,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 6] =
        [StrategyKind::TS0, StrategyKind::TS1, StrategyKind::TSOb, StrategyKind::TSC, StrategyKind::TSI, StrategyKind::TSIt];

    pub fn name(self) -> &'static str {
        match self {
            StrategyKind::TS0 => "TS0",
            StrategyKind::TS1 => "TS1",
            StrategyKind::TSOb => "TSOb",
            StrategyKind::TSC => "TSC",
            StrategyKind::TSI => "TSI",
            StrategyKind::TSIt => "TSIt",
        }
    }
}

impl std::str::FromStr for StrategyKind {
    type Err = CounterfactualError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        StrategyKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| CounterfactualError::InvalidStrategy(format!("unknown strategy `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreatmentStrategy {
    pub kind: StrategyKind,
    /// Effects with magnitude at most `epsilon` count as neutral.
    pub epsilon: f64,
    pub lower_is_better: bool,
    /// Outcomes above `cut` count as poor in the thresholded effect.
    pub cut: f64,
}

impl TreatmentStrategy {
    pub fn new(kind: StrategyKind) -> Self {
        Self { kind, epsilon: 0.05, lower_is_better: true, cut: 1.0 }
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = epsilon;
        self
    }

    fn decide(&self, effect: f64) -> Decision {
        let benefit = if self.lower_is_better { -effect } else { effect };
        if benefit > self.epsilon {
            Decision::Encourage
        } else if benefit < -self.epsilon {
            Decision::Discourage
        } else {
            Decision::Neutral
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Decision {
    Encourage,
    Discourage,
    Neutral,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    pub decision: Decision,
    /// Treatment used when evaluating outcomes.
    pub treatment: f64,
}

/// Percentages of units per decision.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Advisability {
    pub encouraged: f64,
    pub discouraged: f64,
    pub neutral: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StrategyAssignment {
    pub strategy: TreatmentStrategy,
    pub assignments: Vec<Assignment>,
    pub advisability: Advisability,
}

/// Assigns a decision to every unit from its potential outcomes under
/// encouragement (`po.a1`) and discouragement (`po.a0`).
pub fn assign_strategy(po: &PotentialOutcomes, strategy: TreatmentStrategy) -> Result<StrategyAssignment, CounterfactualError> {
    if !(strategy.epsilon >= 0.0) || !strategy.cut.is_finite() {
        return Err(CounterfactualError::InvalidStrategy(format!("epsilon {} / cut {}", strategy.epsilon, strategy.cut)));
    }
    if po.is_empty() {
        return Err(CounterfactualError::EmptyUnits);
    }
    let n = po.len();
    let decisions: Vec<Decision> = match strategy.kind {
        StrategyKind::TS0 => vec![Decision::Discourage; n],
        StrategyKind::TS1 => vec![Decision::Encourage; n],
        StrategyKind::TSOb => po
            .observed_treatment
            .iter()
            .map(|&t| {
                if t == po.a1 {
                    Ok(Decision::Encourage)
                } else if t == po.a0 {
                    Ok(Decision::Discourage)
                } else {
                    Err(CounterfactualError::MissingObservedTreatment)
                }
            })
            .collect::<Result<_, _>>()?,
        StrategyKind::TSC => {
            let per_group = cace(po)?;
            let groups = po.groups.as_ref().ok_or(CounterfactualError::MissingGroupKey)?;
            groups.iter().map(|g| strategy.decide(per_group[g].estimate)).collect()
        }
        StrategyKind::TSI => po.ice().into_iter().map(|e| strategy.decide(e)).collect(),
        StrategyKind::TSIt => po.thresholded_ice(strategy.cut).into_iter().map(|e| strategy.decide(e)).collect(),
    };
    let assignments: Vec<Assignment> = decisions
        .iter()
        .zip(&po.observed_treatment)
        .map(|(&decision, &observed)| Assignment {
            decision,
            treatment: match decision {
                Decision::Encourage => po.a1,
                Decision::Discourage => po.a0,
                Decision::Neutral => observed,
            },
        })
        .collect();
    let share = |d: Decision| 100.0 * decisions.iter().filter(|&&x| x == d).count() as f64 / n as f64;
    let advisability = Advisability {
        encouraged: share(Decision::Encourage),
        discouraged: share(Decision::Discourage),
        neutral: share(Decision::Neutral),
    };
    Ok(StrategyAssignment { strategy, assignments, advisability })
}

#[derive(Debug, Clone, PartialEq)]
pub struct StrategyOutcome {
    /// Potential outcome of each unit under its resolved treatment.
    pub outcomes: Vec<f64>,
    /// Counts per outcome level, for discrete outcomes.
    pub histogram: Option<Vec<usize>>,
    pub mean: f64,
    pub group_means: BTreeMap<i64, f64>,
}

/// Evaluates each unit's outcome under its assigned treatment.
pub fn evaluate_strategy(
    engine: &Engine<'_>,
    units: &Dataset,
    po: &PotentialOutcomes,
    assignments: &[Assignment],
) -> Result<StrategyOutcome, CounterfactualError> {
    engine.check_units(units)?;
    let n = units.len();
    if assignments.len() != n || po.len() != n {
        return Err(CounterfactualError::AssignmentCount { expected: n, got: assignments.len().min(po.len()) });
    }
    let mut outcomes = vec![0.0; n];
    let mut rest = Vec::new();
    for (r, a) in assignments.iter().enumerate() {
        if a.treatment == po.a1 {
            outcomes[r] = po.y1[r];
        } else if a.treatment == po.a0 {
            outcomes[r] = po.y0[r];
        } else {
            rest.push(r);
        }
    }
    if !rest.is_empty() {
        let subset = units.select(&rest);
        let treatments: Vec<f64> = rest.iter().map(|&r| assignments[r].treatment).collect();
        let ys = engine.counterfactual_outcomes(subset.values(), &treatments)?;
        for (&r, y) in rest.iter().zip(ys) {
            outcomes[r] = y;
        }
    }
    let histogram = engine.outcome_column().kind.cardinality().map(|levels| {
        let mut h = vec![0; levels];
        for &y in &outcomes {
            h[y as usize] += 1;
        }
        h
    });
    let mean = outcomes.iter().sum::<f64>() / n as f64;
    let mut sums: BTreeMap<i64, (f64, usize)> = BTreeMap::new();
    if let Some(groups) = &po.groups {
        for (g, y) in groups.iter().zip(&outcomes) {
            let e = sums.entry(*g).or_default();
            e.0 += y;
            e.1 += 1;
        }
    }
    let group_means = sums.into_iter().map(|(g, (s, c))| (g, s / c as f64)).collect();
    Ok(StrategyOutcome { outcomes, histogram, mean, group_means })
}
