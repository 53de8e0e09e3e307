//! Synthetic structural causal models with known effects.
//!
//! An SCM is written one statement per line:
//!
//! ```text
//! # comment
//! treatment A
//! outcome Y
//! group G
//! role C confounder
//! C [continuous] ~ normal(0, 1) := U
//! A [discrete 2] ~ uniform(0, 1) := U < sigmoid(C - 1)
//! Y [continuous] ~ normal(0, 0.5) := 2*A + C + U
//! ```
//!
//! Each node declares its kind, an optional noise distribution (`U` is zero
//! when it is omitted) and a mechanism over other nodes and `U`. Parents are
//! the nodes the mechanism mentions. A `[discrete K]` node rounds its value
//! and clamps it to `0..K-1` at the end of its mechanism, so children see the
//! discrete value. Noise distributions are `normal(mean, sd)`,
//! `uniform(lo, hi)`, `bernoulli(p)` and `categorical(p0, p1, ...)`, the last
//! taking values `0, 1, ...`.

mod backdoor;
mod expr;
pub mod fixtures;
mod oracle;

use std::collections::BTreeMap;
use std::fmt;

use rand::distr::weighted::WeightedIndex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::dag::{CausalDag, DagError, NodeRole};
use crate::numeric::Tensor;
use crate::trainer::{ColumnKind, ColumnSpec, Dataset, TrainError};

pub use backdoor::backdoor_ace;
pub use expr::{Affine, Expr};
pub use oracle::{oracle_effects, oracle_effects_with, GroupEffect, OracleEffects, OracleMethod};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SynthError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Dag(#[from] DagError),
    #[error("invalid noise distribution: {0}")]
    InvalidDistribution(String),
    #[error("SCM has no `{0}` node")]
    MissingRole(&'static str),
    #[error("mechanism not supported by this oracle: {0}")]
    UnsupportedMechanism(String),
    #[error("positivity violated in stratum {stratum}: no units with treatment {treatment}")]
    PositivityViolation { stratum: String, treatment: f64 },
    #[error("adjustment variable `{0}` is not discrete")]
    NonDiscreteAdjustment(String),
    #[error("sample size must be at least 1")]
    EmptySample,
    #[error(transparent)]
    Train(#[from] TrainError),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Noise {
    Zero,
    Normal { mean: f64, sd: f64 },
    Uniform { lo: f64, hi: f64 },
    Bernoulli(f64),
    Categorical(Vec<f64>),
}

impl Noise {
    fn parse(text: &str) -> Result<Self, String> {
        let text = text.trim();
        let (name, rest) = text.split_once('(').ok_or_else(|| format!("expected `name(args)`, got `{text}`"))?;
        let inner = rest.strip_suffix(')').ok_or("missing `)` in noise distribution")?;
        let args = inner
            .split(',')
            .map(|a| a.trim().parse::<f64>().map_err(|_| format!("bad number `{}`", a.trim())))
            .collect::<Result<Vec<f64>, String>>()?;
        let arity = |n: usize| if args.len() == n { Ok(()) } else { Err(format!("`{}` takes {n} argument(s)", name.trim())) };
        let noise = match name.trim() {
            "normal" => {
                arity(2)?;
                Noise::Normal { mean: args[0], sd: args[1] }
            }
            "uniform" => {
                arity(2)?;
                Noise::Uniform { lo: args[0], hi: args[1] }
            }
            "bernoulli" => {
                arity(1)?;
                Noise::Bernoulli(args[0])
            }
            "categorical" => Noise::Categorical(args),
            other => return Err(format!("unknown distribution `{other}`")),
        };
        noise.validate()?;
        Ok(noise)
    }

    fn validate(&self) -> Result<(), String> {
        let ok = match self {
            Noise::Zero => true,
            Noise::Normal { mean, sd } => mean.is_finite() && sd.is_finite() && *sd > 0.0,
            Noise::Uniform { lo, hi } => lo.is_finite() && hi.is_finite() && lo < hi,
            Noise::Bernoulli(p) => (0.0..=1.0).contains(p),
            Noise::Categorical(ps) => {
                !ps.is_empty() && ps.iter().all(|p| p.is_finite() && *p >= 0.0) && (ps.iter().sum::<f64>() - 1.0).abs() < 1e-9
            }
        };
        if ok {
            Ok(())
        } else {
            Err(format!("invalid parameters in {self:?}"))
        }
    }

    /// Finite support as `(value, probability)`, if any.
    pub fn support(&self) -> Option<Vec<(f64, f64)>> {
        match self {
            Noise::Zero => Some(vec![(0.0, 1.0)]),
            Noise::Bernoulli(p) => Some(vec![(0.0, 1.0 - p), (1.0, *p)]),
            Noise::Categorical(ps) => Some(ps.iter().enumerate().map(|(k, &p)| (k as f64, p)).collect()),
            Noise::Normal { .. } | Noise::Uniform { .. } => None,
        }
    }

    pub fn mean(&self) -> f64 {
        match self {
            Noise::Zero => 0.0,
            Noise::Normal { mean, .. } => *mean,
            Noise::Uniform { lo, hi } => 0.5 * (lo + hi),
            Noise::Bernoulli(p) => *p,
            Noise::Categorical(ps) => ps.iter().enumerate().map(|(k, p)| k as f64 * p).sum(),
        }
    }

    pub fn variance(&self) -> f64 {
        match self {
            Noise::Normal { sd, .. } => sd * sd,
            Noise::Uniform { lo, hi } => (hi - lo).powi(2) / 12.0,
            other => {
                let m = other.mean();
                other.support().unwrap_or_default().iter().map(|(v, p)| p * (v - m).powi(2)).sum()
            }
        }
    }
}

/// Draws one value per noise spec.
enum Sampler {
    Zero,
    Normal(Normal<f64>),
    Uniform(f64, f64),
    Bernoulli(f64),
    Categorical(WeightedIndex<f64>),
}

impl Sampler {
    fn new(noise: &Noise) -> Result<Self, SynthError> {
        let bad = |e: String| SynthError::InvalidDistribution(e);
        Ok(match noise {
            Noise::Zero => Sampler::Zero,
            Noise::Normal { mean, sd } => Sampler::Normal(Normal::new(*mean, *sd).map_err(|e| bad(e.to_string()))?),
            Noise::Uniform { lo, hi } => Sampler::Uniform(*lo, *hi),
            Noise::Bernoulli(p) => Sampler::Bernoulli(*p),
            Noise::Categorical(ps) => Sampler::Categorical(WeightedIndex::new(ps).map_err(|e| bad(e.to_string()))?),
        })
    }

    fn draw<R: Rng>(&self, rng: &mut R) -> f64 {
        match self {
            Sampler::Zero => 0.0,
            Sampler::Normal(d) => d.sample(rng),
            Sampler::Uniform(lo, hi) => rng.random_range(*lo..*hi),
            Sampler::Bernoulli(p) => {
                if rng.random::<f64>() < *p {
                    1.0
                } else {
                    0.0
                }
            }
            Sampler::Categorical(d) => d.sample(rng) as f64,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mechanism {
    pub kind: ColumnKind,
    pub noise: Noise,
    pub expr: Expr,
    /// Source text of the mechanism, kept for display.
    pub text: String,
}

impl Mechanism {
    /// Value of the node given all node values computed so far and its noise.
    pub fn apply(&self, values: &[f64], noise: f64) -> f64 {
        let v = self.expr.eval(values, noise);
        match self.kind {
            ColumnKind::Discrete { cardinality } => v.round().clamp(0.0, (cardinality - 1) as f64),
            ColumnKind::Continuous => v,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticScm {
    dag: CausalDag,
    mechanisms: Vec<Mechanism>,
    roles: Vec<NodeRole>,
    group: Option<usize>,
}

/// Samples of an SCM together with the noise that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct ScmSample {
    pub data: Dataset,
    pub noise: Tensor,
}

impl SyntheticScm {
    pub fn parse(text: &str) -> Result<Self, SynthError> {
        struct Decl<'a> {
            line: usize,
            name: String,
            kind: ColumnKind,
            noise: Noise,
            expr: &'a str,
        }
        let err = |line: usize, message: String| SynthError::Parse { line, message };
        let mut decls: Vec<Decl> = Vec::new();
        let mut directives: Vec<(usize, Vec<&str>)> = Vec::new();
        for (k, raw) in text.lines().enumerate() {
            let line = k + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let Some((head, expr)) = body.split_once(":=") else {
                directives.push((line, body.split_whitespace().collect()));
                continue;
            };
            let (head, noise) = match head.split_once('~') {
                Some((h, n)) => (h, Noise::parse(n).map_err(|m| err(line, m))?),
                None => (head, Noise::Zero),
            };
            let (name, kind) = head.split_once('[').ok_or_else(|| err(line, "expected `NAME [kind]`".into()))?;
            let kind_text = kind.trim().strip_suffix(']').ok_or_else(|| err(line, "missing `]`".into()))?;
            let words: Vec<&str> = kind_text.split_whitespace().collect();
            let kind = match words.as_slice() {
                ["continuous"] => ColumnKind::Continuous,
                ["discrete", k] => match k.parse::<usize>() {
                    Ok(c) if c >= 2 => ColumnKind::Discrete { cardinality: c },
                    _ => return Err(err(line, format!("bad cardinality `{k}`"))),
                },
                _ => return Err(err(line, format!("unknown kind `{kind_text}`"))),
            };
            let name = name.trim().to_string();
            if name == "U" {
                return Err(err(line, "`U` is reserved for noise".into()));
            }
            decls.push(Decl { line, name, kind, noise, expr: expr.trim() });
        }
        if decls.is_empty() {
            return Err(SynthError::Dag(DagError::EmptySpec));
        }
        let names: Vec<String> = decls.iter().map(|d| d.name.clone()).collect();
        let lookup = |n: &str| names.iter().position(|x| x == n);
        let mut mechanisms = Vec::with_capacity(decls.len());
        let mut edges = Vec::new();
        for (i, d) in decls.iter().enumerate() {
            let expr = expr::parse(d.expr, &lookup).map_err(|m| err(d.line, m))?;
            let mut parents = Vec::new();
            expr.variables(&mut parents);
            parents.sort_unstable();
            if parents.contains(&i) {
                return Err(err(d.line, format!("`{}` refers to itself", d.name)));
            }
            edges.extend(parents.into_iter().map(|p| (p, i)));
            mechanisms.push(Mechanism { kind: d.kind, noise: d.noise.clone(), expr, text: d.expr.to_string() });
        }
        let dag = CausalDag::from_edges(names, &edges)?;
        let mut roles = vec![NodeRole::Plain; dag.len()];
        let mut group = None;
        for (line, words) in directives {
            let node = |n: &str| dag.index_of(n).map_err(|_| err(line, format!("unknown node `{n}`")));
            match words.as_slice() {
                ["treatment", n] => roles[node(n)?] = NodeRole::Treatment,
                ["outcome", n] => roles[node(n)?] = NodeRole::Outcome,
                ["group", n] => group = Some(node(n)?),
                ["role", n, r] => {
                    roles[node(n)?] = serde_json::from_value(serde_json::Value::String(r.to_string()))
                        .map_err(|_| err(line, format!("unknown role `{r}`")))?
                }
                _ => return Err(err(line, format!("cannot parse `{}`", words.join(" ")))),
            }
        }
        for role in [NodeRole::Treatment, NodeRole::Outcome] {
            if roles.iter().filter(|&&r| r == role).count() > 1 {
                return Err(err(0, format!("more than one {role:?} node")));
            }
        }
        if let Some(g) = group {
            if mechanisms[g].kind.cardinality().is_none() {
                return Err(err(0, "group node must be discrete".into()));
            }
        }
        Ok(Self { dag, mechanisms, roles, group })
    }

    pub fn dag(&self) -> &CausalDag {
        &self.dag
    }

    pub fn mechanisms(&self) -> &[Mechanism] {
        &self.mechanisms
    }

    pub fn len(&self) -> usize {
        self.dag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dag.is_empty()
    }

    pub fn group(&self) -> Option<usize> {
        self.group
    }

    fn role(&self, role: NodeRole, label: &'static str) -> Result<usize, SynthError> {
        self.roles.iter().position(|&r| r == role).ok_or(SynthError::MissingRole(label))
    }

    pub fn treatment(&self) -> Result<usize, SynthError> {
        self.role(NodeRole::Treatment, "treatment")
    }

    pub fn outcome(&self) -> Result<usize, SynthError> {
        self.role(NodeRole::Outcome, "outcome")
    }

    /// Column specs in node order, as the trainer expects them.
    pub fn columns(&self) -> Vec<ColumnSpec> {
        self.dag
            .nodes()
            .iter()
            .enumerate()
            .map(|(i, name)| ColumnSpec {
                name: name.clone(),
                kind: self.mechanisms[i].kind,
                role: self.roles[i],
                group_key: self.group == Some(i),
            })
            .collect()
    }

    /// Copy in which `node` is set to `value` and ignores its parents.
    pub fn mutilate(&self, node: usize, value: f64) -> Result<Self, SynthError> {
        let dag = self.dag.mutilate(self.dag.name(node))?;
        let mut mechanisms = self.mechanisms.clone();
        let m = &mut mechanisms[node];
        m.expr = Expr::Num(value);
        m.text = format!("{value}");
        Ok(Self { dag, mechanisms, roles: self.roles.clone(), group: self.group })
    }

    /// `[n, d]` noise draws, row by row in node order.
    pub fn draw_noise(&self, n: usize, seed: u64) -> Result<Tensor, SynthError> {
        let samplers = self.mechanisms.iter().map(|m| Sampler::new(&m.noise)).collect::<Result<Vec<_>, _>>()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut data = Vec::with_capacity(n * self.len());
        for _ in 0..n {
            data.extend(samplers.iter().map(|s| s.draw(&mut rng)));
        }
        Ok(Tensor::from_vec(&[n, self.len()], data).expect("shape"))
    }

    /// Node values for one noise vector, with `clamps` overriding mechanisms.
    pub fn evaluate(&self, noise: &[f64], clamps: &[(usize, f64)], out: &mut [f64]) {
        for &i in self.dag.topo_order() {
            out[i] = match clamps.iter().find(|(j, _)| *j == i) {
                Some(&(_, v)) => v,
                None => self.mechanisms[i].apply(out, noise[i]),
            };
        }
    }

    /// Values for every row of a noise matrix.
    pub fn evaluate_all(&self, noise: &Tensor, clamps: &[(usize, f64)]) -> Tensor {
        let d = self.len();
        let mut out = Tensor::zeros(&[noise.rows(), d]);
        for (src, dst) in noise.data().chunks(d).zip(out.data_mut().chunks_mut(d)) {
            self.evaluate(src, clamps, dst);
        }
        out
    }

    /// Ancestral sample of `n` units.
    pub fn sample(&self, n: usize, seed: u64) -> Result<Dataset, SynthError> {
        Ok(self.sample_with_noise(n, seed, &[])?.data)
    }

    /// Ancestral sample under `clamps`, returning the noise as well.
    pub fn sample_with_noise(&self, n: usize, seed: u64, clamps: &[(usize, f64)]) -> Result<ScmSample, SynthError> {
        if n == 0 {
            return Err(SynthError::EmptySample);
        }
        let noise = self.draw_noise(n, seed)?;
        let values = self.evaluate_all(&noise, clamps);
        Ok(ScmSample { data: Dataset::new(self.columns(), values)?, noise })
    }

    /// Exact joint distribution of an SCM whose nodes are all discrete and
    /// whose noises all have finite support.
    pub fn joint_distribution(&self) -> Result<BTreeMap<Vec<i64>, f64>, SynthError> {
        let supports = self
            .mechanisms
            .iter()
            .map(|m| {
                if m.kind.cardinality().is_none() {
                    return Err(SynthError::UnsupportedMechanism("continuous node".into()));
                }
                m.noise.support().ok_or_else(|| SynthError::UnsupportedMechanism("continuous noise".into()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let mut joint = BTreeMap::new();
        let mut values = vec![0.0; self.len()];
        for (noise, p) in oracle::product(&supports, 1 << 20)? {
            self.evaluate(&noise, &[], &mut values);
            *joint.entry(values.iter().map(|&v| v as i64).collect()).or_insert(0.0) += p;
        }
        Ok(joint)
    }

    /// Covariance of an SCM whose mechanisms are affine with constant
    /// coefficients and whose nodes are continuous.
    pub fn linear_covariance(&self) -> Result<Tensor, SynthError> {
        let d = self.len();
        // x = B x + D u + c, so x - E[x] = (I - B)^{-1} D (u - E[u])
        let mut mix = vec![vec![0.0; d]; d];
        for &i in self.dag.topo_order() {
            let m = &self.mechanisms[i];
            if m.kind.cardinality().is_some() {
                return Err(SynthError::UnsupportedMechanism(format!("`{}` is discrete", self.dag.name(i))));
            }
            let aff = m.expr.affine().ok_or_else(|| SynthError::UnsupportedMechanism(m.text.clone()))?;
            let mut row = vec![0.0; d];
            row[i] = aff.coef(None);
            for p in self.dag.parent_indices(i) {
                let c = aff.coef(Some(p));
                for k in 0..d {
                    row[k] += c * mix[p][k];
                }
            }
            mix[i] = row;
        }
        let var: Vec<f64> = self.mechanisms.iter().map(|m| m.noise.variance()).collect();
        let mut cov = Tensor::zeros(&[d, d]);
        for a in 0..d {
            for b in 0..d {
                cov.set(a, b, (0..d).map(|k| mix[a][k] * mix[b][k] * var[k]).sum());
            }
        }
        Ok(cov)
    }
}

impl fmt::Display for SyntheticScm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, role) in self.roles.iter().enumerate() {
            match role {
                NodeRole::Treatment => writeln!(f, "treatment {}", self.dag.name(i))?,
                NodeRole::Outcome => writeln!(f, "outcome {}", self.dag.name(i))?,
                NodeRole::Plain => {}
                other => {
                    let r = serde_json::to_value(other).map_err(|_| fmt::Error)?;
                    writeln!(f, "role {} {}", self.dag.name(i), r.as_str().unwrap_or_default())?
                }
            }
        }
        if let Some(g) = self.group {
            writeln!(f, "group {}", self.dag.name(g))?;
        }
        for (i, m) in self.mechanisms.iter().enumerate() {
            let kind = match m.kind {
                ColumnKind::Discrete { cardinality } => format!("discrete {cardinality}"),
                ColumnKind::Continuous => "continuous".into(),
            };
            let noise = match &m.noise {
                Noise::Zero => String::new(),
                Noise::Normal { mean, sd } => format!(" ~ normal({mean}, {sd})"),
                Noise::Uniform { lo, hi } => format!(" ~ uniform({lo}, {hi})"),
                Noise::Bernoulli(p) => format!(" ~ bernoulli({p})"),
                Noise::Categorical(ps) => {
                    format!(" ~ categorical({})", ps.iter().map(|p| p.to_string()).collect::<Vec<_>>().join(", "))
                }
            };
            writeln!(f, "{} [{kind}]{noise} := {}", self.dag.name(i), m.text)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests;
