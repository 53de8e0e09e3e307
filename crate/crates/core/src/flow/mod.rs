//! Causal graphical normalizing flow.
//!
//! Each node `i` owns a conditioner network that sees only the parents of `i`
//! (all other inputs are multiplied by zero) and produces a context vector
//! `h_i`. The node's transformer is
//!
//! ```text
//! tau_i(x; h) = integral_0^x g_i(t, h) dt + beta_i(h),   g_i = elu(.) + 1 + delta
//! ```
//!
//! which is strictly increasing in `x`. Visiting nodes in topological order
//! gives a triangular map `T: X -> Z` with log-determinant `sum_i log g_i`.
//! The inverse is solved coordinate-wise by bracketed root finding, and
//! clamping coordinates during the inverse realizes an intervention.

mod quadrature;

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dag::{CausalDag, DagError};
use crate::numeric::{positive_elu, Gradients, Mlp, MlpVars, NumericError, Tape, Tensor, Var};

pub use quadrature::ClenshawCurtis;

pub const LOG_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FlowError {
    #[error("expected {expected} coordinates, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("non-finite input")]
    NonFiniteInput,
    #[error("could not bracket the inverse of node `{0}`")]
    RootNotBracketed(String),
    #[error(transparent)]
    Dag(#[from] DagError),
    #[error(transparent)]
    Numeric(#[from] NumericError),
    #[error("parameter vector has {got} values, model needs {expected}")]
    ParameterCount { expected: usize, got: usize },
}

/// Architecture of a flow.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowConfig {
    pub conditioner_hidden: Vec<usize>,
    pub transformer_hidden: Vec<usize>,
    pub context_width: usize,
    pub quadrature_nodes: usize,
    pub delta: f64,
}

impl Default for FlowConfig {
    fn default() -> Self {
        Self {
            conditioner_hidden: vec![40, 30, 20],
            transformer_hidden: vec![15, 10, 5],
            context_width: 10,
            quadrature_nodes: 50,
            delta: 1e-6,
        }
    }
}

/// Per-column affine map applied before the flow: `u = (x - shift) / scale`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub shift: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardization {
    pub fn identity(d: usize) -> Self {
        Self { shift: vec![0.0; d], scale: vec![1.0; d] }
    }

    pub fn log_scale_sum(&self) -> f64 {
        self.scale.iter().map(|s| s.ln()).sum()
    }
}

/// Networks of a single node.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeFlow {
    /// `d -> context`, input masked to the node's parents.
    pub conditioner: Mlp,
    /// `(t, context) -> 1`, made positive with `elu + 1 + delta`.
    pub integrand: Mlp,
    /// `context -> 1`, the transformer's offset at `x = 0`.
    pub offset: Mlp,
}

impl NodeFlow {
    fn params(&self) -> impl Iterator<Item = &Tensor> {
        self.conditioner.params().chain(self.integrand.params()).chain(self.offset.params())
    }

    fn params_mut(&mut self) -> impl Iterator<Item = &mut Tensor> {
        self.conditioner.params_mut().chain(self.integrand.params_mut()).chain(self.offset.params_mut())
    }
}

/// Tape handles for one node's parameters.
pub struct NodeVars {
    conditioner: MlpVars,
    integrand: MlpVars,
    offset: MlpVars,
}

impl NodeVars {
    /// Gradients in [`FlowModel::node_params`] order.
    pub fn collect(&self, grads: &mut Gradients) -> Result<Vec<Tensor>, NumericError> {
        let mut out = Mlp::collect_grads(&self.conditioner, grads)?;
        out.extend(Mlp::collect_grads(&self.integrand, grads)?);
        out.extend(Mlp::collect_grads(&self.offset, grads)?);
        Ok(out)
    }
}

/// Values forced onto one node during the inverse.
#[derive(Debug, Clone, PartialEq)]
pub enum ClampValues {
    All(f64),
    PerUnit(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Intervention {
    pub node: usize,
    pub values: ClampValues,
}

impl Intervention {
    pub fn constant(node: usize, value: f64) -> Self {
        Self { node, values: ClampValues::All(value) }
    }

    fn value(&self, unit: usize) -> f64 {
        match &self.values {
            ClampValues::All(v) => *v,
            ClampValues::PerUnit(v) => v[unit],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowModel {
    dag: CausalDag,
    config: FlowConfig,
    nodes: Vec<NodeFlow>,
    masks: Vec<Tensor>,
    standardization: Standardization,
    quadrature: ClenshawCurtis,
}

const BRACKET_START: f64 = 10.0;
const BRACKET_DOUBLINGS: usize = 60;
const SOLVER_TOL: f64 = 1e-11;
const SOLVER_MAX_ITER: usize = 200;

impl FlowModel {
    /// Randomly initialized flow over `dag`.
    pub fn new(dag: CausalDag, config: FlowConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = dag.len();
        let c = config.context_width;
        let widths = |input: usize, hidden: &[usize], out: usize, rng: &mut ChaCha8Rng| {
            let w: Vec<usize> = std::iter::once(input).chain(hidden.iter().copied()).chain([out]).collect();
            Mlp::new(&w, rng)
        };
        let nodes = (0..d)
            .map(|_| NodeFlow {
                conditioner: widths(d, &config.conditioner_hidden, c, &mut rng),
                integrand: widths(1 + c, &config.transformer_hidden, 1, &mut rng),
                offset: widths(c, &[], 1, &mut rng),
            })
            .collect();
        Self::assemble(dag, config, nodes, Standardization::identity(d))
    }

    /// Flow whose every transformer is `tau(x) = slope * x` (all networks zero
    /// except the integrand's output bias).
    pub fn constant_slope(dag: CausalDag, config: FlowConfig, slope: f64) -> Self {
        assert!(slope > config.delta, "slope must exceed delta");
        let mut model = Self::new(dag, config, 0);
        let delta = model.config.delta;
        // invert elu(b) + 1 + delta = slope
        let b = if slope - 1.0 - delta > 0.0 { slope - 1.0 - delta } else { (slope - delta).ln() };
        for node in &mut model.nodes {
            node.params_mut().for_each(|p| p.data_mut().iter_mut().for_each(|v| *v = 0.0));
            let last = node.integrand.layers_mut().last_mut().expect("integrand layers");
            last.bias.data_mut()[0] = b;
        }
        model
    }

    pub fn assemble(dag: CausalDag, config: FlowConfig, nodes: Vec<NodeFlow>, standardization: Standardization) -> Self {
        let d = dag.len();
        let masks = (0..d)
            .map(|i| Tensor::row(dag.adjacency()[i].iter().map(|&p| if p { 1.0 } else { 0.0 }).collect()))
            .collect();
        let quadrature = ClenshawCurtis::new(config.quadrature_nodes);
        Self { dag, config, nodes, masks, standardization, quadrature }
    }

    pub fn dag(&self) -> &CausalDag {
        &self.dag
    }

    pub fn config(&self) -> &FlowConfig {
        &self.config
    }

    pub fn dim(&self) -> usize {
        self.dag.len()
    }

    pub fn nodes(&self) -> &[NodeFlow] {
        &self.nodes
    }

    pub fn standardization(&self) -> &Standardization {
        &self.standardization
    }

    pub fn set_standardization(&mut self, s: Standardization) {
        assert_eq!(s.shift.len(), self.dim());
        self.standardization = s;
    }

    pub fn quadrature(&self) -> &ClenshawCurtis {
        &self.quadrature
    }

    pub fn node_params(&self, i: usize) -> Vec<&Tensor> {
        self.nodes[i].params().collect()
    }

    pub fn node_params_mut(&mut self, i: usize) -> Vec<&mut Tensor> {
        self.nodes[i].params_mut().collect()
    }

    /// All parameters, node by node.
    pub fn params(&self) -> impl Iterator<Item = &Tensor> {
        self.nodes.iter().flat_map(|n| n.params())
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut Tensor> {
        self.nodes.iter_mut().flat_map(|n| n.params_mut())
    }

    pub fn param_count(&self) -> usize {
        self.params().map(Tensor::len).sum()
    }

    /// Overwrites every parameter from a flat vector in [`FlowModel::params`] order.
    pub fn load_flat(&mut self, values: &[f64]) -> Result<(), FlowError> {
        let expected = self.param_count();
        if values.len() != expected {
            return Err(FlowError::ParameterCount { expected, got: values.len() });
        }
        let mut offset = 0;
        for p in self.params_mut() {
            let n = p.len();
            p.data_mut().copy_from_slice(&values[offset..offset + n]);
            offset += n;
        }
        Ok(())
    }

    pub fn flat_params(&self) -> Vec<f64> {
        self.params().flat_map(|p| p.data().iter().copied()).collect()
    }

    fn check_batch(&self, x: &Tensor) -> Result<(), FlowError> {
        if x.cols() != self.dim() {
            return Err(FlowError::DimensionMismatch { expected: self.dim(), got: x.cols() });
        }
        if !x.is_finite() {
            return Err(FlowError::NonFiniteInput);
        }
        Ok(())
    }

    fn standardize(&self, x: &Tensor) -> Tensor {
        let d = self.dim();
        let mut u = x.clone();
        for row in u.data_mut().chunks_mut(d) {
            for (j, v) in row.iter_mut().enumerate() {
                *v = (*v - self.standardization.shift[j]) / self.standardization.scale[j];
            }
        }
        u
    }

    fn context(&self, i: usize, u: &Tensor) -> Result<Tensor, FlowError> {
        let d = self.dim();
        let mask = self.masks[i].data();
        let mut masked = u.clone();
        for row in masked.data_mut().chunks_mut(d) {
            for (v, m) in row.iter_mut().zip(mask) {
                *v *= m;
            }
        }
        Ok(self.nodes[i].conditioner.forward(&masked)?)
    }

    /// Context vector `h_i` for each row of `x` (raw coordinates).
    pub fn conditioner_output(&self, i: usize, x: &Tensor) -> Result<Tensor, FlowError> {
        self.check_batch(x)?;
        self.context(i, &self.standardize(x))
    }

    /// First-layer integrand pre-activation contributed by the context.
    fn context_preactivation(&self, i: usize, h: &Tensor) -> Result<Tensor, FlowError> {
        let first = &self.nodes[i].integrand.layers()[0];
        let c = self.config.context_width;
        let width = first.weight.cols();
        let w_ctx = Tensor::from_vec(&[c, width], first.weight.data()[width..].to_vec())?;
        let mut pre = h.matmul(&w_ctx)?;
        for row in pre.data_mut().chunks_mut(width) {
            for (v, b) in row.iter_mut().zip(first.bias.data()) {
                *v += b;
            }
        }
        Ok(pre)
    }

    /// Integrand values at `per_row` points for every context row.
    /// `points[r * per_row + k]` pairs with context row `r`.
    fn integrand_at(&self, i: usize, pre_ctx: &Tensor, rows: &[usize], points: &[f64], per_row: usize) -> Result<Vec<f64>, FlowError> {
        let net = &self.nodes[i].integrand;
        let width = pre_ctx.cols();
        let w_t = &net.layers()[0].weight.data()[..width];
        let mut pre = Tensor::zeros(&[points.len(), width]);
        for (r, &row) in rows.iter().enumerate() {
            let base = pre_ctx.row_slice(row);
            for k in 0..per_row {
                let t = points[r * per_row + k];
                let dst = &mut pre.data_mut()[(r * per_row + k) * width..(r * per_row + k + 1) * width];
                for ((v, b), w) in dst.iter_mut().zip(base).zip(w_t) {
                    *v = b + t * w;
                }
            }
        }
        let out = net.forward_from(0, pre)?;
        let delta = self.config.delta;
        Ok(out.into_vec().into_iter().map(|v| positive_elu(v, delta)).collect())
    }

    /// `(tau(u), g(u))` for standardized coordinates `u[r]` of context rows `rows`.
    fn tau_and_slope(&self, i: usize, pre_ctx: &Tensor, offsets: &[f64], rows: &[usize], u: &[f64]) -> Result<(Vec<f64>, Vec<f64>), FlowError> {
        let q = self.quadrature.len();
        let per_row = q + 1;
        let mut points = Vec::with_capacity(rows.len() * per_row);
        for &x in u {
            points.extend(self.quadrature.points_on(x));
            points.push(x);
        }
        let g = self.integrand_at(i, pre_ctx, rows, &points, per_row)?;
        let weights = self.quadrature.weights();
        let mut tau = Vec::with_capacity(rows.len());
        let mut slope = Vec::with_capacity(rows.len());
        for (r, &row) in rows.iter().enumerate() {
            let vals = &g[r * per_row..(r + 1) * per_row];
            let integral: f64 = vals[..q].iter().zip(weights).map(|(v, w)| v * w).sum();
            tau.push(0.5 * u[r] * integral + offsets[row]);
            slope.push(vals[q]);
        }
        Ok((tau, slope))
    }

    fn offsets(&self, i: usize, h: &Tensor) -> Result<Vec<f64>, FlowError> {
        Ok(self.nodes[i].offset.forward(h)?.into_vec())
    }

    /// `T(x)` for a batch `[n, d]`: returns `z` and per-row log-determinants.
    pub fn transform_batch(&self, x: &Tensor) -> Result<(Tensor, Vec<f64>), FlowError> {
        self.check_batch(x)?;
        let (n, d) = (x.rows(), self.dim());
        let u = self.standardize(x);
        let mut z = Tensor::zeros(&[n, d]);
        let mut logdet = vec![-self.standardization.log_scale_sum(); n];
        let rows: Vec<usize> = (0..n).collect();
        for i in 0..d {
            let h = self.context(i, &u)?;
            let pre = self.context_preactivation(i, &h)?;
            let offsets = self.offsets(i, &h)?;
            let ui: Vec<f64> = (0..n).map(|r| u.get(r, i)).collect();
            let (tau, slope) = self.tau_and_slope(i, &pre, &offsets, &rows, &ui)?;
            for r in 0..n {
                z.set(r, i, tau[r]);
                logdet[r] += slope[r].ln();
            }
        }
        Ok((z, logdet))
    }

    /// `T(x)` for one unit.
    pub fn transform(&self, x: &[f64]) -> Result<(Vec<f64>, f64), FlowError> {
        let (z, ld) = self.transform_batch(&Tensor::row(x.to_vec()))?;
        Ok((z.into_vec(), ld[0]))
    }

    /// Per-node log-density terms `log N(z_i) + log g_i - log scale_i`; they sum to the joint log-density.
    pub fn log_density_terms(&self, x: &Tensor) -> Result<Tensor, FlowError> {
        self.check_batch(x)?;
        let (n, d) = (x.rows(), self.dim());
        let u = self.standardize(x);
        let rows: Vec<usize> = (0..n).collect();
        let mut out = Tensor::zeros(&[n, d]);
        for i in 0..d {
            let h = self.context(i, &u)?;
            let pre = self.context_preactivation(i, &h)?;
            let offsets = self.offsets(i, &h)?;
            let ui: Vec<f64> = (0..n).map(|r| u.get(r, i)).collect();
            let (tau, slope) = self.tau_and_slope(i, &pre, &offsets, &rows, &ui)?;
            for r in 0..n {
                let term = -0.5 * tau[r] * tau[r] - 0.5 * LOG_2PI + slope[r].ln() - self.standardization.scale[i].ln();
                out.set(r, i, term);
            }
        }
        Ok(out)
    }

    pub fn log_density_batch(&self, x: &Tensor) -> Result<Vec<f64>, FlowError> {
        let terms = self.log_density_terms(x)?;
        let d = self.dim();
        Ok(terms.data().chunks(d).map(|r| r.iter().sum()).collect())
    }

    pub fn log_density(&self, x: &[f64]) -> Result<f64, FlowError> {
        Ok(self.log_density_batch(&Tensor::row(x.to_vec()))?[0])
    }

    /// `T^{-1}(z)` for a batch, with clamped nodes set to their intervention values.
    pub fn inverse_batch(&self, z: &Tensor, interventions: &[Intervention]) -> Result<Tensor, FlowError> {
        self.check_batch(z)?;
        let (n, d) = (z.rows(), self.dim());
        let mut clamp: Vec<Option<&Intervention>> = vec![None; d];
        for iv in interventions {
            if iv.node >= d {
                return Err(FlowError::DimensionMismatch { expected: d, got: iv.node + 1 });
            }
            if let ClampValues::PerUnit(v) = &iv.values {
                if v.len() != n {
                    return Err(FlowError::DimensionMismatch { expected: n, got: v.len() });
                }
                if v.iter().any(|x| !x.is_finite()) {
                    return Err(FlowError::NonFiniteInput);
                }
            }
            clamp[iv.node] = Some(iv);
        }
        let mut u = Tensor::zeros(&[n, d]);
        let mut x = Tensor::zeros(&[n, d]);
        for &i in self.dag.topo_order() {
            let (shift, scale) = (self.standardization.shift[i], self.standardization.scale[i]);
            if let Some(iv) = clamp[i] {
                for r in 0..n {
                    let v = iv.value(r);
                    if !v.is_finite() {
                        return Err(FlowError::NonFiniteInput);
                    }
                    x.set(r, i, v);
                    u.set(r, i, (v - shift) / scale);
                }
                continue;
            }
            let h = self.context(i, &u)?;
            let pre = self.context_preactivation(i, &h)?;
            let offsets = self.offsets(i, &h)?;
            let target: Vec<f64> = (0..n).map(|r| z.get(r, i)).collect();
            let ui = self.solve_node(i, &pre, &offsets, &target)?;
            for r in 0..n {
                u.set(r, i, ui[r]);
                x.set(r, i, ui[r] * scale + shift);
            }
        }
        Ok(x)
    }

    /// Inverse for one unit; `clamps` maps node names to forced values.
    pub fn inverse(&self, z: &[f64], clamps: &BTreeMap<String, f64>) -> Result<Vec<f64>, FlowError> {
        let ivs = clamps
            .iter()
            .map(|(name, &v)| Ok(Intervention::constant(self.dag.index_of(name)?, v)))
            .collect::<Result<Vec<_>, FlowError>>()?;
        Ok(self.inverse_batch(&Tensor::row(z.to_vec()), &ivs)?.into_vec())
    }

    /// Solves `tau_i(u; h_r) = target_r` for every row.
    fn solve_node(&self, i: usize, pre: &Tensor, offsets: &[f64], target: &[f64]) -> Result<Vec<f64>, FlowError> {
        let n = target.len();
        let all: Vec<usize> = (0..n).collect();
        let mut lo = vec![-BRACKET_START; n];
        let mut hi = vec![BRACKET_START; n];

        // grow each side until it brackets the target
        for side_hi in [false, true] {
            let mut pending = all.clone();
            for _ in 0..=BRACKET_DOUBLINGS {
                if pending.is_empty() {
                    break;
                }
                let ends: Vec<f64> = pending.iter().map(|&r| if side_hi { hi[r] } else { lo[r] }).collect();
                let (tau, _) = self.tau_and_slope(i, pre, offsets, &pending, &ends)?;
                let mut still = Vec::new();
                for (k, &r) in pending.iter().enumerate() {
                    let ok = if side_hi { tau[k] >= target[r] } else { tau[k] <= target[r] };
                    if !ok {
                        if side_hi {
                            lo[r] = lo[r].max(hi[r]);
                            hi[r] *= 2.0;
                        } else {
                            hi[r] = hi[r].min(lo[r]);
                            lo[r] *= 2.0;
                        }
                        still.push(r);
                    }
                }
                pending = still;
            }
            if !pending.is_empty() {
                return Err(FlowError::RootNotBracketed(self.dag.name(i).to_string()));
            }
        }

        // safeguarded Newton: steps leaving the bracket fall back to bisection
        let mut x: Vec<f64> = (0..n).map(|r| target[r].clamp(lo[r], hi[r])).collect();
        let mut active = all;
        for _ in 0..SOLVER_MAX_ITER {
            if active.is_empty() {
                break;
            }
            let xs: Vec<f64> = active.iter().map(|&r| x[r]).collect();
            let (tau, slope) = self.tau_and_slope(i, pre, offsets, &active, &xs)?;
            let mut still = Vec::with_capacity(active.len());
            for (k, &r) in active.iter().enumerate() {
                let f = tau[k] - target[r];
                if f == 0.0 {
                    continue;
                }
                if f > 0.0 {
                    hi[r] = x[r];
                } else {
                    lo[r] = x[r];
                }
                let mut next = x[r] - f / slope[k];
                if !(next > lo[r] && next < hi[r]) {
                    next = 0.5 * (lo[r] + hi[r]);
                }
                let step = (next - x[r]).abs();
                x[r] = next;
                if step > SOLVER_TOL * (1.0 + x[r].abs()) && hi[r] - lo[r] > SOLVER_TOL {
                    still.push(r);
                }
            }
            active = still;
        }
        Ok(x)
    }

    /// Draws `n` base samples and maps them through the (possibly intervened) inverse.
    pub fn sample(&self, n: usize, seed: u64, interventions: &[Intervention]) -> Result<Tensor, FlowError> {
        let z = standard_normal(n, self.dim(), seed);
        self.inverse_batch(&z, interventions)
    }

    /// Records node `i`'s mean negative log-likelihood on a tape.
    ///
    /// `u` is a batch in standardized coordinates. The returned loss omits the
    /// constant `0.5 log(2 pi) + log scale_i`.
    pub fn node_nll_tape(&self, i: usize, tape: &mut Tape, u: &Tensor) -> Result<(Var, NodeVars), FlowError> {
        let node = &self.nodes[i];
        let (b, d) = (u.rows(), self.dim());
        let c = self.config.context_width;
        let q = self.quadrature.len();
        let vars = NodeVars {
            conditioner: node.conditioner.register(tape),
            integrand: node.integrand.register(tape),
            offset: node.offset.register(tape),
        };

        let mut masked = u.clone();
        for row in masked.data_mut().chunks_mut(d) {
            for (v, m) in row.iter_mut().zip(self.masks[i].data()) {
                *v *= m;
            }
        }
        let input = tape.constant(masked);
        let h = node.conditioner.forward_tape(tape, &vars.conditioner, input)?;

        let w1 = vars.integrand.weights[0];
        let w_t = tape.slice_rows(w1, 0, 1)?;
        let w_ctx = tape.slice_rows(w1, 1, 1 + c)?;
        let pre_ctx = tape.matmul(h, w_ctx)?;
        let pre_ctx = tape.add_row(pre_ctx, vars.integrand.biases[0])?;

        let xs: Vec<f64> = (0..b).map(|r| u.get(r, i)).collect();
        let points: Vec<f64> = xs.iter().flat_map(|&x| self.quadrature.points_on(x)).collect();
        let tcol = tape.constant(Tensor::column(points));
        let pre = tape.expand_affine(pre_ctx, tcol, w_t)?;
        let out = node.integrand.forward_tape_from(tape, &vars.integrand, 0, pre)?;
        let g = tape.positive_elu(out, self.config.delta)?;
        let g = tape.reshape(g, &[b, q])?;
        let w = tape.constant(Tensor::column(self.quadrature.weights().to_vec()));
        let integral = tape.matmul(g, w)?;
        let half_x = tape.constant(Tensor::column(xs.iter().map(|x| 0.5 * x).collect()));
        let integral = tape.mul(integral, half_x)?;
        let offset = node.offset.forward_tape(tape, &vars.offset, h)?;
        let z = tape.add(integral, offset)?;

        let xcol = tape.constant(Tensor::column(xs));
        let pre_x = tape.expand_affine(pre_ctx, xcol, w_t)?;
        let out_x = node.integrand.forward_tape_from(tape, &vars.integrand, 0, pre_x)?;
        let g_x = tape.positive_elu(out_x, self.config.delta)?;
        let log_g = tape.log(g_x)?;

        let z2 = tape.square(z)?;
        let half_z2 = tape.scale(z2, 0.5)?;
        let per_row = tape.sub(half_z2, log_g)?;
        let loss = tape.mean(per_row)?;
        Ok((loss, vars))
    }
}

/// `[n, d]` matrix of independent standard normal draws.
pub fn standard_normal(n: usize, d: usize, seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..n * d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    Tensor::from_vec(&[n, d], data).expect("shape")
}

/// Standard normal log-density of a vector.
pub fn base_log_density(z: &[f64]) -> f64 {
    z.iter().map(|v| -0.5 * v * v - 0.5 * LOG_2PI).sum()
}
