use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{NumericError, Tape, Tensor, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Tanh,
    Linear,
}

impl Activation {
    fn apply(self, v: f64) -> f64 {
        match self {
            Activation::Tanh => super::tape::tanh(v),
            Activation::Linear => v,
        }
    }
}

/// Dense layer computing `act(x W + b)` with `W: [in, out]`, `b: [1, out]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weight: Tensor,
    pub bias: Tensor,
    pub activation: Activation,
}

/// Feed-forward network: tanh on hidden layers, linear output.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layers: Vec<Layer>,
}

/// Tape handles for the parameters of one [`Mlp`].
#[derive(Debug, Clone)]
pub struct MlpVars {
    pub weights: Vec<Var>,
    pub biases: Vec<Var>,
}

impl Mlp {
    /// `widths` lists the input width, every hidden width and the output width.
    /// Weights are uniform in `±sqrt(6 / (fan_in + fan_out))`, biases zero.
    pub fn new<R: Rng + ?Sized>(widths: &[usize], rng: &mut R) -> Self {
        let mut net = Self::zeros(widths);
        for layer in &mut net.layers {
            let (fan_in, fan_out) = (layer.weight.rows(), layer.weight.cols());
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for w in layer.weight.data_mut() {
                *w = rng.random_range(-limit..limit);
            }
        }
        net
    }

    pub fn zeros(widths: &[usize]) -> Self {
        assert!(widths.len() >= 2, "an MLP needs input and output widths");
        let last = widths.len() - 2;
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(i, w)| Layer {
                weight: Tensor::zeros(&[w[0], w[1]]),
                bias: Tensor::zeros(&[1, w[1]]),
                activation: if i == last { Activation::Linear } else { Activation::Tanh },
            })
            .collect();
        Self { layers }
    }

    pub fn from_layers(layers: Vec<Layer>) -> Result<Self, NumericError> {
        for pair in layers.windows(2) {
            if pair[0].weight.cols() != pair[1].weight.rows() {
                return Err(NumericError::ShapeMismatch {
                    op: "mlp",
                    left: pair[0].weight.shape().to_vec(),
                    right: pair[1].weight.shape().to_vec(),
                });
            }
        }
        for l in &layers {
            if l.bias.shape() != [1, l.weight.cols()] {
                return Err(NumericError::ShapeMismatch {
                    op: "mlp bias",
                    left: l.weight.shape().to_vec(),
                    right: l.bias.shape().to_vec(),
                });
            }
        }
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].weight.rows()
    }

    pub fn output_width(&self) -> usize {
        self.layers.last().map(|l| l.weight.cols()).unwrap_or(0)
    }

    pub fn widths(&self) -> Vec<usize> {
        std::iter::once(self.input_width()).chain(self.layers.iter().map(|l| l.weight.cols())).collect()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    /// Weight then bias, layer by layer.
    pub fn params(&self) -> impl Iterator<Item = &Tensor> {
        self.layers.iter().flat_map(|l| [&l.weight, &l.bias])
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut Tensor> {
        self.layers.iter_mut().flat_map(|l| [&mut l.weight, &mut l.bias])
    }

    fn check_input(&self, input: &Tensor) -> Result<(), NumericError> {
        if input.cols() != self.input_width() {
            return Err(NumericError::ShapeMismatch {
                op: "mlp_forward",
                left: input.shape().to_vec(),
                right: self.layers[0].weight.shape().to_vec(),
            });
        }
        if !input.is_finite() {
            return Err(NumericError::NonFiniteInput);
        }
        Ok(())
    }

    /// Untracked forward pass over a `[batch, in]` input.
    pub fn forward(&self, input: &Tensor) -> Result<Tensor, NumericError> {
        self.check_input(input)?;
        let mut h = input.clone();
        for layer in &self.layers {
            h = h.matmul(&layer.weight)?;
            add_bias_activate(&mut h, &layer.bias, layer.activation);
        }
        Ok(h)
    }

    /// Pass starting from the pre-activation of layer `start`, bias already added.
    pub fn forward_from(&self, start: usize, mut pre: Tensor) -> Result<Tensor, NumericError> {
        let act = self.layers[start].activation;
        pre.data_mut().iter_mut().for_each(|v| *v = act.apply(*v));
        for layer in &self.layers[start + 1..] {
            pre = pre.matmul(&layer.weight)?;
            add_bias_activate(&mut pre, &layer.bias, layer.activation);
        }
        Ok(pre)
    }

    /// Records every parameter on the tape as a tracked leaf.
    pub fn register(&self, tape: &mut Tape) -> MlpVars {
        let mut weights = Vec::with_capacity(self.layers.len());
        let mut biases = Vec::with_capacity(self.layers.len());
        for l in &self.layers {
            weights.push(tape.param(l.weight.clone()));
            biases.push(tape.param(l.bias.clone()));
        }
        MlpVars { weights, biases }
    }

    /// Tracked forward pass.
    pub fn forward_tape(&self, tape: &mut Tape, vars: &MlpVars, input: Var) -> Result<Var, NumericError> {
        self.check_input(tape.value(input)?)?;
        let h = tape.matmul(input, vars.weights[0])?;
        let pre = tape.add_row(h, vars.biases[0])?;
        self.forward_tape_from(tape, vars, 0, pre)
    }

    /// Tracked counterpart of [`Mlp::forward_from`].
    pub fn forward_tape_from(&self, tape: &mut Tape, vars: &MlpVars, start: usize, pre: Var) -> Result<Var, NumericError> {
        let mut h = activate(tape, pre, self.layers[start].activation)?;
        for (i, layer) in self.layers.iter().enumerate().skip(start + 1) {
            let lin = tape.matmul(h, vars.weights[i])?;
            let lin = tape.add_row(lin, vars.biases[i])?;
            h = activate(tape, lin, layer.activation)?;
        }
        Ok(h)
    }

    /// Gradients for [`Mlp::params`] order.
    pub fn collect_grads(vars: &MlpVars, grads: &mut super::Gradients) -> Result<Vec<Tensor>, NumericError> {
        let mut out = Vec::with_capacity(vars.weights.len() * 2);
        for (&w, &b) in vars.weights.iter().zip(&vars.biases) {
            out.push(grads.take(w)?);
            out.push(grads.take(b)?);
        }
        Ok(out)
    }
}

fn activate(tape: &mut Tape, v: Var, act: Activation) -> Result<Var, NumericError> {
    match act {
        Activation::Tanh => tape.tanh(v),
        Activation::Linear => Ok(v),
    }
}

fn add_bias_activate(h: &mut Tensor, bias: &Tensor, act: Activation) {
    let m = bias.len();
    for row in h.data_mut().chunks_mut(m.max(1)) {
        for (v, b) in row.iter_mut().zip(bias.data()) {
            *v = act.apply(*v + b);
        }
    }
}
