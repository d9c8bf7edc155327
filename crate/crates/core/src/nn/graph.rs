use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ops::{self, ParamGrad};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Layer kinds with their hyperparameters and, for learnable layers, weights.
#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Conv1d {
        kernel: usize,
        inputs: usize,
        filters: usize,
        weight: Tensor,
        bias: Tensor,
    },
    Conv2d {
        kernel: usize,
        inputs: usize,
        filters: usize,
        weight: Tensor,
        bias: Tensor,
    },
    MaxPool1d {
        pool: usize,
    },
    MaxPool2d {
        pool: usize,
    },
    UpsampleNearest2d {
        factor: usize,
    },
    Concat,
    Relu,
    Dense {
        inputs: usize,
        outputs: usize,
        weight: Tensor,
        bias: Tensor,
    },
    Softmax,
}

/// Serializable description of a layer without its parameter values.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum LayerKind {
    Conv1d {
        kernel: usize,
        inputs: usize,
        filters: usize,
    },
    Conv2d {
        kernel: usize,
        inputs: usize,
        filters: usize,
    },
    MaxPool1d {
        pool: usize,
    },
    MaxPool2d {
        pool: usize,
    },
    UpsampleNearest2d {
        factor: usize,
    },
    Concat,
    Relu,
    Dense {
        inputs: usize,
        outputs: usize,
    },
    Softmax,
}

impl Layer {
    pub fn conv1d(kernel: usize, inputs: usize, filters: usize) -> Self {
        Layer::Conv1d {
            kernel,
            inputs,
            filters,
            weight: Tensor::zeros(&[kernel, inputs, filters]),
            bias: Tensor::zeros(&[filters]),
        }
    }

    pub fn conv2d(kernel: usize, inputs: usize, filters: usize) -> Self {
        Layer::Conv2d {
            kernel,
            inputs,
            filters,
            weight: Tensor::zeros(&[kernel, kernel, inputs, filters]),
            bias: Tensor::zeros(&[filters]),
        }
    }

    pub fn dense(inputs: usize, outputs: usize) -> Self {
        Layer::Dense {
            inputs,
            outputs,
            weight: Tensor::zeros(&[inputs, outputs]),
            bias: Tensor::zeros(&[outputs]),
        }
    }

    pub fn kind(&self) -> LayerKind {
        match *self {
            Layer::Conv1d {
                kernel,
                inputs,
                filters,
                ..
            } => LayerKind::Conv1d {
                kernel,
                inputs,
                filters,
            },
            Layer::Conv2d {
                kernel,
                inputs,
                filters,
                ..
            } => LayerKind::Conv2d {
                kernel,
                inputs,
                filters,
            },
            Layer::MaxPool1d { pool } => LayerKind::MaxPool1d { pool },
            Layer::MaxPool2d { pool } => LayerKind::MaxPool2d { pool },
            Layer::UpsampleNearest2d { factor } => LayerKind::UpsampleNearest2d { factor },
            Layer::Concat => LayerKind::Concat,
            Layer::Relu => LayerKind::Relu,
            Layer::Dense {
                inputs, outputs, ..
            } => LayerKind::Dense { inputs, outputs },
            Layer::Softmax => LayerKind::Softmax,
        }
    }

    pub fn params(&self) -> Option<(&Tensor, &Tensor)> {
        match self {
            Layer::Conv1d { weight, bias, .. }
            | Layer::Conv2d { weight, bias, .. }
            | Layer::Dense { weight, bias, .. } => Some((weight, bias)),
            _ => None,
        }
    }

    pub fn params_mut(&mut self) -> Option<(&mut Tensor, &mut Tensor)> {
        match self {
            Layer::Conv1d { weight, bias, .. }
            | Layer::Conv2d { weight, bias, .. }
            | Layer::Dense { weight, bias, .. } => Some((weight, bias)),
            _ => None,
        }
    }

    pub fn parameter_count(&self) -> usize {
        self.params().map_or(0, |(w, b)| w.len() + b.len())
    }

    fn arity(&self) -> usize {
        if matches!(self, Layer::Concat) {
            2
        } else {
            1
        }
    }

    /// Output shape for the given input shapes, validating hyperparameters.
    pub fn output_shape(&self, inputs: &[&[usize]]) -> Result<Vec<usize>> {
        let s = inputs[0];
        let rank = |r: usize, what: &str| -> Result<()> {
            if s.len() != r {
                return Err(Error::ShapeMismatch(format!(
                    "{what} expects rank {r}, got {s:?}"
                )));
            }
            Ok(())
        };
        match *self {
            Layer::Conv1d {
                kernel,
                inputs: cin,
                filters,
                ..
            } => {
                rank(2, "conv1d")?;
                if s[1] != cin {
                    return Err(Error::ShapeMismatch(format!(
                        "conv1d expects {cin} channels, got {s:?}"
                    )));
                }
                if s[0] < kernel {
                    return Err(Error::InputTooShort {
                        length: s[0],
                        needed: kernel,
                    });
                }
                Ok(vec![s[0] - kernel + 1, filters])
            }
            Layer::Conv2d {
                kernel,
                inputs: cin,
                filters,
                ..
            } => {
                rank(3, "conv2d")?;
                if s[2] != cin || kernel % 2 == 0 {
                    return Err(Error::ShapeMismatch(format!(
                        "conv2d k={kernel} expects {cin} channels, got {s:?}"
                    )));
                }
                Ok(vec![s[0], s[1], filters])
            }
            Layer::MaxPool1d { pool } => {
                rank(2, "maxpool1d")?;
                if pool == 0 || s[0] < pool {
                    return Err(Error::InputTooShort {
                        length: s[0],
                        needed: pool.max(1),
                    });
                }
                Ok(vec![s[0] / pool, s[1]])
            }
            Layer::MaxPool2d { pool } => {
                rank(3, "maxpool2d")?;
                if pool == 0 || s[0] < pool || s[1] < pool {
                    return Err(Error::ExtentTooSmall {
                        extent: s[0].min(s[1]),
                        window: pool,
                    });
                }
                Ok(vec![s[0] / pool, s[1] / pool, s[2]])
            }
            Layer::UpsampleNearest2d { factor } => {
                rank(3, "upsample")?;
                Ok(vec![s[0] * factor, s[1] * factor, s[2]])
            }
            Layer::Concat => {
                let t = inputs[1];
                if s.len() != t.len() || s.is_empty() || s[..s.len() - 1] != t[..t.len() - 1] {
                    return Err(Error::ShapeMismatch(format!(
                        "cannot concatenate {s:?} and {t:?}"
                    )));
                }
                let mut out = s.to_vec();
                *out.last_mut().unwrap() += t[t.len() - 1];
                Ok(out)
            }
            Layer::Relu | Layer::Softmax => Ok(s.to_vec()),
            Layer::Dense {
                inputs: f, outputs, ..
            } => {
                let n: usize = s.iter().product();
                if n != f {
                    return Err(Error::ShapeMismatch(format!(
                        "dense expects {f} inputs, got shape {s:?}"
                    )));
                }
                Ok(vec![outputs])
            }
        }
    }
}

/// One layer application. `inputs` index the value list: 0 is the graph
/// input and `i + 1` is the output of node `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub name: String,
    pub layer: Layer,
    pub inputs: Vec<usize>,
}

/// Activations recorded by a forward pass, plus max-pool routing.
#[derive(Debug, Clone)]
pub struct Tape {
    values: Vec<Tensor>,
    routes: Vec<Option<Vec<usize>>>,
}

impl Tape {
    pub fn output(&self) -> &Tensor {
        self.values.last().expect("tape holds at least the input")
    }

    pub fn values(&self) -> &[Tensor] {
        &self.values
    }
}

/// Result of a backward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    /// Aligned with the graph's nodes; `None` for layers without parameters.
    pub params: Vec<Option<ParamGrad>>,
    pub input: Tensor,
}

impl Gradients {
    /// Parameter gradients in [`ModelGraph::params`] order.
    pub fn flat(&self) -> Vec<&Tensor> {
        self.params
            .iter()
            .flatten()
            .flat_map(|g| [&g.weight, &g.bias])
            .collect()
    }

    pub fn add_assign(&mut self, other: &Gradients) -> Result<()> {
        for (a, b) in self.params.iter_mut().zip(&other.params) {
            if let (Some(a), Some(b)) = (a, b) {
                a.weight.add_assign(&b.weight)?;
                a.bias.add_assign(&b.bias)?;
            }
        }
        self.input.add_assign(&other.input)
    }

    pub fn scale(&mut self, factor: f64) {
        for g in self.params.iter_mut().flatten() {
            g.weight.scale(factor);
            g.bias.scale(factor);
        }
        self.input.scale(factor);
    }
}

/// Feed-forward layer graph with optional skip connections.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelGraph {
    name: String,
    input_shape: Vec<usize>,
    num_classes: usize,
    nodes: Vec<Node>,
    shapes: Vec<Vec<usize>>,
}

impl ModelGraph {
    /// Builds a graph and checks every layer's input shape against its
    /// producer's output shape for the declared input.
    pub fn new(
        name: &str,
        input_shape: Vec<usize>,
        num_classes: usize,
        nodes: Vec<Node>,
    ) -> Result<Self> {
        let mut shapes = vec![input_shape.clone()];
        for (i, node) in nodes.iter().enumerate() {
            if node.inputs.len() != node.layer.arity() || node.inputs.iter().any(|&v| v > i) {
                return Err(Error::ShapeMismatch(format!(
                    "node {} ({}) has invalid inputs {:?}",
                    i, node.name, node.inputs
                )));
            }
            let ins: Vec<&[usize]> = node.inputs.iter().map(|&v| shapes[v].as_slice()).collect();
            let out = node.layer.output_shape(&ins)?;
            if out.contains(&0) {
                return Err(Error::InputTooShort {
                    length: 0,
                    needed: 1,
                });
            }
            shapes.push(out);
        }
        Ok(Self {
            name: name.to_string(),
            input_shape,
            num_classes,
            nodes,
            shapes,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    /// Shape of every value for the declared input: the input first, then
    /// one entry per node.
    pub fn value_shapes(&self) -> &[Vec<usize>] {
        &self.shapes
    }

    pub fn output_shape(&self) -> &[usize] {
        self.shapes.last().expect("input shape is always present")
    }

    pub fn parameter_count(&self) -> usize {
        self.nodes.iter().map(|n| n.layer.parameter_count()).sum()
    }

    /// Learnable tensors in a fixed order: per node, weight then bias.
    pub fn params(&self) -> Vec<&Tensor> {
        self.nodes
            .iter()
            .filter_map(|n| n.layer.params())
            .flat_map(|(w, b)| [w, b])
            .collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        self.nodes
            .iter_mut()
            .filter_map(|n| n.layer.params_mut())
            .flat_map(|(w, b)| [w, b])
            .collect()
    }

    /// Named learnable tensors, `<node>.weight` / `<node>.bias`.
    pub fn named_params(&self) -> Vec<(String, &Tensor)> {
        let mut out = Vec::new();
        for node in &self.nodes {
            if let Some((w, b)) = node.layer.params() {
                out.push((format!("{}.weight", node.name), w));
                out.push((format!("{}.bias", node.name), b));
            }
        }
        out
    }

    /// He-uniform convolutions, Glorot-uniform dense layers, zero biases.
    /// Values are drawn as f32 so they survive a weight-file round trip.
    pub fn initialize(&mut self, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for node in &mut self.nodes {
            let limit = match node.layer {
                Layer::Conv1d { kernel, inputs, .. } => (6.0 / (kernel * inputs) as f64).sqrt(),
                Layer::Conv2d { kernel, inputs, .. } => {
                    (6.0 / (kernel * kernel * inputs) as f64).sqrt()
                }
                Layer::Dense {
                    inputs, outputs, ..
                } => (6.0 / (inputs + outputs) as f64).sqrt(),
                _ => continue,
            };
            let (w, b) = node.layer.params_mut().expect("learnable layer");
            let limit = limit as f32;
            for v in w.data_mut() {
                *v = rng.random_range(-limit..limit) as f64;
            }
            b.data_mut().fill(0.0);
        }
    }

    fn check_input(&self, input: &Tensor) -> Result<()> {
        let s = input.shape();
        if s.len() != self.input_shape.len() || s.last() != self.input_shape.last() {
            return Err(Error::ShapeMismatch(format!(
                "{} expects input like {:?}, got {:?}",
                self.name, self.input_shape, s
            )));
        }
        Ok(())
    }

    fn apply(layer: &Layer, ins: &[&Tensor]) -> Result<(Tensor, Option<Vec<usize>>)> {
        let x = ins[0];
        Ok(match layer {
            Layer::Conv1d { weight, bias, .. } => (ops::conv1d_forward(x, weight, bias)?, None),
            Layer::Conv2d { weight, bias, .. } => (ops::conv2d_forward(x, weight, bias)?, None),
            Layer::MaxPool1d { pool } => {
                let (y, r) = ops::maxpool1d_forward(x, *pool)?;
                (y, Some(r))
            }
            Layer::MaxPool2d { pool } => {
                let (y, r) = ops::maxpool2d_forward(x, *pool)?;
                (y, Some(r))
            }
            Layer::UpsampleNearest2d { factor } => {
                (ops::upsample_nearest_forward(x, *factor)?, None)
            }
            Layer::Concat => (ops::concat_forward(x, ins[1])?, None),
            Layer::Relu => (ops::relu_forward(x), None),
            Layer::Dense { weight, bias, .. } => (ops::dense_forward(x, weight, bias)?, None),
            Layer::Softmax => (ops::softmax_forward(x), None),
        })
    }

    /// Forward pass recording every activation.
    pub fn forward_with_tape(&self, input: &Tensor) -> Result<Tape> {
        self.check_input(input)?;
        let mut values = Vec::with_capacity(self.nodes.len() + 1);
        let mut routes = Vec::with_capacity(self.nodes.len());
        values.push(input.clone());
        for node in &self.nodes {
            let ins: Vec<&Tensor> = node.inputs.iter().map(|&v| &values[v]).collect();
            let (y, r) = Self::apply(&node.layer, &ins)?;
            values.push(y);
            routes.push(r);
        }
        Ok(Tape { values, routes })
    }

    /// Inference-only forward pass; activations are dropped once no later
    /// node reads them.
    pub fn forward(&self, input: &Tensor) -> Result<Tensor> {
        self.check_input(input)?;
        let n = self.nodes.len();
        let mut last_use = vec![0usize; n + 1];
        for (i, node) in self.nodes.iter().enumerate() {
            for &v in &node.inputs {
                last_use[v] = i;
            }
        }
        let mut values: Vec<Option<Tensor>> = vec![None; n + 1];
        values[0] = Some(input.clone());
        for (i, node) in self.nodes.iter().enumerate() {
            let y = {
                let ins: Vec<&Tensor> = node
                    .inputs
                    .iter()
                    .map(|&v| values[v].as_ref().expect("value still live"))
                    .collect();
                Self::apply(&node.layer, &ins)?.0
            };
            for &v in &node.inputs {
                if last_use[v] == i {
                    values[v] = None;
                }
            }
            values[i + 1] = Some(y);
        }
        Ok(values[n].take().expect("graph output"))
    }

    /// Backpropagates `grad_output` (gradient of a scalar with respect to
    /// the graph output) through every node.
    pub fn backward(&self, tape: &Tape, grad_output: Tensor) -> Result<Gradients> {
        self.backprop(tape, self.nodes.len(), grad_output)
    }

    /// Cross-entropy of the graph output against `targets` and the
    /// parameter gradients, seeding the combined softmax/cross-entropy
    /// gradient `(p − onehot)/rows` at the input of the final softmax.
    pub fn backward_softmax_ce(&self, tape: &Tape, targets: &[u8]) -> Result<(f64, Gradients)> {
        if !matches!(self.nodes.last().map(|n| &n.layer), Some(Layer::Softmax)) {
            return Err(Error::ShapeMismatch(format!(
                "{} does not end in a softmax",
                self.name
            )));
        }
        self.check_tape(tape)?;
        let probs = tape.output();
        let loss = ops::cross_entropy(probs, targets)?;
        let seed = ops::softmax_cross_entropy_grad(probs, targets)?;
        let softmax_input = self.nodes[self.nodes.len() - 1].inputs[0];
        Ok((loss, self.backprop(tape, softmax_input, seed)?))
    }

    fn check_tape(&self, tape: &Tape) -> Result<()> {
        if tape.values.len() != self.nodes.len() + 1 || tape.routes.len() != self.nodes.len() {
            return Err(Error::TapeMissing(format!(
                "tape holds {} values for {} nodes",
                tape.values.len(),
                self.nodes.len()
            )));
        }
        Ok(())
    }

    /// Seeds the gradient of value `from` and walks nodes `from-1 .. 0`.
    fn backprop(&self, tape: &Tape, from: usize, seed: Tensor) -> Result<Gradients> {
        self.check_tape(tape)?;
        if seed.shape() != tape.values[from].shape() {
            return Err(Error::ShapeMismatch(format!(
                "seed gradient {:?} for value of shape {:?}",
                seed.shape(),
                tape.values[from].shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len() + 1];
        grads[from] = Some(seed);
        let mut params: Vec<Option<ParamGrad>> = self
            .nodes
            .iter()
            .map(|n| {
                n.layer.params().map(|(w, b)| ParamGrad {
                    weight: Tensor::zeros(w.shape()),
                    bias: Tensor::zeros(b.shape()),
                })
            })
            .collect();

        for i in (0..from).rev() {
            let Some(g) = grads[i + 1].take() else {
                continue;
            };
            let node = &self.nodes[i];
            let x = &tape.values[node.inputs[0]];
            let mut input_grads: Vec<Tensor> = Vec::with_capacity(2);
            match &node.layer {
                Layer::Conv1d { weight, .. } => {
                    let (gi, pg) = ops::conv1d_backward(x, weight, &g)?;
                    params[i] = Some(pg);
                    input_grads.push(gi);
                }
                Layer::Conv2d { weight, .. } => {
                    let (gi, pg) = ops::conv2d_backward(x, weight, &g)?;
                    params[i] = Some(pg);
                    input_grads.push(gi);
                }
                Layer::Dense { weight, .. } => {
                    let (gi, pg) = ops::dense_backward(x, weight, &g)?;
                    params[i] = Some(pg);
                    input_grads.push(gi);
                }
                Layer::MaxPool1d { .. } | Layer::MaxPool2d { .. } => {
                    let routes = tape.routes[i].as_ref().ok_or_else(|| {
                        Error::TapeMissing(format!("no routing for {}", node.name))
                    })?;
                    input_grads.push(ops::maxpool_backward(x.shape(), routes, &g)?);
                }
                Layer::UpsampleNearest2d { factor } => {
                    input_grads.push(ops::upsample_nearest_backward(&g, *factor)?);
                }
                Layer::Concat => {
                    let (ga, gb) = ops::concat_backward(&g, x.last_dim())?;
                    input_grads.push(ga);
                    input_grads.push(gb);
                }
                Layer::Relu => input_grads.push(ops::relu_backward(x, &g)?),
                Layer::Softmax => input_grads.push(ops::softmax_backward(&tape.values[i + 1], &g)?),
            }
            for (&v, gi) in node.inputs.iter().zip(input_grads) {
                match &mut grads[v] {
                    Some(acc) => acc.add_assign(&gi)?,
                    slot => *slot = Some(gi),
                }
            }
        }
        let input = grads[0]
            .take()
            .unwrap_or_else(|| Tensor::zeros(tape.values[0].shape()));
        Ok(Gradients { params, input })
    }
}
