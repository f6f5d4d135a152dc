//! Fully connected ReLU networks with explicit activation traces.
//!
//! The networks here are deliberately small and transparent: every forward
//! pass can return the post-activation vector of every layer (the LID
//! estimator consumes exactly those), and `input_gradient` backpropagates a
//! scalar loss to the *input* pixels, which is all an optimization-based
//! attack needs. Training is plain minibatch SGD on softmax cross-entropy,
//! seeded and sequential, so a given seed always yields bit-identical
//! weights.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read as IoRead, Write as IoWrite};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::tensor::{dot, Tensor};

const WEIGHTS_MAGIC: &[u8; 6] = b"LIDNN1";

/// Layer nonlinearity. The final layer of a classifier is always `Identity`
/// so that the trace's last entry is the raw logit vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Identity,
    Relu,
}

impl Activation {
    fn apply(self, z: &mut [f64]) {
        if let Activation::Relu = self {
            for v in z.iter_mut() {
                if *v < 0.0 {
                    *v = 0.0;
                }
            }
        }
    }

    fn code(self) -> u32 {
        match self {
            Activation::Identity => 0,
            Activation::Relu => 1,
        }
    }

    fn from_code(code: u32) -> Option<Self> {
        match code {
            0 => Some(Activation::Identity),
            1 => Some(Activation::Relu),
            _ => None,
        }
    }
}

/// Shape and nonlinearity of one affine layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerSpec {
    pub in_dim: usize,
    pub out_dim: usize,
    pub activation: Activation,
}

#[derive(Debug, Clone)]
struct Layer {
    spec: LayerSpec,
    /// Row-major `out_dim x in_dim`.
    weights: Vec<f64>,
    bias: Vec<f64>,
}

impl Layer {
    fn row(&self, i: usize) -> &[f64] {
        let n = self.spec.in_dim;
        &self.weights[i * n..(i + 1) * n]
    }
}

/// A stack of affine layers with elementwise nonlinearities.
#[derive(Debug, Clone)]
pub struct Network {
    layers: Vec<Layer>,
}

/// Every layer's post-activation output for one input, in layer order.
/// The last entry is the logit vector (the final layer is identity).
#[derive(Debug, Clone)]
pub struct ActivationTrace {
    pub per_layer: Vec<Tensor>,
}

impl ActivationTrace {
    /// The raw logit vector — identical to the last `per_layer` entry.
    pub fn logits(&self) -> &Tensor {
        self.per_layer.last().expect("trace has at least one layer")
    }
}

/// Scalar loss to backpropagate through [`Network::input_gradient`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LossSpec {
    /// The raw logit of one class.
    Logit(usize),
    /// Softmax cross-entropy against a label.
    CrossEntropy { label: usize },
    /// The confidence-margin loss `max(Z_true - max_{j != true} Z_j, -kappa)`
    /// used by the attacks. Where the clamp is active the gradient is zero.
    Margin { label: usize, kappa: f64 },
}

/// Hyperparameters for [`train`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.1,
            epochs: 150,
            batch_size: 64,
            seed: 0,
        }
    }
}

fn validate_specs(specs: &[LayerSpec]) -> Result<()> {
    if specs.is_empty() {
        return Err(Error::EmptyInput("network layer specs"));
    }
    for spec in specs {
        if spec.in_dim == 0 || spec.out_dim == 0 {
            return Err(Error::ShapeMismatch(format!(
                "layer dims must be positive, got {}x{}",
                spec.out_dim, spec.in_dim
            )));
        }
    }
    for w in specs.windows(2) {
        if w[0].out_dim != w[1].in_dim {
            return Err(Error::ShapeMismatch(format!(
                "layer output dim {} does not feed layer input dim {}",
                w[0].out_dim, w[1].in_dim
            )));
        }
    }
    let last = specs.last().unwrap();
    if last.activation != Activation::Identity {
        return Err(Error::ShapeMismatch(
            "final layer must use the identity activation so its output is the logits".into(),
        ));
    }
    if last.out_dim < 2 {
        return Err(Error::SingleClass {
            num_classes: last.out_dim,
        });
    }
    Ok(())
}

impl Network {
    /// He-initialized network: weights ~ N(0, 2/in_dim), biases zero.
    pub fn new(specs: &[LayerSpec], seed: u64) -> Result<Self> {
        validate_specs(specs)?;
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let layers = specs
            .iter()
            .map(|spec| {
                let std = (2.0 / spec.in_dim as f64).sqrt();
                let weights = (0..spec.in_dim * spec.out_dim)
                    .map(|_| std * rng.sample::<f64, _>(StandardNormal))
                    .collect();
                Layer {
                    spec: *spec,
                    weights,
                    bias: vec![0.0; spec.out_dim],
                }
            })
            .collect();
        Ok(Network { layers })
    }

    /// Build a network from explicit parameters (mostly for tests and the
    /// weight-file loader).
    pub fn from_parts(
        specs: &[LayerSpec],
        weights: Vec<Vec<f64>>,
        biases: Vec<Vec<f64>>,
    ) -> Result<Self> {
        validate_specs(specs)?;
        if weights.len() != specs.len() || biases.len() != specs.len() {
            return Err(Error::ShapeMismatch(format!(
                "expected {} weight and bias blocks, got {} and {}",
                specs.len(),
                weights.len(),
                biases.len()
            )));
        }
        let mut layers = Vec::with_capacity(specs.len());
        for ((spec, w), b) in specs.iter().zip(weights).zip(biases) {
            if w.len() != spec.in_dim * spec.out_dim {
                return Err(Error::ShapeMismatch(format!(
                    "layer weights need {} values, got {}",
                    spec.in_dim * spec.out_dim,
                    w.len()
                )));
            }
            if b.len() != spec.out_dim {
                return Err(Error::ShapeMismatch(format!(
                    "layer bias needs {} values, got {}",
                    spec.out_dim,
                    b.len()
                )));
            }
            if !w.iter().chain(b.iter()).all(|v| v.is_finite()) {
                return Err(Error::NonFinite {
                    context: "Network::from_parts",
                });
            }
            layers.push(Layer {
                spec: *spec,
                weights: w,
                bias: b,
            });
        }
        Ok(Network { layers })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].spec.in_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().unwrap().spec.out_dim
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    /// Output width of each layer, in order. The LID feature vector has one
    /// entry per element of this list.
    pub fn layer_dims(&self) -> Vec<usize> {
        self.layers.iter().map(|l| l.spec.out_dim).collect()
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::ShapeMismatch(format!(
                "network expects input of length {}, got {}",
                self.input_dim(),
                x.len()
            )));
        }
        Ok(())
    }

    fn forward_into(&self, x: &[f64], acts: &mut Vec<Vec<f64>>) {
        acts.clear();
        let mut h: &[f64] = x;
        for layer in &self.layers {
            let mut z = vec![0.0; layer.spec.out_dim];
            for (i, zi) in z.iter_mut().enumerate() {
                *zi = dot(layer.row(i), h) + layer.bias[i];
            }
            layer.spec.activation.apply(&mut z);
            acts.push(z);
            h = acts.last().unwrap();
        }
    }

    /// Run the network, returning every layer's post-activation output.
    pub fn forward(&self, x: &Tensor) -> Result<ActivationTrace> {
        self.check_input(x)?;
        let mut acts = Vec::new();
        self.forward_into(&x.data, &mut acts);
        if !acts.last().unwrap().iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite { context: "forward" });
        }
        let per_layer = acts
            .into_iter()
            .map(|data| Tensor {
                shape: vec![data.len()],
                data,
            })
            .collect();
        Ok(ActivationTrace { per_layer })
    }

    /// Run the network and return only the logits. Cheaper than [`forward`]
    /// when the intermediate activations are not needed, e.g. in attack
    /// inner loops.
    pub fn forward_logits(&self, x: &Tensor) -> Result<Tensor> {
        let trace = self.forward(x)?;
        Ok(trace.per_layer.into_iter().last().unwrap())
    }

    /// Gradient of the scalar loss with respect to the input vector.
    pub fn input_gradient(&self, x: &Tensor, loss: &LossSpec) -> Result<Tensor> {
        Ok(self.logits_and_input_gradient(x, loss)?.1)
    }

    /// Logits and input gradient from a single forward/backward pass.
    /// Attack inner loops need both every iteration; doing them together
    /// halves the number of forward passes.
    pub fn logits_and_input_gradient(
        &self,
        x: &Tensor,
        loss: &LossSpec,
    ) -> Result<(Tensor, Tensor)> {
        self.check_input(x)?;
        let mut acts = Vec::new();
        self.forward_into(&x.data, &mut acts);
        let logits = acts.last().unwrap();
        if !logits.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite {
                context: "input_gradient",
            });
        }
        let logits_out = Tensor {
            shape: vec![logits.len()],
            data: logits.clone(),
        };
        let mut delta = loss_gradient(logits, loss, self.output_dim())?;
        // Backpropagate. `delta` holds dL/dz for the current layer; ReLU
        // layers fold the activation derivative in via their post-activation
        // values (post > 0 exactly where the pre-activation was positive).
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            let mut grad_prev = vec![0.0; layer.spec.in_dim];
            for (i, &d) in delta.iter().enumerate() {
                if d != 0.0 {
                    let row = layer.row(i);
                    for (g, w) in grad_prev.iter_mut().zip(row) {
                        *g += d * *w;
                    }
                }
            }
            if l == 0 {
                return Ok((logits_out, Tensor::vector(grad_prev)?));
            }
            let prev_post = &acts[l - 1];
            if self.layers[l - 1].spec.activation == Activation::Relu {
                for (g, &p) in grad_prev.iter_mut().zip(prev_post) {
                    if p <= 0.0 {
                        *g = 0.0;
                    }
                }
            }
            delta = grad_prev;
        }
        unreachable!("loop returns at layer 0")
    }

    /// Predicted class: argmax of the logits, ties resolved to the lowest
    /// index.
    pub fn predict(&self, x: &Tensor) -> Result<usize> {
        let logits = self.forward_logits(x)?;
        Ok(argmax(&logits.data))
    }

    /// Multiply the final affine layer (weights and bias) by `s`. Decision
    /// boundaries, accuracy, and all hidden activations are unchanged; only
    /// the scale of the logits — and therefore of confidence margins — moves.
    pub fn scale_logits(&mut self, s: f64) {
        let last = self.layers.last_mut().unwrap();
        for w in last.weights.iter_mut() {
            *w *= s;
        }
        for b in last.bias.iter_mut() {
            *b *= s;
        }
    }

    /// Write the network to the `LIDNN1` binary format: the magic string,
    /// a little-endian u32 layer count, per-layer headers (in dim, out dim,
    /// activation code as u32), then per-layer row-major f64 weights followed
    /// by biases.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(WEIGHTS_MAGIC)?;
        w.write_all(&(self.layers.len() as u32).to_le_bytes())?;
        for layer in &self.layers {
            w.write_all(&(layer.spec.in_dim as u32).to_le_bytes())?;
            w.write_all(&(layer.spec.out_dim as u32).to_le_bytes())?;
            w.write_all(&layer.spec.activation.code().to_le_bytes())?;
        }
        for layer in &self.layers {
            for v in layer.weights.iter().chain(layer.bias.iter()) {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Load a network saved by [`Network::save`], validating the magic
    /// string, the layer chain, and value finiteness.
    pub fn load(path: &Path) -> Result<Self> {
        let display = path.display().to_string();
        let mut r = BufReader::new(File::open(path)?);
        let mut magic = [0u8; 6];
        r.read_exact(&mut magic).map_err(|_| Error::MalformedFile {
            path: display.clone(),
            reason: "file shorter than magic string".into(),
        })?;
        if &magic != WEIGHTS_MAGIC {
            return Err(Error::MalformedFile {
                path: display,
                reason: format!(
                    "bad magic {:?}, expected {:?}",
                    String::from_utf8_lossy(&magic),
                    String::from_utf8_lossy(WEIGHTS_MAGIC)
                ),
            });
        }
        let num_layers = read_u32(&mut r, &display)? as usize;
        if num_layers == 0 {
            return Err(Error::MalformedFile {
                path: display,
                reason: "zero layers".into(),
            });
        }
        let mut specs = Vec::with_capacity(num_layers);
        for _ in 0..num_layers {
            let in_dim = read_u32(&mut r, &display)? as usize;
            let out_dim = read_u32(&mut r, &display)? as usize;
            let code = read_u32(&mut r, &display)?;
            let activation = Activation::from_code(code).ok_or_else(|| Error::MalformedFile {
                path: display.clone(),
                reason: format!("unknown activation code {code}"),
            })?;
            specs.push(LayerSpec {
                in_dim,
                out_dim,
                activation,
            });
        }
        let mut weights = Vec::with_capacity(num_layers);
        let mut biases = Vec::with_capacity(num_layers);
        for spec in &specs {
            weights.push(read_f64s(&mut r, spec.in_dim * spec.out_dim, &display)?);
            biases.push(read_f64s(&mut r, spec.out_dim, &display)?);
        }
        let mut trailing = [0u8; 1];
        if r.read(&mut trailing)? != 0 {
            return Err(Error::MalformedFile {
                path: display,
                reason: "trailing bytes after weight data".into(),
            });
        }
        Network::from_parts(&specs, weights, biases)
    }
}

fn read_u32(r: &mut impl IoRead, path: &str) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf).map_err(|_| Error::MalformedFile {
        path: path.to_string(),
        reason: "unexpected end of file".into(),
    })?;
    Ok(u32::from_le_bytes(buf))
}

fn read_f64s(r: &mut impl IoRead, n: usize, path: &str) -> Result<Vec<f64>> {
    let mut bytes = vec![0u8; n * 8];
    r.read_exact(&mut bytes).map_err(|_| Error::MalformedFile {
        path: path.to_string(),
        reason: "unexpected end of file in weight data".into(),
    })?;
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

/// Index of the maximum value; the lowest index wins ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Largest logit over all classes except `label`, with the index realizing
/// it (lowest index on ties).
pub(crate) fn runner_up(logits: &[f64], label: usize) -> (usize, f64) {
    let mut best_idx = usize::MAX;
    let mut best = f64::NEG_INFINITY;
    for (j, &z) in logits.iter().enumerate() {
        if j != label && z > best {
            best = z;
            best_idx = j;
        }
    }
    (best_idx, best)
}

fn loss_gradient(logits: &[f64], loss: &LossSpec, num_classes: usize) -> Result<Vec<f64>> {
    let mut grad = vec![0.0; logits.len()];
    match *loss {
        LossSpec::Logit(j) => {
            if j >= num_classes {
                return Err(Error::LabelOutOfRange {
                    label: j,
                    num_classes,
                });
            }
            grad[j] = 1.0;
        }
        LossSpec::CrossEntropy { label } => {
            if label >= num_classes {
                return Err(Error::LabelOutOfRange {
                    label,
                    num_classes,
                });
            }
            softmax_into(logits, &mut grad);
            grad[label] -= 1.0;
        }
        LossSpec::Margin { label, kappa } => {
            if label >= num_classes {
                return Err(Error::LabelOutOfRange {
                    label,
                    num_classes,
                });
            }
            if num_classes < 2 {
                return Err(Error::SingleClass { num_classes });
            }
            let (j, z_other) = runner_up(logits, label);
            // Loss = max(Z_label - Z_j, -kappa); zero gradient where the
            // clamp is active (including at the boundary).
            if logits[label] - z_other > -kappa {
                grad[label] = 1.0;
                grad[j] = -1.0;
            }
        }
    }
    Ok(grad)
}

fn softmax_into(logits: &[f64], out: &mut [f64]) {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (o, &z) in out.iter_mut().zip(logits) {
        *o = (z - max).exp();
        sum += *o;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
}

/// Minibatch SGD on softmax cross-entropy. Consumes and returns the network;
/// the shuffle order is drawn from a ChaCha stream seeded by `cfg.seed`, and
/// updates are applied sequentially, so results are reproducible.
pub fn train(mut net: Network, data: &LabeledDataset, cfg: &TrainConfig) -> Result<Network> {
    if data.samples.is_empty() {
        return Err(Error::EmptyInput("training dataset"));
    }
    if cfg.batch_size == 0 {
        return Err(Error::Config("batch_size must be positive".into()));
    }
    if cfg.learning_rate <= 0.0 || !cfg.learning_rate.is_finite() {
        return Err(Error::Config(format!(
            "learning_rate must be positive and finite, got {}",
            cfg.learning_rate
        )));
    }
    let num_classes = net.output_dim();
    for (x, &label) in data.samples.iter().zip(&data.labels) {
        net.check_input(x)?;
        if label >= num_classes {
            return Err(Error::LabelOutOfRange {
                label,
                num_classes,
            });
        }
    }

    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..data.samples.len()).collect();
    let mut acts: Vec<Vec<f64>> = Vec::new();
    // Per-layer gradient accumulators, reused across batches.
    let mut grad_w: Vec<Vec<f64>> = net.layers.iter().map(|l| vec![0.0; l.weights.len()]).collect();
    let mut grad_b: Vec<Vec<f64>> = net.layers.iter().map(|l| vec![0.0; l.bias.len()]).collect();

    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            for g in grad_w.iter_mut() {
                g.iter_mut().for_each(|v| *v = 0.0);
            }
            for g in grad_b.iter_mut() {
                g.iter_mut().for_each(|v| *v = 0.0);
            }
            for &idx in batch {
                let x = &data.samples[idx].data;
                net.forward_into(x, &mut acts);
                let mut delta = vec![0.0; num_classes];
                softmax_into(acts.last().unwrap(), &mut delta);
                delta[data.labels[idx]] -= 1.0;
                for l in (0..net.layers.len()).rev() {
                    let prev: &[f64] = if l == 0 { x } else { &acts[l - 1] };
                    let in_dim = net.layers[l].spec.in_dim;
                    for (i, &d) in delta.iter().enumerate() {
                        grad_b[l][i] += d;
                        if d != 0.0 {
                            let row = &mut grad_w[l][i * in_dim..(i + 1) * in_dim];
                            for (g, &p) in row.iter_mut().zip(prev) {
                                *g += d * p;
                            }
                        }
                    }
                    if l == 0 {
                        break;
                    }
                    let layer = &net.layers[l];
                    let mut grad_prev = vec![0.0; in_dim];
                    for (i, &d) in delta.iter().enumerate() {
                        if d != 0.0 {
                            let row = layer.row(i);
                            for (g, &w) in grad_prev.iter_mut().zip(row) {
                                *g += d * w;
                            }
                        }
                    }
                    if net.layers[l - 1].spec.activation == Activation::Relu {
                        for (g, &p) in grad_prev.iter_mut().zip(&acts[l - 1]) {
                            if p <= 0.0 {
                                *g = 0.0;
                            }
                        }
                    }
                    delta = grad_prev;
                }
            }
            let scale = cfg.learning_rate / batch.len() as f64;
            for (l, layer) in net.layers.iter_mut().enumerate() {
                for (w, g) in layer.weights.iter_mut().zip(&grad_w[l]) {
                    *w -= scale * g;
                }
                for (b, g) in layer.bias.iter_mut().zip(&grad_b[l]) {
                    *b -= scale * g;
                }
            }
        }
    }
    Ok(net)
}

/// Fraction of samples whose predicted class equals the label.
pub fn accuracy(net: &Network, data: &LabeledDataset) -> Result<f64> {
    if data.samples.is_empty() {
        return Err(Error::EmptyInput("accuracy dataset"));
    }
    let mut correct = 0usize;
    for (x, &label) in data.samples.iter().zip(&data.labels) {
        if net.predict(x)? == label {
            correct += 1;
        }
    }
    Ok(correct as f64 / data.samples.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{self, Split};

    fn tiny_net() -> Network {
        // 2 -> 2 ReLU -> 2 identity with hand-picked weights.
        let specs = [
            LayerSpec {
                in_dim: 2,
                out_dim: 2,
                activation: Activation::Relu,
            },
            LayerSpec {
                in_dim: 2,
                out_dim: 2,
                activation: Activation::Identity,
            },
        ];
        Network::from_parts(
            &specs,
            vec![vec![1.0, -1.0, 0.5, 0.5], vec![2.0, 0.0, -1.0, 1.0]],
            vec![vec![0.0, 0.25], vec![0.1, -0.1]],
        )
        .unwrap()
    }

    #[test]
    fn forward_matches_hand_computation() {
        let net = tiny_net();
        let x = Tensor::vector(vec![1.0, 2.0]).unwrap();
        // Layer 0: z = [1*1 - 1*2 + 0, 0.5*1 + 0.5*2 + 0.25] = [-1, 1.75]
        //          relu -> [0, 1.75]
        // Layer 1: z = [2*0 + 0*1.75 + 0.1, -1*0 + 1*1.75 - 0.1] = [0.1, 1.65]
        let trace = net.forward(&x).unwrap();
        assert_eq!(trace.per_layer.len(), 2);
        assert_eq!(trace.per_layer[0].data, vec![0.0, 1.75]);
        assert_eq!(trace.per_layer[1].data, vec![0.1, 1.65]);
        assert_eq!(trace.logits().data, trace.per_layer[1].data);
        assert_eq!(net.predict(&x).unwrap(), 1);
    }

    #[test]
    fn forward_rejects_wrong_input_length() {
        let net = tiny_net();
        let x = Tensor::vector(vec![1.0, 2.0, 3.0]).unwrap();
        assert!(matches!(net.forward(&x), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn constructor_rejects_broken_layer_chain() {
        let specs = [
            LayerSpec {
                in_dim: 4,
                out_dim: 3,
                activation: Activation::Relu,
            },
            LayerSpec {
                in_dim: 2, // does not match previous out_dim
                out_dim: 2,
                activation: Activation::Identity,
            },
        ];
        assert!(Network::new(&specs, 0).is_err());
    }

    #[test]
    fn constructor_requires_identity_logits_layer() {
        let specs = [LayerSpec {
            in_dim: 4,
            out_dim: 3,
            activation: Activation::Relu,
        }];
        assert!(Network::new(&specs, 0).is_err());
    }

    #[test]
    fn he_init_is_seed_deterministic() {
        let specs = [
            LayerSpec {
                in_dim: 5,
                out_dim: 4,
                activation: Activation::Relu,
            },
            LayerSpec {
                in_dim: 4,
                out_dim: 3,
                activation: Activation::Identity,
            },
        ];
        let a = Network::new(&specs, 7).unwrap();
        let b = Network::new(&specs, 7).unwrap();
        let c = Network::new(&specs, 8).unwrap();
        assert_eq!(a.layers[0].weights, b.layers[0].weights);
        assert_ne!(a.layers[0].weights, c.layers[0].weights);
    }

    /// Central finite differences as an independent oracle for the analytic
    /// input gradient.
    fn finite_difference(net: &Network, x: &Tensor, loss: &LossSpec, h: f64) -> Vec<f64> {
        let eval = |x: &Tensor| -> f64 {
            let logits = net.forward_logits(x).unwrap();
            match *loss {
                LossSpec::Logit(j) => logits.data[j],
                LossSpec::CrossEntropy { label } => {
                    let max = logits.data.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    let sum: f64 = logits.data.iter().map(|z| (z - max).exp()).sum();
                    -(logits.data[label] - max - sum.ln())
                }
                LossSpec::Margin { label, kappa } => {
                    let (_, other) = runner_up(&logits.data, label);
                    (logits.data[label] - other).max(-kappa)
                }
            }
        };
        (0..x.len())
            .map(|i| {
                let mut plus = x.clone();
                plus.data[i] += h;
                let mut minus = x.clone();
                minus.data[i] -= h;
                (eval(&plus) - eval(&minus)) / (2.0 * h)
            })
            .collect()
    }

    #[test]
    fn input_gradient_matches_finite_differences() {
        let specs = [
            LayerSpec {
                in_dim: 6,
                out_dim: 8,
                activation: Activation::Relu,
            },
            LayerSpec {
                in_dim: 8,
                out_dim: 5,
                activation: Activation::Relu,
            },
            LayerSpec {
                in_dim: 5,
                out_dim: 3,
                activation: Activation::Identity,
            },
        ];
        let net = Network::new(&specs, 11).unwrap();
        let x = Tensor::vector(vec![0.3, -0.8, 0.45, 0.1, -0.2, 0.9]).unwrap();
        let losses = [
            LossSpec::Logit(1),
            LossSpec::CrossEntropy { label: 2 },
            LossSpec::Margin {
                label: 0,
                kappa: 5.0,
            },
        ];
        for loss in &losses {
            let analytic = net.input_gradient(&x, loss).unwrap();
            let numeric = finite_difference(&net, &x, loss, 1e-5);
            for (a, n) in analytic.data.iter().zip(&numeric) {
                assert!(
                    (a - n).abs() <= 1e-4 * (1.0 + n.abs()),
                    "analytic {a} vs numeric {n} for {loss:?}"
                );
            }
        }
    }

    #[test]
    fn margin_gradient_is_zero_when_clamp_active() {
        let net = tiny_net();
        // x = [1, 2] gives logits [0.1, 1.65]: margin for label 0 is
        // 0.1 - 1.65 = -1.55, below -kappa for kappa = 1.
        let x = Tensor::vector(vec![1.0, 2.0]).unwrap();
        let g = net
            .input_gradient(
                &x,
                &LossSpec::Margin {
                    label: 0,
                    kappa: 1.0,
                },
            )
            .unwrap();
        assert!(g.data.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn logit_gradient_of_linear_net_is_weight_row() {
        let specs = [LayerSpec {
            in_dim: 3,
            out_dim: 2,
            activation: Activation::Identity,
        }];
        let net = Network::from_parts(
            &specs,
            vec![vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]],
            vec![vec![0.5, -0.5]],
        )
        .unwrap();
        let x = Tensor::vector(vec![0.1, 0.2, 0.3]).unwrap();
        let g = net.input_gradient(&x, &LossSpec::Logit(1)).unwrap();
        assert_eq!(g.data, vec![4.0, 5.0, 6.0]);
    }

    #[test]
    fn gradient_rejects_out_of_range_label() {
        let net = tiny_net();
        let x = Tensor::vector(vec![0.0, 0.0]).unwrap();
        assert!(matches!(
            net.input_gradient(&x, &LossSpec::CrossEntropy { label: 9 }),
            Err(Error::LabelOutOfRange { .. })
        ));
    }

    #[test]
    fn training_separates_synthetic_blobs() {
        let data = data::synthetic_blobs(300, 3, 8, 0.08, 42, Split::Train);
        let specs = [
            LayerSpec {
                in_dim: 8,
                out_dim: 16,
                activation: Activation::Relu,
            },
            LayerSpec {
                in_dim: 16,
                out_dim: 3,
                activation: Activation::Identity,
            },
        ];
        let net = Network::new(&specs, 1).unwrap();
        let cfg = TrainConfig {
            learning_rate: 0.2,
            epochs: 40,
            batch_size: 32,
            seed: 2,
        };
        let net = train(net, &data, &cfg).unwrap();
        assert!(accuracy(&net, &data).unwrap() >= 0.95);
    }

    #[test]
    fn training_is_seed_deterministic() {
        let data = data::synthetic_blobs(120, 2, 4, 0.1, 5, Split::Train);
        let specs = [
            LayerSpec {
                in_dim: 4,
                out_dim: 8,
                activation: Activation::Relu,
            },
            LayerSpec {
                in_dim: 8,
                out_dim: 2,
                activation: Activation::Identity,
            },
        ];
        let cfg = TrainConfig {
            learning_rate: 0.1,
            epochs: 10,
            batch_size: 16,
            seed: 3,
        };
        let a = train(Network::new(&specs, 1).unwrap(), &data, &cfg).unwrap();
        let b = train(Network::new(&specs, 1).unwrap(), &data, &cfg).unwrap();
        for (la, lb) in a.layers.iter().zip(&b.layers) {
            assert_eq!(la.weights, lb.weights);
            assert_eq!(la.bias, lb.bias);
        }
    }

    #[test]
    fn train_rejects_out_of_range_labels() {
        let mut data = data::synthetic_blobs(20, 2, 4, 0.1, 5, Split::Train);
        data.labels[3] = 7;
        let specs = [
            LayerSpec {
                in_dim: 4,
                out_dim: 4,
                activation: Activation::Relu,
            },
            LayerSpec {
                in_dim: 4,
                out_dim: 2,
                activation: Activation::Identity,
            },
        ];
        let net = Network::new(&specs, 0).unwrap();
        let err = train(net, &data, &TrainConfig::default()).unwrap_err();
        assert!(matches!(err, Error::LabelOutOfRange { .. }));
    }

    #[test]
    fn scale_logits_preserves_predictions_and_scales_margins() {
        let data = data::synthetic_blobs(100, 3, 6, 0.1, 9, Split::Train);
        let specs = [
            LayerSpec {
                in_dim: 6,
                out_dim: 12,
                activation: Activation::Relu,
            },
            LayerSpec {
                in_dim: 12,
                out_dim: 3,
                activation: Activation::Identity,
            },
        ];
        let net = train(
            Network::new(&specs, 4).unwrap(),
            &data,
            &TrainConfig {
                learning_rate: 0.2,
                epochs: 20,
                batch_size: 25,
                seed: 6,
            },
        )
        .unwrap();
        let mut scaled = net.clone();
        scaled.scale_logits(3.0);
        for x in data.samples.iter().take(20) {
            let a = net.forward(x).unwrap();
            let b = scaled.forward(x).unwrap();
            // Hidden layers identical, logits exactly tripled.
            assert_eq!(a.per_layer[0].data, b.per_layer[0].data);
            for (za, zb) in a.logits().data.iter().zip(&b.logits().data) {
                assert!((zb - 3.0 * za).abs() < 1e-12);
            }
            assert_eq!(argmax(&a.logits().data), argmax(&b.logits().data));
        }
        assert_eq!(
            accuracy(&net, &data).unwrap(),
            accuracy(&scaled, &data).unwrap()
        );
    }

    #[test]
    fn save_load_roundtrip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.lidnn");
        let specs = [
            LayerSpec {
                in_dim: 3,
                out_dim: 5,
                activation: Activation::Relu,
            },
            LayerSpec {
                in_dim: 5,
                out_dim: 2,
                activation: Activation::Identity,
            },
        ];
        let net = Network::new(&specs, 99).unwrap();
        net.save(&path).unwrap();
        let loaded = Network::load(&path).unwrap();
        assert_eq!(net.layers.len(), loaded.layers.len());
        for (a, b) in net.layers.iter().zip(&loaded.layers) {
            assert_eq!(a.spec, b.spec);
            assert_eq!(a.weights, b.weights);
            assert_eq!(a.bias, b.bias);
        }
    }

    #[test]
    fn load_rejects_bad_magic_and_truncation() {
        let dir = tempfile::tempdir().unwrap();
        let bad = dir.path().join("bad.lidnn");
        std::fs::write(&bad, b"NOTNN1rest").unwrap();
        assert!(matches!(
            Network::load(&bad),
            Err(Error::MalformedFile { .. })
        ));

        let path = dir.path().join("trunc.lidnn");
        let specs = [
            LayerSpec {
                in_dim: 3,
                out_dim: 4,
                activation: Activation::Relu,
            },
            LayerSpec {
                in_dim: 4,
                out_dim: 2,
                activation: Activation::Identity,
            },
        ];
        Network::new(&specs, 0).unwrap().save(&path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 9]).unwrap();
        assert!(matches!(
            Network::load(&path),
            Err(Error::MalformedFile { .. })
        ));
    }

    #[test]
    fn load_rejects_trailing_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("extra.lidnn");
        let specs = [
            LayerSpec {
                in_dim: 2,
                out_dim: 3,
                activation: Activation::Relu,
            },
            LayerSpec {
                in_dim: 3,
                out_dim: 2,
                activation: Activation::Identity,
            },
        ];
        Network::new(&specs, 0).unwrap().save(&path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes.push(0);
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(
            Network::load(&path),
            Err(Error::MalformedFile { .. })
        ));
    }

    #[test]
    fn argmax_breaks_ties_toward_lowest_index() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0, 2.0]), 1);
        assert_eq!(argmax(&[5.0]), 0);
        assert_eq!(argmax(&[2.0, 2.0, 2.0]), 0);
    }
}
