//! Minimal dense feed-forward network engine.
//!
//! Forward pass, analytically derived gradients, and plain SGD — shared by
//! the triggered classifiers, the clean classifiers, and the output-based
//! detector. Everything is `f64` and every operation is a pure function of
//! its arguments, so models can be copied freely across threads and every
//! gradient can be checked against central finite differences.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

/// Floor applied to probabilities before taking logarithms.
pub const PROB_FLOOR: f64 = 1e-12;

/// Hidden-layer nonlinearity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Tanh,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
        }
    }

    /// Derivative expressed through the post-activation value.
    #[inline]
    fn grad_from_output(self, a: f64) -> f64 {
        match self {
            Activation::Relu => {
                if a > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - a * a,
        }
    }
}

/// Output head: probability vector over k classes, or a single sigmoid unit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputHead {
    Softmax,
    SigmoidScalar,
}

/// A dense multi-layer perceptron.
///
/// `layer_dims = [d, h1, ..., k]`; weight matrix for layer `l` is row-major
/// with shape `(layer_dims[l+1], layer_dims[l])`, bias length `layer_dims[l+1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    pub layer_dims: Vec<usize>,
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
    pub hidden_activation: Activation,
    pub output_head: OutputHead,
}

/// Per-parameter gradients, shape-congruent with the model that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

/// Update direction for [`sgd_step`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Descent,
    Ascent,
}

impl Gradients {
    /// All-zero gradients congruent with `model`.
    pub fn zeros_like(model: &MlpModel) -> Self {
        Gradients {
            weights: model.weights.iter().map(|w| vec![0.0; w.len()]).collect(),
            biases: model.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
        }
    }

    /// `self += other * scale`.
    pub fn add_scaled(&mut self, other: &Gradients, scale: f64) {
        for (sw, ow) in self.weights.iter_mut().zip(&other.weights) {
            for (s, o) in sw.iter_mut().zip(ow) {
                *s += o * scale;
            }
        }
        for (sb, ob) in self.biases.iter_mut().zip(&other.biases) {
            for (s, o) in sb.iter_mut().zip(ob) {
                *s += o * scale;
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for w in self.weights.iter_mut().flatten() {
            *w *= factor;
        }
        for b in self.biases.iter_mut().flatten() {
            *b *= factor;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().flatten().all(|v| v.is_finite())
            && self.biases.iter().flatten().all(|v| v.is_finite())
    }
}

impl MlpModel {
    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_dims.last().unwrap()
    }

    fn n_layers(&self) -> usize {
        self.layer_dims.len() - 1
    }

    /// Total number of scalar parameters (weights then biases, layer by layer).
    pub fn param_count(&self) -> usize {
        self.weights.iter().map(Vec::len).sum::<usize>()
            + self.biases.iter().map(Vec::len).sum::<usize>()
    }

    /// Flat read access to parameter `i` (weights of all layers, then biases).
    pub fn param(&self, mut i: usize) -> f64 {
        for w in &self.weights {
            if i < w.len() {
                return w[i];
            }
            i -= w.len();
        }
        for b in &self.biases {
            if i < b.len() {
                return b[i];
            }
            i -= b.len();
        }
        panic!("parameter index out of range");
    }

    /// Flat write access, mirror of [`MlpModel::param`].
    pub fn set_param(&mut self, mut i: usize, value: f64) {
        for w in &mut self.weights {
            if i < w.len() {
                w[i] = value;
                return;
            }
            i -= w.len();
        }
        for b in &mut self.biases {
            if i < b.len() {
                b[i] = value;
                return;
            }
            i -= b.len();
        }
        panic!("parameter index out of range");
    }

    pub fn all_finite(&self) -> bool {
        self.weights.iter().flatten().all(|v| v.is_finite())
            && self.biases.iter().flatten().all(|v| v.is_finite())
    }
}

fn validate_dims(layer_dims: &[usize], head: OutputHead) -> Result<()> {
    if layer_dims.len() < 2 {
        return Err(Error::invalid(
            "layer_dims must contain input and output dims",
        ));
    }
    if layer_dims.iter().any(|&d| d == 0) {
        return Err(Error::invalid("layer dims must be positive"));
    }
    let k = *layer_dims.last().unwrap();
    match head {
        OutputHead::Softmax if k < 2 => Err(Error::invalid("softmax head requires output dim >= 2")),
        OutputHead::SigmoidScalar if k != 1 => {
            Err(Error::invalid("sigmoid_scalar head requires output dim 1"))
        }
        _ => Ok(()),
    }
}

/// Glorot-style uniform initialization: weights in ±sqrt(6/(fan_in+fan_out)),
/// biases zero. Deterministic for a given seed.
pub fn init_model(
    layer_dims: &[usize],
    activation: Activation,
    head: OutputHead,
    init_seed: u64,
) -> Result<MlpModel> {
    validate_dims(layer_dims, head)?;
    let mut rng = seed::rng(init_seed);
    let mut weights = Vec::with_capacity(layer_dims.len() - 1);
    let mut biases = Vec::with_capacity(layer_dims.len() - 1);
    for l in 0..layer_dims.len() - 1 {
        let (fan_in, fan_out) = (layer_dims[l], layer_dims[l + 1]);
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let w = (0..fan_in * fan_out)
            .map(|_| {
                use rand::Rng;
                rng.random_range(-limit..limit)
            })
            .collect();
        weights.push(w);
        biases.push(vec![0.0; fan_out]);
    }
    Ok(MlpModel {
        layer_dims: layer_dims.to_vec(),
        weights,
        biases,
        hidden_activation: activation,
        output_head: head,
    })
}

/// Numerically stable softmax; entries are floored at the smallest positive
/// double so they never reach exact zero.
fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.iter()
        .map(|&e| (e / sum).max(f64::MIN_POSITIVE))
        .collect()
}

#[inline]
fn sigmoid(z: f64) -> f64 {
    let s = 1.0 / (1.0 + (-z).exp());
    s.clamp(PROB_FLOOR, 1.0 - PROB_FLOOR)
}

struct ForwardTrace {
    /// `activations[0]` is the input; `activations[l]` for `l >= 1` are
    /// post-activation hidden vectors.
    activations: Vec<Vec<f64>>,
    output: Vec<f64>,
}

fn affine(weights: &[f64], biases: &[f64], input: &[f64]) -> Vec<f64> {
    let out_dim = biases.len();
    let in_dim = input.len();
    let mut out = biases.to_vec();
    for (r, o) in out.iter_mut().enumerate() {
        let row = &weights[r * in_dim..(r + 1) * in_dim];
        let mut acc = 0.0;
        for (w, x) in row.iter().zip(input) {
            acc += w * x;
        }
        *o += acc;
    }
    let _ = out_dim;
    out
}

fn forward_trace(model: &MlpModel, x: &[f64]) -> Result<ForwardTrace> {
    if x.len() != model.input_dim() {
        return Err(Error::shape(format!(
            "input length {} does not match model input dim {}",
            x.len(),
            model.input_dim()
        )));
    }
    let n = model.n_layers();
    let mut activations = Vec::with_capacity(n);
    activations.push(x.to_vec());
    let mut current = x.to_vec();
    for l in 0..n {
        let z = affine(&model.weights[l], &model.biases[l], &current);
        if l + 1 < n {
            current = z.iter().map(|&v| model.hidden_activation.apply(v)).collect();
            activations.push(current.clone());
        } else {
            let output = match model.output_head {
                OutputHead::Softmax => softmax(&z),
                OutputHead::SigmoidScalar => vec![sigmoid(z[0])],
            };
            return Ok(ForwardTrace {
                activations,
                output,
            });
        }
    }
    unreachable!("n_layers >= 1 by construction")
}

/// Run the network on one input. Softmax head returns a probability vector
/// (entries positive, sum 1 within 1e-12); sigmoid head returns a single
/// value strictly inside (0, 1).
pub fn forward(model: &MlpModel, x: &[f64]) -> Result<Vec<f64>> {
    forward_trace(model, x).map(|t| t.output)
}

/// Categorical cross-entropy: `-ln(probs[label])` with the probability
/// floored at [`PROB_FLOOR`] before the logarithm.
pub fn cross_entropy(probs: &[f64], label: usize) -> Result<f64> {
    if label >= probs.len() {
        return Err(Error::invalid(format!(
            "label {} out of range for {} classes",
            label,
            probs.len()
        )));
    }
    Ok(-probs[label].max(PROB_FLOOR).ln())
}

/// Gradient of [`cross_entropy`] with respect to the probability vector.
/// Zero in the floored region, matching the clamped loss surface.
pub fn cross_entropy_grad(probs: &[f64], label: usize) -> Result<Vec<f64>> {
    if label >= probs.len() {
        return Err(Error::invalid(format!(
            "label {} out of range for {} classes",
            label,
            probs.len()
        )));
    }
    let mut g = vec![0.0; probs.len()];
    if probs[label] > PROB_FLOOR {
        g[label] = -1.0 / probs[label];
    }
    Ok(g)
}

/// Exact reverse-mode gradients of a scalar loss through the network.
///
/// `upstream` is dLoss/dOutput evaluated at `forward(model, x)`. Returns the
/// parameter gradients and the gradient with respect to the input (needed to
/// chain losses through a second network, and by the trigger reversal).
pub fn backward(model: &MlpModel, x: &[f64], upstream: &[f64]) -> Result<(Gradients, Vec<f64>)> {
    if upstream.len() != model.output_dim() {
        return Err(Error::shape(format!(
            "upstream length {} does not match output dim {}",
            upstream.len(),
            model.output_dim()
        )));
    }
    let trace = forward_trace(model, x)?;
    let n = model.n_layers();
    let mut grads = Gradients::zeros_like(model);

    // Head backprop: dLoss/dLogits from dLoss/dOutput.
    let mut dz: Vec<f64> = match model.output_head {
        OutputHead::Softmax => {
            let p = &trace.output;
            let dot: f64 = upstream.iter().zip(p).map(|(u, pi)| u * pi).sum();
            p.iter()
                .zip(upstream)
                .map(|(&pi, &ui)| pi * (ui - dot))
                .collect()
        }
        OutputHead::SigmoidScalar => {
            let s = trace.output[0];
            vec![upstream[0] * s * (1.0 - s)]
        }
    };

    let mut input_grad = Vec::new();
    for l in (0..n).rev() {
        let a_in = &trace.activations[l];
        let in_dim = a_in.len();
        {
            let gw = &mut grads.weights[l];
            let gb = &mut grads.biases[l];
            for (r, &d) in dz.iter().enumerate() {
                gb[r] = d;
                let row = &mut gw[r * in_dim..(r + 1) * in_dim];
                for (g, &a) in row.iter_mut().zip(a_in) {
                    *g = d * a;
                }
            }
        }
        let mut da_in = vec![0.0; in_dim];
        let w = &model.weights[l];
        for (r, &d) in dz.iter().enumerate() {
            let row = &w[r * in_dim..(r + 1) * in_dim];
            for (da, &wv) in da_in.iter_mut().zip(row) {
                *da += wv * d;
            }
        }
        if l == 0 {
            input_grad = da_in;
        } else {
            dz = da_in
                .iter()
                .zip(&trace.activations[l])
                .map(|(&da, &a)| da * model.hidden_activation.grad_from_output(a))
                .collect();
        }
    }
    Ok((grads, input_grad))
}

/// One SGD step: `theta' = theta -/+ rate * g`. Pure — returns a new model.
pub fn sgd_step(
    model: &MlpModel,
    grads: &Gradients,
    rate: f64,
    direction: Direction,
) -> Result<MlpModel> {
    if !(rate > 0.0 && rate < 1.0) {
        return Err(Error::invalid(format!(
            "learning rate must lie in (0, 1), got {rate}"
        )));
    }
    if grads.weights.len() != model.weights.len() || grads.biases.len() != model.biases.len() {
        return Err(Error::shape("gradients not congruent with model"));
    }
    if !grads.is_finite() {
        return Err(Error::invalid("non-finite gradient entry"));
    }
    let sign = match direction {
        Direction::Descent => -1.0,
        Direction::Ascent => 1.0,
    };
    let mut out = model.clone();
    for (w, gw) in out.weights.iter_mut().zip(&grads.weights) {
        if w.len() != gw.len() {
            return Err(Error::shape("gradient weight shape mismatch"));
        }
        for (v, g) in w.iter_mut().zip(gw) {
            *v += sign * rate * g;
        }
    }
    for (b, gb) in out.biases.iter_mut().zip(&grads.biases) {
        if b.len() != gb.len() {
            return Err(Error::shape("gradient bias shape mismatch"));
        }
        for (v, g) in b.iter_mut().zip(gb) {
            *v += sign * rate * g;
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Checkpoint format
// ---------------------------------------------------------------------------

/// On-disk model checkpoint. Weights are row-major flat arrays per layer;
/// doubles survive a JSON round-trip bit-exactly.
#[derive(Debug, Serialize, Deserialize)]
struct CheckpointV1 {
    version: u32,
    layer_dims: Vec<usize>,
    activation: Activation,
    head: OutputHead,
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
}

pub fn to_checkpoint_json(model: &MlpModel) -> Result<String> {
    if !model.all_finite() {
        return Err(Error::invalid("refusing to checkpoint non-finite model"));
    }
    let ck = CheckpointV1 {
        version: 1,
        layer_dims: model.layer_dims.clone(),
        activation: model.hidden_activation,
        head: model.output_head,
        weights: model.weights.clone(),
        biases: model.biases.clone(),
    };
    Ok(serde_json::to_string_pretty(&ck)?)
}

pub fn from_checkpoint_json(json: &str) -> Result<MlpModel> {
    let ck: CheckpointV1 = serde_json::from_str(json)?;
    if ck.version != 1 {
        return Err(Error::Serialization(format!(
            "unsupported checkpoint version {}",
            ck.version
        )));
    }
    let model = MlpModel {
        layer_dims: ck.layer_dims,
        weights: ck.weights,
        biases: ck.biases,
        hidden_activation: ck.activation,
        output_head: ck.head,
    };
    validate_dims(&model.layer_dims, model.output_head)?;
    for l in 0..model.layer_dims.len() - 1 {
        let expect_w = model.layer_dims[l] * model.layer_dims[l + 1];
        if model.weights.get(l).map(Vec::len) != Some(expect_w)
            || model.biases.get(l).map(Vec::len) != Some(model.layer_dims[l + 1])
        {
            return Err(Error::shape(format!("checkpoint layer {l} has wrong shape")));
        }
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn zero_model(dims: &[usize], head: OutputHead) -> MlpModel {
        let mut m = init_model(dims, Activation::Tanh, head, 0).unwrap();
        for w in m.weights.iter_mut().flatten() {
            *w = 0.0;
        }
        m
    }

    #[test]
    fn zero_net_softmax_is_uniform() {
        let m = zero_model(&[3, 4], OutputHead::Softmax);
        let out = forward(&m, &[0.3, -1.0, 2.0]).unwrap();
        for &p in &out {
            assert!((p - 0.25).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_net_sigmoid_is_half() {
        let m = zero_model(&[3, 1], OutputHead::SigmoidScalar);
        let out = forward(&m, &[5.0, -2.0, 0.1]).unwrap();
        assert!((out[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn softmax_of_known_logits() {
        // Logits (0, ln 3) -> probabilities (0.25, 0.75).
        let mut m = zero_model(&[2, 2], OutputHead::Softmax);
        m.biases[0] = vec![0.0, 3.0_f64.ln()];
        let out = forward(&m, &[0.0, 0.0]).unwrap();
        assert!((out[0] - 0.25).abs() < 1e-12);
        assert!((out[1] - 0.75).abs() < 1e-12);
    }

    #[test]
    fn softmax_sums_to_one_over_random_models() {
        use rand::Rng;
        let mut rng = crate::seed::rng(42);
        for i in 0..1000 {
            let k = rng.random_range(2..=6);
            let d = rng.random_range(1..=8);
            let m = init_model(&[d, 5, k], Activation::Relu, OutputHead::Softmax, i).unwrap();
            let x: Vec<f64> = (0..d).map(|_| rng.random_range(-3.0..3.0)).collect();
            let out = forward(&m, &x).unwrap();
            let sum: f64 = out.iter().sum();
            assert!((sum - 1.0).abs() < 1e-12, "sum={sum}");
            assert!(out.iter().all(|&p| p > 0.0));
        }
    }

    #[test]
    fn forward_rejects_wrong_input_dim() {
        let m = zero_model(&[3, 2], OutputHead::Softmax);
        assert!(matches!(
            forward(&m, &[1.0, 2.0]),
            Err(Error::ShapeMismatch(_))
        ));
    }

    #[test]
    fn cross_entropy_examples() {
        let ce = cross_entropy(&[0.25, 0.25, 0.25, 0.25], 2).unwrap();
        assert!((ce - 4.0_f64.ln()).abs() < 1e-12);
        let ce = cross_entropy(&[1.0, 0.0], 0).unwrap();
        assert!(ce.abs() < 1e-15);
        let ce = cross_entropy(&[0.1, 0.9], 0).unwrap();
        assert!((ce - 2.302585092994046).abs() < 1e-12);
        assert!(cross_entropy(&[0.5, 0.5], 2).is_err());
    }

    #[test]
    fn cross_entropy_clamps_zero_probability() {
        let ce = cross_entropy(&[0.0, 1.0], 0).unwrap();
        assert!((ce - (-PROB_FLOOR.ln())).abs() < 1e-6);
    }

    #[test]
    fn backward_zero_upstream_gives_zero_gradients() {
        let m = init_model(&[4, 6, 3], Activation::Tanh, OutputHead::Softmax, 9).unwrap();
        let (g, gx) = backward(&m, &[0.1, 0.2, 0.3, 0.4], &[0.0, 0.0, 0.0]).unwrap();
        assert!(g.weights.iter().flatten().all(|&v| v == 0.0));
        assert!(g.biases.iter().flatten().all(|&v| v == 0.0));
        assert!(gx.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn linear_weight_gradient_equals_input() {
        // Single sigmoid unit; choose upstream so dLoss/dLogit = 1, then
        // dLoss/dw_j = x_j.
        let mut m = zero_model(&[3, 1], OutputHead::SigmoidScalar);
        m.weights[0] = vec![0.0, 0.0, 0.0];
        let x = [0.7, -0.2, 1.5];
        let s = forward(&m, &x).unwrap()[0];
        let upstream = vec![1.0 / (s * (1.0 - s))];
        let (g, _) = backward(&m, &x, &upstream).unwrap();
        for (gw, xv) in g.weights[0].iter().zip(&x) {
            assert!((gw - xv).abs() < 1e-9);
        }
    }

    #[test]
    fn backward_matches_finite_differences_for_cross_entropy() {
        let m = init_model(&[4, 5, 3], Activation::Tanh, OutputHead::Softmax, 3).unwrap();
        let x = [0.2, 0.8, -0.4, 0.1];
        let label = 1;
        let probs = forward(&m, &x).unwrap();
        let upstream = cross_entropy_grad(&probs, label).unwrap();
        let (g, gx) = backward(&m, &x, &upstream).unwrap();

        let h = 1e-5;
        let loss = |model: &MlpModel, input: &[f64]| {
            cross_entropy(&forward(model, input).unwrap(), label).unwrap()
        };
        for i in 0..m.param_count() {
            let orig = m.param(i);
            let mut mp = m.clone();
            mp.set_param(i, orig + h);
            let mut mm = m.clone();
            mm.set_param(i, orig - h);
            let numeric = (loss(&mp, &x) - loss(&mm, &x)) / (2.0 * h);
            let analytic = if i < m.weights.iter().map(Vec::len).sum::<usize>() {
                let mut idx = i;
                let mut val = 0.0;
                for w in &g.weights {
                    if idx < w.len() {
                        val = w[idx];
                        break;
                    }
                    idx -= w.len();
                }
                val
            } else {
                let mut idx = i - m.weights.iter().map(Vec::len).sum::<usize>();
                let mut val = 0.0;
                for b in &g.biases {
                    if idx < b.len() {
                        val = b[idx];
                        break;
                    }
                    idx -= b.len();
                }
                val
            };
            let scale = analytic.abs().max(numeric.abs()).max(1.0);
            assert!(
                (analytic - numeric).abs() / scale < 1e-6,
                "param {i}: analytic {analytic} vs numeric {numeric}"
            );
        }
        // Input gradient too.
        for j in 0..x.len() {
            let mut xp = x;
            xp[j] += h;
            let mut xm = x;
            xm[j] -= h;
            let numeric = (loss(&m, &xp) - loss(&m, &xm)) / (2.0 * h);
            let scale = gx[j].abs().max(numeric.abs()).max(1.0);
            assert!((gx[j] - numeric).abs() / scale < 1e-6);
        }
    }

    #[test]
    fn sgd_scalar_arithmetic() {
        let mut m = zero_model(&[1, 1], OutputHead::SigmoidScalar);
        m.weights[0] = vec![1.0];
        let mut g = Gradients::zeros_like(&m);
        g.weights[0] = vec![2.0];
        let down = sgd_step(&m, &g, 0.1, Direction::Descent).unwrap();
        assert!((down.weights[0][0] - 0.8).abs() < 1e-15);
        let up = sgd_step(&m, &g, 0.1, Direction::Ascent).unwrap();
        assert!((up.weights[0][0] - 1.2).abs() < 1e-15);
        // Input untouched.
        assert!((m.weights[0][0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn sgd_zero_gradient_is_identity() {
        let m = init_model(&[3, 4, 2], Activation::Relu, OutputHead::Softmax, 5).unwrap();
        let g = Gradients::zeros_like(&m);
        let m2 = sgd_step(&m, &g, 0.5, Direction::Descent).unwrap();
        assert_eq!(m, m2);
    }

    #[test]
    fn sgd_rejects_bad_rate_and_nonfinite() {
        let m = init_model(&[2, 2], Activation::Tanh, OutputHead::Softmax, 1).unwrap();
        let g = Gradients::zeros_like(&m);
        assert!(sgd_step(&m, &g, 1.0, Direction::Descent).is_err());
        assert!(sgd_step(&m, &g, 0.0, Direction::Descent).is_err());
        let mut bad = Gradients::zeros_like(&m);
        bad.weights[0][0] = f64::NAN;
        assert!(sgd_step(&m, &bad, 0.1, Direction::Descent).is_err());
    }

    #[test]
    fn init_is_seed_deterministic_with_zero_biases() {
        let a = init_model(&[5, 7, 3], Activation::Relu, OutputHead::Softmax, 11).unwrap();
        let b = init_model(&[5, 7, 3], Activation::Relu, OutputHead::Softmax, 11).unwrap();
        assert_eq!(a, b);
        let c = init_model(&[5, 7, 3], Activation::Relu, OutputHead::Softmax, 12).unwrap();
        assert_ne!(a, c);
        assert!(a.biases.iter().flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn init_rejects_degenerate_dims() {
        assert!(init_model(&[], Activation::Relu, OutputHead::Softmax, 0).is_err());
        assert!(init_model(&[4], Activation::Relu, OutputHead::Softmax, 0).is_err());
        assert!(init_model(&[4, 1], Activation::Relu, OutputHead::Softmax, 0).is_err());
        assert!(init_model(&[4, 2], Activation::Relu, OutputHead::SigmoidScalar, 0).is_err());
    }

    #[test]
    fn checkpoint_roundtrip_is_bit_exact() {
        let m = init_model(&[6, 9, 4], Activation::Tanh, OutputHead::Softmax, 77).unwrap();
        let json = to_checkpoint_json(&m).unwrap();
        let back = from_checkpoint_json(&json).unwrap();
        assert_eq!(m.layer_dims, back.layer_dims);
        for (a, b) in m.weights.iter().flatten().zip(back.weights.iter().flatten()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        for (a, b) in m.biases.iter().flatten().zip(back.biases.iter().flatten()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }
}
