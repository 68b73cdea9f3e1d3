//! Small feed-forward policy and value networks with hand-written backprop.
//!
//! Both networks live in one flat parameter vector. The layout is fixed and
//! relied upon by the wire format and by tests:
//!
//! * policy network layers first, then value network layers;
//! * per layer, the weight matrix row-major as `[output][input]`, followed by
//!   the bias vector;
//! * hidden layers use the configured activation, output layers are linear
//!   (softmax is applied on top of the policy logits).

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::environment::{Action, Observation, OBS_DIM};

pub const POLICY_OUTPUTS: usize = 2;
pub const VALUE_OUTPUTS: usize = 1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NeuralError {
    #[error("vector length {actual} does not match shape ({expected} parameters)")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("vectors were built for different network shapes")]
    ShapeMismatch,
    #[error("batch is empty")]
    EmptyBatch,
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("learning rate must be positive and finite, got {0}")]
    InvalidLearningRate(f64),
    #[error("invalid network shape: {0}")]
    InvalidShape(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Tanh,
    Relu,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Relu => x.max(0.0),
        }
    }

    /// Derivative expressed through the activation's output.
    fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - y * y,
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Activation::Tanh => f.write_str("tanh"),
            Activation::Relu => f.write_str("relu"),
        }
    }
}

/// User-facing description of the two networks' hidden layers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShapeSpec {
    pub policy_hidden: Vec<usize>,
    pub value_hidden: Vec<usize>,
    pub activation: Activation,
}

impl Default for ShapeSpec {
    fn default() -> Self {
        Self {
            policy_hidden: vec![64],
            value_hidden: vec![64],
            activation: Activation::Tanh,
        }
    }
}

impl ShapeSpec {
    pub fn with_hidden(width: usize) -> Self {
        Self {
            policy_hidden: vec![width],
            value_hidden: vec![width],
            activation: Activation::Tanh,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Dense {
    inputs: usize,
    outputs: usize,
    offset: usize,
}

impl Dense {
    fn bias_offset(&self) -> usize {
        self.offset + self.inputs * self.outputs
    }

    fn end(&self) -> usize {
        self.bias_offset() + self.outputs
    }
}

fn build_layers(input: usize, hidden: &[usize], output: usize, start: usize) -> Vec<Dense> {
    let mut layers = Vec::with_capacity(hidden.len() + 1);
    let mut offset = start;
    let mut fan_in = input;
    for &width in hidden.iter().chain(std::iter::once(&output)) {
        let layer = Dense {
            inputs: fan_in,
            outputs: width,
            offset,
        };
        offset = layer.end();
        fan_in = width;
        layers.push(layer);
    }
    layers
}

/// Resolved layer layout of the policy and value networks.
#[derive(Debug, Clone)]
pub struct ShapeDescriptor {
    spec: ShapeSpec,
    policy: Vec<Dense>,
    value: Vec<Dense>,
    policy_len: usize,
    total_len: usize,
}

impl PartialEq for ShapeDescriptor {
    fn eq(&self, other: &Self) -> bool {
        self.spec == other.spec
    }
}

impl ShapeDescriptor {
    pub fn new(spec: ShapeSpec) -> Result<Self, NeuralError> {
        if spec
            .policy_hidden
            .iter()
            .chain(spec.value_hidden.iter())
            .any(|&w| w == 0)
        {
            return Err(NeuralError::InvalidShape(
                "hidden layer widths must be non-zero".into(),
            ));
        }
        let policy = build_layers(OBS_DIM, &spec.policy_hidden, POLICY_OUTPUTS, 0);
        let policy_len = policy.last().map(Dense::end).unwrap_or(0);
        let value = build_layers(OBS_DIM, &spec.value_hidden, VALUE_OUTPUTS, policy_len);
        let total_len = value.last().map(Dense::end).unwrap_or(policy_len);
        Ok(Self {
            spec,
            policy,
            value,
            policy_len,
            total_len,
        })
    }

    pub fn shared(spec: ShapeSpec) -> Result<Arc<Self>, NeuralError> {
        Self::new(spec).map(Arc::new)
    }

    pub fn spec(&self) -> &ShapeSpec {
        &self.spec
    }

    pub fn param_count(&self) -> usize {
        self.total_len
    }

    /// Number of leading entries that belong to the policy network.
    pub fn policy_len(&self) -> usize {
        self.policy_len
    }
}

/// Flat parameters of both networks.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterVector {
    values: Vec<f64>,
    shape: Arc<ShapeDescriptor>,
}

/// Flat gradient with the same layout as [`ParameterVector`].
#[derive(Debug, Clone, PartialEq)]
pub struct GradientVector {
    values: Vec<f64>,
    shape: Arc<ShapeDescriptor>,
}

fn check_values(
    shape: &ShapeDescriptor,
    values: &[f64],
    what: &'static str,
) -> Result<(), NeuralError> {
    if values.len() != shape.param_count() {
        return Err(NeuralError::LengthMismatch {
            expected: shape.param_count(),
            actual: values.len(),
        });
    }
    if !values.iter().all(|v| v.is_finite()) {
        return Err(NeuralError::NonFinite(what));
    }
    Ok(())
}

impl ParameterVector {
    pub fn from_values(shape: Arc<ShapeDescriptor>, values: Vec<f64>) -> Result<Self, NeuralError> {
        check_values(&shape, &values, "parameters")?;
        Ok(Self { values, shape })
    }

    pub fn zeros(shape: Arc<ShapeDescriptor>) -> Self {
        Self {
            values: vec![0.0; shape.param_count()],
            shape,
        }
    }

    pub fn shape(&self) -> &Arc<ShapeDescriptor> {
        &self.shape
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// In-place plain SGD step: `self -= lr * grad`.
    pub fn apply_gradient(&mut self, grad: &GradientVector, lr: f64) -> Result<(), NeuralError> {
        if !(lr > 0.0 && lr.is_finite()) {
            return Err(NeuralError::InvalidLearningRate(lr));
        }
        if self.shape != grad.shape {
            return Err(NeuralError::ShapeMismatch);
        }
        for (p, g) in self.values.iter_mut().zip(&grad.values) {
            *p -= lr * g;
        }
        if !self.values.iter().all(|v| v.is_finite()) {
            return Err(NeuralError::NonFinite("updated parameters"));
        }
        Ok(())
    }
}

impl GradientVector {
    pub fn from_values(shape: Arc<ShapeDescriptor>, values: Vec<f64>) -> Result<Self, NeuralError> {
        check_values(&shape, &values, "gradient")?;
        Ok(Self { values, shape })
    }

    pub fn zeros(shape: Arc<ShapeDescriptor>) -> Self {
        Self {
            values: vec![0.0; shape.param_count()],
            shape,
        }
    }

    pub fn shape(&self) -> &Arc<ShapeDescriptor> {
        &self.shape
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn policy_block(&self) -> &[f64] {
        &self.values[..self.shape.policy_len()]
    }

    pub fn value_block(&self) -> &[f64] {
        &self.values[self.shape.policy_len()..]
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            values: self.values.iter().map(|v| v * factor).collect(),
            shape: Arc::clone(&self.shape),
        }
    }

    /// Rounds every component to the nearest 32-bit float.
    pub fn narrowed(&self) -> Self {
        Self {
            values: self.values.iter().map(|&v| v as f32 as f64).collect(),
            shape: Arc::clone(&self.shape),
        }
    }
}

/// Scaled-uniform weights, zero biases.
pub fn init_params<R: Rng + ?Sized>(shape: Arc<ShapeDescriptor>, rng: &mut R) -> ParameterVector {
    let mut values = vec![0.0; shape.param_count()];
    for layer in shape.policy.iter().chain(shape.value.iter()) {
        let bound = (6.0 / (layer.inputs + layer.outputs) as f64).sqrt();
        for w in &mut values[layer.offset..layer.bias_offset()] {
            *w = rng.gen_range(-bound..=bound);
        }
    }
    ParameterVector { values, shape }
}

/// Plain SGD step returning a new vector.
pub fn apply_update(
    params: &ParameterVector,
    grad: &GradientVector,
    lr: f64,
) -> Result<ParameterVector, NeuralError> {
    let mut out = params.clone();
    out.apply_gradient(grad, lr)?;
    Ok(out)
}

/// Returns the activations of every layer, starting with the input.
fn forward_trace(
    layers: &[Dense],
    act: Activation,
    params: &[f64],
    input: &[f64],
) -> Vec<Vec<f64>> {
    let mut trace = Vec::with_capacity(layers.len() + 1);
    trace.push(input.to_vec());
    let last = layers.len() - 1;
    for (l, layer) in layers.iter().enumerate() {
        let x = &trace[l];
        let w = &params[layer.offset..layer.bias_offset()];
        let b = &params[layer.bias_offset()..layer.end()];
        let mut out = Vec::with_capacity(layer.outputs);
        for (o, bias) in b.iter().enumerate() {
            let row = &w[o * layer.inputs..(o + 1) * layer.inputs];
            let mut acc = *bias;
            for (wi, xi) in row.iter().zip(x) {
                acc += wi * xi;
            }
            out.push(if l < last { act.apply(acc) } else { acc });
        }
        trace.push(out);
    }
    trace
}

/// Accumulates dL/dparams into `grad` given dL/d(output) of the last layer.
fn backprop(
    layers: &[Dense],
    act: Activation,
    params: &[f64],
    trace: &[Vec<f64>],
    output_delta: Vec<f64>,
    grad: &mut [f64],
) {
    let mut delta = output_delta;
    for (l, layer) in layers.iter().enumerate().rev() {
        let input = &trace[l];
        let (gw, gb) = grad[layer.offset..layer.end()].split_at_mut(layer.inputs * layer.outputs);
        for (o, &d) in delta.iter().enumerate() {
            gb[o] += d;
            for (g, x) in gw[o * layer.inputs..(o + 1) * layer.inputs]
                .iter_mut()
                .zip(input)
            {
                *g += d * x;
            }
        }
        if l > 0 {
            let w = &params[layer.offset..layer.bias_offset()];
            let mut prev = vec![0.0; layer.inputs];
            for (o, &d) in delta.iter().enumerate() {
                for (p, wi) in prev
                    .iter_mut()
                    .zip(&w[o * layer.inputs..(o + 1) * layer.inputs])
                {
                    *p += wi * d;
                }
            }
            for (p, y) in prev.iter_mut().zip(input) {
                *p *= act.derivative_from_output(*y);
            }
            delta = prev;
        }
    }
}

fn log_softmax(logits: &[f64]) -> [f64; POLICY_OUTPUTS] {
    let m = logits[0].max(logits[1]);
    let lse = m + ((logits[0] - m).exp() + (logits[1] - m).exp()).ln();
    [logits[0] - lse, logits[1] - lse]
}

fn softmax(logits: &[f64]) -> [f64; POLICY_OUTPUTS] {
    let m = logits[0].max(logits[1]);
    let e0 = (logits[0] - m).exp();
    let e1 = (logits[1] - m).exp();
    let sum = e0 + e1;
    [e0 / sum, e1 / sum]
}

fn policy_logits(params: &ParameterVector, obs: &Observation) -> Vec<Vec<f64>> {
    let shape = &params.shape;
    forward_trace(&shape.policy, shape.spec.activation, &params.values, obs)
}

fn value_trace(params: &ParameterVector, obs: &Observation) -> Vec<Vec<f64>> {
    let shape = &params.shape;
    forward_trace(&shape.value, shape.spec.activation, &params.values, obs)
}

/// Action probabilities `(P(left), P(right))`.
pub fn policy_forward(
    params: &ParameterVector,
    obs: &Observation,
) -> Result<[f64; 2], NeuralError> {
    let trace = policy_logits(params, obs);
    let logits = trace.last().expect("trace has an output layer");
    if !logits.iter().all(|v| v.is_finite()) {
        return Err(NeuralError::NonFinite("policy logits"));
    }
    let probs = softmax(logits);
    if !probs.iter().all(|v| v.is_finite()) {
        return Err(NeuralError::NonFinite("policy probabilities"));
    }
    Ok(probs)
}

/// State-value estimate.
pub fn value_forward(params: &ParameterVector, obs: &Observation) -> Result<f64, NeuralError> {
    let trace = value_trace(params, obs);
    let v = trace.last().expect("trace has an output layer")[0];
    if !v.is_finite() {
        return Err(NeuralError::NonFinite("value estimate"));
    }
    Ok(v)
}

/// Draws action 1 (push right) with probability `probs[1]`.
pub fn sample_action<R: Rng + ?Sized>(probs: [f64; 2], rng: &mut R) -> Action {
    let u: f64 = rng.gen();
    if u < probs[1] {
        Action::Right
    } else {
        Action::Left
    }
}

/// Weights of the value and entropy terms in the combined loss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossCoefficients {
    pub value: f64,
    pub entropy: f64,
}

impl Default for LossCoefficients {
    fn default() -> Self {
        Self {
            value: 0.5,
            entropy: 0.0,
        }
    }
}

/// One advantage-annotated training sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub obs: Observation,
    pub action: Action,
    pub advantage: f64,
    pub value_target: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossGradient {
    pub loss: f64,
    pub grad: GradientVector,
}

/// Gradient of
/// `-mean(log pi(a|s) * A) + c_v * mean((target - V(s))^2) - c_e * mean(H(pi(.|s)))`
/// with respect to all parameters. Advantages and targets are constants.
pub fn backward(
    params: &ParameterVector,
    batch: &[Sample],
    coefficients: LossCoefficients,
) -> Result<LossGradient, NeuralError> {
    if batch.is_empty() {
        return Err(NeuralError::EmptyBatch);
    }
    let shape = &params.shape;
    let act = shape.spec.activation;
    let inv_n = 1.0 / batch.len() as f64;
    let mut grad = vec![0.0; shape.param_count()];
    let mut loss = 0.0;

    for sample in batch {
        let trace = policy_logits(params, &sample.obs);
        let log_probs = log_softmax(trace.last().expect("output layer"));
        let probs = log_probs.map(f64::exp);
        let entropy = -(probs[0] * log_probs[0] + probs[1] * log_probs[1]);
        let a = sample.action.index();
        loss -= inv_n * (log_probs[a] * sample.advantage + coefficients.entropy * entropy);

        let delta: Vec<f64> = (0..POLICY_OUTPUTS)
            .map(|j| {
                let onehot = if j == a { 1.0 } else { 0.0 };
                inv_n
                    * (sample.advantage * (probs[j] - onehot)
                        + coefficients.entropy * probs[j] * (log_probs[j] + entropy))
            })
            .collect();
        backprop(&shape.policy, act, &params.values, &trace, delta, &mut grad);

        let trace = value_trace(params, &sample.obs);
        let err = sample.value_target - trace.last().expect("output layer")[0];
        loss += inv_n * coefficients.value * err * err;
        let delta = vec![-2.0 * coefficients.value * err * inv_n];
        backprop(&shape.value, act, &params.values, &trace, delta, &mut grad);
    }

    if !loss.is_finite() {
        return Err(NeuralError::NonFinite("loss"));
    }
    if !grad.iter().all(|g| g.is_finite()) {
        return Err(NeuralError::NonFinite("gradient"));
    }
    Ok(LossGradient {
        loss,
        grad: GradientVector {
            values: grad,
            shape: Arc::clone(shape),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn shape(hidden: usize) -> Arc<ShapeDescriptor> {
        ShapeDescriptor::shared(ShapeSpec::with_hidden(hidden)).unwrap()
    }

    #[test]
    fn default_shape_param_count() {
        let s = shape(64);
        // 4*64+64 + 64*2+2 = 450 ; 4*64+64 + 64+1 = 385
        assert_eq!(s.policy_len(), 450);
        assert_eq!(s.param_count(), 835);
    }

    #[test]
    fn init_zero_biases_bounded_weights_and_deterministic() {
        let s = shape(64);
        let a = init_params(Arc::clone(&s), &mut ChaCha8Rng::seed_from_u64(1));
        let b = init_params(Arc::clone(&s), &mut ChaCha8Rng::seed_from_u64(1));
        assert_eq!(a, b);
        for layer in s.policy.iter().chain(s.value.iter()) {
            assert!(a.values[layer.bias_offset()..layer.end()]
                .iter()
                .all(|&v| v == 0.0));
        }
        let first = &a.values[..4 * 64];
        let bound = (6.0f64 / 68.0).sqrt();
        assert!(first.iter().all(|w| w.abs() <= bound));
        assert!(first.iter().any(|&w| w != 0.0));
    }

    #[test]
    fn zero_network_outputs() {
        let p = ParameterVector::zeros(shape(8));
        let obs = [0.3, -1.0, 0.1, 2.0];
        assert_eq!(policy_forward(&p, &obs).unwrap(), [0.5, 0.5]);
        assert_eq!(value_forward(&p, &obs).unwrap(), 0.0);
    }

    #[test]
    fn softmax_shift_invariance() {
        let s = shape(8);
        let p = init_params(Arc::clone(&s), &mut ChaCha8Rng::seed_from_u64(4));
        let obs = [0.01, 0.2, -0.03, 0.4];
        let base = policy_forward(&p, &obs).unwrap();
        let mut shifted = p.values.clone();
        let out = s.policy.last().unwrap();
        for b in &mut shifted[out.bias_offset()..out.end()] {
            *b += 3.7;
        }
        let q = ParameterVector::from_values(s, shifted).unwrap();
        let probs = policy_forward(&q, &obs).unwrap();
        assert!((probs[0] - base[0]).abs() < 1e-12);
        assert!((probs[0] + probs[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn value_head_is_linear() {
        let s = shape(8);
        let mut p = init_params(Arc::clone(&s), &mut ChaCha8Rng::seed_from_u64(5));
        let obs = [0.02, -0.1, 0.05, 0.3];
        let v = value_forward(&p, &obs).unwrap();
        let out = *s.value.last().unwrap();
        for w in &mut p.values[out.offset..out.bias_offset()] {
            *w *= 2.0;
        }
        assert_eq!(value_forward(&p, &obs).unwrap(), 2.0 * v);
    }

    #[test]
    fn stationary_sample_has_zero_gradient() {
        let s = shape(8);
        let p = init_params(Arc::clone(&s), &mut ChaCha8Rng::seed_from_u64(6));
        let obs = [0.02, -0.1, 0.05, 0.3];
        let v = value_forward(&p, &obs).unwrap();
        let sample = Sample {
            obs,
            action: Action::Left,
            advantage: 0.0,
            value_target: v,
        };
        let out = backward(&p, &[sample], LossCoefficients::default()).unwrap();
        assert!(out.grad.as_slice().iter().all(|&g| g == 0.0));
    }

    #[test]
    fn doubling_advantage_doubles_policy_block_only() {
        let s = shape(8);
        let p = init_params(Arc::clone(&s), &mut ChaCha8Rng::seed_from_u64(7));
        let mk = |adv: f64| Sample {
            obs: [0.02, -0.1, 0.05, 0.3],
            action: Action::Right,
            advantage: adv,
            value_target: 0.7,
        };
        let coeffs = LossCoefficients::default();
        let g1 = backward(&p, &[mk(0.8), mk(-0.3)], coeffs).unwrap().grad;
        let g2 = backward(&p, &[mk(1.6), mk(-0.6)], coeffs).unwrap().grad;
        for (a, b) in g1.policy_block().iter().zip(g2.policy_block()) {
            assert_eq!(2.0 * a, *b);
        }
        assert_eq!(g1.value_block(), g2.value_block());
    }

    #[test]
    fn empty_batch_is_an_error() {
        let p = ParameterVector::zeros(shape(8));
        assert_eq!(
            backward(&p, &[], LossCoefficients::default()).unwrap_err(),
            NeuralError::EmptyBatch
        );
    }

    #[test]
    fn sgd_update_rules() {
        let s = shape(8);
        let p = init_params(Arc::clone(&s), &mut ChaCha8Rng::seed_from_u64(8));
        let zero = GradientVector::zeros(Arc::clone(&s));
        assert_eq!(apply_update(&p, &zero, 0.1).unwrap(), p);

        let g_vals: Vec<f64> = (0..s.param_count()).map(|i| (i as f64).sin()).collect();
        let g = GradientVector::from_values(Arc::clone(&s), g_vals).unwrap();
        let moved = apply_update(&ParameterVector::zeros(Arc::clone(&s)), &g, 1.0).unwrap();
        for (m, gv) in moved.as_slice().iter().zip(g.as_slice()) {
            assert_eq!(*m, -gv);
        }

        let back =
            apply_update(&apply_update(&p, &g, 0.01).unwrap(), &g.scaled(-1.0), 0.01).unwrap();
        for (a, b) in back.as_slice().iter().zip(p.as_slice()) {
            assert!((a - b).abs() <= 1e-15);
        }

        let twice = apply_update(&p, &g.scaled(2.0), 0.01).unwrap();
        let double_lr = apply_update(&p, &g, 0.02).unwrap();
        assert_eq!(twice, double_lr);
    }

    #[test]
    fn update_rejects_mismatch_and_bad_lr() {
        let p = ParameterVector::zeros(shape(8));
        let g = GradientVector::zeros(shape(4));
        assert_eq!(apply_update(&p, &g, 0.1), Err(NeuralError::ShapeMismatch));
        let g = GradientVector::zeros(shape(8));
        assert!(matches!(
            apply_update(&p, &g, 0.0),
            Err(NeuralError::InvalidLearningRate(_))
        ));
    }

    #[test]
    fn sampling_respects_degenerate_probabilities() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for _ in 0..1000 {
            assert_eq!(sample_action([1.0, 0.0], &mut rng), Action::Left);
            assert_eq!(sample_action([0.0, 1.0], &mut rng), Action::Right);
        }
    }

    #[test]
    fn fair_coin_frequency() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let ones = (0..10_000)
            .filter(|_| sample_action([0.5, 0.5], &mut rng) == Action::Right)
            .count();
        let freq = ones as f64 / 10_000.0;
        assert!((0.47..=0.53).contains(&freq), "{freq}");
    }

    #[test]
    fn length_and_finiteness_checked() {
        let s = shape(8);
        assert!(matches!(
            ParameterVector::from_values(Arc::clone(&s), vec![0.0; 3]),
            Err(NeuralError::LengthMismatch { .. })
        ));
        let mut v = vec![0.0; s.param_count()];
        v[0] = f64::NAN;
        assert!(matches!(
            GradientVector::from_values(s, v),
            Err(NeuralError::NonFinite(_))
        ));
    }
}
