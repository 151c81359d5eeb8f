//! Syndrome-based MLP decoder with a hand-written backward pass.
//!
//! The network sees `[|y|, s(y)]` and emits one logit `z_i` per bit meaning "the hard
//! decision on bit `i` is wrong". The bit probability is `P(c_i = 1) = σ(sign(y_i) · z_i)`,
//! so the output depends on the transmitted codeword only through the noise.

mod checkpoint;
mod train;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CHECKPOINT_MAGIC};
pub use train::{train, Optimizer, TrainConfig, TrainReport};

use crate::channel::stream_rng;
use crate::code::{hard_demodulate, LinearCode};
use crate::decoders::{Capabilities, DecodeResult, Decoder};
use crate::error::{input_err, Result};
use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use std::fmt;
use std::sync::Arc;

/// Probabilities are clamped to `[BCE_CLAMP, 1 − BCE_CLAMP]` inside the loss.
pub const BCE_CLAMP: f64 = 1e-7;

/// Network input `φ(y) = [|y|, s(y)]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PreprocessedInput {
    pub magnitude: Vec<f64>,
    pub syndrome_bits: Vec<u8>,
    pub concatenated: Vec<f64>,
}

pub fn preprocess(code: &LinearCode, y: &[f64]) -> Result<PreprocessedInput> {
    if y.len() != code.n() {
        return input_err(format!("expected {} channel values, got {}", code.n(), y.len()));
    }
    let magnitude: Vec<f64> = y.iter().map(|v| v.abs()).collect();
    let syndrome_bits = code.syndrome(&hard_demodulate(y))?;
    let mut concatenated = magnitude.clone();
    concatenated.extend(syndrome_bits.iter().map(|&b| f64::from(b)));
    Ok(PreprocessedInput {
        magnitude,
        syndrome_bits,
        concatenated,
    })
}

/// Mean binary cross-entropy with probabilities clamped to `[1e-7, 1 − 1e-7]`.
pub fn bce_loss(probabilities: &[f64], target: &[u8]) -> f64 {
    assert_eq!(probabilities.len(), target.len(), "length mismatch");
    let total: f64 = probabilities
        .iter()
        .zip(target)
        .map(|(&p, &t)| {
            let p = p.clamp(BCE_CLAMP, 1.0 - BCE_CLAMP);
            if t != 0 {
                -p.ln()
            } else {
                -(1.0 - p).ln()
            }
        })
        .sum();
    total / probabilities.len() as f64
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Hidden-layer nonlinearity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Activation {
    #[default]
    Softplus,
    Tanh,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Self::Softplus => x.max(0.0) + (-x.abs()).exp().ln_1p(),
            Self::Tanh => x.tanh(),
        }
    }

    fn derivative(self, x: f64) -> f64 {
        match self {
            Self::Softplus => sigmoid(x),
            Self::Tanh => 1.0 - x.tanh().powi(2),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Softplus => "softplus",
            Self::Tanh => "tanh",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "softplus" => Some(Self::Softplus),
            "tanh" => Some(Self::Tanh),
            _ => None,
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Dense layer `x ↦ W x + b` with `W` stored as `(out, in)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Layer {
    fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            weights: Array2::zeros((outputs, inputs)),
            bias: Array1::zeros(outputs),
        }
    }

    pub fn inputs(&self) -> usize {
        self.weights.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.weights.nrows()
    }
}

/// Intermediate values of a batched forward pass.
struct Trace {
    /// Inputs of every layer; `inputs[0]` is `φ(y)`.
    inputs: Vec<Array2<f64>>,
    /// Pre-activations of the hidden layers.
    pre: Vec<Array2<f64>>,
    /// `±1` per bit, from the hard decision on `y`.
    signs: Array2<f64>,
    /// Effective logits `sign(y) · z`; `σ` of this is `P(c = 1)`.
    logits: Array2<f64>,
}

/// Gradients with the same shapes as the model's layers.
#[derive(Debug, Clone)]
pub struct ParamGradients {
    pub layers: Vec<Layer>,
}

/// Syndrome-MLP decoder `[n+(n−k), h, h, n]`.
#[derive(Debug, Clone)]
pub struct MlpDecoder {
    code: Arc<LinearCode>,
    layers: Vec<Layer>,
    activation: Activation,
    seed: u64,
}

impl MlpDecoder {
    /// Glorot-uniform hidden layers and a zero output layer, drawn from `seed`.
    pub fn new(code: Arc<LinearCode>, hidden: &[usize], activation: Activation, seed: u64) -> Result<Self> {
        if hidden.is_empty() || hidden.contains(&0) {
            return input_err("hidden widths must be non-empty and positive");
        }
        let mut widths = vec![code.n() + code.redundancy()];
        widths.extend_from_slice(hidden);
        widths.push(code.n());
        let mut rng = stream_rng(seed, 0);
        let last = widths.len() - 2;
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let mut layer = Layer::zeros(w[0], w[1]);
                if i < last {
                    let a = (6.0 / (w[0] + w[1]) as f64).sqrt();
                    layer.weights.mapv_inplace(|_| rng.random_range(-a..a));
                }
                layer
            })
            .collect();
        Ok(Self {
            code,
            layers,
            activation,
            seed,
        })
    }

    /// Rebuilds a model from explicit parameters, checking shapes against `code`.
    pub fn from_layers(code: Arc<LinearCode>, layers: Vec<Layer>, activation: Activation, seed: u64) -> Result<Self> {
        let model = Self {
            code,
            layers,
            activation,
            seed,
        };
        let w = model.widths();
        if w.first() != Some(&(model.code.n() + model.code.redundancy())) || w.last() != Some(&model.code.n()) {
            return input_err(format!("layer widths {w:?} do not fit code {}", model.code.id()));
        }
        for pair in model.layers.windows(2) {
            if pair[0].outputs() != pair[1].inputs() {
                return input_err("consecutive layer shapes do not chain");
            }
        }
        if model.layers.iter().any(|l| l.bias.len() != l.outputs()) {
            return input_err("bias length differs from layer width");
        }
        Ok(model)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn code_arc(&self) -> &Arc<LinearCode> {
        &self.code
    }

    /// `[n + (n − k), h, …, n]`.
    pub fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.layers[0].inputs()];
        w.extend(self.layers.iter().map(Layer::outputs));
        w
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    fn features(&self, ys: ArrayView2<'_, f64>) -> (Array2<f64>, Array2<f64>) {
        let n = self.code.n();
        let d = n + self.code.redundancy();
        let b = ys.nrows();
        let mut x = Array2::zeros((b, d));
        let mut signs = Array2::zeros((b, n));
        for (r, y) in ys.rows().into_iter().enumerate() {
            let y = y.to_vec();
            let hard = hard_demodulate(&y);
            let syn = self.code.syndrome(&hard).expect("row has length n");
            for i in 0..n {
                x[[r, i]] = y[i].abs();
                signs[[r, i]] = if hard[i] == 0 { 1.0 } else { -1.0 };
            }
            for (j, &s) in syn.iter().enumerate() {
                x[[r, n + j]] = f64::from(s);
            }
        }
        (x, signs)
    }

    fn trace(&self, ys: ArrayView2<'_, f64>) -> Trace {
        assert_eq!(ys.ncols(), self.code.n(), "input width must be n");
        let (x, signs) = self.features(ys);
        let mut inputs = vec![x];
        let mut pre = Vec::with_capacity(self.layers.len() - 1);
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let mut h = inputs[i].dot(&layer.weights.t());
            h += &layer.bias;
            if i < last {
                let a = h.mapv(|v| self.activation.apply(v));
                pre.push(h);
                inputs.push(a);
            } else {
                let logits = h * &signs;
                return Trace {
                    inputs,
                    pre,
                    signs,
                    logits,
                };
            }
        }
        unreachable!("model has at least one layer")
    }

    /// Back-propagates `d_logits` (gradient w.r.t. the effective logits).
    /// Returns parameter gradients when `params` is set, and the gradient w.r.t. `y`.
    fn backward(&self, tr: &Trace, d_logits: &Array2<f64>, params: bool) -> (Option<ParamGradients>, Array2<f64>) {
        let n = self.code.n();
        let mut delta = d_logits * &tr.signs;
        let mut grads: Vec<Layer> = Vec::new();
        for i in (0..self.layers.len()).rev() {
            if params {
                grads.push(Layer {
                    weights: delta.t().dot(&tr.inputs[i]),
                    bias: delta.sum_axis(Axis(0)),
                });
            }
            let mut d_in = delta.dot(&self.layers[i].weights);
            if i > 0 {
                let act = self.activation;
                d_in.zip_mut_with(&tr.pre[i - 1], |g, &h| *g *= act.derivative(h));
            }
            delta = d_in;
        }
        grads.reverse();
        // d|y|/dy = sign(y); the syndrome block carries no gradient
        let mut dy = delta.slice(ndarray::s![.., ..n]).to_owned();
        dy *= &tr.signs;
        (params.then_some(ParamGradients { layers: grads }), dy)
    }

    /// Per-bit `P(c_i = 1)` for each row of `ys`.
    pub fn forward_batch(&self, ys: ArrayView2<'_, f64>) -> Array2<f64> {
        self.trace(ys).logits.mapv(sigmoid)
    }

    pub fn forward(&self, y: &[f64]) -> Vec<f64> {
        let ys = ArrayView2::from_shape((1, y.len()), y).expect("contiguous row");
        self.forward_batch(ys).into_raw_vec_and_offset().0
    }

    /// Effective logits `sign(y)·z`, i.e. `ln P(c=1)/P(c=0)`.
    pub fn logits_batch(&self, ys: ArrayView2<'_, f64>) -> Array2<f64> {
        self.trace(ys).logits
    }

    /// Clamped BCE per row and its gradient w.r.t. each row of `ys`.
    pub fn loss_and_input_gradient_batch(&self, ys: ArrayView2<'_, f64>, target: &[u8]) -> (Vec<f64>, Array2<f64>) {
        let tr = self.trace(ys);
        let n = self.code.n();
        assert_eq!(target.len(), n, "target must have length n");
        let p = tr.logits.mapv(sigmoid);
        let mut d = Array2::zeros(p.raw_dim());
        let mut losses = Vec::with_capacity(p.nrows());
        for (r, row) in p.rows().into_iter().enumerate() {
            let row = row.to_vec();
            losses.push(bce_loss(&row, target));
            for i in 0..n {
                let pi = row[i];
                if pi > BCE_CLAMP && pi < 1.0 - BCE_CLAMP {
                    d[[r, i]] = (pi - f64::from(target[i])) / n as f64;
                }
            }
        }
        let (_, dy) = self.backward(&tr, &d, false);
        (losses, dy)
    }

    pub fn input_gradient(&self, y: &[f64], target: &[u8]) -> Vec<f64> {
        let ys = ArrayView2::from_shape((1, y.len()), y).expect("contiguous row");
        self.loss_and_input_gradient_batch(ys, target)
            .1
            .into_raw_vec_and_offset()
            .0
    }

    /// Unclamped logistic loss over a batch and the parameter gradient of its mean.
    pub(crate) fn training_step_gradients(
        &self,
        ys: ArrayView2<'_, f64>,
        targets: &Array2<f64>,
    ) -> (f64, ParamGradients) {
        let tr = self.trace(ys);
        let scale = 1.0 / (tr.logits.len() as f64);
        let mut loss = 0.0;
        let mut d = Array2::zeros(tr.logits.raw_dim());
        ndarray::Zip::from(&mut d)
            .and(&tr.logits)
            .and(targets)
            .for_each(|g, &a, &t| {
                // softplus(a) − t·a
                loss += a.max(0.0) + (-a.abs()).exp().ln_1p() - t * a;
                *g = (sigmoid(a) - t) * scale;
            });
        let (grads, _) = self.backward(&tr, &d, true);
        (loss * scale, grads.expect("parameter gradients requested"))
    }
}

impl Decoder for MlpDecoder {
    fn name(&self) -> &str {
        "mlp"
    }

    fn code(&self) -> &LinearCode {
        &self.code
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities::DIFFERENTIABLE
    }

    fn decode(&self, y: &[f64], _sigma2: f64) -> DecodeResult {
        let ys = ArrayView2::from_shape((1, y.len()), y).expect("contiguous row");
        let logits = self.logits_batch(ys);
        let soft: Vec<f64> = logits.iter().map(|&a| -a).collect();
        let bits = crate::decoders::hard_decision(&soft);
        let converged = self.code.is_codeword(&bits);
        DecodeResult {
            bits,
            soft,
            iterations: 1,
            converged,
        }
    }

    fn losses(&self, inputs: ArrayView2<'_, f64>, target: &[u8], _sigma2: f64) -> Vec<f64> {
        self.forward_batch(inputs)
            .rows()
            .into_iter()
            .map(|p| bce_loss(&p.to_vec(), target))
            .collect()
    }

    fn losses_and_gradients(
        &self,
        inputs: ArrayView2<'_, f64>,
        target: &[u8],
        _sigma2: f64,
    ) -> Result<(Vec<f64>, Array2<f64>)> {
        Ok(self.loss_and_input_gradient_batch(inputs, target))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{modulate, stream_rng};
    use crate::code::resolve_code;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn model(id: &str, hidden: &[usize], seed: u64) -> MlpDecoder {
        let code = Arc::new(resolve_code(id).unwrap());
        let mut m = MlpDecoder::new(code, hidden, Activation::Softplus, seed).unwrap();
        // give the output layer weight so gradients are non-trivial
        let mut rng = stream_rng(seed, 99);
        let last = m.layers.len() - 1;
        m.layers[last].weights.mapv_inplace(|_| rng.random_range(-0.5..0.5));
        m.layers[last].bias.mapv_inplace(|_| rng.random_range(-0.5..0.5));
        m
    }

    #[test]
    fn preprocess_shapes_and_syndrome() {
        let code = resolve_code("ldpc_49_24").unwrap();
        let c = code.encode(&[1; 24]).unwrap();
        let y = modulate(&c);
        let p = preprocess(&code, &y).unwrap();
        assert_eq!(p.concatenated.len(), 74);
        assert!(p.syndrome_bits.iter().all(|&b| b == 0));
        assert!(p.magnitude.iter().all(|&m| m >= 0.0));
        assert!(preprocess(&code, &y[..10]).is_err());
    }

    #[test]
    fn sign_flips_keep_magnitude_and_flip_syndrome_by_columns() {
        let code = resolve_code("hamming_15_11").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let y: Vec<f64> = (0..15).map(|_| rng.random_range(-2.0..2.0)).collect();
            let flip: Vec<bool> = (0..15).map(|_| rng.random_bool(0.3)).collect();
            let y2: Vec<f64> = y.iter().zip(&flip).map(|(&v, &f)| if f { -v } else { v }).collect();
            let (a, b) = (preprocess(&code, &y).unwrap(), preprocess(&code, &y2).unwrap());
            assert_eq!(a.magnitude, b.magnitude);
            let mut want = a.syndrome_bits.clone();
            for j in (0..15).filter(|&j| flip[j]) {
                for (r, w) in want.iter_mut().enumerate() {
                    *w ^= u8::from(code.parity_check().get(r, j));
                }
            }
            assert_eq!(b.syndrome_bits, want);
        }
    }

    #[test]
    fn bce_examples() {
        assert!((bce_loss(&[0.5; 6], &[0, 1, 0, 1, 1, 0]) - 2f64.ln()).abs() < 1e-12);
        let at_clamp = bce_loss(&[0.0, 1.0], &[0, 1]);
        assert!(at_clamp > 0.0 && at_clamp <= 1.6e-7);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let p: Vec<f64> = (0..40).map(|_| rng.random_range(0.001..0.999)).collect();
        let t: Vec<u8> = (0..40).map(|_| rng.random_range(0..2u8)).collect();
        let mut want = 0.0;
        for i in 0..40 {
            want += if t[i] == 1 { -(p[i].ln()) } else { -((1.0 - p[i]).ln()) };
        }
        assert!((bce_loss(&p, &t) - want / 40.0).abs() < 1e-12);
    }

    #[test]
    fn zero_output_layer_gives_one_half_and_zero_gradient() {
        let code = Arc::new(resolve_code("hamming_7_4").unwrap());
        let m = MlpDecoder::new(code, &[16, 16], Activation::Softplus, 1).unwrap();
        let y = [0.3, -1.2, 0.8, 1.1, -0.4, 0.9, 1.3];
        assert!(m.forward(&y).iter().all(|&p| p == 0.5));
        assert_eq!(m.forward(&y), m.forward(&y));
        assert!(m.input_gradient(&y, &[0; 7]).iter().all(|&g| g == 0.0));
    }

    fn central_difference(m: &MlpDecoder, y: &[f64], t: &[u8], h: f64) -> Vec<f64> {
        (0..y.len())
            .map(|i| {
                let (mut a, mut b) = (y.to_vec(), y.to_vec());
                a[i] += h;
                b[i] -= h;
                (bce_loss(&m.forward(&a), t) - bce_loss(&m.forward(&b), t)) / (2.0 * h)
            })
            .collect()
    }

    fn rel_err(a: &[f64], b: &[f64]) -> f64 {
        let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        let den: f64 = a
            .iter()
            .map(|x| x * x)
            .sum::<f64>()
            .sqrt()
            .max(b.iter().map(|x| x * x).sum::<f64>().sqrt());
        num / den.max(1e-300)
    }

    #[test]
    fn toy_gradient_matches_finite_differences() {
        let m = model("repetition_3_1", &[5, 5], 7);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..20 {
            let y: Vec<f64> = (0..3)
                .map(|_| rng.random_range(0.2..2.0) * if rng.random_bool(0.5) { 1.0 } else { -1.0 })
                .collect();
            let t: Vec<u8> = (0..3).map(|_| rng.random_range(0..2u8)).collect();
            let g = m.input_gradient(&y, &t);
            let fd = central_difference(&m, &y, &t, 1e-5);
            assert!(rel_err(&g, &fd) < 1e-4, "{g:?} vs {fd:?}");
        }
    }

    #[test]
    fn gradient_check_on_sign_stable_points() {
        let m = model("ldpc_49_24", &[32, 32], 11);
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let mut worst: f64 = 0.0;
        for _ in 0..100 {
            let y: Vec<f64> = (0..49)
                .map(|_| rng.random_range(0.05..2.5) * if rng.random_bool(0.5) { 1.0 } else { -1.0 })
                .collect();
            let t: Vec<u8> = (0..49).map(|_| rng.random_range(0..2u8)).collect();
            let g = m.input_gradient(&y, &t);
            assert!(g.iter().all(|v| v.is_finite()));
            worst = worst.max(rel_err(&g, &central_difference(&m, &y, &t, 1e-5)));
        }
        assert!(worst < 1e-3, "worst relative error {worst}");
    }

    #[test]
    fn batched_gradients_match_single_rows() {
        let m = model("hamming_15_11", &[12, 12], 2);
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let ys = Array2::from_shape_fn((6, 15), |_| rng.random_range(-2.0..2.0));
        let t = vec![0u8; 15];
        let (losses, grads) = m.loss_and_input_gradient_batch(ys.view(), &t);
        for r in 0..6 {
            let y = ys.row(r).to_vec();
            assert!((losses[r] - bce_loss(&m.forward(&y), &t)).abs() < 1e-12);
            let g = m.input_gradient(&y, &t);
            for i in 0..15 {
                assert!((grads[[r, i]] - g[i]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn extreme_inputs_stay_finite() {
        let m = model("hamming_7_4", &[8, 8], 3);
        for y in [[1e6; 7], [-1e6; 7], [0.0; 7]] {
            let p = m.forward(&y);
            assert!(p.iter().all(|v| v.is_finite() && (0.0..=1.0).contains(v)));
            assert!(m.input_gradient(&y, &[1; 7]).iter().all(|g| g.is_finite()));
        }
    }

    #[test]
    fn output_does_not_depend_on_the_codeword_in_noise_coordinates() {
        // P(bit wrong) is a function of the noise only.
        let m = model("hamming_7_4", &[8, 8], 5);
        let code = resolve_code("hamming_7_4").unwrap();
        let noise = [0.3, -0.7, 0.2, -1.4, 0.5, 0.1, -0.2];
        let c0 = vec![0u8; 7];
        let c1 = code.encode(&[1, 0, 1, 1]).unwrap();
        let frame = |c: &[u8]| -> Vec<f64> { modulate(c).iter().zip(&noise).map(|(x, z)| x * (1.0 + z)).collect() };
        let wrong = |c: &[u8]| -> Vec<f64> {
            m.forward(&frame(c))
                .iter()
                .zip(c)
                .map(|(&p, &b)| if b == 1 { 1.0 - p } else { p })
                .collect()
        };
        let (a, b) = (wrong(&c0), wrong(&c1));
        for i in 0..7 {
            assert!((a[i] - b[i]).abs() < 1e-12);
        }
    }
}
