use super::{MlpDecoder, ParamGradients};
use crate::channel::{derive_seed, stream_rng, transmit, MessageMode, SnrContext};
use crate::error::{input_err, Error, Result};
use ndarray::Array2;
use rand::Rng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Optimizer {
    /// Fixed-step stochastic gradient descent.
    Sgd,
    /// Adam with the usual `(0.9, 0.999, 1e-8)` constants.
    Adam,
}

impl Optimizer {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Sgd => "sgd",
            Self::Adam => "adam",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [Self::Sgd, Self::Adam].into_iter().find(|o| o.as_str() == s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    /// Per-batch Eb/N0 is drawn uniformly from this range.
    pub snr_range_db: (f64, f64),
    pub batch_size: usize,
    pub steps: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub optimizer: Optimizer,
    pub message_mode: MessageMode,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            snr_range_db: (2.0, 8.0),
            batch_size: 64,
            steps: 5000,
            learning_rate: 1e-2,
            seed: 0,
            optimizer: Optimizer::Sgd,
            message_mode: MessageMode::Uniform,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.snr_range_db;
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return input_err(format!("empty SNR range [{lo}, {hi}]"));
        }
        if self.batch_size == 0 || self.steps == 0 {
            return input_err("batch size and step count must be positive");
        }
        if !(self.learning_rate > 0.0) {
            return input_err("learning rate must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    /// Mean batch loss at every step.
    pub losses: Vec<f64>,
}

impl TrainReport {
    /// Mean of the first and last `fraction` of the loss curve.
    pub fn window_means(&self, fraction: f64) -> (f64, f64) {
        let w = ((self.losses.len() as f64 * fraction).ceil() as usize).clamp(1, self.losses.len());
        let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
        (mean(&self.losses[..w]), mean(&self.losses[self.losses.len() - w..]))
    }
}

struct AdamState {
    m: ParamGradients,
    v: ParamGradients,
    t: i32,
}

fn zeros_like(model: &MlpDecoder) -> ParamGradients {
    ParamGradients {
        layers: model
            .layers()
            .iter()
            .map(|l| super::Layer {
                weights: Array2::zeros(l.weights.raw_dim()),
                bias: ndarray::Array1::zeros(l.bias.len()),
            })
            .collect(),
    }
}

/// Trains `model` in place on fresh random frames. Deterministic given `config.seed`.
pub fn train(model: &mut MlpDecoder, config: &TrainConfig) -> Result<TrainReport> {
    config.validate()?;
    let code = model.code_arc().clone();
    let n = code.n();
    let b = config.batch_size;
    let frame_seed = derive_seed(config.seed, 1);
    let mut snr_rng = stream_rng(derive_seed(config.seed, 2), 0);
    let mut adam = AdamState {
        m: zeros_like(model),
        v: zeros_like(model),
        t: 0,
    };
    let mut losses = Vec::with_capacity(config.steps);
    let mut ys = Array2::zeros((b, n));
    let mut targets = Array2::zeros((b, n));
    for step in 0..config.steps {
        let (lo, hi) = config.snr_range_db;
        let ebno = if hi > lo { snr_rng.random_range(lo..hi) } else { lo };
        let snr = SnrContext::for_code(&code, ebno)?;
        for r in 0..b {
            let f = transmit(&code, &snr, frame_seed, (step * b + r) as u64, config.message_mode);
            for i in 0..n {
                ys[[r, i]] = f.received[i];
                targets[[r, i]] = f64::from(f.codeword[i]);
            }
        }
        let (loss, grads) = model.training_step_gradients(ys.view(), &targets);
        if !loss.is_finite() {
            return Err(Error::Training {
                step,
                message: format!("loss became {loss}"),
            });
        }
        losses.push(loss);
        apply_update(model, grads, config, &mut adam);
        let finite = model
            .layers()
            .iter()
            .all(|l| l.weights.iter().chain(l.bias.iter()).all(|v| v.is_finite()));
        if !finite {
            return Err(Error::Training {
                step,
                message: "parameters became non-finite".into(),
            });
        }
    }
    Ok(TrainReport { losses })
}

fn apply_update(model: &mut MlpDecoder, grads: ParamGradients, config: &TrainConfig, adam: &mut AdamState) {
    let lr = config.learning_rate;
    match config.optimizer {
        Optimizer::Sgd => {
            for (layer, g) in model.layers_mut().iter_mut().zip(&grads.layers) {
                layer.weights.scaled_add(-lr, &g.weights);
                layer.bias.scaled_add(-lr, &g.bias);
            }
        }
        Optimizer::Adam => {
            const B1: f64 = 0.9;
            const B2: f64 = 0.999;
            const EPS: f64 = 1e-8;
            adam.t += 1;
            let c1 = 1.0 - B1.powi(adam.t);
            let c2 = 1.0 - B2.powi(adam.t);
            let layers = model.layers_mut();
            for (i, g) in grads.layers.iter().enumerate() {
                let (m, v) = (&mut adam.m.layers[i], &mut adam.v.layers[i]);
                let step = |p: &mut f64, m: &mut f64, v: &mut f64, g: f64| {
                    *m = B1 * *m + (1.0 - B1) * g;
                    *v = B2 * *v + (1.0 - B2) * g * g;
                    *p -= lr * (*m / c1) / ((*v / c2).sqrt() + EPS);
                };
                ndarray::Zip::from(&mut layers[i].weights)
                    .and(&mut m.weights)
                    .and(&mut v.weights)
                    .and(&g.weights)
                    .for_each(|p, m, v, &g| step(p, m, v, g));
                ndarray::Zip::from(&mut layers[i].bias)
                    .and(&mut m.bias)
                    .and(&mut v.bias)
                    .and(&g.bias)
                    .for_each(|p, m, v, &g| step(p, m, v, g));
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::code::resolve_code;
    use crate::neural::Activation;
    use std::sync::Arc;

    fn small(seed: u64) -> MlpDecoder {
        let code = Arc::new(resolve_code("hamming_7_4").unwrap());
        MlpDecoder::new(code, &[16, 16], Activation::Softplus, seed).unwrap()
    }

    #[test]
    fn same_seed_gives_identical_parameters() {
        let cfg = TrainConfig {
            steps: 50,
            batch_size: 16,
            seed: 4,
            ..TrainConfig::default()
        };
        let (mut a, mut b) = (small(1), small(1));
        let ra = train(&mut a, &cfg).unwrap();
        let rb = train(&mut b, &cfg).unwrap();
        assert_eq!(ra, rb);
        assert_eq!(a.layers(), b.layers());
    }

    #[test]
    fn loss_decreases() {
        let cfg = TrainConfig {
            steps: 400,
            batch_size: 32,
            seed: 5,
            ..TrainConfig::default()
        };
        let mut m = small(2);
        let report = train(&mut m, &cfg).unwrap();
        let (first, last) = report.window_means(0.1);
        assert!(last < first, "{first} -> {last}");
    }

    #[test]
    fn divergence_reports_the_step() {
        let cfg = TrainConfig {
            steps: 200,
            batch_size: 8,
            learning_rate: 1e300,
            ..TrainConfig::default()
        };
        let mut m = small(3);
        match train(&mut m, &cfg) {
            Err(Error::Training { step, .. }) => assert!(step < 200),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn rejects_empty_snr_range() {
        let cfg = TrainConfig {
            snr_range_db: (8.0, 2.0),
            ..TrainConfig::default()
        };
        assert!(train(&mut small(0), &cfg).is_err());
    }
}
