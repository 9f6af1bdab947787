//! Desk-scale segmentation network: forward pass, soft Dice loss, analytic
//! gradients and checkpoints.

mod checkpoint;
mod conv;
mod loss;
mod network;
mod tensor;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{LabelMap, Volume};
use crate::error::{Error, Result};
use crate::seeds;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use loss::DICE_SMOOTHING;
pub use tensor::{Real, Tensor};

use network::Layout;

/// Label value predicted for each output class index.
pub const CLASS_LABELS: [u8; 4] = [0, 1, 2, 4];
pub const N_CLASSES: usize = 4;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSpec {
    pub in_channels: usize,
    pub n_classes: usize,
    pub base_width: usize,
    pub n_levels: usize,
    pub dense_block_dilations: Vec<usize>,
    pub seed: u64,
}

impl Default for ModelSpec {
    fn default() -> Self {
        ModelSpec {
            in_channels: 4,
            n_classes: N_CLASSES,
            base_width: 8,
            n_levels: 2,
            dense_block_dilations: vec![1, 2, 4],
            seed: 0,
        }
    }
}

impl ModelSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !matches!(self.in_channels, 4 | 5) {
            return bad(format!("in_channels must be 4 or 5, got {}", self.in_channels));
        }
        if self.n_classes != N_CLASSES {
            return bad(format!("n_classes must be {N_CLASSES}, got {}", self.n_classes));
        }
        if self.base_width == 0 || self.n_levels == 0 || self.n_levels > 6 {
            return bad(format!(
                "base_width must be >= 1 and n_levels in 1..=6, got {} and {}",
                self.base_width, self.n_levels
            ));
        }
        if self.dense_block_dilations.is_empty() || self.dense_block_dilations.contains(&0) {
            return bad(format!(
                "dense_block_dilations must be nonempty and positive, got {:?}",
                self.dense_block_dilations
            ));
        }
        Ok(())
    }

    /// Same spec with a different input channel count.
    pub fn with_in_channels(&self, in_channels: usize) -> ModelSpec {
        ModelSpec { in_channels, ..self.clone() }
    }

    /// Spatial dimensions must be divisible by this.
    pub fn size_multiple(&self) -> usize {
        1 << (self.n_levels - 1)
    }

    /// Names and shapes of all parameters, in storage order.
    pub fn parameter_shapes(&self) -> Vec<(String, Vec<usize>)> {
        Layout::new(self).params
    }
}

/// Network parameters for a [`ModelSpec`].
#[derive(Debug, Clone, PartialEq)]
pub struct ModelState<T = f32> {
    spec: ModelSpec,
    params: Vec<Tensor<T>>,
}

/// Per-pixel class probabilities and the derived hard labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub n_classes: usize,
    pub height: usize,
    pub width: usize,
    /// Class-major `n_classes x height x width`.
    pub class_probabilities: Vec<f64>,
    /// Argmax class mapped through [`CLASS_LABELS`].
    pub hard_labels: Vec<u8>,
}

impl Prediction {
    fn from_logits<T: Real>(logits: &[T], n_classes: usize, height: usize, width: usize) -> Prediction {
        let px = height * width;
        let mut probs = vec![0.0; logits.len()];
        let mut hard = vec![0u8; px];
        for i in 0..px {
            let z = |c: usize| logits[c * px + i].to_f64_lossless();
            let max = (0..n_classes).map(z).fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for c in 0..n_classes {
                let e = (z(c) - max).exp();
                probs[c * px + i] = e;
                sum += e;
            }
            let mut best = 0;
            for c in 0..n_classes {
                probs[c * px + i] /= sum;
                if probs[c * px + i] > probs[best * px + i] {
                    best = c;
                }
            }
            hard[i] = CLASS_LABELS[best];
        }
        Prediction { n_classes, height, width, class_probabilities: probs, hard_labels: hard }
    }

    pub fn probability(&self, class: usize, row: usize, col: usize) -> f64 {
        self.class_probabilities[(class * self.height + row) * self.width + col]
    }
}

/// Parameter gradients plus the loss they belong to.
#[derive(Debug, Clone)]
pub struct Gradients<T = f32> {
    pub loss: f64,
    pub tensors: Vec<Tensor<T>>,
}

/// Initialises parameters for `spec` in `f32`.
pub fn init_model(spec: &ModelSpec) -> Result<ModelState<f32>> {
    ModelState::init(spec)
}

impl<T: Real> ModelState<T> {
    /// Fan-in scaled uniform weights, zero biases. Each tensor draws from its
    /// own stream keyed by `(spec.seed, name)`, so specs that differ only in
    /// `in_channels` share every tensor except `stem.weight`.
    pub fn init(spec: &ModelSpec) -> Result<Self> {
        spec.validate()?;
        let params = Layout::new(spec)
            .params
            .into_iter()
            .map(|(name, shape)| {
                let mut t = Tensor::zeros(name, shape);
                if t.name.ends_with(".weight") {
                    let fan_in: usize = t.shape[1..].iter().product();
                    let bound = (6.0 / fan_in as f64).sqrt();
                    let mut rng = seeds::rng(spec.seed, &[seeds::INIT, &t.name]);
                    for v in &mut t.data {
                        *v = T::from_f64(rng.random_range(-bound..bound)).unwrap();
                    }
                }
                t
            })
            .collect();
        Ok(ModelState { spec: spec.clone(), params })
    }

    /// Builds a state from explicit tensors, checking names and shapes.
    pub fn from_parameters(spec: &ModelSpec, params: Vec<Tensor<T>>) -> Result<Self> {
        spec.validate()?;
        let expected = spec.parameter_shapes();
        if expected.len() != params.len() {
            return Err(Error::shape(
                format!("{} parameter tensors", expected.len()),
                format!("{} tensors", params.len()),
            ));
        }
        for ((name, shape), t) in expected.iter().zip(&params) {
            if name != &t.name || shape != &t.shape || t.data.len() != shape.iter().product::<usize>() {
                return Err(Error::shape(
                    format!("{name} {shape:?}"),
                    format!("{} {:?} ({} values)", t.name, t.shape, t.data.len()),
                ));
            }
        }
        Ok(ModelState { spec: spec.clone(), params })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn parameters(&self) -> &[Tensor<T>] {
        &self.params
    }

    pub fn parameters_mut(&mut self) -> &mut [Tensor<T>] {
        &mut self.params
    }

    pub fn parameter_count(&self) -> usize {
        self.params.iter().map(|t| t.data.len()).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.params.iter().all(|t| t.data.iter().all(|v| v.is_finite()))
    }

    pub fn cast<U: Real>(&self) -> ModelState<U> {
        ModelState { spec: self.spec.clone(), params: self.params.iter().map(Tensor::cast).collect() }
    }

    fn check_input(&self, volume: &Volume) -> Result<()> {
        if volume.channels() != self.spec.in_channels {
            return Err(Error::shape(
                format!("{} input channels", self.spec.in_channels),
                format!("{} channels", volume.channels()),
            ));
        }
        let m = self.spec.size_multiple();
        if !volume.height().is_multiple_of(m) || !volume.width().is_multiple_of(m) {
            return Err(Error::shape(
                format!("spatial dims divisible by {m}"),
                format!("{}x{}", volume.height(), volume.width()),
            ));
        }
        Ok(())
    }

    fn trace(&self, volume: &Volume) -> Result<network::Trace<T>> {
        self.check_input(volume)?;
        let input = volume.data().iter().map(|&x| T::from_single(x)).collect();
        Ok(network::forward(&Layout::new(&self.spec), &self.params, input, volume.height(), volume.width()))
    }

    pub fn forward(&self, volume: &Volume) -> Result<Prediction> {
        let trace = self.trace(volume)?;
        Ok(Prediction::from_logits(&trace.logits, self.spec.n_classes, volume.height(), volume.width()))
    }

    /// Loss and its gradient w.r.t. every parameter.
    pub fn backward(&self, volume: &Volume, labels: &LabelMap) -> Result<Gradients<T>> {
        check_label_dims(volume.height(), volume.width(), labels)?;
        let trace = self.trace(volume)?;
        let (h, w) = (volume.height(), volume.width());
        let pred = Prediction::from_logits(&trace.logits, self.spec.n_classes, h, w);
        let (loss, grad_probs) = loss::soft_dice_with_grad(&pred.class_probabilities, labels);
        // softmax Jacobian: dz_k = p_k (g_k - sum_j p_j g_j)
        let px = h * w;
        let nc = self.spec.n_classes;
        let mut grad_logits = vec![T::zero(); trace.logits.len()];
        for i in 0..px {
            let p = |c: usize| pred.class_probabilities[c * px + i];
            let g = |c: usize| grad_probs[c * px + i];
            let dot: f64 = (0..nc).map(|c| p(c) * g(c)).sum();
            for c in 0..nc {
                grad_logits[c * px + i] = T::from_f64(p(c) * (g(c) - dot)).unwrap();
            }
        }
        let tensors = network::backward(&Layout::new(&self.spec), &self.params, &trace, &grad_logits, h, w);
        Ok(Gradients { loss, tensors })
    }

    /// Loss of the model on one labelled input.
    pub fn loss_on(&self, volume: &Volume, labels: &LabelMap) -> Result<f64> {
        loss(&self.forward(volume)?, labels)
    }
}

fn check_label_dims(h: usize, w: usize, labels: &LabelMap) -> Result<()> {
    if labels.height() != h || labels.width() != w {
        return Err(Error::shape(format!("labels {h}x{w}"), format!("labels {}x{}", labels.height(), labels.width())));
    }
    Ok(())
}

/// Prediction for `volume` under `state`.
pub fn forward<T: Real>(state: &ModelState<T>, volume: &Volume) -> Result<Prediction> {
    state.forward(volume)
}

/// Mean over the foreground classes of `1 - soft Dice`, with smoothing
/// [`DICE_SMOOTHING`] in numerator and denominator.
pub fn loss(prediction: &Prediction, labels: &LabelMap) -> Result<f64> {
    check_label_dims(prediction.height, prediction.width, labels)?;
    Ok(loss::soft_dice_with_grad(&prediction.class_probabilities, labels).0)
}

pub fn backward<T: Real>(state: &ModelState<T>, volume: &Volume, labels: &LabelMap) -> Result<Gradients<T>> {
    state.backward(volume, labels)
}
