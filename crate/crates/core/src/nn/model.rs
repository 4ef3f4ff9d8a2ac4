//! Sequential layer stacks with a recorded forward tape for backpropagation.

use std::fmt;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::init::xavier_init;
use super::ops::{self, Padding};
use super::tensor::{Scalar, Tensor};
use crate::error::{Error, Result};

/// Hyperparameters of one layer. The `Display` form is the canonical text
/// stored in checkpoints as the architecture descriptor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum LayerSpec {
    Conv1d {
        in_channels: usize,
        filters: usize,
        kernel: usize,
        stride: usize,
        padding: Padding,
    },
    Conv2d {
        in_channels: usize,
        filters: usize,
        kernel: (usize, usize),
        stride: (usize, usize),
        padding: Padding,
    },
    MaxPool2d {
        window: (usize, usize),
        stride: (usize, usize),
    },
    Dense {
        inputs: usize,
        outputs: usize,
    },
    Relu,
    Tanh,
    Softmax,
    Dropout {
        keep_prob: f64,
    },
    /// Reinterprets each sample with a new shape (batch axis untouched).
    Reshape {
        shape: Vec<usize>,
    },
    Flatten,
}

impl fmt::Display for LayerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LayerSpec::Conv1d {
                in_channels,
                filters,
                kernel,
                stride,
                padding,
            } => write!(
                f,
                "conv1d(in={in_channels},filters={filters},kernel={kernel},stride={stride},padding={padding})"
            ),
            LayerSpec::Conv2d {
                in_channels,
                filters,
                kernel,
                stride,
                padding,
            } => write!(
                f,
                "conv2d(in={in_channels},filters={filters},kernel={}x{},stride={}x{},padding={padding})",
                kernel.0, kernel.1, stride.0, stride.1
            ),
            LayerSpec::MaxPool2d { window, stride } => write!(
                f,
                "maxpool2d(window={}x{},stride={}x{})",
                window.0, window.1, stride.0, stride.1
            ),
            LayerSpec::Dense { inputs, outputs } => write!(f, "dense(in={inputs},out={outputs})"),
            LayerSpec::Relu => f.write_str("relu"),
            LayerSpec::Tanh => f.write_str("tanh"),
            LayerSpec::Softmax => f.write_str("softmax"),
            LayerSpec::Dropout { keep_prob } => write!(f, "dropout(keep={keep_prob})"),
            LayerSpec::Reshape { shape } => {
                let dims: Vec<String> = shape.iter().map(|d| d.to_string()).collect();
                write!(f, "reshape({})", dims.join("x"))
            }
            LayerSpec::Flatten => f.write_str("flatten"),
        }
    }
}

impl LayerSpec {
    /// Weight shape, for layers that carry parameters.
    pub fn weight_shape(&self) -> Option<Vec<usize>> {
        match *self {
            LayerSpec::Conv1d {
                in_channels,
                filters,
                kernel,
                ..
            } => Some(vec![filters, in_channels, kernel]),
            LayerSpec::Conv2d {
                in_channels,
                filters,
                kernel,
                ..
            } => Some(vec![filters, in_channels, kernel.0, kernel.1]),
            LayerSpec::Dense { inputs, outputs } => Some(vec![outputs, inputs]),
            _ => None,
        }
    }

    fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Layer(format!("{self}: {msg}")));
        match self {
            LayerSpec::Conv1d {
                in_channels,
                filters,
                kernel,
                stride,
                ..
            } if *in_channels == 0 || *filters == 0 || *kernel == 0 || *stride == 0 => {
                bad("all extents must be positive")
            }
            LayerSpec::Conv2d {
                in_channels,
                filters,
                kernel,
                stride,
                ..
            } if *in_channels == 0
                || *filters == 0
                || kernel.0 == 0
                || kernel.1 == 0
                || stride.0 == 0
                || stride.1 == 0 =>
            {
                bad("all extents must be positive")
            }
            LayerSpec::MaxPool2d { window, stride }
                if window.0 == 0 || window.1 == 0 || stride.0 == 0 || stride.1 == 0 =>
            {
                bad("all extents must be positive")
            }
            LayerSpec::Dense { inputs, outputs } if *inputs == 0 || *outputs == 0 => {
                bad("all extents must be positive")
            }
            LayerSpec::Dropout { keep_prob } if !(*keep_prob > 0.0 && *keep_prob <= 1.0) => {
                bad("keep probability must lie in (0, 1]")
            }
            LayerSpec::Reshape { shape } if shape.is_empty() || shape.contains(&0) => {
                bad("reshape target must be non-empty with positive extents")
            }
            _ => Ok(()),
        }
    }

    /// Per-sample output shape for a per-sample input shape.
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        let mismatch = || {
            Error::Shape(format!(
                "{self} cannot consume per-sample shape {input:?}"
            ))
        };
        match *self {
            LayerSpec::Conv1d {
                in_channels,
                filters,
                kernel,
                stride,
                padding,
            } => match input {
                &[c, l] if c == in_channels => {
                    let (_, out) = ops::resolve_padding(l, kernel, stride, padding)?;
                    Ok(vec![filters, out])
                }
                _ => Err(mismatch()),
            },
            LayerSpec::Conv2d {
                in_channels,
                filters,
                kernel,
                stride,
                padding,
            } => match input {
                &[c, h, w] if c == in_channels => {
                    let (_, oh) = ops::resolve_padding(h, kernel.0, stride.0, padding)?;
                    let (_, ow) = ops::resolve_padding(w, kernel.1, stride.1, padding)?;
                    Ok(vec![filters, oh, ow])
                }
                _ => Err(mismatch()),
            },
            LayerSpec::MaxPool2d { window, stride } => match input {
                &[c, h, w] if window.0 <= h && window.1 <= w => Ok(vec![
                    c,
                    (h - window.0) / stride.0 + 1,
                    (w - window.1) / stride.1 + 1,
                ]),
                _ => Err(mismatch()),
            },
            LayerSpec::Dense { inputs, outputs } => match input {
                &[i] if i == inputs => Ok(vec![outputs]),
                _ => Err(mismatch()),
            },
            LayerSpec::Reshape { ref shape } => {
                if shape.iter().product::<usize>() == input.iter().product::<usize>() {
                    Ok(shape.clone())
                } else {
                    Err(mismatch())
                }
            }
            LayerSpec::Flatten => Ok(vec![input.iter().product()]),
            LayerSpec::Relu | LayerSpec::Tanh | LayerSpec::Softmax | LayerSpec::Dropout { .. } => {
                Ok(input.to_vec())
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct Layer<T> {
    pub spec: LayerSpec,
    /// `[weight, bias]` for parameterized layers, empty otherwise.
    pub params: Vec<Tensor<T>>,
    /// Frozen layers are skipped by optimizers and by backpropagation.
    pub frozen: bool,
}

impl<T: Scalar> Layer<T> {
    pub fn has_params(&self) -> bool {
        !self.params.is_empty()
    }

    pub fn is_trainable(&self) -> bool {
        self.has_params() && !self.frozen
    }
}

/// Per-layer values saved during a training-mode forward pass.
enum Cache<T> {
    Input(Tensor<T>),
    Output(Tensor<T>),
    Pool {
        input_shape: Vec<usize>,
        argmax: Vec<usize>,
    },
    Mask(Vec<T>),
    Shape(Vec<usize>),
}

/// Record of a training-mode forward pass, starting at layer `start`.
pub struct Tape<T> {
    start: usize,
    caches: Vec<Cache<T>>,
}

/// Parameter gradients, indexed like `Sequential::layers`; `None` for layers
/// without parameters, frozen layers, and layers below the tape start.
pub struct Gradients<T> {
    pub layers: Vec<Option<Vec<Tensor<T>>>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn get(&self, layer: usize) -> Option<&[Tensor<T>]> {
        self.layers.get(layer)?.as_deref()
    }
}

#[derive(Debug, Clone)]
pub struct Sequential<T> {
    pub layers: Vec<Layer<T>>,
}

impl<T: Scalar> Sequential<T> {
    /// Builds a stack with Xavier-uniform weights and zero biases. The
    /// per-sample `input_shape` is used only to validate that consecutive
    /// layers fit together.
    pub fn build(specs: &[LayerSpec], input_shape: &[usize], seed: u64) -> Result<Self> {
        let mut shape = input_shape.to_vec();
        for spec in specs {
            spec.validate()?;
            shape = spec.output_shape(&shape)?;
        }
        let mut seeder = ChaCha8Rng::seed_from_u64(seed);
        let layers = specs
            .iter()
            .map(|spec| {
                let layer_seed = seeder.next_u64();
                let params = match spec.weight_shape() {
                    Some(ws) => {
                        let bias = Tensor::zeros(&[ws[0]]);
                        vec![xavier_init(&ws, layer_seed), bias]
                    }
                    None => Vec::new(),
                };
                Layer {
                    spec: spec.clone(),
                    params,
                    frozen: false,
                }
            })
            .collect();
        Ok(Self { layers })
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        self.layers.iter().map(|l| l.spec.clone()).collect()
    }

    /// Canonical architecture text: one layer per line.
    pub fn descriptor(&self) -> String {
        descriptor_of(&self.specs())
    }

    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        self.layers
            .iter()
            .try_fold(input.to_vec(), |s, l| l.spec.output_shape(&s))
    }

    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .flat_map(|l| l.params.iter())
            .map(|p| p.len())
            .sum()
    }

    pub fn set_frozen(&mut self, range: std::ops::Range<usize>, frozen: bool) {
        for l in &mut self.layers[range] {
            l.frozen = frozen;
        }
    }

    /// Index of the first layer whose parameters will be updated, or `len`.
    pub fn first_trainable(&self) -> usize {
        self.layers
            .iter()
            .position(|l| l.is_trainable())
            .unwrap_or(self.layers.len())
    }

    pub fn cast<U: Scalar>(&self) -> Sequential<U> {
        Sequential {
            layers: self
                .layers
                .iter()
                .map(|l| Layer {
                    spec: l.spec.clone(),
                    params: l.params.iter().map(|p| p.cast()).collect(),
                    frozen: l.frozen,
                })
                .collect(),
        }
    }

    /// Evaluation-mode forward pass: dropout is the identity.
    pub fn forward(&self, input: &Tensor<T>) -> Result<Tensor<T>> {
        let mut x = input.clone();
        for layer in &self.layers {
            x = apply(layer, x, None)?.0;
        }
        Ok(x)
    }

    /// Training-mode forward pass. Layers before `first_trainable()` run
    /// without recording (their gradients are never needed) unless
    /// `track_input` asks for the gradient with respect to the input.
    pub fn forward_train(
        &self,
        input: Tensor<T>,
        rng: &mut impl Rng,
        track_input: bool,
    ) -> Result<(Tensor<T>, Tape<T>)> {
        let start = if track_input {
            0
        } else {
            self.first_trainable()
        };
        let mut x = input;
        let mut caches = Vec::with_capacity(self.layers.len() - start);
        for (i, layer) in self.layers.iter().enumerate() {
            let (y, cache) = apply(layer, x, Some(&mut *rng as &mut dyn RngCore))?;
            if i >= start {
                caches.push(cache);
            }
            x = y;
        }
        Ok((x, Tape { start, caches }))
    }

    /// Backpropagates `grad_out` through the recorded layers. Returns the
    /// parameter gradients and, when the tape starts at layer 0, the
    /// gradient with respect to the input.
    pub fn backward(
        &self,
        tape: Tape<T>,
        grad_out: Tensor<T>,
    ) -> Result<(Gradients<T>, Option<Tensor<T>>)> {
        let Tape { start, caches } = tape;
        let mut grads: Vec<Option<Vec<Tensor<T>>>> = vec![None; self.layers.len()];
        let mut g = grad_out;
        let mut input_grad = None;
        for (offset, cache) in caches.into_iter().enumerate().rev() {
            let i = start + offset;
            let layer = &self.layers[i];
            let need_input = i > start || start == 0;
            let (gi, pg) = backprop(layer, cache, &g, need_input)?;
            if layer.is_trainable() || (start == 0 && layer.has_params()) {
                grads[i] = pg;
            }
            match gi {
                Some(t) if i > start => g = t,
                Some(t) => input_grad = Some(t),
                None => break,
            }
        }
        Ok((Gradients { layers: grads }, input_grad))
    }
}

pub fn descriptor_of(specs: &[LayerSpec]) -> String {
    specs
        .iter()
        .map(|s| s.to_string())
        .collect::<Vec<_>>()
        .join("\n")
}

fn apply<T: Scalar>(
    layer: &Layer<T>,
    x: Tensor<T>,
    rng: Option<&mut dyn RngCore>,
) -> Result<(Tensor<T>, Cache<T>)> {
    let train = rng.is_some();
    Ok(match &layer.spec {
        LayerSpec::Conv1d {
            stride, padding, ..
        } => {
            let y = ops::conv1d_forward(&x, &layer.params[0], &layer.params[1], *stride, *padding)?;
            (y, Cache::Input(x))
        }
        LayerSpec::Conv2d {
            stride, padding, ..
        } => {
            let y = ops::conv2d_forward(&x, &layer.params[0], &layer.params[1], *stride, *padding)?;
            (y, Cache::Input(x))
        }
        LayerSpec::MaxPool2d { window, stride } => {
            let (y, argmax) = ops::maxpool2d_forward(&x, *window, *stride)?;
            (
                y,
                Cache::Pool {
                    input_shape: x.shape().to_vec(),
                    argmax,
                },
            )
        }
        LayerSpec::Dense { .. } => {
            let y = ops::dense_forward(&x, &layer.params[0], &layer.params[1])?;
            (y, Cache::Input(x))
        }
        LayerSpec::Relu => (ops::relu_forward(&x), Cache::Input(x)),
        LayerSpec::Tanh => {
            let y = ops::tanh_forward(&x);
            let cache = if train {
                Cache::Output(y.clone())
            } else {
                Cache::Shape(Vec::new())
            };
            (y, cache)
        }
        LayerSpec::Softmax => {
            let y = ops::softmax_forward(&x);
            let cache = if train {
                Cache::Output(y.clone())
            } else {
                Cache::Shape(Vec::new())
            };
            (y, cache)
        }
        LayerSpec::Dropout { keep_prob } => match rng {
            Some(rng) if *keep_prob < 1.0 => {
                let scale = T::from_f64_lossy(1.0 / keep_prob);
                let mask: Vec<T> = (0..x.len())
                    .map(|_| {
                        if rng.gen_bool(*keep_prob) {
                            scale
                        } else {
                            T::zero()
                        }
                    })
                    .collect();
                let mut y = x;
                for (v, &m) in y.data_mut().iter_mut().zip(&mask) {
                    *v = *v * m;
                }
                (y, Cache::Mask(mask))
            }
            _ => {
                let n = x.len();
                (x, Cache::Mask(vec![T::one(); n]))
            }
        },
        LayerSpec::Reshape { shape } => {
            let from = x.shape().to_vec();
            let mut to = vec![x.batch()];
            to.extend_from_slice(shape);
            (x.reshape(&to)?, Cache::Shape(from))
        }
        LayerSpec::Flatten => {
            let from = x.shape().to_vec();
            let b = x.batch();
            let n = x.len() / b.max(1);
            (x.reshape(&[b, n])?, Cache::Shape(from))
        }
    })
}

type LayerGrads<T> = (Option<Tensor<T>>, Option<Vec<Tensor<T>>>);

fn backprop<T: Scalar>(
    layer: &Layer<T>,
    cache: Cache<T>,
    g: &Tensor<T>,
    need_input: bool,
) -> Result<LayerGrads<T>> {
    let missing = || Error::Layer(format!("{}: tape entry has the wrong kind", layer.spec));
    Ok(match (&layer.spec, cache) {
        (
            LayerSpec::Conv1d {
                stride, padding, ..
            },
            Cache::Input(x),
        ) => {
            let r = ops::conv1d_backward(&x, &layer.params[0], g, *stride, *padding, need_input)?;
            (r.grad_input, Some(vec![r.grad_weight, r.grad_bias]))
        }
        (
            LayerSpec::Conv2d {
                stride, padding, ..
            },
            Cache::Input(x),
        ) => {
            let r = ops::conv2d_backward(&x, &layer.params[0], g, *stride, *padding, need_input)?;
            (r.grad_input, Some(vec![r.grad_weight, r.grad_bias]))
        }
        (LayerSpec::Dense { .. }, Cache::Input(x)) => {
            let r = ops::dense_backward(&x, &layer.params[0], g, need_input)?;
            (r.grad_input, Some(vec![r.grad_weight, r.grad_bias]))
        }
        (LayerSpec::MaxPool2d { .. }, Cache::Pool { input_shape, argmax }) => (
            Some(ops::maxpool2d_backward(&input_shape, &argmax, g)?),
            None,
        ),
        (LayerSpec::Relu, Cache::Input(x)) => (Some(ops::relu_backward(&x, g)), None),
        (LayerSpec::Tanh, Cache::Output(y)) => (Some(ops::tanh_backward(&y, g)), None),
        (LayerSpec::Softmax, Cache::Output(y)) => (Some(ops::softmax_backward(&y, g)), None),
        (LayerSpec::Dropout { .. }, Cache::Mask(mask)) => {
            let mut gi = g.clone();
            for (v, &m) in gi.data_mut().iter_mut().zip(&mask) {
                *v = *v * m;
            }
            (Some(gi), None)
        }
        (LayerSpec::Reshape { .. } | LayerSpec::Flatten, Cache::Shape(from)) => {
            (Some(g.clone().reshape(&from)?), None)
        }
        _ => return Err(missing()),
    })
}
