//! Central finite-difference verification of backpropagated gradients.

use rand::seq::index::sample;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::loss::{cross_entropy_loss, mse_loss};
use super::model::{LayerSpec, Sequential};
use super::ops::maxpool2d_forward;
use super::tensor::Tensor;
use crate::error::Result;

#[derive(Debug, Clone)]
pub enum CheckLoss {
    Mse(Tensor<f64>),
    CrossEntropy(Vec<usize>),
}

impl CheckLoss {
    fn eval(&self, out: &Tensor<f64>) -> Result<(f64, Tensor<f64>)> {
        match self {
            CheckLoss::Mse(target) => mse_loss(out, target),
            CheckLoss::CrossEntropy(labels) => cross_entropy_loss(out, labels),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct GradCheckConfig {
    pub step: f64,
    /// Coordinates probed per tensor; tensors smaller than this are checked exhaustively.
    pub coords_per_tensor: usize,
    /// Magnitudes below this are compared absolutely rather than relatively.
    pub abs_floor: f64,
    pub check_input: bool,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            step: 1e-4,
            coords_per_tensor: 200,
            abs_floor: 1e-8,
            check_input: true,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TensorCheck {
    pub name: String,
    pub checked: usize,
    pub max_rel_error: f64,
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub tensors: Vec<TensorCheck>,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.tensors
            .iter()
            .map(|t| t.max_rel_error)
            .fold(0.0, f64::max)
    }
}

pub fn rel_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Compares backprop gradients of `loss(model(input))` against central
/// differences, for every parameter tensor and optionally the input.
/// Dropout layers are disabled for the check.
pub fn gradient_check(
    model: &Sequential<f64>,
    input: &Tensor<f64>,
    loss: &CheckLoss,
    cfg: &GradCheckConfig,
) -> Result<GradCheckReport> {
    let mut model = model.clone();
    for layer in &mut model.layers {
        if let LayerSpec::Dropout { keep_prob } = &mut layer.spec {
            *keep_prob = 1.0;
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (out, tape) = model.forward_train(input.clone(), &mut rng, true)?;
    let (_, gout) = loss.eval(&out)?;
    let (grads, input_grad) = model.backward(tape, gout)?;

    let mut tensors = Vec::new();

    for li in 0..model.layers.len() {
        for pi in 0..model.layers[li].params.len() {
            let analytic = grads.layers[li]
                .as_ref()
                .map(|g| g[pi].data().to_vec())
                .unwrap_or_else(|| vec![0.0; model.layers[li].params[pi].len()]);
            let coords = pick(analytic.len(), cfg.coords_per_tensor, &mut rng);
            let mut worst: f64 = 0.0;
            for &c in &coords {
                let orig = model.layers[li].params[pi].data()[c];
                let numeric = central_difference(cfg.step, |d| {
                    model.layers[li].params[pi].data_mut()[c] = orig + d;
                    let r = probe(&model, input, loss);
                    model.layers[li].params[pi].data_mut()[c] = orig;
                    r
                })?;
                worst = worst.max(rel_error(analytic[c], numeric, cfg.abs_floor));
            }
            tensors.push(TensorCheck {
                name: format!("layer{li}.{}", if pi == 0 { "weight" } else { "bias" }),
                checked: coords.len(),
                max_rel_error: worst,
            });
        }
    }

    if cfg.check_input {
        if let Some(gi) = input_grad {
            let mut x = input.clone();
            let coords = pick(x.len(), cfg.coords_per_tensor, &mut rng);
            let mut worst: f64 = 0.0;
            for &c in &coords {
                let orig = x.data()[c];
                let numeric = central_difference(cfg.step, |d| {
                    x.data_mut()[c] = orig + d;
                    let r = probe(&model, &x, loss);
                    x.data_mut()[c] = orig;
                    r
                })?;
                worst = worst.max(rel_error(gi.data()[c], numeric, cfg.abs_floor));
            }
            tensors.push(TensorCheck {
                name: "input".into(),
                checked: coords.len(),
                max_rel_error: worst,
            });
        }
    }
    Ok(GradCheckReport { tensors })
}

/// Loss of an evaluation-mode forward pass, plus the side of every ReLU and
/// the winner of every max-pool window along the way.
fn probe(model: &Sequential<f64>, input: &Tensor<f64>, loss: &CheckLoss) -> Result<(f64, Vec<usize>)> {
    let mut x = input.clone();
    let mut pattern = Vec::new();
    for layer in &model.layers {
        match &layer.spec {
            LayerSpec::Relu => pattern.extend(x.data().iter().map(|&v| (v > 0.0) as usize)),
            LayerSpec::MaxPool2d { window, stride } => pattern.extend(maxpool2d_forward(&x, *window, *stride)?.1),
            _ => {}
        }
        x = Sequential { layers: vec![layer.clone()] }.forward(&x)?;
    }
    Ok((loss.eval(&x)?.0, pattern))
}

/// Central difference of `at(delta)`. A probe that moves any ReLU or pool
/// winner off its unperturbed state straddles a kink, so the step shrinks
/// tenfold until neither probe does (or it reaches 1e-8).
fn central_difference(step: f64, mut at: impl FnMut(f64) -> Result<(f64, Vec<usize>)>) -> Result<f64> {
    let base = at(0.0)?.1;
    let mut h = step;
    loop {
        let (up, pu) = at(h)?;
        let (down, pd) = at(-h)?;
        if (pu == base && pd == base) || h <= 1e-8 {
            return Ok((up - down) / (2.0 * h));
        }
        h /= 10.0;
    }
}

fn pick(len: usize, k: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    if len <= k {
        (0..len).collect()
    } else {
        let mut v = sample(rng, len, k).into_vec();
        v.sort_unstable();
        v
    }
}

/// One entry of [`standard_suite`].
#[derive(Debug, Clone)]
pub struct SuiteCase {
    pub name: String,
    /// Whole stacks rather than a single layer or loss.
    pub composed: bool,
    pub report: GradCheckReport,
}

fn uniform(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
    let n = shape.iter().product();
    // keep inputs away from the ReLU kink so central differences stay smooth
    let data = (0..n)
        .map(|_| {
            let m = rng.gen_range(0.05..1.0);
            if rng.gen_bool(0.5) {
                m
            } else {
                -m
            }
        })
        .collect();
    Tensor::from_vec(shape, data).expect("shape")
}

fn run_case(
    name: String,
    composed: bool,
    specs: &[LayerSpec],
    input_shape: &[usize],
    loss_kind: usize,
    rng: &mut ChaCha8Rng,
) -> Result<SuiteCase> {
    let batch = rng.gen_range(1..=3);
    let model = Sequential::<f64>::build(specs, input_shape, rng.next_u64())?;
    // nonzero biases so that bias paths are exercised
    let mut model = model;
    for layer in &mut model.layers {
        if let Some(b) = layer.params.get_mut(1) {
            for v in b.data_mut() {
                *v = rng.gen_range(-0.1..0.1);
            }
        }
    }
    let mut full = vec![batch];
    full.extend_from_slice(input_shape);
    let x = uniform(&full, rng);
    let out = model.output_shape(input_shape)?;
    let loss = if loss_kind == 0 {
        let mut s = vec![batch];
        s.extend(out);
        CheckLoss::Mse(uniform(&s, rng))
    } else {
        CheckLoss::CrossEntropy((0..batch).map(|_| rng.gen_range(0..out[0])).collect())
    };
    let cfg = GradCheckConfig {
        seed: rng.next_u64(),
        coords_per_tensor: 60,
        ..Default::default()
    };
    Ok(SuiteCase {
        name,
        composed,
        report: gradient_check(&model, &x, &loss, &cfg)?,
    })
}

/// Finite-difference checks of every layer kind, both losses, and small
/// transform and classifier stacks, with shapes drawn from `seed`.
pub fn standard_suite(seed: u64) -> Result<Vec<SuiteCase>> {
    use super::ops::Padding;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r = &mut rng;
    let mut cases = Vec::new();

    for padding in [Padding::Same, Padding::Valid] {
        let (c, f, k, s) = (r.gen_range(1..=3), r.gen_range(1..=4), r.gen_range(1..=6), r.gen_range(1..=3));
        let len = r.gen_range(k.max(4)..=20);
        let spec = LayerSpec::Conv1d { in_channels: c, filters: f, kernel: k, stride: s, padding };
        cases.push(run_case(format!("{spec}"), false, &[spec], &[c, len], 0, r)?);
    }
    for padding in [Padding::Same, Padding::Valid] {
        let (c, f) = (r.gen_range(1..=2), r.gen_range(1..=3));
        let kernel = (r.gen_range(1..=4), r.gen_range(1..=4));
        let stride = (r.gen_range(1..=2), r.gen_range(1..=3));
        let (h, w) = (r.gen_range(kernel.0..=8), r.gen_range(kernel.1..=9));
        let spec = LayerSpec::Conv2d { in_channels: c, filters: f, kernel, stride, padding };
        cases.push(run_case(format!("{spec}"), false, &[spec], &[c, h, w], 0, r)?);
    }
    {
        let window = (r.gen_range(1..=3), r.gen_range(1..=3));
        let stride = (r.gen_range(1..=2), r.gen_range(1..=3));
        let (c, h, w) = (r.gen_range(1..=3), r.gen_range(window.0..=7), r.gen_range(window.1..=9));
        let spec = LayerSpec::MaxPool2d { window, stride };
        cases.push(run_case(format!("{spec}"), false, &[spec], &[c, h, w], 0, r)?);
    }
    {
        let (i, o) = (r.gen_range(1..=12), r.gen_range(1..=8));
        let spec = LayerSpec::Dense { inputs: i, outputs: o };
        cases.push(run_case(format!("{spec}"), false, std::slice::from_ref(&spec), &[i], 0, r)?);
        cases.push(run_case(format!("cross-entropy over {spec}"), false, &[spec], &[i], 1, r)?);
    }
    let n = r.gen_range(2..=10);
    for spec in [
        LayerSpec::Relu,
        LayerSpec::Tanh,
        LayerSpec::Softmax,
        LayerSpec::Dropout { keep_prob: 0.5 },
    ] {
        cases.push(run_case(format!("{spec}"), false, &[spec], &[n], 0, r)?);
    }
    {
        let (a, b) = (r.gen_range(1..=3), r.gen_range(1..=4));
        cases.push(run_case("flatten".into(), false, &[LayerSpec::Flatten], &[a, b], 0, r)?);
        let spec = LayerSpec::Reshape { shape: vec![b, a] };
        cases.push(run_case(format!("{spec}"), false, &[spec], &[a, b], 0, r)?);
    }

    let mels = r.gen_range(3..=6);
    let frames = r.gen_range(5..=8);
    let hop = r.gen_range(2..=4);
    let mst = vec![
        LayerSpec::Conv1d { in_channels: 1, filters: 4, kernel: 2 * hop, stride: hop, padding: Padding::Same },
        LayerSpec::Relu,
        LayerSpec::Conv1d { in_channels: 4, filters: 3, kernel: 3, stride: 1, padding: Padding::Same },
        LayerSpec::Relu,
        LayerSpec::Conv1d { in_channels: 3, filters: mels, kernel: 3, stride: 1, padding: Padding::Same },
        LayerSpec::Tanh,
    ];
    cases.push(run_case("transform stack".into(), true, &mst, &[1, frames * hop], 0, r)?);
    let mut stack = mst;
    stack.extend([
        LayerSpec::Dropout { keep_prob: 0.5 },
        LayerSpec::Reshape { shape: vec![1, mels, frames] },
        LayerSpec::Conv2d { in_channels: 1, filters: 3, kernel: (mels - 1, 2), stride: (1, 1), padding: Padding::Valid },
        LayerSpec::Relu,
        LayerSpec::MaxPool2d { window: (2, 2), stride: (1, 2) },
        LayerSpec::Flatten,
    ]);
    let flat = stack
        .iter()
        .try_fold(vec![1, frames * hop], |s, l| l.output_shape(&s))?[0];
    stack.extend([
        LayerSpec::Dense { inputs: flat, outputs: 6 },
        LayerSpec::Relu,
        LayerSpec::Dense { inputs: 6, outputs: 4 },
    ]);
    cases.push(run_case("classifier stack".into(), true, &stack, &[1, frames * hop], 1, r)?);
    Ok(cases)
}
