//! Forward and backward kernels for the layer kinds used by the models.
//!
//! Layouts are channels-first and row-major:
//!
//! * conv1d: input `[batch, channels, length]`, weight `[filters, channels, kernel]`
//! * conv2d: input `[batch, channels, height, width]`, weight `[filters, channels, kh, kw]`
//! * dense:  input `[batch, inputs]`, weight `[outputs, inputs]`
//!
//! Convolutions go through im2col and a single GEMM per sample. The column
//! buffer is rebuilt from the cached input during the backward pass instead
//! of being stored, which keeps the tape small for the 1024-tap first layer.

use serde::{Deserialize, Serialize};

use super::tensor::{Scalar, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Padding {
    /// Output extent `ceil(input / stride)`; total padding split floor-left, ceil-right.
    Same,
    /// No padding; output extent `(input - kernel) / stride + 1`.
    Valid,
}

impl std::fmt::Display for Padding {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Padding::Same => f.write_str("same"),
            Padding::Valid => f.write_str("valid"),
        }
    }
}

/// Resolves padding along one axis, returning `(pad_left, output_len)`.
pub fn resolve_padding(
    input: usize,
    kernel: usize,
    stride: usize,
    padding: Padding,
) -> Result<(usize, usize)> {
    if stride == 0 || kernel == 0 {
        return Err(Error::Layer("kernel and stride must be positive".into()));
    }
    if input == 0 {
        return Err(Error::Shape("empty input axis".into()));
    }
    match padding {
        Padding::Same => {
            let out = input.div_ceil(stride);
            let total = ((out - 1) * stride + kernel).saturating_sub(input);
            Ok((total / 2, out))
        }
        Padding::Valid => {
            if kernel > input {
                return Err(Error::Shape(format!(
                    "kernel {kernel} exceeds unpadded input {input}"
                )));
            }
            Ok((0, (input - kernel) / stride + 1))
        }
    }
}

/// Geometry of a 2-D convolution over one sample.
#[derive(Debug, Clone, Copy)]
struct ConvGeom {
    cin: usize,
    cout: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    sh: usize,
    sw: usize,
    ph: usize,
    pw: usize,
    oh: usize,
    ow: usize,
}

impl ConvGeom {
    fn new(
        input: &[usize],
        weight: &[usize],
        stride: (usize, usize),
        padding: Padding,
    ) -> Result<Self> {
        if input.len() != 4 || weight.len() != 4 {
            return Err(Error::Shape(format!(
                "conv2d expects 4-d input and weight, got {input:?} and {weight:?}"
            )));
        }
        if input[1] != weight[1] {
            return Err(Error::Shape(format!(
                "conv input has {} channels, weight expects {}",
                input[1], weight[1]
            )));
        }
        let (ph, oh) = resolve_padding(input[2], weight[2], stride.0, padding)?;
        let (pw, ow) = resolve_padding(input[3], weight[3], stride.1, padding)?;
        Ok(Self {
            cin: input[1],
            cout: weight[0],
            h: input[2],
            w: input[3],
            kh: weight[2],
            kw: weight[3],
            sh: stride.0,
            sw: stride.1,
            ph,
            pw,
            oh,
            ow,
        })
    }

    fn patch(&self) -> usize {
        self.cin * self.kh * self.kw
    }

    fn positions(&self) -> usize {
        self.oh * self.ow
    }

    /// Source index into one sample's input for a column entry, if inside the image.
    #[inline]
    fn source(&self, c: usize, ky: usize, kx: usize, oy: usize, ox: usize) -> Option<usize> {
        let y = (oy * self.sh + ky).checked_sub(self.ph)?;
        let x = (ox * self.sw + kx).checked_sub(self.pw)?;
        (y < self.h && x < self.w).then(|| (c * self.h + y) * self.w + x)
    }

    fn im2col<T: Scalar>(&self, x: &[T], cols: &mut [T]) {
        let n = self.positions();
        for c in 0..self.cin {
            for ky in 0..self.kh {
                for kx in 0..self.kw {
                    let row = ((c * self.kh + ky) * self.kw + kx) * n;
                    for oy in 0..self.oh {
                        for ox in 0..self.ow {
                            cols[row + oy * self.ow + ox] = match self.source(c, ky, kx, oy, ox) {
                                Some(i) => x[i],
                                None => T::zero(),
                            };
                        }
                    }
                }
            }
        }
    }

    fn col2im<T: Scalar>(&self, cols: &[T], dx: &mut [T]) {
        let n = self.positions();
        for c in 0..self.cin {
            for ky in 0..self.kh {
                for kx in 0..self.kw {
                    let row = ((c * self.kh + ky) * self.kw + kx) * n;
                    for oy in 0..self.oh {
                        for ox in 0..self.ow {
                            if let Some(i) = self.source(c, ky, kx, oy, ox) {
                                dx[i] = dx[i] + cols[row + oy * self.ow + ox];
                            }
                        }
                    }
                }
            }
        }
    }
}

pub fn conv2d_forward<T: Scalar>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    bias: &Tensor<T>,
    stride: (usize, usize),
    padding: Padding,
) -> Result<Tensor<T>> {
    let g = ConvGeom::new(input.shape(), weight.shape(), stride, padding)?;
    if bias.len() != g.cout {
        return Err(Error::Shape(format!(
            "bias has {} entries for {} filters",
            bias.len(),
            g.cout
        )));
    }
    let batch = input.batch();
    let (patch, n) = (g.patch(), g.positions());
    let mut out = Tensor::zeros(&[batch, g.cout, g.oh, g.ow]);
    let mut cols = vec![T::zero(); patch * n];
    let out_stride = g.cout * n;
    for b in 0..batch {
        g.im2col(input.sample(b), &mut cols);
        let ob = &mut out.data_mut()[b * out_stride..(b + 1) * out_stride];
        for (co, row) in ob.chunks_mut(n).enumerate() {
            row.fill(bias.data()[co]);
        }
        T::gemm(
            g.cout,
            patch,
            n,
            T::one(),
            weight.data(),
            patch as isize,
            1,
            &cols,
            n as isize,
            1,
            T::one(),
            ob,
            n as isize,
            1,
        );
    }
    out.check_finite("conv forward");
    Ok(out)
}

/// Gradients of a convolution. `grad_input` is `None` when not requested.
pub struct ConvGrads<T> {
    pub grad_input: Option<Tensor<T>>,
    pub grad_weight: Tensor<T>,
    pub grad_bias: Tensor<T>,
}

pub fn conv2d_backward<T: Scalar>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    grad_out: &Tensor<T>,
    stride: (usize, usize),
    padding: Padding,
    need_input_grad: bool,
) -> Result<ConvGrads<T>> {
    let g = ConvGeom::new(input.shape(), weight.shape(), stride, padding)?;
    let batch = input.batch();
    if grad_out.shape() != [batch, g.cout, g.oh, g.ow] {
        return Err(Error::Shape(format!(
            "conv grad_out {:?} does not match forward output",
            grad_out.shape()
        )));
    }
    let (patch, n) = (g.patch(), g.positions());
    let mut grad_weight = Tensor::zeros(weight.shape());
    let mut grad_bias = Tensor::zeros(&[g.cout]);
    let mut grad_input = need_input_grad.then(|| Tensor::zeros(input.shape()));
    let mut cols = vec![T::zero(); patch * n];
    let mut dcols = vec![T::zero(); patch * n];
    let in_stride = g.cin * g.h * g.w;
    for b in 0..batch {
        let gb = grad_out.sample(b);
        for (co, row) in gb.chunks(n).enumerate() {
            let s: T = row.iter().copied().sum();
            grad_bias.data_mut()[co] = grad_bias.data()[co] + s;
        }
        g.im2col(input.sample(b), &mut cols);
        // dW += dY @ cols^T
        T::gemm(
            g.cout,
            n,
            patch,
            T::one(),
            gb,
            n as isize,
            1,
            &cols,
            1,
            n as isize,
            T::one(),
            grad_weight.data_mut(),
            patch as isize,
            1,
        );
        if let Some(gi) = grad_input.as_mut() {
            // dcols = W^T @ dY
            T::gemm(
                patch,
                g.cout,
                n,
                T::one(),
                weight.data(),
                1,
                patch as isize,
                gb,
                n as isize,
                1,
                T::zero(),
                &mut dcols,
                n as isize,
                1,
            );
            g.col2im(&dcols, &mut gi.data_mut()[b * in_stride..(b + 1) * in_stride]);
        }
    }
    Ok(ConvGrads {
        grad_input,
        grad_weight,
        grad_bias,
    })
}

fn as_2d_input<T: Scalar>(t: &Tensor<T>, what: &str) -> Result<Tensor<T>> {
    match t.shape() {
        [b, c, l] => t.clone().reshape(&[*b, *c, 1, *l]),
        s => Err(Error::Shape(format!("{what} expects a 3-d tensor, got {s:?}"))),
    }
}

pub fn conv1d_forward<T: Scalar>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    bias: &Tensor<T>,
    stride: usize,
    padding: Padding,
) -> Result<Tensor<T>> {
    let x = as_2d_input(input, "conv1d input")?;
    let w = as_2d_input(weight, "conv1d weight")?;
    let y = conv2d_forward(&x, &w, bias, (1, stride), padding)?;
    let s = y.shape().to_vec();
    y.reshape(&[s[0], s[1], s[3]])
}

pub fn conv1d_backward<T: Scalar>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    grad_out: &Tensor<T>,
    stride: usize,
    padding: Padding,
    need_input_grad: bool,
) -> Result<ConvGrads<T>> {
    let x = as_2d_input(input, "conv1d input")?;
    let w = as_2d_input(weight, "conv1d weight")?;
    let gy = as_2d_input(grad_out, "conv1d grad")?;
    let g = conv2d_backward(&x, &w, &gy, (1, stride), padding, need_input_grad)?;
    Ok(ConvGrads {
        grad_input: g
            .grad_input
            .map(|t| t.reshape(input.shape()))
            .transpose()?,
        grad_weight: g.grad_weight.reshape(weight.shape())?,
        grad_bias: g.grad_bias,
    })
}

/// Max pooling without padding. Returns the output and, per output cell, the
/// flat input index that won. Ties go to the first index in row-major window order.
pub fn maxpool2d_forward<T: Scalar>(
    input: &Tensor<T>,
    window: (usize, usize),
    stride: (usize, usize),
) -> Result<(Tensor<T>, Vec<usize>)> {
    let [batch, c, h, w] = match input.shape() {
        &[b, c, h, w] => [b, c, h, w],
        s => return Err(Error::Shape(format!("maxpool2d expects 4-d input, got {s:?}"))),
    };
    if window.0 > h || window.1 > w {
        return Err(Error::Shape(format!(
            "pool window {window:?} exceeds input {h}x{w}"
        )));
    }
    let (_, oh) = resolve_padding(h, window.0, stride.0, Padding::Valid)?;
    let (_, ow) = resolve_padding(w, window.1, stride.1, Padding::Valid)?;
    let mut out = Tensor::zeros(&[batch, c, oh, ow]);
    let mut arg = Vec::with_capacity(batch * c * oh * ow);
    let x = input.data();
    let o = out.data_mut();
    for plane in 0..batch * c {
        let base = plane * h * w;
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best = base + oy * stride.0 * w + ox * stride.1;
                for ky in 0..window.0 {
                    for kx in 0..window.1 {
                        let i = base + (oy * stride.0 + ky) * w + ox * stride.1 + kx;
                        if x[i] > x[best] {
                            best = i;
                        }
                    }
                }
                o[(plane * oh + oy) * ow + ox] = x[best];
                arg.push(best);
            }
        }
    }
    Ok((out, arg))
}

pub fn maxpool2d_backward<T: Scalar>(
    input_shape: &[usize],
    argmax: &[usize],
    grad_out: &Tensor<T>,
) -> Result<Tensor<T>> {
    if argmax.len() != grad_out.len() {
        return Err(Error::Shape("maxpool grad does not match forward".into()));
    }
    let mut gi = Tensor::zeros(input_shape);
    let d = gi.data_mut();
    for (&i, &g) in argmax.iter().zip(grad_out.data()) {
        d[i] = d[i] + g;
    }
    Ok(gi)
}

pub fn dense_forward<T: Scalar>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    bias: &Tensor<T>,
) -> Result<Tensor<T>> {
    let (batch, inputs, outputs) = dense_dims(input, weight)?;
    if bias.len() != outputs {
        return Err(Error::Shape("dense bias length".into()));
    }
    let mut out = Tensor::zeros(&[batch, outputs]);
    for row in out.data_mut().chunks_mut(outputs) {
        row.copy_from_slice(bias.data());
    }
    T::gemm(
        batch,
        inputs,
        outputs,
        T::one(),
        input.data(),
        inputs as isize,
        1,
        weight.data(),
        1,
        inputs as isize,
        T::one(),
        out.data_mut(),
        outputs as isize,
        1,
    );
    out.check_finite("dense forward");
    Ok(out)
}

pub struct DenseGrads<T> {
    pub grad_input: Option<Tensor<T>>,
    pub grad_weight: Tensor<T>,
    pub grad_bias: Tensor<T>,
}

pub fn dense_backward<T: Scalar>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    grad_out: &Tensor<T>,
    need_input_grad: bool,
) -> Result<DenseGrads<T>> {
    let (batch, inputs, outputs) = dense_dims(input, weight)?;
    if grad_out.shape() != [batch, outputs] {
        return Err(Error::Shape("dense grad_out shape".into()));
    }
    let mut grad_weight = Tensor::zeros(weight.shape());
    T::gemm(
        outputs,
        batch,
        inputs,
        T::one(),
        grad_out.data(),
        1,
        outputs as isize,
        input.data(),
        inputs as isize,
        1,
        T::zero(),
        grad_weight.data_mut(),
        inputs as isize,
        1,
    );
    let mut grad_bias = Tensor::zeros(&[outputs]);
    for row in grad_out.data().chunks(outputs) {
        for (b, &g) in grad_bias.data_mut().iter_mut().zip(row) {
            *b = *b + g;
        }
    }
    let grad_input = if need_input_grad {
        let mut gi = Tensor::zeros(&[batch, inputs]);
        T::gemm(
            batch,
            outputs,
            inputs,
            T::one(),
            grad_out.data(),
            outputs as isize,
            1,
            weight.data(),
            inputs as isize,
            1,
            T::zero(),
            gi.data_mut(),
            inputs as isize,
            1,
        );
        Some(gi)
    } else {
        None
    };
    Ok(DenseGrads {
        grad_input,
        grad_weight,
        grad_bias,
    })
}

fn dense_dims<T: Scalar>(input: &Tensor<T>, weight: &Tensor<T>) -> Result<(usize, usize, usize)> {
    match (input.shape(), weight.shape()) {
        (&[b, i], &[o, wi]) if i == wi => Ok((b, i, o)),
        (a, w) => Err(Error::Shape(format!(
            "dense input {a:?} incompatible with weight {w:?}"
        ))),
    }
}

pub fn relu_forward<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| v.max(T::zero()))
}

/// Gradient through ReLU given the layer's *input*; zero at the kink.
pub fn relu_backward<T: Scalar>(input: &Tensor<T>, grad_out: &Tensor<T>) -> Tensor<T> {
    let data = input
        .data()
        .iter()
        .zip(grad_out.data())
        .map(|(&x, &g)| if x > T::zero() { g } else { T::zero() })
        .collect();
    Tensor::from_vec(input.shape(), data).expect("same shape")
}

pub fn tanh_forward<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| v.tanh())
}

/// Gradient through tanh given the layer's *output*.
pub fn tanh_backward<T: Scalar>(output: &Tensor<T>, grad_out: &Tensor<T>) -> Tensor<T> {
    let data = output
        .data()
        .iter()
        .zip(grad_out.data())
        .map(|(&y, &g)| g * (T::one() - y * y))
        .collect();
    Tensor::from_vec(output.shape(), data).expect("same shape")
}

/// Softmax over the last axis, max-shifted.
pub fn softmax_forward<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    let n = *x.shape().last().expect("softmax on scalar");
    let mut out = x.clone();
    for row in out.data_mut().chunks_mut(n) {
        let m = row.iter().fold(T::neg_infinity(), |a, &b| a.max(b));
        let mut z = T::zero();
        for v in row.iter_mut() {
            *v = (*v - m).exp();
            z = z + *v;
        }
        for v in row.iter_mut() {
            *v = *v / z;
        }
    }
    out
}

/// Gradient through softmax given its output: `y * (g - <g, y>)` per row.
pub fn softmax_backward<T: Scalar>(output: &Tensor<T>, grad_out: &Tensor<T>) -> Tensor<T> {
    let n = *output.shape().last().expect("softmax on scalar");
    let mut gi = grad_out.clone();
    for (row, y) in gi.data_mut().chunks_mut(n).zip(output.data().chunks(n)) {
        let dot: T = row.iter().zip(y).map(|(&g, &p)| g * p).sum();
        for (g, &p) in row.iter_mut().zip(y) {
            *g = p * (*g - dot);
        }
    }
    gi
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_padding_examples() {
        assert_eq!(resolve_padding(51200, 1024, 512, Padding::Same).unwrap(), (256, 100));
        assert_eq!(resolve_padding(51712, 1024, 512, Padding::Same).unwrap(), (256, 101));
        assert_eq!(resolve_padding(512, 1024, 512, Padding::Same).unwrap(), (256, 1));
        assert_eq!(resolve_padding(10, 3, 1, Padding::Same).unwrap(), (1, 10));
        assert_eq!(resolve_padding(60, 57, 1, Padding::Valid).unwrap(), (0, 4));
        assert!(resolve_padding(3, 4, 1, Padding::Valid).is_err());
    }

    #[test]
    fn identity_kernel_is_identity() {
        let x = Tensor::<f64>::from_vec(&[1, 1, 5], vec![1.0, -2.0, 3.0, 0.5, 4.0]).unwrap();
        let w = Tensor::from_vec(&[1, 1, 1], vec![1.0]).unwrap();
        let b = Tensor::zeros(&[1]);
        let y = conv1d_forward(&x, &w, &b, 1, Padding::Same).unwrap();
        assert_eq!(y.data(), x.data());
    }

    #[test]
    fn conv_zero_grad_gives_zero_gradients() {
        let x = Tensor::<f64>::full(&[2, 2, 7], 0.3);
        let w = Tensor::full(&[3, 2, 3], 0.1);
        let gy = Tensor::zeros(&[2, 3, 7]);
        let g = conv1d_backward(&x, &w, &gy, 1, Padding::Same, true).unwrap();
        assert!(g.grad_weight.data().iter().all(|&v| v == 0.0));
        assert!(g.grad_bias.data().iter().all(|&v| v == 0.0));
        assert!(g.grad_input.unwrap().data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn pointwise_kernel_weight_grad_is_input_dot_grad() {
        let x = Tensor::<f64>::from_vec(&[1, 1, 4], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let w = Tensor::from_vec(&[1, 1, 1], vec![0.7]).unwrap();
        let gy = Tensor::from_vec(&[1, 1, 4], vec![0.5, -1.0, 2.0, 0.25]).unwrap();
        let g = conv1d_backward(&x, &w, &gy, 1, Padding::Same, true).unwrap();
        let want: f64 = x.data().iter().zip(gy.data()).map(|(a, b)| a * b).sum();
        assert!((g.grad_weight.data()[0] - want).abs() < 1e-12);
        assert!((g.grad_bias.data()[0] - 1.75).abs() < 1e-12);
    }

    #[test]
    fn maxpool_constant_input_routes_to_first_index() {
        let x = Tensor::<f64>::full(&[1, 1, 2, 6], 1.5);
        let (y, arg) = maxpool2d_forward(&x, (2, 3), (1, 3)).unwrap();
        assert_eq!(y.shape(), &[1, 1, 1, 2]);
        assert!(y.data().iter().all(|&v| v == 1.5));
        assert_eq!(arg, vec![0, 3]);
        let gy = Tensor::from_vec(&[1, 1, 1, 2], vec![1.0, 2.0]).unwrap();
        let gx = maxpool2d_backward(x.shape(), &arg, &gy).unwrap();
        assert_eq!(gx.data(), &[1.0, 0.0, 0.0, 2.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn maxpool_window_larger_than_input_fails() {
        let x = Tensor::<f32>::zeros(&[1, 1, 3, 3]);
        assert!(maxpool2d_forward(&x, (4, 1), (1, 1)).is_err());
    }

    #[test]
    fn softmax_of_zero_logits_is_uniform() {
        let x = Tensor::<f64>::zeros(&[2, 50]);
        let p = softmax_forward(&x);
        assert!(p.data().iter().all(|&v| (v - 0.02).abs() < 1e-15));
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let x = Tensor::<f32>::from_vec(&[2, 3], vec![100.0, -3.0, 7.0, 0.1, 0.2, 0.3]).unwrap();
        let p = softmax_forward(&x);
        for row in p.data().chunks(3) {
            assert!((row.iter().sum::<f32>() - 1.0).abs() < 1e-6);
        }
    }
}
