use super::ops::softmax_forward;
use super::tensor::{Scalar, Tensor};
use crate::error::{Error, Result};

/// Mean over all elements of `(pred - target)^2`, with its gradient.
pub fn mse_loss<T: Scalar>(pred: &Tensor<T>, target: &Tensor<T>) -> Result<(f64, Tensor<T>)> {
    if pred.shape() != target.shape() {
        return Err(Error::Shape(format!(
            "mse: prediction {:?} vs target {:?}",
            pred.shape(),
            target.shape()
        )));
    }
    let n = pred.len() as f64;
    let scale = T::from_f64_lossy(2.0 / n);
    let mut sum = 0.0;
    let grad: Vec<T> = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(&p, &t)| {
            let d = p - t;
            sum += d.as_f64() * d.as_f64();
            d * scale
        })
        .collect();
    Ok((sum / n, Tensor::from_vec(pred.shape(), grad)?))
}

/// Softmax cross-entropy on `[batch, classes]` logits, averaged over the batch.
pub fn cross_entropy_loss<T: Scalar>(
    logits: &Tensor<T>,
    labels: &[usize],
) -> Result<(f64, Tensor<T>)> {
    let [batch, classes] = match logits.shape() {
        &[b, c] => [b, c],
        s => return Err(Error::Shape(format!("cross-entropy expects [batch, classes], got {s:?}"))),
    };
    if labels.len() != batch {
        return Err(Error::Shape(format!(
            "{} labels for a batch of {batch}",
            labels.len()
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
        return Err(Error::Shape(format!(
            "label {bad} out of range for {classes} classes"
        )));
    }
    let mut grad = softmax_forward(logits);
    let inv_b = T::from_f64_lossy(1.0 / batch as f64);
    let mut loss = 0.0;
    for (row, (&label, logit_row)) in grad
        .data_mut()
        .chunks_mut(classes)
        .zip(labels.iter().zip(logits.data().chunks(classes)))
    {
        // log-softmax computed from the logits directly for accuracy
        let m = logit_row.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b.as_f64()));
        let lse = m + logit_row
            .iter()
            .map(|v| (v.as_f64() - m).exp())
            .sum::<f64>()
            .ln();
        loss += lse - logit_row[label].as_f64();
        row[label] = row[label] - T::one();
        for v in row.iter_mut() {
            *v = *v * inv_b;
        }
    }
    Ok((loss / batch as f64, grad))
}
