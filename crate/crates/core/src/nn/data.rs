use rand::seq::SliceRandom;
use rand::Rng;

use super::tensor::Tensor;
use crate::error::Result;

/// Shuffled mini-batches of indices `0..n`; the last partial batch is kept.
pub fn shuffled_batches(n: usize, batch_size: usize, rng: &mut impl Rng) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    order.chunks(batch_size.max(1)).map(|c| c.to_vec()).collect()
}

/// Sequential chunks of `0..n`.
pub fn chunks(n: usize, size: usize) -> Vec<Vec<usize>> {
    (0..n)
        .collect::<Vec<_>>()
        .chunks(size.max(1))
        .map(|c| c.to_vec())
        .collect()
}

/// Stacks the selected samples into `[indices.len(), sample_shape...]`.
pub fn gather(samples: &[Vec<f32>], indices: &[usize], sample_shape: &[usize]) -> Result<Tensor<f32>> {
    let refs: Vec<&[f32]> = indices.iter().map(|&i| samples[i].as_slice()).collect();
    Tensor::stack(sample_shape, &refs)
}
