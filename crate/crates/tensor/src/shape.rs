use crate::error::{Result, TensorError};

pub fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

/// Broadcast two shapes under trailing-dimension alignment.
///
/// Dimensions are matched from the right; each pair must be equal or one of
/// them 1. Anything fancier is rejected.
pub fn broadcast_shapes(op: &'static str, a: &[usize], b: &[usize]) -> Result<Vec<usize>> {
    let rank = a.len().max(b.len());
    let mut out = vec![0usize; rank];
    for i in 0..rank {
        let da = if i < a.len() { a[a.len() - 1 - i] } else { 1 };
        let db = if i < b.len() { b[b.len() - 1 - i] } else { 1 };
        let d = if da == db {
            da
        } else if da == 1 {
            db
        } else if db == 1 {
            da
        } else {
            return Err(TensorError::ShapeMismatch {
                op,
                lhs: a.to_vec(),
                rhs: b.to_vec(),
            });
        };
        out[rank - 1 - i] = d;
    }
    Ok(out)
}

/// Row-major strides for a shape.
pub fn strides(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1usize; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * shape[i + 1];
    }
    s
}

/// Map a flat index in `to_shape` back to the flat index of the broadcast
/// operand with shape `from_shape` (right-aligned).
pub fn broadcast_index(flat: usize, to_shape: &[usize], from_shape: &[usize]) -> usize {
    if from_shape == to_shape {
        return flat;
    }
    let to_strides = strides(to_shape);
    let from_strides = strides(from_shape);
    let offset = to_shape.len() - from_shape.len();
    let mut idx = 0usize;
    for (i, (&dim, &st)) in to_shape.iter().zip(to_strides.iter()).enumerate() {
        let coord = (flat / st) % dim;
        if i >= offset {
            let j = i - offset;
            if from_shape[j] != 1 {
                idx += coord * from_strides[j];
            }
        }
    }
    idx
}

/// Sum-reduce `grad` (shaped `grad_shape`) down to `target_shape`, undoing a
/// trailing-dimension broadcast. Used by adjoints of broadcasting ops.
pub fn reduce_broadcast(grad: &[f32], grad_shape: &[usize], target_shape: &[usize]) -> Vec<f32> {
    if grad_shape == target_shape {
        return grad.to_vec();
    }
    let mut out = vec![0f32; numel(target_shape)];
    for (flat, &g) in grad.iter().enumerate() {
        out[broadcast_index(flat, grad_shape, target_shape)] += g;
    }
    out
}
