//! Central finite-difference gradient oracle.
//!
//! Independent of the autodiff path: it re-evaluates the op at perturbed
//! inputs and compares against the gradients reported by `backward`. Used by
//! the op test suite and the `verify grad` harness.
//!
//! The op output is projected to a scalar through fixed pseudo-random weights
//! so upstream gradients are non-uniform. The projection itself is summed in
//! f64 on the host for the finite-difference side; otherwise the reduction's
//! own f32 rounding, divided by 2h, would swamp the tolerance.

use crate::error::Result;
use crate::rng::RngStream;
use crate::tensor::Tensor;

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub checked: usize,
    pub max_rel_err: f32,
    /// (input index, element index) of the worst element.
    pub worst: (usize, usize),
}

/// Relative error with a unit floor, so near-zero gradients are compared
/// absolutely at the same tolerance.
pub fn rel_err(a: f32, b: f32) -> f32 {
    (a - b).abs() / f32::max(1.0, f32::max(a.abs(), b.abs()))
}

/// Compare autodiff gradients of `weights . op(inputs)` against central
/// differences with step `h`, for every element of every input.
///
/// `op` must be a pure function of its inputs; it may return a tensor of any
/// shape.
pub fn check<F>(op: F, inputs: &[(Vec<usize>, Vec<f32>)], h: f32) -> Result<GradCheckReport>
where
    F: Fn(&[Tensor]) -> Result<Tensor>,
{
    // Fixed projection weights, sized on first evaluation.
    let probe: Vec<Tensor> = inputs
        .iter()
        .map(|(shape, data)| Tensor::from_vec(shape, data.clone()))
        .collect::<Result<_>>()?;
    let y0 = op(&probe)?;
    let mut wrng = RngStream::new(0x5eed_f00d, 0);
    let weights = wrng
        .uniform_vec(y0.numel())
        .into_iter()
        .map(|u| 0.25 + u)
        .collect::<Vec<f32>>();

    // Autodiff gradients through the full f32 tape.
    let params: Vec<Tensor> = inputs
        .iter()
        .map(|(shape, data)| Tensor::param(shape, data.clone()))
        .collect::<Result<_>>()?;
    let y = op(&params)?;
    let w_t = Tensor::from_vec(&[y.numel()], weights.clone())?;
    y.reshape(&[y.numel()])?.mul(&w_t)?.sum().backward()?;
    let grads: Vec<Vec<f32>> = params
        .iter()
        .map(|p| p.grad().unwrap_or_else(|| vec![0.0; p.numel()]))
        .collect();

    // Finite differences with an f64 host-side projection.
    let eval = |datas: &[Vec<f32>]| -> Result<f64> {
        let leaves: Vec<Tensor> = inputs
            .iter()
            .zip(datas.iter())
            .map(|((shape, _), data)| Tensor::from_vec(shape, data.clone()))
            .collect::<Result<_>>()?;
        let y = op(&leaves)?;
        Ok(y.data()
            .iter()
            .zip(weights.iter())
            .map(|(&v, &w)| v as f64 * w as f64)
            .sum())
    };

    let mut report = GradCheckReport {
        checked: 0,
        max_rel_err: 0.0,
        worst: (0, 0),
    };
    let base: Vec<Vec<f32>> = inputs.iter().map(|(_, d)| d.clone()).collect();
    for (i, (_, data)) in inputs.iter().enumerate() {
        for j in 0..data.len() {
            let mut plus = base.clone();
            plus[i][j] += h;
            let mut minus = base.clone();
            minus[i][j] -= h;
            let fd = ((eval(&plus)? - eval(&minus)?) / (2.0 * h as f64)) as f32;
            let err = rel_err(grads[i][j], fd);
            report.checked += 1;
            if err > report.max_rel_err {
                report.max_rel_err = err;
                report.worst = (i, j);
            }
        }
    }
    Ok(report)
}
