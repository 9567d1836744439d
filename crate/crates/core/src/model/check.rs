//! Finite-difference gradient check over every parameter tensor.

use super::forward::{forward, loss_and_grad};
use super::input::DocInput;
use super::params::ModelParams;

/// `‖a − b‖ / max(‖a‖, ‖b‖)`, zero when both are (numerically) zero.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let na = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nb = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    let diff = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    if na.max(nb) < 1e-12 {
        0.0
    } else {
        diff / na.max(nb)
    }
}

/// Per-tensor relative error between the analytic gradient of the summed
/// line cross-entropy and central differences with step `h`.
pub fn gradient_check(
    p: &ModelParams<f64>,
    input: &DocInput,
    labels: &[usize],
    h: f64,
) -> Vec<(String, f64)> {
    let (_, grads) = loss_and_grad(p, input, labels);
    let loss = |q: &ModelParams<f64>| -> f64 {
        forward(q, input)
            .probs
            .iter()
            .zip(labels)
            .map(|(row, &y)| -row[y].ln())
            .sum()
    };
    let mut q = p.clone();
    let mut out = Vec::with_capacity(p.tensors.len());
    for (ti, t) in p.tensors.iter().enumerate() {
        let mut numeric = vec![0.0; t.data.len()];
        for k in 0..t.data.len() {
            q.tensors[ti].data[k] = t.data[k] + h;
            let up = loss(&q);
            q.tensors[ti].data[k] = t.data[k] - h;
            let down = loss(&q);
            q.tensors[ti].data[k] = t.data[k];
            numeric[k] = (up - down) / (2.0 * h);
        }
        out.push((t.name.clone(), relative_error(&grads[ti], &numeric)));
    }
    out
}
