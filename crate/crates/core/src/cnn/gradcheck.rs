use ndarray::Array4;

use super::model::{CnnModel, Mode};
use super::CnnError;

/// Central-difference step.
pub const FD_STEP: f64 = 1e-5;
/// Magnitude below which both gradients count as zero.
const ZERO_FLOOR: f64 = 1e-8;

/// Largest relative discrepancy between backpropagated gradients and central
/// finite differences of the train-mode loss, over every trainable parameter.
pub fn cnn_backward_check(model: &CnnModel<f64>, x: &Array4<f64>, labels: &[usize]) -> Result<f64, CnnError> {
    let cache = model.forward_train(x)?;
    let grads = model.backward(&cache, labels);
    let analytic: Vec<Vec<f64>> = grads.slices().iter().map(|s| s.to_vec()).collect();

    let mut probe = model.clone();
    let mut worst: f64 = 0.0;
    for (t, tensor) in analytic.iter().enumerate() {
        for (i, &a) in tensor.iter().enumerate() {
            let original = probe.param_slices_mut()[t][i];
            probe.param_slices_mut()[t][i] = original + FD_STEP;
            let up = probe.loss(x, labels, Mode::Train)?;
            probe.param_slices_mut()[t][i] = original - FD_STEP;
            let down = probe.loss(x, labels, Mode::Train)?;
            probe.param_slices_mut()[t][i] = original;
            let numeric = (up - down) / (2.0 * FD_STEP);
            let scale = a.abs().max(numeric.abs()).max(ZERO_FLOOR);
            worst = worst.max((a - numeric).abs() / scale);
        }
    }
    Ok(worst)
}
