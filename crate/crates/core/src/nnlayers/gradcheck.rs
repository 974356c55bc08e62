use rand::Rng;

use super::{ForwardCtx, Layer, Tensor3};
use crate::error::Result;
use crate::rng::stream;

/// Relative error with a floor so that vanishing gradients compare on an
/// absolute scale.
fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

/// Maximum relative error between the analytical backward pass and central
/// finite differences, over every input element and every parameter.
///
/// The scalar probed is `sum(r * layer(x))` with a fixed random `r` drawn from
/// `seed`. The layer runs in train mode with a fixed dropout seed, so dropout
/// masks are identical across all evaluations.
pub fn gradient_check(layer: &mut Layer, input: &Tensor3, h: f64, seed: u64) -> Result<f64> {
    let ctx = ForwardCtx::train(seed);
    let y = layer.forward(input, &ctx)?;
    let mut rng = stream(seed, &[0x6772_6164]);
    let probe = y.map(|_| rng.gen_range(-1.0..1.0));

    layer.zero_grad();
    let grad_x = layer.backward(&probe)?;
    let analytic_params: Vec<Vec<f64>> = layer
        .param_slots()
        .into_iter()
        .map(|s| s.grad.to_vec())
        .collect();

    let objective =
        |layer: &mut Layer, x: &Tensor3| -> Result<f64> { Ok(layer.forward(x, &ctx)?.dot(&probe)) };

    let mut worst: f64 = 0.0;
    let mut x = input.clone();
    for i in 0..x.data().len() {
        let orig = x.data()[i];
        x.data_mut()[i] = orig + h;
        let up = objective(layer, &x)?;
        x.data_mut()[i] = orig - h;
        let down = objective(layer, &x)?;
        x.data_mut()[i] = orig;
        worst = worst.max(rel_err(grad_x.data()[i], (up - down) / (2.0 * h)));
    }

    for (slot, analytic) in analytic_params.iter().enumerate() {
        for i in 0..analytic.len() {
            let orig = layer.param_slots()[slot].value[i];
            layer.param_slots()[slot].value[i] = orig + h;
            let up = objective(layer, input)?;
            layer.param_slots()[slot].value[i] = orig - h;
            let down = objective(layer, input)?;
            layer.param_slots()[slot].value[i] = orig;
            worst = worst.max(rel_err(analytic[i], (up - down) / (2.0 * h)));
        }
    }
    Ok(worst)
}
