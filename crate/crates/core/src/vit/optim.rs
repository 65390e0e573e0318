use crate::error::{Error, Result};

use super::model::ViTModel;

/// Heavy-ball SGD: `v ← μ·v + g`, then `w ← w − lr·v`.
///
/// `velocity` has the model's shape; start it from [`ViTModel::zeros_like`].
pub fn sgd_step(
    model: &mut ViTModel,
    grads: &ViTModel,
    lr: f64,
    momentum: f64,
    velocity: &mut ViTModel,
) -> Result<()> {
    if model.config() != grads.config() || model.config() != velocity.config() {
        return Err(Error::shape(
            "sgd_step",
            format!("{:?}", model.config()),
            "gradient/velocity config",
        ));
    }
    let grads = grads.tensors();
    for ((w, v), g) in model
        .tensors_mut()
        .into_iter()
        .zip(velocity.tensors_mut())
        .zip(grads)
    {
        for ((wi, vi), gi) in w.data.iter_mut().zip(v.data.iter_mut()).zip(g.data) {
            *vi = momentum * *vi + gi;
            *wi -= lr * *vi;
        }
    }
    Ok(())
}
