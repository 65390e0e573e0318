#![allow(dead_code)]

use fedvit::data::LabeledDataset;
use fedvit::fl::{epoch_rng, initial_model, FlConfig};
use fedvit::linalg::RngState;
use fedvit::vit::{ImageTensor, ViTConfig, ViTModel};

pub fn toy_config() -> ViTConfig {
    ViTConfig::default()
}

pub fn small_config() -> ViTConfig {
    ViTConfig {
        height: 8,
        width: 8,
        channels: 1,
        patch: 4,
        hidden: 8,
        depth: 2,
        heads: 2,
        mlp_ratio: 2,
        classes: 3,
    }
}

pub fn random_image(rng: &mut RngState, cfg: &ViTConfig) -> ImageTensor {
    let n = cfg.height * cfg.width * cfg.channels;
    ImageTensor::new(
        cfg.height,
        cfg.width,
        cfg.channels,
        (0..n).map(|_| rng.uniform()).collect(),
    )
    .unwrap()
}

/// Random model with every tensor (norm gains and biases included) moved off
/// its initial value so no gradient is trivially zero.
pub fn random_model(cfg: &ViTConfig, rng: &mut RngState, spread: f64) -> ViTModel {
    let mut m = ViTModel::init(cfg, rng).unwrap();
    for t in m.tensors_mut() {
        for v in t.data.iter_mut() {
            *v += spread * rng.gaussian();
        }
    }
    m
}

pub struct GradCheck {
    pub name: String,
    pub rel_error: f64,
    pub grad_norm: f64,
}

/// Central differences over every entry of every tensor. Relative error per
/// tensor is `‖analytic − numeric‖ / max(‖analytic‖, ‖numeric‖)`.
pub fn finite_difference_check(
    model: &ViTModel,
    batch: &[(&ImageTensor, usize)],
    eps: f64,
) -> Vec<GradCheck> {
    let (_, grads) = model.loss_and_grads(batch).unwrap();
    let analytic: Vec<Vec<f64>> = grads.tensors().iter().map(|t| t.data.to_vec()).collect();
    let names: Vec<String> = model.tensors().iter().map(|t| t.name.clone()).collect();
    let mut probe = model.clone();
    let mut out = Vec::new();
    for (ti, name) in names.iter().enumerate() {
        let mut numeric = Vec::with_capacity(analytic[ti].len());
        for j in 0..analytic[ti].len() {
            let orig = probe.tensors()[ti].data[j];
            probe.tensors_mut()[ti].data[j] = orig + eps;
            let plus = probe.loss(batch).unwrap();
            probe.tensors_mut()[ti].data[j] = orig - eps;
            let minus = probe.loss(batch).unwrap();
            probe.tensors_mut()[ti].data[j] = orig;
            numeric.push((plus - minus) / (2.0 * eps));
        }
        let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let diff: Vec<f64> = analytic[ti]
            .iter()
            .zip(&numeric)
            .map(|(a, n)| a - n)
            .collect();
        let scale = norm(&analytic[ti]).max(norm(&numeric));
        out.push(GradCheck {
            name: name.clone(),
            rel_error: if scale == 0.0 {
                0.0
            } else {
                norm(&diff) / scale
            },
            grad_norm: norm(&analytic[ti]),
        });
    }
    out
}

/// Single-process SGD replaying what one federated client would do: the same
/// initial weights, the same per-epoch shuffles, momentum reset every round.
/// The update rule is written out here rather than borrowed from the library.
pub fn centralized_sgd(cfg: &FlConfig, model_cfg: &ViTConfig, data: &LabeledDataset) -> ViTModel {
    let mut model = initial_model(model_cfg, cfg.seed).unwrap();
    for round in 0..cfg.rounds {
        let mut velocity: Vec<Vec<f64>> = model
            .tensors()
            .iter()
            .map(|t| vec![0.0; t.data.len()])
            .collect();
        for epoch in 0..cfg.local_epochs {
            let mut order: Vec<usize> = (0..data.len()).collect();
            epoch_rng(cfg.seed, 0, round as u32, epoch).shuffle(&mut order);
            for chunk in order.chunks(cfg.batch_size) {
                let batch: Vec<(&ImageTensor, usize)> = chunk
                    .iter()
                    .map(|&i| (&data.samples()[i].image, data.samples()[i].label))
                    .collect();
                let (_, g) = model.loss_and_grads(&batch).unwrap();
                let g: Vec<Vec<f64>> = g.tensors().iter().map(|t| t.data.to_vec()).collect();
                for ((w, v), g) in model.tensors_mut().into_iter().zip(&mut velocity).zip(&g) {
                    for ((wi, vi), gi) in w.data.iter_mut().zip(v.iter_mut()).zip(g) {
                        *vi = cfg.momentum * *vi + gi;
                        *wi -= cfg.lr * *vi;
                    }
                }
            }
        }
    }
    model
}
