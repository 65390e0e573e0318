//! Cross-entropy loss and hand-derived backpropagation through the ViT.

use crate::error::{Error, Result};
use crate::linalg::Matrix;

use super::model::{
    gelu_grad, BlockTrace, EncoderBlock, HeadTrace, LayerNorm, NormTrace, ViTModel,
};
use super::patch::ImageTensor;

/// Mean softmax cross-entropy of `logits` against `label`.
pub fn cross_entropy(logits: &[f64], label: usize) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
    lse - logits[label]
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / z).collect()
}

pub fn argmax(values: &[f64]) -> usize {
    values
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, &v)| {
            if v > best.1 {
                (i, v)
            } else {
                best
            }
        })
        .0
}

impl ViTModel {
    /// Mean cross-entropy over `batch` and its gradient with respect to every parameter.
    pub fn loss_and_grads(&self, batch: &[(&ImageTensor, usize)]) -> Result<(f64, ViTModel)> {
        if batch.is_empty() {
            return Err(Error::InvalidArgument("empty batch".into()));
        }
        let classes = self.config().classes;
        if let Some((_, bad)) = batch.iter().find(|(_, y)| *y >= classes) {
            return Err(Error::InvalidArgument(format!(
                "label {bad} out of range for {classes} classes"
            )));
        }
        let scale = 1.0 / batch.len() as f64;
        let mut grads = self.zeros_like();
        let mut total = 0.0;
        for (x, label) in batch {
            total += self.accumulate_sample(x, *label, scale, &mut grads)?;
        }
        Ok((total * scale, grads))
    }

    /// Mean loss only, for evaluation and finite-difference checks.
    pub fn loss(&self, batch: &[(&ImageTensor, usize)]) -> Result<f64> {
        if batch.is_empty() {
            return Err(Error::InvalidArgument("empty batch".into()));
        }
        let mut total = 0.0;
        for (x, label) in batch {
            total += cross_entropy(&self.forward(x)?, *label);
        }
        Ok(total / batch.len() as f64)
    }

    #[allow(clippy::needless_range_loop)]
    fn accumulate_sample(
        &self,
        x: &ImageTensor,
        label: usize,
        scale: f64,
        grads: &mut ViTModel,
    ) -> Result<f64> {
        let cfg = self.config().clone();
        let patches = self.patchify(x)?;
        let z0 = self.embed(&patches)?;
        let mut traces = Vec::with_capacity(cfg.depth);
        let out = self.run_encoder(z0, Some(&mut traces));
        let mut head = HeadTrace::default();
        let logits = self.head_forward(out.row(0), Some(&mut head));
        let loss = cross_entropy(&logits, label);

        // dL/dlogits
        let mut dlogits = softmax(&logits);
        dlogits[label] -= 1.0;
        dlogits.iter_mut().for_each(|v| *v *= scale);

        for (gb, dl) in grads.head_bias.iter_mut().zip(&dlogits) {
            *gb += dl;
        }
        let mut dy = vec![0.0; cfg.hidden];
        for k in 0..cfg.hidden {
            let yk = head.y[k];
            let g_row = grads.head.row_mut(k);
            for (g, dl) in g_row.iter_mut().zip(&dlogits) {
                *g += yk * dl;
            }
            dy[k] = self
                .head
                .row(k)
                .iter()
                .zip(&dlogits)
                .map(|(w, dl)| w * dl)
                .sum();
        }
        let dcls = layer_norm_row_backward(
            &dy,
            &head.xhat,
            head.rstd,
            &self.final_norm,
            &mut grads.final_norm,
        );

        let mut dx = Matrix::zeros(cfg.tokens(), cfg.hidden);
        dx.row_mut(0).copy_from_slice(&dcls);

        for (i, trace) in traces.iter().enumerate().rev() {
            dx = block_backward(&cfg, &self.blocks[i], trace, dx, &mut grads.blocks[i]);
        }

        // Embedding: row 0 = x_class + e⁰, row i = xⁱE + eⁱ.
        grads.position_embedding.add_assign(&dx);
        for (g, d) in grads.class_token.iter_mut().zip(dx.row(0)) {
            *g += d;
        }
        let n = cfg.num_patches();
        let d_patch = Matrix::from_vec(n, cfg.hidden, dx.as_slice()[cfg.hidden..].to_vec())?;
        grads
            .patch_embedding
            .add_assign(&patches.matrix().t_dot(&d_patch));
        Ok(loss)
    }
}

/// Backward of `y = γ ⊙ x̂ + β` for one row; returns `dx` and accumulates `dγ`, `dβ`.
fn layer_norm_row_backward(
    dy: &[f64],
    xhat: &[f64],
    rstd: f64,
    p: &LayerNorm,
    g: &mut LayerNorm,
) -> Vec<f64> {
    let n = dy.len() as f64;
    let mut dxhat = vec![0.0; dy.len()];
    for j in 0..dy.len() {
        g.gamma[j] += dy[j] * xhat[j];
        g.beta[j] += dy[j];
        dxhat[j] = dy[j] * p.gamma[j];
    }
    let mean_d = dxhat.iter().sum::<f64>() / n;
    let mean_dx = dxhat.iter().zip(xhat).map(|(a, b)| a * b).sum::<f64>() / n;
    dxhat
        .iter()
        .zip(xhat)
        .map(|(d, xh)| rstd * (d - mean_d - xh * mean_dx))
        .collect()
}

fn layer_norm_backward(dy: &Matrix, t: &NormTrace, p: &LayerNorm, g: &mut LayerNorm) -> Matrix {
    let mut dx = Matrix::zeros(dy.rows(), dy.cols());
    for r in 0..dy.rows() {
        let row = layer_norm_row_backward(dy.row(r), t.xhat.row(r), t.rstd[r], p, g);
        dx.row_mut(r).copy_from_slice(&row);
    }
    dx
}

fn sum_rows_into(m: &Matrix, acc: &mut [f64]) {
    for r in 0..m.rows() {
        for (a, v) in acc.iter_mut().zip(m.row(r)) {
            *a += v;
        }
    }
}

fn block_backward(
    cfg: &super::ViTConfig,
    b: &EncoderBlock,
    t: &BlockTrace,
    d_out: Matrix,
    g: &mut EncoderBlock,
) -> Matrix {
    // MLP branch: out = x_mid + gelu(h2·W1 + b1)·W2 + b2
    sum_rows_into(&d_out, &mut g.b2);
    g.w2.add_assign(&t.g.t_dot(&d_out));
    let mut du = d_out.dot_t(&b.w2);
    for (d, u) in du.as_mut_slice().iter_mut().zip(t.u.as_slice()) {
        *d *= gelu_grad(*u);
    }
    sum_rows_into(&du, &mut g.b1);
    g.w1.add_assign(&t.h2.t_dot(&du));
    let dh2 = du.dot_t(&b.w1);
    let mut d_mid = layer_norm_backward(&dh2, &t.ln2, &b.ln2, &mut g.ln2);
    d_mid.add_assign(&d_out);

    // Attention branch: x_mid = x + attn·Wo
    g.wo.add_assign(&t.attn.t_dot(&d_mid));
    let d_attn = d_mid.dot_t(&b.wo);

    let tokens = t.q.rows();
    let dh = cfg.head_dim();
    let scale = 1.0 / (dh as f64).sqrt();
    let mut dq = Matrix::zeros(tokens, cfg.hidden);
    let mut dk = Matrix::zeros(tokens, cfg.hidden);
    let mut dv = Matrix::zeros(tokens, cfg.hidden);
    for (h, p) in t.probs.iter().enumerate() {
        let cols = h * dh..(h + 1) * dh;
        for i in 0..tokens {
            let da_i = &d_attn.row(i)[cols.clone()];
            // dP_ij = dA_i · v_j
            let dp: Vec<f64> = (0..tokens)
                .map(|j| {
                    da_i.iter()
                        .zip(&t.v.row(j)[cols.clone()])
                        .map(|(a, b)| a * b)
                        .sum()
                })
                .collect();
            let p_row = p.row(i);
            let dot: f64 = dp.iter().zip(p_row).map(|(a, b)| a * b).sum();
            for j in 0..tokens {
                // dV_j += P_ij dA_i
                let pij = p_row[j];
                for (c, &da) in cols.clone().zip(da_i) {
                    dv.set(j, c, dv.get(j, c) + pij * da);
                }
                let ds = pij * (dp[j] - dot) * scale;
                if ds == 0.0 {
                    continue;
                }
                for c in cols.clone() {
                    dq.set(i, c, dq.get(i, c) + ds * t.k.get(j, c));
                    dk.set(j, c, dk.get(j, c) + ds * t.q.get(i, c));
                }
            }
        }
    }
    g.wq.add_assign(&t.h1.t_dot(&dq));
    g.wk.add_assign(&t.h1.t_dot(&dk));
    g.wv.add_assign(&t.h1.t_dot(&dv));
    let mut dh1 = dq.dot_t(&b.wq);
    dh1.add_assign(&dk.dot_t(&b.wk));
    dh1.add_assign(&dv.dot_t(&b.wv));
    let mut dx = layer_norm_backward(&dh1, &t.ln1, &b.ln1, &mut g.ln1);
    dx.add_assign(&d_mid);
    dx
}
