use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::canonical_sum;

use super::wire::{ModelUpdate, NamedTensor, PayloadKind};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Weighting {
    Uniform,
    /// Weighted by each client's sample count.
    #[default]
    Samples,
}

fn check_manifest(updates: &[ModelUpdate], kind: PayloadKind) -> Result<()> {
    let first = updates
        .first()
        .ok_or_else(|| Error::Protocol("no updates to aggregate".into()))?;
    for u in updates {
        if u.kind != kind {
            return Err(Error::Protocol(format!(
                "client {} sent {:?}, expected {kind:?}",
                u.client_id, u.kind
            )));
        }
        if u.round != first.round {
            return Err(Error::Protocol(format!(
                "mixed rounds: {} and {}",
                first.round, u.round
            )));
        }
        if u.samples == 0 {
            return Err(Error::Protocol(format!(
                "client {} reports 0 samples",
                u.client_id
            )));
        }
        check_same_tensors(&first.tensors, &u.tensors)?;
    }
    Ok(())
}

pub(crate) fn check_same_tensors(a: &[NamedTensor], b: &[NamedTensor]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::Protocol(format!(
            "manifest mismatch: {} vs {} tensors",
            a.len(),
            b.len()
        )));
    }
    for (x, y) in a.iter().zip(b) {
        if x.name != y.name || x.shape != y.shape || x.data.len() != y.data.len() {
            return Err(Error::Protocol(format!(
                "manifest mismatch: `{}` {:?} vs `{}` {:?}",
                x.name, x.shape, y.name, y.shape
            )));
        }
    }
    Ok(())
}

fn coefficients(updates: &[ModelUpdate], weighting: Weighting) -> Vec<f64> {
    match weighting {
        Weighting::Uniform => vec![1.0 / updates.len() as f64; updates.len()],
        Weighting::Samples => {
            let total: f64 = updates.iter().map(|u| f64::from(u.samples)).sum();
            updates
                .iter()
                .map(|u| f64::from(u.samples) / total)
                .collect()
        }
    }
}

/// `Σ_k α_k · t_k` per element, summed in canonical order so the result does
/// not depend on the order in which updates arrived.
fn weighted_mean(updates: &[ModelUpdate], alphas: &[f64]) -> Vec<NamedTensor> {
    let mut terms = vec![0.0; updates.len()];
    updates[0]
        .tensors
        .iter()
        .enumerate()
        .map(|(ti, proto)| {
            let data = (0..proto.data.len())
                .map(|e| {
                    for ((t, u), a) in terms.iter_mut().zip(updates).zip(alphas) {
                        *t = u.tensors[ti].data[e] * a;
                    }
                    canonical_sum(&mut terms)
                })
                .collect();
            NamedTensor {
                name: proto.name.clone(),
                shape: proto.shape.clone(),
                data,
            }
        })
        .collect()
}

/// Federated averaging of trained weights.
pub fn fedavg(updates: &[ModelUpdate], weighting: Weighting) -> Result<Vec<NamedTensor>> {
    check_manifest(updates, PayloadKind::Weights)?;
    Ok(weighted_mean(updates, &coefficients(updates, weighting)))
}

/// Federated SGD: `w ← w − lr · mean(gradients)` (uniform mean).
pub fn fedsgd(
    updates: &[ModelUpdate],
    global: &[NamedTensor],
    lr: f64,
) -> Result<Vec<NamedTensor>> {
    check_manifest(updates, PayloadKind::Gradients)?;
    check_same_tensors(global, &updates[0].tensors)?;
    let mean = weighted_mean(updates, &coefficients(updates, Weighting::Uniform));
    Ok(global
        .iter()
        .zip(mean)
        .map(|(w, g)| NamedTensor {
            name: w.name.clone(),
            shape: w.shape.clone(),
            data: w
                .data
                .iter()
                .zip(&g.data)
                .map(|(w, g)| w - lr * g)
                .collect(),
        })
        .collect())
}
