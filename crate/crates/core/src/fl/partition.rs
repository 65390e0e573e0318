use serde::{Deserialize, Serialize};

use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::linalg::RngState;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PartitionStrategy {
    /// Shuffle, then deal contiguous equal-size slices (sizes differ by at most 1).
    #[default]
    Iid,
    /// Same slice sizes, no shuffle.
    Contiguous,
}

/// Splits `0..n` into `n_clients` disjoint index sets covering every index.
/// Each set is returned in ascending order.
pub fn partition_indices(
    n: usize,
    n_clients: usize,
    strategy: PartitionStrategy,
    rng: &mut RngState,
) -> Result<Vec<Vec<usize>>> {
    if n_clients == 0 {
        return Err(Error::InvalidArgument("n_clients must be >= 1".into()));
    }
    if n_clients > n {
        return Err(Error::InvalidArgument(format!(
            "{n_clients} clients but only {n} samples"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    if strategy == PartitionStrategy::Iid {
        rng.shuffle(&mut order);
    }
    let base = n / n_clients;
    let extra = n % n_clients;
    let mut start = 0;
    Ok((0..n_clients)
        .map(|k| {
            let len = base + usize::from(k < extra);
            let mut slice = order[start..start + len].to_vec();
            start += len;
            slice.sort_unstable();
            slice
        })
        .collect())
}

pub fn partition_dataset(
    dataset: &LabeledDataset,
    n_clients: usize,
    strategy: PartitionStrategy,
    rng: &mut RngState,
) -> Result<Vec<LabeledDataset>> {
    Ok(partition_indices(dataset.len(), n_clients, strategy, rng)?
        .iter()
        .map(|idx| dataset.subset(idx))
        .collect())
}
