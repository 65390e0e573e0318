use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::linalg::RngState;
use crate::vit::ImageTensor;

use super::{LabeledDataset, Sample};

pub const DEFAULT_NOISE: f64 = 0.1;

/// Oriented sinusoidal grating for class `k`: orientation `πk/K`, spatial
/// frequency alternating between 2 and 3 cycles per image.
fn base_pattern(k: usize, classes: usize, h: usize, w: usize, c: usize) -> Vec<f64> {
    let theta = PI * k as f64 / classes as f64;
    let freq = 2.0 + (k % 2) as f64;
    let (sin_t, cos_t) = theta.sin_cos();
    let mut out = Vec::with_capacity(h * w * c);
    for r in 0..h {
        for col in 0..w {
            let u = (r as f64 / h as f64) * cos_t + (col as f64 / w as f64) * sin_t;
            for ch in 0..c {
                let phase = ch as f64 * PI / 3.0;
                out.push(0.5 + 0.35 * (2.0 * PI * freq * u + phase).sin());
            }
        }
    }
    out
}

/// Desk-scale stand-in for CIFAR. Sample `i` has label `i mod K`; its pixels
/// are the class grating plus `N(0, noise²)` per pixel, clipped to `[0, 1]`.
pub fn synth_dataset(
    n_samples: usize,
    n_classes: usize,
    (h, w, c): (usize, usize, usize),
    noise: f64,
    rng: &mut RngState,
) -> Result<LabeledDataset> {
    if n_classes < 2 {
        return Err(Error::InvalidArgument(
            "synthetic data needs >= 2 classes".into(),
        ));
    }
    if h == 0 || w == 0 || c == 0 {
        return Err(Error::InvalidArgument(
            "image dimensions must be positive".into(),
        ));
    }
    if !(noise >= 0.0 && noise.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "noise {noise} must be >= 0"
        )));
    }
    let patterns: Vec<Vec<f64>> = (0..n_classes)
        .map(|k| base_pattern(k, n_classes, h, w, c))
        .collect();
    let samples = (0..n_samples)
        .map(|i| {
            let label = i % n_classes;
            let data = patterns[label]
                .iter()
                .map(|&v| {
                    let v = if noise > 0.0 {
                        v + noise * rng.gaussian()
                    } else {
                        v
                    };
                    v.clamp(0.0, 1.0)
                })
                .collect();
            Ok(Sample {
                image: ImageTensor::new(h, w, c, data)?,
                label,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    LabeledDataset::new("synthetic", n_classes, samples)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noiseless_classes_are_constant() {
        let d = synth_dataset(12, 3, (8, 8, 1), 0.0, &mut RngState::new(0)).unwrap();
        for s in d.samples() {
            assert_eq!(s.image, d.samples()[s.label].image);
        }
        assert_ne!(d.samples()[0].image, d.samples()[1].image);
    }

    #[test]
    fn seeded() {
        let a = synth_dataset(10, 4, (8, 8, 3), 0.1, &mut RngState::new(5)).unwrap();
        let b = synth_dataset(10, 4, (8, 8, 3), 0.1, &mut RngState::new(5)).unwrap();
        assert_eq!(a, b);
        assert!(a.samples().iter().all(|s| s
            .image
            .as_slice()
            .iter()
            .all(|v| (0.0..=1.0).contains(v))));
    }

    /// Nearest-centroid classifier fitted on one draw and scored on another.
    #[test]
    fn nearest_centroid_separates_classes() {
        let dims = (32, 32, 1);
        let train = synth_dataset(300, 3, dims, 0.1, &mut RngState::new(1)).unwrap();
        let test = synth_dataset(300, 3, dims, 0.1, &mut RngState::new(2)).unwrap();
        let n = 32 * 32;
        let mut centroids = vec![vec![0.0; n]; 3];
        for s in train.samples() {
            for (c, v) in centroids[s.label].iter_mut().zip(s.image.as_slice()) {
                *c += v / 100.0;
            }
        }
        let correct = test
            .samples()
            .iter()
            .filter(|s| {
                let dist = |c: &Vec<f64>| -> f64 {
                    c.iter()
                        .zip(s.image.as_slice())
                        .map(|(a, b)| (a - b).powi(2))
                        .sum()
                };
                let best = (0..3)
                    .min_by(|&a, &b| dist(&centroids[a]).total_cmp(&dist(&centroids[b])))
                    .unwrap();
                best == s.label
            })
            .count();
        assert!(
            correct as f64 / 300.0 >= 0.95,
            "accuracy {}",
            correct as f64 / 300.0
        );
    }
}
