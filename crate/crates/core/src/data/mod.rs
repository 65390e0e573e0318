//! Datasets and image files.

mod cifar;
mod ppm;
mod synth;

pub use cifar::{load_cifar, read_cifar_batch, CifarVariant, CIFAR_PIXELS};
pub use ppm::{decode_ppm, encode_ppm, load_image_ppm, save_image_ppm};
pub use synth::{synth_dataset, DEFAULT_NOISE};

use crate::error::{Error, Result};
use crate::vit::ImageTensor;

#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub image: ImageTensor,
    pub label: usize,
}

/// Images of uniform shape with labels below `classes`.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledDataset {
    name: String,
    classes: usize,
    samples: Vec<Sample>,
}

impl LabeledDataset {
    pub fn new(name: impl Into<String>, classes: usize, samples: Vec<Sample>) -> Result<Self> {
        if let Some(first) = samples.first() {
            let dims = first.image.dims();
            for (i, s) in samples.iter().enumerate() {
                if s.image.dims() != dims {
                    return Err(Error::shape(
                        "LabeledDataset::new",
                        format!("sample 0 {dims:?}"),
                        format!("sample {i} {:?}", s.image.dims()),
                    ));
                }
                if s.label >= classes {
                    return Err(Error::InvalidArgument(format!(
                        "sample {i} has label {} but only {classes} classes",
                        s.label
                    )));
                }
            }
        }
        Ok(LabeledDataset {
            name: name.into(),
            classes,
            samples,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<Sample> {
        self.samples
    }

    /// Image shape of the first sample, if any.
    pub fn dims(&self) -> Option<(usize, usize, usize)> {
        self.samples.first().map(|s| s.image.dims())
    }

    pub fn subset(&self, indices: &[usize]) -> LabeledDataset {
        LabeledDataset {
            name: self.name.clone(),
            classes: self.classes,
            samples: indices.iter().map(|&i| self.samples[i].clone()).collect(),
        }
    }

    /// Splits off the first `n` samples as one dataset and the rest as another.
    pub fn split_at(&self, n: usize) -> (LabeledDataset, LabeledDataset) {
        let n = n.min(self.samples.len());
        let (a, b) = self.samples.split_at(n);
        (
            LabeledDataset {
                name: self.name.clone(),
                classes: self.classes,
                samples: a.to_vec(),
            },
            LabeledDataset {
                name: self.name.clone(),
                classes: self.classes,
                samples: b.to_vec(),
            },
        )
    }

    pub fn label_histogram(&self) -> Vec<usize> {
        let mut h = vec![0; self.classes];
        for s in &self.samples {
            h[s.label] += 1;
        }
        h
    }

    /// Applies [`resize_nearest`] to every image.
    pub fn resized(&self, height: usize, width: usize) -> Result<LabeledDataset> {
        let samples = self
            .samples
            .iter()
            .map(|s| {
                Ok(Sample {
                    image: resize_nearest(&s.image, height, width)?,
                    label: s.label,
                })
            })
            .collect::<Result<_>>()?;
        Ok(LabeledDataset {
            name: self.name.clone(),
            classes: self.classes,
            samples,
        })
    }
}

/// Nearest-neighbour resize: target pixel `(i, j)` copies source
/// `(⌊i·h/h₂⌋, ⌊j·w/w₂⌋)`.
pub fn resize_nearest(x: &ImageTensor, height: usize, width: usize) -> Result<ImageTensor> {
    if height == 0 || width == 0 {
        return Err(Error::InvalidArgument(format!(
            "resize target {height}x{width} must be positive"
        )));
    }
    let (h, w, c) = x.dims();
    let mut out = ImageTensor::zeros(height, width, c);
    for i in 0..height {
        let si = i * h / height;
        for j in 0..width {
            let sj = j * w / width;
            for ch in 0..c {
                out.set(i, j, ch, x.get(si, sj, ch));
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::RngState;

    fn random(h: usize, w: usize, c: usize, seed: u64) -> ImageTensor {
        let mut rng = RngState::new(seed);
        ImageTensor::new(h, w, c, (0..h * w * c).map(|_| rng.uniform()).collect()).unwrap()
    }

    #[test]
    fn resize_identity() {
        let x = random(5, 7, 3, 1);
        assert_eq!(resize_nearest(&x, 5, 7).unwrap(), x);
    }

    #[test]
    fn resize_doubles_pixels() {
        let x = ImageTensor::new(2, 2, 1, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let y = resize_nearest(&x, 4, 4).unwrap();
        let expected = [
            1.0, 1.0, 2.0, 2.0, 1.0, 1.0, 2.0, 2.0, 3.0, 3.0, 4.0, 4.0, 3.0, 3.0, 4.0, 4.0,
        ];
        assert_eq!(y.as_slice(), &expected);
    }

    #[test]
    fn resize_factor_seven() {
        let x = random(32, 32, 3, 2);
        let y = resize_nearest(&x, 224, 224).unwrap();
        for i in 0..32 {
            for j in 0..32 {
                for di in 0..7 {
                    for dj in 0..7 {
                        for ch in 0..3 {
                            assert_eq!(y.get(7 * i + di, 7 * j + dj, ch), x.get(i, j, ch));
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn resize_then_downsample_is_identity() {
        let x = random(6, 4, 2, 3);
        for f in 1..4 {
            let up = resize_nearest(&x, 6 * f, 4 * f).unwrap();
            let mut down = ImageTensor::zeros(6, 4, 2);
            for i in 0..6 {
                for j in 0..4 {
                    for ch in 0..2 {
                        down.set(i, j, ch, up.get(i * f, j * f, ch));
                    }
                }
            }
            assert_eq!(down, x);
        }
    }

    #[test]
    fn dataset_rejects_bad_labels() {
        let s = Sample {
            image: ImageTensor::zeros(2, 2, 1),
            label: 3,
        };
        assert!(LabeledDataset::new("x", 3, vec![s]).is_err());
    }
}
