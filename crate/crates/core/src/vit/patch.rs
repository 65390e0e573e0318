use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// `h × w × c` image, channel-last row-major: index `(row·w + col)·c + channel`.
///
/// Plain images hold normalized pixels in `[0, 1]`; encrypted renderings may not.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageTensor {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f64>,
}

impl ImageTensor {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != height * width * channels {
            return Err(Error::shape(
                "ImageTensor::new",
                format!("{height}x{width}x{channels}"),
                format!("{} values", data.len()),
            ));
        }
        Ok(ImageTensor {
            height,
            width,
            channels,
            data,
        })
    }

    pub fn zeros(height: usize, width: usize, channels: usize) -> Self {
        ImageTensor {
            height,
            width,
            channels,
            data: vec![0.0; height * width * channels],
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }

    #[inline]
    pub fn index(&self, row: usize, col: usize, channel: usize) -> usize {
        (row * self.width + col) * self.channels + channel
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize, channel: usize) -> f64 {
        self.data[self.index(row, col, channel)]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, channel: usize, v: f64) {
        let i = self.index(row, col, channel);
        self.data[i] = v;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn max_abs_diff(&self, other: &ImageTensor) -> f64 {
        assert_eq!(self.dims(), other.dims());
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// The `N` flattened `p×p×c` blocks of an image, one per row (`N × L`).
#[derive(Clone, Debug, PartialEq)]
pub struct PatchSequence(pub Matrix);

impl PatchSequence {
    pub fn len(&self) -> usize {
        self.0.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.0.rows() == 0
    }

    pub fn patch_len(&self) -> usize {
        self.0.cols()
    }

    pub fn patch(&self, i: usize) -> &[f64] {
        self.0.row(i)
    }

    pub fn matrix(&self) -> &Matrix {
        &self.0
    }
}

/// Splits `x` into `p×p` blocks, left-to-right then top-to-bottom. Within a
/// block, pixel `(r, col)` channel `ch` lands at `(r·p + col)·c + ch`.
pub fn patchify(x: &ImageTensor, p: usize) -> Result<PatchSequence> {
    let (h, w, c) = x.dims();
    if p == 0 || h % p != 0 || w % p != 0 {
        return Err(Error::shape(
            "patchify",
            format!("image {h}x{w}x{c}"),
            format!("patch {p}"),
        ));
    }
    let (bh, bw) = (h / p, w / p);
    let l = p * p * c;
    let mut out = Matrix::zeros(bh * bw, l);
    for by in 0..bh {
        for bx in 0..bw {
            let row = out.row_mut(by * bw + bx);
            for r in 0..p {
                let src = x.index(by * p + r, bx * p, 0);
                row[r * p * c..(r + 1) * p * c].copy_from_slice(&x.data[src..src + p * c]);
            }
        }
    }
    Ok(PatchSequence(out))
}

/// Inverse of [`patchify`].
pub fn unpatchify(
    patches: &Matrix,
    height: usize,
    width: usize,
    channels: usize,
    p: usize,
) -> Result<ImageTensor> {
    if p == 0 || !height.is_multiple_of(p) || !width.is_multiple_of(p) {
        return Err(Error::shape(
            "unpatchify",
            format!("image {height}x{width}x{channels}"),
            format!("patch {p}"),
        ));
    }
    let (bh, bw) = (height / p, width / p);
    if patches.shape() != (bh * bw, p * p * channels) {
        return Err(Error::shape(
            "unpatchify",
            patches.shape_str(),
            format!("{}x{}", bh * bw, p * p * channels),
        ));
    }
    let mut img = ImageTensor::zeros(height, width, channels);
    for by in 0..bh {
        for bx in 0..bw {
            let row = patches.row(by * bw + bx);
            for r in 0..p {
                let dst = img.index(by * p + r, bx * p, 0);
                img.data[dst..dst + p * channels]
                    .copy_from_slice(&row[r * p * channels..(r + 1) * p * channels]);
            }
        }
    }
    Ok(img)
}
