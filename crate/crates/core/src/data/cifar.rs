//! CIFAR binary batches.
//!
//! A CIFAR-10 record is 1 label byte followed by 3072 pixel bytes (1024 red,
//! 1024 green, 1024 blue, each plane 32×32 row-major). CIFAR-100 records carry
//! two label bytes (coarse, fine); the fine label is used.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::vit::ImageTensor;

use super::{LabeledDataset, Sample};

pub const CIFAR_PIXELS: usize = 32 * 32 * 3;
const SIDE: usize = 32;
const PLANE: usize = SIDE * SIDE;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CifarVariant {
    Cifar10,
    Cifar100,
}

impl CifarVariant {
    pub fn classes(self) -> usize {
        match self {
            CifarVariant::Cifar10 => 10,
            CifarVariant::Cifar100 => 100,
        }
    }

    fn label_bytes(self) -> usize {
        match self {
            CifarVariant::Cifar10 => 1,
            CifarVariant::Cifar100 => 2,
        }
    }

    pub fn record_len(self) -> usize {
        self.label_bytes() + CIFAR_PIXELS
    }

    fn train_files(self) -> &'static [&'static str] {
        match self {
            CifarVariant::Cifar10 => &[
                "data_batch_1.bin",
                "data_batch_2.bin",
                "data_batch_3.bin",
                "data_batch_4.bin",
                "data_batch_5.bin",
            ],
            CifarVariant::Cifar100 => &["train.bin"],
        }
    }

    fn test_file(self) -> &'static str {
        match self {
            CifarVariant::Cifar10 => "test_batch.bin",
            CifarVariant::Cifar100 => "test.bin",
        }
    }

    fn records_per_train_file(self) -> usize {
        match self {
            CifarVariant::Cifar10 => 10_000,
            CifarVariant::Cifar100 => 50_000,
        }
    }
}

fn decode(bytes: &[u8], variant: CifarVariant, path: &Path) -> Result<Vec<Sample>> {
    let rec = variant.record_len();
    if bytes.is_empty() || !bytes.len().is_multiple_of(rec) {
        return Err(Error::Format {
            path: path.into(),
            detail: format!(
                "size {} bytes is not a positive multiple of the {rec}-byte record",
                bytes.len()
            ),
        });
    }
    let classes = variant.classes();
    bytes
        .chunks_exact(rec)
        .enumerate()
        .map(|(i, r)| {
            let label = r[variant.label_bytes() - 1] as usize;
            if label >= classes {
                return Err(Error::Format {
                    path: path.into(),
                    detail: format!("record {i} has label {label} >= {classes}"),
                });
            }
            let px = &r[variant.label_bytes()..];
            let mut data = vec![0.0; CIFAR_PIXELS];
            for p in 0..PLANE {
                for ch in 0..3 {
                    data[p * 3 + ch] = f64::from(px[ch * PLANE + p]) / 255.0;
                }
            }
            Ok(Sample {
                image: ImageTensor::new(SIDE, SIDE, 3, data)?,
                label,
            })
        })
        .collect()
}

/// Decodes one batch file of any record count.
pub fn read_cifar_batch(path: impl AsRef<Path>, variant: CifarVariant) -> Result<Vec<Sample>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes, variant, path)
}

fn read_exact_batch(path: &Path, variant: CifarVariant, records: usize) -> Result<Vec<Sample>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let expected = records * variant.record_len();
    if bytes.len() != expected {
        return Err(Error::Format {
            path: path.into(),
            detail: format!("expected {expected} bytes, found {}", bytes.len()),
        });
    }
    decode(&bytes, variant, path)
}

/// Loads the standard train/test split from `dir` (50000 / 10000 images,
/// pixels scaled to `[0, 1]`). Any file of the wrong size fails the whole load.
pub fn load_cifar(
    dir: impl AsRef<Path>,
    variant: CifarVariant,
) -> Result<(LabeledDataset, LabeledDataset)> {
    let dir = dir.as_ref();
    let name = match variant {
        CifarVariant::Cifar10 => "cifar10",
        CifarVariant::Cifar100 => "cifar100",
    };
    let mut train = Vec::with_capacity(50_000);
    for f in variant.train_files() {
        train.extend(read_exact_batch(
            &dir.join(f),
            variant,
            variant.records_per_train_file(),
        )?);
    }
    let test = read_exact_batch(&dir.join(variant.test_file()), variant, 10_000)?;
    Ok((
        LabeledDataset::new(format!("{name}-train"), variant.classes(), train)?,
        LabeledDataset::new(format!("{name}-test"), variant.classes(), test)?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(variant: CifarVariant, label: u8, fill: impl Fn(usize) -> u8) -> Vec<u8> {
        let mut r = Vec::with_capacity(variant.record_len());
        if variant == CifarVariant::Cifar100 {
            r.push(label / 5);
        }
        r.push(label);
        r.extend((0..CIFAR_PIXELS).map(fill));
        r
    }

    #[test]
    fn decodes_planted_record() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("b.bin");
        let mut bytes = record(CifarVariant::Cifar10, 7, |i| match i / PLANE {
            0 => 255,
            1 => 0,
            _ => (i % 256) as u8,
        });
        bytes.extend(record(CifarVariant::Cifar10, 2, |_| 51));
        fs::write(&path, &bytes).unwrap();

        let s = read_cifar_batch(&path, CifarVariant::Cifar10).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s[0].label, 7);
        let img = &s[0].image;
        assert_eq!(img.dims(), (32, 32, 3));
        assert_eq!(img.get(0, 0, 0), 1.0);
        assert_eq!(img.get(5, 9, 1), 0.0);
        // blue plane byte index 2048 + 1*32 + 3 = 2083 → 2083 % 256 = 35
        assert_eq!(img.get(1, 3, 2), 35.0 / 255.0);
        assert_eq!(s[1].label, 2);
        assert_eq!(s[1].image.get(31, 31, 2), 0.2);
    }

    #[test]
    fn cifar100_uses_fine_label() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.bin");
        fs::write(&path, record(CifarVariant::Cifar100, 87, |_| 0)).unwrap();
        let s = read_cifar_batch(&path, CifarVariant::Cifar100).unwrap();
        assert_eq!(s[0].label, 87);
    }

    #[test]
    fn truncated_file_is_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.bin");
        let bytes = record(CifarVariant::Cifar10, 1, |_| 0);
        fs::write(&path, &bytes[..1000]).unwrap();
        assert!(matches!(
            read_cifar_batch(&path, CifarVariant::Cifar10),
            Err(Error::Format { .. })
        ));
    }

    #[test]
    fn load_reports_expected_size() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(
            dir.path().join("data_batch_1.bin"),
            record(CifarVariant::Cifar10, 0, |_| 0),
        )
        .unwrap();
        let err = load_cifar(dir.path(), CifarVariant::Cifar10).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("30730000") && msg.contains("3073"), "{msg}");
    }

    /// Runs against a real CIFAR-10 directory when `CIFAR10_DIR` is set.
    #[test]
    #[ignore]
    fn real_cifar10() {
        let dir = std::env::var("CIFAR10_DIR").expect("CIFAR10_DIR");
        let (train, test) = load_cifar(dir, CifarVariant::Cifar10).unwrap();
        assert_eq!(train.len(), 50_000);
        assert_eq!(test.len(), 10_000);
        assert_eq!(train.label_histogram(), vec![5000; 10]);
    }
}
