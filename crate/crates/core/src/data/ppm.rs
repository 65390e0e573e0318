//! 8-bit binary netpbm: `P6` for three channels, `P5` for one.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::vit::ImageTensor;

/// Encodes with values clamped to `[0, 1]` and rounded to the nearest of 256 levels.
pub fn encode_ppm(x: &ImageTensor) -> Result<Vec<u8>> {
    let magic = match x.channels() {
        1 => "P5",
        3 => "P6",
        c => {
            return Err(Error::InvalidArgument(format!(
                "PPM/PGM output needs 1 or 3 channels, image has {c}"
            )))
        }
    };
    let mut out = format!("{magic}\n{} {}\n255\n", x.width(), x.height()).into_bytes();
    out.extend(
        x.as_slice()
            .iter()
            .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8),
    );
    Ok(out)
}

fn next_token<'a>(bytes: &'a [u8], pos: &mut usize) -> Option<&'a [u8]> {
    loop {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < bytes.len() && bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
            continue;
        }
        break;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    (start < *pos).then(|| &bytes[start..*pos])
}

pub fn decode_ppm(bytes: &[u8]) -> Result<ImageTensor> {
    let bad = |detail: String| Error::Parse {
        what: "ppm",
        detail,
    };
    let mut pos = 0;
    let channels = match next_token(bytes, &mut pos) {
        Some(b"P6") => 3,
        Some(b"P5") => 1,
        _ => return Err(bad("expected P5 or P6 magic".into())),
    };
    let mut num = |field: &str| -> Result<usize> {
        let tok = next_token(bytes, &mut pos).ok_or_else(|| bad(format!("missing {field}")))?;
        std::str::from_utf8(tok)
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| bad(format!("bad {field}")))
    };
    let width = num("width")?;
    let height = num("height")?;
    let maxval = num("maxval")?;
    if maxval == 0 || maxval > 255 {
        return Err(bad(format!("unsupported maxval {maxval}")));
    }
    pos += 1;
    let need = width * height * channels;
    let data = bytes
        .get(pos..pos + need)
        .ok_or_else(|| bad(format!("expected {need} pixel bytes")))?;
    let scale = maxval as f64;
    ImageTensor::new(
        height,
        width,
        channels,
        data.iter().map(|&b| f64::from(b) / scale).collect(),
    )
}

pub fn save_image_ppm(x: &ImageTensor, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_ppm(x)?).map_err(|e| Error::io(path, e))
}

pub fn load_image_ppm(path: impl AsRef<Path>) -> Result<ImageTensor> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_ppm(&bytes)
}
