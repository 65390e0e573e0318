//! `ModelUpdate` wire format.
//!
//! All integers little-endian:
//!
//! ```text
//! u32  frame length (bytes that follow, CRC included)
//! u16  version
//! u32  round
//! u32  client id
//! u8   kind (0 = weights, 1 = gradients)
//! u16  tensor count
//! u32  sample count
//! per tensor:
//!   u16 name length, name bytes (UTF-8)
//!   u8  rank, u32 × rank dims
//!   f64 × prod(dims) row-major data
//! u32  CRC-32 (IEEE) of every preceding byte, length prefix included
//! ```
//!
//! Parameter tensors and counts are the only payload; there is no field that
//! could carry a training sample.

use crc32fast::Hasher;

use crate::error::{Error, Result};
use crate::vit::{ViTConfig, ViTModel};

pub const WIRE_VERSION: u16 = 1;
/// Client id used by the server for broadcast frames.
pub const SERVER_ID: u32 = u32::MAX;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PayloadKind {
    Weights,
    Gradients,
}

impl PayloadKind {
    fn to_byte(self) -> u8 {
        match self {
            PayloadKind::Weights => 0,
            PayloadKind::Gradients => 1,
        }
    }

    fn from_byte(b: u8) -> Result<Self> {
        match b {
            0 => Ok(PayloadKind::Weights),
            1 => Ok(PayloadKind::Gradients),
            other => Err(Error::Wire(format!("unknown payload kind {other}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl NamedTensor {
    pub fn new(name: impl Into<String>, shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::shape(
                "NamedTensor::new",
                format!("{shape:?}"),
                format!("{} values", data.len()),
            ));
        }
        Ok(NamedTensor {
            name: name.into(),
            shape,
            data,
        })
    }

    pub fn scalar(name: impl Into<String>, v: f64) -> Self {
        NamedTensor {
            name: name.into(),
            shape: vec![1],
            data: vec![v],
        }
    }
}

/// Parameters or gradients sent between a client and the server.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelUpdate {
    pub client_id: u32,
    pub round: u32,
    pub kind: PayloadKind,
    pub samples: u32,
    pub tensors: Vec<NamedTensor>,
}

/// Snapshot of a model's tensors in manifest order.
pub fn model_tensors(model: &ViTModel) -> Vec<NamedTensor> {
    model
        .tensors()
        .into_iter()
        .map(|t| NamedTensor {
            name: t.name,
            shape: t.shape,
            data: t.data.to_vec(),
        })
        .collect()
}

pub fn model_from_tensors(config: &ViTConfig, tensors: &[NamedTensor]) -> Result<ViTModel> {
    ViTModel::from_tensors(
        config,
        tensors
            .iter()
            .map(|t| (t.name.as_str(), t.shape.as_slice(), t.data.as_slice())),
    )
}

impl ModelUpdate {
    pub fn from_model(
        client_id: u32,
        round: u32,
        kind: PayloadKind,
        samples: u32,
        model: &ViTModel,
    ) -> Self {
        ModelUpdate {
            client_id,
            round,
            kind,
            samples,
            tensors: model_tensors(model),
        }
    }

    pub fn to_model(&self, config: &ViTConfig) -> Result<ViTModel> {
        model_from_tensors(config, &self.tensors)
    }

    pub fn encoded_len(&self) -> usize {
        let body: usize = self
            .tensors
            .iter()
            .map(|t| 2 + t.name.len() + 1 + 4 * t.shape.len() + 8 * t.data.len())
            .sum();
        4 + 2 + 4 + 4 + 1 + 2 + 4 + body + 4
    }

    pub fn encode(&self) -> Result<Vec<u8>> {
        if self.tensors.len() > u16::MAX as usize {
            return Err(Error::Wire(format!(
                "{} tensors exceed u16",
                self.tensors.len()
            )));
        }
        let total = self.encoded_len();
        let frame_len = u32::try_from(total - 4)
            .map_err(|_| Error::Wire(format!("frame of {total} bytes exceeds u32")))?;
        let mut out = Vec::with_capacity(total);
        out.extend_from_slice(&frame_len.to_le_bytes());
        out.extend_from_slice(&WIRE_VERSION.to_le_bytes());
        out.extend_from_slice(&self.round.to_le_bytes());
        out.extend_from_slice(&self.client_id.to_le_bytes());
        out.push(self.kind.to_byte());
        out.extend_from_slice(&(self.tensors.len() as u16).to_le_bytes());
        out.extend_from_slice(&self.samples.to_le_bytes());
        for t in &self.tensors {
            let name_len = u16::try_from(t.name.len())
                .map_err(|_| Error::Wire(format!("tensor name `{}` too long", t.name)))?;
            let rank = u8::try_from(t.shape.len())
                .map_err(|_| Error::Wire(format!("tensor `{}` rank too large", t.name)))?;
            if t.shape.iter().product::<usize>() != t.data.len() {
                return Err(Error::Wire(format!(
                    "tensor `{}` shape/data mismatch",
                    t.name
                )));
            }
            out.extend_from_slice(&name_len.to_le_bytes());
            out.extend_from_slice(t.name.as_bytes());
            out.push(rank);
            for &d in &t.shape {
                let d = u32::try_from(d)
                    .map_err(|_| Error::Wire(format!("tensor `{}` dim too large", t.name)))?;
                out.extend_from_slice(&d.to_le_bytes());
            }
            for v in &t.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        let crc = crc32(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        debug_assert_eq!(out.len(), total);
        Ok(out)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 8 {
            return Err(Error::Wire(format!(
                "frame of {} bytes is too short",
                bytes.len()
            )));
        }
        let frame_len = u32::from_le_bytes(bytes[..4].try_into().expect("4 bytes")) as usize;
        if frame_len != bytes.len() - 4 {
            return Err(Error::Wire(format!(
                "length prefix says {frame_len} bytes, frame has {}",
                bytes.len() - 4
            )));
        }
        let (payload, crc_bytes) = bytes.split_at(bytes.len() - 4);
        let stored = u32::from_le_bytes(crc_bytes.try_into().expect("4 bytes"));
        let actual = crc32(payload);
        if stored != actual {
            return Err(Error::Wire(format!(
                "CRC mismatch: stored {stored:08x}, computed {actual:08x}"
            )));
        }

        let mut r = Reader {
            buf: &payload[4..],
            pos: 0,
        };
        let version = r.u16()?;
        if version != WIRE_VERSION {
            return Err(Error::Wire(format!("unsupported version {version}")));
        }
        let round = r.u32()?;
        let client_id = r.u32()?;
        let kind = PayloadKind::from_byte(r.u8()?)?;
        let n_tensors = r.u16()? as usize;
        let samples = r.u32()?;
        let mut tensors = Vec::with_capacity(n_tensors);
        for _ in 0..n_tensors {
            let name_len = r.u16()? as usize;
            let name = std::str::from_utf8(r.take(name_len)?)
                .map_err(|_| Error::Wire("tensor name is not UTF-8".into()))?
                .to_owned();
            let rank = r.u8()? as usize;
            let shape = (0..rank)
                .map(|_| r.u32().map(|d| d as usize))
                .collect::<Result<Vec<_>>>()?;
            let count: usize = shape.iter().product();
            let raw = r.take(
                count
                    .checked_mul(8)
                    .ok_or_else(|| Error::Wire("size overflow".into()))?,
            )?;
            let data = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            tensors.push(NamedTensor { name, shape, data });
        }
        if r.pos != r.buf.len() {
            return Err(Error::Wire(format!(
                "{} trailing bytes after last tensor",
                r.buf.len() - r.pos
            )));
        }
        Ok(ModelUpdate {
            client_id,
            round,
            kind,
            samples,
            tensors,
        })
    }
}

fn crc32(bytes: &[u8]) -> u32 {
    let mut h = Hasher::new();
    h.update(bytes);
    h.finalize()
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::Wire("frame truncated".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(
            self.take(2)?.try_into().expect("2 bytes"),
        ))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(
            self.take(4)?.try_into().expect("4 bytes"),
        ))
    }
}
