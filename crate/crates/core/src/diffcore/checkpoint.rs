//! Binary parameter container.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic      8 bytes  "SCIRELCK"
//! version    u32
//! precision  u8       element size in bytes (4 = f32, 8 = f64)
//! meta_len   u32, then meta_len bytes of UTF-8 JSON metadata
//! count      u32
//! per tensor:
//!   name_len u32, name bytes
//!   rank     u32, then rank × u64 dims
//!   data     product(dims) × element size, raw IEEE-754 bits
//! ```

use std::io::{Read, Write};

use super::{Scalar, Tensor, TensorError};

pub const CHECKPOINT_VERSION: u32 = 1;
const MAGIC: &[u8; 8] = b"SCIRELCK";

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint<F> {
    pub metadata: serde_json::Value,
    pub tensors: Vec<(String, Tensor<F>)>,
}

impl<F: Scalar> Checkpoint<F> {
    pub fn tensor(&self, name: &str) -> Option<&Tensor<F>> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>, TensorError> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.push(F::BYTES as u8);
        let meta = serde_json::to_vec(&self.metadata)
            .map_err(|e| TensorError::Checkpoint(e.to_string()))?;
        push_u32(&mut out, meta.len())?;
        out.extend_from_slice(&meta);
        push_u32(&mut out, self.tensors.len())?;
        for (name, t) in &self.tensors {
            push_u32(&mut out, name.len())?;
            out.extend_from_slice(name.as_bytes());
            push_u32(&mut out, t.shape().len())?;
            for &d in t.shape() {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for &v in t.data() {
                v.write_le(&mut out);
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, TensorError> {
        let mut r = Cursor { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(bad("not a checkpoint file"));
        }
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(bad(format!("unsupported version {version}")));
        }
        let precision = r.take(1)?[0] as usize;
        if precision != F::BYTES {
            return Err(bad(format!(
                "stored with {precision}-byte floats, expected {} ({})",
                F::BYTES,
                F::NAME
            )));
        }
        let meta_len = r.u32()? as usize;
        let metadata = serde_json::from_slice(r.take(meta_len)?).map_err(|e| bad(e.to_string()))?;
        let count = r.u32()? as usize;
        let mut tensors = Vec::with_capacity(count);
        for _ in 0..count {
            let name_len = r.u32()? as usize;
            let name = std::str::from_utf8(r.take(name_len)?)
                .map_err(|e| bad(e.to_string()))?
                .to_owned();
            let rank = r.u32()? as usize;
            let shape = (0..rank)
                .map(|_| r.u64().map(|d| d as usize))
                .collect::<Result<Vec<_>, _>>()?;
            let n: usize = shape.iter().product();
            let raw = r.take(
                n.checked_mul(F::BYTES)
                    .ok_or_else(|| bad("tensor too large"))?,
            )?;
            let data = raw.chunks_exact(F::BYTES).map(F::read_le).collect();
            tensors.push((name, Tensor::new(shape, data)?));
        }
        if r.pos != bytes.len() {
            return Err(bad("trailing bytes"));
        }
        Ok(Checkpoint { metadata, tensors })
    }
}

fn bad(msg: impl Into<String>) -> TensorError {
    TensorError::Checkpoint(msg.into())
}

fn push_u32(out: &mut Vec<u8>, v: usize) -> Result<(), TensorError> {
    let v = u32::try_from(v).map_err(|_| bad("length exceeds u32"))?;
    out.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], TensorError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| bad("truncated checkpoint"))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, TensorError> {
        Ok(u32::from_le_bytes(
            self.take(4)?.try_into().expect("4 bytes"),
        ))
    }

    fn u64(&mut self) -> Result<u64, TensorError> {
        Ok(u64::from_le_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }
}

/// Element size in bytes recorded in a checkpoint header, read without
/// decoding the rest.
pub fn stored_precision(bytes: &[u8]) -> Result<usize, TensorError> {
    if bytes.len() < 13 || &bytes[..8] != MAGIC {
        return Err(bad("not a checkpoint file"));
    }
    Ok(bytes[12] as usize)
}

pub fn write_checkpoint<F: Scalar, W: Write>(
    ckpt: &Checkpoint<F>,
    mut writer: W,
) -> Result<(), TensorError> {
    writer.write_all(&ckpt.to_bytes()?)?;
    Ok(())
}

pub fn read_checkpoint<F: Scalar, R: Read>(mut reader: R) -> Result<Checkpoint<F>, TensorError> {
    let mut bytes = Vec::new();
    reader.read_to_end(&mut bytes)?;
    Checkpoint::from_bytes(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn round_trip_is_bit_exact(values in prop::collection::vec(any::<f32>(), 1..40), rows in 1usize..4) {
            let n = values.len() / rows * rows;
            prop_assume!(n > 0);
            let t = Tensor::new(vec![rows, n / rows], values[..n].to_vec()).unwrap();
            let ckpt = Checkpoint {
                metadata: serde_json::json!({"k": 1}),
                tensors: vec![("a".to_owned(), t.clone()), ("b".to_owned(), Tensor::vector(vec![1.5f32]))],
            };
            let bytes = ckpt.to_bytes().unwrap();
            let back = Checkpoint::<f32>::from_bytes(&bytes).unwrap();
            let orig_bits: Vec<u32> = t.data().iter().map(|v| v.to_bits()).collect();
            let back_bits: Vec<u32> = back.tensors[0].1.data().iter().map(|v| v.to_bits()).collect();
            prop_assert_eq!(orig_bits, back_bits);
            prop_assert_eq!(back.to_bytes().unwrap(), bytes);
        }
    }

    #[test]
    fn precision_mismatch_is_rejected() {
        let ckpt = Checkpoint {
            metadata: serde_json::Value::Null,
            tensors: vec![("a".to_owned(), Tensor::vector(vec![1.0f64]))],
        };
        let bytes = ckpt.to_bytes().unwrap();
        assert!(Checkpoint::<f32>::from_bytes(&bytes).is_err());
        assert!(Checkpoint::<f64>::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        assert_eq!(stored_precision(&bytes).unwrap(), 8);
        assert!(stored_precision(b"SCIREL").is_err());
    }
}
