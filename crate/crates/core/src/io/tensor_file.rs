//! `TNSR` container: magic `TNSR`, version byte `0x01`, little-endian `u32`
//! header length, UTF-8 JSON header `{"dtype","shape","order"}`, then raw
//! little-endian element data.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::DenseTensor;

pub const MAGIC: &[u8; 4] = b"TNSR";
pub const VERSION: u8 = 0x01;
const ROW_MAJOR: &str = "row-major";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dtype {
    F32,
    F64,
}

impl Dtype {
    pub fn size(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 => 8,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    dtype: Dtype,
    shape: Vec<usize>,
    order: String,
}

/// Serializes `t`; `F32` narrows each value.
pub fn encode_tensor(t: &DenseTensor, dtype: Dtype) -> Vec<u8> {
    let header = Header { dtype, shape: t.shape().to_vec(), order: ROW_MAJOR.to_string() };
    let json = serde_json::to_vec(&header).expect("header serializes");
    let mut out = Vec::with_capacity(9 + json.len() + t.len() * dtype.size());
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    match dtype {
        Dtype::F64 => t.data().iter().for_each(|v| out.extend_from_slice(&v.to_le_bytes())),
        Dtype::F32 => t.data().iter().for_each(|v| out.extend_from_slice(&(*v as f32).to_le_bytes())),
    }
    out
}

/// Parses a container; `F32` payloads are widened to `f64`.
pub fn decode_tensor(bytes: &[u8]) -> Result<(DenseTensor, Dtype)> {
    let bad = |m: &str| Error::Format(m.to_string());
    if bytes.len() < 9 || &bytes[..4] != MAGIC {
        return Err(bad("missing TNSR magic"));
    }
    if bytes[4] != VERSION {
        return Err(Error::Format(format!("unsupported version {}", bytes[4])));
    }
    let hlen = u32::from_le_bytes(bytes[5..9].try_into().expect("4 bytes")) as usize;
    let body = &bytes[9..];
    if body.len() < hlen {
        return Err(bad("truncated header"));
    }
    let header: Header =
        serde_json::from_slice(&body[..hlen]).map_err(|e| Error::Format(format!("bad header: {e}")))?;
    if header.order != ROW_MAJOR {
        return Err(Error::Format(format!("unsupported element order {:?}", header.order)));
    }
    let n = header
        .shape
        .iter()
        .try_fold(1usize, |a, &d| a.checked_mul(d))
        .ok_or_else(|| bad("shape overflows"))?;
    let payload = &body[hlen..];
    if payload.len() != n * header.dtype.size() {
        return Err(Error::Format(format!(
            "payload has {} bytes, shape {:?} of {:?} needs {}",
            payload.len(),
            header.shape,
            header.dtype,
            n * header.dtype.size()
        )));
    }
    let data: Vec<f64> = match header.dtype {
        Dtype::F64 => payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect(),
        Dtype::F32 => payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
            .collect(),
    };
    let t = DenseTensor::new(header.shape, data).map_err(|e| Error::Format(e.to_string()))?;
    Ok((t, header.dtype))
}

pub fn write_tensor(path: &Path, t: &DenseTensor, dtype: Dtype) -> Result<()> {
    super::write_atomic(path, &encode_tensor(t, dtype))
}

pub fn read_tensor(path: &Path) -> Result<DenseTensor> {
    let bytes = std::fs::read(path)?;
    decode_tensor(&bytes).map(|(t, _)| t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::CounterRng;
    use proptest::prelude::*;

    #[test]
    fn layout_is_fixed() {
        let t = DenseTensor::new(vec![2], vec![1.0, -2.5]).unwrap();
        let b = encode_tensor(&t, Dtype::F64);
        let header = br#"{"dtype":"f64","shape":[2],"order":"row-major"}"#;
        assert_eq!(&b[..5], b"TNSR\x01");
        assert_eq!(u32::from_le_bytes(b[5..9].try_into().unwrap()) as usize, header.len());
        assert_eq!(&b[9..9 + header.len()], header);
        assert_eq!(&b[9 + header.len()..], [1.0f64.to_le_bytes(), (-2.5f64).to_le_bytes()].concat());
    }

    #[test]
    fn f32_roundtrip_widens() {
        let t = DenseTensor::random_normal(vec![3, 4], &mut CounterRng::new(1)).unwrap();
        let (back, dt) = decode_tensor(&encode_tensor(&t, Dtype::F32)).unwrap();
        assert_eq!(dt, Dtype::F32);
        for (a, b) in t.data().iter().zip(back.data()) {
            assert_eq!(*b, *a as f32 as f64);
        }
        // a second pass is bitwise stable
        let (again, _) = decode_tensor(&encode_tensor(&back, Dtype::F32)).unwrap();
        assert_eq!(again, back);
    }

    #[test]
    fn malformed_inputs() {
        let t = DenseTensor::new(vec![2, 2], vec![1.0; 4]).unwrap();
        let good = encode_tensor(&t, Dtype::F64);
        assert!(decode_tensor(b"NOPE\x01\0\0\0\0").is_err());
        let mut v = good.clone();
        v[4] = 2;
        assert!(decode_tensor(&v).is_err());
        assert!(decode_tensor(&good[..good.len() - 1]).is_err());
        let mut extra = good.clone();
        extra.push(0);
        assert!(decode_tensor(&extra).is_err());
        assert!(decode_tensor(&good[..12]).is_err());
    }

    proptest! {
        #[test]
        fn f64_roundtrip_bitwise(shape in proptest::collection::vec(1usize..5, 1..5), seed in any::<u64>()) {
            let t = DenseTensor::random_normal(shape, &mut CounterRng::new(seed)).unwrap();
            let (back, dt) = decode_tensor(&encode_tensor(&t, Dtype::F64)).unwrap();
            prop_assert_eq!(dt, Dtype::F64);
            prop_assert_eq!(back.shape(), t.shape());
            prop_assert!(back.data().iter().zip(t.data()).all(|(a, b)| a.to_bits() == b.to_bits()));
        }
    }
}
