//! LEMB embedding files.
//!
//! Layout, little-endian throughout:
//!
//! ```text
//! b"LEMB" | version: u16 = 1 | dtype: u8 = 1 (f32) | N: u32 | d: u32
//! N*d f32, row-major
//! metadata length: u32 | metadata: UTF-8 JSON
//! ```

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"LEMB";
pub const VERSION: u16 = 1;
pub const DTYPE_F32: u8 = 1;
const HEADER_LEN: usize = 4 + 2 + 1 + 4 + 4;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingMeta {
    pub logo_id: String,
    #[serde(default)]
    pub source_model: String,
    #[serde(default)]
    pub layer_tag: String,
    /// Anything else the writer recorded.
    #[serde(flatten)]
    pub extra: serde_json::Map<String, serde_json::Value>,
}

/// N×d projector outputs for one image, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    pub meta: EmbeddingMeta,
    n: usize,
    d: usize,
    values: Vec<f32>,
}

impl EmbeddingMatrix {
    pub fn new(meta: EmbeddingMeta, n: usize, d: usize, values: Vec<f32>) -> Result<Self> {
        if n == 0 || d == 0 {
            return Err(Error::InvalidArgument(format!("embedding shape {n}x{d} must be non-empty")));
        }
        if values.len() != n * d {
            return Err(Error::LengthMismatch { left: values.len(), right: n * d });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("{} row {} col {}", meta.logo_id, i / d, i % d)));
        }
        Ok(Self { meta, n, d, values })
    }

    pub fn from_rows(logo_id: &str, rows: &[Vec<f32>]) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        if let Some(r) = rows.iter().find(|r| r.len() != d) {
            return Err(Error::DimensionMismatch { expected: d, got: r.len() });
        }
        let meta = EmbeddingMeta { logo_id: logo_id.into(), ..Default::default() };
        Self::new(meta, rows.len(), d, rows.concat())
    }

    pub fn logo_id(&self) -> &str {
        &self.meta.logo_id
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.values[i * self.d..(i + 1) * self.d]
    }

    pub(crate) fn values_mut(&mut self) -> &mut [f32] {
        &mut self.values
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let meta = serde_json::to_vec(&self.meta)?;
        let mut out = Vec::with_capacity(HEADER_LEN + 4 * self.values.len() + 4 + meta.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.push(DTYPE_F32);
        out.extend_from_slice(&(self.n as u32).to_le_bytes());
        out.extend_from_slice(&(self.d as u32).to_le_bytes());
        for v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&(meta.len() as u32).to_le_bytes());
        out.extend_from_slice(&meta);
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8], origin: &Path) -> Result<Self> {
        let bad = |message: String| Error::Embedding { path: origin.to_path_buf(), message };
        if bytes.len() < HEADER_LEN {
            return Err(bad(format!("truncated header ({} bytes)", bytes.len())));
        }
        if &bytes[..4] != MAGIC {
            return Err(bad("bad magic".into()));
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != VERSION {
            return Err(bad(format!("unsupported version {version}")));
        }
        if bytes[6] != DTYPE_F32 {
            return Err(bad(format!("unsupported dtype {}", bytes[6])));
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().expect("4 bytes")) as usize;
        let n = u32_at(7);
        let d = u32_at(11);
        let body = n
            .checked_mul(d)
            .and_then(|c| c.checked_mul(4))
            .ok_or_else(|| bad("shape overflow".into()))?;
        let meta_at = HEADER_LEN + body;
        if bytes.len() < meta_at + 4 {
            return Err(bad(format!("truncated payload for {n}x{d}")));
        }
        let values: Vec<f32> = bytes[HEADER_LEN..meta_at]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        let meta_len = u32_at(meta_at);
        let meta_bytes = bytes
            .get(meta_at + 4..meta_at + 4 + meta_len)
            .ok_or_else(|| bad("truncated metadata".into()))?;
        if bytes.len() != meta_at + 4 + meta_len {
            return Err(bad("trailing bytes after metadata".into()));
        }
        let meta: EmbeddingMeta = serde_json::from_slice(meta_bytes).map_err(|e| bad(format!("metadata: {e}")))?;
        Self::new(meta, n, d, values).map_err(|e| bad(e.to_string()))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut bytes = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes, path)
    }

    /// Write via a temporary file and rename.
    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let tmp = path.with_extension("lemb.tmp");
        let bytes = self.to_bytes()?;
        std::fs::File::create(&tmp)
            .and_then(|mut f| f.write_all(&bytes))
            .map_err(|e| Error::io(&tmp, e))?;
        std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn header_layout() {
        let m = EmbeddingMatrix::from_rows("a", &[vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]]).unwrap();
        let b = m.to_bytes().unwrap();
        assert_eq!(&b[..4], b"LEMB");
        assert_eq!(&b[4..6], &[1, 0]);
        assert_eq!(b[6], 1);
        assert_eq!(&b[7..11], &[3, 0, 0, 0]);
        assert_eq!(&b[11..15], &[2, 0, 0, 0]);
        assert_eq!(&b[15..19], &1.0f32.to_le_bytes());
        assert_eq!(&b[35..39], &6.0f32.to_le_bytes());
        let meta_len = u32::from_le_bytes(b[39..43].try_into().unwrap()) as usize;
        assert_eq!(b.len(), 43 + meta_len);
        let meta: serde_json::Value = serde_json::from_slice(&b[43..]).unwrap();
        assert_eq!(meta["logo_id"], "a");
    }

    #[test]
    fn rejects_corruption() {
        let m = EmbeddingMatrix::from_rows("a", &[vec![1.0]]).unwrap();
        let good = m.to_bytes().unwrap();
        let p = Path::new("x.lemb");
        let mut bad = good.clone();
        bad[0] = b'X';
        assert!(EmbeddingMatrix::from_bytes(&bad, p).is_err());
        let mut bad = good.clone();
        bad[6] = 2;
        assert!(EmbeddingMatrix::from_bytes(&bad, p).is_err());
        assert!(EmbeddingMatrix::from_bytes(&good[..good.len() - 1], p).is_err());
        let mut bad = good.clone();
        bad.push(0);
        assert!(EmbeddingMatrix::from_bytes(&bad, p).is_err());
        let mut bad = good;
        bad[15..19].copy_from_slice(&f32::NAN.to_le_bytes());
        assert!(EmbeddingMatrix::from_bytes(&bad, p).is_err());
    }

    #[test]
    fn extra_metadata_survives() {
        let bytes = {
            let mut meta = EmbeddingMeta { logo_id: "z".into(), source_model: "llava".into(), layer_tag: "proj".into(), ..Default::default() };
            meta.extra.insert("image_sha".into(), "abc".into());
            EmbeddingMatrix::new(meta, 1, 1, vec![0.5]).unwrap().to_bytes().unwrap()
        };
        let m = EmbeddingMatrix::from_bytes(&bytes, Path::new("z")).unwrap();
        assert_eq!(m.meta.extra["image_sha"], "abc");
        assert_eq!(m.meta.layer_tag, "proj");
    }

    proptest! {
        #[test]
        fn round_trip_bit_exact(n in 1usize..6, d in 1usize..9, bits in proptest::collection::vec(any::<u32>(), 48)) {
            let values: Vec<f32> = (0..n * d)
                .map(|i| f32::from_bits(bits[i % bits.len()]))
                .map(|v| if v.is_finite() { v } else { 0.0 })
                .collect();
            let meta = EmbeddingMeta { logo_id: "id".into(), ..Default::default() };
            let m = EmbeddingMatrix::new(meta, n, d, values).unwrap();
            let back = EmbeddingMatrix::from_bytes(&m.to_bytes().unwrap(), Path::new("p")).unwrap();
            prop_assert_eq!(back.n(), n);
            let a: Vec<u32> = back.values().iter().map(|v| v.to_bits()).collect();
            let b: Vec<u32> = m.values().iter().map(|v| v.to_bits()).collect();
            prop_assert_eq!(a, b);
        }
    }
}
