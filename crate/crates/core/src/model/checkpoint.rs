//! Binary checkpoint format.
//!
//! ```text
//! "CFG1"                      magic
//! u32 version                 (currently 1)
//! u32 d, u32 V, u32 l_chunk
//! u8  ablation flags          bit 0 memory, bit 1 key extraction, bit 2 comparative
//! u32 tensor count
//! per tensor, in storage order:
//!   u16 name length, name bytes (UTF-8)
//!   u32 rows, u32 cols
//!   per row: u32 length, then `length` f64 values
//! ```
//!
//! All integers and floats are little-endian.

use std::path::Path;

use super::params::tensor_layout;
use super::{AblationFlags, ModelError, ModelParams, Tensor, TENSOR_COUNT};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"CFG1";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Parameters plus the run settings needed to use them.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: ModelParams,
    pub l_chunk: usize,
    pub flags: AblationFlags,
}

fn u32_of(n: usize, what: &str) -> Result<u32, ModelError> {
    u32::try_from(n).map_err(|_| ModelError::Checkpoint(format!("{what} too large: {n}")))
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Result<Vec<u8>, ModelError> {
        let p = &self.params;
        let mut out = Vec::with_capacity(p.parameter_count() * 8 + 256);
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&u32_of(p.d(), "d")?.to_le_bytes());
        out.extend_from_slice(&u32_of(p.vocab_size(), "V")?.to_le_bytes());
        out.extend_from_slice(&u32_of(self.l_chunk, "l_chunk")?.to_le_bytes());
        out.push(self.flags.to_bits());
        out.extend_from_slice(&(TENSOR_COUNT as u32).to_le_bytes());
        for (name, t) in p.tensors() {
            out.extend_from_slice(&(name.len() as u16).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&u32_of(t.rows(), "rows")?.to_le_bytes());
            out.extend_from_slice(&u32_of(t.cols(), "cols")?.to_le_bytes());
            for r in 0..t.rows() {
                let row = t.row(r);
                out.extend_from_slice(&(row.len() as u32).to_le_bytes());
                for v in row {
                    out.extend_from_slice(&v.to_le_bytes());
                }
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ModelError> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != CHECKPOINT_MAGIC {
            return Err(ModelError::Checkpoint("bad magic".into()));
        }
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(ModelError::Checkpoint(format!(
                "unsupported version {version}"
            )));
        }
        let d = r.u32()? as usize;
        let vocab = r.u32()? as usize;
        let l_chunk = r.u32()? as usize;
        let flags = AblationFlags::from_bits(r.take(1)?[0])
            .ok_or_else(|| ModelError::Checkpoint("unknown flag bits".into()))?;
        if d == 0 || l_chunk == 0 {
            return Err(ModelError::Checkpoint(
                "d and l_chunk must be positive".into(),
            ));
        }
        let count = r.u32()? as usize;
        if count != TENSOR_COUNT {
            return Err(ModelError::Checkpoint(format!(
                "expected {TENSOR_COUNT} tensors, found {count}"
            )));
        }

        let mut tensors = Vec::with_capacity(TENSOR_COUNT);
        for (name, (rows, cols)) in tensor_layout(d, vocab) {
            let len = u16::from_le_bytes(r.take(2)?.try_into().unwrap()) as usize;
            let found = r.take(len)?;
            if found != name.as_bytes() {
                return Err(ModelError::Checkpoint(format!(
                    "expected tensor {name}, found {:?}",
                    String::from_utf8_lossy(found)
                )));
            }
            let (fr, fc) = (r.u32()? as usize, r.u32()? as usize);
            if (fr, fc) != (rows, cols) {
                return Err(ModelError::Checkpoint(format!(
                    "{name}: header implies {rows}x{cols}, file has {fr}x{fc}"
                )));
            }
            let mut data = Vec::with_capacity(rows * cols);
            for row in 0..rows {
                let n = r.u32()? as usize;
                if n != cols {
                    return Err(ModelError::Checkpoint(format!(
                        "{name}: row {row} has length {n}, expected {cols}"
                    )));
                }
                for _ in 0..n {
                    data.push(f64::from_le_bytes(r.take(8)?.try_into().unwrap()));
                }
            }
            tensors.push(Tensor::from_vec(rows, cols, data));
        }
        if r.pos != bytes.len() {
            return Err(ModelError::Checkpoint("trailing bytes".into()));
        }
        let params = ModelParams::from_tensors(d, vocab, tensors)?;
        params.validate()?;
        Ok(Self {
            params,
            l_chunk,
            flags,
        })
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        let bytes = std::fs::read(path)
            .map_err(|e| ModelError::Checkpoint(format!("{}: {e}", path.display())))?;
        Self::from_bytes(&bytes)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], ModelError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| ModelError::Checkpoint("truncated file".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, ModelError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ckpt(seed: u64) -> Checkpoint {
        Checkpoint {
            params: ModelParams::init(3, 9, seed),
            l_chunk: 16,
            flags: AblationFlags {
                disable_memory: true,
                disable_key_extraction: false,
                disable_comparative: true,
            },
        }
    }

    #[test]
    fn header_layout() {
        let bytes = ckpt(1).to_bytes().unwrap();
        assert_eq!(&bytes[..4], b"CFG1");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 3);
        assert_eq!(u32::from_le_bytes(bytes[12..16].try_into().unwrap()), 9);
        assert_eq!(u32::from_le_bytes(bytes[16..20].try_into().unwrap()), 16);
        assert_eq!(bytes[20], 0b101);
        assert_eq!(u32::from_le_bytes(bytes[21..25].try_into().unwrap()), 17);
        assert_eq!(&bytes[25..27], &9u16.to_le_bytes());
        assert_eq!(&bytes[27..36], b"embedding");
    }

    #[test]
    fn rejects_corruption() {
        let good = ckpt(2).to_bytes().unwrap();
        let mut bad_magic = good.clone();
        bad_magic[0] = b'X';
        assert!(Checkpoint::from_bytes(&bad_magic).is_err());
        assert!(Checkpoint::from_bytes(&good[..good.len() - 1]).is_err());
        let mut extra = good.clone();
        extra.push(0);
        assert!(Checkpoint::from_bytes(&extra).is_err());
        // Header claims V=10 while tensors were written for V=9.
        let mut wrong_vocab = good.clone();
        wrong_vocab[12..16].copy_from_slice(&10u32.to_le_bytes());
        let err = Checkpoint::from_bytes(&wrong_vocab).unwrap_err();
        assert!(err.to_string().contains("embedding"), "{err}");
        let mut bad_version = good;
        bad_version[4] = 2;
        assert!(Checkpoint::from_bytes(&bad_version).is_err());
    }

    proptest! {
        #[test]
        fn round_trip_is_exact(seed in 0u64..1000, d in 1usize..5, v in 7usize..12, bits in 0u8..8) {
            let mut params = ModelParams::init(d, v, seed);
            params.b_o.data_mut()[0] = -0.0;
            let c = Checkpoint { params, l_chunk: 1 + seed as usize % 7, flags: AblationFlags::from_bits(bits).unwrap() };
            let bytes = c.to_bytes().unwrap();
            let back = Checkpoint::from_bytes(&bytes).unwrap();
            prop_assert_eq!(back.to_bytes().unwrap(), bytes);
            prop_assert_eq!(back, c);
        }
    }
}
