//! Binary checkpoint format.
//!
//! ```text
//! "WOPN"            4 bytes magic
//! version: u32      currently 1
//! count:   u32      number of layer sizes (N_0 .. N_{d+1})
//! sizes:   u32 × count
//! values:  f64 × param_count, layer order, weights then biases, row-major
//! ```
//! All integers and floats little-endian.

use std::fs;
use std::path::Path;

use super::{param_count, FnnParams};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"WOPN";
pub const CHECKPOINT_VERSION: u32 = 1;

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::Parse {
                offset: self.pos,
                message: format!(
                    "truncated file: need {n} bytes for {what}, {} left",
                    self.bytes.len() - self.pos
                ),
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes(b.try_into().unwrap()))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        let b = self.take(8, what)?;
        Ok(f64::from_le_bytes(b.try_into().unwrap()))
    }
}

impl FnnParams {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out =
            Vec::with_capacity(12 + 4 * self.layer_sizes.len() + 8 * self.data.len());
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.layer_sizes.len() as u32).to_le_bytes());
        for &n in &self.layer_sizes {
            out.extend_from_slice(&(n as u32).to_le_bytes());
        }
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        let magic = r.take(4, "magic")?;
        if magic != CHECKPOINT_MAGIC {
            return Err(Error::Parse {
                offset: 0,
                message: format!("bad magic {magic:?}, expected \"WOPN\""),
            });
        }
        let version_at = r.pos;
        let version = r.u32("version")?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Parse {
                offset: version_at,
                message: format!("unsupported checkpoint version {version}"),
            });
        }
        let count_at = r.pos;
        let count = r.u32("layer count")? as usize;
        if count < 3 || count > 4096 {
            return Err(Error::Parse {
                offset: count_at,
                message: format!("implausible layer count {count}"),
            });
        }
        let mut sizes = Vec::with_capacity(count);
        for i in 0..count {
            let at = r.pos;
            let n = r.u32("layer size")? as usize;
            if n == 0 {
                return Err(Error::Parse {
                    offset: at,
                    message: format!("layer {i} has zero neurons"),
                });
            }
            sizes.push(n);
        }
        let n_params = param_count(&sizes);
        let mut data = Vec::with_capacity(n_params);
        for _ in 0..n_params {
            let at = r.pos;
            let v = r.f64("parameter")?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    offset: at,
                    message: "non-finite parameter".into(),
                });
            }
            data.push(v);
        }
        if r.pos != bytes.len() {
            return Err(Error::Parse {
                offset: r.pos,
                message: format!("{} trailing bytes", bytes.len() - r.pos),
            });
        }
        FnnParams::from_flat(&sizes, data)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.wopn");
        let p = FnnParams::init(&[3, 4, 4, 1], 5).unwrap();
        p.save(&path).unwrap();
        assert_eq!(FnnParams::load(&path).unwrap(), p);
    }

    #[test]
    fn header_layout() {
        let p = FnnParams::zeros(&[2, 3, 1]).unwrap();
        let b = p.to_bytes();
        assert_eq!(&b[0..4], b"WOPN");
        assert_eq!(u32::from_le_bytes(b[4..8].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(b[8..12].try_into().unwrap()), 3);
        assert_eq!(b.len(), 12 + 3 * 4 + 8 * p.param_count());
    }

    #[test]
    fn corrupted_magic() {
        let mut b = FnnParams::zeros(&[2, 3, 1]).unwrap().to_bytes();
        b[1] = b'X';
        assert!(matches!(
            FnnParams::from_bytes(&b),
            Err(Error::Parse { offset: 0, .. })
        ));
    }

    #[test]
    fn truncated_reports_offset() {
        let b = FnnParams::init(&[2, 3, 1], 1).unwrap().to_bytes();
        let cut = &b[..b.len() - 3];
        match FnnParams::from_bytes(cut) {
            Err(Error::Parse { offset, .. }) => assert_eq!(offset, b.len() - 8),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn wrong_width_names_expectation() {
        let p = FnnParams::zeros(&[2, 3, 1]).unwrap();
        let err = p.expect_widths(3, 1, "kernel").unwrap_err().to_string();
        assert!(err.contains("input width 3"), "{err}");
    }

    proptest! {
        #[test]
        fn bytes_round_trip_bit_exact(seed in any::<u64>(), w in 1usize..6, d in 1usize..4) {
            let sizes = super::super::layer_sizes(2, w, d, 1);
            let p = FnnParams::init(&sizes, seed).unwrap();
            let q = FnnParams::from_bytes(&p.to_bytes()).unwrap();
            prop_assert_eq!(
                p.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                q.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>()
            );
        }
    }
}
