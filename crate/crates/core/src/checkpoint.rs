//! Binary model container.
//!
//! Layout, all integers and floats little-endian:
//!
//! ```text
//! "JURE"  u8 version
//! u32 channels  u32 hidden  u32 kernel  u32 n_blocks
//! u64 n_params  f64 × n_params           (declaration order)
//! u32 n_norm    f64 × n_norm (mean)  f64 × n_norm (std)
//! f64 score median  f64 score iqr
//! u32 n_meta    n_meta bytes of UTF-8 provenance text
//! ```

use std::io::Write;
use std::path::Path;

use crate::data::NormStats;
use crate::error::{Error, LoadError, Result};
use crate::model::{JuReNet, NetDims};
use crate::scoring::ScoreStats;

pub const MAGIC: &[u8; 4] = b"JURE";
pub const FORMAT_VERSION: u8 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub net: JuReNet,
    pub norm: NormStats,
    pub score_stats: ScoreStats,
    /// Free-form provenance: resolved configuration and tool version.
    pub metadata: String,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let dims = self.net.dims();
        let params = self.net.flat_parameters();
        let mut out = Vec::with_capacity(64 + 8 * (params.len() + 2 * self.norm.channels()));
        out.extend_from_slice(MAGIC);
        out.push(FORMAT_VERSION);
        for d in [dims.channels, dims.hidden, dims.kernel, dims.n_blocks] {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        out.extend_from_slice(&(params.len() as u64).to_le_bytes());
        params
            .iter()
            .for_each(|v| out.extend_from_slice(&v.to_le_bytes()));
        out.extend_from_slice(&(self.norm.channels() as u32).to_le_bytes());
        for v in self.norm.mean.iter().chain(&self.norm.std) {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&self.score_stats.median.to_le_bytes());
        out.extend_from_slice(&self.score_stats.iqr.to_le_bytes());
        out.extend_from_slice(&(self.metadata.len() as u32).to_le_bytes());
        out.extend_from_slice(self.metadata.as_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, LoadError> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(LoadError::BadMagic);
        }
        let version = r.take(1)?[0];
        if version != FORMAT_VERSION {
            return Err(LoadError::Version {
                found: version,
                expected: FORMAT_VERSION,
            });
        }
        let c = r.u32()? as usize;
        let h = r.u32()? as usize;
        let k = r.u32()? as usize;
        let n_blocks = r.u32()? as usize;
        let dims = NetDims::new(c, h, k, n_blocks);
        dims.validate()
            .map_err(|e| LoadError::Malformed(format!("dimension header: {e}")))?;
        let declared = r.u64()?;
        let expected = dims.parameter_count();
        if declared != expected as u64 {
            return Err(LoadError::PayloadLength {
                declared: declared as usize,
                actual: expected,
            });
        }
        let params = r.f64s(expected)?;
        let n_norm = r.u32()? as usize;
        if n_norm != c {
            return Err(LoadError::Malformed(format!(
                "normalization covers {n_norm} channels, network has {c}"
            )));
        }
        let mean = r.f64s(n_norm)?;
        let std = r.f64s(n_norm)?;
        let median = r.f64()?;
        let iqr = r.f64()?;
        let n_meta = r.u32()? as usize;
        let metadata = String::from_utf8(r.take(n_meta)?.to_vec())
            .map_err(|_| LoadError::Malformed("provenance text is not UTF-8".into()))?;
        if r.pos != bytes.len() {
            return Err(LoadError::Malformed(format!(
                "{} trailing bytes after the payload",
                bytes.len() - r.pos
            )));
        }
        let mut net = JuReNet::init(dims, 0).map_err(|e| LoadError::Malformed(e.to_string()))?;
        net.set_flat_parameters(&params)
            .map_err(|e| LoadError::Malformed(e.to_string()))?;
        Ok(Checkpoint {
            net,
            norm: NormStats { mean, std },
            score_stats: ScoreStats { median, iqr },
            metadata,
        })
    }

    /// Writes to a sibling temporary file and renames it into place, so a
    /// failed save never leaves a partial checkpoint at `path`.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let tmp = path.with_extension("partial");
        let write = || -> std::io::Result<()> {
            let mut f = std::fs::File::create(&tmp)?;
            f.write_all(&self.to_bytes())?;
            f.sync_all()?;
            std::fs::rename(&tmp, path)
        };
        write().map_err(|e| {
            let _ = std::fs::remove_file(&tmp);
            Error::io(path, e)
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Ok(Self::from_bytes(&bytes)?)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], LoadError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(LoadError::Truncated {
                needed: self.pos.saturating_add(n),
                found: self.bytes.len(),
            }),
        }
    }

    fn u32(&mut self) -> Result<u32, LoadError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, LoadError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64, LoadError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>, LoadError> {
        let raw = self.take(n.checked_mul(8).ok_or(LoadError::Truncated {
            needed: usize::MAX,
            found: self.bytes.len(),
        })?)?;
        Ok(raw
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
            .collect())
    }
}
