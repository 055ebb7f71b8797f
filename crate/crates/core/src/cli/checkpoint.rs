//! Binary parameter files.
//!
//! Layout: `SQF1`, entry count (u64), then per entry the name length and
//! UTF-8 name, the rank, the extents and the values, all little-endian
//! (u64 for integers, IEEE-754 f64 for values); finally the length of a
//! UTF-8 JSON metadata block and the block itself.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::Parameterized;
use crate::numerics::Tensor;

const MAGIC: &[u8; 4] = b"SQF1";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub format_version: u32,
    /// `am` or `rnnlm`.
    pub kind: String,
    pub criterion: String,
    pub step: u64,
    pub epoch: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub params: Vec<(String, Tensor)>,
    pub meta: CheckpointMeta,
}

impl Checkpoint {
    pub fn from_model(model: &impl Parameterized, meta: CheckpointMeta) -> Self {
        Checkpoint {
            params: model
                .named_params()
                .into_iter()
                .map(|(n, t)| (n, t.clone()))
                .collect(),
            meta,
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        put(&mut out, self.params.len() as u64);
        for (name, t) in &self.params {
            put(&mut out, name.len() as u64);
            out.extend_from_slice(name.as_bytes());
            put(&mut out, t.rank() as u64);
            for &d in t.shape() {
                put(&mut out, d as u64);
            }
            for &v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        let meta = serde_json::to_vec(&self.meta)?;
        put(&mut out, meta.len() as u64);
        out.extend_from_slice(&meta);
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::Checkpoint("bad magic bytes".into()));
        }
        let count = r.u64()?;
        let mut params = Vec::new();
        for _ in 0..count {
            let len = r.len()?;
            let name = std::str::from_utf8(r.take(len)?)
                .map_err(|_| Error::Checkpoint("parameter name is not UTF-8".into()))?
                .to_string();
            let rank = r.len()?;
            let shape = (0..rank).map(|_| r.len()).collect::<Result<Vec<_>>>()?;
            let n = shape
                .iter()
                .try_fold(1usize, |a, &d| a.checked_mul(d))
                .filter(|&n| n <= bytes.len() / 8)
                .ok_or_else(|| Error::Checkpoint(format!("implausible shape {shape:?}")))?;
            let mut data = Vec::with_capacity(n);
            for _ in 0..n {
                data.push(f64::from_le_bytes(r.take(8)?.try_into().unwrap()));
            }
            let t = Tensor::new(shape, data).map_err(|e| Error::Checkpoint(e.to_string()))?;
            params.push((name, t));
        }
        let len = r.len()?;
        let meta: CheckpointMeta = serde_json::from_slice(r.take(len)?)
            .map_err(|e| Error::Checkpoint(format!("bad metadata: {e}")))?;
        if r.pos != bytes.len() {
            return Err(Error::Checkpoint("trailing bytes after metadata".into()));
        }
        if meta.format_version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported format version {}",
                meta.format_version
            )));
        }
        Ok(Checkpoint { params, meta })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path)
            .map_err(|e| Error::Checkpoint(format!("cannot read {}: {e}", path.display())))?;
        Checkpoint::from_bytes(&bytes)
    }

    /// Copies the stored values into `model`. The name sets and shapes
    /// must match exactly; otherwise nothing is modified.
    pub fn restore(&self, model: &mut impl Parameterized) -> Result<()> {
        {
            let expected = model.named_params();
            let want: BTreeSet<&str> = expected.iter().map(|(n, _)| n.as_str()).collect();
            let have: BTreeSet<&str> = self.params.iter().map(|(n, _)| n.as_str()).collect();
            let missing: Vec<&str> = want.difference(&have).copied().collect();
            let extra: Vec<&str> = have.difference(&want).copied().collect();
            if !missing.is_empty() || !extra.is_empty() {
                return Err(Error::Checkpoint(format!(
                    "architecture mismatch: missing {missing:?}, extra {extra:?}"
                )));
            }
            for (name, t) in &expected {
                let stored = self.get(name).expect("name checked");
                if stored.shape() != t.shape() {
                    return Err(Error::Checkpoint(format!(
                        "shape mismatch for {name}: checkpoint {:?}, model {:?}",
                        stored.shape(),
                        t.shape()
                    )));
                }
            }
        }
        for (name, t) in model.params_mut() {
            *t = self.get(&name).expect("name checked").clone();
        }
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.params.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }
}

fn put(out: &mut Vec<u8>, v: u64) {
    out.extend_from_slice(&v.to_le_bytes());
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Checkpoint("unexpected end of file".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn len(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?).map_err(|_| Error::Checkpoint("length overflow".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{AcousticModel, AmDims, RecurrentLm};

    fn meta() -> CheckpointMeta {
        CheckpointMeta {
            format_version: FORMAT_VERSION,
            kind: "am".into(),
            criterion: "ce".into(),
            step: 12,
            epoch: 1,
            seed: 3,
        }
    }

    #[test]
    fn round_trip_is_bitwise() {
        let mut am = AcousticModel::new(AmDims::default(), 5).unwrap();
        am.out_b.data_mut()[0] = f64::MIN_POSITIVE / 3.0;
        let ck = Checkpoint::from_model(&am, meta());
        let bytes = ck.to_bytes().unwrap();
        assert_eq!(&bytes[..4], b"SQF1");
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.to_bytes().unwrap(), bytes);
        let mut fresh = AcousticModel::new(AmDims::default(), 99).unwrap();
        back.restore(&mut fresh).unwrap();
        assert_eq!(fresh.flat_params(), am.flat_params());
    }

    #[test]
    fn mismatched_architecture_is_rejected() {
        let am = AcousticModel::new(AmDims::default(), 5).unwrap();
        let ck = Checkpoint::from_model(&am, meta());
        let mut lm = RecurrentLm::new(20, 8, 1);
        let err = ck.restore(&mut lm).unwrap_err();
        assert!(matches!(err, Error::Checkpoint(_)));
        assert!(err.to_string().contains("lm.embed"));

        let mut wider = AcousticModel::new(
            AmDims {
                hidden_dim: 8,
                ..AmDims::default()
            },
            5,
        )
        .unwrap();
        let before = wider.flat_params();
        assert!(ck.restore(&mut wider).is_err());
        assert_eq!(wider.flat_params(), before);
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let am = AcousticModel::new(AmDims::default(), 5).unwrap();
        let bytes = Checkpoint::from_model(&am, meta()).to_bytes().unwrap();
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 3]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(Checkpoint::from_bytes(&bad).is_err());
        let mut longer = bytes;
        longer.push(0);
        assert!(Checkpoint::from_bytes(&longer).is_err());
    }
}
