use std::path::Path;

use sha2::{Digest, Sha256};

use crate::autodiff::{ParamStore, Tensor};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"CDCK";
pub const CHECKPOINT_VERSION: u32 = 1;

/// A model's archived configuration, the id-map hash of the dataset it was
/// trained on, and its parameters in registration order as `f32`.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config: RunConfig,
    pub id_hash: String,
    pub tensors: Vec<(String, Tensor<f32>)>,
}

impl Checkpoint {
    pub fn new<T: Scalar>(config: &RunConfig, id_hash: &str, params: &ParamStore<T>) -> Self {
        Checkpoint {
            config: config.clone(),
            id_hash: id_hash.to_string(),
            tensors: params
                .iter()
                .map(|(_, n, t)| (n.to_string(), t.cast()))
                .collect(),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        put_str(&mut out, self.config.model.as_str());
        put_str(&mut out, &self.config.to_text());
        put_str(&mut out, &self.id_hash);
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for (name, t) in &self.tensors {
            put_str(&mut out, name);
            out.extend_from_slice(&(t.rows() as u64).to_le_bytes());
            out.extend_from_slice(&(t.cols() as u64).to_le_bytes());
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], origin: &Path) -> Result<Self> {
        let mut r = Reader {
            bytes,
            pos: 0,
            origin,
        };
        if r.take(4)? != CHECKPOINT_MAGIC {
            return Err(Error::format(origin, "not a checkpoint (bad magic)"));
        }
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::format(
                origin,
                format!("unsupported checkpoint version {version}"),
            ));
        }
        let kind = r.string()?;
        let config = RunConfig::parse(&r.string()?)?;
        if config.model.as_str() != kind {
            return Err(Error::format(
                origin,
                format!("model kind {kind} disagrees with archived config"),
            ));
        }
        let id_hash = r.string()?;
        let n = r.u32()? as usize;
        let mut tensors = Vec::with_capacity(n);
        for _ in 0..n {
            let name = r.string()?;
            let rows = r.u64()? as usize;
            let cols = r.u64()? as usize;
            let len = rows
                .checked_mul(cols)
                .filter(|l| l.checked_mul(4).is_some_and(|b| b <= bytes.len()))
                .ok_or_else(|| Error::format(origin, format!("tensor {name} is too large")))?;
            let raw = r.take(len * 4)?;
            let data = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect();
            tensors.push((name, Tensor::from_vec(rows, cols, data)?));
        }
        if r.pos != bytes.len() {
            return Err(Error::format(
                origin,
                "trailing bytes after the last tensor",
            ));
        }
        Ok(Checkpoint {
            config,
            id_hash,
            tensors,
        })
    }

    /// Hex SHA-256 of the serialised checkpoint.
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.to_bytes()))
    }

    pub fn check_dataset(&self, id_hash: &str) -> Result<()> {
        if self.id_hash != id_hash {
            return Err(Error::Checkpoint(format!(
                "checkpoint was trained on dataset {} but the loaded dataset hashes to {}; refusing to load",
                self.id_hash, id_hash
            )));
        }
        Ok(())
    }

    /// Copies the stored values into a freshly built model's parameters.
    /// Names and shapes must match one to one.
    pub fn restore<T: Scalar>(&self, params: &mut ParamStore<T>) -> Result<()> {
        if params.len() != self.tensors.len() {
            return Err(Error::Checkpoint(format!(
                "checkpoint has {} tensors, model has {}",
                self.tensors.len(),
                params.len()
            )));
        }
        let ids: Vec<_> = params.ids().collect();
        for (id, (name, t)) in ids.into_iter().zip(&self.tensors) {
            if params.name(id) != name || params.get(id).shape() != t.shape() {
                return Err(Error::Checkpoint(format!(
                    "parameter {} {:?} does not match stored {name} {:?}",
                    params.name(id),
                    params.get(id).shape(),
                    t.shape()
                )));
            }
            *params.get_mut(id) = t.cast();
        }
        Ok(())
    }
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u32).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    origin: &'a Path,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::format(self.origin, "truncated checkpoint"))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        let raw = self.take(n)?;
        String::from_utf8(raw.to_vec())
            .map_err(|_| Error::format(self.origin, "string is not UTF-8"))
    }
}

pub fn save_checkpoint(path: impl AsRef<Path>, checkpoint: &Checkpoint) -> Result<()> {
    std::fs::write(path, checkpoint.to_bytes())?;
    Ok(())
}

/// Reads a checkpoint and refuses it unless it was trained on a dataset
/// whose id map hashes to `id_hash`.
pub fn load_checkpoint(path: impl AsRef<Path>, id_hash: &str) -> Result<Checkpoint> {
    let path = path.as_ref();
    let ck = Checkpoint::from_bytes(&std::fs::read(path)?, path)?;
    ck.check_dataset(id_hash)?;
    Ok(ck)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Checkpoint {
        let mut store = ParamStore::<f32>::new();
        store.add("a", Tensor::from_rows(&[vec![1.0, -2.5]]).unwrap());
        store.add("b", Tensor::zeros(3, 1));
        Checkpoint::new(&RunConfig::default(), "abc", &store)
    }

    #[test]
    fn round_trip() {
        let ck = sample();
        let back = Checkpoint::from_bytes(&ck.to_bytes(), Path::new("x")).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.digest(), ck.digest());
    }

    #[test]
    fn hash_mismatch_is_refused() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.ckpt");
        save_checkpoint(&p, &sample()).unwrap();
        assert!(load_checkpoint(&p, "abc").is_ok());
        let err = load_checkpoint(&p, "other").unwrap_err();
        assert!(matches!(err, Error::Checkpoint(_)));
    }

    #[test]
    fn truncation_and_bad_magic_are_format_errors() {
        let bytes = sample().to_bytes();
        for cut in [0, 3, 10, bytes.len() - 1] {
            assert!(matches!(
                Checkpoint::from_bytes(&bytes[..cut], Path::new("x")),
                Err(Error::Format { .. })
            ));
        }
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(Checkpoint::from_bytes(&bad, Path::new("x")).is_err());
    }

    #[test]
    fn restore_checks_names() {
        let ck = sample();
        let mut store = ParamStore::<f64>::new();
        store.add("a", Tensor::zeros(1, 2));
        store.add("b", Tensor::zeros(3, 1));
        ck.restore(&mut store).unwrap();
        assert_eq!(store.get(store.find("a").unwrap()).data(), &[1.0, -2.5]);
        let mut wrong = ParamStore::<f64>::new();
        wrong.add("a", Tensor::zeros(1, 2));
        wrong.add("c", Tensor::zeros(3, 1));
        assert!(ck.restore(&mut wrong).is_err());
    }
}
