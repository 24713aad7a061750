//! Binary segment-feature file (`CFEA`).
//!
//! ```text
//! magic   b"CFEA"
//! u32     version (1)
//! u32     n_files
//! u32     n_segments
//! u32     d_in
//! f32 * n_files * n_segments * d_in   row-major payload
//! u32     footer count (= n_files)
//! repeat  u32 byte length + UTF-8 file id, in payload row order
//! ```
//!
//! All integers and floats are little-endian.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use crate::autodiff::Tensor;
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const FEATURE_MAGIC: &[u8; 4] = b"CFEA";
pub const FEATURE_VERSION: u32 = 1;

/// Per-file segment features: `n_segments x d_in` rows for each file.
#[derive(Clone, Debug, PartialEq)]
pub struct SegmentFeatures {
    pub n_segments: usize,
    pub d_in: usize,
    pub file_ids: Vec<String>,
    pub values: Vec<f32>,
}

/// One file's `N_C x d_in` feature map.
#[derive(Clone, Debug, PartialEq)]
pub struct CodeSegmentMatrix<T> {
    pub file: String,
    pub features: Tensor<T>,
}

impl SegmentFeatures {
    pub fn new(n_segments: usize, d_in: usize) -> Self {
        SegmentFeatures {
            n_segments,
            d_in,
            file_ids: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn n_files(&self) -> usize {
        self.file_ids.len()
    }

    pub fn push<T: Scalar>(
        &mut self,
        file_id: impl Into<String>,
        matrix: &Tensor<T>,
    ) -> Result<()> {
        if matrix.shape() != [self.n_segments, self.d_in] {
            return Err(Error::shape(
                "SegmentFeatures::push",
                &[self.n_segments, self.d_in],
                &matrix.shape(),
            ));
        }
        self.file_ids.push(file_id.into());
        self.values
            .extend(matrix.data().iter().map(|v| v.to_f64_lossy() as f32));
        Ok(())
    }

    pub fn file_matrix<T: Scalar>(&self, i: usize) -> Tensor<T> {
        let block = self.n_segments * self.d_in;
        let data = self.values[i * block..(i + 1) * block]
            .iter()
            .map(|&v| T::lit(v as f64))
            .collect();
        Tensor::from_vec(self.n_segments, self.d_in, data).expect("block size")
    }

    pub fn to_map<T: Scalar>(&self) -> BTreeMap<String, CodeSegmentMatrix<T>> {
        self.file_ids
            .iter()
            .enumerate()
            .map(|(i, id)| {
                (
                    id.clone(),
                    CodeSegmentMatrix {
                        file: id.clone(),
                        features: self.file_matrix(i),
                    },
                )
            })
            .collect()
    }

    /// Stacks every dataset file's block in file-index order into one
    /// `(files * n_segments) x d_in` matrix. Files missing from the feature
    /// file get zero rows.
    pub fn aligned<T: Scalar>(&self, dataset: &Dataset) -> Tensor<T> {
        let pos: BTreeMap<&str, usize> = self
            .file_ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.as_str(), i))
            .collect();
        let block = self.n_segments * self.d_in;
        let mut data = vec![T::zero(); dataset.files.len() * block];
        for (f, info) in dataset.files.iter().enumerate() {
            if let Some(&i) = pos.get(info.raw_id.as_str()) {
                for (o, &v) in data[f * block..(f + 1) * block]
                    .iter_mut()
                    .zip(&self.values[i * block..(i + 1) * block])
                {
                    *o = T::lit(v as f64);
                }
            }
        }
        Tensor::from_vec(dataset.files.len() * self.n_segments, self.d_in, data)
            .expect("aligned size")
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(20 + self.values.len() * 4);
        out.extend_from_slice(FEATURE_MAGIC);
        for v in [
            FEATURE_VERSION,
            self.n_files() as u32,
            self.n_segments as u32,
            self.d_in as u32,
        ] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&(self.file_ids.len() as u32).to_le_bytes());
        for id in &self.file_ids {
            out.extend_from_slice(&(id.len() as u32).to_le_bytes());
            out.extend_from_slice(id.as_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], origin: &Path) -> Result<Self> {
        let fail = |m: &str| Error::format(origin, m.to_string());
        let mut cur = Cursor { bytes, pos: 0 };
        if cur.take(4).ok_or_else(|| fail("truncated header"))? != FEATURE_MAGIC {
            return Err(fail("bad magic, expected CFEA"));
        }
        let mut header = [0u32; 4];
        for h in &mut header {
            *h = cur.u32().ok_or_else(|| fail("truncated header"))?;
        }
        let [version, n_files, n_segments, d_in] = header;
        if version != FEATURE_VERSION {
            return Err(fail(&format!("unsupported version {version}")));
        }
        let count = (n_files as usize)
            .checked_mul(n_segments as usize)
            .and_then(|x| x.checked_mul(d_in as usize))
            .ok_or_else(|| fail("header sizes overflow"))?;
        let payload = cur
            .take(
                count
                    .checked_mul(4)
                    .ok_or_else(|| fail("header sizes overflow"))?,
            )
            .ok_or_else(|| fail("payload truncated"))?;
        let values = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        let footer = cur.u32().ok_or_else(|| fail("footer missing"))?;
        if footer != n_files {
            return Err(fail(&format!(
                "footer lists {footer} ids for {n_files} files"
            )));
        }
        let mut file_ids = Vec::with_capacity(n_files as usize);
        for _ in 0..n_files {
            let len = cur.u32().ok_or_else(|| fail("footer truncated"))? as usize;
            let raw = cur.take(len).ok_or_else(|| fail("footer truncated"))?;
            let id = std::str::from_utf8(raw).map_err(|_| fail("footer id is not UTF-8"))?;
            file_ids.push(id.to_string());
        }
        if cur.pos != bytes.len() {
            return Err(fail("trailing bytes after footer"));
        }
        Ok(SegmentFeatures {
            n_segments: n_segments as usize,
            d_in: d_in as usize,
            file_ids,
            values,
        })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::format(path, format!("cannot read: {e}")))?;
        Self::from_bytes(&bytes, path)
    }
}

/// Reads a feature file into one matrix per file id.
pub fn import_segment_features<T: Scalar>(
    path: impl AsRef<Path>,
) -> Result<BTreeMap<String, CodeSegmentMatrix<T>>> {
    Ok(SegmentFeatures::read(path)?.to_map())
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let end = self.pos.checked_add(n)?;
        let out = self.bytes.get(self.pos..end)?;
        self.pos = end;
        Some(out)
    }

    fn u32(&mut self) -> Option<u32> {
        self.take(4)
            .map(|b| u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}
