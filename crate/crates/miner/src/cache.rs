use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use sha2::{Digest, Sha256};

use crate::api::Request;
use crate::error::Result;

/// A stored response: status and raw body bytes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CachedResponse {
    pub status: u16,
    pub body: Vec<u8>,
}

/// Content-addressed store of raw API responses under a directory. Entries
/// live at `<root>/<k0k1>/<key>`; each file is the status line followed by
/// the body.
#[derive(Debug)]
pub struct CrawlCache {
    root: PathBuf,
    write: Mutex<()>,
}

impl CrawlCache {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        fs::create_dir_all(&root)?;
        Ok(CrawlCache {
            root,
            write: Mutex::new(()),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// SHA-256 over the endpoint, the sorted non-page parameters, the media
    /// type and the page number.
    pub fn key(req: &Request) -> String {
        let mut params: Vec<&(String, String)> =
            req.query.iter().filter(|(k, _)| k != "page").collect();
        params.sort();
        let mut h = Sha256::new();
        h.update(req.path.as_bytes());
        h.update([0]);
        for (k, v) in params {
            h.update(k.as_bytes());
            h.update(b"=");
            h.update(v.as_bytes());
            h.update(b"&");
        }
        h.update([0]);
        h.update(req.accept.as_deref().unwrap_or("").as_bytes());
        h.update([0]);
        h.update(req.get_param("page").unwrap_or("").as_bytes());
        hex::encode(h.finalize())
    }

    fn path_of(&self, key: &str) -> PathBuf {
        self.root.join(&key[..2]).join(key)
    }

    pub fn get(&self, key: &str) -> Result<Option<CachedResponse>> {
        let raw = match fs::read(self.path_of(key)) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(e.into()),
        };
        let split = raw.iter().position(|&b| b == b'\n').unwrap_or(raw.len());
        let status = std::str::from_utf8(&raw[..split])
            .ok()
            .and_then(|s| s.parse().ok());
        // A damaged entry is treated as a miss and refetched.
        Ok(status.map(|status| CachedResponse {
            status,
            body: raw.get(split + 1..).unwrap_or_default().to_vec(),
        }))
    }

    pub fn put(&self, key: &str, entry: &CachedResponse) -> Result<()> {
        let _guard = self.write.lock().expect("cache lock");
        let path = self.path_of(key);
        fs::create_dir_all(path.parent().expect("two levels"))?;
        let tmp = path.with_extension("partial");
        let mut f = fs::File::create(&tmp)?;
        writeln!(f, "{}", entry.status)?;
        f.write_all(&entry.body)?;
        f.sync_all()?;
        fs::rename(tmp, path)?;
        Ok(())
    }

    pub fn entries(&self) -> Result<usize> {
        let mut n = 0;
        for shard in fs::read_dir(&self.root)? {
            let shard = shard?;
            if shard.file_type()?.is_dir() {
                n += fs::read_dir(shard.path())?.count();
            }
        }
        Ok(n)
    }
}
