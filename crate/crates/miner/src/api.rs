use std::collections::BTreeMap;
use std::fmt;
use std::time::Duration;

use url::Url;

use crate::error::{MinerError, Result};

pub const DEFAULT_ACCEPT: &str = "application/vnd.github+json";
/// Stargazer listings carry `starred_at` only under this media type.
pub const STAR_ACCEPT: &str = "application/vnd.github.star+json";

/// One GET against the API. `path` is unescaped, e.g. `/repos/o/r/contents/a b.rs`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Request {
    pub path: String,
    pub query: Vec<(String, String)>,
    pub accept: Option<String>,
}

impl Request {
    pub fn new(path: impl Into<String>) -> Self {
        Request {
            path: path.into(),
            query: Vec::new(),
            accept: None,
        }
    }

    pub fn param(mut self, key: &str, value: impl ToString) -> Self {
        self.query.retain(|(k, _)| k != key);
        self.query.push((key.to_string(), value.to_string()));
        self
    }

    pub fn accept(mut self, media: &str) -> Self {
        self.accept = Some(media.to_string());
        self
    }

    pub fn get_param(&self, key: &str) -> Option<&str> {
        self.query
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }
}

impl fmt::Display for Request {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.path)?;
        for (i, (k, v)) in self.query.iter().enumerate() {
            write!(f, "{}{k}={v}", if i == 0 { '?' } else { '&' })?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Response {
    pub status: u16,
    /// Lower-cased header names.
    pub headers: BTreeMap<String, String>,
    pub body: Vec<u8>,
}

impl Response {
    pub fn ok(body: impl Into<Vec<u8>>) -> Self {
        Response {
            status: 200,
            headers: BTreeMap::new(),
            body: body.into(),
        }
    }

    pub fn header(&self, name: &str) -> Option<&str> {
        self.headers.get(name).map(String::as_str)
    }
}

pub trait Transport: Send + Sync {
    fn get(&self, req: &Request) -> Result<Response>;
}

/// Blocking HTTPS client for a GitHub-compatible REST API.
pub struct HttpTransport {
    base: Url,
    token: Option<String>,
    client: reqwest::blocking::Client,
}

impl HttpTransport {
    pub fn new(base_url: &str, token: Option<String>) -> Result<Self> {
        let mut base = Url::parse(base_url)
            .map_err(|e| MinerError::Config(format!("bad API URL {base_url:?}: {e}")))?;
        if base.cannot_be_a_base() {
            return Err(MinerError::Config(format!("bad API URL {base_url:?}")));
        }
        if !base.path().ends_with('/') {
            let p = format!("{}/", base.path());
            base.set_path(&p);
        }
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(60))
            .build()
            .map_err(|e| MinerError::Config(format!("HTTP client: {e}")))?;
        Ok(HttpTransport {
            base,
            token,
            client,
        })
    }

    fn url(&self, req: &Request) -> Url {
        let mut url = self.base.clone();
        {
            let mut segs = url.path_segments_mut().expect("base checked");
            segs.pop_if_empty();
            segs.extend(req.path.split('/').filter(|s| !s.is_empty()));
        }
        if !req.query.is_empty() {
            url.query_pairs_mut().extend_pairs(&req.query);
        }
        url
    }
}

impl Transport for HttpTransport {
    fn get(&self, req: &Request) -> Result<Response> {
        let url = self.url(req);
        let mut rb = self
            .client
            .get(url)
            .header("user-agent", "coderec-miner")
            .header("accept", req.accept.as_deref().unwrap_or(DEFAULT_ACCEPT));
        if let Some(t) = &self.token {
            rb = rb.bearer_auth(t);
        }
        let err = |e: reqwest::Error| MinerError::Transport {
            path: req.to_string(),
            message: e.to_string(),
        };
        let resp = rb.send().map_err(err)?;
        let status = resp.status().as_u16();
        let headers = resp
            .headers()
            .iter()
            .filter_map(|(k, v)| Some((k.as_str().to_string(), v.to_str().ok()?.to_string())))
            .collect();
        let body = resp.bytes().map_err(err)?.to_vec();
        Ok(Response {
            status,
            headers,
            body,
        })
    }
}
