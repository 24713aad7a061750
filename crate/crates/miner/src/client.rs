use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use log::{debug, warn};
use serde::de::DeserializeOwned;

use crate::api::{Request, Response, Transport};
use crate::cache::{CachedResponse, CrawlCache};
use crate::error::{MinerError, Result};

/// Exponential backoff for rate limits and server errors.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BackoffPolicy {
    pub base: Duration,
    pub max: Duration,
    pub retries: u32,
}

impl Default for BackoffPolicy {
    fn default() -> Self {
        BackoffPolicy {
            base: Duration::from_secs(1),
            max: Duration::from_secs(120),
            retries: 6,
        }
    }
}

impl BackoffPolicy {
    /// The server's hint when it gave one, else `base * 2^attempt`; capped at `max`.
    pub fn delay(&self, attempt: u32, hint: Option<Duration>) -> Duration {
        hint.unwrap_or_else(|| self.base.saturating_mul(1 << attempt.min(20)))
            .min(self.max)
    }
}

pub trait Sleeper: Send + Sync {
    fn sleep(&self, d: Duration);
}

pub struct ThreadSleeper;

impl Sleeper for ThreadSleeper {
    fn sleep(&self, d: Duration) {
        std::thread::sleep(d);
    }
}

/// Cached, rate-limit aware access to the API. Responses with status 200,
/// 404, 409 and 410 are cached; a warm cache answers without touching the
/// transport.
pub struct Client {
    transport: Box<dyn Transport>,
    cache: Option<CrawlCache>,
    offline: bool,
    backoff: BackoffPolicy,
    sleeper: Box<dyn Sleeper>,
    // Held while a worker waits out a rate limit, so the others queue
    // behind it instead of burning the shared budget.
    gate: Mutex<()>,
    network_calls: AtomicUsize,
}

impl Client {
    pub fn new(transport: impl Transport + 'static) -> Self {
        Client {
            transport: Box::new(transport),
            cache: None,
            offline: false,
            backoff: BackoffPolicy::default(),
            sleeper: Box::new(ThreadSleeper),
            gate: Mutex::new(()),
            network_calls: AtomicUsize::new(0),
        }
    }

    pub fn with_cache(mut self, cache: CrawlCache) -> Self {
        self.cache = Some(cache);
        self
    }

    /// Cache misses become errors instead of requests.
    pub fn offline(mut self, offline: bool) -> Self {
        self.offline = offline;
        self
    }

    pub fn with_backoff(mut self, backoff: BackoffPolicy) -> Self {
        self.backoff = backoff;
        self
    }

    pub fn with_sleeper(mut self, sleeper: impl Sleeper + 'static) -> Self {
        self.sleeper = Box::new(sleeper);
        self
    }

    pub fn network_calls(&self) -> usize {
        self.network_calls.load(Ordering::SeqCst)
    }

    /// Body of a successful response, `None` when the resource is gone or
    /// empty (404, 409, 410).
    pub fn fetch(&self, req: &Request) -> Result<Option<Vec<u8>>> {
        let key = CrawlCache::key(req);
        if let Some(cache) = &self.cache {
            if let Some(hit) = cache.get(&key)? {
                return Ok(interpret(hit));
            }
        }
        if self.offline {
            return Err(MinerError::Offline(req.to_string()));
        }
        let resp = self.send(req)?;
        match resp.status {
            200 | 404 | 409 | 410 => {
                let entry = CachedResponse {
                    status: resp.status,
                    body: resp.body,
                };
                if let Some(cache) = &self.cache {
                    cache.put(&key, &entry)?;
                }
                Ok(interpret(entry))
            }
            401 | 403 => Err(MinerError::Auth {
                status: resp.status,
                path: req.to_string(),
            }),
            status => Err(MinerError::Status {
                status,
                path: req.to_string(),
            }),
        }
    }

    fn send(&self, req: &Request) -> Result<Response> {
        let mut attempt = 0;
        loop {
            drop(self.gate.lock().expect("gate"));
            self.network_calls.fetch_add(1, Ordering::SeqCst);
            debug!("GET {req}");
            let resp = self.transport.get(req)?;
            let Some(hint) = retry_hint(&resp) else {
                return Ok(resp);
            };
            if attempt >= self.backoff.retries {
                return Err(MinerError::RetriesExhausted {
                    status: resp.status,
                    retries: attempt,
                    path: req.to_string(),
                });
            }
            let wait = self.backoff.delay(attempt, hint);
            warn!("HTTP {} on {req}, retrying in {wait:?}", resp.status);
            let _held = self.gate.lock().expect("gate");
            self.sleeper.sleep(wait);
            attempt += 1;
        }
    }

    pub fn json<T: DeserializeOwned>(&self, req: &Request) -> Result<Option<T>> {
        match self.fetch(req)? {
            None => Ok(None),
            Some(body) => {
                serde_json::from_slice(&body)
                    .map(Some)
                    .map_err(|e| MinerError::Malformed {
                        path: req.to_string(),
                        message: e.to_string(),
                    })
            }
        }
    }

    /// Every item of a listing, following `page = 1, 2, ...` until a page
    /// comes back short. A missing listing is empty.
    pub fn paged<T: DeserializeOwned>(&self, req: &Request, per_page: usize) -> Result<Vec<T>> {
        self.paged_with(req, per_page, |page: Vec<T>| page)
    }

    /// Like [`Client::paged`] for listings wrapped in an object, with
    /// `unwrap` pulling the items out of each page.
    pub fn paged_with<P: DeserializeOwned, T>(
        &self,
        req: &Request,
        per_page: usize,
        unwrap: impl Fn(P) -> Vec<T>,
    ) -> Result<Vec<T>> {
        let mut out = Vec::new();
        for page in 1.. {
            let r = req.clone().param("per_page", per_page).param("page", page);
            let Some(body) = self.json::<P>(&r)? else {
                break;
            };
            let items = unwrap(body);
            let n = items.len();
            out.extend(items);
            if n < per_page {
                break;
            }
        }
        Ok(out)
    }
}

fn interpret(entry: CachedResponse) -> Option<Vec<u8>> {
    (entry.status == 200).then_some(entry.body)
}

/// `Some(hint)` when the response should be retried: 429, a 403 that
/// reports an exhausted budget, or a 5xx.
fn retry_hint(resp: &Response) -> Option<Option<Duration>> {
    let retry_after = resp
        .header("retry-after")
        .and_then(|v| v.trim().parse::<u64>().ok())
        .map(Duration::from_secs);
    let exhausted = resp.header("x-ratelimit-remaining") == Some("0");
    let limited =
        resp.status == 429 || (resp.status == 403 && (exhausted || retry_after.is_some()));
    if limited {
        let reset = resp
            .header("x-ratelimit-reset")
            .and_then(|v| v.trim().parse::<u64>().ok())
            .map(|reset| {
                let now = SystemTime::now()
                    .duration_since(UNIX_EPOCH)
                    .map_or(0, |d| d.as_secs());
                Duration::from_secs(reset.saturating_sub(now) + 1)
            });
        return Some(retry_after.or(reset));
    }
    (resp.status >= 500).then_some(retry_after)
}
