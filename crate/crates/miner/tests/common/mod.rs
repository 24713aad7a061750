//! An in-memory GitHub stand-in, reachable in process or over HTTP.
#![allow(dead_code)]

use std::io::{BufRead, BufReader, Write};
use std::net::TcpListener;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use base64::Engine;
use coderec_miner::{MinerError, Request, Response, Sleeper, Transport, STAR_ACCEPT};
use serde_json::{json, Value};

#[derive(Clone, Debug)]
pub struct FakeCommit {
    pub sha: String,
    /// `(login, id)`; `None` for commits without a linked account.
    pub author: Option<(String, u64)>,
    pub date: String,
    pub files: Vec<String>,
}

#[derive(Clone, Debug)]
pub struct FakeRepo {
    pub full_name: String,
    pub id: u64,
    pub stars: u64,
    pub created_at: String,
    pub topics: Vec<String>,
    pub branch: String,
    /// `(login, type)`.
    pub contributors: Vec<(String, String)>,
    /// `(path, content)`.
    pub files: Vec<(String, String)>,
    /// Newest first, as the API lists them.
    pub commits: Vec<FakeCommit>,
    /// `(login, id, starred_at)`.
    pub stargazers: Vec<(String, u64, String)>,
    pub watchers: Vec<(String, u64)>,
    /// `(login, id, created_at)`.
    pub forks: Vec<(String, u64, String)>,
    pub languages: Vec<(String, u64)>,
    pub truncate_tree: bool,
}

impl FakeRepo {
    pub fn new(full_name: &str, id: u64, stars: u64, topic: &str) -> Self {
        FakeRepo {
            full_name: full_name.into(),
            id,
            stars,
            created_at: "2018-06-01T00:00:00Z".into(),
            topics: vec![topic.into()],
            branch: "main".into(),
            contributors: ["ann", "ben", "cat"]
                .iter()
                .map(|l| (l.to_string(), "User".to_string()))
                .collect(),
            files: vec![("README.md".into(), "# readme".into())],
            commits: vec![
                commit(
                    "late",
                    Some(("ann", 1)),
                    "2019-12-01T00:00:00Z",
                    &["README.md"],
                ),
                commit(
                    "early",
                    Some(("ben", 2)),
                    "2019-01-01T00:00:00Z",
                    &["README.md"],
                ),
            ],
            stargazers: Vec::new(),
            watchers: Vec::new(),
            forks: Vec::new(),
            languages: vec![("Rust".into(), 100)],
            truncate_tree: false,
        }
    }

    fn dirs(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for (p, _) in &self.files {
            let mut cur = p.as_str();
            while let Some(cut) = cur.rfind('/') {
                cur = &cur[..cut];
                if !out.iter().any(|d| d == cur) {
                    out.push(cur.to_string());
                }
            }
        }
        out.sort();
        out
    }

    /// Entries directly under `dir` (`""` for the root).
    fn level(&self, dir: &str) -> Vec<Value> {
        let under = |p: &str| -> Option<String> {
            let rest = if dir.is_empty() {
                p
            } else {
                p.strip_prefix(dir)?.strip_prefix('/')?
            };
            (!rest.contains('/')).then(|| rest.to_string())
        };
        let mut out = Vec::new();
        for d in self.dirs() {
            if let Some(name) = under(&d) {
                out.push(json!({"path": name, "type": "tree", "sha": format!("tree:{}", d.replace('/', "|"))}));
            }
        }
        for (p, c) in &self.files {
            if let Some(name) = under(p) {
                out.push(json!({"path": name, "type": "blob", "sha": format!("blob:{p}"), "size": c.len()}));
            }
        }
        out
    }
}

pub fn commit(sha: &str, author: Option<(&str, u64)>, date: &str, files: &[&str]) -> FakeCommit {
    FakeCommit {
        sha: sha.into(),
        author: author.map(|(l, i)| (l.to_string(), i)),
        date: date.into(),
        files: files.iter().map(|f| f.to_string()).collect(),
    }
}

pub struct FakeGithub {
    pub repos: Vec<FakeRepo>,
    pub token: Option<String>,
    /// The next this many requests get a rate-limit answer.
    pub rate_limit_next: AtomicUsize,
    pub calls: AtomicUsize,
}

impl FakeGithub {
    pub fn new(repos: Vec<FakeRepo>) -> Self {
        FakeGithub {
            repos,
            token: None,
            rate_limit_next: AtomicUsize::new(0),
            calls: AtomicUsize::new(0),
        }
    }

    pub fn respond(&self, req: &Request, auth: Option<&str>) -> Response {
        self.calls.fetch_add(1, Ordering::SeqCst);
        if let Some(t) = &self.token {
            if auth != Some(&format!("Bearer {t}")) {
                return status(401, json!({"message": "Bad credentials"}));
            }
        }
        if self
            .rate_limit_next
            .fetch_update(Ordering::SeqCst, Ordering::SeqCst, |n| n.checked_sub(1))
            .is_ok()
        {
            let mut r = status(403, json!({"message": "API rate limit exceeded"}));
            r.headers.insert("x-ratelimit-remaining".into(), "0".into());
            r.headers.insert("retry-after".into(), "1".into());
            return r;
        }
        let segs: Vec<&str> = req.path.split('/').filter(|s| !s.is_empty()).collect();
        match segs.as_slice() {
            ["search", "repositories"] => {
                let q = req.get_param("q").unwrap_or("");
                let topic = q
                    .split_whitespace()
                    .find_map(|t| t.strip_prefix("topic:"))
                    .unwrap_or("");
                let mut hits: Vec<&FakeRepo> = self
                    .repos
                    .iter()
                    .filter(|r| r.topics.iter().any(|t| t == topic))
                    .collect();
                hits.sort_by(|a, b| b.stars.cmp(&a.stars));
                let items: Vec<Value> = hits
                    .iter()
                    .map(|r| {
                        json!({
                            "id": r.id,
                            "full_name": r.full_name,
                            "owner": {"login": r.full_name.split('/').next().unwrap(), "id": 9, "type": "Organization"},
                            "stargazers_count": r.stars,
                            "created_at": r.created_at,
                            "topics": r.topics,
                            "default_branch": r.branch,
                        })
                    })
                    .collect();
                let page = paginate(&items, req);
                ok(json!({"total_count": items.len(), "items": page}))
            }
            ["repos", owner, name, rest @ ..] => {
                let full = format!("{owner}/{name}");
                let Some(repo) = self.repos.iter().find(|r| r.full_name == full) else {
                    return status(404, json!({"message": "Not Found"}));
                };
                self.repo_route(repo, rest, req)
            }
            _ => status(404, json!({"message": "Not Found"})),
        }
    }

    fn repo_route(&self, repo: &FakeRepo, rest: &[&str], req: &Request) -> Response {
        match rest {
            ["contributors"] => {
                let items: Vec<Value> = repo
                    .contributors
                    .iter()
                    .enumerate()
                    .map(|(i, (l, t))| json!({"login": l, "id": 100 + i, "type": t}))
                    .collect();
                ok(Value::Array(paginate(&items, req)))
            }
            ["commits"] => {
                let items: Vec<Value> = repo
                    .commits
                    .iter()
                    .map(|c| {
                        json!({
                            "sha": c.sha,
                            "author": c.author.as_ref().map(|(l, i)| json!({
                                "login": l,
                                "id": i,
                                "type": if l.ends_with("[bot]") { "Bot" } else { "User" },
                            })),
                            "commit": {"author": {"date": c.date}},
                        })
                    })
                    .collect();
                ok(Value::Array(paginate(&items, req)))
            }
            ["commits", sha] => match repo.commits.iter().find(|c| c.sha == *sha) {
                Some(c) => {
                    let files: Vec<Value> = c
                        .files
                        .iter()
                        .map(|f| json!({"filename": f, "status": "modified"}))
                        .collect();
                    ok(json!({"sha": c.sha, "files": paginate(&files, req)}))
                }
                None => status(404, json!({"message": "No commit found"})),
            },
            ["git", "trees", sha] => {
                if *sha == repo.branch && req.get_param("recursive").is_some() {
                    if repo.truncate_tree {
                        return ok(json!({"tree": repo.level("")[..1], "truncated": true}));
                    }
                    let mut items = Vec::new();
                    for d in repo.dirs() {
                        items.push(json!({"path": d, "type": "tree", "sha": format!("tree:{}", d.replace('/', "|"))}));
                    }
                    for (p, c) in &repo.files {
                        items.push(json!({"path": p, "type": "blob", "sha": format!("blob:{p}"), "size": c.len()}));
                    }
                    return ok(json!({"tree": items, "truncated": false}));
                }
                let dir = if *sha == repo.branch {
                    String::new()
                } else if let Some(d) = sha.strip_prefix("tree:") {
                    d.replace('|', "/")
                } else {
                    return status(404, json!({"message": "Not Found"}));
                };
                ok(json!({"tree": repo.level(&dir), "truncated": false}))
            }
            ["languages"] => {
                let m: serde_json::Map<String, Value> = repo
                    .languages
                    .iter()
                    .map(|(l, b)| (l.clone(), json!(b)))
                    .collect();
                ok(Value::Object(m))
            }
            ["stargazers"] => {
                let starred = req.accept.as_deref() == Some(STAR_ACCEPT);
                let items: Vec<Value> = repo
                    .stargazers
                    .iter()
                    .map(|(l, i, at)| {
                        let user = json!({"login": l, "id": i, "type": "User"});
                        if starred {
                            json!({"starred_at": at, "user": user})
                        } else {
                            user
                        }
                    })
                    .collect();
                ok(Value::Array(paginate(&items, req)))
            }
            ["subscribers"] => {
                let items: Vec<Value> = repo
                    .watchers
                    .iter()
                    .map(|(l, i)| json!({"login": l, "id": i, "type": "User"}))
                    .collect();
                ok(Value::Array(paginate(&items, req)))
            }
            ["forks"] => {
                let items: Vec<Value> = repo
                    .forks
                    .iter()
                    .map(|(l, i, at)| json!({"owner": {"login": l, "id": i, "type": "User"}, "created_at": at}))
                    .collect();
                ok(Value::Array(paginate(&items, req)))
            }
            ["contents", path @ ..] => {
                let path = path.join("/");
                match repo.files.iter().find(|(p, _)| *p == path) {
                    Some((_, text)) => {
                        let mut b64 = base64::engine::general_purpose::STANDARD.encode(text);
                        if b64.len() > 8 {
                            b64.insert(8, '\n');
                        }
                        ok(json!({"encoding": "base64", "content": b64}))
                    }
                    None => status(404, json!({"message": "Not Found"})),
                }
            }
            _ => status(404, json!({"message": "Not Found"})),
        }
    }
}

fn paginate(items: &[Value], req: &Request) -> Vec<Value> {
    let per: usize = req
        .get_param("per_page")
        .and_then(|v| v.parse().ok())
        .unwrap_or(30);
    let page: usize = req
        .get_param("page")
        .and_then(|v| v.parse().ok())
        .unwrap_or(1);
    items
        .iter()
        .skip((page - 1) * per)
        .take(per)
        .cloned()
        .collect()
}

fn ok(v: Value) -> Response {
    Response::ok(serde_json::to_vec(&v).unwrap())
}

fn status(code: u16, v: Value) -> Response {
    Response {
        status: code,
        ..ok(v)
    }
}

/// In-process transport that presents `token` on every request.
pub struct FakeTransport {
    pub github: Arc<FakeGithub>,
    pub token: Option<String>,
}

impl FakeTransport {
    pub fn new(github: &Arc<FakeGithub>) -> Self {
        FakeTransport {
            github: github.clone(),
            token: github.token.clone(),
        }
    }
}

impl Transport for FakeTransport {
    fn get(&self, req: &Request) -> Result<Response, MinerError> {
        let auth = self.token.as_ref().map(|t| format!("Bearer {t}"));
        Ok(self.github.respond(req, auth.as_deref()))
    }
}

/// Fails the test on any request.
pub struct NoNetwork;

impl Transport for NoNetwork {
    fn get(&self, req: &Request) -> Result<Response, MinerError> {
        panic!("unexpected request {req}");
    }
}

#[derive(Clone, Default)]
pub struct RecordingSleeper(pub Arc<Mutex<Vec<Duration>>>);

impl Sleeper for RecordingSleeper {
    fn sleep(&self, d: Duration) {
        self.0.lock().unwrap().push(d);
    }
}

/// Serves `github` over plain HTTP on a loopback port; returns the base URL.
pub fn serve(github: Arc<FakeGithub>) -> String {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    std::thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(mut stream) = stream else { continue };
            let github = github.clone();
            std::thread::spawn(move || {
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut line = String::new();
                if reader.read_line(&mut line).unwrap_or(0) == 0 {
                    return;
                }
                let target = line.split_whitespace().nth(1).unwrap_or("/").to_string();
                let (mut auth, mut accept) = (None, None);
                loop {
                    let mut h = String::new();
                    if reader.read_line(&mut h).unwrap_or(0) == 0 || h.trim().is_empty() {
                        break;
                    }
                    if let Some((k, v)) = h.split_once(':') {
                        match k.trim().to_ascii_lowercase().as_str() {
                            "authorization" => auth = Some(v.trim().to_string()),
                            "accept" => accept = Some(v.trim().to_string()),
                            _ => {}
                        }
                    }
                }
                let url = url::Url::parse(&format!("http://fake{target}")).unwrap();
                let path = url
                    .path()
                    .split('/')
                    .map(percent_decode)
                    .collect::<Vec<_>>()
                    .join("/");
                let mut req = Request::new(path);
                for (k, v) in url.query_pairs() {
                    req = req.param(&k, v.as_ref());
                }
                req.accept = accept;
                let resp = github.respond(&req, auth.as_deref());
                let mut head = format!(
                    "HTTP/1.1 {} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n",
                    resp.status,
                    resp.body.len()
                );
                for (k, v) in &resp.headers {
                    head.push_str(&format!("{k}: {v}\r\n"));
                }
                head.push_str("\r\n");
                let _ = stream.write_all(head.as_bytes());
                let _ = stream.write_all(&resp.body);
            });
        }
    });
    format!("http://{addr}")
}

fn percent_decode(s: &str) -> String {
    let bytes = s.as_bytes();
    let mut out = Vec::with_capacity(bytes.len());
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'%' && i + 2 < bytes.len() {
            if let Ok(v) = u8::from_str_radix(&s[i + 1..i + 3], 16) {
                out.push(v);
                i += 3;
                continue;
            }
        }
        out.push(bytes[i]);
        i += 1;
    }
    String::from_utf8(out).unwrap()
}

/// The standard fixture: two qualifying repositories among five search hits.
pub fn fixture() -> FakeGithub {
    let mut db = FakeRepo::new("acme/db", 1, 900, "database");
    db.contributors
        .push(("dependabot[bot]".into(), "Bot".into()));
    db.files = vec![
        ("README.md".into(), "# db\n".into()),
        (
            "src/main.rs".into(),
            "fn main() { let conn = connect(); }\n".into(),
        ),
        (
            "src/db/query.rs".into(),
            "pub fn select(table: &str) -> Query { todo!() }\n".into(),
        ),
        ("docs/read me.md".into(), "spaces in names\n".into()),
    ];
    db.commits = vec![
        commit(
            "c5",
            Some(("carol", 3)),
            "2019-12-20T10:00:00Z",
            &["src/main.rs"],
        ),
        commit("c4", None, "2019-09-01T10:00:00Z", &["README.md"]),
        commit(
            "c3",
            Some(("dependabot[bot]", 99)),
            "2019-08-01T10:00:00Z",
            &["README.md"],
        ),
        commit(
            "c2",
            Some(("bob", 2)),
            "2019-06-01T10:00:00Z",
            &["src/db/query.rs", "old.rs"],
        ),
        commit(
            "c1",
            Some(("alice", 1)),
            "2019-01-05T10:00:00Z",
            &["src/main.rs", "README.md", "docs/read me.md"],
        ),
    ];
    db.stargazers = vec![
        ("dave".into(), 4, "2019-03-01T00:00:00Z".into()),
        ("erin".into(), 5, "2019-04-01T00:00:00Z".into()),
        ("alice".into(), 1, "2019-05-01T00:00:00Z".into()),
    ];
    db.watchers = vec![("alice".into(), 1)];
    db.forks = vec![("bob".into(), 2, "2019-07-01T00:00:00Z".into())];
    db.languages = vec![
        ("Rust".into(), 5000),
        ("Shell".into(), 10),
        ("C".into(), 300),
        ("Python".into(), 200),
        ("Go".into(), 100),
        ("Lua".into(), 50),
    ];

    let tiny = FakeRepo::new("acme/tiny", 2, 100, "database");
    let mut solo = FakeRepo::new("acme/solo", 3, 500, "database");
    solo.contributors = vec![
        ("ann".into(), "User".into()),
        ("bot[bot]".into(), "Bot".into()),
    ];
    let mut young = FakeRepo::new("acme/young", 4, 400, "database");
    young.commits = vec![
        commit(
            "y2",
            Some(("ann", 1)),
            "2019-02-01T00:00:00Z",
            &["README.md"],
        ),
        commit(
            "y1",
            Some(("ann", 1)),
            "2019-01-01T00:00:00Z",
            &["README.md"],
        ),
    ];

    let mut graph = FakeRepo::new("beta/graph", 5, 300, "graphql");
    graph.truncate_tree = true;
    graph.files = vec![
        ("lib/a.js".into(), "export const a = 1;\n".into()),
        ("lib/b/c.js".into(), "export const c = 2;\n".into()),
        ("index.js".into(), "import { a } from './lib/a';\n".into()),
    ];
    graph.commits = vec![
        commit(
            "g2",
            Some(("bob", 2)),
            "2019-11-01T00:00:00Z",
            &["lib/b/c.js"],
        ),
        commit(
            "g1",
            Some(("frank", 6)),
            "2019-02-01T00:00:00Z",
            &["lib/a.js", "index.js"],
        ),
    ];
    graph.stargazers = vec![("alice".into(), 1, "2019-08-01T00:00:00Z".into())];

    FakeGithub::new(vec![db, tiny, solo, young, graph])
}
