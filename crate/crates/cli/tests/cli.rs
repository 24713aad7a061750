//! The `coderec` binary end to end on synthetic and toy datasets.

use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Output, Stdio};
use std::sync::OnceLock;

use coderec_core::dataset::save_dataset;
use coderec_core::dataset::synthetic::SyntheticConfig;
use serde_json::Value;
use sha2::{Digest, Sha256};
use tempfile::TempDir;

fn coderec(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_coderec"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "exit {:?}\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn json(out: &Output) -> Value {
    serde_json::from_str(&ok(out)).expect("stdout is JSON")
}

fn s(p: &Path) -> String {
    p.to_string_lossy().into_owned()
}

const SMALL: &str = "\
seed = 3
model = coder

[hyper]
d = 8
layers = 2
eta = 2
n_c = 4
n_q = 2
n_h = 8
lr = 0.003
batch_size = 64
epochs = 3
patience = none
tfidf_vocabulary = 64
";

struct Workspace {
    dir: TempDir,
}

impl Workspace {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        save_dataset(
            &SyntheticConfig::with_seed(1).generate(),
            dir.path().join("data"),
        )
        .unwrap();
        std::fs::write(dir.path().join("small.cfg"), SMALL).unwrap();
        Workspace { dir }
    }

    fn data(&self) -> PathBuf {
        self.dir.path().join("data")
    }

    fn config(&self) -> PathBuf {
        self.dir.path().join("small.cfg")
    }

    fn train(&self, name: &str, extra: &[&str]) -> PathBuf {
        let out = self.dir.path().join(name);
        let (data, cfg, out_s) = (s(&self.data()), s(&self.config()), s(&out));
        let mut args = vec!["train", "--config", &cfg, "--data", &data, "--out", &out_s];
        args.extend_from_slice(extra);
        ok(&coderec(&args));
        out
    }
}

/// One trained full model shared by the read-only tests.
fn shared() -> &'static (Workspace, PathBuf) {
    static RUN: OnceLock<(Workspace, PathBuf)> = OnceLock::new();
    RUN.get_or_init(|| {
        let ws = Workspace::new();
        let run = ws.train("run", &[]);
        (ws, run)
    })
}

fn write(dir: &Path, name: &str, body: &str) {
    let p = dir.join(name);
    std::fs::create_dir_all(p.parent().unwrap()).unwrap();
    std::fs::write(p, body).unwrap();
}

/// Two users, three files in one repository; each user has one train and
/// one test commit.
fn two_user_toy(dir: &Path) {
    write(
        dir,
        "users.jsonl",
        "{\"id\": 1, \"login\": \"ann\"}\n{\"id\": 2, \"login\": \"bob\"}\n",
    );
    write(
        dir,
        "repos.jsonl",
        "{\"id\": \"acme/lib\", \"owner\": \"acme\", \"created_at\": 1400000000, \"top_languages\": [\"Rust\"], \"topics\": []}\n",
    );
    write(
        dir,
        "trees/acme_lib.jsonl",
        concat!(
            "{\"id\": \"r\", \"kind\": \"root\", \"name\": \"lib\", \"parent\": null}\n",
            "{\"id\": \"src\", \"kind\": \"dir\", \"name\": \"src\", \"parent\": \"r\"}\n",
            "{\"id\": \"f1\", \"kind\": \"file\", \"name\": \"main.rs\", \"parent\": \"src\"}\n",
            "{\"id\": \"f2\", \"kind\": \"file\", \"name\": \"util.rs\", \"parent\": \"src\"}\n",
            "{\"id\": \"f3\", \"kind\": \"file\", \"name\": \"README.md\", \"parent\": \"r\"}\n",
        ),
    );
    write(
        dir,
        "interactions.jsonl",
        concat!(
            "{\"user\": 1, \"target\": \"f1\", \"kind\": \"file\", \"behavior\": \"commit\", \"ts\": 1500000000}\n",
            "{\"user\": 2, \"target\": \"f2\", \"kind\": \"file\", \"behavior\": \"commit\", \"ts\": 1500000001}\n",
            "{\"user\": 1, \"target\": \"f3\", \"kind\": \"file\", \"behavior\": \"commit\", \"ts\": 1700000000}\n",
            "{\"user\": 2, \"target\": \"f3\", \"kind\": \"file\", \"behavior\": \"commit\", \"ts\": 1700000001}\n",
        ),
    );
}

#[test]
fn prepare_reports_density_of_the_toy() {
    let dir = tempfile::tempdir().unwrap();
    two_user_toy(dir.path());
    let summary = json(&coderec(&["prepare", "--data", &s(dir.path()), "--json"]));
    // Train Y holds (ann, main.rs) and (bob, util.rs): 2 of 2 x 3 cells.
    assert_eq!(summary["train_nnz"], 2);
    assert_eq!(summary["users"], 2);
    assert_eq!(summary["files"], 3);
    assert!((summary["density"].as_f64().unwrap() - 2.0 / 6.0).abs() < 1e-12);

    let table = ok(&coderec(&["prepare", "--data", &s(dir.path())]));
    assert!(table.contains("Density"), "{table}");
    assert!(table.contains("3.333e-1"), "{table}");
}

#[test]
fn recommend_gives_k_distinct_files_by_descending_score() {
    let (_, run) = shared();
    let r = json(&coderec(&[
        "recommend",
        "--run",
        &s(run),
        "--user",
        "0",
        "--k",
        "3",
        "--json",
    ]));
    let items = r["items"].as_array().unwrap();
    assert_eq!(items.len(), 3);
    let files: std::collections::BTreeSet<&str> =
        items.iter().map(|i| i["file"].as_str().unwrap()).collect();
    assert_eq!(files.len(), 3);
    let scores: Vec<f64> = items.iter().map(|i| i["score"].as_f64().unwrap()).collect();
    assert!(scores.windows(2).all(|w| w[0] >= w[1]), "{scores:?}");

    let table = ok(&coderec(&[
        "recommend",
        "--run",
        &s(run),
        "--user",
        "0",
        "--k",
        "3",
    ]));
    assert_eq!(table.lines().count(), 4);
}

#[test]
fn unknown_user_is_a_usage_error() {
    let (_, run) = shared();
    let out = coderec(&[
        "recommend",
        "--run",
        &s(run),
        "--user",
        "nobody",
        "--k",
        "3",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("not found"));
}

#[test]
fn structural_ablation_is_tagged_in_the_report() {
    let ws = Workspace::new();
    let run = ws.train("cds", &["--flag", "disable_structural"]);
    let report = json(&coderec(&[
        "evaluate",
        "--run",
        &s(&run),
        "--json",
        "--k",
        "5,10",
    ]));
    assert_eq!(report["tag"], "CD-S");
    assert_eq!(report["protocol"], "Intra");
    assert!(run.join("report-intra.json").is_file());

    let table = ok(&coderec(&[
        "evaluate",
        "--run",
        &s(&run),
        "--protocol",
        "cold",
    ]));
    assert!(table.starts_with("CD-S / cold"), "{table}");
}

#[test]
fn archived_config_reproduces_the_report() {
    let (ws, run) = shared();
    let again = ws.dir.path().join("again");
    ok(&coderec(&[
        "train",
        "--config",
        &s(&run.join("config.txt")),
        "--out",
        &s(&again),
    ]));
    let a = json(&coderec(&["evaluate", "--run", &s(run), "--json"]));
    let b = json(&coderec(&["evaluate", "--run", &s(&again), "--json"]));
    assert_eq!(a["mean"], b["mean"]);
    assert_eq!(a["per_user"], b["per_user"]);
}

#[test]
fn changed_dataset_refuses_the_checkpoint() {
    let ws = Workspace::new();
    let run = ws.train("run", &["--model", "mf"]);
    let users = ws.data().join("users.jsonl");
    let mut text = std::fs::read_to_string(&users).unwrap();
    text.push_str("{\"id\": \"newcomer\", \"login\": \"newcomer\"}\n");
    std::fs::write(&users, text).unwrap();
    let out = coderec(&["recommend", "--run", &s(&run), "--user", "0"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("refusing"));
}

#[test]
fn bad_configuration_is_a_usage_error() {
    let ws = Workspace::new();
    let data = s(&ws.data());
    for args in [
        vec!["train", "--data", &data, "--set", "hyper.eta=3"],
        vec!["train", "--data", &data, "--set", "hyper.nonsense=1"],
        vec!["train", "--data", &data, "--flag", "disable_everything"],
        vec!["evaluate", "--run", &data],
        vec!["frobnicate"],
    ] {
        let out = coderec(&args);
        assert_eq!(
            out.status.code(),
            Some(2),
            "{args:?}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
}

#[test]
fn encoded_features_feed_training() {
    let ws = Workspace::new();
    let feats = ws.dir.path().join("tfidf.cfea");
    let (data, cfg) = (s(&ws.data()), s(&ws.config()));
    let summary = json(&coderec(&[
        "encode",
        "--config",
        &cfg,
        "--data",
        &data,
        "--out",
        &s(&feats),
    ]));
    assert_eq!(summary["source"], "tfidf");
    assert_eq!(summary["n_segments"], 4);
    assert_eq!(summary["files"], 200);
    assert_eq!(&std::fs::read(&feats).unwrap()[..4], b"CFEA");

    // Round trip through import keeps every block.
    let again = ws.dir.path().join("again.cfea");
    let imported = json(&coderec(&[
        "encode",
        "--config",
        &cfg,
        "--data",
        &data,
        "--out",
        &s(&again),
        "--import",
        &s(&feats),
    ]));
    assert_eq!(imported["covered"], 200);
    assert_eq!(
        std::fs::read(&feats).unwrap(),
        std::fs::read(&again).unwrap()
    );

    let run = ws.train("with-features", &["--features", &s(&feats)]);
    let report = json(&coderec(&["evaluate", "--run", &s(&run), "--json"]));
    assert_eq!(report["tag"], "CD");
}

#[test]
fn foreign_feature_file_is_a_data_error() {
    let ws = Workspace::new();
    let toy = tempfile::tempdir().unwrap();
    two_user_toy(toy.path());
    let feats = ws.dir.path().join("toy.cfea");
    let cfg = s(&ws.config());
    ok(&coderec(&[
        "encode",
        "--config",
        &cfg,
        "--data",
        &s(toy.path()),
        "--out",
        &s(&feats),
    ]));
    let out = coderec(&[
        "encode",
        "--config",
        &cfg,
        "--data",
        &s(&ws.data()),
        "--out",
        &s(&ws.dir.path().join("x.cfea")),
        "--import",
        &s(&feats),
    ]);
    assert_eq!(
        out.status.code(),
        Some(3),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}

struct Server {
    child: Child,
    base: String,
}

impl Drop for Server {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

fn start(run: &Path) -> Server {
    let mut child = Command::new(env!("CARGO_BIN_EXE_coderec"))
        .args(["serve", "--run", &s(run), "--port", "0"])
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(child.stdout.take().unwrap())
        .read_line(&mut line)
        .unwrap();
    let base = line
        .trim()
        .strip_prefix("listening on ")
        .expect("address line")
        .to_string();
    Server { child, base }
}

#[test]
fn service_matches_the_cli() {
    let (_, run) = shared();
    let server = start(run);
    let http = reqwest::blocking::Client::new();
    let get = |path: &str| {
        let r = http.get(format!("{}{path}", server.base)).send().unwrap();
        let status = r.status().as_u16();
        (
            status,
            serde_json::from_str::<Value>(&r.text().unwrap()).unwrap(),
        )
    };

    let (status, health) = get("/healthz");
    assert_eq!(status, 200);
    assert_eq!(health["status"], "ok");
    let ckpt = std::fs::read(run.join("model.ckpt")).unwrap();
    assert_eq!(health["model"], format!("{:x}", Sha256::digest(&ckpt)));

    for (user, k, scope) in [("0", 5, "intra"), ("7", 4, "cross"), ("3", 1, "all")] {
        let (status, served) = get(&format!("/recommend?user={user}&k={k}&scope={scope}"));
        assert_eq!(status, 200);
        let k = k.to_string();
        let cli = json(&coderec(&[
            "recommend",
            "--run",
            &s(run),
            "--user",
            user,
            "--k",
            &k,
            "--scope",
            scope,
            "--json",
        ]));
        assert_eq!(served, cli, "{user} {scope}");
    }

    assert_eq!(get("/recommend?user=0&k=0").0, 400);
    assert_eq!(get("/recommend?user=0&k=three").0, 400);
    assert_eq!(get("/recommend?k=3").0, 400);
    assert_eq!(get("/recommend?user=0&scope=galaxy").0, 400);
    assert_eq!(get("/recommend?user=ghost&k=3").0, 404);
    assert_eq!(get("/recommend?user=&k=3").0, 400);

    let r = http.post(format!("{}/reload", server.base)).send().unwrap();
    assert_eq!(r.status().as_u16(), 200);
    let body: Value = serde_json::from_str(&r.text().unwrap()).unwrap();
    assert_eq!(body["model"], health["model"]);
}
