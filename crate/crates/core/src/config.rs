//! Run configuration and its plain-text `key = value` form.
//!
//! ```text
//! seed = 7
//! model = coder
//!
//! [data]
//! path = data/db
//! features = data/db/features.cfea
//!
//! [hyper]
//! lr = 0.001
//! behaviors = star,watch
//!
//! [flags]
//! disable_structural = true
//! ```
//!
//! Top-level keys may also be written as `run.<key>`. Unknown sections or keys
//! are errors. Overrides use the dotted form `section.key=value`.

use std::fmt::{self, Write as _};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataset::{Behavior, DEFAULT_T1, DEFAULT_T2};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModelKind {
    Coder,
    Mf,
    LightGcn,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Coder => "coder",
            ModelKind::Mf => "mf",
            ModelKind::LightGcn => "lightgcn",
        }
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "coder" => Ok(ModelKind::Coder),
            "mf" => Ok(ModelKind::Mf),
            "lightgcn" | "lgn" => Ok(ModelKind::LightGcn),
            other => Err(Error::Argument(format!(
                "unknown model {other:?} (expected coder, mf or lightgcn)"
            ))),
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Protocol {
    Intra,
    Cross,
    Cold,
}

impl Protocol {
    pub fn as_str(self) -> &'static str {
        match self {
            Protocol::Intra => "intra",
            Protocol::Cross => "cross",
            Protocol::Cold => "cold",
        }
    }
}

impl FromStr for Protocol {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "intra" => Ok(Protocol::Intra),
            "cross" => Ok(Protocol::Cross),
            "cold" => Ok(Protocol::Cold),
            other => Err(Error::Argument(format!(
                "unknown protocol {other:?} (expected intra, cross or cold)"
            ))),
        }
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// How per-behavior project vectors are combined before the MLP heads.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Aggregation {
    Mean,
    Sum,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    pub d: usize,
    pub layers: usize,
    pub n_c: usize,
    pub n_q: usize,
    pub n_h: usize,
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    pub tau: f64,
    pub eta: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// `None` disables early stopping.
    pub patience: Option<usize>,
    pub behaviors: Vec<Behavior>,
    pub aggregation: Aggregation,
    /// Draw file negatives from the positive's repository only.
    pub same_repo_negatives: bool,
    pub tfidf_vocabulary: usize,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams {
            d: 32,
            layers: 4,
            n_c: 8,
            n_q: 4,
            n_h: 32,
            lambda1: 0.1,
            lambda2: 1e-6,
            lambda3: 1e-4,
            tau: 0.1,
            eta: 2,
            lr: 1e-3,
            batch_size: 1024,
            epochs: 200,
            patience: Some(10),
            behaviors: vec![Behavior::Star, Behavior::Watch],
            aggregation: Aggregation::Mean,
            same_repo_negatives: false,
            tfidf_vocabulary: 1024,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AblationFlags {
    pub disable_fusion: bool,
    pub disable_contrastive: bool,
    pub tfidf_features: bool,
    pub disable_project_level: bool,
    pub disable_structural: bool,
}

impl AblationFlags {
    pub const NAMES: [&'static str; 5] = [
        "disable_fusion",
        "disable_contrastive",
        "tfidf_features",
        "disable_project_level",
        "disable_structural",
    ];

    pub fn set(&mut self, name: &str, value: bool) -> Result<()> {
        let slot = match name {
            "disable_fusion" => &mut self.disable_fusion,
            "disable_contrastive" => &mut self.disable_contrastive,
            "tfidf_features" => &mut self.tfidf_features,
            "disable_project_level" => &mut self.disable_project_level,
            "disable_structural" => &mut self.disable_structural,
            other => return Err(Error::Config(format!("unknown flag {other:?}"))),
        };
        *slot = value;
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<bool> {
        Some(match name {
            "disable_fusion" => self.disable_fusion,
            "disable_contrastive" => self.disable_contrastive,
            "tfidf_features" => self.tfidf_features,
            "disable_project_level" => self.disable_project_level,
            "disable_structural" => self.disable_structural,
            _ => return None,
        })
    }

    /// Variant name: `CD` for the full model, otherwise `CD-` followed by the
    /// letters of the active flags (`CD-S`, `CD-PC`, ...).
    pub fn tag(&self) -> String {
        let letters: String = [
            (self.disable_fusion, 'F'),
            (self.disable_contrastive, 'C'),
            (self.tfidf_features, 'E'),
            (self.disable_project_level, 'P'),
            (self.disable_structural, 'S'),
        ]
        .iter()
        .filter(|(on, _)| *on)
        .map(|&(_, c)| c)
        .collect();
        if letters.is_empty() {
            "CD".to_string()
        } else {
            format!("CD-{letters}")
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub seed: u64,
    pub model: ModelKind,
    pub dataset: PathBuf,
    /// Pretrained segment features; TF-IDF is used when absent.
    pub features: Option<PathBuf>,
    pub output: PathBuf,
    pub t1: i64,
    pub t2: i64,
    pub hyper: Hyperparams,
    pub flags: AblationFlags,
    pub protocol: Protocol,
    pub ks: Vec<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            model: ModelKind::Coder,
            dataset: PathBuf::from("data"),
            features: None,
            output: PathBuf::from("runs"),
            t1: DEFAULT_T1,
            t2: DEFAULT_T2,
            hyper: Hyperparams::default(),
            flags: AblationFlags::default(),
            protocol: Protocol::Intra,
            ks: vec![5, 10, 20],
        }
    }
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("bad value {value:?} for {key}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.trim().to_ascii_lowercase().as_str() {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(Error::Config(format!("bad boolean {value:?} for {key}"))),
    }
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse_value(key, s))
        .collect()
}

fn join<T: fmt::Display>(items: &[T]) -> String {
    items
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join(",")
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        let mut section = String::from("run");
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                section = name.trim().to_string();
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!(
                    "line {}: expected key = value, got {line:?}",
                    n + 1
                ))
            })?;
            cfg.set(&section, key.trim(), value.trim())
                .map_err(|e| Error::Config(format!("line {}: {e}", n + 1)))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Applies `section.key=value`; a bare `key=value` targets the top level.
    pub fn apply_override(&mut self, assignment: &str) -> Result<()> {
        let (path, value) = assignment
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override {assignment:?} is not key=value")))?;
        let (section, key) = path.trim().split_once('.').unwrap_or(("run", path.trim()));
        self.set(section, key, value.trim())
    }

    pub fn set(&mut self, section: &str, key: &str, value: &str) -> Result<()> {
        let full = format!("{section}.{key}");
        let h = &mut self.hyper;
        match (section, key) {
            ("run", "seed") => self.seed = parse_value(&full, value)?,
            ("run", "model") => self.model = value.parse()?,
            ("data", "path") => self.dataset = PathBuf::from(value),
            ("data", "features") => {
                self.features = (!value.is_empty()).then(|| PathBuf::from(value))
            }
            ("data", "output") => self.output = PathBuf::from(value),
            ("data", "t1") => self.t1 = parse_value(&full, value)?,
            ("data", "t2") => self.t2 = parse_value(&full, value)?,
            ("hyper", "d") => h.d = parse_value(&full, value)?,
            ("hyper", "layers") => h.layers = parse_value(&full, value)?,
            ("hyper", "n_c") => h.n_c = parse_value(&full, value)?,
            ("hyper", "n_q") => h.n_q = parse_value(&full, value)?,
            ("hyper", "n_h") => h.n_h = parse_value(&full, value)?,
            ("hyper", "lambda1") => h.lambda1 = parse_value(&full, value)?,
            ("hyper", "lambda2") => h.lambda2 = parse_value(&full, value)?,
            ("hyper", "lambda3") => h.lambda3 = parse_value(&full, value)?,
            ("hyper", "tau") => h.tau = parse_value(&full, value)?,
            ("hyper", "eta") => h.eta = parse_value(&full, value)?,
            ("hyper", "lr") => h.lr = parse_value(&full, value)?,
            ("hyper", "batch_size") => h.batch_size = parse_value(&full, value)?,
            ("hyper", "epochs") => h.epochs = parse_value(&full, value)?,
            ("hyper", "patience") => {
                h.patience = match value.to_ascii_lowercase().as_str() {
                    "none" | "off" | "" => None,
                    v => Some(parse_value(&full, v)?),
                }
            }
            ("hyper", "behaviors") => {
                h.behaviors = value
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(|s| s.parse::<Behavior>().map_err(Error::Config))
                    .collect::<Result<_>>()?
            }
            ("hyper", "aggregation") => {
                h.aggregation = match value.to_ascii_lowercase().as_str() {
                    "mean" => Aggregation::Mean,
                    "sum" => Aggregation::Sum,
                    _ => return Err(Error::Config(format!("bad value {value:?} for {full}"))),
                }
            }
            ("hyper", "same_repo_negatives") => h.same_repo_negatives = parse_bool(&full, value)?,
            ("hyper", "tfidf_vocabulary") => h.tfidf_vocabulary = parse_value(&full, value)?,
            ("flags", name) => self.flags.set(name, parse_bool(&full, value)?)?,
            ("eval", "protocol") => self.protocol = value.parse()?,
            ("eval", "k") => self.ks = parse_list(&full, value)?,
            _ => return Err(Error::Config(format!("unknown key {full}"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let h = &self.hyper;
        let fail = |m: String| Err(Error::Config(m));
        if h.d == 0 || h.n_c == 0 || h.n_q == 0 || h.n_h == 0 || h.batch_size == 0 {
            return fail("d, n_c, n_q, n_h and batch_size must be positive".into());
        }
        if !h.eta.is_multiple_of(2) {
            return fail(format!("eta must be even, got {}", h.eta));
        }
        if self.model == ModelKind::Coder && !self.flags.disable_contrastive && h.eta > h.layers {
            return fail(format!(
                "eta {} exceeds the number of layers {}",
                h.eta, h.layers
            ));
        }
        if !(h.lr > 0.0) {
            return fail(format!("lr must be positive, got {}", h.lr));
        }
        if !(h.tau > 0.0) {
            return fail(format!("tau must be positive, got {}", h.tau));
        }
        if h.behaviors.contains(&Behavior::Commit) {
            return fail("commit is a file-level behavior, not a project-level one".into());
        }
        if self.model == ModelKind::Coder
            && !self.flags.disable_project_level
            && h.behaviors.is_empty()
        {
            return fail("project level enabled with an empty behavior set".into());
        }
        if self.t1 >= self.t2 {
            return fail(format!("t1 {} must precede t2 {}", self.t1, self.t2));
        }
        if self.ks.is_empty() || self.ks.contains(&0) {
            return fail("k list must be nonempty and positive".into());
        }
        Ok(())
    }

    /// Report tag: the ablation tag for the full model, the baseline name otherwise.
    pub fn tag(&self) -> String {
        match self.model {
            ModelKind::Coder => self.flags.tag(),
            ModelKind::Mf => "MF".into(),
            ModelKind::LightGcn => "LightGCN".into(),
        }
    }

    /// Canonical text form; `parse(to_text())` reproduces the config.
    pub fn to_text(&self) -> String {
        let h = &self.hyper;
        let mut s = String::new();
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "model = {}", self.model);
        let _ = writeln!(s, "\n[data]");
        let _ = writeln!(s, "path = {}", self.dataset.display());
        let _ = writeln!(
            s,
            "features = {}",
            self.features
                .as_ref()
                .map(|p| p.display().to_string())
                .unwrap_or_default()
        );
        let _ = writeln!(s, "output = {}", self.output.display());
        let _ = writeln!(s, "t1 = {}", self.t1);
        let _ = writeln!(s, "t2 = {}", self.t2);
        let _ = writeln!(s, "\n[hyper]");
        for (k, v) in [
            ("d", h.d.to_string()),
            ("layers", h.layers.to_string()),
            ("n_c", h.n_c.to_string()),
            ("n_q", h.n_q.to_string()),
            ("n_h", h.n_h.to_string()),
            ("lambda1", format!("{:?}", h.lambda1)),
            ("lambda2", format!("{:?}", h.lambda2)),
            ("lambda3", format!("{:?}", h.lambda3)),
            ("tau", format!("{:?}", h.tau)),
            ("eta", h.eta.to_string()),
            ("lr", format!("{:?}", h.lr)),
            ("batch_size", h.batch_size.to_string()),
            ("epochs", h.epochs.to_string()),
            (
                "patience",
                h.patience
                    .map(|p| p.to_string())
                    .unwrap_or_else(|| "none".into()),
            ),
            ("behaviors", join(&h.behaviors)),
            (
                "aggregation",
                match h.aggregation {
                    Aggregation::Mean => "mean".into(),
                    Aggregation::Sum => "sum".into(),
                },
            ),
            ("same_repo_negatives", h.same_repo_negatives.to_string()),
            ("tfidf_vocabulary", h.tfidf_vocabulary.to_string()),
        ] {
            let _ = writeln!(s, "{k} = {v}");
        }
        let _ = writeln!(s, "\n[flags]");
        for name in AblationFlags::NAMES {
            let _ = writeln!(s, "{name} = {}", self.flags.get(name).unwrap_or(false));
        }
        let _ = writeln!(s, "\n[eval]");
        let _ = writeln!(s, "protocol = {}", self.protocol);
        let _ = writeln!(s, "k = {}", join(&self.ks));
        s
    }
}
