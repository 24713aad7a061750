//! Top-K file recommendation for one user.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{rank_by_score, EvalContext};
use crate::model::Embeddings;
use crate::scalar::Scalar;

/// Which files are eligible. Train positives are never recommended.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scope {
    /// Files in repositories the user already touched.
    #[default]
    Intra,
    /// Files in repositories the user never touched.
    Cross,
    All,
}

impl FromStr for Scope {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "intra" => Ok(Scope::Intra),
            "cross" => Ok(Scope::Cross),
            "all" => Ok(Scope::All),
            other => Err(Error::Argument(format!(
                "unknown scope {other:?} (expected intra, cross or all)"
            ))),
        }
    }
}

impl fmt::Display for Scope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scope::Intra => "intra",
            Scope::Cross => "cross",
            Scope::All => "all",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Recommendation {
    pub file: usize,
    pub repo: usize,
    pub score: f64,
}

/// Up to `k` files by descending score, ties by ascending id.
pub fn recommend<T: Scalar>(
    emb: &Embeddings<T>,
    ctx: &EvalContext,
    user: usize,
    k: usize,
    scope: Scope,
) -> Result<Vec<Recommendation>> {
    if k == 0 {
        return Err(Error::Argument("k must be at least 1".into()));
    }
    if user >= ctx.users {
        return Err(Error::NotFound(format!("user index {user}")));
    }
    let candidates = match scope {
        Scope::Intra => ctx.intra_candidates(user),
        Scope::Cross => ctx.cross_candidates(user),
        Scope::All => (0..ctx.files)
            .filter(|f| !ctx.train_positives[user].contains(f))
            .collect(),
    };
    let scores = emb.scores(user, &candidates);
    let ranked = rank_by_score(&candidates, &scores);
    Ok(ranked
        .into_iter()
        .take(k)
        .map(|file| Recommendation {
            file,
            repo: ctx.file_repo[file],
            score: emb.score(user, file).to_f64_lossy(),
        })
        .collect())
}
