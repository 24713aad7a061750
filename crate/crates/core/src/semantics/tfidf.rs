use std::collections::{BTreeMap, HashMap};

use crate::autodiff::Tensor;
use crate::scalar::Scalar;

/// Token vocabulary with inverse document frequencies `ln(N / df)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
    idf: Vec<f64>,
    documents: usize,
}

impl Vocabulary {
    /// Builds from documents given as token lists. When `max_size` is set the
    /// most frequent tokens (by document frequency, ties by token) are kept.
    pub fn build<D, S>(documents: impl IntoIterator<Item = D>, max_size: Option<usize>) -> Self
    where
        D: AsRef<[S]>,
        S: AsRef<str>,
    {
        let mut df: BTreeMap<String, usize> = BTreeMap::new();
        let mut n = 0usize;
        for doc in documents {
            n += 1;
            let mut seen: Vec<&str> = doc.as_ref().iter().map(AsRef::as_ref).collect();
            seen.sort_unstable();
            seen.dedup();
            for t in seen {
                *df.entry(t.to_string()).or_default() += 1;
            }
        }
        let mut entries: Vec<(String, usize)> = df.into_iter().collect();
        if let Some(max) = max_size {
            entries.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
            entries.truncate(max);
            entries.sort_by(|a, b| a.0.cmp(&b.0));
        }
        let tokens: Vec<String> = entries.iter().map(|(t, _)| t.clone()).collect();
        let idf = entries
            .iter()
            .map(|&(_, d)| (n as f64 / d as f64).ln())
            .collect();
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Vocabulary {
            tokens,
            index,
            idf,
            documents: n,
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn documents(&self) -> usize {
        self.documents
    }

    pub fn position(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn idf(&self, token: &str) -> Option<f64> {
        self.position(token).map(|i| self.idf[i])
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Raw-count TF times IDF. Out-of-vocabulary tokens are ignored.
    pub fn tfidf<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<f64> {
        let mut row = vec![0.0; self.len()];
        for t in tokens {
            if let Some(i) = self.position(t.as_ref()) {
                row[i] += 1.0;
            }
        }
        for (x, idf) in row.iter_mut().zip(&self.idf) {
            *x *= idf;
        }
        row
    }
}

/// One TF-IDF row per segment, `segments x |vocabulary|`.
pub fn encode_segments_tfidf<T: Scalar, S: AsRef<str>>(
    segments: &[Vec<S>],
    vocabulary: &Vocabulary,
) -> Tensor<T> {
    let mut out = Tensor::zeros(segments.len(), vocabulary.len());
    for (r, seg) in segments.iter().enumerate() {
        for (o, v) in out.row_mut(r).iter_mut().zip(vocabulary.tfidf(seg)) {
            *o = T::lit(v);
        }
    }
    out
}
