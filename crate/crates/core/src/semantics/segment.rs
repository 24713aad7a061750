/// Splits source text into identifier/number tokens and single punctuation
/// characters. A token is never broken internally.
pub fn tokenize(source: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    for ch in source.chars() {
        if ch.is_alphanumeric() || ch == '_' {
            cur.push(ch);
            continue;
        }
        if !cur.is_empty() {
            out.push(std::mem::take(&mut cur));
        }
        if !ch.is_whitespace() {
            out.push(ch.to_string());
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

/// Partitions `tokens` into `n_segments` contiguous segments of
/// `ceil(len / n_segments)` tokens. The last non-empty segment may be
/// shorter; missing segments are empty.
pub fn segment_code<S: Clone>(tokens: &[S], n_segments: usize) -> Vec<Vec<S>> {
    if n_segments == 0 {
        return Vec::new();
    }
    let size = tokens.len().div_ceil(n_segments).max(1);
    let mut out: Vec<Vec<S>> = tokens.chunks(size).map(<[S]>::to_vec).collect();
    out.resize_with(n_segments, Vec::new);
    out
}
