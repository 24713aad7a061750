use crate::autodiff::{Tape, Var};
use crate::error::Result;
use crate::scalar::Scalar;

/// Batch mean of `-ln σ(s⁺ - s⁻)`, computed as `softplus(s⁻ - s⁺)`.
pub fn bpr_loss<T: Scalar>(tape: &mut Tape<T>, positive: Var, negative: Var) -> Result<Var> {
    let diff = tape.sub(negative, positive)?;
    let per = tape.softplus(diff);
    Ok(tape.mean_all(per))
}

/// In-batch InfoNCE between row `i` of `anchor` and row `i` of `positive`,
/// with every other row of `positive` as a negative. Rows are L2-normalised
/// first; the result is the mean over rows.
pub fn info_nce<T: Scalar>(tape: &mut Tape<T>, anchor: Var, positive: Var, tau: T) -> Result<Var> {
    let a = tape.l2_normalize_rows(anchor);
    let b = tape.l2_normalize_rows(positive);
    let bt = tape.transpose(b);
    let sim = tape.matmul(a, bt)?;
    let logits = tape.scale(sim, T::one() / tau);
    let log_p = tape.log_softmax_rows(logits);
    let diag = tape.diagonal(log_p)?;
    let mean = tape.mean_all(diag);
    Ok(tape.scale(mean, -T::one()))
}

/// `sqrt(Σ ‖p‖²)` over the given parameter leaves.
pub fn parameter_norm<T: Scalar>(tape: &mut Tape<T>, params: &[Var]) -> Result<Var> {
    let squares: Vec<Var> = params.iter().map(|&p| tape.sum_squares(p)).collect();
    let total = sum_scalars(tape, &squares)?;
    Ok(tape.sqrt(total))
}

fn sum_scalars<T: Scalar>(tape: &mut Tape<T>, parts: &[Var]) -> Result<Var> {
    let stacked = tape.concat_rows(parts)?;
    Ok(tape.sum_all(stacked))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossWeights {
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
}

/// Component losses of one batch. Absent parts are simply not on the tape.
#[derive(Clone, Debug)]
pub struct LossParts {
    pub file: Var,
    pub project: Vec<Var>,
    /// User-side and file-side contrastive terms.
    pub contrastive: Option<(Var, Var)>,
    pub norm: Option<Var>,
}

/// `ℒ_F + λ1 Σ_t ℒ_P^t + λ2 (ℒ_C^U + ℒ_C^V) + λ3 ‖Θ‖₂`. Terms whose weight is
/// zero or whose part is absent are left off the tape.
pub fn total_loss<T: Scalar>(tape: &mut Tape<T>, parts: &LossParts, w: LossWeights) -> Result<Var> {
    let mut terms = vec![parts.file];
    if w.lambda1 != 0.0 && !parts.project.is_empty() {
        let s = sum_scalars(tape, &parts.project)?;
        terms.push(tape.scale(s, T::lit(w.lambda1)));
    }
    if let (true, Some((cu, cv))) = (w.lambda2 != 0.0, parts.contrastive) {
        let s = tape.add(cu, cv)?;
        terms.push(tape.scale(s, T::lit(w.lambda2)));
    }
    if let (true, Some(norm)) = (w.lambda3 != 0.0, parts.norm) {
        terms.push(tape.scale(norm, T::lit(w.lambda3)));
    }
    if terms.len() == 1 {
        return Ok(parts.file);
    }
    sum_scalars(tape, &terms)
}
