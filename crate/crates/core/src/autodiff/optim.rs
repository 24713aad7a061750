//! Glorot initialisation and the Adam optimizer.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{ParamStore, Tensor};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Glorot/Xavier uniform bound `sqrt(6 / (fan_in + fan_out))` for a
/// `fan_in x fan_out` weight.
pub fn xavier_bound(rows: usize, cols: usize) -> f64 {
    (6.0 / (rows + cols).max(1) as f64).sqrt()
}

/// Draws a `rows x cols` tensor uniformly from `±xavier_bound`.
pub fn xavier_init<T: Scalar>(rows: usize, cols: usize, seed: u64) -> Tensor<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    xavier_init_with(rows, cols, &mut rng)
}

pub fn xavier_init_with<T: Scalar, R: Rng>(rows: usize, cols: usize, rng: &mut R) -> Tensor<T> {
    let bound = xavier_bound(rows, cols);
    // Sample in f64 so f32 and f64 models start from the same point.
    Tensor::from_fn(rows, cols, |_, _| T::lit(rng.gen_range(-bound..=bound)))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates for every parameter.
#[derive(Clone, Debug)]
pub struct AdamState<T> {
    pub config: AdamConfig,
    step: u64,
    first: Vec<Tensor<T>>,
    second: Vec<Tensor<T>>,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(params: &ParamStore<T>, config: AdamConfig) -> Self {
        let zeros: Vec<Tensor<T>> = params
            .iter()
            .map(|(_, _, t)| Tensor::zeros(t.rows(), t.cols()))
            .collect();
        AdamState {
            config,
            step: 0,
            first: zeros.clone(),
            second: zeros,
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }
}

/// One bias-corrected Adam update. `grads` is indexed like `params`.
pub fn adam_step<T: Scalar>(
    params: &mut ParamStore<T>,
    grads: &[Tensor<T>],
    state: &mut AdamState<T>,
    lr: f64,
) -> Result<()> {
    if !(lr > 0.0) {
        return Err(Error::Argument(format!(
            "learning rate must be positive, got {lr}"
        )));
    }
    if grads.len() != params.len() || state.first.len() != params.len() {
        return Err(Error::Argument(format!(
            "adam_step: {} parameters, {} gradients, {} moment slots",
            params.len(),
            grads.len(),
            state.first.len()
        )));
    }
    state.step += 1;
    let cfg = state.config;
    let t = state.step as i32;
    let b1 = T::lit(cfg.beta1);
    let b2 = T::lit(cfg.beta2);
    let c1 = T::lit(1.0 - cfg.beta1.powi(t));
    let c2 = T::lit(1.0 - cfg.beta2.powi(t));
    let lr = T::lit(lr);
    let eps = T::lit(cfg.eps);
    let one = T::one();

    for (i, id) in params.ids().collect::<Vec<_>>().into_iter().enumerate() {
        let g = &grads[i];
        let p = params.get_mut(id);
        if g.shape() != p.shape() {
            return Err(Error::shape("adam_step", &p.shape(), &g.shape()));
        }
        let m = state.first[i].data_mut();
        let v = state.second[i].data_mut();
        for (((pv, &gv), mv), vv) in p.data_mut().iter_mut().zip(g.data()).zip(m).zip(v) {
            *mv = b1 * *mv + (one - b1) * gv;
            *vv = b2 * *vv + (one - b2) * gv * gv;
            let m_hat = *mv / c1;
            let v_hat = *vv / c2;
            *pv -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}
