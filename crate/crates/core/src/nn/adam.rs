use super::{GradBuffer, Mlp, NnError, Result};
use crate::Scalar;

/// Moment accumulators for Adam with decoupled weight decay.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    m: GradBuffer<T>,
    v: GradBuffer<T>,
    step: u64,
    pub beta1: T,
    pub beta2: T,
    pub eps: T,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(net: &Mlp<T>) -> Self {
        Self {
            m: GradBuffer::zeros_like(net),
            v: GradBuffer::zeros_like(net),
            step: 0,
            beta1: T::lit(0.9),
            beta2: T::lit(0.999),
            eps: T::lit(1e-8),
        }
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn first_moment(&self) -> &GradBuffer<T> {
        &self.m
    }

    pub fn second_moment(&self) -> &GradBuffer<T> {
        &self.v
    }
}

/// One Adam update. Weight decay is decoupled: every parameter is first
/// shrunk by `lr * weight_decay * p`, then the bias-corrected Adam delta is
/// applied.
pub fn adam_step<T: Scalar>(
    params: &mut Mlp<T>,
    grads: &GradBuffer<T>,
    state: &mut AdamState<T>,
    lr: T,
    weight_decay: T,
) -> Result<()> {
    if !grads.congruent_with(params) || !state.m.congruent_with(params) {
        return Err(NnError::InvalidNetwork(
            "optimizer state does not match network".into(),
        ));
    }
    if !grads.all_finite() {
        return Err(NnError::NonFinite("gradient"));
    }
    state.step += 1;
    let t = i32::try_from(state.step).unwrap_or(i32::MAX);
    let (b1, b2, eps) = (state.beta1, state.beta2, state.eps);
    let bc1 = T::one() - b1.powi(t);
    let bc2 = T::one() - b2.powi(t);
    let decay = T::one() - lr * weight_decay;
    for (((p, &g), m), v) in params
        .params_mut()
        .zip(grads.iter())
        .zip(state.m.iter_mut())
        .zip(state.v.iter_mut())
    {
        *m = b1 * *m + (T::one() - b1) * g;
        *v = b2 * *v + (T::one() - b2) * g * g;
        let m_hat = *m / bc1;
        let v_hat = *v / bc2;
        *p = *p * decay - lr * m_hat / (v_hat.sqrt() + eps);
    }
    Ok(())
}
