use super::{GradBuffer, Mlp};
use crate::Scalar;

/// Compares `analytic` against central differences of `loss` and returns the
/// largest relative discrepancy over all parameters.
///
/// Relative error is `|a - n| / max(|a|, |n|, 1e-5)`; the floor keeps
/// near-zero gradients from amplifying rounding noise. Never fails: a shape
/// mismatch reports infinity.
pub fn finite_diff_check<T, F>(params: &Mlp<T>, loss: F, analytic: &GradBuffer<T>, epsilon: T) -> T
where
    T: Scalar,
    F: Fn(&Mlp<T>) -> T,
{
    if !analytic.congruent_with(params) {
        return T::infinity();
    }
    let floor = T::lit(1e-5);
    let two_eps = epsilon + epsilon;
    let mut probe = params.clone();
    let mut worst = T::zero();
    for (idx, &a) in analytic.iter().enumerate() {
        let orig = *probe.params().nth(idx).expect("index within params");
        set(&mut probe, idx, orig + epsilon);
        let up = loss(&probe);
        set(&mut probe, idx, orig - epsilon);
        let down = loss(&probe);
        set(&mut probe, idx, orig);
        let numeric = (up - down) / two_eps;
        let denom = a.abs().max(numeric.abs()).max(floor);
        let err = (a - numeric).abs() / denom;
        if err.is_nan() || err > worst {
            worst = err;
        }
    }
    worst
}

fn set<T: Scalar>(net: &mut Mlp<T>, idx: usize, value: T) {
    *net.params_mut().nth(idx).expect("index within params") = value;
}
