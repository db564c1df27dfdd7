//! Learning-rate schedule and Nesterov momentum.

use crate::tensornet::{Scalar, Tensor};

/// `lr_initial` for the first epoch, half of it for the second, then a
/// geometric decay that reaches `lr_final` exactly at the last epoch.
pub fn lr_schedule(epoch: usize, epochs: usize, lr_initial: f64, lr_final: f64) -> f64 {
    let half = lr_initial / 2.0;
    match epoch {
        0 => lr_initial,
        1 => half,
        e if e + 1 >= epochs => lr_final,
        e => half * (lr_final / half).powf((e - 1) as f64 / (epochs - 2) as f64),
    }
}

/// `v ← μ·v − lr·g`, `w ← w + v`, where `g` was evaluated at the lookahead
/// point `w + μ·v` (see [`lookahead`]).
pub fn nesterov_step<T: Scalar>(
    params: &mut [Tensor<T>],
    velocities: &mut [Tensor<T>],
    grads: &[Tensor<T>],
    lr: f64,
    mu: f64,
) {
    let (lr, mu) = (T::from_f64(lr), T::from_f64(mu));
    for ((w, v), g) in params.iter_mut().zip(velocities.iter_mut()).zip(grads) {
        for ((wi, vi), &gi) in w.data_mut().iter_mut().zip(v.data_mut()).zip(g.data()) {
            *vi = mu * *vi - lr * gi;
            *wi = *wi + *vi;
        }
    }
}

/// Writes `w + μ·v` into `out`.
pub fn lookahead<T: Scalar>(params: &[Tensor<T>], velocities: &[Tensor<T>], mu: f64, out: &mut [Tensor<T>]) {
    let mu = T::from_f64(mu);
    for ((w, v), o) in params.iter().zip(velocities).zip(out.iter_mut()) {
        for ((&wi, &vi), oi) in w.data().iter().zip(v.data()).zip(o.data_mut()) {
            *oi = wi + mu * vi;
        }
    }
}
