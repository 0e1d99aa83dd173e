//! Finite-difference gradient verification.

use super::{no_grad, Tensor};

/// Compare the reverse-mode gradient of `f` at `x` against central finite
/// differences, coordinate by coordinate. Returns the maximum over
/// coordinates of `|analytic - numeric| / max(1, |numeric|)`.
///
/// `f` must reduce to a scalar. `eps` is the half-step of the central
/// difference; values in `[1e-7, 1e-3]` are sensible for f64.
pub fn grad_check(f: impl Fn(&Tensor) -> Tensor, x: &Tensor, eps: f64) -> f64 {
    assert!((1e-7..=1e-3).contains(&eps), "grad_check: eps {eps} out of range");
    let leaf = x.detach();
    leaf.set_requires_grad(true);
    let out = f(&leaf);
    assert_eq!(out.numel(), 1, "grad_check: f must produce a scalar");
    out.backward();
    let analytic = leaf.grad_or_zeros();

    let base = x.to_vec();
    let shape = x.shape().to_vec();
    let mut worst: f64 = 0.0;
    for i in 0..base.len() {
        let numeric = no_grad(|| {
            let mut plus = base.clone();
            plus[i] += eps;
            let mut minus = base.clone();
            minus[i] -= eps;
            let fp = f(&Tensor::from_vec(&shape, plus)).item();
            let fm = f(&Tensor::from_vec(&shape, minus)).item();
            (fp - fm) / (2.0 * eps)
        });
        let err = (analytic[i] - numeric).abs() / numeric.abs().max(1.0);
        worst = worst.max(err);
    }
    worst
}

/// Finite-difference check against a parameter that lives inside a model:
/// `loss` is re-evaluated while `param`'s data is perturbed in place.
/// Returns the same max-relative-error metric as [`grad_check`].
pub fn grad_check_param(loss: impl Fn() -> Tensor, param: &Tensor, eps: f64) -> f64 {
    assert!((1e-7..=1e-3).contains(&eps), "grad_check_param: eps {eps} out of range");
    let was_tracked = param.requires_grad();
    param.set_requires_grad(true);
    param.zero_grad();
    let out = loss();
    assert_eq!(out.numel(), 1, "grad_check_param: loss must be scalar");
    out.backward();
    let analytic = param.grad_or_zeros();
    param.zero_grad();

    let base = param.to_vec();
    let mut worst: f64 = 0.0;
    for i in 0..base.len() {
        let numeric = no_grad(|| {
            let mut plus = base.clone();
            plus[i] += eps;
            param.set_data(plus);
            let fp = loss().item();
            let mut minus = base.clone();
            minus[i] -= eps;
            param.set_data(minus);
            let fm = loss().item();
            (fp - fm) / (2.0 * eps)
        });
        let err = (analytic[i] - numeric).abs() / numeric.abs().max(1.0);
        worst = worst.max(err);
    }
    param.set_data(base);
    param.set_requires_grad(was_tracked);
    worst
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_of_squares_gradient() {
        let x = Tensor::from_vec(&[2], vec![1.0, 2.0]);
        let err = grad_check(|t| t.mul(t).sum_all(), &x, 1e-5);
        assert!(err < 1e-8, "quadratic should be near-exact, got {err}");
        // Analytic values: [2, 4].
        let leaf = x.detach();
        leaf.set_requires_grad(true);
        leaf.mul(&leaf).sum_all().backward();
        assert_eq!(leaf.grad().unwrap(), vec![2.0, 4.0]);
    }

    #[test]
    fn constant_function_gradient_is_zero() {
        let x = Tensor::from_vec(&[3], vec![1.0, -1.0, 0.5]);
        let err = grad_check(|t| t.mul_scalar(0.0).sum_all(), &x, 1e-5);
        assert_eq!(err, 0.0);
    }
}
