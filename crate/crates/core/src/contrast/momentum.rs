//! The momentum branch: a frozen structural copy of the online network,
//! updated only by exponential moving average.

use crate::segnet::Model;
use crate::tensor::Tensor;

/// shadow <- m * shadow + (1 - m) * online, parameter by parameter.
pub fn ema_update_params(shadow: &[(String, Tensor)], online: &[(String, Tensor)], m: f64) {
    assert!((0.0..=1.0).contains(&m), "momentum must be in [0,1]");
    assert_eq!(shadow.len(), online.len(), "parameter lists differ in length");
    for ((sn, st), (on, ot)) in shadow.iter().zip(online) {
        assert_eq!(sn, on, "parameter name mismatch: {sn} vs {on}");
        assert_eq!(st.shape(), ot.shape(), "parameter shape mismatch at {sn}");
        let sv = st.data();
        let ov = ot.data();
        let mixed: Vec<f64> = sv.iter().zip(ov.iter()).map(|(s, o)| m * s + (1.0 - m) * o).collect();
        st.set_data(mixed);
    }
}

pub struct MomentumEncoder {
    pub model: Model,
    pub momentum: f64,
}

impl MomentumEncoder {
    /// Start as an exact frozen copy of the online model.
    pub fn new(online: &Model, momentum: f64) -> MomentumEncoder {
        assert!((0.0..=1.0).contains(&momentum), "momentum must be in [0,1]");
        MomentumEncoder { model: online.detached_clone(), momentum }
    }

    pub fn ema_update(&self, online: &Model) {
        ema_update_params(&self.model.named_params(), &online.named_params(), self.momentum);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair(shadow: f64, online: f64) -> (Vec<(String, Tensor)>, Vec<(String, Tensor)>) {
        (
            vec![("w".into(), Tensor::from_vec(&[2], vec![shadow; 2]))],
            vec![("w".into(), Tensor::from_vec(&[2], vec![online; 2]))],
        )
    }

    #[test]
    fn momentum_one_keeps_shadow() {
        let (s, o) = pair(0.5, 1.0);
        ema_update_params(&s, &o, 1.0);
        assert_eq!(s[0].1.to_vec(), vec![0.5, 0.5]);
    }

    #[test]
    fn momentum_zero_copies_online() {
        let (s, o) = pair(0.5, 1.0);
        ema_update_params(&s, &o, 0.0);
        assert_eq!(s[0].1.to_vec(), vec![1.0, 1.0]);
    }

    #[test]
    fn momentum_arithmetic() {
        let (s, o) = pair(0.0, 1.0);
        ema_update_params(&s, &o, 0.9);
        for v in s[0].1.to_vec() {
            assert!((v - 0.1).abs() < 1e-15);
        }
    }

    #[test]
    #[should_panic(expected = "shape mismatch")]
    fn shape_mismatch_is_rejected() {
        let s = vec![("w".to_string(), Tensor::zeros(&[2]))];
        let o = vec![("w".to_string(), Tensor::zeros(&[3]))];
        ema_update_params(&s, &o, 0.5);
    }
}
