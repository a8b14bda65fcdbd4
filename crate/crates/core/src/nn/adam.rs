use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::param::ParamStore;
use crate::tensor::{Scalar, Tensor4};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamHyper {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        AdamHyper {
            lr: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamHyper {
    pub fn validate(&self) -> Result<()> {
        let ok = self.lr >= 0.0
            && self.lr.is_finite()
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.eps > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid Adam hyper-parameters {self:?}")))
        }
    }
}

/// First and second moments for every parameter of one [`ParamStore`], in store order.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T> {
    pub hyper: AdamHyper,
    pub t: u64,
    pub m: Vec<Tensor4<T>>,
    pub v: Vec<Tensor4<T>>,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(store: &ParamStore<T>, hyper: AdamHyper) -> Self {
        let zeros = || store.iter().map(|p| Tensor4::zeros(p.value.shape())).collect();
        AdamState {
            hyper,
            t: 0,
            m: zeros(),
            v: zeros(),
        }
    }

    /// One bias-corrected Adam update over all trainable parameters, then zeroes every grad.
    ///
    /// A non-finite gradient aborts the step before anything is modified.
    pub fn step(&mut self, store: &mut ParamStore<T>) -> Result<()> {
        if self.m.len() != store.len() {
            return Err(Error::Contract(format!(
                "optimizer tracks {} parameters, model has {}",
                self.m.len(),
                store.len()
            )));
        }
        if let Some(bad) = store.iter().find(|p| p.trainable && !p.grad.all_finite()) {
            return Err(Error::Numeric(format!("non-finite gradient in parameter {}", bad.id)));
        }
        self.t += 1;
        let h = self.hyper;
        let b1 = T::of(h.beta1);
        let b2 = T::of(h.beta2);
        let one = T::one();
        let bc1 = one - T::of(h.beta1).powi(self.t as i32);
        let bc2 = one - T::of(h.beta2).powi(self.t as i32);
        let lr = T::of(h.lr);
        let eps = T::of(h.eps);
        for ((p, m), v) in store.iter_mut().zip(&mut self.m).zip(&mut self.v) {
            if p.trainable {
                let params = p.value.data_mut().iter_mut();
                let grads = p.grad.data();
                for (((theta, &g), mi), vi) in params.zip(grads).zip(m.data_mut()).zip(v.data_mut()) {
                    *mi = b1 * *mi + (one - b1) * g;
                    *vi = b2 * *vi + (one - b2) * g * g;
                    let m_hat = *mi / bc1;
                    let v_hat = *vi / bc2;
                    *theta = *theta - lr * m_hat / (v_hat.sqrt() + eps);
                }
            }
            p.zero_grad();
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_store(theta: f64) -> ParamStore<f64> {
        let mut s = ParamStore::new();
        s.add("theta", Tensor4::full([1, 1, 1, 1], theta)).unwrap();
        s
    }

    #[test]
    fn zero_gradients_leave_parameters_unchanged() {
        let mut s = scalar_store(0.3);
        s.add("w", Tensor4::from_vec([1, 1, 1, 3], vec![1.0, -2.0, 0.5]).unwrap()).unwrap();
        let before = s.clone();
        let mut st = AdamState::new(&s, AdamHyper::default());
        for _ in 0..3 {
            st.step(&mut s).unwrap();
        }
        assert_eq!(s, before);
        assert_eq!(st.t, 3);
    }

    #[test]
    fn first_step_has_magnitude_lr() {
        let mut s = scalar_store(1.0);
        s.get_mut(crate::nn::ParamId(0)).grad.fill(10.0);
        let mut st = AdamState::new(&s, AdamHyper::default());
        st.step(&mut s).unwrap();
        let theta = s.get(crate::nn::ParamId(0)).value.data()[0];
        // m_hat = 10, v_hat = 100 -> update = 0.01 * 10 / (10 + 1e-8)
        let expect = 1.0 - 0.01 * 10.0 / (10.0 + 1e-8);
        assert!((theta - expect).abs() < 1e-15);
        assert!((theta - 0.99).abs() < 1e-9);
        assert_eq!(s.get(crate::nn::ParamId(0)).grad.data()[0], 0.0);
    }

    #[test]
    fn two_steps_on_quadratic_match_scripted_recurrence() {
        // f(theta) = 0.5 * a * (theta - c)^2
        let (a, c) = (3.0, 0.25);
        let h = AdamHyper { lr: 0.05, ..AdamHyper::default() };
        let mut s = scalar_store(2.0);
        let mut st = AdamState::new(&s, h);

        let (mut th, mut m, mut v) = (2.0f64, 0.0f64, 0.0f64);
        for t in 1..=2 {
            let g = a * (th - c);
            m = 0.9 * m + 0.1 * g;
            v = 0.999 * v + 0.001 * g * g;
            let mh = m / (1.0 - 0.9f64.powi(t));
            let vh = v / (1.0 - 0.999f64.powi(t));
            th -= 0.05 * mh / (vh.sqrt() + 1e-8);

            let cur = s.get(crate::nn::ParamId(0)).value.data()[0];
            s.get_mut(crate::nn::ParamId(0)).grad.fill(a * (cur - c));
            st.step(&mut s).unwrap();
            let got = s.get(crate::nn::ParamId(0)).value.data()[0];
            assert!((got - th).abs() < 1e-12, "step {t}: {got} vs {th}");
        }
        assert!(st.v.iter().all(|v| v.data().iter().all(|&x| x >= 0.0)));
    }

    #[test]
    fn nan_gradient_aborts_naming_parameter() {
        let mut s = scalar_store(1.0);
        s.add("bad.weight", Tensor4::full([1, 1, 1, 2], 0.0)).unwrap();
        s.get_mut(crate::nn::ParamId(1)).grad.fill(f64::NAN);
        let before = s.get(crate::nn::ParamId(0)).value.clone();
        let mut st = AdamState::new(&s, AdamHyper::default());
        match st.step(&mut s) {
            Err(Error::Numeric(msg)) => assert!(msg.contains("bad.weight")),
            other => panic!("expected numeric error, got {other:?}"),
        }
        assert_eq!(st.t, 0);
        assert_eq!(s.get(crate::nn::ParamId(0)).value, before);
    }

    #[test]
    fn zero_learning_rate_freezes_parameters() {
        let mut s = scalar_store(0.7);
        let before = s.get(crate::nn::ParamId(0)).value.clone();
        let mut st = AdamState::new(&s, AdamHyper { lr: 0.0, ..AdamHyper::default() });
        for _ in 0..5 {
            s.get_mut(crate::nn::ParamId(0)).grad.fill(-4.0);
            st.step(&mut s).unwrap();
        }
        assert_eq!(s.get(crate::nn::ParamId(0)).value, before);
    }
}
