use super::{Scalar, Tensor};
use crate::{Error, Result};

/// Adam optimizer state with bias correction.
///
/// Moments are allocated on the first update and must match the parameter shapes
/// on every later call.
#[derive(Clone, Debug)]
pub struct AdamState<F> {
    pub step: u64,
    pub first_moment: Vec<Vec<F>>,
    pub second_moment: Vec<Vec<F>>,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub learning_rate: f64,
}

impl<F: Scalar> AdamState<F> {
    pub fn new(learning_rate: f64) -> Self {
        Self {
            step: 0,
            first_moment: Vec::new(),
            second_moment: Vec::new(),
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            learning_rate,
        }
    }

    /// Applies one update using each tensor's stored gradient (absent = zero).
    ///
    /// Nothing is modified if any gradient is non-finite; the error names the
    /// offending parameter.
    pub fn update(&mut self, params: &mut [(&str, &mut Tensor<F>)]) -> Result<()> {
        if self.first_moment.is_empty() {
            self.first_moment = params.iter().map(|(_, p)| vec![F::ZERO; p.len()]).collect();
            self.second_moment = self.first_moment.clone();
        }
        if self.first_moment.len() != params.len() {
            return Err(Error::Shape(format!(
                "optimizer tracks {} parameters, got {}",
                self.first_moment.len(),
                params.len()
            )));
        }
        for ((name, p), m) in params.iter().zip(&self.first_moment) {
            if p.len() != m.len() {
                return Err(Error::Shape(format!(
                    "parameter `{name}` has {} values, moment has {}",
                    p.len(),
                    m.len()
                )));
            }
            if let Some(g) = p.grad() {
                if let Some(bad) = g.iter().position(|v| !v.is_finite()) {
                    return Err(Error::NonFiniteGradient {
                        param: format!("{name}[{bad}]"),
                        step: self.step + 1,
                    });
                }
            }
        }

        self.step += 1;
        let t = self.step as i32;
        let (b1, b2) = (F::from_f64(self.beta1), F::from_f64(self.beta2));
        let c1 = F::from_f64(1.0 - self.beta1.powi(t));
        let c2 = F::from_f64(1.0 - self.beta2.powi(t));
        let lr = F::from_f64(self.learning_rate);
        let eps = F::from_f64(self.epsilon);

        for (i, (name, p)) in params.iter_mut().enumerate() {
            let Some(g) = p.grad().map(<[F]>::to_vec) else {
                // zero gradient: moments decay, update stays zero
                for v in self.first_moment[i].iter_mut() {
                    *v *= b1;
                }
                for v in self.second_moment[i].iter_mut() {
                    *v *= b2;
                }
                continue;
            };
            let m = &mut self.first_moment[i];
            let v = &mut self.second_moment[i];
            let data = p.data_mut();
            for j in 0..data.len() {
                m[j] = b1 * m[j] + (F::ONE - b1) * g[j];
                v[j] = b2 * v[j] + (F::ONE - b2) * g[j] * g[j];
                let m_hat = m[j] / c1;
                let v_hat = v[j] / c2;
                data[j] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
            if data.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite {
                    op: format!("adam update of `{name}`"),
                });
            }
        }
        Ok(())
    }
}
