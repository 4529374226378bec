use super::tensor::ParamSet;
use crate::error::{Error, Result};

/// Bias-corrected Adam.
///
/// Moment buffers are allocated lazily on the first step to match the
/// parameter shapes they are driven with.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step_count: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Default for Adam {
    fn default() -> Self {
        Adam::new(0.001)
    }
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step_count: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    pub fn second_moments(&self) -> &[Vec<f64>] {
        &self.v
    }

    /// Applies one update and clears every gradient.
    ///
    /// Every parameter must carry a gradient; the set must keep the same
    /// shapes across calls.
    pub fn step(&mut self, params: &mut ParamSet) -> Result<()> {
        if let Some((name, _)) = params.iter().find(|(_, t)| t.grad().is_none()) {
            return Err(Error::Usage(format!("parameter `{name}` has no gradient")));
        }
        if self.m.is_empty() {
            self.m = params.iter().map(|(_, t)| vec![0.0; t.numel()]).collect();
            self.v = self.m.clone();
        } else if self.m.len() != params.len()
            || self.m.iter().zip(params.iter()).any(|(m, (_, t))| m.len() != t.numel())
        {
            return Err(Error::Usage("optimizer state does not match parameter shapes".into()));
        }

        self.step_count += 1;
        let t = self.step_count as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for ((m, v), (_, p)) in self.m.iter_mut().zip(&mut self.v).zip(params.iter_mut()) {
            let g = p.take_grad().expect("checked above");
            for (((w, g), m), v) in p.data_mut().iter_mut().zip(&g).zip(m.iter_mut()).zip(v.iter_mut()) {
                *m = self.beta1 * *m + (1.0 - self.beta1) * g;
                *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
                let m_hat = *m / bc1;
                let v_hat = *v / bc2;
                *w -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Tensor;

    fn single(value: f64, grad: f64) -> ParamSet {
        let mut p = ParamSet::new();
        let id = p.insert("w", Tensor::scalar(value));
        p.get_mut(id).accumulate_grad(&[grad]).unwrap();
        p
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut p = single(0.7, 0.0);
        let mut adam = Adam::default();
        adam.step(&mut p).unwrap();
        assert_eq!(p.iter().next().unwrap().1.data(), &[0.7]);
    }

    #[test]
    fn first_step_moves_by_lr() {
        // m_hat = g, v_hat = g^2, so the step is lr * g / (|g| + eps).
        for g in [1.0, 100.0] {
            let mut p = single(0.0, g);
            let mut adam = Adam::new(0.001);
            adam.step(&mut p).unwrap();
            let w = p.iter().next().unwrap().1.data()[0];
            let expected = -0.001 * g / (g + 1e-8);
            assert!((w - expected).abs() < 1e-15);
            assert!((w + 0.001).abs() < 1e-6);
        }
    }

    #[test]
    fn gradients_consumed_and_counter_advances() {
        let mut p = single(1.0, 0.5);
        let mut adam = Adam::default();
        adam.step(&mut p).unwrap();
        assert_eq!(adam.step_count(), 1);
        assert!(p.iter().all(|(_, t)| t.grad().is_none()));
        assert!(matches!(adam.step(&mut p), Err(Error::Usage(_))));
        assert_eq!(adam.step_count(), 1);
    }

    #[test]
    fn zero_lr_is_identity() {
        let mut p = single(-3.25, 7.0);
        let mut adam = Adam::new(0.0);
        adam.step(&mut p).unwrap();
        assert_eq!(p.iter().next().unwrap().1.data(), &[-3.25]);
        assert!(adam.second_moments()[0][0] >= 0.0);
    }
}
