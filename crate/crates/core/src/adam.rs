//! Adam with bias correction over any [`ParamSet`].

use crate::linalg::ParamSet;

#[derive(Debug, Clone, Copy, PartialEq)]
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

/// First/second moment accumulators mirroring the shapes of `P`.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam<P> {
    pub config: AdamConfig,
    pub m: P,
    pub v: P,
    pub step: u64,
}

impl<P: ParamSet + Clone> Adam<P> {
    /// `zeros` must be a zero-filled value with the parameter shapes.
    pub fn new(zeros: P, config: AdamConfig) -> Self {
        Adam {
            config,
            m: zeros.clone(),
            v: zeros,
            step: 0,
        }
    }

    pub fn update(&mut self, params: &mut P, grads: &P, lr: f64) {
        self.step += 1;
        let AdamConfig { beta1, beta2, eps } = self.config;
        let bc1 = 1.0 - beta1.powi(self.step as i32);
        let bc2 = 1.0 - beta2.powi(self.step as i32);
        let moments = self.m.tensors_mut().into_iter().zip(self.v.tensors_mut());
        for ((p, g), (m, v)) in params.tensors_mut().into_iter().zip(grads.tensors()).zip(moments) {
            for i in 0..p.data.len() {
                let gi = g.data[i];
                m.data[i] = beta1 * m.data[i] + (1.0 - beta1) * gi;
                v.data[i] = beta2 * v.data[i] + (1.0 - beta2) * gi * gi;
                if lr != 0.0 {
                    let m_hat = m.data[i] / bc1;
                    let v_hat = v.data[i] / bc2;
                    p.data[i] -= lr * m_hat / (v_hat.sqrt() + eps);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Mat;

    #[derive(Clone)]
    struct One(Mat);

    impl ParamSet for One {
        fn tensors(&self) -> Vec<&Mat> {
            vec![&self.0]
        }
        fn tensors_mut(&mut self) -> Vec<&mut Mat> {
            vec![&mut self.0]
        }
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        // After one step m_hat = g and v_hat = g^2, so the move is lr * sign(g).
        let mut p = One(Mat::from_vec(1, 2, vec![1.0, -1.0]));
        let g = One(Mat::from_vec(1, 2, vec![0.3, -4.0]));
        let mut opt = Adam::new(One(Mat::zeros(1, 2)), AdamConfig::default());
        opt.update(&mut p, &g, 0.1);
        assert!((p.0.data[0] - 0.9).abs() < 1e-6);
        assert!((p.0.data[1] + 0.9).abs() < 1e-6);
    }

    #[test]
    fn minimizes_a_quadratic() {
        let mut p = One(Mat::from_vec(1, 1, vec![5.0]));
        let mut opt = Adam::new(One(Mat::zeros(1, 1)), AdamConfig::default());
        for _ in 0..2000 {
            let g = One(Mat::from_vec(1, 1, vec![2.0 * (p.0.data[0] - 2.0)]));
            opt.update(&mut p, &g, 0.05);
        }
        assert!((p.0.data[0] - 2.0).abs() < 1e-3);
    }

    #[test]
    fn zero_rate_and_zero_gradient_leave_params_untouched() {
        let mut p = One(Mat::from_vec(1, 2, vec![0.25, -0.0]));
        let before = p.0.clone();
        let mut opt = Adam::new(One(Mat::zeros(1, 2)), AdamConfig::default());
        opt.update(&mut p, &One(Mat::from_vec(1, 2, vec![1.0, 2.0])), 0.0);
        assert_eq!(p.0.data[0].to_bits(), before.data[0].to_bits());
        let mut q = One(Mat::from_vec(1, 1, vec![0.7]));
        let mut opt = Adam::new(One(Mat::zeros(1, 1)), AdamConfig::default());
        for _ in 0..10 {
            opt.update(&mut q, &One(Mat::zeros(1, 1)), 0.1);
        }
        assert_eq!(q.0.data[0], 0.7);
    }
}
