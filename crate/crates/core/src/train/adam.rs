use candle_core::{Tensor, Var};

use crate::error::Result;

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

/// Adam with bias correction; moments kept per parameter in store order.
pub struct Adam {
    pub(crate) lr: f64,
    pub(crate) step: u64,
    pub(crate) m: Vec<Tensor>,
    pub(crate) v: Vec<Tensor>,
}

impl Adam {
    pub fn new(params: &[(String, Var)], lr: f64) -> Result<Self> {
        let zeros = params
            .iter()
            .map(|(_, p)| p.zeros_like())
            .collect::<candle_core::Result<Vec<_>>>()?;
        Ok(Adam {
            lr,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        })
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Applies one update; `grads[i]` belongs to `params[i]`.
    pub fn update(&mut self, params: &[(String, Var)], grads: &[Tensor]) -> Result<()> {
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - BETA1.powi(t);
        let c2 = 1.0 - BETA2.powi(t);
        for (i, ((_, p), g)) in params.iter().zip(grads).enumerate() {
            // Detached so the moments do not chain autograd history across steps.
            let g = g.detach();
            let m = ((&self.m[i] * BETA1)? + (&g * (1.0 - BETA1))?)?.detach();
            let v = ((&self.v[i] * BETA2)? + (g.sqr()? * (1.0 - BETA2))?)?.detach();
            let denom = ((&v / c2)?.sqrt()? + EPSILON)?;
            let delta = ((&m / c1)? / denom)?;
            p.set(&(p.as_tensor() - (delta * self.lr)?)?)?;
            self.m[i] = m;
            self.v[i] = v;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use candle_core::Device;

    #[test]
    fn first_step_moves_by_learning_rate() {
        let p = Var::from_vec(vec![1.0f32, -2.0, 0.5], 3, &Device::Cpu).unwrap();
        let params = vec![("p".to_string(), p.clone())];
        let mut adam = Adam::new(&params, 0.1).unwrap();
        let g = Tensor::new(&[3.0f32, -0.5, 0.0], &Device::Cpu).unwrap();
        adam.update(&params, &[g]).unwrap();
        let v = p.as_tensor().to_vec1::<f32>().unwrap();
        assert!((v[0] - 0.9).abs() < 1e-6);
        assert!((v[1] + 1.9).abs() < 1e-6);
        assert_eq!(v[2], 0.5);
        assert_eq!(adam.step_count(), 1);
    }

    #[test]
    fn minimizes_a_quadratic() {
        let p = Var::from_vec(vec![4.0f32], 1, &Device::Cpu).unwrap();
        let params = vec![("p".to_string(), p.clone())];
        let mut adam = Adam::new(&params, 0.05).unwrap();
        for _ in 0..500 {
            let g = (p.as_tensor() * 2.0).unwrap();
            adam.update(&params, &[g]).unwrap();
        }
        assert!(p.as_tensor().to_vec1::<f32>().unwrap()[0].abs() < 0.05);
    }
}
