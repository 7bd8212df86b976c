use candle_core::{Device, Tensor, Var};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

/// Named trainable parameters and non-trainable buffers, in creation order.
#[derive(Debug, Clone)]
pub struct ParamStore {
    params: Vec<(String, Var)>,
    buffers: Vec<(String, Var)>,
}

impl ParamStore {
    pub fn params(&self) -> &[(String, Var)] {
        &self.params
    }

    pub fn buffers(&self) -> &[(String, Var)] {
        &self.buffers
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(|(_, v)| v.elem_count()).sum()
    }

    /// Overwrites a parameter or buffer by name, checking the shape.
    pub fn assign(&self, name: &str, dims: &[usize], values: Vec<f32>) -> Result<()> {
        let var = self
            .params
            .iter()
            .chain(&self.buffers)
            .find(|(n, _)| n == name)
            .map(|(_, v)| v)
            .ok_or_else(|| Error::ModelMismatch(format!("unknown tensor {name}")))?;
        if var.dims() != dims {
            return Err(Error::ModelMismatch(format!(
                "tensor {name} has shape {:?}, file has {:?}",
                var.dims(),
                dims
            )));
        }
        var.set(&Tensor::from_vec(values, dims, var.device())?)?;
        Ok(())
    }
}

/// Deterministic parameter factory.
pub(crate) struct Init {
    rng: ChaCha8Rng,
    device: Device,
    store: ParamStore,
}

impl Init {
    pub fn new(rng: ChaCha8Rng) -> Self {
        Init {
            rng,
            device: Device::Cpu,
            store: ParamStore {
                params: Vec::new(),
                buffers: Vec::new(),
            },
        }
    }

    pub fn finish(self) -> ParamStore {
        self.store
    }

    fn var(&self, values: Vec<f32>, dims: &[usize]) -> Result<Var> {
        Ok(Var::from_tensor(&Tensor::from_vec(
            values,
            dims,
            &self.device,
        )?)?)
    }

    fn push(&mut self, name: &str, values: Vec<f32>, dims: &[usize]) -> Result<Var> {
        let v = self.var(values, dims)?;
        self.store.params.push((name.to_string(), v.clone()));
        Ok(v)
    }

    pub fn uniform(&mut self, name: &str, dims: &[usize], bound: f64) -> Result<Var> {
        let n = dims.iter().product();
        let values = (0..n)
            .map(|_| self.rng.random_range(-bound..bound) as f32)
            .collect();
        self.push(name, values, dims)
    }

    pub fn normal(&mut self, name: &str, dims: &[usize], std: f64) -> Result<Var> {
        let n = dims.iter().product();
        let dist = Normal::new(0.0, std).map_err(|e| Error::Numeric(e.to_string()))?;
        let values = (0..n).map(|_| dist.sample(&mut self.rng) as f32).collect();
        self.push(name, values, dims)
    }

    pub fn constant(&mut self, name: &str, dims: &[usize], value: f32) -> Result<Var> {
        let n = dims.iter().product();
        self.push(name, vec![value; n], dims)
    }

    pub fn buffer(&mut self, name: &str, dims: &[usize], value: f32) -> Result<Var> {
        let n: usize = dims.iter().product();
        let v = self.var(vec![value; n], dims)?;
        self.store.buffers.push((name.to_string(), v.clone()));
        Ok(v)
    }
}
