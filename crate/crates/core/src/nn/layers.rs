use candle_core::{Tensor, Var, D};

use super::im2col::im2col3x3;
use super::params::Init;
use super::rowops::{add_row, mul_row};
use crate::error::Result;

const NORM_EPS: f64 = 1e-5;
const BN_MOMENTUM: f64 = 0.1;

/// `(rows, n)` copies of a length-`n` vector.
pub(crate) fn repeat_rows(v: &Tensor, rows: usize) -> Result<Tensor> {
    let zeros = Tensor::zeros((rows, v.elem_count()), v.dtype(), v.device())?;
    Ok(add_row(&zeros, v)?)
}

/// Fully connected layer, weight stored as `(in, out)`.
pub(crate) struct Linear {
    w: Var,
    b: Var,
}

impl Linear {
    pub fn new(init: &mut Init, name: &str, input: usize, output: usize) -> Result<Self> {
        let bound = 1.0 / (input as f64).sqrt();
        Ok(Linear {
            w: init.uniform(&format!("{name}.weight"), &[input, output], bound)?,
            b: init.uniform(&format!("{name}.bias"), &[output], bound)?,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let dims = x.dims().to_vec();
        let (last, lead) = dims.split_last().expect("rank >= 1");
        let rows: usize = lead.iter().product();
        let y = add_row(
            &x.reshape((rows, *last))?.matmul(self.w.as_tensor())?,
            self.b.as_tensor(),
        )?;
        let mut out = lead.to_vec();
        out.push(self.w.dim(1)?);
        Ok(y.reshape(out)?)
    }
}

/// 3x3 convolution with zero padding 1, lowered to patch extraction + matmul.
pub(crate) struct Conv3x3 {
    w: Var,
    stride: usize,
}

impl Conv3x3 {
    pub fn new(
        init: &mut Init,
        name: &str,
        cin: usize,
        cout: usize,
        stride: usize,
    ) -> Result<Self> {
        let fan_in = (cin * 9) as f64;
        Ok(Conv3x3 {
            w: init.uniform(
                &format!("{name}.weight"),
                &[cout, cin * 9],
                (6.0 / fan_in).sqrt(),
            )?,
            stride,
        })
    }

    /// `(Cin, B, H, W) -> (Cout, B, Ho, Wo)`.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let (_, b, h, w) = x.dims4()?;
        let (ho, wo) = (h.div_ceil(self.stride), w.div_ceil(self.stride));
        let cols = im2col3x3(x, self.stride)?;
        let out = self.w.as_tensor().matmul(&cols)?;
        Ok(out.reshape(((), b, ho, wo))?)
    }
}

pub(crate) struct BatchNorm2d {
    gamma: Var,
    beta: Var,
    running_mean: Var,
    running_var: Var,
}

impl BatchNorm2d {
    pub fn new(init: &mut Init, name: &str, channels: usize) -> Result<Self> {
        Ok(BatchNorm2d {
            gamma: init.constant(&format!("{name}.gamma"), &[channels], 1.0)?,
            beta: init.constant(&format!("{name}.beta"), &[channels], 0.0)?,
            running_mean: init.buffer(&format!("{name}.running_mean"), &[channels], 0.0)?,
            running_var: init.buffer(&format!("{name}.running_var"), &[channels], 1.0)?,
        })
    }

    /// Channel-first input `(C, B, H, W)`. Batch statistics (and a
    /// running-average update) when `train`, running statistics otherwise.
    pub fn forward(&self, x: &Tensor, train: bool) -> Result<Tensor> {
        let dims = x.dims4()?;
        let (c, b, h, w) = dims;
        let flat = x.reshape((c, b * h * w))?;
        let (mean, var) = if train {
            let mean = flat.mean_keepdim(1)?;
            let centered = flat.broadcast_sub(&mean)?;
            let var = centered.sqr()?.mean_keepdim(1)?;
            let n = (b * h * w) as f64;
            let unbiased = if n > 1.0 { n / (n - 1.0) } else { 1.0 };
            let m = BN_MOMENTUM;
            let rm = (self.running_mean.as_tensor().affine(1.0 - m, 0.0)?
                + mean.detach().flatten_all()?.affine(m, 0.0)?)?;
            let rv = (self.running_var.as_tensor().affine(1.0 - m, 0.0)?
                + var.detach().flatten_all()?.affine(m * unbiased, 0.0)?)?;
            self.running_mean.set(&rm)?;
            self.running_var.set(&rv)?;
            (mean, var)
        } else {
            (
                self.running_mean.as_tensor().reshape((c, 1))?,
                self.running_var.as_tensor().reshape((c, 1))?,
            )
        };
        let scale = (var + NORM_EPS)?
            .sqrt()?
            .recip()?
            .mul(&self.gamma.as_tensor().reshape((c, 1))?)?;
        let y = flat
            .broadcast_sub(&mean)?
            .broadcast_mul(&scale)?
            .broadcast_add(&self.beta.as_tensor().reshape((c, 1))?)?;
        Ok(y.reshape(dims)?)
    }
}

pub(crate) struct ConvBlock {
    conv: Conv3x3,
    bn: BatchNorm2d,
}

impl ConvBlock {
    pub fn new(
        init: &mut Init,
        name: &str,
        cin: usize,
        cout: usize,
        stride: usize,
    ) -> Result<Self> {
        Ok(ConvBlock {
            conv: Conv3x3::new(init, &format!("{name}.conv"), cin, cout, stride)?,
            bn: BatchNorm2d::new(init, &format!("{name}.bn"), cout)?,
        })
    }

    pub fn forward(&self, x: &Tensor, train: bool) -> Result<Tensor> {
        Ok(self.bn.forward(&self.conv.forward(x)?, train)?.relu()?)
    }
}

pub(crate) struct LayerNorm {
    gamma: Var,
    beta: Var,
}

impl LayerNorm {
    pub fn new(init: &mut Init, name: &str, dim: usize) -> Result<Self> {
        Ok(LayerNorm {
            gamma: init.constant(&format!("{name}.gamma"), &[dim], 1.0)?,
            beta: init.constant(&format!("{name}.beta"), &[dim], 0.0)?,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let dims = x.dims().to_vec();
        let d = *dims.last().expect("rank >= 1");
        let rows = x.elem_count() / d;
        let flat = x.reshape((rows, d))?;
        let mean = flat.mean_keepdim(1)?;
        let centered = flat.broadcast_sub(&mean)?;
        let var = centered.sqr()?.mean_keepdim(1)?;
        let normed = centered.broadcast_div(&(var + NORM_EPS)?.sqrt()?)?;
        let y = add_row(
            &mul_row(&normed, self.gamma.as_tensor())?,
            self.beta.as_tensor(),
        )?;
        Ok(y.reshape(dims)?)
    }
}

fn softmax_last(x: &Tensor) -> Result<Tensor> {
    let max = x.max_keepdim(D::Minus1)?.detach();
    let e = x.broadcast_sub(&max)?.exp()?;
    Ok(e.broadcast_div(&e.sum_keepdim(D::Minus1)?)?)
}

pub(crate) struct MultiHeadAttention {
    q: Linear,
    k: Linear,
    v: Linear,
    o: Linear,
    heads: usize,
}

impl MultiHeadAttention {
    pub fn new(init: &mut Init, name: &str, dim: usize, heads: usize) -> Result<Self> {
        Ok(MultiHeadAttention {
            q: Linear::new(init, &format!("{name}.q"), dim, dim)?,
            k: Linear::new(init, &format!("{name}.k"), dim, dim)?,
            v: Linear::new(init, &format!("{name}.v"), dim, dim)?,
            o: Linear::new(init, &format!("{name}.o"), dim, dim)?,
            heads,
        })
    }

    fn split_heads(&self, x: &Tensor) -> Result<Tensor> {
        let (b, l, d) = x.dims3()?;
        Ok(x.reshape((b, l, self.heads, d / self.heads))?
            .transpose(1, 2)?
            .contiguous()?)
    }

    /// `query: (B, Lq, D)`, `memory: (B, Lk, D)`.
    pub fn forward(&self, query: &Tensor, memory: &Tensor) -> Result<Tensor> {
        let (b, lq, d) = query.dims3()?;
        let q = self.split_heads(&self.q.forward(query)?)?;
        let k = self.split_heads(&self.k.forward(memory)?)?;
        let v = self.split_heads(&self.v.forward(memory)?)?;
        let scale = 1.0 / ((d / self.heads) as f64).sqrt();
        let scores = q
            .matmul(&k.transpose(2, 3)?.contiguous()?)?
            .affine(scale, 0.0)?;
        let ctx = softmax_last(&scores)?.matmul(&v)?;
        let ctx = ctx.transpose(1, 2)?.contiguous()?.reshape((b, lq, d))?;
        self.o.forward(&ctx)
    }
}

pub(crate) struct FeedForward {
    fc1: Linear,
    fc2: Linear,
}

impl FeedForward {
    pub fn new(init: &mut Init, name: &str, dim: usize, hidden: usize, out: usize) -> Result<Self> {
        Ok(FeedForward {
            fc1: Linear::new(init, &format!("{name}.fc1"), dim, hidden)?,
            fc2: Linear::new(init, &format!("{name}.fc2"), hidden, out)?,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        self.fc2.forward(&self.fc1.forward(x)?.relu()?)
    }
}

/// Post-norm encoder layer.
pub(crate) struct EncoderLayer {
    attn: MultiHeadAttention,
    ln1: LayerNorm,
    ffn: FeedForward,
    ln2: LayerNorm,
}

impl EncoderLayer {
    pub fn new(init: &mut Init, name: &str, dim: usize, heads: usize, ffn: usize) -> Result<Self> {
        Ok(EncoderLayer {
            attn: MultiHeadAttention::new(init, &format!("{name}.attn"), dim, heads)?,
            ln1: LayerNorm::new(init, &format!("{name}.ln1"), dim)?,
            ffn: FeedForward::new(init, &format!("{name}.ffn"), dim, ffn, dim)?,
            ln2: LayerNorm::new(init, &format!("{name}.ln2"), dim)?,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let x = self.ln1.forward(&(x + self.attn.forward(x, x)?)?)?;
        self.ln2.forward(&(&x + self.ffn.forward(&x)?)?)
    }
}

/// Post-norm decoder layer: self-attention over queries, then cross-attention
/// into the encoder memory.
pub(crate) struct DecoderLayer {
    self_attn: MultiHeadAttention,
    ln1: LayerNorm,
    cross_attn: MultiHeadAttention,
    ln2: LayerNorm,
    ffn: FeedForward,
    ln3: LayerNorm,
}

impl DecoderLayer {
    pub fn new(init: &mut Init, name: &str, dim: usize, heads: usize, ffn: usize) -> Result<Self> {
        Ok(DecoderLayer {
            self_attn: MultiHeadAttention::new(init, &format!("{name}.self_attn"), dim, heads)?,
            ln1: LayerNorm::new(init, &format!("{name}.ln1"), dim)?,
            cross_attn: MultiHeadAttention::new(init, &format!("{name}.cross_attn"), dim, heads)?,
            ln2: LayerNorm::new(init, &format!("{name}.ln2"), dim)?,
            ffn: FeedForward::new(init, &format!("{name}.ffn"), dim, ffn, dim)?,
            ln3: LayerNorm::new(init, &format!("{name}.ln3"), dim)?,
        })
    }

    pub fn forward(&self, x: &Tensor, memory: &Tensor) -> Result<Tensor> {
        let x = self.ln1.forward(&(x + self.self_attn.forward(x, x)?)?)?;
        let x = self
            .ln2
            .forward(&(&x + self.cross_attn.forward(&x, memory)?)?)?;
        self.ln3.forward(&(&x + self.ffn.forward(&x)?)?)
    }
}
