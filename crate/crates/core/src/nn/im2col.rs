//! Patch extraction for 3x3 convolutions (zero padding 1) as a custom tensor
//! op with a matching scatter-add backward. Tensors are channel-first,
//! `(C, B, H, W)`, so a convolution is a single `(Cout, 9C) x (9C, B*Ho*Wo)`
//! matmul.

use candle_core::{CpuStorage, CustomOp1, Layout, Shape, Tensor};

#[derive(Debug, Clone, Copy)]
struct Geometry {
    c: usize,
    b: usize,
    h: usize,
    w: usize,
    stride: usize,
    ho: usize,
    wo: usize,
}

impl Geometry {
    fn new(dims: (usize, usize, usize, usize), stride: usize) -> Self {
        let (c, b, h, w) = dims;
        Geometry {
            c,
            b,
            h,
            w,
            stride,
            ho: h.div_ceil(stride),
            wo: w.div_ceil(stride),
        }
    }

    /// Source row/column for output position `o` and kernel offset `k`.
    fn src(&self, o: usize, k: usize, limit: usize) -> Option<usize> {
        (o * self.stride + k).checked_sub(1).filter(|&i| i < limit)
    }
}

fn contiguous_f32<'a>(storage: &'a CpuStorage, layout: &Layout) -> candle_core::Result<&'a [f32]> {
    let data = storage.as_slice::<f32>()?;
    match layout.contiguous_offsets() {
        Some((start, end)) => Ok(&data[start..end]),
        None => candle_core::bail!("im2col expects a contiguous tensor"),
    }
}

struct Im2Col {
    stride: usize,
}

impl CustomOp1 for Im2Col {
    fn name(&self) -> &'static str {
        "im2col3x3"
    }

    fn cpu_fwd(
        &self,
        storage: &CpuStorage,
        layout: &Layout,
    ) -> candle_core::Result<(CpuStorage, Shape)> {
        let g = Geometry::new(layout.shape().dims4()?, self.stride);
        let x = contiguous_f32(storage, layout)?;
        let plane = g.ho * g.wo;
        let mut out = vec![0f32; g.c * 9 * g.b * plane];
        for ci in 0..g.c {
            for bi in 0..g.b {
                let src = &x[(ci * g.b + bi) * g.h * g.w..][..g.h * g.w];
                for k in 0..9 {
                    let (ky, kx) = (k / 3, k % 3);
                    let dst = &mut out[((ci * 9 + k) * g.b + bi) * plane..][..plane];
                    for oy in 0..g.ho {
                        let Some(iy) = g.src(oy, ky, g.h) else {
                            continue;
                        };
                        let row = &src[iy * g.w..][..g.w];
                        for ox in 0..g.wo {
                            if let Some(ix) = g.src(ox, kx, g.w) {
                                dst[oy * g.wo + ox] = row[ix];
                            }
                        }
                    }
                }
            }
        }
        Ok((CpuStorage::F32(out), Shape::from((g.c * 9, g.b * plane))))
    }

    fn bwd(
        &self,
        arg: &Tensor,
        _res: &Tensor,
        grad: &Tensor,
    ) -> candle_core::Result<Option<Tensor>> {
        let g = Geometry::new(arg.dims4()?, self.stride);
        Ok(Some(grad.contiguous()?.apply_op1_no_bwd(&Col2Im { g })?))
    }
}

struct Col2Im {
    g: Geometry,
}

impl CustomOp1 for Col2Im {
    fn name(&self) -> &'static str {
        "col2im3x3"
    }

    fn cpu_fwd(
        &self,
        storage: &CpuStorage,
        layout: &Layout,
    ) -> candle_core::Result<(CpuStorage, Shape)> {
        let g = self.g;
        let cols = contiguous_f32(storage, layout)?;
        let plane = g.ho * g.wo;
        let mut out = vec![0f32; g.c * g.b * g.h * g.w];
        for ci in 0..g.c {
            for bi in 0..g.b {
                let dst = &mut out[(ci * g.b + bi) * g.h * g.w..][..g.h * g.w];
                for k in 0..9 {
                    let (ky, kx) = (k / 3, k % 3);
                    let src = &cols[((ci * 9 + k) * g.b + bi) * plane..][..plane];
                    for oy in 0..g.ho {
                        let Some(iy) = g.src(oy, ky, g.h) else {
                            continue;
                        };
                        for ox in 0..g.wo {
                            if let Some(ix) = g.src(ox, kx, g.w) {
                                dst[iy * g.w + ix] += src[oy * g.wo + ox];
                            }
                        }
                    }
                }
            }
        }
        Ok((CpuStorage::F32(out), Shape::from((g.c, g.b, g.h, g.w))))
    }
}

/// `(C, B, H, W) -> (9C, B*Ho*Wo)`, rows ordered channel-major then kernel
/// position.
pub(crate) fn im2col3x3(x: &Tensor, stride: usize) -> candle_core::Result<Tensor> {
    x.contiguous()?.apply_op1(Im2Col { stride })
}

#[cfg(test)]
mod tests {
    use super::*;
    use candle_core::{Device, Var};

    /// Reference built from padding and shifted views.
    fn reference(x: &Tensor, stride: usize) -> Tensor {
        let (c, b, h, w) = x.dims4().unwrap();
        let (ho, wo) = (h.div_ceil(stride), w.div_ceil(stride));
        let xp = x
            .pad_with_zeros(2, 1, 1)
            .unwrap()
            .pad_with_zeros(3, 1, 1)
            .unwrap();
        let mut views = Vec::new();
        for ky in 0..3 {
            for kx in 0..3 {
                let v = xp.narrow(2, ky, h).unwrap().narrow(3, kx, w).unwrap();
                let rows: Vec<Tensor> = (0..ho)
                    .map(|oy| v.narrow(2, oy * stride, 1).unwrap())
                    .collect();
                let v = Tensor::cat(&rows, 2).unwrap();
                let cols: Vec<Tensor> = (0..wo)
                    .map(|ox| v.narrow(3, ox * stride, 1).unwrap())
                    .collect();
                views.push(Tensor::cat(&cols, 3).unwrap());
            }
        }
        Tensor::stack(&views, 1)
            .unwrap()
            .reshape((c * 9, b * ho * wo))
            .unwrap()
    }

    #[test]
    fn matches_shifted_views_forward_and_backward() {
        let dev = Device::Cpu;
        for (stride, h, w) in [(1, 5, 6), (2, 6, 8), (2, 5, 7)] {
            let x =
                Var::from_tensor(&Tensor::randn(0f32, 1.0, (3, 2, h, w), &dev).unwrap()).unwrap();
            let a = im2col3x3(x.as_tensor(), stride).unwrap();
            let r = reference(x.as_tensor(), stride);
            assert_eq!(a.dims(), r.dims());
            let diff = (&a - &r)
                .unwrap()
                .abs()
                .unwrap()
                .max_all()
                .unwrap()
                .to_scalar::<f32>()
                .unwrap();
            assert_eq!(diff, 0.0);

            let weight = Tensor::randn(0f32, 1.0, a.dims(), &dev).unwrap();
            let ga = (&a * &weight)
                .unwrap()
                .sum_all()
                .unwrap()
                .backward()
                .unwrap();
            let gr = (&r * &weight)
                .unwrap()
                .sum_all()
                .unwrap()
                .backward()
                .unwrap();
            let ga = ga.get(x.as_tensor()).unwrap();
            let gr = gr.get(x.as_tensor()).unwrap();
            let diff = (ga - gr)
                .unwrap()
                .abs()
                .unwrap()
                .max_all()
                .unwrap()
                .to_scalar::<f32>()
                .unwrap();
            assert!(diff < 1e-5, "stride {stride}: {diff}");
        }
    }
}
