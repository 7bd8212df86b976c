//! Row-vector broadcasts over a `(rows, n)` matrix. candle's generic
//! broadcast backward reduces over the leading axis, which is slow on CPU;
//! these ops sum columns with a single pass instead.

use candle_core::{CpuStorage, CustomOp1, CustomOp2, Layout, Shape, Tensor};

fn contiguous_f32<'a>(storage: &'a CpuStorage, layout: &Layout) -> candle_core::Result<&'a [f32]> {
    let data = storage.as_slice::<f32>()?;
    match layout.contiguous_offsets() {
        Some((start, end)) => Ok(&data[start..end]),
        None => candle_core::bail!("row op expects a contiguous tensor"),
    }
}

struct ColumnSum;

impl CustomOp1 for ColumnSum {
    fn name(&self) -> &'static str {
        "column_sum"
    }

    fn cpu_fwd(
        &self,
        storage: &CpuStorage,
        layout: &Layout,
    ) -> candle_core::Result<(CpuStorage, Shape)> {
        let (_, n) = layout.shape().dims2()?;
        let x = contiguous_f32(storage, layout)?;
        let mut out = vec![0f32; n];
        for row in x.chunks_exact(n) {
            for (o, v) in out.iter_mut().zip(row) {
                *o += v;
            }
        }
        Ok((CpuStorage::F32(out), Shape::from(n)))
    }
}

fn column_sum(x: &Tensor) -> candle_core::Result<Tensor> {
    x.contiguous()?.apply_op1_no_bwd(&ColumnSum)
}

#[derive(Clone, Copy)]
enum RowOp {
    Add,
    Mul,
}

impl CustomOp2 for RowOp {
    fn name(&self) -> &'static str {
        match self {
            RowOp::Add => "add_row",
            RowOp::Mul => "mul_row",
        }
    }

    fn cpu_fwd(
        &self,
        s1: &CpuStorage,
        l1: &Layout,
        s2: &CpuStorage,
        l2: &Layout,
    ) -> candle_core::Result<(CpuStorage, Shape)> {
        let (rows, n) = l1.shape().dims2()?;
        let x = contiguous_f32(s1, l1)?;
        let v = contiguous_f32(s2, l2)?;
        if v.len() != n {
            candle_core::bail!("row vector of length {} for {n} columns", v.len());
        }
        let mut out = Vec::with_capacity(rows * n);
        for row in x.chunks_exact(n) {
            match self {
                RowOp::Add => out.extend(row.iter().zip(v).map(|(a, b)| a + b)),
                RowOp::Mul => out.extend(row.iter().zip(v).map(|(a, b)| a * b)),
            }
        }
        Ok((CpuStorage::F32(out), Shape::from((rows, n))))
    }

    fn bwd(
        &self,
        x: &Tensor,
        v: &Tensor,
        _res: &Tensor,
        grad: &Tensor,
    ) -> candle_core::Result<(Option<Tensor>, Option<Tensor>)> {
        match self {
            RowOp::Add => Ok((
                Some(grad.clone()),
                Some(column_sum(grad)?.reshape(v.shape())?),
            )),
            RowOp::Mul => {
                let gx = grad
                    .contiguous()?
                    .apply_op2_no_bwd(&v.contiguous()?, self)?;
                let gv = column_sum(&(grad * x.detach())?)?.reshape(v.shape())?;
                Ok((Some(gx), Some(gv)))
            }
        }
    }
}

/// `x + v` with `v` broadcast along rows; `x` is `(rows, n)`, `v` has `n`
/// elements.
pub(crate) fn add_row(x: &Tensor, v: &Tensor) -> candle_core::Result<Tensor> {
    x.contiguous()?
        .apply_op2(&v.flatten_all()?.contiguous()?, RowOp::Add)
}

/// `x * v` with `v` broadcast along rows.
pub(crate) fn mul_row(x: &Tensor, v: &Tensor) -> candle_core::Result<Tensor> {
    x.contiguous()?
        .apply_op2(&v.flatten_all()?.contiguous()?, RowOp::Mul)
}

#[cfg(test)]
mod tests {
    use super::*;
    use candle_core::{Device, Var};

    fn max_diff(a: &Tensor, b: &Tensor) -> f32 {
        (a - b)
            .unwrap()
            .abs()
            .unwrap()
            .max_all()
            .unwrap()
            .to_scalar::<f32>()
            .unwrap()
    }

    #[test]
    fn matches_broadcast_ops() {
        let dev = Device::Cpu;
        let x = Var::from_tensor(&Tensor::randn(0f32, 1.0, (5, 7), &dev).unwrap()).unwrap();
        let v = Var::from_tensor(&Tensor::randn(0f32, 1.0, 7, &dev).unwrap()).unwrap();
        let w = Tensor::randn(0f32, 1.0, (5, 7), &dev).unwrap();
        for op in [RowOp::Add, RowOp::Mul] {
            let ours = match op {
                RowOp::Add => add_row(x.as_tensor(), v.as_tensor()).unwrap(),
                RowOp::Mul => mul_row(x.as_tensor(), v.as_tensor()).unwrap(),
            };
            let reference = match op {
                RowOp::Add => x.as_tensor().broadcast_add(v.as_tensor()).unwrap(),
                RowOp::Mul => x.as_tensor().broadcast_mul(v.as_tensor()).unwrap(),
            };
            assert_eq!(max_diff(&ours, &reference), 0.0);
            let ga = (&ours * &w).unwrap().sum_all().unwrap().backward().unwrap();
            let gr = (&reference * &w)
                .unwrap()
                .sum_all()
                .unwrap()
                .backward()
                .unwrap();
            for t in [x.as_tensor(), v.as_tensor()] {
                assert!(max_diff(ga.get(t).unwrap(), gr.get(t).unwrap()) < 1e-5);
            }
        }
    }
}
