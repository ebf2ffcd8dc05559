use super::tensor::{expect_rank2, expect_shape, gemm, Op, Tensor};
use crate::error::Result;

/// Row-wise affine map: `y[t] = W x[t] + b` for `x: [T×D]`, `W: [C×D]`, `b: [C]`.
pub fn linear(x: &Tensor, w: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (t, d) = expect_rank2("linear", "x", x)?;
    let (c, _) = expect_rank2("linear", "W", w)?;
    expect_shape("linear", "W", w, &[c, d])?;
    expect_shape("linear", "b", b, &[c])?;
    let mut y = Tensor::zeros(&[t, c]);
    for row in y.data_mut().chunks_exact_mut(c) {
        row.copy_from_slice(b.data());
    }
    gemm(t, d, c, x.data(), Op::N, w.data(), Op::T, 1.0, y.data_mut());
    Ok(y)
}

#[derive(Debug, Clone)]
pub struct LinearGrads {
    pub dx: Tensor,
    pub dw: Tensor,
    pub db: Tensor,
}

pub fn linear_backward(x: &Tensor, w: &Tensor, dy: &Tensor) -> Result<LinearGrads> {
    let (t, d) = expect_rank2("linear_backward", "x", x)?;
    let (c, _) = expect_rank2("linear_backward", "W", w)?;
    expect_shape("linear_backward", "W", w, &[c, d])?;
    expect_shape("linear_backward", "dy", dy, &[t, c])?;
    let mut dx = Tensor::zeros(&[t, d]);
    gemm(t, c, d, dy.data(), Op::N, w.data(), Op::N, 0.0, dx.data_mut());
    let mut dw = Tensor::zeros(&[c, d]);
    gemm(c, t, d, dy.data(), Op::T, x.data(), Op::N, 0.0, dw.data_mut());
    let mut db = Tensor::zeros(&[c]);
    for row in dy.data().chunks_exact(c) {
        for (acc, g) in db.data_mut().iter_mut().zip(row) {
            *acc += g;
        }
    }
    Ok(LinearGrads { dx, dw, db })
}
