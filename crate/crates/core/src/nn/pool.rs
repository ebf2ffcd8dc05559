//! Temporal pooling heads: max over time, and additive single-query attention.

use rand::Rng;

use super::init::uniform;
use super::tensor::{dot, expect_rank2, expect_shape, gemm, Op, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct MaxPoolOutput {
    pub scores: Vec<f64>,
    /// Winning time step per class; ties go to the earliest step.
    pub argmax: Vec<usize>,
}

/// `scores[c] = max_t z[t, c]` for `z: [T×C]`.
pub fn max_pool_time(z: &Tensor) -> Result<MaxPoolOutput> {
    let (t_len, c) = expect_rank2("max_pool_time", "z", z)?;
    if t_len == 0 {
        return Err(Error::shape("max_pool_time", "empty sequence"));
    }
    let mut scores = z.row(0).to_vec();
    let mut argmax = vec![0; c];
    for t in 1..t_len {
        for (k, &v) in z.row(t).iter().enumerate() {
            if v > scores[k] {
                scores[k] = v;
                argmax[k] = t;
            }
        }
    }
    Ok(MaxPoolOutput { scores, argmax })
}

/// Routes each class gradient to its argmax row only.
pub fn max_pool_time_backward(pooled: &MaxPoolOutput, t_len: usize, dscores: &[f64]) -> Tensor {
    let c = pooled.argmax.len();
    let mut dz = Tensor::zeros(&[t_len, c]);
    for (k, (&t, &g)) in pooled.argmax.iter().zip(dscores).enumerate() {
        dz.data_mut()[t * c + k] += g;
    }
    dz
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionParams {
    /// `[A×H]`
    pub w: Tensor,
    /// `[A]`
    pub b: Tensor,
    /// `[A]`
    pub v: Tensor,
}

impl AttentionParams {
    pub fn init(input_dim: usize, attn_dim: usize, rng: &mut impl Rng) -> Self {
        Self {
            w: uniform(&[attn_dim, input_dim], 1.0 / (input_dim as f64).sqrt(), rng),
            b: Tensor::zeros(&[attn_dim]),
            v: uniform(&[attn_dim], 1.0 / (attn_dim as f64).sqrt(), rng),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            w: Tensor::zeros(self.w.shape()),
            b: Tensor::zeros(self.b.shape()),
            v: Tensor::zeros(self.v.shape()),
        }
    }

    pub fn view(&self) -> AttentionWeights<'_> {
        AttentionWeights {
            w: &self.w,
            b: &self.b,
            v: &self.v,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct AttentionWeights<'a> {
    pub w: &'a Tensor,
    pub b: &'a Tensor,
    pub v: &'a Tensor,
}

#[derive(Debug, Clone)]
pub struct AttentionOutput {
    pub context: Vec<f64>,
    pub weights: Vec<f64>,
    /// `tanh(W h_t + b)`, `[T×A]`
    hidden: Vec<f64>,
}

pub fn softmax_in_place(x: &mut [f64]) {
    let m = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in x.iter_mut() {
        *v = (*v - m).exp();
        sum += *v;
    }
    for v in x.iter_mut() {
        *v /= sum;
    }
}

/// `e_t = v·tanh(W h_t + b)`, `α = softmax(e)`, `context = Σ α_t h_t`.
pub fn attention_pool(h: &Tensor, p: AttentionWeights<'_>) -> Result<AttentionOutput> {
    let (t_len, hd) = expect_rank2("attention_pool", "h", h)?;
    let (a, _) = expect_rank2("attention_pool", "W_a", p.w)?;
    expect_shape("attention_pool", "W_a", p.w, &[a, hd])?;
    expect_shape("attention_pool", "b_a", p.b, &[a])?;
    expect_shape("attention_pool", "v", p.v, &[a])?;
    if t_len == 0 {
        return Err(Error::shape("attention_pool", "empty sequence"));
    }
    let mut hidden = vec![0.0; t_len * a];
    for row in hidden.chunks_exact_mut(a) {
        row.copy_from_slice(p.b.data());
    }
    gemm(t_len, hd, a, h.data(), Op::N, p.w.data(), Op::T, 1.0, &mut hidden);
    for u in hidden.iter_mut() {
        *u = u.tanh();
    }
    let mut weights: Vec<f64> = hidden
        .chunks_exact(a)
        .map(|u| dot(u, p.v.data()))
        .collect();
    softmax_in_place(&mut weights);
    let mut context = vec![0.0; hd];
    for (t, &alpha) in weights.iter().enumerate() {
        for (c, x) in context.iter_mut().zip(h.row(t)) {
            *c += alpha * x;
        }
    }
    Ok(AttentionOutput {
        context,
        weights,
        hidden,
    })
}

/// Accumulates parameter gradients into `grads`; returns `dh: [T×H]`.
pub fn attention_pool_backward(
    h: &Tensor,
    p: AttentionWeights<'_>,
    out: &AttentionOutput,
    dcontext: &[f64],
    grads: &mut AttentionParams,
) -> Result<Tensor> {
    let (t_len, hd) = expect_rank2("attention_pool_backward", "h", h)?;
    let a = p.v.len();
    if dcontext.len() != hd {
        return Err(Error::shape(
            "attention_pool_backward",
            format!("dcontext has {} entries, expected {hd}", dcontext.len()),
        ));
    }
    let mut dh = Tensor::zeros(&[t_len, hd]);
    let dalpha: Vec<f64> = (0..t_len).map(|t| dot(dcontext, h.row(t))).collect();
    let mean: f64 = out.weights.iter().zip(&dalpha).map(|(w, d)| w * d).sum();
    let mut dpre = vec![0.0; t_len * a];
    for t in 0..t_len {
        let alpha = out.weights[t];
        for (d, g) in dh.row_mut(t).iter_mut().zip(dcontext) {
            *d += alpha * g;
        }
        let de = alpha * (dalpha[t] - mean);
        let u = &out.hidden[t * a..(t + 1) * a];
        for k in 0..a {
            grads.v.data_mut()[k] += de * u[k];
            dpre[t * a + k] = de * p.v.data()[k] * (1.0 - u[k] * u[k]);
        }
    }
    gemm(a, t_len, hd, &dpre, Op::T, h.data(), Op::N, 1.0, grads.w.data_mut());
    for row in dpre.chunks_exact(a) {
        for (b, g) in grads.b.data_mut().iter_mut().zip(row) {
            *b += g;
        }
    }
    gemm(t_len, a, hd, &dpre, Op::N, p.w.data(), Op::N, 1.0, dh.data_mut());
    Ok(dh)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn max_pool_example() {
        let z = Tensor::matrix(2, 2, vec![0.2, 0.8, 0.9, 0.1]).unwrap();
        let out = max_pool_time(&z).unwrap();
        assert_eq!(out.scores, vec![0.9, 0.8]);
        assert_eq!(out.argmax, vec![1, 0]);
    }

    #[test]
    fn max_pool_single_row_and_ties() {
        let z = Tensor::matrix(1, 3, vec![1.0, -2.0, 0.5]).unwrap();
        assert_eq!(max_pool_time(&z).unwrap().scores, vec![1.0, -2.0, 0.5]);
        let tied = Tensor::matrix(3, 1, vec![0.5, 0.7, 0.7]).unwrap();
        assert_eq!(max_pool_time(&tied).unwrap().argmax, vec![1]);
    }

    #[test]
    fn max_pool_gradient_routing() {
        let z = Tensor::matrix(3, 2, vec![0.0, 5.0, 3.0, 1.0, 2.0, 4.0]).unwrap();
        let out = max_pool_time(&z).unwrap();
        let dz = max_pool_time_backward(&out, 3, &[1.5, -2.0]);
        assert_eq!(dz.data(), &[0.0, -2.0, 1.5, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn attention_single_step() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let p = AttentionParams::init(3, 4, &mut rng);
        let h = Tensor::matrix(1, 3, vec![0.3, -0.1, 2.0]).unwrap();
        let out = attention_pool(&h, p.view()).unwrap();
        assert_eq!(out.weights, vec![1.0]);
        assert_eq!(out.context, h.data());
    }

    #[test]
    fn attention_identical_rows() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = AttentionParams::init(2, 3, &mut rng);
        let h = Tensor::matrix(4, 2, [0.25, -1.5].repeat(4)).unwrap();
        let out = attention_pool(&h, p.view()).unwrap();
        assert!((out.context[0] - 0.25).abs() < 1e-15);
        assert!((out.context[1] + 1.5).abs() < 1e-15);
        let total: f64 = out.weights.iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
    }
}
