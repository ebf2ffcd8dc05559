//! LSTM cell, single-direction sequence pass and stacked bidirectional LSTM,
//! each with a hand-derived backward pass.
//!
//! Gate blocks are stacked in the order (input, forget, cell candidate,
//! output): rows `[0,H)`, `[H,2H)`, `[2H,3H)`, `[3H,4H)` of the weights.

use rand::Rng;

use super::init::uniform;
use super::tensor::{axpy, dot, expect_rank2, expect_shape, gemm, Op, Tensor};
use crate::error::{Error, Result};

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmLayerParams {
    /// `[4H×D]`
    pub w_ih: Tensor,
    /// `[4H×H]`
    pub w_hh: Tensor,
    /// `[4H]`
    pub bias: Tensor,
}

impl LstmLayerParams {
    pub fn zeros(input_dim: usize, hidden: usize) -> Self {
        Self {
            w_ih: Tensor::zeros(&[4 * hidden, input_dim]),
            w_hh: Tensor::zeros(&[4 * hidden, hidden]),
            bias: Tensor::zeros(&[4 * hidden]),
        }
    }

    /// Uniform(±1/√fan_in) weights, zero bias except the forget block at 1.0.
    pub fn init(input_dim: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        let mut bias = vec![0.0; 4 * hidden];
        bias[hidden..2 * hidden].fill(1.0);
        Self {
            w_ih: uniform(&[4 * hidden, input_dim], 1.0 / (input_dim as f64).sqrt(), rng),
            w_hh: uniform(&[4 * hidden, hidden], 1.0 / (hidden as f64).sqrt(), rng),
            bias: Tensor::vector(bias),
        }
    }

    pub fn weights(&self) -> LstmWeights<'_> {
        LstmWeights {
            w_ih: &self.w_ih,
            w_hh: &self.w_hh,
            bias: &self.bias,
        }
    }
}

/// Borrowed view of one LSTM layer's weights.
#[derive(Debug, Clone, Copy)]
pub struct LstmWeights<'a> {
    pub w_ih: &'a Tensor,
    pub w_hh: &'a Tensor,
    pub bias: &'a Tensor,
}

impl<'a> LstmWeights<'a> {
    pub fn hidden(&self) -> usize {
        self.w_hh.shape()[1]
    }

    pub fn input_dim(&self) -> usize {
        self.w_ih.shape()[1]
    }

    fn check(&self, op: &'static str) -> Result<(usize, usize)> {
        let (g, d) = expect_rank2(op, "w_ih", self.w_ih)?;
        if g % 4 != 0 || g == 0 {
            return Err(Error::shape(op, format!("w_ih has {g} rows, not 4H")));
        }
        let h = g / 4;
        expect_shape(op, "w_hh", self.w_hh, &[4 * h, h])?;
        expect_shape(op, "bias", self.bias, &[4 * h])?;
        Ok((d, h))
    }
}

/// Gradients of one LSTM layer, shaped like its parameters.
pub type LstmGrads = LstmLayerParams;

/// Applies activations in place to the stacked pre-activations `[i f g o]`.
#[inline]
fn activate(gates: &mut [f64], h: usize) {
    for v in &mut gates[..2 * h] {
        *v = sigmoid(*v);
    }
    for v in &mut gates[2 * h..3 * h] {
        *v = v.tanh();
    }
    for v in &mut gates[3 * h..] {
        *v = sigmoid(*v);
    }
}

/// One step: returns `(h_t, c_t)`.
pub fn lstm_cell(
    x: &[f64],
    h_prev: &[f64],
    c_prev: &[f64],
    p: LstmWeights<'_>,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let (h, c, _) = lstm_cell_forward(x, h_prev, c_prev, p)?;
    Ok((h, c))
}

/// Saved activations of one cell step.
#[derive(Debug, Clone)]
pub struct LstmCellCache {
    x: Vec<f64>,
    h_prev: Vec<f64>,
    c_prev: Vec<f64>,
    gates: Vec<f64>,
    c: Vec<f64>,
}

pub fn lstm_cell_forward(
    x: &[f64],
    h_prev: &[f64],
    c_prev: &[f64],
    p: LstmWeights<'_>,
) -> Result<(Vec<f64>, Vec<f64>, LstmCellCache)> {
    let (d, hd) = p.check("lstm_cell")?;
    if x.len() != d || h_prev.len() != hd || c_prev.len() != hd {
        return Err(Error::shape(
            "lstm_cell",
            format!(
                "x {} / h {} / c {} vs D={d}, H={hd}",
                x.len(),
                h_prev.len(),
                c_prev.len()
            ),
        ));
    }
    let mut gates = p.bias.data().to_vec();
    for (j, g) in gates.iter_mut().enumerate() {
        *g += dot(p.w_ih.row(j), x) + dot(p.w_hh.row(j), h_prev);
    }
    activate(&mut gates, hd);
    let mut c = vec![0.0; hd];
    let mut h = vec![0.0; hd];
    for k in 0..hd {
        c[k] = gates[hd + k] * c_prev[k] + gates[k] * gates[2 * hd + k];
        h[k] = gates[3 * hd + k] * c[k].tanh();
    }
    let cache = LstmCellCache {
        x: x.to_vec(),
        h_prev: h_prev.to_vec(),
        c_prev: c_prev.to_vec(),
        gates,
        c: c.clone(),
    };
    Ok((h, c, cache))
}

/// Pre-activation gate gradients from the upstream `dh`, `dc` of one step.
/// Returns `dc_prev`.
#[inline]
fn gate_grads(
    gates: &[f64],
    c: &[f64],
    c_prev: &[f64],
    dh: &[f64],
    dc_in: &[f64],
    dgates: &mut [f64],
    dc_prev: &mut [f64],
) {
    let hd = c.len();
    for k in 0..hd {
        let (i, f, g, o) = (gates[k], gates[hd + k], gates[2 * hd + k], gates[3 * hd + k]);
        let tc = c[k].tanh();
        let dc = dc_in[k] + dh[k] * o * (1.0 - tc * tc);
        dgates[k] = dc * g * i * (1.0 - i);
        dgates[hd + k] = dc * c_prev[k] * f * (1.0 - f);
        dgates[2 * hd + k] = dc * i * (1.0 - g * g);
        dgates[3 * hd + k] = dh[k] * tc * o * (1.0 - o);
        dc_prev[k] = dc * f;
    }
}

/// Backward through one cell step; accumulates into `grads` and returns
/// `(dx, dh_prev, dc_prev)`.
pub fn lstm_cell_backward(
    cache: &LstmCellCache,
    p: LstmWeights<'_>,
    dh: &[f64],
    dc: &[f64],
    grads: &mut LstmGrads,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let hd = cache.c.len();
    let d = cache.x.len();
    let mut dg = vec![0.0; 4 * hd];
    let mut dc_prev = vec![0.0; hd];
    gate_grads(&cache.gates, &cache.c, &cache.c_prev, dh, dc, &mut dg, &mut dc_prev);
    let mut dx = vec![0.0; d];
    let mut dh_prev = vec![0.0; hd];
    for (j, &g) in dg.iter().enumerate() {
        axpy(g, p.w_ih.row(j), &mut dx);
        axpy(g, p.w_hh.row(j), &mut dh_prev);
        axpy(g, &cache.x, grads.w_ih.row_mut(j));
        axpy(g, &cache.h_prev, grads.w_hh.row_mut(j));
        grads.bias.data_mut()[j] += g;
    }
    (dx, dh_prev, dc_prev)
}

/// Saved activations of a whole single-direction pass.
#[derive(Debug, Clone)]
pub struct LstmSequenceCache {
    reverse: bool,
    /// `[T×4H]` activated gates
    gates: Vec<f64>,
    /// `[T×H]`
    c: Vec<f64>,
    /// `[T×H]`
    h: Vec<f64>,
}

#[inline]
fn step_index(s: usize, t: usize, reverse: bool) -> usize {
    if reverse {
        t - 1 - s
    } else {
        s
    }
}

/// Runs one direction over `x: [T×D]` from zero state. With `reverse` the
/// sequence is consumed from the last row to the first; outputs stay indexed
/// by the original time step.
pub fn lstm_sequence(
    x: &Tensor,
    p: LstmWeights<'_>,
    reverse: bool,
) -> Result<(Tensor, LstmSequenceCache)> {
    let (d, hd) = p.check("lstm_sequence")?;
    let (t_len, xd) = expect_rank2("lstm_sequence", "x", x)?;
    if xd != d {
        return Err(Error::shape("lstm_sequence", format!("x has {xd} columns, W_ih expects {d}")));
    }
    if t_len == 0 {
        return Err(Error::shape("lstm_sequence", "empty sequence"));
    }
    let g4 = 4 * hd;
    // input projection for all steps at once, bias folded in
    let mut gates = vec![0.0; t_len * g4];
    for row in gates.chunks_exact_mut(g4) {
        row.copy_from_slice(p.bias.data());
    }
    gemm(t_len, d, g4, x.data(), Op::N, p.w_ih.data(), Op::T, 1.0, &mut gates);

    let mut c = vec![0.0; t_len * hd];
    let mut h = vec![0.0; t_len * hd];
    let zeros = vec![0.0; hd];
    let w_hh = p.w_hh.data();
    for s in 0..t_len {
        let t = step_index(s, t_len, reverse);
        let prev = (s > 0).then(|| step_index(s - 1, t_len, reverse));
        let (h_prev, c_prev): (&[f64], &[f64]) = match prev {
            Some(tp) => (&h[tp * hd..(tp + 1) * hd], &c[tp * hd..(tp + 1) * hd]),
            None => (&zeros, &zeros),
        };
        let g = &mut gates[t * g4..(t + 1) * g4];
        if prev.is_some() {
            for (j, gj) in g.iter_mut().enumerate() {
                *gj += dot(&w_hh[j * hd..(j + 1) * hd], h_prev);
            }
        }
        activate(g, hd);
        let mut c_t = vec![0.0; hd];
        let mut h_t = vec![0.0; hd];
        for k in 0..hd {
            c_t[k] = g[hd + k] * c_prev[k] + g[k] * g[2 * hd + k];
            h_t[k] = g[3 * hd + k] * c_t[k].tanh();
        }
        c[t * hd..(t + 1) * hd].copy_from_slice(&c_t);
        h[t * hd..(t + 1) * hd].copy_from_slice(&h_t);
    }
    let out = Tensor::matrix(t_len, hd, h.clone())?;
    Ok((
        out,
        LstmSequenceCache {
            reverse,
            gates,
            c,
            h,
        },
    ))
}

/// Backpropagation through time for one direction. Accumulates parameter
/// gradients into `grads` and returns `dx: [T×D]`.
pub fn lstm_sequence_backward(
    x: &Tensor,
    p: LstmWeights<'_>,
    cache: &LstmSequenceCache,
    dh_out: &Tensor,
    grads: &mut LstmGrads,
) -> Result<Tensor> {
    let (d, hd) = p.check("lstm_sequence_backward")?;
    let (t_len, _) = expect_rank2("lstm_sequence_backward", "x", x)?;
    expect_shape("lstm_sequence_backward", "dh", dh_out, &[t_len, hd])?;
    expect_shape("lstm_sequence_backward", "grads.w_ih", &grads.w_ih, &[4 * hd, d])?;
    let g4 = 4 * hd;
    let reverse = cache.reverse;

    let mut dgates = vec![0.0; t_len * g4];
    // previous hidden state seen at each step, for the recurrent weight grad
    let mut h_prev_all = vec![0.0; t_len * hd];
    let mut dh_carry = vec![0.0; hd];
    let mut dc_carry = vec![0.0; hd];
    let mut dh = vec![0.0; hd];
    let mut dc_prev = vec![0.0; hd];
    let zeros = vec![0.0; hd];
    let w_hh = p.w_hh.data();

    for s in (0..t_len).rev() {
        let t = step_index(s, t_len, reverse);
        let prev = (s > 0).then(|| step_index(s - 1, t_len, reverse));
        let c_prev: &[f64] = match prev {
            Some(tp) => &cache.c[tp * hd..(tp + 1) * hd],
            None => &zeros,
        };
        if let Some(tp) = prev {
            h_prev_all[t * hd..(t + 1) * hd].copy_from_slice(&cache.h[tp * hd..(tp + 1) * hd]);
        }
        for k in 0..hd {
            dh[k] = dh_out.data()[t * hd + k] + dh_carry[k];
        }
        let dg = &mut dgates[t * g4..(t + 1) * g4];
        gate_grads(
            &cache.gates[t * g4..(t + 1) * g4],
            &cache.c[t * hd..(t + 1) * hd],
            c_prev,
            &dh,
            &dc_carry,
            dg,
            &mut dc_prev,
        );
        std::mem::swap(&mut dc_carry, &mut dc_prev);
        dh_carry.fill(0.0);
        if prev.is_some() {
            for (j, &gj) in dg.iter().enumerate() {
                axpy(gj, &w_hh[j * hd..(j + 1) * hd], &mut dh_carry);
            }
        }
    }

    gemm(g4, t_len, d, &dgates, Op::T, x.data(), Op::N, 1.0, grads.w_ih.data_mut());
    gemm(g4, t_len, hd, &dgates, Op::T, &h_prev_all, Op::N, 1.0, grads.w_hh.data_mut());
    for row in dgates.chunks_exact(g4) {
        for (b, g) in grads.bias.data_mut().iter_mut().zip(row) {
            *b += g;
        }
    }
    let mut dx = Tensor::zeros(&[t_len, d]);
    gemm(t_len, g4, d, &dgates, Op::N, p.w_ih.data(), Op::N, 0.0, dx.data_mut());
    Ok(dx)
}

/// Parameters of a stacked bidirectional LSTM: `layers[l] = [forward, backward]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BiLstmParams {
    pub layers: Vec<[LstmLayerParams; 2]>,
}

impl BiLstmParams {
    /// Layer 0 reads `input_dim` columns; deeper layers read `2H`.
    pub fn init(input_dim: usize, hidden: usize, layers: usize, rng: &mut impl Rng) -> Self {
        let layers = (0..layers)
            .map(|l| {
                let d = if l == 0 { input_dim } else { 2 * hidden };
                [
                    LstmLayerParams::init(d, hidden, rng),
                    LstmLayerParams::init(d, hidden, rng),
                ]
            })
            .collect();
        Self { layers }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            layers: self
                .layers
                .iter()
                .map(|[f, _]| {
                    let (d, h) = (f.w_ih.shape()[1], f.w_hh.shape()[1]);
                    [LstmLayerParams::zeros(d, h), LstmLayerParams::zeros(d, h)]
                })
                .collect(),
        }
    }

    pub fn views(&self) -> Vec<[LstmWeights<'_>; 2]> {
        self.layers
            .iter()
            .map(|[f, b]| [f.weights(), b.weights()])
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct BiLstmCache {
    inputs: Vec<Tensor>,
    dirs: Vec<[LstmSequenceCache; 2]>,
}

/// Stacked bidirectional LSTM over `x: [T×D]`; output row t is
/// `[h_fwd_t ‖ h_bwd_t]` of the top layer, `[T×2H]`.
pub fn bilstm(x: &Tensor, layers: &[[LstmWeights<'_>; 2]]) -> Result<(Tensor, BiLstmCache)> {
    if layers.is_empty() {
        return Err(Error::shape("bilstm", "no layers"));
    }
    let mut input = x.clone();
    let mut inputs = Vec::with_capacity(layers.len());
    let mut dirs = Vec::with_capacity(layers.len());
    for [fwd, bwd] in layers {
        let (hf, cf) = lstm_sequence(&input, *fwd, false)?;
        let (hb, cb) = lstm_sequence(&input, *bwd, true)?;
        let out = concat_cols(&hf, &hb);
        inputs.push(std::mem::replace(&mut input, out));
        dirs.push([cf, cb]);
    }
    Ok((input, BiLstmCache { inputs, dirs }))
}

/// Backward through all layers; accumulates into `grads` (same layout as the
/// weights) and returns the gradient w.r.t. the input.
pub fn bilstm_backward(
    layers: &[[LstmWeights<'_>; 2]],
    cache: &BiLstmCache,
    dout: &Tensor,
    grads: &mut [[LstmGrads; 2]],
) -> Result<Tensor> {
    if grads.len() != layers.len() || cache.dirs.len() != layers.len() {
        return Err(Error::shape("bilstm_backward", "layer count mismatch"));
    }
    let mut d = dout.clone();
    for l in (0..layers.len()).rev() {
        let h = layers[l][0].hidden();
        let (df, db) = split_cols(&d, h);
        let [gf, gb] = &mut grads[l];
        let input = &cache.inputs[l];
        let mut dx = lstm_sequence_backward(input, layers[l][0], &cache.dirs[l][0], &df, gf)?;
        let dxb = lstm_sequence_backward(input, layers[l][1], &cache.dirs[l][1], &db, gb)?;
        dx.add_assign(&dxb);
        d = dx;
    }
    Ok(d)
}

fn concat_cols(a: &Tensor, b: &Tensor) -> Tensor {
    let (t, ca, cb) = (a.rows(), a.cols(), b.cols());
    let mut data = Vec::with_capacity(t * (ca + cb));
    for r in 0..t {
        data.extend_from_slice(a.row(r));
        data.extend_from_slice(b.row(r));
    }
    Tensor::matrix(t, ca + cb, data).expect("concat shape")
}

fn split_cols(x: &Tensor, left: usize) -> (Tensor, Tensor) {
    let (t, c) = (x.rows(), x.cols());
    let mut a = Vec::with_capacity(t * left);
    let mut b = Vec::with_capacity(t * (c - left));
    for r in 0..t {
        let row = x.row(r);
        a.extend_from_slice(&row[..left]);
        b.extend_from_slice(&row[left..]);
    }
    (
        Tensor::matrix(t, left, a).expect("split shape"),
        Tensor::matrix(t, c - left, b).expect("split shape"),
    )
}
