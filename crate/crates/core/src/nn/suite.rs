//! Finite-difference checks over random small instances of every layer.
//!
//! Each check builds a random instance, takes a random linear functional of
//! the layer output as the loss, and compares the hand-written backward pass
//! with central differences over inputs and parameters.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::gradcheck::finite_diff_gradcheck;
use super::linear::{linear, linear_backward};
use super::loss::softmax_cross_entropy;
use super::lstm::{
    bilstm, bilstm_backward, lstm_cell_backward, lstm_cell_forward, LstmLayerParams, LstmWeights,
};
use super::optim::ParameterSet;
use super::pool::{attention_pool, attention_pool_backward, max_pool_time, max_pool_time_backward};
use super::pool::{AttentionParams, AttentionWeights};
use super::tensor::{dot, Tensor};
use crate::error::Result;

pub const SUITE_EPS: f64 = 1e-4;
pub const SUITE_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerKind {
    Linear,
    LstmCellBptt,
    BiLstm,
    AttentionPool,
    MaxPoolPath,
    CrossEntropy,
}

impl LayerKind {
    pub const ALL: [LayerKind; 6] = [
        LayerKind::Linear,
        LayerKind::LstmCellBptt,
        LayerKind::BiLstm,
        LayerKind::AttentionPool,
        LayerKind::MaxPoolPath,
        LayerKind::CrossEntropy,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LayerKind::Linear => "linear",
            LayerKind::LstmCellBptt => "lstm_cell (3-step BPTT)",
            LayerKind::BiLstm => "bilstm (2 layers)",
            LayerKind::AttentionPool => "attention_pool",
            LayerKind::MaxPoolPath => "linear + max_pool_time",
            LayerKind::CrossEntropy => "softmax_cross_entropy",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerCheck {
    pub layer: LayerKind,
    pub trials: usize,
    pub max_rel_err: f64,
}

fn rand_tensor(shape: &[usize], scale: f64, rng: &mut impl Rng) -> Tensor {
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| rng.gen_range(-scale..scale)).collect()).unwrap()
}

fn functional(out: &[f64], r: &[f64]) -> f64 {
    dot(out, r)
}

fn check_linear(rng: &mut ChaCha8Rng) -> Result<f64> {
    let (t, d, c) = (rng.gen_range(1..=5), rng.gen_range(1..=4), rng.gen_range(1..=4));
    let mut ps = ParameterSet::new();
    ps.add("x", rand_tensor(&[t, d], 1.0, rng))?;
    ps.add("w", rand_tensor(&[c, d], 1.0, rng))?;
    ps.add("b", rand_tensor(&[c], 1.0, rng))?;
    let r = rand_tensor(&[t, c], 1.0, rng);
    let g = linear_backward(ps.value(0), ps.value(1), &r)?;
    ps.accumulate_grad(0, &g.dx);
    ps.accumulate_grad(1, &g.dw);
    ps.accumulate_grad(2, &g.db);
    let report = finite_diff_gradcheck(&mut ps, SUITE_EPS, |p| {
        Ok(functional(linear(p.value(0), p.value(1), p.value(2))?.data(), r.data()))
    })?;
    Ok(report.max_rel_err)
}

const CELL_STEPS: usize = 3;

fn cell_loss(p: &ParameterSet, r: &Tensor, q: &[f64]) -> Result<f64> {
    let w = LstmWeights {
        w_ih: p.value(3),
        w_hh: p.value(4),
        bias: p.value(5),
    };
    let mut h = p.value(1).data().to_vec();
    let mut c = p.value(2).data().to_vec();
    let mut loss = 0.0;
    for t in 0..CELL_STEPS {
        let (h2, c2, _) = lstm_cell_forward(p.value(0).row(t), &h, &c, w)?;
        loss += dot(&h2, r.row(t));
        h = h2;
        c = c2;
    }
    Ok(loss + dot(&c, q))
}

fn check_lstm_cell(rng: &mut ChaCha8Rng) -> Result<f64> {
    let (d, hd) = (rng.gen_range(1..=5), rng.gen_range(1..=5));
    let mut ps = ParameterSet::new();
    ps.add("x", rand_tensor(&[CELL_STEPS, d], 1.0, rng))?;
    ps.add("h0", rand_tensor(&[hd], 1.0, rng))?;
    ps.add("c0", rand_tensor(&[hd], 1.0, rng))?;
    ps.add("w_ih", rand_tensor(&[4 * hd, d], 0.8, rng))?;
    ps.add("w_hh", rand_tensor(&[4 * hd, hd], 0.8, rng))?;
    ps.add("bias", rand_tensor(&[4 * hd], 0.8, rng))?;
    let r = rand_tensor(&[CELL_STEPS, hd], 1.0, rng);
    let q: Vec<f64> = (0..hd).map(|_| rng.gen_range(-1.0..1.0)).collect();

    let w = LstmWeights {
        w_ih: ps.value(3),
        w_hh: ps.value(4),
        bias: ps.value(5),
    };
    let mut caches = Vec::new();
    let mut h = ps.value(1).data().to_vec();
    let mut c = ps.value(2).data().to_vec();
    for t in 0..CELL_STEPS {
        let (h2, c2, cache) = lstm_cell_forward(ps.value(0).row(t), &h, &c, w)?;
        caches.push(cache);
        h = h2;
        c = c2;
    }
    let mut grads = LstmLayerParams::zeros(d, hd);
    let mut dx = Tensor::zeros(&[CELL_STEPS, d]);
    let mut dh = vec![0.0; hd];
    let mut dc = q.clone();
    for t in (0..CELL_STEPS).rev() {
        for (a, b) in dh.iter_mut().zip(r.row(t)) {
            *a += b;
        }
        let (dxt, dh_prev, dc_prev) = lstm_cell_backward(&caches[t], w, &dh, &dc, &mut grads);
        dx.row_mut(t).copy_from_slice(&dxt);
        dh = dh_prev;
        dc = dc_prev;
    }
    ps.accumulate_grad(0, &dx);
    ps.accumulate_grad(1, &Tensor::vector(dh));
    ps.accumulate_grad(2, &Tensor::vector(dc));
    ps.accumulate_grad(3, &grads.w_ih);
    ps.accumulate_grad(4, &grads.w_hh);
    ps.accumulate_grad(5, &grads.bias);
    let report = finite_diff_gradcheck(&mut ps, SUITE_EPS, |p| cell_loss(p, &r, &q))?;
    Ok(report.max_rel_err)
}

fn bilstm_views(p: &ParameterSet, layers: usize) -> Vec<[LstmWeights<'_>; 2]> {
    (0..layers)
        .map(|l| {
            let base = 1 + l * 6;
            let view = |o: usize| LstmWeights {
                w_ih: p.value(base + o),
                w_hh: p.value(base + o + 1),
                bias: p.value(base + o + 2),
            };
            [view(0), view(3)]
        })
        .collect()
}

fn check_bilstm(rng: &mut ChaCha8Rng) -> Result<f64> {
    let layers = 2;
    let (t, d, hd) = (rng.gen_range(1..=7), rng.gen_range(1..=5), rng.gen_range(1..=5));
    let mut ps = ParameterSet::new();
    ps.add("x", rand_tensor(&[t, d], 1.0, rng))?;
    for l in 0..layers {
        let din = if l == 0 { d } else { 2 * hd };
        for dir in ["fwd", "bwd"] {
            ps.add(format!("l{l}.{dir}.w_ih"), rand_tensor(&[4 * hd, din], 0.8, rng))?;
            ps.add(format!("l{l}.{dir}.w_hh"), rand_tensor(&[4 * hd, hd], 0.8, rng))?;
            ps.add(format!("l{l}.{dir}.bias"), rand_tensor(&[4 * hd], 0.8, rng))?;
        }
    }
    let r = rand_tensor(&[t, 2 * hd], 1.0, rng);

    let views = bilstm_views(&ps, layers);
    let (_, cache) = bilstm(ps.value(0), &views)?;
    let mut grads: Vec<[LstmLayerParams; 2]> = (0..layers)
        .map(|l| {
            let din = if l == 0 { d } else { 2 * hd };
            [LstmLayerParams::zeros(din, hd), LstmLayerParams::zeros(din, hd)]
        })
        .collect();
    let dx = bilstm_backward(&views, &cache, &r, &mut grads)?;
    ps.accumulate_grad(0, &dx);
    for (l, pair) in grads.iter().enumerate() {
        for (k, g) in pair.iter().enumerate() {
            let base = 1 + l * 6 + k * 3;
            ps.accumulate_grad(base, &g.w_ih);
            ps.accumulate_grad(base + 1, &g.w_hh);
            ps.accumulate_grad(base + 2, &g.bias);
        }
    }
    let report = finite_diff_gradcheck(&mut ps, SUITE_EPS, |p| {
        let (out, _) = bilstm(p.value(0), &bilstm_views(p, layers))?;
        Ok(functional(out.data(), r.data()))
    })?;
    Ok(report.max_rel_err)
}

fn check_attention(rng: &mut ChaCha8Rng) -> Result<f64> {
    let (t, hd, a) = (rng.gen_range(1..=7), rng.gen_range(1..=5), rng.gen_range(1..=5));
    let mut ps = ParameterSet::new();
    ps.add("h", rand_tensor(&[t, hd], 1.0, rng))?;
    ps.add("w", rand_tensor(&[a, hd], 1.0, rng))?;
    ps.add("b", rand_tensor(&[a], 1.0, rng))?;
    ps.add("v", rand_tensor(&[a], 1.0, rng))?;
    let r: Vec<f64> = (0..hd).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let (h, w, b, v) = (
        ps.value(0).clone(),
        ps.value(1).clone(),
        ps.value(2).clone(),
        ps.value(3).clone(),
    );
    let weights = AttentionWeights {
        w: &w,
        b: &b,
        v: &v,
    };
    let out = attention_pool(&h, weights)?;
    let mut grads = AttentionParams {
        w: Tensor::zeros(w.shape()),
        b: Tensor::zeros(b.shape()),
        v: Tensor::zeros(v.shape()),
    };
    let dh = attention_pool_backward(&h, weights, &out, &r, &mut grads)?;
    ps.accumulate_grad(0, &dh);
    ps.accumulate_grad(1, &grads.w);
    ps.accumulate_grad(2, &grads.b);
    ps.accumulate_grad(3, &grads.v);
    let report = finite_diff_gradcheck(&mut ps, SUITE_EPS, |p| {
        let w = AttentionWeights {
            w: p.value(1),
            b: p.value(2),
            v: p.value(3),
        };
        Ok(dot(&attention_pool(p.value(0), w)?.context, &r))
    })?;
    Ok(report.max_rel_err)
}

/// Smallest gap between the top value and the runner-up in any column.
fn max_pool_margin(z: &Tensor) -> f64 {
    let (t, c) = (z.rows(), z.cols());
    if t < 2 {
        return f64::INFINITY;
    }
    (0..c)
        .map(|k| {
            let mut col: Vec<f64> = (0..t).map(|r| z.at(r, k)).collect();
            col.sort_by(|a, b| b.partial_cmp(a).unwrap());
            col[0] - col[1]
        })
        .fold(f64::INFINITY, f64::min)
}

fn check_max_pool(rng: &mut ChaCha8Rng) -> Result<f64> {
    // resample until no column is within reach of a tie under perturbation
    loop {
        let (t, d, c) = (rng.gen_range(1..=7), rng.gen_range(1..=5), rng.gen_range(1..=5));
        let mut ps = ParameterSet::new();
        ps.add("x", rand_tensor(&[t, d], 1.0, rng))?;
        ps.add("w", rand_tensor(&[c, d], 1.0, rng))?;
        ps.add("b", rand_tensor(&[c], 1.0, rng))?;
        let r: Vec<f64> = (0..c).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let z = linear(ps.value(0), ps.value(1), ps.value(2))?;
        if max_pool_margin(&z) < 1e-2 {
            continue;
        }
        let pooled = max_pool_time(&z)?;
        let dz = max_pool_time_backward(&pooled, t, &r);
        let g = linear_backward(ps.value(0), ps.value(1), &dz)?;
        ps.accumulate_grad(0, &g.dx);
        ps.accumulate_grad(1, &g.dw);
        ps.accumulate_grad(2, &g.db);
        let report = finite_diff_gradcheck(&mut ps, SUITE_EPS, |p| {
            let z = linear(p.value(0), p.value(1), p.value(2))?;
            Ok(dot(&max_pool_time(&z)?.scores, &r))
        })?;
        return Ok(report.max_rel_err);
    }
}

fn check_cross_entropy(rng: &mut ChaCha8Rng) -> Result<f64> {
    let c = rng.gen_range(2..=5);
    let label = rng.gen_range(0..c);
    let mut ps = ParameterSet::new();
    ps.add("logits", rand_tensor(&[c], 3.0, rng))?;
    let (_, grad) = softmax_cross_entropy(ps.value(0).data(), label)?;
    ps.accumulate_grad(0, &Tensor::vector(grad));
    let report = finite_diff_gradcheck(&mut ps, SUITE_EPS, |p| {
        Ok(softmax_cross_entropy(p.value(0).data(), label)?.0)
    })?;
    Ok(report.max_rel_err)
}

pub fn check_layer(layer: LayerKind, rng: &mut ChaCha8Rng) -> Result<f64> {
    match layer {
        LayerKind::Linear => check_linear(rng),
        LayerKind::LstmCellBptt => check_lstm_cell(rng),
        LayerKind::BiLstm => check_bilstm(rng),
        LayerKind::AttentionPool => check_attention(rng),
        LayerKind::MaxPoolPath => check_max_pool(rng),
        LayerKind::CrossEntropy => check_cross_entropy(rng),
    }
}

/// Runs every layer check over `trials` random instances derived from `seed`.
pub fn run_gradient_suite(seed: u64, trials: usize) -> Result<Vec<LayerCheck>> {
    LayerKind::ALL
        .iter()
        .enumerate()
        .map(|(li, &layer)| {
            let mut worst: f64 = 0.0;
            for trial in 0..trials {
                let mut rng = ChaCha8Rng::seed_from_u64(
                    seed.wrapping_mul(1_000_003)
                        .wrapping_add((li * 10_000 + trial) as u64),
                );
                worst = worst.max(check_layer(layer, &mut rng)?);
            }
            Ok(LayerCheck {
                layer,
                trials,
                max_rel_err: worst,
            })
        })
        .collect()
}
