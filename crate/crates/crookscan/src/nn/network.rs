//! Forward pass and hand-written reverse pass of the fixed architecture.
//!
//! Tensors are channel-major: channel `c` of a feature map occupies
//! `buf[c * SEQ..(c + 1) * SEQ]`. For every layer the forward pass records
//! its input and pre-activation so the reverse pass can run without
//! recomputation.

use crate::error::{Error, Result};
use crate::geometry::NormalizedCenterline;

use super::arch::{ArchConfig, Layout, ModelParams, SEQ};

/// Numerically stable binary cross-entropy on a pre-sigmoid logit.
/// `target` may be any value in `[0, 1]`.
pub fn bce_with_logit(logit: f64, target: f64) -> f64 {
    logit.max(0.0) - logit * target + (-logit.abs()).exp().ln_1p()
}

/// Binary cross-entropy of probability `pred` against `target`.
pub fn bce_loss(pred: f64, target: f64) -> f64 {
    bce_with_logit(logit(pred), target)
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Channel-major copy of a centerline: `[x..., y..., z...]`.
pub fn to_input(c: &NormalizedCenterline) -> Vec<f64> {
    let mut x = vec![0.0; 3 * SEQ];
    for (t, p) in c.points().iter().enumerate() {
        x[t] = p[0];
        x[SEQ + t] = p[1];
        x[2 * SEQ + t] = p[2];
    }
    x
}

/// Positions computed together by the correlation kernel.
const LANES: usize = 8;

#[derive(Debug, Clone, Default)]
struct LayerTape {
    /// Layer input with `pad` zeros on both sides of every channel.
    input: Vec<f64>,
    pre: Vec<f64>,
    act: Vec<f64>,
}

#[derive(Debug, Clone, Default)]
struct BlockTape {
    layers: Vec<LayerTape>,
    output: Vec<f64>,
}

/// Reusable buffers for one forward/backward pass.
#[derive(Debug, Clone)]
pub struct Workspace {
    layout: Layout,
    arch: ArchConfig,
    /// Zero padding on each side of a padded channel row.
    pad: usize,
    offsets: Vec<Vec<isize>>,
    mirrored: Vec<Vec<isize>>,
    input: Vec<f64>,
    projected: Vec<f64>,
    blocks: Vec<BlockTape>,
    pooled: Vec<f64>,
    hidden_pre: Vec<f64>,
    hidden: Vec<f64>,
    // reverse-pass scratch
    d_out: Vec<f64>,
    d_h: Vec<f64>,
    d_h_next: Vec<f64>,
    d_act: Vec<f64>,
    d_pre_padded: Vec<f64>,
    transposed: Vec<f64>,
}

impl Workspace {
    pub fn new(arch: &ArchConfig) -> Self {
        let layout = Layout::new(arch);
        let c = arch.channels;
        let cs = c * SEQ;
        let offsets: Vec<Vec<isize>> = layout
            .blocks
            .iter()
            .flatten()
            .map(|s| arch.tap_offsets(s.dilation).collect())
            .collect();
        let pad = offsets
            .iter()
            .flatten()
            .map(|o| o.unsigned_abs())
            .max()
            .unwrap_or(0);
        let mirrored = offsets.iter().map(|o| o.iter().map(|v| -v).collect()).collect();
        let padded = c * (SEQ + 2 * pad);
        let blocks = layout
            .blocks
            .iter()
            .map(|b| BlockTape {
                layers: b
                    .iter()
                    .map(|_| LayerTape {
                        input: vec![0.0; padded],
                        pre: vec![0.0; cs],
                        act: vec![0.0; cs],
                    })
                    .collect(),
                output: vec![0.0; cs],
            })
            .collect();
        Self {
            layout,
            arch: arch.clone(),
            pad,
            offsets,
            mirrored,
            input: vec![0.0; 3 * SEQ],
            projected: vec![0.0; cs],
            blocks,
            pooled: vec![0.0; c],
            hidden_pre: vec![0.0; arch.mlp_hidden],
            hidden: vec![0.0; arch.mlp_hidden],
            d_out: vec![0.0; cs],
            d_h: vec![0.0; cs],
            d_h_next: vec![0.0; cs],
            d_act: vec![0.0; cs],
            d_pre_padded: vec![0.0; padded],
            transposed: vec![0.0; c * c * arch.kernel_size],
        }
    }

    fn check(&self, p: &ModelParams) -> Result<()> {
        if p.arch() != &self.arch {
            return Err(Error::Structural(
                "parameters do not match the workspace architecture".into(),
            ));
        }
        Ok(())
    }

    /// Runs the network on a channel-major input and returns the logit.
    pub fn forward_logit(&mut self, p: &ModelParams, input: &[f64]) -> Result<f64> {
        self.check(p)?;
        if input.len() != 3 * SEQ {
            return Err(Error::Structural(format!(
                "input must hold {} values, got {}",
                3 * SEQ,
                input.len()
            )));
        }
        self.input.copy_from_slice(input);
        let w = p.values();
        let l = &self.layout;
        let c = l.channels;
        let k = l.kernel;
        let pad = self.pad;
        let stride = SEQ + 2 * pad;

        // 1x1 input projection, 3 -> channels
        for o in 0..c {
            self.projected[o * SEQ..(o + 1) * SEQ].fill(w[l.in_b + o]);
        }
        correlate(&mut self.projected, c, &self.input, SEQ, 0, 3, &[0], &w[l.in_w..l.in_w + 3 * c]);

        let mut layer_no = 0;
        for b in 0..l.blocks.len() {
            let (done, rest) = self.blocks.split_at_mut(b);
            let block_in: &[f64] = if b == 0 { &self.projected } else { &done[b - 1].output };
            let tape = &mut rest[0];
            let slots = &l.blocks[b];
            if slots.is_empty() {
                tape.output.copy_from_slice(block_in);
                continue;
            }
            for o in 0..c {
                tape.output[o * SEQ..(o + 1) * SEQ].fill(0.0);
            }
            for (li, s) in slots.iter().enumerate() {
                let (prev, cur) = tape.layers.split_at_mut(li);
                let lt = &mut cur[0];
                for ch in 0..c {
                    let dst = &mut lt.input[ch * stride + pad..ch * stride + pad + SEQ];
                    if li == 0 {
                        dst.copy_from_slice(&block_in[ch * SEQ..(ch + 1) * SEQ]);
                    } else {
                        let pl = &prev[li - 1];
                        let h = &pl.input[ch * stride + pad..ch * stride + pad + SEQ];
                        let a = &pl.act[ch * SEQ..(ch + 1) * SEQ];
                        for ((d, hv), av) in dst.iter_mut().zip(h).zip(a) {
                            *d = hv + av;
                        }
                    }
                }
                for o in 0..c {
                    lt.pre[o * SEQ..(o + 1) * SEQ].fill(w[s.conv_b + o]);
                }
                correlate(
                    &mut lt.pre,
                    c,
                    &lt.input,
                    stride,
                    pad,
                    c,
                    &self.offsets[layer_no],
                    &w[s.conv_w..s.conv_w + c * c * k],
                );
                for (a, z) in lt.act.iter_mut().zip(&lt.pre) {
                    *a = z.max(0.0);
                }
                for o in 0..c {
                    let bias = w[s.skip_b + o];
                    tape.output[o * SEQ..(o + 1) * SEQ].iter_mut().for_each(|v| *v += bias);
                }
                correlate(&mut tape.output, c, &lt.act, SEQ, 0, c, &[0], &w[s.skip_w..s.skip_w + c * c]);
                layer_no += 1;
            }
        }

        let last: &[f64] = match self.blocks.last() {
            Some(t) => &t.output,
            None => &self.projected,
        };
        for (o, v) in self.pooled.iter_mut().enumerate() {
            *v = last[o * SEQ..(o + 1) * SEQ].iter().sum::<f64>() / SEQ as f64;
        }
        let mut logit = w[l.head_b2];
        for j in 0..l.hidden {
            let z = w[l.head_b1 + j] + dot(&w[l.head_w1 + j * c..l.head_w1 + (j + 1) * c], &self.pooled);
            self.hidden_pre[j] = z;
            self.hidden[j] = z.max(0.0);
            logit += w[l.head_w2 + j] * self.hidden[j];
        }
        Ok(logit)
    }

    pub fn forward(&mut self, p: &ModelParams, input: &[f64]) -> Result<f64> {
        Ok(sigmoid(self.forward_logit(p, input)?))
    }

    /// On/off state of every ReLU in the most recent forward pass. Finite
    /// difference checks compare it to skip perturbations that cross a kink.
    pub fn relu_pattern(&self) -> Vec<bool> {
        let conv = self.blocks.iter().flat_map(|b| &b.layers).flat_map(|l| l.pre.iter());
        conv.chain(&self.hidden_pre).map(|z| *z > 0.0).collect()
    }

    /// Adds `d_logit * d logit / d params` for the most recent forward pass
    /// into `grad`. Must follow [`Workspace::forward_logit`] with the same
    /// parameters.
    pub fn backward_from_logit(&mut self, p: &ModelParams, d_logit: f64, grad: &mut [f64]) {
        let w = p.values();
        let l = &self.layout;
        let c = l.channels;
        let k = l.kernel;
        let pad = self.pad;
        let stride = SEQ + 2 * pad;

        grad[l.head_b2] += d_logit;
        let mut d_pooled = vec![0.0; c];
        for j in 0..l.hidden {
            grad[l.head_w2 + j] += d_logit * self.hidden[j];
            if self.hidden_pre[j] <= 0.0 {
                continue;
            }
            let d_z = d_logit * w[l.head_w2 + j];
            grad[l.head_b1 + j] += d_z;
            let row = l.head_w1 + j * c;
            for i in 0..c {
                grad[row + i] += d_z * self.pooled[i];
                d_pooled[i] += d_z * w[row + i];
            }
        }

        // average pooling
        for (o, dp) in d_pooled.iter().enumerate() {
            self.d_out[o * SEQ..(o + 1) * SEQ].fill(dp / SEQ as f64);
        }

        let mut layer_no = self.offsets.len();
        for b in (0..l.blocks.len()).rev() {
            let slots = &l.blocks[b];
            if slots.is_empty() {
                continue;
            }
            let tape = &self.blocks[b];
            self.d_h_next.fill(0.0);
            for li in (0..slots.len()).rev() {
                layer_no -= 1;
                let s = &slots[li];
                let lt = &tape.layers[li];
                // skip projection
                for o in 0..c {
                    grad[s.skip_b + o] += self.d_out[o * SEQ..(o + 1) * SEQ].iter().sum::<f64>();
                }
                correlate_weight_grad(&mut grad[s.skip_w..s.skip_w + c * c], &self.d_out, c, &lt.act, SEQ, 0, c, &[0]);
                transpose_into(&mut self.transposed, &w[s.skip_w..s.skip_w + c * c], c, 1);
                self.d_act.copy_from_slice(&self.d_h_next);
                correlate(&mut self.d_act, c, &self.d_out, SEQ, 0, c, &[0], &self.transposed[..c * c]);
                // relu
                for (d, z) in self.d_act.iter_mut().zip(&lt.pre) {
                    if *z <= 0.0 {
                        *d = 0.0;
                    }
                }
                // dilated convolution
                let offsets = &self.offsets[layer_no];
                for o in 0..c {
                    let d_o = &self.d_act[o * SEQ..(o + 1) * SEQ];
                    grad[s.conv_b + o] += d_o.iter().sum::<f64>();
                    self.d_pre_padded[o * stride + pad..o * stride + pad + SEQ].copy_from_slice(d_o);
                }
                correlate_weight_grad(
                    &mut grad[s.conv_w..s.conv_w + c * c * k],
                    &self.d_act,
                    c,
                    &lt.input,
                    stride,
                    pad,
                    c,
                    offsets,
                );
                // residual passes d_h_next straight to the layer input
                self.d_h.copy_from_slice(&self.d_h_next);
                transpose_into(&mut self.transposed, &w[s.conv_w..s.conv_w + c * c * k], c, k);
                let mirrored = &self.mirrored[layer_no];
                correlate(&mut self.d_h, c, &self.d_pre_padded, stride, pad, c, mirrored, &self.transposed);
                std::mem::swap(&mut self.d_h, &mut self.d_h_next);
            }
            // d_h_next now holds the gradient w.r.t. the block input
            std::mem::swap(&mut self.d_out, &mut self.d_h_next);
        }

        // input projection
        for o in 0..c {
            grad[l.in_b + o] += self.d_out[o * SEQ..(o + 1) * SEQ].iter().sum::<f64>();
        }
        correlate_weight_grad(&mut grad[l.in_w..l.in_w + 3 * c], &self.d_out, c, &self.input, SEQ, 0, 3, &[0]);
    }
}

/// `dst[i][o][k] = src[o][i][k]` for `n x n` channels and `k` taps.
fn transpose_into(dst: &mut [f64], src: &[f64], n: usize, k: usize) {
    for o in 0..n {
        for i in 0..n {
            for tap in 0..k {
                dst[(i * n + o) * k + tap] = src[(o * n + i) * k + tap];
            }
        }
    }
}

/// Multi-channel correlation:
///
/// `out[r][t] += sum_{s, k} weights[r][s][k] * input[s * in_stride + in_base + t + offsets[k]]`
///
/// for `r < out_rows`, `s < in_rows`, `t < SEQ`. The caller guarantees that
/// every read stays inside `input` (zero padding supplies the boundary).
/// Four output rows are computed together so each input load is reused.
#[allow(clippy::too_many_arguments)]
fn correlate(
    out: &mut [f64],
    out_rows: usize,
    input: &[f64],
    in_stride: usize,
    in_base: usize,
    in_rows: usize,
    offsets: &[isize],
    weights: &[f64],
) {
    let mut r = 0;
    while r + 4 <= out_rows {
        correlate_rows::<4>(out, r, input, in_stride, in_base, in_rows, offsets, weights);
        r += 4;
    }
    while r < out_rows {
        correlate_rows::<1>(out, r, input, in_stride, in_base, in_rows, offsets, weights);
        r += 1;
    }
}

#[allow(clippy::too_many_arguments)]
#[inline(always)]
fn correlate_rows<const RB: usize>(
    out: &mut [f64],
    r0: usize,
    input: &[f64],
    in_stride: usize,
    in_base: usize,
    in_rows: usize,
    offsets: &[isize],
    weights: &[f64],
) {
    let k = offsets.len();
    // weights of the RB rows, interleaved per (source, tap)
    let mut packed = [[0.0f64; RB]; MAX_PACKED];
    let mut packed_vec;
    let packed: &mut [[f64; RB]] = if in_rows * k <= MAX_PACKED {
        &mut packed[..in_rows * k]
    } else {
        packed_vec = vec![[0.0f64; RB]; in_rows * k];
        &mut packed_vec
    };
    for (rb, row) in weights[r0 * in_rows * k..(r0 + RB) * in_rows * k].chunks_exact(in_rows * k).enumerate() {
        for (slot, w) in packed.iter_mut().zip(row) {
            slot[rb] = *w;
        }
    }
    for t0 in (0..SEQ).step_by(LANES) {
        let mut acc = [[0.0f64; LANES]; RB];
        for (s, taps) in packed.chunks_exact(k).enumerate() {
            let row = (s * in_stride + in_base + t0) as isize;
            for (w, &off) in taps.iter().zip(offsets) {
                let start = (row + off) as usize;
                let src: &[f64; LANES] = input[start..start + LANES].try_into().unwrap();
                for rb in 0..RB {
                    for j in 0..LANES {
                        acc[rb][j] += w[rb] * src[j];
                    }
                }
            }
        }
        for (rb, a) in acc.iter().enumerate() {
            let dst = &mut out[(r0 + rb) * SEQ + t0..(r0 + rb) * SEQ + t0 + LANES];
            for j in 0..LANES {
                dst[j] += a[j];
            }
        }
    }
}

/// Weight gradient of [`correlate`]:
///
/// `grad[r][s][k] += sum_t d[r][t] * input[s * in_stride + in_base + t + offsets[k]]`
#[allow(clippy::too_many_arguments)]
fn correlate_weight_grad(
    grad: &mut [f64],
    d: &[f64],
    d_rows: usize,
    input: &[f64],
    in_stride: usize,
    in_base: usize,
    in_rows: usize,
    offsets: &[isize],
) {
    let mut r = 0;
    while r + 4 <= d_rows {
        weight_grad_rows::<4>(grad, d, r, input, in_stride, in_base, in_rows, offsets);
        r += 4;
    }
    while r < d_rows {
        weight_grad_rows::<1>(grad, d, r, input, in_stride, in_base, in_rows, offsets);
        r += 1;
    }
}

#[allow(clippy::too_many_arguments)]
#[inline(always)]
fn weight_grad_rows<const RB: usize>(
    grad: &mut [f64],
    d: &[f64],
    r0: usize,
    input: &[f64],
    in_stride: usize,
    in_base: usize,
    in_rows: usize,
    offsets: &[isize],
) {
    let k = offsets.len();
    let rows: [&[f64]; RB] = std::array::from_fn(|rb| &d[(r0 + rb) * SEQ..(r0 + rb + 1) * SEQ]);
    for s in 0..in_rows {
        for (tap, &off) in offsets.iter().enumerate() {
            let start = ((s * in_stride + in_base) as isize + off) as usize;
            let src = &input[start..start + SEQ];
            let mut acc = [[0.0f64; LANES]; RB];
            for (t0, x) in src.chunks_exact(LANES).enumerate() {
                for rb in 0..RB {
                    let dr = &rows[rb][t0 * LANES..t0 * LANES + LANES];
                    for j in 0..LANES {
                        acc[rb][j] += dr[j] * x[j];
                    }
                }
            }
            for (rb, a) in acc.iter().enumerate() {
                grad[((r0 + rb) * in_rows + s) * k + tap] += a.iter().sum::<f64>();
            }
        }
    }
}

/// Largest `sources x taps` handled without a heap allocation.
const MAX_PACKED: usize = 256;

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    // Fixed partial sums: reproducible and vectorizable.
    let mut acc = [0.0; LANES];
    let chunks = a.len().min(b.len()) / LANES;
    for j in 0..chunks {
        for lane in 0..LANES {
            acc[lane] += a[LANES * j + lane] * b[LANES * j + lane];
        }
    }
    let mut tail = 0.0;
    for j in LANES * chunks..a.len().min(b.len()) {
        tail += a[j] * b[j];
    }
    acc.iter().sum::<f64>() + tail
}

/// Probability output of one sub-model.
pub fn forward(p: &ModelParams, x: &NormalizedCenterline) -> Result<f64> {
    Workspace::new(p.arch()).forward(p, &to_input(x))
}

/// Loss and exact parameter gradient for one sample.
pub fn backward(p: &ModelParams, x: &NormalizedCenterline, target: f64) -> Result<(f64, ModelParams)> {
    let mut ws = Workspace::new(p.arch());
    let z = ws.forward_logit(p, &to_input(x))?;
    let mut grad = ModelParams::zeros(p.arch())?;
    ws.backward_from_logit(p, sigmoid(z) - target, grad.values_mut());
    Ok((bce_with_logit(z, target), grad))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bce_values() {
        assert!((bce_loss(0.5, 0.5) - std::f64::consts::LN_2).abs() < 1e-12);
        assert!((bce_loss(0.5, 1.0) - std::f64::consts::LN_2).abs() < 1e-12);
        assert!((bce_loss(0.9, 1.0) - 0.105_360_515_657_826_3).abs() < 1e-12);
        // far into the tails
        assert!((bce_with_logit(800.0, 1.0)).abs() < 1e-300);
        assert!((bce_with_logit(-800.0, 1.0) - 800.0).abs() < 1e-9);
    }

    #[test]
    fn sigmoid_is_symmetric() {
        for x in [-30.0, -2.0, 0.0, 0.7, 40.0] {
            assert!((sigmoid(x) + sigmoid(-x) - 1.0).abs() < 1e-15);
        }
        assert_eq!(sigmoid(0.0), 0.5);
    }

    #[test]
    fn dot_handles_tails() {
        let a: Vec<f64> = (0..7).map(|v| v as f64).collect();
        assert_eq!(dot(&a, &a), 91.0);
    }
}
