//! Stacked LSTM with a sigmoid read-out, forward pass and BPTT.
//!
//! All parameters live in one flat vector. Gate weights of a layer are
//! stored column-major: column `j` holds the `4H` weights (gate order
//! input, forget, candidate, output) applied to the `j`-th entry of the
//! concatenated `[x; h_prev]` vector. Both the forward product and the
//! weight-gradient update are then contiguous `axpy` sweeps.
//!
//! Between layers the hidden output is passed through a ReLU; the read-out
//! sees the top layer's hidden state directly. During training a layer's
//! output may be multiplied by an inverted dropout mask that is fixed for
//! the whole sequence.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerShape {
    pub input: usize,
    pub hidden: usize,
    /// Offset of the `(input + hidden) x 4 hidden` weight block.
    pub w: usize,
    /// Offset of the `4 hidden` bias block.
    pub b: usize,
}

impl LayerShape {
    pub fn cols(&self) -> usize {
        self.input + self.hidden
    }

    pub fn rows(&self) -> usize {
        4 * self.hidden
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Layout {
    pub layers: Vec<LayerShape>,
    pub out_w: usize,
    pub out_b: usize,
    pub len: usize,
}

impl Layout {
    pub fn new(input: usize, sizes: &[usize]) -> Self {
        let mut layers = Vec::with_capacity(sizes.len());
        let mut off = 0;
        let mut prev = input;
        for &h in sizes {
            let w = off;
            off += (prev + h) * 4 * h;
            let b = off;
            off += 4 * h;
            layers.push(LayerShape {
                input: prev,
                hidden: h,
                w,
                b,
            });
            prev = h;
        }
        let out_w = off;
        off += prev;
        let out_b = off;
        off += 1;
        Layout {
            layers,
            out_w,
            out_b,
            len: off,
        }
    }

    pub fn last_hidden(&self) -> usize {
        self.layers.last().map(|l| l.hidden).unwrap_or(0)
    }
}

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Binary cross-entropy of `sigmoid(s)` against `label`, computed from the logit.
#[inline]
pub(crate) fn bce_with_logit(s: f64, label: f64) -> f64 {
    s.max(0.0) - s * label + (-s.abs()).exp().ln_1p()
}

#[inline]
fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for k in 0..8 {
            acc[k] += x[k] * y[k];
        }
    }
    let mut s = (acc[0] + acc[4]) + (acc[1] + acc[5]) + (acc[2] + acc[6]) + (acc[3] + acc[7]);
    for (x, y) in ra.iter().zip(rb) {
        s += x * y;
    }
    s
}

/// `z = b + W [x; h]` for one layer, W column-major.
#[inline]
fn gate_preactivations(params: &[f64], shape: &LayerShape, xh: &[f64], z: &mut [f64]) {
    let rows = shape.rows();
    z.copy_from_slice(&params[shape.b..shape.b + rows]);
    let w = &params[shape.w..shape.w + rows * shape.cols()];
    for (j, &v) in xh.iter().enumerate() {
        if v != 0.0 {
            axpy(z, v, &w[j * rows..(j + 1) * rows]);
        }
    }
}

/// Applies gate nonlinearities in place and advances the cell.
#[inline]
fn cell_update(z: &mut [f64], c_prev: &[f64], c: &mut [f64], tanh_c: &mut [f64], h: &mut [f64]) {
    let hs = c.len();
    for k in 0..hs {
        let i = sigmoid(z[k]);
        let f = sigmoid(z[hs + k]);
        let g = z[2 * hs + k].tanh();
        let o = sigmoid(z[3 * hs + k]);
        z[k] = i;
        z[hs + k] = f;
        z[2 * hs + k] = g;
        z[3 * hs + k] = o;
        c[k] = f * c_prev[k] + i * g;
        tanh_c[k] = c[k].tanh();
        h[k] = o * tanh_c[k];
    }
}

/// Logit of the read-out unit after every step, without dropout.
pub fn forward_logits(layout: &Layout, params: &[f64], inputs: &[f64]) -> Vec<f64> {
    let mut h: Vec<Vec<f64>> = layout.layers.iter().map(|l| vec![0.0; l.hidden]).collect();
    let mut c = h.clone();
    let mut xh: Vec<Vec<f64>> = layout.layers.iter().map(|l| vec![0.0; l.cols()]).collect();
    let mut z: Vec<Vec<f64>> = layout.layers.iter().map(|l| vec![0.0; l.rows()]).collect();
    let mut tc = h.clone();
    let mut c_prev = h.clone();
    let out_w = &params[layout.out_w..layout.out_w + layout.last_hidden()];
    let out_b = params[layout.out_b];

    let mut logits = Vec::with_capacity(inputs.len());
    for &x in inputs {
        for (l, shape) in layout.layers.iter().enumerate() {
            let (xi, hi) = xh[l].split_at_mut(shape.input);
            if l == 0 {
                xi[0] = x;
            } else {
                for (dst, &src) in xi.iter_mut().zip(&h[l - 1]) {
                    *dst = src.max(0.0);
                }
            }
            hi.copy_from_slice(&h[l]);
            gate_preactivations(params, shape, &xh[l], &mut z[l]);
            c_prev[l].copy_from_slice(&c[l]);
            cell_update(&mut z[l], &c_prev[l], &mut c[l], &mut tc[l], &mut h[l]);
        }
        let top = h.last().map(|v| v.as_slice()).unwrap_or(&[]);
        let s = out_b + top.iter().zip(out_w).map(|(&a, &w)| a * w).sum::<f64>();
        logits.push(s);
    }
    logits
}

/// Per-layer buffers for one unrolled sequence.
#[derive(Debug, Default, Clone)]
struct LayerTape {
    xh: Vec<f64>,
    gates: Vec<f64>,
    c: Vec<f64>,
    tanh_c: Vec<f64>,
    h: Vec<f64>,
}

/// Reusable scratch space for [`loss_and_grad`].
#[derive(Debug, Default, Clone)]
pub struct Workspace {
    tapes: Vec<LayerTape>,
    logits: Vec<f64>,
    dh_next: Vec<Vec<f64>>,
    dc_next: Vec<Vec<f64>>,
    dxh: Vec<f64>,
    dz: Vec<f64>,
    da: Vec<f64>,
    zeros: Vec<f64>,
}

/// Training-time view of one sample.
pub struct TrainSample<'a> {
    pub inputs: &'a [f64],
    pub label: f64,
    /// Steps before this index do not contribute to the loss.
    pub loss_from: usize,
    /// One optional inverted-dropout mask per layer (already scaled).
    pub masks: &'a [Option<Vec<f64>>],
}

/// Mean BCE over the supervised steps of one sequence; accumulates
/// `scale * dLoss/dparams` into `grad`.
pub fn loss_and_grad(
    layout: &Layout,
    params: &[f64],
    sample: &TrainSample<'_>,
    grad: &mut [f64],
    scale: f64,
    ws: &mut Workspace,
) -> f64 {
    let t_len = sample.inputs.len();
    let n_layers = layout.layers.len();
    let supervised = t_len.saturating_sub(sample.loss_from);
    if supervised == 0 {
        return 0.0;
    }
    let mask = |l: usize| sample.masks.get(l).and_then(|m| m.as_ref());

    ws.tapes.resize_with(n_layers, LayerTape::default);
    for (tape, s) in ws.tapes.iter_mut().zip(&layout.layers) {
        tape.xh.resize(t_len * s.cols(), 0.0);
        tape.gates.resize(t_len * s.rows(), 0.0);
        tape.c.resize(t_len * s.hidden, 0.0);
        tape.tanh_c.resize(t_len * s.hidden, 0.0);
        tape.h.resize(t_len * s.hidden, 0.0);
    }
    let max_h = layout.layers.iter().map(|l| l.hidden).max().unwrap_or(0);
    ws.zeros.clear();
    ws.zeros.resize(max_h, 0.0);
    ws.logits.clear();

    let out_w = layout.out_w;
    let top_h = layout.last_hidden();

    // Forward.
    for t in 0..t_len {
        for l in 0..n_layers {
            let s = layout.layers[l];
            let (hs, cols, rows) = (s.hidden, s.cols(), s.rows());
            let (below, rest) = ws.tapes.split_at_mut(l);
            let tape = &mut rest[0];
            {
                let xh = &mut tape.xh[t * cols..(t + 1) * cols];
                if l == 0 {
                    xh[0] = sample.inputs[t];
                } else {
                    let prev = &below[l - 1].h[t * s.input..(t + 1) * s.input];
                    match mask(l - 1) {
                        Some(m) => {
                            for k in 0..s.input {
                                xh[k] = prev[k].max(0.0) * m[k];
                            }
                        }
                        None => {
                            for k in 0..s.input {
                                xh[k] = prev[k].max(0.0);
                            }
                        }
                    }
                }
                if t == 0 {
                    xh[s.input..].fill(0.0);
                } else {
                    let (hp, _) = tape.h.split_at(t * hs);
                    xh[s.input..].copy_from_slice(&hp[(t - 1) * hs..]);
                }
            }
            let (xh_all, gates_all) = (&tape.xh, &mut tape.gates);
            let z = &mut gates_all[t * rows..(t + 1) * rows];
            gate_preactivations(params, &s, &xh_all[t * cols..(t + 1) * cols], z);
            let (c_before, c_rest) = tape.c.split_at_mut(t * hs);
            let c_prev: &[f64] = if t == 0 {
                &ws.zeros[..hs]
            } else {
                &c_before[(t - 1) * hs..]
            };
            cell_update(
                z,
                c_prev,
                &mut c_rest[..hs],
                &mut tape.tanh_c[t * hs..(t + 1) * hs],
                &mut tape.h[t * hs..(t + 1) * hs],
            );
        }
        let top = &ws.tapes[n_layers - 1].h[t * top_h..(t + 1) * top_h];
        let mut s = params[layout.out_b];
        match mask(n_layers - 1) {
            Some(m) => {
                for k in 0..top_h {
                    s += top[k] * m[k] * params[out_w + k];
                }
            }
            None => {
                for k in 0..top_h {
                    s += top[k] * params[out_w + k];
                }
            }
        }
        ws.logits.push(s);
    }

    let inv = 1.0 / supervised as f64;
    let loss = ws.logits[sample.loss_from..]
        .iter()
        .map(|&s| bce_with_logit(s, sample.label))
        .sum::<f64>()
        * inv;

    // Backward.
    ws.dh_next.resize_with(n_layers, Vec::new);
    ws.dc_next.resize_with(n_layers, Vec::new);
    for (l, s) in layout.layers.iter().enumerate() {
        ws.dh_next[l].clear();
        ws.dh_next[l].resize(s.hidden, 0.0);
        ws.dc_next[l].clear();
        ws.dc_next[l].resize(s.hidden, 0.0);
    }

    for t in (0..t_len).rev() {
        // d loss / d (masked top hidden)
        ws.da.clear();
        ws.da.resize(top_h, 0.0);
        if t >= sample.loss_from {
            let dy = (sigmoid(ws.logits[t]) - sample.label) * inv * scale;
            let top = &ws.tapes[n_layers - 1].h[t * top_h..(t + 1) * top_h];
            let m = mask(n_layers - 1);
            for k in 0..top_h {
                let mk = m.map_or(1.0, |m| m[k]);
                let a = top[k] * mk;
                grad[out_w + k] += dy * a;
                ws.da[k] = dy * params[out_w + k];
            }
            grad[layout.out_b] += dy;
        }

        for l in (0..n_layers).rev() {
            let s = layout.layers[l];
            let (hs, cols, rows) = (s.hidden, s.cols(), s.rows());
            let tape = &ws.tapes[l];
            let h = &tape.h[t * hs..(t + 1) * hs];
            let g = &tape.gates[t * rows..(t + 1) * rows];
            let tc = &tape.tanh_c[t * hs..(t + 1) * hs];
            let c_prev: &[f64] = if t == 0 {
                &ws.zeros[..hs]
            } else {
                &tape.c[(t - 1) * hs..t * hs]
            };
            let m = mask(l);

            ws.dz.clear();
            ws.dz.resize(rows, 0.0);
            let dh_next = &mut ws.dh_next[l];
            let dc_next = &mut ws.dc_next[l];
            for k in 0..hs {
                let from_above = if h[k] > 0.0 || l == n_layers - 1 {
                    ws.da[k] * m.map_or(1.0, |m| m[k])
                } else {
                    0.0
                };
                let dh = from_above + dh_next[k];
                let (i, f, gg, o) = (g[k], g[hs + k], g[2 * hs + k], g[3 * hs + k]);
                let dc = dc_next[k] + dh * o * (1.0 - tc[k] * tc[k]);
                ws.dz[k] = dc * gg * i * (1.0 - i);
                ws.dz[hs + k] = dc * c_prev[k] * f * (1.0 - f);
                ws.dz[2 * hs + k] = dc * i * (1.0 - gg * gg);
                ws.dz[3 * hs + k] = dh * tc[k] * o * (1.0 - o);
                dc_next[k] = dc * f;
            }

            let xh = &tape.xh[t * cols..(t + 1) * cols];
            let w = &params[s.w..s.w + rows * cols];
            let gw = &mut grad[s.w..s.w + rows * cols];
            ws.dxh.clear();
            ws.dxh.resize(cols, 0.0);
            for j in 0..cols {
                let col = j * rows..(j + 1) * rows;
                if xh[j] != 0.0 {
                    axpy(&mut gw[col.clone()], xh[j], &ws.dz);
                }
                ws.dxh[j] = dot(&w[col], &ws.dz);
            }
            for (gb, dz) in grad[s.b..s.b + rows].iter_mut().zip(&ws.dz) {
                *gb += dz;
            }
            dh_next.copy_from_slice(&ws.dxh[s.input..]);
            if l > 0 {
                ws.da.clear();
                ws.da.extend_from_slice(&ws.dxh[..s.input]);
            }
        }
    }
    loss
}

/// Mean BCE over the supervised steps without gradients (no dropout).
pub fn sequence_loss(layout: &Layout, params: &[f64], inputs: &[f64], label: f64, loss_from: usize) -> f64 {
    let logits = forward_logits(layout, params, inputs);
    let n = logits.len().saturating_sub(loss_from);
    if n == 0 {
        return 0.0;
    }
    logits[loss_from..]
        .iter()
        .map(|&s| bce_with_logit(s, label))
        .sum::<f64>()
        / n as f64
}
