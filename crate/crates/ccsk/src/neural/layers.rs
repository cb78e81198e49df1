//! Layer kernels: LSTM direction passes, multi-head self-attention,
//! linear projections, dropout. All sequences are stored flat and
//! time-major: element (t, j) of a T x D block sits at `t * D + j`.

use crate::real::Real;
use rand::Rng;

#[inline]
fn sigmoid<F: Real>(x: F) -> F {
    F::one() / (F::one() + (-x).exp())
}

#[inline]
fn dot<F: Real>(a: &[F], b: &[F]) -> F {
    let mut acc = F::zero();
    for (x, y) in a.iter().zip(b) {
        acc = acc + *x * *y;
    }
    acc
}

/// Everything one LSTM direction pass needs to remember for BPTT.
pub(crate) struct LstmCache<F> {
    /// Inputs in processing order, T x In.
    pub xs: Vec<F>,
    pub gate_i: Vec<F>,
    pub gate_f: Vec<F>,
    pub gate_g: Vec<F>,
    pub gate_o: Vec<F>,
    pub cell: Vec<F>,
    pub tanh_cell: Vec<F>,
    /// Hidden states in processing order, T x H.
    pub hidden: Vec<F>,
}

/// One direction of an LSTM over `t_len` steps. Gate layout inside the
/// 4H-row weight blocks is `[input, forget, cell, output]`.
pub(crate) fn lstm_forward<F: Real>(
    w_x: &[F],
    w_h: &[F],
    b: &[F],
    xs: Vec<F>,
    t_len: usize,
    in_dim: usize,
    h_dim: usize,
) -> LstmCache<F> {
    let mut cache = LstmCache {
        xs,
        gate_i: vec![F::zero(); t_len * h_dim],
        gate_f: vec![F::zero(); t_len * h_dim],
        gate_g: vec![F::zero(); t_len * h_dim],
        gate_o: vec![F::zero(); t_len * h_dim],
        cell: vec![F::zero(); t_len * h_dim],
        tanh_cell: vec![F::zero(); t_len * h_dim],
        hidden: vec![F::zero(); t_len * h_dim],
    };
    let mut h_prev = vec![F::zero(); h_dim];
    let mut c_prev = vec![F::zero(); h_dim];
    let mut z = vec![F::zero(); 4 * h_dim];
    for t in 0..t_len {
        let x_t = &cache.xs[t * in_dim..(t + 1) * in_dim];
        for (gi, zv) in z.iter_mut().enumerate() {
            *zv = b[gi]
                + dot(&w_x[gi * in_dim..(gi + 1) * in_dim], x_t)
                + dot(&w_h[gi * h_dim..(gi + 1) * h_dim], &h_prev);
        }
        let base = t * h_dim;
        for j in 0..h_dim {
            let i = sigmoid(z[j]);
            let f = sigmoid(z[h_dim + j]);
            let g = z[2 * h_dim + j].tanh();
            let o = sigmoid(z[3 * h_dim + j]);
            let c = f * c_prev[j] + i * g;
            let tc = c.tanh();
            cache.gate_i[base + j] = i;
            cache.gate_f[base + j] = f;
            cache.gate_g[base + j] = g;
            cache.gate_o[base + j] = o;
            cache.cell[base + j] = c;
            cache.tanh_cell[base + j] = tc;
            cache.hidden[base + j] = o * tc;
        }
        h_prev.copy_from_slice(&cache.hidden[base..base + h_dim]);
        c_prev.copy_from_slice(&cache.cell[base..base + h_dim]);
    }
    cache
}

/// BPTT for one direction. `d_hidden` holds the loss gradient on every
/// hidden state (T x H, processing order). Weight gradients accumulate
/// into `gw_x`/`gw_h`/`gb`; input gradients accumulate into `d_xs`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn lstm_backward<F: Real>(
    w_x: &[F],
    w_h: &[F],
    cache: &LstmCache<F>,
    d_hidden: &[F],
    t_len: usize,
    in_dim: usize,
    h_dim: usize,
    gw_x: &mut [F],
    gw_h: &mut [F],
    gb: &mut [F],
    d_xs: &mut [F],
) {
    let mut dh_next = vec![F::zero(); h_dim];
    let mut dc_next = vec![F::zero(); h_dim];
    let mut dz = vec![F::zero(); 4 * h_dim];
    for t in (0..t_len).rev() {
        let base = t * h_dim;
        for j in 0..h_dim {
            let i = cache.gate_i[base + j];
            let f = cache.gate_f[base + j];
            let g = cache.gate_g[base + j];
            let o = cache.gate_o[base + j];
            let tc = cache.tanh_cell[base + j];
            let c_prev = if t > 0 { cache.cell[base - h_dim + j] } else { F::zero() };

            let dh = d_hidden[base + j] + dh_next[j];
            let dc = dh * o * (F::one() - tc * tc) + dc_next[j];

            dz[j] = dc * g * i * (F::one() - i);
            dz[h_dim + j] = dc * c_prev * f * (F::one() - f);
            dz[2 * h_dim + j] = dc * i * (F::one() - g * g);
            dz[3 * h_dim + j] = dh * tc * o * (F::one() - o);

            dc_next[j] = dc * f;
        }
        let x_t = &cache.xs[t * in_dim..(t + 1) * in_dim];
        let h_prev = if t > 0 { &cache.hidden[base - h_dim..base] } else { &[][..] };
        for (gi, &dzg) in dz.iter().enumerate() {
            gb[gi] = gb[gi] + dzg;
            let wrow = gi * in_dim;
            for (k, &xv) in x_t.iter().enumerate() {
                gw_x[wrow + k] = gw_x[wrow + k] + dzg * xv;
            }
            if t > 0 {
                let hrow = gi * h_dim;
                for (k, &hv) in h_prev.iter().enumerate() {
                    gw_h[hrow + k] = gw_h[hrow + k] + dzg * hv;
                }
            }
        }
        for j in 0..h_dim {
            let mut acc = F::zero();
            for gi in 0..4 * h_dim {
                acc = acc + w_h[gi * h_dim + j] * dz[gi];
            }
            dh_next[j] = acc;
        }
        let dx_t = &mut d_xs[t * in_dim..(t + 1) * in_dim];
        for k in 0..in_dim {
            let mut acc = F::zero();
            for gi in 0..4 * h_dim {
                acc = acc + w_x[gi * in_dim + k] * dz[gi];
            }
            dx_t[k] = dx_t[k] + acc;
        }
    }
}

/// `out[t, o] = b[o] + sum_in w[o, in] * x[t, in]`
pub(crate) fn linear_forward<F: Real>(
    x: &[F],
    w: &[F],
    b: &[F],
    t_len: usize,
    in_dim: usize,
    out_dim: usize,
    out: &mut [F],
) {
    for t in 0..t_len {
        let x_t = &x[t * in_dim..(t + 1) * in_dim];
        let o_t = &mut out[t * out_dim..(t + 1) * out_dim];
        for (o, ov) in o_t.iter_mut().enumerate() {
            *ov = b[o] + dot(&w[o * in_dim..(o + 1) * in_dim], x_t);
        }
    }
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn linear_backward<F: Real>(
    x: &[F],
    w: &[F],
    d_out: &[F],
    t_len: usize,
    in_dim: usize,
    out_dim: usize,
    gw: &mut [F],
    gb: &mut [F],
    d_x: &mut [F],
) {
    for t in 0..t_len {
        let x_t = &x[t * in_dim..(t + 1) * in_dim];
        let d_t = &d_out[t * out_dim..(t + 1) * out_dim];
        for (o, &dv) in d_t.iter().enumerate() {
            gb[o] = gb[o] + dv;
            let row = o * in_dim;
            for (k, &xv) in x_t.iter().enumerate() {
                gw[row + k] = gw[row + k] + dv * xv;
            }
        }
        let dx_t = &mut d_x[t * in_dim..(t + 1) * in_dim];
        for k in 0..in_dim {
            let mut acc = F::zero();
            for (o, &dv) in d_t.iter().enumerate() {
                acc = acc + w[o * in_dim + k] * dv;
            }
            dx_t[k] = dx_t[k] + acc;
        }
    }
}

pub(crate) struct AttnCache<F> {
    /// Input, T x Din.
    pub x: Vec<F>,
    pub q: Vec<F>,
    pub k: Vec<F>,
    pub v: Vec<F>,
    /// Softmax attention weights, heads x T x T.
    pub a: Vec<F>,
    /// Concatenated head outputs before the output projection, T x D.
    pub concat: Vec<F>,
    /// Projected output, T x D.
    pub out: Vec<F>,
}

pub(crate) struct AttnWeights<'a, F> {
    pub w_q: &'a [F],
    pub b_q: &'a [F],
    pub w_k: &'a [F],
    pub b_k: &'a [F],
    pub w_v: &'a [F],
    pub b_v: &'a [F],
    pub w_o: &'a [F],
    pub b_o: &'a [F],
}

/// Scaled dot-product multi-head self-attention over the time axis.
/// No positional encoding: order information comes from the recurrent
/// layers around this block, which also makes the block itself
/// permutation-equivariant.
pub(crate) fn attention_forward<F: Real>(
    x: Vec<F>,
    t_len: usize,
    in_dim: usize,
    d: usize,
    heads: usize,
    w: &AttnWeights<'_, F>,
) -> AttnCache<F> {
    let dh = d / heads;
    let scale = F::one() / F::of_usize(dh).sqrt();
    let mut q = vec![F::zero(); t_len * d];
    let mut k = vec![F::zero(); t_len * d];
    let mut v = vec![F::zero(); t_len * d];
    linear_forward(&x, w.w_q, w.b_q, t_len, in_dim, d, &mut q);
    linear_forward(&x, w.w_k, w.b_k, t_len, in_dim, d, &mut k);
    linear_forward(&x, w.w_v, w.b_v, t_len, in_dim, d, &mut v);

    let mut a = vec![F::zero(); heads * t_len * t_len];
    let mut concat = vec![F::zero(); t_len * d];
    for hd in 0..heads {
        let col = hd * dh;
        for ai in 0..t_len {
            let row = &mut a[(hd * t_len + ai) * t_len..(hd * t_len + ai + 1) * t_len];
            let q_a = &q[ai * d + col..ai * d + col + dh];
            let mut max = F::neg_infinity();
            for (bi, rv) in row.iter_mut().enumerate() {
                let s = dot(q_a, &k[bi * d + col..bi * d + col + dh]) * scale;
                if s > max {
                    max = s;
                }
                *rv = s;
            }
            let mut sum = F::zero();
            for rv in row.iter_mut() {
                *rv = (*rv - max).exp();
                sum = sum + *rv;
            }
            for rv in row.iter_mut() {
                *rv = *rv / sum;
            }
            let o_a = &mut concat[ai * d + col..ai * d + col + dh];
            for (bi, &w_ab) in row.iter().enumerate() {
                let v_b = &v[bi * d + col..bi * d + col + dh];
                for r in 0..dh {
                    o_a[r] = o_a[r] + w_ab * v_b[r];
                }
            }
        }
    }

    let mut out = vec![F::zero(); t_len * d];
    linear_forward(&concat, w.w_o, w.b_o, t_len, d, d, &mut out);
    AttnCache {
        x,
        q,
        k,
        v,
        a,
        concat,
        out,
    }
}

pub(crate) struct AttnGrads<'a, F> {
    pub w_q: &'a mut [F],
    pub b_q: &'a mut [F],
    pub w_k: &'a mut [F],
    pub b_k: &'a mut [F],
    pub w_v: &'a mut [F],
    pub b_v: &'a mut [F],
    pub w_o: &'a mut [F],
    pub b_o: &'a mut [F],
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn attention_backward<F: Real>(
    cache: &AttnCache<F>,
    d_out: &[F],
    t_len: usize,
    in_dim: usize,
    d: usize,
    heads: usize,
    w: &AttnWeights<'_, F>,
    g: &mut AttnGrads<'_, F>,
    d_x: &mut [F],
) {
    let dh = d / heads;
    let scale = F::one() / F::of_usize(dh).sqrt();

    // Output projection.
    let mut d_concat = vec![F::zero(); t_len * d];
    linear_backward(
        &cache.concat,
        w.w_o,
        d_out,
        t_len,
        d,
        d,
        g.w_o,
        g.b_o,
        &mut d_concat,
    );

    let mut d_q = vec![F::zero(); t_len * d];
    let mut d_k = vec![F::zero(); t_len * d];
    let mut d_v = vec![F::zero(); t_len * d];
    let mut d_a_row = vec![F::zero(); t_len];
    for hd in 0..heads {
        let col = hd * dh;
        for ai in 0..t_len {
            let a_row = &cache.a[(hd * t_len + ai) * t_len..(hd * t_len + ai + 1) * t_len];
            let d_o_a = &d_concat[ai * d + col..ai * d + col + dh];

            // dA = d_head . V^T and dV += A^T . d_head
            for (bi, da) in d_a_row.iter_mut().enumerate() {
                let v_b = &cache.v[bi * d + col..bi * d + col + dh];
                *da = dot(d_o_a, v_b);
                let a_ab = a_row[bi];
                let dv_b = &mut d_v[bi * d + col..bi * d + col + dh];
                for r in 0..dh {
                    dv_b[r] = dv_b[r] + a_ab * d_o_a[r];
                }
            }

            // softmax backward: dS = A * (dA - <A, dA>)
            let inner = dot(a_row, &d_a_row);
            let q_a = &cache.q[ai * d + col..ai * d + col + dh];
            for bi in 0..t_len {
                let ds = a_row[bi] * (d_a_row[bi] - inner) * scale;
                let k_b = &cache.k[bi * d + col..bi * d + col + dh];
                let dq_a = &mut d_q[ai * d + col..ai * d + col + dh];
                for r in 0..dh {
                    dq_a[r] = dq_a[r] + ds * k_b[r];
                }
                let dk_b = &mut d_k[bi * d + col..bi * d + col + dh];
                for r in 0..dh {
                    dk_b[r] = dk_b[r] + ds * q_a[r];
                }
            }
        }
    }

    linear_backward(&cache.x, w.w_q, &d_q, t_len, in_dim, d, g.w_q, g.b_q, d_x);
    linear_backward(&cache.x, w.w_k, &d_k, t_len, in_dim, d, g.w_k, g.b_k, d_x);
    linear_backward(&cache.x, w.w_v, &d_v, t_len, in_dim, d, g.w_v, g.b_v, d_x);
}

/// Inverted-dropout mask: zero with probability `p`, else `1/(1-p)`, so
/// inference needs no rescaling.
pub(crate) fn dropout_mask<F: Real>(len: usize, p: f64, rng: &mut impl Rng) -> Vec<F> {
    let keep = F::of(1.0 / (1.0 - p));
    (0..len)
        .map(|_| if rng.gen::<f64>() < p { F::zero() } else { keep })
        .collect()
}

/// Numerically stable softmax.
pub(crate) fn softmax<F: Real>(logits: &[F]) -> Vec<F> {
    let max = logits.iter().cloned().fold(F::neg_infinity(), F::max);
    let exps: Vec<F> = logits.iter().map(|&l| (l - max).exp()).collect();
    let sum: F = exps.iter().cloned().sum();
    exps.into_iter().map(|e| e / sum).collect()
}
