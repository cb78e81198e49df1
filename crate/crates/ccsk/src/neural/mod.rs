//! The window classifier: a bidirectional LSTM feeding scaled dot-product
//! multi-head self-attention, a second bidirectional LSTM reduced to its
//! final states, and a softmax head over the two classes
//! (Logistic cover = 0, Cubic information = 1).
//!
//! Forward, backward (full BPTT through both recurrent layers and the
//! attention block) and the Adam training loop are self-contained here;
//! no external ML framework is involved. Checkpoints use the `CCSK`
//! binary format described in [`checkpoint`].

mod checkpoint;
mod layers;
mod train;

pub use checkpoint::{load_params, load_params_expecting, save_params};
pub use train::{
    evaluate, generate_dataset, loss_and_grad, train, Dataset, EpochStats, Example, StopReason,
    TrainOutcome, TrainingConfig,
};

use crate::error::{param_err, Error, Result};
use crate::real::Real;
use crate::rng::{derive, rng_from};
use layers::{
    attention_backward, attention_forward, dropout_mask, lstm_backward, lstm_forward,
    softmax, AttnCache, AttnGrads, AttnWeights, LstmCache,
};
use rand::Rng;

/// Content of the synthetic second input channel. The received baseband
/// here is real-valued, so the default keeps the channel at zero purely
/// for architectural fidelity; `Delta` feeds the one-step difference
/// instead.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AuxChannel {
    Zero,
    Delta,
}

/// Architecture hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NetConfig {
    /// Input channels per time step (fixed at 2).
    pub input_channels: usize,
    /// Hidden units per direction in each recurrent layer.
    pub hidden_units: usize,
    pub attention_heads: usize,
    /// Total projection width of the attention block (split across heads).
    pub attention_dim: usize,
    pub dropout_p: f64,
    /// Output classes (fixed at 2).
    pub classes: usize,
    /// Input sequence length T.
    pub window_length: usize,
    pub aux_channel: AuxChannel,
}

impl NetConfig {
    /// Full-scale defaults: 64 hidden units per direction, 4 heads over a
    /// 128-wide attention block, dropout 0.2.
    pub fn with_window(window_length: usize) -> Self {
        NetConfig {
            input_channels: 2,
            hidden_units: 64,
            attention_heads: 4,
            attention_dim: 128,
            dropout_p: 0.2,
            classes: 2,
            window_length,
            aux_channel: AuxChannel::Zero,
        }
    }

    /// Shrinks the network (attention width follows the recurrent width).
    pub fn with_hidden(mut self, hidden: usize) -> Self {
        self.hidden_units = hidden;
        self.attention_dim = 2 * hidden;
        self
    }

    pub fn with_heads(mut self, heads: usize) -> Self {
        self.attention_heads = heads;
        self
    }

    pub fn with_dropout(mut self, p: f64) -> Self {
        self.dropout_p = p;
        self
    }

    pub fn with_aux(mut self, aux: AuxChannel) -> Self {
        self.aux_channel = aux;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_channels != 2 {
            return Err(param_err!("input embedding is defined for 2 channels"));
        }
        if self.classes != 2 {
            return Err(param_err!("the window classifier is binary"));
        }
        if self.hidden_units == 0 || self.window_length == 0 {
            return Err(param_err!("hidden units and window length must be >= 1"));
        }
        if self.attention_heads == 0 || self.attention_dim % self.attention_heads != 0 {
            return Err(param_err!(
                "attention dim {} must be divisible by heads {}",
                self.attention_dim,
                self.attention_heads
            ));
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return Err(param_err!("dropout must lie in [0, 1)"));
        }
        Ok(())
    }

    /// Stable hash of the serialized config; stored params refuse to load
    /// against a different architecture.
    pub fn fingerprint(&self) -> u64 {
        checkpoint::fnv1a64(&checkpoint::config_bytes(self))
    }
}

/// Fixed tensor order; checkpoints and optimizer state follow it.
pub(crate) mod tix {
    pub const L1F_WX: usize = 0;
    pub const L1F_WH: usize = 1;
    pub const L1F_B: usize = 2;
    pub const L1B_WX: usize = 3;
    pub const L1B_WH: usize = 4;
    pub const L1B_B: usize = 5;
    pub const ATT_WQ: usize = 6;
    pub const ATT_BQ: usize = 7;
    pub const ATT_WK: usize = 8;
    pub const ATT_BK: usize = 9;
    pub const ATT_WV: usize = 10;
    pub const ATT_BV: usize = 11;
    pub const ATT_WO: usize = 12;
    pub const ATT_BO: usize = 13;
    pub const L2F_WX: usize = 14;
    pub const L2F_WH: usize = 15;
    pub const L2F_B: usize = 16;
    pub const L2B_WX: usize = 17;
    pub const L2B_WH: usize = 18;
    pub const L2B_B: usize = 19;
    pub const DENSE_W: usize = 20;
    pub const DENSE_B: usize = 21;
    pub const COUNT: usize = 22;
}

/// A named, shaped, row-major value block.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<F> {
    pub name: &'static str,
    pub dims: Vec<usize>,
    pub data: Vec<F>,
}

impl<F: Real> Tensor<F> {
    fn zeros(name: &'static str, dims: Vec<usize>) -> Self {
        let len = dims.iter().product();
        Tensor {
            name,
            dims,
            data: vec![F::zero(); len],
        }
    }
}

/// Gradient buffers shaped exactly like the parameter tensors.
pub type Gradients<F> = Vec<Tensor<F>>;

fn tensor_specs(cfg: &NetConfig) -> [(&'static str, Vec<usize>); tix::COUNT] {
    let h = cfg.hidden_units;
    let cin = cfg.input_channels;
    let d = cfg.attention_dim;
    let c = cfg.classes;
    [
        ("lstm1.fwd.w_x", vec![4 * h, cin]),
        ("lstm1.fwd.w_h", vec![4 * h, h]),
        ("lstm1.fwd.b", vec![4 * h]),
        ("lstm1.bwd.w_x", vec![4 * h, cin]),
        ("lstm1.bwd.w_h", vec![4 * h, h]),
        ("lstm1.bwd.b", vec![4 * h]),
        ("attn.w_q", vec![d, 2 * h]),
        ("attn.b_q", vec![d]),
        ("attn.w_k", vec![d, 2 * h]),
        ("attn.b_k", vec![d]),
        ("attn.w_v", vec![d, 2 * h]),
        ("attn.b_v", vec![d]),
        ("attn.w_o", vec![d, d]),
        ("attn.b_o", vec![d]),
        ("lstm2.fwd.w_x", vec![4 * h, d]),
        ("lstm2.fwd.w_h", vec![4 * h, h]),
        ("lstm2.fwd.b", vec![4 * h]),
        ("lstm2.bwd.w_x", vec![4 * h, d]),
        ("lstm2.bwd.w_h", vec![4 * h, h]),
        ("lstm2.bwd.b", vec![4 * h]),
        ("dense.w", vec![c, 2 * h]),
        ("dense.b", vec![c]),
    ]
}

/// The classifier's weights plus the config they were built for.
#[derive(Debug, Clone, PartialEq)]
pub struct NetParams<F> {
    pub cfg: NetConfig,
    pub tensors: Vec<Tensor<F>>,
    fingerprint: u64,
}

impl<F: Real> NetParams<F> {
    pub fn zeros(cfg: NetConfig) -> Result<Self> {
        cfg.validate()?;
        let tensors = tensor_specs(&cfg)
            .into_iter()
            .map(|(name, dims)| Tensor::zeros(name, dims))
            .collect();
        Ok(NetParams {
            fingerprint: cfg.fingerprint(),
            cfg,
            tensors,
        })
    }

    /// Seeded initialization: weights uniform with fan-in scaling
    /// `1/sqrt(cols)`, biases zero except recurrent forget gates at 1.
    pub fn init(cfg: NetConfig, seed: u64) -> Result<Self> {
        let mut params = Self::zeros(cfg)?;
        let mut rng = rng_from(seed);
        let h = cfg.hidden_units;
        for tensor in params.tensors.iter_mut() {
            if tensor.dims.len() == 2 {
                let scale = 1.0 / (tensor.dims[1] as f64).sqrt();
                for v in tensor.data.iter_mut() {
                    *v = F::of((rng.gen::<f64>() * 2.0 - 1.0) * scale);
                }
            } else if tensor.name.starts_with("lstm") {
                for v in tensor.data[h..2 * h].iter_mut() {
                    *v = F::one();
                }
            }
        }
        Ok(params)
    }

    pub fn zero_gradients(&self) -> Gradients<F> {
        self.tensors
            .iter()
            .map(|t| Tensor::zeros(t.name, t.dims.clone()))
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.tensors.iter().map(|t| t.data.len()).sum()
    }

    pub fn fingerprint(&self) -> u64 {
        self.fingerprint
    }

    #[inline]
    fn data(&self, idx: usize) -> &[F] {
        &self.tensors[idx].data
    }
}

/// Forward execution mode. Dropout only fires in `Train` mode, where the
/// masks are a pure function of the supplied seed.
#[derive(Debug, Clone, Copy)]
pub enum Mode {
    Infer,
    Train { dropout_seed: u64 },
}

/// Intermediate activations kept for the backward pass.
pub(crate) struct Trace<F> {
    l1f: LstmCache<F>,
    l1b: LstmCache<F>,
    attn: AttnCache<F>,
    drop1: Option<Vec<F>>,
    l2f: LstmCache<F>,
    l2b: LstmCache<F>,
    drop2: Option<Vec<F>>,
    /// Dense-layer input (final states, dropout applied), 2H.
    feat: Vec<F>,
    pub probs: Vec<F>,
}

fn embed<F: Real>(window: &[F], cfg: &NetConfig) -> Vec<F> {
    let t_len = window.len();
    let mut x = vec![F::zero(); t_len * 2];
    for t in 0..t_len {
        x[t * 2] = window[t];
        x[t * 2 + 1] = match cfg.aux_channel {
            AuxChannel::Zero => F::zero(),
            AuxChannel::Delta => {
                if t + 1 < t_len {
                    window[t + 1] - window[t]
                } else {
                    F::zero()
                }
            }
        };
    }
    x
}

fn reversed_rows<F: Real>(x: &[F], t_len: usize, dim: usize) -> Vec<F> {
    let mut out = vec![F::zero(); x.len()];
    for t in 0..t_len {
        out[t * dim..(t + 1) * dim]
            .copy_from_slice(&x[(t_len - 1 - t) * dim..(t_len - t) * dim]);
    }
    out
}

fn ensure_finite<F: Real>(vals: &[F], layer: &'static str) -> Result<()> {
    for (i, v) in vals.iter().enumerate() {
        if !v.is_finite() {
            return Err(Error::Numeric {
                context: layer,
                detail: format!("non-finite activation {v} at offset {i}"),
            });
        }
    }
    Ok(())
}

fn attn_weights<F: Real>(p: &NetParams<F>) -> AttnWeights<'_, F> {
    AttnWeights {
        w_q: p.data(tix::ATT_WQ),
        b_q: p.data(tix::ATT_BQ),
        w_k: p.data(tix::ATT_WK),
        b_k: p.data(tix::ATT_BK),
        w_v: p.data(tix::ATT_WV),
        b_v: p.data(tix::ATT_BV),
        w_o: p.data(tix::ATT_WO),
        b_o: p.data(tix::ATT_BO),
    }
}

pub(crate) fn forward_trace<F: Real>(
    window: &[F],
    params: &NetParams<F>,
    mode: Mode,
) -> Result<Trace<F>> {
    let cfg = &params.cfg;
    if window.len() != cfg.window_length {
        return Err(param_err!(
            "window of {} samples fed to a classifier trained for T = {}",
            window.len(),
            cfg.window_length
        ));
    }
    let t_len = cfg.window_length;
    let h = cfg.hidden_units;
    let d = cfg.attention_dim;

    let x = embed(window, cfg);
    let l1f = lstm_forward(
        params.data(tix::L1F_WX),
        params.data(tix::L1F_WH),
        params.data(tix::L1F_B),
        x.clone(),
        t_len,
        2,
        h,
    );
    let l1b = lstm_forward(
        params.data(tix::L1B_WX),
        params.data(tix::L1B_WH),
        params.data(tix::L1B_B),
        reversed_rows(&x, t_len, 2),
        t_len,
        2,
        h,
    );
    // Per-step concatenation [h_fwd(t), h_bwd(t)], 2H features per step.
    let mut y1 = vec![F::zero(); t_len * 2 * h];
    for t in 0..t_len {
        y1[t * 2 * h..t * 2 * h + h].copy_from_slice(&l1f.hidden[t * h..(t + 1) * h]);
        y1[t * 2 * h + h..(t + 1) * 2 * h]
            .copy_from_slice(&l1b.hidden[(t_len - 1 - t) * h..(t_len - t) * h]);
    }
    ensure_finite(&y1, "bilstm1")?;

    let attn = attention_forward(y1, t_len, 2 * h, d, cfg.attention_heads, &attn_weights(params));
    ensure_finite(&attn.out, "attention")?;

    let (drop1, drop2) = match mode {
        Mode::Train { dropout_seed } if cfg.dropout_p > 0.0 => {
            let mut r1 = rng_from(derive(dropout_seed, &[1]));
            let mut r2 = rng_from(derive(dropout_seed, &[2]));
            (
                Some(dropout_mask::<F>(t_len * d, cfg.dropout_p, &mut r1)),
                Some(dropout_mask::<F>(2 * h, cfg.dropout_p, &mut r2)),
            )
        }
        _ => (None, None),
    };

    let mut attended = attn.out.clone();
    if let Some(mask) = &drop1 {
        for (v, m) in attended.iter_mut().zip(mask) {
            *v = *v * *m;
        }
    }

    let l2f = lstm_forward(
        params.data(tix::L2F_WX),
        params.data(tix::L2F_WH),
        params.data(tix::L2F_B),
        attended.clone(),
        t_len,
        d,
        h,
    );
    let l2b = lstm_forward(
        params.data(tix::L2B_WX),
        params.data(tix::L2B_WH),
        params.data(tix::L2B_B),
        reversed_rows(&attended, t_len, d),
        t_len,
        d,
        h,
    );
    // Keep only the final state of each direction.
    let mut feat = vec![F::zero(); 2 * h];
    feat[..h].copy_from_slice(&l2f.hidden[(t_len - 1) * h..]);
    feat[h..].copy_from_slice(&l2b.hidden[(t_len - 1) * h..]);
    ensure_finite(&feat, "bilstm2")?;
    if let Some(mask) = &drop2 {
        for (v, m) in feat.iter_mut().zip(mask) {
            *v = *v * *m;
        }
    }

    let w = params.data(tix::DENSE_W);
    let b = params.data(tix::DENSE_B);
    let logits: Vec<F> = (0..cfg.classes)
        .map(|c| {
            b[c] + feat
                .iter()
                .enumerate()
                .map(|(j, &f)| w[c * 2 * h + j] * f)
                .sum::<F>()
        })
        .collect();
    ensure_finite(&logits, "dense")?;
    let probs = softmax(&logits);

    Ok(Trace {
        l1f,
        l1b,
        attn,
        drop1,
        l2f,
        l2b,
        drop2,
        feat,
        probs,
    })
}

/// Runs the classifier on one window and returns `[p_logistic, p_cubic]`
/// (softmax outputs, summing to 1).
pub fn forward<F: Real>(window: &[F], params: &NetParams<F>, mode: Mode) -> Result<Vec<F>> {
    Ok(forward_trace(window, params, mode)?.probs)
}

/// Backpropagates from a gradient on the logits, accumulating into `grads`.
pub(crate) fn backward<F: Real>(
    trace: &Trace<F>,
    params: &NetParams<F>,
    d_logits: &[F],
    grads: &mut Gradients<F>,
) {
    let cfg = &params.cfg;
    let t_len = cfg.window_length;
    let h = cfg.hidden_units;
    let d = cfg.attention_dim;

    // Dense head.
    let mut d_feat = vec![F::zero(); 2 * h];
    {
        let w = params.data(tix::DENSE_W);
        for (c, &dl) in d_logits.iter().enumerate() {
            grads[tix::DENSE_B].data[c] = grads[tix::DENSE_B].data[c] + dl;
            for j in 0..2 * h {
                grads[tix::DENSE_W].data[c * 2 * h + j] =
                    grads[tix::DENSE_W].data[c * 2 * h + j] + dl * trace.feat[j];
                d_feat[j] = d_feat[j] + dl * w[c * 2 * h + j];
            }
        }
    }
    if let Some(mask) = &trace.drop2 {
        for (v, m) in d_feat.iter_mut().zip(mask) {
            *v = *v * *m;
        }
    }

    // Second bidirectional layer: gradient lands on the final states only.
    let mut d_h2f = vec![F::zero(); t_len * h];
    let mut d_h2b = vec![F::zero(); t_len * h];
    d_h2f[(t_len - 1) * h..].copy_from_slice(&d_feat[..h]);
    d_h2b[(t_len - 1) * h..].copy_from_slice(&d_feat[h..]);
    let mut d_attended = vec![F::zero(); t_len * d];
    {
        let mut d_xs_f = vec![F::zero(); t_len * d];
        let mut d_xs_b = vec![F::zero(); t_len * d];
        lstm_backward_into(params, tix::L2F_WX, &trace.l2f, &d_h2f, t_len, d, h, grads, &mut d_xs_f);
        lstm_backward_into(params, tix::L2B_WX, &trace.l2b, &d_h2b, t_len, d, h, grads, &mut d_xs_b);
        for t in 0..t_len {
            for j in 0..d {
                d_attended[t * d + j] =
                    d_xs_f[t * d + j] + d_xs_b[(t_len - 1 - t) * d + j];
            }
        }
    }
    if let Some(mask) = &trace.drop1 {
        for (v, m) in d_attended.iter_mut().zip(mask) {
            *v = *v * *m;
        }
    }

    // Attention block.
    let mut d_y1 = vec![F::zero(); t_len * 2 * h];
    {
        let w = attn_weights(params);
        let (gq, tail) = grads[tix::ATT_WQ..=tix::ATT_BO].split_at_mut(1);
        let (gbq, tail) = tail.split_at_mut(1);
        let (gk, tail) = tail.split_at_mut(1);
        let (gbk, tail) = tail.split_at_mut(1);
        let (gv, tail) = tail.split_at_mut(1);
        let (gbv, tail) = tail.split_at_mut(1);
        let (go, gbo) = tail.split_at_mut(1);
        let mut g = AttnGrads {
            w_q: &mut gq[0].data,
            b_q: &mut gbq[0].data,
            w_k: &mut gk[0].data,
            b_k: &mut gbk[0].data,
            w_v: &mut gv[0].data,
            b_v: &mut gbv[0].data,
            w_o: &mut go[0].data,
            b_o: &mut gbo[0].data,
        };
        attention_backward(
            &trace.attn,
            &d_attended,
            t_len,
            2 * h,
            d,
            cfg.attention_heads,
            &w,
            &mut g,
            &mut d_y1,
        );
    }

    // First bidirectional layer; input gradients are not needed.
    let mut d_h1f = vec![F::zero(); t_len * h];
    let mut d_h1b = vec![F::zero(); t_len * h];
    for t in 0..t_len {
        d_h1f[t * h..(t + 1) * h].copy_from_slice(&d_y1[t * 2 * h..t * 2 * h + h]);
        d_h1b[(t_len - 1 - t) * h..(t_len - t) * h]
            .copy_from_slice(&d_y1[t * 2 * h + h..(t + 1) * 2 * h]);
    }
    let mut scratch = vec![F::zero(); t_len * 2];
    lstm_backward_into(params, tix::L1F_WX, &trace.l1f, &d_h1f, t_len, 2, h, grads, &mut scratch);
    let mut scratch_b = vec![F::zero(); t_len * 2];
    lstm_backward_into(params, tix::L1B_WX, &trace.l1b, &d_h1b, t_len, 2, h, grads, &mut scratch_b);
}

/// Helper tying one LSTM direction's weight triple (at `base..base+3` in
/// the tensor order) to its gradient buffers.
#[allow(clippy::too_many_arguments)]
fn lstm_backward_into<F: Real>(
    params: &NetParams<F>,
    base: usize,
    cache: &LstmCache<F>,
    d_hidden: &[F],
    t_len: usize,
    in_dim: usize,
    h_dim: usize,
    grads: &mut Gradients<F>,
    d_xs: &mut [F],
) {
    let (gwx, rest) = grads[base..base + 3].split_at_mut(1);
    let (gwh, gb) = rest.split_at_mut(1);
    lstm_backward(
        params.data(base),
        params.data(base + 1),
        cache,
        d_hidden,
        t_len,
        in_dim,
        h_dim,
        &mut gwx[0].data,
        &mut gwh[0].data,
        &mut gb[0].data,
        d_xs,
    );
}

/// Per-layer multiply-accumulate counts for one input window, following
/// the architecture's complexity formula with `N_h` read as the
/// bidirectional feature width `2 * hidden_units` and `Q = K = V` read as
/// the attention projection width.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ComplexityReport {
    /// `(N_in * N_h + N_h^2) * T` per recurrent layer.
    pub recurrent: Vec<u64>,
    /// `(Q * K) * T^2` — score matrix term.
    pub attention_scores: u64,
    /// `(Q * K * V) * T` — value aggregation term.
    pub attention_values: u64,
    /// `N_h * C` — classifier head.
    pub classifier: u64,
    pub total: u64,
}

pub fn estimate_complexity(cfg: &NetConfig) -> ComplexityReport {
    let t = cfg.window_length as u64;
    let nh = 2 * cfg.hidden_units as u64;
    let qkv = cfg.attention_dim as u64;
    let layer_inputs = [cfg.input_channels as u64, qkv];
    let recurrent: Vec<u64> = layer_inputs
        .iter()
        .map(|n_in| (n_in * nh + nh * nh) * t)
        .collect();
    let attention_scores = qkv * qkv * t * t;
    let attention_values = qkv * qkv * qkv * t;
    let classifier = nh * cfg.classes as u64;
    let total =
        recurrent.iter().sum::<u64>() + attention_scores + attention_values + classifier;
    ComplexityReport {
        recurrent,
        attention_scores,
        attention_values,
        classifier,
        total,
    }
}

impl std::fmt::Display for ComplexityReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for (i, r) in self.recurrent.iter().enumerate() {
            writeln!(f, "recurrent layer {}:   {r} MAC", i + 1)?;
        }
        writeln!(f, "attention scores:    {} MAC", self.attention_scores)?;
        writeln!(f, "attention values:    {} MAC", self.attention_values)?;
        writeln!(f, "classifier head:     {} MAC", self.classifier)?;
        write!(f, "total:               {} MAC", self.total)
    }
}
