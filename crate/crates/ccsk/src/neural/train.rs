//! Offline training: dataset synthesis through the channel pipeline,
//! binary cross-entropy with full backpropagation, Adam, early stopping.
//!
//! Determinism: dataset order, initialization, shuffles and dropout masks
//! are all pure functions of the configured seeds. Batch gradients are
//! computed per fixed-size chunk and folded in chunk order, so the result
//! is bit-identical no matter how many worker threads run the chunks.

use super::{backward, forward_trace, Gradients, Mode, NetConfig, NetParams};
use crate::channel::{apply_channel, ChannelConfig, NoiseParams};
use crate::error::{param_err, Result};
use crate::modem::{frame_segments, Frame, ModemConfig, SymbolMapTable};
use crate::real::Real;
use crate::receiver::split_windows;
use crate::rng::{derive, rng_from};
use rand::Rng;
use rayon::prelude::*;

/// Examples per deterministic reduction chunk.
const GRAD_CHUNK: usize = 16;

/// Adam moment constants (conventional defaults).
const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

/// One labelled receiver window. `label` is true when the window carries
/// the Cubic information segment.
#[derive(Debug, Clone, PartialEq)]
pub struct Example<F> {
    pub window: Vec<F>,
    pub label: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<F> {
    pub examples: Vec<Example<F>>,
}

impl<F> Dataset<F> {
    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }
}

/// Training hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainingConfig {
    pub dataset_size: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub validation_fraction: f64,
    pub max_epochs: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    /// Per-example Eb/N0 is drawn uniformly from this dB range.
    pub train_snr_range_db: (f64, f64),
    pub seed: u64,
}

impl TrainingConfig {
    /// Defaults for AWGN training: SNR range [12, 14] dB.
    pub fn awgn() -> Self {
        TrainingConfig {
            dataset_size: 200_000,
            batch_size: 128,
            learning_rate: 0.001,
            validation_fraction: 0.2,
            max_epochs: 50,
            patience: 5,
            train_snr_range_db: (12.0, 14.0),
            seed: 0,
        }
    }

    /// Defaults for Rayleigh training: SNR range [14, 16] dB.
    pub fn rayleigh2() -> Self {
        TrainingConfig {
            train_snr_range_db: (14.0, 16.0),
            ..Self::awgn()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.validation_fraction) || self.validation_fraction == 0.0 {
            return Err(param_err!("validation fraction must lie in (0, 1)"));
        }
        if self.train_snr_range_db.0 > self.train_snr_range_db.1 {
            return Err(param_err!("SNR range low > high"));
        }
        if self.batch_size == 0 || self.dataset_size == 0 {
            return Err(param_err!("dataset and batch sizes must be positive"));
        }
        Ok(())
    }
}

/// Synthesizes `n` labelled windows through the full transmit/channel
/// pipeline: each example is one window cut from a complete frame that
/// passed the configured channel at an Eb/N0 drawn from the training
/// range. Labels alternate, so classes are balanced exactly.
pub fn generate_dataset<F: Real>(
    n: usize,
    modem: &ModemConfig,
    channel: &ChannelConfig,
    tr_cfg: &TrainingConfig,
    seed: u64,
) -> Result<Dataset<F>> {
    if n % 2 != 0 {
        return Err(param_err!("dataset size must be even, got {n}"));
    }
    tr_cfg.validate()?;
    let table = SymbolMapTable::identity(modem.m);
    let (lo, hi) = tr_cfg.train_snr_range_db;
    let mut examples = Vec::with_capacity(n);
    for i in 0..n {
        let ex_seed = derive(seed, &[i as u64]);
        let mut rng = rng_from(ex_seed);
        let ebn0 = lo + rng.gen::<f64>() * (hi - lo);
        let noise = NoiseParams::from_ebn0(ebn0, modem)?;
        let symbol = rng.gen_range(0..modem.m);
        let (info, cover) = frame_segments(modem, ex_seed, u64::MAX)?;
        let frame = Frame::assemble(info, cover, symbol, &table, modem)?;
        let received = apply_channel(&frame.samples, channel, &noise, derive(ex_seed, &[1]))?;
        let windows = split_windows(&received, modem.m)?;
        let label = i % 2 == 0;
        let window = if label {
            windows[frame.c - 1].to_vec()
        } else {
            let mut j = rng.gen_range(0..modem.m - 1);
            if j >= frame.c - 1 {
                j += 1;
            }
            windows[j].to_vec()
        };
        examples.push(Example { window, label });
    }
    Ok(Dataset { examples })
}

fn clamp_prob(p: f64) -> f64 {
    p.clamp(1e-12, 1.0 - 1e-12)
}

struct ChunkResult<F> {
    loss_sum: f64,
    correct: usize,
    grads: Gradients<F>,
}

/// Mean binary cross-entropy over the batch plus gradients for every
/// parameter, via backpropagation through time and attention. Dropout
/// masks derive from `seed` and the example's position in the batch.
pub fn loss_and_grad<F: Real>(
    batch: &[Example<F>],
    params: &NetParams<F>,
    seed: u64,
) -> Result<(f64, Gradients<F>)> {
    let (loss, _, grads) = batch_pass(batch, params, Some(seed))?;
    Ok((loss, grads))
}

/// Shared batched pass. With `train_seed` set, dropout is active and
/// gradients are produced; otherwise this is a pure evaluation.
fn batch_pass<F: Real>(
    batch: &[Example<F>],
    params: &NetParams<F>,
    train_seed: Option<u64>,
) -> Result<(f64, f64, Gradients<F>)> {
    if batch.is_empty() {
        return Err(param_err!("empty batch"));
    }
    let scale = 1.0 / batch.len() as f64;
    let chunks: Vec<(usize, &[Example<F>])> = batch
        .chunks(GRAD_CHUNK)
        .enumerate()
        .map(|(ci, ch)| (ci * GRAD_CHUNK, ch))
        .collect();
    let results: Vec<Result<ChunkResult<F>>> = chunks
        .par_iter()
        .map(|&(base, chunk)| {
            let mut grads = params.zero_gradients();
            let mut loss_sum = 0.0;
            let mut correct = 0usize;
            for (off, ex) in chunk.iter().enumerate() {
                let mode = match train_seed {
                    Some(s) => Mode::Train {
                        dropout_seed: derive(s, &[(base + off) as u64]),
                    },
                    None => Mode::Infer,
                };
                let trace = forward_trace(&ex.window, params, mode)?;
                let target = usize::from(ex.label);
                let p_target = clamp_prob(trace.probs[target].to_f64());
                loss_sum += -p_target.ln();
                let predicted = usize::from(trace.probs[1] > trace.probs[0]);
                correct += usize::from(predicted == target);
                if train_seed.is_some() {
                    let d_logits: Vec<F> = (0..2)
                        .map(|c| {
                            let y = if c == target { 1.0 } else { 0.0 };
                            F::of((trace.probs[c].to_f64() - y) * scale)
                        })
                        .collect();
                    backward(&trace, params, &d_logits, &mut grads);
                }
            }
            Ok(ChunkResult {
                loss_sum,
                correct,
                grads,
            })
        })
        .collect();

    let mut total = params.zero_gradients();
    let mut loss_sum = 0.0;
    let mut correct = 0usize;
    for r in results {
        let r = r?;
        loss_sum += r.loss_sum;
        correct += r.correct;
        for (t, c) in total.iter_mut().zip(&r.grads) {
            for (a, b) in t.data.iter_mut().zip(&c.data) {
                *a = *a + *b;
            }
        }
    }
    let acc = correct as f64 / batch.len() as f64;
    Ok((loss_sum * scale, acc, total))
}

/// Mean loss and accuracy in inference mode (no dropout).
pub fn evaluate<F: Real>(examples: &[Example<F>], params: &NetParams<F>) -> Result<(f64, f64)> {
    let (loss, acc, _) = batch_pass(examples, params, None)?;
    Ok((loss, acc))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    pub val_loss: f64,
    pub val_acc: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    EarlyStopped,
    MaxEpochs,
    /// Training loss went non-finite; best parameters so far are returned
    /// together with the history up to the failing epoch.
    Diverged,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<F> {
    /// Parameters of the best validation epoch seen.
    pub params: NetParams<F>,
    pub history: Vec<EpochStats>,
    pub stop: StopReason,
}

struct Adam<F> {
    m: Vec<Vec<F>>,
    v: Vec<Vec<F>>,
    step: usize,
    lr: f64,
}

impl<F: Real> Adam<F> {
    fn new(params: &NetParams<F>, lr: f64) -> Self {
        let shapes: Vec<Vec<F>> = params
            .tensors
            .iter()
            .map(|t| vec![F::zero(); t.data.len()])
            .collect();
        Adam {
            m: shapes.clone(),
            v: shapes,
            step: 0,
            lr,
        }
    }

    fn update(&mut self, params: &mut NetParams<F>, grads: &Gradients<F>) {
        self.step += 1;
        let b1 = F::of(ADAM_BETA1);
        let b2 = F::of(ADAM_BETA2);
        let eps = F::of(ADAM_EPS);
        let bc1 = F::of(1.0 - ADAM_BETA1.powi(self.step as i32));
        let bc2 = F::of(1.0 - ADAM_BETA2.powi(self.step as i32));
        let lr = F::of(self.lr);
        for (ti, tensor) in params.tensors.iter_mut().enumerate() {
            let m = &mut self.m[ti];
            let v = &mut self.v[ti];
            let g = &grads[ti].data;
            for j in 0..tensor.data.len() {
                m[j] = b1 * m[j] + (F::one() - b1) * g[j];
                v[j] = b2 * v[j] + (F::one() - b2) * g[j] * g[j];
                let m_hat = m[j] / bc1;
                let v_hat = v[j] / bc2;
                tensor.data[j] = tensor.data[j] - lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
    }
}

fn shuffled_indices(n: usize, rng: &mut impl Rng) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.gen_range(0..=i);
        idx.swap(i, j);
    }
    idx
}

/// Trains the classifier with Adam and early stopping on validation loss.
/// Returns the parameters of the best validation epoch, the per-epoch
/// history and the stop reason. Fully deterministic for a fixed seed.
pub fn train<F: Real>(
    data: &Dataset<F>,
    net_cfg: NetConfig,
    tr_cfg: &TrainingConfig,
) -> Result<TrainOutcome<F>> {
    tr_cfg.validate()?;
    net_cfg.validate()?;
    if data.len() < tr_cfg.batch_size {
        return Err(param_err!(
            "dataset of {} examples is smaller than one batch of {}",
            data.len(),
            tr_cfg.batch_size
        ));
    }
    let mut rng = rng_from(derive(tr_cfg.seed, &[0xA11]));
    let order = shuffled_indices(data.len(), &mut rng);
    let n_val = ((data.len() as f64) * tr_cfg.validation_fraction).round() as usize;
    let n_val = n_val.clamp(1, data.len() - tr_cfg.batch_size.min(data.len() - 1));
    let val_set: Vec<Example<F>> = order[..n_val]
        .iter()
        .map(|&i| data.examples[i].clone())
        .collect();
    let train_set: Vec<Example<F>> = order[n_val..]
        .iter()
        .map(|&i| data.examples[i].clone())
        .collect();

    let mut params = NetParams::init(net_cfg, derive(tr_cfg.seed, &[0x1417]))?;
    let mut adam = Adam::new(&params, tr_cfg.learning_rate);
    let mut best = params.clone();
    let mut best_val = f64::INFINITY;
    let mut stale_epochs = 0usize;
    let mut history = Vec::new();
    let mut stop = StopReason::MaxEpochs;

    'epochs: for epoch in 0..tr_cfg.max_epochs {
        let order = shuffled_indices(train_set.len(), &mut rng);
        let mut loss_sum = 0.0;
        let mut acc_sum = 0.0;
        let mut batches = 0usize;
        for (bi, batch_idx) in order.chunks(tr_cfg.batch_size).enumerate() {
            let batch: Vec<Example<F>> = batch_idx
                .iter()
                .map(|&i| train_set[i].clone())
                .collect();
            let batch_seed = derive(tr_cfg.seed, &[epoch as u64, bi as u64]);
            let (loss, acc, grads) = batch_pass(&batch, &params, Some(batch_seed))?;
            if !loss.is_finite() {
                stop = StopReason::Diverged;
                break 'epochs;
            }
            adam.update(&mut params, &grads);
            loss_sum += loss;
            acc_sum += acc;
            batches += 1;
        }
        let (val_loss, val_acc) = evaluate(&val_set, &params)?;
        history.push(EpochStats {
            epoch,
            train_loss: loss_sum / batches as f64,
            train_acc: acc_sum / batches as f64,
            val_loss,
            val_acc,
        });
        if val_loss < best_val {
            best_val = val_loss;
            best = params.clone();
            stale_epochs = 0;
        } else {
            stale_epochs += 1;
            if stale_epochs >= tr_cfg.patience {
                stop = StopReason::EarlyStopped;
                break;
            }
        }
    }

    Ok(TrainOutcome {
        params: best,
        history,
        stop,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chaos::{generate_segment, standardize_segment, MapKind, StandardizationConstants};

    fn tiny_cfg(t: usize) -> NetConfig {
        NetConfig::with_window(t).with_hidden(4).with_heads(2).with_dropout(0.0)
    }

    /// Noiseless standardized windows: exactly separable classes.
    pub(crate) fn separable_dataset(n: usize, t: usize, seed: u64) -> Dataset<f64> {
        let examples = (0..n)
            .map(|i| {
                let label = i % 2 == 0;
                let kind = if label { MapKind::Cubic } else { MapKind::Logistic };
                let seg = generate_segment::<f64>(kind, t, derive(seed, &[i as u64]), 100).unwrap();
                let seg =
                    standardize_segment(&seg, &StandardizationConstants::for_map(kind)).unwrap();
                Example {
                    window: seg.samples,
                    label,
                }
            })
            .collect();
        Dataset { examples }
    }

    #[test]
    fn dataset_is_balanced_and_in_snr_range() {
        let modem = ModemConfig::partitioned(4, 8).unwrap();
        let channel = ChannelConfig::awgn();
        let tr = TrainingConfig::awgn();
        let data: Dataset<f64> = generate_dataset(200, &modem, &channel, &tr, 42).unwrap();
        assert_eq!(data.len(), 200);
        let ones = data.examples.iter().filter(|e| e.label).count();
        assert_eq!(ones, 100);
        assert!(data.examples.iter().all(|e| e.window.len() == 8));
    }

    #[test]
    fn dataset_snr_draws_are_roughly_uniform() {
        // Chi-square sanity over 10 bins of the per-example SNR draw.
        let (lo, hi) = (12.0, 14.0);
        let n = 100_000usize;
        let mut bins = [0usize; 10];
        for i in 0..n {
            let mut rng = rng_from(derive(777, &[i as u64]));
            let ebn0: f64 = lo + rng.gen::<f64>() * (hi - lo);
            let b = (((ebn0 - lo) / (hi - lo)) * 10.0) as usize;
            bins[b.min(9)] += 1;
        }
        let expect = n as f64 / 10.0;
        let chi2: f64 = bins.iter().map(|&o| (o as f64 - expect).powi(2) / expect).sum();
        // 99.9th percentile of chi2 with 9 dof is 27.9
        assert!(chi2 < 27.9, "chi2 = {chi2}, bins {bins:?}");
    }

    #[test]
    fn dataset_generation_is_deterministic() {
        let modem = ModemConfig::partitioned(2, 4).unwrap();
        let channel = ChannelConfig::rayleigh2();
        let tr = TrainingConfig::rayleigh2();
        let a: Dataset<f64> = generate_dataset(4, &modem, &channel, &tr, 7).unwrap();
        let b: Dataset<f64> = generate_dataset(4, &modem, &channel, &tr, 7).unwrap();
        assert_eq!(a, b);
        assert!(generate_dataset::<f64>(3, &modem, &channel, &tr, 7).is_err());
    }

    #[test]
    fn perfect_predictions_have_negligible_loss() {
        // Loss at clamped certainty.
        assert!(-clamp_prob(1.0).ln() <= 1e-11);
        assert!((-clamp_prob(0.5).ln() - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn indifferent_network_loss_is_ln2() {
        let params = NetParams::<f64>::zeros(tiny_cfg(8)).unwrap();
        let data = separable_dataset(32, 8, 1);
        let (loss, grads) = loss_and_grad(&data.examples, &params, 3).unwrap();
        assert!((loss - std::f64::consts::LN_2).abs() < 1e-9);
        assert_eq!(grads.len(), params.tensors.len());
        for (g, p) in grads.iter().zip(&params.tensors) {
            assert_eq!(g.dims, p.dims);
        }
    }

    #[test]
    fn gradients_identical_across_chunk_parallelism() {
        let params = NetParams::<f64>::init(tiny_cfg(8), 11).unwrap();
        let data = separable_dataset(40, 8, 2);
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let (l1, g1) = pool.install(|| loss_and_grad(&data.examples, &params, 5)).unwrap();
        let pool4 = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let (l4, g4) = pool4.install(|| loss_and_grad(&data.examples, &params, 5)).unwrap();
        assert_eq!(l1, l4);
        assert_eq!(g1, g4);
    }

    #[test]
    fn training_learns_the_separable_task_and_replays() {
        let data = separable_dataset(512, 12, 33);
        let mut tr = TrainingConfig::awgn();
        tr.dataset_size = data.len();
        tr.batch_size = 64;
        tr.learning_rate = 0.003;
        tr.max_epochs = 12;
        tr.patience = 12;
        tr.seed = 9;
        let cfg = NetConfig::with_window(12).with_hidden(6).with_heads(2).with_dropout(0.0);
        let out = train(&data, cfg, &tr).unwrap();
        let (_, acc) = evaluate(&data.examples, &out.params).unwrap();
        assert!(acc >= 0.97, "accuracy {acc}");

        let again = train(&data, cfg, &tr).unwrap();
        assert_eq!(out.params, again.params);
        assert_eq!(out.history, again.history);

        // best-checkpoint contract: returned params beat every later epoch
        let best_epoch = out
            .history
            .iter()
            .min_by(|a, b| a.val_loss.total_cmp(&b.val_loss))
            .unwrap();
        let (val_loss, _) = {
            let mut rng = rng_from(derive(tr.seed, &[0xA11]));
            let order = shuffled_indices(data.len(), &mut rng);
            let n_val = ((data.len() as f64) * tr.validation_fraction).round() as usize;
            let val: Vec<Example<f64>> =
                order[..n_val].iter().map(|&i| data.examples[i].clone()).collect();
            evaluate(&val, &out.params).unwrap()
        };
        assert!((val_loss - best_epoch.val_loss).abs() < 1e-12);
        for later in out.history.iter().filter(|s| s.epoch > best_epoch.epoch) {
            assert!(later.val_loss >= best_epoch.val_loss);
        }
    }

    #[test]
    fn training_loss_decreases_on_average_early_on() {
        let data = separable_dataset(256, 10, 44);
        let mut tr = TrainingConfig::awgn();
        tr.batch_size = 32;
        tr.max_epochs = 3;
        tr.patience = 3;
        tr.seed = 21;
        let out = train(&data, tiny_cfg(10), &tr).unwrap();
        assert!(out.history.len() >= 3);
        assert!(out.history[2].train_loss <= out.history[0].train_loss + 1e-9);
    }

    #[test]
    fn train_rejects_undersized_datasets() {
        let data = separable_dataset(16, 8, 3);
        let mut tr = TrainingConfig::awgn();
        tr.batch_size = 32;
        assert!(train(&data, tiny_cfg(8), &tr).is_err());
    }
}
