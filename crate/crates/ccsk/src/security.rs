//! Information leakage and the eavesdropper experiment.
//!
//! The legitimate receiver trains its classifier offline with ground-truth
//! labels. An eavesdropper who knows the frame timing, the geometry
//! (M, k, beta) and the network architecture — but holds neither labels
//! nor the position-mapping key — must label her captured windows with her
//! own bootstrap decisions before she can train. That label noise is the
//! source of the security gap measured here.
//!
//! Caveat, stated plainly: an eavesdropper who additionally knows *which
//! two chaotic maps* are in use and their public standardization constants
//! can run the map-residual detector with no training at all and defeat
//! the scheme. The experiment models an eavesdropper without map
//! knowledge.

use crate::channel::{apply_channel, ChannelConfig, NoiseParams};
use crate::error::{param_err, Result};
use crate::modem::{frame_segments, Frame, ModemConfig, SymbolMapTable};
use crate::neural::{train, Dataset, Example, NetConfig, NetParams, TrainingConfig};
use crate::real::Real;
use crate::receiver::{demodulate_frame, split_windows, symbol_bit_errors, Detector};
use crate::rng::{derive, rng_from};
use rand::Rng;
use rayon::prelude::*;

/// Information leakage rate `1 - Hb(pe)` in bits per bit: 1 for a perfect
/// eavesdropper channel, 0 at chance level, symmetric around pe = 0.5.
pub fn leakage_rate(pe: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&pe) {
        return Err(param_err!("pe must lie in [0, 1], got {pe}"));
    }
    let plog = |p: f64| if p == 0.0 { 0.0 } else { p * p.log2() };
    Ok(1.0 + plog(pe) + plog(1.0 - pe))
}

/// Where the eavesdropper's training labels come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelSource {
    /// She labels captured windows with her own bootstrap decisions.
    SelfEstimated,
    /// Control arm: ground-truth labels, as if she were legitimate.
    Genie,
}

/// The detector the eavesdropper uses for her first round of labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Bootstrap {
    /// Her own randomly initialized network (default reading).
    UntrainedNet,
    /// Uniformly random position guesses; pure 50% label noise.
    RandomGuess,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EavesdropperConfig {
    pub label_source: LabelSource,
    pub bootstrap: Bootstrap,
    /// Self-training iterations: round r >= 1 relabels the captured data
    /// with the round r-1 network and retrains from a fresh init.
    pub rounds: usize,
}

impl Default for EavesdropperConfig {
    fn default() -> Self {
        EavesdropperConfig {
            label_source: LabelSource::SelfEstimated,
            bootstrap: Bootstrap::UntrainedNet,
            rounds: 1,
        }
    }
}

/// One Eb/N0 point of the security sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LeakagePoint {
    pub ebn0_db: f64,
    pub symbols: u64,
    pub legit_symbol_errors: u64,
    pub legit_bit_errors: u64,
    pub eve_symbol_errors: u64,
    pub eve_bit_errors: u64,
    pub legit_ser: f64,
    pub eve_ser: f64,
    pub legit_ber: f64,
    pub eve_ber: f64,
    pub legit_leakage: f64,
    pub eve_leakage: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SecurityReport {
    pub points: Vec<LeakagePoint>,
}

/// Captures `n/2` frames through the eavesdropper's channel and labels
/// two windows per frame (the bootstrap pick as 1, another as 0).
fn capture_and_label<F: Real>(
    n: usize,
    modem: &ModemConfig,
    channel: &ChannelConfig,
    tr_cfg: &TrainingConfig,
    labeler: &mut dyn FnMut(&[&[F]], &mut rand_chacha::ChaCha12Rng) -> Result<usize>,
    genie: bool,
    seed: u64,
) -> Result<Dataset<F>> {
    let table = SymbolMapTable::identity(modem.m);
    let (lo, hi) = tr_cfg.train_snr_range_db;
    let mut examples = Vec::with_capacity(n);
    for i in 0..(n / 2) {
        let fseed = derive(seed, &[i as u64]);
        let mut rng = rng_from(fseed);
        let ebn0 = lo + rng.gen::<f64>() * (hi - lo);
        let noise = NoiseParams::from_ebn0(ebn0, modem)?;
        let symbol = rng.gen_range(0..modem.m);
        let (info, cover) = frame_segments(modem, fseed, u64::MAX)?;
        let frame = Frame::assemble(info, cover, symbol, &table, modem)?;
        let received = apply_channel(&frame.samples, channel, &noise, derive(fseed, &[1]))?;
        let windows = split_windows(&received, modem.m)?;
        let c_hat = if genie {
            frame.c - 1
        } else {
            labeler(&windows, &mut rng)?
        };
        examples.push(Example {
            window: windows[c_hat].to_vec(),
            label: true,
        });
        let mut j = rng.gen_range(0..modem.m - 1);
        if j >= c_hat {
            j += 1;
        }
        examples.push(Example {
            window: windows[j].to_vec(),
            label: false,
        });
    }
    Ok(Dataset { examples })
}

fn argmax_score<F: Real>(windows: &[&[F]], det: &Detector<F>) -> Result<usize> {
    let scores: Vec<F> = windows.iter().map(|w| det.score(w)).collect::<Result<_>>()?;
    crate::receiver::decide_symbol(&scores)
}

/// Runs the full eavesdropper experiment: trains the legitimate arm on
/// genie labels and the eavesdropper arm on her own labels, then sweeps
/// Eb/N0 and reports BER and leakage for both.
#[allow(clippy::too_many_arguments)]
pub fn simulate_eavesdropper<F: Real>(
    cfg: &EavesdropperConfig,
    modem: &ModemConfig,
    channel: &ChannelConfig,
    net_cfg: NetConfig,
    tr_cfg: &TrainingConfig,
    ebn0_grid: &[f64],
    symbols_per_point: usize,
    seed: u64,
) -> Result<SecurityReport> {
    if net_cfg.window_length != modem.window_len() {
        return Err(param_err!(
            "classifier window {} does not match beta/M = {}",
            net_cfg.window_length,
            modem.window_len()
        ));
    }
    let table = SymbolMapTable::identity(modem.m);

    // Legitimate arm: genie labels over its own channel draws.
    let legit_data = crate::neural::generate_dataset::<F>(
        tr_cfg.dataset_size,
        modem,
        channel,
        tr_cfg,
        derive(seed, &[1]),
    )?;
    let mut legit_tr = *tr_cfg;
    legit_tr.seed = derive(seed, &[2]);
    let legit = train(&legit_data, net_cfg, &legit_tr)?.params;

    // Eavesdropper arm.
    let genie = cfg.label_source == LabelSource::Genie;
    let bootstrap_params = NetParams::<F>::init(net_cfg, derive(seed, &[3]))?;
    let mut current: Option<NetParams<F>> = None;
    let rounds = cfg.rounds.max(1);
    for round in 0..rounds {
        let round_seed = derive(seed, &[4, round as u64]);
        let label_det: Option<Detector<F>> = match (&current, cfg.bootstrap) {
            (Some(p), _) => Some(Detector::Neural(p.clone())),
            (None, Bootstrap::UntrainedNet) => Some(Detector::Neural(bootstrap_params.clone())),
            (None, Bootstrap::RandomGuess) => None,
        };
        let mut labeler = |windows: &[&[F]], rng: &mut rand_chacha::ChaCha12Rng| match &label_det
        {
            Some(det) => argmax_score(windows, det),
            None => Ok(rng.gen_range(0..windows.len())),
        };
        let eve_data = capture_and_label(
            tr_cfg.dataset_size,
            modem,
            channel,
            tr_cfg,
            &mut labeler,
            genie,
            round_seed,
        )?;
        let mut eve_tr = *tr_cfg;
        eve_tr.seed = derive(seed, &[5, round as u64]);
        current = Some(train(&eve_data, net_cfg, &eve_tr)?.params);
        if genie {
            break;
        }
    }
    let eve = current.expect("at least one round");

    // Held-out evaluation: both arms observe the same transmissions
    // through independent channel realizations.
    let legit_det = Detector::Neural(legit);
    let eve_det = Detector::Neural(eve);
    let bits_per = modem.bits_per_symbol() as u64;
    let mut points = Vec::with_capacity(ebn0_grid.len());
    for (pi, &ebn0) in ebn0_grid.iter().enumerate() {
        let noise = NoiseParams::from_ebn0(ebn0, modem)?;
        let counts: Vec<(u64, u64, u64, u64)> = (0..symbols_per_point as u64)
            .collect::<Vec<_>>()
            .par_chunks(256)
            .map(|chunk| {
                let mut acc = (0u64, 0u64, 0u64, 0u64);
                for &i in chunk {
                    let fseed = derive(seed, &[6, pi as u64, i]);
                    let mut rng = rng_from(fseed);
                    let symbol = rng.gen_range(0..modem.m);
                    let (info, cover) = frame_segments(modem, fseed, u64::MAX).unwrap();
                    let frame = Frame::assemble(info, cover, symbol, &table, modem).unwrap();
                    let r_legit =
                        apply_channel(&frame.samples, channel, &noise, derive(fseed, &[1]))
                            .unwrap();
                    let r_eve =
                        apply_channel(&frame.samples, channel, &noise, derive(fseed, &[2]))
                            .unwrap();
                    let d_legit = demodulate_frame(&r_legit, &legit_det, modem, &table);
                    let d_eve = demodulate_frame(&r_eve, &eve_det, modem, &table);
                    let (se_l, be_l) = symbol_bit_errors(symbol, &d_legit, modem);
                    let (se_e, be_e) = symbol_bit_errors(symbol, &d_eve, modem);
                    acc.0 += se_l;
                    acc.1 += be_l;
                    acc.2 += se_e;
                    acc.3 += be_e;
                }
                acc
            })
            .collect();
        let mut total = (0u64, 0u64, 0u64, 0u64);
        for c in counts {
            total.0 += c.0;
            total.1 += c.1;
            total.2 += c.2;
            total.3 += c.3;
        }
        let symbols = symbols_per_point as u64;
        let legit_ber = total.1 as f64 / (symbols * bits_per) as f64;
        let eve_ber = total.3 as f64 / (symbols * bits_per) as f64;
        points.push(LeakagePoint {
            ebn0_db: ebn0,
            symbols,
            legit_symbol_errors: total.0,
            legit_bit_errors: total.1,
            eve_symbol_errors: total.2,
            eve_bit_errors: total.3,
            legit_ser: total.0 as f64 / symbols as f64,
            eve_ser: total.2 as f64 / symbols as f64,
            legit_ber,
            eve_ber,
            legit_leakage: leakage_rate(legit_ber)?,
            eve_leakage: leakage_rate(eve_ber)?,
        });
    }
    Ok(SecurityReport { points })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn leakage_closed_form_values() {
        assert_eq!(leakage_rate(0.0).unwrap(), 1.0);
        assert_eq!(leakage_rate(1.0).unwrap(), 1.0);
        assert!(leakage_rate(0.5).unwrap().abs() < 1e-15);
        assert!((leakage_rate(0.11).unwrap() - 0.50008).abs() < 1e-4);
        assert!(leakage_rate(-0.1).is_err());
        assert!(leakage_rate(1.1).is_err());
    }

    #[test]
    fn leakage_is_symmetric() {
        for i in 0..=10 {
            let p = i as f64 / 10.0;
            let a = leakage_rate(p).unwrap();
            let b = leakage_rate(1.0 - p).unwrap();
            assert!((a - b).abs() < 1e-12, "p = {p}");
        }
    }

    #[test]
    fn leakage_matches_independent_entropy_route() {
        // Cross-check against 1 - Hb(p) computed through natural logs.
        for i in 0..=100 {
            let p = i as f64 / 100.0;
            let hb = match p {
                0.0 | 1.0 => 0.0,
                _ => {
                    -(p * p.ln() + (1.0 - p) * (1.0 - p).ln()) / std::f64::consts::LN_2
                }
            };
            let expect = 1.0 - hb;
            assert!(
                (leakage_rate(p).unwrap() - expect).abs() < 1e-12,
                "p = {p}"
            );
        }
    }

    #[test]
    fn random_bootstrap_labels_carry_no_signal() {
        // With uniformly random position guesses at M = 2, about half of
        // the eavesdropper's "information" labels are wrong.
        let modem = ModemConfig::partitioned(2, 8).unwrap();
        let channel = ChannelConfig::awgn();
        let mut tr = TrainingConfig::awgn();
        tr.dataset_size = 2000;
        let mut labeler = |_windows: &[&[f64]], rng: &mut rand_chacha::ChaCha12Rng| {
            Ok(rng.gen_range(0..2))
        };
        let data =
            capture_and_label::<f64>(2000, &modem, &channel, &tr, &mut labeler, false, 31)
                .unwrap();
        let ones = data.examples.iter().filter(|e| e.label).count();
        assert_eq!(ones, 1000);

        // Replay the capture rng to recover the true position per frame
        // and count how often the random guess matched it.
        let table = SymbolMapTable::identity(2);
        let mut agree = 0usize;
        for i in 0..1000u64 {
            let fseed = derive(31, &[i]);
            let mut rng = rng_from(fseed);
            let _ebn0: f64 = rng.gen();
            let symbol = rng.gen_range(0..modem.m);
            let c_hat: usize = rng.gen_range(0..2);
            if c_hat == table.position_of(symbol).unwrap() - 1 {
                agree += 1;
            }
        }
        let accuracy = agree as f64 / 1000.0;
        assert!((accuracy - 0.5).abs() < 0.05, "label accuracy {accuracy}");

        let data2 =
            capture_and_label::<f64>(2000, &modem, &channel, &tr, &mut labeler, false, 31)
                .unwrap();
        assert_eq!(data, data2);
    }
}
