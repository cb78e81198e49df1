//! Classical DCSK baseline for BER comparisons.
//!
//! Each frame carries a chaotic reference half (standardized Logistic
//! chaos, L samples) followed by a data half that is the reference
//! multiplied by the bit's sign. The receiver correlates the two halves
//! and takes the sign, so no synchronization or training is involved.

use crate::chaos::{generate_segment, standardize_segment, MapKind, StandardizationConstants};
use crate::error::{param_err, Result};
use crate::real::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DcskConfig {
    /// Reference length L; a frame spans 2L samples.
    pub spreading_factor: usize,
}

impl DcskConfig {
    pub fn new(spreading_factor: usize) -> Result<Self> {
        if spreading_factor < 2 {
            return Err(param_err!("spreading factor must be >= 2"));
        }
        Ok(DcskConfig { spreading_factor })
    }

    pub fn frame_len(&self) -> usize {
        2 * self.spreading_factor
    }

    /// Energy per bit under unit-power chips: both halves carry the bit.
    pub fn energy_per_bit(&self) -> f64 {
        self.frame_len() as f64
    }
}

/// Builds one DCSK frame for `bit`.
pub fn dcsk_frame<F: Real>(bit: bool, cfg: &DcskConfig, seed: u64) -> Result<Vec<F>> {
    let l = cfg.spreading_factor;
    let reference = generate_segment::<F>(MapKind::Logistic, l, seed, 100)?;
    let reference = standardize_segment(
        &reference,
        &StandardizationConstants::for_map(MapKind::Logistic),
    )?;
    let sign = if bit { F::one() } else { -F::one() };
    let mut frame = Vec::with_capacity(2 * l);
    frame.extend_from_slice(&reference.samples);
    frame.extend(reference.samples.iter().map(|&v| v * sign));
    Ok(frame)
}

/// Correlates the two halves of a received frame and decides the bit.
pub fn dcsk_decide<F: Real>(received: &[F], cfg: &DcskConfig) -> Result<bool> {
    let l = cfg.spreading_factor;
    if received.len() != 2 * l {
        return Err(param_err!(
            "received frame has {} samples, expected 2L = {}",
            received.len(),
            2 * l
        ));
    }
    let mut corr = F::zero();
    for q in 0..l {
        corr = corr + received[q] * received[l + q];
    }
    Ok(corr >= F::zero())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{apply_channel, ChannelConfig, NoiseParams};

    #[test]
    fn noiseless_round_trip_is_exact() {
        let cfg = DcskConfig::new(32).unwrap();
        for (i, bit) in [true, false, true, true, false].into_iter().enumerate() {
            let frame: Vec<f64> = dcsk_frame(bit, &cfg, 100 + i as u64).unwrap();
            assert_eq!(frame.len(), 64);
            assert_eq!(dcsk_decide(&frame, &cfg).unwrap(), bit);
        }
    }

    #[test]
    fn correlation_survives_mild_awgn() {
        let cfg = DcskConfig::new(64).unwrap();
        let chan = ChannelConfig::awgn();
        let noise = NoiseParams::from_measured_eb(cfg.energy_per_bit(), 15.0);
        let mut errors = 0;
        let n = 500;
        for i in 0..n {
            let bit = i % 2 == 0;
            let frame: Vec<f64> = dcsk_frame(bit, &cfg, i as u64).unwrap();
            let r = apply_channel(&frame, &chan, &noise, 9000 + i as u64).unwrap();
            if dcsk_decide(&r, &cfg).unwrap() != bit {
                errors += 1;
            }
        }
        assert!(errors < 5, "{errors} errors at 15 dB");
    }
}
