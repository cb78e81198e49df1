//! Baseband channel models and Eb/N0 accounting.
//!
//! The received frame is `r(q) = sum_g alpha_g s(q - tau_g) + n(q)` with
//! integer sample delays, zero padding before the frame start (no
//! inter-frame interference; the misalignment experiment models frame
//! leakage separately), and white Gaussian noise of variance `N0/2` per
//! sample. Rayleigh path gains are redrawn independently for every frame
//! and held static within it.

use crate::error::{param_err, Result};
use crate::modem::ModemConfig;
use crate::real::Real;
use crate::rng::{rng_from, standard_normal};
use rand::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChannelKind {
    Awgn,
    Rayleigh2,
}

impl ChannelKind {
    pub fn name(self) -> &'static str {
        match self {
            ChannelKind::Awgn => "awgn",
            ChannelKind::Rayleigh2 => "rayleigh2",
        }
    }
}

/// One propagation path: average power gain and integer sample delay.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathSpec {
    pub avg_power_gain: f64,
    pub delay: usize,
}

/// Multipath profile. AWGN is the single-path identity profile; the
/// default Rayleigh profile has two equal half-power paths at delays
/// 0 and 2 samples, so total average received power is 1.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelConfig {
    pub kind: ChannelKind,
    pub paths: Vec<PathSpec>,
}

impl ChannelConfig {
    pub fn awgn() -> Self {
        ChannelConfig {
            kind: ChannelKind::Awgn,
            paths: vec![PathSpec {
                avg_power_gain: 1.0,
                delay: 0,
            }],
        }
    }

    pub fn rayleigh2() -> Self {
        ChannelConfig {
            kind: ChannelKind::Rayleigh2,
            paths: vec![
                PathSpec {
                    avg_power_gain: 0.5,
                    delay: 0,
                },
                PathSpec {
                    avg_power_gain: 0.5,
                    delay: 2,
                },
            ],
        }
    }

    pub fn of_kind(kind: ChannelKind) -> Self {
        match kind {
            ChannelKind::Awgn => Self::awgn(),
            ChannelKind::Rayleigh2 => Self::rayleigh2(),
        }
    }

    pub fn validate(&self, beta: usize) -> Result<()> {
        if self.paths.is_empty() {
            return Err(param_err!("channel needs at least one path"));
        }
        for p in &self.paths {
            if p.delay >= beta {
                return Err(param_err!("path delay {} >= beta {beta}", p.delay));
            }
            if p.avg_power_gain < 0.0 {
                return Err(param_err!("negative path power {}", p.avg_power_gain));
            }
        }
        Ok(())
    }
}

/// Noise level derived from Eb/N0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseParams<F> {
    /// Energy per information bit.
    pub eb: F,
    /// Noise spectral density.
    pub n0: F,
    /// Per-sample noise standard deviation, `sqrt(N0/2)`.
    pub sigma: F,
}

impl<F: Real> NoiseParams<F> {
    /// Under standardized (unit average sample power) frames the energy
    /// per bit is `beta / log2(M)`.
    pub fn from_ebn0(ebn0_db: f64, cfg: &ModemConfig) -> Result<Self> {
        if !cfg.standardize {
            return Err(param_err!(
                "Eb/N0 accounting assumes standardized frames; \
                 use from_measured_eb with a per-frame energy estimate"
            ));
        }
        let eb = cfg.beta as f64 / cfg.bits_per_symbol() as f64;
        Ok(Self::from_measured_eb(eb, ebn0_db))
    }

    /// Alternate path for raw-amplitude frames: caller supplies the
    /// measured energy per bit.
    pub fn from_measured_eb(eb: f64, ebn0_db: f64) -> Self {
        let n0 = eb / 10f64.powf(ebn0_db / 10.0);
        NoiseParams {
            eb: F::of(eb),
            n0: F::of(n0),
            sigma: F::of((n0 / 2.0).sqrt()),
        }
    }

    pub fn noiseless() -> Self {
        NoiseParams {
            eb: F::zero(),
            n0: F::zero(),
            sigma: F::zero(),
        }
    }
}

/// Draws per-frame path amplitudes. Deterministic paths (AWGN) get
/// `sqrt(avg_power_gain)`; Rayleigh paths get a Rayleigh amplitude with
/// `E[alpha^2] = avg_power_gain`.
pub fn draw_path_gains<F: Real>(cfg: &ChannelConfig, rng: &mut impl Rng) -> Vec<F> {
    cfg.paths
        .iter()
        .map(|p| match cfg.kind {
            ChannelKind::Awgn => F::of(p.avg_power_gain.sqrt()),
            ChannelKind::Rayleigh2 => {
                // alpha = sigma_r * sqrt(z1^2 + z2^2), sigma_r^2 = power/2
                let z1 = standard_normal(rng);
                let z2 = standard_normal(rng);
                F::of((p.avg_power_gain / 2.0).sqrt() * (z1 * z1 + z2 * z2).sqrt())
            }
        })
        .collect()
}

/// Passes one frame through the channel: fresh path gains, delayed taps
/// with zero padding before the frame, then AWGN.
pub fn apply_channel<F: Real>(
    frame_samples: &[F],
    cfg: &ChannelConfig,
    noise: &NoiseParams<F>,
    seed: u64,
) -> Result<Vec<F>> {
    cfg.validate(frame_samples.len().max(1))?;
    let mut rng = rng_from(seed);
    let gains: Vec<F> = draw_path_gains(cfg, &mut rng);
    let mut out = vec![F::zero(); frame_samples.len()];
    for (gain, path) in gains.iter().zip(&cfg.paths) {
        for q in path.delay..frame_samples.len() {
            out[q] = out[q] + *gain * frame_samples[q - path.delay];
        }
    }
    if noise.sigma > F::zero() {
        for v in out.iter_mut() {
            *v = *v + noise.sigma * F::of(standard_normal(&mut rng));
        }
    }
    Ok(out)
}

/// Receive-window misalignment over a stream of concatenated frames.
///
/// The receiver's window for frame `i` covers stream samples
/// `[i*beta + d, (i+1)*beta + d)`, so each window leaks `d` samples of the
/// next frame. The final frame has no successor and is dropped.
pub fn misaligned_windows<F>(stream: &[F], beta: usize, d: usize) -> Result<Vec<&[F]>> {
    if beta == 0 || stream.len() % beta != 0 {
        return Err(param_err!(
            "stream length {} is not a multiple of beta {beta}",
            stream.len()
        ));
    }
    let frames = stream.len() / beta;
    if frames < 2 {
        return Err(param_err!("misalignment needs at least 2 consecutive frames"));
    }
    if d >= beta {
        return Err(param_err!("misalignment d = {d} must be < beta = {beta}"));
    }
    Ok((0..frames - 1)
        .map(|i| &stream[i * beta + d..(i + 1) * beta + d])
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noise_params_hand_arithmetic() {
        let cfg = ModemConfig::partitioned(4, 32).unwrap();
        let np: NoiseParams<f64> = NoiseParams::from_ebn0(10.0, &cfg).unwrap();
        assert_eq!(np.eb, 64.0);
        assert!((np.n0 - 6.4).abs() < 1e-12);
        assert!((np.sigma - 3.2f64.sqrt()).abs() < 1e-12);
        assert!((np.sigma - 1.78885).abs() < 1e-4);

        let cfg = ModemConfig::new(2, 32, 512).unwrap();
        let np: NoiseParams<f64> = NoiseParams::from_ebn0(0.0, &cfg).unwrap();
        assert_eq!(np.eb, 512.0);
        assert_eq!(np.n0, 512.0);
        assert_eq!(np.sigma, 16.0);
    }

    #[test]
    fn noise_vanishes_at_high_ebn0() {
        let cfg = ModemConfig::partitioned(4, 32).unwrap();
        let np: NoiseParams<f64> = NoiseParams::from_ebn0(300.0, &cfg).unwrap();
        assert!(np.sigma < 1e-13);
    }

    #[test]
    fn raw_amplitude_mode_requires_measured_energy() {
        let mut cfg = ModemConfig::partitioned(4, 32).unwrap();
        cfg.standardize = false;
        assert!(NoiseParams::<f64>::from_ebn0(10.0, &cfg).is_err());
        let np: NoiseParams<f64> = NoiseParams::from_measured_eb(10.0, 10.0);
        assert!((np.n0 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn identity_channel_at_zero_noise() {
        let cfg = ChannelConfig::awgn();
        let s = vec![0.5, -1.25, 3.0];
        let r = apply_channel(&s, &cfg, &NoiseParams::noiseless(), 1).unwrap();
        assert_eq!(r, s);
    }

    #[test]
    fn delayed_tap_direct_evaluation() {
        let cfg = ChannelConfig {
            kind: ChannelKind::Awgn,
            paths: vec![
                PathSpec { avg_power_gain: 1.0, delay: 0 },
                PathSpec { avg_power_gain: 1.0, delay: 1 },
            ],
        };
        let r = apply_channel(&[1.0, 0.0, 0.0], &cfg, &NoiseParams::noiseless(), 0).unwrap();
        assert_eq!(r, vec![1.0, 1.0, 0.0]);
    }

    #[test]
    fn channel_is_deterministic_per_seed() {
        let cfg = ChannelConfig::rayleigh2();
        let np = NoiseParams::from_measured_eb(64.0, 8.0);
        let s = vec![1.0; 64];
        let a = apply_channel(&s, &cfg, &np, 99).unwrap();
        let b = apply_channel(&s, &cfg, &np, 99).unwrap();
        assert_eq!(a, b);
        let c = apply_channel(&s, &cfg, &np, 100).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn rayleigh_gains_match_power_moment() {
        let cfg = ChannelConfig::rayleigh2();
        let mut rng = rng_from(17);
        let n = 1_000_000;
        let mut p1 = 0.0;
        let mut total = 0.0;
        for _ in 0..n {
            let g: Vec<f64> = draw_path_gains(&cfg, &mut rng);
            p1 += g[0] * g[0];
            total += g[0] * g[0] + g[1] * g[1];
        }
        let e1 = p1 / n as f64;
        let etot = total / n as f64;
        assert!((e1 - 0.5).abs() < 0.01, "E[a1^2] = {e1}");
        // two-path default conserves average received power
        assert!((etot - 1.0).abs() < 0.02, "E[sum a^2] = {etot}");
    }

    #[test]
    fn zero_power_path_gives_zero_gain() {
        let cfg = ChannelConfig {
            kind: ChannelKind::Rayleigh2,
            paths: vec![PathSpec { avg_power_gain: 0.0, delay: 0 }],
        };
        let g: Vec<f64> = draw_path_gains(&cfg, &mut rng_from(3));
        assert_eq!(g, vec![0.0]);
    }

    #[test]
    fn noise_only_variance_matches_sigma() {
        let cfg = ChannelConfig::awgn();
        let np = NoiseParams::<f64>::from_measured_eb(2.0, 0.0); // sigma = 1
        let zeros = vec![0.0; 1_000_000];
        let r = apply_channel(&zeros, &cfg, &np, 7).unwrap();
        let var = r.iter().map(|v| v * v).sum::<f64>() / r.len() as f64;
        assert!((var - 1.0).abs() < 0.02, "noise variance {var}");
    }

    #[test]
    fn awgn_snr_accounting_holds_empirically() {
        // Unit-power input, configured per-sample SNR = 1/sigma^2.
        let cfg = ModemConfig::partitioned(4, 32).unwrap();
        let ch = ChannelConfig::awgn();
        let np: NoiseParams<f64> = NoiseParams::from_ebn0(6.0, &cfg).unwrap();
        let mut rng = rng_from(23);
        let n = 1_000_000usize;
        let s: Vec<f64> = (0..n).map(|_| if rng.gen::<bool>() { 1.0 } else { -1.0 }).collect();
        let r = apply_channel(&s, &ch, &np, 31).unwrap();
        let noise_var =
            r.iter().zip(&s).map(|(y, x)| (y - x) * (y - x)).sum::<f64>() / n as f64;
        let expected = np.sigma * np.sigma;
        assert!(
            (noise_var / expected - 1.0).abs() < 0.02,
            "measured {noise_var} vs configured {expected}"
        );
    }

    #[test]
    fn misaligned_window_index_arithmetic() {
        let stream: Vec<f64> = (1..=8).map(|v| v as f64).collect();
        // two frames of beta = 4; d = 2 leaks two samples of frame B
        let w = misaligned_windows(&stream, 4, 2).unwrap();
        assert_eq!(w.len(), 1);
        assert_eq!(w[0], &[3.0, 4.0, 5.0, 6.0]);
        // d = 0 is the aligned case
        let w0 = misaligned_windows(&stream, 4, 0).unwrap();
        assert_eq!(w0[0], &[1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn misalignment_validation() {
        let stream = vec![0.0; 8];
        assert!(misaligned_windows(&stream, 3, 0).is_err());
        assert!(misaligned_windows(&stream, 8, 0).is_err());
        assert!(misaligned_windows(&stream, 4, 4).is_err());
    }
}
