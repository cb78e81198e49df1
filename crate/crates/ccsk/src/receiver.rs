//! Receiver: window splitting, per-window scoring, argmax decisions.
//!
//! Each of the M windows is scored independently by a binary classifier
//! (Cubic information vs Logistic cover); the score vector is *not*
//! jointly normalized. Two detectors share this wiring:
//!
//! - [`Detector::Neural`] — the trained window classifier;
//! - [`Detector::Residual`] — a classical map-consistency test that
//!   de-standardizes the window under each hypothesis and measures the
//!   one-step prediction residual of the corresponding map. It is exact
//!   at zero noise, which makes it the end-to-end oracle for the
//!   pipeline, and it needs no training.

use crate::chaos::{step_unchecked, MapKind, StandardizationConstants};
use crate::error::{param_err, Error, Result};
use crate::modem::{gray_decode, ModemConfig, SymbolMapTable};
use crate::neural::{forward, Mode, NetParams};
use crate::real::Real;

/// Splits a received frame into M equal windows.
pub fn split_windows<F>(r: &[F], m: usize) -> Result<Vec<&[F]>> {
    if m == 0 || r.len() % m != 0 {
        return Err(param_err!(
            "frame of {} samples cannot be split into {m} equal windows",
            r.len()
        ));
    }
    Ok(r.chunks(r.len() / m).collect())
}

/// Map-consistency detector backed by the shared standardization
/// constants. An eavesdropper who knows both maps *and* these constants
/// could run it too; the security experiment models an eavesdropper
/// without that knowledge.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualDetector<F> {
    pub cubic: StandardizationConstants<F>,
    pub logistic: StandardizationConstants<F>,
}

impl<F: Real> Default for ResidualDetector<F> {
    fn default() -> Self {
        ResidualDetector {
            cubic: StandardizationConstants::for_map(MapKind::Cubic),
            logistic: StandardizationConstants::for_map(MapKind::Logistic),
        }
    }
}

impl<F: Real> ResidualDetector<F> {
    /// Mean squared one-step prediction residual of `kind` over the
    /// de-standardized window when predictions run in the map's natural
    /// coordinates; inputs pushed out of the domain by noise are clamped
    /// to the interval boundary before stepping.
    fn residual(&self, window: &[F], kind: MapKind) -> F {
        let consts = match kind {
            MapKind::Cubic => &self.cubic,
            MapKind::Logistic => &self.logistic,
        };
        let (lo, hi) = kind.interval();
        let (lo, hi) = (F::of(lo), F::of(hi));
        let inv_len = F::one() / F::of_usize(window.len());
        let mut acc = F::zero();
        let mut u_prev = consts.invert(window[0]);
        for &w in &window[1..] {
            let u = consts.invert(w);
            let pred = step_unchecked(kind, u_prev.max(lo).min(hi));
            let e = u - pred;
            acc = acc + e * e;
            u_prev = u;
        }
        acc * inv_len
    }

    /// Score in [0, 1], near 1 when the Cubic hypothesis fits.
    pub fn score(&self, window: &[F]) -> Result<F> {
        if window.len() < 2 {
            return Err(param_err!("residual scoring needs at least 2 samples"));
        }
        let rc = self.residual(window, MapKind::Cubic);
        let rl = self.residual(window, MapKind::Logistic);
        let denom = rl + rc;
        if denom == F::zero() {
            return Ok(F::of(0.5));
        }
        Ok(rl / denom)
    }
}

/// Pluggable window scorer.
#[derive(Debug, Clone)]
pub enum Detector<F> {
    Residual(ResidualDetector<F>),
    Neural(NetParams<F>),
}

impl<F: Real> Detector<F> {
    pub fn residual() -> Self {
        Detector::Residual(ResidualDetector::default())
    }

    pub fn name(&self) -> &'static str {
        match self {
            Detector::Residual(_) => "residual",
            Detector::Neural(_) => "nn",
        }
    }

    /// Probability-like score that the window carries the information
    /// segment. Deterministic given parameters and input.
    pub fn score(&self, window: &[F]) -> Result<F> {
        match self {
            Detector::Residual(d) => d.score(window),
            Detector::Neural(params) => {
                let probs = forward(window, params, Mode::Infer)?;
                Ok(probs[1])
            }
        }
    }
}

/// Argmax over the window scores; ties break to the lowest index.
/// Returns the winning 0-based window index.
pub fn decide_symbol<F: Real>(p: &[F]) -> Result<usize> {
    if p.is_empty() {
        return Err(param_err!("empty probability vector"));
    }
    let mut best = 0usize;
    for (j, v) in p.iter().enumerate() {
        if !v.is_finite() {
            return Err(Error::Numeric {
                context: "decide_symbol",
                detail: format!("score {v} at window {j}"),
            });
        }
        if *v > p[best] {
            best = j;
        }
    }
    Ok(best)
}

/// One demodulated frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameDecision {
    /// Winning window position, 1-based.
    pub position: usize,
    /// Symbol value after inverting the mapping table.
    pub symbol: usize,
    /// Gray-decoded bit word for the symbol.
    pub word: u32,
}

impl FrameDecision {
    pub fn bits(&self, cfg: &ModemConfig) -> Vec<bool> {
        crate::modem::bits_from_word(self.word, cfg.bits_per_symbol())
    }
}

/// Scores all windows of one received frame and decides its symbol.
pub fn demodulate_frame<F: Real>(
    r: &[F],
    detector: &Detector<F>,
    cfg: &ModemConfig,
    table: &SymbolMapTable,
) -> Result<FrameDecision> {
    if r.len() != cfg.beta {
        return Err(param_err!(
            "received frame has {} samples, expected beta = {}",
            r.len(),
            cfg.beta
        ));
    }
    let windows = split_windows(r, cfg.m)?;
    let scores: Vec<F> = windows
        .iter()
        .map(|w| detector.score(w))
        .collect::<Result<_>>()?;
    let position = decide_symbol(&scores)? + 1;
    let symbol = table.symbol_at(position)?;
    let word = gray_decode(symbol as u32, cfg.m)?;
    Ok(FrameDecision {
        position,
        symbol,
        word,
    })
}

/// Error contribution of one frame: (symbol errors 0/1, bit errors).
/// A frame whose detector failed counts as a symbol error with every bit
/// wrong.
pub fn symbol_bit_errors(
    tx_symbol: usize,
    decision: &Result<FrameDecision>,
    cfg: &ModemConfig,
) -> (u64, u64) {
    let n = cfg.bits_per_symbol() as u64;
    match decision {
        Ok(d) if d.symbol == tx_symbol => (0, 0),
        Ok(d) => {
            let tx_word = gray_decode(tx_symbol as u32, cfg.m).unwrap_or(0);
            (1, u64::from((tx_word ^ d.word).count_ones()))
        }
        Err(_) => (1, n),
    }
}

/// Demodulates a stream of received frames. Per-frame detector failures
/// are reported in place and never abort the remaining frames.
pub fn demodulate<'a, F: Real>(
    frames: impl IntoIterator<Item = &'a [F]>,
    detector: &Detector<F>,
    cfg: &ModemConfig,
    table: &SymbolMapTable,
) -> Vec<Result<FrameDecision>>
where
    F: 'a,
{
    frames
        .into_iter()
        .map(|r| demodulate_frame(r, detector, cfg, table))
        .collect()
}
