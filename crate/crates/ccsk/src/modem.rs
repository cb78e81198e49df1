//! Transmitter: Gray-coded M-ary symbols mapped to frame positions.
//!
//! A frame of `beta` samples is split into `M` windows of `beta / M`
//! samples. Exactly one window (position `c`, selected by the symbol
//! through a shared mapping table) carries the k-sample Cubic information
//! segment, left-aligned; every other sample comes from the Logistic
//! cover segment, consumed in order. In the default partition `beta = M k`
//! the information segment fills its window exactly.

use crate::chaos::{
    generate_segment, standardize_segment, MapKind, Segment, StandardizationConstants,
    DEFAULT_BURN_IN,
};
use crate::error::{param_err, Result};
use crate::real::Real;
use crate::rng;

/// Frame geometry shared by transmitter and receiver.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModemConfig {
    /// Constellation size; must be a power of two, >= 2.
    pub m: usize,
    /// Information segment length in samples.
    pub k: usize,
    /// Frame length in samples.
    pub beta: usize,
    /// Standardize segments to zero mean / unit variance (default).
    /// Turning this off reproduces raw-amplitude behavior, but Eb/N0
    /// accounting then needs measured frame energies.
    pub standardize: bool,
}

impl ModemConfig {
    pub fn new(m: usize, k: usize, beta: usize) -> Result<Self> {
        if m < 2 || !m.is_power_of_two() {
            return Err(param_err!("M must be a power of two >= 2, got {m}"));
        }
        if k < 2 {
            return Err(param_err!("k must be >= 2, got {k}"));
        }
        if beta % m != 0 {
            return Err(param_err!("beta ({beta}) must be divisible by M ({m})"));
        }
        if k > beta / m {
            return Err(param_err!(
                "k ({k}) must fit in a window of beta/M = {} samples",
                beta / m
            ));
        }
        Ok(ModemConfig {
            m,
            k,
            beta,
            standardize: true,
        })
    }

    /// The default geometry `beta = M k` where windows and information
    /// segments coincide.
    pub fn partitioned(m: usize, k: usize) -> Result<Self> {
        Self::new(m, k, m * k)
    }

    pub fn bits_per_symbol(&self) -> usize {
        self.m.trailing_zeros() as usize
    }

    /// Receiver window length `beta / M`.
    pub fn window_len(&self) -> usize {
        self.beta / self.m
    }
}

/// Gray-encodes an n-bit word into a symbol value: adjacent symbols have
/// words differing in exactly one bit. Inverse of [`gray_decode`].
pub fn gray_encode(word: u32, m: usize) -> Result<u32> {
    if (word as usize) >= m {
        return Err(param_err!("word {word:#b} wider than log2({m}) bits"));
    }
    let mut sym = word;
    let mut mask = sym >> 1;
    while mask != 0 {
        sym ^= mask;
        mask >>= 1;
    }
    Ok(sym)
}

/// Gray-decodes a symbol value back into its n-bit word.
pub fn gray_decode(symbol: u32, m: usize) -> Result<u32> {
    if (symbol as usize) >= m {
        return Err(param_err!("symbol {symbol} out of range for M = {m}"));
    }
    Ok(symbol ^ (symbol >> 1))
}

/// Packs bits (MSB first) into a word.
pub fn word_from_bits(bits: &[bool]) -> u32 {
    bits.iter().fold(0u32, |w, &b| (w << 1) | b as u32)
}

/// Unpacks a word into `n` bits, MSB first.
pub fn bits_from_word(word: u32, n: usize) -> Vec<bool> {
    (0..n).rev().map(|i| (word >> i) & 1 == 1).collect()
}

/// Bijection between symbol values and frame positions `c` in `1..=M`.
///
/// The table is shared out of band by transmitter and receiver; a permuted
/// table acts as a key an eavesdropper does not hold.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SymbolMapTable {
    m: usize,
    symbol_to_c: Vec<usize>,
    c_to_symbol: Vec<usize>,
}

impl SymbolMapTable {
    /// Default order: symbol `s` maps to position `c = s + 1`.
    pub fn identity(m: usize) -> Self {
        let symbol_to_c: Vec<usize> = (1..=m).collect();
        let c_to_symbol: Vec<usize> = (0..m).collect();
        SymbolMapTable {
            m,
            symbol_to_c,
            c_to_symbol,
        }
    }

    /// Builds a table from explicit positions: `positions[s]` is the
    /// 1-based position of symbol `s`. Must be a bijection onto `1..=M`.
    pub fn from_positions(positions: Vec<usize>) -> Result<Self> {
        let m = positions.len();
        let mut c_to_symbol = vec![usize::MAX; m];
        for (s, &c) in positions.iter().enumerate() {
            if c < 1 || c > m {
                return Err(param_err!("position {c} out of range 1..={m}"));
            }
            if c_to_symbol[c - 1] != usize::MAX {
                return Err(param_err!("position {c} assigned twice"));
            }
            c_to_symbol[c - 1] = s;
        }
        Ok(SymbolMapTable {
            m,
            symbol_to_c: positions,
            c_to_symbol,
        })
    }

    /// Keyed random bijection (Fisher-Yates under a seeded stream).
    pub fn permuted(m: usize, seed: u64) -> Self {
        use rand::Rng;
        let mut positions: Vec<usize> = (1..=m).collect();
        let mut r = rng::rng_from(seed);
        for i in (1..m).rev() {
            let j = r.gen_range(0..=i);
            positions.swap(i, j);
        }
        Self::from_positions(positions).expect("permutation is a bijection")
    }

    pub fn m(&self) -> usize {
        self.m
    }

    /// Position `c` in `1..=M` carrying symbol `symbol`.
    pub fn position_of(&self, symbol: usize) -> Result<usize> {
        self.symbol_to_c
            .get(symbol)
            .copied()
            .ok_or_else(|| param_err!("symbol {symbol} >= M = {}", self.m))
    }

    /// Symbol carried at position `c` in `1..=M`.
    pub fn symbol_at(&self, c: usize) -> Result<usize> {
        if c < 1 || c > self.m {
            return Err(param_err!("position {c} out of range 1..={}", self.m));
        }
        Ok(self.c_to_symbol[c - 1])
    }
}

/// One transmitted symbol: the combined chaotic sequence plus its ground
/// truth metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame<F> {
    pub samples: Vec<F>,
    pub symbol: usize,
    /// 1-based window position of the information segment.
    pub c: usize,
    pub info_segment: Segment<F>,
    pub cover_segment: Segment<F>,
}

/// Places the information segment at window `c` and fills the remaining
/// positions with cover samples in order.
pub fn combine_sequence<F: Real>(
    info: &Segment<F>,
    cover: &Segment<F>,
    c: usize,
    cfg: &ModemConfig,
) -> Result<Vec<F>> {
    if info.len() != cfg.k {
        return Err(param_err!(
            "information segment has {} samples, expected k = {}",
            info.len(),
            cfg.k
        ));
    }
    if cover.len() != cfg.beta - cfg.k {
        return Err(param_err!(
            "cover segment has {} samples, expected beta - k = {}",
            cover.len(),
            cfg.beta - cfg.k
        ));
    }
    if c < 1 || c > cfg.m {
        return Err(param_err!("position {c} out of range 1..={}", cfg.m));
    }
    let start = (c - 1) * cfg.window_len();
    let end = start + cfg.k;
    let mut samples = Vec::with_capacity(cfg.beta);
    let mut cover_iter = cover.samples.iter();
    for q in 0..cfg.beta {
        if q >= start && q < end {
            samples.push(info.samples[q - start]);
        } else {
            samples.push(*cover_iter.next().expect("cover length checked"));
        }
    }
    Ok(samples)
}

impl<F: Real> Frame<F> {
    /// Builds one frame from fresh segments for `symbol`.
    pub fn assemble(
        info: Segment<F>,
        cover: Segment<F>,
        symbol: usize,
        table: &SymbolMapTable,
        cfg: &ModemConfig,
    ) -> Result<Self> {
        let c = table.position_of(symbol)?;
        let samples = combine_sequence(&info, &cover, c, cfg)?;
        Ok(Frame {
            samples,
            symbol,
            c,
            info_segment: info,
            cover_segment: cover,
        })
    }
}

/// Generates the two segments for frame `index` under `master_seed`,
/// standardized when the config says so. Fresh, independent seeds per
/// frame: nothing is reused across transmissions.
pub fn frame_segments<F: Real>(
    cfg: &ModemConfig,
    master_seed: u64,
    index: u64,
) -> Result<(Segment<F>, Segment<F>)> {
    let info_seed = rng::derive(master_seed, &[index, 0]);
    let cover_seed = rng::derive(master_seed, &[index, 1]);
    let mut info = generate_segment(MapKind::Cubic, cfg.k, info_seed, DEFAULT_BURN_IN)?;
    let mut cover =
        generate_segment(MapKind::Logistic, cfg.beta - cfg.k, cover_seed, DEFAULT_BURN_IN)?;
    if cfg.standardize {
        info = standardize_segment(&info, &StandardizationConstants::for_map(MapKind::Cubic))?;
        cover =
            standardize_segment(&cover, &StandardizationConstants::for_map(MapKind::Logistic))?;
    }
    Ok((info, cover))
}

/// Encodes a bit stream into frames. The stream length must be a multiple
/// of `log2(M)`; odd tails are rejected, not padded.
pub fn modulate<F: Real>(
    bits: &[bool],
    cfg: &ModemConfig,
    table: &SymbolMapTable,
    seed: u64,
) -> Result<Vec<Frame<F>>> {
    let n = cfg.bits_per_symbol();
    if bits.len() % n != 0 {
        return Err(param_err!(
            "bit count {} is not divisible by log2(M) = {n}",
            bits.len()
        ));
    }
    bits.chunks(n)
        .enumerate()
        .map(|(i, group)| {
            let word = word_from_bits(group);
            let symbol = gray_encode(word, cfg.m)? as usize;
            let (info, cover) = frame_segments(cfg, seed, i as u64)?;
            Frame::assemble(info, cover, symbol, table, cfg)
        })
        .collect()
}
