//! Experiment orchestration: Monte Carlo SER/BER sweeps, misalignment
//! sweeps, the DCSK baseline, CSV persistence, deterministic seeding.
//!
//! Seeding discipline: the seed of frame `i` at grid point `p` is
//! `derive(master_seed, [p, i])`, so work can be distributed arbitrarily
//! across threads while error counts (plain integer sums) stay identical
//! to a serial run. Misalignment sweeps share the same frame seeds across
//! `d` values, making the offset the only difference between curves.

use crate::channel::{apply_channel, misaligned_windows, ChannelConfig, ChannelKind, NoiseParams};
use crate::dcsk::{dcsk_decide, dcsk_frame, DcskConfig};
use crate::error::{param_err, Error, Result};
use crate::modem::{frame_segments, gray_encode, word_from_bits, Frame, ModemConfig, SymbolMapTable};
use crate::real::Real;
use crate::receiver::{demodulate_frame, symbol_bit_errors, Detector};
use crate::rng::{derive, rng_from};
use rand::Rng;
use rayon::prelude::*;
use std::path::{Path, PathBuf};

/// Frames simulated per memory block of a sweep point.
const FRAME_BLOCK: usize = 2048;

/// One Monte Carlo sweep description.
#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    pub modem: ModemConfig,
    pub channel: ChannelConfig,
    pub ebn0_grid: Vec<f64>,
    pub symbols_per_point: usize,
    /// Receive-window misalignment in samples.
    pub d: usize,
    pub master_seed: u64,
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        if self.symbols_per_point < 100 {
            return Err(param_err!(
                "at least 100 symbols per point required, got {}",
                self.symbols_per_point
            ));
        }
        if self.ebn0_grid.is_empty() {
            return Err(param_err!("empty Eb/N0 grid"));
        }
        if self.ebn0_grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(param_err!("Eb/N0 grid must be strictly increasing"));
        }
        if self.d >= self.modem.k {
            return Err(param_err!(
                "misalignment d = {} must be < k = {}",
                self.d,
                self.modem.k
            ));
        }
        self.channel.validate(self.modem.beta)?;
        Ok(())
    }
}

/// One Monte Carlo measurement point.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub detector: String,
    pub channel: String,
    pub m: usize,
    pub k: usize,
    pub beta: usize,
    pub d: usize,
    pub ebn0_db: f64,
    pub symbols: u64,
    pub symbol_errors: u64,
    pub ser: f64,
    pub bit_errors: u64,
    pub ber: f64,
    pub seed: u64,
    /// 95% Wilson half-width of the SER estimate; for zero observed
    /// errors this records the one-sided upper bound 3/n instead.
    pub ser_ci95: f64,
}

pub const CSV_HEADER: &str =
    "detector,channel,M,k,beta,d,ebn0_db,symbols,symbol_errors,ser,bit_errors,ber,seed,ser_ci95";

impl ResultRow {
    pub fn to_csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.detector,
            self.channel,
            self.m,
            self.k,
            self.beta,
            self.d,
            self.ebn0_db,
            self.symbols,
            self.symbol_errors,
            self.ser,
            self.bit_errors,
            self.ber,
            self.seed,
            self.ser_ci95
        )
    }

    pub fn from_csv_line(line: &str) -> Result<Self> {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 14 {
            return Err(Error::Format(format!(
                "expected 14 CSV fields, found {} in {line:?}",
                f.len()
            )));
        }
        let parse_err = |what: &str| Error::Format(format!("bad {what} in {line:?}"));
        Ok(ResultRow {
            detector: f[0].to_string(),
            channel: f[1].to_string(),
            m: f[2].parse().map_err(|_| parse_err("M"))?,
            k: f[3].parse().map_err(|_| parse_err("k"))?,
            beta: f[4].parse().map_err(|_| parse_err("beta"))?,
            d: f[5].parse().map_err(|_| parse_err("d"))?,
            ebn0_db: f[6].parse().map_err(|_| parse_err("ebn0_db"))?,
            symbols: f[7].parse().map_err(|_| parse_err("symbols"))?,
            symbol_errors: f[8].parse().map_err(|_| parse_err("symbol_errors"))?,
            ser: f[9].parse().map_err(|_| parse_err("ser"))?,
            bit_errors: f[10].parse().map_err(|_| parse_err("bit_errors"))?,
            ber: f[11].parse().map_err(|_| parse_err("ber"))?,
            seed: f[12].parse().map_err(|_| parse_err("seed"))?,
            ser_ci95: f[13].parse().map_err(|_| parse_err("ser_ci95"))?,
        })
    }
}

/// 95% Wilson interval half-width for `errors` out of `n`; the rule of
/// three (3/n) stands in when no errors were observed.
pub fn wilson_halfwidth(errors: u64, n: u64) -> f64 {
    if n == 0 {
        return f64::NAN;
    }
    if errors == 0 {
        return 3.0 / n as f64;
    }
    let z = 1.959_963_984_540_054_f64;
    let nf = n as f64;
    let p = errors as f64 / nf;
    let z2 = z * z;
    z * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt() / (1.0 + z2 / nf)
}

pub fn rows_to_csv(rows: &[ResultRow]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&r.to_csv_line());
        out.push('\n');
    }
    out
}

pub fn parse_results(text: &str) -> Result<Vec<ResultRow>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == CSV_HEADER => {}
        other => return Err(Error::Format(format!("bad CSV header {other:?}"))),
    }
    lines.map(ResultRow::from_csv_line).collect()
}

/// Writes rows to `path`: a fresh header-plus-rows file by default, or
/// appended rows (header only when the file is new or empty) with
/// `append`. The content is built in memory first, so a failing path
/// never receives a partial header.
pub fn emit_results(rows: &[ResultRow], path: impl AsRef<Path>, append: bool) -> Result<()> {
    let path = path.as_ref();
    let existing = if append {
        std::fs::metadata(path).map(|m| m.len()).unwrap_or(0)
    } else {
        0
    };
    let mut body = String::new();
    if !append || existing == 0 {
        body.push_str(CSV_HEADER);
        body.push('\n');
    }
    for r in rows {
        body.push_str(&r.to_csv_line());
        body.push('\n');
    }
    if append && existing > 0 {
        use std::io::Write;
        let mut f = std::fs::OpenOptions::new().append(true).open(path)?;
        f.write_all(body.as_bytes())?;
    } else {
        std::fs::write(path, body)?;
    }
    Ok(())
}

/// Worker-count override from the `CCSK_THREADS` environment variable.
pub fn configured_threads() -> Option<usize> {
    std::env::var("CCSK_THREADS")
        .ok()
        .and_then(|v| v.parse().ok())
        .filter(|&n| n > 0)
}

/// Installs the global worker pool honoring `CCSK_THREADS`. Safe to call
/// more than once; later calls are no-ops.
pub fn init_thread_pool() {
    if let Some(n) = configured_threads() {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .ok();
    }
}

/// Checkpoint path convention for partitioned geometries.
pub fn default_model_path(channel: ChannelKind, k: usize) -> PathBuf {
    PathBuf::from(format!("models/{}_k{}.ccsk", channel.name(), k))
}

/// Parses an Eb/N0 grid given as `lo:step:hi` or as a single value.
pub fn parse_snr_grid(text: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = text.split(':').collect();
    let bad = || param_err!("expected Eb/N0 as `lo:step:hi` or a single value, got {text:?}");
    match parts.len() {
        1 => Ok(vec![parts[0].trim().parse().map_err(|_| bad())?]),
        3 => {
            let lo: f64 = parts[0].trim().parse().map_err(|_| bad())?;
            let step: f64 = parts[1].trim().parse().map_err(|_| bad())?;
            let hi: f64 = parts[2].trim().parse().map_err(|_| bad())?;
            if step <= 0.0 || hi < lo {
                return Err(bad());
            }
            let mut grid = Vec::new();
            let mut i = 0u32;
            loop {
                let v = lo + step * i as f64;
                if v > hi + 1e-9 {
                    break;
                }
                grid.push(v);
                i += 1;
            }
            Ok(grid)
        }
        _ => Err(bad()),
    }
}

/// Builds frame `i` of a sweep point: random bits, Gray encoding, fresh
/// segments, channel. Returns the transmitted symbol and received frame.
fn simulate_frame<F: Real>(
    modem: &ModemConfig,
    channel: &ChannelConfig,
    table: &SymbolMapTable,
    noise: &NoiseParams<F>,
    frame_seed: u64,
) -> Result<(usize, Vec<F>)> {
    let mut rng = rng_from(frame_seed);
    let n = modem.bits_per_symbol();
    let bits: Vec<bool> = (0..n).map(|_| rng.gen()).collect();
    let symbol = gray_encode(word_from_bits(&bits), modem.m)? as usize;
    let (info, cover) = frame_segments(modem, frame_seed, 0)?;
    let frame = Frame::assemble(info, cover, symbol, table, modem)?;
    let received = apply_channel(&frame.samples, channel, noise, derive(frame_seed, &[2]))?;
    Ok((symbol, received))
}

/// Error counts for one grid point. Trial `i` reads the receiver window
/// `[i*beta + d, (i+1)*beta + d)` over the stream of consecutive frames,
/// so one extra frame is simulated past the last trial.
fn simulate_point<F: Real>(
    modem: &ModemConfig,
    channel: &ChannelConfig,
    table: &SymbolMapTable,
    detector: &Detector<F>,
    ebn0_db: f64,
    symbols: usize,
    d: usize,
    master_seed: u64,
    point_idx: u64,
) -> Result<(u64, u64)> {
    let noise = NoiseParams::from_ebn0(ebn0_db, modem)?;
    let beta = modem.beta;
    let mut symbol_errors = 0u64;
    let mut bit_errors = 0u64;

    let mut block_start = 0usize;
    while block_start < symbols {
        let block_end = (block_start + FRAME_BLOCK).min(symbols);
        // frames block_start ..= block_end (one lookahead frame)
        let frames: Vec<(usize, Vec<F>)> = (block_start..=block_end)
            .into_par_iter()
            .map(|i| {
                simulate_frame(
                    modem,
                    channel,
                    table,
                    &noise,
                    derive(master_seed, &[point_idx, i as u64]),
                )
            })
            .collect::<Result<_>>()?;
        let mut stream = Vec::with_capacity(frames.len() * beta);
        for (_, r) in &frames {
            stream.extend_from_slice(r);
        }
        let windows = misaligned_windows(&stream, beta, d)?;
        let counts: Vec<Result<(u64, u64)>> = windows
            .par_iter()
            .enumerate()
            .map(|(local, window)| {
                let decision = demodulate_frame(window, detector, modem, table);
                if let Err(Error::Parameter(msg)) = &decision {
                    // Geometry mismatches are configuration bugs, not
                    // per-frame detector noise; surface them.
                    return Err(param_err!("{msg}"));
                }
                Ok(symbol_bit_errors(frames[local].0, &decision, modem))
            })
            .collect();
        for c in counts {
            let (se, be) = c?;
            symbol_errors += se;
            bit_errors += be;
        }
        block_start = block_end;
    }
    Ok((symbol_errors, bit_errors))
}

fn point_row(
    spec: &ExperimentSpec,
    detector_name: &str,
    d: usize,
    ebn0_db: f64,
    symbol_errors: u64,
    bit_errors: u64,
) -> ResultRow {
    let symbols = spec.symbols_per_point as u64;
    let bits = symbols * spec.modem.bits_per_symbol() as u64;
    ResultRow {
        detector: detector_name.to_string(),
        channel: spec.channel.kind.name().to_string(),
        m: spec.modem.m,
        k: spec.modem.k,
        beta: spec.modem.beta,
        d,
        ebn0_db,
        symbols,
        symbol_errors,
        ser: symbol_errors as f64 / symbols as f64,
        bit_errors,
        ber: bit_errors as f64 / bits as f64,
        seed: spec.master_seed,
        ser_ci95: wilson_halfwidth(symbol_errors, symbols),
    }
}

fn check_detector_geometry<F: Real>(detector: &Detector<F>, modem: &ModemConfig) -> Result<()> {
    if let Detector::Neural(params) = detector {
        if params.cfg.window_length != modem.window_len() {
            return Err(param_err!(
                "checkpoint was trained for windows of {} samples but beta/M = {}",
                params.cfg.window_length,
                modem.window_len()
            ));
        }
    }
    Ok(())
}

/// SER/BER sweep over the Eb/N0 grid. Rows appear in grid order.
pub fn run_ser_sweep<F: Real>(
    spec: &ExperimentSpec,
    detector: &Detector<F>,
    table: &SymbolMapTable,
) -> Result<Vec<ResultRow>> {
    spec.validate()?;
    check_detector_geometry(detector, &spec.modem)?;
    spec.ebn0_grid
        .iter()
        .enumerate()
        .map(|(pi, &ebn0)| {
            let (se, be) = simulate_point(
                &spec.modem,
                &spec.channel,
                table,
                detector,
                ebn0,
                spec.symbols_per_point,
                spec.d,
                spec.master_seed,
                pi as u64,
            )?;
            Ok(point_row(spec, detector.name(), spec.d, ebn0, se, be))
        })
        .collect()
}

/// One SER curve per misalignment value. All curves reuse the same
/// transmitted frames and channel noise; only the receive offset moves.
pub fn run_misalignment_sweep<F: Real>(
    spec: &ExperimentSpec,
    d_grid: &[usize],
    detector: &Detector<F>,
    table: &SymbolMapTable,
) -> Result<Vec<ResultRow>> {
    spec.validate()?;
    check_detector_geometry(detector, &spec.modem)?;
    if d_grid.is_empty() {
        return Err(param_err!("empty misalignment grid"));
    }
    for &d in d_grid {
        if d >= spec.modem.k {
            return Err(param_err!("misalignment d = {d} must be < k = {}", spec.modem.k));
        }
    }
    let mut rows = Vec::with_capacity(d_grid.len() * spec.ebn0_grid.len());
    for &d in d_grid {
        for (pi, &ebn0) in spec.ebn0_grid.iter().enumerate() {
            let (se, be) = simulate_point(
                &spec.modem,
                &spec.channel,
                table,
                detector,
                ebn0,
                spec.symbols_per_point,
                d,
                spec.master_seed,
                pi as u64,
            )?;
            rows.push(point_row(spec, detector.name(), d, ebn0, se, be));
        }
    }
    Ok(rows)
}

/// BER sweep of the DCSK correlation baseline over the same grid.
/// `M`, `k` and `beta` columns record 2, L and 2L.
pub fn dcsk_baseline(spec: &ExperimentSpec, dcsk: &DcskConfig) -> Result<Vec<ResultRow>> {
    if spec.symbols_per_point < 100 {
        return Err(param_err!("at least 100 bits per point required"));
    }
    if spec.ebn0_grid.is_empty() || spec.ebn0_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(param_err!("Eb/N0 grid must be non-empty and strictly increasing"));
    }
    spec.channel.validate(dcsk.frame_len())?;
    let mut rows = Vec::with_capacity(spec.ebn0_grid.len());
    for (pi, &ebn0) in spec.ebn0_grid.iter().enumerate() {
        let noise = NoiseParams::<f64>::from_measured_eb(dcsk.energy_per_bit(), ebn0);
        let error_list: Vec<Result<u64>> = (0..spec.symbols_per_point)
            .into_par_iter()
            .map(|i| {
                let fseed = derive(spec.master_seed, &[pi as u64, i as u64]);
                let mut rng = rng_from(fseed);
                let bit: bool = rng.gen();
                let frame = dcsk_frame::<f64>(bit, dcsk, derive(fseed, &[0]))?;
                let r = apply_channel(&frame, &spec.channel, &noise, derive(fseed, &[1]))?;
                Ok(u64::from(dcsk_decide(&r, dcsk)? != bit))
            })
            .collect();
        let mut errors = 0u64;
        for e in error_list {
            errors += e?;
        }
        let n = spec.symbols_per_point as u64;
        rows.push(ResultRow {
            detector: "dcsk-correlator".to_string(),
            channel: spec.channel.kind.name().to_string(),
            m: 2,
            k: dcsk.spreading_factor,
            beta: dcsk.frame_len(),
            d: 0,
            ebn0_db: ebn0,
            symbols: n,
            symbol_errors: errors,
            ser: errors as f64 / n as f64,
            bit_errors: errors,
            ber: errors as f64 / n as f64,
            seed: spec.master_seed,
            ser_ci95: wilson_halfwidth(errors, n),
        });
    }
    Ok(rows)
}
