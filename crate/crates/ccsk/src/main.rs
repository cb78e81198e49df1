//! Command line front end.
//!
//! Exit codes: 0 success, 1 validation error (bad flags or configs),
//! 2 runtime error (I/O, numeric failures). `CCSK_THREADS` caps the
//! worker pool. A `--config <file>` of flat `key = value` lines supplies
//! defaults; explicit flags override it.

use ccsk::channel::{ChannelConfig, ChannelKind};
use ccsk::dcsk::DcskConfig;
use ccsk::error::Error;
use ccsk::harness::{
    self, default_model_path, emit_results, parse_snr_grid, rows_to_csv, ExperimentSpec,
    ResultRow,
};
use ccsk::modem::{ModemConfig, SymbolMapTable};
use ccsk::neural::{
    estimate_complexity, generate_dataset, load_params, save_params, train, NetConfig,
    TrainingConfig,
};
use ccsk::receiver::Detector;
use ccsk::security::{
    simulate_eavesdropper, Bootstrap, EavesdropperConfig, LabelSource, SecurityReport,
};
use ccsk::Sample;
use clap::{Args, Parser, Subcommand, ValueEnum};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "ccsk",
    version,
    about = "Combined-chaotic-sequence M-ary CSK simulator"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train a window classifier and write a checkpoint
    Train(TrainArgs),
    /// Monte Carlo SER/BER sweep over an Eb/N0 grid
    Ser(SerArgs),
    /// SER sweep over receive-window misalignment values
    Misalign(MisalignArgs),
    /// Information leakage rate for given eavesdropper BERs
    Leakage(LeakageArgs),
    /// Eavesdropper experiment: legitimate vs self-trained receiver
    Eve(EveArgs),
    /// DCSK correlation-receiver baseline BER sweep
    Dcsk(DcskArgs),
    /// Per-layer MAC counts of the window classifier
    Complexity(ComplexityArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum DetectorArg {
    Nn,
    Residual,
}

#[derive(Clone, Copy, ValueEnum)]
enum ChannelArg {
    Awgn,
    Rayleigh2,
}

impl From<ChannelArg> for ChannelKind {
    fn from(c: ChannelArg) -> ChannelKind {
        match c {
            ChannelArg::Awgn => ChannelKind::Awgn,
            ChannelArg::Rayleigh2 => ChannelKind::Rayleigh2,
        }
    }
}

#[derive(Args)]
struct GeomArgs {
    /// Constellation size (power of two)
    #[arg(long = "M", default_value_t = 4, overrides_with = "m")]
    m: usize,
    /// Information segment length in samples
    #[arg(long, default_value_t = 32, overrides_with = "k")]
    k: usize,
    /// Frame length in samples (defaults to M*k)
    #[arg(long, overrides_with = "beta")]
    beta: Option<usize>,
}

impl GeomArgs {
    fn modem(&self) -> ccsk::Result<ModemConfig> {
        ModemConfig::new(self.m, self.k, self.beta.unwrap_or(self.m * self.k))
    }
}

#[derive(Args)]
struct NetArgs {
    /// Hidden units per direction in each recurrent layer
    #[arg(long, default_value_t = 64, overrides_with = "hidden")]
    hidden: usize,
    /// Attention heads
    #[arg(long, default_value_t = 4, overrides_with = "heads")]
    heads: usize,
    /// Attention width (defaults to 2*hidden)
    #[arg(long, overrides_with = "attn_dim")]
    attn_dim: Option<usize>,
    /// Dropout probability after each major block
    #[arg(long, default_value_t = 0.2, overrides_with = "dropout")]
    dropout: f64,
}

impl NetArgs {
    fn config(&self, window: usize) -> NetConfig {
        let mut cfg = NetConfig::with_window(window)
            .with_hidden(self.hidden)
            .with_heads(self.heads)
            .with_dropout(self.dropout);
        if let Some(d) = self.attn_dim {
            cfg.attention_dim = d;
        }
        cfg
    }
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    geom: GeomArgs,
    #[arg(long, value_enum, default_value_t = ChannelArg::Awgn, overrides_with = "channel")]
    channel: ChannelArg,
    #[command(flatten)]
    net: NetArgs,
    /// Training set size (windows; half of each class)
    #[arg(long = "n", default_value_t = 200_000, overrides_with = "dataset_size")]
    dataset_size: usize,
    #[arg(long, default_value_t = 128, overrides_with = "batch")]
    batch: usize,
    #[arg(long, default_value_t = 0.001, overrides_with = "lr")]
    lr: f64,
    #[arg(long, default_value_t = 50, overrides_with = "epochs")]
    epochs: usize,
    /// Early-stopping patience in epochs
    #[arg(long, default_value_t = 5, overrides_with = "patience")]
    patience: usize,
    /// Fraction of the data reserved for validation
    #[arg(long, default_value_t = 0.2, overrides_with = "val_frac")]
    val_frac: f64,
    /// Training Eb/N0 range `lo:hi` in dB (default 12:14 awgn, 14:16 rayleigh2)
    #[arg(long, overrides_with = "train_snr")]
    train_snr: Option<String>,
    #[arg(long, default_value_t = 1, overrides_with = "seed")]
    seed: u64,
    /// Checkpoint output path (defaults to models/<channel>_k<k>.ccsk)
    #[arg(long, overrides_with = "model")]
    model: Option<PathBuf>,
}

#[derive(Args)]
struct SerArgs {
    #[command(flatten)]
    geom: GeomArgs,
    /// Eb/N0 grid in dB: `lo:step:hi` or a single value
    #[arg(long, default_value = "0:2:20", overrides_with = "snr")]
    snr: String,
    #[arg(long, default_value_t = 10_000, overrides_with = "symbols")]
    symbols: usize,
    #[arg(long, default_value_t = 1, overrides_with = "seed")]
    seed: u64,
    #[arg(long, value_enum, default_value_t = DetectorArg::Residual, overrides_with = "detector")]
    detector: DetectorArg,
    #[arg(long, value_enum, default_value_t = ChannelArg::Awgn, overrides_with = "channel")]
    channel: ChannelArg,
    /// Receive-window misalignment in samples
    #[arg(long, default_value_t = 0, overrides_with = "d")]
    d: usize,
    /// Checkpoint path for the nn detector
    #[arg(long, overrides_with = "model")]
    model: Option<PathBuf>,
    /// Output CSV (prints to stdout when omitted)
    #[arg(long, overrides_with = "out")]
    out: Option<PathBuf>,
    /// Append to the output CSV instead of overwriting
    #[arg(long)]
    append: bool,
    /// Key for a permuted symbol-to-position table (identity when omitted)
    #[arg(long, overrides_with = "table_seed")]
    table_seed: Option<u64>,
}

#[derive(Args)]
struct MisalignArgs {
    #[command(flatten)]
    ser: SerArgs,
    /// Comma-separated misalignment values
    #[arg(long, default_value = "0,1,2,3,4,5", overrides_with = "d_grid")]
    d_grid: String,
}

#[derive(Args)]
struct LeakageArgs {
    /// Comma-separated eavesdropper BER values (a 0..1 grid when omitted)
    #[arg(long, overrides_with = "pe")]
    pe: Option<String>,
    #[arg(long, overrides_with = "out")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EveArgs {
    #[command(flatten)]
    geom: GeomArgs,
    #[arg(long, value_enum, default_value_t = ChannelArg::Rayleigh2, overrides_with = "channel")]
    channel: ChannelArg,
    /// Desk-scale network by default; raise for full-scale runs
    #[command(flatten)]
    net: NetArgs,
    #[arg(long, default_value = "6:3:18", overrides_with = "snr")]
    snr: String,
    #[arg(long, default_value_t = 10_000, overrides_with = "symbols")]
    symbols: usize,
    /// Captured windows per training arm
    #[arg(long = "n", default_value_t = 20_000, overrides_with = "dataset_size")]
    dataset_size: usize,
    #[arg(long, default_value_t = 15, overrides_with = "epochs")]
    epochs: usize,
    #[arg(long, default_value_t = 3, overrides_with = "patience")]
    patience: usize,
    /// Self-training rounds for the eavesdropper
    #[arg(long, default_value_t = 1, overrides_with = "rounds")]
    rounds: usize,
    /// Control arm: give the eavesdropper ground-truth labels
    #[arg(long)]
    genie: bool,
    /// Initial label source before the first training round
    #[arg(long, value_enum, default_value_t = BootstrapArg::UntrainedNet, overrides_with = "bootstrap")]
    bootstrap: BootstrapArg,
    #[arg(long, default_value_t = 1, overrides_with = "seed")]
    seed: u64,
    /// BER/SER rows for both arms land here
    #[arg(long, overrides_with = "out")]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum BootstrapArg {
    UntrainedNet,
    RandomGuess,
}

#[derive(Args)]
struct DcskArgs {
    /// Reference half length L (frame = 2L samples)
    #[arg(long, default_value_t = 32, overrides_with = "spreading")]
    spreading: usize,
    #[arg(long, default_value = "0:2:20", overrides_with = "snr")]
    snr: String,
    #[arg(long, default_value_t = 10_000, overrides_with = "symbols")]
    symbols: usize,
    #[arg(long, default_value_t = 1, overrides_with = "seed")]
    seed: u64,
    #[arg(long, value_enum, default_value_t = ChannelArg::Rayleigh2, overrides_with = "channel")]
    channel: ChannelArg,
    #[arg(long, overrides_with = "out")]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ComplexityArgs {
    /// Input sequence length T
    #[arg(long, default_value_t = 128, overrides_with = "k")]
    k: usize,
    #[arg(long, default_value_t = 64, overrides_with = "hidden")]
    hidden: usize,
    #[arg(long, default_value_t = 4, overrides_with = "heads")]
    heads: usize,
    #[arg(long, overrides_with = "attn_dim")]
    attn_dim: Option<usize>,
}

fn main() -> ExitCode {
    harness::init_thread_pool();
    let argv = match inject_config(std::env::args().collect()) {
        Ok(a) => a,
        Err(msg) => {
            eprintln!("error: {msg}");
            return ExitCode::from(1);
        }
    };
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    print!("{e}");
                    ExitCode::SUCCESS
                }
                _ => {
                    eprint!("{e}");
                    ExitCode::from(1)
                }
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e @ Error::Parameter(_)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

/// Pulls `--config <file>` out of the raw arguments and splices the
/// file's `key = value` lines in as flags right after the subcommand, so
/// explicit flags take precedence.
fn inject_config(argv: Vec<String>) -> Result<Vec<String>, String> {
    let mut args = Vec::with_capacity(argv.len());
    let mut config: Option<String> = None;
    let mut it = argv.into_iter();
    while let Some(a) = it.next() {
        if a == "--config" {
            config = Some(
                it.next()
                    .ok_or_else(|| "--config needs a file path".to_string())?,
            );
        } else if let Some(path) = a.strip_prefix("--config=") {
            config = Some(path.to_string());
        } else {
            args.push(a);
        }
    }
    let Some(path) = config else { return Ok(args) };
    if args.len() < 2 {
        return Ok(args);
    }
    let text = std::fs::read_to_string(&path)
        .map_err(|e| format!("cannot read config {path}: {e}"))?;
    let mut injected = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = match line.split_once('=') {
            Some((k, v)) => (k.trim(), v.trim()),
            None => match line.split_once(char::is_whitespace) {
                Some((k, v)) => (k.trim(), v.trim()),
                None => (line, ""),
            },
        };
        if key.is_empty() {
            return Err(format!("{path}:{}: empty key", ln + 1));
        }
        match value {
            "" | "true" => injected.push(format!("--{key}")),
            "false" => {}
            v => {
                injected.push(format!("--{key}"));
                injected.push(v.to_string());
            }
        }
    }
    // program name, subcommand, config-derived flags, explicit flags
    let mut merged = args;
    merged.splice(2..2, injected);
    Ok(merged)
}

fn run(cli: Cli) -> ccsk::Result<()> {
    match cli.cmd {
        Cmd::Train(a) => cmd_train(a),
        Cmd::Ser(a) => {
            let rows = ser_rows(&a, None)?;
            write_rows(&rows, a.out.as_deref(), a.append)
        }
        Cmd::Misalign(a) => cmd_misalign(a),
        Cmd::Leakage(a) => cmd_leakage(a),
        Cmd::Eve(a) => cmd_eve(a),
        Cmd::Dcsk(a) => cmd_dcsk(a),
        Cmd::Complexity(a) => {
            let mut cfg = NetConfig::with_window(a.k).with_hidden(a.hidden).with_heads(a.heads);
            if let Some(d) = a.attn_dim {
                cfg.attention_dim = d;
            }
            cfg.validate()?;
            println!("{}", estimate_complexity(&cfg));
            Ok(())
        }
    }
}

fn parse_train_range(text: &str) -> ccsk::Result<(f64, f64)> {
    let bad = || Error::Parameter(format!("expected training SNR as `lo:hi`, got {text:?}"));
    let (lo, hi) = text.split_once(':').ok_or_else(bad)?;
    let lo: f64 = lo.trim().parse().map_err(|_| bad())?;
    let hi: f64 = hi.trim().parse().map_err(|_| bad())?;
    if lo > hi {
        return Err(bad());
    }
    Ok((lo, hi))
}

fn training_config(kind: ChannelKind) -> TrainingConfig {
    match kind {
        ChannelKind::Awgn => TrainingConfig::awgn(),
        ChannelKind::Rayleigh2 => TrainingConfig::rayleigh2(),
    }
}

fn cmd_train(a: TrainArgs) -> ccsk::Result<()> {
    let modem = a.geom.modem()?;
    let kind: ChannelKind = a.channel.into();
    let channel = ChannelConfig::of_kind(kind);
    let net_cfg = a.net.config(modem.window_len());
    net_cfg.validate()?;
    let mut tr = training_config(kind);
    tr.dataset_size = a.dataset_size;
    tr.batch_size = a.batch;
    tr.learning_rate = a.lr;
    tr.max_epochs = a.epochs;
    tr.patience = a.patience;
    tr.validation_fraction = a.val_frac;
    tr.seed = a.seed;
    if let Some(range) = &a.train_snr {
        tr.train_snr_range_db = parse_train_range(range)?;
    }

    eprintln!(
        "generating {} windows (T = {}, channel = {}) ...",
        tr.dataset_size,
        net_cfg.window_length,
        kind.name()
    );
    let data = generate_dataset::<Sample>(tr.dataset_size, &modem, &channel, &tr, a.seed)?;
    eprintln!("training ({} parameters) ...", {
        ccsk::neural::NetParams::<Sample>::zeros(net_cfg)?.param_count()
    });
    let outcome = train(&data, net_cfg, &tr)?;
    for s in &outcome.history {
        println!(
            "epoch {:>3}  train loss {:.5}  acc {:.4}  val loss {:.5}  acc {:.4}",
            s.epoch, s.train_loss, s.train_acc, s.val_loss, s.val_acc
        );
    }
    println!("stop: {:?}", outcome.stop);

    let path = a
        .model
        .unwrap_or_else(|| default_model_path(kind, modem.k));
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    save_params(&outcome.params, &path)?;
    println!("checkpoint written to {}", path.display());
    Ok(())
}

fn load_detector(a: &SerArgs, modem: &ModemConfig) -> ccsk::Result<Detector<Sample>> {
    match a.detector {
        DetectorArg::Residual => Ok(Detector::residual()),
        DetectorArg::Nn => {
            let kind: ChannelKind = a.channel.into();
            let path = a
                .model
                .clone()
                .unwrap_or_else(|| default_model_path(kind, modem.k));
            let params = load_params::<Sample>(&path)?;
            Ok(Detector::Neural(params))
        }
    }
}

fn ser_rows(a: &SerArgs, d_grid: Option<&[usize]>) -> ccsk::Result<Vec<ResultRow>> {
    let modem = a.geom.modem()?;
    let spec = ExperimentSpec {
        modem,
        channel: ChannelConfig::of_kind(a.channel.into()),
        ebn0_grid: parse_snr_grid(&a.snr)?,
        symbols_per_point: a.symbols,
        d: a.d,
        master_seed: a.seed,
    };
    let table = match a.table_seed {
        Some(s) => SymbolMapTable::permuted(modem.m, s),
        None => SymbolMapTable::identity(modem.m),
    };
    let detector = load_detector(a, &modem)?;
    match d_grid {
        None => harness::run_ser_sweep(&spec, &detector, &table),
        Some(ds) => harness::run_misalignment_sweep(&spec, ds, &detector, &table),
    }
}

fn write_rows(rows: &[ResultRow], out: Option<&std::path::Path>, append: bool) -> ccsk::Result<()> {
    match out {
        Some(path) => {
            emit_results(rows, path, append)?;
            for r in rows {
                println!(
                    "{} {} M={} d={} Eb/N0={:>5} dB  SER {:.5} (±{:.5})  BER {:.5}",
                    r.detector, r.channel, r.m, r.d, r.ebn0_db, r.ser, r.ser_ci95, r.ber
                );
            }
            println!("{} rows written to {}", rows.len(), path.display());
        }
        None => print!("{}", rows_to_csv(rows)),
    }
    Ok(())
}

fn cmd_misalign(a: MisalignArgs) -> ccsk::Result<()> {
    let d_grid: Vec<usize> = a
        .d_grid
        .split(',')
        .map(|v| {
            v.trim()
                .parse::<usize>()
                .map_err(|_| Error::Parameter(format!("bad misalignment value {v:?}")))
        })
        .collect::<ccsk::Result<_>>()?;
    let rows = ser_rows(&a.ser, Some(&d_grid))?;
    write_rows(&rows, a.ser.out.as_deref(), a.ser.append)
}

fn cmd_leakage(a: LeakageArgs) -> ccsk::Result<()> {
    let pes: Vec<f64> = match &a.pe {
        Some(list) => list
            .split(',')
            .map(|v| {
                v.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Parameter(format!("bad BER value {v:?}")))
            })
            .collect::<ccsk::Result<_>>()?,
        None => (0..=100).map(|i| i as f64 / 100.0).collect(),
    };
    let mut out = String::from("pe,leakage\n");
    for pe in pes {
        out.push_str(&format!("{pe},{}\n", ccsk::security::leakage_rate(pe)?));
    }
    match &a.out {
        Some(path) => std::fs::write(path, out)?,
        None => print!("{out}"),
    }
    Ok(())
}

fn security_rows(report: &SecurityReport, a: &EveArgs, modem: &ModemConfig) -> Vec<ResultRow> {
    let channel: ChannelKind = a.channel.into();
    let bits = modem.bits_per_symbol() as u64;
    report
        .points
        .iter()
        .flat_map(|p| {
            [
                ("nn-legit", p.legit_symbol_errors, p.legit_bit_errors),
                ("nn-eve", p.eve_symbol_errors, p.eve_bit_errors),
            ]
            .into_iter()
            .map(move |(name, se, be)| ResultRow {
                detector: name.to_string(),
                channel: channel.name().to_string(),
                m: modem.m,
                k: modem.k,
                beta: modem.beta,
                d: 0,
                ebn0_db: p.ebn0_db,
                symbols: p.symbols,
                symbol_errors: se,
                ser: se as f64 / p.symbols as f64,
                bit_errors: be,
                ber: be as f64 / (p.symbols * bits) as f64,
                seed: a.seed,
                ser_ci95: harness::wilson_halfwidth(se, p.symbols),
            })
        })
        .collect()
}

fn cmd_eve(a: EveArgs) -> ccsk::Result<()> {
    let modem = a.geom.modem()?;
    let kind: ChannelKind = a.channel.into();
    let channel = ChannelConfig::of_kind(kind);
    let net_cfg = a.net.config(modem.window_len());
    net_cfg.validate()?;
    let mut tr = training_config(kind);
    tr.dataset_size = a.dataset_size;
    tr.max_epochs = a.epochs;
    tr.patience = a.patience;
    tr.seed = a.seed;
    let cfg = EavesdropperConfig {
        label_source: if a.genie {
            LabelSource::Genie
        } else {
            LabelSource::SelfEstimated
        },
        bootstrap: match a.bootstrap {
            BootstrapArg::UntrainedNet => Bootstrap::UntrainedNet,
            BootstrapArg::RandomGuess => Bootstrap::RandomGuess,
        },
        rounds: a.rounds,
    };
    let grid = parse_snr_grid(&a.snr)?;
    eprintln!(
        "training legitimate and eavesdropper receivers ({} windows each) ...",
        tr.dataset_size
    );
    let report = simulate_eavesdropper::<Sample>(
        &cfg, &modem, &channel, net_cfg, &tr, &grid, a.symbols, a.seed,
    )?;
    println!("ebn0_db,legit_ber,eve_ber,legit_leakage,eve_leakage");
    for p in &report.points {
        println!(
            "{},{},{},{},{}",
            p.ebn0_db, p.legit_ber, p.eve_ber, p.legit_leakage, p.eve_leakage
        );
    }
    if let Some(path) = &a.out {
        emit_results(&security_rows(&report, &a, &modem), path, false)?;
        println!("rows written to {}", path.display());
    }
    Ok(())
}

fn cmd_dcsk(a: DcskArgs) -> ccsk::Result<()> {
    let dcsk = DcskConfig::new(a.spreading)?;
    // Geometry fields of the spec are unused by the baseline; the frame
    // is 2L samples long.
    let spec = ExperimentSpec {
        modem: ModemConfig::partitioned(2, dcsk.spreading_factor.max(2))?,
        channel: ChannelConfig::of_kind(a.channel.into()),
        ebn0_grid: parse_snr_grid(&a.snr)?,
        symbols_per_point: a.symbols,
        d: 0,
        master_seed: a.seed,
    };
    let rows = harness::dcsk_baseline(&spec, &dcsk)?;
    write_rows(&rows, a.out.as_deref(), false)
}
