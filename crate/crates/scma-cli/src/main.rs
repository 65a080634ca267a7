//! Command line harness for the SCMA link laboratory: codebook
//! construction and KPI inspection, seeded Monte Carlo BER/SER sweeps,
//! decoder comparisons with agreement matrices, and single-frame decode
//! dumps.
//!
//! Exit codes: 0 on success, 1 for configuration errors (bad flags,
//! malformed files, invalid parameters), 2 for runtime errors (I/O and
//! execution failures).

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use scma_core::codebook::{assemble_codebooks, phase_operators, star_qam_mother, KpiReport};
use scma_core::decoder::{decode_traced, DecodeResult, DecodeTrace, DecoderConfig};
use scma_core::fileio;
use scma_core::graph::FactorGraph;
use scma_core::link;
use scma_core::rng::{frame_rng, StreamTag};
use scma_core::sim::{self, AgreementMatrix, DetectorSpec, SimConfig, SweepResult};

#[derive(Parser)]
#[command(name = "scma", version, about = "SCMA link-level laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build or inspect codebook files.
    #[command(subcommand)]
    Codebook(CodebookCommand),
    /// Run the Monte Carlo sweep described by a config file.
    Simulate(SimulateArgs),
    /// Run all configured detectors on common realizations and report
    /// pairwise hard-decision agreement.
    Compare(CompareArgs),
    /// Decode one frame and dump the messages of every iteration.
    DecodeOne(DecodeOneArgs),
}

#[derive(Subcommand)]
enum CodebookCommand {
    /// Assemble a star-QAM codebook set and write it to a file.
    Build(BuildArgs),
    /// Print the KPI table of a codebook file.
    Kpi(KpiArgs),
}

#[derive(Args)]
struct BuildArgs {
    /// Number of resource elements K.
    #[arg(long = "K")]
    num_resources: usize,
    /// Number of users J.
    #[arg(long = "J")]
    num_users: usize,
    /// Codeword sparsity d_v (resources per user).
    #[arg(long = "dv")]
    var_degree: usize,
    /// Modulation order M.
    #[arg(long = "M")]
    size: usize,
    /// Star-QAM ring parameter alpha.
    #[arg(long)]
    alpha: f64,
    /// Star-QAM ring ratio beta.
    #[arg(long)]
    beta: f64,
    /// Output codebook file.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct KpiArgs {
    /// Codebook file to inspect.
    #[arg(long = "in")]
    input: PathBuf,
}

#[derive(Args)]
struct SimulateArgs {
    /// Sweep configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Master seed override.
    #[arg(long)]
    seed: Option<u64>,
    /// CSV output path override.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CompareArgs {
    /// Sweep configuration file with at least two detectors.
    #[arg(long)]
    config: PathBuf,
}

#[derive(Args)]
struct DecodeOneArgs {
    /// Sweep configuration file; the first detector entry is used.
    #[arg(long)]
    config: PathBuf,
    /// Frame bits as one hex string, user 1 first, most significant
    /// digit first.
    #[arg(long)]
    bits: String,
    /// Per-user Eb/N0 in dB.
    #[arg(long = "snr-db")]
    snr_db: f64,
}

/// A configuration mistake raised by the CLI layer itself.
#[derive(Debug)]
struct ConfigError(String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

fn config_error(message: impl Into<String>) -> anyhow::Error {
    anyhow::Error::new(ConfigError(message.into()))
}

fn exit_code_for(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<scma_core::Error>() {
            return if e.is_config() { 1 } else { 2 };
        }
        if cause.downcast_ref::<ConfigError>().is_some() {
            return 1;
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return 2;
        }
    }
    2
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let is_usage = err.use_stderr();
            let _ = err.print();
            return if is_usage {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Codebook(CodebookCommand::Build(args)) => cmd_build(args),
        Command::Codebook(CodebookCommand::Kpi(args)) => cmd_kpi(args),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Compare(args) => cmd_compare(args),
        Command::DecodeOne(args) => cmd_decode_one(args),
    }
}

// ---------------------------------------------------------------------------
// codebook build / kpi
// ---------------------------------------------------------------------------

fn cmd_build(args: BuildArgs) -> Result<()> {
    let mother = star_qam_mother(args.alpha, args.beta)?;
    if args.size != mother.size() {
        return Err(config_error(format!(
            "the star-QAM mother constellation has M = {} symbols; --M {} is not supported",
            mother.size(),
            args.size
        )));
    }
    if args.var_degree != mother.dims() {
        return Err(config_error(format!(
            "the star-QAM mother constellation spans {} dimensions; --dv {} does not match",
            mother.dims(),
            args.var_degree
        )));
    }
    let graph = FactorGraph::regular(args.num_resources, args.num_users, args.var_degree)?;
    let operators = phase_operators(args.num_users)?;
    let cbs = assemble_codebooks(&graph, &mother, &operators)?;
    fileio::save_codebook(&args.out, &cbs)?;
    println!(
        "wrote {} ({} resources, {} users, M = {}, lambda = {:.2})",
        args.out.display(),
        cbs.num_resources(),
        cbs.num_users(),
        cbs.size(),
        cbs.graph().overloading_factor()
    );
    print_kpi_table(&sim::kpi_report(&cbs, Some(&mother))?);
    Ok(())
}

fn cmd_kpi(args: KpiArgs) -> Result<()> {
    let cbs = fileio::load_codebook(&args.input)?;
    print_kpi_table(&sim::kpi_report(&cbs, None)?);
    Ok(())
}

fn print_kpi_table(rows: &[(String, KpiReport)]) {
    println!(
        "{:<14} {:>10} {:>6} {:>10} {:>10} {:>6} {:>3}",
        "constellation", "d_e_min", "tau_e", "tau_e_avg", "d_p_min", "tau_p", "L"
    );
    for (label, kpi) in rows {
        println!(
            "{:<14} {:>10.6} {:>6} {:>10.4} {:>10.6} {:>6} {:>3}",
            label, kpi.d_e_min, kpi.tau_e, kpi.tau_e_avg, kpi.d_p_min, kpi.tau_p, kpi.diversity
        );
    }
}

// ---------------------------------------------------------------------------
// simulate / compare
// ---------------------------------------------------------------------------

fn cmd_simulate(args: SimulateArgs) -> Result<()> {
    let mut config = fileio::load_sim_config(&args.config)?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(out) = args.out {
        config.out_csv = Some(out);
    }
    let result = sim::run_sweep(&config)?;
    print_sweep_table(&result);
    emit_and_report(&result, &config)
}

fn cmd_compare(args: CompareArgs) -> Result<()> {
    let config = fileio::load_sim_config(&args.config)?;
    let (result, matrices) = sim::compare_decoders(&config)?;
    print_sweep_table(&result);
    for matrix in &matrices {
        print_agreement(matrix);
    }
    emit_and_report(&result, &config)
}

fn emit_and_report(result: &SweepResult, config: &SimConfig) -> Result<()> {
    fileio::emit_outputs(result, config.out_csv.as_deref(), config.out_plot.as_deref())?;
    if let Some(path) = &config.out_csv {
        println!("wrote {}", path.display());
    }
    if let Some(path) = &config.out_plot {
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn print_sweep_table(result: &SweepResult) {
    println!(
        "{:>7} {:<12} {:>8} {:>9} {:>10} {:>10} {:>10} {:>10} {:>16} {:>8} {:>8}",
        "snr_db",
        "decoder",
        "frames",
        "bits",
        "bit_errs",
        "ber",
        "sym_errs",
        "ser",
        "avg_fn_multiplies",
        "avg_iter",
        "wall_ms"
    );
    for row in &result.rows {
        println!(
            "{:>7} {:<12} {:>8} {:>9} {:>10} {:>10.3e} {:>10} {:>10.3e} {:>16.1} {:>8.2} {:>8}",
            row.snr_db,
            row.decoder,
            row.frames,
            row.bits,
            row.bit_errors,
            row.ber,
            row.symbol_errors,
            row.ser,
            row.avg_fn_multiplies,
            row.avg_iterations,
            row.wall_ms
        );
    }
}

fn print_agreement(matrix: &AgreementMatrix) {
    println!("hard-decision agreement at {} dB", matrix.snr_db);
    let width = matrix
        .labels
        .iter()
        .map(|l| l.len())
        .max()
        .unwrap_or(0)
        .max(8);
    print!("{:<width$}", "");
    for label in &matrix.labels {
        print!(" {label:>width$}");
    }
    println!();
    for (a, label) in matrix.labels.iter().enumerate() {
        print!("{label:<width$}");
        for b in 0..matrix.labels.len() {
            print!(" {:>width$.4}", matrix.rates[a][b]);
        }
        println!();
    }
}

// ---------------------------------------------------------------------------
// decode-one
// ---------------------------------------------------------------------------

fn cmd_decode_one(args: DecodeOneArgs) -> Result<()> {
    let config = fileio::load_sim_config(&args.config)?;
    let cbs = config.resolve_codebook()?;
    config.validate(&cbs)?;
    let (label, mut decoder_config) = first_decoder(&config)?;
    decoder_config.mapping = config.mapping;
    let bits_per_symbol = cbs
        .bits_per_symbol()
        .ok_or_else(|| config_error("codebook size must be a power of two"))?;
    let frame = parse_hex_frame(&args.bits, cbs.num_users(), bits_per_symbol)?;
    let n0 = link::n0_from_ebn0_db(args.snr_db, cbs.avg_symbol_energy(), bits_per_symbol);

    let mut channel_rng = frame_rng(config.seed, 0, StreamTag::Channel);
    let channel = link::realize_channel(config.channel, cbs.graph(), n0, &mut channel_rng)?;
    let x = link::encode(&frame, &cbs, config.mapping)?;
    let mut noise_rng = frame_rng(config.seed, 0, StreamTag::Noise);
    let y = link::transmit(&x, cbs.graph(), &channel, &mut noise_rng)?;
    let (result, trace) = decode_traced(&y, &channel, &cbs, &decoder_config)?;

    println!(
        "decoder: {} ({} iterations, seed {})",
        label, decoder_config.iterations, config.seed
    );
    println!("snr_db: {} (n0 = {:.6e})", args.snr_db, n0);
    for (j, bits) in frame.iter().enumerate() {
        let strings: Vec<String> = bits.iter().map(u8::to_string).collect();
        println!("sent u{}: bits {}", j + 1, strings.join(""));
    }
    for (k, sample) in y.iter().enumerate() {
        println!("received f{}: {:+.6}{:+.6}i", k + 1, sample.re, sample.im);
    }
    print_trace(&trace);
    print_final(&result, &frame);
    Ok(())
}

fn first_decoder(config: &SimConfig) -> Result<(String, DecoderConfig)> {
    match config.detectors.first() {
        Some(DetectorSpec::Decoder { label, config }) => Ok((label.clone(), config.clone())),
        Some(DetectorSpec::OracleMl { .. }) => Err(config_error(
            "decode-one dumps message-passing iterations; the first detector is the oracle",
        )),
        None => Err(config_error("the config lists no detectors")),
    }
}

fn parse_hex_frame(text: &str, num_users: usize, bits_per_symbol: u32) -> Result<Vec<Vec<u8>>> {
    let digits_text = text
        .trim()
        .trim_start_matches("0x")
        .trim_start_matches("0X");
    let total_bits = num_users * bits_per_symbol as usize;
    let expected_digits = total_bits.div_ceil(4);
    if digits_text.len() != expected_digits {
        return Err(config_error(format!(
            "frame needs {} bits, so --bits must be exactly {} hex digits, got {}",
            total_bits,
            expected_digits,
            digits_text.len()
        )));
    }
    let mut bits = Vec::with_capacity(expected_digits * 4);
    for c in digits_text.chars() {
        let value = c
            .to_digit(16)
            .ok_or_else(|| config_error(format!("invalid hex digit {c:?} in --bits")))?;
        for shift in (0..4).rev() {
            bits.push(((value >> shift) & 1) as u8);
        }
    }
    let padding = expected_digits * 4 - total_bits;
    if bits[..padding].iter().any(|&b| b != 0) {
        return Err(config_error(format!(
            "--bits encodes more than {total_bits} bits; the leading padding must be zero"
        )));
    }
    Ok(bits[padding..]
        .chunks(bits_per_symbol as usize)
        .map(<[u8]>::to_vec)
        .collect())
}

fn format_message(values: &[f64]) -> String {
    let parts: Vec<String> = values.iter().map(|v| format!("{v:>10.6}")).collect();
    parts.join(" ")
}

fn print_trace(trace: &DecodeTrace) {
    let mut vn_order: Vec<usize> = (0..trace.edges.len()).collect();
    vn_order.sort_by_key(|&e| (trace.edges[e].1, trace.edges[e].0));
    for (t, snapshot) in trace.iterations.iter().enumerate() {
        println!("iteration {}", t + 1);
        for (e, &(k, j)) in trace.edges.iter().enumerate() {
            println!(
                "  f{} -> u{}: {}",
                k + 1,
                j + 1,
                format_message(&snapshot.fn_to_vn[e])
            );
        }
        for &e in &vn_order {
            let (k, j) = trace.edges[e];
            println!(
                "  u{} -> f{}: {}",
                j + 1,
                k + 1,
                format_message(&snapshot.vn_to_fn[e])
            );
        }
        for (j, beliefs) in snapshot.beliefs.iter().enumerate() {
            println!("  beliefs u{}: {}", j + 1, format_message(beliefs));
        }
    }
}

fn print_final(result: &DecodeResult, sent: &[Vec<u8>]) {
    println!("final");
    let mut bit_errors = 0u32;
    for j in 0..result.hard_bits.len() {
        let bits: Vec<String> = result.hard_bits[j].iter().map(u8::to_string).collect();
        let llrs: Vec<String> = result.llr[j].iter().map(|v| format!("{v:+.4}")).collect();
        bit_errors += sent[j]
            .iter()
            .zip(result.hard_bits[j].iter())
            .filter(|(a, b)| a != b)
            .count() as u32;
        println!(
            "  u{}: symbol {} bits {} llr [{}]",
            j + 1,
            result.hard_symbols[j] + 1,
            bits.join(""),
            llrs.join(", ")
        );
    }
    println!(
        "bit errors: {} of {}",
        bit_errors,
        sent.iter().map(Vec::len).sum::<usize>()
    );
    println!(
        "counters: fn_multiplies={} fn_combinations={} max_ops={} vn_multiplies={} iterations={}",
        result.counters.fn_multiplies,
        result.counters.fn_combinations,
        result.counters.max_ops,
        result.counters.vn_multiplies,
        result.counters.iterations
    );
}
