//! Monte Carlo BER/SER sweeps with seeded reproducibility.
//!
//! A sweep walks an Eb/N0 axis; at each point it draws frames, encodes,
//! realizes the channel, transmits, and runs every configured detector on
//! the identical (y, H) realization. Every random draw comes from a stream
//! keyed by (seed, frame index, component), so results are bit-identical
//! whether frames run serially or in parallel, and detectors always see
//! common randomness.
//!
//! Frames are evaluated in fixed-size chunks; the optional early-stopping
//! rule checks between chunks only, which keeps the stopping point
//! deterministic under the `parallel` feature as well.
//!
//! # Example
//!
//! ```
//! use scma_core::decoder::DecoderConfig;
//! use scma_core::link::{BitMapping, ChannelModel};
//! use scma_core::sim::{run_sweep, CodebookSource, DetectorSpec, SimConfig};
//!
//! let config = SimConfig {
//!     codebook: CodebookSource::Builtin,
//!     channel: ChannelModel::Awgn,
//!     snr_db: vec![16.0],
//!     frames: 20,
//!     detectors: vec![DetectorSpec::decoder("mpa", DecoderConfig::mpa())],
//!     seed: 7,
//!     min_bit_errors: None,
//!     mapping: BitMapping::Natural,
//!     out_csv: None,
//!     out_plot: None,
//! };
//! let result = run_sweep(&config).unwrap();
//! assert_eq!(result.rows.len(), 1);
//! assert_eq!(result.rows[0].bits, 20 * 6 * 2);
//! ```

use std::path::PathBuf;
use std::time::Instant;

use serde::Serialize;

use crate::codebook::{CodebookSet, KpiReport};
use crate::decoder::{decode_with_rng, DecoderConfig};
use crate::error::{Error, Result};
use crate::fileio;
use crate::link::{self, BitMapping, ChannelModel};
use crate::oracle;
use crate::rng::{derive_seed, frame_rng, StreamTag};

/// Frames evaluated between early-stopping checks.
const CHUNK_FRAMES: u64 = 128;

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

/// Where the codebook set comes from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CodebookSource {
    /// The built-in 4x6 star-QAM system.
    Builtin,
    /// A codebook file on disk.
    File(PathBuf),
}

/// One detector entry in a sweep.
#[derive(Debug, Clone, PartialEq)]
pub enum DetectorSpec {
    /// A message-passing detector.
    Decoder {
        /// Row label, unique within the sweep.
        label: String,
        /// Full decoder parameterization.
        config: DecoderConfig,
    },
    /// The exhaustive enumeration oracle: bits decided by the exact bit
    /// LLRs, symbols by the exact marginals, so its BER and SER rows are
    /// the optimum-receiver floors.
    OracleMl {
        /// Row label, unique within the sweep.
        label: String,
    },
}

impl DetectorSpec {
    /// A labeled message-passing detector.
    pub fn decoder(label: impl Into<String>, config: DecoderConfig) -> Self {
        DetectorSpec::Decoder {
            label: label.into(),
            config,
        }
    }

    /// The labeled oracle detector.
    pub fn oracle(label: impl Into<String>) -> Self {
        DetectorSpec::OracleMl {
            label: label.into(),
        }
    }

    /// The row label.
    pub fn label(&self) -> &str {
        match self {
            DetectorSpec::Decoder { label, .. } => label,
            DetectorSpec::OracleMl { label } => label,
        }
    }
}

/// A resolved sweep configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    /// Codebook source.
    pub codebook: CodebookSource,
    /// Channel model applied to every frame.
    pub channel: ChannelModel,
    /// Eb/N0 axis in dB.
    pub snr_db: Vec<f64>,
    /// Frames per SNR point.
    pub frames: u64,
    /// Detectors run on each frame.
    pub detectors: Vec<DetectorSpec>,
    /// Master seed for all streams.
    pub seed: u64,
    /// Early-stopping threshold: a point ends once every detector has at
    /// least this many bit errors.
    pub min_bit_errors: Option<u64>,
    /// Bit-to-symbol mapping.
    pub mapping: BitMapping,
    /// CSV destination, if any.
    pub out_csv: Option<PathBuf>,
    /// Plot-data destination, if any.
    pub out_plot: Option<PathBuf>,
}

impl SimConfig {
    /// Validates the sweep invariants and every detector against the
    /// codebook set, before any simulation starts.
    pub fn validate(&self, cbs: &CodebookSet) -> Result<()> {
        if self.frames == 0 {
            return Err(Error::Config("frames must be at least 1".into()));
        }
        if self.snr_db.is_empty() {
            return Err(Error::Config("the SNR axis must be nonempty".into()));
        }
        if self.snr_db.iter().any(|s| !s.is_finite()) {
            return Err(Error::Config("SNR points must be finite".into()));
        }
        if self.detectors.is_empty() {
            return Err(Error::Config(
                "at least one decoder must be configured".into(),
            ));
        }
        if let Some(0) = self.min_bit_errors {
            return Err(Error::Config(
                "min_bit_errors must be at least 1 when set".into(),
            ));
        }
        for (a, spec) in self.detectors.iter().enumerate() {
            for other in &self.detectors[a + 1..] {
                if spec.label() == other.label() {
                    return Err(Error::Config(format!(
                        "duplicate decoder label \"{}\"",
                        spec.label()
                    )));
                }
            }
            match spec {
                DetectorSpec::Decoder { config, .. } => {
                    let mut cfg = config.clone();
                    cfg.mapping = self.mapping;
                    cfg.validate(cbs)?;
                }
                DetectorSpec::OracleMl { .. } => {
                    let required = (cbs.size() as u128)
                        .checked_pow(cbs.num_users() as u32)
                        .unwrap_or(u128::MAX);
                    if required > oracle::DEFAULT_BUDGET {
                        return Err(Error::BudgetExceeded {
                            required,
                            budget: oracle::DEFAULT_BUDGET,
                        });
                    }
                }
            }
        }
        Ok(())
    }

    /// Loads the configured codebook set.
    pub fn resolve_codebook(&self) -> Result<CodebookSet> {
        match &self.codebook {
            CodebookSource::Builtin => Ok(CodebookSet::star_qam_4x6()),
            CodebookSource::File(path) => fileio::load_codebook(path),
        }
    }
}

// ---------------------------------------------------------------------------
// Results
// ---------------------------------------------------------------------------

/// One (SNR point, detector) accumulation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    /// Eb/N0 in dB.
    pub snr_db: f64,
    /// Detector label.
    pub decoder: String,
    /// Frames evaluated (may stop early).
    pub frames: u64,
    /// Information bits evaluated: frames x J x B.
    pub bits: u64,
    /// Bit errors.
    pub bit_errors: u64,
    /// bit_errors / bits.
    pub ber: f64,
    /// Symbol errors.
    pub symbol_errors: u64,
    /// symbol_errors / (frames x J).
    pub ser: f64,
    /// Function-node multiplications per frame.
    pub avg_fn_multiplies: f64,
    /// Iterations per frame.
    pub avg_iterations: f64,
    /// Wall-clock decode time in milliseconds (not reproducible).
    pub wall_ms: u64,
}

/// All rows of a sweep, SNR-major in detector order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    /// Accumulated rows.
    pub rows: Vec<SweepRow>,
}

/// Pairwise hard-decision agreement at one SNR point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AgreementMatrix {
    /// Eb/N0 in dB.
    pub snr_db: f64,
    /// Detector labels, indexing the rate matrix.
    pub labels: Vec<String>,
    /// rates[a][b]: fraction of hard bits on which detectors a and b agree.
    pub rates: Vec<Vec<f64>>,
}

// ---------------------------------------------------------------------------
// Frame evaluation
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Default)]
struct FrameEval {
    bit_errors: u64,
    symbol_errors: u64,
    fn_multiplies: u64,
    iterations: u64,
    wall_nanos: u128,
    hard_bits: Vec<u8>,
}

#[derive(Debug, Clone, Default)]
struct Accum {
    bit_errors: u64,
    symbol_errors: u64,
    fn_multiplies: u128,
    iterations: u128,
    wall_nanos: u128,
}

struct Point<'a> {
    cbs: &'a CodebookSet,
    config: &'a SimConfig,
    n0: f64,
    collect_bits: bool,
}

impl Point<'_> {
    fn eval_frame(&self, frame_index: u64) -> Result<Vec<FrameEval>> {
        let cbs = self.cbs;
        let sim = self.config;
        let graph = cbs.graph();
        let num_users = graph.num_users();
        let bits_per_symbol = cbs
            .bits_per_symbol()
            .ok_or_else(|| Error::Config("codebook size must be a power of two".into()))?;
        let mut bit_rng = frame_rng(sim.seed, frame_index, StreamTag::Bits);
        let frame = link::random_frame_bits(num_users, bits_per_symbol, &mut bit_rng);
        let sent_symbols: Vec<usize> = frame
            .iter()
            .map(|bits| link::bits_to_symbol(bits, sim.mapping).map(|m| m - 1))
            .collect::<Result<_>>()?;
        let x = link::encode(&frame, cbs, sim.mapping)?;
        let mut channel_rng = frame_rng(sim.seed, frame_index, StreamTag::Channel);
        let channel = link::realize_channel(sim.channel, graph, self.n0, &mut channel_rng)?;
        let mut noise_rng = frame_rng(sim.seed, frame_index, StreamTag::Noise);
        let y = link::transmit(&x, graph, &channel, &mut noise_rng)?;

        let mut evals = Vec::with_capacity(sim.detectors.len());
        for (det_index, spec) in sim.detectors.iter().enumerate() {
            let started = Instant::now();
            let (hard_symbols, hard_bits, fn_multiplies, iterations) = match spec {
                DetectorSpec::Decoder { config, .. } => {
                    let mut cfg = config.clone();
                    cfg.mapping = sim.mapping;
                    let mut decoder_rng = frame_rng(
                        derive_seed(sim.seed, det_index as u64),
                        frame_index,
                        StreamTag::Decoder,
                    );
                    let result = decode_with_rng(&y, &channel, cbs, &cfg, &mut decoder_rng)?;
                    let flat: Vec<u8> = result.hard_bits.iter().flatten().copied().collect();
                    (
                        result.hard_symbols,
                        flat,
                        result.counters.fn_multiplies,
                        result.counters.iterations,
                    )
                }
                DetectorSpec::OracleMl { .. } => {
                    let jp = oracle::joint_posterior(&y, &channel, cbs)?;
                    let mut symbols = Vec::with_capacity(num_users);
                    let mut flat = Vec::with_capacity(num_users * bits_per_symbol as usize);
                    for j in 0..num_users {
                        let marginal = oracle::marginal_posterior(&jp, j)?;
                        let mut best = 0usize;
                        for m in 1..marginal.len() {
                            if marginal[m] > marginal[best] {
                                best = m;
                            }
                        }
                        symbols.push(best);
                        let llr = oracle::exact_bit_llr(&jp, j, sim.mapping)?;
                        flat.extend(llr.iter().map(|&v| u8::from(v < 0.0)));
                    }
                    (symbols, flat, 0, 0)
                }
            };
            let wall_nanos = started.elapsed().as_nanos();
            let mut eval = FrameEval {
                fn_multiplies,
                iterations,
                wall_nanos,
                ..FrameEval::default()
            };
            for (j, &sym) in hard_symbols.iter().enumerate() {
                if sym != sent_symbols[j] {
                    eval.symbol_errors += 1;
                }
            }
            let sent_bits: Vec<u8> = frame.iter().flatten().copied().collect();
            eval.bit_errors = sent_bits
                .iter()
                .zip(hard_bits.iter())
                .filter(|(a, b)| a != b)
                .count() as u64;
            if self.collect_bits {
                eval.hard_bits = hard_bits;
            }
            evals.push(eval);
        }
        Ok(evals)
    }

    fn eval_chunk(&self, start: u64, count: u64) -> Result<Vec<Vec<FrameEval>>> {
        #[cfg(feature = "parallel")]
        {
            use rayon::prelude::*;
            (start..start + count)
                .into_par_iter()
                .map(|f| self.eval_frame(f))
                .collect()
        }
        #[cfg(not(feature = "parallel"))]
        {
            (start..start + count).map(|f| self.eval_frame(f)).collect()
        }
    }
}

fn run_point(
    cbs: &CodebookSet,
    config: &SimConfig,
    snr_db: f64,
    collect_agreement: bool,
) -> Result<(Vec<SweepRow>, Option<AgreementMatrix>)> {
    let bits_per_symbol = cbs
        .bits_per_symbol()
        .ok_or_else(|| Error::Config("codebook size must be a power of two".into()))?;
    let n0 = link::n0_from_ebn0_db(snr_db, cbs.avg_symbol_energy(), bits_per_symbol);
    let point = Point {
        cbs,
        config,
        n0,
        collect_bits: collect_agreement,
    };
    let detectors = config.detectors.len();
    let mut accums = vec![Accum::default(); detectors];
    let mut agree = vec![vec![0u64; detectors]; detectors];
    let mut agree_total = 0u64;
    let mut done = 0u64;
    while done < config.frames {
        let count = CHUNK_FRAMES.min(config.frames - done);
        let chunk = point.eval_chunk(done, count)?;
        for frame_evals in &chunk {
            for (accum, eval) in accums.iter_mut().zip(frame_evals.iter()) {
                accum.bit_errors += eval.bit_errors;
                accum.symbol_errors += eval.symbol_errors;
                accum.fn_multiplies += u128::from(eval.fn_multiplies);
                accum.iterations += u128::from(eval.iterations);
                accum.wall_nanos += eval.wall_nanos;
            }
            if collect_agreement {
                let frame_bits = frame_evals[0].hard_bits.len() as u64;
                agree_total += frame_bits;
                for a in 0..detectors {
                    for b in a + 1..detectors {
                        agree[a][b] += frame_evals[a]
                            .hard_bits
                            .iter()
                            .zip(frame_evals[b].hard_bits.iter())
                            .filter(|(x, z)| x == z)
                            .count() as u64;
                    }
                }
            }
        }
        done += count;
        if let Some(min_errors) = config.min_bit_errors {
            if accums.iter().all(|a| a.bit_errors >= min_errors) {
                break;
            }
        }
    }

    let num_users = cbs.num_users() as u64;
    let bits = done * num_users * u64::from(bits_per_symbol);
    let symbols = done * num_users;
    let rows = config
        .detectors
        .iter()
        .zip(accums.iter())
        .map(|(spec, accum)| SweepRow {
            snr_db,
            decoder: spec.label().to_string(),
            frames: done,
            bits,
            bit_errors: accum.bit_errors,
            ber: accum.bit_errors as f64 / bits as f64,
            symbol_errors: accum.symbol_errors,
            ser: accum.symbol_errors as f64 / symbols as f64,
            avg_fn_multiplies: accum.fn_multiplies as f64 / done as f64,
            avg_iterations: accum.iterations as f64 / done as f64,
            wall_ms: (accum.wall_nanos / 1_000_000) as u64,
        })
        .collect();

    let matrix = collect_agreement.then(|| {
        let mut rates = vec![vec![1.0f64; detectors]; detectors];
        for a in 0..detectors {
            for b in a + 1..detectors {
                let rate = if agree_total == 0 {
                    1.0
                } else {
                    agree[a][b] as f64 / agree_total as f64
                };
                rates[a][b] = rate;
                rates[b][a] = rate;
            }
        }
        AgreementMatrix {
            snr_db,
            labels: config
                .detectors
                .iter()
                .map(|d| d.label().to_string())
                .collect(),
            rates,
        }
    });
    Ok((rows, matrix))
}

// ---------------------------------------------------------------------------
// Public operations
// ---------------------------------------------------------------------------

/// Runs the configured Monte Carlo sweep.
///
/// For each SNR point and frame: draw bits, encode, realize the channel,
/// transmit, and decode with every configured detector on the identical
/// (y, H) realization. Output files are not written here; see
/// [`fileio::emit_outputs`].
pub fn run_sweep(config: &SimConfig) -> Result<SweepResult> {
    let cbs = config.resolve_codebook()?;
    config.validate(&cbs)?;
    let mut rows = Vec::with_capacity(config.snr_db.len() * config.detectors.len());
    for &snr_db in &config.snr_db {
        let (point_rows, _) = run_point(&cbs, config, snr_db, false)?;
        rows.extend(point_rows);
    }
    Ok(SweepResult { rows })
}

/// Runs the sweep with at least two detectors and reports pairwise
/// hard-decision agreement rates per SNR point alongside the rows.
pub fn compare_decoders(config: &SimConfig) -> Result<(SweepResult, Vec<AgreementMatrix>)> {
    if config.detectors.len() < 2 {
        return Err(Error::Config(
            "compare requires at least two decoders".into(),
        ));
    }
    let cbs = config.resolve_codebook()?;
    config.validate(&cbs)?;
    let mut rows = Vec::new();
    let mut matrices = Vec::with_capacity(config.snr_db.len());
    for &snr_db in &config.snr_db {
        let (point_rows, matrix) = run_point(&cbs, config, snr_db, true)?;
        rows.extend(point_rows);
        matrices.push(matrix.expect("agreement requested"));
    }
    Ok((SweepResult { rows }, matrices))
}

/// KPI rows for every user codebook, preceded by a mother-constellation row
/// when one is supplied.
pub fn kpi_report(
    cbs: &CodebookSet,
    mother: Option<&crate::codebook::MotherConstellation>,
) -> Result<Vec<(String, KpiReport)>> {
    let mut rows = Vec::with_capacity(cbs.num_users() + 1);
    if let Some(mc) = mother {
        rows.push(("mother".to_string(), mc.kpi()?));
    }
    for j in 0..cbs.num_users() {
        rows.push((format!("user {}", j + 1), cbs.user_kpi(j)?));
    }
    Ok(rows)
}
