//! Codebook files, sweep configurations, and result persistence.
//!
//! All structured documents are JSON with explicit field names; unknown
//! fields are errors, not warnings, so typos in experiment definitions fail
//! loudly before anything runs. Codebook files carry K, J, M, d_v, d_f, the
//! binary mapping matrix F, and per-user K×M codewords as [re, im] pairs.
//! Sweep results persist as CSV with a fixed column order plus an optional
//! plot-data JSON of per-decoder (snr_db, ber) series.
//!
//! # Example
//!
//! ```
//! use scma_core::fileio::parse_snr_axis;
//!
//! assert_eq!(parse_snr_axis("0:4:12").unwrap(), vec![0.0, 4.0, 8.0, 12.0]);
//! ```

use std::fmt::Write as _;
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::codebook::CodebookSet;
use crate::decoder::{DecoderConfig, DmpaParams, MaxStarMode, PmSelection, Schedule, Variant};
use crate::error::{Error, Result};
use crate::graph::FactorGraph;
use crate::link::{BitMapping, ChannelModel};
use crate::sim::{CodebookSource, DetectorSpec, SimConfig, SweepResult, SweepRow};

/// The exact CSV column header of sweep results.
pub const CSV_HEADER: &str =
    "snr_db,decoder,frames,bits,bit_errors,ber,symbol_errors,ser,avg_fn_multiplies,avg_iterations,wall_ms";

const CSV_COMMENT: &str = "# Eb/N0 per user in dB with E_avg = (1/M) sum_m ||x_j^m||^2; \
                           ber = bit_errors / bits";

fn io_error(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.display().to_string(),
        source,
    }
}

fn read_file(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| io_error(path, e))
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|e| io_error(path, e))
}

// ---------------------------------------------------------------------------
// Codebook files
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCodebookFile {
    #[serde(rename = "K")]
    num_resources: usize,
    #[serde(rename = "J")]
    num_users: usize,
    #[serde(rename = "M")]
    size: usize,
    d_v: usize,
    d_f: usize,
    #[serde(rename = "F")]
    mapping: Vec<Vec<u8>>,
    codebooks: Vec<Vec<Vec<[f64; 2]>>>,
}

/// Serializes a codebook set to its JSON document.
pub fn codebook_to_string(cbs: &CodebookSet) -> String {
    let raw = RawCodebookFile {
        num_resources: cbs.num_resources(),
        num_users: cbs.num_users(),
        size: cbs.size(),
        d_v: cbs.graph().var_degree(),
        d_f: cbs.graph().fn_degree(),
        mapping: cbs.graph().rows().to_vec(),
        codebooks: (0..cbs.num_users())
            .map(|j| {
                (0..cbs.num_resources())
                    .map(|k| {
                        (0..cbs.size())
                            .map(|m| {
                                let z = cbs.component(k, j, m);
                                [z.re, z.im]
                            })
                            .collect()
                    })
                    .collect()
            })
            .collect(),
    };
    serde_json::to_string_pretty(&raw).expect("codebook document serializes")
}

/// Writes a codebook set to `path`.
pub fn save_codebook(path: &Path, cbs: &CodebookSet) -> Result<()> {
    let mut text = codebook_to_string(cbs);
    text.push('\n');
    write_file(path, &text)
}

/// Parses a codebook document, validating shape, degrees, and support.
pub fn codebook_from_string(text: &str) -> Result<CodebookSet> {
    let raw: RawCodebookFile = serde_json::from_str(text)
        .map_err(|e| Error::Config(format!("malformed codebook file: {e}")))?;
    if raw.mapping.len() != raw.num_resources
        || raw.mapping.iter().any(|row| row.len() != raw.num_users)
    {
        return Err(Error::Config(format!(
            "mapping matrix F must be {}x{}",
            raw.num_resources, raw.num_users
        )));
    }
    let graph = FactorGraph::from_rows(raw.mapping)?;
    if graph.var_degree() != raw.d_v {
        return Err(Error::Config(format!(
            "declared d_v = {} but F has column weight {}",
            raw.d_v,
            graph.var_degree()
        )));
    }
    if graph.fn_degree() != raw.d_f {
        return Err(Error::Config(format!(
            "declared d_f = {} but F has row weight {}",
            raw.d_f,
            graph.fn_degree()
        )));
    }
    let codebooks: Vec<Vec<Vec<Complex64>>> = raw
        .codebooks
        .into_iter()
        .map(|user| {
            user.into_iter()
                .map(|row| row.into_iter().map(|[re, im]| Complex64::new(re, im)).collect())
                .collect()
        })
        .collect();
    CodebookSet::from_parts(graph, raw.size, codebooks)
}

/// Reads a codebook set from `path`.
pub fn load_codebook(path: &Path) -> Result<CodebookSet> {
    codebook_from_string(&read_file(path)?)
}

// ---------------------------------------------------------------------------
// Sweep configuration
// ---------------------------------------------------------------------------

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSimConfig {
    codebook: Option<String>,
    channel: String,
    snr_db: RawSnrAxis,
    frames: u64,
    decoders: Vec<RawDetector>,
    seed: u64,
    min_bit_errors: Option<u64>,
    mapping: Option<String>,
    out_csv: Option<String>,
    out_plot: Option<String>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RawSnrAxis {
    List(Vec<f64>),
    Range(String),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDetector {
    variant: String,
    label: Option<String>,
    iterations: Option<usize>,
    schedule: Option<String>,
    max_star: Option<RawMaxStar>,
    pm_iterations: Option<usize>,
    pm_fixed_users: Option<usize>,
    pm_selection: Option<RawPmSelection>,
    eml_candidates: Option<usize>,
    grid_step: Option<f64>,
    grid_extent: Option<f64>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RawMaxStar {
    Named(String),
    Lut { lut: u32 },
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RawPmSelection {
    Named(String),
    Random { random: u64 },
}

/// Parses an `start:step:stop` range or returns a single-value axis.
pub fn parse_snr_axis(text: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = text.split(':').collect();
    let parse = |s: &str| -> Result<f64> {
        s.trim()
            .parse::<f64>()
            .map_err(|_| Error::Config(format!("invalid SNR value \"{s}\"")))
    };
    match parts.as_slice() {
        [single] => Ok(vec![parse(single)?]),
        [start, step, stop] => {
            let (start, step, stop) = (parse(start)?, parse(step)?, parse(stop)?);
            if !(step > 0.0) {
                return Err(Error::Config(format!(
                    "SNR range step must be positive, got {step}"
                )));
            }
            if stop < start {
                return Err(Error::Config(format!(
                    "SNR range stop {stop} is below start {start}"
                )));
            }
            let mut axis = Vec::new();
            let mut index = 0u32;
            loop {
                let value = start + f64::from(index) * step;
                if value > stop + 1e-9 {
                    break;
                }
                axis.push(value);
                index += 1;
            }
            Ok(axis)
        }
        _ => Err(Error::Config(format!(
            "SNR range must be start:step:stop, got \"{text}\""
        ))),
    }
}

fn parse_channel(text: &str) -> Result<ChannelModel> {
    match text {
        "awgn" => Ok(ChannelModel::Awgn),
        "uplink" => Ok(ChannelModel::RayleighUplink),
        "downlink" => Ok(ChannelModel::RayleighDownlink),
        other => Err(Error::Config(format!(
            "unknown channel \"{other}\" (expected awgn, uplink, or downlink)"
        ))),
    }
}

fn parse_mapping(text: &str) -> Result<BitMapping> {
    match text {
        "natural" => Ok(BitMapping::Natural),
        "gray" => Ok(BitMapping::Gray),
        other => Err(Error::Config(format!(
            "unknown mapping \"{other}\" (expected natural or gray)"
        ))),
    }
}

fn reject_field<T>(field: Option<T>, name: &str, variant: &str) -> Result<()> {
    if field.is_some() {
        return Err(Error::Config(format!(
            "field \"{name}\" does not apply to decoder variant \"{variant}\""
        )));
    }
    Ok(())
}

fn detector_from_raw(raw: RawDetector) -> Result<DetectorSpec> {
    let variant = raw.variant.as_str();
    let label = raw.label.clone().unwrap_or_else(|| variant.to_string());
    if variant == "oracle-ml" {
        reject_field(raw.iterations, "iterations", variant)?;
        reject_field(raw.schedule, "schedule", variant)?;
        reject_field(raw.max_star, "max_star", variant)?;
        reject_field(raw.pm_iterations, "pm_iterations", variant)?;
        reject_field(raw.pm_fixed_users, "pm_fixed_users", variant)?;
        reject_field(raw.pm_selection, "pm_selection", variant)?;
        reject_field(raw.eml_candidates, "eml_candidates", variant)?;
        reject_field(raw.grid_step, "grid_step", variant)?;
        reject_field(raw.grid_extent, "grid_extent", variant)?;
        return Ok(DetectorSpec::OracleMl { label });
    }
    let mut config = match variant {
        "mpa" => DecoderConfig::mpa(),
        "log-mpa" => DecoderConfig::log_mpa(),
        "max-log" => DecoderConfig::max_log(),
        "pm-mpa" => DecoderConfig::pm_mpa(
            DecoderConfig::mpa().iterations / 2,
            3,
        ),
        "eml" => DecoderConfig::eml(2),
        "dmpa" => DecoderConfig::dmpa(),
        other => {
            return Err(Error::Config(format!(
                "unknown decoder variant \"{other}\""
            )))
        }
    };
    if let Some(iterations) = raw.iterations {
        config.iterations = iterations;
        if config.variant == Variant::PmMpa && raw.pm_iterations.is_none() {
            config.pm_iterations = iterations / 2;
        }
    }
    if let Some(schedule) = raw.schedule {
        config.schedule = match schedule.as_str() {
            "flooding" => Schedule::Flooding,
            "serial-vn" => Schedule::SerialVn,
            other => {
                return Err(Error::Config(format!(
                    "unknown schedule \"{other}\" (expected flooding or serial-vn)"
                )))
            }
        };
    }
    match config.variant {
        Variant::LogMpa | Variant::Eml => {
            if let Some(mode) = raw.max_star {
                config.max_star = match mode {
                    RawMaxStar::Named(name) => match name.as_str() {
                        "exact" => MaxStarMode::Exact,
                        "plain-max" => MaxStarMode::PlainMax,
                        other => {
                            return Err(Error::Config(format!(
                                "unknown max_star mode \"{other}\""
                            )))
                        }
                    },
                    RawMaxStar::Lut { lut } => MaxStarMode::Lut { intervals: lut },
                };
            }
        }
        _ => reject_field(raw.max_star, "max_star", variant)?,
    }
    match config.variant {
        Variant::PmMpa => {
            if let Some(t) = raw.pm_iterations {
                config.pm_iterations = t;
            }
            if let Some(u) = raw.pm_fixed_users {
                config.pm_fixed_users = u;
            }
            if let Some(selection) = raw.pm_selection {
                config.pm_selection = match selection {
                    RawPmSelection::Named(name) => match name.as_str() {
                        "reliability" => PmSelection::Reliability,
                        other => {
                            return Err(Error::Config(format!(
                                "unknown pm_selection \"{other}\""
                            )))
                        }
                    },
                    RawPmSelection::Random { random } => PmSelection::Random { seed: random },
                };
            }
        }
        _ => {
            reject_field(raw.pm_iterations, "pm_iterations", variant)?;
            reject_field(raw.pm_fixed_users, "pm_fixed_users", variant)?;
            reject_field(raw.pm_selection, "pm_selection", variant)?;
        }
    }
    match config.variant {
        Variant::Eml => {
            if let Some(m_c) = raw.eml_candidates {
                config.eml_candidates = m_c;
            }
        }
        _ => reject_field(raw.eml_candidates, "eml_candidates", variant)?,
    }
    match config.variant {
        Variant::Dmpa => {
            config.dmpa = DmpaParams {
                grid_step: raw.grid_step.unwrap_or(DmpaParams::default().grid_step),
                grid_extent: raw.grid_extent,
            };
        }
        _ => {
            reject_field(raw.grid_step, "grid_step", variant)?;
            reject_field(raw.grid_extent, "grid_extent", variant)?;
        }
    }
    Ok(DetectorSpec::Decoder { label, config })
}

/// Parses a sweep configuration document.
pub fn sim_config_from_string(text: &str) -> Result<SimConfig> {
    let raw: RawSimConfig = serde_json::from_str(text)
        .map_err(|e| Error::Config(format!("malformed sweep config: {e}")))?;
    let codebook = match raw.codebook.as_deref() {
        None | Some("builtin") => CodebookSource::Builtin,
        Some(path) => CodebookSource::File(path.into()),
    };
    let snr_db = match raw.snr_db {
        RawSnrAxis::List(list) => list,
        RawSnrAxis::Range(text) => parse_snr_axis(&text)?,
    };
    let detectors = raw
        .decoders
        .into_iter()
        .map(detector_from_raw)
        .collect::<Result<Vec<_>>>()?;
    Ok(SimConfig {
        codebook,
        channel: parse_channel(&raw.channel)?,
        snr_db,
        frames: raw.frames,
        detectors,
        seed: raw.seed,
        min_bit_errors: raw.min_bit_errors,
        mapping: raw.mapping.as_deref().map(parse_mapping).transpose()?.unwrap_or(BitMapping::Natural),
        out_csv: raw.out_csv.map(Into::into),
        out_plot: raw.out_plot.map(Into::into),
    })
}

/// Reads a sweep configuration from `path`.
pub fn load_sim_config(path: &Path) -> Result<SimConfig> {
    sim_config_from_string(&read_file(path)?)
}

// ---------------------------------------------------------------------------
// Result persistence
// ---------------------------------------------------------------------------

/// Renders a sweep result as CSV: one comment line, the exact header, one
/// row per (SNR point, decoder).
pub fn sweep_to_csv(result: &SweepResult) -> String {
    let mut out = String::new();
    out.push_str(CSV_COMMENT);
    out.push('\n');
    out.push_str(CSV_HEADER);
    out.push('\n');
    for row in &result.rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{}",
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
        )
        .expect("writing to a string cannot fail");
    }
    out
}

/// Parses CSV produced by [`sweep_to_csv`] back into rows.
pub fn sweep_from_csv(text: &str) -> Result<SweepResult> {
    let mut lines = text.lines().filter(|line| !line.starts_with('#'));
    match lines.next() {
        Some(header) if header == CSV_HEADER => {}
        other => {
            return Err(Error::Config(format!(
                "unexpected CSV header {:?}",
                other.unwrap_or("<empty>")
            )))
        }
    }
    let mut rows = Vec::new();
    for (number, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 11 {
            return Err(Error::Config(format!(
                "CSV row {} has {} fields, expected 11",
                number + 1,
                fields.len()
            )));
        }
        let parse_f = |s: &str| -> Result<f64> {
            s.parse()
                .map_err(|_| Error::Config(format!("invalid number \"{s}\" in CSV row {}", number + 1)))
        };
        let parse_u = |s: &str| -> Result<u64> {
            s.parse()
                .map_err(|_| Error::Config(format!("invalid count \"{s}\" in CSV row {}", number + 1)))
        };
        rows.push(SweepRow {
            snr_db: parse_f(fields[0])?,
            decoder: fields[1].to_string(),
            frames: parse_u(fields[2])?,
            bits: parse_u(fields[3])?,
            bit_errors: parse_u(fields[4])?,
            ber: parse_f(fields[5])?,
            symbol_errors: parse_u(fields[6])?,
            ser: parse_f(fields[7])?,
            avg_fn_multiplies: parse_f(fields[8])?,
            avg_iterations: parse_f(fields[9])?,
            wall_ms: parse_u(fields[10])?,
        });
    }
    Ok(SweepResult { rows })
}

#[derive(Serialize)]
struct PlotSeries<'a> {
    decoder: &'a str,
    points: Vec<[f64; 2]>,
}

/// Renders per-decoder (snr_db, ber) series as a plot-data JSON document.
pub fn sweep_to_plot_json(result: &SweepResult) -> String {
    let mut order: Vec<&str> = Vec::new();
    for row in &result.rows {
        if !order.contains(&row.decoder.as_str()) {
            order.push(&row.decoder);
        }
    }
    let series: Vec<PlotSeries> = order
        .into_iter()
        .map(|label| PlotSeries {
            decoder: label,
            points: result
                .rows
                .iter()
                .filter(|row| row.decoder == label)
                .map(|row| [row.snr_db, row.ber])
                .collect(),
        })
        .collect();
    serde_json::to_string_pretty(&serde_json::json!({ "series": series }))
        .expect("plot document serializes")
}

/// Writes the CSV and optional plot-data files for a sweep result.
pub fn emit_outputs(
    result: &SweepResult,
    out_csv: Option<&Path>,
    out_plot: Option<&Path>,
) -> Result<()> {
    if let Some(path) = out_csv {
        write_file(path, &sweep_to_csv(result))?;
    }
    if let Some(path) = out_plot {
        let mut text = sweep_to_plot_json(result);
        text.push('\n');
        write_file(path, &text)?;
    }
    Ok(())
}
