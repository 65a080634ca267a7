//! Browser bindings for the SCMA link laboratory.
//!
//! Three exports drive the static demo page: [`codebook_overview`] builds
//! a star-QAM codebook set and reports its geometry and KPIs,
//! [`decode_frame_trace`] decodes one frame and returns every
//! message-passing iteration, and [`ber_mini_sweep`] runs a small seeded
//! BER sweep. Each returns a JSON string so the page needs no framework,
//! and errors come back as thrown strings.
//!
//! # Example
//!
//! ```
//! let json = scma_wasm::codebook_overview(3.0, 1.0 / 0.62).unwrap();
//! let overview: serde_json::Value = serde_json::from_str(&json).unwrap();
//! assert_eq!(overview["factor_matrix"].as_array().unwrap().len(), 4);
//! ```

use num_complex::Complex64;
use serde::Serialize;
use wasm_bindgen::prelude::wasm_bindgen;

use scma_core::codebook::{
    assemble_codebooks, phase_operators, star_qam_mother, CodebookSet, KpiReport,
};
use scma_core::decoder::{decode, decode_traced, DecoderConfig};
use scma_core::graph::FactorGraph;
use scma_core::link::{self, BitMapping, ChannelModel};
use scma_core::rng::{frame_rng, StreamTag};

/// Frame budget guard for [`ber_mini_sweep`]; keeps the tab responsive.
const MAX_SWEEP_FRAMES: u32 = 5000;
/// Point budget guard for [`ber_mini_sweep`].
const MAX_SWEEP_POINTS: u32 = 25;

fn pair(z: Complex64) -> [f64; 2] {
    [z.re, z.im]
}

#[derive(Serialize)]
struct KpiJson {
    d_e_min: f64,
    tau_e: usize,
    tau_e_avg: f64,
    d_p_min: f64,
    tau_p: usize,
    diversity: usize,
}

impl From<KpiReport> for KpiJson {
    fn from(kpi: KpiReport) -> Self {
        KpiJson {
            d_e_min: kpi.d_e_min,
            tau_e: kpi.tau_e,
            tau_e_avg: kpi.tau_e_avg,
            d_p_min: kpi.d_p_min,
            tau_p: kpi.tau_p,
            diversity: kpi.diversity,
        }
    }
}

#[derive(Serialize)]
struct UserJson {
    resources: Vec<usize>,
    codewords: Vec<Vec<[f64; 2]>>,
    kpi: KpiJson,
}

#[derive(Serialize)]
struct OverviewJson {
    factor_matrix: Vec<Vec<u8>>,
    r1: f64,
    r2: f64,
    mother_points: Vec<Vec<[f64; 2]>>,
    mother_kpi: KpiJson,
    users: Vec<UserJson>,
}

/// Builds the 4x6 star-QAM codebook set for ring parameters `alpha` and
/// `beta` and returns its geometry and KPI table as JSON.
#[wasm_bindgen]
pub fn codebook_overview(alpha: f64, beta: f64) -> Result<String, String> {
    let mother = star_qam_mother(alpha, beta).map_err(|e| e.to_string())?;
    let params = mother.star_qam_params().expect("star-QAM mother");
    let graph = FactorGraph::regular(4, 6, 2).map_err(|e| e.to_string())?;
    let operators = phase_operators(6).map_err(|e| e.to_string())?;
    let cbs = assemble_codebooks(&graph, &mother, &operators).map_err(|e| e.to_string())?;
    let users = (0..cbs.num_users())
        .map(|j| {
            Ok(UserJson {
                resources: cbs.graph().resources_of_user(j).to_vec(),
                codewords: (0..cbs.size())
                    .map(|m| cbs.codeword(j, m).into_iter().map(pair).collect())
                    .collect(),
                kpi: cbs.user_kpi(j).map_err(|e| e.to_string())?.into(),
            })
        })
        .collect::<Result<Vec<_>, String>>()?;
    let overview = OverviewJson {
        factor_matrix: cbs.graph().rows().to_vec(),
        r1: params.r1,
        r2: params.r2,
        mother_points: mother
            .columns()
            .into_iter()
            .map(|col| col.into_iter().map(pair).collect())
            .collect(),
        mother_kpi: mother.kpi().map_err(|e| e.to_string())?.into(),
        users,
    };
    Ok(serde_json::to_string(&overview).expect("overview serializes"))
}

#[derive(Serialize)]
struct IterationJson {
    fn_to_vn: Vec<Vec<f64>>,
    vn_to_fn: Vec<Vec<f64>>,
    beliefs: Vec<Vec<f64>>,
}

#[derive(Serialize)]
struct CountersJson {
    fn_multiplies: u64,
    fn_combinations: u64,
    max_ops: u64,
    vn_multiplies: u64,
    iterations: u64,
}

#[derive(Serialize)]
struct FinalJson {
    symbols: Vec<usize>,
    bits: Vec<Vec<u8>>,
    llr: Vec<Vec<f64>>,
    bit_errors: u32,
    counters: CountersJson,
}

#[derive(Serialize)]
struct TraceJson {
    variant: String,
    n0: f64,
    sent: Vec<Vec<u8>>,
    received: Vec<[f64; 2]>,
    edges: Vec<[usize; 2]>,
    iterations: Vec<IterationJson>,
    decision: FinalJson,
}

fn decoder_for(variant: &str) -> Result<DecoderConfig, String> {
    Ok(match variant {
        "mpa" => DecoderConfig::mpa(),
        "log-mpa" => DecoderConfig::log_mpa(),
        "max-log" => DecoderConfig::max_log(),
        "pm-mpa" => DecoderConfig::pm_mpa(DecoderConfig::mpa().iterations / 2, 3),
        "eml" => DecoderConfig::eml(2),
        "dmpa" => DecoderConfig::dmpa(),
        other => return Err(format!("unknown decoder variant {other:?}")),
    })
}

fn parse_bits(text: &str, num_users: usize, bits_per_symbol: u32) -> Result<Vec<Vec<u8>>, String> {
    let total = num_users * bits_per_symbol as usize;
    let cleaned: Vec<u8> = text
        .chars()
        .filter(|c| !c.is_whitespace())
        .map(|c| match c {
            '0' => Ok(0u8),
            '1' => Ok(1u8),
            other => Err(format!("bit string must be 0s and 1s, got {other:?}")),
        })
        .collect::<Result<_, _>>()?;
    if cleaned.len() != total {
        return Err(format!(
            "frame needs exactly {total} bits, got {}",
            cleaned.len()
        ));
    }
    Ok(cleaned
        .chunks(bits_per_symbol as usize)
        .map(<[u8]>::to_vec)
        .collect())
}

/// Decodes one frame of the built-in 4x6 system over a seeded Rayleigh
/// uplink and returns the full message-passing trace as JSON.
///
/// `bits` is one flat string of `0`/`1` characters, user 1 first
/// (whitespace ignored), `variant` is one of `mpa`, `log-mpa`, `max-log`,
/// `pm-mpa`, `eml` or `dmpa`.
#[wasm_bindgen]
pub fn decode_frame_trace(
    bits: &str,
    snr_db: f64,
    seed: u32,
    variant: &str,
) -> Result<String, String> {
    let cbs = CodebookSet::star_qam_4x6();
    let bits_per_symbol = cbs.bits_per_symbol().expect("M is a power of two");
    let frame = parse_bits(bits, cbs.num_users(), bits_per_symbol)?;
    let config = decoder_for(variant)?;
    let n0 = link::n0_from_ebn0_db(snr_db, cbs.avg_symbol_energy(), bits_per_symbol);

    let seed = u64::from(seed);
    let mut channel_rng = frame_rng(seed, 0, StreamTag::Channel);
    let channel =
        link::realize_channel(ChannelModel::RayleighUplink, cbs.graph(), n0, &mut channel_rng)
            .map_err(|e| e.to_string())?;
    let x = link::encode(&frame, &cbs, BitMapping::Natural).map_err(|e| e.to_string())?;
    let mut noise_rng = frame_rng(seed, 0, StreamTag::Noise);
    let y = link::transmit(&x, cbs.graph(), &channel, &mut noise_rng)
        .map_err(|e| e.to_string())?;
    let (result, trace) = decode_traced(&y, &channel, &cbs, &config).map_err(|e| e.to_string())?;

    let bit_errors = frame
        .iter()
        .flatten()
        .zip(result.hard_bits.iter().flatten())
        .filter(|(a, b)| a != b)
        .count() as u32;
    let json = TraceJson {
        variant: variant.to_string(),
        n0,
        sent: frame,
        received: y.into_iter().map(pair).collect(),
        edges: trace.edges.iter().map(|&(k, j)| [k, j]).collect(),
        iterations: trace
            .iterations
            .into_iter()
            .map(|it| IterationJson {
                fn_to_vn: it.fn_to_vn,
                vn_to_fn: it.vn_to_fn,
                beliefs: it.beliefs,
            })
            .collect(),
        decision: FinalJson {
            symbols: result.hard_symbols.iter().map(|&m| m + 1).collect(),
            bits: result.hard_bits,
            llr: result.llr,
            bit_errors,
            counters: CountersJson {
                fn_multiplies: result.counters.fn_multiplies,
                fn_combinations: result.counters.fn_combinations,
                max_ops: result.counters.max_ops,
                vn_multiplies: result.counters.vn_multiplies,
                iterations: result.counters.iterations,
            },
        },
    };
    Ok(serde_json::to_string(&json).expect("trace serializes"))
}

#[derive(Serialize)]
struct SeriesJson {
    label: String,
    ber: Vec<f64>,
    ser: Vec<f64>,
}

#[derive(Serialize)]
struct SweepJson {
    snr_db: Vec<f64>,
    frames: u32,
    bits_per_point: u64,
    series: Vec<SeriesJson>,
}

/// Runs a small seeded BER/SER sweep of MPA against max-log MPA on the
/// built-in 4x6 Rayleigh uplink and returns the curves as JSON.
///
/// All detectors see common frame realizations; `frames` is capped at
/// 5000 and `points` at 25 to keep the browser responsive.
#[wasm_bindgen]
pub fn ber_mini_sweep(
    start_db: f64,
    step_db: f64,
    points: u32,
    frames: u32,
    seed: u32,
) -> Result<String, String> {
    if points == 0 || points > MAX_SWEEP_POINTS {
        return Err(format!("points must be in 1..={MAX_SWEEP_POINTS}"));
    }
    if frames == 0 || frames > MAX_SWEEP_FRAMES {
        return Err(format!("frames must be in 1..={MAX_SWEEP_FRAMES}"));
    }
    if !step_db.is_finite() || !start_db.is_finite() {
        return Err("the SNR axis must be finite".into());
    }
    let cbs = CodebookSet::star_qam_4x6();
    let bits_per_symbol = cbs.bits_per_symbol().expect("M is a power of two");
    let detectors = [
        ("mpa", DecoderConfig::mpa()),
        ("max-log", DecoderConfig::max_log()),
    ];
    let seed = u64::from(seed);
    let snr_db: Vec<f64> = (0..points).map(|i| start_db + step_db * f64::from(i)).collect();
    let frame_bits = cbs.num_users() as u64 * u64::from(bits_per_symbol);
    let mut series: Vec<(u64, u64)> = Vec::new();
    let mut curves: Vec<(Vec<f64>, Vec<f64>)> =
        vec![(Vec::new(), Vec::new()); detectors.len()];
    for &snr in &snr_db {
        let n0 = link::n0_from_ebn0_db(snr, cbs.avg_symbol_energy(), bits_per_symbol);
        series.clear();
        series.resize(detectors.len(), (0, 0));
        for frame in 0..u64::from(frames) {
            let mut channel_rng = frame_rng(seed, frame, StreamTag::Channel);
            let channel = link::realize_channel(
                ChannelModel::RayleighUplink,
                cbs.graph(),
                n0,
                &mut channel_rng,
            )
            .map_err(|e| e.to_string())?;
            let mut bit_rng = frame_rng(seed, frame, StreamTag::Bits);
            let sent = link::random_frame_bits(cbs.num_users(), bits_per_symbol, &mut bit_rng);
            let x = link::encode(&sent, &cbs, BitMapping::Natural).map_err(|e| e.to_string())?;
            let mut noise_rng = frame_rng(seed, frame, StreamTag::Noise);
            let y = link::transmit(&x, cbs.graph(), &channel, &mut noise_rng)
                .map_err(|e| e.to_string())?;
            let sent_symbols: Vec<usize> = sent
                .iter()
                .map(|bits| link::bits_to_symbol(bits, BitMapping::Natural).map(|m| m - 1))
                .collect::<scma_core::Result<_>>()
                .map_err(|e| e.to_string())?;
            for (slot, (_, config)) in detectors.iter().enumerate() {
                let result = decode(&y, &channel, &cbs, config).map_err(|e| e.to_string())?;
                let bit_errors = sent
                    .iter()
                    .flatten()
                    .zip(result.hard_bits.iter().flatten())
                    .filter(|(a, b)| a != b)
                    .count() as u64;
                let symbol_errors = sent_symbols
                    .iter()
                    .zip(result.hard_symbols.iter())
                    .filter(|(a, b)| a != b)
                    .count() as u64;
                series[slot].0 += bit_errors;
                series[slot].1 += symbol_errors;
            }
        }
        let total_bits = u64::from(frames) * frame_bits;
        let total_symbols = u64::from(frames) * cbs.num_users() as u64;
        for (slot, &(bit_errors, symbol_errors)) in series.iter().enumerate() {
            curves[slot].0.push(bit_errors as f64 / total_bits as f64);
            curves[slot].1.push(symbol_errors as f64 / total_symbols as f64);
        }
    }
    let json = SweepJson {
        snr_db,
        frames,
        bits_per_point: u64::from(frames) * frame_bits,
        series: detectors
            .iter()
            .zip(curves)
            .map(|(&(label, _), (ber, ser))| SeriesJson {
                label: label.to_string(),
                ber,
                ser,
            })
            .collect(),
    };
    Ok(serde_json::to_string(&json).expect("sweep serializes"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overview_reports_the_golden_kpis() {
        let json = codebook_overview(3.0, 1.0 / 0.62).unwrap();
        let value: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert_eq!(value["factor_matrix"][0], serde_json::json!([1, 1, 1, 0, 0, 0]));
        assert_eq!(value["users"].as_array().unwrap().len(), 6);
        let kpi = &value["mother_kpi"];
        assert!((kpi["d_e_min"].as_f64().unwrap() - 0.6054743997660275).abs() < 1e-12);
        assert_eq!(kpi["tau_p"].as_u64(), Some(4));
    }

    #[test]
    fn overview_rejects_bad_rings() {
        assert!(codebook_overview(-1.0, 1.0).is_err());
        assert!(codebook_overview(3.0, 0.0).is_err());
    }

    #[test]
    fn trace_covers_every_iteration() {
        let json = decode_frame_trace("001111110010", 8.0, 7, "mpa").unwrap();
        let value: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert_eq!(value["sent"][1], serde_json::json!([1, 1]));
        assert_eq!(value["edges"].as_array().unwrap().len(), 12);
        assert_eq!(value["iterations"].as_array().unwrap().len(), 10);
        assert_eq!(value["decision"]["bits"].as_array().unwrap().len(), 6);
        let spaced = decode_frame_trace("0011 1111 0010", 8.0, 7, "mpa").unwrap();
        assert_eq!(json, spaced);
    }

    #[test]
    fn trace_rejects_malformed_input() {
        assert!(decode_frame_trace("0011", 8.0, 7, "mpa").is_err());
        assert!(decode_frame_trace("00211111001x", 8.0, 7, "mpa").is_err());
        assert!(decode_frame_trace("001111110010", 8.0, 7, "mpa2").is_err());
    }

    #[test]
    fn mini_sweep_produces_falling_curves() {
        let json = ber_mini_sweep(2.0, 6.0, 3, 160, 9).unwrap();
        let value: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert_eq!(value["snr_db"], serde_json::json!([2.0, 8.0, 14.0]));
        let series = value["series"].as_array().unwrap();
        assert_eq!(series.len(), 2);
        for s in series {
            let ber = s["ber"].as_array().unwrap();
            assert_eq!(ber.len(), 3);
            assert!(ber[0].as_f64().unwrap() > ber[2].as_f64().unwrap());
        }
    }

    #[test]
    fn mini_sweep_guards_its_budget() {
        assert!(ber_mini_sweep(2.0, 2.0, 0, 100, 1).is_err());
        assert!(ber_mini_sweep(2.0, 2.0, 26, 100, 1).is_err());
        assert!(ber_mini_sweep(2.0, 2.0, 3, 5001, 1).is_err());
        assert!(ber_mini_sweep(f64::NAN, 2.0, 3, 100, 1).is_err());
    }
}
