//! Bit-to-codeword mapping, channel realizations, and received-signal
//! synthesis.
//!
//! Each user j maps B = log2(M) coded bits to one codeword of its K×M
//! codebook. On resource k the receiver sees the faded superposition of the
//! d_f colliding users plus circularly symmetric complex Gaussian noise of
//! total variance N0:
//!
//! ```text
//! y_k = Σ_{j in ξ_k} h_{k,j}·x_{k,j} + n_k
//! ```
//!
//! Likelihoods downstream use the exponent −‖·‖²/N0; the equivalent
//! per-dimension form −‖·‖²/(2σ²) is recovered through N0 = 2σ².
//!
//! # Example
//!
//! ```
//! use scma_core::codebook::CodebookSet;
//! use scma_core::link::{self, BitMapping, ChannelModel};
//! use scma_core::rng::{frame_rng, StreamTag};
//!
//! let cbs = CodebookSet::star_qam_4x6();
//! let bits = vec![vec![0, 0]; 6];
//! let x = link::encode(&bits, &cbs, BitMapping::Natural).unwrap();
//! let ch = link::realize_channel(
//!     ChannelModel::Awgn,
//!     cbs.graph(),
//!     0.5,
//!     &mut frame_rng(1, 0, StreamTag::Channel),
//! )
//! .unwrap();
//! let y = link::transmit(&x, cbs.graph(), &ch, &mut frame_rng(1, 0, StreamTag::Noise)).unwrap();
//! assert_eq!(y.len(), 4);
//! ```

use num_complex::Complex64;
use rand::{Rng, RngCore};
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::codebook::CodebookSet;
use crate::error::{Error, Result};
use crate::graph::FactorGraph;

/// Per-user bit sequences, each of length B = log2(M).
pub type FrameBits = Vec<Vec<u8>>;

/// Received length-K complex vector.
pub type ReceivedSignal = Vec<Complex64>;

// ---------------------------------------------------------------------------
// Bit mapping
// ---------------------------------------------------------------------------

/// How bit strings index codewords.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BitMapping {
    /// Natural binary, most significant bit first. The first bit splits the
    /// codeword set into its lower and upper half, so for M = 4 it separates
    /// {1, 2} from {3, 4} and the second bit separates {1, 3} from {2, 4}.
    #[default]
    Natural,
    /// Reflected Gray code over the natural order.
    Gray,
}

fn validate_bits(bits: &[u8]) -> Result<()> {
    if bits.is_empty() || bits.len() > 16 {
        return Err(Error::InvalidBits(format!(
            "bit string length must be between 1 and 16, found {}",
            bits.len()
        )));
    }
    if let Some(&bad) = bits.iter().find(|&&b| b > 1) {
        return Err(Error::InvalidBits(format!(
            "bits must be 0 or 1, found {bad}"
        )));
    }
    Ok(())
}

/// Maps a length-B bit string to its 1-based symbol index m in 1..=M.
///
/// Natural mapping is `m = 1 + Σ_i b_i·2^(B−i)`, so all-zero bits select
/// codeword 1 and all-one bits select codeword M.
pub fn bits_to_symbol(bits: &[u8], mapping: BitMapping) -> Result<usize> {
    validate_bits(bits)?;
    let natural = match mapping {
        BitMapping::Natural => bits.iter().fold(0usize, |acc, &b| (acc << 1) | b as usize),
        BitMapping::Gray => {
            let mut acc = 0usize;
            let mut prev = 0u8;
            for &g in bits {
                prev ^= g;
                acc = (acc << 1) | prev as usize;
            }
            acc
        }
    };
    Ok(natural + 1)
}

/// Inverse of [`bits_to_symbol`] for a 1-based symbol index.
pub fn symbol_to_bits(symbol: usize, bits_per_symbol: u32, mapping: BitMapping) -> Result<Vec<u8>> {
    let m = 1usize << bits_per_symbol;
    if symbol < 1 || symbol > m {
        return Err(Error::IndexOutOfRange {
            what: "symbol",
            index: symbol,
            limit: m,
        });
    }
    let value = symbol - 1;
    let natural: Vec<u8> = (0..bits_per_symbol)
        .rev()
        .map(|i| ((value >> i) & 1) as u8)
        .collect();
    Ok(match mapping {
        BitMapping::Natural => natural,
        BitMapping::Gray => {
            let mut out = Vec::with_capacity(natural.len());
            let mut prev = 0u8;
            for &b in &natural {
                out.push(b ^ prev);
                prev = b;
            }
            out
        }
    })
}

/// 0-based codeword indices whose bit `bit` (0-based, MSB first) equals
/// `value`.
pub fn symbols_with_bit(
    bit: usize,
    value: u8,
    bits_per_symbol: u32,
    mapping: BitMapping,
) -> Vec<usize> {
    let m = 1usize << bits_per_symbol;
    (1..=m)
        .filter(|&sym| {
            let bits = symbol_to_bits(sym, bits_per_symbol, mapping)
                .expect("symbol index is in range");
            bits[bit] == value
        })
        .map(|sym| sym - 1)
        .collect()
}

/// Draws one length-B bit string per user, each bit fair.
pub fn random_frame_bits<R: RngCore>(
    num_users: usize,
    bits_per_symbol: u32,
    rng: &mut R,
) -> FrameBits {
    (0..num_users)
        .map(|_| {
            (0..bits_per_symbol)
                .map(|_| (rng.next_u32() & 1) as u8)
                .collect()
        })
        .collect()
}

/// Maps all users' bits to codeword columns: entry (k, j) of the result is
/// component k of the codeword selected by user j.
pub fn encode(frame: &FrameBits, cbs: &CodebookSet, mapping: BitMapping) -> Result<Vec<Vec<Complex64>>> {
    let b = cbs.bits_per_symbol().ok_or_else(|| {
        Error::InvalidBits(format!(
            "codebook size {} is not a power of two, bits cannot index codewords",
            cbs.size()
        ))
    })?;
    if frame.len() != cbs.num_users() {
        return Err(Error::DimensionMismatch(format!(
            "frame carries {} users but the codebook set has {}",
            frame.len(),
            cbs.num_users()
        )));
    }
    let mut x = vec![vec![Complex64::ZERO; cbs.num_users()]; cbs.num_resources()];
    for (j, bits) in frame.iter().enumerate() {
        if bits.len() != b as usize {
            return Err(Error::InvalidBits(format!(
                "user {} sent {} bits, expected {}",
                j + 1,
                bits.len(),
                b
            )));
        }
        let m = bits_to_symbol(bits, mapping)? - 1;
        for k in 0..cbs.num_resources() {
            x[k][j] = cbs.component(k, j, m);
        }
    }
    Ok(x)
}

// ---------------------------------------------------------------------------
// Channels
// ---------------------------------------------------------------------------

/// Fading model of one simulation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ChannelModel {
    /// No fading: every coefficient is 1.
    Awgn,
    /// Independent unit-variance Rayleigh fading per user and resource.
    RayleighUplink,
    /// One unit-variance Rayleigh coefficient per resource, shared by all
    /// users on it.
    RayleighDownlink,
}

/// One frame's fading matrix and noise level.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    model: ChannelModel,
    h: Vec<Vec<Complex64>>,
    n0: f64,
}

impl ChannelRealization {
    /// Wraps an explicit K×J coefficient matrix.
    pub fn from_matrix(model: ChannelModel, h: Vec<Vec<Complex64>>, n0: f64) -> Result<Self> {
        if n0 <= 0.0 || !n0.is_finite() {
            return Err(Error::NonPositiveParameter {
                name: "n0",
                value: n0,
            });
        }
        if h.is_empty() || h[0].is_empty() || h.iter().any(|row| row.len() != h[0].len()) {
            return Err(Error::DimensionMismatch(
                "channel matrix must be rectangular and non-empty".into(),
            ));
        }
        Ok(ChannelRealization { model, h, n0 })
    }

    /// The fading model that produced this realization.
    pub fn model(&self) -> ChannelModel {
        self.model
    }

    /// Coefficient h_{k,j}.
    pub fn coefficient(&self, k: usize, j: usize) -> Complex64 {
        self.h[k][j]
    }

    /// The K×J coefficient matrix, row-major.
    pub fn matrix(&self) -> &[Vec<Complex64>] {
        &self.h
    }

    /// Total complex noise variance N0.
    pub fn n0(&self) -> f64 {
        self.n0
    }
}

/// One circularly symmetric complex Gaussian draw with total variance
/// `variance`.
fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R, variance: f64) -> Complex64 {
    let normal = Normal::new(0.0, (variance / 2.0).sqrt()).expect("finite standard deviation");
    Complex64::new(normal.sample(rng), normal.sample(rng))
}

/// Draws a fading matrix for the graph's dimensions.
///
/// Uplink Rayleigh draws an independent CN(0, 1) coefficient for every
/// (resource, user) cell in row-major order; downlink draws one per resource
/// and copies it across the row; AWGN sets every coefficient to 1.
pub fn realize_channel<R: Rng + ?Sized>(
    model: ChannelModel,
    graph: &FactorGraph,
    n0: f64,
    rng: &mut R,
) -> Result<ChannelRealization> {
    let (k, j) = (graph.num_resources(), graph.num_users());
    let h = match model {
        ChannelModel::Awgn => vec![vec![Complex64::ONE; j]; k],
        ChannelModel::RayleighUplink => (0..k)
            .map(|_| (0..j).map(|_| complex_gaussian(rng, 1.0)).collect())
            .collect(),
        ChannelModel::RayleighDownlink => (0..k)
            .map(|_| {
                let shared = complex_gaussian(rng, 1.0);
                vec![shared; j]
            })
            .collect(),
    };
    ChannelRealization::from_matrix(model, h, n0)
}

/// Noise-free superposition: entry k is `Σ_{j in ξ_k} h_{k,j}·x_{k,j}`.
pub fn superpose(
    x: &[Vec<Complex64>],
    graph: &FactorGraph,
    channel: &ChannelRealization,
) -> Result<Vec<Complex64>> {
    if x.len() != graph.num_resources() || x.iter().any(|row| row.len() != graph.num_users()) {
        return Err(Error::DimensionMismatch(format!(
            "codeword matrix must be {}x{}",
            graph.num_resources(),
            graph.num_users()
        )));
    }
    Ok((0..graph.num_resources())
        .map(|k| {
            graph
                .users_on_resource(k)
                .iter()
                .map(|&j| channel.coefficient(k, j) * x[k][j])
                .sum()
        })
        .collect())
}

/// Received signal: the superposition plus one CN(0, N0) noise draw per
/// resource, in increasing resource order.
pub fn transmit<R: Rng + ?Sized>(
    x: &[Vec<Complex64>],
    graph: &FactorGraph,
    channel: &ChannelRealization,
    rng: &mut R,
) -> Result<ReceivedSignal> {
    let mut y = superpose(x, graph, channel)?;
    for sample in y.iter_mut() {
        *sample += complex_gaussian(rng, channel.n0());
    }
    Ok(y)
}

// ---------------------------------------------------------------------------
// SNR conventions
// ---------------------------------------------------------------------------

/// N0 that realizes a per-bit SNR, given the average codeword energy.
///
/// Eb = E_avg/B, so `N0 = E_avg / (B·10^(EbN0_dB/10))`.
pub fn n0_from_ebn0_db(ebn0_db: f64, avg_symbol_energy: f64, bits_per_symbol: u32) -> f64 {
    let eb = avg_symbol_energy / bits_per_symbol as f64;
    eb / 10f64.powf(ebn0_db / 10.0)
}

/// Per-bit SNR in dB realized by a noise level; inverse of
/// [`n0_from_ebn0_db`].
pub fn ebn0_db_from_n0(n0: f64, avg_symbol_energy: f64, bits_per_symbol: u32) -> f64 {
    let eb = avg_symbol_energy / bits_per_symbol as f64;
    10.0 * (eb / n0).log10()
}
