//! The message-passing detector family.
//!
//! All detectors run belief propagation on the codebook set's factor graph.
//! Function nodes (resources) marginalize the local likelihood table ψ over
//! colliding users; variable nodes (users) combine messages from their d_v
//! resources. The family covers:
//!
//! - `mpa`: probability-domain sum-product updates.
//! - `log-mpa`: the same updates in the log domain with exact or LUT
//!   max-star reductions.
//! - `max-log`: log domain with the correction dropped (plain max).
//! - `pm-mpa`: partial marginalization, fixing the most reliable users to
//!   hard codewords after t' iterations.
//! - `eml`: log domain with per-user candidate truncation to the m_c most
//!   reliable codewords after the first full iteration.
//! - `dmpa`: probability-domain updates whose function-node marginalization
//!   is evaluated as a discretized density convolution on a complex-plane
//!   lattice.
//!
//! Messages update either by flooding (all function nodes, then all
//! variable nodes) or by the serial variable-node schedule, where each user
//! refreshes its incident function-node messages and replies immediately.
//!
//! # Example
//!
//! ```
//! use scma_core::codebook::CodebookSet;
//! use scma_core::decoder::{decode, DecoderConfig};
//! use scma_core::link::{self, BitMapping, ChannelModel};
//! use scma_core::rng::{frame_rng, StreamTag};
//!
//! let cbs = CodebookSet::star_qam_4x6();
//! let bits = vec![vec![0, 1]; 6];
//! let x = link::encode(&bits, &cbs, BitMapping::Natural).unwrap();
//! let n0 = link::n0_from_ebn0_db(12.0, cbs.avg_symbol_energy(), 2);
//! let ch = link::realize_channel(
//!     ChannelModel::Awgn,
//!     cbs.graph(),
//!     n0,
//!     &mut frame_rng(3, 0, StreamTag::Channel),
//! )
//! .unwrap();
//! let y = link::transmit(&x, cbs.graph(), &ch, &mut frame_rng(3, 0, StreamTag::Noise)).unwrap();
//! let result = decode(&y, &ch, &cbs, &DecoderConfig::mpa()).unwrap();
//! assert_eq!(result.llr.len(), 6);
//! ```

mod dmpa;
mod max_star;

pub use dmpa::{dmpa_fn_update, dmpa_fn_update_direct, DmpaParams};
pub use max_star::{correction, max_star, LutTable, MaxStarKernel, MaxStarMode};

use num_complex::Complex64;
use rand::RngCore;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::codebook::CodebookSet;
use crate::error::{Error, Result};
use crate::link::{symbols_with_bit, BitMapping, ChannelRealization};

/// Bit LLR clamp magnitude.
pub const LLR_MAX: f64 = 50.0;
/// Probability-domain message floor applied before normalization.
pub const PROB_FLOOR: f64 = 1e-30;
/// Log-domain message clamp floor applied after normalization.
pub const LOG_FLOOR: f64 = -700.0;
/// Default iteration count N_t.
pub const DEFAULT_ITERATIONS: usize = 10;

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

/// Arithmetic domain of the message state.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Domain {
    /// Messages are probabilities.
    Probability,
    /// Messages are log-probabilities.
    Log,
}

/// Message update order within one iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Schedule {
    /// All function nodes first, then all variable nodes.
    Flooding,
    /// Variable nodes in natural order; each refreshes its incident
    /// function-node messages and replies immediately.
    SerialVn,
}

/// Detector variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    /// Probability-domain sum-product.
    Mpa,
    /// Log-domain sum-product with max-star reductions.
    LogMpa,
    /// Log domain with plain max reductions.
    MaxLog,
    /// Partial marginalization over the most reliable users.
    PmMpa,
    /// Log domain with per-user candidate truncation.
    Eml,
    /// Probability domain with discretized-convolution function nodes.
    Dmpa,
}

impl Variant {
    /// Canonical lowercase label.
    pub fn label(self) -> &'static str {
        match self {
            Variant::Mpa => "mpa",
            Variant::LogMpa => "log-mpa",
            Variant::MaxLog => "max-log",
            Variant::PmMpa => "pm-mpa",
            Variant::Eml => "eml",
            Variant::Dmpa => "dmpa",
        }
    }
}

/// How partial marginalization picks the users to fix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PmSelection {
    /// Fix the users whose top belief dominates their second-best the most.
    Reliability,
    /// Fix uniformly chosen users; the seed feeds a dedicated stream when
    /// the caller does not supply one.
    Random {
        /// Stream seed for the standalone entry points.
        seed: u64,
    },
}

/// Full decoder parameterization.
#[derive(Debug, Clone, PartialEq)]
pub struct DecoderConfig {
    /// Detector variant.
    pub variant: Variant,
    /// Iteration count N_t.
    pub iterations: usize,
    /// Log-domain reduction mode (ignored by probability-domain variants;
    /// forced to plain max by `max-log`).
    pub max_star: MaxStarMode,
    /// Update schedule.
    pub schedule: Schedule,
    /// Bit-to-symbol mapping used for LLR grouping.
    pub mapping: BitMapping,
    /// Standard iterations t' before partial marginalization fixes users.
    pub pm_iterations: usize,
    /// Number of users u' fixed by partial marginalization.
    pub pm_fixed_users: usize,
    /// User-selection rule for partial marginalization.
    pub pm_selection: PmSelection,
    /// Candidate codewords m_c kept per user by EML truncation.
    pub eml_candidates: usize,
    /// Lattice parameters for the DMPA variant.
    pub dmpa: DmpaParams,
}

impl DecoderConfig {
    fn base(variant: Variant) -> Self {
        DecoderConfig {
            variant,
            iterations: DEFAULT_ITERATIONS,
            max_star: MaxStarMode::Exact,
            schedule: Schedule::Flooding,
            mapping: BitMapping::Natural,
            pm_iterations: DEFAULT_ITERATIONS / 2,
            pm_fixed_users: 3,
            pm_selection: PmSelection::Reliability,
            eml_candidates: 2,
            dmpa: DmpaParams::default(),
        }
    }

    /// Probability-domain MPA with default settings.
    pub fn mpa() -> Self {
        Self::base(Variant::Mpa)
    }

    /// Log-domain MPA with exact max-star.
    pub fn log_mpa() -> Self {
        Self::base(Variant::LogMpa)
    }

    /// Max-Log-MPA.
    pub fn max_log() -> Self {
        DecoderConfig {
            max_star: MaxStarMode::PlainMax,
            ..Self::base(Variant::MaxLog)
        }
    }

    /// Partial-marginalization MPA fixing `fixed_users` users after
    /// `standard_iterations` rounds.
    pub fn pm_mpa(standard_iterations: usize, fixed_users: usize) -> Self {
        DecoderConfig {
            pm_iterations: standard_iterations,
            pm_fixed_users: fixed_users,
            ..Self::base(Variant::PmMpa)
        }
    }

    /// EML truncation keeping `candidates` codewords per user.
    pub fn eml(candidates: usize) -> Self {
        DecoderConfig {
            eml_candidates: candidates,
            ..Self::base(Variant::Eml)
        }
    }

    /// DMPA with the default 0.05 lattice step.
    pub fn dmpa() -> Self {
        Self::base(Variant::Dmpa)
    }

    /// Arithmetic domain implied by the variant.
    pub fn domain(&self) -> Domain {
        match self.variant {
            Variant::Mpa | Variant::PmMpa | Variant::Dmpa => Domain::Probability,
            Variant::LogMpa | Variant::MaxLog | Variant::Eml => Domain::Log,
        }
    }

    /// Checks parameter ranges against a codebook set.
    pub fn validate(&self, cbs: &CodebookSet) -> Result<()> {
        if cbs.bits_per_symbol().is_none() {
            return Err(Error::InvalidDecoderConfig(format!(
                "codebook size {} is not a power of two, bit LLRs are undefined",
                cbs.size()
            )));
        }
        if let MaxStarMode::Lut { intervals } = self.max_star {
            if intervals == 0 {
                return Err(Error::InvalidDecoderConfig(
                    "LUT interval count must be at least 1".into(),
                ));
            }
        }
        match self.variant {
            Variant::PmMpa => {
                if self.pm_iterations < 1 || self.pm_iterations > self.iterations {
                    return Err(Error::InvalidDecoderConfig(format!(
                        "pm iterations t' = {} must satisfy 1 <= t' <= N_t = {}",
                        self.pm_iterations, self.iterations
                    )));
                }
                if self.pm_fixed_users > cbs.num_users() {
                    return Err(Error::InvalidDecoderConfig(format!(
                        "pm fixed users u' = {} exceeds the user count {}",
                        self.pm_fixed_users,
                        cbs.num_users()
                    )));
                }
            }
            Variant::Eml => {
                if self.eml_candidates < 1 || self.eml_candidates > cbs.size() {
                    return Err(Error::InvalidDecoderConfig(format!(
                        "eml candidate count m_c = {} must satisfy 1 <= m_c <= M = {}",
                        self.eml_candidates,
                        cbs.size()
                    )));
                }
            }
            Variant::Dmpa => self.dmpa.validate()?,
            _ => {}
        }
        Ok(())
    }

    fn kernel(&self) -> Result<MaxStarKernel> {
        let mode = match self.variant {
            Variant::MaxLog => MaxStarMode::PlainMax,
            _ => self.max_star,
        };
        MaxStarKernel::compile(mode)
    }
}

// ---------------------------------------------------------------------------
// Results and counters
// ---------------------------------------------------------------------------

/// Arithmetic-operation counters accumulated over one decode call.
///
/// `fn_multiplies` counts executed multiplications (log domain: the
/// equivalent additions) that combine incoming messages with ψ entries at
/// function nodes; `fn_combinations` counts visited symbol combinations per
/// function-node update; `vn_multiplies` counts message products at variable
/// nodes and in final beliefs; `max_ops` counts max/max-star reductions in
/// function-node accumulation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct OpCounters {
    /// Multiplications in function-node updates.
    pub fn_multiplies: u64,
    /// Symbol combinations visited in function-node updates.
    pub fn_combinations: u64,
    /// Multiplications in variable-node updates and final beliefs.
    pub vn_multiplies: u64,
    /// Max or max-star reductions in function-node accumulation.
    pub max_ops: u64,
    /// Iterations executed.
    pub iterations: u64,
    /// Variable-node updates that fell back to the uniform message.
    pub vn_uniform_fallbacks: u64,
}

impl std::ops::AddAssign for OpCounters {
    fn add_assign(&mut self, rhs: OpCounters) {
        self.fn_multiplies += rhs.fn_multiplies;
        self.fn_combinations += rhs.fn_combinations;
        self.vn_multiplies += rhs.vn_multiplies;
        self.max_ops += rhs.max_ops;
        self.iterations += rhs.iterations;
        self.vn_uniform_fallbacks += rhs.vn_uniform_fallbacks;
    }
}

/// Output of one decode call.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecodeResult {
    /// J×B bit LLRs, positive meaning bit 0.
    pub llr: Vec<Vec<f64>>,
    /// J×B hard bits, 0 when the LLR is nonnegative.
    pub hard_bits: Vec<Vec<u8>>,
    /// Per-user 0-based maximum-belief codeword indices.
    pub hard_symbols: Vec<usize>,
    /// J×M normalized symbol beliefs.
    pub beliefs: Vec<Vec<f64>>,
    /// Executed-operation counters.
    pub counters: OpCounters,
}

// ---------------------------------------------------------------------------
// Message state
// ---------------------------------------------------------------------------

/// Per-edge message storage plus the local likelihood tables.
///
/// Messages live on the edges of the factor graph: `fn_to_vn` holds
/// η_{k→j} and `vn_to_fn` holds η_{j→k}, each a length-M vector in the
/// state's domain. Likelihood tables ψ are per resource with M^(d_f)
/// entries, indexed mixed-radix with the lowest-indexed colliding user most
/// significant.
#[derive(Debug, Clone)]
pub struct MessageState {
    domain: Domain,
    size: usize,
    bits: u32,
    mapping: BitMapping,
    kernel: MaxStarKernel,
    iteration: usize,
    xi: Vec<Vec<usize>>,
    zeta: Vec<Vec<usize>>,
    edge_of: Vec<Vec<Option<usize>>>,
    edges_on_resource: Vec<Vec<usize>>,
    edges_of_user: Vec<Vec<usize>>,
    strides: Vec<Vec<usize>>,
    psi: Vec<Vec<f64>>,
    fn_to_vn: Vec<Vec<f64>>,
    vn_to_fn: Vec<Vec<f64>>,
}

impl MessageState {
    fn new(cbs: &CodebookSet, config: &DecoderConfig) -> Result<Self> {
        config.validate(cbs)?;
        let graph = cbs.graph();
        let m = cbs.size();
        let (num_k, num_j) = (graph.num_resources(), graph.num_users());
        let domain = config.domain();
        let mut edge_of = vec![vec![None; num_j]; num_k];
        let mut edges_on_resource = vec![Vec::new(); num_k];
        let mut edges_of_user = vec![Vec::new(); num_j];
        let mut edge_count = 0usize;
        for k in 0..num_k {
            for &j in graph.users_on_resource(k) {
                edge_of[k][j] = Some(edge_count);
                edges_on_resource[k].push(edge_count);
                edges_of_user[j].push(edge_count);
                edge_count += 1;
            }
        }
        let uniform = match domain {
            Domain::Probability => vec![1.0 / m as f64; m],
            Domain::Log => vec![-(m as f64).ln(); m],
        };
        let neutral = match domain {
            Domain::Probability => 1.0,
            Domain::Log => 0.0,
        };
        let psi = (0..num_k)
            .map(|k| vec![neutral; m.pow(graph.users_on_resource(k).len() as u32)])
            .collect();
        let strides = (0..num_k)
            .map(|k| {
                let d = graph.users_on_resource(k).len();
                (0..d).map(|pos| m.pow((d - 1 - pos) as u32)).collect()
            })
            .collect();
        Ok(MessageState {
            domain,
            size: m,
            bits: cbs.bits_per_symbol().expect("validated above"),
            mapping: config.mapping,
            kernel: config.kernel()?,
            iteration: 0,
            xi: (0..num_k)
                .map(|k| graph.users_on_resource(k).to_vec())
                .collect(),
            zeta: (0..num_j)
                .map(|j| graph.resources_of_user(j).to_vec())
                .collect(),
            edge_of,
            edges_on_resource,
            edges_of_user,
            strides,
            psi,
            fn_to_vn: vec![uniform.clone(); edge_count],
            vn_to_fn: vec![uniform; edge_count],
        })
    }

    fn edge(&self, k: usize, j: usize) -> Result<usize> {
        self.edge_of
            .get(k)
            .and_then(|row| row.get(j).copied().flatten())
            .ok_or_else(|| {
                Error::DimensionMismatch(format!(
                    "no edge between resource {} and user {}",
                    k + 1,
                    j + 1
                ))
            })
    }

    /// Arithmetic domain.
    pub fn domain(&self) -> Domain {
        self.domain
    }

    /// Codebook size M.
    pub fn size(&self) -> usize {
        self.size
    }

    /// Completed iterations.
    pub fn iteration(&self) -> usize {
        self.iteration
    }

    /// Edge count of the factor graph.
    pub fn num_edges(&self) -> usize {
        self.fn_to_vn.len()
    }

    /// Message η_{k→j}.
    pub fn message_to_vn(&self, k: usize, j: usize) -> Result<&[f64]> {
        Ok(&self.fn_to_vn[self.edge(k, j)?])
    }

    /// Message η_{j→k}.
    pub fn message_to_fn(&self, j: usize, k: usize) -> Result<&[f64]> {
        Ok(&self.vn_to_fn[self.edge(k, j)?])
    }

    /// Overwrites η_{k→j}.
    pub fn set_message_to_vn(&mut self, k: usize, j: usize, message: Vec<f64>) -> Result<()> {
        let edge = self.edge(k, j)?;
        if message.len() != self.size {
            return Err(Error::DimensionMismatch(format!(
                "message must have {} entries",
                self.size
            )));
        }
        self.fn_to_vn[edge] = message;
        Ok(())
    }

    /// Overwrites η_{j→k}.
    pub fn set_message_to_fn(&mut self, j: usize, k: usize, message: Vec<f64>) -> Result<()> {
        let edge = self.edge(k, j)?;
        if message.len() != self.size {
            return Err(Error::DimensionMismatch(format!(
                "message must have {} entries",
                self.size
            )));
        }
        self.vn_to_fn[edge] = message;
        Ok(())
    }

    /// The ψ table of resource `k`.
    pub fn likelihood(&self, k: usize) -> Result<&[f64]> {
        self.psi.get(k).map(Vec::as_slice).ok_or(Error::IndexOutOfRange {
            what: "resource",
            index: k + 1,
            limit: self.psi.len(),
        })
    }

    /// Installs a ψ table for resource `k`, as produced by
    /// [`fn_likelihood`].
    pub fn set_likelihood(&mut self, k: usize, table: Vec<f64>) -> Result<()> {
        if k >= self.psi.len() {
            return Err(Error::IndexOutOfRange {
                what: "resource",
                index: k + 1,
                limit: self.psi.len(),
            });
        }
        if table.len() != self.psi[k].len() {
            return Err(Error::DimensionMismatch(format!(
                "likelihood table for resource {} must have {} entries",
                k + 1,
                self.psi[k].len()
            )));
        }
        self.psi[k] = table;
        Ok(())
    }
}

/// Fresh state with uniform variable-node messages and neutral ψ tables.
pub fn init_messages(cbs: &CodebookSet, config: &DecoderConfig) -> Result<MessageState> {
    MessageState::new(cbs, config)
}

/// Uniform per-user codeword priors.
pub fn uniform_priors(num_users: usize, size: usize) -> Vec<Vec<f64>> {
    vec![vec![1.0 / size as f64; size]; num_users]
}

// ---------------------------------------------------------------------------
// Likelihood tables
// ---------------------------------------------------------------------------

/// The literal ψ table of resource `k` for a received sample.
///
/// Entry (m_j)_{j in ξ_k} equals `exp(−‖y_k − Σ h_{k,j}·x_{k,j}^{m_j}‖²/N0)`
/// in the probability domain and the exponent itself in the log domain.
/// Indexing is mixed-radix over ξ_k in ascending user order with the first
/// user most significant.
pub fn fn_likelihood(
    y_k: Complex64,
    channel: &ChannelRealization,
    cbs: &CodebookSet,
    k: usize,
    domain: Domain,
) -> Result<Vec<f64>> {
    let exponents = fn_exponents(y_k, channel, cbs, k)?;
    Ok(match domain {
        Domain::Log => exponents,
        Domain::Probability => exponents.into_iter().map(f64::exp).collect(),
    })
}

/// Raw exponents −‖y_k − Σ h·x‖²/N0 over all combinations at resource `k`.
fn fn_exponents(
    y_k: Complex64,
    channel: &ChannelRealization,
    cbs: &CodebookSet,
    k: usize,
) -> Result<Vec<f64>> {
    let graph = cbs.graph();
    if k >= graph.num_resources() {
        return Err(Error::IndexOutOfRange {
            what: "resource",
            index: k + 1,
            limit: graph.num_resources(),
        });
    }
    let xi = graph.users_on_resource(k);
    let m = cbs.size();
    let n0 = channel.n0();
    let faded: Vec<Vec<Complex64>> = xi
        .iter()
        .map(|&j| {
            (0..m)
                .map(|sym| channel.coefficient(k, j) * cbs.component(k, j, sym))
                .collect()
        })
        .collect();
    let count = m.pow(xi.len() as u32);
    let mut table = Vec::with_capacity(count);
    let mut digits = vec![0usize; xi.len()];
    for _ in 0..count {
        let sum: Complex64 = digits
            .iter()
            .enumerate()
            .map(|(pos, &sym)| faded[pos][sym])
            .sum();
        table.push(-(y_k - sum).norm_sqr() / n0);
        for pos in (0..digits.len()).rev() {
            digits[pos] += 1;
            if digits[pos] < m {
                break;
            }
            digits[pos] = 0;
        }
    }
    Ok(table)
}

// ---------------------------------------------------------------------------
// Active sets (candidate truncation and fixed users)
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
struct ActiveSet {
    candidates: Vec<Vec<usize>>,
    fixed: Vec<Option<usize>>,
}

impl ActiveSet {
    fn full(num_users: usize, size: usize) -> Self {
        ActiveSet {
            candidates: vec![(0..size).collect(); num_users],
            fixed: vec![None; num_users],
        }
    }
}

// ---------------------------------------------------------------------------
// Update kernels
// ---------------------------------------------------------------------------

struct OtherUser {
    pos: usize,
    user: usize,
    edge: usize,
    fixed_symbol: Option<usize>,
}

fn fn_update_masked(
    state: &MessageState,
    k: usize,
    j: usize,
    active: &ActiveSet,
    counters: &mut OpCounters,
) -> Result<Vec<f64>> {
    state.edge(k, j)?;
    let xi = &state.xi[k];
    let strides = &state.strides[k];
    let psi = &state.psi[k];
    let pos_j = xi.iter().position(|&u| u == j).expect("edge implies membership");
    let out_list = &active.candidates[j];
    let floor = match state.domain {
        Domain::Probability => 0.0,
        Domain::Log => LOG_FLOOR,
    };
    let mut out = vec![floor; state.size];
    let others: Vec<OtherUser> = xi
        .iter()
        .enumerate()
        .filter(|&(_, &user)| user != j)
        .map(|(pos, &user)| OtherUser {
            pos,
            user,
            edge: state.edge_of[k][user].expect("neighborhood edge exists"),
            fixed_symbol: active.fixed[user],
        })
        .collect();
    let list_len = |o: &OtherUser| match o.fixed_symbol {
        Some(_) => 1,
        None => active.candidates[o.user].len(),
    };
    let mut idx = vec![0usize; others.len()];
    let mut first_combo = true;
    loop {
        let mut base = 0usize;
        let mut partial_prob = 1.0f64;
        let mut partial_log = 0.0f64;
        let mut free_factors = 0u64;
        for (o, &i) in others.iter().zip(idx.iter()) {
            let sym = match o.fixed_symbol {
                Some(s) => s,
                None => active.candidates[o.user][i],
            };
            base += sym * strides[o.pos];
            if o.fixed_symbol.is_none() {
                let msg = &state.vn_to_fn[o.edge];
                match state.domain {
                    Domain::Probability => partial_prob *= msg[sym],
                    Domain::Log => partial_log += msg[sym],
                }
                free_factors += 1;
            }
        }
        counters.fn_combinations += 1;
        counters.fn_multiplies += free_factors.saturating_sub(1);
        for &m_out in out_list {
            let psi_val = psi[base + m_out * strides[pos_j]];
            match state.domain {
                Domain::Probability => {
                    let contrib = if free_factors > 0 {
                        counters.fn_multiplies += 1;
                        psi_val * partial_prob
                    } else {
                        psi_val
                    };
                    out[m_out] += contrib;
                }
                Domain::Log => {
                    let contrib = if free_factors > 0 {
                        counters.fn_multiplies += 1;
                        psi_val + partial_log
                    } else {
                        psi_val
                    };
                    if first_combo {
                        out[m_out] = contrib;
                    } else {
                        counters.max_ops += 1;
                        out[m_out] = state.kernel.reduce(out[m_out], contrib);
                    }
                }
            }
        }
        first_combo = false;
        let mut advanced = false;
        for pos in (0..others.len()).rev() {
            idx[pos] += 1;
            if idx[pos] < list_len(&others[pos]) {
                advanced = true;
                break;
            }
            idx[pos] = 0;
        }
        if !advanced {
            break;
        }
    }
    Ok(out)
}

/// Function-node update η_{k→j}: marginalizes ψ over the other colliding
/// users weighted by their current messages. Log domain accumulates with the
/// state's max-star kernel.
pub fn fn_update(state: &MessageState, k: usize, j: usize) -> Result<Vec<f64>> {
    let active = ActiveSet::full(state.zeta.len(), state.size);
    let mut scratch = OpCounters::default();
    fn_update_masked(state, k, j, &active, &mut scratch)
}

fn log_norm_exact(values: &mut [f64], entries: &[usize]) {
    let mut acc = f64::NEG_INFINITY;
    let exact = MaxStarKernel::Exact;
    for &m in entries {
        acc = if acc == f64::NEG_INFINITY {
            values[m]
        } else {
            exact.reduce(acc, values[m])
        };
    }
    for &m in entries {
        values[m] = (values[m] - acc).clamp(LOG_FLOOR, 0.0);
    }
}

fn vn_update_masked(
    state: &MessageState,
    j: usize,
    k: usize,
    priors: &[f64],
    active: &ActiveSet,
    counters: &mut OpCounters,
) -> Result<(Vec<f64>, bool)> {
    state.edge(k, j)?;
    if priors.len() != state.size {
        return Err(Error::DimensionMismatch(format!(
            "prior must have {} entries",
            state.size
        )));
    }
    let zeta = &state.zeta[j];
    let cand = &active.candidates[j];
    let floor = match state.domain {
        Domain::Probability => 0.0,
        Domain::Log => LOG_FLOOR,
    };
    let mut out = vec![floor; state.size];
    let mut fallback = false;
    match state.domain {
        Domain::Probability => {
            let mut total = 0.0;
            for &m in cand {
                let mut v = priors[m];
                for (&k2, &edge) in zeta.iter().zip(state.edges_of_user[j].iter()) {
                    if k2 != k {
                        v *= state.fn_to_vn[edge][m];
                        counters.vn_multiplies += 1;
                    }
                }
                out[m] = v;
                total += v;
            }
            if total <= 0.0 {
                fallback = true;
                counters.vn_uniform_fallbacks += 1;
            }
            let mut sum = 0.0;
            for &m in cand {
                out[m] = out[m].max(PROB_FLOOR);
                sum += out[m];
            }
            for &m in cand {
                out[m] /= sum;
            }
        }
        Domain::Log => {
            for &m in cand {
                let mut v = priors[m].ln();
                for (&k2, &edge) in zeta.iter().zip(state.edges_of_user[j].iter()) {
                    if k2 != k {
                        v += state.fn_to_vn[edge][m];
                        counters.vn_multiplies += 1;
                    }
                }
                out[m] = v;
            }
            log_norm_exact(&mut out, cand);
        }
    }
    Ok((out, fallback))
}

/// Variable-node update η_{j→k}: the prior times the messages from the
/// user's other resources, normalized to a unit sum (log domain: to a zero
/// log-sum-exp). Returns the message and whether the all-zero fallback to
/// the uniform message fired.
pub fn vn_update(
    state: &MessageState,
    j: usize,
    k: usize,
    priors: &[f64],
) -> Result<(Vec<f64>, bool)> {
    let active = ActiveSet::full(state.zeta.len(), state.size);
    let mut scratch = OpCounters::default();
    vn_update_masked(state, j, k, priors, &active, &mut scratch)
}

pub(crate) fn clamp_llr(llr: f64) -> f64 {
    llr.clamp(-LLR_MAX, LLR_MAX)
}

pub(crate) fn llr_pair(num: f64, den: f64) -> f64 {
    match (num > 0.0, den > 0.0) {
        (true, true) => clamp_llr(num.ln() - den.ln()),
        (true, false) => LLR_MAX,
        (false, true) => -LLR_MAX,
        (false, false) => 0.0,
    }
}

fn beliefs_and_llr_masked(
    state: &MessageState,
    priors: &[Vec<f64>],
    active: &ActiveSet,
    counters: &mut OpCounters,
) -> Result<DecodeResult> {
    let num_users = state.zeta.len();
    if priors.len() != num_users || priors.iter().any(|p| p.len() != state.size) {
        return Err(Error::DimensionMismatch(format!(
            "priors must be a {}x{} matrix",
            num_users, state.size
        )));
    }
    let m = state.size;
    let b = state.bits as usize;
    let mut beliefs = vec![vec![0.0; m]; num_users];
    let mut llr = vec![vec![0.0; b]; num_users];
    let mut hard_bits = vec![vec![0u8; b]; num_users];
    let mut hard_symbols = vec![0usize; num_users];
    let groups: Vec<(Vec<usize>, Vec<usize>)> = (0..b)
        .map(|bit| {
            (
                symbols_with_bit(bit, 0, state.bits, state.mapping),
                symbols_with_bit(bit, 1, state.bits, state.mapping),
            )
        })
        .collect();
    for j in 0..num_users {
        if let Some(s) = active.fixed[j] {
            beliefs[j][s] = 1.0;
            hard_symbols[j] = s;
            let bits = crate::link::symbol_to_bits(s + 1, state.bits, state.mapping)?;
            for (i, &bit) in bits.iter().enumerate() {
                llr[j][i] = if bit == 0 { LLR_MAX } else { -LLR_MAX };
                hard_bits[j][i] = bit;
            }
            continue;
        }
        let cand = &active.candidates[j];
        match state.domain {
            Domain::Probability => {
                let mut sum = 0.0;
                for &mx in cand {
                    let mut v = priors[j][mx];
                    for &edge in &state.edges_of_user[j] {
                        v *= state.fn_to_vn[edge][mx];
                        counters.vn_multiplies += 1;
                    }
                    beliefs[j][mx] = v;
                    sum += v;
                }
                if sum <= 0.0 {
                    counters.vn_uniform_fallbacks += 1;
                    for &mx in cand {
                        beliefs[j][mx] = 1.0 / cand.len() as f64;
                    }
                } else {
                    for &mx in cand {
                        beliefs[j][mx] /= sum;
                    }
                }
            }
            Domain::Log => {
                let mut logb = vec![f64::NEG_INFINITY; m];
                for &mx in cand {
                    let mut v = priors[j][mx].ln();
                    for &edge in &state.edges_of_user[j] {
                        v += state.fn_to_vn[edge][mx];
                        counters.vn_multiplies += 1;
                    }
                    logb[mx] = v;
                }
                let exact = MaxStarKernel::Exact;
                let mut acc = f64::NEG_INFINITY;
                for &mx in cand {
                    acc = if acc == f64::NEG_INFINITY {
                        logb[mx]
                    } else {
                        exact.reduce(acc, logb[mx])
                    };
                }
                for &mx in cand {
                    beliefs[j][mx] = (logb[mx] - acc).exp();
                }
                for (i, (zeros, ones)) in groups.iter().enumerate() {
                    let num = reduce_group(&logb, zeros, cand, &state.kernel);
                    let den = reduce_group(&logb, ones, cand, &state.kernel);
                    llr[j][i] = match (num, den) {
                        (Some(a), Some(bv)) => clamp_llr(a - bv),
                        (Some(_), None) => LLR_MAX,
                        (None, Some(_)) => -LLR_MAX,
                        (None, None) => 0.0,
                    };
                    hard_bits[j][i] = u8::from(llr[j][i] < 0.0);
                }
            }
        }
        if state.domain == Domain::Probability {
            for (i, (zeros, ones)) in groups.iter().enumerate() {
                let num: f64 = zeros.iter().map(|&mx| beliefs[j][mx]).sum();
                let den: f64 = ones.iter().map(|&mx| beliefs[j][mx]).sum();
                llr[j][i] = llr_pair(num, den);
                hard_bits[j][i] = u8::from(llr[j][i] < 0.0);
            }
        }
        let mut best = 0usize;
        for mx in 1..m {
            if beliefs[j][mx] > beliefs[j][best] {
                best = mx;
            }
        }
        hard_symbols[j] = best;
    }
    Ok(DecodeResult {
        llr,
        hard_bits,
        hard_symbols,
        beliefs,
        counters: *counters,
    })
}

fn reduce_group(
    logb: &[f64],
    group: &[usize],
    cand: &[usize],
    kernel: &MaxStarKernel,
) -> Option<f64> {
    let mut acc: Option<f64> = None;
    for &mx in group {
        if !cand.contains(&mx) {
            continue;
        }
        acc = Some(match acc {
            None => logb[mx],
            Some(a) => kernel.reduce(a, logb[mx]),
        });
    }
    acc
}

/// Final beliefs `I_j(m) = P(x_j^m)·Π_k η_{k→j}(m)`, bit LLRs over the
/// mapping's bit groups, and hard decisions.
pub fn beliefs_and_llr(state: &MessageState, priors: &[Vec<f64>]) -> Result<DecodeResult> {
    let active = ActiveSet::full(state.zeta.len(), state.size);
    let mut counters = OpCounters {
        iterations: state.iteration as u64,
        ..OpCounters::default()
    };
    beliefs_and_llr_masked(state, priors, &active, &mut counters)
}

// ---------------------------------------------------------------------------
// Decoding sessions
// ---------------------------------------------------------------------------

struct Session<'a> {
    state: MessageState,
    config: &'a DecoderConfig,
    active: ActiveSet,
    priors: Vec<Vec<f64>>,
    counters: OpCounters,
    dmpa_ctx: Option<dmpa::DmpaContext>,
}

impl<'a> Session<'a> {
    fn new(
        y: &'a [Complex64],
        channel: &'a ChannelRealization,
        cbs: &'a CodebookSet,
        config: &'a DecoderConfig,
    ) -> Result<Self> {
        let graph = cbs.graph();
        if y.len() != graph.num_resources() {
            return Err(Error::DimensionMismatch(format!(
                "received signal has {} samples but the graph has {} resources",
                y.len(),
                graph.num_resources()
            )));
        }
        if channel.matrix().len() < graph.num_resources()
            || channel.matrix()[0].len() < graph.num_users()
        {
            return Err(Error::DimensionMismatch(
                "channel matrix does not cover the factor graph".into(),
            ));
        }
        let mut state = MessageState::new(cbs, config)?;
        let mut dmpa_ctx = None;
        if config.variant == Variant::Dmpa {
            dmpa_ctx = Some(dmpa::DmpaContext::new(y, channel, cbs, &config.dmpa)?);
        } else {
            for k in 0..graph.num_resources() {
                let mut table = fn_exponents(y[k], channel, cbs, k)?;
                let peak = table.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                for value in table.iter_mut() {
                    *value -= peak;
                    if state.domain == Domain::Probability {
                        *value = value.exp();
                    }
                }
                state.psi[k] = table;
            }
        }
        Ok(Session {
            state,
            config,
            active: ActiveSet::full(graph.num_users(), cbs.size()),
            priors: uniform_priors(graph.num_users(), cbs.size()),
            counters: OpCounters::default(),
            dmpa_ctx,
        })
    }

    fn fn_message(&mut self, k: usize, j: usize) -> Result<Vec<f64>> {
        if let Some(ctx) = &self.dmpa_ctx {
            ctx.direct_message(&self.state, k, j, &self.active, &mut self.counters)
        } else {
            fn_update_masked(&self.state, k, j, &self.active, &mut self.counters)
        }
    }

    fn vn_message(&mut self, j: usize, k: usize) -> Result<Vec<f64>> {
        let (message, _) = vn_update_masked(
            &self.state,
            j,
            k,
            &self.priors[j],
            &self.active,
            &mut self.counters,
        )?;
        Ok(message)
    }

    fn iteration(&mut self) -> Result<()> {
        match self.config.schedule {
            Schedule::Flooding => {
                for k in 0..self.state.xi.len() {
                    for pos in 0..self.state.xi[k].len() {
                        let j = self.state.xi[k][pos];
                        if self.active.fixed[j].is_some() {
                            continue;
                        }
                        let message = self.fn_message(k, j)?;
                        let edge = self.state.edges_on_resource[k][pos];
                        self.state.fn_to_vn[edge] = message;
                    }
                }
                for j in 0..self.state.zeta.len() {
                    if self.active.fixed[j].is_some() {
                        continue;
                    }
                    for pos in 0..self.state.zeta[j].len() {
                        let k = self.state.zeta[j][pos];
                        let message = self.vn_message(j, k)?;
                        let edge = self.state.edges_of_user[j][pos];
                        self.state.vn_to_fn[edge] = message;
                    }
                }
            }
            Schedule::SerialVn => {
                for j in 0..self.state.zeta.len() {
                    if self.active.fixed[j].is_some() {
                        continue;
                    }
                    for pos in 0..self.state.zeta[j].len() {
                        let k = self.state.zeta[j][pos];
                        let message = self.fn_message(k, j)?;
                        let edge = self.state.edges_of_user[j][pos];
                        self.state.fn_to_vn[edge] = message;
                    }
                    for pos in 0..self.state.zeta[j].len() {
                        let k = self.state.zeta[j][pos];
                        let message = self.vn_message(j, k)?;
                        let edge = self.state.edges_of_user[j][pos];
                        self.state.vn_to_fn[edge] = message;
                    }
                }
            }
        }
        self.state.iteration += 1;
        self.counters.iterations += 1;
        Ok(())
    }

    /// Probability-scale normalized beliefs without touching the counters.
    fn raw_beliefs(&self) -> Vec<Vec<f64>> {
        let m = self.state.size;
        let mut all = Vec::with_capacity(self.state.zeta.len());
        for j in 0..self.state.zeta.len() {
            let mut bel = vec![0.0; m];
            if let Some(s) = self.active.fixed[j] {
                bel[s] = 1.0;
                all.push(bel);
                continue;
            }
            match self.state.domain {
                Domain::Probability => {
                    for (mx, value) in bel.iter_mut().enumerate() {
                        let mut v = self.priors[j][mx];
                        for &edge in &self.state.edges_of_user[j] {
                            v *= self.state.fn_to_vn[edge][mx];
                        }
                        *value = v;
                    }
                    let sum: f64 = bel.iter().sum();
                    if sum > 0.0 {
                        for value in bel.iter_mut() {
                            *value /= sum;
                        }
                    } else {
                        bel.fill(1.0 / m as f64);
                    }
                }
                Domain::Log => {
                    let mut logb = vec![0.0; m];
                    for (mx, value) in logb.iter_mut().enumerate() {
                        let mut v = self.priors[j][mx].ln();
                        for &edge in &self.state.edges_of_user[j] {
                            v += self.state.fn_to_vn[edge][mx];
                        }
                        *value = v;
                    }
                    let peak = logb.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    let mut sum = 0.0;
                    for (value, &lv) in bel.iter_mut().zip(logb.iter()) {
                        *value = (lv - peak).exp();
                        sum += *value;
                    }
                    for value in bel.iter_mut() {
                        *value /= sum;
                    }
                }
            }
            all.push(bel);
        }
        all
    }

    fn fix_users(&mut self, rng: Option<&mut dyn RngCore>) {
        let num_users = self.state.zeta.len();
        let beliefs = self.raw_beliefs();
        let want = self.config.pm_fixed_users.min(num_users);
        let chosen: Vec<usize> = match (self.config.pm_selection, rng) {
            (PmSelection::Reliability, _) => {
                let mut scored: Vec<(f64, usize)> = beliefs
                    .iter()
                    .enumerate()
                    .map(|(j, bel)| {
                        let mut sorted = bel.clone();
                        sorted.sort_by(|a, b| b.partial_cmp(a).expect("beliefs are finite"));
                        let ratio = if sorted[1] > 0.0 {
                            sorted[0] / sorted[1]
                        } else {
                            f64::INFINITY
                        };
                        (ratio, j)
                    })
                    .collect();
                scored.sort_by(|a, b| {
                    b.0.partial_cmp(&a.0)
                        .expect("ratios are not NaN")
                        .then(a.1.cmp(&b.1))
                });
                scored.into_iter().take(want).map(|(_, j)| j).collect()
            }
            (PmSelection::Random { .. }, Some(rng)) => sample_users(num_users, want, rng),
            (PmSelection::Random { seed }, None) => {
                let mut rng = <ChaCha8Rng as rand::SeedableRng>::seed_from_u64(seed);
                sample_users(num_users, want, &mut rng)
            }
        };
        for j in chosen {
            let bel = &beliefs[j];
            let mut best = 0usize;
            for mx in 1..bel.len() {
                if bel[mx] > bel[best] {
                    best = mx;
                }
            }
            self.active.fixed[j] = Some(best);
            let point_mass = match self.state.domain {
                Domain::Probability => {
                    let mut v = vec![0.0; self.state.size];
                    v[best] = 1.0;
                    v
                }
                Domain::Log => {
                    let mut v = vec![LOG_FLOOR; self.state.size];
                    v[best] = 0.0;
                    v
                }
            };
            for &edge in &self.state.edges_of_user[j] {
                self.state.vn_to_fn[edge] = point_mass.clone();
            }
        }
    }

    fn truncate_candidates(&mut self) {
        let keep = self.config.eml_candidates;
        if keep >= self.state.size {
            return;
        }
        for j in 0..self.state.zeta.len() {
            let mut reliability = vec![0.0f64; self.state.size];
            for &edge in &self.state.edges_of_user[j] {
                for (m, r) in reliability.iter_mut().enumerate() {
                    *r += self.state.fn_to_vn[edge][m];
                }
            }
            let mut order: Vec<usize> = (0..self.state.size).collect();
            order.sort_by(|&a, &b| {
                reliability[b]
                    .partial_cmp(&reliability[a])
                    .expect("reliabilities are finite")
                    .then(a.cmp(&b))
            });
            let mut kept: Vec<usize> = order.into_iter().take(keep).collect();
            kept.sort_unstable();
            for &edge in &self.state.edges_of_user[j] {
                for m in 0..self.state.size {
                    if !kept.contains(&m) {
                        self.state.vn_to_fn[edge][m] = LOG_FLOOR;
                    }
                }
            }
            self.active.candidates[j] = kept;
        }
    }

    fn run(&mut self, rng: Option<&mut dyn RngCore>) -> Result<()> {
        self.run_observed(rng, &mut |_, _| {})
    }

    fn run_observed(
        &mut self,
        rng: Option<&mut dyn RngCore>,
        observe: &mut dyn FnMut(&MessageState, Vec<Vec<f64>>),
    ) -> Result<()> {
        let step = |s: &mut Self, observe: &mut dyn FnMut(&MessageState, Vec<Vec<f64>>)| {
            s.iteration()?;
            observe(&s.state, s.raw_beliefs());
            Ok::<(), Error>(())
        };
        match self.config.variant {
            Variant::PmMpa => {
                let t_prime = self.config.pm_iterations;
                for _ in 0..t_prime {
                    step(self, observe)?;
                }
                if t_prime < self.config.iterations && self.config.pm_fixed_users > 0 {
                    self.fix_users(rng);
                }
                for _ in t_prime..self.config.iterations {
                    step(self, observe)?;
                }
            }
            Variant::Eml => {
                if self.config.iterations > 0 {
                    step(self, observe)?;
                    self.truncate_candidates();
                    for _ in 1..self.config.iterations {
                        step(self, observe)?;
                    }
                }
            }
            _ => {
                for _ in 0..self.config.iterations {
                    step(self, observe)?;
                }
            }
        }
        Ok(())
    }

    fn finalize(mut self) -> Result<DecodeResult> {
        beliefs_and_llr_masked(&self.state, &self.priors, &self.active, &mut self.counters)
    }
}

fn sample_users(num_users: usize, want: usize, rng: &mut dyn RngCore) -> Vec<usize> {
    let mut indices: Vec<usize> = (0..num_users).collect();
    for i in 0..want.min(num_users) {
        let span = (num_users - i) as u64;
        let pick = i + (rng.next_u64() % span) as usize;
        indices.swap(i, pick);
    }
    indices.truncate(want);
    indices
}

// ---------------------------------------------------------------------------
// Entry points
// ---------------------------------------------------------------------------

/// Runs the configured detector on one received frame.
///
/// Dispatches on the variant: partial marginalization and EML run their
/// specialized schedules, everything else runs plain iterations. Randomized
/// user selection draws from a stream seeded by the config; use
/// [`decode_with_rng`] to supply a per-frame stream instead.
pub fn decode(
    y: &[Complex64],
    channel: &ChannelRealization,
    cbs: &CodebookSet,
    config: &DecoderConfig,
) -> Result<DecodeResult> {
    let mut session = Session::new(y, channel, cbs, config)?;
    session.run(None)?;
    session.finalize()
}

/// [`decode`] with an explicit stream for randomized decoder choices.
pub fn decode_with_rng<R: RngCore>(
    y: &[Complex64],
    channel: &ChannelRealization,
    cbs: &CodebookSet,
    config: &DecoderConfig,
    rng: &mut R,
) -> Result<DecodeResult> {
    let mut session = Session::new(y, channel, cbs, config)?;
    session.run(Some(rng))?;
    session.finalize()
}

/// One iteration's snapshot from [`decode_traced`], in the session's domain.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationTrace {
    /// Per-edge η_{k→j} messages after the iteration, edge index order.
    pub fn_to_vn: Vec<Vec<f64>>,
    /// Per-edge η_{j→k} messages after the iteration, edge index order.
    pub vn_to_fn: Vec<Vec<f64>>,
    /// Normalized probability-scale symbol beliefs after the iteration.
    pub beliefs: Vec<Vec<f64>>,
}

/// Per-iteration message history recorded by [`decode_traced`].
#[derive(Debug, Clone, PartialEq)]
pub struct DecodeTrace {
    /// `(resource, user)` endpoints of each edge, in edge index order.
    pub edges: Vec<(usize, usize)>,
    /// One snapshot per executed iteration.
    pub iterations: Vec<IterationTrace>,
}

/// [`decode`] that also records every iteration's messages and beliefs.
///
/// Intended for single-frame debugging dumps; the decode result is
/// identical to what [`decode`] returns for the same inputs.
pub fn decode_traced(
    y: &[Complex64],
    channel: &ChannelRealization,
    cbs: &CodebookSet,
    config: &DecoderConfig,
) -> Result<(DecodeResult, DecodeTrace)> {
    let mut session = Session::new(y, channel, cbs, config)?;
    let mut edges = vec![(0usize, 0usize); session.state.num_edges()];
    for k in 0..session.state.xi.len() {
        for pos in 0..session.state.xi[k].len() {
            edges[session.state.edges_on_resource[k][pos]] = (k, session.state.xi[k][pos]);
        }
    }
    let mut iterations = Vec::with_capacity(config.iterations);
    session.run_observed(None, &mut |state, beliefs| {
        iterations.push(IterationTrace {
            fn_to_vn: state.fn_to_vn.clone(),
            vn_to_fn: state.vn_to_fn.clone(),
            beliefs,
        });
    })?;
    let result = session.finalize()?;
    Ok((result, DecodeTrace { edges, iterations }))
}

/// Partial-marginalization decode; forces the `pm-mpa` variant.
pub fn decode_pm(
    y: &[Complex64],
    channel: &ChannelRealization,
    cbs: &CodebookSet,
    config: &DecoderConfig,
) -> Result<DecodeResult> {
    let cfg = DecoderConfig {
        variant: Variant::PmMpa,
        ..config.clone()
    };
    decode(y, channel, cbs, &cfg)
}

/// EML decode; forces the `eml` variant.
pub fn decode_eml(
    y: &[Complex64],
    channel: &ChannelRealization,
    cbs: &CodebookSet,
    config: &DecoderConfig,
) -> Result<DecodeResult> {
    let cfg = DecoderConfig {
        variant: Variant::Eml,
        ..config.clone()
    };
    decode(y, channel, cbs, &cfg)
}

// ---------------------------------------------------------------------------
// Superposition utilities
// ---------------------------------------------------------------------------

/// All M^(d_f) superposed codeword sums Σ_{j in ξ_k} x_{k,j}^{m_j} at
/// resource `k`, mixed-radix ordered with the lowest-indexed user most
/// significant.
pub fn superposition_constellation(cbs: &CodebookSet, k: usize) -> Result<Vec<Complex64>> {
    let graph = cbs.graph();
    if k >= graph.num_resources() {
        return Err(Error::IndexOutOfRange {
            what: "resource",
            index: k + 1,
            limit: graph.num_resources(),
        });
    }
    let xi = graph.users_on_resource(k);
    let m = cbs.size();
    let count = m.pow(xi.len() as u32);
    let mut points = Vec::with_capacity(count);
    let mut digits = vec![0usize; xi.len()];
    for _ in 0..count {
        let z: Complex64 = xi
            .iter()
            .zip(digits.iter())
            .map(|(&j, &sym)| cbs.component(k, j, sym))
            .sum();
        points.push(z);
        for pos in (0..digits.len()).rev() {
            digits[pos] += 1;
            if digits[pos] < m {
                break;
            }
            digits[pos] = 0;
        }
    }
    Ok(points)
}

/// Downlink log metric `−|y_k − h_k·z|²/(2σ²)` for a superposed point `z`.
pub fn superposition_metric(y_k: Complex64, h_k: Complex64, z: Complex64, sigma_sq: f64) -> f64 {
    -(y_k - h_k * z).norm_sqr() / (2.0 * sigma_sq)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codebook::{assemble_codebooks, ConstellationOperator, MotherConstellation};
    use crate::graph::FactorGraph;
    use crate::link::{self, ChannelModel};
    use crate::rng::{frame_rng, StreamTag};
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    fn awgn(cbs: &CodebookSet, n0: f64) -> ChannelRealization {
        let mut rng = frame_rng(0, 0, StreamTag::Channel);
        link::realize_channel(ChannelModel::Awgn, cbs.graph(), n0, &mut rng).unwrap()
    }

    fn single_fn_system(num_users: usize) -> CodebookSet {
        let graph = FactorGraph::from_rows(vec![vec![1; num_users]]).unwrap();
        let points = vec![vec![
            Complex64::new(0.6, 0.1),
            Complex64::new(-0.2, 0.5),
            Complex64::new(-0.55, -0.3),
            Complex64::new(0.15, -0.45),
        ]];
        let mother = MotherConstellation::custom(points).unwrap();
        let ops = vec![ConstellationOperator::identity(1); num_users];
        assemble_codebooks(&graph, &mother, &ops).unwrap()
    }

    fn received(cbs: &CodebookSet, frame: &[Vec<u8>], ch: &ChannelRealization, seed: u64) -> Vec<Complex64> {
        let x = link::encode(&frame.to_vec(), cbs, BitMapping::Natural).unwrap();
        let mut rng = frame_rng(seed, 0, StreamTag::Noise);
        link::transmit(&x, cbs.graph(), ch, &mut rng).unwrap()
    }

    #[test]
    fn init_messages_are_uniform() {
        let cbs = CodebookSet::star_qam_4x6();
        let state = init_messages(&cbs, &DecoderConfig::mpa()).unwrap();
        let msg = state.message_to_fn(0, 0).unwrap();
        assert!(msg.iter().all(|&v| (v - 0.25).abs() < 1e-15));
        assert_abs_diff_eq!(msg.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
        let state = init_messages(&cbs, &DecoderConfig::log_mpa()).unwrap();
        let msg = state.message_to_fn(0, 0).unwrap();
        assert!(msg.iter().all(|&v| (v + 4.0f64.ln()).abs() < 1e-15));
    }

    #[test]
    fn likelihood_peaks_at_the_transmitted_combination() {
        let cbs = CodebookSet::star_qam_4x6();
        let ch = awgn(&cbs, 0.2);
        let frame = vec![
            vec![0, 1],
            vec![1, 0],
            vec![0, 0],
            vec![1, 1],
            vec![0, 1],
            vec![1, 0],
        ];
        let x = link::encode(&frame, &cbs, BitMapping::Natural).unwrap();
        let y = link::superpose(&x, cbs.graph(), &ch).unwrap();
        let k = 1;
        let table = fn_likelihood(y[k], &ch, &cbs, k, Domain::Probability).unwrap();
        assert_eq!(table.len(), 64);
        let symbols: Vec<usize> = frame
            .iter()
            .map(|bits| link::bits_to_symbol(bits, BitMapping::Natural).unwrap() - 1)
            .collect();
        let xi = cbs.graph().users_on_resource(k);
        let index = xi
            .iter()
            .fold(0usize, |acc, &j| acc * 4 + symbols[j]);
        assert_abs_diff_eq!(table[index], 1.0, epsilon = 1e-12);
        for (i, &v) in table.iter().enumerate() {
            if i != index {
                assert!(v < 1.0);
            }
        }
        let log_table = fn_likelihood(y[k], &ch, &cbs, k, Domain::Log).unwrap();
        assert_abs_diff_eq!(log_table[index], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn likelihood_is_invariant_under_common_phase() {
        let cbs = CodebookSet::star_qam_4x6();
        let mut rng = frame_rng(4, 1, StreamTag::Channel);
        let ch =
            link::realize_channel(ChannelModel::RayleighUplink, cbs.graph(), 0.3, &mut rng)
                .unwrap();
        let frame = vec![vec![1, 0]; 6];
        let y = received(&cbs, &frame, &ch, 4);
        let rot = Complex64::from_polar(1.0, 1.1);
        let rotated: Vec<Vec<Complex64>> = ch
            .matrix()
            .iter()
            .map(|row| row.iter().map(|&h| rot * h).collect())
            .collect();
        let ch_rot =
            ChannelRealization::from_matrix(ChannelModel::RayleighUplink, rotated, 0.3).unwrap();
        for k in 0..4 {
            let base = fn_likelihood(y[k], &ch, &cbs, k, Domain::Log).unwrap();
            let turned = fn_likelihood(rot * y[k], &ch_rot, &cbs, k, Domain::Log).unwrap();
            for (a, b) in base.iter().zip(turned.iter()) {
                assert_abs_diff_eq!(a, b, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn fn_update_with_single_user_returns_psi() {
        let cbs = single_fn_system(1);
        let ch = awgn(&cbs, 0.5);
        let y = [Complex64::new(0.4, 0.2)];
        let mut state = init_messages(&cbs, &DecoderConfig::mpa()).unwrap();
        let table = fn_likelihood(y[0], &ch, &cbs, 0, Domain::Probability).unwrap();
        state.set_likelihood(0, table.clone()).unwrap();
        let msg = fn_update(&state, 0, 0).unwrap();
        for (a, b) in msg.iter().zip(table.iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-15);
        }
    }

    #[test]
    fn fn_update_with_uniform_messages_gives_row_sums() {
        let cbs = single_fn_system(2);
        let ch = awgn(&cbs, 0.7);
        let y = [Complex64::new(-0.1, 0.3)];
        let mut state = init_messages(&cbs, &DecoderConfig::mpa()).unwrap();
        let table = fn_likelihood(y[0], &ch, &cbs, 0, Domain::Probability).unwrap();
        state.set_likelihood(0, table.clone()).unwrap();
        let msg = fn_update(&state, 0, 0).unwrap();
        for m in 0..4 {
            let expected: f64 = (0..4).map(|m2| table[m * 4 + m2] * 0.25).sum();
            assert_relative_eq!(msg[m], expected, max_relative = 1e-12);
        }
    }

    #[test]
    fn vn_update_forwards_the_other_edge() {
        let cbs = CodebookSet::star_qam_4x6();
        let mut state = init_messages(&cbs, &DecoderConfig::mpa()).unwrap();
        let incoming = vec![0.1, 0.2, 0.3, 0.4];
        let zeta = cbs.graph().resources_of_user(0).to_vec();
        state
            .set_message_to_vn(zeta[1], 0, incoming.clone())
            .unwrap();
        let priors = vec![0.25; 4];
        let (msg, fallback) = vn_update(&state, 0, zeta[0], &priors).unwrap();
        assert!(!fallback);
        assert_abs_diff_eq!(msg.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
        for (a, b) in msg.iter().zip(incoming.iter()) {
            assert_relative_eq!(a, b, max_relative = 1e-12);
        }
    }

    #[test]
    fn vn_update_falls_back_to_uniform_on_zero_product() {
        let cbs = CodebookSet::star_qam_4x6();
        let mut state = init_messages(&cbs, &DecoderConfig::mpa()).unwrap();
        let zeta = cbs.graph().resources_of_user(0).to_vec();
        state
            .set_message_to_vn(zeta[1], 0, vec![0.0; 4])
            .unwrap();
        let priors = vec![0.25; 4];
        let (msg, fallback) = vn_update(&state, 0, zeta[0], &priors).unwrap();
        assert!(fallback);
        assert!(msg.iter().all(|&v| (v - 0.25).abs() < 1e-12));
    }

    #[test]
    fn llr_grouping_matches_the_reference_formula() {
        let cbs = CodebookSet::star_qam_4x6();
        let mut state = init_messages(&cbs, &DecoderConfig::mpa()).unwrap();
        let zeta = cbs.graph().resources_of_user(0).to_vec();
        let a = vec![0.4, 0.3, 0.2, 0.1];
        let b = vec![0.1, 0.4, 0.2, 0.3];
        state.set_message_to_vn(zeta[0], 0, a.clone()).unwrap();
        state.set_message_to_vn(zeta[1], 0, b.clone()).unwrap();
        let result = beliefs_and_llr(&state, &uniform_priors(6, 4)).unwrap();
        let i: Vec<f64> = (0..4).map(|m| a[m] * b[m]).collect();
        let expected_first = ((i[0] + i[1]) / (i[2] + i[3])).ln();
        let expected_second = ((i[0] + i[2]) / (i[1] + i[3])).ln();
        assert_relative_eq!(result.llr[0][0], expected_first, max_relative = 1e-10);
        assert_relative_eq!(result.llr[0][1], expected_second, max_relative = 1e-10);
        assert_eq!(result.hard_bits[0][0], u8::from(expected_first < 0.0));
    }

    #[test]
    fn concentrated_beliefs_give_saturated_llrs() {
        let cbs = CodebookSet::star_qam_4x6();
        let mut state = init_messages(&cbs, &DecoderConfig::mpa()).unwrap();
        let zeta = cbs.graph().resources_of_user(2).to_vec();
        state
            .set_message_to_vn(zeta[0], 2, vec![1.0, 0.0, 0.0, 0.0])
            .unwrap();
        state
            .set_message_to_vn(zeta[1], 2, vec![1.0, 0.0, 0.0, 0.0])
            .unwrap();
        let result = beliefs_and_llr(&state, &uniform_priors(6, 4)).unwrap();
        assert_eq!(result.llr[2], vec![LLR_MAX, LLR_MAX]);
        assert_eq!(result.hard_bits[2], vec![0, 0]);
        assert_eq!(result.hard_symbols[2], 0);
    }

    #[test]
    fn zero_iterations_yield_uniform_outputs() {
        let cbs = CodebookSet::star_qam_4x6();
        let ch = awgn(&cbs, 0.1);
        let frame = vec![vec![0, 1]; 6];
        let y = received(&cbs, &frame, &ch, 9);
        let config = DecoderConfig {
            iterations: 0,
            ..DecoderConfig::mpa()
        };
        let result = decode(&y, &ch, &cbs, &config).unwrap();
        for j in 0..6 {
            assert_eq!(result.llr[j], vec![0.0, 0.0]);
            assert_eq!(result.hard_bits[j], vec![0, 0]);
            for &b in &result.beliefs[j] {
                assert_abs_diff_eq!(b, 0.25, epsilon = 1e-12);
            }
        }
        assert_eq!(result.counters.iterations, 0);
    }

    #[test]
    fn high_snr_awgn_frames_decode_to_the_transmitted_symbols() {
        let cbs = CodebookSet::star_qam_4x6();
        let n0 = link::n0_from_ebn0_db(30.0, cbs.avg_symbol_energy(), 2);
        let ch = awgn(&cbs, n0);
        let config = DecoderConfig::mpa();
        let mut correct = 0usize;
        for f in 0..100u64 {
            let mut bit_rng = frame_rng(21, f, StreamTag::Bits);
            let frame = link::random_frame_bits(6, 2, &mut bit_rng);
            let x = link::encode(&frame, &cbs, BitMapping::Natural).unwrap();
            let mut noise_rng = frame_rng(21, f, StreamTag::Noise);
            let y = link::transmit(&x, cbs.graph(), &ch, &mut noise_rng).unwrap();
            let result = decode(&y, &ch, &cbs, &config).unwrap();
            let sent: Vec<usize> = frame
                .iter()
                .map(|bits| link::bits_to_symbol(bits, BitMapping::Natural).unwrap() - 1)
                .collect();
            if result.hard_symbols == sent {
                correct += 1;
            }
        }
        assert!(correct >= 99, "only {correct} of 100 frames were exact");
    }

    #[test]
    fn pm_with_full_standard_phase_equals_plain_mpa() {
        let cbs = CodebookSet::star_qam_4x6();
        let mut rng = frame_rng(31, 5, StreamTag::Channel);
        let ch = link::realize_channel(
            ChannelModel::RayleighUplink,
            cbs.graph(),
            0.05,
            &mut rng,
        )
        .unwrap();
        let frame = vec![
            vec![0, 0],
            vec![0, 1],
            vec![1, 0],
            vec![1, 1],
            vec![0, 1],
            vec![1, 0],
        ];
        let y = received(&cbs, &frame, &ch, 31);
        let plain = decode(&y, &ch, &cbs, &DecoderConfig::mpa()).unwrap();
        let degenerate = decode(&y, &ch, &cbs, &DecoderConfig::pm_mpa(10, 3)).unwrap();
        assert_eq!(plain.llr, degenerate.llr);
        assert_eq!(plain.beliefs, degenerate.beliefs);
        let no_fixing = decode(&y, &ch, &cbs, &DecoderConfig::pm_mpa(5, 0)).unwrap();
        assert_eq!(plain.llr, no_fixing.llr);
    }

    #[test]
    fn pm_fixing_all_users_saturates_their_llrs() {
        let cbs = CodebookSet::star_qam_4x6();
        let ch = awgn(&cbs, 0.05);
        let frame = vec![vec![1, 0]; 6];
        let y = received(&cbs, &frame, &ch, 8);
        let result = decode(&y, &ch, &cbs, &DecoderConfig::pm_mpa(5, 6)).unwrap();
        for j in 0..6 {
            for i in 0..2 {
                assert_eq!(result.llr[j][i].abs(), LLR_MAX);
                assert_eq!(result.hard_bits[j][i], u8::from(result.llr[j][i] < 0.0));
            }
            let bits = link::symbol_to_bits(
                result.hard_symbols[j] + 1,
                2,
                BitMapping::Natural,
            )
            .unwrap();
            assert_eq!(result.hard_bits[j], bits);
        }
    }

    #[test]
    fn pm_reduces_fn_multiplies() {
        let cbs = CodebookSet::star_qam_4x6();
        let mut rng = frame_rng(77, 2, StreamTag::Channel);
        let ch = link::realize_channel(
            ChannelModel::RayleighUplink,
            cbs.graph(),
            0.1,
            &mut rng,
        )
        .unwrap();
        let frame = vec![vec![0, 1]; 6];
        let y = received(&cbs, &frame, &ch, 77);
        let plain = decode(&y, &ch, &cbs, &DecoderConfig::mpa()).unwrap();
        let pm = decode(&y, &ch, &cbs, &DecoderConfig::pm_mpa(5, 3)).unwrap();
        assert!(pm.counters.fn_multiplies < plain.counters.fn_multiplies);
    }

    #[test]
    fn eml_with_all_candidates_equals_log_mpa() {
        let cbs = CodebookSet::star_qam_4x6();
        let mut rng = frame_rng(51, 3, StreamTag::Channel);
        let ch = link::realize_channel(
            ChannelModel::RayleighUplink,
            cbs.graph(),
            0.08,
            &mut rng,
        )
        .unwrap();
        let frame = vec![
            vec![1, 1],
            vec![0, 0],
            vec![0, 1],
            vec![1, 0],
            vec![1, 1],
            vec![0, 0],
        ];
        let y = received(&cbs, &frame, &ch, 51);
        let log = decode(&y, &ch, &cbs, &DecoderConfig::log_mpa()).unwrap();
        let eml = decode(&y, &ch, &cbs, &DecoderConfig::eml(4)).unwrap();
        assert_eq!(log.llr, eml.llr);
        assert_eq!(log.beliefs, eml.beliefs);
        assert_eq!(log.hard_symbols, eml.hard_symbols);
    }

    #[test]
    fn eml_truncation_bounds_the_search_space() {
        let cbs = CodebookSet::star_qam_4x6();
        let ch = awgn(&cbs, 0.1);
        let frame = vec![vec![0, 0]; 6];
        let y = received(&cbs, &frame, &ch, 13);
        let result = decode(&y, &ch, &cbs, &DecoderConfig::eml(2)).unwrap();
        let full_first = 12 * 16;
        let truncated_rest = 9 * 12 * 4;
        assert!(result.counters.fn_combinations <= (full_first + truncated_rest) as u64);
        assert!(result.counters.fn_combinations > full_first as u64);
    }

    #[test]
    fn max_log_variant_matches_plain_max_kernel() {
        let cbs = CodebookSet::star_qam_4x6();
        let ch = awgn(&cbs, 0.2);
        let frame = vec![vec![1, 0]; 6];
        let y = received(&cbs, &frame, &ch, 17);
        let max_log = decode(&y, &ch, &cbs, &DecoderConfig::max_log()).unwrap();
        let forced = DecoderConfig {
            max_star: MaxStarMode::PlainMax,
            ..DecoderConfig::log_mpa()
        };
        let log_plain = decode(&y, &ch, &cbs, &forced).unwrap();
        assert_eq!(max_log.llr, log_plain.llr);
    }

    #[test]
    fn serial_schedule_agrees_at_high_snr() {
        let cbs = CodebookSet::star_qam_4x6();
        let n0 = link::n0_from_ebn0_db(14.0, cbs.avg_symbol_energy(), 2);
        let ch = awgn(&cbs, n0);
        for f in 0..20u64 {
            let mut bit_rng = frame_rng(61, f, StreamTag::Bits);
            let frame = link::random_frame_bits(6, 2, &mut bit_rng);
            let x = link::encode(&frame, &cbs, BitMapping::Natural).unwrap();
            let mut noise_rng = frame_rng(61, f, StreamTag::Noise);
            let y = link::transmit(&x, cbs.graph(), &ch, &mut noise_rng).unwrap();
            let flooding = decode(&y, &ch, &cbs, &DecoderConfig::mpa()).unwrap();
            let serial = decode(
                &y,
                &ch,
                &cbs,
                &DecoderConfig {
                    schedule: Schedule::SerialVn,
                    ..DecoderConfig::mpa()
                },
            )
            .unwrap();
            assert_eq!(flooding.hard_bits, serial.hard_bits);
        }
    }

    #[test]
    fn config_validation_catches_bad_parameters() {
        let cbs = CodebookSet::star_qam_4x6();
        assert!(DecoderConfig::pm_mpa(11, 3).validate(&cbs).is_err());
        assert!(DecoderConfig::pm_mpa(0, 3).validate(&cbs).is_err());
        assert!(DecoderConfig::pm_mpa(5, 7).validate(&cbs).is_err());
        assert!(DecoderConfig::eml(0).validate(&cbs).is_err());
        assert!(DecoderConfig::eml(5).validate(&cbs).is_err());
        let bad_lut = DecoderConfig {
            max_star: MaxStarMode::Lut { intervals: 0 },
            ..DecoderConfig::log_mpa()
        };
        assert!(bad_lut.validate(&cbs).is_err());
        let bad_dmpa = DecoderConfig {
            dmpa: DmpaParams {
                grid_step: 0.0,
                grid_extent: None,
            },
            ..DecoderConfig::dmpa()
        };
        assert!(bad_dmpa.validate(&cbs).is_err());
    }

    #[test]
    fn superposition_constellation_has_full_size() {
        let cbs = CodebookSet::star_qam_4x6();
        let z = superposition_constellation(&cbs, 2).unwrap();
        assert_eq!(z.len(), 64);
        let y = Complex64::new(0.3, -0.2);
        let h = Complex64::new(0.9, 0.4);
        assert_abs_diff_eq!(superposition_metric(y, h, y / h, 0.5), 0.0, epsilon = 1e-12);
        let far = superposition_metric(y, h, z[0] + Complex64::new(3.0, 0.0), 0.5);
        let near = superposition_metric(y, h, y / h + Complex64::new(0.01, 0.0), 0.5);
        assert!(near > far);
    }

    #[test]
    fn pm_random_selection_is_reproducible() {
        let cbs = CodebookSet::star_qam_4x6();
        let ch = awgn(&cbs, 0.15);
        let frame = vec![vec![0, 1]; 6];
        let y = received(&cbs, &frame, &ch, 3);
        let config = DecoderConfig {
            pm_selection: PmSelection::Random { seed: 99 },
            ..DecoderConfig::pm_mpa(2, 3)
        };
        let a = decode(&y, &ch, &cbs, &config).unwrap();
        let b = decode(&y, &ch, &cbs, &config).unwrap();
        assert_eq!(a.llr, b.llr);
        let mut rng = frame_rng(5, 0, StreamTag::Decoder);
        let c = decode_with_rng(&y, &ch, &cbs, &config, &mut rng).unwrap();
        assert_eq!(c.llr.len(), 6);
    }

    #[test]
    fn traced_decode_matches_decode_and_records_every_iteration() {
        let cbs = CodebookSet::star_qam_4x6();
        let ch = awgn(&cbs, 0.4);
        let frame = vec![vec![1, 0]; 6];
        let y = received(&cbs, &frame, &ch, 8);
        for config in [
            DecoderConfig::mpa(),
            DecoderConfig::log_mpa(),
            DecoderConfig::pm_mpa(4, 2),
            DecoderConfig {
                schedule: Schedule::SerialVn,
                ..DecoderConfig::mpa()
            },
        ] {
            let (result, trace) = decode_traced(&y, &ch, &cbs, &config).unwrap();
            assert_eq!(result, decode(&y, &ch, &cbs, &config).unwrap());
            assert_eq!(trace.iterations.len(), config.iterations);
            assert_eq!(trace.edges.len(), 12);
            for (k, j) in &trace.edges {
                assert_eq!(cbs.graph().rows()[*k][*j], 1);
            }
            for snap in &trace.iterations {
                assert_eq!(snap.fn_to_vn.len(), 12);
                assert_eq!(snap.vn_to_fn.len(), 12);
                for bel in &snap.beliefs {
                    assert_abs_diff_eq!(bel.iter().sum::<f64>(), 1.0, epsilon = 1e-9);
                }
            }
        }
    }
}
