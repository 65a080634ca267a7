//! Exact MAP/ML reference by exhaustive enumeration.
//!
//! The oracle builds the full joint posterior over all M^J multiuser
//! codeword tuples and derives marginals, exact bit LLRs, and the ML joint
//! decision from it. It deliberately stays a brute force: no pruning, no
//! sphere search, just a stabilized log-domain sweep over every tuple. A
//! table budget (default 2^24 entries) turns oversized requests into an
//! explicit refusal instead of a silent truncation.
//!
//! Tuples are enumerated lexicographically over (m_1, ..., m_J) with the
//! first user most significant, and ties in the ML decision resolve to the
//! lexicographically smallest tuple.
//!
//! # Example
//!
//! ```
//! use scma_core::codebook::CodebookSet;
//! use scma_core::link::{self, BitMapping, ChannelModel};
//! use scma_core::oracle;
//! use scma_core::rng::{frame_rng, StreamTag};
//!
//! let cbs = CodebookSet::star_qam_4x6();
//! let bits = vec![vec![1, 0]; 6];
//! let x = link::encode(&bits, &cbs, BitMapping::Natural).unwrap();
//! let ch = link::realize_channel(
//!     ChannelModel::Awgn,
//!     cbs.graph(),
//!     1e-6,
//!     &mut frame_rng(0, 0, StreamTag::Channel),
//! )
//! .unwrap();
//! let y = link::superpose(&x, cbs.graph(), &ch).unwrap();
//! let jp = oracle::joint_posterior(&y, &ch, &cbs).unwrap();
//! assert_eq!(oracle::ml_joint_detect(&jp), vec![2; 6]);
//! ```

use num_complex::Complex64;

use crate::codebook::CodebookSet;
use crate::decoder::llr_pair;
use crate::error::{Error, Result};
use crate::link::{symbols_with_bit, BitMapping, ChannelRealization};

/// Default enumeration budget in table entries.
pub const DEFAULT_BUDGET: u128 = 1 << 24;

/// The exact joint posterior p(X|y) over all M^J symbol tuples.
#[derive(Debug, Clone, PartialEq)]
pub struct JointPosterior {
    num_users: usize,
    size: usize,
    table: Vec<f64>,
    log_normalizer: f64,
}

impl JointPosterior {
    /// Wraps a synthetic normalized table; entries must be nonnegative and
    /// sum to 1 within 1e-9.
    pub fn from_table(table: Vec<f64>, num_users: usize, size: usize) -> Result<Self> {
        let expected = size
            .checked_pow(num_users as u32)
            .ok_or_else(|| Error::Config("joint table size overflows usize".into()))?;
        if table.len() != expected {
            return Err(Error::DimensionMismatch(format!(
                "joint table has {} entries but {}^{} = {} are required",
                table.len(),
                size,
                num_users,
                expected
            )));
        }
        if table.iter().any(|&p| !(p >= 0.0)) {
            return Err(Error::Config(
                "joint table entries must be nonnegative".into(),
            ));
        }
        let sum: f64 = table.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "joint table sums to {sum}, expected 1"
            )));
        }
        Ok(JointPosterior {
            num_users,
            size,
            table,
            log_normalizer: 0.0,
        })
    }

    /// User count J.
    pub fn num_users(&self) -> usize {
        self.num_users
    }

    /// Codebook size M.
    pub fn size(&self) -> usize {
        self.size
    }

    /// The normalized probability table in lexicographic tuple order.
    pub fn table(&self) -> &[f64] {
        &self.table
    }

    /// Natural log of the normalization constant Σ_X Π_k f(y_k|X).
    pub fn log_normalizer(&self) -> f64 {
        self.log_normalizer
    }

    /// Lexicographic index of a 0-based symbol tuple.
    pub fn index_of(&self, tuple: &[usize]) -> Result<usize> {
        if tuple.len() != self.num_users {
            return Err(Error::DimensionMismatch(format!(
                "tuple has {} entries but the posterior covers {} users",
                tuple.len(),
                self.num_users
            )));
        }
        let mut index = 0usize;
        for &sym in tuple {
            if sym >= self.size {
                return Err(Error::IndexOutOfRange {
                    what: "codeword",
                    index: sym + 1,
                    limit: self.size,
                });
            }
            index = index * self.size + sym;
        }
        Ok(index)
    }

    /// The 0-based symbol tuple at a lexicographic index.
    pub fn tuple_of(&self, mut index: usize) -> Vec<usize> {
        let mut tuple = vec![0usize; self.num_users];
        for slot in tuple.iter_mut().rev() {
            *slot = index % self.size;
            index /= self.size;
        }
        tuple
    }

    /// Posterior probability of one tuple.
    pub fn entry(&self, tuple: &[usize]) -> Result<f64> {
        Ok(self.table[self.index_of(tuple)?])
    }
}

/// Exact joint posterior with the default 2^24-entry budget.
pub fn joint_posterior(
    y: &[Complex64],
    channel: &ChannelRealization,
    cbs: &CodebookSet,
) -> Result<JointPosterior> {
    joint_posterior_with_budget(y, channel, cbs, DEFAULT_BUDGET)
}

/// Exact joint posterior, refusing enumerations beyond `budget` entries.
///
/// Entry (m_1, ..., m_J) is proportional to
/// `Π_k exp(−‖y_k − Σ_{j in ξ_k} h_{k,j}·x_{k,j}^{m_j}‖²/N0)`; the sweep
/// runs in the log domain and exponentiates around the maximum.
pub fn joint_posterior_with_budget(
    y: &[Complex64],
    channel: &ChannelRealization,
    cbs: &CodebookSet,
    budget: u128,
) -> Result<JointPosterior> {
    let graph = cbs.graph();
    let num_users = graph.num_users();
    let num_resources = graph.num_resources();
    let m = cbs.size();
    if y.len() != num_resources {
        return Err(Error::DimensionMismatch(format!(
            "received signal has {} samples but the graph has {} resources",
            y.len(),
            num_resources
        )));
    }
    let required = (m as u128)
        .checked_pow(num_users as u32)
        .ok_or(Error::BudgetExceeded {
            required: u128::MAX,
            budget,
        })?;
    if required > budget {
        return Err(Error::BudgetExceeded { required, budget });
    }
    let count = required as usize;

    let faded: Vec<Vec<Vec<Complex64>>> = (0..num_resources)
        .map(|k| {
            graph
                .users_on_resource(k)
                .iter()
                .map(|&j| {
                    (0..m)
                        .map(|sym| channel.coefficient(k, j) * cbs.component(k, j, sym))
                        .collect()
                })
                .collect()
        })
        .collect();
    let n0 = channel.n0();

    let mut log_table = vec![0.0f64; count];
    let mut tuple = vec![0usize; num_users];
    for entry in log_table.iter_mut() {
        let mut logp = 0.0;
        for k in 0..num_resources {
            let sum: Complex64 = graph
                .users_on_resource(k)
                .iter()
                .enumerate()
                .map(|(pos, &j)| faded[k][pos][tuple[j]])
                .sum();
            logp -= (y[k] - sum).norm_sqr() / n0;
        }
        *entry = logp;
        for slot in tuple.iter_mut().rev() {
            *slot += 1;
            if *slot < m {
                break;
            }
            *slot = 0;
        }
    }

    let peak = log_table.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    let mut table = vec![0.0f64; count];
    for (out, &logp) in table.iter_mut().zip(log_table.iter()) {
        let v = (logp - peak).exp();
        *out = v;
        total += v;
    }
    for out in table.iter_mut() {
        *out /= total;
    }
    Ok(JointPosterior {
        num_users,
        size: m,
        table,
        log_normalizer: peak + total.ln(),
    })
}

/// Marginal posterior of user `j`: the joint table summed over all tuples
/// holding m_j fixed.
pub fn marginal_posterior(jp: &JointPosterior, j: usize) -> Result<Vec<f64>> {
    if j >= jp.num_users {
        return Err(Error::IndexOutOfRange {
            what: "user",
            index: j + 1,
            limit: jp.num_users,
        });
    }
    let stride = jp.size.pow((jp.num_users - 1 - j) as u32);
    let mut marginal = vec![0.0f64; jp.size];
    for (index, &p) in jp.table.iter().enumerate() {
        marginal[(index / stride) % jp.size] += p;
    }
    Ok(marginal)
}

/// Exact bit LLRs of user `j` from its marginal posterior, using the same
/// bit grouping and clamping as the decoder.
pub fn exact_bit_llr(jp: &JointPosterior, j: usize, mapping: BitMapping) -> Result<Vec<f64>> {
    let bits = (jp.size as f64).log2().round() as u32;
    if jp.size != (1usize << bits) {
        return Err(Error::InvalidDecoderConfig(format!(
            "codebook size {} is not a power of two, bit LLRs are undefined",
            jp.size
        )));
    }
    let marginal = marginal_posterior(jp, j)?;
    let mut llr = Vec::with_capacity(bits as usize);
    for bit in 0..bits as usize {
        let num: f64 = symbols_with_bit(bit, 0, bits, mapping)
            .into_iter()
            .map(|m| marginal[m])
            .sum();
        let den: f64 = symbols_with_bit(bit, 1, bits, mapping)
            .into_iter()
            .map(|m| marginal[m])
            .sum();
        llr.push(llr_pair(num, den));
    }
    Ok(llr)
}

/// Maximum-posterior symbol tuple; ties break to the lexicographically
/// smallest tuple.
pub fn ml_joint_detect(jp: &JointPosterior) -> Vec<usize> {
    let mut best = 0usize;
    for (index, &p) in jp.table.iter().enumerate() {
        if p > jp.table[best] {
            best = index;
        }
    }
    jp.tuple_of(best)
}
