//! Link-level laboratory for sparse code multiple access (SCMA).
//!
//! SCMA overloads a small set of shared resources: each user spreads its
//! symbols over a sparse subset of resource elements, and a message-passing
//! detector untangles the collisions at the receiver. This crate builds the
//! whole chain and keeps every stage inspectable:
//!
//! - [`graph`]: sparse factor graphs mapping users to resource elements,
//!   including the standard 4x6 system with three users per resource.
//! - [`codebook`]: star-QAM mother constellations, per-user phase rotations,
//!   and distance KPIs (minimum Euclidean and product distances).
//! - [`link`]: bit mapping, encoding, AWGN and Rayleigh uplink or downlink
//!   channels, and noise scaling from Eb/N0.
//! - [`decoder`]: the message-passing detector family, from exact MPA
//!   through log-domain, max-log, lookup-table max-star, partial marginal,
//!   expectation-propagation-style list, and discretized (FFT) variants,
//!   with operation counters and per-iteration traces.
//! - [`oracle`]: exact MAP bit LLRs and ML frame decisions by enumeration,
//!   used to validate the iterative detectors.
//! - [`sim`]: Monte Carlo BER/SER sweeps with common random numbers across
//!   detectors.
//! - [`fileio`]: the JSON codebook and sweep-config formats and the CSV
//!   result table.
//! - [`rng`]: deterministic per-frame random streams so every realization
//!   is reproducible from one seed.
//!
//! # Example
//!
//! Send one frame from six users over four resources and decode it:
//!
//! ```
//! use scma_core::codebook::CodebookSet;
//! use scma_core::decoder::{decode, DecoderConfig};
//! use scma_core::link::{self, BitMapping, ChannelModel};
//! use scma_core::rng::{frame_rng, StreamTag};
//!
//! # fn main() -> scma_core::Result<()> {
//! let cbs = CodebookSet::star_qam_4x6();
//! let bits = vec![vec![0, 1]; cbs.num_users()];
//! let x = link::encode(&bits, &cbs, BitMapping::Natural)?;
//!
//! let n0 = link::n0_from_ebn0_db(12.0, cbs.avg_symbol_energy(), 2);
//! let mut channel_rng = frame_rng(1, 0, StreamTag::Channel);
//! let channel =
//!     link::realize_channel(ChannelModel::Awgn, cbs.graph(), n0, &mut channel_rng)?;
//! let mut noise_rng = frame_rng(1, 0, StreamTag::Noise);
//! let y = link::transmit(&x, cbs.graph(), &channel, &mut noise_rng)?;
//!
//! let result = decode(&y, &channel, &cbs, &DecoderConfig::mpa())?;
//! assert_eq!(result.hard_bits, bits);
//! # Ok(())
//! # }
//! ```

// Indexed loops mirror the K x J matrix notation, and negated float
// comparisons reject NaN parameters where `<=` would accept them.
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod codebook;
pub mod decoder;
pub mod error;
pub mod fileio;
pub mod graph;
pub mod link;
pub mod oracle;
pub mod rng;
pub mod sim;

pub use error::{Error, Result};
