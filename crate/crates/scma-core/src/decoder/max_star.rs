//! Jacobian-logarithm reductions for log-domain marginalization.
//!
//! The exact reduction is `m̃ax(a, b) = ln(e^a + e^b) = max(a, b) + C1(|a − b|)`
//! with the correction `C1(x) = ln(1 + e^(−x))`. The LUT mode quantizes the
//! range (0, ln 2] of C1 into γ equal levels and returns the level midpoint,
//! so its absolute error never exceeds `ln 2 / (2γ)` for arguments up to 8;
//! beyond 8 the correction is below 3.4e-4 and is taken as 0. Plain-max drops
//! the correction entirely, which turns log-MPA into Max-Log-MPA.
//!
//! # Example
//!
//! ```
//! use scma_core::decoder::{max_star, MaxStarMode};
//!
//! let exact = max_star(0.0, 0.0, &MaxStarMode::Exact);
//! assert!((exact - 2.0f64.ln()).abs() < 1e-12);
//! assert_eq!(max_star(1.0, -2.0, &MaxStarMode::PlainMax), 1.0);
//! ```

use crate::error::{Error, Result};

/// Largest correction argument the LUT covers; `C1(8) < 3.4e-4`.
const LUT_ARG_LIMIT: f64 = 8.0;

/// How log-domain sums of exponentials are reduced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaxStarMode {
    /// Exact Jacobian logarithm.
    Exact,
    /// Range-quantized correction table with the given number of intervals.
    Lut { intervals: u32 },
    /// Bare maximum, no correction.
    PlainMax,
}

/// The correction function `C1(x) = ln(1 + e^(−x))`.
pub fn correction(x: f64) -> f64 {
    (-x).exp().ln_1p()
}

/// Range-quantized correction table.
///
/// The value range (0, ln 2] is split into `intervals` equal slices; slice i
/// holds the midpoint value `ln 2·(γ − i − 0.5)/γ` and is selected when the
/// argument falls between the slice's boundary arguments
/// `x_i = −ln(e^(ln 2·(γ−i)/γ) − 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LutTable {
    intervals: u32,
    thresholds: Vec<f64>,
    values: Vec<f64>,
}

impl LutTable {
    /// Builds the table for a positive interval count.
    pub fn new(intervals: u32) -> Result<Self> {
        if intervals == 0 {
            return Err(Error::InvalidDecoderConfig(
                "LUT interval count must be at least 1".into(),
            ));
        }
        let gamma = intervals as f64;
        let ln2 = std::f64::consts::LN_2;
        let thresholds: Vec<f64> = (1..intervals)
            .map(|i| {
                let boundary_value = ln2 * (gamma - i as f64) / gamma;
                -(boundary_value.exp() - 1.0).ln()
            })
            .collect();
        let values: Vec<f64> = (0..intervals)
            .map(|i| ln2 * (gamma - i as f64 - 0.5) / gamma)
            .collect();
        Ok(LutTable {
            intervals,
            thresholds,
            values,
        })
    }

    /// Number of quantization intervals γ.
    pub fn intervals(&self) -> u32 {
        self.intervals
    }

    /// The quantized correction for a nonnegative argument.
    pub fn lookup(&self, x: f64) -> f64 {
        if x > LUT_ARG_LIMIT {
            return 0.0;
        }
        let slot = self.thresholds.partition_point(|&t| t <= x);
        self.values[slot]
    }
}

/// A compiled reduction ready for hot loops.
#[derive(Debug, Clone, PartialEq)]
pub enum MaxStarKernel {
    /// Exact Jacobian logarithm.
    Exact,
    /// Quantized correction table.
    Lut(LutTable),
    /// Bare maximum.
    PlainMax,
}

impl MaxStarKernel {
    /// Compiles a mode, building the LUT once.
    pub fn compile(mode: MaxStarMode) -> Result<Self> {
        Ok(match mode {
            MaxStarMode::Exact => MaxStarKernel::Exact,
            MaxStarMode::Lut { intervals } => MaxStarKernel::Lut(LutTable::new(intervals)?),
            MaxStarMode::PlainMax => MaxStarKernel::PlainMax,
        })
    }

    /// The mode this kernel was compiled from.
    pub fn mode(&self) -> MaxStarMode {
        match self {
            MaxStarKernel::Exact => MaxStarMode::Exact,
            MaxStarKernel::Lut(table) => MaxStarMode::Lut {
                intervals: table.intervals(),
            },
            MaxStarKernel::PlainMax => MaxStarMode::PlainMax,
        }
    }

    /// Reduces two log-domain terms.
    pub fn reduce(&self, a: f64, b: f64) -> f64 {
        let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
        match self {
            MaxStarKernel::Exact => hi + correction(hi - lo),
            MaxStarKernel::Lut(table) => hi + table.lookup(hi - lo),
            MaxStarKernel::PlainMax => hi,
        }
    }
}

/// `m̃ax(a, b)` under the given mode.
///
/// Compiles the mode on each call; hot paths should compile a
/// [`MaxStarKernel`] once instead.
pub fn max_star(a: f64, b: f64, mode: &MaxStarMode) -> f64 {
    MaxStarKernel::compile(*mode)
        .expect("interval count validated by caller")
        .reduce(a, b)
}
