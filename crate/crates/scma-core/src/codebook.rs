//! Star-QAM mother constellations, per-user constellation operators,
//! assembled sparse codebooks, and constellation quality metrics.
//!
//! A mother constellation `A_MC` is a `d_v`×M complex matrix whose columns
//! are multidimensional points. Each user j owns a monomial operator `Δ_j`
//! (a permutation with unit-modulus phase factors) and a mapping matrix
//! `V_j` from the factor graph; the user codebook is `CB_j = V_j·Δ_j·A_MC`,
//! a K×M matrix whose columns live on the user's d_v resources and are zero
//! elsewhere.
//!
//! The four-ring star-QAM recipe (M = 4, d_v = 2) takes ring ratios α and β,
//! sets `R1 = sqrt(1/(2(α² + β² + α²β² + 1)))` and `R2 = β·R1`, and lays the
//! points out so the four columns together carry unit energy.
//!
//! # Example
//!
//! ```
//! use scma_core::codebook::{kpi, star_qam_mother, CodebookSet};
//!
//! let mother = star_qam_mother(3.0, 1.0 / 0.62).unwrap();
//! let report = kpi(&mother.columns()).unwrap();
//! assert_eq!(report.diversity, 2);
//!
//! let cbs = CodebookSet::star_qam_4x6();
//! assert_eq!(cbs.size(), 4);
//! assert!((cbs.user_energy(0) - 1.0).abs() < 1e-12);
//! ```

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::FactorGraph;

/// Ring ratio α of the recommended four-ring star-QAM design.
pub const STAR_QAM_ALPHA: f64 = 3.0;
/// Ring ratio β of the recommended four-ring star-QAM design.
pub const STAR_QAM_BETA: f64 = 1.0 / 0.62;

/// Relative tolerance for "at minimum distance" decisions in KPI scans.
const KPI_REL_TOL: f64 = 1e-9;
/// Absolute tolerance for structural zero / unit-modulus checks.
const ENTRY_TOL: f64 = 1e-12;

// ---------------------------------------------------------------------------
// Mother constellation
// ---------------------------------------------------------------------------

/// Ring parameters of a star-QAM mother constellation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StarQamParams {
    /// Outer/inner ring ratio α.
    pub alpha: f64,
    /// Second/first dimension ring ratio β.
    pub beta: f64,
    /// First ring radius.
    pub r1: f64,
    /// Second ring radius, `β·R1`.
    pub r2: f64,
}

/// A `d_v`×M complex matrix whose M columns are multidimensional points.
#[derive(Debug, Clone, PartialEq)]
pub struct MotherConstellation {
    dims: usize,
    size: usize,
    rows: Vec<Vec<Complex64>>,
    star_qam: Option<StarQamParams>,
}

/// Builds the four-ring star-QAM mother constellation (M = 4, d_v = 2).
///
/// With `R1 = sqrt(1/(2(α² + β² + α²β² + 1)))` and `R2 = β·R1` the matrix is
///
/// ```text
/// [  α·R1    R1    -R1   -α·R1 ]
/// [ -R2    α·R2  -α·R2    R2   ]
/// ```
///
/// and the squared norms of the four columns sum to exactly one.
pub fn star_qam_mother(alpha: f64, beta: f64) -> Result<MotherConstellation> {
    if !(alpha > 0.0) {
        return Err(Error::NonPositiveParameter {
            name: "alpha",
            value: alpha,
        });
    }
    if !(beta > 0.0) {
        return Err(Error::NonPositiveParameter {
            name: "beta",
            value: beta,
        });
    }
    let r1 = (1.0 / (2.0 * (alpha * alpha + beta * beta + alpha * alpha * beta * beta + 1.0)))
        .sqrt();
    let r2 = beta * r1;
    let re = |x: f64| Complex64::new(x, 0.0);
    let rows = vec![
        vec![re(alpha * r1), re(r1), re(-r1), re(-alpha * r1)],
        vec![re(-r2), re(alpha * r2), re(-alpha * r2), re(r2)],
    ];
    Ok(MotherConstellation {
        dims: 2,
        size: 4,
        rows,
        star_qam: Some(StarQamParams {
            alpha,
            beta,
            r1,
            r2,
        }),
    })
}

impl MotherConstellation {
    /// Wraps an externally supplied `dims`×`size` matrix, given row-major.
    pub fn custom(rows: Vec<Vec<Complex64>>) -> Result<Self> {
        if rows.is_empty() || rows[0].is_empty() {
            return Err(Error::DimensionMismatch(
                "mother constellation must have at least one row and one column".into(),
            ));
        }
        let size = rows[0].len();
        if rows.iter().any(|r| r.len() != size) {
            return Err(Error::DimensionMismatch(
                "mother constellation rows must all have the same length".into(),
            ));
        }
        if rows
            .iter()
            .flatten()
            .any(|z| !z.re.is_finite() || !z.im.is_finite())
        {
            return Err(Error::DimensionMismatch(
                "mother constellation entries must be finite".into(),
            ));
        }
        Ok(MotherConstellation {
            dims: rows.len(),
            size,
            rows,
            star_qam: None,
        })
    }

    /// Number of dimensions d_v (matrix rows).
    pub fn dims(&self) -> usize {
        self.dims
    }

    /// Constellation size M (matrix columns).
    pub fn size(&self) -> usize {
        self.size
    }

    /// The matrix, row-major.
    pub fn rows(&self) -> &[Vec<Complex64>] {
        &self.rows
    }

    /// Column `m` as a length-`d_v` point.
    pub fn column(&self, m: usize) -> Vec<Complex64> {
        self.rows.iter().map(|r| r[m]).collect()
    }

    /// All M columns as points.
    pub fn columns(&self) -> Vec<Vec<Complex64>> {
        (0..self.size).map(|m| self.column(m)).collect()
    }

    /// Ring parameters when built by [`star_qam_mother`].
    pub fn star_qam_params(&self) -> Option<StarQamParams> {
        self.star_qam
    }

    /// Sum of squared column norms.
    pub fn total_energy(&self) -> f64 {
        self.rows
            .iter()
            .flatten()
            .map(|z| z.norm_sqr())
            .sum()
    }

    /// KPI report for the column set.
    pub fn kpi(&self) -> Result<KpiReport> {
        kpi(&self.columns())
    }
}

// ---------------------------------------------------------------------------
// Constellation operators
// ---------------------------------------------------------------------------

/// A `d_v`×`d_v` monomial matrix: one unit-modulus entry per row and column.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstellationOperator {
    matrix: Vec<Vec<Complex64>>,
    phases: Vec<f64>,
}

impl ConstellationOperator {
    /// Validates and wraps a monomial matrix; `phases` records the θ values
    /// the matrix was built from (empty for pure permutations).
    pub fn new(matrix: Vec<Vec<Complex64>>, phases: Vec<f64>) -> Result<Self> {
        let d = matrix.len();
        if d == 0 || matrix.iter().any(|r| r.len() != d) {
            return Err(Error::InvalidOperator(
                "operator matrix must be square and non-empty".into(),
            ));
        }
        let mut col_used = vec![false; d];
        for (r, row) in matrix.iter().enumerate() {
            let nonzero: Vec<usize> = (0..d).filter(|&c| row[c].norm() > ENTRY_TOL).collect();
            if nonzero.len() != 1 {
                return Err(Error::InvalidOperator(format!(
                    "operator row {} must have exactly one nonzero entry, found {}",
                    r + 1,
                    nonzero.len()
                )));
            }
            let c = nonzero[0];
            if col_used[c] {
                return Err(Error::InvalidOperator(format!(
                    "operator column {} has more than one nonzero entry",
                    c + 1
                )));
            }
            col_used[c] = true;
            if (row[c].norm() - 1.0).abs() > ENTRY_TOL {
                return Err(Error::InvalidOperator(format!(
                    "operator entry ({}, {}) must have modulus 1, found {}",
                    r + 1,
                    c + 1,
                    row[c].norm()
                )));
            }
        }
        Ok(ConstellationOperator { matrix, phases })
    }

    /// The `dims`×`dims` identity operator.
    pub fn identity(dims: usize) -> Self {
        let mut matrix = vec![vec![Complex64::ZERO; dims]; dims];
        for (r, row) in matrix.iter_mut().enumerate() {
            row[r] = Complex64::ONE;
        }
        ConstellationOperator {
            matrix,
            phases: Vec::new(),
        }
    }

    /// Matrix dimension d_v.
    pub fn dims(&self) -> usize {
        self.matrix.len()
    }

    /// The matrix, row-major.
    pub fn matrix(&self) -> &[Vec<Complex64>] {
        &self.matrix
    }

    /// Phase angles used to build the matrix.
    pub fn phases(&self) -> &[f64] {
        &self.phases
    }

    /// `Δ·A` for a mother constellation `A` of matching dimension, row-major.
    pub fn apply(&self, mother: &MotherConstellation) -> Result<Vec<Vec<Complex64>>> {
        let d = self.dims();
        if mother.dims() != d {
            return Err(Error::DimensionMismatch(format!(
                "operator is {}-dimensional but the mother constellation has {} rows",
                d,
                mother.dims()
            )));
        }
        let mut out = vec![vec![Complex64::ZERO; mother.size()]; d];
        for r in 0..d {
            for c in 0..d {
                let w = self.matrix[r][c];
                if w.norm() > ENTRY_TOL {
                    for m in 0..mother.size() {
                        out[r][m] += w * mother.rows[c][m];
                    }
                }
            }
        }
        Ok(out)
    }
}

/// The six reference operators for the 4×6 system, built from θ1 = 0,
/// θ2 = π/3, θ3 = 2π/3:
///
/// ```text
/// Δ1 = diag(e^{iθ1}, e^{iθ2})   Δ2 = I          Δ3 = [[0, e^{iθ3}], [e^{iθ1}, 0]]
/// Δ4 = diag(1, e^{iθ2})         Δ5 = [[0, 1],   Δ6 = diag(1, e^{iθ3})
///                                     [1, 0]]
/// ```
///
/// Only `num_users = 6` is supported; the table has no published extension.
pub fn phase_operators(num_users: usize) -> Result<Vec<ConstellationOperator>> {
    if num_users != 6 {
        return Err(Error::UnsupportedOperatorCount { got: num_users });
    }
    let theta_1 = 0.0;
    let theta_2 = PI / 3.0;
    let theta_3 = 2.0 * PI / 3.0;
    let ph = |theta: f64| Complex64::from_polar(1.0, theta);
    let zero = Complex64::ZERO;
    let one = Complex64::ONE;
    let ops = vec![
        ConstellationOperator::new(
            vec![vec![ph(theta_1), zero], vec![zero, ph(theta_2)]],
            vec![theta_1, theta_2],
        )?,
        ConstellationOperator::identity(2),
        ConstellationOperator::new(
            vec![vec![zero, ph(theta_3)], vec![ph(theta_1), zero]],
            vec![theta_3, theta_1],
        )?,
        ConstellationOperator::new(
            vec![vec![one, zero], vec![zero, ph(theta_2)]],
            vec![theta_2],
        )?,
        ConstellationOperator::new(vec![vec![zero, one], vec![one, zero]], Vec::new())?,
        ConstellationOperator::new(
            vec![vec![one, zero], vec![zero, ph(theta_3)]],
            vec![theta_3],
        )?,
    ];
    Ok(ops)
}

// ---------------------------------------------------------------------------
// Codebook sets
// ---------------------------------------------------------------------------

/// The J per-user K×M codebooks together with their factor graph.
#[derive(Debug, Clone)]
pub struct CodebookSet {
    graph: FactorGraph,
    size: usize,
    codebooks: Vec<Vec<Vec<Complex64>>>,
}

/// Assembles `CB_j = V_j·Δ_j·A_MC` for every user of the graph.
///
/// Requires one operator per user and a mother constellation with exactly
/// `d_v` rows. Column m of `CB_j` carries the rotated mother point on the
/// user's resources, in increasing resource order, and zeros elsewhere.
pub fn assemble_codebooks(
    graph: &FactorGraph,
    mother: &MotherConstellation,
    operators: &[ConstellationOperator],
) -> Result<CodebookSet> {
    if operators.len() != graph.num_users() {
        return Err(Error::DimensionMismatch(format!(
            "graph has {} users but {} operators were supplied",
            graph.num_users(),
            operators.len()
        )));
    }
    if mother.dims() != graph.var_degree() {
        return Err(Error::DimensionMismatch(format!(
            "graph occupies {} resources per user but the mother constellation has {} rows",
            graph.var_degree(),
            mother.dims()
        )));
    }
    let k = graph.num_resources();
    let m = mother.size();
    let mut codebooks = Vec::with_capacity(graph.num_users());
    for (j, op) in operators.iter().enumerate() {
        let rotated = op.apply(mother)?;
        let mut cb = vec![vec![Complex64::ZERO; m]; k];
        for (r, &res) in graph.resources_of_user(j).iter().enumerate() {
            cb[res] = rotated[r].clone();
        }
        codebooks.push(cb);
    }
    Ok(CodebookSet {
        graph: graph.clone(),
        size: m,
        codebooks,
    })
}

impl CodebookSet {
    /// The built-in 4×6 system: regular (4, 6, 2) graph, star-QAM mother
    /// with α = 3 and β = 1/0.62, and the six reference operators.
    pub fn star_qam_4x6() -> Self {
        let graph = FactorGraph::regular(4, 6, 2).expect("4x6 graph is constructible");
        let mother =
            star_qam_mother(STAR_QAM_ALPHA, STAR_QAM_BETA).expect("reference ratios are positive");
        let ops = phase_operators(6).expect("operator table covers six users");
        assemble_codebooks(&graph, &mother, &ops).expect("reference dimensions agree")
    }

    /// Rebuilds a set from stored parts, validating shapes and sparsity.
    ///
    /// Every user needs a K×M matrix whose entries vanish outside the user's
    /// resources.
    pub fn from_parts(
        graph: FactorGraph,
        size: usize,
        codebooks: Vec<Vec<Vec<Complex64>>>,
    ) -> Result<Self> {
        if size < 1 {
            return Err(Error::DimensionMismatch(
                "codebook size M must be at least 1".into(),
            ));
        }
        if codebooks.len() != graph.num_users() {
            return Err(Error::DimensionMismatch(format!(
                "graph has {} users but {} codebooks were supplied",
                graph.num_users(),
                codebooks.len()
            )));
        }
        for (j, cb) in codebooks.iter().enumerate() {
            if cb.len() != graph.num_resources() || cb.iter().any(|row| row.len() != size) {
                return Err(Error::DimensionMismatch(format!(
                    "codebook of user {} must be a {}x{} matrix",
                    j + 1,
                    graph.num_resources(),
                    size
                )));
            }
            for (k, row) in cb.iter().enumerate() {
                let supported = graph.rows()[k][j] == 1;
                if !supported {
                    if let Some(m) = (0..size).find(|&m| row[m].norm() > ENTRY_TOL) {
                        return Err(Error::Config(format!(
                            "codeword {} of user {} is nonzero on resource {} outside the user's support",
                            m + 1,
                            j + 1,
                            k + 1
                        )));
                    }
                }
            }
        }
        Ok(CodebookSet {
            graph,
            size,
            codebooks,
        })
    }

    /// The factor graph the codebooks are mapped onto.
    pub fn graph(&self) -> &FactorGraph {
        &self.graph
    }

    /// Number of users J.
    pub fn num_users(&self) -> usize {
        self.graph.num_users()
    }

    /// Number of resources K.
    pub fn num_resources(&self) -> usize {
        self.graph.num_resources()
    }

    /// Codebook size M.
    pub fn size(&self) -> usize {
        self.size
    }

    /// Bits per symbol when M is a power of two.
    pub fn bits_per_symbol(&self) -> Option<u32> {
        (self.size.is_power_of_two() && self.size > 1).then(|| self.size.trailing_zeros())
    }

    /// The K×M codebook of user `j`, row-major.
    pub fn user_codebook(&self, j: usize) -> &[Vec<Complex64>] {
        &self.codebooks[j]
    }

    /// Codeword `m` of user `j` as a length-K column.
    pub fn codeword(&self, j: usize, m: usize) -> Vec<Complex64> {
        self.codebooks[j].iter().map(|row| row[m]).collect()
    }

    /// Component of codeword `m` of user `j` on resource `k`.
    pub fn component(&self, k: usize, j: usize, m: usize) -> Complex64 {
        self.codebooks[j][k][m]
    }

    /// Sum of squared codeword norms for user `j`.
    pub fn user_energy(&self, j: usize) -> f64 {
        self.codebooks[j]
            .iter()
            .flatten()
            .map(|z| z.norm_sqr())
            .sum()
    }

    /// Average codeword energy over all users and symbols.
    pub fn avg_symbol_energy(&self) -> f64 {
        let total: f64 = (0..self.num_users()).map(|j| self.user_energy(j)).sum();
        total / (self.num_users() * self.size) as f64
    }

    /// KPI report for the K-dimensional codewords of user `j`.
    pub fn user_kpi(&self, j: usize) -> Result<KpiReport> {
        let columns: Vec<Vec<Complex64>> = (0..self.size).map(|m| self.codeword(j, m)).collect();
        kpi(&columns)
    }
}

// ---------------------------------------------------------------------------
// KPIs
// ---------------------------------------------------------------------------

/// Distance and diversity metrics of a multidimensional constellation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KpiReport {
    /// Minimum Euclidean distance over all point pairs.
    pub d_e_min: f64,
    /// Number of pairs at the minimum Euclidean distance.
    pub tau_e: usize,
    /// `tau_e` divided by the constellation size.
    pub tau_e_avg: f64,
    /// Minimum product distance over the differing dimensions of each pair.
    pub d_p_min: f64,
    /// Number of pairs at the minimum product distance.
    pub tau_p: usize,
    /// Minimum number of dimensions in which two points differ.
    pub diversity: usize,
}

/// Whether two components differ beyond floating rounding.
fn component_differs(a: Complex64, b: Complex64) -> bool {
    (a - b).norm() > KPI_REL_TOL * a.norm().max(b.norm())
}

/// Exhaustive KPI scan over all M(M-1)/2 point pairs.
///
/// Product distance multiplies component distances over the differing
/// dimensions only; diversity is the smallest count of differing dimensions.
/// Pairs within relative tolerance 1e-9 of a minimum count toward its τ.
pub fn kpi(columns: &[Vec<Complex64>]) -> Result<KpiReport> {
    let m = columns.len();
    if m < 2 {
        return Err(Error::DimensionMismatch(
            "KPI scan needs at least two constellation points".into(),
        ));
    }
    let dims = columns[0].len();
    if dims == 0 || columns.iter().any(|c| c.len() != dims) {
        return Err(Error::DimensionMismatch(
            "constellation points must share one nonzero dimension".into(),
        ));
    }
    let mut pairs = Vec::with_capacity(m * (m - 1) / 2);
    for a in 0..m {
        for b in (a + 1)..m {
            let mut d2 = 0.0;
            let mut product = 1.0;
            let mut differing = 0usize;
            for r in 0..dims {
                let delta = columns[a][r] - columns[b][r];
                d2 += delta.norm_sqr();
                if component_differs(columns[a][r], columns[b][r]) {
                    product *= delta.norm();
                    differing += 1;
                }
            }
            if differing == 0 {
                return Err(Error::DegenerateConstellation { a: a + 1, b: b + 1 });
            }
            pairs.push((d2.sqrt(), product, differing));
        }
    }
    let d_e_min = pairs.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let d_p_min = pairs.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    let tau_e = pairs
        .iter()
        .filter(|p| p.0 <= d_e_min * (1.0 + KPI_REL_TOL))
        .count();
    let tau_p = pairs
        .iter()
        .filter(|p| p.1 <= d_p_min * (1.0 + KPI_REL_TOL))
        .count();
    let diversity = pairs.iter().map(|p| p.2).min().unwrap_or(0);
    Ok(KpiReport {
        d_e_min,
        tau_e,
        tau_e_avg: tau_e as f64 / m as f64,
        d_p_min,
        tau_p,
        diversity,
    })
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------
