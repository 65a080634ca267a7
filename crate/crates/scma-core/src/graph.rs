//! Sparse factor graph tying users (variable nodes) to resource elements
//! (function nodes).
//!
//! The graph is the K×J binary incidence matrix **F**: entry (k, j) is 1 when
//! user j transmits on resource element k. Every column has weight `d_v`
//! (resources per user) and every row has weight `d_f` (users colliding on a
//! resource). The canonical construction enumerates the first J `d_v`-subsets
//! of {1..K} in lexicographic order, which reproduces the standard 4×6 matrix
//! with six users on four resources.
//!
//! # Example
//!
//! ```
//! use scma_core::graph::FactorGraph;
//!
//! let g = FactorGraph::regular(4, 6, 2).unwrap();
//! assert_eq!(g.fn_degree(), 3);
//! assert_eq!(g.users_on_resource(1), &[0, 3, 4]);
//! assert_eq!(g.overloading_factor(), 1.5);
//! ```

use crate::error::{Error, Result};

/// Immutable sparse incidence structure between J users and K resources.
///
/// All index-based accessors use 0-based indices; 1-based indices appear only
/// in error messages and file/CLI output.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FactorGraph {
    num_resources: usize,
    num_users: usize,
    var_degree: usize,
    fn_degree: usize,
    rows: Vec<Vec<u8>>,
    users_on: Vec<Vec<usize>>,
    resources_of: Vec<Vec<usize>>,
}

impl FactorGraph {
    /// Builds the regular graph whose columns are the first `num_users`
    /// `var_degree`-subsets of the resource set in lexicographic order.
    ///
    /// Fails when the dimensions cannot give a row-regular matrix: the edge
    /// count `J*d_v` must divide evenly into K rows, there must be at least
    /// `J` distinct subsets, and the lexicographic prefix itself must be
    /// row-regular.
    pub fn regular(num_resources: usize, num_users: usize, var_degree: usize) -> Result<Self> {
        if num_resources == 0 || num_users == 0 {
            return Err(Error::InfeasibleGraph(
                "K and J must both be at least 1".into(),
            ));
        }
        if var_degree == 0 || var_degree > num_resources {
            return Err(Error::InfeasibleGraph(format!(
                "d_v = {var_degree} must satisfy 1 <= d_v <= K = {num_resources}"
            )));
        }
        let edges = num_users * var_degree;
        if !edges.is_multiple_of(num_resources) {
            return Err(Error::InfeasibleGraph(format!(
                "J*d_v = {edges} is not divisible by K = {num_resources}"
            )));
        }
        let fn_degree = edges / num_resources;
        if binomial(num_resources, var_degree) < num_users as u128 {
            return Err(Error::InfeasibleGraph(format!(
                "J = {num_users} exceeds binomial(K, d_v) = {}",
                binomial(num_resources, var_degree)
            )));
        }

        let mut rows = vec![vec![0u8; num_users]; num_resources];
        let mut subset: Vec<usize> = (0..var_degree).collect();
        for j in 0..num_users {
            for &k in &subset {
                rows[k][j] = 1;
            }
            if j + 1 < num_users {
                next_subset(&mut subset, num_resources);
            }
        }
        for (k, row) in rows.iter().enumerate() {
            let got = row.iter().map(|&b| b as usize).sum::<usize>();
            if got != fn_degree {
                return Err(Error::IrregularRow {
                    row: k + 1,
                    got,
                    expected: fn_degree,
                });
            }
        }
        Self::from_rows(rows)
    }

    /// Validates and adopts an arbitrary 0/1 incidence matrix (row-major).
    ///
    /// Enforces the regularity invariants: one common column weight `d_v`,
    /// one common row weight `d_f`, and pairwise-distinct columns. The
    /// distinctness check applies only for `d_v >= 2`: single-resource users
    /// in an overloaded graph (J > K) necessarily share columns, as in the
    /// degenerate one-resource test systems.
    pub fn from_rows(rows: Vec<Vec<u8>>) -> Result<Self> {
        let num_resources = rows.len();
        if num_resources == 0 {
            return Err(Error::InfeasibleGraph("F has no rows".into()));
        }
        let num_users = rows[0].len();
        if num_users == 0 {
            return Err(Error::InfeasibleGraph("F has no columns".into()));
        }
        for (k, row) in rows.iter().enumerate() {
            if row.len() != num_users {
                return Err(Error::DimensionMismatch(format!(
                    "row {} of F has {} entries, expected {num_users}",
                    k + 1,
                    row.len()
                )));
            }
            if let Some(pos) = row.iter().position(|&b| b > 1) {
                return Err(Error::DimensionMismatch(format!(
                    "F[{}][{}] = {} is not binary",
                    k + 1,
                    pos + 1,
                    row[pos]
                )));
            }
        }

        let var_degree = (0..num_resources).map(|k| rows[k][0] as usize).sum();
        for j in 0..num_users {
            let got = (0..num_resources).map(|k| rows[k][j] as usize).sum();
            if got != var_degree {
                return Err(Error::IrregularColumn {
                    column: j + 1,
                    got,
                    expected: var_degree,
                });
            }
        }
        if var_degree == 0 {
            return Err(Error::InfeasibleGraph("columns of F are all-zero".into()));
        }
        let fn_degree = rows[0].iter().map(|&b| b as usize).sum();
        for (k, row) in rows.iter().enumerate() {
            let got = row.iter().map(|&b| b as usize).sum::<usize>();
            if got != fn_degree {
                return Err(Error::IrregularRow {
                    row: k + 1,
                    got,
                    expected: fn_degree,
                });
            }
        }
        if var_degree >= 2 {
            for a in 0..num_users {
                for b in a + 1..num_users {
                    if (0..num_resources).all(|k| rows[k][a] == rows[k][b]) {
                        return Err(Error::DuplicateColumns { a: a + 1, b: b + 1 });
                    }
                }
            }
        }

        let users_on: Vec<Vec<usize>> = rows
            .iter()
            .map(|row| {
                row.iter()
                    .enumerate()
                    .filter_map(|(j, &b)| (b == 1).then_some(j))
                    .collect()
            })
            .collect();
        let resources_of: Vec<Vec<usize>> = (0..num_users)
            .map(|j| {
                (0..num_resources)
                    .filter(|&k| rows[k][j] == 1)
                    .collect()
            })
            .collect();

        Ok(Self {
            num_resources,
            num_users,
            var_degree,
            fn_degree,
            rows,
            users_on,
            resources_of,
        })
    }

    /// Number of resource elements K (rows of F).
    pub fn num_resources(&self) -> usize {
        self.num_resources
    }

    /// Number of users J (columns of F).
    pub fn num_users(&self) -> usize {
        self.num_users
    }

    /// Column weight d_v: resources occupied by each user.
    pub fn var_degree(&self) -> usize {
        self.var_degree
    }

    /// Row weight d_f: users colliding on each resource.
    pub fn fn_degree(&self) -> usize {
        self.fn_degree
    }

    /// Overloading factor λ = J/K.
    pub fn overloading_factor(&self) -> f64 {
        self.num_users as f64 / self.num_resources as f64
    }

    /// The incidence matrix F, row-major.
    pub fn rows(&self) -> &[Vec<u8>] {
        &self.rows
    }

    /// ξ_k: users active on resource `k`, ascending.
    pub fn users_on_resource(&self, k: usize) -> &[usize] {
        &self.users_on[k]
    }

    /// ζ_j: resources used by user `j`, ascending.
    pub fn resources_of_user(&self, j: usize) -> &[usize] {
        &self.resources_of[j]
    }

    /// Both neighborhood families (ξ over resources, ζ over users).
    pub fn neighborhoods(&self) -> (&[Vec<usize>], &[Vec<usize>]) {
        (&self.users_on, &self.resources_of)
    }

    /// The K×d_v binary mapping matrix V_j with one 1 per column, columns
    /// ordered by increasing resource index, so diag(V_j·V_jᵀ) equals column
    /// j of F.
    pub fn mapping_matrix(&self, j: usize) -> Result<Vec<Vec<u8>>> {
        if j >= self.num_users {
            return Err(Error::IndexOutOfRange {
                what: "user",
                index: j + 1,
                limit: self.num_users,
            });
        }
        let mut v = vec![vec![0u8; self.var_degree]; self.num_resources];
        for (c, &k) in self.resources_of[j].iter().enumerate() {
            v[k][c] = 1;
        }
        Ok(v)
    }
}

/// Advances `subset` to the next d_v-subset of {0..n-1} in lexicographic
/// order. The caller guarantees a successor exists.
fn next_subset(subset: &mut [usize], n: usize) {
    let d = subset.len();
    let mut i = d;
    while i > 0 {
        i -= 1;
        if subset[i] < n - (d - i) {
            subset[i] += 1;
            for t in i + 1..d {
                subset[t] = subset[t - 1] + 1;
            }
            return;
        }
    }
    unreachable!("no lexicographic successor");
}

fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc
}
