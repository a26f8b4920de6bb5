//! The continuous relaxation: fractional assignment matrices on the product
//! of probability simplices, the quadratic objective `f(X) = Tr(X W X^T)`
//! and its gradient, plus the support-pattern neighborhood machinery used to
//! move between fractional and integer solutions.
//!
//! For a feasible `X` with columns on the simplex, the cut recovered from an
//! objective value is the affine transform
//! `cut = total_edge_weight - f/2`; at one-hot matrices this is exactly the
//! discrete cut value.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::graph::{IntegerAssignment, WeightedGraph};

/// Entries at or below this threshold are treated as zero when reading off a
/// column's support. Training output never produces exact zeros, so the
/// support predicate needs a tolerance; override per call where exposed.
pub const DEFAULT_SUPPORT_TOL: f64 = 1e-8;

/// Column sums within this distance of 1 are silently renormalized by the
/// non-strict constructor; larger deviations are rejected as malformed.
const RENORMALIZE_TOL: f64 = 1e-6;
/// The strict constructor rejects column sums farther than this from 1.
const STRICT_SUM_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum RelaxError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("expected {expected} values for a {k}x{n} matrix, got {found}")]
    WrongLength {
        expected: usize,
        found: usize,
        k: usize,
        n: usize,
    },
    #[error("negative entry {value} at (label {label}, node {node})")]
    NegativeEntry {
        node: usize,
        label: usize,
        value: f64,
    },
    #[error("non-finite entry at (label {label}, node {node})")]
    NonFinite { node: usize, label: usize },
    #[error("column {node} sums to {sum}, outside tolerance")]
    ColumnSum { node: usize, sum: f64 },
    #[error("column {node} has empty support at tolerance {tol}")]
    DegenerateSupport { node: usize, tol: f64 },
    #[error("integer neighborhood holds {product} labelings, over the cap of {cap}")]
    NeighborhoodTooLarge { product: u128, cap: usize },
    #[error("invalid argument: {0}")]
    BadArgument(String),
    #[error("malformed matrix text: {0}")]
    ParseText(String),
}

/// A `k x N` matrix whose columns lie on the probability simplex: the
/// fractional relaxation of a one-hot node-to-partition assignment.
///
/// Storage is node-major: the column for node `j` is the contiguous slice
/// `values[j*k .. (j+1)*k]`.
#[derive(Clone, Debug, PartialEq)]
pub struct AssignmentMatrix {
    k: usize,
    n: usize,
    values: Vec<f64>,
}

impl AssignmentMatrix {
    /// Builds a matrix from node-major values, renormalizing columns whose
    /// sums deviate from 1 by at most `1e-6` and rejecting anything worse.
    pub fn new(k: usize, n: usize, values: Vec<f64>) -> Result<Self, RelaxError> {
        Self::from_values(k, n, values, false)
    }

    /// As [`AssignmentMatrix::new`], but `strict` rejects column sums more
    /// than `1e-9` from 1 instead of renormalizing.
    pub fn from_values(
        k: usize,
        n: usize,
        mut values: Vec<f64>,
        strict: bool,
    ) -> Result<Self, RelaxError> {
        if k == 0 || n == 0 {
            return Err(RelaxError::BadArgument(
                "k and n must be positive".into(),
            ));
        }
        if values.len() != k * n {
            return Err(RelaxError::WrongLength {
                expected: k * n,
                found: values.len(),
                k,
                n,
            });
        }
        for j in 0..n {
            let col = &values[j * k..(j + 1) * k];
            let mut sum = 0.0;
            for (l, &v) in col.iter().enumerate() {
                if !v.is_finite() {
                    return Err(RelaxError::NonFinite { node: j, label: l });
                }
                if v < 0.0 {
                    return Err(RelaxError::NegativeEntry {
                        node: j,
                        label: l,
                        value: v,
                    });
                }
                sum += v;
            }
            let tol = if strict { STRICT_SUM_TOL } else { RENORMALIZE_TOL };
            if (sum - 1.0).abs() > tol {
                return Err(RelaxError::ColumnSum { node: j, sum });
            }
            if sum != 1.0 {
                for v in &mut values[j * k..(j + 1) * k] {
                    *v /= sum;
                }
            }
        }
        Ok(Self { k, n, values })
    }

    /// The maximum-entropy point: every entry `1/k`.
    pub fn uniform(k: usize, n: usize) -> Self {
        assert!(k > 0 && n > 0, "k and n must be positive");
        Self {
            k,
            n,
            values: vec![1.0 / k as f64; k * n],
        }
    }

    /// One-hot embedding of an integer assignment.
    pub fn from_labels(a: &IntegerAssignment) -> Self {
        let (k, n) = (a.k(), a.len());
        let mut values = vec![0.0; k * n];
        for (j, &l) in a.labels().iter().enumerate() {
            values[j * k + l] = 1.0;
        }
        Self { k, n, values }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    /// Simplex column for node `j` (length `k`).
    pub fn column(&self, j: usize) -> &[f64] {
        &self.values[j * self.k..(j + 1) * self.k]
    }

    /// Node-major backing slice.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Per-node argmax labels, ties to the lowest index.
    pub fn argmax_labels(&self) -> IntegerAssignment {
        let labels = (0..self.n)
            .map(|j| {
                let col = self.column(j);
                let mut best = 0;
                for l in 1..self.k {
                    if col[l] > col[best] {
                        best = l;
                    }
                }
                best
            })
            .collect();
        IntegerAssignment::new(labels, self.k).expect("argmax labels are in range")
    }

    /// Serializes as a text block: header `k N`, then one line of `k`
    /// probabilities per node (shortest round-trip decimal form).
    pub fn to_text(&self) -> String {
        use std::fmt::Write as _;
        let mut out = String::new();
        let _ = writeln!(out, "{} {}", self.k, self.n);
        for j in 0..self.n {
            let col = self.column(j);
            for (l, v) in col.iter().enumerate() {
                if l > 0 {
                    out.push(' ');
                }
                let _ = write!(out, "{v}");
            }
            out.push('\n');
        }
        out
    }

    /// Parses the [`AssignmentMatrix::to_text`] block form.
    pub fn parse_text(text: &str) -> Result<Self, RelaxError> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| {
            RelaxError::ParseText("missing `k N` header".into())
        })?;
        let mut it = header.split_whitespace();
        let parse = |tok: Option<&str>| -> Result<usize, RelaxError> {
            tok.and_then(|t| t.parse().ok())
                .ok_or_else(|| RelaxError::ParseText(format!("bad header `{header}`")))
        };
        let k = parse(it.next())?;
        let n = parse(it.next())?;
        let mut values = Vec::with_capacity(k * n);
        for line in lines {
            for tok in line.split_whitespace() {
                let v: f64 = tok
                    .parse()
                    .map_err(|_| RelaxError::ParseText(format!("bad value `{tok}`")))?;
                values.push(v);
            }
        }
        Self::new(k, n, values)
    }
}

/// Per-column strict-positivity index sets (the supports `K(X_col)`).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SupportPattern {
    sets: Vec<Vec<usize>>,
}

impl SupportPattern {
    /// Support of node `j`'s column, ascending label order.
    pub fn set(&self, j: usize) -> &[usize] {
        &self.sets[j]
    }

    pub fn node_count(&self) -> usize {
        self.sets.len()
    }

    /// Number of integer labelings in the induced neighborhood, i.e. the
    /// product of the support sizes (saturating in u128).
    pub fn labeling_count(&self) -> u128 {
        self.sets
            .iter()
            .fold(1u128, |acc, s| acc.saturating_mul(s.len() as u128))
    }
}

fn check_dims(x: &AssignmentMatrix, g: &WeightedGraph) -> Result<(), RelaxError> {
    if x.node_count() != g.node_count() {
        return Err(RelaxError::DimensionMismatch(format!(
            "matrix has {} nodes, graph has {}",
            x.node_count(),
            g.node_count()
        )));
    }
    Ok(())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// The relaxed objective `f(X) = Tr(X W X^T) = sum_{i != j} W_ij <X_i, X_j>`,
/// computed by sparse traversal: each unordered edge contributes
/// `2 w <X_u, X_v>`. Runs in `O(|E| k)`.
pub fn objective_f(x: &AssignmentMatrix, g: &WeightedGraph) -> Result<f64, RelaxError> {
    check_dims(x, g)?;
    let mut f = 0.0;
    for e in g.edges() {
        f += 2.0 * e.w * dot(x.column(e.u), x.column(e.v));
    }
    Ok(f)
}

/// Euclidean gradient `grad f = 2 X W`: the column for node `u` is
/// `2 * sum_{v in N(u)} W_uv X_v`. Returned node-major like the matrix.
pub fn gradient_f(x: &AssignmentMatrix, g: &WeightedGraph) -> Result<Vec<f64>, RelaxError> {
    check_dims(x, g)?;
    let k = x.k();
    let mut grad = vec![0.0; k * x.node_count()];
    for e in g.edges() {
        let (cu, cv) = (x.column(e.u), x.column(e.v));
        let s = 2.0 * e.w;
        for l in 0..k {
            grad[e.u * k + l] += s * cv[l];
            grad[e.v * k + l] += s * cu[l];
        }
    }
    Ok(grad)
}

/// Recovers the cut value implied by an objective value:
/// `cut = total_edge_weight - f/2`.
pub fn cut_from_objective(g: &WeightedGraph, fval: f64) -> f64 {
    g.total_edge_weight() - fval / 2.0
}

/// Reads off the per-column supports: label `l` belongs to node `j`'s set
/// iff `X[l,j] > tol`. A column with no entry above `tol` is degenerate.
pub fn support_pattern(x: &AssignmentMatrix, tol: f64) -> Result<SupportPattern, RelaxError> {
    if tol < 0.0 || !tol.is_finite() {
        return Err(RelaxError::BadArgument(format!(
            "support tolerance must be nonnegative, got {tol}"
        )));
    }
    let mut sets = Vec::with_capacity(x.node_count());
    for j in 0..x.node_count() {
        let set: Vec<usize> = x
            .column(j)
            .iter()
            .enumerate()
            .filter(|(_, &v)| v > tol)
            .map(|(l, _)| l)
            .collect();
        if set.is_empty() {
            return Err(RelaxError::DegenerateSupport { node: j, tol });
        }
        sets.push(set);
    }
    Ok(SupportPattern { sets })
}

/// Whether `x` lies in the neighborhood induced by `anchor`: for every
/// column, the mass of `x` on the anchor's support (at
/// [`DEFAULT_SUPPORT_TOL`]) must be at least `1 - tol`.
pub fn neighborhood_contains(
    anchor: &AssignmentMatrix,
    x: &AssignmentMatrix,
    tol: f64,
) -> Result<bool, RelaxError> {
    if anchor.k() != x.k() || anchor.node_count() != x.node_count() {
        return Err(RelaxError::DimensionMismatch(format!(
            "anchor is {}x{}, candidate is {}x{}",
            anchor.k(),
            anchor.node_count(),
            x.k(),
            x.node_count()
        )));
    }
    let support = support_pattern(anchor, DEFAULT_SUPPORT_TOL)?;
    for j in 0..x.node_count() {
        let col = x.column(j);
        let mass: f64 = support.set(j).iter().map(|&l| col[l]).sum();
        if mass < 1.0 - tol {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Enumerates every integer labeling inside the anchor's neighborhood — the
/// Cartesian product of the per-column supports (at tolerance `tol`), each
/// emitted once in odometer order.
///
/// The product size is checked against `cap` before any allocation.
pub fn enumerate_integer_neighborhood(
    anchor: &AssignmentMatrix,
    cap: usize,
    tol: f64,
) -> Result<Vec<IntegerAssignment>, RelaxError> {
    let support = support_pattern(anchor, tol)?;
    let product = support.labeling_count();
    if product > cap as u128 {
        return Err(RelaxError::NeighborhoodTooLarge { product, cap });
    }
    let n = anchor.node_count();
    let mut out = Vec::with_capacity(product as usize);
    let mut idx = vec![0usize; n];
    loop {
        let labels: Vec<usize> = (0..n).map(|j| support.set(j)[idx[j]]).collect();
        out.push(
            IntegerAssignment::new(labels, anchor.k()).expect("support labels are in range"),
        );
        // odometer increment, last node fastest
        let mut pos = n;
        loop {
            if pos == 0 {
                return Ok(out);
            }
            pos -= 1;
            idx[pos] += 1;
            if idx[pos] < support.set(pos).len() {
                break;
            }
            idx[pos] = 0;
        }
    }
}

/// Result of a randomized flatness check over a neighborhood.
#[derive(Clone, Copy, Debug)]
pub struct BasinCheck {
    /// True when every sampled point matched the anchor objective within tol.
    pub holds: bool,
    /// Largest `|f(sample) - f(anchor)|` observed.
    pub max_deviation: f64,
}

/// Samples random points of the anchor's neighborhood and checks that the
/// objective stays within `tol` of the anchor's value.
///
/// Per column, mass is spread over the anchor's support (at
/// [`DEFAULT_SUPPORT_TOL`]) with a flat Dirichlet draw — normalized unit
/// exponentials — and zeros elsewhere, covering the relative interior of the
/// neighborhood face. At a global optimum of the relaxation this objective
/// is constant over the whole neighborhood; this is a test utility, not a
/// production guarantee.
pub fn verify_basin(
    anchor: &AssignmentMatrix,
    g: &WeightedGraph,
    samples: usize,
    seed: u64,
    tol: f64,
) -> Result<BasinCheck, RelaxError> {
    check_dims(anchor, g)?;
    let support = support_pattern(anchor, DEFAULT_SUPPORT_TOL)?;
    let f_anchor = objective_f(anchor, g)?;
    let (k, n) = (anchor.k(), anchor.node_count());

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_dev: f64 = 0.0;
    for _ in 0..samples {
        let mut values = vec![0.0; k * n];
        for j in 0..n {
            let set = support.set(j);
            let mut sum = 0.0;
            let col = &mut values[j * k..(j + 1) * k];
            for &l in set {
                // unit exponential; 1 - u avoids ln(0)
                let draw = -(1.0 - rng.random::<f64>()).ln();
                col[l] = draw;
                sum += draw;
            }
            for &l in set {
                col[l] /= sum;
            }
        }
        let point = AssignmentMatrix::from_values(k, n, values, false)?;
        let f = objective_f(&point, g)?;
        max_dev = max_dev.max((f - f_anchor).abs());
    }
    Ok(BasinCheck {
        holds: max_dev <= tol,
        max_deviation: max_dev,
    })
}
