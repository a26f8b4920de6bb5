//! Sparse signed-weight graphs, file-format ingestion, synthetic instance
//! generation, and discrete cut evaluation.
//!
//! Graphs are undirected with real (possibly negative) edge weights and a
//! zero diagonal: no self-loops, each unordered pair stored once. Node
//! indices are 0-based internally; the Gset and DIMACS readers convert from
//! their 1-based conventions.

use std::collections::HashMap;
use std::fmt::Write as _;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

/// Retry budget for the rejection loop in [`generate_random_regular`].
const PAIRING_MAX_ATTEMPTS: usize = 10_000;

/// Errors from graph construction, parsing, and generation.
#[derive(Debug, Error)]
pub enum GraphError {
    #[error("line {line}: malformed input: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: node index {index} out of range [1, {max}]")]
    IndexRange { line: usize, index: usize, max: usize },
    #[error("line {line}: self-loop at node {node}")]
    SelfLoop { line: usize, node: usize },
    #[error("line {line}: duplicate edge ({u}, {v})")]
    DuplicateEdge { line: usize, u: usize, v: usize },
    #[error("conflicting duplicate edge ({u}, {v}): weights {w1} and {w2}")]
    ConflictingDuplicate { u: usize, v: usize, w1: f64, w2: f64 },
    #[error("line {line}: edge appears before the `p edge` header")]
    EdgeBeforeHeader { line: usize },
    #[error("missing `p edge` header")]
    MissingHeader,
    #[error("line {line}: unsupported problem type `{kind}` (expected `edge`)")]
    BadProblemType { line: usize, kind: String },
    #[error("empty input")]
    EmptyInput,
    #[error("invalid argument: {0}")]
    BadArgument(String),
    #[error("no simple pairing found after {attempts} attempts")]
    GenerationExhausted { attempts: usize },
    #[error("assignment has {labels} labels but the graph has {nodes} nodes")]
    LabelLengthMismatch { labels: usize, nodes: usize },
}

/// One undirected edge, stored with `u < v`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Edge {
    pub u: usize,
    pub v: usize,
    pub w: f64,
}

/// Sparse symmetric signed-weight graph (the matrix `W` with zero diagonal).
///
/// Immutable after construction and safe to share across threads.
#[derive(Clone, Debug)]
pub struct WeightedGraph {
    node_count: usize,
    edges: Vec<Edge>,
    neighbors: Vec<Vec<(usize, f64)>>,
    total_edge_weight: f64,
}

impl WeightedGraph {
    /// Builds a graph from an edge list over `node_count` nodes.
    ///
    /// Rejects self-loops, out-of-range indices, and duplicate unordered
    /// pairs. Edge order is preserved (normalized to `u < v`).
    pub fn from_edges(
        node_count: usize,
        raw: impl IntoIterator<Item = (usize, usize, f64)>,
    ) -> Result<Self, GraphError> {
        let mut builder = GraphBuilder::new(node_count);
        for (line, (u, v, w)) in raw.into_iter().enumerate() {
            builder.add_edge(line + 1, u, v, w)?;
        }
        Ok(builder.finish())
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Deduplicated edge list, each pair once with `u < v`.
    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    /// Symmetric adjacency of `node`: every `(neighbor, weight)` incident to it.
    pub fn neighbors(&self, node: usize) -> &[(usize, f64)] {
        &self.neighbors[node]
    }

    pub fn degree(&self, node: usize) -> usize {
        self.neighbors[node].len()
    }

    /// `sum of w over the deduplicated edge list`.
    pub fn total_edge_weight(&self) -> f64 {
        self.total_edge_weight
    }

    /// Serializes in Gset format (`N M` header, then 1-based `i j w` lines).
    ///
    /// Weights print in shortest round-trip decimal form, so
    /// `parse_gset(g.to_gset_string())` reproduces the edge multiset exactly.
    pub fn to_gset_string(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{} {}", self.node_count, self.edges.len());
        for e in &self.edges {
            let _ = writeln!(out, "{} {} {}", e.u + 1, e.v + 1, e.w);
        }
        out
    }
}

struct GraphBuilder {
    node_count: usize,
    edges: Vec<Edge>,
    seen: HashMap<(usize, usize), f64>,
}

impl GraphBuilder {
    fn new(node_count: usize) -> Self {
        Self {
            node_count,
            edges: Vec::new(),
            seen: HashMap::new(),
        }
    }

    /// Adds an edge with 0-based endpoints, rejecting loops and duplicates.
    fn add_edge(&mut self, line: usize, u: usize, v: usize, w: f64) -> Result<(), GraphError> {
        if u == v {
            return Err(GraphError::SelfLoop { line, node: u });
        }
        if u >= self.node_count || v >= self.node_count {
            return Err(GraphError::IndexRange {
                line,
                index: u.max(v) + 1,
                max: self.node_count,
            });
        }
        let key = (u.min(v), u.max(v));
        if self.seen.insert(key, w).is_some() {
            return Err(GraphError::DuplicateEdge {
                line,
                u: key.0,
                v: key.1,
            });
        }
        self.edges.push(Edge {
            u: key.0,
            v: key.1,
            w,
        });
        Ok(())
    }

    fn finish(self) -> WeightedGraph {
        let mut neighbors = vec![Vec::new(); self.node_count];
        let mut total = 0.0;
        for e in &self.edges {
            neighbors[e.u].push((e.v, e.w));
            neighbors[e.v].push((e.u, e.w));
            total += e.w;
        }
        WeightedGraph {
            node_count: self.node_count,
            edges: self.edges,
            neighbors,
            total_edge_weight: total,
        }
    }
}

/// One partition label per node; labels lie in `[0, k)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IntegerAssignment {
    labels: Vec<usize>,
    k: usize,
}

impl IntegerAssignment {
    pub fn new(labels: Vec<usize>, k: usize) -> Result<Self, GraphError> {
        if k == 0 {
            return Err(GraphError::BadArgument("k must be positive".into()));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
            return Err(GraphError::BadArgument(format!(
                "label {bad} out of range [0, {k})"
            )));
        }
        Ok(Self { labels, k })
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

fn split_fields(line: &str) -> Vec<&str> {
    line.split_whitespace().collect()
}

fn parse_num<T: std::str::FromStr>(tok: &str, line: usize, what: &str) -> Result<T, GraphError> {
    tok.parse().map_err(|_| GraphError::Parse {
        line,
        message: format!("cannot parse {what} from `{tok}`"),
    })
}

/// Maps a 1-based index into 0-based, range-checked against `n`.
fn to_zero_based(idx: usize, n: usize, line: usize) -> Result<usize, GraphError> {
    if idx == 0 || idx > n {
        return Err(GraphError::IndexRange {
            line,
            index: idx,
            max: n,
        });
    }
    Ok(idx - 1)
}

/// Parses the Gset convention: first line `N M`, then exactly `M` lines
/// `i j w` with 1-based indices. Accepts `\n` or `\r\n`; blank lines are
/// ignored.
pub fn parse_gset(text: &str) -> Result<WeightedGraph, GraphError> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty());

    let (hline, header) = lines.next().ok_or(GraphError::EmptyInput)?;
    let fields = split_fields(header);
    if fields.len() != 2 {
        return Err(GraphError::Parse {
            line: hline,
            message: format!("expected `N M` header, got `{header}`"),
        });
    }
    let n: usize = parse_num(fields[0], hline, "node count")?;
    let m: usize = parse_num(fields[1], hline, "edge count")?;
    if n == 0 {
        return Err(GraphError::Parse {
            line: hline,
            message: "node count must be positive".into(),
        });
    }

    let mut builder = GraphBuilder::new(n);
    let mut edges_read = 0usize;
    for (lno, line) in lines {
        if edges_read == m {
            return Err(GraphError::Parse {
                line: lno,
                message: format!("unexpected content after {m} edges: `{line}`"),
            });
        }
        let f = split_fields(line);
        if f.len() != 3 {
            return Err(GraphError::Parse {
                line: lno,
                message: format!("expected `i j w`, got `{line}`"),
            });
        }
        let i: usize = parse_num(f[0], lno, "node index")?;
        let j: usize = parse_num(f[1], lno, "node index")?;
        let w: f64 = parse_num(f[2], lno, "edge weight")?;
        let u = to_zero_based(i, n, lno)?;
        let v = to_zero_based(j, n, lno)?;
        builder.add_edge(lno, u, v, w)?;
        edges_read += 1;
    }
    if edges_read != m {
        return Err(GraphError::Parse {
            line: 0,
            message: format!("header promised {m} edges but found {edges_read}"),
        });
    }
    Ok(builder.finish())
}

/// Parses DIMACS COLOR format: `c` comment lines, one `p edge N M` header,
/// then unit-weight `e i j` lines (1-based).
///
/// Repeated `e i j` / `e j i` pairs are collapsed to a single edge; the
/// second element of the result counts the collapsed duplicates so callers
/// can surface a warning.
pub fn parse_dimacs_color(text: &str) -> Result<(WeightedGraph, usize), GraphError> {
    let mut builder: Option<GraphBuilder> = None;
    let mut n = 0usize;
    let mut duplicates = 0usize;
    let mut seen: HashMap<(usize, usize), ()> = HashMap::new();

    for (lno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        let lno = lno + 1;
        if line.is_empty() {
            continue;
        }
        let f = split_fields(line);
        match f[0] {
            "c" => continue,
            "p" => {
                if builder.is_some() {
                    return Err(GraphError::Parse {
                        line: lno,
                        message: "duplicate `p` header".into(),
                    });
                }
                if f.len() != 4 {
                    return Err(GraphError::Parse {
                        line: lno,
                        message: format!("expected `p edge N M`, got `{line}`"),
                    });
                }
                if f[1] != "edge" {
                    return Err(GraphError::BadProblemType {
                        line: lno,
                        kind: f[1].to_string(),
                    });
                }
                n = parse_num(f[2], lno, "node count")?;
                let _m: usize = parse_num(f[3], lno, "edge count")?;
                if n == 0 {
                    return Err(GraphError::Parse {
                        line: lno,
                        message: "node count must be positive".into(),
                    });
                }
                builder = Some(GraphBuilder::new(n));
            }
            "e" => {
                let b = match builder.as_mut() {
                    Some(b) => b,
                    None => return Err(GraphError::EdgeBeforeHeader { line: lno }),
                };
                if f.len() != 3 {
                    return Err(GraphError::Parse {
                        line: lno,
                        message: format!("expected `e i j`, got `{line}`"),
                    });
                }
                let i: usize = parse_num(f[1], lno, "node index")?;
                let j: usize = parse_num(f[2], lno, "node index")?;
                let u = to_zero_based(i, n, lno)?;
                let v = to_zero_based(j, n, lno)?;
                if u == v {
                    return Err(GraphError::SelfLoop { line: lno, node: u });
                }
                let key = (u.min(v), u.max(v));
                if seen.insert(key, ()).is_some() {
                    duplicates += 1;
                } else {
                    b.add_edge(lno, u, v, 1.0)?;
                }
            }
            other => {
                return Err(GraphError::Parse {
                    line: lno,
                    message: format!("unknown line type `{other}`"),
                })
            }
        }
    }

    match builder {
        Some(b) => Ok((b.finish(), duplicates)),
        None => Err(GraphError::MissingHeader),
    }
}

/// Parses a plain signed edge list: one `i j w` per line with 0-based
/// indices; the node count is the maximum index plus one.
///
/// Exact duplicates (either orientation, same weight) collapse silently;
/// duplicates with differing weights are an error.
pub fn parse_edge_list(text: &str) -> Result<WeightedGraph, GraphError> {
    let mut parsed: Vec<(usize, usize, f64)> = Vec::new();
    let mut max_node = 0usize;
    for (lno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        let lno = lno + 1;
        if line.is_empty() {
            continue;
        }
        let f = split_fields(line);
        if f.len() != 3 {
            return Err(GraphError::Parse {
                line: lno,
                message: format!("expected `i j w`, got `{line}`"),
            });
        }
        let i: usize = parse_num(f[0], lno, "node index")?;
        let j: usize = parse_num(f[1], lno, "node index")?;
        let w: f64 = parse_num(f[2], lno, "edge weight")?;
        if i == j {
            return Err(GraphError::SelfLoop { line: lno, node: i });
        }
        max_node = max_node.max(i).max(j);
        parsed.push((i, j, w));
    }
    if parsed.is_empty() {
        return Err(GraphError::EmptyInput);
    }

    let mut merged: HashMap<(usize, usize), f64> = HashMap::new();
    let mut order: Vec<(usize, usize)> = Vec::new();
    for (i, j, w) in parsed {
        let key = (i.min(j), i.max(j));
        match merged.get(&key) {
            None => {
                merged.insert(key, w);
                order.push(key);
            }
            Some(&prev) if prev == w => {}
            Some(&prev) => {
                return Err(GraphError::ConflictingDuplicate {
                    u: key.0,
                    v: key.1,
                    w1: prev,
                    w2: w,
                })
            }
        }
    }

    let mut builder = GraphBuilder::new(max_node + 1);
    for (line, key) in order.iter().enumerate() {
        builder.add_edge(line + 1, key.0, key.1, merged[key])?;
    }
    Ok(builder.finish())
}

/// Generates a simple `r`-regular unit-weight graph on `n` nodes via the
/// pairing (configuration) model: shuffle the `n*r` stubs, pair them up, and
/// reject the whole pairing if it contains a self-loop or duplicate edge.
///
/// Deterministic for a fixed seed. Fails if `n*r` is odd, `r >= n`, or no
/// simple pairing is found within the retry budget.
pub fn generate_random_regular(n: usize, r: usize, seed: u64) -> Result<WeightedGraph, GraphError> {
    if n == 0 {
        return Err(GraphError::BadArgument("n must be positive".into()));
    }
    if r >= n {
        return Err(GraphError::BadArgument(format!(
            "degree r={r} must be smaller than n={n}"
        )));
    }
    if (n * r) % 2 != 0 {
        return Err(GraphError::BadArgument(format!(
            "n*r = {} must be even",
            n * r
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut stubs: Vec<usize> = (0..n).flat_map(|v| std::iter::repeat_n(v, r)).collect();
    let half = stubs.len() / 2;

    for _ in 0..PAIRING_MAX_ATTEMPTS {
        stubs.shuffle(&mut rng);
        let mut seen = std::collections::HashSet::with_capacity(half);
        let mut edges = Vec::with_capacity(half);
        let mut simple = true;
        for t in 0..half {
            let u = stubs[2 * t];
            let v = stubs[2 * t + 1];
            if u == v || !seen.insert((u.min(v), u.max(v))) {
                simple = false;
                break;
            }
            edges.push((u, v, 1.0));
        }
        if simple {
            return WeightedGraph::from_edges(n, edges);
        }
    }
    Err(GraphError::GenerationExhausted {
        attempts: PAIRING_MAX_ATTEMPTS,
    })
}

/// Multiplies each edge weight by an i.i.d. factor drawn uniformly from
/// `[low, high]`. Topology is unchanged; edges whose perturbed weight is
/// exactly zero are retained.
pub fn perturb_weights(
    g: &WeightedGraph,
    low: f64,
    high: f64,
    seed: u64,
) -> Result<WeightedGraph, GraphError> {
    if !low.is_finite() || !high.is_finite() {
        return Err(GraphError::BadArgument("bounds must be finite".into()));
    }
    if low > high {
        return Err(GraphError::BadArgument(format!(
            "low={low} exceeds high={high}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let edges: Vec<(usize, usize, f64)> = g
        .edges()
        .iter()
        .map(|e| {
            let sigma = low + rng.random::<f64>() * (high - low);
            (e.u, e.v, e.w * sigma)
        })
        .collect();
    WeightedGraph::from_edges(g.node_count(), edges)
}

/// Total weight of edges whose endpoints carry different labels.
///
/// Equals `total_edge_weight - sum of same-label edge weights`, i.e.
/// `total_edge_weight - f(X)/2` for the corresponding one-hot matrix.
pub fn cut_value(g: &WeightedGraph, a: &IntegerAssignment) -> Result<f64, GraphError> {
    if a.len() != g.node_count() {
        return Err(GraphError::LabelLengthMismatch {
            labels: a.len(),
            nodes: g.node_count(),
        });
    }
    let labels = a.labels();
    let mut cut = 0.0;
    for e in g.edges() {
        if labels[e.u] != labels[e.v] {
            cut += e.w;
        }
    }
    Ok(cut)
}
