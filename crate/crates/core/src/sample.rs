//! Categorical sampling decoder: draw each node's label independently from
//! its relaxed column, repeat `T` times, keep the draw with the lowest
//! objective. The draw's objective equals the relaxed objective in
//! expectation, which [`expected_objective`] exposes in closed form as an
//! exact target for Monte-Carlo checks.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::graph::{IntegerAssignment, WeightedGraph};
use crate::relax::{AssignmentMatrix, RelaxError};

/// How many draws the best-of selection makes and from which seed.
#[derive(Clone, Copy, Debug)]
pub struct SampleConfig {
    /// Number of independent trials `T`, at least 1.
    pub trials: usize,
    pub seed: u64,
    /// Also evaluate the deterministic per-column argmax labeling as a
    /// candidate (trial index 0) before the random trials. Off by default:
    /// the plain decoder is purely the sampling procedure.
    pub include_argmax: bool,
}

impl SampleConfig {
    pub fn new(trials: usize, seed: u64) -> Self {
        Self {
            trials,
            seed,
            include_argmax: false,
        }
    }
}

/// Winner of a best-of-T decode.
#[derive(Clone, Debug)]
pub struct SampleOutcome {
    pub assignment: IntegerAssignment,
    /// Objective of the winning labeling (one-hot `f`).
    pub objective: f64,
    /// Cut value of the winning labeling, `total_edge_weight - objective/2`.
    pub cut: f64,
    /// 1-based index of the winning random trial; 0 is the argmax candidate
    /// when it is enabled and wins.
    pub trial: usize,
}

/// Draws one labeling: node `i`'s label follows `Cat(p = X_col_i)`.
///
/// Columns are consumed in node order from a single stream so results are
/// reproducible. Inverse-CDF per column; any residual mass from float
/// renormalization falls into the last category, keeping the CDF valid.
pub fn sample_once<R: Rng + ?Sized>(x: &AssignmentMatrix, rng: &mut R) -> IntegerAssignment {
    let k = x.k();
    let labels = (0..x.node_count())
        .map(|j| {
            let col = x.column(j);
            let u: f64 = rng.random();
            let mut acc = 0.0;
            for (l, &p) in col.iter().enumerate() {
                acc += p;
                if u < acc {
                    return l;
                }
            }
            k - 1
        })
        .collect();
    IntegerAssignment::new(labels, k).expect("sampled labels are in range")
}

/// Objective and cut of an integer labeling, via one edge scan.
fn labeling_objective(g: &WeightedGraph, labels: &[usize]) -> (f64, f64) {
    let mut same = 0.0;
    for e in g.edges() {
        if labels[e.u] == labels[e.v] {
            same += e.w;
        }
    }
    (2.0 * same, g.total_edge_weight() - same)
}

/// Runs `cfg.trials` independent draws and returns the one minimizing the
/// objective; ties go to the earliest trial.
pub fn sample_best_of(
    x: &AssignmentMatrix,
    g: &WeightedGraph,
    cfg: &SampleConfig,
) -> Result<SampleOutcome, RelaxError> {
    if x.node_count() != g.node_count() {
        return Err(RelaxError::DimensionMismatch(format!(
            "matrix has {} nodes, graph has {}",
            x.node_count(),
            g.node_count()
        )));
    }
    assert!(cfg.trials >= 1, "at least one trial required");

    let mut best: Option<SampleOutcome> = None;
    let consider = |assignment: IntegerAssignment, trial: usize, best: &mut Option<SampleOutcome>| {
        let (objective, cut) = labeling_objective(g, assignment.labels());
        let better = match best {
            None => true,
            Some(b) => objective < b.objective,
        };
        if better {
            *best = Some(SampleOutcome {
                assignment,
                objective,
                cut,
                trial,
            });
        }
    };

    if cfg.include_argmax {
        consider(x.argmax_labels(), 0, &mut best);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    for t in 1..=cfg.trials {
        consider(sample_once(x, &mut rng), t, &mut best);
    }
    Ok(best.expect("at least one candidate evaluated"))
}

/// Closed-form expectation of the sampled objective:
/// `sum_{i != j} W_ij P(label_i = label_j)` with
/// `P(label_i = label_j) = <X_col_i, X_col_j>` for independent draws.
///
/// Because the weight matrix has a zero diagonal this coincides exactly with
/// the relaxed objective; it is exposed separately so tests can assert the
/// identity and Monte-Carlo estimates have an exact target.
pub fn expected_objective(x: &AssignmentMatrix, g: &WeightedGraph) -> Result<f64, RelaxError> {
    if x.node_count() != g.node_count() {
        return Err(RelaxError::DimensionMismatch(format!(
            "matrix has {} nodes, graph has {}",
            x.node_count(),
            g.node_count()
        )));
    }
    let mut total = 0.0;
    for e in g.edges() {
        let collision: f64 = x
            .column(e.u)
            .iter()
            .zip(x.column(e.v))
            .map(|(p, q)| p * q)
            .sum();
        // both (u,v) and (v,u) terms of the double sum
        total += 2.0 * e.w * collision;
    }
    Ok(total)
}

/// Result of an empirical expectation check.
#[derive(Clone, Copy, Debug)]
pub struct McCheck {
    pub mean: f64,
    pub stderr: f64,
    /// Whether the empirical mean lies within four standard errors of the
    /// exact expectation.
    pub pass: bool,
}

/// Estimates the mean sampled objective over `draws` i.i.d. labelings and
/// compares it against [`expected_objective`] at four standard errors.
pub fn monte_carlo_expectation_test(
    x: &AssignmentMatrix,
    g: &WeightedGraph,
    draws: usize,
    seed: u64,
) -> Result<McCheck, RelaxError> {
    assert!(draws >= 1000, "need at least 1000 draws, got {draws}");
    let target = expected_objective(x, g)?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for _ in 0..draws {
        let a = sample_once(x, &mut rng);
        let (f, _) = labeling_objective(g, a.labels());
        sum += f;
        sum_sq += f * f;
    }
    let m = draws as f64;
    let mean = sum / m;
    let var = ((sum_sq - m * mean * mean) / (m - 1.0)).max(0.0);
    let stderr = (var / m).sqrt();
    let pass = (mean - target).abs() <= 4.0 * stderr;
    Ok(McCheck { mean, stderr, pass })
}
