//! Entropic mirror descent on the product of simplices: the multiplicative
//! (exponentiated-gradient) update, natural to the simplex geometry, with a
//! relative-change stopping rule.

use std::time::Instant;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::graph::WeightedGraph;
use crate::relax::{gradient_f, objective_f, AssignmentMatrix, RelaxError};

/// Maximum number of step halvings before a step is rejected outright.
const MAX_HALVINGS: u32 = 30;

#[derive(Debug, Error)]
pub enum MdError {
    #[error("step size still overflows after {MAX_HALVINGS} halvings")]
    StepTooLarge,
    #[error("invalid argument: {0}")]
    BadArgument(String),
    #[error("deadline exceeded after {completed_iters} iterations")]
    Timeout { completed_iters: usize },
    #[error(transparent)]
    Relax(#[from] RelaxError),
}

/// Starting point for the iteration.
#[derive(Clone, Debug)]
pub enum MdInit {
    /// Uniform `1/k` plus additive uniform noise in `[0, 1e-3)`, then
    /// renormalized. Exact uniform is a symmetric saddle on symmetric
    /// graphs, so a small seeded tilt is applied.
    UniformNoise,
    /// Continue from a given feasible matrix.
    Given(AssignmentMatrix),
}

#[derive(Clone, Debug)]
pub struct MdConfig {
    pub step_size: f64,
    pub max_iters: usize,
    /// Relative-change stopping tolerance on the objective.
    pub tolerance: f64,
    pub init: MdInit,
    pub seed: u64,
    /// Optional wall-clock cutoff checked between iterations.
    pub deadline: Option<Instant>,
}

impl Default for MdConfig {
    fn default() -> Self {
        Self {
            step_size: 0.01,
            max_iters: 5000,
            tolerance: 1e-8,
            init: MdInit::UniformNoise,
            seed: 0,
            deadline: None,
        }
    }
}

/// A finished run: the final feasible iterate and the objective trace
/// (`trace[0]` is the initial value, one entry per iteration after).
#[derive(Clone, Debug)]
pub struct MdRun {
    pub x: AssignmentMatrix,
    pub trace: Vec<f64>,
}

impl MdRun {
    pub fn iterations(&self) -> usize {
        self.trace.len().saturating_sub(1)
    }
}

/// One multiplicative update `X <- X * exp(-step * grad f)`, column
/// renormalized.
///
/// The exponent is shifted by its per-column maximum before exponentiation;
/// the update is invariant under per-column shifts, so this changes nothing
/// mathematically while keeping `exp` in range. A column whose renormalizer
/// degenerates (zero or non-finite sum) rejects the step: the whole update
/// retries at half the step size, up to [`MAX_HALVINGS`] times.
pub fn md_step(
    x: &AssignmentMatrix,
    g: &WeightedGraph,
    step: f64,
) -> Result<AssignmentMatrix, MdError> {
    if !(step > 0.0) || !step.is_finite() {
        return Err(MdError::BadArgument(format!(
            "step size must be positive and finite, got {step}"
        )));
    }
    let grad = gradient_f(x, g)?;
    let (k, n) = (x.k(), x.node_count());

    let mut try_step = step;
    'halving: for _ in 0..=MAX_HALVINGS {
        let mut values = vec![0.0; k * n];
        for j in 0..n {
            let col = x.column(j);
            let gcol = &grad[j * k..(j + 1) * k];
            let mut arg_max = f64::NEG_INFINITY;
            for l in 0..k {
                arg_max = arg_max.max(-try_step * gcol[l]);
            }
            let out = &mut values[j * k..(j + 1) * k];
            let mut sum = 0.0;
            for l in 0..k {
                let v = col[l] * (-try_step * gcol[l] - arg_max).exp();
                out[l] = v;
                sum += v;
            }
            if !(sum > 0.0) || !sum.is_finite() {
                try_step *= 0.5;
                continue 'halving;
            }
            for l in 0..k {
                out[l] /= sum;
            }
        }
        return Ok(AssignmentMatrix::new(k, n, values)?);
    }
    Err(MdError::StepTooLarge)
}

/// Iterates [`md_step`] from the configured start until
/// `|f_t - f_{t-1}| <= tolerance * max(1, |f_{t-1}|)` or `max_iters`.
pub fn solve_md(g: &WeightedGraph, k: usize, cfg: &MdConfig) -> Result<MdRun, MdError> {
    if k < 2 {
        return Err(MdError::BadArgument(format!("k must be at least 2, got {k}")));
    }
    if !(cfg.tolerance > 0.0) {
        return Err(MdError::BadArgument("tolerance must be positive".into()));
    }
    let n = g.node_count();
    let mut x = match &cfg.init {
        MdInit::UniformNoise => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            let mut values = vec![0.0; k * n];
            for j in 0..n {
                let col = &mut values[j * k..(j + 1) * k];
                let mut sum = 0.0;
                for v in col.iter_mut() {
                    *v = 1.0 / k as f64 + rng.random::<f64>() * 1e-3;
                    sum += *v;
                }
                for v in col.iter_mut() {
                    *v /= sum;
                }
            }
            AssignmentMatrix::new(k, n, values)?
        }
        MdInit::Given(m) => {
            if m.k() != k || m.node_count() != n {
                return Err(MdError::BadArgument(format!(
                    "init matrix is {}x{}, expected {}x{}",
                    m.k(),
                    m.node_count(),
                    k,
                    n
                )));
            }
            m.clone()
        }
    };

    let mut f_prev = objective_f(&x, g)?;
    let mut trace = Vec::with_capacity(cfg.max_iters.min(1024) + 1);
    trace.push(f_prev);

    for iter in 0..cfg.max_iters {
        if let Some(deadline) = cfg.deadline {
            if Instant::now() >= deadline {
                return Err(MdError::Timeout {
                    completed_iters: iter,
                });
            }
        }
        x = md_step(&x, g, cfg.step_size)?;
        let f = objective_f(&x, g)?;
        trace.push(f);
        if (f - f_prev).abs() <= cfg.tolerance * f_prev.abs().max(1.0) {
            break;
        }
        f_prev = f;
    }
    Ok(MdRun { x, trace })
}
