//! The pre-train + fine-tune workflow: one shared model trained over a
//! graph collection, then continued on the single target instance with
//! early stopping, returning the output at the best parameters seen.

use std::time::Instant;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use super::{adam_step, forward, loss_instance, AdamState, GnnArchitecture, GnnError, GnnParameters, NodeEmbeddings};
use crate::graph::WeightedGraph;
use crate::relax::AssignmentMatrix;
use crate::seeding::{split_seed, STREAM_EMBEDDINGS, STREAM_PARAMS, STREAM_SHUFFLE};

#[derive(Clone, Debug)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub pretrain_epochs: usize,
    /// Minimum absolute improvement of the best-seen loss that counts as
    /// progress during fine-tuning.
    pub tolerance: f64,
    /// Number of consecutive non-improving gradient steps after which
    /// fine-tuning stops.
    pub patience: usize,
    /// Hard cap on fine-tuning steps.
    pub max_finetune_iters: usize,
    pub seed: u64,
    /// Optional wall-clock cutoff checked between iterations.
    pub deadline: Option<Instant>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-2,
            pretrain_epochs: 1,
            tolerance: 1e-2,
            patience: 100,
            max_finetune_iters: 10_000,
            seed: 0,
            deadline: None,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<(), GnnError> {
        if !(self.learning_rate > 0.0) || !(self.tolerance > 0.0) {
            return Err(GnnError::BadArchitecture(
                "learning rate and tolerance must be positive".into(),
            ));
        }
        if self.patience == 0 || self.max_finetune_iters == 0 || self.pretrain_epochs == 0 {
            return Err(GnnError::BadArchitecture(
                "patience, iteration cap, and epochs must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Embedding seed for dataset instance `idx` under a training seed.
fn instance_embedding_seed(train_seed: u64, idx: usize) -> u64 {
    split_seed(split_seed(train_seed, STREAM_EMBEDDINGS), idx as u64)
}

/// Result of a pre-training pass.
#[derive(Clone, Debug)]
pub struct PretrainRun {
    pub params: GnnParameters,
    /// Per-visit instance losses in processing order.
    pub losses: Vec<f64>,
    /// Mean of `losses`.
    pub mean_loss: f64,
}

/// Trains shared parameters over a graph collection: per epoch, one Adam
/// step per instance (batch size 1) in seeded shuffled order, each instance
/// with its own fixed random embedding.
pub fn pretrain(
    dataset: &[WeightedGraph],
    arch: GnnArchitecture,
    cfg: &TrainConfig,
) -> Result<PretrainRun, GnnError> {
    cfg.validate()?;
    if dataset.is_empty() {
        return Err(GnnError::EmptyDataset);
    }
    let mut params = GnnParameters::random_init(arch, split_seed(cfg.seed, STREAM_PARAMS))?;
    let mut state = AdamState::new(params.data().len());
    let mut losses = Vec::with_capacity(dataset.len() * cfg.pretrain_epochs);

    for epoch in 0..cfg.pretrain_epochs {
        let mut order: Vec<usize> = (0..dataset.len()).collect();
        let shuffle_seed = split_seed(split_seed(cfg.seed, STREAM_SHUFFLE), epoch as u64);
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(shuffle_seed));
        for idx in order {
            let g = &dataset[idx];
            let h0 = NodeEmbeddings::random(
                g.node_count(),
                arch.input_dim,
                instance_embedding_seed(cfg.seed, idx),
            );
            let (f, grads) = loss_instance(&params, g, &h0)?;
            adam_step(&mut state, &mut params, &grads, cfg.learning_rate)?;
            losses.push(f);
        }
    }
    let mean_loss = losses.iter().sum::<f64>() / losses.len() as f64;
    Ok(PretrainRun {
        params,
        losses,
        mean_loss,
    })
}

/// Result of fine-tuning on one instance.
#[derive(Clone, Debug)]
pub struct FinetuneRun {
    /// Network output at the best-loss parameters.
    pub x: AssignmentMatrix,
    /// Gradient steps taken.
    pub iters: usize,
    /// Loss after 0, 1, ..., `iters` steps.
    pub trace: Vec<f64>,
    /// The best-loss parameters themselves.
    pub params: GnnParameters,
}

/// Continues training `params` on a single instance until the best loss has
/// not improved by more than `cfg.tolerance` for `cfg.patience` consecutive
/// steps (or the step cap), then returns the forward output at the best
/// parameters seen.
pub fn finetune(
    params: GnnParameters,
    g: &WeightedGraph,
    cfg: &TrainConfig,
) -> Result<FinetuneRun, GnnError> {
    cfg.validate()?;
    let arch = *params.arch();
    let h0 = NodeEmbeddings::random(
        g.node_count(),
        arch.input_dim,
        split_seed(cfg.seed, STREAM_EMBEDDINGS),
    );

    let mut params = params;
    let mut state = AdamState::new(params.data().len());
    let (mut loss, mut grads) = loss_instance(&params, g, &h0)?;
    let mut best_loss = loss;
    let mut best_params = params.clone();
    let mut trace = vec![loss];
    let mut since_improvement = 0usize;
    let mut steps = 0usize;

    while steps < cfg.max_finetune_iters && since_improvement < cfg.patience {
        if let Some(deadline) = cfg.deadline {
            if Instant::now() >= deadline {
                return Err(GnnError::Timeout {
                    completed_iters: steps,
                });
            }
        }
        adam_step(&mut state, &mut params, &grads, cfg.learning_rate)?;
        steps += 1;
        let (next_loss, next_grads) = loss_instance(&params, g, &h0)?;
        trace.push(next_loss);
        if next_loss < best_loss - cfg.tolerance {
            best_loss = next_loss;
            best_params = params.clone();
            since_improvement = 0;
        } else {
            since_improvement += 1;
        }
        loss = next_loss;
        grads = next_grads;
    }
    let _ = loss;

    let (x, _) = forward(&best_params, g, &h0)?;
    Ok(FinetuneRun {
        x,
        iters: steps,
        trace,
        params: best_params,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gnn::Activation;
    use crate::graph::{generate_random_regular, parse_gset};
    use crate::relax::objective_f;
    use crate::sample::{sample_best_of, SampleConfig};

    const TRIANGLE: &str = "3 3\n1 2 1\n1 3 1\n2 3 1";

    fn arch(k: usize) -> GnnArchitecture {
        GnnArchitecture {
            layers: 2,
            input_dim: 12,
            hidden_dim: 10,
            output_dim: k,
            activation: Activation::Relu,
        }
    }

    fn cfg(seed: u64) -> TrainConfig {
        TrainConfig {
            seed,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn pretrain_on_edgeless_graphs_is_a_no_op() {
        let dataset: Vec<_> = (0..4).map(|_| parse_gset("5 0").unwrap()).collect();
        let run = pretrain(&dataset, arch(2), &cfg(1)).unwrap();
        let fresh = GnnParameters::random_init(arch(2), split_seed(1, STREAM_PARAMS)).unwrap();
        assert_eq!(run.params.data(), fresh.data());
        assert!(run.losses.iter().all(|&f| f == 0.0));
    }

    #[test]
    fn pretrain_reduces_mean_loss_over_dataset() {
        let dataset: Vec<_> = (0..30)
            .map(|i| generate_random_regular(40, 3, 1000 + i).unwrap())
            .collect();
        let c = cfg(7);
        let init = GnnParameters::random_init(arch(2), split_seed(7, STREAM_PARAMS)).unwrap();
        let mean_f = |p: &GnnParameters| -> f64 {
            dataset
                .iter()
                .enumerate()
                .map(|(idx, g)| {
                    let h0 = NodeEmbeddings::random(
                        g.node_count(),
                        12,
                        instance_embedding_seed(7, idx),
                    );
                    let (x, _) = forward(p, g, &h0).unwrap();
                    objective_f(&x, g).unwrap()
                })
                .sum::<f64>()
                / dataset.len() as f64
        };
        let before = mean_f(&init);
        let run = pretrain(&dataset, arch(2), &c).unwrap();
        let after = mean_f(&run.params);
        assert!(after < before, "pretraining did not help: {after} vs {before}");
    }

    #[test]
    fn pretrain_is_deterministic() {
        let dataset: Vec<_> = (0..6)
            .map(|i| generate_random_regular(20, 3, 50 + i).unwrap())
            .collect();
        let a = pretrain(&dataset, arch(3), &cfg(9)).unwrap();
        let b = pretrain(&dataset, arch(3), &cfg(9)).unwrap();
        assert_eq!(a.params.data(), b.params.data());
        assert_eq!(a.losses, b.losses);
    }

    #[test]
    fn pretrain_rejects_empty_dataset() {
        assert!(matches!(
            pretrain(&[], arch(2), &cfg(0)).unwrap_err(),
            GnnError::EmptyDataset
        ));
    }

    #[test]
    fn finetune_edgeless_stops_after_exactly_patience_steps() {
        let g = parse_gset("6 0").unwrap();
        let params = GnnParameters::random_init(arch(2), 3).unwrap();
        let c = TrainConfig {
            patience: 25,
            ..cfg(4)
        };
        let run = finetune(params, &g, &c).unwrap();
        assert_eq!(run.iters, 25);
        assert_eq!(*run.trace.last().unwrap(), 0.0);
        assert!((objective_f(&run.x, &g).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn finetune_triangle_reaches_optimum() {
        let g = parse_gset(TRIANGLE).unwrap();
        let params = GnnParameters::random_init(arch(2), 5).unwrap();
        let run = finetune(params, &g, &cfg(6)).unwrap();
        let out = sample_best_of(&run.x, &g, &SampleConfig::new(100, 7)).unwrap();
        assert_eq!(out.cut, 2.0);
    }

    #[test]
    fn finetune_k4_three_colors_reaches_optimum() {
        // brute force over the 81 labelings of K4 with three colors gives a
        // best cut of 5 (exactly one monochromatic pair is unavoidable)
        let g = parse_gset("4 6\n1 2 1\n1 3 1\n1 4 1\n2 3 1\n2 4 1\n3 4 1").unwrap();
        let (opt, _) = crate::oracle::brute_force(&g, 3).unwrap();
        assert_eq!(opt, 5.0);
        let params = GnnParameters::random_init(arch(3), 8).unwrap();
        let run = finetune(params, &g, &cfg(9)).unwrap();
        let out = sample_best_of(&run.x, &g, &SampleConfig::new(100, 10)).unwrap();
        assert_eq!(out.cut, opt);
    }

    #[test]
    fn finetune_stops_before_cap_and_is_deterministic() {
        let g = generate_random_regular(30, 3, 60).unwrap();
        let params = GnnParameters::random_init(arch(2), 11).unwrap();
        let run = finetune(params.clone(), &g, &cfg(12)).unwrap();
        assert!(run.iters < TrainConfig::default().max_finetune_iters);
        let run2 = finetune(params, &g, &cfg(12)).unwrap();
        assert_eq!(run.x.values(), run2.x.values());
        assert_eq!(run.trace, run2.trace);
    }
}
