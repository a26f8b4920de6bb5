//! Learned optimizer for the relaxation: a fixed L-layer message-passing
//! network with graph normalization on hidden layers and a per-column
//! softmax head, so the output is always feasible. Reverse-mode gradients
//! for the whole pipeline are derived by hand in [`backward`]; nothing here
//! depends on an autodiff framework.
//!
//! The layer update for node `i` is
//! `h_i <- act(Phi1 h_i + Phi2 * sum_{j in N(i)} W_ji h_j)`,
//! with graph normalization applied between the affine update and the
//! activation on all layers but the last. Only `Phi1`, `Phi2` and the
//! normalization parameters train; the random node embeddings are fixed
//! per instance.

mod adam;
mod io;
mod train;

pub use adam::{adam_step, AdamState};
pub use io::{load_model, save_model, MODEL_FORMAT_VERSION, MODEL_MAGIC};
pub use train::{finetune, pretrain, FinetuneRun, PretrainRun, TrainConfig};

use std::ops::Range;
use std::sync::atomic::{AtomicU64, Ordering};

use ndarray::{Array2, ArrayView2};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::graph::WeightedGraph;
use crate::relax::{AssignmentMatrix, RelaxError};

/// Variance floor inside the graph-normalization denominator.
const EPS_NORM: f64 = 1e-5;

#[derive(Debug, Error)]
pub enum GnnError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("non-finite value produced at layer {layer}")]
    NonFinite { layer: usize },
    #[error("gradient contains non-finite values; step rejected")]
    NonFiniteGradient,
    #[error("stale cache: forward output does not pair with these parameters")]
    StaleCache,
    #[error("pre-training dataset is empty")]
    EmptyDataset,
    #[error("invalid architecture: {0}")]
    BadArchitecture(String),
    #[error("deadline exceeded after {completed_iters} iterations")]
    Timeout { completed_iters: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("not a model file (bad magic)")]
    BadMagic,
    #[error("unsupported model format version {found}")]
    VersionMismatch { found: u32 },
    #[error("malformed model file: {0}")]
    MalformedModel(String),
    #[error(transparent)]
    Relax(#[from] RelaxError),
}

/// Hidden-layer activation. The softmax head is fixed and not configurable.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Relu,
}

impl Activation {
    pub(crate) fn code(self) -> u32 {
        match self {
            Activation::Relu => 0,
        }
    }

    pub(crate) fn from_code(code: u32) -> Option<Self> {
        match code {
            0 => Some(Activation::Relu),
            _ => None,
        }
    }
}

/// Network shape: `layers` message-passing layers mapping
/// `input_dim -> hidden_dim -> ... -> output_dim`, where `output_dim` is the
/// partition count `k` of the target problem.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct GnnArchitecture {
    pub layers: usize,
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub output_dim: usize,
    pub activation: Activation,
}

impl GnnArchitecture {
    /// The reference configuration: two layers, input and hidden width 100.
    pub fn with_defaults(k: usize) -> Self {
        Self {
            layers: 2,
            input_dim: 100,
            hidden_dim: 100,
            output_dim: k,
            activation: Activation::Relu,
        }
    }

    pub fn validate(&self) -> Result<(), GnnError> {
        if self.layers == 0 {
            return Err(GnnError::BadArchitecture("need at least one layer".into()));
        }
        if self.input_dim == 0 || self.hidden_dim == 0 || self.output_dim == 0 {
            return Err(GnnError::BadArchitecture("dimensions must be positive".into()));
        }
        Ok(())
    }

    /// Per-layer widths: `[input_dim, hidden_dim x (L-1), output_dim]`.
    pub fn layer_dims(&self) -> Vec<usize> {
        let mut dims = Vec::with_capacity(self.layers + 1);
        dims.push(self.input_dim);
        for _ in 1..self.layers {
            dims.push(self.hidden_dim);
        }
        dims.push(self.output_dim);
        dims
    }

    /// Whether layer `l` (1-based) carries graph-normalization parameters.
    /// Normalization sits on every layer except the softmax head.
    fn normalized(&self, l: usize) -> bool {
        l < self.layers
    }

    pub fn param_count(&self) -> usize {
        self.layout().last().map_or(0, |b| b.end())
    }

    /// Flat parameter layout, in file order: per layer `Phi1` (row-major),
    /// `Phi2` (row-major), then `gamma`, `beta`, `alpha` on normalized
    /// layers.
    pub(crate) fn layout(&self) -> Vec<LayerLayout> {
        let dims = self.layer_dims();
        let mut offset = 0usize;
        let mut out = Vec::with_capacity(self.layers);
        for l in 1..=self.layers {
            let (d_in, d_out) = (dims[l - 1], dims[l]);
            let phi = d_in * d_out;
            let phi1 = offset..offset + phi;
            let phi2 = phi1.end..phi1.end + phi;
            offset = phi2.end;
            let norm = if self.normalized(l) {
                let gamma = offset..offset + d_out;
                let beta = gamma.end..gamma.end + d_out;
                let alpha = beta.end..beta.end + d_out;
                offset = alpha.end;
                Some(NormLayout { gamma, beta, alpha })
            } else {
                None
            };
            out.push(LayerLayout {
                d_in,
                d_out,
                phi1,
                phi2,
                norm,
            });
        }
        out
    }
}

#[derive(Clone, Debug)]
pub(crate) struct NormLayout {
    pub gamma: Range<usize>,
    pub beta: Range<usize>,
    pub alpha: Range<usize>,
}

#[derive(Clone, Debug)]
pub(crate) struct LayerLayout {
    pub d_in: usize,
    pub d_out: usize,
    pub phi1: Range<usize>,
    pub phi2: Range<usize>,
    pub norm: Option<NormLayout>,
}

impl LayerLayout {
    fn end(&self) -> usize {
        self.norm
            .as_ref()
            .map_or(self.phi2.end, |n| n.alpha.end)
    }
}

static NEXT_PARAMS_ID: AtomicU64 = AtomicU64::new(1);

fn fresh_id() -> u64 {
    NEXT_PARAMS_ID.fetch_add(1, Ordering::Relaxed)
}

/// All trainable parameters, stored flat in layout order. Every mutation
/// (including cloning) produces a fresh identity token so stale forward
/// caches cannot be paired with updated parameters.
#[derive(Debug)]
pub struct GnnParameters {
    arch: GnnArchitecture,
    data: Vec<f64>,
    id: u64,
}

impl Clone for GnnParameters {
    fn clone(&self) -> Self {
        Self {
            arch: self.arch,
            data: self.data.clone(),
            id: fresh_id(),
        }
    }
}

impl GnnParameters {
    /// Random initialization: each `Phi` entry uniform on
    /// `[-1/sqrt(fan_in), +1/sqrt(fan_in)]`; normalization starts at the
    /// identity (`gamma = alpha = 1`, `beta = 0`).
    pub fn random_init(arch: GnnArchitecture, seed: u64) -> Result<Self, GnnError> {
        arch.validate()?;
        let mut data = vec![0.0; arch.param_count()];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for layer in arch.layout() {
            let bound = 1.0 / (layer.d_in as f64).sqrt();
            for idx in layer.phi1.clone().chain(layer.phi2.clone()) {
                data[idx] = (rng.random::<f64>() * 2.0 - 1.0) * bound;
            }
            if let Some(norm) = &layer.norm {
                data[norm.gamma.clone()].fill(1.0);
                data[norm.alpha.clone()].fill(1.0);
            }
        }
        Ok(Self {
            arch,
            data,
            id: fresh_id(),
        })
    }

    /// All-zero message weights with identity normalization; the network
    /// outputs exactly uniform columns. Mostly useful in tests.
    pub fn constant_init(arch: GnnArchitecture) -> Result<Self, GnnError> {
        arch.validate()?;
        let mut data = vec![0.0; arch.param_count()];
        for layer in arch.layout() {
            if let Some(norm) = &layer.norm {
                data[norm.gamma.clone()].fill(1.0);
                data[norm.alpha.clone()].fill(1.0);
            }
        }
        Ok(Self {
            arch,
            data,
            id: fresh_id(),
        })
    }

    pub(crate) fn from_data(arch: GnnArchitecture, data: Vec<f64>) -> Result<Self, GnnError> {
        arch.validate()?;
        if data.len() != arch.param_count() {
            return Err(GnnError::ShapeMismatch(format!(
                "expected {} parameters, got {}",
                arch.param_count(),
                data.len()
            )));
        }
        Ok(Self {
            arch,
            data,
            id: fresh_id(),
        })
    }

    pub fn arch(&self) -> &GnnArchitecture {
        &self.arch
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Mutable access to the flat parameters. Taking it invalidates every
    /// outstanding forward cache.
    pub fn data_mut(&mut self) -> &mut [f64] {
        self.id = fresh_id();
        &mut self.data
    }

    fn phi1(&self, layer: &LayerLayout) -> ArrayView2<'_, f64> {
        ArrayView2::from_shape((layer.d_out, layer.d_in), &self.data[layer.phi1.clone()])
            .expect("layout is consistent")
    }

    fn phi2(&self, layer: &LayerLayout) -> ArrayView2<'_, f64> {
        ArrayView2::from_shape((layer.d_out, layer.d_in), &self.data[layer.phi2.clone()])
            .expect("layout is consistent")
    }
}

/// Gradients in the same flat layout as [`GnnParameters`].
#[derive(Clone, Debug)]
pub struct GnnGradients {
    arch: GnnArchitecture,
    data: Vec<f64>,
}

impl GnnGradients {
    fn zeros(arch: GnnArchitecture) -> Self {
        Self {
            arch,
            data: vec![0.0; arch.param_count()],
        }
    }

    pub fn arch(&self) -> &GnnArchitecture {
        &self.arch
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }
}

/// Fixed random node features, `node_count x dim`, i.i.d. uniform on
/// `[0, 1)`. Not trained; regenerate with the same seed to reproduce.
#[derive(Clone, Debug)]
pub struct NodeEmbeddings {
    data: Array2<f64>,
    seed: u64,
}

impl NodeEmbeddings {
    pub fn random(node_count: usize, dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = Array2::from_shape_fn((node_count, dim), |_| rng.random::<f64>());
        Self { data, seed }
    }

    pub fn node_count(&self) -> usize {
        self.data.nrows()
    }

    pub fn dim(&self) -> usize {
        self.data.ncols()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn array(&self) -> &Array2<f64> {
        &self.data
    }
}

#[derive(Debug)]
struct NormCache {
    mu: Vec<f64>,
    inv_std: Vec<f64>,
    v: Array2<f64>,
}

/// Everything the backward pass needs, captured by [`forward`]. Tied to the
/// exact parameter values that produced it via an identity token.
#[derive(Debug)]
pub struct ForwardCache {
    params_id: u64,
    /// `hs[0]` is the input embedding, `hs[l]` the output of layer `l`.
    hs: Vec<Array2<f64>>,
    msgs: Vec<Array2<f64>>,
    zs: Vec<Array2<f64>>,
    norms: Vec<Option<NormCache>>,
}

/// Weighted neighbor sum: row `i` of the result is
/// `sum_{j in N(i)} W_ij h_j`. Isolated nodes get a zero row.
fn aggregate(g: &WeightedGraph, h: &Array2<f64>) -> Array2<f64> {
    let (n, d) = h.dim();
    let mut m = Array2::zeros((n, d));
    for i in 0..n {
        let mut row = m.row_mut(i);
        for &(j, w) in g.neighbors(i) {
            row.scaled_add(w, &h.row(j));
        }
    }
    m
}

fn all_finite(a: &Array2<f64>) -> bool {
    a.iter().all(|v| v.is_finite())
}

/// Graph normalization, literally: per feature `c`,
/// `v = (z - alpha_c * mean_c) / sqrt(var_c + eps)` and
/// `u = gamma_c * v + beta_c`, with mean and (population) variance taken
/// over the graph's nodes.
fn graphnorm_forward(
    z: &Array2<f64>,
    gamma: &[f64],
    beta: &[f64],
    alpha: &[f64],
) -> (Array2<f64>, NormCache) {
    let (n, d) = z.dim();
    let nf = n as f64;
    let mut mu = vec![0.0; d];
    for i in 0..n {
        let row = z.row(i);
        for c in 0..d {
            mu[c] += row[c];
        }
    }
    for m in &mut mu {
        *m /= nf;
    }
    let mut var = vec![0.0; d];
    for i in 0..n {
        let row = z.row(i);
        for c in 0..d {
            let t = row[c] - mu[c];
            var[c] += t * t;
        }
    }
    let inv_std: Vec<f64> = var
        .iter()
        .map(|&s| 1.0 / (s / nf + EPS_NORM).sqrt())
        .collect();

    let mut v = Array2::zeros((n, d));
    let mut u = Array2::zeros((n, d));
    for i in 0..n {
        let zrow = z.row(i);
        let mut vrow = v.row_mut(i);
        let mut urow = u.row_mut(i);
        for c in 0..d {
            let vv = (zrow[c] - alpha[c] * mu[c]) * inv_std[c];
            vrow[c] = vv;
            urow[c] = gamma[c] * vv + beta[c];
        }
    }
    (u, NormCache { mu, inv_std, v })
}

/// Reverse of [`graphnorm_forward`]; returns `(dgamma, dbeta, dalpha, dz)`.
fn graphnorm_backward(
    z: &Array2<f64>,
    cache: &NormCache,
    gamma: &[f64],
    alpha: &[f64],
    du: &Array2<f64>,
) -> (Vec<f64>, Vec<f64>, Vec<f64>, Array2<f64>) {
    let (n, d) = z.dim();
    let nf = n as f64;
    let mut dgamma = vec![0.0; d];
    let mut dbeta = vec![0.0; d];
    // per-feature sums over dv = du * gamma
    let mut s1 = vec![0.0; d];
    let mut t2 = vec![0.0; d];
    for i in 0..n {
        let du_row = du.row(i);
        let v_row = cache.v.row(i);
        for c in 0..d {
            let g = du_row[c];
            dbeta[c] += g;
            dgamma[c] += g * v_row[c];
            let dv = g * gamma[c];
            s1[c] += dv;
            t2[c] += dv * v_row[c];
        }
    }
    let dalpha: Vec<f64> = (0..d)
        .map(|c| -cache.mu[c] * cache.inv_std[c] * s1[c])
        .collect();

    let mut dz = Array2::zeros((n, d));
    for i in 0..n {
        let du_row = du.row(i);
        let z_row = z.row(i);
        let mut dz_row = dz.row_mut(i);
        for c in 0..d {
            let inv = cache.inv_std[c];
            let dv = du_row[c] * gamma[c];
            dz_row[c] = inv * dv
                - alpha[c] * inv * s1[c] / nf
                - inv * inv * (z_row[c] - cache.mu[c]) * t2[c] / nf;
        }
    }
    (dgamma, dbeta, dalpha, dz)
}

fn softmax_rows(z: &Array2<f64>) -> Array2<f64> {
    let (n, k) = z.dim();
    let mut out = Array2::zeros((n, k));
    for i in 0..n {
        let zrow = z.row(i);
        let mut orow = out.row_mut(i);
        let mx = zrow.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for c in 0..k {
            let e = (zrow[c] - mx).exp();
            orow[c] = e;
            sum += e;
        }
        for c in 0..k {
            orow[c] /= sum;
        }
    }
    out
}

/// Runs the network on one instance. Returns the feasible assignment matrix
/// (node columns on the simplex, softmax guarantee) and the cache needed by
/// [`backward`].
pub fn forward(
    params: &GnnParameters,
    g: &WeightedGraph,
    h0: &NodeEmbeddings,
) -> Result<(AssignmentMatrix, ForwardCache), GnnError> {
    let arch = params.arch;
    let n = g.node_count();
    if h0.node_count() != n {
        return Err(GnnError::ShapeMismatch(format!(
            "embeddings cover {} nodes, graph has {n}",
            h0.node_count()
        )));
    }
    if h0.dim() != arch.input_dim {
        return Err(GnnError::ShapeMismatch(format!(
            "embedding dim {} does not match input dim {}",
            h0.dim(),
            arch.input_dim
        )));
    }

    let layout = arch.layout();
    let mut hs: Vec<Array2<f64>> = vec![h0.array().clone()];
    let mut msgs = Vec::with_capacity(arch.layers);
    let mut zs = Vec::with_capacity(arch.layers);
    let mut norms = Vec::with_capacity(arch.layers);

    for (i, layer) in layout.iter().enumerate() {
        let l = i + 1;
        let h_in = &hs[i];
        let msg = aggregate(g, h_in);
        let mut z = h_in.dot(&params.phi1(layer).t());
        z += &msg.dot(&params.phi2(layer).t());
        if !all_finite(&z) {
            return Err(GnnError::NonFinite { layer: l });
        }

        let h_out = if let Some(norm) = &layer.norm {
            let gamma = &params.data[norm.gamma.clone()];
            let beta = &params.data[norm.beta.clone()];
            let alpha = &params.data[norm.alpha.clone()];
            let (u, cache) = graphnorm_forward(&z, gamma, beta, alpha);
            norms.push(Some(cache));
            match arch.activation {
                Activation::Relu => u.mapv(|t| t.max(0.0)),
            }
        } else {
            norms.push(None);
            softmax_rows(&z)
        };
        if !all_finite(&h_out) {
            return Err(GnnError::NonFinite { layer: l });
        }
        msgs.push(msg);
        zs.push(z);
        hs.push(h_out);
    }

    let out = hs.last().expect("at least one layer");
    let x = AssignmentMatrix::new(arch.output_dim, n, out.iter().cloned().collect())?;
    Ok((
        x,
        ForwardCache {
            params_id: params.id,
            hs,
            msgs,
            zs,
            norms,
        },
    ))
}

/// Reverse-mode differentiation of the full pipeline given
/// `upstream = dLoss/dX` (node-major, like the assignment matrix).
///
/// The cache must come from a [`forward`] call with exactly these
/// parameters; a mismatched pairing is rejected.
pub fn backward(
    params: &GnnParameters,
    cache: &ForwardCache,
    g: &WeightedGraph,
    upstream: &[f64],
) -> Result<GnnGradients, GnnError> {
    if cache.params_id != params.id {
        return Err(GnnError::StaleCache);
    }
    let arch = params.arch;
    let n = g.node_count();
    let k = arch.output_dim;
    if cache.hs[0].nrows() != n {
        return Err(GnnError::ShapeMismatch(format!(
            "cache covers {} nodes, graph has {n}",
            cache.hs[0].nrows()
        )));
    }
    if upstream.len() != n * k {
        return Err(GnnError::ShapeMismatch(format!(
            "upstream has {} entries, expected {}",
            upstream.len(),
            n * k
        )));
    }

    let layout = arch.layout();
    let mut grads = GnnGradients::zeros(arch);

    // softmax head: dz = x .* (dx - <dx, x>) per node row
    let x = &cache.hs[arch.layers];
    let dx = ArrayView2::from_shape((n, k), upstream).expect("checked length");
    let mut dz = Array2::zeros((n, k));
    for i in 0..n {
        let xr = x.row(i);
        let dxr = dx.row(i);
        let inner: f64 = (0..k).map(|c| xr[c] * dxr[c]).sum();
        let mut dzr = dz.row_mut(i);
        for c in 0..k {
            dzr[c] = xr[c] * (dxr[c] - inner);
        }
    }

    for l in (1..=arch.layers).rev() {
        let layer = &layout[l - 1];
        let dphi1 = dz.t().dot(&cache.hs[l - 1]);
        let dphi2 = dz.t().dot(&cache.msgs[l - 1]);
        grads.data[layer.phi1.clone()]
            .copy_from_slice(dphi1.as_slice().expect("standard layout"));
        grads.data[layer.phi2.clone()]
            .copy_from_slice(dphi2.as_slice().expect("standard layout"));
        if l == 1 {
            break;
        }

        // into the previous layer's output
        let mut dh = dz.dot(&params.phi1(layer));
        dh += &aggregate(g, &dz.dot(&params.phi2(layer)));

        // through the previous layer's activation (relu mask: output > 0)
        let h_prev = &cache.hs[l - 1];
        let mut du = dh;
        du.zip_mut_with(h_prev, |d, &h| {
            if h <= 0.0 {
                *d = 0.0;
            }
        });

        // through the previous layer's graph normalization
        let prev = &layout[l - 2];
        let norm_layout = prev.norm.as_ref().expect("hidden layers are normalized");
        let norm_cache = cache.norms[l - 2].as_ref().expect("cache matches layout");
        let gamma = &params.data[norm_layout.gamma.clone()];
        let alpha = &params.data[norm_layout.alpha.clone()];
        let (dgamma, dbeta, dalpha, dz_prev) =
            graphnorm_backward(&cache.zs[l - 2], norm_cache, gamma, alpha, &du);
        grads.data[norm_layout.gamma.clone()].copy_from_slice(&dgamma);
        grads.data[norm_layout.beta.clone()].copy_from_slice(&dbeta);
        grads.data[norm_layout.alpha.clone()].copy_from_slice(&dalpha);
        dz = dz_prev;
    }
    Ok(grads)
}

/// Instance loss and its parameter gradients: the relaxed objective of the
/// forward output, back-propagated through the network.
pub fn loss_instance(
    params: &GnnParameters,
    g: &WeightedGraph,
    h0: &NodeEmbeddings,
) -> Result<(f64, GnnGradients), GnnError> {
    let (x, cache) = forward(params, g, h0)?;
    let f = crate::relax::objective_f(&x, g)?;
    let upstream = crate::relax::gradient_f(&x, g)?;
    let grads = backward(params, &cache, g, &upstream)?;
    Ok((f, grads))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{generate_random_regular, parse_gset, WeightedGraph};
    use ndarray::Array2;

    const TRIANGLE: &str = "3 3\n1 2 1\n1 3 1\n2 3 1";

    fn small_arch(input: usize, hidden: usize, k: usize) -> GnnArchitecture {
        GnnArchitecture {
            layers: 2,
            input_dim: input,
            hidden_dim: hidden,
            output_dim: k,
            activation: Activation::Relu,
        }
    }

    #[test]
    fn constant_network_outputs_uniform_columns() {
        let g = parse_gset(TRIANGLE).unwrap();
        let arch = small_arch(5, 4, 3);
        let params = GnnParameters::constant_init(arch).unwrap();
        let h0 = NodeEmbeddings::random(3, 5, 0);
        let (x, _) = forward(&params, &g, &h0).unwrap();
        for j in 0..3 {
            for &v in x.column(j) {
                assert!((v - 1.0 / 3.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn isolated_node_ignores_message_weights() {
        let g = parse_gset("1 0").unwrap();
        let arch = small_arch(4, 3, 2);
        let mut params = GnnParameters::random_init(arch, 3).unwrap();
        let h0 = NodeEmbeddings::random(1, 4, 4);
        let (x, _) = forward(&params, &g, &h0).unwrap();

        // perturbing every Phi2 block must not change the output
        let layout = arch.layout();
        for layer in &layout {
            let range = layer.phi2.clone();
            for i in range {
                params.data_mut()[i] += 7.5;
            }
        }
        let (y, _) = forward(&params, &g, &h0).unwrap();
        assert_eq!(x.values(), y.values());
    }

    #[test]
    fn equal_embeddings_on_triangle_give_identical_columns() {
        let g = parse_gset(TRIANGLE).unwrap();
        let arch = small_arch(6, 5, 2);
        let params = GnnParameters::random_init(arch, 9).unwrap();
        let one_row = NodeEmbeddings::random(1, 6, 2);
        let mut data = Array2::zeros((3, 6));
        for i in 0..3 {
            data.row_mut(i).assign(&one_row.array().row(0));
        }
        let h0 = NodeEmbeddings { data, seed: 2 };
        let (x, _) = forward(&params, &g, &h0).unwrap();
        for j in 1..3 {
            for l in 0..2 {
                assert!((x.column(j)[l] - x.column(0)[l]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn output_columns_sum_to_one() {
        let g = generate_random_regular(40, 3, 1).unwrap();
        let arch = small_arch(16, 12, 4);
        let params = GnnParameters::random_init(arch, 5).unwrap();
        let h0 = NodeEmbeddings::random(40, 16, 6);
        let (x, _) = forward(&params, &g, &h0).unwrap();
        for j in 0..40 {
            let s: f64 = x.column(j).iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn permutation_equivariance() {
        let n = 12;
        let g = generate_random_regular(n, 3, 8).unwrap();
        let arch = small_arch(7, 6, 3);
        let params = GnnParameters::random_init(arch, 11).unwrap();
        let h0 = NodeEmbeddings::random(n, 7, 12);
        let (x, _) = forward(&params, &g, &h0).unwrap();

        // relabel node i -> (i + 5) mod n
        let perm: Vec<usize> = (0..n).map(|i| (i + 5) % n).collect();
        let edges: Vec<(usize, usize, f64)> = g
            .edges()
            .iter()
            .map(|e| (perm[e.u], perm[e.v], e.w))
            .collect();
        let gp = WeightedGraph::from_edges(n, edges).unwrap();
        let mut data = Array2::zeros((n, 7));
        for i in 0..n {
            data.row_mut(perm[i]).assign(&h0.array().row(i));
        }
        let h0p = NodeEmbeddings { data, seed: 12 };
        let (xp, _) = forward(&params, &gp, &h0p).unwrap();
        for j in 0..n {
            for l in 0..3 {
                let a = x.column(j)[l];
                let b = xp.column(perm[j])[l];
                assert!((a - b).abs() < 1e-9, "node {j} label {l}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let g = parse_gset(TRIANGLE).unwrap();
        let arch = small_arch(5, 4, 2);
        let params = GnnParameters::random_init(arch, 1).unwrap();
        let h0 = NodeEmbeddings::random(3, 5, 2);
        let (_, cache) = forward(&params, &g, &h0).unwrap();
        let grads = backward(&params, &cache, &g, &vec![0.0; 6]).unwrap();
        assert!(grads.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn stale_cache_is_rejected() {
        let g = parse_gset(TRIANGLE).unwrap();
        let arch = small_arch(5, 4, 2);
        let mut params = GnnParameters::random_init(arch, 1).unwrap();
        let h0 = NodeEmbeddings::random(3, 5, 2);
        let (_, cache) = forward(&params, &g, &h0).unwrap();
        params.data_mut()[0] += 0.1;
        let err = backward(&params, &cache, &g, &vec![0.0; 6]).unwrap_err();
        assert!(matches!(err, GnnError::StaleCache));
    }

    /// Central finite differences of the instance loss against the analytic
    /// gradients, touching every parameter group (both layers' Phi blocks
    /// and the normalization parameters).
    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for trial in 0..3 {
            let n = 6;
            let mut edges = Vec::new();
            for u in 0..n {
                for v in (u + 1)..n {
                    if rng.random::<f64>() < 0.5 {
                        edges.push((u, v, rng.random_range(-2.0..2.0)));
                    }
                }
            }
            if edges.is_empty() {
                edges.push((0, 1, 1.0));
            }
            let g = WeightedGraph::from_edges(n, edges).unwrap();
            let arch = small_arch(5, 4, 3);
            let mut params = GnnParameters::random_init(arch, 100 + trial).unwrap();
            let h0 = NodeEmbeddings::random(n, 5, 200 + trial);

            let (_, grads) = loss_instance(&params, &g, &h0).unwrap();
            let h = 1e-4;
            let mut worst: f64 = 0.0;
            for idx in 0..params.data().len() {
                let orig = params.data()[idx];
                params.data_mut()[idx] = orig + h;
                let (f_plus, _) = loss_instance(&params, &g, &h0).unwrap();
                params.data_mut()[idx] = orig - h;
                let (f_minus, _) = loss_instance(&params, &g, &h0).unwrap();
                params.data_mut()[idx] = orig;
                let fd = (f_plus - f_minus) / (2.0 * h);
                let denom = grads.data()[idx].abs().max(1.0);
                worst = worst.max((grads.data()[idx] - fd).abs() / denom);
            }
            assert!(worst < 1e-4, "trial {trial}: rel err {worst}");
        }
    }

    #[test]
    fn gradients_respect_graph_automorphism() {
        // triangle with identical embeddings: relabeling nodes is an
        // automorphism, so parameter gradients must be unchanged
        let g = parse_gset(TRIANGLE).unwrap();
        let arch = small_arch(4, 3, 2);
        let params = GnnParameters::random_init(arch, 31).unwrap();
        let row = NodeEmbeddings::random(1, 4, 32);
        let mut data = Array2::zeros((3, 4));
        for i in 0..3 {
            data.row_mut(i).assign(&row.array().row(0));
        }
        let h0 = NodeEmbeddings { data, seed: 32 };
        let (_, grads) = loss_instance(&params, &g, &h0).unwrap();

        let edges: Vec<(usize, usize, f64)> = g
            .edges()
            .iter()
            .map(|e| ((e.u + 1) % 3, (e.v + 1) % 3, e.w))
            .collect();
        let gp = WeightedGraph::from_edges(3, edges).unwrap();
        let (_, grads_p) = loss_instance(&params, &gp, &h0).unwrap();
        for (a, b) in grads.data().iter().zip(grads_p.data()) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn loss_instance_examples() {
        // constant-uniform network on the triangle: f = 3
        let g = parse_gset(TRIANGLE).unwrap();
        let arch = small_arch(5, 4, 2);
        let params = GnnParameters::constant_init(arch).unwrap();
        let h0 = NodeEmbeddings::random(3, 5, 1);
        let (f, _) = loss_instance(&params, &g, &h0).unwrap();
        assert!((f - 3.0).abs() < 1e-12);

        // edgeless graph: zero loss, zero gradients
        let empty = parse_gset("4 0").unwrap();
        let params = GnnParameters::random_init(arch, 2).unwrap();
        let h0 = NodeEmbeddings::random(4, 5, 3);
        let (f, grads) = loss_instance(&params, &empty, &h0).unwrap();
        assert_eq!(f, 0.0);
        assert!(grads.data().iter().all(|&v| v == 0.0));

        // definitional identity: loss equals the objective at the output
        let params = GnnParameters::random_init(arch, 4).unwrap();
        let h0 = NodeEmbeddings::random(3, 5, 5);
        let (f, _) = loss_instance(&params, &g, &h0).unwrap();
        let (x, _) = forward(&params, &g, &h0).unwrap();
        let direct = crate::relax::objective_f(&x, &g).unwrap();
        assert!((f - direct).abs() <= 1e-12 * direct.abs().max(1.0));
    }

    #[test]
    fn shape_mismatches_are_rejected() {
        let g = parse_gset(TRIANGLE).unwrap();
        let arch = small_arch(5, 4, 2);
        let params = GnnParameters::random_init(arch, 1).unwrap();
        let wrong_nodes = NodeEmbeddings::random(4, 5, 0);
        assert!(matches!(
            forward(&params, &g, &wrong_nodes).unwrap_err(),
            GnnError::ShapeMismatch(_)
        ));
        let wrong_dim = NodeEmbeddings::random(3, 6, 0);
        assert!(matches!(
            forward(&params, &g, &wrong_dim).unwrap_err(),
            GnnError::ShapeMismatch(_)
        ));
    }

    #[test]
    fn single_layer_architecture_works() {
        let g = parse_gset(TRIANGLE).unwrap();
        let arch = GnnArchitecture {
            layers: 1,
            input_dim: 4,
            hidden_dim: 4,
            output_dim: 2,
            activation: Activation::Relu,
        };
        let params = GnnParameters::random_init(arch, 1).unwrap();
        let h0 = NodeEmbeddings::random(3, 4, 2);
        let (x, cache) = forward(&params, &g, &h0).unwrap();
        let upstream = crate::relax::gradient_f(&x, &g).unwrap();
        let grads = backward(&params, &cache, &g, &upstream).unwrap();
        assert_eq!(grads.data().len(), params.data().len());
    }
}
