//! The plan scorer: stacked tree convolutions with Leaky ReLU, dynamic max
//! pooling into a plan embedding, and a small MLP producing one score.
//! A higher score means a plan predicted to run faster.

mod checkpoint;

pub use checkpoint::{Checkpoint, TrainingMode, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};

use crate::hint_catalog::HintSet;
use crate::plan_ir::{EncodedTree, FeatureScaler, FEATURE_DIM};
use crate::tensor::{
    dynamic_max_pool, dynamic_max_pool_backward, leaky_relu, leaky_relu_backward, DenseMatrix, LinearGrads,
    LinearLayer, PoolResult, TensorError, TreeBatch, TreeConvGrads, TreeConvLayer, DEFAULT_LEAKY_SLOPE,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ScorerError {
    #[error("invalid architecture: {0}")]
    InvalidArchitecture(String),
    #[error("tree has no non-Null nodes")]
    EmptyTree,
    #[error("no candidate plans to choose from")]
    EmptyCandidates,
    #[error(transparent)]
    Tensor(TensorError),
    #[error("checkpoint I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("checkpoint format version {found} is not supported (expected {expected})")]
    FormatVersionMismatch { found: u32, expected: u32 },
    #[error("checkpoint is truncated or its checksum does not match")]
    CorruptChecksum,
    #[error("malformed checkpoint: {0}")]
    Malformed(String),
}

impl From<TensorError> for ScorerError {
    fn from(e: TensorError) -> Self {
        match e {
            TensorError::EmptyTree => ScorerError::EmptyTree,
            other => ScorerError::Tensor(other),
        }
    }
}

/// Layer widths. `mlp_dims` lists each linear layer's output width; the last
/// one must be 1.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Architecture {
    pub input_dim: usize,
    pub conv_channels: Vec<usize>,
    pub mlp_dims: Vec<usize>,
}

impl Default for Architecture {
    fn default() -> Self {
        Architecture { input_dim: FEATURE_DIM, conv_channels: vec![256, 128, 64], mlp_dims: vec![32, 1] }
    }
}

impl Architecture {
    pub fn validate(&self) -> Result<(), ScorerError> {
        let bad = |m: &str| Err(ScorerError::InvalidArchitecture(m.to_string()));
        if self.conv_channels.is_empty() {
            return bad("at least one tree convolution layer is required");
        }
        if self.mlp_dims.is_empty() {
            return bad("at least one linear layer is required");
        }
        if self.mlp_dims.last() != Some(&1) {
            return bad("the last linear layer must output a single score");
        }
        if self.input_dim == 0 || self.conv_channels.iter().chain(&self.mlp_dims).any(|&d| d == 0) {
            return bad("layer widths must be positive");
        }
        Ok(())
    }

    pub fn embedding_dim(&self) -> usize {
        *self.conv_channels.last().expect("validated")
    }

    pub fn param_count(&self) -> Result<usize, ScorerError> {
        self.validate()?;
        let mut total = 0;
        let mut d = self.input_dim;
        for &c in &self.conv_channels {
            total += 3 * d * c + c;
            d = c;
        }
        for &o in &self.mlp_dims {
            total += d * o + o;
            d = o;
        }
        Ok(total)
    }
}

/// All trainable weights plus what is needed to encode inputs consistently.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScorerParams {
    pub convs: Vec<TreeConvLayer>,
    pub mlp: Vec<LinearLayer>,
    pub scaler: FeatureScaler,
    pub catalog_hash: String,
    pub seed: u64,
}

/// Default-architecture network initialized from `seed`.
pub fn init_params(seed: u64) -> ScorerParams {
    init_params_with(&Architecture::default(), seed).expect("default architecture is valid")
}

/// Weights uniform in `±sqrt(6 / (fan_in + fan_out))`, where a tree
/// convolution's fan-in counts all three filters; biases zero.
pub fn init_params_with(arch: &Architecture, seed: u64) -> Result<ScorerParams, ScorerError> {
    arch.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut uniform = |rows: usize, cols: usize, fan_in: usize| {
        let a = (6.0 / (fan_in + rows) as f64).sqrt();
        DenseMatrix::from_fn(rows, cols, |_, _| rng.gen_range(-a..=a))
    };
    let mut convs = Vec::new();
    let mut d = arch.input_dim;
    for &c in &arch.conv_channels {
        convs.push(TreeConvLayer {
            w_self: uniform(c, d, 3 * d),
            w_left: uniform(c, d, 3 * d),
            w_right: uniform(c, d, 3 * d),
            bias: vec![0.0; c],
        });
        d = c;
    }
    let mut mlp = Vec::new();
    for &o in &arch.mlp_dims {
        mlp.push(LinearLayer { weight: uniform(o, d, d), bias: vec![0.0; o] });
        d = o;
    }
    Ok(ScorerParams { convs, mlp, scaler: FeatureScaler::default(), catalog_hash: String::new(), seed })
}

pub fn param_count(p: &ScorerParams) -> usize {
    p.convs.iter().map(TreeConvLayer::param_count).sum::<usize>()
        + p.mlp.iter().map(LinearLayer::param_count).sum::<usize>()
}

impl ScorerParams {
    pub fn architecture(&self) -> Architecture {
        Architecture {
            input_dim: self.convs.first().map_or(0, TreeConvLayer::d_in),
            conv_channels: self.convs.iter().map(TreeConvLayer::d_out).collect(),
            mlp_dims: self.mlp.iter().map(LinearLayer::d_out).collect(),
        }
    }

    /// Same shapes, all zeros; used as a gradient accumulator.
    pub fn zeros_like(&self) -> NetworkGrads {
        NetworkGrads {
            convs: self
                .convs
                .iter()
                .map(|c| TreeConvGrads {
                    w_self: DenseMatrix::zeros(c.d_out(), c.d_in()),
                    w_left: DenseMatrix::zeros(c.d_out(), c.d_in()),
                    w_right: DenseMatrix::zeros(c.d_out(), c.d_in()),
                    bias: vec![0.0; c.d_out()],
                })
                .collect(),
            mlp: self
                .mlp
                .iter()
                .map(|l| LinearGrads { weight: DenseMatrix::zeros(l.d_out(), l.d_in()), bias: vec![0.0; l.d_out()] })
                .collect(),
        }
    }

    /// Trainable tensors in a fixed order matching [`NetworkGrads::tensors`].
    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        for c in &mut self.convs {
            out.push(&mut c.w_self.data);
            out.push(&mut c.w_left.data);
            out.push(&mut c.w_right.data);
            out.push(&mut c.bias);
        }
        for l in &mut self.mlp {
            out.push(&mut l.weight.data);
            out.push(&mut l.bias);
        }
        out
    }

    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::new();
        for c in &self.convs {
            out.extend([&c.w_self.data[..], &c.w_left.data, &c.w_right.data, &c.bias]);
        }
        for l in &self.mlp {
            out.extend([&l.weight.data[..], &l.bias]);
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|x| x.is_finite()))
    }
}

/// Gradients with the same layout as [`ScorerParams`]' trainable tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkGrads {
    pub convs: Vec<TreeConvGrads>,
    pub mlp: Vec<LinearGrads>,
}

impl NetworkGrads {
    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::new();
        for c in &self.convs {
            out.extend([&c.w_self.data[..], &c.w_left.data, &c.w_right.data, &c.bias]);
        }
        for l in &self.mlp {
            out.extend([&l.weight.data[..], &l.bias]);
        }
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        for c in &mut self.convs {
            out.push(&mut c.w_self.data);
            out.push(&mut c.w_left.data);
            out.push(&mut c.w_right.data);
            out.push(&mut c.bias);
        }
        for l in &mut self.mlp {
            out.push(&mut l.weight.data);
            out.push(&mut l.bias);
        }
        out
    }

    /// `self += other`, element by element.
    pub fn accumulate(&mut self, other: &NetworkGrads) {
        for (dst, src) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (d, s) in dst.iter_mut().zip(src) {
                *d += s;
            }
        }
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.tensors().concat()
    }
}

/// Intermediate values of a batched forward pass, kept for backward.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    topo: TreeBatch,
    conv_inputs: Vec<DenseMatrix>,
    conv_pre: Vec<DenseMatrix>,
    pool: PoolResult,
    mlp_inputs: Vec<DenseMatrix>,
    mlp_pre: Vec<DenseMatrix>,
    pub scores: Vec<f64>,
}

impl ForwardCache {
    /// Pooled plan embeddings, one row per tree.
    pub fn embeddings(&self) -> &DenseMatrix {
        &self.pool.pooled
    }

    /// Signs of all hidden pre-activations and the pooling winners. Inputs
    /// sharing a region are related by one affine map of the network.
    pub fn linear_region(&self) -> (Vec<bool>, Vec<usize>) {
        let last = self.mlp_pre.len() - 1;
        let signs =
            self.conv_pre.iter().chain(&self.mlp_pre[..last]).flat_map(|m| m.data.iter().map(|&x| x > 0.0)).collect();
        (signs, self.pool.argmax.clone())
    }
}

fn lrelu_matrix(m: &DenseMatrix) -> DenseMatrix {
    DenseMatrix::from_vec(m.rows, m.cols, leaky_relu(&m.data, DEFAULT_LEAKY_SLOPE))
}

fn lrelu_matrix_backward(pre: &DenseMatrix, grad: &DenseMatrix) -> DenseMatrix {
    DenseMatrix::from_vec(pre.rows, pre.cols, leaky_relu_backward(&pre.data, &grad.data, DEFAULT_LEAKY_SLOPE))
}

/// Runs a batch of trees through the network.
pub fn forward(p: &ScorerParams, trees: &[&EncodedTree]) -> Result<ForwardCache, ScorerError> {
    let (topo, x) = TreeBatch::from_encoded(trees.iter().copied());
    forward_stacked(p, topo, x)
}

fn forward_stacked(p: &ScorerParams, topo: TreeBatch, x: DenseMatrix) -> Result<ForwardCache, ScorerError> {
    if topo.segments.iter().any(|s| s.is_empty()) {
        return Err(ScorerError::EmptyTree);
    }
    let mut conv_inputs = Vec::with_capacity(p.convs.len());
    let mut conv_pre = Vec::with_capacity(p.convs.len());
    let mut h = x;
    for layer in &p.convs {
        let pre = layer.forward(&topo, &h)?;
        conv_inputs.push(std::mem::replace(&mut h, lrelu_matrix(&pre)));
        conv_pre.push(pre);
    }
    let pool = dynamic_max_pool(&topo, &h)?;
    let mut mlp_inputs = Vec::with_capacity(p.mlp.len());
    let mut mlp_pre = Vec::with_capacity(p.mlp.len());
    let mut z = pool.pooled.clone();
    let last = p.mlp.len() - 1;
    for (i, layer) in p.mlp.iter().enumerate() {
        let pre = layer.forward(&z)?;
        let next = if i == last { pre.clone() } else { lrelu_matrix(&pre) };
        mlp_inputs.push(std::mem::replace(&mut z, next));
        mlp_pre.push(pre);
    }
    let scores = z.data;
    Ok(ForwardCache { topo, conv_inputs, conv_pre, pool, mlp_inputs, mlp_pre, scores })
}

/// Gradients of `Σ_t dscores[t]·score_t` with respect to all trainable
/// tensors.
pub fn backward(p: &ScorerParams, cache: &ForwardCache, dscores: &[f64]) -> Result<NetworkGrads, ScorerError> {
    let trees = cache.scores.len();
    if dscores.len() != trees {
        return Err(TensorError::DimensionMismatch {
            op: "score gradient",
            expected: trees.to_string(),
            got: dscores.len().to_string(),
        }
        .into());
    }
    let last = p.mlp.len() - 1;
    let mut g = DenseMatrix::from_vec(trees, 1, dscores.to_vec());
    let mut mlp_grads = Vec::with_capacity(p.mlp.len());
    for i in (0..p.mlp.len()).rev() {
        if i != last {
            g = lrelu_matrix_backward(&cache.mlp_pre[i], &g);
        }
        let (lg, dx) = p.mlp[i].backward(&cache.mlp_inputs[i], &g)?;
        mlp_grads.push(lg);
        g = dx;
    }
    mlp_grads.reverse();
    let mut h = dynamic_max_pool_backward(cache.topo.node_count(), &cache.pool, &g)?;
    let mut conv_grads = Vec::with_capacity(p.convs.len());
    for i in (0..p.convs.len()).rev() {
        let gpre = lrelu_matrix_backward(&cache.conv_pre[i], &h);
        let (cg, dx) = p.convs[i].backward(&cache.topo, &cache.conv_inputs[i], &gpre)?;
        conv_grads.push(cg);
        h = dx;
    }
    conv_grads.reverse();
    Ok(NetworkGrads { convs: conv_grads, mlp: mlp_grads })
}

/// Plan embedding: the pooled output of the last convolution.
pub fn embed(p: &ScorerParams, t: &EncodedTree) -> Result<Vec<f64>, ScorerError> {
    Ok(forward(p, &[t])?.embeddings().row(0).to_vec())
}

pub fn embed_batch(p: &ScorerParams, trees: &[&EncodedTree]) -> Result<DenseMatrix, ScorerError> {
    Ok(forward(p, trees)?.pool.pooled)
}

pub fn score(p: &ScorerParams, t: &EncodedTree) -> Result<f64, ScorerError> {
    Ok(forward(p, &[t])?.scores[0])
}

pub fn score_batch(p: &ScorerParams, trees: &[&EncodedTree]) -> Result<Vec<f64>, ScorerError> {
    if trees.is_empty() {
        return Ok(Vec::new());
    }
    Ok(forward(p, trees)?.scores)
}

/// Index of the best score; exact ties go to the smallest `ids` entry.
pub fn argmax_by_score(scores: &[f64], ids: &[usize]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for i in 0..scores.len() {
        best = match best {
            None => Some(i),
            Some(b) if scores[i] > scores[b] || (scores[i] == scores[b] && ids[i] < ids[b]) => Some(i),
            keep => keep,
        };
    }
    best
}

/// The hint set whose plan scores highest.
pub fn select_hint(p: &ScorerParams, candidates: &[(HintSet, EncodedTree)]) -> Result<HintSet, ScorerError> {
    if candidates.is_empty() {
        return Err(ScorerError::EmptyCandidates);
    }
    let trees: Vec<&EncodedTree> = candidates.iter().map(|c| &c.1).collect();
    let scores = score_batch(p, &trees)?;
    let ids: Vec<usize> = candidates.iter().map(|c| c.0.id).collect();
    let best = argmax_by_score(&scores, &ids).expect("non-empty");
    Ok(candidates[best].0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hint_catalog::default_catalog;
    use crate::plan_ir::{encode_plan, fit_scaler, OperatorKind, PlanNode, PlanTree};

    fn small_arch() -> Architecture {
        Architecture { input_dim: FEATURE_DIM, conv_channels: vec![6, 5, 4], mlp_dims: vec![3, 1] }
    }

    fn toy_tree() -> PlanTree {
        PlanTree::new(PlanNode::new(OperatorKind::HashJoin, 250.0, 40.0).with_children(vec![
                PlanNode::new(OperatorKind::SeqScan, 100.0, 1000.0).with_relation("a"),
                PlanNode::new(OperatorKind::Other("Hash".into()), 20.0, 30.0).with_children(vec![
                    PlanNode::new(OperatorKind::IndexScan, 18.0, 30.0).with_relation("b"),
                ]),
            ]))
        .unwrap()
    }

    #[test]
    fn default_dims_param_count() {
        let expected = (3 * 9 * 256 + 256) + (3 * 256 * 128 + 128) + (3 * 128 * 64 + 64) + (64 * 32 + 32) + (32 + 1);
        assert_eq!(expected, 132_353);
        assert_eq!(param_count(&init_params(0)), 132_353);
        assert_eq!(Architecture::default().param_count().unwrap(), 132_353);
    }

    #[test]
    fn hypothetical_and_degenerate_dims() {
        let arch = Architecture { input_dim: 2, conv_channels: vec![2], mlp_dims: vec![1] };
        assert_eq!(arch.param_count().unwrap(), 17);
        assert_eq!(param_count(&init_params_with(&arch, 1).unwrap()), 17);
        let empty = Architecture { input_dim: 9, conv_channels: vec![], mlp_dims: vec![] };
        assert!(matches!(empty.param_count(), Err(ScorerError::InvalidArchitecture(_))));
        assert!(init_params_with(&empty, 1).is_err());
        let no_scalar = Architecture { mlp_dims: vec![4], ..Architecture::default() };
        assert!(no_scalar.validate().is_err());
    }

    #[test]
    fn init_is_deterministic_with_zero_biases() {
        let a = init_params(42);
        assert_eq!(a, init_params(42));
        assert_ne!(a, init_params(43));
        assert!(a.convs.iter().all(|c| c.bias.iter().all(|&b| b == 0.0)));
        assert!(a.mlp.iter().all(|l| l.bias.iter().all(|&b| b == 0.0)));
        let bound = (6.0f64 / (27.0 + 256.0)).sqrt();
        assert!(a.convs[0].w_left.data.iter().all(|w| w.abs() <= bound));
    }

    #[test]
    fn embedding_shape_and_determinism() {
        let p = init_params(42);
        let t = toy_tree();
        let e = encode_plan(&t, &fit_scaler([&t]).unwrap());
        let v = embed(&p, &e).unwrap();
        assert_eq!(v.len(), 64);
        assert!(v.iter().all(|x| x.is_finite()));
        assert_eq!(v, embed(&p, &e).unwrap());
    }

    #[test]
    fn duplicated_child_changes_embedding() {
        let p = init_params(42);
        let leaf = PlanNode::new(OperatorKind::SeqScan, 50.0, 500.0);
        let single = PlanTree::new(leaf.clone()).unwrap();
        let join =
            PlanTree::new(PlanNode::new(OperatorKind::SeqScan, 50.0, 500.0).with_children(vec![leaf.clone(), leaf]))
                .unwrap();
        let s = fit_scaler([&join]).unwrap();
        let a = embed(&p, &encode_plan(&single, &s)).unwrap();
        let b = embed(&p, &encode_plan(&join, &s)).unwrap();
        assert_ne!(a, b);
    }

    /// Explicit per-node recursion, separate from the batched gemm path.
    fn reference_score(p: &ScorerParams, t: &EncodedTree) -> f64 {
        let lrelu = |x: f64| if x > 0.0 { x } else { 0.01 * x };
        let mut feats: Vec<Option<Vec<f64>>> =
            t.nodes.iter().map(|n| (!n.is_null).then(|| n.features.to_vec())).collect();
        for layer in &p.convs {
            let get = |f: &Vec<Option<Vec<f64>>>, c: Option<usize>, j: usize| {
                c.and_then(|c| f[c].as_ref()).map_or(0.0, |v| v[j])
            };
            let next: Vec<Option<Vec<f64>>> = t
                .nodes
                .iter()
                .enumerate()
                .map(|(v, n)| {
                    feats[v].as_ref().map(|x| {
                        (0..layer.d_out())
                            .map(|o| {
                                let mut s = layer.bias[o];
                                for j in 0..layer.d_in() {
                                    s += layer.w_self.get(o, j) * x[j]
                                        + layer.w_left.get(o, j) * get(&feats, n.left, j)
                                        + layer.w_right.get(o, j) * get(&feats, n.right, j);
                                }
                                lrelu(s)
                            })
                            .collect()
                    })
                })
                .collect();
            feats = next;
        }
        let d = p.convs.last().unwrap().d_out();
        let mut z: Vec<f64> =
            (0..d).map(|c| feats.iter().flatten().map(|v| v[c]).fold(f64::NEG_INFINITY, f64::max)).collect();
        for (i, l) in p.mlp.iter().enumerate() {
            z = (0..l.d_out())
                .map(|o| {
                    let s = l.bias[o] + (0..l.d_in()).map(|j| l.weight.get(o, j) * z[j]).sum::<f64>();
                    if i + 1 == p.mlp.len() {
                        s
                    } else {
                        lrelu(s)
                    }
                })
                .collect();
        }
        z[0]
    }

    #[test]
    fn score_matches_reference_forward() {
        let p = init_params(42);
        let t = toy_tree();
        let e = encode_plan(&t, &fit_scaler([&t]).unwrap());
        let got = score(&p, &e).unwrap();
        let want = reference_score(&p, &e);
        assert!((got - want).abs() < 1e-12 * want.abs().max(1.0), "{got} vs {want}");
    }

    #[test]
    fn batch_position_does_not_change_scores() {
        let p = init_params_with(&small_arch(), 3).unwrap();
        let t = toy_tree();
        let s = fit_scaler([&t]).unwrap();
        let a = encode_plan(&t, &s);
        let b = encode_plan(&PlanTree::new(t.root.children[1].clone()).unwrap(), &s);
        let ab = score_batch(&p, &[&a, &b]).unwrap();
        let ba = score_batch(&p, &[&b, &a]).unwrap();
        assert_eq!(ab[0], ba[1]);
        assert_eq!(ab[1], ba[0]);
        assert_eq!(ab[0], score(&p, &a).unwrap());
    }

    #[test]
    fn select_hint_rules() {
        let p = init_params_with(&small_arch(), 9).unwrap();
        let cat = default_catalog();
        let t = toy_tree();
        let s = fit_scaler([&t]).unwrap();
        let e = encode_plan(&t, &s);
        let one = [(*cat.get(4).unwrap(), e.clone())];
        assert_eq!(select_hint(&p, &one).unwrap().id, 4);
        // identical trees tie exactly: lowest id wins regardless of position
        let tie = [(*cat.get(7).unwrap(), e.clone()), (*cat.get(2).unwrap(), e.clone())];
        assert_eq!(select_hint(&p, &tie).unwrap().id, 2);
        assert!(matches!(select_hint(&p, &[]), Err(ScorerError::EmptyCandidates)));

        assert_eq!(argmax_by_score(&[0.2, 0.9], &[0, 1]), Some(1));
        assert_eq!(argmax_by_score(&[0.9, 0.9], &[5, 3]), Some(1));
        assert_eq!(argmax_by_score(&[], &[]), None);
    }

    #[test]
    fn empty_tree_is_rejected() {
        let p = init_params_with(&small_arch(), 1).unwrap();
        let empty = EncodedTree { nodes: vec![] };
        assert!(matches!(score(&p, &empty), Err(ScorerError::EmptyTree)));
    }

    #[test]
    fn bias_shift_preserves_selection() {
        let mut p = init_params_with(&small_arch(), 5).unwrap();
        let cat = default_catalog();
        let t = toy_tree();
        let s = fit_scaler([&t]).unwrap();
        let mut small = t.clone();
        small.root.children.pop();
        let small = PlanTree::new(small.root).unwrap();
        let cands = vec![(*cat.get(0).unwrap(), encode_plan(&t, &s)), (*cat.get(1).unwrap(), encode_plan(&small, &s))];
        let before = select_hint(&p, &cands).unwrap();
        let scores_before = score_batch(&p, &[&cands[0].1, &cands[1].1]).unwrap();
        p.mlp.last_mut().unwrap().bias[0] += 3.25;
        let scores_after = score_batch(&p, &[&cands[0].1, &cands[1].1]).unwrap();
        assert_eq!(select_hint(&p, &cands).unwrap(), before);
        for (a, b) in scores_before.iter().zip(&scores_after) {
            assert!((b - a - 3.25).abs() < 1e-12);
        }
    }
}
