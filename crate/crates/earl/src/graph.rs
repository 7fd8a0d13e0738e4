//! Graph view of the user population for centralized critics.
//!
//! Each user is a node whose feature is an encoding of its own observation
//! and action. A critic looks at the population through a one-hot adjacency
//! matrix (self row first, then neighbors) and weighs neighbor features
//! with multi-head cosine-similarity attention. The attended context is
//! concatenated onto the node's own feature to form the critic input.
//!
//! Everything here is differentiable by hand: each forward pass returns a
//! cache, and the matching backward accumulates parameter gradients plus
//! gradients with respect to the node features so callers can continue
//! into the encoders.

use rand::Rng;
use rand_chacha::ChaCha12Rng;
use thiserror::Error;

use crate::nn::{axpy, dot, Mat};

#[derive(Debug, Error, PartialEq)]
pub enum GraphError {
    #[error("node index {index} out of range for {n_nodes} nodes")]
    IndexOutOfRange { index: usize, n_nodes: usize },
    #[error("neighbor list contains the node itself ({index})")]
    SelfLoop { index: usize },
    #[error("duplicate neighbor index {index}")]
    DuplicateNeighbor { index: usize },
}

/// Concatenates a normalized observation and a raw action pair into the
/// input every node encoder consumes.
pub fn node_input(obs: &[f64], action_raw: &[f64]) -> Vec<f64> {
    let mut v = Vec::with_capacity(obs.len() + action_raw.len());
    v.extend_from_slice(obs);
    v.extend_from_slice(action_raw);
    v
}

/// One agent's selection of the population: itself plus its neighbors, in
/// one-hot matrix form.
#[derive(Debug, Clone, PartialEq)]
pub struct Adjacency {
    n_nodes: usize,
    self_idx: usize,
    neighbors: Vec<usize>,
}

impl Adjacency {
    /// Builds the selection for `self_idx`. Neighbor order is normalized to
    /// ascending; self-loops, duplicates, and out-of-range indices are
    /// rejected.
    pub fn new(n_nodes: usize, self_idx: usize, neighbors: &[usize]) -> Result<Adjacency, GraphError> {
        if self_idx >= n_nodes {
            return Err(GraphError::IndexOutOfRange { index: self_idx, n_nodes });
        }
        let mut sorted = neighbors.to_vec();
        sorted.sort_unstable();
        for (pos, &j) in sorted.iter().enumerate() {
            if j >= n_nodes {
                return Err(GraphError::IndexOutOfRange { index: j, n_nodes });
            }
            if j == self_idx {
                return Err(GraphError::SelfLoop { index: j });
            }
            if pos > 0 && sorted[pos - 1] == j {
                return Err(GraphError::DuplicateNeighbor { index: j });
            }
        }
        Ok(Adjacency { n_nodes, self_idx, neighbors: sorted })
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn self_idx(&self) -> usize {
        self.self_idx
    }

    /// Neighbor indices, ascending.
    pub fn neighbors(&self) -> &[usize] {
        &self.neighbors
    }

    /// Rows of the one-hot matrix: self plus each neighbor.
    pub fn n_rows(&self) -> usize {
        1 + self.neighbors.len()
    }

    /// The explicit one-hot matrix: row 0 selects the node itself, the
    /// following rows select its neighbors in ascending index order.
    pub fn one_hot(&self) -> Mat {
        let mut a = Mat::zeros(self.n_rows(), self.n_nodes);
        a.set(0, self.self_idx, 1.0);
        for (r, &j) in self.neighbors.iter().enumerate() {
            a.set(r + 1, j, 1.0);
        }
        a
    }

    /// Multiplies the one-hot matrix against the stacked node features,
    /// yielding `(self feature, neighbor features...)`. Because the rows
    /// are one-hot this is exact row selection.
    pub fn gather(&self, features: &[Vec<f64>]) -> Vec<Vec<f64>> {
        assert_eq!(features.len(), self.n_nodes, "feature row count");
        let width = features[0].len();
        let a = self.one_hot();
        let mut out = Vec::with_capacity(self.n_rows());
        for r in 0..self.n_rows() {
            let mut row = vec![0.0; width];
            for (j, f) in features.iter().enumerate() {
                let w = a.at(r, j);
                if w != 0.0 {
                    axpy(&mut row, w, f);
                }
            }
            out.push(row);
        }
        out
    }

    /// Transpose of [`Adjacency::gather`]: routes per-row gradients back
    /// onto the stacked node-feature gradients.
    pub fn scatter_acc(&self, row_grads: &[Vec<f64>], feature_grads: &mut [Vec<f64>]) {
        assert_eq!(row_grads.len(), self.n_rows(), "gradient row count");
        assert_eq!(feature_grads.len(), self.n_nodes, "feature row count");
        axpy(&mut feature_grads[self.self_idx], 1.0, &row_grads[0]);
        for (r, &j) in self.neighbors.iter().enumerate() {
            axpy(&mut feature_grads[j], 1.0, &row_grads[r + 1]);
        }
    }
}

fn l2_norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

/// Cosine similarity with the zero-vector case pinned to 0 so fresh or
/// degenerate features cannot divide by zero.
fn cosine(a: &[f64], b: &[f64], norm_a: f64, norm_b: f64) -> f64 {
    if norm_a == 0.0 || norm_b == 0.0 {
        0.0
    } else {
        dot(a, b) / (norm_a * norm_b)
    }
}

/// One attention head: query/key/value projections from feature space into
/// head space.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionHead {
    wq: Mat,
    wk: Mat,
    wv: Mat,
}

/// Gradient accumulator shaped like an [`AttentionHead`].
#[derive(Debug, Clone)]
pub struct HeadGrads {
    pub wq: Mat,
    pub wk: Mat,
    pub wv: Mat,
}

/// Forward-pass state for one head over one neighborhood.
#[derive(Debug, Clone)]
pub struct HeadCache {
    q: Vec<f64>,
    q_norm: f64,
    keys: Vec<Vec<f64>>,
    key_norms: Vec<f64>,
    values: Vec<Vec<f64>>,
    scores: Vec<f64>,
    weights: Vec<f64>,
}

impl HeadCache {
    /// Attention weights over the neighbors, in input order.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Raw similarity scores before the softmax.
    pub fn scores(&self) -> &[f64] {
        &self.scores
    }
}

impl AttentionHead {
    /// Fresh head with `U(-1/sqrt(feat_dim), 1/sqrt(feat_dim))` entries,
    /// drawn in wq, wk, wv order.
    pub fn new(feat_dim: usize, head_dim: usize, rng: &mut ChaCha12Rng) -> AttentionHead {
        let bound = 1.0 / (feat_dim as f64).sqrt();
        let mut draw = |rows: usize, cols: usize| {
            Mat::from_fn(rows, cols, |_, _| rng.random_range(-bound..=bound))
        };
        AttentionHead {
            wq: draw(head_dim, feat_dim),
            wk: draw(head_dim, feat_dim),
            wv: draw(head_dim, feat_dim),
        }
    }

    /// Assembles a head from explicit projections; used by tests and
    /// checkpoint loading.
    pub fn from_parts(wq: Mat, wk: Mat, wv: Mat) -> AttentionHead {
        assert_eq!(wq.rows(), wk.rows());
        assert_eq!(wq.rows(), wv.rows());
        assert_eq!(wq.cols(), wk.cols());
        assert_eq!(wq.cols(), wv.cols());
        AttentionHead { wq, wk, wv }
    }

    pub fn head_dim(&self) -> usize {
        self.wq.rows()
    }

    pub fn feat_dim(&self) -> usize {
        self.wq.cols()
    }

    /// Attends over the neighborhood: query from the node's own feature,
    /// keys/values from the neighbors, cosine-similarity scores, softmax
    /// weights, weighted value sum. An empty neighborhood yields a zero
    /// context.
    pub fn forward(&self, e_self: &[f64], neighbors: &[Vec<f64>]) -> (Vec<f64>, HeadCache) {
        let q = self.wq.matvec(e_self);
        let q_norm = l2_norm(&q);
        let m = neighbors.len();
        let mut keys = Vec::with_capacity(m);
        let mut key_norms = Vec::with_capacity(m);
        let mut values = Vec::with_capacity(m);
        let mut scores = Vec::with_capacity(m);
        for nb in neighbors {
            let k = self.wk.matvec(nb);
            let kn = l2_norm(&k);
            scores.push(cosine(&q, &k, q_norm, kn));
            keys.push(k);
            key_norms.push(kn);
            values.push(self.wv.matvec(nb));
        }
        // Scores live in [-1, 1], so the plain softmax cannot overflow.
        let mut weights: Vec<f64> = scores.iter().map(|s| s.exp()).collect();
        let z: f64 = weights.iter().sum();
        for w in &mut weights {
            *w /= z;
        }
        let mut context = vec![0.0; self.head_dim()];
        for (w, v) in weights.iter().zip(&values) {
            axpy(&mut context, *w, v);
        }
        let cache = HeadCache { q, q_norm, keys, key_norms, values, scores, weights };
        (context, cache)
    }

    /// Forward without a cache.
    pub fn context(&self, e_self: &[f64], neighbors: &[Vec<f64>]) -> Vec<f64> {
        self.forward(e_self, neighbors).0
    }

    /// Accumulates gradients of a scalar loss given its gradient with
    /// respect to the context vector. Parameter gradients land in `grads`;
    /// feature gradients are added to `g_self` and `g_neighbors`. The
    /// zero-norm similarity convention propagates a zero gradient through
    /// the affected scores.
    pub fn backward_acc(
        &self,
        e_self: &[f64],
        neighbors: &[Vec<f64>],
        cache: &HeadCache,
        g_context: &[f64],
        grads: &mut HeadGrads,
        g_self: &mut [f64],
        g_neighbors: &mut [Vec<f64>],
    ) {
        let m = neighbors.len();
        if m == 0 {
            return;
        }
        // Value path: context = sum_j alpha_j V_j.
        let g_alpha: Vec<f64> = cache.values.iter().map(|v| dot(g_context, v)).collect();
        let mut gv = vec![0.0; self.head_dim()];
        for j in 0..m {
            let a = cache.weights[j];
            gv.copy_from_slice(g_context);
            for t in &mut gv {
                *t *= a;
            }
            grads.wv.add_outer(&gv, &neighbors[j], 1.0);
            self.wv.matvec_t_acc(&gv, &mut g_neighbors[j]);
        }
        // Softmax: g_score_j = alpha_j (g_alpha_j - sum_k alpha_k g_alpha_k).
        let inner: f64 = cache.weights.iter().zip(&g_alpha).map(|(a, g)| a * g).sum();
        let mut g_q = vec![0.0; self.head_dim()];
        let mut g_k = vec![0.0; self.head_dim()];
        for j in 0..m {
            let gs = cache.weights[j] * (g_alpha[j] - inner);
            if gs == 0.0 || cache.q_norm == 0.0 || cache.key_norms[j] == 0.0 {
                continue;
            }
            let s = cache.scores[j];
            let (qn, kn) = (cache.q_norm, cache.key_norms[j]);
            for t in 0..self.head_dim() {
                g_q[t] += gs * (cache.keys[j][t] / kn - s * cache.q[t] / qn) / qn;
                g_k[t] = gs * (cache.q[t] / qn - s * cache.keys[j][t] / kn) / kn;
            }
            grads.wk.add_outer(&g_k, &neighbors[j], 1.0);
            self.wk.matvec_t_acc(&g_k, &mut g_neighbors[j]);
        }
        grads.wq.add_outer(&g_q, e_self, 1.0);
        self.wq.matvec_t_acc(&g_q, g_self);
    }

    pub fn zero_grads(&self) -> HeadGrads {
        HeadGrads {
            wq: Mat::zeros(self.wq.rows(), self.wq.cols()),
            wk: Mat::zeros(self.wk.rows(), self.wk.cols()),
            wv: Mat::zeros(self.wv.rows(), self.wv.cols()),
        }
    }

    /// Flat parameter views in wq, wk, wv order.
    pub fn param_slices(&self) -> Vec<&[f64]> {
        vec![self.wq.data(), self.wk.data(), self.wv.data()]
    }

    pub fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        vec![self.wq.data_mut(), self.wk.data_mut(), self.wv.data_mut()]
    }

    pub fn param_count(&self) -> usize {
        3 * self.wq.data().len()
    }
}

impl HeadGrads {
    pub fn zero(&mut self) {
        self.wq.fill(0.0);
        self.wk.fill(0.0);
        self.wv.fill(0.0);
    }

    /// Flat views matching [`AttentionHead::param_slices`].
    pub fn slices(&self) -> Vec<&[f64]> {
        vec![self.wq.data(), self.wk.data(), self.wv.data()]
    }
}

/// One agent's full attention stack: several heads whose contexts are
/// concatenated after the node's own feature.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphAttention {
    heads: Vec<AttentionHead>,
}

/// Gradient accumulator shaped like a [`GraphAttention`].
#[derive(Debug, Clone)]
pub struct GraphAttentionGrads {
    pub heads: Vec<HeadGrads>,
}

impl GraphAttentionGrads {
    pub fn zero(&mut self) {
        for h in &mut self.heads {
            h.zero();
        }
    }

    pub fn slices(&self) -> Vec<&[f64]> {
        self.heads.iter().flat_map(|h| h.slices()).collect()
    }
}

/// Per-agent caches of one [`GraphAttention::forward`].
#[derive(Debug, Clone)]
pub struct AttnCache {
    head_caches: Vec<HeadCache>,
}

impl AttnCache {
    pub fn head_caches(&self) -> &[HeadCache] {
        &self.head_caches
    }
}

impl GraphAttention {
    pub fn new(n_heads: usize, feat_dim: usize, head_dim: usize, rng: &mut ChaCha12Rng) -> GraphAttention {
        assert!(n_heads >= 1, "at least one attention head");
        let heads = (0..n_heads).map(|_| AttentionHead::new(feat_dim, head_dim, rng)).collect();
        GraphAttention { heads }
    }

    pub fn from_heads(heads: Vec<AttentionHead>) -> GraphAttention {
        assert!(!heads.is_empty());
        GraphAttention { heads }
    }

    pub fn heads(&self) -> &[AttentionHead] {
        &self.heads
    }

    pub fn feat_dim(&self) -> usize {
        self.heads[0].feat_dim()
    }

    /// Length of the critic input: own feature plus every head's context.
    pub fn output_len(&self) -> usize {
        self.feat_dim() + self.heads.iter().map(|h| h.head_dim()).sum::<usize>()
    }

    /// Builds the critic input `(e_self ‖ head contexts...)`.
    pub fn forward(&self, e_self: &[f64], neighbors: &[Vec<f64>]) -> (Vec<f64>, AttnCache) {
        let mut h = Vec::with_capacity(self.output_len());
        h.extend_from_slice(e_self);
        let mut head_caches = Vec::with_capacity(self.heads.len());
        for head in &self.heads {
            let (ctx, cache) = head.forward(e_self, neighbors);
            h.extend_from_slice(&ctx);
            head_caches.push(cache);
        }
        (h, AttnCache { head_caches })
    }

    /// Forward without caches.
    pub fn output(&self, e_self: &[f64], neighbors: &[Vec<f64>]) -> Vec<f64> {
        let mut h = Vec::with_capacity(self.output_len());
        h.extend_from_slice(e_self);
        for head in &self.heads {
            h.extend_from_slice(&head.context(e_self, neighbors));
        }
        h
    }

    /// Backward of [`GraphAttention::forward`]: splits the critic-input
    /// gradient into its own-feature and per-head segments and accumulates
    /// through each head.
    pub fn backward_acc(
        &self,
        e_self: &[f64],
        neighbors: &[Vec<f64>],
        cache: &AttnCache,
        g_h: &[f64],
        grads: &mut GraphAttentionGrads,
        g_self: &mut [f64],
        g_neighbors: &mut [Vec<f64>],
    ) {
        assert_eq!(g_h.len(), self.output_len(), "critic-input gradient length");
        let d = self.feat_dim();
        axpy(g_self, 1.0, &g_h[..d]);
        let mut offset = d;
        for ((head, hcache), hgrads) in
            self.heads.iter().zip(&cache.head_caches).zip(&mut grads.heads)
        {
            let seg = &g_h[offset..offset + head.head_dim()];
            head.backward_acc(e_self, neighbors, hcache, seg, hgrads, g_self, g_neighbors);
            offset += head.head_dim();
        }
    }

    pub fn zero_grads(&self) -> GraphAttentionGrads {
        GraphAttentionGrads { heads: self.heads.iter().map(|h| h.zero_grads()).collect() }
    }

    /// Flat parameter views, head by head (wq, wk, wv each).
    pub fn param_slices(&self) -> Vec<&[f64]> {
        self.heads.iter().flat_map(|h| h.param_slices()).collect()
    }

    pub fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        self.heads.iter_mut().flat_map(|h| h.param_slices_mut()).collect()
    }

    pub fn param_count(&self) -> usize {
        self.heads.iter().map(|h| h.param_count()).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{check_grads, Mlp, OutputActivation, FD_STEP, GRAD_REL_TOL};
    use rand_chacha::rand_core::SeedableRng;

    fn rng(seed: u64) -> ChaCha12Rng {
        ChaCha12Rng::seed_from_u64(seed)
    }

    fn random_features(n: usize, width: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut r = rng(seed);
        (0..n).map(|_| (0..width).map(|_| r.random_range(-1.0..1.0)).collect()).collect()
    }

    #[test]
    fn adjacency_rows_are_one_hot_self_first() {
        let a = Adjacency::new(5, 2, &[3, 1]).unwrap();
        assert_eq!(a.neighbors(), &[1, 3]);
        let m = a.one_hot();
        assert_eq!(m.row(0), &[0.0, 0.0, 1.0, 0.0, 0.0]);
        assert_eq!(m.row(1), &[0.0, 1.0, 0.0, 0.0, 0.0]);
        assert_eq!(m.row(2), &[0.0, 0.0, 0.0, 1.0, 0.0]);
        for r in 0..m.rows() {
            assert_eq!(m.row(r).iter().sum::<f64>(), 1.0);
        }
    }

    #[test]
    fn adjacency_rejects_bad_neighbor_lists() {
        assert_eq!(
            Adjacency::new(4, 1, &[1, 2]),
            Err(GraphError::SelfLoop { index: 1 })
        );
        assert_eq!(
            Adjacency::new(4, 1, &[2, 2]),
            Err(GraphError::DuplicateNeighbor { index: 2 })
        );
        assert_eq!(
            Adjacency::new(4, 1, &[5]),
            Err(GraphError::IndexOutOfRange { index: 5, n_nodes: 4 })
        );
        assert_eq!(
            Adjacency::new(3, 7, &[]),
            Err(GraphError::IndexOutOfRange { index: 7, n_nodes: 3 })
        );
    }

    #[test]
    fn gather_reproduces_selected_feature_rows() {
        let feats = random_features(5, 6, 3);
        let a = Adjacency::new(5, 2, &[1, 3]).unwrap();
        let rows = a.gather(&feats);
        assert_eq!(rows.len(), 3);
        assert_eq!(rows[0], feats[2]);
        assert_eq!(rows[1], feats[1]);
        assert_eq!(rows[2], feats[3]);

        let lone = Adjacency::new(5, 4, &[]).unwrap();
        let rows = lone.gather(&feats);
        assert_eq!(rows, vec![feats[4].clone()]);
    }

    #[test]
    fn scatter_is_the_adjoint_of_gather() {
        let feats = random_features(4, 5, 11);
        let a = Adjacency::new(4, 0, &[2, 3]).unwrap();
        let rows = a.gather(&feats);
        let row_grads = random_features(rows.len(), 5, 12);
        let mut feat_grads = vec![vec![0.0; 5]; 4];
        a.scatter_acc(&row_grads, &mut feat_grads);
        // <gather(F), G> must equal <F, scatter(G)>.
        let lhs: f64 = rows
            .iter()
            .zip(&row_grads)
            .map(|(r, g)| dot(r, g))
            .sum();
        let rhs: f64 =
            feats.iter().zip(&feat_grads).map(|(f, g)| dot(f, g)).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn equal_neighbor_features_attend_uniformly() {
        let head = AttentionHead::new(6, 4, &mut rng(2));
        let e = vec![0.3, -0.2, 0.8, 0.1, -0.5, 0.4];
        let nb = vec![0.9, 0.2, -0.1, 0.4, 0.0, -0.7];
        let neighbors = vec![nb.clone(), nb.clone(), nb.clone()];
        let (ctx, cache) = head.forward(&e, &neighbors);
        for w in cache.weights() {
            assert!((w - 1.0 / 3.0).abs() < 1e-12);
        }
        let direct = head.wv.matvec(&nb);
        for (c, d) in ctx.iter().zip(&direct) {
            assert!((c - d).abs() < 1e-12);
        }
    }

    #[test]
    fn opposed_keys_softmax_to_known_weights() {
        // Identity projections make scores the plain cosine of the features:
        // a neighbor equal to the query scores 1, its negation scores -1.
        let eye = Mat::from_fn(4, 4, |r, c| if r == c { 1.0 } else { 0.0 });
        let head = AttentionHead::from_parts(eye.clone(), eye.clone(), eye);
        let v = vec![0.5, -1.0, 2.0, 0.25];
        let anti: Vec<f64> = v.iter().map(|x| -x).collect();
        let (_, cache) = head.forward(&v, &vec![v.clone(), anti]);
        assert!((cache.scores()[0] - 1.0).abs() < 1e-12);
        assert!((cache.scores()[1] + 1.0).abs() < 1e-12);
        assert!((cache.weights()[0] - 0.8807970779778823).abs() < 1e-9);
        assert!((cache.weights()[1] - 0.11920292202211755).abs() < 1e-9);
    }

    #[test]
    fn attention_weights_form_a_distribution() {
        let head = AttentionHead::new(6, 4, &mut rng(8));
        for seed in 0..10 {
            let feats = random_features(4, 6, 100 + seed);
            let (_, cache) = head.forward(&feats[0], &feats[1..].to_vec());
            let total: f64 = cache.weights().iter().sum();
            assert!((total - 1.0).abs() < 1e-9);
            for w in cache.weights() {
                assert!(*w > 0.0);
            }
        }
    }

    #[test]
    fn scaling_neighbors_preserves_weights_and_scales_context() {
        let head = AttentionHead::new(5, 3, &mut rng(4));
        let feats = random_features(3, 5, 40);
        let neighbors = feats[1..].to_vec();
        let (ctx, cache) = head.forward(&feats[0], &neighbors);
        let scaled: Vec<Vec<f64>> =
            neighbors.iter().map(|f| f.iter().map(|x| 2.5 * x).collect()).collect();
        let (ctx2, cache2) = head.forward(&feats[0], &scaled);
        for (a, b) in cache.weights().iter().zip(cache2.weights()) {
            assert!((a - b).abs() < 1e-12);
        }
        for (a, b) in ctx.iter().zip(&ctx2) {
            assert!((2.5 * a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn neighbor_permutation_leaves_the_context_unchanged() {
        let stack = GraphAttention::new(3, 6, 4, &mut rng(6));
        let feats = random_features(4, 6, 77);
        let neighbors = feats[1..].to_vec();
        let permuted = vec![neighbors[2].clone(), neighbors[0].clone(), neighbors[1].clone()];
        let a = stack.output(&feats[0], &neighbors);
        let b = stack.output(&feats[0], &permuted);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn empty_neighborhood_yields_self_plus_zeros() {
        let stack = GraphAttention::new(4, 6, 4, &mut rng(1));
        let e = vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6];
        let (h, _) = stack.forward(&e, &[]);
        assert_eq!(h.len(), 6 + 16);
        assert_eq!(&h[..6], e.as_slice());
        assert!(h[6..].iter().all(|v| *v == 0.0));
    }

    #[test]
    fn zero_features_take_the_pinned_similarity_branch() {
        let head = AttentionHead::new(5, 3, &mut rng(3));
        let zero = vec![0.0; 5];
        let feats = random_features(2, 5, 50);
        let (_, cache) = head.forward(&zero, &feats);
        // A zero query pins every score to 0, so the softmax is uniform.
        for (s, w) in cache.scores().iter().zip(cache.weights()) {
            assert_eq!(*s, 0.0);
            assert!((w - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn single_head_stack_matches_the_bare_head() {
        let head = AttentionHead::new(6, 4, &mut rng(9));
        let stack = GraphAttention::from_heads(vec![head.clone()]);
        let feats = random_features(3, 6, 60);
        let neighbors = feats[1..].to_vec();
        let h = stack.output(&feats[0], &neighbors);
        let ctx = head.context(&feats[0], &neighbors);
        assert_eq!(&h[..6], feats[0].as_slice());
        assert_eq!(&h[6..], ctx.as_slice());
    }

    /// Finite-difference oracle over one head: the probe `sum(w . context)`
    /// is differentiated with respect to the projections, the self feature,
    /// and every neighbor feature.
    #[test]
    fn head_gradients_match_finite_differences() {
        let feat_dim = 5;
        let head_dim = 3;
        let head = AttentionHead::new(feat_dim, head_dim, &mut rng(14));
        let feats = random_features(3, feat_dim, 15);
        let (e_self, neighbors) = (feats[0].clone(), feats[1..].to_vec());
        let probe = [0.9, -0.4, 1.2];

        let (_, cache) = head.forward(&e_self, &neighbors);
        let mut grads = head.zero_grads();
        let mut g_self = vec![0.0; feat_dim];
        let mut g_neighbors = vec![vec![0.0; feat_dim]; neighbors.len()];
        head.backward_acc(&e_self, &neighbors, &cache, &probe, &mut grads, &mut g_self, &mut g_neighbors);

        let mut analytic = Vec::new();
        for s in grads.slices() {
            analytic.extend_from_slice(s);
        }
        analytic.extend_from_slice(&g_self);
        for g in &g_neighbors {
            analytic.extend_from_slice(g);
        }

        let mut theta = Vec::new();
        for s in head.param_slices() {
            theta.extend_from_slice(s);
        }
        theta.extend_from_slice(&e_self);
        for f in &neighbors {
            theta.extend_from_slice(f);
        }

        let n_params = head.param_count();
        let mut f = |t: &[f64]| {
            let mut h = head.clone();
            let mut offset = 0;
            for s in h.param_slices_mut() {
                s.copy_from_slice(&t[offset..offset + s.len()]);
                offset += s.len();
            }
            let e: Vec<f64> = t[n_params..n_params + feat_dim].to_vec();
            let nbrs: Vec<Vec<f64>> = (0..2)
                .map(|j| {
                    let from = n_params + feat_dim * (j + 1);
                    t[from..from + feat_dim].to_vec()
                })
                .collect();
            let ctx = h.context(&e, &nbrs);
            ctx.iter().zip(probe).map(|(a, b)| a * b).sum()
        };
        let report = check_grads(&mut f, &theta, &analytic, FD_STEP, None);
        assert!(
            report.max_rel_err < GRAD_REL_TOL,
            "max rel err {} at coord {}",
            report.max_rel_err,
            report.worst_index
        );
    }

    /// Finite-difference oracle over the full chain: per-node encoders feed
    /// the feature matrix, the adjacency gathers it, the attention stack
    /// emits the critic input, and a probe reduces it to a scalar. The
    /// check covers the stack, the node's own encoder, and the neighbor
    /// encoders reached through keys and values.
    #[test]
    fn stacked_pipeline_gradients_match_finite_differences() {
        let n = 3;
        let in_dim = 4;
        let feat_dim = 5;
        let mut r = rng(20);
        let encoders: Vec<Mlp> =
            (0..n).map(|_| Mlp::new(&[in_dim, 6, feat_dim], OutputActivation::Identity, &mut r)).collect();
        let stack = GraphAttention::new(2, feat_dim, 3, &mut r);
        let inputs = random_features(n, in_dim, 21);
        let adj = Adjacency::new(n, 0, &[1, 2]).unwrap();
        let probe: Vec<f64> = (0..stack.output_len()).map(|i| 0.3 * i as f64 - 1.0).collect();

        // Analytic pass.
        let mut enc_caches = Vec::new();
        let mut feats = Vec::new();
        for (enc, x) in encoders.iter().zip(&inputs) {
            let (e, c) = enc.forward(x).unwrap();
            feats.push(e);
            enc_caches.push(c);
        }
        let rows = adj.gather(&feats);
        let (_, cache) = stack.forward(&rows[0], &rows[1..].to_vec());
        let mut stack_grads = stack.zero_grads();
        let mut g_rows = vec![vec![0.0; feat_dim]; rows.len()];
        {
            let (g_self, g_rest) = g_rows.split_at_mut(1);
            stack.backward_acc(
                &rows[0],
                &rows[1..].to_vec(),
                &cache,
                &probe,
                &mut stack_grads,
                &mut g_self[0],
                g_rest,
            );
        }
        let mut g_feats = vec![vec![0.0; feat_dim]; n];
        adj.scatter_acc(&g_rows, &mut g_feats);
        let mut analytic = Vec::new();
        for s in stack_grads.slices() {
            analytic.extend_from_slice(s);
        }
        for ((enc, ecache), gf) in encoders.iter().zip(&enc_caches).zip(&g_feats) {
            let mut egrads = enc.zero_grads();
            enc.backward_acc(ecache, gf, &mut egrads).unwrap();
            for s in egrads.slices() {
                analytic.extend_from_slice(s);
            }
        }

        let mut theta = Vec::new();
        for s in stack.param_slices() {
            theta.extend_from_slice(s);
        }
        for enc in &encoders {
            for s in enc.param_slices() {
                theta.extend_from_slice(s);
            }
        }

        let mut f = |t: &[f64]| {
            let mut offset = 0;
            let mut st = stack.clone();
            for s in st.param_slices_mut() {
                s.copy_from_slice(&t[offset..offset + s.len()]);
                offset += s.len();
            }
            let mut feats = Vec::new();
            for (enc, x) in encoders.iter().zip(&inputs) {
                let mut e = enc.clone();
                let mut slices: Vec<&[f64]> = Vec::new();
                for s in enc.param_slices() {
                    slices.push(&t[offset..offset + s.len()]);
                    offset += s.len();
                }
                e.load_param_slices(&slices).unwrap();
                feats.push(e.output(x).unwrap());
            }
            let rows = adj.gather(&feats);
            let h = st.output(&rows[0], &rows[1..].to_vec());
            h.iter().zip(&probe).map(|(a, b)| a * b).sum()
        };
        let report = check_grads(&mut f, &theta, &analytic, FD_STEP, None);
        assert!(
            report.max_rel_err < GRAD_REL_TOL,
            "max rel err {} at coord {}",
            report.max_rel_err,
            report.worst_index
        );
    }
}
