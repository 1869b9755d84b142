//! CART trees and the two forest flavours used by the cascade.
//!
//! `Random` forests bootstrap per tree and pick the Gini-best midpoint split
//! among a random feature subset; `CompletelyRandom` forests use every row
//! and split a random non-constant feature at a uniformly random threshold.
//! Trees are stored flat in pre-order with leaf distributions in a side
//! table, which keeps scanner-sized ensembles compact and walk loops tight.

use rand::Rng;
use rayon::prelude::*;

use crate::data::DatasetView;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng::{mix, stream_rng};

/// Gini impurity of a class count vector: `1 - sum((c/n)^2)`.
///
/// At least one count must be positive.
pub fn gini_impurity(counts: &[usize]) -> f64 {
    let total: usize = counts.iter().sum();
    assert!(total > 0, "gini_impurity needs at least one instance");
    let n = total as f64;
    1.0 - counts
        .iter()
        .map(|&c| {
            let p = c as f64 / n;
            p * p
        })
        .sum::<f64>()
}

/// Probability vector over classes; entries are non-negative and sum to 1.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassVector(Vec<f64>);

impl ClassVector {
    pub fn new(probs: Vec<f64>) -> Self {
        debug_assert!(probs.iter().all(|p| *p >= 0.0 && p.is_finite()));
        debug_assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        ClassVector(probs)
    }

    /// Highest class probability.
    pub fn confidence(&self) -> f64 {
        self.0.iter().cloned().fold(f64::MIN, f64::max)
    }

    /// Predicted class; ties resolve to the lowest class id.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (c, p) in self.0.iter().enumerate().skip(1) {
            if *p > self.0[best] {
                best = c;
            }
        }
        best
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

impl std::ops::Deref for ClassVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ForestKind {
    Random,
    CompletelyRandom,
}

/// Owned pre-order node, the shape trees serialize to.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TreeNode {
    Split { feature: usize, threshold: f64 },
    Leaf { distribution: Vec<f64> },
}

const LEAF: u32 = u32::MAX;

#[derive(Debug, Clone, Copy, PartialEq)]
struct RawNode {
    threshold: f64,
    feature: u32,
    left: u32,
    right: u32,
}

/// A single decision tree, nodes stored flat in pre-order.
#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    nodes: Vec<RawNode>,
    leaf_values: Vec<f64>,
    class_count: usize,
}

/// Borrowed view of one tree node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NodeView<'a> {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        distribution: &'a [f64],
    },
}

impl Tree {
    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn leaf_count(&self) -> usize {
        self.leaf_values.len() / self.class_count
    }

    /// Node by pre-order index; the root is node 0.
    pub fn node(&self, idx: usize) -> NodeView<'_> {
        let n = self.nodes[idx];
        if n.feature == LEAF {
            let at = n.left as usize * self.class_count;
            NodeView::Leaf {
                distribution: &self.leaf_values[at..at + self.class_count],
            }
        } else {
            NodeView::Split {
                feature: n.feature as usize,
                threshold: n.threshold,
                left: n.left as usize,
                right: n.right as usize,
            }
        }
    }

    /// Leaf distribution reached by `row`.
    pub fn leaf_for(&self, row: &[f64]) -> &[f64] {
        let mut idx = 0usize;
        loop {
            let n = self.nodes[idx];
            if n.feature == LEAF {
                let at = n.left as usize * self.class_count;
                return &self.leaf_values[at..at + self.class_count];
            }
            idx = if row[n.feature as usize] < n.threshold {
                n.left as usize
            } else {
                n.right as usize
            };
        }
    }

    pub fn predict_proba(&self, row: &[f64]) -> ClassVector {
        ClassVector::new(self.leaf_for(row).to_vec())
    }

    /// Nodes in pre-order, the storage order.
    pub fn to_preorder(&self) -> Vec<TreeNode> {
        (0..self.nodes.len())
            .map(|i| match self.node(i) {
                NodeView::Split {
                    feature, threshold, ..
                } => TreeNode::Split { feature, threshold },
                NodeView::Leaf { distribution } => TreeNode::Leaf {
                    distribution: distribution.to_vec(),
                },
            })
            .collect()
    }

    /// Rebuilds a tree from a pre-order node list (every split is followed by
    /// its complete left subtree, then its complete right subtree).
    pub fn from_preorder(
        items: &[TreeNode],
        class_count: usize,
        feature_count: usize,
    ) -> Result<Tree> {
        if items.is_empty() {
            return Err(Error::ModelFormat("tree has no nodes".into()));
        }
        let mut nodes: Vec<RawNode> = Vec::with_capacity(items.len());
        let mut leaf_values: Vec<f64> = Vec::new();
        let mut pending: Vec<(usize, bool)> = Vec::new();
        for item in items {
            let idx = nodes.len() as u32;
            if idx > 0 {
                match pending.last_mut() {
                    Some((parent, seen_left)) => {
                        if *seen_left {
                            nodes[*parent].right = idx;
                            pending.pop();
                        } else {
                            nodes[*parent].left = idx;
                            *seen_left = true;
                        }
                    }
                    None => {
                        return Err(Error::ModelFormat(
                            "tree node list continues past the root subtree".into(),
                        ))
                    }
                }
            }
            match item {
                TreeNode::Split { feature, threshold } => {
                    if *feature >= feature_count {
                        return Err(Error::ModelFormat(format!(
                            "split feature {feature} out of range (width {feature_count})"
                        )));
                    }
                    if !threshold.is_finite() {
                        return Err(Error::ModelFormat("non-finite split threshold".into()));
                    }
                    nodes.push(RawNode {
                        threshold: *threshold,
                        feature: *feature as u32,
                        left: 0,
                        right: 0,
                    });
                    pending.push((nodes.len() - 1, false));
                }
                TreeNode::Leaf { distribution } => {
                    if distribution.len() != class_count {
                        return Err(Error::ModelFormat(format!(
                            "leaf has {} probabilities, expected {class_count}",
                            distribution.len()
                        )));
                    }
                    let sum: f64 = distribution.iter().sum();
                    if distribution.iter().any(|p| !p.is_finite() || *p < 0.0)
                        || (sum - 1.0).abs() > 1e-6
                    {
                        return Err(Error::ModelFormat(
                            "leaf distribution is not a probability vector".into(),
                        ));
                    }
                    let leaf_idx = (leaf_values.len() / class_count) as u32;
                    leaf_values.extend_from_slice(distribution);
                    nodes.push(RawNode {
                        threshold: 0.0,
                        feature: LEAF,
                        left: leaf_idx,
                        right: 0,
                    });
                }
            }
        }
        if !pending.is_empty() {
            return Err(Error::ModelFormat("tree node list ends mid-split".into()));
        }
        Ok(Tree {
            nodes,
            leaf_values,
            class_count,
        })
    }
}

/// An ensemble of trees of one kind.
#[derive(Debug, Clone, PartialEq)]
pub struct Forest {
    pub kind: ForestKind,
    pub trees: Vec<Tree>,
    pub class_count: usize,
    pub feature_count: usize,
}

impl Forest {
    /// Mean of the trees' leaf distributions for one row.
    pub fn predict_proba(&self, row: &[f64]) -> ClassVector {
        let mut acc = vec![0.0; self.class_count];
        self.accumulate_proba(row, &mut acc);
        let k = self.trees.len() as f64;
        for a in &mut acc {
            *a /= k;
        }
        ClassVector::new(acc)
    }

    /// Adds every tree's leaf distribution for `row` into `acc`,
    /// unnormalized. Callers divide by the tree count themselves; summing
    /// first and dividing once keeps a unanimous vote at exactly 1.0, which
    /// scaling each term by a rounded reciprocal does not.
    pub fn accumulate_proba(&self, row: &[f64], acc: &mut [f64]) {
        assert_eq!(row.len(), self.feature_count, "row width mismatch");
        for tree in &self.trees {
            for (a, p) in acc.iter_mut().zip(tree.leaf_for(row)) {
                *a += p;
            }
        }
    }

    /// Class probabilities for every row of `features`.
    pub fn predict_matrix(&self, features: &Matrix) -> Matrix {
        let n = features.rows();
        let mut out = Matrix::zeros(n, self.class_count);
        let rows: Vec<&[f64]> = features.iter_rows().collect();
        let k = self.trees.len() as f64;
        out.as_mut_slice()
            .par_chunks_mut(self.class_count)
            .zip(rows)
            .for_each(|(acc, row)| {
                self.accumulate_proba(row, acc);
                for a in acc.iter_mut() {
                    *a /= k;
                }
            });
        out
    }
}

/// Training parameters for one forest.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ForestParams {
    pub kind: ForestKind,
    pub tree_count: usize,
    /// Candidate features per split for `Random`; `None` means `ceil(sqrt(d))`.
    pub feature_subsample: Option<usize>,
    /// `None` means unlimited depth.
    pub max_depth: Option<usize>,
}

/// Trains one tree on the given rows (no bootstrap).
pub fn train_tree(
    data: DatasetView,
    rows: &[usize],
    kind: ForestKind,
    feature_subsample: Option<usize>,
    max_depth: Option<usize>,
    seed: u64,
) -> Tree {
    let design = Design::build(data.features);
    let rows32: Vec<u32> = rows.iter().map(|&r| r as u32).collect();
    build_tree(
        &design,
        data,
        rows32,
        kind,
        feature_subsample,
        max_depth,
        seed,
    )
}

/// Trains a forest on the given rows.
///
/// Tree `t` derives its seed from `seed` and `t`, so trees can be trained in
/// parallel without changing the result.
pub fn train_forest(data: DatasetView, rows: &[usize], params: ForestParams, seed: u64) -> Forest {
    let design = Design::build(data.features);
    train_forest_with_design(&design, data, rows, params, seed)
}

pub(crate) fn train_forest_with_design(
    design: &Design,
    data: DatasetView,
    rows: &[usize],
    params: ForestParams,
    seed: u64,
) -> Forest {
    assert!(!rows.is_empty(), "cannot train a forest on zero rows");
    assert!(params.tree_count > 0, "tree_count must be positive");
    let trees: Vec<Tree> = (0..params.tree_count)
        .into_par_iter()
        .map(|t| {
            let tree_seed = mix(seed, t as u64);
            let tree_rows: Vec<u32> = match params.kind {
                ForestKind::Random => {
                    let mut rng = stream_rng(tree_seed, 4);
                    (0..rows.len())
                        .map(|_| rows[rng.random_range(0..rows.len())] as u32)
                        .collect()
                }
                ForestKind::CompletelyRandom => rows.iter().map(|&r| r as u32).collect(),
            };
            build_tree(
                design,
                data,
                tree_rows,
                params.kind,
                params.feature_subsample,
                params.max_depth,
                tree_seed,
            )
        })
        .collect();
    Forest {
        kind: params.kind,
        trees,
        class_count: data.class_count,
        feature_count: data.feature_count(),
    }
}

/// Per-feature rank index over a feature matrix.
///
/// `rank(f, row)` is the position of `features[row, f]` in the sorted list of
/// that feature's distinct values, so split search works on small integers
/// and thresholds come from the actual observed values.
pub(crate) struct Design {
    n: usize,
    ranks: Vec<u32>,
    uniq: Vec<Vec<f64>>,
}

impl Design {
    pub(crate) fn build(features: &Matrix) -> Design {
        let n = features.rows();
        let d = features.cols();
        let mut ranks = vec![0u32; n * d];
        let mut uniq = Vec::with_capacity(d);
        let mut order: Vec<u32> = (0..n as u32).collect();
        let mut col = vec![0.0f64; n];
        for f in 0..d {
            for i in 0..n {
                col[i] = features.get(i, f);
            }
            order.sort_unstable_by(|&a, &b| col[a as usize].total_cmp(&col[b as usize]));
            let mut values = Vec::new();
            let slot = &mut ranks[f * n..(f + 1) * n];
            for &i in &order {
                let v = col[i as usize];
                if values.last() != Some(&v) {
                    values.push(v);
                }
                slot[i as usize] = (values.len() - 1) as u32;
            }
            uniq.push(values);
        }
        Design { n, ranks, uniq }
    }

    #[inline]
    fn rank(&self, feature: u32, row: u32) -> u32 {
        self.ranks[feature as usize * self.n + row as usize]
    }

    fn distinct(&self, feature: u32) -> usize {
        self.uniq[feature as usize].len()
    }

    fn value(&self, feature: u32, rank: u32) -> f64 {
        self.uniq[feature as usize][rank as usize]
    }
}

struct BestSplit {
    score: f64,
    feature: u32,
    threshold: f64,
    /// Rows with `rank < cut` go left.
    cut: u32,
}

impl BestSplit {
    fn consider(best: &mut Option<BestSplit>, cand: BestSplit) {
        let replace = match best {
            None => true,
            Some(b) => {
                cand.score < b.score
                    || (cand.score == b.score
                        && (cand.feature, cand.threshold) < (b.feature, b.threshold))
            }
        };
        if replace {
            *best = Some(cand);
        }
    }
}

enum FeatureEval {
    Constant,
    Split(BestSplit),
}

/// Features with more distinct values than this use the sort-based scan.
const HIST_MAX_DISTINCT: usize = 256;

struct Task {
    parent: u32,
    is_left: bool,
    lo: u32,
    hi: u32,
    depth: u32,
    n_constant: u32,
    seed: u64,
}

struct TreeBuilder<'a> {
    design: &'a Design,
    labels: &'a [usize],
    class_count: usize,
    kind: ForestKind,
    subsample: usize,
    max_depth: u32,
    rows: Vec<u32>,
    feature_order: Vec<u32>,
    nodes: Vec<RawNode>,
    leaf_values: Vec<f64>,
    pairs: Vec<(u32, u32)>,
    hist: Vec<u32>,
    left_counts: Vec<u32>,
}

fn build_tree(
    design: &Design,
    data: DatasetView,
    rows: Vec<u32>,
    kind: ForestKind,
    feature_subsample: Option<usize>,
    max_depth: Option<usize>,
    seed: u64,
) -> Tree {
    let d = data.feature_count();
    let c = data.class_count;
    let subsample = feature_subsample
        .unwrap_or_else(|| (d as f64).sqrt().ceil() as usize)
        .clamp(1, d);
    let hist_width = design
        .uniq
        .iter()
        .map(Vec::len)
        .filter(|&u| u <= HIST_MAX_DISTINCT)
        .max()
        .unwrap_or(0);
    assert!(!rows.is_empty(), "cannot train a tree on zero rows");
    let n_rows = rows.len() as u32;
    let mut builder = TreeBuilder {
        design,
        labels: data.labels,
        class_count: c,
        kind,
        subsample,
        max_depth: max_depth.map_or(u32::MAX, |m| m as u32),
        rows,
        feature_order: (0..d as u32).collect(),
        nodes: Vec::new(),
        leaf_values: Vec::new(),
        pairs: Vec::new(),
        hist: vec![0u32; hist_width * c],
        left_counts: vec![0u32; c],
    };
    let mut stack = vec![Task {
        parent: u32::MAX,
        is_left: false,
        lo: 0,
        hi: n_rows,
        depth: 0,
        n_constant: 0,
        seed: mix(seed, 5),
    }];
    while let Some(task) = stack.pop() {
        builder.process(task, &mut stack);
    }
    Tree {
        nodes: builder.nodes,
        leaf_values: builder.leaf_values,
        class_count: c,
    }
}

impl<'a> TreeBuilder<'a> {
    fn process(&mut self, task: Task, stack: &mut Vec<Task>) {
        let (lo, hi) = (task.lo as usize, task.hi as usize);
        let m = hi - lo;
        let mut counts = vec![0u32; self.class_count];
        for &r in &self.rows[lo..hi] {
            counts[self.labels[r as usize]] += 1;
        }
        let pure = counts.iter().filter(|&&k| k > 0).count() <= 1;

        let split = if m < 2 || pure || task.depth >= self.max_depth {
            None
        } else {
            let mut rng = stream_rng(task.seed, 3);
            let mut n_const = task.n_constant as usize;
            let d = self.feature_order.len();
            let mut visited = n_const;
            let mut best: Option<BestSplit> = None;
            let mut evaluated = 0usize;
            let wanted = match self.kind {
                ForestKind::Random => self.subsample,
                ForestKind::CompletelyRandom => 1,
            };
            while evaluated < wanted && visited < d {
                let pick = rng.random_range(visited..d);
                self.feature_order.swap(visited, pick);
                let f = self.feature_order[visited];
                visited += 1;
                let eval = match self.kind {
                    ForestKind::Random => self.eval_gini(f, lo, hi, &counts),
                    ForestKind::CompletelyRandom => self.eval_random(f, lo, hi, &mut rng),
                };
                match eval {
                    FeatureEval::Constant => {
                        self.feature_order.swap(visited - 1, n_const);
                        n_const += 1;
                    }
                    FeatureEval::Split(cand) => {
                        evaluated += 1;
                        BestSplit::consider(&mut best, cand);
                    }
                }
            }
            best.map(|b| (b, n_const as u32))
        };

        let idx = self.nodes.len() as u32;
        if task.parent != u32::MAX {
            let parent = &mut self.nodes[task.parent as usize];
            if task.is_left {
                parent.left = idx;
            } else {
                parent.right = idx;
            }
        }

        match split {
            None => {
                let leaf_idx = (self.leaf_values.len() / self.class_count) as u32;
                self.leaf_values
                    .extend(counts.iter().map(|&k| k as f64 / m as f64));
                self.nodes.push(RawNode {
                    threshold: 0.0,
                    feature: LEAF,
                    left: leaf_idx,
                    right: 0,
                });
            }
            Some((b, n_constant)) => {
                let mid = self.partition(lo, hi, b.feature, b.cut);
                debug_assert!(mid > lo && mid < hi, "split produced an empty child");
                self.nodes.push(RawNode {
                    threshold: b.threshold,
                    feature: b.feature,
                    left: 0,
                    right: 0,
                });
                // LIFO: right first so the left subtree is built (and stored)
                // before the right one, keeping storage pre-order.
                stack.push(Task {
                    parent: idx,
                    is_left: false,
                    lo: mid as u32,
                    hi: hi as u32,
                    depth: task.depth + 1,
                    n_constant,
                    seed: mix(task.seed, 2),
                });
                stack.push(Task {
                    parent: idx,
                    is_left: true,
                    lo: lo as u32,
                    hi: mid as u32,
                    depth: task.depth + 1,
                    n_constant,
                    seed: mix(task.seed, 1),
                });
            }
        }
    }

    /// Two-pointer partition of `rows[lo..hi]`: ranks below `cut` go left.
    fn partition(&mut self, lo: usize, hi: usize, feature: u32, cut: u32) -> usize {
        let mut i = lo;
        let mut j = hi;
        while i < j {
            if self.design.rank(feature, self.rows[i]) < cut {
                i += 1;
            } else {
                j -= 1;
                self.rows.swap(i, j);
            }
        }
        i
    }

    /// Best Gini midpoint split of `feature` over the node rows.
    fn eval_gini(&mut self, feature: u32, lo: usize, hi: usize, counts: &[u32]) -> FeatureEval {
        if self.design.distinct(feature) <= HIST_MAX_DISTINCT {
            self.eval_gini_hist(feature, lo, hi, counts)
        } else {
            self.eval_gini_sorted(feature, lo, hi, counts)
        }
    }

    fn eval_gini_hist(
        &mut self,
        feature: u32,
        lo: usize,
        hi: usize,
        counts: &[u32],
    ) -> FeatureEval {
        let c = self.class_count;
        let mut min_rank = u32::MAX;
        let mut max_rank = 0u32;
        for &r in &self.rows[lo..hi] {
            let rank = self.design.rank(feature, r);
            min_rank = min_rank.min(rank);
            max_rank = max_rank.max(rank);
        }
        if min_rank == max_rank {
            return FeatureEval::Constant;
        }
        let span = (min_rank as usize)..(max_rank as usize + 1);
        self.hist[span.start * c..span.end * c].fill(0);
        for i in lo..hi {
            let r = self.rows[i];
            let rank = self.design.rank(feature, r) as usize;
            self.hist[rank * c + self.labels[r as usize]] += 1;
        }

        let mut scan = GiniScan::start(counts, hi - lo);
        let mut best: Option<BestSplit> = None;
        let mut prev_rank: Option<u32> = None;
        for rank in span {
            let bucket = &self.hist[rank * c..rank * c + c];
            let total: u32 = bucket.iter().sum();
            if total == 0 {
                continue;
            }
            if let Some(p) = prev_rank {
                let threshold = midpoint(
                    self.design.value(feature, p),
                    self.design.value(feature, rank as u32),
                );
                BestSplit::consider(
                    &mut best,
                    BestSplit {
                        score: scan.score(),
                        feature,
                        threshold,
                        cut: rank as u32,
                    },
                );
            }
            for (class, &k) in bucket.iter().enumerate() {
                if k > 0 {
                    scan.move_left(class, k, &mut self.left_counts);
                }
            }
            prev_rank = Some(rank as u32);
        }
        self.left_counts.fill(0);
        FeatureEval::Split(best.expect("non-constant feature has a boundary"))
    }

    fn eval_gini_sorted(
        &mut self,
        feature: u32,
        lo: usize,
        hi: usize,
        counts: &[u32],
    ) -> FeatureEval {
        self.pairs.clear();
        for &r in &self.rows[lo..hi] {
            self.pairs
                .push((self.design.rank(feature, r), self.labels[r as usize] as u32));
        }
        self.pairs.sort_unstable();
        if self.pairs[0].0 == self.pairs[self.pairs.len() - 1].0 {
            return FeatureEval::Constant;
        }

        let mut scan = GiniScan::start(counts, hi - lo);
        let mut best: Option<BestSplit> = None;
        let mut prev_rank = self.pairs[0].0;
        for i in 0..self.pairs.len() {
            let (rank, label) = self.pairs[i];
            if rank != prev_rank {
                let threshold = midpoint(
                    self.design.value(feature, prev_rank),
                    self.design.value(feature, rank),
                );
                BestSplit::consider(
                    &mut best,
                    BestSplit {
                        score: scan.score(),
                        feature,
                        threshold,
                        cut: rank,
                    },
                );
                prev_rank = rank;
            }
            scan.move_left(label as usize, 1, &mut self.left_counts);
        }
        self.left_counts.fill(0);
        FeatureEval::Split(best.expect("non-constant feature has a boundary"))
    }

    /// Uniformly random threshold between the node's min and max of `feature`.
    fn eval_random(
        &mut self,
        feature: u32,
        lo: usize,
        hi: usize,
        rng: &mut impl Rng,
    ) -> FeatureEval {
        let mut min_rank = u32::MAX;
        let mut second_rank = u32::MAX;
        let mut max_rank = 0u32;
        for &r in &self.rows[lo..hi] {
            let rank = self.design.rank(feature, r);
            if rank < min_rank {
                second_rank = min_rank;
                min_rank = rank;
            } else if rank > min_rank && rank < second_rank {
                second_rank = rank;
            }
            max_rank = max_rank.max(rank);
        }
        if min_rank == max_rank {
            return FeatureEval::Constant;
        }
        let min_v = self.design.value(feature, min_rank);
        let max_v = self.design.value(feature, max_rank);
        // u in (0, 1], so the threshold stays strictly above min_v and the
        // left child keeps at least the minimum-valued rows. The fallbacks
        // below only fire on floating-point edge cases and use values present
        // in this node's rows.
        let u = 1.0 - rng.random::<f64>();
        let mut threshold = min_v + (max_v - min_v) * u;
        let uniq = &self.design.uniq[feature as usize];
        let mut cut = uniq.partition_point(|&v| v < threshold) as u32;
        if cut <= min_rank {
            cut = second_rank;
            threshold = self.design.value(feature, cut);
        } else if cut > max_rank {
            cut = max_rank;
            threshold = max_v;
        }
        FeatureEval::Split(BestSplit {
            score: 0.0,
            feature,
            threshold,
            cut,
        })
    }
}

/// Midpoint that is guaranteed to separate `a` from `b` under `value < t`.
fn midpoint(a: f64, b: f64) -> f64 {
    let t = 0.5 * (a + b);
    if t > a {
        t
    } else {
        b
    }
}

/// Incremental weighted-Gini accumulator over a left/right bipartition.
struct GiniScan {
    n_left: f64,
    n_right: f64,
    sumsq_left: f64,
    sumsq_right: f64,
    right_counts: Vec<u32>,
}

impl GiniScan {
    fn start(counts: &[u32], m: usize) -> GiniScan {
        GiniScan {
            n_left: 0.0,
            n_right: m as f64,
            sumsq_left: 0.0,
            sumsq_right: counts.iter().map(|&k| (k as f64) * (k as f64)).sum(),
            right_counts: counts.to_vec(),
        }
    }

    fn move_left(&mut self, class: usize, k: u32, left_counts: &mut [u32]) {
        let k = k as f64;
        let cl = left_counts[class] as f64;
        let cr = self.right_counts[class] as f64;
        self.sumsq_left += k * (2.0 * cl + k);
        self.sumsq_right += k * (k - 2.0 * cr);
        left_counts[class] += k as u32;
        self.right_counts[class] -= k as u32;
        self.n_left += k;
        self.n_right -= k;
    }

    /// `n_l * gini(left) + n_r * gini(right)` for the current boundary.
    fn score(&self) -> f64 {
        (self.n_left - self.sumsq_left / self.n_left)
            + (self.n_right - self.sumsq_right / self.n_right)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::make_synthetic;

    #[test]
    fn gini_impurity_reference_values() {
        assert_eq!(gini_impurity(&[50, 50]), 0.5);
        assert_eq!(gini_impurity(&[10, 0]), 0.0);
        assert_eq!(gini_impurity(&[25, 25, 25, 25]), 0.75);
    }

    #[test]
    #[should_panic(expected = "at least one instance")]
    fn gini_impurity_rejects_empty_nodes() {
        gini_impurity(&[0, 0]);
    }

    #[test]
    fn single_row_trains_to_a_one_hot_leaf() {
        let ds = make_synthetic(4, 3, 2, 1.0, 9);
        let tree = train_tree(ds.view(), &[1], ForestKind::Random, None, None, 3);
        assert_eq!(tree.node_count(), 1);
        let p = tree.predict_proba(ds.features.row(0));
        assert_eq!(&p[..], &[0.0, 1.0]);
    }

    #[test]
    fn forest_has_requested_tree_count_and_is_deterministic() {
        let ds = make_synthetic(40, 4, 3, 3.0, 5);
        let rows: Vec<usize> = (0..40).collect();
        let params = ForestParams {
            kind: ForestKind::Random,
            tree_count: 7,
            feature_subsample: None,
            max_depth: None,
        };
        let a = train_forest(ds.view(), &rows, params, 11);
        let b = train_forest(ds.view(), &rows, params, 11);
        assert_eq!(a.trees.len(), 7);
        assert_eq!(a, b);
        let c = train_forest(ds.view(), &rows, params, 12);
        assert_ne!(a, c);
    }

    #[test]
    fn separable_blobs_reach_full_training_accuracy() {
        let ds = make_synthetic(60, 3, 3, 12.0, 21);
        let rows: Vec<usize> = (0..60).collect();
        for kind in [ForestKind::Random, ForestKind::CompletelyRandom] {
            let forest = train_forest(
                ds.view(),
                &rows,
                ForestParams {
                    kind,
                    tree_count: 10,
                    feature_subsample: None,
                    max_depth: None,
                },
                2,
            );
            let hits = (0..60)
                .filter(|&i| forest.predict_proba(ds.features.row(i)).argmax() == ds.labels[i])
                .count();
            assert_eq!(hits, 60, "{kind:?} must memorize separable data");
        }
    }

    #[test]
    fn preorder_round_trip_preserves_predictions() {
        let ds = make_synthetic(30, 4, 3, 2.0, 8);
        let rows: Vec<usize> = (0..30).collect();
        let tree = train_tree(ds.view(), &rows, ForestKind::Random, None, None, 17);
        let rebuilt = Tree::from_preorder(&tree.to_preorder(), 3, 4).unwrap();
        assert_eq!(tree, rebuilt);
    }

    #[test]
    fn preorder_rejects_malformed_lists() {
        let leaf = TreeNode::Leaf {
            distribution: vec![0.5, 0.5],
        };
        let split = TreeNode::Split {
            feature: 0,
            threshold: 1.0,
        };
        assert!(Tree::from_preorder(&[], 2, 3).is_err());
        assert!(Tree::from_preorder(&[split.clone(), leaf.clone()], 2, 3).is_err());
        assert!(Tree::from_preorder(&[leaf.clone(), leaf.clone()], 2, 3).is_err());
        assert!(Tree::from_preorder(
            &[TreeNode::Split {
                feature: 9,
                threshold: 1.0
            }],
            2,
            3
        )
        .is_err());
        assert!(Tree::from_preorder(
            &[TreeNode::Leaf {
                distribution: vec![0.9, 0.3]
            }],
            2,
            3
        )
        .is_err());
    }

    #[test]
    fn class_vector_argmax_breaks_ties_low() {
        let v = ClassVector::new(vec![0.4, 0.4, 0.2]);
        assert_eq!(v.argmax(), 0);
        assert_eq!(v.confidence(), 0.4);
    }

    #[test]
    fn depth_cap_limits_tree_height() {
        let ds = make_synthetic(50, 2, 2, 0.5, 3);
        let rows: Vec<usize> = (0..50).collect();
        let stump = train_tree(ds.view(), &rows, ForestKind::Random, None, Some(1), 1);
        assert!(stump.node_count() <= 3);
    }
}
