//! Binary regression trees and grow-from-root fitting.
//!
//! A tree is grown recursively: at each node the candidate cut-points of a
//! sampled variable subset are scored with the integrated-likelihood
//! criterion, one entry (or the no-split option) is drawn by Bayes rule, and
//! on a split the pre-sorted index arrays are sifted into the children. The
//! same node machinery runs in an "evaluate" mode that accumulates the log
//! probability of regrowing a given tree, which keeps the proposal density
//! exactly aligned with the sampler.

use crate::criterion::{normal_logpdf, CriterionParams, CutCandidateTable, CutChoice};
use crate::data::{sift_column, Dataset, NodeCols, PresortedIndex, RowId, SuffStats};
use crate::error::{Result, XbartError};
use rand::Rng;
use rand_distr::StandardNormal;

/// Hard recursion bound; growth normally stops stochastically or at size-1
/// nodes long before this.
pub const DEFAULT_MAX_DEPTH: u32 = 40;

/// One node of a fitted tree. Routing follows "x[var] <= cut_value goes
/// left"; children are indices into the owning tree's node list.
#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Internal {
        var: usize,
        cut_value: f64,
        left: usize,
        right: usize,
        depth: u32,
    },
    Leaf {
        mu: f64,
        depth: u32,
    },
}

/// Binary decision tree with scalar leaf means, stored in preorder
/// (root first, each node before its subtrees, left subtree before right).
#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    nodes: Vec<Node>,
    split_counts: Vec<u32>,
}

/// Preorder serialization form of a node; `Split` children are implicit
/// (left subtree first, then right).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PreorderNode {
    Split { var: usize, cut_value: f64 },
    Leaf { mu: f64 },
}

impl Tree {
    /// Single-leaf tree (used for initial sampler state and tests).
    pub fn leaf(mu: f64, num_vars: usize) -> Self {
        Tree {
            nodes: vec![Node::Leaf { mu, depth: 0 }],
            split_counts: vec![0; num_vars],
        }
    }

    #[inline]
    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    /// Splits per variable made by this tree; sums to the internal node count.
    #[inline]
    pub fn split_counts(&self) -> &[u32] {
        &self.split_counts
    }

    pub fn num_internal(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, Node::Internal { .. }))
            .count()
    }

    pub fn num_leaves(&self) -> usize {
        self.nodes.len() - self.num_internal()
    }

    pub fn leaf_depths(&self) -> Vec<u32> {
        self.nodes
            .iter()
            .filter_map(|n| match n {
                Node::Leaf { depth, .. } => Some(*depth),
                _ => None,
            })
            .collect()
    }

    /// Routes one row of a column-major matrix to its leaf mean.
    pub fn predict_row(&self, x: &crate::data::Matrix, row: usize) -> f64 {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                Node::Leaf { mu, .. } => return *mu,
                Node::Internal {
                    var,
                    cut_value,
                    left,
                    right,
                    ..
                } => {
                    at = if x.get(row, *var) <= *cut_value {
                        *left
                    } else {
                        *right
                    };
                }
            }
        }
    }

    pub fn to_preorder(&self) -> Vec<PreorderNode> {
        fn walk(tree: &Tree, at: usize, out: &mut Vec<PreorderNode>) {
            match &tree.nodes[at] {
                Node::Leaf { mu, .. } => out.push(PreorderNode::Leaf { mu: *mu }),
                Node::Internal {
                    var,
                    cut_value,
                    left,
                    right,
                    ..
                } => {
                    out.push(PreorderNode::Split {
                        var: *var,
                        cut_value: *cut_value,
                    });
                    walk(tree, *left, out);
                    walk(tree, *right, out);
                }
            }
        }
        let mut out = Vec::with_capacity(self.nodes.len());
        walk(self, 0, &mut out);
        out
    }

    /// Rebuilds a tree from its preorder form, recomputing depths and split
    /// counts. Rejects truncated or overlong sequences.
    pub fn from_preorder(entries: &[PreorderNode], num_vars: usize) -> Result<Self> {
        fn build(
            entries: &[PreorderNode],
            pos: &mut usize,
            depth: u32,
            tree: &mut Tree,
            num_vars: usize,
        ) -> Result<usize> {
            let entry = *entries.get(*pos).ok_or_else(|| {
                XbartError::InvalidInput("preorder tree sequence ended early".into())
            })?;
            *pos += 1;
            match entry {
                PreorderNode::Leaf { mu } => {
                    if !mu.is_finite() {
                        return Err(XbartError::InvalidInput("non-finite leaf mean".into()));
                    }
                    tree.nodes.push(Node::Leaf { mu, depth });
                    Ok(tree.nodes.len() - 1)
                }
                PreorderNode::Split { var, cut_value } => {
                    if var >= num_vars {
                        return Err(XbartError::InvalidInput(format!(
                            "split variable {var} out of range (V = {num_vars})"
                        )));
                    }
                    if !cut_value.is_finite() {
                        return Err(XbartError::InvalidInput("non-finite cut value".into()));
                    }
                    tree.split_counts[var] += 1;
                    let id = tree.nodes.len();
                    tree.nodes.push(Node::Internal {
                        var,
                        cut_value,
                        left: usize::MAX,
                        right: usize::MAX,
                        depth,
                    });
                    let left = build(entries, pos, depth + 1, tree, num_vars)?;
                    let right = build(entries, pos, depth + 1, tree, num_vars)?;
                    if let Node::Internal {
                        left: l, right: r, ..
                    } = &mut tree.nodes[id]
                    {
                        *l = left;
                        *r = right;
                    }
                    Ok(id)
                }
            }
        }

        let mut tree = Tree {
            nodes: Vec::with_capacity(entries.len()),
            split_counts: vec![0; num_vars],
        };
        let mut pos = 0;
        build(entries, &mut pos, 0, &mut tree, num_vars)?;
        if pos != entries.len() {
            return Err(XbartError::InvalidInput(format!(
                "preorder tree sequence has {} trailing entries",
                entries.len() - pos
            )));
        }
        Ok(tree)
    }
}

/// Routes a single input row ("x[var] <= cut goes left") to its leaf mean.
pub fn predict_tree(tree: &Tree, x_row: &[f64]) -> f64 {
    let mut at = 0;
    loop {
        match &tree.nodes[at] {
            Node::Leaf { mu, .. } => return *mu,
            Node::Internal {
                var,
                cut_value,
                left,
                right,
                ..
            } => {
                at = if x_row[*var] <= *cut_value {
                    *left
                } else {
                    *right
                };
            }
        }
    }
}

/// Stride-subsampled candidate ranks for a node of `node_size` rows.
///
/// With `j = floor((n_b - 2) / C) >= 1` the ranks are `j, 2j, ...` (at most
/// `C`, each `<= n_b - 1` so both children stay nonempty). Once `j = 0`
/// every interior rank is a candidate. A single-row node has none.
pub fn select_cutpoint_ranks(node_size: usize, num_cutpoints: usize) -> Vec<usize> {
    let mut out = Vec::new();
    select_cutpoint_ranks_into(node_size, num_cutpoints, &mut out);
    out
}

pub(crate) fn select_cutpoint_ranks_into(node_size: usize, num_cutpoints: usize, out: &mut Vec<usize>) {
    out.clear();
    if node_size < 2 {
        return;
    }
    let stride = (node_size - 2) / num_cutpoints.max(1);
    if stride >= 1 {
        let mut rank = stride;
        while out.len() < num_cutpoints && rank <= node_size - 1 {
            out.push(rank);
            rank += stride;
        }
    } else {
        out.extend(1..node_size);
    }
}

/// Conjugate posterior of one leaf mean given its sufficient statistics:
/// mean `s / (sigma2 (1/tau + n/sigma2))`, variance `1 / (1/tau + n/sigma2)`.
pub fn leaf_posterior(stats: SuffStats, sigma2: f64, tau: f64) -> (f64, f64) {
    assert!(tau > 0.0 && sigma2 > 0.0, "leaf posterior needs tau, sigma2 > 0");
    let precision = 1.0 / tau + stats.count as f64 / sigma2;
    (stats.sum / (sigma2 * precision), 1.0 / precision)
}

/// One draw from the leaf-mean conjugate posterior.
pub fn sample_leaf_mu<R: Rng + ?Sized>(
    stats: SuffStats,
    sigma2: f64,
    tau: f64,
    rng: &mut R,
) -> f64 {
    let (mean, var) = leaf_posterior(stats, sigma2, tau);
    let z: f64 = rng.sample(StandardNormal);
    mean + var.sqrt() * z
}

/// Configuration of a single grow-from-root pass.
#[derive(Debug, Clone, PartialEq)]
pub struct GrowConfig {
    /// Cut-point budget C per node.
    pub num_cutpoints: usize,
    /// Variables sampled per node (m <= V).
    pub mtry: usize,
    /// Leaf-mean prior variance.
    pub tau: f64,
    /// Depth-prior base.
    pub alpha: f64,
    /// Depth-prior exponent.
    pub beta: f64,
    /// Safety bound on recursion depth.
    pub max_depth: u32,
    /// Multiplier on the aggregate no-split weight (1 = the prior's own value).
    pub null_weight_multiplier: f64,
}

impl GrowConfig {
    pub fn new(num_cutpoints: usize, mtry: usize, tau: f64, alpha: f64, beta: f64) -> Self {
        GrowConfig {
            num_cutpoints,
            mtry,
            tau,
            alpha,
            beta,
            max_depth: DEFAULT_MAX_DEPTH,
            null_weight_multiplier: 1.0,
        }
    }

    pub fn validate(&self, num_vars: usize) -> Result<()> {
        if self.num_cutpoints == 0 {
            return Err(XbartError::ContractViolation(
                "num_cutpoints must be at least 1".into(),
            ));
        }
        if self.mtry == 0 || self.mtry > num_vars {
            return Err(XbartError::ContractViolation(format!(
                "mtry must lie in [1, {num_vars}], got {}",
                self.mtry
            )));
        }
        if !(self.tau.is_finite() && self.tau > 0.0) {
            return Err(XbartError::ContractViolation(format!(
                "tau must be positive, got {}",
                self.tau
            )));
        }
        if !(self.null_weight_multiplier.is_finite() && self.null_weight_multiplier >= 0.0) {
            return Err(XbartError::ContractViolation(
                "null_weight_multiplier must be non-negative".into(),
            ));
        }
        CriterionParams {
            sigma2: 1.0,
            tau: self.tau,
            alpha: self.alpha,
            beta: self.beta,
            depth: 0,
        }
        .validate()
    }
}

/// View into one node's rows inside a flat per-depth arena level.
struct LevelView<'a> {
    level: &'a [RowId],
    lo: usize,
    hi: usize,
    stride: usize,
}

impl NodeCols for LevelView<'_> {
    #[inline]
    fn node_len(&self) -> usize {
        self.hi - self.lo
    }

    #[inline]
    fn col(&self, var: usize) -> &[RowId] {
        &self.level[var * self.stride + self.lo..var * self.stride + self.hi]
    }
}

/// Reusable grow-from-root engine. Child index buffers live in per-depth
/// arenas that are reused across nodes and trees, and the candidate table,
/// mask, and sampling scratch are likewise recycled.
pub struct TreeGrower {
    config: GrowConfig,
    n: usize,
    num_vars: usize,
    levels: Vec<Vec<RowId>>,
    mask: Vec<u8>,
    ranks: Vec<usize>,
    table: CutCandidateTable,
    prob_scratch: Vec<f64>,
    var_scratch: Vec<f64>,
    vars: Vec<usize>,
}

/// Log density of one grow-from-root outcome, split into the tree-structure
/// part (split/no-split decisions) and the leaf-mean proposal densities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GrowLogParts {
    pub structure: f64,
    pub leaf: f64,
}

impl GrowLogParts {
    pub fn total(&self) -> f64 {
        self.structure + self.leaf
    }

    fn neg_inf() -> Self {
        GrowLogParts {
            structure: f64::NEG_INFINITY,
            leaf: f64::NEG_INFINITY,
        }
    }
}

enum NodeOutcome {
    Leaf,
    Split { var: usize, rank: usize },
}

impl TreeGrower {
    pub fn new(config: GrowConfig, n: usize, num_vars: usize) -> Result<Self> {
        config.validate(num_vars)?;
        Ok(TreeGrower {
            config,
            n,
            num_vars,
            levels: Vec::new(),
            mask: vec![0; n],
            ranks: Vec::new(),
            table: CutCandidateTable::new(),
            prob_scratch: Vec::new(),
            var_scratch: Vec::new(),
            vars: Vec::new(),
        })
    }

    pub fn config(&self) -> &GrowConfig {
        &self.config
    }

    /// Grows one tree on `residual` (indexed by original row id) starting
    /// from the node covered by `root`, at tree depth `depth`.
    pub fn grow_from_root<R: Rng + ?Sized>(
        &mut self,
        residual: &[f64],
        root: &PresortedIndex,
        dataset: &Dataset,
        depth: u32,
        weights: &[f64],
        sigma2: f64,
        rng: &mut R,
    ) -> Result<Tree> {
        self.grow_internal(residual, root, dataset, depth, weights, self.config.mtry, sigma2, rng, None)
    }

    /// As `grow_from_root`, but also writes each training row's fitted leaf
    /// mean into `fit_out` and lets the caller override `mtry` (the sampler
    /// uses all variables during burn-in sweeps).
    #[allow(clippy::too_many_arguments)]
    pub fn grow_with_fit<R: Rng + ?Sized>(
        &mut self,
        residual: &[f64],
        root: &PresortedIndex,
        dataset: &Dataset,
        depth: u32,
        weights: &[f64],
        mtry: usize,
        sigma2: f64,
        rng: &mut R,
        fit_out: &mut [f64],
    ) -> Result<Tree> {
        self.grow_internal(
            residual,
            root,
            dataset,
            depth,
            weights,
            mtry,
            sigma2,
            rng,
            Some(fit_out),
        )
    }

    #[allow(clippy::too_many_arguments)]
    fn grow_internal<R: Rng + ?Sized>(
        &mut self,
        residual: &[f64],
        root: &PresortedIndex,
        dataset: &Dataset,
        depth: u32,
        weights: &[f64],
        mtry: usize,
        sigma2: f64,
        rng: &mut R,
        mut fit_out: Option<&mut [f64]>,
    ) -> Result<Tree> {
        self.check_inputs(residual, root, dataset, weights, mtry, sigma2)?;
        let node_size = root.node_size();
        self.load_root(root);

        let mut tree = Tree {
            nodes: Vec::new(),
            split_counts: vec![0; self.num_vars],
        };
        self.grow_rec(
            residual,
            dataset,
            weights,
            mtry,
            sigma2,
            rng,
            &mut tree,
            &mut fit_out,
            0,
            0,
            node_size,
            depth,
        )?;
        Ok(tree)
    }

    /// Log density of `grow_from_root` producing exactly `tree` (structure
    /// and leaf means) from `residual`. Requires the all-variables candidate
    /// table (mtry = V), for which the subset draw is a no-op and the density
    /// is exact. A recorded split that is not among a node's candidates
    /// yields `-inf`.
    pub(crate) fn eval_log_density(
        &mut self,
        tree: &Tree,
        residual: &[f64],
        root: &PresortedIndex,
        dataset: &Dataset,
        depth: u32,
        sigma2: f64,
    ) -> Result<GrowLogParts> {
        let uniform = vec![1.0; self.num_vars];
        self.check_inputs(residual, root, dataset, &uniform, self.num_vars, sigma2)?;
        let node_size = root.node_size();
        self.load_root(root);

        let mut parts = GrowLogParts {
            structure: 0.0,
            leaf: 0.0,
        };
        let finite = self.eval_rec(
            tree,
            residual,
            dataset,
            sigma2,
            &mut parts,
            0,
            0,
            0,
            node_size,
            depth,
        );
        Ok(if finite { parts } else { GrowLogParts::neg_inf() })
    }

    fn check_inputs(
        &self,
        residual: &[f64],
        root: &PresortedIndex,
        dataset: &Dataset,
        weights: &[f64],
        mtry: usize,
        sigma2: f64,
    ) -> Result<()> {
        if root.node_size() == 0 {
            return Err(XbartError::ContractViolation("empty node index".into()));
        }
        if root.num_vars() != self.num_vars || dataset.num_vars() != self.num_vars {
            return Err(XbartError::ContractViolation(
                "index/dataset variable count mismatch".into(),
            ));
        }
        if residual.len() != dataset.n() || dataset.n() != self.n {
            return Err(XbartError::ContractViolation(
                "residual length does not match dataset rows".into(),
            ));
        }
        if weights.len() != self.num_vars {
            return Err(XbartError::ContractViolation(
                "variable weight vector has wrong length".into(),
            ));
        }
        if mtry == 0 || mtry > self.num_vars {
            return Err(XbartError::ContractViolation(format!(
                "mtry must lie in [1, {}], got {mtry}",
                self.num_vars
            )));
        }
        if !(sigma2.is_finite() && sigma2 > 0.0) {
            return Err(XbartError::Numeric(format!(
                "sigma2 must be finite and positive, got {sigma2}"
            )));
        }
        Ok(())
    }

    fn load_root(&mut self, root: &PresortedIndex) {
        self.ensure_level(0);
        let stride = self.n;
        let node_size = root.node_size();
        for v in 0..self.num_vars {
            self.levels[0][v * stride..v * stride + node_size].copy_from_slice(root.order(v));
        }
    }

    fn ensure_level(&mut self, level: usize) {
        while self.levels.len() <= level {
            self.levels.push(vec![0; self.n * self.num_vars]);
        }
    }

    fn criterion_params(&self, sigma2: f64, depth: u32) -> CriterionParams {
        CriterionParams {
            sigma2,
            tau: self.config.tau,
            alpha: self.config.alpha,
            beta: self.config.beta,
            depth,
        }
    }

    /// Whole-node residual sum, accumulated in variable 0's ordering.
    fn node_total(&self, residual: &[f64], level: usize, lo: usize, hi: usize) -> f64 {
        self.levels[level][lo..hi]
            .iter()
            .map(|&r| residual[r as usize])
            .sum()
    }

    /// Marks the left rows, sifts every variable into the next level, and
    /// clears the marks again.
    fn sift_level(&mut self, level: usize, lo: usize, hi: usize, split_var: usize, rank: usize) {
        self.ensure_level(level + 1);
        let stride = self.n;
        let (parents, children) = self.levels.split_at_mut(level + 1);
        let parent = &parents[level];
        let child = &mut children[0];

        let split_col = &parent[split_var * stride + lo..split_var * stride + hi];
        for &row in &split_col[..rank] {
            self.mask[row as usize] = 1;
        }
        for v in 0..self.num_vars {
            let pcol = &parent[v * stride + lo..v * stride + hi];
            let (lch, rch) = child[v * stride + lo..v * stride + hi].split_at_mut(rank);
            sift_column(pcol, &self.mask, lch, rch);
        }
        for &row in &split_col[..rank] {
            self.mask[row as usize] = 0;
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn grow_rec<R: Rng + ?Sized>(
        &mut self,
        residual: &[f64],
        dataset: &Dataset,
        weights: &[f64],
        mtry: usize,
        sigma2: f64,
        rng: &mut R,
        tree: &mut Tree,
        fit_out: &mut Option<&mut [f64]>,
        level: usize,
        lo: usize,
        hi: usize,
        depth: u32,
    ) -> Result<usize> {
        let outcome = self.decide(residual, weights, mtry, sigma2, level, lo, hi, depth, rng)?;
        match outcome {
            NodeOutcome::Leaf => {
                let stats = SuffStats::new(hi - lo, self.node_total(residual, level, lo, hi));
                let mu = sample_leaf_mu(stats, sigma2, self.config.tau, rng);
                if let Some(fit) = fit_out.as_deref_mut() {
                    for &row in &self.levels[level][lo..hi] {
                        fit[row as usize] = mu;
                    }
                }
                tree.nodes.push(Node::Leaf { mu, depth });
                Ok(tree.nodes.len() - 1)
            }
            NodeOutcome::Split { var, rank } => {
                tree.split_counts[var] += 1;
                let stride = self.n;
                let cut_row = self.levels[level][var * stride + lo + rank - 1] as usize;
                let cut_value = dataset.x().get(cut_row, var);
                self.sift_level(level, lo, hi, var, rank);

                let id = tree.nodes.len();
                tree.nodes.push(Node::Internal {
                    var,
                    cut_value,
                    left: usize::MAX,
                    right: usize::MAX,
                    depth,
                });
                let left = self.grow_rec(
                    residual,
                    dataset,
                    weights,
                    mtry,
                    sigma2,
                    rng,
                    tree,
                    fit_out,
                    level + 1,
                    lo,
                    lo + rank,
                    depth + 1,
                )?;
                let right = self.grow_rec(
                    residual,
                    dataset,
                    weights,
                    mtry,
                    sigma2,
                    rng,
                    tree,
                    fit_out,
                    level + 1,
                    lo + rank,
                    hi,
                    depth + 1,
                )?;
                if let Node::Internal {
                    left: l, right: r, ..
                } = &mut tree.nodes[id]
                {
                    *l = left;
                    *r = right;
                }
                Ok(id)
            }
        }
    }

    /// One node decision. RNG consumption order is fixed: the variable
    /// subset, then one cut-point draw; forced leaves (no candidate ranks or
    /// the depth bound) consume nothing here, and the caller draws the leaf
    /// mean afterwards.
    #[allow(clippy::too_many_arguments)]
    fn decide<R: Rng + ?Sized>(
        &mut self,
        residual: &[f64],
        weights: &[f64],
        mtry: usize,
        sigma2: f64,
        level: usize,
        lo: usize,
        hi: usize,
        depth: u32,
        rng: &mut R,
    ) -> Result<NodeOutcome> {
        select_cutpoint_ranks_into(hi - lo, self.config.num_cutpoints, &mut self.ranks);
        if self.ranks.is_empty() || depth >= self.config.max_depth {
            return Ok(NodeOutcome::Leaf);
        }

        sample_m_variables_into(weights, mtry, &mut self.var_scratch, &mut self.vars, rng)?;
        let params = self.criterion_params(sigma2, depth);
        let view = LevelView {
            level: &self.levels[level],
            lo,
            hi,
            stride: self.n,
        };
        self.table.rebuild(
            residual,
            &view,
            &self.vars,
            &self.ranks,
            &params,
            self.config.null_weight_multiplier,
        );
        match self.table.sample_with_scratch(&mut self.prob_scratch, rng)? {
            CutChoice::NoSplit => Ok(NodeOutcome::Leaf),
            CutChoice::Split { var, rank } => Ok(NodeOutcome::Split { var, rank }),
        }
    }

    /// Evaluate-instead-of-sample twin of `grow_rec`: walks `tree` over the
    /// same node data, accumulating log selection probabilities and leaf
    /// densities. Returns false as soon as the tree is unreachable.
    #[allow(clippy::too_many_arguments)]
    fn eval_rec(
        &mut self,
        tree: &Tree,
        residual: &[f64],
        dataset: &Dataset,
        sigma2: f64,
        parts: &mut GrowLogParts,
        node_id: usize,
        level: usize,
        lo: usize,
        hi: usize,
        depth: u32,
    ) -> bool {
        select_cutpoint_ranks_into(hi - lo, self.config.num_cutpoints, &mut self.ranks);
        let forced_leaf = self.ranks.is_empty() || depth >= self.config.max_depth;

        if !forced_leaf {
            // table over all variables: with mtry = V the subset draw cannot
            // change the candidate set
            self.vars.clear();
            self.vars.extend(0..self.num_vars);
            let params = self.criterion_params(sigma2, depth);
            let view = LevelView {
                level: &self.levels[level],
                lo,
                hi,
                stride: self.n,
            };
            self.table.rebuild(
                residual,
                &view,
                &self.vars,
                &self.ranks,
                &params,
                self.config.null_weight_multiplier,
            );
        }

        match tree.nodes[node_id].clone() {
            Node::Leaf { mu, .. } => {
                if !forced_leaf {
                    parts.structure += self.table.log_prob(&CutChoice::NoSplit);
                }
                let stats = SuffStats::new(hi - lo, self.node_total(residual, level, lo, hi));
                let (mean, var) = leaf_posterior(stats, sigma2, self.config.tau);
                parts.leaf += normal_logpdf(mu, mean, var);
                parts.structure.is_finite()
            }
            Node::Internal {
                var,
                cut_value,
                left,
                right,
                ..
            } => {
                if forced_leaf {
                    return false; // a split where only a leaf can be proposed
                }
                // recover the split rank: rows with x[var] <= cut_value form
                // the left child under the sorted ordering
                let stride = self.n;
                let col = &self.levels[level][var * stride + lo..var * stride + hi];
                let x_col = dataset.x().column(var);
                let rank = col.partition_point(|&row| x_col[row as usize] <= cut_value);
                if rank == 0 || rank >= hi - lo || self.ranks.binary_search(&rank).is_err() {
                    return false; // not a candidate cut-point for this node
                }
                parts.structure += self.table.log_prob(&CutChoice::Split { var, rank });
                if !parts.structure.is_finite() {
                    return false;
                }
                self.sift_level(level, lo, hi, var, rank);
                self.eval_rec(
                    tree,
                    residual,
                    dataset,
                    sigma2,
                    parts,
                    left,
                    level + 1,
                    lo,
                    lo + rank,
                    depth + 1,
                ) && self.eval_rec(
                    tree,
                    residual,
                    dataset,
                    sigma2,
                    parts,
                    right,
                    level + 1,
                    lo + rank,
                    hi,
                    depth + 1,
                )
            }
        }
    }
}

/// `sample_m_variables` writing into reusable buffers.
fn sample_m_variables_into<R: Rng + ?Sized>(
    weights: &[f64],
    m: usize,
    scratch: &mut Vec<f64>,
    out: &mut Vec<usize>,
    rng: &mut R,
) -> Result<()> {
    scratch.clear();
    scratch.extend_from_slice(weights);
    out.clear();
    crate::sampler::sample_m_variables_with(scratch, m, out, rng)
}

/// Convenience wrapper growing one tree with a fresh engine.
#[allow(clippy::too_many_arguments)]
pub fn grow_from_root<R: Rng + ?Sized>(
    residual: &[f64],
    idx: &PresortedIndex,
    dataset: &Dataset,
    depth: u32,
    config: &GrowConfig,
    weights: &[f64],
    sigma2: f64,
    rng: &mut R,
) -> Result<Tree> {
    TreeGrower::new(config.clone(), dataset.n(), dataset.num_vars())?
        .grow_from_root(residual, idx, dataset, depth, weights, sigma2, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{presort, Matrix};
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn dataset(cols: Vec<Vec<f64>>, y: Vec<f64>) -> Dataset {
        Dataset::new(Matrix::from_columns(cols).unwrap(), y).unwrap()
    }

    #[test]
    fn cutpoint_rank_examples() {
        assert_eq!(
            select_cutpoint_ranks(1002, 100),
            (1..=100).map(|i| 10 * i).collect::<Vec<_>>()
        );
        assert_eq!(select_cutpoint_ranks(5, 100), vec![1, 2, 3, 4]);
        assert!(select_cutpoint_ranks(1, 100).is_empty());
        assert_eq!(select_cutpoint_ranks(2, 100), vec![1]);
        // stride rule caps both the count and the top rank
        assert_eq!(select_cutpoint_ranks(203, 100).len(), 100);
        assert!(select_cutpoint_ranks(203, 100).iter().all(|&c| c <= 202));
    }

    #[test]
    fn leaf_mu_posterior_moments() {
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        // n=4, s=8, sigma2=4, tau=1 -> N(1.0, 0.5)
        let stats = SuffStats::new(4, 8.0);
        let (mean, var) = leaf_posterior(stats, 4.0, 1.0);
        assert_relative_eq!(mean, 1.0, epsilon = 1e-12);
        assert_relative_eq!(var, 0.5, epsilon = 1e-12);

        let draws = 100_000;
        let samples: Vec<f64> = (0..draws)
            .map(|_| sample_leaf_mu(stats, 4.0, 1.0, &mut rng))
            .collect();
        let emp_mean = samples.iter().sum::<f64>() / draws as f64;
        let emp_var = samples.iter().map(|v| (v - emp_mean).powi(2)).sum::<f64>() / (draws - 1) as f64;
        let se_mean = (var / draws as f64).sqrt();
        let se_var = var * (2.0 / (draws as f64 - 1.0)).sqrt();
        assert!((emp_mean - mean).abs() <= 3.0 * se_mean);
        assert!((emp_var - var).abs() <= 3.0 * se_var);

        // prior when the node is empty
        let (m0, v0) = leaf_posterior(SuffStats::new(0, 0.0), 1.0, 2.5);
        assert_eq!(m0, 0.0);
        assert_relative_eq!(v0, 2.5, epsilon = 1e-12);

        // diffuse prior pins the mean at s/n
        let (m_inf, _) = leaf_posterior(SuffStats::new(10, 30.0), 1.0, 1e6);
        assert_relative_eq!(m_inf, 3.0, epsilon = 1e-4);
    }

    #[test]
    fn single_row_node_is_leaf() {
        let d = dataset(vec![vec![0.5]], vec![1.0]);
        let idx = presort(&d);
        let cfg = GrowConfig::new(10, 1, 1.0, 0.95, 1.25);
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let tree = grow_from_root(&[1.0], &idx, &d, 0, &cfg, &[1.0], 1.0, &mut rng).unwrap();
        assert_eq!(tree.num_leaves(), 1);
        assert_eq!(tree.num_internal(), 0);
    }

    #[test]
    fn alpha_one_splits_to_singletons() {
        let n = 8;
        let col: Vec<f64> = (0..n).map(|i| i as f64).collect();
        let resid: Vec<f64> = (0..n).map(|i| (i as f64) * 0.5 - 2.0).collect();
        let d = dataset(vec![col], vec![0.0; n]);
        let idx = presort(&d);
        let mut cfg = GrowConfig::new(100, 1, 0.5, 1.0, 0.0);
        cfg.max_depth = 40;
        let mut rng = ChaCha20Rng::seed_from_u64(9);
        let tree = grow_from_root(&resid, &idx, &d, 0, &cfg, &[1.0], 1.0, &mut rng).unwrap();
        assert_eq!(tree.num_leaves(), n);
        assert_eq!(tree.num_internal(), n - 1);
        assert_eq!(tree.split_counts()[0] as usize, n - 1);
    }

    #[test]
    fn step_function_splits_on_signal_variable() {
        // residual = step in x1; the root split should pick x1 essentially always
        let n = 500;
        let num_seeds = 200;
        let mut gen = ChaCha20Rng::seed_from_u64(1234);
        let cols: Vec<Vec<f64>> = (0..5)
            .map(|_| {
                (0..n)
                    .map(|_| rand_distr::Distribution::sample(&StandardNormal, &mut gen))
                    .collect()
            })
            .collect();
        let resid: Vec<f64> = cols[0]
            .iter()
            .map(|&x| if x < 0.0 { -1.0 } else { 1.0 })
            .collect();
        let d = dataset(cols, vec![0.0; n]);
        let idx = presort(&d);
        let var_y = 4.0 / 3.0; // rough variance of the step residual
        let cfg = GrowConfig::new(100, 5, 0.3 * var_y, 0.95, 1.25);
        let mut grower = TreeGrower::new(cfg, n, 5).unwrap();
        let weights = vec![0.2; 5];

        let mut hits = 0;
        for seed in 0..num_seeds {
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            let tree = grower
                .grow_from_root(&resid, &idx, &d, 0, &weights, 0.01, &mut rng)
                .unwrap();
            if let Node::Internal { var, .. } = &tree.nodes()[0] {
                if *var == 0 {
                    hits += 1;
                }
            }
        }
        assert!(
            hits as f64 / num_seeds as f64 > 0.99,
            "root split chose x1 in {hits}/{num_seeds} runs"
        );
    }

    #[test]
    fn deeper_beta_means_shallower_trees() {
        let n = 400;
        let mut gen = ChaCha20Rng::seed_from_u64(77);
        let col: Vec<f64> = (0..n)
            .map(|_| rand_distr::Distribution::sample(&StandardNormal, &mut gen))
            .collect();
        let resid: Vec<f64> = col.iter().map(|&x| x.sin()).collect();
        let d = dataset(vec![col], vec![0.0; n]);
        let idx = presort(&d);

        let mean_depth = |beta: f64| -> f64 {
            let cfg = GrowConfig::new(50, 1, 0.1, 0.95, beta);
            let mut grower = TreeGrower::new(cfg, n, 1).unwrap();
            let trees = 200;
            let mut total = 0.0;
            for seed in 0..trees {
                let mut rng = ChaCha20Rng::seed_from_u64(10_000 + seed);
                let tree = grower
                    .grow_from_root(&resid, &idx, &d, 0, &[1.0], 0.25, &mut rng)
                    .unwrap();
                let depths = tree.leaf_depths();
                total += depths.iter().map(|&d| d as f64).sum::<f64>() / depths.len() as f64;
            }
            total / trees as f64
        };

        assert!(mean_depth(0.5) > mean_depth(3.0));
    }

    #[test]
    fn grow_is_deterministic_given_seed() {
        let n = 300;
        let mut gen = ChaCha20Rng::seed_from_u64(5);
        let cols: Vec<Vec<f64>> = (0..3)
            .map(|_| {
                (0..n)
                    .map(|_| rand_distr::Distribution::sample(&StandardNormal, &mut gen))
                    .collect()
            })
            .collect();
        let resid: Vec<f64> = (0..n).map(|i| (i as f64 * 0.01).cos()).collect();
        let d = dataset(cols, vec![0.0; n]);
        let idx = presort(&d);
        let cfg = GrowConfig::new(30, 2, 0.2, 0.95, 1.25);
        let mut grower = TreeGrower::new(cfg, n, 3).unwrap();
        let w = vec![1.0 / 3.0; 3];

        let mut rng1 = ChaCha20Rng::seed_from_u64(99);
        let t1 = grower
            .grow_from_root(&resid, &idx, &d, 0, &w, 0.5, &mut rng1)
            .unwrap();
        let mut rng2 = ChaCha20Rng::seed_from_u64(99);
        let t2 = grower
            .grow_from_root(&resid, &idx, &d, 0, &w, 0.5, &mut rng2)
            .unwrap();
        assert_eq!(t1, t2);
    }

    #[test]
    fn figure_style_tree_routes_correctly() {
        // x1 <= 0.8 goes left to (x2 <= 0.4 ? mu3 : mu2), else mu1
        let entries = vec![
            PreorderNode::Split {
                var: 0,
                cut_value: 0.8,
            },
            PreorderNode::Split {
                var: 1,
                cut_value: 0.4,
            },
            PreorderNode::Leaf { mu: 3.0 }, // x2 <= 0.4
            PreorderNode::Leaf { mu: 2.0 }, // x2 > 0.4
            PreorderNode::Leaf { mu: 1.0 }, // x1 > 0.8
        ];
        let tree = Tree::from_preorder(&entries, 2).unwrap();
        assert_eq!(predict_tree(&tree, &[0.9, 0.5]), 1.0);
        assert_eq!(predict_tree(&tree, &[0.5, 0.5]), 2.0);
        assert_eq!(predict_tree(&tree, &[0.5, 0.3]), 3.0);
        assert_eq!(tree.split_counts(), &[1, 1]);

        // single-leaf tree returns its constant everywhere
        let leaf = Tree::leaf(4.25, 2);
        assert_eq!(predict_tree(&leaf, &[100.0, -3.0]), 4.25);
    }

    #[test]
    fn preorder_round_trip() {
        let n = 200;
        let mut gen = ChaCha20Rng::seed_from_u64(21);
        let cols: Vec<Vec<f64>> = (0..2)
            .map(|_| {
                (0..n)
                    .map(|_| rand_distr::Distribution::sample(&StandardNormal, &mut gen))
                    .collect()
            })
            .collect();
        let resid: Vec<f64> = cols[0].iter().map(|&x| x * x).collect();
        let d = dataset(cols, vec![0.0; n]);
        let idx = presort(&d);
        let cfg = GrowConfig::new(20, 2, 0.3, 0.95, 1.25);
        let mut rng = ChaCha20Rng::seed_from_u64(31);
        let tree = grow_from_root(&resid, &idx, &d, 0, &cfg, &[0.5, 0.5], 0.3, &mut rng).unwrap();

        let rebuilt = Tree::from_preorder(&tree.to_preorder(), 2).unwrap();
        assert_eq!(tree, rebuilt);

        // truncated sequences are rejected
        let mut entries = tree.to_preorder();
        entries.pop();
        assert!(Tree::from_preorder(&entries, 2).is_err());
    }

    #[test]
    fn training_rows_land_in_their_partition_cell() {
        let n = 250;
        let mut gen = ChaCha20Rng::seed_from_u64(55);
        let cols: Vec<Vec<f64>> = (0..3)
            .map(|_| {
                (0..n)
                    .map(|_| rand_distr::Distribution::sample(&StandardNormal, &mut gen))
                    .collect()
            })
            .collect();
        let resid: Vec<f64> = cols[1].iter().map(|&x| if x > 0.3 { 2.0 } else { -1.0 }).collect();
        let d = dataset(cols, vec![0.0; n]);
        let idx = presort(&d);
        let cfg = GrowConfig::new(25, 3, 0.4, 0.95, 1.25);
        let mut grower = TreeGrower::new(cfg, n, 3).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(66);
        let mut fits = vec![0.0; n];
        let tree = grower
            .grow_with_fit(&resid, &idx, &d, 0, &[1.0; 3], 3, 0.2, &mut rng, &mut fits)
            .unwrap();

        // every training row's routed leaf mean equals its recorded fit
        for row in 0..n {
            assert_eq!(tree.predict_row(d.x(), row), fits[row]);
        }
        // split counts match a recount over nodes
        let mut recount = vec![0u32; 3];
        for node in tree.nodes() {
            if let Node::Internal { var, .. } = node {
                recount[*var] += 1;
            }
        }
        assert_eq!(recount.as_slice(), tree.split_counts());
    }
}
