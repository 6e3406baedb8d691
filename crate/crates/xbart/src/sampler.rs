//! The full XBART sampling loop: per-sweep, per-tree grow-from-root refits
//! against partial residuals, inverse-gamma error-variance updates, Dirichlet
//! variable-weight updates, and assembly of the burn-in-trimmed estimator.

use crate::data::{presort, sample_variance, Dataset, Matrix, PresortedIndex};
use crate::error::{Result, XbartError};
use crate::tree::{GrowConfig, Tree, TreeGrower, DEFAULT_MAX_DEPTH};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Gamma};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// User-facing fit configuration. Data-dependent parameters (tree count,
/// leaf prior variance, cut-point budget, mtry, sigma prior scale) stay
/// `None` to request their defaults, which are resolved from `n` and
/// `var(y)` when fitting begins.
#[derive(Debug, Clone, PartialEq)]
pub struct XbartConfig {
    /// Number of trees L; default `max(1, round((ln n)^(ln ln n) / 4))`.
    pub num_trees: Option<usize>,
    /// Sweeps K over the forest.
    pub num_sweeps: usize,
    /// Burn-in sweeps I (< K) discarded from the estimator.
    pub burnin: usize,
    /// Leaf-mean prior variance; default `0.3 var(y) / L`.
    pub tau: Option<f64>,
    /// Depth-prior base.
    pub alpha: f64,
    /// Depth-prior exponent.
    pub beta: f64,
    /// Cut-point budget C; default `max(ceil(sqrt(n)), 100)`.
    pub num_cutpoints: Option<usize>,
    /// Variables considered per split decision after burn-in; default V.
    pub mtry: Option<usize>,
    /// Inverse-gamma prior shape parameter a0 for sigma^2.
    pub sigma_prior_shape: f64,
    /// Inverse-gamma prior scale parameter eta; default `var(y)`.
    pub sigma_prior_scale: Option<f64>,
    /// Seed for the single RNG stream driving the whole fit.
    pub seed: u64,
    /// Multiplier on the aggregate no-split weight.
    pub null_weight_multiplier: f64,
    /// Experimental: per-sweep Metropolis-Hastings accept/reject.
    pub mh: bool,
}

impl Default for XbartConfig {
    fn default() -> Self {
        XbartConfig {
            num_trees: None,
            num_sweeps: 40,
            burnin: 15,
            tau: None,
            alpha: 0.95,
            beta: 1.25,
            num_cutpoints: None,
            mtry: None,
            sigma_prior_shape: 3.0,
            sigma_prior_scale: None,
            seed: 0,
            null_weight_multiplier: 1.0,
            mh: false,
        }
    }
}

/// Default tree count: `max(1, round((ln n)^(ln ln n) / 4))`.
pub fn default_num_trees(n: usize) -> usize {
    let ln_n = (n as f64).ln();
    let l = 0.25 * ln_n.powf(ln_n.ln());
    (l.round() as usize).max(1)
}

/// Default cut-point budget: `max(ceil(sqrt(n)), 100)`.
pub fn default_num_cutpoints(n: usize) -> usize {
    ((n as f64).sqrt().ceil() as usize).max(100)
}

/// Fully resolved configuration, echoed into saved model artifacts so the
/// data-dependent defaults stay auditable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolvedConfig {
    pub num_trees: usize,
    pub num_sweeps: usize,
    pub burnin: usize,
    pub tau: f64,
    pub alpha: f64,
    pub beta: f64,
    pub num_cutpoints: usize,
    pub mtry: usize,
    pub sigma_prior_shape: f64,
    pub sigma_prior_scale: f64,
    pub seed: u64,
    pub null_weight_multiplier: f64,
    pub mh: bool,
    pub max_depth: u32,
}

impl XbartConfig {
    /// Resolves every data-dependent default against the training data shape.
    pub fn resolve(&self, n: usize, num_vars: usize, var_y: f64) -> Result<ResolvedConfig> {
        if self.num_sweeps == 0 {
            return Err(XbartError::InvalidInput("num_sweeps must be >= 1".into()));
        }
        if self.burnin >= self.num_sweeps {
            return Err(XbartError::InvalidInput(format!(
                "burnin ({}) must be smaller than num_sweeps ({})",
                self.burnin, self.num_sweeps
            )));
        }
        let num_trees = self.num_trees.unwrap_or_else(|| default_num_trees(n));
        if num_trees == 0 {
            return Err(XbartError::InvalidInput("num_trees must be >= 1".into()));
        }
        let tau = self.tau.unwrap_or(0.3 * var_y / num_trees as f64);
        if !(tau.is_finite() && tau > 0.0) {
            return Err(XbartError::InvalidInput(format!(
                "tau must be positive (got {tau}); pass an explicit tau when var(y) is zero"
            )));
        }
        let num_cutpoints = self
            .num_cutpoints
            .unwrap_or_else(|| default_num_cutpoints(n));
        if num_cutpoints == 0 {
            return Err(XbartError::InvalidInput("num_cutpoints must be >= 1".into()));
        }
        let mtry = self.mtry.unwrap_or(num_vars);
        if mtry == 0 || mtry > num_vars {
            return Err(XbartError::InvalidInput(format!(
                "mtry must lie in [1, {num_vars}], got {mtry}"
            )));
        }
        if !(self.sigma_prior_shape > 0.0 && self.sigma_prior_shape.is_finite()) {
            return Err(XbartError::InvalidInput(
                "sigma_prior_shape must be positive".into(),
            ));
        }
        let sigma_prior_scale = self.sigma_prior_scale.unwrap_or(var_y);
        if !(sigma_prior_scale > 0.0 && sigma_prior_scale.is_finite()) {
            return Err(XbartError::InvalidInput(format!(
                "sigma_prior_scale must be positive (got {sigma_prior_scale}); \
                 pass an explicit value when var(y) is zero"
            )));
        }
        if self.mh && mtry != num_vars {
            return Err(XbartError::InvalidInput(
                "the MH mode requires mtry = V (the proposal density does not \
                 marginalize over variable subsets)"
                    .into(),
            ));
        }
        let resolved = ResolvedConfig {
            num_trees,
            num_sweeps: self.num_sweeps,
            burnin: self.burnin,
            tau,
            alpha: self.alpha,
            beta: self.beta,
            num_cutpoints,
            mtry,
            sigma_prior_shape: self.sigma_prior_shape,
            sigma_prior_scale,
            seed: self.seed,
            null_weight_multiplier: self.null_weight_multiplier,
            mh: self.mh,
            max_depth: DEFAULT_MAX_DEPTH,
        };
        resolved.grow_config().validate(num_vars)?;
        Ok(resolved)
    }
}

impl ResolvedConfig {
    pub fn grow_config(&self) -> GrowConfig {
        GrowConfig {
            num_cutpoints: self.num_cutpoints,
            mtry: self.mtry,
            tau: self.tau,
            alpha: self.alpha,
            beta: self.beta,
            max_depth: self.max_depth,
            null_weight_multiplier: self.null_weight_multiplier,
        }
    }
}

/// Live sampler state: the forest with cached per-row fits, the full
/// residual `y - sum_l g_l`, the error variance, and the Dirichlet
/// variable-weight bookkeeping.
#[derive(Debug, Clone)]
pub struct SamplerState {
    trees: Vec<Option<Tree>>,
    fits: Vec<Vec<f64>>,
    residual: Vec<f64>,
    sigma2: f64,
    w: Vec<f64>,
    w_bar: Vec<f64>,
    sweep_index: usize,
    tree_index: usize,
}

impl SamplerState {
    /// Live trees; `None` marks a slot still holding its flat `y/L`
    /// initialization fit.
    pub fn trees(&self) -> &[Option<Tree>] {
        &self.trees
    }

    pub fn fits(&self) -> &[Vec<f64>] {
        &self.fits
    }

    pub fn residual(&self) -> &[f64] {
        &self.residual
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    pub fn w(&self) -> &[f64] {
        &self.w
    }

    pub fn w_bar(&self) -> &[f64] {
        &self.w_bar
    }

    /// 1-based index of the sweep currently in progress (0 before the first).
    pub fn sweep_index(&self) -> usize {
        self.sweep_index
    }

    /// Index of the next tree to update within the sweep.
    pub fn tree_index(&self) -> usize {
        self.tree_index
    }
}

/// Per-sweep snapshots of the forest retained after burn-in, plus the
/// sigma^2 trace over every sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorDraws {
    forests: Vec<Vec<Tree>>,
    sigma2_trace: Vec<f64>,
    num_vars: usize,
    num_sweeps: usize,
    burnin: usize,
}

impl PosteriorDraws {
    pub fn from_parts(
        forests: Vec<Vec<Tree>>,
        sigma2_trace: Vec<f64>,
        num_vars: usize,
        num_sweeps: usize,
        burnin: usize,
    ) -> Result<Self> {
        if burnin >= num_sweeps {
            return Err(XbartError::InvalidInput(
                "burnin must be smaller than num_sweeps".into(),
            ));
        }
        if forests.len() != num_sweeps - burnin {
            return Err(XbartError::InvalidInput(format!(
                "expected {} retained forests, got {}",
                num_sweeps - burnin,
                forests.len()
            )));
        }
        if sigma2_trace.len() != num_sweeps {
            return Err(XbartError::InvalidInput(format!(
                "expected {} sigma2 trace entries, got {}",
                num_sweeps,
                sigma2_trace.len()
            )));
        }
        Ok(PosteriorDraws {
            forests,
            sigma2_trace,
            num_vars,
            num_sweeps,
            burnin,
        })
    }

    pub fn forests(&self) -> &[Vec<Tree>] {
        &self.forests
    }

    pub fn sigma2_trace(&self) -> &[f64] {
        &self.sigma2_trace
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    pub fn num_sweeps(&self) -> usize {
        self.num_sweeps
    }

    pub fn burnin(&self) -> usize {
        self.burnin
    }

    pub fn num_retained(&self) -> usize {
        self.forests.len()
    }

    /// Mean of the post-burn-in sigma^2 trace.
    pub fn sigma2_posterior_mean(&self) -> f64 {
        let kept = &self.sigma2_trace[self.burnin..];
        kept.iter().sum::<f64>() / kept.len() as f64
    }

    /// Point-wise average forest evaluation over the retained sweeps.
    pub fn predict(&self, x: &Matrix) -> Result<Vec<f64>> {
        if x.cols() != self.num_vars {
            return Err(XbartError::InvalidInput(format!(
                "prediction input has {} columns, model was trained with {}",
                x.cols(),
                self.num_vars
            )));
        }
        let scale = 1.0 / self.forests.len() as f64;
        Ok((0..x.rows())
            .into_par_iter()
            .map(|row| {
                let mut acc = 0.0;
                for forest in &self.forests {
                    for tree in forest {
                        acc += tree.predict_row(x, row);
                    }
                }
                acc * scale
            })
            .collect())
    }
}

/// Point-wise average function evaluation over retained sweeps.
pub fn predict(draws: &PosteriorDraws, x: &Matrix) -> Result<Vec<f64>> {
    draws.predict(x)
}

/// One draw of sigma^2 from its conjugate inverse-gamma full conditional:
/// shape `(N + a0) / 2`, scale `(r't r + eta) / 2`.
pub fn update_sigma2<R: Rng + ?Sized>(residual: &[f64], a0: f64, eta: f64, rng: &mut R) -> f64 {
    assert!(a0 > 0.0 && eta > 0.0, "sigma2 prior parameters must be positive");
    let rtr: f64 = residual.iter().map(|r| r * r).sum();
    let shape = (residual.len() as f64 + a0) / 2.0;
    let scale = (rtr + eta) / 2.0;
    draw_inverse_gamma(shape, scale, rng)
}

/// Inverse-gamma draw via the reciprocal of a gamma variate.
pub(crate) fn draw_inverse_gamma<R: Rng + ?Sized>(shape: f64, scale: f64, rng: &mut R) -> f64 {
    let gamma = Gamma::new(shape, 1.0 / scale).expect("valid gamma parameters");
    1.0 / gamma.sample(rng)
}

/// One Dirichlet draw via normalized gamma variates.
pub(crate) fn dirichlet_draw<R: Rng + ?Sized>(alpha: &[f64], rng: &mut R) -> Vec<f64> {
    let mut draw: Vec<f64> = alpha
        .iter()
        .map(|&a| {
            debug_assert!(a > 0.0);
            Gamma::new(a, 1.0).expect("valid gamma shape").sample(rng)
        })
        .collect();
    let total: f64 = draw.iter().sum();
    for v in &mut draw {
        *v /= total;
    }
    draw
}

/// Applies the split-count update `w_bar <- w_bar - old + new` and redraws
/// the variable weights `w ~ Dirichlet(w_bar)`.
pub fn update_variable_weights<R: Rng + ?Sized>(
    w_bar: &[f64],
    old_counts: &[u32],
    new_counts: &[u32],
    rng: &mut R,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if w_bar.len() != old_counts.len() || w_bar.len() != new_counts.len() {
        return Err(XbartError::ContractViolation(
            "weight and count vectors must have equal length".into(),
        ));
    }
    let mut next = Vec::with_capacity(w_bar.len());
    for ((&wb, &old), &new) in w_bar.iter().zip(old_counts).zip(new_counts) {
        let base = wb - old as f64;
        if base < 1.0 - 1e-9 {
            return Err(XbartError::Accounting(format!(
                "w_bar entry {wb} minus old split count {old} drops below 1; \
                 split-count bookkeeping is corrupted"
            )));
        }
        next.push(base + new as f64);
    }
    let w = dirichlet_draw(&next, rng);
    Ok((next, w))
}

/// Samples `m` distinct variable ids sequentially and without replacement,
/// each draw proportional to the remaining weights.
pub fn sample_m_variables<R: Rng + ?Sized>(
    weights: &[f64],
    m: usize,
    rng: &mut R,
) -> Result<Vec<usize>> {
    let mut scratch = weights.to_vec();
    let mut out = Vec::with_capacity(m);
    sample_m_variables_with(&mut scratch, m, &mut out, rng)?;
    Ok(out)
}

/// In-place variant of [`sample_m_variables`]; `weights` is consumed
/// (chosen entries are zeroed).
pub(crate) fn sample_m_variables_with<R: Rng + ?Sized>(
    weights: &mut [f64],
    m: usize,
    out: &mut Vec<usize>,
    rng: &mut R,
) -> Result<()> {
    if m == 0 || m > weights.len() {
        return Err(XbartError::ContractViolation(format!(
            "m must lie in [1, {}], got {m}",
            weights.len()
        )));
    }
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(XbartError::ContractViolation(
            "variable weights must be finite and non-negative".into(),
        ));
    }
    if weights.iter().filter(|w| **w > 0.0).count() < m {
        return Err(XbartError::ContractViolation(format!(
            "fewer than {m} variables have positive weight"
        )));
    }
    for _ in 0..m {
        let total: f64 = weights.iter().sum();
        let u = rng.random::<f64>() * total;
        let mut acc = 0.0;
        let mut chosen = None;
        for (i, &w) in weights.iter().enumerate() {
            if w <= 0.0 {
                continue;
            }
            acc += w;
            chosen = Some(i);
            if acc > u {
                break;
            }
        }
        let i = chosen.expect("at least one positive weight remains");
        out.push(i);
        weights[i] = 0.0;
    }
    Ok(())
}

/// Stepwise XBART sampler over one dataset. `fit` drives it to completion;
/// the per-tree and per-sweep methods are exposed so state invariants can be
/// checked mid-run.
pub struct Sampler<'a> {
    dataset: &'a Dataset,
    config: ResolvedConfig,
    root: PresortedIndex,
    grower: TreeGrower,
    rng: ChaCha20Rng,
    state: SamplerState,
}

impl<'a> Sampler<'a> {
    pub fn new(dataset: &'a Dataset, config: &XbartConfig) -> Result<Self> {
        if dataset.n() < 2 {
            return Err(XbartError::InvalidInput(
                "fitting requires at least two observations".into(),
            ));
        }
        let var_y = sample_variance(dataset.y());
        let resolved = config.resolve(dataset.n(), dataset.num_vars(), var_y)?;
        Self::with_resolved(dataset, resolved, var_y)
    }

    fn with_resolved(dataset: &'a Dataset, config: ResolvedConfig, var_y: f64) -> Result<Self> {
        let n = dataset.n();
        let num_vars = dataset.num_vars();
        let num_trees = config.num_trees;
        let root = presort(dataset);
        let grower = TreeGrower::new(config.grow_config(), n, num_vars)?;
        let rng = ChaCha20Rng::seed_from_u64(config.seed);

        let state = if config.mh {
            // MH mode starts from a realizable forest: single-leaf trees at
            // mean(y)/L, so reverse proposal densities are well-defined.
            let y_mean = dataset.y().iter().sum::<f64>() / n as f64;
            let per_tree = y_mean / num_trees as f64;
            SamplerState {
                trees: vec![Some(Tree::leaf(per_tree, num_vars)); num_trees],
                fits: vec![vec![per_tree; n]; num_trees],
                residual: dataset.y().iter().map(|y| y - y_mean).collect(),
                sigma2: var_y,
                w: vec![1.0 / num_vars as f64; num_vars],
                w_bar: vec![1.0; num_vars],
                sweep_index: 0,
                tree_index: 0,
            }
        } else {
            // Every tree's cached fit starts at y/L, so the first partial
            // residual seen by tree 1 is exactly y/L.
            let init_fit: Vec<f64> = dataset.y().iter().map(|y| y / num_trees as f64).collect();
            SamplerState {
                trees: vec![None; num_trees],
                fits: vec![init_fit; num_trees],
                residual: vec![0.0; n],
                sigma2: var_y,
                w: vec![1.0 / num_vars as f64; num_vars],
                w_bar: vec![1.0; num_vars],
                sweep_index: 0,
                tree_index: 0,
            }
        };
        Ok(Sampler {
            dataset,
            config,
            root,
            grower,
            rng,
            state,
        })
    }

    pub fn state(&self) -> &SamplerState {
        &self.state
    }

    pub fn config(&self) -> &ResolvedConfig {
        &self.config
    }

    pub fn dataset(&self) -> &Dataset {
        self.dataset
    }

    /// Updates one tree: add back its fit, regrow on the partial residual,
    /// subtract the new fit, then refresh the variable weights and sigma^2.
    pub fn step_tree(&mut self) -> Result<()> {
        if self.state.tree_index == 0 {
            self.state.sweep_index += 1;
        }
        let l = self.state.tree_index;
        let n = self.dataset.n();

        for i in 0..n {
            self.state.residual[i] += self.state.fits[l][i];
        }

        // burn-in sweeps consider all variables
        let mtry = if self.state.sweep_index <= self.config.burnin {
            self.dataset.num_vars()
        } else {
            self.config.mtry
        };
        let old_counts: Vec<u32> = match &self.state.trees[l] {
            Some(tree) => tree.split_counts().to_vec(),
            None => vec![0; self.dataset.num_vars()],
        };

        let tree = self.grower.grow_with_fit(
            &self.state.residual,
            &self.root,
            self.dataset,
            0,
            &self.state.w,
            mtry,
            self.state.sigma2,
            &mut self.rng,
            &mut self.state.fits[l],
        )?;
        for i in 0..n {
            self.state.residual[i] -= self.state.fits[l][i];
        }

        let (w_bar, w) = update_variable_weights(
            &self.state.w_bar,
            &old_counts,
            tree.split_counts(),
            &mut self.rng,
        )?;
        self.state.w_bar = w_bar;
        self.state.w = w;
        self.state.sigma2 = update_sigma2(
            &self.state.residual,
            self.config.sigma_prior_shape,
            self.config.sigma_prior_scale,
            &mut self.rng,
        );
        self.state.trees[l] = Some(tree);

        self.state.tree_index = (l + 1) % self.config.num_trees;
        self.check_finite(l)?;
        Ok(())
    }

    fn check_finite(&self, tree_index: usize) -> Result<()> {
        if !self.state.sigma2.is_finite() || self.state.sigma2 <= 0.0 {
            return Err(XbartError::Numeric(format!(
                "sigma2 became {} at sweep {}, tree {}",
                self.state.sigma2, self.state.sweep_index, tree_index
            )));
        }
        if let Some(i) = self.state.residual.iter().position(|r| !r.is_finite()) {
            return Err(XbartError::Numeric(format!(
                "residual overflowed at row {i} (sweep {}, tree {})",
                self.state.sweep_index, tree_index
            )));
        }
        Ok(())
    }

    /// Runs one full sweep over the forest.
    pub fn run_sweep(&mut self) -> Result<()> {
        if self.state.tree_index != 0 {
            return Err(XbartError::ContractViolation(
                "run_sweep called mid-sweep".into(),
            ));
        }
        if self.config.mh {
            return self.run_sweep_mh();
        }
        for _ in 0..self.config.num_trees {
            self.step_tree()?;
        }
        Ok(())
    }

    /// One Metropolis-Hastings sweep: regrow the whole forest with sigma^2
    /// and w held fixed, then accept or reject it as a block (sigma^2 and the
    /// variable weights update once afterwards).
    fn run_sweep_mh(&mut self) -> Result<()> {
        self.state.sweep_index += 1;
        let n = self.dataset.n();
        let num_trees = self.config.num_trees;

        let current = crate::proposal::ForestSnapshot::new(
            self.state
                .trees
                .iter()
                .map(|t| t.clone().expect("MH mode keeps all trees realized"))
                .collect(),
            self.state.sigma2,
            self.config.tau,
        );
        let saved_fits = self.state.fits.clone();
        let saved_residual = self.state.residual.clone();

        for l in 0..num_trees {
            for i in 0..n {
                self.state.residual[i] += self.state.fits[l][i];
            }
            let tree = self.grower.grow_with_fit(
                &self.state.residual,
                &self.root,
                self.dataset,
                0,
                &self.state.w,
                self.config.mtry,
                self.state.sigma2,
                &mut self.rng,
                &mut self.state.fits[l],
            )?;
            for i in 0..n {
                self.state.residual[i] -= self.state.fits[l][i];
            }
            self.state.trees[l] = Some(tree);
        }
        let proposed = crate::proposal::ForestSnapshot::new(
            self.state
                .trees
                .iter()
                .map(|t| t.clone().expect("just grown"))
                .collect(),
            self.state.sigma2,
            self.config.tau,
        );

        let outcome = crate::proposal::mh_accept_decision(
            &current,
            &proposed,
            self.dataset,
            &self.config,
            &mut self.rng,
        )?;
        if !outcome.accepted {
            let trees = current.into_trees();
            for (slot, tree) in self.state.trees.iter_mut().zip(trees) {
                *slot = Some(tree);
            }
            self.state.fits = saved_fits;
            self.state.residual = saved_residual;
        }

        // post-decision updates, once per sweep: w_bar recounted from the
        // live forest, then w and sigma^2 redrawn
        let mut w_bar = vec![1.0; self.dataset.num_vars()];
        for tree in self.state.trees.iter().flatten() {
            for (acc, &c) in w_bar.iter_mut().zip(tree.split_counts()) {
                *acc += c as f64;
            }
        }
        self.state.w_bar = w_bar;
        self.state.w = dirichlet_draw(&self.state.w_bar, &mut self.rng);
        self.state.sigma2 = update_sigma2(
            &self.state.residual,
            self.config.sigma_prior_shape,
            self.config.sigma_prior_scale,
            &mut self.rng,
        );
        self.check_finite(num_trees - 1)
    }

    /// Runs all sweeps, retaining the post-burn-in forests.
    pub fn fit(mut self) -> Result<PosteriorDraws> {
        let k = self.config.num_sweeps;
        let i = self.config.burnin;
        let mut forests = Vec::with_capacity(k - i);
        let mut sigma2_trace = Vec::with_capacity(k);
        for sweep in 1..=k {
            self.run_sweep()?;
            sigma2_trace.push(self.state.sigma2);
            if sweep > i {
                forests.push(
                    self.state
                        .trees
                        .iter()
                        .map(|t| t.clone().expect("all trees realized after sweep 1"))
                        .collect(),
                );
            }
        }
        PosteriorDraws::from_parts(forests, sigma2_trace, self.dataset.num_vars(), k, i)
    }
}

/// Full fit output: the posterior draws plus the resolved configuration that
/// produced them.
#[derive(Debug, Clone)]
pub struct FitOutput {
    pub draws: PosteriorDraws,
    pub config: ResolvedConfig,
}

/// Fits an XBART forest to the dataset.
pub fn fit(dataset: &Dataset, config: &XbartConfig) -> Result<FitOutput> {
    let sampler = Sampler::new(dataset, config)?;
    let resolved = sampler.config().clone();
    let draws = sampler.fit()?;
    Ok(FitOutput {
        draws,
        config: resolved,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Matrix;
    use approx::assert_relative_eq;
    use rand_distr::StandardNormal;

    fn toy_dataset(n: usize, num_vars: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let cols: Vec<Vec<f64>> = (0..num_vars)
            .map(|_| (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect())
            .collect();
        let y: Vec<f64> = (0..n)
            .map(|i| 2.0 * cols[0][i] + 0.1 * rng.sample::<f64, _>(StandardNormal))
            .collect();
        Dataset::new(Matrix::from_columns(cols).unwrap(), y).unwrap()
    }

    #[test]
    fn default_formulas() {
        assert_eq!(default_num_trees(10_000), 35);
        assert_eq!(default_num_cutpoints(10_000), 100);
        assert_eq!(default_num_cutpoints(50_000), 224);
        assert!(default_num_trees(2) >= 1);
    }

    #[test]
    fn sigma2_update_moments() {
        // r = 0, N = 10, a0 = 2, eta = 2 -> IG(6, 1), mean 1/5
        let residual = vec![0.0; 10];
        let mut rng = ChaCha20Rng::seed_from_u64(17);
        let draws = 100_000;
        let mean = (0..draws)
            .map(|_| update_sigma2(&residual, 2.0, 2.0, &mut rng))
            .sum::<f64>()
            / draws as f64;
        // IG(6,1): mean 0.2, var = 1 / (25 * 4) = 0.01
        let se = (0.01f64 / draws as f64).sqrt();
        assert!((mean - 0.2).abs() <= 3.0 * se, "mean {mean}");
    }

    #[test]
    fn sigma2_scaling_in_residual() {
        // scaling residuals by c multiplies the scale parameter by c^2: check
        // via the ratio of means of two long runs
        let r1 = vec![1.0; 50];
        let r2: Vec<f64> = r1.iter().map(|v| 3.0 * v).collect();
        let mut rng = ChaCha20Rng::seed_from_u64(23);
        let draws = 50_000;
        let m1 = (0..draws)
            .map(|_| update_sigma2(&r1, 4.0, 1e-12, &mut rng))
            .sum::<f64>()
            / draws as f64;
        let m2 = (0..draws)
            .map(|_| update_sigma2(&r2, 4.0, 1e-12, &mut rng))
            .sum::<f64>()
            / draws as f64;
        // with eta ~ 0 the scale ratio is exactly 9
        assert_relative_eq!(m2 / m1, 9.0, epsilon = 0.2);
    }

    #[test]
    fn sigma2_posterior_consistency() {
        let n = 100_000;
        let sigma0 = 1.7;
        let mut rng = ChaCha20Rng::seed_from_u64(29);
        let residual: Vec<f64> = (0..n)
            .map(|_| sigma0 * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let draw = update_sigma2(&residual, 3.0, 1.0, &mut rng);
        assert!((draw - sigma0 * sigma0).abs() / (sigma0 * sigma0) < 0.05);
    }

    #[test]
    fn variable_weight_update_arithmetic() {
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let (w_bar, w) =
            update_variable_weights(&[3.0, 1.0, 2.0], &[2, 0, 1], &[0, 3, 0], &mut rng).unwrap();
        assert_eq!(w_bar, vec![1.0, 4.0, 1.0]);
        assert_relative_eq!(w.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
        assert!(w.iter().all(|&v| v > 0.0 && v < 1.0));

        // corrupted bookkeeping is detected
        assert!(update_variable_weights(&[1.0, 1.0], &[1, 0], &[0, 0], &mut rng).is_err());
    }

    #[test]
    fn dirichlet_concentrated_mean() {
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        let alpha = [1000.0, 1.0, 1.0];
        let draws = 10_000;
        let mean1 = (0..draws)
            .map(|_| dirichlet_draw(&alpha, &mut rng)[0])
            .sum::<f64>()
            / draws as f64;
        let p = 1000.0 / 1002.0;
        // Dirichlet marginal is Beta(a1, a0 - a1)
        let var = p * (1.0 - p) / 1003.0;
        let se = (var / draws as f64).sqrt();
        assert!((mean1 - p).abs() <= 3.0 * se, "mean {mean1} vs {p}");
    }

    #[test]
    fn weighted_sampling_without_replacement() {
        let w = [0.5, 0.3, 0.2];
        let mut rng = ChaCha20Rng::seed_from_u64(13);
        let trials = 100_000;
        let mut first_is_0 = 0;
        for _ in 0..trials {
            let ids = sample_m_variables(&w, 2, &mut rng).unwrap();
            assert_eq!(ids.len(), 2);
            assert_ne!(ids[0], ids[1]);
            if ids[0] == 0 {
                first_is_0 += 1;
            }
        }
        let freq = first_is_0 as f64 / trials as f64;
        let se = (0.5 * 0.5 / trials as f64).sqrt();
        assert!((freq - 0.5).abs() <= 3.0 * se, "freq {freq}");

        // m = V exhausts the ids; a one-hot weight pins the single draw
        let all = sample_m_variables(&w, 3, &mut rng).unwrap();
        let mut sorted = all.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, vec![0, 1, 2]);
        for _ in 0..20 {
            assert_eq!(sample_m_variables(&[0.0, 1.0, 0.0], 1, &mut rng).unwrap(), vec![1]);
        }
        assert!(sample_m_variables(&[0.0, 1.0, 0.0], 2, &mut rng).is_err());
    }

    #[test]
    fn collapsed_loop_equals_single_grow_pass() {
        let data = toy_dataset(120, 2, 3);
        let config = XbartConfig {
            num_trees: Some(1),
            num_sweeps: 1,
            burnin: 0,
            seed: 42,
            ..XbartConfig::default()
        };
        let out = fit(&data, &config).unwrap();
        assert_eq!(out.draws.num_retained(), 1);
        assert_eq!(out.draws.sigma2_trace().len(), 1);

        // replicate by hand: same stream, first partial residual is y/L = y
        let var_y = sample_variance(data.y());
        let resolved = config.resolve(data.n(), data.num_vars(), var_y).unwrap();
        let root = presort(&data);
        let mut grower = TreeGrower::new(resolved.grow_config(), data.n(), 2).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(42);
        let mut fits = vec![0.0; data.n()];
        let tree = grower
            .grow_with_fit(
                data.y(),
                &root,
                &data,
                0,
                &[0.5, 0.5],
                2,
                var_y,
                &mut rng,
                &mut fits,
            )
            .unwrap();
        assert_eq!(&out.draws.forests()[0][0], &tree);
    }

    #[test]
    fn fit_is_deterministic() {
        let data = toy_dataset(200, 3, 11);
        let config = XbartConfig {
            num_trees: Some(4),
            num_sweeps: 6,
            burnin: 2,
            seed: 7,
            ..XbartConfig::default()
        };
        let a = fit(&data, &config).unwrap();
        let b = fit(&data, &config).unwrap();
        assert_eq!(a.draws, b.draws);
        assert_eq!(a.config, b.config);
    }

    #[test]
    fn predict_averages_retained_sweeps() {
        let forests = vec![vec![Tree::leaf(1.0, 1)], vec![Tree::leaf(3.0, 1)]];
        let draws = PosteriorDraws::from_parts(forests, vec![1.0, 1.0, 1.0], 1, 3, 1).unwrap();
        let x = Matrix::from_columns(vec![vec![0.0, 5.0]]).unwrap();
        assert_eq!(draws.predict(&x).unwrap(), vec![2.0, 2.0]);

        // column mismatch is rejected
        let bad = Matrix::from_columns(vec![vec![0.0], vec![0.0]]).unwrap();
        assert!(draws.predict(&bad).is_err());
    }

    #[test]
    fn rejects_undersized_data_and_bad_config() {
        let tiny = Dataset::new(Matrix::from_columns(vec![vec![1.0]]).unwrap(), vec![1.0]).unwrap();
        assert!(fit(&tiny, &XbartConfig::default()).is_err());

        let data = toy_dataset(50, 2, 1);
        let bad = XbartConfig {
            burnin: 40,
            num_sweeps: 40,
            ..XbartConfig::default()
        };
        assert!(fit(&data, &bad).is_err());
    }
}
