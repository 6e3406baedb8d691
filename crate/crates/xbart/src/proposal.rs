//! Grow-from-root proposal densities and the experimental per-sweep
//! Metropolis-Hastings accept/reject step.
//!
//! The density of regrowing a given tree is the product, down the tree, of
//! the Bayes-rule selection probability of each recorded split (or the
//! no-split mass at each leaf) together with the conjugate normal density of
//! each leaf mean. Evaluation reuses the grower's own node machinery, so the
//! density is computed by the exact code path that samples. Forest-level
//! densities chain tree evaluations through the Algorithm-style residual
//! updates. Only `mtry = V` is supported: with a proper subset the density
//! would have to marginalize over subset draws.

use crate::criterion::{depth_split_prob, normal_logpdf};
use crate::data::{presort, Dataset, PresortedIndex};
use crate::error::{Result, XbartError};
use crate::sampler::ResolvedConfig;
use crate::tree::{GrowConfig, GrowLogParts, Node, Tree, TreeGrower};
use rand::Rng;

/// Log-scale density value; `-inf` marks a zero-probability event.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogDensity(pub f64);

impl LogDensity {
    pub fn value(&self) -> f64 {
        self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.is_finite()
    }
}

/// A forest (trees with leaf means) frozen together with the sigma^2 and tau
/// under which it was, or would be, grown.
#[derive(Debug, Clone, PartialEq)]
pub struct ForestSnapshot {
    trees: Vec<Tree>,
    sigma2: f64,
    tau: f64,
}

impl ForestSnapshot {
    pub fn new(trees: Vec<Tree>, sigma2: f64, tau: f64) -> Self {
        ForestSnapshot { trees, sigma2, tau }
    }

    pub fn trees(&self) -> &[Tree] {
        &self.trees
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn num_trees(&self) -> usize {
        self.trees.len()
    }

    pub fn into_trees(self) -> Vec<Tree> {
        self.trees
    }

    /// Sum of per-tree fitted values over every dataset row.
    pub fn fitted_values(&self, dataset: &Dataset) -> Vec<f64> {
        let mut fit = vec![0.0; dataset.n()];
        for tree in &self.trees {
            for (row, slot) in fit.iter_mut().enumerate() {
                *slot += tree.predict_row(dataset.x(), row);
            }
        }
        fit
    }
}

/// Log density of `grow_from_root` producing exactly `tree` from `residual`,
/// split into structure and leaf-mean parts. A recorded split that is not
/// among the node's candidates makes the whole density `-inf`.
pub fn grow_prob_parts(
    tree: &Tree,
    residual: &[f64],
    idx: &PresortedIndex,
    dataset: &Dataset,
    config: &GrowConfig,
    sigma2: f64,
) -> Result<GrowLogParts> {
    if config.mtry != dataset.num_vars() {
        return Err(XbartError::ContractViolation(
            "grow_prob requires mtry = V".into(),
        ));
    }
    let mut grower = TreeGrower::new(config.clone(), dataset.n(), dataset.num_vars())?;
    grower.eval_log_density(tree, residual, idx, dataset, 0, sigma2)
}

/// Total log proposal density of one tree (structure and leaf means).
pub fn grow_prob(
    tree: &Tree,
    residual: &[f64],
    idx: &PresortedIndex,
    dataset: &Dataset,
    config: &GrowConfig,
    sigma2: f64,
) -> Result<LogDensity> {
    Ok(LogDensity(
        grow_prob_parts(tree, residual, idx, dataset, config, sigma2)?.total(),
    ))
}

/// Log density `q(F', F)` of proposing forest `proposed` starting from the
/// residuals implied by `current`: tree l of the proposal is evaluated
/// against `y - f(F_(l+1):L) - f(F'_1:(l-1))`, exactly the residual the
/// grow-from-root sweep would have seen.
pub fn proposal_density(
    current: &ForestSnapshot,
    proposed: &ForestSnapshot,
    dataset: &Dataset,
    config: &ResolvedConfig,
) -> Result<LogDensity> {
    if current.num_trees() != proposed.num_trees() {
        return Err(XbartError::ContractViolation(format!(
            "snapshots hold {} and {} trees",
            current.num_trees(),
            proposed.num_trees()
        )));
    }
    if config.mtry != dataset.num_vars() {
        return Err(XbartError::ContractViolation(
            "proposal_density requires mtry = V".into(),
        ));
    }
    let idx = presort(dataset);
    let mut grower = TreeGrower::new(config.grow_config(), dataset.n(), dataset.num_vars())?;
    let sigma2 = current.sigma2();

    let tree_fit = |tree: &Tree| -> Vec<f64> {
        (0..dataset.n())
            .map(|row| tree.predict_row(dataset.x(), row))
            .collect()
    };
    let cur_fits: Vec<Vec<f64>> = current.trees().iter().map(tree_fit).collect();
    let prop_fits: Vec<Vec<f64>> = proposed.trees().iter().map(tree_fit).collect();

    // r <- y - f(F_2:L)
    let mut residual: Vec<f64> = dataset.y().to_vec();
    for fit in cur_fits.iter().skip(1) {
        for (r, f) in residual.iter_mut().zip(fit) {
            *r -= f;
        }
    }

    let mut total = 0.0;
    for l in 0..proposed.num_trees() {
        let parts =
            grower.eval_log_density(proposed.trees().get(l).unwrap(), &residual, &idx, dataset, 0, sigma2)?;
        total += parts.total();
        if !total.is_finite() {
            return Ok(LogDensity(f64::NEG_INFINITY));
        }
        // r <- y - f(F_(l+2):L) - f(F'_1:(l+1)); incrementally r += f_(l+1) - f'_l
        if l + 1 < proposed.num_trees() {
            for ((r, cf), pf) in residual
                .iter_mut()
                .zip(&cur_fits[l + 1])
                .zip(&prop_fits[l])
            {
                *r += cf - pf;
            }
        }
    }
    Ok(LogDensity(total))
}

/// Log prior of a forest: depth-prior split/no-split probabilities at every
/// node plus mean-zero normal densities of the leaf means.
pub fn forest_log_prior(snapshot: &ForestSnapshot, alpha: f64, beta: f64) -> f64 {
    let mut total = 0.0;
    for tree in snapshot.trees() {
        for node in tree.nodes() {
            match node {
                Node::Internal { depth, .. } => {
                    total += depth_split_prob(alpha, beta, *depth).ln();
                }
                Node::Leaf { mu, depth } => {
                    total += (1.0 - depth_split_prob(alpha, beta, *depth)).ln();
                    total += normal_logpdf(*mu, 0.0, snapshot.tau());
                }
            }
        }
    }
    total
}

/// Gaussian log likelihood of the data at the forest's fitted values.
pub fn forest_log_likelihood(snapshot: &ForestSnapshot, dataset: &Dataset) -> f64 {
    let fit = snapshot.fitted_values(dataset);
    dataset
        .y()
        .iter()
        .zip(&fit)
        .map(|(y, f)| normal_logpdf(*y, *f, snapshot.sigma2()))
        .sum()
}

/// Result of one sweep-level MH decision.
#[derive(Debug, Clone)]
pub struct MhOutcome {
    pub accepted: bool,
    pub log_ratio: f64,
    pub diagnostic: Option<String>,
}

/// Evaluates the sweep-level MH ratio
/// `[p(y|F') p(F') q(F, F')] / [p(y|F) p(F) q(F', F)]`
/// and draws the accept decision. sigma^2 and the variable weights are held
/// fixed across the decision; both snapshots must carry the same sigma^2.
pub fn mh_accept_decision<R: Rng + ?Sized>(
    current: &ForestSnapshot,
    proposed: &ForestSnapshot,
    dataset: &Dataset,
    config: &ResolvedConfig,
    rng: &mut R,
) -> Result<MhOutcome> {
    let forward = proposal_density(current, proposed, dataset, config)?; // q(F', F)
    let reverse = proposal_density(proposed, current, dataset, config)?; // q(F, F')
    let u: f64 = rng.random();

    if !forward.is_finite() && !reverse.is_finite() {
        return Ok(MhOutcome {
            accepted: false,
            log_ratio: f64::NAN,
            diagnostic: Some(
                "both proposal directions have zero probability; rejecting".into(),
            ),
        });
    }
    if !forward.is_finite() {
        // the sampler cannot produce such a proposal; treat as certain accept
        // of a zero-probability forward move only if the reverse is finite
        return Ok(MhOutcome {
            accepted: true,
            log_ratio: f64::INFINITY,
            diagnostic: Some("forward proposal density is zero".into()),
        });
    }

    let log_target_proposed =
        forest_log_likelihood(proposed, dataset) + forest_log_prior(proposed, config.alpha, config.beta);
    let log_target_current =
        forest_log_likelihood(current, dataset) + forest_log_prior(current, config.alpha, config.beta);
    let log_ratio =
        log_target_proposed + reverse.value() - log_target_current - forward.value();

    let accepted = log_ratio >= 0.0 || u.ln() < log_ratio;
    Ok(MhOutcome {
        accepted,
        log_ratio,
        diagnostic: None,
    })
}

/// Sweep-level MH accept/reject: returns the accepted snapshot.
pub fn mh_sweep_accept<R: Rng + ?Sized>(
    current: &ForestSnapshot,
    proposed: &ForestSnapshot,
    dataset: &Dataset,
    config: &ResolvedConfig,
    rng: &mut R,
) -> Result<ForestSnapshot> {
    let outcome = mh_accept_decision(current, proposed, dataset, config, rng)?;
    Ok(if outcome.accepted {
        proposed.clone()
    } else {
        current.clone()
    })
}
