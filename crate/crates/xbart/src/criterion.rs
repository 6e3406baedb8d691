//! Integrated-likelihood split criterion and cut-point sampling.
//!
//! With leaf means integrated out, a candidate partition of a node scores
//! per child as
//!
//! ```text
//! 1/2 [ ln( sigma^2 / (sigma^2 + tau n) ) + tau s^2 / ( sigma^2 (sigma^2 + tau n) ) ]
//! ```
//!
//! where `n` and `s` are the child's row count and residual sum. The no-split
//! option scores the undivided node and carries weight `kappa(0)` per
//! considered variable, with `kappa(0)` derived from the depth prior. One
//! (variable, cut-point) entry — or no-split — is then sampled with
//! probability proportional to `exp(loglik) * weight`, in the log domain.

use crate::data::{cumsum_at_ranks, NodeCols, SuffStats};
use crate::error::{Result, XbartError};
use rand::Rng;

/// Parameters the criterion depends on at one node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CriterionParams {
    /// Error variance sigma^2 (> 0).
    pub sigma2: f64,
    /// Leaf-mean prior variance tau (>= 0).
    pub tau: f64,
    /// Depth-prior base alpha in (0, 1]; alpha = 1 forces splitting and is
    /// intended for test configurations only.
    pub alpha: f64,
    /// Depth-prior exponent beta (>= 0).
    pub beta: f64,
    /// Depth of the node being scored.
    pub depth: u32,
}

impl CriterionParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma2.is_finite() && self.sigma2 > 0.0) {
            return Err(XbartError::ContractViolation(format!(
                "sigma2 must be finite and positive, got {}",
                self.sigma2
            )));
        }
        if !(self.tau.is_finite() && self.tau >= 0.0) {
            return Err(XbartError::ContractViolation(format!(
                "tau must be finite and non-negative, got {}",
                self.tau
            )));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(XbartError::ContractViolation(format!(
                "alpha must lie in (0, 1], got {}",
                self.alpha
            )));
        }
        if !(self.beta.is_finite() && self.beta >= 0.0) {
            return Err(XbartError::ContractViolation(format!(
                "beta must be finite and non-negative, got {}",
                self.beta
            )));
        }
        Ok(())
    }
}

/// Prior probability that a node at `depth` is internal: alpha (1 + d)^(-beta).
#[inline]
pub fn depth_split_prob(alpha: f64, beta: f64, depth: u32) -> f64 {
    alpha * (1.0 + depth as f64).powf(-beta)
}

/// Criterion contribution of one child: 1/2 [ ln(s2/(s2+tau n)) + tau s^2/(s2 (s2+tau n)) ].
#[inline]
fn child_term(stats: SuffStats, sigma2: f64, tau: f64) -> f64 {
    let denom = sigma2 + tau * stats.count as f64;
    0.5 * ((sigma2 / denom).ln() + tau * stats.sum * stats.sum / (sigma2 * denom))
}

/// Log integrated likelihood of a binary partition, up to the shared constant
/// that does not depend on the partition. Both children must be nonempty.
pub fn split_loglik(left: SuffStats, right: SuffStats, params: &CriterionParams) -> Result<f64> {
    params.validate()?;
    if left.count == 0 || right.count == 0 {
        return Err(XbartError::ContractViolation(
            "split_loglik requires both children nonempty".into(),
        ));
    }
    Ok(child_term(left, params.sigma2, params.tau) + child_term(right, params.sigma2, params.tau))
}

/// Log integrated likelihood of leaving the node undivided.
pub fn nosplit_loglik(whole: SuffStats, params: &CriterionParams) -> Result<f64> {
    params.validate()?;
    if whole.count == 0 {
        return Err(XbartError::ContractViolation(
            "nosplit_loglik requires a nonempty node".into(),
        ));
    }
    Ok(child_term(whole, params.sigma2, params.tau))
}

/// Aggregate weight of the shared no-split entry:
/// `m * (1 - alpha(1+d)^-beta) / (alpha(1+d)^-beta)`, where `m` is the number
/// of variables in the candidate table (the Bayes-rule denominator sums the
/// null cut-point once per variable).
pub fn nosplit_weight(params: &CriterionParams, num_vars_considered: usize) -> f64 {
    let p = depth_split_prob(params.alpha, params.beta, params.depth);
    num_vars_considered as f64 * (1.0 - p) / p
}

/// Outcome of sampling from a candidate table.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CutChoice {
    Split { var: usize, rank: usize },
    NoSplit,
}

/// Log-domain weights for every candidate cut-point of a node plus the shared
/// no-split entry. Entry order is `vars x ranks` (rank fastest) with the
/// no-split entry last. Buffers are reused across `rebuild` calls.
#[derive(Debug, Clone, Default)]
pub struct CutCandidateTable {
    vars: Vec<usize>,
    ranks: Vec<usize>,
    left_sums: Vec<f64>,
    log_weights: Vec<f64>,
    rank_log: Vec<f64>,
    rank_coef: Vec<f64>,
    node_stats: SuffStats,
    nosplit_loglik: f64,
    nosplit_weight: f64,
}

impl CutCandidateTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// Rebuilds the table for one node.
    ///
    /// `vars` is the sampled variable subset (table order), `ranks` the shared
    /// candidate ranks (1-based, strictly increasing, all `< node size`), and
    /// `null_multiplier` scales the aggregate no-split weight. The node total
    /// is accumulated over variable 0's ordering so it does not depend on the
    /// sampled subset.
    pub(crate) fn rebuild<N: NodeCols>(
        &mut self,
        residual: &[f64],
        node: &N,
        vars: &[usize],
        ranks: &[usize],
        params: &CriterionParams,
        null_multiplier: f64,
    ) {
        let n_b = node.node_len();
        debug_assert!(n_b >= 1);
        debug_assert!(ranks.iter().all(|&c| c >= 1 && c < n_b));

        let sigma2 = params.sigma2;
        let tau = params.tau;

        self.vars.clear();
        self.vars.extend_from_slice(vars);
        self.ranks.clear();
        self.ranks.extend_from_slice(ranks);

        let total: f64 = node.col(0).iter().map(|&r| residual[r as usize]).sum();
        self.node_stats = SuffStats::new(n_b, total);

        // Per-rank terms shared across variables: the log and quadratic
        // coefficients depend only on the child counts.
        let nc = ranks.len();
        self.rank_log.clear();
        self.rank_coef.clear();
        for &c in ranks {
            for count in [c, n_b - c] {
                let denom = sigma2 + tau * count as f64;
                self.rank_log.push((sigma2 / denom).ln());
                self.rank_coef.push(tau / (sigma2 * denom));
            }
        }

        self.left_sums.clear();
        self.left_sums.resize(vars.len() * nc, 0.0);
        for (vi, &v) in vars.iter().enumerate() {
            let out = &mut self.left_sums[vi * nc..(vi + 1) * nc];
            cumsum_at_ranks(residual, node.col(v), ranks, |i, s| out[i] = s);
        }

        self.log_weights.clear();
        self.log_weights.reserve(vars.len() * nc + 1);
        for vi in 0..vars.len() {
            for ci in 0..nc {
                let s_le = self.left_sums[vi * nc + ci];
                let s_gt = total - s_le;
                let ll = 0.5
                    * (self.rank_log[2 * ci]
                        + self.rank_coef[2 * ci] * s_le * s_le
                        + self.rank_log[2 * ci + 1]
                        + self.rank_coef[2 * ci + 1] * s_gt * s_gt);
                self.log_weights.push(ll);
            }
        }

        let denom = sigma2 + tau * n_b as f64;
        self.nosplit_loglik = 0.5 * ((sigma2 / denom).ln() + tau * total * total / (sigma2 * denom));
        self.nosplit_weight = nosplit_weight(params, vars.len().max(1)) * null_multiplier;
        self.log_weights
            .push(self.nosplit_loglik + self.nosplit_weight.ln());
    }

    #[inline]
    pub fn num_candidates(&self) -> usize {
        self.vars.len() * self.ranks.len()
    }

    pub fn node_stats(&self) -> SuffStats {
        self.node_stats
    }

    pub fn nosplit_loglik(&self) -> f64 {
        self.nosplit_loglik
    }

    pub fn nosplit_weight(&self) -> f64 {
        self.nosplit_weight
    }

    /// Log criterion value of one active candidate.
    pub fn candidate_loglik(&self, vi: usize, ci: usize) -> f64 {
        self.log_weights[vi * self.ranks.len() + ci]
    }

    fn choice_index(&self, choice: &CutChoice) -> Option<usize> {
        match choice {
            CutChoice::NoSplit => Some(self.log_weights.len() - 1),
            CutChoice::Split { var, rank } => {
                let vi = self.vars.iter().position(|v| v == var)?;
                let ci = self.ranks.iter().position(|c| c == rank)?;
                Some(vi * self.ranks.len() + ci)
            }
        }
    }

    /// Log selection probability of `choice` under the table, or `-inf` if
    /// the choice is not among the candidates.
    pub fn log_prob(&self, choice: &CutChoice) -> f64 {
        match self.choice_index(choice) {
            Some(i) => self.log_weights[i] - log_sum_exp(&self.log_weights),
            None => f64::NEG_INFINITY,
        }
    }

    /// Normalized selection probabilities in entry order (no-split last).
    pub fn selection_probabilities(&self) -> Vec<f64> {
        normalized_probabilities(&self.log_weights)
    }

    pub(crate) fn sample_with_scratch<R: Rng + ?Sized>(
        &self,
        scratch: &mut Vec<f64>,
        rng: &mut R,
    ) -> Result<CutChoice> {
        let i = sample_index_from_log_weights(&self.log_weights, scratch, rng)?;
        Ok(if i == self.log_weights.len() - 1 {
            CutChoice::NoSplit
        } else {
            let nc = self.ranks.len();
            CutChoice::Split {
                var: self.vars[i / nc],
                rank: self.ranks[i % nc],
            }
        })
    }
}

/// Samples one entry of the table with probability proportional to
/// `exp(loglik) * weight`, stably via max-subtraction.
pub fn sample_cutpoint<R: Rng + ?Sized>(
    table: &CutCandidateTable,
    rng: &mut R,
) -> Result<CutChoice> {
    let mut scratch = Vec::with_capacity(table.log_weights.len());
    table.sample_with_scratch(&mut scratch, rng)
}

/// Log density of N(mean, var) at x.
#[inline]
pub(crate) fn normal_logpdf(x: f64, mean: f64, var: f64) -> f64 {
    let d = x - mean;
    -0.5 * ((2.0 * std::f64::consts::PI * var).ln() + d * d / var)
}

/// log(sum(exp(xs))) with max-subtraction; -inf entries contribute nothing.
pub(crate) fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let sum: f64 = xs.iter().map(|&x| (x - max).exp()).sum();
    max + sum.ln()
}

/// Probabilities proportional to exp(xs), normalized.
pub(crate) fn normalized_probabilities(xs: &[f64]) -> Vec<f64> {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return vec![0.0; xs.len()];
    }
    let mut probs: Vec<f64> = xs.iter().map(|&x| (x - max).exp()).collect();
    let sum: f64 = probs.iter().sum();
    for p in &mut probs {
        *p /= sum;
    }
    probs
}

/// Inverse-CDF draw over weights proportional to exp(log_weights).
/// Errors if every weight is zero.
pub(crate) fn sample_index_from_log_weights<R: Rng + ?Sized>(
    log_weights: &[f64],
    scratch: &mut Vec<f64>,
    rng: &mut R,
) -> Result<usize> {
    let max = log_weights
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(XbartError::ContractViolation(
            "cannot sample: all candidate weights are zero".into(),
        ));
    }
    scratch.clear();
    let mut total = 0.0;
    for &lw in log_weights {
        total += (lw - max).exp();
        scratch.push(total);
    }
    let u = rng.random::<f64>() * total;
    // first cumulative value >= u; the final entry always qualifies
    let pos = scratch.partition_point(|&c| c < u);
    Ok(pos.min(log_weights.len() - 1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{presort, Dataset, Matrix};
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn params(sigma2: f64, tau: f64) -> CriterionParams {
        CriterionParams {
            sigma2,
            tau,
            alpha: 0.95,
            beta: 1.25,
            depth: 0,
        }
    }

    #[test]
    fn zero_tau_criterion_vanishes() {
        let p = params(2.5, 0.0);
        let l = SuffStats::new(3, 4.0);
        let r = SuffStats::new(5, -2.0);
        assert_eq!(split_loglik(l, r, &p).unwrap(), 0.0);
        assert_eq!(nosplit_loglik(l, &p).unwrap(), 0.0);
    }

    #[test]
    fn split_loglik_hand_value() {
        let p = params(1.0, 1.0);
        let s = SuffStats::new(1, 0.0);
        assert_relative_eq!(
            split_loglik(s, s, &p).unwrap(),
            (0.5f64).ln(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn nosplit_loglik_hand_value() {
        let p = params(1.0, 1.0);
        let s = SuffStats::new(2, 2.0);
        let expect = 0.5 * ((1.0f64 / 3.0).ln() + 4.0 / 3.0);
        assert_relative_eq!(nosplit_loglik(s, &p).unwrap(), expect, epsilon = 1e-12);
        assert_relative_eq!(expect, 0.117360, epsilon = 1e-6);
    }

    #[test]
    fn split_is_sum_of_child_terms() {
        let p = params(1.7, 0.4);
        let l = SuffStats::new(4, 2.5);
        let r = SuffStats::new(9, -1.5);
        let sum = nosplit_loglik(l, &p).unwrap() + nosplit_loglik(r, &p).unwrap();
        assert_relative_eq!(split_loglik(l, r, &p).unwrap(), sum, epsilon = 1e-12);
    }

    #[test]
    fn split_loglik_rejects_empty_child() {
        let p = params(1.0, 1.0);
        assert!(split_loglik(SuffStats::new(0, 0.0), SuffStats::new(2, 1.0), &p).is_err());
    }

    #[test]
    fn nosplit_weight_values() {
        let mut p = params(1.0, 1.0);
        assert_relative_eq!(nosplit_weight(&p, 1), 0.05 / 0.95, epsilon = 1e-12);
        assert_relative_eq!(nosplit_weight(&p, 1), 0.0526316, epsilon = 1e-6);

        p.depth = 3;
        let expect = 30.0 * (4.0f64.powf(1.25) / 0.95 - 1.0);
        assert_relative_eq!(nosplit_weight(&p, 30), expect, epsilon = 1e-9);
        assert_relative_eq!(expect, 148.63750, epsilon = 1e-4);

        // monotone increase in depth
        let mut prev = 0.0;
        for d in 0..8 {
            p.depth = d;
            let w = nosplit_weight(&p, 30);
            assert!(w > prev);
            prev = w;
        }

        p.alpha = 1.0;
        p.beta = 0.0;
        p.depth = 5;
        assert_eq!(nosplit_weight(&p, 30), 0.0);
    }

    #[test]
    fn monotone_in_left_sum_squared() {
        let p = params(1.3, 0.8);
        let r = SuffStats::new(6, 1.0);
        let mut prev = f64::NEG_INFINITY;
        for s in [0.0, 0.5, 1.0, 2.0, 4.0, 8.0] {
            let ll = split_loglik(SuffStats::new(5, s), r, &p).unwrap();
            assert!(ll >= prev);
            prev = ll;
        }
    }

    #[test]
    fn shift_invariance_of_probabilities() {
        let lw = [0.3, -1.2, 2.5, 0.0];
        let shifted: Vec<f64> = lw.iter().map(|x| x + 123.456).collect();
        let p0 = normalized_probabilities(&lw);
        let p1 = normalized_probabilities(&shifted);
        for (a, b) in p0.iter().zip(&p1) {
            assert_relative_eq!(a, b, epsilon = 1e-12);
        }
        assert_relative_eq!(p0.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn sampling_matches_analytic_frequencies() {
        // weights 1:2:3 -> probabilities 1/6, 2/6, 3/6
        let lw = [1.0f64.ln(), 2.0f64.ln(), 3.0f64.ln()];
        let mut rng = ChaCha20Rng::seed_from_u64(42);
        let mut scratch = Vec::new();
        let mut counts = [0usize; 3];
        let draws = 100_000;
        for _ in 0..draws {
            counts[sample_index_from_log_weights(&lw, &mut scratch, &mut rng).unwrap()] += 1;
        }
        for (i, p) in [1.0 / 6.0, 2.0 / 6.0, 3.0 / 6.0].iter().enumerate() {
            let se = (p * (1.0 - p) / draws as f64).sqrt();
            let freq = counts[i] as f64 / draws as f64;
            assert!(
                (freq - p).abs() <= 3.0 * se,
                "entry {i}: freq {freq} vs p {p}"
            );
        }
    }

    #[test]
    fn table_matches_direct_formula_and_samples_nosplit_when_empty() {
        let d = Dataset::new(
            Matrix::from_columns(vec![vec![0.1, 0.4, 0.2, 0.9], vec![1.0, -1.0, 2.0, 0.5]])
                .unwrap(),
            vec![0.0; 4],
        )
        .unwrap();
        let idx = presort(&d);
        let resid = [1.0, -0.5, 0.25, 2.0];
        let p = params(0.7, 0.9);

        let mut table = CutCandidateTable::new();
        table.rebuild(&resid, &idx, &[0, 1], &[1, 2, 3], &p, 1.0);

        for (vi, &v) in [0usize, 1].iter().enumerate() {
            let stats = crate::data::partial_sums(&resid, &idx, v, &[1, 2, 3]).unwrap();
            for (ci, &(l, r)) in stats.iter().enumerate() {
                let direct = split_loglik(l, r, &p).unwrap();
                assert_relative_eq!(table.candidate_loglik(vi, ci), direct, epsilon = 1e-10);
            }
        }
        let probs = table.selection_probabilities();
        assert_relative_eq!(probs.iter().sum::<f64>(), 1.0, epsilon = 1e-12);

        // no active candidates -> the no-split entry is certain
        let mut empty = CutCandidateTable::new();
        empty.rebuild(&resid, &idx, &[], &[], &p, 1.0);
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        for _ in 0..32 {
            assert_eq!(sample_cutpoint(&empty, &mut rng).unwrap(), CutChoice::NoSplit);
        }
        assert_relative_eq!(empty.log_prob(&CutChoice::NoSplit), 0.0, epsilon = 1e-12);
    }
}
