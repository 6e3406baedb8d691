//! Synthetic data-generating processes for the benchmark harness: four true
//! functions over iid standard-normal predictors, with noise scaled to the
//! sampled signal.

use crate::data::{sample_variance, Dataset, Matrix};
use crate::error::{Result, XbartError};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

/// The four true functions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DgpKind {
    /// `x' gamma` with `gamma_j = -2 + 4 (j - 1) / (d - 1)`.
    Linear,
    /// `10 sqrt(a) + sin(5a)`, `a = sum_{j<=10} (x_j - gamma_j)^2`,
    /// `gamma_j = -1.5 + (j - 1) / 3`.
    SingleIndex,
    /// `5 sin(3 x1) + 2 x2^2 + 3 x3 x4`.
    TrigPoly,
    /// `max(x1, x2, x3)`.
    Max,
}

impl DgpKind {
    pub const ALL: [DgpKind; 4] = [
        DgpKind::Linear,
        DgpKind::Max,
        DgpKind::SingleIndex,
        DgpKind::TrigPoly,
    ];

    /// Smallest predictor count the function is defined for.
    pub fn min_arity(&self) -> usize {
        match self {
            DgpKind::Linear => 2,
            DgpKind::SingleIndex => 10,
            DgpKind::TrigPoly => 4,
            DgpKind::Max => 3,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            DgpKind::Linear => "linear",
            DgpKind::SingleIndex => "single_index",
            DgpKind::TrigPoly => "trig_poly",
            DgpKind::Max => "max",
        }
    }
}

impl fmt::Display for DgpKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DgpKind {
    type Err = XbartError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(DgpKind::Linear),
            "single_index" => Ok(DgpKind::SingleIndex),
            "trig_poly" => Ok(DgpKind::TrigPoly),
            "max" => Ok(DgpKind::Max),
            other => Err(XbartError::InvalidInput(format!(
                "unknown DGP '{other}' (expected linear, single_index, trig_poly, or max)"
            ))),
        }
    }
}

/// One synthetic-data configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DgpSpec {
    pub kind: DgpKind,
    /// Training rows; the holdout gets `ceil(n / 4)` extra rows.
    pub n: usize,
    /// Predictor count.
    #[serde(default = "default_dim")]
    pub d: usize,
    /// Noise multiplier kappa: `sigma = kappa * sd(f)` over the training sample.
    pub noise_kappa: f64,
    pub seed: u64,
    /// Scale noise by `kappa * var(f)` instead of `kappa * sd(f)`.
    #[serde(default)]
    pub scale_by_variance: bool,
}

fn default_dim() -> usize {
    30
}

impl DgpSpec {
    pub fn new(kind: DgpKind, n: usize, noise_kappa: f64, seed: u64) -> Self {
        DgpSpec {
            kind,
            n,
            d: default_dim(),
            noise_kappa,
            seed,
            scale_by_variance: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(XbartError::InvalidInput("DGP needs n >= 2".into()));
        }
        if self.d < self.kind.min_arity() {
            return Err(XbartError::InvalidInput(format!(
                "{} needs at least {} predictors, got {}",
                self.kind,
                self.kind.min_arity(),
                self.d
            )));
        }
        if !(self.noise_kappa.is_finite() && self.noise_kappa > 0.0) {
            return Err(XbartError::InvalidInput(
                "noise_kappa must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Generated train/holdout pair. The holdout carries the noiseless function
/// values, which is what the benchmark scores against.
#[derive(Debug, Clone)]
pub struct DgpData {
    pub train: Dataset,
    pub test_x: Matrix,
    pub test_f: Vec<f64>,
    pub sigma_true: f64,
}

/// Evaluates the true function on one row of column storage.
pub fn true_function(kind: DgpKind, columns: &[Vec<f64>], row: usize) -> f64 {
    match kind {
        DgpKind::Linear => {
            let d = columns.len();
            columns
                .iter()
                .enumerate()
                .map(|(j, col)| col[row] * linear_gamma(j, d))
                .sum()
        }
        DgpKind::SingleIndex => {
            let a: f64 = (0..10)
                .map(|j| {
                    let g = -1.5 + j as f64 / 3.0;
                    (columns[j][row] - g).powi(2)
                })
                .sum();
            10.0 * a.sqrt() + (5.0 * a).sin()
        }
        DgpKind::TrigPoly => {
            5.0 * (3.0 * columns[0][row]).sin()
                + 2.0 * columns[1][row].powi(2)
                + 3.0 * columns[2][row] * columns[3][row]
        }
        DgpKind::Max => columns[0][row].max(columns[1][row]).max(columns[2][row]),
    }
}

/// Linear DGP coefficient for 0-based column j of d.
pub fn linear_gamma(j: usize, d: usize) -> f64 {
    -2.0 + 4.0 * j as f64 / (d - 1) as f64
}

/// Draws one train/holdout pair. Generation order is fixed for
/// reproducibility: training predictors column by column, then the noise
/// vector, then the holdout predictors column by column.
pub fn gen_dgp(spec: &DgpSpec) -> Result<DgpData> {
    spec.validate()?;
    let mut rng = ChaCha20Rng::seed_from_u64(spec.seed);
    let n = spec.n;
    let n_test = n.div_ceil(4);

    let draw_cols = |rng: &mut ChaCha20Rng, rows: usize, d: usize| -> Vec<Vec<f64>> {
        (0..d)
            .map(|_| (0..rows).map(|_| rng.sample::<f64, _>(StandardNormal)).collect())
            .collect()
    };

    let train_cols = draw_cols(&mut rng, n, spec.d);
    let f_train: Vec<f64> = (0..n).map(|i| true_function(spec.kind, &train_cols, i)).collect();

    let spread = sample_variance(&f_train);
    let sigma_true = if spec.scale_by_variance {
        spec.noise_kappa * spread
    } else {
        spec.noise_kappa * spread.sqrt()
    };
    let y: Vec<f64> = f_train
        .iter()
        .map(|f| f + sigma_true * rng.sample::<f64, _>(StandardNormal))
        .collect();

    let test_cols = draw_cols(&mut rng, n_test, spec.d);
    let test_f: Vec<f64> = (0..n_test)
        .map(|i| true_function(spec.kind, &test_cols, i))
        .collect();

    Ok(DgpData {
        train: Dataset::new(Matrix::from_columns(train_cols)?, y)?,
        test_x: Matrix::from_columns(test_cols)?,
        test_f,
        sigma_true,
    })
}

/// Root mean squared error between predictions and (noiseless) truth.
pub fn rmse(pred: &[f64], truth: &[f64]) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(XbartError::InvalidInput(format!(
            "length mismatch: {} predictions vs {} truths",
            pred.len(),
            truth.len()
        )));
    }
    if pred.is_empty() {
        return Err(XbartError::InvalidInput("rmse of empty vectors".into()));
    }
    let mse = pred
        .iter()
        .zip(truth)
        .map(|(p, t)| (p - t) * (p - t))
        .sum::<f64>()
        / pred.len() as f64;
    Ok(mse.sqrt())
}
