//! Seeded benchmark harness: runs (DGP x config) cells over replications,
//! scoring holdout RMSE against the noiseless truth and recording wall-clock
//! times.

use crate::dgp::{gen_dgp, rmse, DgpSpec};
use crate::error::{Result, XbartError};
use crate::sampler::{fit, XbartConfig};
use rayon::prelude::*;
use std::fmt::Write as _;
use std::io::Write;
use std::time::Instant;

/// One benchmark cell: a data-generating process paired with a fit
/// configuration.
#[derive(Debug, Clone)]
pub struct BenchCell {
    pub dgp: DgpSpec,
    pub config: XbartConfig,
}

/// One (cell, replication) measurement.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub dgp: String,
    pub n: usize,
    pub kappa: f64,
    pub rep: usize,
    pub rmse: f64,
    pub fit_seconds: f64,
    pub predict_seconds: f64,
    /// Mean of the post-burn-in sigma^2 trace (diagnostic).
    pub sigma2_mean: f64,
    /// True noise level the replication was generated with.
    pub sigma_true: f64,
}

/// Per-cell aggregate over the completed replications.
#[derive(Debug, Clone, PartialEq)]
pub struct CellSummary {
    pub dgp: String,
    pub n: usize,
    pub kappa: f64,
    pub reps: usize,
    pub mean_rmse: f64,
    pub se_rmse: f64,
    pub mean_fit_seconds: f64,
    pub mean_predict_seconds: f64,
}

/// A failed (cell, replication) run; the suite continues past failures.
#[derive(Debug, Clone)]
pub struct BenchFailure {
    pub cell: usize,
    pub rep: usize,
    pub error: String,
}

#[derive(Debug, Clone, Default)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
    pub summaries: Vec<CellSummary>,
    pub failures: Vec<BenchFailure>,
}

/// Counter-based seed derivation: one splitmix64 step per mixed-in term, so
/// every (base, cell, rep) triple maps to a distinct stream.
pub fn derive_seed(base: u64, cell: u64, rep: u64) -> u64 {
    fn splitmix64(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    splitmix64(splitmix64(splitmix64(base) ^ cell) ^ rep)
}

fn run_one(cell_index: usize, cell: &BenchCell, rep: usize) -> Result<BenchRow> {
    let mut dgp = cell.dgp.clone();
    dgp.seed = derive_seed(cell.dgp.seed, cell_index as u64, rep as u64);
    let data = gen_dgp(&dgp)?;

    let mut config = cell.config.clone();
    config.seed = derive_seed(cell.config.seed.wrapping_add(1), cell_index as u64, rep as u64);

    let t0 = Instant::now();
    let out = fit(&data.train, &config)?;
    let fit_seconds = t0.elapsed().as_secs_f64();

    let t1 = Instant::now();
    let pred = out.draws.predict(&data.test_x)?;
    let predict_seconds = t1.elapsed().as_secs_f64();

    Ok(BenchRow {
        dgp: dgp.kind.name().to_string(),
        n: dgp.n,
        kappa: dgp.noise_kappa,
        rep,
        rmse: rmse(&pred, &data.test_f)?,
        fit_seconds,
        predict_seconds,
        sigma2_mean: out.draws.sigma2_posterior_mean(),
        sigma_true: data.sigma_true,
    })
}

/// Sample standard error of the mean; zero for a single value.
pub fn standard_error(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (var / n as f64).sqrt()
}

/// Runs every (cell, replication) pair; independent cells run in parallel.
/// Individual failures are recorded and the suite continues.
pub fn run_benchmark(cells: &[BenchCell], replications: usize) -> Result<BenchReport> {
    if cells.is_empty() {
        return Err(XbartError::InvalidInput("benchmark suite is empty".into()));
    }
    if replications == 0 {
        return Err(XbartError::InvalidInput("replications must be >= 1".into()));
    }
    let tasks: Vec<(usize, usize)> = (0..cells.len())
        .flat_map(|c| (0..replications).map(move |r| (c, r)))
        .collect();
    let results: Vec<(usize, usize, Result<BenchRow>)> = tasks
        .par_iter()
        .map(|&(c, r)| (c, r, run_one(c, &cells[c], r)))
        .collect();

    let mut report = BenchReport::default();
    let mut per_cell: Vec<Vec<BenchRow>> = vec![Vec::new(); cells.len()];
    for (c, r, result) in results {
        match result {
            Ok(row) => per_cell[c].push(row),
            Err(e) => report.failures.push(BenchFailure {
                cell: c,
                rep: r,
                error: e.to_string(),
            }),
        }
    }
    for (c, mut rows) in per_cell.into_iter().enumerate() {
        rows.sort_by_key(|r| r.rep);
        if !rows.is_empty() {
            let rmses: Vec<f64> = rows.iter().map(|r| r.rmse).collect();
            report.summaries.push(CellSummary {
                dgp: rows[0].dgp.clone(),
                n: cells[c].dgp.n,
                kappa: cells[c].dgp.noise_kappa,
                reps: rows.len(),
                mean_rmse: rmses.iter().sum::<f64>() / rmses.len() as f64,
                se_rmse: standard_error(&rmses),
                mean_fit_seconds: rows.iter().map(|r| r.fit_seconds).sum::<f64>()
                    / rows.len() as f64,
                mean_predict_seconds: rows.iter().map(|r| r.predict_seconds).sum::<f64>()
                    / rows.len() as f64,
            });
        }
        report.rows.extend(rows);
    }
    Ok(report)
}

impl BenchReport {
    /// Writes the per-replication rows as CSV.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record([
            "dgp",
            "n",
            "kappa",
            "rep",
            "rmse",
            "fit_seconds",
            "predict_seconds",
        ])
        .map_err(csv_err)?;
        for r in &self.rows {
            w.write_record([
                r.dgp.clone(),
                r.n.to_string(),
                r.kappa.to_string(),
                r.rep.to_string(),
                r.rmse.to_string(),
                r.fit_seconds.to_string(),
                r.predict_seconds.to_string(),
            ])
            .map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Human-readable aligned summary.
    pub fn summary_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<14} {:>8} {:>6} {:>5} {:>10} {:>10} {:>9} {:>12}",
            "dgp", "n", "kappa", "reps", "rmse", "se", "fit_s", "predict_s"
        );
        for s in &self.summaries {
            let _ = writeln!(
                out,
                "{:<14} {:>8} {:>6} {:>5} {:>10.4} {:>10.4} {:>9.2} {:>12.3}",
                s.dgp, s.n, s.kappa, s.reps, s.mean_rmse, s.se_rmse, s.mean_fit_seconds,
                s.mean_predict_seconds
            );
        }
        for f in &self.failures {
            let _ = writeln!(out, "FAILED cell {} rep {}: {}", f.cell, f.rep, f.error);
        }
        out
    }
}

fn csv_err(e: csv::Error) -> XbartError {
    XbartError::InvalidInput(format!("csv write failed: {e}"))
}
