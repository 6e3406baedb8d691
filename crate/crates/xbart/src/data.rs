//! Datasets, pre-sorted per-variable index arrays, and partition sufficient
//! statistics.
//!
//! The index arrays are the performance kernel of the whole crate: each
//! variable's column is sorted once up front, and node splits "sift" the
//! sorted orderings into the two children with a single linear pass per
//! variable, so cut-point sufficient statistics are always available as
//! cumulative sums over contiguous slices.

use crate::error::{Result, XbartError};

/// Row index into a dataset. 32-bit by default; enable the `row64` feature
/// for datasets with more than 2^31 rows.
#[cfg(not(feature = "row64"))]
pub type RowId = u32;
#[cfg(feature = "row64")]
pub type RowId = u64;

/// Dense column-major matrix of `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    data: Vec<f64>,
    rows: usize,
    cols: usize,
}

impl Matrix {
    /// Builds a matrix from column-major storage (`data[col * rows + row]`).
    pub fn from_col_major(data: Vec<f64>, rows: usize, cols: usize) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(XbartError::InvalidInput(format!(
                "matrix storage has {} entries, expected {} ({} rows x {} cols)",
                data.len(),
                rows * cols,
                rows,
                cols
            )));
        }
        Ok(Matrix { data, rows, cols })
    }

    pub fn from_columns(columns: Vec<Vec<f64>>) -> Result<Self> {
        let cols = columns.len();
        let rows = columns.first().map_or(0, Vec::len);
        if columns.iter().any(|c| c.len() != rows) {
            return Err(XbartError::InvalidInput(
                "matrix columns have unequal lengths".into(),
            ));
        }
        let mut data = Vec::with_capacity(rows * cols);
        for col in &columns {
            data.extend_from_slice(col);
        }
        Ok(Matrix { data, rows, cols })
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        debug_assert!(row < self.rows && col < self.cols);
        self.data[col * self.rows + row]
    }

    #[inline]
    pub fn column(&self, col: usize) -> &[f64] {
        &self.data[col * self.rows..(col + 1) * self.rows]
    }

    /// Copies row `row` into `out` (length `cols`).
    pub fn fill_row(&self, row: usize, out: &mut [f64]) {
        assert_eq!(out.len(), self.cols);
        for (c, slot) in out.iter_mut().enumerate() {
            *slot = self.get(row, c);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Training substrate: predictor matrix `x` (n rows, V columns) plus
/// response vector `y` of length n. All entries must be finite.
#[derive(Debug, Clone)]
pub struct Dataset {
    x: Matrix,
    y: Vec<f64>,
}

impl Dataset {
    pub fn new(x: Matrix, y: Vec<f64>) -> Result<Self> {
        if x.rows() == 0 || x.cols() == 0 {
            return Err(XbartError::InvalidInput(
                "dataset needs at least one row and one predictor column".into(),
            ));
        }
        if y.len() != x.rows() {
            return Err(XbartError::InvalidInput(format!(
                "response length {} does not match row count {}",
                y.len(),
                x.rows()
            )));
        }
        if x.rows() > RowId::MAX as usize {
            return Err(XbartError::InvalidInput(format!(
                "row count {} exceeds the {}-bit row index limit",
                x.rows(),
                std::mem::size_of::<RowId>() * 8
            )));
        }
        if !x.is_finite() {
            return Err(XbartError::InvalidInput(
                "predictor matrix contains non-finite entries".into(),
            ));
        }
        if !y.iter().all(|v| v.is_finite()) {
            return Err(XbartError::InvalidInput(
                "response vector contains non-finite entries".into(),
            ));
        }
        Ok(Dataset { x, y })
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.x.rows()
    }

    #[inline]
    pub fn num_vars(&self) -> usize {
        self.x.cols()
    }

    #[inline]
    pub fn x(&self) -> &Matrix {
        &self.x
    }

    #[inline]
    pub fn y(&self) -> &[f64] {
        &self.y
    }
}

/// Per-variable arrays of row indices in ascending predictor order for one
/// node. `order[v][h]` is the row with the h-th smallest value of variable v
/// among the node's rows; ties are broken by ascending row index, so every
/// ordering is a deterministic permutation of the same row set.
#[derive(Debug, Clone, PartialEq)]
pub struct PresortedIndex {
    order: Vec<Vec<RowId>>,
}

impl PresortedIndex {
    #[inline]
    pub fn node_size(&self) -> usize {
        self.order.first().map_or(0, Vec::len)
    }

    #[inline]
    pub fn num_vars(&self) -> usize {
        self.order.len()
    }

    #[inline]
    pub fn order(&self, var: usize) -> &[RowId] {
        &self.order[var]
    }
}

/// Sorts every variable of the dataset, producing the root-level index.
pub fn presort(dataset: &Dataset) -> PresortedIndex {
    let n = dataset.n();
    let order = (0..dataset.num_vars())
        .map(|v| {
            let col = dataset.x().column(v);
            let mut idx: Vec<RowId> = (0..n as RowId).collect();
            // Stable by row id: sort_by on (value, id) with ids already ascending.
            idx.sort_by(|&a, &b| col[a as usize].total_cmp(&col[b as usize]));
            idx
        })
        .collect();
    PresortedIndex { order }
}

/// Sufficient statistics of a row subset: count and residual sum.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SuffStats {
    pub count: usize,
    pub sum: f64,
}

impl SuffStats {
    pub fn new(count: usize, sum: f64) -> Self {
        SuffStats { count, sum }
    }
}

/// Sample variance (n - 1 denominator); panics on fewer than two values.
pub(crate) fn sample_variance(values: &[f64]) -> f64 {
    assert!(values.len() >= 2, "sample variance needs at least two values");
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
}

/// Read access to one node's per-variable sorted row slices. Implemented by
/// the owned [`PresortedIndex`] and by the grower's flat per-depth arenas.
pub(crate) trait NodeCols {
    fn node_len(&self) -> usize;
    fn col(&self, var: usize) -> &[RowId];
}

impl NodeCols for PresortedIndex {
    #[inline]
    fn node_len(&self) -> usize {
        self.node_size()
    }

    #[inline]
    fn col(&self, var: usize) -> &[RowId] {
        self.order(var)
    }
}

/// Stable partition of one sorted column by a row membership mask.
/// Rows with `mask[row] != 0` go to `left`, the rest to `right`; relative
/// order is preserved, so both outputs stay sorted.
#[inline]
pub(crate) fn sift_column(parent: &[RowId], mask: &[u8], left: &mut [RowId], right: &mut [RowId]) {
    debug_assert_eq!(parent.len(), left.len() + right.len());
    let mut l = 0;
    let mut r = 0;
    for &row in parent {
        if mask[row as usize] != 0 {
            left[l] = row;
            l += 1;
        } else {
            right[r] = row;
            r += 1;
        }
    }
    debug_assert!(l == left.len() && r == right.len());
}

/// One pass over a node's rows in sorted order, emitting the cumulative
/// residual sum at each candidate rank. `ranks` are 1-based, strictly
/// increasing, each `<= col.len() - 1`. Returns the total sum over the node.
#[inline]
pub(crate) fn cumsum_at_ranks(
    residual: &[f64],
    col: &[RowId],
    ranks: &[usize],
    mut emit: impl FnMut(usize, f64),
) -> f64 {
    let mut acc = 0.0;
    let mut next = 0;
    for (h, &row) in col.iter().enumerate() {
        acc += residual[row as usize];
        if next < ranks.len() && h + 1 == ranks[next] {
            emit(next, acc);
            next += 1;
        }
    }
    debug_assert_eq!(next, ranks.len());
    acc
}

/// Splits a node's index at `split_rank` on `split_var`, preserving every
/// variable's sort order. The left child receives exactly the first
/// `split_rank` entries of `order[split_var]` (ties resolved by the stable
/// ordering), the right child the rest.
pub fn sift(
    idx: &PresortedIndex,
    dataset: &Dataset,
    split_var: usize,
    split_rank: usize,
) -> Result<(PresortedIndex, PresortedIndex)> {
    let n_b = idx.node_size();
    if split_var >= idx.num_vars() {
        return Err(XbartError::ContractViolation(format!(
            "split variable {} out of range (V = {})",
            split_var,
            idx.num_vars()
        )));
    }
    if split_rank == 0 || split_rank >= n_b {
        return Err(XbartError::ContractViolation(format!(
            "split rank {} out of range [1, {}]",
            split_rank,
            n_b.saturating_sub(1)
        )));
    }

    let mut mask = vec![0u8; dataset.n()];
    for &row in &idx.order(split_var)[..split_rank] {
        mask[row as usize] = 1;
    }

    let num_vars = idx.num_vars();
    let mut left = vec![vec![0 as RowId; split_rank]; num_vars];
    let mut right = vec![vec![0 as RowId; n_b - split_rank]; num_vars];
    for v in 0..num_vars {
        sift_column(idx.order(v), &mask, &mut left[v], &mut right[v]);
    }
    Ok((
        PresortedIndex { order: left },
        PresortedIndex { order: right },
    ))
}

/// Cumulative-sum sufficient statistics for all candidate ranks of one
/// variable: for rank c, the pair (`n<=`, `s<=`) and its complement
/// (`n>`, `s>` = total - `s<=`), computed in a single pass.
pub fn partial_sums(
    residual: &[f64],
    idx: &PresortedIndex,
    var: usize,
    candidate_ranks: &[usize],
) -> Result<Vec<(SuffStats, SuffStats)>> {
    let n_b = idx.node_size();
    if var >= idx.num_vars() {
        return Err(XbartError::ContractViolation(format!(
            "variable {} out of range (V = {})",
            var,
            idx.num_vars()
        )));
    }
    if !candidate_ranks.windows(2).all(|w| w[0] < w[1]) {
        return Err(XbartError::ContractViolation(
            "candidate ranks must be strictly increasing".into(),
        ));
    }
    if candidate_ranks
        .iter()
        .any(|&c| c == 0 || c >= n_b.max(1))
    {
        return Err(XbartError::ContractViolation(format!(
            "candidate ranks must lie in [1, {}]",
            n_b.saturating_sub(1)
        )));
    }

    let mut left_sums = vec![0.0; candidate_ranks.len()];
    let total = cumsum_at_ranks(residual, idx.order(var), candidate_ranks, |i, s| {
        left_sums[i] = s;
    });
    Ok(candidate_ranks
        .iter()
        .zip(left_sums)
        .map(|(&c, s_le)| {
            (
                SuffStats::new(c, s_le),
                SuffStats::new(n_b - c, total - s_le),
            )
        })
        .collect())
}
