//! Choosing coupled components: cross-client correlation maps, the greedy
//! row/column-zeroing pick, and the PCA rule for the number of components.

use log::warn;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// `|Pearson(u1[:, r], u2[:, c])|` for every column pair. A constant column
/// correlates 0 with everything.
pub fn pearson_matrix(u1: &Matrix, u2: &Matrix) -> Result<Matrix> {
    if u1.rows() != u2.rows() {
        return Err(Error::shape(format!(
            "correlated matrices need equal row counts, got {} and {}",
            u1.rows(),
            u2.rows()
        )));
    }
    let centered = |m: &Matrix| -> Vec<Option<Vec<f64>>> {
        (0..m.cols())
            .map(|c| {
                let col = m.column(c);
                let mean = col.iter().sum::<f64>() / col.len() as f64;
                let dev: Vec<f64> = col.iter().map(|v| v - mean).collect();
                let norm = dev.iter().map(|v| v * v).sum::<f64>().sqrt();
                if norm > 0.0 && norm.is_finite() {
                    Some(dev.into_iter().map(|v| v / norm).collect())
                } else {
                    warn!("column {c} has zero variance; its correlations are set to 0");
                    None
                }
            })
            .collect()
    };
    let a = centered(u1);
    let b = centered(u2);
    Ok(Matrix::from_fn(u1.cols(), u2.cols(), |r, c| match (&a[r], &b[c]) {
        (Some(x), Some(y)) => {
            let dot: f64 = x.iter().zip(y).map(|(p, q)| p * q).sum();
            dot.abs().min(1.0)
        }
        _ => 0.0,
    }))
}

/// Per-mode correlation maps between the two clients' factor matrices and their sum.
#[derive(Clone, Debug)]
pub struct CorrelationReport {
    pub per_mode: Vec<(usize, Matrix)>,
    pub summed: Matrix,
}

impl CorrelationReport {
    /// `uploads[k]` lists `(mode, factor matrix)` from client `k`, in matching mode order.
    pub fn compute(uploads: [&[(usize, Matrix)]; 2]) -> Result<Self> {
        let [a, b] = uploads;
        if a.len() != b.len() || a.is_empty() {
            return Err(Error::shape(format!(
                "clients uploaded {} and {} factor matrices",
                a.len(),
                b.len()
            )));
        }
        let mut per_mode = Vec::with_capacity(a.len());
        let mut summed: Option<Matrix> = None;
        for ((ma, ua), (mb, ub)) in a.iter().zip(b) {
            if ma != mb {
                return Err(Error::shape(format!("mode {ma} paired with mode {mb}")));
            }
            let p = pearson_matrix(ua, ub)?;
            summed = Some(match summed {
                None => p.clone(),
                Some(mut s) => {
                    if s.shape() != p.shape() {
                        return Err(Error::shape("uploads disagree on the number of components"));
                    }
                    s.as_mut_slice()
                        .iter_mut()
                        .zip(p.as_slice())
                        .for_each(|(x, y)| *x += y);
                    s
                }
            });
            per_mode.push((*ma, p));
        }
        Ok(CorrelationReport {
            per_mode,
            summed: summed.expect("non-empty"),
        })
    }
}

/// Repeatedly takes the largest entry among unused rows and columns, then
/// retires its row and column. Ties go to the smallest `(row, col)`.
pub fn greedy_select(p: &Matrix, count: usize) -> Result<(Vec<usize>, Vec<usize>)> {
    if count > p.rows().min(p.cols()) {
        return Err(Error::InvalidArgument(format!(
            "cannot select {count} pairs from a {}x{} matrix",
            p.rows(),
            p.cols()
        )));
    }
    let mut row_used = vec![false; p.rows()];
    let mut col_used = vec![false; p.cols()];
    let mut rows = Vec::with_capacity(count);
    let mut cols = Vec::with_capacity(count);
    for _ in 0..count {
        let mut best: Option<(usize, usize, f64)> = None;
        for r in (0..p.rows()).filter(|&r| !row_used[r]) {
            for c in (0..p.cols()).filter(|&c| !col_used[c]) {
                let v = p[(r, c)];
                if best.is_none_or(|(_, _, b)| v > b) {
                    best = Some((r, c, v));
                }
            }
        }
        let (r, c, _) = best.expect("count bounded by matrix size");
        row_used[r] = true;
        col_used[c] = true;
        rows.push(r);
        cols.push(c);
    }
    Ok((rows, cols))
}

/// Smallest number of principal components whose cumulative explained
/// variance reaches `threshold`. Columns are the variables; they are
/// mean-centred before the singular values are taken.
pub fn pca_rank(m: &Matrix, threshold: f64) -> Result<usize> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "threshold must lie in (0, 1], got {threshold}"
        )));
    }
    if m.cols() < 2 || m.rows() < 2 {
        return Err(Error::shape(format!(
            "PCA needs at least a 2x2 matrix, got {:?}",
            m.shape()
        )));
    }
    let (rows, cols) = m.shape();
    let mut centered = DMatrix::from_row_slice(rows, cols, m.as_slice());
    for mut col in centered.column_iter_mut() {
        let mean = col.mean();
        col.add_scalar_mut(-mean);
    }
    let sv = centered.singular_values();
    let mut sigma: Vec<f64> = sv.iter().copied().collect();
    sigma.sort_by(|a, b| b.total_cmp(a));
    let top = sigma.first().copied().unwrap_or(0.0);
    if !(top > 0.0) {
        return Err(Error::InvalidArgument("matrix is constant along every column".into()));
    }
    let tol = top * rows.max(cols) as f64 * f64::EPSILON;
    let numerical_rank = sigma.iter().filter(|&&s| s > tol).count();
    let total: f64 = sigma.iter().map(|s| s * s).sum();
    let mut acc = 0.0;
    for (k, s) in sigma.iter().take(numerical_rank).enumerate() {
        acc += s * s;
        if acc / total >= threshold - 1e-12 {
            return Ok(k + 1);
        }
    }
    Ok(numerical_rank)
}

/// Coupled components per mode, and each client's component indices for them.
///
/// `counts[n]` is `L_n` (0 for an uncoupled mode). Mode `n` couples the first
/// `L_n` entries of each location list, so `locations[k]` has length `max L_n`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CouplingSpec {
    pub counts: Vec<usize>,
    pub locations: [Vec<usize>; 2],
}

impl CouplingSpec {
    pub fn new(counts: Vec<usize>, locations: [Vec<usize>; 2], ranks: [usize; 2]) -> Result<Self> {
        let spec = CouplingSpec { counts, locations };
        spec.validate(ranks)?;
        Ok(spec)
    }

    pub fn validate(&self, ranks: [usize; 2]) -> Result<()> {
        validate_counts(&self.counts, ranks)?;
        let width = max_count(&self.counts);
        for (k, loc) in self.locations.iter().enumerate() {
            if loc.len() != width {
                return Err(Error::Config(format!(
                    "client {} has {} locations, expected {width}",
                    k + 1,
                    loc.len()
                )));
            }
            let mut seen = vec![false; ranks[k]];
            for &c in loc {
                if c >= ranks[k] || std::mem::replace(&mut seen[c], true) {
                    return Err(Error::Config(format!(
                        "client {} locations {:?} must be distinct indices below {}",
                        k + 1,
                        loc,
                        ranks[k]
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn coupled_modes(&self) -> Vec<usize> {
        coupled_modes(&self.counts)
    }

    /// Public components of `client` in every mode (empty for uncoupled modes).
    pub fn public_components(&self, client: usize) -> Vec<Vec<usize>> {
        self.counts
            .iter()
            .map(|&l| self.locations[client][..l].to_vec())
            .collect()
    }
}

pub fn coupled_modes(counts: &[usize]) -> Vec<usize> {
    counts
        .iter()
        .enumerate()
        .filter(|(_, &l)| l > 0)
        .map(|(n, _)| n)
        .collect()
}

pub fn max_count(counts: &[usize]) -> usize {
    counts.iter().copied().max().unwrap_or(0)
}

/// Checks `L_n ≤ min(R_1, R_2)` and that at least one mode stays uncoupled.
pub fn validate_counts(counts: &[usize], ranks: [usize; 2]) -> Result<()> {
    let limit = ranks[0].min(ranks[1]);
    if let Some((n, &l)) = counts.iter().enumerate().find(|(_, &l)| l > limit) {
        return Err(Error::Config(format!(
            "mode {} couples {l} components but min(R1, R2) = {limit}",
            n + 1
        )));
    }
    if counts.iter().all(|&l| l > 0) {
        return Err(Error::Config(
            "at least one mode must stay uncoupled to carry component scales".into(),
        ));
    }
    Ok(())
}
