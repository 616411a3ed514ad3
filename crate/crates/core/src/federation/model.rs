use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Columns of one coupled mode: `I_n × L_n`, column `l` belonging to coupled slot `l`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModeBlock {
    pub mode: usize,
    pub columns: Matrix,
}

impl ModeBlock {
    pub fn new(mode: usize, columns: Matrix) -> Self {
        ModeBlock { mode, columns }
    }
}

/// The server's consensus columns `ũ_r^(n)`, one block per coupled mode in mode order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GlobalModel {
    pub blocks: Vec<ModeBlock>,
}

impl GlobalModel {
    pub fn block(&self, mode: usize) -> Option<&ModeBlock> {
        self.blocks.iter().find(|b| b.mode == mode)
    }

    /// `ũ⁰`: the normalized mean of the (normalized) first uploads.
    pub fn from_uploads(uploads: &[&[ModeBlock]]) -> Result<Self> {
        let mean = mean_of_uploads(uploads)?;
        let mut blocks = mean;
        for b in &mut blocks {
            normalize_columns(&mut b.columns)?;
        }
        Ok(GlobalModel { blocks })
    }

    pub fn is_finite(&self) -> bool {
        self.blocks.iter().all(|b| b.columns.is_finite())
    }
}

/// Scales every column to unit L2 norm.
pub fn normalize_columns(m: &mut Matrix) -> Result<()> {
    for c in 0..m.cols() {
        let norm = m.column_norm(c);
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::NonFinite(format!("column {c} has norm {norm}")));
        }
        m.scale_column(c, 1.0 / norm);
    }
    Ok(())
}

fn check_like(reference: &[ModeBlock], other: &[ModeBlock]) -> Result<()> {
    if reference.len() != other.len() {
        return Err(Error::shape(format!(
            "expected {} coupled-mode blocks, got {}",
            reference.len(),
            other.len()
        )));
    }
    for (a, b) in reference.iter().zip(other) {
        if a.mode != b.mode || a.columns.shape() != b.columns.shape() {
            return Err(Error::shape(format!(
                "block for mode {} is {:?}, expected mode {} with {:?}",
                b.mode,
                b.columns.shape(),
                a.mode,
                a.columns.shape()
            )));
        }
    }
    Ok(())
}

/// `(1/K) Σ_k u_k` over normalized uploads.
pub fn mean_of_uploads(uploads: &[&[ModeBlock]]) -> Result<Vec<ModeBlock>> {
    let first = uploads
        .first()
        .ok_or_else(|| Error::Protocol("no client uploads to aggregate".into()))?;
    let mut sum: Vec<ModeBlock> = first
        .iter()
        .map(|b| ModeBlock::new(b.mode, Matrix::zeros(b.columns.rows(), b.columns.cols())))
        .collect();
    for upload in uploads {
        check_like(first, upload)?;
        for (acc, b) in sum.iter_mut().zip(upload.iter()) {
            if !b.columns.is_finite() {
                return Err(Error::NonFinite(format!("upload for mode {}", b.mode)));
            }
            let mut cols = b.columns.clone();
            normalize_columns(&mut cols)?;
            acc.columns
                .as_mut_slice()
                .iter_mut()
                .zip(cols.as_slice())
                .for_each(|(s, v)| *s += v);
        }
    }
    let k = uploads.len() as f64;
    for b in &mut sum {
        b.columns.as_mut_slice().iter_mut().for_each(|v| *v /= k);
    }
    Ok(sum)
}

/// One gradient step on the elastic objective, before renormalization:
/// `ũ − α · ρ (ũ − mean)`.
pub fn sgd_step(global: &GlobalModel, mean: &[ModeBlock], rho: f64, alpha: f64) -> Result<GlobalModel> {
    check_like(&global.blocks, mean)?;
    let blocks = global
        .blocks
        .iter()
        .zip(mean)
        .map(|(g, m)| {
            let data = g
                .columns
                .as_slice()
                .iter()
                .zip(m.columns.as_slice())
                .map(|(&u, &avg)| {
                    let grad = rho * (u - avg);
                    u - alpha * grad
                })
                .collect();
            Matrix::from_vec(g.columns.rows(), g.columns.cols(), data).map(|c| ModeBlock::new(g.mode, c))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(GlobalModel { blocks })
}

/// Server aggregation: normalize uploads, average, take the gradient step and
/// renormalize the result to unit columns.
pub fn server_update_global(
    global: &GlobalModel,
    uploads: &[&[ModeBlock]],
    rho: f64,
    alpha: f64,
) -> Result<GlobalModel> {
    let mean = mean_of_uploads(uploads)?;
    let mut next = sgd_step(global, &mean, rho, alpha)?;
    for b in &mut next.blocks {
        normalize_columns(&mut b.columns)?;
    }
    Ok(next)
}
