//! Shared fixtures for the benchmarks.

use fcncp::{init_factors, DenseTensor, FactorSet, Result};

/// An exactly low-rank nonnegative tensor built from seeded uniform factors.
pub fn low_rank_tensor(dims: &[usize], rank: usize, seed: u64) -> Result<(DenseTensor, FactorSet)> {
    let truth = init_factors(dims, rank, seed)?;
    let t = fcncp::kernels::reconstruct(&truth)?;
    Ok((t, truth))
}
