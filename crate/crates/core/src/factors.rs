use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Lower end of the factor initialization range.
pub const INIT_LOW: f64 = 0.1;
/// Upper end (exclusive) of the factor initialization range.
pub const INIT_HIGH: f64 = 1.0;

/// One factor matrix per mode, all with the same number of columns (the CP rank).
#[derive(Clone, Debug, PartialEq)]
pub struct FactorSet {
    matrices: Vec<Matrix>,
}

impl FactorSet {
    pub fn new(matrices: Vec<Matrix>) -> Result<Self> {
        let rank = match matrices.first() {
            Some(m) => m.cols(),
            None => return Err(Error::shape("a factor set needs at least one mode")),
        };
        if rank == 0 {
            return Err(Error::InvalidArgument("rank must be at least 1".into()));
        }
        if let Some((n, m)) = matrices.iter().enumerate().find(|(_, m)| m.cols() != rank) {
            return Err(Error::shape(format!(
                "mode {n} has {} columns, expected {rank}",
                m.cols()
            )));
        }
        Ok(FactorSet { matrices })
    }

    pub fn rank(&self) -> usize {
        self.matrices[0].cols()
    }

    pub fn order(&self) -> usize {
        self.matrices.len()
    }

    pub fn dims(&self) -> Vec<usize> {
        self.matrices.iter().map(Matrix::rows).collect()
    }

    pub fn matrices(&self) -> &[Matrix] {
        &self.matrices
    }

    pub fn mode(&self, n: usize) -> &Matrix {
        &self.matrices[n]
    }

    pub fn mode_mut(&mut self, n: usize) -> &mut Matrix {
        &mut self.matrices[n]
    }

    pub fn into_matrices(self) -> Vec<Matrix> {
        self.matrices
    }

    pub fn is_finite(&self) -> bool {
        self.matrices.iter().all(Matrix::is_finite)
    }

    pub fn min_entry(&self) -> f64 {
        self.matrices
            .iter()
            .flat_map(|m| m.as_slice().iter().copied())
            .fold(f64::INFINITY, f64::min)
    }

    /// Overwrites component `r` in every mode with fresh draws from the init distribution.
    pub fn reseed_component(&mut self, r: usize, rng: &mut ChaCha8Rng) {
        for m in &mut self.matrices {
            for i in 0..m.rows() {
                m[(i, r)] = rng.random_range(INIT_LOW..INIT_HIGH);
            }
        }
    }

    pub(crate) fn check_dims(&self, dims: &[usize]) -> Result<()> {
        if self.dims() != dims {
            return Err(Error::shape(format!(
                "factor rows {:?} do not match tensor dims {:?}",
                self.dims(),
                dims
            )));
        }
        Ok(())
    }
}

/// Random factors with entries i.i.d. uniform on `[0.1, 1.0)`, drawn from `rng`.
pub fn init_factors_with(dims: &[usize], rank: usize, rng: &mut ChaCha8Rng) -> Result<FactorSet> {
    if rank < 1 {
        return Err(Error::InvalidArgument("rank must be at least 1".into()));
    }
    if dims.is_empty() || dims.contains(&0) {
        return Err(Error::shape(format!("invalid dims {dims:?}")));
    }
    let matrices = dims
        .iter()
        .map(|&rows| Matrix::from_fn(rows, rank, |_, _| rng.random_range(INIT_LOW..INIT_HIGH)))
        .collect();
    FactorSet::new(matrices)
}

/// Seed-deterministic factor initialization.
pub fn init_factors(dims: &[usize], rank: usize, seed: u64) -> Result<FactorSet> {
    init_factors_with(dims, rank, &mut ChaCha8Rng::seed_from_u64(seed))
}
