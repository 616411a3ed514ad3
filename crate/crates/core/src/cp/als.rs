use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::factors::{init_factors, FactorSet};
use crate::kernels::{gram_hadamard_skip, mttkrp, rel_err};
use crate::matrix::Matrix;
use crate::tensor::DenseTensor;

/// Relative change in RelErr below which ALS is considered stagnant.
const STAGNATION: f64 = 1e-13;

/// Unconstrained CP factors of a tensor, used as a low-rank stand-in for it in MTTKRP.
#[derive(Clone, Debug)]
pub struct CompressionBasis {
    pub factors: FactorSet,
    pub rel_err: f64,
}

#[derive(Clone, Debug)]
pub struct AlsResult {
    pub factors: FactorSet,
    /// RelErr after each sweep.
    pub trace: Vec<f64>,
}

/// Solves `U · G = M` for `U` with `G` symmetric positive semidefinite.
fn solve_normal(m: &Matrix, g: &Matrix) -> Result<Matrix> {
    let r = g.rows();
    let gm = DMatrix::from_row_slice(r, r, g.as_slice());
    // Uᵀ = G⁻¹ Mᵀ since G is symmetric.
    let rhs = DMatrix::from_row_slice(m.rows(), m.cols(), m.as_slice()).transpose();
    let solved = match gm.clone().cholesky() {
        Some(ch) => ch.solve(&rhs),
        None => gm
            .svd(true, true)
            .solve(&rhs, 1e-14)
            .map_err(|e| Error::NonFinite(format!("normal equations: {e}")))?,
    };
    let out = Matrix::from_fn(m.rows(), m.cols(), |i, j| solved[(j, i)]);
    if !out.is_finite() {
        return Err(Error::NonFinite("ALS mode solve".into()));
    }
    Ok(out)
}

/// CP-ALS from the given starting factors.
///
/// Each mode solve is an exact least-squares step, so the trace never increases.
/// Columns of every mode but the last are rescaled to unit norm after their
/// solve and the scale is pushed into the last mode.
pub fn cp_als_from(t: &DenseTensor, init: FactorSet, iters: usize) -> Result<AlsResult> {
    init.check_dims(t.dims())?;
    let order = t.order();
    let mut factors = init;
    let mut trace = Vec::with_capacity(iters);
    for _ in 0..iters {
        for n in 0..order {
            let m = mttkrp(t, &factors, n)?;
            let g = gram_hadamard_skip(&factors, n);
            *factors.mode_mut(n) = solve_normal(&m, &g)?;
            if n + 1 < order {
                for r in 0..factors.rank() {
                    let norm = factors.mode(n).column_norm(r);
                    if norm > 0.0 {
                        factors.mode_mut(n).scale_column(r, 1.0 / norm);
                        factors.mode_mut(order - 1).scale_column(r, norm);
                    }
                }
            }
        }
        let err = rel_err(t, &factors)?;
        let stagnant = trace
            .last()
            .is_some_and(|&prev: &f64| (prev - err).abs() <= STAGNATION * prev.max(f64::MIN_POSITIVE));
        trace.push(err);
        if stagnant || err == 0.0 {
            break;
        }
    }
    Ok(AlsResult { factors, trace })
}

/// Unconstrained CP decomposition from a seeded random start.
pub fn cp_als_unconstrained(
    t: &DenseTensor,
    rank: usize,
    iters: usize,
    seed: u64,
) -> Result<CompressionBasis> {
    let dims = t.dims();
    for n in 0..dims.len() {
        let others: usize = dims.iter().enumerate().filter(|(m, _)| *m != n).map(|(_, d)| d).product();
        if rank > others {
            return Err(Error::InvalidArgument(format!(
                "rank {rank} exceeds the {others} columns of the mode-{n} unfolding"
            )));
        }
    }
    let init = init_factors(dims, rank, seed)?;
    let res = cp_als_from(t, init, iters)?;
    let rel_err = match res.trace.last() {
        Some(&e) => e,
        None => rel_err(t, &res.factors)?,
    };
    Ok(CompressionBasis {
        factors: res.factors,
        rel_err,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::reconstruct;

    #[test]
    fn recovers_exact_rank_two() {
        // Signed factors keep the two components well separated.
        let mut truth = init_factors(&[5, 6, 7], 2, 100).unwrap();
        for n in 0..3 {
            truth.mode_mut(n).as_mut_slice().iter_mut().for_each(|v| *v = 2.0 * *v - 1.1);
        }
        let t = reconstruct(&truth).unwrap();
        let basis = cp_als_unconstrained(&t, 2, 50, 3).unwrap();
        assert!(basis.rel_err <= 1e-8, "rel_err {}", basis.rel_err);
    }

    #[test]
    fn trace_is_non_increasing() {
        let truth = init_factors(&[4, 5, 6], 3, 8).unwrap();
        let mut t = reconstruct(&truth).unwrap().into_vec();
        for (i, v) in t.iter_mut().enumerate() {
            *v += 0.01 * ((i * 7919) % 13) as f64;
        }
        let t = DenseTensor::new(vec![4, 5, 6], t).unwrap();
        let res = cp_als_from(&t, init_factors(&[4, 5, 6], 2, 9).unwrap(), 40).unwrap();
        for w in res.trace.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-12), "{} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn rank_one_truth_is_a_fixed_point() {
        let unit = |v: Vec<f64>| {
            let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v.into_iter().map(|x| x / n).collect::<Vec<_>>()
        };
        let truth = FactorSet::new(vec![
            Matrix::from_vec(3, 1, unit(vec![1.0, 2.0, 3.0])).unwrap(),
            Matrix::from_vec(2, 1, unit(vec![2.0, 1.0])).unwrap(),
            Matrix::from_vec(4, 1, vec![0.5, 1.5, 2.5, 3.5]).unwrap(),
        ])
        .unwrap();
        let t = reconstruct(&truth).unwrap();
        let res = cp_als_from(&t, truth.clone(), 1).unwrap();
        for (a, b) in res.factors.matrices().iter().zip(truth.matrices()) {
            assert!(a.max_abs_diff(b) < 1e-12);
        }
    }

    #[test]
    fn rank_too_large_rejected() {
        let t = DenseTensor::new(vec![2, 2], vec![1.0; 4]).unwrap();
        assert!(cp_als_unconstrained(&t, 3, 5, 0).is_err());
    }
}
