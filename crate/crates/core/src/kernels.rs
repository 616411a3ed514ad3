//! Multilinear kernels shared by every update rule: Khatri–Rao and Hadamard
//! products, MTTKRP (direct and through a low-rank basis), reconstruction and
//! relative error.

use crate::error::{Error, Result};
use crate::factors::FactorSet;
use crate::matrix::Matrix;
use crate::tensor::DenseTensor;

/// Column-wise Kronecker product: column `r` is `a[:, r] ⊗ b[:, r]`.
pub fn khatri_rao(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.cols() != b.cols() {
        return Err(Error::shape(format!(
            "khatri-rao needs equal column counts, got {} and {}",
            a.cols(),
            b.cols()
        )));
    }
    let r = a.cols();
    let mut out = Matrix::zeros(a.rows() * b.rows(), r);
    for i in 0..a.rows() {
        let a_row = a.row(i);
        for j in 0..b.rows() {
            let b_row = b.row(j);
            let out_row = out.row_mut(i * b.rows() + j);
            for c in 0..r {
                out_row[c] = a_row[c] * b_row[c];
            }
        }
    }
    Ok(out)
}

/// Khatri–Rao product of a sequence; the last matrix varies fastest along the rows.
/// An empty sequence yields the `1 × rank` ones row.
fn khatri_rao_seq<'a>(mats: impl IntoIterator<Item = &'a Matrix>, rank: usize) -> Result<Matrix> {
    mats.into_iter()
        .try_fold(Matrix::filled(1, rank, 1.0), |acc, m| khatri_rao(&acc, m))
}

/// The Khatri–Rao chain over every mode except `skip`, ordered so that its rows
/// line up with the columns of [`unfold`](crate::tensor::unfold): the first
/// remaining mode varies fastest.
pub fn khatri_rao_skip(factors: &FactorSet, skip: usize) -> Result<Matrix> {
    khatri_rao_seq(
        factors
            .matrices()
            .iter()
            .enumerate()
            .rev()
            .filter(|(m, _)| *m != skip)
            .map(|(_, u)| u),
        factors.rank(),
    )
}

/// Element-wise product of equally shaped matrices.
pub fn hadamard_chain(mats: &[&Matrix]) -> Result<Matrix> {
    let first = mats
        .first()
        .ok_or_else(|| Error::shape("hadamard product of an empty list"))?;
    let mut out = (*first).clone();
    for m in &mats[1..] {
        if m.shape() != out.shape() {
            return Err(Error::shape(format!(
                "hadamard operands {:?} and {:?}",
                out.shape(),
                m.shape()
            )));
        }
        for (o, v) in out.as_mut_slice().iter_mut().zip(m.as_slice()) {
            *o *= v;
        }
    }
    Ok(out)
}

/// `⊛_{m≠skip} (U^(m)ᵀ U^(m))`, the `R × R` matrix every HALS denominator reads from.
pub fn gram_hadamard_skip(factors: &FactorSet, skip: usize) -> Matrix {
    let r = factors.rank();
    let mut out = Matrix::filled(r, r, 1.0);
    for (m, u) in factors.matrices().iter().enumerate() {
        if m == skip {
            continue;
        }
        let g = u.gram();
        for (o, v) in out.as_mut_slice().iter_mut().zip(g.as_slice()) {
            *o *= v;
        }
    }
    out
}

fn check_mode(order: usize, mode: usize) -> Result<()> {
    if mode >= order {
        return Err(Error::ModeOutOfRange { mode, order });
    }
    Ok(())
}

/// Matricized tensor times Khatri–Rao product, `unfold(t, n) · {U}^{⊙−n}`.
///
/// The tensor is viewed as `left × I_n × right` blocks so only the Khatri–Rao
/// products of the modes before and after `n` are formed, never the full chain.
pub fn mttkrp(t: &DenseTensor, factors: &FactorSet, mode: usize) -> Result<Matrix> {
    t.check_mode(mode)?;
    factors.check_dims(t.dims())?;
    let dims = t.dims();
    let rank = factors.rank();
    let mats = factors.matrices();
    let left = khatri_rao_seq(&mats[..mode], rank)?;
    let right = khatri_rao_seq(&mats[mode + 1..], rank)?;
    let rows = dims[mode];
    let right_len = right.rows();
    let right_data = right.as_slice();
    let data = t.as_slice();

    let mut out = Matrix::zeros(rows, rank);
    let mut tmp = vec![0.0; rank];
    for a in 0..left.rows() {
        let l_row = left.row(a);
        for i in 0..rows {
            let start = (a * rows + i) * right_len;
            let fiber = &data[start..start + right_len];
            tmp.iter_mut().for_each(|v| *v = 0.0);
            for (b, &x) in fiber.iter().enumerate() {
                if x == 0.0 {
                    continue;
                }
                let r_row = &right_data[b * rank..(b + 1) * rank];
                for (acc, &w) in tmp.iter_mut().zip(r_row) {
                    *acc += x * w;
                }
            }
            let out_row = out.row_mut(i);
            for c in 0..rank {
                out_row[c] += l_row[c] * tmp[c];
            }
        }
    }
    Ok(out)
}

/// MTTKRP against the tensor represented by a CP `basis`, computed as
/// `Û^(n) · ⊛_{m≠n}(Û^(m)ᵀ U^(m))` without forming the tensor or any Khatri–Rao chain.
pub fn mttkrp_compressed(basis: &FactorSet, factors: &FactorSet, mode: usize) -> Result<Matrix> {
    check_mode(basis.order(), mode)?;
    if basis.dims() != factors.dims() {
        return Err(Error::shape(format!(
            "basis rows {:?} do not match factor rows {:?}",
            basis.dims(),
            factors.dims()
        )));
    }
    let mut cross = Matrix::filled(basis.rank(), factors.rank(), 1.0);
    for (m, (b, u)) in basis.matrices().iter().zip(factors.matrices()).enumerate() {
        if m == mode {
            continue;
        }
        let c = b.tmatmul(u)?;
        for (o, v) in cross.as_mut_slice().iter_mut().zip(c.as_slice()) {
            *o *= v;
        }
    }
    basis.mode(mode).matmul(&cross)
}

/// `Σ_r u_r^(1) ∘ … ∘ u_r^(N)`.
pub fn reconstruct(factors: &FactorSet) -> Result<DenseTensor> {
    let dims = factors.dims();
    let n = dims.len();
    if n < 2 {
        return Err(Error::shape("reconstruction needs at least two modes"));
    }
    let mats = factors.matrices();
    let left = khatri_rao_seq(&mats[..n - 1], factors.rank())?;
    let data = left.matmul(&mats[n - 1].transpose())?.into_vec();
    DenseTensor::new(dims, data)
}

/// Relative reconstruction error `‖t − [[U]]‖_F / ‖t‖_F`, streamed without
/// materializing the reconstruction.
pub fn rel_err(t: &DenseTensor, factors: &FactorSet) -> Result<f64> {
    factors.check_dims(t.dims())?;
    let norm = t.frobenius_norm();
    if norm == 0.0 {
        return Err(Error::ZeroNorm);
    }
    let n = t.order();
    let mats = factors.matrices();
    let left = khatri_rao_seq(&mats[..n - 1], factors.rank())?;
    let last = &mats[n - 1];
    let last_len = last.rows();
    let data = t.as_slice();
    let mut residual = 0.0;
    for a in 0..left.rows() {
        let l_row = left.row(a);
        let fiber = &data[a * last_len..(a + 1) * last_len];
        for (j, &x) in fiber.iter().enumerate() {
            let model: f64 = l_row.iter().zip(last.row(j)).map(|(p, q)| p * q).sum();
            let d = x - model;
            residual += d * d;
        }
    }
    let err = residual.sqrt() / norm;
    if !err.is_finite() {
        return Err(Error::NonFinite("relative error".into()));
    }
    Ok(err)
}

/// `1 − rel_err`.
pub fn fit(t: &DenseTensor, factors: &FactorSet) -> Result<f64> {
    rel_err(t, factors).map(|e| 1.0 - e)
}
