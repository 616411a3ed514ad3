//! Dense order-N tensors and mode-n unfolding.
//!
//! Values are stored row-major: the last index varies fastest. Unfoldings use
//! the column ordering in which earlier modes vary fastest (mode `n` skipped),
//! so entry `(i_1, .., i_N)` lands in column `Σ_{m≠n} i_m · J_m` with
//! `J_m = Π_{l<m, l≠n} I_l`.

use crate::error::{Error, Result};
use crate::matrix::Matrix;

#[derive(Clone, Debug, PartialEq)]
pub struct DenseTensor {
    dims: Vec<usize>,
    data: Vec<f64>,
}

impl DenseTensor {
    pub fn new(dims: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        validate_dims(&dims)?;
        let len: usize = dims.iter().product();
        if data.len() != len {
            return Err(Error::shape(format!(
                "dims {:?} need {} values, got {}",
                dims,
                len,
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("tensor entry {pos}")));
        }
        Ok(DenseTensor { dims, data })
    }

    pub fn zeros(dims: Vec<usize>) -> Result<Self> {
        validate_dims(&dims)?;
        let len = dims.iter().product();
        Ok(DenseTensor {
            dims,
            data: vec![0.0; len],
        })
    }

    /// Fills the tensor by evaluating `f` at every multi-index, in storage order.
    pub fn from_fn(dims: Vec<usize>, mut f: impl FnMut(&[usize]) -> f64) -> Result<Self> {
        validate_dims(&dims)?;
        let mut data = Vec::with_capacity(dims.iter().product());
        for_each_index(&dims, |idx| data.push(f(idx)));
        DenseTensor::new(dims, data)
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn order(&self) -> usize {
        self.dims.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn linear_index(&self, idx: &[usize]) -> usize {
        idx.iter()
            .zip(&self.dims)
            .fold(0, |acc, (&i, &d)| acc * d + i)
    }

    pub fn get(&self, idx: &[usize]) -> f64 {
        self.data[self.linear_index(idx)]
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn is_nonnegative(&self) -> bool {
        self.data.iter().all(|&v| v >= 0.0)
    }

    pub(crate) fn check_mode(&self, mode: usize) -> Result<()> {
        if mode >= self.order() {
            return Err(Error::ModeOutOfRange {
                mode,
                order: self.order(),
            });
        }
        Ok(())
    }
}

fn validate_dims(dims: &[usize]) -> Result<()> {
    if dims.len() < 2 {
        return Err(Error::shape(format!(
            "tensors need at least two modes, got {}",
            dims.len()
        )));
    }
    if dims.contains(&0) {
        return Err(Error::shape(format!("zero extent in dims {dims:?}")));
    }
    Ok(())
}

/// Visits every multi-index of `dims` in row-major order.
pub(crate) fn for_each_index(dims: &[usize], mut f: impl FnMut(&[usize])) {
    if dims.contains(&0) {
        return;
    }
    let mut idx = vec![0usize; dims.len()];
    loop {
        f(&idx);
        let mut m = dims.len();
        loop {
            if m == 0 {
                return;
            }
            m -= 1;
            idx[m] += 1;
            if idx[m] < dims[m] {
                break;
            }
            idx[m] = 0;
        }
    }
}

/// Column of the mode-`mode` unfolding that holds the entry at `idx`.
fn unfold_column(dims: &[usize], mode: usize, idx: &[usize]) -> usize {
    let mut col = 0;
    let mut stride = 1;
    for (m, (&i, &d)) in idx.iter().zip(dims).enumerate() {
        if m == mode {
            continue;
        }
        col += i * stride;
        stride *= d;
    }
    col
}

/// Mode-`mode` unfolding (0-based mode), an `I_n × Π_{m≠n} I_m` matrix.
pub fn unfold(t: &DenseTensor, mode: usize) -> Result<Matrix> {
    t.check_mode(mode)?;
    let rows = t.dims[mode];
    let cols = t.len() / rows;
    let mut out = Matrix::zeros(rows, cols);
    let mut pos = 0;
    for_each_index(&t.dims, |idx| {
        let col = unfold_column(&t.dims, mode, idx);
        out[(idx[mode], col)] = t.data[pos];
        pos += 1;
    });
    Ok(out)
}

/// Inverse of [`unfold`].
pub fn fold(m: &Matrix, mode: usize, dims: &[usize]) -> Result<DenseTensor> {
    validate_dims(dims)?;
    if mode >= dims.len() {
        return Err(Error::ModeOutOfRange {
            mode,
            order: dims.len(),
        });
    }
    let total: usize = dims.iter().product();
    if m.rows() != dims[mode] || m.rows() * m.cols() != total {
        return Err(Error::shape(format!(
            "a {}x{} matrix cannot fold into dims {:?} along mode {}",
            m.rows(),
            m.cols(),
            dims,
            mode
        )));
    }
    let mut data = Vec::with_capacity(total);
    for_each_index(dims, |idx| {
        data.push(m[(idx[mode], unfold_column(dims, mode, idx))]);
    });
    DenseTensor::new(dims.to_vec(), data)
}
