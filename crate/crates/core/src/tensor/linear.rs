use super::matrix::{gemm, DenseMatrix};
use super::{dim_mismatch, TensorError};
use serde::{Deserialize, Serialize};

/// `out = W·x + b`, applied row-wise to a batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearLayer {
    pub weight: DenseMatrix,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearGrads {
    pub weight: DenseMatrix,
    pub bias: Vec<f64>,
}

impl LinearLayer {
    pub fn zeros(d_in: usize, d_out: usize) -> Self {
        LinearLayer { weight: DenseMatrix::zeros(d_out, d_in), bias: vec![0.0; d_out] }
    }

    pub fn d_in(&self) -> usize {
        self.weight.cols
    }

    pub fn d_out(&self) -> usize {
        self.weight.rows
    }

    pub fn param_count(&self) -> usize {
        self.d_in() * self.d_out() + self.d_out()
    }

    fn check(&self, x: &DenseMatrix) -> Result<(), TensorError> {
        if self.bias.len() != self.d_out() {
            return Err(dim_mismatch("linear bias", self.d_out(), self.bias.len()));
        }
        if x.cols != self.d_in() {
            return Err(dim_mismatch("linear input width", self.d_in(), x.cols));
        }
        Ok(())
    }

    pub fn forward(&self, x: &DenseMatrix) -> Result<DenseMatrix, TensorError> {
        self.check(x)?;
        let mut out = DenseMatrix::zeros(x.rows, self.d_out());
        for r in 0..x.rows {
            out.row_mut(r).copy_from_slice(&self.bias);
        }
        gemm(x.rows, self.d_in(), self.d_out(), &x.data, false, &self.weight.data, true, 1.0, &mut out.data);
        Ok(out)
    }

    /// `dW = gᵀ·x`, `db = Σ g`, `dx = g·W`.
    pub fn backward(&self, x: &DenseMatrix, grad_out: &DenseMatrix) -> Result<(LinearGrads, DenseMatrix), TensorError> {
        self.check(x)?;
        if (grad_out.rows, grad_out.cols) != (x.rows, self.d_out()) {
            return Err(dim_mismatch(
                "linear upstream gradient",
                format!("{}x{}", x.rows, self.d_out()),
                format!("{}x{}", grad_out.rows, grad_out.cols),
            ));
        }
        let (n, d_in, d_out) = (x.rows, self.d_in(), self.d_out());
        let mut weight = DenseMatrix::zeros(d_out, d_in);
        gemm(d_out, n, d_in, &grad_out.data, true, &x.data, false, 0.0, &mut weight.data);
        let mut dx = DenseMatrix::zeros(n, d_in);
        gemm(n, d_out, d_in, &grad_out.data, false, &self.weight.data, false, 0.0, &mut dx.data);
        Ok((LinearGrads { weight, bias: grad_out.col_sums() }, dx))
    }
}
