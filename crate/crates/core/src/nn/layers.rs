use rand::Rng;

use super::matrix::{check_len, Matrix};
use super::params::ParamSet;
use crate::error::{Error, Result};

/// Fully connected layer `y = W x + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseParams {
    pub w: Matrix,
    pub b: Matrix,
}

impl DenseParams {
    pub fn zeros(input_dim: usize, output_dim: usize) -> Self {
        DenseParams {
            w: Matrix::zeros(output_dim, input_dim),
            b: Matrix::zeros(output_dim, 1),
        }
    }

    pub fn init<R: Rng>(input_dim: usize, output_dim: usize, rng: &mut R) -> Self {
        DenseParams {
            w: Matrix::glorot(output_dim, input_dim, rng),
            b: Matrix::zeros(output_dim, 1),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.w.rows()
    }

    pub fn validate(&self) -> Result<()> {
        if self.b.shape() != (self.w.rows(), 1) {
            return Err(Error::Shape(format!(
                "dense bias: expected ({}, 1), got {:?}",
                self.w.rows(),
                self.b.shape()
            )));
        }
        Ok(())
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let mut y = self.b.as_slice().to_vec();
        self.w.matvec_acc(x, &mut y);
        y
    }

    pub fn try_forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len("dense input", x.len(), self.input_dim())?;
        Ok(self.forward(x))
    }

    /// Accumulates `∂L/∂W`, `∂L/∂b` into `grads` and returns `∂L/∂x`.
    pub fn backward(&self, x: &[f64], dy: &[f64], grads: &mut DenseParams) -> Vec<f64> {
        grads.w.outer_acc(dy, x);
        grads.b.add_column_acc(dy);
        let mut dx = vec![0.0; x.len()];
        self.w.matvec_t_acc(dy, &mut dx);
        dx
    }
}

impl ParamSet for DenseParams {
    fn params(&self) -> Vec<(String, &Matrix)> {
        vec![("w".into(), &self.w), ("b".into(), &self.b)]
    }

    fn params_mut(&mut self) -> Vec<&mut Matrix> {
        vec![&mut self.w, &mut self.b]
    }
}

/// Token embedding table; row `i` is the vector for token id `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    pub table: Matrix,
}

impl EmbeddingTable {
    pub fn new(table: Matrix) -> Result<Self> {
        if table.cols() == 0 {
            return Err(Error::Shape("embedding dimension must be positive".into()));
        }
        if !table.is_finite() {
            return Err(Error::InvalidArgument("embedding table contains non-finite values".into()));
        }
        Ok(EmbeddingTable { table })
    }

    pub fn uniform<R: Rng>(vocab_size: usize, dim: usize, scale: f64, rng: &mut R) -> Self {
        EmbeddingTable {
            table: Matrix::uniform(vocab_size, dim, scale, rng),
        }
    }

    pub fn vocab_size(&self) -> usize {
        self.table.rows()
    }

    pub fn dim(&self) -> usize {
        self.table.cols()
    }

    pub fn lookup(&self, id: usize) -> &[f64] {
        self.table.row(id)
    }

    pub fn backward(&self, id: usize, dx: &[f64], grads: &mut EmbeddingTable) {
        for (g, d) in grads.table.row_mut(id).iter_mut().zip(dx) {
            *g += d;
        }
    }
}

impl ParamSet for EmbeddingTable {
    fn params(&self) -> Vec<(String, &Matrix)> {
        vec![("table".into(), &self.table)]
    }

    fn params_mut(&mut self) -> Vec<&mut Matrix> {
        vec![&mut self.table]
    }
}
