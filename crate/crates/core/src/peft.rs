//! Low-rank adapter arithmetic and trainable-parameter accounting.
//!
//! Row-vector convention throughout: an input `x` of length `d` maps to an
//! output of length `k`, and the adapter adds `s * (x W_down) W_up` to the
//! frozen projection output `h`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PeftError {
    #[error("shape mismatch in {what}: expected {expected}, got {actual}")]
    ShapeMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("rank {rank} outside 1..={max}")]
    InvalidRank { rank: usize, max: usize },
    #[error("scale must be a finite value >= 1")]
    InvalidScale,
    #[error("budget field {0} must be positive")]
    InvalidBudget(&'static str),
}

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix<F> {
    rows: usize,
    cols: usize,
    data: Vec<F>,
}

impl<F: Scalar> Matrix<F> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![F::zero(); rows * cols],
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> F) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<F>) -> Result<Self, PeftError> {
        if data.len() != rows * cols {
            return Err(PeftError::ShapeMismatch {
                what: "matrix data",
                expected: rows * cols,
                actual: data.len(),
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> F {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, value: F) {
        self.data[i * self.cols + j] = value;
    }

    pub fn as_slice(&self) -> &[F] {
        &self.data
    }

    pub fn scaled(&self, s: F) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| v * s).collect(),
        }
    }

    pub fn matmul(&self, other: &Self) -> Result<Self, PeftError> {
        if self.cols != other.rows {
            return Err(PeftError::ShapeMismatch {
                what: "matmul inner dimension",
                expected: self.cols,
                actual: other.rows,
            });
        }
        Ok(Self::from_fn(self.rows, other.cols, |i, j| {
            (0..self.cols).fold(F::zero(), |acc, l| acc + self.get(i, l) * other.get(l, j))
        }))
    }

    /// `x M` for a row vector `x`.
    pub fn left_mul(&self, x: &[F]) -> Result<Vec<F>, PeftError> {
        if x.len() != self.rows {
            return Err(PeftError::ShapeMismatch {
                what: "row vector length",
                expected: self.rows,
                actual: x.len(),
            });
        }
        Ok((0..self.cols)
            .map(|j| x.iter().enumerate().fold(F::zero(), |acc, (i, &xi)| acc + xi * self.get(i, j)))
            .collect())
    }
}

/// `W_down` (d x r), `W_up` (r x k) and scale `s`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoraAdapter<F> {
    w_down: Matrix<F>,
    w_up: Matrix<F>,
    scale: F,
}

impl<F: Scalar> LoraAdapter<F> {
    pub fn new(w_down: Matrix<F>, w_up: Matrix<F>, scale: F) -> Result<Self, PeftError> {
        if w_down.cols != w_up.rows {
            return Err(PeftError::ShapeMismatch {
                what: "adapter rank (W_up rows)",
                expected: w_down.cols,
                actual: w_up.rows,
            });
        }
        let rank = w_down.cols;
        let max = w_down.rows.min(w_up.cols);
        if rank == 0 || rank > max {
            return Err(PeftError::InvalidRank { rank, max });
        }
        if !(scale.is_finite() && scale >= F::one()) {
            return Err(PeftError::InvalidScale);
        }
        Ok(Self { w_down, w_up, scale })
    }

    pub fn d(&self) -> usize {
        self.w_down.rows
    }

    pub fn r(&self) -> usize {
        self.w_down.cols
    }

    pub fn k(&self) -> usize {
        self.w_up.cols
    }

    pub fn scale(&self) -> F {
        self.scale
    }

    pub fn w_down(&self) -> &Matrix<F> {
        &self.w_down
    }

    pub fn w_up(&self) -> &Matrix<F> {
        &self.w_up
    }

    pub fn with_scale(&self, scale: F) -> Result<Self, PeftError> {
        Self::new(self.w_down.clone(), self.w_up.clone(), scale)
    }

    pub fn with_w_down(&self, w_down: Matrix<F>) -> Result<Self, PeftError> {
        Self::new(w_down, self.w_up.clone(), self.scale)
    }

    /// The dense update `s * W_down W_up` (d x k).
    pub fn delta(&self) -> Matrix<F> {
        self.w_down
            .matmul(&self.w_up)
            .expect("adapter shapes checked at construction")
            .scaled(self.scale)
    }

    fn check_inputs(&self, h: &[F], x: &[F]) -> Result<(), PeftError> {
        if x.len() != self.d() {
            return Err(PeftError::ShapeMismatch {
                what: "input x (d)",
                expected: self.d(),
                actual: x.len(),
            });
        }
        if h.len() != self.k() {
            return Err(PeftError::ShapeMismatch {
                what: "output h (k)",
                expected: self.k(),
                actual: h.len(),
            });
        }
        Ok(())
    }

    /// `h + s * (x W_down) W_up`, through the r-dimensional intermediate.
    pub fn apply(&self, h: &[F], x: &[F]) -> Result<Vec<F>, PeftError> {
        self.check_inputs(h, x)?;
        let low = self.w_down.left_mul(x)?;
        let up = self.w_up.left_mul(&low)?;
        Ok(h.iter().zip(up).map(|(&hi, ui)| hi + self.scale * ui).collect())
    }

    /// Gradient of `|apply(h, x)|^2` with respect to `W_down`.
    ///
    /// With `y = apply(h, x)`, entry `(i, j)` is `2 s x_i (y W_up^T)_j`.
    pub fn grad_w_down_sq_norm(&self, h: &[F], x: &[F]) -> Result<Matrix<F>, PeftError> {
        let y = self.apply(h, x)?;
        let two = F::one() + F::one();
        let back: Vec<F> = (0..self.r())
            .map(|j| (0..self.k()).fold(F::zero(), |acc, l| acc + y[l] * self.w_up.get(j, l)))
            .collect();
        Ok(Matrix::from_fn(self.d(), self.r(), |i, j| two * self.scale * x[i] * back[j]))
    }
}

pub fn lora_update<F: Scalar>(h: &[F], x: &[F], adapter: &LoraAdapter<F>) -> Result<Vec<F>, PeftError> {
    adapter.apply(h, x)
}

/// Which projections of how many layers carry an adapter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoraBudget {
    pub n_layers: u64,
    /// Query and value projections by default.
    pub adapted_matrices_per_layer: u64,
    pub d_model: u64,
    pub rank: u64,
    pub total_params: u64,
}

impl LoraBudget {
    pub fn new(n_layers: u64, d_model: u64, rank: u64, total_params: u64) -> Self {
        Self {
            n_layers,
            adapted_matrices_per_layer: 2,
            d_model,
            rank,
            total_params,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamCount {
    pub trainable: u64,
    pub fraction: f64,
}

/// Each adapted `d_model x d_model` projection trains `rank * 2 * d_model`
/// weights.
pub fn lora_param_count(budget: &LoraBudget) -> Result<ParamCount, PeftError> {
    let fields = [
        ("n_layers", budget.n_layers),
        ("adapted_matrices_per_layer", budget.adapted_matrices_per_layer),
        ("d_model", budget.d_model),
        ("rank", budget.rank),
        ("total_params", budget.total_params),
    ];
    if let Some((name, _)) = fields.iter().find(|(_, v)| *v == 0) {
        return Err(PeftError::InvalidBudget(name));
    }
    let trainable = budget.n_layers * budget.adapted_matrices_per_layer * budget.rank * (budget.d_model + budget.d_model);
    Ok(ParamCount {
        trainable,
        fraction: trainable as f64 / budget.total_params as f64,
    })
}
