//! Implicit triangular residual block `x_out = x_in + ReLU(W x_out + b)`.
//!
//! `W` has diagonal `-λ` and strictly lower couplings `α`: coordinate `m`
//! only reads coordinates `j < m`, so the fixed point can be resolved one
//! coordinate at a time in increasing order.

mod broyden;
pub(crate) mod direct;

pub use broyden::{solve_broyden, BroydenOptions};
pub use direct::{solve_direct, solve_direct_masked};

use crate::math::{pf_eigenvalue, relu, tanh, DenseMatrix, SeededRng};
use crate::{Error, Result};

/// Smallest admissible `λ` after projection.
pub const DEFAULT_DELTA: f64 = 0.01;

#[derive(Debug, Clone, PartialEq)]
pub struct TriangularBlock {
    lambda: Vec<f64>,
    /// Packed strictly-lower rows: row `m` holds `α[m][0..m]` at offset `m(m-1)/2`.
    couplings: Vec<f64>,
    bias: Vec<f64>,
}

#[inline]
pub(crate) fn row_offset(m: usize) -> usize {
    m * m.saturating_sub(1) / 2
}

pub fn coupling_count(dim: usize) -> usize {
    row_offset(dim)
}

impl TriangularBlock {
    pub fn new(lambda: Vec<f64>, couplings: Vec<f64>, bias: Vec<f64>) -> Result<Self> {
        let dim = lambda.len();
        if dim == 0 {
            return Err(Error::InvalidArgument("block dimension must be at least 1".into()));
        }
        if bias.len() != dim || couplings.len() != coupling_count(dim) {
            return Err(Error::ShapeMismatch {
                expected: format!("{dim} biases and {} couplings", coupling_count(dim)),
                got: format!("{} biases and {} couplings", bias.len(), couplings.len()),
            });
        }
        if let Some(l) = lambda.iter().find(|l| !(**l > 0.0 && l.is_finite())) {
            return Err(Error::HypothesisViolated(format!(
                "diagonal magnitudes must be positive, got λ = {l}"
            )));
        }
        if couplings.iter().chain(&bias).any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("couplings and biases must be finite".into()));
        }
        Ok(Self {
            lambda,
            couplings,
            bias,
        })
    }

    /// Builds a block from the lower triangle of a dense `M×M` matrix: the
    /// diagonal is negated into `λ`, the strict upper triangle is ignored.
    pub fn from_dense_lower(weight: &DenseMatrix, bias: Vec<f64>) -> Result<Self> {
        if !weight.is_square() {
            return Err(Error::ShapeMismatch {
                expected: "square weight".into(),
                got: format!("{}x{}", weight.rows(), weight.cols()),
            });
        }
        let dim = weight.rows();
        let lambda = (0..dim).map(|m| -weight.get(m, m)).collect();
        let couplings = (0..dim).flat_map(|m| (0..m).map(move |j| (m, j))).map(|(m, j)| weight.get(m, j)).collect();
        Self::new(lambda, couplings, bias)
    }

    /// Random block with `α, b ~ U[-1, 1]` and diagonal `U[-1, 1]` projected
    /// into `[-1, -delta]`.
    pub fn random(dim: usize, delta: f64, rng: &mut SeededRng) -> Result<Self> {
        let lambda = (0..dim).map(|_| (-rng.uniform(-1.0, 1.0)).clamp(delta, 1.0)).collect();
        let couplings = (0..coupling_count(dim)).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let bias = (0..dim).map(|_| rng.uniform(-1.0, 1.0)).collect();
        Self::new(lambda, couplings, bias)
    }

    pub fn dim(&self) -> usize {
        self.lambda.len()
    }

    /// `λ`, the negated diagonal of `W`.
    pub fn lambda(&self) -> &[f64] {
        &self.lambda
    }

    pub fn couplings(&self) -> &[f64] {
        &self.couplings
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    /// Couplings `α[m][0..m]` feeding coordinate `m`.
    #[inline]
    pub fn coupling_row(&self, m: usize) -> &[f64] {
        let off = row_offset(m);
        &self.couplings[off..off + m]
    }

    /// Mutable views `(λ, α, b)` for optimiser updates. Callers must restore
    /// `λ > 0`, normally via [`TriangularBlock::project`].
    pub fn params_mut(&mut self) -> (&mut [f64], &mut [f64], &mut [f64]) {
        (&mut self.lambda, &mut self.couplings, &mut self.bias)
    }

    pub fn bias_mut(&mut self) -> &mut [f64] {
        &mut self.bias
    }

    pub fn lambda_mut(&mut self) -> &mut [f64] {
        &mut self.lambda
    }

    /// Clamps every `λ` into `[delta, 1]` and returns how many entries moved.
    pub fn project(&mut self, delta: f64) -> usize {
        let mut clipped = 0;
        for l in &mut self.lambda {
            let c = if l.is_nan() { delta } else { l.clamp(delta, 1.0) };
            if c != *l {
                clipped += 1;
                *l = c;
            }
        }
        clipped
    }

    /// Dense `W` with `-λ` on the diagonal.
    pub fn weight_matrix(&self) -> DenseMatrix {
        let dim = self.dim();
        let mut w = DenseMatrix::zeros(dim, dim);
        for m in 0..dim {
            w.set(m, m, -self.lambda[m]);
            for (j, &a) in self.coupling_row(m).iter().enumerate() {
                w.set(m, j, a);
            }
        }
        w
    }

    /// `W x + b` without materialising `W`.
    pub fn affine(&self, x: &[f64]) -> Vec<f64> {
        (0..self.dim())
            .map(|m| {
                let row = self.coupling_row(m);
                let coupled: f64 = row.iter().zip(&x[..m]).map(|(a, v)| a * v).sum();
                -self.lambda[m] * x[m] + coupled + self.bias[m]
            })
            .collect()
    }

    /// `x_out - x_in - ReLU(W x_out + b)`
    pub fn residual(&self, x_in: &[f64], x_out: &[f64]) -> Vec<f64> {
        let act = relu(&self.affine(x_out));
        x_out.iter().zip(x_in).zip(act).map(|((o, i), r)| o - i - r).collect()
    }

    pub(crate) fn check_input(&self, x_in: &[f64]) -> Result<()> {
        if x_in.len() != self.dim() {
            return Err(Error::ShapeMismatch {
                expected: format!("input of length {}", self.dim()),
                got: format!("length {}", x_in.len()),
            });
        }
        if x_in.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("block input must be finite".into()));
        }
        Ok(())
    }
}

/// ReLU activity pattern at a fixed point: `true` where `W x_out + b > 0`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GateMask {
    pub active: Vec<bool>,
}

impl GateMask {
    /// Recomputes the mask from a solved point.
    pub fn at(block: &TriangularBlock, x_out: &[f64]) -> Self {
        Self {
            active: block.affine(x_out).iter().map(|&s| s > 0.0).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveMethod {
    Direct,
    Broyden,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveReport {
    pub method: SolveMethod,
    pub iterations: usize,
    /// ∞-norm of `x_out - x_in - ReLU(W x_out + b)`.
    pub final_residual: f64,
    pub converged: bool,
}

/// Root-existence check: `λ_pf(|W|) < 1`.
pub fn check_existence(block: &TriangularBlock) -> Result<(bool, f64)> {
    let pf = pf_eigenvalue(&block.weight_matrix().abs())?;
    Ok((pf < 1.0, pf))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Tanh,
}

impl Activation {
    pub fn apply(self, x: &[f64]) -> Vec<f64> {
        match self {
            Activation::Relu => relu(x),
            Activation::Tanh => tanh(x),
        }
    }

    /// Derivative evaluated at the pre-activation `z`; `ReLU'(0) = 0`.
    pub fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => {
                let t = z.tanh();
                1.0 - t * t
            }
        }
    }
}

/// Unconstrained dense residual layer used by the explicit baselines.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub weight: DenseMatrix,
    pub bias: Vec<f64>,
}

impl DenseLayer {
    pub fn new(weight: DenseMatrix, bias: Vec<f64>) -> Result<Self> {
        if !weight.is_square() || bias.len() != weight.rows() {
            return Err(Error::ShapeMismatch {
                expected: "square weight with matching bias".into(),
                got: format!("{}x{} weight, {} biases", weight.rows(), weight.cols(), bias.len()),
            });
        }
        Ok(Self { weight, bias })
    }

    pub fn dim(&self) -> usize {
        self.bias.len()
    }

    pub fn pre_activation(&self, x: &[f64]) -> Vec<f64> {
        let mut z = self.weight.matvec(x);
        for (z, b) in z.iter_mut().zip(&self.bias) {
            *z += b;
        }
        z
    }
}

/// One explicit residual step `x + σ(W x + b)`.
pub fn explicit_step(layer: &DenseLayer, x_in: &[f64], activation: Activation) -> Vec<f64> {
    let inc = activation.apply(&layer.pre_activation(x_in));
    x_in.iter().zip(inc).map(|(x, d)| x + d).collect()
}
