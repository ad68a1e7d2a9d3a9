//! Reverse-mode gradients for the fixed architecture.
//!
//! Implicit blocks are differentiated through the implicit function theorem
//! at the converged fixed point; solver iterates are never unrolled.

use crate::block::{Activation, DenseLayer, TriangularBlock};
use crate::math::{norm_inf, DenseMatrix};
use crate::{Error, Result};

pub use crate::block::GateMask;

/// Denominator floor for relative errors between tiny gradients.
pub const RELATIVE_ERROR_FLOOR: f64 = 1e-4;

/// Gradients of one implicit block.
#[derive(Debug, Clone, PartialEq)]
pub struct GradBundle {
    /// ∂L/∂W[m][m]; the trainable `λ = -W[m][m]` receives the negation.
    pub d_diag: Vec<f64>,
    /// ∂L/∂α in the block's packed strictly-lower layout.
    pub d_couplings: Vec<f64>,
    pub d_bias: Vec<f64>,
    pub d_input: Vec<f64>,
}

impl GradBundle {
    pub fn d_lambda(&self) -> Vec<f64> {
        self.d_diag.iter().map(|g| -g).collect()
    }
}

/// Solves `(I - D W)ᵀ y = upstream` with `D = diag(mask)`. The matrix is
/// upper triangular with diagonal `1 + mask·λ >= 1`, so back substitution
/// is exact and never divides by less than one.
pub fn implicit_adjoint(block: &TriangularBlock, mask: &GateMask, upstream: &[f64]) -> Vec<f64> {
    let dim = block.dim();
    let lambda = block.lambda();
    let mut acc = vec![0.0; dim];
    let mut y = vec![0.0; dim];
    for m in (0..dim).rev() {
        let diag = if mask.active[m] { 1.0 + lambda[m] } else { 1.0 };
        y[m] = (upstream[m] + acc[m]) / diag;
        if mask.active[m] {
            for (a, &alpha) in acc[..m].iter_mut().zip(block.coupling_row(m)) {
                *a += alpha * y[m];
            }
        }
    }
    y
}

/// Backward pass of `x_out = x_in + ReLU(W x_out + b)` at a converged
/// fixed point.
pub fn backward_implicit(
    block: &TriangularBlock,
    x_in: &[f64],
    x_out: &[f64],
    mask: &GateMask,
    upstream: &[f64],
) -> Result<GradBundle> {
    let dim = block.dim();
    for (name, len) in [("x_in", x_in.len()), ("x_out", x_out.len()), ("mask", mask.active.len()), ("upstream", upstream.len())] {
        if len != dim {
            return Err(Error::ShapeMismatch {
                expected: format!("{name} of length {dim}"),
                got: format!("length {len}"),
            });
        }
    }
    let residual = norm_inf(&block.residual(x_in, x_out));
    if !(residual <= 1e-9 * norm_inf(x_out).max(1.0)) {
        return Err(Error::NotConverged {
            iterations: 0,
            residual,
        });
    }
    Ok(backward_implicit_unchecked(block, x_out, mask, upstream))
}

pub(crate) fn backward_implicit_unchecked(
    block: &TriangularBlock,
    x_out: &[f64],
    mask: &GateMask,
    upstream: &[f64],
) -> GradBundle {
    let dim = block.dim();
    let y = implicit_adjoint(block, mask, upstream);
    let mut d_diag = vec![0.0; dim];
    let mut d_couplings = vec![0.0; block.couplings().len()];
    let mut d_bias = vec![0.0; dim];
    for m in 0..dim {
        if !mask.active[m] {
            continue;
        }
        d_bias[m] = y[m];
        d_diag[m] = y[m] * x_out[m];
        let off = crate::block::row_offset(m);
        for j in 0..m {
            d_couplings[off + j] = y[m] * x_out[j];
        }
    }
    GradBundle {
        d_diag,
        d_couplings,
        d_bias,
        d_input: y,
    }
}

/// Adjoints of `weight · x_in + bias`.
pub fn backward_linear(
    weight: &DenseMatrix,
    bias: &[f64],
    x_in: &[f64],
    upstream: &[f64],
) -> Result<(DenseMatrix, Vec<f64>, Vec<f64>)> {
    if weight.cols() != x_in.len() || weight.rows() != upstream.len() || bias.len() != weight.rows() {
        return Err(Error::ShapeMismatch {
            expected: format!("{}x{} weight with matching input, bias and upstream", weight.rows(), weight.cols()),
            got: format!("input {}, bias {}, upstream {}", x_in.len(), bias.len(), upstream.len()),
        });
    }
    Ok(backward_linear_unchecked(weight, x_in, upstream))
}

pub(crate) fn backward_linear_unchecked(
    weight: &DenseMatrix,
    x_in: &[f64],
    upstream: &[f64],
) -> (DenseMatrix, Vec<f64>, Vec<f64>) {
    let mut d_weight = DenseMatrix::zeros(weight.rows(), weight.cols());
    let cols = weight.cols();
    for (r, &u) in upstream.iter().enumerate() {
        if u == 0.0 {
            continue;
        }
        for (d, &x) in d_weight.entries_mut()[r * cols..(r + 1) * cols].iter_mut().zip(x_in) {
            *d = u * x;
        }
    }
    (d_weight, upstream.to_vec(), weight.matvec_transposed(upstream))
}

/// Adjoints of the explicit residual step `x + σ(W x + b)`.
pub fn backward_explicit(
    layer: &DenseLayer,
    x_in: &[f64],
    activation: Activation,
    upstream: &[f64],
) -> (DenseMatrix, Vec<f64>, Vec<f64>) {
    let z = layer.pre_activation(x_in);
    let gated: Vec<f64> = z.iter().zip(upstream).map(|(&z, &u)| activation.derivative(z) * u).collect();
    let (d_weight, d_bias, through) = backward_linear_unchecked(&layer.weight, x_in, &gated);
    let d_input = through.iter().zip(upstream).map(|(t, u)| t + u).collect();
    (d_weight, d_bias, d_input)
}

/// A model whose MSE loss gradient can be audited by central differences.
pub trait Differentiable: Clone {
    fn params(&self) -> Vec<f64>;
    fn set_params(&mut self, params: &[f64]);
    /// MSE loss against `target` with gradients w.r.t. parameters and input.
    fn loss_and_grad(&self, input: &[f64], target: &[f64]) -> Result<(f64, Vec<f64>, Vec<f64>)>;
    fn loss(&self, input: &[f64], target: &[f64]) -> Result<f64>;
    /// All ReLU gates evaluated on `input`; empty for smooth models.
    fn gate_signature(&self, input: &[f64]) -> Result<Vec<bool>>;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FiniteDiffReport {
    pub max_relative_error: f64,
    pub checked: usize,
    /// Perturbations that flipped at least one gate.
    pub skipped: usize,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(RELATIVE_ERROR_FLOOR)
}

/// Central differences over every parameter and every input coordinate.
pub fn finite_diff_check<M: Differentiable>(
    model: &M,
    input: &[f64],
    target: &[f64],
    epsilon: f64,
) -> Result<FiniteDiffReport> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::InvalidArgument(format!("epsilon must be positive, got {epsilon}")));
    }
    let (_, d_params, d_input) = model.loss_and_grad(input, target)?;
    let gates = model.gate_signature(input)?;
    let mut report = FiniteDiffReport {
        max_relative_error: 0.0,
        checked: 0,
        skipped: 0,
    };

    let params = model.params();
    let mut probe = model.clone();
    let mut shifted = params.clone();
    for (i, &analytic) in d_params.iter().enumerate() {
        let mut eval = |delta: f64| -> Result<(f64, bool)> {
            shifted[i] = params[i] + delta;
            probe.set_params(&shifted);
            let same = probe.gate_signature(input)? == gates;
            let loss = probe.loss(input, target)?;
            shifted[i] = params[i];
            Ok((loss, same))
        };
        let (plus, same_plus) = eval(epsilon)?;
        let (minus, same_minus) = eval(-epsilon)?;
        tally(&mut report, analytic, plus, minus, epsilon, same_plus && same_minus);
    }
    probe.set_params(&params);

    let mut x = input.to_vec();
    for (i, &analytic) in d_input.iter().enumerate() {
        x[i] = input[i] + epsilon;
        let same_plus = model.gate_signature(&x)? == gates;
        let plus = model.loss(&x, target)?;
        x[i] = input[i] - epsilon;
        let same_minus = model.gate_signature(&x)? == gates;
        let minus = model.loss(&x, target)?;
        x[i] = input[i];
        tally(&mut report, analytic, plus, minus, epsilon, same_plus && same_minus);
    }
    Ok(report)
}

fn tally(report: &mut FiniteDiffReport, analytic: f64, plus: f64, minus: f64, epsilon: f64, comparable: bool) {
    if !comparable {
        report.skipped += 1;
        return;
    }
    let numeric = (plus - minus) / (2.0 * epsilon);
    report.checked += 1;
    report.max_relative_error = report.max_relative_error.max(relative_error(analytic, numeric));
}

/// Affine model `y = A x + c` with MSE loss; the smooth reference case.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    pub weight: DenseMatrix,
    pub bias: Vec<f64>,
}

impl LinearModel {
    fn forward(&self, input: &[f64]) -> Vec<f64> {
        let mut y = self.weight.matvec(input);
        for (y, b) in y.iter_mut().zip(&self.bias) {
            *y += b;
        }
        y
    }
}

pub(crate) fn mse_and_seed(pred: &[f64], target: &[f64]) -> (f64, Vec<f64>) {
    let n = pred.len() as f64;
    let diff: Vec<f64> = pred.iter().zip(target).map(|(p, t)| p - t).collect();
    let loss = diff.iter().map(|d| d * d).sum::<f64>() / n;
    (loss, diff.into_iter().map(|d| 2.0 * d / n).collect())
}

impl Differentiable for LinearModel {
    fn params(&self) -> Vec<f64> {
        self.weight.entries().iter().chain(&self.bias).copied().collect()
    }

    fn set_params(&mut self, params: &[f64]) {
        let n = self.weight.entries().len();
        self.weight.entries_mut().copy_from_slice(&params[..n]);
        self.bias.copy_from_slice(&params[n..]);
    }

    fn loss_and_grad(&self, input: &[f64], target: &[f64]) -> Result<(f64, Vec<f64>, Vec<f64>)> {
        let (loss, seed) = mse_and_seed(&self.forward(input), target);
        let (dw, db, dx) = backward_linear(&self.weight, &self.bias, input, &seed)?;
        Ok((loss, dw.entries().iter().chain(&db).copied().collect(), dx))
    }

    fn loss(&self, input: &[f64], target: &[f64]) -> Result<f64> {
        Ok(mse_and_seed(&self.forward(input), target).0)
    }

    fn gate_signature(&self, _input: &[f64]) -> Result<Vec<bool>> {
        Ok(Vec::new())
    }
}
