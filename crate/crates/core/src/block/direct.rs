use super::{GateMask, SolveMethod, SolveReport, TriangularBlock};
use crate::math::norm_inf;
use crate::Result;

/// Exact fixed point of `x = x_in + ReLU(W x + b)` by forward substitution.
///
/// For coordinate `m`, with `c = Σ_{j<m} α[m][j] x_out[j] + b[m]` and
/// `s = -λ[m] x_in[m] + c`:
/// `x_out[m] = x_in[m]` when `s <= 0`, otherwise `(x_in[m] + c) / (1 + λ[m])`.
pub fn solve_direct(block: &TriangularBlock, x_in: &[f64]) -> Result<(Vec<f64>, SolveReport)> {
    let (x_out, _, report) = solve_direct_masked(block, x_in)?;
    Ok((x_out, report))
}

/// [`solve_direct`] that also returns the branch taken per coordinate.
pub fn solve_direct_masked(block: &TriangularBlock, x_in: &[f64]) -> Result<(Vec<f64>, GateMask, SolveReport)> {
    block.check_input(x_in)?;
    let (x_out, active) = substitute(block, x_in);
    let final_residual = norm_inf(&block.residual(x_in, &x_out));
    let report = SolveReport {
        method: SolveMethod::Direct,
        iterations: 1,
        final_residual,
        converged: final_residual.is_finite(),
    };
    Ok((x_out, GateMask { active }, report))
}

/// Forward substitution without the residual audit; used on hot paths that
/// have already validated their inputs.
pub(crate) fn substitute(block: &TriangularBlock, x_in: &[f64]) -> (Vec<f64>, Vec<bool>) {
    let dim = block.dim();
    let lambda = block.lambda();
    let bias = block.bias();
    let mut x_out = vec![0.0; dim];
    let mut active = vec![false; dim];
    for m in 0..dim {
        let coupled: f64 = block.coupling_row(m).iter().zip(&x_out[..m]).map(|(a, v)| a * v).sum();
        let c = coupled + bias[m];
        let s = -lambda[m] * x_in[m] + c;
        if s > 0.0 {
            x_out[m] = (x_in[m] + c) / (1.0 + lambda[m]);
            active[m] = true;
        } else {
            x_out[m] = x_in[m];
        }
    }
    (x_out, active)
}
