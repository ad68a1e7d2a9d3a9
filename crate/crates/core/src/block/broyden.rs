use super::{SolveMethod, SolveReport, TriangularBlock};
use crate::math::norm_inf;
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BroydenOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for BroydenOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 50,
        }
    }
}

/// Broyden's first ("good") method on `g(x) = x - x_in - ReLU(W x + b)`.
///
/// Starts from `x_in` with the identity as inverse-Jacobian estimate and
/// applies the Sherman–Morrison form of the rank-one secant update
/// `H ← H + (Δx - H Δg) Δxᵀ H / (Δxᵀ H Δg)`. Full steps, no line search.
pub fn solve_broyden(block: &TriangularBlock, x_in: &[f64], opts: BroydenOptions) -> Result<(Vec<f64>, SolveReport)> {
    block.check_input(x_in)?;
    if !(opts.tol > 0.0) {
        return Err(crate::Error::InvalidArgument(format!("tolerance must be positive, got {}", opts.tol)));
    }
    let n = block.dim();
    let mut h = vec![0.0; n * n];
    for i in 0..n {
        h[i * n + i] = 1.0;
    }
    let mut x = x_in.to_vec();
    let mut g = block.residual(x_in, &x);
    let mut residual = norm_inf(&g);
    let mut iterations = 0;

    while residual > opts.tol && iterations < opts.max_iter {
        let dx: Vec<f64> = (0..n).map(|i| -(0..n).map(|j| h[i * n + j] * g[j]).sum::<f64>()).collect();
        let x_next: Vec<f64> = x.iter().zip(&dx).map(|(a, d)| a + d).collect();
        let g_next = block.residual(x_in, &x_next);
        let dg: Vec<f64> = g_next.iter().zip(&g).map(|(a, b)| a - b).collect();

        let h_dg: Vec<f64> = (0..n).map(|i| (0..n).map(|j| h[i * n + j] * dg[j]).sum()).collect();
        let denom: f64 = dx.iter().zip(&h_dg).map(|(a, b)| a * b).sum();
        iterations += 1;
        x = x_next;
        g = g_next;
        residual = norm_inf(&g);
        if denom == 0.0 || !denom.is_finite() {
            break;
        }
        // dxᵀ H
        let dx_h: Vec<f64> = (0..n).map(|j| (0..n).map(|i| dx[i] * h[i * n + j]).sum()).collect();
        for i in 0..n {
            let u = (dx[i] - h_dg[i]) / denom;
            if u == 0.0 {
                continue;
            }
            for j in 0..n {
                h[i * n + j] += u * dx_h[j];
            }
        }
    }

    let converged = residual <= opts.tol;
    Ok((
        x,
        SolveReport {
            method: SolveMethod::Broyden,
            iterations,
            final_residual: residual,
            converged,
        },
    ))
}
