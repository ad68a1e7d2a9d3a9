//! Numerical certification of the implicit block dynamics: the certified
//! per-coordinate bound, the closed form of the comparison sequence, the
//! one-dimensional sandwich, divergence witnesses and forecast error curves.

mod curve;

pub use curve::{curve_csv, error_curve, CurvePoint, ForecastMode};

use crate::block::{direct::substitute, TriangularBlock};
use crate::math::{norm_inf, relu, DenseMatrix};
use crate::{Error, Result};

/// `P = min λ`, `Q = max |α|`, `B = max |b|` over a block sequence.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabilityConstants {
    pub p: f64,
    pub q: f64,
    pub b: f64,
}

pub fn stability_constants(blocks: &[TriangularBlock]) -> Result<StabilityConstants> {
    let Some(first) = blocks.first() else {
        return Err(Error::InvalidArgument("at least one block is required".into()));
    };
    let dim = first.dim();
    if blocks.iter().any(|b| b.dim() != dim) {
        return Err(Error::ShapeMismatch {
            expected: format!("blocks of dimension {dim}"),
            got: "blocks of mixed dimension".into(),
        });
    }
    let fold_abs = |xs: &[f64], acc: f64| xs.iter().fold(acc, |a, v| a.max(v.abs()));
    let mut c = StabilityConstants {
        p: f64::INFINITY,
        q: 0.0,
        b: 0.0,
    };
    for blk in blocks {
        c.p = blk.lambda().iter().fold(c.p, |a, &l| a.min(l));
        c.q = fold_abs(blk.couplings(), c.q);
        c.b = fold_abs(blk.bias(), c.b);
    }
    if !(c.p > 0.0) {
        return Err(Error::HypothesisViolated(format!("smallest diagonal magnitude is {}", c.p)));
    }
    Ok(c)
}

/// Per-coordinate bound on `|x_n^(m)|` valid for every `n` and every
/// ordering of the blocks. Coordinate `m` (1-based) gets
/// `|x0_m| + ((m-1) Q S_{m-1} + B)(1+P)/P`, and `S_m` is the running
/// maximum of these values.
pub fn certified_bound(blocks: &[TriangularBlock], x0: &[f64]) -> Result<Vec<f64>> {
    let c = stability_constants(blocks)?;
    let dim = blocks[0].dim();
    if x0.len() != dim {
        return Err(Error::ShapeMismatch {
            expected: format!("initial state of length {dim}"),
            got: format!("length {}", x0.len()),
        });
    }
    let factor = (1.0 + c.p) / c.p;
    let mut envelope = 0.0_f64;
    let mut out = Vec::with_capacity(dim);
    for (m, x) in x0.iter().enumerate() {
        let drive = m as f64 * c.q * envelope + c.b;
        envelope = envelope.max(x.abs() + drive * factor);
        out.push(envelope);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityReport {
    pub constants: StabilityConstants,
    pub bound: Vec<f64>,
    /// Largest `|x^(m)|` seen after any block application.
    pub observed: Vec<f64>,
    pub steps: usize,
    pub pass: bool,
}

impl StabilityReport {
    /// Smallest `bound - observed`, negative on failure.
    pub fn margin(&self) -> f64 {
        self.bound
            .iter()
            .zip(&self.observed)
            .map(|(b, o)| b - o)
            .fold(f64::INFINITY, f64::min)
    }
}

/// Applies the whole stack `steps` times from `x0` and compares the
/// per-coordinate maxima with [`certified_bound`].
pub fn rollout_certify(blocks: &[TriangularBlock], x0: &[f64], steps: usize) -> Result<StabilityReport> {
    let bound = certified_bound(blocks, x0)?;
    let constants = stability_constants(blocks)?;
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("initial state must be finite".into()));
    }
    let mut observed: Vec<f64> = x0.iter().map(|v| v.abs()).collect();
    let mut x = x0.to_vec();
    for _ in 0..steps {
        for blk in blocks {
            x = substitute(blk, &x).0;
            for (o, v) in observed.iter_mut().zip(&x) {
                *o = o.max(v.abs());
            }
        }
    }
    let pass = observed.iter().zip(&bound).all(|(o, b)| o <= b);
    Ok(StabilityReport {
        constants,
        bound,
        observed,
        steps,
        pass,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LemmaCheck {
    pub recursive: f64,
    pub closed_form: f64,
    pub abs_diff: f64,
}

/// Comparison sequence of one coordinate, by recursion and in closed form.
///
/// Indexing follows the sequence: `lambdas[k-1]` is `λ_k` and `x_path[k-1]`
/// holds the lower coordinates `x_k^(j)` for `k = 1..=n`, while
/// `alphas[k]` and `biases[k]` are the couplings and bias used to go from
/// step `k` to `k+1`. Every `alphas[k]` must match `x_path[k]` in length.
pub fn lemma_vn_check(
    lambdas: &[f64],
    alphas: &[Vec<f64>],
    biases: &[f64],
    x_path: &[Vec<f64>],
    x0: f64,
    n: usize,
) -> Result<LemmaCheck> {
    if lambdas.len() < n || alphas.len() < n || biases.len() < n || x_path.len() < n {
        return Err(Error::ShapeMismatch {
            expected: format!("at least {n} steps of λ, α, b and x"),
            got: format!("{} / {} / {} / {}", lambdas.len(), alphas.len(), biases.len(), x_path.len()),
        });
    }
    if let Some(k) = (0..n).find(|&k| alphas[k].len() != x_path[k].len()) {
        return Err(Error::ShapeMismatch {
            expected: format!("couplings matching the path at step {k}"),
            got: format!("{} couplings, {} coordinates", alphas[k].len(), x_path[k].len()),
        });
    }
    if let Some(l) = lambdas[..n].iter().find(|l| !(**l > 0.0)) {
        return Err(Error::HypothesisViolated(format!("λ must be positive, got {l}")));
    }
    let drive = |k: usize| -> f64 { alphas[k].iter().zip(&x_path[k]).map(|(a, x)| a * x).sum::<f64>() + biases[k] };

    let mut v = x0;
    for k in 0..n {
        v = (v + drive(k)) / (1.0 + lambdas[k]);
    }

    let tail = |from: usize| -> f64 { (from..=n).map(|l| 1.0 / (1.0 + lambdas[l - 1])).product() };
    let mut closed = x0 * tail(1);
    for k in 1..=n {
        closed += tail(k) * drive(k - 1);
    }
    Ok(LemmaCheck {
        recursive: v,
        closed_form: closed,
        abs_diff: (v - closed).abs(),
    })
}

/// One-dimensional block applied repeatedly: returns, per step,
/// `(x_n, v_n)` where `v` is the comparison sequence started at `x0`.
pub fn sandwich_trace(lambda: f64, bias: f64, x0: f64, steps: usize) -> Result<Vec<(f64, f64)>> {
    let blk = TriangularBlock::new(vec![lambda], Vec::new(), vec![bias])?;
    let mut x = x0;
    let mut v = x0;
    let mut out = Vec::with_capacity(steps);
    for _ in 0..steps {
        x = substitute(&blk, &[x]).0[0];
        v = (v + bias) / (1.0 + lambda);
        out.push((x, v));
    }
    Ok(out)
}

/// Whether `min(x0, v_n) <= x_n <= max(x0, v_n)` at every step, up to
/// `slack` of rounding.
pub fn sandwich_holds(x0: f64, trace: &[(f64, f64)], slack: f64) -> bool {
    trace
        .iter()
        .all(|&(x, v)| x >= x0.min(v) - slack && x <= x0.max(v) + slack)
}

/// Operational divergence level for counterexample rollouts.
pub const DIVERGENCE_THRESHOLD: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WitnessReport {
    /// Stack pass after which the state first exceeded the threshold.
    pub diverged_at: Option<usize>,
    pub max_abs: f64,
}

/// Breaks the hypothesis of the stack: block `block` gets diagonal `+0.5`
/// at coordinate `coord` and bias `bias > 0` there; the stack is then
/// iterated explicitly, `x <- x + ReLU(W x + b)`.
///
/// At coordinate 0 with `bias > -x0/2` growth by at least 1.5 per pass is
/// certain. Deeper coordinates can be held below their gate by negative
/// coupling drive from upstream.
pub fn divergence_witness(
    blocks: &[TriangularBlock],
    block: usize,
    coord: usize,
    bias: f64,
    x0: &[f64],
    max_steps: usize,
) -> Result<WitnessReport> {
    if !(bias > 0.0 && bias.is_finite()) {
        return Err(Error::InvalidArgument(format!("witness bias must be positive, got {bias}")));
    }
    let dim = blocks.first().map_or(0, |b| b.dim());
    if block >= blocks.len() || coord >= dim || x0.len() != dim {
        return Err(Error::InvalidArgument(format!(
            "witness position ({block}, {coord}) outside a stack of {} blocks of dimension {dim}",
            blocks.len()
        )));
    }
    let mut layers: Vec<(DenseMatrix, Vec<f64>)> = blocks.iter().map(|b| (b.weight_matrix(), b.bias().to_vec())).collect();
    let (w, b) = &mut layers[block];
    w.set(coord, coord, 0.5);
    b[coord] = bias;

    let mut x = x0.to_vec();
    let mut max_abs = norm_inf(&x);
    for step in 1..=max_steps {
        for (w, b) in &layers {
            let mut s = w.matvec(&x);
            for (s, b) in s.iter_mut().zip(b) {
                *s += b;
            }
            for (x, r) in x.iter_mut().zip(relu(&s)) {
                *x += r;
            }
        }
        max_abs = norm_inf(&x);
        if !(max_abs <= DIVERGENCE_THRESHOLD) {
            return Ok(WitnessReport {
                diverged_at: Some(step),
                max_abs,
            });
        }
    }
    Ok(WitnessReport {
        diverged_at: None,
        max_abs,
    })
}

#[cfg(test)]
mod tests;
