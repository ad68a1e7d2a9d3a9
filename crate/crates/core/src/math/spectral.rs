use petgraph::algo::tarjan_scc;
use petgraph::graph::DiGraph;

use super::{dot, norm_inf, DenseMatrix};
use crate::{Error, Result};

const MAX_ITERATIONS: usize = 1000;
const RAYLEIGH_TOL: f64 = 1e-10;

/// Perron–Frobenius eigenvalue of a non-negative square matrix.
///
/// The matrix is split into its strongly connected components (the
/// irreducible diagonal blocks of its Frobenius normal form); λ_pf is the
/// largest block value. Singleton blocks contribute their diagonal entry, so
/// triangular and nilpotent matrices are exact. Larger blocks use power
/// iteration on `B + I` from the all-ones vector with a Rayleigh-quotient
/// stopping rule; the unit shift makes every irreducible block primitive.
pub fn pf_eigenvalue(m: &DenseMatrix) -> Result<f64> {
    if !m.is_square() {
        return Err(Error::ShapeMismatch {
            expected: "square matrix".into(),
            got: format!("{}x{}", m.rows(), m.cols()),
        });
    }
    let n = m.rows();
    for r in 0..n {
        for c in 0..n {
            if m.get(r, c) < 0.0 {
                return Err(Error::NegativeEntry { row: r, col: c });
            }
        }
    }
    if n == 0 {
        return Ok(0.0);
    }

    let mut graph = DiGraph::<(), ()>::with_capacity(n, n * n);
    let nodes: Vec<_> = (0..n).map(|_| graph.add_node(())).collect();
    for r in 0..n {
        for c in 0..n {
            if r != c && m.get(r, c) > 0.0 {
                graph.add_edge(nodes[r], nodes[c], ());
            }
        }
    }

    let mut best = 0.0f64;
    for component in tarjan_scc(&graph) {
        let idx: Vec<usize> = component.iter().map(|n| n.index()).collect();
        let value = if idx.len() == 1 {
            m.get(idx[0], idx[0])
        } else {
            irreducible_block_eigenvalue(m, &idx)
        };
        best = best.max(value);
    }
    Ok(best)
}

fn irreducible_block_eigenvalue(m: &DenseMatrix, idx: &[usize]) -> f64 {
    let k = idx.len();
    let mut block = DenseMatrix::zeros(k, k);
    for (i, &r) in idx.iter().enumerate() {
        for (j, &c) in idx.iter().enumerate() {
            block.set(i, j, m.get(r, c) + if i == j { 1.0 } else { 0.0 });
        }
    }

    let mut v = vec![1.0; k];
    let mut rayleigh = f64::NAN;
    for _ in 0..MAX_ITERATIONS {
        let w = block.matvec(&v);
        let next = dot(&v, &w) / dot(&v, &v);
        let scale = norm_inf(&w);
        v = w.into_iter().map(|x| x / scale).collect();
        let done = (next - rayleigh).abs() <= RAYLEIGH_TOL;
        rayleigh = next;
        if done {
            break;
        }
    }
    (rayleigh - 1.0).max(0.0)
}
