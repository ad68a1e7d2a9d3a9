//! Randomised verification suites shared by the command line and the
//! acceptance checks. Case `i` of every suite draws from child stream `i`
//! of the suite seed, so suites are reproducible and run in parallel.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::block::{solve_broyden, solve_direct, BroydenOptions, TriangularBlock, DEFAULT_DELTA};
use crate::grad::{finite_diff_check, Differentiable};
use crate::math::{norm_inf, SeededRng};
use crate::network::{ForecastNet, ModelKind, NetConfig};
use crate::stability::{divergence_witness, lemma_vn_check, rollout_certify, sandwich_holds, sandwich_trace};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Theorem,
    Witness,
    Lemma,
    Sandwich,
    Gradcheck,
    Solvers,
}

impl Suite {
    pub const ALL: [Suite; 6] = [
        Suite::Theorem,
        Suite::Witness,
        Suite::Lemma,
        Suite::Sandwich,
        Suite::Gradcheck,
        Suite::Solvers,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Suite::Theorem => "theorem",
            Suite::Witness => "witness",
            Suite::Lemma => "lemma",
            Suite::Sandwich => "sandwich",
            Suite::Gradcheck => "gradcheck",
            Suite::Solvers => "solvers",
        }
    }

    pub fn default_cases(self) -> usize {
        match self {
            Suite::Theorem | Suite::Witness => 100,
            Suite::Gradcheck => 5,
            _ => 1000,
        }
    }

    pub fn run(self, cases: usize, seed: u64) -> Result<SuiteReport> {
        if cases == 0 {
            return Err(Error::InvalidArgument("a suite needs at least one case".into()));
        }
        match self {
            Suite::Theorem => theorem_suite(cases, seed, THEOREM_STEPS),
            Suite::Witness => witness_suite(cases, seed),
            Suite::Lemma => lemma_suite(cases, seed),
            Suite::Sandwich => sandwich_suite(cases, seed),
            Suite::Gradcheck => gradcheck_suite(cases, seed),
            Suite::Solvers => solver_suite(cases, seed),
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Suite::ALL
            .into_iter()
            .find(|x| x.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown suite '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteReport {
    pub suite: Suite,
    pub pass: bool,
    pub cases: usize,
    /// Worst observed value of the suite's metric.
    pub worst: f64,
    /// What `worst` measures and the limit it is held to.
    pub metric: String,
    pub detail: String,
}

impl SuiteReport {
    pub fn line(&self) -> String {
        format!(
            "{} {} cases={} {}={:e} {}",
            self.suite,
            if self.pass { "pass" } else { "fail" },
            self.cases,
            self.metric,
            self.worst,
            self.detail
        )
        .trim_end()
        .to_string()
    }
}

pub const THEOREM_STEPS: usize = 10_000;
pub const WITNESS_STEPS: usize = 1000;
pub const WITNESS_RATE: f64 = 0.95;
pub const LEMMA_TOL: f64 = 1e-10;
pub const SANDWICH_STEPS: usize = 1000;
pub const SOLVER_AGREEMENT: f64 = 1e-8;
pub const DIRECT_RESIDUAL: f64 = 1e-12;
pub const GRADCHECK_TOL: f64 = 1e-5;
pub const GRADCHECK_EPS: f64 = 1e-6;

/// Random constrained stack with `M ∈ 1..=16`, `K ∈ 1..=8` and a start in
/// `[-1, 1]^M`.
pub fn random_stack(rng: &mut SeededRng) -> Result<(Vec<TriangularBlock>, Vec<f64>)> {
    let dim = 1 + rng.index(16);
    let k = 1 + rng.index(8);
    let blocks = (0..k)
        .map(|_| TriangularBlock::random(dim, DEFAULT_DELTA, rng))
        .collect::<Result<_>>()?;
    let x0 = (0..dim).map(|_| rng.uniform(-1.0, 1.0)).collect();
    Ok((blocks, x0))
}

fn cases<T: Send>(n: usize, seed: u64, f: impl Fn(SeededRng) -> Result<T> + Sync) -> Result<Vec<T>> {
    let root = SeededRng::new(seed);
    (0..n as u64).into_par_iter().map(|i| f(root.child(i))).collect()
}

pub fn theorem_suite(n: usize, seed: u64, steps: usize) -> Result<SuiteReport> {
    let outcomes = cases(n, seed, |mut rng| {
        let (blocks, x0) = random_stack(&mut rng)?;
        let r = rollout_certify(&blocks, &x0, steps)?;
        let rel = r
            .bound
            .iter()
            .zip(&r.observed)
            .map(|(b, o)| (b - o) / b.max(f64::MIN_POSITIVE))
            .fold(f64::INFINITY, f64::min);
        Ok((r.pass, rel))
    })?;
    let failures = outcomes.iter().filter(|o| !o.0).count();
    Ok(SuiteReport {
        suite: Suite::Theorem,
        pass: failures == 0,
        cases: n,
        worst: outcomes.iter().map(|o| o.1).fold(f64::INFINITY, f64::min),
        metric: "min_relative_margin".into(),
        detail: format!("failures={failures} steps={steps}"),
    })
}

/// The theorem suite's stacks with the hypothesis broken at coordinate 0
/// of a random block (bias there set to 1); a random coordinate is tried as
/// well and only reported.
pub fn witness_suite(n: usize, seed: u64) -> Result<SuiteReport> {
    let outcomes = cases(n, seed, |mut rng| {
        let (blocks, x0) = random_stack(&mut rng)?;
        let mut pick = rng.child(u64::MAX);
        let b = pick.index(blocks.len());
        let m = pick.index(x0.len());
        let root = divergence_witness(&blocks, b, 0, 1.0, &x0, WITNESS_STEPS)?;
        let any = divergence_witness(&blocks, b, m, 1.0, &x0, WITNESS_STEPS)?;
        Ok((root.diverged_at.is_some(), any.diverged_at.is_some()))
    })?;
    let rate = outcomes.iter().filter(|o| o.0).count() as f64 / n as f64;
    let any_rate = outcomes.iter().filter(|o| o.1).count() as f64 / n as f64;
    Ok(SuiteReport {
        suite: Suite::Witness,
        pass: rate >= WITNESS_RATE,
        cases: n,
        worst: rate,
        metric: "diverged_fraction".into(),
        detail: format!("random_coordinate_fraction={any_rate} steps={WITNESS_STEPS}"),
    })
}

pub fn lemma_suite(n: usize, seed: u64) -> Result<SuiteReport> {
    let outcomes = cases(n, seed, |mut rng| {
        let steps = rng.index(101);
        let width = rng.index(16);
        let lambdas: Vec<f64> = (0..steps).map(|_| rng.uniform(DEFAULT_DELTA, 1.0)).collect();
        let alphas: Vec<Vec<f64>> = (0..steps)
            .map(|_| (0..width).map(|_| rng.uniform(-1.0, 1.0)).collect())
            .collect();
        let path: Vec<Vec<f64>> = (0..steps)
            .map(|_| (0..width).map(|_| rng.uniform(-1.0, 1.0)).collect())
            .collect();
        let biases: Vec<f64> = (0..steps).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let x0 = rng.uniform(-1.0, 1.0);
        let c = lemma_vn_check(&lambdas, &alphas, &biases, &path, x0, steps)?;
        Ok(c.abs_diff / c.recursive.abs().max(1.0))
    })?;
    let worst = outcomes.iter().copied().fold(0.0, f64::max);
    Ok(SuiteReport {
        suite: Suite::Lemma,
        pass: worst <= LEMMA_TOL,
        cases: n,
        worst,
        metric: "max_relative_diff".into(),
        detail: String::new(),
    })
}

/// One-dimensional single-block trajectories.
pub fn sandwich_suite(n: usize, seed: u64) -> Result<SuiteReport> {
    let outcomes = cases(n, seed, |mut rng| {
        let lambda = (-rng.uniform(-1.0, 1.0)).clamp(DEFAULT_DELTA, 1.0);
        let bias = rng.uniform(-1.0, 1.0);
        let x0 = rng.uniform(-1.0, 1.0);
        let trace = sandwich_trace(lambda, bias, x0, SANDWICH_STEPS)?;
        let gap = trace
            .iter()
            .map(|&(x, v)| (x0.min(v) - x).max(x - x0.max(v)).max(0.0))
            .fold(0.0, f64::max);
        Ok((sandwich_holds(x0, &trace, 1e-12), gap))
    })?;
    let failures = outcomes.iter().filter(|o| !o.0).count();
    Ok(SuiteReport {
        suite: Suite::Sandwich,
        pass: failures == 0,
        cases: n,
        worst: outcomes.iter().map(|o| o.1).fold(0.0, f64::max),
        metric: "max_violation".into(),
        detail: format!("failures={failures} steps={SANDWICH_STEPS}"),
    })
}

pub fn solver_suite(n: usize, seed: u64) -> Result<SuiteReport> {
    let outcomes = cases(n, seed, |mut rng| {
        let dim = 1 + rng.index(32);
        let blk = TriangularBlock::random(dim, DEFAULT_DELTA, &mut rng)?;
        let x_in: Vec<f64> = (0..dim).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let (xd, rd) = solve_direct(&blk, &x_in)?;
        let (xb, rb) = solve_broyden(&blk, &x_in, BroydenOptions::default())?;
        let diff: Vec<f64> = xd.iter().zip(&xb).map(|(a, b)| a - b).collect();
        Ok((norm_inf(&diff), rd.final_residual, rb.converged))
    })?;
    let worst = outcomes.iter().map(|o| o.0).fold(0.0, f64::max);
    let worst_res = outcomes.iter().map(|o| o.1).fold(0.0, f64::max);
    let unconverged = outcomes.iter().filter(|o| !o.2).count();
    Ok(SuiteReport {
        suite: Suite::Solvers,
        pass: worst <= SOLVER_AGREEMENT && worst_res <= DIRECT_RESIDUAL && unconverged == 0,
        cases: n,
        worst,
        metric: "max_disagreement".into(),
        detail: format!("max_direct_residual={worst_res:e} unconverged={unconverged}"),
    })
}

/// Implicit network with `K = 2`, `M = 8` on a 16-point grid; every weight
/// and bias is jittered off its initial value so gates mix.
pub fn gradcheck_net(rng: &mut SeededRng) -> Result<ForecastNet> {
    let mut net = ForecastNet::init(&NetConfig {
        kind: ModelKind::ImplicitRelu,
        grid_size: 16,
        latent_dim: 8,
        blocks: 2,
        xavier_gain: 1.0,
        delta: DEFAULT_DELTA,
        seed: rng.index(1 << 30) as u64,
    })?;
    let p: Vec<f64> = net.params().iter().map(|v| v + rng.uniform(-0.3, 0.3)).collect();
    net.set_params(&p);
    net.project_weights(DEFAULT_DELTA)?;
    Ok(net)
}

pub fn gradcheck_suite(n: usize, seed: u64) -> Result<SuiteReport> {
    let outcomes = cases(n, seed, |mut rng| {
        let net = gradcheck_net(&mut rng)?;
        let input: Vec<f64> = (0..16).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let target: Vec<f64> = (0..16).map(|_| rng.uniform(-1.0, 1.0)).collect();
        finite_diff_check(&net, &input, &target, GRADCHECK_EPS)
    })?;
    let worst = outcomes.iter().map(|r| r.max_relative_error).fold(0.0, f64::max);
    let checked: usize = outcomes.iter().map(|r| r.checked).sum();
    let skipped: usize = outcomes.iter().map(|r| r.skipped).sum();
    Ok(SuiteReport {
        suite: Suite::Gradcheck,
        pass: worst <= GRADCHECK_TOL,
        cases: n,
        worst,
        metric: "max_relative_error".into(),
        detail: format!("checked={checked} skipped={skipped} epsilon={GRADCHECK_EPS:e}"),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for s in Suite::ALL {
            assert_eq!(s.as_str().parse::<Suite>().unwrap(), s);
        }
        assert!("all".parse::<Suite>().is_err());
        assert!(Suite::Lemma.run(0, 1).is_err());
    }

    #[test]
    fn small_runs_pass_and_repeat() {
        for s in Suite::ALL {
            let n = if s == Suite::Theorem { 4 } else { 20 };
            let a = if s == Suite::Theorem {
                theorem_suite(n, 3, 500).unwrap()
            } else {
                s.run(n, 3).unwrap()
            };
            assert!(a.pass, "{}", a.line());
            let b = if s == Suite::Theorem {
                theorem_suite(n, 3, 500).unwrap()
            } else {
                s.run(n, 3).unwrap()
            };
            assert_eq!(a, b);
            assert!(a.line().starts_with(&format!("{s} pass cases={n} ")));
        }
    }
}
