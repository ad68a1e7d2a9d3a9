use proptest::prelude::*;

use super::*;
use crate::block::direct::substitute;
use crate::math::SeededRng;

fn block(lambda: &[f64], couplings: &[f64], bias: &[f64]) -> TriangularBlock {
    TriangularBlock::new(lambda.to_vec(), couplings.to_vec(), bias.to_vec()).unwrap()
}

fn random_stack(rng: &mut SeededRng, dim: usize, k: usize) -> Vec<TriangularBlock> {
    (0..k).map(|_| TriangularBlock::random(dim, 0.01, rng).unwrap()).collect()
}

#[test]
fn bound_examples() {
    assert_eq!(certified_bound(&[block(&[0.3], &[], &[0.0])], &[1.0]).unwrap(), vec![1.0]);
    assert_eq!(certified_bound(&[block(&[1.0], &[], &[1.0])], &[0.0]).unwrap(), vec![2.0]);
    // P = 0.5, Q = 2, B = 1: S1 = 0.5 + 1*3, S2 = 1 + (2*3.5 + 1)*3
    let blocks = [block(&[0.5, 0.9], &[2.0], &[1.0, -0.2]), block(&[1.0, 0.7], &[-0.1], &[0.0, 0.4])];
    assert_eq!(certified_bound(&blocks, &[0.5, -1.0]).unwrap(), vec![3.5, 25.0]);
    let c = stability_constants(&blocks).unwrap();
    assert_eq!((c.p, c.q, c.b), (0.5, 2.0, 1.0));
    assert!(certified_bound(&blocks, &[0.0]).is_err());
    assert!(certified_bound(&[], &[]).is_err());
}

#[test]
fn hand_iterated_recursion_stays_below_two() {
    let blk = [block(&[1.0], &[], &[1.0])];
    let r = rollout_certify(&blk, &[0.0], 60).unwrap();
    let trace = sandwich_trace(1.0, 1.0, 0.0, 3).unwrap();
    assert_eq!(trace.iter().map(|t| t.0).collect::<Vec<_>>(), vec![0.5, 0.75, 0.875]);
    assert!(r.pass);
    assert!((r.observed[0] - 1.0).abs() < 1e-15);
    assert_eq!(r.bound, vec![2.0]);
    assert!((r.margin() - 1.0).abs() < 1e-15);
}

#[test]
fn zero_dynamics_stay_at_zero() {
    let mut rng = SeededRng::new(1);
    let mut blocks = random_stack(&mut rng, 4, 3);
    for b in &mut blocks {
        b.bias_mut().fill(0.0);
    }
    let r = rollout_certify(&blocks, &[0.0; 4], 200).unwrap();
    assert!(r.pass);
    assert!(r.observed.iter().all(|&o| o == 0.0));
}

#[test]
fn random_stacks_stay_within_bounds() {
    let mut rng = SeededRng::new(2024);
    for _ in 0..20 {
        let dim = 1 + rng.index(5);
        let k = 1 + rng.index(4);
        let blocks = random_stack(&mut rng, dim, k);
        let x0: Vec<f64> = (0..dim).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let r = rollout_certify(&blocks, &x0, 10_000).unwrap();
        assert!(r.pass, "{r:?}");
        assert!(r.observed.iter().all(|v| v.is_finite()));
    }
}

#[test]
fn lemma_examples() {
    let n = 3;
    let ones = vec![1.0; n];
    let empty = vec![Vec::new(); n];
    let c = lemma_vn_check(&ones, &empty, &vec![0.0; n], &empty, 1.0, n).unwrap();
    assert!((c.recursive - 0.125).abs() < 1e-15 && (c.closed_form - 0.125).abs() < 1e-15);
    let c = lemma_vn_check(&ones, &empty, &ones, &empty, 0.0, n).unwrap();
    assert!((c.recursive - 0.875).abs() < 1e-15 && (c.closed_form - 0.875).abs() < 1e-15);
    assert_eq!(lemma_vn_check(&ones, &empty, &ones, &empty, 0.3, 0).unwrap().closed_form, 0.3);
    assert!(lemma_vn_check(&ones[..2], &empty, &ones, &empty, 0.0, n).is_err());
    assert!(lemma_vn_check(&[1.0, 0.0, 1.0], &empty, &ones, &empty, 0.0, n).is_err());
    let bad_path = vec![vec![1.0]; n];
    assert!(lemma_vn_check(&ones, &empty, &ones, &bad_path, 0.0, n).is_err());
}

#[test]
fn lemma_with_couplings_by_hand() {
    // λ = 1, one coupling α = 2 against x = (1, 3), b = 0, x0 = 0:
    // v1 = 2/2 = 1, v2 = (1 + 6)/2 = 3.5
    let c = lemma_vn_check(&[1.0, 1.0], &[vec![2.0], vec![2.0]], &[0.0, 0.0], &[vec![1.0], vec![3.0]], 0.0, 2).unwrap();
    assert_eq!(c.recursive, 3.5);
    assert_eq!(c.closed_form, 3.5);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn lemma_closed_form_matches_recursion(seed in any::<u64>(), n in 0usize..=100, width in 0usize..12) {
        let mut rng = SeededRng::new(seed);
        let lambdas: Vec<f64> = (0..n).map(|_| rng.uniform(0.01, 1.0)).collect();
        let alphas: Vec<Vec<f64>> = (0..n).map(|_| (0..width).map(|_| rng.uniform(-1.0, 1.0)).collect()).collect();
        let path: Vec<Vec<f64>> = (0..n).map(|_| (0..width).map(|_| rng.uniform(-5.0, 5.0)).collect()).collect();
        let biases: Vec<f64> = (0..n).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let x0 = rng.uniform(-3.0, 3.0);
        let c = lemma_vn_check(&lambdas, &alphas, &biases, &path, x0, n).unwrap();
        prop_assert!(c.abs_diff <= 1e-10 * c.recursive.abs().max(1.0), "{c:?}");
    }

    #[test]
    fn sandwich_holds_for_a_repeated_block(
        lambda in 0.01f64..=1.0,
        bias in -1.0f64..=1.0,
        x0 in -3.0f64..=3.0,
    ) {
        let trace = sandwich_trace(lambda, bias, x0, 500).unwrap();
        prop_assert!(sandwich_holds(x0, &trace, 1e-12));
    }

    #[test]
    fn one_dimensional_bound_is_never_exceeded(
        lambdas in proptest::collection::vec(0.01f64..=1.0, 1..6),
        biases in proptest::collection::vec(-1.0f64..=1.0, 6),
        x0 in -3.0f64..=3.0,
    ) {
        let blocks: Vec<TriangularBlock> = lambdas.iter().zip(&biases).map(|(&l, &b)| block(&[l], &[], &[b])).collect();
        let r = rollout_certify(&blocks, &[x0], 300).unwrap();
        prop_assert!(r.pass, "{r:?}");
    }
}

#[test]
fn sandwich_can_fail_when_the_drive_changes() {
    // b = 1 then b = -10 with λ = 1 from 0: x = 0.5, 0.5 but v = 0.5, -4.75
    let up = block(&[1.0], &[], &[1.0]);
    let down = block(&[1.0], &[], &[-10.0]);
    let x1 = substitute(&up, &[0.0]).0[0];
    let x2 = substitute(&down, &[x1]).0[0];
    let v1 = (0.0 + 1.0) / 2.0;
    let v2 = (v1 - 10.0) / 2.0;
    assert_eq!((x1, x2), (0.5, 0.5));
    assert!(!sandwich_holds(0.0, &[(x1, v1), (x2, v2)], 0.0));
    // the certified bound is unaffected
    assert!(rollout_certify(&[up, down], &[0.0], 100).unwrap().pass);
}

#[test]
fn witness_diverges_where_the_constraint_holds_it() {
    let mut rng = SeededRng::new(77);
    let mut deep = 0;
    let cases = 60;
    for _ in 0..cases {
        let dim = 1 + rng.index(8);
        let k = 1 + rng.index(4);
        let blocks = random_stack(&mut rng, dim, k);
        let x0: Vec<f64> = (0..dim).map(|_| rng.uniform(-1.0, 1.0)).collect();
        let b = rng.index(blocks.len());
        let w = divergence_witness(&blocks, b, 0, 1.0, &x0, 1000).unwrap();
        assert!(w.diverged_at.is_some() && w.max_abs > DIVERGENCE_THRESHOLD, "{w:?}");
        let m = rng.index(dim);
        if divergence_witness(&blocks, b, m, 1.0, &x0, 1000).unwrap().diverged_at.is_some() {
            deep += 1;
        }
        let r = rollout_certify(&blocks, &x0, 1000).unwrap();
        assert!(r.observed.iter().all(|&o| o < DIVERGENCE_THRESHOLD));
    }
    // a random coordinate usually diverges too, but not always
    assert!(deep > cases / 2 && deep <= cases, "{deep}/{cases}");

    // first coordinate of a single block: growth by 1.5 per pass
    let blk = block(&[0.5], &[], &[0.0]);
    let w = divergence_witness(&[blk.clone()], 0, 0, 1e-9, &[1.0], 1000).unwrap();
    assert!(w.diverged_at.unwrap() <= 70);
    // gate shut from the start: nothing moves
    let w = divergence_witness(&[blk.clone()], 0, 0, 0.25, &[-1.0], 1000).unwrap();
    assert_eq!(w, WitnessReport { diverged_at: None, max_abs: 1.0 });
    assert!(divergence_witness(&[blk.clone()], 1, 0, 1.0, &[1.0], 10).is_err());
    assert!(divergence_witness(&[blk], 0, 0, 0.0, &[1.0], 10).is_err());
}

