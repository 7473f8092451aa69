mod common;

use common::*;
use mlrpca_core::multilevel::{
    build_interpolation, epsilon_bound, halving_sequence, select_levels, validate_explicit_level,
    MultilevelDiagnostics, RestrictionChain,
};
use mlrpca_core::{DenseMatrix, Error};
use proptest::prelude::*;

#[test]
fn six_column_operator_matches_worked_example() {
    let r = build_interpolation(6).unwrap().to_dense();
    let expect = DenseMatrix::from_rows(&[
        &[2.0, 2.0, 1.0, 0.0, 0.0, 0.0],
        &[0.0, 0.0, 1.0, 2.0, 1.0, 0.0],
        &[0.0, 0.0, 0.0, 0.0, 1.0, 2.0],
    ])
    .unwrap()
    .scale(0.5)
    .transpose();
    assert_eq!(r, expect);
    let ones = DenseMatrix::filled(4, 3, 1.0);
    assert_eq!(naive_matmul(&ones, &expect.transpose()), DenseMatrix::filled(4, 6, 1.0));
}

#[test]
fn rows_sum_to_one() {
    for n in [2, 3, 5, 6, 7, 8, 63, 64, 400, 1024] {
        let r = build_interpolation(n).unwrap();
        assert_eq!(r.n_coarse(), n.div_ceil(2));
        for s in r.row_sums() {
            assert_eq!(s, 1.0, "n = {n}");
        }
    }
    assert!(matches!(build_interpolation(1), Err(Error::InvalidArgument(_))));
}

#[test]
fn chain_examples() {
    let c = RestrictionChain::build(8, 2, false).unwrap();
    assert_eq!(c.levels().len(), 2);
    assert_eq!(c.dense().shape(), (8, 2));
    assert_eq!(oracle_rank(&c.dense()), 2);
    let stacked = naive_matmul(&c.levels()[0].to_dense(), &c.levels()[1].to_dense());
    assert!(max_abs_diff(&stacked, &c.dense()) < 1e-15);

    let c = RestrictionChain::build(6, 3, false).unwrap();
    assert_eq!(c.levels().len(), 1);
    assert_eq!(c.dense(), build_interpolation(6).unwrap().to_dense());

    let c = RestrictionChain::build(64, 8, true).unwrap();
    assert!((oracle_sigma(&c.dense())[0] - 1.0).abs() < 1e-10);

    match RestrictionChain::build(64, 5, true) {
        Err(Error::InvalidArgument(msg)) => assert!(msg.contains('8') && msg.contains('4'), "{msg}"),
        other => panic!("expected invalid argument, got {other:?}"),
    }
}

#[test]
fn identity_chain_is_exact() {
    let c = RestrictionChain::identity(5).unwrap();
    assert_eq!(c.spectral_norm(), 1.0);
    let x = uniform(&mut rng(1), 3, 5);
    assert_eq!(c.restrict(&x).unwrap(), x);
    assert_eq!(c.prolong(&x).unwrap(), x);
}

#[test]
fn select_levels_examples() {
    assert_eq!(select_levels(1024, 5, 1, 10_000).unwrap(), 8);
    assert_eq!(select_levels(400, 2, 1, 3072).unwrap(), 4);
    assert!(matches!(
        select_levels(6, 10, 1, 100),
        Err(Error::ConstraintViolation(_))
    ));
    assert!(matches!(select_levels(64, 2, 1, 3), Err(Error::ConstraintViolation(_))));
    assert!(validate_explicit_level(64, 0, 1, 100).is_err());
    assert!(validate_explicit_level(64, 5, 1, 100).is_err());
    assert!(validate_explicit_level(64, 8, 1, 100).is_ok());
}

#[test]
fn select_levels_matches_enumeration() {
    for n in [6usize, 25, 100, 400, 512, 1000] {
        for rank in 1..6 {
            for m in [8usize, 50, 3000] {
                let expect = halving_sequence(n)
                    .into_iter()
                    .filter(|&k| k > rank && 2 * k <= m + 1)
                    .min();
                match (select_levels(n, rank, 1, m), expect) {
                    (Ok(got), Some(want)) => assert_eq!(got, want, "n={n} rank={rank} m={m}"),
                    (Err(_), None) => {}
                    (got, want) => panic!("n={n} rank={rank} m={m}: {got:?} vs {want:?}"),
                }
            }
        }
    }
}

#[test]
fn restrict_and_prolong_ones() {
    let c = RestrictionChain::build(6, 3, false).unwrap();
    let r = c.restrict(&DenseMatrix::filled(2, 6, 1.0)).unwrap();
    let col_sums: Vec<f64> = (0..3)
        .map(|j| build_interpolation(6).unwrap().to_dense().col(j).iter().sum())
        .collect();
    for i in 0..2 {
        for j in 0..3 {
            assert_eq!(r[(i, j)], col_sums[j]);
        }
    }
    assert_eq!(
        c.prolong(&DenseMatrix::filled(5, 3, 1.0)).unwrap(),
        DenseMatrix::filled(5, 6, 1.0)
    );
    assert_eq!(c.prolong(&DenseMatrix::zeros(5, 3)).unwrap(), DenseMatrix::zeros(5, 6));
    assert!(matches!(
        c.restrict(&DenseMatrix::zeros(2, 5)),
        Err(Error::InvalidArgument(_))
    ));
    assert!(matches!(
        c.prolong(&DenseMatrix::zeros(2, 4)),
        Err(Error::InvalidArgument(_))
    ));
}

#[test]
fn epsilon_examples() {
    let id = RestrictionChain::identity(4).unwrap();
    let lh = uniform(&mut rng(2), 6, 4);
    assert!(epsilon_bound(&lh, &id).unwrap().abs() < 1e-12);
    let c = RestrictionChain::build(16, 4, true).unwrap();
    assert_eq!(epsilon_bound(&DenseMatrix::zeros(6, 4), &c).unwrap(), 0.0);
    assert!(epsilon_bound(&DenseMatrix::zeros(6, 3), &c).is_err());
}

#[test]
fn diagnostics_take_positive_part() {
    let d = MultilevelDiagnostics::new(0.5, vec![-1.0, -0.5]);
    assert_eq!(d.delta_max, 0.0);
    let d = MultilevelDiagnostics::new(0.0, vec![-1.0, 0.25, 0.1]);
    assert_eq!(d.delta_max, 0.25);
}

#[test]
fn left_inverse_recovers_coarse_coordinates() {
    for (n, nc) in [(6, 3), (64, 8), (400, 25)] {
        let c = RestrictionChain::build(n, nc, true).unwrap();
        let pinv = c.left_inverse().unwrap().pseudo_inverse();
        let eye = DenseMatrix::identity(nc);
        assert!(max_abs_diff(&pinv.matmul(&c.dense()), &eye) < 1e-10, "n = {n}");
        let lh = uniform(&mut rng(n as u64), 3, nc);
        let back = c.left_inverse().unwrap().apply(&c.prolong(&lh).unwrap()).unwrap();
        assert!(max_abs_diff(&back, &lh) < 1e-10);
    }
}

fn arb_chain() -> impl Strategy<Value = (usize, usize)> {
    (2usize..80).prop_flat_map(|n| {
        let seq = halving_sequence(n);
        proptest::sample::select(seq).prop_map(move |k| (n, k))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn restrict_and_prolong_match_dense((n, nc) in arb_chain(), m in 1usize..6, seed in any::<u64>(), normalize in any::<bool>()) {
        let c = RestrictionChain::build(n, nc, normalize).unwrap();
        let r = c.dense();
        let mut g = rng(seed);
        let x = uniform(&mut g, m, n);
        let xh = uniform(&mut g, m, nc);
        prop_assert!(max_abs_diff(&c.restrict(&x).unwrap(), &naive_matmul(&x, &r)) < 1e-12);
        prop_assert!(max_abs_diff(&c.prolong(&xh).unwrap(), &naive_matmul(&xh, &r.transpose())) < 1e-12);
        let round = c.restrict(&c.prolong(&xh).unwrap()).unwrap();
        let gram = naive_matmul(&r.transpose(), &r);
        prop_assert!(max_abs_diff(&round, &naive_matmul(&xh, &gram)) < 1e-12);
        prop_assert!(max_abs_diff(&c.gram(), &gram) < 1e-12);
    }

    #[test]
    fn normalized_chain_has_unit_norm((n, nc) in arb_chain()) {
        let c = RestrictionChain::build(n, nc, true).unwrap();
        prop_assert!((oracle_sigma(&c.dense())[0] - 1.0).abs() < 1e-10);
        prop_assert_eq!(oracle_rank(&c.dense()), nc);
    }

    #[test]
    fn nuclear_norm_preservation((n, nc) in arb_chain(), m in 1usize..8, seed in any::<u64>()) {
        let c = RestrictionChain::build(n, nc, true).unwrap();
        let lh = uniform(&mut rng(seed), m, nc);
        let fine = oracle_nuclear(&c.prolong(&lh).unwrap());
        let coarse = oracle_nuclear(&lh);
        let eps = epsilon_bound(&lh, &c).unwrap();
        prop_assert!(eps >= 0.0);
        prop_assert!(coarse >= fine - 1e-8);
        prop_assert!(fine >= coarse - eps - 1e-8);
    }
}
