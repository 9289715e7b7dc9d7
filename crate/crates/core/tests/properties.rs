use std::collections::BTreeMap;

use proptest::prelude::*;
use trustworthy_core::feldman::{commit, verify};
use trustworthy_core::mpc::{Authorization, Direction, LocalCluster, Operand, Repr, SharedValue};
use trustworthy_core::reshare::{recovery_contribution, reshare, PairwiseMasks};
use trustworthy_core::shamir::{reconstruct, share, share_with_coeffs};
use trustworthy_core::{CommitmentGroup, Field, FieldParams, RandomStream, Share, MERSENNE_61};

fn open_public(v: &SharedValue) -> u64 {
    let mut v = v.clone();
    v.policy_ref = None;
    let all: Vec<u32> = (1..=v.n() as u32).collect();
    v.open(&Authorization::PublicAggregate, &all).unwrap().value()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn linearity(a in 0u64..MERSENNE_61, b in 0u64..MERSENNE_61, c in 0u64..MERSENNE_61, seed: u64) {
        let f = Field::mersenne61();
        let mut rng = RandomStream::from_u64(seed);
        let sa = share(f.elem(a), 3, 5, &mut rng).unwrap().shares;
        let sb = share(f.elem(b), 3, 5, &mut rng).unwrap().shares;
        let sum: Vec<Share> = sa.iter().zip(&sb).map(|(x, y)| Share::new(x.index, x.value + y.value)).collect();
        let scaled: Vec<Share> = sa.iter().map(|x| Share::new(x.index, x.value * f.elem(c))).collect();
        prop_assert_eq!(reconstruct(&sum, 3).unwrap(), f.elem(a) + f.elem(b));
        prop_assert_eq!(reconstruct(&scaled, 3).unwrap(), f.elem(a) * f.elem(c));
    }

    #[test]
    fn commitments_reject_any_perturbation(
        secret in 0u64..MERSENNE_61,
        k in 1usize..=5,
        victim in 0usize..5,
        delta in 1u64..MERSENNE_61,
        seed: u64,
    ) {
        let params = FieldParams::default_params();
        let f = params.field;
        let mut rng = RandomStream::from_u64(seed);
        let sharing = share(f.elem(secret), k, 5, &mut rng).unwrap();
        let c = commit(&params, &sharing.coefficients).unwrap();
        for s in &sharing.shares {
            prop_assert!(verify(&params, s, &c).unwrap());
        }
        let mut bad = sharing.shares[victim];
        bad.value += f.elem(delta);
        prop_assert!(!verify(&params, &bad, &c).unwrap());
    }

    #[test]
    fn small_group_commitments_reject_perturbation(coeffs in prop::collection::vec(0u64..31, 1..5), victim in 1u32..=5, delta in 1u64..31) {
        let params = FieldParams::new(Field::new(31).unwrap(), Some(CommitmentGroup::for_p31())).unwrap();
        let f = params.field;
        let fe: Vec<_> = coeffs.iter().map(|&c| f.elem(c)).collect();
        let shares = share_with_coeffs(fe[0], &fe[1..], 5).unwrap();
        let c = commit(&params, &fe).unwrap();
        let mut bad = shares[victim as usize - 1];
        bad.value += f.elem(delta);
        prop_assert!(!verify(&params, &bad, &c).unwrap());
    }

    #[test]
    fn mul_degree_reduction_is_consistent(a in 0u64..MERSENNE_61, b in 0u64..MERSENNE_61, seed: u64) {
        let f = Field::mersenne61();
        let mut c = LocalCluster::new(f, 3, 5, seed);
        let x = c.input(a, Repr::IntOnly, 0, None).unwrap();
        let y = c.input(b, Repr::IntOnly, 0, None).unwrap();
        let z = c.mul(&x, &y).unwrap();
        // reconstruct cross-checks every share against the first k
        let shares = z.int_shares.clone().unwrap();
        prop_assert_eq!(reconstruct(&shares, 3).unwrap(), f.elem(a) * f.elem(b));
        let mut rev = shares.clone();
        rev.reverse();
        prop_assert_eq!(reconstruct(&rev, 3).unwrap(), f.elem(a) * f.elem(b));
    }
}

#[test]
fn reshare_output_is_independent_of_secret() {
    // Z_5 has four nonzero evaluation points, so the exhaustive run uses
    // (3,4) -> (4,4). Every resharing tape (3 sub-polynomials of degree 3) is
    // enumerated and each triple of new shares must be uniform for every secret.
    let f = Field::new(5).unwrap();
    let triples = [[1usize, 2, 3], [1, 2, 4], [1, 3, 4], [2, 3, 4]];
    let lambdas = trustworthy_core::shamir::lagrange_coeffs(f, &[1, 2, 3], f.zero()).unwrap();
    let mut reference: Option<Vec<BTreeMap<[u64; 3], u32>>> = None;
    for secret in 0..5u64 {
        let old = share_with_coeffs(f.elem(secret), &[f.elem(1), f.elem(2)], 4).unwrap();
        let mut counts = vec![BTreeMap::<[u64; 3], u32>::new(); triples.len()];
        for tape in 0..5u32.pow(9) {
            let mut t = tape;
            let mut digit = || {
                let d = t % 5;
                t /= 5;
                f.elem(d as u64)
            };
            let subs: Vec<Vec<Share>> = old[..3]
                .iter()
                .map(|s| share_with_coeffs(s.value, &[digit(), digit(), digit()], 4).unwrap())
                .collect();
            let new: Vec<u64> = (0..4)
                .map(|j| {
                    subs.iter()
                        .zip(&lambdas)
                        .fold(f.zero(), |acc, (row, &l)| acc + l * row[j].value)
                        .value()
                })
                .collect();
            for (c, tr) in counts.iter_mut().zip(&triples) {
                *c.entry(tr.map(|j| new[j - 1])).or_default() += 1;
            }
        }
        for c in &counts {
            assert_eq!(c.len(), 125, "three new shares must be uniform");
        }
        match &reference {
            None => reference = Some(counts),
            Some(r) => assert_eq!(r, &counts),
        }
    }
}

#[test]
fn reshare_keeps_secret_and_raises_threshold() {
    let f = Field::new(31).unwrap();
    let mut rng = RandomStream::from_u64(11);
    for secret in 0..31 {
        let old = share(f.elem(secret), 3, 5, &mut rng).unwrap().shares;
        let new = reshare(&old, 3, 4, 5, &mut rng).unwrap();
        assert_eq!(reconstruct(&new, 4).unwrap(), f.elem(secret));
        assert_eq!(reconstruct(&new[1..], 4).unwrap(), f.elem(secret));
        assert!(reconstruct(&new[..3], 4).is_err());
    }
}

#[test]
fn recovery_contributions_hide_everything_but_the_lost_share() {
    // p = 5: for a fixed f(4) the contributions of helpers {1,2,3} are uniform
    // over all triples summing to f(4), whatever the rest of the polynomial.
    let f = Field::new(5).unwrap();
    let helpers = [1u32, 2, 3];
    let pairs: Vec<(u32, u32)> = helpers
        .iter()
        .flat_map(|&i| helpers.iter().filter(move |&&l| l != i).map(move |&l| (i, l)))
        .collect();
    let mut reference: Option<BTreeMap<(u64, u64, u64), u32>> = None;
    // polynomials 2 + a x + b x^2 with f(4) = 2 + 4a + 16b = 2 + 4a + b (mod 5) fixed at 0
    for a in 0..5u64 {
        let b = (5 * 5 - 2 - 4 * a) % 5;
        let shares = share_with_coeffs(f.elem(2), &[f.elem(a), f.elem(b)], 4).unwrap();
        assert!(shares[3].value.is_zero());
        let mut counts = BTreeMap::new();
        for tape in 0..5u32.pow(6) {
            let mut t = tape;
            let mut table = BTreeMap::new();
            for &p in &pairs {
                table.insert(p, (t % 5) as u64);
                t /= 5;
            }
            let masks = PairwiseMasks::from_fn(&helpers, |i, l| f.elem(table[&(i, l)]));
            let c: Vec<u64> = helpers
                .iter()
                .map(|&h| recovery_contribution(&shares[h as usize - 1], &helpers, 4, &masks).unwrap().value())
                .collect();
            assert_eq!((c[0] + c[1] + c[2]) % 5, 0);
            *counts.entry((c[0], c[1], c[2])).or_insert(0u32) += 1;
        }
        assert_eq!(counts.len(), 25);
        assert!(counts.values().all(|&n| n == 625));
        match &reference {
            None => reference = Some(counts),
            Some(r) => assert_eq!(r, &counts),
        }
    }
}

#[test]
fn comparison_matches_plaintext_for_small_widths() {
    let f = Field::new(31).unwrap();
    let mut c = LocalCluster::new(f, 3, 5, 9);
    for x in 0..16u64 {
        let v = c.input(x, Repr::BitsOnly, 4, None).unwrap();
        for t in 0..16u64 {
            let lt = c.compare_public(&v, t, Direction::Less).unwrap();
            let gt = c.compare_public(&v, t, Direction::Greater).unwrap();
            assert_eq!(open_public(&lt), (x < t) as u64, "{x} < {t}");
            assert_eq!(open_public(&gt), (x > t) as u64, "{x} > {t}");
        }
    }
}

#[test]
fn mixed_add_of_bit_and_int() {
    let f = Field::new(31).unwrap();
    let mut c = LocalCluster::new(f, 3, 5, 10);
    let bit = c.input(1, Repr::BitsOnly, 1, None).unwrap();
    let int = c.input(20, Repr::IntOnly, 0, None).unwrap();
    assert_eq!(open_public(&c.add(&int, Operand::Shared(&bit)).unwrap()), 21);
    let wide = c.input(5, Repr::BitsOnly, 4, None).unwrap();
    assert!(c.add(&int, Operand::Shared(&wide)).is_err());
}
