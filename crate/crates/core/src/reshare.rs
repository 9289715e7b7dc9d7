//! Threshold changes and lost-share recovery without reconstructing the secret.

use std::collections::BTreeMap;

use rand::Rng;

use crate::error::MathError;
use crate::field::{Fe, Field};
use crate::shamir::{lagrange_coeffs, share, Share};

/// The minimal quorum: the `k` lowest-indexed shares.
pub fn select_quorum(shares: &[Share], k: usize) -> Result<Vec<Share>, MathError> {
    if shares.len() < k {
        return Err(MathError::QuorumTooSmall {
            needed: k,
            got: shares.len(),
        });
    }
    let mut sorted = shares.to_vec();
    sorted.sort_by_key(|s| s.index);
    sorted.truncate(k);
    Ok(sorted)
}

/// One old holder's contribution: a fresh `(new_k, new_n)` sharing of its own
/// share value. Entry `j - 1` goes to new holder `j`.
pub fn subshare<R: Rng + ?Sized>(
    held: &Share,
    new_k: usize,
    new_n: usize,
    rng: &mut R,
) -> Result<Vec<Share>, MathError> {
    Ok(share(held.value, new_k, new_n, rng)?.shares)
}

/// New holder's share: `Σ λ_i · subshare_{i→j}` with `λ` the Lagrange weights
/// of the old quorum at zero. `received` maps old index to the sub-share.
pub fn combine_subshares(field: Field, new_index: u32, received: &BTreeMap<u32, Fe>) -> Result<Share, MathError> {
    let quorum: Vec<u32> = received.keys().copied().collect();
    let lambdas = lagrange_coeffs(field, &quorum, field.zero())?;
    let value = lambdas
        .iter()
        .zip(received.values())
        .fold(field.zero(), |acc, (&l, &v)| acc + l * v);
    Ok(Share::new(new_index, value))
}

/// Converts a `k`-of-n sharing into a fresh `new_k`-of-`new_n` sharing of the
/// same secret, simulating every party in-process.
pub fn reshare<R: Rng + ?Sized>(
    old_shares: &[Share],
    k: usize,
    new_k: usize,
    new_n: usize,
    rng: &mut R,
) -> Result<Vec<Share>, MathError> {
    let quorum = select_quorum(old_shares, k)?;
    let field = quorum[0].value.field();
    let subs: Vec<(u32, Vec<Share>)> = quorum
        .iter()
        .map(|s| Ok((s.index, subshare(s, new_k, new_n, rng)?)))
        .collect::<Result<_, MathError>>()?;
    (1..=new_n as u32)
        .map(|j| {
            let received: BTreeMap<u32, Fe> = subs
                .iter()
                .map(|(i, row)| (*i, row[j as usize - 1].value))
                .collect();
            combine_subshares(field, j, &received)
        })
        .collect()
}

/// Pairwise masks `m_{i,l}` agreed between helpers `i` and `l` (i ≠ l).
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct PairwiseMasks {
    masks: BTreeMap<(u32, u32), Fe>,
}

impl PairwiseMasks {
    pub fn random<R: Rng + ?Sized>(field: Field, helpers: &[u32], rng: &mut R) -> Self {
        Self::from_fn(helpers, |_, _| field.random(rng))
    }

    pub fn from_fn(helpers: &[u32], mut f: impl FnMut(u32, u32) -> Fe) -> Self {
        let mut masks = BTreeMap::new();
        for &i in helpers {
            for &l in helpers {
                if i != l {
                    masks.insert((i, l), f(i, l));
                }
            }
        }
        Self { masks }
    }

    pub fn get(&self, i: u32, l: u32) -> Result<Fe, MathError> {
        self.masks.get(&(i, l)).copied().ok_or(MathError::MissingMask(i, l))
    }
}

fn check_helpers(lost: u32, helpers: &[u32], k: usize) -> Result<(), MathError> {
    if helpers.len() < k {
        return Err(MathError::QuorumTooSmall {
            needed: k,
            got: helpers.len(),
        });
    }
    if helpers.contains(&lost) {
        return Err(MathError::IndexCollision(lost));
    }
    Ok(())
}

/// What helper `held.index` sends to the recovering party:
/// `λ_i(lost)·s_i + Σ_{l≠i} (m_{i,l} − m_{l,i})`.
pub fn recovery_contribution(
    held: &Share,
    helpers: &[u32],
    lost: u32,
    masks: &PairwiseMasks,
) -> Result<Fe, MathError> {
    check_helpers(lost, helpers, helpers.len())?;
    let field = held.value.field();
    let lambdas = lagrange_coeffs(field, helpers, field.elem(lost as u64))?;
    let pos = helpers
        .iter()
        .position(|&h| h == held.index)
        .ok_or(MathError::InvalidIndex(held.index))?;
    let mut out = lambdas[pos] * held.value;
    for &l in helpers {
        if l != held.index {
            out += masks.get(held.index, l)? - masks.get(l, held.index)?;
        }
    }
    Ok(out)
}

/// Rebuilds share `lost` from `k` helpers; the masks cancel in the sum.
pub fn recover_share(lost: u32, helpers: &[Share], k: usize, masks: &PairwiseMasks) -> Result<Share, MathError> {
    let quorum = {
        check_helpers(lost, &helpers.iter().map(|s| s.index).collect::<Vec<_>>(), k)?;
        select_quorum(helpers, k)?
    };
    let indices: Vec<u32> = quorum.iter().map(|s| s.index).collect();
    let contributions = quorum
        .iter()
        .map(|s| recovery_contribution(s, &indices, lost, masks))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Share::new(lost, contributions.into_iter().sum()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RandomStream;
    use crate::shamir::{reconstruct, share_with_coeffs};

    fn f31() -> Field {
        Field::new(31).unwrap()
    }

    fn example() -> Vec<Share> {
        let f = f31();
        share_with_coeffs(f.elem(7), &[f.elem(2), f.elem(1)], 5).unwrap()
    }

    #[test]
    fn reshare_3_5_to_4_5() {
        let mut rng = RandomStream::from_u64(3);
        let new = reshare(&example(), 3, 4, 5, &mut rng).unwrap();
        // every 4-subset of the new shares
        for skip in 0..5 {
            let subset: Vec<Share> = new.iter().enumerate().filter(|(i, _)| *i != skip).map(|(_, s)| *s).collect();
            assert_eq!(reconstruct(&subset, 4).unwrap(), f31().elem(7));
        }
    }

    #[test]
    fn reshare_degenerate_and_small_quorum() {
        let f = f31();
        let mut rng = RandomStream::from_u64(4);
        let single = vec![Share::new(1, f.elem(9))];
        let new = reshare(&single, 1, 1, 1, &mut rng).unwrap();
        assert_eq!(new, vec![Share::new(1, f.elem(9))]);
        assert_eq!(
            reshare(&example()[..2], 3, 3, 5, &mut rng),
            Err(MathError::QuorumTooSmall { needed: 3, got: 2 })
        );
    }

    #[test]
    fn recover_lost_share_four() {
        let f = f31();
        let mut rng = RandomStream::from_u64(5);
        let helpers = &example()[..3];
        let masks = PairwiseMasks::random(f, &[1, 2, 3], &mut rng);
        let s = recover_share(4, helpers, 3, &masks).unwrap();
        assert_eq!(s, Share::new(4, f.zero()));
    }

    #[test]
    fn recover_with_single_helper() {
        let f = f31();
        let helper = [Share::new(2, f.elem(13))];
        let s = recover_share(5, &helper, 1, &PairwiseMasks::default()).unwrap();
        assert_eq!(s.value, f.elem(13));
    }

    #[test]
    fn mask_terms_telescope() {
        let f = f31();
        let mut rng = RandomStream::from_u64(6);
        let helpers = [1, 2, 3];
        let masks = PairwiseMasks::random(f, &helpers, &mut rng);
        let total: Fe = helpers
            .iter()
            .flat_map(|&i| helpers.iter().filter(move |&&l| l != i).map(move |&l| (i, l)))
            .map(|(i, l)| masks.get(i, l).unwrap() - masks.get(l, i).unwrap())
            .sum();
        assert_eq!(total, f.zero());
    }

    #[test]
    fn recovery_errors() {
        let f = f31();
        let masks = PairwiseMasks::default();
        assert_eq!(
            recover_share(4, &example()[..2], 3, &masks),
            Err(MathError::QuorumTooSmall { needed: 3, got: 2 })
        );
        assert_eq!(
            recover_share(2, &example()[..3], 3, &masks),
            Err(MathError::IndexCollision(2))
        );
        let _ = f;
    }
}
