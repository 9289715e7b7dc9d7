//! Shamir k-of-n sharing over a prime field.

use std::collections::BTreeSet;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::MathError;
use crate::field::{Fe, Field};

/// One evaluation `(index, f(index))` of a sharing polynomial.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Share {
    #[serde(rename = "i")]
    pub index: u32,
    #[serde(rename = "v")]
    pub value: Fe,
}

impl Share {
    pub fn new(index: u32, value: Fe) -> Self {
        Self { index, value }
    }
}

/// Deserialized share whose value has not yet been bound to a field.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WireShare {
    pub i: u32,
    pub v: String,
}

impl WireShare {
    pub fn bind(&self, field: Field) -> Result<Share, MathError> {
        Ok(Share::new(self.i, field.parse(&self.v)?))
    }
}

impl From<&Share> for WireShare {
    fn from(s: &Share) -> Self {
        Self {
            i: s.index,
            v: s.value.to_string(),
        }
    }
}

/// Output of [`share`]: the shares plus the full coefficient vector
/// `a_0 = secret, a_1..a_{k-1}`. Callers keep coefficients only long enough to
/// build commitments.
#[derive(Clone, Debug)]
pub struct Sharing {
    pub shares: Vec<Share>,
    pub coefficients: Vec<Fe>,
}

fn check_threshold(field: Field, k: usize, n: usize) -> Result<(), MathError> {
    if k == 0 || k > n || (n as u64) >= field.modulus() {
        return Err(MathError::BadThreshold { k, n });
    }
    Ok(())
}

/// Horner evaluation of `coeffs[0] + coeffs[1] x + ...`.
pub fn eval_poly(coeffs: &[Fe], x: Fe) -> Fe {
    coeffs
        .iter()
        .rev()
        .fold(x.field().zero(), |acc, &c| acc * x + c)
}

/// Shares `secret` with a fresh random polynomial of degree `k - 1`.
pub fn share<R: Rng + ?Sized>(
    secret: Fe,
    k: usize,
    n: usize,
    rng: &mut R,
) -> Result<Sharing, MathError> {
    let field = secret.field();
    check_threshold(field, k, n)?;
    let random: Vec<Fe> = (1..k).map(|_| field.random(rng)).collect();
    let shares = share_with_coeffs(secret, &random, n)?;
    let mut coefficients = Vec::with_capacity(k);
    coefficients.push(secret);
    coefficients.extend(random);
    Ok(Sharing {
        shares,
        coefficients,
    })
}

/// Deterministic sharing with caller-chosen higher coefficients. The threshold
/// is `random_coeffs.len() + 1`; an empty slice gives the constant polynomial.
pub fn share_with_coeffs(secret: Fe, random_coeffs: &[Fe], n: usize) -> Result<Vec<Share>, MathError> {
    let field = secret.field();
    check_threshold(field, random_coeffs.len() + 1, n)?;
    let mut coeffs = Vec::with_capacity(random_coeffs.len() + 1);
    coeffs.push(secret);
    coeffs.extend_from_slice(random_coeffs);
    Ok((1..=n as u32)
        .map(|i| Share::new(i, eval_poly(&coeffs, field.elem(i as u64))))
        .collect())
}

fn check_indices(field: Field, indices: &[u32]) -> Result<(), MathError> {
    let mut seen = BTreeSet::new();
    for &i in indices {
        if i as u64 % field.modulus() == 0 {
            return Err(MathError::InvalidIndex(i));
        }
        if !seen.insert(i as u64 % field.modulus()) {
            return Err(MathError::DuplicateIndex(i));
        }
    }
    Ok(())
}

/// Lagrange weights `λ_i` with `Σ λ_i f(x_i) = f(at)` for every polynomial of
/// degree below `indices.len()`.
pub fn lagrange_coeffs(field: Field, indices: &[u32], at: Fe) -> Result<Vec<Fe>, MathError> {
    if indices.is_empty() {
        return Err(MathError::NotEnoughShares { needed: 1, got: 0 });
    }
    check_indices(field, indices)?;
    let xs: Vec<Fe> = indices.iter().map(|&i| field.elem(i as u64)).collect();
    xs.iter()
        .enumerate()
        .map(|(a, &xa)| {
            let mut num = field.one();
            let mut den = field.one();
            for (b, &xb) in xs.iter().enumerate() {
                if a != b {
                    num *= at - xb;
                    den *= xa - xb;
                }
            }
            Ok(num * den.inv()?)
        })
        .collect()
}

/// Value at `x` of the unique polynomial of degree `< shares.len()` through
/// the given shares.
pub fn interpolate_at(shares: &[Share], x: Fe) -> Result<Fe, MathError> {
    let field = x.field();
    let indices: Vec<u32> = shares.iter().map(|s| s.index).collect();
    let lambdas = lagrange_coeffs(field, &indices, x)?;
    Ok(lambdas
        .iter()
        .zip(shares)
        .fold(field.zero(), |acc, (&l, s)| acc + l * s.value))
}

/// Recovers `f(0)` from at least `k` shares.
///
/// With more than `k` shares every size-`k` subset has to agree. That holds
/// exactly when all shares lie on the polynomial through the first `k`, which
/// is what gets checked.
pub fn reconstruct(shares: &[Share], k: usize) -> Result<Fe, MathError> {
    if k == 0 {
        return Err(MathError::BadThreshold { k, n: shares.len() });
    }
    if shares.len() < k {
        return Err(MathError::NotEnoughShares {
            needed: k,
            got: shares.len(),
        });
    }
    let field = shares[0].value.field();
    let indices: Vec<u32> = shares.iter().map(|s| s.index).collect();
    check_indices(field, &indices)?;
    let (basis, rest) = shares.split_at(k);
    for extra in rest {
        if interpolate_at(basis, field.elem(extra.index as u64))? != extra.value {
            return Err(MathError::InconsistentShares);
        }
    }
    interpolate_at(basis, field.zero())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RandomStream;

    fn f31() -> Field {
        Field::new(31).unwrap()
    }

    fn example_shares() -> Vec<Share> {
        let f = f31();
        share_with_coeffs(f.elem(7), &[f.elem(2), f.elem(1)], 5).unwrap()
    }

    #[test]
    fn example_polynomial_shares() {
        // f(x) = 7 + 2x + x^2 evaluated by hand
        let expected = [(1, 10), (2, 15), (3, 22), (4, 0), (5, 11)];
        let got: Vec<(u32, u64)> = example_shares().iter().map(|s| (s.index, s.value.value())).collect();
        assert_eq!(got, expected);
    }

    #[test]
    fn constant_polynomial_for_k1() {
        let f = f31();
        let mut rng = RandomStream::from_u64(1);
        let s = share(f.zero(), 1, 5, &mut rng).unwrap();
        assert!(s.shares.iter().all(|s| s.value.is_zero()));
        assert_eq!(s.coefficients, vec![f.zero()]);
    }

    #[test]
    fn bad_thresholds() {
        let f = f31();
        let mut rng = RandomStream::from_u64(1);
        assert_eq!(
            share(f.elem(1), 3, 2, &mut rng).unwrap_err(),
            MathError::BadThreshold { k: 3, n: 2 }
        );
        assert!(share(f.elem(1), 0, 2, &mut rng).is_err());
        assert!(share(f.elem(1), 2, 31, &mut rng).is_err());
    }

    #[test]
    fn lagrange_examples() {
        let f = f31();
        let l0 = lagrange_coeffs(f, &[1, 2, 3], f.zero()).unwrap();
        assert_eq!(l0.iter().map(Fe::value).collect::<Vec<_>>(), vec![3, 28, 1]);
        assert_eq!(lagrange_coeffs(f, &[4], f.elem(4)).unwrap(), vec![f.one()]);
        let l4 = lagrange_coeffs(f, &[1, 2, 3], f.elem(4)).unwrap();
        let vals = [10u64, 15, 22];
        let at4 = l4.iter().zip(vals).fold(f.zero(), |a, (&l, v)| a + l * f.elem(v));
        assert_eq!(at4, f.zero());
        assert_eq!(lagrange_coeffs(f, &[1, 1], f.zero()), Err(MathError::DuplicateIndex(1)));
        assert_eq!(lagrange_coeffs(f, &[0, 1], f.zero()), Err(MathError::InvalidIndex(0)));
    }

    #[test]
    fn reconstruct_examples() {
        let f = f31();
        let s = example_shares();
        assert_eq!(reconstruct(&s[..3], 3).unwrap(), f.elem(7));
        assert_eq!(reconstruct(&s, 3).unwrap(), f.elem(7));
        assert_eq!(
            reconstruct(&s[..2], 3),
            Err(MathError::NotEnoughShares { needed: 3, got: 2 })
        );
        let mut bad = s[..4].to_vec();
        bad[3] = Share::new(4, f.one());
        assert_eq!(reconstruct(&bad, 3), Err(MathError::InconsistentShares));
    }

    #[test]
    fn share_serialization() {
        let f = f31();
        let s = Share::new(2, f.elem(15));
        let json = serde_json::to_string(&s).unwrap();
        assert_eq!(json, r#"{"i":2,"v":"15"}"#);
        let back: WireShare = serde_json::from_str(&json).unwrap();
        assert_eq!(back.bind(f).unwrap(), s);
    }
}
