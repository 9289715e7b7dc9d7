//! Feldman-style coefficient commitments for detecting corrupted shares.
//!
//! Commitments live in the order-p subgroup of Z_q^*, with `p | q - 1`.
//! They bind holders to a polynomial; they do not hide the secret from a
//! party that can compute discrete logs, so they stay inside the quorum.

use num_bigint::BigUint;
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};

use crate::error::MathError;
use crate::field::{Fe, Field, FieldParams, MERSENNE_61};
use crate::shamir::Share;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CommitmentGroup {
    pub q: BigUint,
    pub g: BigUint,
}

impl CommitmentGroup {
    pub fn new(q: BigUint, g: BigUint) -> Self {
        Self { q, g }
    }

    /// q = 311 = 10·31 + 1, g = 2^10.
    pub fn for_p31() -> Self {
        Self::new(BigUint::from(311u32), BigUint::from(91u32))
    }

    /// q = 52·(2^61 - 1) + 1, g = 2^52.
    pub fn for_mersenne61() -> Self {
        let q = BigUint::from(MERSENNE_61) * 52u32 + 1u32;
        Self::new(q, BigUint::one() << 52)
    }

    pub fn validate(&self, field: Field) -> Result<(), MathError> {
        let p = BigUint::from(field.modulus());
        if !is_probable_prime(&self.q) {
            return Err(MathError::BadCommitmentGroup("q is not prime"));
        }
        if !((&self.q - 1u32) % &p).is_zero() {
            return Err(MathError::BadCommitmentGroup("p does not divide q - 1"));
        }
        if self.g.is_one() || self.g.is_zero() || self.g >= self.q {
            return Err(MathError::BadCommitmentGroup("g is trivial"));
        }
        if !self.g.modpow(&p, &self.q).is_one() {
            return Err(MathError::BadCommitmentGroup("g does not have order p"));
        }
        Ok(())
    }

    fn exp(&self, e: u64) -> BigUint {
        self.g.modpow(&BigUint::from(e), &self.q)
    }
}

/// `C_j = g^{a_j}` for each polynomial coefficient.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShareCommitment {
    #[serde(with = "decimal_vec")]
    pub coefficient_commitments: Vec<BigUint>,
}

impl ShareCommitment {
    pub fn threshold(&self) -> usize {
        self.coefficient_commitments.len()
    }
}

pub fn commit(params: &FieldParams, coefficients: &[Fe]) -> Result<ShareCommitment, MathError> {
    let group = params.commitment_group.as_ref().ok_or(MathError::NoCommitmentGroup)?;
    Ok(ShareCommitment {
        coefficient_commitments: coefficients.iter().map(|a| group.exp(a.value())).collect(),
    })
}

/// Accepts `(i, v)` iff `g^v = Π_j C_j^{i^j}`. Exponents are reduced mod p,
/// which is sound because every commitment has order dividing p.
pub fn verify(params: &FieldParams, share: &Share, commitment: &ShareCommitment) -> Result<bool, MathError> {
    let group = params.commitment_group.as_ref().ok_or(MathError::NoCommitmentGroup)?;
    let field = params.field;
    let i = field.elem(share.index as u64);
    let mut power = field.one();
    let mut rhs = BigUint::one();
    for c in &commitment.coefficient_commitments {
        rhs = rhs * c.modpow(&BigUint::from(power.value()), &group.q) % &group.q;
        power *= i;
    }
    Ok(group.exp(share.value.value()) == rhs)
}

fn is_probable_prime(n: &BigUint) -> bool {
    let two = BigUint::from(2u32);
    if *n < two {
        return false;
    }
    for small in [2u32, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37] {
        let s = BigUint::from(small);
        if *n == s {
            return true;
        }
        if (n % &s).is_zero() {
            return false;
        }
    }
    let n_minus_1 = n - 1u32;
    let mut d = n_minus_1.clone();
    let mut r = 0u32;
    while (&d % 2u32).is_zero() {
        d >>= 1;
        r += 1;
    }
    'witness: for a in [2u32, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47] {
        let mut x = BigUint::from(a).modpow(&d, n);
        if x.is_one() || x == n_minus_1 {
            continue;
        }
        for _ in 1..r {
            x = x.modpow(&two, n);
            if x == n_minus_1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

mod decimal_vec {
    use num_bigint::BigUint;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[BigUint], s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(v.iter().map(|x| x.to_str_radix(10)))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<BigUint>, D::Error> {
        let raw: Vec<String> = Vec::deserialize(d)?;
        raw.iter()
            .map(|s| BigUint::parse_bytes(s.as_bytes(), 10).ok_or_else(|| serde::de::Error::custom("bad decimal")))
            .collect()
    }
}
