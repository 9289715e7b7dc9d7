//! Prime-field arithmetic.
//!
//! Every element carries its modulus so the usual operators work without a
//! context object. Mixing elements of different fields is a logic error and is
//! caught by debug assertions.

use std::fmt;
use std::ops::{Add, AddAssign, Mul, MulAssign, Neg, Sub, SubAssign};

use rand::Rng;
use serde::{Serialize, Serializer};

use crate::error::MathError;
use crate::feldman::CommitmentGroup;

/// 2^61 - 1, the default modulus.
pub const MERSENNE_61: u64 = (1 << 61) - 1;

/// A prime field Z_p.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Field {
    p: u64,
}

impl Field {
    pub fn new(p: u64) -> Result<Self, MathError> {
        if !is_prime_u64(p) {
            return Err(MathError::BadModulus(p));
        }
        Ok(Self { p })
    }

    pub fn mersenne61() -> Self {
        Self { p: MERSENNE_61 }
    }

    pub fn modulus(&self) -> u64 {
        self.p
    }

    pub fn elem(&self, v: u64) -> Fe {
        Fe { value: v % self.p, p: self.p }
    }

    pub fn from_i64(&self, v: i64) -> Fe {
        self.elem((v as i128).rem_euclid(self.p as i128) as u64)
    }

    pub fn zero(&self) -> Fe {
        self.elem(0)
    }

    pub fn one(&self) -> Fe {
        self.elem(1)
    }

    pub fn random<R: Rng + ?Sized>(&self, rng: &mut R) -> Fe {
        self.elem(rng.gen_range(0..self.p))
    }

    /// Parses the canonical decimal form; values must already be reduced.
    pub fn parse(&self, s: &str) -> Result<Fe, MathError> {
        let v: u64 = s.parse().map_err(|_| MathError::Parse(s.to_owned()))?;
        if v >= self.p {
            return Err(MathError::Parse(s.to_owned()));
        }
        Ok(self.elem(v))
    }

    /// All field elements in increasing order. Only sensible for tiny fields.
    pub fn elements(&self) -> impl Iterator<Item = Fe> + '_ {
        (0..self.p).map(move |v| self.elem(v))
    }
}

/// An element of Z_p, always reduced.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Fe {
    value: u64,
    p: u64,
}

impl Fe {
    pub fn value(&self) -> u64 {
        self.value
    }

    pub fn field(&self) -> Field {
        Field { p: self.p }
    }

    pub fn is_zero(&self) -> bool {
        self.value == 0
    }

    pub fn pow(self, mut e: u64) -> Fe {
        let mut base = self;
        let mut acc = self.field().one();
        while e > 0 {
            if e & 1 == 1 {
                acc *= base;
            }
            base *= base;
            e >>= 1;
        }
        acc
    }

    /// Multiplicative inverse via the extended Euclidean algorithm.
    pub fn inv(self) -> Result<Fe, MathError> {
        if self.value == 0 {
            return Err(MathError::ZeroInverse);
        }
        let (mut r0, mut r1) = (self.p as i128, self.value as i128);
        let (mut t0, mut t1) = (0i128, 1i128);
        while r1 != 0 {
            let q = r0 / r1;
            (r0, r1) = (r1, r0 - q * r1);
            (t0, t1) = (t1, t0 - q * t1);
        }
        debug_assert_eq!(r0, 1);
        Ok(Fe {
            value: t0.rem_euclid(self.p as i128) as u64,
            p: self.p,
        })
    }

    #[inline]
    fn check(&self, other: &Fe) {
        debug_assert_eq!(self.p, other.p, "mixing elements of different fields");
    }
}

impl fmt::Debug for Fe {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} (mod {})", self.value, self.p)
    }
}

impl fmt::Display for Fe {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.value)
    }
}

impl Serialize for Fe {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.value.to_string())
    }
}

impl Add for Fe {
    type Output = Fe;
    fn add(self, rhs: Fe) -> Fe {
        self.check(&rhs);
        let s = self.value as u128 + rhs.value as u128;
        Fe {
            value: (s % self.p as u128) as u64,
            p: self.p,
        }
    }
}

impl Sub for Fe {
    type Output = Fe;
    fn sub(self, rhs: Fe) -> Fe {
        self.check(&rhs);
        let v = if self.value >= rhs.value {
            self.value - rhs.value
        } else {
            self.p - (rhs.value - self.value)
        };
        Fe { value: v, p: self.p }
    }
}

impl Mul for Fe {
    type Output = Fe;
    fn mul(self, rhs: Fe) -> Fe {
        self.check(&rhs);
        let m = self.value as u128 * rhs.value as u128;
        Fe {
            value: (m % self.p as u128) as u64,
            p: self.p,
        }
    }
}

impl Neg for Fe {
    type Output = Fe;
    fn neg(self) -> Fe {
        if self.value == 0 {
            self
        } else {
            Fe {
                value: self.p - self.value,
                p: self.p,
            }
        }
    }
}

impl AddAssign for Fe {
    fn add_assign(&mut self, rhs: Fe) {
        *self = *self + rhs;
    }
}

impl SubAssign for Fe {
    fn sub_assign(&mut self, rhs: Fe) {
        *self = *self - rhs;
    }
}

impl MulAssign for Fe {
    fn mul_assign(&mut self, rhs: Fe) {
        *self = *self * rhs;
    }
}

impl std::iter::Sum for Fe {
    /// Panics on an empty iterator: the modulus would be unknown.
    fn sum<I: Iterator<Item = Fe>>(mut iter: I) -> Fe {
        let first = iter.next().expect("sum of an empty field-element iterator");
        iter.fold(first, |a, b| a + b)
    }
}

/// Field plus optional commitment group for share verification.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FieldParams {
    pub field: Field,
    pub commitment_group: Option<CommitmentGroup>,
}

impl FieldParams {
    pub fn new(field: Field, commitment_group: Option<CommitmentGroup>) -> Result<Self, MathError> {
        if let Some(g) = &commitment_group {
            g.validate(field)?;
        }
        Ok(Self {
            field,
            commitment_group,
        })
    }

    /// 2^61-1 with its default commitment group.
    pub fn default_params() -> Self {
        let field = Field::mersenne61();
        Self {
            field,
            commitment_group: Some(CommitmentGroup::for_mersenne61()),
        }
    }

    /// Share indices 1..=n must be distinct nonzero elements.
    pub fn supports_parties(&self, n: usize) -> bool {
        (n as u64) < self.field.modulus()
    }
}

const MR_BASES: [u64; 12] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37];

fn mul_mod(a: u64, b: u64, m: u64) -> u64 {
    (a as u128 * b as u128 % m as u128) as u64
}

fn pow_mod(mut b: u64, mut e: u64, m: u64) -> u64 {
    let mut acc = 1 % m;
    b %= m;
    while e > 0 {
        if e & 1 == 1 {
            acc = mul_mod(acc, b, m);
        }
        b = mul_mod(b, b, m);
        e >>= 1;
    }
    acc
}

/// Deterministic Miller-Rabin; the fixed bases are exact for all u64.
pub fn is_prime_u64(n: u64) -> bool {
    if n < 2 {
        return false;
    }
    for &b in &MR_BASES {
        if n % b == 0 {
            return n == b;
        }
    }
    let mut d = n - 1;
    let mut s = 0;
    while d % 2 == 0 {
        d /= 2;
        s += 1;
    }
    'bases: for &a in &MR_BASES {
        let mut x = pow_mod(a, d, n);
        if x == 1 || x == n - 1 {
            continue;
        }
        for _ in 1..s {
            x = mul_mod(x, x, n);
            if x == n - 1 {
                continue 'bases;
            }
        }
        return false;
    }
    true
}
