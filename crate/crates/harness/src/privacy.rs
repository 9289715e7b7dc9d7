//! Exhaustive t-privacy check for a small field: enumerate every honest
//! random tape, collect the corrupted parties' views per input, and compare
//! the resulting multisets exactly.

use std::collections::{BTreeSet, HashMap};

use serde::Serialize;
use trustworthy_core::field::is_prime_u64;
use trustworthy_core::{Fe, Field};

use crate::HarnessError;

/// Parties and sharing threshold of the checked protocol.
pub const PARTIES: u32 = 5;
pub const THRESHOLD: usize = 3;
/// Largest modulus the enumeration accepts.
pub const MAX_P: u64 = 7;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Gate {
    /// Local product followed by resharing and degree reduction.
    Multiplication,
    /// Opening of `x - Σ 2^t b_t` for a Dual value.
    ConsistencyOpening,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Variant {
    Honest,
    /// Every polynomial the gate itself introduces is constant: resharing for
    /// multiplication, the value encodings for the consistency opening.
    DegreeZero,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub enum PrivacyVerdict {
    Pass { inputs: usize, tapes_per_input: u64 },
    /// Views for these two inputs have different distributions.
    Leak { first: Vec<u64>, second: Vec<u64> },
    /// The corrupted set can reconstruct by itself.
    ThresholdReached { corrupted: usize, threshold: usize },
}

impl PrivacyVerdict {
    pub fn passed(&self) -> bool {
        matches!(self, PrivacyVerdict::Pass { .. })
    }
}

/// Calls `f` with every vector of `m` digits in `0..p`.
fn for_each_tape(p: u64, m: usize, mut f: impl FnMut(&[u64])) {
    let mut d = vec![0u64; m];
    loop {
        f(&d);
        let mut i = 0;
        loop {
            if i == m {
                return;
            }
            d[i] += 1;
            if d[i] < p {
                break;
            }
            d[i] = 0;
            i += 1;
        }
    }
}

fn encode(p: u64, view: &[Fe]) -> u64 {
    view.iter().fold(0, |acc, v| acc * p + v.value())
}

type Histogram = Vec<(u64, u64)>;

fn histogram(counts: HashMap<u64, u64>) -> Histogram {
    let mut h: Histogram = counts.into_iter().collect();
    h.sort_unstable();
    h
}

struct Setup {
    field: Field,
    corrupted: Vec<u32>,
    honest: Vec<u32>,
}

fn point(field: Field, j: u32) -> Fe {
    field.elem(j as u64)
}

/// `secret + Σ coeffs[d] x^(d+1)` at party `j`'s point, by Horner's rule.
fn poly_share(field: Field, secret: Fe, coeffs: &[u64], j: u32) -> Fe {
    let x = point(field, j);
    let high = coeffs.iter().rev().fold(field.zero(), |acc, &r| acc * x + field.elem(r));
    high * x + secret
}

fn mul_views(s: &Setup, a: u64, b: u64, variant: Variant) -> (Histogram, u64) {
    let f = s.field;
    let deg = THRESHOLD - 1;
    let reshare_digits = match variant {
        Variant::Honest => deg,
        Variant::DegreeZero => 0,
    };
    let m = 2 * deg + reshare_digits * s.honest.len();
    let mut counts = HashMap::new();
    let mut tapes = 0u64;
    let mut view = Vec::with_capacity(2 * s.corrupted.len() + s.honest.len() * s.corrupted.len());
    for_each_tape(f.modulus(), m, |t| {
        tapes += 1;
        view.clear();
        let (ra, rest) = t.split_at(deg);
        let (rb, rest) = rest.split_at(deg);
        for &i in &s.corrupted {
            view.push(poly_share(f, f.elem(a), ra, i));
            view.push(poly_share(f, f.elem(b), rb, i));
        }
        for (h, &j) in s.honest.iter().enumerate() {
            let product = poly_share(f, f.elem(a), ra, j) * poly_share(f, f.elem(b), rb, j);
            let r = &rest[h * reshare_digits..(h + 1) * reshare_digits];
            for &i in &s.corrupted {
                view.push(poly_share(f, product, r, i));
            }
        }
        *counts.entry(encode(f.modulus(), &view)).or_insert(0u64) += 1;
    });
    (histogram(counts), tapes)
}

fn opening_views(s: &Setup, x: u64, width: u32, variant: Variant) -> (Histogram, u64) {
    let f = s.field;
    let deg = match variant {
        Variant::Honest => THRESHOLD - 1,
        Variant::DegreeZero => 0,
    };
    let m = deg * (1 + width as usize);
    let mut counts = HashMap::new();
    let mut tapes = 0u64;
    let mut view = Vec::new();
    for_each_tape(f.modulus(), m, |t| {
        tapes += 1;
        view.clear();
        let share_of = |j: u32| {
            let int = poly_share(f, f.elem(x), &t[..deg], j);
            let bits: Vec<Fe> = (0..width as usize)
                .map(|b| poly_share(f, f.elem((x >> b) & 1), &t[deg * (b + 1)..deg * (b + 2)], j))
                .collect();
            (int, bits)
        };
        for &i in &s.corrupted {
            let (int, bits) = share_of(i);
            view.push(int);
            view.extend(bits);
        }
        for j in 1..=PARTIES {
            let (int, bits) = share_of(j);
            let recomposed: Fe = bits.iter().enumerate().map(|(b, &v)| v * f.elem(1 << b)).sum();
            view.push(int - recomposed);
        }
        *counts.entry(encode(f.modulus(), &view)).or_insert(0u64) += 1;
    });
    (histogram(counts), tapes)
}

/// Widest value whose every encoding fits below `p`.
fn opening_width(p: u64) -> u32 {
    63 - p.leading_zeros()
}

/// Checks that the views of `corrupted` among 5 parties with threshold 3
/// have the same distribution for every input of `gate` over Z_p.
pub fn privacy_check_exhaustive(corrupted: &[u32], gate: Gate, p: u64, variant: Variant) -> Result<PrivacyVerdict, HarnessError> {
    if p > MAX_P {
        return Err(HarnessError::FieldTooLarge(p));
    }
    if p < 3 || !is_prime_u64(p) {
        return Err(HarnessError::BadField(p));
    }
    let set: BTreeSet<u32> = corrupted.iter().copied().collect();
    if set.len() != corrupted.len() || set.iter().any(|i| !(1..=PARTIES).contains(i)) {
        return Err(HarnessError::Script(format!("corrupted set {corrupted:?}")));
    }
    if set.len() >= THRESHOLD {
        return Ok(PrivacyVerdict::ThresholdReached {
            corrupted: set.len(),
            threshold: THRESHOLD,
        });
    }
    let s = Setup {
        field: Field::new(p)?,
        corrupted: set.iter().copied().collect(),
        honest: (1..=PARTIES).filter(|j| !set.contains(j)).collect(),
    };
    let inputs: Vec<Vec<u64>> = match gate {
        Gate::Multiplication => (0..p).flat_map(|a| (0..p).map(move |b| vec![a, b])).collect(),
        Gate::ConsistencyOpening => (0..1u64 << opening_width(p)).map(|x| vec![x]).collect(),
    };
    let views = |input: &[u64]| match gate {
        Gate::Multiplication => mul_views(&s, input[0], input[1], variant),
        Gate::ConsistencyOpening => opening_views(&s, input[0], opening_width(p), variant),
    };
    let (reference, tapes) = views(&inputs[0]);
    for input in &inputs[1..] {
        let (h, _) = views(input);
        if h != reference {
            return Ok(PrivacyVerdict::Leak {
                first: inputs[0].clone(),
                second: input.clone(),
            });
        }
    }
    Ok(PrivacyVerdict::Pass {
        inputs: inputs.len(),
        tapes_per_input: tapes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tape_enumeration_is_complete() {
        let mut seen = BTreeSet::new();
        for_each_tape(3, 3, |t| {
            seen.insert(t.to_vec());
        });
        assert_eq!(seen.len(), 27);
        let mut n = 0;
        for_each_tape(5, 0, |_| n += 1);
        assert_eq!(n, 1);
    }

    #[test]
    fn honest_multiplication_is_private_at_p3() {
        let v = privacy_check_exhaustive(&[1, 2], Gate::Multiplication, 3, Variant::Honest).unwrap();
        assert_eq!(
            v,
            PrivacyVerdict::Pass {
                inputs: 9,
                tapes_per_input: 3u64.pow(10)
            }
        );
    }

    #[test]
    fn degree_zero_resharing_leaks() {
        let v = privacy_check_exhaustive(&[1, 2], Gate::Multiplication, 3, Variant::DegreeZero).unwrap();
        assert!(matches!(v, PrivacyVerdict::Leak { .. }));
    }

    #[test]
    fn single_corruptions_and_other_pairs() {
        for set in [&[1u32][..], &[4, 5], &[2, 5]] {
            assert!(privacy_check_exhaustive(set, Gate::Multiplication, 3, Variant::Honest).unwrap().passed());
        }
    }

    #[test]
    fn index_three_sits_at_zero_in_z3() {
        // party 3 evaluates at 3 = 0 mod 3, so its input shares are the inputs
        let v = privacy_check_exhaustive(&[3], Gate::Multiplication, 3, Variant::Honest).unwrap();
        assert!(matches!(v, PrivacyVerdict::Leak { .. }));
    }

    #[test]
    fn consistency_opening_reveals_only_zero() {
        for p in [3, 5] {
            assert!(privacy_check_exhaustive(&[1, 2], Gate::ConsistencyOpening, p, Variant::Honest).unwrap().passed());
            assert!(matches!(
                privacy_check_exhaustive(&[1, 2], Gate::ConsistencyOpening, p, Variant::DegreeZero).unwrap(),
                PrivacyVerdict::Leak { .. }
            ));
        }
    }

    #[test]
    fn guards() {
        assert!(matches!(
            privacy_check_exhaustive(&[1, 2], Gate::Multiplication, 11, Variant::Honest),
            Err(HarnessError::FieldTooLarge(11))
        ));
        assert!(matches!(
            privacy_check_exhaustive(&[1, 2], Gate::Multiplication, 4, Variant::Honest),
            Err(HarnessError::BadField(4))
        ));
        assert_eq!(
            privacy_check_exhaustive(&[1, 2, 3], Gate::Multiplication, 3, Variant::Honest).unwrap(),
            PrivacyVerdict::ThresholdReached {
                corrupted: 3,
                threshold: 3
            }
        );
    }
}
