//! Byte strings as vectors of field elements, and their threshold sharing.

use std::collections::BTreeMap;

use rand::Rng;
use trustworthy_core::shamir::{self, Share};
use trustworthy_core::{Fe, Field};
use trustworthy_node::proto::ShareVec;

use crate::{Result, ServiceError};

/// Whole bytes that fit below the modulus: 7 for the default field.
pub fn chunk_bytes(field: Field) -> usize {
    let bits = 63 - field.modulus().leading_zeros() as usize;
    bits / 8
}

/// Length-prefixed big-endian packing of `data` into field elements.
pub fn encode(field: Field, data: &[u8]) -> Result<Vec<Fe>> {
    let c = chunk_bytes(field);
    if c == 0 {
        return Err(ServiceError::FieldTooSmall);
    }
    let mut framed = (data.len() as u32).to_be_bytes().to_vec();
    framed.extend_from_slice(data);
    Ok(framed
        .chunks(c)
        .map(|ch| {
            let mut buf = [0u8; 8];
            buf[8 - ch.len()..].copy_from_slice(ch);
            // short final chunks are left-aligned so decoding can use a fixed width
            let v = u64::from_be_bytes(buf) << (8 * (c - ch.len()));
            field.elem(v)
        })
        .collect())
}

pub fn decode(field: Field, elems: &[Fe]) -> Result<Vec<u8>> {
    let c = chunk_bytes(field);
    if c == 0 {
        return Err(ServiceError::FieldTooSmall);
    }
    let mut out = Vec::with_capacity(elems.len() * c);
    for e in elems {
        let b = e.value().to_be_bytes();
        if b[..8 - c].iter().any(|&x| x != 0) {
            return Err(ServiceError::DecryptFailure);
        }
        out.extend_from_slice(&b[8 - c..]);
    }
    if out.len() < 4 {
        return Err(ServiceError::DecryptFailure);
    }
    let len = u32::from_be_bytes(out[..4].try_into().expect("four bytes")) as usize;
    if out.len() < 4 + len {
        return Err(ServiceError::DecryptFailure);
    }
    Ok(out[4..4 + len].to_vec())
}

/// Shares each element with threshold `k` among `n` nodes; returns each
/// node's vector.
pub fn share_vector<R: Rng + ?Sized>(elems: &[Fe], k: usize, n: usize, rng: &mut R) -> Result<BTreeMap<u32, ShareVec>> {
    let mut per_node: BTreeMap<u32, ShareVec> = (1..=n as u32)
        .map(|i| {
            (
                i,
                ShareVec {
                    index: i,
                    values: Vec::with_capacity(elems.len()),
                },
            )
        })
        .collect();
    for &e in elems {
        for s in shamir::share(e, k, n, rng)?.shares {
            per_node.get_mut(&s.index).expect("index in 1..=n").values.push(s.value.to_string());
        }
    }
    Ok(per_node)
}

/// Reconstructs a shared vector from at least `k` nodes' vectors. Every
/// supplied share is used, so inconsistent shares are detected.
pub fn reconstruct_vector(field: Field, vectors: &[ShareVec], k: usize) -> Result<Vec<Fe>> {
    if vectors.len() < k {
        return Err(ServiceError::NotEnoughShares { have: vectors.len(), need: k });
    }
    let len = vectors[0].values.len();
    if vectors.iter().any(|v| v.values.len() != len) {
        return Err(ServiceError::ReplicaMismatch("share vector lengths".into()));
    }
    let mut parsed = Vec::with_capacity(vectors.len());
    for v in vectors {
        let vals = v.values.iter().map(|s| field.parse(s)).collect::<std::result::Result<Vec<_>, _>>()?;
        parsed.push((v.index, vals));
    }
    (0..len)
        .map(|j| {
            let shares: Vec<Share> = parsed.iter().map(|(i, vals)| Share::new(*i, vals[j])).collect();
            Ok(shamir::reconstruct(&shares, k)?)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use trustworthy_core::RandomStream;

    #[test]
    fn default_field_carries_seven_bytes() {
        assert_eq!(chunk_bytes(Field::mersenne61()), 7);
        assert_eq!(chunk_bytes(Field::new(31).unwrap()), 0);
    }

    #[test]
    fn encode_roundtrip_all_lengths() {
        let f = Field::mersenne61();
        for len in 0..40 {
            let data: Vec<u8> = (0..len as u8).map(|b| b.wrapping_mul(37) ^ 0xff).collect();
            let e = encode(f, &data).unwrap();
            assert_eq!(decode(f, &e).unwrap(), data);
        }
    }

    #[test]
    fn shared_vector_reconstructs_from_any_k() {
        let f = Field::mersenne61();
        let mut rng = RandomStream::from_u64(4);
        let elems = encode(f, b"threshold").unwrap();
        let v = share_vector(&elems, 3, 5, &mut rng).unwrap();
        let pick: Vec<ShareVec> = [2, 4, 5].iter().map(|i| v[i].clone()).collect();
        assert_eq!(reconstruct_vector(f, &pick, 3).unwrap(), elems);
        assert!(matches!(
            reconstruct_vector(f, &pick[..2], 3),
            Err(ServiceError::NotEnoughShares { have: 2, need: 3 })
        ));
    }
}
