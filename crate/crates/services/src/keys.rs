//! Key escrow: a 256-bit file key shared among the nodes, plus local file
//! encryption under such a key.

use std::collections::BTreeMap;

use trustworthy_node::crypto::{self, Key, KEY_LEN};
use trustworthy_node::proto::{ItemGet, KeyData, KeyEscrow};
use trustworthy_node::wire::Kind;
use rand::{CryptoRng, RngCore};

use crate::{all_ok, at_least, chunks, majority, Client, Result, ServiceError, N};

const FILE_AAD: &[u8] = b"escrowed-file";

/// Encrypts file contents under an escrowed key.
pub fn encrypt_file<R: RngCore + CryptoRng>(key: &Key, data: &[u8], rng: &mut R) -> Vec<u8> {
    crypto::seal(key, FILE_AAD, data, rng)
}

pub fn decrypt_file(key: &Key, sealed: &[u8]) -> Result<Vec<u8>> {
    crypto::open(key, FILE_AAD, sealed).map_err(|_| ServiceError::DecryptFailure)
}

impl Client<'_> {
    /// Escrows `key` (exactly 32 bytes); returns the key id.
    pub fn key_escrow(&mut self, key: &[u8], threshold: u8, file_hint: &str) -> Result<String> {
        if key.len() != KEY_LEN {
            return Err(ServiceError::BadKeyLength(key.len()));
        }
        let id = self.random_id();
        let field = self.field();
        let shares = chunks::share_vector(&chunks::encode(field, key)?, threshold as usize, N, self.rng())?;
        let replies = self.broadcast(Kind::KeyEscrow, |i| KeyEscrow {
            key_id: id.clone(),
            share: shares[&i].clone(),
            threshold,
            file_hint: file_hint.to_owned(),
        });
        all_ok::<serde_json::Value>(replies)?;
        Ok(id)
    }

    pub fn key_retrieve(&mut self, key_id: &str, proposal: Option<&str>) -> Result<Key> {
        let req = ItemGet {
            id: key_id.to_owned(),
            proposal: proposal.map(str::to_owned),
        };
        let replies: BTreeMap<u32, KeyData> = at_least(self.broadcast(Kind::KeyRetrieve, |_| req.clone()), 1)?;
        let threshold = majority(replies.values().map(|d| d.threshold))
            .or_else(|| replies.values().next().map(|d| d.threshold))
            .expect("at least one reply");
        let vectors: Vec<_> = replies.values().map(|d| d.share.clone()).collect();
        let bytes = chunks::decode(self.field(), &chunks::reconstruct_vector(self.field(), &vectors, threshold as usize)?)?;
        bytes.try_into().map_err(|b: Vec<u8>| ServiceError::BadKeyLength(b.len()))
    }
}
