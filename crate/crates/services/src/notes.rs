//! Encrypted notes: compressed, sealed under a fresh key whose bytes are
//! threshold-shared among the nodes. Every node keeps the ciphertext.

use std::io::{Read, Write};

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use flate2::read::DeflateDecoder;
use flate2::write::DeflateEncoder;
use flate2::Compression;
use trustworthy_node::crypto;
use trustworthy_node::proto::{ItemGet, NoteData, NotePut};
use trustworthy_node::wire::Kind;

use crate::{all_ok, at_least, chunks, majority, Client, Result, ServiceError, N};

/// Largest note text accepted, in bytes.
pub const NOTE_LIMIT: usize = 64 * 1024;

pub(crate) fn compress(data: &[u8]) -> Vec<u8> {
    let mut enc = DeflateEncoder::new(Vec::new(), Compression::default());
    enc.write_all(data).expect("writing to a Vec");
    enc.finish().expect("writing to a Vec")
}

pub(crate) fn decompress(data: &[u8], limit: usize) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    DeflateDecoder::new(data)
        .take(limit as u64 + 1)
        .read_to_end(&mut out)
        .map_err(|_| ServiceError::DecryptFailure)?;
    if out.len() > limit {
        return Err(ServiceError::DecryptFailure);
    }
    Ok(out)
}

impl Client<'_> {
    /// Stores a new note readable with `threshold` shares; returns its id.
    pub fn note_create(&mut self, text: &str, threshold: u8) -> Result<String> {
        let id = self.random_id();
        self.note_put(&id, text, threshold, false)?;
        Ok(id)
    }

    /// Replaces the text of an existing note under a fresh key.
    pub fn note_update(&mut self, note_id: &str, text: &str, threshold: u8) -> Result<()> {
        self.note_put(note_id, text, threshold, true)
    }

    fn note_put(&mut self, note_id: &str, text: &str, threshold: u8, replace: bool) -> Result<()> {
        if text.len() > NOTE_LIMIT {
            return Err(ServiceError::NoteTooLarge { limit: NOTE_LIMIT });
        }
        let field = self.field();
        let key = crypto::random_key(self.rng());
        let sealed = crypto::seal(&key, note_id.as_bytes(), &compress(text.as_bytes()), self.rng());
        let ciphertext = B64.encode(sealed);
        let shares = chunks::share_vector(&chunks::encode(field, &key)?, threshold as usize, N, self.rng())?;
        let replies = self.broadcast(Kind::NotePut, |i| NotePut {
            note_id: note_id.to_owned(),
            ciphertext: ciphertext.clone(),
            key_share: shares[&i].clone(),
            threshold,
            replace,
        });
        all_ok::<serde_json::Value>(replies)?;
        Ok(())
    }

    /// Reads a note. `proposal` names an approved REVEAL when the caller is
    /// not the owner.
    pub fn note_read(&mut self, note_id: &str, proposal: Option<&str>) -> Result<String> {
        let req = ItemGet {
            id: note_id.to_owned(),
            proposal: proposal.map(str::to_owned),
        };
        let replies: std::collections::BTreeMap<u32, NoteData> = at_least(self.broadcast(Kind::NoteGet, |_| req.clone()), 1)?;
        let threshold = majority(replies.values().map(|d| d.threshold))
            .or_else(|| replies.values().next().map(|d| d.threshold))
            .expect("at least one reply");
        let need = crate::MAJORITY.max(threshold as usize);
        if replies.len() < need {
            return Err(ServiceError::NotEnoughShares { have: replies.len(), need });
        }
        let hash = majority(replies.values().map(|d| d.hash.clone())).ok_or_else(|| ServiceError::ReplicaMismatch(note_id.to_owned()))?;
        let sealed = replies
            .values()
            .filter(|d| d.hash == hash)
            .filter_map(|d| B64.decode(&d.ciphertext).ok())
            .find(|ct| crate::sha256_hex(ct) == hash)
            .ok_or_else(|| ServiceError::ReplicaMismatch(note_id.to_owned()))?;
        let vectors: Vec<_> = replies.values().map(|d| d.key_share.clone()).collect();
        let key_bytes = chunks::decode(self.field(), &chunks::reconstruct_vector(self.field(), &vectors, threshold as usize)?)?;
        let key: crypto::Key = key_bytes.try_into().map_err(|_| ServiceError::DecryptFailure)?;
        let compressed = crypto::open(&key, note_id.as_bytes(), &sealed).map_err(|_| ServiceError::DecryptFailure)?;
        String::from_utf8(decompress(&compressed, NOTE_LIMIT)?).map_err(|_| ServiceError::DecryptFailure)
    }
}
