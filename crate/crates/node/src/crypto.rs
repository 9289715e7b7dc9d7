//! Thin wrappers over the standard primitives used by the node and clients.

use aes_gcm::aead::{Aead, KeyInit, Payload};
use aes_gcm::{Aes256Gcm, Nonce};
use ed25519_dalek::{Signature, Signer, SigningKey, Verifier, VerifyingKey};
use hkdf::Hkdf;
use hmac::{Hmac, Mac};
use rand::{CryptoRng, RngCore};
use sha2::{Digest, Sha256};
use x25519_dalek::{PublicKey, StaticSecret};

use crate::error::CryptoError;

pub const KEY_LEN: usize = 32;
const NONCE_LEN: usize = 12;

pub type Key = [u8; KEY_LEN];

pub fn sha256(data: &[u8]) -> [u8; 32] {
    Sha256::digest(data).into()
}

pub fn sha256_hex(data: &[u8]) -> String {
    hex::encode(sha256(data))
}

pub fn hkdf(ikm: &[u8], salt: &[u8], info: &str) -> Key {
    let mut out = [0u8; KEY_LEN];
    Hkdf::<Sha256>::new(Some(salt), ikm)
        .expand(info.as_bytes(), &mut out)
        .expect("32 bytes is a valid hkdf length");
    out
}

pub fn mac(key: &Key, data: &[u8]) -> [u8; 32] {
    let mut m = <Hmac<Sha256> as Mac>::new_from_slice(key).expect("hmac takes any key length");
    m.update(data);
    m.finalize().into_bytes().into()
}

pub fn mac_verify(key: &Key, data: &[u8], tag: &[u8]) -> bool {
    let mut m = <Hmac<Sha256> as Mac>::new_from_slice(key).expect("hmac takes any key length");
    m.update(data);
    m.verify_slice(tag).is_ok()
}

pub fn random_key<R: RngCore + CryptoRng>(rng: &mut R) -> Key {
    let mut k = [0u8; KEY_LEN];
    rng.fill_bytes(&mut k);
    k
}

/// AES-256-GCM with a random nonce prepended to the ciphertext.
pub fn seal<R: RngCore + CryptoRng>(key: &Key, aad: &[u8], plaintext: &[u8], rng: &mut R) -> Vec<u8> {
    let mut nonce = [0u8; NONCE_LEN];
    rng.fill_bytes(&mut nonce);
    let ct = Aes256Gcm::new(key.into())
        .encrypt(Nonce::from_slice(&nonce), Payload { msg: plaintext, aad })
        .expect("aes-gcm encryption does not fail for in-memory buffers");
    let mut out = Vec::with_capacity(NONCE_LEN + ct.len());
    out.extend_from_slice(&nonce);
    out.extend(ct);
    out
}

pub fn open(key: &Key, aad: &[u8], sealed: &[u8]) -> Result<Vec<u8>, CryptoError> {
    if sealed.len() < NONCE_LEN {
        return Err(CryptoError::Decrypt);
    }
    let (nonce, ct) = sealed.split_at(NONCE_LEN);
    Aes256Gcm::new(key.into())
        .decrypt(Nonce::from_slice(nonce), Payload { msg: ct, aad })
        .map_err(|_| CryptoError::Decrypt)
}

/// Ed25519 signing identity of a user or institution.
#[derive(Clone)]
pub struct Identity {
    key: SigningKey,
}

impl Identity {
    pub fn generate<R: RngCore + CryptoRng>(rng: &mut R) -> Self {
        Self {
            key: SigningKey::generate(rng),
        }
    }

    pub fn from_secret(bytes: &Key) -> Self {
        Self {
            key: SigningKey::from_bytes(bytes),
        }
    }

    pub fn secret(&self) -> Key {
        self.key.to_bytes()
    }

    pub fn public(&self) -> Key {
        self.key.verifying_key().to_bytes()
    }

    pub fn sign(&self, msg: &[u8]) -> [u8; 64] {
        self.key.sign(msg).to_bytes()
    }
}

impl std::fmt::Debug for Identity {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Identity({})", hex::encode(self.public()))
    }
}

pub fn verify(public: &Key, msg: &[u8], sig: &[u8]) -> bool {
    let Ok(vk) = VerifyingKey::from_bytes(public) else {
        return false;
    };
    let Ok(sig) = Signature::from_slice(sig) else {
        return false;
    };
    vk.verify(msg, &sig).is_ok()
}

/// X25519 key pair used for ephemeral agreement and for mail encryption.
#[derive(Clone)]
pub struct AgreementKey {
    secret: StaticSecret,
}

impl AgreementKey {
    pub fn generate<R: RngCore + CryptoRng>(rng: &mut R) -> Self {
        Self {
            secret: StaticSecret::random_from_rng(rng),
        }
    }

    pub fn from_secret(bytes: &Key) -> Self {
        Self {
            secret: StaticSecret::from(*bytes),
        }
    }

    pub fn secret(&self) -> Key {
        self.secret.to_bytes()
    }

    pub fn public(&self) -> Key {
        PublicKey::from(&self.secret).to_bytes()
    }

    pub fn agree(&self, peer: &Key) -> Key {
        self.secret.diffie_hellman(&PublicKey::from(*peer)).to_bytes()
    }
}

impl std::fmt::Debug for AgreementKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "AgreementKey({})", hex::encode(self.public()))
    }
}

/// Public-key encryption: ephemeral X25519, HKDF, AES-256-GCM.
/// Layout: `ephemeral public key || nonce || ciphertext`.
pub fn seal_to<R: RngCore + CryptoRng>(recipient: &Key, plaintext: &[u8], rng: &mut R) -> Vec<u8> {
    let eph = AgreementKey::generate(rng);
    let eph_pub = eph.public();
    let key = hkdf(&eph.agree(recipient), &[eph_pub.as_slice(), recipient.as_slice()].concat(), "seal-to");
    let mut out = eph_pub.to_vec();
    out.extend(seal(&key, &[], plaintext, rng));
    out
}

pub fn open_from(recipient: &AgreementKey, sealed: &[u8]) -> Result<Vec<u8>, CryptoError> {
    if sealed.len() < KEY_LEN {
        return Err(CryptoError::Decrypt);
    }
    let (eph_pub, rest) = sealed.split_at(KEY_LEN);
    let eph_pub: Key = eph_pub.try_into().expect("split at key length");
    let key = hkdf(
        &recipient.agree(&eph_pub),
        &[eph_pub.as_slice(), recipient.public().as_slice()].concat(),
        "seal-to",
    );
    open(&key, &[], rest)
}

pub fn parse_key(s: &str) -> Result<Key, CryptoError> {
    let v = hex::decode(s.trim()).map_err(|_| CryptoError::BadKey)?;
    v.try_into().map_err(|_| CryptoError::BadKey)
}
