//! Email sealed to the recipient's registered key, then threshold-shared so
//! no single node holds even the ciphertext.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use trustworthy_node::client::ClientError;
use trustworthy_node::crypto;
use trustworthy_node::proto::{EmailData, EmailMeta, EmailPut, ItemGet, RegistryGet, UserEntry};
use trustworthy_node::wire::Kind;

use crate::{all_ok, at_least, chunks, majority, Client, Result, ServiceError, UserKeys, MAJORITY, N};

/// Largest email body accepted, in bytes.
pub const EMAIL_LIMIT: usize = 256 * 1024;

/// Sharing threshold of every email.
pub const EMAIL_THRESHOLD: usize = 3;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Email {
    pub email_id: String,
    pub sender: String,
    pub body: String,
}

impl Client<'_> {
    /// Looks `user` up in the registry; a majority of nodes must agree.
    pub fn lookup_user(&mut self, user: &str) -> Result<UserEntry> {
        let req = RegistryGet { user: user.to_owned() };
        let replies = self.broadcast(Kind::RegistryGet, |_| req.clone());
        let mut entries = Vec::new();
        let mut missing = 0;
        for r in replies.into_values() {
            match r {
                Ok(v) => {
                    if let Ok(e) = serde_json::from_value::<UserEntry>(v) {
                        entries.push(e);
                    }
                }
                Err(ClientError::Remote { error, .. }) if error == "NotFound" => missing += 1,
                Err(_) => {}
            }
        }
        if let Some(e) = majority(entries) {
            return Ok(e);
        }
        if missing >= MAJORITY {
            return Err(ServiceError::UnknownRecipient(user.to_owned()));
        }
        Err(ServiceError::RegistryInconsistent(user.to_owned()))
    }

    /// Sends `body` to registered user `recipient`; returns the email id.
    pub fn email_send(&mut self, recipient: &str, body: &str) -> Result<String> {
        if body.len() > EMAIL_LIMIT {
            return Err(ServiceError::EmailTooLarge { limit: EMAIL_LIMIT });
        }
        let entry = self.lookup_user(recipient)?;
        let enc_pk = crypto::parse_key(&entry.enc_pk).map_err(|_| ServiceError::RegistryInconsistent(recipient.to_owned()))?;
        let sealed = crypto::seal_to(&enc_pk, body.as_bytes(), self.rng());
        let field = self.field();
        let shares = chunks::share_vector(&chunks::encode(field, &sealed)?, EMAIL_THRESHOLD, N, self.rng())?;
        let id = self.random_id();
        let replies = self.broadcast(Kind::EmailPut, |i| EmailPut {
            email_id: id.clone(),
            recipient: recipient.to_owned(),
            share: shares[&i].clone(),
        });
        all_ok::<serde_json::Value>(replies)?;
        Ok(id)
    }

    /// Ids and senders of the caller's mail, as listed by any node.
    pub fn email_list(&mut self) -> Result<Vec<EmailMeta>> {
        let replies: BTreeMap<u32, Vec<EmailMeta>> = at_least(self.broadcast(Kind::EmailList, |_| serde_json::json!({})), EMAIL_THRESHOLD)?;
        let all: BTreeSet<EmailMeta> = replies.into_values().flatten().collect();
        Ok(all.into_iter().collect())
    }

    /// Reconstructs and decrypts one email with the caller's keys.
    pub fn email_read(&mut self, keys: &UserKeys, email_id: &str) -> Result<Email> {
        let req = ItemGet {
            id: email_id.to_owned(),
            proposal: None,
        };
        let replies: BTreeMap<u32, EmailData> = at_least(self.broadcast(Kind::EmailGet, |_| req.clone()), EMAIL_THRESHOLD)?;
        let sender = majority(replies.values().map(|d| d.sender.clone()))
            .ok_or_else(|| ServiceError::ReplicaMismatch(email_id.to_owned()))?;
        let vectors: Vec<_> = replies.values().map(|d| d.share.clone()).collect();
        let sealed = chunks::decode(self.field(), &chunks::reconstruct_vector(self.field(), &vectors, EMAIL_THRESHOLD)?)?;
        let body = crypto::open_from(&keys.enc, &sealed).map_err(|_| ServiceError::DecryptFailure)?;
        Ok(Email {
            email_id: email_id.to_owned(),
            sender,
            body: String::from_utf8(body).map_err(|_| ServiceError::DecryptFailure)?,
        })
    }
}
