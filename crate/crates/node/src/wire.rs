//! Envelopes, kinds and length-delimited framing.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use trustworthy_core::canonical_json;

use crate::crypto::{self, Key};
use crate::error::WireError;

pub const PROTOCOL_VERSION: u32 = 1;
pub const MAX_FRAME: usize = 16 << 20;

macro_rules! kinds {
    ($($variant:ident => $name:literal,)*) => {
        #[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        pub enum Kind {
            $(#[serde(rename = $name)] $variant,)*
        }

        impl Kind {
            pub const ALL: &'static [Kind] = &[$(Kind::$variant,)*];

            pub fn name(self) -> &'static str {
                match self {
                    $(Kind::$variant => $name,)*
                }
            }

            pub fn parse(s: &str) -> Option<Kind> {
                match s {
                    $($name => Some(Kind::$variant),)*
                    _ => None,
                }
            }
        }
    };
}

kinds! {
    AuthHello => "AUTH_HELLO",
    AuthChallenge => "AUTH_CHALLENGE",
    AuthResponse => "AUTH_RESPONSE",
    AuthOk => "AUTH_OK",
    Result => "RESULT",
    Error => "ERROR",
    Register => "REGISTER",
    RegistryGet => "REGISTRY_GET",
    NotePut => "NOTE_PUT",
    NoteGet => "NOTE_GET",
    KeyEscrow => "KEY_ESCROW",
    KeyRetrieve => "KEY_RETRIEVE",
    EmailPut => "EMAIL_PUT",
    EmailList => "EMAIL_LIST",
    EmailGet => "EMAIL_GET",
    SurveyCreate => "SURVEY_CREATE",
    SurveyRespond => "SURVEY_RESPOND",
    SurveyCompute => "SURVEY_COMPUTE",
    SurveyResult => "SURVEY_RESULT",
    GovPropose => "GOV_PROPOSE",
    GovVote => "GOV_VOTE",
    GovStatus => "GOV_STATUS",
    Erase => "ERASE",
    ReplicaCheck => "REPLICA_CHECK",
    AdminRecover => "ADMIN_RECOVER",
    AdminReshare => "ADMIN_RESHARE",
    MulReshare => "MUL_RESHARE",
    OpenContrib => "OPEN_CONTRIB",
    RandContrib => "RAND_CONTRIB",
    ReshareSub => "RESHARE_SUB",
    RecoverReq => "RECOVER_REQ",
    RecoverContrib => "RECOVER_CONTRIB",
    ReplicaQuery => "REPLICA_QUERY",
    ReplicaHash => "REPLICA_HASH",
}

impl Kind {
    /// Kinds exchanged between institutions only.
    pub fn is_peer(self) -> bool {
        matches!(
            self,
            Kind::MulReshare
                | Kind::OpenContrib
                | Kind::RandContrib
                | Kind::ReshareSub
                | Kind::RecoverReq
                | Kind::RecoverContrib
                | Kind::ReplicaQuery
                | Kind::ReplicaHash
        )
    }

    /// Peer kinds that may open a protocol session on the receiver.
    pub fn initiates_session(self) -> bool {
        matches!(self, Kind::ReshareSub | Kind::RecoverReq | Kind::ReplicaQuery)
    }
}

/// One protocol message. `body` is canonical JSON once serialized; `mac` is
/// a hex HMAC over the envelope with an empty `mac` field.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Envelope {
    pub v: u32,
    pub session: String,
    pub seq: u64,
    pub from: String,
    pub to: String,
    pub kind: Kind,
    pub body: Value,
    pub mac: String,
}

impl Envelope {
    pub fn new(session: impl Into<String>, seq: u64, from: impl Into<String>, to: impl Into<String>, kind: Kind, body: Value) -> Self {
        Self {
            v: PROTOCOL_VERSION,
            session: session.into(),
            seq,
            from: from.into(),
            to: to.into(),
            kind,
            body,
            mac: String::new(),
        }
    }

    fn mac_input(&self) -> Vec<u8> {
        let mut bare = self.clone();
        bare.mac.clear();
        bare.encode()
    }

    pub fn authenticate(mut self, key: &Key) -> Self {
        self.mac = hex::encode(crypto::mac(key, &self.mac_input()));
        self
    }

    pub fn check_mac(&self, key: &Key) -> Result<(), WireError> {
        let tag = hex::decode(&self.mac).map_err(|_| WireError::BadMac)?;
        if crypto::mac_verify(key, &self.mac_input(), &tag) {
            Ok(())
        } else {
            Err(WireError::BadMac)
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        canonical_json(self).into_bytes()
    }

    /// Parses an envelope, reporting unknown kinds distinctly from malformed
    /// input.
    pub fn decode(bytes: &[u8]) -> Result<Self, WireError> {
        let raw: Value = serde_json::from_slice(bytes).map_err(|e| WireError::BadFrame(e.to_string()))?;
        if let Some(k) = raw.get("kind").and_then(Value::as_str) {
            if Kind::parse(k).is_none() {
                return Err(WireError::UnknownKind(k.to_owned()));
            }
        }
        let env: Envelope = serde_json::from_value(raw).map_err(|e| WireError::BadFrame(e.to_string()))?;
        if env.v != PROTOCOL_VERSION {
            return Err(WireError::BadVersion(env.v));
        }
        Ok(env)
    }

    pub fn body_as<T: for<'de> Deserialize<'de>>(&self) -> Result<T, WireError> {
        serde_json::from_value(self.body.clone()).map_err(|e| WireError::BadFrame(format!("{} body: {e}", self.kind.name())))
    }
}

pub fn to_body<T: Serialize>(value: &T) -> Value {
    serde_json::to_value(value).expect("serializable body")
}

/// Frame tags: handshake frames travel in the clear, everything else sealed.
pub const FRAME_PLAIN: u8 = 0;
pub const FRAME_SEALED: u8 = 1;

pub fn plain_frame(env: &Envelope) -> Vec<u8> {
    let mut out = vec![FRAME_PLAIN];
    out.extend(env.encode());
    out
}

pub fn sealed_frame(sealed: Vec<u8>) -> Vec<u8> {
    let mut out = Vec::with_capacity(sealed.len() + 1);
    out.push(FRAME_SEALED);
    out.extend(sealed);
    out
}

pub fn split_frame(frame: &[u8]) -> Result<(u8, &[u8]), WireError> {
    match frame.split_first() {
        Some((&t, rest)) if t == FRAME_PLAIN || t == FRAME_SEALED => Ok((t, rest)),
        _ => Err(WireError::BadFrame("unknown frame tag".into())),
    }
}

/// Writes a big-endian u32 length prefix followed by the frame.
pub fn write_frame<W: Write>(w: &mut W, frame: &[u8]) -> std::io::Result<()> {
    if frame.len() > MAX_FRAME {
        return Err(std::io::Error::new(std::io::ErrorKind::InvalidInput, "frame too large"));
    }
    w.write_all(&(frame.len() as u32).to_be_bytes())?;
    w.write_all(frame)?;
    w.flush()
}

pub fn read_frame<R: Read>(r: &mut R) -> std::io::Result<Vec<u8>> {
    let mut len = [0u8; 4];
    r.read_exact(&mut len)?;
    let len = u32::from_be_bytes(len) as usize;
    if len > MAX_FRAME {
        return Err(std::io::Error::new(std::io::ErrorKind::InvalidData, "frame too large"));
    }
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf)?;
    Ok(buf)
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn sample() -> Envelope {
        Envelope::new("s1", 3, "node:1", "node:2", Kind::MulReshare, json!({"b": 1, "a": [1, 2]}))
    }

    #[test]
    fn canonical_encoding_round_trips() {
        let e = sample();
        let bytes = e.encode();
        let text = String::from_utf8(bytes.clone()).unwrap();
        assert!(text.contains(r#""body":{"a":[1,2],"b":1}"#));
        assert!(text.contains(r#""kind":"MUL_RESHARE""#));
        assert_eq!(Envelope::decode(&bytes).unwrap(), e);
    }

    #[test]
    fn unknown_kind_and_version() {
        let mut v = serde_json::to_value(sample()).unwrap();
        v["kind"] = json!("LAUNCH_MISSILES");
        let err = Envelope::decode(v.to_string().as_bytes()).unwrap_err();
        assert_eq!(err, WireError::UnknownKind("LAUNCH_MISSILES".into()));
        let mut v = serde_json::to_value(sample()).unwrap();
        v["v"] = json!(2);
        assert_eq!(Envelope::decode(v.to_string().as_bytes()).unwrap_err(), WireError::BadVersion(2));
    }

    #[test]
    fn kind_names_round_trip() {
        for k in Kind::ALL {
            assert_eq!(Kind::parse(k.name()), Some(*k));
            assert_eq!(serde_json::to_value(k).unwrap(), json!(k.name()));
        }
    }

    #[test]
    fn mac_covers_every_field() {
        let key = [9u8; 32];
        let e = sample().authenticate(&key);
        e.check_mac(&key).unwrap();
        let mut t = e.clone();
        t.seq += 1;
        assert_eq!(t.check_mac(&key), Err(WireError::BadMac));
        let mut t = e.clone();
        t.body = json!({"a": [1, 3], "b": 1});
        assert_eq!(t.check_mac(&key), Err(WireError::BadMac));
        assert_eq!(e.check_mac(&[8u8; 32]), Err(WireError::BadMac));
    }

    #[test]
    fn framing() {
        let mut buf = Vec::new();
        write_frame(&mut buf, b"abc").unwrap();
        write_frame(&mut buf, b"").unwrap();
        let mut r = &buf[..];
        assert_eq!(read_frame(&mut r).unwrap(), b"abc");
        assert_eq!(read_frame(&mut r).unwrap(), b"");
        assert!(read_frame(&mut r).is_err());
    }
}
