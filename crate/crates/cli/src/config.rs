//! Client configuration: a plain key-value file.
//!
//! ```text
//! # user:<name> or inst:<i>
//! identity = user:alice
//! # relative to the config file
//! keypair = alice.keys
//! # majority, unanimity or 1..5
//! threshold = majority
//! timeout_ms = 10000
//! field.p = 2305843009213693951
//! node.1.address = 127.0.0.1:7101
//! node.1.public_key = <hex>
//! ...
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Duration;

use trustworthy_core::policy::{check_threshold, MAJORITY, UNANIMITY};
use trustworthy_core::{Field, INSTITUTIONS, MERSENNE_61};
use trustworthy_node::auth;
use trustworthy_node::client::Credentials;
use trustworthy_node::config::KeyValues;
use trustworthy_node::crypto::{Identity, Key};
use trustworthy_node::tcp::TcpTransport;
use trustworthy_services::{Deployment, UserKeys};

use crate::CliError;

const DEFAULT_TIMEOUT_MS: u64 = 10_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Threshold {
    Majority,
    Unanimity,
    K(u8),
}

impl Threshold {
    pub fn value(self) -> u8 {
        match self {
            Threshold::Majority => MAJORITY,
            Threshold::Unanimity => UNANIMITY,
            Threshold::K(k) => k,
        }
    }
}

impl FromStr for Threshold {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let t = match s {
            "majority" => Threshold::Majority,
            "unanimity" => Threshold::Unanimity,
            k => Threshold::K(k.parse().map_err(|_| format!("threshold {k:?}: expected majority, unanimity or 1..5"))?),
        };
        check_threshold(t.value()).map_err(|e| e.to_string())?;
        Ok(t)
    }
}

impl std::fmt::Display for Threshold {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Threshold::Majority => f.write_str("majority"),
            Threshold::Unanimity => f.write_str("unanimity"),
            Threshold::K(k) => write!(f, "{k}"),
        }
    }
}

#[derive(Clone, Debug)]
pub struct ClientConfig {
    pub identity: String,
    pub keypair: PathBuf,
    pub endpoints: BTreeMap<u32, String>,
    pub node_keys: BTreeMap<u32, Key>,
    pub field: Field,
    pub threshold: Threshold,
    pub timeout: Duration,
}

fn cfg_err(e: impl std::fmt::Display) -> CliError {
    CliError::Config(e.to_string())
}

impl ClientConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let kv = KeyValues::load(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::from_kv(&kv, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn from_kv(kv: &KeyValues, base: &Path) -> Result<Self, CliError> {
        let identity = kv.require("identity").map_err(cfg_err)?.to_owned();
        if auth::institution_of(&identity).is_none() && identity.strip_prefix("user:").is_none_or(str::is_empty) {
            return Err(CliError::Config(format!("identity {identity:?}: expected user:<name> or inst:<i>")));
        }
        let mut endpoints = BTreeMap::new();
        let mut node_keys = BTreeMap::new();
        for i in 1..=INSTITUTIONS as u32 {
            endpoints.insert(i, kv.require(&format!("node.{i}.address")).map_err(cfg_err)?.to_owned());
            node_keys.insert(i, kv.key(&format!("node.{i}.public_key")).map_err(cfg_err)?);
        }
        if endpoints.values().collect::<BTreeSet<_>>().len() != endpoints.len() {
            return Err(CliError::Config("node endpoints must be distinct".into()));
        }
        let p = match kv.get("field.p") {
            Some(_) => kv.parse_num("field.p").map_err(cfg_err)?,
            None => MERSENNE_61,
        };
        Ok(Self {
            identity,
            keypair: base.join(kv.require("keypair").map_err(cfg_err)?),
            endpoints,
            node_keys,
            field: Field::new(p).map_err(cfg_err)?,
            threshold: kv.get("threshold").unwrap_or("majority").parse().map_err(CliError::Config)?,
            timeout: Duration::from_millis(match kv.get("timeout_ms") {
                Some(_) => kv.parse_num("timeout_ms").map_err(cfg_err)?,
                None => DEFAULT_TIMEOUT_MS,
            }),
        })
    }

    /// Renders the config with `keypair` written as given.
    pub fn to_kv(&self, keypair: &str) -> KeyValues {
        let mut kv = KeyValues::default();
        kv.set("identity", &self.identity);
        kv.set("keypair", keypair);
        kv.set("threshold", self.threshold);
        kv.set("timeout_ms", self.timeout.as_millis());
        kv.set("field.p", self.field.modulus());
        for (i, addr) in &self.endpoints {
            kv.set(format!("node.{i}.address"), addr);
            kv.set(format!("node.{i}.public_key"), hex::encode(self.node_keys[i]));
        }
        kv
    }

    pub fn institution(&self) -> Option<u32> {
        auth::institution_of(&self.identity)
    }

    pub fn deployment(&self) -> Deployment {
        Deployment {
            field: self.field,
            node_keys: self.node_keys.clone(),
        }
    }

    pub fn transport(&self) -> TcpTransport {
        TcpTransport::new(self.endpoints.clone(), self.timeout)
    }

    fn keypair_kv(&self) -> Result<KeyValues, CliError> {
        KeyValues::load(&self.keypair).map_err(|e| CliError::Config(format!("{}: {e}", self.keypair.display())))
    }

    /// The user's keys; institutions have none.
    pub fn user_keys(&self) -> Result<UserKeys, CliError> {
        if self.institution().is_some() {
            return Err(CliError::Usage("this command needs a user config".into()));
        }
        let keys = UserKeys::from_kv(&self.keypair_kv()?).map_err(cfg_err)?;
        if auth::user_identity(&keys.name) != self.identity {
            return Err(CliError::Config(format!("{} holds keys for {}", self.keypair.display(), keys.name)));
        }
        Ok(keys)
    }

    pub fn credentials(&self) -> Result<Credentials, CliError> {
        match self.institution() {
            Some(i) => {
                let secret = self.keypair_kv()?.key("secret").map_err(cfg_err)?;
                Ok(Credentials::institution(i, Identity::from_secret(&secret)))
            }
            None => Ok(self.user_keys()?.credentials()),
        }
    }
}
