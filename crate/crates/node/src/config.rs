//! Plain-text `key = value` configuration files.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use num_bigint::BigUint;
use rand::{CryptoRng, RngCore};
use trustworthy_core::{CommitmentGroup, Field, FieldParams, INSTITUTIONS, MERSENNE_61};

use crate::crypto::{self, Identity, Key};
use crate::error::NodeError;

/// Ordered `key = value` pairs; `#` starts a comment line.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct KeyValues(pub BTreeMap<String, String>);

impl KeyValues {
    pub fn parse(text: &str) -> Result<Self, NodeError> {
        let mut map = BTreeMap::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| NodeError::Config(format!("line {}: expected key = value", n + 1)))?;
            if map.insert(k.trim().to_owned(), v.trim().to_owned()).is_some() {
                return Err(NodeError::Config(format!("line {}: duplicate key {}", n + 1, k.trim())));
            }
        }
        Ok(Self(map))
    }

    pub fn load(path: &Path) -> Result<Self, NodeError> {
        let text = std::fs::read_to_string(path).map_err(|e| NodeError::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.0.get(key).map(String::as_str)
    }

    pub fn require(&self, key: &str) -> Result<&str, NodeError> {
        self.get(key).ok_or_else(|| NodeError::Config(format!("missing {key}")))
    }

    pub fn parse_num<T: std::str::FromStr>(&self, key: &str) -> Result<T, NodeError> {
        self.require(key)?
            .parse()
            .map_err(|_| NodeError::Config(format!("{key} is not a number")))
    }

    pub fn key(&self, key: &str) -> Result<Key, NodeError> {
        crypto::parse_key(self.require(key)?).map_err(|_| NodeError::Config(format!("{key} is not a 32-byte hex key")))
    }

    pub fn set(&mut self, key: impl Into<String>, value: impl ToString) {
        self.0.insert(key.into(), value.to_string());
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.0 {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }
}

fn resolve(base: &Path, p: &str) -> PathBuf {
    let p = PathBuf::from(p);
    if p.is_absolute() {
        p
    } else {
        base.join(p)
    }
}

/// Field parameters from `field.p` plus optional `field.q` / `field.g`.
/// Without an explicit group the built-in one for the modulus is used.
pub fn field_params_from(kv: &KeyValues) -> Result<FieldParams, NodeError> {
    let p: u64 = match kv.get("field.p") {
        Some(_) => kv.parse_num("field.p")?,
        None => MERSENNE_61,
    };
    let field = Field::new(p)?;
    let group = match (kv.get("field.q"), kv.get("field.g")) {
        (Some(q), Some(g)) => {
            let parse = |s: &str| s.parse::<BigUint>().map_err(|_| NodeError::Config("bad commitment group".into()));
            Some(CommitmentGroup::new(parse(q)?, parse(g)?))
        }
        (None, None) if p == MERSENNE_61 => Some(CommitmentGroup::for_mersenne61()),
        (None, None) if p == 31 => Some(CommitmentGroup::for_p31()),
        (None, None) => None,
        _ => return Err(NodeError::Config("field.q and field.g go together".into())),
    };
    Ok(FieldParams::new(field, group)?)
}

fn write_field_params(kv: &mut KeyValues, params: &FieldParams) {
    kv.set("field.p", params.field.modulus());
    if let Some(g) = &params.commitment_group {
        kv.set("field.q", &g.q);
        kv.set("field.g", &g.g);
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PeerConfig {
    pub address: String,
    /// Institution signing key.
    pub public_key: Key,
    /// Pre-shared symmetric key for this pair of institutions.
    pub psk: Key,
}

#[derive(Clone, Debug)]
pub struct NodeConfig {
    pub index: u32,
    pub listen_address: String,
    pub peers: BTreeMap<u32, PeerConfig>,
    pub field_params: FieldParams,
    pub data_dir: PathBuf,
    pub institution_keypair: PathBuf,
    pub institution: Identity,
    pub user_registry_path: PathBuf,
    /// Fixed randomness for reproducible runs; fresh entropy when absent.
    pub seed: Option<u64>,
    pub max_sessions: usize,
}

pub const DEFAULT_MAX_SESSIONS: usize = 64;

impl NodeConfig {
    pub fn load(path: &Path) -> Result<Self, NodeError> {
        let kv = KeyValues::load(path)?;
        Self::from_kv(&kv, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn from_kv(kv: &KeyValues, base: &Path) -> Result<Self, NodeError> {
        let index: u32 = kv.parse_num("index")?;
        if index == 0 || index as usize > INSTITUTIONS {
            return Err(NodeError::Config(format!("index {index} outside 1..={INSTITUTIONS}")));
        }
        let mut peers = BTreeMap::new();
        for j in 1..=INSTITUTIONS as u32 {
            if j == index {
                continue;
            }
            let p = |f: &str| format!("peer.{j}.{f}");
            peers.insert(
                j,
                PeerConfig {
                    address: kv.require(&p("address"))?.to_owned(),
                    public_key: kv.key(&p("public_key"))?,
                    psk: kv.key(&p("psk"))?,
                },
            );
        }
        let keypair_path = resolve(base, kv.require("institution_keypair")?);
        let key_kv = KeyValues::load(&keypair_path)?;
        let institution = Identity::from_secret(&key_kv.key("secret")?);
        Ok(Self {
            index,
            listen_address: kv.require("listen_address")?.to_owned(),
            peers,
            field_params: field_params_from(kv)?,
            data_dir: resolve(base, kv.require("data_dir")?),
            institution_keypair: keypair_path,
            institution,
            user_registry_path: resolve(base, kv.require("user_registry_path")?),
            seed: kv.get("seed").map(|_| kv.parse_num("seed")).transpose()?,
            max_sessions: kv.get("max_sessions").map(|_| kv.parse_num("max_sessions")).transpose()?.unwrap_or(DEFAULT_MAX_SESSIONS),
        })
    }

    pub fn to_kv(&self) -> KeyValues {
        let mut kv = KeyValues::default();
        kv.set("index", self.index);
        kv.set("listen_address", &self.listen_address);
        for (j, p) in &self.peers {
            kv.set(format!("peer.{j}.address"), &p.address);
            kv.set(format!("peer.{j}.public_key"), hex::encode(p.public_key));
            kv.set(format!("peer.{j}.psk"), hex::encode(p.psk));
        }
        write_field_params(&mut kv, &self.field_params);
        kv.set("data_dir", self.data_dir.display());
        kv.set("institution_keypair", self.institution_keypair.display());
        kv.set("user_registry_path", self.user_registry_path.display());
        if let Some(s) = self.seed {
            kv.set("seed", s);
        }
        kv.set("max_sessions", self.max_sessions);
        kv
    }

    /// Public keys of all five institutions, this one included.
    pub fn institution_keys(&self) -> BTreeMap<u32, Key> {
        let mut keys: BTreeMap<u32, Key> = self.peers.iter().map(|(j, p)| (*j, p.public_key)).collect();
        keys.insert(self.index, self.institution.public());
        keys
    }
}

/// Key material and addresses for a full five-node deployment.
#[derive(Clone, Debug)]
pub struct DeploymentPlan {
    pub field_params: FieldParams,
    pub addresses: Vec<String>,
    pub institutions: Vec<Identity>,
    /// `psks[i][j]` for 0-based institution positions, symmetric.
    pub psks: Vec<Vec<Key>>,
}

impl DeploymentPlan {
    pub fn generate<R: RngCore + CryptoRng>(field_params: FieldParams, addresses: Vec<String>, rng: &mut R) -> Self {
        assert_eq!(addresses.len(), INSTITUTIONS, "one address per institution");
        let institutions: Vec<Identity> = (0..INSTITUTIONS).map(|_| Identity::generate(rng)).collect();
        let mut psks = vec![vec![[0u8; 32]; INSTITUTIONS]; INSTITUTIONS];
        for i in 0..INSTITUTIONS {
            for j in i + 1..INSTITUTIONS {
                let k = crypto::random_key(rng);
                psks[i][j] = k;
                psks[j][i] = k;
            }
        }
        Self {
            field_params,
            addresses,
            institutions,
            psks,
        }
    }

    pub fn institution_keys(&self) -> BTreeMap<u32, Key> {
        self.institutions.iter().enumerate().map(|(i, id)| (i as u32 + 1, id.public())).collect()
    }

    /// Configuration for node `index` rooted at `dir`.
    pub fn node_config(&self, index: u32, dir: &Path, seed: Option<u64>) -> NodeConfig {
        let i = index as usize - 1;
        let peers = (1..=INSTITUTIONS as u32)
            .filter(|&j| j != index)
            .map(|j| {
                let jj = j as usize - 1;
                (
                    j,
                    PeerConfig {
                        address: self.addresses[jj].clone(),
                        public_key: self.institutions[jj].public(),
                        psk: self.psks[i][jj],
                    },
                )
            })
            .collect();
        NodeConfig {
            index,
            listen_address: self.addresses[i].clone(),
            peers,
            field_params: self.field_params.clone(),
            data_dir: dir.join(format!("node{index}")),
            institution_keypair: dir.join(format!("inst{index}.key")),
            institution: self.institutions[i].clone(),
            user_registry_path: dir.join(format!("node{index}")).join("registry.log"),
            seed,
            max_sessions: DEFAULT_MAX_SESSIONS,
        }
    }

    /// Writes `node{i}.conf` and `inst{i}.key` for every institution.
    pub fn write(&self, dir: &Path, seed: Option<u64>) -> Result<Vec<PathBuf>, NodeError> {
        std::fs::create_dir_all(dir)?;
        let mut paths = Vec::new();
        for index in 1..=INSTITUTIONS as u32 {
            let cfg = self.node_config(index, dir, seed.map(|s| s.wrapping_add(index as u64)));
            let mut key = KeyValues::default();
            key.set("public", hex::encode(cfg.institution.public()));
            key.set("secret", hex::encode(cfg.institution.secret()));
            std::fs::write(&cfg.institution_keypair, key.render())?;
            let mut kv = cfg.to_kv();
            kv.set("data_dir", format!("node{index}"));
            kv.set("institution_keypair", format!("inst{index}.key"));
            kv.set("user_registry_path", format!("node{index}/registry.log"));
            let path = dir.join(format!("node{index}.conf"));
            std::fs::write(&path, kv.render())?;
            paths.push(path);
        }
        Ok(paths)
    }
}
