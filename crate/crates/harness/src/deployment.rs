//! A simulated five-node deployment plus the clients that talk to it.

use std::cell::RefMut;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use tempfile::TempDir;
use trustworthy_core::policy::{Action, Choice};
use trustworthy_core::{FieldParams, RandomStream};
use trustworthy_node::client::Credentials;
use trustworthy_node::sim::{Scheduler, SimNetwork};
use trustworthy_node::store::StoredRecord;
use trustworthy_node::transport::SimHandle;
use trustworthy_node::wire::Envelope;
use trustworthy_node::DeploymentPlan;
use trustworthy_services::{Client, Deployment, ServiceError, UserKeys};

use crate::HarnessError;

pub struct SimDeployment {
    _tmp: Option<TempDir>,
    dir: PathBuf,
    pub plan: DeploymentPlan,
    net: SimHandle,
    seed: RandomStream,
    calls: u64,
    users: BTreeMap<String, UserKeys>,
    tapped: Vec<(u32, Envelope)>,
}

impl std::fmt::Debug for SimDeployment {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SimDeployment").field("dir", &self.dir).finish_non_exhaustive()
    }
}

impl SimDeployment {
    /// A deployment in a fresh temporary directory.
    pub fn new(seed: u64, scheduler: Scheduler) -> Result<Self, HarnessError> {
        let tmp = TempDir::new()?;
        let dir = tmp.path().to_owned();
        let mut d = Self::in_dir(&dir, seed, scheduler, FieldParams::default_params())?;
        d._tmp = Some(tmp);
        Ok(d)
    }

    /// A deployment whose node directories live under `dir`.
    pub fn in_dir(dir: &Path, seed: u64, scheduler: Scheduler, params: FieldParams) -> Result<Self, HarnessError> {
        let master = RandomStream::from_u64(seed);
        let plan_seed = master.fork("plan");
        let mut prng = plan_seed;
        let addrs = (1..=5).map(|i| format!("127.0.0.1:{}", 7400 + i)).collect();
        let plan = DeploymentPlan::generate(params, addrs, &mut prng);
        let net = SimNetwork::from_plan(&plan, dir, Some(seed), scheduler)?;
        let mut d = Self {
            _tmp: None,
            dir: dir.to_owned(),
            plan,
            net: SimHandle::new(net),
            seed: master,
            calls: 0,
            users: BTreeMap::new(),
            tapped: Vec::new(),
        };
        for i in 1..=5 {
            d.set_tap(i);
        }
        Ok(d)
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn network(&self) -> RefMut<'_, SimNetwork> {
        self.net.0.borrow_mut()
    }

    pub fn handle(&self) -> SimHandle {
        self.net.clone()
    }

    pub fn data_dir(&self, node: u32) -> PathBuf {
        self.net.0.borrow().config(node).data_dir.clone()
    }

    fn set_tap(&mut self, node: u32) {
        if let Some(n) = self.network().node_mut(node) {
            n.set_tap(true);
        }
    }

    /// Moves envelopes the nodes opened from clients into the deployment log.
    pub fn drain_taps(&mut self) -> &[(u32, Envelope)] {
        let mut got = Vec::new();
        {
            let mut net = self.network();
            for i in net.indices() {
                if let Some(n) = net.node_mut(i) {
                    got.extend(n.take_tap().into_iter().map(|e| (i, e)));
                }
            }
        }
        self.tapped.extend(got);
        &self.tapped
    }

    pub fn crash(&mut self, node: u32, wipe: bool) -> Result<(), HarnessError> {
        self.drain_taps();
        self.network().crash(node, wipe)?;
        Ok(())
    }

    pub fn restart(&mut self, node: u32) -> Result<(), HarnessError> {
        self.network().restart(node)?;
        self.set_tap(node);
        Ok(())
    }

    pub fn deployment(&self) -> Deployment {
        Deployment::from_plan(&self.plan)
    }

    pub fn institution(&self, i: u32) -> Credentials {
        Credentials::institution(i, self.plan.institutions[i as usize - 1].clone())
    }

    /// Runs `f` with a fresh client for `creds`, then disconnects it.
    pub fn client<T>(&mut self, creds: Credentials, f: impl FnOnce(&mut Client) -> T) -> T {
        self.calls += 1;
        let rng = self.seed.fork(&format!("client|{}", self.calls));
        let deployment = self.deployment();
        let mut handle = self.net.clone();
        let mut c = Client::new(&mut handle, deployment, creds, rng);
        let out = f(&mut c);
        c.disconnect();
        out
    }

    /// Generates keys for `name` and registers them through institution 1.
    pub fn add_user(&mut self, name: &str) -> Result<UserKeys, ServiceError> {
        let mut rng = self.seed.fork(&format!("user|{name}"));
        let keys = UserKeys::generate(name, &mut rng);
        let entry = keys.entry();
        self.client(self.institution(1), |c| c.register(&entry))?;
        self.users.insert(name.to_owned(), keys.clone());
        Ok(keys)
    }

    pub fn user(&self, name: &str) -> Option<&UserKeys> {
        self.users.get(name)
    }

    /// Credentials for `user:<name>` or `inst:<i>`.
    pub fn actor(&self, id: &str) -> Result<Credentials, HarnessError> {
        if let Some(i) = id.strip_prefix("inst:").and_then(|s| s.parse::<u32>().ok()).filter(|i| (1..=5).contains(i)) {
            return Ok(self.institution(i));
        }
        let name = id.strip_prefix("user:").unwrap_or(id);
        self.users
            .get(name)
            .map(UserKeys::credentials)
            .ok_or_else(|| HarnessError::Script(format!("unknown actor {id}")))
    }

    /// Files a proposal as `by` and has `voters` approve it; returns its id.
    pub fn approve(&mut self, by: Credentials, action: Action, target: &str, new_threshold: Option<u8>, voters: &[u32]) -> Result<String, ServiceError> {
        let st = self.client(by, |c| c.propose(action, target, new_threshold))?;
        let id = st.proposal.proposal_id;
        for &i in voters {
            self.client(self.institution(i), |c| c.vote(&id, Choice::Approve))?;
        }
        Ok(id)
    }

    /// Node `node`'s stored record, if it is up and holds one.
    pub fn record(&self, node: u32, record_id: &str) -> Option<StoredRecord> {
        self.net.0.borrow().node(node).and_then(|n| n.store().get(record_id).cloned())
    }
}
