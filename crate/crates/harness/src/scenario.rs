//! Scripted runs: a seed, a delivery schedule, faults and client actions.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use trustworthy_core::canonical_json;
use trustworthy_core::policy::{Action, Choice};
use trustworthy_node::proto::SurveyDef;
use trustworthy_node::sim::Scheduler;
use trustworthy_node::store;
use trustworthy_services::ServiceError;

use crate::{HarnessError, SimDeployment};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Schedule {
    #[default]
    Fifo,
    Random(u64),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FaultKind {
    Crash,
    /// Crash and lose the data directory.
    CrashWipe,
    Restart,
    /// Overwrite a stored blob with node-specific garbage.
    CorruptRecord(String),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fault {
    /// Applied before script step `before` (0-based).
    pub before: usize,
    pub node: u32,
    pub fault: FaultKind,
}

/// One client action. String fields may reference earlier results as `{label}`;
/// readers and proposers are `inst:<i>` or a user name.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Op {
    Register { user: String },
    NoteCreate { user: String, text: String, threshold: u8 },
    NoteRead { user: String, note: String, #[serde(default)] proposal: Option<String> },
    NoteUpdate { user: String, note: String, text: String, threshold: u8 },
    KeyEscrow { user: String, key_hex: String, threshold: u8, #[serde(default)] hint: String },
    KeyRetrieve { user: String, key: String, #[serde(default)] proposal: Option<String> },
    EmailSend { from: String, to: String, body: String },
    EmailRead { user: String, email: String },
    Propose { by: String, action: Action, target: String, #[serde(default)] new_threshold: Option<u8> },
    Vote { institution: u32, proposal: String, approve: bool },
    Status { proposal: String },
    SurveyCreate { institution: u32, survey: SurveyDef, proposal: String },
    SurveyRespond { user: String, survey: String, answers: Vec<u64> },
    SurveyCompute { by: String, survey: String, query: String, proposal: String },
    Erase { by: String, target: String, #[serde(default)] proposal: Option<String> },
    Recover { node: u32, helpers: Vec<u32> },
    Reshare { institution: u32, proposal: String, #[serde(default)] quorum: Option<Vec<u32>> },
    ReplicaCheck { node: u32, record: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Step {
    #[serde(flatten)]
    pub op: Op,
    /// Name under which the result is remembered.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub save_as: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expect: Option<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expect_error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub seed: u64,
    #[serde(default = "five")]
    pub node_count: u32,
    #[serde(default)]
    pub schedule: Schedule,
    #[serde(default)]
    pub faults: Vec<Fault>,
    #[serde(default)]
    pub script: Vec<Step>,
}

fn five() -> u32 {
    5
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        serde_json::from_str(text).map_err(|e| HarnessError::Script(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        canonical_json(self)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepOutcome {
    pub step: usize,
    pub op: String,
    pub result: Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub steps: Vec<StepOutcome>,
    /// Governance log lines per node.
    pub decisions: BTreeMap<u32, Vec<String>>,
    /// Published statistics log lines per node.
    pub opened: BTreeMap<u32, Vec<String>>,
    /// Every node holding decision records holds the same ones.
    pub decisions_coherent: bool,
    pub deliveries: usize,
    /// Covers delivered peer envelopes and every client and peer frame.
    pub transcript_hash: String,
    pub passed: bool,
}

struct Runner<'a> {
    dep: &'a mut SimDeployment,
    labels: BTreeMap<String, String>,
}

fn op_name(op: &Op) -> String {
    serde_json::to_value(op)
        .ok()
        .and_then(|v| v.get("op").and_then(Value::as_str).map(str::to_owned))
        .unwrap_or_default()
}

impl Runner<'_> {
    fn resolve(&self, s: &str) -> Result<String, HarnessError> {
        let mut out = String::new();
        let mut rest = s;
        while let Some(start) = rest.find('{') {
            let Some(len) = rest[start..].find('}') else { break };
            let name = &rest[start + 1..start + len];
            let v = self
                .labels
                .get(name)
                .ok_or_else(|| HarnessError::Script(format!("unknown label {name}")))?;
            out.push_str(&rest[..start]);
            out.push_str(v);
            rest = &rest[start + len + 1..];
        }
        out.push_str(rest);
        Ok(out)
    }

    fn resolve_opt(&self, s: &Option<String>) -> Result<Option<String>, HarnessError> {
        s.as_deref().map(|s| self.resolve(s)).transpose()
    }

    fn user(&self, name: &str) -> Result<trustworthy_services::UserKeys, HarnessError> {
        self.dep
            .user(name)
            .cloned()
            .ok_or_else(|| HarnessError::Script(format!("unknown user {name}")))
    }

    fn exec(&mut self, op: &Op) -> Result<Result<Value, ServiceError>, HarnessError> {
        let d = &mut *self.dep;
        Ok(match op {
            Op::Register { user } => d.add_user(user).map(|_| Value::Null),
            Op::NoteCreate { user, text, threshold } => {
                let u = self.user(user)?;
                let d = &mut *self.dep;
                d.client(u.credentials(), |c| c.note_create(text, *threshold)).map(Value::from)
            }
            Op::NoteRead { user, note, proposal } => {
                let (creds, note, proposal) = (self.dep.actor(user)?, self.resolve(note)?, self.resolve_opt(proposal)?);
                self.dep
                    .client(creds, |c| c.note_read(&note, proposal.as_deref()))
                    .map(Value::from)
            }
            Op::NoteUpdate { user, note, text, threshold } => {
                let (u, note) = (self.user(user)?, self.resolve(note)?);
                self.dep
                    .client(u.credentials(), |c| c.note_update(&note, text, *threshold))
                    .map(|()| Value::Null)
            }
            Op::KeyEscrow { user, key_hex, threshold, hint } => {
                let u = self.user(user)?;
                let key = hex::decode(key_hex).map_err(|e| HarnessError::Script(format!("key_hex: {e}")))?;
                self.dep
                    .client(u.credentials(), |c| c.key_escrow(&key, *threshold, hint))
                    .map(Value::from)
            }
            Op::KeyRetrieve { user, key, proposal } => {
                let (creds, key, proposal) = (self.dep.actor(user)?, self.resolve(key)?, self.resolve_opt(proposal)?);
                self.dep
                    .client(creds, |c| c.key_retrieve(&key, proposal.as_deref()))
                    .map(|k| Value::from(hex::encode(k)))
            }
            Op::EmailSend { from, to, body } => {
                let u = self.user(from)?;
                self.dep.client(u.credentials(), |c| c.email_send(to, body)).map(Value::from)
            }
            Op::EmailRead { user, email } => {
                let (u, email) = (self.user(user)?, self.resolve(email)?);
                self.dep
                    .client(u.credentials(), |c| c.email_read(&u, &email))
                    .map(|m| Value::from(m.body))
            }
            Op::Propose {
                by,
                action,
                target,
                new_threshold,
            } => {
                let (creds, target) = (d.actor(by)?, self.resolve(target)?);
                self.dep
                    .client(creds, |c| c.propose(*action, &target, *new_threshold))
                    .map(|st| Value::from(st.proposal.proposal_id))
            }
            Op::Vote {
                institution,
                proposal,
                approve,
            } => {
                let pid = self.resolve(proposal)?;
                let choice = if *approve { Choice::Approve } else { Choice::Reject };
                let creds = self.dep.actor(&format!("inst:{institution}"))?;
                self.dep
                    .client(creds, |c| c.vote(&pid, choice))
                    .map(|st| json!({ "decided": st.decision.as_ref().map(|d| d.approved) }))
            }
            Op::Status { proposal } => {
                let pid = self.resolve(proposal)?;
                self.dep
                    .client(d_inst(self.dep, 1)?, |c| c.proposal_status(&pid))
                    .map(|st| json!({ "approvals": st.approvals, "decided": st.decision.as_ref().map(|d| d.approved) }))
            }
            Op::SurveyCreate {
                institution,
                survey,
                proposal,
            } => {
                let pid = self.resolve(proposal)?;
                let creds = d_inst(self.dep, *institution)?;
                self.dep.client(creds, |c| c.survey_create(survey, &pid)).map(|()| Value::Null)
            }
            Op::SurveyRespond { user, survey, answers } => {
                let u = self.user(user)?;
                self.dep
                    .client(u.credentials(), |c| c.survey_respond(survey, answers))
                    .map(|()| Value::Null)
            }
            Op::SurveyCompute {
                by,
                survey,
                query,
                proposal,
            } => {
                let (creds, pid) = (d.actor(by)?, self.resolve(proposal)?);
                self.dep
                    .client(creds, |c| c.survey_compute(survey, query, &pid))
                    .map(|s| json!({ "numerator": s.numerator, "denominator": s.denominator, "percentage": s.percentage }))
            }
            Op::Erase { by, target, proposal } => {
                let (creds, target, proposal) = (d.actor(by)?, self.resolve(target)?, self.resolve_opt(proposal)?);
                self.dep
                    .client(creds, |c| c.erase(&target, proposal.as_deref()))
                    .map(|e| json!(e))
            }
            Op::Recover { node, helpers } => {
                let creds = d_inst(self.dep, *node)?;
                self.dep
                    .client(creds, |c| c.recover(*node, helpers.clone()))
                    .map(|r| json!(r.recovered))
            }
            Op::Reshare {
                institution,
                proposal,
                quorum,
            } => {
                let (creds, pid) = (d_inst(self.dep, *institution)?, self.resolve(proposal)?);
                self.dep
                    .client(creds, |c| c.reshare(&pid, quorum.clone()))
                    .map(|r| json!(r.values().next().map(|d| d.threshold)))
            }
            Op::ReplicaCheck { node, record } => {
                let (creds, record) = (d_inst(self.dep, *node)?, self.resolve(record)?);
                self.dep
                    .client(creds, |c| c.replica_check(*node, &record))
                    .map(|r| json!({ "consistent": r.consistent, "flagged": r.flagged }))
            }
        })
    }

    fn fault(&mut self, f: &Fault) -> Result<(), HarnessError> {
        match &f.fault {
            FaultKind::Crash => self.dep.crash(f.node, false),
            FaultKind::CrashWipe => self.dep.crash(f.node, true),
            FaultKind::Restart => self.dep.restart(f.node),
            FaultKind::CorruptRecord(id) => {
                let id = self.resolve(id)?;
                let path = self.dep.data_dir(f.node).join(store::BLOBS).join(store::blob_file_name(&id));
                if !path.exists() {
                    return Err(HarnessError::Script(format!("node {} has no blob {id}", f.node)));
                }
                std::fs::write(path, format!("corrupted on node {}", f.node))?;
                Ok(())
            }
        }
    }
}

fn d_inst(d: &SimDeployment, i: u32) -> Result<trustworthy_node::client::Credentials, HarnessError> {
    d.actor(&format!("inst:{i}"))
}

fn read_log(dep: &SimDeployment, node: u32, name: &str) -> Result<Vec<String>, HarnessError> {
    Ok(store::read_lines(&dep.data_dir(node).join(name))?)
}

/// Runs `scenario` in a fresh temporary directory.
pub fn run(scenario: &Scenario) -> Result<RunReport, HarnessError> {
    let tmp = tempfile::TempDir::new()?;
    run_in(scenario, tmp.path())
}

/// Runs `scenario` with node directories under `dir`.
pub fn run_in(scenario: &Scenario, dir: &Path) -> Result<RunReport, HarnessError> {
    if scenario.node_count != 5 {
        return Err(HarnessError::Script(format!("node_count must be 5, got {}", scenario.node_count)));
    }
    let scheduler = match scenario.schedule {
        Schedule::Fifo => Scheduler::Fifo,
        Schedule::Random(s) => Scheduler::Random(s),
    };
    let mut dep = SimDeployment::in_dir(dir, scenario.seed, scheduler, trustworthy_core::FieldParams::default_params())?;
    let mut runner = Runner {
        dep: &mut dep,
        labels: BTreeMap::new(),
    };
    let mut steps = Vec::new();
    for (i, step) in scenario.script.iter().enumerate() {
        for f in scenario.faults.iter().filter(|f| f.before == i) {
            runner.fault(f)?;
        }
        let outcome = runner.exec(&step.op)?;
        let (result, error) = match outcome {
            Ok(v) => (v, None),
            Err(e) => (Value::Null, Some(e.name())),
        };
        if let (Some(label), Some(v)) = (&step.save_as, result.as_str()) {
            runner.labels.insert(label.clone(), v.to_owned());
        }
        let passed = match (&step.expect_error, &error) {
            (Some(want), Some(got)) => want == got,
            (Some(_), None) => false,
            (None, Some(_)) => false,
            (None, None) => step.expect.as_ref().is_none_or(|e| *e == result),
        };
        steps.push(StepOutcome {
            step: i,
            op: op_name(&step.op),
            result,
            error,
            passed,
        });
    }
    for f in scenario.faults.iter().filter(|f| f.before >= scenario.script.len()) {
        runner.fault(f)?;
    }
    let mut decisions = BTreeMap::new();
    let mut opened = BTreeMap::new();
    for i in 1..=5 {
        decisions.insert(i, read_log(&dep, i, store::DECISIONS)?);
        opened.insert(i, read_log(&dep, i, store::RESULTS)?);
    }
    let decided: Vec<Vec<&String>> = decisions
        .values()
        .map(|lines| lines.iter().filter(|l| l.contains("\"event\":\"decision\"")).collect())
        .filter(|d: &Vec<&String>| !d.is_empty())
        .collect();
    let decisions_coherent = decided.windows(2).all(|w| w[0] == w[1]);
    let net = dep.network();
    let passed = steps.iter().all(|s| s.passed) && decisions_coherent;
    Ok(RunReport {
        deliveries: net.transcript().len(),
        transcript_hash: trustworthy_node::crypto::sha256_hex(format!("{}:{}", net.transcript_hash(), net.wire_hash()).as_bytes()),
        steps,
        decisions,
        opened,
        decisions_coherent,
        passed,
    })
}

impl RunReport {
    /// Writes the report and the per-node logs under `dir`.
    pub fn write_logs(&self, dir: &Path) -> Result<(), HarnessError> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("report.json"), serde_json::to_string_pretty(self)?)?;
        for (i, lines) in &self.decisions {
            std::fs::write(dir.join(format!("decisions{i}.log")), lines.join("\n"))?;
        }
        for (i, lines) in &self.opened {
            std::fs::write(dir.join(format!("opened{i}.log")), lines.join("\n"))?;
        }
        Ok(())
    }
}
