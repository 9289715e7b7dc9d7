//! Client request handlers.

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use serde_json::{json, Value};
use trustworthy_core::canonical_json;
use trustworthy_core::mpc::survey::{build_query_circuit, build_response_check, AttrType, SurveySchema};
use trustworthy_core::mpc::NodeShares;
use trustworthy_core::policy::{self, AccessPolicy, AccessState, Action, Decision, PolicyKind, VoteOutcome};
use trustworthy_core::Fe;

use super::protocols::{MpcPurpose, ReplicaRun};
use super::{verify_vote, GovEvent, Node, Output, ResultEvent, Waiter, EMAIL_K, SURVEY_SHARING_K};
use crate::auth;
use crate::crypto;
use crate::error::NodeError;
use crate::proto::*;
use crate::store::{self, RecordKind, StoredRecord};
use crate::wire::{Envelope, Kind};

/// Record id of a note's ciphertext blob.
pub fn note_blob_id(note_id: &str) -> String {
    format!("{note_id}.ct")
}

pub fn email_record_id(email_id: &str) -> String {
    format!("email:{email_id}")
}

pub fn survey_record_id(survey_id: &str) -> String {
    format!("survey:{survey_id}")
}

pub fn response_record_id(survey_id: &str, respondent: &str) -> String {
    format!("survey:{survey_id}:resp:{respondent}")
}

/// Governance target of a survey query.
pub fn query_target(survey_id: &str, query_id: &str) -> String {
    format!("survey:{survey_id}/{query_id}")
}

fn ack(id: &str) -> Value {
    json!({ "stored": id })
}

impl Node {
    pub(super) fn dispatch_client(
        &mut self,
        identity: &str,
        w: Waiter,
        env: &Envelope,
        out: &mut Vec<Output>,
    ) -> Result<Option<Value>, NodeError> {
        let v = match env.kind {
            Kind::Register => self.register(identity, env.body_as()?)?,
            Kind::RegistryGet => {
                let req: RegistryGet = env.body_as()?;
                let e = self.registry.get(&req.user).ok_or(NodeError::NotFound(req.user))?;
                json!(e)
            }
            Kind::NotePut => self.note_put(identity, env.body_as()?)?,
            Kind::NoteGet => self.note_get(identity, env.body_as()?)?,
            Kind::KeyEscrow => self.key_escrow(identity, env.body_as()?)?,
            Kind::KeyRetrieve => self.key_retrieve(identity, env.body_as()?)?,
            Kind::EmailPut => self.email_put(identity, env.body_as()?)?,
            Kind::EmailList => self.email_list(identity),
            Kind::EmailGet => self.email_get(identity, env.body_as()?)?,
            Kind::SurveyCreate => self.survey_create(identity, env.body_as()?)?,
            Kind::SurveyRespond => return self.survey_respond(identity, w, env.body_as()?, out),
            Kind::SurveyCompute => return self.survey_compute(identity, w, env.body_as()?, out),
            Kind::SurveyResult => {
                let req: SurveyRef = env.body_as()?;
                json!(self.survey_info(&req.survey_id)?)
            }
            Kind::GovPropose => self.gov_propose(identity, env.body_as()?)?,
            Kind::GovVote => self.gov_vote(identity, env.body_as()?)?,
            Kind::GovStatus => {
                let req: GovStatusReq = env.body_as()?;
                let st = self.gov.get(&req.proposal_id).ok_or(NodeError::NotFound(req.proposal_id))?;
                json!(GovStatus::from(st))
            }
            Kind::Erase => self.erase_req(identity, env.body_as()?)?,
            Kind::ReplicaCheck => return self.replica_check(w, env.body_as()?, out),
            Kind::AdminRecover => {
                self.require_own_institution(identity)?;
                return self.start_recover(w, env.body_as()?, out);
            }
            Kind::AdminReshare => {
                self.require_institution(identity)?;
                return self.admin_reshare(w, env.body_as()?, out);
            }
            k => return Err(NodeError::UnknownKind(k.name().into())),
        };
        Ok(Some(v))
    }

    fn require_user<'a>(&self, identity: &'a str) -> Result<&'a str, NodeError> {
        if identity.starts_with("user:") {
            Ok(identity)
        } else {
            Err(NodeError::NotAuthorized(format!("{identity} is not a user")))
        }
    }

    fn require_institution(&self, identity: &str) -> Result<u32, NodeError> {
        auth::institution_of(identity).ok_or_else(|| NodeError::NotAuthorized(format!("{identity} is not an institution")))
    }

    fn require_own_institution(&self, identity: &str) -> Result<(), NodeError> {
        if self.require_institution(identity)? != self.cfg.index {
            return Err(NodeError::NotAuthorized("administration is local to each institution".into()));
        }
        Ok(())
    }

    fn parse_share_vec(&self, sv: &ShareVec) -> Result<Vec<String>, NodeError> {
        if sv.index != self.cfg.index {
            return Err(NodeError::BadRequest(format!("share for node {} sent to node {}", sv.index, self.cfg.index)));
        }
        if sv.values.is_empty() {
            return Err(NodeError::BadRequest("empty share".into()));
        }
        sv.values
            .iter()
            .map(|v| Ok(self.field.parse(v)?.to_string()))
            .collect()
    }

    fn share_vec(&self, rec: &StoredRecord) -> ShareVec {
        ShareVec {
            index: self.cfg.index,
            values: rec.values.clone(),
        }
    }

    fn record(&self, id: &str) -> Result<&StoredRecord, NodeError> {
        self.store.get(id).ok_or_else(|| NodeError::NotFound(id.to_owned()))
    }

    /// Owner access, or an approved REVEAL decision requested by `identity`.
    fn authorize_read(&self, identity: &str, rec: &StoredRecord, proposal: Option<&str>) -> Result<(), NodeError> {
        let state = AccessState {
            restricted: self.restricted.contains(&rec.record_id),
        };
        let Some(pid) = proposal else {
            policy::owner_access(&rec.policy, state, identity)?;
            return Ok(());
        };
        let st = self.gov.get(pid).ok_or_else(|| NodeError::NotFound(pid.to_owned()))?;
        let ok = st.proposal.requested_by == identity
            && st
                .decision
                .as_ref()
                .is_some_and(|d| d.approved && d.action == Action::Reveal && d.target == rec.record_id);
        if !ok {
            return Err(NodeError::NotAuthorized(format!("{pid} does not reveal {}", rec.record_id)));
        }
        Ok(())
    }

    fn register(&mut self, identity: &str, entry: UserEntry) -> Result<Value, NodeError> {
        self.require_institution(identity)?;
        crypto::parse_key(&entry.sign_pk)?;
        crypto::parse_key(&entry.enc_pk)?;
        if entry.user.is_empty() || entry.user.contains(char::is_whitespace) {
            return Err(NodeError::BadRequest("user name".into()));
        }
        if let Some(existing) = self.registry.get(&entry.user) {
            if *existing == entry {
                return Ok(json!(entry));
            }
            return Err(NodeError::AlreadyExists(entry.user));
        }
        store::append_line(&self.cfg.user_registry_path, &canonical_json(&entry))?;
        self.registry.insert(entry.user.clone(), entry.clone());
        Ok(json!(entry))
    }

    fn check_fresh_id(&self, id: &str, owner: &str, replace: bool) -> Result<(), NodeError> {
        match self.store.get(id) {
            None => Ok(()),
            Some(rec) if replace && rec.policy.owner == owner => Ok(()),
            Some(_) if replace => Err(NodeError::Policy(trustworthy_core::PolicyError::NotOwner)),
            Some(_) => Err(NodeError::AlreadyExists(id.to_owned())),
        }
    }

    fn note_put(&mut self, identity: &str, req: NotePut) -> Result<Value, NodeError> {
        let owner = self.require_user(identity)?;
        let blob_id = note_blob_id(&req.note_id);
        self.check_fresh_id(&req.note_id, owner, req.replace)?;
        self.check_fresh_id(&blob_id, owner, req.replace)?;
        let data = B64
            .decode(&req.ciphertext)
            .map_err(|e| NodeError::BadRequest(format!("ciphertext: {e}")))?;
        let values = self.parse_share_vec(&req.key_share)?;
        let policy = AccessPolicy::new(&req.note_id, req.threshold, owner, PolicyKind::UserItem)?;
        let share = StoredRecord::share(&req.note_id, RecordKind::KeyShare, policy.clone(), values, json!({ "note": true }));
        if req.replace {
            self.store.erase(&[req.note_id.as_str(), blob_id.as_str()])?;
        }
        self.store.put_blob(StoredRecord::blob(&blob_id, policy, &data, json!({ "note": req.note_id })), &data)?;
        self.store.put(share)?;
        Ok(ack(&req.note_id))
    }

    fn note_get(&self, identity: &str, req: ItemGet) -> Result<Value, NodeError> {
        let rec = self.record(&req.id)?;
        if rec.meta.get("note").is_none() {
            return Err(NodeError::NotFound(req.id));
        }
        self.authorize_read(identity, rec, req.proposal.as_deref())?;
        let data = self.store.blob(&note_blob_id(&req.id))?;
        Ok(json!(NoteData {
            ciphertext: B64.encode(&data),
            hash: crypto::sha256_hex(&data),
            key_share: self.share_vec(rec),
            threshold: rec.policy.reveal_threshold,
        }))
    }

    fn key_escrow(&mut self, identity: &str, req: KeyEscrow) -> Result<Value, NodeError> {
        let owner = self.require_user(identity)?;
        self.check_fresh_id(&req.key_id, owner, false)?;
        let values = self.parse_share_vec(&req.share)?;
        let policy = AccessPolicy::new(&req.key_id, req.threshold, owner, PolicyKind::UserItem)?;
        self.store.put(StoredRecord::share(
            &req.key_id,
            RecordKind::KeyShare,
            policy,
            values,
            json!({ "file_hint": req.file_hint }),
        ))?;
        Ok(ack(&req.key_id))
    }

    fn key_retrieve(&self, identity: &str, req: ItemGet) -> Result<Value, NodeError> {
        let rec = self.record(&req.id)?;
        let Some(hint) = rec.meta.get("file_hint").and_then(Value::as_str) else {
            return Err(NodeError::NotFound(req.id));
        };
        self.authorize_read(identity, rec, req.proposal.as_deref())?;
        Ok(json!(KeyData {
            share: self.share_vec(rec),
            threshold: rec.policy.reveal_threshold,
            file_hint: hint.to_owned(),
        }))
    }

    fn email_put(&mut self, identity: &str, req: EmailPut) -> Result<Value, NodeError> {
        let sender = self.require_user(identity)?;
        if !self.registry.contains_key(&req.recipient) {
            return Err(NodeError::UnknownIdentity(auth::user_identity(&req.recipient)));
        }
        let id = email_record_id(&req.email_id);
        if self.store.contains(&id) {
            return Err(NodeError::AlreadyExists(id));
        }
        let values = self.parse_share_vec(&req.share)?;
        let policy = AccessPolicy::new(&id, EMAIL_K, auth::user_identity(&req.recipient), PolicyKind::UserItem)?;
        self.store.put(StoredRecord::share(
            &id,
            RecordKind::EmailShare,
            policy,
            values,
            json!({ "sender": sender, "email_id": req.email_id }),
        ))?;
        Ok(ack(&req.email_id))
    }

    fn email_list(&self, identity: &str) -> Value {
        let list: Vec<EmailMeta> = self
            .store
            .records()
            .filter(|r| r.kind == RecordKind::EmailShare && r.policy.owner == identity)
            .map(|r| EmailMeta {
                email_id: r.meta["email_id"].as_str().unwrap_or_default().to_owned(),
                sender: r.meta["sender"].as_str().unwrap_or_default().to_owned(),
            })
            .collect();
        json!(list)
    }

    fn email_get(&self, identity: &str, req: ItemGet) -> Result<Value, NodeError> {
        let rec = self.record(&email_record_id(&req.id))?;
        self.authorize_read(identity, rec, req.proposal.as_deref())?;
        Ok(json!(EmailData {
            sender: rec.meta["sender"].as_str().unwrap_or_default().to_owned(),
            share: self.share_vec(rec),
        }))
    }

    // ---- surveys -------------------------------------------------------

    fn survey_create(&mut self, identity: &str, req: SurveyCreate) -> Result<Value, NodeError> {
        self.require_institution(identity)?;
        let def = req.survey;
        let target = survey_record_id(&def.survey_id);
        let approved = self.gov.get(&req.proposal).and_then(|s| s.decision.as_ref()).is_some_and(|d| {
            d.approved && d.action == Action::Compute && d.target == target
        });
        if !approved {
            return Err(NodeError::NotAuthorized(format!("{} does not approve creating {target}", req.proposal)));
        }
        if self.surveys.contains_key(&def.survey_id) {
            return Err(NodeError::AlreadyExists(target));
        }
        def.schema.validate(self.field)?;
        policy::check_threshold(def.threshold)?;
        if def.min_respondents == 0 {
            return Err(NodeError::BadRequest("at least one respondent required".into()));
        }
        let mut ids = std::collections::BTreeSet::new();
        for q in &def.queries {
            q.check(&def.schema)?;
            if !ids.insert(&q.query_id) || q.query_id.contains('/') {
                return Err(NodeError::BadRequest(format!("query id {:?}", q.query_id)));
            }
        }
        let data = canonical_json(&def).into_bytes();
        let policy = AccessPolicy::new(&target, def.threshold, identity, PolicyKind::Survey)?;
        self.store.put_blob(StoredRecord::blob(&target, policy, &data, Value::Null), &data)?;
        self.store.append_log(store::RESULTS, &canonical_json(&ResultEvent::Declare { survey: def.clone() }))?;
        self.surveys.insert(def.survey_id.clone(), def);
        Ok(ack(&target))
    }

    fn survey(&self, survey_id: &str) -> Result<&SurveyDef, NodeError> {
        self.surveys
            .get(survey_id)
            .ok_or_else(|| NodeError::NotFound(survey_record_id(survey_id)))
    }

    pub(super) fn respondents(&self, survey_id: &str) -> Vec<&StoredRecord> {
        let prefix = format!("survey:{survey_id}:resp:");
        self.store
            .records()
            .filter(|r| r.kind == RecordKind::SurveyShare && r.record_id.starts_with(&prefix))
            .collect()
    }

    fn survey_info(&self, survey_id: &str) -> Result<SurveyInfo, NodeError> {
        Ok(SurveyInfo {
            survey: self.survey(survey_id)?.clone(),
            respondents: self.respondents(survey_id).len(),
            published: self.published.iter().filter(|p| p.survey_id == survey_id).cloned().collect(),
        })
    }

    fn check_answer_layout(&self, schema: &SurveySchema, answers: &[AnswerShares]) -> Result<Vec<NodeShares>, NodeError> {
        if answers.len() != schema.attributes.len() {
            return Err(NodeError::SchemaMismatch(format!(
                "{} answers for {} attributes",
                answers.len(),
                schema.attributes.len()
            )));
        }
        schema
            .attributes
            .iter()
            .zip(answers)
            .map(|(attr, a)| {
                let (has_int, width) = match attr.ty {
                    AttrType::Bool => (false, 1),
                    AttrType::Uint { width } => (true, width as usize),
                };
                if a.int.is_some() != has_int || a.bits.len() != width {
                    return Err(NodeError::SchemaMismatch(attr.name.clone()));
                }
                let parse = |s: &String| self.field.parse(s).map_err(NodeError::from);
                Ok(NodeShares {
                    int: a.int.as_ref().map(parse).transpose()?,
                    bits: a.bits.iter().map(parse).collect::<Result<_, _>>()?,
                })
            })
            .collect()
    }

    fn survey_respond(
        &mut self,
        identity: &str,
        w: Waiter,
        req: SurveyRespond,
        out: &mut Vec<Output>,
    ) -> Result<Option<Value>, NodeError> {
        let respondent = self.require_user(identity)?.to_owned();
        let def = self.survey(&req.survey_id)?.clone();
        let record_id = response_record_id(&req.survey_id, &respondent);
        let pending = self.mpc.values().any(|r| matches!(&r.purpose, MpcPurpose::Response { record_id: id, .. } if *id == record_id));
        if self.store.contains(&record_id) || pending {
            return Err(NodeError::AlreadyResponded);
        }
        let shares = self.check_answer_layout(&def.schema, &req.answers)?;
        let values: Vec<String> = shares
            .iter()
            .flat_map(|s| s.int.iter().chain(&s.bits).map(Fe::to_string).collect::<Vec<_>>())
            .collect();
        let circuit = build_response_check(self.field, &def.schema);
        let inputs = trustworthy_core::mpc::survey::record_inputs(0, &shares);
        let session = format!("resp:{}:{}:{}", req.survey_id, respondent, req.submission);
        let policy = AccessPolicy::new(survey_record_id(&req.survey_id), def.threshold, &respondent, PolicyKind::Survey)?;
        let purpose = MpcPurpose::Response {
            record: StoredRecord::share(&record_id, RecordKind::SurveyShare, policy, values, Value::Null),
            record_id,
        };
        self.start_mpc(session, circuit, inputs, SURVEY_SHARING_K, purpose, w, out)?;
        Ok(None)
    }

    fn survey_compute(
        &mut self,
        identity: &str,
        w: Waiter,
        req: SurveyCompute,
        out: &mut Vec<Output>,
    ) -> Result<Option<Value>, NodeError> {
        let def = self.survey(&req.survey_id)?.clone();
        let query = def
            .queries
            .iter()
            .find(|q| q.query_id == req.query_id)
            .ok_or_else(|| NodeError::UndeclaredQuery(req.query_id.clone()))?
            .clone();
        if let Some(p) = self
            .published
            .iter()
            .find(|p| p.survey_id == req.survey_id && p.query_id == req.query_id && p.proposal == req.proposal)
        {
            return Ok(Some(json!(p)));
        }
        let target = query_target(&req.survey_id, &req.query_id);
        let st = self
            .gov
            .get(&req.proposal)
            .ok_or_else(|| NodeError::NotFound(req.proposal.clone()))?;
        let authorized = st
            .decision
            .as_ref()
            .is_some_and(|d| d.approved && d.action == Action::Compute && d.target == target);
        if !authorized || (identity != st.proposal.requested_by && auth::institution_of(identity).is_none()) {
            return Err(NodeError::NotAuthorized(format!("{} does not approve {target}", req.proposal)));
        }
        let busy = self
            .mpc
            .values()
            .any(|r| matches!(&r.purpose, MpcPurpose::Query { survey_id, .. } if *survey_id == req.survey_id));
        if busy {
            return Err(NodeError::Busy(req.survey_id));
        }
        let records: Vec<StoredRecord> = self.respondents(&req.survey_id).into_iter().cloned().collect();
        if records.len() < def.min_respondents {
            return Err(NodeError::TooFewRespondents {
                have: records.len(),
                need: def.min_respondents,
            });
        }
        let qc = build_query_circuit(self.field, &def.schema, &query, records.len())?;
        let mut inputs = Vec::new();
        for (r, rec) in records.iter().enumerate() {
            inputs.extend(trustworthy_core::mpc::survey::record_inputs(r, &self.stored_answers(&def.schema, rec)?));
        }
        let session = format!("query:{target}:{}", req.proposal);
        let purpose = MpcPurpose::Query {
            survey_id: req.survey_id,
            query_id: req.query_id,
            proposal: req.proposal,
            respondents: records.len(),
            percentage: query.percentage_of.is_some(),
        };
        self.start_mpc(session, qc.circuit, inputs, SURVEY_SHARING_K, purpose, w, out)?;
        Ok(None)
    }

    fn stored_answers(&self, schema: &SurveySchema, rec: &StoredRecord) -> Result<Vec<NodeShares>, NodeError> {
        let mut vals = rec.values.iter().map(|v| self.field.parse(v));
        let mut next = || {
            vals.next()
                .ok_or_else(|| NodeError::StorageFailure(format!("short record {}", rec.record_id)))?
                .map_err(NodeError::from)
        };
        schema
            .attributes
            .iter()
            .map(|a| {
                Ok(match a.ty {
                    AttrType::Bool => NodeShares {
                        int: None,
                        bits: vec![next()?],
                    },
                    AttrType::Uint { width } => NodeShares {
                        int: Some(next()?),
                        bits: (0..width).map(|_| next()).collect::<Result<_, _>>()?,
                    },
                })
            })
            .collect()
    }

    // ---- governance ----------------------------------------------------

    /// Policy that governs `action` on `target`.
    pub(super) fn target_policy(&self, target: &str, action: Action) -> Result<Option<AccessPolicy>, NodeError> {
        if let Some(rest) = target.strip_prefix("survey:") {
            if let Some((sid, qid)) = rest.split_once('/') {
                let Some(def) = self.surveys.get(sid) else {
                    return Ok(None);
                };
                if !def.queries.iter().any(|q| q.query_id == qid) {
                    return Err(NodeError::UndeclaredQuery(qid.to_owned()));
                }
                return Ok(Some(AccessPolicy::new(target, def.threshold, "", PolicyKind::Survey)?));
            }
            if !rest.contains(':') && !self.surveys.contains_key(rest) && action == Action::Compute {
                // creating a survey takes a simple majority
                return Ok(Some(AccessPolicy::new(target, policy::MAJORITY, "", PolicyKind::Survey)?));
            }
        }
        Ok(self.store.get(target).map(|r| r.policy.clone()))
    }

    fn gov_propose(&mut self, identity: &str, req: GovPropose) -> Result<Value, NodeError> {
        let p = req.proposal;
        if p.requested_by != identity {
            return Err(NodeError::NotAuthorized("proposals are filed in the caller's name".into()));
        }
        let policy = self.target_policy(&p.target, p.action)?;
        if auth::institution_of(identity).is_none() {
            let owner = policy.as_ref().is_some_and(|pol| pol.owner == identity);
            if !owner {
                return Err(NodeError::Policy(trustworthy_core::PolicyError::NotOwner));
            }
        }
        if p.action == Action::Rethreshold && p.target.starts_with("survey:") {
            return Err(NodeError::BadRequest("survey thresholds are fixed at creation".into()));
        }
        let known = self.gov.get(&p.proposal_id).is_some();
        let st = GovStatus::from(self.gov.propose(p.clone(), policy.as_ref())?);
        if !known {
            let policy = policy.expect("propose rejects unknown targets");
            self.log_gov(&GovEvent::Propose { proposal: p, policy })?;
        }
        Ok(json!(st))
    }

    fn gov_vote(&mut self, identity: &str, req: GovVote) -> Result<Value, NodeError> {
        let inst = self.require_institution(identity)?;
        let vote = req.vote;
        if vote.institution as u32 != inst {
            return Err(NodeError::NotAuthorized(format!("{identity} cannot vote for institution {}", vote.institution)));
        }
        let keys = self.institution_keys.clone();
        let outcome = self.gov.cast(vote.clone(), &|v| verify_vote(&keys, v))?;
        if outcome != VoteOutcome::Unchanged {
            self.log_gov(&GovEvent::Vote { vote: vote.clone() })?;
        }
        if let VoteOutcome::Decided(d) = &outcome {
            self.log_gov(&GovEvent::Decision { decision: d.clone() })?;
            self.apply_decision(d)?;
        }
        let st = self.gov.get(&vote.proposal_id).expect("vote was cast");
        Ok(json!(GovStatus::from(st)))
    }

    /// Record ids that make up the item `target`.
    pub(super) fn item_records(&self, target: &str) -> Vec<String> {
        let mut ids = Vec::new();
        if let Some(sid) = target.strip_prefix("survey:").filter(|s| !s.contains(['/', ':'])) {
            ids.extend(self.respondents(sid).into_iter().map(|r| r.record_id.clone()));
        }
        for id in [target.to_owned(), note_blob_id(target)] {
            if self.store.contains(&id) {
                ids.push(id);
            }
        }
        ids
    }

    pub(super) fn erase_target(&mut self, target: &str) -> Result<Vec<String>, NodeError> {
        let ids = self.item_records(target);
        let refs: Vec<&str> = ids.iter().map(String::as_str).collect();
        let erased = self.store.erase(&refs)?;
        if let Some(sid) = target.strip_prefix("survey:") {
            self.surveys.remove(sid);
        }
        self.restricted.remove(target);
        Ok(erased)
    }

    fn erase_req(&mut self, identity: &str, req: EraseReq) -> Result<Value, NodeError> {
        let rec = self.record(&req.id)?;
        match &req.proposal {
            None => {
                if rec.policy.owner != identity {
                    return Err(NodeError::Policy(trustworthy_core::PolicyError::NotOwner));
                }
            }
            Some(pid) => {
                let ok = self.gov.get(pid).and_then(|s| s.decision.as_ref()).is_some_and(|d: &Decision| {
                    d.approved && d.action == Action::Discard && d.target == req.id
                });
                if !ok {
                    return Err(NodeError::NotAuthorized(format!("{pid} does not discard {}", req.id)));
                }
            }
        }
        let erased = self.erase_target(&req.id)?;
        Ok(json!(Erased { erased }))
    }

    fn replica_check(&mut self, w: Waiter, req: ReplicaCheckReq, out: &mut Vec<Output>) -> Result<Option<Value>, NodeError> {
        if let Some(rec) = self.store.get(&req.record_id) {
            if rec.kind != RecordKind::Blob {
                return Err(NodeError::BadRequest(format!("{} is not a replicated blob", req.record_id)));
            }
        }
        let session = self.next_session("replica");
        let own = self.local_blob_hash(&req.record_id);
        let mut run = ReplicaRun::new(req.record_id.clone(), w);
        run.hashes.insert(self.cfg.index, own);
        let peers: Vec<u32> = self.peer_keys.keys().copied().collect();
        for j in peers {
            let body = crate::wire::to_body(&ReplicaQuery {
                record_id: req.record_id.clone(),
            });
            out.push(self.peer_send(j, &session, Kind::ReplicaQuery, body));
        }
        self.replicas.insert(session, run);
        Ok(None)
    }

    /// Hash of the blob as stored on disk; `None` when absent.
    pub(super) fn local_blob_hash(&self, record_id: &str) -> Option<String> {
        match self.store.get(record_id) {
            Some(r) if r.kind == RecordKind::Blob => self.store.blob_hash(record_id).ok(),
            _ => None,
        }
    }
}
