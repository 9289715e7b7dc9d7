//! Multi-round protocols between institutions: MPC sessions, resharing,
//! share recovery and replica checks.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use serde_json::json;
use trustworthy_core::canonical_json;
use trustworthy_core::mpc::survey::{percentage, DENOMINATOR, NUMERATOR};
use trustworthy_core::mpc::{Circuit, InputRef, MpcMessage, MsgKind, Party, PartyConfig, WireMpcMessage};
use trustworthy_core::policy::{Action, Decision};
use trustworthy_core::reshare::{combine_subshares, recovery_contribution, subshare, PairwiseMasks};
use trustworthy_core::{Fe, Field, MpcError, Share};

use super::{Node, Output, ResultEvent, Waiter, SURVEY_SHARING_K};
use crate::crypto::{self, Key};
use crate::error::NodeError;
use crate::proto::*;
use crate::store::{self, RecordKind, StoredRecord};
use crate::wire::{to_body, Envelope, Kind};

pub(super) enum MpcPurpose {
    Response {
        record_id: String,
        record: StoredRecord,
    },
    Query {
        survey_id: String,
        query_id: String,
        proposal: String,
        respondents: usize,
        percentage: bool,
    },
}

pub(super) struct MpcRun {
    pub party: Party,
    pub purpose: MpcPurpose,
    pub waiter: Waiter,
}

pub(super) struct ReshareRun {
    quorum: Vec<u32>,
    record_id: String,
    new_threshold: u8,
    subs: BTreeMap<u32, Vec<Fe>>,
    waiter: Option<Waiter>,
}

pub(super) struct RecoverRun {
    helpers: Vec<u32>,
    contribs: BTreeMap<u32, RecoverContrib>,
    waiter: Waiter,
}

pub(super) struct ReplicaRun {
    record_id: String,
    pub hashes: BTreeMap<u32, Option<String>>,
    unreachable: BTreeSet<u32>,
    waiter: Waiter,
}

impl ReplicaRun {
    pub fn new(record_id: String, waiter: Waiter) -> Self {
        Self {
            record_id,
            hashes: BTreeMap::new(),
            unreachable: BTreeSet::new(),
            waiter,
        }
    }
}

/// Mask `m_{i,l}` for one value of one record, known only to `i` and `l`.
pub fn derive_mask(psk: &Key, session: &str, record_id: &str, component: usize, i: u32, l: u32, field: Field) -> Fe {
    let okm = crypto::hkdf(psk, session.as_bytes(), &format!("mask|{record_id}|{component}|{i}|{l}"));
    let mut wide = [0u8; 16];
    wide.copy_from_slice(&okm[..16]);
    field.elem((u128::from_be_bytes(wide) % field.modulus() as u128) as u64)
}

/// Majority outcome over the replica hashes of the reachable nodes.
pub fn tally_replicas(hashes: &BTreeMap<u32, Option<String>>, majority: usize) -> (bool, Vec<u32>) {
    let mut counts: BTreeMap<&Option<String>, usize> = BTreeMap::new();
    for h in hashes.values() {
        *counts.entry(h).or_default() += 1;
    }
    let top = counts
        .iter()
        .filter(|(h, _)| h.is_some())
        .max_by_key(|(_, &c)| c)
        .map(|(h, &c)| ((*h).clone(), c));
    match top {
        Some((h, c)) if c >= majority => {
            let flagged = hashes.iter().filter(|(_, v)| **v != h).map(|(i, _)| *i).collect();
            (true, flagged)
        }
        _ => (false, Vec::new()),
    }
}

impl Node {
    fn parties(&self) -> usize {
        self.cfg.peers.len() + 1
    }

    #[allow(clippy::too_many_arguments)]
    pub(super) fn start_mpc(
        &mut self,
        session: String,
        circuit: Circuit,
        inputs: Vec<(InputRef, Fe)>,
        k: usize,
        purpose: MpcPurpose,
        waiter: Waiter,
        out: &mut Vec<Output>,
    ) -> Result<(), NodeError> {
        if self.mpc.contains_key(&session) || self.finished.contains(&session) {
            return Err(NodeError::AlreadyExists(session));
        }
        if !self.early.contains_key(&session) && self.session_count() >= self.cfg.max_sessions {
            return Err(NodeError::SessionLimit);
        }
        let cfg = PartyConfig {
            session: session.clone(),
            index: self.cfg.index,
            n: self.parties(),
            k,
            field: self.field,
        };
        let rng = self.rng.fork(&format!("mpc|{session}"));
        let mut party = Party::new(cfg, Arc::new(circuit), inputs.into_iter().collect(), rng)?;
        let msgs = party.start()?;
        self.mpc.insert(session.clone(), MpcRun { party, purpose, waiter });
        self.send_mpc(&session, msgs, out);
        for (from, env) in self.early.remove(&session).unwrap_or_default() {
            if let Err(e) = self.feed_mpc(from, &env, out) {
                self.fail_mpc(&session, e, out);
                return Ok(());
            }
        }
        self.check_mpc_done(&session, out);
        Ok(())
    }

    fn send_mpc(&mut self, session: &str, msgs: Vec<MpcMessage>, out: &mut Vec<Output>) {
        for m in msgs {
            let kind = Kind::parse(m.kind.wire_name()).expect("mpc kinds are wire kinds");
            out.push(self.peer_send(m.to, session, kind, to_body(&m.to_wire())));
        }
    }

    fn feed_mpc(&mut self, from: u32, env: &Envelope, out: &mut Vec<Output>) -> Result<(), NodeError> {
        let w: WireMpcMessage = env.body_as()?;
        if w.session != env.session || w.from != from || w.to != self.cfg.index {
            return Err(NodeError::BadRequest("mpc message addressing".into()));
        }
        let kind = MsgKind::from_wire_name(env.kind.name()).ok_or_else(|| NodeError::UnknownKind(env.kind.name().into()))?;
        let msg = MpcMessage::from_wire(&w, kind, self.field)?;
        let run = self.mpc.get_mut(&env.session).expect("caller checked the session");
        let next = run.party.receive(msg)?;
        self.send_mpc(&env.session, next, out);
        Ok(())
    }

    fn route_mpc(&mut self, from: u32, env: &Envelope, out: &mut Vec<Output>) -> Result<(), NodeError> {
        if self.finished.contains(&env.session) {
            return Ok(());
        }
        if !self.mpc.contains_key(&env.session) {
            // inputs arrive with the client request; hold messages until then
            if !self.early.contains_key(&env.session) && self.session_count() >= self.cfg.max_sessions {
                return Err(NodeError::SessionLimit);
            }
            self.early.entry(env.session.clone()).or_default().push((from, env.clone()));
            return Ok(());
        }
        match self.feed_mpc(from, env, out) {
            Ok(()) => self.check_mpc_done(&env.session, out),
            Err(e) => self.fail_mpc(&env.session, e, out),
        }
        Ok(())
    }

    fn fail_mpc(&mut self, session: &str, e: NodeError, out: &mut Vec<Output>) {
        let Some(run) = self.mpc.remove(session) else { return };
        self.finished.insert(session.to_owned());
        let e = match (&run.purpose, e) {
            (MpcPurpose::Response { .. }, NodeError::Mpc(MpcError::OpenFailed | MpcError::Math(_))) => {
                NodeError::ConsistencyFailure
            }
            (_, e) => e,
        };
        log::warn!("node {}: session {session} failed: {e}", self.cfg.index);
        self.finish(Some(run.waiter), Err(e), out);
    }

    fn check_mpc_done(&mut self, session: &str, out: &mut Vec<Output>) {
        if !self.mpc.get(session).is_some_and(|r| r.party.is_done()) {
            return;
        }
        let run = self.mpc.remove(session).expect("checked above");
        self.finished.insert(session.to_owned());
        let opened = run.party.outputs();
        let result = match run.purpose {
            MpcPurpose::Response { record_id, record } => {
                if opened.values().all(Fe::is_zero) {
                    self.store.put(record).map(|()| json!({ "stored": record_id }))
                } else {
                    Err(NodeError::ConsistencyFailure)
                }
            }
            MpcPurpose::Query {
                survey_id,
                query_id,
                proposal,
                respondents,
                percentage: pct,
            } => {
                let numerator = opened[NUMERATOR].value();
                let denominator = pct.then(|| opened[DENOMINATOR].value());
                let stat = PublishedStat {
                    survey_id,
                    query_id,
                    proposal,
                    respondents,
                    numerator,
                    denominator,
                    percentage: denominator.and_then(|d| percentage(numerator, d)),
                };
                let line = canonical_json(&ResultEvent::Publish { stat: stat.clone() });
                self.store.append_log(store::RESULTS, &line).map(|()| {
                    self.published.push(stat.clone());
                    json!(stat)
                })
            }
        };
        self.finish(Some(run.waiter), result, out);
    }

    pub(super) fn route_peer(&mut self, from: u32, env: &Envelope, out: &mut Vec<Output>) -> Result<(), NodeError> {
        match env.kind {
            Kind::MulReshare | Kind::OpenContrib | Kind::RandContrib => self.route_mpc(from, env, out),
            Kind::ReshareSub => self.on_reshare_sub(from, env, out),
            Kind::RecoverReq => self.on_recover_req(from, env, out),
            Kind::RecoverContrib => self.on_recover_contrib(from, env, out),
            Kind::ReplicaQuery => {
                let q: ReplicaQuery = env.body_as()?;
                let body = to_body(&ReplicaHash {
                    hash: self.local_blob_hash(&q.record_id),
                    record_id: q.record_id,
                });
                out.push(self.peer_send(from, &env.session, Kind::ReplicaHash, body));
                Ok(())
            }
            Kind::ReplicaHash => {
                let h: ReplicaHash = env.body_as()?;
                let Some(run) = self.replicas.get_mut(&env.session) else {
                    return Ok(());
                };
                if h.record_id != run.record_id {
                    return Err(NodeError::BadRequest("replica hash for another record".into()));
                }
                run.hashes.insert(from, h.hash);
                self.check_replica_done(&env.session.clone(), out);
                Ok(())
            }
            k => Err(NodeError::UnknownKind(k.name().into())),
        }
    }

    /// The transport could not deliver `env` to peer `to`.
    pub fn peer_unreachable(&mut self, to: u32, env: &Envelope) -> Vec<Output> {
        let mut out = Vec::new();
        let s = env.session.clone();
        if self.mpc.contains_key(&s) {
            self.fail_mpc(&s, NodeError::Mpc(MpcError::NodeUnreachable(to)), &mut out);
        } else if let Some(run) = self.replicas.get_mut(&s) {
            run.unreachable.insert(to);
            self.check_replica_done(&s, &mut out);
        } else if let Some(run) = self.recovers.remove(&s) {
            self.finish(Some(run.waiter), Err(NodeError::QuorumUnreachable), &mut out);
        } else if let Some(run) = self.reshares.remove(&s) {
            self.finish(run.waiter, Err(NodeError::QuorumUnreachable), &mut out);
        }
        out
    }

    fn check_replica_done(&mut self, session: &str, out: &mut Vec<Output>) {
        let total = self.parties();
        let Some(run) = self.replicas.get(session) else { return };
        if run.hashes.len() + run.unreachable.len() < total {
            return;
        }
        let run = self.replicas.remove(session).expect("checked above");
        let majority = total / 2 + 1;
        let result = if run.hashes.len() < majority {
            Err(NodeError::QuorumUnreachable)
        } else {
            let (consistent, flagged) = tally_replicas(&run.hashes, majority);
            Ok(json!(ReplicaReport {
                record_id: run.record_id,
                consistent,
                flagged,
                hashes: run.hashes,
            }))
        };
        self.finish(Some(run.waiter), result, out);
    }

    // ---- resharing -----------------------------------------------------

    /// Sharing threshold of the values held in `rec`.
    fn sharing_k(rec: &StoredRecord) -> usize {
        match rec.kind {
            RecordKind::SurveyShare => SURVEY_SHARING_K,
            _ => rec.policy.reveal_threshold as usize,
        }
    }

    fn reshare_decision(&self, proposal: &str) -> Result<(Decision, u8), NodeError> {
        let st = self
            .gov
            .get(proposal)
            .ok_or_else(|| NodeError::NotFound(proposal.to_owned()))?;
        match &st.decision {
            Some(d) if d.approved && d.action == Action::Rethreshold => {
                let k = st.proposal.new_threshold.ok_or(trustworthy_core::PolicyError::MissingThreshold)?;
                Ok((d.clone(), k))
            }
            _ => Err(NodeError::NotAuthorized(format!("{proposal} is not an approved RETHRESHOLD"))),
        }
    }

    pub(super) fn admin_reshare(
        &mut self,
        w: Waiter,
        req: AdminReshare,
        out: &mut Vec<Output>,
    ) -> Result<Option<serde_json::Value>, NodeError> {
        let (decision, new_k) = self.reshare_decision(&req.proposal)?;
        let rec = self
            .store
            .get(&decision.target)
            .ok_or_else(|| NodeError::NotFound(decision.target.clone()))?
            .clone();
        if !matches!(rec.kind, RecordKind::KeyShare | RecordKind::EmailShare) {
            return Err(NodeError::BadRequest(format!("{} cannot be reshared", rec.record_id)));
        }
        let k = Self::sharing_k(&rec);
        let n = self.parties() as u32;
        let quorum = req.quorum.unwrap_or_else(|| (1..=k as u32).collect());
        let distinct: BTreeSet<u32> = quorum.iter().copied().collect();
        if distinct.len() != quorum.len() || quorum.len() < k || quorum.iter().any(|&i| i == 0 || i > n) {
            return Err(NodeError::BadRequest(format!("quorum {quorum:?}")));
        }
        let session = format!("reshare:{}", req.proposal);
        let run = self.reshares.entry(session.clone()).or_insert_with(|| ReshareRun {
            quorum: quorum.clone(),
            record_id: rec.record_id.clone(),
            new_threshold: new_k,
            subs: BTreeMap::new(),
            waiter: None,
        });
        if run.quorum != quorum || run.record_id != rec.record_id || run.new_threshold != new_k {
            return Err(NodeError::BadRequest("reshare parameters differ between institutions".into()));
        }
        if run.waiter.is_some() {
            return Err(NodeError::AlreadyExists(session));
        }
        run.waiter = Some(w);
        let me = self.cfg.index;
        if quorum.contains(&me) {
            let mut rows: BTreeMap<u32, Vec<String>> = BTreeMap::new();
            let mut mine = Vec::new();
            for v in &rec.values {
                let held = Share::new(me, self.field.parse(v)?);
                for s in subshare(&held, new_k as usize, n as usize, &mut self.rng)? {
                    if s.index == me {
                        mine.push(s.value);
                    } else {
                        rows.entry(s.index).or_default().push(s.value.to_string());
                    }
                }
            }
            self.reshares.get_mut(&session).expect("inserted above").subs.insert(me, mine);
            for (j, values) in rows {
                let body = to_body(&ReshareSub {
                    proposal: req.proposal.clone(),
                    record_id: rec.record_id.clone(),
                    quorum: quorum.clone(),
                    new_threshold: new_k,
                    values,
                });
                out.push(self.peer_send(j, &session, Kind::ReshareSub, body));
            }
        }
        self.try_finish_reshare(&session, out)?;
        Ok(None)
    }

    fn on_reshare_sub(&mut self, from: u32, env: &Envelope, out: &mut Vec<Output>) -> Result<(), NodeError> {
        let sub: ReshareSub = env.body_as()?;
        if env.session != format!("reshare:{}", sub.proposal) || !sub.quorum.contains(&from) {
            return Err(NodeError::BadRequest("reshare sub-share addressing".into()));
        }
        let values = sub
            .values
            .iter()
            .map(|v| self.field.parse(v))
            .collect::<Result<Vec<_>, _>>()?;
        if !self.reshares.contains_key(&env.session) && self.reshares.len() >= self.cfg.max_sessions {
            return Err(NodeError::SessionLimit);
        }
        let run = self.reshares.entry(env.session.clone()).or_insert_with(|| ReshareRun {
            quorum: sub.quorum.clone(),
            record_id: sub.record_id.clone(),
            new_threshold: sub.new_threshold,
            subs: BTreeMap::new(),
            waiter: None,
        });
        if run.quorum != sub.quorum || run.record_id != sub.record_id || run.new_threshold != sub.new_threshold {
            return Err(NodeError::BadRequest("reshare parameters differ between institutions".into()));
        }
        run.subs.insert(from, values);
        self.try_finish_reshare(&env.session.clone(), out)
    }

    fn try_finish_reshare(&mut self, session: &str, out: &mut Vec<Output>) -> Result<(), NodeError> {
        let Some(run) = self.reshares.get(session) else { return Ok(()) };
        if run.waiter.is_none() || !run.quorum.iter().all(|i| run.subs.contains_key(i)) {
            return Ok(());
        }
        let run = self.reshares.remove(session).expect("checked above");
        let result = self.apply_reshare(&run);
        self.finish(run.waiter, result, out);
        Ok(())
    }

    fn apply_reshare(&mut self, run: &ReshareRun) -> Result<serde_json::Value, NodeError> {
        let rec = self
            .store
            .get(&run.record_id)
            .ok_or_else(|| NodeError::NotFound(run.record_id.clone()))?
            .clone();
        let width = rec.values.len();
        if run.subs.values().any(|v| v.len() != width) {
            return Err(NodeError::BadRequest("sub-share width mismatch".into()));
        }
        let values = (0..width)
            .map(|c| {
                let received: BTreeMap<u32, Fe> = run.subs.iter().map(|(&i, v)| (i, v[c])).collect();
                Ok(combine_subshares(self.field, self.cfg.index, &received)?.value.to_string())
            })
            .collect::<Result<Vec<_>, NodeError>>()?;
        let mut policy = rec.policy.clone();
        policy.reveal_threshold = run.new_threshold;
        self.store
            .replace(StoredRecord::share(&rec.record_id, rec.kind, policy, values, rec.meta.clone()))?;
        Ok(json!(ReshareDone {
            record_id: rec.record_id,
            threshold: run.new_threshold,
        }))
    }

    // ---- recovery ------------------------------------------------------

    pub(super) fn start_recover(
        &mut self,
        w: Waiter,
        req: AdminRecover,
        out: &mut Vec<Output>,
    ) -> Result<Option<serde_json::Value>, NodeError> {
        let mut helpers = if req.helpers.is_empty() {
            self.peer_keys.keys().copied().collect()
        } else {
            req.helpers
        };
        helpers.sort_unstable();
        helpers.dedup();
        if helpers.is_empty() || helpers.iter().any(|h| !self.peer_keys.contains_key(h)) {
            return Err(NodeError::BadRequest(format!("helpers {helpers:?}")));
        }
        let session = self.next_session("recover");
        for &h in &helpers {
            let body = to_body(&RecoverReq { helpers: helpers.clone() });
            out.push(self.peer_send(h, &session, Kind::RecoverReq, body));
        }
        self.recovers.insert(
            session,
            RecoverRun {
                helpers,
                contribs: BTreeMap::new(),
                waiter: w,
            },
        );
        Ok(None)
    }

    fn on_recover_req(&mut self, lost: u32, env: &Envelope, out: &mut Vec<Output>) -> Result<(), NodeError> {
        let req: RecoverReq = env.body_as()?;
        let me = self.cfg.index;
        if !req.helpers.contains(&me) || req.helpers.contains(&lost) {
            return Err(NodeError::BadRequest("recovery helper set".into()));
        }
        let mut shares = Vec::new();
        let mut blobs = Vec::new();
        for rec in self.store.records() {
            if rec.kind.is_share() {
                if Self::sharing_k(rec) > req.helpers.len() {
                    continue;
                }
                let mut values = Vec::with_capacity(rec.values.len());
                for (c, v) in rec.values.iter().enumerate() {
                    let masks = PairwiseMasks::from_fn(&req.helpers, |i, l| {
                        let other = if i == me { l } else { i };
                        if i != me && l != me {
                            return self.field.zero();
                        }
                        let psk = &self.cfg.peers[&other].psk;
                        derive_mask(psk, &env.session, &rec.record_id, c, i, l, self.field)
                    });
                    let held = Share::new(me, self.field.parse(v)?);
                    values.push(recovery_contribution(&held, &req.helpers, lost, &masks)?.to_string());
                }
                let mut r = rec.clone();
                r.values = values;
                shares.push(RecoveredShare { record: r });
            } else if rec.kind == RecordKind::Blob {
                blobs.push(RecoveredBlob {
                    record: rec.clone(),
                    data: B64.encode(self.store.blob(&rec.record_id)?),
                });
            }
        }
        let contrib = RecoverContrib {
            shares,
            blobs,
            registry: self.registry.values().cloned().collect(),
            governance: self.store.read_log(store::DECISIONS)?,
            results: self.store.read_log(store::RESULTS)?,
        };
        out.push(self.peer_send(lost, &env.session, Kind::RecoverContrib, to_body(&contrib)));
        Ok(())
    }

    fn on_recover_contrib(&mut self, from: u32, env: &Envelope, out: &mut Vec<Output>) -> Result<(), NodeError> {
        let contrib: RecoverContrib = env.body_as()?;
        let Some(run) = self.recovers.get_mut(&env.session) else {
            return Ok(());
        };
        if !run.helpers.contains(&from) {
            return Err(NodeError::BadRequest(format!("node {from} is not a helper")));
        }
        run.contribs.insert(from, contrib);
        if run.contribs.len() < run.helpers.len() {
            return Ok(());
        }
        let run = self.recovers.remove(&env.session).expect("present above");
        let result = self.apply_recovery(&run).map(|recovered| json!(RecoverReport { recovered }));
        self.finish(Some(run.waiter), result, out);
        Ok(())
    }

    fn apply_recovery(&mut self, run: &RecoverRun) -> Result<Vec<String>, NodeError> {
        let majority = run.helpers.len() / 2 + 1;
        let contribs: Vec<&RecoverContrib> = run.contribs.values().collect();
        let mut recovered = Vec::new();

        let mut shares: BTreeMap<&str, Vec<&StoredRecord>> = BTreeMap::new();
        for c in &contribs {
            for s in &c.shares {
                shares.entry(&s.record.record_id).or_default().push(&s.record);
            }
        }
        for (id, parts) in shares {
            if parts.len() != run.helpers.len() || self.store.contains(id) {
                continue;
            }
            let width = parts[0].values.len();
            if parts.iter().any(|p| p.values.len() != width) {
                return Err(NodeError::ConsistencyFailure);
            }
            let mut values = Vec::with_capacity(width);
            for c in 0..width {
                let mut sum = self.field.zero();
                for p in &parts {
                    sum += self.field.parse(&p.values[c])?;
                }
                values.push(sum.to_string());
            }
            let t = parts[0];
            self.store
                .put(StoredRecord::share(id, t.kind, t.policy.clone(), values, t.meta.clone()))?;
            recovered.push(id.to_owned());
        }

        let mut blobs: BTreeMap<(&str, &str), Vec<&RecoveredBlob>> = BTreeMap::new();
        for c in &contribs {
            for b in &c.blobs {
                blobs.entry((&b.record.record_id, &b.data)).or_default().push(b);
            }
        }
        for ((id, data), votes) in blobs {
            if votes.len() < majority || self.store.contains(id) {
                continue;
            }
            let bytes = B64.decode(data).map_err(|e| NodeError::BadRequest(e.to_string()))?;
            let t = &votes[0].record;
            self.store
                .put_blob(StoredRecord::blob(id, t.policy.clone(), &bytes, t.meta.clone()), &bytes)?;
            recovered.push(id.to_owned());
        }

        let mut entries: BTreeMap<&UserEntry, usize> = BTreeMap::new();
        for c in &contribs {
            for e in &c.registry {
                *entries.entry(e).or_default() += 1;
            }
        }
        for (e, n) in entries {
            if n >= majority && !self.registry.contains_key(&e.user) {
                store::append_line(&self.cfg.user_registry_path, &canonical_json(e))?;
                self.registry.insert(e.user.clone(), e.clone());
            }
        }

        for (log, pick) in [
            (store::DECISIONS, (|c: &RecoverContrib| &c.governance) as fn(&RecoverContrib) -> &Vec<String>),
            (store::RESULTS, |c: &RecoverContrib| &c.results),
        ] {
            let local: BTreeSet<String> = self.store.read_log(log)?.into_iter().collect();
            let mut counts: BTreeMap<&String, usize> = BTreeMap::new();
            for c in &contribs {
                for line in pick(c).iter().collect::<BTreeSet<_>>() {
                    *counts.entry(line).or_default() += 1;
                }
            }
            // keep the order of the first helper that holds each line
            let mut seen = BTreeSet::new();
            for c in &contribs {
                for line in pick(c) {
                    if counts[line] >= majority && !local.contains(line) && seen.insert(line) {
                        self.store.append_log(log, line)?;
                    }
                }
            }
        }
        self.reload_state()?;
        Ok(recovered)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn replica_majority() {
        let h = |v: &[Option<&str>]| -> BTreeMap<u32, Option<String>> {
            v.iter().enumerate().map(|(i, s)| (i as u32 + 1, s.map(str::to_owned))).collect()
        };
        let (ok, flagged) = tally_replicas(&h(&[Some("a"); 5]), 3);
        assert!(ok && flagged.is_empty());
        let (ok, flagged) = tally_replicas(&h(&[Some("a"), Some("a"), Some("b"), Some("a"), Some("a")]), 3);
        assert!(ok);
        assert_eq!(flagged, vec![3]);
        let (ok, _) = tally_replicas(&h(&[Some("a"), Some("b"), Some("c"), Some("d"), Some("a")]), 3);
        assert!(!ok);
        let (ok, flagged) = tally_replicas(&h(&[Some("a"), Some("a"), None, Some("a")]), 3);
        assert!(ok);
        assert_eq!(flagged, vec![3]);
        let (ok, _) = tally_replicas(&h(&[None, None, None]), 3);
        assert!(!ok);
    }

    #[test]
    fn masks_are_pairwise_and_directional() {
        let f = Field::mersenne61();
        let psk = [7u8; 32];
        let a = derive_mask(&psk, "s", "r", 0, 1, 2, f);
        assert_eq!(a, derive_mask(&psk, "s", "r", 0, 1, 2, f));
        assert_ne!(a, derive_mask(&psk, "s", "r", 0, 2, 1, f));
        assert_ne!(a, derive_mask(&psk, "s", "r", 1, 1, 2, f));
        assert_ne!(a, derive_mask(&psk, "t", "r", 0, 1, 2, f));
    }
}
