use std::collections::BTreeMap;

use proptest::prelude::*;
use serde_json::json;
use tempfile::TempDir;
use trustworthy_core::{FieldParams, RandomStream};
use trustworthy_node::client::{broadcast, handshake, ClientError, Credentials, Session};
use trustworthy_node::crypto::{AgreementKey, Identity};
use trustworthy_node::proto::*;
use trustworthy_node::sim::{Scheduler, SimNetwork};
use trustworthy_node::store::{blob_file_name, StoredRecord};
use trustworthy_node::transport::{SimHandle, Transport};
use trustworthy_node::{DeploymentPlan, Kind, NodeError, Output};

struct World {
    _dir: TempDir,
    plan: DeploymentPlan,
    net: SimHandle,
    rng: RandomStream,
}

fn world(seed: u64) -> World {
    let dir = TempDir::new().unwrap();
    let mut rng = RandomStream::from_u64(seed);
    let addrs = (1..=5).map(|i| format!("127.0.0.1:{}", 7000 + i)).collect();
    let plan = DeploymentPlan::generate(FieldParams::default_params(), addrs, &mut rng);
    let net = SimNetwork::from_plan(&plan, dir.path(), Some(seed), Scheduler::Fifo).unwrap();
    World {
        _dir: dir,
        plan,
        net: SimHandle::new(net),
        rng,
    }
}

impl World {
    fn inst(&mut self, i: u32, node: u32) -> Result<Session, ClientError> {
        let creds = Credentials::institution(i, self.plan.institutions[i as usize - 1].clone());
        let key = self.plan.institutions[node as usize - 1].public();
        handshake(&mut self.net, node, &key, &creds, &mut self.rng)
    }

    fn user(&mut self, creds: &Credentials, node: u32) -> Result<Session, ClientError> {
        let key = self.plan.institutions[node as usize - 1].public();
        handshake(&mut self.net, node, &key, creds, &mut self.rng)
    }

    fn register(&mut self, name: &str) -> Credentials {
        let signer = Identity::generate(&mut self.rng);
        let enc = AgreementKey::generate(&mut self.rng);
        let entry = UserEntry {
            user: name.into(),
            sign_pk: hex::encode(signer.public()),
            enc_pk: hex::encode(enc.public()),
        };
        for node in 1..=5 {
            let mut s = self.inst(node, node).unwrap();
            s.call(&mut self.net, Kind::Register, &entry, &mut self.rng).unwrap();
        }
        Credentials::user(name, signer)
    }

    fn sessions(&mut self, creds: &Credentials) -> BTreeMap<u32, Session> {
        (1..=5).map(|i| (i, self.user(creds, i).unwrap())).collect()
    }
}

fn name(e: &ClientError) -> &str {
    e.remote_name().unwrap_or("local")
}

#[test]
fn handshake_and_its_failures() {
    let mut w = world(1);
    let alice = w.register("alice");
    assert!(w.user(&alice, 3).is_ok());

    let mallory = Credentials::user("mallory", Identity::generate(&mut w.rng));
    assert_eq!(name(&w.user(&mallory, 1).unwrap_err()), "UnknownIdentity");

    let impostor = Credentials::user("alice", Identity::generate(&mut w.rng));
    assert_eq!(name(&w.user(&impostor, 1).unwrap_err()), "BadChallengeResponse");

    // a client that checks the wrong institution key refuses the node
    let wrong = w.plan.institutions[1].public();
    let err = handshake(&mut w.net, 1, &wrong, &alice, &mut w.rng).unwrap_err();
    assert_eq!(err, ClientError::BadServerSignature);
}

#[test]
fn replayed_hello_nonce_is_rejected() {
    let mut w = world(2);
    let alice = w.register("alice");
    let hello = AuthHello {
        identity: alice.identity.clone(),
        nonce: "00".repeat(32),
        eph: hex::encode(AgreementKey::generate(&mut w.rng).public()),
    };
    let env = trustworthy_node::Envelope::new("", 1, &alice.identity, "node:1", Kind::AuthHello, trustworthy_node::wire::to_body(&hello));
    let frame = trustworthy_node::wire::plain_frame(&env);
    let mut net = w.net.0.borrow_mut();
    let node = net.node_mut(1).unwrap();
    let first = node.handle_client(100, &frame);
    let second = node.handle_client(101, &frame);
    let kind_of = |out: &[Output]| match &out[0] {
        Output::Client { frame, .. } => {
            let (_, body) = trustworthy_node::wire::split_frame(frame).unwrap();
            trustworthy_node::Envelope::decode(body).unwrap()
        }
        _ => panic!("expected a client frame"),
    };
    assert_eq!(kind_of(&first).kind, Kind::AuthChallenge);
    let err = kind_of(&second);
    assert_eq!(err.kind, Kind::Error);
    assert_eq!(err.body["error"], "ReplayedNonce");
}

#[test]
fn requests_need_a_fresh_sequence_number() {
    let mut w = world(3);
    let alice = w.register("alice");
    let mut s = w.user(&alice, 1).unwrap();
    let (seq, frame) = s.request_frame(Kind::EmailList, &json!({}), &mut w.rng);
    w.net.send(s.conn, frame.clone()).unwrap();
    let reply = w.net.recv(s.conn).unwrap();
    assert_eq!(s.read_reply(&reply, seq).unwrap(), json!([]));
    w.net.send(s.conn, frame).unwrap();
    let reply = w.net.recv(s.conn).unwrap();
    assert_eq!(name(&s.read_reply(&reply, seq).unwrap_err()), "BadSeq");
}

fn note_put(w: &mut World, creds: &Credentials, id: &str, data: &[u8]) {
    let mut sessions = w.sessions(creds);
    let res = broadcast(
        &mut w.net,
        &mut sessions,
        Kind::NotePut,
        |i| NotePut {
            note_id: id.into(),
            ciphertext: base64::Engine::encode(&base64::engine::general_purpose::STANDARD, data),
            key_share: ShareVec {
                index: i,
                values: vec![(100 + i).to_string()],
            },
            threshold: 3,
            replace: false,
        },
        &mut w.rng,
    );
    assert!(res.values().all(Result::is_ok), "{res:?}");
}

#[test]
fn stored_records_survive_restart() {
    let mut w = world(4);
    let alice = w.register("alice");
    note_put(&mut w, &alice, "n1", b"ciphertext bytes");
    {
        let mut net = w.net.0.borrow_mut();
        net.crash(2, false).unwrap();
        net.restart(2).unwrap();
    }
    let mut s = w.user(&alice, 2).unwrap();
    let v = s
        .call(&mut w.net, Kind::NoteGet, &ItemGet { id: "n1".into(), proposal: None }, &mut w.rng)
        .unwrap();
    let data: NoteData = serde_json::from_value(v).unwrap();
    assert_eq!(data.key_share.values, vec!["102".to_string()]);

    let bob = w.register("bob");
    let mut b = w.user(&bob, 2).unwrap();
    let err = b
        .call(&mut w.net, Kind::NoteGet, &ItemGet { id: "n1".into(), proposal: None }, &mut w.rng)
        .unwrap_err();
    assert_eq!(name(&err), "NotOwner");
    let err = b
        .call(&mut w.net, Kind::NoteGet, &ItemGet { id: "nope".into(), proposal: None }, &mut w.rng)
        .unwrap_err();
    assert_eq!(name(&err), "NotFound");
}

fn replica_check(w: &mut World, creds: &Credentials, node: u32, id: &str) -> Result<ReplicaReport, ClientError> {
    let mut s = w.user(creds, node)?;
    let v = s.call(&mut w.net, Kind::ReplicaCheck, &ReplicaCheckReq { record_id: id.into() }, &mut w.rng)?;
    Ok(serde_json::from_value(v).unwrap())
}

fn corrupt_blob(w: &World, node: u32, id: &str) {
    let net = w.net.0.borrow();
    let path = net.config(node).data_dir.join("blobs").join(blob_file_name(id));
    std::fs::write(path, format!("tampered by {node}")).unwrap();
}

#[test]
fn replica_majority_flags_the_odd_node() {
    let mut w = world(5);
    let alice = w.register("alice");
    note_put(&mut w, &alice, "n1", b"replicated ciphertext");
    let r = replica_check(&mut w, &alice, 1, "n1.ct").unwrap();
    assert!(r.consistent && r.flagged.is_empty());

    corrupt_blob(&w, 4, "n1.ct");
    let r = replica_check(&mut w, &alice, 1, "n1.ct").unwrap();
    assert!(r.consistent);
    assert_eq!(r.flagged, vec![4]);

    corrupt_blob(&w, 2, "n1.ct");
    corrupt_blob(&w, 5, "n1.ct");
    let r = replica_check(&mut w, &alice, 1, "n1.ct").unwrap();
    assert!(!r.consistent);
}

#[test]
fn replica_check_needs_three_reachable_nodes() {
    let mut w = world(6);
    let alice = w.register("alice");
    note_put(&mut w, &alice, "n1", b"data");
    w.net.0.borrow_mut().crash(4, false).unwrap();
    w.net.0.borrow_mut().crash(5, false).unwrap();
    let r = replica_check(&mut w, &alice, 1, "n1.ct").unwrap();
    assert!(r.consistent);
    assert_eq!(r.hashes.len(), 3);
    w.net.0.borrow_mut().crash(3, false).unwrap();
    let err = replica_check(&mut w, &alice, 1, "n1.ct").unwrap_err();
    assert_eq!(name(&err), "QuorumUnreachable");
}

/// A peer frame produced by a replica query from node 1 to node 2.
fn captured_peer_frame(w: &mut World) -> (Vec<u8>, BTreeMap<u32, Vec<u8>>) {
    let alice = w.register("alice");
    note_put(w, &alice, "n1", b"data");
    let mut s = w.user(&alice, 1).unwrap();
    let (_, frame) = s.request_frame(Kind::ReplicaCheck, &ReplicaCheckReq { record_id: "n1.ct".into() }, &mut w.rng);
    let mut net = w.net.0.borrow_mut();
    let out = net.node_mut(1).unwrap().handle_client(s.conn, &frame);
    let mut peers = BTreeMap::new();
    for o in out {
        if let Output::Peer { to, frame, .. } = o {
            peers.insert(to, frame);
        }
    }
    (peers[&2].clone(), peers)
}

#[test]
fn replayed_peer_envelope_is_bad_seq_without_effect() {
    let mut w = world(7);
    let (frame, _) = captured_peer_frame(&mut w);
    let mut net = w.net.0.borrow_mut();
    let node = net.node_mut(2).unwrap();
    let first = node.handle_peer(1, &frame).unwrap();
    assert_eq!(first.len(), 1);
    let again = node.handle_peer(1, &frame);
    assert!(matches!(again, Err(NodeError::BadSeq { .. })), "{again:?}");
}

#[test]
fn peer_frames_are_bound_to_their_link() {
    let mut w = world(8);
    let (_, frames) = captured_peer_frame(&mut w);
    let mut net = w.net.0.borrow_mut();
    // frame for node 3 replayed to node 2, and frame for 2 claimed to come from 3
    assert!(net.node_mut(2).unwrap().handle_peer(1, &frames[&3]).is_err());
    assert!(net.node_mut(2).unwrap().handle_peer(3, &frames[&2]).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn any_single_byte_change_is_rejected(pos in any::<prop::sample::Index>(), flip in 1u8..=255) {
        let mut w = world(9);
        let (mut frame, _) = captured_peer_frame(&mut w);
        let i = pos.index(frame.len());
        frame[i] ^= flip;
        let mut net = w.net.0.borrow_mut();
        prop_assert!(net.node_mut(2).unwrap().handle_peer(1, &frame).is_err());
    }
}

#[test]
fn unknown_kind_is_rejected() {
    let mut w = world(10);
    let alice = w.register("alice");
    let mut s = w.user(&alice, 1).unwrap();
    // a peer-only kind from a client
    let err = s
        .call(&mut w.net, Kind::ReplicaQuery, &ReplicaQuery { record_id: "x".into() }, &mut w.rng)
        .unwrap_err();
    assert_eq!(name(&err), "UnknownKind");
}

#[test]
fn erase_leaves_no_bytes_behind() {
    let mut w = world(11);
    let alice = w.register("alice");
    let marker = b"UNIQUE-MARKER-0123456789";
    note_put(&mut w, &alice, "n1", marker);
    let mut sessions = w.sessions(&alice);
    let res = broadcast(&mut w.net, &mut sessions, Kind::Erase, |_| EraseReq { id: "n1".into(), proposal: None }, &mut w.rng);
    for r in res.values() {
        let e: Erased = serde_json::from_value(r.clone().unwrap()).unwrap();
        assert_eq!(e.erased.len(), 2);
    }
    let net = w.net.0.borrow();
    for i in 1..=5u32 {
        let node = net.node(i).unwrap();
        assert!(node.store().get("n1").is_none());
        let share = StoredRecord::share(
            "n1",
            trustworthy_node::store::RecordKind::KeyShare,
            trustworthy_core::policy::AccessPolicy::new("n1", 3, "user:alice", trustworthy_core::policy::PolicyKind::UserItem).unwrap(),
            vec![(100 + i).to_string()],
            json!({ "note": true }),
        );
        let needle = trustworthy_core::canonical_json(&share.values);
        for (_, bytes) in trustworthy_node::store::scan_bytes(&net.config(i).data_dir).unwrap() {
            assert!(!trustworthy_node::store::contains_bytes(&bytes, marker));
            assert!(!trustworthy_node::store::contains_bytes(&bytes, needle.as_bytes()));
        }
    }
}
