use std::net::TcpListener;
use std::path::{Path, PathBuf};

use serde_json::Value;
use tempfile::TempDir;
use trustworthy_cli::{dispatch, EXIT_FAILED, EXIT_OK, EXIT_USAGE};
use trustworthy_core::mpc::survey::{Literal, Predicate, StatQuery, SurveySchema};
use trustworthy_node::config::NodeConfig;
use trustworthy_node::proto::SurveyDef;
use trustworthy_node::tcp::{serve, NodeServer};

struct Run {
    code: i32,
    out: String,
    err: String,
}

impl Run {
    fn ok(self) -> String {
        assert_eq!(self.code, EXIT_OK, "stdout: {}\nstderr: {}", self.out, self.err);
        self.out.trim_end().to_owned()
    }

    fn json(&self) -> Value {
        serde_json::from_str(&self.out).unwrap_or_else(|e| panic!("{e}: {}", self.out))
    }
}

fn cli(args: &[&str], stdin: &str) -> Run {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("trustworthy").chain(args.iter().copied());
    let code = dispatch(argv, &mut stdin.as_bytes(), &mut out, &mut err);
    Run {
        code,
        out: String::from_utf8(out).unwrap(),
        err: String::from_utf8(err).unwrap(),
    }
}

/// First base such that base+1..=base+5 are all bindable.
fn free_base() -> u16 {
    let start = 20_000 + (std::process::id() % 400) as u16 * 100;
    (0..400u16)
        .map(|k| start.wrapping_add(k * 7) % 60_000 + 1024)
        .find(|b| (1..=5).all(|i| TcpListener::bind(("127.0.0.1", b + i)).is_ok()))
        .expect("no free port range")
}

struct Cluster {
    dir: TempDir,
    servers: Vec<NodeServer>,
}

impl Cluster {
    fn start() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let base = free_base().to_string();
        let d = dir.path().to_str().unwrap();
        cli(&["deploy", "--dir", d, "--base-port", &base, "--seed", "5"], "").ok();
        let servers = (1..=5)
            .map(|i| serve(NodeConfig::load(&dir.path().join(format!("node{i}.conf"))).unwrap()).unwrap())
            .collect();
        let c = Self { dir, servers };
        for user in ["alice", "bob", "carol"] {
            let out = c.path(user);
            cli(&["--config", &c.inst(1), "keygen", "--user", user, "--out", &out], "").ok();
            let entry = format!("{out}/{user}.pub.json");
            cli(&["--config", &c.inst(1), "register", &entry], "").ok();
        }
        c
    }

    fn path(&self, name: &str) -> String {
        self.dir.path().join(name).display().to_string()
    }

    fn inst(&self, i: u32) -> String {
        self.path(&format!("inst{i}.client.conf"))
    }

    fn user(&self, name: &str) -> String {
        format!("{}/{name}.conf", self.path(name))
    }

    fn approve(&self, action: &str, target: &str) -> String {
        let pid = cli(&["--config", &self.inst(1), "gov", "propose", "--action", action, "--target", target], "").ok();
        for i in 1..=3 {
            cli(&["--config", &self.inst(i), "gov", "vote", "--proposal", &pid, "--approve"], "").ok();
        }
        pid
    }
}

impl Drop for Cluster {
    fn drop(&mut self) {
        for s in self.servers.drain(..) {
            s.stop();
        }
    }
}

fn survey_def(dir: &Path) -> PathBuf {
    let schema: SurveySchema = serde_json::from_str(
        r#"{"attributes":[{"name":"female","type":"bool"},{"name":"age","type":"uint","width":8},
            {"name":"diabetes","type":"bool"},{"name":"coeliac","type":"bool"}]}"#,
    )
    .unwrap();
    let def = SurveyDef {
        survey_id: "health".into(),
        schema,
        threshold: 3,
        min_respondents: 3,
        queries: vec![StatQuery {
            query_id: "q1".into(),
            predicate: Predicate::new(vec![
                Literal::Is { attr: "female".into(), value: true },
                Literal::Range { attr: "age".into(), min: Some(32), max: Some(40) },
                Literal::Is { attr: "diabetes".into(), value: true },
            ]),
            percentage_of: Some(Predicate::new(vec![Literal::Is { attr: "female".into(), value: true }])),
        }],
    };
    let path = dir.join("health.json");
    std::fs::write(&path, serde_json::to_string(&def).unwrap()).unwrap();
    path
}

#[test]
fn services_over_tcp() {
    let c = Cluster::start();
    let (alice, bob) = (c.user("alice"), c.user("bob"));

    let id = cli(&["--config", &alice, "note", "create", "--threshold", "unanimity", "-"], "meet at noon").ok();
    assert_eq!(cli(&["--config", &alice, "note", "read", &id], "").ok(), "meet at noon");
    let denied = cli(&["--config", &bob, "note", "read", &id], "");
    assert_eq!(denied.code, EXIT_FAILED);
    assert!(denied.err.contains("NotOwner"), "{}", denied.err);
    let j = cli(&["--json", "--config", &alice, "note", "read", &id], "").json();
    assert_eq!(j, serde_json::json!({"ok": true, "result": "meet at noon"}));
    let j = cli(&["--json", "--config", &bob, "note", "read", &id], "").json();
    assert_eq!(j["ok"], false);
    assert_eq!(j["error"], "NotOwner");
    cli(&["--config", &alice, "note", "update", &id], "meet at one").ok();
    assert_eq!(cli(&["--config", &alice, "note", "read", &id], "").ok(), "meet at one");

    let check = cli(&["--json", "--config", &c.inst(2), "admin", "replica-check", &format!("{id}.ct")], "").json();
    assert_eq!(check["result"]["consistent"], true);

    let mid = cli(&["--config", &alice, "mail", "send", "--to", "bob"], "lunch?").ok();
    let list = cli(&["--config", &bob, "mail", "fetch"], "").ok();
    assert!(list.contains(&mid) && list.contains("alice"), "{list}");
    let msg = cli(&["--json", "--config", &bob, "mail", "fetch", &mid], "").json();
    assert_eq!(msg["result"]["body"], "lunch?");

    let hexkey = "5a".repeat(32);
    let kid = cli(&["--config", &alice, "key", "escrow", "--hint", "laptop"], &hexkey).ok();
    let key_file = c.path("restored.key");
    cli(&["--config", &alice, "key", "retrieve", &kid, "--out", &key_file], "").ok();
    assert_eq!(std::fs::read_to_string(&key_file).unwrap().trim(), hexkey);
    let nokey = cli(&["--config", &bob, "key", "retrieve", &kid], "");
    assert_eq!(nokey.code, EXIT_FAILED);
}

#[test]
fn governance_and_survey_over_tcp() {
    let c = Cluster::start();
    let def = survey_def(c.dir.path());
    let create_pid = c.approve("compute", "survey:health");
    let status = cli(&["--json", "--config", &c.inst(4), "gov", "status", &create_pid], "").json();
    assert_eq!(status["result"]["decision"]["approved"], true);
    assert!(cli(&["--config", &c.inst(4), "gov", "status", &create_pid], "").ok().ends_with("approved"));
    cli(&["--config", &c.inst(1), "survey", "create", "--def", def.to_str().unwrap(), "--proposal", &create_pid], "").ok();

    let q = c.approve("compute", "survey:health/q1");
    let answers = [("alice", "1,35,1,1"), ("bob", "1 50 1 1"), ("carol", "1\n33\n0\n1\n")];
    for (n, (user, a)) in answers.iter().enumerate() {
        if n == 2 {
            let early = cli(&["--config", &c.inst(2), "survey", "compute", "health", "q1", "--proposal", &q], "");
            assert_eq!(early.code, EXIT_FAILED);
            assert!(early.err.contains("TooFewRespondents"), "{}", early.err);
        }
        cli(&["--config", &c.user(user), "survey", "respond", "health"], a).ok();
    }
    let stat = cli(&["--json", "--config", &c.inst(2), "survey", "compute", "health", "q1", "--proposal", &q], "").json();
    assert_eq!(stat["result"]["numerator"], 1);
    assert_eq!(stat["result"]["denominator"], 3);

    let reject = cli(&["--config", &c.inst(5), "gov", "vote", "--proposal", "nope", "--reject"], "");
    assert_eq!(reject.code, EXIT_FAILED);
}

#[test]
fn usage_and_config_errors_exit_2() {
    assert_eq!(cli(&[], "").code, EXIT_USAGE);
    assert_eq!(cli(&["gov", "vote", "--proposal", "p"], "").code, EXIT_USAGE);
    assert_eq!(cli(&["gov", "vote", "--proposal", "p", "--approve", "--reject"], "").code, EXIT_USAGE);
    assert_eq!(cli(&["note", "read", "x"], "").code, EXIT_USAGE);
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("bad.conf");
    std::fs::write(&conf, "identity = user:alice\n").unwrap();
    let r = cli(&["--config", conf.to_str().unwrap(), "note", "read", "x"], "");
    assert_eq!(r.code, EXIT_USAGE);
    assert!(r.err.contains("Config"));
}

#[test]
fn local_file_encryption_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let p = |n: &str| dir.path().join(n).display().to_string();
    std::fs::write(p("k"), format!("{}\n", "07".repeat(32))).unwrap();
    std::fs::write(p("plain"), b"quarterly figures").unwrap();
    cli(&["key", "encrypt", "--key", &p("k"), &p("plain"), &p("sealed")], "").ok();
    let sealed = std::fs::read(p("sealed")).unwrap();
    assert!(!sealed.windows(9).any(|w| w == b"quarterly"));
    cli(&["key", "decrypt", "--key", &p("k"), &p("sealed"), &p("back")], "").ok();
    assert_eq!(std::fs::read(p("back")).unwrap(), b"quarterly figures");

    std::fs::write(p("k2"), "08".repeat(32)).unwrap();
    assert_eq!(cli(&["key", "decrypt", "--key", &p("k2"), &p("sealed"), &p("x")], "").code, EXIT_FAILED);
    std::fs::write(p("short"), "abcd").unwrap();
    assert_eq!(cli(&["key", "encrypt", "--key", &p("short"), &p("plain"), &p("x")], "").code, EXIT_USAGE);
}

#[test]
fn harness_run_reports_pass_and_fail() {
    let dir = tempfile::tempdir().unwrap();
    let good = dir.path().join("good.json");
    std::fs::write(
        &good,
        r#"{"seed": 4, "script": [
            {"op": "register", "user": "alice"},
            {"op": "note_create", "user": "alice", "text": "hi", "threshold": 3, "save_as": "n"},
            {"op": "note_read", "user": "alice", "note": "{n}", "expect": "hi"}]}"#,
    )
    .unwrap();
    let logs = dir.path().join("logs");
    let r = cli(&["--json", "harness", "run", good.to_str().unwrap(), "--logs", logs.to_str().unwrap()], "");
    assert_eq!(r.code, EXIT_OK, "{}", r.out);
    assert_eq!(r.json()["result"]["passed"], true);
    assert!(std::fs::read_dir(&logs).unwrap().count() > 0);

    let bad = dir.path().join("bad.json");
    std::fs::write(
        &bad,
        r#"{"seed": 4, "script": [
            {"op": "register", "user": "alice"},
            {"op": "note_create", "user": "alice", "text": "hi", "threshold": 3, "save_as": "n"},
            {"op": "note_read", "user": "alice", "note": "{n}", "expect": "bye"}]}"#,
    )
    .unwrap();
    let r = cli(&["harness", "run", bad.to_str().unwrap()], "");
    assert_eq!(r.code, EXIT_FAILED);
    assert!(r.err.contains("ScenarioFailed") && r.err.contains('2'), "{}", r.err);

    std::fs::write(&bad, "{\"node_count\": 4}").unwrap();
    assert_eq!(cli(&["harness", "run", bad.to_str().unwrap()], "").code, EXIT_FAILED);
}
