//! The `trustworthy` command line: deployment setup, node process, user
//! services and institution operator commands.
//!
//! Exit codes: 0 success, 1 the operation failed (the error name is printed),
//! 2 usage or configuration error. With `--json` every outcome is one JSON
//! object on stdout: `{"ok":true,"result":...}` or
//! `{"ok":false,"error":"<name>","detail":"..."}`.

pub mod config;
pub mod error;

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};
use trustworthy_core::policy::{Action, Choice};
use trustworthy_core::{FieldParams, RandomStream, INSTITUTIONS};
use trustworthy_harness::Scenario;
use trustworthy_node::config::{field_params_from, KeyValues, NodeConfig};
use trustworthy_node::crypto::Key;
use trustworthy_node::proto::{SurveyDef, UserEntry};
use trustworthy_node::DeploymentPlan;
use trustworthy_services::keys::{decrypt_file, encrypt_file};
use trustworthy_services::{Client, UserKeys};

pub use config::{ClientConfig, Threshold};
pub use error::{CliError, EXIT_FAILED, EXIT_OK, EXIT_USAGE};

#[derive(Debug, Parser)]
#[command(name = "trustworthy", version, about = "Client, operator tool and node for a five-institution secret-sharing deployment")]
struct Cli {
    /// Client config, or the node config for `node`.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Print one JSON object per invocation.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Generate keys and configs for five nodes and their institutions.
    Deploy(DeployArgs),
    /// Run a node until it is stopped.
    Node,
    /// Create a user key pair and a client config derived from `--config`.
    Keygen {
        #[arg(long)]
        user: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Register a user's public keys at every node (institutions only).
    Register {
        /// Public entry written by `keygen`.
        entry: PathBuf,
    },
    /// Secret notes shared across the nodes.
    #[command(subcommand)]
    Note(NoteCmd),
    /// Key escrow and local file encryption.
    #[command(subcommand)]
    Key(KeyCmd),
    /// End-to-end encrypted mail.
    #[command(subcommand)]
    Mail(MailCmd),
    /// Surveys and their published statistics.
    #[command(subcommand)]
    Survey(SurveyCmd),
    /// Proposals and institution votes.
    #[command(subcommand)]
    Gov(GovCmd),
    /// Institution operator commands.
    #[command(subcommand)]
    Admin(AdminCmd),
    /// Simulated deployments.
    #[command(subcommand)]
    Harness(HarnessCmd),
}

#[derive(Debug, Args)]
struct DeployArgs {
    #[arg(long)]
    dir: PathBuf,
    #[arg(long, default_value = "127.0.0.1")]
    host: String,
    /// Node i listens on base_port + i.
    #[arg(long, default_value_t = 7100)]
    base_port: u16,
    /// Makes key generation and node randomness reproducible.
    #[arg(long)]
    seed: Option<u64>,
    /// Field modulus; defaults to 2^61 - 1.
    #[arg(long)]
    field_p: Option<u64>,
}

/// Secret input: a file path, or `-`/nothing for stdin.
#[derive(Debug, Args)]
struct Input {
    input: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum NoteCmd {
    Create {
        #[arg(long)]
        threshold: Option<Threshold>,
        #[command(flatten)]
        input: Input,
    },
    Read {
        id: String,
        #[arg(long)]
        proposal: Option<String>,
    },
    Update {
        id: String,
        #[arg(long)]
        threshold: Option<Threshold>,
        #[command(flatten)]
        input: Input,
    },
}

#[derive(Debug, Subcommand)]
enum KeyCmd {
    /// Escrow a 32-byte key given raw or as 64 hex digits.
    Escrow {
        #[arg(long)]
        threshold: Option<Threshold>,
        #[arg(long, default_value = "")]
        hint: String,
        #[command(flatten)]
        input: Input,
    },
    Retrieve {
        id: String,
        #[arg(long)]
        proposal: Option<String>,
        /// Write the key as hex to this file instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Encrypt a file locally under a key file.
    Encrypt {
        #[arg(long)]
        key: PathBuf,
        input: PathBuf,
        output: PathBuf,
    },
    Decrypt {
        #[arg(long)]
        key: PathBuf,
        input: PathBuf,
        output: PathBuf,
    },
}

#[derive(Debug, Subcommand)]
enum MailCmd {
    Send {
        #[arg(long)]
        to: String,
        #[command(flatten)]
        input: Input,
    },
    /// List the mailbox, or read one message.
    Fetch { id: Option<String> },
}

#[derive(Debug, Subcommand)]
enum SurveyCmd {
    Create {
        /// Survey definition as JSON.
        #[arg(long)]
        def: PathBuf,
        #[arg(long)]
        proposal: String,
    },
    /// Answers are read from the input, separated by commas or whitespace.
    Respond {
        survey: String,
        #[command(flatten)]
        input: Input,
    },
    Compute {
        survey: String,
        query: String,
        #[arg(long)]
        proposal: String,
    },
    Results { survey: String },
}

#[derive(Debug, Subcommand)]
enum GovCmd {
    Propose {
        /// reveal, compute, restrict, unrestrict, discard or rethreshold.
        #[arg(long)]
        action: String,
        #[arg(long)]
        target: String,
        #[arg(long)]
        new_threshold: Option<u8>,
    },
    Vote {
        #[arg(long)]
        proposal: String,
        #[arg(long, conflicts_with = "reject", required_unless_present = "reject")]
        approve: bool,
        #[arg(long)]
        reject: bool,
    },
    Status { proposal: String },
}

#[derive(Debug, Subcommand)]
enum AdminCmd {
    /// Rebuild this institution's node from helper nodes.
    Recover {
        #[arg(long, value_delimiter = ',')]
        helpers: Vec<u32>,
        /// Defaults to the configured institution.
        #[arg(long)]
        node: Option<u32>,
    },
    Reshare {
        #[arg(long)]
        proposal: String,
        #[arg(long, value_delimiter = ',')]
        quorum: Option<Vec<u32>>,
    },
    Erase {
        id: String,
        #[arg(long)]
        proposal: Option<String>,
    },
    ReplicaCheck {
        record: String,
        #[arg(long)]
        node: Option<u32>,
    },
}

#[derive(Debug, Subcommand)]
enum HarnessCmd {
    /// Run a scenario file in a simulated deployment.
    Run {
        scenario: PathBuf,
        /// Write the report and per-node logs here.
        #[arg(long)]
        logs: Option<PathBuf>,
    },
}

/// A command's result: structured for `--json`, text otherwise.
struct Outcome {
    value: Value,
    text: String,
}

impl Outcome {
    fn text(value: Value, text: impl Into<String>) -> Self {
        Self { value, text: text.into() }
    }

    fn plain(s: impl Into<String>) -> Self {
        let s = s.into();
        Self {
            value: Value::from(s.clone()),
            text: s,
        }
    }
}

fn json_text(v: &Value) -> String {
    serde_json::to_string_pretty(v).unwrap_or_default()
}

/// Parses `argv` (program name first), runs the command and returns the exit code.
pub fn dispatch<I, S>(argv: I, stdin: &mut dyn Read, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let target: &mut dyn Write = if e.use_stderr() { err } else { out };
            let _ = write!(target, "{}", e.render());
            return code;
        }
    };
    let json = cli.json;
    match run(cli, stdin) {
        Ok(o) => {
            let _ = if json {
                writeln!(out, "{}", json!({ "ok": true, "result": o.value }))
            } else if o.text.is_empty() {
                Ok(())
            } else {
                writeln!(out, "{}", o.text)
            };
            EXIT_OK
        }
        Err(e) => {
            let _ = if json {
                writeln!(out, "{}", json!({ "ok": false, "error": e.name(), "detail": e.to_string() }))
            } else {
                writeln!(err, "error: {}: {e}", e.name())
            };
            e.exit_code()
        }
    }
}

fn read_input(input: &Input, stdin: &mut dyn Read) -> Result<Vec<u8>, CliError> {
    match input.input.as_deref() {
        Some(p) if p != Path::new("-") => Ok(std::fs::read(p)?),
        _ => {
            let mut buf = Vec::new();
            stdin.read_to_end(&mut buf)?;
            Ok(buf)
        }
    }
}

fn read_text(input: &Input, stdin: &mut dyn Read) -> Result<String, CliError> {
    String::from_utf8(read_input(input, stdin)?).map_err(|_| CliError::Usage("input is not UTF-8".into()))
}

/// 32 raw bytes, or 64 hex digits with optional surrounding whitespace.
fn parse_key_bytes(data: &[u8]) -> Result<Vec<u8>, CliError> {
    if let Ok(s) = std::str::from_utf8(data) {
        let t = s.trim();
        if t.len() == 64 {
            if let Ok(k) = hex::decode(t) {
                return Ok(k);
            }
        }
    }
    Ok(data.to_vec())
}

fn load_key_file(path: &Path) -> Result<Key, CliError> {
    let bytes = parse_key_bytes(&std::fs::read(path)?)?;
    bytes
        .try_into()
        .map_err(|b: Vec<u8>| CliError::Usage(format!("{}: expected a 32-byte key, got {} bytes", path.display(), b.len())))
}

fn parse_action(s: &str) -> Result<Action, CliError> {
    serde_json::from_value(Value::from(s.to_uppercase())).map_err(|_| CliError::Usage(format!("unknown action {s:?}")))
}

fn client_config(cli: &Cli) -> Result<ClientConfig, CliError> {
    let path = cli.config.as_deref().ok_or_else(|| CliError::Usage("--config is required".into()))?;
    ClientConfig::load(path)
}

fn with_client<T>(cfg: &ClientConfig, f: impl FnOnce(&mut Client) -> Result<T, CliError>) -> Result<T, CliError> {
    let creds = cfg.credentials()?;
    let mut transport = cfg.transport();
    let mut c = Client::new(&mut transport, cfg.deployment(), creds, RandomStream::from_entropy());
    let out = f(&mut c);
    c.disconnect();
    out
}

fn run(cli: Cli, stdin: &mut dyn Read) -> Result<Outcome, CliError> {
    match &cli.cmd {
        Cmd::Deploy(a) => deploy(a),
        Cmd::Node => {
            let path = cli.config.as_deref().ok_or_else(|| CliError::Usage("--config is required".into()))?;
            let cfg = NodeConfig::load(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
            let server = trustworthy_node::tcp::serve(cfg)?;
            log::info!("listening on {}", server.local_addr);
            server.wait();
            Ok(Outcome::plain(""))
        }
        Cmd::Keygen { user, out } => keygen(&client_config(&cli)?, user, out),
        Cmd::Register { entry } => {
            let cfg = client_config(&cli)?;
            let entry: UserEntry =
                serde_json::from_slice(&std::fs::read(entry)?).map_err(|e| CliError::Usage(format!("{}: {e}", entry.display())))?;
            with_client(&cfg, |c| Ok(c.register(&entry)?))?;
            Ok(Outcome::text(json!(entry), format!("registered {}", entry.user)))
        }
        Cmd::Note(n) => note(&client_config(&cli)?, n, stdin),
        Cmd::Key(k) => key(&cli, k, stdin),
        Cmd::Mail(m) => mail(&client_config(&cli)?, m, stdin),
        Cmd::Survey(s) => survey(&client_config(&cli)?, s, stdin),
        Cmd::Gov(g) => gov(&client_config(&cli)?, g),
        Cmd::Admin(a) => admin(&client_config(&cli)?, a),
        Cmd::Harness(HarnessCmd::Run { scenario, logs }) => {
            let text = std::fs::read_to_string(scenario)?;
            let report = trustworthy_harness::run(&Scenario::from_json(&text)?)?;
            if let Some(dir) = logs {
                report.write_logs(dir)?;
            }
            if !report.passed {
                return Err(CliError::ScenarioFailed(
                    report.steps.iter().filter(|s| !s.passed).map(|s| s.step).collect(),
                ));
            }
            let summary = format!(
                "{} steps passed, {} deliveries, transcript {}",
                report.steps.len(),
                report.deliveries,
                report.transcript_hash
            );
            Ok(Outcome::text(serde_json::to_value(&report).map_err(std::io::Error::from)?, summary))
        }
    }
}

fn deploy(a: &DeployArgs) -> Result<Outcome, CliError> {
    let mut params = FieldParams::default_params();
    if let Some(p) = a.field_p {
        let mut kv = KeyValues::default();
        kv.set("field.p", p);
        params = field_params_from(&kv).map_err(|e| CliError::Usage(e.to_string()))?;
    }
    let mut rng = match a.seed {
        Some(s) => RandomStream::from_u64(s),
        None => RandomStream::from_entropy(),
    };
    let addresses: Vec<String> = (1..=INSTITUTIONS as u16)
        .map(|i| format!("{}:{}", a.host, a.base_port.saturating_add(i)))
        .collect();
    let plan = DeploymentPlan::generate(params, addresses, &mut rng);
    let mut files: Vec<String> = plan
        .write(&a.dir, a.seed)?
        .iter()
        .map(|p| p.display().to_string())
        .collect();
    for i in 1..=INSTITUTIONS as u32 {
        let cfg = ClientConfig {
            identity: format!("inst:{i}"),
            keypair: PathBuf::new(),
            endpoints: (1..=INSTITUTIONS as u32).zip(plan.addresses.iter().cloned()).collect(),
            node_keys: plan.institution_keys(),
            field: plan.field_params.field,
            threshold: Threshold::Majority,
            timeout: std::time::Duration::from_secs(10),
        };
        let path = a.dir.join(format!("inst{i}.client.conf"));
        std::fs::write(&path, cfg.to_kv(&format!("inst{i}.key")).render())?;
        files.push(path.display().to_string());
    }
    Ok(Outcome::text(json!({ "files": files }), files.join("\n")))
}

fn keygen(base: &ClientConfig, user: &str, out: &Path) -> Result<Outcome, CliError> {
    std::fs::create_dir_all(out)?;
    let keys = UserKeys::generate(user, &mut RandomStream::from_entropy());
    let key_file = format!("{user}.keys");
    std::fs::write(out.join(&key_file), keys.to_kv().render())?;
    let entry_path = out.join(format!("{user}.pub.json"));
    std::fs::write(&entry_path, serde_json::to_string_pretty(&keys.entry()).map_err(std::io::Error::from)?)?;
    let mut cfg = base.clone();
    cfg.identity = format!("user:{user}");
    let conf_path = out.join(format!("{user}.conf"));
    std::fs::write(&conf_path, cfg.to_kv(&key_file).render())?;
    let files = [out.join(&key_file), entry_path, conf_path].map(|p| p.display().to_string());
    Ok(Outcome::text(json!({ "files": files }), files.join("\n")))
}

fn note(cfg: &ClientConfig, cmd: &NoteCmd, stdin: &mut dyn Read) -> Result<Outcome, CliError> {
    match cmd {
        NoteCmd::Create { threshold, input } => {
            let text = read_text(input, stdin)?;
            let k = threshold.unwrap_or(cfg.threshold).value();
            let id = with_client(cfg, |c| Ok(c.note_create(&text, k)?))?;
            Ok(Outcome::plain(id))
        }
        NoteCmd::Read { id, proposal } => {
            let text = with_client(cfg, |c| Ok(c.note_read(id, proposal.as_deref())?))?;
            Ok(Outcome::plain(text))
        }
        NoteCmd::Update { id, threshold, input } => {
            let text = read_text(input, stdin)?;
            let k = threshold.unwrap_or(cfg.threshold).value();
            with_client(cfg, |c| Ok(c.note_update(id, &text, k)?))?;
            Ok(Outcome::text(json!({ "note_id": id }), format!("updated {id}")))
        }
    }
}

fn key(cli: &Cli, cmd: &KeyCmd, stdin: &mut dyn Read) -> Result<Outcome, CliError> {
    match cmd {
        KeyCmd::Escrow { threshold, hint, input } => {
            let cfg = client_config(cli)?;
            let key = parse_key_bytes(&read_input(input, stdin)?)?;
            let k = threshold.unwrap_or(cfg.threshold).value();
            let id = with_client(&cfg, |c| Ok(c.key_escrow(&key, k, hint)?))?;
            Ok(Outcome::plain(id))
        }
        KeyCmd::Retrieve { id, proposal, out } => {
            let cfg = client_config(cli)?;
            let key = hex::encode(with_client(&cfg, |c| Ok(c.key_retrieve(id, proposal.as_deref())?))?);
            match out {
                Some(path) => {
                    std::fs::write(path, format!("{key}\n"))?;
                    Ok(Outcome::text(json!({ "written": path }), format!("wrote {}", path.display())))
                }
                None => Ok(Outcome::plain(key)),
            }
        }
        KeyCmd::Encrypt { key, input, output } => {
            let k = load_key_file(key)?;
            let sealed = encrypt_file(&k, &std::fs::read(input)?, &mut RandomStream::from_entropy());
            std::fs::write(output, &sealed)?;
            Ok(Outcome::text(json!({ "bytes": sealed.len() }), format!("wrote {}", output.display())))
        }
        KeyCmd::Decrypt { key, input, output } => {
            let k = load_key_file(key)?;
            let plain = decrypt_file(&k, &std::fs::read(input)?)?;
            std::fs::write(output, &plain)?;
            Ok(Outcome::text(json!({ "bytes": plain.len() }), format!("wrote {}", output.display())))
        }
    }
}

fn mail(cfg: &ClientConfig, cmd: &MailCmd, stdin: &mut dyn Read) -> Result<Outcome, CliError> {
    match cmd {
        MailCmd::Send { to, input } => {
            let body = read_text(input, stdin)?;
            let id = with_client(cfg, |c| Ok(c.email_send(to, &body)?))?;
            Ok(Outcome::plain(id))
        }
        MailCmd::Fetch { id: None } => {
            let list = with_client(cfg, |c| Ok(c.email_list()?))?;
            let text = list
                .iter()
                .map(|m| format!("{} {}", m.email_id, m.sender))
                .collect::<Vec<_>>()
                .join("\n");
            let value = list.iter().map(|m| json!({ "email_id": m.email_id, "sender": m.sender })).collect();
            Ok(Outcome::text(Value::Array(value), text))
        }
        MailCmd::Fetch { id: Some(id) } => {
            let keys = cfg.user_keys()?;
            let m = with_client(cfg, |c| Ok(c.email_read(&keys, id)?))?;
            Ok(Outcome::text(
                json!({ "email_id": m.email_id, "sender": m.sender, "body": m.body }),
                format!("From: {}\n\n{}", m.sender, m.body),
            ))
        }
    }
}

fn parse_answers(text: &str) -> Result<Vec<u64>, CliError> {
    text.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(|s| s.parse().map_err(|_| CliError::Usage(format!("answer {s:?} is not a number"))))
        .collect()
}

fn survey(cfg: &ClientConfig, cmd: &SurveyCmd, stdin: &mut dyn Read) -> Result<Outcome, CliError> {
    match cmd {
        SurveyCmd::Create { def, proposal } => {
            let d: SurveyDef =
                serde_json::from_slice(&std::fs::read(def)?).map_err(|e| CliError::Usage(format!("{}: {e}", def.display())))?;
            with_client(cfg, |c| Ok(c.survey_create(&d, proposal)?))?;
            Ok(Outcome::text(json!({ "survey_id": d.survey_id }), format!("created {}", d.survey_id)))
        }
        SurveyCmd::Respond { survey, input } => {
            let answers = parse_answers(&read_text(input, stdin)?)?;
            with_client(cfg, |c| Ok(c.survey_respond(survey, &answers)?))?;
            Ok(Outcome::text(json!({ "survey_id": survey }), "submitted"))
        }
        SurveyCmd::Compute { survey, query, proposal } => {
            let stat = with_client(cfg, |c| Ok(c.survey_compute(survey, query, proposal)?))?;
            let text = match (&stat.denominator, &stat.percentage) {
                (Some(d), Some(p)) => format!("{}/{} = {p}%", stat.numerator, d),
                (Some(d), None) => format!("{}/{}", stat.numerator, d),
                _ => stat.numerator.to_string(),
            };
            Ok(Outcome::text(serde_json::to_value(&stat).map_err(std::io::Error::from)?, text))
        }
        SurveyCmd::Results { survey } => {
            let info = with_client(cfg, |c| Ok(c.survey_result(survey)?))?;
            let v = serde_json::to_value(&info).map_err(std::io::Error::from)?;
            Ok(Outcome::text(v.clone(), json_text(&v)))
        }
    }
}

fn status_text(st: &trustworthy_node::proto::GovStatus) -> String {
    let state = match &st.decision {
        Some(d) if d.approved => "approved",
        Some(_) => "rejected",
        None => "pending",
    };
    format!(
        "{} {:?} {} approvals {}/{} {state}",
        st.proposal.proposal_id,
        st.proposal.action,
        st.proposal.target,
        st.approvals.len(),
        st.required
    )
}

fn gov(cfg: &ClientConfig, cmd: &GovCmd) -> Result<Outcome, CliError> {
    let st = match cmd {
        GovCmd::Propose {
            action,
            target,
            new_threshold,
        } => {
            let action = parse_action(action)?;
            with_client(cfg, |c| Ok(c.propose(action, target, *new_threshold)?))?
        }
        GovCmd::Vote { proposal, approve, .. } => {
            let choice = if *approve { Choice::Approve } else { Choice::Reject };
            with_client(cfg, |c| Ok(c.vote(proposal, choice)?))?
        }
        GovCmd::Status { proposal } => with_client(cfg, |c| Ok(c.proposal_status(proposal)?))?,
    };
    let text = match cmd {
        GovCmd::Propose { .. } => st.proposal.proposal_id.clone(),
        _ => status_text(&st),
    };
    Ok(Outcome::text(serde_json::to_value(&st).map_err(std::io::Error::from)?, text))
}

fn admin(cfg: &ClientConfig, cmd: &AdminCmd) -> Result<Outcome, CliError> {
    let own = || {
        cfg.institution()
            .ok_or_else(|| CliError::Usage("admin commands need an institution config".into()))
    };
    match cmd {
        AdminCmd::Recover { helpers, node } => {
            let node = match node {
                Some(n) => *n,
                None => own()?,
            };
            let r = with_client(cfg, |c| Ok(c.recover(node, helpers.clone())?))?;
            Ok(Outcome::text(json!(r.recovered), format!("recovered {} records", r.recovered.len())))
        }
        AdminCmd::Reshare { proposal, quorum } => {
            let done = with_client(cfg, |c| Ok(c.reshare(proposal, quorum.clone())?))?;
            let summary: BTreeMap<u32, Value> = done.iter().map(|(i, d)| (*i, json!(d))).collect();
            let text = done
                .values()
                .next()
                .map(|d| format!("{} now at threshold {}", d.record_id, d.threshold))
                .unwrap_or_default();
            Ok(Outcome::text(json!(summary), text))
        }
        AdminCmd::Erase { id, proposal } => {
            let erased = with_client(cfg, |c| Ok(c.erase(id, proposal.as_deref())?))?;
            Ok(Outcome::text(json!(erased), erased.join("\n")))
        }
        AdminCmd::ReplicaCheck { record, node } => {
            let node = match node {
                Some(n) => *n,
                None => own()?,
            };
            let r = with_client(cfg, |c| Ok(c.replica_check(node, record)?))?;
            let text = format!("{} consistent={} flagged={:?}", r.record_id, r.consistent, r.flagged);
            Ok(Outcome::text(serde_json::to_value(&r).map_err(std::io::Error::from)?, text))
        }
    }
}
