//! State-directory commands behind the `aabac` binary.
//!
//! A state directory holds `journal.jsonl`, one line per successful command.
//! Opening the directory replays the journal into a fresh deployment, which
//! is deterministic, so every invocation sees the same network, keys and
//! caches the previous one left behind. After each command the repo, ledger
//! and agreements are also written out as plain snapshots.

use std::collections::BTreeMap;
use std::fs::{self, OpenOptions};
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::abe::{CiphertextPolicy, Mode};
use crate::consumer::{ConsumerSession, DecryptedObject};
use crate::deployment::{Deployment, DeploymentConfig, DeploymentError};
use crate::ledger::{NamespaceAgreement, MS_PER_DAY};
use crate::naming::{parse_name, Name};
use crate::policy::date::parse_mdy;
use crate::policy::{parse_policy, Attribute, AttributeSet};
use crate::publisher::{PublishRequest, ReencryptionPolicy, DEFAULT_FRACTION};

pub const JOURNAL: &str = "journal.jsonl";

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("{0}")]
    Failed(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Failed(_) => 1,
        }
    }
}

fn usage(e: impl std::fmt::Display) -> CliError {
    CliError::Usage(e.to_string())
}

fn failed(e: impl std::fmt::Display) -> CliError {
    CliError::Failed(e.to_string())
}

impl From<DeploymentError> for CliError {
    fn from(e: DeploymentError) -> Self {
        failed(e)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SetupArgs {
    pub seed: u64,
    pub data_prefix: Name,
    pub universe: Vec<String>,
    pub template: String,
    pub ledger_prefix: Name,
    pub noc_prefix: Name,
    pub key_prefix: Name,
    pub start_date: String,
}

impl Default for SetupArgs {
    fn default() -> Self {
        let d = DeploymentConfig::default();
        SetupArgs {
            seed: d.seed,
            data_prefix: crate::name!("/genomics/data"),
            universe: ["PI", "Role", "Project", "Department", "University", "Date", "IS_VALID"]
                .map(String::from)
                .to_vec(),
            template: "(PI = Tom) and (Role = PI or Role = Graduate Student)".into(),
            ledger_prefix: d.ledger_prefix,
            noc_prefix: d.noc_prefix,
            key_prefix: d.key_prefix,
            start_date: "04/21/2021".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PublishArgs {
    pub name: Name,
    pub policy: String,
    /// sha256 of a blob under `blobs/`.
    pub metadata: Option<String>,
    pub payload: Option<String>,
    pub mode: Mode,
    pub freshness_ms: u64,
    pub interval_ms: u64,
    pub fraction: f64,
}

/// One journaled command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "cmd", rename_all = "kebab-case")]
pub enum Action {
    Setup(SetupArgs),
    Keygen { user: Name, attrs: Vec<Attribute>, valid_until: Option<String> },
    Publish(PublishArgs),
    Fetch { user: Name, name: Name },
    Revoke { user: Name },
    AdvanceEpoch { name: Name, full: bool },
}

#[derive(Debug, Default)]
pub struct Output {
    pub lines: Vec<String>,
    pub object: Option<DecryptedObject>,
}

pub struct State {
    dir: PathBuf,
    setup: SetupArgs,
    d: Deployment,
    sessions: BTreeMap<Name, ConsumerSession>,
}

fn build(setup: &SetupArgs) -> Result<Deployment, CliError> {
    let origin = parse_mdy(&setup.start_date).ok_or_else(|| usage(format!("bad date {:?}", setup.start_date)))?;
    let template = parse_policy(&setup.template).map_err(usage)?;
    let agreement = NamespaceAgreement::new(
        setup.data_prefix.clone(),
        setup.universe.iter().map(String::as_str),
        template,
        setup.noc_prefix.clone(),
    )
    .map_err(usage)?;
    let config = DeploymentConfig {
        seed: setup.seed,
        key_prefix: setup.key_prefix.clone(),
        ledger_prefix: setup.ledger_prefix.clone(),
        noc_prefix: setup.noc_prefix.clone(),
        date_origin_days: origin,
        ..DeploymentConfig::default()
    };
    Ok(Deployment::new(config, agreement)?)
}

impl State {
    /// Creates a new state directory; refuses to overwrite an existing one.
    pub fn setup(dir: &Path, setup: SetupArgs) -> Result<(State, Output), CliError> {
        if dir.join(JOURNAL).exists() {
            return Err(usage(format!("{} already holds a state", dir.display())));
        }
        let d = build(&setup)?;
        fs::create_dir_all(dir).map_err(failed)?;
        let state = State { dir: dir.to_owned(), setup: setup.clone(), d, sessions: BTreeMap::new() };
        let out = Output {
            lines: vec![
                format!("encryption key {}", state.d.publisher.params().pubkey_name),
                format!("local ledger {}", state.setup.ledger_prefix),
                format!("noc {}", state.setup.noc_prefix),
                format!("namespace {}", state.setup.data_prefix),
            ],
            object: None,
        };
        state.journal(&Action::Setup(setup))?;
        state.snapshot()?;
        Ok((state, out))
    }

    /// Opens a state directory by replaying its journal.
    pub fn open(dir: &Path) -> Result<State, CliError> {
        let text = fs::read_to_string(dir.join(JOURNAL))
            .map_err(|e| usage(format!("{} is not a state directory: {e}", dir.display())))?;
        let mut actions = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| serde_json::from_str::<Action>(l).map_err(|e| failed(format!("corrupt journal: {e}"))));
        let Some(Action::Setup(setup)) = actions.next().transpose()? else {
            return Err(failed("journal does not start with setup"));
        };
        let d = build(&setup)?;
        let mut state = State { dir: dir.to_owned(), setup, d, sessions: BTreeMap::new() };
        for action in actions {
            state.execute(&action?).map_err(|e| failed(format!("journal replay failed: {e}")))?;
        }
        Ok(state)
    }

    pub fn deployment(&self) -> &Deployment {
        &self.d
    }

    pub fn deployment_mut(&mut self) -> &mut Deployment {
        &mut self.d
    }

    /// Runs and journals `action`.
    pub fn apply(&mut self, action: Action) -> Result<Output, CliError> {
        if matches!(action, Action::Setup(_)) {
            return Err(usage("setup only runs on an empty directory"));
        }
        let out = self.execute(&action)?;
        self.journal(&action)?;
        self.snapshot()?;
        Ok(out)
    }

    /// Stores a blob for a later publish and returns its hash.
    pub fn store_blob(&self, bytes: &[u8]) -> Result<String, CliError> {
        let hash = hex::encode(Sha256::digest(bytes));
        let dir = self.dir.join("blobs");
        fs::create_dir_all(&dir).map_err(failed)?;
        fs::write(dir.join(format!("{hash}.bin")), bytes).map_err(failed)?;
        Ok(hash)
    }

    fn blob(&self, hash: &Option<String>) -> Result<Vec<u8>, CliError> {
        let Some(hash) = hash else { return Ok(Vec::new()) };
        let bytes = fs::read(self.dir.join("blobs").join(format!("{hash}.bin"))).map_err(failed)?;
        if hex::encode(Sha256::digest(&bytes)) != *hash {
            return Err(failed(format!("blob {hash} is corrupt")));
        }
        Ok(bytes)
    }

    fn journal(&self, action: &Action) -> Result<(), CliError> {
        let mut f = OpenOptions::new().create(true).append(true).open(self.dir.join(JOURNAL)).map_err(failed)?;
        writeln!(f, "{}", serde_json::to_string(action).map_err(failed)?).map_err(failed)
    }

    fn snapshot(&self) -> Result<(), CliError> {
        self.d.publisher.repo().borrow().save(&self.dir.join("repo")).map_err(failed)?;
        self.d.ledger.borrow().save(&self.dir.join("ledger")).map_err(failed)?;
        let records: Vec<_> = self.d.publisher.records().cloned().collect();
        fs::write(self.dir.join("publications.json"), serde_json::to_string_pretty(&records).map_err(failed)? + "\n")
            .map_err(failed)?;
        let issued = self.d.noc.borrow().issued().to_vec();
        fs::write(self.dir.join("noc-issued.json"), serde_json::to_string_pretty(&issued).map_err(failed)? + "\n")
            .map_err(failed)
    }

    fn execute(&mut self, action: &Action) -> Result<Output, CliError> {
        let mut out = Output::default();
        match action {
            Action::Setup(_) => return Err(usage("setup only runs on an empty directory")),
            Action::Keygen { user, attrs, valid_until } => {
                let set = AttributeSet::try_from_iter(attrs.iter().cloned()).map_err(usage)?;
                let until = match valid_until {
                    None => None,
                    Some(d) => {
                        let day = parse_mdy(d).ok_or_else(|| usage(format!("bad date {d:?}")))?;
                        let origin = self.d.ledger.borrow().date_origin_days();
                        Some(day.saturating_sub(origin) * MS_PER_DAY + MS_PER_DAY - 1)
                    }
                };
                let creds = self.d.register_record(user, set.clone(), until)?;
                out.lines.push(format!("registered {} at {}", creds.key_name(), self.setup.ledger_prefix));
                out.lines.push(format!("verify key {}", hex::encode(creds.public().verify)));
                out.lines.push(format!("delivery key {}", hex::encode(creds.public().encrypt)));
                let session = self.d.session(creds, set);
                self.sessions.insert(user.clone(), session);
            }
            Action::Publish(p) => {
                let policy = parse_policy(&p.policy).map_err(usage)?;
                let reenc = ReencryptionPolicy::new(p.interval_ms, p.fraction, Sha256::digest(p.name.to_string()).into())
                    .map_err(usage)?;
                let req = PublishRequest::new(p.name.clone(), CiphertextPolicy::new(policy))
                    .metadata(self.blob(&p.metadata)?)
                    .payload(self.blob(&p.payload)?)
                    .mode(p.mode)
                    .freshness(p.freshness_ms)
                    .reencryption(reenc);
                let record = self.d.publish(req)?;
                out.lines.push(format!(
                    "published {} segments ({} metadata) at epoch {}",
                    record.segment_count, record.metadata_segments, record.epoch
                ));
                for n in self.d.publisher.segment_names(&p.name).unwrap_or_default() {
                    out.lines.push(n.to_string());
                }
            }
            Action::Fetch { user, name } => {
                let session = self
                    .sessions
                    .get_mut(user)
                    .ok_or_else(|| usage(format!("{user} has no keys; run keygen first")))?;
                let before = session.steps().len();
                let result = session.fetch_and_decrypt(&mut self.d.sim, name);
                for st in &session.steps()[before..] {
                    out.lines.push(format!("{} {}", st.step, st.name));
                }
                let obj = result.map_err(failed)?;
                out.lines.push(format!(
                    "decrypted {} metadata + {} payload bytes with key epoch {}",
                    obj.metadata.len(),
                    obj.payload.len(),
                    obj.key_epoch
                ));
                out.object = Some(obj);
            }
            Action::Revoke { user } => {
                self.d.revoke(user)?;
                out.lines.push(format!("revoked {user} at {}", self.setup.ledger_prefix));
            }
            Action::AdvanceEpoch { name, full } => {
                let at = self
                    .d
                    .publisher
                    .next_advance_at(name)
                    .ok_or_else(|| failed(format!("{name} has not been published")))?;
                let report = if *full {
                    self.d.full_reencrypt(name)?
                } else {
                    if at > self.d.sim.now() {
                        self.d.sim.advance_to(at);
                    }
                    self.d.advance_epoch(name)?
                };
                let freshness = report.record.freshness_ms;
                self.d.sim.advance_by(freshness);
                out.lines.push(format!("{} now at epoch {}", name, report.record.epoch));
                let names = self.d.publisher.segment_names(name).unwrap_or_default();
                for k in &report.reencrypted {
                    out.lines.push(format!("reencrypted {}", names[*k]));
                }
            }
        }
        Ok(out)
    }
}

/// Parses `Name=Value` or `Name:int=N`.
pub fn parse_attribute(text: &str) -> Result<Attribute, CliError> {
    text.parse().map_err(usage)
}

pub fn parse_name_arg(text: &str) -> Result<Name, CliError> {
    parse_name(text).map_err(usage)
}

pub fn default_publish(name: Name, policy: String) -> PublishArgs {
    PublishArgs {
        name,
        policy,
        metadata: None,
        payload: None,
        mode: Mode::Direct,
        freshness_ms: 1_000,
        interval_ms: 10_000,
        fraction: DEFAULT_FRACTION,
    }
}

#[cfg(test)]
#[path = "cli_tests.rs"]
mod tests;
