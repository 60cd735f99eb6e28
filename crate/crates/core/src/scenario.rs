//! Declarative access-control scenarios run end to end through a fresh
//! deployment: principals register at the ledger, a probe object is
//! published under the scenario policy, and every principal's fetch and
//! decrypt is compared with the expected outcome.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::abe::{CiphertextPolicy, Mode};
use crate::consumer::{ConsumerError, ConsumerSession};
use crate::deployment::{Deployment, DeploymentConfig, DeploymentError};
use crate::ledger::{NamespaceAgreement, MS_PER_DAY};
use crate::naming::{parse_name, Name};
use crate::policy::date::parse_mdy;
use crate::policy::{parse_policy, Attribute, AttributeSet};
use crate::publisher::{PublishRequest, ReencryptionPolicy};

pub const REENCRYPTION_INTERVAL_MS: u64 = 3_600_000;
pub const PROBE_FRESHNESS_MS: u64 = 60_000;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SpecError {
    #[error("scenario file: {0}")]
    Parse(String),
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error(transparent)]
    Deployment(#[from] DeploymentError),
}

fn invalid(e: impl fmt::Display) -> SpecError {
    SpecError::Invalid(e.to_string())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Expectation {
    Allow,
    Deny,
}

impl fmt::Display for Expectation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Expectation::Allow => "allow",
            Expectation::Deny => "deny",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AttrValue {
    Int(u64),
    Str(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Principal {
    pub name: String,
    /// Ledger user name; derived from `name` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub user: Option<String>,
    pub attributes: BTreeMap<String, AttrValue>,
    pub expected: Expectation,
    /// `IS_VALID` at the ledger.
    #[serde(default = "yes")]
    pub valid: bool,
    /// `MM/DD/YYYY` at which the principal fetches.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub date: Option<String>,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Check {
    pub principal: String,
    pub expected: Expectation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptEvent {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub date: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub revoke: Vec<String>,
    #[serde(default)]
    pub advance_epoch: bool,
    #[serde(default)]
    pub expect: Vec<Check>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    pub data_name: String,
    pub attribute_universe: Vec<String>,
    pub policy_text: String,
    pub principals: Vec<Principal>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub epoch_script: Vec<ScriptEvent>,
    #[serde(default = "default_start")]
    pub start_date: String,
    #[serde(default = "default_mode")]
    pub mode: Mode,
}

fn default_start() -> String {
    "04/21/2021".into()
}

fn default_mode() -> Mode {
    Mode::Direct
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Outcome {
    pub phase: String,
    pub principal: String,
    pub expected: Expectation,
    pub actual: Expectation,
    pub detail: String,
}

impl Outcome {
    pub fn matches(&self) -> bool {
        self.expected == self.actual
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ScenarioReport {
    pub id: String,
    pub outcomes: Vec<Outcome>,
}

impl ScenarioReport {
    pub fn passed(&self) -> bool {
        self.outcomes.iter().all(Outcome::matches)
    }
}

impl fmt::Display for ScenarioReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for o in &self.outcomes {
            let mark = if o.matches() { "ok" } else { "MISMATCH" };
            writeln!(
                f,
                "{} [{}] {}: expected {}, got {} ({}) {mark}",
                self.id, o.phase, o.principal, o.expected, o.actual, o.detail
            )?;
        }
        write!(f, "{}: {}", self.id, if self.passed() { "pass" } else { "FAIL" })
    }
}

fn slug(name: &str) -> String {
    name.chars().filter(char::is_ascii_alphanumeric).collect::<String>().to_lowercase()
}

impl Principal {
    pub fn user_name(&self, ledger: &Name) -> Result<Name, SpecError> {
        match &self.user {
            Some(u) => parse_name(u).map_err(invalid),
            None => {
                let institution = ledger.prefix(ledger.len().saturating_sub(1)).unwrap_or_else(|| ledger.clone());
                parse_name(&format!("{institution}/{}", slug(&self.name))).map_err(invalid)
            }
        }
    }

    pub fn attribute_set(&self) -> Result<AttributeSet, SpecError> {
        let attrs = self.attributes.iter().map(|(k, v)| match v {
            AttrValue::Str(s) => Attribute::string(k, s),
            AttrValue::Int(i) => Attribute::int(k, *i),
        });
        AttributeSet::try_from_iter(attrs.collect::<Result<Vec<_>, _>>().map_err(invalid)?).map_err(invalid)
    }
}

fn day(text: &str) -> Result<u64, SpecError> {
    parse_mdy(text).ok_or_else(|| SpecError::Invalid(format!("bad date {text:?}")))
}

impl ScenarioSpec {
    pub fn from_json(text: &str) -> Result<Self, SpecError> {
        let spec: ScenarioSpec = serde_json::from_str(text).map_err(|e| SpecError::Parse(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), SpecError> {
        let policy = parse_policy(&self.policy_text).map_err(invalid)?;
        parse_name(&self.data_name).map_err(invalid)?;
        let start = day(&self.start_date)?;
        let missing: Vec<_> = policy
            .attribute_names()
            .into_iter()
            .filter(|a| !self.attribute_universe.contains(a))
            .collect();
        if !missing.is_empty() {
            return Err(SpecError::Invalid(format!("policy uses {missing:?} outside the universe")));
        }
        let mut names = BTreeSet::new();
        for p in &self.principals {
            if !names.insert(p.name.as_str()) {
                return Err(SpecError::Invalid(format!("duplicate principal {:?}", p.name)));
            }
            p.attribute_set()?;
            if let Some(d) = &p.date {
                if day(d)? < start {
                    return Err(SpecError::Invalid(format!("{} fetches before the start date", p.name)));
                }
            }
        }
        let mut last = start;
        for event in &self.epoch_script {
            if let Some(d) = &event.date {
                let d = day(d)?;
                if d < last {
                    return Err(SpecError::Invalid("epoch script dates must not go backwards".into()));
                }
                last = d;
            }
            for who in event.revoke.iter().chain(event.expect.iter().map(|c| &c.principal)) {
                if !names.contains(who.as_str()) {
                    return Err(SpecError::Invalid(format!("unknown principal {who:?} in epoch script")));
                }
            }
        }
        Ok(())
    }

    /// Fetch-and-decrypt attempts in the order they run.
    pub fn check_count(&self) -> usize {
        self.principals.len() + self.epoch_script.iter().map(|e| e.expect.len()).sum::<usize>()
    }
}

/// Deterministic probe contents: one metadata segment plus three data segments.
pub fn probe_object() -> (Vec<u8>, Vec<u8>) {
    let metadata = b"probe metadata: sample sheet, run parameters".repeat(40);
    let payload = (0..20_000u32).map(|i| (i.wrapping_mul(2_654_435_761) >> 24) as u8).collect();
    (metadata, payload)
}

struct Runner {
    d: Deployment,
    base: Name,
    origin: u64,
    sessions: BTreeMap<String, ConsumerSession>,
    expected_plain: (Vec<u8>, Vec<u8>),
    outcomes: Vec<Outcome>,
}

impl Runner {
    fn go_to(&mut self, date: u64) -> Result<(), SpecError> {
        let t = date.checked_sub(self.origin).ok_or_else(|| invalid("date before the start date"))? * MS_PER_DAY;
        if t > self.d.sim.now() {
            self.d.sim.advance_to(t);
        }
        Ok(())
    }

    fn attempt(&mut self, phase: &str, principal: &str, expected: Expectation) {
        let session = self.sessions.get_mut(principal).expect("validated principal");
        let (actual, detail) = match session.fetch_and_decrypt(&mut self.d.sim, &self.base) {
            Ok(obj) if (obj.metadata.clone(), obj.payload.clone()) == self.expected_plain => {
                (Expectation::Allow, format!("decrypted with key epoch {}", obj.key_epoch))
            }
            Ok(_) => (Expectation::Deny, "decrypted bytes differ".into()),
            Err(e @ (ConsumerError::RequestDenied(_) | ConsumerError::AccessDenied(_))) => {
                (Expectation::Deny, e.to_string())
            }
            Err(e) => (Expectation::Deny, format!("error: {e}")),
        };
        self.outcomes.push(Outcome { phase: phase.into(), principal: principal.into(), expected, actual, detail });
    }
}

pub fn run_scenario(spec: &ScenarioSpec) -> Result<ScenarioReport, SpecError> {
    run_scenario_with(spec, DeploymentConfig::default())
}

pub fn run_scenario_with(spec: &ScenarioSpec, mut config: DeploymentConfig) -> Result<ScenarioReport, SpecError> {
    spec.validate()?;
    let policy = parse_policy(&spec.policy_text).map_err(invalid)?;
    let base = parse_name(&spec.data_name).map_err(invalid)?;
    let origin = day(&spec.start_date)?;
    config.date_origin_days = origin;
    let agreement_prefix = base.prefix(1).unwrap_or_else(|| base.clone());
    let agreement = NamespaceAgreement::new(
        agreement_prefix,
        spec.attribute_universe.iter().map(String::as_str),
        policy.clone(),
        config.noc_prefix.clone(),
    )
    .map_err(invalid)?;
    let ledger_prefix = config.ledger_prefix.clone();
    let mut d = Deployment::new(config, agreement)?;

    let mut sessions = BTreeMap::new();
    for p in &spec.principals {
        let user = p.user_name(&ledger_prefix)?;
        let attrs = p.attribute_set()?;
        let creds = d.register_user(&user, attrs.clone())?;
        if !p.valid {
            d.revoke(&user)?;
        }
        sessions.insert(p.name.clone(), d.session(creds, attrs));
    }

    let (metadata, payload) = probe_object();
    let req = PublishRequest::new(base.clone(), CiphertextPolicy::new(policy))
        .metadata(metadata.clone())
        .payload(payload.clone())
        .mode(spec.mode)
        .freshness(PROBE_FRESHNESS_MS)
        .reencryption(ReencryptionPolicy::new(REENCRYPTION_INTERVAL_MS, crate::publisher::DEFAULT_FRACTION, [0x5c; 32])
            .map_err(invalid)?);
    d.publish(req)?;

    let mut runner = Runner {
        d,
        base,
        origin,
        sessions,
        expected_plain: (metadata, payload),
        outcomes: Vec::new(),
    };
    // One timeline: principals at their dates, script events at theirs,
    // principals first on a shared date.
    enum Item<'s> {
        Fetch(&'s Principal),
        Event(usize, &'s ScriptEvent),
    }
    let mut timeline: Vec<(u64, u8, Item<'_>)> = Vec::new();
    for p in &spec.principals {
        timeline.push((p.date.as_deref().map_or(Ok(origin), day)?, 0, Item::Fetch(p)));
    }
    let mut at = origin;
    for (i, e) in spec.epoch_script.iter().enumerate() {
        if let Some(d) = &e.date {
            at = day(d)?;
        }
        timeline.push((at, 1, Item::Event(i, e)));
    }
    timeline.sort_by_key(|(d, rank, _)| (*d, *rank));
    for (date, _, item) in timeline {
        runner.go_to(date)?;
        match item {
            Item::Fetch(p) => runner.attempt("initial", &p.name, p.expected),
            Item::Event(i, event) => {
                for who in &event.revoke {
                    let p = spec.principals.iter().find(|p| &p.name == who).expect("validated principal");
                    let user = p.user_name(&ledger_prefix)?;
                    runner.d.revoke(&user)?;
                }
                if event.advance_epoch {
                    runner.d.sim.advance_by(REENCRYPTION_INTERVAL_MS);
                    let base = runner.base.clone();
                    runner.d.advance_epoch(&base)?;
                    runner.d.sim.advance_by(PROBE_FRESHNESS_MS);
                }
                let phase = format!("script[{i}]");
                for c in &event.expect {
                    runner.attempt(&phase, &c.principal, c.expected);
                }
            }
        }
    }
    Ok(ScenarioReport { id: spec.id.clone(), outcomes: runner.outcomes })
}

#[cfg(test)]
#[path = "scenario_tests.rs"]
mod tests;
