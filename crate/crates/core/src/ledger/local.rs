use std::collections::BTreeMap;
use std::io::Write as _;
use std::path::Path;

use ed25519_dalek::Signature;
use serde::{Deserialize, Serialize};

use crate::naming::{build_key_request_name, Component, Name};
use crate::ndn_sim::{App, AppContext, DataPacket, Identity, Interest, NackReason, TrustStore};
use crate::policy::{Attribute, AttributeSet};

use super::protocol::{is_reserved, KeyRequest, KeyResponse, SignedKeyRequest, DATE_ATTRIBUTE, VALIDITY_ATTRIBUTE};
use super::{io_err, user_of_key_name, DenyReason, LedgerError, UserPublicKey};

pub const MS_PER_DAY: u64 = 86_400_000;
pub const DECRYPTION_KEY: &str = crate::naming::DECRYPTION_KEY;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerRecord {
    pub user: Name,
    pub pubkey: UserPublicKey,
    pub attrs: AttributeSet,
    pub valid: bool,
    /// Virtual time after which requests are refused.
    pub valid_until: Option<u64>,
}

impl LedgerRecord {
    pub fn new(user: Name, pubkey: UserPublicKey, attrs: AttributeSet) -> Self {
        LedgerRecord { user, pubkey, attrs, valid: true, valid_until: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LogEvent {
    Registered,
    Revoked,
    Forwarded,
    Denied,
    Delivered,
    EpochAdvanced,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogEntry {
    pub seq: u64,
    pub t: u64,
    pub event: LogEvent,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub user: Option<Name>,
    pub detail: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub digest: Option<String>,
}

#[derive(Serialize, Deserialize)]
struct LedgerConfigFile {
    prefix: Name,
    noc_prefix: Name,
    epoch: u64,
    date_origin_days: u64,
    #[serde(with = "hex::serde")]
    identity_seed: [u8; 32],
}

/// An institution's attribute authority.
#[derive(Debug, Clone)]
pub struct LocalLedger {
    prefix: Name,
    noc_prefix: Name,
    identity: Identity,
    users: BTreeMap<Name, LedgerRecord>,
    epoch: u64,
    date_origin_days: u64,
    log: Vec<LogEntry>,
    trust: TrustStore,
}

impl LocalLedger {
    /// `date_origin_days` is the calendar day (days since 1970-01-01) at
    /// virtual time 0.
    pub fn new(prefix: Name, identity_seed: [u8; 32], noc_prefix: Name, date_origin_days: u64) -> Self {
        LocalLedger {
            identity: Identity::from_seed(prefix.clone(), identity_seed),
            prefix,
            noc_prefix,
            users: BTreeMap::new(),
            epoch: 0,
            date_origin_days,
            log: Vec::new(),
            trust: TrustStore::new(),
        }
    }

    pub fn prefix(&self) -> &Name {
        &self.prefix
    }

    pub fn noc_prefix(&self) -> &Name {
        &self.noc_prefix
    }

    pub fn identity(&self) -> &Identity {
        &self.identity
    }

    pub fn epoch(&self) -> u64 {
        self.epoch
    }

    pub fn date_origin_days(&self) -> u64 {
        self.date_origin_days
    }

    pub fn day_at(&self, now: u64) -> u64 {
        self.date_origin_days + now / MS_PER_DAY
    }

    /// Trusts replies signed by the NOC identity.
    pub fn trust_noc(&mut self, identity: &Identity) {
        self.trust.trust_identity(identity);
    }

    fn append(&mut self, t: u64, event: LogEvent, user: Option<Name>, detail: String, digest: Option<String>) {
        let seq = self.log.len() as u64;
        self.log.push(LogEntry { seq, t, event, user, detail, digest });
    }

    pub fn set_epoch(&mut self, epoch: u64, now: u64) {
        assert!(epoch >= self.epoch, "epochs never decrease");
        if epoch != self.epoch {
            self.epoch = epoch;
            self.append(now, LogEvent::EpochAdvanced, None, format!("epoch={epoch}"), None);
        }
    }

    pub fn register_user(&mut self, record: LedgerRecord, now: u64) -> Result<(), LedgerError> {
        if let Some(a) = record.attrs.names().find(|n| is_reserved(n)) {
            return Err(LedgerError::ReservedAttribute(a.to_owned()));
        }
        if self.users.contains_key(&record.user) {
            return Err(LedgerError::DuplicateUser(record.user));
        }
        let detail = record.attrs.canonical_strings().into_iter().collect::<Vec<_>>().join(";");
        self.append(now, LogEvent::Registered, Some(record.user.clone()), detail, None);
        self.users.insert(record.user.clone(), LedgerRecord { valid: true, ..record });
        Ok(())
    }

    /// Marks the user invalid; the record is kept for audit.
    pub fn revoke_user(&mut self, user: &Name, now: u64) -> Result<(), LedgerError> {
        let rec = self.users.get_mut(user).ok_or_else(|| LedgerError::UnknownUser(user.clone()))?;
        rec.valid = false;
        self.append(now, LogEvent::Revoked, Some(user.clone()), String::new(), None);
        Ok(())
    }

    pub fn user(&self, user: &Name) -> Option<&LedgerRecord> {
        self.users.get(user)
    }

    pub fn users(&self) -> impl Iterator<Item = &LedgerRecord> {
        self.users.values()
    }

    pub fn log(&self) -> &[LogEntry] {
        &self.log
    }

    pub fn log_jsonl(&self) -> String {
        self.log.iter().map(|e| serde_json::to_string(e).expect("log serializes") + "\n").collect()
    }

    fn vet(&self, request: &KeyRequest, now: u64) -> Result<(&LedgerRecord, AttributeSet), DenyReason> {
        let parts = request.parts().map_err(|_| DenyReason::Malformed)?;
        if parts.ledger_prefix != self.prefix {
            return Err(DenyReason::Malformed);
        }
        let user = user_of_key_name(&parts.user_pubkey_name);
        let rec = self.users.get(&user).ok_or(DenyReason::UnknownUser)?;
        let key = rec.pubkey.verifying_key().map_err(|_| DenyReason::BadSignature)?;
        let sig = Signature::from_slice(&request.signature).map_err(|_| DenyReason::BadSignature)?;
        key.verify_strict(&KeyRequest::signed_bytes(&request.request_name, &request.nonce), &sig)
            .map_err(|_| DenyReason::BadSignature)?;
        if !rec.valid || rec.valid_until.is_some_and(|until| now > until) {
            return Err(DenyReason::Revoked);
        }
        if !parts.attrs.iter().all(|a| rec.attrs.contains(a)) {
            return Err(DenyReason::AttributeNotHeld);
        }
        Ok((rec, parts.attrs))
    }

    /// Vets a user's request and returns it signed for the NOC, with Date,
    /// IS_VALID and epoch appended.
    pub fn handle_key_request(&mut self, request: &KeyRequest, now: u64) -> Result<SignedKeyRequest, LedgerError> {
        let claimed_user = request
            .parts()
            .ok()
            .map(|p| user_of_key_name(&p.user_pubkey_name));
        let (rec, requested) = match self.vet(request, now) {
            Ok(v) => v,
            Err(reason) => {
                self.append(now, LogEvent::Denied, claimed_user, reason.to_string(), None);
                return Err(LedgerError::RequestDenied(reason));
            }
        };
        let recipient = rec.pubkey.encrypt;
        let user = rec.user.clone();
        let parts = request.parts()?;
        let mut appended = AttributeSet::new();
        appended.set(Attribute::int(DATE_ATTRIBUTE, self.day_at(now))?);
        appended.set(Attribute::flag(VALIDITY_ATTRIBUTE)?);
        appended.set(Attribute::int(crate::abe::EPOCH_ATTRIBUTE, self.epoch)?);
        let mut full = requested;
        full.extend_from(&appended)?;
        let forwarded_name =
            build_key_request_name(&parts.ledger_prefix, &parts.data_name, &full, &parts.user_pubkey_name);
        let mut signed = SignedKeyRequest {
            request_name: request.request_name.clone(),
            nonce: request.nonce,
            requester_sig: request.signature.clone(),
            forwarded_name,
            appended,
            epoch: self.epoch,
            recipient,
            ledger_sig: None,
        };
        signed.ledger_sig = Some(self.identity.sign(&signed.signed_bytes()).to_vec());
        let detail = format!("epoch={}", self.epoch);
        self.append(now, LogEvent::Forwarded, Some(user), detail, Some(signed.digest()));
        Ok(signed)
    }

    pub fn save(&self, dir: &Path) -> Result<(), LedgerError> {
        std::fs::create_dir_all(dir).map_err(io_err)?;
        let cfg = LedgerConfigFile {
            prefix: self.prefix.clone(),
            noc_prefix: self.noc_prefix.clone(),
            epoch: self.epoch,
            date_origin_days: self.date_origin_days,
            identity_seed: self.identity.seed(),
        };
        let write_json = |file: &str, text: String| std::fs::write(dir.join(file), text + "\n").map_err(io_err);
        write_json("ledger.json", serde_json::to_string_pretty(&cfg).map_err(io_err)?)?;
        let users: Vec<_> = self.users.values().collect();
        write_json("users.json", serde_json::to_string_pretty(&users).map_err(io_err)?)?;
        let mut f = std::fs::File::create(dir.join("log.jsonl")).map_err(io_err)?;
        f.write_all(self.log_jsonl().as_bytes()).map_err(io_err)
    }

    /// Restores a ledger saved with [`Self::save`]. NOC trust must be
    /// re-established by the caller.
    pub fn load(dir: &Path) -> Result<Self, LedgerError> {
        let read = |file: &str| std::fs::read_to_string(dir.join(file)).map_err(io_err);
        let cfg: LedgerConfigFile = serde_json::from_str(&read("ledger.json")?).map_err(io_err)?;
        let users: Vec<LedgerRecord> = serde_json::from_str(&read("users.json")?).map_err(io_err)?;
        let mut log = Vec::new();
        for (i, line) in read("log.jsonl")?.lines().enumerate() {
            let e: LogEntry = serde_json::from_str(line).map_err(io_err)?;
            if e.seq != i as u64 {
                return Err(LedgerError::Io(format!("log sequence gap at line {}", i + 1)));
            }
            log.push(e);
        }
        let mut ledger = LocalLedger::new(cfg.prefix, cfg.identity_seed, cfg.noc_prefix, cfg.date_origin_days);
        ledger.epoch = cfg.epoch;
        ledger.users = users.into_iter().map(|r| (r.user.clone(), r)).collect();
        ledger.log = log;
        Ok(ledger)
    }
}

/// Serves `<ledger>/decryption-key/...` in the simulator and relays vetted
/// requests to the NOC.
pub struct LedgerApp {
    ledger: std::rc::Rc<std::cell::RefCell<LocalLedger>>,
    pending: BTreeMap<Name, Name>,
}

impl LedgerApp {
    pub fn new(ledger: std::rc::Rc<std::cell::RefCell<LocalLedger>>) -> Self {
        LedgerApp { ledger, pending: BTreeMap::new() }
    }

    fn reply(&self, ctx: &mut AppContext<'_>, name: Name, response: &KeyResponse) {
        let ledger = self.ledger.borrow();
        ctx.reply(DataPacket::signed(name, response.to_bytes(), 0, ledger.identity()));
    }
}

impl App for LedgerApp {
    fn on_interest(&mut self, interest: &Interest, ctx: &mut AppContext<'_>) {
        let name = interest.name().clone();
        let is_key_request = {
            let ledger = self.ledger.borrow();
            name.components().get(ledger.prefix().len()) == Some(&Component::plain(DECRYPTION_KEY))
        };
        if !is_key_request {
            ctx.nack(name, NackReason::NoData);
            return;
        }
        let outcome = KeyRequest::from_name(&name)
            .map_err(|_| LedgerError::RequestDenied(DenyReason::Malformed))
            .and_then(|req| self.ledger.borrow_mut().handle_key_request(&req, ctx.now()));
        match outcome {
            Ok(signed) => {
                let noc = self.ledger.borrow().noc_prefix().clone();
                let upstream = ctx.express(signed.to_interest_name(&noc));
                self.pending.insert(upstream.name().clone(), name);
            }
            Err(LedgerError::RequestDenied(reason)) => self.reply(ctx, name, &KeyResponse::Denied(reason)),
            Err(_) => self.reply(ctx, name, &KeyResponse::Denied(DenyReason::Malformed)),
        }
    }

    fn on_data(&mut self, data: &DataPacket, ctx: &mut AppContext<'_>) {
        let Some(user_name) = self.pending.remove(&data.name) else {
            return;
        };
        let trusted = crate::ndn_sim::verify_packet(data, &self.ledger.borrow().trust) == Ok(true);
        let response = match KeyResponse::from_bytes(&data.payload) {
            Ok(r) if trusted => r,
            _ => KeyResponse::Denied(DenyReason::Upstream),
        };
        if matches!(response, KeyResponse::Issued(_)) {
            let user = KeyRequest::from_name(&user_name)
                .ok()
                .and_then(|r| r.parts().ok())
                .map(|p| user_of_key_name(&p.user_pubkey_name));
            self.ledger.borrow_mut().append(ctx.now(), LogEvent::Delivered, user, String::new(), None);
        }
        self.reply(ctx, user_name, &response);
    }

    fn on_nack(&mut self, name: &Name, _reason: NackReason, ctx: &mut AppContext<'_>) {
        if let Some(user_name) = self.pending.remove(name) {
            self.reply(ctx, user_name, &KeyResponse::Denied(DenyReason::Upstream));
        }
    }
}
