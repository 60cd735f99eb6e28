use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::codec::{Reader, Writer};
use crate::naming::{build_key_request_name, parse_key_request_name, Component, KeyRequestParts, Name};
use crate::policy::AttributeSet;

use super::{DenyReason, LedgerError, UserCredentials};

pub const NONCE: &str = "nonce";
pub const USER_SIG: &str = "user-sig";
pub const RECIPIENT: &str = "recipient";
pub const LEDGER_SIG: &str = "ledger-sig";
pub const ISSUE_KEY: &str = "issue-key";

pub const DATE_ATTRIBUTE: &str = "Date";
pub const VALIDITY_ATTRIBUTE: &str = "IS_VALID";
/// Attributes only the local ledger may assert.
pub const RESERVED_ATTRIBUTES: [&str; 3] = [crate::abe::EPOCH_ATTRIBUTE, VALIDITY_ATTRIBUTE, DATE_ATTRIBUTE];

const KIND_RESPONSE: u8 = 0x06;

pub fn is_reserved(name: &str) -> bool {
    RESERVED_ATTRIBUTES.contains(&name)
}

fn hex_annotation(key: &str, bytes: &[u8]) -> Component {
    Component::annotation(key, hex::encode(bytes))
}

fn read_hex(c: &Component, key: &str) -> Result<Vec<u8>, LedgerError> {
    let v = c
        .annotation_value(key)
        .ok_or_else(|| LedgerError::Malformed(format!("expected {key} annotation")))?;
    hex::decode(v).map_err(|_| LedgerError::Malformed(format!("{key} is not hex")))
}

fn fixed<const N: usize>(v: Vec<u8>, what: &str) -> Result<[u8; N], LedgerError> {
    v.try_into().map_err(|_| LedgerError::Malformed(format!("{what} has the wrong length")))
}

/// A user's signed key request: `<request name>/nonce=<hex>/user-sig=<hex>`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeyRequest {
    pub request_name: Name,
    pub nonce: [u8; 8],
    pub signature: Vec<u8>,
}

impl KeyRequest {
    pub fn signed_bytes(request_name: &Name, nonce: &[u8; 8]) -> Vec<u8> {
        let mut w = Writer::new();
        w.str("aabac/key-request");
        w.name(request_name);
        w.bytes(nonce);
        w.finish()
    }

    pub fn sign(request_name: Name, nonce: [u8; 8], creds: &UserCredentials) -> Self {
        let signature = creds.sign(&Self::signed_bytes(&request_name, &nonce)).to_vec();
        KeyRequest { request_name, nonce, signature }
    }

    pub fn to_name(&self) -> Name {
        self.request_name
            .child(hex_annotation(NONCE, &self.nonce))
            .child(hex_annotation(USER_SIG, &self.signature))
    }

    pub fn from_name(name: &Name) -> Result<Self, LedgerError> {
        let c = name.components();
        if c.len() < 3 {
            return Err(LedgerError::Malformed("key request too short".into()));
        }
        let n = c.len();
        Ok(KeyRequest {
            request_name: name.prefix(n - 2).expect("at least one component"),
            nonce: fixed(read_hex(&c[n - 2], NONCE)?, NONCE)?,
            signature: read_hex(&c[n - 1], USER_SIG)?,
        })
    }

    pub fn parts(&self) -> Result<KeyRequestParts, LedgerError> {
        Ok(parse_key_request_name(&self.request_name)?)
    }
}

/// A request vetted by the local ledger, ready for the NOC.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SignedKeyRequest {
    /// The user's request name.
    pub request_name: Name,
    pub nonce: [u8; 8],
    pub requester_sig: Vec<u8>,
    /// The request name with the ledger-appended attributes merged in.
    pub forwarded_name: Name,
    pub appended: AttributeSet,
    pub epoch: u64,
    /// The requester's key-delivery public key.
    pub recipient: [u8; 32],
    pub ledger_sig: Option<Vec<u8>>,
}

impl SignedKeyRequest {
    pub fn signed_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.str("aabac/ledger-forward");
        w.name(&self.forwarded_name);
        w.bytes(&self.nonce);
        w.bytes(&self.requester_sig);
        w.bytes(&self.recipient);
        w.finish()
    }

    /// Identifies the request in ledger and NOC logs.
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.signed_bytes()))
    }

    pub fn parts(&self) -> Result<KeyRequestParts, LedgerError> {
        Ok(parse_key_request_name(&self.forwarded_name)?)
    }

    /// `<noc>/issue-key/<forwarded name>/nonce/user-sig/recipient[/ledger-sig]`
    pub fn to_interest_name(&self, noc_prefix: &Name) -> Name {
        let mut name = noc_prefix.child(Component::plain(ISSUE_KEY)).join(&self.forwarded_name);
        name.push(hex_annotation(NONCE, &self.nonce));
        name.push(hex_annotation(USER_SIG, &self.requester_sig));
        name.push(hex_annotation(RECIPIENT, &self.recipient));
        if let Some(sig) = &self.ledger_sig {
            name.push(hex_annotation(LEDGER_SIG, sig));
        }
        name
    }

    pub fn from_interest_name(noc_prefix: &Name, name: &Name) -> Result<Self, LedgerError> {
        let bad = |why: &str| LedgerError::Malformed(why.to_owned());
        if !noc_prefix.is_prefix_of(name) {
            return Err(bad("not addressed to this NOC"));
        }
        let rest = &name.components()[noc_prefix.len()..];
        let (first, mut rest) = rest.split_first().ok_or_else(|| bad("empty NOC request"))?;
        if *first != Component::plain(ISSUE_KEY) {
            return Err(bad("not an issue-key request"));
        }
        let mut ledger_sig = None;
        if let Some((last, head)) = rest.split_last() {
            if last.annotation_value(LEDGER_SIG).is_some() {
                ledger_sig = Some(read_hex(last, LEDGER_SIG)?);
                rest = head;
            }
        }
        if rest.len() < 4 {
            return Err(bad("NOC request too short"));
        }
        let n = rest.len();
        let forwarded_name = Name::new(rest[..n - 3].to_vec())?;
        let parts = parse_key_request_name(&forwarded_name)?;
        let mut requested = AttributeSet::new();
        let mut appended = AttributeSet::new();
        for a in &parts.attrs {
            if is_reserved(a.name()) {
                appended.set(a.clone());
            } else {
                requested.set(a.clone());
            }
        }
        let epoch = appended
            .get(crate::abe::EPOCH_ATTRIBUTE)
            .and_then(|a| a.as_int())
            .ok_or_else(|| bad("request carries no epoch"))?;
        Ok(SignedKeyRequest {
            request_name: build_key_request_name(
                &parts.ledger_prefix,
                &parts.data_name,
                &requested,
                &parts.user_pubkey_name,
            ),
            nonce: fixed(read_hex(&rest[n - 3], NONCE)?, NONCE)?,
            requester_sig: read_hex(&rest[n - 2], USER_SIG)?,
            recipient: fixed(read_hex(&rest[n - 1], RECIPIENT)?, RECIPIENT)?,
            forwarded_name,
            appended,
            epoch,
            ledger_sig,
        })
    }
}

/// Payload of a key-request reply.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum KeyResponse {
    /// A decryption key blob sealed to the requester.
    Issued(Vec<u8>),
    Denied(DenyReason),
}

impl KeyResponse {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::blob(KIND_RESPONSE);
        match self {
            KeyResponse::Issued(blob) => {
                w.u8(0);
                w.bytes(blob);
            }
            KeyResponse::Denied(reason) => {
                w.u8(1);
                w.str(reason.as_str());
            }
        }
        w.finish()
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self, LedgerError> {
        let mut r = Reader::blob(buf, KIND_RESPONSE)?;
        let out = match r.u8()? {
            0 => KeyResponse::Issued(r.bytes()?.to_vec()),
            1 => KeyResponse::Denied(
                r.str()?.parse().map_err(|_| LedgerError::Malformed("unknown denial reason".into()))?,
            ),
            _ => return Err(LedgerError::Malformed("unknown response tag".into())),
        };
        r.end()?;
        Ok(out)
    }
}
