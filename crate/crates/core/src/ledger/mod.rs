//! Key authorization: the remote ledger's namespace agreements, the local
//! ledger that vets and signs key requests, and the NOC that holds the master
//! secret and issues keys only for ledger-signed requests.
//!
//! Key requests travel user → local ledger → NOC, and keys come back along
//! the same path sealed to the requester's delivery key.

mod credentials;
mod local;
mod noc;
mod protocol;
mod remote;

pub use credentials::{key_name_for, open_sealed, seal_to, user_of_key_name, UserCredentials, UserPublicKey, PUB_KEY_COMPONENT};
pub use local::{LedgerApp, LedgerRecord, LocalLedger, LogEntry, LogEvent, MS_PER_DAY};
pub use noc::{EncryptionOracle, IssuanceRecord, Noc, NocApp};
pub use protocol::{
    is_reserved, KeyRequest, KeyResponse, SignedKeyRequest, DATE_ATTRIBUTE, ISSUE_KEY, LEDGER_SIG, NONCE,
    RECIPIENT, RESERVED_ATTRIBUTES, USER_SIG, VALIDITY_ATTRIBUTE,
};
pub use remote::{NamespaceAgreement, RemoteLedger};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::abe::AbeError;
use crate::naming::{Name, NameError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DenyReason {
    UnknownUser,
    BadSignature,
    Revoked,
    AttributeNotHeld,
    Malformed,
    /// The NOC declined or could not be reached.
    Upstream,
}

impl DenyReason {
    pub fn as_str(self) -> &'static str {
        match self {
            DenyReason::UnknownUser => "unknown_user",
            DenyReason::BadSignature => "bad_signature",
            DenyReason::Revoked => "revoked",
            DenyReason::AttributeNotHeld => "attribute_not_held",
            DenyReason::Malformed => "malformed",
            DenyReason::Upstream => "upstream",
        }
    }
}

impl fmt::Display for DenyReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DenyReason {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        [
            DenyReason::UnknownUser,
            DenyReason::BadSignature,
            DenyReason::Revoked,
            DenyReason::AttributeNotHeld,
            DenyReason::Malformed,
            DenyReason::Upstream,
        ]
        .into_iter()
        .find(|r| r.as_str() == s)
        .ok_or(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LedgerError {
    #[error("request denied: {0}")]
    RequestDenied(DenyReason),
    #[error("user {0} is already registered")]
    DuplicateUser(Name),
    #[error("user {0} is not registered")]
    UnknownUser(Name),
    #[error("an agreement for {0} already exists")]
    DuplicatePrefix(Name),
    #[error("no agreement covers {0}")]
    NotFound(Name),
    #[error("invalid agreement: {0}")]
    InvalidAgreement(String),
    #[error("attribute {0:?} is reserved for the ledger")]
    ReservedAttribute(String),
    #[error("request is not signed by a trusted ledger")]
    UntrustedRequest,
    #[error("ledger {0} is not trusted by this NOC")]
    UnknownLedger(Name),
    #[error("malformed message: {0}")]
    Malformed(String),
    #[error("sealed key could not be opened")]
    DeliveryFailed,
    #[error(transparent)]
    Abe(#[from] AbeError),
    #[error("storage: {0}")]
    Io(String),
}

impl From<NameError> for LedgerError {
    fn from(e: NameError) -> Self {
        LedgerError::Malformed(e.to_string())
    }
}

impl From<crate::codec::CodecError> for LedgerError {
    fn from(e: crate::codec::CodecError) -> Self {
        LedgerError::Malformed(e.0.to_owned())
    }
}

impl From<crate::policy::PolicyError> for LedgerError {
    fn from(e: crate::policy::PolicyError) -> Self {
        LedgerError::Malformed(e.to_string())
    }
}

pub(crate) fn io_err(e: impl fmt::Display) -> LedgerError {
    LedgerError::Io(e.to_string())
}

#[cfg(test)]
mod tests;
