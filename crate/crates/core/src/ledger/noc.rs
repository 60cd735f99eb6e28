use std::collections::BTreeMap;
use std::fmt;
use std::rc::Rc;

use ed25519_dalek::{Signature, VerifyingKey};
use rand::{CryptoRng, RngCore};
use serde::{Deserialize, Serialize};

use crate::abe::{keygen, setup_with_prefix, AttributeSecrets, DecryptionKey, MasterSecret, PublicParams, Scalar};
use crate::policy::AttributeSet;
use crate::naming::Name;
use crate::ndn_sim::{App, AppContext, DataPacket, Identity, Interest};

use super::protocol::{KeyResponse, SignedKeyRequest};
use super::{seal_to, user_of_key_name, DenyReason, LedgerError};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IssuanceRecord {
    pub seq: u64,
    pub t: u64,
    pub holder: Name,
    pub ledger: Name,
    pub attrs: Vec<String>,
    pub epoch: u64,
    pub digest: String,
}

/// Lets a publisher encrypt without holding the master secret itself.
#[derive(Clone)]
pub struct EncryptionOracle {
    master: Rc<MasterSecret>,
}

impl fmt::Debug for EncryptionOracle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("EncryptionOracle(..)")
    }
}

impl AttributeSecrets for EncryptionOracle {
    fn params_id(&self) -> [u8; 32] {
        self.master.params_id()
    }

    fn attribute_secret(&self, attr: &str) -> Scalar {
        self.master.attribute_secret(attr)
    }
}

/// The network operations center: holds the master secret and issues keys
/// for requests signed by a trusted local ledger.
pub struct Noc {
    identity: Identity,
    params: PublicParams,
    master: Rc<MasterSecret>,
    trusted: BTreeMap<Name, VerifyingKey>,
    issued: Vec<IssuanceRecord>,
    rejected: u64,
}

impl fmt::Debug for Noc {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Noc")
            .field("identity", self.identity.name())
            .field("params", &self.params)
            .field("trusted", &self.trusted.keys().collect::<Vec<_>>())
            .finish_non_exhaustive()
    }
}

impl Noc {
    /// `key_prefix` names the published encryption key, e.g. `/genomics/pub_key`.
    pub fn new(prefix: Name, key_prefix: &Name, master_seed: [u8; 32], identity_seed: [u8; 32]) -> Self {
        let (params, master) = setup_with_prefix(master_seed, key_prefix);
        Self::from_parts(prefix, params, master, identity_seed)
    }

    pub fn from_parts(prefix: Name, params: PublicParams, master: MasterSecret, identity_seed: [u8; 32]) -> Self {
        Noc {
            identity: Identity::from_seed(prefix, identity_seed),
            params,
            master: Rc::new(master),
            trusted: BTreeMap::new(),
            issued: Vec::new(),
            rejected: 0,
        }
    }

    pub fn prefix(&self) -> &Name {
        self.identity.name()
    }

    pub fn identity(&self) -> &Identity {
        &self.identity
    }

    pub fn params(&self) -> &PublicParams {
        &self.params
    }

    pub fn encryption_oracle(&self) -> EncryptionOracle {
        EncryptionOracle { master: self.master.clone() }
    }

    pub fn trust_ledger(&mut self, ledger_prefix: Name, key: VerifyingKey) {
        self.trusted.insert(ledger_prefix, key);
    }

    pub fn issued(&self) -> &[IssuanceRecord] {
        &self.issued
    }

    pub fn rejected(&self) -> u64 {
        self.rejected
    }

    fn check_trust(&self, req: &SignedKeyRequest) -> Result<Name, LedgerError> {
        let sig = req.ledger_sig.as_ref().ok_or(LedgerError::UntrustedRequest)?;
        let ledger = req.parts()?.ledger_prefix;
        let key = self.trusted.get(&ledger).ok_or_else(|| LedgerError::UnknownLedger(ledger.clone()))?;
        let sig = Signature::from_slice(sig).map_err(|_| LedgerError::UntrustedRequest)?;
        key.verify_strict(&req.signed_bytes(), &sig)
            .map_err(|_| LedgerError::UntrustedRequest)?;
        Ok(ledger)
    }

    /// Issues a key directly, outside the ledger protocol. Used by operators
    /// and tests; nothing is recorded.
    pub fn keygen(&self, holder: &Name, attrs: &AttributeSet, epoch: u64, now: u64) -> Result<DecryptionKey, LedgerError> {
        Ok(keygen(&self.master, holder, attrs, epoch, now)?)
    }

    /// Issues a decryption key sealed to the requester.
    pub fn issue_key<R: RngCore + CryptoRng + ?Sized>(
        &mut self,
        req: &SignedKeyRequest,
        now: u64,
        rng: &mut R,
    ) -> Result<Vec<u8>, LedgerError> {
        let ledger = match self.check_trust(req) {
            Ok(l) => l,
            Err(e) => {
                self.rejected += 1;
                return Err(e);
            }
        };
        let parts = req.parts()?;
        let mut attrs = parts.attrs.clone();
        attrs.remove(crate::abe::EPOCH_ATTRIBUTE);
        let holder = user_of_key_name(&parts.user_pubkey_name);
        let key = keygen(&self.master, &holder, &attrs, req.epoch, now)?;
        let sealed = seal_to(&req.recipient, &key.to_bytes(), rng);
        self.issued.push(IssuanceRecord {
            seq: self.issued.len() as u64,
            t: now,
            holder,
            ledger,
            attrs: attrs.canonical_strings().into_iter().collect(),
            epoch: req.epoch,
            digest: req.digest(),
        });
        Ok(sealed)
    }
}

/// Serves `<noc>/issue-key/...`. Requests without a valid ledger signature
/// get no answer at all.
pub struct NocApp {
    noc: Rc<std::cell::RefCell<Noc>>,
}

impl NocApp {
    pub fn new(noc: Rc<std::cell::RefCell<Noc>>) -> Self {
        NocApp { noc }
    }
}

impl App for NocApp {
    fn on_interest(&mut self, interest: &Interest, ctx: &mut AppContext<'_>) {
        let prefix = self.noc.borrow().prefix().clone();
        let Ok(req) = SignedKeyRequest::from_interest_name(&prefix, interest.name()) else {
            self.noc.borrow_mut().rejected += 1;
            return;
        };
        let now = ctx.now();
        let outcome = self.noc.borrow_mut().issue_key(&req, now, ctx.rng());
        let response = match outcome {
            Ok(sealed) => KeyResponse::Issued(sealed),
            Err(LedgerError::UntrustedRequest | LedgerError::UnknownLedger(_)) => return,
            Err(_) => KeyResponse::Denied(DenyReason::Malformed),
        };
        let noc = self.noc.borrow();
        ctx.reply(DataPacket::signed(interest.name().clone(), response.to_bytes(), 0, noc.identity()));
    }
}

