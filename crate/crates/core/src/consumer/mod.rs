//! Consumer flow: fetch signed segments by name, find the local ledger from
//! the name annotations, obtain a key through it, decrypt and reassemble.
//! A key whose epoch falls behind a segment is refreshed once per object.

use std::collections::BTreeMap;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::Serialize;

use crate::abe::{unwrap_content_key, AbeError, CiphertextHeader, ContentKey, DecryptionKey, EncryptedObject, SealedBody};
use crate::ledger::{DenyReason, KeyRequest, KeyResponse, LedgerError, UserCredentials};
use crate::naming::{build_key_request_name, extract_key_locator, parse_name, Name};
use crate::ndn_sim::{base_name, segment_name, verify_packet, DataPacket, NodeId, SimError, Simulator};
use crate::policy::AttributeSet;
use crate::publisher::{CONTENT_KEY, EPOCH, METADATA_SEGMENTS, SEGMENTS};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConsumerError {
    #[error("no answer for {0}")]
    Timeout(Name),
    #[error("signature check failed for {0}")]
    SignatureInvalid(Name),
    #[error("network: {0}")]
    Network(SimError),
    #[error("key request denied: {0}")]
    RequestDenied(DenyReason),
    #[error("access denied: {0}")]
    AccessDenied(String),
    #[error("ciphertext failed authentication")]
    IntegrityError,
    #[error("malformed object: {0}")]
    Malformed(String),
}

impl From<SimError> for ConsumerError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Timeout(n) => ConsumerError::Timeout(n),
            other => ConsumerError::Network(other),
        }
    }
}

fn malformed(e: impl std::fmt::Display) -> ConsumerError {
    ConsumerError::Malformed(e.to_string())
}

/// One protocol message as seen by the consumer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ProtocolStep {
    pub t: u64,
    pub step: &'static str,
    pub name: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecryptedObject {
    pub metadata: Vec<u8>,
    pub payload: Vec<u8>,
    pub segment_epochs: Vec<u64>,
    pub key_epoch: u64,
    /// Key requests issued while decrypting this object.
    pub key_requests: u64,
}

pub struct ConsumerSession {
    creds: UserCredentials,
    claimed: AttributeSet,
    node: NodeId,
    ledger_prefix: Option<Name>,
    keys: BTreeMap<[u8; 32], DecryptionKey>,
    key_requests: u64,
    rng: ChaCha20Rng,
    steps: Vec<ProtocolStep>,
}

impl std::fmt::Debug for ConsumerSession {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ConsumerSession")
            .field("user", self.creds.user())
            .field("node", &self.node)
            .field("key_requests", &self.key_requests)
            .finish_non_exhaustive()
    }
}

struct Unit {
    epoch: u64,
    kind: UnitKind,
}

enum UnitKind {
    Direct(EncryptedObject),
    Hybrid { header_name: Name, body: SealedBody },
}

impl ConsumerSession {
    /// `claimed` is the attribute set requested from the ledger.
    pub fn new(creds: UserCredentials, claimed: AttributeSet, node: NodeId, seed: u64) -> Self {
        ConsumerSession {
            creds,
            claimed,
            node,
            ledger_prefix: None,
            keys: BTreeMap::new(),
            key_requests: 0,
            rng: ChaCha20Rng::seed_from_u64(seed),
            steps: Vec::new(),
        }
    }

    pub fn user(&self) -> &Name {
        self.creds.user()
    }

    pub fn node(&self) -> NodeId {
        self.node
    }

    pub fn ledger_prefix(&self) -> Option<&Name> {
        self.ledger_prefix.as_ref()
    }

    pub fn key_requests(&self) -> u64 {
        self.key_requests
    }

    pub fn cached_key(&self, params_id: &[u8; 32]) -> Option<&DecryptionKey> {
        self.keys.get(params_id)
    }

    /// Keeps the key if it is newer than the cached one for its parameters.
    pub fn store_key(&mut self, key: DecryptionKey) {
        match self.keys.get(&key.params_id) {
            Some(old) if old.epoch >= key.epoch => {}
            _ => {
                self.keys.insert(key.params_id, key);
            }
        }
    }

    pub fn steps(&self) -> &[ProtocolStep] {
        &self.steps
    }

    pub fn steps_json(&self) -> String {
        serde_json::to_string_pretty(&self.steps).expect("steps serialize")
    }

    fn note(&mut self, sim: &Simulator, step: &'static str, name: &Name) {
        self.steps.push(ProtocolStep { t: sim.now(), step, name: name.to_string() });
    }

    fn get(&mut self, sim: &mut Simulator, name: Name) -> Result<DataPacket, ConsumerError> {
        self.note(sim, "interest", &name);
        let packet = sim.fetch(self.node, name)?;
        if verify_packet(&packet, sim.trust()) != Ok(true) {
            return Err(ConsumerError::SignatureInvalid(packet.name));
        }
        self.note(sim, "data", &packet.name);
        Ok(packet)
    }

    /// Fetches every segment of `base`, learning the count from segment 0.
    pub fn fetch_object(&mut self, sim: &mut Simulator, base: &Name) -> Result<Vec<DataPacket>, ConsumerError> {
        let first = self.get(sim, segment_name(base, 0))?;
        let n: u64 = first
            .name
            .annotation(SEGMENTS)
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| malformed("segment 0 lacks a segment count"))?;
        let mut packets = Vec::with_capacity(n as usize);
        packets.push(first);
        for k in 1..n {
            packets.push(self.get(sim, segment_name(base, k))?);
        }
        Ok(packets)
    }

    /// Returns a cached key of at least `min_epoch`, or requests a new one
    /// from the ledger named in `data_name`.
    pub fn obtain_key(
        &mut self,
        sim: &mut Simulator,
        data_name: &Name,
        params_id: [u8; 32],
        min_epoch: u64,
    ) -> Result<DecryptionKey, ConsumerError> {
        if let Some(key) = self.keys.get(&params_id).filter(|k| k.epoch >= min_epoch) {
            return Ok(key.clone());
        }
        self.request_key(sim, data_name)
    }

    /// Always asks the ledger, caching the answer.
    pub fn request_key(&mut self, sim: &mut Simulator, data_name: &Name) -> Result<DecryptionKey, ConsumerError> {
        let ledger = extract_key_locator(data_name).map_err(malformed)?.ledger_prefix;
        self.ledger_prefix = Some(ledger.clone());
        let object = base_name(data_name).unwrap_or_else(|| data_name.clone());
        let request_name = build_key_request_name(&ledger, &object, &self.claimed, self.creds.key_name());
        let mut nonce = [0u8; 8];
        self.rng.fill_bytes(&mut nonce);
        let request = KeyRequest::sign(request_name, nonce, &self.creds);
        self.key_requests += 1;
        let packet = self.get(sim, request.to_name())?;
        match KeyResponse::from_bytes(&packet.payload).map_err(malformed)? {
            KeyResponse::Denied(reason) => Err(ConsumerError::RequestDenied(reason)),
            KeyResponse::Issued(sealed) => {
                let bytes = self.creds.open(&sealed).map_err(|e| match e {
                    LedgerError::DeliveryFailed => ConsumerError::IntegrityError,
                    other => malformed(other),
                })?;
                let key = DecryptionKey::from_bytes(&bytes).map_err(malformed)?;
                self.store_key(key.clone());
                Ok(key)
            }
        }
    }

    fn unit(packet: &DataPacket) -> Result<Unit, ConsumerError> {
        let epoch = packet
            .name
            .annotation(EPOCH)
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| malformed("segment lacks an epoch"))?;
        let kind = match packet.name.annotation(CONTENT_KEY) {
            None => UnitKind::Direct(EncryptedObject::from_bytes(&packet.payload).map_err(malformed)?),
            Some(n) => UnitKind::Hybrid {
                header_name: parse_name(n).map_err(malformed)?,
                body: SealedBody::from_bytes(&packet.payload).map_err(malformed)?,
            },
        };
        Ok(Unit { epoch, kind })
    }

    /// Decrypts verified segments, refreshing the key at most once.
    pub fn decrypt_object(
        &mut self,
        sim: &mut Simulator,
        packets: &[DataPacket],
    ) -> Result<DecryptedObject, ConsumerError> {
        let first = packets.first().ok_or_else(|| malformed("no segments"))?;
        let m: usize = first
            .name
            .annotation(METADATA_SEGMENTS)
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| malformed("segment 0 lacks a metadata count"))?;
        if m > packets.len() {
            return Err(malformed("metadata count exceeds segment count"));
        }
        let units = packets.iter().map(Self::unit).collect::<Result<Vec<_>, _>>()?;
        let mut headers: BTreeMap<Name, CiphertextHeader> = BTreeMap::new();
        for u in &units {
            if let UnitKind::Hybrid { header_name, .. } = &u.kind {
                if !headers.contains_key(header_name) {
                    let p = self.get(sim, header_name.clone())?;
                    headers.insert(header_name.clone(), CiphertextHeader::from_bytes(&p.payload).map_err(malformed)?);
                }
            }
        }
        let header_of = |u: &Unit| -> CiphertextHeader {
            match &u.kind {
                UnitKind::Direct(obj) => obj.header.clone(),
                UnitKind::Hybrid { header_name, .. } => headers[header_name].clone(),
            }
        };
        let params_id = header_of(&units[0]).params_id;
        let before = self.key_requests;
        let mut fresh = false;
        let mut key = match self.keys.get(&params_id) {
            Some(k) => k.clone(),
            None => {
                fresh = true;
                self.request_key(sim, &first.name)?
            }
        };
        let mut content_keys: BTreeMap<Name, ContentKey> = BTreeMap::new();
        let mut plain = Vec::with_capacity(units.len());
        for (u, packet) in units.iter().zip(packets) {
            if let UnitKind::Hybrid { header_name, body } = &u.kind {
                if let Some(ck) = content_keys.get(header_name) {
                    plain.push(ck.open(body).map_err(|_| ConsumerError::IntegrityError)?);
                    continue;
                }
            }
            let header = header_of(u);
            let ck = loop {
                match unwrap_content_key(&key, &header) {
                    Ok(ck) => break ck,
                    Err(AbeError::PolicyNotSatisfied) if u.epoch > key.epoch && !fresh => {
                        fresh = true;
                        self.note(sim, "refresh", &packet.name);
                        key = match self.request_key(sim, &packet.name) {
                            Ok(k) => k,
                            Err(ConsumerError::RequestDenied(r)) => {
                                return Err(ConsumerError::AccessDenied(format!("key refresh denied: {r}")))
                            }
                            Err(e) => return Err(e),
                        };
                    }
                    Err(AbeError::PolicyNotSatisfied) => {
                        return Err(ConsumerError::AccessDenied(format!(
                            "key at epoch {} does not satisfy {}",
                            key.epoch, packet.name
                        )))
                    }
                    Err(AbeError::IntegrityError) => return Err(ConsumerError::IntegrityError),
                    Err(e) => return Err(malformed(e)),
                }
            };
            let body = match &u.kind {
                UnitKind::Direct(obj) => ck.open(&obj.body),
                UnitKind::Hybrid { header_name, body } => {
                    let opened = ck.open(body);
                    content_keys.insert(header_name.clone(), ck);
                    opened
                }
            };
            plain.push(body.map_err(|_| ConsumerError::IntegrityError)?);
        }
        self.note(sim, "decrypted", &first.name);
        let payload = plain.split_off(m);
        Ok(DecryptedObject {
            metadata: plain.concat(),
            payload: payload.concat(),
            segment_epochs: units.iter().map(|u| u.epoch).collect(),
            key_epoch: key.epoch,
            key_requests: self.key_requests - before,
        })
    }

    pub fn fetch_and_decrypt(&mut self, sim: &mut Simulator, base: &Name) -> Result<DecryptedObject, ConsumerError> {
        let packets = self.fetch_object(sim, base)?;
        self.decrypt_object(sim, &packets)
    }
}
