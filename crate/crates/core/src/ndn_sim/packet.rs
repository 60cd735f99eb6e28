use std::collections::BTreeMap;

use ed25519_dalek::{Signature, Signer, SigningKey, Verifier, VerifyingKey};
use serde::{Deserialize, Serialize};

use crate::codec::{CodecError, Reader, Writer};
use crate::naming::Name;

use super::SimError;

pub const DEFAULT_LIFETIME_MS: u64 = 4000;
const KIND_DATA: u8 = 0x10;
const SIG_CONTEXT: &[u8] = b"aabac/data-packet";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Interest {
    name: Name,
    nonce: [u8; 8],
    lifetime_ms: u64,
}

impl Interest {
    pub fn new(name: Name, nonce: [u8; 8], lifetime_ms: u64) -> Result<Self, SimError> {
        if lifetime_ms == 0 {
            return Err(SimError::InvalidInterest("lifetime must be positive"));
        }
        Ok(Interest { name, nonce, lifetime_ms })
    }

    pub fn name(&self) -> &Name {
        &self.name
    }

    pub fn nonce(&self) -> [u8; 8] {
        self.nonce
    }

    pub fn lifetime_ms(&self) -> u64 {
        self.lifetime_ms
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DataPacket {
    pub name: Name,
    pub payload: Vec<u8>,
    pub freshness_ms: u64,
    pub signer: Name,
    pub signature: Vec<u8>,
}

impl DataPacket {
    /// Builds and signs a packet in one step.
    pub fn signed(name: Name, payload: Vec<u8>, freshness_ms: u64, identity: &Identity) -> Self {
        let mut p = DataPacket {
            name,
            payload,
            freshness_ms,
            signer: identity.name.clone(),
            signature: Vec::new(),
        };
        sign_packet(&mut p, identity);
        p
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::blob(KIND_DATA);
        w.name(&self.name);
        w.bytes(&self.payload);
        w.u64(self.freshness_ms);
        w.name(&self.signer);
        w.bytes(&self.signature);
        w.finish()
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self, CodecError> {
        let mut r = Reader::blob(buf, KIND_DATA)?;
        let p = DataPacket {
            name: r.name()?,
            payload: r.bytes()?.to_vec(),
            freshness_ms: r.u64()?,
            signer: r.name()?,
            signature: r.bytes()?.to_vec(),
        };
        r.end()?;
        Ok(p)
    }
}

/// A named signing key.
#[derive(Clone)]
pub struct Identity {
    name: Name,
    key: SigningKey,
}

impl std::fmt::Debug for Identity {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Identity").field("name", &self.name).finish_non_exhaustive()
    }
}

impl Identity {
    pub fn from_seed(name: Name, seed: [u8; 32]) -> Self {
        Identity { name, key: SigningKey::from_bytes(&seed) }
    }

    pub fn name(&self) -> &Name {
        &self.name
    }

    pub fn verifying_key(&self) -> VerifyingKey {
        self.key.verifying_key()
    }

    pub fn seed(&self) -> [u8; 32] {
        self.key.to_bytes()
    }

    pub fn sign(&self, msg: &[u8]) -> [u8; 64] {
        self.key.sign(msg).to_bytes()
    }
}

/// Public keys of trusted signers, keyed by signer name.
#[derive(Debug, Clone, Default)]
pub struct TrustStore {
    keys: BTreeMap<Name, VerifyingKey>,
}

impl TrustStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn trust(&mut self, signer: Name, key: VerifyingKey) {
        self.keys.insert(signer, key);
    }

    pub fn trust_identity(&mut self, identity: &Identity) {
        self.trust(identity.name.clone(), identity.verifying_key());
    }

    pub fn get(&self, signer: &Name) -> Option<&VerifyingKey> {
        self.keys.get(signer)
    }

    pub fn verify(&self, signer: &Name, msg: &[u8], signature: &[u8]) -> Result<bool, SimError> {
        let key = self.get(signer).ok_or_else(|| SimError::UnknownSigner(signer.clone()))?;
        let Ok(sig) = Signature::from_slice(signature) else {
            return Ok(false);
        };
        Ok(key.verify(msg, &sig).is_ok())
    }
}

fn signed_bytes(p: &DataPacket) -> Vec<u8> {
    let mut w = Writer::new();
    w.bytes(SIG_CONTEXT);
    w.name(&p.name);
    w.bytes(&p.payload);
    w.u64(p.freshness_ms);
    w.name(&p.signer);
    w.finish()
}

pub fn sign_packet(packet: &mut DataPacket, identity: &Identity) {
    packet.signer = identity.name.clone();
    packet.signature = identity.sign(&signed_bytes(packet)).to_vec();
}

pub fn verify_packet(packet: &DataPacket, trust: &TrustStore) -> Result<bool, SimError> {
    trust.verify(&packet.signer, &signed_bytes(packet), &packet.signature)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::name;

    fn id() -> Identity {
        Identity::from_seed(name!("/repo"), [7; 32])
    }

    fn trust() -> TrustStore {
        let mut t = TrustStore::new();
        t.trust_identity(&id());
        t
    }

    #[test]
    fn sign_then_verify() {
        let p = DataPacket::signed(name!("/genomics/x"), b"hello".to_vec(), 100, &id());
        assert_eq!(verify_packet(&p, &trust()), Ok(true));
    }

    #[test]
    fn every_payload_bit_flip_is_detected() {
        let p = DataPacket::signed(name!("/a"), b"xy".to_vec(), 100, &id());
        for bit in 0..16 {
            let mut q = p.clone();
            q.payload[bit / 8] ^= 1 << (bit % 8);
            assert_eq!(verify_packet(&q, &trust()), Ok(false));
        }
        let mut q = p.clone();
        q.freshness_ms += 1;
        assert_eq!(verify_packet(&q, &trust()), Ok(false));
        let mut q = p;
        q.name = name!("/b");
        assert_eq!(verify_packet(&q, &trust()), Ok(false));
    }

    #[test]
    fn unknown_signer() {
        let p = DataPacket::signed(name!("/a"), vec![], 1, &id());
        assert_eq!(
            verify_packet(&p, &TrustStore::new()),
            Err(SimError::UnknownSigner(name!("/repo")))
        );
    }

    #[test]
    fn garbage_signature_is_invalid_not_error() {
        let mut p = DataPacket::signed(name!("/a"), vec![], 1, &id());
        p.signature.truncate(3);
        assert_eq!(verify_packet(&p, &trust()), Ok(false));
    }

    #[test]
    fn wire_round_trip() {
        let p = DataPacket::signed(name!("/a/b"), vec![1, 2, 3], 9, &id());
        assert_eq!(DataPacket::from_bytes(&p.to_bytes()).unwrap(), p);
        assert!(DataPacket::from_bytes(&p.to_bytes()[..10]).is_err());
    }

    #[test]
    fn zero_lifetime_rejected() {
        assert!(Interest::new(name!("/a"), [0; 8], 0).is_err());
    }
}
