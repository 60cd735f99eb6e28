use chacha20poly1305::aead::{Aead, KeyInit, Payload};
use chacha20poly1305::{ChaCha20Poly1305, Key, Nonce};
use hkdf::Hkdf;
use rand::{CryptoRng, RngCore};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use x25519_dalek::{PublicKey, StaticSecret};

use crate::codec::{Reader, Writer};
use crate::naming::{Component, Name};
use crate::ndn_sim::Identity;

use super::LedgerError;

pub const PUB_KEY_COMPONENT: &str = "pub_key";
const KIND_SEALED: u8 = 0x05;
const SEAL_INFO: &[u8] = b"aabac/key-delivery";

/// Public half of a user's credentials, as registered at the local ledger.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserPublicKey {
    #[serde(with = "hex::serde")]
    pub verify: [u8; 32],
    #[serde(with = "hex::serde")]
    pub encrypt: [u8; 32],
}

impl UserPublicKey {
    pub fn verifying_key(&self) -> Result<ed25519_dalek::VerifyingKey, LedgerError> {
        ed25519_dalek::VerifyingKey::from_bytes(&self.verify)
            .map_err(|_| LedgerError::Malformed("invalid verification key".into()))
    }
}

/// A user's signing and key-delivery keys. The signing identity is named
/// `<user>/pub_key`.
#[derive(Clone)]
pub struct UserCredentials {
    user: Name,
    identity: Identity,
    encryption: StaticSecret,
}

impl std::fmt::Debug for UserCredentials {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("UserCredentials").field("user", &self.user).finish_non_exhaustive()
    }
}

fn derive(seed: &[u8; 32], label: &[u8]) -> [u8; 32] {
    Sha256::new().chain_update(label).chain_update(seed).finalize().into()
}

pub fn key_name_for(user: &Name) -> Name {
    user.child(Component::plain(PUB_KEY_COMPONENT))
}

/// `/tntech/alice/pub_key` → `/tntech/alice`. Names without the trailing
/// `pub_key` component denote the user directly.
pub fn user_of_key_name(key_name: &Name) -> Name {
    match key_name.components().last() {
        Some(Component::Plain(p)) if p == PUB_KEY_COMPONENT && key_name.len() > 1 => {
            key_name.prefix(key_name.len() - 1).expect("non-empty prefix")
        }
        _ => key_name.clone(),
    }
}

impl UserCredentials {
    pub fn from_seed(user: Name, seed: [u8; 32]) -> Self {
        let identity = Identity::from_seed(key_name_for(&user), derive(&seed, b"aabac/user-sign"));
        let encryption = StaticSecret::from(derive(&seed, b"aabac/user-encrypt"));
        UserCredentials { user, identity, encryption }
    }

    pub fn user(&self) -> &Name {
        &self.user
    }

    pub fn key_name(&self) -> &Name {
        self.identity.name()
    }

    pub fn identity(&self) -> &Identity {
        &self.identity
    }

    pub fn public(&self) -> UserPublicKey {
        UserPublicKey {
            verify: self.identity.verifying_key().to_bytes(),
            encrypt: PublicKey::from(&self.encryption).to_bytes(),
        }
    }

    pub fn sign(&self, msg: &[u8]) -> [u8; 64] {
        self.identity.sign(msg)
    }

    pub fn open(&self, sealed: &[u8]) -> Result<Vec<u8>, LedgerError> {
        open_sealed(&self.encryption, sealed)
    }
}

fn delivery_cipher(shared: &[u8; 32], eph: &[u8; 32], recipient: &[u8; 32]) -> ChaCha20Poly1305 {
    let mut okm = [0u8; 32];
    Hkdf::<Sha256>::new(Some(eph), shared)
        .expand_multi_info(&[SEAL_INFO, recipient], &mut okm)
        .expect("32 bytes is a valid HKDF length");
    ChaCha20Poly1305::new(Key::from_slice(&okm))
}

/// Encrypts `plaintext` to an X25519 public key with an ephemeral sender key.
pub fn seal_to<R: RngCore + CryptoRng + ?Sized>(recipient: &[u8; 32], plaintext: &[u8], rng: &mut R) -> Vec<u8> {
    let mut eph_bytes = [0u8; 32];
    rng.fill_bytes(&mut eph_bytes);
    let eph = StaticSecret::from(eph_bytes);
    let eph_pub = PublicKey::from(&eph).to_bytes();
    let shared = eph.diffie_hellman(&PublicKey::from(*recipient)).to_bytes();
    let mut nonce = [0u8; 12];
    rng.fill_bytes(&mut nonce);
    let ct = delivery_cipher(&shared, &eph_pub, recipient)
        .encrypt(Nonce::from_slice(&nonce), Payload { msg: plaintext, aad: &eph_pub })
        .expect("in-memory AEAD encryption cannot fail");
    let mut w = Writer::blob(KIND_SEALED);
    w.bytes(&eph_pub);
    w.bytes(&nonce);
    w.bytes(&ct);
    w.finish()
}

pub fn open_sealed(secret: &StaticSecret, sealed: &[u8]) -> Result<Vec<u8>, LedgerError> {
    let mut r = Reader::blob(sealed, KIND_SEALED)?;
    let eph_pub: [u8; 32] = r.fixed()?;
    let nonce: [u8; 12] = r.fixed()?;
    let ct = r.bytes()?;
    r.end()?;
    let recipient = PublicKey::from(secret).to_bytes();
    let shared = secret.diffie_hellman(&PublicKey::from(eph_pub)).to_bytes();
    delivery_cipher(&shared, &eph_pub, &recipient)
        .decrypt(Nonce::from_slice(&nonce), Payload { msg: ct, aad: &eph_pub })
        .map_err(|_| LedgerError::DeliveryFailed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::name;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn sealed_blob_opens_only_for_recipient() {
        let alice = UserCredentials::from_seed(name!("/tntech/alice"), [1; 32]);
        let eve = UserCredentials::from_seed(name!("/tntech/eve"), [2; 32]);
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        let blob = seal_to(&alice.public().encrypt, b"key bytes", &mut rng);
        assert_eq!(alice.open(&blob).unwrap(), b"key bytes");
        assert_eq!(eve.open(&blob), Err(LedgerError::DeliveryFailed));
        let mut bad = blob.clone();
        *bad.last_mut().unwrap() ^= 1;
        assert_eq!(alice.open(&bad), Err(LedgerError::DeliveryFailed));
    }

    #[test]
    fn key_names() {
        let alice = UserCredentials::from_seed(name!("/tntech/alice"), [1; 32]);
        assert_eq!(alice.key_name(), &name!("/tntech/alice/pub_key"));
        assert_eq!(user_of_key_name(alice.key_name()), name!("/tntech/alice"));
        assert_eq!(user_of_key_name(&name!("/pub_key")), name!("/pub_key"));
    }

    #[test]
    fn public_key_json_is_hex() {
        let p = UserCredentials::from_seed(name!("/u"), [9; 32]).public();
        let json = serde_json::to_string(&p).unwrap();
        assert!(json.contains(&hex::encode(p.verify)));
        assert_eq!(serde_json::from_str::<UserPublicKey>(&json).unwrap(), p);
    }
}
