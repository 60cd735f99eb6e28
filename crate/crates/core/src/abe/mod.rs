//! Attribute-based encryption engine.
//!
//! The reference engine derives one secret per canonical attribute string from
//! the master seed, splits a random content secret down the compiled policy
//! tree with Shamir sharing, and wraps each leaf share under its attribute
//! secret. Keys holding the same attributes carry the same secrets, so keys
//! can be pooled: this engine is not collusion resistant.

mod engine;
pub mod field;
pub mod sharing;
pub mod wire;

use rand::{CryptoRng, RngCore};

pub use engine::{
    attribute_secret, decrypt, encrypt, epoch_policy, keygen, setup, setup_with_prefix,
    unwrap_content_key, wrap_content_key, AttributeSecrets, CiphertextHeader, CiphertextPolicy,
    ContentKey, DecryptionKey, EncryptedObject, MasterSecret, Mode, PublicParams, SealedBody,
    WrappedShare, EPOCH_ATTRIBUTE, NONCE_LEN, SUITE,
};
pub use field::{field_prime, Scalar};
pub use sharing::{reconstruct, share_over_tree};

use crate::naming::Name;
use crate::policy::{AttributeSet, PolicyError};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AbeError {
    #[error("key attributes do not satisfy the ciphertext policy")]
    PolicyNotSatisfied,
    #[error("authenticated decryption failed")]
    IntegrityError,
    #[error("parameters of key and ciphertext differ")]
    ParamsMismatch,
    #[error("threshold {threshold} of {children} is not supported")]
    UnsupportedThreshold { threshold: usize, children: usize },
    #[error("attribute {0:?} is reserved")]
    ReservedAttribute(&'static str),
    #[error("policy compilation failed: {0}")]
    Compile(#[from] PolicyError),
    #[error("malformed blob: {0}")]
    Malformed(&'static str),
}

impl From<crate::codec::CodecError> for AbeError {
    fn from(e: crate::codec::CodecError) -> Self {
        AbeError::Malformed(e.0)
    }
}

/// Random source accepted by engines behind `dyn`.
pub trait SecureRng: RngCore + CryptoRng {}

impl<T: RngCore + CryptoRng> SecureRng for T {}

/// The operations an attribute-based encryption scheme provides.
pub trait AbeEngine {
    fn setup(&self, rng_seed: [u8; 32]) -> (PublicParams, MasterSecret);

    fn keygen(
        &self,
        master: &MasterSecret,
        holder: &Name,
        attrs: &AttributeSet,
        epoch: u64,
        issued_at: u64,
    ) -> Result<DecryptionKey, AbeError>;

    #[allow(clippy::too_many_arguments)]
    fn encrypt(
        &self,
        params: &PublicParams,
        oracle: &dyn AttributeSecrets,
        policy: &CiphertextPolicy,
        payload: &[u8],
        epoch: u64,
        mode: Mode,
        rng: &mut dyn SecureRng,
    ) -> Result<EncryptedObject, AbeError>;

    fn decrypt(&self, key: &DecryptionKey, obj: &EncryptedObject) -> Result<Vec<u8>, AbeError>;
}

/// The shipped engine: PRF attribute secrets plus Shamir trees.
#[derive(Debug, Clone, Copy, Default)]
pub struct ReferenceEngine;

impl AbeEngine for ReferenceEngine {
    fn setup(&self, rng_seed: [u8; 32]) -> (PublicParams, MasterSecret) {
        setup(rng_seed)
    }

    fn keygen(
        &self,
        master: &MasterSecret,
        holder: &Name,
        attrs: &AttributeSet,
        epoch: u64,
        issued_at: u64,
    ) -> Result<DecryptionKey, AbeError> {
        keygen(master, holder, attrs, epoch, issued_at)
    }

    fn encrypt(
        &self,
        params: &PublicParams,
        oracle: &dyn AttributeSecrets,
        policy: &CiphertextPolicy,
        payload: &[u8],
        epoch: u64,
        mode: Mode,
        rng: &mut dyn SecureRng,
    ) -> Result<EncryptedObject, AbeError> {
        encrypt(params, oracle, policy, payload, epoch, mode, rng)
    }

    fn decrypt(&self, key: &DecryptionKey, obj: &EncryptedObject) -> Result<Vec<u8>, AbeError> {
        decrypt(key, obj)
    }
}
