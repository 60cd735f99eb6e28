use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use chacha20poly1305::aead::{Aead, KeyInit, Payload};
use chacha20poly1305::{ChaCha20Poly1305, Key, Nonce};
use hkdf::Hkdf;
use hmac::{Hmac, Mac};
use rand::{CryptoRng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use sha2::Sha256;

use super::field::Scalar;
use super::sharing::{reconstruct, share_over_tree};
use super::AbeError;
use crate::naming::{Component, Name};
use crate::policy::{
    compile_policy, materialize_all, parse_policy, Attribute, AttributeSet, CmpOp, PolicyAst,
    PolicyTree, DEFAULT_WIDTH,
};

/// Name of the numeric attribute that carries the key / ciphertext epoch.
pub const EPOCH_ATTRIBUTE: &str = "epoch";

/// Primitive suite of the reference engine, recorded in [`PublicParams`].
pub const SUITE: &str = "prf=HMAC-SHA256;kdf=HKDF-SHA256;aead=ChaCha20-Poly1305;field=2^255-19";

pub const NONCE_LEN: usize = 12;

const LEAF_INFO: &[u8] = b"aabac/leaf-wrap";
const CONTENT_INFO: &[u8] = b"aabac/content";

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PublicParams {
    pub params_id: [u8; 32],
    pub pubkey_name: Name,
    pub suite: String,
}

impl PublicParams {
    pub fn field_prime(&self) -> &'static num_bigint::BigUint {
        super::field::field_prime()
    }
}

/// The NOC's secret. Has no serde implementation and a redacted `Debug`.
#[derive(Clone, PartialEq, Eq)]
pub struct MasterSecret {
    seed: [u8; 32],
    params_id: [u8; 32],
}

impl fmt::Debug for MasterSecret {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MasterSecret")
            .field("params_id", &hex::encode(self.params_id))
            .finish_non_exhaustive()
    }
}

impl MasterSecret {
    pub fn params_id(&self) -> [u8; 32] {
        self.params_id
    }

    /// Raw bytes for the NOC's private storage.
    pub fn export_secret_bytes(&self) -> [u8; 64] {
        let mut out = [0u8; 64];
        out[..32].copy_from_slice(&self.seed);
        out[32..].copy_from_slice(&self.params_id);
        out
    }

    pub fn import_secret_bytes(bytes: &[u8; 64]) -> Self {
        let mut seed = [0u8; 32];
        let mut params_id = [0u8; 32];
        seed.copy_from_slice(&bytes[..32]);
        params_id.copy_from_slice(&bytes[32..]);
        MasterSecret { seed, params_id }
    }

    #[cfg(test)]
    pub(crate) fn seed_bytes(&self) -> [u8; 32] {
        self.seed
    }
}

/// Source of per-attribute secrets used when encrypting.
pub trait AttributeSecrets {
    fn params_id(&self) -> [u8; 32];
    fn attribute_secret(&self, attr: &str) -> Scalar;
}

impl AttributeSecrets for MasterSecret {
    fn params_id(&self) -> [u8; 32] {
        self.params_id
    }

    fn attribute_secret(&self, attr: &str) -> Scalar {
        attribute_secret(self, attr)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecryptionKey {
    pub holder: Name,
    pub params_id: [u8; 32],
    pub attrs: AttributeSet,
    pub secrets: BTreeMap<String, Scalar>,
    pub epoch: u64,
    pub issued_at: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Direct,
    Hybrid,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct WrappedShare {
    pub nonce: [u8; NONCE_LEN],
    pub ciphertext: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CiphertextHeader {
    pub params_id: [u8; 32],
    /// Canonical text of the full policy, epoch clause included.
    pub policy_text: String,
    /// Bit widths of numeric attributes, needed to recompile `policy_text`.
    pub widths: BTreeMap<String, u32>,
    pub tree: PolicyTree,
    pub wrapped_shares: BTreeMap<usize, WrappedShare>,
    pub mode: Mode,
    pub epoch: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SealedBody {
    pub nonce: [u8; NONCE_LEN],
    pub ciphertext: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct EncryptedObject {
    pub header: CiphertextHeader,
    pub body: SealedBody,
}

/// A policy plus the bit widths of its numeric attributes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CiphertextPolicy {
    pub ast: PolicyAst,
    pub widths: BTreeMap<String, u32>,
}

impl CiphertextPolicy {
    pub fn new(ast: PolicyAst) -> Self {
        CiphertextPolicy {
            ast,
            widths: BTreeMap::new(),
        }
    }

    pub fn with_width(mut self, name: &str, width: u32) -> Self {
        self.widths.insert(name.to_string(), width);
        self
    }
}

impl From<PolicyAst> for CiphertextPolicy {
    fn from(ast: PolicyAst) -> Self {
        CiphertextPolicy::new(ast)
    }
}

/// The random secret at the root of a header; in hybrid mode it protects
/// many segment bodies.
#[derive(Clone, PartialEq, Eq)]
pub struct ContentKey {
    params_id: [u8; 32],
    epoch: u64,
    key: [u8; 32],
}

impl fmt::Debug for ContentKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ContentKey")
            .field("epoch", &self.epoch)
            .finish_non_exhaustive()
    }
}

fn aead(key: &[u8; 32]) -> ChaCha20Poly1305 {
    ChaCha20Poly1305::new(Key::from_slice(key))
}

fn hkdf(salt: &[u8], ikm: &[u8], info: &[&[u8]]) -> [u8; 32] {
    let hk = Hkdf::<Sha256>::new(Some(salt), ikm);
    let info: Vec<u8> = info.concat();
    let mut out = [0u8; 32];
    hk.expand(&info, &mut out).expect("32 bytes is a valid HKDF length");
    out
}

fn body_aad(params_id: &[u8; 32], epoch: u64) -> Vec<u8> {
    let mut aad = params_id.to_vec();
    aad.extend_from_slice(&epoch.to_le_bytes());
    aad
}

impl ContentKey {
    fn from_root(params_id: [u8; 32], epoch: u64, root: &Scalar) -> Self {
        ContentKey {
            params_id,
            epoch,
            key: hkdf(&params_id, &root.to_le_bytes(), &[CONTENT_INFO]),
        }
    }

    pub fn epoch(&self) -> u64 {
        self.epoch
    }

    pub fn params_id(&self) -> [u8; 32] {
        self.params_id
    }

    pub fn seal<R: RngCore + CryptoRng + ?Sized>(&self, payload: &[u8], rng: &mut R) -> SealedBody {
        let mut nonce = [0u8; NONCE_LEN];
        rng.fill_bytes(&mut nonce);
        let aad = body_aad(&self.params_id, self.epoch);
        let ciphertext = aead(&self.key)
            .encrypt(
                Nonce::from_slice(&nonce),
                Payload {
                    msg: payload,
                    aad: &aad,
                },
            )
            .expect("in-memory AEAD encryption cannot fail");
        SealedBody { nonce, ciphertext }
    }

    pub fn open(&self, body: &SealedBody) -> Result<Vec<u8>, AbeError> {
        let aad = body_aad(&self.params_id, self.epoch);
        aead(&self.key)
            .decrypt(
                Nonce::from_slice(&body.nonce),
                Payload {
                    msg: &body.ciphertext,
                    aad: &aad,
                },
            )
            .map_err(|_| AbeError::IntegrityError)
    }
}

/// Derives public parameters and the master secret from a seed.
pub fn setup(rng_seed: [u8; 32]) -> (PublicParams, MasterSecret) {
    setup_with_prefix(rng_seed, &crate::name!("/genomics/pub_key"))
}

/// Like [`setup`], publishing the parameters under
/// `prefix/sequence=<random number>`.
pub fn setup_with_prefix(rng_seed: [u8; 32], prefix: &Name) -> (PublicParams, MasterSecret) {
    let mut rng = ChaCha20Rng::from_seed(rng_seed);
    let mut seed = [0u8; 32];
    let mut params_id = [0u8; 32];
    rng.fill_bytes(&mut seed);
    rng.fill_bytes(&mut params_id);
    let sequence = u32::from_le_bytes(params_id[..4].try_into().unwrap());
    let params = PublicParams {
        params_id,
        pubkey_name: prefix.child(Component::annotation("sequence", sequence.to_string())),
        suite: SUITE.to_string(),
    };
    (params, MasterSecret { seed, params_id })
}

/// Keyed PRF of the master seed and a canonical attribute string.
pub fn attribute_secret(master: &MasterSecret, attr: &str) -> Scalar {
    let mut wide = [0u8; 64];
    for (block, out) in wide.chunks_mut(32).enumerate() {
        let mut mac =
            <Hmac<Sha256> as Mac>::new_from_slice(&master.seed).expect("HMAC accepts any key length");
        mac.update(b"aabac/attr/");
        mac.update(&[block as u8]);
        mac.update(attr.as_bytes());
        out.copy_from_slice(&mac.finalize().into_bytes());
    }
    Scalar::from_bytes_wide(&wide)
}

/// Issues a key for `attrs` at `epoch`.
///
/// The epoch is added as a 32-bit numeric attribute, every numeric attribute
/// is expanded into bit attributes, and each canonical attribute string gets
/// its secret.
pub fn keygen(
    master: &MasterSecret,
    holder: &Name,
    attrs: &AttributeSet,
    epoch: u64,
    issued_at: u64,
) -> Result<DecryptionKey, AbeError> {
    if attrs.get(EPOCH_ATTRIBUTE).is_some() {
        return Err(AbeError::ReservedAttribute(EPOCH_ATTRIBUTE));
    }
    let mut with_epoch = attrs.clone();
    with_epoch.insert(Attribute::int_with_width(EPOCH_ATTRIBUTE, epoch, DEFAULT_WIDTH)?)?;
    let attrs = materialize_all(&with_epoch)?;
    let secrets = attrs
        .iter()
        .map(|a| {
            let c = a.canonical();
            let s = attribute_secret(master, &c);
            (c, s)
        })
        .collect();
    Ok(DecryptionKey {
        holder: holder.clone(),
        params_id: master.params_id,
        attrs,
        secrets,
        epoch,
        issued_at,
    })
}

/// Conjoins `epoch >= epoch` to the policy.
pub fn epoch_policy(policy: &PolicyAst, epoch: u64) -> PolicyAst {
    PolicyAst::And(vec![
        policy.clone(),
        PolicyAst::cmp(EPOCH_ATTRIBUTE, CmpOp::Ge, epoch),
    ])
}

fn leaf_key(secret: &Scalar, nonce: &[u8; NONCE_LEN], params_id: &[u8; 32]) -> [u8; 32] {
    hkdf(nonce, &secret.to_le_bytes(), &[LEAF_INFO, params_id])
}

fn leaf_aad(index: usize) -> [u8; 4] {
    (index as u32).to_le_bytes()
}

/// Builds a header for `policy` at `epoch` and returns it with the content
/// key it protects.
pub fn wrap_content_key<R: RngCore + CryptoRng + ?Sized>(
    params: &PublicParams,
    oracle: &dyn AttributeSecrets,
    policy: &CiphertextPolicy,
    epoch: u64,
    mode: Mode,
    rng: &mut R,
) -> Result<(ContentKey, CiphertextHeader), AbeError> {
    if oracle.params_id() != params.params_id {
        return Err(AbeError::ParamsMismatch);
    }
    if policy.ast.attribute_names().contains(EPOCH_ATTRIBUTE)
        || policy.widths.contains_key(EPOCH_ATTRIBUTE)
    {
        return Err(AbeError::ReservedAttribute(EPOCH_ATTRIBUTE));
    }
    let full = epoch_policy(&policy.ast, epoch);
    let mut widths = policy.widths.clone();
    widths.retain(|name, _| full.attribute_names().contains(name));
    let tree = compile_policy(&full, &widths)?;
    let root = Scalar::random(rng);
    let shares = share_over_tree(&tree, &root, rng)?;
    let mut wrapped_shares = BTreeMap::new();
    for (index, attr) in tree.leaves() {
        let mut nonce = [0u8; NONCE_LEN];
        rng.fill_bytes(&mut nonce);
        let key = leaf_key(&oracle.attribute_secret(attr), &nonce, &params.params_id);
        let ciphertext = aead(&key)
            .encrypt(
                Nonce::from_slice(&nonce),
                Payload {
                    msg: &shares[&index].to_le_bytes(),
                    aad: &leaf_aad(index),
                },
            )
            .expect("in-memory AEAD encryption cannot fail");
        wrapped_shares.insert(index, WrappedShare { nonce, ciphertext });
    }
    let header = CiphertextHeader {
        params_id: params.params_id,
        policy_text: full.to_string(),
        widths,
        tree,
        wrapped_shares,
        mode,
        epoch,
    };
    Ok((ContentKey::from_root(params.params_id, epoch, &root), header))
}

/// Recovers the content key of a header, or fails with
/// [`AbeError::PolicyNotSatisfied`].
pub fn unwrap_content_key(
    key: &DecryptionKey,
    header: &CiphertextHeader,
) -> Result<ContentKey, AbeError> {
    if key.params_id != header.params_id {
        return Err(AbeError::ParamsMismatch);
    }
    let mut leaves = BTreeMap::new();
    for (index, attr) in header.tree.leaves() {
        let (Some(secret), Some(wrapped)) =
            (key.secrets.get(attr), header.wrapped_shares.get(&index))
        else {
            continue;
        };
        let k = leaf_key(secret, &wrapped.nonce, &header.params_id);
        let plain = aead(&k)
            .decrypt(
                Nonce::from_slice(&wrapped.nonce),
                Payload {
                    msg: &wrapped.ciphertext,
                    aad: &leaf_aad(index),
                },
            )
            .map_err(|_| AbeError::IntegrityError)?;
        let bytes: [u8; 32] = plain.try_into().map_err(|_| AbeError::IntegrityError)?;
        leaves.insert(index, Scalar::from_le_bytes(&bytes).ok_or(AbeError::IntegrityError)?);
    }
    let root = reconstruct(&header.tree, &leaves).ok_or(AbeError::PolicyNotSatisfied)?;
    Ok(ContentKey::from_root(header.params_id, header.epoch, &root))
}

pub fn encrypt<R: RngCore + CryptoRng + ?Sized>(
    params: &PublicParams,
    oracle: &dyn AttributeSecrets,
    policy: &CiphertextPolicy,
    payload: &[u8],
    epoch: u64,
    mode: Mode,
    rng: &mut R,
) -> Result<EncryptedObject, AbeError> {
    let (content, header) = wrap_content_key(params, oracle, policy, epoch, mode, rng)?;
    let body = content.seal(payload, rng);
    Ok(EncryptedObject { header, body })
}

pub fn decrypt(key: &DecryptionKey, obj: &EncryptedObject) -> Result<Vec<u8>, AbeError> {
    unwrap_content_key(key, &obj.header)?.open(&obj.body)
}

impl CiphertextHeader {
    /// Checks that the tree matches the policy text and every leaf has a share.
    pub fn check_consistency(&self) -> Result<(), AbeError> {
        let ast = parse_policy(&self.policy_text)?;
        if compile_policy(&ast, &self.widths)? != self.tree {
            return Err(AbeError::Malformed("tree does not match policy text"));
        }
        let leaves: BTreeSet<usize> = self.tree.leaves().map(|(i, _)| i).collect();
        let wrapped: BTreeSet<usize> = self.wrapped_shares.keys().copied().collect();
        if leaves != wrapped {
            return Err(AbeError::Malformed("wrapped shares do not cover the leaves"));
        }
        Ok(())
    }
}
