//! Binary encoding of engine values; see [`crate::codec`] for the layout rules.

use std::collections::BTreeMap;

use super::engine::{
    CiphertextHeader, DecryptionKey, EncryptedObject, Mode, PublicParams, SealedBody,
    WrappedShare, NONCE_LEN,
};
use super::field::{field_prime, Scalar};
use super::AbeError;
use crate::codec::{Reader, Writer};
use crate::policy::{Attribute, AttributeSet, AttributeValue, PolicyTree, TreeNode};

pub use crate::codec::VERSION;

pub const KIND_PARAMS: u8 = 0x01;
pub const KIND_KEY: u8 = 0x02;
pub const KIND_OBJECT: u8 = 0x03;
pub const KIND_HEADER: u8 = 0x04;
pub const KIND_BODY: u8 = 0x07;

fn read_scalar(r: &mut Reader<'_>) -> Result<Scalar, AbeError> {
    Scalar::from_le_bytes(&r.fixed::<32>()?).ok_or(AbeError::Malformed("non-canonical field element"))
}

impl PublicParams {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::blob(KIND_PARAMS);
        w.bytes(&self.params_id);
        w.bytes(&field_prime().to_bytes_le());
        w.name(&self.pubkey_name);
        w.str(&self.suite);
        w.finish()
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self, AbeError> {
        let mut r = Reader::blob(buf, KIND_PARAMS)?;
        let params_id = r.fixed::<32>()?;
        if r.bytes()? != field_prime().to_bytes_le().as_slice() {
            return Err(AbeError::Malformed("unexpected field prime"));
        }
        let pubkey_name = r.name()?;
        let suite = r.str()?.to_string();
        r.end()?;
        Ok(PublicParams {
            params_id,
            pubkey_name,
            suite,
        })
    }
}

fn write_attrs(w: &mut Writer, attrs: &AttributeSet) {
    w.count(attrs.len());
    for a in attrs {
        w.str(a.name());
        match a.value() {
            AttributeValue::Str(s) => {
                w.u8(0);
                w.str(s);
            }
            AttributeValue::Int { value, width } => {
                w.u8(1);
                w.u64(*value);
                w.u32(*width);
            }
        }
    }
}

fn read_attrs(r: &mut Reader<'_>) -> Result<AttributeSet, AbeError> {
    let n = r.count()?;
    let mut set = AttributeSet::new();
    for _ in 0..n {
        let name = r.str()?.to_string();
        let attr = match r.u8()? {
            0 => Attribute::string(&name, r.str()?)?,
            1 => {
                let value = r.u64()?;
                Attribute::int_with_width(&name, value, r.u32()?)?
            }
            _ => return Err(AbeError::Malformed("unknown attribute tag")),
        };
        if attr.name() != name {
            return Err(AbeError::Malformed("non-canonical attribute name"));
        }
        set.insert(attr)?;
    }
    Ok(set)
}

impl DecryptionKey {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::blob(KIND_KEY);
        w.bytes(&self.params_id);
        w.name(&self.holder);
        w.u64(self.epoch);
        w.u64(self.issued_at);
        write_attrs(&mut w, &self.attrs);
        w.count(self.secrets.len());
        for (attr, secret) in &self.secrets {
            w.str(attr);
            w.bytes(&secret.to_le_bytes());
        }
        w.finish()
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self, AbeError> {
        let mut r = Reader::blob(buf, KIND_KEY)?;
        let params_id = r.fixed::<32>()?;
        let holder = r.name()?;
        let epoch = r.u64()?;
        let issued_at = r.u64()?;
        let attrs = read_attrs(&mut r)?;
        let n = r.count()?;
        let mut secrets = BTreeMap::new();
        for _ in 0..n {
            let attr = r.str()?.to_string();
            secrets.insert(attr, read_scalar(&mut r)?);
        }
        r.end()?;
        if secrets.keys().cloned().collect::<std::collections::BTreeSet<_>>()
            != attrs.canonical_strings()
        {
            return Err(AbeError::Malformed("secrets do not match attributes"));
        }
        Ok(DecryptionKey {
            holder,
            params_id,
            attrs,
            secrets,
            epoch,
            issued_at,
        })
    }
}

fn write_tree(w: &mut Writer, tree: &PolicyTree) {
    w.count(tree.len());
    for node in tree.nodes() {
        match node {
            TreeNode::Gate {
                threshold,
                children,
            } => {
                w.u8(0);
                w.count(*threshold);
                w.count(children.len());
                for &c in children {
                    w.count(c);
                }
            }
            TreeNode::Leaf { attribute } => {
                w.u8(1);
                w.str(attribute);
            }
        }
    }
}

fn read_tree(r: &mut Reader<'_>) -> Result<PolicyTree, AbeError> {
    let n = r.count()?;
    let mut nodes = Vec::with_capacity(n);
    for _ in 0..n {
        nodes.push(match r.u8()? {
            0 => {
                let threshold = r.u32()? as usize;
                let k = r.count()?;
                let children = (0..k)
                    .map(|_| r.u32().map(|c| c as usize))
                    .collect::<Result<_, _>>()?;
                TreeNode::Gate {
                    threshold,
                    children,
                }
            }
            1 => TreeNode::Leaf {
                attribute: r.str()?.to_string(),
            },
            _ => return Err(AbeError::Malformed("unknown tree node tag")),
        });
    }
    Ok(PolicyTree::from_nodes(nodes)?)
}

impl CiphertextHeader {
    pub(crate) fn write(&self, w: &mut Writer) {
        w.bytes(&self.params_id);
        w.u8(match self.mode {
            Mode::Direct => 0,
            Mode::Hybrid => 1,
        });
        w.u64(self.epoch);
        w.str(&self.policy_text);
        w.count(self.widths.len());
        for (name, width) in &self.widths {
            w.str(name);
            w.u32(*width);
        }
        write_tree(w, &self.tree);
        w.count(self.wrapped_shares.len());
        for (index, share) in &self.wrapped_shares {
            w.count(*index);
            w.bytes(&share.nonce);
            w.bytes(&share.ciphertext);
        }
    }

    pub(crate) fn read(r: &mut Reader<'_>) -> Result<Self, AbeError> {
        let params_id = r.fixed::<32>()?;
        let mode = match r.u8()? {
            0 => Mode::Direct,
            1 => Mode::Hybrid,
            _ => return Err(AbeError::Malformed("unknown mode")),
        };
        let epoch = r.u64()?;
        let policy_text = r.str()?.to_string();
        let n = r.count()?;
        let mut widths = BTreeMap::new();
        for _ in 0..n {
            let name = r.str()?.to_string();
            widths.insert(name, r.u32()?);
        }
        let tree = read_tree(r)?;
        let n = r.count()?;
        let mut wrapped_shares = BTreeMap::new();
        for _ in 0..n {
            let index = r.u32()? as usize;
            let nonce = r.fixed::<NONCE_LEN>()?;
            let ciphertext = r.bytes()?.to_vec();
            wrapped_shares.insert(index, WrappedShare { nonce, ciphertext });
        }
        let header = CiphertextHeader {
            params_id,
            policy_text,
            widths,
            tree,
            wrapped_shares,
            mode,
            epoch,
        };
        header.check_consistency()?;
        Ok(header)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::blob(KIND_HEADER);
        self.write(&mut w);
        w.finish()
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self, AbeError> {
        let mut r = Reader::blob(buf, KIND_HEADER)?;
        let header = Self::read(&mut r)?;
        r.end()?;
        Ok(header)
    }
}

impl SealedBody {
    pub(crate) fn write(&self, w: &mut Writer) {
        w.bytes(&self.nonce);
        w.bytes(&self.ciphertext);
    }

    pub(crate) fn read(r: &mut Reader<'_>) -> Result<Self, AbeError> {
        let nonce = r.fixed::<NONCE_LEN>()?;
        let ciphertext = r.bytes()?.to_vec();
        Ok(SealedBody { nonce, ciphertext })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::blob(KIND_BODY);
        self.write(&mut w);
        w.finish()
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self, AbeError> {
        let mut r = Reader::blob(buf, KIND_BODY)?;
        let body = Self::read(&mut r)?;
        r.end()?;
        Ok(body)
    }
}

impl EncryptedObject {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::blob(KIND_OBJECT);
        self.header.write(&mut w);
        self.body.write(&mut w);
        w.finish()
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self, AbeError> {
        let mut r = Reader::blob(buf, KIND_OBJECT)?;
        let header = CiphertextHeader::read(&mut r)?;
        let body = SealedBody::read(&mut r)?;
        r.end()?;
        Ok(EncryptedObject { header, body })
    }
}
