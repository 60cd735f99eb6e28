//! Attribute policies: parsing, printing, evaluation and compilation into
//! threshold trees.

mod ast;
mod attribute;
mod compile;
pub mod date;

pub use ast::{evaluate, parse_policy, print_policy, CmpOp, PolicyAst};
pub use attribute::{
    bit_attribute_name, bit_leaf, materialize_all, materialize_numeric, Attribute,
    AttributeSet, AttributeValue, DEFAULT_WIDTH, MAX_WIDTH,
};
pub use compile::{compile_policy, PolicyTree, TreeNode};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PolicyError {
    #[error("syntax error at byte {position}: expected {expected}")]
    Syntax {
        position: usize,
        expected: &'static str,
    },
    #[error("empty policy")]
    EmptyPolicy,
    #[error("value {value} of {name:?} does not fit in {width} bits")]
    WidthOverflow { name: String, value: u64, width: u32 },
    #[error("invalid attribute: {0}")]
    InvalidAttribute(String),
    #[error("duplicate attribute {0:?}")]
    DuplicateAttribute(String),
    #[error("invalid policy structure: {0}")]
    InvalidAst(&'static str),
}

/// Serde adapter that stores a policy as its canonical text.
pub mod as_text {
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    use super::{parse_policy, PolicyAst};

    pub fn serialize<S: Serializer>(ast: &PolicyAst, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&ast.to_string())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<PolicyAst, D::Error> {
        let text = String::deserialize(d)?;
        parse_policy(&text).map_err(D::Error::custom)
    }
}
