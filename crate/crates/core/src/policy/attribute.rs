use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::PolicyError;

/// Bit width used for numeric attributes when nothing else is specified.
pub const DEFAULT_WIDTH: u32 = 32;

/// Largest supported bit width for numeric attributes.
pub const MAX_WIDTH: u32 = 64;

/// Value carried by a single attribute.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttributeValue {
    Str(String),
    Int { value: u64, width: u32 },
}

/// A named attribute, e.g. `Project=Genome1` or `epoch:int=11`.
///
/// The canonical text form is `name=value` for string attributes and
/// `name:int=value` for integers. The bit width of an integer is not part of
/// the canonical form; parsing always yields [`DEFAULT_WIDTH`].
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Attribute {
    name: String,
    value: AttributeValue,
}

/// Collapses runs of whitespace so `John  Smith` and `John Smith` coincide.
pub(crate) fn normalize(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

pub(crate) fn validate_name(name: &str) -> Result<(), PolicyError> {
    if name.is_empty() {
        return Err(PolicyError::InvalidAttribute("empty attribute name".into()));
    }
    if let Some(c) = name.chars().find(|c| matches!(c, '/' | '=' | ':')) {
        return Err(PolicyError::InvalidAttribute(format!(
            "attribute name {name:?} contains reserved character {c:?}"
        )));
    }
    Ok(())
}

pub(crate) fn validate_value(value: &str) -> Result<(), PolicyError> {
    if value.is_empty() {
        return Err(PolicyError::InvalidAttribute("empty attribute value".into()));
    }
    if let Some(c) = value.chars().find(|c| matches!(c, '/' | '=')) {
        return Err(PolicyError::InvalidAttribute(format!(
            "attribute value {value:?} contains reserved character {c:?}"
        )));
    }
    Ok(())
}

pub(crate) fn check_width(name: &str, value: u64, width: u32) -> Result<(), PolicyError> {
    if width == 0 || width > MAX_WIDTH || (width < 64 && value >> width != 0) {
        return Err(PolicyError::WidthOverflow {
            name: name.to_string(),
            value,
            width,
        });
    }
    Ok(())
}

impl Attribute {
    pub fn string(name: &str, value: &str) -> Result<Self, PolicyError> {
        let name = normalize(name);
        let value = normalize(value);
        validate_name(&name)?;
        validate_value(&value)?;
        Ok(Attribute {
            name,
            value: AttributeValue::Str(value),
        })
    }

    /// A tag attribute, stored as `name=True`.
    pub fn flag(name: &str) -> Result<Self, PolicyError> {
        Self::string(name, "True")
    }

    pub fn int(name: &str, value: u64) -> Result<Self, PolicyError> {
        Self::int_with_width(name, value, DEFAULT_WIDTH)
    }

    pub fn int_with_width(name: &str, value: u64, width: u32) -> Result<Self, PolicyError> {
        let name = normalize(name);
        validate_name(&name)?;
        check_width(&name, value, width)?;
        Ok(Attribute {
            name,
            value: AttributeValue::Int { value, width },
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn value(&self) -> &AttributeValue {
        &self.value
    }

    pub fn as_str(&self) -> Option<&str> {
        match &self.value {
            AttributeValue::Str(s) => Some(s),
            AttributeValue::Int { .. } => None,
        }
    }

    pub fn as_int(&self) -> Option<u64> {
        match self.value {
            AttributeValue::Int { value, .. } => Some(value),
            AttributeValue::Str(_) => None,
        }
    }

    pub fn canonical(&self) -> String {
        match &self.value {
            AttributeValue::Str(v) => format!("{}={}", self.name, v),
            AttributeValue::Int { value, .. } => format!("{}:int={}", self.name, value),
        }
    }
}

impl fmt::Display for Attribute {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.canonical())
    }
}

impl FromStr for Attribute {
    type Err = PolicyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (lhs, rhs) = s
            .split_once('=')
            .ok_or_else(|| PolicyError::InvalidAttribute(format!("missing '=' in {s:?}")))?;
        match lhs.strip_suffix(":int") {
            Some(name) => {
                let value = rhs.trim().parse::<u64>().map_err(|_| {
                    PolicyError::InvalidAttribute(format!("bad integer value in {s:?}"))
                })?;
                Attribute::int(name, value)
            }
            None => Attribute::string(lhs, rhs),
        }
    }
}

/// A set of attributes with at most one value per name.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<Attribute>", into = "Vec<Attribute>")]
pub struct AttributeSet {
    by_name: BTreeMap<String, Attribute>,
}

impl AttributeSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, attr: Attribute) -> Result<(), PolicyError> {
        if self.by_name.contains_key(attr.name()) {
            return Err(PolicyError::DuplicateAttribute(attr.name().to_string()));
        }
        self.by_name.insert(attr.name().to_string(), attr);
        Ok(())
    }

    /// Inserts `attr`, replacing any attribute with the same name.
    pub fn set(&mut self, attr: Attribute) {
        self.by_name.insert(attr.name().to_string(), attr);
    }

    pub fn remove(&mut self, name: &str) -> Option<Attribute> {
        self.by_name.remove(name)
    }

    pub fn get(&self, name: &str) -> Option<&Attribute> {
        self.by_name.get(name)
    }

    pub fn contains(&self, attr: &Attribute) -> bool {
        self.by_name.get(attr.name()).map(|a| a.value == attr.value) == Some(true)
    }

    pub fn len(&self) -> usize {
        self.by_name.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_name.is_empty()
    }

    /// Attributes in ascending name order.
    pub fn iter(&self) -> impl Iterator<Item = &Attribute> {
        self.by_name.values()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.by_name.keys().map(String::as_str)
    }

    pub fn canonical_strings(&self) -> BTreeSet<String> {
        self.iter().map(Attribute::canonical).collect()
    }

    /// Merges `other` into `self`; fails on the first name clash.
    pub fn extend_from(&mut self, other: &AttributeSet) -> Result<(), PolicyError> {
        for attr in other.iter() {
            self.insert(attr.clone())?;
        }
        Ok(())
    }

    pub fn try_from_iter<I: IntoIterator<Item = Attribute>>(iter: I) -> Result<Self, PolicyError> {
        let mut set = AttributeSet::new();
        for attr in iter {
            set.insert(attr)?;
        }
        Ok(set)
    }

    /// Parses a list of canonical attribute strings.
    pub fn parse_canonical<'a, I: IntoIterator<Item = &'a str>>(
        items: I,
    ) -> Result<Self, PolicyError> {
        Self::try_from_iter(
            items
                .into_iter()
                .map(str::parse::<Attribute>)
                .collect::<Result<Vec<_>, _>>()?,
        )
    }
}

impl TryFrom<Vec<Attribute>> for AttributeSet {
    type Error = PolicyError;

    fn try_from(value: Vec<Attribute>) -> Result<Self, Self::Error> {
        Self::try_from_iter(value)
    }
}

impl From<AttributeSet> for Vec<Attribute> {
    fn from(set: AttributeSet) -> Self {
        set.by_name.into_values().collect()
    }
}

impl<'a> IntoIterator for &'a AttributeSet {
    type Item = &'a Attribute;
    type IntoIter = std::collections::btree_map::Values<'a, String, Attribute>;

    fn into_iter(self) -> Self::IntoIter {
        self.by_name.values()
    }
}

/// Attribute name under which bit `bit` of numeric attribute `name` is held.
pub fn bit_attribute_name(name: &str, bit: u32) -> String {
    format!("{name}.bit_{bit}")
}

/// Canonical string of the bit attribute `name.bit_j=b`.
pub fn bit_leaf(name: &str, bit: u32, set: bool) -> String {
    format!("{}={}", bit_attribute_name(name, bit), u8::from(set))
}

/// Expands an integer into its per-bit string attributes plus the integer
/// attribute itself.
pub fn materialize_numeric(name: &str, value: u64, width: u32) -> Result<AttributeSet, PolicyError> {
    let int_attr = Attribute::int_with_width(name, value, width)?;
    let name = int_attr.name().to_string();
    let mut set = AttributeSet::new();
    for bit in 0..width {
        let b = (value >> bit) & 1 == 1;
        set.insert(Attribute::string(
            &bit_attribute_name(&name, bit),
            if b { "1" } else { "0" },
        )?)?;
    }
    set.insert(int_attr)?;
    Ok(set)
}

/// Returns `attrs` with every integer attribute expanded by
/// [`materialize_numeric`] at its own width.
pub fn materialize_all(attrs: &AttributeSet) -> Result<AttributeSet, PolicyError> {
    let mut out = AttributeSet::new();
    for attr in attrs {
        match attr.value() {
            AttributeValue::Str(_) => out.insert(attr.clone())?,
            AttributeValue::Int { value, width } => {
                out.extend_from(&materialize_numeric(attr.name(), *value, *width)?)?
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_forms() {
        let a = Attribute::string("PI", "John Smith").unwrap();
        assert_eq!(a.canonical(), "PI=John Smith");
        let n = Attribute::int("Date", 18748).unwrap();
        assert_eq!(n.canonical(), "Date:int=18748");
        assert_eq!("Date:int=18748".parse::<Attribute>().unwrap(), n);
        assert_eq!("PI=John Smith".parse::<Attribute>().unwrap(), a);
        assert_eq!(Attribute::flag("IS_VALID").unwrap().canonical(), "IS_VALID=True");
    }

    #[test]
    fn whitespace_is_collapsed() {
        let a = Attribute::string(" Role ", "Graduate   Assistant").unwrap();
        assert_eq!(a.canonical(), "Role=Graduate Assistant");
    }

    #[test]
    fn reserved_characters_rejected() {
        assert!(Attribute::string("a/b", "x").is_err());
        assert!(Attribute::string("a", "x=y").is_err());
        assert!(Attribute::string("a:b", "x").is_err());
        assert!(Attribute::string("", "x").is_err());
        assert!(Attribute::string("a", "").is_err());
    }

    #[test]
    fn width_bounds() {
        assert!(Attribute::int_with_width("x", 15, 4).is_ok());
        assert!(matches!(
            Attribute::int_with_width("x", 16, 4),
            Err(PolicyError::WidthOverflow { .. })
        ));
        assert!(Attribute::int_with_width("x", u64::MAX, 64).is_ok());
    }

    #[test]
    fn duplicate_names_rejected() {
        let mut set = AttributeSet::new();
        set.insert(Attribute::string("A", "1").unwrap()).unwrap();
        assert!(matches!(
            set.insert(Attribute::string("A", "2").unwrap()),
            Err(PolicyError::DuplicateAttribute(_))
        ));
    }

    #[test]
    fn materialize_epoch_five() {
        let set = materialize_numeric("epoch", 5, 4).unwrap();
        let expected: BTreeSet<String> = [
            "epoch.bit_0=1",
            "epoch.bit_1=0",
            "epoch.bit_2=1",
            "epoch.bit_3=0",
            "epoch:int=5",
        ]
        .into_iter()
        .map(String::from)
        .collect();
        assert_eq!(set.canonical_strings(), expected);
    }

    #[test]
    fn materialize_zero_is_all_clear() {
        let set = materialize_numeric("x", 0, 2).unwrap();
        assert_eq!(set.get("x.bit_0").unwrap().as_str(), Some("0"));
        assert_eq!(set.get("x.bit_1").unwrap().as_str(), Some("0"));
        assert_eq!(set.len(), 3);
    }

    #[test]
    fn materialize_overflow() {
        assert!(matches!(
            materialize_numeric("x", 4, 2),
            Err(PolicyError::WidthOverflow { .. })
        ));
    }

    #[test]
    fn serde_keeps_width() {
        let set = AttributeSet::try_from_iter([
            Attribute::int_with_width("x", 3, 8).unwrap(),
            Attribute::string("A", "b").unwrap(),
        ])
        .unwrap();
        let json = serde_json::to_string(&set).unwrap();
        let back: AttributeSet = serde_json::from_str(&json).unwrap();
        assert_eq!(back, set);
    }
}
