//! Hierarchical names with `key=value` annotation components.
//!
//! Canonical text is `/` followed by the components joined with `/`. Inside a
//! component the characters `/`, `%`, `=` and `:` are percent-encoded, and an
//! annotation is written `key=value`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::policy::{Attribute, AttributeSet, PolicyError};

pub const ENCRYPTED_BY: &str = "encrypted_by";
pub const LOCAL_LEDGER: &str = "local_ledger";
pub const DATA: &str = "data";
pub const USER_PUB_KEY: &str = "user-pub-key";
pub const DECRYPTION_KEY: &str = "decryption-key";

/// Annotation keys that the parser also accepts in the `key:value` form,
/// where the value may span the following `/`-separated components.
const COLON_KEYS: [&str; 4] = [DATA, "Alice-pub-key", USER_PUB_KEY, LOCAL_LEDGER];

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Component {
    Plain(String),
    Annotation { key: String, value: String },
}

impl Component {
    pub fn plain(text: impl Into<String>) -> Self {
        Component::Plain(text.into())
    }

    pub fn annotation(key: impl Into<String>, value: impl Into<String>) -> Self {
        Component::Annotation {
            key: key.into(),
            value: value.into(),
        }
    }

    pub fn annotation_value(&self, wanted: &str) -> Option<&str> {
        match self {
            Component::Annotation { key, value } if key == wanted => Some(value),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum NameError {
    #[error("malformed name {text:?}: {reason}")]
    MalformedName { text: String, reason: &'static str },
    #[error("name {0} carries no local_ledger annotation")]
    MissingLocator(String),
    #[error("not a key request name: {0}")]
    NotKeyRequest(String),
    #[error(transparent)]
    Attribute(#[from] PolicyError),
}

/// A non-empty list of components, ordered lexicographically by component.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Name {
    components: Vec<Component>,
}

fn encode_into(out: &mut String, text: &str) {
    for c in text.chars() {
        match c {
            '/' => out.push_str("%2F"),
            '%' => out.push_str("%25"),
            '=' => out.push_str("%3D"),
            ':' => out.push_str("%3A"),
            c => out.push(c),
        }
    }
}

fn decode(text: &str, whole: &str) -> Result<String, NameError> {
    let malformed = |reason| NameError::MalformedName {
        text: whole.to_string(),
        reason,
    };
    let bytes = text.as_bytes();
    let mut out = Vec::with_capacity(bytes.len());
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'%' {
            let hex = bytes
                .get(i + 1..i + 3)
                .ok_or_else(|| malformed("truncated percent escape"))?;
            let hex = std::str::from_utf8(hex).map_err(|_| malformed("bad percent escape"))?;
            let byte =
                u8::from_str_radix(hex, 16).map_err(|_| malformed("bad percent escape"))?;
            out.push(byte);
            i += 3;
        } else {
            out.push(bytes[i]);
            i += 1;
        }
    }
    String::from_utf8(out).map_err(|_| malformed("escape decodes to invalid UTF-8"))
}

/// Returns the key if `raw` is a `known-key:` component.
fn colon_key(raw: &str) -> Option<(&'static str, &str)> {
    COLON_KEYS.iter().find_map(|k| {
        raw.strip_prefix(k)
            .and_then(|rest| rest.strip_prefix(':'))
            .map(|rest| (*k, rest.trim()))
    })
}

impl Name {
    pub fn new(components: Vec<Component>) -> Result<Self, NameError> {
        if components.is_empty() {
            return Err(NameError::MalformedName {
                text: String::new(),
                reason: "a name needs at least one component",
            });
        }
        Ok(Name { components })
    }

    /// Name made of plain components only.
    pub fn from_plain<I, S>(parts: I) -> Result<Self, NameError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self::new(parts.into_iter().map(|p| Component::Plain(p.into())).collect())
    }

    pub fn components(&self) -> &[Component] {
        &self.components
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    /// Always false; kept for API symmetry with `len`.
    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn push(&mut self, component: Component) {
        self.components.push(component);
    }

    pub fn child(&self, component: Component) -> Name {
        let mut out = self.clone();
        out.push(component);
        out
    }

    pub fn join(&self, other: &Name) -> Name {
        let mut out = self.clone();
        out.components.extend(other.components.iter().cloned());
        out
    }

    /// The first `len` components, or `None` if `len` is 0 or too large.
    pub fn prefix(&self, len: usize) -> Option<Name> {
        (len >= 1 && len <= self.components.len()).then(|| Name {
            components: self.components[..len].to_vec(),
        })
    }

    pub fn is_prefix_of(&self, other: &Name) -> bool {
        is_prefix_of(self, other)
    }

    /// Value of the first annotation with `key`.
    pub fn annotation(&self, key: &str) -> Option<&str> {
        self.components.iter().find_map(|c| c.annotation_value(key))
    }

    /// Position of the first annotation with `key`.
    pub fn annotation_position(&self, key: &str) -> Option<usize> {
        self.components
            .iter()
            .position(|c| c.annotation_value(key).is_some())
    }

    pub fn format(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for Name {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut out = String::new();
        for component in &self.components {
            out.push('/');
            match component {
                Component::Plain(text) => encode_into(&mut out, text),
                Component::Annotation { key, value } => {
                    encode_into(&mut out, key);
                    out.push('=');
                    encode_into(&mut out, value);
                }
            }
        }
        f.write_str(&out)
    }
}

/// Parses canonical name text.
///
/// For compatibility with hand-written names, a component `data:`,
/// `Alice-pub-key:`, `user-pub-key:` or `local_ledger:` starts an annotation
/// whose value is the rest of that component, or, when that is empty, `/`
/// followed by the next components up to the next annotation.
pub fn parse_name(text: &str) -> Result<Name, NameError> {
    let malformed = |reason| NameError::MalformedName {
        text: text.to_string(),
        reason,
    };
    let body = text
        .strip_prefix('/')
        .ok_or_else(|| malformed("a name starts with '/'"))?;
    if body.is_empty() {
        return Err(malformed("a name needs at least one component"));
    }
    let raw: Vec<&str> = body.split('/').collect();
    if raw.iter().any(|c| c.is_empty()) {
        return Err(malformed("empty component"));
    }
    let is_annotation = |r: &str| r.contains('=') || colon_key(r).is_some();
    let mut components = Vec::with_capacity(raw.len());
    let mut i = 0;
    while i < raw.len() {
        let r = raw[i];
        i += 1;
        if let Some((key, rest)) = colon_key(r) {
            let value = if rest.is_empty() {
                let mut parts = Vec::new();
                while i < raw.len() && !is_annotation(raw[i]) {
                    parts.push(decode(raw[i].trim(), text)?);
                    i += 1;
                }
                if parts.is_empty() {
                    return Err(malformed("annotation without a value"));
                }
                format!("/{}", parts.join("/"))
            } else {
                decode(rest, text)?
            };
            components.push(Component::annotation(key, value));
        } else if let Some((k, v)) = r.split_once('=') {
            components.push(Component::annotation(decode(k, text)?, decode(v, text)?));
        } else {
            components.push(Component::Plain(decode(r, text)?));
        }
    }
    Ok(Name { components })
}

impl FromStr for Name {
    type Err = NameError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_name(s)
    }
}

impl Serialize for Name {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Name {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        parse_name(&text).map_err(serde::de::Error::custom)
    }
}

/// Component-exact prefix test.
pub fn is_prefix_of(prefix: &Name, name: &Name) -> bool {
    name.components.starts_with(&prefix.components)
}

/// Where a consumer asks for decryption keys.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct KeyLocator {
    pub ledger_prefix: Name,
}

/// `base/encrypted_by=<pubkey>/timestamp=<t>/local_ledger=<ledger>`
pub fn build_published_data_name(
    base: &Name,
    pubkey_name: &Name,
    timestamp: u64,
    ledger_prefix: &Name,
) -> Name {
    base.child(Component::annotation(
        ENCRYPTED_BY,
        format!("{pubkey_name}/timestamp={timestamp}"),
    ))
    .child(Component::annotation(LOCAL_LEDGER, ledger_prefix.to_string()))
}

pub fn extract_key_locator(name: &Name) -> Result<KeyLocator, NameError> {
    let value = name
        .annotation(LOCAL_LEDGER)
        .ok_or_else(|| NameError::MissingLocator(name.to_string()))?;
    Ok(KeyLocator {
        ledger_prefix: parse_name(value)?,
    })
}

fn attribute_component(attr: &Attribute) -> Component {
    match attr.as_int() {
        Some(v) => Component::annotation(format!("{}:int", attr.name()), v.to_string()),
        None => Component::annotation(attr.name(), attr.as_str().unwrap_or_default()),
    }
}

fn component_attribute(key: &str, value: &str) -> Result<Attribute, PolicyError> {
    match key.strip_suffix(":int") {
        Some(name) => {
            let v = value
                .parse::<u64>()
                .map_err(|_| PolicyError::InvalidAttribute(format!("bad integer {value:?}")))?;
            Attribute::int(name, v)
        }
        None => Attribute::string(key, value),
    }
}

/// `ledger/decryption-key/data=<data>/<attr annotations...>/user-pub-key=<key>`
///
/// Attributes appear in ascending name order.
pub fn build_key_request_name(
    ledger_prefix: &Name,
    data_name: &Name,
    attrs: &AttributeSet,
    user_pubkey_name: &Name,
) -> Name {
    let mut name = ledger_prefix
        .child(Component::plain(DECRYPTION_KEY))
        .child(Component::annotation(DATA, data_name.to_string()));
    for attr in attrs {
        name.push(attribute_component(attr));
    }
    name.child(Component::annotation(
        USER_PUB_KEY,
        user_pubkey_name.to_string(),
    ))
}

/// Fields recovered from a key request name.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeyRequestParts {
    pub ledger_prefix: Name,
    pub data_name: Name,
    pub attrs: AttributeSet,
    pub user_pubkey_name: Name,
}

/// Inverse of [`build_key_request_name`].
pub fn parse_key_request_name(name: &Name) -> Result<KeyRequestParts, NameError> {
    let bad = || NameError::NotKeyRequest(name.to_string());
    let at = name
        .components
        .iter()
        .position(|c| *c == Component::plain(DECRYPTION_KEY))
        .ok_or_else(bad)?;
    let ledger_prefix = name.prefix(at).ok_or_else(bad)?;
    let rest = &name.components[at + 1..];
    let (first, rest) = rest.split_first().ok_or_else(bad)?;
    let (last, attrs) = rest.split_last().ok_or_else(bad)?;
    let data_name = parse_name(first.annotation_value(DATA).ok_or_else(bad)?)?;
    let user_pubkey_name = parse_name(last.annotation_value(USER_PUB_KEY).ok_or_else(bad)?)?;
    let mut set = AttributeSet::new();
    for c in attrs {
        match c {
            Component::Annotation { key, value } => set.insert(component_attribute(key, value)?)?,
            Component::Plain(_) => return Err(bad()),
        }
    }
    Ok(KeyRequestParts {
        ledger_prefix,
        data_name,
        attrs: set,
        user_pubkey_name,
    })
}

/// Convenience for tests and fixtures: parses or panics.
#[macro_export]
macro_rules! name {
    ($text:expr) => {
        $crate::naming::parse_name($text).expect("valid name literal")
    };
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_public_key_name() {
        let n = parse_name("/genomics/pub_key/sequence=12345").unwrap();
        assert_eq!(
            n.components(),
            &[
                Component::plain("genomics"),
                Component::plain("pub_key"),
                Component::annotation("sequence", "12345"),
            ]
        );
        assert_eq!(n.to_string(), "/genomics/pub_key/sequence=12345");
    }

    #[test]
    fn single_component() {
        assert_eq!(parse_name("/a").unwrap().components(), &[Component::plain("a")]);
    }

    #[test]
    fn malformed_names() {
        for bad in ["", "a/b", "/", "//a", "/a/", "/a%2", "/a%zz", "/a%ff"] {
            assert!(
                matches!(parse_name(bad), Err(NameError::MalformedName { .. })),
                "{bad:?}"
            );
        }
    }

    #[test]
    fn prefix_is_component_exact() {
        let p = name!("/genomics/data");
        assert!(p.is_prefix_of(&name!("/genomics/data/sra1")));
        assert!(!p.is_prefix_of(&name!("/genomics/datax")));
        assert!(p.is_prefix_of(&p));
        assert!(!name!("/genomics/data/sra1").is_prefix_of(&p));
    }

    #[test]
    fn spaces_stay_readable() {
        let n = name!("/people/Name=John Smith");
        assert_eq!(n.annotation("Name"), Some("John Smith"));
        assert_eq!(n.to_string(), "/people/Name=John Smith");
    }

    #[test]
    fn published_name_and_locator() {
        let n = build_published_data_name(
            &name!("/Genome1/SRA/9605/9609/RNA-Seq/1"),
            &name!("/genomics/pub_key"),
            1645780366,
            &name!("/tntech/ledger"),
        );
        assert_eq!(
            n.annotation(ENCRYPTED_BY),
            Some("/genomics/pub_key/timestamp=1645780366")
        );
        assert_eq!(
            n.to_string(),
            "/Genome1/SRA/9605/9609/RNA-Seq/1\
             /encrypted_by=%2Fgenomics%2Fpub_key%2Ftimestamp%3D1645780366\
             /local_ledger=%2Ftntech%2Fledger"
        );
        assert_eq!(
            extract_key_locator(&n).unwrap().ledger_prefix,
            name!("/tntech/ledger")
        );
        assert_eq!(parse_name(&n.to_string()).unwrap(), n);
    }

    #[test]
    fn missing_locator() {
        assert!(matches!(
            extract_key_locator(&name!("/a/b")),
            Err(NameError::MissingLocator(_))
        ));
    }

    #[test]
    fn nested_locator_value() {
        let ledger = name!("/tntech/ledger/site=main/x%3Dy");
        let n = name!("/data").child(Component::annotation(LOCAL_LEDGER, ledger.to_string()));
        let text = n.to_string();
        assert_eq!(extract_key_locator(&parse_name(&text).unwrap()).unwrap().ledger_prefix, ledger);
    }

    #[test]
    fn key_request_round_trip() {
        let attrs = AttributeSet::parse_canonical(["Role=Graduate Student", "PI=Tom"]).unwrap();
        let req = build_key_request_name(
            &name!("/tntech/ledger"),
            &name!("/genomics/data/sra1"),
            &attrs,
            &name!("/tntech/alice/pub_key"),
        );
        assert_eq!(
            req.to_string(),
            "/tntech/ledger/decryption-key/data=%2Fgenomics%2Fdata%2Fsra1\
             /PI=Tom/Role=Graduate Student/user-pub-key=%2Ftntech%2Falice%2Fpub_key"
        );
        let parts = parse_key_request_name(&parse_name(&req.to_string()).unwrap()).unwrap();
        assert_eq!(parts.attrs, attrs);
        assert_eq!(parts.data_name, name!("/genomics/data/sra1"));
        assert_eq!(parts.ledger_prefix, name!("/tntech/ledger"));
        assert_eq!(parts.user_pubkey_name, name!("/tntech/alice/pub_key"));
    }

    #[test]
    fn empty_attribute_request() {
        let req = build_key_request_name(
            &name!("/l"),
            &name!("/d"),
            &AttributeSet::new(),
            &name!("/u"),
        );
        assert_eq!(req.len(), 4);
        assert!(parse_key_request_name(&req).unwrap().attrs.is_empty());
    }

    #[test]
    fn integer_attributes_in_requests() {
        let attrs = AttributeSet::parse_canonical(["Date:int=18738", "PI=Tom"]).unwrap();
        let req = build_key_request_name(&name!("/l"), &name!("/d"), &attrs, &name!("/u"));
        assert!(req.to_string().contains("/Date%3Aint=18738/"));
        assert_eq!(parse_key_request_name(&req).unwrap().attrs, attrs);
    }

    #[test]
    fn colon_annotations_accepted() {
        let n = parse_name(
            "/tntech/ledger/decryption-key/data:/genomics/data/sra1/PI=Tom/Alice-pub-key: /tntech/alice/pub_key",
        )
        .unwrap();
        assert_eq!(n.annotation(DATA), Some("/genomics/data/sra1"));
        assert_eq!(n.annotation("Alice-pub-key"), Some("/tntech/alice/pub_key"));
        assert_eq!(n.annotation("PI"), Some("Tom"));
        assert_eq!(n.len(), 6);
    }

    #[test]
    fn plain_component_with_colon_round_trips() {
        let n = Name::from_plain(["data:", "x"]).unwrap();
        assert_eq!(parse_name(&n.to_string()).unwrap(), n);
    }
}
