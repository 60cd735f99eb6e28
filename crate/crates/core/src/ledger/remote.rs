use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::naming::Name;
use crate::policy::{as_text, PolicyAst};

use super::{io_err, LedgerError};

/// What a data publisher and an institution agreed on for a namespace.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NamespaceAgreement {
    pub prefix: Name,
    pub attribute_universe: BTreeSet<String>,
    #[serde(with = "as_text")]
    pub policy_template: PolicyAst,
    pub noc: Name,
}

impl NamespaceAgreement {
    pub fn new<I, S>(prefix: Name, universe: I, policy_template: PolicyAst, noc: Name) -> Result<Self, LedgerError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let a = NamespaceAgreement {
            prefix,
            attribute_universe: universe.into_iter().map(Into::into).collect(),
            policy_template,
            noc,
        };
        a.validate()?;
        Ok(a)
    }

    pub fn validate(&self) -> Result<(), LedgerError> {
        let missing = self.uncovered(&self.policy_template);
        if missing.is_empty() {
            Ok(())
        } else {
            Err(LedgerError::InvalidAgreement(format!(
                "template uses attributes outside the universe: {}",
                missing.into_iter().collect::<Vec<_>>().join(", ")
            )))
        }
    }

    /// Attribute names of `policy` that the agreement does not cover.
    pub fn uncovered(&self, policy: &PolicyAst) -> BTreeSet<String> {
        policy
            .attribute_names()
            .into_iter()
            .filter(|n| !self.attribute_universe.contains(n))
            .collect()
    }
}

/// Registry of namespace agreements, keyed by prefix.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RemoteLedger {
    agreements: BTreeMap<Name, NamespaceAgreement>,
}

impl RemoteLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register_agreement(&mut self, agreement: NamespaceAgreement) -> Result<(), LedgerError> {
        agreement.validate()?;
        if self.agreements.contains_key(&agreement.prefix) {
            return Err(LedgerError::DuplicatePrefix(agreement.prefix));
        }
        self.agreements.insert(agreement.prefix.clone(), agreement);
        Ok(())
    }

    pub fn agreement(&self, prefix: &Name) -> Result<&NamespaceAgreement, LedgerError> {
        self.agreements.get(prefix).ok_or_else(|| LedgerError::NotFound(prefix.clone()))
    }

    /// The agreement with the longest prefix of `name`.
    pub fn agreement_for(&self, name: &Name) -> Result<&NamespaceAgreement, LedgerError> {
        (1..=name.len())
            .rev()
            .find_map(|k| self.agreements.get(&name.prefix(k).expect("k within bounds")))
            .ok_or_else(|| LedgerError::NotFound(name.clone()))
    }

    pub fn universe(&self, prefix: &Name) -> Result<&BTreeSet<String>, LedgerError> {
        Ok(&self.agreement(prefix)?.attribute_universe)
    }

    pub fn iter(&self) -> impl Iterator<Item = &NamespaceAgreement> {
        self.agreements.values()
    }

    pub fn save(&self, path: &Path) -> Result<(), LedgerError> {
        let list: Vec<_> = self.iter().collect();
        let text = serde_json::to_string_pretty(&list).map_err(io_err)?;
        std::fs::write(path, text + "\n").map_err(io_err)
    }

    pub fn load(path: &Path) -> Result<Self, LedgerError> {
        let text = std::fs::read_to_string(path).map_err(io_err)?;
        let list: Vec<NamespaceAgreement> = serde_json::from_str(&text).map_err(io_err)?;
        let mut out = Self::new();
        for a in list {
            out.register_agreement(a)?;
        }
        Ok(out)
    }
}
