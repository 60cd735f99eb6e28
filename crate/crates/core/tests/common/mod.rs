#![allow(dead_code)]

use std::path::PathBuf;

use aabac::abe::{CiphertextPolicy, Mode};
use aabac::deployment::{Deployment, DeploymentConfig};
use aabac::ledger::NamespaceAgreement;
use aabac::name;
use aabac::naming::Name;
use aabac::policy::{parse_policy, Attribute, AttributeSet};
use aabac::publisher::{PublishRequest, ReencryptionPolicy};

pub const POLICY: &str = "(PI = Tom) and (Role = Graduate Student or Role = PI)";

pub fn golden_path(file: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(file)
}

/// Compares `actual` with a checked-in file; `UPDATE_GOLDEN=1` rewrites it.
pub fn golden(file: &str, actual: &str) -> Result<(), String> {
    let path = golden_path(file);
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::write(&path, actual).map_err(|e| format!("{}: {e}", path.display()))?;
        return Ok(());
    }
    let expected = std::fs::read_to_string(&path)
        .map_err(|e| format!("{}: {e} (run with UPDATE_GOLDEN=1)", path.display()))?;
    if expected == actual {
        return Ok(());
    }
    let line = expected
        .lines()
        .zip(actual.lines())
        .position(|(a, b)| a != b)
        .unwrap_or_else(|| expected.lines().count().min(actual.lines().count()));
    Err(format!(
        "{file} differs at line {} ({} vs {} bytes)",
        line + 1,
        expected.len(),
        actual.len()
    ))
}

pub fn attrs(pairs: &[(&str, &str)]) -> AttributeSet {
    AttributeSet::try_from_iter(pairs.iter().map(|(n, v)| Attribute::string(n, v).unwrap())).unwrap()
}

pub fn alice_attrs() -> AttributeSet {
    attrs(&[("PI", "Tom"), ("Role", "Graduate Student")])
}

pub fn sra1() -> Name {
    name!("/genomics/data/sra1")
}

pub fn deployment(trace: bool) -> Deployment {
    let agreement = NamespaceAgreement::new(
        name!("/genomics/data"),
        ["PI", "Role", "University"],
        parse_policy(POLICY).unwrap(),
        name!("/noc"),
    )
    .unwrap();
    Deployment::new(DeploymentConfig { trace, ..DeploymentConfig::default() }, agreement).unwrap()
}

pub fn request(metadata: usize, payload: usize, mode: Mode, freshness: u64, reenc: ReencryptionPolicy) -> PublishRequest {
    PublishRequest::new(sra1(), CiphertextPolicy::new(parse_policy(POLICY).unwrap()))
        .metadata(vec![b'm'; metadata])
        .payload((0..payload).map(|i| (i % 251) as u8).collect::<Vec<_>>())
        .mode(mode)
        .freshness(freshness)
        .reencryption(reenc)
}

/// Publisher puts sra1 in the repo; Alice registers at her ledger, fetches
/// it through the router, asks the ledger for a key and decrypts.
pub fn alice_walkthrough() -> Deployment {
    let mut d = deployment(true);
    let reenc = ReencryptionPolicy::new(10_000, 0.1, [0; 32]).unwrap();
    d.publish(request(1_200, 2_000, Mode::Direct, 1_000, reenc)).unwrap();
    let creds = d.register_user(&name!("/tntech/alice"), alice_attrs()).unwrap();
    let mut s = d.session(creds, alice_attrs());
    let obj = s.fetch_and_decrypt(&mut d.sim, &sra1()).unwrap();
    assert_eq!(obj.metadata, vec![b'm'; 1_200]);
    assert_eq!(obj.key_requests, 1);
    d
}

/// The protocol's name table, with `<attributes>` filled in.
pub const NAME_TABLE: [(&str, &str); 5] = [
    ("content", "/genomics/data/SRA/9605/9609/RNA-Seq/1"),
    ("encryption key", "/genomics/pub_key/sequence=random_number"),
    (
        "local ledger locator",
        "/genomics/data/sra1/PI=Tom/Role=Graduate Student/Alice-pub-key:/tntech/alice/pub_key",
    ),
    (
        "forwarded to NOC",
        "/tntech/ledger/decryption-key/data:/genomics/data/sra1/PI=Tom/Role=Graduate Student/Alice-pub-key: /tntech/alice/pub_key",
    ),
    ("NOC reply", "/tntech/ledger/decryption-key_alice/genomics/data/sra1"),
];

/// One `row<TAB>canonical` line per table row.
pub fn name_table_canonical() -> Result<String, String> {
    let mut out = String::new();
    for (row, text) in NAME_TABLE {
        let n = aabac::naming::parse_name(text).map_err(|e| format!("{row}: {e}"))?;
        let canon = n.to_string();
        let again = aabac::naming::parse_name(&canon).map_err(|e| format!("{row}: {e}"))?;
        if again != n || again.to_string() != canon {
            return Err(format!("{row}: canonical form is not a fixed point"));
        }
        out.push_str(&format!("{row}\t{canon}\n"));
    }
    Ok(out)
}
