use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use super::*;
use crate::abe::{decrypt, encrypt, CiphertextPolicy, DecryptionKey, Mode};
use crate::name;
use crate::naming::build_key_request_name;
use crate::policy::{parse_policy, Attribute, AttributeSet};

const DAY_2021_04_21: u64 = 18738;

fn attrs(pairs: &[(&str, &str)]) -> AttributeSet {
    AttributeSet::try_from_iter(pairs.iter().map(|(n, v)| Attribute::string(n, v).unwrap())).unwrap()
}

fn alice() -> UserCredentials {
    UserCredentials::from_seed(name!("/tntech/alice"), [11; 32])
}

fn alice_attrs() -> AttributeSet {
    attrs(&[("PI", "Tom"), ("Role", "Graduate Student")])
}

struct Fixture {
    ledger: LocalLedger,
    noc: Noc,
    rng: ChaCha20Rng,
}

fn fixture() -> Fixture {
    let mut ledger = LocalLedger::new(name!("/tntech/ledger"), [21; 32], name!("/noc"), DAY_2021_04_21);
    let mut noc = Noc::new(name!("/noc"), &name!("/genomics/pub_key"), [31; 32], [41; 32]);
    ledger.trust_noc(noc.identity());
    noc.trust_ledger(name!("/tntech/ledger"), ledger.identity().verifying_key());
    ledger
        .register_user(LedgerRecord::new(name!("/tntech/alice"), alice().public(), alice_attrs()), 0)
        .unwrap();
    Fixture { ledger, noc, rng: ChaCha20Rng::seed_from_u64(5) }
}

fn request(creds: &UserCredentials, wanted: &AttributeSet, nonce: u8) -> KeyRequest {
    let name = build_key_request_name(&name!("/tntech/ledger"), &name!("/genomics/data/sra1"), wanted, creds.key_name());
    KeyRequest::sign(name, [nonce; 8], creds)
}

fn scenario3_universe() -> Vec<&'static str> {
    vec!["Project", "PI", "University", "Department", "Role"]
}

#[test]
fn agreements_register_and_query() {
    let mut remote = RemoteLedger::new();
    let policy = parse_policy("Project = Genome1 and University = MIT").unwrap();
    let a = NamespaceAgreement::new(name!("/genomics/data"), scenario3_universe(), policy, name!("/noc")).unwrap();
    remote.register_agreement(a.clone()).unwrap();
    assert_eq!(remote.universe(&name!("/genomics/data")).unwrap().len(), 5);
    assert_eq!(remote.agreement_for(&name!("/genomics/data/sra1/seg=0")).unwrap(), &a);
    assert_eq!(remote.register_agreement(a), Err(LedgerError::DuplicatePrefix(name!("/genomics/data"))));
    assert_eq!(remote.agreement(&name!("/other")).err(), Some(LedgerError::NotFound(name!("/other"))));
    assert!(remote.agreement_for(&name!("/genomics")).is_err());
}

#[test]
fn template_outside_universe_is_invalid() {
    let policy = parse_policy("Project = Genome1 and Lab = X").unwrap();
    let err = NamespaceAgreement::new(name!("/g"), ["Project"], policy, name!("/noc"));
    assert!(matches!(err, Err(LedgerError::InvalidAgreement(_))));
}

#[test]
fn agreements_persist() {
    let dir = tempfile::tempdir().unwrap();
    let mut remote = RemoteLedger::new();
    let policy = parse_policy("(Project = Genome1) and (Date <= 05/01/2021)").unwrap();
    remote
        .register_agreement(NamespaceAgreement::new(name!("/g"), ["Project", "Date"], policy, name!("/noc")).unwrap())
        .unwrap();
    let path = dir.path().join("agreements.json");
    remote.save(&path).unwrap();
    assert_eq!(RemoteLedger::load(&path).unwrap(), remote);
}

#[test]
fn user_registry() {
    let mut f = fixture();
    assert_eq!(f.ledger.user(&name!("/tntech/alice")).unwrap().attrs, alice_attrs());
    let dup = LedgerRecord::new(name!("/tntech/alice"), alice().public(), AttributeSet::new());
    assert_eq!(f.ledger.register_user(dup, 0), Err(LedgerError::DuplicateUser(name!("/tntech/alice"))));
    let mut reserved = attrs(&[("PI", "Tom")]);
    reserved.set(Attribute::flag("IS_VALID").unwrap());
    let rec = LedgerRecord::new(name!("/tntech/bob"), alice().public(), reserved);
    assert_eq!(f.ledger.register_user(rec, 0), Err(LedgerError::ReservedAttribute("IS_VALID".into())));
    assert_eq!(
        f.ledger.revoke_user(&name!("/tntech/nobody"), 0),
        Err(LedgerError::UnknownUser(name!("/tntech/nobody")))
    );
    f.ledger.revoke_user(&name!("/tntech/alice"), 1).unwrap();
    assert!(!f.ledger.user(&name!("/tntech/alice")).unwrap().valid);
}

#[test]
fn alice_request_is_signed_with_appended_attributes() {
    let mut f = fixture();
    f.ledger.set_epoch(10, 0);
    let signed = f.ledger.handle_key_request(&request(&alice(), &alice_attrs(), 1), 5).unwrap();
    assert_eq!(signed.epoch, 10);
    assert_eq!(signed.appended.get("Date").unwrap().as_int(), Some(DAY_2021_04_21));
    assert_eq!(signed.appended.get("IS_VALID").unwrap().as_str(), Some("True"));
    assert_eq!(signed.appended.get("epoch").unwrap().as_int(), Some(10));
    let text = signed.forwarded_name.to_string();
    assert!(text.starts_with("/tntech/ledger/decryption-key/data=%2Fgenomics%2Fdata%2Fsra1/"), "{text}");
    assert!(text.contains("/Date%3Aint=18738/IS_VALID=True/PI=Tom/Role=Graduate Student/epoch%3Aint=10/"));
    assert!(text.ends_with("/user-pub-key=%2Ftntech%2Falice%2Fpub_key"));
    let key = f.ledger.identity().verifying_key();
    let sig = ed25519_dalek::Signature::from_slice(signed.ledger_sig.as_ref().unwrap()).unwrap();
    assert!(key.verify_strict(&signed.signed_bytes(), &sig).is_ok());
    let last = f.ledger.log().last().unwrap();
    assert_eq!(last.event, LogEvent::Forwarded);
    assert_eq!(last.digest.as_deref(), Some(signed.digest().as_str()));
}

#[test]
fn date_follows_virtual_days() {
    let mut f = fixture();
    let later = 11 * MS_PER_DAY + 5;
    let signed = f.ledger.handle_key_request(&request(&alice(), &alice_attrs(), 1), later).unwrap();
    assert_eq!(signed.appended.get("Date").unwrap().as_int(), Some(DAY_2021_04_21 + 11));
}

#[test]
fn denials() {
    let mut f = fixture();
    let physics = attrs(&[("PI", "Tom"), ("Department", "Physics")]);
    let cases = [
        (request(&alice(), &physics, 1), DenyReason::AttributeNotHeld),
        (request(&alice(), &attrs(&[("IS_VALID", "True")]), 2), DenyReason::AttributeNotHeld),
        (request(&UserCredentials::from_seed(name!("/tntech/eve"), [1; 32]), &alice_attrs(), 3), DenyReason::UnknownUser),
    ];
    for (req, reason) in cases {
        assert_eq!(f.ledger.handle_key_request(&req, 0), Err(LedgerError::RequestDenied(reason)));
    }
    let mut forged = request(&alice(), &alice_attrs(), 4);
    forged.signature = UserCredentials::from_seed(name!("/tntech/alice"), [99; 32])
        .sign(&KeyRequest::signed_bytes(&forged.request_name, &forged.nonce))
        .to_vec();
    assert_eq!(f.ledger.handle_key_request(&forged, 0), Err(LedgerError::RequestDenied(DenyReason::BadSignature)));
    let mut replayed = request(&alice(), &alice_attrs(), 4);
    replayed.nonce = [5; 8];
    assert_eq!(f.ledger.handle_key_request(&replayed, 0), Err(LedgerError::RequestDenied(DenyReason::BadSignature)));

    f.ledger.revoke_user(&name!("/tntech/alice"), 0).unwrap();
    assert_eq!(
        f.ledger.handle_key_request(&request(&alice(), &alice_attrs(), 6), 0),
        Err(LedgerError::RequestDenied(DenyReason::Revoked))
    );
    assert_eq!(f.ledger.log().iter().filter(|e| e.event == LogEvent::Denied).count(), 6);
}

#[test]
fn validity_window_expires() {
    let mut f = fixture();
    let bob = UserCredentials::from_seed(name!("/tntech/bob"), [12; 32]);
    let mut rec = LedgerRecord::new(name!("/tntech/bob"), bob.public(), alice_attrs());
    rec.valid_until = Some(1000);
    f.ledger.register_user(rec, 0).unwrap();
    assert!(f.ledger.handle_key_request(&request(&bob, &alice_attrs(), 1), 1000).is_ok());
    assert_eq!(
        f.ledger.handle_key_request(&request(&bob, &alice_attrs(), 2), 1001),
        Err(LedgerError::RequestDenied(DenyReason::Revoked))
    );
}

#[test]
fn noc_issues_key_only_the_requester_can_open() {
    let mut f = fixture();
    f.ledger.set_epoch(3, 0);
    let signed = f.ledger.handle_key_request(&request(&alice(), &alice_attrs(), 1), 0).unwrap();
    let sealed = f.noc.issue_key(&signed, 7, &mut f.rng).unwrap();
    let key = DecryptionKey::from_bytes(&alice().open(&sealed).unwrap()).unwrap();
    assert_eq!(key.epoch, 3);
    assert_eq!(key.holder, name!("/tntech/alice"));
    assert!(key.attrs.get("IS_VALID").is_some());
    assert_eq!(key.attrs.get("epoch").and_then(|a| a.as_int()), Some(3));
    assert!(UserCredentials::from_seed(name!("/tntech/alice"), [12; 32]).open(&sealed).is_err());

    let policy = CiphertextPolicy::new(parse_policy("PI = Tom and IS_VALID").unwrap());
    let oracle = f.noc.encryption_oracle();
    let obj = encrypt(f.noc.params(), &oracle, &policy, b"reads", 3, Mode::Direct, &mut f.rng).unwrap();
    assert_eq!(decrypt(&key, &obj).unwrap(), b"reads");

    let rec = &f.noc.issued()[0];
    assert_eq!((rec.epoch, rec.digest.clone()), (3, signed.digest()));
}

#[test]
fn noc_rejects_unsigned_and_foreign_requests() {
    let mut f = fixture();
    let mut signed = f.ledger.handle_key_request(&request(&alice(), &alice_attrs(), 1), 0).unwrap();
    let good_sig = signed.ledger_sig.take();
    assert_eq!(f.noc.issue_key(&signed, 0, &mut f.rng), Err(LedgerError::UntrustedRequest));

    signed.ledger_sig = good_sig;
    let mut bumped = signed.clone();
    bumped.epoch = 99;
    bumped.forwarded_name = build_key_request_name(
        &name!("/tntech/ledger"),
        &name!("/genomics/data/sra1"),
        &{
            let mut a = alice_attrs();
            a.set(Attribute::int("epoch", 99).unwrap());
            a
        },
        alice().key_name(),
    );
    assert_eq!(f.noc.issue_key(&bumped, 0, &mut f.rng), Err(LedgerError::UntrustedRequest));

    let mut rogue = LocalLedger::new(name!("/rogue/ledger"), [77; 32], name!("/noc"), 0);
    let eve = UserCredentials::from_seed(name!("/rogue/eve"), [8; 32]);
    rogue.register_user(LedgerRecord::new(name!("/rogue/eve"), eve.public(), alice_attrs()), 0).unwrap();
    let name = build_key_request_name(&name!("/rogue/ledger"), &name!("/genomics/data/sra1"), &alice_attrs(), eve.key_name());
    let rogue_req = rogue.handle_key_request(&KeyRequest::sign(name, [0; 8], &eve), 0).unwrap();
    assert_eq!(
        f.noc.issue_key(&rogue_req, 0, &mut f.rng),
        Err(LedgerError::UnknownLedger(name!("/rogue/ledger")))
    );
    assert_eq!(f.noc.rejected(), 3);
    assert!(f.noc.issued().is_empty());
}

#[test]
fn request_names_round_trip() {
    let mut f = fixture();
    let req = request(&alice(), &alice_attrs(), 9);
    assert_eq!(KeyRequest::from_name(&req.to_name()).unwrap(), req);
    let signed = f.ledger.handle_key_request(&req, 0).unwrap();
    let wire = signed.to_interest_name(&name!("/noc"));
    assert!(wire.to_string().starts_with("/noc/issue-key/tntech/ledger/decryption-key/"));
    assert_eq!(SignedKeyRequest::from_interest_name(&name!("/noc"), &wire).unwrap(), signed);
    let mut unsigned = signed.clone();
    unsigned.ledger_sig = None;
    let back = SignedKeyRequest::from_interest_name(&name!("/noc"), &unsigned.to_interest_name(&name!("/noc"))).unwrap();
    assert_eq!(back, unsigned);
    assert!(SignedKeyRequest::from_interest_name(&name!("/other"), &wire).is_err());
}

#[test]
fn responses_round_trip_and_never_leak_the_master_secret() {
    let mut f = fixture();
    let signed = f.ledger.handle_key_request(&request(&alice(), &alice_attrs(), 1), 0).unwrap();
    let issued = KeyResponse::Issued(f.noc.issue_key(&signed, 0, &mut f.rng).unwrap());
    for r in [issued, KeyResponse::Denied(DenyReason::Revoked)] {
        let bytes = r.to_bytes();
        assert_eq!(KeyResponse::from_bytes(&bytes).unwrap(), r);
        assert!(!bytes.windows(32).any(|w| w == [31u8; 32]));
    }
    let audit = serde_json::to_string(f.noc.issued()).unwrap();
    assert!(!audit.contains(&hex::encode([31u8; 32])));
    assert!(KeyResponse::from_bytes(&[1, 6, 9]).is_err());
}

#[test]
fn ledger_state_persists() {
    let mut f = fixture();
    f.ledger.set_epoch(2, 0);
    f.ledger.handle_key_request(&request(&alice(), &alice_attrs(), 1), 0).unwrap();
    let dir = tempfile::tempdir().unwrap();
    f.ledger.save(dir.path()).unwrap();
    let back = LocalLedger::load(dir.path()).unwrap();
    assert_eq!(back.epoch(), 2);
    assert_eq!(back.log(), f.ledger.log());
    assert_eq!(back.user(&name!("/tntech/alice")), f.ledger.user(&name!("/tntech/alice")));
    assert_eq!(back.identity().verifying_key(), f.ledger.identity().verifying_key());
    let log = std::fs::read_to_string(dir.path().join("log.jsonl")).unwrap();
    assert!(log.lines().next().unwrap().starts_with(r#"{"seq":0,"t":0,"event":"registered""#));
}
