use super::*;
use crate::name;

fn alice_attrs() -> Vec<Attribute> {
    vec![parse_attribute("PI=Tom").unwrap(), parse_attribute("Role=Graduate Student").unwrap()]
}

fn setup(dir: &Path) {
    State::setup(dir, SetupArgs::default()).unwrap();
}

fn publish(dir: &Path) {
    let mut s = State::open(dir).unwrap();
    let mut args = default_publish(name!("/genomics/data/sra1"), "(PI = Tom) and (Role = Graduate Student)".into());
    args.metadata = Some(s.store_blob(b"metadata").unwrap());
    args.payload = Some(s.store_blob(&vec![7u8; 20_000]).unwrap());
    s.apply(Action::Publish(args)).unwrap();
}

#[test]
fn setup_publish_fetch_happy_path() {
    let dir = tempfile::tempdir().unwrap();
    setup(dir.path());
    State::open(dir.path())
        .unwrap()
        .apply(Action::Keygen { user: name!("/tntech/alice"), attrs: alice_attrs(), valid_until: None })
        .unwrap();
    publish(dir.path());
    let out = State::open(dir.path())
        .unwrap()
        .apply(Action::Fetch { user: name!("/tntech/alice"), name: name!("/genomics/data/sra1") })
        .unwrap();
    let obj = out.object.unwrap();
    assert_eq!(obj.metadata, b"metadata");
    assert_eq!(obj.payload, vec![7u8; 20_000]);
    assert!(out.lines.iter().any(|l| l.starts_with("interest /tntech/ledger/decryption-key/")));
    assert!(dir.path().join("repo/index.json").exists());
    assert!(dir.path().join("ledger/users.json").exists());
    assert_eq!(fs::read_to_string(dir.path().join(JOURNAL)).unwrap().lines().count(), 4);
}

#[test]
fn fetch_before_publish_has_no_route() {
    let dir = tempfile::tempdir().unwrap();
    setup(dir.path());
    let mut s = State::open(dir.path()).unwrap();
    s.apply(Action::Keygen { user: name!("/tntech/alice"), attrs: alice_attrs(), valid_until: None }).unwrap();
    let err = s.apply(Action::Fetch { user: name!("/tntech/alice"), name: name!("/genomics/data/sra1") }).unwrap_err();
    assert!(err.to_string().contains("no route"), "{err}");
    assert_eq!(err.exit_code(), 1);
}

#[test]
fn revoke_advance_fetch_is_denied() {
    let dir = tempfile::tempdir().unwrap();
    setup(dir.path());
    State::open(dir.path())
        .unwrap()
        .apply(Action::Keygen { user: name!("/tntech/alice"), attrs: alice_attrs(), valid_until: None })
        .unwrap();
    publish(dir.path());
    let fetch = Action::Fetch { user: name!("/tntech/alice"), name: name!("/genomics/data/sra1") };
    State::open(dir.path()).unwrap().apply(fetch.clone()).unwrap();
    State::open(dir.path()).unwrap().apply(Action::Revoke { user: name!("/tntech/alice") }).unwrap();
    let out = State::open(dir.path())
        .unwrap()
        .apply(Action::AdvanceEpoch { name: name!("/genomics/data/sra1"), full: false })
        .unwrap();
    assert!(out.lines[0].ends_with("epoch 1"));
    let err = State::open(dir.path()).unwrap().apply(fetch).unwrap_err();
    assert!(err.to_string().contains("access denied"), "{err}");
}

#[test]
fn setup_twice_and_missing_state_are_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    setup(dir.path());
    assert_eq!(State::setup(dir.path(), SetupArgs::default()).err().map(|e| e.exit_code()), Some(2));
    let empty = tempfile::tempdir().unwrap();
    assert_eq!(State::open(empty.path()).err().map(|e| e.exit_code()), Some(2));
}

#[test]
fn replay_reproduces_state() {
    let dir = tempfile::tempdir().unwrap();
    setup(dir.path());
    State::open(dir.path())
        .unwrap()
        .apply(Action::Keygen { user: name!("/tntech/alice"), attrs: alice_attrs(), valid_until: None })
        .unwrap();
    publish(dir.path());
    let a = State::open(dir.path()).unwrap();
    let b = State::open(dir.path()).unwrap();
    assert_eq!(a.deployment().publisher.repo().borrow().digest(), b.deployment().publisher.repo().borrow().digest());
    assert_eq!(a.deployment().sim.now(), b.deployment().sim.now());
}
