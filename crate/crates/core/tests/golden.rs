//! Byte-exact fixtures under `tests/golden/`. Set `UPDATE_GOLDEN=1` to
//! rewrite them after an intentional format change.

mod common;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use aabac::abe::{encrypt, keygen, setup, CiphertextPolicy, Mode};
use aabac::bench::{run, Experiment, CSV_HEADER};
use aabac::name;
use aabac::ndn_sim::{DataPacket, Identity};
use aabac::policy::parse_policy;

use common::*;

fn check(file: &str, actual: &str) {
    if let Err(e) = golden(file, actual) {
        panic!("{e}");
    }
}

#[test]
fn wire_blobs() {
    let (params, master) = setup([42; 32]);
    let key = keygen(&master, &name!("/tntech/alice"), &alice_attrs(), 3, 18_738).unwrap();
    let policy = CiphertextPolicy::new(parse_policy("(PI = Tom) and (level >= 5)").unwrap()).with_width("level", 8);
    let mut rng = ChaCha20Rng::seed_from_u64(1);
    let direct = encrypt(&params, &master, &policy, b"genome", 3, Mode::Direct, &mut rng).unwrap();
    let hybrid = encrypt(&params, &master, &policy, b"genome", 3, Mode::Hybrid, &mut rng).unwrap();
    let signer = Identity::from_seed(name!("/genomics/publisher"), [5; 32]);
    let packet = DataPacket::signed(name!("/genomics/data/sra1/seg=0"), b"payload".to_vec(), 1_000, &signer);
    let rows = [
        ("params", params.to_bytes()),
        ("key", key.to_bytes()),
        ("object-direct", direct.to_bytes()),
        ("header-hybrid", hybrid.header.to_bytes()),
        ("body-hybrid", hybrid.body.to_bytes()),
        ("packet", packet.to_bytes()),
    ];
    let text: String = rows.iter().map(|(label, b)| format!("{label} {}\n", hex::encode(b))).collect();
    check("wire.hex", &text);
}

#[test]
fn name_table() {
    check("name_table.tsv", &name_table_canonical().unwrap());
}

#[test]
fn alice_trace_and_ledger_log() {
    let d = alice_walkthrough();
    check("alice_trace.jsonl", &d.sim.trace_jsonl());
    check("alice_ledger_log.jsonl", &d.ledger.borrow().log_jsonl());
}

#[test]
fn alice_repo_index() {
    let d = alice_walkthrough();
    let index = d.publisher.repo().borrow().index();
    check("alice_repo_index.json", &(serde_json::to_string_pretty(&index).unwrap() + "\n"));
}

#[test]
fn overhead_csv() {
    let csv = run(Experiment::Overhead, &[5, 10, 20, 50], 2, 7).to_csv();
    assert!(csv.starts_with(&format!("{CSV_HEADER}\n")));
    check("overhead.csv", &csv);
}
