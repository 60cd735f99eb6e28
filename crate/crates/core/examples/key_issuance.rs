//! The key path without the network: a user signs a request, the local
//! ledger vets it and countersigns, the NOC issues a key sealed to the user.
//! A request the ledger did not sign is refused.
//!
//! ```sh
//! cargo run --example key_issuance
//! ```

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use aabac::abe::DecryptionKey;
use aabac::ledger::{KeyRequest, LedgerRecord, LocalLedger, Noc, UserCredentials};
use aabac::name;
use aabac::naming::build_key_request_name;
use aabac::policy::AttributeSet;

fn main() {
    let mut rng = ChaCha20Rng::seed_from_u64(1);
    let mut noc = Noc::new(name!("/noc"), &name!("/genomics/pub_key"), [31; 32], [32; 32]);
    let mut ledger = LocalLedger::new(name!("/tntech/ledger"), [33; 32], name!("/noc"), 18_738);
    ledger.trust_noc(noc.identity());
    noc.trust_ledger(name!("/tntech/ledger"), ledger.identity().verifying_key());

    let alice = UserCredentials::from_seed(name!("/tntech/alice"), [34; 32]);
    let attrs = AttributeSet::parse_canonical(["PI=Tom", "Role=Graduate Student"]).unwrap();
    ledger.register_user(LedgerRecord::new(name!("/tntech/alice"), alice.public(), attrs.clone()), 0).unwrap();

    let request_name = build_key_request_name(ledger.prefix(), &name!("/genomics/data/sra1"), &attrs, alice.key_name());
    let request = KeyRequest::sign(request_name, [1; 8], &alice);
    let signed = ledger.handle_key_request(&request, 0).unwrap();
    println!("forwarded: {}", signed.to_interest_name(noc.prefix()));

    let sealed = noc.issue_key(&signed, 0, &mut rng).unwrap();
    let key = DecryptionKey::from_bytes(&alice.open(&sealed).unwrap()).unwrap();
    let named: Vec<String> = key.attrs.iter().map(|a| a.canonical()).filter(|a| !a.contains(".bit_")).collect();
    println!("issued to {} at epoch {}: {named:?}", key.holder, key.epoch);

    let mut unsigned = signed.clone();
    unsigned.ledger_sig = None;
    println!("unsigned request: {:?}", noc.issue_key(&unsigned, 0, &mut rng).map(|_| ()));

    ledger.revoke_user(&name!("/tntech/alice"), 10).unwrap();
    let again = KeyRequest::sign(request.request_name.clone(), [2; 8], &alice);
    println!("after revocation: {:?}", ledger.handle_key_request(&again, 10).map(|_| ()));
    print!("{}", ledger.log_jsonl());
}
