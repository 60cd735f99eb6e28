//! Full deployment on a simulated network: publish an object, let two
//! students read it, revoke one and advance the object's epoch. The
//! revoked student keeps an old key but can no longer read.
//!
//! ```sh
//! cargo run --example publish_and_revoke
//! ```

use aabac::abe::{CiphertextPolicy, Mode};
use aabac::deployment::{Deployment, DeploymentConfig};
use aabac::ledger::NamespaceAgreement;
use aabac::name;
use aabac::policy::{parse_policy, AttributeSet};
use aabac::publisher::{PublishRequest, ReencryptionPolicy};

fn main() {
    let template = parse_policy("PI = Tom and (Role = Graduate Student or Role = PI)").unwrap();
    let agreement = NamespaceAgreement::new(name!("/genomics/data"), ["PI", "Role"], template.clone(), name!("/noc")).unwrap();
    let mut d = Deployment::new(DeploymentConfig::default(), agreement).unwrap();
    d.publisher.set_max_segment(1_000);

    let sra1 = name!("/genomics/data/sra1");
    let req = PublishRequest::new(sra1.clone(), CiphertextPolicy::new(template))
        .metadata(b"SRA run 9605, RNA-Seq".to_vec())
        .payload(vec![b'A'; 6_000])
        .mode(Mode::Direct)
        .freshness(1_000)
        .reencryption(ReencryptionPolicy::new(60_000, 0.25, [7; 32]).unwrap());
    let record = d.publish(req).unwrap();
    println!("published {} in {} segments at epoch {}", record.base_name, record.segment_count, record.epoch);

    let attrs = AttributeSet::parse_canonical(["PI=Tom", "Role=Graduate Student"]).unwrap();
    let mut sessions = Vec::new();
    for user in ["alice", "bob"] {
        let user = name!("/tntech").child(aabac::naming::Component::plain(user));
        let creds = d.register_user(&user, attrs.clone()).unwrap();
        let mut s = d.session(creds, attrs.clone());
        let obj = s.fetch_and_decrypt(&mut d.sim, &sra1).unwrap();
        println!("{user}: {} ({} key request)", String::from_utf8_lossy(&obj.metadata), obj.key_requests);
        sessions.push(s);
    }

    d.revoke(&name!("/tntech/bob")).unwrap();
    d.sim.advance_by(60_000);
    let report = d.advance_epoch(&sra1).unwrap();
    println!("epoch {}: reencrypted segments {:?}", report.record.epoch, report.reencrypted);
    d.sim.advance_by(2_000);

    for s in &mut sessions {
        match s.fetch_and_decrypt(&mut d.sim, &sra1) {
            Ok(obj) => println!("{}: read {} bytes with a key for epoch {}", s.user(), obj.payload.len(), obj.key_epoch),
            Err(e) => println!("{}: {e}", s.user()),
        }
    }
}
