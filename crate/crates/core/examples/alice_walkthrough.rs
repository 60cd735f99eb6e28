//! Alice fetches /genomics/data/sra1 for the first time. Prints each
//! protocol step she takes and the network events behind them.
//!
//! ```sh
//! cargo run --example alice_walkthrough
//! ```

use aabac::abe::CiphertextPolicy;
use aabac::deployment::{Deployment, DeploymentConfig};
use aabac::ledger::NamespaceAgreement;
use aabac::name;
use aabac::policy::{parse_policy, AttributeSet};
use aabac::publisher::PublishRequest;

fn main() {
    let template = parse_policy("PI = Tom and (Role = Graduate Student or Role = PI)").unwrap();
    let agreement = NamespaceAgreement::new(name!("/genomics/data"), ["PI", "Role"], template.clone(), name!("/noc")).unwrap();
    let mut d = Deployment::new(DeploymentConfig { trace: true, ..DeploymentConfig::default() }, agreement).unwrap();
    let sra1 = name!("/genomics/data/sra1");
    d.publish(PublishRequest::new(sra1.clone(), CiphertextPolicy::new(template)).metadata(b"sample metadata".to_vec()))
        .unwrap();

    let attrs = AttributeSet::parse_canonical(["PI=Tom", "Role=Graduate Student"]).unwrap();
    let creds = d.register_user(&name!("/tntech/alice"), attrs.clone()).unwrap();
    let mut alice = d.session(creds, attrs);
    let obj = alice.fetch_and_decrypt(&mut d.sim, &sra1).unwrap();

    for step in alice.steps() {
        let mut shown = step.name.clone();
        if shown.len() > 110 {
            shown.truncate(110);
            shown.push_str("...");
        }
        println!("{:>4} ms  {:<9} {shown}", step.t, step.step);
    }
    println!("decrypted: {}", String::from_utf8_lossy(&obj.metadata));
    println!("{} network events; rerun with --trace to print them", d.sim.trace().len());
    if std::env::args().any(|a| a == "--trace") {
        print!("{}", d.sim.trace_jsonl());
    }
}
