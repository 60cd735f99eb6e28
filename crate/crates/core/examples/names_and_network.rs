//! Build the names used on the wire and push an Interest through a small
//! simulated network with a caching router in the middle.
//!
//! ```sh
//! cargo run --example names_and_network
//! ```

use aabac::name;
use aabac::naming::{build_key_request_name, build_published_data_name, extract_key_locator, parse_name};
use aabac::ndn_sim::{producer, DataPacket, Identity, SimConfig, Simulator};
use aabac::policy::AttributeSet;

fn main() {
    let data = build_published_data_name(
        &name!("/Genome1/SRA/9605/9609/RNA-Seq/1"),
        &name!("/genomics/pub_key"),
        1645780366,
        &name!("/tntech/ledger"),
    );
    println!("published: {data}");
    println!("ask for keys at: {}", extract_key_locator(&data).unwrap().ledger_prefix);

    let attrs = AttributeSet::parse_canonical(["PI=Tom", "Role=Graduate Student"]).unwrap();
    let req = build_key_request_name(&name!("/tntech/ledger"), &name!("/genomics/data/sra1"), &attrs, &name!("/tntech/alice/pub_key"));
    println!("key request: {req}");
    let colon_form = parse_name("/tntech/ledger/decryption-key/data:/genomics/data/sra1/PI=Tom/Alice-pub-key: /tntech/alice/pub_key").unwrap();
    println!("colon form, canonical: {colon_form}");

    let mut sim = Simulator::new(SimConfig { trace: true, ..SimConfig::default() });
    let alice = sim.add_node("alice").unwrap();
    let router = sim.add_node("router").unwrap();
    let repo = sim.add_node("repo").unwrap();
    sim.add_link(alice, router, 5).unwrap();
    sim.add_link(router, repo, 20).unwrap();
    let signer = Identity::from_seed(name!("/genomics/publisher"), [3; 32]);
    sim.trust_mut().trust_identity(&signer);
    sim.register_prefix(
        repo,
        name!("/genomics/data"),
        producer(move |interest, _now| Some(DataPacket::signed(interest.name().clone(), b"reads".to_vec(), 10_000, &signer))),
    )
    .unwrap();

    for _ in 0..2 {
        let start = sim.now();
        let pkt = sim.fetch(alice, name!("/genomics/data/sra1/seg=0")).unwrap();
        println!("{} in {} ms", pkt.name, sim.now() - start);
        sim.clear_content_store(alice);
    }
    println!("router cache hits: {}", sim.node_stats(router).cs_hits);
    print!("{}", sim.trace_jsonl());
}
