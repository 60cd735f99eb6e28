use std::cell::Cell;
use std::rc::Rc;

use super::*;
use crate::name;

fn repo_id() -> Identity {
    Identity::from_seed(name!("/repo"), [3; 32])
}

/// consumer -- router -- repo, 5 ms per hop; the repo serves `/genomics`
/// with the given freshness and counts its invocations.
fn line(freshness: u64) -> (Simulator, [NodeId; 3], Rc<Cell<u32>>) {
    let mut sim = Simulator::new(SimConfig { seed: 9, ..SimConfig::default() });
    let c = sim.add_node("consumer").unwrap();
    let r = sim.add_node("router").unwrap();
    let p = sim.add_node("repo").unwrap();
    sim.add_link(c, r, 5).unwrap();
    sim.add_link(r, p, 5).unwrap();
    sim.trust_mut().trust_identity(&repo_id());
    let calls = Rc::new(Cell::new(0));
    let seen = calls.clone();
    let id = repo_id();
    sim.register_prefix(
        p,
        name!("/genomics"),
        producer(move |i, _| {
            seen.set(seen.get() + 1);
            let name = i.name().child(crate::naming::Component::annotation("v", "1"));
            Some(DataPacket::signed(name, b"ACGT".to_vec(), freshness, &id))
        }),
    )
    .unwrap();
    (sim, [c, r, p], calls)
}

#[test]
fn second_fetch_is_served_by_router_cache() {
    let (mut sim, [c, r, p], calls) = line(1000);
    let first = sim.fetch(c, name!("/genomics/a")).unwrap();
    assert_eq!(first.payload, b"ACGT");
    assert_eq!(sim.now(), 20);
    sim.clear_content_store(c);
    let second = sim.fetch(c, name!("/genomics/a")).unwrap();
    assert_eq!(second, first);
    assert_eq!(calls.get(), 1);
    assert_eq!(sim.node_stats(r).cs_hits, 1);
    assert_eq!(sim.node_stats(p).interests_in, 1);
    assert_eq!(sim.stats().unverified_deliveries, 0);
}

#[test]
fn consumer_node_caches_too() {
    let (mut sim, [c, r, _], calls) = line(1000);
    sim.fetch(c, name!("/genomics/a")).unwrap();
    sim.fetch(c, name!("/genomics/a")).unwrap();
    assert_eq!(calls.get(), 1);
    assert_eq!(sim.node_stats(c).cs_hits, 1);
    assert_eq!(sim.node_stats(r).interests_in, 1);
}

#[test]
fn identical_concurrent_interests_aggregate() {
    let (mut sim, [c, r, p], calls) = line(1000);
    let c2 = sim.add_node("consumer2").unwrap();
    sim.add_link(c2, r, 5).unwrap();
    sim.announce(p, &name!("/genomics")).unwrap();
    let i1 = sim.make_interest(name!("/genomics/a"));
    let i2 = sim.make_interest(name!("/genomics/a"));
    let a = sim.schedule_interest(c, i1, 0).unwrap();
    let b = sim.schedule_interest(c2, i2, 0).unwrap();
    sim.run_until_idle();
    assert!(sim.result(a).unwrap().is_ok());
    assert!(sim.result(b).unwrap().is_ok());
    assert_eq!(calls.get(), 1);
    assert_eq!(sim.node_stats(p).interests_in, 1);
    assert_eq!(sim.node_stats(r).pit_aggregated, 1);
}

#[test]
fn n_concurrent_interests_reach_upstream_once() {
    let (mut sim, [_, r, p], calls) = line(1000);
    let mut reqs = Vec::new();
    for k in 0..6 {
        let n = sim.add_node(&format!("c{k}")).unwrap();
        sim.add_link(n, r, 1 + k as u64).unwrap();
        reqs.push(n);
    }
    sim.announce(p, &name!("/genomics")).unwrap();
    let ids: Vec<_> = reqs
        .iter()
        .map(|&n| {
            let i = sim.make_interest(name!("/genomics/x"));
            sim.schedule_interest(n, i, 0).unwrap()
        })
        .collect();
    sim.run_until_idle();
    assert!(ids.iter().all(|&id| sim.result(id).unwrap().is_ok()));
    assert_eq!(calls.get(), 1);
}

#[test]
fn fetch_after_freshness_expiry_reaches_repo_again() {
    let (mut sim, [c, _, p], calls) = line(100);
    sim.fetch(c, name!("/genomics/a")).unwrap();
    sim.advance_by(50);
    sim.fetch(c, name!("/genomics/a")).unwrap();
    assert_eq!(calls.get(), 1);
    sim.advance_by(200);
    sim.fetch(c, name!("/genomics/a")).unwrap();
    assert_eq!(calls.get(), 2);
    assert_eq!(sim.node_stats(p).interests_in, 2);
    assert_eq!(sim.stats().freshness_violations, 0);
}

#[test]
fn unregistered_name_has_no_route() {
    let (mut sim, [c, _, _], _) = line(100);
    assert_eq!(sim.fetch(c, name!("/other/x")), Err(SimError::NoRoute(name!("/other/x"))));
}

#[test]
fn duplicate_prefix_rejected() {
    let (mut sim, [c, _, _], _) = line(100);
    let err = sim.register_prefix(c, name!("/genomics"), producer(|_, _| None));
    assert_eq!(err.err(), Some(SimError::DuplicatePrefix(name!("/genomics"))));
}

#[test]
fn declining_producer_nacks() {
    let (mut sim, [c, _, p], _) = line(100);
    sim.register_prefix(p, name!("/empty"), producer(|_, _| None)).unwrap();
    assert_eq!(sim.fetch(c, name!("/empty/a")), Err(SimError::NoData(name!("/empty/a"))));
}

#[test]
fn silent_producer_times_out() {
    struct Silent;
    impl App for Silent {
        fn on_interest(&mut self, _: &Interest, _: &mut AppContext<'_>) {}
    }
    let (mut sim, [c, _, p], _) = line(100);
    sim.register_prefix(p, name!("/slow"), Box::new(Silent)).unwrap();
    let i = sim.make_interest_with_lifetime(name!("/slow/a"), 300).unwrap();
    assert_eq!(sim.express_interest(c, i), Err(SimError::Timeout(name!("/slow/a"))));
    assert_eq!(sim.now(), 300);
}

#[test]
fn longest_registered_prefix_wins() {
    let mut sim = Simulator::new(SimConfig::default());
    let c = sim.add_node("c").unwrap();
    let x = sim.add_node("x").unwrap();
    let y = sim.add_node("y").unwrap();
    sim.add_link(c, x, 1).unwrap();
    sim.add_link(c, y, 1).unwrap();
    let id = repo_id();
    for (node, prefix, tag) in [(x, "/a", b'x'), (y, "/a/b", b'y')] {
        let id = id.clone();
        sim.register_prefix(
            node,
            name!(prefix),
            producer(move |i, _| Some(DataPacket::signed(i.name().clone(), vec![tag], 0, &id))),
        )
        .unwrap();
    }
    let cases = [("/a/b/c", b'y'), ("/a/b", b'y'), ("/a/c", b'x'), ("/a", b'x'), ("/a/bb", b'x')];
    for (n, want) in cases {
        assert_eq!(sim.fetch(c, name!(n)).unwrap().payload, vec![want], "{n}");
    }
}

#[test]
fn routes_follow_shortest_paths() {
    // c - r1 - p costs 10; c - r2 - p costs 4.
    let mut sim = Simulator::new(SimConfig::default());
    let [c, r1, r2, p] = ["c", "r1", "r2", "p"].map(|l| sim.add_node(l).unwrap());
    sim.add_link(c, r1, 5).unwrap();
    sim.add_link(r1, p, 5).unwrap();
    sim.add_link(c, r2, 2).unwrap();
    sim.add_link(r2, p, 2).unwrap();
    sim.announce(p, &name!("/z")).unwrap();
    assert_eq!(sim.routes(c), vec![(name!("/z"), vec![r2])]);
    assert_eq!(sim.routes(r1), vec![(name!("/z"), vec![p])]);
    assert!(sim.routes(p).is_empty());
}

#[test]
fn returned_packets_are_never_stale() {
    let (mut sim, [c, _, _], _) = line(30);
    for k in 0..40u64 {
        let n = name!(&format!("/genomics/o{}", k % 3));
        let got = sim.fetch(c, n).unwrap();
        assert_eq!(got.freshness_ms, 30);
        sim.advance_by(7);
    }
    assert_eq!(sim.stats().freshness_violations, 0);
}

#[test]
fn tampered_cache_entry_is_delivered_but_fails_verification() {
    let (mut sim, [c, r, _], _) = line(1000);
    let got = sim.fetch(c, name!("/genomics/a")).unwrap();
    sim.clear_content_store(c);
    sim.cached_packet_mut(r, &got.name).unwrap().payload[0] ^= 1;
    let bad = sim.fetch(c, name!("/genomics/a")).unwrap();
    assert_eq!(verify_packet(&bad, sim.trust()), Ok(false));
    assert_eq!(sim.stats().unverified_deliveries, 1);
}

#[test]
fn identical_runs_produce_identical_traces() {
    let run = || {
        let (mut sim, [c, _, _], _) = line(40);
        for k in 0..10u64 {
            let i = sim.make_interest(name!(&format!("/genomics/{}", k % 4)));
            sim.schedule_interest(c, i, k * 13).unwrap();
        }
        sim.run_until_idle();
        sim.trace_jsonl()
    };
    let a = run();
    assert_eq!(a, run());
    assert!(a.lines().count() > 20);
    let first: serde_json::Value = serde_json::from_str(a.lines().next().unwrap()).unwrap();
    assert_eq!(first["kind"], "interest");
    assert_eq!(first["node"], "consumer");
}

#[test]
fn duplicate_nonce_is_dropped_as_loop() {
    let (mut sim, [c, r, _], _) = line(100);
    let i = sim.make_interest(name!("/genomics/q"));
    sim.schedule_interest(c, i.clone(), 0).unwrap();
    sim.schedule_interest(c, i, 0).unwrap();
    sim.run_until_idle();
    assert!(sim.trace().iter().any(|e| e.kind == TraceKind::Loop));
    assert_eq!(sim.node_stats(r).interests_in, 1);
}

#[test]
fn topology_description_round_trip() {
    let text = r#"{
        "nodes": ["consumer", "router", "repo"],
        "links": [{"a": "consumer", "b": "router", "latency_ms": 5},
                  {"a": "router", "b": "repo", "latency_ms": 5}],
        "registrations": [{"node": "repo", "prefix": "/genomics"}]
    }"#;
    let desc = TopologyDescription::from_json(text).unwrap();
    let mut sim = desc.build(SimConfig::default()).unwrap();
    let id = repo_id();
    sim.trust_mut().trust_identity(&id);
    desc.register_all(&mut sim, |_| {
        let id = id.clone();
        producer(move |i, _| Some(DataPacket::signed(i.name().clone(), vec![1], 10, &id)))
    })
    .unwrap();
    let c = sim.node_id("consumer").unwrap();
    assert_eq!(sim.fetch(c, name!("/genomics/a")).unwrap().payload, vec![1]);
    assert!(TopologyDescription::from_json("{").is_err());
    let bad = r#"{"nodes": ["a"], "links": [{"a": "a", "b": "zz", "latency_ms": 1}]}"#;
    let err = TopologyDescription::from_json(bad).unwrap().build(SimConfig::default());
    assert!(matches!(err, Err(SimError::UnknownNode(_))));
}
