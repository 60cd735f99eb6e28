use std::collections::{BTreeMap, BTreeSet};

use crate::naming::Name;

use super::{DataPacket, Face, NodeId};

pub const DEFAULT_CS_CAPACITY: usize = 1024;

#[derive(Debug, Clone)]
pub struct CsEntry {
    pub packet: DataPacket,
    pub inserted_at: u64,
    order: u64,
    last_used: u64,
}

impl CsEntry {
    pub fn is_fresh(&self, now: u64) -> bool {
        now < self.inserted_at.saturating_add(self.packet.freshness_ms)
    }
}

/// Bounded packet cache with LRU eviction. Lookups honour freshness.
#[derive(Debug, Clone)]
pub struct ContentStore {
    capacity: usize,
    entries: BTreeMap<Name, CsEntry>,
    lru: BTreeMap<u64, Name>,
    tick: u64,
}

impl ContentStore {
    pub fn new(capacity: usize) -> Self {
        ContentStore { capacity, entries: BTreeMap::new(), lru: BTreeMap::new(), tick: 0 }
    }

    fn bump(&mut self) -> u64 {
        self.tick += 1;
        self.tick
    }

    pub fn insert(&mut self, packet: DataPacket, now: u64) {
        if self.capacity == 0 {
            return;
        }
        if let Some(old) = self.entries.remove(&packet.name) {
            self.lru.remove(&old.last_used);
        }
        while self.entries.len() >= self.capacity {
            let (_, victim) = self.lru.pop_first().expect("lru tracks every entry");
            self.entries.remove(&victim);
        }
        let t = self.bump();
        self.lru.insert(t, packet.name.clone());
        self.entries.insert(
            packet.name.clone(),
            CsEntry { packet, inserted_at: now, order: t, last_used: t },
        );
    }

    /// Most recently inserted fresh packet whose name starts with `prefix`.
    pub fn lookup(&mut self, prefix: &Name, now: u64) -> Option<&CsEntry> {
        let mut best: Option<(u64, Name)> = None;
        let mut stale = Vec::new();
        for (name, e) in self.entries.range(prefix.clone()..) {
            if !prefix.is_prefix_of(name) {
                break;
            }
            if !e.is_fresh(now) {
                stale.push(name.clone());
            } else if best.as_ref().map_or(true, |(o, _)| e.order > *o) {
                best = Some((e.order, name.clone()));
            }
        }
        for name in stale {
            self.remove(&name);
        }
        let (_, name) = best?;
        let t = self.bump();
        let e = self.entries.get_mut(&name).expect("entry found above");
        self.lru.remove(&e.last_used);
        self.lru.insert(t, name);
        e.last_used = t;
        Some(e)
    }

    pub fn remove(&mut self, name: &Name) -> Option<CsEntry> {
        let e = self.entries.remove(name)?;
        self.lru.remove(&e.last_used);
        Some(e)
    }

    pub fn get_mut(&mut self, name: &Name) -> Option<&mut CsEntry> {
        self.entries.get_mut(name)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &CsEntry> {
        self.entries.values()
    }

    pub fn clear(&mut self) {
        self.entries.clear();
        self.lru.clear();
    }
}

#[derive(Debug, Clone)]
pub struct PitEntry {
    pub in_faces: Vec<Face>,
    pub nonces: BTreeSet<[u8; 8]>,
    pub expiry: u64,
}

#[derive(Debug, Clone, Default)]
pub struct Pit {
    entries: BTreeMap<Name, PitEntry>,
}

impl Pit {
    /// Live entry for exactly `name`; expired entries are dropped on sight.
    pub fn live_mut(&mut self, name: &Name, now: u64) -> Option<&mut PitEntry> {
        if self.entries.get(name).is_some_and(|e| e.expiry <= now) {
            self.entries.remove(name);
        }
        self.entries.get_mut(name)
    }

    pub fn insert(&mut self, name: Name, entry: PitEntry) {
        self.entries.insert(name, entry);
    }

    pub fn remove(&mut self, name: &Name) -> Option<PitEntry> {
        self.entries.remove(name)
    }

    /// Removes and returns every live entry whose name is a prefix of `data_name`.
    pub fn take_matching(&mut self, data_name: &Name, now: u64) -> Vec<(Name, PitEntry)> {
        let mut out = Vec::new();
        for k in 1..=data_name.len() {
            let p = data_name.prefix(k).expect("k within bounds");
            if let Some(e) = self.entries.remove(&p) {
                if e.expiry > now {
                    out.push((p, e));
                }
            }
        }
        out
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

}

#[derive(Debug, Clone, Default)]
pub struct Fib {
    routes: BTreeMap<Name, Vec<NodeId>>,
}

impl Fib {
    pub fn add(&mut self, prefix: Name, hop: NodeId) {
        let hops = self.routes.entry(prefix).or_default();
        if !hops.contains(&hop) {
            hops.push(hop);
        }
    }

    pub fn longest_match(&self, name: &Name) -> Option<(&Name, &[NodeId])> {
        (1..=name.len()).rev().find_map(|k| {
            let p = name.prefix(k).expect("k within bounds");
            self.routes.get_key_value(&p).map(|(n, h)| (n, h.as_slice()))
        })
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Name, &[NodeId])> {
        self.routes.iter().map(|(n, h)| (n, h.as_slice()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::name;
    use crate::ndn_sim::Identity;

    fn pkt(n: &str, fresh: u64) -> DataPacket {
        DataPacket::signed(name!(n), vec![], fresh, &Identity::from_seed(name!("/s"), [1; 32]))
    }

    #[test]
    fn lookup_respects_freshness_and_prefix() {
        let mut cs = ContentStore::new(8);
        cs.insert(pkt("/a/b/seg=0/x=1", 100), 0);
        assert!(cs.lookup(&name!("/a/b/seg=0"), 99).is_some());
        assert!(cs.lookup(&name!("/a/c"), 50).is_none());
        assert!(cs.lookup(&name!("/a/b/seg=0"), 100).is_none());
        assert!(cs.is_empty());
    }

    #[test]
    fn prefix_lookup_prefers_newest() {
        let mut cs = ContentStore::new(8);
        cs.insert(pkt("/a/seg=0/epoch=2", 100), 0);
        cs.insert(pkt("/a/seg=0/epoch=1", 100), 5);
        let e = cs.lookup(&name!("/a/seg=0"), 10).unwrap();
        assert_eq!(e.packet.name, name!("/a/seg=0/epoch=1"));
    }

    #[test]
    fn lru_eviction() {
        let mut cs = ContentStore::new(2);
        cs.insert(pkt("/a", 100), 0);
        cs.insert(pkt("/b", 100), 0);
        assert!(cs.lookup(&name!("/a"), 1).is_some());
        cs.insert(pkt("/c", 100), 1);
        assert_eq!(cs.len(), 2);
        assert!(cs.lookup(&name!("/b"), 1).is_none());
        assert!(cs.lookup(&name!("/a"), 1).is_some());
    }

    #[test]
    fn fib_longest_prefix() {
        let mut fib = Fib::default();
        fib.add(name!("/a"), NodeId(1));
        fib.add(name!("/a/b"), NodeId(2));
        let cases = [("/a/b/c", Some(2)), ("/a/c", Some(1)), ("/a", Some(1)), ("/b", None)];
        for (n, want) in cases {
            assert_eq!(fib.longest_match(&name!(n)).map(|(_, h)| h[0].0), want, "{n}");
        }
    }

    #[test]
    fn pit_expiry() {
        let mut pit = Pit::default();
        let e = PitEntry { in_faces: vec![], nonces: BTreeSet::new(), expiry: 10 };
        pit.insert(name!("/a"), e);
        assert!(pit.live_mut(&name!("/a"), 9).is_some());
        assert!(pit.live_mut(&name!("/a"), 10).is_none());
        assert_eq!(pit.len(), 0);
    }
}
