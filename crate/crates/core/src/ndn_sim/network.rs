use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::naming::Name;

use super::store::{ContentStore, CsEntry, Fib, Pit, PitEntry, DEFAULT_CS_CAPACITY};
use super::{verify_packet, DataPacket, Interest, SimError, TrustStore, DEFAULT_LIFETIME_MS};
use super::segment::DEFAULT_MAX_SEGMENT;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NodeId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct AppId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RequestId(pub u64);

/// Where a packet entered a node from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Face {
    Link(NodeId),
    App(AppId),
    Client(RequestId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NackReason {
    NoRoute,
    NoData,
}

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub seed: u64,
    pub cs_capacity: usize,
    pub default_lifetime_ms: u64,
    pub max_segment: usize,
    pub trace: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            seed: 0,
            cs_capacity: DEFAULT_CS_CAPACITY,
            default_lifetime_ms: DEFAULT_LIFETIME_MS,
            max_segment: DEFAULT_MAX_SEGMENT,
            trace: true,
        }
    }
}

/// A producer or consumer living on a node.
pub trait App {
    fn on_interest(&mut self, interest: &Interest, ctx: &mut AppContext<'_>);

    fn on_data(&mut self, _data: &DataPacket, _ctx: &mut AppContext<'_>) {}

    fn on_nack(&mut self, _name: &Name, _reason: NackReason, _ctx: &mut AppContext<'_>) {}
}

enum Action {
    Reply(DataPacket),
    Nack(Name, NackReason),
    Express(Interest),
}

/// What an app may do in response to a callback. Actions take effect after
/// the callback returns, at the same virtual time.
pub struct AppContext<'a> {
    now: u64,
    node: NodeId,
    default_lifetime_ms: u64,
    rng: &'a mut ChaCha20Rng,
    actions: Vec<Action>,
}

impl AppContext<'_> {
    pub fn now(&self) -> u64 {
        self.now
    }

    pub fn node(&self) -> NodeId {
        self.node
    }

    pub fn rng(&mut self) -> &mut ChaCha20Rng {
        self.rng
    }

    pub fn reply(&mut self, data: DataPacket) {
        self.actions.push(Action::Reply(data));
    }

    pub fn nack(&mut self, name: Name, reason: NackReason) {
        self.actions.push(Action::Nack(name, reason));
    }

    pub fn express(&mut self, name: Name) -> Interest {
        let mut nonce = [0; 8];
        self.rng.fill_bytes(&mut nonce);
        let interest = Interest::new(name, nonce, self.default_lifetime_ms).expect("positive default lifetime");
        self.actions.push(Action::Express(interest.clone()));
        interest
    }
}

/// Wraps a closure as a producer; `None` answers with a NoData nack.
pub struct Producer<F>(pub F);

impl<F> App for Producer<F>
where
    F: FnMut(&Interest, u64) -> Option<DataPacket>,
{
    fn on_interest(&mut self, interest: &Interest, ctx: &mut AppContext<'_>) {
        match (self.0)(interest, ctx.now()) {
            Some(data) => ctx.reply(data),
            None => ctx.nack(interest.name().clone(), NackReason::NoData),
        }
    }
}

pub fn producer<F>(f: F) -> Box<dyn App>
where
    F: FnMut(&Interest, u64) -> Option<DataPacket> + 'static,
{
    Box::new(Producer(f))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct NodeStats {
    pub interests_in: u64,
    pub cs_hits: u64,
    pub pit_aggregated: u64,
    pub forwarded: u64,
    pub data_in: u64,
    pub nacks_sent: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct SimStats {
    pub events: u64,
    pub delivered: u64,
    pub unverified_deliveries: u64,
    pub freshness_violations: u64,
    pub timeouts: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceKind {
    Interest,
    CsHit,
    Aggregate,
    Loop,
    App,
    Forward,
    NoRoute,
    Data,
    Unsolicited,
    Nack,
    Deliver,
    Timeout,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TraceEvent {
    pub t: u64,
    pub node: String,
    pub kind: TraceKind,
    pub name: String,
    pub face: String,
}

struct Node {
    label: String,
    fib: Fib,
    pit: Pit,
    cs: ContentStore,
    apps: BTreeMap<Name, AppId>,
    stats: NodeStats,
}

struct AppSlot {
    node: NodeId,
    prefix: Name,
    app: Box<dyn App>,
    interests: u64,
}

struct Request {
    name: Name,
    result: Option<Result<DataPacket, SimError>>,
}

enum Event {
    Interest { node: NodeId, from: Face, interest: Interest },
    Data { node: NodeId, from: Face, data: DataPacket },
    Nack { node: NodeId, from: Face, name: Name, reason: NackReason },
    ClientTimeout(RequestId),
}

/// Deterministic single-threaded network simulator running on virtual
/// milliseconds. Events run in (time, sequence) order.
pub struct Simulator {
    config: SimConfig,
    now: u64,
    seq: u64,
    rng: ChaCha20Rng,
    nodes: Vec<Node>,
    labels: BTreeMap<String, NodeId>,
    links: BTreeMap<(NodeId, NodeId), u64>,
    apps: Vec<AppSlot>,
    queue: BTreeMap<(u64, u64), Event>,
    requests: BTreeMap<RequestId, Request>,
    trust: TrustStore,
    trace: Vec<TraceEvent>,
    stats: SimStats,
}

fn link_key(a: NodeId, b: NodeId) -> (NodeId, NodeId) {
    (a.min(b), a.max(b))
}

impl Simulator {
    pub fn new(config: SimConfig) -> Self {
        Simulator {
            rng: ChaCha20Rng::seed_from_u64(config.seed),
            config,
            now: 0,
            seq: 0,
            nodes: Vec::new(),
            labels: BTreeMap::new(),
            links: BTreeMap::new(),
            apps: Vec::new(),
            queue: BTreeMap::new(),
            requests: BTreeMap::new(),
            trust: TrustStore::new(),
            trace: Vec::new(),
            stats: SimStats::default(),
        }
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn now(&self) -> u64 {
        self.now
    }

    pub fn trust(&self) -> &TrustStore {
        &self.trust
    }

    pub fn trust_mut(&mut self) -> &mut TrustStore {
        &mut self.trust
    }

    pub fn add_node(&mut self, label: &str) -> Result<NodeId, SimError> {
        if self.labels.contains_key(label) {
            return Err(SimError::DuplicateNode(label.to_owned()));
        }
        let id = NodeId(self.nodes.len());
        self.nodes.push(Node {
            label: label.to_owned(),
            fib: Fib::default(),
            pit: Pit::default(),
            cs: ContentStore::new(self.config.cs_capacity),
            apps: BTreeMap::new(),
            stats: NodeStats::default(),
        });
        self.labels.insert(label.to_owned(), id);
        Ok(id)
    }

    pub fn node_id(&self, label: &str) -> Result<NodeId, SimError> {
        self.labels.get(label).copied().ok_or_else(|| SimError::UnknownNode(label.to_owned()))
    }

    pub fn label(&self, node: NodeId) -> &str {
        &self.nodes[node.0].label
    }

    fn check(&self, node: NodeId) -> Result<(), SimError> {
        if node.0 < self.nodes.len() {
            Ok(())
        } else {
            Err(SimError::UnknownNode(format!("#{}", node.0)))
        }
    }

    pub fn add_link(&mut self, a: NodeId, b: NodeId, latency_ms: u64) -> Result<(), SimError> {
        self.check(a)?;
        self.check(b)?;
        if a == b {
            return Err(SimError::InvalidLink(format!("self-loop at {}", self.label(a))));
        }
        self.links.insert(link_key(a, b), latency_ms);
        Ok(())
    }

    pub fn neighbors(&self, node: NodeId) -> Vec<(NodeId, u64)> {
        self.links
            .iter()
            .filter_map(|(&(a, b), &l)| match node {
                n if n == a => Some((b, l)),
                n if n == b => Some((a, l)),
                _ => None,
            })
            .collect()
    }

    pub fn add_route(&mut self, node: NodeId, prefix: Name, next_hop: NodeId) -> Result<(), SimError> {
        self.check(node)?;
        if !self.links.contains_key(&link_key(node, next_hop)) {
            return Err(SimError::InvalidLink(format!(
                "{} is not adjacent to {}",
                self.label(next_hop),
                self.label(node)
            )));
        }
        self.nodes[node.0].fib.add(prefix, next_hop);
        Ok(())
    }

    /// Installs a route to `prefix` at every node that can reach `target`,
    /// pointing along a shortest path. Ties break toward lower node ids.
    pub fn announce(&mut self, target: NodeId, prefix: &Name) -> Result<(), SimError> {
        self.check(target)?;
        let mut dist: BTreeMap<NodeId, u64> = BTreeMap::from([(target, 0)]);
        let mut toward: BTreeMap<NodeId, NodeId> = BTreeMap::new();
        let mut heap = BinaryHeap::from([Reverse((0u64, target))]);
        let mut done = BTreeSet::new();
        while let Some(Reverse((d, n))) = heap.pop() {
            if !done.insert(n) {
                continue;
            }
            for (m, l) in self.neighbors(n) {
                let nd = d + l;
                let better = match dist.get(&m) {
                    None => true,
                    Some(&old) => nd < old || (nd == old && toward.get(&m).is_some_and(|&h| n < h)),
                };
                if better && !done.contains(&m) {
                    dist.insert(m, nd);
                    toward.insert(m, n);
                    heap.push(Reverse((nd, m)));
                }
            }
        }
        for (node, hop) in toward {
            self.nodes[node.0].fib.add(prefix.clone(), hop);
        }
        Ok(())
    }

    /// Attaches `app` to `node` for `prefix` and announces the prefix.
    pub fn register_prefix(&mut self, node: NodeId, prefix: Name, app: Box<dyn App>) -> Result<AppId, SimError> {
        self.check(node)?;
        if self.apps.iter().any(|s| s.prefix == prefix) {
            return Err(SimError::DuplicatePrefix(prefix));
        }
        let id = AppId(self.apps.len());
        self.nodes[node.0].apps.insert(prefix.clone(), id);
        self.apps.push(AppSlot { node, prefix: prefix.clone(), app, interests: 0 });
        self.announce(node, &prefix)?;
        Ok(id)
    }

    pub fn app_interests(&self, app: AppId) -> u64 {
        self.apps[app.0].interests
    }

    pub fn app_node(&self, app: AppId) -> NodeId {
        self.apps[app.0].node
    }

    pub fn node_stats(&self, node: NodeId) -> NodeStats {
        self.nodes[node.0].stats
    }

    pub fn stats(&self) -> SimStats {
        self.stats
    }

    /// PIT entries at `node`, including expired ones not yet collected.
    pub fn pending_interests(&self, node: NodeId) -> usize {
        self.nodes[node.0].pit.len()
    }

    pub fn routes(&self, node: NodeId) -> Vec<(Name, Vec<NodeId>)> {
        self.nodes[node.0].fib.iter().map(|(n, h)| (n.clone(), h.to_vec())).collect()
    }

    pub fn content_store(&self, node: NodeId) -> impl Iterator<Item = &CsEntry> {
        self.nodes[node.0].cs.iter()
    }

    /// Direct access to a cached packet, for fault injection.
    pub fn cached_packet_mut(&mut self, node: NodeId, name: &Name) -> Option<&mut DataPacket> {
        self.nodes[node.0].cs.get_mut(name).map(|e| &mut e.packet)
    }

    pub fn clear_content_store(&mut self, node: NodeId) {
        self.nodes[node.0].cs.clear();
    }

    pub fn trace(&self) -> &[TraceEvent] {
        &self.trace
    }

    pub fn trace_jsonl(&self) -> String {
        self.trace
            .iter()
            .map(|e| serde_json::to_string(e).expect("trace events serialize") + "\n")
            .collect()
    }

    pub fn make_interest(&mut self, name: Name) -> Interest {
        let lifetime = self.config.default_lifetime_ms;
        self.make_interest_with_lifetime(name, lifetime).expect("positive default lifetime")
    }

    pub fn make_interest_with_lifetime(&mut self, name: Name, lifetime_ms: u64) -> Result<Interest, SimError> {
        let mut nonce = [0; 8];
        self.rng.fill_bytes(&mut nonce);
        Interest::new(name, nonce, lifetime_ms)
    }

    fn push(&mut self, at: u64, event: Event) {
        self.seq += 1;
        self.queue.insert((at, self.seq), event);
    }

    /// Queues a client Interest at virtual time `at` (not before now).
    pub fn schedule_interest(&mut self, node: NodeId, interest: Interest, at: u64) -> Result<RequestId, SimError> {
        self.check(node)?;
        let at = at.max(self.now);
        let id = RequestId(self.requests.len() as u64);
        self.requests.insert(id, Request { name: interest.name().clone(), result: None });
        let deadline = at + interest.lifetime_ms();
        self.push(at, Event::Interest { node, from: Face::Client(id), interest });
        self.push(deadline, Event::ClientTimeout(id));
        Ok(id)
    }

    pub fn result(&self, request: RequestId) -> Option<&Result<DataPacket, SimError>> {
        self.requests.get(&request)?.result.as_ref()
    }

    /// Sends an Interest now and runs the loop until it is answered.
    pub fn express_interest(&mut self, node: NodeId, interest: Interest) -> Result<DataPacket, SimError> {
        let id = self.schedule_interest(node, interest, self.now)?;
        while self.requests[&id].result.is_none() && self.step() {}
        self.requests[&id].result.clone().expect("timeout event resolves every request")
    }

    pub fn fetch(&mut self, node: NodeId, name: Name) -> Result<DataPacket, SimError> {
        let interest = self.make_interest(name);
        self.express_interest(node, interest)
    }

    /// Processes one event; false when the queue is empty.
    pub fn step(&mut self) -> bool {
        let Some(((t, _), event)) = self.queue.pop_first() else {
            return false;
        };
        self.now = t;
        self.stats.events += 1;
        match event {
            Event::Interest { node, from, interest } => self.on_interest(node, from, interest),
            Event::Data { node, from, data } => self.on_data(node, from, data),
            Event::Nack { node, from, name, reason } => self.on_nack(node, from, name, reason),
            Event::ClientTimeout(id) => {
                let req = self.requests.get_mut(&id).expect("known request");
                if req.result.is_none() {
                    req.result = Some(Err(SimError::Timeout(req.name.clone())));
                    self.stats.timeouts += 1;
                    let name = req.name.to_string();
                    self.log_raw(TraceKind::Timeout, String::new(), name, format!("client:{}", id.0));
                }
            }
        }
        true
    }

    pub fn run_until_idle(&mut self) {
        while self.step() {}
    }

    /// Runs every event due by `t`, then sets the clock to `t`.
    pub fn advance_to(&mut self, t: u64) {
        while self.queue.first_key_value().is_some_and(|((at, _), _)| *at <= t) {
            self.step();
        }
        self.now = self.now.max(t);
    }

    pub fn advance_by(&mut self, dt: u64) {
        self.advance_to(self.now + dt);
    }

    fn face_label(&self, face: Face) -> String {
        match face {
            Face::Link(n) => format!("link:{}", self.label(n)),
            Face::App(a) => format!("app:{}", self.apps[a.0].prefix),
            Face::Client(r) => format!("client:{}", r.0),
        }
    }

    fn log(&mut self, kind: TraceKind, node: NodeId, name: &Name, face: Face) {
        if self.config.trace {
            let node = self.label(node).to_owned();
            let face = self.face_label(face);
            self.log_raw(kind, node, name.to_string(), face);
        }
    }

    fn log_raw(&mut self, kind: TraceKind, node: String, name: String, face: String) {
        if self.config.trace {
            self.trace.push(TraceEvent { t: self.now, node, kind, name, face });
        }
    }

    fn on_interest(&mut self, node: NodeId, from: Face, interest: Interest) {
        let now = self.now;
        let name = interest.name().clone();
        self.nodes[node.0].stats.interests_in += 1;
        self.log(TraceKind::Interest, node, &name, from);

        if let Some(entry) = self.nodes[node.0].cs.lookup(&name, now) {
            let fresh = entry.is_fresh(now);
            let packet = entry.packet.clone();
            if !fresh {
                self.stats.freshness_violations += 1;
            }
            self.nodes[node.0].stats.cs_hits += 1;
            self.log(TraceKind::CsHit, node, &packet.name, from);
            self.send_data(node, from, packet);
            return;
        }

        let expiry = now + interest.lifetime_ms();
        if let Some(entry) = self.nodes[node.0].pit.live_mut(&name, now) {
            if !entry.nonces.insert(interest.nonce()) {
                self.log(TraceKind::Loop, node, &name, from);
                return;
            }
            if !entry.in_faces.contains(&from) {
                entry.in_faces.push(from);
            }
            entry.expiry = entry.expiry.max(expiry);
            self.nodes[node.0].stats.pit_aggregated += 1;
            self.log(TraceKind::Aggregate, node, &name, from);
            return;
        }
        self.nodes[node.0].pit.insert(
            name.clone(),
            PitEntry { in_faces: vec![from], nonces: BTreeSet::from([interest.nonce()]), expiry },
        );

        let local = self.nodes[node.0]
            .apps
            .iter()
            .filter(|(p, _)| p.is_prefix_of(&name))
            .max_by_key(|(p, _)| p.len())
            .map(|(_, &a)| a);
        if let Some(app) = local {
            self.apps[app.0].interests += 1;
            self.log(TraceKind::App, node, &name, Face::App(app));
            self.invoke(app, |a, ctx| a.on_interest(&interest, ctx));
            return;
        }

        let came_from = match from {
            Face::Link(n) => Some(n),
            _ => None,
        };
        let hop = self.nodes[node.0]
            .fib
            .longest_match(&name)
            .and_then(|(_, hops)| hops.iter().copied().find(|h| Some(*h) != came_from));
        match hop {
            Some(hop) => {
                self.nodes[node.0].stats.forwarded += 1;
                self.log(TraceKind::Forward, node, &name, Face::Link(hop));
                let at = now + self.links[&link_key(node, hop)];
                self.push(at, Event::Interest { node: hop, from: Face::Link(node), interest });
            }
            None => {
                self.log(TraceKind::NoRoute, node, &name, from);
                self.nodes[node.0].pit.remove(&name);
                self.send_nack(node, from, name, NackReason::NoRoute);
            }
        }
    }

    fn on_data(&mut self, node: NodeId, from: Face, data: DataPacket) {
        let now = self.now;
        self.nodes[node.0].stats.data_in += 1;
        self.log(TraceKind::Data, node, &data.name, from);
        let matched = self.nodes[node.0].pit.take_matching(&data.name, now);
        if matched.is_empty() {
            self.log(TraceKind::Unsolicited, node, &data.name, from);
            return;
        }
        self.nodes[node.0].cs.insert(data.clone(), now);
        let mut faces: Vec<Face> = Vec::new();
        for (_, entry) in matched {
            for f in entry.in_faces {
                if !faces.contains(&f) {
                    faces.push(f);
                }
            }
        }
        for f in faces {
            self.send_data(node, f, data.clone());
        }
    }

    fn on_nack(&mut self, node: NodeId, from: Face, name: Name, reason: NackReason) {
        self.log(TraceKind::Nack, node, &name, from);
        if let Some(entry) = self.nodes[node.0].pit.remove(&name) {
            for f in entry.in_faces {
                self.send_nack(node, f, name.clone(), reason);
            }
        }
    }

    fn send_data(&mut self, node: NodeId, to: Face, data: DataPacket) {
        match to {
            Face::Link(n) => {
                let at = self.now + self.links[&link_key(node, n)];
                self.push(at, Event::Data { node: n, from: Face::Link(node), data });
            }
            Face::App(a) => self.invoke(a, |app, ctx| app.on_data(&data, ctx)),
            Face::Client(id) => {
                if verify_packet(&data, &self.trust) != Ok(true) {
                    self.stats.unverified_deliveries += 1;
                }
                self.stats.delivered += 1;
                self.log(TraceKind::Deliver, node, &data.name, to);
                let req = self.requests.get_mut(&id).expect("known request");
                if req.result.is_none() {
                    req.result = Some(Ok(data));
                }
            }
        }
    }

    fn send_nack(&mut self, node: NodeId, to: Face, name: Name, reason: NackReason) {
        self.nodes[node.0].stats.nacks_sent += 1;
        match to {
            Face::Link(n) => {
                let at = self.now + self.links[&link_key(node, n)];
                self.push(at, Event::Nack { node: n, from: Face::Link(node), name, reason });
            }
            Face::App(a) => self.invoke(a, |app, ctx| app.on_nack(&name, reason, ctx)),
            Face::Client(id) => {
                let req = self.requests.get_mut(&id).expect("known request");
                if req.result.is_none() {
                    req.result = Some(Err(match reason {
                        NackReason::NoRoute => SimError::NoRoute(name),
                        NackReason::NoData => SimError::NoData(name),
                    }));
                }
            }
        }
    }

    fn invoke(&mut self, app: AppId, f: impl FnOnce(&mut dyn App, &mut AppContext<'_>)) {
        let node = self.apps[app.0].node;
        let mut ctx = AppContext {
            now: self.now,
            node,
            default_lifetime_ms: self.config.default_lifetime_ms,
            rng: &mut self.rng,
            actions: Vec::new(),
        };
        f(self.apps[app.0].app.as_mut(), &mut ctx);
        let from = Face::App(app);
        for action in ctx.actions {
            let event = match action {
                Action::Reply(data) => Event::Data { node, from, data },
                Action::Nack(name, reason) => Event::Nack { node, from, name, reason },
                Action::Express(interest) => Event::Interest { node, from, interest },
            };
            self.push(self.now, event);
        }
    }
}

/// JSON topology file: nodes, links and prefix registrations.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopologyDescription {
    pub nodes: Vec<String>,
    pub links: Vec<LinkSpec>,
    #[serde(default)]
    pub registrations: Vec<Registration>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinkSpec {
    pub a: String,
    pub b: String,
    pub latency_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Registration {
    pub node: String,
    pub prefix: Name,
    #[serde(default)]
    pub app: Option<String>,
}

impl TopologyDescription {
    pub fn from_json(text: &str) -> Result<Self, SimError> {
        serde_json::from_str(text).map_err(|e| SimError::Description(e.to_string()))
    }

    /// Builds nodes and links; registrations are left to [`Self::register_all`].
    pub fn build(&self, config: SimConfig) -> Result<Simulator, SimError> {
        let mut sim = Simulator::new(config);
        for n in &self.nodes {
            sim.add_node(n)?;
        }
        for l in &self.links {
            let (a, b) = (sim.node_id(&l.a)?, sim.node_id(&l.b)?);
            sim.add_link(a, b, l.latency_ms)?;
        }
        Ok(sim)
    }

    pub fn register_all(
        &self,
        sim: &mut Simulator,
        mut make: impl FnMut(&Registration) -> Box<dyn App>,
    ) -> Result<Vec<AppId>, SimError> {
        self.registrations
            .iter()
            .map(|r| {
                let node = sim.node_id(&r.node)?;
                sim.register_prefix(node, r.prefix.clone(), make(r))
            })
            .collect()
    }
}
