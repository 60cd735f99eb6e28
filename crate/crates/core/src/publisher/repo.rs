use std::cell::RefCell;
use std::collections::BTreeMap;
use std::path::Path;
use std::rc::Rc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::naming::Name;
use crate::ndn_sim::{base_name, segment_index, App, AppContext, DataPacket, Interest, NackReason, SEG};
use crate::naming::Component;

use super::PublishError;

/// Where a packet lives in the repo: the name up to its `seg` annotation,
/// or the full name for unsegmented packets. Republishing a slot replaces
/// the previous version.
pub fn slot_of(name: &Name) -> Name {
    match (base_name(name), segment_index(name)) {
        (Some(base), Ok(k)) => base.child(Component::annotation(SEG, k.to_string())),
        _ => name.clone(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub file: String,
    pub name: Name,
    pub bytes: usize,
    pub sha256: String,
}

/// Packet storage behind a repo node.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Repo {
    slots: BTreeMap<Name, DataPacket>,
}

impl Repo {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn shared() -> Rc<RefCell<Repo>> {
        Rc::new(RefCell::new(Repo::new()))
    }

    pub fn insert(&mut self, packet: DataPacket) {
        self.slots.insert(slot_of(&packet.name), packet);
    }

    /// The packet whose name starts with `name`.
    pub fn lookup(&self, name: &Name) -> Option<&DataPacket> {
        let slot = slot_of(name);
        if let Some(p) = self.slots.get(&slot) {
            if name.is_prefix_of(&p.name) {
                return Some(p);
            }
        }
        self.slots
            .range(name.clone()..)
            .take_while(|(s, _)| name.is_prefix_of(s))
            .map(|(_, p)| p)
            .find(|p| name.is_prefix_of(&p.name))
    }

    pub fn get_mut(&mut self, name: &Name) -> Option<&mut DataPacket> {
        self.slots.get_mut(&slot_of(name))
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn packets(&self) -> impl Iterator<Item = &DataPacket> {
        self.slots.values()
    }

    /// Hash over every stored packet in slot order.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        for p in self.slots.values() {
            let bytes = p.to_bytes();
            h.update((bytes.len() as u64).to_le_bytes());
            h.update(&bytes);
        }
        hex::encode(h.finalize())
    }

    /// Packet names routinely exceed file-system name limits, so blobs are
    /// named by the hash of the name; `index.json` maps them back.
    pub fn file_name(name: &Name) -> String {
        format!("{}.pkt", hex::encode(Sha256::digest(name.to_string().as_bytes())))
    }

    pub fn index(&self) -> Vec<IndexEntry> {
        self.slots
            .values()
            .map(|p| {
                let bytes = p.to_bytes();
                IndexEntry {
                    file: Self::file_name(&p.name),
                    name: p.name.clone(),
                    bytes: bytes.len(),
                    sha256: hex::encode(Sha256::digest(&bytes)),
                }
            })
            .collect()
    }

    /// Writes one blob per packet plus `index.json`; stale blobs are removed.
    pub fn save(&self, dir: &Path) -> Result<(), PublishError> {
        let io = |e: std::io::Error| PublishError::Io(e.to_string());
        std::fs::create_dir_all(dir).map_err(io)?;
        let index = self.index();
        for entry in std::fs::read_dir(dir).map_err(io)? {
            let path = entry.map_err(io)?.path();
            if path.extension().is_some_and(|e| e == "pkt") {
                std::fs::remove_file(path).map_err(io)?;
            }
        }
        for p in self.slots.values() {
            std::fs::write(dir.join(Self::file_name(&p.name)), p.to_bytes()).map_err(io)?;
        }
        let text = serde_json::to_string_pretty(&index).map_err(|e| PublishError::Io(e.to_string()))?;
        std::fs::write(dir.join("index.json"), text + "\n").map_err(io)
    }

    pub fn load(dir: &Path) -> Result<Self, PublishError> {
        let io = |e: std::io::Error| PublishError::Io(e.to_string());
        let text = std::fs::read_to_string(dir.join("index.json")).map_err(io)?;
        let index: Vec<IndexEntry> = serde_json::from_str(&text).map_err(|e| PublishError::Io(e.to_string()))?;
        let mut repo = Repo::new();
        for e in index {
            let bytes = std::fs::read(dir.join(&e.file)).map_err(io)?;
            if hex::encode(Sha256::digest(&bytes)) != e.sha256 {
                return Err(PublishError::Io(format!("{} does not match its index hash", e.file)));
            }
            let p = DataPacket::from_bytes(&bytes).map_err(|err| PublishError::Io(err.to_string()))?;
            if p.name != e.name {
                return Err(PublishError::Io(format!("{} holds a different packet", e.file)));
            }
            repo.insert(p);
        }
        Ok(repo)
    }
}

/// Serves a repo's packets in the simulator.
pub struct RepoApp {
    repo: Rc<RefCell<Repo>>,
}

impl RepoApp {
    pub fn new(repo: Rc<RefCell<Repo>>) -> Self {
        RepoApp { repo }
    }
}

impl App for RepoApp {
    fn on_interest(&mut self, interest: &Interest, ctx: &mut AppContext<'_>) {
        let found = self.repo.borrow().lookup(interest.name()).cloned();
        match found {
            Some(p) => ctx.reply(p),
            None => ctx.nack(interest.name().clone(), NackReason::NoData),
        }
    }
}
