//! A complete simulated deployment: consumer, router, repo, local ledger and
//! NOC nodes, wired with routes, trust and one namespace agreement.

use std::cell::RefCell;
use std::rc::Rc;

use sha2::{Digest, Sha256};

use crate::consumer::ConsumerSession;
use crate::ledger::{
    LedgerApp, LedgerError, LedgerRecord, LocalLedger, NamespaceAgreement, Noc, NocApp, RemoteLedger,
    UserCredentials,
};
use crate::name;
use crate::naming::Name;
use crate::ndn_sim::{Identity, NodeId, SimConfig, SimError, Simulator};
use crate::policy::AttributeSet;
use crate::publisher::{AdvanceReport, PublicationRecord, PublishError, PublishRequest, Publisher, Repo, RepoApp};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DeploymentError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
    #[error(transparent)]
    Publish(#[from] PublishError),
}

#[derive(Debug, Clone)]
pub struct DeploymentConfig {
    pub seed: u64,
    pub key_prefix: Name,
    pub ledger_prefix: Name,
    pub noc_prefix: Name,
    /// Days since 1970-01-01 at virtual time zero.
    pub date_origin_days: u64,
    pub link_latency_ms: u64,
    pub trace: bool,
}

impl Default for DeploymentConfig {
    fn default() -> Self {
        DeploymentConfig {
            seed: 1,
            key_prefix: name!("/genomics/pub_key"),
            ledger_prefix: name!("/tntech/ledger"),
            noc_prefix: name!("/noc"),
            date_origin_days: 18_738,
            link_latency_ms: 5,
            trace: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Nodes {
    pub consumer: NodeId,
    pub router: NodeId,
    pub repo: NodeId,
    pub ledger: NodeId,
    pub noc: NodeId,
}

pub struct Deployment {
    pub sim: Simulator,
    pub ledger: Rc<RefCell<LocalLedger>>,
    pub noc: Rc<RefCell<Noc>>,
    pub publisher: Publisher,
    pub nodes: Nodes,
    seed: u64,
    sessions: u64,
}

/// Deterministic 32-byte seed for one role.
pub fn derive_seed(seed: u64, role: &str) -> [u8; 32] {
    Sha256::new()
        .chain_update(b"aabac/deployment")
        .chain_update(seed.to_le_bytes())
        .chain_update(role.as_bytes())
        .finalize()
        .into()
}

impl Deployment {
    /// Builds the network `consumer - router - repo`, `router - ledger - noc`
    /// with no objects published yet.
    pub fn new(config: DeploymentConfig, agreement: NamespaceAgreement) -> Result<Self, DeploymentError> {
        let seed = config.seed;
        let mut sim = Simulator::new(SimConfig { seed, trace: config.trace, ..SimConfig::default() });
        let nodes = Nodes {
            consumer: sim.add_node("consumer")?,
            router: sim.add_node("router")?,
            repo: sim.add_node("repo")?,
            ledger: sim.add_node("ledger")?,
            noc: sim.add_node("noc")?,
        };
        let lat = config.link_latency_ms;
        sim.add_link(nodes.consumer, nodes.router, lat)?;
        sim.add_link(nodes.router, nodes.repo, lat)?;
        sim.add_link(nodes.router, nodes.ledger, lat)?;
        sim.add_link(nodes.ledger, nodes.noc, lat)?;

        let noc = Noc::new(
            config.noc_prefix.clone(),
            &config.key_prefix,
            derive_seed(seed, "noc-master"),
            derive_seed(seed, "noc-identity"),
        );
        let mut ledger = LocalLedger::new(
            config.ledger_prefix.clone(),
            derive_seed(seed, "ledger-identity"),
            config.noc_prefix.clone(),
            config.date_origin_days,
        );
        ledger.trust_noc(noc.identity());
        let mut noc = noc;
        noc.trust_ledger(config.ledger_prefix.clone(), ledger.identity().verifying_key());

        let data_prefix = agreement.prefix.clone();
        let mut agreements = RemoteLedger::new();
        agreements.register_agreement(agreement)?;
        let publisher_name = data_prefix.prefix(1).unwrap_or_else(|| data_prefix.clone()).join(&name!("/publisher"));
        let publisher = Publisher::new(
            Identity::from_seed(publisher_name, derive_seed(seed, "publisher")),
            noc.params().clone(),
            noc.encryption_oracle(),
            config.ledger_prefix.clone(),
            agreements,
            Repo::shared(),
            seed,
        );

        sim.trust_mut().trust_identity(publisher.identity());
        sim.trust_mut().trust_identity(ledger.identity());
        sim.trust_mut().trust_identity(noc.identity());

        let ledger = Rc::new(RefCell::new(ledger));
        let noc = Rc::new(RefCell::new(noc));
        sim.register_prefix(nodes.ledger, config.ledger_prefix.clone(), Box::new(LedgerApp::new(ledger.clone())))?;
        sim.register_prefix(nodes.noc, config.noc_prefix.clone(), Box::new(NocApp::new(noc.clone())))?;
        Ok(Deployment { sim, ledger, noc, publisher, nodes, seed, sessions: 0 })
    }

    /// Adds a consumer node attached to the router.
    pub fn add_consumer_node(&mut self, label: &str) -> Result<NodeId, DeploymentError> {
        let node = self.sim.add_node(label)?;
        let lat = self.sim.neighbors(self.nodes.consumer).first().map_or(5, |(_, l)| *l);
        self.sim.add_link(node, self.nodes.router, lat)?;
        let published: Vec<Name> = self
            .sim
            .routes(self.nodes.router)
            .into_iter()
            .map(|(prefix, _)| prefix)
            .collect();
        for prefix in published {
            self.sim.add_route(node, prefix, self.nodes.router)?;
        }
        Ok(node)
    }

    pub fn credentials(&self, user: &Name) -> UserCredentials {
        UserCredentials::from_seed(user.clone(), derive_seed(self.seed, &format!("user:{user}")))
    }

    /// Registers `user` at the ledger with `attrs` and returns its credentials.
    pub fn register_user(&mut self, user: &Name, attrs: AttributeSet) -> Result<UserCredentials, DeploymentError> {
        self.register_record(user, attrs, None)
    }

    pub fn register_record(
        &mut self,
        user: &Name,
        attrs: AttributeSet,
        valid_until: Option<u64>,
    ) -> Result<UserCredentials, DeploymentError> {
        let creds = self.credentials(user);
        let mut rec = LedgerRecord::new(user.clone(), creds.public(), attrs);
        rec.valid_until = valid_until;
        self.ledger.borrow_mut().register_user(rec, self.sim.now())?;
        Ok(creds)
    }

    pub fn revoke(&mut self, user: &Name) -> Result<(), DeploymentError> {
        Ok(self.ledger.borrow_mut().revoke_user(user, self.sim.now())?)
    }

    /// A session on the default consumer node requesting `claimed`.
    pub fn session(&mut self, creds: UserCredentials, claimed: AttributeSet) -> ConsumerSession {
        let node = self.nodes.consumer;
        self.session_at(creds, claimed, node)
    }

    pub fn session_at(&mut self, creds: UserCredentials, claimed: AttributeSet, node: NodeId) -> ConsumerSession {
        self.sessions += 1;
        ConsumerSession::new(creds, claimed, node, self.seed ^ self.sessions.rotate_left(32))
    }

    /// Publishes at the ledger's current epoch and serves the object from
    /// the repo node.
    pub fn publish(&mut self, req: PublishRequest) -> Result<PublicationRecord, DeploymentError> {
        let epoch = self.ledger.borrow().epoch();
        let base = req.base_name.clone();
        let record = self.publisher.publish(req.epoch(epoch), self.sim.now())?;
        self.sim.register_prefix(self.nodes.repo, base, Box::new(RepoApp::new(self.publisher.repo())))?;
        Ok(record)
    }

    /// Advances `base` and lets the ledger hand out keys for the new epoch.
    pub fn advance_epoch(&mut self, base: &Name) -> Result<AdvanceReport, DeploymentError> {
        let report = self.publisher.advance_epoch(base, self.sim.now())?;
        self.sync_epoch(report.record.epoch);
        Ok(report)
    }

    pub fn full_reencrypt(&mut self, base: &Name) -> Result<AdvanceReport, DeploymentError> {
        let report = self.publisher.full_reencrypt(base, self.sim.now())?;
        self.sync_epoch(report.record.epoch);
        Ok(report)
    }

    fn sync_epoch(&mut self, epoch: u64) {
        let mut ledger = self.ledger.borrow_mut();
        if epoch > ledger.epoch() {
            ledger.set_epoch(epoch, self.sim.now());
        }
    }
}
