//! Publication pipeline: per-segment encryption, naming, signing and repo
//! storage, plus the epoch-advance scheduler that re-encrypts metadata and a
//! seeded sample of data segments.

mod repo;

pub use repo::{slot_of, IndexEntry, Repo, RepoApp};

use std::cell::RefCell;
use std::collections::BTreeMap;
use std::rc::Rc;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::abe::{encrypt, wrap_content_key, AbeError, CiphertextPolicy, ContentKey, Mode, PublicParams};
use crate::ledger::{EncryptionOracle, LedgerError, RemoteLedger};
use crate::naming::{build_published_data_name, Component, Name};
use crate::ndn_sim::{segment_name, DataPacket, Identity, DEFAULT_MAX_SEGMENT};
use crate::policy::{as_text, PolicyAst};

pub const SEGMENTS: &str = "segments";
pub const METADATA_SEGMENTS: &str = "metadata-segments";
pub const EPOCH: &str = "epoch";
pub const CONTENT_KEY: &str = "content-key";
pub const DEFAULT_FRACTION: f64 = 0.10;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PublishError {
    #[error("policy uses attributes outside the namespace agreement: {}", .0.join(", "))]
    AgreementViolation(Vec<String>),
    #[error("no namespace agreement covers {0}")]
    NoAgreement(Name),
    #[error("freshness {freshness_ms} ms must be below the re-encryption interval {interval_ms} ms")]
    FreshnessTooLong { freshness_ms: u64, interval_ms: u64 },
    #[error("next epoch advance is allowed at {earliest}, now is {now}")]
    TooEarly { now: u64, earliest: u64 },
    #[error("{0} has not been published")]
    UnknownObject(Name),
    #[error("{0} is already published")]
    AlreadyPublished(Name),
    #[error("invalid re-encryption policy: {0}")]
    InvalidPolicy(&'static str),
    #[error(transparent)]
    Abe(#[from] AbeError),
    #[error("storage: {0}")]
    Io(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReencryptionPolicy {
    pub interval_ms: u64,
    pub fraction: f64,
    #[serde(with = "hex::serde")]
    pub rng_seed: [u8; 32],
}

impl ReencryptionPolicy {
    pub fn new(interval_ms: u64, fraction: f64, rng_seed: [u8; 32]) -> Result<Self, PublishError> {
        let p = ReencryptionPolicy { interval_ms, fraction, rng_seed };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), PublishError> {
        if self.interval_ms == 0 {
            return Err(PublishError::InvalidPolicy("interval must be positive"));
        }
        if !(0.0..=1.0).contains(&self.fraction) {
            return Err(PublishError::InvalidPolicy("fraction must lie in [0, 1]"));
        }
        Ok(())
    }

    /// ceil(fraction × n), tolerant of floating-point noise.
    pub fn sample_count(&self, n: usize) -> usize {
        let exact = self.fraction * n as f64;
        ((exact - 1e-9).ceil().max(0.0) as usize).min(n)
    }

    /// Data-segment offsets (0-based among data segments) re-encrypted when
    /// entering `epoch`: a uniform sample without replacement, in ascending
    /// order, seeded by `sha256(rng_seed || epoch)`.
    pub fn select(&self, epoch: u64, n: usize) -> Vec<usize> {
        let seed: [u8; 32] = Sha256::new()
            .chain_update(self.rng_seed)
            .chain_update(epoch.to_le_bytes())
            .finalize()
            .into();
        let mut rng = ChaCha20Rng::from_seed(seed);
        let mut picked = rand::seq::index::sample(&mut rng, n, self.sample_count(n)).into_vec();
        picked.sort_unstable();
        picked
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PublicationRecord {
    pub base_name: Name,
    #[serde(with = "as_text")]
    pub policy: PolicyAst,
    pub mode: Mode,
    pub epoch: u64,
    pub segment_count: usize,
    pub metadata_segments: usize,
    pub freshness_ms: u64,
}

/// Inputs of [`Publisher::publish`].
#[derive(Debug, Clone)]
pub struct PublishRequest {
    pub base_name: Name,
    pub metadata: Vec<u8>,
    pub payload: Vec<u8>,
    pub policy: CiphertextPolicy,
    pub mode: Mode,
    pub epoch: u64,
    pub freshness_ms: u64,
    pub reencryption: ReencryptionPolicy,
}

impl PublishRequest {
    /// Direct mode, epoch 0, 1 s freshness, 10 s interval, 10% sampling.
    pub fn new(base_name: Name, policy: impl Into<CiphertextPolicy>) -> Self {
        PublishRequest {
            base_name,
            metadata: Vec::new(),
            payload: Vec::new(),
            policy: policy.into(),
            mode: Mode::Direct,
            epoch: 0,
            freshness_ms: 1_000,
            reencryption: ReencryptionPolicy { interval_ms: 10_000, fraction: DEFAULT_FRACTION, rng_seed: [0; 32] },
        }
    }

    pub fn metadata(mut self, bytes: impl Into<Vec<u8>>) -> Self {
        self.metadata = bytes.into();
        self
    }

    pub fn payload(mut self, bytes: impl Into<Vec<u8>>) -> Self {
        self.payload = bytes.into();
        self
    }

    pub fn mode(mut self, mode: Mode) -> Self {
        self.mode = mode;
        self
    }

    pub fn epoch(mut self, epoch: u64) -> Self {
        self.epoch = epoch;
        self
    }

    pub fn freshness(mut self, ms: u64) -> Self {
        self.freshness_ms = ms;
        self
    }

    pub fn reencryption(mut self, policy: ReencryptionPolicy) -> Self {
        self.reencryption = policy;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AdvanceReport {
    pub record: PublicationRecord,
    /// Indices of the segments that were re-encrypted, ascending.
    pub reencrypted: Vec<usize>,
}

struct Publication {
    record: PublicationRecord,
    policy: CiphertextPolicy,
    slices: Vec<Vec<u8>>,
    epochs: Vec<u64>,
    names: Vec<Name>,
    reencryption: ReencryptionPolicy,
    last_advance: u64,
    content_keys: BTreeMap<u64, (ContentKey, Name)>,
}

pub struct Publisher {
    identity: Identity,
    params: PublicParams,
    oracle: EncryptionOracle,
    ledger_prefix: Name,
    agreements: RemoteLedger,
    repo: Rc<RefCell<Repo>>,
    max_segment: usize,
    rng: ChaCha20Rng,
    objects: BTreeMap<Name, Publication>,
}

fn slices(bytes: &[u8], max: usize, at_least_one: bool) -> Vec<Vec<u8>> {
    if bytes.is_empty() {
        return if at_least_one { vec![Vec::new()] } else { Vec::new() };
    }
    bytes.chunks(max).map(<[u8]>::to_vec).collect()
}

pub fn content_key_name(base: &Name, epoch: u64) -> Name {
    base.child(Component::plain(CONTENT_KEY))
        .child(Component::annotation(EPOCH, epoch.to_string()))
}

impl Publisher {
    pub fn new(
        identity: Identity,
        params: PublicParams,
        oracle: EncryptionOracle,
        ledger_prefix: Name,
        agreements: RemoteLedger,
        repo: Rc<RefCell<Repo>>,
        rng_seed: u64,
    ) -> Self {
        Publisher {
            identity,
            params,
            oracle,
            ledger_prefix,
            agreements,
            repo,
            max_segment: DEFAULT_MAX_SEGMENT,
            rng: ChaCha20Rng::seed_from_u64(rng_seed),
            objects: BTreeMap::new(),
        }
    }

    pub fn with_max_segment(mut self, max_segment: usize) -> Self {
        assert!(max_segment >= 1, "max_segment must be at least 1");
        self.max_segment = max_segment;
        self
    }

    pub fn set_max_segment(&mut self, max_segment: usize) {
        assert!(max_segment >= 1, "max_segment must be at least 1");
        self.max_segment = max_segment;
    }

    pub fn identity(&self) -> &Identity {
        &self.identity
    }

    pub fn params(&self) -> &PublicParams {
        &self.params
    }

    pub fn repo(&self) -> Rc<RefCell<Repo>> {
        self.repo.clone()
    }

    pub fn agreements_mut(&mut self) -> &mut RemoteLedger {
        &mut self.agreements
    }

    pub fn record(&self, base: &Name) -> Option<&PublicationRecord> {
        self.objects.get(base).map(|p| &p.record)
    }

    pub fn records(&self) -> impl Iterator<Item = &PublicationRecord> {
        self.objects.values().map(|p| &p.record)
    }

    /// Earliest virtual time at which `base` may advance its epoch.
    pub fn next_advance_at(&self, base: &Name) -> Option<u64> {
        self.objects.get(base).map(|p| p.last_advance + p.reencryption.interval_ms)
    }

    /// Current epoch of every segment of `base`.
    pub fn segment_epochs(&self, base: &Name) -> Option<&[u64]> {
        self.objects.get(base).map(|p| p.epochs.as_slice())
    }

    /// Current published name of every segment of `base`.
    pub fn segment_names(&self, base: &Name) -> Option<&[Name]> {
        self.objects.get(base).map(|p| p.names.as_slice())
    }

    fn check_agreement(&self, req: &PublishRequest) -> Result<(), PublishError> {
        let agreement = self
            .agreements
            .agreement_for(&req.base_name)
            .map_err(|_| PublishError::NoAgreement(req.base_name.clone()))?;
        let missing = agreement.uncovered(&req.policy.ast);
        if missing.is_empty() {
            Ok(())
        } else {
            Err(PublishError::AgreementViolation(missing.into_iter().collect()))
        }
    }

    pub fn publish(&mut self, req: PublishRequest, now: u64) -> Result<PublicationRecord, PublishError> {
        req.reencryption.validate()?;
        if req.freshness_ms >= req.reencryption.interval_ms {
            return Err(PublishError::FreshnessTooLong {
                freshness_ms: req.freshness_ms,
                interval_ms: req.reencryption.interval_ms,
            });
        }
        if self.objects.contains_key(&req.base_name) {
            return Err(PublishError::AlreadyPublished(req.base_name));
        }
        self.check_agreement(&req)?;
        let mut all = slices(&req.metadata, self.max_segment, true);
        let metadata_segments = all.len();
        all.extend(slices(&req.payload, self.max_segment, false));
        let n = all.len();
        let record = PublicationRecord {
            base_name: req.base_name.clone(),
            policy: req.policy.ast.clone(),
            mode: req.mode,
            epoch: req.epoch,
            segment_count: n,
            metadata_segments,
            freshness_ms: req.freshness_ms,
        };
        let mut publication = Publication {
            record: record.clone(),
            policy: req.policy,
            slices: all,
            epochs: vec![req.epoch; n],
            names: Vec::new(),
            reencryption: req.reencryption,
            last_advance: now,
            content_keys: BTreeMap::new(),
        };
        let mut packets = Vec::with_capacity(n);
        for k in 0..n {
            packets.push(self.seal_segment(&mut publication, k, req.epoch, now)?);
        }
        publication.names = packets.iter().map(|p| p.name.clone()).collect();
        let mut repo = self.repo.borrow_mut();
        for p in packets {
            repo.insert(p);
        }
        drop(repo);
        self.objects.insert(req.base_name, publication);
        Ok(record)
    }

    fn content_key(&mut self, p: &mut Publication, epoch: u64, now: u64) -> Result<(ContentKey, Name), PublishError> {
        if let Some(found) = p.content_keys.get(&epoch) {
            return Ok(found.clone());
        }
        let (key, header) =
            wrap_content_key(&self.params, &self.oracle, &p.policy, epoch, Mode::Hybrid, &mut self.rng)?;
        let name = content_key_name(&p.record.base_name, epoch);
        let packet = DataPacket::signed(name.clone(), header.to_bytes(), p.record.freshness_ms, &self.identity);
        self.repo.borrow_mut().insert(packet);
        let _ = now;
        p.content_keys.insert(epoch, (key.clone(), name.clone()));
        Ok((key, name))
    }

    fn seal_segment(&mut self, p: &mut Publication, k: usize, epoch: u64, now: u64) -> Result<DataPacket, PublishError> {
        let base = &p.record.base_name;
        let mut name = build_published_data_name(
            &segment_name(base, k as u64),
            &self.params.pubkey_name,
            now,
            &self.ledger_prefix,
        )
        .child(Component::annotation(EPOCH, epoch.to_string()));
        let payload = match p.record.mode {
            Mode::Direct => {
                encrypt(&self.params, &self.oracle, &p.policy, &p.slices[k], epoch, Mode::Direct, &mut self.rng)?
                    .to_bytes()
            }
            Mode::Hybrid => {
                let (key, key_name) = self.content_key(p, epoch, now)?;
                name.push(Component::annotation(CONTENT_KEY, key_name.to_string()));
                key.seal(&p.slices[k], &mut self.rng).to_bytes()
            }
        };
        if k == 0 {
            name.push(Component::annotation(SEGMENTS, p.record.segment_count.to_string()));
            name.push(Component::annotation(METADATA_SEGMENTS, p.record.metadata_segments.to_string()));
        }
        Ok(DataPacket::signed(name, payload, p.record.freshness_ms, &self.identity))
    }

    fn reencrypt(&mut self, base: &Name, targets: Vec<usize>, now: u64) -> Result<AdvanceReport, PublishError> {
        let mut p = self.objects.remove(base).ok_or_else(|| PublishError::UnknownObject(base.clone()))?;
        let epoch = p.record.epoch + 1;
        let result = (|| {
            let mut packets = Vec::with_capacity(targets.len());
            for &k in &targets {
                packets.push((k, self.seal_segment(&mut p, k, epoch, now)?));
            }
            Ok::<_, PublishError>(packets)
        })();
        let packets = match result {
            Ok(v) => v,
            Err(e) => {
                self.objects.insert(base.clone(), p);
                return Err(e);
            }
        };
        let mut repo = self.repo.borrow_mut();
        for (k, packet) in packets {
            p.epochs[k] = epoch;
            p.names[k] = packet.name.clone();
            repo.insert(packet);
        }
        drop(repo);
        p.record.epoch = epoch;
        p.last_advance = now;
        let record = p.record.clone();
        self.objects.insert(base.clone(), p);
        Ok(AdvanceReport { record, reencrypted: targets })
    }

    /// Moves `base` to the next epoch, re-encrypting all metadata segments
    /// and a seeded sample of data segments.
    pub fn advance_epoch(&mut self, base: &Name, now: u64) -> Result<AdvanceReport, PublishError> {
        let p = self.objects.get(base).ok_or_else(|| PublishError::UnknownObject(base.clone()))?;
        let earliest = p.last_advance + p.reencryption.interval_ms;
        if now < earliest {
            return Err(PublishError::TooEarly { now, earliest });
        }
        let m = p.record.metadata_segments;
        let data = p.record.segment_count - m;
        let mut targets: Vec<usize> = (0..m).collect();
        targets.extend(p.reencryption.select(p.record.epoch + 1, data).into_iter().map(|i| m + i));
        self.reencrypt(base, targets, now)
    }

    /// Moves `base` to the next epoch, re-encrypting every segment.
    pub fn full_reencrypt(&mut self, base: &Name, now: u64) -> Result<AdvanceReport, PublishError> {
        let n = self
            .objects
            .get(base)
            .ok_or_else(|| PublishError::UnknownObject(base.clone()))?
            .record
            .segment_count;
        self.reencrypt(base, (0..n).collect(), now)
    }
}

impl From<LedgerError> for PublishError {
    fn from(e: LedgerError) -> Self {
        PublishError::Io(e.to_string())
    }
}
