//! In-process simulation of a name-based network.
//!
//! Consumers express Interests by name; nodes answer from their content
//! store, aggregate identical pending Interests, or forward by longest
//! prefix match until an attached [`App`] replies with a signed
//! [`DataPacket`]. Data retraces the pending-interest path and is cached at
//! every hop. Time is virtual and every run is reproducible from its seed.

mod network;
mod packet;
mod segment;
mod store;

pub use network::{
    producer, App, AppContext, AppId, Face, LinkSpec, NackReason, NodeId, NodeStats, Producer,
    Registration, RequestId, SimConfig, SimStats, Simulator, TopologyDescription, TraceEvent,
    TraceKind,
};
pub use packet::{sign_packet, verify_packet, DataPacket, Identity, Interest, TrustStore, DEFAULT_LIFETIME_MS};
pub use segment::{
    base_name, reassemble, segment, segment_index, segment_name, Segment, DEFAULT_MAX_SEGMENT, SEG,
};
pub use store::{ContentStore, CsEntry, DEFAULT_CS_CAPACITY};

use crate::naming::Name;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SimError {
    #[error("interest for {0} timed out")]
    Timeout(Name),
    #[error("no route for {0}")]
    NoRoute(Name),
    #[error("producer has no data for {0}")]
    NoData(Name),
    #[error("signer {0} is not in the trust store")]
    UnknownSigner(Name),
    #[error("segment {0} is missing")]
    MissingSegment(u64),
    #[error("segment {0} appears twice")]
    DuplicateSegment(u64),
    #[error("segment {0} belongs to a different object")]
    MixedObjects(Name),
    #[error("{0} carries no seg annotation")]
    NotSegmented(Name),
    #[error("prefix {0} is already registered")]
    DuplicatePrefix(Name),
    #[error("unknown node {0}")]
    UnknownNode(String),
    #[error("node {0} already exists")]
    DuplicateNode(String),
    #[error("invalid link: {0}")]
    InvalidLink(String),
    #[error("invalid interest: {0}")]
    InvalidInterest(&'static str),
    #[error("invalid topology description: {0}")]
    Description(String),
}

#[cfg(test)]
mod tests;
