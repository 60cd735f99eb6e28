pub mod abe;
pub mod bench;
pub mod cli;
pub mod codec;
pub mod consumer;
pub mod deployment;
pub mod ledger;
pub mod naming;
pub mod ndn_sim;
pub mod policy;
pub mod publisher;
pub mod scenario;
