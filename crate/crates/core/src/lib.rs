//! Network inference over multi-source discovery data.
//!
//! Raw records are mapped and checked ([`ingestion`], [`conformance`]),
//! stored as typed entities ([`model`]), reconstructed with Datalog rules
//! ([`reconstruction`]) and published as a versioned [`network::Network`]
//! that can be exported and queried ([`query`]).

pub mod canonical;
pub mod conformance;
pub mod ingestion;
pub mod model;
pub mod network;
pub mod query;
pub mod reconstruction;
