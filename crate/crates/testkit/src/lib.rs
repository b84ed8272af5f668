//! Seeded data generators and independent oracles for the netinfer test
//! suites. Nothing here depends on the crates under test: generators emit
//! plain text and JSON, and oracles recompute expected values from the
//! generator's own manifest.

pub mod corpus;
pub mod dot;
pub mod landscape;
pub mod oracles;
pub mod programs;
