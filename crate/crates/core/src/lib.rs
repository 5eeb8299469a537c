//! Verifiable consent ledger and data-protection compliance audit.
//!
//! The crate records cryptographic proof-of-consent events, stores all
//! evidence in a hash-chained append-only ledger, checks processing activity
//! against consent, lints data-collection plans for minimization, and runs a
//! weighted audit that yields a trust score and an auditor-signed
//! certificate.
//!
//! Module map:
//! - [`canonical`] — the deterministic text serialization everything is
//!   signed and hashed through
//! - [`crypto`] — identities, Ed25519 signatures, SHA-256 digests, key files
//! - [`tsa`] — timestamp tokens and the issuing authority
//! - [`consent`] — consent forms, validation, and lifecycle events
//! - [`ledger`] — the tamper-evident chain, inclusion proofs, anchoring
//! - [`records`] — processing, erasure, breach, correction, restriction
//!   evidence records
//! - [`compliance`] — the checkers that compare activity against consent
//! - [`minimization`] — category taxonomy and collection-plan linting
//! - [`audit`] — check registry, trust score, grading, certificates

#![forbid(unsafe_code)]

pub mod audit;
pub mod canonical;
pub mod clock;
pub mod compliance;
pub mod consent;
pub mod crypto;
pub mod hex;
pub mod ledger;
pub mod minimization;
pub mod records;
pub mod testkit;
pub mod tsa;
