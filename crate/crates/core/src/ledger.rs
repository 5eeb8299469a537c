//! The append-only, hash-chained evidence ledger.
//!
//! Every piece of evidence — consent events, propagation receipts,
//! processing activity, erasure receipts, breach records, corrections,
//! disclosure restrictions, and anchor checkpoints — lives in one chain per
//! fiduciary. Each entry binds:
//!
//! ```text
//! entry_hash = H({index, kind, payload_digest, prev_hash})
//! prev_hash  = previous entry_hash (zero digest at index 0)
//! payload_digest = H(canonical payload bytes)
//! ```
//!
//! so a single flipped bit anywhere in the persisted bytes breaks either a
//! payload digest, a header hash, or a signature. Appending is the only
//! state change; nothing is ever rewritten.
//!
//! The persisted form is line-oriented: one canonical entry per line, plus a
//! `<path>.head` sidecar holding the expected head for crash detection.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::canonical::{Canonical, CanonicalError, FromValue, MapBuilder, MapReader, Value};
use crate::consent::{ConsentEvent, EventKind, WithdrawalPropagation};
use crate::crypto::{Digest, PartyDirectory, PartyId, Role, Signature, Signer};
use crate::records::{
    BreachRecord, CorrectionEvent, ErasureReceipt, ProcessingEvent, RestrictionMarker,
};
use crate::tsa::TimestampToken;

#[derive(Debug, thiserror::Error)]
pub enum LedgerError {
    #[error("index {index} out of range (ledger has {len} entries)")]
    OutOfRange { index: u64, len: u64 },
    #[error("ledger is empty")]
    Empty,
    #[error("payload rejected: {0}")]
    PayloadRejected(String),
    #[error("FORKED_CONSENT: entries {first} and {second} both supersede {parent}")]
    ForkedConsent {
        parent: Digest,
        first: u64,
        second: u64,
    },
    #[error("chain invalid at index {first_bad_index}: {reason}")]
    ChainInvalid {
        first_bad_index: u64,
        reason: String,
    },
    #[error("head sidecar mismatch: {0}")]
    HeadMismatch(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {source}")]
    Line {
        line: usize,
        #[source]
        source: CanonicalError,
    },
    #[error(transparent)]
    Canonical(#[from] CanonicalError),
}

// ---------------------------------------------------------------------------
// Payloads
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum PayloadKind {
    Consent,
    Propagation,
    Processing,
    Erasure,
    Breach,
    Correction,
    Restriction,
    Anchor,
}

impl PayloadKind {
    pub const ALL: [PayloadKind; 8] = [
        PayloadKind::Consent,
        PayloadKind::Propagation,
        PayloadKind::Processing,
        PayloadKind::Erasure,
        PayloadKind::Breach,
        PayloadKind::Correction,
        PayloadKind::Restriction,
        PayloadKind::Anchor,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            PayloadKind::Consent => "CONSENT",
            PayloadKind::Propagation => "PROPAGATION",
            PayloadKind::Processing => "PROCESSING",
            PayloadKind::Erasure => "ERASURE",
            PayloadKind::Breach => "BREACH",
            PayloadKind::Correction => "CORRECTION",
            PayloadKind::Restriction => "RESTRICTION",
            PayloadKind::Anchor => "ANCHOR",
        }
    }

    pub fn parse(s: &str) -> Result<Self, CanonicalError> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| CanonicalError::decode(format!("unknown payload kind \"{s}\"")))
    }
}

impl fmt::Display for PayloadKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Signed fiduciary checkpoint over a chain prefix. Appending one pins the
/// prefix; publishing it externally is up to the caller.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnchorRecord {
    pub head_index: u64,
    pub head_hash: Digest,
    pub anchor_signature: Signature,
    pub countersignature: Option<Signature>,
}

impl AnchorRecord {
    fn signing_view(head_index: u64, head_hash: &Digest) -> Value {
        MapBuilder::new()
            .field("head_hash", head_hash.to_value())
            .field("head_index", Value::uint(head_index))
            .build()
    }

    fn verify(&self, directory: &PartyDirectory) -> Result<(), String> {
        let bytes = Self::signing_view(self.head_index, &self.head_hash).encode();
        let signer = directory
            .by_fingerprint(&self.anchor_signature.signer_fingerprint)
            .ok_or("anchor signer is not a registered identity")?;
        if signer.role() != Role::Fiduciary {
            return Err(format!(
                "anchor signer \"{}\" is not a fiduciary",
                signer.party_id()
            ));
        }
        if !signer
            .verify(&bytes, &self.anchor_signature)
            .unwrap_or(false)
        {
            return Err("anchor signature does not verify".to_string());
        }
        if let Some(counter) = &self.countersignature {
            let countersigner = directory
                .by_fingerprint(&counter.signer_fingerprint)
                .ok_or("anchor countersigner is not a registered identity")?;
            if !matches!(countersigner.role(), Role::Auditor | Role::Authority) {
                return Err(format!(
                    "anchor countersigner \"{}\" is neither auditor nor authority",
                    countersigner.party_id()
                ));
            }
            if !countersigner.verify(&bytes, counter).unwrap_or(false) {
                return Err("anchor countersignature does not verify".to_string());
            }
        }
        Ok(())
    }
}

impl Canonical for AnchorRecord {
    fn to_value(&self) -> Value {
        MapBuilder::new()
            .opt(
                "countersignature",
                self.countersignature.as_ref().map(|s| s.to_value()),
            )
            .field("head_hash", self.head_hash.to_value())
            .field("head_index", Value::uint(self.head_index))
            .field("signature", self.anchor_signature.to_value())
            .build()
    }
}

impl FromValue for AnchorRecord {
    fn from_value(value: &Value) -> Result<Self, CanonicalError> {
        let mut r = MapReader::new(value)?;
        let countersignature = match r.optional("countersignature") {
            Some(v) => Some(Signature::from_value(v)?),
            None => None,
        };
        let head_hash = Digest::from_value(r.required("head_hash")?)?;
        let head_index = r.u64("head_index")?;
        let anchor_signature = Signature::from_value(r.required("signature")?)?;
        r.finish()?;
        Ok(AnchorRecord {
            head_index,
            head_hash,
            anchor_signature,
            countersignature,
        })
    }
}

/// Everything a ledger entry can carry.
#[allow(clippy::large_enum_variant)]
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Payload {
    Consent(ConsentEvent),
    Propagation(WithdrawalPropagation),
    Processing(ProcessingEvent),
    Erasure(ErasureReceipt),
    Breach(BreachRecord),
    Correction(CorrectionEvent),
    Restriction(RestrictionMarker),
    Anchor(AnchorRecord),
}

impl Payload {
    pub fn kind(&self) -> PayloadKind {
        match self {
            Payload::Consent(_) => PayloadKind::Consent,
            Payload::Propagation(_) => PayloadKind::Propagation,
            Payload::Processing(_) => PayloadKind::Processing,
            Payload::Erasure(_) => PayloadKind::Erasure,
            Payload::Breach(_) => PayloadKind::Breach,
            Payload::Correction(_) => PayloadKind::Correction,
            Payload::Restriction(_) => PayloadKind::Restriction,
            Payload::Anchor(_) => PayloadKind::Anchor,
        }
    }

    pub fn to_value(&self) -> Value {
        match self {
            Payload::Consent(p) => p.to_value(),
            Payload::Propagation(p) => p.to_value(),
            Payload::Processing(p) => p.to_value(),
            Payload::Erasure(p) => p.to_value(),
            Payload::Breach(p) => p.to_value(),
            Payload::Correction(p) => p.to_value(),
            Payload::Restriction(p) => p.to_value(),
            Payload::Anchor(p) => p.to_value(),
        }
    }

    pub fn from_value(kind: PayloadKind, value: &Value) -> Result<Self, CanonicalError> {
        Ok(match kind {
            PayloadKind::Consent => Payload::Consent(ConsentEvent::from_value(value)?),
            PayloadKind::Propagation => {
                Payload::Propagation(WithdrawalPropagation::from_value(value)?)
            }
            PayloadKind::Processing => Payload::Processing(ProcessingEvent::from_value(value)?),
            PayloadKind::Erasure => Payload::Erasure(ErasureReceipt::from_value(value)?),
            PayloadKind::Breach => Payload::Breach(BreachRecord::from_value(value)?),
            PayloadKind::Correction => Payload::Correction(CorrectionEvent::from_value(value)?),
            PayloadKind::Restriction => Payload::Restriction(RestrictionMarker::from_value(value)?),
            PayloadKind::Anchor => Payload::Anchor(AnchorRecord::from_value(value)?),
        })
    }

    pub fn canonical_bytes(&self) -> Vec<u8> {
        self.to_value().encode()
    }
}

// ---------------------------------------------------------------------------
// Entries
// ---------------------------------------------------------------------------

/// One link of the chain.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LedgerEntry {
    pub index: u64,
    pub prev_hash: Digest,
    pub kind: PayloadKind,
    pub payload_digest: Digest,
    pub payload: Payload,
    pub entry_hash: Digest,
}

impl LedgerEntry {
    pub fn payload_bytes(&self) -> Vec<u8> {
        self.payload.canonical_bytes()
    }
}

impl Canonical for LedgerEntry {
    fn to_value(&self) -> Value {
        MapBuilder::new()
            .field("entry_hash", self.entry_hash.to_value())
            .field("index", Value::uint(self.index))
            .field("kind", Value::str(self.kind.as_str()))
            .field("payload", self.payload.to_value())
            .field("payload_digest", self.payload_digest.to_value())
            .field("prev_hash", self.prev_hash.to_value())
            .build()
    }
}

impl FromValue for LedgerEntry {
    fn from_value(value: &Value) -> Result<Self, CanonicalError> {
        let mut r = MapReader::new(value)?;
        let entry_hash = Digest::from_value(r.required("entry_hash")?)?;
        let index = r.u64("index")?;
        let kind = PayloadKind::parse(r.str("kind")?)?;
        let payload = Payload::from_value(kind, r.required("payload")?)?;
        let payload_digest = Digest::from_value(r.required("payload_digest")?)?;
        let prev_hash = Digest::from_value(r.required("prev_hash")?)?;
        r.finish()?;
        Ok(LedgerEntry {
            index,
            prev_hash,
            kind,
            payload_digest,
            payload,
            entry_hash,
        })
    }
}

/// The chain hash over an entry header.
fn entry_hash(
    index: u64,
    prev_hash: &Digest,
    kind: PayloadKind,
    payload_digest: &Digest,
) -> Digest {
    let header = MapBuilder::new()
        .field("index", Value::uint(index))
        .field("kind", Value::str(kind.as_str()))
        .field("payload_digest", payload_digest.to_value())
        .field("prev_hash", prev_hash.to_value())
        .build();
    Digest::of_bytes(&header.encode())
}

// ---------------------------------------------------------------------------
// Verdicts and resolutions
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ChainVerdict {
    Ok,
    Bad {
        first_bad_index: u64,
        reason: String,
    },
}

impl ChainVerdict {
    pub fn is_ok(&self) -> bool {
        matches!(self, ChainVerdict::Ok)
    }
}

/// Outcome of resolving the latest consent for a pair.
#[allow(clippy::large_enum_variant)]
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ConsentResolution {
    /// No consent events recorded for the pair.
    None,
    Active {
        entry_index: u64,
        event: ConsentEvent,
    },
    Withdrawn {
        entry_index: u64,
        at: TimestampToken,
    },
}

impl ConsentResolution {
    pub fn is_active(&self) -> bool {
        matches!(self, ConsentResolution::Active { .. })
    }
}

/// Hash-link path from one entry to the head.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InclusionProof {
    pub entry_index: u64,
    pub entry_prev_hash: Digest,
    pub entry_kind: PayloadKind,
    pub entry_payload_digest: Digest,
    pub links: Vec<ProofLink>,
    pub head_index: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProofLink {
    pub kind: PayloadKind,
    pub payload_digest: Digest,
}

impl Canonical for InclusionProof {
    fn to_value(&self) -> Value {
        MapBuilder::new()
            .field("entry_index", Value::uint(self.entry_index))
            .field("entry_kind", Value::str(self.entry_kind.as_str()))
            .field("entry_payload_digest", self.entry_payload_digest.to_value())
            .field("entry_prev_hash", self.entry_prev_hash.to_value())
            .field("head_index", Value::uint(self.head_index))
            .field(
                "links",
                Value::list(self.links.iter().map(|l| {
                    MapBuilder::new()
                        .field("kind", Value::str(l.kind.as_str()))
                        .field("payload_digest", l.payload_digest.to_value())
                        .build()
                })),
            )
            .build()
    }
}

impl FromValue for InclusionProof {
    fn from_value(value: &Value) -> Result<Self, CanonicalError> {
        let mut r = MapReader::new(value)?;
        let entry_index = r.u64("entry_index")?;
        let entry_kind = PayloadKind::parse(r.str("entry_kind")?)?;
        let entry_payload_digest = Digest::from_value(r.required("entry_payload_digest")?)?;
        let entry_prev_hash = Digest::from_value(r.required("entry_prev_hash")?)?;
        let head_index = r.u64("head_index")?;
        let links = r
            .list("links")?
            .iter()
            .map(|v| {
                let mut lr = MapReader::new(v)?;
                let kind = PayloadKind::parse(lr.str("kind")?)?;
                let payload_digest = Digest::from_value(lr.required("payload_digest")?)?;
                lr.finish()?;
                Ok(ProofLink {
                    kind,
                    payload_digest,
                })
            })
            .collect::<Result<Vec<_>, CanonicalError>>()?;
        r.finish()?;
        Ok(InclusionProof {
            entry_index,
            entry_prev_hash,
            entry_kind,
            entry_payload_digest,
            links,
            head_index,
        })
    }
}

/// Recompute the hash path and compare against `head_hash`.
pub fn verify_inclusion(head_hash: &Digest, proof: &InclusionProof) -> bool {
    let mut hash = entry_hash(
        proof.entry_index,
        &proof.entry_prev_hash,
        proof.entry_kind,
        &proof.entry_payload_digest,
    );
    let mut index = proof.entry_index;
    for link in &proof.links {
        index += 1;
        hash = entry_hash(index, &hash, link.kind, &link.payload_digest);
    }
    index == proof.head_index && hash == *head_hash
}

// ---------------------------------------------------------------------------
// Ledger
// ---------------------------------------------------------------------------

/// In-memory chain. One instance per fiduciary; all principal/fiduciary
/// pairs are multiplexed and resolved by pair on demand. Appends go through
/// one owner; readers see immutable entries.
#[derive(Debug, Default, Clone)]
pub struct Ledger {
    entries: Vec<LedgerEntry>,
}

impl Ledger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> u64 {
        self.entries.len() as u64
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[LedgerEntry] {
        &self.entries
    }

    pub fn entry(&self, index: u64) -> Result<&LedgerEntry, LedgerError> {
        self.entries
            .get(index as usize)
            .ok_or(LedgerError::OutOfRange {
                index,
                len: self.len(),
            })
    }

    pub fn head(&self) -> Option<&LedgerEntry> {
        self.entries.last()
    }

    // -- typed payload iterators --------------------------------------------

    pub fn consent_events(&self) -> impl Iterator<Item = (u64, &ConsentEvent)> {
        self.entries.iter().filter_map(|e| match &e.payload {
            Payload::Consent(ev) => Some((e.index, ev)),
            _ => None,
        })
    }

    pub fn processing_events(&self) -> impl Iterator<Item = (u64, &ProcessingEvent)> {
        self.entries.iter().filter_map(|e| match &e.payload {
            Payload::Processing(p) => Some((e.index, p)),
            _ => None,
        })
    }

    pub fn propagations(&self) -> impl Iterator<Item = (u64, &WithdrawalPropagation)> {
        self.entries.iter().filter_map(|e| match &e.payload {
            Payload::Propagation(p) => Some((e.index, p)),
            _ => None,
        })
    }

    pub fn erasure_receipts(&self) -> impl Iterator<Item = (u64, &ErasureReceipt)> {
        self.entries.iter().filter_map(|e| match &e.payload {
            Payload::Erasure(p) => Some((e.index, p)),
            _ => None,
        })
    }

    pub fn breach_records(&self) -> impl Iterator<Item = (u64, &BreachRecord)> {
        self.entries.iter().filter_map(|e| match &e.payload {
            Payload::Breach(p) => Some((e.index, p)),
            _ => None,
        })
    }

    pub fn corrections(&self) -> impl Iterator<Item = (u64, &CorrectionEvent)> {
        self.entries.iter().filter_map(|e| match &e.payload {
            Payload::Correction(p) => Some((e.index, p)),
            _ => None,
        })
    }

    pub fn restrictions(&self) -> impl Iterator<Item = (u64, &RestrictionMarker)> {
        self.entries.iter().filter_map(|e| match &e.payload {
            Payload::Restriction(p) => Some((e.index, p)),
            _ => None,
        })
    }

    pub fn anchors(&self) -> impl Iterator<Item = (u64, &AnchorRecord)> {
        self.entries.iter().filter_map(|e| match &e.payload {
            Payload::Anchor(p) => Some((e.index, p)),
            _ => None,
        })
    }

    /// Locate a consent event by its digest.
    pub fn consent_by_digest(&self, digest: &Digest) -> Option<(u64, &ConsentEvent)> {
        self.consent_events().find(|(_, ev)| ev.digest() == *digest)
    }

    // -- append ---------------------------------------------------------------

    /// Validate and append. On rejection the ledger is unchanged.
    pub fn append(
        &mut self,
        payload: Payload,
        directory: &PartyDirectory,
    ) -> Result<&LedgerEntry, LedgerError> {
        validate_payload(&payload, directory, &self.entries)
            .map_err(LedgerError::PayloadRejected)?;
        Ok(self.push_unchecked(payload))
    }

    fn push_unchecked(&mut self, payload: Payload) -> &LedgerEntry {
        let index = self.len();
        let prev_hash = self
            .head()
            .map(|e| e.entry_hash)
            .unwrap_or_else(Digest::zero);
        let kind = payload.kind();
        let payload_digest = Digest::of_bytes(&payload.canonical_bytes());
        let hash = entry_hash(index, &prev_hash, kind, &payload_digest);
        self.entries.push(LedgerEntry {
            index,
            prev_hash,
            kind,
            payload_digest,
            payload,
            entry_hash: hash,
        });
        self.entries.last().expect("just pushed")
    }

    // -- verification -----------------------------------------------------------

    /// Verify the whole chain.
    pub fn verify(&self, directory: &PartyDirectory) -> ChainVerdict {
        if self.is_empty() {
            return ChainVerdict::Ok;
        }
        self.verify_range(0, self.len() - 1, directory)
            .expect("full range is in bounds")
    }

    /// Verify entries `from..=to`: hash links, payload digests, and every
    /// embedded signature. Reports the first violating index.
    pub fn verify_range(
        &self,
        from: u64,
        to: u64,
        directory: &PartyDirectory,
    ) -> Result<ChainVerdict, LedgerError> {
        if from > to || to >= self.len() {
            return Err(LedgerError::OutOfRange {
                index: to,
                len: self.len(),
            });
        }
        for position in from..=to {
            let entry = &self.entries[position as usize];
            if let Err(reason) = self.verify_entry(position, entry, directory) {
                return Ok(ChainVerdict::Bad {
                    first_bad_index: position,
                    reason,
                });
            }
        }
        Ok(ChainVerdict::Ok)
    }

    fn verify_entry(
        &self,
        position: u64,
        entry: &LedgerEntry,
        directory: &PartyDirectory,
    ) -> Result<(), String> {
        if entry.index != position {
            return Err(format!(
                "stored index {} does not match position {}",
                entry.index, position
            ));
        }
        let expected_prev = if position == 0 {
            Digest::zero()
        } else {
            self.entries[(position - 1) as usize].entry_hash
        };
        if entry.prev_hash != expected_prev {
            return Err("prev_hash does not match the previous entry".to_string());
        }
        let payload_digest = Digest::of_bytes(&entry.payload_bytes());
        if entry.payload_digest != payload_digest {
            return Err("payload digest does not match payload bytes".to_string());
        }
        if entry.kind != entry.payload.kind() {
            return Err("entry kind does not match payload".to_string());
        }
        let expected_hash = entry_hash(
            entry.index,
            &entry.prev_hash,
            entry.kind,
            &entry.payload_digest,
        );
        if entry.entry_hash != expected_hash {
            return Err("entry hash does not match header fields".to_string());
        }
        validate_payload(
            &entry.payload,
            directory,
            &self.entries[..position as usize],
        )
    }

    // -- consent resolution -------------------------------------------------------

    /// Resolve the latest consent state for a pair by materializing the
    /// supersedes links. Two events superseding the same digest is a fork
    /// and an error; otherwise the most recently appended tip decides.
    pub fn latest_consent(
        &self,
        principal: &PartyId,
        fiduciary: &PartyId,
    ) -> Result<ConsentResolution, LedgerError> {
        let events: Vec<(u64, &ConsentEvent)> = self
            .consent_events()
            .filter(|(_, ev)| ev.principal() == principal && ev.fiduciary() == fiduciary)
            .collect();
        if events.is_empty() {
            return Ok(ConsentResolution::None);
        }
        let mut successors: BTreeMap<Digest, Vec<u64>> = BTreeMap::new();
        for (index, event) in &events {
            if let Some(parent) = &event.supersedes {
                successors.entry(*parent).or_default().push(*index);
            }
        }
        for (parent, children) in &successors {
            if children.len() >= 2 {
                return Err(LedgerError::ForkedConsent {
                    parent: *parent,
                    first: children[0],
                    second: children[1],
                });
            }
        }
        let tip = events
            .iter()
            .filter(|(_, ev)| !successors.contains_key(&ev.digest()))
            .max_by_key(|(index, _)| *index);
        let (entry_index, event) = match tip {
            Some(found) => *found,
            // Reachable only through a supersedes cycle, which cannot be
            // produced by honest digests.
            None => {
                return Err(LedgerError::PayloadRejected(
                    "consent events form a supersedes cycle".to_string(),
                ))
            }
        };
        Ok(match event.kind {
            EventKind::Withdraw => ConsentResolution::Withdrawn {
                entry_index,
                at: event.timestamp.clone(),
            },
            _ => ConsentResolution::Active {
                entry_index,
                event: event.clone(),
            },
        })
    }

    /// All pairs with at least one consent event, in first-appearance order.
    pub fn consent_pairs(&self) -> Vec<(PartyId, PartyId)> {
        let mut pairs = Vec::new();
        for (_, event) in self.consent_events() {
            let pair = (event.principal().clone(), event.fiduciary().clone());
            if !pairs.contains(&pair) {
                pairs.push(pair);
            }
        }
        pairs
    }

    // -- inclusion proofs -----------------------------------------------------------

    pub fn inclusion_proof(&self, index: u64) -> Result<InclusionProof, LedgerError> {
        let entry = self.entry(index)?;
        let links = self.entries[(index + 1) as usize..]
            .iter()
            .map(|e| ProofLink {
                kind: e.kind,
                payload_digest: e.payload_digest,
            })
            .collect();
        Ok(InclusionProof {
            entry_index: entry.index,
            entry_prev_hash: entry.prev_hash,
            entry_kind: entry.kind,
            entry_payload_digest: entry.payload_digest,
            links,
            head_index: self.len() - 1,
        })
    }

    // -- anchoring --------------------------------------------------------------------

    /// Sign the current head and append the checkpoint. Refuses when the
    /// chain does not verify. Returns the record for external publication.
    pub fn anchor(
        &mut self,
        fiduciary: &Signer<'_>,
        countersigner: Option<&Signer<'_>>,
        directory: &PartyDirectory,
    ) -> Result<AnchorRecord, LedgerError> {
        let head = self.head().ok_or(LedgerError::Empty)?;
        let (head_index, head_hash) = (head.index, head.entry_hash);
        match self.verify(directory) {
            ChainVerdict::Ok => {}
            ChainVerdict::Bad {
                first_bad_index,
                reason,
            } => {
                return Err(LedgerError::ChainInvalid {
                    first_bad_index,
                    reason,
                })
            }
        }
        let bytes = AnchorRecord::signing_view(head_index, &head_hash).encode();
        let record = AnchorRecord {
            head_index,
            head_hash,
            anchor_signature: fiduciary.key.sign_bytes(&bytes),
            countersignature: countersigner.map(|s| s.key.sign_bytes(&bytes)),
        };
        self.append(Payload::Anchor(record.clone()), directory)?;
        Ok(record)
    }

    // -- persistence --------------------------------------------------------------------

    /// Line-oriented canonical bytes: deterministic for a given append
    /// sequence.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        for entry in &self.entries {
            out.extend_from_slice(&entry.canonical_bytes());
            out.push(b'\n');
        }
        out
    }

    /// Parse persisted bytes. Structural decode only; run [`Ledger::verify`]
    /// for integrity.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self, LedgerError> {
        let mut entries = Vec::new();
        for (line_no, line) in bytes.split(|b| *b == b'\n').enumerate() {
            if line.is_empty() {
                continue;
            }
            let value = Value::parse(line).map_err(|source| LedgerError::Line {
                line: line_no + 1,
                source,
            })?;
            let entry = LedgerEntry::from_value(&value).map_err(|source| LedgerError::Line {
                line: line_no + 1,
                source,
            })?;
            entries.push(entry);
        }
        Ok(Ledger { entries })
    }

    pub fn save(&self, path: &Path) -> Result<(), LedgerError> {
        fs::write(path, self.to_bytes()).map_err(|e| io_err(path, e))?;
        self.write_head_sidecar(path)
    }

    fn write_head_sidecar(&self, path: &Path) -> Result<(), LedgerError> {
        let sidecar = head_sidecar_path(path);
        match self.head() {
            Some(head) => {
                let value = MapBuilder::new()
                    .field("head_hash", head.entry_hash.to_value())
                    .field("head_index", Value::uint(head.index))
                    .build();
                let mut bytes = value.encode();
                bytes.push(b'\n');
                fs::write(&sidecar, bytes).map_err(|e| io_err(&sidecar, e))
            }
            None => {
                if sidecar.exists() {
                    fs::remove_file(&sidecar).map_err(|e| io_err(&sidecar, e))?;
                }
                Ok(())
            }
        }
    }

    /// Append one entry to the persisted file without rewriting it, then
    /// refresh the sidecar.
    pub fn append_to_file(&self, path: &Path, entry: &LedgerEntry) -> Result<(), LedgerError> {
        let mut file = fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| io_err(path, e))?;
        let mut bytes = entry.canonical_bytes();
        bytes.push(b'\n');
        file.write_all(&bytes).map_err(|e| io_err(path, e))?;
        self.write_head_sidecar(path)
    }

    /// Load a ledger and cross-check the head sidecar when present.
    pub fn load(path: &Path) -> Result<Self, LedgerError> {
        let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
        let ledger = Self::from_bytes(&bytes)?;
        let sidecar = head_sidecar_path(path);
        if sidecar.exists() {
            let side_bytes = fs::read(&sidecar).map_err(|e| io_err(&sidecar, e))?;
            let trimmed: Vec<u8> = side_bytes
                .strip_suffix(b"\n")
                .unwrap_or(&side_bytes)
                .to_vec();
            let value = Value::parse(&trimmed)?;
            let mut r = MapReader::new(&value)?;
            let head_hash = Digest::from_value(r.required("head_hash")?)?;
            let head_index = r.u64("head_index")?;
            r.finish()?;
            match ledger.head() {
                Some(head) if head.index == head_index && head.entry_hash == head_hash => {}
                Some(head) => {
                    return Err(LedgerError::HeadMismatch(format!(
                        "sidecar expects head ({head_index}, {head_hash}), file ends at ({}, {})",
                        head.index, head.entry_hash
                    )))
                }
                None => {
                    return Err(LedgerError::HeadMismatch(
                        "sidecar present but ledger file is empty".to_string(),
                    ))
                }
            }
        }
        Ok(ledger)
    }
}

fn head_sidecar_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".head");
    path.with_file_name(name)
}

fn io_err(path: &Path, source: std::io::Error) -> LedgerError {
    LedgerError::Io {
        path: path.display().to_string(),
        source,
    }
}

// ---------------------------------------------------------------------------
// Payload validation
// ---------------------------------------------------------------------------

/// Full admission check for a payload against the chain prefix it would
/// follow: internal signatures plus the cross-entry rules that keep consent
/// chains well-formed. Forks are deliberately admitted — they are detected
/// and surfaced at resolution and audit time, which is exactly the evidence
/// needed against a fiduciary that kept two successors.
fn validate_payload(
    payload: &Payload,
    directory: &PartyDirectory,
    prefix: &[LedgerEntry],
) -> Result<(), String> {
    let find_consent = |digest: &Digest| -> Option<(u64, &ConsentEvent)> {
        prefix.iter().find_map(|e| match &e.payload {
            Payload::Consent(ev) if ev.digest() == *digest => Some((e.index, ev)),
            _ => None,
        })
    };
    match payload {
        Payload::Consent(event) => {
            event.verify(directory).map_err(|e| e.to_string())?;
            if let Some(parent_digest) = &event.supersedes {
                let (_, parent) = find_consent(parent_digest).ok_or_else(|| {
                    format!("supersedes digest {parent_digest} not found in ledger")
                })?;
                if parent.kind == EventKind::Withdraw {
                    return Err("CONSENT_TERMINATED: cannot supersede a withdrawal".to_string());
                }
                if parent.principal() != event.principal()
                    || parent.fiduciary() != event.fiduciary()
                {
                    return Err(
                        "PAIR_MISMATCH: superseded event belongs to another pair".to_string()
                    );
                }
                if event.timestamp.sequence <= parent.timestamp.sequence {
                    return Err(
                        "event is not timestamped after the event it supersedes".to_string()
                    );
                }
            }
            Ok(())
        }
        Payload::Propagation(receipt) => {
            receipt.verify(directory).map_err(|e| e.to_string())?;
            let (_, withdrawal) = find_consent(&receipt.withdrawal_digest).ok_or_else(|| {
                format!(
                    "withdrawal digest {} not found in ledger",
                    receipt.withdrawal_digest
                )
            })?;
            let notice = withdrawal
                .notice()
                .ok_or("referenced consent event is not a withdrawal")?;
            if !notice
                .third_parties
                .iter()
                .any(|p| p == &receipt.third_party)
            {
                return Err(format!(
                    "NOT_A_RECIPIENT: \"{}\" is not listed on the withdrawal",
                    receipt.third_party
                ));
            }
            if receipt.timestamp.sequence <= withdrawal.timestamp.sequence {
                return Err("acknowledgment predates the withdrawal it confirms".to_string());
            }
            Ok(())
        }
        Payload::Processing(event) => event.verify(directory).map_err(|e| e.to_string()),
        Payload::Erasure(receipt) => receipt.verify(directory).map_err(|e| e.to_string()),
        Payload::Breach(record) => record.verify(directory).map_err(|e| e.to_string()),
        Payload::Correction(event) => event.verify(directory).map_err(|e| e.to_string()),
        Payload::Restriction(marker) => marker.verify(directory).map_err(|e| e.to_string()),
        Payload::Anchor(record) => {
            record.verify(directory)?;
            let pinned = prefix
                .get(record.head_index as usize)
                .ok_or("anchor head index beyond the chain")?;
            if pinned.entry_hash != record.head_hash {
                return Err("anchor head hash does not match the pinned entry".to_string());
            }
            Ok(())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::records::{record_processing, ProcessingAction};
    use crate::testkit::World;

    fn shop_processing(
        world: &mut World,
        id: &str,
        consent: &ConsentEvent,
        purpose: &str,
        cats: &[&str],
        action: ProcessingAction,
    ) -> ProcessingEvent {
        world.tick(1);
        let shop = world.party("shop");
        record_processing(
            id,
            &shop.signer(),
            None,
            consent.digest(),
            purpose,
            cats.iter().map(|s| s.to_string()).collect(),
            action,
            &mut world.tsa,
            &world.clock,
        )
        .unwrap()
    }

    #[test]
    fn genesis_entry_has_zero_prev_hash() {
        let mut world = World::new();
        let event = world.establish("f-1");
        let mut ledger = Ledger::new();
        let entry = ledger
            .append(Payload::Consent(event), &world.directory)
            .unwrap();
        assert_eq!(entry.index, 0);
        assert_eq!(entry.prev_hash, Digest::zero());
    }

    #[test]
    fn entries_link_by_hash() {
        let mut world = World::new();
        let first = world.establish("f-1");
        let second = world.modify(&first, "f-1");
        let mut ledger = Ledger::new();
        ledger
            .append(Payload::Consent(first), &world.directory)
            .unwrap();
        ledger
            .append(Payload::Consent(second), &world.directory)
            .unwrap();
        assert_eq!(
            ledger.entries()[1].prev_hash,
            ledger.entries()[0].entry_hash
        );
        assert!(ledger.verify(&world.directory).is_ok());
    }

    #[test]
    fn invalid_payload_leaves_ledger_unchanged() {
        let mut world = World::new();
        let event = world.establish("f-1");
        let mut tampered = event.clone();
        tampered.supersedes = Some(Digest::of_bytes(b"nowhere"));
        let mut ledger = Ledger::new();
        let result = ledger.append(Payload::Consent(tampered), &world.directory);
        assert!(matches!(result, Err(LedgerError::PayloadRejected(_))));
        assert!(ledger.is_empty());
        ledger
            .append(Payload::Consent(event), &world.directory)
            .unwrap();
        assert_eq!(ledger.len(), 1);
    }

    #[test]
    fn append_only_prefix_is_never_touched() {
        let mut world = World::new();
        let first = world.establish("f-1");
        let second = world.modify(&first, "f-1");
        let mut ledger = Ledger::new();
        ledger
            .append(Payload::Consent(first), &world.directory)
            .unwrap();
        let snapshot = ledger.entries().to_vec();
        ledger
            .append(Payload::Consent(second), &world.directory)
            .unwrap();
        assert_eq!(&ledger.entries()[..1], &snapshot[..]);
    }

    #[test]
    fn payload_bit_flip_is_detected_at_its_index() {
        let mut world = World::new();
        let first = world.establish("f-1");
        let second = world.modify(&first, "f-1");
        let third = world.withdraw(&second);
        let mut ledger = Ledger::new();
        for ev in [first, second, third] {
            ledger
                .append(Payload::Consent(ev), &world.directory)
                .unwrap();
        }
        let mut bytes = ledger.to_bytes();
        let line_starts: Vec<usize> = std::iter::once(0)
            .chain(
                bytes
                    .iter()
                    .enumerate()
                    .filter(|(_, b)| **b == b'\n')
                    .map(|(i, _)| i + 1),
            )
            .collect();
        bytes[line_starts[1] + 40] ^= 0x01;
        match Ledger::from_bytes(&bytes) {
            Err(_) => {} // the flip broke the canonical syntax: detected
            Ok(loaded) => match loaded.verify(&world.directory) {
                ChainVerdict::Bad {
                    first_bad_index, ..
                } => assert_eq!(first_bad_index, 1),
                ChainVerdict::Ok => panic!("tamper not detected"),
            },
        }
    }

    #[test]
    fn reordering_entries_is_detected_at_min_position() {
        let mut world = World::new();
        let first = world.establish("f-1");
        let second = world.modify(&first, "f-1");
        let third = world.withdraw(&second);
        let mut ledger = Ledger::new();
        for ev in [first, second, third] {
            ledger
                .append(Payload::Consent(ev), &world.directory)
                .unwrap();
        }
        let text = String::from_utf8(ledger.to_bytes()).unwrap();
        let mut lines: Vec<&str> = text.lines().collect();
        lines.swap(1, 2);
        let reordered = format!("{}\n", lines.join("\n"));
        let loaded = Ledger::from_bytes(reordered.as_bytes()).unwrap();
        match loaded.verify(&world.directory) {
            ChainVerdict::Bad {
                first_bad_index, ..
            } => assert_eq!(first_bad_index, 1),
            ChainVerdict::Ok => panic!("reorder not detected"),
        }
    }

    #[test]
    fn latest_consent_follows_the_chain() {
        let mut world = World::new();
        let first = world.establish("f-1");
        let second = world.modify(&first, "f-1");
        let mut ledger = Ledger::new();
        ledger
            .append(Payload::Consent(first.clone()), &world.directory)
            .unwrap();
        ledger
            .append(Payload::Consent(second.clone()), &world.directory)
            .unwrap();
        let alice = PartyId::new("alice");
        let shop = PartyId::new("shop");
        match ledger.latest_consent(&alice, &shop).unwrap() {
            ConsentResolution::Active { entry_index, event } => {
                assert_eq!(entry_index, 1);
                assert_eq!(event.digest(), second.digest());
            }
            other => panic!("expected active resolution, got {other:?}"),
        }

        let third = world.withdraw(&second);
        ledger
            .append(Payload::Consent(third.clone()), &world.directory)
            .unwrap();
        match ledger.latest_consent(&alice, &shop).unwrap() {
            ConsentResolution::Withdrawn { at, .. } => {
                assert_eq!(at.sequence, third.timestamp.sequence)
            }
            other => panic!("expected withdrawn resolution, got {other:?}"),
        }

        assert_eq!(
            ledger.latest_consent(&PartyId::new("bob"), &shop).unwrap(),
            ConsentResolution::None
        );
    }

    #[test]
    fn fork_is_reported_with_both_indices() {
        let mut world = World::new();
        let first = world.establish("f-1");
        let fork_a = world.modify(&first, "f-1a");
        let fork_b = world.modify(&first, "f-1b");
        let mut ledger = Ledger::new();
        ledger
            .append(Payload::Consent(first), &world.directory)
            .unwrap();
        ledger
            .append(Payload::Consent(fork_a), &world.directory)
            .unwrap();
        ledger
            .append(Payload::Consent(fork_b), &world.directory)
            .unwrap();
        let err = ledger
            .latest_consent(&PartyId::new("alice"), &PartyId::new("shop"))
            .unwrap_err();
        match err {
            LedgerError::ForkedConsent { first, second, .. } => {
                assert_eq!((first, second), (1, 2));
            }
            other => panic!("expected fork, got {other:?}"),
        }
    }

    #[test]
    fn re_consent_after_withdrawal_is_a_fresh_chain() {
        let mut world = World::new();
        let first = world.establish("f-1");
        let gone = world.withdraw(&first);
        let fresh = world.establish("f-2");
        let mut ledger = Ledger::new();
        for ev in [first, gone, fresh.clone()] {
            ledger
                .append(Payload::Consent(ev), &world.directory)
                .unwrap();
        }
        match ledger
            .latest_consent(&PartyId::new("alice"), &PartyId::new("shop"))
            .unwrap()
        {
            ConsentResolution::Active { event, .. } => assert_eq!(event.form_id(), "f-2"),
            other => panic!("expected fresh chain to win, got {other:?}"),
        }
    }

    #[test]
    fn inclusion_proofs_verify_only_against_the_real_head() {
        let mut world = World::new();
        let mut ledger = Ledger::new();
        let mut prior = world.establish("f-1");
        ledger
            .append(Payload::Consent(prior.clone()), &world.directory)
            .unwrap();
        for _ in 0..9 {
            let next = world.modify(&prior, "f-1");
            ledger
                .append(Payload::Consent(next.clone()), &world.directory)
                .unwrap();
            prior = next;
        }
        let head_hash = ledger.head().unwrap().entry_hash;
        let proof = ledger.inclusion_proof(3).unwrap();
        assert!(verify_inclusion(&head_hash, &proof));

        // Replay against another head.
        let other_head = ledger.entries()[5].entry_hash;
        assert!(!verify_inclusion(&other_head, &proof));

        // Tampered entry data inside the proof.
        let mut tampered = proof.clone();
        tampered.entry_payload_digest = Digest::of_bytes(b"other payload");
        assert!(!verify_inclusion(&head_hash, &tampered));

        let bytes = proof.canonical_bytes();
        let parsed = InclusionProof::from_value(&Value::parse(&bytes).unwrap()).unwrap();
        assert_eq!(parsed, proof);
    }

    #[test]
    fn anchor_pins_prefix_and_chain_still_extends() {
        let mut world = World::new();
        let mut ledger = Ledger::new();
        let first = world.establish("f-1");
        ledger
            .append(Payload::Consent(first.clone()), &world.directory)
            .unwrap();
        let shop = world.party("shop");
        let record = ledger
            .anchor(&shop.signer(), None, &world.directory)
            .unwrap();
        assert_eq!(record.head_index, 0);
        let second = world.modify(&first, "f-1");
        ledger
            .append(Payload::Consent(second), &world.directory)
            .unwrap();
        assert!(ledger.verify(&world.directory).is_ok());
        assert_eq!(ledger.anchors().count(), 1);
    }

    #[test]
    fn anchor_refused_on_broken_chain() {
        let mut world = World::new();
        let first = world.establish("f-1");
        let mut ledger = Ledger::new();
        ledger
            .append(Payload::Consent(first), &world.directory)
            .unwrap();
        let mut broken = Ledger::from_bytes(&ledger.to_bytes()).unwrap();
        broken.entries[0].payload_digest = Digest::of_bytes(b"forged");
        let shop = world.party("shop");
        let result = broken.anchor(&shop.signer(), None, &world.directory);
        assert!(matches!(result, Err(LedgerError::ChainInvalid { .. })));
    }

    #[test]
    fn anchor_must_be_signed_by_a_fiduciary() {
        let mut world = World::new();
        let first = world.establish("f-1");
        let mut ledger = Ledger::new();
        ledger
            .append(Payload::Consent(first), &world.directory)
            .unwrap();
        let alice = world.party("alice");
        let result = ledger.anchor(&alice.signer(), None, &world.directory);
        assert!(matches!(result, Err(LedgerError::PayloadRejected(_))));

        let shop = world.party("shop");
        let auditor = world.party("auditor");
        let record = ledger
            .anchor(&shop.signer(), Some(&auditor.signer()), &world.directory)
            .unwrap();
        assert!(record.countersignature.is_some());
        assert!(ledger.verify(&world.directory).is_ok());
    }

    #[test]
    fn same_append_sequence_gives_identical_bytes() {
        let build = || {
            let mut world = World::new();
            let first = world.establish("f-1");
            let second = world.modify(&first, "f-1");
            let event = shop_processing(
                &mut world,
                "p-1",
                &second,
                "order_fulfilment",
                &["name"],
                ProcessingAction::Store,
            );
            let mut ledger = Ledger::new();
            ledger
                .append(Payload::Consent(first), &world.directory)
                .unwrap();
            ledger
                .append(Payload::Consent(second), &world.directory)
                .unwrap();
            ledger
                .append(Payload::Processing(event), &world.directory)
                .unwrap();
            ledger.to_bytes()
        };
        assert_eq!(build(), build());
    }

    #[test]
    fn file_round_trip_and_sidecar_check() {
        let mut world = World::new();
        let first = world.establish("f-1");
        let second = world.modify(&first, "f-1");
        let mut ledger = Ledger::new();
        ledger
            .append(Payload::Consent(first), &world.directory)
            .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ledger.cl");
        ledger.save(&path).unwrap();
        let entry = ledger
            .append(Payload::Consent(second), &world.directory)
            .unwrap()
            .clone();
        ledger.append_to_file(&path, &entry).unwrap();

        let loaded = Ledger::load(&path).unwrap();
        assert_eq!(loaded.entries(), ledger.entries());
        assert!(loaded.verify(&world.directory).is_ok());

        // Truncate the file behind the sidecar's back: crash detection.
        let text = fs::read_to_string(&path).unwrap();
        let first_line = text.lines().next().unwrap();
        fs::write(&path, format!("{first_line}\n")).unwrap();
        assert!(matches!(
            Ledger::load(&path),
            Err(LedgerError::HeadMismatch(_))
        ));
    }

    #[test]
    fn propagation_append_requires_recorded_withdrawal() {
        let mut world = World::new();
        let first = world.establish("f-1");
        let gone = world.withdraw(&first);
        let receipt = world.propagate(&gone, "tp-a").unwrap();

        let mut ledger = Ledger::new();
        ledger
            .append(Payload::Consent(first), &world.directory)
            .unwrap();
        // Withdrawal not yet appended: receipt has nothing to attach to.
        let premature = ledger.append(Payload::Propagation(receipt.clone()), &world.directory);
        assert!(matches!(premature, Err(LedgerError::PayloadRejected(_))));

        ledger
            .append(Payload::Consent(gone), &world.directory)
            .unwrap();
        ledger
            .append(Payload::Propagation(receipt), &world.directory)
            .unwrap();
        assert!(ledger.verify(&world.directory).is_ok());
    }

    #[test]
    fn verify_range_bounds_are_checked() {
        let mut world = World::new();
        let first = world.establish("f-1");
        let mut ledger = Ledger::new();
        ledger
            .append(Payload::Consent(first), &world.directory)
            .unwrap();
        assert!(ledger.verify_range(0, 0, &world.directory).is_ok());
        assert!(matches!(
            ledger.verify_range(0, 5, &world.directory),
            Err(LedgerError::OutOfRange { .. })
        ));
    }
}
