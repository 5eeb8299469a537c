//! Signed evidence records audited against consent: processing activity,
//! erasure receipts, breach records, corrections, and disclosure
//! restrictions.
//!
//! Records are immutable once signed. Instants inside a [`BreachRecord`] are
//! declared wall times covered by the fiduciary's signature rather than
//! authority tokens — a breach is detected before it is recorded, and a
//! freshly issued token could not honestly carry the earlier time.

use std::collections::BTreeSet;

use crate::canonical::{Canonical, CanonicalError, FromValue, MapBuilder, MapReader, Value};
use crate::clock::Clock;
use crate::consent::verify_token;
use crate::crypto::{CryptoError, Digest, PartyDirectory, PartyId, Signature, Signer};
use crate::tsa::{TimestampAuthority, TimestampToken, TsaError};

#[derive(Debug, thiserror::Error)]
pub enum RecordError {
    #[error("malformed record: {0}")]
    Malformed(String),
    #[error("signature by \"{signer}\" does not verify")]
    SignatureInvalid { signer: String },
    #[error("timestamp invalid: {0}")]
    TimestampInvalid(String),
    #[error("ORDER_REF_REQUIRED: a disclosure restriction needs an adjudicating-officer order reference")]
    OrderRefRequired,
    #[error(transparent)]
    Crypto(#[from] CryptoError),
    #[error(transparent)]
    Tsa(#[from] TsaError),
}

// ---------------------------------------------------------------------------
// Processing events
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ProcessingAction {
    Collect,
    Store,
    Analyze,
    Share,
    Disclose,
    TransferCrossBorder,
}

impl ProcessingAction {
    pub const ALL: [ProcessingAction; 6] = [
        ProcessingAction::Collect,
        ProcessingAction::Store,
        ProcessingAction::Analyze,
        ProcessingAction::Share,
        ProcessingAction::Disclose,
        ProcessingAction::TransferCrossBorder,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ProcessingAction::Collect => "COLLECT",
            ProcessingAction::Store => "STORE",
            ProcessingAction::Analyze => "ANALYZE",
            ProcessingAction::Share => "SHARE",
            ProcessingAction::Disclose => "DISCLOSE",
            ProcessingAction::TransferCrossBorder => "TRANSFER_CROSS_BORDER",
        }
    }

    pub fn parse(s: &str) -> Result<Self, CanonicalError> {
        Self::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| CanonicalError::decode(format!("unknown processing action \"{s}\"")))
    }

    /// Actions that hand data to another party.
    pub fn is_disclosure(&self) -> bool {
        matches!(self, ProcessingAction::Share | ProcessingAction::Disclose)
    }
}

/// One processing activity, signed by the acting party and bound by digest
/// to the consent event it claims as its basis.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProcessingEvent {
    pub processing_id: String,
    pub actor: PartyId,
    /// Receiving party for SHARE/DISCLOSE activity.
    pub counterparty: Option<PartyId>,
    pub consent_ref: Digest,
    pub purpose_id: String,
    pub categories_touched: BTreeSet<String>,
    pub action: ProcessingAction,
    pub timestamp: TimestampToken,
    pub actor_signature: Signature,
}

impl ProcessingEvent {
    fn signing_view(
        processing_id: &str,
        actor: &PartyId,
        counterparty: Option<&PartyId>,
        consent_ref: &Digest,
        purpose_id: &str,
        categories: &BTreeSet<String>,
        action: ProcessingAction,
    ) -> Value {
        MapBuilder::new()
            .field("action", Value::str(action.as_str()))
            .field("actor", Value::str(actor.as_str()))
            .field("categories", Value::list(categories.iter().map(Value::str)))
            .field("consent_ref", consent_ref.to_value())
            .opt("counterparty", counterparty.map(|p| Value::str(p.as_str())))
            .field("processing_id", Value::str(processing_id))
            .field("purpose_id", Value::str(purpose_id))
            .build()
    }

    fn own_signing_bytes(&self) -> Vec<u8> {
        Self::signing_view(
            &self.processing_id,
            &self.actor,
            self.counterparty.as_ref(),
            &self.consent_ref,
            &self.purpose_id,
            &self.categories_touched,
            self.action,
        )
        .encode()
    }

    pub fn sequence(&self) -> u64 {
        self.timestamp.sequence
    }

    pub fn verify(&self, directory: &PartyDirectory) -> Result<(), RecordError> {
        if self.categories_touched.is_empty() {
            return Err(RecordError::Malformed(
                "processing event must touch at least one category".to_string(),
            ));
        }
        let bytes = self.own_signing_bytes();
        if !directory.verify_as(&self.actor, &bytes, &self.actor_signature)? {
            return Err(RecordError::SignatureInvalid {
                signer: self.actor.as_str().to_string(),
            });
        }
        verify_token(&self.timestamp, &Digest::of_bytes(&bytes), directory)
            .map_err(RecordError::TimestampInvalid)
    }
}

impl Canonical for ProcessingEvent {
    fn to_value(&self) -> Value {
        MapBuilder::new()
            .field("action", Value::str(self.action.as_str()))
            .field("actor", Value::str(self.actor.as_str()))
            .field("actor_signature", self.actor_signature.to_value())
            .field(
                "categories",
                Value::list(self.categories_touched.iter().map(Value::str)),
            )
            .field("consent_ref", self.consent_ref.to_value())
            .opt(
                "counterparty",
                self.counterparty.as_ref().map(|p| Value::str(p.as_str())),
            )
            .field("processing_id", Value::str(&self.processing_id))
            .field("purpose_id", Value::str(&self.purpose_id))
            .field("timestamp", self.timestamp.to_value())
            .build()
    }
}

impl FromValue for ProcessingEvent {
    fn from_value(value: &Value) -> Result<Self, CanonicalError> {
        let mut r = MapReader::new(value)?;
        let action = ProcessingAction::parse(r.str("action")?)?;
        let actor = PartyId::new(r.string("actor")?);
        let actor_signature = Signature::from_value(r.required("actor_signature")?)?;
        let categories_touched = r
            .list("categories")?
            .iter()
            .map(|v| v.as_str().map(str::to_string))
            .collect::<Result<BTreeSet<_>, _>>()?;
        let consent_ref = Digest::from_value(r.required("consent_ref")?)?;
        let counterparty = match r.optional("counterparty") {
            Some(v) => Some(PartyId::new(v.as_str()?)),
            None => None,
        };
        let processing_id = r.string("processing_id")?;
        let purpose_id = r.string("purpose_id")?;
        let timestamp = TimestampToken::from_value(r.required("timestamp")?)?;
        r.finish()?;
        Ok(ProcessingEvent {
            processing_id,
            actor,
            counterparty,
            consent_ref,
            purpose_id,
            categories_touched,
            action,
            timestamp,
            actor_signature,
        })
    }
}

/// Build and sign a processing event.
#[allow(clippy::too_many_arguments)]
pub fn record_processing(
    processing_id: impl Into<String>,
    actor: &Signer<'_>,
    counterparty: Option<PartyId>,
    consent_ref: Digest,
    purpose_id: impl Into<String>,
    categories_touched: BTreeSet<String>,
    action: ProcessingAction,
    tsa: &mut TimestampAuthority,
    clock: &dyn Clock,
) -> Result<ProcessingEvent, RecordError> {
    if categories_touched.is_empty() {
        return Err(RecordError::Malformed(
            "processing event must touch at least one category".to_string(),
        ));
    }
    let processing_id = processing_id.into();
    let purpose_id = purpose_id.into();
    let view = ProcessingEvent::signing_view(
        &processing_id,
        actor.party_id(),
        counterparty.as_ref(),
        &consent_ref,
        &purpose_id,
        &categories_touched,
        action,
    );
    let bytes = view.encode();
    let actor_signature = actor.key.sign_bytes(&bytes);
    let timestamp = tsa.issue(clock, Digest::of_bytes(&bytes))?;
    Ok(ProcessingEvent {
        processing_id,
        actor: actor.party_id().clone(),
        counterparty,
        consent_ref,
        purpose_id,
        categories_touched,
        action,
        timestamp,
        actor_signature,
    })
}

// ---------------------------------------------------------------------------
// Erasure receipts
// ---------------------------------------------------------------------------

/// Fiduciary-signed statement that stored data in the named categories was
/// erased.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ErasureReceipt {
    pub principal: PartyId,
    pub fiduciary: PartyId,
    pub categories_erased: BTreeSet<String>,
    pub method_note: String,
    pub timestamp: TimestampToken,
    pub fiduciary_signature: Signature,
}

impl ErasureReceipt {
    fn signing_view(
        principal: &PartyId,
        fiduciary: &PartyId,
        categories: &BTreeSet<String>,
        method_note: &str,
    ) -> Value {
        MapBuilder::new()
            .field("categories", Value::list(categories.iter().map(Value::str)))
            .field("fiduciary", Value::str(fiduciary.as_str()))
            .field("method_note", Value::str(method_note))
            .field("principal", Value::str(principal.as_str()))
            .build()
    }

    pub fn verify(&self, directory: &PartyDirectory) -> Result<(), RecordError> {
        if self.categories_erased.is_empty() {
            return Err(RecordError::Malformed(
                "erasure receipt must cover at least one category".to_string(),
            ));
        }
        let bytes = Self::signing_view(
            &self.principal,
            &self.fiduciary,
            &self.categories_erased,
            &self.method_note,
        )
        .encode();
        if !directory.verify_as(&self.fiduciary, &bytes, &self.fiduciary_signature)? {
            return Err(RecordError::SignatureInvalid {
                signer: self.fiduciary.as_str().to_string(),
            });
        }
        verify_token(&self.timestamp, &Digest::of_bytes(&bytes), directory)
            .map_err(RecordError::TimestampInvalid)
    }
}

impl Canonical for ErasureReceipt {
    fn to_value(&self) -> Value {
        MapBuilder::new()
            .field(
                "categories",
                Value::list(self.categories_erased.iter().map(Value::str)),
            )
            .field("fiduciary", Value::str(self.fiduciary.as_str()))
            .field("fiduciary_signature", self.fiduciary_signature.to_value())
            .field("method_note", Value::str(&self.method_note))
            .field("principal", Value::str(self.principal.as_str()))
            .field("timestamp", self.timestamp.to_value())
            .build()
    }
}

impl FromValue for ErasureReceipt {
    fn from_value(value: &Value) -> Result<Self, CanonicalError> {
        let mut r = MapReader::new(value)?;
        let categories_erased = r
            .list("categories")?
            .iter()
            .map(|v| v.as_str().map(str::to_string))
            .collect::<Result<BTreeSet<_>, _>>()?;
        let fiduciary = PartyId::new(r.string("fiduciary")?);
        let fiduciary_signature = Signature::from_value(r.required("fiduciary_signature")?)?;
        let method_note = r.string("method_note")?;
        let principal = PartyId::new(r.string("principal")?);
        let timestamp = TimestampToken::from_value(r.required("timestamp")?)?;
        r.finish()?;
        Ok(ErasureReceipt {
            principal,
            fiduciary,
            categories_erased,
            method_note,
            timestamp,
            fiduciary_signature,
        })
    }
}

pub fn record_erasure(
    principal: PartyId,
    fiduciary: &Signer<'_>,
    categories_erased: BTreeSet<String>,
    method_note: impl Into<String>,
    tsa: &mut TimestampAuthority,
    clock: &dyn Clock,
) -> Result<ErasureReceipt, RecordError> {
    if categories_erased.is_empty() {
        return Err(RecordError::Malformed(
            "erasure receipt must cover at least one category".to_string(),
        ));
    }
    let method_note = method_note.into();
    let bytes = ErasureReceipt::signing_view(
        &principal,
        fiduciary.party_id(),
        &categories_erased,
        &method_note,
    )
    .encode();
    let fiduciary_signature = fiduciary.key.sign_bytes(&bytes);
    let timestamp = tsa.issue(clock, Digest::of_bytes(&bytes))?;
    Ok(ErasureReceipt {
        principal,
        fiduciary: fiduciary.party_id().clone(),
        categories_erased,
        method_note,
        timestamp,
        fiduciary_signature,
    })
}

// ---------------------------------------------------------------------------
// Breach records
// ---------------------------------------------------------------------------

/// A data-breach incident and its notification trail. `high_risk` is a
/// declared input, never inferred.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BreachRecord {
    pub breach_id: String,
    pub description: String,
    pub categories_affected: BTreeSet<String>,
    pub detected_at: i64,
    pub reported_to_authority_at: Option<i64>,
    pub high_risk: bool,
    pub principal_notified_at: Option<i64>,
    pub fiduciary: PartyId,
    pub fiduciary_signature: Signature,
}

impl BreachRecord {
    #[allow(clippy::too_many_arguments)]
    fn signing_view(
        breach_id: &str,
        description: &str,
        categories: &BTreeSet<String>,
        detected_at: i64,
        reported_to_authority_at: Option<i64>,
        high_risk: bool,
        principal_notified_at: Option<i64>,
        fiduciary: &PartyId,
    ) -> Value {
        MapBuilder::new()
            .field("breach_id", Value::str(breach_id))
            .field("categories", Value::list(categories.iter().map(Value::str)))
            .field("description", Value::str(description))
            .field("detected_at", Value::int(detected_at))
            .field("fiduciary", Value::str(fiduciary.as_str()))
            .field("high_risk", Value::Bool(high_risk))
            .opt(
                "principal_notified_at",
                principal_notified_at.map(Value::int),
            )
            .opt(
                "reported_to_authority_at",
                reported_to_authority_at.map(Value::int),
            )
            .build()
    }

    fn own_signing_bytes(&self) -> Vec<u8> {
        Self::signing_view(
            &self.breach_id,
            &self.description,
            &self.categories_affected,
            self.detected_at,
            self.reported_to_authority_at,
            self.high_risk,
            self.principal_notified_at,
            &self.fiduciary,
        )
        .encode()
    }

    pub fn verify(&self, directory: &PartyDirectory) -> Result<(), RecordError> {
        if let Some(reported) = self.reported_to_authority_at {
            if reported < self.detected_at {
                return Err(RecordError::Malformed(
                    "breach reported before it was detected".to_string(),
                ));
            }
        }
        let bytes = self.own_signing_bytes();
        if !directory.verify_as(&self.fiduciary, &bytes, &self.fiduciary_signature)? {
            return Err(RecordError::SignatureInvalid {
                signer: self.fiduciary.as_str().to_string(),
            });
        }
        Ok(())
    }
}

impl Canonical for BreachRecord {
    fn to_value(&self) -> Value {
        MapBuilder::new()
            .field("breach_id", Value::str(&self.breach_id))
            .field(
                "categories",
                Value::list(self.categories_affected.iter().map(Value::str)),
            )
            .field("description", Value::str(&self.description))
            .field("detected_at", Value::int(self.detected_at))
            .field("fiduciary", Value::str(self.fiduciary.as_str()))
            .field("fiduciary_signature", self.fiduciary_signature.to_value())
            .field("high_risk", Value::Bool(self.high_risk))
            .opt(
                "principal_notified_at",
                self.principal_notified_at.map(Value::int),
            )
            .opt(
                "reported_to_authority_at",
                self.reported_to_authority_at.map(Value::int),
            )
            .build()
    }
}

impl FromValue for BreachRecord {
    fn from_value(value: &Value) -> Result<Self, CanonicalError> {
        let mut r = MapReader::new(value)?;
        let breach_id = r.string("breach_id")?;
        let categories_affected = r
            .list("categories")?
            .iter()
            .map(|v| v.as_str().map(str::to_string))
            .collect::<Result<BTreeSet<_>, _>>()?;
        let description = r.string("description")?;
        let detected_at = r.int("detected_at")?;
        let fiduciary = PartyId::new(r.string("fiduciary")?);
        let fiduciary_signature = Signature::from_value(r.required("fiduciary_signature")?)?;
        let high_risk = r.boolean("high_risk")?;
        let principal_notified_at = match r.optional("principal_notified_at") {
            Some(v) => Some(v.as_int()?),
            None => None,
        };
        let reported_to_authority_at = match r.optional("reported_to_authority_at") {
            Some(v) => Some(v.as_int()?),
            None => None,
        };
        r.finish()?;
        Ok(BreachRecord {
            breach_id,
            description,
            categories_affected,
            detected_at,
            reported_to_authority_at,
            high_risk,
            principal_notified_at,
            fiduciary,
            fiduciary_signature,
        })
    }
}

/// Everything a breach record declares, minus the signature.
#[derive(Debug, Clone)]
pub struct BreachDetails {
    pub breach_id: String,
    pub description: String,
    pub categories_affected: BTreeSet<String>,
    pub detected_at: i64,
    pub reported_to_authority_at: Option<i64>,
    pub high_risk: bool,
    pub principal_notified_at: Option<i64>,
}

pub fn record_breach(
    details: BreachDetails,
    fiduciary: &Signer<'_>,
) -> Result<BreachRecord, RecordError> {
    if let Some(reported) = details.reported_to_authority_at {
        if reported < details.detected_at {
            return Err(RecordError::Malformed(
                "breach reported before it was detected".to_string(),
            ));
        }
    }
    let bytes = BreachRecord::signing_view(
        &details.breach_id,
        &details.description,
        &details.categories_affected,
        details.detected_at,
        details.reported_to_authority_at,
        details.high_risk,
        details.principal_notified_at,
        fiduciary.party_id(),
    )
    .encode();
    let fiduciary_signature = fiduciary.key.sign_bytes(&bytes);
    Ok(BreachRecord {
        breach_id: details.breach_id,
        description: details.description,
        categories_affected: details.categories_affected,
        detected_at: details.detected_at,
        reported_to_authority_at: details.reported_to_authority_at,
        high_risk: details.high_risk,
        principal_notified_at: details.principal_notified_at,
        fiduciary: fiduciary.party_id().clone(),
        fiduciary_signature,
    })
}

// ---------------------------------------------------------------------------
// Corrections
// ---------------------------------------------------------------------------

/// Both-party record that a stored field was corrected. Values appear only
/// as digests.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorrectionEvent {
    pub principal: PartyId,
    pub fiduciary: PartyId,
    pub field_path: String,
    pub old_value_digest: Digest,
    pub new_value_digest: Digest,
    pub timestamp: TimestampToken,
    pub principal_signature: Signature,
    pub fiduciary_signature: Signature,
}

impl CorrectionEvent {
    fn signing_view(
        principal: &PartyId,
        fiduciary: &PartyId,
        field_path: &str,
        old_value_digest: &Digest,
        new_value_digest: &Digest,
    ) -> Value {
        MapBuilder::new()
            .field("fiduciary", Value::str(fiduciary.as_str()))
            .field("field_path", Value::str(field_path))
            .field("new_value", new_value_digest.to_value())
            .field("old_value", old_value_digest.to_value())
            .field("principal", Value::str(principal.as_str()))
            .build()
    }

    pub fn verify(&self, directory: &PartyDirectory) -> Result<(), RecordError> {
        if self.old_value_digest == self.new_value_digest {
            return Err(RecordError::Malformed(
                "correction must change the value".to_string(),
            ));
        }
        let bytes = Self::signing_view(
            &self.principal,
            &self.fiduciary,
            &self.field_path,
            &self.old_value_digest,
            &self.new_value_digest,
        )
        .encode();
        for (party, sig) in [
            (&self.principal, &self.principal_signature),
            (&self.fiduciary, &self.fiduciary_signature),
        ] {
            if !directory.verify_as(party, &bytes, sig)? {
                return Err(RecordError::SignatureInvalid {
                    signer: party.as_str().to_string(),
                });
            }
        }
        verify_token(&self.timestamp, &Digest::of_bytes(&bytes), directory)
            .map_err(RecordError::TimestampInvalid)
    }
}

impl Canonical for CorrectionEvent {
    fn to_value(&self) -> Value {
        MapBuilder::new()
            .field("fiduciary", Value::str(self.fiduciary.as_str()))
            .field("fiduciary_signature", self.fiduciary_signature.to_value())
            .field("field_path", Value::str(&self.field_path))
            .field("new_value", self.new_value_digest.to_value())
            .field("old_value", self.old_value_digest.to_value())
            .field("principal", Value::str(self.principal.as_str()))
            .field("principal_signature", self.principal_signature.to_value())
            .field("timestamp", self.timestamp.to_value())
            .build()
    }
}

impl FromValue for CorrectionEvent {
    fn from_value(value: &Value) -> Result<Self, CanonicalError> {
        let mut r = MapReader::new(value)?;
        let fiduciary = PartyId::new(r.string("fiduciary")?);
        let fiduciary_signature = Signature::from_value(r.required("fiduciary_signature")?)?;
        let field_path = r.string("field_path")?;
        let new_value_digest = Digest::from_value(r.required("new_value")?)?;
        let old_value_digest = Digest::from_value(r.required("old_value")?)?;
        let principal = PartyId::new(r.string("principal")?);
        let principal_signature = Signature::from_value(r.required("principal_signature")?)?;
        let timestamp = TimestampToken::from_value(r.required("timestamp")?)?;
        r.finish()?;
        Ok(CorrectionEvent {
            principal,
            fiduciary,
            field_path,
            old_value_digest,
            new_value_digest,
            timestamp,
            principal_signature,
            fiduciary_signature,
        })
    }
}

pub fn record_correction(
    principal: &Signer<'_>,
    fiduciary: &Signer<'_>,
    field_path: impl Into<String>,
    old_value_digest: Digest,
    new_value_digest: Digest,
    tsa: &mut TimestampAuthority,
    clock: &dyn Clock,
) -> Result<CorrectionEvent, RecordError> {
    if old_value_digest == new_value_digest {
        return Err(RecordError::Malformed(
            "correction must change the value".to_string(),
        ));
    }
    let field_path = field_path.into();
    let bytes = CorrectionEvent::signing_view(
        principal.party_id(),
        fiduciary.party_id(),
        &field_path,
        &old_value_digest,
        &new_value_digest,
    )
    .encode();
    let principal_signature = principal.key.sign_bytes(&bytes);
    let fiduciary_signature = fiduciary.key.sign_bytes(&bytes);
    let timestamp = tsa.issue(clock, Digest::of_bytes(&bytes))?;
    Ok(CorrectionEvent {
        principal: principal.party_id().clone(),
        fiduciary: fiduciary.party_id().clone(),
        field_path,
        old_value_digest,
        new_value_digest,
        timestamp,
        principal_signature,
        fiduciary_signature,
    })
}

// ---------------------------------------------------------------------------
// Disclosure restrictions
// ---------------------------------------------------------------------------

/// Marker that further disclosure for a pair is restricted by an
/// adjudicating-officer order. SHARE/DISCLOSE after this marker is a
/// violation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RestrictionMarker {
    pub principal: PartyId,
    pub fiduciary: PartyId,
    /// Digest of the adjudicating-officer order document.
    pub order_ref: Digest,
    pub timestamp: TimestampToken,
    pub fiduciary_signature: Signature,
}

impl RestrictionMarker {
    fn signing_view(principal: &PartyId, fiduciary: &PartyId, order_ref: &Digest) -> Value {
        MapBuilder::new()
            .field("fiduciary", Value::str(fiduciary.as_str()))
            .field("order_ref", order_ref.to_value())
            .field("principal", Value::str(principal.as_str()))
            .build()
    }

    pub fn verify(&self, directory: &PartyDirectory) -> Result<(), RecordError> {
        let bytes = Self::signing_view(&self.principal, &self.fiduciary, &self.order_ref).encode();
        if !directory.verify_as(&self.fiduciary, &bytes, &self.fiduciary_signature)? {
            return Err(RecordError::SignatureInvalid {
                signer: self.fiduciary.as_str().to_string(),
            });
        }
        verify_token(&self.timestamp, &Digest::of_bytes(&bytes), directory)
            .map_err(RecordError::TimestampInvalid)
    }
}

impl Canonical for RestrictionMarker {
    fn to_value(&self) -> Value {
        MapBuilder::new()
            .field("fiduciary", Value::str(self.fiduciary.as_str()))
            .field("fiduciary_signature", self.fiduciary_signature.to_value())
            .field("order_ref", self.order_ref.to_value())
            .field("principal", Value::str(self.principal.as_str()))
            .field("timestamp", self.timestamp.to_value())
            .build()
    }
}

impl FromValue for RestrictionMarker {
    fn from_value(value: &Value) -> Result<Self, CanonicalError> {
        let mut r = MapReader::new(value)?;
        let fiduciary = PartyId::new(r.string("fiduciary")?);
        let fiduciary_signature = Signature::from_value(r.required("fiduciary_signature")?)?;
        let order_ref = Digest::from_value(r.required("order_ref")?)?;
        let principal = PartyId::new(r.string("principal")?);
        let timestamp = TimestampToken::from_value(r.required("timestamp")?)?;
        r.finish()?;
        Ok(RestrictionMarker {
            principal,
            fiduciary,
            order_ref,
            timestamp,
            fiduciary_signature,
        })
    }
}

/// Create a disclosure-restriction marker. The order reference is mandatory:
/// the restriction only exists by an adjudicating officer's order.
pub fn record_restriction(
    principal: PartyId,
    fiduciary: &Signer<'_>,
    order_ref: Option<Digest>,
    tsa: &mut TimestampAuthority,
    clock: &dyn Clock,
) -> Result<RestrictionMarker, RecordError> {
    let order_ref = order_ref.ok_or(RecordError::OrderRefRequired)?;
    let bytes =
        RestrictionMarker::signing_view(&principal, fiduciary.party_id(), &order_ref).encode();
    let fiduciary_signature = fiduciary.key.sign_bytes(&bytes);
    let timestamp = tsa.issue(clock, Digest::of_bytes(&bytes))?;
    Ok(RestrictionMarker {
        principal,
        fiduciary: fiduciary.party_id().clone(),
        order_ref,
        timestamp,
        fiduciary_signature,
    })
}
