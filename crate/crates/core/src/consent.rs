//! Consent forms and their signed lifecycle events.
//!
//! A consent chain is a sequence of events `ESTABLISH (MODIFY)* (WITHDRAW)?`
//! linked by `supersedes` digests. Every event is signed by both the
//! principal and the fiduciary (and the guardian for child consent) over the
//! canonical bytes of `(kind, form-or-notice, supersedes)`, then timestamped
//! by the authority. Withdrawal is terminal: continuing the relationship
//! requires a fresh ESTABLISH with a new form id.
//!
//! Withdrawal notices carry a copy of the third-party list from the form in
//! force, so that propagation receipts can be validated without access to
//! the rest of the chain.

use std::collections::{BTreeMap, BTreeSet};

use crate::canonical::{Canonical, CanonicalError, FromValue, MapBuilder, MapReader, Value};
use crate::clock::Clock;
use crate::crypto::{CryptoError, Digest, PartyDirectory, PartyId, Role, Signature, Signer};
use crate::minimization::{classify, DataClass, Taxonomy};
use crate::tsa::{TimestampAuthority, TimestampToken, TsaError};

#[derive(Debug, thiserror::Error)]
pub enum ConsentError {
    #[error("form validation failed: {}", codes(.0))]
    Validation(Vec<FormViolation>),
    #[error("CONSENT_TERMINATED: the prior event is a withdrawal")]
    ConsentTerminated,
    #[error("PAIR_MISMATCH: event does not belong to the same principal/fiduciary pair")]
    PairMismatch,
    #[error("NOT_A_RECIPIENT: \"{party}\" is not a listed third party of the withdrawn consent")]
    NotARecipient { party: String },
    #[error("GUARDIAN_REQUIRED: child consent needs a guardian signer")]
    GuardianRequired,
    #[error("signer \"{got}\" does not match the required party \"{expected}\"")]
    WrongSigner { expected: String, got: String },
    #[error("malformed consent event: {0}")]
    Malformed(String),
    #[error("signature by \"{signer}\" does not verify")]
    SignatureInvalid { signer: String },
    #[error("timestamp invalid: {0}")]
    TimestampInvalid(String),
    #[error(transparent)]
    Crypto(#[from] CryptoError),
    #[error(transparent)]
    Tsa(#[from] TsaError),
}

fn codes(violations: &[FormViolation]) -> String {
    violations
        .iter()
        .map(|v| v.code())
        .collect::<Vec<_>>()
        .join(",")
}

// ---------------------------------------------------------------------------
// Form
// ---------------------------------------------------------------------------

/// One declared processing purpose and the categories it may touch.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PurposeSpec {
    pub purpose_id: String,
    pub description: String,
    pub data_categories: BTreeSet<String>,
    pub requires_explicit_ack: bool,
}

impl Canonical for PurposeSpec {
    fn to_value(&self) -> Value {
        MapBuilder::new()
            .field(
                "data_categories",
                Value::list(self.data_categories.iter().map(Value::str)),
            )
            .field("description", Value::str(&self.description))
            .field("purpose_id", Value::str(&self.purpose_id))
            .field(
                "requires_explicit_ack",
                Value::Bool(self.requires_explicit_ack),
            )
            .build()
    }
}

impl FromValue for PurposeSpec {
    fn from_value(value: &Value) -> Result<Self, CanonicalError> {
        let mut r = MapReader::new(value)?;
        let data_categories = string_set(r.list("data_categories")?)?;
        let description = r.string("description")?;
        let purpose_id = r.string("purpose_id")?;
        let requires_explicit_ack = r.boolean("requires_explicit_ack")?;
        r.finish()?;
        Ok(PurposeSpec {
            purpose_id,
            description,
            data_categories,
            requires_explicit_ack,
        })
    }
}

/// Retention commitment: a fixed lifetime or a recurring review obligation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Retention {
    FixedDays(u32),
    ReviewIntervalDays(u32),
}

impl Retention {
    pub fn days(&self) -> u32 {
        match self {
            Retention::FixedDays(d) | Retention::ReviewIntervalDays(d) => *d,
        }
    }

    fn value(self) -> Value {
        match self {
            Retention::FixedDays(d) => MapBuilder::new()
                .field("fixed_days", Value::uint(d as u64))
                .build(),
            Retention::ReviewIntervalDays(d) => MapBuilder::new()
                .field("review_interval_days", Value::uint(d as u64))
                .build(),
        }
    }

    fn from_value(value: &Value) -> Result<Self, CanonicalError> {
        let mut r = MapReader::new(value)?;
        if let Some(v) = r.optional("fixed_days") {
            let days = v.as_u64()?;
            r.finish()?;
            return Ok(Retention::FixedDays(days as u32));
        }
        if let Some(v) = r.optional("review_interval_days") {
            let days = v.as_u64()?;
            r.finish()?;
            return Ok(Retention::ReviewIntervalDays(days as u32));
        }
        Err(CanonicalError::decode(
            "retention needs fixed_days or review_interval_days",
        ))
    }
}

/// Cross-border declaration: whether transfer out of the jurisdiction is
/// consented, and to where.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CrossBorder {
    pub allowed: bool,
    pub destination: Option<String>,
}

impl CrossBorder {
    pub fn forbidden() -> Self {
        CrossBorder {
            allowed: false,
            destination: None,
        }
    }

    pub fn to(destination: impl Into<String>) -> Self {
        CrossBorder {
            allowed: true,
            destination: Some(destination.into()),
        }
    }

    fn to_value(&self) -> Value {
        MapBuilder::new()
            .field("allowed", Value::Bool(self.allowed))
            .opt("destination", self.destination.as_deref().map(Value::str))
            .build()
    }

    fn from_value(value: &Value) -> Result<Self, CanonicalError> {
        let mut r = MapReader::new(value)?;
        let allowed = r.boolean("allowed")?;
        let destination = match r.optional("destination") {
            Some(v) => Some(v.as_str()?.to_string()),
            None => None,
        };
        r.finish()?;
        Ok(CrossBorder {
            allowed,
            destination,
        })
    }
}

/// The affirmation shown for sensitive purposes and the per-purpose
/// checkboxes the principal ticked.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ExplicitAck {
    pub affirmation: String,
    pub acknowledged: BTreeMap<String, bool>,
}

impl ExplicitAck {
    pub fn is_checked(&self, purpose_id: &str) -> bool {
        self.acknowledged.get(purpose_id).copied().unwrap_or(false)
    }

    fn to_value(&self) -> Value {
        let mut acks = MapBuilder::new();
        for (purpose, checked) in &self.acknowledged {
            acks = acks.field(purpose, Value::Bool(*checked));
        }
        MapBuilder::new()
            .field("acknowledged", acks.build())
            .field("affirmation", Value::str(&self.affirmation))
            .build()
    }

    fn from_value(value: &Value) -> Result<Self, CanonicalError> {
        let mut r = MapReader::new(value)?;
        let ack_map = r.required("acknowledged")?.as_map()?;
        let mut acknowledged = BTreeMap::new();
        for (k, v) in ack_map {
            acknowledged.insert(k.clone(), v.as_bool()?);
        }
        let affirmation = r.string("affirmation")?;
        r.finish()?;
        Ok(ExplicitAck {
            affirmation,
            acknowledged,
        })
    }
}

/// Guardian details for a principal below the age of majority.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChildConsent {
    pub guardian: PartyId,
    /// Guardian-signed statement of the form "subject age >= 18 is false,
    /// guardian consents"; the guardian signature on the event attests it.
    pub age_attestation: String,
}

impl ChildConsent {
    fn to_value(&self) -> Value {
        MapBuilder::new()
            .field("age_attestation", Value::str(&self.age_attestation))
            .field("guardian", Value::str(self.guardian.as_str()))
            .build()
    }

    fn from_value(value: &Value) -> Result<Self, CanonicalError> {
        let mut r = MapReader::new(value)?;
        let age_attestation = r.string("age_attestation")?;
        let guardian = PartyId::new(r.string("guardian")?);
        r.finish()?;
        Ok(ChildConsent {
            guardian,
            age_attestation,
        })
    }
}

/// The opt-in consent document a principal and fiduciary agree on.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConsentForm {
    pub form_id: String,
    pub principal: PartyId,
    pub fiduciary: PartyId,
    pub purposes: Vec<PurposeSpec>,
    /// Always declared; an empty list is an explicit "shared with nobody".
    pub third_parties: Vec<PartyId>,
    pub retention: Retention,
    pub cross_border: CrossBorder,
    pub explicit_ack: Option<ExplicitAck>,
    pub child: Option<ChildConsent>,
}

impl ConsentForm {
    pub fn purpose(&self, purpose_id: &str) -> Option<&PurposeSpec> {
        self.purposes.iter().find(|p| p.purpose_id == purpose_id)
    }

    pub fn lists_third_party(&self, party: &PartyId) -> bool {
        self.third_parties.iter().any(|p| p == party)
    }

    /// Union of all categories named by any purpose.
    pub fn consented_categories(&self) -> BTreeSet<String> {
        self.purposes
            .iter()
            .flat_map(|p| p.data_categories.iter().cloned())
            .collect()
    }
}

impl Canonical for ConsentForm {
    // Purposes and third parties are sets in spirit; the canonical form
    // sorts them so the input order never changes the signed bytes.
    fn to_value(&self) -> Value {
        let mut purposes: Vec<&PurposeSpec> = self.purposes.iter().collect();
        purposes.sort_by(|a, b| a.purpose_id.cmp(&b.purpose_id));
        let mut third_parties: Vec<&PartyId> = self.third_parties.iter().collect();
        third_parties.sort();
        MapBuilder::new()
            .opt("child", self.child.as_ref().map(|c| c.to_value()))
            .field("cross_border", self.cross_border.to_value())
            .opt(
                "explicit_ack",
                self.explicit_ack.as_ref().map(|a| a.to_value()),
            )
            .field("fiduciary", Value::str(self.fiduciary.as_str()))
            .field("form_id", Value::str(&self.form_id))
            .field("principal", Value::str(self.principal.as_str()))
            .field(
                "purposes",
                Value::list(purposes.iter().map(|p| p.to_value())),
            )
            .field("retention", self.retention.value())
            .field(
                "third_parties",
                Value::list(third_parties.iter().map(|p| Value::str(p.as_str()))),
            )
            .build()
    }
}

impl FromValue for ConsentForm {
    fn from_value(value: &Value) -> Result<Self, CanonicalError> {
        let mut r = MapReader::new(value)?;
        let child = match r.optional("child") {
            Some(v) => Some(ChildConsent::from_value(v)?),
            None => None,
        };
        let cross_border = CrossBorder::from_value(r.required("cross_border")?)?;
        let explicit_ack = match r.optional("explicit_ack") {
            Some(v) => Some(ExplicitAck::from_value(v)?),
            None => None,
        };
        let fiduciary = PartyId::new(r.string("fiduciary")?);
        let form_id = r.string("form_id")?;
        let principal = PartyId::new(r.string("principal")?);
        let purposes = r
            .list("purposes")?
            .iter()
            .map(PurposeSpec::from_value)
            .collect::<Result<Vec<_>, _>>()?;
        let retention = Retention::from_value(r.required("retention")?)?;
        let third_parties = r
            .list("third_parties")?
            .iter()
            .map(|v| Ok(PartyId::new(v.as_str()?)))
            .collect::<Result<Vec<_>, CanonicalError>>()?;
        r.finish()?;
        Ok(ConsentForm {
            form_id,
            principal,
            fiduciary,
            purposes,
            third_parties,
            retention,
            cross_border,
            explicit_ack,
            child,
        })
    }
}

fn string_set(values: &[Value]) -> Result<BTreeSet<String>, CanonicalError> {
    values
        .iter()
        .map(|v| v.as_str().map(str::to_string))
        .collect()
}

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

/// A named invariant the form breaks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FormViolation {
    EmptyFormId,
    NoPurposes,
    EmptyDescription {
        purpose_id: String,
    },
    EmptyCategories {
        purpose_id: String,
    },
    UnknownCategory {
        purpose_id: String,
        category_id: String,
    },
    /// A purpose touches sensitive data but is not marked as needing an
    /// explicit acknowledgment.
    ExplicitAckFlagRequired {
        purpose_id: String,
        category_id: String,
    },
    /// A purpose requires an explicit acknowledgment and none is checked.
    ExplicitAckMissing {
        purpose_id: String,
    },
    RetentionNotPositive,
    GuardianRequired,
    GuardianIsPrincipal,
}

impl FormViolation {
    pub fn code(&self) -> &'static str {
        match self {
            FormViolation::EmptyFormId => "EMPTY_FORM_ID",
            FormViolation::NoPurposes => "NO_PURPOSES",
            FormViolation::EmptyDescription { .. } => "EMPTY_DESCRIPTION",
            FormViolation::EmptyCategories { .. } => "EMPTY_CATEGORIES",
            FormViolation::UnknownCategory { .. } => "UNKNOWN_CATEGORY",
            FormViolation::ExplicitAckFlagRequired { .. } => "EXPLICIT_ACK_FLAG_REQUIRED",
            FormViolation::ExplicitAckMissing { .. } => "EXPLICIT_ACK_MISSING",
            FormViolation::RetentionNotPositive => "RETENTION_NOT_POSITIVE",
            FormViolation::GuardianRequired => "GUARDIAN_REQUIRED",
            FormViolation::GuardianIsPrincipal => "GUARDIAN_IS_PRINCIPAL",
        }
    }
}

/// Check every form invariant against the taxonomy. Empty result means the
/// form is acceptable.
pub fn validate_form(form: &ConsentForm, taxonomy: &Taxonomy) -> Vec<FormViolation> {
    let mut violations = Vec::new();
    if form.form_id.trim().is_empty() {
        violations.push(FormViolation::EmptyFormId);
    }
    if form.purposes.is_empty() {
        violations.push(FormViolation::NoPurposes);
    }
    for purpose in &form.purposes {
        if purpose.description.trim().is_empty() {
            violations.push(FormViolation::EmptyDescription {
                purpose_id: purpose.purpose_id.clone(),
            });
        }
        if purpose.data_categories.is_empty() {
            violations.push(FormViolation::EmptyCategories {
                purpose_id: purpose.purpose_id.clone(),
            });
        }
        let mut touches_sensitive = false;
        for category in &purpose.data_categories {
            match classify(category, taxonomy) {
                Ok(DataClass::SpiPd) => touches_sensitive = true,
                Ok(_) => {}
                Err(_) => violations.push(FormViolation::UnknownCategory {
                    purpose_id: purpose.purpose_id.clone(),
                    category_id: category.clone(),
                }),
            }
        }
        if touches_sensitive && !purpose.requires_explicit_ack {
            let category_id = purpose
                .data_categories
                .iter()
                .find(|c| matches!(classify(c, taxonomy), Ok(DataClass::SpiPd)))
                .cloned()
                .unwrap_or_default();
            violations.push(FormViolation::ExplicitAckFlagRequired {
                purpose_id: purpose.purpose_id.clone(),
                category_id,
            });
        }
        if purpose.requires_explicit_ack {
            let checked = form
                .explicit_ack
                .as_ref()
                .map(|a| a.is_checked(&purpose.purpose_id))
                .unwrap_or(false);
            if !checked {
                violations.push(FormViolation::ExplicitAckMissing {
                    purpose_id: purpose.purpose_id.clone(),
                });
            }
        }
    }
    if form.retention.days() == 0 {
        violations.push(FormViolation::RetentionNotPositive);
    }
    if let Some(child) = &form.child {
        if child.guardian.as_str().trim().is_empty() {
            violations.push(FormViolation::GuardianRequired);
        } else if child.guardian == form.principal {
            violations.push(FormViolation::GuardianIsPrincipal);
        }
    }
    violations
}

// ---------------------------------------------------------------------------
// Events
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EventKind {
    Establish,
    Modify,
    Withdraw,
}

impl EventKind {
    pub const ALL: [EventKind; 3] = [EventKind::Establish, EventKind::Modify, EventKind::Withdraw];

    pub fn as_str(&self) -> &'static str {
        match self {
            EventKind::Establish => "ESTABLISH",
            EventKind::Modify => "MODIFY",
            EventKind::Withdraw => "WITHDRAW",
        }
    }

    pub fn parse(s: &str) -> Result<Self, CanonicalError> {
        EventKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| CanonicalError::decode(format!("unknown event kind \"{s}\"")))
    }
}

/// What a withdrawal states: which agreement ends, between whom, and which
/// third parties must be intimated.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WithdrawalNotice {
    pub principal: PartyId,
    pub fiduciary: PartyId,
    pub form_id: String,
    pub third_parties: Vec<PartyId>,
}

impl Canonical for WithdrawalNotice {
    fn to_value(&self) -> Value {
        let mut third_parties: Vec<&PartyId> = self.third_parties.iter().collect();
        third_parties.sort();
        MapBuilder::new()
            .field("fiduciary", Value::str(self.fiduciary.as_str()))
            .field("form_id", Value::str(&self.form_id))
            .field("principal", Value::str(self.principal.as_str()))
            .field(
                "third_parties",
                Value::list(third_parties.iter().map(|p| Value::str(p.as_str()))),
            )
            .build()
    }
}

impl FromValue for WithdrawalNotice {
    fn from_value(value: &Value) -> Result<Self, CanonicalError> {
        let mut r = MapReader::new(value)?;
        let fiduciary = PartyId::new(r.string("fiduciary")?);
        let form_id = r.string("form_id")?;
        let principal = PartyId::new(r.string("principal")?);
        let third_parties = r
            .list("third_parties")?
            .iter()
            .map(|v| Ok(PartyId::new(v.as_str()?)))
            .collect::<Result<Vec<_>, CanonicalError>>()?;
        r.finish()?;
        Ok(WithdrawalNotice {
            principal,
            fiduciary,
            form_id,
            third_parties,
        })
    }
}

/// Form for establish/modify, notice for withdraw.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ConsentBody {
    Form(ConsentForm),
    Withdrawal(WithdrawalNotice),
}

/// A signed, timestamped lifecycle event: the unit of proof that consent was
/// established, modified, or withdrawn.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConsentEvent {
    pub kind: EventKind,
    pub body: ConsentBody,
    pub supersedes: Option<Digest>,
    pub principal_signature: Signature,
    pub fiduciary_signature: Signature,
    pub guardian_signature: Option<Signature>,
    pub timestamp: TimestampToken,
}

impl ConsentEvent {
    pub fn form(&self) -> Option<&ConsentForm> {
        match &self.body {
            ConsentBody::Form(f) => Some(f),
            ConsentBody::Withdrawal(_) => None,
        }
    }

    pub fn notice(&self) -> Option<&WithdrawalNotice> {
        match &self.body {
            ConsentBody::Form(_) => None,
            ConsentBody::Withdrawal(n) => Some(n),
        }
    }

    pub fn principal(&self) -> &PartyId {
        match &self.body {
            ConsentBody::Form(f) => &f.principal,
            ConsentBody::Withdrawal(n) => &n.principal,
        }
    }

    pub fn fiduciary(&self) -> &PartyId {
        match &self.body {
            ConsentBody::Form(f) => &f.fiduciary,
            ConsentBody::Withdrawal(n) => &n.fiduciary,
        }
    }

    pub fn form_id(&self) -> &str {
        match &self.body {
            ConsentBody::Form(f) => &f.form_id,
            ConsentBody::Withdrawal(n) => &n.form_id,
        }
    }

    pub fn sequence(&self) -> u64 {
        self.timestamp.sequence
    }

    pub fn wall_time(&self) -> i64 {
        self.timestamp.wall_time
    }

    /// Digest of the full event (body, signatures, timestamp): the value
    /// later events reference in `supersedes`.
    pub fn digest(&self) -> Digest {
        Digest::of(self)
    }

    /// The canonical view both parties sign: kind, body, supersedes.
    pub fn signing_view(kind: EventKind, body: &ConsentBody, supersedes: Option<&Digest>) -> Value {
        let builder = MapBuilder::new().field("kind", Value::str(kind.as_str()));
        let builder = match body {
            ConsentBody::Form(f) => builder.field("form", f.to_value()),
            ConsentBody::Withdrawal(n) => builder.field("notice", n.to_value()),
        };
        builder
            .opt("supersedes", supersedes.map(|d| d.to_value()))
            .build()
    }

    fn own_signing_bytes(&self) -> Vec<u8> {
        Self::signing_view(self.kind, &self.body, self.supersedes.as_ref()).encode()
    }

    /// Structural invariants that do not need key material.
    pub fn check_structure(&self) -> Result<(), ConsentError> {
        match (self.kind, &self.body) {
            (EventKind::Establish, ConsentBody::Form(_)) => {
                if self.supersedes.is_some() {
                    return Err(ConsentError::Malformed(
                        "ESTABLISH must not supersede an earlier event".to_string(),
                    ));
                }
            }
            (EventKind::Modify, ConsentBody::Form(_)) => {
                if self.supersedes.is_none() {
                    return Err(ConsentError::Malformed(
                        "MODIFY must name the event it supersedes".to_string(),
                    ));
                }
            }
            (EventKind::Withdraw, ConsentBody::Withdrawal(_)) => {
                if self.supersedes.is_none() {
                    return Err(ConsentError::Malformed(
                        "WITHDRAW must name the event it supersedes".to_string(),
                    ));
                }
            }
            (kind, ConsentBody::Form(_)) => {
                return Err(ConsentError::Malformed(format!(
                    "{} must carry a withdrawal notice, not a form",
                    kind.as_str()
                )))
            }
            (kind, ConsentBody::Withdrawal(_)) => {
                return Err(ConsentError::Malformed(format!(
                    "{} must carry a form, not a withdrawal notice",
                    kind.as_str()
                )))
            }
        }
        let is_child = self.form().map(|f| f.child.is_some()).unwrap_or(false);
        if is_child && self.guardian_signature.is_none() {
            return Err(ConsentError::GuardianRequired);
        }
        if !is_child && self.guardian_signature.is_some() {
            return Err(ConsentError::Malformed(
                "guardian signature on a non-child event".to_string(),
            ));
        }
        Ok(())
    }

    /// Full verification: structure, all party signatures, and the timestamp
    /// token, resolved through the directory.
    pub fn verify(&self, directory: &PartyDirectory) -> Result<(), ConsentError> {
        self.check_structure()?;
        let bytes = self.own_signing_bytes();
        let check = |party: &PartyId, sig: &Signature| -> Result<(), ConsentError> {
            let ok = directory.verify_as(party, &bytes, sig)?;
            if ok {
                Ok(())
            } else {
                Err(ConsentError::SignatureInvalid {
                    signer: party.as_str().to_string(),
                })
            }
        };
        check(self.principal(), &self.principal_signature)?;
        check(self.fiduciary(), &self.fiduciary_signature)?;
        if let (Some(form), Some(sig)) = (self.form(), &self.guardian_signature) {
            let guardian = &form
                .child
                .as_ref()
                .expect("structure check guarantees child data")
                .guardian;
            check(guardian, sig)?;
        }
        verify_token(&self.timestamp, &Digest::of_bytes(&bytes), directory)
            .map_err(ConsentError::TimestampInvalid)
    }
}

impl Canonical for ConsentEvent {
    fn to_value(&self) -> Value {
        let builder = MapBuilder::new()
            .field("fiduciary_signature", self.fiduciary_signature.to_value())
            .opt(
                "guardian_signature",
                self.guardian_signature.as_ref().map(|s| s.to_value()),
            )
            .field("kind", Value::str(self.kind.as_str()));
        let builder = match &self.body {
            ConsentBody::Form(f) => builder.field("form", f.to_value()),
            ConsentBody::Withdrawal(n) => builder.field("notice", n.to_value()),
        };
        builder
            .field("principal_signature", self.principal_signature.to_value())
            .opt("supersedes", self.supersedes.as_ref().map(|d| d.to_value()))
            .field("timestamp", self.timestamp.to_value())
            .build()
    }
}

impl FromValue for ConsentEvent {
    fn from_value(value: &Value) -> Result<Self, CanonicalError> {
        let mut r = MapReader::new(value)?;
        let fiduciary_signature = Signature::from_value(r.required("fiduciary_signature")?)?;
        let form = match r.optional("form") {
            Some(v) => Some(ConsentForm::from_value(v)?),
            None => None,
        };
        let guardian_signature = match r.optional("guardian_signature") {
            Some(v) => Some(Signature::from_value(v)?),
            None => None,
        };
        let kind = EventKind::parse(r.str("kind")?)?;
        let notice = match r.optional("notice") {
            Some(v) => Some(WithdrawalNotice::from_value(v)?),
            None => None,
        };
        let principal_signature = Signature::from_value(r.required("principal_signature")?)?;
        let supersedes = match r.optional("supersedes") {
            Some(v) => Some(Digest::from_value(v)?),
            None => None,
        };
        let timestamp = TimestampToken::from_value(r.required("timestamp")?)?;
        r.finish()?;
        let body = match (form, notice) {
            (Some(f), None) => ConsentBody::Form(f),
            (None, Some(n)) => ConsentBody::Withdrawal(n),
            _ => {
                return Err(CanonicalError::decode(
                    "consent event needs exactly one of form or notice",
                ))
            }
        };
        Ok(ConsentEvent {
            kind,
            body,
            supersedes,
            principal_signature,
            fiduciary_signature,
            guardian_signature,
            timestamp,
        })
    }
}

/// Verify a timestamp token against the directory: the signer must be a
/// registered TSA identity and the token must cover `expected`.
pub(crate) fn verify_token(
    token: &TimestampToken,
    expected: &Digest,
    directory: &PartyDirectory,
) -> Result<(), String> {
    if !token.covers(expected) {
        return Err("token does not cover the signed payload".to_string());
    }
    let tsa = directory
        .by_fingerprint(&token.tsa_signature.signer_fingerprint)
        .ok_or_else(|| "token signer is not a registered identity".to_string())?;
    if tsa.role() != Role::Tsa {
        return Err(format!("token signer \"{}\" is not a TSA", tsa.party_id()));
    }
    if !token.verify(tsa) {
        return Err("token signature does not verify".to_string());
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Lifecycle operations
// ---------------------------------------------------------------------------

struct EventSigners<'a, 'b> {
    principal: &'a Signer<'b>,
    fiduciary: &'a Signer<'b>,
    guardian: Option<&'a Signer<'b>>,
}

fn assemble_event(
    kind: EventKind,
    body: ConsentBody,
    supersedes: Option<Digest>,
    signers: EventSigners<'_, '_>,
    tsa: &mut TimestampAuthority,
    clock: &dyn Clock,
) -> Result<ConsentEvent, ConsentError> {
    let view = ConsentEvent::signing_view(kind, &body, supersedes.as_ref());
    let bytes = view.encode();
    let principal_signature = signers.principal.key.sign_bytes(&bytes);
    let fiduciary_signature = signers.fiduciary.key.sign_bytes(&bytes);
    let guardian_signature = signers.guardian.map(|g| g.key.sign_bytes(&bytes));
    let timestamp = tsa.issue(clock, Digest::of_bytes(&bytes))?;
    let event = ConsentEvent {
        kind,
        body,
        supersedes,
        principal_signature,
        fiduciary_signature,
        guardian_signature,
        timestamp,
    };
    event.check_structure()?;
    Ok(event)
}

fn expect_signer(signer: &Signer<'_>, expected: &PartyId) -> Result<(), ConsentError> {
    if signer.party_id() != expected {
        return Err(ConsentError::WrongSigner {
            expected: expected.as_str().to_string(),
            got: signer.party_id().as_str().to_string(),
        });
    }
    Ok(())
}

fn check_form(form: &ConsentForm, taxonomy: &Taxonomy) -> Result<(), ConsentError> {
    let violations = validate_form(form, taxonomy);
    if violations.is_empty() {
        Ok(())
    } else {
        Err(ConsentError::Validation(violations))
    }
}

/// Create the opening event of a consent chain.
pub fn establish(
    form: ConsentForm,
    taxonomy: &Taxonomy,
    principal: &Signer<'_>,
    fiduciary: &Signer<'_>,
    guardian: Option<&Signer<'_>>,
    tsa: &mut TimestampAuthority,
    clock: &dyn Clock,
) -> Result<ConsentEvent, ConsentError> {
    check_form(&form, taxonomy)?;
    expect_signer(principal, &form.principal)?;
    expect_signer(fiduciary, &form.fiduciary)?;
    match (&form.child, guardian) {
        (Some(child), Some(g)) => expect_signer(g, &child.guardian)?,
        (Some(_), None) => return Err(ConsentError::GuardianRequired),
        (None, Some(_)) => {
            return Err(ConsentError::Malformed(
                "guardian signer supplied for a non-child form".to_string(),
            ))
        }
        (None, None) => {}
    }
    assemble_event(
        EventKind::Establish,
        ConsentBody::Form(form),
        None,
        EventSigners {
            principal,
            fiduciary,
            guardian,
        },
        tsa,
        clock,
    )
}

/// Replace the form in force with a new one, superseding `prior`.
#[allow(clippy::too_many_arguments)]
pub fn modify(
    prior: &ConsentEvent,
    new_form: ConsentForm,
    taxonomy: &Taxonomy,
    principal: &Signer<'_>,
    fiduciary: &Signer<'_>,
    guardian: Option<&Signer<'_>>,
    tsa: &mut TimestampAuthority,
    clock: &dyn Clock,
) -> Result<ConsentEvent, ConsentError> {
    if prior.kind == EventKind::Withdraw {
        return Err(ConsentError::ConsentTerminated);
    }
    if new_form.principal != *prior.principal() || new_form.fiduciary != *prior.fiduciary() {
        return Err(ConsentError::PairMismatch);
    }
    check_form(&new_form, taxonomy)?;
    expect_signer(principal, &new_form.principal)?;
    expect_signer(fiduciary, &new_form.fiduciary)?;
    match (&new_form.child, guardian) {
        (Some(child), Some(g)) => expect_signer(g, &child.guardian)?,
        (Some(_), None) => return Err(ConsentError::GuardianRequired),
        (None, Some(_)) => {
            return Err(ConsentError::Malformed(
                "guardian signer supplied for a non-child form".to_string(),
            ))
        }
        (None, None) => {}
    }
    let event = assemble_event(
        EventKind::Modify,
        ConsentBody::Form(new_form),
        Some(prior.digest()),
        EventSigners {
            principal,
            fiduciary,
            guardian,
        },
        tsa,
        clock,
    )?;
    if event.timestamp.sequence <= prior.timestamp.sequence {
        return Err(ConsentError::TimestampInvalid(
            "modification is not timestamped after the prior event".to_string(),
        ));
    }
    Ok(event)
}

/// Terminate the chain that currently ends in `prior`.
pub fn withdraw(
    prior: &ConsentEvent,
    principal: &Signer<'_>,
    fiduciary: &Signer<'_>,
    tsa: &mut TimestampAuthority,
    clock: &dyn Clock,
) -> Result<ConsentEvent, ConsentError> {
    if prior.kind == EventKind::Withdraw {
        return Err(ConsentError::ConsentTerminated);
    }
    let form = prior.form().expect("non-withdraw events carry a form");
    expect_signer(principal, &form.principal)?;
    expect_signer(fiduciary, &form.fiduciary)?;
    let notice = WithdrawalNotice {
        principal: form.principal.clone(),
        fiduciary: form.fiduciary.clone(),
        form_id: form.form_id.clone(),
        third_parties: form.third_parties.clone(),
    };
    let event = assemble_event(
        EventKind::Withdraw,
        ConsentBody::Withdrawal(notice),
        Some(prior.digest()),
        EventSigners {
            principal,
            fiduciary,
            guardian: None,
        },
        tsa,
        clock,
    )?;
    if event.timestamp.sequence <= prior.timestamp.sequence {
        return Err(ConsentError::TimestampInvalid(
            "withdrawal is not timestamped after the prior event".to_string(),
        ));
    }
    Ok(event)
}

// ---------------------------------------------------------------------------
// Withdrawal propagation
// ---------------------------------------------------------------------------

/// Signed acknowledgment by a listed third party that a withdrawal reached
/// it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WithdrawalPropagation {
    pub withdrawal_digest: Digest,
    pub third_party: PartyId,
    pub acknowledgment_signature: Signature,
    pub timestamp: TimestampToken,
}

impl WithdrawalPropagation {
    fn ack_view(withdrawal_digest: &Digest) -> Value {
        MapBuilder::new()
            .field("acknowledges_withdrawal", withdrawal_digest.to_value())
            .build()
    }

    pub fn verify(&self, directory: &PartyDirectory) -> Result<(), ConsentError> {
        let bytes = Self::ack_view(&self.withdrawal_digest).encode();
        let ok = directory.verify_as(&self.third_party, &bytes, &self.acknowledgment_signature)?;
        if !ok {
            return Err(ConsentError::SignatureInvalid {
                signer: self.third_party.as_str().to_string(),
            });
        }
        verify_token(&self.timestamp, &Digest::of_bytes(&bytes), directory)
            .map_err(ConsentError::TimestampInvalid)
    }
}

impl Canonical for WithdrawalPropagation {
    fn to_value(&self) -> Value {
        MapBuilder::new()
            .field("acknowledgment", self.acknowledgment_signature.to_value())
            .field("third_party", Value::str(self.third_party.as_str()))
            .field("timestamp", self.timestamp.to_value())
            .field("withdrawal", self.withdrawal_digest.to_value())
            .build()
    }
}

impl FromValue for WithdrawalPropagation {
    fn from_value(value: &Value) -> Result<Self, CanonicalError> {
        let mut r = MapReader::new(value)?;
        let acknowledgment_signature = Signature::from_value(r.required("acknowledgment")?)?;
        let third_party = PartyId::new(r.string("third_party")?);
        let timestamp = TimestampToken::from_value(r.required("timestamp")?)?;
        let withdrawal_digest = Digest::from_value(r.required("withdrawal")?)?;
        r.finish()?;
        Ok(WithdrawalPropagation {
            withdrawal_digest,
            third_party,
            acknowledgment_signature,
            timestamp,
        })
    }
}

/// Record that `third_party` has been intimated of `withdrawal`. The party
/// must be on the withdrawal notice's third-party list.
pub fn record_propagation(
    withdrawal: &ConsentEvent,
    third_party: &Signer<'_>,
    tsa: &mut TimestampAuthority,
    clock: &dyn Clock,
) -> Result<WithdrawalPropagation, ConsentError> {
    let notice = withdrawal.notice().ok_or_else(|| {
        ConsentError::Malformed("propagation requires a withdrawal event".to_string())
    })?;
    if !notice
        .third_parties
        .iter()
        .any(|p| p == third_party.party_id())
    {
        return Err(ConsentError::NotARecipient {
            party: third_party.party_id().as_str().to_string(),
        });
    }
    let withdrawal_digest = withdrawal.digest();
    let bytes = WithdrawalPropagation::ack_view(&withdrawal_digest).encode();
    let acknowledgment_signature = third_party.key.sign_bytes(&bytes);
    let timestamp = tsa.issue(clock, Digest::of_bytes(&bytes))?;
    Ok(WithdrawalPropagation {
        withdrawal_digest,
        third_party: third_party.party_id().clone(),
        acknowledgment_signature,
        timestamp,
    })
}
