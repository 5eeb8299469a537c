//! Compliance checkers: compare recorded activity against recorded consent.
//!
//! Each checker scans a verified ledger snapshot and produces findings with
//! ledger indices as evidence, plus a unit count for scoring (a unit is the
//! natural thing the check examines: a processing event, a breach record, a
//! withdrawal obligation). A unit fails when it produces a finding at
//! VIOLATION severity or above; WARN and INFO findings do not fail units.
//!
//! Checkers are pure functions over the snapshot and safe to run in
//! parallel. They assume the chain has been verified and consent chains are
//! fork-free — integrity problems are the audit driver's short-circuit, not
//! a checker concern. Pairs whose consent state cannot be resolved are
//! skipped here.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::canonical::{Canonical, CanonicalError, FromValue, MapBuilder, MapReader, Value};
use crate::clock::{SECONDS_PER_DAY, SECONDS_PER_HOUR};
use crate::consent::{ConsentEvent, EventKind};
use crate::crypto::{Digest, PartyDirectory, PartyId, Signer};
use crate::ledger::{Ledger, LedgerError, Payload};
use crate::minimization::{classify, CollectionPolicy, Taxonomy};
use crate::records::{record_restriction, ProcessingAction, RecordError};
use crate::tsa::TimestampAuthority;

#[derive(Debug, thiserror::Error)]
pub enum ComplianceError {
    #[error(transparent)]
    Record(#[from] RecordError),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
}

// ---------------------------------------------------------------------------
// Findings
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Severity {
    Info,
    Warn,
    Violation,
    Fatal,
}

impl Severity {
    pub const ALL: [Severity; 4] = [
        Severity::Info,
        Severity::Warn,
        Severity::Violation,
        Severity::Fatal,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Severity::Info => "INFO",
            Severity::Warn => "WARN",
            Severity::Violation => "VIOLATION",
            Severity::Fatal => "FATAL",
        }
    }

    pub fn parse(s: &str) -> Result<Self, CanonicalError> {
        Self::ALL
            .into_iter()
            .find(|x| x.as_str() == s)
            .ok_or_else(|| CanonicalError::decode(format!("unknown severity \"{s}\"")))
    }

    /// Severities that fail a check unit.
    pub fn fails_unit(&self) -> bool {
        matches!(self, Severity::Violation | Severity::Fatal)
    }
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum CheckId {
    ChainIntegrity,
    PurposeLimitation,
    WithdrawalEnforcement,
    Retention,
    Sharing,
    BreachTimeliness,
    GuardianProhibition,
    CollectionMinimization,
}

impl CheckId {
    pub const ALL: [CheckId; 8] = [
        CheckId::ChainIntegrity,
        CheckId::PurposeLimitation,
        CheckId::WithdrawalEnforcement,
        CheckId::Retention,
        CheckId::Sharing,
        CheckId::BreachTimeliness,
        CheckId::GuardianProhibition,
        CheckId::CollectionMinimization,
    ];

    /// The scored checkers; chain integrity runs up front and is not
    /// weighted.
    pub const SCORED: [CheckId; 7] = [
        CheckId::PurposeLimitation,
        CheckId::WithdrawalEnforcement,
        CheckId::Retention,
        CheckId::Sharing,
        CheckId::BreachTimeliness,
        CheckId::GuardianProhibition,
        CheckId::CollectionMinimization,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            CheckId::ChainIntegrity => "chain_integrity",
            CheckId::PurposeLimitation => "purpose_limitation",
            CheckId::WithdrawalEnforcement => "withdrawal_enforcement",
            CheckId::Retention => "retention",
            CheckId::Sharing => "sharing",
            CheckId::BreachTimeliness => "breach_timeliness",
            CheckId::GuardianProhibition => "guardian_prohibition",
            CheckId::CollectionMinimization => "collection_minimization",
        }
    }

    pub fn parse(s: &str) -> Result<Self, CanonicalError> {
        Self::ALL
            .into_iter()
            .find(|x| x.as_str() == s)
            .ok_or_else(|| CanonicalError::decode(format!("unknown check \"{s}\"")))
    }
}

impl fmt::Display for CheckId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One verdict with its ledger evidence.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Finding {
    pub check: CheckId,
    pub code: String,
    pub severity: Severity,
    /// Ledger indices backing the finding. Empty only for plan-scoped
    /// assessment findings that never touched a ledger.
    pub evidence: Vec<u64>,
    pub detail: String,
}

impl Finding {
    fn new(
        check: CheckId,
        code: &str,
        severity: Severity,
        evidence: Vec<u64>,
        detail: String,
    ) -> Self {
        Finding {
            check,
            code: code.to_string(),
            severity,
            evidence,
            detail,
        }
    }

    /// Stable line form: check, severity, code, indices, message.
    pub fn line(&self) -> String {
        let indices = self
            .evidence
            .iter()
            .map(|i| i.to_string())
            .collect::<Vec<_>>()
            .join(",");
        format!(
            "{}\t{}\t{}\t[{}]\t{}",
            self.check, self.severity, self.code, indices, self.detail
        )
    }
}

impl Canonical for Finding {
    fn to_value(&self) -> Value {
        MapBuilder::new()
            .field("check", Value::str(self.check.as_str()))
            .field("code", Value::str(&self.code))
            .field("detail", Value::str(&self.detail))
            .field(
                "evidence",
                Value::list(self.evidence.iter().map(|i| Value::uint(*i))),
            )
            .field("severity", Value::str(self.severity.as_str()))
            .build()
    }
}

impl FromValue for Finding {
    fn from_value(value: &Value) -> Result<Self, CanonicalError> {
        let mut r = MapReader::new(value)?;
        let check = CheckId::parse(r.str("check")?)?;
        let code = r.string("code")?;
        let detail = r.string("detail")?;
        let evidence = r
            .list("evidence")?
            .iter()
            .map(|v| v.as_u64())
            .collect::<Result<Vec<_>, _>>()?;
        let severity = Severity::parse(r.str("severity")?)?;
        r.finish()?;
        Ok(Finding {
            check,
            code,
            severity,
            evidence,
            detail,
        })
    }
}

/// A checker's result: findings plus the unit accounting used for scoring.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CheckOutcome {
    pub check: CheckId,
    pub units_total: u64,
    pub units_failed: u64,
    pub findings: Vec<Finding>,
}

impl CheckOutcome {
    fn new(check: CheckId) -> Self {
        CheckOutcome {
            check,
            units_total: 0,
            units_failed: 0,
            findings: Vec::new(),
        }
    }

    /// Account one unit that produced `findings` (possibly none).
    fn unit(&mut self, findings: Vec<Finding>) {
        self.units_total += 1;
        if findings.iter().any(|f| f.severity.fails_unit()) {
            self.units_failed += 1;
        }
        self.findings.extend(findings);
    }

    pub fn pass_ratio(&self) -> f64 {
        if self.units_total == 0 {
            1.0
        } else {
            (self.units_total - self.units_failed) as f64 / self.units_total as f64
        }
    }
}

/// Everything the checkers need besides the ledger itself.
#[derive(Debug, Clone)]
pub struct CheckContext {
    /// Audit time: retention, review, and grace windows are evaluated
    /// against this instant.
    pub now: i64,
    pub breach_report_window_hours: u64,
    pub propagation_grace_days: u64,
    pub guardian_fiduciaries: BTreeSet<PartyId>,
    /// Purpose ids a guardian data fiduciary must not ANALYZE under.
    pub prohibited_purposes: BTreeSet<String>,
    pub policy: CollectionPolicy,
    pub taxonomy: Taxonomy,
}

impl CheckContext {
    pub fn new(now: i64, taxonomy: Taxonomy) -> Self {
        CheckContext {
            now,
            breach_report_window_hours: 72,
            propagation_grace_days: 7,
            guardian_fiduciaries: BTreeSet::new(),
            prohibited_purposes: ["profiling", "advertising"]
                .into_iter()
                .map(str::to_string)
                .collect(),
            policy: CollectionPolicy::default_table(),
            taxonomy,
        }
    }
}

// ---------------------------------------------------------------------------
// Shared resolution helpers
// ---------------------------------------------------------------------------

/// Index of the first event superseding `digest`, if any.
fn superseded_by(ledger: &Ledger, digest: &Digest) -> Option<u64> {
    ledger
        .consent_events()
        .find(|(_, ev)| ev.supersedes.as_ref() == Some(digest))
        .map(|(index, _)| index)
}

/// The pair's governing consent event strictly before (`sequence`, `index`),
/// ordered by timestamp sequence with ledger index as tie-break.
fn consent_state_before<'a>(
    ledger: &'a Ledger,
    principal: &PartyId,
    fiduciary: &PartyId,
    sequence: u64,
    index: u64,
) -> Option<(u64, &'a ConsentEvent)> {
    ledger
        .consent_events()
        .filter(|(_, ev)| ev.principal() == principal && ev.fiduciary() == fiduciary)
        .filter(|(i, ev)| (ev.sequence(), *i) < (sequence, index))
        .max_by_key(|(i, ev)| (ev.sequence(), *i))
}

// ---------------------------------------------------------------------------
// Checkers
// ---------------------------------------------------------------------------

/// Purpose limitation: every processing event must reference a recorded
/// consent event whose form grants its purpose and covers its categories.
/// Units: processing events.
pub fn check_purpose_limitation(ledger: &Ledger, _ctx: &CheckContext) -> CheckOutcome {
    let mut outcome = CheckOutcome::new(CheckId::PurposeLimitation);
    for (index, event) in ledger.processing_events() {
        let mut findings = Vec::new();
        match ledger.consent_by_digest(&event.consent_ref) {
            None => findings.push(Finding::new(
                CheckId::PurposeLimitation,
                "DANGLING_CONSENT_REF",
                Severity::Fatal,
                vec![index],
                format!(
                    "processing \"{}\" references consent digest {} which is not in the ledger",
                    event.processing_id, event.consent_ref
                ),
            )),
            Some((ref_index, consent)) => {
                match consent.form() {
                    None => findings.push(Finding::new(
                        CheckId::PurposeLimitation,
                        "PURPOSE_NOT_CONSENTED",
                        Severity::Violation,
                        vec![index, ref_index],
                        format!(
                            "processing \"{}\" references a withdrawal, which grants no purposes",
                            event.processing_id
                        ),
                    )),
                    Some(form) => match form.purpose(&event.purpose_id) {
                        None => findings.push(Finding::new(
                            CheckId::PurposeLimitation,
                            "PURPOSE_NOT_CONSENTED",
                            Severity::Violation,
                            vec![index, ref_index],
                            format!(
                                "purpose \"{}\" is not granted by form \"{}\"",
                                event.purpose_id, form.form_id
                            ),
                        )),
                        Some(purpose) => {
                            let outside: Vec<&String> = event
                                .categories_touched
                                .difference(&purpose.data_categories)
                                .collect();
                            if !outside.is_empty() {
                                let names = outside
                                    .iter()
                                    .map(|s| s.as_str())
                                    .collect::<Vec<_>>()
                                    .join(",");
                                findings.push(Finding::new(
                                    CheckId::PurposeLimitation,
                                    "CATEGORY_OUTSIDE_PURPOSE",
                                    Severity::Violation,
                                    vec![index, ref_index],
                                    format!(
                                        "categories [{names}] are outside purpose \"{}\"",
                                        event.purpose_id
                                    ),
                                ));
                            }
                        }
                    },
                }
                if let Some(successor_index) = superseded_by(ledger, &event.consent_ref) {
                    findings.push(Finding::new(
                        CheckId::PurposeLimitation,
                        "STALE_CONSENT_REF",
                        Severity::Warn,
                        vec![index, ref_index, successor_index],
                        format!(
                            "processing \"{}\" references a consent event superseded at entry {successor_index}",
                            event.processing_id
                        ),
                    ));
                }
            }
        }
        outcome.unit(findings);
    }
    outcome
}

/// Withdrawal enforcement: no processing while the pair's consent state is
/// withdrawn, and every listed third party must acknowledge a withdrawal
/// within the grace window. Units: resolvable processing events plus one per
/// (withdrawal, listed third party) obligation.
pub fn check_withdrawal_enforcement(ledger: &Ledger, ctx: &CheckContext) -> CheckOutcome {
    let mut outcome = CheckOutcome::new(CheckId::WithdrawalEnforcement);
    for (index, event) in ledger.processing_events() {
        let Some((_, consent)) = ledger.consent_by_digest(&event.consent_ref) else {
            continue; // dangling refs are the purpose checker's FATAL
        };
        let mut findings = Vec::new();
        let state = consent_state_before(
            ledger,
            consent.principal(),
            consent.fiduciary(),
            event.sequence(),
            index,
        );
        if let Some((withdrawal_index, state_event)) = state {
            if state_event.kind == EventKind::Withdraw {
                findings.push(Finding::new(
                    CheckId::WithdrawalEnforcement,
                    "PROCESSING_AFTER_WITHDRAWAL",
                    Severity::Violation,
                    vec![index, withdrawal_index],
                    format!(
                        "processing \"{}\" at sequence {} follows the withdrawal at sequence {}",
                        event.processing_id,
                        event.sequence(),
                        state_event.sequence()
                    ),
                ));
            }
        }
        outcome.unit(findings);
    }

    let withdrawals: Vec<(u64, &ConsentEvent)> = ledger
        .consent_events()
        .filter(|(_, ev)| ev.kind == EventKind::Withdraw)
        .collect();
    for (withdrawal_index, withdrawal) in withdrawals {
        let digest = withdrawal.digest();
        let notice = withdrawal.notice().expect("withdrawals carry a notice");
        let parties: BTreeSet<&PartyId> = notice.third_parties.iter().collect();
        for party in parties {
            let acknowledged = ledger
                .propagations()
                .any(|(_, r)| r.withdrawal_digest == digest && r.third_party == *party);
            let mut findings = Vec::new();
            if !acknowledged {
                let deadline =
                    withdrawal.wall_time() + ctx.propagation_grace_days as i64 * SECONDS_PER_DAY;
                let severity = if ctx.now > deadline {
                    Severity::Violation
                } else {
                    Severity::Warn
                };
                findings.push(Finding::new(
                    CheckId::WithdrawalEnforcement,
                    "PROPAGATION_INCOMPLETE",
                    severity,
                    vec![withdrawal_index],
                    format!("third party \"{party}\" has not acknowledged the withdrawal"),
                ));
            }
            outcome.unit(findings);
        }
    }
    outcome
}

/// Storage limitation: expired fixed-retention consent needs erasure
/// receipts covering every consented category; stale review intervals get a
/// warning. Units: active consent chains.
pub fn check_retention(ledger: &Ledger, ctx: &CheckContext) -> CheckOutcome {
    use crate::consent::Retention;
    use crate::ledger::ConsentResolution;

    let mut outcome = CheckOutcome::new(CheckId::Retention);
    for (principal, fiduciary) in ledger.consent_pairs() {
        let resolution = match ledger.latest_consent(&principal, &fiduciary) {
            Ok(r) => r,
            Err(_) => continue, // forked pair: integrity phase owns this
        };
        let ConsentResolution::Active { entry_index, event } = resolution else {
            continue;
        };
        let form = event.form().expect("active resolution carries a form");

        // Walk back to the chain root for the establishment time.
        let mut root_index = entry_index;
        let mut root_time = event.wall_time();
        let mut cursor = event.clone();
        while let Some(parent_digest) = cursor.supersedes {
            match ledger.consent_by_digest(&parent_digest) {
                Some((i, parent)) => {
                    root_index = i;
                    root_time = parent.wall_time();
                    cursor = parent.clone();
                }
                None => break,
            }
        }

        let mut findings = Vec::new();
        match form.retention {
            Retention::FixedDays(days) => {
                let deadline = root_time + days as i64 * SECONDS_PER_DAY;
                if ctx.now > deadline {
                    let consented = form.consented_categories();
                    let erased: BTreeSet<String> = ledger
                        .erasure_receipts()
                        .filter(|(_, r)| r.principal == principal && r.fiduciary == fiduciary)
                        .flat_map(|(_, r)| r.categories_erased.iter().cloned())
                        .collect();
                    if !consented.is_subset(&erased) {
                        let missing = consented
                            .difference(&erased)
                            .map(|s| s.as_str())
                            .collect::<Vec<_>>()
                            .join(",");
                        findings.push(Finding::new(
                            CheckId::Retention,
                            "RETENTION_EXPIRED",
                            Severity::Violation,
                            vec![root_index, entry_index],
                            format!(
                                "retention of {days} days elapsed without erasure of [{missing}]"
                            ),
                        ));
                    }
                }
            }
            Retention::ReviewIntervalDays(days) => {
                let deadline = event.wall_time() + days as i64 * SECONDS_PER_DAY;
                if ctx.now > deadline {
                    findings.push(Finding::new(
                        CheckId::Retention,
                        "RETENTION_REVIEW_DUE",
                        Severity::Warn,
                        vec![entry_index],
                        format!("review interval of {days} days elapsed without re-affirmation"),
                    ));
                }
            }
        }
        outcome.unit(findings);
    }
    outcome
}

/// Sharing rules: disclosure only to listed parties, cross-border transfer
/// only when consented, nothing after a disclosure restriction. Units:
/// SHARE/DISCLOSE/TRANSFER events with a resolvable form.
pub fn check_sharing(ledger: &Ledger, _ctx: &CheckContext) -> CheckOutcome {
    let mut outcome = CheckOutcome::new(CheckId::Sharing);
    for (index, event) in ledger.processing_events() {
        let relevant =
            event.action.is_disclosure() || event.action == ProcessingAction::TransferCrossBorder;
        if !relevant {
            continue;
        }
        let Some((ref_index, consent)) = ledger.consent_by_digest(&event.consent_ref) else {
            continue;
        };
        let Some(form) = consent.form() else {
            continue;
        };
        let mut findings = Vec::new();
        if event.action.is_disclosure() {
            let allowed: BTreeSet<&PartyId> = std::iter::once(&form.fiduciary)
                .chain(form.third_parties.iter())
                .collect();
            let offender = if !allowed.contains(&event.actor) {
                Some(&event.actor)
            } else {
                event.counterparty.as_ref().filter(|c| !allowed.contains(c))
            };
            if let Some(party) = offender {
                findings.push(Finding::new(
                    CheckId::Sharing,
                    "UNLISTED_THIRD_PARTY",
                    Severity::Violation,
                    vec![index, ref_index],
                    format!("\"{party}\" is not listed on form \"{}\"", form.form_id),
                ));
            }
            let restriction = ledger.restrictions().find(|(marker_index, marker)| {
                *marker_index < index
                    && marker.principal == form.principal
                    && marker.fiduciary == form.fiduciary
            });
            if let Some((marker_index, _)) = restriction {
                findings.push(Finding::new(
                    CheckId::Sharing,
                    "DISCLOSURE_RESTRICTED",
                    Severity::Violation,
                    vec![index, marker_index],
                    "disclosure after an adjudicating-officer restriction".to_string(),
                ));
            }
        }
        if event.action == ProcessingAction::TransferCrossBorder && !form.cross_border.allowed {
            findings.push(Finding::new(
                CheckId::Sharing,
                "CROSS_BORDER_UNAUTHORIZED",
                Severity::Violation,
                vec![index, ref_index],
                format!(
                    "form \"{}\" does not consent to cross-border transfer",
                    form.form_id
                ),
            ));
        }
        outcome.unit(findings);
    }
    outcome
}

/// Breach timeliness: every breach must be reported to the authority within
/// the window, and high-risk breaches must notify the principal. Units:
/// breach records.
pub fn check_breach_timeliness(ledger: &Ledger, ctx: &CheckContext) -> CheckOutcome {
    let mut outcome = CheckOutcome::new(CheckId::BreachTimeliness);
    for (index, breach) in ledger.breach_records() {
        let mut findings = Vec::new();
        let window = ctx.breach_report_window_hours as i64 * SECONDS_PER_HOUR;
        match breach.reported_to_authority_at {
            None => findings.push(Finding::new(
                CheckId::BreachTimeliness,
                "BREACH_REPORT_MISSING",
                Severity::Violation,
                vec![index],
                format!(
                    "breach \"{}\" was never reported to the authority",
                    breach.breach_id
                ),
            )),
            Some(reported) if reported > breach.detected_at + window => {
                findings.push(Finding::new(
                    CheckId::BreachTimeliness,
                    "BREACH_REPORT_LATE",
                    Severity::Violation,
                    vec![index],
                    format!(
                        "breach \"{}\" reported {} hours after detection (window {} hours)",
                        breach.breach_id,
                        (reported - breach.detected_at) / SECONDS_PER_HOUR,
                        ctx.breach_report_window_hours
                    ),
                ));
            }
            Some(_) => {}
        }
        if breach.high_risk && breach.principal_notified_at.is_none() {
            findings.push(Finding::new(
                CheckId::BreachTimeliness,
                "PRINCIPAL_NOT_NOTIFIED",
                Severity::Violation,
                vec![index],
                format!(
                    "high-risk breach \"{}\" never notified the data principal",
                    breach.breach_id
                ),
            ));
        }
        outcome.unit(findings);
    }
    outcome
}

/// Children protection: a configured guardian data fiduciary must not run
/// ANALYZE activity under prohibited purposes (profiling, advertising, and
/// whatever else the configuration names). Units: processing events by
/// configured guardian fiduciaries.
pub fn check_guardian_prohibition(ledger: &Ledger, ctx: &CheckContext) -> CheckOutcome {
    let mut outcome = CheckOutcome::new(CheckId::GuardianProhibition);
    for (index, event) in ledger.processing_events() {
        if !ctx.guardian_fiduciaries.contains(&event.actor) {
            continue;
        }
        let mut findings = Vec::new();
        if event.action == ProcessingAction::Analyze
            && ctx.prohibited_purposes.contains(&event.purpose_id)
        {
            findings.push(Finding::new(
                CheckId::GuardianProhibition,
                "GUARDIAN_FIDUCIARY_PROHIBITION",
                Severity::Violation,
                vec![index],
                format!(
                    "guardian data fiduciary \"{}\" ran {} under prohibited purpose \"{}\"",
                    event.actor,
                    event.action.as_str(),
                    event.purpose_id
                ),
            ));
        }
        outcome.unit(findings);
    }
    outcome
}

/// Collection limitation over recorded consent: every purpose in every
/// consent form is linted as a collection plan against the purpose policy.
/// Units: (consent event, purpose) pairs.
pub fn check_collection_minimization(ledger: &Ledger, ctx: &CheckContext) -> CheckOutcome {
    let mut outcome = CheckOutcome::new(CheckId::CollectionMinimization);
    for (index, event) in ledger.consent_events() {
        let Some(form) = event.form() else {
            continue;
        };
        for purpose in &form.purposes {
            let mut findings = Vec::new();
            let max = ctx.policy.max_for(&purpose.purpose_id);
            for category in &purpose.data_categories {
                match classify(category, &ctx.taxonomy) {
                    Err(_) => findings.push(Finding::new(
                        CheckId::CollectionMinimization,
                        "UNKNOWN_CATEGORY",
                        Severity::Violation,
                        vec![index],
                        format!(
                            "category \"{category}\" in purpose \"{}\" is not in the audit taxonomy",
                            purpose.purpose_id
                        ),
                    )),
                    Ok(class) if class > max => findings.push(Finding::new(
                        CheckId::CollectionMinimization,
                        "OVER_COLLECTION",
                        Severity::Violation,
                        vec![index],
                        format!(
                            "category \"{category}\" ({class}) exceeds the {max} bound of purpose \"{}\"",
                            purpose.purpose_id
                        ),
                    )),
                    Ok(_) => {}
                }
            }
            outcome.unit(findings);
        }
    }
    outcome
}

// ---------------------------------------------------------------------------
// User rights
// ---------------------------------------------------------------------------

/// Current consent state inside an access summary.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AccessState {
    None,
    Active {
        entry_index: u64,
        form_id: String,
        purposes: Vec<String>,
    },
    Withdrawn {
        entry_index: u64,
        sequence: u64,
        wall_time: i64,
    },
}

/// The metadata summary a principal may obtain: never payload values, only
/// identifiers, counts, and digest-level references.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AccessSummary {
    pub principal: PartyId,
    pub fiduciary: PartyId,
    pub state: AccessState,
    pub categories_ever_touched: BTreeSet<String>,
    pub processing_counts_per_purpose: BTreeMap<String, u64>,
    pub third_parties_shared_with: BTreeSet<PartyId>,
    pub correction_count: u64,
}

impl Canonical for AccessSummary {
    fn to_value(&self) -> Value {
        let state = match &self.state {
            AccessState::None => MapBuilder::new()
                .field("status", Value::str("none"))
                .build(),
            AccessState::Active {
                entry_index,
                form_id,
                purposes,
            } => MapBuilder::new()
                .field("entry_index", Value::uint(*entry_index))
                .field("form_id", Value::str(form_id))
                .field("purposes", Value::list(purposes.iter().map(Value::str)))
                .field("status", Value::str("active"))
                .build(),
            AccessState::Withdrawn {
                entry_index,
                sequence,
                wall_time,
            } => MapBuilder::new()
                .field("entry_index", Value::uint(*entry_index))
                .field("sequence", Value::uint(*sequence))
                .field("status", Value::str("withdrawn"))
                .field("wall_time", Value::int(*wall_time))
                .build(),
        };
        let mut counts = MapBuilder::new();
        for (purpose, count) in &self.processing_counts_per_purpose {
            counts = counts.field(purpose, Value::uint(*count));
        }
        MapBuilder::new()
            .field(
                "categories_ever_touched",
                Value::list(self.categories_ever_touched.iter().map(Value::str)),
            )
            .field("consent", state)
            .field("correction_count", Value::uint(self.correction_count))
            .field("fiduciary", Value::str(self.fiduciary.as_str()))
            .field("principal", Value::str(self.principal.as_str()))
            .field("processing_counts", counts.build())
            .field(
                "third_parties_shared_with",
                Value::list(
                    self.third_parties_shared_with
                        .iter()
                        .map(|p| Value::str(p.as_str())),
                ),
            )
            .build()
    }
}

/// Assemble the right-to-access summary for a pair.
pub fn right_to_access(
    ledger: &Ledger,
    principal: &PartyId,
    fiduciary: &PartyId,
) -> Result<AccessSummary, LedgerError> {
    use crate::ledger::ConsentResolution;

    let state = match ledger.latest_consent(principal, fiduciary)? {
        ConsentResolution::None => AccessState::None,
        ConsentResolution::Active { entry_index, event } => {
            let form = event.form().expect("active resolution carries a form");
            AccessState::Active {
                entry_index,
                form_id: form.form_id.clone(),
                purposes: form.purposes.iter().map(|p| p.purpose_id.clone()).collect(),
            }
        }
        ConsentResolution::Withdrawn { entry_index, at } => AccessState::Withdrawn {
            entry_index,
            sequence: at.sequence,
            wall_time: at.wall_time,
        },
    };

    let mut categories = BTreeSet::new();
    let mut counts: BTreeMap<String, u64> = BTreeMap::new();
    let mut shared_with = BTreeSet::new();
    for (_, event) in ledger.processing_events() {
        let Some((_, consent)) = ledger.consent_by_digest(&event.consent_ref) else {
            continue;
        };
        if consent.principal() != principal || consent.fiduciary() != fiduciary {
            continue;
        }
        categories.extend(event.categories_touched.iter().cloned());
        *counts.entry(event.purpose_id.clone()).or_insert(0) += 1;
        if event.action.is_disclosure() {
            if let Some(counterparty) = &event.counterparty {
                shared_with.insert(counterparty.clone());
            }
            if event.actor != *fiduciary {
                shared_with.insert(event.actor.clone());
            }
        }
    }
    let correction_count = ledger
        .corrections()
        .filter(|(_, c)| c.principal == *principal && c.fiduciary == *fiduciary)
        .count() as u64;

    Ok(AccessSummary {
        principal: principal.clone(),
        fiduciary: fiduciary.clone(),
        state,
        categories_ever_touched: categories,
        processing_counts_per_purpose: counts,
        third_parties_shared_with: shared_with,
        correction_count,
    })
}

/// Append a disclosure-restriction marker for the pair. Requires the
/// adjudicating-officer order reference; later SHARE/DISCLOSE activity for
/// the pair turns into sharing violations.
#[allow(clippy::too_many_arguments)]
pub fn restrict_disclosure(
    ledger: &mut Ledger,
    principal: PartyId,
    fiduciary: &Signer<'_>,
    order_ref: Option<Digest>,
    tsa: &mut TimestampAuthority,
    clock: &dyn crate::clock::Clock,
    directory: &PartyDirectory,
) -> Result<u64, ComplianceError> {
    let marker = record_restriction(principal, fiduciary, order_ref, tsa, clock)?;
    let entry = ledger.append(Payload::Restriction(marker), directory)?;
    Ok(entry.index)
}
