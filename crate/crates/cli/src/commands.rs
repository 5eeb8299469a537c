//! Subcommand implementations. Every command returns an [`Outcome`] with
//! the text to print and the process exit code; errors carry the exit-code
//! category (1 domain violation, 2 usage, 3 integrity failure).

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use concord_core::audit::{
    impact_assessment, issue_certificate, run_audit, verify_certificate, AuditReport, Certificate,
    Grade,
};
use concord_core::canonical::Canonical;
use concord_core::compliance::{
    check_breach_timeliness, check_collection_minimization, check_guardian_prohibition,
    check_purpose_limitation, check_retention, check_sharing, check_withdrawal_enforcement,
    restrict_disclosure, right_to_access, CheckContext, CheckId, Finding, Severity,
};
use concord_core::consent::{
    establish, modify, record_propagation, validate_form, withdraw, ConsentError, ConsentEvent,
    ConsentForm, Retention,
};
use concord_core::crypto::{Digest, PartyId, Role};
use concord_core::ledger::{
    verify_inclusion, ChainVerdict, ConsentResolution, InclusionProof, Ledger, LedgerError, Payload,
};
use concord_core::minimization::{
    classify, lint_plan, minimization_report, CollectionPlan, DataClass,
};
use concord_core::records::{
    record_breach, record_correction, record_erasure, record_processing, BreachDetails,
    ProcessingAction, RecordError,
};

use crate::config::ToolConfig;
use crate::context;
use crate::{AuditCmd, ComplyCmd, ConsentCmd, LedgerCmd, MinimizeCmd, RecordCmd};

pub struct Outcome {
    pub text: String,
    pub code: i32,
}

impl Outcome {
    pub fn ok(text: impl Into<String>) -> Self {
        Outcome {
            text: text.into(),
            code: 0,
        }
    }

    fn with_code(text: impl Into<String>, code: i32) -> Self {
        Outcome {
            text: text.into(),
            code,
        }
    }
}

#[derive(Debug)]
pub enum CliError {
    /// Exit 1: the request is understood but violates a domain rule.
    Domain(String),
    /// Exit 2: the request itself is unusable.
    Usage(String),
    /// Exit 3: stored evidence fails verification.
    Integrity(String),
}

impl CliError {
    pub fn code(&self) -> i32 {
        match self {
            CliError::Domain(_) => 1,
            CliError::Usage(_) => 2,
            CliError::Integrity(_) => 3,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Domain(m) | CliError::Usage(m) | CliError::Integrity(m) => m,
        }
    }

    pub fn category(&self) -> &'static str {
        match self {
            CliError::Domain(_) => "domain",
            CliError::Usage(_) => "usage",
            CliError::Integrity(_) => "integrity",
        }
    }
}

pub type CliResult = Result<Outcome, CliError>;

fn usage(err: impl std::fmt::Display) -> CliError {
    CliError::Usage(err.to_string())
}

fn domain(err: impl std::fmt::Display) -> CliError {
    CliError::Domain(err.to_string())
}

fn integrity(err: impl std::fmt::Display) -> CliError {
    CliError::Integrity(err.to_string())
}

fn ledger_error(err: LedgerError) -> CliError {
    match err {
        LedgerError::HeadMismatch(_)
        | LedgerError::ChainInvalid { .. }
        | LedgerError::Line { .. }
        | LedgerError::Canonical(_) => integrity(err),
        LedgerError::PayloadRejected(_) | LedgerError::ForkedConsent { .. } => domain(err),
        LedgerError::OutOfRange { .. } | LedgerError::Empty => usage(err),
        LedgerError::Io { .. } => usage(err),
    }
}

fn consent_error(err: ConsentError) -> CliError {
    domain(err)
}

fn record_error(err: RecordError) -> CliError {
    domain(err)
}

// ---------------------------------------------------------------------------
// Shared plumbing
// ---------------------------------------------------------------------------

struct LedgerSession {
    ledger: Ledger,
    directory: concord_core::crypto::PartyDirectory,
}

fn open_session(config: &ToolConfig) -> Result<LedgerSession, CliError> {
    let directory = context::load_directory(config).map_err(usage)?;
    let ledger = context::load_ledger(config).map_err(ledger_error)?;
    Ok(LedgerSession { ledger, directory })
}

/// Append a payload and persist the new entry.
fn append_and_persist(
    config: &ToolConfig,
    session: &mut LedgerSession,
    payload: Payload,
) -> Result<u64, CliError> {
    let entry = session
        .ledger
        .append(payload, &session.directory)
        .map_err(ledger_error)?
        .clone();
    session
        .ledger
        .append_to_file(&config.ledger_path, &entry)
        .map_err(ledger_error)?;
    Ok(entry.index)
}

fn parse_digest(hex: &str) -> Result<Digest, CliError> {
    let hex = hex.strip_prefix("0x").unwrap_or(hex);
    Digest::from_hex(hex).map_err(|e| usage(format!("invalid digest: {e}")))
}

fn parse_categories(spec: &str) -> BTreeSet<String> {
    spec.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::to_string)
        .collect()
}

fn resolve_consent(session: &LedgerSession, digest: &Digest) -> Result<ConsentEvent, CliError> {
    session
        .ledger
        .consent_by_digest(digest)
        .map(|(_, ev)| ev.clone())
        .ok_or_else(|| domain(format!("consent event {digest} is not in the ledger")))
}

fn verified_chain(session: &LedgerSession) -> Result<(), CliError> {
    match session.ledger.verify(&session.directory) {
        ChainVerdict::Ok => Ok(()),
        ChainVerdict::Bad {
            first_bad_index,
            reason,
        } => Err(integrity(format!(
            "chain verification failed at index {first_bad_index}: {reason}"
        ))),
    }
}

// ---------------------------------------------------------------------------
// keygen
// ---------------------------------------------------------------------------

pub fn keygen(config: &ToolConfig, id: &str, role: &str, seed: Option<&str>) -> CliResult {
    let role = Role::parse(&role.to_uppercase()).map_err(usage)?;
    let seed = match seed {
        Some(hex) => {
            let bytes = concord_core::hex::decode(hex).map_err(usage)?;
            let seed: [u8; 32] = bytes
                .try_into()
                .map_err(|_| usage("seed must be 32 bytes of hex"))?;
            Some(seed)
        }
        None => None,
    };
    let identity = context::create_party(config, id, role, seed).map_err(domain)?;
    Ok(Outcome::ok(format!(
        "created {} role {} fingerprint {}\n",
        id,
        role,
        identity.fingerprint()
    )))
}

// ---------------------------------------------------------------------------
// consent
// ---------------------------------------------------------------------------

#[allow(clippy::too_many_arguments)]
fn consent_draft(
    form_id: &str,
    principal: &str,
    fiduciary: &str,
    purposes: &[String],
    third_parties: Option<&str>,
    retention_days: Option<u32>,
    review_interval_days: Option<u32>,
    cross_border: Option<&str>,
    affirmation: Option<&str>,
    child_guardian: Option<&str>,
    age_attestation: Option<&str>,
    out: &Path,
) -> CliResult {
    use concord_core::consent::{ChildConsent, CrossBorder, ExplicitAck, PurposeSpec};

    let mut parsed_purposes = Vec::new();
    let mut acknowledged = std::collections::BTreeMap::new();
    for spec in purposes {
        let parts: Vec<&str> = spec.split('|').collect();
        if parts.len() < 3 || parts.len() > 4 {
            return Err(usage(format!(
                "purpose \"{spec}\" must look like \"id|description|cat1,cat2[|ack]\""
            )));
        }
        let requires_explicit_ack = parts.len() == 4 && parts[3] == "ack";
        if requires_explicit_ack {
            acknowledged.insert(parts[0].to_string(), true);
        }
        parsed_purposes.push(PurposeSpec {
            purpose_id: parts[0].to_string(),
            description: parts[1].to_string(),
            data_categories: parse_categories(parts[2]),
            requires_explicit_ack,
        });
    }
    let retention = match (retention_days, review_interval_days) {
        (Some(days), None) => Retention::FixedDays(days),
        (None, Some(days)) => Retention::ReviewIntervalDays(days),
        (None, None) => {
            return Err(usage(
                "one of --retention-days or --review-interval-days is required",
            ))
        }
        (Some(_), Some(_)) => unreachable!("clap conflicts_with forbids both"),
    };
    let explicit_ack = if acknowledged.is_empty() && affirmation.is_none() {
        None
    } else {
        Some(ExplicitAck {
            affirmation: affirmation
                .unwrap_or("sensitive data acknowledged")
                .to_string(),
            acknowledged,
        })
    };
    let child = child_guardian.map(|guardian| ChildConsent {
        guardian: PartyId::new(guardian),
        age_attestation: age_attestation
            .unwrap_or("subject age >= 18 is false, guardian consents")
            .to_string(),
    });
    let form = ConsentForm {
        form_id: form_id.to_string(),
        principal: PartyId::new(principal),
        fiduciary: PartyId::new(fiduciary),
        purposes: parsed_purposes,
        third_parties: third_parties
            .map(|s| parse_categories(s).into_iter().map(PartyId::new).collect())
            .unwrap_or_default(),
        retention,
        cross_border: match cross_border {
            Some(dest) => concord_core::consent::CrossBorder::to(dest),
            None => CrossBorder::forbidden(),
        },
        explicit_ack,
        child,
    };
    context::write_canonical(out, &form).map_err(usage)?;
    Ok(Outcome::ok(format!(
        "drafted {} to {}\n",
        form.form_id,
        out.display()
    )))
}

pub fn consent(config: &ToolConfig, cmd: &ConsentCmd) -> CliResult {
    match cmd {
        ConsentCmd::Draft {
            form_id,
            principal,
            fiduciary,
            purpose,
            third_parties,
            retention_days,
            review_interval_days,
            cross_border,
            affirmation,
            child_guardian,
            age_attestation,
            out,
        } => consent_draft(
            form_id,
            principal,
            fiduciary,
            purpose,
            third_parties.as_deref(),
            *retention_days,
            *review_interval_days,
            cross_border.as_deref(),
            affirmation.as_deref(),
            child_guardian.as_deref(),
            age_attestation.as_deref(),
            out,
        ),
        ConsentCmd::Validate { form } => consent_validate(config, form),
        ConsentCmd::Establish {
            form,
            guardian,
            out,
        } => consent_establish(config, form, guardian.as_deref(), out.as_deref()),
        ConsentCmd::Modify {
            prior,
            form,
            guardian,
            out,
        } => consent_modify(config, prior, form, guardian.as_deref(), out.as_deref()),
        ConsentCmd::Withdraw { prior, out } => consent_withdraw(config, prior, out.as_deref()),
        ConsentCmd::Propagate {
            withdrawal,
            third_party,
        } => consent_propagate(config, withdrawal, third_party),
    }
}

fn consent_validate(config: &ToolConfig, form_path: &Path) -> CliResult {
    let taxonomy = context::load_taxonomy(config).map_err(usage)?;
    let form: ConsentForm = context::read_canonical(form_path).map_err(usage)?;
    let violations = validate_form(&form, &taxonomy);
    if violations.is_empty() {
        Ok(Outcome::ok(format!("form {} is valid\n", form.form_id)))
    } else {
        let mut text = String::new();
        for violation in &violations {
            let _ = writeln!(text, "violation\t{}\t{violation:?}", violation.code());
        }
        Ok(Outcome::with_code(text, 1))
    }
}

struct ConsentOpResult {
    event: ConsentEvent,
    entry_index: u64,
}

fn finish_consent_op(
    config: &ToolConfig,
    session: &mut LedgerSession,
    tsa: concord_core::tsa::TimestampAuthority,
    event: ConsentEvent,
    out: Option<&Path>,
) -> Result<ConsentOpResult, CliError> {
    let entry_index = append_and_persist(config, session, Payload::Consent(event.clone()))?;
    context::save_tsa_state(config, &tsa).map_err(usage)?;
    if let Some(path) = out {
        context::write_canonical(path, &event).map_err(usage)?;
    }
    Ok(ConsentOpResult { event, entry_index })
}

fn consent_establish(
    config: &ToolConfig,
    form_path: &Path,
    guardian: Option<&str>,
    out: Option<&Path>,
) -> CliResult {
    let taxonomy = context::load_taxonomy(config).map_err(usage)?;
    let form: ConsentForm = context::read_canonical(form_path).map_err(usage)?;
    let mut session = open_session(config)?;
    let principal = context::load_party(config, form.principal.as_str()).map_err(usage)?;
    let fiduciary = context::load_party(config, form.fiduciary.as_str()).map_err(usage)?;
    let guardian = match guardian {
        Some(name) => Some(context::load_party(config, name).map_err(usage)?),
        None => None,
    };
    let guardian_signer = guardian.as_ref().map(|g| g.signer());
    let mut tsa = context::load_tsa(config).map_err(usage)?;
    let clock = config.clock();
    let event = establish(
        form,
        &taxonomy,
        &principal.signer(),
        &fiduciary.signer(),
        guardian_signer.as_ref(),
        &mut tsa,
        clock.as_ref(),
    )
    .map_err(consent_error)?;
    let done = finish_consent_op(config, &mut session, tsa, event, out)?;
    Ok(Outcome::ok(format!(
        "established {} digest {} entry {}\n",
        done.event.form_id(),
        done.event.digest(),
        done.entry_index
    )))
}

fn consent_modify(
    config: &ToolConfig,
    prior_hex: &str,
    form_path: &Path,
    guardian: Option<&str>,
    out: Option<&Path>,
) -> CliResult {
    let taxonomy = context::load_taxonomy(config).map_err(usage)?;
    let form: ConsentForm = context::read_canonical(form_path).map_err(usage)?;
    let mut session = open_session(config)?;
    let prior = resolve_consent(&session, &parse_digest(prior_hex)?)?;
    let principal = context::load_party(config, form.principal.as_str()).map_err(usage)?;
    let fiduciary = context::load_party(config, form.fiduciary.as_str()).map_err(usage)?;
    let guardian = match guardian {
        Some(name) => Some(context::load_party(config, name).map_err(usage)?),
        None => None,
    };
    let guardian_signer = guardian.as_ref().map(|g| g.signer());
    let mut tsa = context::load_tsa(config).map_err(usage)?;
    let clock = config.clock();
    let event = modify(
        &prior,
        form,
        &taxonomy,
        &principal.signer(),
        &fiduciary.signer(),
        guardian_signer.as_ref(),
        &mut tsa,
        clock.as_ref(),
    )
    .map_err(consent_error)?;
    let done = finish_consent_op(config, &mut session, tsa, event, out)?;
    Ok(Outcome::ok(format!(
        "modified {} digest {} entry {} supersedes {}\n",
        done.event.form_id(),
        done.event.digest(),
        done.entry_index,
        prior_hex
    )))
}

fn consent_withdraw(config: &ToolConfig, prior_hex: &str, out: Option<&Path>) -> CliResult {
    let mut session = open_session(config)?;
    let prior = resolve_consent(&session, &parse_digest(prior_hex)?)?;
    let principal = context::load_party(config, prior.principal().as_str()).map_err(usage)?;
    let fiduciary = context::load_party(config, prior.fiduciary().as_str()).map_err(usage)?;
    let mut tsa = context::load_tsa(config).map_err(usage)?;
    let clock = config.clock();
    let event = withdraw(
        &prior,
        &principal.signer(),
        &fiduciary.signer(),
        &mut tsa,
        clock.as_ref(),
    )
    .map_err(consent_error)?;
    let done = finish_consent_op(config, &mut session, tsa, event, out)?;
    Ok(Outcome::ok(format!(
        "withdrawn {} digest {} entry {}\n",
        done.event.form_id(),
        done.event.digest(),
        done.entry_index
    )))
}

fn consent_propagate(config: &ToolConfig, withdrawal_hex: &str, third_party: &str) -> CliResult {
    let mut session = open_session(config)?;
    let withdrawal = resolve_consent(&session, &parse_digest(withdrawal_hex)?)?;
    let party = context::load_party(config, third_party).map_err(usage)?;
    let mut tsa = context::load_tsa(config).map_err(usage)?;
    let clock = config.clock();
    let receipt = record_propagation(&withdrawal, &party.signer(), &mut tsa, clock.as_ref())
        .map_err(consent_error)?;
    let entry = append_and_persist(config, &mut session, Payload::Propagation(receipt))?;
    context::save_tsa_state(config, &tsa).map_err(usage)?;
    Ok(Outcome::ok(format!(
        "propagation acknowledged by {third_party} entry {entry}\n"
    )))
}

// ---------------------------------------------------------------------------
// record
// ---------------------------------------------------------------------------

pub fn record(config: &ToolConfig, cmd: &RecordCmd) -> CliResult {
    match cmd {
        RecordCmd::Process {
            actor,
            consent,
            purpose,
            categories,
            action,
            counterparty,
            id,
        } => {
            let mut session = open_session(config)?;
            let actor_party = context::load_party(config, actor).map_err(usage)?;
            let action = ProcessingAction::parse(&action.to_uppercase()).map_err(usage)?;
            let mut tsa = context::load_tsa(config).map_err(usage)?;
            let clock = config.clock();
            let processing_id = id
                .clone()
                .unwrap_or_else(|| format!("p-{}", tsa.last_sequence() + 1));
            let event = record_processing(
                processing_id.clone(),
                &actor_party.signer(),
                counterparty.as_deref().map(PartyId::new),
                parse_digest(consent)?,
                purpose.clone(),
                parse_categories(categories),
                action,
                &mut tsa,
                clock.as_ref(),
            )
            .map_err(record_error)?;
            let entry = append_and_persist(config, &mut session, Payload::Processing(event))?;
            context::save_tsa_state(config, &tsa).map_err(usage)?;
            Ok(Outcome::ok(format!(
                "recorded processing {processing_id} entry {entry}\n"
            )))
        }
        RecordCmd::Erasure {
            principal,
            fiduciary,
            categories,
            note,
        } => {
            let mut session = open_session(config)?;
            let fiduciary_party = context::load_party(config, fiduciary).map_err(usage)?;
            let mut tsa = context::load_tsa(config).map_err(usage)?;
            let clock = config.clock();
            let receipt = record_erasure(
                PartyId::new(principal.as_str()),
                &fiduciary_party.signer(),
                parse_categories(categories),
                note.clone().unwrap_or_else(|| "erased".to_string()),
                &mut tsa,
                clock.as_ref(),
            )
            .map_err(record_error)?;
            let entry = append_and_persist(config, &mut session, Payload::Erasure(receipt))?;
            context::save_tsa_state(config, &tsa).map_err(usage)?;
            Ok(Outcome::ok(format!("recorded erasure entry {entry}\n")))
        }
        RecordCmd::Breach {
            fiduciary,
            id,
            description,
            categories,
            detected_at,
            reported_at,
            high_risk,
            principal_notified_at,
        } => {
            let mut session = open_session(config)?;
            let fiduciary_party = context::load_party(config, fiduciary).map_err(usage)?;
            let breach = record_breach(
                BreachDetails {
                    breach_id: id.clone(),
                    description: description.clone(),
                    categories_affected: parse_categories(categories),
                    detected_at: *detected_at,
                    reported_to_authority_at: *reported_at,
                    high_risk: *high_risk,
                    principal_notified_at: *principal_notified_at,
                },
                &fiduciary_party.signer(),
            )
            .map_err(record_error)?;
            let entry = append_and_persist(config, &mut session, Payload::Breach(breach))?;
            Ok(Outcome::ok(format!("recorded breach {id} entry {entry}\n")))
        }
        RecordCmd::Correction {
            principal,
            fiduciary,
            field,
            old_digest,
            new_digest,
        } => {
            let mut session = open_session(config)?;
            let principal_party = context::load_party(config, principal).map_err(usage)?;
            let fiduciary_party = context::load_party(config, fiduciary).map_err(usage)?;
            let mut tsa = context::load_tsa(config).map_err(usage)?;
            let clock = config.clock();
            let event = record_correction(
                &principal_party.signer(),
                &fiduciary_party.signer(),
                field.clone(),
                parse_digest(old_digest)?,
                parse_digest(new_digest)?,
                &mut tsa,
                clock.as_ref(),
            )
            .map_err(record_error)?;
            let entry = append_and_persist(config, &mut session, Payload::Correction(event))?;
            context::save_tsa_state(config, &tsa).map_err(usage)?;
            Ok(Outcome::ok(format!("recorded correction entry {entry}\n")))
        }
    }
}

// ---------------------------------------------------------------------------
// ledger
// ---------------------------------------------------------------------------

pub fn ledger(config: &ToolConfig, cmd: &LedgerCmd) -> CliResult {
    match cmd {
        LedgerCmd::Append { kind, payload } => {
            let mut session = open_session(config)?;
            let kind =
                concord_core::ledger::PayloadKind::parse(&kind.to_uppercase()).map_err(usage)?;
            let bytes = std::fs::read(payload).map_err(usage)?;
            let trimmed = bytes.strip_suffix(b"\n").unwrap_or(&bytes);
            let value = concord_core::canonical::Value::parse(trimmed).map_err(usage)?;
            let payload = Payload::from_value(kind, &value).map_err(usage)?;
            let entry = append_and_persist(config, &mut session, payload)?;
            Ok(Outcome::ok(format!("appended {kind} entry {entry}\n")))
        }
        LedgerCmd::Verify { from, to } => {
            let session = open_session(config)?;
            if session.ledger.is_empty() {
                return Ok(Outcome::ok("ok: ledger is empty\n"));
            }
            let from = from.unwrap_or(0);
            let to = to.unwrap_or(session.ledger.len() - 1);
            let verdict = session
                .ledger
                .verify_range(from, to, &session.directory)
                .map_err(ledger_error)?;
            match verdict {
                ChainVerdict::Ok => {
                    let head = session.ledger.head().expect("non-empty");
                    Ok(Outcome::ok(format!(
                        "ok: {} entries, head {} {}\n",
                        session.ledger.len(),
                        head.index,
                        head.entry_hash
                    )))
                }
                ChainVerdict::Bad {
                    first_bad_index,
                    reason,
                } => Err(integrity(format!(
                    "first_bad_index {first_bad_index}: {reason}"
                ))),
            }
        }
        LedgerCmd::Latest {
            principal,
            fiduciary,
        } => {
            let session = open_session(config)?;
            let resolution = session
                .ledger
                .latest_consent(
                    &PartyId::new(principal.as_str()),
                    &PartyId::new(fiduciary.as_str()),
                )
                .map_err(ledger_error)?;
            match resolution {
                ConsentResolution::None => Ok(Outcome::ok("none\n")),
                ConsentResolution::Active { entry_index, event } => Ok(Outcome::ok(format!(
                    "active entry {entry_index} form {} digest {}\n",
                    event.form_id(),
                    event.digest()
                ))),
                ConsentResolution::Withdrawn { entry_index, at } => Ok(Outcome::ok(format!(
                    "withdrawn entry {entry_index} sequence {} wall_time {}\n",
                    at.sequence, at.wall_time
                ))),
            }
        }
        LedgerCmd::Prove { index, out } => {
            let session = open_session(config)?;
            let proof = session
                .ledger
                .inclusion_proof(*index)
                .map_err(ledger_error)?;
            let head = session.ledger.head().expect("proof implies entries");
            if let Some(path) = out {
                context::write_canonical(path, &proof).map_err(usage)?;
            }
            let mut text = format!(
                "proof entry {} head {} hash {}\n",
                index, proof.head_index, head.entry_hash
            );
            if out.is_none() {
                text.push_str(&String::from_utf8_lossy(&proof.canonical_bytes()));
                text.push('\n');
            }
            Ok(Outcome::ok(text))
        }
        LedgerCmd::VerifyProof { proof, head_hash } => {
            let proof: InclusionProof = context::read_canonical(proof).map_err(usage)?;
            let head = parse_digest(head_hash)?;
            if verify_inclusion(&head, &proof) {
                Ok(Outcome::ok("ok: proof verifies under the given head\n"))
            } else {
                Err(integrity("inclusion proof does not verify".to_string()))
            }
        }
        LedgerCmd::Anchor {
            fiduciary,
            countersigner,
        } => {
            let mut session = open_session(config)?;
            let fiduciary_party = context::load_party(config, fiduciary).map_err(usage)?;
            let countersigner_party = match countersigner {
                Some(name) => Some(context::load_party(config, name).map_err(usage)?),
                None => None,
            };
            let countersigner_signer = countersigner_party.as_ref().map(|p| p.signer());
            let record = session
                .ledger
                .anchor(
                    &fiduciary_party.signer(),
                    countersigner_signer.as_ref(),
                    &session.directory,
                )
                .map_err(ledger_error)?;
            let entry = session.ledger.head().expect("anchor appended").clone();
            session
                .ledger
                .append_to_file(&config.ledger_path, &entry)
                .map_err(ledger_error)?;
            Ok(Outcome::ok(format!(
                "anchored head {} hash {} entry {}\n",
                record.head_index, record.head_hash, entry.index
            )))
        }
    }
}

// ---------------------------------------------------------------------------
// comply
// ---------------------------------------------------------------------------

fn build_context(config: &ToolConfig, as_of: Option<i64>) -> Result<CheckContext, CliError> {
    let taxonomy = context::load_taxonomy(config).map_err(usage)?;
    let audit_config = context::load_audit_config(config, None).map_err(usage)?;
    let now = as_of.unwrap_or_else(|| config.clock().now_unix());
    let mut ctx = CheckContext::new(now, taxonomy);
    ctx.breach_report_window_hours = audit_config.breach_report_window_hours;
    ctx.propagation_grace_days = audit_config.propagation_grace_days;
    ctx.guardian_fiduciaries = audit_config.guardian_fiduciaries.clone();
    ctx.prohibited_purposes = audit_config.prohibited_purposes.clone();
    ctx.policy = audit_config.policy.clone();
    Ok(ctx)
}

fn parse_checks(spec: Option<&str>) -> Result<Vec<CheckId>, CliError> {
    match spec {
        None => Ok(CheckId::SCORED.to_vec()),
        Some(spec) => spec
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|name| {
                // Accept both full ids and the short names from the docs.
                let full = match name {
                    "purpose" => "purpose_limitation",
                    "withdrawal" => "withdrawal_enforcement",
                    "breach" => "breach_timeliness",
                    "guardian" => "guardian_prohibition",
                    "minimization" => "collection_minimization",
                    other => other,
                };
                CheckId::parse(full).map_err(usage)
            })
            .collect(),
    }
}

pub fn comply(config: &ToolConfig, cmd: &ComplyCmd) -> CliResult {
    match cmd {
        ComplyCmd::Check { checks, as_of } => {
            let session = open_session(config)?;
            verified_chain(&session)?;
            // Forked consent histories are integrity failures for checking.
            for (principal, fiduciary) in session.ledger.consent_pairs() {
                if let Err(e) = session.ledger.latest_consent(&principal, &fiduciary) {
                    return Err(integrity(e));
                }
            }
            let ctx = build_context(config, *as_of)?;
            let selected = parse_checks(checks.as_deref())?;
            let mut findings: Vec<Finding> = Vec::new();
            for check in selected {
                let outcome = match check {
                    CheckId::PurposeLimitation => check_purpose_limitation(&session.ledger, &ctx),
                    CheckId::WithdrawalEnforcement => {
                        check_withdrawal_enforcement(&session.ledger, &ctx)
                    }
                    CheckId::Retention => check_retention(&session.ledger, &ctx),
                    CheckId::Sharing => check_sharing(&session.ledger, &ctx),
                    CheckId::BreachTimeliness => check_breach_timeliness(&session.ledger, &ctx),
                    CheckId::GuardianProhibition => {
                        check_guardian_prohibition(&session.ledger, &ctx)
                    }
                    CheckId::CollectionMinimization => {
                        check_collection_minimization(&session.ledger, &ctx)
                    }
                    CheckId::ChainIntegrity => continue,
                };
                findings.extend(outcome.findings);
            }
            let mut text = String::new();
            for finding in &findings {
                let _ = writeln!(text, "{}", finding.line());
            }
            let worst = findings.iter().map(|f| f.severity).max();
            let code = match worst {
                Some(s) if s >= Severity::Violation => 1,
                _ => 0,
            };
            let _ = writeln!(text, "checked: {} findings", findings.len());
            Ok(Outcome::with_code(text, code))
        }
        ComplyCmd::Access {
            principal,
            fiduciary,
        } => {
            let session = open_session(config)?;
            verified_chain(&session)?;
            let summary = right_to_access(
                &session.ledger,
                &PartyId::new(principal.as_str()),
                &PartyId::new(fiduciary.as_str()),
            )
            .map_err(ledger_error)?;
            let mut text = String::from_utf8_lossy(&summary.canonical_bytes()).into_owned();
            text.push('\n');
            Ok(Outcome::ok(text))
        }
        ComplyCmd::Restrict {
            principal,
            fiduciary,
            order_ref,
        } => {
            let mut session = open_session(config)?;
            let fiduciary_party = context::load_party(config, fiduciary).map_err(usage)?;
            let mut tsa = context::load_tsa(config).map_err(usage)?;
            let clock = config.clock();
            let order = match order_ref {
                Some(hex) => Some(parse_digest(hex)?),
                None => None,
            };
            let index = restrict_disclosure(
                &mut session.ledger,
                PartyId::new(principal.as_str()),
                &fiduciary_party.signer(),
                order,
                &mut tsa,
                clock.as_ref(),
                &session.directory,
            )
            .map_err(domain)?;
            let entry = session.ledger.entry(index).map_err(ledger_error)?.clone();
            session
                .ledger
                .append_to_file(&config.ledger_path, &entry)
                .map_err(ledger_error)?;
            context::save_tsa_state(config, &tsa).map_err(usage)?;
            Ok(Outcome::ok(format!(
                "disclosure restricted entry {index}\n"
            )))
        }
    }
}

// ---------------------------------------------------------------------------
// minimize
// ---------------------------------------------------------------------------

/// Plan files are line oriented: `plan <purpose_id> <MAX_CLASS> [cat,cat,…]`.
pub fn parse_plan_file(path: &Path) -> Result<Vec<CollectionPlan>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| usage(format!("cannot read plan file {}: {e}", path.display())))?;
    let mut plans = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.split_whitespace();
        match parts.next() {
            Some("plan") => {
                let purpose_id = parts
                    .next()
                    .ok_or_else(|| usage(format!("plan line {}: missing purpose", idx + 1)))?
                    .to_string();
                let class_text = parts
                    .next()
                    .ok_or_else(|| usage(format!("plan line {}: missing max class", idx + 1)))?;
                let max_class_allowed = DataClass::parse(class_text).map_err(usage)?;
                let requested_categories = parts.next().map(parse_categories).unwrap_or_default();
                plans.push(CollectionPlan {
                    purpose_id,
                    requested_categories,
                    max_class_allowed,
                });
            }
            Some(other) => {
                return Err(usage(format!(
                    "plan line {}: unknown directive \"{other}\"",
                    idx + 1
                )))
            }
            None => unreachable!("blank lines skipped"),
        }
    }
    Ok(plans)
}

pub fn minimize(config: &ToolConfig, cmd: &MinimizeCmd) -> CliResult {
    let taxonomy = context::load_taxonomy(config).map_err(usage)?;
    match cmd {
        MinimizeCmd::Classify { category } => match classify(category, &taxonomy) {
            Ok(class) => Ok(Outcome::ok(format!("{category} {class}\n"))),
            Err(e) => Err(domain(e)),
        },
        MinimizeCmd::Lint { plan } => {
            let plans = parse_plan_file(plan)?;
            let mut text = String::new();
            let mut over = 0usize;
            for plan in &plans {
                let violations = lint_plan(plan, &taxonomy).map_err(domain)?;
                for v in violations {
                    over += 1;
                    let _ = writeln!(
                        text,
                        "OVER_COLLECTION\t{}\t{}\t{} > {}",
                        v.purpose_id, v.category_id, v.class, v.max_class_allowed
                    );
                }
            }
            let _ = writeln!(
                text,
                "linted {} plans: {} over-collection findings",
                plans.len(),
                over
            );
            Ok(Outcome::with_code(text, if over > 0 { 1 } else { 0 }))
        }
        MinimizeCmd::Report { plans } => {
            let mut all = Vec::new();
            for path in plans {
                all.extend(parse_plan_file(path)?);
            }
            let report = minimization_report(&all, &taxonomy).map_err(domain)?;
            let mut text = String::new();
            for (purpose, histogram) in &report.per_purpose {
                let counts = histogram
                    .iter()
                    .map(|(class, count)| format!("{class}={count}"))
                    .collect::<Vec<_>>()
                    .join(" ");
                let _ = writeln!(text, "purpose {purpose}: {counts}");
            }
            let _ = writeln!(
                text,
                "over_collection_count {} verdict {}",
                report.over_collection_count,
                if report.pass { "pass" } else { "fail" }
            );
            Ok(Outcome::with_code(text, if report.pass { 0 } else { 1 }))
        }
    }
}

// ---------------------------------------------------------------------------
// audit
// ---------------------------------------------------------------------------

fn report_summary(report: &AuditReport) -> String {
    let mut text = format!(
        "{} score {:.9} grade {} findings {}\n",
        report.kind.as_str(),
        report.score(),
        report.grade,
        report.findings.len()
    );
    for finding in &report.findings {
        text.push_str(&finding.line());
        text.push('\n');
    }
    text
}

pub fn audit(config: &ToolConfig, cmd: &AuditCmd) -> CliResult {
    match cmd {
        AuditCmd::Run {
            config: audit_config_path,
            out,
        } => {
            let session = open_session(config)?;
            let taxonomy = context::load_taxonomy(config).map_err(usage)?;
            let audit_config =
                context::load_audit_config(config, audit_config_path.as_deref()).map_err(usage)?;
            let clock = config.clock();
            let report = run_audit(
                &session.ledger,
                &session.directory,
                &audit_config,
                &taxonomy,
                clock.as_ref(),
            )
            .map_err(|e| match e {
                concord_core::audit::AuditError::InvalidConfig(_) => usage(e),
                other => domain(other),
            })?;
            if let Some(path) = out {
                context::write_canonical(path, &report).map_err(usage)?;
            }
            let text = report_summary(&report);
            let code = if report.has_fatal() {
                3
            } else if report.grade >= audit_config.min_certificate_grade {
                0
            } else {
                1
            };
            Ok(Outcome::with_code(text, code))
        }
        AuditCmd::Assess {
            plans,
            config: audit_config_path,
            out,
        } => {
            let taxonomy = context::load_taxonomy(config).map_err(usage)?;
            let audit_config =
                context::load_audit_config(config, audit_config_path.as_deref()).map_err(usage)?;
            let all = parse_plan_file(plans)?;
            let clock = config.clock();
            let report =
                impact_assessment(&all, &audit_config, &taxonomy, clock.as_ref()).map_err(usage)?;
            if let Some(path) = out {
                context::write_canonical(path, &report).map_err(usage)?;
            }
            let text = report_summary(&report);
            let code = if report.findings.is_empty() { 0 } else { 1 };
            Ok(Outcome::with_code(text, code))
        }
        AuditCmd::Certify {
            report,
            auditor,
            fiduciary,
            valid_from,
            valid_to,
            out,
        } => {
            let report: AuditReport = context::read_canonical(report).map_err(usage)?;
            let audit_config = context::load_audit_config(config, None).map_err(usage)?;
            let auditor_party = context::load_party(config, auditor).map_err(usage)?;
            let certificate = issue_certificate(
                &report,
                &auditor_party.signer(),
                PartyId::new(fiduciary.as_str()),
                *valid_from,
                *valid_to,
                audit_config.min_certificate_grade,
            )
            .map_err(domain)?;
            if let Some(path) = out {
                context::write_canonical(path, &certificate).map_err(usage)?;
            }
            Ok(Outcome::ok(format!(
                "certified report {} grade {} valid {}..{}\n",
                certificate.report_digest, report.grade, valid_from, valid_to
            )))
        }
        AuditCmd::VerifyCert {
            cert,
            report,
            auditor,
        } => {
            let certificate: Certificate = context::read_canonical(cert).map_err(usage)?;
            let report: AuditReport = context::read_canonical(report).map_err(usage)?;
            let identity =
                concord_core::crypto::load_identity(&context::identity_path(config, auditor))
                    .map_err(usage)?;
            if verify_certificate(&certificate, &report, &identity) {
                Ok(Outcome::ok("valid\n"))
            } else {
                Err(integrity(
                    "certificate does not verify against the report".to_string(),
                ))
            }
        }
    }
}

// ---------------------------------------------------------------------------
// transparency
// ---------------------------------------------------------------------------

/// Disclosure items the framework asks for that cannot be derived from the
/// ledger and must be declared through other channels.
const UNDERIVABLE_ITEMS: [&str; 5] = [
    "access_control_policy",
    "encryption_methods",
    "privacy_by_design_methods",
    "security_design",
    "storage_proofs",
];

pub fn transparency(
    config: &ToolConfig,
    report_path: Option<&Path>,
    cert_path: Option<&Path>,
) -> CliResult {
    use concord_core::canonical::{MapBuilder, Value};

    let session = open_session(config)?;
    verified_chain(&session)?;

    let mut categories: BTreeSet<String> = BTreeSet::new();
    let mut third_parties: BTreeSet<String> = BTreeSet::new();
    let mut destinations: BTreeSet<String> = BTreeSet::new();
    let mut retention_policies = Vec::new();
    for (principal, fiduciary) in session.ledger.consent_pairs() {
        let resolution = session
            .ledger
            .latest_consent(&principal, &fiduciary)
            .map_err(ledger_error)?;
        if let ConsentResolution::Active { event, .. } = resolution {
            let form = event.form().expect("active resolution has a form");
            categories.extend(form.consented_categories());
            third_parties.extend(form.third_parties.iter().map(|p| p.as_str().to_string()));
            if let Some(dest) = &form.cross_border.destination {
                if form.cross_border.allowed {
                    destinations.insert(dest.clone());
                }
            }
            let retention = match form.retention {
                Retention::FixedDays(d) => MapBuilder::new()
                    .field("fixed_days", Value::uint(d as u64))
                    .field("form_id", Value::str(&form.form_id))
                    .build(),
                Retention::ReviewIntervalDays(d) => MapBuilder::new()
                    .field("form_id", Value::str(&form.form_id))
                    .field("review_interval_days", Value::uint(d as u64))
                    .build(),
            };
            retention_policies.push(retention);
        }
    }
    let breach_count = session.ledger.breach_records().count() as u64;

    // The grade is derivable only when a certificate and its report are
    // presented and verify against each other and a known auditor identity.
    let mut grade: Option<Grade> = None;
    if let (Some(report_path), Some(cert_path)) = (report_path, cert_path) {
        let report: AuditReport = context::read_canonical(report_path).map_err(usage)?;
        let certificate: Certificate = context::read_canonical(cert_path).map_err(usage)?;
        let auditor = session
            .directory
            .get(&certificate.auditor)
            .cloned()
            .ok_or_else(|| usage(format!("auditor \"{}\" unknown", certificate.auditor)))?;
        if !verify_certificate(&certificate, &report, &auditor) {
            return Err(integrity(
                "certificate does not verify against the report".to_string(),
            ));
        }
        grade = Some(report.grade);
    }

    let mut undeclared: Vec<&str> = UNDERIVABLE_ITEMS.to_vec();
    if grade.is_none() {
        undeclared.push("last_audit_grade");
        undeclared.sort();
    }

    let summary = MapBuilder::new()
        .field("breach_count", Value::uint(breach_count))
        .field(
            "categories_collected",
            Value::list(categories.iter().map(Value::str)),
        )
        .field(
            "cross_border_destinations",
            Value::list(destinations.iter().map(Value::str)),
        )
        .opt("last_audit_grade", grade.map(|g| Value::str(g.as_str())))
        .field("retention_policies", Value::List(retention_policies))
        .field(
            "third_parties",
            Value::list(third_parties.iter().map(Value::str)),
        )
        .field(
            "undeclared",
            Value::list(undeclared.iter().map(|s| Value::str(*s))),
        )
        .build();
    let mut text = String::from_utf8_lossy(&summary.encode()).into_owned();
    text.push('\n');
    Ok(Outcome::ok(text))
}
