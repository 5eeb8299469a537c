//! The audit driver: run the check registry over a ledger, score it, grade
//! it, and certify it.
//!
//! Chain verification runs first and is not negotiable: a broken chain or a
//! forked consent history is FATAL and short-circuits to score 0, grade F.
//! Otherwise every enabled checker contributes its pass ratio and the score
//! is the weighted mean, scaled to [0, 100]:
//!
//! ```text
//! score = 100 · Σ(weight_c · pass_ratio_c) / Σ(weight_c)
//! ```
//!
//! Weights never change verdicts — findings are produced before weighting —
//! and reports are deterministic: the same ledger bytes, configuration, and
//! clock always produce byte-identical report files, so anyone holding the
//! ledger can recompute and confirm a report. Scores are carried as integer
//! nanopoints to keep the serialized form exact.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::canonical::{Canonical, CanonicalError, FromValue, MapBuilder, MapReader, Value};
use crate::clock::Clock;
use crate::compliance::{
    check_breach_timeliness, check_collection_minimization, check_guardian_prohibition,
    check_purpose_limitation, check_retention, check_sharing, check_withdrawal_enforcement,
    CheckContext, CheckId, CheckOutcome, Finding, Severity,
};
use crate::crypto::{Digest, PartyDirectory, PartyId, PartyIdentity, Signature, Signer};
use crate::ledger::{ChainVerdict, Ledger, LedgerError};
use crate::minimization::{lint_plan, CollectionPlan, CollectionPolicy, DataClass, Taxonomy};

#[derive(Debug, thiserror::Error)]
pub enum AuditError {
    #[error("invalid audit config: {0}")]
    InvalidConfig(String),
    #[error("CERTIFICATION_REFUSED: grade {grade} is below the certification minimum {minimum}")]
    CertificationRefused { grade: Grade, minimum: Grade },
    #[error(transparent)]
    Canonical(#[from] CanonicalError),
}

// ---------------------------------------------------------------------------
// Grades
// ---------------------------------------------------------------------------

/// Letter grade; ordering follows quality, so `Grade::A > Grade::F`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Grade {
    F,
    D,
    C,
    B,
    A,
}

impl Grade {
    pub const ALL: [Grade; 5] = [Grade::F, Grade::D, Grade::C, Grade::B, Grade::A];

    pub fn as_str(&self) -> &'static str {
        match self {
            Grade::A => "A",
            Grade::B => "B",
            Grade::C => "C",
            Grade::D => "D",
            Grade::F => "F",
        }
    }

    pub fn parse(s: &str) -> Result<Self, CanonicalError> {
        Self::ALL
            .into_iter()
            .find(|g| g.as_str() == s)
            .ok_or_else(|| CanonicalError::decode(format!("unknown grade \"{s}\"")))
    }
}

impl fmt::Display for Grade {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Score thresholds (whole points) for A/B/C/D; anything below D is F.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GradeBands {
    pub a_min: u8,
    pub b_min: u8,
    pub c_min: u8,
    pub d_min: u8,
}

impl GradeBands {
    pub fn grade_for_nanos(&self, score_nanos: u64) -> Grade {
        let point = |p: u8| p as u64 * NANOS_PER_POINT;
        if score_nanos >= point(self.a_min) {
            Grade::A
        } else if score_nanos >= point(self.b_min) {
            Grade::B
        } else if score_nanos >= point(self.c_min) {
            Grade::C
        } else if score_nanos >= point(self.d_min) {
            Grade::D
        } else {
            Grade::F
        }
    }

    fn validate(&self) -> Result<(), AuditError> {
        if self.a_min > 100 {
            return Err(AuditError::InvalidConfig(
                "grade band A exceeds 100".to_string(),
            ));
        }
        if !(self.a_min > self.b_min && self.b_min > self.c_min && self.c_min > self.d_min) {
            return Err(AuditError::InvalidConfig(
                "grade bands must be strictly decreasing".to_string(),
            ));
        }
        Ok(())
    }
}

impl Default for GradeBands {
    // Non-statutory defaults; the framework text names no numbers.
    fn default() -> Self {
        GradeBands {
            a_min: 90,
            b_min: 75,
            c_min: 60,
            d_min: 40,
        }
    }
}

pub const NANOS_PER_POINT: u64 = 1_000_000_000;
pub const MAX_SCORE_NANOS: u64 = 100 * NANOS_PER_POINT;

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

/// Everything an audit run is parameterized by. Weights are relative
/// integers; a check's influence is its weight over the sum.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AuditConfig {
    pub enabled_checks: BTreeSet<CheckId>,
    pub weights: BTreeMap<CheckId, u64>,
    pub grade_bands: GradeBands,
    pub breach_report_window_hours: u64,
    pub propagation_grace_days: u64,
    pub guardian_fiduciaries: BTreeSet<PartyId>,
    pub prohibited_purposes: BTreeSet<String>,
    pub policy: CollectionPolicy,
    pub min_certificate_grade: Grade,
}

impl Default for AuditConfig {
    fn default() -> Self {
        AuditConfig {
            enabled_checks: CheckId::SCORED.into_iter().collect(),
            weights: CheckId::SCORED.into_iter().map(|c| (c, 1)).collect(),
            grade_bands: GradeBands::default(),
            breach_report_window_hours: 72,
            propagation_grace_days: 7,
            guardian_fiduciaries: BTreeSet::new(),
            prohibited_purposes: ["profiling", "advertising"]
                .into_iter()
                .map(str::to_string)
                .collect(),
            policy: CollectionPolicy::default_table(),
            min_certificate_grade: Grade::C,
        }
    }
}

impl AuditConfig {
    pub fn validate(&self) -> Result<(), AuditError> {
        if self.enabled_checks.is_empty() {
            return Err(AuditError::InvalidConfig("no checks enabled".to_string()));
        }
        if self.enabled_checks.contains(&CheckId::ChainIntegrity) {
            return Err(AuditError::InvalidConfig(
                "chain_integrity always runs and cannot be weighted".to_string(),
            ));
        }
        let total: u64 = self
            .enabled_checks
            .iter()
            .map(|c| self.weights.get(c).copied().unwrap_or(0))
            .sum();
        if total == 0 {
            return Err(AuditError::InvalidConfig(
                "weights of enabled checks sum to zero".to_string(),
            ));
        }
        self.grade_bands.validate()
    }

    pub fn weight_of(&self, check: CheckId) -> u64 {
        self.weights.get(&check).copied().unwrap_or(0)
    }

    fn check_context(&self, now: i64, taxonomy: &Taxonomy) -> CheckContext {
        CheckContext {
            now,
            breach_report_window_hours: self.breach_report_window_hours,
            propagation_grace_days: self.propagation_grace_days,
            guardian_fiduciaries: self.guardian_fiduciaries.clone(),
            prohibited_purposes: self.prohibited_purposes.clone(),
            policy: self.policy.clone(),
            taxonomy: taxonomy.clone(),
        }
    }

    /// Parse the line-oriented config:
    ///
    /// ```text
    /// check <check_id> <weight>          # replaces the default check set
    /// grade_band <A|B|C|D> <points>
    /// breach_report_window_hours <n>
    /// propagation_grace_days <n>
    /// min_certificate_grade <grade>
    /// guardian_fiduciary <party_id>
    /// prohibited_purpose <purpose_id>    # replaces the default purpose set
    /// purpose_max <purpose_id> <CLASS>   # overrides the policy table
    /// purpose_default_max <CLASS>
    /// ```
    pub fn parse_config(text: &str) -> Result<Self, AuditError> {
        let mut config = AuditConfig::default();
        let mut saw_check = false;
        let mut saw_prohibited = false;
        let bad = |line: usize, reason: String| {
            AuditError::InvalidConfig(format!("line {line}: {reason}"))
        };
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut parts = line.split_whitespace();
            let directive = parts.next().expect("non-empty line");
            let mut arg = || {
                parts.next().ok_or_else(|| {
                    bad(
                        line_no,
                        format!("directive \"{directive}\" needs an argument"),
                    )
                })
            };
            match directive {
                "check" => {
                    if !saw_check {
                        config.enabled_checks.clear();
                        config.weights.clear();
                        saw_check = true;
                    }
                    let check = CheckId::parse(arg()?).map_err(|e| bad(line_no, e.to_string()))?;
                    let weight: u64 = arg()?.parse().map_err(|_| {
                        bad(line_no, "weight must be a non-negative integer".to_string())
                    })?;
                    config.enabled_checks.insert(check);
                    config.weights.insert(check, weight);
                }
                "grade_band" => {
                    let grade = Grade::parse(arg()?).map_err(|e| bad(line_no, e.to_string()))?;
                    let points: u8 = arg()?
                        .parse()
                        .map_err(|_| bad(line_no, "band must be 0..=100".to_string()))?;
                    match grade {
                        Grade::A => config.grade_bands.a_min = points,
                        Grade::B => config.grade_bands.b_min = points,
                        Grade::C => config.grade_bands.c_min = points,
                        Grade::D => config.grade_bands.d_min = points,
                        Grade::F => return Err(bad(line_no, "grade F has no band".to_string())),
                    }
                }
                "breach_report_window_hours" => {
                    config.breach_report_window_hours = arg()?
                        .parse()
                        .map_err(|_| bad(line_no, "window must be an integer".to_string()))?;
                }
                "propagation_grace_days" => {
                    config.propagation_grace_days = arg()?
                        .parse()
                        .map_err(|_| bad(line_no, "grace must be an integer".to_string()))?;
                }
                "min_certificate_grade" => {
                    config.min_certificate_grade =
                        Grade::parse(arg()?).map_err(|e| bad(line_no, e.to_string()))?;
                }
                "guardian_fiduciary" => {
                    config.guardian_fiduciaries.insert(PartyId::new(arg()?));
                }
                "prohibited_purpose" => {
                    if !saw_prohibited {
                        config.prohibited_purposes.clear();
                        saw_prohibited = true;
                    }
                    config.prohibited_purposes.insert(arg()?.to_string());
                }
                "purpose_max" => {
                    let purpose = arg()?.to_string();
                    let class =
                        DataClass::parse(arg()?).map_err(|e| bad(line_no, e.to_string()))?;
                    config.policy.max_by_purpose.insert(purpose, class);
                }
                "purpose_default_max" => {
                    config.policy.default_max =
                        DataClass::parse(arg()?).map_err(|e| bad(line_no, e.to_string()))?;
                }
                other => return Err(bad(line_no, format!("unknown directive \"{other}\""))),
            }
        }
        config.validate()?;
        Ok(config)
    }

    pub fn to_config(&self) -> String {
        let mut out = String::new();
        for check in &self.enabled_checks {
            out.push_str(&format!("check {} {}\n", check, self.weight_of(*check)));
        }
        out.push_str(&format!("grade_band A {}\n", self.grade_bands.a_min));
        out.push_str(&format!("grade_band B {}\n", self.grade_bands.b_min));
        out.push_str(&format!("grade_band C {}\n", self.grade_bands.c_min));
        out.push_str(&format!("grade_band D {}\n", self.grade_bands.d_min));
        out.push_str(&format!(
            "breach_report_window_hours {}\n",
            self.breach_report_window_hours
        ));
        out.push_str(&format!(
            "propagation_grace_days {}\n",
            self.propagation_grace_days
        ));
        out.push_str(&format!(
            "min_certificate_grade {}\n",
            self.min_certificate_grade
        ));
        for party in &self.guardian_fiduciaries {
            out.push_str(&format!("guardian_fiduciary {party}\n"));
        }
        for purpose in &self.prohibited_purposes {
            out.push_str(&format!("prohibited_purpose {purpose}\n"));
        }
        for (purpose, class) in &self.policy.max_by_purpose {
            out.push_str(&format!("purpose_max {purpose} {class}\n"));
        }
        out.push_str(&format!(
            "purpose_default_max {}\n",
            self.policy.default_max
        ));
        out
    }
}

impl Canonical for AuditConfig {
    fn to_value(&self) -> Value {
        let mut weights = MapBuilder::new();
        for check in &self.enabled_checks {
            weights = weights.field(check.as_str(), Value::uint(self.weight_of(*check)));
        }
        MapBuilder::new()
            .field(
                "breach_report_window_hours",
                Value::uint(self.breach_report_window_hours),
            )
            .field(
                "grade_bands",
                MapBuilder::new()
                    .field("a_min", Value::uint(self.grade_bands.a_min as u64))
                    .field("b_min", Value::uint(self.grade_bands.b_min as u64))
                    .field("c_min", Value::uint(self.grade_bands.c_min as u64))
                    .field("d_min", Value::uint(self.grade_bands.d_min as u64))
                    .build(),
            )
            .field(
                "guardian_fiduciaries",
                Value::list(
                    self.guardian_fiduciaries
                        .iter()
                        .map(|p| Value::str(p.as_str())),
                ),
            )
            .field(
                "min_certificate_grade",
                Value::str(self.min_certificate_grade.as_str()),
            )
            .field("policy", self.policy.to_value())
            .field(
                "prohibited_purposes",
                Value::list(self.prohibited_purposes.iter().map(Value::str)),
            )
            .field(
                "propagation_grace_days",
                Value::uint(self.propagation_grace_days),
            )
            .field("weights", weights.build())
            .build()
    }
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportKind {
    Audit,
    Assessment,
}

impl ReportKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ReportKind::Audit => "AUDIT",
            ReportKind::Assessment => "ASSESSMENT",
        }
    }

    pub fn parse(s: &str) -> Result<Self, CanonicalError> {
        match s {
            "AUDIT" => Ok(ReportKind::Audit),
            "ASSESSMENT" => Ok(ReportKind::Assessment),
            other => Err(CanonicalError::decode(format!(
                "unknown report kind \"{other}\""
            ))),
        }
    }
}

/// Per-check accounting inside a report.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CheckResult {
    pub check: CheckId,
    pub weight: u64,
    pub units_total: u64,
    pub units_failed: u64,
}

impl CheckResult {
    pub fn pass_ratio(&self) -> f64 {
        if self.units_total == 0 {
            1.0
        } else {
            (self.units_total - self.units_failed) as f64 / self.units_total as f64
        }
    }
}

/// The audit outcome: what was checked, what was found, and the score.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AuditReport {
    pub kind: ReportKind,
    pub audited_head: Option<(u64, Digest)>,
    /// Digest over the audit configuration and taxonomy the run used.
    pub config_digest: Digest,
    pub results: Vec<CheckResult>,
    pub findings: Vec<Finding>,
    pub score_nanos: u64,
    pub grade: Grade,
    pub produced_at: i64,
}

impl AuditReport {
    pub fn score(&self) -> f64 {
        self.score_nanos as f64 / NANOS_PER_POINT as f64
    }

    pub fn digest(&self) -> Digest {
        Digest::of(self)
    }

    /// Recompute the weighted score from the per-check results.
    pub fn recompute_score_nanos(&self) -> u64 {
        score_nanos_from(self.results.iter().map(|r| (r.weight, r.pass_ratio())))
    }

    pub fn has_fatal(&self) -> bool {
        self.findings.iter().any(|f| f.severity == Severity::Fatal)
    }
}

impl Canonical for AuditReport {
    fn to_value(&self) -> Value {
        MapBuilder::new()
            .opt(
                "audited_head",
                self.audited_head.as_ref().map(|(index, hash)| {
                    MapBuilder::new()
                        .field("hash", hash.to_value())
                        .field("index", Value::uint(*index))
                        .build()
                }),
            )
            .field("config_digest", self.config_digest.to_value())
            .field(
                "findings",
                Value::list(self.findings.iter().map(|f| f.to_value())),
            )
            .field("grade", Value::str(self.grade.as_str()))
            .field("kind", Value::str(self.kind.as_str()))
            .field("produced_at", Value::int(self.produced_at))
            .field(
                "results",
                Value::list(self.results.iter().map(|r| {
                    MapBuilder::new()
                        .field("check", Value::str(r.check.as_str()))
                        .field("units_failed", Value::uint(r.units_failed))
                        .field("units_total", Value::uint(r.units_total))
                        .field("weight", Value::uint(r.weight))
                        .build()
                })),
            )
            .field("score_nanos", Value::uint(self.score_nanos))
            .build()
    }
}

impl FromValue for AuditReport {
    fn from_value(value: &Value) -> Result<Self, CanonicalError> {
        let mut r = MapReader::new(value)?;
        let audited_head = match r.optional("audited_head") {
            Some(v) => {
                let mut hr = MapReader::new(v)?;
                let hash = Digest::from_value(hr.required("hash")?)?;
                let index = hr.u64("index")?;
                hr.finish()?;
                Some((index, hash))
            }
            None => None,
        };
        let config_digest = Digest::from_value(r.required("config_digest")?)?;
        let findings = r
            .list("findings")?
            .iter()
            .map(Finding::from_value)
            .collect::<Result<Vec<_>, _>>()?;
        let grade = Grade::parse(r.str("grade")?)?;
        let kind = ReportKind::parse(r.str("kind")?)?;
        let produced_at = r.int("produced_at")?;
        let results = r
            .list("results")?
            .iter()
            .map(|v| {
                let mut cr = MapReader::new(v)?;
                let check = CheckId::parse(cr.str("check")?)?;
                let units_failed = cr.u64("units_failed")?;
                let units_total = cr.u64("units_total")?;
                let weight = cr.u64("weight")?;
                cr.finish()?;
                Ok(CheckResult {
                    check,
                    weight,
                    units_total,
                    units_failed,
                })
            })
            .collect::<Result<Vec<_>, CanonicalError>>()?;
        let score_nanos = r.u64("score_nanos")?;
        r.finish()?;
        Ok(AuditReport {
            kind,
            audited_head,
            config_digest,
            results,
            findings,
            score_nanos,
            grade,
            produced_at,
        })
    }
}

fn score_nanos_from(parts: impl Iterator<Item = (u64, f64)>) -> u64 {
    let mut weighted = 0.0f64;
    let mut total = 0u64;
    for (weight, ratio) in parts {
        weighted += weight as f64 * ratio;
        total += weight;
    }
    if total == 0 {
        return 0;
    }
    let score = weighted * 100.0 / total as f64;
    let nanos = (score * NANOS_PER_POINT as f64).round();
    (nanos as u64).min(MAX_SCORE_NANOS)
}

/// Digest binding a run to its configuration and taxonomy.
fn context_digest(config: &AuditConfig, taxonomy: &Taxonomy) -> Digest {
    let value = MapBuilder::new()
        .field("config", config.to_value())
        .field("taxonomy", taxonomy.to_value())
        .build();
    Digest::of_bytes(&value.encode())
}

// ---------------------------------------------------------------------------
// Running audits
// ---------------------------------------------------------------------------

fn run_checker(check: CheckId, ledger: &Ledger, ctx: &CheckContext) -> CheckOutcome {
    match check {
        CheckId::PurposeLimitation => check_purpose_limitation(ledger, ctx),
        CheckId::WithdrawalEnforcement => check_withdrawal_enforcement(ledger, ctx),
        CheckId::Retention => check_retention(ledger, ctx),
        CheckId::Sharing => check_sharing(ledger, ctx),
        CheckId::BreachTimeliness => check_breach_timeliness(ledger, ctx),
        CheckId::GuardianProhibition => check_guardian_prohibition(ledger, ctx),
        CheckId::CollectionMinimization => check_collection_minimization(ledger, ctx),
        CheckId::ChainIntegrity => unreachable!("integrity is not a scored checker"),
    }
}

/// Integrity phase: chain verification plus fork detection across all pairs.
fn integrity_findings(ledger: &Ledger, directory: &PartyDirectory) -> Vec<Finding> {
    let mut findings = Vec::new();
    match ledger.verify(directory) {
        ChainVerdict::Ok => {}
        ChainVerdict::Bad {
            first_bad_index,
            reason,
        } => {
            findings.push(Finding {
                check: CheckId::ChainIntegrity,
                code: "CHAIN_BROKEN".to_string(),
                severity: Severity::Fatal,
                evidence: vec![first_bad_index],
                detail: reason,
            });
            // A broken chain makes pair resolution meaningless.
            return findings;
        }
    }
    for (principal, fiduciary) in ledger.consent_pairs() {
        if let Err(LedgerError::ForkedConsent {
            parent,
            first,
            second,
        }) = ledger.latest_consent(&principal, &fiduciary)
        {
            findings.push(Finding {
                check: CheckId::ChainIntegrity,
                code: "FORKED_CONSENT".to_string(),
                severity: Severity::Fatal,
                evidence: vec![first, second],
                detail: format!(
                    "events at {first} and {second} both supersede {parent} for pair ({principal}, {fiduciary})"
                ),
            });
        }
    }
    findings
}

/// Run the full audit over a verified ledger snapshot.
pub fn run_audit(
    ledger: &Ledger,
    directory: &PartyDirectory,
    config: &AuditConfig,
    taxonomy: &Taxonomy,
    clock: &dyn Clock,
) -> Result<AuditReport, AuditError> {
    config.validate()?;
    let now = clock.now_unix();
    let audited_head = ledger.head().map(|h| (h.index, h.entry_hash));
    let config_digest = context_digest(config, taxonomy);

    let fatal = integrity_findings(ledger, directory);
    if !fatal.is_empty() {
        return Ok(AuditReport {
            kind: ReportKind::Audit,
            audited_head,
            config_digest,
            results: Vec::new(),
            findings: fatal,
            score_nanos: 0,
            grade: Grade::F,
            produced_at: now,
        });
    }

    let ctx = config.check_context(now, taxonomy);
    let mut results = Vec::new();
    let mut findings = Vec::new();
    for check in CheckId::SCORED {
        if !config.enabled_checks.contains(&check) {
            continue;
        }
        let outcome = run_checker(check, ledger, &ctx);
        results.push(CheckResult {
            check,
            weight: config.weight_of(check),
            units_total: outcome.units_total,
            units_failed: outcome.units_failed,
        });
        findings.extend(outcome.findings);
    }
    let score_nanos = score_nanos_from(results.iter().map(|r| (r.weight, r.pass_ratio())));
    let grade = config.grade_bands.grade_for_nanos(score_nanos);
    Ok(AuditReport {
        kind: ReportKind::Audit,
        audited_head,
        config_digest,
        results,
        findings,
        score_nanos,
        grade,
        produced_at: now,
    })
}

/// Impact assessment: the audit engine pointed at declared future collection
/// plans instead of recorded history. Each plan is one unit; the score is
/// the lint pass ratio under the same grading machinery.
pub fn impact_assessment(
    plans: &[CollectionPlan],
    config: &AuditConfig,
    taxonomy: &Taxonomy,
    clock: &dyn Clock,
) -> Result<AuditReport, AuditError> {
    config.validate()?;
    let now = clock.now_unix();
    let mut findings = Vec::new();
    let mut failed = 0u64;
    for plan in plans {
        let mut plan_failed = false;
        match lint_plan(plan, taxonomy) {
            Ok(violations) => {
                for v in violations {
                    plan_failed = true;
                    findings.push(Finding {
                        check: CheckId::CollectionMinimization,
                        code: "OVER_COLLECTION".to_string(),
                        severity: Severity::Violation,
                        evidence: Vec::new(),
                        detail: format!(
                            "plan \"{}\": category \"{}\" ({}) exceeds the {} bound",
                            v.purpose_id, v.category_id, v.class, v.max_class_allowed
                        ),
                    });
                }
            }
            Err(e) => {
                plan_failed = true;
                findings.push(Finding {
                    check: CheckId::CollectionMinimization,
                    code: "UNKNOWN_CATEGORY".to_string(),
                    severity: Severity::Violation,
                    evidence: Vec::new(),
                    detail: format!("plan \"{}\": {e}", plan.purpose_id),
                });
            }
        }
        if plan_failed {
            failed += 1;
        }
    }
    let results = vec![CheckResult {
        check: CheckId::CollectionMinimization,
        weight: config.weight_of(CheckId::CollectionMinimization).max(1),
        units_total: plans.len() as u64,
        units_failed: failed,
    }];
    let score_nanos = score_nanos_from(results.iter().map(|r| (r.weight, r.pass_ratio())));
    let grade = config.grade_bands.grade_for_nanos(score_nanos);
    Ok(AuditReport {
        kind: ReportKind::Assessment,
        audited_head: None,
        config_digest: context_digest(config, taxonomy),
        results,
        findings,
        score_nanos,
        grade,
        produced_at: now,
    })
}

// ---------------------------------------------------------------------------
// Certificates
// ---------------------------------------------------------------------------

/// Auditor-signed attestation binding a report digest to a validity window.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Certificate {
    pub report_digest: Digest,
    pub fiduciary: PartyId,
    pub auditor: PartyId,
    pub valid_from: i64,
    pub valid_to: i64,
    pub auditor_signature: Signature,
}

impl Certificate {
    fn signing_view(
        report_digest: &Digest,
        fiduciary: &PartyId,
        auditor: &PartyId,
        valid_from: i64,
        valid_to: i64,
    ) -> Value {
        MapBuilder::new()
            .field("auditor", Value::str(auditor.as_str()))
            .field("fiduciary", Value::str(fiduciary.as_str()))
            .field("report_digest", report_digest.to_value())
            .field("valid_from", Value::int(valid_from))
            .field("valid_to", Value::int(valid_to))
            .build()
    }
}

impl Canonical for Certificate {
    fn to_value(&self) -> Value {
        MapBuilder::new()
            .field("auditor", Value::str(self.auditor.as_str()))
            .field("fiduciary", Value::str(self.fiduciary.as_str()))
            .field("report_digest", self.report_digest.to_value())
            .field("signature", self.auditor_signature.to_value())
            .field("valid_from", Value::int(self.valid_from))
            .field("valid_to", Value::int(self.valid_to))
            .build()
    }
}

impl FromValue for Certificate {
    fn from_value(value: &Value) -> Result<Self, CanonicalError> {
        let mut r = MapReader::new(value)?;
        let auditor = PartyId::new(r.string("auditor")?);
        let fiduciary = PartyId::new(r.string("fiduciary")?);
        let report_digest = Digest::from_value(r.required("report_digest")?)?;
        let auditor_signature = Signature::from_value(r.required("signature")?)?;
        let valid_from = r.int("valid_from")?;
        let valid_to = r.int("valid_to")?;
        r.finish()?;
        Ok(Certificate {
            report_digest,
            fiduciary,
            auditor,
            valid_from,
            valid_to,
            auditor_signature,
        })
    }
}

/// Issue a certificate for a report whose grade clears the configured
/// minimum.
pub fn issue_certificate(
    report: &AuditReport,
    auditor: &Signer<'_>,
    fiduciary: PartyId,
    valid_from: i64,
    valid_to: i64,
    min_grade: Grade,
) -> Result<Certificate, AuditError> {
    if report.grade < min_grade {
        return Err(AuditError::CertificationRefused {
            grade: report.grade,
            minimum: min_grade,
        });
    }
    if valid_to < valid_from {
        return Err(AuditError::InvalidConfig(
            "certificate validity interval is reversed".to_string(),
        ));
    }
    let report_digest = report.digest();
    let view = Certificate::signing_view(
        &report_digest,
        &fiduciary,
        auditor.party_id(),
        valid_from,
        valid_to,
    );
    Ok(Certificate {
        report_digest,
        fiduciary,
        auditor: auditor.party_id().clone(),
        valid_from,
        valid_to,
        auditor_signature: auditor.key.sign_bytes(&view.encode()),
    })
}

/// Check a certificate against the report it claims to certify and the
/// auditor identity it claims issued it.
pub fn verify_certificate(
    certificate: &Certificate,
    report: &AuditReport,
    auditor: &PartyIdentity,
) -> bool {
    if certificate.report_digest != report.digest() {
        return false;
    }
    if certificate.auditor != *auditor.party_id() {
        return false;
    }
    if certificate.valid_to < certificate.valid_from {
        return false;
    }
    let view = Certificate::signing_view(
        &certificate.report_digest,
        &certificate.fiduciary,
        &certificate.auditor,
        certificate.valid_from,
        certificate.valid_to,
    );
    auditor
        .verify(&view.encode(), &certificate.auditor_signature)
        .unwrap_or(false)
}
