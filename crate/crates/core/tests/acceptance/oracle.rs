//! Brute-force oracles: first-principles re-derivations of consent
//! resolution and every compliance check, written over raw ledger entries
//! with plain loops. They share only data-plumbing primitives with the
//! implementation (event digests, canonical category tables) — never the
//! checker code paths themselves.

use std::collections::BTreeSet;

use concord_core::consent::{ConsentEvent, EventKind};
use concord_core::crypto::{Digest, PartyId};
use concord_core::ledger::{Ledger, Payload};
use concord_core::minimization::{CollectionPolicy, Taxonomy};
use concord_core::records::ProcessingAction;

pub const DAY: i64 = 86_400;
pub const HOUR: i64 = 3_600;

/// Normalized finding shape used for set comparison.
pub type Finding = (&'static str, &'static str, &'static str, Vec<u64>);

#[derive(Debug, Default, PartialEq, Eq)]
pub struct Outcome {
    pub units_total: u64,
    pub units_failed: u64,
    pub findings: Vec<Finding>,
}

impl Outcome {
    fn unit(&mut self, findings: Vec<Finding>) {
        self.units_total += 1;
        if findings
            .iter()
            .any(|(_, _, sev, _)| *sev == "VIOLATION" || *sev == "FATAL")
        {
            self.units_failed += 1;
        }
        self.findings.extend(findings);
    }

    pub fn sorted(mut self) -> Self {
        self.findings.sort();
        self
    }
}

// ---------------------------------------------------------------------------
// Raw views over the entry list
// ---------------------------------------------------------------------------

struct ConsentRow<'a> {
    index: u64,
    event: &'a ConsentEvent,
    digest: Digest,
}

fn consent_rows(ledger: &Ledger) -> Vec<ConsentRow<'_>> {
    let mut rows = Vec::new();
    for entry in ledger.entries() {
        if let Payload::Consent(event) = &entry.payload {
            rows.push(ConsentRow {
                index: entry.index,
                event,
                digest: event.digest(),
            });
        }
    }
    rows
}

fn find_consent<'a>(rows: &'a [ConsentRow<'a>], digest: &Digest) -> Option<&'a ConsentRow<'a>> {
    rows.iter().find(|r| r.digest == *digest)
}

// ---------------------------------------------------------------------------
// Latest-consent resolution (criterion 2)
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Resolution {
    None,
    Active(u64),
    Withdrawn(u64),
    Forked { first: u64, second: u64 },
}

/// Materialize the supersedes DAG for the pair and select the unique leaf of
/// the most recently extended chain; report the first fork encountered in
/// digest order.
pub fn latest_consent(ledger: &Ledger, principal: &PartyId, fiduciary: &PartyId) -> Resolution {
    let rows: Vec<ConsentRow<'_>> = consent_rows(ledger)
        .into_iter()
        .filter(|r| r.event.principal() == principal && r.event.fiduciary() == fiduciary)
        .collect();
    if rows.is_empty() {
        return Resolution::None;
    }

    // Fork scan: any two rows superseding the same digest. Report the pair
    // for the smallest parent digest, mirroring resolution order.
    let mut forks: Vec<(Digest, u64, u64)> = Vec::new();
    for a in 0..rows.len() {
        for b in (a + 1)..rows.len() {
            if let (Some(da), Some(db)) = (&rows[a].event.supersedes, &rows[b].event.supersedes) {
                if da == db {
                    forks.push((*da, rows[a].index, rows[b].index));
                }
            }
        }
    }
    if !forks.is_empty() {
        forks.sort();
        let (_, first, second) = forks[0];
        return Resolution::Forked { first, second };
    }

    // Leaves: rows whose digest nobody supersedes.
    let mut best: Option<&ConsentRow<'_>> = None;
    for row in &rows {
        let has_child = rows
            .iter()
            .any(|other| other.event.supersedes.as_ref() == Some(&row.digest));
        if !has_child && best.map(|b| row.index > b.index).unwrap_or(true) {
            best = Some(row);
        }
    }
    let leaf = best.expect("non-empty fork-free history has a leaf");
    if leaf.event.kind == EventKind::Withdraw {
        Resolution::Withdrawn(leaf.index)
    } else {
        Resolution::Active(leaf.index)
    }
}

// ---------------------------------------------------------------------------
// Checker oracles (criterion 3)
// ---------------------------------------------------------------------------

pub fn purpose_limitation(ledger: &Ledger) -> Outcome {
    let rows = consent_rows(ledger);
    let mut outcome = Outcome::default();
    for entry in ledger.entries() {
        let Payload::Processing(p) = &entry.payload else {
            continue;
        };
        let index = entry.index;
        let mut findings: Vec<Finding> = Vec::new();
        match find_consent(&rows, &p.consent_ref) {
            None => findings.push((
                "purpose_limitation",
                "DANGLING_CONSENT_REF",
                "FATAL",
                vec![index],
            )),
            Some(referenced) => {
                match referenced.event.form() {
                    None => findings.push((
                        "purpose_limitation",
                        "PURPOSE_NOT_CONSENTED",
                        "VIOLATION",
                        vec![index, referenced.index],
                    )),
                    Some(form) => {
                        let mut granted = None;
                        for purpose in &form.purposes {
                            if purpose.purpose_id == p.purpose_id {
                                granted = Some(purpose);
                            }
                        }
                        match granted {
                            None => findings.push((
                                "purpose_limitation",
                                "PURPOSE_NOT_CONSENTED",
                                "VIOLATION",
                                vec![index, referenced.index],
                            )),
                            Some(purpose) => {
                                let outside = p
                                    .categories_touched
                                    .iter()
                                    .any(|c| !purpose.data_categories.contains(c));
                                if outside {
                                    findings.push((
                                        "purpose_limitation",
                                        "CATEGORY_OUTSIDE_PURPOSE",
                                        "VIOLATION",
                                        vec![index, referenced.index],
                                    ));
                                }
                            }
                        }
                    }
                }
                let superseded = rows
                    .iter()
                    .find(|r| r.event.supersedes.as_ref() == Some(&p.consent_ref))
                    .map(|r| r.index);
                if let Some(successor_index) = superseded {
                    findings.push((
                        "purpose_limitation",
                        "STALE_CONSENT_REF",
                        "WARN",
                        vec![index, referenced.index, successor_index],
                    ));
                }
            }
        }
        outcome.unit(findings);
    }
    outcome
}

pub fn withdrawal_enforcement(ledger: &Ledger, now: i64, grace_days: i64) -> Outcome {
    let rows = consent_rows(ledger);
    let mut outcome = Outcome::default();

    for entry in ledger.entries() {
        let Payload::Processing(p) = &entry.payload else {
            continue;
        };
        let Some(referenced) = find_consent(&rows, &p.consent_ref) else {
            continue;
        };
        let principal = referenced.event.principal();
        let fiduciary = referenced.event.fiduciary();
        // The governing consent state strictly before this processing, by
        // (timestamp sequence, ledger index).
        let mut governing: Option<&ConsentRow<'_>> = None;
        for row in &rows {
            if row.event.principal() != principal || row.event.fiduciary() != fiduciary {
                continue;
            }
            let key = (row.event.timestamp.sequence, row.index);
            if key >= (p.timestamp.sequence, entry.index) {
                continue;
            }
            let better = match governing {
                None => true,
                Some(current) => key > (current.event.timestamp.sequence, current.index),
            };
            if better {
                governing = Some(row);
            }
        }
        let mut findings: Vec<Finding> = Vec::new();
        if let Some(state) = governing {
            if state.event.kind == EventKind::Withdraw {
                findings.push((
                    "withdrawal_enforcement",
                    "PROCESSING_AFTER_WITHDRAWAL",
                    "VIOLATION",
                    vec![entry.index, state.index],
                ));
            }
        }
        outcome.unit(findings);
    }

    for row in &rows {
        if row.event.kind != EventKind::Withdraw {
            continue;
        }
        let notice = row.event.notice().expect("withdrawals carry a notice");
        let mut unique: BTreeSet<&PartyId> = BTreeSet::new();
        for party in &notice.third_parties {
            unique.insert(party);
        }
        for party in unique {
            let mut acknowledged = false;
            for entry in ledger.entries() {
                if let Payload::Propagation(receipt) = &entry.payload {
                    if receipt.withdrawal_digest == row.digest && receipt.third_party == *party {
                        acknowledged = true;
                    }
                }
            }
            let mut findings: Vec<Finding> = Vec::new();
            if !acknowledged {
                let severity = if now > row.event.wall_time() + grace_days * DAY {
                    "VIOLATION"
                } else {
                    "WARN"
                };
                findings.push((
                    "withdrawal_enforcement",
                    "PROPAGATION_INCOMPLETE",
                    severity,
                    vec![row.index],
                ));
            }
            outcome.unit(findings);
        }
    }
    outcome
}

pub fn retention(ledger: &Ledger, now: i64) -> Outcome {
    use concord_core::consent::Retention;

    let rows = consent_rows(ledger);
    let mut outcome = Outcome::default();

    // Pairs by first appearance.
    let mut pairs: Vec<(PartyId, PartyId)> = Vec::new();
    for row in &rows {
        let pair = (row.event.principal().clone(), row.event.fiduciary().clone());
        if !pairs.contains(&pair) {
            pairs.push(pair);
        }
    }

    for (principal, fiduciary) in pairs {
        match latest_consent(ledger, &principal, &fiduciary) {
            Resolution::Active(tip_index) => {
                let tip = rows
                    .iter()
                    .find(|r| r.index == tip_index)
                    .expect("tip exists");
                let form = tip.event.form().expect("active tip has a form");

                // Chase supersedes links back to the root.
                let mut root = tip;
                while let Some(parent) = &root.event.supersedes {
                    match find_consent(&rows, parent) {
                        Some(p) => root = p,
                        None => break,
                    }
                }

                let mut findings: Vec<Finding> = Vec::new();
                match form.retention {
                    Retention::FixedDays(days) => {
                        if now > root.event.wall_time() + days as i64 * DAY {
                            let mut wanted: BTreeSet<String> = BTreeSet::new();
                            for purpose in &form.purposes {
                                for category in &purpose.data_categories {
                                    wanted.insert(category.clone());
                                }
                            }
                            let mut erased: BTreeSet<String> = BTreeSet::new();
                            for entry in ledger.entries() {
                                if let Payload::Erasure(receipt) = &entry.payload {
                                    if receipt.principal == principal
                                        && receipt.fiduciary == fiduciary
                                    {
                                        erased.extend(receipt.categories_erased.iter().cloned());
                                    }
                                }
                            }
                            if wanted.iter().any(|c| !erased.contains(c)) {
                                findings.push((
                                    "retention",
                                    "RETENTION_EXPIRED",
                                    "VIOLATION",
                                    vec![root.index, tip.index],
                                ));
                            }
                        }
                    }
                    Retention::ReviewIntervalDays(days) => {
                        if now > tip.event.wall_time() + days as i64 * DAY {
                            findings.push((
                                "retention",
                                "RETENTION_REVIEW_DUE",
                                "WARN",
                                vec![tip.index],
                            ));
                        }
                    }
                }
                outcome.unit(findings);
            }
            Resolution::None | Resolution::Withdrawn(_) | Resolution::Forked { .. } => {}
        }
    }
    outcome
}

pub fn sharing(ledger: &Ledger) -> Outcome {
    let rows = consent_rows(ledger);
    let mut outcome = Outcome::default();
    for entry in ledger.entries() {
        let Payload::Processing(p) = &entry.payload else {
            continue;
        };
        let disclosure = matches!(
            p.action,
            ProcessingAction::Share | ProcessingAction::Disclose
        );
        if !disclosure && p.action != ProcessingAction::TransferCrossBorder {
            continue;
        }
        let Some(referenced) = find_consent(&rows, &p.consent_ref) else {
            continue;
        };
        let Some(form) = referenced.event.form() else {
            continue;
        };
        let mut findings: Vec<Finding> = Vec::new();
        if disclosure {
            let listed = |party: &PartyId| {
                *party == form.fiduciary || form.third_parties.iter().any(|t| t == party)
            };
            if !listed(&p.actor) || p.counterparty.as_ref().map(|c| !listed(c)).unwrap_or(false) {
                findings.push((
                    "sharing",
                    "UNLISTED_THIRD_PARTY",
                    "VIOLATION",
                    vec![entry.index, referenced.index],
                ));
            }
            let mut first_marker: Option<u64> = None;
            for marker_entry in ledger.entries() {
                if marker_entry.index >= entry.index {
                    break;
                }
                if let Payload::Restriction(marker) = &marker_entry.payload {
                    if marker.principal == form.principal && marker.fiduciary == form.fiduciary {
                        first_marker = Some(marker_entry.index);
                        break;
                    }
                }
            }
            if let Some(marker_index) = first_marker {
                findings.push((
                    "sharing",
                    "DISCLOSURE_RESTRICTED",
                    "VIOLATION",
                    vec![entry.index, marker_index],
                ));
            }
        }
        if p.action == ProcessingAction::TransferCrossBorder && !form.cross_border.allowed {
            findings.push((
                "sharing",
                "CROSS_BORDER_UNAUTHORIZED",
                "VIOLATION",
                vec![entry.index, referenced.index],
            ));
        }
        outcome.unit(findings);
    }
    outcome
}

pub fn breach_timeliness(ledger: &Ledger, window_hours: i64) -> Outcome {
    let mut outcome = Outcome::default();
    for entry in ledger.entries() {
        let Payload::Breach(b) = &entry.payload else {
            continue;
        };
        let mut findings: Vec<Finding> = Vec::new();
        match b.reported_to_authority_at {
            None => findings.push((
                "breach_timeliness",
                "BREACH_REPORT_MISSING",
                "VIOLATION",
                vec![entry.index],
            )),
            Some(reported) => {
                if reported > b.detected_at + window_hours * HOUR {
                    findings.push((
                        "breach_timeliness",
                        "BREACH_REPORT_LATE",
                        "VIOLATION",
                        vec![entry.index],
                    ));
                }
            }
        }
        if b.high_risk && b.principal_notified_at.is_none() {
            findings.push((
                "breach_timeliness",
                "PRINCIPAL_NOT_NOTIFIED",
                "VIOLATION",
                vec![entry.index],
            ));
        }
        outcome.unit(findings);
    }
    outcome
}

pub fn guardian_prohibition(
    ledger: &Ledger,
    guardians: &BTreeSet<PartyId>,
    prohibited: &BTreeSet<String>,
) -> Outcome {
    let mut outcome = Outcome::default();
    for entry in ledger.entries() {
        let Payload::Processing(p) = &entry.payload else {
            continue;
        };
        if !guardians.contains(&p.actor) {
            continue;
        }
        let mut findings: Vec<Finding> = Vec::new();
        if p.action == ProcessingAction::Analyze && prohibited.contains(&p.purpose_id) {
            findings.push((
                "guardian_prohibition",
                "GUARDIAN_FIDUCIARY_PROHIBITION",
                "VIOLATION",
                vec![entry.index],
            ));
        }
        outcome.unit(findings);
    }
    outcome
}

pub fn collection_minimization(
    ledger: &Ledger,
    policy: &CollectionPolicy,
    taxonomy: &Taxonomy,
) -> Outcome {
    let mut outcome = Outcome::default();
    for entry in ledger.entries() {
        let Payload::Consent(event) = &entry.payload else {
            continue;
        };
        let Some(form) = event.form() else {
            continue;
        };
        for purpose in &form.purposes {
            let max = policy
                .max_by_purpose
                .get(&purpose.purpose_id)
                .copied()
                .unwrap_or(policy.default_max);
            let mut findings: Vec<Finding> = Vec::new();
            for category in &purpose.data_categories {
                match taxonomy.get(category) {
                    None => findings.push((
                        "collection_minimization",
                        "UNKNOWN_CATEGORY",
                        "VIOLATION",
                        vec![entry.index],
                    )),
                    Some(info) => {
                        if info.class > max {
                            findings.push((
                                "collection_minimization",
                                "OVER_COLLECTION",
                                "VIOLATION",
                                vec![entry.index],
                            ));
                        }
                    }
                }
            }
            outcome.unit(findings);
        }
    }
    outcome
}
