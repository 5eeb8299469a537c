//! Deterministic randomized scenario generation for the acceptance suite.

use std::collections::BTreeSet;

use concord_core::consent::{
    ConsentEvent, ConsentForm, CrossBorder, EventKind, PurposeSpec, Retention,
};
use concord_core::crypto::PartyId;
use concord_core::records::{BreachDetails, ProcessingAction};
use concord_core::testkit::Scenario;

/// splitmix64: small, seedable, and good enough to spread scenarios around.
pub struct Rng(u64);

impl Rng {
    pub fn new(seed: u64) -> Self {
        Rng(seed)
    }

    pub fn next(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9e37_79b9_7f4a_7c15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }

    pub fn below(&mut self, n: u64) -> u64 {
        self.next() % n
    }

    pub fn chance(&mut self, percent: u64) -> bool {
        self.below(100) < percent
    }

    pub fn pick<'a, T>(&mut self, xs: &'a [T]) -> &'a T {
        &xs[self.below(xs.len() as u64) as usize]
    }
}

// ---------------------------------------------------------------------------
// Lifecycle sequences (criterion 2)
// ---------------------------------------------------------------------------

/// One generated consent history for the (alice, shop) pair. Events may
/// supersede non-tip ancestors, which creates forks.
pub struct LifecycleSequence {
    pub scenario: Scenario,
}

pub fn lifecycle_sequence(rng: &mut Rng) -> LifecycleSequence {
    let mut scenario = Scenario::new();
    let length = 1 + rng.below(20);
    let mut events: Vec<ConsentEvent> = Vec::new();
    let mut form_counter = 0u64;

    for _ in 0..length {
        scenario.world.tick(rng.below(3_600) as i64);
        let live: Vec<usize> = events
            .iter()
            .enumerate()
            .filter(|(_, ev)| ev.kind != EventKind::Withdraw)
            .map(|(i, _)| i)
            .collect();
        let action = rng.below(100);
        if events.is_empty() || live.is_empty() || action < 30 {
            form_counter += 1;
            let (_, appended) = scenario.establish(&format!("f-{form_counter}"));
            events.push(appended);
        } else if action < 75 {
            // Modify any live event, tip or not; non-tip targets fork.
            let target = events[*rng.pick(&live)].clone();
            form_counter += 1;
            let (_, appended) = scenario.modify(&target, &format!("f-{form_counter}"));
            events.push(appended);
        } else {
            let target = events[*rng.pick(&live)].clone();
            let (_, appended) = scenario.withdraw(&target);
            events.push(appended);
        }
    }
    LifecycleSequence { scenario }
}

// ---------------------------------------------------------------------------
// Compliance scenario ledgers (criterion 3)
// ---------------------------------------------------------------------------

pub struct ComplianceScenario {
    pub scenario: Scenario,
    /// Audit as-of instant, offset from the last recorded activity.
    pub as_of: i64,
}

const PRINCIPALS: [&str; 2] = ["alice", "bob"];
const FIDUCIARIES: [&str; 2] = ["shop", "bank"];

fn purpose_palette(rng: &mut Rng) -> Vec<PurposeSpec> {
    let mut purposes = vec![PurposeSpec {
        purpose_id: "order_fulfilment".to_string(),
        description: "Deliver purchased goods".to_string(),
        data_categories: ["name", "email_address"]
            .into_iter()
            .map(str::to_string)
            .collect(),
        requires_explicit_ack: false,
    }];
    if rng.chance(50) {
        let mut categories: BTreeSet<String> =
            ["cookie_session_id".to_string()].into_iter().collect();
        if rng.chance(35) {
            // Identifying data under a pseudonymous purpose: over-collection.
            categories.insert("name".to_string());
        }
        purposes.push(PurposeSpec {
            purpose_id: "session_personalization".to_string(),
            description: "Remember the session".to_string(),
            data_categories: categories,
            requires_explicit_ack: false,
        });
    }
    if rng.chance(30) {
        purposes.push(PurposeSpec {
            purpose_id: "payment".to_string(),
            description: "Charge the stored card".to_string(),
            data_categories: ["card_number".to_string()].into_iter().collect(),
            requires_explicit_ack: true,
        });
    }
    purposes
}

fn random_form(rng: &mut Rng, form_id: &str, principal: &str, fiduciary: &str) -> ConsentForm {
    let purposes = purpose_palette(rng);
    let needs_ack = purposes.iter().any(|p| p.requires_explicit_ack);
    let explicit_ack = needs_ack.then(|| concord_core::consent::ExplicitAck {
        affirmation: "sensitive data acknowledged".to_string(),
        acknowledged: purposes
            .iter()
            .filter(|p| p.requires_explicit_ack)
            .map(|p| (p.purpose_id.clone(), true))
            .collect(),
    });
    let mut third_parties = Vec::new();
    if rng.chance(60) {
        third_parties.push(PartyId::new("tp-a"));
    }
    if rng.chance(40) {
        third_parties.push(PartyId::new("tp-b"));
    }
    ConsentForm {
        form_id: form_id.to_string(),
        principal: PartyId::new(principal),
        fiduciary: PartyId::new(fiduciary),
        purposes,
        third_parties,
        retention: if rng.chance(70) {
            Retention::FixedDays(5 + rng.below(55) as u32)
        } else {
            Retention::ReviewIntervalDays(10 + rng.below(50) as u32)
        },
        cross_border: if rng.chance(30) {
            CrossBorder::to("elsewhere")
        } else {
            CrossBorder::forbidden()
        },
        explicit_ack,
        child: None,
    }
}

/// Build a randomized ledger of at most `max_events` entries exercising
/// every checker: clean activity, purpose and category overreach, dangling
/// and stale references, withdrawals with and without propagation, unlisted
/// sharing, cross-border transfers, restrictions, erasures, and breaches.
pub fn compliance_scenario(rng: &mut Rng, max_events: u64) -> ComplianceScenario {
    let mut scenario = Scenario::new();
    let mut consents: Vec<ConsentEvent> = Vec::new();
    let mut ghosts: Vec<ConsentEvent> = Vec::new();
    let mut tips: Vec<ConsentEvent> = Vec::new();
    let mut form_counter = 0u64;
    let budget = 3 + rng.below(max_events.saturating_sub(3).max(1));

    while scenario.ledger.len() < budget {
        scenario.world.tick(600 + rng.below(2 * 86_400) as i64);
        match rng.below(100) {
            // New consent chain.
            0..=17 => {
                form_counter += 1;
                let principal = *rng.pick(&PRINCIPALS);
                let fiduciary = *rng.pick(&FIDUCIARIES);
                let form = random_form(rng, &format!("f-{form_counter}"), principal, fiduciary);
                let (_, event) = scenario.establish_form(form, None);
                consents.push(event.clone());
                tips.push(event);
            }
            // Modify the tip of some chain (keeps criterion-3 ledgers
            // fork-free; forks are criterion 2's subject).
            18..=27 if !tips.is_empty() => {
                let slot = rng.below(tips.len() as u64) as usize;
                let prior = tips[slot].clone();
                form_counter += 1;
                let form = random_form(
                    rng,
                    &format!("f-{form_counter}"),
                    prior.principal().as_str(),
                    prior.fiduciary().as_str(),
                );
                let (_, event) = scenario.modify_form(&prior, form);
                consents.push(event.clone());
                tips[slot] = event;
            }
            // Withdraw a chain; sometimes acknowledge some third parties.
            28..=37 if !tips.is_empty() => {
                let slot = rng.below(tips.len() as u64) as usize;
                let prior = tips.remove(slot);
                let (_, withdrawal) = scenario.withdraw(&prior);
                let listed = withdrawal
                    .notice()
                    .map(|n| n.third_parties.clone())
                    .unwrap_or_default();
                for party in listed {
                    if rng.chance(55) && scenario.ledger.len() < budget {
                        scenario.propagate(&withdrawal, party.as_str());
                    }
                }
                consents.push(withdrawal);
            }
            // A consent event that never reached the ledger: dangling ref bait.
            38..=40 if !tips.is_empty() => {
                let prior = rng.pick(&tips).clone();
                form_counter += 1;
                let form = random_form(
                    rng,
                    &format!("f-ghost-{form_counter}"),
                    prior.principal().as_str(),
                    prior.fiduciary().as_str(),
                );
                let ghost = scenario
                    .world
                    .modify_with(&prior, form, None)
                    .expect("ghost form modifies");
                ghosts.push(ghost);
            }
            // Processing activity.
            41..=78 if !consents.is_empty() => {
                let reference = if !ghosts.is_empty() && rng.chance(8) {
                    rng.pick(&ghosts).clone()
                } else {
                    rng.pick(&consents).clone()
                };
                let actor = match rng.below(10) {
                    0 => "gdf",
                    1 => "tp-a",
                    2 => "stranger",
                    _ => reference.fiduciary().as_str(),
                };
                let purpose = match rng.below(10) {
                    0 => "profiling",
                    1 => "advertising",
                    2..=4 => "session_personalization",
                    5 => "payment",
                    _ => "order_fulfilment",
                };
                let categories: Vec<&str> = match rng.below(10) {
                    0 => vec!["health_record"],
                    1 => vec!["name", "card_number"],
                    2 => vec!["cookie_session_id"],
                    _ => vec!["name"],
                };
                let action = *rng.pick(&[
                    ProcessingAction::Collect,
                    ProcessingAction::Store,
                    ProcessingAction::Analyze,
                    ProcessingAction::Share,
                    ProcessingAction::Disclose,
                    ProcessingAction::TransferCrossBorder,
                ]);
                let counterparty = if action.is_disclosure() {
                    match rng.below(4) {
                        0 => Some("tp-a"),
                        1 => Some("tp-b"),
                        2 => Some("stranger"),
                        _ => None,
                    }
                } else {
                    None
                };
                scenario.process(
                    actor,
                    counterparty,
                    &reference,
                    purpose,
                    &categories,
                    action,
                );
            }
            // Erasure receipts.
            79..=84 => {
                let principal = *rng.pick(&PRINCIPALS);
                let fiduciary = *rng.pick(&FIDUCIARIES);
                let categories: Vec<&str> = match rng.below(3) {
                    0 => vec!["name"],
                    1 => vec!["name", "email_address"],
                    _ => vec!["name", "email_address", "cookie_session_id", "card_number"],
                };
                scenario.erase(principal, fiduciary, &categories);
            }
            // Breach records with assorted timeliness.
            85..=92 => {
                let detected = scenario.world.clock_now() - rng.below(10 * 86_400) as i64;
                let reported = match rng.below(3) {
                    0 => None,
                    1 => Some(detected + rng.below(71 * 3_600) as i64),
                    _ => Some(detected + 73 * 3_600 + rng.below(100_000) as i64),
                };
                let high_risk = rng.chance(40);
                let notified = (high_risk && rng.chance(50)).then(|| detected + 2 * 86_400);
                let fiduciary = *rng.pick(&FIDUCIARIES);
                scenario.breach(
                    fiduciary,
                    BreachDetails {
                        breach_id: format!("b-{}", scenario.ledger.len()),
                        description: "incident".to_string(),
                        categories_affected: ["email_address".to_string()].into_iter().collect(),
                        detected_at: detected,
                        reported_to_authority_at: reported,
                        high_risk,
                        principal_notified_at: notified,
                    },
                );
            }
            // Disclosure restrictions.
            _ => {
                let principal = *rng.pick(&PRINCIPALS);
                let fiduciary = *rng.pick(&FIDUCIARIES);
                scenario.restrict(principal, fiduciary, b"order-ref");
            }
        }
    }

    let as_of = scenario.world.clock_now() + rng.below(60 * 86_400) as i64;
    ComplianceScenario { scenario, as_of }
}
