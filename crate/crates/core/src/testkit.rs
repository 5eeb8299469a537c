//! Deterministic fixtures shared by the unit and acceptance test suites.
//!
//! `World` wires up a cast of seeded identities, a fixed clock, a timestamp
//! authority, and the default taxonomy, and offers shortcuts for the common
//! lifecycle moves. Everything is reproducible: same calls, same bytes.

use std::collections::{BTreeMap, BTreeSet};

use crate::clock::FixedClock;
use crate::consent::{
    establish, modify, record_propagation, withdraw, ConsentError, ConsentEvent, ConsentForm,
    CrossBorder, PurposeSpec, Retention, WithdrawalPropagation,
};
use crate::crypto::{
    identity_from_seed, Digest, PartyDirectory, PartyId, PartyIdentity, Role, SecretKey, Signer,
};
use crate::ledger::{Ledger, Payload};
use crate::minimization::Taxonomy;
use crate::records::{
    record_breach, record_correction, record_erasure, record_processing, record_restriction,
    BreachDetails, ProcessingAction, ProcessingEvent,
};
use crate::tsa::TimestampAuthority;

/// An identity with its private key, owned so callers can hold several at
/// once while mutating the world.
pub struct Party {
    pub identity: PartyIdentity,
    pub key: SecretKey,
}

impl Party {
    pub fn signer(&self) -> Signer<'_> {
        Signer::new(&self.identity, &self.key).expect("party key matches its identity")
    }
}

pub const START_TIME: i64 = 1_700_000_000;

/// The standing cast: two principals, two fiduciaries, two listed third
/// parties, an auditor, an authority, a guardian, a guardian data fiduciary,
/// an unlisted stranger, and the timestamp authority.
pub const CAST: [(&str, Role); 11] = [
    ("alice", Role::Principal),
    ("bob", Role::Principal),
    ("shop", Role::Fiduciary),
    ("bank", Role::Fiduciary),
    ("gdf", Role::Fiduciary),
    ("tp-a", Role::ThirdParty),
    ("tp-b", Role::ThirdParty),
    ("stranger", Role::ThirdParty),
    ("auditor", Role::Auditor),
    ("guardian", Role::Guardian),
    ("dpai", Role::Authority),
];

pub struct World {
    pub taxonomy: Taxonomy,
    pub directory: PartyDirectory,
    pub tsa: TimestampAuthority,
    pub clock: FixedClock,
    keys: BTreeMap<String, SecretKey>,
}

impl Default for World {
    fn default() -> Self {
        Self::new()
    }
}

impl World {
    pub fn new() -> Self {
        let mut directory = PartyDirectory::new();
        let mut keys = BTreeMap::new();
        for (index, (name, role)) in CAST.iter().enumerate() {
            let mut seed = [0u8; 32];
            seed[0] = (index + 1) as u8;
            seed[1] = 0xa5;
            let (identity, key) = identity_from_seed(PartyId::new(*name), *role, seed);
            directory.register(identity).expect("cast names are unique");
            keys.insert(name.to_string(), key);
        }
        let (tsa_identity, tsa_key) =
            identity_from_seed(PartyId::new("tsa"), Role::Tsa, [0xee; 32]);
        directory
            .register(tsa_identity.clone())
            .expect("tsa name is unique");
        let tsa = TimestampAuthority::new(tsa_identity, tsa_key).expect("tsa key matches");
        World {
            taxonomy: Taxonomy::default_table(),
            directory,
            tsa,
            clock: FixedClock::at(START_TIME),
            keys,
        }
    }

    pub fn identity(&self, name: &str) -> &PartyIdentity {
        self.directory
            .get(&PartyId::new(name))
            .unwrap_or_else(|| panic!("no such party \"{name}\""))
    }

    pub fn party(&self, name: &str) -> Party {
        let identity = self.identity(name).clone();
        let key = self
            .keys
            .get(name)
            .unwrap_or_else(|| panic!("no key for \"{name}\""))
            .clone();
        Party { identity, key }
    }

    pub fn tick(&self, seconds: i64) {
        self.clock.advance(seconds);
    }

    pub fn clock_now(&self) -> i64 {
        use crate::clock::Clock;
        self.clock.now_unix()
    }

    /// Plain adult form: alice consents to shop for order fulfilment over
    /// identifying categories, shared with tp-a and tp-b, 30-day retention.
    pub fn basic_form(&self, form_id: &str) -> ConsentForm {
        ConsentForm {
            form_id: form_id.to_string(),
            principal: PartyId::new("alice"),
            fiduciary: PartyId::new("shop"),
            purposes: vec![PurposeSpec {
                purpose_id: "order_fulfilment".to_string(),
                description: "Deliver purchased goods".to_string(),
                data_categories: ["name", "email_address", "postal_address"]
                    .into_iter()
                    .map(str::to_string)
                    .collect(),
                requires_explicit_ack: false,
            }],
            third_parties: vec![PartyId::new("tp-a"), PartyId::new("tp-b")],
            retention: Retention::FixedDays(30),
            cross_border: CrossBorder::forbidden(),
            explicit_ack: None,
            child: None,
        }
    }

    pub fn establish_with(
        &mut self,
        form: ConsentForm,
        guardian: Option<&str>,
    ) -> Result<ConsentEvent, ConsentError> {
        self.tick(1);
        let principal = self.party(form.principal.as_str());
        let fiduciary = self.party(form.fiduciary.as_str());
        let guardian = guardian.map(|name| self.party(name));
        let guardian_signer = guardian.as_ref().map(|p| p.signer());
        establish(
            form,
            &self.taxonomy,
            &principal.signer(),
            &fiduciary.signer(),
            guardian_signer.as_ref(),
            &mut self.tsa,
            &self.clock,
        )
    }

    pub fn establish(&mut self, form_id: &str) -> ConsentEvent {
        let form = self.basic_form(form_id);
        self.establish_with(form, None)
            .expect("basic form establishes")
    }

    pub fn modify_with(
        &mut self,
        prior: &ConsentEvent,
        form: ConsentForm,
        guardian: Option<&str>,
    ) -> Result<ConsentEvent, ConsentError> {
        self.tick(1);
        let principal = self.party(form.principal.as_str());
        let fiduciary = self.party(form.fiduciary.as_str());
        let guardian = guardian.map(|name| self.party(name));
        let guardian_signer = guardian.as_ref().map(|p| p.signer());
        modify(
            prior,
            form,
            &self.taxonomy,
            &principal.signer(),
            &fiduciary.signer(),
            guardian_signer.as_ref(),
            &mut self.tsa,
            &self.clock,
        )
    }

    pub fn modify(&mut self, prior: &ConsentEvent, form_id: &str) -> ConsentEvent {
        let form = self.basic_form(form_id);
        self.modify_with(prior, form, None)
            .expect("basic form modifies")
    }

    pub fn withdraw_res(&mut self, prior: &ConsentEvent) -> Result<ConsentEvent, ConsentError> {
        self.tick(1);
        let principal = self.party(prior.principal().as_str());
        let fiduciary = self.party(prior.fiduciary().as_str());
        withdraw(
            prior,
            &principal.signer(),
            &fiduciary.signer(),
            &mut self.tsa,
            &self.clock,
        )
    }

    pub fn withdraw(&mut self, prior: &ConsentEvent) -> ConsentEvent {
        self.withdraw_res(prior).expect("withdrawal succeeds")
    }

    pub fn propagate(
        &mut self,
        withdrawal: &ConsentEvent,
        third_party: &str,
    ) -> Result<WithdrawalPropagation, ConsentError> {
        self.tick(1);
        let party = self.party(third_party);
        record_propagation(withdrawal, &party.signer(), &mut self.tsa, &self.clock)
    }
}

/// A world plus a growing ledger: the shape most scenario tests need.
pub struct Scenario {
    pub world: World,
    pub ledger: Ledger,
}

impl Default for Scenario {
    fn default() -> Self {
        Self::new()
    }
}

impl Scenario {
    pub fn new() -> Self {
        Scenario {
            world: World::new(),
            ledger: Ledger::new(),
        }
    }

    fn append(&mut self, payload: Payload) -> u64 {
        self.ledger
            .append(payload, &self.world.directory)
            .expect("scenario payloads are valid")
            .index
    }

    pub fn establish(&mut self, form_id: &str) -> (u64, ConsentEvent) {
        let event = self.world.establish(form_id);
        (self.append(Payload::Consent(event.clone())), event)
    }

    pub fn establish_form(
        &mut self,
        form: ConsentForm,
        guardian: Option<&str>,
    ) -> (u64, ConsentEvent) {
        let event = self
            .world
            .establish_with(form, guardian)
            .expect("scenario form establishes");
        (self.append(Payload::Consent(event.clone())), event)
    }

    pub fn modify(&mut self, prior: &ConsentEvent, form_id: &str) -> (u64, ConsentEvent) {
        let event = self.world.modify(prior, form_id);
        (self.append(Payload::Consent(event.clone())), event)
    }

    pub fn modify_form(&mut self, prior: &ConsentEvent, form: ConsentForm) -> (u64, ConsentEvent) {
        let event = self
            .world
            .modify_with(prior, form, None)
            .expect("scenario form modifies");
        (self.append(Payload::Consent(event.clone())), event)
    }

    pub fn withdraw(&mut self, prior: &ConsentEvent) -> (u64, ConsentEvent) {
        let event = self.world.withdraw(prior);
        (self.append(Payload::Consent(event.clone())), event)
    }

    pub fn propagate(&mut self, withdrawal: &ConsentEvent, third_party: &str) -> u64 {
        let receipt = self
            .world
            .propagate(withdrawal, third_party)
            .expect("scenario propagation is for a listed party");
        self.append(Payload::Propagation(receipt))
    }

    /// Record a processing event by `actor`, optionally towards a
    /// counterparty, referencing `consent`.
    pub fn process(
        &mut self,
        actor: &str,
        counterparty: Option<&str>,
        consent: &ConsentEvent,
        purpose: &str,
        categories: &[&str],
        action: ProcessingAction,
    ) -> (u64, ProcessingEvent) {
        self.world.tick(1);
        let party = self.world.party(actor);
        let event = record_processing(
            format!("p-{}", self.world.tsa.last_sequence() + 1),
            &party.signer(),
            counterparty.map(PartyId::new),
            consent.digest(),
            purpose,
            categories.iter().map(|s| s.to_string()).collect(),
            action,
            &mut self.world.tsa,
            &self.world.clock,
        )
        .expect("scenario processing event is well-formed");
        (self.append(Payload::Processing(event.clone())), event)
    }

    pub fn erase(&mut self, principal: &str, fiduciary: &str, categories: &[&str]) -> u64 {
        self.world.tick(1);
        let party = self.world.party(fiduciary);
        let receipt = record_erasure(
            PartyId::new(principal),
            &party.signer(),
            categories.iter().map(|s| s.to_string()).collect(),
            "storage overwritten",
            &mut self.world.tsa,
            &self.world.clock,
        )
        .expect("scenario erasure is well-formed");
        self.append(Payload::Erasure(receipt))
    }

    pub fn breach(&mut self, fiduciary: &str, details: BreachDetails) -> u64 {
        let party = self.world.party(fiduciary);
        let record =
            record_breach(details, &party.signer()).expect("scenario breach is well-formed");
        self.append(Payload::Breach(record))
    }

    pub fn restrict(&mut self, principal: &str, fiduciary: &str, order: &[u8]) -> u64 {
        self.world.tick(1);
        let party = self.world.party(fiduciary);
        let marker = record_restriction(
            PartyId::new(principal),
            &party.signer(),
            Some(Digest::of_bytes(order)),
            &mut self.world.tsa,
            &self.world.clock,
        )
        .expect("scenario restriction is well-formed");
        self.append(Payload::Restriction(marker))
    }

    pub fn correct(&mut self, principal: &str, fiduciary: &str, field_path: &str) -> u64 {
        self.world.tick(1);
        let p = self.world.party(principal);
        let f = self.world.party(fiduciary);
        let seq = self.world.tsa.last_sequence();
        let event = record_correction(
            &p.signer(),
            &f.signer(),
            field_path,
            Digest::of_bytes(format!("old-{seq}").as_bytes()),
            Digest::of_bytes(format!("new-{seq}").as_bytes()),
            &mut self.world.tsa,
            &self.world.clock,
        )
        .expect("scenario correction is well-formed");
        self.append(Payload::Correction(event))
    }

    pub fn anchor(&mut self, fiduciary: &str) -> u64 {
        let party = self.world.party(fiduciary);
        self.ledger
            .anchor(&party.signer(), None, &self.world.directory)
            .expect("scenario chain anchors");
        self.ledger.len() - 1
    }

    /// Guardian-fiduciary set used in scenarios that exercise children
    /// protections.
    pub fn guardian_fiduciaries() -> BTreeSet<PartyId> {
        [PartyId::new("gdf")].into_iter().collect()
    }
}
