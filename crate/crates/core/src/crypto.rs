//! Signing identities, signatures, and digests.
//!
//! One signature scheme (Ed25519, tagged `ed25519`) and one digest (SHA-256)
//! are used everywhere. Ed25519 signatures are deterministic, which keeps
//! signed documents byte-stable across runs — a requirement for the
//! replayable golden-file behaviour of the ledger and audit reports.
//!
//! Signing always goes through [`Canonical`] bytes; raw ad-hoc byte signing
//! is deliberately not exposed on [`Signer`].

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;

use ed25519_dalek::{Signer as _, Verifier as _};
use sha2::{Digest as _, Sha256};

use crate::canonical::{Canonical, CanonicalError, FromValue, MapBuilder, MapReader, Value};
use crate::hex;

pub const ALGORITHM_ED25519: &str = "ed25519";

#[derive(Debug, thiserror::Error)]
pub enum CryptoError {
    #[error("unsupported signature algorithm \"{0}\"")]
    UnsupportedAlgorithm(String),
    #[error("invalid public key: {0}")]
    InvalidPublicKey(String),
    #[error("invalid key file {path}: {reason}")]
    InvalidKeyFile { path: String, reason: String },
    #[error("identity \"{party_id}\" does not match the signing key")]
    KeyIdentityMismatch { party_id: String },
    #[error("party id \"{0}\" already registered")]
    DuplicateParty(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Canonical(#[from] CanonicalError),
}

// ---------------------------------------------------------------------------
// Digest
// ---------------------------------------------------------------------------

/// A 256-bit SHA-256 digest.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Digest([u8; 32]);

impl Digest {
    pub const LEN: usize = 32;

    pub fn zero() -> Self {
        Digest([0u8; 32])
    }

    pub fn of_bytes(bytes: &[u8]) -> Self {
        let mut hasher = Sha256::new();
        hasher.update(bytes);
        Digest(hasher.finalize().into())
    }

    /// Digest of a document's canonical bytes.
    pub fn of(doc: &impl Canonical) -> Self {
        Self::of_bytes(&doc.canonical_bytes())
    }

    pub fn from_slice(bytes: &[u8]) -> Result<Self, CanonicalError> {
        let arr: [u8; 32] = bytes.try_into().map_err(|_| {
            CanonicalError::decode(format!("digest must be 32 bytes, got {}", bytes.len()))
        })?;
        Ok(Digest(arr))
    }

    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        hex::encode(&self.0)
    }

    pub fn from_hex(s: &str) -> Result<Self, CanonicalError> {
        let bytes = hex::decode(s).map_err(|e| CanonicalError::decode(e.to_string()))?;
        Self::from_slice(&bytes)
    }

    pub fn to_value(&self) -> Value {
        Value::bytes(self.0.to_vec())
    }

    pub fn from_value(value: &Value) -> Result<Self, CanonicalError> {
        Self::from_slice(value.as_bytes()?)
    }
}

impl fmt::Debug for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Digest({})", &self.to_hex()[..16])
    }
}

impl fmt::Display for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

// ---------------------------------------------------------------------------
// Parties
// ---------------------------------------------------------------------------

/// Opaque party identifier, unique within one ledger instance.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PartyId(String);

impl PartyId {
    pub fn new(id: impl Into<String>) -> Self {
        PartyId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for PartyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for PartyId {
    fn from(s: &str) -> Self {
        PartyId::new(s)
    }
}

/// Role a party plays; immutable after creation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Role {
    Principal,
    Fiduciary,
    Processor,
    ThirdParty,
    Auditor,
    Authority,
    Guardian,
    Tsa,
}

impl Role {
    pub const ALL: [Role; 8] = [
        Role::Principal,
        Role::Fiduciary,
        Role::Processor,
        Role::ThirdParty,
        Role::Auditor,
        Role::Authority,
        Role::Guardian,
        Role::Tsa,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Role::Principal => "PRINCIPAL",
            Role::Fiduciary => "FIDUCIARY",
            Role::Processor => "PROCESSOR",
            Role::ThirdParty => "THIRD_PARTY",
            Role::Auditor => "AUDITOR",
            Role::Authority => "AUTHORITY",
            Role::Guardian => "GUARDIAN",
            Role::Tsa => "TSA",
        }
    }

    pub fn parse(s: &str) -> Result<Self, CanonicalError> {
        Role::ALL
            .into_iter()
            .find(|r| r.as_str() == s)
            .ok_or_else(|| CanonicalError::decode(format!("unknown role \"{s}\"")))
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Public signing identity of a party.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PartyIdentity {
    party_id: PartyId,
    role: Role,
    public_key: [u8; 32],
    fingerprint: Digest,
}

impl PartyIdentity {
    pub fn new(party_id: PartyId, role: Role, public_key: [u8; 32]) -> Result<Self, CryptoError> {
        // Reject byte strings that are not points on the curve up front.
        ed25519_dalek::VerifyingKey::from_bytes(&public_key)
            .map_err(|e| CryptoError::InvalidPublicKey(e.to_string()))?;
        let fingerprint = Digest::of_bytes(&public_key);
        Ok(Self {
            party_id,
            role,
            public_key,
            fingerprint,
        })
    }

    pub fn party_id(&self) -> &PartyId {
        &self.party_id
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn public_key(&self) -> &[u8; 32] {
        &self.public_key
    }

    pub fn fingerprint(&self) -> &Digest {
        &self.fingerprint
    }

    /// Verify `sig` over `payload`. `Ok(false)` is a failed verdict; `Err` is
    /// a malformed input (wrong algorithm, unusable key material).
    pub fn verify(&self, payload: &[u8], sig: &Signature) -> Result<bool, CryptoError> {
        if sig.algorithm_id != ALGORITHM_ED25519 {
            return Err(CryptoError::UnsupportedAlgorithm(sig.algorithm_id.clone()));
        }
        if sig.signer_fingerprint != self.fingerprint {
            return Ok(false);
        }
        let key = ed25519_dalek::VerifyingKey::from_bytes(&self.public_key)
            .map_err(|e| CryptoError::InvalidPublicKey(e.to_string()))?;
        let signature = ed25519_dalek::Signature::from_bytes(&sig.bytes);
        Ok(key.verify(payload, &signature).is_ok())
    }
}

impl Canonical for PartyIdentity {
    fn to_value(&self) -> Value {
        MapBuilder::new()
            .field("fingerprint", self.fingerprint.to_value())
            .field("party_id", Value::str(self.party_id.as_str()))
            .field("public_key", Value::bytes(self.public_key.to_vec()))
            .field("role", Value::str(self.role.as_str()))
            .build()
    }
}

impl FromValue for PartyIdentity {
    fn from_value(value: &Value) -> Result<Self, CanonicalError> {
        let mut r = MapReader::new(value)?;
        let fingerprint = Digest::from_value(r.required("fingerprint")?)?;
        let party_id = PartyId::new(r.string("party_id")?);
        let public_key: [u8; 32] = r
            .bytes("public_key")?
            .try_into()
            .map_err(|_| CanonicalError::decode("public key must be 32 bytes"))?;
        let role = Role::parse(r.str("role")?)?;
        r.finish()?;
        let identity = PartyIdentity::new(party_id, role, public_key)
            .map_err(|e| CanonicalError::decode(e.to_string()))?;
        if identity.fingerprint != fingerprint {
            return Err(CanonicalError::decode(
                "fingerprint does not match public key",
            ));
        }
        Ok(identity)
    }
}

// ---------------------------------------------------------------------------
// Signatures and private keys
// ---------------------------------------------------------------------------

/// Detached signature with enough context to locate the signer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Signature {
    pub signer_fingerprint: Digest,
    pub algorithm_id: String,
    pub bytes: [u8; 64],
}

impl Canonical for Signature {
    fn to_value(&self) -> Value {
        MapBuilder::new()
            .field("algorithm", Value::str(&self.algorithm_id))
            .field("signer", self.signer_fingerprint.to_value())
            .field("value", Value::bytes(self.bytes.to_vec()))
            .build()
    }
}

impl FromValue for Signature {
    fn from_value(value: &Value) -> Result<Self, CanonicalError> {
        let mut r = MapReader::new(value)?;
        let algorithm_id = r.string("algorithm")?;
        let signer_fingerprint = Digest::from_value(r.required("signer")?)?;
        let bytes: [u8; 64] = r
            .bytes("value")?
            .try_into()
            .map_err(|_| CanonicalError::decode("signature must be 64 bytes"))?;
        r.finish()?;
        Ok(Signature {
            signer_fingerprint,
            algorithm_id,
            bytes,
        })
    }
}

/// Private key material. Never serialized implicitly; `Debug` shows only the
/// fingerprint.
pub struct SecretKey {
    inner: ed25519_dalek::SigningKey,
}

impl SecretKey {
    pub fn generate() -> Self {
        let mut seed = [0u8; 32];
        getrandom::getrandom(&mut seed).expect("operating system RNG unavailable");
        Self::from_seed(seed)
    }

    pub fn from_seed(seed: [u8; 32]) -> Self {
        SecretKey {
            inner: ed25519_dalek::SigningKey::from_bytes(&seed),
        }
    }

    pub fn seed(&self) -> [u8; 32] {
        self.inner.to_bytes()
    }

    pub fn public_key(&self) -> [u8; 32] {
        self.inner.verifying_key().to_bytes()
    }

    pub fn fingerprint(&self) -> Digest {
        Digest::of_bytes(&self.public_key())
    }

    pub fn sign_bytes(&self, payload: &[u8]) -> Signature {
        let sig = self.inner.sign(payload);
        Signature {
            signer_fingerprint: self.fingerprint(),
            algorithm_id: ALGORITHM_ED25519.to_string(),
            bytes: sig.to_bytes(),
        }
    }
}

impl fmt::Debug for SecretKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SecretKey({})", &self.fingerprint().to_hex()[..16])
    }
}

impl Clone for SecretKey {
    fn clone(&self) -> Self {
        SecretKey::from_seed(self.seed())
    }
}

/// An identity together with its private key: what a party needs to sign.
pub struct Signer<'a> {
    pub identity: &'a PartyIdentity,
    pub key: &'a SecretKey,
}

impl<'a> Signer<'a> {
    pub fn new(identity: &'a PartyIdentity, key: &'a SecretKey) -> Result<Self, CryptoError> {
        if key.public_key() != *identity.public_key() {
            return Err(CryptoError::KeyIdentityMismatch {
                party_id: identity.party_id.as_str().to_string(),
            });
        }
        Ok(Signer { identity, key })
    }

    pub fn party_id(&self) -> &PartyId {
        &self.identity.party_id
    }

    /// Sign a document's canonical bytes.
    pub fn sign(&self, doc: &impl Canonical) -> Signature {
        self.key.sign_bytes(&doc.canonical_bytes())
    }
}

/// Generate a fresh identity and its private key.
pub fn generate_identity(party_id: PartyId, role: Role) -> (PartyIdentity, SecretKey) {
    let key = SecretKey::generate();
    let identity = PartyIdentity::new(party_id, role, key.public_key())
        .expect("freshly generated key is a valid curve point");
    (identity, key)
}

/// Deterministic variant for fixtures and replayable runs.
pub fn identity_from_seed(
    party_id: PartyId,
    role: Role,
    seed: [u8; 32],
) -> (PartyIdentity, SecretKey) {
    let key = SecretKey::from_seed(seed);
    let identity = PartyIdentity::new(party_id, role, key.public_key())
        .expect("derived key is a valid curve point");
    (identity, key)
}

// ---------------------------------------------------------------------------
// Party directory
// ---------------------------------------------------------------------------

/// All identities known to a ledger instance, keyed by party id and by key
/// fingerprint. Party ids are unique; registering a second identity under an
/// existing id fails.
#[derive(Debug, Default, Clone)]
pub struct PartyDirectory {
    by_id: BTreeMap<PartyId, PartyIdentity>,
}

impl PartyDirectory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, identity: PartyIdentity) -> Result<(), CryptoError> {
        if self.by_id.contains_key(&identity.party_id) {
            return Err(CryptoError::DuplicateParty(
                identity.party_id.as_str().to_string(),
            ));
        }
        self.by_id.insert(identity.party_id.clone(), identity);
        Ok(())
    }

    pub fn get(&self, party_id: &PartyId) -> Option<&PartyIdentity> {
        self.by_id.get(party_id)
    }

    pub fn by_fingerprint(&self, fingerprint: &Digest) -> Option<&PartyIdentity> {
        self.by_id.values().find(|i| i.fingerprint == *fingerprint)
    }

    pub fn iter(&self) -> impl Iterator<Item = &PartyIdentity> {
        self.by_id.values()
    }

    /// Verify a signature attributed to `party_id` over `payload`.
    pub fn verify_as(
        &self,
        party_id: &PartyId,
        payload: &[u8],
        sig: &Signature,
    ) -> Result<bool, CryptoError> {
        match self.get(party_id) {
            Some(identity) => identity.verify(payload, sig),
            None => Ok(false),
        }
    }
}

// ---------------------------------------------------------------------------
// Key files
// ---------------------------------------------------------------------------
//
// A party is stored as two files in the key directory:
//   <name>.key       line 1: algorithm id, line 2: hex private seed
//   <name>.identity  line 1: algorithm id, line 2: hex canonical identity

pub fn save_secret_key(path: &Path, key: &SecretKey) -> Result<(), CryptoError> {
    let body = format!("{}\n{}\n", ALGORITHM_ED25519, hex::encode(&key.seed()));
    fs::write(path, body).map_err(|e| CryptoError::Io {
        path: path.display().to_string(),
        source: e,
    })
}

pub fn load_secret_key(path: &Path) -> Result<SecretKey, CryptoError> {
    let text = fs::read_to_string(path).map_err(|e| CryptoError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    let (algorithm, payload) = split_key_file(path, &text)?;
    if algorithm != ALGORITHM_ED25519 {
        return Err(CryptoError::UnsupportedAlgorithm(algorithm.to_string()));
    }
    let bytes = hex::decode(payload).map_err(|e| CryptoError::InvalidKeyFile {
        path: path.display().to_string(),
        reason: e.to_string(),
    })?;
    let seed: [u8; 32] = bytes.try_into().map_err(|_| CryptoError::InvalidKeyFile {
        path: path.display().to_string(),
        reason: "private key must be 32 bytes".to_string(),
    })?;
    Ok(SecretKey::from_seed(seed))
}

pub fn save_identity(path: &Path, identity: &PartyIdentity) -> Result<(), CryptoError> {
    let body = format!(
        "{}\n{}\n",
        ALGORITHM_ED25519,
        hex::encode(&identity.canonical_bytes())
    );
    fs::write(path, body).map_err(|e| CryptoError::Io {
        path: path.display().to_string(),
        source: e,
    })
}

pub fn load_identity(path: &Path) -> Result<PartyIdentity, CryptoError> {
    let text = fs::read_to_string(path).map_err(|e| CryptoError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    let (algorithm, payload) = split_key_file(path, &text)?;
    if algorithm != ALGORITHM_ED25519 {
        return Err(CryptoError::UnsupportedAlgorithm(algorithm.to_string()));
    }
    let bytes = hex::decode(payload).map_err(|e| CryptoError::InvalidKeyFile {
        path: path.display().to_string(),
        reason: e.to_string(),
    })?;
    let value = Value::parse(&bytes)?;
    Ok(PartyIdentity::from_value(&value)?)
}

fn split_key_file<'a>(path: &Path, text: &'a str) -> Result<(&'a str, &'a str), CryptoError> {
    let mut lines = text.lines();
    match (lines.next(), lines.next()) {
        (Some(header), Some(payload)) => Ok((header.trim(), payload.trim())),
        _ => Err(CryptoError::InvalidKeyFile {
            path: path.display().to_string(),
            reason: "expected a header line and a payload line".to_string(),
        }),
    }
}
