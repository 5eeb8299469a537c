//! Loading and saving the working state behind the CLI: key files, the
//! party directory, the timestamp authority counter, the ledger, taxonomy,
//! and audit configuration.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use concord_core::audit::AuditConfig;
use concord_core::canonical::{FromValue, MapBuilder, MapReader, Value};
use concord_core::crypto::{
    load_identity, load_secret_key, save_identity, save_secret_key, PartyDirectory, PartyId,
    PartyIdentity, Role, SecretKey,
};
use concord_core::ledger::Ledger;
use concord_core::minimization::Taxonomy;
use concord_core::tsa::TimestampAuthority;

use crate::config::ToolConfig;

pub fn key_path(config: &ToolConfig, party: &str) -> PathBuf {
    config.key_dir.join(format!("{party}.key"))
}

pub fn identity_path(config: &ToolConfig, party: &str) -> PathBuf {
    config.key_dir.join(format!("{party}.identity"))
}

fn tsa_state_path(config: &ToolConfig) -> PathBuf {
    config.key_dir.join("tsa.state")
}

/// A loaded identity with its private key, owned by the CLI process.
pub struct KeyedParty {
    pub identity: PartyIdentity,
    pub key: SecretKey,
}

impl KeyedParty {
    pub fn signer(&self) -> concord_core::crypto::Signer<'_> {
        concord_core::crypto::Signer::new(&self.identity, &self.key)
            .expect("key file matches its identity file")
    }
}

pub fn load_party(config: &ToolConfig, party: &str) -> Result<KeyedParty> {
    let identity = load_identity(&identity_path(config, party)).with_context(|| {
        format!(
            "no identity file for \"{party}\" in {}",
            config.key_dir.display()
        )
    })?;
    let key = load_secret_key(&key_path(config, party)).with_context(|| {
        format!(
            "no key file for \"{party}\" in {}",
            config.key_dir.display()
        )
    })?;
    if key.public_key() != *identity.public_key() {
        bail!("key and identity files for \"{party}\" do not match");
    }
    Ok(KeyedParty { identity, key })
}

/// Every `*.identity` file in the key directory.
pub fn load_directory(config: &ToolConfig) -> Result<PartyDirectory> {
    let mut directory = PartyDirectory::new();
    let entries = fs::read_dir(&config.key_dir)
        .with_context(|| format!("cannot read key directory {}", config.key_dir.display()))?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().map(|x| x == "identity").unwrap_or(false))
        .collect();
    paths.sort();
    for path in paths {
        let identity = load_identity(&path)
            .with_context(|| format!("invalid identity file {}", path.display()))?;
        directory
            .register(identity)
            .map_err(|e| anyhow!("{e} (while loading {})", path.display()))?;
    }
    Ok(directory)
}

/// Create and store a fresh (or seed-derived) party.
pub fn create_party(
    config: &ToolConfig,
    party: &str,
    role: Role,
    seed: Option<[u8; 32]>,
) -> Result<PartyIdentity> {
    fs::create_dir_all(&config.key_dir)
        .with_context(|| format!("cannot create key directory {}", config.key_dir.display()))?;
    let key_file = key_path(config, party);
    let identity_file = identity_path(config, party);
    if key_file.exists() || identity_file.exists() {
        bail!(
            "party \"{party}\" already has key material in {}",
            config.key_dir.display()
        );
    }
    let (identity, key) = match seed {
        Some(seed) => concord_core::crypto::identity_from_seed(PartyId::new(party), role, seed),
        None => concord_core::crypto::generate_identity(PartyId::new(party), role),
    };
    save_secret_key(&key_file, &key)?;
    save_identity(&identity_file, &identity)?;
    Ok(identity)
}

/// The timestamp authority, rebuilt from its key files and persisted
/// counter. The party named `tsa` is the authority.
pub fn load_tsa(config: &ToolConfig) -> Result<TimestampAuthority> {
    let party = load_party(config, "tsa").context(
        "the timestamp authority needs a \"tsa\" party (run: concord keygen --id tsa --role tsa)",
    )?;
    if party.identity.role() != Role::Tsa {
        bail!(
            "the \"tsa\" party has role {}, expected TSA",
            party.identity.role()
        );
    }
    let state_path = tsa_state_path(config);
    let (last_sequence, last_wall_time) = if state_path.exists() {
        let bytes = fs::read(&state_path)
            .with_context(|| format!("cannot read {}", state_path.display()))?;
        let trimmed = bytes.strip_suffix(b"\n").unwrap_or(&bytes);
        let value = Value::parse(trimmed).context("corrupt tsa.state")?;
        let mut r = MapReader::new(&value)?;
        let last_sequence = r.u64("last_sequence")?;
        let last_wall_time = r.int("last_wall_time")?;
        r.finish()?;
        (last_sequence, last_wall_time)
    } else {
        (0, i64::MIN)
    };
    Ok(TimestampAuthority::resume(
        party.identity,
        party.key,
        last_sequence,
        last_wall_time,
    )?)
}

pub fn save_tsa_state(config: &ToolConfig, tsa: &TimestampAuthority) -> Result<()> {
    let value = MapBuilder::new()
        .field("last_sequence", Value::uint(tsa.last_sequence()))
        .field("last_wall_time", Value::int(tsa.last_wall_time()))
        .build();
    let mut bytes = value.encode();
    bytes.push(b'\n');
    let path = tsa_state_path(config);
    fs::write(&path, bytes).with_context(|| format!("cannot write {}", path.display()))
}

/// Load the ledger; a missing file is an empty ledger.
pub fn load_ledger(config: &ToolConfig) -> Result<Ledger, concord_core::ledger::LedgerError> {
    if config.ledger_path.exists() {
        Ledger::load(&config.ledger_path)
    } else {
        Ok(Ledger::new())
    }
}

pub fn load_taxonomy(config: &ToolConfig) -> Result<Taxonomy> {
    match &config.taxonomy_path {
        Some(path) => {
            let text = fs::read_to_string(path)
                .with_context(|| format!("cannot read taxonomy {}", path.display()))?;
            Taxonomy::parse_config(&text).map_err(|e| anyhow!("{e}"))
        }
        None => Ok(Taxonomy::default_table()),
    }
}

pub fn load_audit_config(config: &ToolConfig, explicit: Option<&Path>) -> Result<AuditConfig> {
    let path = explicit
        .map(Path::to_path_buf)
        .or_else(|| config.audit_config_path.clone());
    match path {
        Some(path) => {
            let text = fs::read_to_string(&path)
                .with_context(|| format!("cannot read audit config {}", path.display()))?;
            AuditConfig::parse_config(&text).map_err(|e| anyhow!("{e}"))
        }
        None => Ok(AuditConfig::default()),
    }
}

/// Read a whole file of canonical bytes (one value, optional trailing
/// newline) and decode it.
pub fn read_canonical<T: FromValue>(path: &Path) -> Result<T> {
    let bytes = fs::read(path).with_context(|| format!("cannot read {}", path.display()))?;
    let trimmed = bytes.strip_suffix(b"\n").unwrap_or(&bytes);
    let value =
        Value::parse(trimmed).with_context(|| format!("{} is not canonical", path.display()))?;
    T::from_value(&value).map_err(|e| anyhow!("{}: {e}", path.display()))
}

/// Write a canonical document plus trailing newline.
pub fn write_canonical(path: &Path, doc: &impl concord_core::canonical::Canonical) -> Result<()> {
    let mut bytes = doc.canonical_bytes();
    bytes.push(b'\n');
    fs::write(path, bytes).with_context(|| format!("cannot write {}", path.display()))
}
