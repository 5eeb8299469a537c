//! Tool configuration: where the keys, ledger, taxonomy, and audit config
//! live, and which clock the run uses.
//!
//! Sources, in priority order: command-line flags, environment variables
//! (`CONCORD_CONFIG` for the config file, `CONCORD_KEY_DIR` for the key
//! directory), the config file itself, then defaults. The config file is
//! line-oriented:
//!
//! ```text
//! key_dir keys
//! ledger ledger.cl
//! taxonomy taxonomy.cfg
//! audit_config audit.cfg
//! clock fixed 1700000000      # or: clock real
//! ```
//!
//! A fixed clock makes every subcommand replayable end to end.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use concord_core::clock::{Clock, FixedClock, SystemClock};

pub const CONFIG_ENV: &str = "CONCORD_CONFIG";
pub const KEY_DIR_ENV: &str = "CONCORD_KEY_DIR";

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ClockMode {
    Real,
    Fixed(i64),
}

#[derive(Debug, Clone)]
pub struct ToolConfig {
    pub key_dir: PathBuf,
    pub ledger_path: PathBuf,
    pub taxonomy_path: Option<PathBuf>,
    pub audit_config_path: Option<PathBuf>,
    pub clock_mode: ClockMode,
}

impl Default for ToolConfig {
    fn default() -> Self {
        ToolConfig {
            key_dir: PathBuf::from("keys"),
            ledger_path: PathBuf::from("ledger.cl"),
            taxonomy_path: None,
            audit_config_path: None,
            clock_mode: ClockMode::Real,
        }
    }
}

impl ToolConfig {
    pub fn parse_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config file {}", path.display()))?;
        let mut config = ToolConfig::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut parts = line.split_whitespace();
            let directive = parts.next().expect("non-empty line");
            let arg = parts.next();
            match (directive, arg) {
                ("key_dir", Some(v)) => config.key_dir = PathBuf::from(v),
                ("ledger", Some(v)) => config.ledger_path = PathBuf::from(v),
                ("taxonomy", Some(v)) => config.taxonomy_path = Some(PathBuf::from(v)),
                ("audit_config", Some(v)) => config.audit_config_path = Some(PathBuf::from(v)),
                ("clock", Some("real")) => config.clock_mode = ClockMode::Real,
                ("clock", Some("fixed")) => {
                    let instant = parts.next().and_then(|s| s.parse().ok()).with_context(|| {
                        format!("line {}: fixed clock needs unix seconds", idx + 1)
                    })?;
                    config.clock_mode = ClockMode::Fixed(instant);
                }
                (directive, _) => {
                    bail!(
                        "config line {}: unknown or incomplete directive \"{directive}\"",
                        idx + 1
                    )
                }
            }
        }
        config.validate()?;
        Ok(config)
    }

    /// The startup contract: any explicitly referenced file must exist.
    pub fn validate(&self) -> Result<()> {
        if let Some(path) = &self.taxonomy_path {
            if !path.exists() {
                bail!("configured taxonomy file {} does not exist", path.display());
            }
        }
        if let Some(path) = &self.audit_config_path {
            if !path.exists() {
                bail!("configured audit config {} does not exist", path.display());
            }
        }
        Ok(())
    }

    pub fn clock(&self) -> Box<dyn Clock> {
        match self.clock_mode {
            ClockMode::Real => Box::new(SystemClock),
            ClockMode::Fixed(at) => Box::new(FixedClock::at(at)),
        }
    }
}

/// Resolve the effective configuration from flags, environment, and file.
pub fn resolve(
    config_flag: Option<&Path>,
    key_dir_flag: Option<&Path>,
    ledger_flag: Option<&Path>,
    clock_flag: Option<&str>,
) -> Result<ToolConfig> {
    let file = match config_flag {
        Some(path) => Some(path.to_path_buf()),
        None => std::env::var_os(CONFIG_ENV).map(PathBuf::from),
    };
    let mut config = match file {
        Some(path) => ToolConfig::parse_file(&path)?,
        None => ToolConfig::default(),
    };
    if let Some(dir) = std::env::var_os(KEY_DIR_ENV) {
        config.key_dir = PathBuf::from(dir);
    }
    if let Some(dir) = key_dir_flag {
        config.key_dir = dir.to_path_buf();
    }
    if let Some(path) = ledger_flag {
        config.ledger_path = path.to_path_buf();
    }
    if let Some(spec) = clock_flag {
        config.clock_mode = parse_clock(spec)?;
    }
    Ok(config)
}

pub fn parse_clock(spec: &str) -> Result<ClockMode> {
    if spec == "real" {
        return Ok(ClockMode::Real);
    }
    if let Some(rest) = spec.strip_prefix("fixed:") {
        let instant: i64 = rest
            .parse()
            .with_context(|| format!("invalid fixed clock instant \"{rest}\""))?;
        return Ok(ClockMode::Fixed(instant));
    }
    bail!("clock must be \"real\" or \"fixed:<unix-seconds>\"")
}
