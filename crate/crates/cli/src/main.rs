//! `concord` — operator CLI for the consent ledger and audit toolkit.
//!
//! One binary, subcommand style. Exit codes: 0 success, 1 domain violation,
//! 2 usage error, 3 integrity failure. All state lives under the configured
//! paths (key directory, ledger file); nothing else is written. With a
//! fixed clock and seeded keys every subcommand is deterministic end to
//! end.

mod commands;
mod config;
mod context;
mod service;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use commands::{CliError, Outcome};

#[derive(Parser)]
#[command(
    name = "concord",
    version,
    about = "Verifiable consent ledger and data-protection compliance audit toolkit"
)]
pub struct Cli {
    /// Tool config file (default: $CONCORD_CONFIG, else built-in defaults)
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Key directory override (also $CONCORD_KEY_DIR)
    #[arg(long, global = true)]
    key_dir: Option<PathBuf>,
    /// Ledger file override
    #[arg(long, global = true)]
    ledger: Option<PathBuf>,
    /// Clock override: "real" or "fixed:<unix-seconds>"
    #[arg(long, global = true)]
    clock: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Generate a signing identity and store its two key files
    Keygen {
        /// Party id (file names derive from it)
        #[arg(long)]
        id: String,
        /// Role: principal|fiduciary|processor|third_party|auditor|authority|guardian|tsa
        #[arg(long)]
        role: String,
        /// 32-byte hex seed for reproducible keys (omit for fresh randomness)
        #[arg(long)]
        seed: Option<String>,
    },
    /// Consent lifecycle: validate, establish, modify, withdraw, propagate
    Consent {
        #[command(subcommand)]
        cmd: ConsentCmd,
    },
    /// Record signed evidence: processing, erasure, breach, correction
    Record {
        #[command(subcommand)]
        cmd: RecordCmd,
    },
    /// Ledger operations: append, verify, latest, prove, verify-proof, anchor
    Ledger {
        #[command(subcommand)]
        cmd: LedgerCmd,
    },
    /// Compliance checks and user rights
    Comply {
        #[command(subcommand)]
        cmd: ComplyCmd,
    },
    /// Data-collection minimization: classify, lint, report
    Minimize {
        #[command(subcommand)]
        cmd: MinimizeCmd,
    },
    /// Audits, impact assessments, and certificates
    Audit {
        #[command(subcommand)]
        cmd: AuditCmd,
    },
    /// Export the machine-readable transparency summary
    Transparency {
        /// Audit report backing the published grade
        #[arg(long)]
        report: Option<PathBuf>,
        /// Certificate matching the report
        #[arg(long)]
        cert: Option<PathBuf>,
    },
    /// Serve the same commands over a local unix socket, line by line
    Serve {
        /// Socket path to bind
        #[arg(long)]
        socket: PathBuf,
    },
}

#[derive(Subcommand)]
pub enum ConsentCmd {
    /// Write a canonical consent form file from flags
    Draft {
        #[arg(long)]
        form_id: String,
        #[arg(long)]
        principal: String,
        #[arg(long)]
        fiduciary: String,
        /// Repeatable purpose spec: "id|description|cat1,cat2[|ack]"
        #[arg(long, required = true)]
        purpose: Vec<String>,
        /// Comma-separated third-party ids (empty list if omitted)
        #[arg(long)]
        third_parties: Option<String>,
        /// Fixed retention in days
        #[arg(long, conflicts_with = "review_interval_days")]
        retention_days: Option<u32>,
        /// Review-interval retention in days
        #[arg(long)]
        review_interval_days: Option<u32>,
        /// Declare consented cross-border transfer to this destination
        #[arg(long)]
        cross_border: Option<String>,
        /// Affirmation text shown for explicit acknowledgment
        #[arg(long)]
        affirmation: Option<String>,
        /// Guardian party id (marks the form as child consent)
        #[arg(long)]
        child_guardian: Option<String>,
        /// Guardian age attestation text
        #[arg(long)]
        age_attestation: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Check a form file against the taxonomy and form invariants
    Validate {
        #[arg(long)]
        form: PathBuf,
    },
    /// Sign and record an ESTABLISH event for a form file
    Establish {
        #[arg(long)]
        form: PathBuf,
        /// Guardian party id for child consent
        #[arg(long)]
        guardian: Option<String>,
        /// Also write the signed event to this file
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Replace the form in force (points at the prior event's digest)
    Modify {
        #[arg(long)]
        prior: String,
        #[arg(long)]
        form: PathBuf,
        #[arg(long)]
        guardian: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Terminate the chain ending in the given event digest
    Withdraw {
        #[arg(long)]
        prior: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Record a third party's acknowledgment of a withdrawal
    Propagate {
        /// Digest of the withdrawal event
        #[arg(long)]
        withdrawal: String,
        #[arg(long)]
        third_party: String,
    },
}

#[derive(Subcommand)]
pub enum RecordCmd {
    /// Record a signed processing event
    Process {
        #[arg(long)]
        actor: String,
        /// Digest of the governing consent event
        #[arg(long)]
        consent: String,
        #[arg(long)]
        purpose: String,
        /// Comma-separated category ids
        #[arg(long)]
        categories: String,
        /// collect|store|analyze|share|disclose|transfer_cross_border
        #[arg(long)]
        action: String,
        /// Receiving party for share/disclose
        #[arg(long)]
        counterparty: Option<String>,
        /// Processing id (defaults to a sequence-derived id)
        #[arg(long)]
        id: Option<String>,
    },
    /// Record a fiduciary-signed erasure receipt
    Erasure {
        #[arg(long)]
        principal: String,
        #[arg(long)]
        fiduciary: String,
        #[arg(long)]
        categories: String,
        #[arg(long)]
        note: Option<String>,
    },
    /// Record a data-breach incident
    Breach {
        #[arg(long)]
        fiduciary: String,
        #[arg(long)]
        id: String,
        #[arg(long)]
        description: String,
        #[arg(long)]
        categories: String,
        #[arg(long)]
        detected_at: i64,
        #[arg(long)]
        reported_at: Option<i64>,
        #[arg(long)]
        high_risk: bool,
        #[arg(long)]
        principal_notified_at: Option<i64>,
    },
    /// Record a both-party correction (values as digests only)
    Correction {
        #[arg(long)]
        principal: String,
        #[arg(long)]
        fiduciary: String,
        #[arg(long)]
        field: String,
        #[arg(long)]
        old_digest: String,
        #[arg(long)]
        new_digest: String,
    },
}

#[derive(Subcommand)]
pub enum LedgerCmd {
    /// Append a canonical payload file of the given kind
    Append {
        /// consent|propagation|processing|erasure|breach|correction|restriction|anchor
        #[arg(long)]
        kind: String,
        #[arg(long)]
        payload: PathBuf,
    },
    /// Verify hash links, digests, and embedded signatures
    Verify {
        #[arg(long)]
        from: Option<u64>,
        #[arg(long)]
        to: Option<u64>,
    },
    /// Resolve the latest consent for a pair
    Latest {
        #[arg(long)]
        principal: String,
        #[arg(long)]
        fiduciary: String,
    },
    /// Produce an inclusion proof for an entry
    Prove {
        #[arg(long)]
        index: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Verify an inclusion proof against a head hash
    VerifyProof {
        #[arg(long)]
        proof: PathBuf,
        #[arg(long)]
        head_hash: String,
    },
    /// Sign and append a checkpoint over the current head
    Anchor {
        #[arg(long)]
        fiduciary: String,
        /// Optional auditor/authority countersigner
        #[arg(long)]
        countersigner: Option<String>,
    },
}

#[derive(Subcommand)]
pub enum ComplyCmd {
    /// Run compliance checkers and print findings
    Check {
        /// Comma-separated checks (default: all); short names accepted:
        /// purpose,withdrawal,retention,sharing,breach,guardian,minimization
        #[arg(long)]
        checks: Option<String>,
        /// Evaluate windows as of this unix time (default: the tool clock)
        #[arg(long)]
        as_of: Option<i64>,
    },
    /// Right to access: the pair's metadata summary
    Access {
        #[arg(long)]
        principal: String,
        #[arg(long)]
        fiduciary: String,
    },
    /// Restrict further disclosure by adjudicating-officer order
    Restrict {
        #[arg(long)]
        principal: String,
        #[arg(long)]
        fiduciary: String,
        /// Digest of the officer's order document (required by law)
        #[arg(long)]
        order_ref: Option<String>,
    },
}

#[derive(Subcommand)]
pub enum MinimizeCmd {
    /// Classify one category id
    Classify { category: String },
    /// Lint a plan file for over-collection
    Lint { plan: PathBuf },
    /// Per-purpose class histogram and overall verdict for plan files
    Report {
        #[arg(required = true)]
        plans: Vec<PathBuf>,
    },
}

#[derive(Subcommand)]
pub enum AuditCmd {
    /// Run the full audit over the ledger
    Run {
        /// Audit config file (default: tool config / built-in defaults)
        #[arg(long)]
        config: Option<PathBuf>,
        /// Write the canonical report here
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Impact assessment over declared collection plans
    Assess {
        #[arg(long)]
        plans: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Issue an auditor-signed certificate for a report
    Certify {
        #[arg(long)]
        report: PathBuf,
        #[arg(long)]
        auditor: String,
        #[arg(long)]
        fiduciary: String,
        #[arg(long)]
        valid_from: i64,
        #[arg(long)]
        valid_to: i64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Verify a certificate against its report and auditor identity
    VerifyCert {
        #[arg(long)]
        cert: PathBuf,
        #[arg(long)]
        report: PathBuf,
        #[arg(long)]
        auditor: String,
    },
}

/// Route a parsed command. Shared by the CLI entry point and service mode.
pub fn dispatch(cli: &Cli) -> Result<Outcome, CliError> {
    let config = config::resolve(
        cli.config.as_deref(),
        cli.key_dir.as_deref(),
        cli.ledger.as_deref(),
        cli.clock.as_deref(),
    )
    .map_err(|e| CliError::Usage(e.to_string()))?;
    match &cli.command {
        Command::Keygen { id, role, seed } => commands::keygen(&config, id, role, seed.as_deref()),
        Command::Consent { cmd } => commands::consent(&config, cmd),
        Command::Record { cmd } => commands::record(&config, cmd),
        Command::Ledger { cmd } => commands::ledger(&config, cmd),
        Command::Comply { cmd } => commands::comply(&config, cmd),
        Command::Minimize { cmd } => commands::minimize(&config, cmd),
        Command::Audit { cmd } => commands::audit(&config, cmd),
        Command::Transparency { report, cert } => {
            commands::transparency(&config, report.as_deref(), cert.as_deref())
        }
        Command::Serve { socket } => service::serve(&config, socket),
    }
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            // clap prints its own message; normalize every usage problem to 2.
            let _ = err.print();
            std::process::exit(2);
        }
    };
    match dispatch(&cli) {
        Ok(outcome) => {
            print!("{}", outcome.text);
            std::process::exit(outcome.code);
        }
        Err(err) => {
            eprintln!("error: {}: {}", err.category(), err.message());
            std::process::exit(err.code());
        }
    }
}
