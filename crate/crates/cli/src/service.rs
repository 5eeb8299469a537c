//! Service mode: the same dispatch table behind a local unix socket.
//!
//! Protocol, line-delimited both ways. The client sends one request line of
//! whitespace-separated arguments (exactly the CLI argv without the binary
//! name). The server replies with zero or more `out <line>` records followed
//! by one `exit <code>` record, then waits for the next request on the same
//! connection. Connections are served one at a time, which serializes all
//! ledger writes through the single-writer contract.

use std::io::{BufRead, BufReader, Write};
use std::os::unix::net::{UnixListener, UnixStream};
use std::path::Path;

use clap::Parser;

use crate::commands::{CliError, Outcome};
use crate::config::ToolConfig;
use crate::{dispatch, Cli};

pub fn serve(_config: &ToolConfig, socket: &Path) -> Result<Outcome, CliError> {
    if socket.exists() {
        std::fs::remove_file(socket).map_err(|e| {
            CliError::Usage(format!("cannot replace socket {}: {e}", socket.display()))
        })?;
    }
    let listener = UnixListener::bind(socket)
        .map_err(|e| CliError::Usage(format!("cannot bind {}: {e}", socket.display())))?;
    eprintln!("listening on {}", socket.display());
    for stream in listener.incoming() {
        match stream {
            Ok(stream) => {
                if let Err(e) = handle(stream) {
                    eprintln!("connection error: {e}");
                }
            }
            Err(e) => eprintln!("accept error: {e}"),
        }
    }
    Ok(Outcome::ok(""))
}

fn handle(stream: UnixStream) -> std::io::Result<()> {
    let reader = BufReader::new(stream.try_clone()?);
    let mut writer = stream;
    for line in reader.lines() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if trimmed == "quit" {
            break;
        }
        let (text, code) = execute(trimmed);
        for out_line in text.lines() {
            writeln!(writer, "out {out_line}")?;
        }
        writeln!(writer, "exit {code}")?;
        writer.flush()?;
    }
    Ok(())
}

fn execute(request: &str) -> (String, i32) {
    let argv = std::iter::once("concord").chain(request.split_whitespace());
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(err) => return (format!("usage: {err}"), 2),
    };
    // Nested serve requests would deadlock on the one socket; refuse them.
    if matches!(cli.command, crate::Command::Serve { .. }) {
        return ("serve cannot be nested".to_string(), 2);
    }
    match dispatch(&cli) {
        Ok(outcome) => (outcome.text, outcome.code),
        Err(err) => (
            format!("error: {}: {}", err.category(), err.message()),
            err.code(),
        ),
    }
}
