//! Injectable wall-clock time.
//!
//! Every operation that reads the current time takes a [`Clock`] so that
//! retention and withdrawal checks replay deterministically. Production code
//! uses [`SystemClock`]; tests and replayable CLI runs use [`FixedClock`].
//!
//! All instants are UTC unix seconds (second resolution is the contract for
//! timestamp tokens and retention arithmetic).

use std::cell::Cell;
use std::time::{SystemTime, UNIX_EPOCH};

pub const SECONDS_PER_DAY: i64 = 86_400;
pub const SECONDS_PER_HOUR: i64 = 3_600;

pub trait Clock {
    /// Current time as UTC unix seconds.
    fn now_unix(&self) -> i64;
}

/// Real wall clock.
#[derive(Debug, Default, Clone, Copy)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now_unix(&self) -> i64 {
        match SystemTime::now().duration_since(UNIX_EPOCH) {
            Ok(d) => d.as_secs() as i64,
            Err(e) => -(e.duration().as_secs() as i64),
        }
    }
}

/// Clock pinned to an instant, advanced explicitly.
#[derive(Debug)]
pub struct FixedClock {
    now: Cell<i64>,
}

impl FixedClock {
    pub fn at(unix_seconds: i64) -> Self {
        Self {
            now: Cell::new(unix_seconds),
        }
    }

    pub fn advance(&self, seconds: i64) {
        self.now.set(self.now.get() + seconds);
    }

    pub fn set(&self, unix_seconds: i64) {
        self.now.set(unix_seconds);
    }
}

impl Clock for FixedClock {
    fn now_unix(&self) -> i64 {
        self.now.get()
    }
}
