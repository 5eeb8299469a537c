//! Timestamp tokens and the issuing authority.
//!
//! The authority is an ordinary signing identity with role `TSA` plus a
//! monotonic counter. A token binds (sequence, wall time, payload digest)
//! under the authority's signature; sequences give every stamped document a
//! total order even when wall clocks collide at second resolution.

use crate::canonical::{Canonical, CanonicalError, FromValue, MapBuilder, MapReader, Value};
use crate::clock::Clock;
use crate::crypto::{Digest, PartyIdentity, SecretKey, Signature, Signer};

#[derive(Debug, thiserror::Error)]
pub enum TsaError {
    #[error("clock regression: now {now} is before last issued wall time {last}")]
    ClockRegression { now: i64, last: i64 },
    #[error("timestamp sequence space exhausted")]
    SequenceExhausted,
    #[error(transparent)]
    Crypto(#[from] crate::crypto::CryptoError),
}

/// Signed statement that `payload_digest` existed at (`sequence`,
/// `wall_time`).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TimestampToken {
    pub sequence: u64,
    pub wall_time: i64,
    pub payload_digest: Digest,
    pub tsa_signature: Signature,
}

impl TimestampToken {
    fn signing_view(sequence: u64, wall_time: i64, payload_digest: &Digest) -> Value {
        MapBuilder::new()
            .field("payload_digest", payload_digest.to_value())
            .field("sequence", Value::uint(sequence))
            .field("wall_time", Value::int(wall_time))
            .build()
    }

    /// Check the authority's signature over this token.
    pub fn verify(&self, tsa_identity: &PartyIdentity) -> bool {
        let view = Self::signing_view(self.sequence, self.wall_time, &self.payload_digest);
        tsa_identity
            .verify(&view.encode(), &self.tsa_signature)
            .unwrap_or(false)
    }

    /// Covers-check: the token must stamp exactly this digest.
    pub fn covers(&self, payload_digest: &Digest) -> bool {
        self.payload_digest == *payload_digest
    }
}

impl Canonical for TimestampToken {
    fn to_value(&self) -> Value {
        MapBuilder::new()
            .field("payload_digest", self.payload_digest.to_value())
            .field("sequence", Value::uint(self.sequence))
            .field("signature", self.tsa_signature.to_value())
            .field("wall_time", Value::int(self.wall_time))
            .build()
    }
}

impl FromValue for TimestampToken {
    fn from_value(value: &Value) -> Result<Self, CanonicalError> {
        let mut r = MapReader::new(value)?;
        let payload_digest = Digest::from_value(r.required("payload_digest")?)?;
        let sequence = r.u64("sequence")?;
        let tsa_signature = Signature::from_value(r.required("signature")?)?;
        let wall_time = r.int("wall_time")?;
        r.finish()?;
        Ok(TimestampToken {
            sequence,
            wall_time,
            payload_digest,
            tsa_signature,
        })
    }
}

/// Issuing state: identity, key, and the last issued (sequence, wall time).
/// Single-writer by construction (`issue` takes `&mut self`).
pub struct TimestampAuthority {
    identity: PartyIdentity,
    key: SecretKey,
    last_sequence: u64,
    last_wall_time: i64,
}

impl TimestampAuthority {
    pub fn new(identity: PartyIdentity, key: SecretKey) -> Result<Self, TsaError> {
        Signer::new(&identity, &key)?;
        Ok(Self {
            identity,
            key,
            last_sequence: 0,
            last_wall_time: i64::MIN,
        })
    }

    /// Restore an authority from persisted counter state.
    pub fn resume(
        identity: PartyIdentity,
        key: SecretKey,
        last_sequence: u64,
        last_wall_time: i64,
    ) -> Result<Self, TsaError> {
        Signer::new(&identity, &key)?;
        Ok(Self {
            identity,
            key,
            last_sequence,
            last_wall_time,
        })
    }

    pub fn identity(&self) -> &PartyIdentity {
        &self.identity
    }

    pub fn last_sequence(&self) -> u64 {
        self.last_sequence
    }

    pub fn last_wall_time(&self) -> i64 {
        self.last_wall_time
    }

    /// Issue the next token for `payload_digest`. Refuses to issue if the
    /// clock has moved backwards relative to the last issued token.
    pub fn issue(
        &mut self,
        clock: &dyn Clock,
        payload_digest: Digest,
    ) -> Result<TimestampToken, TsaError> {
        let now = clock.now_unix();
        if self.last_sequence > 0 && now < self.last_wall_time {
            return Err(TsaError::ClockRegression {
                now,
                last: self.last_wall_time,
            });
        }
        let sequence = self
            .last_sequence
            .checked_add(1)
            .ok_or(TsaError::SequenceExhausted)?;
        let view = TimestampToken::signing_view(sequence, now, &payload_digest);
        let tsa_signature = self.key.sign_bytes(&view.encode());
        self.last_sequence = sequence;
        self.last_wall_time = now;
        Ok(TimestampToken {
            sequence,
            wall_time: now,
            payload_digest,
            tsa_signature,
        })
    }
}
