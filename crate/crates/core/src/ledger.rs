//! Hash-chained, append-only event log.
//!
//! Every sealed event commits to its predecessor through `prev_hash`; the
//! hash covers a length-prefixed canonical encoding of
//! `seq ‖ at ‖ kind ‖ payload ‖ prev_hash`. On disk the log is one JSON
//! object per line, fields in that same order, and a line is accepted only
//! if it re-serializes to exactly the same bytes.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest as _, Sha256};

use crate::error::{Error, Result};
use crate::model::{AccountId, LogicalTime};

/// A SHA-256 digest, rendered as lowercase hex.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Digest(pub [u8; 32]);

impl Digest {
    pub const ZERO: Digest = Digest([0; 32]);

    pub fn of(bytes: &[u8]) -> Digest {
        Digest(Sha256::digest(bytes).into())
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }
}

impl fmt::Display for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl fmt::Debug for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Digest({})", self.to_hex())
    }
}

/// Strict: exactly 64 lowercase hex characters.
impl FromStr for Digest {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.len() != 64 || !s.bytes().all(|b| matches!(b, b'0'..=b'9' | b'a'..=b'f')) {
            return Err(Error::Parse(format!("`{s}` is not a lowercase hex digest")));
        }
        let mut out = [0u8; 32];
        hex::decode_to_slice(s, &mut out).map_err(|e| Error::Parse(e.to_string()))?;
        Ok(Digest(out))
    }
}

impl Serialize for Digest {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for Digest {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Incremental builder for the length-prefixed canonical encoding.
#[derive(Default)]
pub struct CanonicalWriter {
    buf: Vec<u8>,
}

impl CanonicalWriter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn field(&mut self, text: &str) -> &mut Self {
        let len = u32::try_from(text.len()).expect("canonical field exceeds 4 GiB");
        self.buf.extend_from_slice(&len.to_be_bytes());
        self.buf.extend_from_slice(text.as_bytes());
        self
    }

    pub fn finish(&self) -> &[u8] {
        &self.buf
    }

    pub fn digest(&self) -> Digest {
        Digest::of(&self.buf)
    }
}

macro_rules! event_kinds {
    ($($name:ident),+ $(,)?) => {
        /// Closed vocabulary of ledger events.
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
        pub enum EventKind {
            $($name),+
        }

        impl EventKind {
            pub const ALL: &'static [EventKind] = &[$(EventKind::$name),+];

            pub fn name(self) -> &'static str {
                match self {
                    $(EventKind::$name => stringify!($name)),+
                }
            }
        }

        impl FromStr for EventKind {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $(stringify!($name) => Ok(EventKind::$name),)+
                    _ => Err(Error::Parse(format!("unknown event kind `{s}`"))),
                }
            }
        }
    };
}

event_kinds!(
    IdentityRegistered,
    IdentityUpdated,
    KycStatusSet,
    BlacklistAdded,
    BlacklistRemoved,
    TokenDefined,
    ContractAmended,
    DocumentAttached,
    Minted,
    Burned,
    TransferExecuted,
    TransferRejected,
    CorrectionCancel,
    CorrectionNew,
    Frozen,
    Unfrozen,
    Recovered,
    Paused,
    Resumed,
    Killed,
    ForcedLiquidation,
    AlertRaised,
    SettlementExecuted,
    SwapPrepared,
    SwapCommitted,
    SwapAborted,
    AuditExported,
);

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl Serialize for EventKind {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for EventKind {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Canonical field map: string keys to canonical text values, key-sorted.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Payload(BTreeMap<String, String>);

impl Payload {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, key: &str, value: impl ToString) -> Self {
        self.0.insert(key.to_string(), value.to_string());
        self
    }

    pub fn with_opt(self, key: &str, value: Option<impl ToString>) -> Self {
        match value {
            Some(v) => self.with(key, v),
            None => self,
        }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.0.get(key).map(String::as_str)
    }

    pub fn require(&self, key: &str) -> Result<&str> {
        self.get(key)
            .ok_or_else(|| Error::Parse(format!("payload is missing `{key}`")))
    }

    pub fn parse<T: FromStr>(&self, key: &str) -> Result<T>
    where
        T::Err: fmt::Display,
    {
        let raw = self.require(key)?;
        raw.parse()
            .map_err(|e: T::Err| Error::Parse(format!("payload field `{key}`: {e}")))
    }

    pub fn parse_opt<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: fmt::Display,
    {
        match self.get(key) {
            None => Ok(None),
            Some(_) => self.parse(key).map(Some),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.0.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    pub fn insert_raw(&mut self, key: String, value: String) {
        self.0.insert(key, value);
    }

    /// Compact JSON with sorted keys.
    pub fn canonical_text(&self) -> String {
        serde_json::to_string(&self.0).expect("string map serializes")
    }
}

/// Legal document reference: the digest is the commitment, the URI a hint.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocumentAnchor {
    pub doc_id: String,
    pub digest: Digest,
    pub uri: String,
    pub notarized_by: Option<AccountId>,
}

impl DocumentAnchor {
    pub fn for_bytes(doc_id: &str, bytes: &[u8], uri: &str) -> Self {
        Self {
            doc_id: doc_id.to_string(),
            digest: Digest::of(bytes),
            uri: uri.to_string(),
            notarized_by: None,
        }
    }

    pub fn notarized(mut self, by: AccountId) -> Self {
        self.notarized_by = Some(by);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerEvent {
    pub seq: u64,
    pub at: LogicalTime,
    pub kind: EventKind,
    pub payload: Payload,
    pub prev_hash: Digest,
    pub hash: Digest,
}

impl LedgerEvent {
    pub fn compute_hash(
        seq: u64,
        at: LogicalTime,
        kind: EventKind,
        payload: &Payload,
        prev_hash: &Digest,
    ) -> Digest {
        CanonicalWriter::new()
            .field(&seq.to_string())
            .field(&at.to_string())
            .field(kind.name())
            .field(&payload.canonical_text())
            .field(&prev_hash.to_hex())
            .digest()
    }

    pub fn recompute_hash(&self) -> Digest {
        Self::compute_hash(self.seq, self.at, self.kind, &self.payload, &self.prev_hash)
    }

    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("event serializes")
    }

    /// Parses one line; rejects anything that is not the exact canonical
    /// rendering of the decoded event.
    pub fn from_line(line: &str) -> Result<LedgerEvent> {
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct Raw {
            seq: u64,
            at: LogicalTime,
            kind: EventKind,
            payload: Payload,
            prev_hash: Digest,
            hash: Digest,
        }
        let raw: Raw =
            serde_json::from_str(line).map_err(|e| Error::Parse(format!("event line: {e}")))?;
        let event = LedgerEvent {
            seq: raw.seq,
            at: raw.at,
            kind: raw.kind,
            payload: raw.payload,
            prev_hash: raw.prev_hash,
            hash: raw.hash,
        };
        if event.to_line() != line {
            return Err(Error::Parse("event line is not in canonical form".into()));
        }
        Ok(event)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ChainVerificationReport {
    pub ok: bool,
    pub checked: u64,
    pub first_bad_seq: Option<u64>,
}

impl ChainVerificationReport {
    fn good(checked: u64) -> Self {
        Self {
            ok: true,
            checked,
            first_bad_seq: None,
        }
    }

    fn bad(checked: u64, seq: u64) -> Self {
        Self {
            ok: false,
            checked,
            first_bad_seq: Some(seq),
        }
    }
}

/// Checks density, linkage, time order and every hash; pure.
pub fn verify_events(events: &[LedgerEvent]) -> ChainVerificationReport {
    let mut prev_hash = Digest::ZERO;
    let mut prev_at = LogicalTime(0);
    for (i, event) in events.iter().enumerate() {
        let i = i as u64;
        let ok = event.seq == i
            && event.prev_hash == prev_hash
            && event.at >= prev_at
            && event.recompute_hash() == event.hash;
        if !ok {
            return ChainVerificationReport::bad(i + 1, i);
        }
        prev_hash = event.hash;
        prev_at = event.at;
    }
    ChainVerificationReport::good(events.len() as u64)
}

/// Verifies a serialized log. Each line must be newline-terminated UTF-8
/// in canonical form; the first unparseable line counts as the first bad seq.
pub fn verify_log_bytes(bytes: &[u8]) -> ChainVerificationReport {
    match parse_log_bytes(bytes) {
        Ok(events) => verify_events(&events),
        Err((line, parsed)) => {
            let prefix = verify_events(&parsed);
            if prefix.ok {
                ChainVerificationReport::bad(line + 1, line)
            } else {
                prefix
            }
        }
    }
}

pub fn verify_log_text(text: &str) -> ChainVerificationReport {
    verify_log_bytes(text.as_bytes())
}

/// On failure returns the bad line index and the events parsed before it.
fn parse_log_bytes(bytes: &[u8]) -> std::result::Result<Vec<LedgerEvent>, (u64, Vec<LedgerEvent>)> {
    let mut events = Vec::new();
    let mut rest = bytes;
    let mut line_no = 0u64;
    while !rest.is_empty() {
        let Some(end) = rest.iter().position(|b| *b == b'\n') else {
            return Err((line_no, events));
        };
        let parsed = std::str::from_utf8(&rest[..end])
            .map_err(|e| Error::Parse(e.to_string()))
            .and_then(LedgerEvent::from_line);
        match parsed {
            Ok(event) => events.push(event),
            Err(_) => return Err((line_no, events)),
        }
        rest = &rest[end + 1..];
        line_no += 1;
    }
    Ok(events)
}

/// In-memory append-only log.
#[derive(Debug, Clone, Default)]
pub struct EventLog {
    events: Vec<LedgerEvent>,
}

impl EventLog {
    pub fn new() -> Self {
        Self::default()
    }

    /// Loads and fully verifies a serialized log.
    pub fn from_text(text: &str) -> Result<EventLog> {
        Self::from_bytes(text.as_bytes())
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<EventLog> {
        let events = parse_log_bytes(bytes).map_err(|(line, _)| Error::CorruptLog {
            line,
            reason: "unparseable or non-canonical line".into(),
        })?;
        let report = verify_events(&events);
        if let Some(bad) = report.first_bad_seq {
            return Err(Error::CorruptLog {
                line: bad,
                reason: "hash chain broken".into(),
            });
        }
        Ok(EventLog { events })
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for event in &self.events {
            out.push_str(&event.to_line());
            out.push('\n');
        }
        out
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn events(&self) -> &[LedgerEvent] {
        &self.events
    }

    pub fn get(&self, seq: u64) -> Option<&LedgerEvent> {
        usize::try_from(seq).ok().and_then(|i| self.events.get(i))
    }

    pub fn last(&self) -> Option<&LedgerEvent> {
        self.events.last()
    }

    pub fn last_time(&self) -> LogicalTime {
        self.events.last().map(|e| e.at).unwrap_or_default()
    }

    pub fn tip_hash(&self) -> Digest {
        self.events.last().map(|e| e.hash).unwrap_or(Digest::ZERO)
    }

    /// Seals the next event without appending it.
    pub fn seal(&self, kind: EventKind, payload: Payload, at: LogicalTime) -> Result<LedgerEvent> {
        if let Some(last) = self.events.last() {
            if at < last.at {
                return Err(Error::TimeRegression {
                    last: last.at.0,
                    at: at.0,
                });
            }
        }
        let seq = self.events.len() as u64;
        let prev_hash = self.tip_hash();
        let hash = LedgerEvent::compute_hash(seq, at, kind, &payload, &prev_hash);
        Ok(LedgerEvent {
            seq,
            at,
            kind,
            payload,
            prev_hash,
            hash,
        })
    }

    pub fn append(&mut self, kind: EventKind, payload: Payload, at: LogicalTime) -> Result<LedgerEvent> {
        let event = self.seal(kind, payload, at)?;
        self.events.push(event.clone());
        Ok(event)
    }

    /// Appends an already sealed event, checking it extends the chain.
    pub fn push_sealed(&mut self, event: LedgerEvent) -> Result<()> {
        let expected = self.seal(event.kind, event.payload.clone(), event.at)?;
        if expected != event {
            return Err(Error::CorruptLog {
                line: event.seq,
                reason: "event does not extend the chain".into(),
            });
        }
        self.events.push(event);
        Ok(())
    }

    pub fn verify_chain(&self) -> ChainVerificationReport {
        verify_events(&self.events)
    }

    #[cfg(test)]
    pub(crate) fn events_mut(&mut self) -> &mut Vec<LedgerEvent> {
        &mut self.events
    }
}
