//! Canonical serialization: the single byte-level form every document is
//! signed, hashed, and stored under.
//!
//! The format is a UTF-8 text encoding with a one-to-one mapping between
//! logical documents and byte strings:
//!
//! ```text
//! value  := bool | int | string | bytes | list | map
//! bool   := "true" | "false"
//! int    := "0" | "-"? nonzero-digit digit*          (i64 range)
//! string := '"' chars '"'
//! bytes  := "0x" lowercase-hex-pairs
//! list   := "[" [ value ("," value)* ] "]"
//! map    := "{" [ entry ("," entry)* ] "}"
//! entry  := string ":" value
//! ```
//!
//! There is no insignificant whitespace. Map keys are unique and sorted by
//! byte order. Strings escape only `\"`, `\\`, `\n`, `\r`, `\t`, and other
//! control characters as `\u00xx`; everything else is verbatim UTF-8. The
//! parser accepts exactly what the encoder emits — non-canonical input
//! (unsorted keys, redundant escapes, leading zeros) is a parse error, so
//! `parse` and `encode` are mutually inverse on valid data.
//!
//! Optional fields are omitted from maps entirely; there is no null.

use std::collections::BTreeMap;
use std::fmt;

use crate::hex;

/// A canonical document value.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Value {
    Bool(bool),
    Int(i64),
    Str(String),
    Bytes(Vec<u8>),
    List(Vec<Value>),
    Map(BTreeMap<String, Value>),
}

impl Value {
    pub fn str(s: impl Into<String>) -> Self {
        Value::Str(s.into())
    }

    pub fn bytes(b: impl Into<Vec<u8>>) -> Self {
        Value::Bytes(b.into())
    }

    pub fn int(i: i64) -> Self {
        Value::Int(i)
    }

    /// Unsigned values share the integer space; anything a ledger can hold
    /// fits comfortably below `i64::MAX`.
    pub fn uint(u: u64) -> Self {
        Value::Int(i64::try_from(u).expect("unsigned value exceeds canonical integer range"))
    }

    pub fn list(items: impl IntoIterator<Item = Value>) -> Self {
        Value::List(items.into_iter().collect())
    }

    /// Serialize to canonical bytes.
    pub fn encode(&self) -> Vec<u8> {
        let mut out = String::new();
        write_value(&mut out, self);
        out.into_bytes()
    }

    /// Parse canonical bytes. Rejects any input that `encode` could not have
    /// produced.
    pub fn parse(input: &[u8]) -> Result<Value, CanonicalError> {
        let text = std::str::from_utf8(input)
            .map_err(|e| CanonicalError::parse(e.valid_up_to(), "input is not valid UTF-8"))?;
        let mut parser = Parser {
            bytes: text.as_bytes(),
            pos: 0,
        };
        let value = parser.value()?;
        if parser.pos != parser.bytes.len() {
            return Err(CanonicalError::parse(
                parser.pos,
                "trailing data after value",
            ));
        }
        Ok(value)
    }

    pub fn as_map(&self) -> Result<&BTreeMap<String, Value>, CanonicalError> {
        match self {
            Value::Map(m) => Ok(m),
            other => Err(CanonicalError::decode(format!(
                "expected map, found {}",
                other.kind_name()
            ))),
        }
    }

    pub fn as_list(&self) -> Result<&[Value], CanonicalError> {
        match self {
            Value::List(l) => Ok(l),
            other => Err(CanonicalError::decode(format!(
                "expected list, found {}",
                other.kind_name()
            ))),
        }
    }

    pub fn as_str(&self) -> Result<&str, CanonicalError> {
        match self {
            Value::Str(s) => Ok(s),
            other => Err(CanonicalError::decode(format!(
                "expected string, found {}",
                other.kind_name()
            ))),
        }
    }

    pub fn as_int(&self) -> Result<i64, CanonicalError> {
        match self {
            Value::Int(i) => Ok(*i),
            other => Err(CanonicalError::decode(format!(
                "expected integer, found {}",
                other.kind_name()
            ))),
        }
    }

    pub fn as_u64(&self) -> Result<u64, CanonicalError> {
        let i = self.as_int()?;
        u64::try_from(i).map_err(|_| {
            CanonicalError::decode(format!("expected non-negative integer, found {i}"))
        })
    }

    pub fn as_bool(&self) -> Result<bool, CanonicalError> {
        match self {
            Value::Bool(b) => Ok(*b),
            other => Err(CanonicalError::decode(format!(
                "expected bool, found {}",
                other.kind_name()
            ))),
        }
    }

    pub fn as_bytes(&self) -> Result<&[u8], CanonicalError> {
        match self {
            Value::Bytes(b) => Ok(b),
            other => Err(CanonicalError::decode(format!(
                "expected bytes, found {}",
                other.kind_name()
            ))),
        }
    }

    fn kind_name(&self) -> &'static str {
        match self {
            Value::Bool(_) => "bool",
            Value::Int(_) => "integer",
            Value::Str(_) => "string",
            Value::Bytes(_) => "bytes",
            Value::List(_) => "list",
            Value::Map(_) => "map",
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut out = String::new();
        write_value(&mut out, self);
        f.write_str(&out)
    }
}

/// Types with a defined canonical form.
pub trait Canonical {
    fn to_value(&self) -> Value;

    fn canonical_bytes(&self) -> Vec<u8> {
        self.to_value().encode()
    }
}

/// Types decodable from a canonical value.
pub trait FromValue: Sized {
    fn from_value(value: &Value) -> Result<Self, CanonicalError>;
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum CanonicalError {
    #[error("canonical parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },
    #[error("canonical decode error: {0}")]
    Decode(String),
}

impl CanonicalError {
    fn parse(offset: usize, message: impl Into<String>) -> Self {
        CanonicalError::Parse {
            offset,
            message: message.into(),
        }
    }

    pub fn decode(message: impl Into<String>) -> Self {
        CanonicalError::Decode(message.into())
    }
}

// ---------------------------------------------------------------------------
// Map construction / consumption helpers
// ---------------------------------------------------------------------------

/// Builder for map values; `opt` drops `None` fields.
#[derive(Debug, Default)]
pub struct MapBuilder {
    map: BTreeMap<String, Value>,
}

impl MapBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn field(mut self, key: &str, value: Value) -> Self {
        self.map.insert(key.to_string(), value);
        self
    }

    pub fn opt(self, key: &str, value: Option<Value>) -> Self {
        match value {
            Some(v) => self.field(key, v),
            None => self,
        }
    }

    pub fn build(self) -> Value {
        Value::Map(self.map)
    }
}

/// Field-by-field reader over a map value. `finish` fails on unread keys so
/// decoders reject documents with fields they do not understand.
pub struct MapReader<'a> {
    map: &'a BTreeMap<String, Value>,
    seen: Vec<&'static str>,
}

impl<'a> MapReader<'a> {
    pub fn new(value: &'a Value) -> Result<Self, CanonicalError> {
        Ok(Self {
            map: value.as_map()?,
            seen: Vec::new(),
        })
    }

    pub fn required(&mut self, key: &'static str) -> Result<&'a Value, CanonicalError> {
        self.seen.push(key);
        self.map
            .get(key)
            .ok_or_else(|| CanonicalError::decode(format!("missing field \"{key}\"")))
    }

    pub fn optional(&mut self, key: &'static str) -> Option<&'a Value> {
        self.seen.push(key);
        self.map.get(key)
    }

    pub fn str(&mut self, key: &'static str) -> Result<&'a str, CanonicalError> {
        self.required(key)?.as_str().map_err(|e| in_field(key, e))
    }

    pub fn string(&mut self, key: &'static str) -> Result<String, CanonicalError> {
        Ok(self.str(key)?.to_string())
    }

    pub fn int(&mut self, key: &'static str) -> Result<i64, CanonicalError> {
        self.required(key)?.as_int().map_err(|e| in_field(key, e))
    }

    pub fn u64(&mut self, key: &'static str) -> Result<u64, CanonicalError> {
        self.required(key)?.as_u64().map_err(|e| in_field(key, e))
    }

    pub fn boolean(&mut self, key: &'static str) -> Result<bool, CanonicalError> {
        self.required(key)?.as_bool().map_err(|e| in_field(key, e))
    }

    pub fn bytes(&mut self, key: &'static str) -> Result<&'a [u8], CanonicalError> {
        self.required(key)?.as_bytes().map_err(|e| in_field(key, e))
    }

    pub fn list(&mut self, key: &'static str) -> Result<&'a [Value], CanonicalError> {
        self.required(key)?.as_list().map_err(|e| in_field(key, e))
    }

    pub fn finish(self) -> Result<(), CanonicalError> {
        for key in self.map.keys() {
            if !self.seen.iter().any(|s| s == key) {
                return Err(CanonicalError::decode(format!("unknown field \"{key}\"")));
            }
        }
        Ok(())
    }
}

fn in_field(key: &str, err: CanonicalError) -> CanonicalError {
    CanonicalError::decode(format!("field \"{key}\": {err}"))
}

// ---------------------------------------------------------------------------
// Encoder
// ---------------------------------------------------------------------------

fn write_value(out: &mut String, value: &Value) {
    match value {
        Value::Bool(true) => out.push_str("true"),
        Value::Bool(false) => out.push_str("false"),
        Value::Int(i) => {
            out.push_str(&i.to_string());
        }
        Value::Str(s) => write_string(out, s),
        Value::Bytes(b) => {
            out.push_str("0x");
            out.push_str(&hex::encode(b));
        }
        Value::List(items) => {
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write_value(out, item);
            }
            out.push(']');
        }
        Value::Map(map) => {
            out.push('{');
            for (i, (key, item)) in map.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write_string(out, key);
                out.push(':');
                write_value(out, item);
            }
            out.push('}');
        }
    }
}

fn write_string(out: &mut String, s: &str) {
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '\t' => out.push_str("\\t"),
            c if (c as u32) < 0x20 => {
                out.push_str(&format!("\\u{:04x}", c as u32));
            }
            c => out.push(c),
        }
    }
    out.push('"');
}

// ---------------------------------------------------------------------------
// Parser
// ---------------------------------------------------------------------------

struct Parser<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<u8> {
        self.bytes.get(self.pos).copied()
    }

    fn bump(&mut self) -> Result<u8, CanonicalError> {
        let b = self
            .peek()
            .ok_or_else(|| CanonicalError::parse(self.pos, "unexpected end of input"))?;
        self.pos += 1;
        Ok(b)
    }

    fn expect(&mut self, b: u8) -> Result<(), CanonicalError> {
        let got = self.bump()?;
        if got != b {
            return Err(CanonicalError::parse(
                self.pos - 1,
                format!("expected '{}', found '{}'", b as char, got as char),
            ));
        }
        Ok(())
    }

    fn value(&mut self) -> Result<Value, CanonicalError> {
        match self.peek() {
            Some(b'"') => Ok(Value::Str(self.string()?)),
            Some(b'[') => self.list(),
            Some(b'{') => self.map(),
            Some(b'0') if self.bytes.get(self.pos + 1) == Some(&b'x') => self.bytes_value(),
            Some(b'0'..=b'9') | Some(b'-') => self.int(),
            Some(b't') | Some(b'f') => self.boolean(),
            Some(other) => Err(CanonicalError::parse(
                self.pos,
                format!("unexpected character '{}'", other as char),
            )),
            None => Err(CanonicalError::parse(self.pos, "unexpected end of input")),
        }
    }

    fn boolean(&mut self) -> Result<Value, CanonicalError> {
        if self.bytes[self.pos..].starts_with(b"true") {
            self.pos += 4;
            Ok(Value::Bool(true))
        } else if self.bytes[self.pos..].starts_with(b"false") {
            self.pos += 5;
            Ok(Value::Bool(false))
        } else {
            Err(CanonicalError::parse(
                self.pos,
                "expected 'true' or 'false'",
            ))
        }
    }

    fn int(&mut self) -> Result<Value, CanonicalError> {
        let start = self.pos;
        if self.peek() == Some(b'-') {
            self.pos += 1;
        }
        let digits_start = self.pos;
        while matches!(self.peek(), Some(b'0'..=b'9')) {
            self.pos += 1;
        }
        if self.pos == digits_start {
            return Err(CanonicalError::parse(self.pos, "expected digits"));
        }
        let text = &self.bytes[start..self.pos];
        // Canonical integers: no leading zeros, no "-0".
        if text == b"-0" || (self.pos - digits_start > 1 && self.bytes[digits_start] == b'0') {
            return Err(CanonicalError::parse(start, "non-canonical integer"));
        }
        let text = std::str::from_utf8(text).expect("digits are ASCII");
        let i: i64 = text
            .parse()
            .map_err(|_| CanonicalError::parse(start, "integer out of range"))?;
        Ok(Value::Int(i))
    }

    fn bytes_value(&mut self) -> Result<Value, CanonicalError> {
        self.expect(b'0')?;
        self.expect(b'x')?;
        let start = self.pos;
        while matches!(self.peek(), Some(b'0'..=b'9') | Some(b'a'..=b'f')) {
            self.pos += 1;
        }
        let hex_text = std::str::from_utf8(&self.bytes[start..self.pos]).expect("hex is ASCII");
        let decoded = hex::decode(hex_text)
            .map_err(|e| CanonicalError::parse(start, format!("invalid byte string: {e}")))?;
        Ok(Value::Bytes(decoded))
    }

    fn string(&mut self) -> Result<String, CanonicalError> {
        self.expect(b'"')?;
        let mut out = String::new();
        loop {
            let start = self.pos;
            let b = self.bump()?;
            match b {
                b'"' => return Ok(out),
                b'\\' => {
                    let esc = self.bump()?;
                    match esc {
                        b'"' => out.push('"'),
                        b'\\' => out.push('\\'),
                        b'n' => out.push('\n'),
                        b'r' => out.push('\r'),
                        b't' => out.push('\t'),
                        b'u' => {
                            let code = self.unicode_escape(start)?;
                            out.push(code);
                        }
                        other => {
                            return Err(CanonicalError::parse(
                                start,
                                format!("invalid escape '\\{}'", other as char),
                            ))
                        }
                    }
                }
                b if b < 0x20 => {
                    return Err(CanonicalError::parse(start, "unescaped control character"));
                }
                _ => {
                    // Consume the full UTF-8 sequence starting at `start`.
                    while matches!(self.peek(), Some(c) if c & 0xc0 == 0x80) {
                        self.pos += 1;
                    }
                    let text = std::str::from_utf8(&self.bytes[start..self.pos])
                        .map_err(|_| CanonicalError::parse(start, "invalid UTF-8 in string"))?;
                    out.push_str(text);
                }
            }
        }
    }

    fn unicode_escape(&mut self, start: usize) -> Result<char, CanonicalError> {
        let mut code: u32 = 0;
        for _ in 0..4 {
            let d = self.bump()?;
            let v = match d {
                b'0'..=b'9' => d - b'0',
                b'a'..=b'f' => d - b'a' + 10,
                _ => return Err(CanonicalError::parse(start, "invalid \\u escape")),
            };
            code = code * 16 + v as u32;
        }
        // Only control characters may use \u, and the three with short forms
        // must use them; anything else has a non-escaped canonical form.
        if code >= 0x20 || matches!(code, 0x0a | 0x0d | 0x09) {
            return Err(CanonicalError::parse(start, "non-canonical \\u escape"));
        }
        char::from_u32(code).ok_or_else(|| CanonicalError::parse(start, "invalid \\u escape"))
    }

    fn list(&mut self) -> Result<Value, CanonicalError> {
        self.expect(b'[')?;
        let mut items = Vec::new();
        if self.peek() == Some(b']') {
            self.pos += 1;
            return Ok(Value::List(items));
        }
        loop {
            items.push(self.value()?);
            match self.bump()? {
                b',' => continue,
                b']' => return Ok(Value::List(items)),
                other => {
                    return Err(CanonicalError::parse(
                        self.pos - 1,
                        format!("expected ',' or ']', found '{}'", other as char),
                    ))
                }
            }
        }
    }

    fn map(&mut self) -> Result<Value, CanonicalError> {
        self.expect(b'{')?;
        let mut map = BTreeMap::new();
        if self.peek() == Some(b'}') {
            self.pos += 1;
            return Ok(Value::Map(map));
        }
        let mut last_key: Option<String> = None;
        loop {
            let key_start = self.pos;
            let key = self.string()?;
            if let Some(prev) = &last_key {
                if *prev >= key {
                    return Err(CanonicalError::parse(
                        key_start,
                        "map keys not in strictly increasing order",
                    ));
                }
            }
            self.expect(b':')?;
            let value = self.value()?;
            last_key = Some(key.clone());
            map.insert(key, value);
            match self.bump()? {
                b',' => continue,
                b'}' => return Ok(Value::Map(map)),
                other => {
                    return Err(CanonicalError::parse(
                        self.pos - 1,
                        format!("expected ',' or '}}', found '{}'", other as char),
                    ))
                }
            }
        }
    }
}
