//! Canonical sensor event and its exact-size wire encoding.
//!
//! Records are compact JSON arrays with a fixed element order:
//!
//! ```text
//! [created_at_ms,sensor_id,temperature_c,"pad"]
//! [1700000000000,7,42.5,"xxxxxxxxxxxxxxxxxxxxxxxxx"]
//! ```
//!
//! The logical field names are `ts`, `id`, `t` and `pad`; they are used in
//! error messages. Temperature always carries exactly one decimal place, so
//! the unpadded length of an event depends only on the digit counts of its
//! values, and the padding string absorbs the remaining slack to hit the
//! requested size exactly.

use std::fmt;
use std::io::Write;

use bytes::Bytes;
use serde::de::{Deserializer, IgnoredAny, SeqAccess, Visitor};
use serde::Deserialize;

/// Smallest record size the harness accepts.
pub const MIN_EVENT_SIZE: usize = 27;

/// Largest record size the harness accepts (64 KiB).
pub const MAX_EVENT_SIZE: usize = 64 * 1024;

/// Digits of a millisecond epoch timestamp between 2001 and 2286.
const TS_DIGITS: usize = 13;

/// `[` `,` `,` `,` `"` `"` `]`
const FRAMING_BYTES: usize = 7;

const PAD_BYTE: u8 = b'x';

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum EventError {
    #[error("target size {requested} B is below the minimum of {minimum} B for this event")]
    SizeTooSmall { requested: usize, minimum: usize },
    #[error("cannot encode event: {0}")]
    Encoding(String),
    #[error("malformed record at byte {offset}: {message}")]
    Parse { offset: usize, message: String },
    #[error("record is missing field `{0}`")]
    MissingField(&'static str),
}

/// One synthetic measurement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensorEvent {
    /// Creation time, milliseconds since the Unix epoch.
    pub created_at: u64,
    pub sensor_id: u64,
    pub temperature_c: f64,
}

/// An encoded event as it travels through the broker.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedRecord {
    pub bytes: Bytes,
}

impl EncodedRecord {
    pub fn size(&self) -> usize {
        self.bytes.len()
    }
}

impl From<Vec<u8>> for EncodedRecord {
    fn from(v: Vec<u8>) -> Self {
        Self {
            bytes: Bytes::from(v),
        }
    }
}

/// Temperature in tenths of a degree, the unit the wire format carries.
fn tenths(temperature_c: f64) -> Result<i64, EventError> {
    if !temperature_c.is_finite() {
        return Err(EventError::Encoding(format!(
            "temperature {temperature_c} is not finite"
        )));
    }
    let t = (temperature_c * 10.0).round();
    if t.abs() > 1e15 {
        return Err(EventError::Encoding(format!(
            "temperature {temperature_c} is out of range"
        )));
    }
    Ok(t as i64)
}

fn decimal_digits(mut v: u64) -> usize {
    let mut n = 1;
    while v >= 10 {
        v /= 10;
        n += 1;
    }
    n
}

/// Character count of a temperature written with one decimal place.
fn temperature_len(tenths: i64) -> usize {
    let sign = usize::from(tenths < 0);
    let whole = tenths.unsigned_abs() / 10;
    sign + decimal_digits(whole) + 2
}

impl SensorEvent {
    /// Length of this event's encoding with an empty padding string.
    pub fn compact_len(&self) -> Result<usize, EventError> {
        let t = tenths(self.temperature_c)?;
        Ok(FRAMING_BYTES
            + decimal_digits(self.created_at)
            + decimal_digits(self.sensor_id)
            + temperature_len(t))
    }

    /// Appends the encoding of exactly `target_size` bytes to `buf`.
    pub fn encode_into(&self, target_size: usize, buf: &mut Vec<u8>) -> Result<(), EventError> {
        let t = tenths(self.temperature_c)?;
        let compact = self.compact_len()?;
        let minimum = compact.max(MIN_EVENT_SIZE);
        if target_size < minimum {
            return Err(EventError::SizeTooSmall {
                requested: target_size,
                minimum,
            });
        }
        let start = buf.len();
        buf.reserve(target_size);
        let sign = if t < 0 { "-" } else { "" };
        let abs = t.unsigned_abs();
        write!(
            buf,
            "[{},{},{}{}.{},\"",
            self.created_at,
            self.sensor_id,
            sign,
            abs / 10,
            abs % 10
        )
        .expect("write to Vec cannot fail");
        buf.resize(buf.len() + (target_size - compact), PAD_BYTE);
        buf.extend_from_slice(b"\"]");
        debug_assert_eq!(buf.len() - start, target_size);
        Ok(())
    }
}

/// Encodes `e` as a JSON record of exactly `target_size` bytes.
pub fn serialize_event(e: &SensorEvent, target_size: usize) -> Result<EncodedRecord, EventError> {
    let mut buf = Vec::with_capacity(target_size);
    e.encode_into(target_size, &mut buf)?;
    Ok(buf.into())
}

/// Parses a record produced by [`serialize_event`]. Padding is discarded, and
/// trailing elements after the padding are ignored.
pub fn deserialize_event(bytes: &[u8]) -> Result<SensorEvent, EventError> {
    let raw: RawEvent = serde_json::from_slice(bytes).map_err(|e| parse_error(bytes, &e))?;
    Ok(SensorEvent {
        created_at: raw.ts.ok_or(EventError::MissingField("ts"))?,
        sensor_id: raw.id.ok_or(EventError::MissingField("id"))?,
        temperature_c: raw.t.ok_or(EventError::MissingField("t"))?,
    })
}

/// Reads only the creation timestamp at the head of a record.
pub fn peek_created_at(bytes: &[u8]) -> Option<u64> {
    let mut it = bytes.iter().skip_while(|b| b.is_ascii_whitespace());
    if it.next() != Some(&b'[') {
        return None;
    }
    let mut seen = false;
    let mut v: u64 = 0;
    for &b in it.skip_while(|b| b.is_ascii_whitespace()) {
        if b.is_ascii_digit() {
            v = v.checked_mul(10)?.checked_add(u64::from(b - b'0'))?;
            seen = true;
        } else {
            break;
        }
    }
    seen.then_some(v)
}

/// Worst-case unpadded size of any event drawn with these parameters and a
/// present-day timestamp.
pub fn max_compact_len(
    num_sensors: u64,
    min_temp_c: f64,
    max_temp_c: f64,
) -> Result<usize, EventError> {
    let temp = [min_temp_c, max_temp_c]
        .into_iter()
        .map(|t| tenths(t).map(temperature_len))
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .max()
        .unwrap_or(3);
    Ok(FRAMING_BYTES + TS_DIGITS + decimal_digits(num_sensors.saturating_sub(1)) + temp)
}

fn parse_error(input: &[u8], e: &serde_json::Error) -> EventError {
    let line_start: usize = input
        .split(|&b| b == b'\n')
        .take(e.line().saturating_sub(1))
        .map(|l| l.len() + 1)
        .sum();
    EventError::Parse {
        offset: (line_start + e.column().saturating_sub(1)).min(input.len()),
        message: e.to_string(),
    }
}

#[derive(Default)]
struct RawEvent {
    ts: Option<u64>,
    id: Option<u64>,
    t: Option<f64>,
}

impl<'de> Deserialize<'de> for RawEvent {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct RawVisitor;

        impl<'de> Visitor<'de> for RawVisitor {
            type Value = RawEvent;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("an event array [ts,id,t,pad]")
            }

            fn visit_seq<A: SeqAccess<'de>>(self, mut seq: A) -> Result<RawEvent, A::Error> {
                let mut raw = RawEvent {
                    ts: seq.next_element()?,
                    ..RawEvent::default()
                };
                if raw.ts.is_some() {
                    raw.id = seq.next_element()?;
                }
                if raw.id.is_some() {
                    raw.t = seq.next_element()?;
                }
                while seq.next_element::<IgnoredAny>()?.is_some() {}
                Ok(raw)
            }
        }

        d.deserialize_seq(RawVisitor)
    }
}
