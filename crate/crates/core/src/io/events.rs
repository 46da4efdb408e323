//! Event streams (`EVC1` binary and `t,x,y,p` CSV), per-event contour
//! labels (`EVL1`) and per-event contour probabilities (`EVP1`).
//!
//! Binary layouts, all little-endian:
//!
//! ```text
//! EVC1 | width u16 | height u16 | count u64 | count × (t f64, x u16, y u16, p i8)
//! EVL1 | width u16 | height u16 | count u64 | count × u8 (0 or 1)
//! EVP1 | count u64 | count × f32 in [0, 1]
//! ```

use std::fmt::Write as _;

use super::Reader;
use crate::error::{Error, Result};
use crate::geometry::{validate_stream, Event, Polarity};

pub const EVENT_HEADER_LEN: usize = 16;
pub const EVENT_RECORD_LEN: usize = 13;

#[derive(Debug, Clone, PartialEq)]
pub struct EventFile {
    pub width: u16,
    pub height: u16,
    pub events: Vec<Event>,
}

pub fn encode_events(file: &EventFile) -> Vec<u8> {
    let mut out = Vec::with_capacity(EVENT_HEADER_LEN + EVENT_RECORD_LEN * file.events.len());
    out.extend_from_slice(b"EVC1");
    out.extend_from_slice(&file.width.to_le_bytes());
    out.extend_from_slice(&file.height.to_le_bytes());
    out.extend_from_slice(&(file.events.len() as u64).to_le_bytes());
    for e in &file.events {
        out.extend_from_slice(&e.t.to_le_bytes());
        out.extend_from_slice(&e.x.to_le_bytes());
        out.extend_from_slice(&e.y.to_le_bytes());
        out.push(e.polarity.sign() as u8);
    }
    out
}

pub fn decode_events(bytes: &[u8]) -> Result<EventFile> {
    let mut r = Reader::new(bytes, "event");
    r.magic(b"EVC1")?;
    let width = r.u16()?;
    let height = r.u16()?;
    let n = r.count(EVENT_RECORD_LEN)?;
    let mut events = Vec::with_capacity(n);
    for i in 0..n {
        let t = r.f64()?;
        let x = r.u16()?;
        let y = r.u16()?;
        let p = r.i8()?;
        let polarity = Polarity::from_sign(i64::from(p))
            .ok_or_else(|| Error::format("event", format!("record {i}: polarity {p}")))?;
        events.push(Event { x, y, t, polarity });
    }
    r.finish()?;
    validate_stream(&events, u32::from(width), u32::from(height))
        .map_err(|e| Error::format("event", e.to_string()))?;
    Ok(EventFile {
        width,
        height,
        events,
    })
}

/// CSV fallback. Carries no sensor size, so only ordering and value ranges
/// are checked here.
pub fn encode_events_csv(events: &[Event]) -> String {
    let mut out = String::from("t,x,y,p\n");
    for e in events {
        let _ = writeln!(out, "{},{},{},{}", e.t, e.x, e.y, e.polarity.sign());
    }
    out
}

pub fn decode_events_csv(text: &str) -> Result<Vec<Event>> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    match lines.next().map(|h| h.split(',').map(str::trim).collect::<Vec<_>>()) {
        Some(h) if h == ["t", "x", "y", "p"] => {}
        _ => return Err(Error::format("event csv", "expected header `t,x,y,p`")),
    }
    let mut events = Vec::new();
    for (row, line) in lines.enumerate() {
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        if f.len() != 4 {
            return Err(Error::format("event csv", format!("row {row}: expected 4 fields")));
        }
        let bad = |what: &str| Error::format("event csv", format!("row {row}: bad {what}"));
        let t: f64 = f[0].parse().map_err(|_| bad("t"))?;
        let x: u16 = f[1].parse().map_err(|_| bad("x"))?;
        let y: u16 = f[2].parse().map_err(|_| bad("y"))?;
        let p: i64 = f[3].parse().map_err(|_| bad("p"))?;
        let polarity = Polarity::from_sign(p).ok_or_else(|| bad("polarity"))?;
        events.push(Event { x, y, t, polarity });
    }
    validate_stream(&events, u32::from(u16::MAX) + 1, u32::from(u16::MAX) + 1)
        .map_err(|e| Error::format("event csv", e.to_string()))?;
    Ok(events)
}

pub fn encode_labels(width: u16, height: u16, labels: &[bool]) -> Vec<u8> {
    let mut out = Vec::with_capacity(EVENT_HEADER_LEN + labels.len());
    out.extend_from_slice(b"EVL1");
    out.extend_from_slice(&width.to_le_bytes());
    out.extend_from_slice(&height.to_le_bytes());
    out.extend_from_slice(&(labels.len() as u64).to_le_bytes());
    out.extend(labels.iter().map(|&b| u8::from(b)));
    out
}

/// Returns `(width, height, labels)`.
pub fn decode_labels(bytes: &[u8]) -> Result<(u16, u16, Vec<bool>)> {
    let mut r = Reader::new(bytes, "label");
    r.magic(b"EVL1")?;
    let width = r.u16()?;
    let height = r.u16()?;
    let n = r.count(1)?;
    let raw = r.take(n)?;
    r.finish()?;
    let labels = raw
        .iter()
        .enumerate()
        .map(|(i, &b)| match b {
            0 => Ok(false),
            1 => Ok(true),
            v => Err(Error::format("label", format!("record {i}: value {v} not 0/1"))),
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((width, height, labels))
}

pub fn encode_probabilities(probs: &[f32]) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + 4 * probs.len());
    out.extend_from_slice(b"EVP1");
    out.extend_from_slice(&(probs.len() as u64).to_le_bytes());
    for p in probs {
        out.extend_from_slice(&p.to_le_bytes());
    }
    out
}

pub fn decode_probabilities(bytes: &[u8]) -> Result<Vec<f32>> {
    let mut r = Reader::new(bytes, "probability");
    r.magic(b"EVP1")?;
    let n = r.count(4)?;
    let mut probs = Vec::with_capacity(n);
    for i in 0..n {
        let p = r.f32()?;
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::format(
                "probability",
                format!("record {i}: {p} outside [0, 1]"),
            ));
        }
        probs.push(p);
    }
    r.finish()?;
    Ok(probs)
}
