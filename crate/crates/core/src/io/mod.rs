//! On-disk formats. Every decoder works on an in-memory byte slice, checks
//! declared counts against the actual payload before allocating, and never
//! panics on malformed input.

mod events;
mod grid;
mod image;
mod model;
mod obj;

pub use events::{
    decode_events, decode_events_csv, decode_labels, decode_probabilities, encode_events,
    encode_events_csv, encode_labels, encode_probabilities, EventFile, EVENT_HEADER_LEN,
    EVENT_RECORD_LEN,
};
pub use grid::{decode_grid, encode_grid};
pub use image::{decode_pfm, encode_pfm, encode_pgm, DepthImage};
pub use model::{decode_model, encode_model};
pub use obj::{parse_obj, write_obj};

use crate::error::{Error, Result};

/// Little-endian cursor over a byte slice.
pub(crate) struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
    format: &'static str,
}

impl<'a> Reader<'a> {
    pub(crate) fn new(buf: &'a [u8], format: &'static str) -> Self {
        Reader { buf, pos: 0, format }
    }

    pub(crate) fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    pub(crate) fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.remaining() < n {
            return Err(Error::format(
                self.format,
                format!("truncated at byte {} (need {n} more)", self.pos),
            ));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub(crate) fn magic(&mut self, magic: &[u8; 4]) -> Result<()> {
        let m = self.take(4)?;
        if m != magic {
            return Err(Error::format(
                self.format,
                format!("bad magic {:?}, expected {:?}", m, std::str::from_utf8(magic).unwrap_or("?")),
            ));
        }
        Ok(())
    }

    pub(crate) fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    pub(crate) fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub(crate) fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub(crate) fn i8(&mut self) -> Result<i8> {
        Ok(self.take(1)?[0] as i8)
    }

    pub(crate) fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub(crate) fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    /// Reads a record count and checks that `count * record_len` bytes remain.
    pub(crate) fn count(&mut self, record_len: usize) -> Result<usize> {
        let n = self.u64()?;
        let need = usize::try_from(n)
            .ok()
            .and_then(|n| n.checked_mul(record_len));
        match need {
            Some(bytes) if bytes <= self.remaining() => Ok(n as usize),
            _ => Err(Error::format(
                self.format,
                format!("declared {n} records but only {} payload bytes", self.remaining()),
            )),
        }
    }

    pub(crate) fn finish(&self) -> Result<()> {
        if self.remaining() != 0 {
            return Err(Error::format(
                self.format,
                format!("{} trailing bytes", self.remaining()),
            ));
        }
        Ok(())
    }
}
