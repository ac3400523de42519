//! Little-endian cursor shared by the binary container readers.

use crate::error::{Error, Result};

pub(crate) struct Cursor<'a> {
    buf: &'a [u8],
    pub(crate) at: usize,
    pub(crate) context: &'a str,
}

impl<'a> Cursor<'a> {
    pub(crate) fn new(buf: &'a [u8], context: &'a str) -> Self {
        Self { buf, at: 0, context }
    }

    pub(crate) fn remaining(&self) -> usize {
        self.buf.len() - self.at
    }

    pub(crate) fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.at.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or_else(|| {
            Error::format(self.context, format!("truncated while reading {what} at offset {}", self.at))
        })?;
        let s = &self.buf[self.at..end];
        self.at = end;
        Ok(s)
    }

    pub(crate) fn u8(&mut self, what: &str) -> Result<u8> {
        self.take(1, what).map(|b| b[0])
    }

    pub(crate) fn u16(&mut self, what: &str) -> Result<u16> {
        self.take(2, what).map(|b| u16::from_le_bytes([b[0], b[1]]))
    }

    pub(crate) fn u32(&mut self, what: &str) -> Result<u32> {
        self.take(4, what).map(|b| u32::from_le_bytes(b.try_into().unwrap()))
    }

    pub(crate) fn u64(&mut self, what: &str) -> Result<u64> {
        self.take(8, what).map(|b| u64::from_le_bytes(b.try_into().unwrap()))
    }

    /// UTF-8 string prefixed by a u16 length.
    pub(crate) fn str16(&mut self, what: &str) -> Result<&'a str> {
        let len = self.u16(what)? as usize;
        let raw = self.take(len, what)?;
        std::str::from_utf8(raw).map_err(|_| Error::format(self.context, format!("{what} is not UTF-8")))
    }
}

pub(crate) fn put_str16(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u16).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}
