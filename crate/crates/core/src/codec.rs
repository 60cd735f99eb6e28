//! Length-prefixed little-endian binary encoding shared by all blobs.
//!
//! Every blob starts with the version byte `0x01` and a kind byte. Integers
//! are little-endian; byte strings and UTF-8 strings are prefixed with a
//! `u32` length; collections are prefixed with a `u32` count.

use crate::naming::{parse_name, Name};

pub const VERSION: u8 = 0x01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("malformed blob: {0}")]
pub struct CodecError(pub &'static str);

#[derive(Debug, Default)]
pub struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn blob(kind: u8) -> Self {
        let mut w = Self::new();
        w.u8(VERSION);
        w.u8(kind);
        w
    }

    pub fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    pub fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn count(&mut self, n: usize) {
        self.u32(u32::try_from(n).expect("collection too large to encode"));
    }

    pub fn bytes(&mut self, v: &[u8]) {
        self.count(v.len());
        self.buf.extend_from_slice(v);
    }

    pub fn str(&mut self, v: &str) {
        self.bytes(v.as_bytes());
    }

    pub fn name(&mut self, v: &Name) {
        self.str(&v.to_string());
    }

    pub fn finish(self) -> Vec<u8> {
        self.buf
    }
}

pub struct Reader<'a> {
    buf: &'a [u8],
    at: usize,
}

const SHORT: CodecError = CodecError("truncated blob");

impl<'a> Reader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Reader { buf, at: 0 }
    }

    pub fn blob(buf: &'a [u8], kind: u8) -> Result<Self, CodecError> {
        let mut r = Self::new(buf);
        if r.u8()? != VERSION {
            return Err(CodecError("unsupported version"));
        }
        if r.u8()? != kind {
            return Err(CodecError("unexpected blob kind"));
        }
        Ok(r)
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], CodecError> {
        let end = self.at.checked_add(n).ok_or(SHORT)?;
        let out = self.buf.get(self.at..end).ok_or(SHORT)?;
        self.at = end;
        Ok(out)
    }

    pub fn u8(&mut self) -> Result<u8, CodecError> {
        Ok(self.take(1)?[0])
    }

    pub fn u32(&mut self) -> Result<u32, CodecError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn u64(&mut self) -> Result<u64, CodecError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    /// A collection count, bounded by the bytes left.
    pub fn count(&mut self) -> Result<usize, CodecError> {
        let n = self.u32()? as usize;
        if n > self.buf.len() - self.at {
            return Err(SHORT);
        }
        Ok(n)
    }

    pub fn bytes(&mut self) -> Result<&'a [u8], CodecError> {
        let n = self.u32()? as usize;
        self.take(n)
    }

    pub fn fixed<const N: usize>(&mut self) -> Result<[u8; N], CodecError> {
        self.bytes()?
            .try_into()
            .map_err(|_| CodecError("wrong fixed-length field size"))
    }

    pub fn str(&mut self) -> Result<&'a str, CodecError> {
        std::str::from_utf8(self.bytes()?).map_err(|_| CodecError("invalid UTF-8"))
    }

    pub fn name(&mut self) -> Result<Name, CodecError> {
        parse_name(self.str()?).map_err(|_| CodecError("invalid name"))
    }

    pub fn end(self) -> Result<(), CodecError> {
        if self.at == self.buf.len() {
            Ok(())
        } else {
            Err(CodecError("trailing bytes"))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_is_little_endian_and_prefixed() {
        let mut w = Writer::blob(7);
        w.u32(0x0102_0304);
        w.str("ab");
        assert_eq!(w.finish(), vec![1, 7, 4, 3, 2, 1, 2, 0, 0, 0, b'a', b'b']);
    }

    #[test]
    fn counts_cannot_exceed_input() {
        let mut r = Reader::new(&[0xff, 0xff, 0xff, 0xff]);
        assert_eq!(r.count(), Err(SHORT));
    }
}
