//! Length-prefixed field encoding shared by handshake messages and certificates.
//!
//! Every variable-length field is written as a 3-byte big-endian length
//! followed by the bytes themselves.

use thiserror::Error;

/// Largest length representable in a 3-byte prefix.
pub const MAX_FIELD_LEN: usize = (1 << 24) - 1;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CodecError {
    #[error("field of {0} bytes exceeds the 3-byte length prefix")]
    FieldTooLong(usize),
    #[error("{0}")]
    Malformed(&'static str),
}

pub fn put_field(out: &mut Vec<u8>, bytes: &[u8]) -> Result<(), CodecError> {
    if bytes.len() > MAX_FIELD_LEN {
        return Err(CodecError::FieldTooLong(bytes.len()));
    }
    let len = bytes.len() as u32;
    out.extend_from_slice(&len.to_be_bytes()[1..]);
    out.extend_from_slice(bytes);
    Ok(())
}

/// Encoded size of one field carrying `len` bytes.
pub const fn field_size(len: usize) -> usize {
    3 + len
}

/// Cursor over an encoded buffer.
pub struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Reader { buf, pos: 0 }
    }

    pub fn take(&mut self, n: usize, what: &'static str) -> Result<&'a [u8], CodecError> {
        if self.buf.len() - self.pos < n {
            return Err(CodecError::Malformed(what));
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    pub fn u8(&mut self) -> Result<u8, CodecError> {
        Ok(self.take(1, "truncated before type byte")?[0])
    }

    pub fn field(&mut self) -> Result<&'a [u8], CodecError> {
        let p = self.take(3, "truncated length prefix")?;
        let len = u32::from_be_bytes([0, p[0], p[1], p[2]]) as usize;
        self.take(len, "field shorter than its length prefix")
    }

    pub fn u64_field(&mut self) -> Result<u64, CodecError> {
        let f = self.field()?;
        let arr: [u8; 8] = f
            .try_into()
            .map_err(|_| CodecError::Malformed("integer field is not 8 bytes"))?;
        Ok(u64::from_be_bytes(arr))
    }

    pub fn str_field(&mut self) -> Result<&'a str, CodecError> {
        std::str::from_utf8(self.field()?).map_err(|_| CodecError::Malformed("text field is not UTF-8"))
    }

    pub fn is_empty(&self) -> bool {
        self.pos == self.buf.len()
    }

    pub fn finish(self) -> Result<(), CodecError> {
        if self.is_empty() {
            Ok(())
        } else {
            Err(CodecError::Malformed("trailing bytes"))
        }
    }
}
