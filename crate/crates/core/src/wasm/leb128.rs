//! LEB128 variable-length integers as used by the WebAssembly binary format.

use super::DecodeError;

pub fn write_u32(out: &mut Vec<u8>, value: u32) {
    write_u64(out, value as u64)
}

pub fn write_u64(out: &mut Vec<u8>, mut value: u64) {
    loop {
        let byte = (value & 0x7f) as u8;
        value >>= 7;
        if value == 0 {
            out.push(byte);
            return;
        }
        out.push(byte | 0x80);
    }
}

pub fn write_i32(out: &mut Vec<u8>, value: i32) {
    write_i64(out, value as i64)
}

pub fn write_i64(out: &mut Vec<u8>, mut value: i64) {
    loop {
        let byte = (value & 0x7f) as u8;
        value >>= 7;
        let sign_clear = byte & 0x40 == 0;
        if (value == 0 && sign_clear) || (value == -1 && !sign_clear) {
            out.push(byte);
            return;
        }
        out.push(byte | 0x80);
    }
}

pub fn len_u32(value: u32) -> usize {
    let mut buf = Vec::with_capacity(5);
    write_u32(&mut buf, value);
    buf.len()
}

/// Byte cursor over a borrowed buffer. Offsets in errors are absolute,
/// counted from `base`.
#[derive(Debug, Clone)]
pub struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    base: usize,
}

impl<'a> Reader<'a> {
    pub fn new(bytes: &'a [u8], base: usize) -> Self {
        Reader { bytes, pos: 0, base }
    }

    pub fn offset(&self) -> usize {
        self.base + self.pos
    }

    pub fn position(&self) -> usize {
        self.pos
    }

    pub fn is_empty(&self) -> bool {
        self.pos >= self.bytes.len()
    }

    pub fn remaining(&self) -> &'a [u8] {
        &self.bytes[self.pos..]
    }

    pub fn slice(&self, start: usize, end: usize) -> &'a [u8] {
        &self.bytes[start..end]
    }

    pub fn byte(&mut self) -> Result<u8, DecodeError> {
        let b = *self.bytes.get(self.pos).ok_or(DecodeError::TruncatedInput { offset: self.offset() })?;
        self.pos += 1;
        Ok(b)
    }

    pub fn bytes(&mut self, n: usize) -> Result<&'a [u8], DecodeError> {
        if self.bytes.len() - self.pos < n {
            return Err(DecodeError::TruncatedInput { offset: self.bytes.len() + self.base });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub fn u32(&mut self) -> Result<u32, DecodeError> {
        let start = self.offset();
        let v = self.unsigned(32)?;
        u32::try_from(v).map_err(|_| DecodeError::MalformedLeb128 { offset: start })
    }

    pub fn u64(&mut self) -> Result<u64, DecodeError> {
        self.unsigned(64)
    }

    fn unsigned(&mut self, bits: u32) -> Result<u64, DecodeError> {
        let start = self.offset();
        let max_bytes = bits.div_ceil(7);
        let mut result = 0u64;
        let mut shift = 0u32;
        for i in 0..max_bytes {
            let b = self.byte()?;
            let payload = (b & 0x7f) as u64;
            if i == max_bytes - 1 {
                // Unused high bits of the last byte must be zero.
                let used = bits - shift;
                if used < 7 && payload >> used != 0 {
                    return Err(DecodeError::MalformedLeb128 { offset: start });
                }
            }
            result |= payload << shift;
            if b & 0x80 == 0 {
                return Ok(result);
            }
            shift += 7;
        }
        Err(DecodeError::MalformedLeb128 { offset: start })
    }

    pub fn i32(&mut self) -> Result<i32, DecodeError> {
        let start = self.offset();
        let v = self.signed(32)?;
        i32::try_from(v).map_err(|_| DecodeError::MalformedLeb128 { offset: start })
    }

    pub fn i64(&mut self) -> Result<i64, DecodeError> {
        self.signed(64)
    }

    /// Signed 33-bit value used for block types.
    pub fn s33(&mut self) -> Result<i64, DecodeError> {
        self.signed(33)
    }

    fn signed(&mut self, bits: u32) -> Result<i64, DecodeError> {
        let start = self.offset();
        let max_bytes = bits.div_ceil(7);
        let mut result = 0i64;
        let mut shift = 0u32;
        for i in 0..max_bytes {
            let b = self.byte()?;
            let payload = (b & 0x7f) as i64;
            if i == max_bytes - 1 {
                // The unused bits of the final byte must replicate the sign bit.
                let used = bits - shift;
                if used < 7 {
                    let rest = (b & 0x7f) >> (used - 1);
                    let all_ones = 0x7f >> (used - 1);
                    if rest != 0 && rest != all_ones {
                        return Err(DecodeError::MalformedLeb128 { offset: start });
                    }
                }
            }
            if shift < 64 {
                result |= payload << shift;
            }
            shift += 7;
            if b & 0x80 == 0 {
                if shift < 64 && b & 0x40 != 0 {
                    result |= -1i64 << shift;
                }
                return Ok(result);
            }
        }
        Err(DecodeError::MalformedLeb128 { offset: start })
    }
}
