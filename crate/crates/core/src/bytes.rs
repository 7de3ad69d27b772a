//! Byte- and bit-level stream primitives shared by every payload format.
//!
//! Multi-byte scalars are little-endian. Bit streams are written most
//! significant bit first and padded with zero bits to the next byte boundary.
//! Readers carry the absolute offset of their first byte so errors point into
//! the enclosing container.

use crate::{Error, Result};

/// Appends an unsigned LEB128-style varint (7 bits per byte, high bit = continuation).
pub fn write_uvarint(out: &mut Vec<u8>, mut value: u64) {
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

pub fn zigzag(v: i64) -> u64 {
    ((v << 1) ^ (v >> 63)) as u64
}

pub fn unzigzag(v: u64) -> i64 {
    ((v >> 1) as i64) ^ -((v & 1) as i64)
}

pub fn write_f32(out: &mut Vec<u8>, v: f32) {
    out.extend_from_slice(&v.to_le_bytes());
}

pub fn write_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

pub fn write_u16(out: &mut Vec<u8>, v: u16) {
    out.extend_from_slice(&v.to_le_bytes());
}

/// Appends a `u32` byte length followed by the section bytes.
pub fn write_section(out: &mut Vec<u8>, section: &[u8]) {
    write_u32(out, section.len() as u32);
    out.extend_from_slice(section);
}

/// Cursor over a byte slice.
#[derive(Debug, Clone)]
pub struct ByteReader<'a> {
    data: &'a [u8],
    pos: usize,
    base: usize,
}

impl<'a> ByteReader<'a> {
    pub fn new(data: &'a [u8]) -> Self {
        Self::with_base(data, 0)
    }

    /// Reader whose reported offsets start at `base`.
    pub fn with_base(data: &'a [u8], base: usize) -> Self {
        Self { data, pos: 0, base }
    }

    /// Absolute offset of the next unread byte.
    pub fn offset(&self) -> usize {
        self.base + self.pos
    }

    pub fn remaining(&self) -> usize {
        self.data.len() - self.pos
    }

    pub fn is_empty(&self) -> bool {
        self.remaining() == 0
    }

    pub fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.remaining() < n {
            return Err(Error::Truncated {
                offset: self.offset(),
            });
        }
        let s = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    pub fn u16(&mut self) -> Result<u16> {
        let b = self.take(2)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    pub fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    pub fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_bits(self.u32()?))
    }

    pub fn uvarint(&mut self) -> Result<u64> {
        let start = self.offset();
        let mut value = 0u64;
        for shift in (0..64).step_by(7) {
            let byte = self.u8()?;
            let chunk = (byte & 0x7f) as u64;
            if shift == 63 && chunk > 1 {
                return Err(Error::corrupt(start, "varint overflows 64 bits"));
            }
            value |= chunk << shift;
            if byte & 0x80 == 0 {
                return Ok(value);
            }
        }
        Err(Error::corrupt(start, "varint longer than 10 bytes"))
    }

    /// Reads a `u32`-length-prefixed section and returns a reader over it.
    pub fn section(&mut self) -> Result<ByteReader<'a>> {
        let len_offset = self.offset();
        let len = self.u32()? as usize;
        if len > self.remaining() {
            return Err(Error::corrupt(
                len_offset,
                format!(
                    "section length {len} exceeds the {} bytes remaining",
                    self.remaining()
                ),
            ));
        }
        let base = self.offset();
        let data = self.take(len)?;
        Ok(ByteReader::with_base(data, base))
    }

    /// Fails unless every byte has been consumed.
    pub fn finish(&self) -> Result<()> {
        if self.remaining() != 0 {
            return Err(Error::corrupt(
                self.offset(),
                format!("{} unexpected trailing bytes", self.remaining()),
            ));
        }
        Ok(())
    }
}

/// MSB-first bit writer.
#[derive(Debug, Default, Clone)]
pub struct BitWriter {
    bytes: Vec<u8>,
    acc: u8,
    used: u8,
}

impl BitWriter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push_bit(&mut self, bit: bool) {
        self.acc = (self.acc << 1) | bit as u8;
        self.used += 1;
        if self.used == 8 {
            self.bytes.push(self.acc);
            self.acc = 0;
            self.used = 0;
        }
    }

    /// Writes the low `len` bits of `code`, most significant first.
    pub fn push_bits(&mut self, code: u64, len: u32) {
        for i in (0..len).rev() {
            self.push_bit((code >> i) & 1 == 1);
        }
    }

    pub fn bit_len(&self) -> usize {
        self.bytes.len() * 8 + self.used as usize
    }

    /// Pads to a byte boundary and returns the bytes.
    pub fn finish(mut self) -> Vec<u8> {
        if self.used > 0 {
            self.acc <<= 8 - self.used;
            self.bytes.push(self.acc);
        }
        self.bytes
    }
}

/// MSB-first bit reader over a [`ByteReader`]; consumes whole bytes.
#[derive(Debug)]
pub struct BitReader<'r, 'a> {
    inner: &'r mut ByteReader<'a>,
    acc: u8,
    left: u8,
}

impl<'r, 'a> BitReader<'r, 'a> {
    pub fn new(inner: &'r mut ByteReader<'a>) -> Self {
        Self {
            inner,
            acc: 0,
            left: 0,
        }
    }

    pub fn bit(&mut self) -> Result<bool> {
        if self.left == 0 {
            self.acc = self.inner.u8()?;
            self.left = 8;
        }
        self.left -= 1;
        Ok((self.acc >> self.left) & 1 == 1)
    }

    pub fn offset(&self) -> usize {
        self.inner.offset()
    }

    /// Drops the padding bits of the current byte. Padding must be zero.
    pub fn align(self) -> Result<()> {
        let mask = (1u16 << self.left) as u8 - 1;
        if self.acc & mask != 0 {
            return Err(Error::corrupt(
                self.inner.offset().saturating_sub(1),
                "nonzero padding bits",
            ));
        }
        Ok(())
    }
}

/// Writes a boolean flag stream as an aligned bit section.
pub fn pack_flags(flags: &[bool]) -> Vec<u8> {
    let mut w = BitWriter::new();
    for &f in flags {
        w.push_bit(f);
    }
    w.finish()
}
