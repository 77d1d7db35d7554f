//! Little-endian binary encoding helpers shared by the on-disk formats.
//! Every format ends a section with the CRC32 of that section's bytes.

use crate::error::{Error, Result};

#[derive(Default)]
pub struct ByteWriter {
    buf: Vec<u8>,
    section_start: usize,
}

impl ByteWriter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn bytes(&mut self, b: &[u8]) {
        self.buf.extend_from_slice(b);
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

    pub fn f32(&mut self, v: f32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn f64_slice(&mut self, v: &[f64]) {
        for &x in v {
            self.f64(x);
        }
    }

    /// Appends the CRC32 of everything written since the previous section end.
    pub fn end_section(&mut self) {
        let crc = crc32fast::hash(&self.buf[self.section_start..]);
        self.u32(crc);
        self.section_start = self.buf.len();
    }

    pub fn finish_with_crc(mut self) -> Vec<u8> {
        self.end_section();
        self.buf
    }

    pub fn into_inner(self) -> Vec<u8> {
        self.buf
    }
}

pub struct ByteReader<'a> {
    buf: &'a [u8],
    pos: usize,
    section_start: usize,
}

impl<'a> ByteReader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        ByteReader {
            buf,
            pos: 0,
            section_start: 0,
        }
    }

    /// Validates a trailing CRC over the whole buffer before any parsing.
    pub fn with_crc(buf: &'a [u8]) -> Result<Self> {
        if buf.len() < 4 {
            return Err(Error::format("file too short to hold a checksum"));
        }
        let (payload, tail) = buf.split_at(buf.len() - 4);
        let stored = u32::from_le_bytes(tail.try_into().expect("4 bytes"));
        if crc32fast::hash(payload) != stored {
            return Err(Error::format("checksum mismatch (corrupt or truncated file)"));
        }
        Ok(ByteReader {
            buf: payload,
            pos: 0,
            section_start: 0,
        })
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::format("unexpected end of file"));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub fn magic(&mut self, expected: &[u8; 4]) -> Result<()> {
        let m = self.take(4)?;
        if m != expected {
            return Err(Error::format(format!(
                "bad magic {:?}, expected {:?}",
                String::from_utf8_lossy(m),
                String::from_utf8_lossy(expected)
            )));
        }
        Ok(())
    }

    pub fn bytes(&mut self, n: usize) -> Result<&'a [u8]> {
        self.take(n)
    }

    pub fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    pub fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    pub fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    pub fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    pub fn f64_vec(&mut self, n: usize) -> Result<Vec<f64>> {
        if (self.buf.len() - self.pos) / 8 < n {
            return Err(Error::format("unexpected end of file"));
        }
        (0..n).map(|_| self.f64()).collect()
    }

    /// Reads a stored CRC32 and checks it against the bytes of the current
    /// section.
    pub fn end_section(&mut self) -> Result<()> {
        let computed = crc32fast::hash(&self.buf[self.section_start..self.pos]);
        let stored = self.u32()?;
        if computed != stored {
            return Err(Error::format("section checksum mismatch"));
        }
        self.section_start = self.pos;
        Ok(())
    }

    pub fn is_at_end(&self) -> bool {
        self.pos == self.buf.len()
    }

    pub fn finish(&self) -> Result<()> {
        if !self.is_at_end() {
            return Err(Error::format(format!(
                "{} trailing bytes after payload",
                self.buf.len() - self.pos
            )));
        }
        Ok(())
    }
}
