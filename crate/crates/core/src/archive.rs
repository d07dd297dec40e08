//! Minimal ZIP container support: a deflating writer and a reader for the entries it
//! produces (stored or deflated, no ZIP64, no encryption).

use std::io::{Read, Write};

use flate2::read::DeflateDecoder;
use flate2::write::DeflateEncoder;
use flate2::Compression;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ArchiveError {
    #[error("not a zip archive: {0}")]
    Format(&'static str),
    #[error("unsupported compression method {0}")]
    Method(u16),
    #[error("crc mismatch in {0}")]
    Crc(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

// Fixed DOS timestamp (1980-01-01 00:00) so identical inputs give identical bytes.
const DOS_TIME: u16 = 0;
const DOS_DATE: u16 = (1 << 5) | 1;

struct CentralEntry {
    name: Vec<u8>,
    crc: u32,
    compressed: u32,
    uncompressed: u32,
    offset: u32,
}

#[derive(Default)]
pub struct ZipWriter {
    buf: Vec<u8>,
    entries: Vec<CentralEntry>,
}

impl ZipWriter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: &str, data: &[u8]) -> std::io::Result<()> {
        let mut enc = DeflateEncoder::new(Vec::new(), Compression::default());
        enc.write_all(data)?;
        let compressed = enc.finish()?;
        let crc = crc32fast::hash(data);
        let offset = self.buf.len() as u32;
        let name_bytes = name.as_bytes().to_vec();

        let b = &mut self.buf;
        b.extend_from_slice(&0x0403_4b50u32.to_le_bytes());
        b.extend_from_slice(&20u16.to_le_bytes()); // version needed
        b.extend_from_slice(&0x0800u16.to_le_bytes()); // UTF-8 names
        b.extend_from_slice(&8u16.to_le_bytes()); // deflate
        b.extend_from_slice(&DOS_TIME.to_le_bytes());
        b.extend_from_slice(&DOS_DATE.to_le_bytes());
        b.extend_from_slice(&crc.to_le_bytes());
        b.extend_from_slice(&(compressed.len() as u32).to_le_bytes());
        b.extend_from_slice(&(data.len() as u32).to_le_bytes());
        b.extend_from_slice(&(name_bytes.len() as u16).to_le_bytes());
        b.extend_from_slice(&0u16.to_le_bytes());
        b.extend_from_slice(&name_bytes);
        b.extend_from_slice(&compressed);

        self.entries.push(CentralEntry {
            name: name_bytes,
            crc,
            compressed: compressed.len() as u32,
            uncompressed: data.len() as u32,
            offset,
        });
        Ok(())
    }

    pub fn finish(mut self) -> Vec<u8> {
        let cd_start = self.buf.len() as u32;
        for e in &self.entries {
            let b = &mut self.buf;
            b.extend_from_slice(&0x0201_4b50u32.to_le_bytes());
            b.extend_from_slice(&20u16.to_le_bytes()); // version made by
            b.extend_from_slice(&20u16.to_le_bytes());
            b.extend_from_slice(&0x0800u16.to_le_bytes());
            b.extend_from_slice(&8u16.to_le_bytes());
            b.extend_from_slice(&DOS_TIME.to_le_bytes());
            b.extend_from_slice(&DOS_DATE.to_le_bytes());
            b.extend_from_slice(&e.crc.to_le_bytes());
            b.extend_from_slice(&e.compressed.to_le_bytes());
            b.extend_from_slice(&e.uncompressed.to_le_bytes());
            b.extend_from_slice(&(e.name.len() as u16).to_le_bytes());
            b.extend_from_slice(&[0; 8]); // extra len, comment len, disk, internal attrs
            b.extend_from_slice(&0u32.to_le_bytes()); // external attrs
            b.extend_from_slice(&e.offset.to_le_bytes());
            b.extend_from_slice(&e.name);
        }
        let cd_size = self.buf.len() as u32 - cd_start;
        let n = self.entries.len() as u16;
        let b = &mut self.buf;
        b.extend_from_slice(&0x0605_4b50u32.to_le_bytes());
        b.extend_from_slice(&[0; 4]);
        b.extend_from_slice(&n.to_le_bytes());
        b.extend_from_slice(&n.to_le_bytes());
        b.extend_from_slice(&cd_size.to_le_bytes());
        b.extend_from_slice(&cd_start.to_le_bytes());
        b.extend_from_slice(&0u16.to_le_bytes());
        self.buf
    }
}

fn u16_at(d: &[u8], i: usize) -> Result<u16, ArchiveError> {
    d.get(i..i + 2)
        .map(|s| u16::from_le_bytes([s[0], s[1]]))
        .ok_or(ArchiveError::Format("truncated"))
}

fn u32_at(d: &[u8], i: usize) -> Result<u32, ArchiveError> {
    d.get(i..i + 4)
        .map(|s| u32::from_le_bytes([s[0], s[1], s[2], s[3]]))
        .ok_or(ArchiveError::Format("truncated"))
}

/// Reads every entry via the central directory, verifying CRCs.
pub fn read_entries(data: &[u8]) -> Result<Vec<(String, Vec<u8>)>, ArchiveError> {
    if data.len() < 22 {
        return Err(ArchiveError::Format("too short"));
    }
    let eocd = (0..=data.len() - 22)
        .rev()
        .find(|&i| data[i..i + 4] == [0x50, 0x4b, 0x05, 0x06])
        .ok_or(ArchiveError::Format("no end of central directory"))?;
    let count = u16_at(data, eocd + 10)? as usize;
    let mut pos = u32_at(data, eocd + 16)? as usize;
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        if u32_at(data, pos)? != 0x0201_4b50 {
            return Err(ArchiveError::Format("bad central directory entry"));
        }
        let method = u16_at(data, pos + 10)?;
        let crc = u32_at(data, pos + 16)?;
        let csize = u32_at(data, pos + 20)? as usize;
        let name_len = u16_at(data, pos + 28)? as usize;
        let extra_len = u16_at(data, pos + 30)? as usize;
        let comment_len = u16_at(data, pos + 32)? as usize;
        let local = u32_at(data, pos + 42)? as usize;
        let name = data
            .get(pos + 46..pos + 46 + name_len)
            .ok_or(ArchiveError::Format("truncated name"))?;
        let name = String::from_utf8_lossy(name).into_owned();
        pos += 46 + name_len + extra_len + comment_len;

        if u32_at(data, local)? != 0x0403_4b50 {
            return Err(ArchiveError::Format("bad local header"));
        }
        let start = local + 30 + u16_at(data, local + 26)? as usize + u16_at(data, local + 28)? as usize;
        let raw = data
            .get(start..start + csize)
            .ok_or(ArchiveError::Format("truncated entry"))?;
        let content = match method {
            0 => raw.to_vec(),
            8 => {
                let mut v = Vec::new();
                DeflateDecoder::new(raw).read_to_end(&mut v)?;
                v
            }
            m => return Err(ArchiveError::Method(m)),
        };
        if crc32fast::hash(&content) != crc {
            return Err(ArchiveError::Crc(name));
        }
        out.push((name, content));
    }
    Ok(out)
}
