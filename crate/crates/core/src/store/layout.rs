//! On-disk layout of a store segment.
//!
//! ```text
//! [header 4096][metadata copy 0 .. N-1, 4096 each][log region, 4096-aligned]
//! ```
//!
//! All integers are little-endian. Header and metadata blocks end with a
//! CRC-32 of their first 4092 bytes.

use super::StoreError;

pub const BLOCK: u64 = 4096;
pub const CRC_AT: usize = 4092;
pub const HEADER_MAGIC: &[u8; 4] = b"LTSS";
pub const META_MAGIC: &[u8; 4] = b"LTSM";
pub const FORMAT_VERSION: u8 = 1;
pub const MAX_ZONES: usize = 8;
pub const DEFAULT_ROLLING_COUNT: u32 = 3;

const SCHEMA_TEXT_AT: usize = 180;
pub const MAX_SCHEMA_TEXT: usize = CRC_AT - SCHEMA_TEXT_AT;

/// A contiguous byte range of the backing device given to the log.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Zone {
    pub offset: u64,
    pub len: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Header {
    pub schema_hash: u32,
    pub record_size: u32,
    pub capacity: u64,
    pub rolling_count: u32,
    pub zones: Vec<Zone>,
    pub schema_text: String,
}

impl Header {
    pub fn meta_offset(&self, copy: u32) -> u64 {
        BLOCK * (1 + u64::from(copy))
    }

    pub fn log_offset(&self) -> u64 {
        self.zones[0].offset
    }

    pub fn record_offset(&self, slot: u64) -> u64 {
        self.log_offset() + slot * u64::from(self.record_size)
    }

    /// Bytes from the start of the device to the end of the log region.
    pub fn total_len(&self) -> u64 {
        let z = self.zones[0];
        z.offset + z.len
    }

    pub fn for_new(schema_hash: u32, record_size: u32, capacity: u64, rolling_count: u32, schema_text: String) -> Self {
        let log_offset = BLOCK * (1 + u64::from(rolling_count));
        let log_len = (capacity * u64::from(record_size)).div_ceil(BLOCK) * BLOCK;
        Header {
            schema_hash,
            record_size,
            capacity,
            rolling_count,
            zones: vec![Zone { offset: log_offset, len: log_len }],
            schema_text,
        }
    }

    pub fn encode(&self) -> Result<[u8; BLOCK as usize], StoreError> {
        let mut b = [0u8; BLOCK as usize];
        if self.schema_text.len() > MAX_SCHEMA_TEXT {
            return Err(StoreError::BadHeader(format!("schema text is {} bytes, limit {MAX_SCHEMA_TEXT}", self.schema_text.len())));
        }
        if self.zones.is_empty() || self.zones.len() > MAX_ZONES {
            return Err(StoreError::BadHeader(format!("{} zones", self.zones.len())));
        }
        b[0..4].copy_from_slice(HEADER_MAGIC);
        b[4] = FORMAT_VERSION;
        b[8..12].copy_from_slice(&self.schema_hash.to_le_bytes());
        b[12..16].copy_from_slice(&self.record_size.to_le_bytes());
        b[16..24].copy_from_slice(&self.capacity.to_le_bytes());
        b[24..28].copy_from_slice(&self.rolling_count.to_le_bytes());
        b[28..32].copy_from_slice(&(self.zones.len() as u32).to_le_bytes());
        b[32..40].copy_from_slice(&BLOCK.to_le_bytes());
        b[40..48].copy_from_slice(&self.log_offset().to_le_bytes());
        for (i, z) in self.zones.iter().enumerate() {
            let at = 48 + i * 16;
            b[at..at + 8].copy_from_slice(&z.offset.to_le_bytes());
            b[at + 8..at + 16].copy_from_slice(&z.len.to_le_bytes());
        }
        b[176..180].copy_from_slice(&(self.schema_text.len() as u32).to_le_bytes());
        b[SCHEMA_TEXT_AT..SCHEMA_TEXT_AT + self.schema_text.len()].copy_from_slice(self.schema_text.as_bytes());
        seal(&mut b);
        Ok(b)
    }

    pub fn decode(b: &[u8]) -> Result<Self, StoreError> {
        let bad = |m: &str| StoreError::BadHeader(m.to_string());
        if b.len() < BLOCK as usize || &b[0..4] != HEADER_MAGIC {
            return Err(bad("missing LTSS magic"));
        }
        if b[4] != FORMAT_VERSION {
            return Err(StoreError::BadHeader(format!("unsupported format version {}", b[4])));
        }
        if !verify(b) {
            return Err(bad("header checksum mismatch"));
        }
        let zone_count = u32_at(b, 28) as usize;
        if zone_count == 0 || zone_count > MAX_ZONES {
            return Err(bad("bad zone count"));
        }
        let zones = (0..zone_count)
            .map(|i| Zone { offset: u64_at(b, 48 + i * 16), len: u64_at(b, 56 + i * 16) })
            .collect();
        let text_len = u32_at(b, 176) as usize;
        if text_len > MAX_SCHEMA_TEXT {
            return Err(bad("schema text length"));
        }
        let schema_text = String::from_utf8(b[SCHEMA_TEXT_AT..SCHEMA_TEXT_AT + text_len].to_vec())
            .map_err(|_| bad("schema text is not UTF-8"))?;
        Ok(Header {
            schema_hash: u32_at(b, 8),
            record_size: u32_at(b, 12),
            capacity: u64_at(b, 16),
            rolling_count: u32_at(b, 24),
            zones,
            schema_text,
        })
    }
}

/// One rolling metadata copy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct BlockMetadata {
    pub generation: u64,
    /// Next physical slot to write.
    pub head: u64,
    pub wrapped: bool,
    /// Records ever appended.
    pub total: u64,
    /// Oldest live sequence number.
    pub live_start: u64,
    pub record_size: u32,
    pub schema_hash: u32,
    /// Epoch microseconds of the oldest / newest live record (0 when empty).
    pub min_time: u64,
    pub max_time: u64,
}

impl BlockMetadata {
    pub fn encode(&self, copy: u32) -> [u8; BLOCK as usize] {
        let mut b = [0u8; BLOCK as usize];
        b[0..4].copy_from_slice(META_MAGIC);
        b[4] = FORMAT_VERSION;
        b[8..16].copy_from_slice(&self.generation.to_le_bytes());
        b[16..24].copy_from_slice(&self.head.to_le_bytes());
        b[24] = u8::from(self.wrapped);
        b[32..40].copy_from_slice(&self.total.to_le_bytes());
        b[40..48].copy_from_slice(&self.live_start.to_le_bytes());
        b[48..52].copy_from_slice(&self.record_size.to_le_bytes());
        b[52..56].copy_from_slice(&self.schema_hash.to_le_bytes());
        b[56..64].copy_from_slice(&self.min_time.to_le_bytes());
        b[64..72].copy_from_slice(&self.max_time.to_le_bytes());
        b[72..76].copy_from_slice(&copy.to_le_bytes());
        seal(&mut b);
        b
    }

    /// Decodes a copy; `None` if the magic or checksum is wrong.
    pub fn decode(b: &[u8]) -> Option<Self> {
        if b.len() < BLOCK as usize || &b[0..4] != META_MAGIC || b[4] != FORMAT_VERSION || !verify(b) {
            return None;
        }
        Some(BlockMetadata {
            generation: u64_at(b, 8),
            head: u64_at(b, 16),
            wrapped: b[24] != 0,
            total: u64_at(b, 32),
            live_start: u64_at(b, 40),
            record_size: u32_at(b, 48),
            schema_hash: u32_at(b, 52),
            min_time: u64_at(b, 56),
            max_time: u64_at(b, 64),
        })
    }
}

fn seal(b: &mut [u8]) {
    let crc = crc32fast::hash(&b[..CRC_AT]);
    b[CRC_AT..CRC_AT + 4].copy_from_slice(&crc.to_le_bytes());
}

fn verify(b: &[u8]) -> bool {
    crc32fast::hash(&b[..CRC_AT]) == u32_at(b, CRC_AT)
}

fn u32_at(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(b[at..at + 4].try_into().unwrap())
}

fn u64_at(b: &[u8], at: usize) -> u64 {
    u64::from_le_bytes(b[at..at + 8].try_into().unwrap())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_round_trip_and_layout() {
        let h = Header::for_new(0xdead_beef, 28, 10, 3, "schema s\n".into());
        assert_eq!(h.log_offset(), 4 * BLOCK);
        assert_eq!(h.total_len(), 5 * BLOCK);
        assert_eq!(h.record_offset(2), 4 * BLOCK + 56);
        let b = h.encode().unwrap();
        assert_eq!(&b[..4], b"LTSS");
        assert_eq!(Header::decode(&b).unwrap(), h);
        let mut torn = b;
        torn[100] ^= 1;
        assert!(Header::decode(&torn).is_err());
    }

    #[test]
    fn metadata_checksum() {
        let m = BlockMetadata { generation: 7, head: 3, wrapped: true, total: 13, live_start: 3, record_size: 28, schema_hash: 1, min_time: 5, max_time: 9 };
        let b = m.encode(1);
        assert_eq!(BlockMetadata::decode(&b), Some(m));
        let mut torn = b;
        torn[CRC_AT] ^= 0xff;
        assert_eq!(BlockMetadata::decode(&torn), None);
        assert_eq!(BlockMetadata::decode(&[0u8; 4096]), None);
    }
}
