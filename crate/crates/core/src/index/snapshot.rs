//! Persistent copy of the index for fast restart.
//!
//! ```text
//! "LTSI" u32 version, u32 schema_hash, u32 0,
//! u64 high_water, u64 live_start, u64 last_ctime, u8 has_last, [7 pad],
//! 6 x { u64 n, n x (u64 first_seq, u64 ctime) },
//! u32 crc32 of everything before it
//! ```

use std::fs;
use std::io::Write;
use std::path::Path;

use super::{IndexError, IndexWriter};
use crate::ctime::CompositeTime;
use crate::store::StoreReader;

pub const SNAPSHOT_MAGIC: &[u8; 4] = b"LTSI";
const VERSION: u32 = 1;
const REPLAY_BATCH: u64 = 4096;

impl IndexWriter {
    /// Writes the index to `path` atomically (temp file and rename).
    pub fn write_snapshot(&self, path: &Path, schema_hash: u32) -> Result<(), IndexError> {
        let mut b = Vec::with_capacity(64);
        b.extend_from_slice(SNAPSHOT_MAGIC);
        b.extend_from_slice(&VERSION.to_le_bytes());
        b.extend_from_slice(&schema_hash.to_le_bytes());
        b.extend_from_slice(&0u32.to_le_bytes());
        b.extend_from_slice(&self.next_seq.to_le_bytes());
        b.extend_from_slice(&self.live_start.to_le_bytes());
        b.extend_from_slice(&self.last.map_or(0, |c| c.to_bits()).to_le_bytes());
        b.push(u8::from(self.last.is_some()));
        b.extend_from_slice(&[0; 7]);
        for level in 0..6 {
            let entries = self.raw_entries(level);
            b.extend_from_slice(&(entries.len() as u64).to_le_bytes());
            for (s, c) in entries {
                b.extend_from_slice(&s.to_le_bytes());
                b.extend_from_slice(&c.to_le_bytes());
            }
        }
        let crc = crc32fast::hash(&b);
        b.extend_from_slice(&crc.to_le_bytes());

        let tmp = path.with_extension("idx.tmp");
        let mut f = fs::File::create(&tmp)?;
        f.write_all(&b)?;
        f.sync_all()?;
        fs::rename(&tmp, path)?;
        Ok(())
    }
}

struct Parsed {
    schema_hash: u32,
    high_water: u64,
    live_start: u64,
    last: Option<CompositeTime>,
    lists: [Vec<(u64, u64)>; 6],
}

fn parse(b: &[u8]) -> Result<Parsed, IndexError> {
    let bad = |m: &str| IndexError::BadSnapshot(m.to_string());
    if b.len() < 56 || &b[..4] != SNAPSHOT_MAGIC {
        return Err(bad("missing LTSI magic"));
    }
    let (body, crc) = b.split_at(b.len() - 4);
    if crc32fast::hash(body) != u32::from_le_bytes(crc.try_into().unwrap()) {
        return Err(bad("checksum mismatch"));
    }
    let mut at = 4;
    let u32_ = |at: &mut usize| -> u32 {
        let v = u32::from_le_bytes(body[*at..*at + 4].try_into().unwrap());
        *at += 4;
        v
    };
    if u32_(&mut at) != VERSION {
        return Err(bad("unsupported version"));
    }
    let schema_hash = u32_(&mut at);
    at += 4;
    let u64_ = |at: &mut usize| -> Result<u64, IndexError> {
        let s = body.get(*at..*at + 8).ok_or_else(|| IndexError::BadSnapshot("truncated".into()))?;
        *at += 8;
        Ok(u64::from_le_bytes(s.try_into().unwrap()))
    };
    let high_water = u64_(&mut at)?;
    let live_start = u64_(&mut at)?;
    let last_bits = u64_(&mut at)?;
    let has_last = body[at] != 0;
    at += 8;
    let mut lists: [Vec<(u64, u64)>; 6] = Default::default();
    for list in &mut lists {
        let n = u64_(&mut at)?;
        if n > (body.len() as u64) / 16 {
            return Err(bad("entry count exceeds file size"));
        }
        for _ in 0..n {
            list.push((u64_(&mut at)?, u64_(&mut at)?));
        }
    }
    if at != body.len() {
        return Err(bad("trailing bytes"));
    }
    Ok(Parsed { schema_hash, high_water, live_start, last: has_last.then(|| CompositeTime::from_bits(last_bits)), lists })
}

fn replay(w: &mut IndexWriter, store: &StoreReader, end: u64) -> Result<(), IndexError> {
    let rs = store.record_size();
    let toff = store.schema().time_field().offset;
    let mut buf = Vec::new();
    let mut seq = w.next_seq();
    while seq < end {
        let n = REPLAY_BATCH.min(end - seq);
        store.read_range(seq, n, &mut buf)?;
        for (i, rec) in buf.chunks_exact(rs).enumerate() {
            let ct = CompositeTime::from_le_bytes(rec[toff..toff + 8].try_into().unwrap());
            w.append(seq + i as u64, ct)?;
        }
        seq += n;
    }
    Ok(())
}

/// Builds an index from scratch over the store's live window.
pub fn rebuild(store: &StoreReader) -> Result<IndexWriter, IndexError> {
    let live = store.live_window();
    let mut w = IndexWriter::starting_at(live.start);
    replay(&mut w, store, live.end)?;
    w.publish();
    Ok(w)
}

/// Loads the snapshot at `path` and indexes any records appended after it.
/// Falls back to a full rebuild when there is no usable snapshot or when
/// roll-around has overwritten records past its high-water mark. Returns
/// whether a rebuild happened.
pub fn load_or_rebuild(path: &Path, store: &StoreReader) -> Result<(IndexWriter, bool), IndexError> {
    let bytes = match fs::read(path) {
        Ok(b) => b,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok((rebuild(store)?, true)),
        Err(e) => return Err(e.into()),
    };
    let p = match parse(&bytes) {
        Ok(p) if p.schema_hash == store.schema().layout_hash() => p,
        Ok(_) => return Ok((rebuild(store)?, true)),
        Err(e) => {
            log::warn!("discarding index snapshot {}: {e}", path.display());
            return Ok((rebuild(store)?, true));
        }
    };
    let live = store.live_window();
    if p.high_water > live.end {
        return Err(IndexError::SnapshotAhead { snapshot: p.high_water, store: live.end });
    }
    if p.high_water < live.start {
        return Ok((rebuild(store)?, true));
    }
    let mut w = IndexWriter::from_raw(p.high_water, p.live_start, p.last, p.lists);
    replay(&mut w, store, live.end)?;
    w.set_live_start(live.start);
    w.publish();
    Ok((w, false))
}
