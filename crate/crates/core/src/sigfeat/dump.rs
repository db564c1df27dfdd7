//! Binary feature dump.
//!
//! Layout, all integers and floats little-endian:
//!
//! ```text
//! "SIGF" | version u32 | channels u32 | grid u32 | count u32
//! count × ( channels·grid·grid f32 values | label u32 )
//! ```
//!
//! An unlabeled record stores `u32::MAX` as its label index.

use std::io::{Read, Write};

use super::featurize::FeatureMap;
use crate::error::{Error, Result};

pub const DUMP_MAGIC: &[u8; 4] = b"SIGF";
pub const DUMP_VERSION: u32 = 1;
const NO_LABEL: u32 = u32::MAX;

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureDump {
    pub channels: usize,
    pub grid: usize,
    pub records: Vec<(FeatureMap, Option<u32>)>,
}

fn put_u32(w: &mut impl Write, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::FeatureDump(format!("{v} does not fit in u32")))?;
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

pub fn write_dump(w: &mut impl Write, dump: &FeatureDump) -> Result<()> {
    w.write_all(DUMP_MAGIC)?;
    put_u32(w, DUMP_VERSION as usize)?;
    put_u32(w, dump.channels)?;
    put_u32(w, dump.grid)?;
    put_u32(w, dump.records.len())?;
    let mut buf = Vec::new();
    for (map, label) in &dump.records {
        if map.channels() != dump.channels || map.size() != dump.grid {
            return Err(Error::FeatureDump(format!(
                "record of shape {}x{} in a {}x{} dump",
                map.channels(),
                map.size(),
                dump.channels,
                dump.grid
            )));
        }
        buf.clear();
        buf.extend(map.data().iter().flat_map(|v| v.to_le_bytes()));
        buf.extend(label.unwrap_or(NO_LABEL).to_le_bytes());
        w.write_all(&buf)?;
    }
    Ok(())
}

fn get_u32(r: &mut impl Read, what: &str) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(|e| Error::FeatureDump(format!("reading {what}: {e}")))?;
    Ok(u32::from_le_bytes(b))
}

pub fn read_dump(r: &mut impl Read) -> Result<FeatureDump> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(|e| Error::FeatureDump(format!("reading magic: {e}")))?;
    if &magic != DUMP_MAGIC {
        return Err(Error::FeatureDump("bad magic, not a SIGF file".into()));
    }
    let version = get_u32(r, "version")?;
    if version != DUMP_VERSION {
        return Err(Error::FeatureDump(format!("unsupported version {version}")));
    }
    let channels = get_u32(r, "channels")? as usize;
    let grid = get_u32(r, "grid")? as usize;
    let count = get_u32(r, "count")? as usize;
    let n = channels * grid * grid;
    let mut bytes = vec![0u8; n * 4];
    let mut records = Vec::with_capacity(count.min(1 << 16));
    for i in 0..count {
        r.read_exact(&mut bytes).map_err(|e| Error::FeatureDump(format!("record {i}: {e}")))?;
        let data = bytes.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
        let label = get_u32(r, "label")?;
        records.push((FeatureMap::from_data(channels, grid, data)?, (label != NO_LABEL).then_some(label)));
    }
    Ok(FeatureDump { channels, grid, records })
}
