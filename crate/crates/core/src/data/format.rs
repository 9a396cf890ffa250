//! Dataset files.
//!
//! Binary layout, all little-endian:
//!
//! ```text
//! "CPD1"            4 bytes
//! version  u32      = 1
//! state_dim u32
//! action_dim u32
//! count    u64
//! count × record    f32 fields: state ‖ action ‖ reward ‖ next_state ‖ done
//! ```
//!
//! The reader requires the file length to equal the header-implied length.

use std::fs;
use std::path::Path;

use super::{Dataset, DatasetHeader, Transition};
use crate::error::{Error, FormatError, Result};

pub const DATASET_MAGIC: [u8; 4] = *b"CPD1";
pub const DATASET_VERSION: u32 = 1;
const HEADER_BYTES: u64 = 4 + 4 + 4 + 4 + 8;

fn record_floats(h: &DatasetHeader) -> usize {
    2 * h.state_dim + h.action_dim + 2
}

pub fn write_dataset(path: impl AsRef<Path>, header: DatasetHeader, transitions: &[Transition]) -> Result<()> {
    let path = path.as_ref();
    for t in transitions {
        header.check(t)?;
    }
    let state_dim = u32::try_from(header.state_dim).map_err(|_| Error::usage("state_dim too large"))?;
    let action_dim = u32::try_from(header.action_dim).map_err(|_| Error::usage("action_dim too large"))?;
    let mut buf = Vec::with_capacity(HEADER_BYTES as usize + 4 * record_floats(&header) * transitions.len());
    buf.extend_from_slice(&DATASET_MAGIC);
    buf.extend_from_slice(&DATASET_VERSION.to_le_bytes());
    buf.extend_from_slice(&state_dim.to_le_bytes());
    buf.extend_from_slice(&action_dim.to_le_bytes());
    buf.extend_from_slice(&(transitions.len() as u64).to_le_bytes());
    let mut put = |v: f64| buf.extend_from_slice(&(v as f32).to_le_bytes());
    for t in transitions {
        t.state.iter().for_each(|&v| put(v));
        t.action.iter().for_each(|&v| put(v));
        put(t.reward);
        t.next_state.iter().for_each(|&v| put(v));
        put(if t.done { 1.0 } else { 0.0 });
    }
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn read_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_dataset(&bytes).map_err(|kind| Error::format(path, kind))
}

fn u32_at(b: &[u8], off: usize) -> u32 {
    u32::from_le_bytes(b[off..off + 4].try_into().unwrap())
}

fn parse_dataset(b: &[u8]) -> std::result::Result<Dataset, FormatError> {
    let found = b.len() as u64;
    if b.len() < 4 {
        return Err(FormatError::Truncated {
            expected: HEADER_BYTES,
            found,
        });
    }
    let magic: [u8; 4] = b[0..4].try_into().unwrap();
    if magic != DATASET_MAGIC {
        return Err(FormatError::BadMagic {
            found: magic,
            expected: DATASET_MAGIC,
        });
    }
    if found < HEADER_BYTES {
        return Err(FormatError::Truncated {
            expected: HEADER_BYTES,
            found,
        });
    }
    let version = u32_at(b, 4);
    if version != DATASET_VERSION {
        return Err(FormatError::Version(version));
    }
    let header = DatasetHeader {
        state_dim: u32_at(b, 8) as usize,
        action_dim: u32_at(b, 12) as usize,
    };
    let count = u64::from_le_bytes(b[16..24].try_into().unwrap());
    let rec_bytes = 4 * record_floats(&header) as u64;
    let expected = count
        .checked_mul(rec_bytes)
        .and_then(|n| n.checked_add(HEADER_BYTES))
        .ok_or_else(|| FormatError::Invalid(format!("record count {count} overflows")))?;
    if found < expected {
        return Err(FormatError::Truncated { expected, found });
    }
    if found > expected {
        return Err(FormatError::TrailingData { expected, found });
    }
    let mut off = HEADER_BYTES as usize;
    let mut take = |n: usize| -> Vec<f64> {
        let v = b[off..off + 4 * n]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect();
        off += 4 * n;
        v
    };
    let mut transitions = Vec::with_capacity(count as usize);
    for i in 0..count {
        let state = take(header.state_dim);
        let action = take(header.action_dim);
        let reward = take(1)[0];
        let next_state = take(header.state_dim);
        let done = take(1)[0];
        let done = if done == 0.0 {
            false
        } else if done == 1.0 {
            true
        } else {
            return Err(FormatError::Invalid(format!("record {i}: done flag {done} is not 0 or 1")));
        };
        transitions.push(Transition {
            state,
            action,
            reward,
            next_state,
            done,
        });
    }
    Ok(Dataset {
        header,
        transitions,
    })
}

/// Reads a hand-authored CSV fixture with header `s0..,a0..,r,ns0..,done`.
pub fn read_csv(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let invalid = |msg: String| Error::format(path, FormatError::Invalid(msg));
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| invalid(e.to_string()))?;
    let names: Vec<String> = reader
        .headers()
        .map_err(|e| invalid(e.to_string()))?
        .iter()
        .map(str::to_owned)
        .collect();
    let count_prefix = |p: &str| names.iter().filter(|n| is_indexed(n, p)).count();
    let state_dim = count_prefix("s");
    let action_dim = count_prefix("a");
    let mut expected: Vec<String> = (0..state_dim).map(|i| format!("s{i}")).collect();
    expected.extend((0..action_dim).map(|i| format!("a{i}")));
    expected.push("r".into());
    expected.extend((0..state_dim).map(|i| format!("ns{i}")));
    expected.push("done".into());
    if names != expected {
        return Err(invalid(format!(
            "header {names:?} does not match expected layout {expected:?}"
        )));
    }
    let header = DatasetHeader {
        state_dim,
        action_dim,
    };
    let mut transitions = Vec::new();
    for (line, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| invalid(e.to_string()))?;
        let vals = rec
            .iter()
            .map(|f| f.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| invalid(format!("row {}: {e}", line + 1)))?;
        let done = match vals[vals.len() - 1] {
            d if d == 0.0 => false,
            d if d == 1.0 => true,
            d => return Err(invalid(format!("row {}: done flag {d} is not 0 or 1", line + 1))),
        };
        let (s, rest) = vals.split_at(state_dim);
        let (a, rest) = rest.split_at(action_dim);
        transitions.push(Transition {
            state: s.to_vec(),
            action: a.to_vec(),
            reward: rest[0],
            next_state: rest[1..1 + state_dim].to_vec(),
            done,
        });
    }
    Dataset::new(header, transitions)
}

fn is_indexed(name: &str, prefix: &str) -> bool {
    name.strip_prefix(prefix)
        .is_some_and(|rest| !rest.is_empty() && rest.bytes().all(|c| c.is_ascii_digit()))
}
