//! `GAMF` feature cache files.
//!
//! Layout (little-endian): `"GAMF"`, version `u32`, patch count `u32`, then
//! per patch: cycle id length `u16`, UTF-8 id bytes, patch index `u32`,
//! label `u8`, and `rows * cols` `f32` values in row-major order. The
//! standard front-end writes 128 x 256 patches.

use std::io::{Read, Write};
use std::path::Path;

use super::patch::{GamPatch, LabeledPatch};
use crate::error::{Error, Result};
use crate::ingest::CycleLabel;

pub const MAGIC: &[u8; 4] = b"GAMF";
pub const VERSION: u32 = 1;

fn bad(message: impl Into<String>) -> Error {
    Error::Format {
        kind: "feature cache",
        message: message.into(),
    }
}

pub fn write_cache(mut w: impl Write, patches: &[LabeledPatch]) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(patches.len() as u32).to_le_bytes())?;
    let mut buf = Vec::new();
    for lp in patches {
        let p = &lp.patch;
        if p.values.len() != p.rows * p.cols {
            return Err(bad(format!(
                "{} patch {} has the wrong size",
                p.cycle_id, p.patch_index
            )));
        }
        let id = p.cycle_id.as_bytes();
        let len = u16::try_from(id.len()).map_err(|_| bad("cycle id longer than 65535 bytes"))?;
        buf.clear();
        buf.extend_from_slice(&len.to_le_bytes());
        buf.extend_from_slice(id);
        buf.extend_from_slice(&p.patch_index.to_le_bytes());
        buf.push(lp.label.index() as u8);
        for v in &p.values {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)?;
    }
    Ok(())
}

/// Reads a cache whose patches are `rows x cols`.
pub fn read_cache(mut r: impl Read, rows: usize, cols: usize) -> Result<Vec<LabeledPatch>> {
    let mut head = [0u8; 12];
    r.read_exact(&mut head)
        .map_err(|_| bad("truncated header"))?;
    if &head[..4] != MAGIC {
        return Err(bad("bad magic"));
    }
    let version = u32::from_le_bytes(head[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(bad(format!("unsupported version {version}")));
    }
    let count = u32::from_le_bytes(head[8..12].try_into().unwrap()) as usize;
    let mut raw = vec![0u8; rows * cols * 4];
    let mut out = Vec::with_capacity(count);
    for i in 0..count {
        let truncated = |_| bad(format!("truncated at patch {i}"));
        let mut len = [0u8; 2];
        r.read_exact(&mut len).map_err(truncated)?;
        let mut id = vec![0u8; u16::from_le_bytes(len) as usize];
        r.read_exact(&mut id).map_err(truncated)?;
        let cycle_id = String::from_utf8(id).map_err(|_| bad("cycle id is not UTF-8"))?;
        let mut meta = [0u8; 5];
        r.read_exact(&mut meta).map_err(truncated)?;
        let patch_index = u32::from_le_bytes(meta[..4].try_into().unwrap());
        let label = CycleLabel::from_index(meta[4] as usize)
            .ok_or_else(|| bad(format!("label byte {}", meta[4])))?;
        r.read_exact(&mut raw).map_err(truncated)?;
        let values = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        out.push(LabeledPatch {
            patch: GamPatch {
                values,
                rows,
                cols,
                cycle_id,
                patch_index,
            },
            label,
        });
    }
    Ok(out)
}

pub fn save_cache(path: &Path, patches: &[LabeledPatch]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::file(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    write_cache(&mut w, patches)?;
    w.flush().map_err(|e| Error::file(path, e))
}

pub fn load_cache(path: &Path, rows: usize, cols: usize) -> Result<Vec<LabeledPatch>> {
    let file = std::fs::File::open(path).map_err(|e| Error::file(path, e))?;
    read_cache(std::io::BufReader::new(file), rows, cols)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn patch(
        id: &str,
        index: u32,
        label: CycleLabel,
        values: Vec<f32>,
        rows: usize,
        cols: usize,
    ) -> LabeledPatch {
        LabeledPatch {
            patch: GamPatch {
                values,
                rows,
                cols,
                cycle_id: id.into(),
                patch_index: index,
            },
            label,
        }
    }

    #[test]
    fn byte_layout() {
        let p = patch("ab#1", 7, CycleLabel::Both, vec![1.0, 0.5], 1, 2);
        let mut buf = Vec::new();
        write_cache(&mut buf, &[p]).unwrap();
        let mut want = b"GAMF".to_vec();
        want.extend(1u32.to_le_bytes());
        want.extend(1u32.to_le_bytes());
        want.extend(4u16.to_le_bytes());
        want.extend(b"ab#1");
        want.extend(7u32.to_le_bytes());
        want.push(2);
        want.extend(1.0f32.to_le_bytes());
        want.extend(0.5f32.to_le_bytes());
        assert_eq!(buf, want);
    }

    #[test]
    fn truncated_file_is_rejected() {
        let p = patch("a#0", 0, CycleLabel::Normal, vec![0.25; 6], 2, 3);
        let mut buf = Vec::new();
        write_cache(&mut buf, &[p]).unwrap();
        buf.pop();
        assert!(read_cache(&buf[..], 2, 3).is_err());
    }

    proptest! {
        #[test]
        fn roundtrip(vals in proptest::collection::vec(0.0f32..=1.0, 12), idx in any::<u32>(), label in 0usize..4) {
            let items = vec![
                patch("rec_a#3", idx, CycleLabel::from_index(label).unwrap(), vals.clone(), 3, 4),
                patch("rec_b#0", 0, CycleLabel::Normal, vals, 3, 4),
            ];
            let mut buf = Vec::new();
            write_cache(&mut buf, &items).unwrap();
            prop_assert_eq!(read_cache(&buf[..], 3, 4).unwrap(), items);
        }
    }
}
