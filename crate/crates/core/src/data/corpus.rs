//! Fixed-length raw records: `u8 label ∥ u8[S²] red ∥ u8[S²] green ∥ u8[S²] blue`,
//! no header, record count implied by file length. Labels are ignored.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{HclError, Result};

use super::{Dataset, Image, ImageRecord};

pub fn record_len(size: usize) -> usize {
    1 + 3 * size * size
}

pub fn parse_corpus(bytes: &[u8], size: usize) -> Result<Dataset> {
    let rec = record_len(size);
    if bytes.is_empty() {
        return Err(HclError::Parse("corpus is empty".into()));
    }
    if bytes.len() % rec != 0 {
        return Err(HclError::Parse(format!(
            "corpus of {} bytes is not a whole number of {rec}-byte records ({} trailing bytes)",
            bytes.len(),
            bytes.len() % rec
        )));
    }
    let records = bytes
        .chunks_exact(rec)
        .enumerate()
        .map(|(i, chunk)| {
            let pixels = chunk[1..].iter().map(|&b| b as f32 / 255.0).collect();
            Ok(ImageRecord {
                id: i as u64,
                image: Image::new(size, size, pixels)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(size, records)
}

pub fn load_corpus(path: impl AsRef<Path>, size: usize) -> Result<Dataset> {
    let bytes = fs::read(path)?;
    parse_corpus(&bytes, size)
}

/// Writes records in corpus order with a zero label byte.
pub fn write_corpus(path: impl AsRef<Path>, dataset: &Dataset) -> Result<()> {
    let mut out = Vec::with_capacity(dataset.len() * record_len(dataset.size()));
    for r in dataset.records() {
        out.push(0u8);
        out.extend(
            r.image
                .pixels()
                .iter()
                .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8),
        );
    }
    let mut f = fs::File::create(path)?;
    f.write_all(&out)?;
    Ok(())
}
