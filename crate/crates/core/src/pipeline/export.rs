//! Embedding file, little-endian: `"HEMB" u32:version u64:n u32:d_sem
//! u32:d_spa`, then per record `u64:id f32[d_sem + d_spa]`. A branch left
//! out of the export keeps its width and is zero-filled.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{invalid, HclError, Result};
use crate::models::Encoder;

use super::binio::{put_f32s, Reader};

pub const EMBEDDING_MAGIC: [u8; 4] = *b"HEMB";
pub const EMBEDDING_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Branch {
    Semantic,
    Spatial,
    Concat,
}

impl std::str::FromStr for Branch {
    type Err = HclError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "semantic" => Ok(Branch::Semantic),
            "spatial" => Ok(Branch::Spatial),
            "concat" => Ok(Branch::Concat),
            _ => invalid(format!("branch must be semantic, spatial or concat, got `{s}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    pub d_sem: usize,
    pub d_spa: usize,
    pub ids: Vec<u64>,
    /// Row-major, `d_sem + d_spa` values per record.
    pub rows: Vec<f32>,
}

impl EmbeddingTable {
    pub fn width(&self) -> usize {
        self.d_sem + self.d_spa
    }

    pub fn row(&self, i: usize) -> &[f32] {
        let w = self.width();
        &self.rows[i * w..(i + 1) * w]
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        if self.rows.len() != self.ids.len() * self.width() {
            return Err(HclError::Shape(format!(
                "{} values for {} rows of width {}",
                self.rows.len(),
                self.ids.len(),
                self.width()
            )));
        }
        let mut out = Vec::with_capacity(24 + self.ids.len() * (8 + 4 * self.width()));
        out.extend_from_slice(&EMBEDDING_MAGIC);
        out.extend_from_slice(&EMBEDDING_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.ids.len() as u64).to_le_bytes());
        out.extend_from_slice(&(self.d_sem as u32).to_le_bytes());
        out.extend_from_slice(&(self.d_spa as u32).to_le_bytes());
        for (i, id) in self.ids.iter().enumerate() {
            out.extend_from_slice(&id.to_le_bytes());
            put_f32s(&mut out, self.row(i));
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes, "embedding file");
        let magic: [u8; 4] = r.take(4, "magic")?.try_into().unwrap();
        if magic != EMBEDDING_MAGIC {
            return Err(HclError::NotAnEmbeddingFile(magic));
        }
        let version = r.u32("version")?;
        if version != EMBEDDING_VERSION {
            return Err(HclError::UnsupportedVersion {
                kind: "embedding file",
                found: version,
                supported: EMBEDDING_VERSION,
            });
        }
        let n = r.u64("record count")? as usize;
        let d_sem = r.u32("d_sem")? as usize;
        let d_spa = r.u32("d_spa")? as usize;
        let mut ids = Vec::with_capacity(n.min(1 << 20));
        let mut rows = Vec::with_capacity(n.min(1 << 20) * (d_sem + d_spa));
        for _ in 0..n {
            ids.push(r.u64("record id")?);
            rows.extend(r.f32s(d_sem + d_spa, "record values")?);
        }
        r.finish()?;
        Ok(EmbeddingTable {
            d_sem,
            d_spa,
            ids,
            rows,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

/// Embeds every record's full image (resized to the encoder input) with no
/// randomness.
pub fn embed_dataset(encoder: &Encoder<f32>, dataset: &Dataset, branch: Branch) -> Result<EmbeddingTable> {
    if branch != Branch::Semantic && !encoder.has_spatial() {
        return invalid(format!("{branch:?} export needs a stage-2 encoder with a spatial head"));
    }
    let head = &encoder.config.head;
    let (d_sem, d_spa) = (head.d_sem, head.d_spa());
    let size = encoder.config.backbone.input_size;
    let full = crate::augment::ViewRect::full(dataset.size(), dataset.size());
    let mut table = EmbeddingTable {
        d_sem,
        d_spa,
        ids: Vec::with_capacity(dataset.len()),
        rows: Vec::with_capacity(dataset.len() * (d_sem + d_spa)),
    };
    for rec in dataset.records() {
        let img = crate::augment::crop_resize(&rec.image, &full, size)?;
        let e = encoder.embed(&img.to_tensor())?;
        table.ids.push(rec.id);
        match branch {
            Branch::Spatial => table.rows.extend(std::iter::repeat(0.0).take(d_sem)),
            _ => table.rows.extend_from_slice(&e.semantic),
        }
        match (branch, e.spatial) {
            (Branch::Semantic, _) | (_, None) => table.rows.extend(std::iter::repeat(0.0).take(d_spa)),
            (_, Some(s)) => table.rows.extend_from_slice(&s),
        }
    }
    Ok(table)
}

pub fn export_embeddings(
    encoder: &Encoder<f32>,
    dataset: &Dataset,
    path: impl AsRef<Path>,
    branch: Branch,
) -> Result<EmbeddingTable> {
    let table = embed_dataset(encoder, dataset, branch)?;
    table.save(path)?;
    Ok(table)
}
