//! Image records, the procedural synthetic corpus, the raw binary corpus
//! format, and seeded epoch batching.

mod batches;
mod corpus;
mod image;
mod synthetic;

pub use batches::{epoch_permutation, iterate_batches};
pub use corpus::{load_corpus, parse_corpus, record_len, write_corpus};
pub use image::Image;
pub use synthetic::generate_synthetic;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ImageRecord {
    pub id: u64,
    pub image: Image,
}

/// Immutable collection of equally sized square images with unique ids.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    size: usize,
    records: Vec<ImageRecord>,
}

impl Dataset {
    pub fn new(size: usize, records: Vec<ImageRecord>) -> Result<Self> {
        if records.is_empty() {
            return invalid("dataset must hold at least one record");
        }
        let mut ids = std::collections::HashSet::new();
        for r in &records {
            if r.image.height() != size || r.image.width() != size {
                return invalid(format!(
                    "record {} is {}x{}, dataset size is {size}",
                    r.id,
                    r.image.height(),
                    r.image.width()
                ));
            }
            if !ids.insert(r.id) {
                return invalid(format!("duplicate record id {}", r.id));
            }
        }
        Ok(Dataset { size, records })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[ImageRecord] {
        &self.records
    }

    pub fn get(&self, index: usize) -> &ImageRecord {
        &self.records[index]
    }

    /// Splits off the trailing `fraction` of records as a holdout set.
    pub fn split(&self, fraction: f64) -> Result<(Dataset, Option<Dataset>)> {
        if !(0.0..1.0).contains(&fraction) {
            return invalid(format!("holdout fraction must lie in [0, 1), got {fraction}"));
        }
        let hold = (self.len() as f64 * fraction).round() as usize;
        if hold == 0 {
            return Ok((self.clone(), None));
        }
        if hold >= self.len() {
            return invalid("holdout would leave no training records");
        }
        let cut = self.len() - hold;
        Ok((
            Dataset::new(self.size, self.records[..cut].to_vec())?,
            Some(Dataset::new(self.size, self.records[cut..].to_vec())?),
        ))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DataSource {
    Synthetic { seed: u64, n: usize, size: usize },
    Corpus { path: PathBuf, size: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub source: DataSource,
    /// Fraction of records held out for evaluation.
    pub holdout: f64,
}

impl DatasetSpec {
    pub fn size(&self) -> usize {
        match &self.source {
            DataSource::Synthetic { size, .. } | DataSource::Corpus { size, .. } => *size,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let size = self.size();
        if size == 0 || size % 32 != 0 {
            return invalid(format!("image size must be a positive multiple of 32, got {size}"));
        }
        if let DataSource::Synthetic { n, .. } = self.source {
            if n == 0 {
                return invalid("synthetic dataset needs n ≥ 1");
            }
        }
        if !(0.0..1.0).contains(&self.holdout) {
            return invalid(format!("holdout must lie in [0, 1), got {}", self.holdout));
        }
        Ok(())
    }

    pub fn load(&self) -> Result<Dataset> {
        self.validate()?;
        match &self.source {
            DataSource::Synthetic { seed, n, size } => generate_synthetic(*seed, *n, *size),
            DataSource::Corpus { path, size } => load_corpus(path, *size),
        }
    }
}
