use std::sync::Arc;

use crate::error::{invalid, shape_err, Result};
use crate::real::Real;

/// Fixed-capacity FIFO of detached key embeddings.
///
/// Rows are written at `head`, which advances modulo the capacity; once full,
/// each push overwrites the oldest rows.
#[derive(Debug, Clone, PartialEq)]
pub struct MemoryQueue<T> {
    capacity: usize,
    dim: usize,
    slots: Vec<T>,
    head: usize,
    filled: usize,
}

impl<T: Real> MemoryQueue<T> {
    pub fn new(capacity: usize, dim: usize) -> Result<Self> {
        if capacity == 0 || dim == 0 {
            return invalid(format!("queue needs capacity ≥ 1 and dim ≥ 1, got {capacity}×{dim}"));
        }
        Ok(MemoryQueue {
            capacity,
            dim,
            slots: vec![T::zero(); capacity * dim],
            head: 0,
            filled: 0,
        })
    }

    /// Rebuilds a queue from saved rows, oldest first.
    pub fn from_rows(capacity: usize, dim: usize, rows: &[T]) -> Result<Self> {
        let mut q = Self::new(capacity, dim)?;
        if rows.len() % dim != 0 || rows.len() / dim > capacity {
            return shape_err(format!(
                "{} values do not form at most {capacity} rows of {dim}",
                rows.len()
            ));
        }
        q.slots[..rows.len()].copy_from_slice(rows);
        q.filled = rows.len() / dim;
        q.head = q.filled % capacity;
        Ok(q)
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.filled
    }

    pub fn is_empty(&self) -> bool {
        self.filled == 0
    }

    pub fn is_full(&self) -> bool {
        self.filled == self.capacity
    }

    pub fn head(&self) -> usize {
        self.head
    }

    /// Inserts a batch of keys in order.
    pub fn push<R: AsRef<[T]>>(&mut self, keys: &[R]) -> Result<()> {
        if keys.len() > self.capacity {
            return invalid(format!(
                "batch of {} keys exceeds queue capacity {}",
                keys.len(),
                self.capacity
            ));
        }
        if let Some(bad) = keys.iter().find(|k| k.as_ref().len() != self.dim) {
            return shape_err(format!(
                "key of dim {} pushed into a {}-D queue",
                bad.as_ref().len(),
                self.dim
            ));
        }
        for k in keys {
            let at = self.head * self.dim;
            self.slots[at..at + self.dim].copy_from_slice(k.as_ref());
            self.head = (self.head + 1) % self.capacity;
            self.filled = (self.filled + 1).min(self.capacity);
        }
        Ok(())
    }

    pub fn clear(&mut self) {
        self.head = 0;
        self.filled = 0;
        self.slots.fill(T::zero());
    }

    /// Stored rows in slot order (not insertion order once wrapped).
    pub fn filled_rows(&self) -> &[T] {
        &self.slots[..self.filled * self.dim]
    }

    /// Detached copy of the stored rows for use as a loss gallery.
    pub fn snapshot(&self) -> Arc<[T]> {
        Arc::from(self.filled_rows())
    }

    /// Stored rows from oldest to newest.
    pub fn iter_oldest_first(&self) -> impl Iterator<Item = &[T]> + '_ {
        let start = if self.is_full() { self.head } else { 0 };
        (0..self.filled).map(move |i| {
            let slot = (start + i) % self.capacity;
            &self.slots[slot * self.dim..(slot + 1) * self.dim]
        })
    }

    /// Rows oldest first, flattened.
    pub fn to_rows_oldest_first(&self) -> Vec<T> {
        self.iter_oldest_first().flatten().copied().collect()
    }
}
