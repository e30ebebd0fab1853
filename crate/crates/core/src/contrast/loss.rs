use std::sync::Arc;

use crate::error::{invalid, shape_err, Result};
use crate::gradcore::{Graph, Var};
use crate::real::{lit, Real};

use super::MemoryQueue;

/// Softmax temperature; always strictly positive.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Temperature(f64);

impl Temperature {
    pub fn new(t: f64) -> Result<Self> {
        if t.is_finite() && t > 0.0 {
            Ok(Temperature(t))
        } else {
            invalid(format!("temperature must be positive and finite, got {t}"))
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

impl Default for Temperature {
    fn default() -> Self {
        Temperature(0.2)
    }
}

fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

/// `exp(z1·z2 / T)`.
pub fn similarity<T: Real>(z1: &[T], z2: &[T], t: Temperature) -> Result<T> {
    if z1.len() != z2.len() {
        return shape_err(format!(
            "similarity of {}-D and {}-D embeddings",
            z1.len(),
            z2.len()
        ));
    }
    Ok((dot(z1, z2) / lit::<T>(t.get())).exp())
}

/// Logits `[q·k_pos, q·g_1, …, q·g_N] / T` with the positive first.
pub fn info_nce_logits<T: Real>(q: &[T], k_pos: &[T], rows: &[T], t: Temperature) -> Result<Vec<T>> {
    let d = q.len();
    if d == 0 {
        return invalid("empty embedding");
    }
    if k_pos.len() != d || rows.len() % d != 0 {
        return shape_err(format!(
            "query dim {d}, positive dim {}, gallery of {} values",
            k_pos.len(),
            rows.len()
        ));
    }
    let inv_t = lit::<T>(1.0 / t.get());
    let mut logits = Vec::with_capacity(1 + rows.len() / d);
    logits.push(dot(q, k_pos) * inv_t);
    logits.extend(rows.chunks(d).map(|r| dot(q, r) * inv_t));
    Ok(logits)
}

/// InfoNCE against a flat row-major gallery, in log-sum-exp form.
pub fn info_nce_loss_rows<T: Real>(q: &[T], k_pos: &[T], rows: &[T], t: Temperature) -> Result<T> {
    let logits = info_nce_logits(q, k_pos, rows, t)?;
    if logits.len() == 1 {
        return Ok(T::zero());
    }
    let lse = crate::gradcore::log_sum_exp(&logits);
    Ok((lse - logits[0]).max(T::zero()))
}

/// `−log[ sim(q,k⁺) / (sim(q,k⁺) + Σ_{x∈G} sim(q,x)) ]`.
pub fn info_nce_loss<T: Real>(q: &[T], k_pos: &[T], gallery: &MemoryQueue<T>, t: Temperature) -> Result<T> {
    if gallery.dim() != q.len() {
        return shape_err(format!(
            "gallery holds {}-D keys, query is {}-D",
            gallery.dim(),
            q.len()
        ));
    }
    info_nce_loss_rows(q, k_pos, gallery.filled_rows(), t)
}

/// Differentiable InfoNCE on a graph. The gallery is a detached snapshot.
pub fn info_nce_graph<T: Real>(
    g: &mut Graph<T>,
    q: Var,
    k_pos: Var,
    gallery: &Arc<[T]>,
    t: Temperature,
) -> Result<Var> {
    let d = g.value(q).len();
    if d == 0 {
        return invalid("empty embedding");
    }
    if gallery.len() % d != 0 {
        return shape_err(format!("gallery of {} values is not a multiple of {d}", gallery.len()));
    }
    let rows = gallery.len() / d;
    let pos = g.dot(q, k_pos)?;
    let pos = g.reshape(pos, vec![1])?;
    let neg = g.matvec_const(q, Arc::clone(gallery), rows, d)?;
    let logits = g.concat(&[pos, neg])?;
    let logits = g.scale(logits, lit(1.0 / t.get()));
    g.softmax_xent(logits, 0)
}
