use crate::error::{invalid, HclError, Result};
use crate::models::Encoder;
use crate::real::{lit, Real};

/// `θ_k ← m·θ_k + (1−m)·θ_q`, outside any graph.
pub fn momentum_update<T: Real>(query: &Encoder<T>, key: &mut Encoder<T>, m: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&m) {
        return invalid(format!("key momentum must lie in [0, 1], got {m}"));
    }
    let q_params = query.named_params();
    let mut mismatch: Option<String> = None;
    let mut i = 0;
    key.visit_params_mut(&mut |name, k| {
        if mismatch.is_some() {
            return;
        }
        match q_params.get(i) {
            Some((qn, q)) if *qn == name && q.shape() == k.shape() => {
                if m == 1.0 {
                    // unchanged
                } else if m == 0.0 {
                    k.data_mut().copy_from_slice(q.data());
                } else {
                    let (a, b) = (lit::<T>(m), lit::<T>(1.0 - m));
                    for (kv, &qv) in k.data_mut().iter_mut().zip(q.data()) {
                        *kv = a * *kv + b * qv;
                    }
                }
            }
            Some((qn, q)) => {
                mismatch = Some(format!(
                    "parameter {i}: key {name} {:?} vs query {qn} {:?}",
                    k.shape(),
                    q.shape()
                ))
            }
            None => mismatch = Some(format!("key has extra parameter {name}")),
        }
        i += 1;
    });
    if let Some(m) = mismatch {
        return Err(HclError::Shape(m));
    }
    if i != q_params.len() {
        return Err(HclError::Shape(format!(
            "query has {} parameters, key has {i}",
            q_params.len()
        )));
    }
    Ok(())
}

/// Query encoder plus its slowly-moving key copy.
#[derive(Debug)]
pub struct MomentumPair<T> {
    pub query: Encoder<T>,
    pub key: Encoder<T>,
    pub momentum: f64,
}

impl<T: Real> Clone for MomentumPair<T> {
    fn clone(&self) -> Self {
        MomentumPair {
            query: self.query.clone(),
            key: self.key.clone(),
            momentum: self.momentum,
        }
    }
}

impl<T: Real> MomentumPair<T> {
    /// Starts the key encoder as an exact, gradient-free copy of the query.
    pub fn new(query: Encoder<T>, momentum: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&momentum) {
            return invalid(format!("key momentum must lie in [0, 1], got {momentum}"));
        }
        let key = Self::detached_copy(&query);
        Ok(MomentumPair {
            query,
            key,
            momentum,
        })
    }

    /// Pairs existing encoders, checking that their structures agree.
    pub fn from_parts(query: Encoder<T>, mut key: Encoder<T>, momentum: f64) -> Result<Self> {
        if query.structure() != key.structure() {
            return invalid("query and key encoders differ in structure");
        }
        key.visit_params_mut(&mut |_, t| {
            t.requires_grad = false;
            t.clear_grad();
        });
        Ok(MomentumPair {
            query,
            key,
            momentum,
        })
    }

    pub fn detached_copy(query: &Encoder<T>) -> Encoder<T> {
        let mut key = query.clone();
        key.visit_params_mut(&mut |_, t| {
            t.requires_grad = false;
            t.clear_grad();
        });
        key
    }

    pub fn update(&mut self) -> Result<()> {
        momentum_update(&self.query, &mut self.key, self.momentum)
    }
}
