use crate::error::{invalid, Result};
use crate::models::Encoder;
use crate::real::{lit, Real};

/// `lr0 · ½ · (1 + cos(π · step / total_steps))`.
pub fn cosine_lr(step: u64, total_steps: u64, lr0: f64) -> Result<f64> {
    if total_steps == 0 || step > total_steps {
        return invalid(format!("step {step} outside 0..={total_steps}"));
    }
    Ok(lr0 * 0.5 * (1.0 + (std::f64::consts::PI * step as f64 / total_steps as f64).cos()))
}

/// SGD with heavy-ball momentum and L2 weight decay:
/// `v ← μ·v + (g + λ·θ)`, `θ ← θ − lr·v`.
#[derive(Debug, Clone, PartialEq)]
pub struct Sgd<T> {
    pub momentum: f64,
    pub weight_decay: f64,
    /// One buffer per encoder parameter, in visiting order.
    pub velocity: Vec<Vec<T>>,
}

impl<T: Real> Sgd<T> {
    pub fn new(momentum: f64, weight_decay: f64, encoder: &Encoder<T>) -> Self {
        let mut velocity = Vec::new();
        encoder.visit_params(&mut |_, t| velocity.push(vec![T::zero(); t.numel()]));
        Sgd {
            momentum,
            weight_decay,
            velocity,
        }
    }

    pub fn step(&mut self, encoder: &mut Encoder<T>, grads: &[Vec<T>], lr: f64) -> Result<()> {
        if grads.len() != self.velocity.len() {
            return invalid(format!(
                "{} gradient buffers for {} parameters",
                grads.len(),
                self.velocity.len()
            ));
        }
        let (mu, wd, lr) = (lit::<T>(self.momentum), lit::<T>(self.weight_decay), lit::<T>(lr));
        let mut i = 0;
        let mut bad = None;
        encoder.visit_params_mut(&mut |name, t| {
            let (g, v) = (&grads[i], &mut self.velocity[i]);
            i += 1;
            if g.len() != t.numel() || v.len() != t.numel() {
                bad.get_or_insert(name);
                return;
            }
            for ((p, &gi), vi) in t.data_mut().iter_mut().zip(g).zip(v.iter_mut()) {
                *vi = mu * *vi + gi + wd * *p;
                *p -= lr * *vi;
            }
        });
        match bad {
            Some(name) => invalid(format!("gradient size mismatch at {name}")),
            None => Ok(()),
        }
    }
}
