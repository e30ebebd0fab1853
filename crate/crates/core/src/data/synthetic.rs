//! Procedural scenes: a textured background plus 3–6 coloured rectangles,
//! discs and oriented bars. Palette and layout both vary per image, so
//! instances differ semantically and spatially.

use rand::Rng;

use crate::error::{invalid, Result};
use crate::rng::{stream_rng, Rng as ChaRng, Stream};

use super::{Dataset, Image, ImageRecord};

enum Shape {
    Rect { x0: f32, y0: f32, x1: f32, y1: f32 },
    Disc { cx: f32, cy: f32, r: f32 },
    Bar { cx: f32, cy: f32, ux: f32, uy: f32, half_len: f32, half_thick: f32 },
}

impl Shape {
    fn contains(&self, x: f32, y: f32) -> bool {
        match *self {
            Shape::Rect { x0, y0, x1, y1 } => x >= x0 && x < x1 && y >= y0 && y < y1,
            Shape::Disc { cx, cy, r } => (x - cx).powi(2) + (y - cy).powi(2) <= r * r,
            Shape::Bar {
                cx,
                cy,
                ux,
                uy,
                half_len,
                half_thick,
            } => {
                let (dx, dy) = (x - cx, y - cy);
                let along = dx * ux + dy * uy;
                let across = -dx * uy + dy * ux;
                along.abs() <= half_len && across.abs() <= half_thick
            }
        }
    }
}

fn random_shape(rng: &mut ChaRng, s: f32) -> Shape {
    match rng.gen_range(0..3) {
        0 => {
            let w = rng.gen_range(0.12 * s..0.45 * s);
            let h = rng.gen_range(0.12 * s..0.45 * s);
            let x0 = rng.gen_range(0.0..s - w);
            let y0 = rng.gen_range(0.0..s - h);
            Shape::Rect {
                x0,
                y0,
                x1: x0 + w,
                y1: y0 + h,
            }
        }
        1 => Shape::Disc {
            cx: rng.gen_range(0.1 * s..0.9 * s),
            cy: rng.gen_range(0.1 * s..0.9 * s),
            r: rng.gen_range(0.06 * s..0.22 * s),
        },
        _ => {
            let a: f32 = rng.gen_range(0.0..std::f32::consts::PI);
            Shape::Bar {
                cx: rng.gen_range(0.15 * s..0.85 * s),
                cy: rng.gen_range(0.15 * s..0.85 * s),
                ux: a.cos(),
                uy: a.sin(),
                half_len: rng.gen_range(0.15 * s..0.4 * s),
                half_thick: rng.gen_range(0.03 * s..0.08 * s),
            }
        }
    }
}

fn render(rng: &mut ChaRng, size: usize) -> Image {
    let s = size as f32;
    let plane = size * size;
    let mut px = vec![0f32; 3 * plane];

    let base: [f32; 3] = std::array::from_fn(|_| rng.gen_range(0.15..0.85));
    let freq = (rng.gen_range(0.5..3.0f32), rng.gen_range(0.5..3.0f32));
    let phase: [f32; 3] = std::array::from_fn(|_| rng.gen_range(0.0..std::f32::consts::TAU));
    let amp = rng.gen_range(0.05..0.15f32);
    for y in 0..size {
        for x in 0..size {
            let t = std::f32::consts::TAU * (freq.0 * x as f32 + freq.1 * y as f32) / s;
            for c in 0..3 {
                let noise = rng.gen_range(-0.03..0.03f32);
                px[c * plane + y * size + x] = base[c] + amp * (t + phase[c]).sin() + noise;
            }
        }
    }

    let count = rng.gen_range(3..=6);
    for _ in 0..count {
        let shape = random_shape(rng, s);
        let color: [f32; 3] = std::array::from_fn(|_| rng.gen_range(0.0..1.0));
        for y in 0..size {
            for x in 0..size {
                if shape.contains(x as f32 + 0.5, y as f32 + 0.5) {
                    for c in 0..3 {
                        px[c * plane + y * size + x] = color[c];
                    }
                }
            }
        }
    }

    // Quantise to 8 bits so the corpus format round-trips exactly.
    for v in &mut px {
        *v = (v.clamp(0.0, 1.0) * 255.0).round() / 255.0;
    }
    Image::new(size, size, px).expect("rendered buffer matches its shape")
}

/// `n` scenes with ids `0..n`, each drawn from its own seeded stream.
pub fn generate_synthetic(seed: u64, n: usize, size: usize) -> Result<Dataset> {
    if n == 0 || size == 0 {
        return invalid(format!("synthetic dataset needs n ≥ 1 and size ≥ 1, got n={n}, size={size}"));
    }
    let records = (0..n as u64)
        .map(|id| ImageRecord {
            id,
            image: render(&mut stream_rng(seed, Stream::Synthetic, &[id]), size),
        })
        .collect();
    Dataset::new(size, records)
}
