//! Random resized crops, flips and colour jitter, plus the rectangle IoU used
//! as the correlation coefficient between two views of one image.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::Image;
use crate::error::{invalid, Result};
use crate::rng::{stream_rng, Rng as ChaRng, Stream};

const CROP_ATTEMPTS: usize = 10;

/// Crop rectangle in original-image pixels plus a flip flag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ViewRect {
    pub x0: usize,
    pub y0: usize,
    pub w: usize,
    pub h: usize,
    pub flipped: bool,
}

impl ViewRect {
    pub fn full(height: usize, width: usize) -> Self {
        ViewRect {
            x0: 0,
            y0: 0,
            w: width,
            h: height,
            flipped: false,
        }
    }

    pub fn area(&self) -> usize {
        self.w * self.h
    }

    pub fn validate(&self, height: usize, width: usize) -> Result<()> {
        if self.w == 0 || self.h == 0 || self.x0 + self.w > width || self.y0 + self.h > height {
            return invalid(format!(
                "view ({}, {}, {}x{}) does not fit a {height}x{width} image",
                self.x0, self.y0, self.w, self.h
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JitterStrengths {
    pub brightness: f32,
    pub contrast: f32,
    pub saturation: f32,
}

impl JitterStrengths {
    pub const NONE: JitterStrengths = JitterStrengths {
        brightness: 0.0,
        contrast: 0.0,
        saturation: 0.0,
    };

    pub fn is_zero(&self) -> bool {
        self.brightness == 0.0 && self.contrast == 0.0 && self.saturation == 0.0
    }
}

impl Default for JitterStrengths {
    fn default() -> Self {
        JitterStrengths {
            brightness: 0.4,
            contrast: 0.4,
            saturation: 0.4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugConfig {
    pub area_range: (f64, f64),
    pub aspect_range: (f64, f64),
    pub flip_enabled: bool,
    pub jitter: JitterStrengths,
    pub out_size: usize,
}

impl Default for AugConfig {
    fn default() -> Self {
        AugConfig {
            area_range: (0.2, 1.0),
            aspect_range: (3.0 / 4.0, 4.0 / 3.0),
            flip_enabled: true,
            jitter: JitterStrengths::default(),
            out_size: 64,
        }
    }
}

impl AugConfig {
    /// Crop and rescale only: no flip, no jitter.
    pub fn crop_only(mut self) -> Self {
        self.flip_enabled = false;
        self.jitter = JitterStrengths::NONE;
        self
    }

    /// Full-image views with no photometric change.
    pub fn identity(out_size: usize) -> Self {
        AugConfig {
            area_range: (1.0, 1.0),
            aspect_range: (1.0, 1.0),
            flip_enabled: false,
            jitter: JitterStrengths::NONE,
            out_size,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (a0, a1) = self.area_range;
        if !(a0 > 0.0 && a0 <= a1 && a1 <= 1.0) {
            return invalid(format!("area_range must satisfy 0 < min ≤ max ≤ 1, got [{a0}, {a1}]"));
        }
        let (r0, r1) = self.aspect_range;
        if !(r0 > 0.0 && r0 <= r1) {
            return invalid(format!("aspect_range must satisfy 0 < min ≤ max, got [{r0}, {r1}]"));
        }
        let j = self.jitter;
        for (name, s) in [
            ("brightness", j.brightness),
            ("contrast", j.contrast),
            ("saturation", j.saturation),
        ] {
            if !(0.0..=1.0).contains(&s) {
                return invalid(format!("{name} jitter must lie in [0, 1], got {s}"));
            }
        }
        if self.out_size == 0 {
            return invalid("out_size must be positive");
        }
        Ok(())
    }
}

fn area_ok(w: usize, h: usize, height: usize, width: usize, cfg: &AugConfig) -> bool {
    let frac = (w * h) as f64 / (height * width) as f64;
    let eps = 1e-12;
    frac >= cfg.area_range.0 - eps && frac <= cfg.area_range.1 + eps
}

fn aspect_ok(w: usize, h: usize, cfg: &AugConfig) -> bool {
    let r = w as f64 / h as f64;
    let eps = 1e-12;
    r >= cfg.aspect_range.0 - eps && r <= cfg.aspect_range.1 + eps
}

/// Largest centred crop honouring the area range, preferring the aspect
/// range, then squareness.
fn fallback_size(height: usize, width: usize, cfg: &AugConfig) -> (usize, usize) {
    let mut best: Option<(bool, usize, usize, usize, usize)> = None;
    for h in 1..=height {
        for w in 1..=width {
            if !area_ok(w, h, height, width, cfg) {
                continue;
            }
            let skew = w.abs_diff(h);
            let key = (aspect_ok(w, h, cfg), w * h, usize::MAX - skew);
            let better = match best {
                None => true,
                Some((a, area, s, _, _)) => key > (a, area, s),
            };
            if better {
                best = Some((key.0, key.1, key.2, w, h));
            }
        }
    }
    best.map(|(_, _, _, w, h)| (w, h)).unwrap_or((width, height))
}

pub fn sample_view(rng: &mut ChaRng, height: usize, width: usize, cfg: &AugConfig) -> ViewRect {
    assert!(height >= 1 && width >= 1, "image must be non-empty");
    let total = (height * width) as f64;
    let (la, lb) = (cfg.aspect_range.0.ln(), cfg.aspect_range.1.ln());
    let mut chosen = None;
    for _ in 0..CROP_ATTEMPTS {
        let target = total * rng.gen_range(cfg.area_range.0..=cfg.area_range.1);
        let aspect = rng.gen_range(la..=lb).exp();
        let w = (target * aspect).sqrt().round() as usize;
        let h = (target / aspect).sqrt().round() as usize;
        if w >= 1
            && h >= 1
            && w <= width
            && h <= height
            && area_ok(w, h, height, width, cfg)
            && aspect_ok(w, h, cfg)
        {
            let x0 = rng.gen_range(0..=width - w);
            let y0 = rng.gen_range(0..=height - h);
            chosen = Some((x0, y0, w, h));
            break;
        }
    }
    let (x0, y0, w, h) = chosen.unwrap_or_else(|| {
        let (w, h) = fallback_size(height, width, cfg);
        ((width - w) / 2, (height - h) / 2, w, h)
    });
    let flipped = cfg.flip_enabled && rng.gen_bool(0.5);
    ViewRect {
        x0,
        y0,
        w,
        h,
        flipped,
    }
}

/// Bilinear resize of one `h × w` plane to `out_h × out_w` with pixel
/// centres aligned (`src = (dst + 0.5) · scale − 0.5`), edge-clamped.
pub fn resize_bilinear(plane: &[f64], h: usize, w: usize, out_h: usize, out_w: usize) -> Vec<f64> {
    assert_eq!(plane.len(), h * w, "plane length must equal h·w");
    let axis = |len: usize, out: usize| -> Vec<(usize, usize, f64)> {
        let scale = len as f64 / out as f64;
        (0..out)
            .map(|o| {
                let s = ((o as f64 + 0.5) * scale - 0.5).clamp(0.0, (len - 1) as f64);
                let i0 = s.floor() as usize;
                (i0, (i0 + 1).min(len - 1), s - i0 as f64)
            })
            .collect()
    };
    let ys = axis(h, out_h);
    let xs = axis(w, out_w);
    let mut out = Vec::with_capacity(out_h * out_w);
    for &(y0, y1, fy) in &ys {
        for &(x0, x1, fx) in &xs {
            let top = plane[y0 * w + x0] * (1.0 - fx) + plane[y0 * w + x1] * fx;
            let bot = plane[y1 * w + x0] * (1.0 - fx) + plane[y1 * w + x1] * fx;
            out.push(top * (1.0 - fy) + bot * fy);
        }
    }
    out
}

/// Crops `rect` and resizes it to `out × out`.
pub fn crop_resize(image: &Image, rect: &ViewRect, out: usize) -> Result<Image> {
    rect.validate(image.height(), image.width())?;
    if out == 0 {
        return invalid("output size must be positive");
    }
    let mut px = Vec::with_capacity(3 * out * out);
    let mut crop = Vec::with_capacity(rect.w * rect.h);
    for c in 0..3 {
        crop.clear();
        for y in rect.y0..rect.y0 + rect.h {
            crop.extend((rect.x0..rect.x0 + rect.w).map(|x| image.at(c, y, x) as f64));
        }
        px.extend(
            resize_bilinear(&crop, rect.h, rect.w, out, out)
                .into_iter()
                .map(|v| v as f32),
        );
    }
    Image::new(out, out, px)
}

fn luma(r: f32, g: f32, b: f32) -> f32 {
    0.299 * r + 0.587 * g + 0.114 * b
}

/// Brightness, then contrast, then saturation; a zero strength skips its op
/// and consumes no randomness.
pub fn color_jitter(image: &Image, rng: &mut ChaRng, strengths: &JitterStrengths) -> Image {
    let mut out = image.clone();
    let plane = image.height() * image.width();
    let mut draw = |s: f32| -> Option<f32> {
        (s > 0.0).then(|| rng.gen_range(1.0 - s..=1.0 + s))
    };
    let fb = draw(strengths.brightness);
    let fc = draw(strengths.contrast);
    let fs = draw(strengths.saturation);
    let px = out.pixels_mut();
    if let Some(f) = fb {
        for v in px.iter_mut() {
            *v = (*v * f).clamp(0.0, 1.0);
        }
    }
    if let Some(f) = fc {
        let mean = (0..plane)
            .map(|i| luma(px[i], px[plane + i], px[2 * plane + i]) as f64)
            .sum::<f64>() as f32
            / plane as f32;
        for v in px.iter_mut() {
            *v = ((*v - mean) * f + mean).clamp(0.0, 1.0);
        }
    }
    if let Some(f) = fs {
        for i in 0..plane {
            let g = luma(px[i], px[plane + i], px[2 * plane + i]);
            for c in 0..3 {
                let v = &mut px[c * plane + i];
                *v = ((*v - g) * f + g).clamp(0.0, 1.0);
            }
        }
    }
    out
}

pub fn apply_view(image: &Image, rect: &ViewRect, cfg: &AugConfig, rng: &mut ChaRng) -> Result<Image> {
    let mut out = crop_resize(image, rect, cfg.out_size)?;
    if rect.flipped {
        out = out.flip_horizontal();
    }
    if !cfg.jitter.is_zero() {
        out = color_jitter(&out, rng, &cfg.jitter);
    }
    Ok(out)
}

/// Intersection over union of the two rectangles; the flip flag is ignored.
pub fn view_iou(a: &ViewRect, b: &ViewRect) -> f64 {
    let ix = (a.x0 + a.w).min(b.x0 + b.w).saturating_sub(a.x0.max(b.x0));
    let iy = (a.y0 + a.h).min(b.y0 + b.h).saturating_sub(a.y0.max(b.y0));
    let inter = ix * iy;
    let union = a.area() + b.area() - inter;
    inter as f64 / union as f64
}

#[derive(Debug, Clone)]
pub struct ViewPair {
    pub first: Image,
    pub second: Image,
    pub rects: (ViewRect, ViewRect),
}

impl ViewPair {
    pub fn iou(&self) -> f64 {
        view_iou(&self.rects.0, &self.rects.1)
    }
}

/// Two independent views of `image`, seeded by `(seed, epoch, index)` only.
pub fn sample_pair(image: &Image, cfg: &AugConfig, seed: u64, epoch: u64, index: u64) -> Result<ViewPair> {
    let mut rng = stream_rng(seed, Stream::Augment, &[epoch, index]);
    let (h, w) = (image.height(), image.width());
    let r1 = sample_view(&mut rng, h, w, cfg);
    let r2 = sample_view(&mut rng, h, w, cfg);
    let first = apply_view(image, &r1, cfg, &mut rng)?;
    let second = apply_view(image, &r2, cfg, &mut rng)?;
    Ok(ViewPair {
        first,
        second,
        rects: (r1, r2),
    })
}
