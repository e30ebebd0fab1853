use crate::error::{invalid, Result};
use crate::gradcore::Tensor;
use crate::real::Real;

/// Three-channel, channel-planar image with values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    height: usize,
    width: usize,
    pixels: Vec<f32>,
}

impl Image {
    pub fn new(height: usize, width: usize, pixels: Vec<f32>) -> Result<Self> {
        if height == 0 || width == 0 || pixels.len() != 3 * height * width {
            return invalid(format!(
                "{} pixel values for a 3x{height}x{width} image",
                pixels.len()
            ));
        }
        Ok(Image {
            height,
            width,
            pixels,
        })
    }

    pub fn filled(height: usize, width: usize, rgb: [f32; 3]) -> Self {
        let plane = height * width;
        let pixels = (0..3 * plane).map(|i| rgb[i / plane]).collect();
        Image {
            height,
            width,
            pixels,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn pixels(&self) -> &[f32] {
        &self.pixels
    }

    pub fn pixels_mut(&mut self) -> &mut [f32] {
        &mut self.pixels
    }

    #[inline]
    pub fn at(&self, c: usize, y: usize, x: usize) -> f32 {
        self.pixels[(c * self.height + y) * self.width + x]
    }

    pub fn plane(&self, c: usize) -> &[f32] {
        let n = self.height * self.width;
        &self.pixels[c * n..(c + 1) * n]
    }

    pub fn to_tensor<T: Real>(&self) -> Tensor<T> {
        Tensor::new(
            vec![3, self.height, self.width],
            self.pixels.iter().map(|&v| T::from_f64_lossy(v as f64)).collect(),
        )
        .expect("image buffer matches its shape")
    }

    /// Mirrors the image left to right.
    pub fn flip_horizontal(&self) -> Image {
        let mut out = self.clone();
        for c in 0..3 {
            for y in 0..self.height {
                let row = (c * self.height + y) * self.width;
                out.pixels[row..row + self.width].reverse();
            }
        }
        out
    }
}
