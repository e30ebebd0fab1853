use rand::Rng as _;

use crate::error::Result;
use crate::gradcore::{Graph, Padding, Tensor, Var};
use crate::real::{lit, Real};
use crate::rng::Rng;

use super::GN_EPS;

/// He-uniform initialisation: `U(−a, a)` with `a = sqrt(6 / fan_in)`.
fn he_uniform<T: Real>(rng: &mut Rng, shape: Vec<usize>, fan_in: usize) -> Tensor<T> {
    let a = (6.0 / fan_in as f64).sqrt();
    Tensor::from_fn(shape, |_| lit(rng.gen_range(-a..a))).with_grad()
}

#[derive(Debug, Clone)]
pub struct ConvLayer<T> {
    pub weight: Tensor<T>,
    pub bias: Option<Tensor<T>>,
    pub stride: usize,
    pub pad: usize,
}

impl<T: Real> ConvLayer<T> {
    pub fn new(
        rng: &mut Rng,
        c_in: usize,
        c_out: usize,
        kernel: usize,
        stride: usize,
        with_bias: bool,
    ) -> Self {
        ConvLayer {
            weight: he_uniform(rng, vec![c_out, c_in, kernel, kernel], c_in * kernel * kernel),
            bias: with_bias.then(|| Tensor::zeros([c_out]).with_grad()),
            stride,
            pad: kernel / 2,
        }
    }

    pub fn forward(&self, g: &mut Graph<T>, x: Var) -> Result<Var> {
        let w = g.param(&self.weight);
        let b = self.bias.as_ref().map(|b| g.param(b));
        g.conv2d(x, w, b, self.stride, self.pad, Padding::Replicate)
    }

    pub(crate) fn visit<'a>(&'a self, name: &str, f: &mut dyn FnMut(String, &'a Tensor<T>)) {
        f(format!("{name}.weight"), &self.weight);
        if let Some(b) = &self.bias {
            f(format!("{name}.bias"), b);
        }
    }

    pub(crate) fn visit_mut(&mut self, name: &str, f: &mut dyn FnMut(String, &mut Tensor<T>)) {
        f(format!("{name}.weight"), &mut self.weight);
        if let Some(b) = &mut self.bias {
            f(format!("{name}.bias"), b);
        }
    }
}

#[derive(Debug, Clone)]
pub struct NormLayer<T> {
    pub gamma: Tensor<T>,
    pub beta: Tensor<T>,
    pub groups: usize,
}

impl<T: Real> NormLayer<T> {
    pub fn new(channels: usize, groups: usize) -> Self {
        NormLayer {
            gamma: Tensor::from_fn([channels], |_| T::one()).with_grad(),
            beta: Tensor::zeros([channels]).with_grad(),
            groups,
        }
    }

    pub fn forward(&self, g: &mut Graph<T>, x: Var) -> Result<Var> {
        let gamma = g.param(&self.gamma);
        let beta = g.param(&self.beta);
        g.group_norm(x, self.groups, gamma, beta, lit(GN_EPS))
    }
}

/// conv → group norm → relu.
#[derive(Debug, Clone)]
pub struct ConvBlock<T> {
    pub conv: ConvLayer<T>,
    pub norm: NormLayer<T>,
}

impl<T: Real> ConvBlock<T> {
    pub fn new(rng: &mut Rng, c_in: usize, c_out: usize, stride: usize, groups: usize) -> Self {
        ConvBlock {
            conv: ConvLayer::new(rng, c_in, c_out, 3, stride, false),
            norm: NormLayer::new(c_out, groups),
        }
    }

    pub fn forward(&self, g: &mut Graph<T>, x: Var) -> Result<Var> {
        let y = self.conv.forward(g, x)?;
        let y = self.norm.forward(g, y)?;
        Ok(g.relu(y))
    }

    pub(crate) fn visit<'a>(&'a self, name: &str, f: &mut dyn FnMut(String, &'a Tensor<T>)) {
        self.conv.visit(&format!("{name}.conv"), f);
        f(format!("{name}.norm.gamma"), &self.norm.gamma);
        f(format!("{name}.norm.beta"), &self.norm.beta);
    }

    pub(crate) fn visit_mut(&mut self, name: &str, f: &mut dyn FnMut(String, &mut Tensor<T>)) {
        self.conv.visit_mut(&format!("{name}.conv"), f);
        f(format!("{name}.norm.gamma"), &mut self.norm.gamma);
        f(format!("{name}.norm.beta"), &mut self.norm.beta);
    }
}

#[derive(Debug, Clone)]
pub struct LinearLayer<T> {
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

impl<T: Real> LinearLayer<T> {
    pub fn new(rng: &mut Rng, n_in: usize, n_out: usize) -> Self {
        LinearLayer {
            weight: he_uniform(rng, vec![n_out, n_in], n_in),
            bias: Tensor::zeros([n_out]).with_grad(),
        }
    }

    pub fn forward(&self, g: &mut Graph<T>, x: Var) -> Result<Var> {
        let w = g.param(&self.weight);
        let b = g.param(&self.bias);
        g.linear(x, w, b)
    }

    pub(crate) fn visit<'a>(&'a self, name: &str, f: &mut dyn FnMut(String, &'a Tensor<T>)) {
        f(format!("{name}.weight"), &self.weight);
        f(format!("{name}.bias"), &self.bias);
    }

    pub(crate) fn visit_mut(&mut self, name: &str, f: &mut dyn FnMut(String, &mut Tensor<T>)) {
        f(format!("{name}.weight"), &mut self.weight);
        f(format!("{name}.bias"), &mut self.bias);
    }
}
