use serde::{Deserialize, Serialize};

use super::scalar::Scalar;
use crate::error::{Error, Result};
use crate::numerics::RandomStream;

/// Architecture hyperparameters that fix every tensor shape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelShape {
    pub channels: usize,
    pub image_size: usize,
    pub f1: usize,
    pub f2: usize,
    pub num_classes: usize,
}

impl ModelShape {
    pub fn new(channels: usize, image_size: usize, num_classes: usize) -> Self {
        Self {
            channels,
            image_size,
            f1: 16,
            f2: 32,
            num_classes,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.channels == 0 || self.f1 == 0 || self.f2 == 0 {
            return Err(Error::param("channel counts must be positive"));
        }
        if self.image_size < 4 || !self.image_size.is_multiple_of(4) {
            return Err(Error::param(format!(
                "image_size must be a positive multiple of 4, got {}",
                self.image_size
            )));
        }
        if self.num_classes < 2 {
            return Err(Error::param("num_classes must be >= 2"));
        }
        Ok(())
    }

    /// Values per input image.
    pub fn input_len(&self) -> usize {
        self.channels * self.image_size * self.image_size
    }

    /// Length of the flattened feature vector fed to the dense layer.
    pub fn features(&self) -> usize {
        let s = self.image_size / 4;
        self.f2 * s * s
    }

    /// `(name, dims)` of every tensor in storage order.
    pub fn tensor_dims(&self) -> [(&'static str, Vec<usize>); 8] {
        [
            ("input.shift", vec![self.channels]),
            ("input.scale", vec![self.channels]),
            ("conv1.weight", vec![self.f1, self.channels, 3, 3]),
            ("conv1.bias", vec![self.f1]),
            ("conv2.weight", vec![self.f2, self.f1, 3, 3]),
            ("conv2.bias", vec![self.f2]),
            ("dense.weight", vec![self.num_classes, self.features()]),
            ("dense.bias", vec![self.num_classes]),
        ]
    }
}

/// Network parameters. Convolution kernels are stored `[out][in][ky][kx]`
/// and the dense matrix `[class][feature]`, where feature index is
/// `f·(s/4)² + y·(s/4) + x`.
///
/// Inputs are standardized per channel as `(x - input_shift)·input_scale`
/// before the first convolution. Those two tensors are fixed by training
/// data statistics and excluded from gradients and updates.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T> {
    pub shape: ModelShape,
    pub input_shift: Vec<T>,
    pub input_scale: Vec<T>,
    pub conv1_w: Vec<T>,
    pub conv1_b: Vec<T>,
    pub conv2_w: Vec<T>,
    pub conv2_b: Vec<T>,
    pub dense_w: Vec<T>,
    pub dense_b: Vec<T>,
}

impl<T: Scalar> ModelParams<T> {
    pub fn zeros(shape: ModelShape) -> Result<Self> {
        shape.validate()?;
        let [shift, _, a, b, c, d, e, f] = shape.tensor_dims().map(|(_, dims)| vec![T::zero(); dims.iter().product()]);
        Ok(Self {
            shape,
            input_shift: shift,
            input_scale: vec![T::one(); shape.channels],
            conv1_w: a,
            conv1_b: b,
            conv2_w: c,
            conv2_b: d,
            dense_w: e,
            dense_b: f,
        })
    }

    /// He initialization: weights `N(0, 2/fan_in)`, biases zero.
    pub fn init(shape: ModelShape, rs: &RandomStream) -> Result<Self> {
        let mut p = Self::zeros(shape)?;
        let fill = |w: &mut [T], fan_in: usize, mut rs: RandomStream| {
            let std = (2.0 / fan_in as f64).sqrt();
            for v in w {
                *v = T::of_f64(std * rs.normal());
            }
        };
        fill(&mut p.conv1_w, shape.channels * 9, rs.derive("conv1"));
        fill(&mut p.conv2_w, shape.f1 * 9, rs.derive("conv2"));
        fill(&mut p.dense_w, shape.features(), rs.derive("dense"));
        Ok(p)
    }

    /// Every stored tensor in checkpoint order, normalization first.
    pub fn all_tensors(&self) -> [&[T]; 8] {
        let [a, b, c, d, e, f] = self.tensors();
        [&self.input_shift, &self.input_scale, a, b, c, d, e, f]
    }

    pub fn all_tensors_mut(&mut self) -> [&mut Vec<T>; 8] {
        [
            &mut self.input_shift,
            &mut self.input_scale,
            &mut self.conv1_w,
            &mut self.conv1_b,
            &mut self.conv2_w,
            &mut self.conv2_b,
            &mut self.dense_w,
            &mut self.dense_b,
        ]
    }

    /// Trainable tensors.
    pub fn tensors(&self) -> [&[T]; 6] {
        [&self.conv1_w, &self.conv1_b, &self.conv2_w, &self.conv2_b, &self.dense_w, &self.dense_b]
    }

    pub fn tensors_mut(&mut self) -> [&mut Vec<T>; 6] {
        [
            &mut self.conv1_w,
            &mut self.conv1_b,
            &mut self.conv2_w,
            &mut self.conv2_b,
            &mut self.dense_w,
            &mut self.dense_b,
        ]
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.all_tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }

    pub fn cast<U: Scalar>(&self) -> ModelParams<U> {
        let conv = |v: &[T]| v.iter().map(|x| U::of_f64(x.as_f64())).collect();
        ModelParams {
            shape: self.shape,
            input_shift: conv(&self.input_shift),
            input_scale: conv(&self.input_scale),
            conv1_w: conv(&self.conv1_w),
            conv1_b: conv(&self.conv1_b),
            conv2_w: conv(&self.conv2_w),
            conv2_b: conv(&self.conv2_b),
            dense_w: conv(&self.dense_w),
            dense_b: conv(&self.dense_b),
        }
    }

    /// Trainable parameter by flat index across tensors in storage order.
    pub fn flat_get(&self, mut i: usize) -> T {
        for t in self.tensors() {
            if i < t.len() {
                return t[i];
            }
            i -= t.len();
        }
        panic!("flat parameter index out of range");
    }

    pub fn flat_set(&mut self, mut i: usize, v: T) {
        for t in self.tensors_mut() {
            if i < t.len() {
                t[i] = v;
                return;
            }
            i -= t.len();
        }
        panic!("flat parameter index out of range");
    }
}
