use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Grid2D;

/// Luminance weights (ITU-R BT.601) shared by grayscale conversion and the
/// spectrum pipeline.
pub const LUMA_WEIGHTS: [f64; 3] = [0.299, 0.587, 0.114];

/// Channel-major raster (`C × H × W`) with values nominally in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Image {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl Image {
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if channels == 0 || height == 0 || width == 0 {
            return Err(Error::Dimension(format!(
                "image dimensions must be positive, got {channels}x{height}x{width}"
            )));
        }
        if data.len() != channels * height * width {
            return Err(Error::Dimension(format!(
                "{} values for a {channels}x{height}x{width} image",
                data.len()
            )));
        }
        Ok(Self {
            channels,
            height,
            width,
            data,
        })
    }

    pub fn filled(channels: usize, height: usize, width: usize, value: f64) -> Self {
        Self::new(channels, height, width, vec![value; channels * height * width])
            .expect("positive dimensions")
    }

    pub fn from_planes(planes: &[Grid2D<f64>]) -> Result<Self> {
        let first = planes
            .first()
            .ok_or_else(|| Error::Dimension("no channel planes".into()))?;
        let (h, w) = first.dims();
        let mut data = Vec::with_capacity(planes.len() * h * w);
        for p in planes {
            if p.dims() != (h, w) {
                return Err(Error::Dimension("channel planes differ in size".into()));
            }
            data.extend_from_slice(p.values());
        }
        Self::new(planes.len(), h, w, data)
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.channels, self.height, self.width)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn plane_len(&self) -> usize {
        self.height * self.width
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        let n = self.plane_len();
        &self.data[c * n..(c + 1) * n]
    }

    pub fn channel_mut(&mut self, c: usize) -> &mut [f64] {
        let n = self.plane_len();
        &mut self.data[c * n..(c + 1) * n]
    }

    pub fn plane(&self, c: usize) -> Grid2D<f64> {
        Grid2D::new(self.height, self.width, self.channel(c).to_vec()).expect("consistent dims")
    }

    pub fn planes(&self) -> Vec<Grid2D<f64>> {
        (0..self.channels).map(|c| self.plane(c)).collect()
    }

    #[inline]
    pub fn get(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[(c * self.height + y) * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, c: usize, y: usize, x: usize, v: f64) {
        self.data[(c * self.height + y) * self.width + x] = v;
    }

    /// Luminance plane; single-channel images are returned as-is.
    pub fn luminance(&self) -> Grid2D<f64> {
        if self.channels != 3 {
            let n = self.plane_len();
            let mut out = vec![0.0; n];
            for c in 0..self.channels {
                for (o, v) in out.iter_mut().zip(self.channel(c)) {
                    *o += v / self.channels as f64;
                }
            }
            return Grid2D::new(self.height, self.width, out).expect("consistent dims");
        }
        let (r, g, b) = (self.channel(0), self.channel(1), self.channel(2));
        let values = r
            .iter()
            .zip(g)
            .zip(b)
            .map(|((r, g), b)| LUMA_WEIGHTS[0] * r + LUMA_WEIGHTS[1] * g + LUMA_WEIGHTS[2] * b)
            .collect();
        Grid2D::new(self.height, self.width, values).expect("consistent dims")
    }

    pub fn clamp_unit(&mut self) {
        for v in &mut self.data {
            *v = v.clamp(0.0, 1.0);
        }
    }

    pub fn in_unit_range(&self) -> bool {
        self.data.iter().all(|v| (0.0..=1.0).contains(v))
    }

    /// Rounds every value to the nearest `f32`, so the image survives the
    /// 32-bit on-disk layout unchanged.
    pub fn quantize_f32(&mut self) {
        for v in &mut self.data {
            *v = f64::from(*v as f32);
        }
    }

    pub fn max_abs_diff(&self, other: &Image) -> f64 {
        assert_eq!(self.dims(), other.dims());
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn planes_round_trip() {
        let img = Image::new(2, 2, 2, (0..8).map(f64::from).collect()).unwrap();
        let back = Image::from_planes(&img.planes()).unwrap();
        assert_eq!(img, back);
        assert_eq!(img.get(1, 0, 1), 5.0);
    }

    #[test]
    fn luminance_of_red() {
        let mut img = Image::filled(3, 2, 2, 0.0);
        img.channel_mut(0).fill(1.0);
        assert!(img.luminance().values().iter().all(|&v| v == 0.299));
    }
}
