use num_complex::Complex64;

use crate::error::{Error, Result};

/// Row-major 2D grid of real or complex scalars.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid2D<T> {
    height: usize,
    width: usize,
    values: Vec<T>,
}

impl<T: Copy> Grid2D<T> {
    pub fn new(height: usize, width: usize, values: Vec<T>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::Dimension(format!(
                "grid dimensions must be positive, got {height}x{width}"
            )));
        }
        if values.len() != height * width {
            return Err(Error::Dimension(format!(
                "{} values for a {height}x{width} grid",
                values.len()
            )));
        }
        Ok(Self {
            height,
            width,
            values,
        })
    }

    pub fn filled(height: usize, width: usize, value: T) -> Self {
        assert!(height > 0 && width > 0, "grid dimensions must be positive");
        Self {
            height,
            width,
            values: vec![value; height * width],
        }
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        assert!(height > 0 && width > 0, "grid dimensions must be positive");
        let mut values = Vec::with_capacity(height * width);
        for y in 0..height {
            for x in 0..width {
                values.push(f(y, x));
            }
        }
        Self {
            height,
            width,
            values,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> T {
        self.values[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, value: T) {
        self.values[y * self.width + x] = value;
    }

    pub fn map<U: Copy>(&self, f: impl FnMut(T) -> U) -> Grid2D<U> {
        Grid2D {
            height: self.height,
            width: self.width,
            values: self.values.iter().copied().map(f).collect(),
        }
    }
}

impl Grid2D<f64> {
    pub fn to_complex(&self) -> Grid2D<Complex64> {
        self.map(|v| Complex64::new(v, 0.0))
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

impl Grid2D<Complex64> {
    pub fn re(&self) -> Grid2D<f64> {
        self.map(|c| c.re)
    }

    pub fn norm_sqr(&self) -> Grid2D<f64> {
        self.map(|c| c.norm_sqr())
    }

    pub fn abs(&self) -> Grid2D<f64> {
        self.map(|c| c.norm())
    }

    pub fn max_abs_im(&self) -> f64 {
        self.values.iter().fold(0.0, |m, c| m.max(c.im.abs()))
    }
}
