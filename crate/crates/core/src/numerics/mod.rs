//! Deterministic numeric substrate: dense 2D grids, radix-2 FFT and a
//! counter-based random stream.

mod fft;
mod grid;
mod rng;

pub use fft::{fft2, fftshift, ifft2};
pub use grid::Grid2D;
pub use rng::RandomStream;

pub use num_complex::Complex64;
