//! Radix-2 Cooley–Tukey transforms on power-of-two grids.
//!
//! Forward transforms are unnormalized; the inverse carries the `1/(H·W)`
//! factor, so `ifft2(fft2(g)) == g` up to rounding.

use std::f64::consts::PI;

use num_complex::Complex64;

use super::Grid2D;
use crate::error::{Error, Result};

fn check_pow2(height: usize, width: usize) -> Result<()> {
    if !height.is_power_of_two() || !width.is_power_of_two() {
        return Err(Error::Dimension(format!(
            "FFT requires power-of-two dimensions, got {height}x{width}"
        )));
    }
    Ok(())
}

/// In-place iterative radix-2 transform of a power-of-two-length buffer.
/// `sign` is -1 for the forward and +1 for the inverse (unscaled) direction.
fn fft1d_in_place(buf: &mut [Complex64], twiddles: &[Complex64]) {
    let n = buf.len();
    if n <= 1 {
        return;
    }
    let bits = n.trailing_zeros();
    for i in 0..n {
        let j = i.reverse_bits() >> (usize::BITS - bits);
        if j > i {
            buf.swap(i, j);
        }
    }
    let mut len = 2;
    while len <= n {
        let half = len / 2;
        let stride = n / len;
        for start in (0..n).step_by(len) {
            for k in 0..half {
                let w = twiddles[k * stride];
                let a = buf[start + k];
                let b = buf[start + k + half] * w;
                buf[start + k] = a + b;
                buf[start + k + half] = a - b;
            }
        }
        len <<= 1;
    }
}

fn twiddles(n: usize, sign: f64) -> Vec<Complex64> {
    (0..n / 2)
        .map(|k| Complex64::from_polar(1.0, sign * 2.0 * PI * k as f64 / n as f64))
        .collect()
}

fn transform(grid: &Grid2D<Complex64>, sign: f64) -> Result<Grid2D<Complex64>> {
    let (h, w) = grid.dims();
    check_pow2(h, w)?;
    let mut data = grid.values().to_vec();

    let tw_row = twiddles(w, sign);
    for row in data.chunks_exact_mut(w) {
        fft1d_in_place(row, &tw_row);
    }

    let tw_col = twiddles(h, sign);
    let mut column = vec![Complex64::new(0.0, 0.0); h];
    for x in 0..w {
        for y in 0..h {
            column[y] = data[y * w + x];
        }
        fft1d_in_place(&mut column, &tw_col);
        for y in 0..h {
            data[y * w + x] = column[y];
        }
    }
    Grid2D::new(h, w, data)
}

/// Forward 2D DFT of a real grid, `F[u,v] = Σ g[y,x]·exp(-2πi(uy/H + vx/W))`.
pub fn fft2(grid: &Grid2D<f64>) -> Result<Grid2D<Complex64>> {
    transform(&grid.to_complex(), -1.0)
}

/// Inverse 2D DFT with `1/(H·W)` normalization.
pub fn ifft2(spectrum: &Grid2D<Complex64>) -> Result<Grid2D<Complex64>> {
    let mut out = transform(spectrum, 1.0)?;
    let scale = 1.0 / (spectrum.height() * spectrum.width()) as f64;
    for v in out.values_mut() {
        *v *= scale;
    }
    Ok(out)
}

/// Moves the DC bin from `(0, 0)` to `(H/2, W/2)`.
pub fn fftshift<T: Copy>(grid: &Grid2D<T>) -> Grid2D<T> {
    let (h, w) = grid.dims();
    Grid2D::from_fn(h, w, |y, x| grid.get((y + h - h / 2) % h, (x + w - w / 2) % w))
}
