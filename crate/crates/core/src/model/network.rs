//! Forward and reverse passes.
//!
//! Activations use a channel-major batch layout `[c][b][y][x]` so each
//! convolution is one GEMM over the whole batch. Input batches are `[b][c][y][x]`.

use super::params::{ModelParams, ModelShape};
use super::scalar::{gemm, mat, mat_t, Scalar};
use crate::error::{Error, Result};

/// Strides locating plane `(b, c)` of a `size×size` activation tensor.
#[derive(Clone, Copy)]
struct Layout {
    batch_stride: usize,
    channel_stride: usize,
}

impl Layout {
    fn nchw(channels: usize, size: usize) -> Self {
        Self {
            batch_stride: channels * size * size,
            channel_stride: size * size,
        }
    }

    fn cnhw(batch: usize, size: usize) -> Self {
        Self {
            batch_stride: size * size,
            channel_stride: batch * size * size,
        }
    }

    fn plane(&self, b: usize, c: usize) -> usize {
        b * self.batch_stride + c * self.channel_stride
    }
}

/// Unfolds 3×3 zero-padded windows into a `(channels·9) × (batch·size²)` matrix.
fn im2col<T: Scalar>(input: &[T], layout: Layout, channels: usize, batch: usize, size: usize, cols: &mut [T]) {
    let n = batch * size * size;
    for c in 0..channels {
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &mut cols[((c * 3 + ky) * 3 + kx) * n..][..n];
                // out[x] = src[x + kx - 1] where that index is in range
                let dst_start = usize::from(kx == 0);
                let src_start = kx.saturating_sub(1);
                let len = size - usize::from(kx != 1);
                for b in 0..batch {
                    let plane = &input[layout.plane(b, c)..][..size * size];
                    for y in 0..size {
                        let out = &mut row[(b * size + y) * size..][..size];
                        let sy = y + ky;
                        if sy < 1 || sy > size {
                            out.fill(T::zero());
                            continue;
                        }
                        let src = &plane[(sy - 1) * size..][..size];
                        match kx {
                            0 => out[0] = T::zero(),
                            2 => out[size - 1] = T::zero(),
                            _ => {}
                        }
                        out[dst_start..dst_start + len].copy_from_slice(&src[src_start..src_start + len]);
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: accumulates column gradients back onto the input.
fn col2im<T: Scalar>(cols: &[T], layout: Layout, channels: usize, batch: usize, size: usize, out: &mut [T]) {
    let n = batch * size * size;
    for c in 0..channels {
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &cols[((c * 3 + ky) * 3 + kx) * n..][..n];
                let src_start = usize::from(kx == 0);
                let dst_start = kx.saturating_sub(1);
                let len = size - usize::from(kx != 1);
                for b in 0..batch {
                    let plane = &mut out[layout.plane(b, c)..][..size * size];
                    for y in 0..size {
                        let sy = y + ky;
                        if sy < 1 || sy > size {
                            continue;
                        }
                        let src = &row[(b * size + y) * size..][..size];
                        let dst = &mut plane[(sy - 1) * size..][..size];
                        for (d, &s) in dst[dst_start..dst_start + len].iter_mut().zip(&src[src_start..src_start + len]) {
                            *d = *d + s;
                        }
                    }
                }
            }
        }
    }
}

/// 2×2 max-pool of `planes` planes followed by ReLU. Returns pooled values
/// and, per output, the flat source index of the first maximal element in
/// scan order.
fn pool_relu<T: Scalar>(z: &[T], planes: usize, size: usize) -> (Vec<T>, Vec<u32>) {
    let half = size / 2;
    let mut out = Vec::with_capacity(planes * half * half);
    let mut idx = Vec::with_capacity(planes * half * half);
    for p in 0..planes {
        let base = p * size * size;
        for y in 0..half {
            for x in 0..half {
                let i0 = base + 2 * y * size + 2 * x;
                let mut best = i0;
                for i in [i0 + 1, i0 + size, i0 + size + 1] {
                    if z[i] > z[best] {
                        best = i;
                    }
                }
                out.push(z[best].max(T::zero()));
                idx.push(best as u32);
            }
        }
    }
    (out, idx)
}

fn add_row_bias<T: Scalar>(z: &mut [T], bias: &[T]) {
    let n = z.len() / bias.len();
    for (row, &b) in z.chunks_exact_mut(n).zip(bias) {
        for v in row {
            *v = *v + b;
        }
    }
}

fn row_sums<T: Scalar>(z: &[T], rows: usize) -> Vec<T> {
    let n = z.len() / rows;
    z.chunks_exact(n).map(|r| r.iter().fold(T::zero(), |a, &v| a + v)).collect()
}

/// Intermediate activations kept for the reverse pass.
struct Tape<T> {
    batch: usize,
    cols1: Vec<T>,
    idx1: Vec<u32>,
    p1: Vec<T>,
    cols2: Vec<T>,
    idx2: Vec<u32>,
    p2: Vec<T>,
    feat: Vec<T>,
    logits: Vec<T>,
}

fn check_batch<T>(shape: &ModelShape, batch: &[T]) -> Result<usize> {
    let len = shape.input_len();
    if batch.is_empty() || !batch.len().is_multiple_of(len) {
        return Err(Error::Shape(format!(
            "batch length {} is not a positive multiple of the image size {len}",
            batch.len()
        )));
    }
    Ok(batch.len() / len)
}

fn forward_tape<T: Scalar>(p: &ModelParams<T>, batch: &[T]) -> Result<Tape<T>> {
    let sh = p.shape;
    let nb = check_batch(&sh, batch)?;
    let (s, s2, s4) = (sh.image_size, sh.image_size / 2, sh.image_size / 4);

    let plane0 = s * s;
    let mut normalized = batch.to_vec();
    for (c, chunk) in normalized.chunks_exact_mut(plane0).enumerate() {
        let ch = c % sh.channels;
        let (shift, scale) = (p.input_shift[ch], p.input_scale[ch]);
        for v in chunk {
            *v = (*v - shift) * scale;
        }
    }
    let batch = &normalized[..];

    let k1 = sh.channels * 9;
    let n1 = nb * s * s;
    let mut cols1 = vec![T::zero(); k1 * n1];
    im2col(batch, Layout::nchw(sh.channels, s), sh.channels, nb, s, &mut cols1);
    let mut z1 = vec![T::zero(); sh.f1 * n1];
    gemm(sh.f1, k1, n1, mat(&p.conv1_w), mat(&cols1), T::zero(), &mut z1);
    add_row_bias(&mut z1, &p.conv1_b);
    let (p1, idx1) = pool_relu(&z1, sh.f1 * nb, s);
    drop(z1);

    let k2 = sh.f1 * 9;
    let n2 = nb * s2 * s2;
    let mut cols2 = vec![T::zero(); k2 * n2];
    im2col(&p1, Layout::cnhw(nb, s2), sh.f1, nb, s2, &mut cols2);
    let mut z2 = vec![T::zero(); sh.f2 * n2];
    gemm(sh.f2, k2, n2, mat(&p.conv2_w), mat(&cols2), T::zero(), &mut z2);
    add_row_bias(&mut z2, &p.conv2_b);
    let (p2, idx2) = pool_relu(&z2, sh.f2 * nb, s2);
    drop(z2);

    let d = sh.features();
    let plane = s4 * s4;
    let mut feat = vec![T::zero(); nb * d];
    for f in 0..sh.f2 {
        for b in 0..nb {
            feat[b * d + f * plane..][..plane].copy_from_slice(&p2[(f * nb + b) * plane..][..plane]);
        }
    }
    let mut logits = vec![T::zero(); nb * sh.num_classes];
    gemm(nb, d, sh.num_classes, mat(&feat), mat_t(&p.dense_w), T::zero(), &mut logits);
    for row in logits.chunks_exact_mut(sh.num_classes) {
        for (v, &b) in row.iter_mut().zip(&p.dense_b) {
            *v = *v + b;
        }
    }
    Ok(Tape {
        batch: nb,
        cols1,
        idx1,
        p1,
        cols2,
        idx2,
        p2,
        feat,
        logits,
    })
}

/// Logits for a batch laid out `[b][c][y][x]`, returned `[b][class]`.
pub fn forward<T: Scalar>(p: &ModelParams<T>, batch: &[T]) -> Result<Vec<T>> {
    Ok(forward_tape(p, batch)?.logits)
}

/// Which gradients [`loss_and_grads`] should produce.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GradRequest {
    pub params: bool,
    pub inputs: bool,
}

impl GradRequest {
    pub const ALL: Self = Self {
        params: true,
        inputs: true,
    };
    pub const PARAMS: Self = Self {
        params: true,
        inputs: false,
    };
    pub const INPUTS: Self = Self {
        params: false,
        inputs: true,
    };
}

#[derive(Debug, Clone)]
pub struct Gradients<T> {
    /// Mean cross-entropy over the batch.
    pub loss: T,
    pub params: Option<ModelParams<T>>,
    /// Same layout as the input batch.
    pub inputs: Option<Vec<T>>,
}

/// Mean cross-entropy per sample via log-sum-exp, and `softmax - onehot`.
fn cross_entropy<T: Scalar>(logits: &[T], labels: &[usize], classes: usize) -> (Vec<T>, Vec<T>) {
    let mut losses = Vec::with_capacity(labels.len());
    let mut dlogits = vec![T::zero(); logits.len()];
    for ((row, d), &y) in logits.chunks_exact(classes).zip(dlogits.chunks_exact_mut(classes)).zip(labels) {
        let m = row.iter().fold(T::neg_infinity(), |a, &v| a.max(v));
        let sum = row.iter().fold(T::zero(), |a, &v| a + (v - m).exp());
        let lse = m + sum.ln();
        losses.push(lse - row[y]);
        for (g, &v) in d.iter_mut().zip(row) {
            *g = (v - lse).exp();
        }
        d[y] = d[y] - T::one();
    }
    (losses, dlogits)
}

/// Per-sample cross-entropy losses.
pub fn per_sample_loss<T: Scalar>(p: &ModelParams<T>, batch: &[T], labels: &[usize]) -> Result<Vec<T>> {
    let logits = forward(p, batch)?;
    check_labels(&p.shape, labels, logits.len() / p.shape.num_classes)?;
    Ok(cross_entropy(&logits, labels, p.shape.num_classes).0)
}

fn check_labels(shape: &ModelShape, labels: &[usize], nb: usize) -> Result<()> {
    if labels.len() != nb {
        return Err(Error::Shape(format!("{} labels for a batch of {nb}", labels.len())));
    }
    if let Some(&bad) = labels.iter().find(|&&y| y >= shape.num_classes) {
        return Err(Error::param(format!("label {bad} outside [0, {})", shape.num_classes)));
    }
    Ok(())
}

/// Mean cross-entropy and its exact gradients.
pub fn loss_and_grads<T: Scalar>(
    p: &ModelParams<T>,
    batch: &[T],
    labels: &[usize],
    want: GradRequest,
) -> Result<Gradients<T>> {
    let sh = p.shape;
    let tape = forward_tape(p, batch)?;
    let nb = tape.batch;
    check_labels(&sh, labels, nb)?;
    let classes = sh.num_classes;
    let (losses, mut dlogits) = cross_entropy(&tape.logits, labels, classes);
    let inv = T::one() / T::of_f64(nb as f64);
    // Running mean: equal per-sample losses average to exactly that value.
    let loss = losses
        .iter()
        .enumerate()
        .fold(T::zero(), |m, (i, &v)| m + (v - m) / T::of_f64((i + 1) as f64));
    for g in &mut dlogits {
        *g = *g * inv;
    }
    if !want.params && !want.inputs {
        return Ok(Gradients {
            loss,
            params: None,
            inputs: None,
        });
    }

    let (s, s2, s4) = (sh.image_size, sh.image_size / 2, sh.image_size / 4);
    let d = sh.features();
    let mut grads = if want.params { Some(ModelParams::zeros(sh)?) } else { None };

    if let Some(g) = grads.as_mut() {
        gemm(classes, nb, d, mat_t(&dlogits), mat(&tape.feat), T::zero(), &mut g.dense_w);
        for row in dlogits.chunks_exact(classes) {
            for (acc, &v) in g.dense_b.iter_mut().zip(row) {
                *acc = *acc + v;
            }
        }
    }
    let mut dfeat = vec![T::zero(); nb * d];
    gemm(nb, classes, d, mat(&dlogits), mat(&p.dense_w), T::zero(), &mut dfeat);

    // Unpool + ReLU into dz2, laid out [f2][b][s2][s2].
    let plane4 = s4 * s4;
    let n2 = nb * s2 * s2;
    let mut dz2 = vec![T::zero(); sh.f2 * n2];
    for f in 0..sh.f2 {
        for b in 0..nb {
            let o = (f * nb + b) * plane4;
            for j in 0..plane4 {
                if tape.p2[o + j] > T::zero() {
                    dz2[tape.idx2[o + j] as usize] = dfeat[b * d + f * plane4 + j];
                }
            }
        }
    }
    drop(dfeat);

    let k2 = sh.f1 * 9;
    if let Some(g) = grads.as_mut() {
        gemm(sh.f2, n2, k2, mat(&dz2), mat_t(&tape.cols2), T::zero(), &mut g.conv2_w);
        g.conv2_b = row_sums(&dz2, sh.f2);
    }
    let mut dcols2 = vec![T::zero(); k2 * n2];
    gemm(k2, sh.f2, n2, mat_t(&p.conv2_w), mat(&dz2), T::zero(), &mut dcols2);
    drop(dz2);
    let mut dp1 = vec![T::zero(); sh.f1 * n2];
    col2im(&dcols2, Layout::cnhw(nb, s2), sh.f1, nb, s2, &mut dp1);
    drop(dcols2);

    let n1 = nb * s * s;
    let mut dz1 = vec![T::zero(); sh.f1 * n1];
    for (j, (&v, &src)) in tape.p1.iter().zip(&tape.idx1).enumerate() {
        if v > T::zero() {
            dz1[src as usize] = dp1[j];
        }
    }
    drop(dp1);

    let k1 = sh.channels * 9;
    if let Some(g) = grads.as_mut() {
        gemm(sh.f1, n1, k1, mat(&dz1), mat_t(&tape.cols1), T::zero(), &mut g.conv1_w);
        g.conv1_b = row_sums(&dz1, sh.f1);
    }
    let inputs = if want.inputs {
        let mut dcols1 = vec![T::zero(); k1 * n1];
        gemm(k1, sh.f1, n1, mat_t(&p.conv1_w), mat(&dz1), T::zero(), &mut dcols1);
        let mut dx = vec![T::zero(); nb * sh.input_len()];
        col2im(&dcols1, Layout::nchw(sh.channels, s), sh.channels, nb, s, &mut dx);
        for (c, chunk) in dx.chunks_exact_mut(s * s).enumerate() {
            let scale = p.input_scale[c % sh.channels];
            for v in chunk {
                *v = *v * scale;
            }
        }
        Some(dx)
    } else {
        None
    };
    Ok(Gradients {
        loss,
        params: grads,
        inputs,
    })
}

/// Argmax per row; ties go to the lowest class index.
pub fn argmax_rows<T: Scalar>(logits: &[T], classes: usize) -> Vec<usize> {
    logits
        .chunks_exact(classes)
        .map(|row| {
            let mut best = 0;
            for (i, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = i;
                }
            }
            best
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::RandomStream;

    fn naive_im2col(input: &[f64], channels: usize, batch: usize, size: usize) -> Vec<f64> {
        let n = batch * size * size;
        let mut cols = vec![0.0; channels * 9 * n];
        for c in 0..channels {
            for ky in 0..3 {
                for kx in 0..3 {
                    for b in 0..batch {
                        for y in 0..size {
                            for x in 0..size {
                                let (sy, sx) = (y as isize + ky as isize - 1, x as isize + kx as isize - 1);
                                let v = if sy < 0 || sx < 0 || sy >= size as isize || sx >= size as isize {
                                    0.0
                                } else {
                                    input[((b * channels + c) * size + sy as usize) * size + sx as usize]
                                };
                                cols[((c * 3 + ky) * 3 + kx) * n + (b * size + y) * size + x] = v;
                            }
                        }
                    }
                }
            }
        }
        cols
    }

    #[test]
    fn im2col_matches_naive_and_col2im_is_adjoint() {
        let (channels, batch, size) = (2, 3, 4);
        let mut rs = RandomStream::new(5);
        let input: Vec<f64> = (0..channels * batch * size * size).map(|_| rs.normal()).collect();
        let mut cols = vec![0.0; channels * 9 * batch * size * size];
        im2col(&input, Layout::nchw(channels, size), channels, batch, size, &mut cols);
        assert_eq!(cols, naive_im2col(&input, channels, batch, size));

        // <im2col(x), y> == <x, col2im(y)>
        let y: Vec<f64> = (0..cols.len()).map(|_| rs.normal()).collect();
        let mut back = vec![0.0; input.len()];
        col2im(&y, Layout::nchw(channels, size), channels, batch, size, &mut back);
        let lhs: f64 = cols.iter().zip(&y).map(|(a, b)| a * b).sum();
        let rhs: f64 = input.iter().zip(&back).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-9 * lhs.abs().max(1.0));
    }

    #[test]
    fn pool_ties_route_to_first_element() {
        let z = [1.0, 3.0, 3.0, -1.0];
        let (out, idx) = pool_relu(&z, 1, 2);
        assert_eq!(out, vec![3.0]);
        assert_eq!(idx, vec![1]);
        let (out, _) = pool_relu(&[-1.0, -2.0, -3.0, -4.0], 1, 2);
        assert_eq!(out, vec![0.0]);
    }

    fn draw(shape: ModelShape, seed: u64, batch: usize) -> (ModelParams<f64>, Vec<f64>, Vec<usize>) {
        let rs = RandomStream::new(seed);
        let mut p = ModelParams::<f64>::init(shape, &rs.derive("params")).unwrap();
        p.input_shift = vec![0.4, 0.5, 0.6][..shape.channels].to_vec();
        p.input_scale = vec![5.0, 4.0, 6.0][..shape.channels].to_vec();
        let mut brs = rs.derive("bias");
        for b in [&mut p.conv1_b, &mut p.conv2_b, &mut p.dense_b] {
            for v in b.iter_mut() {
                *v = 0.1 * brs.normal();
            }
        }
        let mut xrs = rs.derive("x");
        let x = (0..batch * shape.input_len()).map(|_| xrs.unit()).collect();
        let y = (0..batch).map(|_| xrs.below(shape.num_classes)).collect();
        (p, x, y)
    }

    fn mean_loss(p: &ModelParams<f64>, x: &[f64], y: &[usize]) -> f64 {
        let l = per_sample_loss(p, x, y).unwrap();
        l.iter().sum::<f64>() / l.len() as f64
    }

    /// Relative error below 1e-4; magnitudes under 1e-5 are compared at that
    /// scale because central differences with h = 1e-5 resolve ~1e-10 absolute.
    fn close(analytic: f64, numeric: f64) -> bool {
        (analytic - numeric).abs() <= 1e-4 * analytic.abs().max(numeric.abs()).max(1e-5)
    }

    const H: f64 = 1e-5;

    #[test]
    fn parameter_gradients_match_finite_differences() {
        let shape = ModelShape {
            channels: 3,
            image_size: 8,
            f1: 4,
            f2: 6,
            num_classes: 5,
        };
        for seed in 0..5 {
            let (p, x, y) = draw(shape, seed, 2);
            let g = loss_and_grads(&p, &x, &y, GradRequest::PARAMS).unwrap().params.unwrap();
            let mut q = p.clone();
            for i in 0..p.num_params() {
                let v = p.flat_get(i);
                q.flat_set(i, v + H);
                let up = mean_loss(&q, &x, &y);
                q.flat_set(i, v - H);
                let down = mean_loss(&q, &x, &y);
                q.flat_set(i, v);
                let numeric = (up - down) / (2.0 * H);
                assert!(close(g.flat_get(i), numeric), "seed {seed} param {i}: {} vs {numeric}", g.flat_get(i));
            }
        }
    }

    #[test]
    fn input_gradients_match_finite_differences() {
        let shape = ModelShape::new(3, 16, 8);
        for seed in 0..5 {
            let (p, x, y) = draw(shape, 100 + seed, 2);
            let g = loss_and_grads(&p, &x, &y, GradRequest::INPUTS).unwrap().inputs.unwrap();
            assert_eq!(g.len(), x.len());
            let mut pick = RandomStream::new(seed).derive("coords");
            for _ in 0..20 {
                let i = pick.below(x.len());
                let mut xp = x.clone();
                xp[i] += H;
                let up = mean_loss(&p, &xp, &y);
                xp[i] -= 2.0 * H;
                let down = mean_loss(&p, &xp, &y);
                let numeric = (up - down) / (2.0 * H);
                assert!(close(g[i], numeric), "seed {seed} input {i}: {} vs {numeric}", g[i]);
            }
        }
    }

    #[test]
    fn zero_params_give_zero_logits_and_uniform_loss() {
        let shape = ModelShape::new(3, 8, 8);
        let p = ModelParams::<f64>::zeros(shape).unwrap();
        let (_, x, y) = draw(shape, 1, 3);
        assert!(forward(&p, &x).unwrap().iter().all(|&v| v == 0.0));
        let g = loss_and_grads(&p, &x, &y, GradRequest::ALL).unwrap();
        assert_eq!(g.loss, 8f64.ln());
    }

    #[test]
    fn batch_rows_are_independent() {
        let shape = ModelShape::new(3, 8, 4);
        let (p, x, _) = draw(shape, 2, 3);
        let len = shape.input_len();
        let logits = forward(&p, &x).unwrap();
        let mut swapped = x[len..2 * len].to_vec();
        swapped.extend_from_slice(&x[..len]);
        swapped.extend_from_slice(&x[2 * len..]);
        let l2 = forward(&p, &swapped).unwrap();
        assert_eq!(&l2[..4], &logits[4..8]);
        assert_eq!(&l2[4..8], &logits[..4]);
        assert_eq!(&l2[8..], &logits[8..]);
        let same = [x[..len].to_vec(), x[..len].to_vec()].concat();
        let l = forward(&p, &same).unwrap();
        assert_eq!(l[..4], l[4..]);
    }

    #[test]
    fn loss_stable_for_large_logits() {
        let logits = [1000.0f64, -1000.0, 999.0, 0.0];
        let (loss, d) = cross_entropy(&logits, &[1], 4);
        assert!(loss[0].is_finite() && (loss[0] - (2000.0 + (1.0 + (-1.0f64).exp()).ln())).abs() < 1e-9);
        assert!(d.iter().all(|v| v.is_finite()));
        let (loss, _) = cross_entropy(&[1000.0f32, -1000.0], &[0], 2);
        assert_eq!(loss[0], 0.0);
    }

    #[test]
    fn invalid_inputs_are_rejected() {
        let shape = ModelShape::new(3, 8, 4);
        let (p, x, _) = draw(shape, 3, 2);
        assert!(loss_and_grads(&p, &x, &[0, 4], GradRequest::ALL).is_err());
        assert!(loss_and_grads(&p, &x, &[0], GradRequest::ALL).is_err());
        assert!(forward(&p, &x[1..]).is_err());
    }

    #[test]
    fn argmax_tie_goes_low() {
        let logits = [0.0, 0.0, 5.0, 1.0, 0.0, 5.0, 0.0, 0.0];
        assert_eq!(argmax_rows(&logits, 8), vec![2]);
    }
}
