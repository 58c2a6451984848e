//! Forward and backward passes for the coordinate networks.
//!
//! Batches are processed in fixed-size chunks; gradients from successive
//! chunks are summed in order, so loss and gradients are bit-reproducible.
//!
//! Activations of the convolutional head are stored channel-last
//! (`H × W × C` per item). The ×2 nearest upsample followed by a `3 × 3`
//! convolution is evaluated in polyphase form: each of the four output
//! phases is a `2 × 2` convolution of the low-resolution map with kernel taps
//! summed according to which upsampled rows/columns they land on.

use super::arch::{ArchConfig, LayerSpec, NetKind, SEED_SIDE};
use super::encoding::EncodedCoord;
use super::kernels::{accumulate_colsum, accumulate_tn, matmul_nn, matmul_nt_bias, Real};
use super::model::{GradientSet, Model};
use crate::error::{Error, Result};
use crate::train::Distortion;

/// Items per chunk inside a batch.
const CHUNK: usize = 32;

/// Smoothing constant of the per-micro-image L2 norm, `√(Σr² + ε²)`.
pub const NORM_EPS: f64 = 1e-8;

/// For output phase `p` along one axis, the 3-tap kernel indices that fall on
/// low-resolution offset `a ∈ {0, 1}` (relative to `i - 1 + p`).
const PHASE_TAPS: [[&[usize]; 2]; 2] = [[&[0], &[1, 2]], [&[0, 1], &[2]]];

fn tap_group(phase: usize, tap: usize) -> usize {
    if PHASE_TAPS[phase][0].contains(&tap) {
        0
    } else {
        1
    }
}

enum LayerCache<T> {
    Dense { input: Vec<T>, deriv: Option<Vec<T>> },
    UpConv { patches: Vec<Vec<T>>, deriv: Option<Vec<T>> },
    Conv { patches: Vec<T>, deriv: Option<Vec<T>> },
}

/// Counts network evaluations (one per coordinate fed through a net).
#[derive(Debug, Default)]
pub struct EvalCounter(std::sync::atomic::AtomicUsize);

impl EvalCounter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&self, n: usize) {
        self.0.fetch_add(n, std::sync::atomic::Ordering::Relaxed);
    }

    pub fn get(&self) -> usize {
        self.0.load(std::sync::atomic::Ordering::Relaxed)
    }
}


fn chw_to_hwc<T: Real>(x: &[T], m: usize, ch: usize, side: usize) -> Vec<T> {
    let plane = side * side;
    let mut out = vec![T::zero(); x.len()];
    for item in 0..m {
        let base = item * ch * plane;
        for c in 0..ch {
            for p in 0..plane {
                out[base + p * ch + c] = x[base + c * plane + p];
            }
        }
    }
    out
}

fn hwc_to_chw<T: Real>(x: &[T], m: usize, ch: usize, side: usize) -> Vec<T> {
    let plane = side * side;
    let mut out = vec![T::zero(); x.len()];
    for item in 0..m {
        let base = item * ch * plane;
        for c in 0..ch {
            for p in 0..plane {
                out[base + c * plane + p] = x[base + p * ch + c];
            }
        }
    }
    out
}

/// Effective `2 × 2` kernels for the four output phases, each laid out
/// `[o][(a·2 + e)·C_in + c]`.
fn phase_kernels<T: Real>(w: &[T], cin: usize, cout: usize) -> Vec<Vec<T>> {
    let k4 = 4 * cin;
    let mut out = Vec::with_capacity(4);
    for p in 0..2 {
        for q in 0..2 {
            let mut k = vec![T::zero(); cout * k4];
            for o in 0..cout {
                for a in 0..2 {
                    for e in 0..2 {
                        for c in 0..cin {
                            let mut acc = T::zero();
                            for &ky in PHASE_TAPS[p][a] {
                                for &kx in PHASE_TAPS[q][e] {
                                    acc += w[((o * cin + c) * 3 + ky) * 3 + kx];
                                }
                            }
                            k[o * k4 + (a * 2 + e) * cin + c] = acc;
                        }
                    }
                }
            }
            out.push(k);
        }
    }
    out
}

fn upconv_patches<T: Real>(x: &[T], m: usize, h: usize, cin: usize, p: usize, q: usize) -> Vec<T> {
    let k4 = 4 * cin;
    let plane = h * h * cin;
    let mut patches = vec![T::zero(); m * h * h * k4];
    for item in 0..m {
        let xi = &x[item * plane..(item + 1) * plane];
        for i in 0..h {
            for j in 0..h {
                let row = ((item * h + i) * h + j) * k4;
                for a in 0..2 {
                    let yy = (i + a + p) as isize - 1;
                    if yy < 0 || yy >= h as isize {
                        continue;
                    }
                    for e in 0..2 {
                        let xx = (j + e + q) as isize - 1;
                        if xx < 0 || xx >= h as isize {
                            continue;
                        }
                        let src = (yy as usize * h + xx as usize) * cin;
                        let dst = row + (a * 2 + e) * cin;
                        patches[dst..dst + cin].copy_from_slice(&xi[src..src + cin]);
                    }
                }
            }
        }
    }
    patches
}

fn upconv_col2im<T: Real>(dp: &[T], m: usize, h: usize, cin: usize, p: usize, q: usize, dx: &mut [T]) {
    let k4 = 4 * cin;
    let plane = h * h * cin;
    for item in 0..m {
        let dxi = &mut dx[item * plane..(item + 1) * plane];
        for i in 0..h {
            for j in 0..h {
                let row = ((item * h + i) * h + j) * k4;
                for a in 0..2 {
                    let yy = (i + a + p) as isize - 1;
                    if yy < 0 || yy >= h as isize {
                        continue;
                    }
                    for e in 0..2 {
                        let xx = (j + e + q) as isize - 1;
                        if xx < 0 || xx >= h as isize {
                            continue;
                        }
                        let dst = (yy as usize * h + xx as usize) * cin;
                        let src = row + (a * 2 + e) * cin;
                        for c in 0..cin {
                            dxi[dst + c] += dp[src + c];
                        }
                    }
                }
            }
        }
    }
}

/// Kernel `[o][c][ky][kx]` re-laid as `[o][(ky·3 + kx)·C_in + c]`.
fn plain_kernel<T: Real>(w: &[T], cin: usize, cout: usize) -> Vec<T> {
    let k9 = 9 * cin;
    let mut k = vec![T::zero(); cout * k9];
    for o in 0..cout {
        for c in 0..cin {
            for t in 0..9 {
                k[o * k9 + t * cin + c] = w[(o * cin + c) * 9 + t];
            }
        }
    }
    k
}

/// Patches for the output window `[off, off + out_side)²` of a same-padded
/// `3 × 3` convolution over an `n × n` map.
fn conv_patches<T: Real>(x: &[T], m: usize, n: usize, cin: usize, out_side: usize, off: usize) -> Vec<T> {
    let k9 = 9 * cin;
    let plane = n * n * cin;
    let mut patches = vec![T::zero(); m * out_side * out_side * k9];
    for item in 0..m {
        let xi = &x[item * plane..(item + 1) * plane];
        for v in 0..out_side {
            for u in 0..out_side {
                let row = ((item * out_side + v) * out_side + u) * k9;
                for ky in 0..3 {
                    let yy = (v + off + ky) as isize - 1;
                    if yy < 0 || yy >= n as isize {
                        continue;
                    }
                    for kx in 0..3 {
                        let xx = (u + off + kx) as isize - 1;
                        if xx < 0 || xx >= n as isize {
                            continue;
                        }
                        let src = (yy as usize * n + xx as usize) * cin;
                        let dst = row + (ky * 3 + kx) * cin;
                        patches[dst..dst + cin].copy_from_slice(&xi[src..src + cin]);
                    }
                }
            }
        }
    }
    patches
}

#[allow(clippy::too_many_arguments)]
fn conv_col2im<T: Real>(dp: &[T], m: usize, n: usize, cin: usize, out_side: usize, off: usize, dx: &mut [T]) {
    let k9 = 9 * cin;
    let plane = n * n * cin;
    for item in 0..m {
        let dxi = &mut dx[item * plane..(item + 1) * plane];
        for v in 0..out_side {
            for u in 0..out_side {
                let row = ((item * out_side + v) * out_side + u) * k9;
                for ky in 0..3 {
                    let yy = (v + off + ky) as isize - 1;
                    if yy < 0 || yy >= n as isize {
                        continue;
                    }
                    for kx in 0..3 {
                        let xx = (u + off + kx) as isize - 1;
                        if xx < 0 || xx >= n as isize {
                            continue;
                        }
                        let dst = (yy as usize * n + xx as usize) * cin;
                        let src = row + (ky * 3 + kx) * cin;
                        for c in 0..cin {
                            dxi[dst + c] += dp[src + c];
                        }
                    }
                }
            }
        }
    }
}

/// Output window of a non-upsampling convolution: the last layer is cropped
/// to the micro-image.
fn conv_window(arch: &ArchConfig, is_last: bool, n: usize) -> (usize, usize) {
    if is_last {
        (arch.output_side, arch.crop_offset())
    } else {
        (n, 0)
    }
}

fn forward_chunk<T: Real>(
    model: &Model<T>,
    specs: &[LayerSpec],
    input: Vec<T>,
    m: usize,
    mut caches: Option<&mut Vec<LayerCache<T>>>,
) -> Vec<T> {
    let arch = &model.arch;
    let omega = T::of(arch.omega as f64);
    let keep = caches.is_some();
    let mut act = input;
    for (li, spec) in specs.iter().enumerate() {
        let w = &model.tensors[2 * li].data;
        let b = &model.tensors[2 * li + 1].data;
        let is_last = li + 1 == specs.len();
        match *spec {
            LayerSpec::Dense {
                fan_in,
                fan_out,
                sine: has_sine,
            } => {
                let mut z = vec![T::zero(); m * fan_out];
                matmul_nt_bias(&act, m, fan_in, w, fan_out, b, &mut z);
                let deriv = if has_sine { sine_t(&mut z, omega, keep) } else { None };
                if let Some(c) = caches.as_deref_mut() {
                    c.push(LayerCache::Dense { input: act, deriv });
                }
                act = z;
                if matches!(specs.get(li + 1), Some(LayerSpec::Conv { .. })) {
                    act = chw_to_hwc(&act, m, fan_out / (SEED_SIDE * SEED_SIDE), SEED_SIDE);
                }
            }
            LayerSpec::Conv {
                in_ch,
                out_ch,
                in_side,
                upsample: true,
                sine: has_sine,
            } => {
                let h = in_side;
                let n = 2 * h;
                let kernels = phase_kernels(w, in_ch, out_ch);
                let rows = m * h * h;
                let mut y = vec![T::zero(); m * n * n * out_ch];
                let mut z = vec![T::zero(); rows * out_ch];
                let mut all_patches = Vec::with_capacity(if keep { 4 } else { 0 });
                for p in 0..2 {
                    for q in 0..2 {
                        let patches = upconv_patches(&act, m, h, in_ch, p, q);
                        matmul_nt_bias(&patches, rows, 4 * in_ch, &kernels[p * 2 + q], out_ch, b, &mut z);
                        for item in 0..m {
                            for i in 0..h {
                                for j in 0..h {
                                    let src = ((item * h + i) * h + j) * out_ch;
                                    let dst = item * n * n * out_ch + ((2 * i + p) * n + 2 * j + q) * out_ch;
                                    y[dst..dst + out_ch].copy_from_slice(&z[src..src + out_ch]);
                                }
                            }
                        }
                        if keep {
                            all_patches.push(patches);
                        }
                    }
                }
                let deriv = if has_sine { sine_t(&mut y, omega, keep) } else { None };
                if let Some(c) = caches.as_deref_mut() {
                    c.push(LayerCache::UpConv {
                        patches: all_patches,
                        deriv,
                    });
                }
                act = y;
            }
            LayerSpec::Conv {
                in_ch,
                out_ch,
                in_side,
                upsample: false,
                sine: has_sine,
            } => {
                let (out_side, off) = conv_window(arch, is_last, in_side);
                let rows = m * out_side * out_side;
                let kernel = plain_kernel(w, in_ch, out_ch);
                let patches = conv_patches(&act, m, in_side, in_ch, out_side, off);
                let mut z = vec![T::zero(); rows * out_ch];
                matmul_nt_bias(&patches, rows, 9 * in_ch, &kernel, out_ch, b, &mut z);
                let deriv = if has_sine { sine_t(&mut z, omega, keep) } else { None };
                if let Some(c) = caches.as_deref_mut() {
                    c.push(LayerCache::Conv { patches, deriv });
                }
                act = z;
            }
        }
    }
    act
}

/// In place `z ← sin(ω z)`, optionally returning `ω cos(ω z)`.
fn sine_t<T: Real>(z: &mut [T], omega: T, keep: bool) -> Option<Vec<T>> {
    if keep {
        let mut d = Vec::with_capacity(z.len());
        for v in z.iter_mut() {
            let arg = omega * *v;
            *v = arg.sin();
            d.push(omega * arg.cos());
        }
        Some(d)
    } else {
        for v in z.iter_mut() {
            *v = (omega * *v).sin();
        }
        None
    }
}

fn backward_chunk<T: Real>(
    model: &Model<T>,
    specs: &[LayerSpec],
    mut caches: Vec<LayerCache<T>>,
    dout: Vec<T>,
    m: usize,
    grads: &mut GradientSet<T>,
) {
    let arch = &model.arch;
    let mut g = dout;
    for li in (0..specs.len()).rev() {
        let cache = caches.pop().expect("one cache entry per layer");
        let w = &model.tensors[2 * li].data;
        let is_last = li + 1 == specs.len();
        let (gw, rest) = grads.tensors[2 * li..].split_at_mut(1);
        let (gw, gb) = (&mut gw[0], &mut rest[0]);
        match (specs[li], cache) {
            (
                LayerSpec::Dense {
                    fan_in, fan_out, ..
                },
                LayerCache::Dense { input, deriv },
            ) => {
                if matches!(specs.get(li + 1), Some(LayerSpec::Conv { .. })) {
                    g = hwc_to_chw(&g, m, fan_out / (SEED_SIDE * SEED_SIDE), SEED_SIDE);
                }
                if let Some(d) = deriv {
                    g.iter_mut().zip(&d).for_each(|(gi, di)| *gi *= *di);
                }
                accumulate_tn(&g, m, fan_out, &input, fan_in, gw);
                accumulate_colsum(&g, fan_out, gb);
                if li > 0 {
                    let mut dx = vec![T::zero(); m * fan_in];
                    matmul_nn(&g, m, fan_out, w, fan_in, &mut dx);
                    g = dx;
                }
            }
            (
                LayerSpec::Conv {
                    in_ch,
                    out_ch,
                    in_side,
                    upsample: true,
                    ..
                },
                LayerCache::UpConv { patches, deriv },
            ) => {
                if let Some(d) = deriv {
                    g.iter_mut().zip(&d).for_each(|(gi, di)| *gi *= *di);
                }
                let h = in_side;
                let n = 2 * h;
                let rows = m * h * h;
                let k4 = 4 * in_ch;
                let kernels = phase_kernels(w, in_ch, out_ch);
                let mut dx = vec![T::zero(); m * h * h * in_ch];
                let mut dz = vec![T::zero(); rows * out_ch];
                let mut dp = vec![T::zero(); rows * k4];
                for p in 0..2 {
                    for q in 0..2 {
                        let ph = p * 2 + q;
                        for item in 0..m {
                            for i in 0..h {
                                for j in 0..h {
                                    let dst = ((item * h + i) * h + j) * out_ch;
                                    let src = item * n * n * out_ch + ((2 * i + p) * n + 2 * j + q) * out_ch;
                                    dz[dst..dst + out_ch].copy_from_slice(&g[src..src + out_ch]);
                                }
                            }
                        }
                        let mut dk = vec![T::zero(); out_ch * k4];
                        accumulate_tn(&dz, rows, out_ch, &patches[ph], k4, &mut dk);
                        accumulate_colsum(&dz, out_ch, gb);
                        fold_phase_gradient(&dk, in_ch, out_ch, p, q, gw);
                        if li > 0 {
                            matmul_nn(&dz, rows, out_ch, &kernels[ph], k4, &mut dp);
                            upconv_col2im(&dp, m, h, in_ch, p, q, &mut dx);
                        }
                    }
                }
                g = dx;
            }
            (
                LayerSpec::Conv {
                    in_ch,
                    out_ch,
                    in_side,
                    upsample: false,
                    ..
                },
                LayerCache::Conv { patches, deriv },
            ) => {
                if let Some(d) = deriv {
                    g.iter_mut().zip(&d).for_each(|(gi, di)| *gi *= *di);
                }
                let (out_side, off) = conv_window(arch, is_last, in_side);
                let rows = m * out_side * out_side;
                let k9 = 9 * in_ch;
                let mut dk = vec![T::zero(); out_ch * k9];
                accumulate_tn(&g, rows, out_ch, &patches, k9, &mut dk);
                accumulate_colsum(&g, out_ch, gb);
                for o in 0..out_ch {
                    for c in 0..in_ch {
                        for t in 0..9 {
                            gw[(o * in_ch + c) * 9 + t] += dk[o * k9 + t * in_ch + c];
                        }
                    }
                }
                let kernel = plain_kernel(w, in_ch, out_ch);
                let mut dp = vec![T::zero(); rows * k9];
                matmul_nn(&g, rows, out_ch, &kernel, k9, &mut dp);
                let mut dx = vec![T::zero(); m * in_side * in_side * in_ch];
                conv_col2im(&dp, m, in_side, in_ch, out_side, off, &mut dx);
                g = dx;
            }
            _ => unreachable!("cache kind follows layer kind"),
        }
    }
}

/// Adjoint of [`phase_kernels`] for one phase.
fn fold_phase_gradient<T: Real>(dk: &[T], cin: usize, cout: usize, p: usize, q: usize, gw: &mut [T]) {
    let k4 = 4 * cin;
    for o in 0..cout {
        for c in 0..cin {
            for ky in 0..3 {
                let a = tap_group(p, ky);
                for kx in 0..3 {
                    let e = tap_group(q, kx);
                    gw[((o * cin + c) * 3 + ky) * 3 + kx] += dk[o * k4 + (a * 2 + e) * cin + c];
                }
            }
        }
    }
}

fn check_inputs<T: Real>(model: &Model<T>, inputs: &[T], batch: usize) -> Result<()> {
    model.check_shapes()?;
    let dim = model.arch.input_dim();
    if inputs.len() != batch * dim {
        return Err(Error::ShapeMismatch(format!(
            "expected {batch} encoded inputs of length {dim}, got {} values",
            inputs.len()
        )));
    }
    Ok(())
}

/// Flattens encoded coordinates into a `batch × 4L` matrix.
pub fn stack_encoded<T: Real>(coords: &[EncodedCoord], levels: usize) -> Result<Vec<T>> {
    let dim = 4 * levels;
    let mut out = Vec::with_capacity(coords.len() * dim);
    for (i, c) in coords.iter().enumerate() {
        if c.values.len() != dim {
            return Err(Error::ShapeMismatch(format!(
                "coordinate {i} has {} features, architecture expects {dim}",
                c.values.len()
            )));
        }
        out.extend(c.values.iter().map(|v| T::of(*v)));
    }
    Ok(out)
}

/// Batched forward over a `batch × 4L` input matrix; returns
/// `batch × output_len` unclamped values.
pub fn forward_encoded<T: Real>(
    model: &Model<T>,
    inputs: &[T],
    batch: usize,
    counter: Option<&EvalCounter>,
) -> Result<Vec<T>> {
    check_inputs(model, inputs, batch)?;
    let specs = model.arch.layers();
    let dim = model.arch.input_dim();
    let out_len = model.arch.output_len();
    let mut out = Vec::with_capacity(batch * out_len);
    for start in (0..batch).step_by(CHUNK) {
        let m = CHUNK.min(batch - start);
        let x = inputs[start * dim..(start + m) * dim].to_vec();
        out.extend(forward_chunk(model, &specs, x, m, None));
    }
    if let Some(c) = counter {
        c.add(batch);
    }
    Ok(out)
}

/// Micro-image predictions for a batch of encoded coordinates, laid out
/// `B × A × A × 3` (row `v`, column `u`, channel).
pub fn forward<T: Real>(model: &Model<T>, coords: &[EncodedCoord]) -> Result<Vec<T>> {
    let inputs = stack_encoded(coords, model.arch.levels)?;
    forward_encoded(model, &inputs, coords.len(), None)
}

/// One RGB prediction of a pixel-wise network.
pub fn forward_pixelwise<T: Real>(model: &Model<T>, coord: &EncodedCoord) -> Result<[T; 3]> {
    if model.arch.kind != NetKind::Pixel {
        return Err(Error::InvalidArgument(
            "pixel-wise forward needs a pixel-wise architecture".into(),
        ));
    }
    let x = stack_encoded(std::slice::from_ref(coord), model.arch.levels)?;
    let out = forward_encoded(model, &x, 1, None)?;
    Ok([out[0], out[1], out[2]])
}

/// Loss and exact gradients of
/// `(1/B)·Σ_i D(pred_i − target_i) + α·Σ|θ|`, where `D` is the smoothed L2
/// norm (or the squared norm).
pub fn backward_encoded<T: Real>(
    model: &Model<T>,
    inputs: &[T],
    targets: &[T],
    batch: usize,
    alpha: f64,
    distortion: Distortion,
) -> Result<(f64, GradientSet<T>)> {
    check_inputs(model, inputs, batch)?;
    model.check_finite()?;
    if batch == 0 {
        return Err(Error::ShapeMismatch("empty batch".into()));
    }
    if !(alpha >= 0.0) {
        return Err(Error::InvalidArgument(format!("alpha {alpha} must be >= 0")));
    }
    let out_len = model.arch.output_len();
    if targets.len() != batch * out_len {
        return Err(Error::ShapeMismatch(format!(
            "expected {} target values, got {}",
            batch * out_len,
            targets.len()
        )));
    }
    let specs = model.arch.layers();
    let dim = model.arch.input_dim();
    let mut grads = GradientSet::zeros_like(model);
    let inv_b = T::of(1.0 / batch as f64);
    let eps2 = T::of(NORM_EPS * NORM_EPS);
    let two = T::of(2.0);
    let mut data_loss = 0.0f64;
    for start in (0..batch).step_by(CHUNK) {
        let m = CHUNK.min(batch - start);
        let x = inputs[start * dim..(start + m) * dim].to_vec();
        let mut caches = Vec::with_capacity(specs.len());
        let pred = forward_chunk(model, &specs, x, m, Some(&mut caches));
        let tgt = &targets[start * out_len..(start + m) * out_len];
        let mut dout = vec![T::zero(); m * out_len];
        for i in 0..m {
            let r = i * out_len..(i + 1) * out_len;
            let mut ss = T::zero();
            for (p, t) in pred[r.clone()].iter().zip(&tgt[r.clone()]) {
                let d = *p - *t;
                ss += d * d;
            }
            match distortion {
                Distortion::L2Norm => {
                    let norm = (ss + eps2).sqrt();
                    data_loss += norm.as_f64();
                    let scale = inv_b / norm;
                    for ((g, p), t) in dout[r.clone()].iter_mut().zip(&pred[r.clone()]).zip(&tgt[r]) {
                        *g = (*p - *t) * scale;
                    }
                }
                Distortion::SquaredL2 => {
                    data_loss += ss.as_f64();
                    let scale = two * inv_b;
                    for ((g, p), t) in dout[r.clone()].iter_mut().zip(&pred[r.clone()]).zip(&tgt[r]) {
                        *g = (*p - *t) * scale;
                    }
                }
            }
        }
        backward_chunk(model, &specs, caches, dout, m, &mut grads);
    }
    let alpha_t = T::of(alpha);
    if alpha > 0.0 {
        for (g, t) in grads.tensors.iter_mut().zip(&model.tensors) {
            for (gi, w) in g.iter_mut().zip(&t.data) {
                if *w > T::zero() {
                    *gi += alpha_t;
                } else if *w < T::zero() {
                    *gi -= alpha_t;
                }
            }
        }
    }
    let loss = data_loss / batch as f64 + alpha * model.l1_norm();
    Ok((loss, grads))
}

/// [`backward_encoded`] over encoded coordinates and `B × A × A × 3` targets.
pub fn backward<T: Real>(
    model: &Model<T>,
    coords: &[EncodedCoord],
    targets: &[T],
    alpha: f64,
    distortion: Distortion,
) -> Result<(f64, GradientSet<T>)> {
    let inputs = stack_encoded(coords, model.arch.levels)?;
    backward_encoded(model, &inputs, targets, coords.len(), alpha, distortion)
}
