//! Independent scalar reference of the network and its loss, shared by the
//! gradient-oracle tests and the acceptance suite.

#![allow(dead_code)]

use minl::lightfield::{normalize_coord, SpatialDims};
use minl::net::{backward_encoded, positional_encode, ArchConfig, LayerSpec, Model, NetKind, NORM_EPS};
use minl::train::Distortion;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Feature maps are `[channel][y][x]`.
pub type Map = Vec<Vec<Vec<f64>>>;

pub fn conv_same(x: &Map, w: &[f64], b: &[f64], out_ch: usize) -> Map {
    let cin = x.len();
    let n = x[0].len();
    let mut y = vec![vec![vec![0.0; n]; n]; out_ch];
    for o in 0..out_ch {
        for r in 0..n {
            for c in 0..n {
                let mut acc = b[o];
                for i in 0..cin {
                    for ky in 0..3 {
                        for kx in 0..3 {
                            let (rr, cc) = (r as isize + ky as isize - 1, c as isize + kx as isize - 1);
                            if rr >= 0 && cc >= 0 && (rr as usize) < n && (cc as usize) < n {
                                acc += w[((o * cin + i) * 3 + ky) * 3 + kx] * x[i][rr as usize][cc as usize];
                            }
                        }
                    }
                }
                y[o][r][c] = acc;
            }
        }
    }
    y
}

pub fn upsample(x: &Map) -> Map {
    x.iter()
        .map(|plane| {
            let n = plane.len();
            (0..2 * n).map(|r| (0..2 * n).map(|c| plane[r / 2][c / 2]).collect()).collect()
        })
        .collect()
}

/// One item through the network: explicit upsampling, zero-padded
/// convolutions on the full map, then the centre crop.
pub fn reference_forward(model: &Model<f64>, input: &[f64]) -> Vec<f64> {
    let arch = &model.arch;
    let omega = arch.omega as f64;
    let layers = arch.layers();
    let mut vec_act: Vec<f64> = input.to_vec();
    let mut map: Option<Map> = None;
    for (li, spec) in layers.iter().enumerate() {
        let w = &model.tensors[2 * li].data;
        let b = &model.tensors[2 * li + 1].data;
        match *spec {
            LayerSpec::Dense { fan_in, fan_out, sine } => {
                let mut z = vec![0.0; fan_out];
                for j in 0..fan_out {
                    z[j] = b[j] + (0..fan_in).map(|i| w[j * fan_in + i] * vec_act[i]).sum::<f64>();
                    if sine {
                        z[j] = (omega * z[j]).sin();
                    }
                }
                vec_act = z;
            }
            LayerSpec::Conv { out_ch, upsample: up, sine, .. } => {
                let x = map.take().unwrap_or_else(|| {
                    let ch = vec_act.len() / 9;
                    (0..ch)
                        .map(|c| (0..3).map(|r| (0..3).map(|q| vec_act[c * 9 + r * 3 + q]).collect()).collect())
                        .collect()
                });
                let x = if up { upsample(&x) } else { x };
                let mut y = conv_same(&x, w, b, out_ch);
                if sine {
                    for plane in &mut y {
                        for row in plane {
                            for v in row {
                                *v = (omega * *v).sin();
                            }
                        }
                    }
                }
                map = Some(y);
            }
        }
    }
    match arch.kind {
        NetKind::Pixel => vec_act,
        NetKind::MicroImage => {
            let y = map.unwrap();
            let (a, off) = (arch.output_side, arch.crop_offset());
            let mut out = Vec::with_capacity(a * a * 3);
            for v in 0..a {
                for u in 0..a {
                    for c in 0..3 {
                        out.push(y[c][v + off][u + off]);
                    }
                }
            }
            out
        }
    }
}

pub fn reference_loss(model: &Model<f64>, inputs: &[Vec<f64>], targets: &[Vec<f64>], alpha: f64) -> f64 {
    let b = inputs.len() as f64;
    let data: f64 = inputs
        .iter()
        .zip(targets)
        .map(|(x, t)| {
            let p = reference_forward(model, x);
            let ss: f64 = p.iter().zip(t).map(|(a, b)| (a - b) * (a - b)).sum();
            (ss + NORM_EPS * NORM_EPS).sqrt()
        })
        .sum();
    let l1: f64 = model.tensors.iter().flat_map(|t| &t.data).map(|v| v.abs()).sum();
    data / b + alpha * l1
}

pub fn random_arch(rng: &mut ChaCha8Rng) -> ArchConfig {
    loop {
        let levels = rng.random_range(1..=3);
        let width = rng.random_range(2..=6);
        let arch = if rng.random_range(0..5) == 0 {
            ArchConfig::pixel(levels, width)
        } else {
            let c = rng.random_range(1..=3);
            let side = rng.random_range(1..=7);
            let mut a = ArchConfig::micro_image(levels, width, c, side);
            a.conv_channels.1 = rng.random_range(1..=3);
            a
        };
        if arch.param_count() <= 2000 {
            return arch;
        }
    }
}

pub fn random_model(arch: &ArchConfig, rng: &mut ChaCha8Rng) -> Model<f64> {
    let mut m = Model::<f64>::zeros(arch.clone()).unwrap();
    for t in &mut m.tensors {
        for v in &mut t.data {
            // Keep ω·z moderate so sin does not alias the difference step.
            *v = rng.random_range(-0.08..0.08);
        }
    }
    m
}

pub fn random_batch(arch: &ArchConfig, n: usize, rng: &mut ChaCha8Rng) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let dims = SpatialDims::new(7, 5);
    let mut xs = Vec::new();
    let mut ts = Vec::new();
    for _ in 0..n {
        let (s, t) = (rng.random_range(0..7), rng.random_range(0..5));
        xs.push(positional_encode(normalize_coord(s, t, dims).unwrap(), arch.levels).values);
        ts.push((0..arch.output_len()).map(|_| rng.random_range(0.0..1.0)).collect());
    }
    (xs, ts)
}
/// Outcome of comparing analytic gradients with central differences.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FdReport {
    pub models: usize,
    pub checked: usize,
    pub failures: usize,
    /// Largest relative error among entries whose absolute error is above 1e-6.
    pub worst_rel: f64,
    pub max_params: usize,
}

/// Checks every parameter of `models` random tiny networks (L1 weight
/// `alpha`) against 64-bit central differences with step `1e-6`.
pub fn fd_check(models: usize, seed: u64, alpha: f64) -> FdReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = 1e-6;
    let mut rep = FdReport {
        models,
        checked: 0,
        failures: 0,
        worst_rel: 0.0,
        max_params: 0,
    };
    for _ in 0..models {
        let arch = random_arch(&mut rng);
        rep.max_params = rep.max_params.max(arch.param_count());
        let model = random_model(&arch, &mut rng);
        let (xs, ts) = random_batch(&arch, 5, &mut rng);
        let (loss, grads) =
            backward_encoded(&model, &xs.concat(), &ts.concat(), xs.len(), alpha, Distortion::L2Norm).unwrap();
        let ref_loss = reference_loss(&model, &xs, &ts, alpha);
        if (loss - ref_loss).abs() >= 1e-10 * ref_loss.max(1.0) {
            rep.failures += 1;
        }
        for ti in 0..model.tensors.len() {
            for j in 0..model.tensors[ti].data.len() {
                let w = model.tensors[ti].data[j];
                // The L1 kink at zero has no derivative.
                if w.abs() < 10.0 * h {
                    continue;
                }
                let mut plus = model.clone();
                plus.tensors[ti].data[j] = w + h;
                let mut minus = model.clone();
                minus.tensors[ti].data[j] = w - h;
                let fd = (reference_loss(&plus, &xs, &ts, alpha) - reference_loss(&minus, &xs, &ts, alpha)) / (2.0 * h);
                let an = grads.tensors[ti][j];
                let diff = (an - fd).abs();
                let rel = diff / an.abs().max(fd.abs());
                if diff >= 1e-6 {
                    rep.worst_rel = rep.worst_rel.max(rel);
                }
                if !(diff < 1e-6 || rel < 1e-4) {
                    rep.failures += 1;
                }
                rep.checked += 1;
            }
        }
    }
    rep
}
