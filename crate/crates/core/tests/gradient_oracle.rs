//! Engine forward pass and gradients against the scalar reference.

mod support;

use minl::net::{backward_encoded, forward_encoded, ArchConfig, Model};
use minl::train::Distortion;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use support::*;

#[test]
fn engine_forward_matches_reference() {
    let mut rng = ChaCha8Rng::seed_from_u64(100);
    for _ in 0..30 {
        let arch = random_arch(&mut rng);
        let model = random_model(&arch, &mut rng);
        let (xs, _) = random_batch(&arch, 37, &mut rng);
        let flat: Vec<f64> = xs.concat();
        let out = forward_encoded(&model, &flat, xs.len(), None).unwrap();
        let out32 = forward_encoded(&model.cast::<f32>(), &flat.iter().map(|v| *v as f32).collect::<Vec<_>>(), xs.len(), None).unwrap();
        let len = arch.output_len();
        for (i, x) in xs.iter().enumerate() {
            let r = reference_forward(&model, x);
            for j in 0..len {
                let e = out[i * len + j];
                assert!((e - r[j]).abs() < 1e-12, "{arch:?}: {e} vs {}", r[j]);
                assert!((out32[i * len + j] as f64 - r[j]).abs() < 1e-4);
            }
        }
    }
}

#[test]
fn analytic_gradients_match_central_differences() {
    let rep = fd_check(24, 7, 0.01);
    assert_eq!(rep.failures, 0, "{rep:?}");
    assert!(rep.checked > 1000);
    assert!(rep.max_params <= 2000);
}

#[test]
fn squared_distortion_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let arch = ArchConfig::micro_image(2, 4, 2, 5);
    let model = random_model(&arch, &mut rng);
    let (xs, ts) = random_batch(&arch, 3, &mut rng);
    let (_, grads) = backward_encoded(&model, &xs.concat(), &ts.concat(), 3, 0.0, Distortion::SquaredL2).unwrap();
    let f = |m: &Model<f64>| -> f64 {
        xs.iter()
            .zip(&ts)
            .map(|(x, t)| reference_forward(m, x).iter().zip(t).map(|(a, b)| (a - b) * (a - b)).sum::<f64>())
            .sum::<f64>()
            / 3.0
    };
    let h = 1e-6;
    for ti in 0..model.tensors.len() {
        for j in 0..model.tensors[ti].data.len() {
            let mut p = model.clone();
            p.tensors[ti].data[j] += h;
            let mut q = model.clone();
            q.tensors[ti].data[j] -= h;
            let fd = (f(&p) - f(&q)) / (2.0 * h);
            let an = grads.tensors[ti][j];
            assert!((an - fd).abs() < 1e-6 || (an - fd).abs() / an.abs().max(fd.abs()) < 1e-4);
        }
    }
}
