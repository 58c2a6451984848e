use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::metrics::psnr;
use crate::error::{Error, Result};
use crate::lightfield::{clamp_unit, LensletLightField};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseKind {
    /// Additive Gaussian, `x + n` with `n ~ N(0, σ²)`.
    White,
    /// Salt and pepper: with probability `p` a pixel becomes black or white.
    Pulse,
    /// Multiplicative Gaussian, `x·(1 + n)` with `n ~ N(0, σ_s²)`.
    Speckle,
}

impl std::str::FromStr for NoiseKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "white" | "gaussian" => Ok(NoiseKind::White),
            "pulse" | "salt-pepper" | "impulse" => Ok(NoiseKind::Pulse),
            "speckle" => Ok(NoiseKind::Speckle),
            other => Err(Error::InvalidArgument(format!("unknown noise kind {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    pub sigma: f64,
    pub density: f64,
    pub sigma_s: f64,
    pub seed: u64,
}

/// White-noise level whose PSNR against the clean signal is about 24.7 dB.
pub const DEFAULT_WHITE_SIGMA: f64 = 0.0583;

impl NoiseSpec {
    pub fn white(sigma: f64, seed: u64) -> Self {
        Self {
            kind: NoiseKind::White,
            sigma,
            density: 0.0,
            sigma_s: 0.0,
            seed,
        }
    }

    pub fn pulse(density: f64, seed: u64) -> Self {
        Self {
            kind: NoiseKind::Pulse,
            sigma: 0.0,
            density,
            sigma_s: 0.0,
            seed,
        }
    }

    pub fn speckle(sigma_s: f64, seed: u64) -> Self {
        Self {
            kind: NoiseKind::Speckle,
            sigma: 0.0,
            density: 0.0,
            sigma_s,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma >= 0.0) || !(self.sigma_s >= 0.0) {
            return Err(Error::InvalidArgument("noise deviations must be >= 0".into()));
        }
        if !(0.0..=1.0).contains(&self.density) {
            return Err(Error::InvalidArgument(format!(
                "pulse density {} outside [0,1]",
                self.density
            )));
        }
        Ok(())
    }

    fn level(&self) -> f64 {
        match self.kind {
            NoiseKind::White => self.sigma,
            NoiseKind::Pulse => self.density,
            NoiseKind::Speckle => self.sigma_s,
        }
    }

    fn with_level(&self, level: f64) -> Self {
        let mut s = *self;
        match self.kind {
            NoiseKind::White => s.sigma = level,
            NoiseKind::Pulse => s.density = level,
            NoiseKind::Speckle => s.sigma_s = level,
        }
        s
    }
}

/// Noisy copy of `lf`, clamped to `[0,1]`, deterministic per seed.
pub fn add_noise(lf: &LensletLightField, spec: &NoiseSpec) -> Result<LensletLightField> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut data = lf.values().to_vec();
    match spec.kind {
        NoiseKind::White => {
            for v in &mut data {
                let n: f64 = StandardNormal.sample(&mut rng);
                *v = clamp_unit((*v as f64 + spec.sigma * n) as f32);
            }
        }
        NoiseKind::Speckle => {
            for v in &mut data {
                let n: f64 = StandardNormal.sample(&mut rng);
                *v = clamp_unit((*v as f64 * (1.0 + spec.sigma_s * n)) as f32);
            }
        }
        NoiseKind::Pulse => {
            // Both draws are taken for every pixel so the corrupted set grows
            // monotonically with the density for a fixed seed.
            for px in data.chunks_exact_mut(3) {
                let hit: f64 = rng.random();
                let salt: bool = rng.random();
                if hit < spec.density {
                    px.fill(if salt { 1.0 } else { 0.0 });
                }
            }
        }
    }
    LensletLightField::from_raw(lf.dims(), lf.angular_side(), data)
}

/// Bisects the noise level of `template` so the noisy copy of `lf` sits at
/// `target_psnr` dB. Returns the calibrated spec and its PSNR.
pub fn calibrate_noise(
    lf: &LensletLightField,
    template: &NoiseSpec,
    target_psnr: f64,
) -> Result<(NoiseSpec, f64)> {
    let (mut lo, mut hi) = match template.kind {
        NoiseKind::Pulse => (0.0, 1.0),
        _ => (0.0, 2.0),
    };
    let measure = |level: f64| -> Result<f64> {
        let noisy = add_noise(lf, &template.with_level(level))?;
        psnr(&noisy, lf, 1.0)
    };
    if measure(hi)? > target_psnr {
        return Err(Error::InvalidArgument(format!(
            "cannot reach {target_psnr} dB with {:?} noise",
            template.kind
        )));
    }
    for _ in 0..40 {
        let mid = 0.5 * (lo + hi);
        if measure(mid)? > target_psnr {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let spec = template.with_level(0.5 * (lo + hi));
    let achieved = measure(spec.level())?;
    Ok((spec, achieved))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lightfield::SpatialDims;

    fn mid_range() -> LensletLightField {
        let dims = SpatialDims::new(20, 20);
        let n = dims.count() * 25 * 3;
        let data = (0..n).map(|i| 0.35 + 0.3 * ((i % 17) as f32 / 16.0)).collect();
        LensletLightField::from_raw(dims, 5, data).unwrap()
    }

    #[test]
    fn zero_noise_is_identity() {
        let lf = mid_range();
        for spec in [
            NoiseSpec::white(0.0, 1),
            NoiseSpec::pulse(0.0, 1),
            NoiseSpec::speckle(0.0, 1),
        ] {
            assert_eq!(add_noise(&lf, &spec).unwrap(), lf);
        }
    }

    #[test]
    fn seed_determinism() {
        let lf = mid_range();
        let spec = NoiseSpec::white(0.05, 42);
        assert_eq!(add_noise(&lf, &spec).unwrap(), add_noise(&lf, &spec).unwrap());
        let other = NoiseSpec::white(0.05, 43);
        assert_ne!(add_noise(&lf, &spec).unwrap(), add_noise(&lf, &other).unwrap());
    }

    #[test]
    fn white_noise_psnr_tracks_sigma() {
        let lf = mid_range();
        for sigma in [0.02, 0.04, DEFAULT_WHITE_SIGMA] {
            let noisy = add_noise(&lf, &NoiseSpec::white(sigma, 7)).unwrap();
            let p = psnr(&noisy, &lf, 1.0).unwrap();
            let expected = -20.0 * sigma.log10();
            assert!((p - expected).abs() < 0.3, "sigma {sigma}: {p} vs {expected}");
        }
        let noisy = add_noise(&lf, &NoiseSpec::white(DEFAULT_WHITE_SIGMA, 7)).unwrap();
        let p = psnr(&noisy, &lf, 1.0).unwrap();
        assert!((p - 24.7).abs() < 0.3, "{p}");
    }

    #[test]
    fn pulse_pixels_are_black_or_white() {
        let lf = mid_range();
        let noisy = add_noise(&lf, &NoiseSpec::pulse(0.3, 3)).unwrap();
        let mut hits = 0;
        for (a, b) in noisy.values().chunks(3).zip(lf.values().chunks(3)) {
            if a != b {
                hits += 1;
                assert!(a == [0.0; 3] || a == [1.0; 3]);
            }
        }
        let frac = hits as f64 / lf.pixel_count() as f64;
        assert!((frac - 0.3).abs() < 0.03, "{frac}");
    }

    #[test]
    fn calibration_hits_target() {
        let lf = mid_range();
        for template in [NoiseSpec::pulse(0.0, 5), NoiseSpec::speckle(0.0, 5)] {
            let (spec, p) = calibrate_noise(&lf, &template, 24.7).unwrap();
            assert!((p - 24.7).abs() < 0.05, "{spec:?}: {p}");
        }
    }
}
