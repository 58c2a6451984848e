use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::lightfield::{FloatImage, LensletLightField, SpatialDims};

/// Quality and rate figures for one reconstruction.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    /// `f64::INFINITY` for an exact reconstruction.
    pub psnr_db: f64,
    pub ssim: f64,
    pub bpp: Option<f64>,
    pub decode_seconds: Option<f64>,
    pub dims: SpatialDims,
    pub angular_side: usize,
}

impl MetricsReport {
    pub fn new(psnr_db: f64, ssim: f64, lf: &LensletLightField) -> Self {
        Self {
            psnr_db,
            ssim,
            bpp: None,
            decode_seconds: None,
            dims: lf.dims(),
            angular_side: lf.angular_side(),
        }
    }

    /// JSON object with keys `psnr_db`, `ssim`, `bpp`, `decode_seconds`,
    /// `dims`. An infinite PSNR is written as the string `"inf"`.
    pub fn to_json(&self) -> Value {
        json!({
            "psnr_db": psnr_json(self.psnr_db),
            "ssim": self.ssim,
            "bpp": self.bpp,
            "decode_seconds": self.decode_seconds,
            "dims": [self.dims.sx, self.dims.sy, self.angular_side],
        })
    }
}

pub fn psnr_json(v: f64) -> Value {
    if v.is_infinite() {
        Value::String("inf".into())
    } else {
        json!(v)
    }
}

fn check_same_shape(a: &LensletLightField, b: &LensletLightField) -> Result<()> {
    if a.dims() != b.dims() || a.angular_side() != b.angular_side() {
        return Err(Error::ShapeMismatch(format!(
            "light fields differ in shape: {} A={} vs {} A={}",
            a.dims(),
            a.angular_side(),
            b.dims(),
            b.angular_side()
        )));
    }
    Ok(())
}

pub fn mse(a: &LensletLightField, b: &LensletLightField) -> Result<f64> {
    check_same_shape(a, b)?;
    let sum: f64 = a
        .values()
        .iter()
        .zip(b.values())
        .map(|(x, y)| {
            let d = *x as f64 - *y as f64;
            d * d
        })
        .sum();
    Ok(sum / a.values().len() as f64)
}

/// `10·log10(peak² / MSE)` over every value of every view; infinite when
/// the inputs are identical.
pub fn psnr(a: &LensletLightField, b: &LensletLightField, peak: f64) -> Result<f64> {
    if !(peak > 0.0) {
        return Err(Error::InvalidArgument(format!("peak {peak} must be > 0")));
    }
    let e = mse(a, b)?;
    Ok(psnr_from_mse(e, peak))
}

pub fn psnr_from_mse(mse: f64, peak: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (peak * peak / mse).log10()
    }
}

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

fn gaussian_window() -> [f64; SSIM_WINDOW] {
    let mut w = [0.0; SSIM_WINDOW];
    let c = (SSIM_WINDOW / 2) as f64;
    for (i, v) in w.iter_mut().enumerate() {
        let x = i as f64 - c;
        *v = (-x * x / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= s);
    w
}

fn ssim_term(mu_a: f64, mu_b: f64, var_a: f64, var_b: f64, cov: f64, c1: f64, c2: f64) -> f64 {
    ((2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2))
        / ((mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2))
}

/// Mean SSIM of one channel of two equal-size images, peak 1. Images at
/// least 11 pixels on each side use the `11 × 11` Gaussian window over the
/// valid region; smaller ones use whole-image statistics.
pub fn ssim_channel(a: &FloatImage, b: &FloatImage, channel: usize) -> f64 {
    let (w, h) = (a.width, a.height);
    let c1 = SSIM_K1 * SSIM_K1;
    let c2 = SSIM_K2 * SSIM_K2;
    if w < SSIM_WINDOW || h < SSIM_WINDOW {
        let n = (w * h) as f64;
        let (mut sa, mut sb) = (0.0, 0.0);
        for y in 0..h {
            for x in 0..w {
                sa += a.get(x, y, channel) as f64;
                sb += b.get(x, y, channel) as f64;
            }
        }
        let (ma, mb) = (sa / n, sb / n);
        let (mut va, mut vb, mut cab) = (0.0, 0.0, 0.0);
        for y in 0..h {
            for x in 0..w {
                let da = a.get(x, y, channel) as f64 - ma;
                let db = b.get(x, y, channel) as f64 - mb;
                va += da * da;
                vb += db * db;
                cab += da * db;
            }
        }
        return ssim_term(ma, mb, va / n, vb / n, cab / n, c1, c2);
    }

    let win = gaussian_window();
    // Separable filtering of a, b, a², b², ab: horizontal pass then vertical.
    let ow = w - SSIM_WINDOW + 1;
    let oh = h - SSIM_WINDOW + 1;
    let mut horiz = vec![[0.0f64; 5]; ow * h];
    for y in 0..h {
        for x in 0..ow {
            let mut acc = [0.0f64; 5];
            for (k, wk) in win.iter().enumerate() {
                let pa = a.get(x + k, y, channel) as f64;
                let pb = b.get(x + k, y, channel) as f64;
                acc[0] += wk * pa;
                acc[1] += wk * pb;
                acc[2] += wk * pa * pa;
                acc[3] += wk * pb * pb;
                acc[4] += wk * pa * pb;
            }
            horiz[y * ow + x] = acc;
        }
    }
    let mut total = 0.0;
    for y in 0..oh {
        for x in 0..ow {
            let mut acc = [0.0f64; 5];
            for (k, wk) in win.iter().enumerate() {
                let h5 = &horiz[(y + k) * ow + x];
                for i in 0..5 {
                    acc[i] += wk * h5[i];
                }
            }
            let (ma, mb) = (acc[0], acc[1]);
            let va = acc[2] - ma * ma;
            let vb = acc[3] - mb * mb;
            let cab = acc[4] - ma * mb;
            total += ssim_term(ma, mb, va, vb, cab, c1, c2);
        }
    }
    total / (ow * oh) as f64
}

/// SSIM averaged over the three channels of every sub-aperture view.
pub fn ssim(a: &LensletLightField, b: &LensletLightField) -> Result<f64> {
    check_same_shape(a, b)?;
    if a.values() == b.values() {
        return Ok(1.0);
    }
    let side = a.angular_side();
    let mut total = 0.0;
    for v in 0..side {
        for u in 0..side {
            let sa = a.extract_sai(u, v)?;
            let sb = b.extract_sai(u, v)?;
            for c in 0..3 {
                total += ssim_channel(&sa, &sb, c);
            }
        }
    }
    Ok((total / (3 * side * side) as f64).clamp(-1.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lf(values: Vec<f32>, dims: SpatialDims, side: usize) -> LensletLightField {
        LensletLightField::from_raw(dims, side, values).unwrap()
    }

    #[test]
    fn psnr_examples() {
        let dims = SpatialDims::new(3, 2);
        let n = dims.count() * 4 * 3;
        let a = lf(vec![0.3; n], dims, 2);
        let b = lf(vec![0.4; n], dims, 2);
        assert!(psnr(&a, &a, 1.0).unwrap().is_infinite());
        let p = psnr(&a, &b, 1.0).unwrap();
        assert!((p - 20.0).abs() < 1e-4, "{p}");
        assert_eq!(p, psnr(&b, &a, 1.0).unwrap());
        let other = lf(vec![0.3; n / 2], SpatialDims::new(3, 1), 2);
        assert!(psnr(&a, &other, 1.0).is_err());
    }

    #[test]
    fn ssim_of_constant_pair_is_luminance_term() {
        let c1 = 1e-4;
        let expected = (2.0 * 0.5 * 0.6 + c1) / (0.25 + 0.36 + c1);
        for dims in [SpatialDims::new(4, 4), SpatialDims::new(16, 12)] {
            let n = dims.count() * 3;
            let a = lf(vec![0.5; n], dims, 1);
            let b = lf(vec![0.6; n], dims, 1);
            let s = ssim(&a, &b).unwrap();
            // Inputs are f32, so 0.6 is off by one part in 10^8.
            assert!((s - expected).abs() < 1e-7, "{s} vs {expected}");
        }
        assert!((expected - 0.983609).abs() < 1e-6);
    }

    #[test]
    fn window_weights_sum_to_one() {
        let s: f64 = gaussian_window().iter().sum();
        assert!((s - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ssim_bounds_and_identity() {
        let dims = SpatialDims::new(13, 12);
        let n = dims.count() * 4 * 3;
        let a: Vec<f32> = (0..n).map(|i| ((i * 7919) % 101) as f32 / 100.0).collect();
        let b: Vec<f32> = (0..n).map(|i| ((i * 104729) % 97) as f32 / 96.0).collect();
        let a = lf(a, dims, 2);
        let b = lf(b, dims, 2);
        assert_eq!(ssim(&a, &a).unwrap(), 1.0);
        let s = ssim(&a, &b).unwrap();
        assert!((-1.0..=1.0).contains(&s));
        assert!(s < 0.5);
    }

    #[test]
    fn report_json_schema() {
        let dims = SpatialDims::new(1, 1);
        let a = lf(vec![0.0; 3], dims, 1);
        let mut r = MetricsReport::new(f64::INFINITY, 1.0, &a);
        r.bpp = Some(8.0);
        let j = r.to_json();
        assert_eq!(j["psnr_db"], "inf");
        assert_eq!(j["ssim"], 1.0);
        assert_eq!(j["bpp"], 8.0);
        assert!(j.get("decode_seconds").is_some());
        assert_eq!(j["dims"], json!([1, 1, 1]));
    }
}
