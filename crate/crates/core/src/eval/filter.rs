use crate::error::{Error, Result};
use crate::lightfield::{FloatImage, LensletLightField};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FilterKind {
    Average,
    Median,
    Gaussian,
}

impl std::str::FromStr for FilterKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "average" | "mean" | "box" => Ok(FilterKind::Average),
            "median" => Ok(FilterKind::Median),
            "gaussian" => Ok(FilterKind::Gaussian),
            other => Err(Error::InvalidArgument(format!("unknown filter {other:?}"))),
        }
    }
}

pub const GAUSSIAN_SIGMA: f64 = 0.8;

/// Normalised `3 × 3` Gaussian kernel, row-major.
pub fn gaussian_kernel_3x3(sigma: f64) -> [f64; 9] {
    let mut k = [0.0; 9];
    for dy in 0..3 {
        for dx in 0..3 {
            let (x, y) = (dx as f64 - 1.0, dy as f64 - 1.0);
            k[dy * 3 + dx] = (-(x * x + y * y) / (2.0 * sigma * sigma)).exp();
        }
    }
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    k
}

/// `3 × 3` filter of one image with replicated borders.
pub fn filter_image(img: &FloatImage, kind: FilterKind) -> FloatImage {
    let (w, h) = (img.width, img.height);
    let gauss = gaussian_kernel_3x3(GAUSSIAN_SIGMA);
    let mut out = FloatImage::new(w, h);
    let mut window = [0.0f32; 9];
    for y in 0..h {
        for x in 0..w {
            for c in 0..3 {
                for dy in 0..3 {
                    let yy = (y + dy).saturating_sub(1).min(h - 1);
                    for dx in 0..3 {
                        let xx = (x + dx).saturating_sub(1).min(w - 1);
                        window[dy * 3 + dx] = img.get(xx, yy, c);
                    }
                }
                let v = match kind {
                    FilterKind::Average => {
                        (window.iter().map(|v| *v as f64).sum::<f64>() / 9.0) as f32
                    }
                    FilterKind::Gaussian => window
                        .iter()
                        .zip(&gauss)
                        .map(|(v, k)| *v as f64 * k)
                        .sum::<f64>() as f32,
                    FilterKind::Median => {
                        let mut sorted = window;
                        sorted.sort_unstable_by(f32::total_cmp);
                        sorted[4]
                    }
                };
                out.set(x, y, c, v);
            }
        }
    }
    out
}

/// Filters every sub-aperture view independently and reassembles the lenslet
/// layout, so no filter window mixes pixels of different views.
pub fn classical_filter(lf: &LensletLightField, kind: FilterKind) -> Result<LensletLightField> {
    let side = lf.angular_side();
    let mut out = lf.clone();
    for v in 0..side {
        for u in 0..side {
            let sai = lf.extract_sai(u, v)?;
            out.insert_sai(u, v, &filter_image(&sai, kind))?;
        }
    }
    Ok(out)
}
