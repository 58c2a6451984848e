//! Lenslet light fields stored micro-image major.
//!
//! A lenslet capture is a mosaic of `S_x × S_y` micro-images (MIs), each
//! `A × A` RGB pixels. Pixel `(u, v)` of MI `(s, t)` sits at mosaic column
//! `s·A + u`, row `t·A + v`. A sub-aperture image (SAI) gathers the same
//! intra-MI pixel `(u, v)` from every MI.

use std::path::Path;

use crate::error::{Error, Result};

/// Spatial grid size in micro-images.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SpatialDims {
    pub sx: usize,
    pub sy: usize,
}

impl SpatialDims {
    pub fn new(sx: usize, sy: usize) -> Self {
        Self { sx, sy }
    }

    pub fn count(&self) -> usize {
        self.sx * self.sy
    }
}

impl std::fmt::Display for SpatialDims {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}", self.sx, self.sy)
    }
}

/// One `A × A × 3` micro-image, row-major over `(v, u)` with interleaved RGB.
#[derive(Debug, Clone, PartialEq)]
pub struct MicroImage {
    side: usize,
    pixels: Vec<f32>,
}

impl MicroImage {
    pub fn new(side: usize, pixels: Vec<f32>) -> Result<Self> {
        if side == 0 {
            return Err(Error::Dimension("micro-image side must be at least 1".into()));
        }
        if pixels.len() != side * side * 3 {
            return Err(Error::ShapeMismatch(format!(
                "micro-image of side {side} needs {} values, got {}",
                side * side * 3,
                pixels.len()
            )));
        }
        check_unit_range(&pixels)?;
        Ok(Self { side, pixels })
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn values(&self) -> &[f32] {
        &self.pixels
    }

    /// RGB at column `u`, row `v`.
    pub fn pixel(&self, u: usize, v: usize) -> [f32; 3] {
        let i = (v * self.side + u) * 3;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }
}

/// Float RGB image, row-major with interleaved channels.
#[derive(Debug, Clone, PartialEq)]
pub struct FloatImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f32>,
}

impl FloatImage {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0.0; width * height * 3],
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> f32 {
        self.data[(y * self.width + x) * 3 + c]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, c: usize, value: f32) {
        self.data[(y * self.width + x) * 3 + c] = value;
    }

    pub fn pixel(&self, x: usize, y: usize) -> [f32; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }
}

/// A 2-D coordinate with both components in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalizedCoord {
    pub d: [f64; 2],
}

impl NormalizedCoord {
    pub fn new(x: f64, y: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&x) || !(0.0..=1.0).contains(&y) {
            return Err(Error::InvalidArgument(format!(
                "normalized coordinate ({x}, {y}) outside [0,1]"
            )));
        }
        Ok(Self { d: [x, y] })
    }
}

/// Maps grid index `(s, t)` onto `[0,1]²` so that the corners land exactly on
/// 0 and 1. A degenerate axis of length 1 maps to 0.
pub fn normalize_coord(s: usize, t: usize, dims: SpatialDims) -> Result<NormalizedCoord> {
    if s >= dims.sx || t >= dims.sy {
        return Err(Error::IndexOutOfRange(format!(
            "({s}, {t}) outside grid {dims}"
        )));
    }
    Ok(NormalizedCoord {
        d: [axis_fraction(s, dims.sx), axis_fraction(t, dims.sy)],
    })
}

fn axis_fraction(i: usize, n: usize) -> f64 {
    if n <= 1 {
        0.0
    } else {
        i as f64 / (n - 1) as f64
    }
}

/// The lenslet light field: `S_x·S_y` micro-images of `A × A × 3` values in `[0,1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LensletLightField {
    dims: SpatialDims,
    side: usize,
    data: Vec<f32>,
}

impl LensletLightField {
    /// Takes ownership of MI-major data: MI `(s, t)` occupies the slice starting
    /// at `(t·S_x + s)·A²·3`.
    pub fn from_raw(dims: SpatialDims, side: usize, data: Vec<f32>) -> Result<Self> {
        if dims.sx == 0 || dims.sy == 0 || side == 0 {
            return Err(Error::Dimension(format!(
                "light field needs S_x, S_y, A >= 1 (got {dims}, A={side})"
            )));
        }
        let expected = dims.count() * side * side * 3;
        if data.len() != expected {
            return Err(Error::ShapeMismatch(format!(
                "light field {dims} with A={side} needs {expected} values, got {}",
                data.len()
            )));
        }
        check_unit_range(&data)?;
        Ok(Self { dims, side, data })
    }

    /// Same as [`from_raw`](Self::from_raw) but clamps every value into `[0,1]`.
    pub fn from_raw_clamped(dims: SpatialDims, side: usize, mut data: Vec<f32>) -> Result<Self> {
        for v in &mut data {
            *v = clamp_unit(*v);
        }
        Self::from_raw(dims, side, data)
    }

    pub fn constant(dims: SpatialDims, side: usize, value: f32) -> Result<Self> {
        Self::from_raw(dims, side, vec![value; dims.count() * side * side * 3])
    }

    pub fn dims(&self) -> SpatialDims {
        self.dims
    }

    pub fn angular_side(&self) -> usize {
        self.side
    }

    pub fn values(&self) -> &[f32] {
        &self.data
    }

    pub fn mi_len(&self) -> usize {
        self.side * self.side * 3
    }

    /// Pixel count of the represented light field, `S_x·S_y·A²`.
    pub fn pixel_count(&self) -> usize {
        self.dims.count() * self.side * self.side
    }

    fn mi_offset(&self, s: usize, t: usize) -> usize {
        (t * self.dims.sx + s) * self.mi_len()
    }

    fn check_mi_index(&self, s: usize, t: usize) -> Result<()> {
        if s >= self.dims.sx || t >= self.dims.sy {
            return Err(Error::IndexOutOfRange(format!(
                "micro-image ({s}, {t}) outside grid {}",
                self.dims
            )));
        }
        Ok(())
    }

    /// Borrowed view of MI `(s, t)`; callers must have validated the index.
    pub(crate) fn mi_slice(&self, s: usize, t: usize) -> &[f32] {
        let o = self.mi_offset(s, t);
        &self.data[o..o + self.mi_len()]
    }

    pub fn mi_at(&self, s: usize, t: usize) -> Result<MicroImage> {
        self.check_mi_index(s, t)?;
        Ok(MicroImage {
            side: self.side,
            pixels: self.mi_slice(s, t).to_vec(),
        })
    }

    pub fn set_mi(&mut self, s: usize, t: usize, mi: &MicroImage) -> Result<()> {
        self.check_mi_index(s, t)?;
        if mi.side != self.side {
            return Err(Error::ShapeMismatch(format!(
                "micro-image side {} does not match light field side {}",
                mi.side, self.side
            )));
        }
        let o = self.mi_offset(s, t);
        let n = self.mi_len();
        self.data[o..o + n].copy_from_slice(&mi.pixels);
        Ok(())
    }

    /// Sub-aperture image for view `(u, v)`: `S_x × S_y` pixels where pixel
    /// `(s, t)` is pixel `(u, v)` of MI `(s, t)`.
    pub fn extract_sai(&self, u: usize, v: usize) -> Result<FloatImage> {
        if u >= self.side || v >= self.side {
            return Err(Error::IndexOutOfRange(format!(
                "view ({u}, {v}) outside angular side {}",
                self.side
            )));
        }
        let mut img = FloatImage::new(self.dims.sx, self.dims.sy);
        let intra = (v * self.side + u) * 3;
        for t in 0..self.dims.sy {
            for s in 0..self.dims.sx {
                let src = self.mi_offset(s, t) + intra;
                let dst = (t * self.dims.sx + s) * 3;
                img.data[dst..dst + 3].copy_from_slice(&self.data[src..src + 3]);
            }
        }
        Ok(img)
    }

    /// Writes `img` back as view `(u, v)`. Values are clamped into `[0,1]`.
    pub fn insert_sai(&mut self, u: usize, v: usize, img: &FloatImage) -> Result<()> {
        if u >= self.side || v >= self.side {
            return Err(Error::IndexOutOfRange(format!(
                "view ({u}, {v}) outside angular side {}",
                self.side
            )));
        }
        if img.width != self.dims.sx || img.height != self.dims.sy {
            return Err(Error::ShapeMismatch(format!(
                "view image {}x{} does not match spatial grid {}",
                img.width, img.height, self.dims
            )));
        }
        let intra = (v * self.side + u) * 3;
        for t in 0..self.dims.sy {
            for s in 0..self.dims.sx {
                let dst = self.mi_offset(s, t) + intra;
                let src = (t * self.dims.sx + s) * 3;
                for c in 0..3 {
                    self.data[dst + c] = clamp_unit(img.data[src + c]);
                }
            }
        }
        Ok(())
    }

    /// Keeps the centered `new_side × new_side` window of every MI. The offset
    /// is `floor((A - new_side) / 2)` on both axes.
    pub fn crop_central_views(&self, new_side: usize) -> Result<Self> {
        if new_side == 0 {
            return Err(Error::InvalidArgument("crop side must be at least 1".into()));
        }
        if new_side > self.side {
            return Err(Error::InvalidArgument(format!(
                "crop side {new_side} exceeds angular side {}",
                self.side
            )));
        }
        let offset = (self.side - new_side) / 2;
        let mut data = Vec::with_capacity(self.dims.count() * new_side * new_side * 3);
        for t in 0..self.dims.sy {
            for s in 0..self.dims.sx {
                let mi = self.mi_slice(s, t);
                for v in offset..offset + new_side {
                    let row = (v * self.side + offset) * 3;
                    data.extend_from_slice(&mi[row..row + new_side * 3]);
                }
            }
        }
        Ok(Self {
            dims: self.dims,
            side: new_side,
            data,
        })
    }

    /// Keeps the MIs in the `width × height` window starting at MI `(s0, t0)`.
    pub fn crop_spatial(&self, s0: usize, t0: usize, width: usize, height: usize) -> Result<Self> {
        if width == 0 || height == 0 || s0 + width > self.dims.sx || t0 + height > self.dims.sy {
            return Err(Error::InvalidArgument(format!(
                "spatial window {width}x{height} at ({s0}, {t0}) does not fit grid {}",
                self.dims
            )));
        }
        let mut data = Vec::with_capacity(width * height * self.mi_len());
        for t in t0..t0 + height {
            for s in s0..s0 + width {
                data.extend_from_slice(self.mi_slice(s, t));
            }
        }
        Ok(Self {
            dims: SpatialDims::new(width, height),
            side: self.side,
            data,
        })
    }

    /// Lenslet mosaic as 8-bit RGB, `(S_x·A) × (S_y·A)`, rounding half up.
    pub fn to_mosaic_bytes(&self) -> (u32, u32, Vec<u8>) {
        let a = self.side;
        let width = self.dims.sx * a;
        let height = self.dims.sy * a;
        let mut bytes = vec![0u8; width * height * 3];
        for t in 0..self.dims.sy {
            for s in 0..self.dims.sx {
                let mi = self.mi_slice(s, t);
                for v in 0..a {
                    for u in 0..a {
                        let src = (v * a + u) * 3;
                        let dst = ((t * a + v) * width + s * a + u) * 3;
                        for c in 0..3 {
                            bytes[dst + c] = unit_to_byte(mi[src + c]);
                        }
                    }
                }
            }
        }
        (width as u32, height as u32, bytes)
    }

    /// Inverse of [`to_mosaic_bytes`](Self::to_mosaic_bytes).
    pub fn from_mosaic_bytes(width: u32, height: u32, bytes: &[u8], side: usize) -> Result<Self> {
        let (w, h) = (width as usize, height as usize);
        if side == 0 {
            return Err(Error::Dimension("angular side must be at least 1".into()));
        }
        if w % side != 0 {
            return Err(Error::Dimension(format!(
                "width {w} not divisible by {side} (mosaic {w}x{h}, A={side})"
            )));
        }
        if h % side != 0 {
            return Err(Error::Dimension(format!(
                "height {h} not divisible by {side} (mosaic {w}x{h}, A={side})"
            )));
        }
        if bytes.len() != w * h * 3 {
            return Err(Error::ShapeMismatch(format!(
                "mosaic {w}x{h} needs {} bytes, got {}",
                w * h * 3,
                bytes.len()
            )));
        }
        let dims = SpatialDims::new(w / side, h / side);
        if dims.count() == 0 {
            return Err(Error::Dimension(format!("empty mosaic {w}x{h}")));
        }
        let mi_len = side * side * 3;
        let mut data = vec![0.0f32; dims.count() * mi_len];
        for t in 0..dims.sy {
            for s in 0..dims.sx {
                let base = (t * dims.sx + s) * mi_len;
                for v in 0..side {
                    for u in 0..side {
                        let src = ((t * side + v) * w + s * side + u) * 3;
                        let dst = base + (v * side + u) * 3;
                        for c in 0..3 {
                            data[dst + c] = bytes[src + c] as f32 / 255.0;
                        }
                    }
                }
            }
        }
        Ok(Self { dims, side, data })
    }

    /// Writes the lenslet mosaic PNG.
    pub fn save_reconstruction(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let (w, h, bytes) = self.to_mosaic_bytes();
        image::save_buffer(path, &bytes, w, h, image::ExtendedColorType::Rgb8).map_err(|e| {
            match e {
                image::ImageError::IoError(io) => Error::io(path, io),
                other => Error::Image {
                    path: path.to_path_buf(),
                    message: other.to_string(),
                },
            }
        })
    }
}

/// Reads an 8-bit RGB lenslet mosaic whose sides are multiples of `angular_side`.
pub fn load_lenslet(path: impl AsRef<Path>, angular_side: usize) -> Result<LensletLightField> {
    let path = path.as_ref();
    let img = image::open(path).map_err(|e| match e {
        image::ImageError::IoError(io) => Error::io(path, io),
        other => Error::Image {
            path: path.to_path_buf(),
            message: other.to_string(),
        },
    })?;
    let rgb = img.to_rgb8();
    let (w, h) = rgb.dimensions();
    LensletLightField::from_mosaic_bytes(w, h, rgb.as_raw(), angular_side)
}

#[inline]
pub(crate) fn clamp_unit(v: f32) -> f32 {
    if v.is_nan() {
        0.0
    } else {
        v.clamp(0.0, 1.0)
    }
}

/// `round(v·255)` with halves rounded up, after clamping to `[0,1]`.
#[inline]
pub fn unit_to_byte(v: f32) -> u8 {
    let scaled = clamp_unit(v) * 255.0;
    (scaled + 0.5).floor().min(255.0) as u8
}

fn check_unit_range(values: &[f32]) -> Result<()> {
    if let Some((i, v)) = values
        .iter()
        .enumerate()
        .find(|(_, v)| !(0.0..=1.0).contains(*v))
    {
        return Err(Error::InvalidArgument(format!(
            "value {v} at index {i} outside [0,1]"
        )));
    }
    Ok(())
}
