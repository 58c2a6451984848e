use super::arch::NetKind;
use super::encoding::positional_encode;
use super::engine::{forward_encoded, forward_pixelwise, EvalCounter};
use super::model::MinlModel;
use crate::error::{Error, Result};
use crate::lightfield::{clamp_unit, normalize_coord, LensletLightField, SpatialDims};

/// Coordinates per batched forward call during decode.
const DECODE_BLOCK: usize = 256;

/// Reconstructs every micro-image by one forward evaluation of its own
/// coordinate, clamped to `[0,1]`.
pub fn decode_lightfield(model: &MinlModel, dims: SpatialDims) -> Result<LensletLightField> {
    decode_lightfield_counted(model, dims, None)
}

pub fn decode_lightfield_counted(
    model: &MinlModel,
    dims: SpatialDims,
    counter: Option<&EvalCounter>,
) -> Result<LensletLightField> {
    let arch = &model.arch;
    if arch.kind != NetKind::MicroImage {
        return Err(Error::InvalidArgument(
            "micro-image decode needs a micro-image architecture".into(),
        ));
    }
    if dims.count() == 0 {
        return Err(Error::Dimension(format!("empty grid {dims}")));
    }
    let dim = arch.input_dim();
    let total = dims.count();
    let mut data = Vec::with_capacity(total * arch.output_len());
    let mut inputs = Vec::with_capacity(DECODE_BLOCK * dim);
    for start in (0..total).step_by(DECODE_BLOCK) {
        let n = DECODE_BLOCK.min(total - start);
        inputs.clear();
        for idx in start..start + n {
            let (s, t) = (idx % dims.sx, idx / dims.sx);
            let enc = positional_encode(normalize_coord(s, t, dims)?, arch.levels);
            inputs.extend(enc.values.iter().map(|v| *v as f32));
        }
        let out = forward_encoded(model, &inputs, n, counter)?;
        data.extend(out.into_iter().map(clamp_unit));
    }
    LensletLightField::from_raw(dims, arch.output_side, data)
}

/// Reconstructs the `(S_x·A) × (S_y·A)` mosaic with a pixel-wise network,
/// one evaluation per mosaic pixel, and regroups it into micro-images.
pub fn decode_pixelwise(
    model: &MinlModel,
    dims: SpatialDims,
    side: usize,
    counter: Option<&EvalCounter>,
) -> Result<LensletLightField> {
    if model.arch.kind != NetKind::Pixel {
        return Err(Error::InvalidArgument(
            "pixel-wise decode needs a pixel-wise architecture".into(),
        ));
    }
    if side == 0 || dims.count() == 0 {
        return Err(Error::Dimension(format!("empty grid {dims} with A={side}")));
    }
    let grid = SpatialDims::new(dims.sx * side, dims.sy * side);
    let mut data = vec![0.0f32; grid.count() * 3];
    for y in 0..grid.sy {
        for x in 0..grid.sx {
            let enc = positional_encode(normalize_coord(x, y, grid)?, model.arch.levels);
            let rgb = forward_pixelwise(model, &enc)?;
            if let Some(c) = counter {
                c.add(1);
            }
            let (s, u) = (x / side, x % side);
            let (t, v) = (y / side, y % side);
            let dst = ((t * dims.sx + s) * side * side + v * side + u) * 3;
            for c in 0..3 {
                data[dst + c] = clamp_unit(rgb[c]);
            }
        }
    }
    LensletLightField::from_raw(dims, side, data)
}
