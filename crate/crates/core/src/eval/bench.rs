use std::time::Instant;

use crate::error::{Error, Result};
use crate::lightfield::SpatialDims;
use crate::net::{decode_lightfield_counted, decode_pixelwise, ArchConfig, EvalCounter, MinlModel, NetKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecodeMode {
    /// One network evaluation per micro-image.
    MiWise,
    /// One network evaluation per mosaic pixel.
    PixelWise,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecodeTiming {
    /// Median wall-clock seconds of the timed runs.
    pub seconds: f64,
    pub runs: Vec<f64>,
    /// Network evaluations issued by one full decode.
    pub evaluations: usize,
}

pub const TIMED_RUNS: usize = 5;

/// Times a full reconstruction: one warm-up, then the median of
/// [`TIMED_RUNS`] runs.
pub fn time_decode(model: &MinlModel, mode: DecodeMode, dims: SpatialDims, side: usize) -> Result<DecodeTiming> {
    time_decode_runs(model, mode, dims, side, TIMED_RUNS)
}

pub fn time_decode_runs(
    model: &MinlModel,
    mode: DecodeMode,
    dims: SpatialDims,
    side: usize,
    runs: usize,
) -> Result<DecodeTiming> {
    if runs == 0 {
        return Err(Error::InvalidArgument("at least one timed run is needed".into()));
    }
    let expected = match (mode, model.arch.kind) {
        (DecodeMode::MiWise, NetKind::MicroImage) => {
            if model.arch.output_side != side {
                return Err(Error::ShapeMismatch(format!(
                    "model emits A={}, asked for A={side}",
                    model.arch.output_side
                )));
            }
            dims.count()
        }
        (DecodeMode::PixelWise, NetKind::Pixel) => dims.count() * side * side,
        _ => {
            return Err(Error::InvalidArgument(format!(
                "{mode:?} decode needs a matching network kind"
            )))
        }
    };
    let once = |counter: Option<&EvalCounter>| -> Result<()> {
        match mode {
            DecodeMode::MiWise => decode_lightfield_counted(model, dims, counter).map(drop),
            DecodeMode::PixelWise => decode_pixelwise(model, dims, side, counter).map(drop),
        }
    };
    let counter = EvalCounter::new();
    once(Some(&counter))?;
    let evaluations = counter.get();
    if evaluations != expected {
        return Err(Error::InvalidArgument(format!(
            "decode issued {evaluations} evaluations, expected {expected}"
        )));
    }
    let mut times = Vec::with_capacity(runs);
    for _ in 0..runs {
        let t = Instant::now();
        once(None)?;
        times.push(t.elapsed().as_secs_f64());
    }
    let mut sorted = times.clone();
    sorted.sort_by(f64::total_cmp);
    Ok(DecodeTiming {
        seconds: sorted[runs / 2],
        runs: times,
        evaluations,
    })
}

/// Pixel-wise baseline with the same encoding and depth whose width brings
/// its parameter count closest to `arch`'s.
pub fn matched_pixel_arch(arch: &ArchConfig) -> ArchConfig {
    let target = arch.param_count() as i64;
    let mut template = ArchConfig::pixel(arch.levels, 1);
    template.mlp_widths = vec![1; arch.mlp_widths.len()];
    template.omega = arch.omega;
    let mut best = template.with_width(1);
    let mut w = 1;
    loop {
        let cand = template.with_width(w);
        let p = cand.param_count() as i64;
        if (p - target).abs() < (best.param_count() as i64 - target).abs() {
            best = cand;
        }
        if p > target {
            break;
        }
        w += 1;
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::init_model;

    #[test]
    fn evaluation_counts_differ_by_a_squared() {
        let arch = ArchConfig::micro_image(3, 8, 2, 11);
        let mi = init_model(&arch, 1).unwrap();
        let px = init_model(&matched_pixel_arch(&arch), 1).unwrap();
        let dims = SpatialDims::new(3, 2);
        let a = time_decode_runs(&mi, DecodeMode::MiWise, dims, 11, 1).unwrap();
        let b = time_decode_runs(&px, DecodeMode::PixelWise, dims, 11, 1).unwrap();
        assert_eq!(a.evaluations, 6);
        assert_eq!(b.evaluations, 6 * 121);
        assert_eq!(b.evaluations / a.evaluations, 121);
        assert!(a.seconds > 0.0);
        assert!(time_decode_runs(&px, DecodeMode::MiWise, dims, 11, 1).is_err());
    }

    #[test]
    fn matched_width_is_closest() {
        let arch = ArchConfig::micro_image(40, 37, 9, 11);
        let m = matched_pixel_arch(&arch);
        let p = m.param_count() as i64;
        let t = arch.param_count() as i64;
        for w in [m.mlp_widths[0] - 1, m.mlp_widths[0] + 1] {
            let q = m.with_width(w).param_count() as i64;
            assert!((p - t).abs() <= (q - t).abs());
        }
    }
}
