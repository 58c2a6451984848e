use std::fmt::Write as _;

use super::metrics::{psnr, ssim};
use crate::codec::{bpp, decompress_model, deserialize, serialize, DEFAULT_BITS, DEFAULT_PRUNE_RATIO};
use crate::error::{Error, Result};
use crate::lightfield::LensletLightField;
use crate::net::{decode_lightfield, solve_width_for_budget, ArchConfig};
use crate::train::{compress_finetuned, fit, TrainConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct RdRow {
    pub budget_bytes: usize,
    pub bpp: f64,
    pub psnr_db: f64,
    pub ssim: f64,
    pub stream_bytes: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RdTable {
    pub rows: Vec<RdRow>,
}

pub const RD_CSV_HEADER: &str = "budget_bytes,bpp,psnr_db,ssim,stream_bytes";

impl RdTable {
    pub fn to_csv(&self) -> String {
        let mut s = String::from(RD_CSV_HEADER);
        s.push('\n');
        for r in &self.rows {
            let p = if r.psnr_db.is_infinite() {
                "inf".to_string()
            } else {
                format!("{:.4}", r.psnr_db)
            };
            let _ = writeln!(s, "{},{:.6},{},{:.6},{}", r.budget_bytes, r.bpp, p, r.ssim, r.stream_bytes);
        }
        s
    }
}

/// One rate point: size the network to `budget`, fit, compress with
/// fine-tuning, round-trip through the stream and score the decode.
pub fn rd_point(lf: &LensletLightField, budget: usize, template: &ArchConfig, cfg: &TrainConfig) -> Result<RdRow> {
    let arch = solve_width_for_budget(budget, template)?;
    let (model, _) = fit(lf, &arch, cfg)?;
    let (cm, _) = compress_finetuned(lf, &model, DEFAULT_PRUNE_RATIO, DEFAULT_BITS, cfg)?;
    let stream = serialize(&cm)?;
    let decoded = decompress_model(&deserialize(&stream)?)?;
    let recon = decode_lightfield(&decoded, lf.dims())?;
    Ok(RdRow {
        budget_bytes: budget,
        bpp: bpp(stream.len(), lf.dims(), lf.angular_side())?,
        psnr_db: psnr(&recon, lf, 1.0)?,
        ssim: ssim(&recon, lf)?,
        stream_bytes: stream.len(),
    })
}

pub fn rd_sweep(lf: &LensletLightField, budgets: &[usize], template: &ArchConfig, cfg: &TrainConfig) -> Result<RdTable> {
    if budgets.is_empty() {
        return Err(Error::InvalidArgument("no budgets given".into()));
    }
    let mut template = template.clone();
    template.output_side = lf.angular_side();
    let rows = budgets
        .iter()
        .map(|&b| rd_point(lf, b, &template, cfg))
        .collect::<Result<Vec<_>>>()?;
    Ok(RdTable { rows })
}
