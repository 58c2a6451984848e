//! Quality metrics, noise models, classical filter baselines, decode timing
//! and rate-distortion sweeps.

mod bench;
mod filter;
mod metrics;
mod noise;
mod rd;

pub use bench::{matched_pixel_arch, time_decode, time_decode_runs, DecodeMode, DecodeTiming, TIMED_RUNS};
pub use filter::{classical_filter, filter_image, gaussian_kernel_3x3, FilterKind, GAUSSIAN_SIGMA};
pub use metrics::{mse, psnr, psnr_from_mse, psnr_json, ssim, ssim_channel, MetricsReport, SSIM_K1, SSIM_K2, SSIM_SIGMA, SSIM_WINDOW};
pub use noise::{add_noise, calibrate_noise, NoiseKind, NoiseSpec, DEFAULT_WHITE_SIGMA};
pub use rd::{rd_point, rd_sweep, RdRow, RdTable, RD_CSV_HEADER};
