mod config;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use config::{parse_budget, parse_budgets, parse_dims, parse_region, CliConfig};
use minl::codec::{bpp, compress_model, decompress_model, deserialize, serialize, MAGIC};
use minl::eval::{
    add_noise, calibrate_noise, classical_filter, matched_pixel_arch, psnr, psnr_json, rd_sweep, ssim,
    time_decode_runs, DecodeMode, FilterKind, MetricsReport,
};
use minl::net::{decode_lightfield, init_model, solve_width_for_budget, MinlModel};
use minl::synth::{render_scene, SceneConfig};
use minl::train::{compress_finetuned, fit};
use minl::{load_lenslet, LensletLightField, SpatialDims};

#[derive(Parser, Debug)]
#[command(name = "minl", version, about = "Micro-image-wise neural light-field codec")]
struct Cli {
    /// Plain-text `key = value` configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override one configuration key, e.g. `--set train.epochs=50`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Training seed (same as `--set train.seed=N`).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Suppress the resolved-config echo on stderr.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct LfArgs {
    /// Lenslet mosaic PNG.
    #[arg(long)]
    input: PathBuf,
    /// Side of the micro-images stored in the PNG (default: lf.mi_size).
    #[arg(long)]
    mi_size: Option<usize>,
    /// Central views kept per micro-image (default: lf.crop).
    #[arg(long)]
    crop: Option<usize>,
    /// Spatial window `s0,t0,w,h` in micro-images.
    #[arg(long)]
    region: Option<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train a network on a lenslet image.
    Fit {
        #[command(flatten)]
        lf: LfArgs,
        /// Model size in bytes at 32 bits per parameter (suffix k = 1024).
        #[arg(long)]
        budget: Option<String>,
        #[arg(long)]
        out: PathBuf,
        /// Per-epoch CSV log.
        #[arg(long)]
        history: Option<PathBuf>,
    },
    /// Prune, quantize and entropy-code a checkpoint.
    Compress {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        ratio: Option<f64>,
        #[arg(long)]
        bits: Option<u8>,
        #[arg(long)]
        out: PathBuf,
        /// Fine-tune with the pruning mask fixed before quantizing (needs --input).
        #[arg(long)]
        finetune: bool,
        #[arg(long)]
        input: Option<PathBuf>,
        #[arg(long)]
        mi_size: Option<usize>,
        #[arg(long)]
        crop: Option<usize>,
        #[arg(long)]
        region: Option<String>,
    },
    /// Turn a stream back into a checkpoint.
    Decompress {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Reconstruct a lenslet PNG from a checkpoint or stream.
    Decode {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        dims: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a reconstruction against ground truth; prints JSON.
    Eval {
        #[arg(long)]
        recon: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        stream: Option<PathBuf>,
        /// Micro-image side of both PNGs (default: lf.crop).
        #[arg(long)]
        mi_size: Option<usize>,
    },
    /// Fit on a noisy capture and compare with classical filters; prints JSON.
    Denoise {
        #[command(flatten)]
        lf: LfArgs,
        /// Clean reference, cropped the same way as the input.
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        budget: String,
        /// Write the network reconstruction here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Time micro-image-wise against pixel-wise decoding; prints JSON.
    Bench {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        dims: String,
        #[arg(long, default_value_t = 5)]
        runs: usize,
    },
    /// Rate-distortion sweep over model budgets; writes CSV.
    Rd {
        #[command(flatten)]
        lf: LfArgs,
        #[arg(long)]
        budgets: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Render a synthetic layered scene as a lenslet PNG.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "64x64")]
        dims: String,
        #[arg(long, default_value_t = 11)]
        mi_size: usize,
        #[arg(long, default_value_t = 0)]
        scene_seed: u64,
    },
    /// Add noise (noise.* keys) to a lenslet PNG.
    Noise {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 11)]
        mi_size: usize,
        /// Bisect the noise level to hit this PSNR instead of using the configured one.
        #[arg(long)]
        target_psnr: Option<f64>,
    },
}

enum Failure {
    Usage(String),
    Runtime(String),
}

impl From<minl::Error> for Failure {
    fn from(e: minl::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

impl From<config::ConfigError> for Failure {
    fn from(e: config::ConfigError) -> Self {
        Failure::Usage(e.0)
    }
}

type Outcome = Result<(), Failure>;

fn usage<T>(msg: impl Into<String>) -> Result<T, Failure> {
    Err(Failure::Usage(msg.into()))
}

fn resolve_config(cli: &Cli) -> Result<CliConfig, Failure> {
    let mut cfg = CliConfig::default();
    if let Some(path) = &cli.config {
        cfg.merge_file(path).map_err(Failure::Runtime)?;
    }
    for pair in &cli.set {
        cfg.assign(pair)?;
    }
    if let Some(seed) = cli.seed {
        cfg.set("train.seed", &seed.to_string())?;
    }
    Ok(cfg)
}

fn print_json(v: &Value) {
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{}", serde_json::to_string_pretty(v).unwrap());
}

fn load_input(cfg: &CliConfig, path: &Path, mi_size: Option<usize>, crop: Option<usize>, region: Option<&str>) -> Result<LensletLightField, Failure> {
    let mi = match mi_size {
        Some(v) => v,
        None => cfg.usize("lf.mi_size")?,
    };
    let crop = match crop {
        Some(v) => v,
        None => cfg.usize("lf.crop")?.min(mi),
    };
    let mut lf = load_lenslet(path, mi)?;
    if crop != mi {
        lf = lf.crop_central_views(crop)?;
    }
    if let Some(r) = region {
        let [s0, t0, w, h] = parse_region(r).map_err(Failure::Usage)?;
        lf = lf.crop_spatial(s0, t0, w, h)?;
    }
    Ok(lf)
}

fn load_lf(cfg: &CliConfig, a: &LfArgs) -> Result<LensletLightField, Failure> {
    load_input(cfg, &a.input, a.mi_size, a.crop, a.region.as_deref())
}

fn read_file(path: &Path) -> Result<Vec<u8>, Failure> {
    std::fs::read(path).map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))
}

fn write_file(path: &Path, bytes: &[u8]) -> Outcome {
    std::fs::write(path, bytes).map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))
}

/// Checkpoint or `MINL` stream, told apart by magic.
fn load_any_model(path: &Path) -> Result<MinlModel, Failure> {
    let bytes = read_file(path)?;
    let model = if bytes.starts_with(&MAGIC) {
        decompress_model(&deserialize(&bytes)?)?
    } else {
        MinlModel::from_checkpoint_bytes(&bytes)?
    };
    Ok(model)
}

fn arch_for(cfg: &CliConfig, side: usize, budget: Option<&str>) -> Result<minl::ArchConfig, Failure> {
    let template = cfg.arch(side)?;
    match budget {
        None => Ok(template),
        Some(b) => {
            let bytes = parse_budget(b).map_err(Failure::Usage)?;
            Ok(solve_width_for_budget(bytes, &template)?)
        }
    }
}

fn metrics_json(recon: &LensletLightField, gt: &LensletLightField) -> Result<Value, Failure> {
    Ok(json!({
        "psnr_db": psnr_json(psnr(recon, gt, 1.0)?),
        "ssim": ssim(recon, gt)?,
    }))
}

fn run(cli: Cli) -> Outcome {
    let cfg = resolve_config(&cli)?;
    if !cli.quiet {
        let mut err = std::io::stderr().lock();
        let _ = write!(err, "resolved config:\n{}", cfg.render());
    }
    match cli.command {
        Command::Fit {
            lf,
            budget,
            out,
            history,
        } => {
            let lf = load_lf(&cfg, &lf)?;
            let arch = arch_for(&cfg, lf.angular_side(), budget.as_deref())?;
            let train = cfg.train()?;
            let started = Instant::now();
            let (model, hist) = fit(&lf, &arch, &train)?;
            model.save_checkpoint(&out)?;
            if let Some(h) = history {
                write_file(&h, hist.to_csv().as_bytes())?;
            }
            let first = hist.records.first().map(|r| r.mean_loss);
            let last = hist.records.last().map(|r| r.mean_loss);
            print_json(&json!({
                "checkpoint": out.display().to_string(),
                "width": arch.mlp_widths[0],
                "params": arch.param_count(),
                "model_bytes": 4 * arch.param_count(),
                "dims": [lf.dims().sx, lf.dims().sy, lf.angular_side()],
                "first_loss": first,
                "final_loss": last,
                "seconds": started.elapsed().as_secs_f64(),
            }));
        }
        Command::Compress {
            model,
            ratio,
            bits,
            out,
            finetune,
            input,
            mi_size,
            crop,
            region,
        } => {
            let ratio = match ratio {
                Some(r) => r,
                None => cfg.ratio()?,
            };
            let bits = match bits {
                Some(b) => b,
                None => cfg.bits()?,
            };
            let m = MinlModel::load_checkpoint(&model)?;
            let cm = if finetune {
                let Some(input) = input else {
                    return usage("--finetune needs --input");
                };
                let lf = load_input(&cfg, &input, mi_size, crop, region.as_deref())?;
                compress_finetuned(&lf, &m, ratio, bits, &cfg.train()?)?.0
            } else {
                compress_model(&m, ratio, bits)?
            };
            let stream = serialize(&cm)?;
            write_file(&out, &stream)?;
            print_json(&json!({
                "stream": out.display().to_string(),
                "stream_bytes": stream.len(),
                "raw_bytes": 4 * m.param_count(),
                "kept_fraction": cm.mask.kept_fraction(),
                "fixed_width_bits": cm.fixed_width_bits(),
                "entropy_coded_bits": cm.entropy_coded_bits(),
            }));
        }
        Command::Decompress { input, out } => {
            let cm = deserialize(&read_file(&input)?)?;
            decompress_model(&cm)?.save_checkpoint(&out)?;
        }
        Command::Decode { model, dims, out } => {
            let dims = parse_dims(&dims).map_err(Failure::Usage)?;
            let m = load_any_model(&model)?;
            decode_lightfield(&m, dims)?.save_reconstruction(&out)?;
        }
        Command::Eval {
            recon,
            gt,
            stream,
            mi_size,
        } => {
            let side = match mi_size {
                Some(v) => v,
                None => cfg.usize("lf.crop")?,
            };
            let r = load_lenslet(&recon, side)?;
            let g = load_lenslet(&gt, side)?;
            let mut report = MetricsReport::new(psnr(&r, &g, 1.0)?, ssim(&r, &g)?, &g);
            if let Some(s) = stream {
                let len = std::fs::metadata(&s)
                    .map_err(|e| Failure::Runtime(format!("{}: {e}", s.display())))?
                    .len();
                report.bpp = Some(bpp(len as usize, g.dims(), side)?);
            }
            print_json(&report.to_json());
        }
        Command::Denoise { lf, gt, budget, out } => {
            let noisy = load_lf(&cfg, &lf)?;
            let clean = load_input(&cfg, &gt, lf.mi_size, lf.crop, lf.region.as_deref())?;
            let arch = arch_for(&cfg, noisy.angular_side(), Some(&budget))?;
            let (model, _) = fit(&noisy, &arch, &cfg.train()?)?;
            let recon = decode_lightfield(&model, noisy.dims())?;
            if let Some(o) = out {
                recon.save_reconstruction(&o)?;
            }
            let mut filters = serde_json::Map::new();
            for (name, kind) in [
                ("average", FilterKind::Average),
                ("median", FilterKind::Median),
                ("gaussian", FilterKind::Gaussian),
            ] {
                filters.insert(name.into(), metrics_json(&classical_filter(&noisy, kind)?, &clean)?);
            }
            print_json(&json!({
                "noisy": metrics_json(&noisy, &clean)?,
                "minl": metrics_json(&recon, &clean)?,
                "filters": filters,
            }));
        }
        Command::Bench { model, dims, runs } => {
            let dims = parse_dims(&dims).map_err(Failure::Usage)?;
            let m = load_any_model(&model)?;
            let side = m.arch.output_side;
            let pixel = init_model(&matched_pixel_arch(&m.arch), cfg.train()?.seed)?;
            let mi = time_decode_runs(&m, DecodeMode::MiWise, dims, side, runs)?;
            let px = time_decode_runs(&pixel, DecodeMode::PixelWise, dims, side, runs)?;
            print_json(&json!({
                "dims": [dims.sx, dims.sy, side],
                "mi_wise_seconds": mi.seconds,
                "pixel_wise_seconds": px.seconds,
                "ratio": px.seconds / mi.seconds,
                "mi_wise_evaluations": mi.evaluations,
                "pixel_wise_evaluations": px.evaluations,
                "mi_wise_params": m.param_count(),
                "pixel_wise_params": pixel.param_count(),
            }));
        }
        Command::Rd { lf, budgets, out } => {
            let lf = load_lf(&cfg, &lf)?;
            let budgets = parse_budgets(&budgets).map_err(Failure::Usage)?;
            let table = rd_sweep(&lf, &budgets, &cfg.arch(lf.angular_side())?, &cfg.train()?)?;
            let csv = table.to_csv();
            write_file(&out, csv.as_bytes())?;
            print!("{csv}");
        }
        Command::Synth {
            out,
            dims,
            mi_size,
            scene_seed,
        } => {
            let dims: SpatialDims = parse_dims(&dims).map_err(Failure::Usage)?;
            let scene = SceneConfig {
                dims,
                angular_side: mi_size,
                seed: scene_seed,
                ..SceneConfig::default()
            };
            render_scene(&scene)?.save_reconstruction(&out)?;
        }
        Command::Noise {
            input,
            out,
            mi_size,
            target_psnr,
        } => {
            let lf = load_lenslet(&input, mi_size)?;
            let mut spec = cfg.noise()?;
            if let Some(t) = target_psnr {
                spec = calibrate_noise(&lf, &spec, t)?.0;
            }
            let noisy = add_noise(&lf, &spec)?;
            noisy.save_reconstruction(&out)?;
            print_json(&json!({
                "kind": format!("{:?}", spec.kind).to_lowercase(),
                "sigma": spec.sigma,
                "density": spec.density,
                "sigma_s": spec.sigma_s,
                "seed": spec.seed,
                "psnr_db": psnr_json(psnr(&noisy, &lf, 1.0)?),
            }));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}\n\nFor more information, try '--help'.");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
