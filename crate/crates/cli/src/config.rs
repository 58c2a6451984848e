//! Key/value run configuration: defaults, an optional `key = value` file and
//! `--set key=value` overrides, resolved in that order.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use minl::codec::{DEFAULT_BITS, DEFAULT_PRUNE_RATIO};
use minl::eval::{NoiseKind, NoiseSpec, DEFAULT_WHITE_SIGMA};
use minl::net::ArchConfig;
use minl::train::{Distortion, L1Reduction, TrainConfig};

#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CliConfig {
    values: BTreeMap<&'static str, String>,
}

const KEYS: &[(&str, &str)] = &[
    ("arch.L", "40"),
    ("arch.width", "64"),
    ("arch.C0", "16"),
    ("arch.C1", "16"),
    ("arch.C2", "16"),
    ("arch.omega", "30"),
    ("codec.bits", "8"),
    ("codec.ratio", "0.2"),
    ("lf.crop", "11"),
    ("lf.mi_size", "15"),
    ("noise.density", "0"),
    ("noise.kind", "white"),
    ("noise.seed", "0"),
    ("noise.sigma", "0.0583"),
    ("noise.sigma_s", "0"),
    ("train.alpha", "0.01"),
    ("train.batch_size", "5000"),
    ("train.distortion", "l2"),
    ("train.epochs", "250"),
    ("train.finetune_epochs", "30"),
    ("train.l1", "sum"),
    ("train.lr_end", "0.0001"),
    ("train.lr_start", "0.01"),
    ("train.probe_every", "0"),
    ("train.seed", "0"),
];

impl Default for CliConfig {
    fn default() -> Self {
        debug_assert_eq!(DEFAULT_BITS, 8);
        debug_assert_eq!(DEFAULT_PRUNE_RATIO, 0.2);
        debug_assert_eq!(DEFAULT_WHITE_SIGMA, 0.0583);
        Self {
            values: KEYS.iter().map(|(k, v)| (*k, v.to_string())).collect(),
        }
    }
}

impl CliConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let Some((k, _)) = KEYS.iter().find(|(k, _)| *k == key) else {
            return Err(ConfigError(format!("unknown config key {key:?}")));
        };
        self.values.insert(k, value.trim().to_string());
        Ok(())
    }

    /// Applies one `key=value` assignment.
    pub fn assign(&mut self, pair: &str) -> Result<(), ConfigError> {
        let (k, v) = pair
            .split_once('=')
            .ok_or_else(|| ConfigError(format!("expected key=value, got {pair:?}")))?;
        self.set(k.trim(), v)
    }

    /// Parses `key = value` lines; `#` starts a comment.
    pub fn merge_text(&mut self, text: &str) -> Result<(), ConfigError> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            self.assign(line)
                .map_err(|e| ConfigError(format!("line {}: {e}", n + 1)))?;
        }
        Ok(())
    }

    pub fn merge_file(&mut self, path: &Path) -> Result<(), String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        self.merge_text(&text)
            .map_err(|e| format!("{}: {e}", path.display()))
    }

    pub fn get(&self, key: &str) -> &str {
        &self.values[key]
    }

    fn parse<T: std::str::FromStr>(&self, key: &str) -> Result<T, ConfigError> {
        self.get(key)
            .parse()
            .map_err(|_| ConfigError(format!("bad value {:?} for {key}", self.get(key))))
    }

    pub fn train(&self) -> Result<TrainConfig, ConfigError> {
        let distortion = match self.get("train.distortion") {
            "l2" | "norm" => Distortion::L2Norm,
            "squared" | "mse" => Distortion::SquaredL2,
            other => return Err(ConfigError(format!("bad value {other:?} for train.distortion"))),
        };
        let cfg = TrainConfig {
            epochs: self.parse("train.epochs")?,
            batch_size: self.parse("train.batch_size")?,
            alpha: self.parse("train.alpha")?,
            lr_start: self.parse("train.lr_start")?,
            lr_end: self.parse("train.lr_end")?,
            seed: self.parse("train.seed")?,
            finetune_epochs: self.parse("train.finetune_epochs")?,
            distortion,
            l1: self
                .get("train.l1")
                .parse::<L1Reduction>()
                .map_err(|e| ConfigError(e.to_string()))?,
            probe_every: self.parse("train.probe_every")?,
        };
        cfg.validate().map_err(|e| ConfigError(e.to_string()))?;
        Ok(cfg)
    }

    /// Micro-image architecture for output side `side`.
    pub fn arch(&self, side: usize) -> Result<ArchConfig, ConfigError> {
        let width: usize = self.parse("arch.width")?;
        let arch = ArchConfig {
            levels: self.parse("arch.L")?,
            mlp_widths: vec![width, width],
            seed_channels: self.parse("arch.C0")?,
            conv_channels: (self.parse("arch.C1")?, self.parse("arch.C2")?),
            omega: self.parse("arch.omega")?,
            output_side: side,
            ..ArchConfig::default()
        };
        arch.validate().map_err(|e| ConfigError(e.to_string()))?;
        Ok(arch)
    }

    pub fn noise(&self) -> Result<NoiseSpec, ConfigError> {
        let kind: NoiseKind = self
            .get("noise.kind")
            .parse()
            .map_err(|e: minl::Error| ConfigError(e.to_string()))?;
        let spec = NoiseSpec {
            kind,
            sigma: self.parse("noise.sigma")?,
            density: self.parse("noise.density")?,
            sigma_s: self.parse("noise.sigma_s")?,
            seed: self.parse("noise.seed")?,
        };
        spec.validate().map_err(|e| ConfigError(e.to_string()))?;
        Ok(spec)
    }

    pub fn ratio(&self) -> Result<f64, ConfigError> {
        self.parse("codec.ratio")
    }

    pub fn bits(&self) -> Result<u8, ConfigError> {
        self.parse("codec.bits")
    }

    pub fn usize(&self, key: &str) -> Result<usize, ConfigError> {
        self.parse(key)
    }

    /// Every key with its resolved value, one `key=value` per line.
    pub fn render(&self) -> String {
        self.values
            .iter()
            .map(|(k, v)| format!("{k}={v}\n"))
            .collect()
    }
}

/// Byte counts with optional `k`/`m` suffixes (powers of 1024).
pub fn parse_budget(s: &str) -> Result<usize, String> {
    let t = s.trim().to_ascii_lowercase();
    let t = t.strip_suffix('b').unwrap_or(&t);
    let (num, mult) = if let Some(n) = t.strip_suffix('k') {
        (n, 1024.0)
    } else if let Some(n) = t.strip_suffix('m') {
        (n, 1024.0 * 1024.0)
    } else {
        (t, 1.0)
    };
    let v: f64 = num
        .trim()
        .parse()
        .map_err(|_| format!("bad byte count {s:?}"))?;
    if !(v.is_finite() && v > 0.0) {
        return Err(format!("byte count {s:?} must be positive"));
    }
    Ok((v * mult).round() as usize)
}

pub fn parse_budgets(s: &str) -> Result<Vec<usize>, String> {
    s.split(',').map(parse_budget).collect()
}

/// `SxxSy`, e.g. `64x64`.
pub fn parse_dims(s: &str) -> Result<minl::SpatialDims, String> {
    let (a, b) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("expected SxxSy, got {s:?}"))?;
    let sx = a.trim().parse().map_err(|_| format!("bad dims {s:?}"))?;
    let sy = b.trim().parse().map_err(|_| format!("bad dims {s:?}"))?;
    if sx == 0 || sy == 0 {
        return Err(format!("dims {s:?} must be positive"));
    }
    Ok(minl::SpatialDims::new(sx, sy))
}

/// `s0,t0,w,h` in micro-image units.
pub fn parse_region(s: &str) -> Result<[usize; 4], String> {
    let parts: Vec<usize> = s
        .split(',')
        .map(|p| p.trim().parse().map_err(|_| format!("bad region {s:?}")))
        .collect::<Result<_, _>>()?;
    <[usize; 4]>::try_from(parts).map_err(|_| format!("region needs s0,t0,w,h, got {s:?}"))
}
