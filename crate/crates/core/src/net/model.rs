use std::io::{Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::arch::{ArchConfig, NetKind};
use super::kernels::Real;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    pub shape: Vec<usize>,
    pub data: Vec<T>,
}

impl<T: Real> Tensor<T> {
    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self {
            shape,
            data: vec![T::zero(); n],
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

/// Network parameters. Tensors alternate weight, bias for every layer of
/// [`ArchConfig::layers`].
#[derive(Debug, Clone, PartialEq)]
pub struct Model<T = f32> {
    pub arch: ArchConfig,
    pub tensors: Vec<Tensor<T>>,
}

/// The codec's parameter set: 32-bit tensors.
pub type MinlModel = Model<f32>;

/// One gradient tensor per model tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet<T = f32> {
    pub tensors: Vec<Vec<T>>,
}

impl<T: Real> GradientSet<T> {
    pub fn zeros_like(model: &Model<T>) -> Self {
        Self {
            tensors: model
                .tensors
                .iter()
                .map(|t| vec![T::zero(); t.len()])
                .collect(),
        }
    }

    pub fn iter_flat(&self) -> impl Iterator<Item = &T> {
        self.tensors.iter().flatten()
    }
}

impl<T: Real> Model<T> {
    /// All-zero parameters of the right shapes.
    pub fn zeros(arch: ArchConfig) -> Result<Self> {
        arch.validate()?;
        let mut tensors = Vec::new();
        for layer in arch.layers() {
            tensors.push(Tensor::zeros(layer.weight_shape()));
            tensors.push(Tensor::zeros(vec![layer.bias_len()]));
        }
        Ok(Self { arch, tensors })
    }

    pub fn param_count(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    /// Index of the weight tensor of layer `i`.
    pub fn weight_index(layer: usize) -> usize {
        2 * layer
    }

    pub fn is_weight_tensor(index: usize) -> bool {
        index % 2 == 0
    }

    pub fn check_shapes(&self) -> Result<()> {
        let layers = self.arch.layers();
        if self.tensors.len() != 2 * layers.len() {
            return Err(Error::ShapeMismatch(format!(
                "model has {} tensors, architecture needs {}",
                self.tensors.len(),
                2 * layers.len()
            )));
        }
        for (i, layer) in layers.iter().enumerate() {
            let w = &self.tensors[2 * i];
            let b = &self.tensors[2 * i + 1];
            if w.shape != layer.weight_shape()
                || w.data.len() != w.shape.iter().product::<usize>()
                || b.shape != vec![layer.bias_len()]
                || b.data.len() != layer.bias_len()
            {
                return Err(Error::ShapeMismatch(format!(
                    "layer {i}: tensors {:?}/{:?} do not match {:?}",
                    w.shape, b.shape, layer
                )));
            }
        }
        Ok(())
    }

    pub fn check_finite(&self) -> Result<()> {
        for (i, t) in self.tensors.iter().enumerate() {
            if let Some(j) = t.data.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("model tensor {i}, entry {j}")));
            }
        }
        Ok(())
    }

    pub fn cast<U: Real>(&self) -> Model<U> {
        Model {
            arch: self.arch.clone(),
            tensors: self
                .tensors
                .iter()
                .map(|t| Tensor {
                    shape: t.shape.clone(),
                    data: t.data.iter().map(|v| U::of(v.as_f64())).collect(),
                })
                .collect(),
        }
    }

    pub fn l1_norm(&self) -> f64 {
        self.tensors
            .iter()
            .flat_map(|t| &t.data)
            .map(|v| v.as_f64().abs())
            .sum()
    }
}

/// Sinusoidal-network initialisation: the first layer draws from
/// `U(-1/fan_in, 1/fan_in)`, every later layer from
/// `U(-√(6/fan_in)/ω, √(6/fan_in)/ω)`; biases start at zero.
pub fn init_model(arch: &ArchConfig, seed: u64) -> Result<MinlModel> {
    let mut model = MinlModel::zeros(arch.clone())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let omega = arch.omega as f64;
    for (i, layer) in arch.layers().iter().enumerate() {
        let fan_in = layer.fan_in() as f64;
        let bound = if i == 0 {
            1.0 / fan_in
        } else {
            (6.0 / fan_in).sqrt() / omega
        };
        for w in &mut model.tensors[2 * i].data {
            *w = rng.random_range(-bound..bound) as f32;
        }
    }
    Ok(model)
}

const CHECKPOINT_MAGIC: [u8; 4] = *b"MNCK";
const CHECKPOINT_VERSION: u8 = 1;

impl MinlModel {
    /// Uncompressed checkpoint: versioned header, architecture, raw
    /// little-endian `f32` tensors.
    pub fn to_checkpoint_bytes(&self) -> Vec<u8> {
        let a = &self.arch;
        let mut out = Vec::new();
        out.extend_from_slice(&CHECKPOINT_MAGIC);
        out.push(CHECKPOINT_VERSION);
        out.push(match a.kind {
            NetKind::MicroImage => 0,
            NetKind::Pixel => 1,
        });
        put_u32(&mut out, a.levels as u32);
        put_u32(&mut out, a.mlp_widths.len() as u32);
        for &w in &a.mlp_widths {
            put_u32(&mut out, w as u32);
        }
        put_u32(&mut out, a.seed_channels as u32);
        put_u32(&mut out, a.conv_channels.0 as u32);
        put_u32(&mut out, a.conv_channels.1 as u32);
        out.extend_from_slice(&a.omega.to_le_bytes());
        put_u32(&mut out, a.output_side as u32);
        put_u32(&mut out, self.tensors.len() as u32);
        for t in &self.tensors {
            out.push(t.shape.len() as u8);
            for &d in &t.shape {
                put_u32(&mut out, d as u32);
            }
            for v in &t.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_checkpoint_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = bytes;
        let mut magic = [0u8; 4];
        read_exact(&mut r, &mut magic)?;
        if magic != CHECKPOINT_MAGIC {
            return Err(Error::BadMagic {
                expected: CHECKPOINT_MAGIC,
                found: magic,
            });
        }
        let version = get_u8(&mut r)?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::UnsupportedVersion(version));
        }
        let kind = match get_u8(&mut r)? {
            0 => NetKind::MicroImage,
            1 => NetKind::Pixel,
            k => return Err(Error::Corrupt(format!("unknown network kind {k}"))),
        };
        let levels = get_u32(&mut r)? as usize;
        let n_widths = get_u32(&mut r)? as usize;
        if n_widths > 1024 {
            return Err(Error::Corrupt(format!("{n_widths} hidden layers")));
        }
        let mut mlp_widths = Vec::with_capacity(n_widths);
        for _ in 0..n_widths {
            mlp_widths.push(get_u32(&mut r)? as usize);
        }
        let seed_channels = get_u32(&mut r)? as usize;
        let c1 = get_u32(&mut r)? as usize;
        let c2 = get_u32(&mut r)? as usize;
        let omega = f32::from_bits(get_u32(&mut r)?);
        let output_side = get_u32(&mut r)? as usize;
        let arch = ArchConfig {
            kind,
            levels,
            mlp_widths,
            seed_channels,
            conv_channels: (c1, c2),
            omega,
            output_side,
        };
        arch.validate()?;
        let count = get_u32(&mut r)? as usize;
        let mut tensors = Vec::with_capacity(count.min(1024));
        for _ in 0..count {
            let rank = get_u8(&mut r)? as usize;
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                shape.push(get_u32(&mut r)? as usize);
            }
            let n: usize = shape.iter().product();
            if n * 4 > r.len() {
                return Err(Error::Corrupt("checkpoint truncated".into()));
            }
            let mut data = Vec::with_capacity(n);
            for _ in 0..n {
                data.push(f32::from_bits(get_u32(&mut r)?));
            }
            tensors.push(Tensor { shape, data });
        }
        if !r.is_empty() {
            return Err(Error::Corrupt(format!("{} trailing bytes", r.len())));
        }
        let model = Self { arch, tensors };
        model.check_shapes()?;
        Ok(model)
    }

    pub fn save_checkpoint(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&self.to_checkpoint_bytes())
            .map_err(|e| Error::io(path, e))
    }

    pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut bytes = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::io(path, e))?;
        Self::from_checkpoint_bytes(&bytes)
    }

    /// Whether bytes start with the checkpoint magic.
    pub fn is_checkpoint(bytes: &[u8]) -> bool {
        bytes.starts_with(&CHECKPOINT_MAGIC)
    }
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn read_exact(r: &mut &[u8], buf: &mut [u8]) -> Result<()> {
    if r.len() < buf.len() {
        return Err(Error::Corrupt("checkpoint truncated".into()));
    }
    let (head, tail) = r.split_at(buf.len());
    buf.copy_from_slice(head);
    *r = tail;
    Ok(())
}

fn get_u8(r: &mut &[u8]) -> Result<u8> {
    let mut b = [0u8; 1];
    read_exact(r, &mut b)?;
    Ok(b[0])
}

fn get_u32(r: &mut &[u8]) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b)?;
    Ok(u32::from_le_bytes(b))
}
