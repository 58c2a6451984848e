use super::huffman::{encode_with, huffman_decode, Codebook};
use super::quant::QuantizedTensor;
use super::{CompressedModel, PruneMask};
use crate::error::{Error, Result};
use crate::lightfield::SpatialDims;
use crate::net::{ArchConfig, NetKind};

pub const MAGIC: [u8; 4] = *b"MINL";
pub const VERSION: u8 = 1;

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u16(&mut self, v: u16) {
        self.0.extend(v.to_le_bytes());
    }
    fn u32(&mut self, v: u32) {
        self.0.extend(v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend(v.to_le_bytes());
    }
    fn f32(&mut self, v: f32) {
        self.0.extend(v.to_le_bytes());
    }
}

fn narrow<T: TryFrom<usize>>(v: usize, what: &str) -> Result<T> {
    T::try_from(v).map_err(|_| Error::InvalidArgument(format!("{what} {v} does not fit the bitstream field")))
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::Corrupt(format!(
                "stream truncated at byte {} (need {n} more)",
                self.pos
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

fn pack_mask(mask: &[bool]) -> Vec<u8> {
    let mut out = vec![0u8; mask.len().div_ceil(8)];
    for (i, k) in mask.iter().enumerate() {
        if *k {
            out[i / 8] |= 0x80 >> (i % 8);
        }
    }
    out
}

fn unpack_mask(bytes: &[u8], n: usize) -> Vec<bool> {
    (0..n).map(|i| bytes[i / 8] & (0x80 >> (i % 8)) != 0).collect()
}

/// Writes the container: magic, version, architecture, per-tensor headers
/// and masks, codebook, payload and a trailing CRC-32 of everything before it.
pub fn serialize(cm: &CompressedModel) -> Result<Vec<u8>> {
    cm.validate()?;
    let arch = &cm.arch;
    let mut w = Writer(Vec::new());
    w.0.extend(MAGIC);
    w.u8(VERSION);
    w.u8(narrow(arch.levels, "L")?);
    w.u8(narrow(arch.mlp_widths.len(), "hidden layer count")?);
    for &width in &arch.mlp_widths {
        w.u16(narrow(width, "width")?);
    }
    w.u16(narrow(arch.seed_channels, "C0")?);
    w.u16(narrow(arch.conv_channels.0, "C1")?);
    w.u16(narrow(arch.conv_channels.1, "C2")?);
    w.f32(arch.omega);
    w.u8(narrow(arch.output_side, "A")?);
    w.u16(narrow(cm.tensors.len(), "tensor count")?);
    for (qt, mask) in cm.tensors.iter().zip(&cm.mask.masks) {
        w.u8(narrow(qt.shape.len(), "rank")?);
        for &d in &qt.shape {
            w.u32(narrow(d, "dimension")?);
        }
        w.u8(qt.bits);
        w.f32(qt.delta_min);
        w.f32(qt.delta_max);
        w.u32(narrow(qt.symbols.len(), "kept count")?);
        w.0.extend(pack_mask(mask));
    }
    w.u16(narrow(cm.codebook.entries.len(), "alphabet size")?);
    for &(sym, len) in &cm.codebook.entries {
        w.u16(sym);
        w.u8(len);
    }
    let symbols: Vec<u16> = cm.tensors.iter().flat_map(|t| t.symbols.iter().copied()).collect();
    let (payload, bits) = encode_with(&cm.codebook, &symbols)?;
    w.u64(bits);
    w.0.extend(payload);
    let crc = crc32fast::hash(&w.0);
    w.u32(crc);
    Ok(w.0)
}

pub fn deserialize(bytes: &[u8]) -> Result<CompressedModel> {
    if bytes.len() < MAGIC.len() || bytes[..4] != MAGIC {
        let mut found = [0u8; 4];
        let n = bytes.len().min(4);
        found[..n].copy_from_slice(&bytes[..n]);
        return Err(Error::BadMagic {
            expected: MAGIC,
            found,
        });
    }
    if bytes.len() < 9 {
        return Err(Error::Corrupt("stream too short".into()));
    }
    let (body, tail) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(tail.try_into().unwrap());
    let version = body[4];
    if version != VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let computed = crc32fast::hash(body);
    if stored != computed {
        return Err(Error::CrcMismatch { stored, computed });
    }
    let mut r = Reader { bytes: body, pos: 5 };
    let levels = r.u8()? as usize;
    let n_widths = r.u8()? as usize;
    let mut mlp_widths = Vec::with_capacity(n_widths);
    for _ in 0..n_widths {
        mlp_widths.push(r.u16()? as usize);
    }
    let seed_channels = r.u16()? as usize;
    let c1 = r.u16()? as usize;
    let c2 = r.u16()? as usize;
    let omega = r.f32()?;
    let output_side = r.u8()? as usize;
    let arch = ArchConfig {
        kind: NetKind::MicroImage,
        levels,
        mlp_widths,
        seed_channels,
        conv_channels: (c1, c2),
        omega,
        output_side,
    };
    arch.validate().map_err(|e| Error::Corrupt(format!("bad architecture block: {e}")))?;
    let n_tensors = r.u16()? as usize;
    let mut tensors = Vec::with_capacity(n_tensors);
    let mut masks = Vec::with_capacity(n_tensors);
    let mut kept_counts = Vec::with_capacity(n_tensors);
    for _ in 0..n_tensors {
        let rank = r.u8()? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(r.u32()? as usize);
        }
        let size = shape
            .iter()
            .try_fold(1usize, |a, d| a.checked_mul(*d))
            .filter(|s| *s <= body.len() * 8)
            .ok_or_else(|| Error::Corrupt(format!("tensor shape {shape:?} too large")))?;
        let bits = r.u8()?;
        let delta_min = r.f32()?;
        let delta_max = r.f32()?;
        let kept = r.u32()? as usize;
        let mask = unpack_mask(r.take(size.div_ceil(8))?, size);
        if mask.iter().filter(|k| **k).count() != kept {
            return Err(Error::Corrupt("mask popcount disagrees with kept count".into()));
        }
        kept_counts.push(kept);
        masks.push(mask);
        tensors.push(QuantizedTensor {
            shape,
            bits,
            delta_min,
            delta_max,
            symbols: Vec::new(),
        });
    }
    let alphabet = r.u16()? as usize;
    let mut entries = Vec::with_capacity(alphabet);
    for _ in 0..alphabet {
        let sym = r.u16()?;
        let len = r.u8()?;
        entries.push((sym, len));
    }
    let codebook = Codebook::from_lengths(entries)?;
    let bits = r.u64()?;
    let payload_len = usize::try_from(bits.div_ceil(8))
        .map_err(|_| Error::Corrupt("payload length overflow".into()))?;
    let payload = r.take(payload_len)?;
    if r.pos != body.len() {
        return Err(Error::Corrupt(format!(
            "{} trailing bytes after payload",
            body.len() - r.pos
        )));
    }
    let total: usize = kept_counts.iter().sum();
    let symbols = huffman_decode(&codebook, payload, bits, total)?;
    let mut it = symbols.into_iter();
    for (t, k) in tensors.iter_mut().zip(kept_counts) {
        t.symbols = it.by_ref().take(k).collect();
    }
    let cm = CompressedModel {
        arch,
        mask: PruneMask { masks },
        tensors,
        codebook,
    };
    cm.validate().map_err(|e| Error::Corrupt(e.to_string()))?;
    Ok(cm)
}

/// Bits per pixel of a stream of `bytes` describing an `S_x × S_y` grid of
/// `A × A` micro-images.
pub fn bpp(bytes: usize, dims: SpatialDims, side: usize) -> Result<f64> {
    let pixels = dims.count() * side * side;
    if pixels == 0 {
        return Err(Error::Dimension("bpp of an empty light field".into()));
    }
    Ok(8.0 * bytes as f64 / pixels as f64)
}
