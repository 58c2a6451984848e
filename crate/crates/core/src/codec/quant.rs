use crate::error::{Error, Result};

/// Uniform `b`-bit code of the kept entries of one tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedTensor {
    pub shape: Vec<usize>,
    pub bits: u8,
    pub delta_min: f32,
    pub delta_max: f32,
    /// One symbol per kept entry, in row-major order.
    pub symbols: Vec<u16>,
}

impl QuantizedTensor {
    /// Step `S = (δ_max − δ_min) / 2^b`.
    pub fn scale(&self) -> f64 {
        (self.delta_max as f64 - self.delta_min as f64) / (1u64 << self.bits) as f64
    }

    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=16).contains(&self.bits) {
            return Err(Error::InvalidArgument(format!(
                "bit width {} outside 1..=16",
                self.bits
            )));
        }
        if !(self.delta_min <= self.delta_max) || !self.delta_min.is_finite() || !self.delta_max.is_finite() {
            return Err(Error::Corrupt(format!(
                "bad quantization range [{}, {}]",
                self.delta_min, self.delta_max
            )));
        }
        let top = (1u32 << self.bits) - 1;
        if self.symbols.iter().any(|s| *s as u32 > top) {
            return Err(Error::Corrupt(format!("symbol exceeds {} bits", self.bits)));
        }
        Ok(())
    }
}

fn check_bits(bits: u8) -> Result<()> {
    if (1..=16).contains(&bits) {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("bit width {bits} outside 1..=16")))
    }
}

/// Maps the kept entries of `values` to `clamp(round((δ − δ_min)/S), 0, 2^b − 1)`.
pub fn quantize_tensor(values: &[f32], shape: &[usize], mask: &[bool], bits: u8) -> Result<QuantizedTensor> {
    check_bits(bits)?;
    if mask.len() != values.len() || shape.iter().product::<usize>() != values.len() {
        return Err(Error::ShapeMismatch(format!(
            "tensor of {} entries, shape {:?}, mask of {}",
            values.len(),
            shape,
            mask.len()
        )));
    }
    let kept: Vec<f32> = values.iter().zip(mask).filter(|(_, k)| **k).map(|(v, _)| *v).collect();
    if kept.is_empty() {
        return Err(Error::InvalidArgument("no kept entries to quantize".into()));
    }
    if kept.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("tensor holds non-finite values".into()));
    }
    let lo = kept.iter().copied().fold(f32::INFINITY, f32::min);
    let hi = kept.iter().copied().fold(f32::NEG_INFINITY, f32::max);
    let mut qt = QuantizedTensor {
        shape: shape.to_vec(),
        bits,
        delta_min: lo,
        delta_max: hi,
        symbols: Vec::with_capacity(kept.len()),
    };
    let s = qt.scale();
    let top = ((1u32 << bits) - 1) as f64;
    for v in kept {
        let q = if s == 0.0 {
            0.0
        } else {
            ((v as f64 - lo as f64) / s).round().clamp(0.0, top)
        };
        qt.symbols.push(q as u16);
    }
    Ok(qt)
}

/// Inverse map `Q·S + δ_min` scattered through `mask`; pruned entries are 0.
pub fn dequantize_tensor(qt: &QuantizedTensor, mask: &[bool]) -> Result<Vec<f32>> {
    qt.validate()?;
    if mask.len() != qt.len() {
        return Err(Error::ShapeMismatch(format!(
            "mask of {} entries for a tensor of {}",
            mask.len(),
            qt.len()
        )));
    }
    let kept = mask.iter().filter(|k| **k).count();
    if kept != qt.symbols.len() {
        return Err(Error::Corrupt(format!(
            "{} symbols for {} kept entries",
            qt.symbols.len(),
            kept
        )));
    }
    let s = qt.scale();
    let mut symbols = qt.symbols.iter();
    Ok(mask
        .iter()
        .map(|k| match (k, k.then(|| symbols.next()).flatten()) {
            (true, Some(q)) => (*q as f64 * s + qt.delta_min as f64) as f32,
            _ => 0.0,
        })
        .collect())
}
