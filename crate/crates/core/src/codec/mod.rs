//! Model compression: LAMP pruning, per-tensor uniform quantization, one
//! canonical Huffman code over all symbols, and the `MINL` container.

mod bitstream;
mod huffman;
mod prune;
mod quant;

pub use bitstream::{bpp, deserialize, serialize, MAGIC, VERSION};
pub use huffman::{code_lengths, encode_with, huffman_decode, huffman_encode, Codebook, HuffmanEncoded, MAX_CODE_LEN};
pub use prune::{lamp_scores, prune, PruneMask};
pub use quant::{dequantize_tensor, quantize_tensor, QuantizedTensor};

use crate::error::{Error, Result};
use crate::net::{MinlModel, Model, NetKind, Tensor};

pub const DEFAULT_PRUNE_RATIO: f64 = 0.2;
pub const DEFAULT_BITS: u8 = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct CompressedModel {
    pub arch: crate::net::ArchConfig,
    pub mask: PruneMask,
    /// One entry per model tensor, weight and bias alternating.
    pub tensors: Vec<QuantizedTensor>,
    pub codebook: Codebook,
}

impl CompressedModel {
    pub fn validate(&self) -> Result<()> {
        if self.arch.kind != NetKind::MicroImage {
            return Err(Error::InvalidArgument(
                "only micro-image networks can be stored in a stream".into(),
            ));
        }
        let layers = self.arch.layers();
        if self.tensors.len() != 2 * layers.len() || self.mask.masks.len() != self.tensors.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} tensors / {} masks for {} layers",
                self.tensors.len(),
                self.mask.masks.len(),
                layers.len()
            )));
        }
        for (i, layer) in layers.iter().enumerate() {
            for (j, shape) in [layer.weight_shape(), vec![layer.bias_len()]].into_iter().enumerate() {
                let qt = &self.tensors[2 * i + j];
                if qt.shape != shape {
                    return Err(Error::ShapeMismatch(format!(
                        "tensor {} has shape {:?}, expected {:?}",
                        2 * i + j,
                        qt.shape,
                        shape
                    )));
                }
                qt.validate()?;
                let mask = &self.mask.masks[2 * i + j];
                if mask.len() != qt.len() || mask.iter().filter(|k| **k).count() != qt.symbols.len() {
                    return Err(Error::ShapeMismatch(format!(
                        "mask of tensor {} disagrees with its symbols",
                        2 * i + j
                    )));
                }
            }
        }
        let mut known: Vec<u16> = self.codebook.entries.iter().map(|e| e.0).collect();
        known.sort_unstable();
        for t in &self.tensors {
            if let Some(s) = t.symbols.iter().find(|s| known.binary_search(s).is_err()) {
                return Err(Error::InvalidArgument(format!("symbol {s} missing from codebook")));
            }
        }
        Ok(())
    }

    pub fn symbol_count(&self) -> usize {
        self.tensors.iter().map(|t| t.symbols.len()).sum()
    }

    /// Bits the symbols would take stored at their fixed width `b`.
    pub fn fixed_width_bits(&self) -> u64 {
        self.tensors.iter().map(|t| t.symbols.len() as u64 * t.bits as u64).sum()
    }

    /// Bits of the Huffman payload.
    pub fn entropy_coded_bits(&self) -> u64 {
        self.tensors
            .iter()
            .flat_map(|t| &t.symbols)
            .map(|s| {
                self.codebook
                    .entries
                    .iter()
                    .find(|e| e.0 == *s)
                    .map_or(0, |e| e.1 as u64)
            })
            .sum()
    }
}

/// Prune, quantize each tensor over its kept entries, then build one Huffman
/// code over the concatenated symbol streams.
pub fn compress_model(model: &MinlModel, ratio: f64, bits: u8) -> Result<CompressedModel> {
    model.check_shapes()?;
    model.check_finite()?;
    if model.arch.kind != NetKind::MicroImage {
        return Err(Error::InvalidArgument(
            "only micro-image networks can be compressed".into(),
        ));
    }
    let (pruned, mask) = prune(model, ratio)?;
    compress_with_mask(&pruned, &mask, bits)
}

/// Quantizes and entropy-codes `model` under an existing mask.
pub fn compress_with_mask(model: &MinlModel, mask: &PruneMask, bits: u8) -> Result<CompressedModel> {
    mask.check_congruent(model)?;
    let tensors = model
        .tensors
        .iter()
        .zip(&mask.masks)
        .map(|(t, m)| quantize_tensor(&t.data, &t.shape, m, bits))
        .collect::<Result<Vec<_>>>()?;
    let all: Vec<u16> = tensors.iter().flat_map(|t| t.symbols.iter().copied()).collect();
    let codebook = Codebook::from_lengths(code_lengths(&all)?)?;
    let cm = CompressedModel {
        arch: model.arch.clone(),
        mask: mask.clone(),
        tensors,
        codebook,
    };
    cm.validate()?;
    Ok(cm)
}

pub fn decompress_model(cm: &CompressedModel) -> Result<MinlModel> {
    cm.validate()?;
    let tensors = cm
        .tensors
        .iter()
        .zip(&cm.mask.masks)
        .map(|(qt, m)| {
            Ok(Tensor {
                shape: qt.shape.clone(),
                data: dequantize_tensor(qt, m)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let model = Model {
        arch: cm.arch.clone(),
        tensors,
    };
    model.check_shapes()?;
    Ok(model)
}
