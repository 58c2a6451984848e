use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap};

use crate::error::{Error, Result};

/// Longest code length the decoder accepts.
pub const MAX_CODE_LEN: u8 = 63;

/// Canonical prefix code given by `(symbol, length)` pairs in canonical
/// order: ascending length, then ascending symbol.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Codebook {
    pub entries: Vec<(u16, u8)>,
}

impl Codebook {
    /// Canonicalises arbitrary `(symbol, length)` pairs.
    pub fn from_lengths(mut entries: Vec<(u16, u8)>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::Corrupt("empty codebook".into()));
        }
        entries.sort_by_key(|&(s, l)| (l, s));
        let mut syms: Vec<u16> = entries.iter().map(|e| e.0).collect();
        syms.sort_unstable();
        if syms.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Corrupt("duplicate symbol in codebook".into()));
        }
        if entries.iter().any(|&(_, l)| l == 0 || l > MAX_CODE_LEN) {
            return Err(Error::Corrupt("code length out of range".into()));
        }
        // Kraft sum must not exceed 1 for a prefix code to exist.
        let kraft: u128 = entries
            .iter()
            .map(|&(_, l)| 1u128 << (MAX_CODE_LEN - l))
            .sum();
        if kraft > 1u128 << MAX_CODE_LEN {
            return Err(Error::Corrupt("code lengths violate the Kraft inequality".into()));
        }
        Ok(Self { entries })
    }

    /// `(symbol, code, length)` triples, codes assigned canonically.
    pub fn codes(&self) -> Vec<(u16, u64, u8)> {
        let mut out = Vec::with_capacity(self.entries.len());
        let mut code = 0u64;
        let mut prev_len = self.entries[0].1;
        for (i, &(sym, len)) in self.entries.iter().enumerate() {
            if i > 0 {
                code = (code + 1) << (len - prev_len);
            }
            prev_len = len;
            out.push((sym, code, len));
        }
        out
    }

    fn lookup(&self) -> BTreeMap<u16, (u64, u8)> {
        self.codes().into_iter().map(|(s, c, l)| (s, (c, l))).collect()
    }
}

/// Output of [`huffman_encode`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HuffmanEncoded {
    pub codebook: Codebook,
    /// Codes concatenated MSB first, final byte zero-padded.
    pub payload: Vec<u8>,
    pub bit_len: u64,
    pub count: usize,
}

/// Huffman code lengths from symbol frequencies. Merges always take the two
/// lightest nodes, ties going to the node holding the smaller symbol.
pub fn code_lengths(symbols: &[u16]) -> Result<Vec<(u16, u8)>> {
    if symbols.is_empty() {
        return Err(Error::InvalidArgument("cannot entropy-code an empty sequence".into()));
    }
    let mut freq: BTreeMap<u16, u64> = BTreeMap::new();
    for s in symbols {
        *freq.entry(*s).or_default() += 1;
    }
    if freq.len() == 1 {
        return Ok(vec![(*freq.keys().next().unwrap(), 1)]);
    }
    // Node id < alphabet: leaf; otherwise internal. Heap key (weight, min symbol).
    let leaves: Vec<u16> = freq.keys().copied().collect();
    let mut parent: Vec<usize> = vec![usize::MAX; leaves.len()];
    let mut heap = BinaryHeap::new();
    for (i, (&s, &f)) in freq.iter().enumerate() {
        heap.push(Reverse((f, s, i)));
    }
    while heap.len() > 1 {
        let Reverse((fa, sa, a)) = heap.pop().unwrap();
        let Reverse((fb, sb, b)) = heap.pop().unwrap();
        let id = parent.len();
        parent.push(usize::MAX);
        parent[a] = id;
        parent[b] = id;
        heap.push(Reverse((fa + fb, sa.min(sb), id)));
    }
    let mut out = Vec::with_capacity(leaves.len());
    for (i, &s) in leaves.iter().enumerate() {
        let mut depth = 0u32;
        let mut n = i;
        while parent[n] != usize::MAX {
            n = parent[n];
            depth += 1;
        }
        if depth > MAX_CODE_LEN as u32 {
            return Err(Error::InvalidArgument(format!(
                "Huffman code of length {depth} exceeds {MAX_CODE_LEN}"
            )));
        }
        out.push((s, depth as u8));
    }
    Ok(out)
}

struct BitWriter {
    bytes: Vec<u8>,
    bits: u64,
}

impl BitWriter {
    fn push(&mut self, code: u64, len: u8) {
        for i in (0..len).rev() {
            if self.bits % 8 == 0 {
                self.bytes.push(0);
            }
            if (code >> i) & 1 == 1 {
                *self.bytes.last_mut().unwrap() |= 0x80 >> (self.bits % 8);
            }
            self.bits += 1;
        }
    }
}

/// Encodes `symbols` with an existing codebook.
pub fn encode_with(codebook: &Codebook, symbols: &[u16]) -> Result<(Vec<u8>, u64)> {
    let table = codebook.lookup();
    let mut w = BitWriter {
        bytes: Vec::new(),
        bits: 0,
    };
    for s in symbols {
        let &(code, len) = table
            .get(s)
            .ok_or_else(|| Error::InvalidArgument(format!("symbol {s} missing from codebook")))?;
        w.push(code, len);
    }
    Ok((w.bytes, w.bits))
}

pub fn huffman_encode(symbols: &[u16]) -> Result<HuffmanEncoded> {
    let codebook = Codebook::from_lengths(code_lengths(symbols)?)?;
    let (payload, bit_len) = encode_with(&codebook, symbols)?;
    Ok(HuffmanEncoded {
        codebook,
        payload,
        bit_len,
        count: symbols.len(),
    })
}

/// Decodes exactly `count` symbols from the first `bit_len` bits of
/// `payload`. Running out of bits or hitting an unassigned prefix is an error.
pub fn huffman_decode(codebook: &Codebook, payload: &[u8], bit_len: u64, count: usize) -> Result<Vec<u16>> {
    if bit_len > payload.len() as u64 * 8 {
        return Err(Error::Corrupt(format!(
            "payload holds {} bits, header claims {bit_len}",
            payload.len() * 8
        )));
    }
    let codes = codebook.codes();
    let max_len = codes.last().map(|c| c.2).unwrap_or(0);
    // Canonical decoding tables: first code and first entry index per length.
    let mut first_code = vec![0u64; max_len as usize + 2];
    let mut first_index = vec![0usize; max_len as usize + 2];
    let mut n_of_len = vec![0usize; max_len as usize + 2];
    for (i, &(_, c, l)) in codes.iter().enumerate().rev() {
        first_code[l as usize] = c;
        first_index[l as usize] = i;
        n_of_len[l as usize] += 1;
    }
    let mut out = Vec::with_capacity(count);
    let mut pos = 0u64;
    while out.len() < count {
        let mut code = 0u64;
        let mut len = 0usize;
        loop {
            if pos >= bit_len {
                return Err(Error::Corrupt(format!(
                    "payload ended after {} of {count} symbols",
                    out.len()
                )));
            }
            let bit = (payload[(pos / 8) as usize] >> (7 - pos % 8)) & 1;
            pos += 1;
            code = (code << 1) | bit as u64;
            len += 1;
            if len > max_len as usize {
                return Err(Error::Corrupt("invalid prefix in payload".into()));
            }
            if n_of_len[len] > 0 && code >= first_code[len] && code - first_code[len] < n_of_len[len] as u64 {
                out.push(codes[first_index[len] + (code - first_code[len]) as usize].0);
                break;
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn two_symbol_example() {
        let enc = huffman_encode(&[0, 0, 0, 1]).unwrap();
        assert_eq!(enc.codebook.entries, vec![(0, 1), (1, 1)]);
        assert_eq!(enc.bit_len, 4);
        assert_eq!(enc.payload, vec![0b0001_0000]);
    }

    #[test]
    fn single_symbol_gets_one_bit() {
        let enc = huffman_encode(&[7, 7, 7, 7]).unwrap();
        assert_eq!(enc.codebook.entries, vec![(7, 1)]);
        assert_eq!(enc.bit_len, 4);
        assert_eq!(huffman_decode(&enc.codebook, &enc.payload, 4, 4).unwrap(), vec![7; 4]);
    }

    #[test]
    fn empty_input_rejected() {
        assert!(huffman_encode(&[]).is_err());
    }

    #[test]
    fn known_lengths() {
        // Frequencies 5,2,1,1: lengths 1,2,3,3.
        let syms = [3, 3, 3, 3, 3, 9, 9, 1, 4];
        let enc = huffman_encode(&syms).unwrap();
        assert_eq!(enc.codebook.entries, vec![(3, 1), (9, 2), (1, 3), (4, 3)]);
        let codes = enc.codebook.codes();
        assert_eq!(codes.iter().map(|c| c.1).collect::<Vec<_>>(), vec![0b0, 0b10, 0b110, 0b111]);
    }

    #[test]
    fn truncation_and_padding() {
        let syms = [1u16, 2, 3, 1, 1, 2, 5];
        let enc = huffman_encode(&syms).unwrap();
        assert!(huffman_decode(&enc.codebook, &enc.payload, enc.bit_len - 1, syms.len()).is_err());
        assert!(huffman_decode(&enc.codebook, &enc.payload[..enc.payload.len() - 1], enc.bit_len, syms.len()).is_err());
        // Padding bits after the last symbol are ignored.
        let mut padded = enc.payload.clone();
        padded.push(0xff);
        let dec = huffman_decode(&enc.codebook, &padded, enc.bit_len + 8, syms.len()).unwrap();
        assert_eq!(dec, syms);
        let fewer = huffman_decode(&enc.codebook, &enc.payload, enc.bit_len, 3).unwrap();
        assert_eq!(fewer, &syms[..3]);
    }

    #[test]
    fn invalid_prefix_detected() {
        // Incomplete code: lengths {1, 2}; the prefix 11 is unassigned.
        let cb = Codebook::from_lengths(vec![(0, 1), (1, 2)]).unwrap();
        assert!(huffman_decode(&cb, &[0b1100_0000], 2, 1).is_err());
        assert!(Codebook::from_lengths(vec![(0, 1), (1, 1), (2, 1)]).is_err());
        assert!(Codebook::from_lengths(vec![(0, 1), (0, 2)]).is_err());
    }

    proptest! {
        #[test]
        fn lossless_and_prefix_free(syms in proptest::collection::vec(0u16..40, 1..300)) {
            let enc = huffman_encode(&syms).unwrap();
            let dec = huffman_decode(&enc.codebook, &enc.payload, enc.bit_len, syms.len()).unwrap();
            prop_assert_eq!(&dec, &syms);
            let codes = enc.codebook.codes();
            for a in &codes {
                for b in &codes {
                    if a.0 != b.0 && a.2 <= b.2 {
                        prop_assert_ne!(b.1 >> (b.2 - a.2), a.1);
                    }
                }
            }
            let lo = codes.iter().map(|c| c.2).min().unwrap() as u64;
            let hi = codes.iter().map(|c| c.2).max().unwrap() as u64;
            let n = syms.len() as u64;
            prop_assert!(enc.bit_len >= n * lo && enc.bit_len <= n * hi);
            prop_assert_eq!(enc.payload.len() as u64, enc.bit_len.div_ceil(8));
        }
    }
}
