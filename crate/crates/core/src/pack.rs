//! Packed coordinate vectors: the closure working set lives here.
//!
//! Vectors over a 2-element carrier are bit-packed into words and basic
//! operations are applied with bitwise arithmetic; larger carriers fall back
//! to one byte per coordinate.

use crate::algebra::Operation;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub(crate) enum PackedVec {
    Bits { len: usize, words: Vec<u64> },
    Bytes(Vec<u8>),
}

impl PackedVec {
    pub(crate) fn pack(values: &[u8], size: usize) -> PackedVec {
        if size <= 2 {
            let len = values.len();
            let mut words = vec![0u64; len.div_ceil(64)];
            for (i, &v) in values.iter().enumerate() {
                if v != 0 {
                    words[i / 64] |= 1 << (i % 64);
                }
            }
            PackedVec::Bits { len, words }
        } else {
            PackedVec::Bytes(values.to_vec())
        }
    }

    pub(crate) fn len(&self) -> usize {
        match self {
            PackedVec::Bits { len, .. } => *len,
            PackedVec::Bytes(b) => b.len(),
        }
    }

    #[inline]
    pub(crate) fn get(&self, i: usize) -> u8 {
        match self {
            PackedVec::Bits { words, .. } => (words[i / 64] >> (i % 64) & 1) as u8,
            PackedVec::Bytes(b) => b[i],
        }
    }

    pub(crate) fn unpack(&self) -> Vec<u8> {
        (0..self.len()).map(|i| self.get(i)).collect()
    }

    /// True iff the vector splits into `blocks` equal consecutive blocks.
    pub(crate) fn blocks_equal(&self, blocks: usize) -> bool {
        let len = self.len();
        debug_assert_eq!(len % blocks, 0);
        let block = len / blocks;
        (0..block).all(|i| (1..blocks).all(|b| self.get(b * block + i) == self.get(i)))
    }
}

/// Componentwise application of a basic operation to packed vectors.
pub(crate) fn apply_op(op: &Operation, size: usize, args: &[&PackedVec], len: usize) -> PackedVec {
    if size <= 2 && op.arity <= 6 {
        let words_len = len.div_ceil(64);
        let mut out = vec![0u64; words_len];
        for w in 0..words_len {
            let mut acc = 0u64;
            for (pattern, &value) in op.table.iter().enumerate() {
                if value == 0 {
                    continue;
                }
                let mut t = !0u64;
                for (i, arg) in args.iter().enumerate() {
                    let word = match arg {
                        PackedVec::Bits { words, .. } => words[w],
                        PackedVec::Bytes(_) => unreachable!("binary carrier is bit-packed"),
                    };
                    let bit = pattern >> (op.arity - 1 - i) & 1;
                    t &= if bit == 1 { word } else { !word };
                }
                acc |= t;
            }
            out[w] = acc;
        }
        if len % 64 != 0 {
            if let Some(last) = out.last_mut() {
                *last &= (1u64 << (len % 64)) - 1;
            }
        }
        PackedVec::Bits {
            len,
            words: out,
        }
    } else {
        let mut out = vec![0u8; len];
        for (i, slot) in out.iter_mut().enumerate() {
            let idx = args
                .iter()
                .fold(0usize, |acc, a| acc * size + a.get(i) as usize);
            *slot = op.table[idx] as u8;
        }
        PackedVec::pack(&out, size)
    }
}
