//! Two-universal Toeplitz hashing over GF(2).
//!
//! An m×L Toeplitz matrix T is defined by m+L−1 seed bits t via
//! T[i][j] = t[i + (L−1) − j]; the extractor output is T·s over GF(2).
//! The map is linear in the input for a fixed seed, which the leftover-hash
//! sizing of the caller relies on.

use crate::error::Error;
use crate::rng::CounterRng;
use crate::Result;

/// Bit string packed LSB-first into 64-bit words.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BitString {
    words: Vec<u64>,
    len: usize,
}

impl BitString {
    pub fn zeros(len: usize) -> Self {
        BitString {
            words: vec![0; len.div_ceil(64)],
            len,
        }
    }

    pub fn from_bits(bits: &[bool]) -> Self {
        let mut s = BitString::zeros(bits.len());
        for (i, &b) in bits.iter().enumerate() {
            if b {
                s.set(i, true);
            }
        }
        s
    }

    /// Deterministic pseudo-random bit string (used for extractor seeds).
    pub fn random(len: usize, seed: u64) -> Self {
        let mut rng = CounterRng::new(seed);
        let mut words = vec![0u64; len.div_ceil(64)];
        for w in words.iter_mut() {
            *w = rng.next_u64();
        }
        let mut s = BitString { words, len };
        s.mask_tail();
        s
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    #[inline]
    pub fn get(&self, i: usize) -> bool {
        (self.words[i / 64] >> (i % 64)) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, i: usize, v: bool) {
        if v {
            self.words[i / 64] |= 1 << (i % 64);
        } else {
            self.words[i / 64] &= !(1 << (i % 64));
        }
    }

    /// Append the low `width` bits of `value`, LSB first.
    pub fn push_low_bits(&mut self, value: u64, width: usize) {
        for k in 0..width {
            let i = self.len + k;
            if i / 64 == self.words.len() {
                self.words.push(0);
            }
            if (value >> k) & 1 == 1 {
                self.words[i / 64] |= 1 << (i % 64);
            }
        }
        self.len += width;
    }

    pub fn xor(&self, other: &BitString) -> BitString {
        assert_eq!(self.len, other.len);
        BitString {
            words: self
                .words
                .iter()
                .zip(&other.words)
                .map(|(a, b)| a ^ b)
                .collect(),
            len: self.len,
        }
    }

    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    fn mask_tail(&mut self) {
        let rem = self.len % 64;
        if rem != 0 {
            if let Some(last) = self.words.last_mut() {
                *last &= (1u64 << rem) - 1;
            }
        }
    }

    /// Dot product over GF(2) with a window of `seed` starting at bit
    /// `offset`, reading the window reversed (Toeplitz row layout).
    fn toeplitz_row_dot(&self, seed: &BitString, offset: usize) -> bool {
        // row i of T applied to input s: Σ_j s[j]·t[offset + (L−1) − j]
        let l = self.len;
        let mut acc = 0u32;
        for j in 0..l {
            if self.get(j) && seed.get(offset + (l - 1) - j) {
                acc ^= 1;
            }
        }
        acc == 1
    }
}

/// Hash `input` to `m` bits with the Toeplitz matrix drawn from `seed`.
pub fn toeplitz_hash(input: &BitString, m: usize, seed: &BitString) -> Result<BitString> {
    if m == 0 {
        return Ok(BitString::zeros(0));
    }
    let l = input.len();
    if seed.len() < m + l - 1 {
        return Err(Error::invalid(format!(
            "Toeplitz seed needs {} bits, got {}",
            m + l - 1,
            seed.len()
        )));
    }
    let mut out = BitString::zeros(m);
    for i in 0..m {
        out.set(i, input.toeplitz_row_dot(seed, i));
    }
    Ok(out)
}
