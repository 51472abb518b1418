//! Fixed-length bit strings. Every frame on the additive channel is one of
//! these, and every codeword is written into one.

use std::fmt;
use std::ops::{BitXor, BitXorAssign};

/// A fixed-length sequence of bits backed by 64-bit words.
///
/// Bit `i` lives in word `i / 64` at position `i % 64`. Bits past `len` are
/// always zero, so equality and hashing can compare the words directly.
#[derive(Clone, PartialEq, Eq, Hash, Default)]
pub struct BitVector {
    words: Vec<u64>,
    len: usize,
}

impl BitVector {
    pub fn zeros(len: usize) -> Self {
        BitVector {
            words: vec![0; len.div_ceil(64)],
            len,
        }
    }

    pub fn from_bits<I: IntoIterator<Item = bool>>(bits: I) -> Self {
        let mut out = BitVector::zeros(0);
        for b in bits {
            out.push(b);
        }
        out
    }

    fn push(&mut self, bit: bool) {
        if self.len % 64 == 0 {
            self.words.push(0);
        }
        self.len += 1;
        self.set(self.len - 1, bit);
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn get(&self, i: usize) -> bool {
        assert!(i < self.len, "bit index {i} out of range for length {}", self.len);
        (self.words[i / 64] >> (i % 64)) & 1 == 1
    }

    pub fn set(&mut self, i: usize, bit: bool) {
        assert!(i < self.len, "bit index {i} out of range for length {}", self.len);
        let mask = 1u64 << (i % 64);
        if bit {
            self.words[i / 64] |= mask;
        } else {
            self.words[i / 64] &= !mask;
        }
    }

    pub fn is_zero(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    /// Reads `width` (≤ 64) bits starting at `offset` as an integer, least
    /// significant bit first.
    #[inline]
    pub fn read_uint(&self, offset: usize, width: usize) -> u64 {
        assert!(width <= 64);
        assert!(offset + width <= self.len, "read past end of bit vector");
        if width == 0 {
            return 0;
        }
        let word = offset / 64;
        let shift = offset % 64;
        let mut v = self.words[word] >> shift;
        if shift + width > 64 {
            v |= self.words[word + 1] << (64 - shift);
        }
        if width < 64 {
            v &= (1u64 << width) - 1;
        }
        v
    }

    /// XORs the low `width` bits of `value` into the vector at `offset`.
    pub fn xor_uint(&mut self, offset: usize, width: usize, value: u64) {
        assert!(width <= 64);
        assert!(offset + width <= self.len, "write past end of bit vector");
        if width == 0 {
            return;
        }
        let value = if width < 64 { value & ((1u64 << width) - 1) } else { value };
        let word = offset / 64;
        let shift = offset % 64;
        self.words[word] ^= value << shift;
        if shift + width > 64 {
            self.words[word + 1] ^= value >> (64 - shift);
        }
    }

    /// Overwrites `width` bits at `offset` with the low bits of `value`.
    pub fn write_uint(&mut self, offset: usize, width: usize, value: u64) {
        let current = self.read_uint(offset, width);
        self.xor_uint(offset, width, current);
        self.xor_uint(offset, width, value);
    }

    /// XORs all of `other` into this vector starting at bit `offset`.
    pub fn xor_at(&mut self, offset: usize, other: &BitVector) {
        assert!(
            offset + other.len <= self.len,
            "xor of {} bits at offset {offset} overflows length {}",
            other.len,
            self.len
        );
        if offset % 64 == 0 {
            let base = offset / 64;
            for (i, w) in other.words.iter().enumerate() {
                self.words[base + i] ^= w;
            }
            return;
        }
        let mut done = 0;
        while done < other.len {
            let width = (other.len - done).min(64);
            let chunk = other.read_uint(done, width);
            self.xor_uint(offset + done, width, chunk);
            done += width;
        }
    }

    /// Copies out `width` bits starting at `offset`.
    pub fn slice(&self, offset: usize, width: usize) -> BitVector {
        assert!(offset + width <= self.len, "slice past end of bit vector");
        let mut out = BitVector::zeros(width);
        if offset % 64 == 0 {
            let base = offset / 64;
            let n = out.words.len();
            out.words.copy_from_slice(&self.words[base..base + n]);
            out.clear_tail();
            return out;
        }
        let mut done = 0;
        while done < width {
            let w = (width - done).min(64);
            out.xor_uint(done, w, self.read_uint(offset + done, w));
            done += w;
        }
        out
    }

    /// True when the `width` bits at `offset` are all zero.
    pub fn range_is_zero(&self, offset: usize, width: usize) -> bool {
        assert!(offset + width <= self.len, "range past end of bit vector");
        let end = offset + width;
        let head = (offset.next_multiple_of(64)).min(end);
        if head > offset && self.read_uint(offset, head - offset) != 0 {
            return false;
        }
        let full_end = end / 64 * 64;
        if full_end > head && self.words[head / 64..full_end / 64].iter().any(|&w| w != 0) {
            return false;
        }
        let tail = full_end.max(head);
        tail >= end || self.read_uint(tail, end - tail) == 0
    }

    /// True when the `width`-bit windows at offsets `a` and `b` are equal.
    pub fn ranges_equal(&self, a: usize, b: usize, width: usize) -> bool {
        let mut done = 0;
        while done < width {
            let w = (width - done).min(64);
            if self.read_uint(a + done, w) != self.read_uint(b + done, w) {
                return false;
            }
            done += w;
        }
        true
    }

    fn clear_tail(&mut self) {
        let rem = self.len % 64;
        if rem != 0 {
            if let Some(last) = self.words.last_mut() {
                *last &= (1u64 << rem) - 1;
            }
        }
    }

    /// Lowercase hex, little-endian by byte: byte `j` holds bits `8j..8j+8`.
    pub fn to_hex(&self) -> String {
        let nbytes = self.len.div_ceil(8);
        let bytes: Vec<u8> = (0..nbytes)
            .map(|j| (self.words[j / 8] >> ((j % 8) * 8)) as u8)
            .collect();
        hex::encode(bytes)
    }

    pub fn from_hex(s: &str, len: usize) -> Result<Self, hex::FromHexError> {
        let bytes = hex::decode(s)?;
        let mut out = BitVector::zeros(len);
        for (j, b) in bytes.iter().enumerate() {
            let lo = j * 8;
            if lo >= len {
                break;
            }
            let w = (len - lo).min(8);
            out.xor_uint(lo, w, u64::from(*b));
        }
        Ok(out)
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }
}

impl fmt::Debug for BitVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BitVector({}b:{})", self.len, self.to_hex())
    }
}

impl BitXorAssign<&BitVector> for BitVector {
    fn bitxor_assign(&mut self, rhs: &BitVector) {
        assert_eq!(self.len, rhs.len, "xor of bit vectors with different lengths");
        for (a, b) in self.words.iter_mut().zip(&rhs.words) {
            *a ^= b;
        }
    }
}

impl BitXor<&BitVector> for &BitVector {
    type Output = BitVector;

    fn bitxor(self, rhs: &BitVector) -> BitVector {
        let mut out = self.clone();
        out ^= rhs;
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn xor_with_self_is_zero() {
        let v = BitVector::from_bits([true, false, true, true, false]);
        assert!((&v ^ &v).is_zero());
        assert_eq!(&v ^ &BitVector::zeros(5), v);
    }

    #[test]
    fn uint_read_write_across_word_boundary() {
        let mut v = BitVector::zeros(200);
        v.write_uint(60, 10, 0b1011001110);
        assert_eq!(v.read_uint(60, 10), 0b1011001110);
        assert_eq!(v.count_ones(), 6);
        v.write_uint(60, 10, 0);
        assert!(v.is_zero());
    }

    #[test]
    fn hex_is_byte_little_endian() {
        let mut v = BitVector::zeros(12);
        v.set(0, true);
        v.set(9, true);
        assert_eq!(v.to_hex(), "0102");
        assert_eq!(BitVector::from_hex("0102", 12).unwrap(), v);
    }

    #[test]
    #[should_panic(expected = "different lengths")]
    fn xor_length_mismatch_panics() {
        let mut a = BitVector::zeros(3);
        a ^= &BitVector::zeros(4);
    }

    proptest! {
        #[test]
        fn slice_of_xor_at_recovers_payload(
            payload in proptest::collection::vec(any::<bool>(), 1..300),
            offset in 0usize..130,
        ) {
            let p = BitVector::from_bits(payload.clone());
            let mut frame = BitVector::zeros(offset + p.len() + 7);
            frame.xor_at(offset, &p);
            prop_assert_eq!(frame.slice(offset, p.len()), p.clone());
            prop_assert_eq!(frame.count_ones(), p.count_ones());
            frame.xor_at(offset, &p);
            prop_assert!(frame.is_zero());
        }
    }
}
