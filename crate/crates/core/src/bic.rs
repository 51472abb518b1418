//! Bounded-information codes: k' independent blocks, each holding the base
//! codeword with probability 1/2. Senders of the same value no longer cancel
//! everywhere, so decoding depends on the number of distinct values rather
//! than the number of senders.

use rand::RngCore;

use crate::bcc::{BccCode, DecodeFailure};
use crate::bits::BitVector;
use crate::error::CodecError;

/// Default block-count constant.
pub const DEFAULT_C: f64 = 4.0;

#[derive(Debug, Clone)]
pub struct BicCode {
    base: BccCode,
    blocks: usize,
}

/// A freshly drawn codeword; the mask stays with the sender.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BicCodeword {
    pub word: BitVector,
    pub mask: Vec<bool>,
}

/// Union of the per-block decodes plus the number of blocks that failed.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct BicDecode {
    pub values: Vec<u64>,
    pub failed_blocks: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OverflowVerdict {
    pub detected: bool,
    /// Meaningful only when `detected` is false.
    pub values: Vec<u64>,
}

/// ⌈c·log2 n⌉, at least one.
pub fn block_count(n: usize, c: f64) -> usize {
    let l = (n.max(2) as f64).log2();
    ((c * l).ceil() as usize).max(1)
}

impl BicCode {
    /// A code with ⌈c·log2 n⌉ blocks.
    pub fn new(base: BccCode, n: usize, c: f64) -> Self {
        Self::with_blocks(base, block_count(n, c))
    }

    pub fn with_blocks(base: BccCode, blocks: usize) -> Self {
        assert!(blocks > 0, "a BIC code needs at least one block");
        BicCode { base, blocks }
    }

    pub fn base(&self) -> &BccCode {
        &self.base
    }

    pub fn num_blocks(&self) -> usize {
        self.blocks
    }

    pub fn block_len(&self) -> usize {
        self.base.codeword_bits()
    }

    pub fn total_len(&self) -> usize {
        self.blocks * self.block_len()
    }

    /// Draws the block mask from 64-bit words of `coins`, bit i of the stream
    /// deciding block i.
    fn draw_mask<R: RngCore + ?Sized>(&self, coins: &mut R) -> Vec<bool> {
        let mut mask = Vec::with_capacity(self.blocks);
        let mut word = 0u64;
        for i in 0..self.blocks {
            if i % 64 == 0 {
                word = coins.next_u64();
            }
            mask.push(word >> (i % 64) & 1 == 1);
        }
        mask
    }

    pub fn encode<R: RngCore + ?Sized>(
        &self,
        x: u64,
        coins: &mut R,
    ) -> Result<BicCodeword, CodecError> {
        let mut word = BitVector::zeros(self.total_len());
        let mask = self.xor_encode_into(x, coins, &mut word, 0)?;
        Ok(BicCodeword { word, mask })
    }

    /// XORs a fresh codeword of `x` into `frame` at `offset` and returns the
    /// mask that was used.
    pub fn xor_encode_into<R: RngCore + ?Sized>(
        &self,
        x: u64,
        coins: &mut R,
        frame: &mut BitVector,
        offset: usize,
    ) -> Result<Vec<bool>, CodecError> {
        let mask = self.draw_mask(coins);
        let block = self.base.encode(x)?;
        for (i, &on) in mask.iter().enumerate() {
            if on {
                frame.xor_at(offset + i * self.block_len(), &block);
            }
        }
        Ok(mask)
    }

    pub fn decode(&self, received: &BitVector) -> Result<Vec<u64>, CodecError> {
        self.check_len(received)?;
        Ok(self.decode_at(received, 0).values)
    }

    fn check_len(&self, received: &BitVector) -> Result<(), CodecError> {
        if received.len() != self.total_len() {
            return Err(CodecError::WidthMismatch {
                expected: self.total_len(),
                got: received.len(),
            });
        }
        Ok(())
    }

    /// Decodes every block of the window at `offset`, skipping failed blocks.
    pub fn decode_at(&self, frame: &BitVector, offset: usize) -> BicDecode {
        let mut out = BicDecode::default();
        self.for_each_block(frame, offset, |res| {
            match res {
                Ok(vals) => out.values.extend_from_slice(vals),
                Err(_) => out.failed_blocks += 1,
            }
            true
        });
        out.values.sort_unstable();
        out.values.dedup();
        out
    }

    /// Runs `visit` over the decode of each nonzero block; stops when it
    /// returns false. With few values in play the blocks take only a handful
    /// of distinct contents, so the last few decodes are kept and reused.
    fn for_each_block<F>(&self, frame: &BitVector, offset: usize, mut visit: F)
    where
        F: FnMut(&Result<Vec<u64>, DecodeFailure>) -> bool,
    {
        const RECENT: usize = 4;
        let len = self.block_len();
        let mut recent: Vec<(usize, Result<Vec<u64>, DecodeFailure>)> = Vec::with_capacity(RECENT);
        let mut next = 0;
        for i in 0..self.blocks {
            let start = offset + i * len;
            if frame.range_is_zero(start, len) {
                continue;
            }
            let hit = recent.iter().position(|(p, _)| frame.ranges_equal(*p, start, len));
            let slot = match hit {
                Some(j) => j,
                None => {
                    let res = self.base.decode_at(frame, start);
                    if recent.len() < RECENT {
                        recent.push((start, res));
                        recent.len() - 1
                    } else {
                        let j = next;
                        next = (next + 1) % RECENT;
                        recent[j] = (start, res);
                        j
                    }
                }
            };
            if !visit(&recent[slot].1) {
                return;
            }
        }
    }

    /// Overflow detection for information bound `k`; the base code must
    /// decode up to 2k values.
    pub fn overflow_detect(
        &self,
        received: &BitVector,
        k: usize,
    ) -> Result<OverflowVerdict, CodecError> {
        self.check_len(received)?;
        Ok(self.overflow_detect_at(received, 0, k))
    }

    pub fn overflow_detect_at(&self, frame: &BitVector, offset: usize, k: usize) -> OverflowVerdict {
        assert!(
            self.base.bound() >= 2 * k,
            "overflow detection for bound {k} needs a base code of bound {}",
            2 * k
        );
        let mut values = Vec::new();
        let mut detected = false;
        self.for_each_block(frame, offset, |res| {
            match res {
                Ok(vals) if vals.len() <= k => {
                    values.extend_from_slice(vals);
                    values.sort_unstable();
                    values.dedup();
                    detected = values.len() > k;
                }
                _ => detected = true,
            }
            !detected
        });
        if detected {
            values.clear();
        }
        OverflowVerdict { detected, values }
    }
}

/// How one field of a frame is encoded.
#[derive(Debug, Clone)]
pub enum FieldKind {
    Bic(BicCode),
    Bcc(BccCode),
    Raw(usize),
}

impl FieldKind {
    pub fn width(&self) -> usize {
        match self {
            FieldKind::Bic(c) => c.total_len(),
            FieldKind::Bcc(c) => c.codeword_bits(),
            FieldKind::Raw(w) => *w,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Field {
    pub name: String,
    pub kind: FieldKind,
    pub offset: usize,
}

/// Contiguous, disjoint fields laid out in declaration order.
#[derive(Debug, Clone, Default)]
pub struct MessageLayout {
    fields: Vec<Field>,
    width: usize,
}

impl MessageLayout {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a field and returns its index.
    pub fn push(&mut self, name: impl Into<String>, kind: FieldKind) -> usize {
        let w = kind.width();
        self.fields.push(Field {
            name: name.into(),
            kind,
            offset: self.width,
        });
        self.width += w;
        self.fields.len() - 1
    }

    pub fn with(mut self, name: impl Into<String>, kind: FieldKind) -> Self {
        self.push(name, kind);
        self
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn fields(&self) -> &[Field] {
        &self.fields
    }

    pub fn field(&self, idx: usize) -> &Field {
        &self.fields[idx]
    }

    pub fn index_of(&self, name: &str) -> Result<usize, CodecError> {
        self.fields
            .iter()
            .position(|f| f.name == name)
            .ok_or_else(|| CodecError::UnknownField(name.to_string()))
    }

    /// An all-zero frame of this layout's width.
    pub fn empty_frame(&self) -> BitVector {
        BitVector::zeros(self.width)
    }

    /// Checks the layout fits in a frame of `frame_width` bits.
    pub fn check_fits(&self, frame_width: usize) -> Result<(), CodecError> {
        if self.width > frame_width {
            return Err(CodecError::LayoutOverflow {
                needed: self.width,
                width: frame_width,
            });
        }
        Ok(())
    }

    /// XORs a fresh BIC codeword of `x` into field `idx`.
    pub fn put_bic<R: RngCore + ?Sized>(
        &self,
        frame: &mut BitVector,
        idx: usize,
        x: u64,
        coins: &mut R,
    ) -> Result<(), CodecError> {
        let f = &self.fields[idx];
        match &f.kind {
            FieldKind::Bic(c) => c.xor_encode_into(x, coins, frame, f.offset).map(|_| ()),
            _ => panic!("field {:?} is not a BIC field", f.name),
        }
    }

    /// XORs the BCC codeword of `x` into field `idx`.
    pub fn put_bcc(&self, frame: &mut BitVector, idx: usize, x: u64) -> Result<(), CodecError> {
        let f = &self.fields[idx];
        match &f.kind {
            FieldKind::Bcc(c) => c.xor_encode_into(x, frame, f.offset),
            _ => panic!("field {:?} is not a BCC field", f.name),
        }
    }

    /// XORs raw bits into field `idx`.
    pub fn put_raw(&self, frame: &mut BitVector, idx: usize, bits: &BitVector) -> Result<(), CodecError> {
        let f = &self.fields[idx];
        if bits.len() != f.kind.width() {
            return Err(CodecError::WidthMismatch {
                expected: f.kind.width(),
                got: bits.len(),
            });
        }
        frame.xor_at(f.offset, bits);
        Ok(())
    }

    /// Splits a frame into one bit vector per field.
    pub fn unpack(&self, frame: &BitVector) -> Result<Vec<BitVector>, CodecError> {
        self.check_fits(frame.len())?;
        Ok(self
            .fields
            .iter()
            .map(|f| frame.slice(f.offset, f.kind.width()))
            .collect())
    }

    pub fn is_field_zero(&self, frame: &BitVector, idx: usize) -> bool {
        let f = &self.fields[idx];
        frame.range_is_zero(f.offset, f.kind.width())
    }

    pub fn decode_bic(&self, frame: &BitVector, idx: usize) -> BicDecode {
        let f = &self.fields[idx];
        match &f.kind {
            FieldKind::Bic(c) => c.decode_at(frame, f.offset),
            _ => panic!("field {:?} is not a BIC field", f.name),
        }
    }

    pub fn overflow_bic(&self, frame: &BitVector, idx: usize, k: usize) -> OverflowVerdict {
        let f = &self.fields[idx];
        match &f.kind {
            FieldKind::Bic(c) => c.overflow_detect_at(frame, f.offset, k),
            _ => panic!("field {:?} is not a BIC field", f.name),
        }
    }

    pub fn decode_bcc(&self, frame: &BitVector, idx: usize) -> Result<Vec<u64>, DecodeFailure> {
        let f = &self.fields[idx];
        match &f.kind {
            FieldKind::Bcc(c) => c.decode_at(frame, f.offset),
            _ => panic!("field {:?} is not a BCC field", f.name),
        }
    }

    pub fn raw(&self, frame: &BitVector, idx: usize) -> BitVector {
        let f = &self.fields[idx];
        frame.slice(f.offset, f.kind.width())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{RngCore, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    struct Constant(u64);
    impl RngCore for Constant {
        fn next_u32(&mut self) -> u32 {
            self.0 as u32
        }
        fn next_u64(&mut self) -> u64 {
            self.0
        }
        fn fill_bytes(&mut self, dst: &mut [u8]) {
            dst.fill(self.0 as u8)
        }
    }

    fn code() -> BicCode {
        BicCode::new(BccCode::new(256, 16).unwrap(), 256, 4.0)
    }

    #[test]
    fn block_counts() {
        assert_eq!(block_count(256, 4.0), 32);
        assert_eq!(block_count(1, 4.0), 4);
        assert_eq!(block_count(100, 4.0), 27);
        assert_eq!(code().total_len(), 32 * 16 * 9);
    }

    #[test]
    fn forced_masks() {
        let c = code();
        let all = c.encode(9, &mut Constant(u64::MAX)).unwrap();
        let block = c.base().encode(9).unwrap();
        for i in 0..c.num_blocks() {
            assert_eq!(all.word.slice(i * c.block_len(), c.block_len()), block);
        }
        assert!(all.mask.iter().all(|&b| b));
        let none = c.encode(9, &mut Constant(0)).unwrap();
        assert!(none.word.is_zero());
        assert_eq!(c.decode(&none.word).unwrap(), Vec::<u64>::new());
    }

    #[test]
    fn many_senders_few_values() {
        let c = code();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut frame = BitVector::zeros(c.total_len());
        for s in 0..200u64 {
            c.xor_encode_into([2, 5, 9][(s % 3) as usize], &mut rng, &mut frame, 0)
                .unwrap();
        }
        assert_eq!(c.decode(&frame).unwrap(), vec![2, 5, 9]);
    }

    #[test]
    fn overflow_within_bound_is_exact() {
        let c = code();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for trial in 0..100 {
            let mut frame = BitVector::zeros(c.total_len());
            let vals: Vec<u64> = (0..8).map(|i| (trial * 13 + i * 29) % 256).collect();
            for &v in &vals {
                for _ in 0..3 {
                    c.xor_encode_into(v, &mut rng, &mut frame, 0).unwrap();
                }
            }
            let verdict = c.overflow_detect(&frame, 8).unwrap();
            assert!(!verdict.detected);
            assert!(verdict.values.iter().all(|v| vals.contains(v)));
        }
        let verdict = c.overflow_detect(&BitVector::zeros(c.total_len()), 8).unwrap();
        assert_eq!(verdict, OverflowVerdict { detected: false, values: vec![] });
    }

    #[test]
    fn layout_fields_do_not_interfere() {
        let r = BicCode::new(BccCode::new(32, 4).unwrap(), 64, 4.0);
        let z = BicCode::new(BccCode::new(1 << 12, 4).unwrap(), 64, 4.0);
        let layout = MessageLayout::new()
            .with("r", FieldKind::Bic(r))
            .with("z", FieldKind::Bic(z))
            .with("flag", FieldKind::Raw(3));
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut f = layout.empty_frame();
        layout.put_bic(&mut f, 0, 7, &mut rng).unwrap();
        layout.put_bic(&mut f, 1, 4000, &mut rng).unwrap();
        layout.put_raw(&mut f, 2, &BitVector::from_bits([true, false, true])).unwrap();
        let mut g = layout.empty_frame();
        layout.put_bic(&mut g, 0, 3, &mut rng).unwrap();
        f ^= &g;
        assert_eq!(layout.decode_bic(&f, 1).values, vec![4000]);
        assert!(layout.decode_bic(&f, 0).values.iter().all(|v| [3, 7].contains(v)));
        assert_eq!(layout.raw(&f, 2).count_ones(), 2);
        assert!(layout.check_fits(layout.width() - 1).is_err());
        assert_eq!(layout.index_of("z").unwrap(), 1);
    }

    proptest! {
        #[test]
        fn pack_xor_unpack_is_fieldwise(a in any::<[u64; 3]>(), b in any::<[u64; 3]>()) {
            let layout = MessageLayout::new()
                .with("x", FieldKind::Raw(40))
                .with("y", FieldKind::Raw(64))
                .with("z", FieldKind::Raw(7));
            let pack = |v: [u64; 3]| {
                let mut f = layout.empty_frame();
                for (i, w) in [40usize, 64, 7].into_iter().enumerate() {
                    let mut bits = BitVector::zeros(w);
                    bits.xor_uint(0, w, v[i]);
                    layout.put_raw(&mut f, i, &bits).unwrap();
                }
                f
            };
            let fa = pack(a);
            let fb = pack(b);
            let ua = layout.unpack(&fa).unwrap();
            let ub = layout.unpack(&fb).unwrap();
            let uab = layout.unpack(&(&fa ^ &fb)).unwrap();
            for i in 0..3 {
                prop_assert_eq!(uab[i].clone(), &ua[i] ^ &ub[i]);
            }
        }
    }
}
